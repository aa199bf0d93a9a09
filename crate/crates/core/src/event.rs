//! Events, event windows and the pinhole camera geometry they live in.

use crate::error::{Error, Result};

/// Sign of a brightness change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::Positive => 1.0,
            Polarity::Negative => -1.0,
        }
    }

    /// Text-format polarity: `1` is positive, `-1` and `0` are negative.
    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            1 => Some(Polarity::Positive),
            0 | -1 => Some(Polarity::Negative),
            _ => None,
        }
    }

    pub fn code(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }
}

/// One brightness-change measurement. Pixel centers sit at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(t: f64, x: f64, y: f64, polarity: Polarity) -> Self {
        Self { t, x, y, polarity }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Pinhole intrinsics plus sensor size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraGeometry {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraGeometry {
    pub fn new(width: usize, height: usize, fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("sensor width and height must be at least 1"));
        }
        if !(fx > 0.0 && fy > 0.0) || !fx.is_finite() || !fy.is_finite() {
            return Err(Error::invalid("focal lengths must be positive and finite"));
        }
        if !cx.is_finite() || !cy.is_finite() {
            return Err(Error::invalid("principal point must be finite"));
        }
        Ok(Self {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
        })
    }

    /// Square pixels with the principal point at the image center.
    pub fn centered(width: usize, height: usize, focal: f64) -> Result<Self> {
        Self::new(
            width,
            height,
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
        )
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    /// Pixel bounds are half-open on integer pixel indices; continuous
    /// positions belong to the pixel whose center is nearest.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (px, py) = (x.round(), y.round());
        px >= 0.0 && py >= 0.0 && px < self.width as f64 && py < self.height as f64
    }

    pub fn to_centered(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0] - self.cx, p[1] - self.cy]
    }

    pub fn from_centered(&self, c: [f64; 2]) -> [f64; 2] {
        [c[0] + self.cx, c[1] + self.cy]
    }

    /// Calibrated image-plane coordinates (the homogeneous third entry is 1).
    pub fn to_calibrated(&self, p: [f64; 2]) -> [f64; 2] {
        [(p[0] - self.cx) / self.fx, (p[1] - self.cy) / self.fy]
    }

    pub fn from_calibrated(&self, c: [f64; 2]) -> [f64; 2] {
        [c[0] * self.fx + self.cx, c[1] * self.fy + self.cy]
    }
}

/// A time-sorted, non-empty batch of events: the unit of estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct EventWindow {
    events: Vec<Event>,
    t_first: f64,
    t_last: f64,
    resorted: bool,
}

impl EventWindow {
    /// Builds a window, sorting by timestamp if needed (stable, so ties keep
    /// their input order).
    pub fn new(mut events: Vec<Event>) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::NoEvents);
        }
        if let Some(bad) = events.iter().find(|e| !e.t.is_finite()) {
            return Err(Error::invalid(format!("non-finite timestamp {}", bad.t)));
        }
        let sorted = events.windows(2).all(|w| w[0].t <= w[1].t);
        if !sorted {
            events.sort_by(|a, b| a.t.total_cmp(&b.t));
        }
        let t_first = events[0].t;
        let t_last = events[events.len() - 1].t;
        Ok(Self {
            events,
            t_first,
            t_last,
            resorted: !sorted,
        })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn t_first(&self) -> f64 {
        self.t_first
    }

    pub fn t_last(&self) -> f64 {
        self.t_last
    }

    pub fn duration(&self) -> f64 {
        self.t_last - self.t_first
    }

    pub fn t_mid(&self) -> f64 {
        0.5 * (self.t_first + self.t_last)
    }

    /// True when the input had to be sorted.
    pub fn was_resorted(&self) -> bool {
        self.resorted
    }

    /// Maps `t` into [0, 1] over the window span; a zero-length window maps
    /// everything to 0.
    pub fn normalize_time(&self, t: f64) -> Result<f64> {
        if !(t >= self.t_first && t <= self.t_last) {
            return Err(Error::TimeOutOfRange {
                t,
                first: self.t_first,
                last: self.t_last,
            });
        }
        Ok(self.normalized_unchecked(t))
    }

    #[inline]
    pub(crate) fn normalized_unchecked(&self, t: f64) -> f64 {
        let span = self.t_last - self.t_first;
        if span > 0.0 {
            (t - self.t_first) / span
        } else {
            0.0
        }
    }

    /// Normalized timestamps of all events, in window order.
    pub fn normalized_times(&self) -> Vec<f64> {
        self.events
            .iter()
            .map(|e| self.normalized_unchecked(e.t))
            .collect()
    }

    /// Splits into consecutive windows of `count` events; a short tail is kept.
    pub fn slice_by_count(&self, count: usize) -> Result<Vec<EventWindow>> {
        if count == 0 {
            return Err(Error::invalid("window event count must be positive"));
        }
        self.events
            .chunks(count)
            .map(|c| EventWindow::new(c.to_vec()))
            .collect()
    }

    /// Splits into consecutive windows of fixed duration starting at `t_first`.
    /// Empty intervals produce no window.
    pub fn slice_by_duration(&self, duration: f64) -> Result<Vec<EventWindow>> {
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::invalid("window duration must be positive"));
        }
        let mut out = Vec::new();
        let mut start = 0;
        while start < self.events.len() {
            let bin = ((self.events[start].t - self.t_first) / duration).floor();
            let end_t = self.t_first + (bin + 1.0) * duration;
            let end = start
                + self.events[start..]
                    .iter()
                    .position(|e| e.t >= end_t)
                    .unwrap_or(self.events.len() - start);
            out.push(EventWindow::new(self.events[start..end].to_vec())?);
            start = end;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(ts: &[f64]) -> EventWindow {
        EventWindow::new(
            ts.iter()
                .map(|&t| Event::new(t, 1.0, 1.0, Polarity::Positive))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn normalize_time_examples() {
        let w = window(&[2.0, 3.0, 4.0]);
        assert_eq!(w.normalize_time(2.0).unwrap(), 0.0);
        assert_eq!(w.normalize_time(3.0).unwrap(), 0.5);
        let degenerate = window(&[2.0]);
        assert_eq!(degenerate.normalize_time(2.0).unwrap(), 0.0);
    }

    #[test]
    fn normalize_time_rejects_out_of_window() {
        let w = window(&[2.0, 4.0]);
        assert!(matches!(
            w.normalize_time(4.5),
            Err(Error::TimeOutOfRange { .. })
        ));
        assert!(w.normalize_time(1.99).is_err());
        assert!(w.normalize_time(f64::NAN).is_err());
    }

    #[test]
    fn unsorted_input_is_sorted_and_flagged() {
        let w = window(&[0.3, 0.1, 0.2]);
        assert!(w.was_resorted());
        assert_eq!(w.t_first(), 0.1);
        assert_eq!(w.t_last(), 0.3);
        assert!(!window(&[0.1, 0.1, 0.2]).was_resorted());
    }

    #[test]
    fn empty_window_rejected() {
        assert!(matches!(EventWindow::new(vec![]), Err(Error::NoEvents)));
    }

    #[test]
    fn geometry_validation() {
        assert!(CameraGeometry::new(0, 10, 1.0, 1.0, 0.0, 0.0).is_err());
        assert!(CameraGeometry::new(10, 10, 0.0, 1.0, 0.0, 0.0).is_err());
        let g = CameraGeometry::centered(640, 480, 500.0).unwrap();
        assert_eq!((g.cx, g.cy), (319.5, 239.5));
    }

    #[test]
    fn bounds_are_half_open() {
        let g = CameraGeometry::centered(640, 480, 500.0).unwrap();
        assert!(g.contains(639.0, 479.0));
        assert!(g.contains(0.0, 0.0));
        assert!(!g.contains(640.0, 10.0));
        assert!(!g.contains(10.0, -1.0));
    }

    #[test]
    fn slicing_by_count_and_duration() {
        let w = window(&[0.0, 0.1, 0.2, 0.3, 0.4, 0.55]);
        let by_count = w.slice_by_count(4).unwrap();
        assert_eq!(
            by_count.iter().map(EventWindow::len).collect::<Vec<_>>(),
            vec![4, 2]
        );
        let by_time = w.slice_by_duration(0.25).unwrap();
        assert_eq!(
            by_time.iter().map(EventWindow::len).collect::<Vec<_>>(),
            vec![3, 2, 1]
        );
        assert!(w.slice_by_count(0).is_err());
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn coordinate_round_trips(x in 0.0..640.0f64, y in 0.0..480.0f64,
                                  fx in 50.0..900.0f64, fy in 50.0..900.0f64) {
            let g = CameraGeometry::new(640, 480, fx, fy, 320.3, 241.7).unwrap();
            let c = g.from_centered(g.to_centered([x, y]));
            let k = g.from_calibrated(g.to_calibrated([x, y]));
            prop_assert!((c[0] - x).abs() < 1e-12 && (c[1] - y).abs() < 1e-12);
            prop_assert!((k[0] - x).abs() < 1e-12 && (k[1] - y).abs() < 1e-12);
        }

        #[test]
        fn normalize_time_is_monotone(mut ts in proptest::collection::vec(0.0..10.0f64, 2..40)) {
            ts.sort_by(f64::total_cmp);
            let w = window(&ts);
            let n: Vec<f64> = ts.iter().map(|&t| w.normalize_time(t).unwrap()).collect();
            prop_assert!(n.windows(2).all(|p| p[0] <= p[1]));
            prop_assert!(n.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
