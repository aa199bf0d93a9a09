//! Image of warped events and the focus objectives evaluated on it.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::event::{CameraGeometry, EventWindow};
use crate::warp::{warp_event, WarpModel};

/// Half-width of the splat stencil (7x7 pixels, about 3 sigma).
pub const SPLAT_RADIUS: usize = 3;
const STENCIL: usize = 2 * SPLAT_RADIUS + 1;

/// Separable Gaussian (sigma = 1 px) sampled at the pixel centers around a
/// continuous position. Each axis is normalized over the stencil so an
/// in-domain event deposits exactly unit mass.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Splat {
    x0: i64,
    y0: i64,
    wx: [f64; STENCIL],
    wy: [f64; STENCIL],
}

impl Splat {
    #[inline]
    pub(crate) fn at(x: f64, y: f64) -> Option<Self> {
        if !x.is_finite() || !y.is_finite() {
            return None;
        }
        let (rx, ry) = (x.round(), y.round());
        // Far outside every grid we build; also keeps the casts in range.
        if rx.abs() > 1e9 || ry.abs() > 1e9 {
            return None;
        }
        Some(Self {
            x0: rx as i64 - SPLAT_RADIUS as i64,
            y0: ry as i64 - SPLAT_RADIUS as i64,
            wx: axis_weights(rx - x),
            wy: axis_weights(ry - y),
        })
    }

    /// Adds `mass` times the stencil into a row-major grid, dropping cells
    /// outside it. Returns the mass that landed inside.
    #[inline]
    pub(crate) fn deposit(&self, grid: &mut [f64], width: usize, height: usize, mass: f64) -> f64 {
        let (w, h) = (width as i64, height as i64);
        if self.x0 >= w || self.y0 >= h || self.x0 + (STENCIL as i64) <= 0 || self.y0 + (STENCIL as i64) <= 0 {
            return 0.0;
        }
        let kx_lo = (-self.x0).max(0) as usize;
        let kx_hi = ((w - self.x0).min(STENCIL as i64)) as usize;
        let ky_lo = (-self.y0).max(0) as usize;
        let ky_hi = ((h - self.y0).min(STENCIL as i64)) as usize;
        let wx_sum: f64 = self.wx[kx_lo..kx_hi].iter().sum();
        let mut retained = 0.0;
        for ky in ky_lo..ky_hi {
            let row = (self.y0 + ky as i64) as usize * width;
            let m = mass * self.wy[ky];
            retained += m * wx_sum;
            let base = row + (self.x0 + kx_lo as i64) as usize;
            for (cell, w) in grid[base..base + (kx_hi - kx_lo)]
                .iter_mut()
                .zip(&self.wx[kx_lo..kx_hi])
            {
                *cell += m * w;
            }
        }
        retained
    }
}

/// Weights for stencil offsets -3..=3 around the rounded position, where
/// `offset = round(x) - x` lies in [-0.5, 0.5].
#[inline]
fn axis_weights(offset: f64) -> [f64; STENCIL] {
    // exp(-(j + o)^2 / 2) = exp(-o^2 / 2) exp(-j^2 / 2) exp(-o)^j, and the
    // first factor cancels in the normalization.
    const BASE: [f64; STENCIL] = [
        0.011_108_996_538_242_306,
        0.135_335_283_236_612_7,
        0.606_530_659_712_633_4,
        1.0,
        0.606_530_659_712_633_4,
        0.135_335_283_236_612_7,
        0.011_108_996_538_242_306,
    ];
    let r = (-offset).exp();
    let ri = 1.0 / r;
    let mut w = BASE;
    let (mut up, mut down) = (1.0, 1.0);
    for j in 1..=SPLAT_RADIUS {
        up *= r;
        down *= ri;
        w[SPLAT_RADIUS + j] *= up;
        w[SPLAT_RADIUS - j] *= down;
    }
    let sum: f64 = w.iter().sum();
    for wk in &mut w {
        *wk /= sum;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    Variance,
    GradientMagnitude,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Variance => "variance",
            Objective::GradientMagnitude => "gradient",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "variance" | "var" => Ok(Objective::Variance),
            "gradient" | "gradient_magnitude" | "grad" => Ok(Objective::GradientMagnitude),
            other => Err(Error::invalid(format!("unknown objective '{other}'"))),
        }
    }
}

/// Focus objective plus whether events are weighted by polarity (`b_k = p_k`)
/// or counted (`b_k = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ObjectiveKind {
    pub objective: Objective,
    pub use_polarity: bool,
}

impl ObjectiveKind {
    pub fn variance() -> Self {
        Self {
            objective: Objective::Variance,
            use_polarity: false,
        }
    }

    pub fn gradient_magnitude() -> Self {
        Self {
            objective: Objective::GradientMagnitude,
            use_polarity: false,
        }
    }
}

impl Default for ObjectiveKind {
    fn default() -> Self {
        Self::variance()
    }
}

/// Dense image of warped-event mass, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Iwe {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    /// Splat mass that landed inside the image.
    pub total_mass: f64,
    /// Set when every event was warped out of the image.
    pub empty: bool,
}

impl Iwe {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
            total_mass: 0.0,
            empty: true,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn splat(&mut self, x: f64, y: f64, mass: f64) {
        if let Some(s) = Splat::at(x, y) {
            let kept = s.deposit(&mut self.values, self.width, self.height, mass);
            if kept != 0.0 {
                self.empty = false;
            }
            self.total_mass += kept;
        }
    }

    fn merge(mut self, other: Iwe) -> Iwe {
        for (a, b) in self.values.iter_mut().zip(other.values) {
            *a += b;
        }
        self.total_mass += other.total_mass;
        self.empty &= other.empty;
        self
    }
}

/// Warps every event to the reference time and splats it onto the grid.
pub fn build_iwe(
    window: &EventWindow,
    model: &WarpModel,
    geometry: &CameraGeometry,
    kind: ObjectiveKind,
) -> Result<Iwe> {
    let mut iwe = Iwe::zeros(geometry.width, geometry.height);
    accumulate(&mut iwe, window, 0, window.len(), model, geometry, kind)?;
    Ok(iwe)
}

/// [`build_iwe`] over chunks of events on the rayon pool. Chunk grids are
/// merged in chunk order, so the result is reproducible for a fixed chunk
/// size but may differ from the serial build by float reassociation.
pub fn build_iwe_parallel(
    window: &EventWindow,
    model: &WarpModel,
    geometry: &CameraGeometry,
    kind: ObjectiveKind,
    chunk: usize,
) -> Result<Iwe> {
    let chunk = chunk.max(1);
    let starts: Vec<usize> = (0..window.len()).step_by(chunk).collect();
    let parts = starts
        .par_iter()
        .map(|&s| {
            let mut iwe = Iwe::zeros(geometry.width, geometry.height);
            accumulate(&mut iwe, window, s, (s + chunk).min(window.len()), model, geometry, kind)?;
            Ok(iwe)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts
        .into_iter()
        .fold(Iwe::zeros(geometry.width, geometry.height), Iwe::merge))
}

fn accumulate(
    iwe: &mut Iwe,
    window: &EventWindow,
    start: usize,
    end: usize,
    model: &WarpModel,
    geometry: &CameraGeometry,
    kind: ObjectiveKind,
) -> Result<()> {
    let identity = model.is_identity();
    for e in &window.events()[start..end] {
        let mass = if kind.use_polarity { e.polarity.sign() } else { 1.0 };
        let [x, y] = if identity {
            e.position()
        } else {
            warp_event(model, geometry, e.position(), window.normalized_unchecked(e.t))?
        };
        iwe.splat(x, y, mass);
    }
    Ok(())
}

/// Focus score of an IWE (larger is sharper).
pub fn objective_value(iwe: &Iwe, objective: Objective) -> f64 {
    match objective {
        Objective::Variance => variance(&iwe.values),
        Objective::GradientMagnitude => gradient_energy(iwe),
    }
}

/// Population variance over all pixels, zeros included.
pub fn variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Mean squared gradient norm; central differences inside, one-sided at the
/// borders.
fn gradient_energy(iwe: &Iwe) -> f64 {
    let (w, h) = (iwe.width, iwe.height);
    let v = &iwe.values;
    let d = |a: f64, b: f64, span: f64| (a - b) / span;
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            let gx = if w < 2 {
                0.0
            } else if x == 0 {
                d(v[y * w + 1], v[y * w], 1.0)
            } else if x == w - 1 {
                d(v[y * w + x], v[y * w + x - 1], 1.0)
            } else {
                d(v[y * w + x + 1], v[y * w + x - 1], 2.0)
            };
            let gy = if h < 2 {
                0.0
            } else if y == 0 {
                d(v[w + x], v[x], 1.0)
            } else if y == h - 1 {
                d(v[y * w + x], v[(y - 1) * w + x], 1.0)
            } else {
                d(v[(y + 1) * w + x], v[(y - 1) * w + x], 2.0)
            };
            sum += gx * gx + gy * gy;
        }
    }
    sum / (w * h) as f64
}
