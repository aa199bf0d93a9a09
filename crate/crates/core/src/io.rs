//! Text formats for events and ground-truth flow, plus PGM and CSV writers.
//!
//! Events are one per line, `t x y p`, with `#` comments. Polarity `0` is
//! read as negative. Ground-truth flow files start with `W H` followed by
//! `W * H` lines of `u v valid` in row-major order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::event::{CameraGeometry, Event, EventWindow, Polarity};
use crate::metrics::GroundTruthFlow;

/// A parsed event file.
#[derive(Debug, Clone)]
pub struct LoadedEvents {
    pub window: EventWindow,
    /// Lines dropped because the pixel lies outside the sensor.
    pub rejected: usize,
}

pub fn parse_events(text: &str, geometry: &CameraGeometry) -> Result<LoadedEvents> {
    let mut events = Vec::new();
    let mut rejected = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", fields.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("invalid {what} '{s}'")))
        };
        let t = num(fields[0], "timestamp")?;
        if t < 0.0 {
            return Err(err(format!("negative timestamp {t}")));
        }
        let x = num(fields[1], "x")?;
        let y = num(fields[2], "y")?;
        let polarity = fields[3]
            .parse::<i64>()
            .ok()
            .and_then(Polarity::from_code)
            .ok_or_else(|| err(format!("invalid polarity '{}'", fields[3])))?;
        if !geometry.contains(x, y) {
            rejected += 1;
            continue;
        }
        events.push(Event::new(t, x, y, polarity));
    }
    Ok(LoadedEvents {
        window: EventWindow::new(events)?,
        rejected,
    })
}

pub fn load_events(path: &Path, geometry: &CameraGeometry) -> Result<LoadedEvents> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_events(&text, geometry)
}

/// Formats events with round-trip precision.
pub fn format_events(events: &[Event]) -> String {
    let mut out = String::with_capacity(events.len() * 48);
    out.push_str("# t x y p\n");
    for e in events {
        let _ = writeln!(out, "{} {} {} {}", e.t, e.x, e.y, e.polarity.code());
    }
    out
}

pub fn write_events(path: &Path, events: &[Event]) -> Result<()> {
    fs::write(path, format_events(events)).map_err(|e| Error::io(path, e))
}

pub fn parse_ground_truth(text: &str) -> Result<GroundTruthFlow> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing 'W H' header".into(),
    })?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Parse {
            line: hline,
            message: format!("invalid header '{header}'"),
        })?;
    let [w, h] = dims[..] else {
        return Err(Error::Parse {
            line: hline,
            message: "header must be 'W H'".into(),
        });
    };
    let mut vectors = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for (n, line) in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        let parsed = (f.len() == 3)
            .then(|| Some((f[0].parse::<f64>().ok()?, f[1].parse::<f64>().ok()?, f[2].parse::<u8>().ok()?)))
            .flatten()
            .filter(|p| p.2 <= 1);
        let Some((u, v, ok)) = parsed else {
            return Err(Error::Parse {
                line: n,
                message: format!("expected 'u v valid', found '{line}'"),
            });
        };
        vectors.push([u, v]);
        valid.push(ok == 1);
    }
    GroundTruthFlow::new(w, h, vectors, valid)
}

pub fn load_ground_truth(path: &Path) -> Result<GroundTruthFlow> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ground_truth(&text)
}

pub fn format_ground_truth(gt: &GroundTruthFlow) -> String {
    let mut out = String::with_capacity(gt.vectors.len() * 40);
    let _ = writeln!(out, "{} {}", gt.width, gt.height);
    for (v, ok) in gt.vectors.iter().zip(&gt.valid) {
        let _ = writeln!(out, "{} {} {}", v[0], v[1], u8::from(*ok));
    }
    out
}

pub fn write_ground_truth(path: &Path, gt: &GroundTruthFlow) -> Result<()> {
    fs::write(path, format_ground_truth(gt)).map_err(|e| Error::io(path, e))
}

/// Binary 8-bit PGM with a min-max stretch; a constant image maps to 0.
pub fn encode_pgm(width: usize, height: usize, values: &[f64]) -> Result<Vec<u8>> {
    if values.len() != width * height {
        return Err(Error::DimensionMismatch {
            expected: format!("{} values", width * height),
            actual: format!("{} values", values.len()),
        });
    }
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| {
        if span > 0.0 && v.is_finite() {
            ((v - lo) / span * 255.0).round() as u8
        } else {
            0
        }
    }));
    Ok(out)
}

pub fn write_pgm(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    let bytes = encode_pgm(width, height, values)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a header line followed by pre-formatted rows.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut out = String::with_capacity(header.len() + rows.iter().map(|r| r.len() + 1).sum::<usize>() + 1);
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(r);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
