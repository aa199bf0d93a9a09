//! Flow accuracy, sharpness, angular-velocity and time-to-contact metrics.

use crate::error::{Error, Result};
use crate::event::{CameraGeometry, EventWindow};
use crate::iwe::{build_iwe, variance, ObjectiveKind};
use crate::warp::{FlowField, WarpModel};

/// Reference displacement over a window with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthFlow {
    pub width: usize,
    pub height: usize,
    pub vectors: Vec<[f64; 2]>,
    pub valid: Vec<bool>,
}

impl GroundTruthFlow {
    pub fn new(width: usize, height: usize, vectors: Vec<[f64; 2]>, valid: Vec<bool>) -> Result<Self> {
        let n = width * height;
        if vectors.len() != n || valid.len() != n {
            return Err(Error::DimensionMismatch {
                expected: format!("{n} pixels"),
                actual: format!("{} vectors, {} mask entries", vectors.len(), valid.len()),
            });
        }
        Ok(Self {
            width,
            height,
            vectors,
            valid,
        })
    }

    /// Every pixel valid.
    pub fn from_field(field: FlowField) -> Self {
        let valid = vec![true; field.vectors.len()];
        Self {
            width: field.width,
            height: field.height,
            vectors: field.vectors,
            valid,
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Average endpoint error and the N-pixel error percentages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndpointErrors {
    pub aee: f64,
    pub npe_3: f64,
    pub npe_10: f64,
    pub npe_20: f64,
}

/// Per-window metric row. Optional entries are left empty when unavailable.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsReport {
    pub endpoint: Option<EndpointErrors>,
    pub fwl: Option<f64>,
    pub rms_angular: Option<f64>,
    pub ttc: Option<f64>,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "aee,3pe,10pe,20pe,fwl,rms,ttc";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        let e = self.endpoint;
        [
            opt(e.map(|e| e.aee)),
            opt(e.map(|e| e.npe_3)),
            opt(e.map(|e| e.npe_10)),
            opt(e.map(|e| e.npe_20)),
            opt(self.fwl),
            opt(self.rms_angular),
            opt(self.ttc),
        ]
        .join(",")
    }
}

/// Endpoint error of a predicted per-window displacement field.
pub fn aee_npe(pred: &FlowField, gt: &GroundTruthFlow) -> Result<EndpointErrors> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", gt.width, gt.height),
            actual: format!("{}x{}", pred.width, pred.height),
        });
    }
    let mut n = 0usize;
    let mut sum = 0.0;
    let mut over = [0usize; 3];
    for ((p, g), &ok) in pred.vectors.iter().zip(&gt.vectors).zip(&gt.valid) {
        if !ok {
            continue;
        }
        let err = (p[0] - g[0]).hypot(p[1] - g[1]);
        n += 1;
        sum += err;
        for (count, limit) in over.iter_mut().zip([3.0, 10.0, 20.0]) {
            if err > limit {
                *count += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyValidMask);
    }
    let pct = |c: usize| 100.0 * c as f64 / n as f64;
    Ok(EndpointErrors {
        aee: sum / n as f64,
        npe_3: pct(over[0]),
        npe_10: pct(over[1]),
        npe_20: pct(over[2]),
    })
}

/// Variance of the IWE under `model` relative to the identity-warp IWE.
pub fn fwl(window: &EventWindow, model: &WarpModel, geometry: &CameraGeometry) -> Result<f64> {
    let kind = ObjectiveKind::variance();
    let base = variance(&build_iwe(window, &WarpModel::identity(model.kind()), geometry, kind)?.values);
    if base == 0.0 {
        return Err(Error::DegenerateWindow);
    }
    let warped = if model.is_identity() {
        base
    } else {
        variance(&build_iwe(window, model, geometry, kind)?.values)
    };
    Ok(warped / base)
}

/// RMS angular-velocity error and the number of estimates outside the
/// reference time span (which are skipped).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularRms {
    pub rms: f64,
    pub used: usize,
    pub skipped: usize,
}

/// Compares estimates at window midpoints against a linearly interpolated
/// reference signal.
pub fn rms_angular_velocity(
    estimates: &[(f64, [f64; 3])],
    reference: &[(f64, [f64; 3])],
) -> Result<AngularRms> {
    if reference.is_empty() {
        return Err(Error::invalid("angular-velocity reference is empty"));
    }
    if reference.windows(2).any(|w| w[0].0 > w[1].0) {
        return Err(Error::invalid("reference timestamps are not sorted"));
    }
    let (t0, t1) = (reference[0].0, reference[reference.len() - 1].0);
    let mut sum = 0.0;
    let mut used = 0;
    let mut skipped = 0;
    for &(t, w) in estimates {
        if !(t >= t0 && t <= t1) {
            skipped += 1;
            continue;
        }
        let j = reference.partition_point(|r| r.0 <= t).clamp(1, reference.len().max(2) - 1);
        let truth = if reference.len() == 1 {
            reference[0].1
        } else {
            let (a, b) = (reference[j - 1], reference[j]);
            let u = if b.0 > a.0 { (t - a.0) / (b.0 - a.0) } else { 0.0 };
            [0, 1, 2].map(|k| a.1[k] + u * (b.1[k] - a.1[k]))
        };
        sum += (0..3).map(|k| (w[k] - truth[k]).powi(2)).sum::<f64>();
        used += 1;
    }
    let rms = if used == 0 { f64::NAN } else { (sum / used as f64).sqrt() };
    Ok(AngularRms { rms, used, skipped })
}

/// Time to contact in seconds from the per-window zoom rate.
pub fn time_to_contact(h_z: f64, window_duration: f64) -> Result<f64> {
    if !(h_z > 0.0) {
        return Err(Error::UndefinedTtc(h_z));
    }
    Ok(window_duration / h_z)
}
