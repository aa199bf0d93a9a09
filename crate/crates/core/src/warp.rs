//! Motion parameterizations and the point trajectories they induce.
//!
//! Every family is expressed as a time-dependent 3x3 trajectory matrix
//! `H(t)` acting on homogeneous points of a family-specific frame, so that a
//! point observed at the reference time `t = 0` moves along
//! `x(t) ~ H(t) x(0)`. Warping an event back to the reference time applies
//! `H(t)^-1`. Time is normalized to the window, so parameters are expressed
//! per window.
//!
//! | family        | theta                                   | frame      |
//! |---------------|-----------------------------------------|------------|
//! | translation   | `(v_x, v_y)` px/window                  | pixels     |
//! | zoom          | `h_z`                                   | centered   |
//! | rotation      | `(w_x, w_y, w_z)` rad/window            | calibrated |
//! | similarity    | `(v_x, v_y, w_z, s)`                    | centered   |
//! | affine        | `(m11, m12, m21, m22, b_x, b_y)`        | centered   |
//! | homography    | `(m11, m12, m13, m21, m22, m23, m31, m32)` | calibrated |
//!
//! The affine family uses `A(t) = I + t M`, the homography `H(t) = I + t M`
//! with `m33 = 0`, and the similarity uses the scale law
//! `beta(t; s) = 1 / (1 - t s)`, which reduces to the zoom warp when
//! `v = 0` and `w_z = 0`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::event::CameraGeometry;
use crate::so3;

/// Magnitude below which a scale factor, determinant or projective depth is
/// treated as singular.
pub const SINGULAR_EPS: f64 = 1e-12;

/// Normalized-time step of the central difference used for flow velocities.
pub const FLOW_TIME_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WarpKind {
    Translation2D,
    Zoom1DOF,
    Rotation3DOF,
    Similarity4DOF,
    Affine6DOF,
    Homography8DOF,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Frame {
    Centered,
    Calibrated,
}

impl WarpKind {
    pub const ALL: [WarpKind; 6] = [
        WarpKind::Translation2D,
        WarpKind::Zoom1DOF,
        WarpKind::Rotation3DOF,
        WarpKind::Similarity4DOF,
        WarpKind::Affine6DOF,
        WarpKind::Homography8DOF,
    ];

    pub fn dof(self) -> usize {
        match self {
            WarpKind::Translation2D => 2,
            WarpKind::Zoom1DOF => 1,
            WarpKind::Rotation3DOF => 3,
            WarpKind::Similarity4DOF => 4,
            WarpKind::Affine6DOF => 6,
            WarpKind::Homography8DOF => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WarpKind::Translation2D => "translation",
            WarpKind::Zoom1DOF => "zoom",
            WarpKind::Rotation3DOF => "rotation",
            WarpKind::Similarity4DOF => "similarity",
            WarpKind::Affine6DOF => "affine",
            WarpKind::Homography8DOF => "homography",
        }
    }

    fn frame(self) -> Frame {
        match self {
            WarpKind::Rotation3DOF | WarpKind::Homography8DOF => Frame::Calibrated,
            _ => Frame::Centered,
        }
    }
}

impl fmt::Display for WarpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WarpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WarpKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown warp model '{s}'")))
    }
}

/// A motion family together with its parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpModel {
    kind: WarpKind,
    theta: Vec<f64>,
}

impl WarpModel {
    pub fn new(kind: WarpKind, theta: &[f64]) -> Result<Self> {
        if theta.len() != kind.dof() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} parameters for {kind}", kind.dof()),
                actual: theta.len().to_string(),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("warp parameters must be finite"));
        }
        match kind {
            WarpKind::Zoom1DOF if theta[0] == 1.0 => {
                return Err(Error::singular("h_z = 1 collapses every trajectory"))
            }
            WarpKind::Similarity4DOF if theta[3] == 1.0 => {
                return Err(Error::singular("s = 1 collapses every trajectory"))
            }
            _ => {}
        }
        Ok(Self {
            kind,
            theta: theta.to_vec(),
        })
    }

    pub fn identity(kind: WarpKind) -> Self {
        Self {
            kind,
            theta: vec![0.0; kind.dof()],
        }
    }

    pub fn translation(vx: f64, vy: f64) -> Result<Self> {
        Self::new(WarpKind::Translation2D, &[vx, vy])
    }

    pub fn zoom(h_z: f64) -> Result<Self> {
        Self::new(WarpKind::Zoom1DOF, &[h_z])
    }

    pub fn rotation(omega: [f64; 3]) -> Result<Self> {
        Self::new(WarpKind::Rotation3DOF, &omega)
    }

    pub fn similarity(vx: f64, vy: f64, omega_z: f64, s: f64) -> Result<Self> {
        Self::new(WarpKind::Similarity4DOF, &[vx, vy, omega_z, s])
    }

    pub fn affine(m: [f64; 4], b: [f64; 2]) -> Result<Self> {
        Self::new(WarpKind::Affine6DOF, &[m[0], m[1], m[2], m[3], b[0], b[1]])
    }

    pub fn homography(m: [f64; 8]) -> Result<Self> {
        Self::new(WarpKind::Homography8DOF, &m)
    }

    pub fn kind(&self) -> WarpKind {
        self.kind
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn is_identity(&self) -> bool {
        self.theta.iter().all(|&v| v == 0.0)
    }

    pub(crate) fn omega(&self) -> Vector3<f64> {
        Vector3::new(self.theta[0], self.theta[1], self.theta[2])
    }

    /// `M` such that the affine part is `A(t) = I + t M`.
    pub(crate) fn affine_rate(&self) -> Matrix2<f64> {
        let p = &self.theta;
        Matrix2::new(p[0], p[1], p[2], p[3])
    }

    /// `M` such that `H(t) = I + t M`.
    pub(crate) fn homography_rate(&self) -> Matrix3<f64> {
        let p = &self.theta;
        Matrix3::new(p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], 0.0)
    }

    /// Trajectory matrix `H(t)` in the family's frame.
    pub fn trajectory_matrix(&self, t: f64) -> Result<Matrix3<f64>> {
        let p = &self.theta;
        match self.kind {
            WarpKind::Translation2D => Ok(Matrix3::new(
                1.0,
                0.0,
                t * p[0],
                0.0,
                1.0,
                t * p[1],
                0.0,
                0.0,
                1.0,
            )),
            WarpKind::Zoom1DOF => {
                let b = 1.0 / scale_divisor(t, p[0])?;
                Ok(Matrix3::new(b, 0.0, 0.0, 0.0, b, 0.0, 0.0, 0.0, 1.0))
            }
            WarpKind::Rotation3DOF => Ok(so3::exp(&(self.omega() * t))),
            WarpKind::Similarity4DOF => {
                let b = 1.0 / scale_divisor(t, p[3])?;
                let (s, c) = (t * p[2]).sin_cos();
                Ok(Matrix3::new(
                    b * c,
                    -b * s,
                    t * p[0],
                    b * s,
                    b * c,
                    t * p[1],
                    0.0,
                    0.0,
                    1.0,
                ))
            }
            WarpKind::Affine6DOF => {
                let a = Matrix2::identity() + self.affine_rate() * t;
                if a.determinant().abs() < SINGULAR_EPS {
                    return Err(Error::singular(format!("affine A(t) singular at t = {t}")));
                }
                Ok(Matrix3::new(
                    a[(0, 0)],
                    a[(0, 1)],
                    t * p[4],
                    a[(1, 0)],
                    a[(1, 1)],
                    t * p[5],
                    0.0,
                    0.0,
                    1.0,
                ))
            }
            WarpKind::Homography8DOF => {
                let h = Matrix3::identity() + self.homography_rate() * t;
                if h.determinant().abs() < SINGULAR_EPS {
                    return Err(Error::singular(format!("homography singular at t = {t}")));
                }
                Ok(h)
            }
        }
    }

    fn to_frame(&self, g: &CameraGeometry, p: [f64; 2]) -> [f64; 2] {
        match self.kind.frame() {
            Frame::Centered => g.to_centered(p),
            Frame::Calibrated => g.to_calibrated(p),
        }
    }

    fn from_frame(&self, g: &CameraGeometry, p: [f64; 2]) -> [f64; 2] {
        match self.kind.frame() {
            Frame::Centered => g.from_centered(p),
            Frame::Calibrated => g.from_calibrated(p),
        }
    }
}

/// `1 - t k`, rejected when it vanishes.
#[inline]
pub(crate) fn scale_divisor(t: f64, k: f64) -> Result<f64> {
    let d = 1.0 - t * k;
    if d.abs() < SINGULAR_EPS {
        Err(Error::singular(format!("1 - t*k vanishes at t = {t}, k = {k}")))
    } else {
        Ok(d)
    }
}

#[inline]
pub(crate) fn apply_projective(h: &Matrix3<f64>, p: [f64; 2]) -> Result<[f64; 2]> {
    let v = h * Vector3::new(p[0], p[1], 1.0);
    if v.z.abs() < SINGULAR_EPS {
        return Err(Error::singular("point mapped to infinity"));
    }
    Ok([v.x / v.z, v.y / v.z])
}

/// Transports a point observed at normalized time `t_norm` back to the
/// reference time `t = 0`.
pub fn warp_event(
    model: &WarpModel,
    geometry: &CameraGeometry,
    x: [f64; 2],
    t_norm: f64,
) -> Result<[f64; 2]> {
    let p = model.theta();
    match model.kind() {
        WarpKind::Translation2D => Ok([x[0] - t_norm * p[0], x[1] - t_norm * p[1]]),
        WarpKind::Zoom1DOF => {
            let d = scale_divisor(t_norm, p[0])?;
            let c = geometry.to_centered(x);
            Ok(geometry.from_centered([d * c[0], d * c[1]]))
        }
        WarpKind::Rotation3DOF => {
            let r = so3::exp(&(model.omega() * t_norm));
            let c = apply_projective(&r.transpose(), geometry.to_calibrated(x))?;
            Ok(geometry.from_calibrated(c))
        }
        WarpKind::Similarity4DOF => {
            let d = scale_divisor(t_norm, p[3])?;
            let c = geometry.to_centered(x);
            let (u, v) = (c[0] - t_norm * p[0], c[1] - t_norm * p[1]);
            let (s, co) = (-t_norm * p[2]).sin_cos();
            Ok(geometry.from_centered([d * (co * u - s * v), d * (s * u + co * v)]))
        }
        WarpKind::Affine6DOF | WarpKind::Homography8DOF => {
            let inv = model
                .trajectory_matrix(t_norm)?
                .try_inverse()
                .ok_or_else(|| Error::singular("trajectory matrix not invertible"))?;
            let c = apply_projective(&inv, model.to_frame(geometry, x))?;
            Ok(model.from_frame(geometry, c))
        }
    }
}

/// Forward trajectory: where the reference-time point `x0` sits at `t_norm`.
/// Inverse of [`warp_event`] at the same time.
pub fn trajectory_point(
    model: &WarpModel,
    geometry: &CameraGeometry,
    x0: [f64; 2],
    t_norm: f64,
) -> Result<[f64; 2]> {
    let p = model.theta();
    match model.kind() {
        WarpKind::Translation2D => Ok([x0[0] + t_norm * p[0], x0[1] + t_norm * p[1]]),
        WarpKind::Zoom1DOF => {
            let d = scale_divisor(t_norm, p[0])?;
            let c = geometry.to_centered(x0);
            Ok(geometry.from_centered([c[0] / d, c[1] / d]))
        }
        _ => {
            let h = model.trajectory_matrix(t_norm)?;
            let c = apply_projective(&h, model.to_frame(geometry, x0))?;
            Ok(model.from_frame(geometry, c))
        }
    }
}

/// Determinant of `d x(t + dt) / d x(t)` for the point `x_t` on its trajectory.
pub fn incremental_jacobian_det(
    model: &WarpModel,
    geometry: &CameraGeometry,
    x_t: [f64; 2],
    t_norm: f64,
    dt: f64,
) -> Result<f64> {
    let p = model.theta();
    let t1 = t_norm + dt;
    match model.kind() {
        WarpKind::Translation2D => Ok(1.0),
        WarpKind::Zoom1DOF | WarpKind::Similarity4DOF => {
            let k = if model.kind() == WarpKind::Zoom1DOF {
                p[0]
            } else {
                p[3]
            };
            let ratio = scale_divisor(t_norm, k)? / scale_divisor(t1, k)?;
            Ok(ratio * ratio)
        }
        WarpKind::Rotation3DOF => {
            let r = so3::exp(&(model.omega() * dt));
            let c = geometry.to_calibrated(x_t);
            let depth = r[(2, 0)] * c[0] + r[(2, 1)] * c[1] + r[(2, 2)];
            if depth.abs() < SINGULAR_EPS {
                return Err(Error::singular("rotated point at infinity"));
            }
            Ok(depth.powi(-3))
        }
        WarpKind::Affine6DOF => {
            let m = model.affine_rate();
            let d0 = (Matrix2::identity() + m * t_norm).determinant();
            let d1 = (Matrix2::identity() + m * t1).determinant();
            if d0.abs() < SINGULAR_EPS || d1.abs() < SINGULAR_EPS {
                return Err(Error::singular("affine A(t) singular"));
            }
            Ok((d1 / d0).abs())
        }
        WarpKind::Homography8DOF => {
            let h_inc = Matrix3::identity() + homography_generator(model, t_norm)? * dt;
            let det = h_inc.determinant();
            if det.abs() < SINGULAR_EPS {
                return Err(Error::singular("incremental homography singular"));
            }
            let c = geometry.to_calibrated(x_t);
            let w = h_inc[(2, 0)] * c[0] + h_inc[(2, 1)] * c[1] + h_inc[(2, 2)];
            if w.abs() < SINGULAR_EPS {
                return Err(Error::singular("point mapped to infinity"));
            }
            Ok(det / (w * w * w))
        }
    }
}

/// `K(t) = M (I + t M)^-1`, so that `H(t + dt) H(t)^-1 = I + dt K(t)` exactly.
pub(crate) fn homography_generator(model: &WarpModel, t: f64) -> Result<Matrix3<f64>> {
    let m = model.homography_rate();
    let inv = (Matrix3::identity() + m * t)
        .try_inverse()
        .filter(|i| i.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::singular(format!("homography singular at t = {t}")))?;
    Ok(m * inv)
}

/// A dense per-pixel 2-vector field in pixels per window.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub vectors: Vec<[f64; 2]>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            vectors: vec![[0.0; 2]; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 2] {
        self.vectors[y * self.width + x]
    }
}

/// Forward trajectory velocity `dx/dt` at `t = 0` for the point `p`.
pub fn velocity_at(model: &WarpModel, geometry: &CameraGeometry, p: [f64; 2]) -> Result<[f64; 2]> {
    if model.kind() == WarpKind::Translation2D {
        let v = model.theta();
        return Ok([v[0], v[1]]);
    }
    let h = FLOW_TIME_STEP;
    let ahead = trajectory_point(model, geometry, p, h)?;
    let behind = trajectory_point(model, geometry, p, -h)?;
    Ok([
        (ahead[0] - behind[0]) / (2.0 * h),
        (ahead[1] - behind[1]) / (2.0 * h),
    ])
}

/// Per-pixel forward trajectory velocity at the reference time (scene motion
/// on the image plane, not the warp displacement).
pub fn flow_field(model: &WarpModel, geometry: &CameraGeometry) -> Result<FlowField> {
    pixel_field(geometry, |p| velocity_at(model, geometry, p))
}

/// Per-pixel displacement over the whole window, `x(1) - x(0)`.
pub fn displacement_field(model: &WarpModel, geometry: &CameraGeometry) -> Result<FlowField> {
    pixel_field(geometry, |p| {
        let q = trajectory_point(model, geometry, p, 1.0)?;
        Ok([q[0] - p[0], q[1] - p[1]])
    })
}

fn pixel_field(
    geometry: &CameraGeometry,
    f: impl Fn([f64; 2]) -> Result<[f64; 2]>,
) -> Result<FlowField> {
    let mut vectors = Vec::with_capacity(geometry.num_pixels());
    for y in 0..geometry.height {
        for x in 0..geometry.width {
            vectors.push(f([x as f64, y as f64])?);
        }
    }
    Ok(FlowField {
        width: geometry.width,
        height: geometry.height,
        vectors,
    })
}
