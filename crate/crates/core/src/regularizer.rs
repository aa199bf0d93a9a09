//! Collapse regularizers.
//!
//! The geometric regularizer depends only on the warp: it integrates the
//! rate of change of the area element, `d|J_{t,t+dt}|/d dt` at `dt = 0`,
//! along each point trajectory over the window. For the zoom and similarity
//! families the integral has the closed form `-2 ln|1 - h|`; for rotations,
//! affinities and homographies it varies over the image and is aggregated
//! from a per-pixel map with a dead zone.
//!
//! The event-based baselines average per-event flow divergence and warp
//! area deformation into images and take their trimmed mean.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::event::{CameraGeometry, EventWindow};
use crate::iwe::Splat;
use crate::warp::{
    homography_generator, scale_divisor, velocity_at, warp_event, WarpKind,
    WarpModel, SINGULAR_EPS,
};

/// Trapezoid sample count for integrating rates along a trajectory.
pub const TRAPEZOID_SAMPLES: usize = 16;

/// Half-width in pixels of the spatial stencil used by the event baselines.
pub const BASELINE_STENCIL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegularizerKind {
    None,
    GeometricRate,
    EventDivergence,
    EventDeformation,
    DivPlusDef,
}

impl RegularizerKind {
    pub const ALL: [RegularizerKind; 5] = [
        RegularizerKind::None,
        RegularizerKind::GeometricRate,
        RegularizerKind::EventDivergence,
        RegularizerKind::EventDeformation,
        RegularizerKind::DivPlusDef,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegularizerKind::None => "none",
            RegularizerKind::GeometricRate => "geometric",
            RegularizerKind::EventDivergence => "divergence",
            RegularizerKind::EventDeformation => "deformation",
            RegularizerKind::DivPlusDef => "div_def",
        }
    }

    pub fn is_event_based(self) -> bool {
        matches!(
            self,
            RegularizerKind::EventDivergence
                | RegularizerKind::EventDeformation
                | RegularizerKind::DivPlusDef
        )
    }
}

impl fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegularizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        RegularizerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown regularizer '{s}'")))
    }
}

/// Regularizer selection with its tuning knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerConfig {
    pub kind: RegularizerKind,
    /// Dead-zone half-width for map-based families.
    pub tau: f64,
    /// Contraction margin for the similarity family.
    pub alpha: f64,
    /// Fraction trimmed from each end by the event baselines.
    pub trim: f64,
    /// Pixel stride of the deformation maps.
    pub stride: usize,
}

impl RegularizerConfig {
    pub fn new(kind: RegularizerKind) -> Self {
        Self {
            kind,
            tau: 0.2,
            alpha: 1.0,
            trim: 0.01,
            stride: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return Err(Error::invalid("tau must be >= 0"));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid("alpha must be >= 0"));
        }
        if !(0.0..0.5).contains(&self.trim) {
            return Err(Error::invalid("trim fraction must lie in [0, 0.5)"));
        }
        if self.stride == 0 {
            return Err(Error::invalid("map stride must be >= 1"));
        }
        Ok(())
    }
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        Self::new(RegularizerKind::GeometricRate)
    }
}

/// Closed-form 1-DOF regularizer `-2 ln|1 - h_z|`.
pub fn reg_zoom_1dof(h_z: f64) -> Result<f64> {
    if h_z == 1.0 {
        return Err(Error::singular("h_z = 1"));
    }
    Ok(-2.0 * (1.0 - h_z).abs().ln())
}

/// Translations never deform area.
pub fn reg_translation_2dof(_theta: [f64; 2]) -> f64 {
    0.0
}

/// `d|J_{t,t+dt}|/d dt` at `dt = 0` for the trajectory point `x_t` at `t_norm`.
pub fn rate_of_area_change(
    model: &WarpModel,
    geometry: &CameraGeometry,
    x_t: [f64; 2],
    t_norm: f64,
) -> Result<f64> {
    let p = model.theta();
    match model.kind() {
        WarpKind::Translation2D => Ok(0.0),
        WarpKind::Zoom1DOF => Ok(2.0 * p[0] / scale_divisor(t_norm, p[0])?),
        WarpKind::Similarity4DOF => Ok(2.0 * p[3] / scale_divisor(t_norm, p[3])?),
        WarpKind::Rotation3DOF => {
            let c = geometry.to_calibrated(x_t);
            Ok(3.0 * (p[1] * c[0] - p[0] * c[1]))
        }
        WarpKind::Affine6DOF => {
            let m = model.affine_rate();
            let det = (nalgebra::Matrix2::identity() + m * t_norm).determinant();
            if det.abs() < SINGULAR_EPS {
                return Err(Error::singular("affine A(t) singular"));
            }
            Ok((m.trace() + 2.0 * t_norm * m.determinant()) / det)
        }
        WarpKind::Homography8DOF => {
            let k = homography_generator(model, t_norm)?;
            Ok(projective_rate(&k, geometry.to_calibrated(x_t)))
        }
    }
}

/// Rate for the incremental homography `I + dt K`:
/// `tr K - 3 (third row of K) . x^h`.
#[inline]
fn projective_rate(k: &Matrix3<f64>, c: [f64; 2]) -> f64 {
    k.trace() - 3.0 * (k[(2, 0)] * c[0] + k[(2, 1)] * c[1] + k[(2, 2)])
}

/// Per-pixel integral of the area rate along the trajectory starting at
/// each sampled pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationMap {
    pub width: usize,
    pub height: usize,
    pub stride: usize,
    /// Sampled grid size, `ceil(width / stride)` by `ceil(height / stride)`.
    pub grid_width: usize,
    pub grid_height: usize,
    pub values: Vec<f64>,
}

impl DeformationMap {
    /// Integrates the area rate over `t` in [0, 1] with a composite
    /// trapezoid rule on `samples` points for every `stride`-th pixel.
    pub fn compute(
        model: &WarpModel,
        geometry: &CameraGeometry,
        stride: usize,
        samples: usize,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(Error::invalid("map stride must be >= 1"));
        }
        if samples < 2 {
            return Err(Error::invalid("trapezoid rule needs at least 2 samples"));
        }
        let grid_width = geometry.width.div_ceil(stride);
        let grid_height = geometry.height.div_ceil(stride);
        let mut values = vec![0.0; grid_width * grid_height];
        let step = 1.0 / (samples - 1) as f64;
        let weight = |i: usize| if i == 0 || i == samples - 1 { 0.5 * step } else { step };

        match model.kind() {
            WarpKind::Translation2D => {}
            WarpKind::Zoom1DOF | WarpKind::Similarity4DOF | WarpKind::Affine6DOF => {
                // Spatially constant rate.
                let origin = [geometry.cx, geometry.cy];
                let mut total = 0.0;
                for i in 0..samples {
                    total += weight(i) * rate_of_area_change(model, geometry, origin, i as f64 * step)?;
                }
                values.fill(total);
            }
            WarpKind::Rotation3DOF | WarpKind::Homography8DOF => {
                let mut nodes = Vec::with_capacity(samples);
                for i in 0..samples {
                    let t = i as f64 * step;
                    let (h, k) = if model.kind() == WarpKind::Rotation3DOF {
                        (model.trajectory_matrix(t)?, crate::so3::hat(&model.omega()))
                    } else {
                        (model.trajectory_matrix(t)?, homography_generator(model, t)?)
                    };
                    nodes.push((h, k, weight(i)));
                }
                values
                    .par_chunks_mut(grid_width)
                    .enumerate()
                    .try_for_each(|(gy, row)| -> Result<()> {
                        let y = (gy * stride) as f64;
                        for (gx, out) in row.iter_mut().enumerate() {
                            let c0 = geometry.to_calibrated([(gx * stride) as f64, y]);
                            let x0 = Vector3::new(c0[0], c0[1], 1.0);
                            let mut acc = 0.0;
                            for (h, k, w) in &nodes {
                                let v = h * x0;
                                if v.z.abs() < SINGULAR_EPS {
                                    return Err(Error::singular("trajectory reaches infinity"));
                                }
                                acc += w * projective_rate(k, [v.x / v.z, v.y / v.z]);
                            }
                            *out = acc;
                        }
                        Ok(())
                    })?;
            }
        }
        Ok(Self {
            width: geometry.width,
            height: geometry.height,
            stride,
            grid_width,
            grid_height,
            values,
        })
    }

    pub fn get(&self, gx: usize, gy: usize) -> f64 {
        self.values[gy * self.grid_width + gx]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Mean of `max(0, |v| - tau)` over the sampled pixels.
    pub fn dead_zone_mean(&self, tau: f64) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().map(|v| (v.abs() - tau).max(0.0)).sum::<f64>() / self.values.len() as f64
    }
}

/// Rate map of a rotation with angular velocity `omega` (rad/window).
pub fn deformation_map_3dof(
    omega: [f64; 3],
    geometry: &CameraGeometry,
    stride: usize,
) -> Result<DeformationMap> {
    DeformationMap::compute(&WarpModel::rotation(omega)?, geometry, stride, TRAPEZOID_SAMPLES)
}

/// Rate map of any family with the default trapezoid resolution.
pub fn rate_map(model: &WarpModel, geometry: &CameraGeometry, stride: usize) -> Result<DeformationMap> {
    DeformationMap::compute(model, geometry, stride, TRAPEZOID_SAMPLES)
}

/// The geometric regularizer. Takes no events.
pub fn reg_geometric(
    model: &WarpModel,
    geometry: &CameraGeometry,
    config: &RegularizerConfig,
) -> Result<f64> {
    let p = model.theta();
    match model.kind() {
        WarpKind::Translation2D => Ok(reg_translation_2dof([p[0], p[1]])),
        WarpKind::Zoom1DOF => reg_zoom_1dof(p[0]),
        WarpKind::Similarity4DOF => {
            let contraction = reg_zoom_1dof(p[3])?;
            Ok(contraction.max(config.alpha) - config.alpha)
        }
        WarpKind::Rotation3DOF | WarpKind::Affine6DOF | WarpKind::Homography8DOF => {
            Ok(rate_map(model, geometry, config.stride)?.dead_zone_mean(config.tau))
        }
    }
}

/// Largest signed per-pixel rate integral (positive means events contract
/// when warped to the reference time).
pub fn peak_contraction(model: &WarpModel, geometry: &CameraGeometry, stride: usize) -> Result<f64> {
    match model.kind() {
        WarpKind::Translation2D => Ok(0.0),
        WarpKind::Zoom1DOF => reg_zoom_1dof(model.theta()[0]),
        WarpKind::Similarity4DOF => reg_zoom_1dof(model.theta()[3]),
        _ => Ok(rate_map(model, geometry, stride)?.max()),
    }
}

/// Value of an event-based regularizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRegularization {
    pub value: f64,
    /// Set when no pixel received any warped event.
    pub empty_support: bool,
}

/// Divergence / deformation baselines averaged into per-pixel images.
pub fn reg_event_based(
    window: &EventWindow,
    model: &WarpModel,
    geometry: &CameraGeometry,
    config: &RegularizerConfig,
) -> Result<EventRegularization> {
    let (want_div, want_def) = match config.kind {
        RegularizerKind::EventDivergence => (true, false),
        RegularizerKind::EventDeformation => (false, true),
        RegularizerKind::DivPlusDef => (true, true),
        other => {
            return Err(Error::invalid(format!(
                "{other} is not an event-based regularizer"
            )))
        }
    };
    let (w, h) = (geometry.width, geometry.height);
    let mut count = vec![0.0; w * h];
    let mut div_sum = if want_div { vec![0.0; w * h] } else { Vec::new() };
    let mut def_sum = if want_def { vec![0.0; w * h] } else { Vec::new() };
    let s = BASELINE_STENCIL;

    for e in window.events() {
        let t = window.normalized_unchecked(e.t);
        let x = e.position();
        let warped = warp_event(model, geometry, x, t)?;
        let Some(splat) = Splat::at(warped[0], warped[1]) else {
            continue;
        };
        if splat.deposit(&mut count, w, h, 1.0) == 0.0 {
            continue;
        }
        if want_div {
            let fxp = velocity_at(model, geometry, [x[0] + s, x[1]])?;
            let fxm = velocity_at(model, geometry, [x[0] - s, x[1]])?;
            let fyp = velocity_at(model, geometry, [x[0], x[1] + s])?;
            let fym = velocity_at(model, geometry, [x[0], x[1] - s])?;
            let div = (fxp[0] - fxm[0] + fyp[1] - fym[1]) / (2.0 * s);
            splat.deposit(&mut div_sum, w, h, div);
        }
        if want_def {
            let ax = warp_event(model, geometry, [x[0] + s, x[1]], t)?;
            let bx = warp_event(model, geometry, [x[0] - s, x[1]], t)?;
            let ay = warp_event(model, geometry, [x[0], x[1] + s], t)?;
            let by = warp_event(model, geometry, [x[0], x[1] - s], t)?;
            let j00 = (ax[0] - bx[0]) / (2.0 * s);
            let j10 = (ax[1] - bx[1]) / (2.0 * s);
            let j01 = (ay[0] - by[0]) / (2.0 * s);
            let j11 = (ay[1] - by[1]) / (2.0 * s);
            splat.deposit(&mut def_sum, w, h, (j00 * j11 - j01 * j10).abs());
        }
    }

    let mut value = 0.0;
    let mut empty = false;
    for sums in [&div_sum, &def_sum] {
        if sums.is_empty() {
            continue;
        }
        match trimmed_mean_of_average(sums, &count, config.trim) {
            Some(v) => value += v,
            None => empty = true,
        }
    }
    Ok(EventRegularization {
        value: if empty { 0.0 } else { value },
        empty_support: empty,
    })
}

/// Trimmed mean of `sum / count` over pixels with positive count.
fn trimmed_mean_of_average(sum: &[f64], count: &[f64], trim: f64) -> Option<f64> {
    let mut avg: Vec<f64> = sum
        .iter()
        .zip(count)
        .filter(|(_, &c)| c > 0.0)
        .map(|(s, c)| s / c)
        .collect();
    trimmed_mean(&mut avg, trim)
}

/// Mean after discarding `floor(n * trim)` values from each end.
pub fn trimmed_mean(values: &mut [f64], trim: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable_by(f64::total_cmp);
    let cut = (values.len() as f64 * trim).floor() as usize;
    let kept = &values[cut..values.len() - cut];
    if kept.is_empty() {
        return None;
    }
    Some(kept.iter().sum::<f64>() / kept.len() as f64)
}

/// Regularizer value for any kind; `None` is identically zero.
pub fn regularizer_value(
    window: &EventWindow,
    model: &WarpModel,
    geometry: &CameraGeometry,
    config: &RegularizerConfig,
) -> Result<f64> {
    match config.kind {
        RegularizerKind::None => Ok(0.0),
        RegularizerKind::GeometricRate => reg_geometric(model, geometry, config),
        _ => Ok(reg_event_based(window, model, geometry, config)?.value),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Event, Polarity};
    use crate::warp::{incremental_jacobian_det, trajectory_point};

    /// Adaptive Simpson quadrature, used as an independent oracle.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
            let m = 0.5 * (a + b);
            let fm = f(m);
            (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
        }
        #[allow(clippy::too_many_arguments)]
        fn recurse(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            fa: f64,
            b: f64,
            fb: f64,
            m: f64,
            fm: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let (lm, flm, left) = simpson(f, a, fa, m, fm);
            let (rm, frm, right) = simpson(f, m, fm, b, fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                return left + right + delta / 15.0;
            }
            recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
        }
        let (fa, fb) = (f(a), f(b));
        let (m, fm, whole) = simpson(f, a, fa, b, fb);
        recurse(f, a, fa, b, fb, m, fm, whole, tol, 50)
    }

    fn zoom_quadrature(h: f64) -> f64 {
        adaptive_simpson(&|t| 2.0 * h / (1.0 - t * h), 0.0, 1.0, 1e-13)
    }

    fn geometry() -> CameraGeometry {
        CameraGeometry::centered(240, 180, 200.0).unwrap()
    }

    #[test]
    fn zoom_closed_form_examples() {
        assert_eq!(reg_zoom_1dof(0.0).unwrap(), 0.0);
        let half = reg_zoom_1dof(0.5).unwrap();
        assert!((half - zoom_quadrature(0.5)).abs() < 1e-9);
        assert!((half - 1.386_294_4).abs() < 1e-7);
        let neg = reg_zoom_1dof(-1.0).unwrap();
        assert!((neg - zoom_quadrature(-1.0)).abs() < 1e-9);
        assert!((neg + 1.386_294_4).abs() < 1e-7);
        assert!(matches!(reg_zoom_1dof(1.0), Err(Error::SingularWarp(_))));
    }

    #[test]
    fn zoom_is_a_barrier() {
        let mut prev = reg_zoom_1dof(1e-6).unwrap();
        for i in 1..1000 {
            let h = i as f64 / 1000.0;
            let r = reg_zoom_1dof(h).unwrap();
            assert!(r > prev);
            prev = r;
        }
        assert!(reg_zoom_1dof(1.0 - 1e-12).unwrap() > 50.0);
    }

    #[test]
    fn translation_vanishes() {
        for theta in [[0.0, 0.0], [100.0, -50.0], [1e6, 1e6]] {
            assert_eq!(reg_translation_2dof(theta), 0.0);
            let m = WarpModel::translation(theta[0], theta[1]).unwrap();
            assert_eq!(reg_geometric(&m, &geometry(), &RegularizerConfig::default()).unwrap(), 0.0);
        }
    }

    #[test]
    fn rate_examples() {
        let g = geometry();
        let z = WarpModel::zoom(0.5).unwrap();
        assert_eq!(rate_of_area_change(&z, &g, [3.0, 4.0], 0.0).unwrap(), 1.0);
        assert!((rate_of_area_change(&z, &g, [3.0, 4.0], 0.5).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        for kind in WarpKind::ALL {
            let id = WarpModel::identity(kind);
            assert_eq!(rate_of_area_change(&id, &g, [10.0, 20.0], 0.4).unwrap(), 0.0);
        }
    }

    #[test]
    fn rotation_rate_sign_from_finite_differences() {
        // omega = (0.1, 0, 0) at calibrated (0, 0.5): the forward difference
        // oracle gives -0.15, i.e. rate = 3 (w_y x - w_x y).
        let g = geometry();
        let m = WarpModel::rotation([0.1, 0.0, 0.0]).unwrap();
        let x = g.from_calibrated([0.0, 0.5]);
        let h = 1e-6;
        let fd = (incremental_jacobian_det(&m, &g, x, 0.0, h).unwrap()
            - incremental_jacobian_det(&m, &g, x, 0.0, -h).unwrap())
            / (2.0 * h);
        let analytic = rate_of_area_change(&m, &g, x, 0.0).unwrap();
        assert!((fd - -0.15).abs() < 1e-8);
        assert!((analytic - -0.15).abs() < 1e-14);
    }

    #[test]
    fn z_rotation_map_is_zero() {
        let g = geometry();
        for wz in [0.0, 0.3, -2.0] {
            let map = deformation_map_3dof([0.0, 0.0, wz], &g, 1).unwrap();
            assert!(map.max_abs() < 1e-12, "{wz}: {}", map.max_abs());
        }
    }

    /// Refinement oracle: trapezoid over `n` points of the analytic rate
    /// evaluated on the forward trajectory of a single pixel.
    fn integrate_along(model: &WarpModel, g: &CameraGeometry, x0: [f64; 2], n: usize) -> f64 {
        let step = 1.0 / (n - 1) as f64;
        (0..n)
            .map(|i| {
                let t = i as f64 * step;
                let w = if i == 0 || i == n - 1 { 0.5 * step } else { step };
                w * rate_of_area_change(model, g, trajectory_point(model, g, x0, t).unwrap(), t).unwrap()
            })
            .sum()
    }

    #[test]
    fn rotation_map_matches_refined_integral() {
        let g = geometry();
        let omega = [0.2, 0.0, 0.0];
        let map = deformation_map_3dof(omega, &g, 1).unwrap();
        let m = WarpModel::rotation(omega).unwrap();
        for (px, py) in [(120usize, 10usize), (30, 170), (200, 90), (0, 0)] {
            let oracle = integrate_along(&m, &g, [px as f64, py as f64], 1024);
            let v = map.get(px, py);
            assert!((v - oracle).abs() <= 1e-4 * oracle.abs().max(1e-3), "{v} vs {oracle}");
        }
        // Rotation about x pushes y = -0.4 further down, so the integral
        // exceeds the initial rate 3 * 0.2 * 0.4.
        let x = g.from_calibrated([0.0, -0.4]);
        let v = map.get(x[0].round() as usize, x[1].round() as usize);
        assert!(v > 0.24 && v < 0.4, "{v}");
    }

    #[test]
    fn homography_map_matches_refined_integral() {
        let g = geometry();
        let m = WarpModel::homography([0.05, 0.01, 0.02, -0.01, 0.03, -0.02, 0.15, -0.1]).unwrap();
        let map = rate_map(&m, &g, 8).unwrap();
        assert_eq!((map.grid_width, map.grid_height), (30, 23));
        for (gx, gy) in [(0usize, 0usize), (29, 22), (15, 11)] {
            let oracle = integrate_along(&m, &g, [(gx * 8) as f64, (gy * 8) as f64], 1024);
            let v = map.get(gx, gy);
            assert!((v - oracle).abs() <= 1e-4 * oracle.abs().max(1e-3), "{v} vs {oracle}");
        }
    }

    #[test]
    fn constant_maps_match_closed_forms() {
        let g = CameraGeometry::centered(20, 10, 50.0).unwrap();
        let z = rate_map(&WarpModel::zoom(0.5).unwrap(), &g, 1).unwrap();
        // Trapezoid on 16 points of a convex integrand overestimates slightly.
        let exact = reg_zoom_1dof(0.5).unwrap();
        assert!(z.values.iter().all(|v| (v - exact).abs() < 1e-3 && *v >= exact));
        let a = WarpModel::affine([0.2, 0.1, -0.05, 0.3], [1.0, 2.0]).unwrap();
        let det1 = (1.2f64 * 1.3) - (0.1 * -0.05);
        let map = rate_map(&a, &g, 1).unwrap();
        assert!(map.values.iter().all(|v| (v - det1.ln()).abs() < 1e-3));
    }

    #[test]
    fn geometric_similarity_margin() {
        let g = geometry();
        let cfg = RegularizerConfig::default();
        let contract = WarpModel::similarity(3.0, -1.0, 0.2, 0.5).unwrap();
        let r = reg_geometric(&contract, &g, &cfg).unwrap();
        assert!((r - (zoom_quadrature(0.5) - 1.0)).abs() < 1e-9);
        assert!((r - 0.386_294_4).abs() < 1e-7);
        let expand = WarpModel::similarity(3.0, -1.0, 0.2, -0.5).unwrap();
        assert_eq!(reg_geometric(&expand, &g, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn similarity_without_margin_reduces_to_zoom() {
        let g = geometry();
        let cfg = RegularizerConfig {
            alpha: 0.0,
            ..RegularizerConfig::default()
        };
        for h in [-1.5, -0.2, 0.1, 0.7, 0.95] {
            let sim = reg_geometric(&WarpModel::similarity(0.0, 0.0, 0.0, h).unwrap(), &g, &cfg).unwrap();
            let zoom = reg_zoom_1dof(h).unwrap();
            if h > 0.0 {
                assert!((sim - zoom).abs() < 1e-12);
            } else {
                // max(0, R) clips expansions at zero.
                assert_eq!(sim, 0.0);
            }
        }
    }

    #[test]
    fn rotation_dead_zone() {
        let g = geometry();
        let cfg = RegularizerConfig::default();
        // ||omega_xy|| <= 0.08 keeps every |R_x(0)| under tau on this sensor
        // (the corner sits at calibrated radius 0.75, so the bound is 3*0.08*0.75).
        for omega in [[0.08, 0.0, 0.0], [0.0, -0.08, 0.0], [0.05, 0.05, 0.1], [0.0, 0.0, 0.1]] {
            let map = deformation_map_3dof(omega, &g, 1).unwrap();
            assert!(map.max_abs() <= 0.2);
            assert_eq!(reg_geometric(&WarpModel::rotation(omega).unwrap(), &g, &cfg).unwrap(), 0.0);
        }
        // Perpendicular to the corner direction at norm 0.1 the map exceeds tau.
        let dir = [0.45 / 0.75, -0.6 / 0.75];
        let omega = [0.1 * dir[0], 0.1 * dir[1], 0.0];
        let map = deformation_map_3dof(omega, &g, 1).unwrap();
        assert!(map.max_abs() > 0.2 && map.max_abs() < 0.26, "{}", map.max_abs());
        let r = reg_geometric(&WarpModel::rotation(omega).unwrap(), &g, &cfg).unwrap();
        assert!(r > 0.0 && r < 1e-3);
    }

    #[test]
    fn geometric_ignores_events() {
        let g = geometry();
        let cfg = RegularizerConfig::default();
        let m = WarpModel::rotation([0.3, -0.2, 0.1]).unwrap();
        let a = EventWindow::new(vec![Event::new(0.0, 1.0, 1.0, Polarity::Positive)]).unwrap();
        let b = EventWindow::new(vec![
            Event::new(0.0, 100.0, 50.0, Polarity::Negative),
            Event::new(3.0, 7.0, 9.0, Polarity::Positive),
        ])
        .unwrap();
        let ra = regularizer_value(&a, &m, &g, &cfg).unwrap();
        let rb = regularizer_value(&b, &m, &g, &cfg).unwrap();
        assert_eq!(ra.to_bits(), rb.to_bits());
    }

    #[test]
    fn stride_subsamples_map() {
        let g = geometry();
        let full = deformation_map_3dof([0.2, 0.1, 0.0], &g, 1).unwrap();
        let coarse = deformation_map_3dof([0.2, 0.1, 0.0], &g, 4).unwrap();
        assert_eq!(coarse.values.len(), 60 * 45);
        assert_eq!(coarse.get(3, 5), full.get(12, 20));
    }

    fn event_window(events: &[(f64, f64, f64)]) -> EventWindow {
        EventWindow::new(
            events
                .iter()
                .map(|&(t, x, y)| Event::new(t, x, y, Polarity::Positive))
                .collect(),
        )
        .unwrap()
    }

    fn grid_events(g: &CameraGeometry, times: impl Fn(usize) -> f64) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        let mut i = 0;
        for y in (20..g.height - 20).step_by(9) {
            for x in (20..g.width - 20).step_by(11) {
                out.push((times(i), x as f64, y as f64));
                i += 1;
            }
        }
        out
    }

    #[test]
    fn event_baselines_on_translation() {
        let g = geometry();
        let w = event_window(&grid_events(&g, |i| i as f64 * 1e-3));
        let m = WarpModel::translation(7.0, -3.0).unwrap();
        let mut cfg = RegularizerConfig::new(RegularizerKind::EventDivergence);
        let div = reg_event_based(&w, &m, &g, &cfg).unwrap();
        assert!(div.value.abs() < 1e-12 && !div.empty_support);
        cfg.kind = RegularizerKind::EventDeformation;
        let def = reg_event_based(&w, &m, &g, &cfg).unwrap();
        assert!((def.value - 1.0).abs() < 1e-12);
        cfg.kind = RegularizerKind::DivPlusDef;
        assert!((reg_event_based(&w, &m, &g, &cfg).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn event_deformation_zoom_at_window_end() {
        // An off-sensor anchor at t = 0 pins the window span; every other
        // event sits at t = 1 where the zoom area factor is (1 - h)^2.
        let g = geometry();
        let ev: Vec<_> = grid_events(&g, |_| 1.0)
            .into_iter()
            .chain([(0.0, 500.0, 500.0)])
            .collect();
        let w = event_window(&ev);
        let m = WarpModel::zoom(0.5).unwrap();
        let cfg = RegularizerConfig::new(RegularizerKind::EventDeformation);
        let r = reg_event_based(&w, &m, &g, &cfg).unwrap();
        assert!((r.value - 0.25).abs() < 1e-12, "{}", r.value);
    }

    #[test]
    fn event_deformation_mixed_times_between_bounds() {
        let g = geometry();
        let n = grid_events(&g, |_| 0.0).len();
        let w = event_window(&grid_events(&g, |i| i as f64 / (n - 1) as f64));
        let m = WarpModel::zoom(0.5).unwrap();
        let r = reg_event_based(&w, &m, &g, &RegularizerConfig::new(RegularizerKind::EventDeformation)).unwrap();
        assert!(r.value > 0.25 && r.value < 1.0, "{}", r.value);
        // Brute force: mean of per-event (1 - t h)^2 over the same events.
        let brute: f64 = (0..n).map(|i| (1.0 - 0.5 * i as f64 / (n - 1) as f64).powi(2)).sum::<f64>() / n as f64;
        assert!((r.value - brute).abs() < 0.05, "{} vs {brute}", r.value);
    }

    #[test]
    fn event_baseline_empty_support() {
        let g = CameraGeometry::centered(10, 10, 50.0).unwrap();
        let w = event_window(&[(0.0, 5.0, 5.0), (1.0, 5.0, 5.0)]);
        // A huge translation pushes the late event away; the first stays.
        let m = WarpModel::translation(1e4, 0.0).unwrap();
        let cfg = RegularizerConfig::new(RegularizerKind::EventDeformation);
        assert!(!reg_event_based(&w, &m, &g, &cfg).unwrap().empty_support);
        let w = event_window(&[(0.0, 500.0, 5.0), (1.0, 600.0, 5.0)]);
        let r = reg_event_based(&w, &m, &g, &cfg).unwrap();
        assert!(r.empty_support);
        assert_eq!(r.value, 0.0);
        let bad = RegularizerConfig::new(RegularizerKind::GeometricRate);
        assert!(reg_event_based(&w, &m, &g, &bad).is_err());
    }

    #[test]
    fn trimmed_mean_discards_tails() {
        let mut v: Vec<f64> = (0..100).map(f64::from).collect();
        v[99] = 1e9;
        v[0] = -1e9;
        let m = trimmed_mean(&mut v, 0.01).unwrap();
        assert!((m - 49.5).abs() < 1e-12);
        assert!(trimmed_mean(&mut [], 0.1).is_none());
    }

    #[test]
    fn config_validation() {
        let mut c = RegularizerConfig::default();
        assert!(c.validate().is_ok());
        c.trim = 0.5;
        assert!(c.validate().is_err());
        c = RegularizerConfig { tau: -0.1, ..RegularizerConfig::default() };
        assert!(c.validate().is_err());
        c = RegularizerConfig { stride: 0, ..RegularizerConfig::default() };
        assert!(c.validate().is_err());
        assert_eq!("div_def".parse::<RegularizerKind>().unwrap(), RegularizerKind::DivPlusDef);
    }

    mod props {
        use proptest::prelude::*;

        use super::*;

        proptest! {
            #[test]
            fn zoom_matches_quadrature(h in -2.0..0.95f64) {
                prop_assert!((reg_zoom_1dof(h).unwrap() - zoom_quadrature(h)).abs() < 1e-9);
            }
        }
    }
}
