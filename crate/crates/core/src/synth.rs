//! Synthetic event windows with known motion.
//!
//! Scene points are drawn uniformly over the sensor at the reference time,
//! each fires events at uniform times along its trajectory, and Gaussian
//! pixel jitter is added afterwards. Each point draws from its own ChaCha
//! stream, so generation is parallel yet reproducible.

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::event::{CameraGeometry, Event, EventWindow, Polarity};
use crate::metrics::GroundTruthFlow;
use crate::warp::{trajectory_point, WarpModel};

/// Rigid camera motion viewing a fronto-parallel plane at constant depth.
/// The image velocity is the feature-sensitivity motion field
/// `v(x) = A(x) nu / Z + B(x) omega` in calibrated coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionField {
    /// Linear velocity (m/s).
    pub linear: [f64; 3],
    /// Angular velocity (rad/s).
    pub angular: [f64; 3],
    /// Scene depth (m).
    pub depth: f64,
}

impl MotionField {
    /// Pure forward motion with `v_z / Z = rate` (1/s).
    pub fn looming(rate: f64) -> Self {
        Self {
            linear: [0.0, 0.0, rate],
            angular: [0.0; 3],
            depth: 1.0,
        }
    }

    /// Calibrated image velocity (1/s) and its Jacobian at `c`.
    fn velocity(&self, c: [f64; 2]) -> (Vector2<f64>, Matrix2<f64>) {
        let [x, y] = c;
        let [vx, vy, vz] = self.linear;
        let [wx, wy, wz] = self.angular;
        let z = self.depth;
        let u = (-vx + x * vz) / z + x * y * wx - (1.0 + x * x) * wy + y * wz;
        let v = (-vy + y * vz) / z + (1.0 + y * y) * wx - x * y * wy - x * wz;
        let jac = Matrix2::new(
            vz / z + y * wx - 2.0 * x * wy,
            x * wx + wz,
            -y * wy - wz,
            vz / z + 2.0 * y * wx - x * wy,
        );
        (Vector2::new(u, v), jac)
    }

    /// Solves `x - v(x) s = x0` for the calibrated position `x` at elapsed
    /// time `s` seconds by Newton iteration.
    fn position(&self, x0: [f64; 2], s: f64) -> Result<[f64; 2]> {
        let target = Vector2::new(x0[0], x0[1]);
        let mut x = target;
        for _ in 0..50 {
            let (v, j) = self.velocity([x.x, x.y]);
            let r = x - v * s - target;
            if r.norm() < 1e-15 {
                break;
            }
            let step = (Matrix2::identity() - j * s)
                .try_inverse()
                .ok_or_else(|| Error::singular("motion-field inversion has a singular Jacobian"))?
                * r;
            x -= step;
            if step.norm() < 1e-15 * (1.0 + x.norm()) {
                break;
            }
        }
        let (v, _) = self.velocity([x.x, x.y]);
        if (x - v * s - target).norm() > 1e-10 || !x.iter().all(|c| c.is_finite()) {
            return Err(Error::singular("motion-field inversion did not converge"));
        }
        Ok([x.x, x.y])
    }
}

/// How the scene moves during the window.
#[derive(Debug, Clone, PartialEq)]
pub enum SceneMotion {
    Warp(WarpModel),
    Field(MotionField),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub geometry: CameraGeometry,
    pub motion: SceneMotion,
    pub n_points: usize,
    pub events_per_point: usize,
    /// Standard deviation of the pixel jitter.
    pub noise_px: f64,
    pub seed: u64,
    /// Timestamp of the window start (seconds).
    pub t_start: f64,
    /// Window length (seconds).
    pub duration: f64,
}

impl SceneSpec {
    pub fn new(geometry: CameraGeometry, model: WarpModel) -> Self {
        Self {
            geometry,
            motion: SceneMotion::Warp(model),
            n_points: 2000,
            events_per_point: 15,
            noise_px: 0.0,
            seed: 0,
            t_start: 0.0,
            duration: 1.0,
        }
    }

    pub fn with_field(geometry: CameraGeometry, field: MotionField, duration: f64) -> Self {
        Self {
            motion: SceneMotion::Field(field),
            duration,
            ..Self::new(geometry, WarpModel::identity(crate::warp::WarpKind::Zoom1DOF))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 || self.events_per_point == 0 {
            return Err(Error::invalid("scene needs at least one point and one event per point"));
        }
        if !(self.noise_px >= 0.0) || !self.noise_px.is_finite() {
            return Err(Error::invalid("noise must be finite and >= 0"));
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() || !self.t_start.is_finite() {
            return Err(Error::invalid("window duration must be positive"));
        }
        if let SceneMotion::Field(f) = &self.motion {
            if !(f.depth > 0.0) {
                return Err(Error::invalid("scene depth must be positive"));
            }
        }
        Ok(())
    }

    /// Position at normalized time `u` of the point that sits at `x0` at
    /// the window start.
    pub fn position(&self, x0: [f64; 2], u: f64) -> Result<[f64; 2]> {
        match &self.motion {
            SceneMotion::Warp(m) => trajectory_point(m, &self.geometry, x0, u),
            SceneMotion::Field(f) => {
                let c = f.position(self.geometry.to_calibrated(x0), u * self.duration)?;
                Ok(self.geometry.from_calibrated(c))
            }
        }
    }
}

/// Where each generated event came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventSource {
    pub point: usize,
    /// Reference-time position of the point.
    pub anchor: [f64; 2],
    /// Generation time in [0, 1].
    pub t_norm: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub window: EventWindow,
    /// Per-pixel displacement over the whole window.
    pub ground_truth: GroundTruthFlow,
    /// Aligned with `window.events()`.
    pub sources: Vec<EventSource>,
}

/// Generates the window, its ground-truth flow and per-event provenance.
///
/// The point whose anchor lies closest to the principal point fires its
/// first two events at exactly `u = 0` and `u = 1`, so the window span
/// matches the generation interval whenever those events stay on the
/// sensor.
pub fn generate(spec: &SceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let g = &spec.geometry;
    let noise = Normal::new(0.0, spec.noise_px).map_err(|e| Error::invalid(e.to_string()))?;

    let anchors: Vec<[f64; 2]> = (0..spec.n_points)
        .map(|i| sample_anchor(&mut point_rng(spec.seed, i), g))
        .collect();
    let pinned = anchors
        .iter()
        .enumerate()
        .min_by(|a, b| {
            let d = |p: &[f64; 2]| (p[0] - g.cx).hypot(p[1] - g.cy);
            d(a.1).total_cmp(&d(b.1))
        })
        .map(|(i, _)| i)
        .unwrap_or(0);

    let per_point: Vec<Vec<(Event, EventSource)>> = (0..spec.n_points)
        .into_par_iter()
        .map(|i| {
            let mut rng = point_rng(spec.seed, i);
            let anchor = sample_anchor(&mut rng, g);
            let mut times: Vec<f64> = (0..spec.events_per_point).map(|_| rng.random::<f64>()).collect();
            if i == pinned {
                times[0] = 0.0;
                if times.len() > 1 {
                    times[1] = 1.0;
                }
            }
            times.sort_by(f64::total_cmp);
            let mut out = Vec::with_capacity(times.len());
            for &u in &times {
                let p = spec.position(anchor, u)?;
                let (jx, jy) = if spec.noise_px > 0.0 {
                    (noise.sample(&mut rng), noise.sample(&mut rng))
                } else {
                    (0.0, 0.0)
                };
                let (x, y) = (p[0] + jx, p[1] + jy);
                if !g.contains(x, y) {
                    continue;
                }
                let polarity = if (i + out.len()) % 2 == 0 {
                    Polarity::Positive
                } else {
                    Polarity::Negative
                };
                out.push((
                    Event::new(spec.t_start + u * spec.duration, x, y, polarity),
                    EventSource {
                        point: i,
                        anchor,
                        t_norm: u,
                    },
                ));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut pairs: Vec<(Event, EventSource)> = per_point.into_iter().flatten().collect();
    if pairs.is_empty() {
        return Err(Error::SceneLeftFrame);
    }
    pairs.sort_by(|a, b| a.0.t.total_cmp(&b.0.t));
    let (events, sources): (Vec<Event>, Vec<EventSource>) = pairs.into_iter().unzip();
    let window = EventWindow::new(events)?;
    Ok(SyntheticScene {
        window,
        ground_truth: ground_truth(spec)?,
        sources,
    })
}

fn sample_anchor(rng: &mut ChaCha8Rng, g: &CameraGeometry) -> [f64; 2] {
    [
        rng.random_range(-0.5..g.width as f64 - 0.5),
        rng.random_range(-0.5..g.height as f64 - 0.5),
    ]
}

fn point_rng(seed: u64, point: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(point as u64);
    rng
}

/// `x(1) - x(0)` at every pixel; pixels whose trajectory is singular are
/// marked invalid.
pub fn ground_truth(spec: &SceneSpec) -> Result<GroundTruthFlow> {
    let g = &spec.geometry;
    let (vectors, valid): (Vec<[f64; 2]>, Vec<bool>) = (0..g.num_pixels())
        .into_par_iter()
        .map(|i| {
            let p = [(i % g.width) as f64, (i / g.width) as f64];
            match spec.position(p, 1.0) {
                Ok(q) => ([q[0] - p[0], q[1] - p[1]], true),
                Err(_) => ([0.0, 0.0], false),
            }
        })
        .unzip();
    GroundTruthFlow::new(g.width, g.height, vectors, valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iwe::{build_iwe, objective_value, Objective, ObjectiveKind};
    use crate::regularizer::reg_zoom_1dof;
    use crate::warp::{displacement_field, warp_event, WarpKind};
    use crate::optimizer::COLLAPSE_THRESHOLD;

    fn geometry() -> CameraGeometry {
        CameraGeometry::centered(64, 48, 60.0).unwrap()
    }

    #[test]
    fn identity_scene_stacks_events() {
        let spec = SceneSpec {
            n_points: 1,
            events_per_point: 9,
            ..SceneSpec::new(geometry(), WarpModel::identity(WarpKind::Translation2D))
        };
        let s = generate(&spec).unwrap();
        assert_eq!(s.window.len(), 9);
        let first = s.window.events()[0].position();
        assert!(s.window.events().iter().all(|e| e.position() == first));
        let iwe = build_iwe(&s.window, &WarpModel::identity(WarpKind::Translation2D), &spec.geometry, ObjectiveKind { objective: Objective::Variance, use_polarity: false }).unwrap();
        assert!((iwe.total_mass - 9.0).abs() < 1e-9);
    }

    #[test]
    fn zoom_scene_warps_back_to_anchors() {
        let model = WarpModel::zoom(0.6).unwrap();
        let spec = SceneSpec {
            n_points: 300,
            seed: 4,
            ..SceneSpec::new(geometry(), model.clone())
        };
        let s = generate(&spec).unwrap();
        assert_eq!(s.sources.len(), s.window.len());
        let (t0, t1) = (s.window.t_first(), s.window.t_last());
        assert_eq!((t0, t1), (0.0, 1.0));
        for (e, src) in s.window.events().iter().zip(&s.sources) {
            let u = s.window.normalize_time(e.t).unwrap();
            assert!((u - src.t_norm).abs() < 1e-15);
            let back = warp_event(&model, &spec.geometry, e.position(), u).unwrap();
            assert!((back[0] - src.anchor[0]).abs() < 1e-9 && (back[1] - src.anchor[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let spec = SceneSpec {
            n_points: 200,
            noise_px: 0.5,
            seed: 7,
            ..SceneSpec::new(geometry(), WarpModel::zoom(0.4).unwrap())
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.window, b.window);
        let c = generate(&SceneSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a.window, c.window);
    }

    #[test]
    fn ground_truth_matches_displacement_field() {
        for model in [
            WarpModel::translation(4.0, -2.0).unwrap(),
            WarpModel::zoom(0.3).unwrap(),
            WarpModel::rotation([0.05, -0.1, 0.2]).unwrap(),
        ] {
            let spec = SceneSpec::new(geometry(), model.clone());
            let gt = ground_truth(&spec).unwrap();
            let d = displacement_field(&model, &spec.geometry).unwrap();
            assert!(gt.valid.iter().all(|v| *v));
            for (a, b) in gt.vectors.iter().zip(&d.vectors) {
                assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn looming_field_equals_zoom_trajectory() {
        // v_z / Z = 2 1/s over 0.1 s is a zoom rate of 0.2 per window.
        let g = geometry();
        let spec = SceneSpec::with_field(g, MotionField::looming(2.0), 0.1);
        let zoom = WarpModel::zoom(0.2).unwrap();
        for (p, u) in [([3.0, 4.0], 0.5), ([60.0, 1.0], 1.0), ([31.5, 23.5], 0.7)] {
            let a = spec.position(p, u).unwrap();
            let b = trajectory_point(&zoom, &g, p, u).unwrap();
            assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn general_field_inverts_the_linear_warp() {
        let f = MotionField {
            linear: [0.3, -0.1, 0.8],
            angular: [0.2, -0.4, 1.0],
            depth: 2.5,
        };
        let x0 = [0.2, -0.15];
        let s = 0.3;
        let x = f.position(x0, s).unwrap();
        let (v, _) = f.velocity(x);
        assert!((x[0] - v.x * s - x0[0]).abs() < 1e-12);
        assert!((x[1] - v.y * s - x0[1]).abs() < 1e-12);
        // Jacobian against central differences.
        let h = 1e-6;
        let (_, j) = f.velocity(x);
        for d in 0..2 {
            let mut a = x;
            let mut b = x;
            a[d] += h;
            b[d] -= h;
            let (va, _) = f.velocity(a);
            let (vb, _) = f.velocity(b);
            let col = (va - vb) / (2.0 * h);
            assert!((col - j.column(d)).norm() < 1e-8);
        }
    }

    #[test]
    fn scene_leaving_frame_is_an_error() {
        let spec = SceneSpec {
            n_points: 5,
            events_per_point: 3,
            noise_px: 1e4,
            ..SceneSpec::new(geometry(), WarpModel::zoom(0.2).unwrap())
        };
        assert!(matches!(generate(&spec), Err(Error::SceneLeftFrame)));
        let bad = SceneSpec {
            n_points: 0,
            ..spec
        };
        assert!(generate(&bad).is_err());
    }

    #[test]
    fn zero_noise_truth_is_sharpest_outside_collapse() {
        // Sparse scene: splats of distinct points rarely overlap.
        let g = geometry();
        let spec = SceneSpec {
            n_points: 100,
            events_per_point: 15,
            seed: 2,
            ..SceneSpec::new(g, WarpModel::zoom(0.6).unwrap())
        };
        let s = generate(&spec).unwrap();
        let kind = ObjectiveKind::variance();
        let g_at = |h: f64| objective_value(&build_iwe(&s.window, &WarpModel::zoom(h).unwrap(), &g, kind).unwrap(), Objective::Variance);
        let truth = g_at(0.6);
        for i in 0..100 {
            let h = -2.0 + 2.99 * i as f64 / 99.0;
            if reg_zoom_1dof(h).unwrap() > COLLAPSE_THRESHOLD {
                continue;
            }
            assert!(truth >= g_at(h), "G({h}) exceeds G(0.6)");
        }
    }

    #[test]
    fn polarity_alternates_within_a_point() {
        let spec = SceneSpec {
            n_points: 1,
            events_per_point: 6,
            ..SceneSpec::new(geometry(), WarpModel::translation(1.0, 0.0).unwrap())
        };
        let s = generate(&spec).unwrap();
        let signs: Vec<f64> = s.window.events().iter().map(|e| e.polarity.sign()).collect();
        assert!(signs.windows(2).all(|w| w[0] == -w[1]));
    }
}
