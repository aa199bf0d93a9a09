//! Bounded derivative-free minimization of `-G(theta) + lambda * R(theta)`.
//!
//! A shifted Halton design samples the parameter box, then a Nelder-Mead
//! simplex clamped to the box refines the best sample. Sample evaluations
//! run on the rayon pool; results are collected in design order, so the
//! report does not depend on the thread count.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::event::{CameraGeometry, EventWindow};
use crate::iwe::{build_iwe, objective_value, Objective, ObjectiveKind};
use crate::regularizer::{peak_contraction, regularizer_value, RegularizerConfig};
use crate::warp::{WarpKind, WarpModel};

/// Peak per-pixel contraction above which a solution is flagged collapsed.
pub const COLLAPSE_THRESHOLD: f64 = 5.0;

/// Fraction of the budget spent on the space-filling design.
const SAMPLE_FRACTION: f64 = 0.6;

const HALTON_PRIMES: [u32; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

pub fn default_lambda(objective: Objective) -> f64 {
    match objective {
        Objective::Variance => 1.0,
        Objective::GradientMagnitude => 0.2,
    }
}

pub fn default_budget(kind: WarpKind) -> usize {
    (100 * kind.dof()).max(500)
}

/// Per-DOF search box. `window_seconds` converts angular-rate limits into
/// per-window angles.
pub fn default_bounds(kind: WarpKind, window_seconds: f64) -> Vec<[f64; 2]> {
    let shift = [-300.0, 300.0];
    let scale = [-2.0, 0.99];
    let spin = [-10.0 * window_seconds, 10.0 * window_seconds];
    match kind {
        WarpKind::Translation2D => vec![shift; 2],
        WarpKind::Zoom1DOF => vec![scale],
        WarpKind::Rotation3DOF => vec![spin; 3],
        WarpKind::Similarity4DOF => vec![shift, shift, spin, scale],
        WarpKind::Affine6DOF => vec![[-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0], shift, shift],
        WarpKind::Homography8DOF => vec![[-1.0, 1.0]; 8],
    }
}

/// One estimation problem over a window.
#[derive(Debug, Clone)]
pub struct CompositeProblem<'a> {
    pub window: &'a EventWindow,
    pub geometry: CameraGeometry,
    pub kind: WarpKind,
    pub bounds: Vec<[f64; 2]>,
    pub objective: ObjectiveKind,
    pub regularizer: RegularizerConfig,
    pub lambda: f64,
}

impl<'a> CompositeProblem<'a> {
    /// Problem with default bounds and the default weight for `objective`.
    pub fn new(
        window: &'a EventWindow,
        geometry: CameraGeometry,
        kind: WarpKind,
        objective: ObjectiveKind,
        regularizer: RegularizerConfig,
    ) -> Self {
        Self {
            window,
            geometry,
            kind,
            bounds: default_bounds(kind, window.duration()),
            objective,
            regularizer,
            lambda: default_lambda(objective.objective),
        }
    }

    pub fn with_bounds(mut self, bounds: Vec<[f64; 2]>) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        validate_bounds(&self.bounds, self.kind.dof())?;
        if self.kind == WarpKind::Zoom1DOF && self.bounds[0][1] >= 1.0 {
            return Err(Error::invalid("zoom upper bound must be below 1"));
        }
        if self.kind == WarpKind::Similarity4DOF && self.bounds[3][1] >= 1.0 {
            return Err(Error::invalid("similarity scale upper bound must be below 1"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid("lambda must be finite and >= 0"));
        }
        self.regularizer.validate()
    }

    pub fn within_bounds(&self, theta: &[f64]) -> bool {
        theta.len() == self.bounds.len()
            && theta.iter().zip(&self.bounds).all(|(v, b)| *v >= b[0] && *v <= b[1])
    }
}

fn validate_bounds(bounds: &[[f64; 2]], dof: usize) -> Result<()> {
    if bounds.len() != dof {
        return Err(Error::DimensionMismatch {
            expected: format!("{dof} bounds"),
            actual: format!("{} bounds", bounds.len()),
        });
    }
    for (i, b) in bounds.iter().enumerate() {
        if !b[0].is_finite() || !b[1].is_finite() || b[0] > b[1] {
            return Err(Error::invalid(format!("bound {i} is not a finite interval")));
        }
    }
    Ok(())
}

/// The three terms of one composite evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeTerms {
    pub neg_g: f64,
    pub reg: f64,
    pub composite: f64,
}

/// Evaluates `-G`, `R` and their weighted sum; singular warps are errors.
pub fn composite_terms(problem: &CompositeProblem<'_>, theta: &[f64]) -> Result<CompositeTerms> {
    let model = WarpModel::new(problem.kind, theta)?;
    let iwe = build_iwe(problem.window, &model, &problem.geometry, problem.objective)?;
    let neg_g = -objective_value(&iwe, problem.objective.objective);
    let reg = if problem.lambda == 0.0 {
        0.0
    } else {
        regularizer_value(problem.window, &model, &problem.geometry, &problem.regularizer)?
    };
    Ok(CompositeTerms {
        neg_g,
        reg,
        composite: neg_g + problem.lambda * reg,
    })
}

/// Composite objective; infeasible (singular) parameters score `+inf`.
pub fn composite_value(problem: &CompositeProblem<'_>, theta: &[f64]) -> f64 {
    match composite_terms(problem, theta) {
        Ok(t) if t.composite.is_finite() => t.composite,
        _ => f64::INFINITY,
    }
}

/// Result of [`minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub theta: Vec<f64>,
    pub value: f64,
    /// `(evaluation index, value)` for every evaluation, in order.
    pub trace: Vec<(usize, f64)>,
    pub evaluations: usize,
}

/// Minimizes `f` over a box with at most `budget` evaluations.
pub fn minimize<F>(f: F, bounds: &[[f64; 2]], budget: usize, seed: u64) -> Result<Minimum>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = bounds.len();
    validate_bounds(bounds, dim)?;
    if dim == 0 {
        return Err(Error::invalid("no parameters to optimize"));
    }
    if budget < 10 * dim {
        return Err(Error::invalid(format!(
            "budget {budget} below the minimum of {} evaluations",
            10 * dim
        )));
    }
    let n_samples = ((budget as f64 * SAMPLE_FRACTION) as usize).max(dim + 1);
    let design = halton_design(bounds, n_samples, seed);
    let values: Vec<f64> = design.par_iter().map(|p| sanitize(f(p))).collect();
    let mut trace: Vec<(usize, f64)> = values.iter().copied().enumerate().collect();

    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    if !values[best].is_finite() {
        return Err(Error::Infeasible);
    }

    let mut eval = |x: &[f64]| {
        let v = sanitize(f(x));
        trace.push((trace.len(), v));
        v
    };
    let (theta, value) = nelder_mead(&mut eval, &design[best], values[best], bounds, budget - n_samples);
    let evaluations = trace.len();
    Ok(Minimum {
        theta,
        value,
        trace,
        evaluations,
    })
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Halton points with a seeded Cranley-Patterson rotation; the first point
/// is the box center.
fn halton_design(bounds: &[[f64; 2]], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = bounds.iter().map(|_| rng.random::<f64>()).collect();
    let mut out = Vec::with_capacity(n);
    out.push(bounds.iter().map(|b| 0.5 * (b[0] + b[1])).collect());
    for i in 1..n {
        out.push(
            bounds
                .iter()
                .enumerate()
                .map(|(d, b)| {
                    let prime = HALTON_PRIMES[d % HALTON_PRIMES.len()] as u64;
                    let u = (radical_inverse(i as u64, prime) + shift[d]).fract();
                    b[0] + u * (b[1] - b[0])
                })
                .collect(),
        );
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

fn clamp_to(bounds: &[[f64; 2]], x: &mut [f64]) {
    for (v, b) in x.iter_mut().zip(bounds) {
        *v = v.clamp(b[0], b[1]);
    }
}

/// Nelder-Mead with points projected onto the box. Restarts from the best
/// vertex whenever the simplex collapses and budget remains.
fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    start: &[f64],
    start_value: f64,
    bounds: &[[f64; 2]],
    budget: usize,
) -> (Vec<f64>, f64) {
    let dim = start.len();
    let mut best = (start.to_vec(), start_value);
    let mut used = 0;
    let mut step_frac = 0.05;
    while used + dim < budget {
        let mut simplex = vec![best.clone()];
        for d in 0..dim {
            let mut x = best.0.clone();
            let span = bounds[d][1] - bounds[d][0];
            let step = step_frac * span;
            x[d] = if x[d] + step <= bounds[d][1] { x[d] + step } else { x[d] - step };
            clamp_to(bounds, &mut x);
            let v = f(&x);
            used += 1;
            simplex.push((x, v));
        }
        let tolerance = 1e-10
            * bounds
                .iter()
                .map(|b| b[1] - b[0])
                .fold(0.0f64, f64::max)
                .max(1e-300);
        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let size = simplex[1..]
                .iter()
                .map(|(x, _)| {
                    x.iter()
                        .zip(&simplex[0].0)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if used >= budget || size < tolerance {
                break;
            }
            let worst = simplex[dim].clone();
            let centroid: Vec<f64> = (0..dim)
                .map(|d| simplex[..dim].iter().map(|(x, _)| x[d]).sum::<f64>() / dim as f64)
                .collect();
            let along = |c: f64| {
                let mut x: Vec<f64> = centroid
                    .iter()
                    .zip(&worst.0)
                    .map(|(m, w)| m + c * (m - w))
                    .collect();
                clamp_to(bounds, &mut x);
                x
            };
            let xr = along(1.0);
            let fr = f(&xr);
            used += 1;
            if fr < simplex[0].1 {
                if used >= budget {
                    simplex[dim] = (xr, fr);
                    continue;
                }
                let xe = along(2.0);
                let fe = f(&xe);
                used += 1;
                simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[dim - 1].1 {
                simplex[dim] = (xr, fr);
            } else {
                if used >= budget {
                    continue;
                }
                let (xc, fc) = if fr < worst.1 {
                    let x = along(0.5);
                    let v = f(&x);
                    (x, v)
                } else {
                    let x = along(-0.5);
                    let v = f(&x);
                    (x, v)
                };
                used += 1;
                if fc < fr.min(worst.1) {
                    simplex[dim] = (xc, fc);
                } else {
                    let anchor = simplex[0].0.clone();
                    for vertex in simplex.iter_mut().skip(1) {
                        if used >= budget {
                            break;
                        }
                        let mut x: Vec<f64> = anchor
                            .iter()
                            .zip(&vertex.0)
                            .map(|(a, v)| a + 0.5 * (v - a))
                            .collect();
                        clamp_to(bounds, &mut x);
                        let v = f(&x);
                        used += 1;
                        *vertex = (x, v);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let improved = simplex[0].1 < best.1;
        if improved {
            best = simplex[0].clone();
        }
        if !improved {
            step_frac *= 0.1;
            if step_frac < 1e-9 {
                break;
            }
        }
    }
    best
}

/// Outcome of [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub theta_hat: Vec<f64>,
    pub value: f64,
    pub objective_trace: Vec<(usize, f64)>,
    pub evaluations: usize,
    pub wall_time: f64,
    /// Peak per-pixel contraction of the solution exceeds
    /// [`COLLAPSE_THRESHOLD`]. Diagnostic only.
    pub collapsed: bool,
}

impl SolveReport {
    /// Flat `key = value` record.
    pub fn to_key_values(&self) -> String {
        let theta: Vec<String> = self.theta_hat.iter().map(|v| format!("{v:.17e}")).collect();
        format!(
            "theta_hat = {}\nvalue = {:.17e}\nevaluations = {}\nwall_time = {:.6}\ncollapsed = {}\n",
            theta.join(" "),
            self.value,
            self.evaluations,
            self.wall_time,
            self.collapsed
        )
    }
}

/// Solves the problem with `budget` composite evaluations.
pub fn solve(problem: &CompositeProblem<'_>, budget: usize, seed: u64) -> Result<SolveReport> {
    problem.validate()?;
    let started = Instant::now();
    let found = minimize(|theta| composite_value(problem, theta), &problem.bounds, budget, seed)?;
    let model = WarpModel::new(problem.kind, &found.theta)?;
    let collapsed = peak_contraction(&model, &problem.geometry, 4)? > COLLAPSE_THRESHOLD;
    Ok(SolveReport {
        theta_hat: found.theta,
        value: found.value,
        objective_trace: found.trace,
        evaluations: found.evaluations,
        wall_time: started.elapsed().as_secs_f64(),
        collapsed,
    })
}

/// One row of a landscape sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub theta: f64,
    pub neg_g: f64,
    pub reg: f64,
    pub composite: f64,
}

/// Evaluates the composite on a uniform grid along one axis of the box,
/// holding the other parameters at `base`. The regularizer column is
/// always evaluated, even when lambda is zero.
pub fn landscape_sweep(
    problem: &CompositeProblem<'_>,
    axis: usize,
    grid: usize,
    base: &[f64],
) -> Result<Vec<SweepRow>> {
    validate_bounds(&problem.bounds, problem.kind.dof())?;
    if grid < 2 {
        return Err(Error::invalid("sweep grid needs at least 2 points"));
    }
    if axis >= problem.kind.dof() || base.len() != problem.kind.dof() {
        return Err(Error::DimensionMismatch {
            expected: format!("axis < {0} and {0} base values", problem.kind.dof()),
            actual: format!("axis {axis}, {} base values", base.len()),
        });
    }
    let [lo, hi] = problem.bounds[axis];
    let probe = CompositeProblem {
        lambda: 1.0,
        ..problem.clone()
    };
    Ok((0..grid)
        .into_par_iter()
        .map(|i| {
            let u = i as f64 / (grid - 1) as f64;
            let v = lo * (1.0 - u) + hi * u;
            let mut theta = base.to_vec();
            theta[axis] = v;
            match composite_terms(&probe, &theta) {
                Ok(t) => SweepRow {
                    theta: v,
                    neg_g: t.neg_g,
                    reg: t.reg,
                    composite: t.neg_g + problem.lambda * t.reg,
                },
                Err(_) => SweepRow {
                    theta: v,
                    neg_g: f64::NAN,
                    reg: f64::INFINITY,
                    composite: f64::INFINITY,
                },
            }
        })
        .collect())
}
