//! Single-threaded timing of composite evaluations.

use std::time::Instant;

use cmaxreg::optimizer::default_lambda;
use cmaxreg::{
    composite_value, CameraGeometry, CompositeProblem, EventWindow, Objective, ObjectiveKind,
    RegularizerConfig, RegularizerKind, WarpModel,
};

/// Timing summary for one objective and regularizer pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchCell {
    pub events: usize,
    pub objective: Objective,
    pub regularizer: RegularizerKind,
    pub mean_ms: f64,
    pub sd_ms: f64,
    /// Mean relative to the unregularized cell with the same objective.
    pub ratio: f64,
}

impl BenchCell {
    pub const CSV_HEADER: &'static str = "events,objective,regularizer,mean_ms,sd_ms,ratio";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:.4}",
            self.events, self.objective, self.regularizer, self.mean_ms, self.sd_ms, self.ratio
        )
    }
}

#[derive(Debug, Clone)]
pub struct BenchPlan<'a> {
    pub window: &'a EventWindow,
    pub geometry: CameraGeometry,
    pub model: WarpModel,
    pub objectives: Vec<Objective>,
    pub regularizers: Vec<RegularizerKind>,
    pub base: RegularizerConfig,
    pub trials: usize,
    pub warmup: usize,
}

/// Times every cell of the plan on a one-thread pool. Trials are
/// interleaved across cells so slow drift affects all cells alike.
pub fn run_bench(plan: &BenchPlan<'_>) -> Vec<BenchCell> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("single-thread pool");
    pool.install(|| time_cells(plan))
}

fn time_cells(plan: &BenchPlan<'_>) -> Vec<BenchCell> {
    let mut regularizers = plan.regularizers.clone();
    if !regularizers.contains(&RegularizerKind::None) {
        regularizers.insert(0, RegularizerKind::None);
    }
    let cells: Vec<(Objective, RegularizerKind, CompositeProblem<'_>)> = plan
        .objectives
        .iter()
        .flat_map(|&objective| {
            regularizers.iter().map(move |&kind| {
                let problem = CompositeProblem::new(
                    plan.window,
                    plan.geometry,
                    plan.model.kind(),
                    ObjectiveKind {
                        objective,
                        use_polarity: false,
                    },
                    RegularizerConfig { kind, ..plan.base },
                )
                .with_lambda(default_lambda(objective));
                (objective, kind, problem)
            })
        })
        .collect();
    let theta = plan.model.theta();
    let mut samples = vec![Vec::with_capacity(plan.trials); cells.len()];
    for trial in 0..plan.warmup + plan.trials {
        for (i, (_, _, problem)) in cells.iter().enumerate() {
            let start = Instant::now();
            std::hint::black_box(composite_value(problem, std::hint::black_box(theta)));
            let ms = start.elapsed().as_secs_f64() * 1e3;
            if trial >= plan.warmup {
                samples[i].push(ms);
            }
        }
    }
    let stats: Vec<(f64, f64)> = samples.iter().map(|s| mean_sd(s)).collect();
    cells
        .iter()
        .zip(&stats)
        .map(|((objective, kind, _), &(mean, sd))| {
            let reference = cells
                .iter()
                .zip(&stats)
                .find(|((o, k, _), _)| o == objective && *k == RegularizerKind::None)
                .map(|(_, s)| s.0)
                .unwrap_or(mean);
            BenchCell {
                events: plan.window.len(),
                objective: *objective,
                regularizer: *kind,
                mean_ms: mean,
                sd_ms: sd,
                ratio: mean / reference,
            }
        })
        .collect()
}

/// Mean and sample standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
