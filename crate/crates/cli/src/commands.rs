//! The five sub-commands and the artifacts they write.

use std::fs;
use std::path::{Path, PathBuf};

use cmaxreg::io::{load_events, load_ground_truth, write_csv, write_events, write_ground_truth, write_pgm};
use cmaxreg::optimizer::{composite_terms, default_bounds};
use cmaxreg::synth::ground_truth;
use cmaxreg::{
    aee_npe, build_iwe, displacement_field, fwl, generate, landscape_sweep, rate_map,
    rms_angular_velocity, solve, time_to_contact, CompositeProblem, Error, EventWindow,
    GroundTruthFlow, MetricsReport, MotionField, Objective, ObjectiveKind, RegularizerKind,
    SceneSpec, WarpKind, WarpModel,
};

use crate::bench::{run_bench, BenchCell, BenchPlan};
use crate::config::{Command, ConfigMap, RunConfig, Slicing, SynthMotion};
use crate::error::CliError;

pub const REPORT_HEADER: &str =
    "window,t_first,t_last,events,status,theta,value,neg_g,reg,fwl,collapsed,evaluations,wall_time";

/// Resolves the configuration and runs `command`, on a pool of
/// `threads` workers when that key is positive.
pub fn run(command: Command, map: ConfigMap) -> Result<(), CliError> {
    let config = RunConfig::resolve(command, map)?;
    if config.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?;
        pool.install(|| dispatch(&config))
    } else {
        dispatch(&config)
    }
}

fn dispatch(config: &RunConfig) -> Result<(), CliError> {
    match config.command {
        Command::Estimate | Command::Ttc => cmd_estimate(config),
        Command::Sweep => cmd_sweep(config),
        Command::Bench => cmd_bench(config),
        Command::Synth => cmd_synth(config),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Data(Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn prepare_output(config: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&config.output).map_err(|e| io_err(&config.output, e))?;
    let path = config.output.join("manifest.txt");
    fs::write(&path, config.manifest()).map_err(|e| io_err(&path, e))
}

fn out(config: &RunConfig, name: &str) -> PathBuf {
    config.output.join(name)
}

fn input_windows(config: &RunConfig) -> Result<Vec<EventWindow>, CliError> {
    let path = config
        .input
        .as_ref()
        .ok_or_else(|| CliError::Config("missing required key 'input'".into()))?;
    let loaded = load_events(path, &config.geometry)?;
    if loaded.rejected > 0 {
        eprintln!("warning: {} out-of-bounds events rejected", loaded.rejected);
    }
    if loaded.window.was_resorted() {
        eprintln!("warning: input timestamps were not sorted; events were sorted");
    }
    Ok(match config.slicing {
        Slicing::Events(n) => loaded.window.slice_by_count(n)?,
        Slicing::Duration(d) => loaded.window.slice_by_duration(d)?,
    })
}

fn problem<'a>(config: &RunConfig, window: &'a EventWindow) -> CompositeProblem<'a> {
    CompositeProblem {
        window,
        geometry: config.geometry,
        kind: config.model,
        bounds: config
            .bounds
            .clone()
            .unwrap_or_else(|| default_bounds(config.model, window.duration())),
        objective: config.objective,
        regularizer: config.regularizer,
        lambda: config.lambda,
    }
}

fn fmt_theta(theta: &[f64]) -> String {
    theta.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" ")
}

fn csv_safe(message: &str) -> String {
    message.replace([',', '\n'], ";")
}

/// Per-window estimation; `ttc` additionally converts the zoom rate into
/// seconds to contact.
pub fn cmd_estimate(config: &RunConfig) -> Result<(), CliError> {
    let windows = input_windows(config)?;
    let gt = config.ground_truth.as_deref().map(load_ground_truth).transpose()?;
    let reference = config
        .omega_reference
        .as_deref()
        .map(load_omega_reference)
        .transpose()?;
    prepare_output(config)?;

    let ttc = config.command == Command::Ttc;
    let mut header = REPORT_HEADER.to_string();
    if ttc {
        header.push_str(",ttc");
    }
    let mut rows = Vec::with_capacity(windows.len());
    let mut metric_rows = Vec::new();
    let mut estimates = Vec::new();
    let mut failures = 0;
    for (w, window) in windows.iter().enumerate() {
        let prefix = format!("{w},{},{},{}", window.t_first(), window.t_last(), window.len());
        match solve_window(config, w, window, gt.as_ref(), reference.as_deref()) {
            Ok(s) => {
                let mut row = format!(
                    "{prefix},ok,{},{},{},{},{},{},{},{:.6}",
                    fmt_theta(&s.theta),
                    s.value,
                    s.neg_g,
                    s.reg,
                    s.metrics.fwl.map(|v| v.to_string()).unwrap_or_default(),
                    s.collapsed,
                    s.evaluations,
                    s.wall_time
                );
                if ttc {
                    row.push(',');
                    row.push_str(&s.metrics.ttc.map(|v| v.to_string()).unwrap_or_default());
                }
                rows.push(row);
                metric_rows.push(format!("{w},{}", s.metrics.csv_row()));
                if config.model == WarpKind::Rotation3DOF {
                    estimates.push((window.t_mid(), rate_per_second(&s.theta, window.duration())));
                }
            }
            Err(e) => {
                failures += 1;
                let blanks = ",".repeat(header.matches(',').count() - 4);
                rows.push(format!("{prefix},failed: {}{blanks}", csv_safe(&e.to_string())));
            }
        }
    }
    if let Some(reference) = &reference {
        if !estimates.is_empty() {
            let total = rms_angular_velocity(&estimates, reference)?;
            if total.skipped > 0 {
                eprintln!("warning: {} windows outside the angular-velocity reference", total.skipped);
            }
            let overall = MetricsReport {
                rms_angular: Some(total.rms).filter(|v| v.is_finite()),
                ..Default::default()
            };
            metric_rows.push(format!("all,{}", overall.csv_row()));
        }
    }
    write_csv(&out(config, "report.csv"), &header, &rows)?;
    write_csv(
        &out(config, "metrics.csv"),
        &format!("window,{}", MetricsReport::CSV_HEADER),
        &metric_rows,
    )?;
    if failures == windows.len() {
        return Err(CliError::AllWindowsFailed(failures));
    }
    Ok(())
}

struct WindowSolution {
    theta: Vec<f64>,
    value: f64,
    neg_g: f64,
    reg: f64,
    collapsed: bool,
    evaluations: usize,
    wall_time: f64,
    metrics: MetricsReport,
}

fn rate_per_second(theta: &[f64], duration: f64) -> [f64; 3] {
    let d = if duration > 0.0 { duration } else { 1.0 };
    [theta[0] / d, theta[1] / d, theta[2] / d]
}

fn solve_window(
    config: &RunConfig,
    index: usize,
    window: &EventWindow,
    gt: Option<&GroundTruthFlow>,
    reference: Option<&[(f64, [f64; 3])]>,
) -> Result<WindowSolution, CliError> {
    let problem = problem(config, window);
    let report = solve(&problem, config.budget, config.seed).map_err(|e| match e {
        Error::InvalidParameter(m) => CliError::Config(m),
        other => CliError::Data(other),
    })?;
    let terms = composite_terms(&problem, &report.theta_hat)?;
    let model = WarpModel::new(config.model, &report.theta_hat)?;
    let mut metrics = MetricsReport {
        fwl: fwl(window, &model, &config.geometry).ok(),
        ..Default::default()
    };
    if let Some(gt) = gt {
        metrics.endpoint = displacement_field(&model, &config.geometry)
            .and_then(|pred| aee_npe(&pred, gt))
            .map_err(|e| eprintln!("warning: window {index}: no flow metrics ({e})"))
            .ok();
    }
    if let (Some(reference), WarpKind::Rotation3DOF) = (reference, config.model) {
        let one = rms_angular_velocity(
            &[(window.t_mid(), rate_per_second(&report.theta_hat, window.duration()))],
            reference,
        )?;
        metrics.rms_angular = Some(one.rms).filter(|v| v.is_finite());
    }
    if config.command == Command::Ttc {
        metrics.ttc = time_to_contact(report.theta_hat[0], window.duration()).ok();
    }
    if config.images {
        write_window_images(config, index, window, &model)?;
    }
    Ok(WindowSolution {
        theta: report.theta_hat,
        value: report.value,
        neg_g: terms.neg_g,
        reg: terms.reg,
        collapsed: report.collapsed,
        evaluations: report.evaluations,
        wall_time: report.wall_time,
        metrics,
    })
}

fn write_window_images(
    config: &RunConfig,
    index: usize,
    window: &EventWindow,
    model: &WarpModel,
) -> Result<(), CliError> {
    let g = &config.geometry;
    let kind = ObjectiveKind {
        objective: Objective::Variance,
        use_polarity: config.objective.use_polarity,
    };
    for (tag, m) in [("identity", WarpModel::identity(model.kind())), ("solved", model.clone())] {
        let iwe = build_iwe(window, &m, g, kind)?;
        write_pgm(&out(config, &format!("iwe_{index}_{tag}.pgm")), iwe.width, iwe.height, &iwe.values)?;
    }
    let map = rate_map(model, g, config.regularizer.stride)?;
    write_pgm(
        &out(config, &format!("defmap_{index}.pgm")),
        map.grid_width,
        map.grid_height,
        &map.values,
    )?;
    Ok(())
}

/// Reference angular velocity file: `t wx wy wz` per line, rad/s.
pub fn load_omega_reference(path: &Path) -> Result<Vec<(f64, [f64; 3])>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("invalid reference line '{line}'"),
            })?;
        if v.len() != 4 {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected 't wx wy wz'".into(),
            }
            .into());
        }
        out.push((v[0], [v[1], v[2], v[3]]));
    }
    Ok(out)
}

/// Landscape along one parameter axis of one window.
pub fn cmd_sweep(config: &RunConfig) -> Result<(), CliError> {
    let windows = input_windows(config)?;
    let window = windows.get(config.sweep.window).ok_or_else(|| {
        CliError::Config(format!(
            "sweep_window {} out of range ({} windows)",
            config.sweep.window,
            windows.len()
        ))
    })?;
    let dof = config.model.dof();
    let base = match (&config.sweep.base, &config.theta) {
        (Some(b), _) | (None, Some(b)) => b.clone(),
        (None, None) => vec![0.0; dof],
    };
    if base.len() != dof {
        return Err(CliError::Config(format!("sweep_base needs {dof} values")));
    }
    prepare_output(config)?;
    let rows = landscape_sweep(&problem(config, window), config.sweep.axis, config.sweep.grid, &base)?;
    let lines: Vec<String> = rows
        .iter()
        .map(|r| format!("{},{},{},{}", r.theta, r.neg_g, r.reg, r.composite))
        .collect();
    write_csv(&out(config, "sweep.csv"), "theta,neg_G,R,composite", &lines)?;
    let (w, h, img) = render_curves(&[
        rows.iter().map(|r| r.reg).collect(),
        rows.iter().map(|r| r.composite).collect(),
    ]);
    write_pgm(&out(config, "sweep.pgm"), w, h, &img)?;
    Ok(())
}

/// Plots each series as a polyline of its own gray level on a black
/// background, each scaled to its own finite range.
fn render_curves(series: &[Vec<f64>]) -> (usize, usize, Vec<f64>) {
    let (w, h) = (512usize, 256usize);
    let mut img = vec![0.0; w * h];
    for (s, values) in series.iter().enumerate() {
        let level = (s + 1) as f64 / series.len() as f64;
        let finite = values.iter().copied().filter(|v| v.is_finite());
        let lo = finite.clone().fold(f64::INFINITY, f64::min);
        let hi = finite.fold(f64::NEG_INFINITY, f64::max);
        if !(hi >= lo) || values.len() < 2 {
            continue;
        }
        let span = if hi > lo { hi - lo } else { 1.0 };
        let to_row = |v: f64| ((1.0 - (v - lo) / span) * (h - 1) as f64).round() as usize;
        let mut prev: Option<(usize, usize)> = None;
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                prev = None;
                continue;
            }
            let x = i * (w - 1) / (values.len() - 1);
            let y = to_row(v);
            if let Some((px, py)) = prev {
                let steps = px.abs_diff(x).max(py.abs_diff(y)).max(1);
                for k in 0..=steps {
                    let xi = px as f64 + (x as f64 - px as f64) * k as f64 / steps as f64;
                    let yi = py as f64 + (y as f64 - py as f64) * k as f64 / steps as f64;
                    img[yi.round() as usize * w + xi.round() as usize] = level;
                }
            } else {
                img[y * w + x] = level;
            }
            prev = Some((x, y));
        }
    }
    (w, h, img)
}

/// Runtime table of composite evaluations.
pub fn cmd_bench(config: &RunConfig) -> Result<(), CliError> {
    let path = config
        .input
        .as_ref()
        .ok_or_else(|| CliError::Config("missing required key 'input'".into()))?;
    let all = load_events(path, &config.geometry)?.window;
    let mut windows = Vec::new();
    for &n in &config.bench.events {
        if all.len() < n {
            return Err(CliError::Data(Error::InvalidParameter(format!(
                "bench needs {n} events, input has {}",
                all.len()
            ))));
        }
        windows.push(EventWindow::new(all.events()[..n].to_vec())?);
    }
    let theta = match &config.theta {
        Some(t) => t.clone(),
        None => config
            .bounds
            .clone()
            .unwrap_or_else(|| default_bounds(config.model, windows[0].duration()))
            .iter()
            .map(|b| b[0] + 0.75 * (b[1] - b[0]))
            .collect(),
    };
    let model = WarpModel::new(config.model, &theta).map_err(|e| CliError::Config(e.to_string()))?;
    prepare_output(config)?;
    let mut rows = Vec::new();
    for window in &windows {
        let cells = run_bench(&BenchPlan {
            window,
            geometry: config.geometry,
            model: model.clone(),
            objectives: vec![Objective::Variance, Objective::GradientMagnitude],
            regularizers: RegularizerKind::ALL.to_vec(),
            base: config.regularizer,
            trials: config.bench.trials,
            warmup: config.bench.warmup,
        });
        rows.extend(cells.iter().map(BenchCell::csv_row));
    }
    write_csv(&out(config, "bench.csv"), BenchCell::CSV_HEADER, &rows)?;
    Ok(())
}

/// Writes `events.txt` and `ground_truth.txt` for consecutive synthetic
/// windows of identical motion.
pub fn cmd_synth(config: &RunConfig) -> Result<(), CliError> {
    let s = &config.synth;
    let template = match s.motion {
        SynthMotion::Warp => {
            let theta = config
                .theta
                .as_ref()
                .ok_or_else(|| CliError::Config("synth needs 'theta' for warp motion".into()))?;
            let model = WarpModel::new(config.model, theta).map_err(|e| CliError::Config(e.to_string()))?;
            SceneSpec {
                duration: s.duration,
                ..SceneSpec::new(config.geometry, model)
            }
        }
        SynthMotion::Looming => {
            SceneSpec::with_field(config.geometry, MotionField::looming(s.looming_rate), s.duration)
        }
    };
    let template = SceneSpec {
        n_points: s.points,
        events_per_point: s.events_per_point,
        noise_px: s.noise,
        seed: config.seed,
        ..template
    };
    template.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let mut events = Vec::new();
    for k in 0..s.windows {
        let spec = SceneSpec {
            seed: config.seed.wrapping_add(k as u64),
            t_start: k as f64 * s.duration,
            ..template.clone()
        };
        events.extend_from_slice(generate(&spec)?.window.events());
    }
    let gt = ground_truth(&template)?;
    prepare_output(config)?;
    write_events(&out(config, "events.txt"), &events)?;
    write_ground_truth(&out(config, "ground_truth.txt"), &gt)?;
    Ok(())
}
