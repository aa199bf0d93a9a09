//! Fixtures shared by the composite-evaluation benchmarks.

use cmaxreg::{
    generate, CameraGeometry, EventWindow, Result, SceneSpec, WarpModel,
};

/// Events per scene point in benchmark fixtures.
pub const EVENTS_PER_POINT: usize = 15;

/// A zoom scene on a 240x180 sensor truncated to exactly `n_events`.
pub fn zoom_fixture(n_events: usize, seed: u64) -> Result<(EventWindow, CameraGeometry)> {
    let geometry = CameraGeometry::centered(240, 180, 200.0)?;
    let spec = SceneSpec {
        n_points: n_events.div_ceil(EVENTS_PER_POINT) * 2,
        events_per_point: EVENTS_PER_POINT,
        noise_px: 0.5,
        seed,
        ..SceneSpec::new(geometry, WarpModel::zoom(0.3)?)
    };
    let scene = generate(&spec)?;
    let events = scene.window.events();
    if events.len() < n_events {
        return Err(cmaxreg::Error::InvalidParameter(format!(
            "fixture produced {} events, {n_events} requested",
            events.len()
        )));
    }
    let step = events.len() as f64 / n_events as f64;
    let picked = (0..n_events).map(|i| events[(i as f64 * step) as usize]).collect();
    Ok((EventWindow::new(picked)?, geometry))
}
