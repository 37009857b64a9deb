//! Fixtures shared by the benchmarks.

use threewave_core::integrator::{IntegratorError, StepControl, Stepper};
use threewave_core::{build_initial, FullState, IntegratorKind, ModelConfig};

/// Default initial data on `n_dir` directions, advanced to `t` so the
/// support has filled the working grid.
pub fn developed_state(n_dir: usize, rho_max: u32, t: f64) -> Result<FullState, IntegratorError> {
    let config = ModelConfig {
        n_dir,
        rho_max,
        ..Default::default()
    };
    let initial = build_initial(&config)?;
    let mut s = Stepper::new(&initial)?;
    s.advance_to(
        t,
        IntegratorKind::Rk4,
        &StepControl::from_config(&config),
        None,
    )?;
    Ok(s.to_state())
}
