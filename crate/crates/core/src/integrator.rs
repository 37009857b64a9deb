//! Time stepping: explicit RK4 with positivity control, a Patankar-type
//! scheme, a Picard fixed point for cross-validation, and full runs.
//!
//! Directions never interact, so every step advances them independently
//! (in parallel) with one shared step size. Between outputs each direction
//! lives on a dense grid at the deepest level present in the initial data.

use std::sync::Arc;

use rayon::prelude::*;

use crate::config::{ConfigError, IntegratorKind, ModelConfig};
use crate::diagnostics::{DiagnosticsRecord, DirectionFunctionals};
use crate::grid::{assemble, DenseRates, DenseShells, GridShape};
use crate::state::{build_initial, weighted_level_sup, FullState, DROP_THRESHOLD};

/// Nodes of the Picard time grid, endpoints included.
pub const PICARD_NODES: usize = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IntegratorError {
    #[error(
        "stiffness: step rejected {rejects} times at t = {time} (dt = {dt:e}, amplitude {worst:e})"
    )]
    Stiffness {
        time: f64,
        dt: f64,
        rejects: u32,
        worst: f64,
    },
    #[error("non-finite amplitude at t = {0}")]
    NonFinite(f64),
    #[error("Picard iteration did not converge after {iterations} sweeps (residual {residual:e})")]
    PicardDivergence { iterations: usize, residual: f64 },
    #[error("state does not fit the working grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub dt_max: f64,
    pub cfl_safety: f64,
    pub positivity_tol: f64,
    pub max_rejects: u32,
}

impl StepControl {
    pub fn from_config(config: &ModelConfig) -> Self {
        StepControl {
            dt_max: config.dt_max,
            cfl_safety: config.cfl_safety,
            positivity_tol: config.positivity_tol,
            max_rejects: config.max_rejects,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub steps: usize,
    pub rejects: usize,
    pub min_dt: f64,
    pub max_dt: f64,
}

/// One direction after a trial step.
struct Candidate {
    amps: Vec<f64>,
    /// condensate, overflow mass, overflow energy, discarded condensate
    scalars: [f64; 4],
    min_amp: f64,
    finite: bool,
}

fn eval(
    shape: &GridShape,
    channel: bool,
    g: &[f64],
    rates: &mut DenseRates,
    k: &mut [f64],
) -> [f64; 4] {
    assemble(shape, g, rates);
    for (n, kn) in k.iter_mut().enumerate() {
        *kn = rates.net(g, n);
    }
    let diag = 2.0 * rates.diagonal_sq;
    let (kept, lost) = if channel { (diag, 0.0) } else { (0.0, diag) };
    [kept, rates.overflow_mass, rates.overflow_energy, lost]
}

fn finish(amps: Vec<f64>, scalars: [f64; 4]) -> Candidate {
    let mut min_amp = f64::INFINITY;
    let mut finite = scalars.iter().all(|s| s.is_finite());
    for &a in &amps {
        finite &= a.is_finite();
        min_amp = min_amp.min(a);
    }
    Candidate {
        amps,
        scalars,
        min_amp,
        finite,
    }
}

fn rk4_trial(shape: &GridShape, channel: bool, d: &DenseShells, dt: f64) -> Candidate {
    let len = shape.len();
    let y = &d.amps;
    let mut rates = DenseRates::zeros(len);
    let mut k = [
        vec![0.0; len],
        vec![0.0; len],
        vec![0.0; len],
        vec![0.0; len],
    ];
    let mut tmp = vec![0.0; len];
    let mut s = [[0.0; 4]; 4];
    s[0] = eval(shape, channel, y, &mut rates, &mut k[0]);
    for stage in 1..4 {
        let h = if stage == 3 { dt } else { 0.5 * dt };
        for ((t, &yn), &kn) in tmp.iter_mut().zip(y).zip(&k[stage - 1]) {
            *t = yn + h * kn;
        }
        let (done, rest) = k.split_at_mut(stage);
        let _ = done;
        s[stage] = eval(shape, channel, &tmp, &mut rates, &mut rest[0]);
    }
    let w = dt / 6.0;
    let amps: Vec<f64> = (0..len)
        .map(|n| y[n] + w * (k[0][n] + 2.0 * k[1][n] + 2.0 * k[2][n] + k[3][n]))
        .collect();
    let base = [d.condensate, d.overflow_mass, d.overflow_energy, 0.0];
    let scalars =
        std::array::from_fn(|i| base[i] + w * (s[0][i] + 2.0 * s[1][i] + 2.0 * s[2][i] + s[3][i]));
    finish(amps, scalars)
}

fn patankar_trial(shape: &GridShape, channel: bool, d: &DenseShells, dt: f64) -> Candidate {
    let len = shape.len();
    let mut rates = DenseRates::zeros(len);
    let mut k = vec![0.0; len];
    let s = eval(shape, channel, &d.amps, &mut rates, &mut k);
    let amps: Vec<f64> = (0..len)
        .map(|n| (d.amps[n] + dt * rates.production[n]) / (1.0 + dt * rates.destruction[n]))
        .collect();
    let base = [d.condensate, d.overflow_mass, d.overflow_energy, 0.0];
    finish(amps, std::array::from_fn(|i| base[i] + dt * s[i]))
}

/// Dense working state of every direction.
#[derive(Debug, Clone)]
pub struct Stepper {
    config: Arc<ModelConfig>,
    shape: GridShape,
    values: Vec<f64>,
    dirs: Vec<DenseShells>,
    time: f64,
    clamped: Vec<f64>,
    discarded: Vec<f64>,
    stats: StepStats,
}

impl Stepper {
    pub fn new(state: &FullState) -> Result<Self, IntegratorError> {
        let config = state.config.clone();
        let level = state
            .directions
            .iter()
            .map(|d| d.max_level())
            .max()
            .unwrap_or(0);
        let shape = GridShape::with_limit(level, &config.r_max)
            .map_err(|e| IntegratorError::Grid(e.to_string()))?;
        let dirs = state
            .directions
            .iter()
            .map(|d| {
                DenseShells::from_state(&shape, d)
                    .ok_or_else(|| IntegratorError::Grid("shell beyond r_max".into()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let n = dirs.len();
        Ok(Stepper {
            values: shape.values(),
            shape,
            dirs,
            time: state.time,
            clamped: vec![0.0; n],
            discarded: vec![0.0; n],
            stats: StepStats {
                min_dt: f64::INFINITY,
                ..Default::default()
            },
            config,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn stats(&self) -> StepStats {
        self.stats
    }

    /// Mass removed or added by clamping and small-amplitude deletion, per direction.
    pub fn clamped_mass(&self) -> &[f64] {
        &self.clamped
    }

    /// Diagonal transfer dropped with the condensate channel off, per direction.
    pub fn discarded_condensate(&self) -> &[f64] {
        &self.discarded
    }

    pub fn to_state(&self) -> FullState {
        FullState {
            directions: self.dirs.iter().map(|d| d.to_state(&self.shape)).collect(),
            time: self.time,
            config: self.config.clone(),
        }
    }

    /// Largest loss rate per unit amplitude, `max_j (4·mass_j + 2·max_amp_j)`.
    pub fn stiffness(&self) -> f64 {
        self.dirs
            .iter()
            .map(|d| 4.0 * d.positive_mass() + 2.0 * d.max_amplitude())
            .fold(0.0, f64::max)
    }

    pub fn stable_dt(&self, ctl: &StepControl) -> f64 {
        let lambda = self.stiffness();
        if lambda > 0.0 {
            ctl.dt_max.min(ctl.cfl_safety / lambda)
        } else {
            ctl.dt_max
        }
    }

    /// One accepted step towards `target`, landing on it exactly when the
    /// stable step reaches it. The distance to `target` is split into equal
    /// steps no longer than the stable one. Returns the step size taken.
    pub fn step(
        &mut self,
        kind: IntegratorKind,
        ctl: &StepControl,
        target: f64,
    ) -> Result<f64, IntegratorError> {
        let remaining = target - self.time;
        let stable = self.stable_dt(ctl);
        // equal substeps, so no sliver step before an output time
        let mut dt = if remaining.is_finite() && remaining > stable {
            remaining / (remaining / stable).ceil()
        } else {
            stable.min(remaining)
        };
        let full = dt == remaining;
        let mut rejects = 0u32;
        loop {
            let shape = self.shape;
            let channel = self.config.condensate_channel;
            let trials: Vec<Candidate> = self
                .dirs
                .par_iter()
                .map(|d| match kind {
                    IntegratorKind::Rk4 => rk4_trial(&shape, channel, d, dt),
                    IntegratorKind::Patankar => patankar_trial(&shape, channel, d, dt),
                })
                .collect();
            if trials.iter().any(|c| !c.finite) {
                return Err(IntegratorError::NonFinite(self.time));
            }
            let worst = trials
                .iter()
                .map(|c| c.min_amp)
                .fold(f64::INFINITY, f64::min);
            if worst < -ctl.positivity_tol {
                rejects += 1;
                self.stats.rejects += 1;
                if rejects > ctl.max_rejects {
                    return Err(IntegratorError::Stiffness {
                        time: self.time,
                        dt,
                        rejects,
                        worst,
                    });
                }
                dt *= 0.5;
                continue;
            }
            for (j, c) in trials.into_iter().enumerate() {
                let d = &mut self.dirs[j];
                let mut amps = c.amps;
                for a in amps.iter_mut() {
                    if *a < 0.0 || *a < DROP_THRESHOLD {
                        self.clamped[j] += a.abs();
                        *a = 0.0;
                    }
                }
                d.amps = amps;
                d.condensate = c.scalars[0];
                d.overflow_mass = c.scalars[1];
                d.overflow_energy = c.scalars[2];
                self.discarded[j] += c.scalars[3];
            }
            self.time = if full && rejects == 0 {
                target
            } else {
                self.time + dt
            };
            self.stats.steps += 1;
            self.stats.min_dt = self.stats.min_dt.min(dt);
            self.stats.max_dt = self.stats.max_dt.max(dt);
            return Ok(dt);
        }
    }

    /// Steps until `target`, running `monitor` after every accepted step.
    pub fn advance_to(
        &mut self,
        target: f64,
        kind: IntegratorKind,
        ctl: &StepControl,
        mut monitor: Option<&mut Monitors>,
    ) -> Result<(), IntegratorError> {
        while self.time < target {
            self.step(kind, ctl, target)?;
            if let Some(m) = monitor.as_deref_mut() {
                m.observe(self);
            }
        }
        Ok(())
    }

    fn direction_energy(&self, d: &DenseShells) -> f64 {
        d.amps
            .iter()
            .zip(&self.values)
            .map(|(g, r)| g * r)
            .sum::<f64>()
            + d.overflow_energy
    }

    fn direction_phi(&self, d: &DenseShells, c: f64) -> f64 {
        let mut s = c * d.condensate;
        for (g, r) in d.amps.iter().zip(&self.values) {
            if *r >= c {
                break;
            }
            s += g * (c - r);
        }
        s
    }
}

/// Per-step checks of the invariants: positive mass nonincreasing, energy
/// (overflow included) conserved, `phi_tilde(c)` nondecreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Monitors {
    phi_c: Vec<f64>,
    prev_mass: Vec<f64>,
    prev_phi: Vec<Vec<f64>>,
    energy0: Vec<f64>,
    pub steps: usize,
    /// Largest relative increase of a direction's positive mass in one step.
    pub mass_worst_increase: f64,
    /// Largest relative decrease of `phi_tilde(c)` in one step.
    pub phi_worst_decrease: f64,
    /// Largest relative energy defect seen at any step.
    pub energy_worst_defect: f64,
}

impl Monitors {
    pub fn new(stepper: &Stepper) -> Self {
        let config = &stepper.config;
        let phi_c: Vec<f64> = if config.condensate_channel {
            config
                .phi_levels
                .iter()
                .map(|&n| config.inverse_power(n).value())
                .collect()
        } else {
            Vec::new()
        };
        Monitors {
            prev_mass: stepper.dirs.iter().map(|d| d.positive_mass()).collect(),
            prev_phi: stepper
                .dirs
                .iter()
                .map(|d| phi_c.iter().map(|&c| stepper.direction_phi(d, c)).collect())
                .collect(),
            energy0: stepper
                .dirs
                .iter()
                .map(|d| stepper.direction_energy(d))
                .collect(),
            phi_c,
            steps: 0,
            mass_worst_increase: 0.0,
            phi_worst_decrease: 0.0,
            energy_worst_defect: 0.0,
        }
    }

    fn observe(&mut self, s: &Stepper) {
        self.steps += 1;
        for (j, d) in s.dirs.iter().enumerate() {
            let mass = d.positive_mass();
            let before = self.prev_mass[j];
            if mass > before {
                self.mass_worst_increase = self
                    .mass_worst_increase
                    .max((mass - before) / before.max(f64::MIN_POSITIVE));
            }
            self.prev_mass[j] = mass;
            let e0 = self.energy0[j];
            if e0 > 0.0 {
                let e = s.direction_energy(d);
                self.energy_worst_defect = self.energy_worst_defect.max((e - e0).abs() / e0);
            }
            for (k, &c) in self.phi_c.iter().enumerate() {
                let phi = s.direction_phi(d, c);
                let before = self.prev_phi[j][k];
                if phi < before {
                    self.phi_worst_decrease = self
                        .phi_worst_decrease
                        .max((before - phi) / before.max(f64::MIN_POSITIVE));
                }
                self.prev_phi[j][k] = phi;
            }
        }
    }
}

/// One RK4 step with the stable step size (capped by `dt_max`).
pub fn step_rk4(state: &FullState, ctl: &StepControl) -> Result<FullState, IntegratorError> {
    let mut s = Stepper::new(state)?;
    s.step(IntegratorKind::Rk4, ctl, f64::INFINITY)?;
    Ok(s.to_state())
}

/// One Patankar step `g ← (g + dt·P)/(1 + dt·D)`.
pub fn step_patankar(state: &FullState, ctl: &StepControl) -> Result<FullState, IntegratorError> {
    let mut s = Stepper::new(state)?;
    s.step(IntegratorKind::Patankar, ctl, f64::INFINITY)?;
    Ok(s.to_state())
}

/// Summary of a run's per-step checks and numerical bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorSummary {
    pub steps: usize,
    pub rejects: usize,
    pub min_dt: f64,
    pub max_dt: f64,
    pub mass_worst_increase: f64,
    pub phi_worst_decrease: f64,
    pub energy_worst_defect: f64,
    pub clamped_total: f64,
    pub discarded_condensate_total: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: FullState,
    pub summary: MonitorSummary,
}

fn record(stepper: &Stepper, energy0: f64) -> DiagnosticsRecord {
    let state = stepper.to_state();
    let config = &stepper.config;
    let dirs = state
        .directions
        .iter()
        .zip(stepper.clamped_mass())
        .map(|(d, &c)| DirectionFunctionals::measure(d, config, c))
        .collect();
    DiagnosticsRecord::new(stepper.time, dirs, energy0)
}

/// Evolves the configured initial data to `t_end`, emitting a record at
/// every multiple of `output_interval` (and at `t_end`).
pub fn run(config: &ModelConfig) -> Result<RunOutput, IntegratorError> {
    run_with(config, &mut |_| {})
}

/// [`run`] with every record passed to `sink` as soon as it is measured, so
/// callers keep partial output when a run aborts.
pub fn run_with(
    config: &ModelConfig,
    sink: &mut dyn FnMut(&DiagnosticsRecord),
) -> Result<RunOutput, IntegratorError> {
    let initial = build_initial(config)?;
    let ctl = StepControl::from_config(config);
    let mut stepper = Stepper::new(&initial)?;
    let mut monitors = Monitors::new(&stepper);
    let energy0: f64 = monitors.energy0.iter().sum();

    let mut records = vec![record(&stepper, energy0)];
    sink(&records[0]);
    let mut k = 1u64;
    while stepper.time < config.t_end {
        let mut target = k as f64 * config.output_interval;
        if target > config.t_end || config.t_end - target < 1e-9 * config.output_interval {
            target = config.t_end;
        }
        stepper.advance_to(target, config.integrator, &ctl, Some(&mut monitors))?;
        let r = record(&stepper, energy0);
        sink(&r);
        records.push(r);
        k += 1;
    }
    let stats = stepper.stats();
    Ok(RunOutput {
        records,
        final_state: stepper.to_state(),
        summary: MonitorSummary {
            steps: stats.steps,
            rejects: stats.rejects,
            min_dt: if stats.steps > 0 { stats.min_dt } else { 0.0 },
            max_dt: stats.max_dt,
            mass_worst_increase: monitors.mass_worst_increase,
            phi_worst_decrease: monitors.phi_worst_decrease,
            energy_worst_defect: monitors.energy_worst_defect,
            clamped_total: stepper.clamped.iter().sum(),
            discarded_condensate_total: stepper.discarded.iter().sum(),
        },
    })
}

/// Picard fixed point on [`PICARD_NODES`] equispaced nodes of `[t0, t0+T]`.
#[derive(Debug, Clone)]
pub struct PicardTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<FullState>,
    pub iterations: usize,
    pub residual: f64,
}

/// Level of each grid index and its norm weight `𝔠^level`.
fn level_weights(shape: &GridShape, weight: f64) -> (Vec<u32>, Vec<f64>) {
    let levels: Vec<u32> = (0..shape.len())
        .map(|n| if n == 0 { 0 } else { shape.radius(n).level() })
        .collect();
    let weights = levels.iter().map(|&l| weight.powi(l as i32)).collect();
    (levels, weights)
}

fn dense_diff_norm(a: &[f64], b: &[f64], levels: &[u32], weights: &[f64], len: usize) -> f64 {
    let mut sums = std::collections::BTreeMap::new();
    let mut level_w = std::collections::BTreeMap::new();
    for n in 1..len {
        let d = (a[n] - b[n]).abs();
        if d != 0.0 {
            *sums.entry(levels[n]).or_insert(0.0) += d;
            level_w.insert(levels[n], weights[n]);
        }
    }
    let lev = sums.iter().map(|(l, s)| level_w[l] * s).fold(0.0, f64::max);
    lev.max((a[len] - b[len]).abs())
}

/// Node values, sweeps and final residual of one direction.
type PicardDirection = (Vec<Vec<f64>>, usize, f64);

/// Solves `h(t) = h(t0) + ∫ B(h)` by successive substitution with the
/// trapezoid rule, until the sup over nodes of the norm of successive
/// differences is below `tol`.
pub fn picard_solve(
    initial: &FullState,
    horizon: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PicardTrajectory, IntegratorError> {
    let stepper = Stepper::new(initial)?;
    let shape = stepper.shape;
    let channel = initial.config.condensate_channel;
    let (levels, weights) = level_weights(&shape, initial.config.norm_weight);
    let len = shape.len();
    let h = horizon / (PICARD_NODES - 1) as f64;
    let times: Vec<f64> = (0..PICARD_NODES)
        .map(|i| initial.time + i as f64 * h)
        .collect();

    // per direction: nodes × (amps, condensate, overflow mass, overflow energy)
    let results: Vec<Result<PicardDirection, IntegratorError>> = stepper
        .dirs
        .par_iter()
        .map(|d| {
            let mut f0 = d.amps.clone();
            f0.extend([d.condensate, d.overflow_mass, d.overflow_energy]);
            let mut traj = vec![f0.clone(); PICARD_NODES];
            let mut rates = DenseRates::zeros(len);
            let mut k = vec![0.0; len];
            let mut residual = f64::INFINITY;
            for it in 1..=max_iter {
                let b: Vec<Vec<f64>> = traj
                    .iter()
                    .map(|x| {
                        let s = eval(&shape, channel, &x[..len], &mut rates, &mut k);
                        let mut v = k.clone();
                        v.extend_from_slice(&s[..3]);
                        v
                    })
                    .collect();
                let mut next = Vec::with_capacity(PICARD_NODES);
                let mut acc = f0.clone();
                next.push(acc.clone());
                for i in 1..PICARD_NODES {
                    for (a, (p, q)) in acc.iter_mut().zip(b[i - 1].iter().zip(&b[i])) {
                        *a += 0.5 * h * (p + q);
                    }
                    next.push(acc.clone());
                }
                residual = traj
                    .iter()
                    .zip(&next)
                    .map(|(x, y)| dense_diff_norm(x, y, &levels, &weights, len))
                    .fold(0.0, f64::max);
                traj = next;
                if !residual.is_finite() {
                    break;
                }
                if residual < tol {
                    return Ok((traj, it, residual));
                }
            }
            Err(IntegratorError::PicardDivergence {
                iterations: max_iter,
                residual,
            })
        })
        .collect();

    let mut per_dir = Vec::with_capacity(results.len());
    let (mut iterations, mut residual) = (0, 0.0f64);
    for r in results {
        let (traj, it, res) = r?;
        iterations = iterations.max(it);
        residual = residual.max(res);
        per_dir.push(traj);
    }
    let states = (0..PICARD_NODES)
        .map(|i| FullState {
            directions: per_dir
                .iter()
                .map(|traj| {
                    let x = &traj[i];
                    DenseShells {
                        amps: x[..len].to_vec(),
                        condensate: x[len],
                        overflow_mass: x[len + 1],
                        overflow_energy: x[len + 2],
                    }
                    .to_state(&shape)
                })
                .collect(),
            time: times[i],
            config: initial.config.clone(),
        })
        .collect();
    Ok(PicardTrajectory {
        times,
        states,
        iterations,
        residual,
    })
}

/// Picard horizon `c/(C_Q‖f‖)` for the configured fraction `c`.
pub fn contraction_window(initial: &FullState) -> f64 {
    let c = &initial.config;
    c.picard_c / (c.c_q * crate::state::snorm(initial))
}

/// RK4 solution at the given increasing times, with at most `dt_max` per step.
pub fn rk4_at(
    initial: &FullState,
    times: &[f64],
    dt_max: f64,
) -> Result<Vec<FullState>, IntegratorError> {
    let mut ctl = StepControl::from_config(&initial.config);
    ctl.dt_max = dt_max;
    let mut s = Stepper::new(initial)?;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        s.advance_to(t, IntegratorKind::Rk4, &ctl, None)?;
        out.push(s.to_state());
    }
    Ok(out)
}

/// Norm distance of two states on the same directions: sup over directions
/// of the lattice norm of the difference (condensates included).
pub fn state_distance(a: &FullState, b: &FullState) -> f64 {
    let weight = a.config.norm_weight;
    a.directions
        .iter()
        .zip(&b.directions)
        .map(|(x, y)| {
            let mut sums = std::collections::BTreeMap::new();
            let mut radii: std::collections::BTreeSet<_> = x.support().into_iter().collect();
            radii.extend(y.support());
            for r in radii {
                *sums.entry(r.level()).or_insert(0.0) += (x.amplitude(&r) - y.amplitude(&r)).abs();
            }
            weighted_level_sup(&sums, weight).max((x.condensate - y.condensate).abs())
        })
        .fold(0.0, f64::max)
}
