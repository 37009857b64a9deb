//! Recorded functionals and the checks run over a record stream.
//!
//! Every checker is a pure function of `&[DiagnosticsRecord]` plus the run's
//! configuration, so a run can be re-verified from its CSV output alone.
//!
//! Direction-reduced values are angular means, except `snorm` and the tail
//! masses, which are sups over directions.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::config::ModelConfig;
use crate::lattice::LatticeRadius;
use crate::state::ShellState;

/// Slack for the per-step monotonicity checks.
pub const MONOTONE_SLACK: f64 = 1e-12;
/// Slack for the late-time concentration trend.
pub const TREND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiagnosticsError {
    #[error("domain error: {0}")]
    Domain(String),
}

/// Functionals of one direction, in the order fixed by the run's lists.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DirectionFunctionals {
    pub positive_mass: f64,
    pub condensate: f64,
    /// Includes the overflow energy.
    pub energy: f64,
    pub overflow_mass: f64,
    pub clamped_mass: f64,
    pub snorm: f64,
    /// Per `tail_levels`.
    pub tail_mass: Vec<f64>,
    /// Per `phi_levels`, condensate included.
    pub phi_tilde: Vec<f64>,
    /// Per `phi_levels`, the `(0, ∞)` part only.
    pub phi_positive: Vec<f64>,
    /// Per `layers`.
    pub layer: Vec<f64>,
    /// Per `shell_levels`: mass on the circle `Ξ^(−n)`.
    pub shell_mass: Vec<f64>,
    /// Per `shell_levels`: mass at radii `≤ Ξ^(−n)`.
    pub shell_below: Vec<f64>,
    /// Per `coercivity_levels`: mass at radii in `(0, c]`.
    pub coercive_below: Vec<f64>,
    /// Per `coercivity_levels`: mass at radii in `[3c/4, c]`.
    pub coercive_band: Vec<f64>,
    /// Per `concentration_levels`: mass at radii in `(0, c)`.
    pub concentration_below: Vec<f64>,
}

impl DirectionFunctionals {
    pub fn measure(state: &ShellState, config: &ModelConfig, clamped_mass: f64) -> Self {
        let c = |n: u32| config.inverse_power(n);
        DirectionFunctionals {
            positive_mass: state.positive_mass(),
            condensate: state.condensate,
            energy: state.energy(),
            overflow_mass: state.overflow_mass,
            clamped_mass,
            snorm: state.snorm(config.norm_weight),
            tail_mass: config
                .tail_levels
                .iter()
                .map(|&m| state.tail_mass(m))
                .collect(),
            phi_tilde: config
                .phi_levels
                .iter()
                .map(|&n| state.phi_tilde(c(n).value()))
                .collect(),
            phi_positive: config
                .phi_levels
                .iter()
                .map(|&n| state.phi_positive(c(n).value()))
                .collect(),
            layer: config
                .layers
                .iter()
                .map(|&(rho, eps)| state.layer(rho, eps))
                .collect(),
            shell_mass: config
                .shell_levels
                .iter()
                .map(|&n| state.amplitude(&c(n)))
                .collect(),
            shell_below: config
                .shell_levels
                .iter()
                .map(|&n| state.mass_up_to(&c(n)))
                .collect(),
            coercive_below: config
                .coercivity_levels
                .iter()
                .map(|&n| state.mass_up_to(&c(n)))
                .collect(),
            coercive_band: config
                .coercivity_levels
                .iter()
                .map(|&n| {
                    let v = c(n).value();
                    state.band_mass(0.75 * v, v)
                })
                .collect(),
            concentration_below: config
                .concentration_levels
                .iter()
                .map(|&n| state.mass_below(&c(n)))
                .collect(),
        }
    }

    /// Flat values in column order.
    pub fn values(&self) -> Vec<f64> {
        let mut v = vec![
            self.positive_mass,
            self.condensate,
            self.energy,
            self.overflow_mass,
            self.clamped_mass,
            self.snorm,
        ];
        for list in [
            &self.tail_mass,
            &self.phi_tilde,
            &self.phi_positive,
            &self.layer,
            &self.shell_below,
            &self.coercive_below,
            &self.coercive_band,
            &self.concentration_below,
            &self.shell_mass,
        ] {
            v.extend_from_slice(list);
        }
        v
    }

    /// Inverse of [`values`](Self::values) for the list lengths of `config`.
    pub fn from_values(values: &[f64], config: &ModelConfig) -> Option<Self> {
        if values.len() != Self::width(config) {
            return None;
        }
        let mut it = values.iter().copied();
        let mut take = |k: usize| -> Vec<f64> { (&mut it).take(k).collect() };
        let head = take(6);
        Some(DirectionFunctionals {
            positive_mass: head[0],
            condensate: head[1],
            energy: head[2],
            overflow_mass: head[3],
            clamped_mass: head[4],
            snorm: head[5],
            tail_mass: take(config.tail_levels.len()),
            phi_tilde: take(config.phi_levels.len()),
            phi_positive: take(config.phi_levels.len()),
            layer: take(config.layers.len()),
            shell_below: take(config.shell_levels.len()),
            coercive_below: take(config.coercivity_levels.len()),
            coercive_band: take(config.coercivity_levels.len()),
            concentration_below: take(config.concentration_levels.len()),
            shell_mass: take(config.shell_levels.len()),
        })
    }

    pub fn width(config: &ModelConfig) -> usize {
        6 + config.tail_levels.len()
            + 2 * config.phi_levels.len()
            + config.layers.len()
            + 2 * config.shell_levels.len()
            + 2 * config.coercivity_levels.len()
            + config.concentration_levels.len()
    }

    /// Column names matching [`values`](Self::values).
    pub fn column_names(config: &ModelConfig) -> Vec<String> {
        let mut names: Vec<String> = [
            "positive_mass",
            "condensate",
            "energy",
            "overflow_mass",
            "clamped_mass_cumulative",
            "snorm",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        names.extend(config.tail_levels.iter().map(|m| format!("tail_mass_M{m}")));
        names.extend(
            config
                .phi_levels
                .iter()
                .map(|n| format!("phi_tilde_xi_pow_{n}")),
        );
        names.extend(
            config
                .phi_levels
                .iter()
                .map(|n| format!("phi_positive_xi_pow_{n}")),
        );
        names.extend(
            config
                .layers
                .iter()
                .map(|(rho, eps)| format!("layer_rho{rho}_eps{eps}")),
        );
        names.extend(
            config
                .shell_levels
                .iter()
                .map(|n| format!("mass_le_xi_pow_{n}")),
        );
        names.extend(
            config
                .coercivity_levels
                .iter()
                .map(|n| format!("coercive_le_xi_pow_{n}")),
        );
        names.extend(
            config
                .coercivity_levels
                .iter()
                .map(|n| format!("coercive_band_xi_pow_{n}")),
        );
        names.extend(
            config
                .concentration_levels
                .iter()
                .map(|n| format!("mass_lt_xi_pow_{n}")),
        );
        names.extend(
            config
                .shell_levels
                .iter()
                .map(|n| format!("shell_xi_pow_{n}")),
        );
        names
    }

    /// Angular means, with sups for `snorm` and the tails.
    pub fn reduce(dirs: &[DirectionFunctionals]) -> Self {
        let Some(first) = dirs.first() else {
            return Self::default();
        };
        let n = dirs.len() as f64;
        let mut sum = first.values();
        for d in &dirs[1..] {
            for (s, v) in sum.iter_mut().zip(d.values()) {
                *s += v;
            }
        }
        let tails = first.tail_mass.len();
        let mut out = first.clone();
        let mut it = sum.into_iter().map(|s| s / n);
        out.positive_mass = it.next().unwrap();
        out.condensate = it.next().unwrap();
        out.energy = it.next().unwrap();
        out.overflow_mass = it.next().unwrap();
        out.clamped_mass = it.next().unwrap();
        it.next();
        out.snorm = dirs.iter().fold(0.0, |a, d| a.max(d.snorm));
        for _ in 0..tails {
            it.next();
        }
        for (k, t) in out.tail_mass.iter_mut().enumerate() {
            *t = dirs.iter().fold(0.0, |a, d| a.max(d.tail_mass[k]));
        }
        for list in [
            &mut out.phi_tilde,
            &mut out.phi_positive,
            &mut out.layer,
            &mut out.shell_below,
            &mut out.coercive_below,
            &mut out.coercive_band,
            &mut out.concentration_below,
            &mut out.shell_mass,
        ] {
            for x in list.iter_mut() {
                *x = it.next().unwrap();
            }
        }
        out
    }
}

/// All tracked functionals at one output time.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// `|E(t) − E(0)|/E(0)` for the direction-summed energy (overflow included).
    pub energy_defect: f64,
    pub reduced: DirectionFunctionals,
    pub directions: Vec<DirectionFunctionals>,
}

impl DiagnosticsRecord {
    pub fn new(t: f64, directions: Vec<DirectionFunctionals>, energy0: f64) -> Self {
        let energy: f64 = directions.iter().map(|d| d.energy).sum();
        let energy_defect = if energy0 > 0.0 {
            (energy - energy0).abs() / energy0
        } else {
            0.0
        };
        DiagnosticsRecord {
            t,
            energy_defect,
            reduced: DirectionFunctionals::reduce(&directions),
            directions,
        }
    }
}

/// Outcome of one check in a verdict document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    /// `None` for report-only checks.
    pub ok: Option<bool>,
    pub constants: BTreeMap<String, f64>,
    pub worst_violation: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Verdict {
    pub fn pass_fail(ok: bool, worst_violation: f64) -> Self {
        Verdict {
            ok: Some(ok),
            constants: BTreeMap::new(),
            worst_violation,
            note: None,
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.constants.insert(key.to_string(), value);
        self
    }
}

/// `(1/C₁) ln(ε𝒞₁(M+1)^γ/(𝒞₂𝒞₃))`, the time up to which the tail beyond
/// level `M` stays below `ε` times the level-`M` initial mass.
pub fn t_threshold(
    eps: f64,
    m: u32,
    rate_c1: f64,
    config: &ModelConfig,
) -> Result<f64, DiagnosticsError> {
    let arg = eps * config.init_c1 * ((m + 1) as f64).powf(config.gamma)
        / (config.init_c2 * config.init_c3);
    if !(arg > 1.0) {
        return Err(DiagnosticsError::Domain(format!(
            "threshold needs ε𝒞₁(M+1)^γ/(𝒞₂𝒞₃) > 1, got {arg}"
        )));
    }
    if !(rate_c1 > 0.0) {
        return Err(DiagnosticsError::Domain(
            "rate constant must be positive".into(),
        ));
    }
    Ok(arg.ln() / rate_c1)
}

/// Result of [`ode_lower_bound`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OdeBound {
    Value(f64),
    /// `t` is at or past the comparison solution's blow-up time.
    BlowUp,
}

/// `t(X₀/2)/(1 − t𝒞₂X₀/2)`, the solution of `Ẋ = (𝒞₂X + X₀/2)²`, `X(0) = 0`.
pub fn ode_lower_bound(x0: f64, c2: f64, t: f64) -> OdeBound {
    let denom = 1.0 - t * c2 * x0 / 2.0;
    if denom <= 0.0 {
        OdeBound::BlowUp
    } else {
        OdeBound::Value(t * (x0 / 2.0) / denom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailFit {
    pub fitted_c1: f64,
    pub ok: bool,
    pub worst_violation: f64,
}

fn tail_series(records: &[DiagnosticsRecord], k: usize) -> Vec<(f64, f64)> {
    records
        .iter()
        .map(|r| (r.t, r.reduced.tail_mass[k]))
        .collect()
}

fn max_log_slope(series: &[(f64, f64)]) -> f64 {
    let mut best: f64 = 0.0;
    for (i, &(ti, xi)) in series.iter().enumerate() {
        if xi <= 0.0 {
            continue;
        }
        for &(tj, xj) in &series[i + 1..] {
            if xj > 0.0 && tj > ti {
                best = best.max((xj.ln() - xi.ln()) / (tj - ti));
            }
        }
    }
    best
}

/// Worst relative excess of `x(t)` over `x(0)e^{Ct}`.
fn exp_bound_violation(series: &[(f64, f64)], c: f64) -> f64 {
    let Some(&(t0, x0)) = series.first() else {
        return 0.0;
    };
    series
        .iter()
        .map(|&(t, x)| {
            let bound = x0 * (c * (t - t0)).exp();
            if x <= bound {
                0.0
            } else if bound > 0.0 {
                (x - bound) / bound
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

/// Exponential growth rate of the direction-sup tail beyond level `m`.
pub fn fit_tail_rate(
    records: &[DiagnosticsRecord],
    config: &ModelConfig,
    m: u32,
) -> Option<TailFit> {
    let k = config.tail_levels.iter().position(|&x| x == m)?;
    let series = tail_series(records, k);
    let fitted_c1 = max_log_slope(&series);
    let worst = exp_bound_violation(&series, fitted_c1);
    Some(TailFit {
        fitted_c1,
        ok: worst <= 1e-9,
        worst_violation: worst,
    })
}

/// One constant for every configured `M`: the max of the per-`M` fits,
/// checked against each tail.
pub fn fit_tail_rates(
    records: &[DiagnosticsRecord],
    config: &ModelConfig,
) -> (TailFit, Vec<(u32, f64)>) {
    let per_m: Vec<(u32, f64)> = config
        .tail_levels
        .iter()
        .enumerate()
        .map(|(k, &m)| (m, max_log_slope(&tail_series(records, k))))
        .collect();
    let c1 = per_m.iter().map(|p| p.1).fold(0.0, f64::max);
    let worst = (0..config.tail_levels.len())
        .map(|k| exp_bound_violation(&tail_series(records, k), c1))
        .fold(0.0, f64::max);
    (
        TailFit {
            fitted_c1: c1,
            ok: worst <= 1e-9,
            worst_violation: worst,
        },
        per_m,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonotoneFunctional {
    PositiveMassDown,
    /// Index into `phi_levels`.
    PhiTildeUp(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotoneReport {
    pub ok: bool,
    /// Largest relative step in the wrong direction.
    pub worst_violation: f64,
}

/// Per-direction monotonicity between consecutive records.
pub fn check_monotone(
    records: &[DiagnosticsRecord],
    functional: MonotoneFunctional,
) -> MonotoneReport {
    let pick = |d: &DirectionFunctionals| match functional {
        MonotoneFunctional::PositiveMassDown => d.positive_mass,
        MonotoneFunctional::PhiTildeUp(k) => d.phi_tilde[k],
    };
    let mut worst: f64 = 0.0;
    for w in records.windows(2) {
        for (a, b) in w[0].directions.iter().zip(&w[1].directions) {
            let (x, y) = (pick(a), pick(b));
            let wrong = match functional {
                MonotoneFunctional::PositiveMassDown => y - x,
                MonotoneFunctional::PhiTildeUp(_) => x - y,
            };
            if wrong > 0.0 {
                worst = worst.max(wrong / x.abs().max(f64::MIN_POSITIVE));
            }
        }
    }
    MonotoneReport {
        ok: worst <= MONOTONE_SLACK,
        worst_violation: worst,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoercivityReport {
    pub fitted_constant: f64,
    pub ok: bool,
}

/// `min_t (mass in (0,c]) / ∫₀ᵗ (mass in [3c/4, c])² ds` over records and
/// directions; `k` indexes `coercivity_levels`.
pub fn check_coercivity(records: &[DiagnosticsRecord], k: usize) -> CoercivityReport {
    let n_dir = records.first().map_or(0, |r| r.directions.len());
    let mut fitted = f64::INFINITY;
    for j in 0..n_dir {
        let mut integral = 0.0;
        for w in records.windows(2) {
            let (a, b) = (&w[0].directions[j], &w[1].directions[j]);
            let dt = w[1].t - w[0].t;
            integral += 0.5 * dt * (a.coercive_band[k].powi(2) + b.coercive_band[k].powi(2));
            if integral > 0.0 {
                fitted = fitted.min(b.coercive_below[k] / integral);
            }
        }
    }
    CoercivityReport {
        fitted_constant: fitted,
        ok: fitted > 0.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub n: u32,
    pub window: (f64, f64),
    /// Min over directions; `None` when skipped.
    pub fitted_growth: Option<f64>,
    pub per_direction: Vec<f64>,
    pub ok: bool,
    pub notice: Option<String>,
}

/// Window `[τ_{n−1}, τ_n)` of the growth check.
pub fn growth_window(n: u32, config: &ModelConfig) -> Result<(f64, f64), DiagnosticsError> {
    let lo = t_threshold(
        config.window_eps,
        n.saturating_sub(1),
        config.window_rate_c1,
        config,
    )?;
    let hi = t_threshold(config.window_eps, n, config.window_rate_c1, config)?;
    Ok((lo, hi))
}

/// Growth of the shell `Ξ^(−n)` against `(t+1)` times the initial mass at
/// radii `≤ Ξ^(−n)`, over each level's window.
pub fn check_condensation_growth(
    records: &[DiagnosticsRecord],
    config: &ModelConfig,
) -> Vec<GrowthReport> {
    config
        .shell_levels
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let skipped = |window, notice: String| GrowthReport {
                n,
                window,
                fitted_growth: None,
                per_direction: Vec::new(),
                ok: false,
                notice: Some(notice),
            };
            let window = match growth_window(n, config) {
                Ok(w) => w,
                Err(e) => return skipped((f64::NAN, f64::NAN), e.to_string()),
            };
            let Some(first) = records.first() else {
                return skipped(window, "no records".into());
            };
            let in_window: Vec<&DiagnosticsRecord> = records
                .iter()
                .filter(|r| r.t >= window.0 && r.t < window.1)
                .collect();
            if in_window.is_empty() {
                return skipped(window, "window outside the recorded horizon".into());
            }
            let mut per_direction = Vec::with_capacity(first.directions.len());
            for (j, d0) in first.directions.iter().enumerate() {
                let below0 = d0.shell_below[k];
                if below0 <= 0.0 {
                    return skipped(window, format!("no initial mass below Ξ^-{n}"));
                }
                let g = in_window
                    .iter()
                    .map(|r| r.directions[j].shell_mass[k] / ((r.t + 1.0) * below0))
                    .fold(f64::INFINITY, f64::min);
                per_direction.push(g);
            }
            let fitted = per_direction.iter().copied().fold(f64::INFINITY, f64::min);
            GrowthReport {
                n,
                window,
                fitted_growth: Some(fitted),
                per_direction,
                ok: fitted > 0.0,
                notice: None,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationReport {
    pub c: f64,
    /// Min over directions of `(mass in (0,c) + condensate)/initial mass` at the last record.
    pub final_fraction: f64,
    pub trend_ok: bool,
    pub worst_trend_violation: f64,
    /// Max over directions of `condensate/initial mass` at the last record.
    pub condensate_ratio: f64,
    /// Same as `final_fraction` with the condensate counted at half weight,
    /// i.e. as the positive-radius mass it absorbed.
    pub mass_equivalent_fraction: f64,
}

/// Fraction of the initial positive mass found below `c` (condensate
/// included) and its trend over the second half of the run.
pub fn check_concentration(
    records: &[DiagnosticsRecord],
    config: &ModelConfig,
) -> Vec<ConcentrationReport> {
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return Vec::new();
    };
    let t_half = first.t + 0.5 * (last.t - first.t);
    config
        .concentration_levels
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let frac = |r: &DiagnosticsRecord, j: usize, w: f64| {
                let m0 = first.directions[j].positive_mass;
                let d = &r.directions[j];
                if m0 > 0.0 {
                    (d.concentration_below[k] + w * d.condensate) / m0
                } else {
                    1.0
                }
            };
            let n_dir = first.directions.len();
            let final_fraction = (0..n_dir)
                .map(|j| frac(last, j, 1.0))
                .fold(f64::INFINITY, f64::min);
            let mass_equivalent_fraction = (0..n_dir)
                .map(|j| frac(last, j, 0.5))
                .fold(f64::INFINITY, f64::min);
            let condensate_ratio = (0..n_dir)
                .map(|j| {
                    let m0 = first.directions[j].positive_mass;
                    if m0 > 0.0 {
                        last.directions[j].condensate / m0
                    } else {
                        0.0
                    }
                })
                .fold(0.0, f64::max);
            let late: Vec<&DiagnosticsRecord> = records.iter().filter(|r| r.t >= t_half).collect();
            let mut worst: f64 = 0.0;
            for w in late.windows(2) {
                for j in 0..n_dir {
                    worst = worst.max(frac(w[0], j, 1.0) - frac(w[1], j, 1.0));
                }
            }
            ConcentrationReport {
                c: config.inverse_power(n).value(),
                final_fraction,
                trend_ok: worst <= TREND_SLACK,
                worst_trend_violation: worst,
                condensate_ratio,
                mass_equivalent_fraction,
            }
        })
        .collect()
}

/// Worst relative energy defect over records and directions.
pub fn energy_defect(records: &[DiagnosticsRecord]) -> f64 {
    let Some(first) = records.first() else {
        return 0.0;
    };
    let mut worst: f64 = 0.0;
    for r in records {
        worst = worst.max(r.energy_defect);
        for (d, d0) in r.directions.iter().zip(&first.directions) {
            if d0.energy > 0.0 {
                worst = worst.max((d.energy - d0.energy).abs() / d0.energy);
            }
        }
    }
    worst
}

/// Worst excess of the sup-tail beyond level `M` over `R𝔠^(−M−1)/(1−𝔠^(−1))`
/// with `R` the record's norm.
pub fn appendix_tail_violation(records: &[DiagnosticsRecord], config: &ModelConfig) -> f64 {
    let w = config.norm_weight;
    let mut worst: f64 = 0.0;
    for r in records {
        for (k, &m) in config.tail_levels.iter().enumerate() {
            let bound = crate::state::tail_bound(r.reduced.snorm, w, m);
            let excess = r.reduced.tail_mass[k] - bound;
            if excess > 1e-12 * bound {
                worst = worst.max(excess / bound.max(f64::MIN_POSITIVE));
            }
        }
    }
    worst
}

/// `X(t) = ∫₀ᵗ shell_mass(s)² ds` against the comparison solution, reported
/// per tracked shell for a given `C₂`: the min ratio `X/bound` over records
/// before the bound's blow-up.
pub fn ode_comparison(records: &[DiagnosticsRecord], k: usize, c2: f64) -> f64 {
    let n_dir = records.first().map_or(0, |r| r.directions.len());
    let mut worst = f64::INFINITY;
    for j in 0..n_dir {
        let x0 = records[0].directions[j].shell_mass[k];
        let mut x = 0.0;
        for w in records.windows(2) {
            let (a, b) = (
                w[0].directions[j].shell_mass[k],
                w[1].directions[j].shell_mass[k],
            );
            x += 0.5 * (w[1].t - w[0].t) * (a * a + b * b);
            match ode_lower_bound(x0, c2, w[1].t - records[0].t) {
                OdeBound::Value(v) if v > 0.0 => worst = worst.min(x / v),
                OdeBound::Value(_) => {}
                OdeBound::BlowUp => break,
            }
        }
    }
    worst
}

/// Runs every check and collects the verdict document.
pub fn verdicts(records: &[DiagnosticsRecord], config: &ModelConfig) -> BTreeMap<String, Verdict> {
    let mut out = BTreeMap::new();

    let e = energy_defect(records);
    out.insert(
        "energy_conservation".into(),
        Verdict::pass_fail(e <= 1e-8, e),
    );

    let m = check_monotone(records, MonotoneFunctional::PositiveMassDown);
    out.insert(
        "positive_mass_monotone".into(),
        Verdict::pass_fail(m.ok, m.worst_violation),
    );

    if config.condensate_channel {
        for (k, n) in config.phi_levels.iter().enumerate() {
            let r = check_monotone(records, MonotoneFunctional::PhiTildeUp(k));
            out.insert(
                format!("phi_tilde_monotone_xi_pow_{n}"),
                Verdict::pass_fail(r.ok, r.worst_violation)
                    .with("c", config.inverse_power(*n).value()),
            );
        }
    }

    let (fit, per_m) = fit_tail_rates(records, config);
    let mut v = Verdict::pass_fail(fit.ok, fit.worst_violation).with("fitted_C1", fit.fitted_c1);
    for (m, c) in per_m {
        v = v.with(&format!("fitted_C1_M{m}"), c);
    }
    out.insert("tail_rate".into(), v);

    let a = appendix_tail_violation(records, config);
    out.insert(
        "appendix_tail_bound".into(),
        Verdict::pass_fail(a == 0.0, a),
    );

    let mut coercivity = Vec::new();
    for (k, n) in config.coercivity_levels.iter().enumerate() {
        let r = check_coercivity(records, k);
        coercivity.push(r.fitted_constant);
        out.insert(
            format!("coercivity_xi_pow_{n}"),
            Verdict::pass_fail(r.ok, 0.0).with("fitted_constant", r.fitted_constant),
        );
    }

    for g in check_condensation_growth(records, config) {
        let mut v = Verdict::pass_fail(g.ok, 0.0);
        if g.notice.is_some() {
            v.ok = None;
        }
        v = v.with("tau_start", g.window.0).with("tau_end", g.window.1);
        if let Some(f) = g.fitted_growth {
            v = v.with("fitted_growth", f);
        }
        v.note = g.notice;
        out.insert(format!("condensation_growth_n{}", g.n), v);
    }

    let c2 = coercivity
        .iter()
        .copied()
        .filter(|c| c.is_finite())
        .fold(f64::INFINITY, f64::min);
    if c2.is_finite() {
        for (k, n) in config.shell_levels.iter().enumerate() {
            let ratio = ode_comparison(records, k, c2);
            let mut v = Verdict {
                ok: None,
                constants: BTreeMap::new(),
                worst_violation: 0.0,
                note: None,
            }
            .with("C2", c2);
            if ratio.is_finite() {
                v = v.with("min_ratio", ratio);
            }
            out.insert(format!("ode_comparison_n{n}"), v);
        }
    }

    for c in check_concentration(records, config) {
        let mut v = Verdict::pass_fail(
            c.trend_ok && c.final_fraction >= 0.9,
            c.worst_trend_violation,
        )
        .with("c", c.c)
        .with("final_fraction", c.final_fraction)
        .with("mass_equivalent_fraction", c.mass_equivalent_fraction)
        .with("condensate_ratio", c.condensate_ratio);
        v.note = Some("fraction counts the condensate amplitude at face value".into());
        out.insert(
            format!("concentration_xi_pow_{}", radius_level(c.c, config)),
            v,
        );
    }
    out
}

fn radius_level(c: f64, config: &ModelConfig) -> u32 {
    config
        .concentration_levels
        .iter()
        .copied()
        .find(|&n| LatticeRadius::inverse_power(config.xi, n).value() == c)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig {
            n_dir: 1,
            ..Default::default()
        }
    }

    fn record_with(t: f64, f: impl Fn(&mut DirectionFunctionals)) -> DiagnosticsRecord {
        let config = cfg();
        let mut d = DirectionFunctionals::measure(&ShellState::new(3), &config, 0.0);
        f(&mut d);
        DiagnosticsRecord::new(t, vec![d], 0.0)
    }

    #[test]
    fn threshold_examples() {
        let config = ModelConfig {
            init_c1: 20.0,
            ..cfg()
        };
        let t = t_threshold(1.0, 0, 1.0, &config).unwrap();
        assert!((t - 20f64.ln()).abs() < 1e-15);
        assert!((t - 2.9957).abs() < 1e-4);
        // argument exactly 1
        let config = ModelConfig {
            init_c1: 20.0,
            ..cfg()
        };
        assert!(t_threshold(1.0 / 20.0, 0, 1.0, &config).is_err());
        // (M+1)^γ doubled
        let a = t_threshold(1.0, 0, 2.0, &config).unwrap();
        let b = t_threshold(1.0, 1, 2.0, &config).unwrap();
        assert!((b - a - 2f64.ln() / 2.0).abs() < 1e-14);
    }

    #[test]
    fn ode_bound_examples() {
        assert_eq!(ode_lower_bound(2.0, 1.0, 0.0), OdeBound::Value(0.0));
        assert_eq!(ode_lower_bound(2.0, 1.0, 0.5), OdeBound::Value(1.0));
        assert_eq!(ode_lower_bound(2.0, 1.0, 1.0), OdeBound::BlowUp);
        match ode_lower_bound(2.0, 1.0, 1.0 - 1e-9) {
            OdeBound::Value(v) => assert!(v > 1e8),
            OdeBound::BlowUp => panic!("not yet at the blow-up time"),
        }
    }

    #[test]
    fn tail_fit_recovers_planted_rate() {
        let recs: Vec<_> = (0..40)
            .map(|i| {
                let t = i as f64 * 0.25;
                record_with(t, |d| d.tail_mass = vec![(0.5 * t).exp(); 6])
            })
            .collect();
        let fit = fit_tail_rate(&recs, &cfg(), 0).unwrap();
        assert!((fit.fitted_c1 - 0.5).abs() < 1e-6);
        assert!(fit.ok);
        let flat: Vec<_> = (0..5)
            .map(|i| record_with(i as f64, |d| d.tail_mass = vec![2.0; 6]))
            .collect();
        assert_eq!(fit_tail_rate(&flat, &cfg(), 3).unwrap().fitted_c1, 0.0);
        let zero: Vec<_> = (0..5)
            .map(|i| record_with(i as f64, |d| d.tail_mass = vec![0.0; 6]))
            .collect();
        let z = fit_tail_rate(&zero, &cfg(), 0).unwrap();
        assert_eq!((z.fitted_c1, z.ok), (0.0, true));
    }

    #[test]
    fn monotone_on_single_shell_closed_form() {
        let g0 = 0.7;
        let recs: Vec<_> = (0..50)
            .map(|i| {
                let t = i as f64 * 0.2;
                record_with(t, |d| {
                    d.positive_mass = g0 / (1.0 + 2.0 * g0 * t);
                    d.phi_tilde = vec![t; 7];
                })
            })
            .collect();
        let r = check_monotone(&recs, MonotoneFunctional::PositiveMassDown);
        assert!(r.ok);
        assert_eq!(r.worst_violation, 0.0);
        assert!(check_monotone(&recs, MonotoneFunctional::PhiTildeUp(0)).ok);
        let zero: Vec<_> = (0..3).map(|i| record_with(i as f64, |_| {})).collect();
        assert!(check_monotone(&zero, MonotoneFunctional::PositiveMassDown).ok);
        let bad = vec![
            record_with(0.0, |d| d.positive_mass = 1.0),
            record_with(1.0, |d| d.positive_mass = 1.1),
        ];
        let r = check_monotone(&bad, MonotoneFunctional::PositiveMassDown);
        assert!(!r.ok);
        assert!((r.worst_violation - 0.1).abs() < 1e-12);
    }

    #[test]
    fn coercivity_examples() {
        let recs: Vec<_> = (0..4)
            .map(|i| record_with(i as f64, |d| d.coercive_below = vec![1.0; 3]))
            .collect();
        let r = check_coercivity(&recs, 0);
        assert!(r.fitted_constant.is_infinite() && r.ok);
        // single shell at c with g(t) = 1/(1+2t)
        let recs: Vec<_> = (0..100)
            .map(|i| {
                let t = i as f64 * 0.1;
                let g = 1.0 / (1.0 + 2.0 * t);
                record_with(t, |d| {
                    d.coercive_below = vec![g; 3];
                    d.coercive_band = vec![g; 3];
                })
            })
            .collect();
        let r = check_coercivity(&recs, 0);
        assert!(r.ok && r.fitted_constant > 0.0 && r.fitted_constant.is_finite());
    }

    #[test]
    fn growth_on_synthetic_records() {
        let config = cfg();
        let (lo, hi) = growth_window(2, &config).unwrap();
        assert!(lo < hi);
        let recs: Vec<_> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.05;
                record_with(t, |d| {
                    d.shell_below = vec![0.5, 0.25, 0.125];
                    d.shell_mass = vec![
                        2.0 * (t + 1.0) * 0.5,
                        2.0 * (t + 1.0) * 0.25,
                        2.0 * (t + 1.0) * 0.125,
                    ];
                })
            })
            .collect();
        for g in check_condensation_growth(&recs, &config) {
            assert!((g.fitted_growth.unwrap() - 2.0).abs() < 1e-12, "{g:?}");
            assert!(g.ok);
        }
        let empty_below: Vec<_> = (0..200)
            .map(|i| record_with(i as f64 * 0.05, |_| {}))
            .collect();
        for g in check_condensation_growth(&empty_below, &config) {
            assert!(g.fitted_growth.is_none() && g.notice.is_some());
        }
        let short: Vec<_> = (0..3)
            .map(|i| record_with(i as f64, |d| d.shell_below = vec![1.0; 3]))
            .collect();
        assert!(check_condensation_growth(&short, &config)
            .iter()
            .all(|g| g.notice.is_some()));
    }

    #[test]
    fn concentration_all_mass_below() {
        let recs = vec![record_with(0.0, |d| {
            d.positive_mass = 2.0;
            d.concentration_below = vec![2.0];
        })];
        let c = check_concentration(&recs, &cfg());
        assert_eq!(c[0].final_fraction, 1.0);
        assert!(c[0].trend_ok);
    }

    #[test]
    fn values_round_trip() {
        let config = cfg();
        let s = ShellState::from_shells(
            3,
            [
                (LatticeRadius::canonical(3, 1, 2), 0.5),
                (LatticeRadius::canonical(3, 1, 0), 1.0),
            ],
        );
        let d = DirectionFunctionals::measure(&s, &config, 1e-20);
        assert_eq!(d.values().len(), DirectionFunctionals::width(&config));
        assert_eq!(
            DirectionFunctionals::column_names(&config).len(),
            DirectionFunctionals::width(&config)
        );
        assert_eq!(
            DirectionFunctionals::from_values(&d.values(), &config).unwrap(),
            d
        );
    }
}
