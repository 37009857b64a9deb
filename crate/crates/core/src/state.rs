//! Shell amplitudes per angular direction, the lattice norm and initial data.
//!
//! A direction's measure is a finite sum of atoms `g_r δ_{|k| = r}` on lattice
//! radii plus a condensate atom at `|k| = 0`. The amplitude `g_r` is the
//! `d|k|`-mass of the circle of radius `r` in that direction.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{AngularProfile, ConfigError, ModelConfig};
use crate::lattice::LatticeRadius;

/// Amplitudes below this are deleted from the support.
pub const DROP_THRESHOLD: f64 = 1e-30;

/// One angular direction: sparse shells, condensate and truncation losses.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellState {
    xi: u32,
    shells: BTreeMap<LatticeRadius, f64>,
    pub condensate: f64,
    /// Mass pushed beyond `r_max`.
    pub overflow_mass: f64,
    /// Radius-weighted mass pushed beyond `r_max`.
    pub overflow_energy: f64,
}

impl ShellState {
    pub fn new(xi: u32) -> Self {
        ShellState {
            xi,
            shells: BTreeMap::new(),
            condensate: 0.0,
            overflow_mass: 0.0,
            overflow_energy: 0.0,
        }
    }

    pub fn from_shells(xi: u32, shells: impl IntoIterator<Item = (LatticeRadius, f64)>) -> Self {
        let mut s = Self::new(xi);
        for (r, g) in shells {
            s.add_amplitude(r, g);
        }
        s
    }

    pub fn xi(&self) -> u32 {
        self.xi
    }

    /// Adds `g` to the shell at `r`. Zero radii feed the condensate.
    pub fn add_amplitude(&mut self, r: LatticeRadius, g: f64) {
        debug_assert_eq!(r.xi(), self.xi);
        if r.is_zero() {
            self.condensate += g;
        } else if g != 0.0 {
            *self.shells.entry(r).or_insert(0.0) += g;
        }
    }

    /// Replaces the amplitude at `r`; a zero amplitude removes the shell.
    pub fn set_amplitude(&mut self, r: LatticeRadius, g: f64) {
        if g == 0.0 {
            self.shells.remove(&r);
        } else {
            self.shells.insert(r, g);
        }
    }

    pub fn amplitude(&self, r: &LatticeRadius) -> f64 {
        self.shells.get(r).copied().unwrap_or(0.0)
    }

    pub fn shells(&self) -> impl Iterator<Item = (&LatticeRadius, &f64)> + '_ {
        self.shells.iter()
    }

    pub fn support(&self) -> Vec<LatticeRadius> {
        self.shells.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.shells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shells.is_empty()
    }

    pub fn max_level(&self) -> u32 {
        self.shells.keys().map(|r| r.level()).max().unwrap_or(0)
    }

    pub fn max_amplitude(&self) -> f64 {
        self.shells.values().fold(0.0, |a, &g| a.max(g))
    }

    /// Deletes shells under [`DROP_THRESHOLD`]; returns the removed mass.
    pub fn drop_small(&mut self) -> f64 {
        let mut dropped = 0.0;
        self.shells.retain(|_, g| {
            if g.abs() < DROP_THRESHOLD {
                dropped += g.abs();
                false
            } else {
                true
            }
        });
        dropped
    }

    /// `Σ_level |g|` per level.
    pub fn level_sums(&self) -> BTreeMap<u32, f64> {
        let mut sums = BTreeMap::new();
        for (r, g) in &self.shells {
            *sums.entry(r.level()).or_insert(0.0) += g.abs();
        }
        sums
    }

    /// The lattice norm restricted to this direction.
    pub fn snorm(&self, weight: f64) -> f64 {
        weighted_level_sup(&self.level_sums(), weight).max(self.condensate.abs())
    }

    pub fn positive_mass(&self) -> f64 {
        self.shells.values().sum()
    }

    /// Radius-weighted mass including what left through `r_max`.
    pub fn energy(&self) -> f64 {
        self.shells.iter().map(|(r, g)| r.value() * g).sum::<f64>() + self.overflow_energy
    }

    /// Mass on levels deeper than `m`.
    pub fn tail_mass(&self, m: u32) -> f64 {
        self.shells
            .iter()
            .filter(|(r, _)| r.level() > m)
            .map(|(_, g)| g)
            .sum()
    }

    /// `Σ_{level ≥ ρ} g_r ((1+ε)Ξ^(−ρ) − r)₊`.
    pub fn layer(&self, rho: u32, eps: f64) -> f64 {
        let cut = (1.0 + eps) * LatticeRadius::inverse_power(self.xi, rho).value();
        self.shells
            .iter()
            .filter(|(r, _)| r.level() >= rho)
            .map(|(r, g)| g * (cut - r.value()).max(0.0))
            .sum()
    }

    /// `Σ_{r>0} g_r (c − r)₊ + c·condensate`.
    pub fn phi_tilde(&self, c: f64) -> f64 {
        self.phi_positive(c) + c * self.condensate
    }

    /// The `(0, ∞)` part of [`phi_tilde`](Self::phi_tilde).
    pub fn phi_positive(&self, c: f64) -> f64 {
        self.shells
            .iter()
            .map(|(r, g)| g * (c - r.value()).max(0.0))
            .sum()
    }

    /// `Σ_{lo ≤ r ≤ hi} g_r`.
    pub fn band_mass(&self, lo: f64, hi: f64) -> f64 {
        self.shells
            .iter()
            .filter(|(r, _)| {
                let v = r.value();
                lo <= v && v <= hi
            })
            .map(|(_, g)| g)
            .sum()
    }

    /// Positive-radius mass strictly below `c`.
    pub fn mass_below(&self, c: &LatticeRadius) -> f64 {
        self.shells.range(..*c).map(|(_, g)| g).sum()
    }

    /// Positive-radius mass at radii `≤ c`.
    pub fn mass_up_to(&self, c: &LatticeRadius) -> f64 {
        self.shells.range(..=*c).map(|(_, g)| g).sum()
    }
}

/// `sup_η 𝔠^η · sums[η]`.
pub fn weighted_level_sup(sums: &BTreeMap<u32, f64>, weight: f64) -> f64 {
    sums.iter()
        .map(|(&eta, &s)| weight.powi(eta as i32) * s)
        .fold(0.0, f64::max)
}

/// All directions of the angular grid at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub directions: Vec<ShellState>,
    pub time: f64,
    pub config: Arc<ModelConfig>,
}

impl FullState {
    pub fn angle(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.directions.len() as f64
    }

    pub fn n_dir(&self) -> usize {
        self.directions.len()
    }
}

/// `max(sup_j condensate_j, sup_η 𝔠^η sup_j Σ_{level η} g)`.
pub fn snorm(state: &FullState) -> f64 {
    snorm_of(&state.directions, state.config.norm_weight)
}

pub fn snorm_of(directions: &[ShellState], weight: f64) -> f64 {
    let mut level_sup: BTreeMap<u32, f64> = BTreeMap::new();
    let mut cond: f64 = 0.0;
    for d in directions {
        cond = cond.max(d.condensate.abs());
        for (eta, s) in d.level_sums() {
            let e = level_sup.entry(eta).or_insert(0.0);
            *e = e.max(s);
        }
    }
    weighted_level_sup(&level_sup, weight).max(cond)
}

/// `R·𝔠^(−M−1)/(1 − 𝔠^(−1))`, the geometric tail allowed by a norm bound `R`.
pub fn tail_bound(r_bound: f64, weight: f64, m: u32) -> f64 {
    r_bound * weight.powi(-(m as i32) - 1) / (1.0 - 1.0 / weight)
}

/// Whether every direction's tail beyond level `m` respects the geometric
/// bound implied by `‖state‖ ≤ r_bound`.
pub fn appendix_tail_bound(state: &FullState, m: u32, r_bound: f64) -> bool {
    let bound = tail_bound(r_bound, state.config.norm_weight, m);
    let slack = 1e-12 * bound.abs().max(f64::MIN_POSITIVE);
    state
        .directions
        .iter()
        .all(|d| d.tail_mass(m) <= bound + slack)
}

/// Per-direction profile amplitudes `A_j ∈ [𝒞₂, 𝒞₁]`.
pub fn profile_values(config: &ModelConfig) -> Vec<f64> {
    let n = config.n_dir;
    let (lo, hi) = (config.init_c2, config.init_c1);
    match config.angular_profile {
        AngularProfile::Constant => vec![lo; n],
        AngularProfile::Sinusoidal => (0..n)
            .map(|j| {
                let theta = 2.0 * PI * j as f64 / n as f64;
                (lo + (hi - lo) * (1.0 + theta.sin()) / 2.0).clamp(lo, hi)
            })
            .collect(),
        AngularProfile::RandomBand => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            (0..n).map(|_| rng.gen_range(lo..=hi)).collect()
        }
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `𝒞₃^ρ/(ρ!)^γ`, the per-level shape of the initial data.
pub fn initial_weight(config: &ModelConfig, rho: u32) -> f64 {
    config.init_c3.powi(rho as i32) / factorial(rho).powf(config.gamma)
}

/// Initial data: one shell at `Ξ^(−ρ)` for each `ρ ≤ ρ_max`, with amplitude
/// `A_j 𝒞₃^ρ/(ρ!)^γ`, and no condensate.
pub fn build_initial(config: &ModelConfig) -> Result<FullState, ConfigError> {
    config.validate()?;
    let directions = profile_values(config)
        .into_iter()
        .map(|a| {
            ShellState::from_shells(
                config.xi,
                (0..=config.rho_max)
                    .map(|rho| (config.inverse_power(rho), a * initial_weight(config, rho))),
            )
        })
        .collect();
    Ok(FullState {
        directions,
        time: 0.0,
        config: Arc::new(config.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use proptest::prelude::*;

    fn rad(m: u128, eta: u32) -> LatticeRadius {
        LatticeRadius::new(3, m, eta).unwrap()
    }

    fn single(state: ShellState, weight: f64) -> FullState {
        let config = ModelConfig {
            norm_weight: weight,
            n_dir: 1,
            ..Default::default()
        };
        FullState {
            directions: vec![state],
            time: 0.0,
            config: Arc::new(config),
        }
    }

    #[test]
    fn initial_data_lower_bound() {
        let cfg = ModelConfig {
            rho_max: 2,
            n_dir: 3,
            ..Default::default()
        };
        let st = build_initial(&cfg).unwrap();
        assert_eq!(st.time, 0.0);
        for d in &st.directions {
            assert_eq!(d.len(), 3);
            assert_eq!(d.amplitude(&rad(1, 0)), 1.0);
            assert_eq!(d.amplitude(&rad(1, 1)), 1.0);
            assert_eq!(d.amplitude(&rad(1, 2)), 0.5);
            assert_eq!(d.condensate, 0.0);
        }
        let cfg = ModelConfig {
            rho_max: 0,
            n_dir: 1,
            ..Default::default()
        };
        let st = build_initial(&cfg).unwrap();
        assert_eq!(st.directions[0].support(), vec![rad(1, 0)]);
    }

    #[test]
    fn initial_data_rejects_assumption_violation() {
        let cfg = ModelConfig {
            init_c1: 5.0,
            ..Default::default()
        };
        assert!(build_initial(&cfg).is_err());
    }

    #[test]
    fn snorm_examples() {
        let s = ShellState::from_shells(3, [(rad(1, 0), 0.25), (rad(2, 1), 0.5)]);
        assert_eq!(snorm(&single(s, 2.0)), 1.0);
        assert_eq!(snorm(&single(ShellState::new(3), 2.0)), 0.0);
        let mut s = ShellState::new(3);
        s.condensate = 0.7;
        assert_eq!(snorm(&single(s, 2.0)), 0.7);
    }

    #[test]
    fn functional_examples() {
        let s = ShellState::from_shells(3, [(rad(1, 0), 1.0), (rad(2, 0), 1.0)]);
        assert_eq!(s.positive_mass(), 2.0);
        assert_eq!(s.energy(), 3.0);
        let s = ShellState::from_shells(3, [(rad(1, 0), 1.0), (rad(1, 1), 2.0)]);
        assert_eq!(s.tail_mass(0), 2.0);
        let mut s = ShellState::from_shells(3, [(rad(1, 0), 1.0)]);
        s.condensate = 0.5;
        assert_eq!(s.phi_tilde(2.0), 2.0);
        // layer at ρ = 1, ε = 0.5 sees only the level-1 shell at 1/3
        let s = ShellState::from_shells(3, [(rad(1, 0), 1.0), (rad(1, 1), 2.0)]);
        assert!((s.layer(1, 0.5) - 2.0 * (1.5 / 3.0 - 1.0 / 3.0)).abs() < 1e-15);
        assert_eq!(s.band_mass(0.25, 1.0 / 3.0), 2.0);
        assert_eq!(s.mass_below(&rad(1, 0)), 2.0);
        assert_eq!(s.mass_up_to(&rad(1, 0)), 3.0);
    }

    #[test]
    fn tail_bound_examples() {
        let s = ShellState::from_shells(3, [(rad(1, 3), 0.125)]);
        assert!(appendix_tail_bound(&single(s, 2.0), 5, 1.0));
        let s = ShellState::from_shells(
            3,
            (1..=5).map(|eta| (rad(1, eta), 2f64.powi(-(eta as i32)))),
        );
        let st = single(s, 2.0);
        assert!((st.directions[0].tail_mass(2) - 0.21875).abs() < 1e-15);
        assert_eq!(tail_bound(1.0, 2.0, 2), 0.25);
        assert!(appendix_tail_bound(&st, 2, 1.0));
    }

    #[test]
    fn drop_small_removes_tiny_shells() {
        let mut s = ShellState::from_shells(3, [(rad(1, 0), 1e-31), (rad(2, 0), 1.0)]);
        let dropped = s.drop_small();
        assert_eq!(dropped, 1e-31);
        assert_eq!(s.support(), vec![rad(2, 0)]);
    }

    fn arb_state() -> impl Strategy<Value = ShellState> {
        proptest::collection::vec((0u32..6, 1u128..40, 0.0f64..1.0), 0..20).prop_map(|v| {
            let mut s = ShellState::from_shells(
                3,
                v.into_iter()
                    .map(|(eta, m, g)| (LatticeRadius::canonical(3, m, eta), g)),
            );
            s.condensate = 0.3;
            s
        })
    }

    proptest! {
        #[test]
        fn initial_data_inside_band(seed in any::<u64>(), profile in 0usize..3, gamma in 0.1f64..=1.0) {
            let profile = [AngularProfile::Constant, AngularProfile::Sinusoidal, AngularProfile::RandomBand][profile];
            let cfg = ModelConfig { seed, angular_profile: profile, gamma, n_dir: 16, ..Default::default() };
            let st = build_initial(&cfg).unwrap();
            for d in &st.directions {
                for rho in 0..=cfg.rho_max {
                    let g = d.amplitude(&cfg.inverse_power(rho));
                    let w = initial_weight(&cfg, rho);
                    prop_assert!(cfg.init_c2 * w <= g * (1.0 + 1e-15));
                    prop_assert!(g <= cfg.init_c1 * w * (1.0 + 1e-15));
                }
                prop_assert_eq!(d.condensate, 0.0);
            }
        }

        #[test]
        fn phi_tilde_bounds(s in arb_state(), c in 0.01f64..5.0) {
            let v = s.phi_tilde(c);
            prop_assert!(v >= 0.0);
            prop_assert!(v <= c * (s.positive_mass() + s.condensate) * (1.0 + 1e-12));
        }

        #[test]
        fn tail_bound_holds_below_norm(s in arb_state(), m in 0u32..8, weight in 1.1f64..4.0) {
            let st = single(s, weight);
            let r = snorm(&st);
            prop_assert!(appendix_tail_bound(&st, m, r));
        }
    }
}
