//! Model configuration shared by every stage of a run.

use serde::{Deserialize, Serialize};

use crate::lattice::{is_prime, LatticeRadius};

/// A configuration key that failed validation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("config key `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AngularProfile {
    Constant,
    Sinusoidal,
    RandomBand,
}

impl AngularProfile {
    pub fn name(&self) -> &'static str {
        match self {
            AngularProfile::Constant => "constant",
            AngularProfile::Sinusoidal => "sinusoidal",
            AngularProfile::RandomBand => "random-band",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "constant" => Some(AngularProfile::Constant),
            "sinusoidal" => Some(AngularProfile::Sinusoidal),
            "random-band" => Some(AngularProfile::RandomBand),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntegratorKind {
    Rk4,
    Patankar,
}

impl IntegratorKind {
    pub fn name(&self) -> &'static str {
        match self {
            IntegratorKind::Rk4 => "rk4",
            IntegratorKind::Patankar => "patankar",
        }
    }
}

/// Everything needed to build initial data, evolve it and evaluate the
/// tracked functionals.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub xi: u32,
    /// Weight 𝔠 > 1 of the lattice norm.
    pub norm_weight: f64,
    pub gamma: f64,
    pub init_c1: f64,
    pub init_c2: f64,
    pub init_c3: f64,
    /// Deepest initial shell `Ξ^(−ρ_max)`.
    pub rho_max: u32,
    pub eta_max: u32,
    pub r_max: LatticeRadius,
    pub n_dir: usize,
    pub angular_profile: AngularProfile,
    pub condensate_channel: bool,
    pub integrator: IntegratorKind,
    pub dt_max: f64,
    pub cfl_safety: f64,
    pub positivity_tol: f64,
    pub max_rejects: u32,
    pub t_end: f64,
    pub output_interval: f64,
    pub seed: u64,
    /// Frozen constant of the quadratic collision bound.
    pub c_q: f64,
    /// Picard horizon as a fraction of `1/(C_Q‖f‖)`.
    pub picard_c: f64,

    // tracked functionals
    /// `M` values for the tail masses `Σ_{level > M}`.
    pub tail_levels: Vec<u32>,
    /// `n` values for `phi_tilde(Ξ^(−n))`.
    pub phi_levels: Vec<u32>,
    /// `(ρ, ε)` pairs for the layer functional.
    pub layers: Vec<(u32, f64)>,
    /// `n` values for the shell masses at `Ξ^(−n)`.
    pub shell_levels: Vec<u32>,
    /// `n` values for the coercivity windows `[3c/4, c]`, `c = Ξ^(−n)`.
    pub coercivity_levels: Vec<u32>,
    /// `n` values for the concentration cut `c = Ξ^(−n)`.
    pub concentration_levels: Vec<u32>,
    /// `ε` and rate constant of the window schedule `τ_n`.
    pub window_eps: f64,
    pub window_rate_c1: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let xi = 3;
        ModelConfig {
            xi,
            norm_weight: 2.0,
            gamma: 1.0,
            init_c1: 30.0,
            init_c2: 1.0,
            init_c3: 1.0,
            rho_max: 6,
            eta_max: 12,
            r_max: LatticeRadius::canonical(xi, 4, 0),
            n_dir: 64,
            angular_profile: AngularProfile::Constant,
            condensate_channel: true,
            integrator: IntegratorKind::Rk4,
            dt_max: 1.0,
            cfl_safety: 0.5,
            positivity_tol: 1e-14,
            max_rejects: 30,
            t_end: 50.0,
            output_interval: 0.25,
            seed: 0x5eed,
            c_q: DEFAULT_C_Q,
            picard_c: 0.5,
            tail_levels: (0..=5).collect(),
            phi_levels: (0..=6).collect(),
            layers: (1..=4).map(|rho| (rho, 0.5)).collect(),
            shell_levels: vec![2, 3, 4],
            coercivity_levels: vec![0, 1, 2],
            concentration_levels: vec![1],
            window_eps: 1.0,
            window_rate_c1: 1.0,
        }
    }
}

/// Monte-Carlo calibrated constant for `Ξ = 3`, `𝔠 = 2`, `r_max = 4`,
/// levels up to 12 (see `collision::calibrate_cq`, worst 30.15 over
/// 2·10⁴ samples per depth), with a factor 2 margin.
pub const DEFAULT_C_Q: f64 = 61.0;

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.xi < 3 || !is_prime(self.xi) {
            return Err(ConfigError::new("xi", "Ξ must be prime ≥ 3"));
        }
        if self.r_max.xi() != self.xi {
            return Err(ConfigError::new("r_max", "radius built for a different Ξ"));
        }
        if !(self.norm_weight > 1.0) {
            return Err(ConfigError::new("norm_weight", "𝔠 must exceed 1"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(ConfigError::new("gamma", "γ must lie in (0, 1]"));
        }
        if !(self.init_c2 > 0.0) {
            return Err(ConfigError::new("init_c2", "𝒞₂ must be positive"));
        }
        if !(self.init_c3 > 0.0) {
            return Err(ConfigError::new("init_c3", "𝒞₃ must be positive"));
        }
        if !(self.init_c1 > self.init_c2) {
            return Err(ConfigError::new("init_c1", "𝒞₁ must exceed 𝒞₂"));
        }
        let ratio = self.init_c1 / (self.init_c2 * self.init_c3);
        if !(ratio > 10.0) {
            return Err(ConfigError::new(
                "init_c1",
                format!("𝒞₁/(𝒞₂𝒞₃) must exceed 10, got {ratio}"),
            ));
        }
        if self.eta_max < self.rho_max {
            return Err(ConfigError::new("eta_max", "η_max must be ≥ ρ_max"));
        }
        if self.r_max.is_zero() {
            return Err(ConfigError::new("r_max", "r_max must be positive"));
        }
        if self.r_max.level() > self.eta_max {
            return Err(ConfigError::new("r_max", "r_max level exceeds η_max"));
        }
        if self.r_max.value() < 1.0 {
            return Err(ConfigError::new(
                "r_max",
                "r_max must be ≥ 1 to hold the initial shells",
            ));
        }
        if self.n_dir == 0 {
            return Err(ConfigError::new("n_dir", "need at least one direction"));
        }
        for (key, v) in [
            ("dt_max", self.dt_max),
            ("t_end", self.t_end + f64::MIN_POSITIVE),
            ("output_interval", self.output_interval),
            ("positivity_tol", self.positivity_tol),
            ("c_q", self.c_q),
            ("picard_c", self.picard_c),
            ("window_eps", self.window_eps),
            ("window_rate_c1", self.window_rate_c1),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::new(key, "must be a positive finite number"));
            }
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(ConfigError::new("cfl_safety", "must lie in (0, 1]"));
        }
        if self.layers.iter().any(|&(_, eps)| !(eps >= 0.0)) {
            return Err(ConfigError::new("layers", "ε must be nonnegative"));
        }
        Ok(())
    }

    /// `Ξ^(−n)` as a lattice radius.
    pub fn inverse_power(&self, n: u32) -> LatticeRadius {
        LatticeRadius::inverse_power(self.xi, n)
    }
}
