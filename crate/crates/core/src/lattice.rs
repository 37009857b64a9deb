//! Exact arithmetic on the Ξ-adic circular lattice.
//!
//! A radius is stored as an integer pair `(m, η)` standing for `m·Ξ^(−η)`.
//! For `η ≥ 1` the numerator is never divisible by Ξ, which makes the pair
//! unique; integer radii live at level 0 with any positive numerator. The
//! distinguished zero radius carries the condensate.
//!
//! Sums and differences of two radii land on a level no deeper than the deeper
//! input, so a shell system seeded on finitely many levels never leaves them.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Errors raised by lattice arithmetic.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LatticeError {
    #[error("invalid lattice parameter: {0}")]
    Parameter(String),
    #[error("lattice domain error: {0}")]
    Domain(String),
    #[error("lattice numerator overflow")]
    Overflow,
}

pub fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u32;
    while (d as u64) * (d as u64) <= n as u64 {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

fn check_xi(xi: u32) -> Result<(), LatticeError> {
    if xi >= 3 && is_prime(xi) {
        Ok(())
    } else {
        Err(LatticeError::Parameter(format!(
            "Ξ must be prime ≥ 3, got {xi}"
        )))
    }
}

/// `Ξ^e` with overflow detection.
pub fn xi_pow(xi: u32, e: u32) -> Result<u128, LatticeError> {
    (xi as u128).checked_pow(e).ok_or(LatticeError::Overflow)
}

/// `Υ(μ, ν) = Ξμ − ν`, the level-0 numerators of the lattice.
pub fn upsilon(xi: u32, mu: u128, nu: u32) -> Result<u128, LatticeError> {
    check_xi(xi)?;
    if mu == 0 {
        return Err(LatticeError::Parameter("μ must be ≥ 1".into()));
    }
    if nu == 0 || nu >= xi {
        return Err(LatticeError::Parameter(format!(
            "ν must lie in [1, {}], got {nu}",
            xi - 1
        )));
    }
    (xi as u128)
        .checked_mul(mu)
        .map(|v| v - nu as u128)
        .ok_or(LatticeError::Overflow)
}

/// Inverse of [`upsilon`]: the unique `(μ, ν)` with `Ξμ − ν = m`.
pub fn decompose(xi: u32, m: u128) -> Result<(u128, u32), LatticeError> {
    check_xi(xi)?;
    let x = xi as u128;
    if m == 0 || m.is_multiple_of(x) {
        return Err(LatticeError::Domain(format!(
            "{m} is not a lattice numerator for Ξ = {xi}"
        )));
    }
    let nu = (x - m % x) as u32;
    Ok(((m + nu as u128) / x, nu))
}

/// A radius `m·Ξ^(−η)` in canonical form, or the zero radius.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeRadius {
    xi: u32,
    m: u128,
    eta: u32,
}

impl LatticeRadius {
    pub fn zero(xi: u32) -> Self {
        LatticeRadius { xi, m: 0, eta: 0 }
    }

    /// Canonical representative of `m_raw·Ξ^(−η_raw)`.
    ///
    /// Factors of Ξ are stripped from the numerator while the level is
    /// positive; integer radii stay at level 0 whatever their numerator.
    pub fn canonical(xi: u32, m_raw: u128, eta_raw: u32) -> Self {
        if m_raw == 0 {
            return Self::zero(xi);
        }
        let x = xi as u128;
        let (mut m, mut eta) = (m_raw, eta_raw);
        while eta > 0 && m % x == 0 {
            m /= x;
            eta -= 1;
        }
        LatticeRadius { xi, m, eta }
    }

    /// `m` must already be canonical for level `eta`.
    pub fn new(xi: u32, m: u128, eta: u32) -> Result<Self, LatticeError> {
        check_xi(xi)?;
        if m == 0 {
            return Err(LatticeError::Domain(
                "use LatticeRadius::zero for |k| = 0".into(),
            ));
        }
        if eta > 0 && m.is_multiple_of(xi as u128) {
            return Err(LatticeError::Domain(format!(
                "({m}, {eta}) is not canonical for Ξ = {xi}"
            )));
        }
        Ok(LatticeRadius { xi, m, eta })
    }

    /// `Ξ^(−η)`.
    pub fn inverse_power(xi: u32, eta: u32) -> Self {
        LatticeRadius { xi, m: 1, eta }
    }

    pub fn xi(&self) -> u32 {
        self.xi
    }
    pub fn numerator(&self) -> u128 {
        self.m
    }
    pub fn level(&self) -> u32 {
        self.eta
    }
    pub fn is_zero(&self) -> bool {
        self.m == 0
    }

    /// Real value of the radius.
    pub fn value(&self) -> f64 {
        if self.m == 0 {
            return 0.0;
        }
        self.m as f64 / (self.xi as f64).powi(self.eta as i32)
    }

    /// Numerator after re-expressing the radius at the deeper level `level`.
    pub fn numerator_at(&self, level: u32) -> Result<u128, LatticeError> {
        debug_assert!(level >= self.eta || self.m == 0);
        if self.m == 0 {
            return Ok(0);
        }
        self.m
            .checked_mul(xi_pow(self.xi, level - self.eta)?)
            .ok_or(LatticeError::Overflow)
    }

    pub fn add(&self, other: &Self) -> Result<Self, LatticeError> {
        debug_assert_eq!(self.xi, other.xi);
        let level = self.eta.max(other.eta);
        let sum = self
            .numerator_at(level)?
            .checked_add(other.numerator_at(level)?)
            .ok_or(LatticeError::Overflow)?;
        Ok(Self::canonical(self.xi, sum, level))
    }

    /// `self − smaller`; fails when `smaller` is the larger radius.
    pub fn sub(&self, smaller: &Self) -> Result<Self, LatticeError> {
        debug_assert_eq!(self.xi, smaller.xi);
        let level = self.eta.max(smaller.eta);
        let (a, b) = (self.numerator_at(level)?, smaller.numerator_at(level)?);
        if a < b {
            return Err(LatticeError::Domain(format!(
                "{self} − {smaller} is negative"
            )));
        }
        Ok(Self::canonical(self.xi, a - b, level))
    }

    /// `2·self`.
    pub fn double(&self) -> Result<Self, LatticeError> {
        self.add(self)
    }

    /// `self / 2`, which is a lattice radius only for an even numerator (Ξ is odd).
    pub fn half(&self) -> Option<Self> {
        self.m
            .is_multiple_of(2)
            .then(|| Self::canonical(self.xi, self.m / 2, self.eta))
    }
}

impl Ord for LatticeRadius {
    fn cmp(&self, other: &Self) -> Ordering {
        debug_assert_eq!(self.xi, other.xi);
        match (self.m == 0, other.m == 0) {
            (true, true) => return Ordering::Equal,
            (true, false) => return Ordering::Less,
            (false, true) => return Ordering::Greater,
            _ => {}
        }
        let level = self.eta.max(other.eta);
        // a numerator that overflows u128 at the common level is larger than
        // one that fits
        match (self.numerator_at(level), other.numerator_at(level)) {
            (Ok(a), Ok(b)) => a.cmp(&b),
            (Err(_), Ok(_)) => Ordering::Greater,
            (Ok(_), Err(_)) => Ordering::Less,
            (Err(_), Err(_)) => unreachable!("one side is already at the common level"),
        }
    }
}

impl PartialOrd for LatticeRadius {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for LatticeRadius {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.m == 0 {
            write!(f, "0")
        } else if self.eta == 0 {
            write!(f, "{}", self.m)
        } else {
            write!(f, "{}/{}^{}", self.m, self.xi, self.eta)
        }
    }
}

impl fmt::Debug for LatticeRadius {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.m, self.eta)
    }
}

/// Necessary condition for `a ∈ Θ_η`, `b ∈ Θ_ξ` with `a + b ∈ Θ_ρ`: two of the
/// three levels coincide and the third is not deeper than them.
pub fn resonance_level_feasible(eta: u32, xi_level: u32, rho: u32) -> bool {
    (eta == xi_level && eta >= rho)
        || (eta == rho && eta >= xi_level)
        || (xi_level == rho && xi_level >= eta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TripleKind {
    /// `a + b = c`
    Merge,
    /// `b − a = c`
    Split,
}

/// An exact resonance among three lattice radii.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ResonanceTriple {
    pub a: LatticeRadius,
    pub b: LatticeRadius,
    pub c: LatticeRadius,
    pub kind: TripleKind,
}

impl ResonanceTriple {
    pub fn is_exact(&self) -> bool {
        match self.kind {
            TripleKind::Merge => self.a.add(&self.b).map(|s| s == self.c).unwrap_or(false),
            TripleKind::Split => {
                self.b > self.a && self.b.sub(&self.a).map(|d| d == self.c).unwrap_or(false)
            }
        }
    }
}

/// All resonances that feed radius `r` from pairs in `support`.
///
/// Merges `a + b = r` are listed with `a ≤ b` (the diagonal `a = b = r/2`
/// included once), splits `b − a = r` with `b > a`. The zero radius never
/// takes part. Lookups go through a hash index of numerators re-expressed at
/// the deepest level present.
pub fn enumerate_interactions(
    support: &[LatticeRadius],
    r: &LatticeRadius,
) -> Result<Vec<ResonanceTriple>, LatticeError> {
    let mut out = Vec::new();
    if r.is_zero() {
        return Ok(out);
    }
    let level = support
        .iter()
        .map(|s| s.level())
        .chain(std::iter::once(r.level()))
        .max()
        .unwrap_or(0);
    let mut index: HashMap<u128, LatticeRadius> = HashMap::with_capacity(support.len());
    for s in support.iter().filter(|s| !s.is_zero()) {
        index.insert(s.numerator_at(level)?, *s);
    }
    let target = r.numerator_at(level)?;
    let mut keys: Vec<(&u128, &LatticeRadius)> = index.iter().collect();
    keys.sort_unstable_by_key(|(k, _)| **k);
    for (&ka, a) in keys {
        if ka < target {
            let kb = target - ka;
            if kb >= ka {
                if let Some(b) = index.get(&kb) {
                    out.push(ResonanceTriple {
                        a: *a,
                        b: *b,
                        c: *r,
                        kind: TripleKind::Merge,
                    });
                }
            }
        }
        if let Some(kb) = ka.checked_add(target) {
            if let Some(b) = index.get(&kb) {
                out.push(ResonanceTriple {
                    a: *a,
                    b: *b,
                    c: *r,
                    kind: TripleKind::Split,
                });
            }
        }
    }
    Ok(out)
}
