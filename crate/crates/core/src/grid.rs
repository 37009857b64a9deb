//! Dense working representation of one direction.
//!
//! Every radius of level `≤ L` and value `≤ r_max` is an integer multiple
//! `n·Ξ^(−L)`, so a direction's shells fit in a flat vector indexed by `n`.
//! Sums and differences never deepen the level, which keeps the grid closed
//! under collisions apart from merges that leave through `r_max`.

use crate::lattice::{xi_pow, LatticeError, LatticeRadius};
use crate::state::ShellState;

/// Largest grid the dense kernel is used for.
pub const MAX_GRID_LEN: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridShape {
    pub xi: u32,
    pub level: u32,
    /// Last index, `⌊r_max·Ξ^L⌋`.
    pub n_max: usize,
    scale: u128,
}

impl GridShape {
    pub fn new(xi: u32, level: u32, n_max: usize) -> Result<Self, LatticeError> {
        let scale = xi_pow(xi, level)?;
        if n_max + 1 > MAX_GRID_LEN {
            return Err(LatticeError::Overflow);
        }
        Ok(GridShape {
            xi,
            level,
            n_max,
            scale,
        })
    }

    /// Grid at level `level` covering radii up to `r_max`.
    pub fn with_limit(level: u32, r_max: &LatticeRadius) -> Result<Self, LatticeError> {
        let xi = r_max.xi();
        let n = if r_max.level() <= level {
            r_max.numerator_at(level)?
        } else {
            r_max.numerator() / xi_pow(xi, r_max.level() - level)?
        };
        let n_max = usize::try_from(n).map_err(|_| LatticeError::Overflow)?;
        Self::new(xi, level, n_max)
    }

    pub fn len(&self) -> usize {
        self.n_max + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn radius(&self, n: usize) -> LatticeRadius {
        LatticeRadius::canonical(self.xi, n as u128, self.level)
    }

    /// Same rounding as [`LatticeRadius::value`] on the canonical radius.
    pub fn value(&self, n: usize) -> f64 {
        self.radius(n).value()
    }

    pub fn index(&self, r: &LatticeRadius) -> Option<usize> {
        if r.level() > self.level {
            return None;
        }
        let n = usize::try_from(r.numerator_at(self.level).ok()?).ok()?;
        (n <= self.n_max).then_some(n)
    }

    pub fn scale(&self) -> f64 {
        self.scale as f64
    }

    /// Radius values for every index, computed once per grid.
    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|n| self.value(n)).collect()
    }
}

/// Shell amplitudes of one direction laid out on a [`GridShape`].
#[derive(Debug, Clone, PartialEq)]
pub struct DenseShells {
    pub amps: Vec<f64>,
    pub condensate: f64,
    pub overflow_mass: f64,
    pub overflow_energy: f64,
}

impl DenseShells {
    pub fn from_state(shape: &GridShape, state: &ShellState) -> Option<Self> {
        let mut amps = vec![0.0; shape.len()];
        for (r, g) in state.shells() {
            amps[shape.index(r)?] = *g;
        }
        Some(DenseShells {
            amps,
            condensate: state.condensate,
            overflow_mass: state.overflow_mass,
            overflow_energy: state.overflow_energy,
        })
    }

    pub fn to_state(&self, shape: &GridShape) -> ShellState {
        let mut s = ShellState::from_shells(
            shape.xi,
            self.amps
                .iter()
                .enumerate()
                .skip(1)
                .filter(|(_, g)| **g != 0.0)
                .map(|(n, g)| (shape.radius(n), *g)),
        );
        s.condensate = self.condensate;
        s.overflow_mass = self.overflow_mass;
        s.overflow_energy = self.overflow_energy;
        s
    }

    pub fn positive_mass(&self) -> f64 {
        self.amps.iter().sum()
    }

    pub fn max_amplitude(&self) -> f64 {
        self.amps.iter().fold(0.0, |a, &g| a.max(g))
    }
}

/// Collision rates on a grid, split into gains and per-unit losses so both
/// explicit and Patankar-type schemes can use them.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseRates {
    /// Gain rate at each index.
    pub production: Vec<f64>,
    /// Loss rate per unit amplitude: the loss at `b` is `destruction[b]·g_b`.
    pub destruction: Vec<f64>,
    /// `Σ g_a²`; the condensate gains twice this.
    pub diagonal_sq: f64,
    pub overflow_mass: f64,
    pub overflow_energy: f64,
}

impl DenseRates {
    pub fn zeros(len: usize) -> Self {
        DenseRates {
            production: vec![0.0; len],
            destruction: vec![0.0; len],
            diagonal_sq: 0.0,
            overflow_mass: 0.0,
            overflow_energy: 0.0,
        }
    }

    /// Net rate at index `n` for amplitudes `g`.
    #[inline]
    pub fn net(&self, g: &[f64], n: usize) -> f64 {
        self.production[n] - self.destruction[n] * g[n]
    }
}

/// Assembles the collision brackets on a grid.
///
/// For amplitudes `g` (index 0 ignored) this collects, over unordered pairs
/// `a < b`, `+2g_ag_b` at `a+b` and `b−a` and `−4g_ag_b` at `b`; and per shell
/// `+g_a²` at `2a`, `−2g_a²` at `a`. Merges landing past `n_max` go to the
/// overflow rates.
pub fn assemble(shape: &GridShape, g: &[f64], out: &mut DenseRates) {
    let n = shape.n_max;
    debug_assert_eq!(g.len(), n + 1);
    let prod = &mut out.production;
    let dest = &mut out.destruction;
    prod.iter_mut().for_each(|p| *p = 0.0);

    // merges inside the grid
    for a in 1..=n / 2 {
        let ga = g[a];
        if ga == 0.0 {
            continue;
        }
        prod[2 * a] += ga * ga;
        let hi = n - a;
        if hi > a {
            let ga2 = 2.0 * ga;
            for (p, &gb) in prod[2 * a + 1..=a + hi].iter_mut().zip(&g[a + 1..=hi]) {
                *p += ga2 * gb;
            }
        }
    }
    // splits b − a = r
    for a in 1..n {
        let ga2 = 2.0 * g[a];
        if ga2 == 0.0 {
            continue;
        }
        for (p, &gb) in prod[1..=n - a].iter_mut().zip(&g[a + 1..=n]) {
            *p += ga2 * gb;
        }
    }
    prod[0] = 0.0;

    // losses and the overflow of ordered pairs with a + b > n
    let mut below = 0.0;
    let mut sq = 0.0;
    dest[0] = 0.0;
    for b in 1..=n {
        let gb = g[b];
        dest[b] = 4.0 * below + 2.0 * gb;
        below += gb;
        sq += gb * gb;
    }
    out.diagonal_sq = sq;

    // suffix sums over b > n − a
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut om = 0.0;
    let mut oe = 0.0;
    for a in 1..=n {
        let b = n + 1 - a;
        s0 += g[b];
        s1 += b as f64 * g[b];
        let ga = g[a];
        if ga != 0.0 {
            om += ga * s0;
            oe += ga * (a as f64 * s0 + s1);
        }
    }
    out.overflow_mass = om;
    out.overflow_energy = oe / shape.scale();
}
