//! Per-iteration sample budget across candidate models.
//!
//! The model with the largest weight gets about `B` samples and the others
//! proportionally fewer; weak models drop to a single sample and a clearly
//! dominant model takes the whole budget.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub n_total: usize,
    pub per_model: Vec<usize>,
    pub dominance_active: bool,
}

impl Allocation {
    /// Samples actually drawn in the iteration.
    pub fn samples(&self) -> usize {
        self.per_model.iter().sum()
    }
}

/// `ceil` that ignores floating-point noise just above an integer.
fn ceil_tol(x: f64) -> usize {
    (x - 1e-9 * x.abs().max(1.0)).ceil().max(0.0) as usize
}

/// Index of the largest weight; ties go to the lowest index.
pub fn leader(zeta: &[f64]) -> usize {
    let mut best = 0;
    for (i, &z) in zeta.iter().enumerate() {
        if z > zeta[best] {
            best = i;
        }
    }
    best
}

/// `N_s = ceil(B / zeta_max)`, `B_v = max(1, ceil(zeta_v N_s))`.
pub fn allocate(zeta: &[f64], b: usize) -> Allocation {
    let zmax = zeta[leader(zeta)];
    let n_total = ceil_tol(b as f64 / zmax);
    let per_model = zeta
        .iter()
        .map(|&z| ceil_tol(z * n_total as f64).max(1))
        .collect();
    Allocation {
        n_total,
        per_model,
        dominance_active: false,
    }
}

/// Applies the pruning rule (`zeta_v < kappa1 zeta_max` gets one sample)
/// and the dominance rule (`kappa2 zeta_max` above the runner-up gives the
/// leader `B` samples and everyone else one). Dominance wins when both fire.
pub fn prune(alloc: &Allocation, zeta: &[f64], kappa1: f64, kappa2: f64, b: usize) -> Allocation {
    let lead = leader(zeta);
    let zmax = zeta[lead];
    let second = zeta
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != lead)
        .map(|(_, &z)| z)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out = alloc.clone();
    if zeta.len() > 1 && kappa2 * zmax > second {
        out.dominance_active = true;
        for (i, n) in out.per_model.iter_mut().enumerate() {
            *n = if i == lead { b } else { 1 };
        }
        return out;
    }
    for (n, &z) in out.per_model.iter_mut().zip(zeta) {
        if z < kappa1 * zmax {
            *n = 1;
        }
    }
    out
}
