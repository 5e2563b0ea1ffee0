//! Dynamic average consensus over the cell neighbor graph.
//!
//! Each cell keeps an estimate `rho_m` of the network-wide mean load and, once
//! per slot, replaces it with
//!
//! ```text
//! rho_m <- rho_m + (L_m(t+1) - L_m(t)) + sum_{j in N_m} (rho_j - rho_m) / |N_m|
//! ```
//!
//! using only its neighbors' estimates from the previous round. The error
//! against the true mean stays within `(3 - lambda) / (1 - lambda) * zeta`
//! when loads and their per-slot changes are bounded by `zeta` and `lambda`,
//! the largest non-unit eigenvalue modulus of the weight matrix, is below one.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsensusConfig {
    /// Neighbor distance threshold chi in meters.
    pub neighbor_distance_m: f64,
    /// Mix half self-weight into every row; off by default.
    pub lazy: bool,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            neighbor_distance_m: 2000.0,
            lazy: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    pub neighbors: Vec<Vec<usize>>,
    /// Row-major M x M consensus weights.
    pub weights: Vec<f64>,
    /// Largest eigenvalue modulus of the weights off the consensus direction.
    pub lambda: f64,
    pub lazy: bool,
}

impl NeighborGraph {
    pub fn build(centers: &[[f64; 2]], chi: f64, lazy: bool) -> Result<Self> {
        let m = centers.len();
        if m < 2 {
            return Err(Error::Precondition(format!("consensus graph needs at least 2 cells, got {m}")));
        }
        let neighbors: Vec<Vec<usize>> = (0..m)
            .map(|a| {
                (0..m)
                    .filter(|&b| {
                        b != a && {
                            let (dx, dy) = (centers[a][0] - centers[b][0], centers[a][1] - centers[b][1]);
                            (dx * dx + dy * dy).sqrt() <= chi
                        }
                    })
                    .collect()
            })
            .collect();
        Self::from_adjacency(neighbors, lazy)
    }

    pub fn from_adjacency(neighbors: Vec<Vec<usize>>, lazy: bool) -> Result<Self> {
        let m = neighbors.len();
        let components = connected_components(&neighbors);
        if components.len() > 1 {
            return Err(Error::Disconnected { components });
        }
        let mut weights = vec![0.0; m * m];
        for (a, nb) in neighbors.iter().enumerate() {
            let share = if lazy { 0.5 } else { 1.0 } / nb.len() as f64;
            for &b in nb {
                weights[a * m + b] = share;
            }
            if lazy {
                weights[a * m + a] = 0.5;
            }
        }
        let lambda = disagreement_radius(&neighbors, lazy);
        if lambda >= 1.0 - 1e-12 {
            tracing::warn!(lambda, "consensus spectral radius is not below 1; error bound is vacuous");
        }
        Ok(Self {
            neighbors,
            weights,
            lambda,
            lazy,
        })
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn weight(&self, a: usize, b: usize) -> f64 {
        self.weights[a * self.len() + b]
    }

    /// Uniform-error bound `(3 - lambda) / (1 - lambda) * zeta`.
    pub fn uniform_bound(&self, zeta: f64) -> f64 {
        (3.0 - self.lambda) / (1.0 - self.lambda) * zeta
    }

    /// Asymptotic bound `2 zeta / (1 - lambda)`.
    pub fn asymptotic_bound(&self, zeta: f64) -> f64 {
        2.0 * zeta / (1.0 - self.lambda)
    }
}

fn connected_components(neighbors: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let m = neighbors.len();
    let mut label = vec![usize::MAX; m];
    let mut components = Vec::new();
    for root in 0..m {
        if label[root] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut members = vec![root];
        label[root] = id;
        let mut i = 0;
        while i < members.len() {
            for &b in &neighbors[members[i]] {
                if label[b] == usize::MAX {
                    label[b] = id;
                    members.push(b);
                }
            }
            i += 1;
        }
        members.sort_unstable();
        components.push(members);
    }
    components
}

/// The weights `D^-1 A` are similar to the symmetric `D^-1/2 A D^-1/2`, so
/// their spectrum is real; drop the Perron eigenvalue 1 and take the largest
/// remaining modulus.
fn disagreement_radius(neighbors: &[Vec<usize>], lazy: bool) -> f64 {
    let m = neighbors.len();
    let deg: Vec<f64> = neighbors.iter().map(|n| n.len() as f64).collect();
    let mut sym = DMatrix::<f64>::zeros(m, m);
    for (a, nb) in neighbors.iter().enumerate() {
        for &b in nb {
            sym[(a, b)] = 1.0 / (deg[a] * deg[b]).sqrt();
        }
    }
    if lazy {
        sym = sym * 0.5 + DMatrix::identity(m, m) * 0.5;
    }
    let mut eig: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig[1..].iter().fold(0.0f64, |acc, &e| acc.max(e.abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusState {
    pub estimates: Vec<f64>,
    pub last_loads: Vec<f64>,
}

impl ConsensusState {
    /// Seeds every estimate with the cell's own first load.
    pub fn new(initial_loads: &[f64]) -> Self {
        Self {
            estimates: initial_loads.to_vec(),
            last_loads: initial_loads.to_vec(),
        }
    }
}

/// One cell's update from its own history and its neighbors' estimates.
pub fn local_update<'a>(
    own: f64,
    old_load: f64,
    new_load: f64,
    neighbor_estimates: impl ExactSizeIterator<Item = &'a f64>,
    self_weight: f64,
) -> f64 {
    let n = neighbor_estimates.len() as f64;
    let pull: f64 = neighbor_estimates.map(|&r| r - own).sum::<f64>() / n;
    own + new_load - old_load + (1.0 - self_weight) * pull
}

/// Synchronous round: all cells read the pre-step estimates.
pub fn consensus_step(state: &mut ConsensusState, new_loads: &[f64], graph: &NeighborGraph) {
    let self_weight = if graph.lazy { 0.5 } else { 0.0 };
    let snapshot = state.estimates.clone();
    for (m, nb) in graph.neighbors.iter().enumerate() {
        state.estimates[m] = local_update(
            snapshot[m],
            state.last_loads[m],
            new_loads[m],
            nb.iter().map(|&j| &snapshot[j]),
            self_weight,
        );
    }
    state.last_loads.copy_from_slice(new_loads);
}

pub fn exact_average(loads: &[f64]) -> f64 {
    if loads.is_empty() {
        0.0
    } else {
        loads.iter().sum::<f64>() / loads.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lambda: f64,
    pub zeta: f64,
    pub max_error: f64,
    pub uniform_bound: f64,
    pub tail_max_error: f64,
    pub asymptotic_bound: f64,
    pub uniform_holds: bool,
    pub asymptotic_holds: bool,
    pub holds: bool,
    pub steps: usize,
}

/// Maximum over `(m, t)` of `|loads[t][m]|` and `|loads[t][m] - loads[t-1][m]|`.
pub fn empirical_zeta(loads: &[Vec<f64>]) -> f64 {
    let mut z = 0.0f64;
    for (t, row) in loads.iter().enumerate() {
        for (m, &l) in row.iter().enumerate() {
            z = z.max(l.abs());
            if t > 0 {
                z = z.max((l - loads[t - 1][m]).abs());
            }
        }
    }
    z
}

/// Runs consensus over a load trace (`loads[t][m]`) and checks the uniform
/// bound at every slot and the asymptotic bound over the trailing 20%.
pub fn verify_bound(loads: &[Vec<f64>], graph: &NeighborGraph, zeta: Option<f64>) -> Result<BoundReport> {
    if graph.lambda >= 1.0 {
        return Err(Error::Precondition(format!(
            "spectral radius {} is not below 1; the bound does not apply",
            graph.lambda
        )));
    }
    let Some(first) = loads.first() else {
        return Err(Error::Precondition("empty load trace".into()));
    };
    if loads.iter().any(|row| row.len() != graph.len()) {
        return Err(Error::Precondition("load trace width does not match graph".into()));
    }
    let zeta = zeta.unwrap_or_else(|| empirical_zeta(loads));
    for (t, row) in loads.iter().enumerate() {
        for (m, &l) in row.iter().enumerate() {
            let step = if t > 0 { (l - loads[t - 1][m]).abs() } else { 0.0 };
            if l.abs() > zeta || step > zeta {
                return Err(Error::Precondition(format!(
                    "load trace violates the boundedness assumption at cell {m}, slot {}",
                    t + 1
                )));
            }
        }
    }
    let mut state = ConsensusState::new(first);
    let tail_start = loads.len() - (loads.len() / 5).max(1);
    let (mut max_error, mut tail_max) = (0.0f64, 0.0f64);
    for (t, row) in loads.iter().enumerate() {
        if t > 0 {
            consensus_step(&mut state, row, graph);
        }
        let mean = exact_average(row);
        let err = state.estimates.iter().fold(0.0f64, |acc, &r| acc.max((r - mean).abs()));
        max_error = max_error.max(err);
        if t >= tail_start {
            tail_max = tail_max.max(err);
        }
    }
    let uniform_bound = graph.uniform_bound(zeta);
    let asymptotic_bound = graph.asymptotic_bound(zeta);
    let uniform_holds = max_error <= uniform_bound;
    let asymptotic_holds = tail_max <= asymptotic_bound;
    Ok(BoundReport {
        lambda: graph.lambda,
        zeta,
        max_error,
        uniform_bound,
        tail_max_error: tail_max,
        asymptotic_bound,
        uniform_holds,
        asymptotic_holds,
        holds: uniform_holds && asymptotic_holds,
        steps: loads.len(),
    })
}
