//! Minimum-cut solvers over module similarity graphs.
//!
//! Cosine similarities may be negative, where Stoer-Wagner's correctness
//! argument breaks down, so the exact brute-force enumeration (31
//! bipartitions at n = 6) is the default. The shifted Stoer-Wagner variant
//! runs on `w + 1 ≥ 0` and is kept for the solver-comparison study; the
//! shift adds `|Γ|·|Γᶜ|` to every cut weight, which biases it toward
//! unbalanced cuts, and its results are flagged approximate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutSolver {
    BruteForce,
    StoerWagnerShifted,
}

impl CutSolver {
    pub fn name(self) -> &'static str {
        match self {
            CutSolver::BruteForce => "brute_force",
            CutSolver::StoerWagnerShifted => "stoer_wagner_shifted",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutResult {
    /// One side of the bipartition, ascending module indices, always
    /// containing module 0.
    pub gamma: Vec<usize>,
    /// Cut weight on the unshifted similarities.
    pub weight: f64,
    /// True when produced by the shifted Stoer-Wagner heuristic.
    pub approximate: bool,
}

/// Cut weight of `gamma` against its complement under `s` (n×n row-major),
/// each unordered cross pair counted once.
pub fn cut_weight(s: &[f64], n: usize, gamma: &[usize]) -> f64 {
    let mut in_gamma = vec![false; n];
    for &i in gamma {
        in_gamma[i] = true;
    }
    let mut total = 0.0;
    for i in 0..n {
        if !in_gamma[i] {
            continue;
        }
        for j in 0..n {
            if !in_gamma[j] {
                total += s[i * n + j];
            }
        }
    }
    total
}

pub fn min_cut(s: &[f64], n: usize, solver: CutSolver) -> Result<CutResult> {
    if n < 2 {
        return Err(Error::InvalidArg(format!("min cut needs at least 2 vertices, got {n}")));
    }
    if s.len() != n * n {
        return Err(Error::InvalidArg(format!(
            "similarity matrix has {} entries, expected {}",
            s.len(),
            n * n
        )));
    }
    match solver {
        CutSolver::BruteForce => brute_force(s, n),
        CutSolver::StoerWagnerShifted => stoer_wagner_shifted(s, n),
    }
}

/// Enumerate every bipartition as a subset containing vertex 0
/// (2^(n-1) − 1 of them). Ties resolve to the lexicographically smallest
/// Γ.
fn brute_force(s: &[f64], n: usize) -> Result<CutResult> {
    if n > 16 {
        return Err(Error::InvalidArg(format!("brute-force cut limited to n <= 16, got {n}")));
    }
    let full = (1usize << n) - 1;
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut mask = 1usize;
    while mask < full {
        if mask & 1 == 1 {
            let gamma: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
            let weight = cut_weight(s, n, &gamma);
            let better = match &best {
                None => true,
                Some((bw, bg)) => weight < *bw || (weight == *bw && gamma < *bg),
            };
            if better {
                best = Some((weight, gamma));
            }
        }
        mask += 2;
    }
    let (weight, gamma) = best.expect("n >= 2 yields at least one bipartition");
    Ok(CutResult { gamma, weight, approximate: false })
}

fn stoer_wagner_shifted(s: &[f64], n: usize) -> Result<CutResult> {
    // Shift off-diagonal weights into [0, 2]; cosine entries are >= -1.
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w[i][j] = s[i * n + j] + 1.0;
            }
        }
    }
    let side = stoer_wagner(n, w);
    let mut gamma = if side.contains(&0) {
        side
    } else {
        (0..n).filter(|i| !side.contains(i)).collect()
    };
    gamma.sort_unstable();
    let weight = cut_weight(s, n, &gamma);
    Ok(CutResult { gamma, weight, approximate: true })
}

/// Classic Stoer-Wagner on nonnegative weights: repeated maximum-adjacency
/// phases, merging the last two vertices of each phase. Ties in the
/// adjacency search resolve to the smallest vertex index, which keeps the
/// result deterministic.
fn stoer_wagner(n: usize, mut w: Vec<Vec<f64>>) -> Vec<usize> {
    let mut groups: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut active: Vec<usize> = (0..n).collect();
    let mut best_weight = f64::INFINITY;
    let mut best_side: Vec<usize> = vec![0];

    while active.len() > 1 {
        let mut in_a = vec![false; n];
        let mut key = vec![0.0f64; n];
        let mut order = Vec::with_capacity(active.len());
        for _ in 0..active.len() {
            let mut pick = None;
            for &v in &active {
                if in_a[v] {
                    continue;
                }
                let better = match pick {
                    None => true,
                    Some(p) => key[v] > key[p],
                };
                if better {
                    pick = Some(v);
                }
            }
            let u = pick.expect("some vertex remains");
            in_a[u] = true;
            order.push(u);
            for &v in &active {
                if !in_a[v] {
                    key[v] += w[u][v];
                }
            }
        }
        let t = order[order.len() - 1];
        let s_vertex = order[order.len() - 2];
        let cut_of_phase = key[t];
        if cut_of_phase < best_weight {
            best_weight = cut_of_phase;
            best_side = groups[t].clone();
        }
        // Merge t into s.
        let t_group = std::mem::take(&mut groups[t]);
        groups[s_vertex].extend(t_group);
        for &v in &active {
            if v != t && v != s_vertex {
                w[s_vertex][v] += w[t][v];
                w[v][s_vertex] = w[s_vertex][v];
            }
        }
        active.retain(|&v| v != t);
    }
    best_side
}
