//! Exact Markov chain of the feedback line network: transition build,
//! stationary solve, capacity, and block-structure checks.

mod structure;
mod matrix;

pub use structure::{h_matrix_bound, verify_block_structure, HBoundReport, BlockStructureReport};
pub use matrix::{stationary, stationary_direct, SparseStochasticMatrix, StationaryDistribution, DIRECT_LIMIT};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{index0, state_at0, ChannelRealization, NetworkSpec, OccupancyState};

/// Default cap on the number of chain states.
pub const DEFAULT_STATE_CAP: usize = 10_000_000;

/// Solver settings shared by the exact chain and the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub state_cap: usize,
}

impl Default for ChainOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 1_000_000, state_cap: DEFAULT_STATE_CAP }
    }
}

impl ChainOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// Transfer indicators `y[i]` for link `i` (0-based), computed from the last
/// link backwards. A transfer needs a packet upstream, a link success and
/// room downstream once the downstream node has forwarded.
#[inline]
pub(crate) fn emc_transfers(s: &[u32], x: &[bool], m: &[u32], y: &mut [bool]) {
    let h = x.len();
    y[h - 1] = x[h - 1] && s[h - 2] > 0;
    for i in (1..h - 1).rev() {
        y[i] = x[i] && s[i - 1] > 0 && (s[i] < m[i] || y[i + 1]);
    }
    y[0] = x[0] && (s[0] < m[0] || y[1]);
}

#[inline]
pub(crate) fn emc_step_in_place(s: &mut [u32], x: &[bool], m: &[u32], y: &mut [bool]) {
    emc_transfers(s, x, m, y);
    for i in 0..s.len() {
        s[i] = s[i] + y[i] as u32 - y[i + 1] as u32;
    }
}

/// Per-link transfer indicators for one epoch.
pub fn auxiliary_y(s: &OccupancyState, x: &ChannelRealization, spec: &NetworkSpec) -> Vec<bool> {
    let mut y = vec![false; spec.h()];
    emc_transfers(&s.0, &x.0, spec.buffers(), &mut y);
    y
}

/// One epoch of the exact dynamics.
pub fn step_emc(s: &OccupancyState, x: &ChannelRealization, spec: &NetworkSpec) -> OccupancyState {
    let mut next = s.0.clone();
    let mut y = vec![false; spec.h()];
    emc_step_in_place(&mut next, &x.0, spec.buffers(), &mut y);
    OccupancyState(next)
}

/// Which one-epoch update a chain is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Dynamics {
    Exact,
    Approximate,
}

pub(crate) fn checked_size(spec: &NetworkSpec, cap: usize) -> Result<usize> {
    let n = spec.state_space_size();
    if n > cap as u128 {
        return Err(Error::CapacityExceeded { states: n, cap });
    }
    Ok(n as usize)
}

pub(crate) fn build_chain(spec: &NetworkSpec, cap: usize, dynamics: Dynamics) -> Result<SparseStochasticMatrix> {
    let n = checked_size(spec, cap)?;
    let h = spec.h();
    if h > 30 {
        return Err(Error::InvalidSpec(format!("{h} hops is too many to enumerate channel realizations")));
    }
    let m = spec.buffers();
    let eps = spec.eps();
    // Probability of every channel realization, bit i set = link i succeeds.
    let probs: Vec<f64> = (0u32..1 << h)
        .map(|mask| {
            (0..h)
                .map(|i| if mask >> i & 1 == 1 { 1.0 - eps[i] } else { eps[i] })
                .product()
        })
        .collect();
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![0u32; h - 1], vec![0u32; h - 1], vec![false; h], vec![false; h]),
            |(s, t, x, y), k| {
                state_at0(k, m, s);
                let mut row: Vec<(usize, f64)> = Vec::new();
                for (mask, &p) in probs.iter().enumerate() {
                    for (i, xi) in x.iter_mut().enumerate() {
                        *xi = mask >> i & 1 == 1;
                    }
                    t.copy_from_slice(s);
                    match dynamics {
                        Dynamics::Exact => emc_step_in_place(t, x, m, y),
                        Dynamics::Approximate => crate::amc::amc_step_in_place(t, x, m, y),
                    }
                    let c = index0(t, m);
                    match row.iter_mut().find(|e| e.0 == c) {
                        Some(e) => e.1 += p,
                        None => row.push((c, p)),
                    }
                }
                let total: f64 = row.iter().map(|e| e.1).sum();
                row.iter_mut().for_each(|e| e.1 /= total);
                row
            },
        )
        .collect();
    SparseStochasticMatrix::from_rows(rows)
}

/// Transition matrix of the exact chain (default state cap).
pub fn build_emc(spec: &NetworkSpec) -> Result<SparseStochasticMatrix> {
    build_chain(spec, DEFAULT_STATE_CAP, Dynamics::Exact)
}

pub fn build_emc_capped(spec: &NetworkSpec, cap: usize) -> Result<SparseStochasticMatrix> {
    build_chain(spec, cap, Dynamics::Exact)
}

/// Stationary law of the exact chain with derived throughput figures.
#[derive(Debug, Clone, Serialize)]
pub struct ExactSolution {
    pub states: usize,
    pub capacity: f64,
    pub stationary: StationaryDistribution,
    /// Long-run transfer rate on each link.
    pub link_rates: Vec<f64>,
}

/// `(1 - eps_h) Pr[s_{h-1} > 0]` under `pi`.
pub(crate) fn last_node_capacity(spec: &NetworkSpec, pi: &[f64]) -> f64 {
    let m = spec.buffers();
    let h = spec.h();
    let stride: usize = m[..h - 2].iter().map(|&b| b as usize + 1).product();
    let empty: f64 = pi[..stride].iter().sum();
    (1.0 - spec.eps()[h - 1]) * (1.0 - empty)
}

/// Expected per-link transfers under `pi`, enumerating channel realizations.
fn link_rates(spec: &NetworkSpec, pi: &[f64]) -> Vec<f64> {
    let h = spec.h();
    let m = spec.buffers();
    let eps = spec.eps();
    let probs: Vec<f64> = (0u32..1 << h)
        .map(|mask| (0..h).map(|i| if mask >> i & 1 == 1 { 1.0 - eps[i] } else { eps[i] }).product())
        .collect();
    let mut rates = vec![0.0; h];
    let (mut s, mut x, mut y) = (vec![0u32; h - 1], vec![false; h], vec![false; h]);
    for (k, &w) in pi.iter().enumerate() {
        state_at0(k, m, &mut s);
        for (mask, &p) in probs.iter().enumerate() {
            for (i, xi) in x.iter_mut().enumerate() {
                *xi = mask >> i & 1 == 1;
            }
            emc_transfers(&s, &x, m, &mut y);
            for (r, &yi) in rates.iter_mut().zip(y.iter()) {
                if yi {
                    *r += w * p;
                }
            }
        }
    }
    rates
}

pub fn solve_exact(spec: &NetworkSpec, opts: &ChainOptions) -> Result<ExactSolution> {
    let p = build_chain(spec, opts.state_cap, Dynamics::Exact)?;
    let st = stationary(&p, opts.tol, opts.max_iter)?;
    let capacity = last_node_capacity(spec, &st.pi);
    let link_rates = if spec.h() <= 16 { link_rates(spec, &st.pi) } else { Vec::new() };
    Ok(ExactSolution { states: p.dim(), capacity, stationary: st, link_rates })
}

/// Exact throughput capacity in packets per epoch.
pub fn capacity_exact(spec: &NetworkSpec, tol: f64) -> Result<f64> {
    Ok(solve_exact(spec, &ChainOptions::with_tol(tol))?.capacity)
}

/// Transfer rate on every interior link `2..h-1`; each equals the capacity by
/// flow conservation. A transfer into a full node still succeeds when that
/// node forwards in the same epoch, so the rate is taken from the transfer
/// indicators rather than from the occupancy marginals alone.
pub fn capacity_flow_crosscheck(spec: &NetworkSpec, tol: f64) -> Result<Vec<f64>> {
    let sol = solve_exact(spec, &ChainOptions::with_tol(tol))?;
    let h = spec.h();
    let interior: Vec<f64> = sol.link_rates[1..h - 1].to_vec();
    let slack = (10.0 * tol).max(1e-9);
    for (i, r) in interior.iter().enumerate() {
        if (r - sol.capacity).abs() > slack {
            return Err(Error::Inconsistency(format!(
                "link {} carries {r}, capacity is {}",
                i + 2,
                sol.capacity
            )));
        }
    }
    Ok(interior)
}

/// Occupancy-marginal form `(1 - eps_{i+1}) Pr[s_i > 0, s_{i+1} < m_{i+1}]`
/// for interior links. It ignores transfers into a full node that empties a
/// slot in the same epoch and so undercounts the flow.
pub fn flow_marginal_form(spec: &NetworkSpec, pi: &[f64]) -> Vec<f64> {
    let h = spec.h();
    let m = spec.buffers();
    let mut s = vec![0u32; h - 1];
    let mut out = vec![0.0; h.saturating_sub(2)];
    for (k, &w) in pi.iter().enumerate() {
        state_at0(k, m, &mut s);
        for i in 0..h - 2 {
            if s[i] > 0 && s[i + 1] < m[i + 1] {
                out[i] += w;
            }
        }
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o *= 1.0 - spec.eps()[i + 1];
    }
    out
}
