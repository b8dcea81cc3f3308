//! Approximate chain in which arrivals at a full node are dropped, giving
//! lower and upper capacity bounds, plus coupled-trajectory checks.

use serde::Serialize;

use crate::emc::{build_chain, emc_step_in_place, last_node_capacity, solve_exact, stationary, ChainOptions, Dynamics};
use crate::error::{Error, Result};
use crate::model::{stream_rng, ChannelRealization, NetworkSpec, OccupancyState};

/// One epoch of the drop-on-full dynamics. `y[i]` is set when link `i`
/// carries a packet, whether or not it is stored.
#[inline]
pub(crate) fn amc_step_in_place(s: &mut [u32], x: &[bool], m: &[u32], y: &mut [bool]) {
    let h = x.len();
    y[0] = x[0];
    for i in 1..h {
        y[i] = x[i] && s[i - 1] > 0;
    }
    for i in 0..h - 1 {
        let stored = y[i] && (s[i] < m[i] || y[i + 1]);
        s[i] = s[i] + stored as u32 - y[i + 1] as u32;
    }
}

pub fn step_amc(s: &OccupancyState, x: &ChannelRealization, spec: &NetworkSpec) -> OccupancyState {
    let mut next = s.0.clone();
    let mut y = vec![false; spec.h()];
    amc_step_in_place(&mut next, &x.0, spec.buffers(), &mut y);
    OccupancyState(next)
}

fn amc_capacity(spec: &NetworkSpec, opts: &ChainOptions) -> Result<f64> {
    let p = build_chain(spec, opts.state_cap, Dynamics::Approximate)?;
    let st = stationary(&p, opts.tol, opts.max_iter)?;
    Ok(last_node_capacity(spec, &st.pi))
}

/// Capacity of the drop-on-full chain; never exceeds the exact capacity.
pub fn capacity_lower(spec: &NetworkSpec, tol: f64) -> Result<f64> {
    amc_capacity(spec, &ChainOptions::with_tol(tol))
}

/// Drop-on-full capacity with prefix-summed buffers; never below the exact
/// capacity.
pub fn capacity_upper(spec: &NetworkSpec, tol: f64) -> Result<f64> {
    amc_capacity(&spec.prefix_summed(), &ChainOptions::with_tol(tol))
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsResult {
    pub lower: f64,
    /// `None` when the prefix-summed state space exceeds the cap.
    pub upper: Option<f64>,
    pub exact: Option<f64>,
    /// False when some erasure probabilities coincide; the upper bound is
    /// still computed.
    pub distinct_eps: bool,
    pub notes: Vec<String>,
}

impl BoundsResult {
    /// `lower ≤ exact ≤ upper` within `slack`, over whatever is present.
    pub fn is_sandwiched(&self, slack: f64) -> bool {
        let up = self.upper.unwrap_or(f64::INFINITY);
        match self.exact {
            Some(c) => self.lower <= c + slack && c <= up + slack,
            None => self.lower <= up + slack,
        }
    }
}

/// Lower and upper bounds, plus the exact capacity when its chain fits.
pub fn bounds(spec: &NetworkSpec, opts: &ChainOptions) -> Result<BoundsResult> {
    let mut notes = Vec::new();
    let lower = amc_capacity(spec, opts)?;
    let upper = match amc_capacity(&spec.prefix_summed(), opts) {
        Ok(u) => Some(u),
        Err(Error::CapacityExceeded { states, .. }) => {
            notes.push(format!("upper bound unavailable at this size ({states} states)"));
            None
        }
        Err(e) => return Err(e),
    };
    let exact = match solve_exact(spec, opts) {
        Ok(s) => Some(s.capacity),
        Err(Error::CapacityExceeded { states, .. }) => {
            notes.push(format!("exact capacity unavailable at this size ({states} states)"));
            None
        }
        Err(e) => return Err(e),
    };
    let distinct_eps = spec.has_distinct_eps();
    if !distinct_eps {
        notes.push("erasure probabilities are not pairwise distinct".into());
    }
    Ok(BoundsResult { lower, upper, exact, distinct_eps, notes })
}

/// Drive the exact and drop-on-full chains from empty through one channel
/// stream; true iff the exact occupancy dominates at every node and epoch.
pub fn coupled_boundedness_check(spec: &NetworkSpec, seed: u64, epochs: u64) -> bool {
    let h = spec.h();
    let m = spec.buffers();
    let mut rng = stream_rng(seed, 0);
    let (mut n, mut q) = (vec![0u32; h - 1], vec![0u32; h - 1]);
    let (mut x, mut y) = (vec![false; h], vec![false; h]);
    for _ in 0..epochs {
        spec.sample_into(&mut rng, &mut x);
        emc_step_in_place(&mut n, &x, m, &mut y);
        amc_step_in_place(&mut q, &x, m, &mut y);
        if n.iter().zip(&q).any(|(a, b)| a < b) {
            return false;
        }
    }
    true
}

/// Exact chain with the given buffers against the drop-on-full chain with
/// prefix-summed buffers, both extended by the destination's receipt count;
/// true iff every suffix sum of the latter dominates the former throughout.
pub fn coupled_upper_check(spec: &NetworkSpec, seed: u64, epochs: u64) -> bool {
    coupled_upper_check_with_buffers(spec, spec.prefix_summed().buffers(), seed, epochs)
}

/// [`coupled_upper_check`] with arbitrary buffers for the drop-on-full chain.
pub fn coupled_upper_check_with_buffers(spec: &NetworkSpec, amc_buffers: &[u32], seed: u64, epochs: u64) -> bool {
    let h = spec.h();
    let m = spec.buffers();
    let mut rng = stream_rng(seed, 0);
    let (mut n, mut q) = (vec![0u32; h - 1], vec![0u32; h - 1]);
    let (mut n_dest, mut q_dest) = (0u64, 0u64);
    let (mut x, mut y) = (vec![false; h], vec![false; h]);
    for _ in 0..epochs {
        spec.sample_into(&mut rng, &mut x);
        emc_step_in_place(&mut n, &x, m, &mut y);
        n_dest += y[h - 1] as u64;
        amc_step_in_place(&mut q, &x, amc_buffers, &mut y);
        q_dest += y[h - 1] as u64;
        let (mut sn, mut sq) = (n_dest, q_dest);
        if sq < sn {
            return false;
        }
        for i in (0..h - 1).rev() {
            sn += n[i] as u64;
            sq += q[i] as u64;
            if sq < sn {
                return false;
            }
        }
    }
    true
}
