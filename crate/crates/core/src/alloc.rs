//! Buffer allocation under a total memory budget, scored with the
//! rate-based estimate.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dbie;
use crate::delay::mean_delay_little;
use crate::emc::capacity_exact;
use crate::error::{Error, Result};
use crate::model::NetworkSpec;
use crate::rbie;

/// Above this many compositions the search switches to local moves.
pub const EXHAUSTIVE_LIMIT: u128 = 100_000;
/// Largest chain re-scored with the exact solve.
const EXACT_RESCORE_STATES: u128 = 200_000;
const TOP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Objective {
    MaxThroughput,
    MinDelay { floor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Auto,
    Exhaustive,
    Neighborhood,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub buffers: Vec<u32>,
    pub throughput: f64,
    /// Little's-law mean delay (epochs).
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rescore {
    pub buffers: Vec<u32>,
    pub rbie: f64,
    pub dbie: Option<f64>,
    pub exact: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationResult {
    pub objective: Objective,
    pub budget: u32,
    pub method: Method,
    pub evaluated: usize,
    pub best: Candidate,
    /// Best first, ordered by the objective.
    pub top: Vec<Candidate>,
    pub rescored: Vec<Rescore>,
}

/// Number of ways to write `budget` as `parts` positive integers.
pub fn composition_count(budget: u32, parts: usize) -> u128 {
    if parts == 0 || (budget as usize) < parts {
        return 0;
    }
    let n = budget as u128 - 1;
    let k = (parts - 1) as u128;
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) / (i + 1);
        if c > u64::MAX as u128 {
            return u128::MAX;
        }
    }
    c
}

/// All vectors of `parts` positive entries summing to `budget`.
pub fn compositions(budget: u32, parts: usize) -> Vec<Vec<u32>> {
    fn rec(left: u32, parts: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for first in 1..=left - (parts as u32 - 1) {
            cur.push(first);
            rec(left - first, parts - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if parts > 0 && budget as usize >= parts {
        rec(budget, parts, &mut Vec::with_capacity(parts), &mut out);
    }
    out
}

fn evaluate(eps: &[f64], buffers: &[u32]) -> Result<Candidate> {
    let spec = NetworkSpec::new(eps.to_vec(), buffers.to_vec())?;
    let sol = rbie::solve_with(&spec, &rbie::RbieOptions::default())?;
    let throughput = rbie::capacity(&sol)?;
    let delay = mean_delay_little(&sol, &spec).mean;
    Ok(Candidate { buffers: buffers.to_vec(), throughput, delay })
}

/// Strict "a is better than b" under the objective; ties fall back to the
/// lexicographically smaller vector so results are stable.
fn better(obj: Objective, a: &Candidate, b: &Candidate) -> bool {
    use std::cmp::Ordering::*;
    let primary = match obj {
        Objective::MaxThroughput => b.throughput.partial_cmp(&a.throughput).unwrap_or(Equal),
        Objective::MinDelay { floor } => {
            match (a.throughput >= floor, b.throughput >= floor) {
                (true, false) => Less,
                (false, true) => Greater,
                (true, true) => a.delay.partial_cmp(&b.delay).unwrap_or(Equal),
                (false, false) => b.throughput.partial_cmp(&a.throughput).unwrap_or(Equal),
            }
        }
    };
    match primary {
        Less => true,
        Greater => false,
        Equal => a.buffers < b.buffers,
    }
}

fn rank(obj: Objective, mut all: Vec<Candidate>) -> Vec<Candidate> {
    all.sort_by(|a, b| {
        if better(obj, a, b) {
            std::cmp::Ordering::Less
        } else if better(obj, b, a) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    all
}

fn balanced(budget: u32, parts: usize) -> Vec<u32> {
    let base = budget / parts as u32;
    let extra = (budget % parts as u32) as usize;
    (0..parts).map(|i| base + (i < extra) as u32).collect()
}

/// Moves one packet of memory between relays until no move helps.
fn neighborhood(eps: &[f64], budget: u32, obj: Objective) -> Result<Vec<Candidate>> {
    let parts = eps.len() - 1;
    let mut seen: HashMap<Vec<u32>, Candidate> = HashMap::new();
    let start = balanced(budget, parts);
    let mut cur = evaluate(eps, &start)?;
    seen.insert(start, cur.clone());
    loop {
        let mut moves = Vec::new();
        for i in 0..parts {
            for j in 0..parts {
                if i != j && cur.buffers[i] > 1 {
                    let mut b = cur.buffers.clone();
                    b[i] -= 1;
                    b[j] += 1;
                    if !seen.contains_key(&b) {
                        moves.push(b);
                    }
                }
            }
        }
        let fresh: Vec<Candidate> = moves.par_iter().map(|b| evaluate(eps, b)).collect::<Result<_>>()?;
        for c in fresh {
            seen.insert(c.buffers.clone(), c);
        }
        let next = (0..parts)
            .flat_map(|i| (0..parts).map(move |j| (i, j)))
            .filter(|(i, j)| i != j && cur.buffers[*i] > 1)
            .map(|(i, j)| {
                let mut b = cur.buffers.clone();
                b[i] -= 1;
                b[j] += 1;
                seen[&b].clone()
            })
            .fold(None::<Candidate>, |acc, c| match acc {
                Some(a) if !better(obj, &c, &a) => Some(a),
                _ => Some(c),
            });
        match next {
            Some(n) if better(obj, &n, &cur) => cur = n,
            _ => break,
        }
    }
    Ok(seen.into_values().collect())
}

/// Searches buffer vectors that spend the whole budget.
pub fn allocate(eps: &[f64], budget: u32, obj: Objective, method: Method) -> Result<AllocationResult> {
    let parts = eps.len().saturating_sub(1);
    if parts == 0 {
        return Err(Error::InvalidSpec("need at least two links".into()));
    }
    if (budget as usize) < parts {
        return Err(Error::InvalidSpec(format!("budget {budget} cannot give each of {parts} relays a slot")));
    }
    if let Objective::MinDelay { floor } = obj {
        if !(0.0..=1.0).contains(&floor) {
            return Err(Error::InvalidSpec(format!("throughput floor {floor} outside [0, 1]")));
        }
    }
    let method = match method {
        Method::Auto if composition_count(budget, parts) <= EXHAUSTIVE_LIMIT => Method::Exhaustive,
        Method::Auto => Method::Neighborhood,
        m => m,
    };
    let all = match method {
        Method::Exhaustive => compositions(budget, parts)
            .par_iter()
            .map(|b| evaluate(eps, b))
            .collect::<Result<Vec<_>>>()?,
        _ => neighborhood(eps, budget, obj)?,
    };
    let evaluated = all.len();
    let ranked = rank(obj, all);
    let best = ranked[0].clone();
    if let Objective::MinDelay { floor } = obj {
        if best.throughput < floor {
            return Err(Error::InvalidSpec(format!(
                "no allocation reaches throughput {floor}; best is {:.6}",
                best.throughput
            )));
        }
    }
    let top: Vec<Candidate> = ranked.into_iter().take(TOP).collect();
    let rescored = top
        .par_iter()
        .map(|c| {
            let spec = NetworkSpec::new(eps.to_vec(), c.buffers.clone())?;
            let dbie = dbie::solve_with(&spec, &dbie::DbieOptions::default())
                .ok()
                .and_then(|s| dbie::capacity(&s).ok());
            let exact = (spec.state_space_size() <= EXACT_RESCORE_STATES)
                .then(|| capacity_exact(&spec, 1e-12).ok())
                .flatten();
            Ok(Rescore { buffers: c.buffers.clone(), rbie: c.throughput, dbie, exact })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AllocationResult { objective: obj, budget, method, evaluated, best, top, rescored })
}
