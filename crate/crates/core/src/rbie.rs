//! Rate-based iterative estimate: each relay is a birth-death chain driven by
//! its upstream arrival rate and its downstream blocking probability; rates
//! and blocking probabilities are swept to a fixed point.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::NetworkSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RbieOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Starting value of every blocking probability except the last.
    pub initial_pb: f64,
}

impl Default for RbieOptions {
    fn default() -> Self {
        Self { max_iter: 100_000, tol: 1e-12, initial_pb: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSolution {
    /// Arrival rate at the head of each link.
    pub r: Vec<f64>,
    /// Blocking probability seen by packets sent to each node; last is 0.
    pub pb: Vec<f64>,
    /// Occupancy distribution of every relay.
    pub phi: Vec<Vec<f64>>,
    /// Sweeps needed to reach the fixed point.
    pub iterations: usize,
    pub residual: f64,
}

/// `(α, β, α₀)`: up-rate from a nonempty state, down-rate, up-rate from empty.
pub fn local_params(r: f64, eps_next: f64, pb_next: f64) -> (f64, f64, f64) {
    let alpha = r * (eps_next + (1.0 - eps_next) * pb_next);
    let beta = (1.0 - r) * (1.0 - pb_next) * (1.0 - eps_next);
    (alpha, beta, r)
}

/// Stationary occupancy `0..=m` of one relay.
pub fn occupancy_phi(r: f64, eps_next: f64, pb_next: f64, m: usize) -> Vec<f64> {
    let mut phi = vec![0.0; m + 1];
    if pb_next >= 1.0 {
        phi[m] = 1.0;
        return phi;
    }
    let (alpha, beta, alpha0) = local_params(r, eps_next, pb_next);
    if alpha0 <= 0.0 {
        phi[0] = 1.0;
        return phi;
    }
    // Unnormalized log weights: w_0 = 1, w_k = (α₀/β)(α/β)^{k-1}.
    let lb = beta.ln();
    let step = alpha.ln() - lb;
    let mut lw = vec![0.0; m + 1];
    for k in 1..=m {
        lw[k] = if k == 1 { alpha0.ln() - lb } else { lw[k - 1] + step };
    }
    let top = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (p, l) in phi.iter_mut().zip(&lw) {
        *p = (l - top).exp();
        total += *p;
    }
    phi.iter_mut().for_each(|p| *p /= total);
    phi
}

/// Blocking probability a relay presents to its upstream neighbour.
pub fn step_pb(r: f64, eps_next: f64, pb_next: f64, m: usize) -> f64 {
    (eps_next + (1.0 - eps_next) * pb_next) * occupancy_phi(r, eps_next, pb_next, m)[m]
}

/// Departure rate of a relay onto the next link.
pub fn step_rate(r: f64, eps_next: f64, pb_next: f64, m: usize) -> f64 {
    (1.0 - eps_next) * (1.0 - occupancy_phi(r, eps_next, pb_next, m)[0])
}

struct Iterate {
    r: Vec<f64>,
    pb: Vec<f64>,
    phi: Vec<Vec<f64>>,
}

fn sweep(spec: &NetworkSpec, pb_prev: &[f64]) -> Iterate {
    let h = spec.h();
    let eps = spec.eps();
    let m = spec.buffers();
    let mut r = vec![0.0; h];
    let mut pb = vec![0.0; h];
    let mut phi = Vec::with_capacity(h - 1);
    r[0] = 1.0 - eps[0];
    for j in 0..h - 1 {
        let e = eps[j + 1];
        let q = pb_prev[j + 1];
        let f = occupancy_phi(r[j], e, q, m[j] as usize);
        pb[j] = (e + (1.0 - e) * q) * f[m[j] as usize];
        r[j + 1] = (1.0 - e) * (1.0 - f[0]);
        phi.push(f);
    }
    Iterate { r, pb, phi }
}

fn distance(a: &Iterate, b: &Iterate) -> f64 {
    a.r.iter()
        .zip(&b.r)
        .chain(a.pb.iter().zip(&b.pb))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Sweep to the fixed point, returning the solution and every iterate's
/// `(r, pb)`.
pub fn solve_traced(spec: &NetworkSpec, opts: &RbieOptions) -> Result<(RateSolution, Vec<(Vec<f64>, Vec<f64>)>)> {
    let h = spec.h();
    let mut pb0 = vec![opts.initial_pb; h];
    pb0[h - 1] = 0.0;
    let mut r0 = vec![0.0; h];
    r0[0] = 1.0 - spec.eps()[0];
    let mut cur = Iterate { r: r0, pb: pb0, phi: Vec::new() };
    let mut trace = vec![(cur.r.clone(), cur.pb.clone())];
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let next = sweep(spec, &cur.pb);
        residual = distance(&next, &cur);
        trace.push((next.r.clone(), next.pb.clone()));
        cur = next;
        if residual <= opts.tol {
            let sol = RateSolution { r: cur.r, pb: cur.pb, phi: cur.phi, iterations: it - 1, residual };
            return Ok((sol, trace));
        }
    }
    Err(Error::Convergence { iterations: opts.max_iter, residual })
}

pub fn solve_with(spec: &NetworkSpec, opts: &RbieOptions) -> Result<RateSolution> {
    solve_traced(spec, opts).map(|(s, _)| s)
}

pub fn solve(spec: &NetworkSpec, max_iter: usize, tol: f64) -> Result<RateSolution> {
    solve_with(spec, &RbieOptions { max_iter, tol, ..RbieOptions::default() })
}

impl RateSolution {
    /// Largest spread of `r_i (1 - pb_i)` across links.
    pub fn flow_residual(&self) -> f64 {
        let flows: Vec<f64> = self.r.iter().zip(&self.pb).map(|(r, p)| r * (1.0 - p)).collect();
        let hi = flows.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = flows.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    }

    /// Mean occupancy of each relay.
    pub fn mean_occupancy(&self) -> Vec<f64> {
        self.phi
            .iter()
            .map(|f| f.iter().enumerate().map(|(k, p)| k as f64 * p).sum())
            .collect()
    }
}

/// Capacity estimate `r_h (1 - pb_h)`, after checking flow conservation.
pub fn capacity(sol: &RateSolution) -> Result<f64> {
    let spread = sol.flow_residual();
    if spread > 1e-6 {
        return Err(Error::Inconsistency(format!("flow differs across links by {spread:e}")));
    }
    let h = sol.r.len();
    Ok(sol.r[h - 1] * (1.0 - sol.pb[h - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emc::capacity_exact;
    use proptest::prelude::*;

    fn spec(eps: &[f64], m: &[u32]) -> NetworkSpec {
        NetworkSpec::new(eps.to_vec(), m.to_vec()).unwrap()
    }

    #[test]
    fn local_examples() {
        assert_eq!(local_params(0.5, 0.5, 0.0), (0.25, 0.25, 0.5));
        assert_eq!(local_params(0.5, 0.5, 1.0).1, 0.0);
        let (a, _, a0) = local_params(0.0, 0.3, 0.2);
        assert_eq!((a, a0), (0.0, 0.0));
        let phi = occupancy_phi(0.5, 0.5, 0.0, 2);
        for (p, q) in phi.iter().zip([0.2, 0.4, 0.4]) {
            assert!((p - q).abs() < 1e-15);
        }
        assert_eq!(occupancy_phi(0.5, 0.5, 1.0, 3), vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(occupancy_phi(0.0, 0.5, 0.2, 3), vec![1.0, 0.0, 0.0, 0.0]);
        assert!((step_pb(0.5, 0.5, 0.0, 2) - 0.2).abs() < 1e-15);
        assert!((step_rate(0.5, 0.5, 0.0, 2) - 0.4).abs() < 1e-15);
        assert_eq!(step_pb(0.0, 0.5, 0.3, 2), 0.0);
        assert_eq!(step_rate(0.0, 0.5, 0.3, 2), 0.0);
    }

    #[test]
    fn equal_rates_count_states() {
        // α = β: weights are α₀/β for every nonempty state.
        let r = 0.5;
        let phi = occupancy_phi(r, 0.5, 0.0, 4);
        let w = 0.5 / 0.25;
        let z = 1.0 + 4.0 * w;
        assert!((phi[0] - 1.0 / z).abs() < 1e-15);
        assert!(phi[1..].iter().all(|p| (p - w / z).abs() < 1e-15));
    }

    #[test]
    fn long_buffers_do_not_overflow() {
        let phi = occupancy_phi(0.9, 0.05, 0.999, 5000);
        assert!(phi.iter().all(|p| p.is_finite()));
        assert!((phi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_hop_matches_exact() {
        let s = spec(&[0.5, 0.5], &[2]);
        let sol = solve(&s, 100, 1e-14).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!((capacity(&sol).unwrap() - 0.4).abs() < 1e-14);
        let s = spec(&[0.37, 0.22], &[6]);
        let sol = solve(&s, 100, 1e-14).unwrap();
        assert!((capacity(&sol).unwrap() - capacity_exact(&s, 1e-14).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn four_hop_iterates_are_monotone() {
        let s = spec(&[0.5, 0.4999, 0.4998, 0.4], &[5, 5, 5]);
        let (_, trace) = solve_traced(&s, &RbieOptions::default()).unwrap();
        for w in trace.windows(2) {
            for (a, b) in w[0].0.iter().zip(&w[1].0).chain(w[0].1.iter().zip(&w[1].1)) {
                assert!(b >= &(a - 1e-15), "{a} -> {b}");
            }
        }
    }

    #[test]
    fn start_point_does_not_matter() {
        let s = spec(&[0.3, 0.5, 0.5, 0.2], &[5, 21, 4]);
        let a = solve_with(&s, &RbieOptions::default()).unwrap();
        let b = solve_with(&s, &RbieOptions { initial_pb: 0.5, ..RbieOptions::default() }).unwrap();
        for (x, y) in a.r.iter().zip(&b.r).chain(a.pb.iter().zip(&b.pb)) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn within_one_percent_of_exact_uniform() {
        for h in 2..=5usize {
            for m in 2..=5u32 {
                for e in [0.1, 0.25, 0.3, 0.5] {
                    let s = spec(&vec![e; h], &vec![m; h - 1]);
                    let est = capacity(&solve(&s, 100_000, 1e-12).unwrap()).unwrap();
                    let c = capacity_exact(&s, 1e-12).unwrap();
                    assert!((est - c).abs() / c < 0.01, "h={h} m={m} eps={e}: {est} vs {c}");
                }
            }
        }
    }

    #[test]
    fn single_slot_relays_exceed_one_percent() {
        // With one-packet relays the independence assumption costs more.
        let s = spec(&[0.5; 5], &[1; 4]);
        let est = capacity(&solve(&s, 100_000, 1e-12).unwrap()).unwrap();
        let c = capacity_exact(&s, 1e-12).unwrap();
        assert!((c - est) / c > 0.04, "{est} vs {c}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn conservation_and_distributions(
            eps in prop::collection::vec(0.05f64..0.95, 2..7),
            mseed in prop::collection::vec(1u32..12, 6),
        ) {
            let m: Vec<u32> = mseed[..eps.len() - 1].to_vec();
            let s = NetworkSpec::new(eps, m).unwrap();
            let sol = solve(&s, 100_000, 1e-13).unwrap();
            prop_assert!(sol.flow_residual() <= 1e-9, "spread {}", sol.flow_residual());
            prop_assert_eq!(sol.r[0], 1.0 - s.eps()[0]);
            prop_assert_eq!(sol.pb[s.h() - 1], 0.0);
            for f in &sol.phi {
                prop_assert!(f.iter().all(|p| *p >= 0.0));
                prop_assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
