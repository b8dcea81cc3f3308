//! FCFS delay of a packet from its storage at the first relay to its
//! delivery, treating per-relay waiting times as independent.

use serde::Serialize;

use crate::dbie::DistSolution;
use crate::error::{Error, Result};
use crate::model::NetworkSpec;
use crate::rbie::RateSolution;

/// Largest pmf support a single relay may need.
const MAX_SUPPORT: usize = 50_000_000;
/// Mass a single relay's pmf may leave untabulated.
const NODE_TAIL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeDelayInputs {
    /// For each relay, the law of the number of packets ahead of a newly
    /// stored packet, over `0..m`.
    pub psi: Vec<Vec<f64>>,
    /// Blocking probability of each relay.
    pub rho: Vec<f64>,
    /// Effective service failure of each relay,
    /// `eps_{j+1} + rho_{j+1} (1 - eps_{j+1})`.
    pub eps_eff: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayProfile {
    /// `pmf[k]` = probability of a delay of `k` epochs.
    pub pmf: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub tail_mass_dropped: f64,
    pub node_means: Vec<f64>,
}

fn effective_eps(spec: &NetworkSpec, rho: &[f64]) -> Vec<f64> {
    let eps = spec.eps();
    (0..spec.h() - 1)
        .map(|j| {
            let down = if j + 1 < rho.len() { rho[j + 1] } else { 0.0 };
            eps[j + 1] + down * (1.0 - eps[j + 1])
        })
        .collect()
}

fn check_psi(psi: &[f64], node: usize) -> Result<()> {
    let total: f64 = psi.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Inconsistency(format!("waiting-position law of relay {node} sums to {total}")));
    }
    if let Some(v) = psi.iter().find(|v| **v < -1e-9) {
        return Err(Error::Inconsistency(format!("waiting-position law of relay {node} has entry {v}")));
    }
    Ok(())
}

/// Inputs from the rate-based estimate.
pub fn psi_rho_from_rbie(sol: &RateSolution, spec: &NetworkSpec) -> Result<NodeDelayInputs> {
    let rho: Vec<f64> = sol.pb[..spec.h() - 1].to_vec();
    let mut full = sol.pb.clone();
    full.resize(spec.h(), 0.0);
    let eps_eff = effective_eps(spec, &full);
    let mut psi = Vec::with_capacity(spec.h() - 1);
    for (j, phi) in sol.phi.iter().enumerate() {
        let m = phi.len() - 1;
        let e = eps_eff[j];
        let den = 1.0 - phi[m] * e;
        let mut p = vec![0.0; m];
        p[0] = phi[0] + phi[1] * (1.0 - e);
        for i in 1..m {
            p[i] = phi[i] * e + phi[i + 1] * (1.0 - e);
        }
        p.iter_mut().for_each(|x| *x /= den);
        check_psi(&p, j)?;
        psi.push(p);
    }
    Ok(NodeDelayInputs { psi, rho, eps_eff })
}

/// Inputs from the distribution-based estimate.
pub fn psi_rho_from_dbie(sol: &DistSolution, spec: &NetworkSpec) -> Result<NodeDelayInputs> {
    let rho: Vec<f64> = sol.pb[..spec.h() - 1].to_vec();
    let eps_eff = effective_eps(spec, &sol.pb);
    let mut psi = Vec::with_capacity(spec.h() - 1);
    for (j, pi) in sol.pi_embedded.iter().enumerate() {
        let m = pi.len();
        let b = sol.pb[j];
        let mut out = vec![0.0; m];
        for i in 0..m.saturating_sub(1) {
            out[i] = pi[i] / (1.0 - b);
        }
        out[m - 1] = (pi[m - 1] - b) / (1.0 - b);
        check_psi(&out, j)?;
        psi.push(out);
    }
    Ok(NodeDelayInputs { psi, rho, eps_eff })
}

/// `Σ_i ψ(i) ⊗^{i+1}𝔾(ε')` tabulated until less than `NODE_TAIL` remains.
pub fn node_delay(psi: &[f64], eps_eff: f64) -> Result<Vec<f64>> {
    let m = psi.len();
    let s = 1.0 - eps_eff;
    // a[k] = Pr[k+1 geometric(ε') stages complete exactly at epoch n].
    let mut a = vec![0.0; m];
    let mut pmf = vec![0.0];
    let mut total = 0.0;
    let mut n = 0usize;
    while 1.0 - total > NODE_TAIL {
        n += 1;
        if n > MAX_SUPPORT {
            return Err(Error::Inconsistency(format!("delay support exceeds {MAX_SUPPORT} epochs")));
        }
        for k in (0..m).rev() {
            let prev = if k == 0 { if n == 1 { 1.0 } else { 0.0 } } else { a[k - 1] };
            a[k] = s * prev + eps_eff * a[k];
        }
        let mass: f64 = psi.iter().zip(&a).map(|(p, x)| p * x).sum();
        pmf.push(mass);
        total += mass;
        if n > m && mass == 0.0 && total < 0.5 {
            return Err(Error::Inconsistency("delay law has no mass".into()));
        }
    }
    Ok(pmf)
}

fn node_moments(psi: &[f64], eps_eff: f64) -> (f64, f64) {
    let s = 1.0 - eps_eff;
    let mut mean = 0.0;
    let mut second = 0.0;
    for (i, p) in psi.iter().enumerate() {
        let k = (i + 1) as f64;
        let mu = k / s;
        let var = k * eps_eff / (s * s);
        mean += p * mu;
        second += p * (var + mu * mu);
    }
    (mean, second - mean * mean)
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if *x == 0.0 {
            continue;
        }
        for (o, y) in out[i..].iter_mut().zip(b) {
            *o += x * y;
        }
    }
    out
}

/// Delay law over all relays; with `include_source`, the head-of-line time
/// at the source is added.
pub fn delay_profile(spec: &NetworkSpec, inputs: &NodeDelayInputs, include_source: bool) -> Result<DelayProfile> {
    let h = spec.h();
    if inputs.psi.len() != h - 1 || inputs.eps_eff.len() != h - 1 {
        return Err(Error::InvalidSpec(format!("delay inputs cover {} relays, network has {}", inputs.psi.len(), h - 1)));
    }
    let mut pmf = vec![1.0];
    let mut mean = 0.0;
    let mut variance = 0.0;
    let mut node_means = Vec::with_capacity(h);
    let mut stages: Vec<(Vec<f64>, f64)> = Vec::new();
    if include_source {
        let e = spec.eps()[0] + inputs.rho[0] * (1.0 - spec.eps()[0]);
        stages.push((vec![1.0], e));
    }
    for (j, psi) in inputs.psi.iter().enumerate() {
        check_psi(psi, j)?;
        stages.push((psi.clone(), inputs.eps_eff[j]));
    }
    for (psi, e) in &stages {
        let d = node_delay(psi, *e)?;
        let (mu, var) = node_moments(psi, *e);
        mean += mu;
        variance += var;
        node_means.push(mu);
        pmf = convolve(&pmf, &d);
    }
    let total: f64 = pmf.iter().sum();
    let tail = (1.0 - total).max(0.0);
    if tail > 1e-6 {
        return Err(Error::Inconsistency(format!("truncated delay mass {tail:e} exceeds 1e-6")));
    }
    Ok(DelayProfile { pmf, mean, variance, tail_mass_dropped: tail, node_means })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LittleDelay {
    pub mean: f64,
    /// Contribution of each relay.
    pub per_node: Vec<f64>,
}

/// Mean delay as total mean occupancy over the estimated capacity.
pub fn mean_delay_little(sol: &RateSolution, spec: &NetworkSpec) -> LittleDelay {
    let h = spec.h();
    let cap = (1.0 - spec.eps()[h - 1]) * (1.0 - sol.phi[h - 2][0]);
    let per_node: Vec<f64> = sol
        .mean_occupancy()
        .iter()
        .map(|o| if cap > 0.0 { o / cap } else { 0.0 })
        .collect();
    LittleDelay { mean: per_node.iter().sum(), per_node }
}

impl DelayProfile {
    /// Mean computed from the tabulated pmf.
    pub fn pmf_mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    /// Rows of `(delay, probability, cumulative)`.
    pub fn rows(&self) -> Vec<(usize, f64, f64)> {
        let mut acc = 0.0;
        self.pmf
            .iter()
            .enumerate()
            .map(|(k, p)| {
                acc += p;
                (k, *p, acc)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{dbie, rbie};

    fn spec(eps: &[f64], m: &[u32]) -> NetworkSpec {
        NetworkSpec::new(eps.to_vec(), m.to_vec()).unwrap()
    }

    #[test]
    fn single_geometric_stage() {
        let d = node_delay(&[1.0], 0.5).unwrap();
        assert_eq!(d[0], 0.0);
        assert!(d.len() > 30);
        for k in 1..d.len() {
            assert!((d[k] - 0.5f64.powi(k as i32)).abs() < 1e-15);
        }
        let (mu, _) = node_moments(&[1.0], 0.5);
        assert_eq!(mu, 2.0);
        let (mu, _) = node_moments(&[0.5, 0.5], 0.5);
        assert_eq!(mu, 3.0);
    }

    #[test]
    fn negative_binomial_matches_repeated_convolution() {
        let e = 0.37;
        let g = node_delay(&[1.0], e).unwrap();
        let mut brute = vec![1.0];
        for k in 1..=4 {
            brute = convolve(&brute, &g);
            let mut psi = vec![0.0; k];
            psi[k - 1] = 1.0;
            let nb = node_delay(&psi, e).unwrap();
            for n in 0..g.len().min(nb.len()) {
                assert!((nb[n] - brute[n]).abs() < 1e-12, "k={k} n={n}");
            }
        }
    }

    #[test]
    fn rbie_psi_sums_and_single_slot() {
        let s = spec(&[0.3, 0.5, 0.5, 0.2], &[1, 7, 3]);
        let sol = rbie::solve(&s, 100_000, 1e-12).unwrap();
        let inp = psi_rho_from_rbie(&sol, &s).unwrap();
        assert_eq!(inp.psi[0].len(), 1);
        assert!((inp.psi[0][0] - 1.0).abs() < 1e-12);
        for p in &inp.psi {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(inp.eps_eff[2], 0.2);
    }

    #[test]
    fn dbie_psi_sums_and_single_slot() {
        let s = spec(&[0.3, 0.5, 0.45, 0.2], &[1, 7, 3]);
        let sol = dbie::solve(&s, 10_000, 1e-11).unwrap();
        let inp = psi_rho_from_dbie(&sol, &s).unwrap();
        assert!((inp.psi[0][0] - 1.0).abs() < 1e-12);
        for p in &inp.psi {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|x| *x >= 0.0));
        }
    }

    #[test]
    fn profile_moments_agree() {
        let s = spec(&[0.25; 5], &[5; 4]);
        let sol = rbie::solve(&s, 100_000, 1e-12).unwrap();
        let inp = psi_rho_from_rbie(&sol, &s).unwrap();
        let p = delay_profile(&s, &inp, false).unwrap();
        assert!(p.tail_mass_dropped <= 1e-6);
        assert!((p.pmf_mean() - p.mean).abs() < 1e-6 * p.mean);
        assert!((p.node_means.iter().sum::<f64>() - p.mean).abs() < 1e-12);
        let var_pmf: f64 = p.pmf.iter().enumerate().map(|(k, x)| (k as f64 - p.mean).powi(2) * x).sum();
        assert!((var_pmf - p.variance).abs() < 1e-4 * p.variance);
        let with_src = delay_profile(&s, &inp, true).unwrap();
        let e1 = 0.25 + inp.rho[0] * 0.75;
        assert!((with_src.mean - p.mean - 1.0 / (1.0 - e1)).abs() < 1e-12);
    }

    #[test]
    fn two_hop_profile_is_single_node() {
        let s = spec(&[0.4, 0.3], &[3]);
        let sol = rbie::solve(&s, 1000, 1e-13).unwrap();
        let inp = psi_rho_from_rbie(&sol, &s).unwrap();
        let p = delay_profile(&s, &inp, false).unwrap();
        let d = node_delay(&inp.psi[0], 0.3).unwrap();
        assert_eq!(p.pmf.len(), d.len());
        for (a, b) in p.pmf.iter().zip(&d) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn little_two_hop() {
        let s = spec(&[0.5, 0.5], &[2]);
        let sol = rbie::solve(&s, 1000, 1e-14).unwrap();
        let l = mean_delay_little(&sol, &s);
        assert!((l.mean - 3.0).abs() < 1e-12);
    }

    #[test]
    fn little_light_traffic_limit() {
        // A starved source leaves every packet an empty network: the mean
        // approaches the sum of the relays' service times.
        let s = spec(&[0.999_999, 0.4, 0.3], &[4, 4]);
        let sol = rbie::solve(&s, 1000, 1e-15).unwrap();
        let l = mean_delay_little(&sol, &s);
        let light = 1.0 / 0.6 + 1.0 / 0.7;
        assert!((l.mean - light).abs() < 1e-4, "{}", l.mean);
    }
}
