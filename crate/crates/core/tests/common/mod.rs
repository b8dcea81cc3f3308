//! Monte-Carlo oracles shared by the integration tests.

#![allow(dead_code)]

use linenet::dbie::{self, GeometricMixture};
use linenet::emc::{solve_exact, ChainOptions};
use linenet::model::stream_rng;
use linenet::sim::{simulate, SimConfig};
use linenet::NetworkSpec;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Discrete queue with `m` slots fed by i.i.d. gaps drawn from a geometric
/// mixture; each epoch of a gap offers one service completion with
/// probability `1 - theta`.
pub struct Gm1m {
    /// `(weight, θ)` with positive weights summing to 1.
    pub arrivals: Vec<(f64, f64)>,
    pub m: u32,
    pub theta: f64,
}

pub struct Observed {
    arrivals: u64,
    /// `d[j]`: gaps with exactly `j` completion opportunities (`j < d.len()`).
    d: Vec<u64>,
    /// Per batch, post-arrival occupancy counts over `1..=m`.
    pi_batches: Vec<Vec<u64>>,
    blocked_batches: Vec<u64>,
    per_batch: u64,
    /// Idle gaps after the queue empties.
    x: Vec<u64>,
    starved: u64,
}

impl Gm1m {
    pub fn run(&self, arrivals: u64, batches: u64, seed: u64) -> Observed {
        let mut rng = stream_rng(seed, 0);
        let m = self.m as usize;
        let per_batch = arrivals / batches;
        let mut obs = Observed {
            arrivals: per_batch * batches,
            d: vec![0; m + 2],
            pi_batches: vec![vec![0; m]; batches as usize],
            blocked_batches: vec![0; batches as usize],
            per_batch,
            x: vec![0; 64],
            starved: 0,
        };
        let mut n = 1u32;
        for b in 0..batches as usize {
            for _ in 0..per_batch {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let t = self.arrivals.iter().find(|(w, _)| {
                    acc += w;
                    u < acc
                });
                let t = t.unwrap_or(self.arrivals.last().unwrap()).1;
                let mut gap = 1u64;
                while rng.gen::<f64>() < t {
                    gap += 1;
                }
                let start = n;
                let mut j = 0u64;
                let mut emptied_at = None;
                for epoch in 1..=gap {
                    if rng.gen::<f64>() >= self.theta {
                        j += 1;
                        if n > 0 {
                            n -= 1;
                            if n == 0 {
                                emptied_at = Some(epoch);
                            }
                        }
                    }
                }
                obs.d[(j as usize).min(m + 1)] += 1;
                if let Some(e) = emptied_at.filter(|e| *e < gap) {
                    obs.starved += 1;
                    let x = (gap - e) as usize;
                    if x < obs.x.len() {
                        obs.x[x] += 1;
                    }
                }
                if n == self.m {
                    obs.blocked_batches[b] += 1;
                } else {
                    n += 1;
                }
                debug_assert!(start >= 1);
                obs.pi_batches[b][n as usize - 1] += 1;
            }
        }
        obs
    }

    pub fn mixture(&self) -> GeometricMixture<f64> {
        GeometricMixture::new(0.0, self.arrivals.clone()).unwrap()
    }
}

pub fn within_sigma(label: &str, est: f64, exact: f64, sigma: f64, k: f64) -> Result<(), String> {
    if (est - exact).abs() <= k * sigma + 1e-12 {
        Ok(())
    } else {
        Err(format!("{label}: estimate {est} vs {exact} (sigma {sigma:e})"))
    }
}

/// Batch-means mean and standard error of per-batch proportions.
fn batch_stats(counts: impl Iterator<Item = u64>, per_batch: u64) -> (f64, f64) {
    let props: Vec<f64> = counts.map(|c| c as f64 / per_batch as f64).collect();
    let n = props.len() as f64;
    let mu = props.iter().sum::<f64>() / n;
    let var = props.iter().map(|p| (p - mu).powi(2)).sum::<f64>() / (n - 1.0);
    (mu, (var / n).sqrt())
}

/// Compares `D_j`, the post-arrival law, blocking and the starvation gap
/// with a simulated queue.
pub fn check_queue(q: &Gm1m, theta_n: f64, refuse: f64, seed: u64) -> Result<(), String> {
    let g = q.mixture();
    let tt = dbie::theta_tilde(theta_n, refuse);
    if (tt - q.theta).abs() > 1e-15 {
        return Err(format!("queue service {} does not match {tt}", q.theta));
    }
    let m = q.m as usize;
    let obs = q.run(600_000, 60, seed);
    let n = obs.arrivals as f64;

    let d = dbie::dj_distribution(&g, tt, m).unwrap();
    for (j, &dj) in d.iter().enumerate() {
        let p = obs.d[j] as f64 / n;
        within_sigma(&format!("D_{j}"), p, dj, (dj * (1.0 - dj) / n).sqrt(), 3.0)?;
    }

    let ch = dbie::embedded_chain(&g, m, theta_n, refuse).unwrap();
    for k in 0..m {
        let (mu, se) = batch_stats(obs.pi_batches.iter().map(|b| b[k]), obs.per_batch);
        within_sigma(&format!("pi({})", k + 1), mu, ch.pi[k], se, 3.0)?;
    }
    let pb = dbie::blocking_prob(&g, m, theta_n, refuse).unwrap();
    let (mu, se) = batch_stats(obs.blocked_batches.iter().copied(), obs.per_batch);
    within_sigma("blocking", mu, pb, se, 3.0)?;

    let fx = dbie::starvation_distribution(&g, &ch.pi, theta_n, refuse).unwrap();
    let s = obs.starved as f64;
    if s < 10_000.0 {
        return Err(format!("too few starvation gaps ({s})"));
    }
    for k in 1..8u32 {
        let exact = fx.pmf(k);
        let p = obs.x[k as usize] as f64 / s;
        within_sigma(&format!("f^X({k})"), p, exact, (exact * (1.0 - exact) / s).sqrt(), 3.0)?;
    }
    Ok(())
}

/// χ² goodness of fit of sampled joint occupancies against the exact
/// stationary law, pooling cells with small expected counts.
pub fn chi_square_p(spec: &NetworkSpec, seed: u64) -> f64 {
    let exact = solve_exact(spec, &ChainOptions::default()).unwrap();
    let interval = 60;
    let cfg = SimConfig {
        state_sample_interval: Some(interval),
        warmup: Some(10_000),
        ..SimConfig::new(1_500_000, seed)
    };
    let st = simulate(spec, &cfg).unwrap();
    let counts = st.state_counts.unwrap();
    let total: u64 = counts.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    let (mut pool_o, mut pool_e) = (0.0, 0.0);
    for (c, p) in counts.iter().zip(&exact.stationary.pi) {
        let e = p * total as f64;
        if e < 5.0 {
            pool_o += *c as f64;
            pool_e += e;
            continue;
        }
        stat += (*c as f64 - e).powi(2) / e;
        cells += 1;
    }
    if pool_e >= 5.0 {
        stat += (pool_o - pool_e).powi(2) / pool_e;
        cells += 1;
    }
    let dist = ChiSquared::new((cells - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

