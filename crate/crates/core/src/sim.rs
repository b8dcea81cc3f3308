//! Monte-Carlo simulation of the feedback network (throughput, occupancy and
//! FCFS delay) and the continuous-time discretization.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emc::emc_step_in_place;
use crate::error::{Error, Result};
use crate::model::{index0, stream_rng, NetworkSpec};

/// Batches used for the throughput standard error.
pub const BATCHES: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub epochs: u64,
    /// `None` selects `max(epochs/10, 10^4)`, capped at half the run.
    pub warmup: Option<u64>,
    pub seed: u64,
    pub stream: u64,
    pub track_delay: bool,
    /// Record the joint state every this many epochs (small chains only).
    pub state_sample_interval: Option<u64>,
}

impl SimConfig {
    pub fn new(epochs: u64, seed: u64) -> Self {
        Self { epochs, warmup: None, seed, stream: 0, track_delay: false, state_sample_interval: None }
    }

    pub fn resolved_warmup(&self) -> u64 {
        self.warmup.unwrap_or_else(|| (self.epochs / 10).max(10_000).min(self.epochs / 2))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelaySummary {
    pub count: u64,
    pub mean: f64,
    pub variance: f64,
    /// `histogram[k]` = packets delivered `k` epochs after storage.
    pub histogram: Vec<u64>,
}

impl DelaySummary {
    /// Largest gap between this empirical CDF and that of `pmf`.
    pub fn ks_distance(&self, pmf: &[f64]) -> f64 {
        let n = self.count as f64;
        let (mut a, mut b, mut worst) = (0.0, 0.0, 0.0f64);
        for k in 0..self.histogram.len().max(pmf.len()) {
            a += *self.histogram.get(k).unwrap_or(&0) as f64 / n;
            b += pmf.get(k).copied().unwrap_or(0.0);
            worst = worst.max((a - b).abs());
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    pub epochs_run: u64,
    pub warmup: u64,
    pub packets_delivered: u64,
    pub throughput: f64,
    pub throughput_stderr: f64,
    pub delay: Option<DelaySummary>,
    /// `occupancy[i][k]`: post-warm-up epochs starting with `k` packets at
    /// relay `i`.
    pub occupancy: Vec<Vec<u64>>,
    /// Joint-state counts by 0-based state index.
    pub state_counts: Option<Vec<u64>>,
    pub seed: u64,
    pub stream: u64,
}

/// Largest chain for which joint-state counts are kept.
const STATE_COUNT_LIMIT: u128 = 1_000_000;

pub fn simulate(spec: &NetworkSpec, cfg: &SimConfig) -> Result<SimStats> {
    let warmup = cfg.resolved_warmup();
    if cfg.epochs <= warmup {
        return Err(Error::InvalidSpec(format!("epochs ({}) must exceed warm-up ({warmup})", cfg.epochs)));
    }
    let h = spec.h();
    let m = spec.buffers();
    let mut rng = stream_rng(cfg.seed, cfg.stream);
    let mut s = vec![0u32; h - 1];
    let (mut x, mut y) = (vec![false; h], vec![false; h]);
    let mut occupancy: Vec<Vec<u64>> = m.iter().map(|&b| vec![0; b as usize + 1]).collect();
    let mut state_counts = match cfg.state_sample_interval {
        Some(k) if k > 0 && spec.state_space_size() <= STATE_COUNT_LIMIT => {
            Some(vec![0u64; spec.state_space_size() as usize])
        }
        _ => None,
    };
    let mut queues: Vec<VecDeque<u64>> = if cfg.track_delay {
        m.iter().map(|&b| VecDeque::with_capacity(b as usize)).collect()
    } else {
        Vec::new()
    };
    let mut delays: Vec<u64> = Vec::new();
    let (mut d_sum, mut d_sq) = (0.0f64, 0.0f64);

    let measured = cfg.epochs - warmup;
    let batch_len = (measured / BATCHES).max(1);
    let mut batch_counts: Vec<u64> = Vec::new();
    let mut in_batch = 0u64;
    let mut batch_delivered = 0u64;
    let mut delivered = 0u64;

    for l in 0..cfg.epochs {
        let steady = l >= warmup;
        if steady {
            for (hist, &si) in occupancy.iter_mut().zip(&s) {
                hist[si as usize] += 1;
            }
            if let (Some(c), Some(k)) = (state_counts.as_mut(), cfg.state_sample_interval) {
                if (l - warmup) % k == 0 {
                    c[index0(&s, m)] += 1;
                }
            }
        }
        spec.sample_into(&mut rng, &mut x);
        emc_step_in_place(&mut s, &x, m, &mut y);
        if cfg.track_delay {
            for i in (1..h).rev() {
                if y[i] {
                    let tag = queues[i - 1].pop_front().expect("occupancy and queue agree");
                    if i == h - 1 {
                        if tag >= warmup {
                            let d = l - tag;
                            if delays.len() <= d as usize {
                                delays.resize(d as usize + 1, 0);
                            }
                            delays[d as usize] += 1;
                            d_sum += d as f64;
                            d_sq += (d as f64) * (d as f64);
                        }
                    } else {
                        queues[i].push_back(tag);
                    }
                }
            }
            if y[0] {
                queues[0].push_back(l);
            }
        }
        if steady {
            let got = y[h - 1] as u64;
            delivered += got;
            batch_delivered += got;
            in_batch += 1;
            if in_batch == batch_len {
                batch_counts.push(batch_delivered);
                batch_delivered = 0;
                in_batch = 0;
            }
        }
    }

    let throughput = delivered as f64 / measured as f64;
    let nb = batch_counts.len() as f64;
    let throughput_stderr = if batch_counts.len() >= 2 {
        let means: Vec<f64> = batch_counts.iter().map(|&c| c as f64 / batch_len as f64).collect();
        let mu = means.iter().sum::<f64>() / nb;
        let var = means.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (nb - 1.0);
        (var / nb).sqrt()
    } else {
        f64::NAN
    };
    let delay = cfg.track_delay.then(|| {
        let count: u64 = delays.iter().sum();
        let n = count.max(1) as f64;
        let mean = d_sum / n;
        DelaySummary { count, mean, variance: d_sq / n - mean * mean, histogram: delays }
    });
    Ok(SimStats {
        epochs_run: cfg.epochs,
        warmup,
        packets_delivered: delivered,
        throughput,
        throughput_stderr,
        delay,
        occupancy,
        state_counts,
        seed: cfg.seed,
        stream: cfg.stream,
    })
}

/// Throughput and occupancy run.
pub fn simulate_feedback(spec: &NetworkSpec, epochs: u64, warmup: Option<u64>, seed: u64) -> Result<SimStats> {
    simulate(spec, &SimConfig { warmup, ..SimConfig::new(epochs, seed) })
}

/// Run that also tags packets at the first relay and records their delay.
pub fn simulate_delay_fcfs(spec: &NetworkSpec, epochs: u64, warmup: Option<u64>, seed: u64) -> Result<SimStats> {
    simulate(spec, &SimConfig { warmup, track_delay: true, ..SimConfig::new(epochs, seed) })
}

/// Independent trials on streams `0..trials`, run in parallel.
pub fn simulate_trials(spec: &NetworkSpec, cfg: &SimConfig, trials: u64) -> Result<Vec<SimStats>> {
    (0..trials)
        .into_par_iter()
        .map(|t| simulate(spec, &SimConfig { stream: t, ..cfg.clone() }))
        .collect()
}

/// Continuous-time line network with exponential link service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSpec {
    /// Service rate of each link (1/s).
    pub lambdas: Vec<f64>,
    pub buffers: Vec<u32>,
    /// Discretization step (s).
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discretized {
    pub spec: NetworkSpec,
    /// Multiply per-epoch rates by this to get packets per second.
    pub rate_scale: f64,
}

/// Slotted equivalent with `eps_i = 1 - λ_i τ`.
pub fn discretize(c: &ContinuousSpec) -> Result<Discretized> {
    if !(c.tau > 0.0 && c.tau.is_finite()) {
        return Err(Error::InvalidSpec(format!("tau must be positive, got {}", c.tau)));
    }
    if let Some(l) = c.lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidSpec(format!("rates must be positive, got {l}")));
    }
    if let Some(lt) = c.lambdas.iter().map(|l| l * c.tau).find(|lt| *lt >= 1.0) {
        return Err(Error::StepTooCoarse(lt));
    }
    let eps = c.lambdas.iter().map(|l| 1.0 - l * c.tau).collect();
    Ok(Discretized { spec: NetworkSpec::new(eps, c.buffers.clone())?, rate_scale: 1.0 / c.tau })
}
