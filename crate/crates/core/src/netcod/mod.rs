//! Feedback-free line network with random linear coding at every relay.
//!
//! Only coefficient vectors are tracked. Coordinates are kept modulo the
//! destination's span, so a packet is innovative at the destination exactly
//! when its reduced coefficient row is nonzero.

mod field;

pub use field::{FieldSpec, Gf, SUPPORTED_Q};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::emc::build_emc;
use crate::error::Result;
use crate::model::{index0, stream_rng, NetworkSpec};
use crate::sim::BATCHES;

/// A relay's `m` stored coefficient rows over a shared coordinate system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedBuffer {
    pub rows: Vec<Vec<u16>>,
}

impl CodedBuffer {
    pub fn zero(m: usize, width: usize) -> Self {
        Self { rows: vec![vec![0; width]; m] }
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }

    pub fn rank(&self, gf: &Gf) -> usize {
        gf.rank(&mut self.rows.clone())
    }

    fn push_coordinate(&mut self) {
        self.rows.iter_mut().for_each(|r| r.push(0));
    }
}

/// Uniformly random combination of the stored rows.
pub fn nc_transmit<R: Rng + ?Sized>(buf: &CodedBuffer, gf: &Gf, rng: &mut R) -> Vec<u16> {
    let mut out = vec![0; buf.width()];
    for row in &buf.rows {
        let a = gf.random(rng);
        gf.axpy(&mut out, a, row);
    }
    out
}

/// Adds an independent uniform multiple of `pkt` to every slot.
pub fn nc_receive<R: Rng + ?Sized>(buf: &mut CodedBuffer, pkt: &[u16], gf: &Gf, rng: &mut R) {
    for row in buf.rows.iter_mut() {
        let b = gf.random(rng);
        gf.axpy(row, b, pkt);
    }
}

/// Relays plus the coordinate bookkeeping.
#[derive(Debug, Clone)]
struct Network {
    relays: Vec<CodedBuffer>,
    width: usize,
}

impl Network {
    fn new(m: &[u32]) -> Self {
        Self { relays: m.iter().map(|&b| CodedBuffer::zero(b as usize, 0)).collect(), width: 0 }
    }

    fn fresh_coordinate(&mut self) -> Vec<u16> {
        self.relays.iter_mut().for_each(CodedBuffer::push_coordinate);
        self.width += 1;
        let mut e = vec![0; self.width];
        e[self.width - 1] = 1;
        e
    }

    /// Quotient by a row the destination just learned.
    fn absorb_at_destination(&mut self, p: &[u16], gf: &Gf) {
        let c = p.iter().rposition(|v| *v != 0).expect("nonzero row");
        let inv = gf.inv(p[c]);
        for row in self.relays.iter_mut().flat_map(|b| b.rows.iter_mut()) {
            let f = gf.mul(row[c], inv);
            gf.axpy(row, f, p);
            debug_assert_eq!(row[c], 0);
            row.swap_remove(c);
        }
        self.width -= 1;
    }

    /// Re-express all rows on the pivot columns of their joint span, which
    /// is injective on that span and so preserves every rank.
    fn rebase(&mut self, gf: &Gf) {
        let mut stacked: Vec<Vec<u16>> = self.relays.iter().flat_map(|b| b.rows.iter().cloned()).collect();
        let pivots = gf.row_reduce(&mut stacked);
        for row in self.relays.iter_mut().flat_map(|b| b.rows.iter_mut()) {
            *row = pivots.iter().map(|&c| row[c]).collect();
        }
        self.width = pivots.len();
    }

    /// `eta[i]` = rank(relays i..) - rank(relays i+1..), modulo the
    /// destination span.
    fn eta(&self, gf: &Gf, out: &mut [u32]) {
        let mut below = 0;
        let mut stack: Vec<Vec<u16>> = Vec::new();
        for i in (0..self.relays.len()).rev() {
            stack.extend(self.relays[i].rows.iter().cloned());
            let r = gf.rank(&mut stack.clone());
            out[i] = (r - below) as u32;
            below = r;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NcStats {
    pub q: u32,
    pub epochs: u64,
    pub warmup: u64,
    pub innovative: u64,
    /// Innovative packets per epoch at the destination after warm-up.
    pub rate: f64,
    pub rate_stderr: f64,
    /// Mean of each relay's innovative occupancy after warm-up.
    pub eta_mean: Vec<f64>,
    /// `eta_hist[i][k]` = post-warm-up epochs ending with `k` at relay `i`.
    pub eta_hist: Vec<Vec<u64>>,
    pub seed: u64,
    pub stream: u64,
}

struct Run {
    stats: NcStats,
    /// Transition counts of the occupancy process, indexed by state.
    transitions: Option<Vec<Vec<u64>>>,
}

fn run(spec: &NetworkSpec, field: FieldSpec, epochs: u64, warmup: u64, seed: u64, stream: u64, count_transitions: bool) -> Result<Run> {
    if epochs <= warmup {
        return Err(crate::Error::InvalidSpec(format!("epochs ({epochs}) must exceed warm-up ({warmup})")));
    }
    let gf = Gf::new(field);
    let h = spec.h();
    let m = spec.buffers();
    let total_m: usize = m.iter().map(|&b| b as usize).sum();
    let rebase_at = 2 * total_m + 8;
    let mut rng = stream_rng(seed, stream);
    let mut net = Network::new(m);
    let mut x = vec![false; h];
    let mut eta = vec![0u32; h - 1];
    let mut prev = vec![0u32; h - 1];
    let mut eta_hist: Vec<Vec<u64>> = m.iter().map(|&b| vec![0; b as usize + 1]).collect();
    let mut transitions = count_transitions.then(|| {
        let n = spec.state_space_size() as usize;
        vec![vec![0u64; n]; n]
    });
    let measured = epochs - warmup;
    let batch_len = (measured / BATCHES).max(1);
    let (mut innovative, mut in_batch, mut batch_innov) = (0u64, 0u64, 0u64);
    let mut batches: Vec<u64> = Vec::new();
    let mut outgoing: Vec<Vec<u16>> = vec![Vec::new(); h - 1];

    for l in 0..epochs {
        spec.sample_into(&mut rng, &mut x);
        // Transmit first: every relay forms its packet from the contents it
        // held at the start of the epoch.
        for (out, buf) in outgoing.iter_mut().zip(&net.relays) {
            *out = nc_transmit(buf, &gf, &mut rng);
        }
        let mut got = false;
        if x[h - 1] {
            let p = &outgoing[h - 2];
            if p.iter().any(|v| *v != 0) {
                got = true;
                let p = p.clone();
                // Outgoing packets of upstream relays must share the new
                // coordinates.
                for j in 0..h - 2 {
                    let c = p.iter().rposition(|v| *v != 0).expect("nonzero");
                    let f = gf.mul(outgoing[j][c], gf.inv(p[c]));
                    gf.axpy(&mut outgoing[j], f, &p);
                    outgoing[j].swap_remove(c);
                }
                net.absorb_at_destination(&p, &gf);
            }
        }
        for i in (1..h - 1).rev() {
            if x[i] {
                let pkt = std::mem::take(&mut outgoing[i - 1]);
                nc_receive(&mut net.relays[i], &pkt, &gf, &mut rng);
            }
        }
        if x[0] {
            let e = net.fresh_coordinate();
            nc_receive(&mut net.relays[0], &e, &gf, &mut rng);
        }
        if net.width > rebase_at {
            net.rebase(&gf);
        }

        if count_transitions || l >= warmup {
            net.eta(&gf, &mut eta);
        }
        if let Some(t) = transitions.as_mut() {
            if l >= warmup {
                t[index0(&prev, m)][index0(&eta, m)] += 1;
            }
            prev.copy_from_slice(&eta);
        }
        if l >= warmup {
            for (hist, &e) in eta_hist.iter_mut().zip(&eta) {
                hist[e as usize] += 1;
            }
            innovative += got as u64;
            batch_innov += got as u64;
            in_batch += 1;
            if in_batch == batch_len {
                batches.push(batch_innov);
                batch_innov = 0;
                in_batch = 0;
            }
        }
    }

    let rate = innovative as f64 / measured as f64;
    let nb = batches.len() as f64;
    let rate_stderr = if batches.len() >= 2 {
        let means: Vec<f64> = batches.iter().map(|&c| c as f64 / batch_len as f64).collect();
        let mu = means.iter().sum::<f64>() / nb;
        (means.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (nb - 1.0) / nb).sqrt()
    } else {
        f64::NAN
    };
    let eta_mean = eta_hist
        .iter()
        .map(|hist| hist.iter().enumerate().map(|(k, c)| k as f64 * *c as f64).sum::<f64>() / measured as f64)
        .collect();
    Ok(Run {
        stats: NcStats { q: field.q(), epochs, warmup, innovative, rate, rate_stderr, eta_mean, eta_hist, seed, stream },
        transitions,
    })
}

/// Innovative-packet rate at the destination.
pub fn simulate_no_feedback(spec: &NetworkSpec, field: FieldSpec, epochs: u64, warmup: u64, seed: u64) -> Result<NcStats> {
    Ok(run(spec, field, epochs, warmup, seed, 0, false)?.stats)
}

/// One run per field size, in parallel on separate streams.
pub fn rate_vs_q(spec: &NetworkSpec, fields: &[FieldSpec], epochs: u64, warmup: u64, seed: u64) -> Result<Vec<NcStats>> {
    fields
        .par_iter()
        .enumerate()
        .map(|(k, f)| Ok(run(spec, *f, epochs, warmup, seed, k as u64, false)?.stats))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaComparison {
    pub q: u32,
    /// Largest entrywise gap between empirical and exact transition rows.
    pub distance: f64,
    /// `(from, to)` 0-based state indices of the largest gap.
    pub worst: (usize, usize),
    pub rows_compared: usize,
    pub min_row_samples: u64,
}

/// Rows visited fewer times than this are left out of the comparison.
pub const MIN_ROW_SAMPLES: u64 = 1000;

/// Compares the empirical transition law of the innovative-occupancy
/// process with the feedback chain.
pub fn eta_transition_comparison(spec: &NetworkSpec, field: FieldSpec, epochs: u64, seed: u64) -> Result<EtaComparison> {
    let p = build_emc(spec)?;
    let warmup = (epochs / 100).min(10_000);
    let counts = run(spec, field, epochs, warmup, seed, 0, true)?.transitions.expect("requested");
    let mut distance = 0.0f64;
    let mut worst = (0, 0);
    let mut rows_compared = 0;
    let mut min_row_samples = u64::MAX;
    for (from, row) in counts.iter().enumerate() {
        let n: u64 = row.iter().sum();
        if n < MIN_ROW_SAMPLES {
            continue;
        }
        rows_compared += 1;
        min_row_samples = min_row_samples.min(n);
        for (to, &c) in row.iter().enumerate() {
            let d = (c as f64 / n as f64 - p.get(from, to)).abs();
            if d > distance {
                distance = d;
                worst = (from, to);
            }
        }
    }
    Ok(EtaComparison { q: field.q(), distance, worst, rows_compared, min_row_samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emc::capacity_exact;
    use crate::model::stream_rng;

    fn gf(q: u32) -> Gf {
        Gf::new(FieldSpec::new(q).unwrap())
    }

    fn unit(w: usize, k: usize) -> Vec<u16> {
        let mut e = vec![0; w];
        e[k] = 1;
        e
    }

    #[test]
    fn zero_buffer_and_zero_packet() {
        let f = gf(256);
        let mut rng = stream_rng(1, 0);
        let b = CodedBuffer::zero(3, 4);
        for _ in 0..50 {
            assert!(nc_transmit(&b, &f, &mut rng).iter().all(|v| *v == 0));
        }
        let mut c = CodedBuffer { rows: vec![unit(4, 0), unit(4, 2)] };
        let before = c.clone();
        nc_receive(&mut c, &[0; 4], &f, &mut rng);
        assert_eq!(c, before);
    }

    #[test]
    fn transmit_is_uniform_on_row_space() {
        let f = gf(16);
        let mut rng = stream_rng(2, 0);
        let mut mixed = unit(3, 0);
        mixed[1] = 1;
        let b = CodedBuffer { rows: vec![unit(3, 0), unit(3, 1), mixed] };
        let n = 160_000;
        let mut inside = 0;
        for _ in 0..n {
            let v = nc_transmit(&b, &f, &mut rng);
            assert_eq!(v[2], 0);
            if v[1] == 0 {
                inside += 1;
            }
        }
        let p = inside as f64 / n as f64;
        let se = (1.0 / 16.0 * 15.0 / 16.0 / n as f64).sqrt();
        assert!((p - 1.0 / 16.0).abs() < 4.0 * se, "{p}");
    }

    #[test]
    fn single_slot_scales() {
        let f = gf(256);
        let mut rng = stream_rng(3, 0);
        let b = CodedBuffer { rows: vec![vec![3, 7]] };
        for _ in 0..100 {
            let v = nc_transmit(&b, &f, &mut rng);
            let a = if v[0] == 0 { 0 } else { f.mul(v[0], f.inv(3)) };
            assert_eq!(v, vec![f.mul(a, 3), f.mul(a, 7)]);
        }
    }

    #[test]
    fn innovative_receipt_raises_rank() {
        let f = gf(256);
        let mut rng = stream_rng(4, 0);
        let trials = 200_000;
        let mut raised = 0;
        for _ in 0..trials {
            // Rank-1 buffer of two slots receiving an independent row.
            let mut b = CodedBuffer { rows: vec![vec![1, 0], vec![5, 0]] };
            nc_receive(&mut b, &[0, 1], &f, &mut rng);
            raised += (b.rank(&f) == 2) as u64;
        }
        let p = raised as f64 / trials as f64;
        let floor = 1.0 - 1.0 / 256.0;
        let se = (floor * (1.0 - floor) / trials as f64).sqrt();
        assert!(p >= floor - 4.0 * se, "{p}");
    }

    #[test]
    fn full_buffer_keeps_rank_on_dependent_packet() {
        let f = gf(65536);
        let mut rng = stream_rng(5, 0);
        let trials = 20_000;
        let mut kept = 0;
        for _ in 0..trials {
            let mut b = CodedBuffer { rows: vec![vec![1, 0], vec![0, 1]] };
            nc_receive(&mut b, &[9, 4], &f, &mut rng);
            kept += (b.rank(&f) == 2) as u64;
        }
        assert!(trials - kept <= 5, "{kept}");
    }

    #[test]
    fn two_hop_is_the_feedback_chain() {
        let s = NetworkSpec::new(vec![0.4, 0.5], vec![2]).unwrap();
        let st = simulate_no_feedback(&s, FieldSpec::new(65536).unwrap(), 300_000, 10_000, 7).unwrap();
        let c = capacity_exact(&s, 1e-12).unwrap();
        assert!((st.rate - c).abs() < 4.0 * st.rate_stderr, "{} vs {c}", st.rate);
    }

    #[test]
    fn starved_source() {
        let s = NetworkSpec::new(vec![0.999_99, 0.5, 0.5], vec![2, 2]).unwrap();
        let st = simulate_no_feedback(&s, FieldSpec::new(256).unwrap(), 100_000, 1000, 1).unwrap();
        assert!(st.rate < 1e-4);
    }

    #[test]
    fn occupancy_stays_in_range_and_width_bounded() {
        let s = NetworkSpec::new(vec![0.2, 0.3, 0.6, 0.5], vec![3, 1, 2]).unwrap();
        let f = gf(16);
        let mut rng = stream_rng(6, 0);
        let mut net = Network::new(s.buffers());
        let mut eta = vec![0; 3];
        for _ in 0..2000 {
            let e = net.fresh_coordinate();
            nc_receive(&mut net.relays[0], &e, &f, &mut rng);
            let p = nc_transmit(&net.relays[0], &f, &mut rng);
            nc_receive(&mut net.relays[1], &p, &f, &mut rng);
            if net.width > 20 {
                let before: Vec<usize> = net.relays.iter().map(|b| b.rank(&f)).collect();
                net.eta(&f, &mut eta);
                let eta_before = eta.clone();
                net.rebase(&f);
                assert!(net.width <= 6);
                assert_eq!(before, net.relays.iter().map(|b| b.rank(&f)).collect::<Vec<_>>());
                net.eta(&f, &mut eta);
                assert_eq!(eta, eta_before);
            }
            net.eta(&f, &mut eta);
            for (e, m) in eta.iter().zip(s.buffers()) {
                assert!(e <= m);
            }
        }
    }

    #[test]
    fn reproducible() {
        let s = NetworkSpec::new(vec![0.5; 3], vec![2, 2]).unwrap();
        let f = FieldSpec::new(16).unwrap();
        assert_eq!(
            simulate_no_feedback(&s, f, 20_000, 100, 3).unwrap(),
            simulate_no_feedback(&s, f, 20_000, 100, 3).unwrap()
        );
    }

    #[test]
    fn transitions_approach_feedback_chain() {
        let s = NetworkSpec::new(vec![0.5; 3], vec![2, 2]).unwrap();
        let big = eta_transition_comparison(&s, FieldSpec::new(65536).unwrap(), 300_000, 11).unwrap();
        let small = eta_transition_comparison(&s, FieldSpec::new(2).unwrap(), 300_000, 11).unwrap();
        assert_eq!(big.rows_compared, 9);
        assert!(big.distance < 0.02, "{big:?}");
        assert!(small.distance > big.distance + 0.05, "{small:?} {big:?}");
    }
}
