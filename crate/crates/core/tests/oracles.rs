//! Monte-Carlo oracles for the finite-queue building blocks and for the
//! exact chain's stationary law.

mod common;

use common::{check_queue, chi_square_p, within_sigma, Gm1m};
use linenet::emc::{solve_exact, ChainOptions};
use linenet::model::stream_rng;
use linenet::sim::{simulate, SimConfig};
use linenet::NetworkSpec;
use rand::Rng;

#[test]
fn queue_blocks_match_simulation_small_buffer() {
    let q = Gm1m { arrivals: vec![(0.6, 0.3), (0.4, 0.7)], m: 3, theta: 0.46 };
    check_queue(&q, 0.4, 0.1, 1).unwrap();
}

#[test]
fn queue_blocks_match_simulation_single_geometric() {
    // Blocking is frequent here: arrivals outpace service.
    let q = Gm1m { arrivals: vec![(1.0, 0.2)], m: 2, theta: 0.5 };
    check_queue(&q, 0.5, 0.0, 2).unwrap();
}

#[test]
fn queue_blocks_match_simulation_light_load() {
    let q = Gm1m { arrivals: vec![(0.3, 0.5), (0.7, 0.85)], m: 4, theta: 0.3 + 0.7 * 0.25 };
    check_queue(&q, 0.3, 0.25, 3).unwrap();
}

#[test]
fn occupancy_histograms_fit_exact_law() {
    let mut rng = stream_rng(99, 0);
    for k in 0..10 {
        let h = rng.gen_range(2..=4usize);
        let eps: Vec<f64> = (0..h).map(|_| rng.gen_range(0.1..0.7)).collect();
        let m: Vec<u32> = (0..h - 1).map(|_| rng.gen_range(1..=3)).collect();
        let spec = NetworkSpec::new(eps, m).unwrap();
        let p = chi_square_p(&spec, 1000 + k);
        assert!(p > 1e-3, "spec {spec:?}: chi-square p-value {p}");
    }
}

#[test]
fn per_node_histograms_match_marginals() {
    let spec = NetworkSpec::new(vec![0.5, 0.5, 0.5], vec![2, 2]).unwrap();
    let exact = solve_exact(&spec, &ChainOptions::default()).unwrap();
    let st = simulate(&spec, &SimConfig::new(4_000_000, 5)).unwrap();
    let n = (st.epochs_run - st.warmup) as f64;
    let mut s = vec![0u32; 2];
    let mut marg = vec![vec![0.0; 3]; 2];
    for (k, p) in exact.stationary.pi.iter().enumerate() {
        linenet::model::state_at0(k, spec.buffers(), &mut s);
        for i in 0..2 {
            marg[i][s[i] as usize] += p;
        }
    }
    for i in 0..2 {
        for k in 0..3 {
            let est = st.occupancy[i][k] as f64 / n;
            // Epoch samples are correlated; allow for an effective sample
            // size 50 times smaller.
            let sigma = (marg[i][k] * (1.0 - marg[i][k]) * 50.0 / n).sqrt();
            within_sigma(&format!("node {} k={k}", i + 1), est, marg[i][k], sigma, 3.0).unwrap();
        }
    }
}
