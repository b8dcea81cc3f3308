//! Distribution-based iterative estimate. Inter-arrival laws are carried as
//! signed geometric mixtures; each relay is analysed as a finite queue with
//! geometric service observed at arrival instants, and the departure law is
//! rebuilt from its starvation gaps.

mod mixture;

pub use mixture::{GeometricMixture, Term};

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::NetworkSpec;
use crate::numeric::{f256, gth, Real};

impl<R: Real> Serialize for GeometricMixture<R> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_terms().serialize(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Double,
    Extended,
}

/// Minimum gap between erasure probabilities accepted in double precision.
pub const DOUBLE_MIN_GAP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DbieOptions {
    pub max_iter: usize,
    /// Halt once no blocking probability moves by more than this.
    pub tol: f64,
    pub precision: Precision,
    /// Step used to separate coinciding erasure probabilities; `None`
    /// rejects them instead.
    pub perturbation: Option<f64>,
    /// Blocking probabilities to start from (defaults to zeros).
    pub initial_pb: Option<Vec<f64>>,
}

impl Default for DbieOptions {
    fn default() -> Self {
        Self { max_iter: 10_000, tol: 1e-10, precision: Precision::Extended, perturbation: Some(1e-6), initial_pb: None }
    }
}

/// Service failure probability seen by a queue whose downstream link fails
/// with `theta_n` and whose deliveries are refused with probability `q`.
pub fn theta_tilde<R: Real>(theta_n: R, q: R) -> R {
    theta_n + (R::one() - theta_n) * q
}

fn check_arrivals<R: Real>(g: &GeometricMixture<R>) -> Result<()> {
    if g.identity_weight().abs().to_f64() > 1e-12 {
        return Err(Error::InvalidSpec("inter-arrival law puts mass at 0".into()));
    }
    if g.terms().is_empty() {
        return Err(Error::InvalidSpec("inter-arrival law is empty".into()));
    }
    Ok(())
}

/// `D_j`: probability of `j` potential service completions during one
/// inter-arrival time, for `j = 0..=j_max`.
pub fn dj_distribution<R: Real>(g: &GeometricMixture<R>, theta_tilde: R, j_max: usize) -> Result<Vec<R>> {
    check_arrivals(g)?;
    let one = R::one();
    if !(theta_tilde >= R::zero() && theta_tilde < one) {
        return Err(Error::InvalidSpec(format!("service failure {theta_tilde} outside [0, 1)")));
    }
    let s = one - theta_tilde;
    let mut d = vec![R::zero(); j_max + 1];
    for &(p, t) in g.terms() {
        let den = one - t * theta_tilde;
        d[0] += p * (one - t) * theta_tilde / den;
        let ratio = t * s / den;
        let mut term = p * (one - t) * s / (den * den);
        for dj in d.iter_mut().skip(1) {
            *dj += term;
            term *= ratio;
        }
    }
    Ok(d)
}

/// Queue length just after arrivals.
#[derive(Debug, Clone)]
pub struct EmbeddedChain<R: Real = f64> {
    /// Transition matrix over post-arrival occupancies `1..=m`.
    pub p: Vec<Vec<R>>,
    pub pi: Vec<R>,
    /// `D_0..=D_m`.
    pub d: Vec<R>,
}

pub fn embedded_chain<R: Real>(g: &GeometricMixture<R>, m: usize, theta_n: R, q: R) -> Result<EmbeddedChain<R>> {
    if m == 0 {
        return Err(Error::InvalidSpec("buffer must hold at least one packet".into()));
    }
    let d = dj_distribution(g, theta_tilde(theta_n, q), m)?;
    let zero = R::zero();
    let mut tails = vec![R::one(); m + 1];
    for i in 1..=m {
        let t = tails[i - 1] - d[i - 1];
        tails[i] = if t < zero { zero } else { t };
    }
    let mut p = vec![vec![zero; m]; m];
    for i in 1..=m {
        for j in 1..=m {
            let mut v = zero;
            if j == 1 {
                v += tails[i];
            }
            if j >= 2 && i + 1 >= j {
                v += d[i + 1 - j];
            }
            if j == m && i >= m {
                v += d[i - m];
            }
            p[i - 1][j - 1] = v;
        }
    }
    let pi = gth(p.clone()).ok_or_else(|| Error::Reducible("post-arrival occupancy chain".into()))?;
    Ok(EmbeddedChain { p, pi, d })
}

/// Probability that an arrival finds the buffer full.
pub fn blocking_prob<R: Real>(g: &GeometricMixture<R>, m: usize, theta_n: R, q: R) -> Result<R> {
    let ch = embedded_chain(g, m, theta_n, q)?;
    Ok(ch.pi[m - 1] * ch.d[0])
}

/// Law of the idle gap between the queue emptying and the next arrival,
/// given that such a gap occurs.
pub fn starvation_distribution<R: Real>(
    g: &GeometricMixture<R>,
    pi: &[R],
    theta_n: R,
    q: R,
) -> Result<GeometricMixture<R>> {
    check_arrivals(g)?;
    let one = R::one();
    let tt = theta_tilde(theta_n, q);
    let s = one - tt;
    let mut terms = Vec::with_capacity(g.terms().len());
    let mut total = R::zero();
    for &(p, t) in g.terms() {
        let c = t * s / (one - t * tt);
        let mut ck = c;
        let mut acc = R::zero();
        for &pk in pi {
            acc += pk * ck;
            ck *= c;
        }
        let b = p * acc;
        total += b;
        terms.push((b, t));
    }
    if !(total.abs().to_f64() > 1e-300) {
        return Err(Error::Degenerate("the queue never starves".into()));
    }
    for e in terms.iter_mut() {
        e.0 = e.0 / total;
    }
    GeometricMixture::new(R::zero(), terms)
}

/// Departure-side quantities of one relay.
#[derive(Debug, Clone)]
pub struct Upsilon<R: Real = f64> {
    /// `(1-α)𝕀 + α f^X`.
    pub mixture: GeometricMixture<R>,
    pub alpha: R,
    pub blocking: R,
    pub pi: Vec<R>,
}

/// Map an inter-arrival law through a relay with `m` slots, downstream
/// failure `theta_n` and downstream refusal `q`. The starvation weight `α`
/// makes the output rate `(1/⟨Υ⊗𝔾(θ_N)⟩)` equal the accepted rate scaled by
/// `1/(1-q)`.
pub fn upsilon<R: Real>(g: &GeometricMixture<R>, m: usize, theta_n: R, q: R) -> Result<Upsilon<R>> {
    let one = R::one();
    if g.params().any(|t| t == theta_n) {
        return Err(Error::CoincidentParams(theta_n.to_f64()));
    }
    if !(q >= R::zero() && q < one) {
        return Err(Error::InvalidSpec(format!("refusal probability {q} outside [0, 1)")));
    }
    let ch = embedded_chain(g, m, theta_n, q)?;
    let blocking = ch.pi[m - 1] * ch.d[0];
    let fx = starvation_distribution(g, &ch.pi, theta_n, q)?;
    let target = g.mean() * (one - q) / (one - blocking);
    let mut alpha = (target - one / (one - theta_n)) / fx.mean();
    let a = alpha.to_f64();
    if !(-1e-9..=1.0 + 1e-9).contains(&a) {
        return Err(Error::Inconsistency(format!("starvation weight {a} outside [0, 1]")));
    }
    if alpha < R::zero() {
        alpha = R::zero();
    } else if alpha > one {
        alpha = one;
    }
    let terms = fx.terms().iter().map(|&(p, t)| (alpha * p, t)).collect();
    let mixture = GeometricMixture::new(one - alpha, terms)?;
    Ok(Upsilon { mixture, alpha, blocking, pi: ch.pi })
}

#[derive(Debug, Clone, Serialize)]
pub struct DistSolution {
    /// Inter-arrival law at each node (first entry: the source link).
    pub f: Vec<GeometricMixture<f64>>,
    /// Mean of each `f`, computed in working precision.
    pub mean_interarrival: Vec<f64>,
    pub pb: Vec<f64>,
    /// Post-arrival occupancy law of each relay over `1..=m`.
    pub pi_embedded: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Erasure probabilities actually used (after any perturbation).
    pub eps_used: Vec<f64>,
    pub precision: Precision,
    /// Largest |weight| met in any mixture.
    pub max_weight: f64,
    pub notes: Vec<String>,
}

/// Separate coinciding values by multiples of `delta`, in order of
/// appearance.
pub fn perturb_eps(eps: &[f64], delta: f64) -> (Vec<f64>, Vec<String>) {
    let mut used: Vec<f64> = Vec::with_capacity(eps.len());
    let mut notes = Vec::new();
    for (i, &e) in eps.iter().enumerate() {
        let mut x = e;
        let mut k = 0u32;
        while used.iter().any(|&u| (u - x).abs() < delta / 2.0) {
            k += 1;
            x = e + k as f64 * delta;
            if x >= 1.0 {
                x = e - k as f64 * delta;
            }
        }
        if k > 0 {
            notes.push(format!("eps[{i}] perturbed from {e} to {x} to keep mixture parameters distinct"));
        }
        used.push(x);
    }
    (used, notes)
}

fn min_gap(eps: &[f64]) -> f64 {
    let mut v = eps.to_vec();
    v.sort_by(f64::total_cmp);
    v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

struct Run {
    sol: DistSolution,
}

fn run<R: Real>(spec: &NetworkSpec, eps: &[f64], opts: &DbieOptions) -> Result<Run> {
    let h = spec.h();
    let m = spec.buffers();
    let e: Vec<R> = eps.iter().map(|&x| R::from_f64(x)).collect();
    let mut pb: Vec<R> = match &opts.initial_pb {
        Some(v) if v.len() == h => v.iter().map(|&x| R::from_f64(x)).collect(),
        Some(v) => return Err(Error::InvalidSpec(format!("initial blocking vector has {} entries, need {h}", v.len()))),
        None => vec![R::zero(); h],
    };
    pb[h - 1] = R::zero();
    let budget = R::DIGITS as f64;
    let mut max_weight: f64 = 1.0;
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let mut f = vec![GeometricMixture::geometric(e[0])];
        let mut next_pb = vec![R::zero(); h];
        let mut pis = Vec::with_capacity(h - 1);
        let mut alphas = Vec::with_capacity(h - 1);
        for j in 0..h - 1 {
            let up = upsilon(&f[j], m[j] as usize, e[j + 1], pb[j + 1])?;
            next_pb[j] = up.blocking;
            let mut nf = up.mixture.convolve(&GeometricMixture::geometric(e[j + 1]))?;
            nf.compact(1e-20);
            let drift = (nf.weight_sum() - R::one()).abs().to_f64();
            max_weight = max_weight.max(nf.max_abs_weight());
            let needed = max_weight.log10() + 10.0 + (nf.terms().len() as f64).log10();
            if drift > 1e-6 || needed > budget {
                return Err(Error::Precision(format!(
                    "{} arithmetic: weights reach {max_weight:.3e} (weight-sum drift {drift:.1e})",
                    R::NAME
                )));
            }
            pis.push(up.pi);
            alphas.push(up.alpha);
            f.push(nf);
        }
        residual = next_pb.iter().zip(&pb).map(|(a, b)| (*a - *b).abs().to_f64()).fold(0.0, f64::max);
        pb = next_pb;
        if residual <= opts.tol {
            let sol = DistSolution {
                mean_interarrival: f.iter().map(|g| g.mean().to_f64()).collect(),
                f: f.iter().map(|g| g.to_f64()).collect(),
                pb: pb.iter().map(|x| x.to_f64()).collect(),
                pi_embedded: pis.iter().map(|p| p.iter().map(|x| x.to_f64()).collect()).collect(),
                alpha: alphas.iter().map(|x| x.to_f64()).collect(),
                iterations: it,
                residual,
                eps_used: eps.to_vec(),
                precision: if R::DIGITS > 20 { Precision::Extended } else { Precision::Double },
                max_weight,
                notes: Vec::new(),
            };
            return Ok(Run { sol });
        }
    }
    Err(Error::Convergence { iterations: opts.max_iter, residual })
}

pub fn solve_with(spec: &NetworkSpec, opts: &DbieOptions) -> Result<DistSolution> {
    let (eps, mut notes) = if spec.has_distinct_eps() {
        (spec.eps().to_vec(), Vec::new())
    } else {
        match opts.perturbation {
            Some(delta) => perturb_eps(spec.eps(), delta),
            None => {
                let mut v = spec.eps().to_vec();
                v.sort_by(f64::total_cmp);
                let dup = v.windows(2).find(|w| w[0] == w[1]).map(|w| w[0]).unwrap_or(f64::NAN);
                return Err(Error::CoincidentParams(dup));
            }
        }
    };
    let result = match opts.precision {
        Precision::Extended => run::<f256>(spec, &eps, opts),
        Precision::Double => {
            let gap = min_gap(&eps);
            if gap < DOUBLE_MIN_GAP {
                return Err(Error::Precision(format!(
                    "erasure probabilities {gap:.1e} apart need extended precision"
                )));
            }
            match run::<f64>(spec, &eps, opts) {
                Err(Error::Precision(why)) => {
                    notes.push(format!("escalated to extended precision: {why}"));
                    run::<f256>(spec, &eps, opts)
                }
                other => other,
            }
        }
    };
    let mut sol = result?.sol;
    notes.append(&mut sol.notes);
    sol.notes = notes;
    Ok(sol)
}

pub fn solve(spec: &NetworkSpec, max_iter: usize, tol: f64) -> Result<DistSolution> {
    solve_with(spec, &DbieOptions { max_iter, tol, ..DbieOptions::default() })
}

/// Capacity estimate: the reciprocal mean inter-arrival time at the
/// destination.
pub fn capacity(sol: &DistSolution) -> Result<f64> {
    let mean = *sol.mean_interarrival.last().ok_or_else(|| Error::Inconsistency("empty solution".into()))?;
    if !(mean.is_finite() && mean > 0.0) {
        return Err(Error::Inconsistency(format!("mean inter-arrival time {mean}")));
    }
    Ok(1.0 / mean)
}
