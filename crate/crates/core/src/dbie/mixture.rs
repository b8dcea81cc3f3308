//! Signed mixtures of geometric laws on `{1, 2, ...}` plus a point mass at 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Real;

/// `w₀·𝕀 + Σ p_l 𝔾(θ_l)` where `𝔾(θ)` has pmf `(1-θ) θ^{k-1}` for `k ≥ 1`
/// and `𝕀` is the point mass at 0. Parameters are pairwise distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricMixture<R: Real = f64> {
    identity: R,
    terms: Vec<(R, R)>,
}

/// JSON form of one term; `theta: null` is the point mass at 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub p: f64,
    pub theta: Option<f64>,
}

impl<R: Real> GeometricMixture<R> {
    pub fn geometric(theta: R) -> Self {
        Self { identity: R::zero(), terms: vec![(R::one(), theta)] }
    }

    /// The convolution identity.
    pub fn identity() -> Self {
        Self { identity: R::one(), terms: Vec::new() }
    }

    /// Mixture from `(weight, parameter)` pairs; parameters must be distinct
    /// and inside `[0, 1)`.
    pub fn new(identity: R, terms: Vec<(R, R)>) -> Result<Self> {
        for (i, &(_, t)) in terms.iter().enumerate() {
            if !(t >= R::zero() && t < R::one()) {
                return Err(Error::InvalidSpec(format!("mixture parameter {t} outside [0, 1)")));
            }
            if terms[..i].iter().any(|&(_, u)| u == t) {
                return Err(Error::CoincidentParams(t.to_f64()));
            }
        }
        Ok(Self { identity, terms })
    }

    pub fn identity_weight(&self) -> R {
        self.identity
    }

    pub fn terms(&self) -> &[(R, R)] {
        &self.terms
    }

    pub fn params(&self) -> impl Iterator<Item = R> + '_ {
        self.terms.iter().map(|t| t.1)
    }

    pub fn weight_sum(&self) -> R {
        let mut s = self.identity;
        for &(p, _) in &self.terms {
            s += p;
        }
        s
    }

    /// `Σ p_l / (1 - θ_l)`.
    pub fn mean(&self) -> R {
        let mut s = R::zero();
        for &(p, t) in &self.terms {
            s += p / (R::one() - t);
        }
        s
    }

    /// Second moment about zero, `Σ p_l (1 + θ_l) / (1 - θ_l)²`.
    pub fn second_moment(&self) -> R {
        let mut s = R::zero();
        for &(p, t) in &self.terms {
            let d = R::one() - t;
            s += p * (R::one() + t) / (d * d);
        }
        s
    }

    pub fn pmf(&self, k: u32) -> R {
        if k == 0 {
            return self.identity;
        }
        let mut s = R::zero();
        for &(p, t) in &self.terms {
            s += p * (R::one() - t) * t.powu(k - 1);
        }
        s
    }

    /// Largest absolute weight.
    pub fn max_abs_weight(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.0.to_f64().abs())
            .fold(self.identity.to_f64().abs(), f64::max)
    }

    fn add_term(terms: &mut Vec<(R, R)>, p: R, t: R) {
        match terms.iter_mut().find(|e| e.1 == t) {
            Some(e) => e.0 += p,
            None => terms.push((p, t)),
        }
    }

    /// Convolution, expanded term by term with
    /// `𝔾(λ)⊗𝔾(μ) = (1-λ)/(μ-λ)·𝔾(μ) + (1-μ)/(λ-μ)·𝔾(λ)`.
    pub fn convolve(&self, other: &Self) -> Result<Self> {
        for &(_, t) in &self.terms {
            if other.terms.iter().any(|&(_, u)| u == t) {
                return Err(Error::CoincidentParams(t.to_f64()));
            }
        }
        let one = R::one();
        let mut terms: Vec<(R, R)> = Vec::with_capacity(self.terms.len() + other.terms.len());
        for &(p, t) in &self.terms {
            Self::add_term(&mut terms, p * other.identity, t);
        }
        for &(q, u) in &other.terms {
            Self::add_term(&mut terms, q * self.identity, u);
        }
        for &(p, l) in &self.terms {
            for &(q, u) in &other.terms {
                let pq = p * q;
                Self::add_term(&mut terms, pq * (one - l) / (u - l), u);
                Self::add_term(&mut terms, pq * (one - u) / (l - u), l);
            }
        }
        Ok(Self { identity: self.identity * other.identity, terms })
    }

    /// Drop terms whose mean contribution is below `rel` of the mean, then
    /// rescale the weights to sum to one.
    pub fn compact(&mut self, rel: f64) {
        let mean = self.mean().abs();
        let cut = mean * R::from_f64(rel);
        self.terms.retain(|&(p, t)| (p / (R::one() - t)).abs() >= cut);
        let s = self.weight_sum();
        if s != R::zero() {
            self.identity = self.identity / s;
            for e in self.terms.iter_mut() {
                e.0 = e.0 / s;
            }
        }
    }

    /// Check unit mass and a nonnegative pmf on `0..=k_check`.
    pub fn validate(&self, k_check: u32) -> Result<()> {
        let drift = (self.weight_sum() - R::one()).abs().to_f64();
        if drift > 1e-9 {
            return Err(Error::Inconsistency(format!("mixture weights sum to 1{drift:+e}")));
        }
        if self.identity < R::from_f64(-1e-9) {
            return Err(Error::Inconsistency("negative mass at 0".into()));
        }
        let one = R::one();
        let mut powers: Vec<R> = vec![one; self.terms.len()];
        for k in 1..=k_check {
            let mut s = R::zero();
            for (pw, &(p, t)) in powers.iter_mut().zip(&self.terms) {
                s += p * (one - t) * *pw;
                *pw *= t;
            }
            if s.to_f64() < -1e-9 {
                return Err(Error::Inconsistency(format!("pmf({k}) = {s} is negative")));
            }
        }
        Ok(())
    }

    pub fn to_f64(&self) -> GeometricMixture<f64> {
        GeometricMixture {
            identity: self.identity.to_f64(),
            terms: self.terms.iter().map(|&(p, t)| (p.to_f64(), t.to_f64())).collect(),
        }
    }

    pub fn cast<S: Real>(&self) -> GeometricMixture<S> {
        GeometricMixture {
            identity: S::from_f64(self.identity.to_f64()),
            terms: self.terms.iter().map(|&(p, t)| (S::from_f64(p.to_f64()), S::from_f64(t.to_f64()))).collect(),
        }
    }

    pub fn to_terms(&self) -> Vec<Term> {
        let mut out: Vec<Term> =
            self.terms.iter().map(|&(p, t)| Term { p: p.to_f64(), theta: Some(t.to_f64()) }).collect();
        if self.identity != R::zero() {
            out.push(Term { p: self.identity.to_f64(), theta: None });
        }
        out
    }
}

impl GeometricMixture<f64> {
    pub fn from_terms(terms: &[Term]) -> Result<Self> {
        let mut identity = 0.0;
        let mut rest = Vec::new();
        for t in terms {
            match t.theta {
                None => identity += t.p,
                Some(theta) => rest.push((t.p, theta)),
            }
        }
        Self::new(identity, rest)
    }
}
