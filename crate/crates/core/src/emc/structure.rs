//! Block structure of the exact chain when states are grouped by the
//! occupancy of the last intermediate node.
//!
//! With `T_k` the states whose last node holds `k` packets, the transition
//! matrix is block tridiagonal: `Γ⁻_k` (T_k → T_{k-1}), `Ω_k` (T_k → T_k) and
//! `Γ⁺_k` (T_k → T_{k+1}).

use nalgebra::DMatrix;
use serde::Serialize;

use super::{build_emc, last_node_capacity, stationary, SparseStochasticMatrix};
use crate::error::{Error, Result};
use crate::model::NetworkSpec;

const EXACT_TOL: f64 = 1e-15;

struct Blocks {
    l: usize,
    m: usize,
    p: SparseStochasticMatrix,
}

impl Blocks {
    fn new(spec: &NetworkSpec) -> Result<Self> {
        let h = spec.h();
        let m = spec.buffers()[h - 2] as usize;
        let l = spec.buffers()[..h - 2].iter().map(|&b| b as usize + 1).product();
        Ok(Self { l, m, p: build_emc(spec)? })
    }

    fn block(&self, from: usize, to: usize) -> DMatrix<f64> {
        let l = self.l;
        let d = self.p.dense_block(from * l..(from + 1) * l, to * l..(to + 1) * l);
        DMatrix::from_fn(l, l, |r, c| d[r][c])
    }

    fn minus(&self, k: usize) -> DMatrix<f64> {
        self.block(k, k - 1)
    }

    fn omega(&self, k: usize) -> DMatrix<f64> {
        self.block(k, k)
    }

    fn plus(&self, k: usize) -> DMatrix<f64> {
        self.block(k, k + 1)
    }
}

/// Outcome of the block-structure checks.
#[derive(Debug, Clone, Serialize)]
pub struct BlockStructureReport {
    pub block_size: usize,
    pub levels: usize,
    /// Smallest determinant over the `Γ⁻` blocks.
    pub min_det_gamma_minus: f64,
    /// `((1 - eps_h) ∏_{k<h} eps_k)^L`.
    pub det_floor: f64,
    /// Smallest |determinant| over the `I - Ω` blocks.
    pub min_det_i_minus_omega: f64,
}

fn fail(block: String, detail: impl Into<String>) -> Error {
    Error::Structural { block, detail: detail.into() }
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

/// Check the block structure: repeated interior blocks, triangular
/// non-singular `Γ⁻`, triangular singular `Γ⁺` (h > 2), and invertible
/// `I - Ω`.
pub fn verify_block_structure(spec: &NetworkSpec) -> Result<BlockStructureReport> {
    let b = Blocks::new(spec)?;
    let (l, m) = (b.l, b.m);
    let h = spec.h();
    let eps = spec.eps();

    for i in 0..=m {
        for j in 0..=m {
            if i.abs_diff(j) > 1 {
                let blk = b.block(i, j);
                if blk.amax() > 0.0 {
                    return Err(fail(format!("P[T{i},T{j}]"), "non-adjacent levels must not communicate"));
                }
            }
        }
    }

    for k in 2..m {
        if max_abs_diff(&b.omega(k), &b.omega(1)) > EXACT_TOL {
            return Err(fail(format!("Ω_{k}"), "differs from Ω_1"));
        }
        if max_abs_diff(&b.minus(k), &b.minus(1)) > EXACT_TOL {
            return Err(fail(format!("Γ⁻_{k}"), "differs from Γ⁻_1"));
        }
        if max_abs_diff(&b.plus(k), &b.plus(1)) > EXACT_TOL {
            return Err(fail(format!("Γ⁺_{k}"), "differs from Γ⁺_1"));
        }
    }

    let base: f64 = (1.0 - eps[h - 1]) * eps[..h - 1].iter().product::<f64>();
    let det_floor = base.powi(l as i32);
    let mut min_det = f64::INFINITY;
    for k in 1..=m {
        let g = b.minus(k);
        for r in 0..l {
            for c in 0..r {
                if g[(r, c)] != 0.0 {
                    return Err(fail(format!("Γ⁻_{k}"), format!("nonzero below diagonal at ({r},{c})")));
                }
            }
        }
        let det: f64 = g.diagonal().iter().product();
        if det < det_floor * (1.0 - 1e-9) || det <= 0.0 {
            return Err(fail(format!("Γ⁻_{k}"), format!("determinant {det:e} below {det_floor:e}")));
        }
        min_det = min_det.min(det);
    }

    if h > 2 {
        for k in 0..m {
            let g = b.plus(k);
            for r in 0..l {
                for c in r + 1..l {
                    if g[(r, c)] != 0.0 {
                        return Err(fail(format!("Γ⁺_{k}"), format!("nonzero above diagonal at ({r},{c})")));
                    }
                }
            }
            if g.diagonal().iter().all(|&d| d != 0.0) {
                return Err(fail(format!("Γ⁺_{k}"), "expected a zero on the diagonal"));
            }
        }
    }

    let mut min_det_iw = f64::INFINITY;
    for k in 0..=m {
        let a = DMatrix::identity(l, l) - b.omega(k);
        let det = a.clone().lu().determinant();
        let inv_ok = a.try_inverse().map(|inv| inv.iter().all(|v| v.is_finite())).unwrap_or(false);
        if !inv_ok || det.abs() < 1e-300 {
            return Err(fail(format!("I-Ω_{k}"), "singular"));
        }
        min_det_iw = min_det_iw.min(det.abs());
    }

    Ok(BlockStructureReport {
        block_size: l,
        levels: m + 1,
        min_det_gamma_minus: min_det,
        det_floor,
        min_det_i_minus_omega: min_det_iw,
    })
}

/// Capacity bound from the level recursion, with the recursion checked
/// against the exact stationary law.
#[derive(Debug, Clone, Serialize)]
pub struct HBoundReport {
    pub bound: f64,
    pub exact: f64,
    /// Max over levels of `|H_k π_0 - π_k|_∞`.
    pub relation_error: f64,
}

/// Builds `H_0 = I`, `H_1 = (Γ⁻_1ᵀ)⁻¹ (I-Ω_0)ᵀ`,
/// `H_k = (Γ⁻_kᵀ)⁻¹ ((I-Ω_{k-1})ᵀ H_{k-1} - Γ⁺_{k-2}ᵀ H_{k-2})`, so that the
/// level-`k` stationary mass (as a column) is `H_k π_0`. Since the levels sum
/// to one, `Pr[T_0] ≥ 1/‖Σ H_k‖₁`, bounding the capacity from above.
pub fn h_matrix_bound(spec: &NetworkSpec) -> Result<HBoundReport> {
    let b = Blocks::new(spec)?;
    let (l, m) = (b.l, b.m);
    let eye = DMatrix::<f64>::identity(l, l);
    let mut hs: Vec<DMatrix<f64>> = vec![eye.clone()];
    for k in 1..=m {
        let mut rhs = (&eye - b.omega(k - 1)).transpose() * &hs[k - 1];
        if k >= 2 {
            rhs -= b.plus(k - 2).transpose() * &hs[k - 2];
        }
        let gt = b.minus(k).transpose();
        let hk = gt
            .solve_lower_triangular(&rhs)
            .ok_or_else(|| fail(format!("Γ⁻_{k}"), "singular"))?;
        hs.push(hk);
    }
    let sum = hs.iter().fold(DMatrix::zeros(l, l), |acc, h| acc + h);
    let norm1 = (0..l)
        .map(|c| sum.column(c).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let eps_h = spec.eps()[spec.h() - 1];
    let bound = (1.0 - eps_h) * (1.0 - 1.0 / norm1);

    let pi = stationary(&b.p, 1e-14, 1_000_000)?.pi;
    let exact = last_node_capacity(spec, &pi);
    let p0 = nalgebra::DVector::from_column_slice(&pi[..l]);
    let mut relation_error: f64 = 0.0;
    for (k, hk) in hs.iter().enumerate() {
        let pk = nalgebra::DVector::from_column_slice(&pi[k * l..(k + 1) * l]);
        relation_error = relation_error.max((hk * &p0 - pk).amax());
    }
    Ok(HBoundReport { bound, exact, relation_error })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(eps: &[f64], m: &[u32]) -> NetworkSpec {
        NetworkSpec::new(eps.to_vec(), m.to_vec()).unwrap()
    }

    #[test]
    fn three_hop_structure() {
        let s = spec(&[0.3, 0.5, 0.7], &[2, 2]);
        let r = verify_block_structure(&s).unwrap();
        assert_eq!(r.block_size, 3);
        assert!(r.min_det_gamma_minus >= r.det_floor);
        let b = Blocks::new(&s).unwrap();
        assert_eq!(b.plus(0)[(0, 0)], 0.0);
    }

    #[test]
    fn two_hop_blocks_are_scalars() {
        let (e1, e2) = (0.35, 0.6);
        let s = spec(&[e1, e2], &[4]);
        verify_block_structure(&s).unwrap();
        let b = Blocks::new(&s).unwrap();
        for k in 1..=4 {
            let g = b.minus(k);
            assert_eq!(g.shape(), (1, 1));
            assert!((g[(0, 0)] - (1.0 - e2) * e1).abs() < 1e-15);
        }
    }

    #[test]
    fn h_bound_dominates_and_relation_holds() {
        let s = spec(&[0.3, 0.5, 0.7], &[2, 2]);
        let r = h_matrix_bound(&s).unwrap();
        assert!(r.bound >= r.exact - 1e-12, "{r:?}");
        assert!(r.relation_error <= 1e-8, "{r:?}");
    }

    #[test]
    fn two_hop_recursion_is_birth_death_ratio() {
        // One node: up-rate 1-e1 from empty, a = (1-e1) e2 otherwise,
        // down-rate d = e1 (1-e2).
        let (e1, e2) = (0.4, 0.3);
        let s = spec(&[e1, e2], &[3]);
        let r = h_matrix_bound(&s).unwrap();
        assert!(r.relation_error < 1e-12);
        let a = (1.0 - e1) * e2;
        let d = e1 * (1.0 - e2);
        let u = (1.0 - e1) / d;
        let ratios = [1.0, u, u * a / d, u * (a / d).powi(2)];
        let b = Blocks::new(&s).unwrap();
        let pi = stationary(&b.p, 1e-14, 100_000).unwrap().pi;
        for k in 0..4 {
            assert!((pi[k] / pi[0] - ratios[k]).abs() < 1e-9, "level {k}");
        }
        // Scalar recursion: the bound is tight.
        assert!((r.bound - r.exact).abs() < 1e-10);
    }
}
