//! Row-compressed stochastic matrices and their stationary distributions.

use serde::Serialize;

use crate::error::{Error, Result};

/// Sparse row-stochastic matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseStochasticMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseStochasticMatrix {
    /// Build from per-row `(column, probability)` lists. Entries with equal
    /// columns are merged; rows are checked to sum to one.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let dim = rows.len();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for (r, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|e| e.0);
            let mut sum = 0.0;
            let start = cols.len();
            for (c, p) in row {
                if c >= dim {
                    return Err(Error::Inconsistency(format!("column {c} out of range in row {r}")));
                }
                if !(0.0..=1.0 + 1e-12).contains(&p) {
                    return Err(Error::Inconsistency(format!("entry ({r},{c}) = {p} is not a probability")));
                }
                sum += p;
                if cols.len() > start && *cols.last().unwrap() as usize == c {
                    *vals.last_mut().unwrap() += p;
                } else if p > 0.0 {
                    cols.push(c as u32);
                    vals.push(p);
                }
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Inconsistency(format!("row {r} sums to {sum}")));
            }
            row_ptr.push(cols.len());
        }
        Ok(Self { dim, row_ptr, cols, vals })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Column indices and probabilities of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.cols[a..b].iter().map(|&c| c as usize).zip(self.vals[a..b].iter().copied())
    }

    pub fn row_len(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        match self.cols[a..b].binary_search(&(c as u32)) {
            Ok(k) => self.vals[a + k],
            Err(_) => 0.0,
        }
    }

    /// `out = v P`.
    pub fn left_mul(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for r in 0..self.dim {
            let vr = v[r];
            if vr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[self.cols[k] as usize] += vr * self.vals[k];
            }
        }
    }

    /// Max-norm of `v P - v`.
    pub fn residual(&self, v: &[f64]) -> f64 {
        let mut out = vec![0.0; self.dim];
        self.left_mul(v, &mut out);
        out.iter().zip(v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// `(row, col, prob)` triplets, 0-based.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, p)| (r, c, p)))
    }

    /// Dense copy of the sub-block with the given row and column ranges.
    pub fn dense_block(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Vec<Vec<f64>> {
        rows.map(|r| {
            let mut line = vec![0.0; cols.len()];
            for (c, p) in self.row(r) {
                if cols.contains(&c) {
                    line[c - cols.start] = p;
                }
            }
            line
        })
        .collect()
    }

    fn reaches_all(&self, reverse: bool) -> bool {
        let mut adj_rev: Vec<Vec<u32>> = Vec::new();
        if reverse {
            adj_rev = vec![Vec::new(); self.dim];
            for (r, c, _) in self.triplets() {
                adj_rev[c].push(r as u32);
            }
        }
        let mut seen = vec![false; self.dim];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            let mut visit = |v: usize| {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            };
            if reverse {
                for &v in &adj_rev[u] {
                    visit(v as usize);
                }
            } else {
                for k in self.row_ptr[u]..self.row_ptr[u + 1] {
                    visit(self.cols[k] as usize);
                }
            }
        }
        count == self.dim
    }

    /// True when every state reaches and is reached from state 0.
    pub fn is_irreducible(&self) -> bool {
        self.dim > 0 && self.reaches_all(false) && self.reaches_all(true)
    }
}

/// Stationary distribution of a chain together with its residual.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryDistribution {
    pub pi: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Largest chain solved by the dense direct fallback.
pub const DIRECT_LIMIT: usize = 2500;

/// Stationary distribution by power iteration; falls back to a direct solve
/// when power iteration stalls on a small chain.
pub fn stationary(p: &SparseStochasticMatrix, tol: f64, max_iter: usize) -> Result<StationaryDistribution> {
    if !p.is_irreducible() {
        return Err(Error::Reducible(format!("{} states", p.dim())));
    }
    match power_iteration(p, tol, max_iter) {
        Ok(s) => Ok(s),
        Err(e) if p.dim() <= DIRECT_LIMIT => {
            let s = stationary_direct(p)?;
            if s.residual <= tol.max(1e-13) {
                Ok(s)
            } else {
                Err(e)
            }
        }
        Err(e) => Err(e),
    }
}

fn power_iteration(p: &SparseStochasticMatrix, tol: f64, max_iter: usize) -> Result<StationaryDistribution> {
    let n = p.dim();
    let mut v = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        p.left_mul(&v, &mut next);
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        residual = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut next);
        if residual <= tol {
            return Ok(StationaryDistribution { residual: p.residual(&v), pi: v, iterations: it });
        }
    }
    Err(Error::Convergence { iterations: max_iter, residual })
}

/// Dense Grassmann–Taksar–Heyman elimination. Subtraction-free, so accurate
/// even for nearly decomposable chains.
pub fn stationary_direct(p: &SparseStochasticMatrix) -> Result<StationaryDistribution> {
    let n = p.dim();
    if n > DIRECT_LIMIT {
        return Err(Error::CapacityExceeded { states: n as u128, cap: DIRECT_LIMIT });
    }
    let mut a = vec![vec![0.0; n]; n];
    for (r, c, v) in p.triplets() {
        a[r][c] = v;
    }
    let pi = crate::numeric::gth(a).ok_or_else(|| Error::Reducible(format!("{n} states")))?;
    Ok(StationaryDistribution { residual: p.residual(&pi), pi, iterations: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn birth_death() -> SparseStochasticMatrix {
        SparseStochasticMatrix::from_rows(vec![
            vec![(0, 0.5), (1, 0.5)],
            vec![(0, 0.25), (1, 0.5), (2, 0.25)],
            vec![(1, 0.25), (2, 0.75)],
        ])
        .unwrap()
    }

    #[test]
    fn three_state_chain() {
        let p = birth_death();
        let s = stationary(&p, 1e-13, 100_000).unwrap();
        for (a, b) in s.pi.iter().zip([0.2, 0.4, 0.4]) {
            assert!((a - b).abs() < 1e-11);
        }
        let d = stationary_direct(&p).unwrap();
        for (a, b) in d.pi.iter().zip([0.2, 0.4, 0.4]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn identity_rejected() {
        let p = SparseStochasticMatrix::from_rows(vec![vec![(0, 1.0)], vec![(1, 1.0)]]).unwrap();
        assert!(matches!(stationary(&p, 1e-12, 10), Err(Error::Reducible(_))));
    }

    #[test]
    fn rows_must_be_stochastic() {
        assert!(SparseStochasticMatrix::from_rows(vec![vec![(0, 0.5)]]).is_err());
        assert!(SparseStochasticMatrix::from_rows(vec![vec![(1, 1.0)]]).is_err());
    }

    #[test]
    fn periodic_chain_uses_direct_fallback() {
        let p = SparseStochasticMatrix::from_rows(vec![
            vec![(1, 1.0)],
            vec![(0, 0.5), (2, 0.5)],
            vec![(1, 1.0)],
        ])
        .unwrap();
        assert!(matches!(power_iteration(&p, 1e-12, 50), Err(Error::Convergence { .. })));
        let s = stationary(&p, 1e-12, 50).unwrap();
        assert!((s.pi[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn duplicate_columns_merge() {
        let p = SparseStochasticMatrix::from_rows(vec![vec![(0, 0.25), (0, 0.25), (1, 0.5)], vec![(0, 1.0)]]).unwrap();
        assert_eq!(p.nnz(), 3);
        assert_eq!(p.get(0, 0), 0.5);
    }
}
