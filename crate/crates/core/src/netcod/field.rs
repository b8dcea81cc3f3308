//! Binary extension fields GF(2^k) for k in {1, 4, 8, 16}.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Supported field sizes.
pub const SUPPORTED_Q: [u32; 4] = [2, 16, 256, 65536];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct FieldSpec {
    q: u32,
}

impl FieldSpec {
    pub fn new(q: u32) -> Result<Self> {
        if SUPPORTED_Q.contains(&q) {
            Ok(Self { q })
        } else {
            Err(Error::InvalidSpec(format!("field size {q} not in {SUPPORTED_Q:?}")))
        }
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    fn poly(&self) -> u32 {
        match self.q {
            2 => 0b11,
            16 => 0x13,
            256 => 0x11D,
            _ => 0x1100B,
        }
    }
}

impl TryFrom<u32> for FieldSpec {
    type Error = Error;
    fn try_from(q: u32) -> Result<Self> {
        Self::new(q)
    }
}

impl From<FieldSpec> for u32 {
    fn from(f: FieldSpec) -> u32 {
        f.q
    }
}

#[derive(Debug, Clone)]
enum Tables {
    /// Full `q x q` product table.
    Full(Vec<u16>),
    /// `exp` has length `2(q-1)` so a sum of logs indexes it directly.
    Log { log: Vec<u32>, exp: Vec<u16> },
}

/// Arithmetic in GF(q); addition is XOR.
#[derive(Debug, Clone)]
pub struct Gf {
    spec: FieldSpec,
    tables: Tables,
    inv: Vec<u16>,
}

fn clmul_mod(mut a: u32, mut b: u32, poly: u32, bits: u32) -> u32 {
    let mut r = 0u32;
    while b != 0 {
        if b & 1 == 1 {
            r ^= a;
        }
        b >>= 1;
        a <<= 1;
        if a >> bits & 1 == 1 {
            a ^= poly;
        }
    }
    r
}

impl Gf {
    pub fn new(spec: FieldSpec) -> Self {
        let q = spec.q as usize;
        let bits = spec.q.trailing_zeros();
        let poly = spec.poly();
        let tables = if q <= 256 {
            let mut t = vec![0u16; q * q];
            for a in 0..q {
                for b in 0..q {
                    t[a * q + b] = clmul_mod(a as u32, b as u32, poly, bits) as u16;
                }
            }
            Tables::Full(t)
        } else {
            let mut exp = vec![0u16; 2 * (q - 1)];
            let mut log = vec![0u32; q];
            let mut x = 1u32;
            for (i, e) in exp.iter_mut().take(q - 1).enumerate() {
                *e = x as u16;
                log[x as usize] = i as u32;
                x <<= 1;
                if x >> bits & 1 == 1 {
                    x ^= poly;
                }
            }
            for i in q - 1..2 * (q - 1) {
                exp[i] = exp[i - (q - 1)];
            }
            Tables::Log { log, exp }
        };
        let mut gf = Self { spec, tables, inv: Vec::new() };
        let mut inv = vec![0u16; q];
        match &gf.tables {
            Tables::Log { log, exp } => {
                for a in 1..q {
                    inv[a] = exp[(q - 1 - log[a] as usize) % (q - 1)];
                }
            }
            Tables::Full(_) => {
                for a in 1..q {
                    inv[a] = (1..q).find(|&b| gf.mul(a as u16, b as u16) == 1).expect("field element invertible") as u16;
                }
            }
        }
        gf.inv = inv;
        gf
    }

    pub fn spec(&self) -> FieldSpec {
        self.spec
    }

    pub fn q(&self) -> u32 {
        self.spec.q
    }

    #[inline]
    pub fn mul(&self, a: u16, b: u16) -> u16 {
        match &self.tables {
            Tables::Full(t) => t[a as usize * self.spec.q as usize + b as usize],
            Tables::Log { log, exp } => {
                if a == 0 || b == 0 {
                    0
                } else {
                    exp[(log[a as usize] + log[b as usize]) as usize]
                }
            }
        }
    }

    /// Multiplicative inverse; `inv(0)` is 0.
    #[inline]
    pub fn inv(&self, a: u16) -> u16 {
        self.inv[a as usize]
    }

    #[inline]
    pub fn random<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> u16 {
        rng.gen::<u16>() & (self.spec.q - 1) as u16
    }

    /// `dst += c * src`.
    #[inline]
    pub fn axpy(&self, dst: &mut [u16], c: u16, src: &[u16]) {
        if c == 0 {
            return;
        }
        for (d, s) in dst.iter_mut().zip(src) {
            *d ^= self.mul(c, *s);
        }
    }

    /// Rank of the given rows (consumed as scratch).
    pub fn rank(&self, rows: &mut [Vec<u16>]) -> usize {
        self.row_reduce(rows).len()
    }

    /// Gaussian elimination in place; returns the pivot column of each
    /// leading row. Rows past the rank are zero afterwards.
    pub fn row_reduce(&self, rows: &mut [Vec<u16>]) -> Vec<usize> {
        let width = rows.first().map_or(0, |r| r.len());
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..width {
            if r == rows.len() {
                break;
            }
            let Some(p) = (r..rows.len()).find(|&i| rows[i][c] != 0) else { continue };
            rows.swap(r, p);
            let inv = self.inv(rows[r][c]);
            for v in rows[r].iter_mut() {
                *v = self.mul(*v, inv);
            }
            let (head, tail) = rows.split_at_mut(r);
            let (pivot, rest) = tail.split_first_mut().expect("row r exists");
            for other in head.iter_mut().chain(rest.iter_mut()) {
                let f = other[c];
                self.axpy(other, f, pivot);
            }
            pivots.push(c);
            r += 1;
        }
        pivots
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_fields_exhaustive() {
        for q in [2u32, 16] {
            let f = Gf::new(FieldSpec::new(q).unwrap());
            for a in 0..q as u16 {
                if a != 0 {
                    assert_eq!(f.mul(a, f.inv(a)), 1, "q={q} a={a}");
                }
                for b in 0..q as u16 {
                    assert_eq!(f.mul(a, b), f.mul(b, a));
                    for c in 0..q as u16 {
                        assert_eq!(f.mul(a, b ^ c), f.mul(a, b) ^ f.mul(a, c));
                        assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)));
                    }
                }
            }
        }
    }

    #[test]
    fn generators_have_full_order() {
        // A primitive modulus makes x generate the whole multiplicative group.
        for q in [16u32, 256, 65536] {
            let f = Gf::new(FieldSpec::new(q).unwrap());
            let mut x = 1u16;
            for k in 1..q {
                x = f.mul(x, 2);
                assert_eq!(x == 1, k == q - 1, "q={q} k={k}");
            }
        }
    }

    #[test]
    fn unsupported_q() {
        assert!(FieldSpec::new(3).is_err());
        assert!(FieldSpec::new(1 << 20).is_err());
    }

    #[test]
    fn rank_examples() {
        let f = Gf::new(FieldSpec::new(256).unwrap());
        let mut rows = vec![vec![1, 2, 3], vec![2, 4, 6], vec![0, 0, 0]];
        // 2 * (1,2,3) = (2,4,6) in characteristic 2 since 2*3 = 6.
        assert_eq!(f.rank(&mut rows), 1);
        let mut rows = vec![vec![1, 0, 5], vec![0, 1, 7], vec![1, 1, 2]];
        // The third row is the XOR of the first two.
        assert_eq!(f.rank(&mut rows), 2);
        let mut rows = vec![vec![1, 0, 5], vec![0, 1, 7], vec![1, 1, 3]];
        assert_eq!(f.rank(&mut rows), 3);
    }

    proptest! {
        #[test]
        fn large_fields_distribute(a in any::<u16>(), b in any::<u16>(), c in any::<u16>()) {
            for q in [256u32, 65536] {
                let f = Gf::new(FieldSpec::new(q).unwrap());
                let m = (q - 1) as u16;
                let (a, b, c) = (a & m, b & m, c & m);
                prop_assert_eq!(f.mul(a, b ^ c), f.mul(a, b) ^ f.mul(a, c));
                prop_assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)));
                if a != 0 {
                    prop_assert_eq!(f.mul(a, f.inv(a)), 1);
                }
            }
        }
    }
}
