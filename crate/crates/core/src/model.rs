//! Network description, occupancy states, state indexing and channel sampling.
//!
//! Channel polarity: `x[i] == true` means link `i` delivered its packet this
//! epoch, which happens with probability `1 - eps[i]`.
//!
//! State indices are 1-based in [`state_index`]/[`index_state`]; the `*0`
//! helpers and all file outputs are 0-based. The first intermediate node is
//! the least significant digit.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct NetworkSpec {
    eps: Vec<f64>,
    buffers: Vec<u32>,
}

#[derive(Deserialize)]
struct RawSpec {
    eps: Vec<f64>,
    buffers: Vec<u32>,
}

impl TryFrom<RawSpec> for NetworkSpec {
    type Error = Error;
    fn try_from(raw: RawSpec) -> Result<Self> {
        NetworkSpec::new(raw.eps, raw.buffers)
    }
}

impl NetworkSpec {
    pub fn new(eps: Vec<f64>, buffers: Vec<u32>) -> Result<Self> {
        if eps.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 hops, got {}",
                eps.len()
            )));
        }
        if buffers.len() + 1 != eps.len() {
            return Err(Error::InvalidSpec(format!(
                "{} erasure probabilities need {} buffers, got {}",
                eps.len(),
                eps.len() - 1,
                buffers.len()
            )));
        }
        if let Some((i, e)) = eps
            .iter()
            .enumerate()
            .find(|(_, e)| !(e.is_finite() && **e > 0.0 && **e < 1.0))
        {
            return Err(Error::InvalidSpec(format!(
                "eps[{i}] = {e} must lie strictly inside (0, 1)"
            )));
        }
        if let Some(i) = buffers.iter().position(|&m| m == 0) {
            return Err(Error::InvalidSpec(format!("buffers[{i}] must be >= 1")));
        }
        Ok(Self { eps, buffers })
    }

    /// Number of hops.
    pub fn h(&self) -> usize {
        self.eps.len()
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn buffers(&self) -> &[u32] {
        &self.buffers
    }

    /// `∏(m_i + 1)`, saturating at `u128::MAX`.
    pub fn state_space_size(&self) -> u128 {
        self.buffers
            .iter()
            .fold(1u128, |acc, &m| acc.saturating_mul(m as u128 + 1))
    }

    /// Min-cut capacity `min_i (1 - eps_i)`.
    pub fn min_cut(&self) -> f64 {
        self.eps.iter().map(|e| 1.0 - e).fold(f64::INFINITY, f64::min)
    }

    /// Same erasures, buffers replaced by their prefix sums.
    pub fn prefix_summed(&self) -> NetworkSpec {
        let mut acc = 0u32;
        let buffers = self
            .buffers
            .iter()
            .map(|&m| {
                acc = acc.saturating_add(m);
                acc
            })
            .collect();
        NetworkSpec {
            eps: self.eps.clone(),
            buffers,
        }
    }

    pub fn with_buffers(&self, buffers: Vec<u32>) -> Result<NetworkSpec> {
        NetworkSpec::new(self.eps.clone(), buffers)
    }

    /// True when no two erasure probabilities coincide.
    pub fn has_distinct_eps(&self) -> bool {
        let mut v = self.eps.clone();
        v.sort_by(f64::total_cmp);
        v.windows(2).all(|w| w[0] != w[1])
    }

    /// Draw one channel realization.
    pub fn sample_channels<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization {
        let mut x = vec![false; self.h()];
        self.sample_into(rng, &mut x);
        ChannelRealization(x)
    }

    /// Allocation-free variant of [`NetworkSpec::sample_channels`].
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, x: &mut [bool]) {
        for (xi, e) in x.iter_mut().zip(&self.eps) {
            *xi = rng.gen::<f64>() >= *e;
        }
    }
}

/// Occupancies of the `h - 1` intermediate nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OccupancyState(pub Vec<u32>);

impl OccupancyState {
    pub fn zero(spec: &NetworkSpec) -> Self {
        OccupancyState(vec![0; spec.h() - 1])
    }

    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        if self.0.len() != spec.buffers.len() {
            return Err(Error::InvalidState(format!(
                "state has {} entries, network has {} intermediate nodes",
                self.0.len(),
                spec.buffers.len()
            )));
        }
        for (i, (&s, &m)) in self.0.iter().zip(&spec.buffers).enumerate() {
            if s > m {
                return Err(Error::InvalidState(format!("s[{i}] = {s} exceeds buffer {m}")));
            }
        }
        Ok(())
    }
}

/// Per-link success indicators for one epoch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelRealization(pub Vec<bool>);

/// 1-based canonical index of `s`.
pub fn state_index(s: &OccupancyState, spec: &NetworkSpec) -> Result<usize> {
    s.validate(spec)?;
    Ok(index0(&s.0, spec.buffers()) + 1)
}

/// Inverse of [`state_index`].
pub fn index_state(k: usize, spec: &NetworkSpec) -> Result<OccupancyState> {
    let n = spec.state_space_size();
    if k == 0 || k as u128 > n {
        return Err(Error::InvalidState(format!("index {k} outside 1..={n}")));
    }
    let mut s = vec![0; spec.buffers.len()];
    state_at0(k - 1, spec.buffers(), &mut s);
    Ok(OccupancyState(s))
}

/// 0-based mixed-radix index, first node least significant.
#[inline]
pub fn index0(s: &[u32], buffers: &[u32]) -> usize {
    let mut idx = 0usize;
    let mut w = 1usize;
    for (&si, &m) in s.iter().zip(buffers) {
        idx += si as usize * w;
        w *= m as usize + 1;
    }
    idx
}

/// Decode a 0-based index into `out`.
#[inline]
pub fn state_at0(mut k: usize, buffers: &[u32], out: &mut [u32]) {
    for (o, &m) in out.iter_mut().zip(buffers) {
        let r = m as usize + 1;
        *o = (k % r) as u32;
        k /= r;
    }
}

/// Seeded generator for trial `stream` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
