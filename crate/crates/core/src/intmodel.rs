//! Integer (base-2, k-bit) exponential family over a tree.
//!
//! Parameters live on edge cliques only. The weight of an assignment is
//! `2^score(x)`, so every unnormalized quantity is an exact integer.

use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::graph::{for_each_assignment, StructureGraph, TreeLayout};
use crate::inference;
use crate::rational::log2_biguint;
pub use crate::rational::Rational;

/// Largest supported word size.
pub const MAX_BITS: u32 = 31;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntParams {
    theta: Vec<u32>,
    k: u32,
    layout: Arc<TreeLayout>,
}

impl IntParams {
    pub fn new(layout: Arc<TreeLayout>, k: u32, theta: Vec<u32>) -> Result<Self> {
        if !(1..=MAX_BITS).contains(&k) {
            return Err(Error::Config(format!("word size k={k} outside 1..={MAX_BITS}")));
        }
        if theta.len() != layout.dim() {
            return Err(Error::Dimension {
                expected: layout.dim(),
                got: theta.len(),
            });
        }
        let max = max_value(k);
        if let Some(j) = theta.iter().position(|&v| v > max) {
            return Err(Error::Config(format!(
                "theta[{j}]={} exceeds the {k}-bit maximum {max}",
                theta[j]
            )));
        }
        Ok(IntParams { theta, k, layout })
    }

    pub fn zeros(layout: Arc<TreeLayout>, k: u32) -> Result<Self> {
        let d = layout.dim();
        Self::new(layout, k, vec![0; d])
    }

    pub fn theta(&self) -> &[u32] {
        &self.theta
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn max_value(&self) -> u32 {
        max_value(self.k)
    }

    pub fn layout(&self) -> &Arc<TreeLayout> {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// Replaces theta, keeping the layout and word size.
    pub fn with_theta(&self, theta: Vec<u32>) -> Result<Self> {
        Self::new(self.layout.clone(), self.k, theta)
    }

    pub fn into_theta(self) -> Vec<u32> {
        self.theta
    }
}

pub fn max_value(k: u32) -> u32 {
    ((1u64 << k) - 1) as u32
}

/// One active parameter index per edge clique.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SufficientStatistic {
    pub indices: Vec<usize>,
}

impl SufficientStatistic {
    pub fn to_dense(&self, d: usize) -> Vec<u8> {
        let mut dense = vec![0u8; d];
        for &j in &self.indices {
            dense[j] = 1;
        }
        dense
    }
}

/// Integer sufficient-statistic counts and the number of samples behind them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSummary {
    pub counts: Vec<BigUint>,
    pub n: BigUint,
}

impl DataSummary {
    pub fn zeros(d: usize) -> Self {
        DataSummary {
            counts: vec![BigUint::zero(); d],
            n: BigUint::zero(),
        }
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_zero()
    }

    /// Adds `phi(x)` for every sample in `batch` and bumps `n`.
    pub fn accumulate(&mut self, layout: &TreeLayout, batch: &[Vec<usize>]) -> Result<()> {
        if self.counts.len() != layout.dim() {
            return Err(Error::Dimension {
                expected: layout.dim(),
                got: self.counts.len(),
            });
        }
        let stats = batch.iter().map(|x| phi(layout, x)).collect::<Result<Vec<_>>>()?;
        for stat in stats {
            for j in stat.indices {
                self.counts[j] += 1u32;
            }
        }
        self.n += batch.len();
        Ok(())
    }

    /// Element-wise sum with another summary of the same dimension.
    pub fn merge(&mut self, other: &DataSummary) -> Result<()> {
        if self.counts.len() != other.counts.len() {
            return Err(Error::Dimension {
                expected: self.counts.len(),
                got: other.counts.len(),
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.n += &other.n;
        Ok(())
    }

    /// Every edge block must sum to `n`.
    pub fn is_consistent(&self, layout: &TreeLayout) -> bool {
        if self.counts.len() != layout.dim() {
            return false;
        }
        (0..layout.num_edges()).all(|e| {
            let start = layout.offsets()[e];
            let block: BigUint = self.counts[start..start + layout.block_len(e)].iter().sum();
            block == self.n
        })
    }

    /// Empirical frequencies `counts / n` as floats.
    pub fn frequencies(&self) -> Result<Vec<f64>> {
        if self.n.is_zero() {
            return Err(Error::EmptySummary);
        }
        Ok(self
            .counts
            .iter()
            .map(|c| Rational::new(c.clone(), self.n.clone()).to_f64())
            .collect())
    }
}

pub fn model_dimension(structure: &StructureGraph) -> usize {
    structure
        .edges
        .iter()
        .map(|&(s, t)| structure.variables[s].arity * structure.variables[t].arity)
        .sum()
}

pub fn phi(layout: &TreeLayout, x: &[usize]) -> Result<SufficientStatistic> {
    layout.check_assignment(x)?;
    let indices = layout
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(s, t))| layout.index(e, x[s], x[t]))
        .collect();
    Ok(SufficientStatistic { indices })
}

/// `<theta, phi(x)>`. The assignment must be valid for the layout.
pub fn score(params: &IntParams, x: &[usize]) -> u64 {
    let layout = params.layout();
    layout
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(s, t))| params.theta[layout.index(e, x[s], x[t])] as u64)
        .sum()
}

/// `Z = sum_x 2^score(x)` via the upward sum-product pass.
pub fn partition(params: &IntParams) -> BigUint {
    inference::partition_function(params, &inference::Evidence::none())
}

/// `Z` by enumerating every assignment. Test oracle.
pub fn partition_by_enumeration(params: &IntParams) -> Result<BigUint> {
    let layout = params.layout();
    let size = layout.state_space();
    if size > inference::ENUMERATION_LIMIT {
        return Err(Error::StateSpaceTooLarge(size));
    }
    let mut z = BigUint::zero();
    for_each_assignment(layout.arities(), |x| {
        z += BigUint::one() << score(params, x);
    });
    Ok(z)
}

/// Exact probability `2^score(x) / Z`.
pub fn density(params: &IntParams, x: &[usize]) -> Result<Rational> {
    params.layout().check_assignment(x)?;
    Ok(density_with_partition(params, x, partition(params)))
}

/// [`density`] with a precomputed partition value.
pub fn density_with_partition(params: &IntParams, x: &[usize], z: BigUint) -> Rational {
    Rational::new(BigUint::one() << score(params, x), z)
}

/// `log2 Z - <theta, counts> / n`, in bits. Diagnostic only.
pub fn neg_avg_log_likelihood(params: &IntParams, summary: &DataSummary) -> Result<f64> {
    if summary.n.is_zero() {
        return Err(Error::EmptySummary);
    }
    if summary.dim() != params.dim() {
        return Err(Error::Dimension {
            expected: params.dim(),
            got: summary.dim(),
        });
    }
    let inner: BigUint = params.theta.iter().zip(&summary.counts).map(|(&t, c)| c * t).sum();
    let mean = Rational::new(inner, summary.n.clone()).to_f64();
    Ok(log2_biguint(&partition(params)) - mean)
}

/// Little-endian bit packing of a k-bit parameter vector: entry `j` occupies
/// bits `j*k .. (j+1)*k` of the stream, least significant bit first.
pub fn pack_theta(theta: &[u32], k: u32) -> Vec<u8> {
    let total_bits = theta.len() * k as usize;
    let mut out = vec![0u8; total_bits.div_ceil(8)];
    let mut bit = 0usize;
    for &v in theta {
        for b in 0..k {
            if (v >> b) & 1 == 1 {
                out[bit / 8] |= 1 << (bit % 8);
            }
            bit += 1;
        }
    }
    out
}

pub fn unpack_theta(bytes: &[u8], d: usize, k: u32) -> Result<Vec<u32>> {
    let need = (d * k as usize).div_ceil(8);
    if bytes.len() != need {
        return Err(Error::Wire(format!(
            "packed theta needs {need} bytes, got {}",
            bytes.len()
        )));
    }
    let mut theta = Vec::with_capacity(d);
    let mut bit = 0usize;
    for _ in 0..d {
        let mut v = 0u32;
        for b in 0..k {
            if (bytes[bit / 8] >> (bit % 8)) & 1 == 1 {
                v |= 1 << b;
            }
            bit += 1;
        }
        theta.push(v);
    }
    Ok(theta)
}
