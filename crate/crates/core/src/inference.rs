//! Exact inference on trees.
//!
//! Sum-product runs on unbounded integers: edge weights are `2^theta`, so
//! messages and beliefs are integers and every marginal is a quotient with
//! the evidence-restricted partition value as common denominator. MAP uses
//! max-sum on the integer scores with back-pointers.

use std::collections::BTreeMap;
use std::ops::Add;

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::graph::{for_each_assignment, TreeLayout};
use crate::intmodel::{score, IntParams};
use crate::rational::Rational;

/// Largest state space `brute_force` will enumerate.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Observed states for a subset of vertices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Evidence {
    clamped: BTreeMap<usize, usize>,
}

impl Evidence {
    pub fn none() -> Self {
        Evidence::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Evidence {
            clamped: pairs.into_iter().collect(),
        }
    }

    /// Clamps every vertex except `free` to its value in `row`.
    pub fn all_but(row: &[usize], free: usize) -> Self {
        Self::from_pairs(row.iter().copied().enumerate().filter(|&(v, _)| v != free))
    }

    pub fn clamp(&mut self, vertex: usize, state: usize) {
        self.clamped.insert(vertex, state);
    }

    pub fn get(&self, vertex: usize) -> Option<usize> {
        self.clamped.get(&vertex).copied()
    }

    pub fn len(&self) -> usize {
        self.clamped.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clamped.is_empty()
    }

    #[inline]
    pub fn allows(&self, vertex: usize, state: usize) -> bool {
        self.get(vertex).is_none_or(|s| s == state)
    }

    pub fn validate(&self, layout: &TreeLayout) -> Result<()> {
        for (&v, &s) in &self.clamped {
            if v >= layout.num_vertices() {
                return Err(Error::Assignment(format!("evidence on unknown vertex {v}")));
            }
            if s >= layout.arity(v) {
                return Err(Error::Assignment(format!(
                    "evidence state {s} of vertex {v} exceeds arity {}",
                    layout.arity(v)
                )));
            }
        }
        Ok(())
    }

    pub fn is_consistent(&self, x: &[usize]) -> bool {
        self.clamped.iter().all(|(&v, &s)| x[v] == s)
    }
}

/// Exact marginals sharing the common denominator `z`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Marginals {
    /// Unnormalized vertex beliefs, one vector per vertex.
    pub vertex_num: Vec<Vec<BigUint>>,
    /// Unnormalized edge beliefs in parameter order (length `d`).
    pub edge_num: Vec<BigUint>,
    /// Sum of `2^score(x)` over evidence-consistent assignments.
    pub z: BigUint,
}

impl Marginals {
    pub fn vertex(&self, v: usize) -> Vec<Rational> {
        self.vertex_num[v]
            .iter()
            .map(|a| Rational::new(a.clone(), self.z.clone()))
            .collect()
    }

    pub fn edge(&self, layout: &TreeLayout, e: usize) -> Vec<Rational> {
        let start = layout.offsets()[e];
        self.edge_num[start..start + layout.block_len(e)]
            .iter()
            .map(|a| Rational::new(a.clone(), self.z.clone()))
            .collect()
    }

    /// Marginal of parameter index `j`.
    pub fn param(&self, j: usize) -> Rational {
        Rational::new(self.edge_num[j].clone(), self.z.clone())
    }

    /// Exact equality of every marginal, allowing different denominators.
    pub fn same_distribution(&self, other: &Marginals) -> bool {
        let cross = |a: &BigUint, b: &BigUint| a * &other.z == b * &self.z;
        self.vertex_num.len() == other.vertex_num.len()
            && self.edge_num.len() == other.edge_num.len()
            && self
                .vertex_num
                .iter()
                .zip(&other.vertex_num)
                .all(|(a, b)| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| cross(x, y)))
            && self.edge_num.iter().zip(&other.edge_num).all(|(x, y)| cross(x, y))
    }
}

#[inline]
fn weight(params: &IntParams, j: usize) -> BigUint {
    BigUint::one() << params.theta()[j]
}

/// Leaf-to-root pass. Returns, per vertex, the product of the evidence
/// indicator and all child messages (`inner`), and the message each
/// non-root vertex sends to its parent (`up`, over the parent's states).
fn upward(params: &IntParams, evidence: &Evidence) -> (Vec<Vec<BigUint>>, Vec<Vec<BigUint>>) {
    let layout = params.layout();
    let n = layout.num_vertices();
    let mut inner: Vec<Vec<BigUint>> = vec![Vec::new(); n];
    let mut up: Vec<Vec<BigUint>> = vec![Vec::new(); n];
    for &v in layout.order().iter().rev() {
        let mut belief: Vec<BigUint> = (0..layout.arity(v))
            .map(|x| {
                if evidence.allows(v, x) {
                    BigUint::one()
                } else {
                    BigUint::zero()
                }
            })
            .collect();
        for (c, _) in layout.children(v) {
            for (b, m) in belief.iter_mut().zip(&up[c]) {
                if !b.is_zero() {
                    *b *= m;
                }
            }
        }
        if let Some((p, e)) = layout.parent(v) {
            up[v] = (0..layout.arity(p))
                .map(|xp| {
                    let mut acc = BigUint::zero();
                    for (xv, b) in belief.iter().enumerate() {
                        if !b.is_zero() {
                            acc += b << params.theta()[layout.oriented_index(e, p, xp, xv)];
                        }
                    }
                    acc
                })
                .collect();
        }
        inner[v] = belief;
    }
    (inner, up)
}

/// Per vertex and state, the total weight of the subtree below that vertex
/// with the vertex fixed to the state (no evidence).
pub fn subtree_weights(params: &IntParams) -> Vec<Vec<BigUint>> {
    upward(params, &Evidence::none()).0
}

/// Evidence-restricted partition value from the upward pass alone.
pub fn partition_function(params: &IntParams, evidence: &Evidence) -> BigUint {
    let (inner, _) = upward(params, evidence);
    inner[0].iter().sum()
}

pub fn sum_product(params: &IntParams, evidence: &Evidence) -> Result<Marginals> {
    let layout = params.layout();
    evidence.validate(layout)?;
    let n = layout.num_vertices();
    let (inner, up) = upward(params, evidence);

    // outside[v][x]: evidence-weighted mass of everything not below v, with v fixed to x.
    let mut outside: Vec<Vec<BigUint>> = vec![Vec::new(); n];
    outside[0] = vec![BigUint::one(); layout.arity(0)];
    let mut vertex_num = vec![Vec::new(); n];
    let mut edge_num = vec![BigUint::zero(); layout.dim()];

    for &v in layout.order() {
        vertex_num[v] = outside[v].iter().zip(&inner[v]).map(|(a, b)| a * b).collect();
        let kids: Vec<(usize, usize)> = layout.children(v).collect();
        for &(c, e) in &kids {
            // Everything at v except the subtree of c.
            let excl: Vec<BigUint> = (0..layout.arity(v))
                .map(|x| {
                    if !evidence.allows(v, x) || outside[v][x].is_zero() {
                        return BigUint::zero();
                    }
                    let mut acc = outside[v][x].clone();
                    for &(c2, _) in &kids {
                        if c2 != c {
                            acc *= &up[c2][x];
                        }
                    }
                    acc
                })
                .collect();
            let mut down = vec![BigUint::zero(); layout.arity(c)];
            for (xv, ev) in excl.iter().enumerate() {
                if ev.is_zero() {
                    continue;
                }
                for (xc, d) in down.iter_mut().enumerate() {
                    let j = layout.oriented_index(e, v, xv, xc);
                    let w = weight(params, j);
                    if !inner[c][xc].is_zero() {
                        edge_num[j] = ev * &w * &inner[c][xc];
                    }
                    *d += ev * w;
                }
            }
            outside[c] = down;
        }
    }
    let z = vertex_num[0].iter().sum();
    Ok(Marginals {
        vertex_num,
        edge_num,
        z,
    })
}

/// Marginals by enumerating every evidence-consistent assignment. Test oracle.
pub fn brute_force(params: &IntParams, evidence: &Evidence) -> Result<Marginals> {
    let layout = params.layout();
    evidence.validate(layout)?;
    let size = layout.state_space();
    if size > ENUMERATION_LIMIT {
        return Err(Error::StateSpaceTooLarge(size));
    }
    let mut vertex_num: Vec<Vec<BigUint>> = layout.arities().iter().map(|&a| vec![BigUint::zero(); a]).collect();
    let mut edge_num = vec![BigUint::zero(); layout.dim()];
    let mut z = BigUint::zero();
    for_each_assignment(layout.arities(), |x| {
        if !evidence.is_consistent(x) {
            return;
        }
        let w = BigUint::one() << score(params, x);
        for (v, &s) in x.iter().enumerate() {
            vertex_num[v][s] += &w;
        }
        for (e, &(s, t)) in layout.edges().iter().enumerate() {
            edge_num[layout.index(e, x[s], x[t])] += &w;
        }
        z += w;
    });
    Ok(Marginals {
        vertex_num,
        edge_num,
        z,
    })
}

/// Max-sum over an arbitrary additive score with per-index edge weights.
///
/// Ties go to the lowest state index; choices are made root first.
pub fn max_sum<T, W>(layout: &TreeLayout, evidence: &Evidence, weight: W) -> Vec<usize>
where
    T: Copy + PartialOrd + Add<Output = T> + Default,
    W: Fn(usize) -> T,
{
    let n = layout.num_vertices();
    // msg[v][xp]: best score of v's subtree given parent state xp; back[v][xp]: argmax x_v.
    let mut msg: Vec<Vec<T>> = vec![Vec::new(); n];
    let mut back: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut value: Vec<Vec<Option<T>>> = vec![Vec::new(); n];

    for &v in layout.order().iter().rev() {
        let mut val: Vec<Option<T>> = (0..layout.arity(v))
            .map(|x| evidence.allows(v, x).then(T::default))
            .collect();
        for (c, _) in layout.children(v) {
            for (x, slot) in val.iter_mut().enumerate() {
                if let Some(s) = slot {
                    *s = *s + msg[c][x];
                }
            }
        }
        if let Some((p, e)) = layout.parent(v) {
            let mut best = Vec::with_capacity(layout.arity(p));
            let mut arg = Vec::with_capacity(layout.arity(p));
            for xp in 0..layout.arity(p) {
                let mut top: Option<(T, usize)> = None;
                for (xv, s) in val.iter().enumerate() {
                    if let Some(s) = *s {
                        let cand = s + weight(layout.oriented_index(e, p, xp, xv));
                        if top.is_none_or(|(b, _)| cand > b) {
                            top = Some((cand, xv));
                        }
                    }
                }
                let (b, a) = top.expect("evidence leaves at least one state");
                best.push(b);
                arg.push(a);
            }
            msg[v] = best;
            back[v] = arg;
        }
        value[v] = val;
    }

    let mut x = vec![0usize; n];
    let mut top: Option<(T, usize)> = None;
    for (s, val) in value[0].iter().enumerate() {
        if let Some(val) = *val {
            if top.is_none_or(|(b, _)| val > b) {
                top = Some((val, s));
            }
        }
    }
    x[0] = top.expect("evidence leaves at least one root state").1;
    for &v in layout.order().iter().skip(1) {
        let (p, _) = layout.parent(v).expect("non-root vertex has a parent");
        x[v] = back[v][x[p]];
    }
    x
}

/// Evidence-consistent assignment with maximal score.
pub fn map_assignment(params: &IntParams, evidence: &Evidence) -> Result<Vec<usize>> {
    let layout = params.layout();
    evidence.validate(layout)?;
    let theta = params.theta();
    Ok(max_sum(layout, evidence, |j| theta[j] as u64))
}
