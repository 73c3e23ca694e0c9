//! Real-valued base-2 exponential family, used as the unrestricted baseline.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::TreeLayout;
use crate::inference::{max_sum, Evidence};
use crate::intmodel::DataSummary;

#[derive(Debug, Clone, PartialEq)]
pub struct FloatLearnerState {
    pub params_real: Vec<f64>,
    pub summary: DataSummary,
    pub learning_rate: f64,
    pub layout: Arc<TreeLayout>,
}

impl FloatLearnerState {
    pub fn new(layout: Arc<TreeLayout>, learning_rate: f64) -> Self {
        let d = layout.dim();
        FloatLearnerState {
            params_real: vec![0.0; d],
            summary: DataSummary::zeros(d),
            learning_rate,
            layout,
        }
    }
}

/// Edge marginals (each block sums to one) and `log2 Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatMarginals {
    pub edge: Vec<f64>,
    pub log2_z: f64,
}

/// Normalized sum-product with weights `2^theta`.
pub fn float_marginals(layout: &TreeLayout, theta: &[f64]) -> FloatMarginals {
    let n = layout.num_vertices();
    // Shift each edge block by its maximum so weights stay in (0, 1].
    let mut shift = 0.0;
    let mut weight = vec![0.0; theta.len()];
    for e in 0..layout.num_edges() {
        let start = layout.offsets()[e];
        let block = &theta[start..start + layout.block_len(e)];
        let top = block.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        shift += top;
        for (w, &t) in weight[start..].iter_mut().zip(block) {
            *w = (t - top).exp2();
        }
    }

    let mut inner = vec![Vec::new(); n];
    let mut up: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut log2_z = shift;
    for &v in layout.order().iter().rev() {
        let mut belief = vec![1.0; layout.arity(v)];
        for (c, _) in layout.children(v) {
            for (b, m) in belief.iter_mut().zip(&up[c]) {
                *b *= m;
            }
        }
        if let Some((p, e)) = layout.parent(v) {
            let mut msg: Vec<f64> = (0..layout.arity(p))
                .map(|xp| {
                    belief
                        .iter()
                        .enumerate()
                        .map(|(xv, b)| b * weight[layout.oriented_index(e, p, xp, xv)])
                        .sum()
                })
                .collect();
            let total: f64 = msg.iter().sum();
            msg.iter_mut().for_each(|m| *m /= total);
            log2_z += total.log2();
            up[v] = msg;
        }
        inner[v] = belief;
    }
    log2_z += inner[0].iter().sum::<f64>().log2();

    let mut outside = vec![Vec::new(); n];
    outside[0] = vec![1.0; layout.arity(0)];
    let mut edge = vec![0.0; theta.len()];
    for &v in layout.order() {
        let kids: Vec<(usize, usize)> = layout.children(v).collect();
        for &(c, e) in &kids {
            let excl: Vec<f64> = (0..layout.arity(v))
                .map(|x| {
                    kids.iter()
                        .filter(|&&(c2, _)| c2 != c)
                        .fold(outside[v][x], |acc, &(c2, _)| acc * up[c2][x])
                })
                .collect();
            let mut down = vec![0.0; layout.arity(c)];
            let mut block_total = 0.0;
            for (xv, ev) in excl.iter().enumerate() {
                for (xc, d) in down.iter_mut().enumerate() {
                    let j = layout.oriented_index(e, v, xv, xc);
                    let w = ev * weight[j];
                    edge[j] = w * inner[c][xc];
                    block_total += edge[j];
                    *d += w;
                }
            }
            let start = layout.offsets()[e];
            edge[start..start + layout.block_len(e)]
                .iter_mut()
                .for_each(|p| *p /= block_total);
            let total: f64 = down.iter().sum();
            outside[c] = down.into_iter().map(|d| d / total).collect();
        }
    }
    FloatMarginals { edge, log2_z }
}

/// `budget` gradient steps `theta - eta * (E_P[phi] - mu_hat)`.
pub fn float_fit(state: &FloatLearnerState, budget: usize) -> Result<FloatLearnerState> {
    let mut next = state.clone();
    next.params_real = float_fit_params(
        &state.layout,
        &state.params_real,
        &state.summary,
        state.learning_rate,
        budget,
    )?;
    Ok(next)
}

/// Parameter-level form of [`float_fit`].
pub fn float_fit_params(
    layout: &TreeLayout,
    theta: &[f64],
    summary: &DataSummary,
    learning_rate: f64,
    budget: usize,
) -> Result<Vec<f64>> {
    let mut next = theta.to_vec();
    if budget == 0 || learning_rate == 0.0 {
        return Ok(next);
    }
    let freq = summary.frequencies()?;
    for _ in 0..budget {
        let marg = float_marginals(layout, &next);
        for ((t, p), f) in next.iter_mut().zip(&marg.edge).zip(&freq) {
            *t -= learning_rate * (p - f);
        }
        if let Some(j) = next.iter().position(|t| !t.is_finite()) {
            return Err(Error::Divergent(j));
        }
    }
    Ok(next)
}

/// `log2 Z - <theta, mu_hat>` for real parameters.
pub fn float_neg_avg_log_likelihood(layout: &TreeLayout, theta: &[f64], summary: &DataSummary) -> Result<f64> {
    let freq = summary.frequencies()?;
    let marg = float_marginals(layout, theta);
    Ok(marg.log2_z - theta.iter().zip(&freq).map(|(t, f)| t * f).sum::<f64>())
}

pub fn float_predict(layout: &TreeLayout, theta: &[f64], row: &[usize]) -> usize {
    let label = layout.label();
    let ev = Evidence::all_but(row, label);
    max_sum(layout, &ev, |j| theta[j])[label]
}
