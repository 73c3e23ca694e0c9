//! On-device learning for the integer model and a float reference learner.
//!
//! One integer iteration computes exact marginals, takes the sign of
//! `E_P[phi] - mu_hat` by cross-multiplication, and moves every parameter by
//! at most one unit toward lower loss, clamped to the k-bit range.

mod float;

pub use float::{
    float_fit, float_fit_params, float_marginals, float_neg_avg_log_likelihood, float_predict, FloatLearnerState,
    FloatMarginals,
};

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::graph::TreeLayout;
use crate::inference::{map_assignment, sum_product, Evidence, Marginals};
use crate::intmodel::{DataSummary, IntParams};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LearnerState {
    pub params: IntParams,
    pub summary: DataSummary,
    pub seen_rounds: u64,
}

impl LearnerState {
    pub fn new(params: IntParams) -> Self {
        let d = params.dim();
        LearnerState {
            params,
            summary: DataSummary::zeros(d),
            seen_rounds: 0,
        }
    }
}

pub fn accumulate(summary: &DataSummary, layout: &TreeLayout, batch: &[Vec<usize>]) -> Result<DataSummary> {
    let mut out = summary.clone();
    out.accumulate(layout, batch)?;
    Ok(out)
}

/// Sign of `marginal_j - counts_j / n` for every parameter, in integers only.
pub fn gradient_sign(marginals: &Marginals, summary: &DataSummary) -> Result<Vec<i8>> {
    if summary.n == num_bigint::BigUint::ZERO {
        return Err(Error::EmptySummary);
    }
    if marginals.edge_num.len() != summary.counts.len() {
        return Err(Error::Dimension {
            expected: marginals.edge_num.len(),
            got: summary.counts.len(),
        });
    }
    Ok(marginals
        .edge_num
        .iter()
        .zip(&summary.counts)
        .map(|(num, count)| match (num * &summary.n).cmp(&(count * &marginals.z)) {
            Ordering::Less => -1,
            Ordering::Equal => 0,
            Ordering::Greater => 1,
        })
        .collect())
}

/// Unit descent step `theta_j - sign_j`, clamped to `[0, 2^k - 1]`.
pub fn int_prox_step(params: &IntParams, signs: &[i8]) -> Result<IntParams> {
    if signs.len() != params.dim() {
        return Err(Error::Dimension {
            expected: params.dim(),
            got: signs.len(),
        });
    }
    let max = params.max_value();
    let theta = params
        .theta()
        .iter()
        .zip(signs)
        .map(|(&t, &s)| match s.signum() {
            1 => t.saturating_sub(1),
            -1 => (t + 1).min(max),
            _ => t,
        })
        .collect();
    params.with_theta(theta)
}

/// Runs up to `budget` iterations of inference, sign and step on the
/// learner's own summary. Stops early at a stationary point.
pub fn fit(state: &LearnerState, budget: usize) -> Result<LearnerState> {
    let params = fit_params(&state.params, &state.summary, budget)?;
    Ok(LearnerState {
        params,
        summary: state.summary.clone(),
        seen_rounds: state.seen_rounds,
    })
}

pub fn fit_params(params: &IntParams, summary: &DataSummary, budget: usize) -> Result<IntParams> {
    if budget == 0 {
        return Ok(params.clone());
    }
    if summary.is_empty() {
        return Err(Error::EmptySummary);
    }
    let mut params = params.clone();
    for _ in 0..budget {
        let marginals = sum_product(&params, &Evidence::none())?;
        let signs = gradient_sign(&marginals, summary)?;
        if signs.iter().all(|&s| s == 0) {
            break;
        }
        let next = int_prox_step(&params, &signs)?;
        if next == params {
            // Every nonzero sign is pinned at a bound.
            break;
        }
        params = next;
    }
    Ok(params)
}

/// MAP label given every feature of `row`; the label entry of `row` is ignored.
pub fn predict(params: &IntParams, row: &[usize]) -> Result<usize> {
    let label = params.layout().label();
    predict_with(params, &Evidence::all_but(row, label))
}

pub fn predict_with(params: &IntParams, features: &Evidence) -> Result<usize> {
    let label = params.layout().label();
    if features.get(label).is_some() {
        return Err(Error::Assignment("label vertex must be free for prediction".into()));
    }
    Ok(map_assignment(params, features)?[label])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::for_each_assignment;
    use crate::inference::brute_force;
    use crate::intmodel::tests::{params, random_params};
    use crate::intmodel::{density_with_partition, neg_avg_log_likelihood, partition, score};
    use crate::simulator::synth_tree_data;
    use num_bigint::BigUint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn summary_of(p: &IntParams, rows: &[Vec<usize>]) -> DataSummary {
        let mut s = DataSummary::zeros(p.dim());
        s.accumulate(p.layout(), rows).unwrap();
        s
    }

    #[test]
    fn accumulate_examples() {
        let p = params(&[2, 2], &[(0, 1)], 3, &[0; 4]);
        let empty = DataSummary::zeros(4);
        assert_eq!(accumulate(&empty, p.layout(), &[]).unwrap(), empty);

        let one = accumulate(&empty, p.layout(), &[vec![0, 1]]).unwrap();
        let expect: Vec<BigUint> = [0u32, 1, 0, 0].iter().map(|&c| BigUint::from(c)).collect();
        assert_eq!(one.counts, expect);
        assert_eq!(one.n, BigUint::from(1u32));

        let b1 = vec![vec![0, 1], vec![1, 1]];
        let b2 = vec![vec![1, 0]];
        let seq = accumulate(&accumulate(&empty, p.layout(), &b1).unwrap(), p.layout(), &b2).unwrap();
        let union: Vec<Vec<usize>> = b1.iter().chain(&b2).cloned().collect();
        assert_eq!(seq, accumulate(&empty, p.layout(), &union).unwrap());
    }

    #[test]
    fn gradient_sign_examples() {
        let p = params(&[2, 2], &[(0, 1)], 3, &[0; 4]);
        let m = sum_product(&p, &Evidence::none()).unwrap();
        let balanced = summary_of(&p, &[vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert_eq!(gradient_sign(&m, &balanced).unwrap(), vec![0; 4]);

        let skewed = summary_of(&p, &vec![vec![0, 0]; 4]);
        assert_eq!(gradient_sign(&m, &skewed).unwrap(), vec![-1, 1, 1, 1]);

        assert_eq!(gradient_sign(&m, &DataSummary::zeros(4)), Err(Error::EmptySummary));
    }

    #[test]
    fn gradient_sign_matches_float_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let p = random_params(&mut rng, 4, 3, 3);
            let layout = p.layout().clone();
            let rows: Vec<Vec<usize>> = (0..rng.gen_range(1..40))
                .map(|_| layout.arities().iter().map(|&a| rng.gen_range(0..a)).collect())
                .collect();
            let s = summary_of(&p, &rows);
            let m = sum_product(&p, &Evidence::none()).unwrap();
            let signs = gradient_sign(&m, &s).unwrap();
            let freq = s.frequencies().unwrap();
            for j in 0..p.dim() {
                let diff = m.param(j).to_f64() - freq[j];
                if diff.abs() > 1e-12 {
                    assert_eq!(signs[j], diff.signum() as i8, "index {j}");
                }
            }
        }
    }

    #[test]
    fn prox_step_examples() {
        let p = params(&[2, 2], &[(0, 1)], 3, &[0, 7, 3, 3]);
        assert_eq!(int_prox_step(&p, &[0; 4]).unwrap(), p);
        let q = int_prox_step(&p, &[1, -1, -1, 1]).unwrap();
        assert_eq!(q.theta(), &[0, 7, 4, 2]);
        assert!(int_prox_step(&p, &[0; 3]).is_err());
    }

    #[test]
    fn fit_with_zero_budget_is_identity() {
        let p = params(&[2, 2], &[(0, 1)], 3, &[1, 2, 3, 4]);
        let mut state = LearnerState::new(p);
        state.summary = summary_of(&state.params, &[vec![0, 0]]);
        assert_eq!(fit(&state, 0).unwrap(), state);
    }

    #[test]
    fn fit_stays_put_on_uniform_data() {
        let p = params(&[2, 3], &[(0, 1)], 3, &[0; 6]);
        let mut rows = Vec::new();
        for_each_assignment(&[2, 3], |x| rows.push(x.to_vec()));
        let mut state = LearnerState::new(p.clone());
        state.summary = summary_of(&p, &rows);
        let m = sum_product(&p, &Evidence::none()).unwrap();
        assert!(gradient_sign(&m, &state.summary).unwrap().iter().all(|&s| s == 0));
        assert_eq!(fit(&state, 10).unwrap().params, p);
    }

    #[test]
    fn fit_lowers_training_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for seed in 0..5 {
            let truth = random_params(&mut rng, 5, 3, 3);
            let data = synth_tree_data(&truth, 2000, seed).unwrap();
            let start = IntParams::zeros(truth.layout().clone(), 3).unwrap();
            let mut state = LearnerState::new(start.clone());
            state.summary = summary_of(&start, &data);
            let fitted = fit(&state, 50).unwrap();
            let before = neg_avg_log_likelihood(&start, &state.summary).unwrap();
            let after = neg_avg_log_likelihood(&fitted.params, &state.summary).unwrap();
            assert!(after <= before, "{after} > {before}");
            assert!(fitted.params.theta().iter().all(|&t| t <= 7));
            assert_eq!(fit(&state, 50).unwrap(), fitted);
        }
    }

    #[test]
    fn predict_examples() {
        let p = params(&[2, 3, 2], &[(0, 2), (1, 2)], 3, &[0; 10]);
        assert_eq!(predict(&p, &[1, 2, 0]).unwrap(), 0);
        let p = params(&[2, 2], &[(0, 1)], 3, &[0, 3, 3, 0]);
        assert_eq!(predict(&p, &[0, 0]).unwrap(), 1);
        assert!(predict_with(&p, &Evidence::from_pairs([(1, 0)])).is_err());
    }

    #[test]
    fn predict_matches_conditional_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..50 {
            let p = random_params(&mut rng, 5, 3, 3);
            let layout = p.layout().clone();
            let label = layout.label();
            let row: Vec<usize> = layout.arities().iter().map(|&a| rng.gen_range(0..a)).collect();
            let ev = Evidence::all_but(&row, label);
            let cond = brute_force(&p, &ev).unwrap();
            let z = partition(&p);
            // argmax over y of P(y | features), lowest y on ties
            let mut best = (density_with_partition(&p, &row, z.clone()), 0);
            for y in 0..layout.arity(label) {
                let mut x = row.clone();
                x[label] = y;
                let pr = density_with_partition(&p, &x, z.clone());
                if pr > best.0 || y == 0 {
                    best = (pr, y);
                }
            }
            assert_eq!(predict(&p, &row).unwrap(), best.1);
            let mut x = row.clone();
            x[label] = best.1;
            assert_eq!(cond.vertex_num[label][best.1], BigUint::from(1u32) << score(&p, &x));
        }
    }

    #[test]
    fn fitted_classifier_beats_majority_on_separable_data() {
        let lay = params(&[2, 2], &[(0, 1)], 3, &[0; 4]).layout().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        // label = feature, 70% of samples have feature 1
        let rows: Vec<Vec<usize>> = (0..500)
            .map(|_| {
                let f = usize::from(rng.gen_bool(0.7));
                vec![f, f]
            })
            .collect();
        let start = IntParams::zeros(lay, 3).unwrap();
        let mut state = LearnerState::new(start.clone());
        state.summary = summary_of(&start, &rows);
        let fitted = fit(&state, 20).unwrap();
        let correct = rows
            .iter()
            .filter(|r| predict(&fitted.params, r).unwrap() == r[1])
            .count();
        let majority = rows
            .iter()
            .filter(|r| r[1] == 1)
            .count()
            .max(rows.iter().filter(|r| r[1] == 0).count());
        assert!(correct >= majority);
        assert_eq!(correct, rows.len());
    }
}
