//! Exact ancestral sampling from an integer tree model.

use num_bigint::{BigUint, RandBigInt};
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::inference::subtree_weights;
use crate::intmodel::IntParams;

/// Cumulative integer weights; `sample` draws index `i` with probability `w_i / total`.
struct Categorical {
    cumulative: Vec<BigUint>,
}

impl Categorical {
    fn new(weights: impl IntoIterator<Item = BigUint>) -> Self {
        let mut acc = BigUint::zero();
        let cumulative = weights
            .into_iter()
            .map(|w| {
                acc += w;
                acc.clone()
            })
            .collect();
        Categorical { cumulative }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = self.cumulative.last().expect("nonempty distribution");
        let u = rng.gen_biguint_below(total);
        self.cumulative.partition_point(|c| c <= &u)
    }
}

/// `n` independent samples from the model: the root from its marginal, every
/// other vertex from its exact conditional given its parent.
pub fn synth_tree_data(params: &IntParams, n: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let layout = params.layout();
    let inner = subtree_weights(params);
    let theta = params.theta();

    let root = Categorical::new(inner[0].iter().cloned());
    // conditional[v][x_parent]
    let mut conditional: Vec<Vec<Categorical>> = (0..layout.num_vertices()).map(|_| Vec::new()).collect();
    for &v in layout.order().iter().skip(1) {
        let (p, e) = layout.parent(v).expect("non-root vertex has a parent");
        conditional[v] = (0..layout.arity(p))
            .map(|xp| {
                Categorical::new(
                    (0..layout.arity(v)).map(|xv| &inner[v][xv] << theta[layout.oriented_index(e, p, xp, xv)]),
                )
            })
            .collect();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x = vec![0usize; layout.num_vertices()];
        x[0] = root.sample(&mut rng);
        for &v in layout.order().iter().skip(1) {
            let (p, _) = layout.parent(v).expect("non-root vertex has a parent");
            x[v] = conditional[v][x[p]].sample(&mut rng);
        }
        rows.push(x);
    }
    Ok(rows)
}
