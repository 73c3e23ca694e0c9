//! Violation resolution for dynamic averaging.

use std::collections::BTreeMap;

use rand::Rng;

use super::averaging::{floored_mean_of, squared_distance};
use crate::error::{Error, Result};

/// A parameter vector the coordinator can average and measure against `r`.
pub trait ModelVector: Clone + PartialEq {
    fn average(members: &[&Self]) -> Self;
    /// `||self - reference||^2 > delta`.
    fn exceeds(&self, reference: &Self, delta: u64) -> bool;
}

impl ModelVector for Vec<u32> {
    fn average(members: &[&Self]) -> Self {
        let slices: Vec<&[u32]> = members.iter().map(|v| v.as_slice()).collect();
        floored_mean_of(&slices).expect("nonempty equal-length members")
    }

    fn exceeds(&self, reference: &Self, delta: u64) -> bool {
        squared_distance(self, reference) > delta
    }
}

impl ModelVector for Vec<f64> {
    fn average(members: &[&Self]) -> Self {
        let count = members.len() as f64;
        (0..members[0].len())
            .map(|j| members.iter().map(|v| v[j]).sum::<f64>() / count)
            .collect()
    }

    fn exceeds(&self, reference: &Self, delta: u64) -> bool {
        let dist: f64 = self.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum();
        dist > delta as f64
    }
}

/// Picks which non-members join the balancing set.
pub trait Augmenter {
    /// Returns `count` distinct entries of `candidates`.
    fn choose(&mut self, candidates: &[usize], count: usize) -> Vec<usize>;
}

/// Uniform sampling without replacement.
pub struct UniformAugmenter<R>(pub R);

impl<R: Rng> Augmenter for UniformAugmenter<R> {
    fn choose(&mut self, candidates: &[usize], count: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.0, candidates.len(), count)
            .into_iter()
            .map(|i| candidates[i])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolution<V> {
    /// Members of the final balancing set, ascending.
    pub members: Vec<usize>,
    /// Learners whose models were requested, in request order.
    pub fetched: Vec<usize>,
    pub theta_hat: V,
    /// `true` when every learner took part; `r` was then replaced.
    pub full: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinatorState<V> {
    pub r: V,
    pub v: usize,
    m: usize,
    delta: u64,
    theta_cache: BTreeMap<usize, V>,
}

impl<V: ModelVector> CoordinatorState<V> {
    pub fn new(r: V, m: usize, delta: u64) -> Self {
        CoordinatorState {
            r,
            v: 0,
            m,
            delta,
            theta_cache: BTreeMap::new(),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn delta(&self) -> u64 {
        self.delta
    }

    /// Resolves one round of violations.
    ///
    /// The balancing set starts as `violators`. When the accumulated
    /// violation count reaches `m`, everyone is pulled in. Otherwise the set
    /// is doubled (capped at `m`) until its floored average lies within the
    /// `delta`-ball around `r`. `fetch` is called once per member.
    pub fn resolve_violation<F, A>(
        &mut self,
        violators: &[usize],
        mut fetch: F,
        augmenter: &mut A,
    ) -> Result<Resolution<V>>
    where
        F: FnMut(usize) -> Result<V>,
        A: Augmenter + ?Sized,
    {
        let mut members: Vec<usize> = violators.to_vec();
        members.sort_unstable();
        members.dedup();
        if members.is_empty() {
            return Err(Error::Empty("violator set"));
        }
        if let Some(&bad) = members.iter().find(|&&i| i >= self.m) {
            return Err(Error::Config(format!("learner {bad} outside 0..{}", self.m)));
        }

        let saved_v = self.v;
        let result = self.resolve_inner(members, &mut fetch, augmenter);
        self.theta_cache.clear();
        if result.is_err() {
            self.v = saved_v;
        }
        result
    }

    fn resolve_inner<F, A>(
        &mut self,
        mut members: Vec<usize>,
        fetch: &mut F,
        augmenter: &mut A,
    ) -> Result<Resolution<V>>
    where
        F: FnMut(usize) -> Result<V>,
        A: Augmenter + ?Sized,
    {
        let mut fetched = Vec::new();
        for &i in &members {
            self.theta_cache.insert(i, fetch(i)?);
            fetched.push(i);
        }
        self.v += members.len();
        if self.v >= self.m {
            self.v = 0;
            let rest: Vec<usize> = (0..self.m).filter(|i| !self.theta_cache.contains_key(i)).collect();
            for i in rest {
                self.theta_cache.insert(i, fetch(i)?);
                fetched.push(i);
            }
            members = (0..self.m).collect();
        }

        let theta_hat = loop {
            let models: Vec<&V> = members.iter().map(|i| &self.theta_cache[i]).collect();
            let mean = V::average(&models);
            if members.len() == self.m || !mean.exceeds(&self.r, self.delta) {
                break mean;
            }
            let outside: Vec<usize> = (0..self.m).filter(|i| !self.theta_cache.contains_key(i)).collect();
            let count = members.len().min(outside.len());
            for i in augmenter.choose(&outside, count) {
                self.theta_cache.insert(i, fetch(i)?);
                fetched.push(i);
                members.push(i);
            }
            members.sort_unstable();
        };

        let full = members.len() == self.m;
        if full {
            self.r = theta_hat.clone();
            self.v = 0;
        }
        Ok(Resolution {
            members,
            fetched,
            theta_hat,
            full,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Hands out candidates in a fixed order.
    struct Scripted(Vec<usize>);

    impl Augmenter for Scripted {
        fn choose(&mut self, candidates: &[usize], count: usize) -> Vec<usize> {
            let picked: Vec<usize> = self.0.drain(..count).collect();
            assert!(picked.iter().all(|p| candidates.contains(p)));
            picked
        }
    }

    fn fetch_from(models: &[Vec<u32>]) -> impl FnMut(usize) -> Result<Vec<u32>> + '_ {
        move |i| Ok(models[i].clone())
    }

    #[test]
    fn all_violators_force_full_sync() {
        let models = vec![vec![3, 5], vec![3, 5]];
        let mut c = CoordinatorState::new(vec![0, 0], 2, 1);
        let res = c
            .resolve_violation(&[0, 1], fetch_from(&models), &mut Scripted(vec![]))
            .unwrap();
        assert!(res.full);
        assert_eq!(res.theta_hat, vec![3, 5]);
        assert_eq!(c.r, vec![3, 5]);
        assert_eq!(c.v, 0);
    }

    #[test]
    fn compliant_average_stays_partial() {
        let models = vec![vec![9], vec![2], vec![2], vec![2]];
        let mut c = CoordinatorState::new(vec![2], 4, 0);
        let res = c
            .resolve_violation(&[1], fetch_from(&models), &mut Scripted(vec![]))
            .unwrap();
        assert!(!res.full);
        assert_eq!(res.members, vec![1]);
        assert_eq!(res.theta_hat, vec![2]);
        assert_eq!(c.r, vec![2]);
        assert_eq!(c.v, 1);
    }

    #[test]
    fn balancing_set_doubles_until_full() {
        let models = vec![vec![4], vec![0], vec![0], vec![0]];
        let mut c = CoordinatorState::new(vec![0], 4, 0);
        let res = c
            .resolve_violation(&[0], fetch_from(&models), &mut Scripted(vec![1, 2, 3]))
            .unwrap();
        assert_eq!(res.fetched, vec![0, 1, 2, 3]);
        assert_eq!(res.members, vec![0, 1, 2, 3]);
        assert!(res.full);
        assert_eq!(res.theta_hat, vec![1]);
        assert_eq!(c.r, vec![1]);
        assert_eq!(c.v, 0);
    }

    #[test]
    fn partial_balance_lands_inside_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for _ in 0..200 {
            let m = rng.gen_range(2..12);
            let d = rng.gen_range(1..6);
            let delta = rng.gen_range(0..20);
            let models: Vec<Vec<u32>> = (0..m).map(|_| (0..d).map(|_| rng.gen_range(0..8)).collect()).collect();
            let r: Vec<u32> = (0..d).map(|_| rng.gen_range(0..8)).collect();
            let mut c = CoordinatorState::new(r.clone(), m, delta);
            let violators: Vec<usize> = (0..m).filter(|_| rng.gen_bool(0.2)).collect();
            if violators.is_empty() {
                continue;
            }
            let mut aug = UniformAugmenter(ChaCha8Rng::seed_from_u64(rng.gen()));
            let res = c.resolve_violation(&violators, fetch_from(&models), &mut aug).unwrap();
            let mut sorted = res.fetched.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, res.members);
            if res.full {
                assert_eq!(c.r, res.theta_hat);
            } else {
                assert!(!res.theta_hat.exceeds(&r, delta));
                assert_eq!(c.r, r);
                assert!(c.v <= m);
            }
        }
    }

    #[test]
    fn fetch_failure_aborts_and_restores_counter() {
        let mut c = CoordinatorState::new(vec![0u32], 4, 0);
        c.v = 2;
        let mut calls = Vec::new();
        let err = c
            .resolve_violation(
                &[0],
                |i| {
                    calls.push(i);
                    if i == 0 {
                        Ok(vec![7])
                    } else {
                        Err(Error::Fetch(i))
                    }
                },
                &mut Scripted(vec![3]),
            )
            .unwrap_err();
        assert_eq!(err, Error::Fetch(3));
        assert_eq!(calls, vec![0, 3]);
        assert_eq!(c.v, 2);
        assert_eq!(c.r, vec![0]);
    }

    #[test]
    fn empty_violator_set_is_rejected() {
        let mut c = CoordinatorState::new(vec![0u32], 2, 0);
        assert!(c
            .resolve_violation(&[], |_| Ok(vec![0]), &mut Scripted(vec![]))
            .is_err());
    }

    #[test]
    fn real_vectors_average_exactly() {
        let a = vec![1.0, 2.0];
        let b = vec![2.0, 5.0];
        assert_eq!(Vec::<f64>::average(&[&a, &b]), vec![1.5, 3.5]);
        assert!(a.exceeds(&b, 9));
        assert!(!a.exceeds(&b, 10));
    }
}
