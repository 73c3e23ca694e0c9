//! Round-based simulation of `m` learners and a coordinator.

use std::fmt::Debug;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{ExperimentConfig, ModelKind};
use super::preprocess::partition_horizontal;
use super::RoundRecord;
use crate::error::{Error, Result};
use crate::graph::TreeLayout;
use crate::intmodel::{DataSummary, IntParams};
use crate::learning::{fit_params, float_fit_params, float_predict, predict};
use crate::sync::{CommLedger, CoordinatorState, ModelVector, Payload, Protocol, Schedule, UniformAugmenter};

pub(crate) const PARTITION_SALT: u64 = 0x5eed_0001;
pub(crate) const AUGMENT_SALT: u64 = 0x5eed_0002;

/// Model-specific operations the simulator needs.
pub trait ModelOps: Sync {
    type Vector: ModelVector + Send + Sync + Debug;

    fn layout(&self) -> &Arc<TreeLayout>;
    fn initial(&self) -> Self::Vector;
    fn fit(&self, theta: &Self::Vector, summary: &DataSummary, budget: usize) -> Result<Self::Vector>;
    fn predict_batch(&self, theta: &Self::Vector, rows: &[Vec<usize>]) -> Result<Vec<usize>>;
    /// Wire size of one parameter.
    fn bits_per_param(&self) -> u32;
}

pub struct IntOps {
    pub layout: Arc<TreeLayout>,
    pub k: u32,
}

impl ModelOps for IntOps {
    type Vector = Vec<u32>;

    fn layout(&self) -> &Arc<TreeLayout> {
        &self.layout
    }

    fn initial(&self) -> Vec<u32> {
        vec![0; self.layout.dim()]
    }

    fn fit(&self, theta: &Vec<u32>, summary: &DataSummary, budget: usize) -> Result<Vec<u32>> {
        let params = IntParams::new(self.layout.clone(), self.k, theta.clone())?;
        Ok(fit_params(&params, summary, budget)?.into_theta())
    }

    fn predict_batch(&self, theta: &Vec<u32>, rows: &[Vec<usize>]) -> Result<Vec<usize>> {
        let params = IntParams::new(self.layout.clone(), self.k, theta.clone())?;
        rows.iter().map(|row| predict(&params, row)).collect()
    }

    fn bits_per_param(&self) -> u32 {
        self.k
    }
}

pub struct FloatOps {
    pub layout: Arc<TreeLayout>,
    pub eta: f64,
}

impl ModelOps for FloatOps {
    type Vector = Vec<f64>;

    fn layout(&self) -> &Arc<TreeLayout> {
        &self.layout
    }

    fn initial(&self) -> Vec<f64> {
        vec![0.0; self.layout.dim()]
    }

    fn fit(&self, theta: &Vec<f64>, summary: &DataSummary, budget: usize) -> Result<Vec<f64>> {
        float_fit_params(&self.layout, theta, summary, self.eta, budget)
    }

    fn predict_batch(&self, theta: &Vec<f64>, rows: &[Vec<usize>]) -> Result<Vec<usize>> {
        for row in rows {
            self.layout.check_assignment(row)?;
        }
        Ok(rows.iter().map(|row| float_predict(&self.layout, theta, row)).collect())
    }

    fn bits_per_param(&self) -> u32 {
        32
    }
}

/// Local state of one learner.
#[derive(Debug, Clone)]
pub struct Learner<V> {
    pub theta: V,
    /// Everything this learner has observed.
    pub own: DataSummary,
    /// Observed since the last summary upload.
    pub pending: DataSummary,
    /// Last global summary received from the coordinator.
    pub received: Option<DataSummary>,
}

impl<V> Learner<V> {
    fn new(theta: V, d: usize) -> Self {
        Learner {
            theta,
            own: DataSummary::zeros(d),
            pending: DataSummary::zeros(d),
            received: None,
        }
    }

    /// Statistics this learner optimizes against.
    pub fn working_summary(&self) -> Result<DataSummary> {
        match &self.received {
            Some(total) => {
                let mut s = total.clone();
                s.merge(&self.pending)?;
                Ok(s)
            }
            None => Ok(self.own.clone()),
        }
    }
}

/// State visible to an observer after each round.
pub struct RoundSnapshot<'a, V> {
    pub record: &'a RoundRecord,
    pub learners: &'a [Learner<V>],
    /// Cumulative summary held by the coordinator.
    pub coordinator_summary: &'a DataSummary,
    pub reference: &'a V,
    pub ledger: &'a CommLedger,
    /// Whether every learner left this round with the same model.
    pub full_sync: bool,
    pub batches: &'a [&'a [Vec<usize>]],
}

pub struct Simulation<'s, O: ModelOps> {
    config: ExperimentConfig,
    ops: O,
    streams: &'s [Vec<Vec<usize>>],
}

struct SyncOutcome {
    violations: u64,
    full: bool,
    partial: bool,
}

impl<'s, O: ModelOps> Simulation<'s, O> {
    pub fn new(config: ExperimentConfig, ops: O, streams: &'s [Vec<Vec<usize>>]) -> Result<Self> {
        config.validate()?;
        if streams.len() != config.m {
            return Err(Error::Dimension {
                expected: config.m,
                got: streams.len(),
            });
        }
        Ok(Simulation { config, ops, streams })
    }

    pub fn run(&self) -> Result<Vec<RoundRecord>> {
        self.run_observed(|_| {})
    }

    /// Runs until `rounds` is reached or some learner's stream runs dry.
    pub fn run_observed<F>(&self, mut observer: F) -> Result<Vec<RoundRecord>>
    where
        F: FnMut(&RoundSnapshot<'_, O::Vector>),
    {
        let cfg = &self.config;
        let layout = self.ops.layout().clone();
        let d = layout.dim();
        let bits = self.ops.bits_per_param();
        let label = layout.label();
        let pool = if cfg.threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(cfg.threads)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };

        let init = self.ops.initial();
        let mut learners: Vec<Learner<O::Vector>> = (0..cfg.m).map(|_| Learner::new(init.clone(), d)).collect();
        let delta = match cfg.schedule {
            Schedule::Dynamic { delta, .. } => delta,
            Schedule::Periodic { .. } => 0,
        };
        let mut coord = CoordinatorState::new(init.clone(), cfg.m, delta);
        let mut total = DataSummary::zeros(d);
        let mut global = init;
        let mut ledger = CommLedger::with_costs(cfg.protocol, cfg.costs);
        let mut augmenter = UniformAugmenter(ChaCha8Rng::seed_from_u64(cfg.seed ^ AUGMENT_SALT));
        let fit_locally = cfg.protocol != Protocol::Centralized;

        let mut records = Vec::new();
        let mut acc = RoundRecord::default();
        for t in 1..=cfg.rounds {
            let start = (t as usize - 1) * cfg.bs;
            if self.streams.iter().any(|s| s.len() < start + cfg.bs) {
                break;
            }
            let batches: Vec<&[Vec<usize>]> = self.streams.iter().map(|s| &s[start..start + cfg.bs]).collect();

            let local = |(learner, batch): (&mut Learner<O::Vector>, &&[Vec<usize>])| -> Result<u64> {
                let preds = self.ops.predict_batch(&learner.theta, batch)?;
                let errors = preds
                    .iter()
                    .zip(batch.iter())
                    .filter(|(p, row)| **p != row[label])
                    .count();
                learner.own.accumulate(&layout, batch)?;
                learner.pending.accumulate(&layout, batch)?;
                if fit_locally {
                    learner.theta = self.ops.fit(&learner.theta, &learner.working_summary()?, cfg.o)?;
                }
                Ok(errors as u64)
            };
            let errors: Vec<u64> = match &pool {
                Some(pool) => pool.install(|| {
                    learners
                        .par_iter_mut()
                        .zip(batches.par_iter())
                        .map(local)
                        .collect::<Result<_>>()
                })?,
                None => learners
                    .iter_mut()
                    .zip(batches.iter())
                    .map(local)
                    .collect::<Result<_>>()?,
            };

            let outcome = if cfg.schedule.is_check_round(t) {
                match cfg.schedule {
                    Schedule::Periodic { .. } => {
                        self.periodic(&mut learners, &mut ledger, &mut total, &mut global, &mut coord, bits)?
                    }
                    Schedule::Dynamic { .. } => {
                        self.dynamic(&mut learners, &mut ledger, &mut total, &mut coord, &mut augmenter, bits)?
                    }
                }
            } else {
                SyncOutcome {
                    violations: 0,
                    full: false,
                    partial: false,
                }
            };

            acc.t = t;
            let round_errors: u64 = errors.iter().sum();
            acc.cum_errors += round_errors;
            acc.cum_loss += round_errors;
            acc.cum_samples += (cfg.m * cfg.bs) as u64;
            acc.bytes_up = ledger.bytes_up;
            acc.bytes_down = ledger.bytes_down;
            acc.violations += outcome.violations;
            acc.full_syncs += outcome.full as u64;
            acc.partial_syncs += outcome.partial as u64;
            records.push(acc.clone());

            let full_sync = outcome.full || learners.windows(2).all(|w| w[0].theta == w[1].theta);
            observer(&RoundSnapshot {
                record: &acc,
                learners: &learners,
                coordinator_summary: &total,
                reference: &coord.r,
                ledger: &ledger,
                full_sync,
                batches: &batches,
            });
        }
        Ok(records)
    }

    /// Uploads every learner's pending summary into the coordinator total.
    fn upload_summary(
        learner: &mut Learner<O::Vector>,
        ledger: &mut CommLedger,
        total: &mut DataSummary,
        d: usize,
        bits: u32,
    ) -> Result<()> {
        ledger.account(Payload::Summary, d, bits, 1)?;
        total.merge(&learner.pending)?;
        learner.pending = DataSummary::zeros(d);
        Ok(())
    }

    fn periodic(
        &self,
        learners: &mut [Learner<O::Vector>],
        ledger: &mut CommLedger,
        total: &mut DataSummary,
        global: &mut O::Vector,
        coord: &mut CoordinatorState<O::Vector>,
        bits: u32,
    ) -> Result<SyncOutcome> {
        let d = self.ops.layout().dim();
        let m = learners.len() as u64;
        match self.config.protocol {
            Protocol::None => {
                return Ok(SyncOutcome {
                    violations: 0,
                    full: false,
                    partial: false,
                })
            }
            Protocol::Centralized => {
                for learner in learners.iter_mut() {
                    Self::upload_summary(learner, ledger, total, d, bits)?;
                }
                *global = self.ops.fit(global, total, self.config.o)?;
                ledger.account(Payload::BroadcastTheta, d, bits, m)?;
                for learner in learners.iter_mut() {
                    learner.theta = global.clone();
                }
                coord.r = global.clone();
            }
            Protocol::Private | Protocol::Naive => {
                let naive = self.config.protocol == Protocol::Naive;
                for learner in learners.iter_mut() {
                    ledger.account(Payload::Theta, d, bits, 1)?;
                    if naive {
                        Self::upload_summary(learner, ledger, total, d, bits)?;
                    }
                }
                let models: Vec<&O::Vector> = learners.iter().map(|l| &l.theta).collect();
                let theta_hat = O::Vector::average(&models);
                ledger.account(Payload::BroadcastTheta, d, bits, m)?;
                if naive {
                    ledger.account(Payload::BroadcastSummary, d, bits, m)?;
                }
                for learner in learners.iter_mut() {
                    learner.theta = theta_hat.clone();
                    if naive {
                        learner.received = Some(total.clone());
                    }
                }
                coord.r = theta_hat;
                coord.v = 0;
            }
        }
        Ok(SyncOutcome {
            violations: 0,
            full: true,
            partial: false,
        })
    }

    fn dynamic(
        &self,
        learners: &mut [Learner<O::Vector>],
        ledger: &mut CommLedger,
        total: &mut DataSummary,
        coord: &mut CoordinatorState<O::Vector>,
        augmenter: &mut UniformAugmenter<ChaCha8Rng>,
        bits: u32,
    ) -> Result<SyncOutcome> {
        let quiet = SyncOutcome {
            violations: 0,
            full: false,
            partial: false,
        };
        let protocol = self.config.protocol;
        if protocol == Protocol::None {
            return Ok(quiet);
        }
        let d = self.ops.layout().dim();
        let naive = protocol == Protocol::Naive;
        let violators: Vec<usize> = (0..learners.len())
            .filter(|&i| learners[i].theta.exceeds(&coord.r, coord.delta()))
            .collect();
        if violators.is_empty() {
            return Ok(quiet);
        }
        let resolution = coord.resolve_violation(
            &violators,
            |i| {
                ledger.account(Payload::Theta, d, bits, 1)?;
                if naive {
                    Self::upload_summary(&mut learners[i], ledger, total, d, bits)?;
                }
                Ok(learners[i].theta.clone())
            },
            augmenter,
        )?;
        let recipients = resolution.members.len() as u64;
        ledger.account(Payload::BroadcastTheta, d, bits, recipients)?;
        if naive {
            ledger.account(Payload::BroadcastSummary, d, bits, recipients)?;
        }
        for &i in &resolution.members {
            learners[i].theta = resolution.theta_hat.clone();
            if naive {
                learners[i].received = Some(total.clone());
            }
        }
        Ok(SyncOutcome {
            violations: violators.len() as u64,
            full: resolution.full,
            partial: !resolution.full,
        })
    }
}

/// Partitions `stream` across the learners and runs the configured model.
pub fn run(config: &ExperimentConfig, layout: Arc<TreeLayout>, stream: &[Vec<usize>]) -> Result<Vec<RoundRecord>> {
    config.validate()?;
    let streams = partition_horizontal(stream, config.m, config.seed ^ PARTITION_SALT)?;
    run_streams(config, layout, &streams)
}

/// Runs on pre-partitioned learner streams.
pub fn run_streams(
    config: &ExperimentConfig,
    layout: Arc<TreeLayout>,
    streams: &[Vec<Vec<usize>>],
) -> Result<Vec<RoundRecord>> {
    match config.model_kind {
        ModelKind::Integer => {
            let ops = IntOps { layout, k: config.k };
            Simulation::new(config.clone(), ops, streams)?.run()
        }
        ModelKind::Float => {
            let ops = FloatOps {
                layout,
                eta: config.eta,
            };
            Simulation::new(config.clone(), ops, streams)?.run()
        }
    }
}
