//! Experiment configuration and its flat `key = value` text form.

use std::fmt::Write as _;
use std::str::FromStr;

use super::preprocess::ColumnOptions;
use crate::error::{Error, Result};
use crate::intmodel::MAX_BITS;
use crate::sync::{ByteCosts, Protocol, Schedule, SyncConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Integer,
    Float,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Integer => "integer",
            ModelKind::Float => "float",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "integer" | "int" => Ok(ModelKind::Integer),
            "float" | "real" => Ok(ModelKind::Float),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Number of learners.
    pub m: usize,
    /// Bits per integer parameter.
    pub k: u32,
    /// Samples per learner per round.
    pub bs: usize,
    /// Optimization iterations per round.
    pub o: usize,
    pub protocol: Protocol,
    pub schedule: Schedule,
    pub bins: usize,
    pub holdout_size: usize,
    pub seed: u64,
    pub rounds: u64,
    pub model_kind: ModelKind,
    /// Step size of the float learner.
    pub eta: f64,
    pub columns: ColumnOptions,
    /// Worker threads for the learner phase; 1 runs sequentially.
    pub threads: usize,
    pub costs: ByteCosts,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            m: 16,
            k: 3,
            bs: 10,
            o: 10,
            protocol: Protocol::Private,
            schedule: Schedule::Periodic { b: 1 },
            bins: 10,
            holdout_size: 10_000,
            seed: 0,
            rounds: 1000,
            model_kind: ModelKind::Integer,
            eta: 1.0,
            columns: ColumnOptions {
                label: "label".into(),
                ..Default::default()
            },
            threads: 1,
            costs: ByteCosts::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn sync_config(&self) -> SyncConfig {
        SyncConfig {
            protocol: self.protocol,
            schedule: self.schedule,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.m < 1 {
            return bad("m must be at least 1".into());
        }
        if self.bs < 1 {
            return bad("bs must be at least 1".into());
        }
        if self.bins < 2 {
            return bad("bins must be at least 2".into());
        }
        if self.rounds < 1 {
            return bad("rounds must be at least 1".into());
        }
        if !(1..=MAX_BITS).contains(&self.k) {
            return bad(format!("k must lie in 1..={MAX_BITS}"));
        }
        if self.threads < 1 {
            return bad("threads must be at least 1".into());
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return bad(format!("eta must be a finite nonnegative number, got {}", self.eta));
        }
        self.sync_config().validate()
    }

    /// Parses `key = value` lines; `#` starts a comment. Unset keys keep their defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut schedule = "periodic".to_string();
        let mut b = 1u64;
        let mut delta = 0u64;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { line: i + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            fn num<T: FromStr>(value: &str, key: &str, line: usize) -> Result<T>
            where
                T::Err: std::fmt::Display,
            {
                value.parse().map_err(|e| Error::Parse {
                    line,
                    msg: format!("bad value {value:?} for {key}: {e}"),
                })
            }
            let list = |v: &str| -> Vec<String> {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            };
            match key {
                "m" => cfg.m = num(value, key, i + 1)?,
                "k" => cfg.k = num(value, key, i + 1)?,
                "bs" => cfg.bs = num(value, key, i + 1)?,
                "o" => cfg.o = num(value, key, i + 1)?,
                "b" => b = num(value, key, i + 1)?,
                "delta" => delta = num(value, key, i + 1)?,
                "schedule" => schedule = value.to_string(),
                "protocol" => cfg.protocol = value.parse().map_err(|e: Error| err(e.to_string()))?,
                "bins" => cfg.bins = num(value, key, i + 1)?,
                "holdout_size" => cfg.holdout_size = num(value, key, i + 1)?,
                "seed" => cfg.seed = num(value, key, i + 1)?,
                "rounds" => cfg.rounds = num(value, key, i + 1)?,
                "model" => cfg.model_kind = value.parse().map_err(|e: Error| err(e.to_string()))?,
                "eta" => cfg.eta = num(value, key, i + 1)?,
                "label" => cfg.columns.label = value.to_string(),
                "numerical" => cfg.columns.numerical = list(value),
                "discrete" => cfg.columns.discrete = list(value),
                "threads" => cfg.threads = num(value, key, i + 1)?,
                "header_bytes" => cfg.costs.header = num(value, key, i + 1)?,
                "counter_bytes" => cfg.costs.counter = num(value, key, i + 1)?,
                "sample_count_bytes" => cfg.costs.sample_count = num(value, key, i + 1)?,
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        cfg.schedule = match schedule.as_str() {
            "periodic" => Schedule::Periodic { b },
            "dynamic" => Schedule::Dynamic { b, delta },
            other => return Err(Error::Config(format!("unknown schedule {other:?}"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text form; `from_text(to_text())` reproduces the config.
    /// The thread count is omitted since it never changes results.
    pub fn to_text(&self) -> String {
        let (schedule, b, delta) = match self.schedule {
            Schedule::Periodic { b } => ("periodic", b, 0),
            Schedule::Dynamic { b, delta } => ("dynamic", b, delta),
        };
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("m", self.m.to_string());
        put("k", self.k.to_string());
        put("bs", self.bs.to_string());
        put("o", self.o.to_string());
        put("protocol", self.protocol.name().into());
        put("schedule", schedule.into());
        put("b", b.to_string());
        put("delta", delta.to_string());
        put("bins", self.bins.to_string());
        put("holdout_size", self.holdout_size.to_string());
        put("seed", self.seed.to_string());
        put("rounds", self.rounds.to_string());
        put("model", self.model_kind.name().into());
        put("eta", format!("{:?}", self.eta));
        put("label", self.columns.label.clone());
        put("numerical", self.columns.numerical.join(","));
        put("discrete", self.columns.discrete.join(","));
        put("header_bytes", self.costs.header.to_string());
        put("counter_bytes", self.costs.counter.to_string());
        put("sample_count_bytes", self.costs.sample_count.to_string());
        out
    }
}
