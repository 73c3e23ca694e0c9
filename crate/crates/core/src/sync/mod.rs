//! Averaging operators, synchronization protocols and communication accounting.

mod averaging;
mod coordinator;
mod ledger;

use std::fmt;
use std::str::FromStr;

pub use averaging::{
    floored_mean, floored_mean_of, local_condition, merge_summaries, pair_average_bittrick, periodic_sync,
    rounding_error, squared_distance,
};
pub use coordinator::{Augmenter, CoordinatorState, ModelVector, Resolution, UniformAugmenter};
pub use ledger::{
    account, decode_frame, decode_summary, decode_theta, encode_frame, encode_summary, encode_theta, ByteCosts,
    CommLedger, Payload,
};

use crate::error::{Error, Result};

/// What travels between learners and the coordinator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    /// No communication at all.
    None,
    /// Summaries up, globally fitted model down.
    Centralized,
    /// Models and summaries up, averages of both down.
    Naive,
    /// Models up, averaged model down. Summaries never leave a learner.
    Private,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::None => "none",
            Protocol::Centralized => "centralized",
            Protocol::Naive => "naive",
            Protocol::Private => "private",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "nosync" => Ok(Protocol::None),
            "centralized" | "central" | "global" => Ok(Protocol::Centralized),
            "naive" => Ok(Protocol::Naive),
            "private" => Ok(Protocol::Private),
            other => Err(Error::Config(format!("unknown protocol {other:?}"))),
        }
    }
}

/// When learners check in with the coordinator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Schedule {
    /// Everyone synchronizes every `b` rounds.
    Periodic { b: u64 },
    /// Every `b` rounds, learners whose squared distance to the reference
    /// exceeds `delta` report a violation.
    Dynamic { b: u64, delta: u64 },
}

impl Schedule {
    pub fn period(self) -> u64 {
        match self {
            Schedule::Periodic { b } | Schedule::Dynamic { b, .. } => b,
        }
    }

    pub fn is_check_round(self, t: u64) -> bool {
        t.is_multiple_of(self.period())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncConfig {
    pub protocol: Protocol,
    pub schedule: Schedule,
    pub seed: u64,
}

impl SyncConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schedule.period() == 0 {
            return Err(Error::Config("sync period b must be at least 1".into()));
        }
        if self.protocol == Protocol::Centralized && matches!(self.schedule, Schedule::Dynamic { .. }) {
            return Err(Error::Config(
                "the centralized protocol has no local models to monitor; use a periodic schedule".into(),
            ));
        }
        Ok(())
    }
}
