//! Data preparation and the distributed learning simulation.

mod config;
mod preprocess;
mod runner;
mod synth;

use std::io::{self, Write};
use std::sync::Arc;

pub use config::{ExperimentConfig, ModelKind};
pub use preprocess::{
    bin_index, partition_horizontal, quantile_boundaries, sanitize, split_holdout, split_holdout_indices, ColumnKind,
    ColumnMap, ColumnOptions, DiscretizationMap, RawTable, DISCRETE_CARDINALITY,
};
pub use runner::{run, run_streams, FloatOps, IntOps, Learner, ModelOps, RoundSnapshot, Simulation};
pub use synth::synth_tree_data;

use crate::error::Result;
use crate::graph::{chow_liu, StructureGraph, TreeLayout};

/// Cumulative counters after round `t`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoundRecord {
    pub t: u64,
    pub cum_errors: u64,
    pub cum_samples: u64,
    /// Cumulative 0/1 loss; equals `cum_errors` under the 0/1 loss.
    pub cum_loss: u64,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub violations: u64,
    pub full_syncs: u64,
    pub partial_syncs: u64,
}

impl RoundRecord {
    pub fn error_rate(&self) -> f64 {
        if self.cum_samples == 0 {
            0.0
        } else {
            self.cum_errors as f64 / self.cum_samples as f64
        }
    }

    pub fn total_bytes(&self) -> u64 {
        self.bytes_up + self.bytes_down
    }
}

pub const RESULTS_HEADER: &str = "t,cum_errors,cum_samples,bytes_up,bytes_down,violations,full_syncs,partial_syncs";

/// One CSV row per round plus a `#` summary line.
pub fn write_results_csv<W: Write>(records: &[RoundRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{RESULTS_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.t, r.cum_errors, r.cum_samples, r.bytes_up, r.bytes_down, r.violations, r.full_syncs, r.partial_syncs
        )?;
    }
    let last = records.last().cloned().unwrap_or_default();
    writeln!(
        out,
        "# rounds={} samples={} error_rate={:.6} total_bytes={}",
        last.t,
        last.cum_samples,
        last.error_rate(),
        last.total_bytes()
    )
}

/// A discretized dataset with its learned structure.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub map: DiscretizationMap,
    pub graph: StructureGraph,
    pub layout: Arc<TreeLayout>,
    pub holdout: Vec<Vec<usize>>,
    pub stream: Vec<Vec<usize>>,
}

/// Holdout split, discretization fitted on the holdout, and a Chow-Liu tree.
pub fn prepare(config: &ExperimentConfig, table: &RawTable) -> Result<Prepared> {
    let (holdout_idx, stream_idx) = split_holdout_indices(table.len(), config.holdout_size, config.seed)?;
    let map = DiscretizationMap::build(table, &holdout_idx, config.bins, &config.columns)?;
    let rows = map.apply(table)?;
    let holdout: Vec<Vec<usize>> = holdout_idx.iter().map(|&i| rows[i].clone()).collect();
    let stream: Vec<Vec<usize>> = stream_idx.iter().map(|&i| rows[i].clone()).collect();
    let graph = chow_liu(&holdout, &map.specs())?;
    let layout = Arc::new(TreeLayout::new(graph.clone())?);
    Ok(Prepared {
        map,
        graph,
        layout,
        holdout,
        stream,
    })
}

/// Full pipeline from a raw table to per-round records.
pub fn run_table(config: &ExperimentConfig, table: &RawTable) -> Result<(Prepared, Vec<RoundRecord>)> {
    config.validate()?;
    let prepared = prepare(config, table)?;
    let records = run(config, prepared.layout.clone(), &prepared.stream)?;
    Ok((prepared, records))
}
