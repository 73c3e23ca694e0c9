//! Command-line front end: `structure`, `run`, `synth` and `energy`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::energy::{scaling_csv, scaling_curves, EnergyParams};
use crate::error::{Error, Result};
use crate::graph::{chow_liu, StructureGraph, TreeLayout};
use crate::intmodel::IntParams;
use crate::simulator::{
    run, split_holdout_indices, synth_tree_data, write_results_csv, DiscretizationMap, ExperimentConfig, RawTable,
    RoundRecord,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "rcavg",
    version,
    about = "Distributed learning of integer tree-structured models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Discretize a dataset and learn a Chow-Liu tree on its holdout.
    Structure(StructureArgs),
    /// Run a distributed learning experiment and write per-round results.
    Run(RunArgs),
    /// Sample a dataset from an integer model.
    Synth(SynthArgs),
    /// Tabulate central and parallel energy over a range of learner counts.
    Energy(EnergyArgs),
}

#[derive(Debug, Args)]
pub struct StructureArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Structure file from `structure`; learned from the data when omitted.
    #[arg(long)]
    pub structure: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub structure: PathBuf,
    /// Parameter file: a `k <bits>` line followed by the parameter values.
    #[arg(long)]
    pub theta: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    /// Energy parameter file of `key = value` lines.
    #[arg(long)]
    pub config: PathBuf,
    /// Learner counts: `lo-hi`, `lo..hi` (both inclusive) or a comma list.
    #[arg(long, default_value = "1-64")]
    pub m_range: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Maps library errors onto process exit codes.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        Error::PrivacyViolation { .. } | Error::Fetch(_) | Error::Divergent(_) | Error::StateSpaceTooLarge(_) => {
            EXIT_INTERNAL
        }
        _ => EXIT_DATA,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(report) => {
            if !report.is_empty() {
                print!("{report}");
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs one command and returns the text destined for stdout.
pub fn execute(command: &Command) -> Result<String> {
    match command {
        Command::Structure(a) => {
            let mut config = match &a.config {
                Some(p) => ExperimentConfig::from_text(&read(p)?)?,
                None => ExperimentConfig::default(),
            };
            if let Some(seed) = a.seed {
                config.seed = seed;
            }
            let text = cmd_structure(&read(&a.dataset)?, &config)?;
            emit(a.out.as_deref(), text)
        }
        Command::Run(a) => {
            let mut config = ExperimentConfig::from_text(&read(&a.config)?)?;
            if let Some(seed) = a.seed {
                config.seed = seed;
            }
            if let Some(threads) = a.threads {
                config.threads = threads;
                config.validate()?;
            }
            let structure = a.structure.as_deref().map(read).transpose()?;
            let outcome = cmd_run(&config, &read(&a.dataset)?, structure.as_deref())?;
            write(&a.out, &outcome.csv)?;
            let last = outcome.records.last().cloned().unwrap_or_default();
            Ok(format!(
                "run {}: rounds={} samples={} error_rate={:.6} total_bytes={}\n",
                outcome.run_id,
                last.t,
                last.cum_samples,
                last.error_rate(),
                last.total_bytes()
            ))
        }
        Command::Synth(a) => {
            let csv = cmd_synth(&read(&a.structure)?, &read(&a.theta)?, a.n, a.seed)?;
            emit(a.out.as_deref(), csv)
        }
        Command::Energy(a) => {
            let params = EnergyParams::from_text(&read(&a.config)?)?;
            let csv = cmd_energy(&params, &parse_m_range(&a.m_range)?)?;
            match &a.out {
                Some(path) => {
                    write(path, &csv)?;
                    Ok(energy_table(&csv))
                }
                None => Ok(csv),
            }
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: String) -> Result<String> {
    match out {
        Some(path) => write(path, &text).map(|_| String::new()),
        None => Ok(text),
    }
}

/// Structure file: the discretizer's `column` lines, a `holdout <size> <seed>`
/// line and the tree in graph text format.
pub fn cmd_structure(dataset_csv: &str, config: &ExperimentConfig) -> Result<String> {
    let table = RawTable::from_reader(dataset_csv.as_bytes())?;
    if table.column_index(&config.columns.label).is_none() {
        return Err(Error::Data(format!(
            "label column {:?} not found",
            config.columns.label
        )));
    }
    let (holdout_idx, _) = split_holdout_indices(table.len(), config.holdout_size, config.seed)?;
    let map = DiscretizationMap::build(&table, &holdout_idx, config.bins, &config.columns)?;
    let rows = map.apply(&table)?;
    let holdout: Vec<Vec<usize>> = holdout_idx.iter().map(|&i| rows[i].clone()).collect();
    let graph = chow_liu(&holdout, &map.specs())?;
    let mut out = String::new();
    out.push_str(&map.to_text());
    let _ = writeln!(out, "holdout {} {}", config.holdout_size, config.seed);
    out.push_str(&graph.to_text());
    Ok(out)
}

/// Contents of a structure file.
#[derive(Debug, Clone)]
pub struct StructureFile {
    pub graph: StructureGraph,
    /// Absent for plain graph files, whose data columns hold state indices.
    pub map: Option<DiscretizationMap>,
    pub holdout: Option<(usize, u64)>,
}

pub fn parse_structure(text: &str) -> Result<StructureFile> {
    let mut graph_text = String::new();
    let mut holdout = None;
    for (i, line) in text.lines().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.first() {
            Some(&"column") => graph_text.push('\n'),
            Some(&"holdout") => {
                let err = || Error::Parse {
                    line: i + 1,
                    msg: format!("expected `holdout <size> <seed>`, got {line:?}"),
                };
                match tokens.as_slice() {
                    [_, size, seed] => {
                        holdout = Some((size.parse().map_err(|_| err())?, seed.parse().map_err(|_| err())?));
                    }
                    _ => return Err(err()),
                }
                graph_text.push('\n');
            }
            _ => {
                graph_text.push_str(line);
                graph_text.push('\n');
            }
        }
    }
    let graph = StructureGraph::from_text(&graph_text)?;
    let map = DiscretizationMap::from_text(text)?;
    let map = if map.columns.is_empty() {
        None
    } else {
        let specs = map.specs();
        if specs != graph.variables {
            return Err(Error::Data(format!(
                "discretizer describes {} columns that do not match the {} structure variables",
                specs.len(),
                graph.variables.len()
            )));
        }
        Some(map)
    };
    Ok(StructureFile { graph, map, holdout })
}

/// Output of [`cmd_run`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_id: String,
    pub records: Vec<RoundRecord>,
    pub csv: String,
}

/// `<seed>-<first 12 hex digits of sha256(config text)>`.
pub fn run_id(config: &ExperimentConfig) -> String {
    let digest = Sha256::digest(config.to_text().as_bytes());
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    format!("{}-{hex}", config.seed)
}

pub fn cmd_run(config: &ExperimentConfig, dataset_csv: &str, structure: Option<&str>) -> Result<RunOutcome> {
    config.validate()?;
    let table = RawTable::from_reader(dataset_csv.as_bytes())?;
    let text = match structure {
        Some(text) => text.to_string(),
        None => cmd_structure(dataset_csv, config)?,
    };
    let file = parse_structure(&text)?;
    let layout = Arc::new(TreeLayout::new(file.graph.clone())?);
    let rows = match &file.map {
        Some(map) => map.apply(&table)?,
        None => index_rows(&table, &file.graph)?,
    };
    let stream: Vec<Vec<usize>> = match file.holdout {
        Some((size, seed)) => {
            let (_, stream_idx) = split_holdout_indices(rows.len(), size, seed)?;
            stream_idx.into_iter().map(|i| rows[i].clone()).collect()
        }
        None => rows,
    };
    let records = run(config, layout, &stream)?;
    let mut buf = Vec::new();
    write_results_csv(&records, &mut buf).map_err(|e| Error::Data(e.to_string()))?;
    Ok(RunOutcome {
        run_id: run_id(config),
        records,
        csv: String::from_utf8(buf).expect("results CSV is ASCII"),
    })
}

/// Reads columns named after the graph's variables as state indices.
fn index_rows(table: &RawTable, graph: &StructureGraph) -> Result<Vec<Vec<usize>>> {
    let cols: Vec<usize> = graph
        .variables
        .iter()
        .map(|v| {
            table
                .column_index(&v.name)
                .ok_or_else(|| Error::Data(format!("dataset has no column {:?}", v.name)))
        })
        .collect::<Result<_>>()?;
    table
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            cols.iter()
                .zip(&graph.variables)
                .map(|(&c, v)| match row[c].trim().parse::<usize>() {
                    Ok(x) if x < v.arity => Ok(x),
                    _ => Err(Error::Data(format!(
                        "row {}: {:?} is not a state of {} (arity {})",
                        r + 1,
                        row[c],
                        v.name,
                        v.arity
                    ))),
                })
                .collect()
        })
        .collect()
}

/// Parses `k <bits>` followed by whitespace-separated parameter values.
pub fn parse_theta(text: &str) -> Result<(u32, Vec<u32>)> {
    let mut k = None;
    let mut theta = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: i + 1, msg };
        let mut tokens = line.split_whitespace().peekable();
        if tokens.peek() == Some(&"k") {
            tokens.next();
            let bits = tokens.next().ok_or_else(|| err("missing bit width".into()))?;
            k = Some(bits.parse().map_err(|e| err(format!("bad bit width {bits:?}: {e}")))?);
            continue;
        }
        for tok in tokens {
            theta.push(tok.parse().map_err(|e| err(format!("bad parameter {tok:?}: {e}")))?);
        }
    }
    let k = k.ok_or(Error::Parse {
        line: 1,
        msg: "missing `k <bits>` line".into(),
    })?;
    Ok((k, theta))
}

pub fn format_theta(k: u32, theta: &[u32]) -> String {
    let values: Vec<String> = theta.iter().map(u32::to_string).collect();
    format!("k {k}\n{}\n", values.join(" "))
}

/// CSV of `n` samples, one column per variable holding its state index.
pub fn cmd_synth(structure: &str, theta_text: &str, n: usize, seed: u64) -> Result<String> {
    let file = parse_structure(structure)?;
    let layout = Arc::new(TreeLayout::new(file.graph)?);
    let (k, theta) = parse_theta(theta_text)?;
    let params = IntParams::new(layout.clone(), k, theta)?;
    let rows = synth_tree_data(&params, n, seed)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_data = |e: csv::Error| Error::Data(e.to_string());
    w.write_record(layout.graph().variables.iter().map(|v| v.name.as_str()))
        .map_err(to_data)?;
    for row in rows {
        w.write_record(row.iter().map(usize::to_string)).map_err(to_data)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV of integers is ASCII"))
}

pub fn cmd_energy(params: &EnergyParams, m_range: &[u64]) -> Result<String> {
    Ok(scaling_csv(&scaling_curves(params, m_range)?))
}

pub fn parse_m_range(spec: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("bad m range {spec:?}"));
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
    let spec = spec.trim();
    let values: Vec<u64> = if let Some((lo, hi)) = spec.split_once("..").or_else(|| spec.split_once('-')) {
        let (lo, hi) = (num(lo)?, num(hi.trim_start_matches('='))?);
        if lo > hi {
            return Err(bad());
        }
        (lo..=hi).collect()
    } else {
        spec.split(',').map(num).collect::<Result<_>>()?
    };
    if values.is_empty() || values.contains(&0) {
        return Err(bad());
    }
    Ok(values)
}

/// Aligned columns for the terminal.
fn energy_table(csv: &str) -> String {
    let mut out = String::new();
    for line in csv.lines() {
        let cells: Vec<&str> = line.split(',').collect();
        let _ = writeln!(
            out,
            "{:>6} {:>24} {:>24} {:>24}",
            cells[0], cells[1], cells[2], cells[3]
        );
    }
    out
}
