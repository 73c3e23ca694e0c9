use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rcavg::energy::{central_energy, parallel_energy, EnergyParams};
use rcavg::graph::StructureGraph;

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.path(name)).unwrap()
    }

    fn rcavg(&self, args: &[&str]) -> Output {
        let args: Vec<String> = args
            .iter()
            .map(|a| match a.strip_prefix('@') {
                Some(name) => self.path(name).to_string_lossy().into_owned(),
                None => a.to_string(),
            })
            .collect();
        Command::new(env!("CARGO_BIN_EXE_rcavg")).args(&args).output().unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.rcavg(args);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }
}

fn code(out: &Output) -> Option<i32> {
    out.status.code()
}

const CHAIN: &[(usize, usize)] = &[(0, 1), (1, 2), (2, 3)];

/// A chain whose edges strongly favor equal neighboring states.
fn chain_files(ws: &Workspace) {
    ws.write(
        "chain.txt",
        &StructureGraph::with_arities(&[3, 3, 3, 2], CHAIN).to_text(),
    );
    let mut theta = Vec::new();
    for &(a, b) in &[(3, 3), (3, 3), (3, 2)] {
        for i in 0..a {
            for j in 0..b {
                theta.push(if i == j { "4" } else { "0" });
            }
        }
    }
    ws.write("theta.txt", &format!("k 3\n{}\n", theta.join(" ")));
}

fn config(ws: &Workspace, extra: &str) -> PathBuf {
    ws.write(
        "run.cfg",
        &format!("m = 4\nbs = 10\no = 5\nholdout_size = 1000\nrounds = 80\nseed = 2\nlabel = x3\n{extra}"),
    )
}

#[test]
fn structure_of_a_toy_table() {
    let ws = Workspace::new();
    let mut csv = String::from("a,b,y\n");
    for i in 0..60 {
        csv.push_str(&format!("{},{},{}\n", i % 3, (i / 2) % 2, i % 2));
    }
    ws.write("toy.csv", &csv);
    ws.write("toy.cfg", "label = y\nholdout_size = 30\n");
    ws.ok(&[
        "structure",
        "--dataset",
        "@toy.csv",
        "--config",
        "@toy.cfg",
        "--out",
        "@s1.txt",
    ]);
    ws.ok(&[
        "structure",
        "--dataset",
        "@toy.csv",
        "--config",
        "@toy.cfg",
        "--out",
        "@s2.txt",
    ]);
    let text = ws.read("s1.txt");
    assert_eq!(text, ws.read("s2.txt"));
    let file = rcavg::cli::parse_structure(&text).unwrap();
    assert_eq!(file.graph.variables.len(), 3);
    assert_eq!(file.graph.edges.len(), 2);
    assert_eq!(file.holdout, Some((30, 0)));
    assert_eq!(file.graph.label_index(), Some(2));
}

#[test]
fn synth_then_structure_recovers_the_chain() {
    let ws = Workspace::new();
    chain_files(&ws);
    ws.ok(&[
        "synth",
        "--structure",
        "@chain.txt",
        "--theta",
        "@theta.txt",
        "--n",
        "20000",
        "--seed",
        "4",
        "--out",
        "@data.csv",
    ]);
    let data = ws.read("data.csv");
    assert_eq!(data.lines().count(), 20001);
    assert_eq!(data.lines().next().unwrap(), "x0,x1,x2,x3");
    let again = ws.ok(&[
        "synth",
        "--structure",
        "@chain.txt",
        "--theta",
        "@theta.txt",
        "--n",
        "20000",
        "--seed",
        "4",
    ]);
    assert_eq!(again, data);

    config(&ws, "");
    ws.ok(&[
        "structure",
        "--dataset",
        "@data.csv",
        "--config",
        "@run.cfg",
        "--out",
        "@structure.txt",
    ]);
    let file = rcavg::cli::parse_structure(&ws.read("structure.txt")).unwrap();
    assert_eq!(file.graph.edges, CHAIN);
}

#[test]
fn run_reports_and_writes_results() {
    let ws = Workspace::new();
    chain_files(&ws);
    ws.ok(&[
        "synth",
        "--structure",
        "@chain.txt",
        "--theta",
        "@theta.txt",
        "--n",
        "5000",
        "--out",
        "@data.csv",
    ]);

    config(&ws, "protocol = none\n");
    let report = ws.ok(&[
        "run",
        "--config",
        "@run.cfg",
        "--dataset",
        "@data.csv",
        "--out",
        "@none.csv",
    ]);
    assert!(report.starts_with("run 2-"), "{report}");
    assert!(report.contains("total_bytes=0"), "{report}");
    let results = ws.read("none.csv");
    assert_eq!(results.lines().count(), 82);
    assert!(results
        .lines()
        .skip(1)
        .take(80)
        .all(|l| l.split(',').nth(3) == Some("0") && l.split(',').nth(4) == Some("0")));

    // The plain generating graph reads the state columns directly.
    config(&ws, "protocol = private\n");
    let report = ws.ok(&[
        "run",
        "--config",
        "@run.cfg",
        "--dataset",
        "@data.csv",
        "--structure",
        "@chain.txt",
        "--out",
        "@p.csv",
        "--seed",
        "9",
    ]);
    assert!(report.starts_with("run 9-"), "{report}");
    assert!(!report.contains("total_bytes=0"));
}

#[test]
fn exit_codes() {
    let ws = Workspace::new();
    chain_files(&ws);
    ws.ok(&[
        "synth",
        "--structure",
        "@chain.txt",
        "--theta",
        "@theta.txt",
        "--n",
        "3000",
        "--out",
        "@data.csv",
    ]);
    config(&ws, "");

    assert_eq!(code(&ws.rcavg(&["frobnicate"])), Some(1));
    assert_eq!(code(&ws.rcavg(&["run", "--config", "@run.cfg"])), Some(1));
    assert_eq!(code(&ws.rcavg(&["--help"])), Some(0));

    ws.write("bad.cfg", "m = 0\n");
    assert_eq!(
        code(&ws.rcavg(&[
            "run",
            "--config",
            "@bad.cfg",
            "--dataset",
            "@data.csv",
            "--out",
            "@o.csv"
        ])),
        Some(1)
    );
    assert_eq!(
        code(&ws.rcavg(&[
            "run",
            "--config",
            "@run.cfg",
            "--dataset",
            "@missing.csv",
            "--out",
            "@o.csv"
        ])),
        Some(2)
    );

    // A structure that disagrees with the data or with its own discretizer.
    ws.write(
        "wide.txt",
        &StructureGraph::with_arities(&[3, 3, 3, 3, 2], &[(0, 1), (1, 2), (2, 3), (3, 4)]).to_text(),
    );
    let out = ws.rcavg(&[
        "run",
        "--config",
        "@run.cfg",
        "--dataset",
        "@data.csv",
        "--structure",
        "@wide.txt",
        "--out",
        "@o.csv",
    ]);
    assert_eq!(code(&out), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("x4"));

    ws.ok(&[
        "structure",
        "--dataset",
        "@data.csv",
        "--config",
        "@run.cfg",
        "--out",
        "@s.txt",
    ]);
    let tampered = ws.read("s.txt").replace("x0 3 feature", "x0 4 feature");
    ws.write("tampered.txt", &tampered);
    let out = ws.rcavg(&[
        "run",
        "--config",
        "@run.cfg",
        "--dataset",
        "@data.csv",
        "--structure",
        "@tampered.txt",
        "--out",
        "@o.csv",
    ]);
    assert_eq!(code(&out), Some(2));

    ws.write("badtheta.txt", "k 3\n1 2 3\n");
    let out = ws.rcavg(&[
        "synth",
        "--structure",
        "@chain.txt",
        "--theta",
        "@badtheta.txt",
        "--n",
        "5",
    ]);
    assert_eq!(code(&out), Some(2));

    ws.write("nolabel.cfg", "label = nope\nholdout_size = 100\n");
    let out = ws.rcavg(&["structure", "--dataset", "@data.csv", "--config", "@nolabel.cfg"]);
    assert_eq!(code(&out), Some(2));
}

#[test]
fn energy_table() {
    let ws = Workspace::new();
    ws.write("reference.energy", "preset = reference\n");
    let csv = ws.ok(&["energy", "--config", "@reference.energy", "--m-range", "16"]);
    let mut rdr = csv::Reader::from_reader(csv.as_bytes());
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["m", "central_wh", "parallel_wh", "ratio"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    let p = EnergyParams::reference();
    assert_eq!(rows[0][1].parse::<f64>().unwrap(), central_energy(&p));
    assert_eq!(rows[0][2].parse::<f64>().unwrap(), parallel_energy(&p));

    ws.write("free.energy", "preset = reference\na = 0\nt = 0\n");
    let printed = ws.ok(&[
        "energy",
        "--config",
        "@free.energy",
        "--m-range",
        "1-40",
        "--out",
        "@free.csv",
    ]);
    assert!(printed.contains("ratio"));
    let text = ws.read("free.csv");
    let ratios: Vec<f64> = csv::Reader::from_reader(text.as_bytes())
        .records()
        .map(|r| r.unwrap()[3].parse().unwrap())
        .collect();
    assert_eq!(ratios.len(), 40);
    assert!(ratios.iter().all(|&r| r == p.c_c / p.c_p));

    ws.write("bad.energy", "sigma = lots\n");
    assert_eq!(code(&ws.rcavg(&["energy", "--config", "@bad.energy"])), Some(2));
    assert_eq!(
        code(&ws.rcavg(&["energy", "--config", "@reference.energy", "--m-range", "0-3"])),
        Some(1)
    );
}

#[test]
fn structure_file_round_trips_through_parse() {
    let ws = Workspace::new();
    chain_files(&ws);
    ws.ok(&[
        "synth",
        "--structure",
        "@chain.txt",
        "--theta",
        "@theta.txt",
        "--n",
        "2500",
        "--out",
        "@data.csv",
    ]);
    config(&ws, "");
    ws.ok(&[
        "structure",
        "--dataset",
        "@data.csv",
        "--config",
        "@run.cfg",
        "--out",
        "@s.txt",
    ]);
    let text = ws.read("s.txt");
    let file = rcavg::cli::parse_structure(&text).unwrap();
    let map = file.map.expect("discretizer present");
    assert_eq!(map.columns.len(), 4);
    assert_eq!(file.holdout, Some((1000, 2)));
    assert!(Path::new(&ws.path("s.txt")).exists());
}
