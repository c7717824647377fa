//! Scenario execution and artifact emission.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use thiserror::Error;

use landau_core::diagnostics::holder::{holder_1plus, regularity_verdict, HolderOptions, PairMode};
use landau_core::diagnostics::{DiagnosticsRecord, Monitors, CSV_HEADER};
use landau_core::grid::DistributionField;
use landau_core::solver::{run, RunError, RunObserver, StepError, Trajectory};

use crate::scenario::{Scenario, ValidationErrors};

pub const CSV_FILE: &str = "diagnostics.csv";
pub const HOLDER_FILE: &str = "holder_report.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const SNAPSHOT_EXT: &str = "landau";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(#[from] ValidationErrors),
    #[error("{0}")]
    Argument(String),
    #[error("solver error: {0}")]
    Solver(#[from] StepError),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Argument(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Step(s) => CliError::Solver(s),
            RunError::Io(io) => CliError::Io(io),
        }
    }
}

fn json_io(e: serde_json::Error) -> io::Error {
    io::Error::other(e)
}

pub fn snapshot_name(index: usize) -> String {
    format!("snap_{index:05}.{SNAPSHOT_EXT}")
}

/// Streams CSV rows and snapshot files as the run produces them.
struct ArtifactWriter {
    csv: BufWriter<File>,
    snapshot_dir: PathBuf,
    snapshots: usize,
}

impl ArtifactWriter {
    fn create(dir: &Path) -> io::Result<Self> {
        let snapshot_dir = dir.join(SNAPSHOT_DIR);
        fs::create_dir_all(&snapshot_dir)?;
        let mut csv = BufWriter::new(File::create(dir.join(CSV_FILE))?);
        writeln!(csv, "{CSV_HEADER}")?;
        csv.flush()?;
        Ok(Self { csv, snapshot_dir, snapshots: 0 })
    }
}

impl RunObserver<f64> for ArtifactWriter {
    fn on_record(&mut self, record: &DiagnosticsRecord<f64>) -> io::Result<()> {
        writeln!(self.csv, "{}", record.csv_row())?;
        self.csv.flush()
    }

    fn on_snapshot(&mut self, field: &DistributionField<f64>) -> io::Result<()> {
        let path = self.snapshot_dir.join(snapshot_name(self.snapshots));
        let mut w = BufWriter::new(File::create(path)?);
        field.write_snapshot(&mut w).map_err(io::Error::other)?;
        w.flush()?;
        self.snapshots += 1;
        Ok(())
    }
}

/// What a finished (or stopped) run left behind.
#[derive(Debug)]
pub struct RunSummary {
    pub steps_planned: usize,
    pub steps_completed: usize,
    pub snapshots: usize,
    pub error: Option<CliError>,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        self.error.as_ref().map_or(0, CliError::exit_code)
    }
}

fn holder_options(s: &Scenario) -> HolderOptions<f64> {
    let mode = PairMode::Sampled { budget: s.monitors.sample_budget, seed: s.monitors.seed };
    HolderOptions::new(s.monitors.alpha, mode)
}

/// Hölder data on the monitored cylinder and, if enabled, the regularity
/// verdict. Estimator failures are reported in place of the values.
pub fn holder_document(s: &Scenario, traj: &Trajectory<f64>) -> Value {
    let opts = holder_options(s);
    let m = &s.monitors;
    let holder = match holder_1plus(traj, m.cylinder, &opts) {
        Ok(r) => json!({ "report": r, "holder_norm": r.holder_norm(), "holder_1plus_norm": r.holder_1plus_norm() }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let verdict = if m.verdict {
        match regularity_verdict(traj, m.cylinder, m.inner_cylinder, m.q, &opts) {
            Ok(r) => serde_json::to_value(&r).unwrap_or(Value::Null),
            Err(e) => json!({ "error": e.to_string() }),
        }
    } else {
        Value::Null
    };
    json!({ "holder": holder, "regularity": verdict })
}

fn write_json(path: &Path, v: &Value) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, v).map_err(json_io)?;
    writeln!(w)?;
    w.flush()
}

/// Runs the scenario, writing the CSV and snapshots as it goes, then the
/// Hölder report and the manifest. Solver errors still produce every
/// artifact for the completed part of the run.
pub fn run_scenario(s: &Scenario, dir: &Path) -> Result<RunSummary, CliError> {
    fs::create_dir_all(dir)?;
    let mut writer = ArtifactWriter::create(dir)?;
    let f0 = s.initial_data.sample(s.grid);
    let monitors = Monitors::new(s.monitors.q, s.monitors.ball);
    let out = run(&f0, &s.solver, &monitors, &mut writer)?;
    writer.csv.flush()?;

    let summary = RunSummary {
        steps_planned: s.solver.steps(),
        steps_completed: out.records.len(),
        snapshots: writer.snapshots,
        error: out.error.map(CliError::from),
    };
    if let Some(CliError::Io(_)) = summary.error {
        return Ok(summary);
    }

    write_json(&dir.join(HOLDER_FILE), &holder_document(s, &out.trajectory))?;
    let manifest = json!({
        "config": s.to_json(),
        "seed": s.monitors.seed,
        "version": env!("CARGO_PKG_VERSION"),
        "threads": rayon::current_num_threads(),
        "status": summary.error.as_ref().map_or("completed".to_string(), |e| e.to_string()),
        "steps_planned": summary.steps_planned,
        "steps_completed": summary.steps_completed,
        "snapshots": summary.snapshots,
        "initial": out.initial,
    });
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(summary)
}

/// Snapshot files in a directory, in name order.
pub fn load_snapshots(dir: &Path) -> Result<Trajectory<f64>, CliError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == SNAPSHOT_EXT))
        .collect();
    paths.sort();
    let mut fields = Vec::with_capacity(paths.len());
    for p in &paths {
        let r = io::BufReader::new(File::open(p)?);
        let f = DistributionField::<f64>::read_snapshot(r)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", p.display())))?;
        fields.push(f);
    }
    fields.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut traj = Trajectory::new();
    for f in fields {
        if traj.last().is_some_and(|l| l.time >= f.time) {
            return Err(CliError::Argument(format!("duplicate snapshot time {}", f.time)));
        }
        if traj.last().is_some_and(|l| l.grid != f.grid) {
            return Err(CliError::Argument("snapshots live on different grids".into()));
        }
        traj.push(f);
    }
    Ok(traj)
}
