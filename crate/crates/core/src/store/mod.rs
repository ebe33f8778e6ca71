//! Run directories: manifest, trajectory log, archive and PHV curve.
//!
//! A run directory holds
//! - `manifest.json`: everything needed to reproduce the run, written once;
//! - `trajectory.jsonl`: one record per evaluated design, append-only;
//! - `archive.json`, `phv_curve.csv`: derived from the trajectory;
//! - `status.json`: running / complete / resumable.
//!
//! Trajectory records carry no wall-clock data, so replaying a manifest
//! with the rule backend reproduces the file byte for byte.

mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::llm::{prompts, ChatBackend, ExchangeLog, Gateway};
use crate::lumina::{
    quale_llm, run_loop, Backend, InfluenceMap, LlmStrategist, LuminaError, RuleStrategist, SampleKind,
    Strategist, TrajectorySample,
};
use crate::optimizers::{build, Method, OptimizerError};
use crate::pareto::{ObjectiveVector, ParetoArchive};

pub use report::{report, write_report, MethodSummary, Report, RunSummary};

pub const MANIFEST: &str = "manifest.json";
pub const TRAJECTORY: &str = "trajectory.jsonl";
pub const ARCHIVE: &str = "archive.json";
pub const PHV_CURVE: &str = "phv_curve.csv";
pub const STATUS: &str = "status.json";
pub const LLM_LOG: &str = "llm_log.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run directory {0} already exists")]
    Collision(PathBuf),
    #[error("no completed run found under {0}")]
    MissingRun(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed record: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error(transparent)]
    Lumina(#[from] LuminaError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error("the llm backend needs a chat backend")]
    NoLlmBackend,
    #[error("stored trajectory diverges from the re-run at line {0}")]
    Diverged(usize),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

/// Seed of a named component, derived from the run seed.
pub fn substream(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// LUMINA or one of the baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExploreMethod {
    Lumina,
    Baseline(Method),
}

impl fmt::Display for ExploreMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExploreMethod::Lumina => f.write_str("lumina"),
            ExploreMethod::Baseline(m) => write!(f, "{m}"),
        }
    }
}

impl FromStr for ExploreMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("lumina") {
            return Ok(ExploreMethod::Lumina);
        }
        s.parse::<Method>()
            .map(ExploreMethod::Baseline)
            .map_err(|_| format!("unknown method `{s}` (expected lumina, gs, rw, ga, aco or bo)"))
    }
}

/// Everything that determines a run's trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub method: ExploreMethod,
    pub backend: Backend,
    pub seed: u64,
    pub budget: usize,
    pub config: RunConfig,
}

impl RunSpec {
    /// Label used for grouping in reports, e.g. `lumina-rule` or `random_walk`.
    pub fn label(&self) -> String {
        match self.method {
            ExploreMethod::Lumina => format!("lumina-{}", self.backend),
            ExploreMethod::Baseline(m) => m.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub spec: RunSpec,
    /// Chat model behind the llm backend.
    pub model_name: Option<String>,
    pub calibration_hash: String,
    pub prompt_versions: BTreeMap<String, String>,
    pub optimizer_seed: u64,
    pub lumina_seed: u64,
    pub created: String,
    pub tool_version: String,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self, StoreError> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| StoreError::Malformed { path, message: e.to_string() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Running,
    Complete,
    /// Stopped early; `resume` continues from the stored prefix.
    Resumable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub state: RunState,
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub updated: String,
}

impl RunStatus {
    pub fn load(dir: &Path) -> Result<Self, StoreError> {
        let path = dir.join(STATUS);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| StoreError::Malformed { path, message: e.to_string() })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn write_status(dir: &Path, state: RunState, samples: usize, error: Option<String>) -> Result<(), StoreError> {
    let status = RunStatus { state, samples, error, updated: Utc::now().to_rfc3339() };
    write_json(&dir.join(STATUS), &status)
}

/// One trajectory line.
pub fn record_line(sample: &TrajectorySample) -> String {
    serde_json::to_string(sample).expect("trajectory sample serializes")
}

pub fn read_trajectory(dir: &Path) -> Result<Vec<TrajectorySample>, StoreError> {
    let path = dir.join(TRAJECTORY);
    let file = File::open(&path).map_err(io_err(&path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(&path))?;
        if line.trim().is_empty() {
            continue;
        }
        let s = serde_json::from_str(&line)
            .map_err(|e| StoreError::Malformed { path: path.clone(), message: format!("line {}: {e}", i + 1) })?;
        out.push(s);
    }
    Ok(out)
}

/// Archive and PHV after every sample, in trajectory order.
pub fn phv_curve(samples: &[TrajectorySample]) -> (ParetoArchive, Vec<f64>) {
    let mut archive = ParetoArchive::new(ObjectiveVector::REFERENCE);
    let mut curve = Vec::with_capacity(samples.len());
    let mut phv = 0.0;
    for (i, s) in samples.iter().enumerate() {
        if archive.insert(s.design, s.objectives(), i) {
            phv = archive.hypervolume();
        }
        curve.push(phv);
    }
    (archive, curve)
}

/// Runs the method and hands each sample to `sink` in order.
fn execute(
    spec: &RunSpec,
    chat: Option<Box<dyn ChatBackend>>,
    log_path: Option<&Path>,
    sink: &mut dyn FnMut(&TrajectorySample) -> Result<(), StoreError>,
) -> Result<(), StoreError> {
    let space = spec.config.space()?;
    let ev = spec.config.evaluator()?;
    match spec.method {
        ExploreMethod::Baseline(method) => {
            let seed = substream(spec.seed, "optimizer");
            let mut opt = build(method, &space, &spec.config.optimizer, seed, spec.budget);
            let mut step = 0;
            while step < spec.budget {
                let batch = match opt.propose(1) {
                    Ok(b) => b,
                    Err(OptimizerError::BudgetExhausted(_)) => break,
                    Err(e) => return Err(e.into()),
                };
                for d in batch {
                    let (metrics, report) = ev.evaluate(&d);
                    let mut s = TrajectorySample::plain(SampleKind::Proposal, d, metrics, &report);
                    s.step = step;
                    opt.observe(d, s.objectives());
                    sink(&s)?;
                    step += 1;
                }
            }
        }
        ExploreMethod::Lumina => {
            let seed = substream(spec.seed, "lumina");
            let cfg = &spec.config.lumina;
            let run = match spec.backend {
                Backend::Rule => run_loop(
                    &space,
                    &ev,
                    cfg,
                    spec.budget,
                    seed,
                    &mut RuleStrategist,
                    InfluenceMap::structural(),
                )?,
                Backend::Llm => {
                    let chat = chat.ok_or(StoreError::NoLlmBackend)?;
                    let mut gateway = Gateway::new(chat, spec.config.llm.retry());
                    if let Some(path) = log_path {
                        gateway = gateway.with_log(ExchangeLog::open(path).map_err(io_err(path))?);
                    }
                    let map = quale_llm(&mut gateway).unwrap_or_else(|e| {
                        log::warn!("qualitative map from the model rejected ({e}); using the structural map");
                        InfluenceMap::structural()
                    });
                    let mut strategist = LlmStrategist::new(gateway);
                    run_loop(&space, &ev, cfg, spec.budget, seed, &mut strategist as &mut dyn Strategist, map)?
                }
            };
            for s in &run.trajectory {
                sink(s)?;
            }
        }
    }
    Ok(())
}

fn finish(dir: &Path) -> Result<usize, StoreError> {
    let samples = read_trajectory(dir)?;
    let (archive, curve) = phv_curve(&samples);
    write_json(&dir.join(ARCHIVE), &archive)?;
    let mut csv = String::from("step,phv,superior\n");
    let mut superior = 0;
    for (s, phv) in samples.iter().zip(&curve) {
        superior += s.objectives().strictly_better(&ObjectiveVector::REFERENCE) as usize;
        csv.push_str(&format!("{},{},{}\n", s.step, phv, superior));
    }
    let path = dir.join(PHV_CURVE);
    fs::write(&path, csv).map_err(io_err(&path))?;
    Ok(samples.len())
}

/// Appends records to the trajectory file, one flushed line each.
struct TrajectoryWriter {
    file: File,
    path: PathBuf,
    written: usize,
}

impl TrajectoryWriter {
    fn open(dir: &Path) -> Result<Self, StoreError> {
        let path = dir.join(TRAJECTORY);
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
        Ok(TrajectoryWriter { file, path, written: 0 })
    }

    fn append(&mut self, s: &TrajectorySample) -> Result<(), StoreError> {
        writeln!(self.file, "{}", record_line(s)).map_err(io_err(&self.path))?;
        self.file.flush().map_err(io_err(&self.path))?;
        self.written += 1;
        Ok(())
    }
}

/// Creates `<root>/<method>_<seed>_<timestamp>` and runs the spec into it.
///
/// `chat` is required for the llm backend and ignored otherwise. A run that
/// fails part way keeps its prefix and is marked resumable.
pub fn run_explore(
    spec: &RunSpec,
    root: &Path,
    chat: Option<Box<dyn ChatBackend>>,
) -> Result<PathBuf, StoreError> {
    run_explore_at(spec, root, chat, Utc::now())
}

pub fn run_explore_at(
    spec: &RunSpec,
    root: &Path,
    chat: Option<Box<dyn ChatBackend>>,
    now: DateTime<Utc>,
) -> Result<PathBuf, StoreError> {
    spec.config.validate()?;
    if spec.budget == 0 {
        return Err(ConfigError::Invalid("budget must be at least 1".into()).into());
    }
    let uses_chat = spec.method == ExploreMethod::Lumina && spec.backend == Backend::Llm;
    if uses_chat && chat.is_none() {
        return Err(StoreError::NoLlmBackend);
    }
    fs::create_dir_all(root).map_err(io_err(root))?;
    let name = format!("{}_{}_{}", spec.label(), spec.seed, now.format("%Y%m%dT%H%M%S%.3fZ"));
    let dir = root.join(name);
    match fs::create_dir(&dir) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => return Err(StoreError::Collision(dir)),
        Err(e) => return Err(io_err(&dir)(e)),
    }

    let manifest = RunManifest {
        spec: spec.clone(),
        model_name: chat.as_ref().filter(|_| uses_chat).map(|c| c.model_name()),
        calibration_hash: spec.config.calibration_hash(),
        prompt_versions: prompts::versions().into_iter().collect(),
        optimizer_seed: substream(spec.seed, "optimizer"),
        lumina_seed: substream(spec.seed, "lumina"),
        created: now.to_rfc3339(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    write_status(&dir, RunState::Running, 0, None)?;

    let mut writer = TrajectoryWriter::open(&dir)?;
    let log_path = (uses_chat && spec.config.llm.log_exchanges).then(|| dir.join(LLM_LOG));
    let result = execute(spec, chat, log_path.as_deref(), &mut |s| writer.append(s));
    settle(&dir, writer.written, result)?;
    Ok(dir)
}

fn settle(dir: &Path, written: usize, result: Result<(), StoreError>) -> Result<(), StoreError> {
    match result {
        Ok(()) => {
            let n = finish(dir)?;
            write_status(dir, RunState::Complete, n, None)
        }
        Err(e) => {
            write_status(dir, RunState::Resumable, written, Some(e.to_string()))?;
            Err(e)
        }
    }
}

/// Continues a resumable run: re-executes the manifest, checks the stored
/// prefix matches and appends the rest. Completed runs are left untouched.
pub fn resume(dir: &Path, chat: Option<Box<dyn ChatBackend>>) -> Result<RunStatus, StoreError> {
    let status = RunStatus::load(dir)?;
    if status.state == RunState::Complete {
        return Ok(status);
    }
    let manifest = RunManifest::load(dir)?;
    let path = dir.join(TRAJECTORY);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let stored: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut writer = TrajectoryWriter::open(dir)?;
    let mut seen = 0usize;
    let spec = &manifest.spec;
    let log_path = spec.config.llm.log_exchanges.then(|| dir.join(LLM_LOG));
    let result = execute(spec, chat, log_path.as_deref(), &mut |s| {
        let line = record_line(s);
        let at = seen;
        seen += 1;
        match stored.get(at) {
            Some(old) if *old == line => Ok(()),
            Some(_) => Err(StoreError::Diverged(at + 1)),
            None => writer.append(s),
        }
    });
    settle(dir, stored.len() + writer.written, result)?;
    RunStatus::load(dir)
}

/// Result of re-running a stored manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub dir: PathBuf,
    /// The new trajectory file equals the stored one byte for byte.
    pub identical: bool,
}

/// Re-runs `dir`'s manifest into a fresh directory under `root` and compares
/// the trajectory files.
pub fn replay(dir: &Path, root: &Path, chat: Option<Box<dyn ChatBackend>>) -> Result<Replay, StoreError> {
    let manifest = RunManifest::load(dir)?;
    let new_dir = run_explore(&manifest.spec, root, chat)?;
    let read = |d: &Path| {
        let p = d.join(TRAJECTORY);
        fs::read(&p).map_err(io_err(&p))
    };
    let identical = read(dir)? == read(&new_dir)?;
    Ok(Replay { dir: new_dir, identical })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(method: ExploreMethod, seed: u64, budget: usize) -> RunSpec {
        RunSpec { method, backend: Backend::Rule, seed, budget, config: RunConfig::default() }
    }

    #[test]
    fn method_names_parse() {
        assert_eq!("lumina".parse::<ExploreMethod>().unwrap(), ExploreMethod::Lumina);
        assert_eq!("rw".parse::<ExploreMethod>().unwrap(), ExploreMethod::Baseline(Method::RandomWalk));
        assert!("simulated_annealing".parse::<ExploreMethod>().is_err());
    }

    #[test]
    fn substreams_are_distinct_and_stable() {
        assert_eq!(substream(7, "optimizer"), substream(7, "optimizer"));
        assert_ne!(substream(7, "optimizer"), substream(7, "lumina"));
        assert_ne!(substream(7, "optimizer"), substream(8, "optimizer"));
    }

    #[test]
    fn explore_writes_one_line_per_sample() {
        let root = tempfile::tempdir().unwrap();
        let dir = run_explore(&spec(ExploreMethod::Lumina, 7, 20), root.path(), None).unwrap();
        let name = dir.file_name().unwrap().to_string_lossy().to_string();
        assert!(name.starts_with("lumina-rule_7_"), "{name}");
        let text = fs::read_to_string(dir.join(TRAJECTORY)).unwrap();
        assert_eq!(text.lines().count(), 20);
        assert_eq!(RunStatus::load(&dir).unwrap().state, RunState::Complete);
        let curve = fs::read_to_string(dir.join(PHV_CURVE)).unwrap();
        assert_eq!(curve.lines().count(), 21);
        let manifest = RunManifest::load(&dir).unwrap();
        assert_eq!(manifest.spec.budget, 20);
        assert_eq!(manifest.prompt_versions.len(), prompts::ALL.len());
    }

    #[test]
    fn same_timestamp_collides() {
        let root = tempfile::tempdir().unwrap();
        let now = Utc::now();
        let s = spec(ExploreMethod::Baseline(Method::RandomWalk), 1, 5);
        run_explore_at(&s, root.path(), None, now).unwrap();
        let again = run_explore_at(&s, root.path(), None, now);
        assert!(matches!(again, Err(StoreError::Collision(_))));
    }

    #[test]
    fn seeds_give_distinct_trajectories() {
        let root = tempfile::tempdir().unwrap();
        let a = run_explore(&spec(ExploreMethod::Baseline(Method::RandomWalk), 1, 30), root.path(), None).unwrap();
        let b = run_explore(&spec(ExploreMethod::Baseline(Method::RandomWalk), 2, 30), root.path(), None).unwrap();
        assert_ne!(fs::read(a.join(TRAJECTORY)).unwrap(), fs::read(b.join(TRAJECTORY)).unwrap());
    }

    #[test]
    fn resume_completes_a_truncated_run() {
        let root = tempfile::tempdir().unwrap();
        let s = spec(ExploreMethod::Baseline(Method::Genetic), 4, 40);
        let dir = run_explore(&s, root.path(), None).unwrap();
        let full = fs::read_to_string(dir.join(TRAJECTORY)).unwrap();
        let prefix: String = full.lines().take(13).map(|l| format!("{l}\n")).collect();
        fs::write(dir.join(TRAJECTORY), prefix).unwrap();
        write_status(&dir, RunState::Resumable, 13, Some("interrupted".into())).unwrap();
        let status = resume(&dir, None).unwrap();
        assert_eq!(status.state, RunState::Complete);
        assert_eq!(status.samples, 40);
        assert_eq!(fs::read_to_string(dir.join(TRAJECTORY)).unwrap(), full);
    }

    #[test]
    fn llm_backend_without_client_is_rejected() {
        let root = tempfile::tempdir().unwrap();
        let mut s = spec(ExploreMethod::Lumina, 1, 5);
        s.backend = Backend::Llm;
        assert!(matches!(run_explore(&s, root.path(), None), Err(StoreError::NoLlmBackend)));
        assert_eq!(fs::read_dir(root.path()).unwrap().count(), 0);
    }
}
