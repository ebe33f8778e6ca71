//! Cross-run reports. Everything is recomputed from the stored trajectories;
//! run directories are only read.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_err, phv_curve, read_trajectory, RunManifest, RunState, RunStatus, StoreError, MANIFEST};
use crate::design_space::Param;
use crate::pareto::{sample_efficiency, ObjectiveVector, ParetoArchive};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub method: String,
    pub seed: u64,
    pub samples: usize,
    pub final_phv: f64,
    pub sample_efficiency: f64,
    /// Samples strictly better than the reference in every objective.
    pub superior: usize,
    #[serde(skip)]
    pub curve: Vec<f64>,
    #[serde(skip)]
    pub archive: ParetoArchive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub runs: usize,
    pub mean_phv: f64,
    pub std_phv: f64,
    pub mean_se: f64,
    pub std_se: f64,
    pub mean_superior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Ordered by mean PHV, best first.
    pub methods: Vec<MethodSummary>,
    pub runs: Vec<RunSummary>,
}

impl Report {
    pub fn method(&self, label: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == label)
    }
}

/// Mean and sample standard deviation.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Run directories among `paths`: each path is a run or a directory of runs.
fn collect_runs(paths: &[PathBuf]) -> Result<Vec<PathBuf>, StoreError> {
    let mut out = Vec::new();
    for p in paths {
        if p.join(MANIFEST).is_file() {
            out.push(p.clone());
            continue;
        }
        let Ok(entries) = fs::read_dir(p) else { continue };
        let mut children: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|c| c.join(MANIFEST).is_file())
            .collect();
        children.sort();
        out.extend(children);
    }
    Ok(out)
}

fn summarize(dir: &Path) -> Result<RunSummary, StoreError> {
    let manifest = RunManifest::load(dir)?;
    let samples = read_trajectory(dir)?;
    let (archive, curve) = phv_curve(&samples);
    let objectives: Vec<ObjectiveVector> = samples.iter().map(|s| s.objectives()).collect();
    let superior = objectives.iter().filter(|o| o.strictly_better(&ObjectiveVector::REFERENCE)).count();
    Ok(RunSummary {
        dir: dir.to_path_buf(),
        method: manifest.spec.label(),
        seed: manifest.spec.seed,
        samples: samples.len(),
        final_phv: curve.last().copied().unwrap_or(0.0),
        sample_efficiency: sample_efficiency(&objectives, &ObjectiveVector::REFERENCE),
        superior,
        curve,
        archive,
    })
}

/// Summarizes every completed run under `paths`. Incomplete runs are skipped.
pub fn report(paths: &[PathBuf]) -> Result<Report, StoreError> {
    let mut runs = Vec::new();
    for dir in collect_runs(paths)? {
        match RunStatus::load(&dir) {
            Ok(s) if s.state == RunState::Complete => runs.push(summarize(&dir)?),
            _ => log::warn!("skipping incomplete run {}", dir.display()),
        }
    }
    if runs.is_empty() {
        let shown = paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ");
        return Err(StoreError::MissingRun(shown));
    }
    let mut groups: BTreeMap<&str, Vec<&RunSummary>> = BTreeMap::new();
    for r in &runs {
        groups.entry(r.method.as_str()).or_default().push(r);
    }
    let mut methods: Vec<MethodSummary> = groups
        .into_iter()
        .map(|(method, rs)| {
            let phv: Vec<f64> = rs.iter().map(|r| r.final_phv).collect();
            let se: Vec<f64> = rs.iter().map(|r| r.sample_efficiency).collect();
            let (mean_phv, std_phv) = mean_std(&phv);
            let (mean_se, std_se) = mean_std(&se);
            MethodSummary {
                method: method.to_string(),
                runs: rs.len(),
                mean_phv,
                std_phv,
                mean_se,
                std_se,
                mean_superior: rs.iter().map(|r| r.superior as f64).sum::<f64>() / rs.len() as f64,
            }
        })
        .collect();
    methods.sort_by(|a, b| b.mean_phv.total_cmp(&a.mean_phv).then_with(|| a.method.cmp(&b.method)));
    Ok(Report { methods, runs })
}

/// Writes `summary.json`, `summary.csv`, `runs.csv`, `phv_curves.csv` and
/// `pareto.csv` into `out`.
pub fn write_report(report: &Report, out: &Path) -> Result<(), StoreError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let write = |name: &str, text: String| {
        let path = out.join(name);
        fs::write(&path, text).map_err(io_err(&path))
    };
    write("summary.json", serde_json::to_string_pretty(report).expect("report serializes") + "\n")?;

    let mut summary = String::from("method,runs,mean_phv,std_phv,mean_se,std_se,mean_superior\n");
    for m in &report.methods {
        summary.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            m.method, m.runs, m.mean_phv, m.std_phv, m.mean_se, m.std_se, m.mean_superior
        ));
    }
    write("summary.csv", summary)?;

    let mut runs = String::from("method,seed,samples,final_phv,sample_efficiency,superior,dir\n");
    let mut curves = String::from("method,seed,sample,phv\n");
    let names: Vec<&str> = Param::ALL.iter().map(|p| p.name()).collect();
    let mut pareto = format!("method,seed,step,{},ttft_n,tpot_n,area_n\n", names.join(","));
    for r in &report.runs {
        runs.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.method,
            r.seed,
            r.samples,
            r.final_phv,
            r.sample_efficiency,
            r.superior,
            r.dir.display()
        ));
        for (i, phv) in r.curve.iter().enumerate() {
            curves.push_str(&format!("{},{},{},{}\n", r.method, r.seed, i + 1, phv));
        }
        let mut entries = r.archive.entries.clone();
        entries.sort_by_key(|e| e.step);
        for e in entries {
            let values: Vec<String> = e.design.to_array().iter().map(|v| v.to_string()).collect();
            let o = e.objectives.0;
            pareto.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.method,
                r.seed,
                e.step,
                values.join(","),
                o[0],
                o[1],
                o[2]
            ));
        }
    }
    write("runs.csv", runs)?;
    write("phv_curves.csv", curves)?;
    write("pareto.csv", pareto)
}
