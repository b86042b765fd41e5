//! Report artifacts: atomic file writes, plot-data CSVs and run manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluation::EvaluationReport;

pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One CSV per figure family, keyed by file name.
pub fn figure_csvs(report: &EvaluationReport) -> BTreeMap<&'static str, String> {
    let mut classification = String::from("attack,classifier,metric,value\n");
    let mut population = String::from("attack,ratio,classifier,affected_population,piggyback_dominance\n");
    let mut rank = String::from("attack,ratio,classifier,avg_bogus_rank\n");
    for run in &report.runs {
        if let Some(c) = &run.classification {
            let m = &c.mean;
            for (name, v) in [
                ("f_overall", m.overall_f),
                ("f_legit", m.legit.f),
                ("f_bogus", m.bogus.f),
                ("precision_legit", m.legit.precision),
                ("recall_legit", m.legit.recall),
                ("precision_bogus", m.bogus.precision),
                ("recall_bogus", m.bogus.recall),
            ] {
                let _ = writeln!(classification, "{},{},{name},{v}", run.attack, run.classifier);
            }
        }
        for r in &run.ratios {
            let _ = writeln!(
                population,
                "{},{},{},{},{}",
                run.attack,
                r.ratio,
                run.classifier,
                r.impact.affected_population,
                opt(r.impact.piggyback_dominance)
            );
            let _ = writeln!(rank, "{},{},{},{}", run.attack, r.ratio, run.classifier, opt(r.impact.avg_bogus_rank));
        }
    }
    let mut deltas = String::from("attack,ratio,classifier,population_reduction,rank_increase\n");
    for entry in &report.baseline_deltas {
        for d in &entry.deltas {
            let _ = writeln!(
                deltas,
                "{},{},{},{},{}",
                entry.attack,
                d.ratio,
                entry.classifier,
                d.population_reduction,
                opt(d.rank_increase)
            );
        }
    }
    BTreeMap::from([
        ("classification_f.csv", classification),
        ("affected_population.csv", population),
        ("bogus_rank.csv", rank),
        ("baseline_deltas.csv", deltas),
    ])
}

/// Writes the CSVs into `dir` and returns their hashes.
pub fn write_figure_csvs(report: &EvaluationReport, dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut hashes = BTreeMap::new();
    for (name, body) in figure_csvs(report) {
        write_atomic(&dir.join(name), body.as_bytes())?;
        hashes.insert(name.to_owned(), sha256_hex(body.as_bytes()));
    }
    Ok(hashes)
}

/// Everything needed to rerun a command: no timestamps, so reruns are
/// byte-identical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// The resolved configuration as TOML.
    pub config: String,
    pub seeds: BTreeMap<String, u64>,
    /// sha256 of inputs, keyed by role.
    pub inputs: BTreeMap<String, String>,
    /// sha256 of written files, keyed by file name.
    pub artifacts: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config: String) -> Self {
        Self {
            tool: "tagguard".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
        }
    }

    /// Writes `name` atomically into `dir` and records its hash.
    pub fn write_artifact(&mut self, dir: &Path, name: &str, contents: &[u8]) -> Result<()> {
        write_atomic(&dir.join(name), contents)?;
        self.artifacts.insert(name.into(), sha256_hex(contents));
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join(MANIFEST_FILE), to_json_pretty(self)?.as_bytes())
    }
}
