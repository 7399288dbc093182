//! Deterministic run artifacts: per-cell CSV tables, config echo, the full
//! report JSON, and a content-hash manifest. Timings are written separately
//! and never hashed, so identical configs produce identical manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiment::{hex_digest, CellMetrics, CellOutcome, DiagnosticsReport};

/// Run-relative path plus the SHA-256 of the file's bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

/// Everything a run wrote, keyed by the config hash that names the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    /// Sorted by path.
    pub files: Vec<ManifestEntry>,
}

/// Directory a report's artifacts belong in: out_dir/run-{hash prefix}.
pub fn run_dir(report: &DiagnosticsReport) -> PathBuf {
    report.config.out_dir.join(format!("run-{}", &report.config_hash[..12]))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-instance table: one row per test-set true positive.
pub fn instance_metrics_csv(m: &CellMetrics) -> String {
    let mut out = String::from("id,class,k,fraction,share\n");
    for r in &m.instances {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.instance_id,
            r.class,
            r.k,
            r.fraction,
            fmt_opt(r.share)
        );
    }
    out
}

/// Per-class table with the majority/minority group tag.
pub fn class_metrics_csv(m: &CellMetrics) -> String {
    let mut out =
        String::from("class,group,coverage,fraction_mean,fraction_sd,share_mean,share_sd\n");
    for r in &m.classes {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.class,
            r.group,
            r.coverage,
            r.fraction_mean,
            r.fraction_sd,
            fmt_opt(r.share_mean),
            fmt_opt(r.share_sd)
        );
    }
    out
}

/// Per-class feature usage table; rank 1 is the largest mean magnitude.
pub fn freq_mag_csv(m: &CellMetrics) -> String {
    let mut out = String::from("class,feature_index,frequency,mean_magnitude,rank\n");
    for fm in &m.freq_mag {
        for (i, e) in fm.entries.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                fm.class,
                e.feature_index,
                e.frequency,
                e.mean_magnitude,
                i + 1
            );
        }
    }
    out
}

/// Split-averaged table across the whole grid.
pub fn aggregate_csv(report: &DiagnosticsReport) -> String {
    let mut out = String::from("method,group,metric,mean,sd,n_splits\n");
    for r in &report.aggregates {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.method.as_str(),
            r.group,
            r.metric,
            r.mean,
            r.sd,
            r.n_splits
        );
    }
    out
}

fn timings_csv(report: &DiagnosticsReport) -> String {
    let mut out = String::from("split,method,stage,seconds\n");
    for t in &report.timings {
        let _ = writeln!(out, "{},{},{},{}", t.split, t.method.as_str(), t.stage, t.seconds);
    }
    out
}

fn write_file(root: &Path, rel: &str, bytes: &[u8]) -> Result<()> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex_digest(&hasher.finalize())
}

fn pretty_json<T: Serialize>(value: &T, name: &str) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Json { path: name.into(), message: e.to_string() })?;
    text.push('\n');
    Ok(text)
}

/// Writes the manifest file itself; its entries stay sorted by path and
/// never include the manifest or the timings.
pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    write_file(dir, "manifest.json", pretty_json(manifest, "manifest.json")?.as_bytes())
}

/// Writes every data artifact of the run into `dir` and returns the
/// manifest, which is also written as manifest.json.
pub fn emit_reports(report: &DiagnosticsReport, dir: &Path) -> Result<Manifest> {
    let mut files: Vec<(String, String)> = vec![
        ("config_echo.json".into(), pretty_json(&report.config, "config_echo.json")?),
        ("report.json".into(), pretty_json(report, "report.json")?),
        ("aggregate_metrics.csv".into(), aggregate_csv(report)),
    ];
    for cell in &report.cells {
        if let CellOutcome::Completed { metrics } = &cell.outcome {
            let base = format!("split{}/{}", cell.split, cell.method.as_str());
            files.push((format!("{base}/instance_metrics.csv"), instance_metrics_csv(metrics)));
            files.push((format!("{base}/class_metrics.csv"), class_metrics_csv(metrics)));
            files.push((format!("{base}/freq_mag.csv"), freq_mag_csv(metrics)));
        }
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));

    let mut entries = Vec::with_capacity(files.len());
    for (rel, content) in &files {
        write_file(dir, rel, content.as_bytes())?;
        entries.push(ManifestEntry { path: rel.clone(), sha256: sha256_hex(content.as_bytes()) });
    }
    write_file(dir, "timings.csv", timings_csv(report).as_bytes())?;

    let manifest = Manifest { config_hash: report.config_hash.clone(), files: entries };
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

/// Parses a previously written report.json.
pub fn load_report(dir: &Path) -> Result<DiagnosticsReport> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Json { path, message: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::Method;
    use crate::experiment::{run_experiment, tests::quick_config};

    fn sample_report() -> DiagnosticsReport {
        run_experiment(&quick_config(vec![Method::Base, Method::Smote], 2)).unwrap()
    }

    #[test]
    fn emit_writes_every_expected_file() {
        let report = sample_report();
        let dir = tempfile::tempdir().unwrap();
        let manifest = emit_reports(&report, dir.path()).unwrap();

        let paths: Vec<&str> = manifest.files.iter().map(|e| e.path.as_str()).collect();
        assert!(paths.contains(&"config_echo.json"));
        assert!(paths.contains(&"report.json"));
        assert!(paths.contains(&"aggregate_metrics.csv"));
        assert!(paths.contains(&"split0/base/instance_metrics.csv"));
        assert!(paths.contains(&"split1/smote/class_metrics.csv"));
        assert!(paths.contains(&"split1/smote/freq_mag.csv"));
        assert!(!paths.contains(&"timings.csv"));
        assert!(!paths.contains(&"manifest.json"));
        assert!(dir.path().join("timings.csv").exists());
        assert!(dir.path().join("manifest.json").exists());

        let mut sorted = paths.clone();
        sorted.sort();
        assert_eq!(paths, sorted, "manifest entries must be sorted by path");
    }

    #[test]
    fn manifest_hashes_match_the_files_on_disk() {
        let report = sample_report();
        let dir = tempfile::tempdir().unwrap();
        let manifest = emit_reports(&report, dir.path()).unwrap();
        for entry in &manifest.files {
            let bytes = std::fs::read(dir.path().join(&entry.path)).unwrap();
            assert_eq!(sha256_hex(&bytes), entry.sha256, "hash mismatch for {}", entry.path);
        }
    }

    #[test]
    fn two_emissions_are_byte_identical() {
        let report = sample_report();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ma = emit_reports(&report, a.path()).unwrap();
        let mb = emit_reports(&report, b.path()).unwrap();
        assert_eq!(ma, mb);
        let ra = std::fs::read(a.path().join("report.json")).unwrap();
        let rb = std::fs::read(b.path().join("report.json")).unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn empty_method_grid_produces_only_run_level_files() {
        let report = run_experiment(&quick_config(vec![], 1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = emit_reports(&report, dir.path()).unwrap();
        let paths: Vec<&str> = manifest.files.iter().map(|e| e.path.as_str()).collect();
        assert_eq!(paths, vec!["aggregate_metrics.csv", "config_echo.json", "report.json"]);
    }

    #[test]
    fn csv_headers_match_the_published_schemas() {
        let report = sample_report();
        let CellOutcome::Completed { metrics } = &report.cells[0].outcome else {
            panic!("cell failed");
        };
        assert!(instance_metrics_csv(metrics).starts_with("id,class,k,fraction,share\n"));
        assert!(class_metrics_csv(metrics)
            .starts_with("class,group,coverage,fraction_mean,fraction_sd,share_mean,share_sd\n"));
        assert!(freq_mag_csv(metrics)
            .starts_with("class,feature_index,frequency,mean_magnitude,rank\n"));
        assert!(aggregate_csv(&report).starts_with("method,group,metric,mean,sd,n_splits\n"));

        let table = instance_metrics_csv(metrics);
        assert_eq!(table.lines().count(), metrics.instances.len() + 1);
    }

    #[test]
    fn freq_mag_ranks_count_from_one_per_class() {
        let report = sample_report();
        let CellOutcome::Completed { metrics } = &report.cells[0].outcome else {
            panic!("cell failed");
        };
        let csv = freq_mag_csv(metrics);
        for class_block in &metrics.freq_mag {
            let first = csv
                .lines()
                .skip(1)
                .find(|l| l.starts_with(&format!("{},", class_block.class)))
                .unwrap();
            assert!(first.ends_with(",1"), "first rank of a class must be 1: {first}");
        }
    }

    #[test]
    fn report_round_trips_through_disk() {
        let report = sample_report();
        let dir = tempfile::tempdir().unwrap();
        emit_reports(&report, dir.path()).unwrap();
        let loaded = load_report(dir.path()).unwrap();
        assert_eq!(loaded.config_hash, report.config_hash);
        assert_eq!(loaded.cells, report.cells);
        assert_eq!(loaded.aggregates, report.aggregates);
        assert!(loaded.timings.is_empty(), "timings never round-trip");
    }

    #[test]
    fn run_dir_is_named_by_the_config_hash() {
        let report = sample_report();
        let dir = run_dir(&report);
        let name = dir.file_name().unwrap().to_string_lossy().into_owned();
        assert_eq!(name, format!("run-{}", &report.config_hash[..12]));
        assert!(dir.starts_with(&report.config.out_dir));
    }
}
