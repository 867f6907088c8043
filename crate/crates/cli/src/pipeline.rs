//! Stage orchestration: atoms → eigenvalues → slope fit / small-ball table →
//! report, with every stage's outputs keyed by a digest of its inputs so
//! reruns reuse finished work.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use selfsim::kernel::{operator_order, KernelSpec};
use selfsim::measure::{atoms, validate, MeasureSpec};
use selfsim::smallball::{
    asymptotic_log_small_ball, estimate_small_ball_mc, fit_log_square, log_small_ball_saddlepoint,
    write_estimates_csv, Method,
};
use selfsim::spectrum::{eigenvalues, fit_counting_slope, gram_matrix, theoretical_slope, Spectrum};

use crate::config::{read_text, RunConfig};
use crate::error::{CliError, CliResult};

pub const ATOMS_CSV: &str = "atoms.csv";
pub const EIGS_CSV: &str = "eigs.csv";
pub const EIGS_META: &str = "eigs.meta";
pub const SLOPE_JSON: &str = "slope.json";
pub const SMALLBALL_CSV: &str = "smallball.csv";
pub const REPORT_JSON: &str = "report.json";
pub const MANIFEST_JSON: &str = "manifest.json";

/// How far a command takes the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Goal {
    Atoms,
    Eigs,
    Slope,
    SmallBall,
    /// Every stage plus `report.json`.
    Full,
}

impl Goal {
    fn wants_spectrum(self) -> bool {
        self != Goal::Atoms
    }

    fn wants_slope(self) -> bool {
        matches!(self, Goal::Slope | Goal::Full)
    }

    fn wants_smallball(self) -> bool {
        matches!(self, Goal::SmallBall | Goal::Full)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageTiming {
    pub name: &'static str,
    pub seconds: f64,
    /// Outputs were already present with matching input digest.
    pub reused: bool,
}

/// One row of `smallball.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct SmallBallRow {
    pub eps: String,
    pub log_prob: f64,
    pub method: Method,
    pub stderr: Option<f64>,
    pub n_samples: Option<usize>,
    pub seed: Option<u64>,
}

impl SmallBallRow {
    fn to_json(&self) -> Value {
        json!({
            "eps": self.eps,
            "method": self.method.name(),
            "log_prob": self.log_prob,
            "stderr": self.stderr,
            "n_samples": self.n_samples,
            "seed": self.seed,
        })
    }
}

/// What a run produced. Every number here was read back from the artifacts
/// in the output directory.
#[derive(Debug)]
pub struct Outcome {
    pub atom_count: usize,
    pub spectrum: Option<Spectrum>,
    /// Contents of `slope.json`.
    pub slope: Option<Value>,
    pub smallball: Vec<SmallBallRow>,
    /// Contents of `report.json`.
    pub report: Option<Value>,
    /// Recorded domain failures (failed fit, estimates outside their domain).
    /// A run with failures completes but exits with status 1.
    pub failures: Vec<String>,
    pub timings: Vec<StageTiming>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn input_key(parts: &[&str]) -> String {
    sha256_hex(json!(parts).to_string().as_bytes())
}

/// Writes through a temporary file so an interrupted run never leaves a
/// truncated artifact under the final name.
fn write_artifact(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<String> {
    let tmp = dir.join(format!(".{name}.partial"));
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    let dest = dir.join(name);
    fs::rename(&tmp, &dest).map_err(|e| CliError::io(&dest, e))?;
    Ok(sha256_hex(bytes))
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s.into_bytes()
}

/// `manifest.json`: per stage, the input digest and the SHA-256 of every
/// output file, plus the failures the stage recorded.
struct Manifest {
    path: PathBuf,
    stages: Map<String, Value>,
}

impl Manifest {
    fn load(dir: &Path) -> Self {
        let path = dir.join(MANIFEST_JSON);
        let stages = fs::read_to_string(&path)
            .ok()
            .and_then(|t| serde_json::from_str::<Value>(&t).ok())
            .and_then(|v| v.get("stages").and_then(Value::as_object).cloned())
            .unwrap_or_default();
        Manifest { path, stages }
    }

    /// Recorded failures of `stage` if its outputs are intact and were
    /// produced from `key`.
    fn reusable(&self, stage: &str, key: &str, dir: &Path) -> Option<Vec<String>> {
        let entry = self.stages.get(stage)?;
        if entry.get("inputs")?.as_str()? != key {
            return None;
        }
        for (name, sha) in entry.get("outputs")?.as_object()? {
            let bytes = fs::read(dir.join(name)).ok()?;
            if sha.as_str()? != sha256_hex(&bytes) {
                return None;
            }
        }
        let notes = entry.get("failures")?.as_array()?;
        Some(notes.iter().filter_map(|n| n.as_str().map(String::from)).collect())
    }

    fn record(&mut self, stage: &str, key: &str, outputs: &[(&str, String)], failures: &[String]) -> CliResult<()> {
        let outputs: Map<String, Value> = outputs.iter().map(|(n, s)| (n.to_string(), json!(s))).collect();
        self.stages.insert(stage.into(), json!({ "inputs": key, "outputs": outputs, "failures": failures }));
        let bytes = pretty(&json!({ "stages": self.stages }));
        fs::write(&self.path, bytes).map_err(|e| CliError::io(&self.path, e))
    }
}

/// Runs the stages `goal` needs, reusing outputs whose input digest matches.
/// Hard errors halt the run naming the stage; artifacts of finished stages
/// stay on disk.
pub fn run(cfg: &RunConfig, goal: Goal) -> CliResult<Outcome> {
    let eps_values = cfg.eps_values()?;
    let measure = cfg.load_measure()?;
    let kernel = cfg.load_kernel()?;
    let validation = validate(&measure);
    if !validation.valid {
        return Err(CliError::Domain(validation.to_string().trim_end().to_string()));
    }
    let dir = cfg.output_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut manifest = Manifest::load(dir);
    let mut out = Outcome {
        atom_count: 0,
        spectrum: None,
        slope: None,
        smallball: Vec::new(),
        report: None,
        failures: Vec::new(),
        timings: Vec::new(),
    };

    // Atoms: always enumerated in memory (exact and fast), written when stale.
    let t = Instant::now();
    let depth = cfg.depth.to_string();
    let atoms_key = input_key(&["atoms", &measure.digest(), &depth]);
    let list = atoms(&measure, cfg.depth).map_err(CliError::in_stage("atoms"))?;
    out.atom_count = list.len();
    let reused = manifest.reusable("atoms", &atoms_key, dir).is_some();
    if !reused {
        let mut buf = Vec::new();
        list.write_csv(&mut buf).map_err(CliError::in_stage("atoms"))?;
        let sha = write_artifact(dir, ATOMS_CSV, &buf)?;
        manifest.record("atoms", &atoms_key, &[(ATOMS_CSV, sha)], &[])?;
    }
    out.timings.push(StageTiming { name: "atoms", seconds: t.elapsed().as_secs_f64(), reused });
    if !goal.wants_spectrum() {
        return Ok(out);
    }

    // Eigenvalues: the expensive stage. Downstream stages read the spectrum
    // back from disk so fresh and resumed runs see identical numbers.
    let t = Instant::now();
    let eigs_key = input_key(&["eigs", &atoms_key, &kernel.digest(), &cfg.precision_bits.to_string()]);
    let reused = manifest.reusable("eigs", &eigs_key, dir).is_some();
    if !reused {
        let m = gram_matrix(&list, &kernel, cfg.precision_bits)
            .map_err(CliError::in_stage("eigs"))?
            .with_measure_digest(measure.digest());
        let sp = eigenvalues(&m).map_err(CliError::in_stage("eigs"))?;
        let mut csv = Vec::new();
        sp.write_csv(&mut csv).map_err(CliError::in_stage("eigs"))?;
        let csv_sha = write_artifact(dir, EIGS_CSV, &csv)?;
        let meta_sha = write_artifact(dir, EIGS_META, &pretty(&sp.meta()))?;
        manifest.record("eigs", &eigs_key, &[(EIGS_CSV, csv_sha), (EIGS_META, meta_sha)], &[])?;
    }
    let sp = read_spectrum(dir).map_err(|e| CliError::Stage { stage: "eigs", source: Box::new(e) })?;
    out.timings.push(StageTiming { name: "eigs", seconds: t.elapsed().as_secs_f64(), reused });

    if goal.wants_slope() {
        let t = Instant::now();
        let key = input_key(&["slope", &eigs_key]);
        let (reused, notes) = match manifest.reusable("slope", &key, dir) {
            Some(notes) => (true, notes),
            None => {
                let (value, notes) = slope_document(&measure, &kernel, &sp);
                let sha = write_artifact(dir, SLOPE_JSON, &pretty(&value))?;
                manifest.record("slope", &key, &[(SLOPE_JSON, sha)], &notes)?;
                (false, notes)
            }
        };
        out.slope = Some(read_json(&dir.join(SLOPE_JSON))?);
        out.failures.extend(notes);
        out.timings.push(StageTiming { name: "slope", seconds: t.elapsed().as_secs_f64(), reused });
    }

    if goal.wants_smallball() {
        let t = Instant::now();
        let methods: Vec<&str> = cfg.methods.iter().map(|m| m.name()).collect();
        let key = input_key(&[
            "smallball",
            &eigs_key,
            &cfg.eps_list.join(","),
            &methods.join(","),
            &cfg.seed.to_string(),
            &cfg.samples.to_string(),
        ]);
        let (reused, notes) = match manifest.reusable("smallball", &key, dir) {
            Some(notes) => (true, notes),
            None => {
                let mut rows = Vec::new();
                let mut notes = Vec::new();
                for (text, &eps) in cfg.eps_list.iter().zip(&eps_values) {
                    for &method in &cfg.methods {
                        let est = match method {
                            Method::Mc => estimate_small_ball_mc(&sp, eps, cfg.samples, cfg.seed),
                            Method::Saddlepoint => log_small_ball_saddlepoint(&sp, eps),
                            Method::Asymptotic => asymptotic_log_small_ball(&measure, &kernel, eps),
                        };
                        match est {
                            Ok(e) => rows.push((text.trim().to_string(), e)),
                            Err(e) => match CliError::from(e) {
                                CliError::Domain(msg) => notes.push(format!("smallball eps={} method={method}: {msg}", text.trim())),
                                other => return Err(CliError::Stage { stage: "smallball", source: Box::new(other) }),
                            },
                        }
                    }
                }
                let mut csv = Vec::new();
                write_estimates_csv(&mut csv, &rows).map_err(CliError::in_stage("smallball"))?;
                let sha = write_artifact(dir, SMALLBALL_CSV, &csv)?;
                manifest.record("smallball", &key, &[(SMALLBALL_CSV, sha)], &notes)?;
                (false, notes)
            }
        };
        let path = dir.join(SMALLBALL_CSV);
        out.smallball = parse_smallball_csv(&read_text(&path)?)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        out.failures.extend(notes);
        out.timings.push(StageTiming { name: "smallball", seconds: t.elapsed().as_secs_f64(), reused });
    }

    if goal == Goal::Full {
        let t = Instant::now();
        let mut report = build_report(cfg, &sp, &out, dir)?;
        let mut timings: Vec<Value> = out
            .timings
            .iter()
            .map(|s| json!({ "stage": s.name, "seconds": s.seconds, "reused": s.reused }))
            .collect();
        timings.push(json!({ "stage": "report", "seconds": t.elapsed().as_secs_f64(), "reused": false }));
        report["timings"] = Value::Array(timings);
        write_artifact(dir, REPORT_JSON, &pretty(&report))?;
        out.report = Some(report);
    }
    out.spectrum = Some(sp);
    Ok(out)
}

/// `slope.json`: theory, the default-window fit (or its error), the ratio.
fn slope_document(measure: &MeasureSpec, kernel: &KernelSpec, sp: &Spectrum) -> (Value, Vec<String>) {
    let ell = operator_order(kernel);
    let (theory, q) = theoretical_slope(measure, ell);
    let mut doc = json!({
        "theory": { "slope": theory, "q": q, "ell": ell },
        "fit": null,
        "ratio": null,
        "error": null,
    });
    let mut notes = Vec::new();
    match fit_counting_slope(sp, None) {
        Ok(fit) => {
            let mut v = serde_json::to_value(&fit).expect("fit serializes");
            v["periodogram"] = json!(fit.periodogram());
            doc["ratio"] = json!(fit.slope / theory);
            doc["fit"] = v;
        }
        Err(e) => {
            doc["error"] = json!(e.to_string());
            notes.push(format!("slope: {e}"));
        }
    }
    (doc, notes)
}

fn build_report(cfg: &RunConfig, sp: &Spectrum, out: &Outcome, dir: &Path) -> CliResult<Value> {
    let slope = out.slope.as_ref().expect("full runs fit the slope");
    let theory = &slope["theory"];
    let fit = match &slope["fit"] {
        Value::Null => Value::Null,
        f => json!({
            "slope": f["slope"],
            "stderr": f["stderr"],
            "window": f["window"],
            "points_used": f["points_used"],
        }),
    };
    let saddle: Vec<(f64, f64)> = out
        .smallball
        .iter()
        .filter(|r| r.method == Method::Saddlepoint)
        .filter_map(|r| r.eps.parse::<f64>().ok().map(|e| (e, r.log_prob)))
        .collect();
    let c = theory["slope"].as_f64().unwrap_or(f64::NAN);
    let log_square = match fit_log_square(&saddle) {
        Ok(f) => json!({
            "fitted": -f.a,
            "theory": c,
            "ratio": -f.a / c,
            "points_used": f.points_used,
            "linear": f.b,
            "constant": f.c,
        }),
        Err(_) => Value::Null,
    };
    let mut artifacts = Map::new();
    for name in [ATOMS_CSV, EIGS_CSV, EIGS_META, SLOPE_JSON, SMALLBALL_CSV] {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        artifacts.insert(name.into(), json!(sha256_hex(&bytes)));
    }
    let methods: Vec<&str> = cfg.methods.iter().map(|m| m.name()).collect();
    Ok(json!({
        "tool": "selfsim",
        "version": env!("CARGO_PKG_VERSION"),
        "status": if out.failures.is_empty() { "ok" } else { "failed" },
        "config": {
            "depth": cfg.depth,
            "precision_bits": cfg.precision_bits,
            "eps": cfg.eps_list,
            "methods": methods,
            "seed": cfg.seed,
            "samples": cfg.samples,
        },
        "measure_digest": sp.source().measure_digest,
        "kernel_digest": sp.source().kernel_digest,
        "atoms": out.atom_count,
        "eigenvalues": sp.len(),
        "trusted_eigenvalues": sp.trusted_len(),
        "trust_threshold": sp.trust_threshold(),
        "theory": theory,
        "fit": fit,
        "fit_error": slope["error"],
        "slope_ratio": slope["ratio"],
        "smallball": out.smallball.iter().map(SmallBallRow::to_json).collect::<Vec<_>>(),
        "log_square": log_square,
        "failures": out.failures,
        "artifacts": artifacts,
    }))
}

pub fn read_json(path: &Path) -> CliResult<Value> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

/// Loads `eigs.csv` and `eigs.meta` from an output directory.
pub fn read_spectrum(dir: &Path) -> CliResult<Spectrum> {
    let meta = read_json(&dir.join(EIGS_META))?;
    let csv = read_text(&dir.join(EIGS_CSV))?;
    Spectrum::read(&csv, &meta).map_err(|e| CliError::Parse(format!("{}: {e}", dir.join(EIGS_CSV).display())))
}

/// Parses `smallball.csv` (`eps,log_prob,method,stderr,n_samples,seed`).
pub fn parse_smallball_csv(text: &str) -> Result<Vec<SmallBallRow>, String> {
    let mut lines = text.lines();
    if lines.next() != Some("eps,log_prob,method,stderr,n_samples,seed") {
        return Err("missing header eps,log_prob,method,stderr,n_samples,seed".into());
    }
    fn opt<T: std::str::FromStr>(s: &str, line: usize) -> Result<Option<T>, String> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse().map(Some).map_err(|_| format!("line {line}: bad field {s:?}"))
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let n = i + 2;
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(format!("line {n}: expected 6 fields, found {}", f.len()));
            }
            Ok(SmallBallRow {
                eps: f[0].to_string(),
                log_prob: f[1].parse().map_err(|_| format!("line {n}: bad log_prob {:?}", f[1]))?,
                method: f[2].parse().map_err(|e| format!("line {n}: {e}"))?,
                stderr: opt(f[3], n)?,
                n_samples: opt(f[4], n)?,
                seed: opt(f[5], n)?,
            })
        })
        .collect()
}
