use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use selfsim::measure::validate;
use selfsim::smallball::Method;
use selfsim_cli::config::{load_measure, read_text};
use selfsim_cli::pipeline::{self, Goal, Outcome, REPORT_JSON};
use selfsim_cli::render::render_report;
use selfsim_cli::{CliError, CliResult, RunConfig};

#[derive(Parser)]
#[command(name = "selfsim", version, about = "Spectra and small-ball estimates for self-similar measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that a measure spec defines a probability measure.
    Validate(ValidateArgs),
    /// Enumerate atoms to the given depth (atoms.csv).
    Atoms(RunArgs),
    /// Atoms and the Gram-matrix spectrum (eigs.csv, eigs.meta).
    Eigs(RunArgs),
    /// Spectrum and the counting-function slope fit (slope.json).
    Slope(RunArgs),
    /// Spectrum and the small-ball table (smallball.csv).
    Smallball(RunArgs),
    /// Every stage plus report.json.
    Pipeline(RunArgs),
    /// Render an existing report.json without recomputing.
    Report(ReportArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    measure: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct RunArgs {
    /// Measure spec (JSON with alpha, beta, d, m, e).
    #[arg(long)]
    measure: PathBuf,
    /// Kernel spec (JSON with process, param, integrations, endpoints);
    /// defaults to the Wiener kernel.
    #[arg(long)]
    kernel: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    depth: usize,
    #[arg(long, default_value_t = selfsim::spectrum::DEFAULT_PRECISION_BITS)]
    precision_bits: usize,
    /// Comma-separated small-ball radii.
    #[arg(long, value_delimiter = ',', default_value = "1e-1,1e-2,1e-3,1e-4")]
    eps: Vec<String>,
    /// Comma-separated subset of mc, saddlepoint, asymptotic.
    #[arg(long = "method", value_delimiter = ',', default_value = "saddlepoint,asymptotic")]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo sample count.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            measure: self.measure.clone(),
            kernel: self.kernel.clone(),
            depth: self.depth,
            precision_bits: self.precision_bits,
            eps_list: self.eps.clone(),
            methods: self.methods.clone(),
            seed: self.seed,
            samples: self.samples,
            output_dir: self.out.clone(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(a) => cmd_validate(&a),
        Command::Atoms(a) => cmd_run(&a, Goal::Atoms),
        Command::Eigs(a) => cmd_run(&a, Goal::Eigs),
        Command::Slope(a) => cmd_run(&a, Goal::Slope),
        Command::Smallball(a) => cmd_run(&a, Goal::SmallBall),
        Command::Pipeline(a) => cmd_run(&a, Goal::Full),
        Command::Report(a) => cmd_report(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn cmd_validate(a: &ValidateArgs) -> CliResult<u8> {
    let report = validate(&load_measure(&a.measure)?);
    match a.format {
        Format::Text => println!("{}", report.to_string().trim_end()),
        Format::Json => {
            let violations: Vec<Value> = report
                .violations
                .iter()
                .map(|v| json!({ "criterion": v.criterion as u8, "name": v.criterion.to_string(), "detail": v.detail }))
                .collect();
            println!("{}", json!({ "valid": report.valid, "violations": violations }));
        }
    }
    Ok(if report.valid { 0 } else { 1 })
}

fn cmd_run(a: &RunArgs, goal: Goal) -> CliResult<u8> {
    let cfg = a.config();
    let outcome = match a.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Parse(format!("--threads {n}: {e}")))?
            .install(|| pipeline::run(&cfg, goal))?,
        None => pipeline::run(&cfg, goal)?,
    };
    match a.format {
        Format::Text => print!("{}", summary_text(&outcome, goal)?),
        Format::Json => println!("{}", summary_json(&outcome, goal)),
    }
    if goal != Goal::Full {
        for f in &outcome.failures {
            eprintln!("failure: {f}");
        }
    }
    Ok(if outcome.failures.is_empty() { 0 } else { 1 })
}

fn summary_text(o: &Outcome, goal: Goal) -> CliResult<String> {
    if goal == Goal::Full {
        return render_report(o.report.as_ref().expect("full runs write a report"));
    }
    let mut lines = vec![format!("atoms {}", o.atom_count)];
    if let Some(sp) = &o.spectrum {
        let top: Vec<String> = sp.eigenvalues_f64().iter().take(5).map(|v| format!("{v:.6e}")).collect();
        lines.push(format!(
            "eigenvalues {} ({} trusted above {:.3e}, {} sweeps)",
            sp.len(),
            sp.trusted_len(),
            sp.trust_threshold(),
            sp.sweeps()
        ));
        lines.push(format!("largest {}", top.join(" ")));
    }
    if let Some(slope) = &o.slope {
        let theory = slope["theory"]["slope"].as_f64().unwrap_or(f64::NAN);
        match slope["fit"].as_object() {
            Some(fit) => lines.push(format!(
                "slope theory {:.5}  fit {:.5} ± {:.5}  ratio {:.4}",
                theory,
                fit["slope"].as_f64().unwrap_or(f64::NAN),
                fit["stderr"].as_f64().unwrap_or(f64::NAN),
                slope["ratio"].as_f64().unwrap_or(f64::NAN)
            )),
            None => lines.push(format!("slope theory {theory:.5}  fit failed")),
        }
    }
    for r in &o.smallball {
        let se = r.stderr.map_or(String::new(), |v| format!(" ± {v:.3e}"));
        lines.push(format!("eps {}  {}  ln P {:.6}{se}", r.eps, r.method, r.log_prob));
    }
    Ok(lines.join("\n") + "\n")
}

fn summary_json(o: &Outcome, goal: Goal) -> Value {
    if let (Goal::Full, Some(r)) = (goal, &o.report) {
        return r.clone();
    }
    json!({
        "atoms": o.atom_count,
        "eigenvalues": o.spectrum.as_ref().map(|s| s.len()),
        "trusted_eigenvalues": o.spectrum.as_ref().map(|s| s.trusted_len()),
        "slope": o.slope,
        "smallball": o.smallball.iter().map(|r| json!({
            "eps": r.eps, "method": r.method.name(), "log_prob": r.log_prob, "stderr": r.stderr,
        })).collect::<Vec<_>>(),
        "failures": o.failures,
    })
}

fn cmd_report(a: &ReportArgs) -> CliResult<u8> {
    let path = a.out.join(REPORT_JSON);
    let raw = read_text(&path)?;
    let report: Value = serde_json::from_str(&raw).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    match a.format {
        Format::Json => print!("{raw}"),
        Format::Text => print!("{}", render_report(&report)?),
    }
    Ok(if report.get("status").and_then(Value::as_str) == Some("ok") { 0 } else { 1 })
}
