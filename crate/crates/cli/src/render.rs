//! Human-readable rendering of `report.json`.

use std::fmt::Write;

use serde_json::Value;

use crate::error::{CliError, CliResult};

fn num(v: &Value, key: &str) -> CliResult<f64> {
    v.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| CliError::Parse(format!("report field {key:?} is missing or not a number")))
}

fn text<'a>(v: &'a Value, key: &str) -> CliResult<&'a str> {
    v.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| CliError::Parse(format!("report field {key:?} is missing or not a string")))
}

fn short(digest: &str) -> &str {
    &digest[..digest.len().min(12)]
}

/// The theory-vs-fit comparison and the small-ball table. Never recomputes
/// anything: every number is read from the report.
pub fn render_report(r: &Value) -> CliResult<String> {
    let mut s = String::new();
    let cfg = r.get("config").ok_or_else(|| CliError::Parse("report lacks \"config\"".into()))?;
    writeln!(
        s,
        "{} {}  measure {}  kernel {}  depth {}  precision {} bits",
        text(r, "tool")?,
        text(r, "version")?,
        short(text(r, "measure_digest")?),
        short(text(r, "kernel_digest")?),
        cfg.get("depth").and_then(Value::as_u64).unwrap_or(0),
        cfg.get("precision_bits").and_then(Value::as_u64).unwrap_or(0),
    )
    .unwrap();
    writeln!(
        s,
        "eigenvalues {} ({} trusted above {:.3e}) from {} atoms",
        r.get("eigenvalues").and_then(Value::as_u64).unwrap_or(0),
        r.get("trusted_eigenvalues").and_then(Value::as_u64).unwrap_or(0),
        num(r, "trust_threshold")?,
        r.get("atoms").and_then(Value::as_u64).unwrap_or(0),
    )
    .unwrap();
    writeln!(s).unwrap();

    let theory = r.get("theory").ok_or_else(|| CliError::Parse("report lacks \"theory\"".into()))?;
    let t_slope = num(theory, "slope")?;
    writeln!(s, "q {:.6}  operator order {}", num(theory, "q")?, theory.get("ell").and_then(Value::as_u64).unwrap_or(0))
        .unwrap();
    match r.get("fit") {
        Some(fit) if !fit.is_null() => {
            let window = fit.get("window").and_then(Value::as_array);
            let w = |i: usize| window.and_then(|w| w.get(i)).and_then(Value::as_f64).unwrap_or(f64::NAN);
            writeln!(
                s,
                "slope theory {:.5}  fit {:.5} ± {:.5}  ratio {:.4}  ({} eigenvalues in [{:.3e}, {:.3e}])",
                t_slope,
                num(fit, "slope")?,
                num(fit, "stderr")?,
                num(r, "slope_ratio")?,
                fit.get("points_used").and_then(Value::as_u64).unwrap_or(0),
                w(1),
                w(0),
            )
            .unwrap();
        }
        _ => {
            let err = r.get("fit_error").and_then(Value::as_str).unwrap_or("no fit recorded");
            writeln!(s, "slope theory {t_slope:.5}  fit failed: {err}").unwrap();
        }
    }
    match r.get("log_square") {
        Some(ls) if !ls.is_null() => writeln!(
            s,
            "ln² coefficient theory {:.5}  fit {:.5}  ratio {:.4}  ({} saddlepoint radii)",
            num(ls, "theory")?,
            num(ls, "fitted")?,
            num(ls, "ratio")?,
            ls.get("points_used").and_then(Value::as_u64).unwrap_or(0)
        )
        .unwrap(),
        _ => writeln!(s, "ln² coefficient theory {t_slope:.5}  fit n/a (needs three saddlepoint radii)").unwrap(),
    }

    let rows = r.get("smallball").and_then(Value::as_array).map(Vec::as_slice).unwrap_or(&[]);
    if !rows.is_empty() {
        writeln!(s).unwrap();
        writeln!(s, "{:<12} {:<12} {:>16} {:>12}", "eps", "method", "ln P", "stderr").unwrap();
        for row in rows {
            let se = row.get("stderr").and_then(Value::as_f64).map_or(String::new(), |v| format!("{v:.3e}"));
            writeln!(
                s,
                "{:<12} {:<12} {:>16.6} {:>12}",
                text(row, "eps")?,
                text(row, "method")?,
                num(row, "log_prob")?,
                se
            )
            .unwrap();
        }
    }
    let failures = r.get("failures").and_then(Value::as_array).map(Vec::as_slice).unwrap_or(&[]);
    if !failures.is_empty() {
        writeln!(s).unwrap();
        for f in failures {
            writeln!(s, "failure: {}", f.as_str().unwrap_or_default()).unwrap();
        }
    }
    if let Some(stages) = r.get("timings").and_then(Value::as_array) {
        writeln!(s).unwrap();
        let parts: Vec<String> = stages
            .iter()
            .map(|t| {
                let reused = if t.get("reused").and_then(Value::as_bool) == Some(true) { " (reused)" } else { "" };
                format!(
                    "{} {:.2}s{}",
                    t.get("stage").and_then(Value::as_str).unwrap_or("?"),
                    t.get("seconds").and_then(Value::as_f64).unwrap_or(0.0),
                    reused
                )
            })
            .collect();
        writeln!(s, "timings: {}", parts.join(", ")).unwrap();
    }
    Ok(s)
}
