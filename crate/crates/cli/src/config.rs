//! Run configuration and spec-file loading.

use std::fs;
use std::path::{Path, PathBuf};

use selfsim::kernel::KernelSpec;
use selfsim::measure::MeasureSpec;
use selfsim::smallball::Method;

use crate::error::{CliError, CliResult};

/// Everything a pipeline run depends on. Two runs with equal configs write
/// byte-identical CSV artifacts.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub measure: PathBuf,
    /// Kernel spec file; `None` selects the Wiener kernel.
    pub kernel: Option<PathBuf>,
    pub depth: usize,
    pub precision_bits: usize,
    /// Small-ball radii as written by the user (kept verbatim in the CSV).
    pub eps_list: Vec<String>,
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Monte Carlo sample count.
    pub samples: usize,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub const MIN_PRECISION_BITS: usize = 64;

    /// Defaults for everything but the measure file.
    pub fn new(measure: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            measure: measure.into(),
            kernel: None,
            depth: 20,
            precision_bits: selfsim::spectrum::DEFAULT_PRECISION_BITS,
            eps_list: ["1e-1", "1e-2", "1e-3", "1e-4"].map(String::from).to_vec(),
            methods: vec![Method::Saddlepoint, Method::Asymptotic],
            seed: 0,
            samples: 100_000,
            output_dir: output_dir.into(),
        }
    }

    /// Checks the flag-level invariants and parses the radii.
    pub fn eps_values(&self) -> CliResult<Vec<f64>> {
        if self.precision_bits < Self::MIN_PRECISION_BITS {
            return Err(CliError::Parse(format!(
                "--precision-bits {} is below the minimum {}",
                self.precision_bits,
                Self::MIN_PRECISION_BITS
            )));
        }
        if self.samples == 0 && self.methods.contains(&Method::Mc) {
            return Err(CliError::Parse("--samples must be positive for the mc method".into()));
        }
        self.eps_list
            .iter()
            .map(|s| match s.trim().parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
                _ => Err(CliError::Parse(format!("--eps value {s:?} is not a positive number"))),
            })
            .collect()
    }

    pub fn load_measure(&self) -> CliResult<MeasureSpec> {
        load_measure(&self.measure)
    }

    pub fn load_kernel(&self) -> CliResult<KernelSpec> {
        match &self.kernel {
            Some(p) => load_kernel(p),
            None => Ok(KernelSpec::wiener()),
        }
    }
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn load_measure(path: &Path) -> CliResult<MeasureSpec> {
    MeasureSpec::from_json_str(&read_text(path)?)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

pub fn load_kernel(path: &Path) -> CliResult<KernelSpec> {
    KernelSpec::from_json_str(&read_text(path)?).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}
