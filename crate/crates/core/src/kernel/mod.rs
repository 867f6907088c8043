//! Covariance (Green) functions of the Gaussian process catalog.
//!
//! Every process is described by a [`KernelSpec`]: a base process, an
//! optional scalar parameter, and a number of integrations with their
//! endpoints. Two evaluation routes exist:
//!
//! * double precision — closed forms, and nested Gauss–Legendre quadrature
//!   for integrated processes ([`covariance`], [`integrated_covariance`]);
//! * extended precision — an exact symbolic representation of the kernel as
//!   an exponential polynomial ([`symbolic_kernel`]), used to assemble Gram
//!   matrices at hundreds of bits.
//!
//! [`mc_covariance_oracle`] simulates discretized paths and serves as the
//! independent ground truth in tests.

mod bridged;
mod closed;
mod covmatrix;
pub mod expoly;
mod mc;
mod quad;
mod symbolic;

pub use covmatrix::CovMatrix;
pub use mc::{mc_covariance_oracle, mc_covariance_oracle_with, McOptions};
pub use quad::gauss_legendre;
pub use symbolic::symbolic_kernel;

use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ratio::{format_rational, rational_from_json};
use crate::xprec::ratio_to_f64;

/// Highest order accepted for the centered-integrated processes.
pub const MAX_CENTERED_ORDER: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Process {
    Wiener,
    BrownianBridge,
    CenteredWiener,
    CenteredBridge,
    ElongatedBridge,
    Slepian,
    OuStationary,
    OuZero,
    Bogolyubov,
    BridgedIntegratedWiener,
    CenteredIntegratedWiener,
    CenteredIntegratedBridge,
    Matern,
}

impl Process {
    pub const ALL: [Process; 13] = [
        Process::Wiener,
        Process::BrownianBridge,
        Process::CenteredWiener,
        Process::CenteredBridge,
        Process::ElongatedBridge,
        Process::Slepian,
        Process::OuStationary,
        Process::OuZero,
        Process::Bogolyubov,
        Process::BridgedIntegratedWiener,
        Process::CenteredIntegratedWiener,
        Process::CenteredIntegratedBridge,
        Process::Matern,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Process::Wiener => "wiener",
            Process::BrownianBridge => "brownian_bridge",
            Process::CenteredWiener => "centered_wiener",
            Process::CenteredBridge => "centered_bridge",
            Process::ElongatedBridge => "elongated_bridge",
            Process::Slepian => "slepian",
            Process::OuStationary => "ou_stationary",
            Process::OuZero => "ou_zero",
            Process::Bogolyubov => "bogolyubov",
            Process::BridgedIntegratedWiener => "bridged_integrated_wiener",
            Process::CenteredIntegratedWiener => "centered_integrated_wiener",
            Process::CenteredIntegratedBridge => "centered_integrated_bridge",
            Process::Matern => "matern",
        }
    }

    /// Whether the process takes the scalar parameter (α, u or c).
    pub fn takes_param(self) -> bool {
        matches!(
            self,
            Process::ElongatedBridge | Process::Slepian | Process::OuStationary | Process::OuZero | Process::Bogolyubov
        )
    }

    /// Processes whose order is intrinsic: `integrations` selects the member
    /// of the family and no integration endpoints are accepted.
    pub fn is_self_contained(self) -> bool {
        matches!(
            self,
            Process::BridgedIntegratedWiener
                | Process::CenteredIntegratedWiener
                | Process::CenteredIntegratedBridge
                | Process::Matern
        )
    }
}

impl fmt::Display for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Process {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Process::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidKernel(format!("unknown process {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KernelSpec {
    process: Process,
    param: Option<BigRational>,
    integrations: usize,
    /// Integration endpoints `β₁ … β_𝔰` (innermost first); `true` means 1.
    endpoints: Vec<bool>,
}

impl KernelSpec {
    pub fn new(process: Process, param: Option<BigRational>, integrations: usize, endpoints: Vec<bool>) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidKernel(msg));
        match (&param, process.takes_param()) {
            (None, true) => return bad(format!("{process} requires a parameter")),
            (Some(_), false) => return bad(format!("{process} takes no parameter")),
            _ => {}
        }
        if let Some(p) = &param {
            let ok = match process {
                Process::OuStationary | Process::Bogolyubov => p.is_positive(),
                Process::OuZero => !p.is_zero(),
                Process::ElongatedBridge => p < &BigRational::one(),
                Process::Slepian => p >= &BigRational::one(),
                _ => true,
            };
            if !ok {
                let rule = match process {
                    Process::OuStationary | Process::Bogolyubov => "α > 0",
                    Process::OuZero => "α ≠ 0",
                    Process::ElongatedBridge => "u < 1",
                    _ => "c ≥ 1",
                };
                return bad(format!("{process} parameter {} violates {rule}", format_rational(p)));
            }
        }
        if process.is_self_contained() {
            if !endpoints.is_empty() {
                return bad(format!("{process} carries its own boundary conditions and takes no endpoints"));
            }
            if matches!(process, Process::CenteredIntegratedWiener | Process::CenteredIntegratedBridge)
                && integrations > MAX_CENTERED_ORDER
            {
                return bad(format!("{process} is supported up to order {MAX_CENTERED_ORDER}"));
            }
        } else if endpoints.len() != integrations {
            return bad(format!("{} endpoints given for {integrations} integrations", endpoints.len()));
        }
        Ok(KernelSpec { process, param, integrations, endpoints })
    }

    /// A base process with no integrations.
    pub fn base(process: Process, param: Option<f64>) -> Result<Self> {
        let param = param
            .map(|p| BigRational::from_float(p).ok_or_else(|| Error::InvalidKernel(format!("non-finite parameter {p}"))))
            .transpose()?;
        KernelSpec::new(process, param, 0, Vec::new())
    }

    /// `process` integrated once per endpoint (`0` or `1`).
    pub fn integrated(process: Process, param: Option<f64>, endpoints: &[u8]) -> Result<Self> {
        let b = KernelSpec::base(process, param)?;
        KernelSpec::new(process, b.param, endpoints.len(), endpoints.iter().map(|&e| e != 0).collect())
    }

    /// A self-contained process of the given order.
    pub fn of_order(process: Process, order: usize) -> Result<Self> {
        KernelSpec::new(process, None, order, Vec::new())
    }

    pub fn wiener() -> Self {
        KernelSpec::base(Process::Wiener, None).expect("wiener")
    }

    /// One representative of every catalog process at `integrations = order`,
    /// with every endpoint pattern for integrated processes. Parameters are
    /// α = 1, u = 2/5 and c = 3/2.
    pub fn catalog(order: usize) -> Vec<KernelSpec> {
        let mut out = Vec::new();
        for p in Process::ALL {
            let param = match p {
                Process::ElongatedBridge => Some(0.4),
                Process::Slepian => Some(1.5),
                _ if p.takes_param() => Some(1.0),
                _ => None,
            };
            if p.is_self_contained() {
                if let Ok(k) = KernelSpec::base(p, param).and_then(|b| KernelSpec::new(p, b.param, order, Vec::new())) {
                    out.push(k);
                }
                continue;
            }
            for mask in 0..1u32 << order {
                let ends: Vec<u8> = (0..order).map(|j| ((mask >> j) & 1) as u8).collect();
                out.push(KernelSpec::integrated(p, param, &ends).expect("catalog parameters are admissible"));
            }
        }
        out
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_json(&v)
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let process: Process = v
            .get("process")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Parse("missing string key \"process\"".into()))?
            .parse()?;
        let param = match v.get("param") {
            None | Some(Value::Null) => None,
            Some(p) => Some(rational_from_json(p)?),
        };
        let integrations = match v.get("integrations") {
            None => 0,
            Some(i) => i.as_u64().ok_or_else(|| Error::Parse("\"integrations\" must be a nonnegative integer".into()))?
                as usize,
        };
        let endpoints = match v.get("endpoints") {
            None => Vec::new(),
            Some(Value::Array(a)) => a
                .iter()
                .map(|e| match e.as_u64() {
                    Some(0) => Ok(false),
                    Some(1) => Ok(true),
                    _ => Err(Error::Parse("endpoints must be 0 or 1".into())),
                })
                .collect::<Result<_>>()?,
            Some(_) => return Err(Error::Parse("\"endpoints\" must be an array".into())),
        };
        KernelSpec::new(process, param, integrations, endpoints)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "process": self.process.name(),
            "param": self.param.as_ref().map(format_rational),
            "integrations": self.integrations,
            "endpoints": self.endpoints.iter().map(|&b| u8::from(b)).collect::<Vec<_>>(),
        })
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().to_string().as_bytes()))
    }

    pub fn process(&self) -> Process {
        self.process
    }

    pub fn param(&self) -> Option<&BigRational> {
        self.param.as_ref()
    }

    pub fn param_f64(&self) -> Option<f64> {
        self.param.as_ref().map(ratio_to_f64)
    }

    pub fn integrations(&self) -> usize {
        self.integrations
    }

    pub fn endpoints(&self) -> &[bool] {
        &self.endpoints
    }

    /// The same process with integrations and endpoints stripped.
    pub fn base_spec(&self) -> KernelSpec {
        if self.process.is_self_contained() {
            return self.clone();
        }
        KernelSpec { process: self.process, param: self.param.clone(), integrations: 0, endpoints: Vec::new() }
    }

    /// Half the order of the associated differential operator.
    pub fn operator_order(&self) -> usize {
        operator_order(self)
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.process)?;
        if let Some(p) = &self.param {
            write!(f, "({})", format_rational(p))?;
        }
        if self.integrations > 0 {
            write!(f, ", 𝔰 = {}", self.integrations)?;
            if !self.endpoints.is_empty() {
                let e: Vec<_> = self.endpoints.iter().map(|&b| u8::from(b).to_string()).collect();
                write!(f, " [{}]", e.join(","))?;
            }
        }
        Ok(())
    }
}

/// `ℓ = 1 + 𝔰` for every catalog process.
pub fn operator_order(k: &KernelSpec) -> usize {
    1 + k.integrations
}

fn check_unit(v: f64, name: &str) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("{name} = {v} outside [0, 1]")))
    }
}

/// `G_X(s, t)` in double precision. Base processes use their closed forms;
/// self-contained families are evaluated at any order; integrated processes
/// are delegated to [`integrated_covariance`].
pub fn covariance(k: &KernelSpec, s: f64, t: f64) -> Result<f64> {
    check_unit(s, "s")?;
    check_unit(t, "t")?;
    if k.integrations > 0 && !k.process.is_self_contained() {
        return integrated_covariance(k, s, t);
    }
    closed::covariance(k, s, t)
}

/// `E X_𝔰(t) X_𝔰(u)` for an integrated process: closed form for the Wiener
/// process integrated from 0, otherwise nested Gauss–Legendre quadrature with
/// an error estimate from node doubling.
pub fn integrated_covariance(k: &KernelSpec, t: f64, u: f64) -> Result<f64> {
    check_unit(t, "t")?;
    check_unit(u, "u")?;
    if k.integrations == 0 || k.process.is_self_contained() {
        return closed::covariance(k, t, u);
    }
    if k.process == Process::Wiener && k.endpoints.iter().all(|&b| !b) {
        return Ok(closed::integrated_wiener(k.integrations, t, u));
    }
    quad::integrated_covariance(k, t, u)
}

/// Forces the quadrature route (for cross-checking the closed forms).
pub fn integrated_covariance_quadrature(k: &KernelSpec, t: f64, u: f64) -> Result<f64> {
    check_unit(t, "t")?;
    check_unit(u, "u")?;
    quad::integrated_covariance(k, t, u)
}
