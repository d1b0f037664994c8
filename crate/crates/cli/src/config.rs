//! Flat `key = value` run configuration.
//!
//! Files hold one `key = value` pair per line; `#` starts a comment. Command
//! line flags are applied on top as further pairs, last one wins.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hjm_core::{AlgorithmOrder, NoiseKind, ProportionalParams, StepLaw, VasicekParams};

use crate::error::{CliError, CliResult};

/// Every key a configuration may set.
pub const KEYS: &[&str] = &[
    "model",
    "sigma",
    "kappa",
    "r0",
    "theta",
    "sigmas",
    "kappas",
    "gamma_cap",
    "contract",
    "t0",
    "t_star",
    "maturity",
    "payment",
    "payment_dates",
    "accrual_start",
    "strike",
    "algo",
    "step_law",
    "delta",
    "h",
    "paths",
    "seed",
    "threads",
    "noise",
    "out",
    "reference",
    "reference_file",
    "timing",
    "rough_discount",
];

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Vasicek(VasicekParams),
    Proportional(ProportionalParams),
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Vasicek(_) => "vasicek",
            Self::Proportional(_) => "proportional",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContractSpec {
    Caplet {
        payment: f64,
    },
    PayerSwaption {
        accrual_start: f64,
        payment_dates: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub contract: ContractSpec,
    pub t0: f64,
    pub t_star: f64,
    /// Last maturity on the grid.
    pub maturity: f64,
    pub strike: f64,
    pub algo: AlgorithmOrder,
    pub step_law: StepLaw,
    pub h: Vec<f64>,
    pub paths: usize,
    pub seed: u64,
    /// Worker threads; `0` lets the pool decide.
    pub threads: usize,
    pub noise: NoiseKind,
    pub out: Option<PathBuf>,
    /// Reference price for models without a closed form.
    pub reference: Option<f64>,
    /// Record wall time in the output; off gives byte-reproducible files.
    pub timing: bool,
    /// Diagnostic discount shortcut that does not converge on misaligned grids.
    pub rough_discount: bool,
}

/// The step law each algorithm is paired with by default.
pub fn default_step_law(algo: AlgorithmOrder) -> StepLaw {
    match algo {
        AlgorithmOrder::Rect1 => StepLaw::Linear,
        AlgorithmOrder::Trap2 => StepLaw::SquareRoot,
        AlgorithmOrder::Simpson4 => StepLaw::FourthRoot,
    }
}

/// Parses `key = value` lines.
pub fn parse_flat(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::config(format!(
                "line {}: expected `key = value`, got `{}`",
                n + 1,
                raw.trim()
            ))
        })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

pub fn read_flat_file(path: &Path) -> CliResult<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_flat(&text)
}

struct Table(BTreeMap<String, String>);

impl Table {
    fn num(&self, key: &str, default: f64) -> CliResult<f64> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => parse_f64(key, v),
        }
    }

    fn opt_num(&self, key: &str) -> CliResult<Option<f64>> {
        self.0.get(key).map(|v| parse_f64(key, v)).transpose()
    }

    fn list(&self, key: &str) -> CliResult<Option<Vec<f64>>> {
        self.0
            .get(key)
            .map(|v| v.split(',').map(|x| parse_f64(key, x.trim())).collect())
            .transpose()
    }

    fn count(&self, key: &str, default: u64) -> CliResult<u64> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => parse_count(key, v),
        }
    }

    fn switch(&self, key: &str, default: bool) -> CliResult<bool> {
        match self.text(key) {
            None => Ok(default),
            Some("on" | "true" | "yes") => Ok(true),
            Some("off" | "false" | "no") => Ok(false),
            Some(other) => Err(CliError::config(format!(
                "`{key}`: `{other}` is not on/off"
            ))),
        }
    }

    fn text(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }
}

fn parse_f64(key: &str, v: &str) -> CliResult<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| CliError::config(format!("`{key}`: `{v}` is not a number")))?;
    if !x.is_finite() {
        return Err(CliError::config(format!("`{key}`: `{v}` is not finite")));
    }
    Ok(x)
}

/// Non-negative integer; scientific notation such as `1e6` is accepted.
fn parse_count(key: &str, v: &str) -> CliResult<u64> {
    if let Ok(n) = v.parse::<u64>() {
        return Ok(n);
    }
    let x = parse_f64(key, v)?;
    if x < 0.0 || x.fract() != 0.0 || x > u64::MAX as f64 {
        return Err(CliError::config(format!(
            "`{key}`: `{v}` is not a whole count"
        )));
    }
    Ok(x as u64)
}

impl RunConfig {
    /// Builds a configuration from pairs applied in order over the defaults.
    pub fn from_pairs<I, K, V>(pairs: I) -> CliResult<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut map = BTreeMap::new();
        for (k, v) in pairs {
            let k = k.into();
            if !KEYS.contains(&k.as_str()) {
                return Err(CliError::config(format!(
                    "unknown key `{k}`; known keys: {}",
                    KEYS.join(", ")
                )));
            }
            map.insert(k, v.into());
        }
        let t = Table(map);

        let model = match t.text("model").unwrap_or("vasicek") {
            "vasicek" => {
                let p = VasicekParams {
                    sigma: t.num("sigma", 0.02)?,
                    kappa: t.num("kappa", 1.0)?,
                    r0: t.num("r0", 0.05)?,
                    theta: t.num("theta", 1.0)?,
                };
                p.validate()?;
                ModelSpec::Vasicek(p)
            }
            "proportional" => {
                let mut p = ProportionalParams::two_factor_reference();
                if let Some(s) = t.list("sigmas")? {
                    p.sigma = s;
                }
                if let Some(k) = t.list("kappas")? {
                    p.kappa = k;
                }
                p.gamma_cap = t.num("gamma_cap", p.gamma_cap)?;
                p.validate()?;
                ModelSpec::Proportional(p)
            }
            other => {
                return Err(CliError::config(format!(
                    "unknown model `{other}` (expected vasicek or proportional)"
                )))
            }
        };

        let t0 = t.num("t0", 0.0)?;
        let t_star = t.num("t_star", 1.0)?;
        let strike = t.num("strike", 0.03)?;
        let (contract, last_payment) = match t.text("contract").unwrap_or("caplet") {
            "caplet" => {
                let payment = t.num("payment", t.num("maturity", 6.0)?)?;
                (ContractSpec::Caplet { payment }, payment)
            }
            "swaption" => {
                let dates = t
                    .list("payment_dates")?
                    .ok_or_else(|| CliError::config("a swaption needs `payment_dates`"))?;
                let last = *dates
                    .last()
                    .ok_or_else(|| CliError::config("`payment_dates` is empty"))?;
                let accrual_start = t.num("accrual_start", t_star)?;
                (
                    ContractSpec::PayerSwaption {
                        accrual_start,
                        payment_dates: dates,
                    },
                    last,
                )
            }
            other => {
                return Err(CliError::config(format!(
                    "unknown contract `{other}` (expected caplet or swaption)"
                )))
            }
        };
        let maturity = t.num("maturity", last_payment)?;
        if !(t0 < t_star && t_star < last_payment && last_payment <= maturity) {
            return Err(CliError::config(format!(
                "need t0 < t_star < payment <= maturity (got {t0}, {t_star}, {last_payment}, {maturity})"
            )));
        }

        let algo_label = t.text("algo").unwrap_or("5.1");
        let algo = AlgorithmOrder::from_label(algo_label).ok_or_else(|| {
            CliError::config(format!(
                "unknown algorithm `{algo_label}` (expected 5.1, 5.2 or 5.3)"
            ))
        })?;
        let step_law = match (t.opt_num("delta")?, t.text("step_law")) {
            (Some(_), Some(_)) => {
                return Err(CliError::config(
                    "set either `delta` or `step_law`, not both",
                ))
            }
            (Some(d), None) => StepLaw::Explicit(d),
            (None, Some(name)) => parse_step_law(name)?,
            (None, None) => default_step_law(algo),
        };

        let h = t.list("h")?.unwrap_or_else(|| vec![0.2]);
        if h.is_empty() || h.iter().any(|&x| x <= 0.0) {
            return Err(CliError::config("`h` needs positive values"));
        }
        let paths = t.count("paths", 100_000)? as usize;
        let seed = t.count("seed", 1)?;
        let threads = t.count("threads", 0)? as usize;
        let noise_label = t.text("noise").unwrap_or("weak");
        let noise = NoiseKind::from_label(noise_label).ok_or_else(|| {
            CliError::config(format!(
                "unknown noise `{noise_label}` (expected weak or gaussian)"
            ))
        })?;
        let out = t.text("out").map(PathBuf::from);
        let mut reference = t.opt_num("reference")?;
        if let Some(file) = t.text("reference_file") {
            if reference.is_none() {
                reference = Some(read_reference_file(Path::new(file))?);
            }
        }
        let timing = t.switch("timing", true)?;
        let rough_discount = t.switch("rough_discount", false)?;

        Ok(Self {
            model,
            contract,
            t0,
            t_star,
            maturity,
            strike,
            algo,
            step_law,
            h,
            paths,
            seed,
            threads,
            noise,
            out,
            reference,
            timing,
            rough_discount,
        })
    }

    pub fn payment_dates(&self) -> Vec<f64> {
        match &self.contract {
            ContractSpec::Caplet { payment } => vec![*payment],
            ContractSpec::PayerSwaption { payment_dates, .. } => payment_dates.clone(),
        }
    }
}

pub fn parse_step_law(name: &str) -> CliResult<StepLaw> {
    match name {
        "linear" | "h" => Ok(StepLaw::Linear),
        "sqrt" | "square-root" => Ok(StepLaw::SquareRoot),
        "fourth" | "fourth-root" | "alpha" => Ok(StepLaw::FourthRoot),
        other => Err(CliError::config(format!(
            "unknown step law `{other}` (expected linear, sqrt or fourth)"
        ))),
    }
}

/// Reads the `reference` value from a file written by the `reference` command.
pub fn read_reference_file(path: &Path) -> CliResult<f64> {
    let pairs = read_flat_file(path)?;
    let v = pairs
        .iter()
        .rev()
        .find(|(k, _)| k == "reference")
        .ok_or_else(|| CliError::config(format!("{} has no `reference` entry", path.display())))?;
    parse_f64("reference", &v.1)
}
