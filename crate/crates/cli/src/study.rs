//! Price runs, convergence ladders and their CSV output.

use std::io::Write;
use std::time::Instant;

use hjm_core::simulate::payment_nodes;
use hjm_core::{
    build_grid_pair, mc_price_simulator, vasicek_caplet_price, with_threads, AlgorithmOrder,
    Contract, GridPair, McEstimate, PathSimulator, ProportionalModel, StepLaw, VasicekModel,
    VolatilityModel,
};

use crate::config::{ContractSpec, ModelSpec, RunConfig};
use crate::error::{CliError, CliResult};

/// Confidence multiplier used for reported half-widths.
pub const CONFIDENCE: u32 = 2;

pub const CSV_HEADER: [&str; 9] = [
    "h",
    "delta",
    "alpha",
    "L",
    "estimate",
    "reference",
    "bias",
    "half_width_c2",
    "seconds",
];

/// One row of a study: a single Monte Carlo estimate at step `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub h: f64,
    pub delta: f64,
    pub alpha: f64,
    pub paths: usize,
    pub estimate: f64,
    pub reference: Option<f64>,
    pub half_width: f64,
    /// Simulation wall time; `None` when timing is switched off.
    pub seconds: Option<f64>,
    pub cap_hits: usize,
}

impl StudyRow {
    /// `estimate - reference`.
    pub fn bias(&self) -> Option<f64> {
        self.reference.map(|r| self.estimate - r)
    }
}

/// Closed-form price when the model and contract have one.
pub fn exact_reference(cfg: &RunConfig) -> CliResult<Option<f64>> {
    match (&cfg.model, &cfg.contract) {
        (ModelSpec::Vasicek(p), ContractSpec::Caplet { payment }) => Ok(Some(
            vasicek_caplet_price(p, cfg.t0, cfg.t_star, *payment, cfg.strike)?,
        )),
        _ => Ok(None),
    }
}

fn build_contract(cfg: &RunConfig) -> CliResult<Contract> {
    Ok(match &cfg.contract {
        ContractSpec::Caplet { payment } => Contract::caplet(cfg.t_star, *payment, cfg.strike)?,
        ContractSpec::PayerSwaption {
            accrual_start,
            payment_dates,
        } => Contract::payer_swaption(
            cfg.t_star,
            *accrual_start,
            payment_dates.clone(),
            cfg.strike,
        )?,
    })
}

/// Runs one estimate at step `h` with the configured algorithm and step law.
pub fn run_at(cfg: &RunConfig, h: f64, reference: Option<f64>) -> CliResult<StudyRow> {
    run_with(cfg, cfg.algo, cfg.step_law, h, reference)
}

fn run_with(
    cfg: &RunConfig,
    algo: AlgorithmOrder,
    law: StepLaw,
    h: f64,
    reference: Option<f64>,
) -> CliResult<StudyRow> {
    let (delta, alpha) = law.delta(h, cfg.t0, cfg.maturity)?;
    let grid = build_grid_pair(
        cfg.t0,
        cfg.t_star,
        cfg.maturity,
        delta,
        h,
        algo.stencil_reach(),
    )?;
    let contract = build_contract(cfg)?;
    let start = Instant::now();
    let est = match &cfg.model {
        ModelSpec::Vasicek(p) => estimate(
            cfg,
            algo,
            &VasicekModel::with_origin(*p, cfg.t0)?,
            &grid,
            &contract,
        )?,
        ModelSpec::Proportional(p) => estimate(
            cfg,
            algo,
            &ProportionalModel::new(p.clone())?,
            &grid,
            &contract,
        )?,
    };
    let elapsed = start.elapsed().as_secs_f64();
    Ok(StudyRow {
        h,
        delta,
        alpha,
        paths: est.paths,
        estimate: est.mean,
        reference,
        half_width: est.half_width(CONFIDENCE),
        seconds: cfg.timing.then_some(elapsed),
        cap_hits: est.cap_hits,
    })
}

fn estimate<M: VolatilityModel>(
    cfg: &RunConfig,
    algo: AlgorithmOrder,
    model: &M,
    grid: &GridPair,
    contract: &Contract,
) -> CliResult<McEstimate> {
    let nodes = payment_nodes(grid, &contract.payment_dates)?;
    let sim =
        PathSimulator::new(algo, model, grid, nodes, cfg.noise)?.rough_discount(cfg.rough_discount);
    Ok(with_threads(cfg.threads, || {
        mc_price_simulator(&sim, contract, cfg.paths, cfg.seed)
    })?)
}

fn resolved_reference(cfg: &RunConfig) -> CliResult<Option<f64>> {
    match cfg.reference {
        Some(r) => Ok(Some(r)),
        None => exact_reference(cfg),
    }
}

/// A single estimate at the first configured step.
pub fn run_price(cfg: &RunConfig) -> CliResult<StudyRow> {
    let reference = resolved_reference(cfg)?;
    run_at(cfg, cfg.h[0], reference)
}

/// Estimates along a geometric ladder of at least three steps.
pub fn run_convergence_study(cfg: &RunConfig) -> CliResult<Vec<StudyRow>> {
    check_ladder(&cfg.h)?;
    let reference = resolved_reference(cfg)?;
    cfg.h.iter().map(|&h| run_at(cfg, h, reference)).collect()
}

/// A high-accuracy estimate with the Simpson algorithm at step `h`.
pub fn run_reference(cfg: &RunConfig, h: f64) -> CliResult<StudyRow> {
    run_with(cfg, AlgorithmOrder::Simpson4, StepLaw::FourthRoot, h, None)
}

/// Requires three or more decreasing steps with a constant ratio.
pub fn check_ladder(h: &[f64]) -> CliResult<()> {
    if h.len() < 3 {
        return Err(CliError::config(format!(
            "a convergence study needs at least three step sizes, got {}",
            h.len()
        )));
    }
    let ratio = h[0] / h[1];
    if ratio.is_nan() || ratio <= 1.0 {
        return Err(CliError::config("step sizes must decrease"));
    }
    for w in h.windows(2) {
        let r = w[0] / w[1];
        if (r - ratio).abs() > 1e-9 * ratio {
            return Err(CliError::config(format!(
                "step sizes must form a geometric ladder (ratios {ratio} and {r})"
            )));
        }
    }
    Ok(())
}

/// Least-squares slope of `ln |bias|` against `ln h`.
pub fn fitted_slope(rows: &[StudyRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| {
            r.bias()
                .filter(|b| *b != 0.0)
                .map(|b| (r.h.ln(), b.abs().ln()))
        })
        .collect::<Option<_>>()?;
    log_log_slope(&pts)
}

/// Ordinary least-squares slope through `(x, y)` points.
pub fn log_log_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Shortest representation that parses back to the same value.
fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn emit_csv<W: Write>(rows: &[StudyRow], out: W) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            fmt_f64(r.h),
            fmt_f64(r.delta),
            fmt_f64(r.alpha),
            r.paths.to_string(),
            fmt_f64(r.estimate),
            fmt_opt(r.reference),
            fmt_opt(r.bias()),
            fmt_f64(r.half_width),
            fmt_opt(r.seconds),
        ])?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: "<csv output>".into(),
        source,
    })?;
    Ok(())
}

/// Parses rows written by [`emit_csv`]; cap-hit counts are not stored and read back as zero.
pub fn read_csv<R: std::io::Read>(input: R) -> CliResult<Vec<StudyRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(CliError::config(format!(
            "unexpected csv header {header:?}"
        )));
    }
    let num = |s: &str| -> CliResult<f64> {
        s.parse()
            .map_err(|_| CliError::config(format!("bad csv number `{s}`")))
    };
    let opt = |s: &str| -> CliResult<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            num(s).map(Some)
        }
    };
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        rows.push(StudyRow {
            h: num(&rec[0])?,
            delta: num(&rec[1])?,
            alpha: num(&rec[2])?,
            paths: rec[3]
                .parse()
                .map_err(|_| CliError::config(format!("bad path count `{}`", &rec[3])))?,
            estimate: num(&rec[4])?,
            reference: opt(&rec[5])?,
            half_width: num(&rec[7])?,
            seconds: opt(&rec[8])?,
            cap_hits: 0,
        });
    }
    Ok(rows)
}

/// The cache file written by the `reference` command.
pub fn reference_file_text(cfg: &RunConfig, row: &StudyRow) -> String {
    format!(
        "# Simpson reference estimate\nmodel = {}\nh = {}\ndelta = {}\npaths = {}\nseed = {}\nnoise = {}\nreference = {}\nhalf_width_c2 = {}\n",
        cfg.model.name(),
        fmt_f64(row.h),
        fmt_f64(row.delta),
        row.paths,
        cfg.seed,
        cfg.noise.label(),
        fmt_f64(row.estimate),
        fmt_f64(row.half_width),
    )
}
