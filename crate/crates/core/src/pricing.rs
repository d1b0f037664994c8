//! Payoffs and the Monte Carlo estimator.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::GridPair;
use crate::model::VolatilityModel;
use crate::quadrature::AlgorithmOrder;
use crate::simulate::{derive_stream, payment_nodes, NoiseKind, PathOutcome, PathSimulator};

/// Paths per reduction leaf. Fixed so that the summation tree depends only on `L`.
pub const CHUNK_PATHS: usize = 2048;

/// Default half-width multiplier (about 95% confidence).
pub const DEFAULT_CONFIDENCE: u32 = 2;

/// Payoff as a function of the simulated bond prices `P(t*, s_j)`.
pub type BondPayoff = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum ContractKind {
    Caplet,
    /// Fixed-leg accrual starts at `accrual_start` (`s_k`).
    PayerSwaption {
        accrual_start: f64,
    },
    GenericBondPayoff(BondPayoff),
}

impl fmt::Debug for ContractKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Caplet => write!(f, "Caplet"),
            Self::PayerSwaption { accrual_start } => {
                write!(f, "PayerSwaption {{ accrual_start: {accrual_start} }}")
            }
            Self::GenericBondPayoff(_) => write!(f, "GenericBondPayoff(..)"),
        }
    }
}

/// A unit-nominal contract set at `set_date` with bond-price payoff at `t*`.
#[derive(Debug, Clone)]
pub struct Contract {
    pub kind: ContractKind,
    pub set_date: f64,
    pub payment_dates: Vec<f64>,
    pub strike: f64,
}

impl Contract {
    pub fn caplet(set_date: f64, payment: f64, strike: f64) -> Result<Self> {
        Self::new(ContractKind::Caplet, set_date, vec![payment], strike)
    }

    /// Payer swaption on fixed-leg dates `s_{k+1}..s_i`, accruing from `s_k`.
    pub fn payer_swaption(
        set_date: f64,
        accrual_start: f64,
        payment_dates: Vec<f64>,
        strike: f64,
    ) -> Result<Self> {
        if accrual_start < set_date {
            return Err(Error::InvalidParameter(format!(
                "swap accrual start {accrual_start} precedes set date {set_date}"
            )));
        }
        Self::new(
            ContractKind::PayerSwaption { accrual_start },
            set_date,
            payment_dates,
            strike,
        )
    }

    pub fn generic(set_date: f64, payment_dates: Vec<f64>, payoff: BondPayoff) -> Result<Self> {
        Self::new(
            ContractKind::GenericBondPayoff(payoff),
            set_date,
            payment_dates,
            0.0,
        )
    }

    fn new(
        kind: ContractKind,
        set_date: f64,
        payment_dates: Vec<f64>,
        strike: f64,
    ) -> Result<Self> {
        let first = *payment_dates
            .first()
            .ok_or_else(|| Error::InvalidParameter("contract has no payment dates".into()))?;
        if first <= set_date {
            return Err(Error::InvalidParameter(format!(
                "first payment {first} must follow the set date {set_date}"
            )));
        }
        if payment_dates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "payment dates must increase strictly".into(),
            ));
        }
        if matches!(kind, ContractKind::Caplet) && payment_dates.len() != 1 {
            return Err(Error::InvalidParameter(
                "a caplet has exactly one payment date".into(),
            ));
        }
        if !strike.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "strike {strike} is not finite"
            )));
        }
        Ok(Self {
            kind,
            set_date,
            payment_dates,
            strike,
        })
    }

    /// Undiscounted payoff at `t*` for one path.
    pub fn payoff(&self, outcome: &PathOutcome) -> f64 {
        self.payoff_from_integrals(&outcome.bond_integrals)
    }

    /// Payoff from the log-bond integrals `S_Z(t*, s_j)`, one per payment date.
    pub fn payoff_from_integrals(&self, integrals: &[f64]) -> f64 {
        match &self.kind {
            ContractKind::Caplet => caplet_value(
                integrals[0],
                self.strike,
                self.set_date,
                self.payment_dates[0],
            ),
            ContractKind::PayerSwaption { accrual_start } => {
                swaption_value(integrals, self.strike, *accrual_start, &self.payment_dates)
            }
            ContractKind::GenericBondPayoff(g) => {
                let bonds: Vec<f64> = integrals.iter().map(|s| (-s).exp()).collect();
                g(&bonds)
            }
        }
    }
}

/// `[1 - (1 + K (s - t*)) P(t*, s)]_+`.
pub fn caplet_payoff(outcome: &PathOutcome, strike: f64, set_date: f64, payment: f64) -> f64 {
    caplet_value(outcome.bond_integrals[0], strike, set_date, payment)
}

fn caplet_value(integral: f64, strike: f64, set_date: f64, payment: f64) -> f64 {
    (1.0 - (1.0 + strike * (payment - set_date)) * (-integral).exp()).max(0.0)
}

/// `[1 - P(t*, s_i) - K sum_j (s_j - s_{j-1}) P(t*, s_j)]_+` with `s_k = accrual_start`.
pub fn swaption_payoff(
    outcome: &PathOutcome,
    strike: f64,
    accrual_start: f64,
    schedule: &[f64],
) -> f64 {
    swaption_value(&outcome.bond_integrals, strike, accrual_start, schedule)
}

fn swaption_value(integrals: &[f64], strike: f64, accrual_start: f64, schedule: &[f64]) -> f64 {
    let mut prev = accrual_start;
    let mut fixed = 0.0;
    for (s, sz) in schedule.iter().zip(integrals) {
        fixed += (s - prev) * (-sz).exp();
        prev = *s;
    }
    let last = (-integrals[schedule.len() - 1]).exp();
    (1.0 - last - strike * fixed).max(0.0)
}

/// `c * std_err`.
pub fn mc_half_width(std_err: f64, c: u32) -> f64 {
    c as f64 * std_err
}

/// Monte Carlo price with its statistical error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(L)`.
    pub std_err: f64,
    pub paths: usize,
    /// Paths on which a state-dependent volatility hit its cap.
    pub cap_hits: usize,
}

impl McEstimate {
    pub fn half_width(&self, c: u32) -> f64 {
        mc_half_width(self.std_err, c)
    }
}

/// Count, mean and centred sum of squares; merged with Chan's update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
    cap_hits: usize,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(a: Self, b: Self) -> Self {
        if a.n == 0 {
            return b;
        }
        if b.n == 0 {
            return a;
        }
        let n = a.n + b.n;
        let d = b.mean - a.mean;
        let wb = b.n as f64 / n as f64;
        Self {
            n,
            mean: a.mean + d * wb,
            m2: a.m2 + b.m2 + d * d * a.n as f64 * wb,
            cap_hits: a.cap_hits + b.cap_hits,
        }
    }
}

/// Pairwise reduction whose tree depends only on `parts.len()`.
fn tree_reduce(parts: &[Moments]) -> Moments {
    match parts.len() {
        0 => Moments::default(),
        1 => parts[0],
        n => {
            let (l, r) = parts.split_at(n / 2);
            Moments::merge(tree_reduce(l), tree_reduce(r))
        }
    }
}

/// Discounted-payoff Monte Carlo estimate on the current rayon pool.
///
/// Path `l` uses `derive_stream(seed, l)`, and paths are reduced in fixed
/// chunks of [`CHUNK_PATHS`], so the result does not depend on the worker count.
#[allow(clippy::too_many_arguments)]
pub fn mc_price<M: VolatilityModel + ?Sized>(
    order: AlgorithmOrder,
    model: &M,
    grid: &GridPair,
    contract: &Contract,
    paths: usize,
    seed: u64,
    kind: NoiseKind,
) -> Result<McEstimate> {
    if paths < 2 {
        return Err(Error::InsufficientPaths(paths));
    }
    if (contract.set_date - grid.time().t_star()).abs() > 1e-12 * contract.set_date.abs().max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "contract set date {} differs from the time grid end {}",
            contract.set_date,
            grid.time().t_star()
        )));
    }
    let nodes = payment_nodes(grid, &contract.payment_dates)?;
    let sim = PathSimulator::new(order, model, grid, nodes, kind)?;
    mc_price_simulator(&sim, contract, paths, seed)
}

/// Monte Carlo estimate with a prepared simulator, e.g. one using the rough
/// discount diagnostic. Its payment nodes must be the contract's.
pub fn mc_price_simulator<M: VolatilityModel + ?Sized>(
    sim: &PathSimulator<'_, M>,
    contract: &Contract,
    paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    if paths < 2 {
        return Err(Error::InsufficientPaths(paths));
    }
    let grid = sim.grid();
    if (contract.set_date - grid.time().t_star()).abs() > 1e-12 * contract.set_date.abs().max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "contract set date {} differs from the time grid end {}",
            contract.set_date,
            grid.time().t_star()
        )));
    }
    if payment_nodes(grid, &contract.payment_dates)? != sim.end_nodes() {
        return Err(Error::InvalidParameter(
            "simulator payment nodes differ from the contract's".into(),
        ));
    }
    let kind = sim.kind();
    let chunks = paths.div_ceil(CHUNK_PATHS);
    let parts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut scratch = sim.scratch();
            let mut acc = Moments::default();
            for l in c * CHUNK_PATHS..((c + 1) * CHUNK_PATHS).min(paths) {
                let mut rng = derive_stream(seed, l as u64);
                let path = sim.run_summary(|_, xi| kind.fill(&mut rng, xi), &mut scratch)?;
                acc.push(
                    (-path.y_m).exp() * contract.payoff_from_integrals(scratch.bond_integrals()),
                );
                acc.cap_hits += path.cap_hit as usize;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let total = tree_reduce(&parts);
    let var = total.m2 / (total.n - 1) as f64;
    Ok(McEstimate {
        mean: total.mean,
        std_err: (var.max(0.0) / total.n as f64).sqrt(),
        paths: total.n,
        cap_hits: total.cap_hits,
    })
}

/// Runs `f` on a dedicated pool of `threads` workers (`0` means the rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(f)
}

/// [`mc_price`] on a dedicated pool of `threads` workers (`0` means the rayon default).
#[allow(clippy::too_many_arguments)]
pub fn mc_price_with_threads<M: VolatilityModel + ?Sized>(
    order: AlgorithmOrder,
    model: &M,
    grid: &GridPair,
    contract: &Contract,
    paths: usize,
    seed: u64,
    kind: NoiseKind,
    threads: usize,
) -> Result<McEstimate> {
    with_threads(threads, || {
        mc_price(order, model, grid, contract, paths, seed, kind)
    })
}
