//! Path generation: Euler stepping of the forward rates and of the discount integral.

use rand::{RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::grid::GridPair;
use crate::model::VolatilityModel;
use crate::quadrature::{
    discount_increment, discount_weights, integrated_drift_row, rough_discount_weights,
    terminal_bond_integral, AlgorithmOrder, DiscountWeights,
};

/// Law of the per-step noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    /// `+1` or `-1` with probability one half each.
    WeakBernoulli,
    /// Standard normal.
    Gaussian,
}

impl NoiseKind {
    pub fn from_label(label: &str) -> Option<Self> {
        match label.trim() {
            "weak" | "bernoulli" => Some(Self::WeakBernoulli),
            "gaussian" | "normal" => Some(Self::Gaussian),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::WeakBernoulli => "weak",
            Self::Gaussian => "gaussian",
        }
    }

    #[inline]
    pub fn draw<R: RngCore + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Self::WeakBernoulli => {
                if rng.next_u32() >> 31 == 1 {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::Gaussian => StandardNormal.sample(rng),
        }
    }

    pub fn fill<R: RngCore + ?Sized>(self, rng: &mut R, out: &mut [f64]) {
        for x in out {
            *x = self.draw(rng);
        }
    }
}

/// Per-path random stream.
pub type PathStream = Xoshiro256PlusPlus;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream determined only by `(seed, path_index)`.
///
/// The pair is hashed to a 64-bit key, injective in `path_index` for a fixed
/// seed, which the generator expands into its 256-bit state.
pub fn derive_stream(seed: u64, path_index: u64) -> PathStream {
    Xoshiro256PlusPlus::seed_from_u64(splitmix64(seed ^ splitmix64(path_index)))
}

/// Forward rates `f_k^i` for every node `i = 0..=N'` at time index `k`.
///
/// Entries below `frozen_below` keep the value they had when their node expired.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardState {
    k: usize,
    frozen_below: usize,
    rates: Vec<f64>,
}

impl ForwardState {
    /// The initial curve sampled on the maturity grid.
    pub fn initial<M: VolatilityModel + ?Sized>(model: &M, grid: &GridPair) -> Self {
        let rates = (0..=grid.n_prime())
            .map(|i| model.initial_forward(grid.maturity().node(i)))
            .collect();
        Self {
            k: 0,
            frozen_below: grid.ell(0),
            rates,
        }
    }

    pub fn from_parts(k: usize, frozen_below: usize, rates: Vec<f64>) -> Self {
        Self {
            k,
            frozen_below,
            rates,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn frozen_below(&self) -> usize {
        self.frozen_below
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn into_rates(self) -> Vec<f64> {
        self.rates
    }
}

/// Running discount integral `Y_k`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PathAccumulator {
    pub y_bar: f64,
    pub k: usize,
}

/// What one simulated path contributes to a price.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome {
    /// `Y_M`, the integrated short rate up to `t*`.
    pub y_m: f64,
    /// `S_Z(t*, s)` for each requested payment date, in request order.
    pub bond_integrals: Vec<f64>,
    /// `f_M` on every node, when requested.
    pub terminal_rates: Option<Vec<f64>>,
    /// Some state-dependent volatility hit the model's cap on this path.
    pub cap_hit: bool,
}

impl PathOutcome {
    /// Simulated zero-coupon bond `P(t*, s_j)`.
    pub fn bond(&self, j: usize) -> f64 {
        (-self.bond_integrals[j]).exp()
    }

    pub fn discount(&self) -> f64 {
        (-self.y_m).exp()
    }
}

fn check_noise(noise: &[f64], d: usize, kind: NoiseKind) -> Result<()> {
    if noise.len() != d {
        return Err(Error::InvalidParameter(format!(
            "expected {d} noise draws, got {}",
            noise.len()
        )));
    }
    if kind == NoiseKind::WeakBernoulli && noise.iter().any(|&x| x != 1.0 && x != -1.0) {
        return Err(Error::InvalidParameter(
            "weak noise must be +1 or -1".into(),
        ));
    }
    Ok(())
}

/// One Euler step from `t_k` to `t_{k+1}`.
pub fn euler_step(
    order: AlgorithmOrder,
    state: &ForwardState,
    acc: &PathAccumulator,
    model: &dyn VolatilityModel,
    grid: &GridPair,
    noise: &[f64],
    kind: NoiseKind,
) -> Result<(ForwardState, PathAccumulator)> {
    let k = state.k;
    if k >= grid.m() {
        return Err(Error::InvalidParameter(format!("step {k} is past t*")));
    }
    let d = model.factors();
    check_noise(noise, d, kind)?;
    let width = grid.n_prime() + 1;
    if state.rates.len() != width {
        return Err(Error::StencilOutOfRange {
            needed: grid.n_prime(),
            available: state.rates.len().saturating_sub(1),
        });
    }
    let (l0, l1) = (grid.ell(k), grid.ell(k + 1));
    let t = grid.time().node(k);
    let sqrt_h = grid.h().sqrt();
    let mut next = state.rates.clone();
    let mut sigma = vec![0.0; width];
    let mut drift = vec![0.0; width];
    for (j, &xi) in noise.iter().enumerate() {
        for i in l0..width {
            sigma[i] = model.sigma(j, t, grid.maturity().node(i), state.rates[i]);
        }
        integrated_drift_row(order, k, grid, &sigma, &mut drift)?;
        for i in l1..width {
            next[i] += sigma[i] * (drift[i] + sqrt_h * xi);
        }
    }
    let next = ForwardState {
        k: k + 1,
        frozen_below: l1,
        rates: next,
    };
    let a_y = discount_increment(order, k, state, &next, grid)?;
    Ok((
        next,
        PathAccumulator {
            y_bar: acc.y_bar + a_y,
            k: k + 1,
        },
    ))
}

/// Reusable per-worker buffers for [`PathSimulator`].
#[derive(Debug, Clone)]
pub struct PathScratch {
    prev: ForwardState,
    next: ForwardState,
    sigma: Vec<f64>,
    drift: Vec<f64>,
    noise: Vec<f64>,
    bonds: Vec<f64>,
}

impl PathScratch {
    /// `S_Z` values of the last path run through [`PathSimulator::run_summary`].
    pub fn bond_integrals(&self) -> &[f64] {
        &self.bonds
    }
}

/// Scalar part of a path outcome; the bond integrals stay in the scratch buffers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSummary {
    pub y_m: f64,
    pub cap_hit: bool,
}

/// Tabulated stepping for many paths on one configuration.
///
/// Volatility loadings are tabulated per `(k, j, i)`. For state-independent
/// models the drift rows are tabulated too, so a path step is one fused
/// multiply-add per live node and factor.
pub struct PathSimulator<'a, M: VolatilityModel + ?Sized = dyn VolatilityModel> {
    order: AlgorithmOrder,
    model: &'a M,
    grid: &'a GridPair,
    kind: NoiseKind,
    end_nodes: Vec<usize>,
    keep_terminal: bool,
    factors: usize,
    width: usize,
    initial: Vec<f64>,
    /// Volatility loadings, indexed `(k * d + j) * width + i`.
    loading: Vec<f64>,
    /// State-independent case: `sum_j sigma_ij S_ij`, indexed `k * width + i`.
    fixed_drift: Option<Vec<f64>>,
    discount: Vec<DiscountWeights>,
    /// `S_Z` to each payment node as weights on the terminal rates.
    terminal: Vec<Vec<(usize, f64)>>,
    cap: Option<f64>,
}

impl<'a, M: VolatilityModel + ?Sized> PathSimulator<'a, M> {
    /// `end_nodes` are the maturity-grid indices of the payment dates.
    pub fn new(
        order: AlgorithmOrder,
        model: &'a M,
        grid: &'a GridPair,
        end_nodes: Vec<usize>,
        kind: NoiseKind,
    ) -> Result<Self> {
        let rho_m = grid.rho(grid.m());
        for &e in &end_nodes {
            if e < rho_m || e > grid.n_prime() {
                return Err(Error::InvalidParameter(format!(
                    "payment node {e} outside ({}, {}]",
                    rho_m - 1,
                    grid.n_prime()
                )));
            }
        }
        let d = model.factors();
        let width = grid.n_prime() + 1;
        let m = grid.m();
        let mut loading = vec![0.0; m * d * width];
        for k in 0..m {
            let t = grid.time().node(k);
            for j in 0..d {
                let row = &mut loading[(k * d + j) * width..(k * d + j + 1) * width];
                for (i, v) in row.iter_mut().enumerate().skip(grid.ell(k)) {
                    *v = model.loading(j, t, grid.maturity().node(i));
                }
            }
        }
        let initial = ForwardState::initial(model, grid).into_rates();
        let fixed_drift = if model.state_independent() {
            let mut table = vec![0.0; m * width];
            let mut sigma = vec![0.0; width];
            let mut s = vec![0.0; width];
            for k in 0..m {
                let t = grid.time().node(k);
                for j in 0..d {
                    for i in grid.ell(k)..width {
                        sigma[i] = model.sigma(j, t, grid.maturity().node(i), 0.0);
                    }
                    integrated_drift_row(order, k, grid, &sigma, &mut s)?;
                    for i in grid.ell(k + 1)..width {
                        table[k * width + i] += sigma[i] * s[i];
                    }
                }
            }
            Some(table)
        } else {
            None
        };
        let discount = (0..m)
            .map(|k| discount_weights(order, k, grid))
            .collect::<Result<Vec<_>>>()?;
        // The bond integral is linear in the rates: read its weights off unit vectors.
        let mut unit = vec![0.0; width];
        let mut terminal = vec![Vec::new(); end_nodes.len()];
        for i in 0..width {
            unit[i] = 1.0;
            for (row, &e) in terminal.iter_mut().zip(&end_nodes) {
                let w = terminal_bond_integral(order, &unit, grid, e)?;
                if w != 0.0 {
                    row.push((i, w));
                }
            }
            unit[i] = 0.0;
        }
        Ok(Self {
            order,
            model,
            grid,
            kind,
            end_nodes,
            keep_terminal: false,
            factors: d,
            width,
            initial,
            loading,
            fixed_drift,
            discount,
            terminal,
            cap: model.state_cap(),
        })
    }

    /// Swap in the non-convergent discount shortcut `h * f_k(T_ell(t_k))`.
    /// For diagnostics only.
    pub fn rough_discount(mut self, on: bool) -> Self {
        if on {
            self.discount = (0..self.grid.m())
                .map(|k| rough_discount_weights(k, self.grid))
                .collect();
        }
        self
    }

    /// Also return `f_M` in each outcome.
    pub fn keep_terminal_rates(mut self, keep: bool) -> Self {
        self.keep_terminal = keep;
        self
    }

    pub fn end_nodes(&self) -> &[usize] {
        &self.end_nodes
    }

    pub fn factors(&self) -> usize {
        self.factors
    }

    pub fn grid(&self) -> &GridPair {
        self.grid
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn scratch(&self) -> PathScratch {
        let state = ForwardState::from_parts(0, 0, self.initial.clone());
        PathScratch {
            prev: state.clone(),
            next: state,
            sigma: vec![0.0; self.width],
            drift: vec![0.0; self.width],
            noise: vec![0.0; self.factors],
            bonds: vec![0.0; self.end_nodes.len()],
        }
    }

    /// Simulates one path drawing noise from `rng`.
    pub fn run<R: RngCore + ?Sized>(
        &self,
        rng: &mut R,
        scratch: &mut PathScratch,
    ) -> Result<PathOutcome> {
        let kind = self.kind;
        self.run_with_noise(|_, xi| kind.fill(rng, xi), scratch)
    }

    /// Simulates one path with caller-supplied noise: `noise(k, xi)` fills the
    /// `d` draws used on step `k -> k + 1`.
    pub fn run_with_noise(
        &self,
        noise: impl FnMut(usize, &mut [f64]),
        scratch: &mut PathScratch,
    ) -> Result<PathOutcome> {
        let summary = self.run_summary(noise, scratch)?;
        Ok(PathOutcome {
            y_m: summary.y_m,
            bond_integrals: scratch.bonds.clone(),
            terminal_rates: self.keep_terminal.then(|| scratch.prev.rates.clone()),
            cap_hit: summary.cap_hit,
        })
    }

    /// Allocation-free form of [`Self::run_with_noise`]: the bond integrals are
    /// left in `scratch`, and the terminal rates are never copied out.
    pub fn run_summary(
        &self,
        mut noise: impl FnMut(usize, &mut [f64]),
        scratch: &mut PathScratch,
    ) -> Result<PathSummary> {
        let grid = self.grid;
        let width = self.width;
        let d = self.factors;
        let PathScratch {
            prev,
            next,
            sigma,
            drift,
            noise: xi,
            bonds,
        } = scratch;
        prev.rates.copy_from_slice(&self.initial);
        prev.k = 0;
        prev.frozen_below = grid.ell(0);
        next.rates.copy_from_slice(&self.initial);
        let sqrt_h = grid.h().sqrt();
        let mut y = 0.0;
        let mut cap_hit = false;
        for k in 0..grid.m() {
            let (l0, l1) = (grid.ell(k), grid.ell(k + 1));
            noise(k, xi);
            // Nodes frozen on this step keep their value in both buffers.
            next.rates[l0..l1].copy_from_slice(&prev.rates[l0..l1]);
            match &self.fixed_drift {
                Some(table) => {
                    let fixed = &table[k * width..(k + 1) * width];
                    let load = &self.loading[k * d * width..(k * d + 1) * width];
                    let scaled = sqrt_h * xi[0];
                    for i in l1..width {
                        next.rates[i] = prev.rates[i] + fixed[i] + load[i] * scaled;
                    }
                    for (j, &x) in xi.iter().enumerate().skip(1) {
                        let load = &self.loading[(k * d + j) * width..(k * d + j + 1) * width];
                        let scaled = sqrt_h * x;
                        for i in l1..width {
                            next.rates[i] += load[i] * scaled;
                        }
                    }
                }
                None => {
                    next.rates[l1..].copy_from_slice(&prev.rates[l1..]);
                    if let Some(cap) = self.cap {
                        cap_hit |= prev.rates[l0..].iter().any(|&f| f > cap);
                    }
                    for (j, &x) in xi.iter().enumerate() {
                        let load = &self.loading[(k * d + j) * width..(k * d + j + 1) * width];
                        for i in l0..width {
                            sigma[i] = load[i] * self.model.state_scale(j, prev.rates[i]);
                        }
                        integrated_drift_row(self.order, k, grid, sigma, drift)?;
                        for i in l1..width {
                            next.rates[i] += sigma[i] * (drift[i] + sqrt_h * x);
                        }
                    }
                }
            }
            next.k = k + 1;
            next.frozen_below = l1;
            y += self.discount[k].apply(&prev.rates, &next.rates);
            std::mem::swap(prev, next);
        }
        for (b, row) in bonds.iter_mut().zip(&self.terminal) {
            *b = row.iter().map(|&(i, w)| w * prev.rates[i]).sum();
        }
        if !y.is_finite() || bonds.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numerical("non-finite path outcome".into()));
        }
        Ok(PathSummary { y_m: y, cap_hit })
    }
}

/// Maturity-grid indices of `dates`, each of which must be a grid node after `t*`.
pub fn payment_nodes(grid: &GridPair, dates: &[f64]) -> Result<Vec<usize>> {
    dates
        .iter()
        .map(|&s| {
            let i = grid.maturity().index_of(s).ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "payment date {s} is not on the maturity grid (delta = {})",
                    grid.delta()
                ))
            })?;
            if i < grid.rho(grid.m()) || s <= grid.time().t_star() {
                return Err(Error::InvalidParameter(format!(
                    "payment date {s} must come after t* = {}",
                    grid.time().t_star()
                )));
            }
            Ok(i)
        })
        .collect()
}

/// Simulates one path from the initial curve to `t*`.
pub fn simulate_path<M: VolatilityModel + ?Sized, R: RngCore + ?Sized>(
    order: AlgorithmOrder,
    model: &M,
    grid: &GridPair,
    contract_dates: &[f64],
    stream: &mut R,
    kind: NoiseKind,
) -> Result<PathOutcome> {
    let nodes = payment_nodes(grid, contract_dates)?;
    let sim = PathSimulator::new(order, model, grid, nodes, kind)?;
    let mut scratch = sim.scratch();
    sim.run(stream, &mut scratch)
}
