//! Maturity-direction quadratures.
//!
//! Three rule families share one interface:
//!
//! | order      | drift rule                       | short rate        | maturity order |
//! |------------|----------------------------------|-------------------|----------------|
//! | `Rect1`    | composite rectangle              | piecewise const   | 1              |
//! | `Trap2`    | rectangle edge + trapezoid       | linear            | 2              |
//! | `Simpson4` | 3-node edge rule + Simpson (3/8) | cubic Lagrange    | 4              |
//!
//! Everything here is a pure function of the grid and of rate/volatility rows
//! indexed by maturity node.
//!
//! On a step `[t_k, t_{k+1}]` the stochastic factors are frozen at `t_k`. If
//! no maturity node lies in `(t_k, t_{k+1}]` the drift quadrature is the left
//! rectangle `h * S_I(t_k, T_i)`. If a node `T_l` is crossed the step is split
//! at `T_l`: on `[t_k, T_l]` the polynomial weights are integrated exactly in
//! `s`, and on `[T_l, t_{k+1}]` the rule is evaluated at `s = T_l`. The
//! discount increment integrates the short-rate interpolation weights exactly
//! on each piece, reading the post-step rates on the right piece.

use crate::error::{Error, Result};
use crate::grid::{GridPair, MaturityGrid};
use crate::simulate::ForwardState;

/// The three algorithm orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlgorithmOrder {
    /// Rectangle rules, `O(delta + h)`.
    Rect1,
    /// Trapezoid rules, `O(delta^2 + h)`.
    Trap2,
    /// Simpson rules, `O(delta^4 + h)`.
    Simpson4,
}

impl AlgorithmOrder {
    pub const ALL: [AlgorithmOrder; 3] = [Self::Rect1, Self::Trap2, Self::Simpson4];

    /// Order of the maturity quadrature.
    pub fn p(self) -> u32 {
        match self {
            Self::Rect1 => 1,
            Self::Trap2 => 2,
            Self::Simpson4 => 4,
        }
    }

    /// Number of nodes past `ell(t)` used by the short-rate interpolant.
    pub fn theta(self) -> usize {
        match self {
            Self::Rect1 => 0,
            Self::Trap2 => 1,
            Self::Simpson4 => 3,
        }
    }

    /// Lookahead past `ell(t*)` that the maturity grid must provide.
    pub fn stencil_reach(self) -> usize {
        match self {
            Self::Rect1 | Self::Trap2 => 1,
            Self::Simpson4 => 3,
        }
    }

    /// Label used on the command line: `5.1`, `5.2`, `5.3`.
    pub fn label(self) -> &'static str {
        match self {
            Self::Rect1 => "5.1",
            Self::Trap2 => "5.2",
            Self::Simpson4 => "5.3",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        match label.trim() {
            "5.1" | "rect" | "rectangle" => Some(Self::Rect1),
            "5.2" | "trap" | "trapezoid" => Some(Self::Trap2),
            "5.3" | "simpson" => Some(Self::Simpson4),
            _ => None,
        }
    }
}

/// Which integral the Simpson edge rule approximates: `int_s^{T_target}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeTarget {
    Ell,
    Rho,
    RhoPlusOne,
}

impl EdgeTarget {
    /// `target - rho(s)`.
    fn offset(self) -> f64 {
        match self {
            Self::Ell => -1.0,
            Self::Rho => 0.0,
            Self::RhoPlusOne => 1.0,
        }
    }

    fn from_offset(m: isize) -> Option<Self> {
        match m {
            -1 => Some(Self::Ell),
            0 => Some(Self::Rho),
            1 => Some(Self::RhoPlusOne),
            _ => None,
        }
    }

    /// Coefficients of `1, x, x^2` for each of `beta1, beta2, beta3`,
    /// `x = (T_rho(s) - s) / delta`.
    fn coefficients(self) -> [[f64; 3]; 3] {
        match self {
            Self::Ell => [
                [5.0 / 12.0, 5.0 / 12.0, 1.0 / 6.0],
                [2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0],
                [-1.0 / 12.0, -1.0 / 12.0, 1.0 / 6.0],
            ],
            Self::Rho => [
                [0.0, 1.0 / 4.0, 1.0 / 6.0],
                [1.0, 0.0, -1.0 / 3.0],
                [0.0, -1.0 / 4.0, 1.0 / 6.0],
            ],
            Self::RhoPlusOne => [
                [-1.0 / 12.0, 1.0 / 12.0, 1.0 / 6.0],
                [2.0 / 3.0, 1.0 / 3.0, -1.0 / 3.0],
                [5.0 / 12.0, -5.0 / 12.0, 1.0 / 6.0],
            ],
        }
    }

    fn betas(self, x: f64) -> [f64; 3] {
        self.coefficients()
            .map(|[c0, c1, c2]| c0 + x * (c1 + x * c2))
    }

    /// `int_{x_lo}^{x_hi} (offset + x) beta_j(x) dx` for each `j`.
    fn weighted_integrals(self, x_lo: f64, x_hi: f64) -> [f64; 3] {
        let m = self.offset();
        let pw = |n: i32| (x_hi.powi(n) - x_lo.powi(n)) / n as f64;
        let (x1, x2, x3, x4) = (pw(1), pw(2), pw(3), pw(4));
        self.coefficients()
            .map(|[c0, c1, c2]| m * c0 * x1 + (m * c1 + c0) * x2 + (m * c2 + c1) * x3 + c2 * x4)
    }
}

/// Weights of the three-node edge rule on nodes `ell(s), rho(s), rho(s) + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimpsonEdgeWeights {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub target: EdgeTarget,
}

impl SimpsonEdgeWeights {
    pub fn as_array(&self) -> [f64; 3] {
        [self.beta1, self.beta2, self.beta3]
    }
}

/// Edge weights at time `s` for the integral `int_s^{T_target}`.
pub fn simpson_edge_weights(
    s: f64,
    grid: &MaturityGrid,
    target: EdgeTarget,
) -> Result<SimpsonEdgeWeights> {
    let rho = grid.rho(s)?;
    let x = (grid.node(rho) - s) / grid.delta();
    let [beta1, beta2, beta3] = target.betas(x);
    Ok(SimpsonEdgeWeights {
        beta1,
        beta2,
        beta3,
        target,
    })
}

#[inline]
fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn require(values: &[f64], needed: usize) -> Result<()> {
    if needed >= values.len() {
        return Err(Error::StencilOutOfRange {
            needed,
            available: values.len().saturating_sub(1),
        });
    }
    Ok(())
}

/// Composite Simpson on nodes `from..=to` (`to - from` even), otherwise
/// Simpson up to `to - 3` followed by the 3/8 rule on the last four nodes.
/// Returns zero for an empty range; `to - from == 1` has no rule in this family.
pub fn composite_simpson(values: &[f64], from: usize, to: usize, delta: f64) -> f64 {
    debug_assert!(to >= from && to - from != 1);
    let span = to - from;
    if span.is_multiple_of(2) {
        let half = span / 2;
        let mut acc = values[from] + values[to];
        for l in 1..=half {
            acc += 4.0 * values[from + 2 * l - 1];
        }
        for l in 1..half {
            acc += 2.0 * values[from + 2 * l];
        }
        if span == 0 {
            0.0
        } else {
            acc * delta / 3.0
        }
    } else {
        let head = composite_simpson(values, from, to - 3, delta);
        head + 3.0 * delta / 8.0
            * (values[to - 3] + 3.0 * values[to - 2] + 3.0 * values[to - 1] + values[to])
    }
}

/// `S_I(s, T_i)` for the Simpson family, with `b = ell(s)` and `x = (T_{b+1} - s) / delta`.
fn simpson_point(b: usize, x: f64, i: usize, sigma: &[f64], delta: f64) -> f64 {
    let st = [sigma[b], sigma[b + 1], sigma[b + 2]];
    match EdgeTarget::from_offset(i as isize - b as isize - 1) {
        Some(t) => delta * (t.offset() + x) * dot3(t.betas(x), st),
        None => {
            delta * x * dot3(EdgeTarget::Rho.betas(x), st)
                + composite_simpson(sigma, b + 1, i, delta)
        }
    }
}

/// `int S_I(s, T_i) ds` over the part of `[T_b, T_{b+1})` where `x in [x_lo, x_hi]`.
fn simpson_integrated(b: usize, x_lo: f64, x_hi: f64, i: usize, sigma: &[f64], delta: f64) -> f64 {
    let st = [sigma[b], sigma[b + 1], sigma[b + 2]];
    let d2 = delta * delta;
    match EdgeTarget::from_offset(i as isize - b as isize - 1) {
        Some(t) => d2 * dot3(t.weighted_integrals(x_lo, x_hi), st),
        None => {
            d2 * dot3(EdgeTarget::Rho.weighted_integrals(x_lo, x_hi), st)
                + delta * (x_hi - x_lo) * composite_simpson(sigma, b + 1, i, delta)
        }
    }
}

/// Time-integrated drift quadrature `int_{t_k}^{t_{k+1}} S_I(s, T_i) ds` for one
/// maturity node, with `sigma_row[m]` the volatility at node `m` frozen at `t_k`.
///
/// Requires `ell(t_{k+1}) <= i`. `sigma_row` must cover every node the rule reads.
pub fn integrated_drift(
    order: AlgorithmOrder,
    k: usize,
    i: usize,
    grid: &GridPair,
    sigma_row: &[f64],
) -> Result<f64> {
    let (l0, l1) = (grid.ell(k), grid.ell(k + 1));
    if i < l1 {
        return Err(Error::InvalidParameter(format!(
            "node {i} expired before step {k} (ell = {l1})"
        )));
    }
    let h = grid.h();
    let delta = grid.delta();
    let lead = grid.gap(l1, k);
    let rho = l1 + 1;
    match order {
        AlgorithmOrder::Rect1 => {
            require(sigma_row, i)?;
            let at_ell = h * lead * sigma_row[l1];
            if i == l1 {
                return Ok(at_ell);
            }
            let at_rho = if lead < 0.0 {
                h * grid.gap(rho, k) * sigma_row[rho]
            } else {
                at_ell + h * delta * sigma_row[rho]
            };
            let tail: f64 = (rho + 1..=i).map(|m| sigma_row[m]).sum();
            Ok(at_rho + h * delta * tail)
        }
        AlgorithmOrder::Trap2 => {
            require(sigma_row, i.max(rho))?;
            if i == l1 {
                return Ok(h * lead * sigma_row[l1]);
            }
            let at_rho = if lead <= 0.0 {
                h * grid.gap(rho, k) * sigma_row[rho]
            } else {
                lead * grid.gap(rho, k) / 2.0 * sigma_row[l1]
                    - (lead - 2.0 * h) * delta / 2.0 * sigma_row[rho]
            };
            if i == rho {
                return Ok(at_rho);
            }
            let inner: f64 = (rho + 1..i).map(|m| sigma_row[m]).sum();
            Ok(at_rho + h * delta / 2.0 * (sigma_row[rho] + 2.0 * inner + sigma_row[i]))
        }
        AlgorithmOrder::Simpson4 => {
            if l1 == l0 {
                require(sigma_row, i.max(l0 + 2))?;
                let x = grid.gap(l0 + 1, k) / delta;
                Ok(h * simpson_point(l0, x, i, sigma_row, delta))
            } else {
                require(sigma_row, i.max(l1 + 2))?;
                let left = simpson_integrated(l0, 0.0, lead / delta, i, sigma_row, delta);
                let right = (h - lead) * simpson_point(l1, 1.0, i, sigma_row, delta);
                Ok(left + right)
            }
        }
    }
}

/// Row form of [`integrated_drift`]: fills `out[i]` for `i = ell(t_{k+1})..=N'`
/// in a single pass.
pub fn integrated_drift_row(
    order: AlgorithmOrder,
    k: usize,
    grid: &GridPair,
    sigma_row: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let n_prime = grid.n_prime();
    require(sigma_row, n_prime)?;
    require(out, n_prime)?;
    let (l0, l1) = (grid.ell(k), grid.ell(k + 1));
    let h = grid.h();
    let delta = grid.delta();
    let lead = grid.gap(l1, k);
    let rho = l1 + 1;
    match order {
        AlgorithmOrder::Rect1 => {
            let at_ell = h * lead * sigma_row[l1];
            out[l1] = at_ell;
            if rho > n_prime {
                return Ok(());
            }
            let mut acc = if lead < 0.0 {
                h * grid.gap(rho, k) * sigma_row[rho]
            } else {
                at_ell + h * delta * sigma_row[rho]
            };
            out[rho] = acc;
            let w = h * delta;
            for m in rho + 1..=n_prime {
                acc += w * sigma_row[m];
                out[m] = acc;
            }
        }
        AlgorithmOrder::Trap2 => {
            out[l1] = h * lead * sigma_row[l1];
            let mut acc = if lead <= 0.0 {
                h * grid.gap(rho, k) * sigma_row[rho]
            } else {
                lead * grid.gap(rho, k) / 2.0 * sigma_row[l1]
                    - (lead - 2.0 * h) * delta / 2.0 * sigma_row[rho]
            };
            out[rho] = acc;
            let w = h * delta / 2.0;
            for m in rho + 1..=n_prime {
                acc += w * (sigma_row[m - 1] + sigma_row[m]);
                out[m] = acc;
            }
        }
        AlgorithmOrder::Simpson4 => {
            if l1 == l0 {
                let x = grid.gap(l0 + 1, k) / delta;
                let st = [sigma_row[l0], sigma_row[l0 + 1], sigma_row[l0 + 2]];
                let rho_part = delta * x * dot3(EdgeTarget::Rho.betas(x), st);
                for (m, t) in [
                    (l0, EdgeTarget::Ell),
                    (l0 + 1, EdgeTarget::Rho),
                    (l0 + 2, EdgeTarget::RhoPlusOne),
                ] {
                    out[m] = h * delta * (t.offset() + x) * dot3(t.betas(x), st);
                }
                composite_row(sigma_row, l0 + 1, delta, out);
                for m in l0 + 3..=n_prime {
                    out[m] = h * (rho_part + out[m]);
                }
            } else {
                let x_left = lead / delta;
                let width_right = h - lead;
                let d2 = delta * delta;
                let left_st = [sigma_row[l0], sigma_row[l0 + 1], sigma_row[l0 + 2]];
                let right_st = [sigma_row[l1], sigma_row[l1 + 1], sigma_row[l1 + 2]];
                // Left piece has base l0, so node l1 is rho(s); the right piece
                // is evaluated at s = T_{l1}, where node l1 + 1 is rho(s).
                let left_rho = d2 * dot3(EdgeTarget::Rho.weighted_integrals(0.0, x_left), left_st);
                let right_rho = delta * dot3(EdgeTarget::Rho.betas(1.0), right_st);
                out[l1] = left_rho;
                out[l1 + 1] =
                    d2 * dot3(
                        EdgeTarget::RhoPlusOne.weighted_integrals(0.0, x_left),
                        left_st,
                    ) + width_right * right_rho;
                // Composite parts: from l1 (left base) and from l1 + 1 (right base).
                // The right one is recovered by subtracting the first panel of the left.
                composite_row(sigma_row, l1, delta, out);
                let right_plus = 2.0 * delta * dot3(EdgeTarget::RhoPlusOne.betas(1.0), right_st);
                out[l1 + 2] = left_rho + lead * out[l1 + 2] + width_right * right_plus;
                right_composite_row(
                    sigma_row,
                    l1 + 1,
                    delta,
                    out,
                    |left_c, right_c| {
                        left_rho + lead * left_c + width_right * (right_rho + right_c)
                    },
                    l1 + 3,
                );
            }
        }
    }
    Ok(())
}

/// Writes the Simpson/3-8 composite integral from node `base` to every
/// `m >= base + 2` into `out[m]`; `out[base + 1]` is left untouched.
fn composite_row(values: &[f64], base: usize, delta: f64, out: &mut [f64]) {
    let last = out.len() - 1;
    if base + 2 > last {
        return;
    }
    let third = delta / 3.0;
    // Even offsets first.
    let mut acc = 0.0;
    let mut m = base + 2;
    while m <= last {
        acc += third * (values[m - 2] + 4.0 * values[m - 1] + values[m]);
        out[m] = acc;
        m += 2;
    }
    // Odd offsets >= 3 read the even prefix three nodes back.
    let three_eighths = 3.0 * delta / 8.0;
    let mut m = base + 3;
    while m <= last {
        let head = if m - 3 == base { 0.0 } else { out[m - 3] };
        out[m] = head
            + three_eighths
                * (values[m - 3] + 3.0 * values[m - 2] + 3.0 * values[m - 1] + values[m]);
        m += 2;
    }
}

/// Walks `m = first..` combining the composite from `base - 1` (already in
/// `out[m]`) with the composite from `base`, computed on the fly.
fn right_composite_row(
    values: &[f64],
    base: usize,
    delta: f64,
    out: &mut [f64],
    combine: impl Fn(f64, f64) -> f64,
    first: usize,
) {
    let last = out.len() - 1;
    let third = delta / 3.0;
    let three_eighths = 3.0 * delta / 8.0;
    let mut even_prev = 0.0; // prefix at the latest even offset below m
    let mut even_prev2 = 0.0; // prefix at the even offset before that
    let mut even_off = 0usize;
    for m in first..=last {
        let off = m - base;
        while even_off + 2 <= off {
            even_off += 2;
            even_prev2 = even_prev;
            let e = base + even_off;
            even_prev += third * (values[e - 2] + 4.0 * values[e - 1] + values[e]);
        }
        let right_c = if off.is_multiple_of(2) {
            even_prev
        } else {
            // off >= 3: Simpson to m - 3 plus 3/8 on the last four nodes.
            let head = if off == 3 { 0.0 } else { even_prev2 };
            head + three_eighths
                * (values[m - 3] + 3.0 * values[m - 2] + 3.0 * values[m - 1] + values[m])
        };
        out[m] = combine(out[m], right_c);
    }
}

/// Log-bond integral `S_Z(t*, T_end)` from terminal rates indexed by maturity node.
pub fn terminal_bond_integral(
    order: AlgorithmOrder,
    rates: &[f64],
    grid: &GridPair,
    end: usize,
) -> Result<f64> {
    let m = grid.m();
    let (ell, rho) = (grid.ell(m), grid.rho(m));
    if end < rho {
        return Err(Error::InvalidParameter(format!(
            "payment node {end} is not after t* (rho(t*) = {rho})"
        )));
    }
    let delta = grid.delta();
    let edge = grid.gap(rho, m);
    match order {
        AlgorithmOrder::Rect1 => {
            require(rates, end)?;
            let tail: f64 = rates[rho + 1..=end].iter().sum();
            Ok(rates[rho] * edge + delta * tail)
        }
        AlgorithmOrder::Trap2 => {
            require(rates, end)?;
            let trap = if end == rho {
                0.0
            } else {
                let inner: f64 = rates[rho + 1..end].iter().sum();
                delta / 2.0 * (rates[rho] + 2.0 * inner + rates[end])
            };
            Ok(rates[rho] * edge + trap)
        }
        AlgorithmOrder::Simpson4 => {
            require(rates, end.max(rho + 1))?;
            let st = [rates[ell], rates[rho], rates[rho + 1]];
            let x = edge / delta;
            if end == rho + 1 {
                let t = EdgeTarget::RhoPlusOne;
                return Ok(delta * (t.offset() + x) * dot3(t.betas(x), st));
            }
            let to_rho = edge * dot3(EdgeTarget::Rho.betas(x), st);
            if end == rho {
                return Ok(to_rho);
            }
            Ok(to_rho + composite_simpson(rates, rho, end, delta))
        }
    }
}

/// Short-rate interpolant `pi(t)` from `f_values[j] = f(t, T_{ell(t) + j})`, `j = 0..=theta`.
pub fn short_rate(
    order: AlgorithmOrder,
    t: f64,
    f_values: &[f64],
    grid: &MaturityGrid,
) -> Result<f64> {
    let theta = order.theta();
    if f_values.len() != theta + 1 {
        return Err(Error::InvalidParameter(format!(
            "short rate of order {} needs {} values, got {}",
            order.label(),
            theta + 1,
            f_values.len()
        )));
    }
    let ell = grid.ell(t)?;
    let y = (t - grid.node(ell)) / grid.delta();
    Ok(match order {
        AlgorithmOrder::Rect1 => f_values[0],
        AlgorithmOrder::Trap2 => (1.0 - y) * f_values[0] + y * f_values[1],
        AlgorithmOrder::Simpson4 => {
            let w = cubic_weights(y);
            (0..4).map(|j| w[j] * f_values[j]).sum()
        }
    })
}

/// Cubic Lagrange weights on nodes `0, 1, 2, 3` at `y`.
fn cubic_weights(y: f64) -> [f64; 4] {
    [
        -(y - 1.0) * (y - 2.0) * (y - 3.0) / 6.0,
        y * (y - 2.0) * (y - 3.0) / 2.0,
        -y * (y - 1.0) * (y - 3.0) / 2.0,
        y * (y - 1.0) * (y - 2.0) / 6.0,
    ]
}

/// `int_{y_lo}^{y_hi}` of each cubic Lagrange weight.
fn cubic_weight_integrals(y_lo: f64, y_hi: f64) -> [f64; 4] {
    // Antiderivatives of the expanded weights.
    let a0 = |y: f64| -(y.powi(4) / 4.0 - 2.0 * y.powi(3) + 5.5 * y * y - 6.0 * y) / 6.0;
    let a1 = |y: f64| (y.powi(4) / 4.0 - 5.0 * y.powi(3) / 3.0 + 3.0 * y * y) / 2.0;
    let a2 = |y: f64| -(y.powi(4) / 4.0 - 4.0 * y.powi(3) / 3.0 + 1.5 * y * y) / 2.0;
    let a3 = |y: f64| (y.powi(4) / 4.0 - y.powi(3) + y * y) / 6.0;
    [
        a0(y_hi) - a0(y_lo),
        a1(y_hi) - a1(y_lo),
        a2(y_hi) - a2(y_lo),
        a3(y_hi) - a3(y_lo),
    ]
}

/// `A^Y(t_k; h)` as a linear form: weights on `f_k` nodes and on `f_{k+1}` nodes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiscountWeights {
    pub now: Vec<(usize, f64)>,
    pub next: Vec<(usize, f64)>,
}

impl DiscountWeights {
    #[inline]
    pub fn apply(&self, f_k: &[f64], f_k1: &[f64]) -> f64 {
        let a: f64 = self.now.iter().map(|&(i, w)| w * f_k[i]).sum();
        let b: f64 = self.next.iter().map(|&(i, w)| w * f_k1[i]).sum();
        a + b
    }
}

/// Diagnostic shortcut `h * f_k(T_ell(t_k))` for the discount increment.
///
/// It ignores the gap between `t_k` and the node below it, so it does not
/// converge when the time grid is not aligned with the maturity grid.
pub fn rough_discount_weights(k: usize, grid: &GridPair) -> DiscountWeights {
    DiscountWeights {
        now: vec![(grid.ell(k), grid.h())],
        next: Vec::new(),
    }
}

/// Weights of the one-step discount increment on step `k`, which approximates
/// `int_{t_k}^{t_{k+1}} pi(s) ds`. The `next` part is empty unless the step
/// crosses a maturity node.
pub fn discount_weights(
    order: AlgorithmOrder,
    k: usize,
    grid: &GridPair,
) -> Result<DiscountWeights> {
    let (l0, l1) = (grid.ell(k), grid.ell(k + 1));
    let h = grid.h();
    let delta = grid.delta();
    let crossing = l1 != l0;
    let lead = grid.gap(l1, k);
    let mut w = DiscountWeights::default();
    match order {
        AlgorithmOrder::Rect1 => {
            if crossing {
                w.now.push((l0, lead));
                w.next.push((l1, h - lead));
            } else {
                w.now.push((l0, h));
            }
        }
        AlgorithmOrder::Trap2 => {
            let rho = l1 + 1;
            if !crossing {
                w.now.push((l1, h * grid.gap_mid(rho, k) / delta));
                w.now.push((rho, -h * grid.gap_mid(l1, k) / delta));
            } else {
                let back = grid.gap(l1, k + 1);
                w.now.push((l0, lead * lead / (2.0 * delta)));
                w.now
                    .push((l1, -lead * (lead - 2.0 * delta) / (2.0 * delta)));
                w.next
                    .push((l1, -back * (back + 2.0 * delta) / (2.0 * delta)));
                w.next.push((rho, back * back / (2.0 * delta)));
            }
        }
        AlgorithmOrder::Simpson4 => {
            let y0 = -grid.gap(l0, k) / delta;
            let (y_end, right) = if crossing {
                (1.0, Some(-grid.gap(l1, k + 1) / delta))
            } else {
                (y0 + h / delta, None)
            };
            for (j, c) in cubic_weight_integrals(y0, y_end).iter().enumerate() {
                w.now.push((l0 + j, delta * c));
            }
            if let Some(y1) = right {
                for (j, c) in cubic_weight_integrals(0.0, y1).iter().enumerate() {
                    w.next.push((l1 + j, delta * c));
                }
            }
        }
    }
    let n_prime = grid.n_prime();
    for &(i, _) in w.now.iter().chain(&w.next) {
        if i > n_prime {
            return Err(Error::StencilOutOfRange {
                needed: i,
                available: n_prime,
            });
        }
    }
    Ok(w)
}

fn check_nodes(weights: &[(usize, f64)], state: &ForwardState, step: usize) -> Result<()> {
    for &(node, _) in weights {
        if node < state.frozen_below() {
            return Err(Error::MissingFictitiousNode { node, step });
        }
        if node >= state.rates().len() {
            return Err(Error::StencilOutOfRange {
                needed: node,
                available: state.rates().len().saturating_sub(1),
            });
        }
    }
    Ok(())
}

/// One-step discount increment `A^Y(t_k; h)`, approximating `int_{t_k}^{t_{k+1}} pi(s) ds`.
///
/// `f_k` holds the rates at `t_k`; `f_k1` those at `t_{k+1}` and is only read
/// on steps that cross a maturity node.
pub fn discount_increment(
    order: AlgorithmOrder,
    k: usize,
    f_k: &ForwardState,
    f_k1: &ForwardState,
    grid: &GridPair,
) -> Result<f64> {
    let w = discount_weights(order, k, grid)?;
    check_nodes(&w.now, f_k, k)?;
    check_nodes(&w.next, f_k1, k + 1)?;
    Ok(w.apply(f_k.rates(), f_k1.rates()))
}

#[cfg(test)]
mod tests {
    type Poly = fn(f64) -> f64;
    use super::*;
    use crate::grid::build_grid_pair;

    fn grid(delta: f64, h: f64, order: AlgorithmOrder) -> GridPair {
        build_grid_pair(0.0, 1.0, 6.0, delta, h, order.stencil_reach()).unwrap()
    }

    /// Grid pairs covering aligned, misaligned and Simpson-style steps.
    fn grids(order: AlgorithmOrder) -> Vec<GridPair> {
        [
            (0.2, 0.2),
            (0.5, 0.25),
            (6.0 / 13.0, 0.2),
            (2.0 / 3.0, 0.2),
            (0.3, 0.1),
            (6.0 / 11.0, 0.1),
        ]
        .iter()
        .map(|&(d, h)| grid(d, h, order))
        .collect()
    }

    fn row_of(g: &GridPair, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..=g.n_prime()).map(|i| f(g.maturity().node(i))).collect()
    }

    #[test]
    fn order_table() {
        use AlgorithmOrder::*;
        assert_eq!((Rect1.p(), Rect1.theta(), Rect1.stencil_reach()), (1, 0, 1));
        assert_eq!((Trap2.p(), Trap2.theta(), Trap2.stencil_reach()), (2, 1, 1));
        assert_eq!(
            (Simpson4.p(), Simpson4.theta(), Simpson4.stencil_reach()),
            (4, 3, 3)
        );
        for o in AlgorithmOrder::ALL {
            assert_eq!(AlgorithmOrder::from_label(o.label()), Some(o));
        }
        assert_eq!(AlgorithmOrder::from_label("5.4"), None);
    }

    #[test]
    fn edge_weights_at_sample_points() {
        let g = MaturityGrid::new(0.0, 6.0, 1.0).unwrap();
        let w = simpson_edge_weights(1.0, &g, EdgeTarget::Rho).unwrap();
        let expect = [5.0 / 12.0, 2.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w.as_array().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let w = simpson_edge_weights(1.5, &g, EdgeTarget::Rho).unwrap();
        let expect = [1.0 / 6.0, 11.0 / 12.0, -1.0 / 12.0];
        for (a, b) in w.as_array().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((w.as_array().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn edge_rules_exact_to_degree_two() {
        // Nodes T_l = 0, T_{l+1} = 1, T_{l+2} = 2 with delta = 1.
        let g = MaturityGrid::new(0.0, 6.0, 1.0).unwrap();
        for s in [0.0, 0.1, 0.37, 0.5, 0.93] {
            for (target, end) in [
                (EdgeTarget::Ell, 0.0f64),
                (EdgeTarget::Rho, 1.0),
                (EdgeTarget::RhoPlusOne, 2.0),
            ] {
                let w = simpson_edge_weights(s, &g, target).unwrap().as_array();
                for deg in 0..=2 {
                    let p = |u: f64| u.powi(deg);
                    let exact = (end.powi(deg + 1) - s.powi(deg + 1)) / (deg + 1) as f64;
                    let approx = (end - s) * (w[0] * p(0.0) + w[1] * p(1.0) + w[2] * p(2.0));
                    assert!((exact - approx).abs() < 1e-14, "{target:?} deg {deg} s {s}");
                }
            }
        }
    }

    #[test]
    fn edge_rule_backward_stub_vanishes_on_node() {
        let g = MaturityGrid::new(0.0, 6.0, 0.5).unwrap();
        let s = g.node(3);
        let x = 1.0;
        let sigma: Vec<f64> = (0..=12).map(|i| 1.0 + i as f64).collect();
        assert_eq!(simpson_point(3, x, 3, &sigma, 0.5), 0.0);
        let w = simpson_edge_weights(s + 0.2, &g, EdgeTarget::Ell).unwrap();
        assert!(w.beta1.is_finite());
    }

    #[test]
    fn composite_rules_exact_to_degree_three() {
        let delta = 0.25;
        for deg in 0..=3 {
            let values: Vec<f64> = (0..=12).map(|i| (i as f64 * delta).powi(deg)).collect();
            for from in 0..3 {
                for to in from + 2..=12 {
                    let a = from as f64 * delta;
                    let b = to as f64 * delta;
                    let exact = (b.powi(deg + 1) - a.powi(deg + 1)) / (deg + 1) as f64;
                    let got = composite_simpson(&values, from, to, delta);
                    assert!((got - exact).abs() < 1e-12, "deg {deg} {from}..{to}");
                }
            }
        }
    }

    #[test]
    fn composite_row_matches_direct_rule() {
        let values: Vec<f64> = (0..=20).map(|i| (0.3 * i as f64).sin() + 2.0).collect();
        for base in 0..5 {
            let mut out = vec![f64::NAN; 21];
            composite_row(&values, base, 0.3, &mut out);
            for m in base + 2..=20 {
                assert!((out[m] - composite_simpson(&values, base, m, 0.3)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn rect_drift_constant_sigma() {
        // The rectangle rule is exact for constant sigma on every step.
        let g = grid(0.5, 0.25, AlgorithmOrder::Rect1);
        let sigma = vec![0.3; g.n_prime() + 1];
        for k in 0..g.m() {
            for i in g.ell(k + 1)..=g.n_prime() {
                let got = integrated_drift(AlgorithmOrder::Rect1, k, i, &g, &sigma).unwrap();
                let expect = 0.25 * 0.3 * g.gap(i, k);
                assert!((got - expect).abs() < 1e-14, "k {k} i {i}");
            }
        }
    }

    #[test]
    fn trap_drift_constant_sigma_no_crossing() {
        let g = grid(6.0 / 13.0, 0.2, AlgorithmOrder::Trap2);
        let sigma = vec![0.7; g.n_prime() + 1];
        for k in 0..g.m() {
            if g.crosses(k) {
                continue;
            }
            for i in g.ell(k + 1)..=g.n_prime() {
                let got = integrated_drift(AlgorithmOrder::Trap2, k, i, &g, &sigma).unwrap();
                assert!((got - 0.2 * 0.7 * g.gap(i, k)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn simpson_drift_linear_sigma_no_crossing() {
        let g = grid(2.0 / 3.0, 0.2, AlgorithmOrder::Simpson4);
        let (a, b) = (0.4, -0.03);
        let sigma = row_of(&g, |u| a + b * u);
        let mut checked = 0;
        for k in 0..g.m() {
            if g.crosses(k) {
                continue;
            }
            let tk = g.time().node(k);
            for i in g.ell(k + 1)..=g.n_prime() {
                let ti = g.maturity().node(i);
                let exact = 0.2 * (a * (ti - tk) + b * (ti * ti - tk * tk) / 2.0);
                let got = integrated_drift(AlgorithmOrder::Simpson4, k, i, &g, &sigma).unwrap();
                assert!((got - exact).abs() < 1e-13, "k {k} i {i}: {got} vs {exact}");
                checked += 1;
            }
        }
        assert!(checked > 10);
    }

    #[test]
    fn simpson_drift_crossing_left_piece_is_exact_for_linear_sigma() {
        // On a crossing step: exact integral on [t_k, T_l] plus (t_{k+1} - T_l) S_I(T_l, T_i).
        let g = grid(2.0 / 3.0, 0.2, AlgorithmOrder::Simpson4);
        let (a, b) = (0.4, -0.03);
        let sigma = row_of(&g, |u| a + b * u);
        let prim = |lo: f64, hi: f64| a * (hi - lo) + b * (hi * hi - lo * lo) / 2.0;
        for k in 0..g.m() {
            if !g.crosses(k) {
                continue;
            }
            let tk = g.time().node(k);
            let tl = g.maturity().node(g.ell(k + 1));
            let tk1 = g.time().node(k + 1);
            for i in g.ell(k + 1)..=g.n_prime() {
                let ti = g.maturity().node(i);
                // int_{tk}^{tl} int_s^{ti} sigma(u) du ds
                let n = 2000;
                let hs = (tl - tk) / n as f64;
                let left: f64 = (0..n)
                    .map(|q| {
                        let s = tk + (q as f64 + 0.5) * hs;
                        prim(s, ti)
                    })
                    .sum::<f64>()
                    * hs;
                let expect = left + (tk1 - tl) * prim(tl, ti);
                let got = integrated_drift(AlgorithmOrder::Simpson4, k, i, &g, &sigma).unwrap();
                assert!(
                    (got - expect).abs() < 1e-9,
                    "k {k} i {i}: {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn drift_row_matches_pointwise() {
        for order in AlgorithmOrder::ALL {
            for g in grids(order) {
                let sigma = row_of(&g, |u| 0.02 * (-0.7 * u).exp() + 0.01 * u.sin());
                let mut out = vec![f64::NAN; g.n_prime() + 1];
                for k in 0..g.m() {
                    integrated_drift_row(order, k, &g, &sigma, &mut out).unwrap();
                    for i in g.ell(k + 1)..=g.n_prime() {
                        let direct = integrated_drift(order, k, i, &g, &sigma).unwrap();
                        assert!(
                            (out[i] - direct).abs() <= 1e-14 * direct.abs().max(1e-3),
                            "{order:?} delta {} k {k} i {i}: {} vs {direct}",
                            g.delta(),
                            out[i]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn drift_errors() {
        let g = grid(2.0 / 3.0, 0.2, AlgorithmOrder::Simpson4);
        let short = vec![0.1; 3];
        assert!(matches!(
            integrated_drift(AlgorithmOrder::Simpson4, 0, 5, &g, &short),
            Err(Error::StencilOutOfRange { .. })
        ));
        let sigma = vec![0.1; g.n_prime() + 1];
        let g2 = grid(0.2, 0.2, AlgorithmOrder::Rect1);
        assert!(integrated_drift(AlgorithmOrder::Rect1, 3, 0, &g2, &sigma).is_err());
    }

    #[test]
    fn terminal_integral_of_constant_curve() {
        for order in AlgorithmOrder::ALL {
            for g in grids(order) {
                let rates = vec![0.042; g.n_prime() + 1];
                let t_star = g.time().t_star();
                for end in g.rho(g.m())..=g.n() {
                    let got = terminal_bond_integral(order, &rates, &g, end).unwrap();
                    let expect = 0.042 * (g.maturity().node(end) - t_star);
                    assert!((got - expect).abs() < 1e-14, "{order:?} end {end}");
                }
            }
        }
    }

    #[test]
    fn terminal_integral_polynomial_exactness() {
        // Rect exact on constants (above); trapezoid part exact on lines beyond
        // the edge; Simpson exact on lines over the whole range and on cubics
        // beyond T_rho.
        for g in grids(AlgorithmOrder::Simpson4) {
            let (a, b) = (0.03, 0.011);
            let rates = row_of(&g, |u| a + b * u);
            let t_star = g.time().t_star();
            for end in g.rho(g.m())..=g.n() {
                let te = g.maturity().node(end);
                let exact = a * (te - t_star) + b * (te * te - t_star * t_star) / 2.0;
                let got =
                    terminal_bond_integral(AlgorithmOrder::Simpson4, &rates, &g, end).unwrap();
                assert!((got - exact).abs() < 1e-13, "delta {} end {end}", g.delta());
            }
        }
    }

    #[test]
    fn terminal_integral_simpson_parity_cases() {
        // delta = 2/3, t* = 1: rho_M = 2, N = 9 -> N - rho + 1 = 8 (even, 3/8 tail).
        let g = grid(2.0 / 3.0, 0.2, AlgorithmOrder::Simpson4);
        assert_eq!(g.rho(g.m()), 2);
        let cubic = |u: f64| 0.01 + 0.02 * u - 0.003 * u * u + 0.0004 * u * u * u;
        let prim = |u: f64| 0.01 * u + 0.01 * u * u - 0.001 * u.powi(3) + 0.0001 * u.powi(4);
        let rates = row_of(&g, cubic);
        let t_rho = g.maturity().node(2);
        let rate_edge = terminal_bond_integral(AlgorithmOrder::Simpson4, &rates, &g, 2).unwrap();
        // Even count (9 - 2 + 1 = 8) -> Simpson + 3/8 tail; odd count (8 - 2 + 1 = 7) -> pure Simpson.
        for end in [9usize, 8] {
            let got = terminal_bond_integral(AlgorithmOrder::Simpson4, &rates, &g, end).unwrap();
            let tail = got - rate_edge;
            let exact = prim(g.maturity().node(end)) - prim(t_rho);
            assert!((tail - exact).abs() < 1e-13, "end {end}");
        }
    }

    #[test]
    fn terminal_integral_needs_future_payment() {
        let g = grid(0.2, 0.2, AlgorithmOrder::Rect1);
        let rates = vec![0.05; g.n_prime() + 1];
        assert!(terminal_bond_integral(AlgorithmOrder::Rect1, &rates, &g, g.ell(g.m())).is_err());
        // t* = T_5 exactly: the edge interval has full width delta.
        let edge_only = terminal_bond_integral(AlgorithmOrder::Rect1, &rates, &g, 6).unwrap();
        assert!((edge_only - 0.05 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn short_rate_interpolation() {
        let g = MaturityGrid::new(0.0, 6.0, 0.5).unwrap();
        for order in AlgorithmOrder::ALL {
            let n = order.theta() + 1;
            let vals: Vec<f64> = (0..n).map(|j| 0.03 + 0.01 * j as f64).collect();
            let at_node = short_rate(order, 1.0, &vals, &g).unwrap();
            assert!((at_node - vals[0]).abs() < 1e-15);
            let flat = vec![0.021; n];
            for t in [0.0, 0.13, 1.77, 2.49] {
                assert!((short_rate(order, t, &flat, &g).unwrap() - 0.021).abs() < 1e-15);
            }
            assert!(short_rate(order, 0.3, &vals[..n - 1], &g).is_err() || n == 1);
        }
        // Cubic interpolation reproduces T^3 from nodes {0, d, 2d, 3d}.
        let cube: Vec<f64> = (0..4).map(|j| (j as f64 * 0.5).powi(3)).collect();
        for t in [0.0, 0.1, 0.25, 0.4, 0.499] {
            let got = short_rate(AlgorithmOrder::Simpson4, t, &cube, &g).unwrap();
            assert!((got - t * t * t).abs() < 1e-14);
        }
    }

    #[test]
    fn cubic_weight_integrals_match_quadrature() {
        for (lo, hi) in [(0.0, 1.0), (0.2, 0.7), (0.55, 0.9)] {
            let w = cubic_weight_integrals(lo, hi);
            let n = 4000;
            let hs = (hi - lo) / n as f64;
            let mut num = [0.0; 4];
            for q in 0..n {
                let y = lo + (q as f64 + 0.5) * hs;
                let c = cubic_weights(y);
                for j in 0..4 {
                    num[j] += c[j] * hs;
                }
            }
            for j in 0..4 {
                assert!((w[j] - num[j]).abs() < 1e-8);
            }
            assert!((w.iter().sum::<f64>() - (hi - lo)).abs() < 1e-15);
        }
    }

    fn state_at(g: &GridPair, k: usize, f: impl Fn(f64) -> f64) -> ForwardState {
        ForwardState::from_parts(k, g.ell(k), row_of(g, f))
    }

    #[test]
    fn discount_increment_constant_curve() {
        for order in AlgorithmOrder::ALL {
            for g in grids(order) {
                for k in 0..g.m() {
                    let a = state_at(&g, k, |_| 0.037);
                    let b = state_at(&g, k + 1, |_| 0.037);
                    let got = discount_increment(order, k, &a, &b, &g).unwrap();
                    assert!((got - 0.037 * g.h()).abs() < 1e-15, "{order:?} k {k}");
                }
            }
        }
    }

    #[test]
    fn discount_increment_on_matching_grids_reads_the_grid() {
        let g = grid(0.2, 0.2, AlgorithmOrder::Rect1);
        for k in 0..g.m() {
            let a = state_at(&g, k, |u| 0.01 + u);
            let b = state_at(&g, k + 1, |u| 5.0 + u);
            let got = discount_increment(AlgorithmOrder::Rect1, k, &a, &b, &g).unwrap();
            assert!((got - 0.2 * a.rates()[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn discount_increment_exact_for_interpolant_degree() {
        // With a static curve f(T) of degree theta, the increment is int pi = int f.
        let cases: [(AlgorithmOrder, Poly, Poly); 3] = [
            (AlgorithmOrder::Rect1, |_| 0.05, |s| 0.05 * s),
            (
                AlgorithmOrder::Trap2,
                |u| 0.05 + 0.1 * u,
                |s| 0.05 * s + 0.05 * s * s,
            ),
            (
                AlgorithmOrder::Simpson4,
                |u| 0.05 + 0.1 * u - 0.02 * u * u + 0.003 * u * u * u,
                |s| 0.05 * s + 0.05 * s * s - 0.02 / 3.0 * s.powi(3) + 0.00075 * s.powi(4),
            ),
        ];
        for (order, f, prim) in cases {
            for g in grids(order) {
                for k in 0..g.m() {
                    let a = state_at(&g, k, f);
                    let b = state_at(&g, k + 1, f);
                    let got = discount_increment(order, k, &a, &b, &g).unwrap();
                    let exact = prim(g.time().node(k + 1)) - prim(g.time().node(k));
                    assert!(
                        (got - exact).abs() < 1e-14,
                        "{order:?} delta {} k {k}",
                        g.delta()
                    );
                }
            }
        }
    }

    #[test]
    fn discount_increment_reports_frozen_nodes() {
        let g = grid(0.5, 0.25, AlgorithmOrder::Trap2);
        // k = 2 reads node ell(t_2) = 1; a state frozen below 2 cannot supply it.
        let a = ForwardState::from_parts(2, 2, vec![0.05; g.n_prime() + 1]);
        let b = ForwardState::from_parts(3, 2, vec![0.05; g.n_prime() + 1]);
        assert!(matches!(
            discount_increment(AlgorithmOrder::Trap2, 2, &a, &b, &g),
            Err(Error::MissingFictitiousNode { .. })
        ));
    }
}
