//! Volatility models, initial forward curves and the Vasicek pricing oracle.

use crate::error::{Error, Result};

/// A `d`-factor HJM volatility of separable form
/// `sigma_j(t, T, z) = loading_j(t, T) * state_scale_j(z)`
/// together with the initial forward curve `f0(T)`.
///
/// The split lets the simulator tabulate the deterministic loadings once per
/// grid and only apply the state-dependent part per path.
pub trait VolatilityModel: Send + Sync {
    fn factors(&self) -> usize;

    /// Deterministic part of factor `j` (0-based) at time `t` for maturity `maturity`.
    fn loading(&self, j: usize, t: f64, maturity: f64) -> f64;

    /// State-dependent multiplier of factor `j` at forward rate `rate`.
    fn state_scale(&self, j: usize, rate: f64) -> f64;

    /// `f0(T)`, defined on the extended maturity range as well.
    fn initial_forward(&self, maturity: f64) -> f64;

    fn sigma(&self, j: usize, t: f64, maturity: f64, rate: f64) -> f64 {
        self.loading(j, t, maturity) * self.state_scale(j, rate)
    }

    /// True when `state_scale` is identically one.
    fn state_independent(&self) -> bool {
        false
    }

    /// Rate above which the state multiplier saturates, if any.
    fn state_cap(&self) -> Option<f64> {
        None
    }
}

/// Parameters of the one-factor Vasicek-type HJM model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VasicekParams {
    pub sigma: f64,
    pub kappa: f64,
    pub r0: f64,
    /// Long-run level.
    pub theta: f64,
}

impl VasicekParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0)
            || !(self.kappa > 0.0)
            || !self.r0.is_finite()
            || !self.theta.is_finite()
        {
            return Err(Error::InvalidParameter(format!(
                "Vasicek parameters need sigma >= 0 and kappa > 0 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// `sigma(t, T) = sigma * exp(-kappa (T - t))` with the matching Vasicek initial curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VasicekModel {
    params: VasicekParams,
    t0: f64,
}

impl VasicekModel {
    pub fn new(params: VasicekParams) -> Result<Self> {
        Self::with_origin(params, 0.0)
    }

    /// Model whose initial curve is anchored at `t0`.
    pub fn with_origin(params: VasicekParams, t0: f64) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, t0 })
    }

    pub fn params(&self) -> &VasicekParams {
        &self.params
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }
}

impl VolatilityModel for VasicekModel {
    fn factors(&self) -> usize {
        1
    }

    #[inline]
    fn loading(&self, _j: usize, t: f64, maturity: f64) -> f64 {
        self.params.sigma * (-self.params.kappa * (maturity - t)).exp()
    }

    #[inline]
    fn state_scale(&self, _j: usize, _rate: f64) -> f64 {
        1.0
    }

    fn initial_forward(&self, maturity: f64) -> f64 {
        vasicek_initial_forward(&self.params, self.t0, maturity)
    }

    fn state_independent(&self) -> bool {
        true
    }
}

pub fn vasicek_initial_forward(p: &VasicekParams, t0: f64, maturity: f64) -> f64 {
    let e = (-p.kappa * (maturity - t0)).exp();
    e * p.r0 + (1.0 - e) * p.theta
        - p.sigma * p.sigma / (2.0 * p.kappa * p.kappa) * (1.0 - e) * (1.0 - e)
}

/// Parameters of the capped proportional-volatility model.
#[derive(Debug, Clone, PartialEq)]
pub struct ProportionalParams {
    pub sigma: Vec<f64>,
    pub kappa: Vec<f64>,
    pub gamma_cap: f64,
}

impl ProportionalParams {
    pub const DEFAULT_GAMMA_CAP: f64 = 1.0;

    /// The two-factor calibration used in the published experiments.
    pub fn two_factor_reference() -> Self {
        Self {
            sigma: vec![0.1043, 0.1719],
            kappa: vec![0.052, 0.035],
            gamma_cap: Self::DEFAULT_GAMMA_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma.is_empty() || self.sigma.len() != self.kappa.len() {
            return Err(Error::InvalidParameter(format!(
                "proportional model needs matching non-empty sigma/kappa lists (got {} and {})",
                self.sigma.len(),
                self.kappa.len()
            )));
        }
        if self.sigma.iter().chain(&self.kappa).any(|v| !(*v > 0.0)) || !(self.gamma_cap > 0.0) {
            return Err(Error::InvalidParameter(
                "proportional model parameters must all be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `sigma_j(t, T, z) = sigma_j exp(-kappa_j (T - t)) min(z, Gamma)`, zero for `z <= 0`,
/// with initial curve `f0(T) = ln(150 + 48 T) / 100`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProportionalModel {
    params: ProportionalParams,
}

impl ProportionalModel {
    pub fn new(params: ProportionalParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &ProportionalParams {
        &self.params
    }
}

impl VolatilityModel for ProportionalModel {
    fn factors(&self) -> usize {
        self.params.sigma.len()
    }

    #[inline]
    fn loading(&self, j: usize, t: f64, maturity: f64) -> f64 {
        self.params.sigma[j] * (-self.params.kappa[j] * (maturity - t)).exp()
    }

    #[inline]
    fn state_scale(&self, _j: usize, rate: f64) -> f64 {
        rate.clamp(0.0, self.params.gamma_cap)
    }

    fn initial_forward(&self, maturity: f64) -> f64 {
        (150.0 + 48.0 * maturity).ln() / 100.0
    }

    fn state_cap(&self) -> Option<f64> {
        Some(self.params.gamma_cap)
    }
}

/// Standard normal CDF via the complementary error function; exactly 0 or 1 beyond `|x| > 8`.
pub fn normal_cdf(x: f64) -> f64 {
    if x > 8.0 {
        1.0
    } else if x < -8.0 {
        0.0
    } else {
        0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
    }
}

/// `int_{t0}^{T} f0(u) du` for the Vasicek initial curve.
pub fn vasicek_forward_integral(p: &VasicekParams, t0: f64, maturity: f64) -> f64 {
    let tau = maturity - t0;
    let k = p.kappa;
    let one_minus_e = -(-k * tau).exp_m1();
    let one_minus_e2 = -(-2.0 * k * tau).exp_m1();
    let int_e = one_minus_e / k;
    let int_one_minus_e = tau - int_e;
    let int_one_minus_e_sq = tau - 2.0 * int_e + one_minus_e2 / (2.0 * k);
    p.r0 * int_e + p.theta * int_one_minus_e
        - p.sigma * p.sigma / (2.0 * k * k) * int_one_minus_e_sq
}

/// Zero-coupon bond `P(t0, T) = exp(-int_{t0}^{T} f0(u) du)`.
pub fn vasicek_bond_price(p: &VasicekParams, t0: f64, maturity: f64) -> f64 {
    (-vasicek_forward_integral(p, t0, maturity)).exp()
}

/// Closed-form price of a unit-nominal caplet set at `t_star` and paid at `payment`.
///
/// `sigma_p` carries an `exp(-2 kappa (T* - t*))` factor. When it vanishes the
/// discounted intrinsic value is returned.
pub fn vasicek_caplet_price(
    p: &VasicekParams,
    t0: f64,
    t_star: f64,
    payment: f64,
    strike: f64,
) -> Result<f64> {
    if !(t0 <= t_star && t_star < payment) {
        return Err(Error::InvalidParameter(format!(
            "caplet needs t0 <= t* < T* (t0 = {t0}, t* = {t_star}, T* = {payment})"
        )));
    }
    let k = p.kappa;
    let p_set = vasicek_bond_price(p, t0, t_star);
    let p_pay = vasicek_bond_price(p, t0, payment);
    let accrual = 1.0 + strike * (payment - t_star);
    let sigma_p = p.sigma / k
        * (-(-2.0 * k * (t_star - t0)).exp_m1() / (2.0 * k)).sqrt()
        * (1.0 - (-2.0 * k * (payment - t_star)).exp());
    if !(sigma_p > 0.0) {
        return Ok((p_set - accrual * p_pay).max(0.0));
    }
    let c_p = (accrual * p_pay / p_set).ln() / sigma_p + sigma_p / 2.0;
    Ok(p_set * normal_cdf(-c_p + sigma_p) - accrual * p_pay * normal_cdf(-c_p))
}

/// `E f(t, T)` under the Vasicek model, where the drift is deterministic.
pub fn vasicek_expected_forward(p: &VasicekParams, t0: f64, t: f64, maturity: f64) -> f64 {
    let k = p.kappa;
    let e1 = |a: f64| (-k * a).exp();
    let e2 = |a: f64| (-2.0 * k * a).exp();
    let drift = p.sigma * p.sigma / k
        * ((e1(maturity - t) - e1(maturity - t0)) / k
            - (e2(maturity - t) - e2(maturity - t0)) / (2.0 * k));
    vasicek_initial_forward(p, t0, maturity) + drift
}
