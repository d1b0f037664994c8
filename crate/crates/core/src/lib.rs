//! Monte Carlo pricing of interest-rate options under finite-dimensional HJM
//! dynamics, with forward rates simulated on a maturity grid.
//!
//! The maturity integrals in the drift, the discount factor and the terminal
//! bond prices are approximated by rectangle, trapezoid or Simpson rules, and
//! time is stepped by weak or mean-square Euler.
//!
//! ```
//! use hjm_core::{build_grid_pair, mc_price, AlgorithmOrder, Contract, NoiseKind,
//!                VasicekModel, VasicekParams};
//!
//! let model = VasicekModel::new(VasicekParams { sigma: 0.02, kappa: 1.0, r0: 0.05, theta: 1.0 })?;
//! let order = AlgorithmOrder::Rect1;
//! let grid = build_grid_pair(0.0, 1.0, 6.0, 0.2, 0.2, order.stencil_reach())?;
//! let caplet = Contract::caplet(1.0, 6.0, 0.03)?;
//! let est = mc_price(order, &model, &grid, &caplet, 1000, 7, NoiseKind::WeakBernoulli)?;
//! assert!(est.mean > 0.7);
//! # Ok::<(), hjm_core::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod grid;
pub mod model;
pub mod pricing;
pub mod quadrature;
pub mod simulate;

pub use error::{Error, Result};
pub use grid::{alpha_for_simpson, build_grid_pair, GridPair, MaturityGrid, StepLaw, TimeGrid};
pub use model::{
    vasicek_bond_price, vasicek_caplet_price, vasicek_expected_forward, ProportionalModel,
    ProportionalParams, VasicekModel, VasicekParams, VolatilityModel,
};
pub use pricing::{
    caplet_payoff, mc_half_width, mc_price, mc_price_simulator, mc_price_with_threads,
    swaption_payoff, with_threads, Contract, ContractKind, McEstimate,
};
pub use quadrature::AlgorithmOrder;
pub use simulate::{derive_stream, simulate_path, NoiseKind, PathOutcome, PathSimulator};
