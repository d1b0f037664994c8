//! Maturity (T) and running-time (t) discretizations.
//!
//! Both grids are uniform and anchored at `t0`. Node positions are always
//! derived from integer indices (`t0 + i * delta`), and the index maps
//! `ell`/`rho` are tabulated once per [`GridPair`] so that the crossing test
//! used by the time-stepping schemes is an integer comparison.

use crate::error::{Error, Result};

/// Relative tolerance for "is this ratio an integer".
const COMMENSURATE_TOL: f64 = 1e-9;
/// Relative tolerance under which a time is considered to sit on a node.
const SNAP_TOL: f64 = 1e-10;

fn integer_ratio(what: &'static str, span: f64, step: f64) -> Result<usize> {
    let ratio = span / step;
    let rounded = ratio.round();
    if !ratio.is_finite() || rounded < 1.0 || (ratio - rounded).abs() > COMMENSURATE_TOL * rounded {
        return Err(Error::NonCommensurateGrid { what, ratio });
    }
    Ok(rounded as usize)
}

/// `floor(q)`, except that values within `SNAP_TOL` of an integer snap to it.
fn snapped_floor(q: f64) -> i64 {
    let r = q.round();
    if (q - r).abs() <= SNAP_TOL * r.abs().max(1.0) {
        r as i64
    } else {
        q.floor() as i64
    }
}

fn snap_zero(x: f64, scale: f64) -> f64 {
    if x.abs() <= SNAP_TOL * scale.max(1.0) {
        0.0
    } else {
        x
    }
}

/// Uniform maturity grid `T_i = t0 + i * delta`, `i = 0..=n_prime`, with `T_n = T*`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaturityGrid {
    t0: f64,
    t_star_max: f64,
    delta: f64,
    n: usize,
    n_prime: usize,
}

impl MaturityGrid {
    /// Builds the grid with `N = (T* - t0) / delta`; `n_prime` starts equal to `N`.
    pub fn new(t0: f64, t_star_max: f64, delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !(t_star_max > t0) {
            return Err(Error::InvalidParameter(format!(
                "maturity grid needs delta > 0 and T* > t0 (delta = {delta}, t0 = {t0}, T* = {t_star_max})"
            )));
        }
        let n = integer_ratio("(T* - t0) / delta", t_star_max - t0, delta)?;
        Ok(Self {
            t0,
            t_star_max,
            delta: (t_star_max - t0) / n as f64,
            n,
            n_prime: n,
        })
    }

    /// Extends the simulated node range to `n_prime` (never shrinks below `N`).
    pub fn with_extension(mut self, n_prime: usize) -> Self {
        self.n_prime = n_prime.max(self.n);
        self
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// `T*`, the last non-extended maturity.
    pub fn t_star_max(&self) -> f64 {
        self.t_star_max
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_prime(&self) -> usize {
        self.n_prime
    }

    /// `T_i`; valid for any `i`, including extension nodes past `N`.
    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.delta
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_prime).map(|i| self.node(i)).collect()
    }

    fn check_range(&self, t: f64) -> Result<()> {
        let tol = SNAP_TOL * (self.t_star_max - self.t0).abs().max(1.0);
        if !(t >= self.t0 - tol && t <= self.t_star_max + tol) {
            return Err(Error::OutOfRange {
                t,
                lo: self.t0,
                hi: self.t_star_max,
            });
        }
        Ok(())
    }

    /// `max{i : t >= T_i}`.
    pub fn ell(&self, t: f64) -> Result<usize> {
        self.check_range(t)?;
        Ok(snapped_floor((t - self.t0) / self.delta).clamp(0, self.n as i64) as usize)
    }

    /// `min{i : t < T_i}`, always `ell(t) + 1`.
    pub fn rho(&self, t: f64) -> Result<usize> {
        Ok(self.ell(t)? + 1)
    }

    /// Index of the node equal to `t`, if `t` sits on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let q = (t - self.t0) / self.delta;
        let r = q.round();
        if r >= 0.0 && (q - r).abs() <= SNAP_TOL * r.abs().max(1.0) {
            Some(r as usize)
        } else {
            None
        }
    }
}

/// Uniform time grid `t_k = t0 + k * h`, `k = 0..=m`, with `t_m = t*`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t_star: f64,
    h: f64,
    m: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_star: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) || !(t_star > t0) {
            return Err(Error::InvalidParameter(format!(
                "time grid needs h > 0 and t* > t0 (h = {h}, t0 = {t0}, t* = {t_star})"
            )));
        }
        let m = integer_ratio("(t* - t0) / h", t_star - t0, h)?;
        Ok(Self {
            t0,
            t_star,
            h: (t_star - t0) / m as f64,
            m,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_star(&self) -> f64 {
        self.t_star
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn node(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.h
    }
}

/// A maturity grid paired with a time grid, plus tabulated index maps.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPair {
    maturity: MaturityGrid,
    time: TimeGrid,
    ell_k: Vec<usize>,
    rho_k: Vec<usize>,
}

impl GridPair {
    /// Pairs two grids, enforcing `h <= delta` and extending the maturity grid
    /// to `N' = max(N, ell(t*) + stencil_reach)`.
    pub fn new(maturity: MaturityGrid, time: TimeGrid, stencil_reach: usize) -> Result<Self> {
        if (maturity.t0 - time.t0).abs() > SNAP_TOL * maturity.t0.abs().max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "maturity and time grids start at different t0 ({} vs {})",
                maturity.t0, time.t0
            )));
        }
        if time.h > maturity.delta * (1.0 + SNAP_TOL) {
            return Err(Error::StepOrderViolation {
                h: time.h,
                delta: maturity.delta,
            });
        }
        if time.t_star > maturity.t_star_max * (1.0 + SNAP_TOL) + SNAP_TOL {
            return Err(Error::InvalidParameter(format!(
                "t* = {} lies beyond T* = {}",
                time.t_star, maturity.t_star_max
            )));
        }
        let ell_k = (0..=time.m)
            .map(|k| maturity.ell(time.node(k)))
            .collect::<Result<Vec<_>>>()?;
        let rho_k = ell_k.iter().map(|l| l + 1).collect();
        let ell_star = ell_k[time.m];
        let maturity = maturity.with_extension(ell_star + stencil_reach);
        Ok(Self {
            maturity,
            time,
            ell_k,
            rho_k,
        })
    }

    pub fn maturity(&self) -> &MaturityGrid {
        &self.maturity
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    /// `ell(t_k)`.
    #[inline]
    pub fn ell(&self, k: usize) -> usize {
        self.ell_k[k]
    }

    /// `rho(t_k)`.
    #[inline]
    pub fn rho(&self, k: usize) -> usize {
        self.rho_k[k]
    }

    pub fn ell_table(&self) -> &[usize] {
        &self.ell_k
    }

    /// True when a maturity node lies in `(t_k, t_{k+1}]`.
    #[inline]
    pub fn crosses(&self, k: usize) -> bool {
        self.ell_k[k + 1] != self.ell_k[k]
    }

    /// `T_i - t_k`, snapped to exactly zero when the two coincide.
    #[inline]
    pub fn gap(&self, i: usize, k: usize) -> f64 {
        let ti = self.maturity.node(i);
        let tk = self.time.node(k);
        snap_zero(ti - tk, ti.abs().max(tk.abs()))
    }

    /// `T_i - t_{k+1/2}`.
    #[inline]
    pub fn gap_mid(&self, i: usize, k: usize) -> f64 {
        self.maturity.node(i) - (self.time.node(k) + 0.5 * self.time.h)
    }

    pub fn delta(&self) -> f64 {
        self.maturity.delta
    }

    pub fn h(&self) -> f64 {
        self.time.h
    }

    pub fn m(&self) -> usize {
        self.time.m
    }

    pub fn n(&self) -> usize {
        self.maturity.n
    }

    pub fn n_prime(&self) -> usize {
        self.maturity.n_prime
    }
}

/// Builds a [`GridPair`] from raw steps.
pub fn build_grid_pair(
    t0: f64,
    t_star: f64,
    t_star_max: f64,
    delta: f64,
    h: f64,
    stencil_reach: usize,
) -> Result<GridPair> {
    if !(t0 < t_star && t_star <= t_star_max) {
        return Err(Error::InvalidParameter(format!(
            "need t0 < t* <= T* (t0 = {t0}, t* = {t_star}, T* = {t_star_max})"
        )));
    }
    if h > delta * (1.0 + SNAP_TOL) {
        return Err(Error::StepOrderViolation { h, delta });
    }
    let maturity = MaturityGrid::new(t0, t_star_max, delta)?;
    let time = TimeGrid::new(t0, t_star, h)?;
    GridPair::new(maturity, time, stencil_reach)
}

/// Smallest node count whose step does not exceed `h^power`.
fn snapped_count(h: f64, power: f64, t0: f64, t_star_max: f64) -> Result<usize> {
    if !(h > 0.0) || !(t_star_max > t0) {
        return Err(Error::InvalidParameter(format!(
            "need h > 0 and T* > t0 (h = {h}, t0 = {t0}, T* = {t_star_max})"
        )));
    }
    let r = (t_star_max - t0) / h.powf(power);
    // Exact ratios must not be bumped up by rounding noise.
    let count = (r * (1.0 - COMMENSURATE_TOL)).ceil();
    Ok((count as usize).max(1))
}

/// Scaling `alpha` for which `delta = alpha * h^(1/4)` divides `T* - t0`.
pub fn alpha_for_simpson(h: f64, t0: f64, t_star_max: f64) -> Result<f64> {
    let n = snapped_count(h, 0.25, t0, t_star_max)?;
    Ok((t_star_max - t0) / (n as f64 * h.powf(0.25)))
}

/// How the maturity step follows the time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepLaw {
    /// `delta = h`.
    Linear,
    /// `delta = alpha * h^(1/2)`, alpha snapping the grid to `T*`.
    SquareRoot,
    /// `delta = alpha * h^(1/4)`, alpha snapping the grid to `T*`.
    FourthRoot,
    /// A fixed maturity step.
    Explicit(f64),
}

impl StepLaw {
    /// Returns `(delta, alpha)` with `alpha = delta / h^power` (`1` for explicit steps).
    pub fn delta(&self, h: f64, t0: f64, t_star_max: f64) -> Result<(f64, f64)> {
        let power = match *self {
            StepLaw::Linear => 1.0,
            StepLaw::SquareRoot => 0.5,
            StepLaw::FourthRoot => 0.25,
            StepLaw::Explicit(delta) => return Ok((delta, 1.0)),
        };
        let n = snapped_count(h, power, t0, t_star_max)?;
        let span = t_star_max - t0;
        Ok((span / n as f64, span / (n as f64 * h.powf(power))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn commensurate_grid_counts() {
        let g = build_grid_pair(0.0, 1.0, 6.0, 0.5, 0.25, 1).unwrap();
        assert_eq!(g.n(), 12);
        assert_eq!(g.m(), 4);
        assert_eq!(g.n_prime(), 12);
    }

    #[test]
    fn simpson_grid_counts() {
        let g = build_grid_pair(0.0, 1.0, 6.0, 2.0 / 3.0, 0.2, 3).unwrap();
        assert_eq!(g.n(), 9);
        assert_eq!(g.ell(g.m()), 1);
        assert_eq!(g.n_prime(), 9);
    }

    #[test]
    fn extension_engages_near_t_star_max() {
        // t* = 5.9 with a Simpson-sized step: ell(t*) + 3 overshoots N.
        let (delta, _) = StepLaw::FourthRoot.delta(0.1, 0.0, 6.0).unwrap();
        let h = 5.9 / 59.0;
        let g = build_grid_pair(0.0, 5.9, 6.0, delta, h, 3).unwrap();
        let ell_star = g.maturity().ell(5.9).unwrap();
        assert_eq!(g.n(), 11);
        assert_eq!(ell_star, 10);
        assert_eq!(g.n_prime(), 13);
        assert!(g.n_prime() > g.n());
    }

    #[test]
    fn non_commensurate_and_step_order_errors() {
        assert!(matches!(
            build_grid_pair(0.0, 1.0, 6.0, 0.7, 0.25, 1),
            Err(Error::NonCommensurateGrid { .. })
        ));
        assert!(matches!(
            build_grid_pair(0.0, 1.0, 6.0, 0.3, 0.15, 1),
            Err(Error::NonCommensurateGrid { .. })
        ));
        assert!(matches!(
            build_grid_pair(0.0, 1.0, 6.0, 0.25, 0.5, 1),
            Err(Error::StepOrderViolation { .. })
        ));
    }

    #[test]
    fn ell_and_rho_examples() {
        let g = MaturityGrid::new(0.0, 6.0, 0.5).unwrap();
        assert_eq!(g.ell(0.7).unwrap(), 1);
        assert_eq!(g.rho(0.7).unwrap(), 2);
        assert_eq!(g.ell(0.0).unwrap(), 0);
        for i in 0..12 {
            assert_eq!(g.ell(g.node(i)).unwrap(), i);
            assert_eq!(g.rho(g.node(i)).unwrap(), i + 1);
        }
        assert!(matches!(g.ell(-0.1), Err(Error::OutOfRange { .. })));
        assert!(matches!(g.ell(6.5), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn ell_on_nodes_reached_by_other_steps() {
        // 0.1 * 3 != 0.3 in binary floating point; snapping must still land on node 3.
        let g = MaturityGrid::new(0.0, 6.0, 0.1).unwrap();
        assert_eq!(g.ell(0.1 * 3.0).unwrap(), 3);
        assert_eq!(g.ell(0.7 * 3.0).unwrap(), 21);
    }

    #[test]
    fn rho_minus_ell_is_one() {
        let g = MaturityGrid::new(0.0, 6.0, 6.0 / 13.0).unwrap();
        let mut rng = crate::simulate::derive_stream(7, 0);
        for _ in 0..1000 {
            let t: f64 = rng.random_range(0.0..6.0);
            let (l, r) = (g.ell(t).unwrap(), g.rho(t).unwrap());
            assert_eq!(r - l, 1);
            assert!(g.node(l) <= t && t < g.node(r));
        }
    }

    #[test]
    fn alpha_matches_published_values() {
        for (h, expect) in [
            (0.2, 0.997),
            (0.125, 0.917),
            (0.1, 0.970),
            (0.05, 0.976),
            (0.025, 0.943),
            (0.0125, 0.997),
            (0.00625, 0.970),
        ] {
            let a = alpha_for_simpson(h, 0.0, 6.0).unwrap();
            assert!((a - expect).abs() < 5e-4, "h = {h}: alpha = {a}");
            let n = 6.0 / (a * h.powf(0.25));
            assert!((n - n.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn step_laws() {
        let (d, a) = StepLaw::Linear.delta(0.2, 0.0, 6.0).unwrap();
        assert!((d - 0.2).abs() < 1e-15 && (a - 1.0).abs() < 1e-12);
        let (d, _) = StepLaw::SquareRoot.delta(0.2, 0.0, 6.0).unwrap();
        assert!((d - 6.0 / 14.0).abs() < 1e-15);
        let (d, a) = StepLaw::FourthRoot.delta(0.2, 0.0, 6.0).unwrap();
        assert!((d - 6.0 / 9.0).abs() < 1e-15);
        assert!((a - alpha_for_simpson(0.2, 0.0, 6.0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn index_tables_are_consistent() {
        for (delta, h) in [
            (0.2, 0.2),
            (6.0 / 13.0, 0.2),
            (6.0 / 19.0, 0.1),
            (0.5, 0.125),
        ] {
            let g = build_grid_pair(0.0, 1.0, 6.0, delta, h, 3).unwrap();
            for k in 0..=g.m() {
                let t = g.time().node(k);
                assert!(g.maturity().node(g.ell(k)) <= t + 1e-12);
                assert!(t < g.maturity().node(g.rho(k)));
                assert_eq!(g.rho(k), g.ell(k) + 1);
                if k < g.m() {
                    let step = g.ell(k + 1) - g.ell(k);
                    assert!(step <= 1);
                    assert_eq!(g.crosses(k), step == 1);
                    if g.crosses(k) {
                        assert!(g.gap(g.ell(k + 1), k) > 0.0);
                    } else {
                        assert!(g.gap(g.ell(k + 1), k) <= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn coincident_nodes_have_zero_gap() {
        let g = build_grid_pair(0.0, 1.2, 6.0, 0.3, 0.1, 1).unwrap();
        assert_eq!(g.gap(1, 3), 0.0);
        assert_eq!(g.gap(4, 12), 0.0);
        assert!(!g.crosses(3));
        assert!(g.crosses(2));
    }

    #[test]
    fn last_time_node_lands_on_t_star() {
        for (t_star, h) in [(1.0, 0.1), (1.0, 0.0125), (3.0, 0.03), (0.9, 0.003)] {
            let tg = TimeGrid::new(0.0, t_star, h).unwrap();
            let last = tg.node(tg.m());
            let ulp = f64::EPSILON * t_star;
            assert!((last - t_star).abs() <= 4.0 * ulp, "{last} vs {t_star}");
        }
    }
}
