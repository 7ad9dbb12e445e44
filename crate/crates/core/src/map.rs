//! The leverage map family and its domain geometry.
//!
//! The slow leverage recursion of a VaR-constrained bank reduces, for a large
//! number `n` of intraday trading rounds, to a unimodal map `T` of the scaled
//! leverage `phi` plus a state-dependent noise amplitude `sigma_n(phi)`:
//!
//! ```text
//! phi_t = T(phi_{t-1}) + sigma_n(phi_{t-1}) * eta_{t-1}
//! ```
//!
//! [`MapParams`] evaluates the closed forms (`V`, `F`, `A`, `B`, `T`,
//! `sigma_n`). [`find_geometry`] locates the critical point, the peak value
//! `delta`, and the zero crossing `b`, and [`LeverageMap`] combines both into
//! the map restricted to `[0, b]` and extended to `[-gamma_gap, b]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, GeometryError, Result};
use crate::quad::bisect;

/// The five constants of the leverage model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapParams {
    /// Liquidity intercept.
    pub gamma0: f64,
    /// VaR coefficient.
    pub alpha: f64,
    /// Aggregated exogenous return variance.
    pub sigma_eps: f64,
    /// Memory weight of adaptive volatility expectations.
    pub omega: f64,
    /// Liquidity-leverage slope.
    pub c: f64,
}

impl Default for MapParams {
    fn default() -> Self {
        Self::reference()
    }
}

impl MapParams {
    /// Reference configuration: empirical liquidity, 5% Gaussian VaR,
    /// `omega = 0.669` and a liquidity independent of leverage (`c = 0`).
    pub const fn reference() -> Self {
        Self { gamma0: 15.969, alpha: 1.64, sigma_eps: 2.7e-5, omega: 0.669, c: 0.0 }
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.gamma0 > 0.0 && self.gamma0.is_finite()) {
            return bad(format!("gamma0 must be positive, got {}", self.gamma0));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.sigma_eps > 0.0 && self.sigma_eps.is_finite()) {
            return bad(format!("sigma_eps must be positive, got {}", self.sigma_eps));
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return bad(format!("omega must lie in [0, 1], got {}", self.omega));
        }
        if !(self.c.abs() <= 1.0) {
            return bad(format!("|c| must not exceed 1, got {}", self.c));
        }
        Ok(())
    }

    /// `(1 - omega) * alpha^2 * sigma_eps`.
    pub fn sigma_bar(&self) -> f64 {
        (1.0 - self.omega) * self.alpha * self.alpha * self.sigma_eps
    }

    /// `V(u, v) = [omega (1 - c u)^2 / (1 + gamma0 u)^2 + sigma_bar / (1 - u - v)^2]^(-1/2)`.
    pub fn eval_v(&self, u: f64, v: f64) -> Result<f64> {
        let gap = 1.0 - (u + v);
        let lev = 1.0 + self.gamma0 * u;
        if gap == 0.0 {
            return Err(Error::Domain(format!("V has a pole at u + v = 1 (u = {u}, v = {v})")));
        }
        if lev == 0.0 {
            return Err(Error::Domain(format!("V undefined at 1 + gamma0 u = 0 (u = {u})")));
        }
        let mem = 1.0 - self.c * u;
        let bracket = self.omega * mem * mem / (lev * lev) + self.sigma_bar() / (gap * gap);
        if !(bracket > 0.0) || !bracket.is_finite() {
            return Err(Error::Domain(format!("V bracket is {bracket} at (u, v) = ({u}, {v})")));
        }
        Ok(bracket.powf(-0.5))
    }

    /// `F(phi, eta) = (V - 1) / (gamma0 + c V)`, the exact slow recursion
    /// with the AR estimate perturbed by `eta`.
    pub fn eval_f(&self, phi: f64, eta: f64) -> Result<f64> {
        let v = self.eval_v(phi, eta)?;
        let den = self.gamma0 + self.c * v;
        if den == 0.0 {
            return Err(Error::Domain(format!("gamma0 + c V vanishes at phi = {phi}")));
        }
        Ok((v - 1.0) / den)
    }

    #[inline]
    fn bracket(&self, u: f64) -> f64 {
        let mem = 1.0 - self.c * u;
        let lev = 1.0 + self.gamma0 * u;
        let inv = 1.0 / (1.0 - u);
        self.omega * mem * mem + self.sigma_bar() * inv * inv * lev * lev
    }

    /// `A(u) = (1 + gamma0 u) / sqrt(omega (1 - c u)^2 + sigma_bar (1 - u)^-2 (1 + gamma0 u)^2)`.
    pub fn eval_a(&self, u: f64) -> Result<f64> {
        if u == 1.0 {
            return Err(Error::Domain("A has a pole at u = 1".into()));
        }
        let d = self.bracket(u);
        if !(d > 0.0) {
            return Err(Error::Domain(format!("A bracket is {d} at u = {u}")));
        }
        Ok((1.0 + self.gamma0 * u) / d.sqrt())
    }

    /// `B(u) = sigma_bar (1 - u)^-1 (1 + gamma0 u)^3 / bracket^(3/2)`, the
    /// noise loading of the expansion in the form used by the reduced map.
    pub fn eval_b(&self, u: f64) -> Result<f64> {
        if u == 1.0 {
            return Err(Error::Domain("B has a pole at u = 1".into()));
        }
        let d = self.bracket(u);
        if !(d > 0.0) {
            return Err(Error::Domain(format!("B bracket is {d} at u = {u}")));
        }
        let lev = 1.0 + self.gamma0 * u;
        Ok(self.sigma_bar() / (1.0 - u) * lev * lev * lev / (d * d.sqrt()))
    }

    /// Unclipped closed form `T(phi) = (A - 1) / (gamma0 + c A)`, defined on
    /// the whole real line except `phi = 1`.
    #[inline]
    pub fn raw_t(&self, phi: f64) -> f64 {
        let a = (1.0 + self.gamma0 * phi) / self.bracket(phi).sqrt();
        (a - 1.0) / (self.gamma0 + self.c * a)
    }

    /// Closed-form derivative of [`raw_t`](Self::raw_t).
    #[inline]
    pub fn raw_t_prime(&self, phi: f64) -> f64 {
        let g = self.gamma0;
        let lev = 1.0 + g * phi;
        let mem = 1.0 - self.c * phi;
        let inv = 1.0 / (1.0 - phi);
        let sb = self.sigma_bar();
        let d = self.omega * mem * mem + sb * inv * inv * lev * lev;
        let dd =
            -2.0 * self.omega * self.c * mem + sb * (2.0 * inv * inv * inv * lev * lev + 2.0 * inv * inv * lev * g);
        let sd = d.sqrt();
        let a = lev / sd;
        let da = g / sd - lev * dd / (2.0 * d * sd);
        let den = g + self.c * a;
        (g + self.c) / (den * den) * da
    }

    /// Noise amplitude `sigma_n(phi)` of the reduced map.
    ///
    /// The noise law is symmetric, so only the magnitude is returned.
    pub fn sigma_n(&self, phi: f64, n: f64, mode: SigmaMode) -> Result<f64> {
        if !(phi.abs() < 1.0) {
            return Err(Error::Domain(format!("sigma_n requires |phi| < 1, got {phi}")));
        }
        if !(n > 0.0) {
            return Err(Error::InvalidParameter(format!("noise index n must be positive, got {n}")));
        }
        Ok(self.sigma_n_unchecked(phi, n, mode))
    }

    #[inline]
    pub(crate) fn sigma_n_unchecked(&self, phi: f64, n: f64, mode: SigmaMode) -> f64 {
        let g = self.gamma0;
        let d = self.bracket(phi);
        let sd = d.sqrt();
        let lev = 1.0 + g * phi;
        let a = lev / sd;
        let b = self.sigma_bar() / (1.0 - phi) * lev * lev * lev / (d * sd);
        let den = g + self.c * a;
        let base = (1.0 - phi * phi).sqrt() * (g + self.c) * b / (n.sqrt() * den);
        match mode {
            SigmaMode::Paper => base.abs(),
            SigmaMode::FirstOrder => (base / den).abs(),
            SigmaMode::ExactF => {
                let inv = 1.0 / (1.0 - phi);
                (base / den * inv * inv).abs()
            }
        }
    }
}

/// Closed form used for the noise amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaMode {
    /// Denominator `gamma0 + c A` as in the published reduced map.
    #[default]
    Paper,
    /// Denominator `(gamma0 + c A)^2` from a consistent first-order expansion.
    FirstOrder,
    /// No reduced map: the chain steps through `F(phi, eta sqrt((1 - phi^2)/n))`.
    /// The amplitude reported for this mode is the local linearization
    /// `|dF/dv(phi, 0)| sqrt((1 - phi^2)/n)`, which bounds the noise.
    ExactF,
}

/// Geometry of the restricted and extended map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapGeometry {
    /// Critical point.
    pub crit: f64,
    /// Peak value `T(crit)`.
    pub delta: f64,
    /// Zero crossing of `T` right of the critical point.
    pub b: f64,
    /// `b - delta`.
    pub gamma_gap: f64,
    /// `T(delta)`.
    pub core_lo: f64,
    /// `delta`.
    pub core_hi: f64,
    pub domain_lo: f64,
    pub domain_hi: f64,
}

impl MapGeometry {
    /// Whether `T(delta) < crit < delta`, i.e. the dynamical core is a
    /// genuine trapping interval around the critical point. Maps in periodic
    /// windows can violate this without the rest of the geometry failing.
    pub fn core_contains_crit(&self) -> bool {
        self.core_lo < self.crit && self.crit < self.core_hi
    }

    /// The interval `[T(1 - gamma_gap/2) / 2, 1 - gamma_gap/2]` that contains
    /// the support of every stationary measure under admissible noise.
    pub fn support_interval(&self, params: &MapParams) -> (f64, f64) {
        let hi = 1.0 - 0.5 * self.gamma_gap;
        (0.5 * params.raw_t(hi), hi)
    }

    pub fn in_core(&self, x: f64) -> bool {
        x >= self.core_lo.min(self.core_hi) && x <= self.core_hi.max(self.core_lo)
    }
}

const PRESCAN_POINTS: usize = 10_000;

/// Locate the critical point, peak value and zero crossing by a
/// `10^4`-point pre-scan followed by bisection to `tol`.
pub fn find_geometry(params: &MapParams, tol: f64) -> std::result::Result<MapGeometry, GeometryError> {
    let upper = 1.0 - 1e-9;
    let grid: Vec<f64> = (0..=PRESCAN_POINTS).map(|i| upper * i as f64 / PRESCAN_POINTS as f64).collect();

    let slopes: Vec<f64> = grid.iter().map(|&x| params.raw_t_prime(x)).collect();
    let mut changes = Vec::new();
    for i in 1..slopes.len() {
        if slopes[i - 1].signum() != slopes[i].signum() && slopes[i - 1] != 0.0 {
            changes.push(i);
        }
    }
    let peak_change = match changes.as_slice() {
        [] => return Err(GeometryError::NoCriticalPoint),
        [i] if slopes[*i - 1] > 0.0 => *i,
        [_] => return Err(GeometryError::NoCriticalPoint),
        more => return Err(GeometryError::NotUnimodal(more.len())),
    };
    let crit = bisect(|x| params.raw_t_prime(x), grid[peak_change - 1], grid[peak_change], tol)
        .map_err(|e| GeometryError::Degenerate(e.to_string()))?;
    let delta = params.raw_t(crit);

    let mut zero = None;
    for w in grid.windows(2).filter(|w| w[0] >= crit) {
        if params.raw_t(w[0]) > 0.0 && params.raw_t(w[1]) <= 0.0 {
            zero = Some((w[0], w[1]));
            break;
        }
    }
    let (zlo, zhi) = zero.ok_or(GeometryError::NoZeroCrossing)?;
    let b = bisect(|x| params.raw_t(x), zlo, zhi, tol).map_err(|e| GeometryError::Degenerate(e.to_string()))?;

    if b >= 1.0 {
        return Err(GeometryError::BNotBelowOne { b });
    }
    if delta >= b {
        return Err(GeometryError::DeltaNotBelowB { delta, b });
    }
    let gamma_gap = b - delta;
    Ok(MapGeometry {
        crit,
        delta,
        b,
        gamma_gap,
        core_lo: params.raw_t(delta),
        core_hi: delta,
        domain_lo: -gamma_gap,
        domain_hi: b,
    })
}

/// Left extension of the map on `[-gamma_gap, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Extension {
    /// `T(0) + s phi (phi / gap - 1) k` with `s = T'(0+)`.
    Quadratic { t0: f64, slope: f64, gap: f64, k: f64 },
    /// `T(0) - s phi`.
    Linear { t0: f64, slope: f64 },
}

impl Extension {
    fn build(params: &MapParams, geom: &MapGeometry) -> std::result::Result<Self, GeometryError> {
        let t0 = params.raw_t(0.0);
        if !(t0 > 0.0) {
            return Err(GeometryError::Degenerate(format!("T(0) = {t0} is not positive")));
        }
        let gap = geom.gamma_gap;
        let s = params.raw_t_prime(0.0);
        if s > 0.0 {
            let mut k = 1.0;
            if t0 + 2.0 * s * gap * k >= geom.delta {
                k = (geom.delta - t0) / (4.0 * s * gap);
            }
            Ok(Extension::Quadratic { t0, slope: s, gap, k })
        } else {
            let mut slope = s.abs();
            if slope == 0.0 || t0 + slope * gap >= geom.delta {
                slope = (geom.delta - t0) / (2.0 * gap);
            }
            Ok(Extension::Linear { t0, slope })
        }
    }

    #[inline]
    fn value(&self, phi: f64) -> f64 {
        match *self {
            Extension::Quadratic { t0, slope, gap, k } => t0 + slope * phi * (phi / gap - 1.0) * k,
            Extension::Linear { t0, slope } => t0 - slope * phi,
        }
    }

    #[inline]
    fn derivative(&self, phi: f64) -> f64 {
        match *self {
            Extension::Quadratic { slope, gap, k, .. } => slope * k * (2.0 * phi / gap - 1.0),
            Extension::Linear { slope, .. } => -slope,
        }
    }
}

/// The leverage map restricted to `[0, b]` and extended to `[-gamma_gap, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeverageMap {
    pub params: MapParams,
    pub geometry: MapGeometry,
    pub extension: Extension,
}

/// Bisection tolerance used when the caller does not supply one.
pub const GEOMETRY_TOL: f64 = 1e-12;

impl LeverageMap {
    pub fn new(params: MapParams) -> Result<Self> {
        params.validate()?;
        let geometry = find_geometry(&params, GEOMETRY_TOL)?;
        let extension = Extension::build(&params, &geometry)?;
        Ok(Self { params, geometry, extension })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.geometry.domain_lo, self.geometry.domain_hi)
    }

    pub fn contains(&self, phi: f64) -> bool {
        phi >= self.geometry.domain_lo && phi <= self.geometry.domain_hi
    }

    /// The map on the extended domain.
    pub fn t(&self, phi: f64) -> Result<f64> {
        if !self.contains(phi) {
            return Err(Error::Domain(format!(
                "phi = {phi} outside the extended domain [{}, {}]",
                self.geometry.domain_lo, self.geometry.domain_hi
            )));
        }
        Ok(self.t_unchecked(phi))
    }

    #[inline]
    pub(crate) fn t_unchecked(&self, phi: f64) -> f64 {
        if phi < 0.0 {
            self.extension.value(phi)
        } else {
            self.params.raw_t(phi)
        }
    }

    /// Derivative on the extended domain; undefined at the junction `0`.
    pub fn t_prime(&self, phi: f64) -> Result<f64> {
        if phi == 0.0 {
            return Err(Error::Domain("T is not differentiable at the junction 0".into()));
        }
        if !self.contains(phi) {
            return Err(Error::Domain(format!("phi = {phi} outside the extended domain")));
        }
        Ok(self.t_prime_unchecked(phi))
    }

    #[inline]
    pub(crate) fn t_prime_unchecked(&self, phi: f64) -> f64 {
        if phi < 0.0 {
            self.extension.derivative(phi)
        } else {
            self.params.raw_t_prime(phi)
        }
    }

    /// Schwarzian derivative from 5-point stencils on the closed-form `T'`.
    /// `None` where `T'` (numerically) vanishes.
    pub fn schwarzian(&self, phi: f64) -> Option<f64> {
        schwarzian_from_derivative(|x| self.t_prime_unchecked(x), phi, SCHWARZIAN_STEP)
    }
}

pub const SCHWARZIAN_STEP: f64 = 1e-4;

/// `S(f)(x) = f'''/f' - 3/2 (f''/f')^2`, with `f''` and `f'''` from 5-point
/// central stencils of the supplied first derivative.
pub fn schwarzian_from_derivative(fprime: impl Fn(f64) -> f64, x: f64, h: f64) -> Option<f64> {
    let d0 = fprime(x);
    if !(d0.abs() > 1e-8) {
        return None;
    }
    let (p1, m1, p2, m2) = (fprime(x + h), fprime(x - h), fprime(x + 2.0 * h), fprime(x - 2.0 * h));
    let d2 = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h);
    let d3 = (-p2 + 16.0 * p1 - 30.0 * d0 + 16.0 * m1 - m2) / (12.0 * h * h);
    let r = d2 / d0;
    Some(d3 / d0 - 1.5 * r * r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> MapParams {
        MapParams::reference()
    }

    // Independent evaluation of V and T by direct transcription of the closed
    // forms, without the shared bracket helper.
    fn v_direct(p: &MapParams, u: f64, v: f64) -> f64 {
        let sb = (1.0 - p.omega) * p.alpha.powi(2) * p.sigma_eps;
        (p.omega * (1.0 - p.c * u).powi(2) / (1.0 + p.gamma0 * u).powi(2) + sb / (1.0 - (u + v)).powi(2)).powf(-0.5)
    }

    #[test]
    fn sigma_bar_matches_arithmetic() {
        let p = reference();
        let expected = (1.0 - 0.669) * 1.64 * 1.64 * 2.7e-5;
        assert_eq!(p.sigma_bar(), expected);
        assert!((p.sigma_bar() - 2.4037e-5).abs() < 1e-9);
        assert_eq!(p.with_omega(1.0).sigma_bar(), 0.0);
        assert_eq!(MapParams { alpha: 0.0, ..p }.sigma_bar(), 0.0);
    }

    #[test]
    fn v_collapses_at_origin_and_vanishes_at_pole() {
        let p = reference().with_c(0.3);
        let v0 = p.eval_v(0.0, 0.0).unwrap();
        assert!((v0 - (p.omega + p.sigma_bar()).powf(-0.5)).abs() < 1e-14);
        let v = p.eval_v(0.5, 0.0).unwrap();
        assert!((v - v_direct(&p, 0.5, 0.0)).abs() < 1e-13 * v);
        let near = p.eval_v(0.5, 0.5 - 1e-9).unwrap();
        assert!(near > 0.0 && near < 1e-6);
        assert!(p.eval_v(0.5, 0.5).is_err());
    }

    #[test]
    fn f_reduces_to_closed_forms() {
        let p = reference().with_c(0.3);
        let s = (p.omega + p.sigma_bar()).powf(-0.5);
        let f0 = p.eval_f(0.0, 0.0).unwrap();
        assert!((f0 - (s - 1.0) / (p.gamma0 + p.c * s)).abs() < 1e-15);
        let v = v_direct(&p, 0.38, 0.01);
        let f = p.eval_f(0.38, 0.01).unwrap();
        assert!((f - (v - 1.0) / (p.gamma0 + p.c * v)).abs() < 1e-14);
    }

    #[test]
    fn a_is_the_zero_noise_slice_of_v() {
        let p = reference().with_c(0.3);
        assert!((p.eval_a(0.0).unwrap() - (p.omega + p.sigma_bar()).powf(-0.5)).abs() < 1e-14);
        for i in 0..=95 {
            let u = i as f64 * 0.01;
            let a = p.eval_a(u).unwrap();
            let v = p.eval_v(u, 0.0).unwrap();
            assert!((a - v).abs() <= 1e-12 * v.max(1.0), "u = {u}");
        }
        assert!(p.eval_a(1.0 - 1e-10).unwrap() < 1e-6);
        assert!(p.eval_a(1.0).is_err());
    }

    #[test]
    fn t_anchors() {
        let p = reference();
        let s = (p.omega + p.sigma_bar()).sqrt();
        let t0 = (1.0 - s) / (p.gamma0 * s + p.c);
        assert!((p.raw_t(0.0) - t0).abs() < 1e-12);
        assert!((p.raw_t(1.0 - 1e-8) + 1.0 / p.gamma0).abs() < 1e-6);
    }

    // High-precision (40 digit) evaluations of the closed forms.
    #[test]
    fn closed_form_reference_values() {
        let p3 = reference().with_c(0.3);
        let p0 = reference();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * y.abs();
        assert!(close(p3.eval_v(0.5, 0.0).unwrap(), 12.820_439_130_361_788));
        assert!(close(p3.eval_f(0.38, 0.01).unwrap(), 0.461_912_290_529_642_07));
        assert!(close(p0.eval_f(0.38, 0.01).unwrap(), 0.477_230_110_306_579_45));
        assert!(close(p0.sigma_n(0.38, 1000.0, SigmaMode::Paper).unwrap(), 7.267_402_051_361_083e-4));
        assert!(close(p3.sigma_n(0.38, 1000.0, SigmaMode::Paper).unwrap(), 8.983_815_159_245_905e-4));
    }

    #[test]
    fn derivative_matches_finite_differences() {
        for c in [-0.3, 0.0, 0.4] {
            let p = reference().with_c(c);
            for i in 0..200 {
                let x = 0.001 + 0.99 * i as f64 / 200.0;
                let h = 1e-6;
                let fd = (p.raw_t(x + h) - p.raw_t(x - h)) / (2.0 * h);
                assert!((p.raw_t_prime(x) - fd).abs() < 1e-6 * (1.0 + fd.abs()), "c={c} x={x}");
            }
        }
    }

    #[test]
    fn geometry_matches_dense_scan() {
        let p = reference();
        let g = find_geometry(&p, 1e-12).unwrap();
        // dense-grid oracle
        let n = 1_000_000;
        let (mut best, mut arg) = (f64::MIN, 0.0);
        let mut zero = None;
        for i in 0..n {
            let x = i as f64 / n as f64;
            let y = p.raw_t(x);
            if y > best {
                best = y;
                arg = x;
            }
            if zero.is_none() && x > arg && y <= 0.0 && best > 0.0 {
                zero = Some(x);
            }
        }
        assert!((g.crit - arg).abs() < 2e-6);
        assert!((g.delta - best).abs() < 1e-8);
        assert!((g.b - zero.unwrap()).abs() < 2e-6);
        assert!(g.delta < g.b && g.b < 1.0);
        assert!(p.raw_t(g.delta) < g.crit);
        assert!(g.core_contains_crit());
        assert!(p.raw_t_prime(g.crit).abs() < 1e-8);
        assert!(p.raw_t(g.b).abs() < 1e-9);
    }

    #[test]
    fn small_liquidity_has_no_valid_geometry() {
        let p = MapParams { gamma0: 2.0, ..reference() };
        assert!(find_geometry(&p, 1e-12).is_err());
    }

    #[test]
    fn extension_is_continuous_positive_decreasing() {
        let m = LeverageMap::new(reference()).unwrap();
        let g = m.geometry;
        let left = m.t_unchecked(-1e-15);
        assert!((left - m.params.raw_t(0.0)).abs() < 1e-10);
        assert!(m.t(-g.gamma_gap).unwrap() < g.delta);
        let mut prev = f64::INFINITY;
        for i in 0..100 {
            let x = -g.gamma_gap + g.gamma_gap * i as f64 / 100.0;
            let y = m.t(x).unwrap();
            assert!(y > 0.0 && y < prev);
            prev = y;
        }
        assert!(m.t_prime(0.0).is_err());
        assert!(m.t(g.b + 1e-6).is_err());
    }

    #[test]
    fn unimodal_sign_pattern_and_trapping() {
        let m = LeverageMap::new(reference()).unwrap();
        let g = m.geometry;
        for i in 1..1000 {
            let x = g.b * i as f64 / 1000.0;
            if (x - g.crit).abs() < 1e-6 {
                continue;
            }
            let d = m.t_prime(x).unwrap();
            assert_eq!(d > 0.0, x < g.crit, "x = {x}");
            assert!(m.t(x).unwrap() <= g.delta + 1e-12);
        }
        for i in 0..=1000 {
            let x = g.delta + (g.b - g.delta) * i as f64 / 1000.0;
            let y = m.t(x).unwrap();
            assert!((-1e-9..=g.delta).contains(&y), "x = {x}, T = {y}");
        }
        let max_abs =
            (0..=10_000).map(|i| m.params.raw_t(i as f64 / 10_000.0 * (1.0 - 1e-9)).abs()).fold(0.0, f64::max);
        assert!(max_abs < 1.0);
    }

    #[test]
    fn schwarzian_is_negative_on_the_core() {
        let m = LeverageMap::new(reference()).unwrap();
        let g = m.geometry;
        let mut sampled = 0;
        for i in 0..1000 {
            let x = g.core_lo + (g.core_hi - g.core_lo) * (i as f64 + 0.5) / 1000.0;
            if let Some(s) = m.schwarzian(x) {
                assert!(s < 0.0, "S(T)({x}) = {s}");
                sampled += 1;
            }
        }
        assert!(sampled > 990);
        assert!(m.schwarzian(g.crit).is_none());
    }

    #[test]
    fn schwarzian_annihilates_mobius() {
        // f(x) = (2x + 1) / (x + 3), f' = 5 / (x + 3)^2
        for x in [-1.0, 0.0, 0.5, 2.0] {
            let s = schwarzian_from_derivative(|y: f64| 5.0 / (y + 3.0).powi(2), x, 1e-4).unwrap();
            assert!(s.abs() < 1e-6, "S = {s}");
        }
    }

    #[test]
    fn sigma_modes_differ_by_the_denominator() {
        let p = reference().with_c(0.3);
        for phi in [0.1, 0.38, 0.8] {
            let paper = p.sigma_n(phi, 1000.0, SigmaMode::Paper).unwrap();
            let first = p.sigma_n(phi, 1000.0, SigmaMode::FirstOrder).unwrap();
            let a = p.eval_a(phi).unwrap();
            assert!((first - paper / (p.gamma0 + p.c * a)).abs() < 1e-15);
        }
        let direct = {
            let phi: f64 = 0.38;
            let a = p.eval_a(phi).unwrap();
            let b = p.eval_b(phi).unwrap();
            (1.0 - phi * phi).sqrt() * (p.gamma0 + p.c) * b / (1000f64.sqrt() * (p.gamma0 + p.c * a))
        };
        assert!((p.sigma_n(0.38, 1000.0, SigmaMode::Paper).unwrap() - direct).abs() < 1e-15);
        for phi in [0.2, 0.5, 0.85] {
            let h = 1e-7;
            let fd = (p.eval_f(phi, h).unwrap() - p.eval_f(phi, -h).unwrap()) / (2.0 * h);
            let lin = fd.abs() * ((1.0 - phi * phi) / 1000.0).sqrt();
            let s = p.sigma_n(phi, 1000.0, SigmaMode::ExactF).unwrap();
            assert!((s - lin).abs() < 1e-6 * s, "phi = {phi}: {s} vs {lin}");
        }
        let big = p.sigma_n(0.38, 1e30, SigmaMode::Paper).unwrap();
        assert!(big < 1e-15);
        assert!(p.sigma_n(1.0, 10.0, SigmaMode::Paper).is_err());
    }
}
