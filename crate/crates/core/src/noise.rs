//! Bump-truncated Gaussian noise, its sampler and the stochastic kernel.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::map::{LeverageMap, SigmaMode};
use crate::quad::{integrate_adaptive, GaussLegendre};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BumpKind {
    /// `exp(1 - 1 / (1 - (y/a)^2))` on `(-a, a)`.
    #[default]
    Mollifier,
    /// Equal to one on `[-a/2, a/2]`, smoothly decaying to zero at `±a`.
    Plateau,
}

#[inline]
fn psi(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Smooth bump supported on `[-a, a]` with `chi(0) = 1`.
#[inline]
pub fn bump_chi(y: f64, a: f64, kind: BumpKind) -> f64 {
    let r = y.abs() / a;
    if r >= 1.0 {
        return 0.0;
    }
    match kind {
        BumpKind::Mollifier => (1.0 - 1.0 / (1.0 - r * r)).exp(),
        BumpKind::Plateau => {
            if r <= 0.5 {
                1.0
            } else {
                let s = 2.0 * r - 1.0;
                let lo = psi(1.0 - s);
                lo / (lo + psi(s))
            }
        }
    }
}

/// `c_a = (∫ chi_a(y) exp(-y^2/2) dy)^-1`.
pub fn normalizer(a: f64, kind: BumpKind) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise half-width must be positive, got {a}")));
    }
    let mass = integrate_adaptive(|y| bump_chi(y, a, kind) * (-0.5 * y * y).exp(), -a, a, 1e-12)?;
    Ok(1.0 / mass)
}

const CDF_CELLS: usize = 4096;

/// The density `g_a(y) = c_a chi_a(y) exp(-y^2/2)` with a tabulated CDF and
/// a rejection sampler.
#[derive(Debug, Clone)]
pub struct NoiseLaw {
    a: f64,
    kind: BumpKind,
    c_a: f64,
    cdf_table: Vec<f64>,
    proposal_lo: f64,
    proposal_hi: f64,
}

impl NoiseLaw {
    pub fn new(a: f64, kind: BumpKind) -> Result<Self> {
        let c_a = normalizer(a, kind)?;
        let std = Normal::standard();
        let h = 2.0 * a / CDF_CELLS as f64;
        let gl = GaussLegendre::new(8);
        let mut cdf_table = Vec::with_capacity(CDF_CELLS + 1);
        let mut acc = 0.0;
        cdf_table.push(0.0);
        for i in 0..CDF_CELLS {
            let lo = -a + h * i as f64;
            acc += gl.integrate(lo, lo + h, |y| c_a * bump_chi(y, a, kind) * (-0.5 * y * y).exp());
            cdf_table.push(acc);
        }
        let total = acc;
        for v in cdf_table.iter_mut() {
            *v /= total;
        }
        Ok(Self { a, kind, c_a, cdf_table, proposal_lo: std.cdf(-a), proposal_hi: std.cdf(a) })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn kind(&self) -> BumpKind {
        self.kind
    }

    pub fn c_a(&self) -> f64 {
        self.c_a
    }

    #[inline]
    pub fn density(&self, y: f64) -> f64 {
        self.c_a * bump_chi(y, self.a, self.kind) * (-0.5 * y * y).exp()
    }

    /// Cumulative distribution by cubic Hermite interpolation of the
    /// tabulated integral, using the density as the nodal slope.
    #[inline]
    pub fn cdf(&self, y: f64) -> f64 {
        if y <= -self.a {
            return 0.0;
        }
        if y >= self.a {
            return 1.0;
        }
        let h = 2.0 * self.a / CDF_CELLS as f64;
        let pos = (y + self.a) / h;
        let i = (pos as usize).min(CDF_CELLS - 1);
        let t = pos - i as f64;
        let x0 = -self.a + h * i as f64;
        let (p0, p1) = (self.cdf_table[i], self.cdf_table[i + 1]);
        let (m0, m1) = (self.density(x0) * h, self.density(x0 + h) * h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * p0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * p1 + (t3 - t2) * m1
    }

    /// Probability of `[lo, hi]`.
    #[inline]
    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        (self.cdf(hi) - self.cdf(lo)).max(0.0)
    }

    pub fn variance(&self) -> Result<f64> {
        integrate_adaptive(|y| y * y * self.density(y), -self.a, self.a, 1e-12)
    }

    pub fn sampler(&self) -> NoiseSampler<'_> {
        NoiseSampler { law: self, proposals: 0, accepted: 0 }
    }
}

pub const MAX_CONSECUTIVE_REJECTS: u64 = 10_000;

/// Rejection sampler with a Gaussian proposal truncated to `[-a, a]`.
#[derive(Debug)]
pub struct NoiseSampler<'a> {
    law: &'a NoiseLaw,
    proposals: u64,
    accepted: u64,
}

impl NoiseSampler<'_> {
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        let law = self.law;
        for _ in 0..MAX_CONSECUTIVE_REJECTS {
            self.proposals += 1;
            let u = law.proposal_lo + (law.proposal_hi - law.proposal_lo) * rng.random::<f64>();
            let y = inverse_std_normal(u).clamp(-law.a, law.a);
            if rng.random::<f64>() < bump_chi(y, law.a, law.kind) {
                self.accepted += 1;
                return Ok(y);
            }
        }
        Err(Error::SamplerStalled(MAX_CONSECUTIVE_REJECTS))
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            return f64::NAN;
        }
        self.accepted as f64 / self.proposals as f64
    }

    pub fn proposals(&self) -> u64 {
        self.proposals
    }
}

#[inline]
fn inverse_std_normal(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * u)
}

/// Noise configuration: half-width `a`, intensity index `n` and bump kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub a: f64,
    pub n: f64,
    pub bump: BumpKind,
}

impl NoiseSpec {
    /// Build a spec, refusing amplitudes above the admissible bound.
    pub fn checked(map: &LeverageMap, a: f64, n: f64, bump: BumpKind, mode: SigmaMode) -> Result<Self> {
        let bound = admissible_a(map, n, mode)?;
        if !(a > 0.0) {
            return Err(Error::InvalidParameter(format!("noise half-width must be positive, got {a}")));
        }
        if a > bound {
            return Err(Error::InadmissibleNoise { a, bound });
        }
        Ok(Self { a, n, bump })
    }

    /// Spec at the admissible bound.
    pub fn at_bound(map: &LeverageMap, n: f64, bump: BumpKind, mode: SigmaMode) -> Result<Self> {
        let a = admissible_a(map, n, mode)?;
        Ok(Self { a, n, bump })
    }
}

pub const SIGMA_GRID: usize = 10_000;

/// Largest `sigma_n` on a `10^4`-point grid of the extended domain.
pub fn sigma_max(map: &LeverageMap, n: f64, mode: SigmaMode) -> Result<f64> {
    let (lo, hi) = map.domain();
    let mut best: f64 = 0.0;
    for i in 0..=SIGMA_GRID {
        let x = lo + (hi - lo) * i as f64 / SIGMA_GRID as f64;
        best = best.max(map.params.sigma_n(x, n, mode)?);
    }
    Ok(best)
}

/// `(1 / sigma_max) min{gap/2, q/2, T(1 - gap/2)/2}` with `q = T(0)`.
pub fn admissible_a(map: &LeverageMap, n: f64, mode: SigmaMode) -> Result<f64> {
    let g = &map.geometry;
    let q = map.params.raw_t(0.0);
    let tail = map.params.raw_t(1.0 - 0.5 * g.gamma_gap);
    let m = (0.5 * g.gamma_gap).min(0.5 * q).min(0.5 * tail);
    let smax = sigma_max(map, n, mode)?;
    if !(m > 0.0) || !(smax > 0.0) {
        return Err(Error::Domain(format!("degenerate noise bound: min term {m}, sigma_max {smax}")));
    }
    Ok(m / smax)
}

/// Value of the stochastic kernel `p_n(x, .)` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelValue {
    Density(f64),
    /// Zero noise amplitude: the transition is a point mass at `T(x)`.
    Dirac(f64),
}

/// `p_n(x, z) = g_a((z - T(x)) / sigma_n(x)) / sigma_n(x)`.
pub fn kernel_density(
    map: &LeverageMap,
    law: &NoiseLaw,
    n: f64,
    mode: SigmaMode,
    x: f64,
    z: f64,
) -> Result<KernelValue> {
    let t = map.t(x)?;
    let s = map.params.sigma_n(x, n, mode)?;
    if s == 0.0 {
        return Ok(KernelValue::Dirac(t));
    }
    Ok(KernelValue::Density(law.density((z - t) / s) / s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::MapParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bump_values() {
        for kind in [BumpKind::Mollifier, BumpKind::Plateau] {
            assert_eq!(bump_chi(0.0, 0.3, kind), 1.0);
            assert_eq!(bump_chi(0.3, 0.3, kind), 0.0);
            assert_eq!(bump_chi(-0.3, 0.3, kind), 0.0);
            for i in 0..100 {
                let y = 0.0031 * i as f64;
                assert_eq!(bump_chi(y, 0.3, kind), bump_chi(-y, 0.3, kind));
            }
        }
        assert!((bump_chi(0.5, 1.0, BumpKind::Mollifier) - (-1.0f64 / 3.0).exp()).abs() < 1e-15);
        assert_eq!(bump_chi(0.45, 1.0, BumpKind::Plateau), 1.0);
        assert!((bump_chi(0.75, 1.0, BumpKind::Plateau) - 0.5).abs() < 1e-15);
    }

    // Reference values from an independent adaptive quadrature.
    #[test]
    fn normalizer_values() {
        let c = normalizer(1.0, BumpKind::Plateau).unwrap();
        assert!((c - 0.731_695_578_654_305).abs() < 1e-10, "{c}");
        let c = normalizer(1.0, BumpKind::Mollifier).unwrap();
        assert!((c - 0.893_707_637_852_240).abs() < 1e-10, "{c}");
        let products: Vec<f64> =
            [1e-2, 1e-3, 1e-4].iter().map(|&a| a * normalizer(a, BumpKind::Mollifier).unwrap()).collect();
        assert!((products[1] - products[2]).abs() < 1e-6);
        assert!((products[0] - products[2]).abs() < 1e-4);
    }

    #[test]
    fn density_normalized_and_cdf_consistent() {
        for kind in [BumpKind::Mollifier, BumpKind::Plateau] {
            for a in [0.07, 0.7, 2.2] {
                let law = NoiseLaw::new(a, kind).unwrap();
                let total = integrate_adaptive(|y| law.density(y), -a, a, 1e-12).unwrap();
                assert!((total - 1.0).abs() < 1e-10);
                assert!((law.cdf(0.0) - 0.5).abs() < 1e-12);
                for i in 0..50 {
                    let y = -a + 2.0 * a * (i as f64 + 0.37) / 50.0;
                    let exact = integrate_adaptive(|s| law.density(s), -a, y, 1e-12).unwrap();
                    assert!((law.cdf(y) - exact).abs() < 1e-10, "a={a} y={y}");
                }
            }
        }
    }

    #[test]
    fn sampler_matches_cdf() {
        let law = NoiseLaw::new(0.711, BumpKind::Mollifier).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut s = law.sampler();
        let n = 1_000_000;
        let mut xs: Vec<f64> = (0..n).map(|_| s.sample(&mut rng).unwrap()).collect();
        assert!(xs.iter().all(|x| x.abs() <= law.a()));
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!(mean.abs() < 3.0 * sd / 1000.0);
        xs.sort_by(f64::total_cmp);
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = law.cdf(x);
                (f - i as f64 / n as f64).abs().max((f - (i + 1) as f64 / n as f64).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.002, "KS = {ks}");
        let rate = s.acceptance_rate();
        assert!(rate > 0.3 && rate < 1.0, "{rate}");
    }

    #[test]
    fn admissible_bound_scales_with_root_n() {
        let map = LeverageMap::new(MapParams::reference()).unwrap();
        let a1 = admissible_a(&map, 1000.0, SigmaMode::Paper).unwrap();
        let a4 = admissible_a(&map, 4000.0, SigmaMode::Paper).unwrap();
        assert!((a4 / a1 - 2.0).abs() < 1e-9);
        // grid-maximum reference computed independently
        assert!((a1 - 0.711_325_107_079_064).abs() < 1e-9, "{a1}");
        let too_big = NoiseSpec::checked(&map, 1.01 * a1, 1000.0, BumpKind::Mollifier, SigmaMode::Paper);
        assert!(matches!(too_big, Err(Error::InadmissibleNoise { .. })));
        assert!(NoiseSpec::checked(&map, a1, 1000.0, BumpKind::Mollifier, SigmaMode::Paper).is_ok());
    }

    #[test]
    fn kernel_normalized_and_supported() {
        let map = LeverageMap::new(MapParams::reference()).unwrap();
        let n = 1000.0;
        let spec = NoiseSpec::at_bound(&map, n, BumpKind::Mollifier, SigmaMode::Paper).unwrap();
        let law = NoiseLaw::new(spec.a, spec.bump).unwrap();
        let g = map.geometry;
        for i in 0..50 {
            let x = g.core_lo + (g.core_hi - g.core_lo) * (i as f64 + 0.5) / 50.0;
            let t = map.t(x).unwrap();
            let s = map.params.sigma_n(x, n, SigmaMode::Paper).unwrap();
            let p = |z: f64| match kernel_density(&map, &law, n, SigmaMode::Paper, x, z).unwrap() {
                KernelValue::Density(v) => v,
                KernelValue::Dirac(_) => unreachable!(),
            };
            let total = integrate_adaptive(p, t - spec.a * s, t + spec.a * s, 1e-12).unwrap();
            assert!((total - 1.0).abs() < 1e-8);
            assert_eq!(p(t + 1.0001 * spec.a * s), 0.0);
            assert_eq!(p(t - 1.0001 * spec.a * s), 0.0);
            let peak = (0..=200)
                .map(|k| t - spec.a * s + 2.0 * spec.a * s * k as f64 / 200.0)
                .max_by(|u, v| p(*u).total_cmp(&p(*v)))
                .unwrap();
            assert!((peak - t).abs() <= 2.0 * spec.a * s / 200.0);
        }
    }
}
