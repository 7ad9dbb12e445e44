//! Lyapunov exponents of the deterministic and randomly perturbed map,
//! parameter scans and bifurcation diagrams.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::map::{LeverageMap, MapParams, SigmaMode};
use crate::noise::{admissible_a, BumpKind, NoiseSpec};
use crate::orbit::{stream_rng, Chain};
use crate::stats::BatchMeans;
use crate::ulam::Stationary;

/// Samples with `|T'|` below this are excluded from the average.
pub const DERIVATIVE_FLOOR: f64 = 1e-300;
pub const CRITICAL_HIT: f64 = 1e-14;
pub const BATCHES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovResult {
    pub estimate: f64,
    pub stderr: f64,
    pub length: usize,
    pub burn_in: usize,
    /// Samples dropped because `|T'|` underflowed.
    pub excluded: usize,
    /// Visits within `1e-14` of the critical point.
    pub critical_hits: usize,
}

/// Time average of `log|T'|` along an orbit of `chain` (stream 0 of `seed`).
/// A deterministic chain gives the indicator `l_T(x0)`.
pub fn orbit_lyapunov(chain: &Chain, x0: f64, length: usize, burn_in: usize, seed: u64) -> Result<LyapunovResult> {
    orbit_lyapunov_on_stream(chain, x0, length, burn_in, seed, 0)
}

fn orbit_lyapunov_on_stream(
    chain: &Chain,
    x0: f64,
    length: usize,
    burn_in: usize,
    seed: u64,
    stream: u64,
) -> Result<LyapunovResult> {
    let mut bm = BatchMeans::new(length, BATCHES);
    let mut excluded = 0;
    let mut critical_hits = 0;
    let crit = chain.map.geometry.crit;
    let mut rng = stream_rng(seed, stream);
    let mut prev = x0;
    chain.walk(x0, burn_in + length, &mut rng, |t, x| {
        if t > burn_in {
            // derivative at the state the step was taken from
            let d = chain.map.t_prime_unchecked(prev).abs();
            if (prev - crit).abs() < CRITICAL_HIT {
                critical_hits += 1;
            }
            if d < DERIVATIVE_FLOOR || !d.is_finite() {
                excluded += 1;
            } else {
                bm.push(d.ln());
            }
        }
        prev = x;
    })?;
    Ok(LyapunovResult { estimate: bm.mean(), stderr: bm.stderr(), length, burn_in, excluded, critical_hits })
}

pub fn deterministic_lyapunov(map: &LeverageMap, x0: f64, length: usize, burn_in: usize) -> Result<LyapunovResult> {
    orbit_lyapunov(&Chain::deterministic(*map), x0, length, burn_in, 0)
}

/// `l_T(x0)` over a grid of initial states.
pub fn indicator_grid(map: &LeverageMap, x0s: &[f64], length: usize) -> Vec<(f64, Result<f64>)> {
    let det = Chain::deterministic(*map);
    let out = crate::par::map_indices(x0s.len(), |k| orbit_lyapunov(&det, x0s[k], length, 0, 0).map(|r| r.estimate));
    x0s.iter().copied().zip(out).collect()
}

/// `∫ log|T'| h` with the Ulam stationary density.
pub fn lyapunov_quadrature(map: &LeverageMap, stationary: &Stationary) -> f64 {
    stationary.density.integrate(|x| {
        let d = map.t_prime_unchecked(x).abs();
        if d < DERIVATIVE_FLOOR {
            0.0
        } else {
            d.ln()
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellFlag {
    Ok,
    /// No valid geometry for this `c`.
    Geometry,
    /// The orbit left the domain or the estimate was not finite.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanCell {
    pub c: f64,
    /// `None` for the deterministic row.
    pub n: Option<f64>,
    pub lambda: f64,
    pub stderr: f64,
    pub flag: CellFlag,
}

/// Lyapunov exponents over `c_grid` for the deterministic map (`None`) and
/// each noise index in `n_list`. At each `c` the noise half-width is the
/// admissible bound of the smallest noise index, so all rows share one `a`.
pub struct ScanSetup {
    pub base: MapParams,
    pub c_grid: Vec<f64>,
    pub n_list: Vec<Option<f64>>,
    pub x0: f64,
    pub length: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub bump: BumpKind,
    pub mode: SigmaMode,
}

pub fn lyapunov_scan(setup: &ScanSetup) -> Vec<ScanCell> {
    let cols = setup.n_list.len();
    let n_min = setup.n_list.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    crate::par::map_indices(setup.c_grid.len() * cols, |k| {
        let c = setup.c_grid[k / cols];
        let n = setup.n_list[k % cols];
        let gap = ScanCell { c, n, lambda: f64::NAN, stderr: f64::NAN, flag: CellFlag::Geometry };
        let Ok(map) = LeverageMap::new(setup.base.with_c(c)) else {
            return gap;
        };
        let x0 = if map.contains(setup.x0) { setup.x0 } else { map.geometry.crit * 0.5 };
        let chain = match n {
            None => Ok(Chain::deterministic(map)),
            Some(n) => admissible_a(&map, n_min, setup.mode)
                .and_then(|a| Chain::random(map, NoiseSpec { a, n, bump: setup.bump }, setup.mode)),
        };
        let res =
            chain.and_then(|ch| orbit_lyapunov_on_stream(&ch, x0, setup.length, setup.burn_in, setup.seed, k as u64));
        match res {
            Ok(r) if r.estimate.is_finite() => {
                ScanCell { c, n, lambda: r.estimate, stderr: r.stderr, flag: CellFlag::Ok }
            }
            _ => ScanCell { flag: CellFlag::Failed, ..gap },
        }
    })
}

/// One point of a bifurcation diagram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BifurcationPoint {
    pub c: f64,
    pub phi: f64,
    /// Whether the map at this `c` has a valid restricted-domain geometry.
    pub geometry_ok: bool,
}

/// Asymptotic states of the unrestricted closed-form map from `x0`, for each
/// `c`. The closed form is iterated wherever it is finite, including past
/// `phi = 1`; orbits that hit the pole contribute nothing.
pub fn bifurcation_diagram(
    base: &MapParams,
    c_grid: &[f64],
    x0: f64,
    transient: usize,
    keep: usize,
) -> Vec<BifurcationPoint> {
    let rows = crate::par::map_indices(c_grid.len(), |k| {
        let p = base.with_c(c_grid[k]);
        let geometry_ok = LeverageMap::new(p).is_ok();
        let mut x = x0;
        let mut out = Vec::with_capacity(keep);
        for t in 0..transient + keep {
            x = p.raw_t(x);
            if !x.is_finite() {
                return Vec::new();
            }
            if t >= transient {
                out.push(BifurcationPoint { c: p.c, phi: x, geometry_ok });
            }
        }
        out
    });
    rows.into_iter().flatten().collect()
}

/// Number of distinct clusters among asymptotic states, merging values
/// closer than `tol`.
pub fn cluster_count(values: &[f64], tol: f64) -> usize {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return 0;
    }
    1 + v.windows(2).filter(|w| w[1] - w[0] > tol).count()
}

pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_map() -> LeverageMap {
        LeverageMap::new(MapParams::reference()).unwrap()
    }

    #[test]
    fn attracting_fixed_point_gives_log_derivative() {
        let map = LeverageMap::new(MapParams::reference().with_c(0.8)).unwrap();
        let mut x = 0.5;
        for _ in 0..100_000 {
            x = map.t(x).unwrap();
        }
        let expected = map.t_prime(x).unwrap().abs().ln();
        assert!(expected < 0.0);
        let r = deterministic_lyapunov(&map, 0.5, 100_000, 10_000).unwrap();
        assert!((r.estimate - expected).abs() < 1e-8, "{} vs {expected}", r.estimate);
    }

    #[test]
    fn reference_map_is_chaotic_from_many_starts() {
        let map = reference_map();
        let g = map.geometry;
        let starts: Vec<f64> =
            (0..10).map(|k| g.core_lo + (g.core_hi - g.core_lo) * (k as f64 + 0.31) / 10.0).collect();
        let values: Vec<f64> = indicator_grid(&map, &starts, 1_000_000).into_iter().map(|(_, r)| r.unwrap()).collect();
        let (lo, hi) = values.iter().fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
        assert!(lo > 0.0);
        assert!(hi - lo < 0.05, "{values:?}");
    }

    #[test]
    fn doubling_length_is_within_two_standard_errors() {
        let map = reference_map();
        let a = deterministic_lyapunov(&map, 0.38, 1_000_000, 1000).unwrap();
        let b = deterministic_lyapunov(&map, 0.38, 2_000_000, 1000).unwrap();
        assert!((a.estimate - b.estimate).abs() < 2.0 * a.stderr.max(b.stderr), "{a:?} {b:?}");
    }

    #[test]
    fn deterministic_chain_matches_exactly() {
        let map = reference_map();
        let det = deterministic_lyapunov(&map, 0.38, 10_000, 100).unwrap();
        let via_chain = orbit_lyapunov(&Chain::deterministic(map), 0.38, 10_000, 100, 12345).unwrap();
        assert_eq!(det, via_chain);
    }

    #[test]
    fn bifurcation_regimes() {
        let base = MapParams::reference();
        let at = |c: f64| -> Vec<f64> {
            bifurcation_diagram(&base, &[c], 0.38, 5000, 500).into_iter().map(|p| p.phi).collect()
        };
        assert_eq!(cluster_count(&at(0.8), 1e-6), 1);
        let neg = at(-0.9);
        assert_eq!(cluster_count(&neg, 1e-6), 1);
        assert!(neg[0] < 0.0);
        assert!(cluster_count(&at(0.0), 1e-6) > 10);
    }

    #[test]
    fn cluster_counting() {
        assert_eq!(cluster_count(&[0.1, 0.5, 0.1000001, 0.5], 1e-3), 2);
        assert_eq!(cluster_count(&[], 1e-3), 0);
    }
}
