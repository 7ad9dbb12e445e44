//! Rare-set statistics for the chain: boundary levels, block maxima,
//! extremal index and visit counts.
//!
//! Rare sets are balls `B(z, e^{-u})`. The observable is
//! `phi(x) = -log|x - z|`, so `max phi <= u` over a block exactly when no
//! state of the block lies in the open ball of radius `e^{-u}`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Discrete, Poisson};

use crate::density::DensityEstimate;
use crate::error::{Error, Result};
use crate::orbit::{stream_rng, Chain};
use crate::quad::bisect;

pub const K_MAX: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLevel {
    pub t: usize,
    pub u: f64,
    pub radius: f64,
    /// Mass of the ball under the density estimate.
    pub mass: f64,
    /// Smallest density value on the ball.
    pub density_floor: f64,
}

/// Mass of `B(z, rho)` under `density`.
pub fn ball_mass(density: &DensityEstimate, z: f64, rho: f64) -> f64 {
    density.mass(z - rho, z + rho)
}

/// Solve `mu(B(z, e^{-u_t})) = tau / t` for every `t`.
pub fn boundary_levels(density: &DensityEstimate, z: f64, tau: f64, t_grid: &[usize]) -> Result<Vec<BoundaryLevel>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    if !(z > density.lo && z < density.hi) {
        return Err(Error::InvalidParameter(format!("target {z} outside the density grid")));
    }
    let extent = density.hi - density.lo;
    let mut out = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let target = tau / t as f64;
        if !(target < ball_mass(density, z, extent)) {
            return Err(Error::InvalidParameter(format!("tau / t = {target} is not below the total mass")));
        }
        let u = bisect(|u| ball_mass(density, z, (-u).exp()) - target, -extent.ln(), 60.0, 1e-12)?;
        let radius = (-u).exp();
        if density.width() > radius {
            let needed = (extent / radius).ceil() as u64;
            return Err(Error::InsufficientData(format!(
                "bin width {:e} exceeds the radius {radius:e} at t = {t}; at least {needed} bins required",
                density.width()
            )));
        }
        let density_floor = density_floor(density, z, radius);
        if !(density_floor > 0.0) {
            return Err(Error::ModelBreakdown(format!("density vanishes on B({z}, {radius:e}) at t = {t}")));
        }
        out.push(BoundaryLevel { t, u, radius, mass: ball_mass(density, z, radius), density_floor });
    }
    Ok(out)
}

fn density_floor(density: &DensityEstimate, z: f64, rho: f64) -> f64 {
    let w = density.width();
    let first = (((z - rho - density.lo) / w).floor().max(0.0)) as usize;
    let last = ((((z + rho - density.lo) / w).floor()) as usize).min(density.bins() - 1);
    density.masses[first..=last].iter().copied().fold(f64::INFINITY, f64::min) / w
}

/// `|X_k - z|` along one stationary orbit of `length` states after `burn_in`
/// steps from `x0` (stream 0 of `seed`).
pub fn orbit_distances(chain: &Chain, z: f64, x0: f64, burn_in: usize, length: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = stream_rng(seed, 0);
    let mut out = Vec::with_capacity(length);
    chain.walk(x0, burn_in + length, &mut rng, |t, x| {
        if t > burn_in {
            out.push((x - z).abs());
        }
    })?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockEstimate {
    pub t: usize,
    pub u: f64,
    pub blocks: usize,
    /// Fraction of blocks with `M_t <= u_t`.
    pub p_hat: f64,
    pub stderr: f64,
}

impl BlockEstimate {
    fn from_hits(t: usize, u: f64, clear: usize, blocks: usize) -> Result<Self> {
        if blocks == 0 {
            return Err(Error::InsufficientData(format!("no complete block of length {t}")));
        }
        let p_hat = clear as f64 / blocks as f64;
        Ok(Self { t, u, blocks, p_hat, stderr: (p_hat * (1.0 - p_hat) / blocks as f64).sqrt() })
    }
}

/// Per-block indicator of `{max phi <= u}` over disjoint blocks of length `t`.
pub fn block_indicators_phi(dist: &[f64], t: usize, u: f64) -> Vec<bool> {
    dist.chunks_exact(t).map(|b| b.iter().all(|d| -d.ln() <= u)).collect()
}

/// Per-block indicator of `{no state in B(z, e^{-u})}`.
pub fn block_indicators_ball(dist: &[f64], t: usize, u: f64) -> Vec<bool> {
    let rho = (-u).exp();
    dist.chunks_exact(t).map(|b| b.iter().all(|d| *d >= rho)).collect()
}

/// `P(M_t <= u_t)` from disjoint blocks of one long orbit.
pub fn block_maxima_prob(dist: &[f64], levels: &[BoundaryLevel]) -> Result<Vec<BlockEstimate>> {
    crate::par::map_indices(levels.len(), |i| {
        let lv = levels[i];
        let ind = block_indicators_phi(dist, lv.t, lv.u);
        BlockEstimate::from_hits(lv.t, lv.u, ind.iter().filter(|b| **b).count(), ind.len())
    })
    .into_iter()
    .collect()
}

/// `P(M_t <= u_t)` from `count` independent orbits, each started at `x0` and
/// observed for `t` states after `burn_in` steps. Orbit `k` uses stream `k`.
pub fn restart_block_prob(
    chain: &Chain,
    z: f64,
    x0: f64,
    burn_in: usize,
    level: BoundaryLevel,
    count: usize,
    seed: u64,
) -> Result<BlockEstimate> {
    let flags = crate::par::map_indices(count, |k| -> Result<bool> {
        let mut rng = stream_rng(seed, k as u64);
        let mut clear = true;
        chain.walk(x0, burn_in + level.t, &mut rng, |s, x| {
            if s > burn_in && -(x - z).abs().ln() > level.u {
                clear = false;
            }
        })?;
        Ok(clear)
    });
    let flags: Vec<bool> = flags.into_iter().collect::<Result<_>>()?;
    BlockEstimate::from_hits(level.t, level.u, flags.iter().filter(|b| **b).count(), count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalIndex {
    pub t: usize,
    pub radius: f64,
    pub visits: usize,
    /// `q_k`: fraction of visits whose next visit comes after exactly `k + 1` steps.
    pub q: Vec<f64>,
    pub theta: f64,
}

/// Extremal index `1 - sum_{k<=k_max} q_k` from first returns to `B(z, radius)`.
pub fn extremal_index(dist: &[f64], t: usize, radius: f64, k_max: usize) -> Result<ExtremalIndex> {
    let visits: Vec<usize> = (0..dist.len()).filter(|&i| dist[i] < radius).collect();
    // only visits with a full look-ahead window count
    let usable = visits.iter().filter(|&&i| i + k_max + 1 < dist.len()).count();
    if usable == 0 {
        return Err(Error::InsufficientData(format!("no visits to the ball of radius {radius:e}")));
    }
    let mut q = vec![0.0; k_max + 1];
    for w in visits.windows(2) {
        let gap = w[1] - w[0];
        if w[0] + k_max + 1 < dist.len() && gap <= k_max + 1 {
            q[gap - 1] += 1.0;
        }
    }
    q.iter_mut().for_each(|v| *v /= usable as f64);
    let theta = 1.0 - q.iter().sum::<f64>();
    Ok(ExtremalIndex { t, radius, visits: usable, q, theta })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonTable {
    pub s: f64,
    pub t: usize,
    /// States per window.
    pub window: usize,
    pub windows: usize,
    pub p_hat: Vec<f64>,
    pub pmf: Vec<f64>,
    pub mean: f64,
    /// Pearson statistic with the upper tail pooled until the expected count is at least 5.
    pub chi2: f64,
}

/// Visit counts `N(s)` over disjoint windows of `floor(s / mass) + 1` states,
/// compared with the Poisson(s) law.
pub fn poisson_counts(dist: &[f64], level: &BoundaryLevel, s_list: &[f64]) -> Result<Vec<PoissonTable>> {
    let mut out = Vec::with_capacity(s_list.len());
    for &s in s_list {
        if !(s > 0.0) {
            return Err(Error::InvalidParameter(format!("s must be positive, got {s}")));
        }
        let span = (s / level.mass).floor() as usize;
        if span == 0 {
            continue;
        }
        let window = span + 1;
        let counts: Vec<usize> =
            dist.chunks_exact(window).map(|w| w.iter().filter(|d| **d < level.radius).count()).collect();
        if counts.is_empty() {
            return Err(Error::InsufficientData(format!("orbit shorter than one window of {window} states")));
        }
        let windows = counts.len();
        let top = counts.iter().copied().max().unwrap_or(0);
        let mut p_hat = vec![0.0; top + 1];
        for &c in &counts {
            p_hat[c] += 1.0;
        }
        p_hat.iter_mut().for_each(|p| *p /= windows as f64);
        let law = Poisson::new(s).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let pmf: Vec<f64> = (0..=top).map(|k| law.pmf(k as u64)).collect();
        let mean = counts.iter().sum::<usize>() as f64 / windows as f64;
        out.push(PoissonTable {
            s,
            t: level.t,
            window,
            windows,
            chi2: pooled_chi2(&p_hat, s, windows),
            p_hat,
            pmf,
            mean,
        });
    }
    Ok(out)
}

fn pooled_chi2(p_hat: &[f64], s: f64, windows: usize) -> f64 {
    let law = Poisson::new(s).expect("positive rate");
    let n = windows as f64;
    let mut chi2 = 0.0;
    let mut k = 0usize;
    let mut seen_p = 0.0;
    let mut seen_obs = 0.0;
    loop {
        let p = law.pmf(k as u64);
        let expected_rest = n * (1.0 - seen_p);
        if n * p < 5.0 || expected_rest - n * p < 5.0 {
            let obs_rest = n * (1.0 - seen_obs);
            if expected_rest > 0.0 {
                chi2 += (obs_rest - expected_rest).powi(2) / expected_rest;
            }
            return chi2;
        }
        let obs = n * p_hat.get(k).copied().unwrap_or(0.0);
        chi2 += (obs - n * p).powi(2) / (n * p);
        seen_p += p;
        seen_obs += obs / n;
        k += 1;
    }
}

/// `t = 10^1, 10^1.5, ..., 10^4` rounded.
pub fn default_t_grid() -> Vec<usize> {
    (2..=8).map(|k| 10f64.powf(k as f64 / 2.0).round() as usize).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{LeverageMap, MapParams};

    fn uniform_density() -> DensityEstimate {
        DensityEstimate::from_masses(0.0, 1.0, vec![1.0; 100_000], "uniform").unwrap()
    }

    #[test]
    fn levels_on_uniform_density() {
        let d = uniform_density();
        let lv = boundary_levels(&d, 0.5, 10f64.ln(), &[10, 20, 1000, 2000]).unwrap();
        for l in &lv {
            assert!((l.mass * l.t as f64 / 10f64.ln() - 1.0).abs() < 1e-9);
            assert!((l.radius - 10f64.ln() / (2.0 * l.t as f64)).abs() < 1e-10);
        }
        assert!(lv.windows(2).all(|w| w[1].u > w[0].u));
        assert!((lv[1].u - lv[0].u - 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn coarse_density_is_refused_with_bin_count() {
        let d = DensityEstimate::from_masses(0.0, 1.0, vec![1.0; 100], "coarse").unwrap();
        match boundary_levels(&d, 0.5, 1.0, &[10_000]) {
            Err(Error::InsufficientData(msg)) => assert!(msg.contains("20000 bins"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn vanishing_density_aborts() {
        let mut m = vec![1.0; 10_000];
        m[5000..5010].iter_mut().for_each(|v| *v = 0.0);
        let d = DensityEstimate::from_masses(0.0, 1.0, m, "hole").unwrap();
        assert!(matches!(boundary_levels(&d, 0.5005, 0.01, &[10]), Err(Error::ModelBreakdown(_))));
    }

    #[test]
    fn iid_uniform_blocks_follow_the_exponential_law() {
        use rand::Rng;
        let mut rng = stream_rng(8, 0);
        let dist: Vec<f64> = (0..2_000_000).map(|_| (rng.random::<f64>() - 0.5).abs()).collect();
        let d = uniform_density();
        let tau = 10f64.ln();
        let lv = boundary_levels(&d, 0.5, tau, &[1000]).unwrap();
        let est = block_maxima_prob(&dist, &lv).unwrap()[0];
        assert!((est.p_hat - (1.0 - tau / 1000.0).powi(1000)).abs() < 3.0 * est.stderr + 1e-3, "{est:?}");
        assert_eq!(block_indicators_phi(&dist, 1000, lv[0].u), block_indicators_ball(&dist, 1000, lv[0].u));
        let half = block_maxima_prob(&dist[..1_000_000], &lv).unwrap()[0];
        let ratio = est.stderr / half.stderr;
        assert!((ratio - 0.5f64.sqrt()).abs() < 0.05, "{ratio}");
        let ei = extremal_index(&dist, 1000, lv[0].radius, K_MAX).unwrap();
        assert!(ei.theta > 0.9, "{ei:?}");
        let tables = poisson_counts(&dist, &lv[0], &[1.0]).unwrap();
        assert!((tables[0].p_hat[0] - (-1f64).exp()).abs() < 0.03);
        assert!((tables[0].mean - 1.0).abs() < 0.05);
    }

    #[test]
    fn tiny_tau_gives_probability_near_one() {
        let dist: Vec<f64> = (0..100_000).map(|k| ((k * 7919) % 1000) as f64 / 2000.0 + 1e-3).collect();
        let d = uniform_density();
        let lv = boundary_levels(&d, 0.5, 1e-2, &[10]).unwrap();
        assert_eq!(block_maxima_prob(&dist, &lv).unwrap()[0].p_hat, 1.0);
    }

    #[test]
    fn periodic_target_clusters() {
        let map = LeverageMap::new(MapParams::reference().with_c(0.8)).unwrap();
        let chain = Chain::deterministic(map);
        let mut x = 0.5;
        for _ in 0..10_000 {
            x = map.t(x).unwrap();
        }
        let dist = orbit_distances(&chain, x, 0.38, 10_000, 100_000, 0).unwrap();
        let ei = extremal_index(&dist, 100, 1e-6, K_MAX).unwrap();
        assert!(ei.theta < 0.1, "{ei:?}");
    }

    #[test]
    fn poisson_reference_and_degenerate_windows() {
        let lv = BoundaryLevel { t: 10, u: 1.0, radius: 0.1, mass: 0.5, density_floor: 1.0 };
        let dist = vec![1.0; 100];
        assert!(poisson_counts(&dist, &lv, &[0.25]).unwrap().is_empty());
        let tab = poisson_counts(&dist, &lv, &[2.0]).unwrap();
        assert_eq!(tab[0].window, 5);
        assert!((tab[0].pmf[0] - (-2f64).exp()).abs() < 1e-15);
        assert_eq!(tab[0].p_hat, vec![1.0]);
    }
}
