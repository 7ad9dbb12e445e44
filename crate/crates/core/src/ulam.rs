//! Ulam discretization of the Markov operator on the stationary-support
//! interval, its fixed point, spectral gap and correlation decay.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::density::DensityEstimate;
use crate::error::{Error, Result};
use crate::map::SigmaMode;
use crate::orbit::Chain;
use crate::quad::GaussLegendre;

/// Nonzero band of one row, starting at column `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub start: usize,
    pub values: Vec<f64>,
}

/// Row-stochastic matrix on a uniform partition of `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UlamOperator {
    pub lo: f64,
    pub hi: f64,
    pub rows: Vec<Row>,
    /// Largest mass lost to the grid boundary before renormalization.
    pub max_defect: f64,
    pub quad_order: usize,
}

pub const MAX_DEFECT: f64 = 1e-6;
pub const QUAD_ORDER: usize = 8;

impl UlamOperator {
    /// `M[i][j] = |cell_i|^-1 ∫_{cell_i} ∫_{cell_j} p_n(x, z) dz dx` on the
    /// support interval of the chain. The inner integral is exact through
    /// the noise CDF; the outer one uses Gauss-Legendre nodes.
    pub fn build(chain: &Chain, m: usize) -> Result<Self> {
        let (lo, hi) = chain.map.geometry.support_interval(&chain.map.params);
        Self::build_on(chain, m, lo, hi)
    }

    pub fn build_on(chain: &Chain, m: usize, lo: f64, hi: f64) -> Result<Self> {
        if m < 32 {
            return Err(Error::InvalidParameter(format!("at least 32 cells required, got {m}")));
        }
        let (spec, law) = match (chain.spec(), chain.law(), chain.mode.sigma_mode()) {
            (Some(s), Some(l), Some(SigmaMode::Paper | SigmaMode::FirstOrder)) => (s, l),
            _ => {
                return Err(Error::InvalidParameter(
                    "the transfer operator needs a random chain with a reduced-map noise mode".into(),
                ))
            }
        };
        let a = spec.a;
        let width = (hi - lo) / m as f64;
        let gl = GaussLegendre::new(QUAD_ORDER);
        let built = crate::par::map_indices(m, |i| -> Result<(Row, f64)> {
            let x_lo = lo + width * i as f64;
            let mut acc: Vec<f64> = Vec::new();
            let mut start = usize::MAX;
            let mut nodes = Vec::with_capacity(QUAD_ORDER);
            for (x, w) in gl.on(x_lo, x_lo + width) {
                let t = chain.map.t_unchecked(x);
                let s = chain.sigma(x);
                if !(s > 0.0) {
                    return Err(Error::Domain(format!("zero noise amplitude at quadrature node {x}")));
                }
                nodes.push((t, s, w));
                let j0 = (((t - a * s - lo) / width).floor().max(0.0)) as usize;
                start = start.min(j0.min(m - 1));
            }
            let stop = nodes
                .iter()
                .map(|&(t, s, _)| (((t + a * s - lo) / width).ceil().max(0.0) as usize).min(m))
                .max()
                .unwrap_or(0)
                .max(start + 1);
            acc.resize(stop - start, 0.0);
            for &(t, s, w) in &nodes {
                for (k, slot) in acc.iter_mut().enumerate() {
                    let z_lo = lo + width * (start + k) as f64;
                    *slot += w * law.mass((z_lo - t) / s, (z_lo + width - t) / s);
                }
            }
            let total: f64 = acc.iter().map(|v| v / width).sum();
            let defect = (1.0 - total).abs();
            let values = acc.iter().map(|v| v / width / total).collect();
            Ok((Row { start, values }, defect))
        });
        let mut rows = Vec::with_capacity(m);
        let mut max_defect: f64 = 0.0;
        for r in built {
            let (row, d) = r?;
            max_defect = max_defect.max(d);
            rows.push(row);
        }
        if max_defect > MAX_DEFECT {
            return Err(Error::ModelBreakdown(format!(
                "kernel mass leaks past the grid: renormalization defect {max_defect:e}"
            )));
        }
        Ok(Self { lo, hi, rows, max_defect, quad_order: QUAD_ORDER })
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.rows.len() as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + self.width() * (i as f64 + 0.5)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = &self.rows[i];
        if j < r.start {
            return 0.0;
        }
        r.values.get(j - r.start).copied().unwrap_or(0.0)
    }

    /// `out = v M`.
    pub fn apply_left(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (vi, row) in v.iter().zip(&self.rows) {
            if *vi == 0.0 {
                continue;
            }
            for (o, m) in out[row.start..].iter_mut().zip(&row.values) {
                *o += vi * m;
            }
        }
    }

    /// `out = M g`.
    pub fn apply_right(&self, g: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.values.iter().zip(&g[row.start..]).map(|(m, x)| m * x).sum();
        }
    }

    /// `(row, col, value)` for every stored entry.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.values.iter().enumerate().map(move |(k, v)| (i, r.start + k, *v)))
    }

    /// Fixed point of `p -> p M` from a given positive start.
    pub fn fixed_point_from(&self, start: Vec<f64>, tol: f64, max_iter: usize) -> Result<(Vec<f64>, f64, usize)> {
        let mut p = normalized(start);
        let mut next = vec![0.0; p.len()];
        let mut residual = f64::INFINITY;
        for k in 1..=max_iter {
            self.apply_left(&p, &mut next);
            let next_n = normalized(std::mem::take(&mut next));
            residual = l1(&next_n, &p);
            next = std::mem::replace(&mut p, next_n);
            if residual < tol {
                return Ok((p, residual, k));
            }
        }
        Err(Error::NoConvergence(format!("power iteration residual {residual:e} after {max_iter} iterations")))
    }

    /// Stationary density by power iteration from the uniform vector,
    /// cross-checked against five random positive starts.
    pub fn stationary(&self, seed: u64) -> Result<Stationary> {
        let m = self.size();
        let (p, residual, iterations) = self.fixed_point_from(vec![1.0; m], STATIONARY_TOL, STATIONARY_MAX_ITER)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut runs = vec![p.clone()];
        for _ in 0..RESTARTS {
            let start: Vec<f64> = (0..m).map(|_| 0.01 + rng.random::<f64>()).collect();
            runs.push(self.fixed_point_from(start, STATIONARY_TOL, STATIONARY_MAX_ITER)?.0);
        }
        let mut restart_spread: f64 = 0.0;
        for i in 0..runs.len() {
            for j in i + 1..runs.len() {
                restart_spread = restart_spread.max(l1(&runs[i], &runs[j]));
            }
        }
        let density = DensityEstimate::from_masses(self.lo, self.hi, p.clone(), "Ulam fixed point")?;
        Ok(Stationary {
            masses: p,
            density,
            residual,
            iterations,
            restart_spread,
            unique: restart_spread < RESTART_TOL,
        })
    }

    /// `|lambda_2|` by power iteration deflated against the stationary
    /// vector: `w <- w M - (w M . 1) pi`.
    pub fn second_eigenvalue(&self, pi: &[f64]) -> Result<f64> {
        let m = self.size();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut w: Vec<f64> = (0..m).map(|_| rng.random::<f64>() - 0.5).collect();
        deflate(&mut w, pi);
        let mut next = vec![0.0; m];
        let mut log_growth = Vec::with_capacity(GAP_MAX_ITER);
        let mut previous = f64::NAN;
        for k in 1..=GAP_MAX_ITER {
            self.apply_left(&w, &mut next);
            deflate(&mut next, pi);
            let norm_w: f64 = w.iter().map(|x| x.abs()).sum();
            let norm_n: f64 = next.iter().map(|x| x.abs()).sum();
            if norm_n == 0.0 || norm_w == 0.0 {
                return Ok(0.0);
            }
            log_growth.push((norm_n / norm_w).ln());
            for (a, b) in w.iter_mut().zip(&next) {
                *a = b / norm_n;
            }
            if k % GAP_WINDOW == 0 {
                let window = &log_growth[k - GAP_WINDOW..];
                let est = (window.iter().sum::<f64>() / GAP_WINDOW as f64).exp();
                if (est - previous).abs() < GAP_TOL {
                    return Ok(est);
                }
                previous = est;
            }
        }
        Err(Error::NoConvergence(format!(
            "deflated power iteration did not settle; last |lambda_2| estimate {previous}"
        )))
    }

    pub fn spectral_gap(&self, pi: &[f64]) -> Result<f64> {
        Ok(1.0 - self.second_eigenvalue(pi)?)
    }

    /// `C(t) = |sum_j g_j (f M^t)_j - (sum f)(sum g pi)|` for `t = 0..=t_max`,
    /// with `f` a signed mass vector and `g` cell values of the observable.
    pub fn correlation_sequence(&self, pi: &[f64], f: &[f64], g: &[f64], t_max: usize) -> Vec<f64> {
        let mean_g: f64 = g.iter().zip(pi).map(|(a, b)| a * b).sum();
        let mass: f64 = f.iter().sum();
        let mut v = f.to_vec();
        let mut next = vec![0.0; v.len()];
        let mut out = Vec::with_capacity(t_max + 1);
        for t in 0..=t_max {
            let pairing: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
            out.push((pairing - mass * mean_g).abs());
            if t < t_max {
                self.apply_left(&v, &mut next);
                std::mem::swap(&mut v, &mut next);
            }
        }
        out
    }
}

/// Result of the stationary-density computation.
#[derive(Debug, Clone)]
pub struct Stationary {
    pub masses: Vec<f64>,
    pub density: DensityEstimate,
    pub residual: f64,
    pub iterations: usize,
    /// Largest pairwise L1 distance among the restarted fixed points.
    pub restart_spread: f64,
    pub unique: bool,
}

pub const STATIONARY_TOL: f64 = 1e-12;
pub const STATIONARY_MAX_ITER: usize = 100_000;
pub const RESTARTS: usize = 5;
pub const RESTART_TOL: f64 = 1e-8;
const GAP_MAX_ITER: usize = 50_000;
const GAP_WINDOW: usize = 250;
const GAP_TOL: f64 = 1e-5;

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn deflate(w: &mut [f64], pi: &[f64]) {
    let s: f64 = w.iter().sum();
    w.iter_mut().zip(pi).for_each(|(x, p)| *x -= s * p);
}

/// Least-squares slope and coefficient of determination of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, intercept, r2))
}

/// Decay rate `exp(slope)` of `log C(t)` over the range where `C` stays
/// above `floor`, with the fit's `R^2`.
pub fn decay_rate(c: &[f64], floor: f64) -> Option<(f64, f64)> {
    let end = c.iter().position(|v| !(*v > floor)).unwrap_or(c.len());
    let (x, y): (Vec<f64>, Vec<f64>) = c[..end].iter().enumerate().map(|(t, v)| (t as f64, v.ln())).unzip();
    linear_fit(&x, &y).map(|(s, _, r2)| (s.exp(), r2))
}
