//! Birkhoff sums, the asymptotic variance, Berry-Esseen distances and
//! empirical large-deviation decay.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::density::DensityEstimate;
use crate::error::{Error, Result};
use crate::orbit::{stream_rng, Chain, StartRule};
use crate::quad::GaussLegendre;
use crate::ulam::UlamOperator;

/// `g(x) = sin(x) - shift`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub shift: f64,
    pub centering: Centering,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Centering {
    /// Zero mean under a stationary-density estimate.
    Stationary,
    /// Zero mean under normalized Lebesgue measure on an interval.
    Lebesgue,
}

impl Observable {
    pub fn centered_under(density: &DensityEstimate) -> Self {
        Self { shift: density.integrate(f64::sin), centering: Centering::Stationary }
    }

    /// Stationary centering from Ulam densities on `m` and `2m` cells,
    /// combined by Richardson extrapolation (the cell bias is `O(1/m^2)`).
    pub fn stationary_centered(chain: &Chain, m: usize) -> Result<Self> {
        let coarse = UlamOperator::build(chain, m)?.stationary(1)?;
        let fine = UlamOperator::build(chain, 2 * m)?.stationary(1)?;
        let a = coarse.density.integrate(f64::sin);
        let b = fine.density.integrate(f64::sin);
        Ok(Self { shift: (4.0 * b - a) / 3.0, centering: Centering::Stationary })
    }

    pub fn lebesgue_centered(lo: f64, hi: f64) -> Self {
        Self { shift: (lo.cos() - hi.cos()) / (hi - lo), centering: Centering::Lebesgue }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        x.sin() - self.shift
    }

    /// Cell averages of `g` on the partition of an Ulam operator.
    pub fn cell_values(&self, op: &UlamOperator) -> Vec<f64> {
        let gl = GaussLegendre::new(4);
        let w = op.width();
        (0..op.size())
            .map(|i| {
                let a = op.lo + w * i as f64;
                gl.integrate(a, a + w, |x| self.eval(x)) / w
            })
            .collect()
    }
}

/// Values of `S_t / sqrt(t)` across an ensemble at one `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltSample {
    pub t: usize,
    pub values: Vec<f64>,
    pub observable: Observable,
}

impl CltSample {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `S_t = sum_{k<t} g(W_k)` for every `t` in `t_list`, where `W_0` is the state
/// after `burn_in` steps. Orbit `k` uses stream `k` of `seed`.
pub fn birkhoff_ensemble(
    chain: &Chain,
    g: Observable,
    t_list: &[usize],
    count: usize,
    start: StartRule,
    burn_in: usize,
    seed: u64,
) -> Result<Vec<CltSample>> {
    if t_list.is_empty() || t_list.contains(&0) {
        return Err(Error::InvalidParameter("t_list must contain positive lengths".into()));
    }
    let mut sorted = t_list.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let t_max = *sorted.last().unwrap_or(&0);
    let rows = crate::par::map_indices(count, |k| -> Result<Vec<f64>> {
        let mut rng = stream_rng(seed, k as u64);
        let x0 = start.draw(&chain.map, &mut rng);
        let mut out = Vec::with_capacity(sorted.len());
        let mut sum = 0.0;
        let mut next = 0;
        let mut w0 = x0;
        if burn_in > 0 {
            w0 = chain.walk(x0, burn_in, &mut rng, |_, _| {})?;
        }
        // S_t includes g(W_0), ..., g(W_{t-1})
        sum += g.eval(w0);
        if sorted[0] == 1 {
            out.push(sum);
            next = 1;
        }
        if t_max > 1 {
            chain.walk(w0, t_max - 1, &mut rng, |step, x| {
                sum += g.eval(x);
                if next < sorted.len() && step + 1 == sorted[next] {
                    out.push(sum / (sorted[next] as f64).sqrt());
                    next += 1;
                }
            })?;
        }
        Ok(out)
    });
    let rows: Vec<Vec<f64>> = rows.into_iter().collect::<Result<_>>()?;
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(j, &t)| CltSample { t, values: rows.iter().map(|r| r[j]).collect(), observable: g })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IotaSquared {
    pub value: f64,
    /// Number of lag terms summed.
    pub lags: usize,
    pub last_term: f64,
    /// Value truncated at half the lags actually used.
    pub half_truncation: f64,
}

pub const IOTA_TERM_FLOOR: f64 = 1e-12;

/// Green-Kubo sum `∫ g^2 dmu + 2 sum_{t>=1} ∫ g (U^t g) dmu` with the
/// Ulam operator standing in for the Koopman operator `U`.
pub fn iota_squared(op: &UlamOperator, pi: &[f64], g_cells: &[f64], t_max: usize) -> Result<IotaSquared> {
    let mean: f64 = pi.iter().zip(g_cells).map(|(p, g)| p * g).sum();
    let g: Vec<f64> = g_cells.iter().map(|v| v - mean).collect();
    let pair = |u: &[f64]| -> f64 { pi.iter().zip(&g).zip(u).map(|((p, a), b)| p * a * b).sum() };
    let mut value = pair(&g);
    let mut u = g.clone();
    let mut next = vec![0.0; u.len()];
    let mut partial = vec![value];
    let mut last_term = value;
    let mut lags = 0;
    for t in 1..=t_max {
        op.apply_right(&u, &mut next);
        std::mem::swap(&mut u, &mut next);
        last_term = 2.0 * pair(&u);
        value += last_term;
        partial.push(value);
        lags = t;
        if last_term.abs() < IOTA_TERM_FLOOR {
            break;
        }
    }
    if last_term.abs() >= IOTA_TERM_FLOOR * 1e4 {
        return Err(Error::NoConvergence(format!("correlation terms still {last_term:e} after {t_max} lags")));
    }
    Ok(IotaSquared { value, lags, last_term, half_truncation: partial[lags / 2] })
}

/// `sup_r |F_emp(r) - Phi(r / iota)|`.
pub fn berry_esseen_distance(sample: &[f64], iota: f64) -> Result<f64> {
    if !(iota > 0.0) {
        return Err(Error::InvalidParameter(format!("iota must be positive, got {iota}")));
    }
    let normal = Normal::new(0.0, iota).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(crate::stats::ks_one_sample(sample, |x| normal.cdf(x)))
}

/// One cell of the large-deviation table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdpCell {
    pub eps: f64,
    pub t: usize,
    pub hits: usize,
    pub count: usize,
    /// `(1/t) log P(S_t > t eps)`; `None` when no orbit exceeded the level.
    pub loghat: Option<f64>,
}

/// Empirical `(1/t) log P(S_t > t eps)` from Birkhoff-sum samples.
pub fn ldp_decay(samples: &[CltSample], eps_list: &[f64]) -> Result<Vec<LdpCell>> {
    let mut out = Vec::new();
    for s in samples {
        let root = (s.t as f64).sqrt();
        for &eps in eps_list {
            let level = eps * root;
            let hits = s.values.iter().filter(|v| **v > level).count();
            let loghat = (hits > 0).then(|| (hits as f64 / s.len() as f64).ln() / s.t as f64);
            out.push(LdpCell { eps, t: s.t, hits, count: s.len(), loghat });
        }
    }
    if !out.is_empty() && out.iter().all(|c| c.loghat.is_none()) {
        return Err(Error::InsufficientData("every large-deviation cell is censored".into()));
    }
    Ok(out)
}

/// `sup |g|` over an interval, on a fine grid.
pub fn sup_abs(g: &Observable, lo: f64, hi: f64) -> f64 {
    (0..=10_000).map(|k| g.eval(lo + (hi - lo) * k as f64 / 10_000.0).abs()).fold(0.0, f64::max)
}
