//! Generalized dimensions from box occupation numbers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orbit::{stream_rng, Chain};
use crate::ulam::linear_fit;

pub const MIN_VALID_RADII: usize = 10;
pub const R2_FLAG: f64 = 0.9;

/// Occupation numbers of the boxes `[origin + i r, origin + (i+1) r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCounts {
    pub origin: f64,
    pub r: f64,
    pub counts: Vec<u32>,
    pub outside: u64,
}

impl BoxCounts {
    pub fn new(origin: f64, extent: f64, r: f64) -> Result<Self> {
        if !(r > 0.0) || !(extent > 0.0) || !origin.is_finite() {
            return Err(Error::InvalidParameter(format!("bad box grid: origin {origin}, extent {extent}, r {r}")));
        }
        let boxes = (extent / r).ceil() as usize + 1;
        Ok(Self { origin, r, counts: vec![0; boxes], outside: 0 })
    }

    pub fn add(&mut self, xs: &[f64]) {
        let inv = 1.0 / self.r;
        for &x in xs {
            let k = ((x - self.origin) * inv).floor();
            if k >= 0.0 && (k as usize) < self.counts.len() {
                self.counts[k as usize] += 1;
            } else {
                self.outside += 1;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn occupied(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// `n*_i = n_{i-1} + n_i + n_{i+1}`.
    pub fn extended(&self) -> Vec<u64> {
        let n = &self.counts;
        (0..n.len())
            .map(|i| {
                let left = if i > 0 { n[i - 1] } else { 0 };
                let right = n.get(i + 1).copied().unwrap_or(0);
                left as u64 + n[i] as u64 + right as u64
            })
            .collect()
    }

    /// `Z_r(q) = sum n_i^q` over occupied boxes, with extended occupation
    /// numbers for negative `q`.
    pub fn partition_sum(&self, q: f64) -> f64 {
        if q < 0.0 {
            let ext = self.extended();
            self.counts.iter().zip(ext).filter(|(n, _)| **n > 0).map(|(_, e)| (e as f64).powf(q)).sum()
        } else {
            self.counts.iter().filter(|&&n| n > 0).map(|&n| (n as f64).powf(q)).sum()
        }
    }

    /// `sum p_i log p_i` with `p_i = n_i / N`.
    pub fn entropy_sum(&self) -> f64 {
        let total = self.total() as f64;
        self.counts
            .iter()
            .filter(|&&n| n > 0)
            .map(|&n| {
                let p = n as f64 / total;
                p * p.ln()
            })
            .sum()
    }
}

fn sample_range(sample: &[f64]) -> Result<(f64, f64)> {
    if sample.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    let lo = sample.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidParameter("sample contains non-finite values".into()));
    }
    Ok((lo, hi))
}

/// Boxes of size `r` anchored at the sample minimum.
pub fn box_counts(sample: &[f64], r: f64) -> Result<BoxCounts> {
    let (lo, hi) = sample_range(sample)?;
    let mut b = BoxCounts::new(lo, (hi - lo).max(r), r)?;
    b.add(sample);
    Ok(b)
}

pub fn partition_sums(sample: &[f64], r: f64, q: f64) -> Result<f64> {
    Ok(box_counts(sample, r)?.partition_sum(q))
}

pub fn extended_occupation(sample: &[f64], r: f64) -> Result<Vec<u64>> {
    Ok(box_counts(sample, r)?.extended())
}

/// Box counts at many radii sharing one anchor, filled chunk by chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occupation {
    pub grids: Vec<BoxCounts>,
}

impl Occupation {
    pub fn new(origin: f64, extent: f64, radii: &[f64]) -> Result<Self> {
        check_radii(radii)?;
        Ok(Self { grids: radii.iter().map(|&r| BoxCounts::new(origin, extent, r)).collect::<Result<_>>()? })
    }

    pub fn add_chunk(&mut self, xs: &[f64]) {
        crate::par::for_each_mut(&mut self.grids, |_, g| g.add(xs));
    }

    pub fn radii(&self) -> Vec<f64> {
        self.grids.iter().map(|g| g.r).collect()
    }

    pub fn samples(&self) -> u64 {
        self.grids.first().map_or(0, |g| g.total() + g.outside)
    }

    pub fn outside(&self) -> u64 {
        self.grids.iter().map(|g| g.outside).max().unwrap_or(0)
    }
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("radii must be positive and strictly increasing".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqSpectrum {
    pub q: Vec<f64>,
    pub d: Vec<f64>,
    pub r2: Vec<f64>,
    /// Radii that entered each fit.
    pub n_radii: Vec<usize>,
    pub radii: Vec<f64>,
    pub samples: u64,
}

impl DqSpectrum {
    /// Indices of fits with `R^2 < 0.9`.
    pub fn flagged(&self) -> Vec<usize> {
        (0..self.q.len()).filter(|&i| self.r2[i] < R2_FLAG).collect()
    }

    pub fn at(&self, q: f64) -> Option<f64> {
        self.q.iter().position(|&x| (x - q).abs() < 1e-12).map(|i| self.d[i])
    }
}

pub fn dq_from_occupation(occ: &Occupation, q_grid: &[f64]) -> Result<DqSpectrum> {
    let mut spec = DqSpectrum {
        q: q_grid.to_vec(),
        d: Vec::with_capacity(q_grid.len()),
        r2: Vec::with_capacity(q_grid.len()),
        n_radii: Vec::with_capacity(q_grid.len()),
        radii: occ.radii(),
        samples: occ.samples(),
    };
    for &q in q_grid {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for g in &occ.grids {
            if g.occupied() < 2 {
                continue;
            }
            let y = if q == 1.0 { g.entropy_sum() } else { g.partition_sum(q).ln() };
            if y.is_finite() {
                xs.push(g.r.ln());
                ys.push(y);
            }
        }
        if xs.len() < MIN_VALID_RADII {
            return Err(Error::InsufficientData(format!("only {} usable radii at q = {q}", xs.len())));
        }
        let Some((slope, _, r2)) = linear_fit(&xs, &ys) else {
            return Err(Error::InsufficientData(format!("degenerate fit at q = {q}")));
        };
        spec.d.push(if q == 1.0 { slope } else { slope / (q - 1.0) });
        spec.r2.push(r2);
        spec.n_radii.push(xs.len());
    }
    Ok(spec)
}

pub fn dq_spectrum(sample: &[f64], q_grid: &[f64], r_grid: &[f64]) -> Result<DqSpectrum> {
    let (lo, hi) = sample_range(sample)?;
    check_radii(r_grid)?;
    let mut occ = Occupation::new(lo, (hi - lo).max(r_grid[r_grid.len() - 1]), r_grid)?;
    occ.add_chunk(sample);
    dq_from_occupation(&occ, q_grid)
}

pub const CHUNK: usize = 1 << 20;

/// Spectrum of one orbit of `chain` (stream 0 of `seed`), counted in chunks
/// without storing the orbit. Boxes are anchored at the left end of the
/// chain's support interval.
pub fn chain_spectrum(
    chain: &Chain,
    x0: f64,
    length: usize,
    burn_in: usize,
    seed: u64,
    q_grid: &[f64],
    r_grid: &[f64],
) -> Result<DqSpectrum> {
    let (lo, hi) = chain.map.geometry.support_interval(&chain.map.params);
    let mut occ = Occupation::new(lo, hi - lo, r_grid)?;
    let mut rng = stream_rng(seed, 0);
    let mut buf = Vec::with_capacity(CHUNK.min(length));
    chain.walk(x0, burn_in + length, &mut rng, |t, x| {
        if t > burn_in {
            buf.push(x);
            if buf.len() == CHUNK {
                occ.add_chunk(&buf);
                buf.clear();
            }
        }
    })?;
    occ.add_chunk(&buf);
    if occ.outside() > 0 {
        return Err(Error::ModelBreakdown(format!("{} states fell outside the box grid", occ.outside())));
    }
    dq_from_occupation(&occ, q_grid)
}

/// `points` radii evenly spaced on `[lo, hi]`.
pub fn radii(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    crate::lyapunov::uniform_grid(lo, hi, points)
}

/// 100 radii on `[5e-6, 1e-5]`, sized for at least `1e7` samples.
pub fn fine_radii() -> Vec<f64> {
    radii(5e-6, 1e-5, 100)
}

/// 100 radii on `[1e-4, 1e-3]` for smaller samples.
pub fn wide_radii() -> Vec<f64> {
    radii(1e-4, 1e-3, 100)
}

pub const FINE_RADII_MIN_SAMPLES: usize = 10_000_000;

/// Fine radii from `1e7` samples up, wide radii below.
pub fn radii_for(samples: usize) -> Vec<f64> {
    if samples >= FINE_RADII_MIN_SAMPLES {
        fine_radii()
    } else {
        wide_radii()
    }
}

/// `q = -5, -4.5, ..., 5`.
pub fn default_q_grid() -> Vec<f64> {
    (-10..=10).map(|k| k as f64 * 0.5).collect()
}

/// Generalized dimensions of the absolutely continuous invariant measure of a
/// Benedicks-Carleson quadratic map.
pub fn dq_reference(q: f64) -> f64 {
    if q < 2.0 {
        1.0
    } else {
        q / (2.0 * (q - 1.0))
    }
}
