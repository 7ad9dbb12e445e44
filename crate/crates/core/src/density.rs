//! Binned probability densities on a uniform grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::GaussLegendre;

/// Integer histogram on a uniform grid. Merging is exact, so pooled counts do
/// not depend on the order in which partial histograms arrive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    lo: u64,
    hi: u64,
    counts: Vec<u64>,
    below: u64,
    above: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(lo < hi) || bins == 0 {
            return Err(Error::InvalidParameter(format!("bad histogram grid [{lo}, {hi}] with {bins} bins")));
        }
        Ok(Self { lo: lo.to_bits(), hi: hi.to_bits(), counts: vec![0; bins], below: 0, above: 0 })
    }

    pub fn lo(&self) -> f64 {
        f64::from_bits(self.lo)
    }

    pub fn hi(&self) -> f64 {
        f64::from_bits(self.hi)
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let (lo, hi) = (self.lo(), self.hi());
        if x < lo {
            self.below += 1;
        } else if x > hi {
            self.above += 1;
        } else {
            let m = self.counts.len();
            let k = ((x - lo) / (hi - lo) * m as f64) as usize;
            self.counts[k.min(m - 1)] += 1;
        }
    }

    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if self.lo != other.lo || self.hi != other.hi || self.counts.len() != other.counts.len() {
            return Err(Error::InvalidParameter("cannot merge histograms on different grids".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.below += other.below;
        self.above += other.above;
        Ok(())
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Samples that fell outside the grid, below and above.
    pub fn outside(&self) -> (u64, u64) {
        (self.below, self.above)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.below + self.above
    }

    /// Normalize the in-grid counts. Fails on an empty histogram.
    pub fn to_density(&self) -> Result<DensityEstimate> {
        let inside: u64 = self.counts.iter().sum();
        if inside == 0 {
            return Err(Error::InsufficientData("histogram has no samples inside its grid".into()));
        }
        let masses = self.counts.iter().map(|&c| c as f64 / inside as f64).collect();
        Ok(DensityEstimate {
            lo: self.lo(),
            hi: self.hi(),
            masses,
            samples: self.total(),
            note: format!("histogram, {} outside the grid", self.below + self.above),
        })
    }
}

/// Probability masses on a uniform partition of `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub lo: f64,
    pub hi: f64,
    pub masses: Vec<f64>,
    pub samples: u64,
    pub note: String,
}

impl DensityEstimate {
    pub fn from_masses(lo: f64, hi: f64, masses: Vec<f64>, note: impl Into<String>) -> Result<Self> {
        if masses.is_empty() || !(lo < hi) {
            return Err(Error::InvalidParameter("empty density grid".into()));
        }
        if masses.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::InvalidParameter("density masses must be nonnegative".into()));
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidParameter("density masses sum to zero".into()));
        }
        let masses = masses.into_iter().map(|m| m / total).collect();
        Ok(Self { lo, hi, masses, samples: 0, note: note.into() })
    }

    pub fn bins(&self) -> usize {
        self.masses.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.masses.len() as f64
    }

    pub fn edge(&self, k: usize) -> f64 {
        self.lo + (self.hi - self.lo) * k as f64 / self.masses.len() as f64
    }

    pub fn center(&self, k: usize) -> f64 {
        self.lo + (self.hi - self.lo) * (k as f64 + 0.5) / self.masses.len() as f64
    }

    /// Density value (mass / width) per bin.
    pub fn heights(&self) -> Vec<f64> {
        let w = self.width();
        self.masses.iter().map(|m| m / w).collect()
    }

    /// Piecewise-constant density at `x`; zero outside the grid.
    pub fn height_at(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        let k = (((x - self.lo) / self.width()) as usize).min(self.bins() - 1);
        self.masses[k] / self.width()
    }

    /// `∫ g dmu`, averaging `g` over each cell with 4-point Gauss-Legendre.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        let gl = GaussLegendre::new(4);
        let w = self.width();
        self.masses
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(|(k, m)| {
                let a = self.edge(k);
                m * gl.integrate(a, a + w, &g) / w
            })
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.integrate(|x| x)
    }

    /// Cumulative mass of `(-inf, x]`, linear within each bin.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        let pos = (x - self.lo) / self.width();
        let k = (pos as usize).min(self.bins() - 1);
        let below: f64 = self.masses[..k].iter().sum();
        (below + (pos - k as f64) * self.masses[k]).min(1.0)
    }

    /// Mass of the interval `[a, b]`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        (self.cdf(b) - self.cdf(a)).max(0.0)
    }

    /// Smallest interval containing all bins with positive mass.
    pub fn support(&self) -> Option<(f64, f64)> {
        let first = self.masses.iter().position(|m| *m > 0.0)?;
        let last = self.masses.iter().rposition(|m| *m > 0.0)?;
        Some((self.edge(first), self.edge(last + 1)))
    }

    /// L1 distance between the two piecewise-constant densities, computed
    /// exactly on the common refinement of both partitions.
    pub fn l1_distance(&self, other: &DensityEstimate) -> f64 {
        let mut cuts: Vec<f64> =
            (0..=self.bins()).map(|k| self.edge(k)).chain((0..=other.bins()).map(|k| other.edge(k))).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts.windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                (self.height_at(mid) - other.height_at(mid)).abs() * (w[1] - w[0])
            })
            .sum()
    }
}
