//! Deterministic and random orbits of the leverage chain.
//!
//! Every random orbit owns a private ChaCha8 stream. Stream `k` of master
//! seed `s` is `ChaCha8Rng::seed_from_u64(s)` with its stream counter set to
//! `k`, so ensembles are reproducible regardless of how orbits are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::{DensityEstimate, Histogram};
use crate::error::{Error, Result};
use crate::map::{LeverageMap, SigmaMode};
use crate::noise::{NoiseLaw, NoiseSampler, NoiseSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepMode {
    Deterministic,
    RandomPaper,
    RandomFirstOrder,
    RandomExactF,
}

impl StepMode {
    pub fn sigma_mode(self) -> Option<SigmaMode> {
        match self {
            StepMode::Deterministic => None,
            StepMode::RandomPaper => Some(SigmaMode::Paper),
            StepMode::RandomFirstOrder => Some(SigmaMode::FirstOrder),
            StepMode::RandomExactF => Some(SigmaMode::ExactF),
        }
    }

    pub fn random(mode: SigmaMode) -> Self {
        match mode {
            SigmaMode::Paper => StepMode::RandomPaper,
            SigmaMode::FirstOrder => StepMode::RandomFirstOrder,
            SigmaMode::ExactF => StepMode::RandomExactF,
        }
    }
}

/// Independent generator for orbit `index` under `master`.
pub fn stream_rng(master: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// A map, a noise law and a step rule.
#[derive(Debug, Clone)]
pub struct Chain {
    pub map: LeverageMap,
    pub mode: StepMode,
    noise: Option<(NoiseSpec, NoiseLaw)>,
}

impl Chain {
    pub fn deterministic(map: LeverageMap) -> Self {
        Self { map, mode: StepMode::Deterministic, noise: None }
    }

    pub fn random(map: LeverageMap, spec: NoiseSpec, mode: SigmaMode) -> Result<Self> {
        if !(spec.n > 0.0) {
            return Err(Error::InvalidParameter(format!("noise index must be positive, got {}", spec.n)));
        }
        let law = NoiseLaw::new(spec.a, spec.bump)?;
        Ok(Self { map, mode: StepMode::random(mode), noise: Some((spec, law)) })
    }

    pub fn spec(&self) -> Option<&NoiseSpec> {
        self.noise.as_ref().map(|(s, _)| s)
    }

    pub fn law(&self) -> Option<&NoiseLaw> {
        self.noise.as_ref().map(|(_, l)| l)
    }

    /// Noise amplitude at `phi` (zero for the deterministic chain).
    pub fn sigma(&self, phi: f64) -> f64 {
        match (self.mode.sigma_mode(), &self.noise) {
            (Some(m), Some((spec, _))) => self.map.params.sigma_n_unchecked(phi, spec.n, m),
            _ => 0.0,
        }
    }

    /// One transition driven by the noise value `eta`.
    pub fn step(&self, phi: f64, eta: f64) -> Result<f64> {
        if !self.map.contains(phi) {
            return Err(Error::Domain(format!("phi = {phi} outside the extended domain")));
        }
        Ok(self.step_unchecked(phi, eta))
    }

    #[inline]
    fn step_unchecked(&self, phi: f64, eta: f64) -> f64 {
        let t = self.map.t_unchecked(phi);
        match (self.mode, &self.noise) {
            (StepMode::Deterministic, _) | (_, None) => t,
            (StepMode::RandomExactF, Some((spec, _))) => {
                let v = eta * ((1.0 - phi * phi) / spec.n).sqrt();
                let p = &self.map.params;
                match (p.eval_f(phi, v), p.eval_f(phi, 0.0)) {
                    (Ok(f), _) if phi >= 0.0 => f,
                    (Ok(f), Ok(f0)) => t + (f - f0),
                    _ => f64::NAN,
                }
            }
            (_, Some(_)) => t + self.sigma(phi) * eta,
        }
    }

    fn draw(&self, sampler: &mut Option<NoiseSampler<'_>>, rng: &mut ChaCha8Rng) -> Result<f64> {
        match sampler {
            Some(s) => s.sample(rng),
            None => Ok(0.0),
        }
    }

    /// Visit `length` successive states after `x0` (not including it).
    pub fn walk(&self, x0: f64, length: usize, rng: &mut ChaCha8Rng, mut visit: impl FnMut(usize, f64)) -> Result<f64> {
        if !self.map.contains(x0) {
            return Err(Error::Domain(format!("initial state {x0} outside the extended domain")));
        }
        let (lo, hi) = self.map.domain();
        let mut sampler = self.law().filter(|_| self.mode != StepMode::Deterministic).map(|l| l.sampler());
        let mut phi = x0;
        for t in 0..length {
            let eta = self.draw(&mut sampler, rng)?;
            let next = self.step_unchecked(phi, eta);
            if !(next >= lo && next <= hi) {
                return Err(Error::DomainEscape { state: next, step: t + 1, lo, hi });
            }
            phi = next;
            visit(t + 1, phi);
        }
        Ok(phi)
    }

    /// Orbit `x0, x1, ..., x_length` driven by stream 0 of `seed`.
    pub fn orbit(&self, x0: f64, length: usize, seed: u64) -> Result<Trajectory> {
        self.orbit_with(x0, length, &mut stream_rng(seed, 0), seed)
    }

    fn orbit_with(&self, x0: f64, length: usize, rng: &mut ChaCha8Rng, seed: u64) -> Result<Trajectory> {
        let mut states = Vec::with_capacity(length + 1);
        states.push(x0);
        self.walk(x0, length, rng, |_, x| states.push(x))?;
        Ok(Trajectory { states, seed, mode: self.mode, params: self.map.params, spec: self.spec().copied() })
    }

    /// `count` orbits; orbit `k` uses stream `k` of `master` for both its
    /// initial state and its noise.
    pub fn ensemble(&self, start: StartRule, count: usize, length: usize, master: u64) -> Result<Vec<Trajectory>> {
        let out = crate::par::map_indices(count, |k| {
            let mut rng = stream_rng(master, k as u64);
            let x0 = start.draw(&self.map, &mut rng);
            self.orbit_with(x0, length, &mut rng, master)
        });
        out.into_iter().collect()
    }

    /// Pooled histogram of post-burn-in states over an ensemble, without
    /// storing trajectories.
    pub fn ensemble_histogram(
        &self,
        start: StartRule,
        count: usize,
        length: usize,
        burn_in: usize,
        master: u64,
        grid: (f64, f64, usize),
    ) -> Result<Histogram> {
        let parts = crate::par::map_indices(count, |k| -> Result<Histogram> {
            let mut rng = stream_rng(master, k as u64);
            let x0 = start.draw(&self.map, &mut rng);
            let mut h = Histogram::new(grid.0, grid.1, grid.2)?;
            self.walk(x0, burn_in + length, &mut rng, |t, x| {
                if t > burn_in {
                    h.add(x)
                }
            })?;
            Ok(h)
        });
        let mut total = Histogram::new(grid.0, grid.1, grid.2)?;
        for p in parts {
            total.merge(&p?)?;
        }
        Ok(total)
    }
}

/// How ensemble members choose their initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartRule {
    Fixed(f64),
    /// Uniform on the dynamical core.
    UniformCore,
}

impl StartRule {
    pub fn draw(self, map: &LeverageMap, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            StartRule::Fixed(x) => x,
            StartRule::UniformCore => {
                let g = map.geometry;
                g.core_lo + (g.core_hi - g.core_lo) * rng.random::<f64>()
            }
        }
    }
}

/// A finite orbit with the inputs that reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<f64>,
    pub seed: u64,
    pub mode: StepMode,
    pub params: crate::map::MapParams,
    pub spec: Option<NoiseSpec>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Normalized histogram of the states after `burn_in`.
pub fn empirical_density(states: &[f64], lo: f64, hi: f64, bins: usize, burn_in: usize) -> Result<DensityEstimate> {
    if states.len() <= burn_in || states.len() - burn_in < bins {
        return Err(Error::InsufficientData(format!(
            "{} states after a burn-in of {burn_in} cannot fill {bins} bins",
            states.len().saturating_sub(burn_in)
        )));
    }
    let mut h = Histogram::new(lo, hi, bins)?;
    states[burn_in..].iter().for_each(|&x| h.add(x));
    h.to_density()
}

pub const DEFAULT_BURN_IN: usize = 1_000;
pub const DEFAULT_BINS: usize = 1_000;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::MapParams;
    use crate::noise::BumpKind;

    fn chain(n: f64, mode: SigmaMode) -> Chain {
        let map = LeverageMap::new(MapParams::reference()).unwrap();
        let spec = NoiseSpec::at_bound(&map, n, BumpKind::Mollifier, mode).unwrap();
        Chain::random(map, spec, mode).unwrap()
    }

    #[test]
    fn zero_noise_reduces_to_the_map() {
        let c = chain(1000.0, SigmaMode::Paper);
        for x in [-0.05, 0.1, 0.38, 0.9] {
            assert_eq!(c.step(x, 0.0).unwrap(), c.map.t(x).unwrap());
        }
        let f = chain(1000.0, SigmaMode::ExactF);
        for x in [0.1, 0.38, 0.9] {
            assert!((f.step(x, 0.0).unwrap() - c.map.t(x).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn fixed_point_stays_fixed() {
        let map = LeverageMap::new(MapParams::reference().with_c(0.8)).unwrap();
        let det = Chain::deterministic(map);
        let mut x = 0.5;
        for _ in 0..10_000 {
            x = det.step(x, 0.0).unwrap();
        }
        let y = det.step(x, 0.0).unwrap();
        assert!((y - x).abs() < 1e-14);
    }

    #[test]
    fn deterministic_orbit_is_iterated_map() {
        let map = LeverageMap::new(MapParams::reference()).unwrap();
        let tr = Chain::deterministic(map).orbit(0.38, 100, 1).unwrap();
        let mut x = 0.38;
        for s in &tr.states[1..] {
            x = map.t(x).unwrap();
            assert_eq!(*s, x);
        }
    }

    #[test]
    fn same_seed_same_orbit() {
        let c = chain(1000.0, SigmaMode::Paper);
        let a = c.orbit(0.38, 5000, 99).unwrap();
        let b = c.orbit(0.38, 5000, 99).unwrap();
        let d = c.orbit(0.38, 5000, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.states, d.states);
    }

    #[test]
    fn admissible_noise_never_escapes() {
        for mode in [SigmaMode::Paper, SigmaMode::FirstOrder, SigmaMode::ExactF] {
            let c = chain(1000.0, mode);
            let tr = c.orbit(0.38, 100_000, 5).unwrap();
            let (lo, hi) = c.map.geometry.support_interval(&c.map.params);
            assert!(tr.states[1..].iter().all(|&x| x >= lo && x <= hi));
        }
    }

    #[test]
    fn ensemble_of_one_is_an_orbit() {
        let c = chain(1000.0, SigmaMode::Paper);
        let e = c.ensemble(StartRule::Fixed(0.38), 1, 300, 7).unwrap();
        let o = c.orbit(0.38, 300, 7).unwrap();
        assert_eq!(e[0].states, o.states);
    }

    #[test]
    fn pooled_histogram_is_schedule_independent() {
        let c = chain(1000.0, SigmaMode::Paper);
        let grid = (0.0, 1.0, 200);
        let h1 = c.ensemble_histogram(StartRule::UniformCore, 64, 500, 100, 3, grid).unwrap();
        let h2 = crate::par::with_threads(3, || c.ensemble_histogram(StartRule::UniformCore, 64, 500, 100, 3, grid))
            .unwrap();
        assert_eq!(h1, h2);
        assert_eq!(h1.total(), 64 * 500);
    }

    #[test]
    fn empirical_density_needs_samples() {
        assert!(empirical_density(&[0.5; 10], 0.0, 1.0, 20, 0).is_err());
        let d = empirical_density(&[0.5; 100], 0.0, 1.0, 20, 10).unwrap();
        assert_eq!(d.masses[10], 1.0);
    }
}
