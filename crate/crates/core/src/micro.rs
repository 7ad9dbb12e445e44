//! Slow-fast banking model: intraday AR(1) returns, their estimation, and the
//! value-at-risk leverage rule driven by the estimated aggregated variance.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{LeverageMap, MapParams};
use crate::noise::NoiseSpec;
use crate::orbit::{stream_rng, Chain, StepMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroState {
    pub lambda: f64,
    pub phi: f64,
    pub sigma2_e: f64,
    pub gamma: f64,
}

impl MicroState {
    /// State whose scaled leverage is `phi`, with expected variance on the
    /// value-at-risk constraint.
    pub fn from_phi(params: &MapParams, phi: f64) -> Result<Self> {
        let lambda = (1.0 + params.gamma0 * phi) / (1.0 - params.c * phi);
        Self::from_lambda(params, lambda)
    }

    pub fn from_lambda(params: &MapParams, lambda: f64) -> Result<Self> {
        let gamma = params.gamma0 + params.c * lambda;
        let state =
            Self { lambda, phi: (lambda - 1.0) / gamma, sigma2_e: 1.0 / (params.alpha * lambda).powi(2), gamma };
        if !(lambda > 0.0) || !lambda.is_finite() || !(gamma > 0.0) || !state.phi.is_finite() {
            return Err(Error::ModelBreakdown(format!("invalid leverage state {state:?}")));
        }
        Ok(state)
    }
}

/// `r_0, ..., r_n` of `r_k = phi r_{k-1} + eps_k` with `eps ~ N(0, sigma_eps2)`.
/// `r_0` is drawn from the stationary law unless `start` is given.
pub fn simulate_fast_returns(
    phi_prev: f64,
    sigma_eps2: f64,
    n: usize,
    start: Option<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if !(phi_prev.abs() < 1.0) {
        return Err(Error::Domain(format!("AR coefficient {phi_prev} is not inside (-1, 1)")));
    }
    if !(sigma_eps2 >= 0.0) {
        return Err(Error::InvalidParameter(format!("innovation variance {sigma_eps2} is negative")));
    }
    let sd = sigma_eps2.sqrt();
    let mut r = Vec::with_capacity(n + 1);
    let r0 = match start {
        Some(x) => x,
        None => sd / (1.0 - phi_prev * phi_prev).sqrt() * rng.sample::<f64, _>(StandardNormal),
    };
    r.push(r0);
    let mut prev = r0;
    for _ in 0..n {
        prev = phi_prev * prev + sd * rng.sample::<f64, _>(StandardNormal);
        r.push(prev);
    }
    Ok(r)
}

/// Conditional least squares on lagged pairs: `(phi_hat, sigma_eps2_hat)`.
pub fn mle_ar1(returns: &[f64]) -> Result<(f64, f64)> {
    if returns.len() < 10 {
        return Err(Error::InsufficientData(format!("{} returns, at least 10 required", returns.len())));
    }
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for w in returns.windows(2) {
        sxy += w[0] * w[1];
        sxx += w[0] * w[0];
    }
    if !(sxx > 0.0) {
        return Err(Error::InsufficientData("constant zero series".into()));
    }
    let phi = sxy / sxx;
    let pairs = (returns.len() - 1) as f64;
    let s2 = returns.windows(2).map(|w| (w[1] - phi * w[0]).powi(2)).sum::<f64>() / pairs;
    Ok((phi, s2))
}

/// Variance of the sum of `n` consecutive stationary AR(1) returns.
pub fn aggregated_variance(phi: f64, sigma_eps2: f64, n: usize) -> Result<f64> {
    if !(phi.abs() < 1.0) {
        return Err(Error::Domain(format!("AR coefficient {phi} is not inside (-1, 1)")));
    }
    let nf = n as f64;
    let pn = phi.powi(n as i32);
    let one = 1.0 - phi;
    let bracket =
        1.0 + 2.0 * phi * (1.0 - pn) / one - 2.0 * ((nf * phi - nf - 1.0) * pn * phi + phi) / (nf * one * one);
    Ok(bracket * nf * sigma_eps2 / (1.0 - phi * phi))
}

/// How a slow step obtains its variance estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FastBlock {
    /// Simulate the returns and estimate from them.
    Simulated,
    /// Use the true AR parameters in place of the estimates.
    Exact,
}

/// What a slow step does when the new scaled leverage leaves `(-1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Breakdown {
    /// Stop with a model-breakdown error.
    #[default]
    Abort,
    /// Redraw the fast block, conditioning the step on an admissible outcome.
    Resample,
}

pub const MAX_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroStep {
    pub state: MicroState,
    pub phi_hat: f64,
    pub sigma2_hat: f64,
    /// Whether `phi_hat` was pulled back inside `±(1 - 1/n)`.
    pub clamped: bool,
    pub last_return: f64,
    /// Fast blocks discarded under [`Breakdown::Resample`].
    pub resampled: usize,
}

/// One slow step: fast block, estimation, aggregated variance, leverage rule.
pub fn micro_step(
    state: &MicroState,
    params: &MapParams,
    n: usize,
    block: FastBlock,
    carry: Option<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<MicroStep> {
    if n < 10 {
        return Err(Error::InvalidParameter(format!("at least 10 fast steps per block, got {n}")));
    }
    let sigma_eps2 = params.sigma_eps / n as f64;
    let (phi_hat, sigma2_hat, last_return) = match block {
        FastBlock::Exact => (state.phi, sigma_eps2, 0.0),
        FastBlock::Simulated => {
            let r = simulate_fast_returns(state.phi, sigma_eps2, n, carry, rng)?;
            let (p, s) = mle_ar1(&r)?;
            (p, s, r[n])
        }
    };
    let bound = 1.0 - 1.0 / n as f64;
    let clamped = phi_hat.abs() > bound;
    let phi_hat = phi_hat.clamp(-bound, bound);
    let var = aggregated_variance(phi_hat, sigma2_hat, n)?;
    let w = params.omega;
    let lambda = (w / (state.lambda * state.lambda) + (1.0 - w) * params.alpha * params.alpha * var).powf(-0.5);
    let next = MicroState::from_lambda(params, lambda).ok().filter(|s| s.phi.abs() < 1.0).ok_or_else(|| {
        Error::ModelBreakdown(format!(
            "leverage {lambda} from state {state:?} with phi_hat {phi_hat}, sigma2_hat {sigma2_hat}"
        ))
    })?;
    Ok(MicroStep { state: next, phi_hat, sigma2_hat, clamped, last_return, resampled: 0 })
}

/// [`micro_step`] under a breakdown policy.
pub fn micro_step_with(
    state: &MicroState,
    params: &MapParams,
    n: usize,
    block: FastBlock,
    carry: Option<f64>,
    policy: Breakdown,
    rng: &mut ChaCha8Rng,
) -> Result<MicroStep> {
    let mut resampled = 0;
    loop {
        match micro_step(state, params, n, block, carry, rng) {
            Ok(step) => return Ok(MicroStep { resampled, ..step }),
            Err(Error::ModelBreakdown(msg)) => {
                if policy == Breakdown::Abort || block == FastBlock::Exact || resampled == MAX_RESAMPLES {
                    return Err(Error::ModelBreakdown(msg));
                }
                resampled += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroConfig {
    pub params: MapParams,
    pub n: usize,
    pub block: FastBlock,
    /// Start each block from the last return of the previous one.
    pub carry_over: bool,
    pub breakdown: Breakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroRun {
    pub states: Vec<MicroState>,
    pub clamped: usize,
    pub resampled: usize,
}

/// `length` slow steps from scaled leverage `phi0` on stream `stream` of `seed`.
pub fn micro_run(cfg: &MicroConfig, phi0: f64, length: usize, seed: u64, stream: u64) -> Result<MicroRun> {
    let mut rng = stream_rng(seed, stream);
    let mut state = MicroState::from_phi(&cfg.params, phi0)?;
    let mut states = Vec::with_capacity(length + 1);
    states.push(state);
    let (mut clamped, mut resampled) = (0, 0);
    let mut carry = None;
    for t in 0..length {
        let step = micro_step_with(&state, &cfg.params, cfg.n, cfg.block, carry, cfg.breakdown, &mut rng).map_err(
            |e| match e {
                Error::ModelBreakdown(msg) => Error::ModelBreakdown(format!("slow step {}: {msg}", t + 1)),
                other => other,
            },
        )?;
        if cfg.carry_over {
            carry = Some(step.last_return);
        }
        clamped += step.clamped as usize;
        resampled += step.resampled;
        state = step.state;
        states.push(state);
    }
    Ok(MicroRun { states, clamped, resampled })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroComparison {
    pub n: usize,
    pub ks: f64,
    /// Small `n`, where the expansion behind the reduced map is not reliable.
    pub flagged: bool,
    pub clamped: usize,
    /// Fast blocks redrawn to keep the micro state admissible.
    pub resampled: usize,
    pub error: Option<String>,
}

pub const RELIABLE_N: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSetup {
    pub params: MapParams,
    pub n_list: Vec<usize>,
    pub phi0: f64,
    pub horizon: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub reduced: StepMode,
    pub bump: crate::noise::BumpKind,
    pub breakdown: Breakdown,
}

/// KS distance between the scaled-leverage marginals of the micro model and
/// the reduced chain at each `n`. Cell `k` uses streams `2k` and `2k + 1`.
pub fn compare_micro_reduced(setup: &CompareSetup) -> Result<Vec<MicroComparison>> {
    let map = LeverageMap::new(setup.params)?;
    let Some(sigma_mode) = setup.reduced.sigma_mode() else {
        return Err(Error::InvalidParameter("the reduced chain must be random".into()));
    };
    let cells = crate::par::map_indices(setup.n_list.len(), |k| {
        let n = setup.n_list[k];
        let micro = MicroConfig {
            params: setup.params,
            n,
            block: FastBlock::Simulated,
            carry_over: false,
            breakdown: setup.breakdown,
        };
        let run = || -> Result<(f64, usize, usize)> {
            let m = micro_run(&micro, setup.phi0, setup.burn_in + setup.horizon, setup.seed, 2 * k as u64)?;
            let micro_phi: Vec<f64> = m.states[setup.burn_in + 1..].iter().map(|s| s.phi).collect();
            let spec = NoiseSpec::at_bound(&map, n as f64, setup.bump, sigma_mode)?;
            let chain = Chain::random(map, spec, sigma_mode)?;
            let reduced =
                reduced_marginal(&chain, setup.phi0, setup.burn_in, setup.horizon, setup.seed, 2 * k as u64 + 1)?;
            Ok((crate::stats::ks_two_sample(&micro_phi, &reduced), m.clamped, m.resampled))
        };
        match run() {
            Ok((ks, clamped, resampled)) => {
                MicroComparison { n, ks, flagged: n < RELIABLE_N, clamped, resampled, error: None }
            }
            Err(e) => {
                MicroComparison { n, ks: f64::NAN, flagged: true, clamped: 0, resampled: 0, error: Some(e.to_string()) }
            }
        }
    });
    Ok(cells)
}

/// States `burn_in + 1 ..= burn_in + horizon` of one orbit of `chain`.
pub fn reduced_marginal(
    chain: &Chain,
    x0: f64,
    burn_in: usize,
    horizon: usize,
    seed: u64,
    stream: u64,
) -> Result<Vec<f64>> {
    let mut rng = stream_rng(seed, stream);
    let mut out = Vec::with_capacity(horizon);
    chain.walk(x0, burn_in + horizon, &mut rng, |t, x| {
        if t > burn_in {
            out.push(x);
        }
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, variance};

    fn lag1(r: &[f64]) -> f64 {
        let m = mean(r);
        let num: f64 = r.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        let den: f64 = r.iter().map(|x| (x - m).powi(2)).sum();
        num / den
    }

    #[test]
    fn fast_returns_have_ar1_moments() {
        let mut rng = stream_rng(1, 0);
        let r = simulate_fast_returns(0.6, 2e-3, 10_000, None, &mut rng).unwrap();
        assert_eq!(r.len(), 10_001);
        assert!((lag1(&r) - 0.6).abs() < 3.0 / 100.0);
        assert!((variance(&r) / (2e-3 / 0.64) - 1.0).abs() < 0.1);
        let iid = simulate_fast_returns(0.0, 1.0, 10_000, None, &mut rng).unwrap();
        assert!(lag1(&iid).abs() < 3.0 / 100.0);
        assert!(simulate_fast_returns(1.0, 1.0, 10, None, &mut rng).is_err());
    }

    #[test]
    fn estimator_recovers_noise_free_ratio() {
        let r: Vec<f64> = (0..20).map(|k| 0.7f64.powi(k)).collect();
        let (p, s) = mle_ar1(&r).unwrap();
        assert!((p - 0.7).abs() < 1e-15);
        assert!(s < 1e-30);
        assert!(mle_ar1(&[0.0; 20]).is_err());
        assert!(mle_ar1(&[1.0; 5]).is_err());
    }

    #[test]
    fn estimator_variance_matches_asymptotic_law() {
        let est: Vec<f64> = crate::par::map_indices(1000, |k| {
            let mut rng = stream_rng(2, k as u64);
            mle_ar1(&simulate_fast_returns(0.5, 1.0, 1000, None, &mut rng).unwrap()).unwrap().0
        });
        let ratio = variance(&est) / (0.75 / 1000.0);
        assert!((ratio - 1.0).abs() < 0.15, "{ratio}");
        let mut rng = stream_rng(3, 0);
        let zero = mle_ar1(&simulate_fast_returns(0.0, 1.0, 1000, None, &mut rng).unwrap()).unwrap().0;
        assert!(zero.abs() < 3.0 / 1000f64.sqrt());
    }

    #[test]
    fn aggregated_variance_closed_form() {
        assert_eq!(aggregated_variance(0.0, 0.3, 50).unwrap(), 50.0 * 0.3);
        // direct double sum of autocovariances
        for &(phi, n) in &[(0.3f64, 100usize), (-0.6, 7), (0.95, 40)] {
            let g0 = 1.0 / (1.0 - phi * phi);
            let direct: f64 =
                (0..n).flat_map(|i| (0..n).map(move |j| g0 * phi.powi((i as i32 - j as i32).abs()))).sum();
            let v = aggregated_variance(phi, 1.0, n).unwrap();
            assert!((v / direct - 1.0).abs() < 1e-12, "{phi} {n}: {v} {direct}");
        }
        let big = aggregated_variance(0.4, 1.0, 1_000_000).unwrap();
        assert!((big / (1e6 / 0.36) - 1.0).abs() < 1e-5);
        assert!(aggregated_variance(1.0, 1.0, 10).is_err());
    }

    #[test]
    fn aggregated_variance_matches_brute_force() {
        let sums: Vec<f64> = crate::par::map_indices(100_000, |k| {
            let mut rng = stream_rng(4, k as u64);
            simulate_fast_returns(0.3, 1.0, 100, None, &mut rng).unwrap()[1..].iter().sum()
        });
        let v = variance(&sums);
        let f = aggregated_variance(0.3, 1.0, 100).unwrap();
        assert!((v / f - 1.0).abs() < 0.05, "{v} {f}");
    }

    #[test]
    fn exact_block_reduces_to_the_map() {
        let p = MapParams::reference();
        let map = LeverageMap::new(p).unwrap();
        let mut rng = stream_rng(5, 0);
        for &phi in &[0.3, 0.5, 0.8] {
            let s = MicroState::from_phi(&p, phi).unwrap();
            assert!((s.phi - phi).abs() < 1e-14);
            let step = micro_step(&s, &p, 100_000_000, FastBlock::Exact, None, &mut rng).unwrap();
            assert!((step.state.phi - map.t(phi).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn full_memory_freezes_leverage() {
        let p = MapParams::reference().with_omega(1.0);
        let cfg = MicroConfig {
            params: p,
            n: 100,
            block: FastBlock::Simulated,
            carry_over: false,
            breakdown: Breakdown::Abort,
        };
        let run = micro_run(&cfg, 0.4, 50, 6, 0).unwrap();
        let l0 = run.states[0].lambda;
        assert!(run.states.iter().all(|s| (s.lambda - l0).abs() < 1e-12 * l0));
    }

    #[test]
    fn self_comparison_is_zero() {
        let map = LeverageMap::new(MapParams::reference()).unwrap();
        let spec =
            NoiseSpec::at_bound(&map, 1000.0, crate::noise::BumpKind::Mollifier, crate::map::SigmaMode::Paper).unwrap();
        let chain = Chain::random(map, spec, crate::map::SigmaMode::Paper).unwrap();
        let a = reduced_marginal(&chain, 0.38, 100, 2000, 9, 3).unwrap();
        let b = reduced_marginal(&chain, 0.38, 100, 2000, 9, 3).unwrap();
        assert_eq!(crate::stats::ks_two_sample(&a, &b), 0.0);
    }

    #[test]
    fn scaling_keeps_aggregated_variance() {
        let p = MapParams::reference();
        let agg = |n: usize| -> Vec<f64> {
            crate::par::map_indices(400, |k| {
                let mut rng = stream_rng(10 + n as u64, k as u64);
                let r = simulate_fast_returns(0.5, p.sigma_eps / n as f64, n, None, &mut rng).unwrap();
                let (ph, s2) = mle_ar1(&r).unwrap();
                aggregated_variance(ph, s2, n).unwrap()
            })
        };
        let (a, b) = (agg(1000), agg(2000));
        let se = (variance(&a) / 400.0 + variance(&b) / 400.0).sqrt();
        assert!((mean(&a) - mean(&b)).abs() < 4.0 * se, "{} {} {se}", mean(&a), mean(&b));
    }

    #[test]
    fn breakdown_policies() {
        let p = MapParams::reference();
        let cfg = MicroConfig {
            params: p,
            n: 100,
            block: FastBlock::Simulated,
            carry_over: false,
            breakdown: Breakdown::Abort,
        };
        assert!(matches!(micro_run(&cfg, 0.38, 5000, 1, 0), Err(Error::ModelBreakdown(_))));
        let cfg = MicroConfig { breakdown: Breakdown::Resample, ..cfg };
        let run = micro_run(&cfg, 0.38, 5000, 1, 0).unwrap();
        assert!(run.resampled > 0);
        assert!(run.states.iter().all(|s| s.phi.abs() < 1.0));
    }

    #[test]
    #[ignore = "10^9 fast steps"]
    fn long_run_stays_admissible() {
        let cfg = MicroConfig {
            params: MapParams::reference(),
            n: 1000,
            block: FastBlock::Simulated,
            carry_over: false,
            breakdown: Breakdown::Abort,
        };
        let run = micro_run(&cfg, 0.38, 1_000_000, 1, 0).unwrap();
        assert!(run.states.iter().all(|s| s.phi.abs() < 1.0));
    }
}
