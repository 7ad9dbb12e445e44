use std::fmt;

use hetero_core::extremes::{self, K_MAX};
use hetero_core::limit::{self, Observable};
use hetero_core::lyapunov::{self, CellFlag, ScanSetup};
use hetero_core::micro::{self, Breakdown, CompareSetup, FastBlock, MicroConfig};
use hetero_core::multifractal;
use hetero_core::normality::normality_battery;
use hetero_core::orbit::empirical_density;
use hetero_core::stats::{total_variation, variance};
use hetero_core::{Chain, DensityEstimate, Error, StartRule, StepMode, UlamOperator};

use crate::config::{BreakdownChoice, CenteringChoice, Config, ConfigError, Experiment};
use crate::output::{Plot, Report, Table};

#[derive(Debug)]
pub enum RunError {
    Invalid(String),
    Numeric(String),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Invalid(_) => 2,
            RunError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Invalid(m) => write!(f, "invalid configuration: {m}"),
            RunError::Numeric(m) => write!(f, "numerical breakdown: {m}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Invalid(e.0)
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::Geometry(_) | Error::InadmissibleNoise { .. } => {
                RunError::Invalid(e.to_string())
            }
            _ => RunError::Numeric(e.to_string()),
        }
    }
}

type Outcome = Result<Report, RunError>;

pub fn run(cfg: &Config) -> Outcome {
    cfg.validate()?;
    match cfg.run.experiment {
        Experiment::Map => map_curve(cfg),
        Experiment::Orbit => orbit(cfg),
        Experiment::Density => density(cfg),
        Experiment::Lyapunov => lyapunov_scan(cfg),
        Experiment::Bifurcation => bifurcation(cfg),
        Experiment::Clt => clt(cfg),
        Experiment::Multifractal => spectrum(cfg),
        Experiment::Evt => evt(cfg),
        Experiment::Micro => micro_compare(cfg),
    }
}

fn f(x: f64) -> String {
    format!("{x}")
}

fn density_table(name: &str, d: &DensityEstimate) -> Table {
    let mut t = Table::new(name, &["bin_lo", "bin_hi", "mass"]);
    for (k, m) in d.masses.iter().enumerate() {
        t.push(vec![f(d.edge(k)), f(d.edge(k + 1)), f(*m)]);
    }
    t.with_plot(Plot { style: "steps", ..Plot::lines(0, &[2], format!("{name} (mass per bin)")) })
}

fn random_chain(cfg: &Config, what: &str) -> Result<Chain, RunError> {
    let chain = cfg.chain()?;
    if chain.spec().is_none() {
        return Err(RunError::Invalid(format!(
            "the {what} experiment needs a random chain (noise.deterministic = false)"
        )));
    }
    Ok(chain)
}

fn map_curve(cfg: &Config) -> Outcome {
    let chain = cfg.chain()?;
    let map = chain.map;
    let g = map.geometry;
    let (lo, hi) = map.domain();
    let a = chain.spec().map_or(0.0, |s| s.a);
    let mut t = Table::new("map", &["phi", "t", "sigma", "lower", "upper"]);
    let pts = cfg.curve.points.max(2);
    for k in 0..pts {
        let x = (lo + (hi - lo) * k as f64 / (pts - 1) as f64).min(hi);
        let y = map.t(x)?;
        let s = chain.sigma(x);
        t.push(vec![f(x), f(y), f(s), f(y - a * s), f(y + a * s)]);
    }
    let mut r = Report::default();
    r.tables.push(t.with_plot(Plot::lines(0, &[1, 3, 4], "leverage map with noise band")));
    let (ilo, ihi) = g.support_interval(&map.params);
    r.note(format!("critical point {}", g.crit));
    r.note(format!("peak value {}", g.delta));
    r.note(format!("zero crossing b {}", g.b));
    r.note(format!("gap {}", g.gamma_gap));
    r.note(format!(
        "dynamical core [{}, {}], contains the critical point: {}",
        g.core_lo,
        g.core_hi,
        g.core_contains_crit()
    ));
    r.note(format!("stationary support interval [{ilo}, {ihi}]"));
    r.note(format!("noise half-width a {a}"));
    Ok(r)
}

fn orbit(cfg: &Config) -> Outcome {
    let chain = cfg.chain()?;
    let traj = chain.orbit(cfg.run.x0, cfg.run.length, cfg.run.seed)?;
    let mut t = Table::new("orbit", &["t", "phi"]);
    for (k, x) in traj.states.iter().enumerate() {
        t.push(vec![k.to_string(), f(*x)]);
    }
    let mut r = Report::default();
    r.tables.push(t.with_plot(Plot::points(0, &[1], "orbit")));
    let (lo, hi) = chain.map.geometry.support_interval(&chain.map.params);
    let bins = cfg.density.bins;
    if traj.states.len() > cfg.run.burn_in + bins {
        let d = empirical_density(&traj.states, lo, hi, bins, cfg.run.burn_in)?;
        r.tables.push(density_table("orbit_density", &d));
    } else {
        r.note(format!("orbit too short for a {bins}-bin density after burn-in; density table skipped"));
    }
    r.note(format!("states {}", traj.states.len()));
    Ok(r)
}

fn density(cfg: &Config) -> Outcome {
    let chain = random_chain(cfg, "density")?;
    let d = &cfg.density;
    let op = UlamOperator::build(&chain, d.cells)?;
    let st = op.stationary(cfg.run.seed)?;
    let hist = chain.ensemble_histogram(
        StartRule::Fixed(cfg.run.x0),
        d.orbits,
        cfg.run.length,
        cfg.run.burn_in,
        cfg.run.seed,
        (op.lo, op.hi, d.bins),
    )?;
    let (below, above) = hist.outside();
    let emp = hist.to_density()?;
    let mut r = Report::default();
    r.tables.push(density_table("ulam_density", &st.density));
    r.tables.push(density_table("orbit_density", &emp));
    r.note(format!(
        "Ulam cells {}, residual {:.3e}, iterations {}, unique {}",
        d.cells, st.residual, st.iterations, st.unique
    ));
    r.note(format!("L1 distance Ulam vs orbits {}", st.density.l1_distance(&emp)));
    r.note(format!("orbit states outside the support interval: {}", below + above));
    match op.spectral_gap(&st.masses) {
        Ok(gap) => r.note(format!("spectral gap {gap}")),
        Err(e) => r.note(format!("spectral gap not resolved: {e}")),
    }
    Ok(r)
}

fn lyapunov_scan(cfg: &Config) -> Outcome {
    let l = &cfg.lyapunov;
    let mut n_list = vec![None];
    n_list.extend(l.n_list.iter().map(|n| Some(*n)));
    let setup = ScanSetup {
        base: cfg.map,
        c_grid: lyapunov::uniform_grid(l.c_min, l.c_max, l.points),
        n_list: n_list.clone(),
        x0: cfg.run.x0,
        length: cfg.run.length,
        burn_in: cfg.run.burn_in,
        seed: cfg.run.seed,
        bump: cfg.noise.bump,
        mode: cfg.noise.mode,
    };
    let cells = lyapunov::lyapunov_scan(&setup);
    let mut t = Table::new("lyapunov", &["c", "n", "lambda", "stderr", "flag"]);
    for c in &cells {
        let flag = match c.flag {
            CellFlag::Ok => "ok",
            CellFlag::Geometry => "geometry",
            CellFlag::Failed => "failed",
        };
        t.push(vec![f(c.c), c.n.map(f).unwrap_or_default(), f(c.lambda), f(c.stderr), flag.into()]);
    }
    let mut r = Report::default();
    r.tables.push(t.with_plot(Plot::points(0, &[2], "Lyapunov exponent against c")));
    let row = |n: Option<f64>| -> Vec<f64> {
        cells.iter().filter(|c| c.n == n && c.flag == CellFlag::Ok).map(|c| c.lambda).collect()
    };
    for n in &n_list {
        let v = row(*n);
        let pos = v.iter().filter(|x| **x > 0.0).count();
        let label = n.map_or("deterministic".to_string(), |n| format!("n = {n}"));
        r.note(format!("{label}: {} cells, {pos} positive, total variation {}", v.len(), total_variation(&v)));
    }
    Ok(r)
}

fn bifurcation(cfg: &Config) -> Outcome {
    let b = &cfg.bifurcation;
    let grid = lyapunov::uniform_grid(b.c_min, b.c_max, b.points);
    let pts = lyapunov::bifurcation_diagram(&cfg.map, &grid, cfg.run.x0, b.transient, b.keep);
    let mut t = Table::new("bifurcation", &["c", "phi", "geometry_ok"]);
    for p in &pts {
        t.push(vec![f(p.c), f(p.phi), p.geometry_ok.to_string()]);
    }
    let mut r = Report::default();
    r.tables.push(t.with_plot(Plot::points(0, &[1], "bifurcation diagram")));
    r.note(format!("{} points over {} values of c", pts.len(), grid.len()));
    Ok(r)
}

fn clt(cfg: &Config) -> Outcome {
    let chain = random_chain(cfg, "clt")?;
    let c = &cfg.clt;
    let op = UlamOperator::build(&chain, c.cells)?;
    let st = op.stationary(cfg.run.seed)?;
    let g = match c.centering {
        CenteringChoice::Stationary => Observable::stationary_centered(&chain, c.cells)?,
        CenteringChoice::Lebesgue => {
            let (lo, hi) = chain.map.geometry.support_interval(&chain.map.params);
            Observable::lebesgue_centered(lo, hi)
        }
    };
    let iota2 = limit::iota_squared(&op, &st.masses, &g.cell_values(&op), 100_000)?;
    let iota = iota2.value.sqrt();
    let samples = limit::birkhoff_ensemble(
        &chain,
        g,
        &c.t_list,
        c.orbits,
        StartRule::Fixed(cfg.run.x0),
        cfg.run.burn_in,
        cfg.run.seed,
    )?;
    let mut t = Table::new(
        "normality",
        &[
            "t",
            "count",
            "variance",
            "shapiro_w",
            "shapiro_p",
            "dagostino_k2",
            "dagostino_p",
            "jarque_bera",
            "jarque_bera_p",
            "berry_esseen",
        ],
    );
    for s in &samples {
        let b = normality_battery(&s.values)?;
        let be = limit::berry_esseen_distance(&s.values, iota)?;
        t.push(vec![
            s.t.to_string(),
            s.len().to_string(),
            f(variance(&s.values)),
            f(b.shapiro.statistic),
            f(b.shapiro.p_value),
            f(b.dagostino.statistic),
            f(b.dagostino.p_value),
            f(b.jarque_bera.statistic),
            f(b.jarque_bera.p_value),
            f(be),
        ]);
    }
    let mut r = Report::default();
    r.tables.push(t.with_plot(Plot::lines(0, &[9], "Berry-Esseen distance").log_x()));
    let eps: Vec<f64> = c.eps_list.iter().map(|k| k * iota).collect();
    match limit::ldp_decay(&samples, &eps) {
        Ok(cells) => {
            let mut ld = Table::new("ldp", &["eps", "eps_over_iota", "t", "hits", "count", "loghat"]);
            for cell in cells {
                ld.push(vec![
                    f(cell.eps),
                    f(cell.eps / iota),
                    cell.t.to_string(),
                    cell.hits.to_string(),
                    cell.count.to_string(),
                    cell.loghat.map(f).unwrap_or_default(),
                ]);
            }
            r.tables.push(ld);
        }
        Err(e) => r.note(format!("large deviations: {e}")),
    }
    r.note(format!("observable sin(x) - {}", g.shift));
    r.note(format!(
        "asymptotic variance {} from {} correlation lags (last term {:.2e})",
        iota2.value, iota2.lags, iota2.last_term
    ));
    r.note(format!("Berry-Esseen reference bound {}", 1.36 / (c.orbits as f64).sqrt() + 0.05));
    Ok(r)
}

fn spectrum(cfg: &Config) -> Outcome {
    let chain = cfg.chain()?;
    let m = &cfg.multifractal;
    let steps = ((m.q_max - m.q_min) / m.q_step + 1e-9).floor() as usize;
    let q: Vec<f64> = (0..=steps).map(|k| m.q_min + k as f64 * m.q_step).collect();
    let radii = match (m.r_min, m.r_max) {
        (Some(lo), Some(hi)) => multifractal::radii(lo, hi, m.r_points),
        _ => multifractal::radii_for(m.samples),
    };
    let s = multifractal::chain_spectrum(&chain, cfg.run.x0, m.samples, cfg.run.burn_in, cfg.run.seed, &q, &radii)?;
    let mut t = Table::new("spectrum", &["q", "Dq", "R2", "n_radii", "Dq_reference"]);
    for k in 0..s.q.len() {
        t.push(vec![f(s.q[k]), f(s.d[k]), f(s.r2[k]), s.n_radii[k].to_string(), f(multifractal::dq_reference(s.q[k]))]);
    }
    let mut r = Report::default();
    r.tables.push(t.with_plot(Plot::lines(0, &[1, 4], "generalized dimensions")));
    r.note(format!("samples {}, radii [{}, {}] ({} values)", s.samples, radii[0], radii[radii.len() - 1], radii.len()));
    let flagged = s.flagged();
    if !flagged.is_empty() {
        r.note(format!(
            "fits with R^2 below {}: q = {:?}",
            multifractal::R2_FLAG,
            flagged.iter().map(|&k| s.q[k]).collect::<Vec<_>>()
        ));
    }
    Ok(r)
}

fn evt(cfg: &Config) -> Outcome {
    let chain = random_chain(cfg, "evt")?;
    let e = &cfg.evt;
    let (lo, hi) = chain.map.geometry.support_interval(&chain.map.params);
    let hist = chain.ensemble_histogram(
        StartRule::Fixed(cfg.run.x0),
        e.density_orbits,
        e.density_length,
        cfg.run.burn_in,
        cfg.run.seed.wrapping_add(1),
        (lo, hi, e.bins),
    )?;
    let density = hist.to_density()?;
    let levels = extremes::boundary_levels(&density, e.z, e.tau, &e.t_grid)?;
    let dist = extremes::orbit_distances(&chain, e.z, cfg.run.x0, cfg.run.burn_in, e.length, cfg.run.seed)?;
    let blocks = extremes::block_maxima_prob(&dist, &levels)?;
    let mut t = Table::new(
        "boundary_levels",
        &["t", "u", "radius", "mass_times_t", "density_floor", "blocks", "p_hat", "stderr", "theta", "gumbel"],
    );
    let mut r = Report::default();
    for (l, b) in levels.iter().zip(&blocks) {
        let theta = match extremes::extremal_index(&dist, l.t, l.radius, K_MAX) {
            Ok(ei) => f(ei.theta),
            Err(err) => {
                r.note(format!("extremal index at t = {}: {err}", l.t));
                String::new()
            }
        };
        t.push(vec![
            l.t.to_string(),
            f(l.u),
            f(l.radius),
            f(l.mass * l.t as f64),
            f(l.density_floor),
            b.blocks.to_string(),
            f(b.p_hat),
            f(b.stderr),
            theta,
            f((-e.tau).exp()),
        ]);
    }
    r.tables.push(t.with_plot(Plot::points(0, &[6, 9], "P(M_t <= u_t)").log_x()));
    if let Some(last) = levels.last() {
        let mut p = Table::new("poisson", &["s", "k", "p_hat", "pmf"]);
        for tab in extremes::poisson_counts(&dist, last, &e.s_list)? {
            for (k, (ph, pm)) in tab.p_hat.iter().zip(&tab.pmf).enumerate() {
                p.push(vec![f(tab.s), k.to_string(), f(*ph), f(*pm)]);
            }
            r.note(format!(
                "s = {}: mean count {}, chi-square {}, {} windows of {} states",
                tab.s, tab.mean, tab.chi2, tab.windows, tab.window
            ));
        }
        r.tables.push(p);
    }
    r.note(format!("z = {}, tau = {}, density bins {}", e.z, e.tau, e.bins));
    Ok(r)
}

fn micro_compare(cfg: &Config) -> Outcome {
    let m = &cfg.micro;
    let breakdown = match m.breakdown {
        BreakdownChoice::Abort => Breakdown::Abort,
        BreakdownChoice::Resample => Breakdown::Resample,
    };
    let mut r = Report::default();
    for &n in &m.n_list {
        let mc = MicroConfig { params: cfg.map, n, block: FastBlock::Simulated, carry_over: m.carry_over, breakdown };
        let run = micro::micro_run(&mc, cfg.run.x0, cfg.run.burn_in + m.horizon, cfg.run.seed, 0)?;
        let mut t = Table::new(format!("micro_run_n{n}"), &["t", "lambda", "phi", "sigma2_e", "gamma"]);
        for (k, s) in run.states.iter().enumerate() {
            t.push(vec![k.to_string(), f(s.lambda), f(s.phi), f(s.sigma2_e), f(s.gamma)]);
        }
        r.tables.push(t.with_plot(Plot::points(0, &[2], format!("micro leverage, n = {n}"))));
        r.note(format!("n = {n}: {} clamped estimates, {} resampled blocks", run.clamped, run.resampled));
    }
    let setup = CompareSetup {
        params: cfg.map,
        n_list: m.n_list.clone(),
        phi0: cfg.run.x0,
        horizon: m.horizon,
        burn_in: cfg.run.burn_in,
        seed: cfg.run.seed,
        reduced: StepMode::random(cfg.noise.mode),
        bump: cfg.noise.bump,
        breakdown,
    };
    let mut t = Table::new("micro_vs_reduced", &["n", "ks", "flagged", "clamped", "resampled", "error"]);
    for c in micro::compare_micro_reduced(&setup)? {
        t.push(vec![
            c.n.to_string(),
            f(c.ks),
            c.flagged.to_string(),
            c.clamped.to_string(),
            c.resampled.to_string(),
            c.error.unwrap_or_default(),
        ]);
    }
    r.tables.push(t.with_plot(Plot::points(0, &[1], "KS distance, micro vs reduced").log_x()));
    Ok(r)
}
