//! WebAssembly bindings for the static demo page in `www/`.
//!
//! All exports return flat `Float64Array`s; the layout of each is given on
//! the function. The computations live in [`compute`] so they can be tested
//! natively.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use wasm_bindgen::prelude::*;

pub mod compute {
    use hetero_core::lyapunov::{bifurcation_diagram, uniform_grid};
    use hetero_core::noise::NoiseSpec;
    use hetero_core::{BumpKind, Chain, LeverageMap, MapParams, SigmaMode, UlamOperator};

    pub fn sigma_mode(name: &str) -> Result<SigmaMode, String> {
        match name {
            "paper" => Ok(SigmaMode::Paper),
            "first-order" => Ok(SigmaMode::FirstOrder),
            "exact-F" => Ok(SigmaMode::ExactF),
            _ => Err(format!("unknown sigma mode `{name}`")),
        }
    }

    fn chain(c: f64, omega: f64, n: f64, mode: SigmaMode) -> Result<Chain, String> {
        let map = LeverageMap::new(MapParams::reference().with_c(c).with_omega(omega)).map_err(|e| e.to_string())?;
        let spec = NoiseSpec::at_bound(&map, n, BumpKind::Mollifier, mode).map_err(|e| e.to_string())?;
        Chain::random(map, spec, mode).map_err(|e| e.to_string())
    }

    /// `[crit, delta, b, support_lo, support_hi, a, phi_0, t_0, lower_0, upper_0, phi_1, ...]`.
    pub fn map_curve(c: f64, omega: f64, n: f64, mode: &str, points: usize) -> Result<Vec<f64>, String> {
        let chain = chain(c, omega, n, sigma_mode(mode)?)?;
        let map = chain.map;
        let g = map.geometry;
        let (slo, shi) = g.support_interval(&map.params);
        let a = chain.spec().map_or(0.0, |s| s.a);
        let (lo, hi) = map.domain();
        let points = points.max(2);
        let mut out = vec![g.crit, g.delta, g.b, slo, shi, a];
        for k in 0..points {
            let x = (lo + (hi - lo) * k as f64 / (points - 1) as f64).min(hi);
            let y = map.t(x).map_err(|e| e.to_string())?;
            let s = a * chain.sigma(x);
            out.extend([x, y, y - s, y + s]);
        }
        Ok(out)
    }

    /// `[c_0, phi_0, c_1, phi_1, ...]` after `transient` iterations from `x0`.
    pub fn bifurcation(c_min: f64, c_max: f64, omega: f64, points: usize, keep: usize) -> Result<Vec<f64>, String> {
        if !(c_min < c_max) || points < 2 {
            return Err("need c_min < c_max and at least two grid points".into());
        }
        let base = MapParams::reference().with_omega(omega);
        let pts = bifurcation_diagram(&base, &uniform_grid(c_min, c_max, points), 0.38, 500, keep);
        Ok(pts.iter().flat_map(|p| [p.c, p.phi]).collect())
    }

    /// `[lo, hi, height_0, height_1, ...]`: the Ulam stationary density on `cells` cells.
    pub fn stationary_density(c: f64, omega: f64, n: f64, mode: &str, cells: usize) -> Result<Vec<f64>, String> {
        let chain = chain(c, omega, n, sigma_mode(mode)?)?;
        let op = UlamOperator::build(&chain, cells).map_err(|e| e.to_string())?;
        let st = op.stationary(1).map_err(|e| e.to_string())?;
        let mut out = vec![st.density.lo, st.density.hi];
        out.extend(st.density.heights());
        Ok(out)
    }
}

fn js(r: Result<Vec<f64>, String>) -> Result<Vec<f64>, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn map_curve(c: f64, omega: f64, n: f64, mode: &str, points: usize) -> Result<Vec<f64>, JsError> {
    js(compute::map_curve(c, omega, n, mode, points))
}

#[wasm_bindgen]
pub fn bifurcation(c_min: f64, c_max: f64, omega: f64, points: usize, keep: usize) -> Result<Vec<f64>, JsError> {
    js(compute::bifurcation(c_min, c_max, omega, points, keep))
}

#[wasm_bindgen]
pub fn stationary_density(c: f64, omega: f64, n: f64, mode: &str, cells: usize) -> Result<Vec<f64>, JsError> {
    js(compute::stationary_density(c, omega, n, mode, cells))
}
