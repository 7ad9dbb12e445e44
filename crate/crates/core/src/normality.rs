//! Shapiro-Wilk, D'Agostino-Pearson and Jarque-Bera normality tests.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const MIN_SAMPLE: usize = 100;
/// Shapiro-Wilk is evaluated on at most this many points.
pub const SHAPIRO_MAX: usize = 5000;
const SHAPIRO_SUBSAMPLE_SEED: u64 = 0x5a17_0001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub shapiro: TestResult,
    /// Whether Shapiro-Wilk ran on a fixed-seed subsample.
    pub shapiro_subsampled: bool,
    pub dagostino: TestResult,
    pub jarque_bera: TestResult,
}

impl Battery {
    pub fn all_reject(&self, level: f64) -> bool {
        self.p_values().iter().all(|p| *p < level)
    }

    pub fn all_accept(&self, level: f64) -> bool {
        self.p_values().iter().all(|p| *p > level)
    }

    pub fn p_values(&self) -> [f64; 3] {
        [self.shapiro.p_value, self.dagostino.p_value, self.jarque_bera.p_value]
    }
}

/// All three tests on one sample of at least 100 values.
pub fn normality_battery(x: &[f64]) -> Result<Battery> {
    if x.len() < MIN_SAMPLE {
        return Err(Error::InsufficientData(format!(
            "normality tests need at least {MIN_SAMPLE} values, got {}",
            x.len()
        )));
    }
    let (shapiro, shapiro_subsampled) = if x.len() > SHAPIRO_MAX {
        let mut rng = ChaCha8Rng::seed_from_u64(SHAPIRO_SUBSAMPLE_SEED);
        let mut idx = sample(&mut rng, x.len(), SHAPIRO_MAX).into_vec();
        idx.sort_unstable();
        let sub: Vec<f64> = idx.into_iter().map(|i| x[i]).collect();
        (shapiro_wilk(&sub)?, true)
    } else {
        (shapiro_wilk(x)?, false)
    };
    Ok(Battery { shapiro, shapiro_subsampled, dagostino: dagostino_pearson(x)?, jarque_bera: jarque_bera(x)? })
}

fn central_moments(x: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (m2 / n, m3 / n, m4 / n)
}

fn chi2_2_sf(x: f64) -> f64 {
    (-0.5 * x).exp()
}

/// Jarque-Bera statistic with its chi-square(2) tail probability.
pub fn jarque_bera(x: &[f64]) -> Result<TestResult> {
    let (m2, m3, m4) = central_moments(x);
    if !(m2 > 0.0) {
        return Err(Error::InsufficientData("constant sample".into()));
    }
    let n = x.len() as f64;
    let s = m3 / m2.powf(1.5);
    let k = m4 / (m2 * m2);
    let jb = n / 6.0 * (s * s + 0.25 * (k - 3.0).powi(2));
    Ok(TestResult { statistic: jb, p_value: chi2_2_sf(jb) })
}

/// Skewness z-score (D'Agostino 1970).
pub fn skew_z(x: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    if n < 8.0 {
        return Err(Error::InsufficientData("skewness test needs at least 8 values".into()));
    }
    let (m2, m3, _) = central_moments(x);
    if !(m2 > 0.0) {
        return Err(Error::InsufficientData("constant sample".into()));
    }
    let b2 = m3 / m2.powf(1.5);
    let mut y = b2 * ((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0))).sqrt();
    let beta2 =
        3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0) / ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / (0.5 * w2.ln()).sqrt();
    let alpha = (2.0 / (w2 - 1.0)).sqrt();
    if y == 0.0 {
        y = 1.0;
    }
    let r = y / alpha;
    Ok(delta * (r + (r * r + 1.0).sqrt()).ln())
}

/// Kurtosis z-score (Anscombe and Glynn 1983).
pub fn kurtosis_z(x: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    if n < 5.0 {
        return Err(Error::InsufficientData("kurtosis test needs at least 5 values".into()));
    }
    let (m2, _, m4) = central_moments(x);
    if !(m2 > 0.0) {
        return Err(Error::InsufficientData("constant sample".into()));
    }
    let b2 = m4 / (m2 * m2);
    let e = 3.0 * (n - 1.0) / (n + 1.0);
    let varb2 = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0) * (n + 1.0) * (n + 3.0) * (n + 5.0));
    let xs = (b2 - e) / varb2.sqrt();
    let sqrtbeta1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0))
        * (6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0))).sqrt();
    let a = 6.0 + 8.0 / sqrtbeta1 * (2.0 / sqrtbeta1 + (1.0 + 4.0 / (sqrtbeta1 * sqrtbeta1)).sqrt());
    let term1 = 1.0 - 2.0 / (9.0 * a);
    let denom = 1.0 + xs * (2.0 / (a - 4.0)).sqrt();
    if denom == 0.0 {
        return Ok(f64::NAN);
    }
    let term2 = denom.signum() * ((1.0 - 2.0 / a) / denom.abs()).cbrt();
    Ok((term1 - term2) / (2.0 / (9.0 * a)).sqrt())
}

/// D'Agostino-Pearson omnibus `K^2 = z_skew^2 + z_kurt^2`.
pub fn dagostino_pearson(x: &[f64]) -> Result<TestResult> {
    let k2 = skew_z(x)?.powi(2) + kurtosis_z(x)?.powi(2);
    Ok(TestResult { statistic: k2, p_value: chi2_2_sf(k2) })
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * x + v)
}

/// Shapiro-Wilk `W` with Royston's (1995) coefficient and p-value
/// approximations, valid for `3 <= n <= 5000`.
pub fn shapiro_wilk(x: &[f64]) -> Result<TestResult> {
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientData("Shapiro-Wilk needs at least 3 values".into()));
    }
    if n > SHAPIRO_MAX {
        return Err(Error::InvalidParameter(format!("Shapiro-Wilk supports at most {SHAPIRO_MAX} values")));
    }
    let mut xs = x.to_vec();
    xs.sort_by(f64::total_cmp);
    let range = xs[n - 1] - xs[0];
    if !(range > 0.0) {
        return Err(Error::InsufficientData("constant sample".into()));
    }
    let std = Normal::standard();
    let an = n as f64;
    let half = n / 2;

    // coefficients for the lower half, returned as positive weights
    let mut a = vec![0.0; half];
    if n == 3 {
        a[0] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
        const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
        let m: Vec<f64> = (1..=half).map(|i| std.inverse_cdf((i as f64 - 0.375) / (an + 0.25))).collect();
        let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / an.sqrt();
        let a1 = poly(&C1, rsn) - m[0] / ssumm2;
        let (first, fac) = if n > 5 {
            let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
            let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)).sqrt();
            a[1] = a2;
            (2, fac)
        } else {
            let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
            (1, fac)
        };
        a[0] = a1;
        for i in first..half {
            a[i] = -m[i] / fac;
        }
    }

    let mean = xs.iter().sum::<f64>() / an;
    let ssq: f64 = xs.iter().map(|v| (v - mean).powi(2)).sum();
    let num: f64 = (0..half).map(|i| a[i] * (xs[n - 1 - i] - xs[i])).sum();
    let w = (num * num / ssq).min(1.0);

    let p = if n == 3 {
        const PI6: f64 = 1.909_859_317_102_744;
        const STQR: f64 = std::f64::consts::FRAC_PI_3;
        (PI6 * (w.sqrt().asin() - STQR)).max(0.0)
    } else {
        let w1 = (1.0 - w).ln();
        let (y, mu, s) = if n <= 11 {
            let gamma = poly(&[-2.273, 0.459], an);
            if w1 >= gamma {
                return Ok(TestResult { statistic: w, p_value: 1e-99 });
            }
            let y = -(gamma - w1).ln();
            (
                y,
                poly(&[0.544, -0.39978, 0.025054, -6.714e-4], an),
                poly(&[1.3822, -0.77857, 0.062767, -0.0020322], an).exp(),
            )
        } else {
            let ln_n = an.ln();
            (
                w1,
                poly(&[-1.5861, -0.31082, -0.083751, 0.0038915], ln_n),
                poly(&[-0.4803, -0.082676, 0.0030302], ln_n).exp(),
            )
        };
        std.sf((y - mu) / s)
    };
    Ok(TestResult { statistic: w, p_value: p.clamp(0.0, 1.0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn skewed() -> Vec<f64> {
        (0..200).map(|i| ((i as f64 * 0.618_033_988_749_894_9 + 0.1) % 1.0).powi(3)).collect()
    }

    fn wavy() -> Vec<f64> {
        (0..3000).map(|i| (i as f64 * 1.3).sin() + 0.5 * (i as f64 * 0.37).sin()).collect()
    }

    fn rel(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs()
    }

    // Reference values from scipy.stats (shapiro, normaltest, jarque_bera).
    // scipy computes Shapiro-Wilk in single precision, hence the looser p tolerance.
    #[test]
    fn shapiro_matches_reference() {
        let r = shapiro_wilk(&skewed()).unwrap();
        assert!(rel(r.statistic, 0.822_742_031_055_165_2, 1e-6), "{r:?}");
        assert!(rel(r.p_value, 2.434_427_111_802_862_8e-14, 1e-2), "{r:?}");
        let r = shapiro_wilk(&wavy()).unwrap();
        assert!(rel(r.statistic, 0.972_018_648_746_872_4, 1e-6), "{r:?}");
        assert!(rel(r.p_value, 8.763_028_981_611_862e-24, 1e-2), "{r:?}");
        let small: Vec<f64> = (0..9).map(|i| (-1.0 + 0.25 * i as f64).powi(3)).collect();
        let r = shapiro_wilk(&small).unwrap();
        assert!(rel(r.statistic, 0.946_680_109_114_050_2, 1e-6), "{r:?}");
        assert!(rel(r.p_value, 0.653_685_522_942_161_4, 1e-4), "{r:?}");
        let r = shapiro_wilk(&[1.0, 2.0, 4.0]).unwrap();
        assert!(rel(r.statistic, 0.964_285_714_285_714_2, 1e-9), "{r:?}");
        assert!(rel(r.p_value, 0.636_886_845_028_968_9, 1e-6), "{r:?}");
        let mid: Vec<f64> = (0..40).map(|i| (i as f64 * 1.7).sin().powi(2) + 0.01 * i as f64).collect();
        let r = shapiro_wilk(&mid).unwrap();
        assert!(rel(r.statistic, 0.955_858_952_401_827_8, 1e-6), "{r:?}");
        assert!(rel(r.p_value, 0.120_717_354_310_602_32, 1e-4), "{r:?}");
    }

    #[test]
    fn dagostino_and_jarque_bera_match_reference() {
        let r = dagostino_pearson(&skewed()).unwrap();
        assert!(rel(r.statistic, 28.523_942_739_547_504, 1e-9));
        assert!(rel(r.p_value, 6.398_888_357_795_247e-7, 1e-8));
        let r = jarque_bera(&skewed()).unwrap();
        assert!(rel(r.statistic, 37.748_332_100_470_876, 1e-9));
        assert!(rel(r.p_value, 6.354_096_904_726_563e-9, 1e-8));
        let r = dagostino_pearson(&wavy()).unwrap();
        assert!(rel(r.statistic, 745.433_244_852_145_4, 1e-9));
        let r = jarque_bera(&wavy()).unwrap();
        assert!(rel(r.statistic, 129.831_411_655_268_48, 1e-9));
        let mid: Vec<f64> = (0..40).map(|i| (i as f64 * 1.7).sin().powi(2) + 0.01 * i as f64).collect();
        let r = dagostino_pearson(&mid).unwrap();
        assert!(rel(r.statistic, 8.259_428_201_475_663, 1e-9));
        assert!(rel(r.p_value, 0.016_087_477_563_134_3, 1e-8));
    }

    #[test]
    fn null_calibration() {
        let mut passes = [0usize; 3];
        for rep in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + rep);
            let x: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
            let b = normality_battery(&x).unwrap();
            assert!(b.shapiro_subsampled);
            for (k, p) in b.p_values().iter().enumerate() {
                if *p > 0.01 {
                    passes[k] += 1;
                }
            }
        }
        assert!(passes.iter().all(|&c| c >= 95), "{passes:?}");
    }

    #[test]
    fn small_samples_are_refused() {
        assert!(normality_battery(&[0.0; 50]).is_err());
        assert!(normality_battery(&vec![1.0; 200]).is_err());
    }
}
