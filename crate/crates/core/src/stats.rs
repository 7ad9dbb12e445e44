//! Small statistical utilities shared by the experiments.

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Streaming batch-means estimator of the standard error of a time average.
#[derive(Debug, Clone)]
pub struct BatchMeans {
    batch_len: usize,
    current: f64,
    filled: usize,
    batches: Vec<f64>,
    total: f64,
    count: usize,
}

impl BatchMeans {
    /// `expected` samples split into `batches` batches of equal length.
    pub fn new(expected: usize, batches: usize) -> Self {
        Self {
            batch_len: (expected / batches.max(1)).max(1),
            current: 0.0,
            filled: 0,
            batches: Vec::with_capacity(batches),
            total: 0.0,
            count: 0,
        }
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.total += x;
        self.count += 1;
        self.current += x;
        self.filled += 1;
        if self.filled == self.batch_len {
            self.batches.push(self.current / self.batch_len as f64);
            self.current = 0.0;
            self.filled = 0;
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.total / self.count as f64
    }

    /// Standard error from the spread of complete batch means.
    pub fn stderr(&self) -> f64 {
        let k = self.batches.len();
        if k < 2 {
            return f64::NAN;
        }
        (variance(&self.batches) / k as f64).sqrt()
    }
}

/// Kolmogorov-Smirnov distance between two samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Kolmogorov-Smirnov distance of a sample to a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// Total variation `sum |x_{k+1} - x_k|` of a sequence.
pub fn total_variation(x: &[f64]) -> f64 {
    x.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}
