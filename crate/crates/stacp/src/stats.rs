//! Two-tailed paired t-test.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub n: usize,
    pub mean_diff: f64,
    pub t: f64,
    pub p: f64,
    pub significant: bool,
    /// Differences had zero variance, so the statistic is undefined and
    /// significance was decided by convention.
    pub degenerate: bool,
}

/// Paired t-test on `a[i] - b[i]`. Zero-variance differences with a non-zero
/// mean count as significant (flagged degenerate); all-zero differences do not.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Data(format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Data(format!("paired t-test needs at least 2 pairs, got {n}")));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        let nonzero = mean != 0.0;
        return Ok(TTest {
            n,
            mean_diff: mean,
            t: if nonzero { mean.signum() * f64::INFINITY } else { 0.0 },
            p: if nonzero { 0.0 } else { 1.0 },
            significant: nonzero,
            degenerate: nonzero,
        });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| Error::Numeric(e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(TTest { n, mean_diff: mean, t, p, significant: p < SIGNIFICANCE_LEVEL, degenerate: false })
}
