//! Scalar metrics over measured rates.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("jain index needs at least one sample")]
    Empty,
    #[error("jain index undefined for all-zero input")]
    AllZero,
}

/// Jain's fairness index `(sum x)^2 / (n * sum x^2)`; 1 for equal shares,
/// 1/n when a single flow takes everything.
pub fn jain_index(xs: &[f64]) -> Result<f64, MetricsError> {
    if xs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let sum: f64 = xs.iter().sum();
    let sum_sq: f64 = xs.iter().map(|x| x * x).sum();
    if sum_sq == 0.0 {
        return Err(MetricsError::AllZero);
    }
    Ok(sum * sum / (xs.len() as f64 * sum_sq))
}

/// Sample mean and standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jain_examples() {
        assert!((jain_index(&[5.0, 5.0, 5.0, 5.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((jain_index(&[1.0, 0.0, 0.0, 0.0]).unwrap() - 0.25).abs() < 1e-15);
        assert!((jain_index(&[1.0, 2.0, 3.0]).unwrap() - 6.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn jain_errors() {
        assert_eq!(jain_index(&[]), Err(MetricsError::Empty));
        assert_eq!(jain_index(&[0.0, 0.0]), Err(MetricsError::AllZero));
    }

    #[test]
    fn jain_scale_invariant() {
        let xs = [1.0, 4.0, 2.0, 9.0];
        let scaled: Vec<f64> = xs.iter().map(|x| x * 37.5).collect();
        let a = jain_index(&xs).unwrap();
        let b = jain_index(&scaled).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(a >= 0.25 && a <= 1.0);
    }
}
