//! Ordinary least-squares line fit used by the lifetime and time-of-flight
//! analyses.

use crate::error::{Error, Result};
use crate::math::FloatExt;
use alloc::string::ToString;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual_rms: f64,
    /// Standard error of the slope (0 for a two-point fit).
    pub slope_stderr: f64,
}

/// Fit y = intercept + slope·x.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<LinearFit> {
    let n = points.len();
    if n < 2 {
        return Err(Error::DegenerateFit("need at least two points".to_string()));
    }
    let nf = n as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all abscissae equal".to_string()));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = points
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    let slope_stderr = if n > 2 { (ss_res / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(LinearFit { slope, intercept, residual_rms: (ss_res / nf).sqrt(), slope_stderr })
}

/// Fit with the abscissae transformed by `f` (e.g. t → t²).
pub fn linear_fit_mapped(points: &[(f64, f64)], f: impl Fn(f64) -> f64) -> Result<LinearFit> {
    let mapped: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (f(x), y)).collect();
    linear_fit(&mapped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn recovers_exact_line() {
        let pts: Vec<(f64, f64)> = (0..7).map(|i| (i as f64, 3.0 - 0.5 * i as f64)).collect();
        let fit = linear_fit(&pts).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!((fit.intercept - 3.0).abs() < 1e-12);
        assert!(fit.residual_rms < 1e-12);
        assert!(fit.slope_stderr < 1e-12);
    }

    #[test]
    fn two_points_give_exact_slope() {
        let fit = linear_fit(&[(1.0, 2.0), (3.0, 8.0)]).unwrap();
        assert_eq!(fit.slope, 3.0);
        assert_eq!(fit.slope_stderr, 0.0);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(linear_fit(&[(1.0, 1.0)]).is_err());
        assert!(linear_fit(&vec![(2.0, 1.0), (2.0, 5.0), (2.0, 9.0)]).is_err());
    }
}
