//! Maximum-likelihood logit via iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

const MAX_ITERATIONS: usize = 100;
const RELATIVE_LL_TOL: f64 = 1e-10;
/// Coefficient sup-norm beyond which the fit is treated as separated.
const SEPARATION_NORM: f64 = 1e3;
const PROB_CLAMP: f64 = 1e-12;
const MIN_WEIGHT: f64 = 1e-10;
/// Probabilities this close to 0 or 1 mark rows the likelihood is driving to
/// the boundary; an interior MLE does not produce them.
const PIN_DETECT: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct LogitFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub fitted: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the coefficient norm diverged (perfect separation); fitted
    /// probabilities are clamped away from 0 and 1.
    pub separation_flagged: bool,
    pub column_names: Vec<String>,
}

fn log_likelihood(y: &[f64], p: &[f64]) -> f64 {
    y.iter()
        .zip(p)
        .map(|(&yi, &pi)| {
            let pi = pi.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            yi * pi.ln() + (1.0 - yi) * (1.0 - pi).ln()
        })
        .sum()
}

/// Fit a binary logit of `y` (0/1) on `x` by IRLS.
///
/// Singular designs are an error naming the collinear columns. Perfect
/// separation flags the fit instead of failing: probabilities are clamped to
/// [1e-12, 1 - 1e-12] and iteration stops.
pub fn fit_logit(x: &DMatrix<f64>, y: &[f64], names: &[String]) -> Result<LogitFit> {
    let (n, p) = x.shape();
    if n != y.len() {
        return Err(Error::invalid(format!(
            "{n} design rows but {} responses",
            y.len()
        )));
    }
    if n == 0 {
        return Err(Error::data("cannot fit a logit with no rows"));
    }
    if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::invalid("logit responses must be 0 or 1"));
    }
    linalg::check_full_rank(x, names)?;

    let mut beta = DVector::<f64>::zeros(p);
    let mut eta = DVector::<f64>::zeros(n);
    let mut prob: Vec<f64> = vec![0.5; n];
    let mut ll = log_likelihood(y, &prob);
    let mut converged = false;
    let mut separated = false;
    let mut iterations = 0;
    let mut xtwx = DMatrix::<f64>::zeros(p, p);

    for iter in 1..=MAX_ITERATIONS {
        iterations = iter;
        // Working response z = eta + (y - p) / w with w = p (1 - p).
        let mut z = DVector::<f64>::zeros(n);
        let mut w = DVector::<f64>::zeros(n);
        for i in 0..n {
            let wi = (prob[i] * (1.0 - prob[i])).max(MIN_WEIGHT);
            w[i] = wi;
            z[i] = eta[i] + (y[i] - prob[i]) / wi;
        }
        // Solve (X' W X) beta = X' W z.
        let mut xw = x.clone();
        for i in 0..n {
            for j in 0..p {
                xw[(i, j)] *= w[i];
            }
        }
        xtwx = x.transpose() * &xw;
        let xtwz = xw.transpose() * &z;
        let next = linalg::solve_spd(&xtwx, &xtwz).ok_or_else(|| {
            Error::numerical("IRLS normal equations are not positive definite".to_string())
        })?;
        beta = next;
        eta = x * &beta;
        for i in 0..n {
            prob[i] = 1.0 / (1.0 + (-eta[i]).exp());
        }
        let new_ll = log_likelihood(y, &prob);

        if beta.amax() > SEPARATION_NORM {
            separated = true;
            break;
        }
        let denom = ll.abs().max(1e-10);
        let reached_tol = (new_ll - ll).abs() / denom < RELATIVE_LL_TOL;
        ll = new_ll;
        if reached_tol {
            converged = true;
            break;
        }
    }
    // Divergence the norm guard did not catch: probabilities pinned at 0/1
    // mean the likelihood is flat at a boundary, not at an interior MLE.
    if !separated {
        separated = prob
            .iter()
            .any(|p| *p < PIN_DETECT || *p > 1.0 - PIN_DETECT);
    }

    let fitted: Vec<f64> = prob
        .iter()
        .map(|&p| p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
        .collect();
    let std_errors = match linalg::inv_spd(&xtwx) {
        Some(cov) => (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect(),
        None => vec![f64::NAN; p],
    };
    let final_ll = log_likelihood(y, &fitted);
    Ok(LogitFit {
        coefficients: beta.iter().copied().collect(),
        std_errors,
        fitted,
        log_likelihood: final_ll,
        iterations,
        converged,
        separation_flagged: separated,
        column_names: names.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn design(cols: &[Vec<f64>]) -> (DMatrix<f64>, Vec<String>) {
        let n = cols[0].len();
        let p = cols.len();
        let x = DMatrix::from_fn(n, p, |i, j| cols[j][i]);
        let names = (0..p).map(|j| format!("x{j}")).collect();
        (x, names)
    }

    #[test]
    fn intercept_only_recovers_mean() {
        let y = [1.0, 0.0, 0.0, 0.0];
        let (x, names) = design(&[vec![1.0; 4]]);
        let fit = fit_logit(&x, &y, &names).unwrap();
        assert!(fit.converged);
        for p in &fit.fitted {
            assert_abs_diff_eq!(*p, 0.25, epsilon = 1e-10);
        }
    }

    /// Brute-force grid-search MLE on one-predictor data, refined to 1e-8,
    /// kept independent of the IRLS path.
    fn grid_search_mle(x: &[f64], y: &[f64]) -> (f64, f64) {
        let ll = |b0: f64, b1: f64| -> f64 {
            x.iter()
                .zip(y)
                .map(|(&xi, &yi)| {
                    let eta = b0 + b1 * xi;
                    let p = 1.0 / (1.0 + (-eta).exp());
                    let p = p.clamp(1e-12, 1.0 - 1e-12);
                    yi * p.ln() + (1.0 - yi) * (1.0 - p).ln()
                })
                .sum()
        };
        let (mut c0, mut c1) = (0.0, 0.0);
        let mut half = 8.0;
        for _ in 0..40 {
            let mut best = (c0, c1, f64::NEG_INFINITY);
            let steps = 8i32;
            for i in -steps..=steps {
                for j in -steps..=steps {
                    let b0 = c0 + half * i as f64 / steps as f64;
                    let b1 = c1 + half * j as f64 / steps as f64;
                    let v = ll(b0, b1);
                    if v > best.2 {
                        best = (b0, b1, v);
                    }
                }
            }
            c0 = best.0;
            c1 = best.1;
            half *= 0.35;
        }
        (c0, c1)
    }

    #[test]
    fn irls_matches_grid_search_oracle() {
        let xv = vec![
            -1.2, -0.7, -0.3, 0.1, 0.4, 0.9, 1.3, 1.8, -0.5, 0.6, 1.1, -1.5,
        ];
        let y = vec![0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0];
        let (x, names) = design(&[vec![1.0; xv.len()], xv.clone()]);
        let fit = fit_logit(&x, &y, &names).unwrap();
        let (b0, b1) = grid_search_mle(&xv, &y);
        assert_abs_diff_eq!(fit.coefficients[0], b0, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.coefficients[1], b1, epsilon = 1e-6);
    }

    #[test]
    fn two_point_separable_data_flags_separation() {
        let (x, names) = design(&[vec![1.0, 1.0], vec![-1.0, 1.0]]);
        let fit = fit_logit(&x, &[0.0, 1.0], &names).unwrap();
        assert!(fit.separation_flagged);
        assert!(fit.fitted.iter().all(|p| (1e-12..=1.0 - 1e-12).contains(p)));
    }

    #[test]
    fn singular_design_names_columns() {
        let (x, names) = design(&[vec![1.0; 4], vec![2.0; 4]]);
        match fit_logit(&x, &[0.0, 1.0, 0.0, 1.0], &names) {
            Err(Error::SingularDesign(cols)) => assert_eq!(cols, vec!["x1".to_string()]),
            other => panic!("expected singular design, got {other:?}"),
        }
    }
}
