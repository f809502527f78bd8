//! Ordinary least squares via QR.

use std::f64::consts::PI;

use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use super::{Covariance, Design, Family, FitError, FitResult, ModelSpec, Term};
use crate::features::FeatureTable;

pub fn fit_ols(table: &FeatureTable, spec: &ModelSpec) -> Result<FitResult, FitError> {
    match spec.family {
        Family::Ols => fit_design(&Design::from_table(table, &spec.covariates)?),
        other => Err(FitError::FamilyMismatch {
            family: "ols",
            requested: other.name(),
        }),
    }
}

pub(crate) fn fit_design(design: &Design) -> Result<FitResult, FitError> {
    design.check_rank()?;
    let (n, k) = design.x.shape();
    let qr = design.x.clone().qr();
    let (q, r) = (qr.q(), qr.r());
    let qty = q.tr_mul(&design.y);
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| FitError::Boundary("triangular factor is singular".into()))?;
    let resid = &design.y - &design.x * &beta;
    let rss = resid.norm_squared();
    let df_resid = n - k;
    let sigma2 = rss / df_resid as f64;

    // (XᵀX)⁻¹ = R⁻¹ R⁻ᵀ
    let r_inv = r
        .solve_upper_triangular(&nalgebra::DMatrix::identity(k, k))
        .ok_or_else(|| FitError::Boundary("triangular factor is singular".into()))?;
    let cov = &r_inv * r_inv.transpose() * sigma2;

    let t_dist = StudentsT::new(0.0, 1.0, df_resid as f64).expect("df_resid > 0");
    let t_crit = t_dist.inverse_cdf(0.975);
    let terms = design
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let coef = beta[j];
            let std_err = cov[(j, j)].max(0.0).sqrt();
            let stat = coef / std_err;
            Term {
                name: name.clone(),
                coef,
                std_err,
                stat,
                p_value: two_sided_t(&t_dist, stat),
                ci_low: coef - t_crit * std_err,
                ci_high: coef + t_crit * std_err,
            }
        })
        .collect();

    let intercept = design.intercept_index();
    let tss = match intercept {
        Some(_) => {
            let m = design.y.mean();
            design.y.map(|v| v - m).norm_squared()
        }
        None => design.y.norm_squared(),
    };
    let df_model = k - usize::from(intercept.is_some());
    let r2 = 1.0 - rss / tss;
    let adj = 1.0 - (1.0 - r2) * (n - usize::from(intercept.is_some())) as f64 / df_resid as f64;
    let (f, f_p) = if df_model > 0 {
        let f = ((tss - rss) / df_model as f64) / sigma2;
        let p = if f.is_finite() {
            FisherSnedecor::new(df_model as f64, df_resid as f64)
                .map(|d| d.sf(f))
                .ok()
        } else {
            Some(0.0)
        };
        (Some(f), p)
    } else {
        (None, None)
    };
    let ll = -0.5 * n as f64 * ((2.0 * PI).ln() + (rss / n as f64).ln() + 1.0);
    let null_ll = intercept.map(|_| -0.5 * n as f64 * ((2.0 * PI).ln() + (tss / n as f64).ln() + 1.0));

    Ok(FitResult {
        family: Family::Ols,
        outcome: design.outcome.clone(),
        terms,
        n_obs: n,
        df_model,
        df_residuals: df_resid,
        log_likelihood: ll,
        null_log_likelihood: null_ll,
        deviance: rss,
        pearson_chi2: rss,
        converged: true,
        iterations: 0,
        gradient_norm: design.x.tr_mul(&resid).norm(),
        covariance: Covariance::Observed,
        pseudo_r2: None,
        r_squared: Some(r2),
        adj_r_squared: Some(adj),
        f_statistic: f,
        f_p_value: f_p,
    })
}

/// An exact fit has zero standard errors; its statistics are infinite and
/// the p-value is 0.
fn two_sided_t(t: &StudentsT, stat: f64) -> f64 {
    if stat.is_finite() {
        2.0 * t.sf(stat.abs())
    } else if stat.is_nan() {
        f64::NAN
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(xs: &[f64], ys: &[f64]) -> Design {
        let x = DMatrix::from_fn(xs.len(), 2, |i, j| if j == 0 { 1.0 } else { xs[i] });
        Design::new(
            vec!["Intercept".into(), "x".into()],
            x,
            DVector::from_column_slice(ys),
        )
    }

    #[test]
    fn exact_fit() {
        let fit = fit_design(&line(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 6.0, 8.0])).unwrap();
        assert!((fit.terms[1].coef - 2.0).abs() < 1e-12);
        assert!(fit.terms[0].coef.abs() < 1e-12);
        assert!((fit.r_squared.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_outcome_gives_zero_slope() {
        // y symmetric around the centre of x
        let fit = fit_design(&line(&[-2.0, -1.0, 0.0, 1.0, 2.0], &[3.0, 1.0, 0.0, 1.0, 3.0])).unwrap();
        assert!(fit.terms[1].coef.abs() < 1e-10);
    }

    fn residuals(design: &Design, fit: &FitResult) -> DVector<f64> {
        let beta = DVector::from_vec(fit.coefficients());
        &design.y - &design.x * beta
    }

    /// Normal equations solved by Gaussian elimination with partial pivoting.
    fn normal_equations(x: &DMatrix<f64>, y: &DVector<f64>) -> Vec<f64> {
        let k = x.ncols();
        let mut a = vec![vec![0.0; k + 1]; k];
        for i in 0..k {
            for j in 0..k {
                a[i][j] = (0..x.nrows()).map(|r| x[(r, i)] * x[(r, j)]).sum();
            }
            a[i][k] = (0..x.nrows()).map(|r| x[(r, i)] * y[r]).sum();
        }
        for c in 0..k {
            let piv = (c..k).max_by(|&p, &q| a[p][c].abs().total_cmp(&a[q][c].abs())).unwrap();
            a.swap(c, piv);
            for r in c + 1..k {
                let f = a[r][c] / a[c][c];
                for j in c..=k {
                    a[r][j] -= f * a[c][j];
                }
            }
        }
        let mut b = vec![0.0; k];
        for i in (0..k).rev() {
            b[i] = (a[i][k] - (i + 1..k).map(|j| a[i][j] * b[j]).sum::<f64>()) / a[i][i];
        }
        b
    }

    #[test]
    fn matches_normal_equations_and_residuals_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let (n, k) = (30, 4);
            let x = DMatrix::from_fn(n, k, |_, j| if j == 0 { 1.0 } else { rng.random::<f64>() * 4.0 - 2.0 });
            let y = DVector::from_fn(n, |_, _| rng.random::<f64>() * 10.0);
            let names = (0..k).map(|j| format!("x{j}")).collect();
            let d = Design::new(names, x.clone(), y.clone());
            let fit = fit_design(&d).unwrap();
            let oracle = normal_equations(&x, &y);
            for (t, b) in fit.terms.iter().zip(&oracle) {
                assert!((t.coef - b).abs() < 1e-8);
            }
            let r = residuals(&d, &fit);
            for j in 0..k {
                assert!(x.column(j).dot(&r).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn inference_summary_is_consistent() {
        let d = line(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[1.1, 1.9, 3.2, 3.8, 5.3, 5.9]);
        let fit = fit_design(&d).unwrap();
        let slope = &fit.terms[1];
        // one regressor: F equals t²
        assert!((fit.f_statistic.unwrap() - slope.stat * slope.stat).abs() < 1e-8);
        assert!((fit.f_p_value.unwrap() - slope.p_value).abs() < 1e-10);
        assert!(slope.ci_low < slope.coef && slope.coef < slope.ci_high);
        assert_eq!(fit.df_residuals, 4);
    }

    #[test]
    fn collinear_design_rejected() {
        let x = DMatrix::from_fn(5, 3, |i, j| match j {
            0 => 1.0,
            1 => i as f64,
            _ => 2.0 * i as f64,
        });
        let d = Design::new(
            vec!["Intercept".into(), "a".into(), "b".into()],
            x,
            DVector::from_vec(vec![1.0, 2.0, 3.0, 5.0, 4.0]),
        );
        assert!(matches!(fit_design(&d), Err(FitError::RankDeficient { .. })));
    }
}
