//! Regression table output.

use std::io::{Read, Write};

use super::{Family, FitError, FitResult};

/// Writes the coefficient table followed by a blank line and a `key,value`
/// footer block.
pub fn write_fit_csv<W: Write>(fit: &FitResult, mut w: W) -> Result<(), FitError> {
    let stat = fit.family.stat_name();
    {
        let mut out = csv::Writer::from_writer(&mut w);
        out.write_record([
            "variable".to_string(),
            "coef".into(),
            "std err".into(),
            stat.into(),
            format!("P>|{stat}|"),
            "ci_low".into(),
            "ci_high".into(),
        ])?;
        for t in &fit.terms {
            out.write_record([
                t.name.clone(),
                fmt(t.coef),
                fmt(t.std_err),
                fmt(t.stat),
                fmt(t.p_value),
                fmt(t.ci_low),
                fmt(t.ci_high),
            ])?;
        }
        out.flush()?;
    }
    writeln!(w)?;
    let mut out = csv::Writer::from_writer(&mut w);
    for (k, v) in footer(fit) {
        out.write_record([k, &v])?;
    }
    out.flush()?;
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

fn footer(fit: &FitResult) -> Vec<(&'static str, String)> {
    let mut rows = vec![
        ("family", fit.family.name().to_string()),
        ("outcome", fit.outcome.clone()),
    ];
    if let Family::NegativeBinomial { alpha } = fit.family {
        rows.push(("dispersion", alpha.to_string()));
    }
    rows.extend([
        ("n_obs", fit.n_obs.to_string()),
        ("df_model", fit.df_model.to_string()),
        ("df_residuals", fit.df_residuals.to_string()),
        ("log_likelihood", fmt(fit.log_likelihood)),
        ("deviance", fmt(fit.deviance)),
        ("pearson_chi2", fmt(fit.pearson_chi2)),
    ]);
    if let Some(v) = fit.null_log_likelihood {
        rows.push(("null_log_likelihood", fmt(v)));
    }
    if let Some(v) = fit.pseudo_r2 {
        rows.push(("pseudo_r2", fmt(v)));
    }
    if let Some(v) = fit.r_squared {
        rows.push(("r_squared", fmt(v)));
    }
    if let Some(v) = fit.adj_r_squared {
        rows.push(("adj_r_squared", fmt(v)));
    }
    if let Some(v) = fit.f_statistic {
        rows.push(("f_statistic", fmt(v)));
    }
    if let Some(v) = fit.f_p_value {
        rows.push(("f_p_value", fmt(v)));
    }
    let cov = match fit.family {
        Family::Ols => "residual variance",
        _ => match fit.covariance {
            super::Covariance::Observed => "observed information",
            super::Covariance::Expected => "expected information",
        },
    };
    rows.extend([
        ("covariance", cov.to_string()),
        ("converged", fit.converged.to_string()),
        ("iterations", fit.iterations.to_string()),
    ]);
    rows
}

pub fn write_fit_json<W: Write>(fit: &FitResult, w: W) -> Result<(), FitError> {
    serde_json::to_writer_pretty(w, fit)?;
    Ok(())
}

pub fn read_fit_json<R: Read>(r: R) -> Result<FitResult, FitError> {
    Ok(serde_json::from_reader(r)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glmfit::{fit_design, Design, FitOptions};
    use nalgebra::{DMatrix, DVector};

    fn sample_fit() -> FitResult {
        let x = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let d = Design::new(
            vec!["Intercept".into(), "Year_bin[T.(1974, 1979]]".into()],
            x,
            DVector::from_vec(vec![1.0, 0.0, 3.0, 2.0, 5.0, 4.0]),
        );
        fit_design(&d, Family::NegativeBinomial { alpha: 1.0 }, &FitOptions::default()).unwrap()
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_fit_csv(&sample_fit(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "variable,coef,std err,z,P>|z|,ci_low,ci_high"
        );
        assert!(lines.next().unwrap().starts_with("Intercept,"));
        assert!(lines.next().unwrap().starts_with("\"Year_bin[T.(1974, 1979]]\","));
        assert_eq!(lines.next().unwrap(), "");
        let footer: Vec<&str> = lines.collect();
        assert!(footer.contains(&"dispersion,1"));
        assert!(footer.contains(&"n_obs,6"));
        assert!(footer.iter().any(|l| l.starts_with("pearson_chi2,")));
    }

    #[test]
    fn json_round_trip() {
        let fit = sample_fit();
        let mut buf = Vec::new();
        write_fit_json(&fit, &mut buf).unwrap();
        let back = read_fit_json(buf.as_slice()).unwrap();
        assert_eq!(back, fit);
    }
}
