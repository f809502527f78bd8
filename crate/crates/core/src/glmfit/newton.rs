//! Damped Newton ascent shared by the likelihood-based families.

use nalgebra::{DMatrix, DVector};

use super::{FitError, FitOptions};

/// A concave log-likelihood in β.
pub(crate) trait Objective {
    fn loglik(&self, beta: &DVector<f64>) -> f64;
    fn gradient(&self, beta: &DVector<f64>) -> DVector<f64>;
    /// Negative Hessian (observed information) at `beta`.
    fn information(&self, beta: &DVector<f64>) -> DMatrix<f64>;
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonOutcome {
    pub beta: DVector<f64>,
    pub loglik: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood after the start and after each accepted step.
    pub path: Vec<f64>,
}

const MAX_HALVINGS: usize = 60;
/// Relative size of log-likelihood rounding error.
const NOISE: f64 = 1e-13;

fn converged_at(g: &DVector<f64>, beta: &DVector<f64>, opts: &FitOptions) -> bool {
    g.norm() <= opts.grad_tol * (1.0 + beta.norm())
}

/// Newton iterations with step-halving. Accepted steps do not decrease the
/// log-likelihood beyond rounding error.
pub(crate) fn maximize<O: Objective>(
    obj: &O,
    start: DVector<f64>,
    opts: &FitOptions,
) -> Result<NewtonOutcome, FitError> {
    let mut beta = start;
    let mut ll = obj.loglik(&beta);
    if !ll.is_finite() {
        return Err(FitError::Boundary("log-likelihood is not finite at the start".into()));
    }
    let mut path = vec![ll];
    let mut rel_change = f64::INFINITY;
    let mut g = obj.gradient(&beta);
    for iter in 0..opts.max_iter {
        if converged_at(&g, &beta, opts) && (rel_change < opts.rel_tol || g.norm() == 0.0 || iter == 0) {
            return Ok(NewtonOutcome {
                gradient_norm: g.norm(),
                beta,
                loglik: ll,
                iterations: iter,
                converged: true,
                path,
            });
        }
        let info = obj.information(&beta);
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            None => match info.lu().solve(&g) {
                Some(s) => s,
                None => return Err(FitError::Boundary("information matrix is singular".into())),
            },
        };
        // Inside the quadratic basin the predicted gain drops below the
        // rounding noise of the summed log-likelihood, so the line search can
        // no longer rank candidates; take the full step.
        let predicted = 0.5 * g.dot(&step);
        if predicted <= NOISE * (1.0 + ll.abs()) {
            beta += &step;
            let new_ll = obj.loglik(&beta);
            rel_change = (new_ll - ll).abs() / (ll.abs() + 1.0);
            ll = new_ll;
            path.push(ll);
            g = obj.gradient(&beta);
            continue;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let cand = &beta + &step * t;
            let cand_ll = obj.loglik(&cand);
            if cand_ll.is_finite() && cand_ll >= ll {
                rel_change = (cand_ll - ll).abs() / (ll.abs() + 1.0);
                beta = cand;
                ll = cand_ll;
                path.push(ll);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        g = obj.gradient(&beta);
        if !accepted {
            // no ascent direction left within floating point: stationary or stuck
            let converged = converged_at(&g, &beta, opts);
            return Ok(NewtonOutcome {
                gradient_norm: g.norm(),
                beta,
                loglik: ll,
                iterations: iter + 1,
                converged,
                path,
            });
        }
    }
    let converged = converged_at(&g, &beta, opts) && rel_change < opts.rel_tol;
    Ok(NewtonOutcome {
        gradient_norm: g.norm(),
        beta,
        loglik: ll,
        iterations: opts.max_iter,
        converged,
        path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// −(β − c)ᵀ A (β − c) / 2 with a fixed positive definite A.
    struct Quadratic {
        a: DMatrix<f64>,
        c: DVector<f64>,
    }

    impl Objective for Quadratic {
        fn loglik(&self, beta: &DVector<f64>) -> f64 {
            let d = beta - &self.c;
            -0.5 * (d.transpose() * &self.a * &d)[0]
        }
        fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
            -(&self.a * (beta - &self.c))
        }
        fn information(&self, _: &DVector<f64>) -> DMatrix<f64> {
            self.a.clone()
        }
    }

    #[test]
    fn quadratic_in_one_step() {
        let q = Quadratic {
            a: DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            c: DVector::from_vec(vec![1.0, -3.0]),
        };
        let out = maximize(&q, DVector::zeros(2), &FitOptions::default()).unwrap();
        assert!(out.converged);
        assert!((out.beta - q.c).norm() < 1e-12);
        assert!(out.iterations <= 2);
    }
}
