//! Damped Gauss-Newton (Levenberg-Marquardt) minimiser for small dense
//! least-squares problems.
//!
//! The damping term is Marquardt's diagonal scaling `λ·diag(JᵀJ)`, so the
//! iteration is invariant to per-parameter rescaling. Callers are expected to
//! normalise their problem so that the absolute gradient tolerance is
//! meaningful.

use nalgebra::{DMatrix, DVector};

/// A residual vector `r(p)` and its Jacobian `∂r/∂p`.
pub trait LeastSquaresProblem {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;

    /// Returns `false` when `params` lies outside the model's domain; the
    /// step is then rejected as if the cost were infinite.
    fn residuals(&self, params: &[f64], out: &mut [f64]) -> bool;

    /// Row `i`, column `j` holds `∂r_i/∂p_j`.
    fn jacobian(&self, params: &[f64], out: &mut DMatrix<f64>);
}

#[derive(Debug, Clone, Copy)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Relative parameter step tolerance.
    pub step_tol: f64,
    /// Infinity-norm tolerance on `Jᵀr`.
    pub gradient_tol: f64,
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            step_tol: 1e-10,
            gradient_tol: 1e-12,
            initial_damping: 1e-3,
            damping_up: 10.0,
            damping_down: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    SmallStep,
    SmallGradient,
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: Vec<f64>,
    /// Sum of squared residuals at `params`.
    pub ssr: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// `JᵀJ` evaluated at `params`.
    pub normal_matrix: DMatrix<f64>,
}

impl LmReport {
    /// Parameter covariance `s²·(JᵀJ)⁻¹` with `s² = SSR/(m − n)`. Falls back to
    /// the pseudo-inverse when `JᵀJ` is singular.
    pub fn covariance(&self, n_residuals: usize) -> DMatrix<f64> {
        let n = self.params.len();
        let dof = n_residuals.saturating_sub(n).max(1) as f64;
        let s2 = self.ssr / dof;
        let inv = self
            .normal_matrix
            .clone()
            .try_inverse()
            .or_else(|| self.normal_matrix.clone().pseudo_inverse(1e-300).ok())
            .unwrap_or_else(|| DMatrix::zeros(n, n));
        let mut cov = inv * s2;
        // symmetrise away round-off
        for i in 0..n {
            for j in 0..i {
                let m = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = m;
                cov[(j, i)] = m;
            }
        }
        cov
    }
}

#[derive(Debug, Clone)]
pub struct LmFailure {
    pub reason: String,
    pub best_params: Vec<f64>,
    pub iterations: usize,
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

pub fn minimize<P: LeastSquaresProblem>(
    problem: &P,
    initial: &[f64],
    cfg: &LmConfig,
) -> Result<LmReport, LmFailure> {
    let n = problem.n_params();
    let m = problem.n_residuals();
    assert_eq!(
        initial.len(),
        n,
        "initial parameter vector has wrong length"
    );

    let mut params = initial.to_vec();
    let mut resid = vec![0.0; m];
    if !problem.residuals(&params, &mut resid) || !resid.iter().all(|v| v.is_finite()) {
        return Err(LmFailure {
            reason: "initial parameters outside model domain".into(),
            best_params: params,
            iterations: 0,
        });
    }
    let mut cost = sum_sq(&resid);

    let mut jac = DMatrix::zeros(m, n);
    let mut trial = vec![0.0; n];
    let mut trial_resid = vec![0.0; m];
    let mut damping = cfg.initial_damping;

    let mut recompute = true;
    let mut normal = DMatrix::zeros(n, n);
    let mut gradient = DVector::zeros(n);

    for iteration in 0..cfg.max_iterations {
        if recompute {
            problem.jacobian(&params, &mut jac);
            normal = jac.transpose() * &jac;
            gradient = jac.transpose() * DVector::from_column_slice(&resid);
            recompute = false;
        }

        if gradient.amax() < cfg.gradient_tol {
            return Ok(LmReport {
                params,
                ssr: cost,
                iterations: iteration,
                termination: Termination::SmallGradient,
                normal_matrix: normal,
            });
        }

        let mut damped = normal.clone();
        for i in 0..n {
            let d = normal[(i, i)].max(f64::MIN_POSITIVE);
            damped[(i, i)] += damping * d;
        }
        let step = match damped.cholesky() {
            Some(ch) => ch.solve(&(-&gradient)),
            None => {
                damping *= cfg.damping_up;
                continue;
            }
        };

        let pnorm = params.iter().map(|v| v * v).sum::<f64>().sqrt();
        let snorm = step.norm();
        let small_step = snorm <= cfg.step_tol * (pnorm + cfg.step_tol);

        for i in 0..n {
            trial[i] = params[i] + step[i];
        }
        let ok = problem.residuals(&trial, &mut trial_resid)
            && trial_resid.iter().all(|v| v.is_finite());
        let trial_cost = if ok {
            sum_sq(&trial_resid)
        } else {
            f64::INFINITY
        };

        if trial_cost < cost {
            params.copy_from_slice(&trial);
            std::mem::swap(&mut resid, &mut trial_resid);
            cost = trial_cost;
            damping = (damping / cfg.damping_down).max(1e-15);
            recompute = true;
            if small_step {
                problem.jacobian(&params, &mut jac);
                return Ok(LmReport {
                    params,
                    ssr: cost,
                    iterations: iteration + 1,
                    termination: Termination::SmallStep,
                    normal_matrix: jac.transpose() * &jac,
                });
            }
        } else {
            if small_step {
                // even a vanishing step cannot lower the cost: we sit at the
                // floating-point minimum
                return Ok(LmReport {
                    params,
                    ssr: cost,
                    iterations: iteration + 1,
                    termination: Termination::SmallStep,
                    normal_matrix: normal,
                });
            }
            damping *= cfg.damping_up;
        }
    }

    Err(LmFailure {
        reason: format!("no convergence within {} iterations", cfg.max_iterations),
        best_params: params,
        iterations: cfg.max_iterations,
    })
}
