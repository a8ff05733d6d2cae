//! Maximum pseudolikelihood estimation.
//!
//! The log pseudolikelihood is the log-likelihood of a logistic regression
//! of each dyad's state on its change statistics. It is maximized by
//! Newton-Raphson with step halving.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Dyad, Graph};
use crate::model::{BoundTerms, ModelSpec};

pub const MAX_ITERATIONS: usize = 50;
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
/// ‖θ‖∞ beyond which a still-increasing objective is declared separated.
pub const SEPARATION_BOUND: f64 = 20.0;

/// Logistic design: one row per dyad.
#[derive(Debug, Clone)]
pub struct Design {
    pub response: DVector<f64>,
    pub predictors: DMatrix<f64>,
}

impl Design {
    pub fn rows(&self) -> usize {
        self.response.len()
    }

    /// (response, change statistics) for row `r`.
    pub fn row(&self, r: usize) -> (f64, Vec<f64>) {
        (
            self.response[r],
            self.predictors.row(r).iter().copied().collect(),
        )
    }

    /// log f_PL(θ) = Σ [y θᵀΔ − log(1 + exp θᵀΔ)].
    pub fn log_pseudolikelihood(&self, theta: &[f64]) -> f64 {
        let eta = &self.predictors * DVector::from_column_slice(theta);
        eta.iter()
            .zip(self.response.iter())
            .map(|(&e, &y)| y * e - log1p_exp(e))
            .sum()
    }

    pub fn gradient(&self, theta: &[f64]) -> DVector<f64> {
        let eta = &self.predictors * DVector::from_column_slice(theta);
        let resid = DVector::from_iterator(
            eta.len(),
            eta.iter().zip(self.response.iter()).map(|(&e, &y)| y - logistic(e)),
        );
        self.predictors.tr_mul(&resid)
    }

    /// Negative Hessian XᵀWX with W = diag(p(1−p)).
    pub fn information(&self, theta: &[f64]) -> DMatrix<f64> {
        let eta = &self.predictors * DVector::from_column_slice(theta);
        let mut weighted = self.predictors.clone();
        for (r, &e) in eta.iter().enumerate() {
            let p = logistic(e);
            let w = p * (1.0 - p);
            weighted.row_mut(r).scale_mut(w);
        }
        self.predictors.tr_mul(&weighted)
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Rows (y_ij, Δ_ij g(y)) for every dyad of the observed graph.
pub fn build_design(g: &Graph, spec: &ModelSpec) -> Result<Design> {
    let terms = BoundTerms::bind(spec.terms(), g)?;
    let n = g.node_count();
    let p = spec.dim();
    let rows = g.dyad_count();
    let mut response = DVector::zeros(rows);
    let mut predictors = DMatrix::zeros(rows, p);
    let mut scratch = vec![0.0; p];
    let mut r = 0;
    for i in 0..n {
        for j in i + 1..n {
            terms.change(g, Dyad::new(i, j), &mut scratch);
            response[r] = g.has_edge(i, j) as u8 as f64;
            for (c, v) in scratch.iter().enumerate() {
                predictors[(r, c)] = *v;
            }
            r += 1;
        }
    }
    Ok(Design {
        response,
        predictors,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MpleResult {
    pub theta_hat: Vec<f64>,
    /// Inverse of the logistic information matrix at θ̂.
    pub neg_hessian_inverse: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
}

impl MpleResult {
    pub fn covariance(&self) -> DMatrix<f64> {
        let p = self.theta_hat.len();
        DMatrix::from_fn(p, p, |i, j| self.neg_hessian_inverse[i][j])
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.theta_hat.len())
            .map(|k| self.neg_hessian_inverse[k][k].sqrt())
            .collect()
    }
}

pub fn fit_mple(g: &Graph, spec: &ModelSpec) -> Result<MpleResult> {
    fit_design(&build_design(g, spec)?)
}

/// Newton-Raphson on a prepared design.
pub fn fit_design(design: &Design) -> Result<MpleResult> {
    let p = design.predictors.ncols();
    let mut theta = vec![0.0; p];
    let mut ll = design.log_pseudolikelihood(&theta);
    let mut last_grad_norm = f64::INFINITY;
    for iter in 1..=MAX_ITERATIONS {
        let grad = design.gradient(&theta);
        let info = design.information(&theta);
        let chol = info.clone().cholesky().ok_or_else(|| {
            Error::NotPositiveDefinite(
                " (pseudolikelihood information; a statistic may be constant over all dyads)"
                    .into(),
            )
        })?;
        let step = chol.solve(&grad);
        let grad_norm = grad.amax();
        last_grad_norm = grad_norm;
        // a converged Newton iterate also takes a negligible step; boundary
        // solutions keep stepping by O(1)
        if grad_norm < GRADIENT_TOLERANCE && step.amax() < 1e-6 {
            // the final Newton step is far below tolerance but still squares
            // the error, so take it
            let theta_hat = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
            return Ok(MpleResult {
                theta_hat,
                neg_hessian_inverse: to_rows(&chol.inverse()),
                converged: true,
                iterations: iter - 1,
            });
        }
        let mut scale = 1.0;
        let mut candidate;
        let mut cand_ll;
        let mut halvings = 0;
        loop {
            candidate = theta
                .iter()
                .zip(step.iter())
                .map(|(t, s)| t + scale * s)
                .collect::<Vec<_>>();
            cand_ll = design.log_pseudolikelihood(&candidate);
            if cand_ll >= ll - 1e-12 * ll.abs().max(1.0) || halvings >= 30 {
                break;
            }
            scale *= 0.5;
            halvings += 1;
        }
        let increasing = cand_ll > ll;
        theta = candidate;
        ll = cand_ll;
        if increasing && theta.iter().any(|t| t.abs() > SEPARATION_BOUND) {
            return Err(Error::MpleSeparation);
        }
    }
    Err(Error::MpleNonConvergence {
        iterations: MAX_ITERATIONS,
        grad_norm: last_grad_norm,
    })
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                // symmetrize away rounding
                .map(|j| 0.5 * (m[(i, j)] + m[(j, i)]))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete(n: usize) -> Graph {
        let mut e = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                e.push(Dyad::new(i, j));
            }
        }
        Graph::from_edge_list(n, false, &e, None).unwrap()
    }

    #[test]
    fn design_rows_for_empty_and_triangle() {
        let d = build_design(&Graph::empty(3, false), &ModelSpec::parse("edges").unwrap()).unwrap();
        assert_eq!(d.rows(), 3);
        for r in 0..3 {
            assert_eq!(d.row(r), (0.0, vec![1.0]));
        }
        let d = build_design(&complete(3), &ModelSpec::parse("edges, triangle").unwrap()).unwrap();
        for r in 0..3 {
            assert_eq!(d.row(r), (1.0, vec![1.0, 1.0]));
        }
    }

    #[test]
    fn edges_only_is_logit_density() {
        let e = [Dyad::new(0, 1), Dyad::new(2, 3), Dyad::new(1, 4)];
        let g = Graph::from_edge_list(6, false, &e, None).unwrap();
        let fit = fit_mple(&g, &ModelSpec::parse("edges").unwrap()).unwrap();
        let rho = 3.0 / 15.0;
        assert!((fit.theta_hat[0] - (rho / (1.0 - rho) as f64).ln()).abs() < 1e-10);
        assert!(fit.converged);
        // information = D ρ(1−ρ)
        assert!((fit.neg_hessian_inverse[0][0] - 1.0 / (15.0 * rho * (1.0 - rho))).abs() < 1e-10);
    }

    #[test]
    fn complete_graph_is_separated() {
        let err = fit_mple(&complete(5), &ModelSpec::parse("edges").unwrap()).unwrap_err();
        assert!(matches!(err, Error::MpleSeparation));
        let err = fit_mple(&Graph::empty(5, false), &ModelSpec::parse("edges").unwrap()).unwrap_err();
        assert!(matches!(err, Error::MpleSeparation));
    }
}
