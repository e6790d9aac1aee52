//! Robust capacity under an average input cost constraint `a^T p <= b`.
//!
//! The constraint is dualized with a multiplier `lambda` in `[0, cap]`,
//! `cap = log N / (b - min_n a_n)`, and the extended saddle function
//! `I(p, Q(xi)) + lambda (b - a^T p)` is solved by the same prox method.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelMatrix, UncertaintyModel};
use crate::error::{Error, Result};
use crate::oracles::tilted_blahut_arimoto;
use crate::solver::{CostTerms, Problem, SolverConfig, SolverReport, Termination};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostConstraint {
    pub a: Vec<f64>,
    pub b: f64,
}

impl CostConstraint {
    /// Requires `min a < b`. A budget at or above `max a` makes the
    /// constraint slack; that case is accepted with a warning.
    pub fn new(a: Vec<f64>, b: f64) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::Cost("cost vector is empty".into()));
        }
        if a.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Cost("costs must be finite and nonnegative".into()));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::Cost(format!("budget must be positive, got {b}")));
        }
        let c = Self { a, b };
        if !(c.min_cost() < b) {
            return Err(Error::Cost(format!(
                "budget {b} does not exceed the smallest cost {}",
                c.min_cost()
            )));
        }
        if !(c.max_cost() > b) {
            warn!(
                "budget {b} is not below the largest cost {}; the constraint is slack",
                c.max_cost()
            );
        }
        Ok(c)
    }

    pub fn min_cost(&self) -> f64 {
        self.a.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_cost(&self) -> f64 {
        self.a.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn average(&self, p: &[f64]) -> f64 {
        self.a.iter().zip(p).map(|(a, p)| a * p).sum()
    }
}

/// `log N / (b - min a)`, raised by a relative `1e-9` so that the interval
/// `[0, cap]` contains the optimal multiplier.
pub fn lambda_cap(c: &CostConstraint, n_inputs: usize) -> Result<f64> {
    if c.a.len() != n_inputs {
        return Err(Error::Dimension(format!(
            "cost vector has {} entries, channel has {n_inputs} inputs",
            c.a.len()
        )));
    }
    if n_inputs < 2 {
        return Err(Error::Cost(
            "a cost constraint needs at least two inputs".into(),
        ));
    }
    let slack = c.b - c.min_cost();
    if !(slack > 0.0) {
        return Err(Error::Cost(format!(
            "budget {} does not exceed the smallest cost {}",
            c.b,
            c.min_cost()
        )));
    }
    Ok((n_inputs as f64).ln() / slack * (1.0 + 1e-9))
}

/// Robust capacity with the cost constraint; `lambda_star` in the report is
/// the multiplier of the returned point.
pub fn solve_with_cost(
    model: &UncertaintyModel,
    c: &CostConstraint,
    cfg: &SolverConfig,
) -> Result<SolverReport> {
    let cap = lambda_cap(c, model.n_inputs())?;
    let problem = Problem {
        model,
        cost: Some(CostTerms {
            a: &c.a,
            b: c.b,
            cap,
        }),
    };
    let report = problem.run(cfg)?;
    let lambda = report.lambda_star.unwrap_or(0.0);
    if report.termination != Termination::GapReached && lambda > cap - 1e-9 {
        return Err(Error::Inconsistent(format!(
            "multiplier {lambda} reached the cap {cap} without closing the gap ({:e})",
            report.best_gap
        )));
    }
    Ok(report)
}

/// `g(lambda) = max_p I(p, Q) + lambda (b - a^T p)`, by Blahut–Arimoto with
/// the update tilted by `exp(-lambda a_n)`.
pub fn g_of_lambda(lambda: f64, q: &ChannelMatrix, c: &CostConstraint, tol: f64) -> Result<f64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!(
            "multiplier must be nonnegative, got {lambda}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Config(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if c.a.len() != q.n_inputs() {
        return Err(Error::Dimension(format!(
            "cost vector has {} entries, channel has {} inputs",
            c.a.len(),
            q.n_inputs()
        )));
    }
    let penalty: Vec<f64> = c.a.iter().map(|a| lambda * a).collect();
    let (value, _, _, _) = tilted_blahut_arimoto(q.matrix(), Some(&penalty), tol)?;
    Ok(value + lambda * c.b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cap_formula() {
        let c = CostConstraint::new(vec![0.0, 2.0], 1.0).unwrap();
        assert!((lambda_cap(&c, 2).unwrap() - 2f64.ln()).abs() < 1e-9);
        let scaled = CostConstraint::new(vec![0.0, 6.0], 3.0).unwrap();
        let ratio = lambda_cap(&c, 2).unwrap() / lambda_cap(&scaled, 2).unwrap();
        assert!((ratio - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_infeasible_budget() {
        assert!(CostConstraint::new(vec![1.0, 2.0], 1.0).is_err());
        assert!(CostConstraint::new(vec![1.0, 2.0], 0.0).is_err());
        assert!(CostConstraint::new(vec![-1.0, 2.0], 1.0).is_err());
        // slack budget only warns
        assert!(CostConstraint::new(vec![0.0, 2.0], 5.0).is_ok());
    }

    #[test]
    fn g_at_zero_is_capacity() {
        let q = ChannelMatrix::bsc(0.3).unwrap();
        let c = CostConstraint::new(vec![0.0, 2.0], 1.0).unwrap();
        let g0 = g_of_lambda(0.0, &q, &c, 1e-10).unwrap();
        assert!((g0 - 0.082283).abs() < 1e-6);
    }

    #[test]
    fn g_on_useless_channel_is_linear() {
        let q = ChannelMatrix::constant_rows(2, &[0.4, 0.6]).unwrap();
        let c = CostConstraint::new(vec![0.0, 2.0], 1.0).unwrap();
        for &l in &[0.0, 0.5, 3.0] {
            assert!((g_of_lambda(l, &q, &c, 1e-10).unwrap() - l).abs() < 1e-9);
        }
    }
}
