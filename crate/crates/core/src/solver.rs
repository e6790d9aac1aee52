//! Mirror-prox iteration for `min_xi max_p I(p, Q(xi))` with ergodic
//! averaging, adaptive steps and a duality-gap stopping rule.

use log::{debug, trace};
use serde::{Deserialize, Serialize};

use crate::channel::{evaluate, SetKind, UncertaintyModel, SET_TOL};
use crate::error::{Error, Result};
use crate::oracles::tilted_blahut_arimoto;
use crate::prox::{bregman, project, prox_joint, Geometry, SaddlePoint, DEFAULT_DELTA};

const GAMMA_MIN: f64 = 1e-8;
const GAMMA_MAX: f64 = 1e4;
const FIXED_POINT_TOL: f64 = 1e-12;
/// Inner steps tried before an adaptive step is shrunk and the outer step
/// restarted.
const ADAPTIVE_INNER_LIMIT: usize = 8;
const FIXED_INNER_LIMIT: usize = 1000;
const BA_TOL: f64 = 1e-8;
const LOWER_LEG_ITERS: usize = 1000;
const LOWER_LEG_STATIONARITY: f64 = 1e-9;
const ARMIJO_SLOPE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// target duality gap in nats
    pub epsilon: f64,
    pub max_iters: usize,
    pub gamma0: f64,
    pub gamma_growth: f64,
    pub delta: f64,
    /// constant step; disables adaptation
    pub fixed_gamma: Option<f64>,
    pub gap_check_every: usize,
    pub seed: u64,
    /// smallest admissible entry of `Q(xi)` over the set
    pub tau_floor: f64,
    /// keep every prox center `z^t` in the report
    pub record_iterates: bool,
    /// starting point; defaults to the set center and the uniform distribution
    pub initial: Option<SaddlePoint>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            max_iters: 100_000,
            gamma0: 1.0,
            gamma_growth: 1.5,
            delta: DEFAULT_DELTA,
            fixed_gamma: None,
            gap_check_every: 25,
            seed: 0,
            tau_floor: 1e-7,
            record_iterates: false,
            initial: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.gamma_growth > 1.0) {
            return bad(format!(
                "gamma_growth must exceed 1, got {}",
                self.gamma_growth
            ));
        }
        if !(self.gamma0 > 0.0 && self.gamma0.is_finite()) {
            return bad(format!("gamma0 must be positive, got {}", self.gamma0));
        }
        if let Some(g) = self.fixed_gamma {
            if !(g > 0.0 && g.is_finite()) {
                return bad(format!("fixed_gamma must be positive, got {g}"));
            }
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if self.gap_check_every == 0 {
            return bad("gap_check_every must be at least 1".into());
        }
        if !(self.tau_floor > 0.0) {
            return bad(format!(
                "tau_floor must be positive, got {}",
                self.tau_floor
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GapReached,
    MaxIters,
    FixedPoint,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::GapReached => "gap_reached",
            Self::MaxIters => "max_iters",
            Self::FixedPoint => "fixed_point",
        }
    }
}

/// Bounds of a candidate point: `upper = max_p phi(xi_bar, p)` and
/// `lower ~ min_xi phi(xi, p_bar)`.
#[derive(Clone, Debug, Serialize)]
pub struct GapEstimate {
    pub gap: f64,
    pub upper: f64,
    pub lower: f64,
    pub worst_xi: Vec<f64>,
    /// maximizer of the upper leg
    pub best_p: Vec<f64>,
    /// projected-gradient residual of the lower leg; the lower leg is only
    /// a local estimate when this is not small
    pub lower_leg_stationarity: f64,
}

/// Weights and step bound of the prox geometry.
#[derive(Clone, Debug, Serialize)]
pub struct StepConstants {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma_max: f64,
    pub tau: f64,
    /// `L_kl` with block 0 the minimizing variables and block 1 the input
    pub lipschitz: [[f64; 2]; 2],
    pub theta: [f64; 2],
    pub alpha: [f64; 2],
    pub combined: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverReport {
    /// ergodic average at the best gap check, or the fixed point
    pub ergodic: SaddlePoint,
    pub best_gap: f64,
    pub gap_trace: Vec<(usize, f64)>,
    pub gamma_trace: Vec<f64>,
    pub inner_iter_counts: Vec<usize>,
    pub termination: Termination,
    /// lower leg at the best gap check
    pub robust_capacity: f64,
    /// upper leg at the best gap check
    pub upper_bound: f64,
    pub worst_xi: Vec<f64>,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_star: Option<f64>,
    pub lower_leg_stationarity: f64,
    pub constants: StepConstants,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub iterates: Vec<SaddlePoint>,
}

/// Linear cost constraint folded into the saddle function.
#[derive(Clone, Copy, Debug)]
pub(crate) struct CostTerms<'a> {
    pub a: &'a [f64],
    pub b: f64,
    pub cap: f64,
}

impl CostTerms<'_> {
    fn slack(&self, p: &[f64]) -> f64 {
        self.b - self.a.iter().zip(p).map(|(a, p)| a * p).sum::<f64>()
    }
}

fn theta_xi(kind: SetKind, dim: usize, delta: f64) -> f64 {
    match kind {
        SetKind::InfBall => 2.0 * dim as f64,
        SetKind::TwoBall => 2.0,
        SetKind::BoxCapTwoBall => 1.0,
        SetKind::Simplex => ((dim as f64 + delta) / delta).ln(),
    }
}

pub(crate) fn constants_for(
    model: &UncertaintyModel,
    cost: Option<CostTerms<'_>>,
    delta: f64,
) -> Result<StepConstants> {
    let tau = model.tau();
    if !(tau > 0.0) {
        return Err(Error::InvalidModel(format!(
            "minimum entry over the set is {tau:e}; a positive floor is required"
        )));
    }
    let n = model.n_inputs();
    let geometry = Geometry::new(model.set().kind, 1.0, 1.0, delta)?;
    let (a1, a2) = geometry.moduli(model.dim());
    let mut theta1 = theta_xi(model.set().kind, model.dim(), delta);
    if let Some(c) = cost {
        theta1 += 0.5 * c.cap * c.cap;
    }
    let theta2 = ((n as f64 + delta) / delta).ln();

    let dirs = model.scaled_directions();
    let l11 = (0..n)
        .map(|r| {
            dirs.iter()
                .map(|d| d.row(r).iter().map(|v| v * v).sum::<f64>())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
        / tau;
    let log_factor = -tau.ln() + 1.0 / tau;
    let mut cross = dirs
        .iter()
        .map(|d| {
            let c = log_factor
                * (0..n)
                    .map(|r| d.row(r).iter().map(|v| v.abs()).sum::<f64>())
                    .fold(0.0, f64::max);
            c * c
        })
        .sum::<f64>();
    if let Some(c) = cost {
        let amax = c.a.iter().map(|v| v.abs()).fold(0.0, f64::max);
        cross += amax * amax;
    }
    let l22 = 1.0 / tau;
    let floor = 1e-12 * l22;
    let l12 = cross.sqrt().max(floor);
    let lip = [[l11.max(floor), l12], [l12, l22]];
    let theta = [theta1, theta2];
    let alpha = [a1, a2];
    let weight = |k: usize, l: usize| (theta[k] * theta[l] / (alpha[k] * alpha[l])).sqrt();
    let combined: f64 = (0..2)
        .flat_map(|k| (0..2).map(move |l| (k, l)))
        .map(|(k, l)| lip[k][l] * weight(k, l))
        .sum();
    let gamma_k =
        |k: usize| (0..2).map(|l| lip[k][l] * weight(k, l)).sum::<f64>() / (theta[k] * combined);
    Ok(StepConstants {
        gamma1: gamma_k(0),
        gamma2: gamma_k(1),
        gamma_max: 1.0 / (std::f64::consts::SQRT_2 * combined),
        tau,
        lipschitz: lip,
        theta,
        alpha,
        combined,
    })
}

/// Prox weights and the largest step that keeps the inner loop at two steps.
pub fn step_constants(model: &UncertaintyModel, delta: f64) -> Result<StepConstants> {
    constants_for(model, None, delta)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes the convex map `xi -> phi(xi, p)` over the set by projected
/// gradient with Armijo backtracking. Returns value, minimizer and the
/// final unit-step projected-gradient residual.
pub(crate) fn lower_leg(
    model: &UncertaintyModel,
    p: &[f64],
    start: &[f64],
) -> Result<(f64, Vec<f64>, f64)> {
    let kind = model.set().kind;
    let mut x = project(kind, start.to_vec());
    let mut ev = evaluate(model, &x, p)?;
    if model.is_certain() {
        return Ok((ev.value, x, 0.0));
    }
    let mut step = 1.0f64;
    let mut residual = f64::INFINITY;
    let along = |x: &[f64], g: &[f64], t: f64| -> Vec<f64> {
        project(kind, x.iter().zip(g).map(|(a, b)| a - t * b).collect())
    };
    for _ in 0..LOWER_LEG_ITERS {
        let unit = along(&x, &ev.grad_xi, 1.0);
        residual = unit
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if residual <= LOWER_LEG_STATIONARITY {
            break;
        }
        let mut t = step;
        let accepted = loop {
            let cand = along(&x, &ev.grad_xi, t);
            let moved: Vec<f64> = cand.iter().zip(&x).map(|(a, b)| a - b).collect();
            let next = evaluate(model, &cand, p)?;
            if next.value <= ev.value + ARMIJO_SLOPE * dot(&ev.grad_xi, &moved) {
                break Some((cand, next));
            }
            t *= 0.5;
            if t < 1e-20 {
                break None;
            }
        };
        match accepted {
            Some((cand, next)) => {
                x = cand;
                ev = next;
                step = (2.0 * t).min(1e8);
            }
            None => break,
        }
    }
    Ok((ev.value, x, residual))
}

pub(crate) struct Problem<'a> {
    pub model: &'a UncertaintyModel,
    pub cost: Option<CostTerms<'a>>,
}

impl Problem<'_> {
    /// `Phi(w) = (grad_xi phi, dphi/dlambda, -grad_p phi)`.
    fn operator(&self, w: &SaddlePoint, iteration: usize) -> Result<SaddlePoint> {
        let ev = evaluate(self.model, &w.xi, &w.p)?;
        let mut p: Vec<f64> = ev.grad_p.iter().map(|g| -g).collect();
        let lambda = match (self.cost, w.lambda) {
            (Some(c), Some(l)) => {
                for (v, a) in p.iter_mut().zip(c.a) {
                    *v += l * a;
                }
                Some(c.slack(&w.p))
            }
            _ => None,
        };
        let out = SaddlePoint {
            xi: ev.grad_xi,
            lambda,
            p,
        };
        if !out.is_finite() || !ev.value.is_finite() {
            return Err(Error::NonFinite {
                iteration,
                detail: format!("operator at {:?} is {:?}", w, out),
            });
        }
        Ok(out)
    }

    fn start(&self, cfg: &SolverConfig) -> Result<SaddlePoint> {
        let model = self.model;
        let z = match &cfg.initial {
            Some(z) => {
                let mut z = z.clone();
                if self.cost.is_some() && z.lambda.is_none() {
                    z.lambda = Some(0.0);
                }
                if self.cost.is_none() {
                    z.lambda = None;
                }
                z
            }
            None => {
                let n = model.n_inputs();
                let z = SaddlePoint::new(model.set().center(), vec![1.0 / n as f64; n]);
                match self.cost {
                    Some(_) => z.with_lambda(0.0),
                    None => z,
                }
            }
        };
        if z.xi.len() != model.dim() || z.p.len() != model.n_inputs() {
            return Err(Error::Dimension(
                "initial point does not match the model".into(),
            ));
        }
        if !model.set().contains(&z.xi, SET_TOL) {
            return Err(Error::OutsideSet(format!("initial xi {:?}", z.xi)));
        }
        if z.p.iter().any(|&v| !(v >= 0.0)) || (z.p.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidDistribution(
                "initial p is not in the simplex".into(),
            ));
        }
        if let (Some(c), Some(l)) = (self.cost, z.lambda) {
            if !(0.0..=c.cap).contains(&l) {
                return Err(Error::Config(format!(
                    "initial lambda {l} outside [0, {}]",
                    c.cap
                )));
            }
        }
        Ok(z)
    }

    pub fn estimate(&self, y: &SaddlePoint) -> Result<GapEstimate> {
        let q = self.model.assemble_raw(&y.xi);
        let penalty: Option<Vec<f64>> = match (self.cost, y.lambda) {
            (Some(c), Some(l)) => Some(c.a.iter().map(|a| l * a).collect()),
            _ => None,
        };
        let (_, mut upper, best_p, _) = tilted_blahut_arimoto(&q, penalty.as_deref(), BA_TOL)?;
        let (mut lower, worst_xi, stationarity) = lower_leg(self.model, &y.p, &y.xi)?;
        if let (Some(c), Some(l)) = (self.cost, y.lambda) {
            upper += l * c.b;
            lower += c.cap * c.slack(&y.p).min(0.0);
        }
        Ok(GapEstimate {
            gap: upper - lower,
            upper,
            lower,
            worst_xi,
            best_p,
            lower_leg_stationarity: stationarity,
        })
    }

    pub fn run(&self, cfg: &SolverConfig) -> Result<SolverReport> {
        cfg.validate()?;
        let model = self.model;
        let constants = constants_for(model, self.cost, cfg.delta)?;
        if constants.tau < cfg.tau_floor {
            return Err(Error::InvalidModel(format!(
                "minimum entry {:e} over the set is below the floor {:e}",
                constants.tau, cfg.tau_floor
            )));
        }
        let mut geometry = Geometry::new(
            model.set().kind,
            constants.gamma1,
            constants.gamma2,
            cfg.delta,
        )?;
        if let Some(c) = self.cost {
            geometry = geometry.with_lambda_cap(c.cap)?;
        }
        let mut z = self.start(cfg)?;
        let mut sum = z.zeros_like();
        let mut weight_sum = 0.0;
        let mut gamma = cfg.fixed_gamma.unwrap_or(cfg.gamma0);
        let inner_limit = if cfg.fixed_gamma.is_some() {
            FIXED_INNER_LIMIT
        } else {
            ADAPTIVE_INNER_LIMIT
        };

        let mut gap_trace = Vec::new();
        let mut gamma_trace = Vec::new();
        let mut inner_counts = Vec::new();
        let mut iterates = Vec::new();
        let mut best: Option<(SaddlePoint, GapEstimate)> = None;
        let mut termination = Termination::MaxIters;
        let mut iterations = 0;

        'outer: for t in 1..=cfg.max_iters {
            iterations = t;
            let op_z = self.operator(&z, t)?;
            let (w, next, count) = loop {
                let mut w_prev = z.clone();
                let mut op_prev = op_z.clone();
                let mut k = 0;
                let found = loop {
                    k += 1;
                    let step = op_prev.scaled(gamma);
                    let w_k = prox_joint(&z, &step, &geometry)?;
                    if k == 1 && w_k.distance(&z) <= FIXED_POINT_TOL {
                        termination = Termination::FixedPoint;
                        gamma_trace.push(gamma);
                        inner_counts.push(1);
                        break 'outer;
                    }
                    let ip = step.dot(&w_prev.sub(&w_k));
                    let v = bregman(&z, &w_k, &geometry);
                    let tol = 4.0 * f64::EPSILON * (ip.abs() + v);
                    if ip - v <= tol {
                        break Some((w_prev, w_k, k));
                    }
                    if k >= inner_limit {
                        break None;
                    }
                    op_prev = self.operator(&w_k, t)?;
                    w_prev = w_k;
                };
                match found {
                    Some(r) => break r,
                    None if cfg.fixed_gamma.is_none() && gamma > GAMMA_MIN => {
                        gamma = (gamma / cfg.gamma_growth).max(GAMMA_MIN);
                        trace!("iteration {t}: inner loop restarted with gamma {gamma:e}");
                    }
                    None => {
                        return Err(Error::NoConvergence {
                            what: "inner prox loop",
                            iterations: inner_limit,
                            detail: format!("outer iteration {t}, gamma {gamma:e}"),
                        })
                    }
                }
            };
            debug_assert!(model.set().contains(&next.xi, 1e-9));
            debug_assert!((next.p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            gamma_trace.push(gamma);
            inner_counts.push(count);
            sum.axpy(gamma, &w);
            weight_sum += gamma;
            z = next;
            if cfg.record_iterates {
                iterates.push(z.clone());
            }
            if cfg.fixed_gamma.is_none() {
                gamma = if count <= 2 {
                    gamma * cfg.gamma_growth
                } else {
                    gamma / cfg.gamma_growth
                }
                .clamp(GAMMA_MIN, GAMMA_MAX);
            }
            if t % cfg.gap_check_every == 0 || t == cfg.max_iters {
                let y = sum.scaled(1.0 / weight_sum);
                let est = self.estimate(&y)?;
                debug!(
                    "iteration {t}: gap {:.3e} [{:.6}, {:.6}] gamma {gamma:.3e}",
                    est.gap, est.lower, est.upper
                );
                gap_trace.push((t, est.gap.max(0.0)));
                let done = est.gap <= cfg.epsilon;
                if best.as_ref().is_none_or(|(_, b)| est.gap < b.gap) {
                    best = Some((y, est));
                }
                if done {
                    termination = Termination::GapReached;
                    break;
                }
            }
        }

        if termination == Termination::FixedPoint {
            let est = self.estimate(&z)?;
            gap_trace.push((iterations, est.gap.max(0.0)));
            best = Some((z, est));
        } else if best.is_none() {
            let y = sum.scaled(1.0 / weight_sum);
            let est = self.estimate(&y)?;
            gap_trace.push((iterations, est.gap.max(0.0)));
            best = Some((y, est));
        }
        let (point, est) = best.expect("at least one gap estimate");
        debug!(
            "finished after {iterations} iterations ({}), gap {:.3e}",
            termination.as_str(),
            est.gap
        );
        Ok(SolverReport {
            lambda_star: point.lambda,
            ergodic: point,
            best_gap: est.gap.max(0.0),
            gap_trace,
            gamma_trace,
            inner_iter_counts: inner_counts,
            termination,
            robust_capacity: est.lower.max(0.0),
            upper_bound: est.upper,
            worst_xi: est.worst_xi,
            iterations,
            lower_leg_stationarity: est.lower_leg_stationarity,
            constants,
            iterates,
        })
    }
}

/// Robust capacity `max_p min_xi I(p, Q(xi))` of the model.
pub fn solve(model: &UncertaintyModel, cfg: &SolverConfig) -> Result<SolverReport> {
    Problem { model, cost: None }.run(cfg)
}

/// Duality-gap estimate at `z` for the unconstrained problem.
pub fn gap_estimate(z: &SaddlePoint, model: &UncertaintyModel) -> Result<GapEstimate> {
    if z.xi.len() != model.dim() || z.p.len() != model.n_inputs() {
        return Err(Error::Dimension("point does not match the model".into()));
    }
    Problem { model, cost: None }.estimate(&SaddlePoint::new(z.xi.clone(), z.p.clone()))
}
