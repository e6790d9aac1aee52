//! Distance-generating functions and proximal operators over the perturbation
//! set, the multiplier interval `[0, cap]` and the input simplex.
//!
//! The prox of a linear term `d` anchored at `z` is
//! `argmin_w omega(w) + <w, d - omega'(z)>`, with
//! `omega = gamma1 * omega1(xi[, lambda]) + gamma2 * omega2(p)`.
//! `omega2` is the shifted entropy `sum (p_n + delta/N) log(p_n + delta/N)`;
//! `omega1` is `|xi|^2 / 2` for the balls and the box, and the shifted entropy
//! with shift `delta/S` for the simplex.

use serde::{Deserialize, Serialize};

use crate::channel::SetKind;
use crate::error::{Error, Result};

/// Default entropy shift.
pub const DEFAULT_DELTA: f64 = 1e-3;

const MU_TOL: f64 = 1e-12;
const MU_MAX_ITERS: usize = 200;

/// A point of the saddle domain: perturbation `xi`, optional cost multiplier
/// `lambda` and input distribution `p`.
///
/// The same layout carries operator values and linear terms fed to the prox.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaddlePoint {
    pub xi: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda: Option<f64>,
    pub p: Vec<f64>,
}

impl SaddlePoint {
    pub fn new(xi: Vec<f64>, p: Vec<f64>) -> Self {
        Self {
            xi,
            lambda: None,
            p,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            xi: vec![0.0; self.xi.len()],
            lambda: self.lambda.map(|_| 0.0),
            p: vec![0.0; self.p.len()],
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        let xi: f64 = self.xi.iter().zip(&other.xi).map(|(a, b)| a * b).sum();
        let p: f64 = self.p.iter().zip(&other.p).map(|(a, b)| a * b).sum();
        let l = match (self.lambda, other.lambda) {
            (Some(a), Some(b)) => a * b,
            _ => 0.0,
        };
        xi + l + p
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Self) {
        for (s, v) in self.xi.iter_mut().zip(&x.xi) {
            *s += a * v;
        }
        for (s, v) in self.p.iter_mut().zip(&x.p) {
            *s += a * v;
        }
        if let (Some(s), Some(v)) = (self.lambda.as_mut(), x.lambda) {
            *s += a * v;
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.zeros_like();
        out.axpy(a, self);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.sub(other).norm()
    }

    /// All coordinates stacked as `(xi, lambda?, p)`.
    pub fn stacked(&self) -> Vec<f64> {
        let mut v = self.xi.clone();
        v.extend(self.lambda);
        v.extend_from_slice(&self.p);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.stacked().iter().all(|v| v.is_finite())
    }
}

/// Regularizer of the perturbation block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum XiRegularizer {
    Euclidean,
    ShiftedEntropy,
}

/// Weighted distance-generating function over the saddle domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geometry {
    pub set: SetKind,
    pub gamma1: f64,
    pub gamma2: f64,
    pub delta: f64,
    /// Upper end of the multiplier interval, when the cost block is present.
    pub lambda_cap: Option<f64>,
}

impl Geometry {
    pub fn new(set: SetKind, gamma1: f64, gamma2: f64, delta: f64) -> Result<Self> {
        if !(gamma1 > 0.0 && gamma1.is_finite()) || !(gamma2 > 0.0 && gamma2.is_finite()) {
            return Err(Error::Config(format!(
                "prox weights must be positive, got {gamma1}, {gamma2}"
            )));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Config(format!(
                "entropy shift must be positive, got {delta}"
            )));
        }
        Ok(Self {
            set,
            gamma1,
            gamma2,
            delta,
            lambda_cap: None,
        })
    }

    pub fn with_lambda_cap(mut self, cap: f64) -> Result<Self> {
        if !(cap > 0.0 && cap.is_finite()) {
            return Err(Error::Config(format!(
                "multiplier cap must be positive, got {cap}"
            )));
        }
        self.lambda_cap = Some(cap);
        Ok(self)
    }

    pub fn xi_regularizer(&self) -> XiRegularizer {
        match self.set {
            SetKind::Simplex => XiRegularizer::ShiftedEntropy,
            _ => XiRegularizer::Euclidean,
        }
    }

    /// Strong convexity moduli `(alpha1, alpha2)` of `omega1` in the 2-norm and
    /// `omega2` in the 1-norm.
    pub fn moduli(&self, dim_xi: usize) -> (f64, f64) {
        let a1 = match self.xi_regularizer() {
            XiRegularizer::Euclidean => 1.0,
            XiRegularizer::ShiftedEntropy => 1.0 / (1.0 + self.delta / dim_xi as f64),
        };
        (a1, 1.0 / (1.0 + self.delta))
    }
}

fn entropy_value(x: &[f64], shift: f64) -> f64 {
    x.iter().map(|&v| (v + shift) * (v + shift).ln()).sum()
}

fn entropy_grad(x: &[f64], shift: f64) -> Vec<f64> {
    x.iter().map(|&v| 1.0 + (v + shift).ln()).collect()
}

fn entropy_bregman(anchor: &[f64], w: &[f64], shift: f64) -> f64 {
    w.iter()
        .zip(anchor)
        .map(|(&a, &b)| {
            let (u, v) = (a + shift, b + shift);
            u * (u / v).ln() - (a - b)
        })
        .sum()
}

fn half_sq_dist(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

/// `omega(z)` and `omega'(z)` stacked by block.
pub fn omega_value_and_grad(z: &SaddlePoint, g: &Geometry) -> (f64, SaddlePoint) {
    let (v1, g1) = match g.xi_regularizer() {
        XiRegularizer::Euclidean => (0.5 * z.xi.iter().map(|v| v * v).sum::<f64>(), z.xi.clone()),
        XiRegularizer::ShiftedEntropy => {
            let shift = g.delta / z.xi.len() as f64;
            (entropy_value(&z.xi, shift), entropy_grad(&z.xi, shift))
        }
    };
    let lam = z.lambda.unwrap_or(0.0);
    let shift_p = g.delta / z.p.len() as f64;
    let value = g.gamma1 * (v1 + 0.5 * lam * lam) + g.gamma2 * entropy_value(&z.p, shift_p);
    let grad = SaddlePoint {
        xi: g1.into_iter().map(|v| g.gamma1 * v).collect(),
        lambda: z.lambda.map(|l| g.gamma1 * l),
        p: entropy_grad(&z.p, shift_p)
            .into_iter()
            .map(|v| g.gamma2 * v)
            .collect(),
    };
    (value, grad)
}

/// Bregman divergence `omega(w) - omega(z) - <omega'(z), w - z>`, summed
/// termwise so that it stays nonnegative in floating point.
pub fn bregman(z: &SaddlePoint, w: &SaddlePoint, g: &Geometry) -> f64 {
    let d1 = match g.xi_regularizer() {
        XiRegularizer::Euclidean => half_sq_dist(&w.xi, &z.xi),
        XiRegularizer::ShiftedEntropy => entropy_bregman(&z.xi, &w.xi, g.delta / z.xi.len() as f64),
    };
    let dl = match (z.lambda, w.lambda) {
        (Some(a), Some(b)) => 0.5 * (a - b) * (a - b),
        _ => 0.0,
    };
    let d2 = entropy_bregman(&z.p, &w.p, g.delta / z.p.len() as f64);
    g.gamma1 * (d1 + dl) + g.gamma2 * d2
}

/// Entropic prox on the simplex with shift `shift` per coordinate:
/// `x_n = max(0, (a_n + shift) exp(-d_n / weight - mu) - shift)` with `mu`
/// chosen so that `sum x = 1`.
fn entropy_prox(target: &[f64], anchor: &[f64], weight: f64, shift: f64) -> Vec<f64> {
    let n = target.len();
    // exponents log(a + shift) - d / weight, shifted so the maximum is 0
    let mut e: Vec<f64> = anchor
        .iter()
        .zip(target)
        .map(|(&a, &d)| (a + shift).ln() - d / weight)
        .collect();
    let emax = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(emax.is_finite(), "non-finite prox exponent");
    for v in &mut e {
        *v -= emax;
    }
    let residual = |mu: f64| -> f64 {
        e.iter()
            .map(|&v| ((v - mu).exp() - shift).max(0.0))
            .sum::<f64>()
            - 1.0
    };
    // the largest term is 1 at mu_lo and every term is at most 1/n at mu_hi
    let mut lo = -(1.0 + shift).ln();
    let mut hi = -(1.0 / n as f64 + shift).ln();
    let mut width = (hi - lo).max(1.0);
    while residual(lo) < 0.0 {
        lo -= width;
        width *= 2.0;
    }
    width = (hi - lo).max(1.0);
    while residual(hi) > 0.0 {
        hi += width;
        width *= 2.0;
    }
    let mut mu = 0.5 * (lo + hi);
    for _ in 0..MU_MAX_ITERS {
        mu = 0.5 * (lo + hi);
        let r = residual(mu);
        if r.abs() <= MU_TOL {
            break;
        }
        if r > 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
    }
    // exact solve on the active set found by bisection
    let active: Vec<bool> = e.iter().map(|&v| (v - mu).exp() > shift).collect();
    let count = active.iter().filter(|&&a| a).count();
    let mass: f64 = e
        .iter()
        .zip(&active)
        .filter(|(_, &a)| a)
        .map(|(&v, _)| v.exp())
        .sum();
    if count > 0 && mass > 0.0 {
        let exact = (mass / (1.0 + count as f64 * shift)).ln();
        if residual(exact).abs() <= residual(mu).abs() {
            mu = exact;
        }
    }
    e.iter()
        .map(|&v| ((v - mu).exp() - shift).max(0.0))
        .collect()
}

/// Entropic prox of the input block (shift `delta / N`).
pub fn prox_simplex_entropy(target: &[f64], anchor: &[f64], gamma2: f64, delta: f64) -> Vec<f64> {
    assert!(gamma2 > 0.0 && delta > 0.0);
    assert_eq!(target.len(), anchor.len());
    entropy_prox(target, anchor, gamma2, delta / anchor.len() as f64)
}

fn euclidean_step(target: &[f64], anchor: &[f64], gamma1: f64) -> Vec<f64> {
    anchor
        .iter()
        .zip(target)
        .map(|(&a, &t)| (gamma1 * a - t) / gamma1)
        .collect()
}

/// Prox over `[-1, 1]^S` with the Euclidean regularizer.
pub fn prox_inf_ball(target: &[f64], anchor: &[f64], gamma1: f64) -> Vec<f64> {
    euclidean_step(target, anchor, gamma1)
        .into_iter()
        .map(|u| u.clamp(-1.0, 1.0))
        .collect()
}

/// Prox over the unit 2-ball with the Euclidean regularizer.
pub fn prox_two_ball(target: &[f64], anchor: &[f64], gamma1: f64) -> Vec<f64> {
    project_two_ball(euclidean_step(target, anchor, gamma1))
}

/// Prox over `{0 <= xi_s <= 1, |xi|_2 <= 1}` with the Euclidean regularizer.
pub fn prox_box_cap_two_ball(target: &[f64], anchor: &[f64], gamma1: f64) -> Vec<f64> {
    project_box_cap_two_ball(euclidean_step(target, anchor, gamma1))
}

/// Prox of the multiplier block: clip of `(gamma * anchor - target) / gamma`
/// to `[0, cap]`.
pub fn prox_interval(target: f64, anchor: f64, gamma: f64, cap: f64) -> f64 {
    ((gamma * anchor - target) / gamma).clamp(0.0, cap)
}

fn project_two_ball(u: Vec<f64>) -> Vec<f64> {
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= 1.0 {
        u
    } else {
        u.into_iter().map(|v| v / norm).collect()
    }
}

/// Euclidean projection onto the box `[0, 1]^S` intersected with the unit ball.
///
/// With multiplier `mu` on the ball constraint the minimizer is
/// `clip(y / (1 + mu), 0, 1)`. When the clipped point leaves the ball, the
/// multiplier that puts it on the sphere scales the positive part of `y` to
/// unit norm, and no coordinate then exceeds 1.
pub fn project_box_cap_two_ball(y: Vec<f64>) -> Vec<f64> {
    let clipped: Vec<f64> = y.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let norm = clipped.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= 1.0 {
        return clipped;
    }
    let pos: Vec<f64> = y.iter().map(|v| v.max(0.0)).collect();
    let pnorm = pos.iter().map(|v| v * v).sum::<f64>().sqrt();
    pos.into_iter().map(|v| (v / pnorm).min(1.0)).collect()
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - 1.0) / (k + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|v| (v - theta).max(0.0)).collect()
}

/// Euclidean projection onto a perturbation set of the given kind.
pub fn project(kind: SetKind, y: Vec<f64>) -> Vec<f64> {
    match kind {
        SetKind::InfBall => y.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect(),
        SetKind::TwoBall => project_two_ball(y),
        SetKind::Simplex => project_simplex(&y),
        SetKind::BoxCapTwoBall => project_box_cap_two_ball(y),
    }
}

/// Prox of the joint DGF; the blocks separate, so each is solved on its own.
pub fn prox_joint(anchor: &SaddlePoint, step: &SaddlePoint, g: &Geometry) -> Result<SaddlePoint> {
    if anchor.xi.len() != step.xi.len() || anchor.p.len() != step.p.len() {
        return Err(Error::Dimension(
            "prox anchor and step differ in shape".into(),
        ));
    }
    let xi = match g.set {
        SetKind::InfBall => prox_inf_ball(&step.xi, &anchor.xi, g.gamma1),
        SetKind::TwoBall => prox_two_ball(&step.xi, &anchor.xi, g.gamma1),
        SetKind::BoxCapTwoBall => prox_box_cap_two_ball(&step.xi, &anchor.xi, g.gamma1),
        SetKind::Simplex => entropy_prox(
            &step.xi,
            &anchor.xi,
            g.gamma1,
            g.delta / anchor.xi.len() as f64,
        ),
    };
    let lambda = match (g.lambda_cap, anchor.lambda, step.lambda) {
        (Some(cap), Some(a), Some(t)) => Some(prox_interval(t, a, g.gamma1, cap)),
        (None, None, None) => None,
        _ => {
            return Err(Error::Dimension(
                "multiplier block present in only some of anchor, step and geometry".into(),
            ))
        }
    };
    let p = prox_simplex_entropy(&step.p, &anchor.p, g.gamma2, g.delta);
    Ok(SaddlePoint { xi, lambda, p })
}
