//! Reference solutions: Blahut–Arimoto capacity, the binary symmetric channel
//! closed form, the weakly symmetric channel bound, the dual-objective
//! certificate and the single-variable dual for KL balls.

use serde::Serialize;

use crate::channel::{
    output_marginal, row_divergences, ChannelMatrix, InputDistribution, RealMatrix,
};
use crate::error::{Error, Result};

/// Iteration cap of the Blahut–Arimoto loop.
pub const BA_MAX_ITERS: usize = 100_000;

/// Result of a capacity computation.
#[derive(Clone, Debug, Serialize)]
pub struct CapacityResult {
    /// objective value attained by `p` (a lower bound on the optimum)
    pub capacity: f64,
    /// certified upper bound on the optimum
    pub upper: f64,
    pub p: InputDistribution,
    pub iterations: usize,
}

/// Maximizes `I(p, Q) - sum_n p_n penalty_n` over the simplex with the
/// multiplicative update `p_n <- p_n exp(k (D_n - penalty_n))`.
///
/// `k = 1` is the classical update and never decreases the objective;
/// larger `k` is tried first and kept only when the objective does not drop.
/// The returned bounds satisfy `lower <= optimum <= upper` with
/// `upper = max_n (D_n - penalty_n)` by concavity.
pub(crate) fn tilted_blahut_arimoto(
    q: &RealMatrix,
    penalty: Option<&[f64]>,
    tol: f64,
) -> Result<(f64, f64, Vec<f64>, usize)> {
    let n = q.rows();
    let scores_at = |p: &[f64]| -> (Vec<f64>, f64, f64) {
        let d = row_divergences(q, &output_marginal(q, p));
        let s: Vec<f64> = match penalty {
            Some(w) => d.iter().zip(w).map(|(d, w)| d - w).collect(),
            None => d,
        };
        let lower = p
            .iter()
            .zip(&s)
            .filter(|(&pn, _)| pn > 0.0)
            .map(|(&pn, &v)| pn * v)
            .sum();
        let upper = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (s, lower, upper)
    };
    let mut p = vec![1.0 / n as f64; n];
    let (mut scores, mut lower, mut upper) = scores_at(&p);
    let mut best_upper = upper;
    let mut k = 1.0f64;
    for it in 0..BA_MAX_ITERS {
        best_upper = best_upper.min(upper);
        if best_upper - lower <= tol {
            return Ok((lower, best_upper.max(lower), p, it));
        }
        loop {
            let mut next: Vec<f64> = p
                .iter()
                .zip(&scores)
                .map(|(&pn, &s)| pn * (k * (s - upper)).exp())
                .collect();
            let total: f64 = next.iter().sum();
            for v in &mut next {
                *v /= total;
            }
            let (s, lo, up) = scores_at(&next);
            if lo >= lower || k == 1.0 {
                p = next;
                scores = s;
                lower = lo;
                upper = up;
                break;
            }
            k = (0.5 * k).max(1.0);
        }
        k = (1.5 * k).min(64.0);
    }
    Err(Error::NoConvergence {
        what: "Blahut-Arimoto",
        iterations: BA_MAX_ITERS,
        detail: format!("tolerance {tol:e}"),
    })
}

/// Deterministic capacity of `q` to within `tol` nats, starting from the
/// uniform distribution.
pub fn blahut_arimoto(q: &ChannelMatrix, tol: f64) -> Result<CapacityResult> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let (lower, upper, p, iterations) = tilted_blahut_arimoto(q.matrix(), None, tol)?;
    Ok(CapacityResult {
        capacity: lower,
        upper,
        p: InputDistribution::with_tolerance(p, 1e-10)?,
        iterations,
    })
}

fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Crossover-probability interval of a binary symmetric channel, normalized
/// so that its lower end is at most 1/2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BscInterval {
    beta_lo: f64,
    beta_hi: f64,
}

impl BscInterval {
    pub fn new(beta_lo: f64, beta_hi: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta_lo) || !(0.0..=1.0).contains(&beta_hi) || beta_lo > beta_hi {
            return Err(Error::Config(format!(
                "invalid crossover interval [{beta_lo}, {beta_hi}]"
            )));
        }
        // beta and 1 - beta give channels of equal capacity
        if beta_lo > 0.5 {
            Ok(Self {
                beta_lo: 1.0 - beta_hi,
                beta_hi: 1.0 - beta_lo,
            })
        } else {
            Ok(Self { beta_lo, beta_hi })
        }
    }

    pub fn beta_lo(&self) -> f64 {
        self.beta_lo
    }

    pub fn beta_hi(&self) -> f64 {
        self.beta_hi
    }

    /// Worst crossover probability in the interval.
    pub fn worst_beta(&self) -> f64 {
        self.beta_hi.min(0.5)
    }
}

/// Robust capacity of a binary symmetric channel with crossover probability
/// anywhere in the interval.
pub fn bsc_robust_capacity(interval: &BscInterval) -> f64 {
    let b = interval.worst_beta();
    (2f64.ln() + xlogx(b) + xlogx(1.0 - b)).max(0.0)
}

/// Weakly symmetric reference row under a KL-ball perturbation.
#[derive(Clone, Debug, PartialEq)]
pub struct KlRow {
    q: Vec<f64>,
    rho: f64,
    n_inputs: usize,
}

impl KlRow {
    pub fn new(q: Vec<f64>, rho: f64, n_inputs: usize) -> Result<Self> {
        if q.is_empty() || q.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Config(
                "reference row must be strictly positive".into(),
            ));
        }
        if (q.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Config("reference row must sum to 1".into()));
        }
        if !(rho >= 0.0) {
            return Err(Error::Config(format!(
                "KL radius must be nonnegative, got {rho}"
            )));
        }
        if n_inputs == 0 {
            return Err(Error::Config("number of inputs must be positive".into()));
        }
        Ok(Self { q, rho, n_inputs })
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }
}

/// Dual value of the KL-ball problem with `log M` restored.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct KlDual {
    pub value: f64,
    /// maximizing multiplier; infinite for a zero radius
    pub lambda_star: f64,
}

fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = v.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Concave dual function in the multiplier, up to the constant `log M`:
/// `-(1 + lambda) log sum_m q_m^(lambda / (1 + lambda)) - lambda rho`.
pub fn kl_dual_objective(row: &KlRow, lambda: f64) -> f64 {
    let t = lambda / (1.0 + lambda);
    let lse = log_sum_exp(row.q.iter().map(|&qm| t * qm.ln()));
    -(1.0 + lambda) * lse - lambda * row.rho
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Robust capacity of a weakly symmetric channel whose rows range over a KL
/// ball around `row.q`, by maximizing the single-variable dual.
pub fn kl_symmetric_dual(row: &KlRow, tol: f64) -> Result<KlDual> {
    let m = row.q.len() as f64;
    if row.rho == 0.0 {
        let neg_entropy: f64 = row.q.iter().map(|&v| xlogx(v)).sum();
        return Ok(KlDual {
            value: (m.ln() + neg_entropy).max(0.0),
            lambda_star: f64::INFINITY,
        });
    }
    let h = |l: f64| kl_dual_objective(row, l);
    // bracket: double the right end until the objective falls twice in a row
    let mut hi = 1.0;
    let mut prev = h(0.0);
    let mut falls = 0;
    loop {
        let v = h(hi);
        if v < prev {
            falls += 1;
            if falls == 2 {
                break;
            }
        } else {
            falls = 0;
        }
        prev = v;
        hi *= 2.0;
        if hi > 1e8 {
            return Err(Error::NoConvergence {
                what: "KL dual bracket",
                iterations: 0,
                detail: format!("objective still rising at lambda = {hi:e}"),
            });
        }
    }
    let (mut a, mut b) = (0.0, hi);
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let (mut f1, mut f2) = (h(x1), h(x2));
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = h(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = h(x1);
        }
    }
    let mut lambda_star = 0.5 * (a + b);
    let mut best = h(lambda_star);
    if h(0.0) >= best {
        lambda_star = 0.0;
        best = h(0.0);
    }
    Ok(KlDual {
        value: (m.ln() + best).max(0.0),
        lambda_star,
    })
}

/// `log N + max_n sum_m Q_nm log(Q_nm / sum_l Q_lm)`: an upper bound on the
/// robust capacity of any uncertainty set containing `q`, tight for weakly
/// symmetric sets.
pub fn upper_bound_weakly_symmetric(q: &ChannelMatrix) -> f64 {
    let cols = q.column_sums();
    let best = (0..q.n_inputs())
        .map(|n| {
            q.row(n)
                .iter()
                .zip(&cols)
                .filter(|(&v, _)| v > 0.0)
                .map(|(&v, &c)| v * (v / c).ln())
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    (q.n_inputs() as f64).ln() + best
}

/// Dual objective `log sum_m exp(v_m) + max_n sum_m Q_nm (log Q_nm - v_m)`.
/// Any `v` and any channel in the uncertainty set give an upper bound on the
/// robust capacity.
pub fn dual_certificate(q: &ChannelMatrix, v: &[f64]) -> Result<f64> {
    if v.len() != q.n_outputs() {
        return Err(Error::Dimension(format!(
            "dual vector has {} entries, channel has {} outputs",
            v.len(),
            q.n_outputs()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config("dual vector must be finite".into()));
    }
    let lse = log_sum_exp(v.iter().copied());
    let best = (0..q.n_inputs())
        .map(|n| {
            q.row(n)
                .iter()
                .zip(v)
                .filter(|(&x, _)| x > 0.0)
                .map(|(&x, &vm)| x * (x.ln() - vm))
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(lse + best)
}
