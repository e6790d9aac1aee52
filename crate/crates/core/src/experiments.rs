//! Seeded instance generators: a binary symmetric channel with an interval
//! of crossover probabilities, random fourth-power channels perturbed toward
//! the uniform row, and a ring of noisy neighbors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::channel::{ChannelMatrix, PerturbationSet, RealMatrix, SetKind, UncertaintyModel};
use crate::cost::CostConstraint;
use crate::error::{Error, Result};
use crate::oracles::blahut_arimoto;

/// Penalty of heavily used inputs in the generated cost vector.
pub const POWER4_PENALTY: f64 = 50.0;
/// Nominal input probability from which an input is penalized.
pub const POWER4_THRESHOLD: f64 = 0.05;
pub const POWER4_BUDGET: f64 = 1.0;

/// Crossover probability ranging over `[beta_lo, beta_hi]`: the nominal
/// channel sits at the midpoint and `xi = +-1` reaches the endpoints.
pub fn gen_bsc(beta_lo: f64, beta_hi: f64) -> Result<UncertaintyModel> {
    if !(0.0 < beta_lo && beta_lo <= beta_hi && beta_hi < 1.0) {
        return Err(Error::Config(format!(
            "need 0 < beta_lo <= beta_hi < 1, got [{beta_lo}, {beta_hi}]"
        )));
    }
    let mid = 0.5 * (beta_lo + beta_hi);
    let half = 0.5 * (beta_hi - beta_lo);
    let dir = RealMatrix::from_rows(&[vec![-half, half], vec![half, -half]])?;
    UncertaintyModel::new(
        ChannelMatrix::bsc(mid)?,
        vec![dir],
        PerturbationSet::new(SetKind::InfBall, 1),
    )
}

/// Random channel with rows `W_n^4 / sum W_n^4`, `W ~ U[1, 6.7]`, and
/// directions `Q^{s_n}_n = 1/M - Q0_n` for one uniformly drawn `s_n` per row;
/// `xi` lives in the box-capped ball and the set scale is `gamma`.
///
/// The cost vector charges `50` to every input whose capacity-achieving
/// probability on `Q0` is at least `0.05`, with budget `1`.
pub fn gen_random_power4(
    n: usize,
    m: usize,
    s: usize,
    gamma: f64,
    seed: u64,
) -> Result<(UncertaintyModel, CostConstraint)> {
    if n < 2 || m < 2 || s < 1 {
        return Err(Error::Config(format!(
            "need N, M >= 2 and S >= 1, got N={n}, M={m}, S={s}"
        )));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Config(format!(
            "gamma must lie in [0, 1], got {gamma}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..n * m).map(|_| rng.random_range(1.0..6.7)).collect();
    let assignment: Vec<usize> = (0..n).map(|_| rng.random_range(0..s)).collect();

    let mut nominal = RealMatrix::zeros(n, m);
    for r in 0..n {
        let row = &w[r * m..(r + 1) * m];
        let total: f64 = row.iter().map(|v| v.powi(4)).sum();
        for (c, v) in row.iter().enumerate() {
            nominal.set(r, c, v.powi(4) / total);
        }
    }
    let min = nominal
        .as_slice()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    assert!(min > 0.0, "fourth-power rows are strictly positive");

    let mut directions = vec![RealMatrix::zeros(n, m); s];
    for (r, &k) in assignment.iter().enumerate() {
        // exact zero row sum: the last entry absorbs the rounding
        let mut acc = 0.0;
        for c in 0..m - 1 {
            let v = 1.0 / m as f64 - nominal.get(r, c);
            directions[k].set(r, c, v);
            acc += v;
        }
        directions[k].set(r, m - 1, -acc);
    }
    let nominal = ChannelMatrix::from_matrix(nominal)?;
    let p_bar = blahut_arimoto(&nominal, 1e-10)?.p;
    let a = p_bar
        .probs()
        .iter()
        .map(|&v| {
            if v >= POWER4_THRESHOLD {
                POWER4_PENALTY
            } else {
                0.0
            }
        })
        .collect();
    let cost = CostConstraint::new(a, POWER4_BUDGET)?;
    let set = PerturbationSet::new(SetKind::BoxCapTwoBall, s).with_scale(gamma);
    Ok((UncertaintyModel::new(nominal, directions, set)?, cost))
}

const RING_FLOOR: f64 = 1e-5;
const RING_NEIGHBOR: f64 = 0.02;
const RING_SHIFT: f64 = 0.0175;

/// `N x N` channel where each input mostly reaches its own output and leaks
/// to the two neighbors on either side of a ring. The scalar perturbation
/// moves mass from the diagonal to the neighbors for the last `N - W` rows
/// and back for the first `W`.
pub fn gen_neighbor_ring(n: usize, w: usize) -> Result<UncertaintyModel> {
    if n <= 4 {
        return Err(Error::Config(format!("ring needs N > 4, got {n}")));
    }
    if w > n {
        return Err(Error::Config(format!("W must not exceed N = {n}, got {w}")));
    }
    let diag = 1.0 - 4.0 * RING_NEIGHBOR - (n - 5) as f64 * RING_FLOOR;
    let mut nominal = RealMatrix::zeros(n, n);
    let mut dir = RealMatrix::zeros(n, n);
    for r in 0..n {
        let sign = if r < w { -1.0 } else { 1.0 };
        for c in 0..n {
            nominal.set(r, c, RING_FLOOR);
        }
        nominal.set(r, r, diag);
        dir.set(r, r, -4.0 * RING_SHIFT * sign);
        for off in [1, 2, n - 1, n - 2] {
            let c = (r + off) % n;
            nominal.set(r, c, RING_NEIGHBOR);
            dir.set(r, c, RING_SHIFT * sign);
        }
    }
    UncertaintyModel::new(
        ChannelMatrix::from_matrix(nominal)?,
        vec![dir],
        PerturbationSet::new(SetKind::InfBall, 1),
    )
}
