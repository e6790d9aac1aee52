//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcc_core::{ChannelMatrix, PerturbationSet, RealMatrix, SetKind, UncertaintyModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Direct double sum, independent of the library. `p` need not be
/// normalized.
pub fn mi(p: &[f64], q: &[Vec<f64>]) -> f64 {
    let m = q[0].len();
    let out: Vec<f64> = (0..m)
        .map(|c| p.iter().zip(q).map(|(a, r)| a * r[c]).sum())
        .collect();
    let mut v = 0.0;
    for (pn, row) in p.iter().zip(q) {
        for (c, &x) in row.iter().enumerate() {
            if pn * x > 0.0 {
                v += pn * x * (x / out[c]).ln();
            }
        }
    }
    v
}

pub fn random_row(r: &mut impl Rng, m: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..m)
        .map(|_| r.random_range(floor.max(1e-3)..1.0))
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

pub fn random_channel(r: &mut impl Rng, n: usize, m: usize) -> ChannelMatrix {
    ChannelMatrix::from_rows((0..n).map(|_| random_row(r, m, 0.05)).collect()).unwrap()
}

pub fn random_simplex(r: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -r.random_range(1e-9f64..1.0).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Interior point of a simplex: every entry at least `lo`.
pub fn random_interior_simplex(r: &mut impl Rng, n: usize, lo: f64) -> Vec<f64> {
    let base = random_simplex(r, n);
    base.into_iter()
        .map(|v| lo + (1.0 - n as f64 * lo) * v)
        .collect()
}

/// Direction with zero row sums whose row `n` has absolute entries summing
/// to `share` times the smallest entry of `q0` in that row.
pub fn random_direction(r: &mut impl Rng, q0: &ChannelMatrix, share: f64) -> RealMatrix {
    let (n, m) = (q0.n_inputs(), q0.n_outputs());
    let mut d = RealMatrix::zeros(n, m);
    for row in 0..n {
        let raw: Vec<f64> = (0..m).map(|_| r.random_range(-1.0..1.0)).collect();
        let mean = raw.iter().sum::<f64>() / m as f64;
        let centered: Vec<f64> = raw.iter().map(|v| v - mean).collect();
        let lo = q0.row(row).iter().copied().fold(f64::INFINITY, f64::min);
        let scale = share * lo / centered.iter().map(|v| v.abs()).sum::<f64>().max(1e-12);
        let mut acc = 0.0;
        for (c, v) in centered.iter().take(m - 1).enumerate() {
            d.set(row, c, v * scale);
            acc += v * scale;
        }
        d.set(row, m - 1, -acc);
    }
    d
}

/// Random model whose directions together move each row by at most 80% of
/// its smallest entry for any `|xi_s| <= 1`.
pub fn random_model(
    r: &mut impl Rng,
    n: usize,
    m: usize,
    s: usize,
    kind: SetKind,
) -> UncertaintyModel {
    let q0 = random_channel(r, n, m);
    let per = 0.8 / s as f64;
    let dirs = (0..s).map(|_| random_direction(r, &q0, per)).collect();
    UncertaintyModel::new(q0, dirs, PerturbationSet::new(kind, s)).unwrap()
}

pub fn random_in_set(r: &mut impl Rng, kind: SetKind, s: usize) -> Vec<f64> {
    match kind {
        SetKind::InfBall => (0..s).map(|_| r.random_range(-1.0..1.0)).collect(),
        SetKind::TwoBall => {
            let v: Vec<f64> = (0..s).map(|_| r.random_range(-1.0..1.0)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let rad = r.random_range(0.0..1.0f64);
            v.into_iter().map(|x| x / n.max(1e-12) * rad).collect()
        }
        SetKind::Simplex => random_simplex(r, s),
        SetKind::BoxCapTwoBall => {
            let v: Vec<f64> = (0..s).map(|_| r.random_range(0.0..1.0)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let rad = r.random_range(0.0..1.0f64);
            v.into_iter().map(|x| x / n.max(1e-12) * rad).collect()
        }
    }
}

/// Central differences with step `h` of `f` at `x`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Shifted entropy `sum (x + c) log(x + c)` and its gradient.
pub fn shifted_entropy(x: &[f64], c: f64) -> f64 {
    x.iter().map(|&v| (v + c) * (v + c).ln()).sum()
}

pub fn shifted_entropy_grad(x: &[f64], c: f64) -> Vec<f64> {
    x.iter().map(|&v| 1.0 + (v + c).ln()).collect()
}

/// Grid minimizer of `f` over the probability simplex with three entries.
pub fn grid_simplex3(f: impl Fn(&[f64]) -> f64, step: f64) -> Vec<f64> {
    let k = (1.0 / step).round() as usize;
    let mut best = (f64::INFINITY, vec![]);
    for i in 0..=k {
        for j in 0..=(k - i) {
            let x = [i as f64 * step, j as f64 * step, (k - i - j) as f64 * step];
            let v = f(&x);
            if v < best.0 {
                best = (v, x.to_vec());
            }
        }
    }
    best.1
}

/// Grid minimizer of `f` over the points of `[lo, hi]^2` accepted by `keep`.
pub fn grid_square(
    f: impl Fn(&[f64]) -> f64,
    keep: impl Fn(&[f64]) -> bool,
    lo: f64,
    hi: f64,
    step: f64,
) -> Vec<f64> {
    let k = ((hi - lo) / step).round() as usize;
    let mut best = (f64::INFINITY, vec![]);
    for i in 0..=k {
        for j in 0..=k {
            let x = [lo + i as f64 * step, lo + j as f64 * step];
            if !keep(&x) {
                continue;
            }
            let v = f(&x);
            if v < best.0 {
                best = (v, x.to_vec());
            }
        }
    }
    best.1
}

fn kl(r: &[f64], q: &[f64]) -> f64 {
    r.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(a, b)| a * (a / b).ln())
        .sum()
}

fn tilted(q: &[f64], t: f64) -> Vec<f64> {
    let w: Vec<f64> = q.iter().map(|v| v.powf(t)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// `log M + min { sum r log r : KL(r || q) <= rho }` from the first-order
/// conditions of the primal: the minimizer is `q^t` normalized, with `t`
/// fixed by an active KL constraint unless the uniform row is feasible.
pub fn kl_primal(q: &[f64], rho: f64) -> f64 {
    let m = q.len() as f64;
    let uniform = vec![1.0 / m; q.len()];
    let neg_entropy = |r: &[f64]| {
        r.iter()
            .filter(|&&v| v > 0.0)
            .map(|v| v * v.ln())
            .sum::<f64>()
    };
    if kl(&uniform, q) <= rho {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let t = 0.5 * (lo + hi);
        if kl(&tilted(q, t), q) > rho {
            lo = t;
        } else {
            hi = t;
        }
    }
    m.ln() + neg_entropy(&tilted(q, hi))
}

/// Grid version of [`kl_primal`] for three outputs: scans the simplex and
/// keeps the best feasible row.
pub fn kl_primal_grid3(q: &[f64], rho: f64, step: f64) -> f64 {
    let f = |r: &[f64]| {
        if kl(r, q) <= rho {
            r.iter()
                .filter(|&&v| v > 0.0)
                .map(|v| v * v.ln())
                .sum::<f64>()
        } else {
            f64::INFINITY
        }
    };
    let best = grid_simplex3(f, step);
    3f64.ln() + f(&best)
}

/// Minimizer of `f` over the points of `[lo, hi]^d` accepted by `keep`
/// (`d` = 1, 2 or 3), by four passes of successively finer grids; the final
/// spacing is `(hi - lo) / 40000`.
pub fn refined_grid(
    f: impl Fn(&[f64]) -> f64,
    keep: impl Fn(&[f64]) -> bool,
    d: usize,
    lo: f64,
    hi: f64,
) -> Vec<f64> {
    let mut center = vec![0.5 * (lo + hi); d];
    let mut half = 0.5 * (hi - lo);
    let k = 40usize;
    for _ in 0..4 {
        let step = 2.0 * half / k as f64;
        let mut best = (f64::INFINITY, center.clone());
        let total = (k + 1).pow(d as u32);
        for idx in 0..total {
            let mut x = vec![0.0; d];
            let mut rest = idx;
            for (i, v) in x.iter_mut().enumerate() {
                let j = rest % (k + 1);
                rest /= k + 1;
                *v = (center[i] - half + j as f64 * step).clamp(lo, hi);
            }
            if !keep(&x) {
                continue;
            }
            let val = f(&x);
            if val < best.0 {
                best = (val, x);
            }
        }
        center = best.1;
        half = 2.0 * step;
    }
    center
}

/// Point of the closed unit ball from polar or spherical parameters in
/// `[0, 1]^d`; angles cover more than one turn so no optimum sits on a seam.
/// With `positive` the angles are restricted to the nonnegative orthant.
pub fn ball_point(u: &[f64], positive: bool) -> Vec<f64> {
    use std::f64::consts::{FRAC_PI_2, PI};
    let r = u[0];
    let turn = |v: f64| {
        if positive {
            FRAC_PI_2 * v
        } else {
            4.0 * PI * v - PI
        }
    };
    match u.len() {
        1 => vec![if positive { r } else { 2.0 * r - 1.0 }],
        2 => {
            let t = turn(u[1]);
            vec![r * t.cos(), r * t.sin()]
        }
        _ => {
            let th = if positive {
                FRAC_PI_2 * u[1]
            } else {
                PI * u[1]
            };
            let ph = turn(u[2]);
            vec![
                r * th.sin() * ph.cos(),
                r * th.sin() * ph.sin(),
                r * th.cos(),
            ]
        }
    }
}

/// `g/2 |x|^2 + <x, t - g a>`, the Euclidean prox objective.
pub fn euclid_objective<'a>(t: &'a [f64], a: &'a [f64], g: f64) -> impl Fn(&[f64]) -> f64 + 'a {
    move |x: &[f64]| {
        x.iter()
            .zip(t)
            .zip(a)
            .map(|((&x, &t), &a)| 0.5 * g * x * x + x * (t - g * a))
            .sum()
    }
}

/// Grid minimizer of `f` over the unit ball, or its nonnegative part.
pub fn ball_grid(f: impl Fn(&[f64]) -> f64, s: usize, positive: bool) -> Vec<f64> {
    let u = refined_grid(|u| f(&ball_point(u, positive)), |_| true, s, 0.0, 1.0);
    ball_point(&u, positive)
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
