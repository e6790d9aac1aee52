//! Channel law matrices, mutual information with its exact gradients, and the
//! affine uncertainty model `Q(xi) = Q0 + scale * sum_s xi_s Q^s`.
//!
//! All logarithms are natural, so every information quantity is in nats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-sum tolerance for channel matrices and direction matrices.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Tolerance used when checking that a perturbation vector lies in its set.
pub const SET_TOL: f64 = 1e-9;

/// Dense row-major real matrix. Direction matrices may hold negative entries.
#[derive(Clone, Debug, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Dimension("matrix has no rows".into()));
        }
        let m = rows[0].len();
        if m == 0 {
            return Err(Error::Dimension("matrix has empty rows".into()));
        }
        let mut data = Vec::with_capacity(n * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {m}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: n,
            cols: m,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).iter().sum()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }
}

/// Row-stochastic `N x M` channel law matrix: entry `(n, m)` is the
/// probability of output `m` given input `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelMatrix {
    inner: RealMatrix,
}

impl ChannelMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_matrix(RealMatrix::from_rows(&rows)?)
    }

    pub fn from_matrix(m: RealMatrix) -> Result<Self> {
        Self::with_tolerance(m, ROW_SUM_TOL)
    }

    pub(crate) fn with_tolerance(m: RealMatrix, tol: f64) -> Result<Self> {
        for r in 0..m.rows() {
            let row = m.row(r);
            if let Some((c, &v)) = row
                .iter()
                .enumerate()
                .find(|(_, v)| !v.is_finite() || **v < 0.0)
            {
                return Err(Error::InvalidChannel(format!(
                    "entry ({r}, {c}) = {v} is negative or not finite"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::InvalidChannel(format!(
                    "row {r} sums to {s:.15}, expected 1"
                )));
            }
        }
        Ok(Self { inner: m })
    }

    /// Binary symmetric channel with crossover probability `beta`.
    pub fn bsc(beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidChannel(format!(
                "crossover probability {beta} outside [0, 1]"
            )));
        }
        Self::from_rows(vec![vec![1.0 - beta, beta], vec![beta, 1.0 - beta]])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = RealMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        Self { inner: m }
    }

    /// Channel whose rows are all equal to `row`.
    pub fn constant_rows(n: usize, row: &[f64]) -> Result<Self> {
        Self::from_rows(vec![row.to_vec(); n])
    }

    pub fn n_inputs(&self) -> usize {
        self.inner.rows()
    }

    pub fn n_outputs(&self) -> usize {
        self.inner.cols()
    }

    #[inline]
    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.inner.get(n, m)
    }

    #[inline]
    pub fn row(&self, n: usize) -> &[f64] {
        self.inner.row(n)
    }

    pub fn matrix(&self) -> &RealMatrix {
        &self.inner
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.inner.to_rows()
    }

    pub fn min_entry(&self) -> f64 {
        self.inner
            .as_slice()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_strictly_positive(&self, tau: f64) -> bool {
        tau > 0.0 && self.min_entry() >= tau
    }

    /// Column sums `sum_l Q_lm`.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_outputs()];
        for n in 0..self.n_inputs() {
            for (o, &v) in out.iter_mut().zip(self.row(n)) {
                *o += v;
            }
        }
        out
    }

    /// Output marginal `q_m = sum_l p_l Q_lm`.
    pub fn output_distribution(&self, p: &[f64]) -> Vec<f64> {
        output_marginal(&self.inner, p)
    }
}

pub(crate) fn output_marginal(q: &RealMatrix, p: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; q.cols()];
    for (n, &pn) in p.iter().enumerate() {
        if pn == 0.0 {
            continue;
        }
        for (o, &v) in out.iter_mut().zip(q.row(n)) {
            *o += pn * v;
        }
    }
    out
}

/// Point of the probability simplex over the channel inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InputDistribution {
    probs: Vec<f64>,
}

impl InputDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(probs, ROW_SUM_TOL)
    }

    pub(crate) fn with_tolerance(probs: Vec<f64>, tol: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty distribution".into()));
        }
        if let Some((i, v)) = probs
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidDistribution(format!(
                "entry {i} = {v} is negative or not finite"
            )));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > tol {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {s:.15}"
            )));
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

/// Relative entropies `D_n = sum_m Q_nm log(Q_nm / q_m)` of each row against
/// the output marginal, with `0 log 0 = 0`.
pub(crate) fn row_divergences(q: &RealMatrix, marginal: &[f64]) -> Vec<f64> {
    (0..q.rows())
        .map(|n| {
            q.row(n)
                .iter()
                .zip(marginal)
                .filter(|(&v, _)| v > 0.0)
                .map(|(&v, &qm)| v * (v / qm).ln())
                .sum::<f64>()
        })
        .collect()
}

pub(crate) fn mutual_information_raw(p: &[f64], q: &RealMatrix) -> f64 {
    let marginal = output_marginal(q, p);
    let d = row_divergences(q, &marginal);
    // each row divergence is a KL divergence, hence nonnegative
    p.iter()
        .zip(&d)
        .filter(|(&pn, _)| pn > 0.0)
        .map(|(&pn, &dn)| pn * dn.max(0.0))
        .sum()
}

/// Average mutual information `I(p, Q)` in nats.
pub fn mutual_information(p: &InputDistribution, q: &ChannelMatrix) -> Result<f64> {
    check_dims(p.len(), q)?;
    Ok(mutual_information_raw(p.probs(), q.matrix()))
}

fn check_dims(len: usize, q: &ChannelMatrix) -> Result<()> {
    if len != q.n_inputs() {
        return Err(Error::Dimension(format!(
            "distribution has {len} entries but the channel has {} inputs",
            q.n_inputs()
        )));
    }
    Ok(())
}

fn first_nonpositive(q: &RealMatrix) -> Option<(usize, usize, f64)> {
    for r in 0..q.rows() {
        for (c, &v) in q.row(r).iter().enumerate() {
            if !(v > 0.0) {
                return Some((r, c, v));
            }
        }
    }
    None
}

/// Gradient of `I(p, Q)` with respect to `p`:
/// `sum_m Q_jm log(Q_jm / q_m) - 1` for each input `j`.
///
/// Requires a strictly positive channel.
pub fn grad_p(p: &InputDistribution, q: &ChannelMatrix) -> Result<Vec<f64>> {
    check_dims(p.len(), q)?;
    if let Some((row, col, value)) = first_nonpositive(q.matrix()) {
        return Err(Error::NonPositiveEntry { row, col, value });
    }
    let marginal = q.output_distribution(p.probs());
    Ok(row_divergences(q.matrix(), &marginal)
        .into_iter()
        .map(|d| d - 1.0)
        .collect())
}

/// Shape of the perturbation set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    /// `xi in [-1, 1]^S`
    InfBall,
    /// `||xi||_2 <= 1`
    TwoBall,
    /// `xi >= 0, sum xi = 1`
    Simplex,
    /// `0 <= xi_s <= 1` and `||xi||_2 <= 1`
    BoxCapTwoBall,
}

impl SetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SetKind::InfBall => "inf_ball",
            SetKind::TwoBall => "two_ball",
            SetKind::Simplex => "simplex",
            SetKind::BoxCapTwoBall => "box_cap_two_ball",
        }
    }
}

/// Perturbation set of dimension `dim`; `scale` multiplies every direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbationSet {
    pub kind: SetKind,
    pub dim: usize,
    pub scale: f64,
}

impl PerturbationSet {
    pub fn new(kind: SetKind, dim: usize) -> Self {
        Self {
            kind,
            dim,
            scale: 1.0,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn contains(&self, xi: &[f64], tol: f64) -> bool {
        if xi.len() != self.dim || xi.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let norm2 = || xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        match self.kind {
            SetKind::InfBall => xi.iter().all(|v| v.abs() <= 1.0 + tol),
            SetKind::TwoBall => norm2() <= 1.0 + tol,
            SetKind::Simplex => {
                xi.iter().all(|&v| v >= -tol) && (xi.iter().sum::<f64>() - 1.0).abs() <= tol
            }
            SetKind::BoxCapTwoBall => {
                xi.iter().all(|&v| v >= -tol && v <= 1.0 + tol) && norm2() <= 1.0 + tol
            }
        }
    }

    /// A canonical interior-or-center point used to start iterations.
    pub fn center(&self) -> Vec<f64> {
        match self.kind {
            SetKind::Simplex => vec![1.0 / self.dim as f64; self.dim],
            _ => vec![0.0; self.dim],
        }
    }

    /// Exact minimum of `base + sum_s coef_s xi_s` over the set.
    fn min_affine(&self, base: f64, coef: &[f64]) -> f64 {
        match self.kind {
            SetKind::InfBall => base - coef.iter().map(|c| c.abs()).sum::<f64>(),
            SetKind::TwoBall => base - coef.iter().map(|c| c * c).sum::<f64>().sqrt(),
            SetKind::Simplex => base + coef.iter().copied().fold(f64::INFINITY, f64::min),
            SetKind::BoxCapTwoBall => {
                base - coef
                    .iter()
                    .map(|&c| if c < 0.0 { c * c } else { 0.0 })
                    .sum::<f64>()
                    .sqrt()
            }
        }
    }
}

/// Uncertain channel `Q(xi) = Q0 + scale * sum_s xi_s Q^s` with `xi` in a
/// simple convex set.
#[derive(Clone, Debug)]
pub struct UncertaintyModel {
    nominal: ChannelMatrix,
    directions: Vec<RealMatrix>,
    set: PerturbationSet,
    /// directions multiplied by the set scale
    scaled: Vec<RealMatrix>,
    tau: f64,
}

impl UncertaintyModel {
    pub fn new(
        nominal: ChannelMatrix,
        directions: Vec<RealMatrix>,
        set: PerturbationSet,
    ) -> Result<Self> {
        let (n, m) = (nominal.n_inputs(), nominal.n_outputs());
        if set.dim == 0 {
            return Err(Error::InvalidModel(
                "perturbation set needs at least one dimension".into(),
            ));
        }
        if directions.len() != set.dim {
            return Err(Error::InvalidModel(format!(
                "{} direction matrices for a {}-dimensional set",
                directions.len(),
                set.dim
            )));
        }
        if !(0.0..=1.0).contains(&set.scale) {
            return Err(Error::InvalidModel(format!(
                "scale {} outside [0, 1]",
                set.scale
            )));
        }
        for (s, d) in directions.iter().enumerate() {
            if d.rows() != n || d.cols() != m {
                return Err(Error::Dimension(format!(
                    "direction {s} is {}x{}, nominal is {n}x{m}",
                    d.rows(),
                    d.cols()
                )));
            }
            if d.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "direction {s} has non-finite entries"
                )));
            }
            if let Some((r, sum)) = d
                .row_sums()
                .into_iter()
                .enumerate()
                .find(|(_, v)| v.abs() > ROW_SUM_TOL)
            {
                return Err(Error::InvalidModel(format!(
                    "direction {s} row {r} sums to {sum:e}, expected 0"
                )));
            }
        }
        let scaled: Vec<RealMatrix> = directions.iter().map(|d| d.scaled(set.scale)).collect();
        let mut model = Self {
            nominal,
            directions,
            set,
            scaled,
            tau: 0.0,
        };
        let (tau, row, col) = model.min_entry_over_set();
        if tau < 0.0 {
            return Err(Error::NonPositiveEntry {
                row,
                col,
                value: tau,
            });
        }
        model.tau = tau;
        Ok(model)
    }

    /// Copy of the model with a different direction scale.
    pub fn with_scale(&self, scale: f64) -> Result<Self> {
        Self::new(
            self.nominal.clone(),
            self.directions.clone(),
            self.set.with_scale(scale),
        )
    }

    fn min_entry_over_set(&self) -> (f64, usize, usize) {
        let mut best = (f64::INFINITY, 0, 0);
        let mut coef = vec![0.0; self.set.dim];
        for r in 0..self.n_inputs() {
            for c in 0..self.n_outputs() {
                for (k, d) in self.scaled.iter().enumerate() {
                    coef[k] = d.get(r, c);
                }
                let v = self.set.min_affine(self.nominal.get(r, c), &coef);
                if v < best.0 {
                    best = (v, r, c);
                }
            }
        }
        best
    }

    pub fn nominal(&self) -> &ChannelMatrix {
        &self.nominal
    }

    pub fn directions(&self) -> &[RealMatrix] {
        &self.directions
    }

    pub(crate) fn scaled_directions(&self) -> &[RealMatrix] {
        &self.scaled
    }

    pub fn set(&self) -> &PerturbationSet {
        &self.set
    }

    pub fn n_inputs(&self) -> usize {
        self.nominal.n_inputs()
    }

    pub fn n_outputs(&self) -> usize {
        self.nominal.n_outputs()
    }

    pub fn dim(&self) -> usize {
        self.set.dim
    }

    /// Smallest entry of `Q(xi)` over the whole perturbation set (exact).
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// True when no admissible perturbation changes the nominal channel.
    pub fn is_certain(&self) -> bool {
        self.set.scale == 0.0 || self.directions.iter().all(RealMatrix::is_zero)
    }

    fn check_xi(&self, xi: &[f64]) -> Result<()> {
        if xi.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "perturbation has {} entries, set dimension is {}",
                xi.len(),
                self.dim()
            )));
        }
        if !self.set.contains(xi, SET_TOL) {
            return Err(Error::OutsideSet(format!(
                "{xi:?} not in {}",
                self.set.kind.as_str()
            )));
        }
        Ok(())
    }

    /// `Q0 + scale * sum_s xi_s Q^s` without any checks.
    pub(crate) fn assemble_raw(&self, xi: &[f64]) -> RealMatrix {
        let mut out = self.nominal.matrix().clone();
        for (&x, d) in xi.iter().zip(&self.scaled) {
            if x == 0.0 {
                continue;
            }
            for (o, &v) in out.data.iter_mut().zip(d.as_slice()) {
                *o += x * v;
            }
        }
        out
    }

    /// Channel matrix at perturbation `xi`.
    pub fn assemble(&self, xi: &[f64]) -> Result<ChannelMatrix> {
        self.check_xi(xi)?;
        let q = self.assemble_raw(xi);
        for r in 0..q.rows() {
            for (c, &v) in q.row(r).iter().enumerate() {
                if v < 0.0 {
                    return Err(Error::NonPositiveEntry {
                        row: r,
                        col: c,
                        value: v,
                    });
                }
            }
        }
        ChannelMatrix::with_tolerance(q, 1e-10)
    }
}

/// Value and both partial gradients of `phi(xi, p) = I(p, Q(xi))`.
#[derive(Clone, Debug)]
pub(crate) struct Evaluation {
    pub value: f64,
    pub grad_xi: Vec<f64>,
    pub grad_p: Vec<f64>,
}

pub(crate) fn evaluate(model: &UncertaintyModel, xi: &[f64], p: &[f64]) -> Result<Evaluation> {
    let q = model.assemble_raw(xi);
    if let Some((row, col, value)) = first_nonpositive(&q) {
        return Err(Error::NonPositiveEntry { row, col, value });
    }
    let marginal = output_marginal(&q, p);
    let (n, m) = (q.rows(), q.cols());
    // log(Q_nm / q_m)
    let mut logr = vec![0.0; n * m];
    for r in 0..n {
        for (c, (&v, &qm)) in q.row(r).iter().zip(&marginal).enumerate() {
            logr[r * m + c] = (v / qm).ln();
        }
    }
    let mut grad_p = vec![0.0; n];
    let mut value = 0.0;
    for r in 0..n {
        let d: f64 = q
            .row(r)
            .iter()
            .zip(&logr[r * m..(r + 1) * m])
            .map(|(v, l)| v * l)
            .sum();
        grad_p[r] = d - 1.0;
        value += p[r] * d.max(0.0);
    }
    let grad_xi = model
        .scaled_directions()
        .iter()
        .map(|dir| {
            let mut acc = 0.0;
            for r in 0..n {
                if p[r] == 0.0 {
                    continue;
                }
                let row_acc: f64 = dir
                    .row(r)
                    .iter()
                    .zip(&logr[r * m..(r + 1) * m])
                    .map(|(v, l)| v * l)
                    .sum();
                acc += p[r] * row_acc;
            }
            acc
        })
        .collect();
    Ok(Evaluation {
        value,
        grad_xi,
        grad_p,
    })
}

/// Gradient of `I(p, Q(xi))` with respect to `xi`, via the chain rule through
/// `dI/dQ_nm = p_n log(Q_nm / q_m)`.
pub fn grad_xi(xi: &[f64], p: &InputDistribution, model: &UncertaintyModel) -> Result<Vec<f64>> {
    model.check_xi(xi)?;
    if p.len() != model.n_inputs() {
        return Err(Error::Dimension(format!(
            "distribution has {} entries but the channel has {} inputs",
            p.len(),
            model.n_inputs()
        )));
    }
    Ok(evaluate(model, xi, p.probs())?.grad_xi)
}

/// `I(p, Q(xi))` on raw slices, without validation.
pub fn phi(model: &UncertaintyModel, xi: &[f64], p: &[f64]) -> f64 {
    mutual_information_raw(p, &model.assemble_raw(xi))
}
