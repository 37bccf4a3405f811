//! State-space realization of a discrete filter and the volatility lag
//! weights derived from it.
//!
//! The volatility recursion feeds squared returns through the filter:
//!
//! ```text
//! Z(t+1) = A Z(t) + B y²(t)
//! σ²(t)  = C Z(t) = Σ_{k≥1} C A^(k−1) B y²(t−k)
//! ```
//!
//! so the weight on lag `k` is `h_k = C A^(k−1) B`. The feedthrough `d = b[0]`
//! would put weight on `y²(t)` itself and is excluded to keep `σ²(t)` causal.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::filter::{self, DiscreteFilter, FilterSpec};

/// Weights below this are treated as numerical zero by the strict check.
pub const NEGATIVE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StateSpaceError {
    #[error("denominator has a root on or outside the unit circle")]
    Unstable,
    #[error("inconsistent dimensions: {0}")]
    DimensionMismatch(&'static str),
    #[error("truncation length must be at least 1")]
    EmptyTruncation,
    #[error("lag weights have no positive mass")]
    Degenerate,
    #[error("{0}")]
    ConstraintViolation(ViolationReport),
}

/// How [`validate_weights`] treats the positivity and summability constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum WeightMode {
    /// Reject any negative weight or a total of 1 or more.
    Strict,
    /// Zero out negative weights and rescale to sum to 1.
    #[default]
    Clip,
}

/// Details of a failed (or repaired) constraint check.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolationReport {
    /// First lag (1-based) whose weight is below `-NEGATIVE_TOL`, with its value.
    pub first_negative: Option<(usize, f64)>,
    pub negative_count: usize,
    pub raw_sum: f64,
}

impl ViolationReport {
    fn is_clean(&self) -> bool {
        self.first_negative.is_none() && self.raw_sum < 1.0
    }
}

impl fmt::Display for ViolationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "lag-weight constraint violated:")?;
        if let Some((lag, value)) = self.first_negative {
            write!(
                f,
                " first negative weight at lag {lag} ({value:e}), {} negative in total;",
                self.negative_count
            )?;
        }
        write!(f, " raw sum {}", self.raw_sum)?;
        if self.raw_sum >= 1.0 {
            write!(f, " (must be < 1)")?;
        }
        Ok(())
    }
}

/// `(A, B, C, d)` with `A` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    dim: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: f64,
}

impl StateSpaceModel {
    /// Builds a model from explicit matrices, checking dimensions and that the
    /// spectral radius of `A` is below 1.
    pub fn new(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>, d: f64) -> Result<Self, StateSpaceError> {
        let dim = b.len();
        if c.len() != dim {
            return Err(StateSpaceError::DimensionMismatch("C and B lengths differ"));
        }
        if a.len() != dim * dim {
            return Err(StateSpaceError::DimensionMismatch("A is not dim × dim"));
        }
        let model = Self { dim, a, b, c, d };
        if !model.is_stable() {
            return Err(StateSpaceError::Unstable);
        }
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major `A`.
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    /// One step of `y = C z + d u; z ← A z + B u`.
    pub fn step(&self, state: &mut [f64], input: f64) -> f64 {
        let out = dot(&self.c, state) + self.d * input;
        let next = self.apply_a(state);
        for ((s, n), b) in state.iter_mut().zip(next).zip(&self.b) {
            *s = n + b * input;
        }
        out
    }

    /// Runs the recursion from a zero state.
    pub fn simulate(&self, input: &[f64]) -> Vec<f64> {
        let mut state = vec![0.0; self.dim];
        input.iter().map(|&u| self.step(&mut state, u)).collect()
    }

    fn apply_a(&self, v: &[f64]) -> Vec<f64> {
        self.a.chunks_exact(self.dim.max(1)).take(self.dim).map(|row| dot(row, v)).collect()
    }

    /// Spectral radius of `A` below 1, decided by repeated squaring: some
    /// power `A^(2^j)` must become a contraction in the max-row-sum norm.
    /// Unlike root-finding on the characteristic polynomial this stays
    /// accurate when poles cluster.
    pub fn is_stable(&self) -> bool {
        let n = self.dim;
        if n == 0 {
            return true;
        }
        let mut m = self.a.clone();
        for _ in 0..=64 {
            let norm = m
                .chunks_exact(n)
                .map(|row| row.iter().map(|v| libm::fabs(*v)).sum::<f64>())
                .fold(0.0, f64::max);
            if !norm.is_finite() {
                return false;
            }
            if norm < 1.0 {
                return true;
            }
            m = mat_mul(&m, &m, n);
        }
        false
    }
}

fn mat_mul(lhs: &[f64], rhs: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for l in 0..n {
            let v = lhs[i * n + l];
            if v == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += v * rhs[l * n + j];
            }
        }
    }
    out
}

/// Controller canonical form: `A` is the companion matrix of `a`, `B = e₁`,
/// `C_k = b_k − b₀ a_k` and `d = b₀`.
pub fn to_controller_canonical(filter: &DiscreteFilter) -> Result<StateSpaceModel, StateSpaceError> {
    let dim = filter.a().len().max(filter.b().len()) - 1;
    let pad = |coeffs: &[f64]| {
        let mut v = coeffs.to_vec();
        v.resize(dim + 1, 0.0);
        v
    };
    let (num, den) = (pad(filter.b()), pad(filter.a()));
    let d = num[0];

    let mut a = vec![0.0; dim * dim];
    for j in 0..dim {
        a[j] = -den[j + 1];
    }
    for i in 1..dim {
        a[i * dim + i - 1] = 1.0;
    }
    let mut b = vec![0.0; dim];
    if dim > 0 {
        b[0] = 1.0;
    }
    let c = (1..=dim).map(|k| num[k] - d * den[k]).collect();
    let model = StateSpaceModel { dim, a, b, c, d };
    if !model.is_stable() {
        return Err(StateSpaceError::Unstable);
    }
    Ok(model)
}

/// Series connection of each section's controller canonical form. Falls back
/// to [`to_controller_canonical`] for filters without sections.
///
/// The state matrix is block lower triangular with one small block per
/// section, so its poles are exactly those of the sections.
pub fn cascade_realization(filter: &DiscreteFilter) -> Result<StateSpaceModel, StateSpaceError> {
    let sections = filter.sections();
    if sections.is_empty() {
        return to_controller_canonical(filter);
    }
    let mut model = StateSpaceModel {
        dim: 0,
        a: Vec::new(),
        b: Vec::new(),
        c: Vec::new(),
        d: 1.0,
    };
    for s in sections {
        let len = s.order() + 1;
        let part = to_controller_canonical(&DiscreteFilter::new(s.b[..len].to_vec(), s.a[..len].to_vec()).expect("unit leading coefficient"))?;
        model = series(&model, &part);
    }
    Ok(model)
}

/// `first` feeding `second`.
fn series(first: &StateSpaceModel, second: &StateSpaceModel) -> StateSpaceModel {
    let (n1, n2) = (first.dim, second.dim);
    let n = n1 + n2;
    let mut a = vec![0.0; n * n];
    for i in 0..n1 {
        a[i * n..i * n + n1].copy_from_slice(&first.a[i * n1..(i + 1) * n1]);
    }
    for i in 0..n2 {
        let row = (n1 + i) * n;
        for j in 0..n1 {
            a[row + j] = second.b[i] * first.c[j];
        }
        a[row + n1..row + n].copy_from_slice(&second.a[i * n2..(i + 1) * n2]);
    }
    let mut b = first.b.clone();
    b.extend(second.b.iter().map(|v| v * first.d));
    let mut c: Vec<f64> = first.c.iter().map(|v| v * second.d).collect();
    c.extend_from_slice(&second.c);
    StateSpaceModel {
        dim: n,
        a,
        b,
        c,
        d: first.d * second.d,
    }
}

/// Volatility weights on lags `1..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagWeights {
    weights: Vec<f64>,
    raw_sum: f64,
}

impl LagWeights {
    /// Wraps weights given directly; `weights[0]` is lag 1. No constraint is
    /// checked until [`validate_weights`] runs.
    pub fn from_raw(weights: Vec<f64>) -> Self {
        let raw_sum = weights.iter().sum();
        Self { weights, raw_sum }
    }

    /// Flat weights `1/window` on lags `1..=window`.
    pub fn flat(window: usize) -> Self {
        Self::from_raw(vec![1.0 / window as f64; window])
    }

    /// Weight for lags `1..=L`, lag 1 first.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn truncation_length(&self) -> usize {
        self.weights.len()
    }

    /// Sum of the weights as produced, before any clipping or rescaling.
    pub fn raw_sum(&self) -> f64 {
        self.raw_sum
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weight on a 1-based lag, 0 beyond the truncation.
    pub fn lag(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        self.weights.get(k - 1).copied().unwrap_or(0.0)
    }
}

/// `h_k = C A^(k−1) B` for `k = 1..=len`.
pub fn impulse_weights(model: &StateSpaceModel, len: usize) -> Result<LagWeights, StateSpaceError> {
    if len == 0 {
        return Err(StateSpaceError::EmptyTruncation);
    }
    Ok(LagWeights::from_raw(markov_parameters(model, len)))
}

fn markov_parameters(model: &StateSpaceModel, len: usize) -> Vec<f64> {
    let mut v = model.b.clone();
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(dot(&model.c, &v));
        v = model.apply_a(&v);
    }
    out
}

/// Checks `h_k > 0` and `Σ h_k < 1`; in clip mode repairs instead of failing.
pub fn validate_weights(weights: &LagWeights, mode: WeightMode) -> Result<LagWeights, StateSpaceError> {
    let report = inspect(&weights.weights);
    let positive_mass: f64 = weights.weights.iter().filter(|w| **w > 0.0).sum();
    if !(positive_mass > 0.0) {
        return Err(StateSpaceError::Degenerate);
    }
    match mode {
        WeightMode::Strict => {
            if !report.is_clean() {
                return Err(StateSpaceError::ConstraintViolation(report));
            }
            let cleaned = weights.weights.iter().map(|w| w.max(0.0)).collect();
            Ok(LagWeights {
                weights: cleaned,
                raw_sum: weights.raw_sum,
            })
        }
        WeightMode::Clip => {
            let clipped: Vec<f64> = weights.weights.iter().map(|w| w.max(0.0)).collect();
            let total: f64 = clipped.iter().sum();
            Ok(LagWeights {
                weights: clipped.iter().map(|w| w / total).collect(),
                raw_sum: weights.raw_sum,
            })
        }
    }
}

/// Scans weights for the report fields without judging them.
pub fn inspect(weights: &[f64]) -> ViolationReport {
    let mut first_negative = None;
    let mut negative_count = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w < -NEGATIVE_TOL {
            negative_count += 1;
            first_negative.get_or_insert((i + 1, w));
        }
    }
    ViolationReport {
        first_negative,
        negative_count,
        raw_sum: weights.iter().sum(),
    }
}

/// Rule for choosing how many lags to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Truncation {
    /// Hard cap on the number of lags.
    pub max_lags: usize,
    /// Stop at the first lag where cumulative |h| reaches this share of the total.
    pub mass_fraction: f64,
    /// Number of lags over which the total |h| is measured.
    pub horizon: usize,
}

impl Default for Truncation {
    fn default() -> Self {
        Self {
            max_lags: 750,
            mass_fraction: 0.9999,
            horizon: 10_000,
        }
    }
}

impl Truncation {
    /// Keeps exactly `lags` lags.
    pub fn fixed(lags: usize) -> Self {
        Self {
            max_lags: lags,
            mass_fraction: 1.0,
            horizon: lags,
        }
    }

    /// Number of lags to keep for `model`.
    pub fn length_for(&self, model: &StateSpaceModel) -> usize {
        let horizon = self.horizon.max(self.max_lags).max(1);
        let h = markov_parameters(model, horizon);
        let total: f64 = h.iter().map(|v| v.abs()).sum();
        if !(total > 0.0) || self.mass_fraction >= 1.0 {
            return self.max_lags.max(1);
        }
        let target = self.mass_fraction * total;
        let mut cumulative = 0.0;
        for (i, v) in h.iter().enumerate() {
            cumulative += v.abs();
            if cumulative >= target {
                return (i + 1).min(self.max_lags).max(1);
            }
        }
        self.max_lags.max(1)
    }
}

/// Filter design → controller canonical form → truncated, validated weights.
pub fn design_weights(
    spec: &FilterSpec,
    mode: WeightMode,
    truncation: &Truncation,
) -> crate::Result<LagWeights> {
    let filter = filter::discretize(spec)?;
    let model = cascade_realization(&filter)?;
    let len = truncation.length_for(&model);
    let raw = impulse_weights(&model, len)?;
    Ok(validate_weights(&raw, mode)?)
}

fn dot(lhs: &[f64], rhs: &[f64]) -> f64 {
    lhs.iter().zip(rhs).map(|(l, r)| l * r).sum()
}
