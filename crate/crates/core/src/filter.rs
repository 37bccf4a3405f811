//! Maximally flat (Butterworth) low-pass filter design.
//!
//! The analog prototype has unit cutoff: its `n` poles sit on the left half
//! of the unit circle at `exp(jπ(2k−1+n)/(2n))`, `k = 1..n`, and its squared
//! magnitude is `1 / (1 + w^(2n))`. A discrete filter is obtained with the
//! bilinear transform `s = (1 − z⁻¹)/(1 + z⁻¹)` after pre-warping the analog
//! cutoff to `tan(π·f_c)`, which puts the half-power point exactly on the
//! requested discrete cutoff.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

/// Highest supported order. Beyond this the lag weights oscillate too much
/// to be useful as volatility weights.
pub const MAX_ORDER: usize = 12;

/// Default order of the volatility filter.
pub const DEFAULT_ORDER: usize = 2;

/// Default cutoff, in cycles per sample (roughly a two-year memory on daily data).
pub const DEFAULT_CUTOFF: f64 = 1.0 / 500.0;

/// Imaginary parts at or below this are treated as exactly real.
const REAL_TOL: f64 = 1e-12;

/// Tolerance used when pairing a pole with its complex conjugate.
const CONJ_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FilterError {
    #[error("invalid order {0}: must be between 1 and {MAX_ORDER}")]
    InvalidOrder(usize),
    #[error("invalid cutoff {0}: must lie strictly inside (0, 0.5) cycles per sample")]
    InvalidCutoff(f64),
    #[error("pole {index} has no complex-conjugate partner")]
    Asymmetric { index: usize },
    #[error("denominator must be non-empty with a nonzero leading coefficient")]
    InvalidDenominator,
}

/// Order and cutoff of a discrete low-pass design.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FilterSpec {
    order: usize,
    cutoff: f64,
}

impl FilterSpec {
    /// `cutoff` is in cycles per sample and must satisfy `0 < cutoff < 0.5`.
    pub fn new(order: usize, cutoff: f64) -> Result<Self, FilterError> {
        if order == 0 || order > MAX_ORDER {
            return Err(FilterError::InvalidOrder(order));
        }
        if !(cutoff > 0.0 && cutoff < 0.5) {
            return Err(FilterError::InvalidCutoff(cutoff));
        }
        Ok(Self { order, cutoff })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            order: DEFAULT_ORDER,
            cutoff: DEFAULT_CUTOFF,
        }
    }
}

/// Unit-cutoff analog prototype `H(s) = gain / ∏(s − s_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogPrototype {
    pub poles: Vec<Complex64>,
    pub gain: f64,
}

impl AnalogPrototype {
    pub fn butterworth(order: usize) -> Result<Self, FilterError> {
        let poles = butterworth_poles(order)?;
        // ∏(−s_k) = 1 for poles on the unit circle, so unit gain gives unit DC gain.
        Ok(Self { poles, gain: 1.0 })
    }

    /// Denominator coefficients, highest degree first.
    pub fn denominator(&self) -> Result<Vec<f64>, FilterError> {
        analog_denominator(&self.poles)
    }
}

/// Second-order section `(b₀ + b₁z⁻¹ + b₂z⁻²) / (1 + a₁z⁻¹ + a₂z⁻²)`.
/// First-order sections have zero second coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Section {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Section {
    pub fn order(&self) -> usize {
        if self.a[2] == 0.0 && self.b[2] == 0.0 {
            1
        } else {
            2
        }
    }

    pub fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }

    /// Complex response at `freq` cycles per sample.
    pub fn response(&self, freq: f64) -> Complex64 {
        eval_polynomial(&self.b, freq) / eval_polynomial(&self.a, freq)
    }

    /// Stability triangle `|a₂| < 1`, `|a₁| < 1 + a₂`.
    pub fn is_stable(&self) -> bool {
        libm::fabs(self.a[2]) < 1.0 && libm::fabs(self.a[1]) < 1.0 + self.a[2]
    }
}

/// Rational discrete filter `B(z⁻¹)/A(z⁻¹)`, coefficients in ascending lag
/// order with `a[0] == 1`.
///
/// Designed filters also keep their factored sections. Gain, magnitude and
/// stability are evaluated on the sections when present, since expanding a
/// high-order product with poles clustered near `z = 1` loses most of the
/// precision of `Σ a`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DiscreteFilter {
    b: Vec<f64>,
    a: Vec<f64>,
    #[cfg_attr(feature = "serde", serde(default))]
    sections: Vec<Section>,
}

impl DiscreteFilter {
    /// Normalizes both polynomials by `a[0]`. Stability is not enforced here;
    /// see [`DiscreteFilter::is_stable`].
    pub fn new(b: Vec<f64>, a: Vec<f64>) -> Result<Self, FilterError> {
        let lead = *a.first().ok_or(FilterError::InvalidDenominator)?;
        if lead == 0.0 || !lead.is_finite() {
            return Err(FilterError::InvalidDenominator);
        }
        if lead == 1.0 {
            return Ok(Self {
                b,
                a,
                sections: Vec::new(),
            });
        }
        Ok(Self {
            b: b.iter().map(|v| v / lead).collect(),
            a: a.iter().map(|v| v / lead).collect(),
            sections: Vec::new(),
        })
    }

    /// Cascade of sections, expanded into a single transfer function.
    pub fn from_sections(sections: Vec<Section>) -> Result<Self, FilterError> {
        let mut b = vec![1.0];
        let mut a = vec![1.0];
        for s in &sections {
            if s.a[0] != 1.0 {
                return Err(FilterError::InvalidDenominator);
            }
            let len = s.order() + 1;
            b = poly_mul(&b, &s.b[..len]);
            a = poly_mul(&a, &s.a[..len]);
        }
        Ok(Self { b, a, sections })
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// Factored form; empty for filters built from raw coefficients.
    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    /// Response at zero frequency.
    pub fn dc_gain(&self) -> f64 {
        if self.sections.is_empty() {
            self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
        } else {
            self.sections.iter().map(Section::dc_gain).product()
        }
    }

    /// True when every pole lies strictly inside the unit circle. Raw
    /// coefficients are checked with the Schur–Cohn step-down recursion.
    pub fn is_stable(&self) -> bool {
        if self.sections.is_empty() {
            is_schur_stable(&self.a)
        } else {
            self.sections.iter().all(Section::is_stable)
        }
    }

    /// Direct-form difference equation
    /// `y[t] = Σ b_m x[t−m] − Σ_{m≥1} a_m y[t−m]`, zero initial state.
    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; input.len()];
        for t in 0..input.len() {
            let mut acc = 0.0;
            for (m, bm) in self.b.iter().enumerate().take(t + 1) {
                acc += bm * input[t - m];
            }
            for (m, am) in self.a.iter().enumerate().skip(1).take(t) {
                acc -= am * out[t - m];
            }
            out[t] = acc;
        }
        out
    }
}

/// Left-half-plane Butterworth poles `s_k = exp(jπ(2k−1+n)/(2n))`, `k = 1..n`.
///
/// Pole `k` and pole `n+1−k` are exact conjugates; for odd `n` the middle pole
/// is exactly `−1`.
pub fn butterworth_poles(n: usize) -> Result<Vec<Complex64>, FilterError> {
    if n == 0 {
        return Err(FilterError::InvalidOrder(n));
    }
    let mut poles: Vec<Complex64> = Vec::with_capacity(n);
    for k in 1..=n {
        let pole = if 2 * k - 1 == n {
            Complex64::new(-1.0, 0.0)
        } else if 2 * k <= n {
            let theta = PI * (2 * k - 1 + n) as f64 / (2 * n) as f64;
            Complex64::new(libm::cos(theta), libm::sin(theta))
        } else {
            poles[n - k].conj()
        };
        poles.push(pole);
    }
    Ok(poles)
}

/// Real coefficients of `∏(s − s_k)`, highest degree first.
///
/// Conjugate pairs are folded into real quadratics `s² − 2Re(p)s + |p|²`
/// before the product is expanded, so no imaginary residue accumulates.
pub fn analog_denominator(poles: &[Complex64]) -> Result<Vec<f64>, FilterError> {
    let mut poly = vec![1.0];
    for factor in real_factors(poles)? {
        let section = match factor {
            RealFactor::Linear(re) => vec![1.0, -re],
            RealFactor::Quadratic(p) => vec![1.0, -2.0 * p.re, p.norm_sqr()],
        };
        poly = poly_mul(&poly, &section);
    }
    Ok(poly)
}

/// `|H_n(jw)| = 1/√(1 + w^(2n))`.
pub fn magnitude_response(n: usize, w: f64) -> f64 {
    1.0 / libm::sqrt(1.0 + libm::pow(w, 2.0 * n as f64))
}

/// Analog cutoff that maps onto discrete cutoff `f` (cycles/sample) under the
/// bilinear transform: `tan(π f)`, evaluated in half-angle form so that
/// `f = 0.25` gives exactly 1.
pub fn prewarp(f: f64) -> f64 {
    let angle = 2.0 * PI * f;
    libm::sin(angle) / (1.0 + libm::cos(angle))
}

/// Bilinear transform of the Butterworth prototype with pre-warped cutoff.
pub fn discretize(spec: &FilterSpec) -> Result<DiscreteFilter, FilterError> {
    let spec = FilterSpec::new(spec.order, spec.cutoff)?;
    let n = spec.order;
    let warped = prewarp(spec.cutoff);
    let poles = butterworth_poles(n)?;

    // Each analog factor (s − q) becomes ((1 − q) − (1 + q) z⁻¹) / (1 + z⁻¹);
    // the (1 + z⁻¹) terms together with warped^n form the numerator.
    let sections = real_factors(&poles)?
        .into_iter()
        .map(|factor| match factor {
            RealFactor::Linear(re) => {
                let q = warped * re;
                let lead = 1.0 - q;
                let g = warped / lead;
                Section {
                    b: [g, g, 0.0],
                    a: [1.0, -(1.0 + q) / lead, 0.0],
                }
            }
            RealFactor::Quadratic(p) => {
                let (re, im) = (warped * p.re, warped * p.im);
                let mag2 = re * re + im * im;
                let lead = (1.0 - re) * (1.0 - re) + im * im;
                let g = warped * warped / lead;
                Section {
                    b: [g, 2.0 * g, g],
                    a: [1.0, 2.0 * (mag2 - 1.0) / lead, ((1.0 + re) * (1.0 + re) + im * im) / lead],
                }
            }
        })
        .collect();
    DiscreteFilter::from_sections(sections)
}

fn eval_polynomial(coeffs: &[f64], freq: f64) -> Complex64 {
    coeffs
        .iter()
        .enumerate()
        .fold(Complex64::new(0.0, 0.0), |acc, (m, c)| {
            let phase = -2.0 * PI * freq * m as f64;
            acc + Complex64::new(libm::cos(phase), libm::sin(phase)) * *c
        })
}

/// `|B(e^{−j2πf})| / |A(e^{−j2πf})|` for `f` in cycles per sample.
pub fn discrete_magnitude(filter: &DiscreteFilter, freq: f64) -> f64 {
    if filter.sections.is_empty() {
        eval_polynomial(filter.b(), freq).norm() / eval_polynomial(filter.a(), freq).norm()
    } else {
        filter.sections.iter().map(|s| s.response(freq).norm()).product()
    }
}

enum RealFactor {
    Linear(f64),
    /// Representative of a conjugate pair.
    Quadratic(Complex64),
}

fn real_factors(poles: &[Complex64]) -> Result<Vec<RealFactor>, FilterError> {
    let mut used = vec![false; poles.len()];
    let mut factors = Vec::with_capacity(poles.len());
    for i in 0..poles.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let p = poles[i];
        if libm::fabs(p.im) <= REAL_TOL {
            factors.push(RealFactor::Linear(p.re));
            continue;
        }
        let partner = (0..poles.len())
            .find(|&j| !used[j] && (poles[j] - p.conj()).norm() <= CONJ_TOL)
            .ok_or(FilterError::Asymmetric { index: i })?;
        used[partner] = true;
        factors.push(RealFactor::Quadratic(p));
    }
    Ok(factors)
}

pub(crate) fn poly_mul(lhs: &[f64], rhs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; lhs.len() + rhs.len() - 1];
    for (i, l) in lhs.iter().enumerate() {
        for (j, r) in rhs.iter().enumerate() {
            out[i + j] += l * r;
        }
    }
    out
}

fn is_schur_stable(a: &[f64]) -> bool {
    let mut poly: Vec<f64> = a.to_vec();
    while poly.len() > 1 && poly[poly.len() - 1] == 0.0 {
        poly.pop();
    }
    if poly.is_empty() || poly[0] == 0.0 {
        return false;
    }
    let lead = poly[0];
    for c in poly.iter_mut() {
        *c /= lead;
    }
    while poly.len() > 1 {
        let m = poly.len() - 1;
        let k = poly[m];
        if !(libm::fabs(k) < 1.0) {
            return false;
        }
        let denom = 1.0 - k * k;
        poly = (0..m).map(|j| (poly[j] - k * poly[m - j]) / denom).collect();
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

    fn assert_close(actual: &[f64], expected: &[f64], tol: f64) {
        assert_eq!(actual.len(), expected.len(), "{actual:?} vs {expected:?}");
        for (a, e) in actual.iter().zip(expected) {
            assert!((a - e).abs() <= tol, "{actual:?} vs {expected:?}");
        }
    }

    #[test]
    fn first_order_pole_is_minus_one() {
        let poles = butterworth_poles(1).unwrap();
        assert_eq!(poles, vec![Complex64::new(-1.0, 0.0)]);
    }

    #[test]
    fn second_order_poles() {
        let poles = butterworth_poles(2).unwrap();
        let expected = [
            Complex64::from_polar(1.0, 3.0 * PI / 4.0),
            Complex64::from_polar(1.0, 5.0 * PI / 4.0),
        ];
        for (p, e) in poles.iter().zip(expected) {
            assert!((p - e).norm() < 1e-15);
        }
        assert!((poles[0].re + FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((poles[0].im - FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn zero_order_rejected() {
        assert_eq!(butterworth_poles(0), Err(FilterError::InvalidOrder(0)));
        assert_eq!(FilterSpec::new(0, 0.1), Err(FilterError::InvalidOrder(0)));
        assert!(FilterSpec::new(MAX_ORDER + 1, 0.1).is_err());
    }

    #[test]
    fn poles_on_left_unit_semicircle() {
        for n in 1..=MAX_ORDER {
            let poles = butterworth_poles(n).unwrap();
            assert_eq!(poles.len(), n);
            for p in &poles {
                assert!((p.norm() - 1.0).abs() < 1e-12);
                assert!(p.re < 0.0);
                assert!(poles.iter().any(|q| (q - p.conj()).norm() < 1e-15));
            }
        }
    }

    #[test]
    fn analog_denominators_low_orders() {
        let d1 = analog_denominator(&butterworth_poles(1).unwrap()).unwrap();
        assert_close(&d1, &[1.0, 1.0], 1e-12);
        let d2 = analog_denominator(&butterworth_poles(2).unwrap()).unwrap();
        assert_close(&d2, &[1.0, SQRT_2, 1.0], 1e-12);
        let d3 = analog_denominator(&butterworth_poles(3).unwrap()).unwrap();
        assert_close(&d3, &[1.0, 2.0, 2.0, 1.0], 1e-12);
    }

    #[test]
    fn analog_denominator_rejects_lonely_complex_pole() {
        let poles = [Complex64::new(-0.5, 0.5), Complex64::new(-0.5, 0.4)];
        assert_eq!(
            analog_denominator(&poles),
            Err(FilterError::Asymmetric { index: 0 })
        );
    }

    #[test]
    fn magnitude_examples() {
        assert_eq!(magnitude_response(3, 0.0), 1.0);
        for n in 1..=12 {
            assert!((magnitude_response(n, 1.0) - FRAC_1_SQRT_2).abs() < 1e-12);
        }
        assert!((magnitude_response(2, 2.0) - 1.0 / libm::sqrt(17.0)).abs() < 1e-15);
    }

    #[test]
    fn first_order_quarter_band_is_exact() {
        let f = discretize(&FilterSpec::new(1, 0.25).unwrap()).unwrap();
        assert_eq!(f.b(), &[0.5, 0.5]);
        assert_eq!(f.a(), &[1.0, 0.0]);
        let at_cutoff = discrete_magnitude(&f, 0.25);
        assert!((at_cutoff - FRAC_1_SQRT_2).abs() < 1e-6);
    }

    #[test]
    fn second_order_matches_reference_design() {
        // Reference values from an independent filter-design package
        // (butter(2, 0.2) normalized to Nyquist).
        let f = discretize(&FilterSpec::new(2, 0.1).unwrap()).unwrap();
        assert_close(
            f.b(),
            &[0.0674552738890719, 0.1349105477781438, 0.0674552738890719],
            1e-9,
        );
        assert_close(f.a(), &[1.0, -1.1429805025399011, 0.41280159809618877], 1e-9);
    }

    #[test]
    fn cutoff_bounds() {
        for bad in [0.0, 0.5, -0.1, 0.7, f64::NAN] {
            assert!(matches!(
                FilterSpec::new(2, bad),
                Err(FilterError::InvalidCutoff(_))
            ));
        }
    }

    #[test]
    fn designed_filters_are_stable_with_unit_dc_gain() {
        for n in 1..=8 {
            for cutoff in [0.002, 0.01, 0.1, 0.3, 0.45] {
                let f = discretize(&FilterSpec::new(n, cutoff).unwrap()).unwrap();
                assert!(f.is_stable(), "n={n} cutoff={cutoff}");
                assert!((f.dc_gain() - 1.0).abs() < 1e-10, "n={n} cutoff={cutoff}");
                assert_eq!(f.a()[0], 1.0);
                assert!((discrete_magnitude(&f, 0.0) - 1.0).abs() < 1e-10);
                let edge = discrete_magnitude(&f, 0.5);
                assert!(edge < discrete_magnitude(&f, cutoff));
            }
        }
    }

    #[test]
    fn stability_test_detects_outside_roots() {
        assert!(is_schur_stable(&[1.0, -0.94]));
        assert!(!is_schur_stable(&[1.0, -1.0]));
        assert!(!is_schur_stable(&[1.0, -2.5, 1.0]));
        // (1 − 0.5z⁻¹)(1 − 0.9z⁻¹)
        assert!(is_schur_stable(&[1.0, -1.4, 0.45]));
        assert!(is_schur_stable(&[1.0, 0.0]));
    }

    #[test]
    fn apply_is_difference_equation() {
        let f = DiscreteFilter::new(vec![0.0, 0.06], vec![1.0, -0.94]).unwrap();
        let out = f.apply(&[1.0, 0.0, 0.0, 0.0]);
        assert_close(&out, &[0.0, 0.06, 0.0564, 0.053016], 1e-15);
    }

    #[test]
    fn new_normalizes_leading_coefficient() {
        let f = DiscreteFilter::new(vec![1.0, 1.0], vec![2.0, 0.5]).unwrap();
        assert_eq!(f.a(), &[1.0, 0.25]);
        assert_eq!(f.b(), &[0.5, 0.5]);
        assert!(DiscreteFilter::new(vec![1.0], vec![0.0, 1.0]).is_err());
        assert!(DiscreteFilter::new(vec![1.0], vec![]).is_err());
    }
}
