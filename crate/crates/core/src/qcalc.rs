//! q-special functions and Jackson calculus.
//!
//! Conventions: `[n] = (1 - q^n)/(1 - q)`, `[n]! = [n][n-1]...[1]`,
//! `e_q(x) = sum x^n/[n]!` and its entire partner
//! `E_q(x) = sum q^{n(n-1)/2} x^n/[n]!`, related by `e_q(x) E_q(-x) = 1`.
//! Every function dispatches `q = 1` to the classical closed form.

use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Deformation parameter `q` in `(0, 1]`; `q = 1` is the undeformed boson.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct DeformationParam(f64);

impl DeformationParam {
    pub fn new(q: f64) -> Result<Self> {
        if q.is_finite() && q > 0.0 && q <= 1.0 {
            Ok(Self(q))
        } else {
            Err(Error::InvalidDeformation(q))
        }
    }

    pub fn classical() -> Self {
        Self(1.0)
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn is_classical(self) -> bool {
        self.0 == 1.0
    }

    /// `1/(1-q)`, or `None` in the classical limit.
    pub fn radius(self) -> Option<f64> {
        if self.is_classical() {
            None
        } else {
            Some(1.0 / (1.0 - self.0))
        }
    }
}

impl TryFrom<f64> for DeformationParam {
    type Error = Error;
    fn try_from(q: f64) -> Result<Self> {
        Self::new(q)
    }
}

impl From<DeformationParam> for f64 {
    fn from(q: DeformationParam) -> f64 {
        q.0
    }
}

impl std::fmt::Display for DeformationParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The q-number `[n]`.
pub fn q_number(n: usize, q: DeformationParam) -> f64 {
    match n {
        0 => 0.0,
        1 => 1.0,
        _ if q.is_classical() => n as f64,
        _ => {
            let q = q.value();
            // 1 - q is exact for q in [1/2, 1]; expm1 avoids cancellation near q = 1.
            -((n as f64) * q.ln()).exp_m1() / (1.0 - q)
        }
    }
}

/// The q-factorial `[n]!`, with `[0]! = 1`.
pub fn q_factorial(n: usize, q: DeformationParam) -> Result<f64> {
    let mut acc = 1.0f64;
    for k in 2..=n {
        acc *= q_number(k, q);
        if !acc.is_finite() {
            return Err(Error::Overflow(n));
        }
    }
    Ok(acc)
}

/// Table `[0]!, [1]!, ..., [n]!`.
pub fn q_factorials(n: usize, q: DeformationParam) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 1.0f64;
    out.push(acc);
    for k in 1..=n {
        acc *= q_number(k, q);
        if !acc.is_finite() {
            return Err(Error::Overflow(k));
        }
        out.push(acc);
    }
    Ok(out)
}

/// Which q-exponential to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QExpVariant {
    /// `e_q(x) = sum x^n/[n]!`, radius of convergence `1/(1-q)`.
    SmallE,
    /// `E_q(x) = sum q^{n(n-1)/2} x^n/[n]!`, entire.
    BigE,
}

/// Stopping rule for the q-exponential series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesOptions {
    pub tol: f64,
    pub max_terms: usize,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self {
            tol: 1e-16,
            max_terms: 100_000,
        }
    }
}

/// Series whose absolute sum exceeds the result by this factor are
/// re-evaluated through the infinite-product form.
const CANCELLATION_LIMIT: f64 = 16.0;

/// q-exponential of a complex argument.
///
/// The power series is summed until the geometric tail bound drops below
/// `tol * (|partial sum| + 1)`. For `q < 1`, when the series loses digits to
/// cancellation (alternating or rotating terms), the value is recomputed from
/// `e_q(x) = 1/((1-q)x; q)_inf` or `E_q(x) = (-(1-q)x; q)_inf`.
pub fn q_exponential(
    x: Complex64,
    q: DeformationParam,
    variant: QExpVariant,
    opts: SeriesOptions,
) -> Result<Complex64> {
    if !(opts.tol > 0.0) {
        return Err(Error::Domain(format!("series tolerance must be positive (got {})", opts.tol)));
    }
    if !x.re.is_finite() || !x.im.is_finite() {
        return Err(Error::Domain(format!("non-finite argument {x}")));
    }
    if q.is_classical() {
        return Ok(x.exp());
    }
    let radius = 1.0 / (1.0 - q.value());
    if variant == QExpVariant::SmallE && x.norm() >= radius {
        return Err(Error::Divergence {
            magnitude: x.norm(),
            radius,
        });
    }
    let (sum, abs_sum) = exp_series(x, q, variant, opts)?;
    if abs_sum > CANCELLATION_LIMIT * sum.norm() {
        Ok(exp_product(x, q, variant))
    } else {
        Ok(sum)
    }
}

fn exp_series(
    x: Complex64,
    q: DeformationParam,
    variant: QExpVariant,
    opts: SeriesOptions,
) -> Result<(Complex64, f64)> {
    let qv = q.value();
    let mut acc = CompensatedSum::new();
    let mut abs_sum = 0.0;
    let mut term = Complex64::new(1.0, 0.0);
    // q^n, only used by BigE
    let mut qn = 1.0;
    for n in 0..opts.max_terms {
        acc.add(term);
        abs_sum += term.norm();
        let damp = match variant {
            QExpVariant::SmallE => 1.0,
            QExpVariant::BigE => qn,
        };
        term = term * x * (damp / q_number(n + 1, q));
        qn *= qv;
        // ratios after this point are bounded by |x| q^{n+1} / [n+2] (or |x| / [n+2])
        let next_damp = match variant {
            QExpVariant::SmallE => 1.0,
            QExpVariant::BigE => qn,
        };
        let ratio = x.norm() * next_damp / q_number(n + 2, q);
        if ratio < 1.0 {
            let tail = term.norm() / (1.0 - ratio);
            if tail <= opts.tol * (acc.value().norm() + 1.0) {
                acc.add(term);
                abs_sum += term.norm();
                return Ok((acc.value(), abs_sum));
            }
        }
    }
    Err(Error::NonConvergence {
        terms: opts.max_terms,
    })
}

fn exp_product(x: Complex64, q: DeformationParam, variant: QExpVariant) -> Complex64 {
    let qv = q.value();
    let y = x * (1.0 - qv);
    let sign = match variant {
        QExpVariant::SmallE => -1.0,
        QExpVariant::BigE => 1.0,
    };
    let mut prod = Complex64::new(1.0, 0.0);
    let mut factor = y;
    while factor.norm() > 1e-18 {
        prod *= Complex64::new(1.0, 0.0) + factor * sign;
        factor *= qv;
    }
    match variant {
        QExpVariant::SmallE => prod.inv(),
        QExpVariant::BigE => prod,
    }
}

/// `e_q(x)` with default options.
pub fn e_q(x: Complex64, q: DeformationParam) -> Result<Complex64> {
    q_exponential(x, q, QExpVariant::SmallE, SeriesOptions::default())
}

/// `E_q(x)` with default options.
pub fn big_e_q(x: Complex64, q: DeformationParam) -> Result<Complex64> {
    q_exponential(x, q, QExpVariant::BigE, SeriesOptions::default())
}

/// `e_q(x)` for real `x`.
pub fn e_q_real(x: f64, q: DeformationParam) -> Result<f64> {
    e_q(Complex64::new(x, 0.0), q).map(|v| v.re)
}

/// `1/e_q(s)` evaluated as `E_q(-s)`; finite up to and including `s = 1/(1-q)`.
pub fn inverse_e_q(s: f64, q: DeformationParam) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::Domain(format!("inverse_e_q needs s >= 0 (got {s})")));
    }
    big_e_q(Complex64::new(-s, 0.0), q).map(|v| v.re)
}

/// First zero `R = 1/(1-q)` of the q-exponential, the radial upper limit.
pub fn q_exp_first_zero(q: DeformationParam) -> Result<f64> {
    q.radius().ok_or(Error::NoFiniteZero)
}

/// Truncation rule for [`jackson_integral`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacksonOptions {
    pub tol: f64,
    pub max_nodes: usize,
}

impl Default for JacksonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_nodes: 100_000,
        }
    }
}

/// Nodes always visited before the tail bound may stop the sum, so an
/// integrand vanishing at the outermost nodes is not mistaken for zero.
const MIN_JACKSON_NODES: usize = 16;
/// The sampled node `a q^j` must also have fallen below this fraction of `a`,
/// so an integrand that is negligible near the endpoint is still resolved.
const MIN_JACKSON_DESCENT: f64 = 1e-6;

const GL_POINTS: usize = 16;
const GL_PANELS: usize = 8;

fn gauss_legendre_16() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let rule = GaussLegendre::new(GL_POINTS).expect("16-point Gauss-Legendre rule");
        let mut pairs = rule.as_node_weight_pairs().to_vec();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs
    })
}

/// Nodes and weights of a composite 16-point Gauss-Legendre rule on `[a, b]`.
pub fn composite_gauss_legendre(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let base = gauss_legendre_16();
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * base.len());
    for p in 0..panels {
        let lo = a + h * p as f64;
        for &(x, w) in base {
            out.push((lo + 0.5 * h * (x + 1.0), 0.5 * h * w));
        }
    }
    out
}

/// Jackson q-integral `int_0^a f(t) d_q t = a(1-q) sum_j q^j f(a q^j)`.
///
/// The node sum stops once `a q^{j+1} max|f|` (max over nodes visited so
/// far) falls below `tol`. At `q = 1` the integral is an ordinary Riemann
/// integral, evaluated with 8 panels of 16-point Gauss-Legendre.
pub fn jackson_integral<F>(mut f: F, a: f64, q: DeformationParam, opts: JacksonOptions) -> Result<Complex64>
where
    F: FnMut(f64) -> Complex64,
{
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Domain(format!("Jackson integral needs a > 0 (got {a})")));
    }
    if q.is_classical() {
        return Ok(composite_gauss_legendre(0.0, a, GL_PANELS)
            .into_iter()
            .map(|(x, w)| f(x) * w)
            .collect::<CompensatedSum>()
            .value());
    }
    let qv = q.value();
    let mut acc = CompensatedSum::new();
    let mut max_f = 0.0f64;
    let mut qj = 1.0f64;
    for j in 0..opts.max_nodes {
        let x = a * qj;
        let fx = f(x);
        if !fx.re.is_finite() || !fx.im.is_finite() {
            return Err(Error::Domain(format!("integrand is not finite at t = {x}")));
        }
        acc.add(fx * (a * (1.0 - qv) * qj));
        max_f = max_f.max(fx.norm());
        qj *= qv;
        if j + 1 >= MIN_JACKSON_NODES && qj <= MIN_JACKSON_DESCENT && a * qj * max_f < opts.tol {
            return Ok(acc.value());
        }
    }
    Err(Error::NonConvergence {
        terms: opts.max_nodes,
    })
}

/// Matrix-valued power series `f(r) = sum_k c_k r^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialSeries {
    coeffs: Vec<DMatrix<Complex64>>,
}

impl RadialSeries {
    pub fn new(coeffs: Vec<DMatrix<Complex64>>) -> Result<Self> {
        let first = coeffs
            .first()
            .ok_or_else(|| Error::InvalidSeries("no coefficients".into()))?;
        let dim = first.nrows();
        for c in &coeffs {
            if !c.is_square() || c.nrows() != dim {
                return Err(Error::InvalidSeries(format!(
                    "coefficient of shape {}x{} in a series of dimension {dim}",
                    c.nrows(),
                    c.ncols()
                )));
            }
        }
        Ok(Self { coeffs })
    }

    pub fn zero(dim: usize, max_degree: usize) -> Self {
        Self {
            coeffs: vec![DMatrix::zeros(dim, dim); max_degree + 1],
        }
    }

    /// 1x1 series from scalar coefficients.
    pub fn scalar(coeffs: &[Complex64]) -> Result<Self> {
        Self::new(coeffs.iter().map(|&c| DMatrix::from_element(1, 1, c)).collect())
    }

    pub fn max_degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.coeffs[0].nrows()
    }

    pub fn coeff(&self, k: usize) -> &DMatrix<Complex64> {
        &self.coeffs[k]
    }

    pub fn coeff_mut(&mut self, k: usize) -> &mut DMatrix<Complex64> {
        &mut self.coeffs[k]
    }

    pub fn coeffs(&self) -> &[DMatrix<Complex64>] {
        &self.coeffs
    }

    /// Horner evaluation at radius `r`.
    pub fn evaluate(&self, r: f64) -> DMatrix<Complex64> {
        let mut acc = self.coeffs[self.max_degree()].clone();
        for c in self.coeffs.iter().rev().skip(1) {
            acc *= Complex64::new(r, 0.0);
            acc += c;
        }
        acc
    }
}

/// Applies the Jackson derivative `(D_q g)(r) = (g(r) - g(qr))/((1-q) r)`
/// `p` times, using `r^k -> [k] r^{k-1}` on the coefficients.
pub fn q_derivative_series(f: &RadialSeries, p: usize, q: DeformationParam) -> RadialSeries {
    if p > f.max_degree() {
        return RadialSeries::zero(f.dim(), 0);
    }
    let mut coeffs: Vec<DMatrix<Complex64>> = f.coeffs[p..].to_vec();
    for (j, c) in coeffs.iter_mut().enumerate() {
        // degree j + p -> j picks up [j+p][j+p-1]...[j+1]
        let mut factor = 1.0;
        for k in (j + 1)..=(j + p) {
            factor *= q_number(k, q);
        }
        *c *= Complex64::new(factor, 0.0);
    }
    RadialSeries { coeffs }
}

/// Inverse of one Jackson derivative with zero constant term:
/// `r^k -> r^{k+1}/[k+1]`.
pub fn q_antiderivative_series(f: &RadialSeries, q: DeformationParam) -> RadialSeries {
    let mut coeffs = Vec::with_capacity(f.coeffs.len() + 1);
    coeffs.push(DMatrix::zeros(f.dim(), f.dim()));
    for (k, c) in f.coeffs.iter().enumerate() {
        coeffs.push(c / Complex64::new(q_number(k + 1, q), 0.0));
    }
    RadialSeries { coeffs }
}

/// Value of the series at `r = 0`.
pub fn series_eval_at_zero(f: &RadialSeries) -> DMatrix<Complex64> {
    f.coeffs[0].clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn q(v: f64) -> DeformationParam {
        DeformationParam::new(v).unwrap()
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn deformation_rejects_out_of_range() {
        assert!(DeformationParam::new(0.0).is_err());
        assert!(DeformationParam::new(-0.2).is_err());
        assert!(DeformationParam::new(1.0 + 1e-12).is_err());
        assert!(DeformationParam::new(f64::NAN).is_err());
        assert!(DeformationParam::new(1.0).unwrap().is_classical());
        assert!(serde_json::from_str::<DeformationParam>("1.5").is_err());
        assert_eq!(serde_json::from_str::<DeformationParam>("0.25").unwrap(), q(0.25));
    }

    #[test]
    fn q_number_examples() {
        assert_eq!(q_number(0, q(0.37)), 0.0);
        assert_relative_eq!(q_number(2, q(0.5)), 1.5, epsilon = 1e-15);
        assert_eq!(q_number(5, q(1.0)), 5.0);
    }

    #[test]
    fn q_number_near_classical_limit() {
        let qq = q(1.0 - 1e-6);
        for n in 0..=30 {
            let v = q_number(n, qq);
            if n > 0 {
                assert!((v - n as f64).abs() / n as f64 <= 1e-4);
            }
        }
    }

    #[test]
    fn q_number_bounded_and_monotone() {
        for &qv in &[0.3, 0.5, 0.9, 0.99] {
            let qq = q(qv);
            let mut prev = -1.0;
            for n in 0..=30 {
                let v = q_number(n, qq);
                assert!(v <= n as f64, "[{n}] = {v} at q = {qv}");
                assert!(v > prev);
                prev = v;
            }
        }
    }

    #[test]
    fn q_factorial_examples() {
        assert_eq!(q_factorial(0, q(0.7)).unwrap(), 1.0);
        assert_eq!(q_factorial(4, q(1.0)).unwrap(), 24.0);
        // independent loop over the defining product
        let mut oracle = 1.0;
        for k in 1..=3 {
            oracle *= (1.0 - 0.5f64.powi(k)) / 0.5;
        }
        assert_relative_eq!(oracle, 2.625, epsilon = 1e-15);
        assert_relative_eq!(q_factorial(3, q(0.5)).unwrap(), oracle, epsilon = 1e-15);
    }

    #[test]
    fn q_factorial_overflow_is_reported() {
        assert_eq!(q_factorial(200, q(1.0)), Err(Error::Overflow(200)));
        assert!(q_factorials(171, q(1.0)).is_err());
        // bounded by (1/(1-q))^n, so q = 0.5 stays finite for a long way
        assert!(q_factorial(200, q(0.5)).is_ok());
    }

    #[test]
    fn q_exponential_examples() {
        let opts = SeriesOptions::default();
        for &qv in &[0.2, 0.5, 1.0] {
            for v in [QExpVariant::SmallE, QExpVariant::BigE] {
                assert_eq!(q_exponential(c(0.0), q(qv), v, opts).unwrap(), c(1.0));
            }
        }
        let e = q_exponential(c(1.0), q(1.0), QExpVariant::SmallE, opts).unwrap();
        assert_relative_eq!(e.re, std::f64::consts::E, epsilon = 1e-15);
    }

    /// Independent oracle: sum both truncated series term by term and multiply.
    fn truncated_pair_product(x: f64, qv: f64, terms: usize) -> f64 {
        let mut fact = 1.0;
        let mut small = 0.0;
        let mut big = 0.0;
        for n in 0usize..terms {
            if n > 0 {
                fact *= (1.0 - qv.powi(n as i32)) / (1.0 - qv);
            }
            small += x.powi(n as i32) / fact;
            let damp = qv.powf((n * n.saturating_sub(1)) as f64 / 2.0);
            big += damp * (-x).powi(n as i32) / fact;
        }
        small * big
    }

    #[test]
    fn inverse_pair_matches_truncated_series_oracle() {
        let oracle = truncated_pair_product(0.8, 0.6, 200);
        assert_relative_eq!(oracle, 1.0, epsilon = 1e-13);
        let small = e_q(c(0.8), q(0.6)).unwrap();
        let big = big_e_q(c(-0.8), q(0.6)).unwrap();
        assert_relative_eq!((small * big).re, oracle, epsilon = 1e-13);
    }

    #[test]
    fn cauchy_product_coefficients_vanish() {
        // coefficient of x^n in e_q(x) E_q(-x) is sum_k (-1)^k q^{k(k-1)/2} / ([k]! [n-k]!)
        for &qv in &[0.3, 0.7, 0.95] {
            let qq = q(qv);
            let f = q_factorials(25, qq).unwrap();
            for n in 1..=25 {
                let mut s = 0.0;
                for k in 0usize..=n {
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    s += sign * qv.powf((k * k.saturating_sub(1)) as f64 / 2.0) / (f[k] * f[n - k]);
                }
                assert!(s.abs() < 1e-12, "n = {n}, q = {qv}: {s}");
            }
        }
    }

    #[test]
    fn small_e_diverges_outside_radius() {
        let err = e_q(c(2.0), q(0.5)).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
        assert!(e_q(c(3.0), q(0.5)).is_err());
        assert!(e_q(Complex64::new(0.0, -2.5), q(0.5)).is_err());
        // E_q is entire
        assert!(big_e_q(c(-50.0), q(0.5)).is_ok());
        assert!(big_e_q(c(50.0), q(0.5)).is_ok());
    }

    #[test]
    fn term_cap_is_reported() {
        let opts = SeriesOptions {
            tol: 1e-16,
            max_terms: 5,
        };
        let err = q_exponential(c(1.9), q(0.5), QExpVariant::SmallE, opts).unwrap_err();
        assert_eq!(err, Error::NonConvergence { terms: 5 });
    }

    #[test]
    fn product_form_agrees_with_series_where_both_are_stable() {
        for &qv in &[0.3, 0.6, 0.9] {
            let qq = q(qv);
            let r = 1.0 / (1.0 - qv);
            for &frac in &[0.1, 0.4, 0.8] {
                let x = Complex64::new(frac * r * 0.6, frac * r * 0.3);
                let (s, _) = exp_series(x, qq, QExpVariant::SmallE, SeriesOptions::default()).unwrap();
                let p = exp_product(x, qq, QExpVariant::SmallE);
                assert!((s - p).norm() <= 1e-12 * s.norm());
                let (s, _) = exp_series(x, qq, QExpVariant::BigE, SeriesOptions::default()).unwrap();
                let p = exp_product(x, qq, QExpVariant::BigE);
                assert!((s - p).norm() <= 1e-12 * s.norm());
            }
        }
    }

    #[test]
    fn first_zero_examples() {
        assert_relative_eq!(q_exp_first_zero(q(0.5)).unwrap(), 2.0, epsilon = 1e-15);
        assert_relative_eq!(q_exp_first_zero(q(0.9)).unwrap(), 10.0, epsilon = 1e-13);
        assert_relative_eq!(q_exp_first_zero(q(0.99)).unwrap(), 100.0, epsilon = 1e-12);
        assert_eq!(q_exp_first_zero(q(1.0)), Err(Error::NoFiniteZero));
    }

    #[test]
    fn jackson_integral_examples() {
        let one = jackson_integral(|_| c(1.0), 2.0, q(0.5), JacksonOptions::default()).unwrap();
        assert_relative_eq!(one.re, 2.0, epsilon = 1e-12);
        let lin = jackson_integral(c, 1.0, q(1.0), JacksonOptions::default()).unwrap();
        assert_relative_eq!(lin.re, 0.5, epsilon = 1e-14);
        assert!(jackson_integral(c, 0.0, q(0.5), JacksonOptions::default()).is_err());
    }

    #[test]
    fn jackson_moments_reproduce_q_factorials() {
        let qq = q(0.5);
        let upper = q_exp_first_zero(qq).unwrap();
        for n in 0..=5 {
            let m = jackson_integral(
                |s| c(s.powi(n as i32) * inverse_e_q(qq.value() * s, qq).unwrap()),
                upper,
                qq,
                JacksonOptions { tol: 1e-15, ..Default::default() },
            )
            .unwrap();
            let f = q_factorial(n, qq).unwrap();
            assert_relative_eq!(m.re, f, max_relative = 1e-12);
        }
    }

    #[test]
    fn jackson_integral_reports_non_convergence() {
        let opts = JacksonOptions {
            tol: 1e-12,
            max_nodes: 2000,
        };
        let err = jackson_integral(|t| c(1.0 / (t * t)), 1.0, q(0.5), opts).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. } | Error::Domain(_)));
    }

    #[test]
    fn derivative_examples() {
        let cubic = RadialSeries::scalar(&[c(0.0), c(0.0), c(0.0), c(1.0)]).unwrap();
        let d = q_derivative_series(&cubic, 1, q(0.5));
        assert_eq!(d.max_degree(), 2);
        assert_relative_eq!(d.coeff(2)[(0, 0)].re, 1.75, epsilon = 1e-15);

        let f = RadialSeries::scalar(&[c(0.3), c(-1.0), c(2.0)]).unwrap();
        assert_eq!(q_derivative_series(&f, 0, q(0.4)), f);

        let f = RadialSeries::scalar(&[c(5.0), c(2.0)]).unwrap();
        assert_eq!(series_eval_at_zero(&f)[(0, 0)], c(5.0));
        let f = RadialSeries::scalar(&[c(0.0), c(0.0), c(1.0)]).unwrap();
        assert_eq!(series_eval_at_zero(&f)[(0, 0)], c(0.0));
    }

    #[test]
    fn fourfold_derivative_matches_numeric_jackson_quotient() {
        // Oracle: apply (g(r) - g(qr))/((1-q) r) four times to r^4 numerically.
        fn dq(g: &dyn Fn(f64) -> f64, qv: f64, r: f64) -> f64 {
            (g(r) - g(qv * r)) / ((1.0 - qv) * r)
        }
        let qv = 0.5;
        let g0 = |r: f64| r.powi(4);
        let g1 = |r: f64| dq(&g0, qv, r);
        let g2 = |r: f64| dq(&g1, qv, r);
        let g3 = |r: f64| dq(&g2, qv, r);
        let oracle = dq(&g3, qv, 0.1);
        assert_relative_eq!(oracle, 4.921875, max_relative = 1e-10);

        let quartic = RadialSeries::scalar(&[c(0.0), c(0.0), c(0.0), c(0.0), c(1.0)]).unwrap();
        let d = q_derivative_series(&quartic, 4, q(qv));
        assert_relative_eq!(series_eval_at_zero(&d)[(0, 0)].re, oracle, max_relative = 1e-10);
        assert_relative_eq!(series_eval_at_zero(&d)[(0, 0)].re, q_factorial(4, q(qv)).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn over_differentiation_gives_zero() {
        let f = RadialSeries::scalar(&[c(1.0), c(2.0)]).unwrap();
        let d = q_derivative_series(&f, 3, q(0.5));
        assert_eq!(d.max_degree(), 0);
        assert_eq!(d.coeff(0)[(0, 0)], c(0.0));
    }

    #[test]
    fn rejects_ragged_series() {
        let bad = vec![DMatrix::zeros(2, 2), DMatrix::zeros(3, 3)];
        assert!(RadialSeries::new(bad).is_err());
        assert!(RadialSeries::new(vec![]).is_err());
        assert!(RadialSeries::new(vec![DMatrix::zeros(2, 3)]).is_err());
    }

    fn poly_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-2.0f64..2.0, 1..8)
    }

    fn eval_poly(c: &[f64], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
    }

    proptest! {
        #[test]
        fn inverse_pair_identity(frac in 0.0f64..=0.9, qi in 0usize..3) {
            let qv = [0.4, 0.7, 0.95][qi];
            let qq = q(qv);
            let x = frac / (1.0 - qv);
            let prod = e_q(c(x), qq).unwrap() * big_e_q(c(-x), qq).unwrap();
            prop_assert!((prod.re - 1.0).abs() < 1e-10, "x = {}, q = {}: {}", x, qv, prod.re);
        }

        #[test]
        fn jackson_linearity(a in poly_strategy(), b in poly_strategy(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0, qv in 0.2f64..0.95) {
            let qq = q(qv);
            let opts = JacksonOptions { tol: 1e-15, ..Default::default() };
            let ia = jackson_integral(|x| c(eval_poly(&a, x)), 1.5, qq, opts).unwrap();
            let ib = jackson_integral(|x| c(eval_poly(&b, x)), 1.5, qq, opts).unwrap();
            let iab = jackson_integral(|x| c(alpha * eval_poly(&a, x) + beta * eval_poly(&b, x)), 1.5, qq, opts).unwrap();
            prop_assert!((iab - (ia * alpha + ib * beta)).norm() < 1e-12 * (1.0 + iab.norm()));
        }

        #[test]
        fn jackson_monomial_rule(n in 0usize..10, a in 0.2f64..3.0, qv in 0.1f64..0.95) {
            let qq = q(qv);
            let got = jackson_integral(|x| c(x.powi(n as i32)), a, qq, JacksonOptions { tol: 1e-14, ..Default::default() }).unwrap();
            let want = a.powi(n as i32 + 1) / q_number(n + 1, qq);
            prop_assert!((got.re - want).abs() <= 1e-10 * want.max(1.0));
        }

        #[test]
        fn antiderivative_round_trip(coeffs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..12), qv in 0.1f64..=1.0) {
            let qq = q(qv);
            let cs: Vec<Complex64> = coeffs.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
            let f = RadialSeries::scalar(&cs).unwrap();
            let back = q_derivative_series(&q_antiderivative_series(&f, qq), 1, qq);
            prop_assert_eq!(back.max_degree(), f.max_degree());
            for k in 0..=f.max_degree() {
                prop_assert!((back.coeff(k)[(0, 0)] - f.coeff(k)[(0, 0)]).norm() <= 1e-12 * (1.0 + f.coeff(k)[(0, 0)].norm()));
            }
        }
    }
}
