//! Truncated Fock-space operators for the q-deformed oscillator.
//!
//! Matrices act on `span{|0>, ..., |n_max>}`. The annihilator carries
//! `<n-1|a|n> = sqrt([n])`; the creator is its conjugate transpose, so
//! `a a^dag - q a^dag a = 1` holds exactly except in the last row/column,
//! where the truncation removes `a^dag |n_max>`.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{max_abs_diff_block, max_abs};
use crate::qcalc::{q_number, DeformationParam};

/// Hermiticity tolerance on `max |rho - rho^dag|`.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Tolerance on `|Tr rho - 1|`.
pub const TRACE_TOL: f64 = 1e-10;
/// Smallest eigenvalue accepted as positive semidefinite.
pub const POSITIVITY_TOL: f64 = 1e-10;

/// Highest retained level `n_max`; the space has dimension `n_max + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct FockTruncation(usize);

impl FockTruncation {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max >= 1 {
            Ok(Self(n_max))
        } else {
            Err(Error::InvalidTruncation(n_max))
        }
    }

    /// Truncation with dimension `dim`.
    pub fn with_dim(dim: usize) -> Result<Self> {
        Self::new(dim.saturating_sub(1))
    }

    #[inline]
    pub fn n_max(self) -> usize {
        self.0
    }

    #[inline]
    pub fn dim(self) -> usize {
        self.0 + 1
    }
}

impl TryFrom<usize> for FockTruncation {
    type Error = Error;
    fn try_from(n: usize) -> Result<Self> {
        Self::new(n)
    }
}

impl From<FockTruncation> for usize {
    fn from(t: FockTruncation) -> usize {
        t.0
    }
}

/// Dense operator on the truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    entries: DMatrix<Complex64>,
    trunc: FockTruncation,
    q: DeformationParam,
}

impl FockOperator {
    pub fn new(entries: DMatrix<Complex64>, trunc: FockTruncation, q: DeformationParam) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                found: entries.ncols(),
            });
        }
        if entries.nrows() != trunc.dim() {
            return Err(Error::DimensionMismatch {
                expected: trunc.dim(),
                found: entries.nrows(),
            });
        }
        Ok(Self { entries, trunc, q })
    }

    pub fn zeros(trunc: FockTruncation, q: DeformationParam) -> Self {
        Self {
            entries: DMatrix::zeros(trunc.dim(), trunc.dim()),
            trunc,
            q,
        }
    }

    pub fn identity(trunc: FockTruncation, q: DeformationParam) -> Self {
        Self {
            entries: DMatrix::identity(trunc.dim(), trunc.dim()),
            trunc,
            q,
        }
    }

    /// The unit dyad `|n><m|`.
    pub fn dyad(n: usize, m: usize, trunc: FockTruncation, q: DeformationParam) -> Result<Self> {
        if n > trunc.n_max() || m > trunc.n_max() {
            return Err(Error::Domain(format!(
                "dyad |{n}><{m}| outside truncation n_max = {}",
                trunc.n_max()
            )));
        }
        let mut op = Self::zeros(trunc, q);
        op.entries[(n, m)] = Complex64::new(1.0, 0.0);
        Ok(op)
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.entries
    }

    pub fn trunc(&self) -> FockTruncation {
        self.trunc
    }

    pub fn q(&self) -> DeformationParam {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.trunc.dim()
    }

    /// Matrix element `<n|F|m>`.
    pub fn element(&self, n: usize, m: usize) -> Complex64 {
        self.entries[(n, m)]
    }

    pub fn adjoint(&self) -> Self {
        Self {
            entries: self.entries.adjoint(),
            ..*self
        }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            entries: &self.entries * c,
            ..*self
        }
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    pub fn powi(&self, k: usize) -> Self {
        let mut acc = Self::identity(self.trunc, self.q);
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    pub fn apply(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        &self.entries * v
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    /// `max |F - F^dag|`.
    pub fn hermiticity_violation(&self) -> f64 {
        max_abs(&(&self.entries - self.entries.adjoint()))
    }

    /// Largest entry modulus of `self - other` on the leading `k x k` block.
    pub fn max_diff_block(&self, other: &Self, k: usize) -> f64 {
        max_abs_diff_block(&self.entries, &other.entries, k, k)
    }

    pub fn max_diff(&self, other: &Self) -> f64 {
        self.max_diff_block(other, self.dim())
    }
}

macro_rules! binop {
    ($tr:ident, $method:ident, $op:tt) => {
        impl<'a> $tr<&'a FockOperator> for &'a FockOperator {
            type Output = FockOperator;
            fn $method(self, rhs: &'a FockOperator) -> FockOperator {
                assert_eq!(self.trunc, rhs.trunc, "operators act on different truncations");
                FockOperator {
                    entries: &self.entries $op &rhs.entries,
                    trunc: self.trunc,
                    q: self.q,
                }
            }
        }
    };
}

binop!(Mul, mul, *);
binop!(Add, add, +);
binop!(Sub, sub, -);

/// `a` with `<n-1|a|n> = sqrt([n])`.
pub fn build_annihilator(q: DeformationParam, trunc: FockTruncation) -> FockOperator {
    let mut op = FockOperator::zeros(trunc, q);
    for n in 1..=trunc.n_max() {
        op.entries[(n - 1, n)] = Complex64::new(q_number(n, q).sqrt(), 0.0);
    }
    op
}

/// `a^dag`, the conjugate transpose of [`build_annihilator`].
pub fn build_creator(q: DeformationParam, trunc: FockTruncation) -> FockOperator {
    build_annihilator(q, trunc).adjoint()
}

/// `N = diag(0, 1, ..., n_max)`. `N` does not depend on `q`; the parameter
/// only tags the operator so it composes with `a` and `a^dag`.
pub fn build_number(q: DeformationParam, trunc: FockTruncation) -> FockOperator {
    let mut op = FockOperator::zeros(trunc, q);
    for n in 0..=trunc.n_max() {
        op.entries[(n, n)] = Complex64::new(n as f64, 0.0);
    }
    op
}

/// Max-norm residuals of the three defining relations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationResiduals {
    /// `a a^dag - q a^dag a - 1`
    pub comm: f64,
    /// `[N, a] + a`
    pub n_a: f64,
    /// `[N, a^dag] - a^dag`
    pub n_adag: f64,
}

impl RelationResiduals {
    pub fn max(&self) -> f64 {
        self.comm.max(self.n_a).max(self.n_adag)
    }
}

/// Residuals on the interior block (levels `0..n_max-1`) and on the full matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgebraResiduals {
    pub interior: RelationResiduals,
    pub full: RelationResiduals,
}

pub fn algebra_residuals(q: DeformationParam, trunc: FockTruncation) -> AlgebraResiduals {
    let a = build_annihilator(q, trunc);
    let ad = build_creator(q, trunc);
    let n = build_number(q, trunc);
    let one = FockOperator::identity(trunc, q);
    let comm = &(&(&a * &ad) - &(&ad * &a).scale(Complex64::new(q.value(), 0.0))) - &one;
    let n_a = &n.commutator(&a) + &a;
    let n_adag = &n.commutator(&ad) - &ad;
    let zero = FockOperator::zeros(trunc, q);
    let block = |op: &FockOperator, k: usize| op.max_diff_block(&zero, k);
    let interior = trunc.n_max();
    let full = trunc.dim();
    AlgebraResiduals {
        interior: RelationResiduals {
            comm: block(&comm, interior),
            n_a: block(&n_a, interior),
            n_adag: block(&n_adag, interior),
        },
        full: RelationResiduals {
            comm: block(&comm, full),
            n_a: block(&n_a, full),
            n_adag: block(&n_adag, full),
        },
    }
}

/// Hermitian, unit-trace, positive semidefinite operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    op: FockOperator,
}

/// Outcome of the three density-matrix checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityDiagnostics {
    pub hermiticity_violation: f64,
    pub trace: f64,
    pub min_eigenvalue: f64,
}

impl DensityDiagnostics {
    pub fn of(m: &DMatrix<Complex64>) -> Self {
        let hermiticity_violation = max_abs(&(m - m.adjoint()));
        let trace = m.trace().re;
        // symmetrize so the eigen-solver sees an exactly hermitian input
        let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
        let min_eigenvalue = h
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        Self {
            hermiticity_violation,
            trace,
            min_eigenvalue,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.hermiticity_violation <= HERMITICITY_TOL) {
            return Err(Error::NotHermitian(self.hermiticity_violation));
        }
        if !((self.trace - 1.0).abs() <= TRACE_TOL) {
            return Err(Error::TraceNotUnit(self.trace));
        }
        if !(self.min_eigenvalue >= -POSITIVITY_TOL) {
            return Err(Error::NotPositive(self.min_eigenvalue));
        }
        Ok(())
    }
}

impl DensityMatrix {
    pub fn operator(&self) -> &FockOperator {
        &self.op
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        self.op.matrix()
    }

    /// Coefficient `rho(n, m) = <n|rho|m>`.
    pub fn coeff(&self, n: usize, m: usize) -> Complex64 {
        self.op.element(n, m)
    }

    pub fn trunc(&self) -> FockTruncation {
        self.op.trunc()
    }

    pub fn q(&self) -> DeformationParam {
        self.op.q()
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn diagnostics(&self) -> DensityDiagnostics {
        DensityDiagnostics::of(self.op.matrix())
    }

    /// Re-runs the construction checks.
    pub fn validate(&self) -> Result<()> {
        self.diagnostics().check()
    }

    /// `<psi|rho|psi> / <psi|psi>` for a pure state vector.
    pub fn fidelity_with_pure(&self, psi: &DVector<Complex64>) -> f64 {
        let norm = psi.norm_squared();
        (psi.adjoint() * self.op.matrix() * psi)[(0, 0)].re / norm
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&DensityJson::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: DensityJson = serde_json::from_str(s)?;
        raw.try_into()
    }
}

/// Wraps `coeffs` as a density matrix after checking hermiticity, unit
/// trace and positivity.
pub fn density_from_coeffs(
    coeffs: DMatrix<Complex64>,
    q: DeformationParam,
    trunc: FockTruncation,
) -> Result<DensityMatrix> {
    let op = FockOperator::new(coeffs, trunc, q)?;
    DensityDiagnostics::of(op.matrix()).check()?;
    Ok(DensityMatrix { op })
}

/// Wire form `{n_max, q, re, im}` with row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityJson {
    pub n_max: usize,
    pub q: f64,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&DensityMatrix> for DensityJson {
    fn from(rho: &DensityMatrix) -> Self {
        let (re, im) = split_rows(rho.matrix());
        Self {
            n_max: rho.trunc().n_max(),
            q: rho.q().value(),
            re,
            im,
        }
    }
}

impl TryFrom<DensityJson> for DensityMatrix {
    type Error = Error;
    fn try_from(raw: DensityJson) -> Result<Self> {
        let trunc = FockTruncation::new(raw.n_max)?;
        let q = DeformationParam::new(raw.q)?;
        let m = join_rows(&raw.re, &raw.im, trunc.dim())?;
        density_from_coeffs(m, q, trunc)
    }
}

/// Same wire form for a general operator, without the density checks.
pub fn operator_from_json(s: &str) -> Result<FockOperator> {
    let raw: DensityJson = serde_json::from_str(s)?;
    let trunc = FockTruncation::new(raw.n_max)?;
    let q = DeformationParam::new(raw.q)?;
    FockOperator::new(join_rows(&raw.re, &raw.im, trunc.dim())?, trunc, q)
}

pub fn operator_to_json(op: &FockOperator) -> Result<String> {
    let (re, im) = split_rows(op.matrix());
    Ok(serde_json::to_string(&DensityJson {
        n_max: op.trunc().n_max(),
        q: op.q().value(),
        re,
        im,
    })?)
}

fn split_rows(m: &DMatrix<Complex64>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let rows = |f: fn(&Complex64) -> f64| {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect())
            .collect()
    };
    (rows(|z| z.re), rows(|z| z.im))
}

fn join_rows(re: &[Vec<f64>], im: &[Vec<f64>], dim: usize) -> Result<DMatrix<Complex64>> {
    let check = |rows: &[Vec<f64>]| -> Result<()> {
        if rows.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: rows.len(),
            });
        }
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
        }
        Ok(())
    };
    check(re)?;
    check(im)?;
    Ok(DMatrix::from_fn(dim, dim, |i, j| Complex64::new(re[i][j], im[i][j])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn q(v: f64) -> DeformationParam {
        DeformationParam::new(v).unwrap()
    }

    fn t(n: usize) -> FockTruncation {
        FockTruncation::new(n).unwrap()
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn truncation_needs_one_excited_level() {
        assert_eq!(FockTruncation::new(0), Err(Error::InvalidTruncation(0)));
        assert_eq!(t(3).dim(), 4);
    }

    #[test]
    fn annihilator_subdiagonal() {
        let a = build_annihilator(q(1.0), t(2));
        assert_eq!(a.element(0, 1), c(1.0));
        assert_relative_eq!(a.element(1, 2).re, 2f64.sqrt(), epsilon = 1e-15);

        let a = build_annihilator(q(0.5), t(2));
        assert_eq!(a.element(0, 1), c(1.0));
        assert_relative_eq!(a.element(1, 2).re, 1.5f64.sqrt(), epsilon = 1e-15);
        let nonzero = a.matrix().iter().filter(|z| z.norm() > 0.0).count();
        assert_eq!(nonzero, 2);
    }

    #[test]
    fn annihilator_kills_vacuum() {
        let a = build_annihilator(q(0.3), t(6));
        let mut vac = DVector::zeros(7);
        vac[0] = c(1.0);
        assert!(a.apply(&vac).iter().all(|z| *z == c(0.0)));
    }

    #[test]
    fn creator_is_exact_adjoint() {
        for &qv in &[0.3, 0.5, 0.9, 1.0] {
            let a = build_annihilator(q(qv), t(9));
            let ad = build_creator(q(qv), t(9));
            assert_eq!(ad.matrix(), &a.matrix().adjoint());
        }
    }

    #[test]
    fn number_operator_and_commutator() {
        let n = build_number(q(0.5), t(5));
        let mut ket3 = DVector::zeros(6);
        ket3[3] = c(1.0);
        assert_eq!(n.apply(&ket3), &ket3 * c(3.0));

        let a = build_annihilator(q(0.5), t(5));
        let comm = n.commutator(&a);
        for level in 0..5 {
            let mut ket = DVector::zeros(6);
            ket[level] = c(1.0);
            let lhs = comm.apply(&ket);
            let rhs = -a.apply(&ket);
            assert!((lhs - rhs).norm() < 1e-14);
        }
    }

    #[test]
    fn algebra_interior_is_exact() {
        for &qv in &[0.3, 0.5, 0.9, 1.0] {
            for &n in &[5, 10, 20] {
                let r = algebra_residuals(q(qv), t(n));
                assert!(r.interior.max() < 1e-12, "q = {qv}, n_max = {n}: {:?}", r.interior);
            }
        }
    }

    #[test]
    fn corner_residual_matches_hand_value() {
        for &qv in &[0.5, 1.0] {
            let qq = q(qv);
            let r = algebra_residuals(qq, t(10));
            // corner entry: (a a^dag) = 0, (a^dag a) = [n_max], so -(1 + q [n_max])
            let oracle = 1.0 + qv * q_number(10, qq);
            assert_relative_eq!(r.full.comm, oracle, epsilon = 1e-12);
            assert!(r.full.n_a < 1e-12 && r.full.n_adag < 1e-12);
        }
    }

    #[test]
    fn number_compositions() {
        let qq = q(0.6);
        let tr = t(8);
        let a = build_annihilator(qq, tr);
        let ad = build_creator(qq, tr);
        let ada = &ad * &a;
        let aad = &a * &ad;
        for n in 0..8 {
            assert_relative_eq!(ada.element(n, n).re, q_number(n, qq), epsilon = 1e-12);
            assert_relative_eq!(aad.element(n, n).re, q_number(n + 1, qq), epsilon = 1e-12);
        }
    }

    #[test]
    fn density_examples() {
        let pure = density_from_coeffs(
            DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0), c(0.0), c(0.0)])),
            q(0.5),
            t(2),
        )
        .unwrap();
        assert_eq!(pure.coeff(0, 0), c(1.0));

        let bad = DMatrix::from_row_slice(2, 2, &[c(0.5), c(0.6), c(0.6), c(0.5)]);
        match density_from_coeffs(bad, q(0.5), t(1)) {
            Err(Error::NotPositive(ev)) => assert_relative_eq!(ev, -0.1, epsilon = 1e-12),
            other => panic!("expected positivity error, got {other:?}"),
        }

        let lambda: f64 = 0.4;
        let z = 1.0 + lambda + lambda * lambda;
        let thermal = DMatrix::from_diagonal(&DVector::from_vec(vec![
            c(1.0 / z),
            c(lambda / z),
            c(lambda * lambda / z),
        ]));
        let rho = density_from_coeffs(thermal, q(0.5), t(2)).unwrap();
        assert_relative_eq!(rho.diagnostics().trace, 1.0, epsilon = 1e-15);
        rho.validate().unwrap();
    }

    #[test]
    fn density_error_kinds_are_distinct() {
        let nonherm = DMatrix::from_row_slice(2, 2, &[c(0.5), c(0.1), c(0.2), c(0.5)]);
        assert!(matches!(density_from_coeffs(nonherm, q(0.5), t(1)), Err(Error::NotHermitian(_))));
        let trace = DMatrix::from_row_slice(2, 2, &[c(0.5), c(0.0), c(0.0), c(0.6)]);
        assert!(matches!(density_from_coeffs(trace, q(0.5), t(1)), Err(Error::TraceNotUnit(_))));
        let dim = DMatrix::<Complex64>::identity(3, 3);
        assert!(matches!(density_from_coeffs(dim, q(0.5), t(1)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn json_rejects_ragged_rows() {
        let s = r#"{"n_max":1,"q":0.5,"re":[[1.0,0.0],[0.0]],"im":[[0.0,0.0],[0.0,0.0]]}"#;
        assert!(DensityMatrix::from_json(s).is_err());
        let s = r#"{"n_max":1,"q":1.5,"re":[[1.0,0.0],[0.0,0.0]],"im":[[0.0,0.0],[0.0,0.0]]}"#;
        assert!(matches!(DensityMatrix::from_json(s), Err(Error::InvalidDeformation(_))));
    }

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(
            entries in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 9),
            qv in 0.01f64..=1.0,
        ) {
            let a = DMatrix::from_fn(3, 3, |i, j| {
                let (re, im) = entries[3 * i + j];
                Complex64::new(re, im)
            });
            let mut m = &a * a.adjoint();
            let tr = m.trace();
            m /= tr;
            // force exact hermiticity after the division
            let m = DMatrix::from_fn(3, 3, |i, j| if i <= j { m[(i, j)] } else { m[(j, i)].conj() });
            let rho = density_from_coeffs(m, q(qv), t(2)).unwrap();
            let back = DensityMatrix::from_json(&rho.to_json().unwrap()).unwrap();
            for (x, y) in rho.matrix().iter().zip(back.matrix().iter()) {
                prop_assert_eq!(x.re.to_bits(), y.re.to_bits());
                prop_assert_eq!(x.im.to_bits(), y.im.to_bits());
            }
            prop_assert_eq!(back.q(), rho.q());
        }
    }
}
