//! Coherent-state matrix-element functions and the reproducing kernels
//! `K(z, xi) = (1/pi) e_q(|xi|^2)^{-1} e_q(conj(xi) z)` and its hermitized
//! form `K~(xi, z) = (1/pi) (e_q(|xi|^2) e_q(|z|^2))^{-1/2} e_q(conj(xi) z)`.
//!
//! All integrals over the label plane use the calibrated stripped measure of
//! [`QuadratureGrid`]; the factor `1/e_q(|xi|^2)` that every integrand
//! carries is absorbed into it.

use std::f64::consts::FRAC_1_PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coherent::{check_label, unnormalized_amplitudes, QuadratureGrid};
use crate::error::{Error, Result};
use crate::fock::{DensityMatrix, FockTruncation};
use crate::qcalc::{e_q, inverse_e_q, DeformationParam};

/// `rho(z', z) = sum rho(m,n) conj(z')^m z^n / sqrt([m]! [n]!)`.
pub fn rho_function(rho: &DensityMatrix, zp: Complex64, z: Complex64) -> Result<Complex64> {
    check_label(zp, rho.q())?;
    check_label(z, rho.q())?;
    rho_polynomial(rho, zp, z)
}

/// The polynomial itself, defined for any labels; grid nodes on the
/// outermost ring sit on the disk boundary.
fn rho_polynomial(rho: &DensityMatrix, zp: Complex64, z: Complex64) -> Result<Complex64> {
    let q = rho.q();
    let bra = unnormalized_amplitudes(zp, q, rho.dim())?;
    let ket = unnormalized_amplitudes(z, q, rho.dim())?;
    Ok((bra.adjoint() * rho.matrix() * ket)[(0, 0)])
}

/// `rho~(z', z) = (e_q(|z|^2) e_q(|z'|^2))^{-1/2} rho(z', z)`.
pub fn rho_tilde(rho: &DensityMatrix, zp: Complex64, z: Complex64) -> Result<Complex64> {
    let q = rho.q();
    Ok(rho_function(rho, zp, z)? * pair_damping(z, zp, q)?)
}

/// `(e_q(|a|^2) e_q(|b|^2))^{-1/2}`.
fn pair_damping(a: Complex64, b: Complex64, q: DeformationParam) -> Result<f64> {
    Ok((inverse_e_q(a.norm_sqr(), q)? * inverse_e_q(b.norm_sqr(), q)?).sqrt())
}

pub fn kernel_k(z: Complex64, xi: Complex64, q: DeformationParam) -> Result<Complex64> {
    check_label(z, q)?;
    check_label(xi, q)?;
    Ok(e_q(xi.conj() * z, q)? * (inverse_e_q(xi.norm_sqr(), q)? * FRAC_1_PI))
}

pub fn kernel_ktilde(xi: Complex64, z: Complex64, q: DeformationParam) -> Result<Complex64> {
    check_label(z, q)?;
    check_label(xi, q)?;
    // e_q of the squared moduli, evaluated through the same complex path as
    // the numerator so that K~(z, z) cancels to the last bit.
    let ex = e_q(Complex64::new(xi.norm_sqr(), 0.0), q)?.re;
    let ez = e_q(Complex64::new(z.norm_sqr(), 0.0), q)?.re;
    Ok(e_q(xi.conj() * z, q)? * (FRAC_1_PI / (ex * ez).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelVariant {
    PlainK,
    TildeK,
}

/// Kernel choice bound to a quadrature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelEvaluator {
    q: DeformationParam,
    trunc: FockTruncation,
    grid: QuadratureGrid,
    variant: KernelVariant,
}

/// Both sides of an integral identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub residual: f64,
}

impl CheckOutcome {
    fn new(lhs: Complex64, rhs: Complex64) -> Self {
        Self {
            lhs,
            rhs,
            residual: (lhs - rhs).norm(),
        }
    }
}

impl KernelEvaluator {
    pub fn new(grid: QuadratureGrid, variant: KernelVariant) -> Self {
        Self {
            q: grid.q(),
            trunc: grid.trunc(),
            grid,
            variant,
        }
    }

    pub fn q(&self) -> DeformationParam {
        self.q
    }

    pub fn trunc(&self) -> FockTruncation {
        self.trunc
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn variant(&self) -> KernelVariant {
        self.variant
    }

    /// Same kernel on the grid with doubled radial and angular counts.
    pub fn refined(&self) -> Result<Self> {
        Ok(Self::new(self.grid.refined()?, self.variant))
    }

    pub fn kernel(&self, a: Complex64, b: Complex64) -> Result<Complex64> {
        match self.variant {
            KernelVariant::PlainK => kernel_k(a, b, self.q),
            KernelVariant::TildeK => kernel_ktilde(a, b, self.q),
        }
    }

    /// `(1/pi) int dnu(xi) e_q(conj(xi) a) g(xi)` with `dnu = d^2xi / e_q(|xi|^2)`.
    fn project<G>(&self, a: Complex64, mut g: G) -> Result<Complex64>
    where
        G: FnMut(Complex64) -> Result<Complex64>,
    {
        let q = self.q;
        let v = self.grid.integrate_stripped(|xi| Ok(e_q(xi.conj() * a, q)? * g(xi)?))?;
        Ok(v * FRAC_1_PI)
    }
}

/// Plain: `int d^2xi K(z, xi) rho(z', xi)` against `rho(z', z)`.
/// Tilde: `int d^2xi K~(xi, z) rho~(z', xi)` against `rho~(z', z)`.
pub fn reproducing_check(
    rho: &DensityMatrix,
    zp: Complex64,
    z: Complex64,
    ev: &KernelEvaluator,
) -> Result<CheckOutcome> {
    ev.grid.ensure_compatible(rho.q(), rho.trunc())?;
    check_label(zp, ev.q)?;
    check_label(z, ev.q)?;
    let integral = ev.project(z, |xi| rho_polynomial(rho, zp, xi))?;
    Ok(match ev.variant {
        KernelVariant::PlainK => CheckOutcome::new(integral, rho_function(rho, zp, z)?),
        KernelVariant::TildeK => {
            CheckOutcome::new(integral * pair_damping(z, zp, ev.q)?, rho_tilde(rho, zp, z)?)
        }
    })
}

/// `int d^2xi K(z, xi) K(xi, z')` against `K(z, z')`, for either kernel.
pub fn semigroup_check(z: Complex64, zp: Complex64, ev: &KernelEvaluator) -> Result<CheckOutcome> {
    check_label(zp, ev.q)?;
    check_label(z, ev.q)?;
    let q = ev.q;
    let lhs = match ev.variant {
        KernelVariant::PlainK => {
            let tail = inverse_e_q(zp.norm_sqr(), q)? * FRAC_1_PI;
            ev.project(z, |xi| Ok(e_q(zp.conj() * xi, q)? * tail))?
        }
        KernelVariant::TildeK => {
            // K~(z, xi) = (1/pi) (..)^{-1/2} e_q(conj(z) xi); the two
            // e_q(|xi|^2)^{-1/2} factors combine into the stripped measure.
            let damping = pair_damping(z, zp, q)? * FRAC_1_PI;
            let v = ev
                .grid
                .integrate_stripped(|xi| Ok(e_q(z.conj() * xi, q)? * e_q(xi.conj() * zp, q)?))?;
            v * (FRAC_1_PI * damping)
        }
    };
    let rhs = match ev.variant {
        KernelVariant::PlainK => kernel_k(z, zp, q)?,
        KernelVariant::TildeK => kernel_ktilde(z, zp, q)?,
    };
    Ok(CheckOutcome::new(lhs, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HermiticityReport {
    pub max_violation_k: f64,
    pub max_violation_ktilde: f64,
}

/// `max |conj(K(z, xi)) - K(xi, z)|` over the sample pairs, for both kernels.
pub fn hermiticity_check(ev: &KernelEvaluator, samples: &[(Complex64, Complex64)]) -> Result<HermiticityReport> {
    let q = ev.q;
    let mut report = HermiticityReport {
        max_violation_k: 0.0,
        max_violation_ktilde: 0.0,
    };
    for &(z, xi) in samples {
        let k = (kernel_k(z, xi, q)?.conj() - kernel_k(xi, z, q)?).norm();
        let kt = (kernel_ktilde(z, xi, q)?.conj() - kernel_ktilde(xi, z, q)?).norm();
        report.max_violation_k = report.max_violation_k.max(k);
        report.max_violation_ktilde = report.max_violation_ktilde.max(kt);
    }
    Ok(report)
}

/// `|z|^2` bound for sample labels: a quarter of the convergence radius,
/// or 1 in the classical case.
pub fn safe_modulus_sqr(q: DeformationParam) -> f64 {
    q.radius().map_or(1.0, |r| 0.25 * r)
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

/// `count` labels from a 2-D Halton sequence with a seeded random shift,
/// mapped area-uniformly onto the disk `|z|^2 <= safe_modulus_sqr(q)`.
pub fn sample_points(q: DeformationParam, count: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: (f64, f64) = (rng.gen(), rng.gen());
    let bound = safe_modulus_sqr(q);
    (1..=count as u64)
        .map(|i| {
            let u = (radical_inverse(i, 2) + shift.0).fract();
            let v = (radical_inverse(i, 3) + shift.1).fract();
            Complex64::from_polar((u * bound).sqrt(), 2.0 * std::f64::consts::PI * v)
        })
        .collect()
}

/// Consecutive pairs of [`sample_points`].
pub fn sample_pairs(q: DeformationParam, count: usize, seed: u64) -> Vec<(Complex64, Complex64)> {
    let pts = sample_points(q, 2 * count, seed);
    pts.chunks_exact(2).map(|p| (p[0], p[1])).collect()
}

/// Smallest eigenvalue of the hermitian matrix `[K~(z_i, z_j)]`.
pub fn gram_min_eigenvalue(points: &[Complex64], q: DeformationParam) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Domain("Gram matrix of an empty point set".into()));
    }
    let n = points.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            g[(i, j)] = kernel_ktilde(points[i], points[j], q)?;
        }
    }
    Ok(g.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherent::{coherent_state, GridSpec};
    use crate::fock::density_from_coeffs;
    use crate::verify::random_density;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn q(v: f64) -> DeformationParam {
        DeformationParam::new(v).unwrap()
    }

    fn t(n: usize) -> FockTruncation {
        FockTruncation::new(n).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn vacuum(qq: DeformationParam, tr: FockTruncation) -> DensityMatrix {
        let mut m = DMatrix::zeros(tr.dim(), tr.dim());
        m[(0, 0)] = c(1.0, 0.0);
        density_from_coeffs(m, qq, tr).unwrap()
    }

    fn evaluator(qv: f64, n_max: usize, variant: KernelVariant) -> KernelEvaluator {
        let grid = QuadratureGrid::new(q(qv), t(n_max), GridSpec::new(200, 64)).unwrap();
        KernelEvaluator::new(grid, variant)
    }

    #[test]
    fn rho_function_examples() {
        let (qq, tr) = (q(0.5), t(4));
        let vac = vacuum(qq, tr);
        assert_eq!(rho_function(&vac, c(0.3, 0.2), c(-0.5, 0.1)).unwrap(), c(1.0, 0.0));
        let mut m = DMatrix::zeros(5, 5);
        m[(1, 1)] = c(1.0, 0.0);
        let one = density_from_coeffs(m, qq, tr).unwrap();
        let (zp, z) = (c(0.3, 0.2), c(-0.5, 0.1));
        assert!((rho_function(&one, zp, z).unwrap() - zp.conj() * z).norm() < 1e-15);
        assert!(rho_function(&one, c(1.5, 0.0), z).is_err());
    }

    #[test]
    fn kernel_examples() {
        let qq = q(0.5);
        for &z in &[c(0.0, 0.0), c(0.4, -0.7), c(1.0, 0.3)] {
            assert_relative_eq!(kernel_k(z, c(0.0, 0.0), qq).unwrap().re, FRAC_1_PI, max_relative = 1e-15);
        }
        let xi = c(0.6, 0.2);
        let expected = FRAC_1_PI * inverse_e_q(xi.norm_sqr(), qq).unwrap();
        assert_relative_eq!(kernel_k(c(0.0, 0.0), xi, qq).unwrap().re, expected, max_relative = 1e-15);
        let (z, xi) = (c(0.3, -0.4), c(-0.2, 0.5));
        let classical = FRAC_1_PI * (xi.conj() * z - xi.norm_sqr()).exp();
        assert!((kernel_k(z, xi, q(1.0)).unwrap() - classical).norm() < 1e-15);
        assert_eq!(kernel_ktilde(c(0.0, 0.0), c(0.0, 0.0), qq).unwrap(), c(FRAC_1_PI, 0.0));
    }

    #[test]
    fn rho_function_agrees_with_matrix_elements() {
        let (qq, tr) = (q(0.6), t(10));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_density(4, tr, qq, &mut rng).unwrap();
        for (zp, z) in sample_pairs(qq, 16, 5) {
            let bra = coherent_state(zp, qq, tr).unwrap();
            let ket = coherent_state(z, qq, tr).unwrap();
            let elem = (bra.amplitudes().adjoint() * rho.matrix() * ket.amplitudes())[(0, 0)];
            let scale = (crate::qcalc::e_q_real(z.norm_sqr(), qq).unwrap()
                * crate::qcalc::e_q_real(zp.norm_sqr(), qq).unwrap())
            .sqrt();
            assert!((rho_function(&rho, zp, z).unwrap() - elem * scale).norm() < 1e-9);
            assert!((rho_tilde(&rho, zp, z).unwrap() - elem).norm() < 1e-12);
        }
    }

    #[test]
    fn vacuum_is_reproduced() {
        let ev = evaluator(0.5, 8, KernelVariant::PlainK);
        let out = reproducing_check(&vacuum(q(0.5), t(8)), c(0.2, 0.1), c(-0.3, 0.2), &ev).unwrap();
        assert!((out.rhs - c(1.0, 0.0)).norm() == 0.0);
        assert!(out.residual < 1e-8, "{:e}", out.residual);
    }

    #[test]
    fn random_state_is_reproduced_by_both_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(qv, variant) in &[
            (0.6, KernelVariant::PlainK),
            (0.6, KernelVariant::TildeK),
            (1.0, KernelVariant::PlainK),
            (1.0, KernelVariant::TildeK),
        ] {
            let ev = evaluator(qv, 8, variant);
            let rho = random_density(4, t(8), q(qv), &mut rng).unwrap();
            for (zp, z) in sample_pairs(q(qv), 4, 9) {
                let out = reproducing_check(&rho, zp, z, &ev).unwrap();
                assert!(out.residual < 1e-6, "q={qv} {variant:?}: {:e}", out.residual);
            }
        }
    }

    #[test]
    fn semigroup_holds() {
        for &(qv, variant) in &[
            (0.7, KernelVariant::PlainK),
            (0.7, KernelVariant::TildeK),
            (1.0, KernelVariant::PlainK),
        ] {
            let ev = evaluator(qv, 8, variant);
            let zero = semigroup_check(c(0.0, 0.0), c(0.0, 0.0), &ev).unwrap();
            assert_relative_eq!(zero.rhs.re, FRAC_1_PI, max_relative = 1e-15);
            assert!(zero.residual < 1e-8);
            for (z, zp) in sample_pairs(q(qv), 4, 21) {
                let out = semigroup_check(z, zp, &ev).unwrap();
                assert!(out.residual < 1e-6, "q={qv} {variant:?}: {:e}", out.residual);
            }
        }
    }

    #[test]
    fn hermiticity_dichotomy() {
        let ev = evaluator(0.5, 6, KernelVariant::PlainK);
        let same_modulus = vec![(c(0.3, 0.4), c(0.5, 0.0)), (c(0.0, 0.7), c(-0.7, 0.0))];
        let rep = hermiticity_check(&ev, &same_modulus).unwrap();
        assert!(rep.max_violation_k < 1e-15);
        let rep = hermiticity_check(&ev, &[(c(0.5, 0.0), c(0.1, 0.0))]).unwrap();
        // (1/pi) |E_q(-0.01) - E_q(-0.25)| e_q(0.05) at q = 0.5
        let oracle = FRAC_1_PI
            * (inverse_e_q(0.01, q(0.5)).unwrap() - inverse_e_q(0.25, q(0.5)).unwrap()).abs()
            * crate::qcalc::e_q_real(0.05, q(0.5)).unwrap();
        assert_relative_eq!(rep.max_violation_k, oracle, max_relative = 1e-12);
        assert!(rep.max_violation_k > 1e-3);
        assert!(rep.max_violation_ktilde < 1e-14);
    }

    #[test]
    fn sample_points_are_seeded_and_in_disk() {
        let qq = q(0.7);
        let a = sample_points(qq, 32, 42);
        assert_eq!(a, sample_points(qq, 32, 42));
        assert_ne!(a, sample_points(qq, 32, 43));
        assert!(a.iter().all(|z| z.norm_sqr() <= safe_modulus_sqr(qq)));
    }

    #[test]
    fn gram_matrices_are_positive() {
        for &qv in &[0.3, 0.7, 1.0] {
            let pts = sample_points(q(qv), 8, 1);
            assert!(gram_min_eigenvalue(&pts, q(qv)).unwrap() > -1e-10);
        }
    }

    proptest! {
        #[test]
        fn ktilde_diagonal_and_symmetry(qv in 0.2f64..=0.95, u in 0.0f64..1.0, th in 0.0f64..6.3,
                                        u2 in 0.0f64..1.0, th2 in 0.0f64..6.3) {
            let qq = q(qv);
            let bound = safe_modulus_sqr(qq) * 3.0;
            let z = Complex64::from_polar((u * bound).sqrt(), th);
            let xi = Complex64::from_polar((u2 * bound).sqrt(), th2);
            let d = kernel_ktilde(z, z, qq).unwrap();
            prop_assert!((d - c(FRAC_1_PI, 0.0)).norm() < 1e-14);
            prop_assert!((kernel_ktilde(z, xi, qq).unwrap().conj() - kernel_ktilde(xi, z, qq).unwrap()).norm() < 1e-12);
        }

        #[test]
        fn rho_function_is_polynomial(seed in 0u64..1000, a in -0.5f64..0.5, b in -0.5f64..0.5) {
            let (qq, tr) = (q(0.5), t(4));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rho = random_density(5, tr, qq, &mut rng).unwrap();
            let (zp, z) = (c(a, b), c(b, -a));
            let mut direct = Complex64::new(0.0, 0.0);
            for m in 0..5 {
                for n in 0..5 {
                    let norm = (crate::qcalc::q_factorial(m, qq).unwrap() * crate::qcalc::q_factorial(n, qq).unwrap()).sqrt();
                    direct += rho.coeff(m, n) * zp.conj().powu(m as u32) * z.powu(n as u32) / norm;
                }
            }
            prop_assert!((rho_function(&rho, zp, z).unwrap() - direct).norm() < 1e-12);
        }
    }
}
