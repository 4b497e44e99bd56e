//! q-coherent states `|z> = e_q(|z|^2)^{-1/2} sum z^n/sqrt([n]!) |n>`.

pub mod grid;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockOperator, FockTruncation};
use crate::numeric::max_abs_diff_block;
use crate::qcalc::{e_q, inverse_e_q, q_factorials, DeformationParam};

pub use grid::{
    calibrate_measure, GridNode, GridParams, GridSpec, MeasureCalibration, MeasureCandidate,
    QuadratureGrid, UpperLimit, WeightForm,
};

/// Rejects labels with `|z|^2 >= 1/(1-q)`.
pub fn check_label(z: Complex64, q: DeformationParam) -> Result<()> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::Domain(format!("non-finite coherent label {z}")));
    }
    if let Some(r) = q.radius() {
        if z.norm_sqr() >= r {
            return Err(Error::Domain(format!(
                "|z|^2 = {} outside the convergence disk |z|^2 < {r}",
                z.norm_sqr()
            )));
        }
    }
    Ok(())
}

/// Unnormalized amplitudes `z^n / sqrt([n]!)`, `n = 0..dim`.
pub fn unnormalized_amplitudes(z: Complex64, q: DeformationParam, dim: usize) -> Result<DVector<Complex64>> {
    let f = q_factorials(dim - 1, q)?;
    let mut out = DVector::zeros(dim);
    let mut zn = Complex64::new(1.0, 0.0);
    for n in 0..dim {
        out[n] = zn / f[n].sqrt();
        zn *= z;
    }
    Ok(out)
}

/// Truncated q-coherent state.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherentState {
    z: Complex64,
    q: DeformationParam,
    trunc: FockTruncation,
    amps: DVector<Complex64>,
    tail_mass: f64,
}

impl CoherentState {
    pub fn z(&self) -> Complex64 {
        self.z
    }

    pub fn q(&self) -> DeformationParam {
        self.q
    }

    pub fn trunc(&self) -> FockTruncation {
        self.trunc
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.norm_squared()
    }

    /// `1 - ||amps||^2`: probability beyond `n_max`.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// `|z| |<n_max|z>|`, the exact eigen-residual of the truncated state.
    pub fn truncation_bound(&self) -> f64 {
        self.z.norm() * self.amps[self.trunc.n_max()].norm()
    }
}

pub fn coherent_state(z: Complex64, q: DeformationParam, trunc: FockTruncation) -> Result<CoherentState> {
    check_label(z, q)?;
    let s = z.norm_sqr();
    let norm = inverse_e_q(s, q)?.sqrt();
    let amps = unnormalized_amplitudes(z, q, trunc.dim())? * Complex64::new(norm, 0.0);
    let tail_mass = 1.0 - amps.norm_squared();
    Ok(CoherentState {
        z,
        q,
        trunc,
        amps,
        tail_mass,
    })
}

/// `<z|z'> = (e_q(|z|^2) e_q(|z'|^2))^{-1/2} e_q(conj(z) z')`.
pub fn overlap(z: Complex64, zp: Complex64, q: DeformationParam) -> Result<Complex64> {
    check_label(z, q)?;
    check_label(zp, q)?;
    let inv = (inverse_e_q(z.norm_sqr(), q)? * inverse_e_q(zp.norm_sqr(), q)?).sqrt();
    Ok(e_q(z.conj() * zp, q)? * inv)
}

/// `||a amps - z amps||_2`.
pub fn eigen_residual(state: &CoherentState, a: &FockOperator) -> Result<f64> {
    if a.dim() != state.amps.len() {
        return Err(Error::DimensionMismatch {
            expected: state.amps.len(),
            found: a.dim(),
        });
    }
    if a.q() != state.q {
        return Err(Error::Domain(format!(
            "annihilator built for q = {}, state for q = {}",
            a.q(),
            state.q
        )));
    }
    Ok((a.apply(&state.amps) - &state.amps * state.z).norm())
}

/// Rank-one projector `amps amps^dag`.
pub fn projector(state: &CoherentState) -> FockOperator {
    let m = &state.amps * state.amps.adjoint();
    FockOperator::new(m, state.trunc, state.q).expect("projector dimension matches truncation")
}

/// Discretized `(1/pi) int d^2z |z><z|` and its distance from the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionOfUnity {
    pub matrix: FockOperator,
    /// Max-norm deviation over levels `0..=n_max - guard_band`.
    pub deviation: f64,
    pub full_deviation: f64,
    pub max_off_diagonal: f64,
    pub guard_band: usize,
}

/// Summary suitable for reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnityDeviation {
    pub deviation: f64,
    pub full_deviation: f64,
    pub max_off_diagonal: f64,
    pub guard_band: usize,
}

impl ResolutionOfUnity {
    pub fn summary(&self) -> UnityDeviation {
        UnityDeviation {
            deviation: self.deviation,
            full_deviation: self.full_deviation,
            max_off_diagonal: self.max_off_diagonal,
            guard_band: self.guard_band,
        }
    }
}

pub fn resolution_of_unity(
    q: DeformationParam,
    trunc: FockTruncation,
    grid: &QuadratureGrid,
) -> Result<ResolutionOfUnity> {
    grid.ensure_compatible(q, trunc)?;
    let dim = trunc.dim();
    let inv_pi = Complex64::new(std::f64::consts::FRAC_1_PI, 0.0);
    // |z><z| e_q(|z|^2) has entries z^n conj(z)^m / sqrt([n]![m]!)
    let m = grid.integrate_stripped_matrix(dim, |z, buf| {
        let v = unnormalized_amplitudes(z, q, dim)?;
        for j in 0..dim {
            for i in 0..dim {
                buf[(i, j)] = v[i] * v[j].conj() * inv_pi;
            }
        }
        Ok(())
    })?;
    let identity = DMatrix::identity(dim, dim);
    let guard_band = grid.guard_band().min(trunc.n_max());
    let interior = dim - guard_band;
    let deviation = max_abs_diff_block(&m, &identity, interior, interior);
    let full_deviation = max_abs_diff_block(&m, &identity, dim, dim);
    let mut max_off_diagonal = 0.0f64;
    for i in 0..dim {
        for j in 0..dim {
            if i != j {
                max_off_diagonal = max_off_diagonal.max(m[(i, j)].norm());
            }
        }
    }
    Ok(ResolutionOfUnity {
        matrix: FockOperator::new(m, trunc, q)?,
        deviation,
        full_deviation,
        max_off_diagonal,
        guard_band,
    })
}
