//! Dyad extraction by Jackson derivatives, the diagonal representation of a
//! density matrix, P-function maps, the q-Poisson distribution and
//! normal-ordering coefficients.
//!
//! Normal-ordering tables are indexed `C[p][s]` for the operator
//! `(a^dag)^p a^s`; the second index is called `s` so that it never clashes
//! with the deformation parameter `q`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coherent::{check_label, unnormalized_amplitudes, QuadratureGrid};
use crate::error::{Error, Result};
use crate::fock::{density_from_coeffs, DensityMatrix, FockOperator, FockTruncation};
use crate::numeric::{CompensatedSum, MatrixAccumulator};
use crate::qcalc::{
    inverse_e_q, q_derivative_series, q_factorial, q_factorials, q_number, series_eval_at_zero, DeformationParam,
    RadialSeries,
};

/// Tolerance on the total mass of a P-function.
pub const PFUNCTION_MASS_TOL: f64 = 1e-8;
/// Entries of `rho` at or below this modulus produce no diagonal term.
pub const DEFAULT_TERM_THRESHOLD: f64 = 1e-15;

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Angular projection `(1/2pi) int dtheta e^{i l theta} e_q(r^2) |z><z|` at
/// `z = r e^{i theta}`, as a power series in `r`:
/// `sum_{m - n = l} r^{n+m} / sqrt([n]! [m]!) |n><m|`.
pub fn theta_projected_series(ell: i64, q: DeformationParam, trunc: FockTruncation) -> Result<RadialSeries> {
    let n_max = trunc.n_max();
    if ell.unsigned_abs() as usize > n_max {
        return Err(Error::Domain(format!("Fourier index {ell} exceeds n_max = {n_max}")));
    }
    let fact = q_factorials(n_max, q)?;
    let mut series = RadialSeries::zero(trunc.dim(), 2 * n_max);
    for n in 0..=n_max {
        let m = n as i64 + ell;
        if m < 0 || m as usize > n_max {
            continue;
        }
        let m = m as usize;
        series.coeff_mut(n + m)[(n, m)] = real(1.0 / (fact[n] * fact[m]).sqrt());
    }
    Ok(series)
}

/// `|n><m|` recovered from the angular projection with Fourier index
/// `m - n`, differentiated `n + m` times at `r = 0` and rescaled by
/// `sqrt([n]! [m]!) / [n+m]!`.
pub fn fock_dyad(n: usize, m: usize, q: DeformationParam, trunc: FockTruncation) -> Result<FockOperator> {
    let series = theta_projected_series(m as i64 - n as i64, q, trunc)?;
    if n > trunc.n_max() || m > trunc.n_max() {
        return Err(Error::Domain(format!(
            "dyad |{n}><{m}| outside truncation n_max = {}",
            trunc.n_max()
        )));
    }
    let scale = (q_factorial(n, q)? * q_factorial(m, q)?).sqrt() / q_factorial(n + m, q)?;
    extract(&series, n + m, scale, q, trunc)
}

fn extract(
    series: &RadialSeries,
    order: usize,
    scale: f64,
    q: DeformationParam,
    trunc: FockTruncation,
) -> Result<FockOperator> {
    let derived = q_derivative_series(series, order, q);
    FockOperator::new(series_eval_at_zero(&derived) * real(scale), trunc, q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagonalTerm {
    pub n: usize,
    pub m: usize,
    /// `rho(n,m) sqrt([n]! [m]!) / [n+m]!`
    pub coefficient: Complex64,
    /// Number of Jackson derivatives, `n + m`.
    pub derivative_order: usize,
    /// Angular Fourier index, `m - n`.
    pub fourier_index: i64,
}

/// `rho` written as a sum of derivative functionals of the angular
/// projections of `e_q(r^2) |z><z|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalRepresentation {
    pub terms: Vec<DiagonalTerm>,
    pub q: DeformationParam,
    pub trunc: FockTruncation,
}

pub fn diagonal_representation(rho: &DensityMatrix) -> Result<DiagonalRepresentation> {
    diagonal_representation_with_threshold(rho, DEFAULT_TERM_THRESHOLD)
}

pub fn diagonal_representation_with_threshold(rho: &DensityMatrix, threshold: f64) -> Result<DiagonalRepresentation> {
    let q = rho.q();
    let trunc = rho.trunc();
    let fact = q_factorials(2 * trunc.n_max(), q)?;
    let mut terms = Vec::new();
    for n in 0..trunc.dim() {
        for m in 0..trunc.dim() {
            let c = rho.coeff(n, m);
            if c.norm() <= threshold {
                continue;
            }
            terms.push(DiagonalTerm {
                n,
                m,
                coefficient: c * ((fact[n] * fact[m]).sqrt() / fact[n + m]),
                derivative_order: n + m,
                fourier_index: m as i64 - n as i64,
            });
        }
    }
    Ok(DiagonalRepresentation { terms, q, trunc })
}

impl DiagonalRepresentation {
    /// Evaluates every functional and sums the results.
    pub fn materialize(&self) -> Result<FockOperator> {
        let mut projections: BTreeMap<i64, RadialSeries> = BTreeMap::new();
        let mut acc = MatrixAccumulator::zeros(self.trunc.dim());
        for term in &self.terms {
            if !projections.contains_key(&term.fourier_index) {
                let s = theta_projected_series(term.fourier_index, self.q, self.trunc)?;
                projections.insert(term.fourier_index, s);
            }
            let op = extract(
                &projections[&term.fourier_index],
                term.derivative_order,
                1.0,
                self.q,
                self.trunc,
            )?;
            for j in 0..self.trunc.dim() {
                for i in 0..self.trunc.dim() {
                    let v = op.matrix()[(i, j)];
                    if v != Complex64::new(0.0, 0.0) {
                        acc.add_entry(i, j, v * term.coefficient);
                    }
                }
            }
        }
        FockOperator::new(acc.value(), self.trunc, self.q)
    }

    /// Max-norm distance between the materialized sum and `rho`.
    pub fn round_trip_residual(&self, rho: &DensityMatrix) -> Result<f64> {
        Ok(self.materialize()?.max_diff(rho.operator()))
    }
}

/// Storage of a P-function.
#[derive(Debug, Clone, PartialEq)]
pub enum PRepresentation {
    /// Values `phi(z)` at every node of the grid, in [`QuadratureGrid::nodes`] order.
    Smooth { grid: QuadratureGrid, values: Vec<f64> },
    /// Point masses `(z_i, w_i)`.
    Atomic { points: Vec<(Complex64, f64)> },
}

/// Quasi-probability density `phi` with `rho = int d^2z phi(z) |z><z|`.
#[derive(Debug, Clone, PartialEq)]
pub struct PFunction {
    repr: PRepresentation,
    q: DeformationParam,
    trunc: FockTruncation,
}

impl PFunction {
    pub fn atomic(points: Vec<(Complex64, f64)>, q: DeformationParam, trunc: FockTruncation) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("atomic P-function without points".into()));
        }
        for &(z, w) in &points {
            check_label(z, q)?;
            if !w.is_finite() {
                return Err(Error::Domain(format!("non-finite weight {w}")));
            }
        }
        let mass: f64 = points.iter().map(|p| p.1).sum();
        if (mass - 1.0).abs() > PFUNCTION_MASS_TOL {
            return Err(Error::NotNormalized(mass));
        }
        Ok(Self {
            repr: PRepresentation::Atomic { points },
            q,
            trunc,
        })
    }

    pub fn smooth(grid: QuadratureGrid, values: Vec<f64>) -> Result<Self> {
        let expected = grid.radial_nodes().len() * grid.angular_count();
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: values.len(),
            });
        }
        let mass = smooth_mass(&grid, &values)?;
        if (mass - 1.0).abs() > PFUNCTION_MASS_TOL {
            return Err(Error::NotNormalized(mass));
        }
        let (q, trunc) = (grid.q(), grid.trunc());
        Ok(Self {
            repr: PRepresentation::Smooth { grid, values },
            q,
            trunc,
        })
    }

    /// Samples `phi` on the grid and rescales it to unit mass. Rings where
    /// the plain measure density `e_q(|z|^2)` is infinite (the outermost
    /// Jackson ring) are set to zero.
    pub fn smooth_normalized<F>(grid: QuadratureGrid, mut phi: F) -> Result<Self>
    where
        F: FnMut(Complex64) -> f64,
    {
        let open = open_rings(&grid);
        let mut values: Vec<f64> = grid
            .nodes()
            .map(|node| if open[node.radial_index].is_some() { phi(node.z) } else { 0.0 })
            .collect();
        let mass = smooth_mass(&grid, &values)?;
        if !(mass.abs() > 0.0) || !mass.is_finite() {
            return Err(Error::NotNormalized(mass));
        }
        values.iter_mut().for_each(|v| *v /= mass);
        Self::smooth(grid, values)
    }

    pub fn representation(&self) -> &PRepresentation {
        &self.repr
    }

    pub fn q(&self) -> DeformationParam {
        self.q
    }

    pub fn trunc(&self) -> FockTruncation {
        self.trunc
    }

    /// `int d^2z phi(z)`, or the weight sum for point masses.
    pub fn mass(&self) -> Result<f64> {
        match &self.repr {
            PRepresentation::Smooth { grid, values } => smooth_mass(grid, values),
            PRepresentation::Atomic { points } => Ok(points.iter().map(|p| p.1).sum()),
        }
    }
}

/// Plain-measure density `e_q(s_j)` of every radial ring, `None` where it
/// is not finite.
fn open_rings(grid: &QuadratureGrid) -> Vec<Option<f64>> {
    (0..grid.radial_nodes().len())
        .map(|j| grid.plain_density(j).ok().filter(|d| d.is_finite()))
        .collect()
}

fn smooth_mass(grid: &QuadratureGrid, values: &[f64]) -> Result<f64> {
    let open = open_rings(grid);
    let mut acc = CompensatedSum::new();
    for (node, &v) in grid.nodes().zip(values) {
        if v == 0.0 || node.weight == 0.0 {
            continue;
        }
        let density = open[node.radial_index].ok_or_else(|| {
            Error::Domain(format!(
                "phi must vanish on the outermost ring (phi = {v} at |z|^2 = {})",
                node.z.norm_sqr()
            ))
        })?;
        acc.add(real(v * node.weight * density));
    }
    Ok(acc.value().re)
}

/// Density matrix of a P-function with the trace drift seen before renormalization.
#[derive(Debug, Clone, PartialEq)]
pub struct PFunctionDensity {
    pub density: DensityMatrix,
    /// `Tr rho - 1` of the raw quadrature result.
    pub trace_drift: f64,
    /// Raw quadrature result before hermitization and renormalization.
    pub raw: FockOperator,
}

pub fn rho_from_pfunction(phi: &PFunction) -> Result<PFunctionDensity> {
    let (q, trunc) = (phi.q, phi.trunc);
    let dim = trunc.dim();
    let raw = match &phi.repr {
        PRepresentation::Atomic { points } => {
            let mut acc = MatrixAccumulator::zeros(dim);
            for &(z, w) in points {
                let v = unnormalized_amplitudes(z, q, dim)?;
                let norm = inverse_e_q(z.norm_sqr(), q)?;
                for j in 0..dim {
                    for i in 0..dim {
                        acc.add_entry(i, j, v[i] * v[j].conj() * (w * norm));
                    }
                }
            }
            acc.value()
        }
        PRepresentation::Smooth { grid, values } => {
            grid.ensure_compatible(q, trunc)?;
            let mut idx = 0usize;
            grid.integrate_stripped_matrix(dim, |z, buf| {
                let w = values[idx];
                idx += 1;
                let v = unnormalized_amplitudes(z, q, dim)?;
                for j in 0..dim {
                    for i in 0..dim {
                        buf[(i, j)] = v[i] * v[j].conj() * w;
                    }
                }
                Ok(())
            })?
        }
    };
    let raw = FockOperator::new(raw, trunc, q)?;
    let trace = raw.trace().re;
    let trace_drift = trace - 1.0;
    let m = raw.matrix();
    let mut herm = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        herm[(i, i)] = real(m[(i, i)].re / trace);
        for j in (i + 1)..dim {
            herm[(i, j)] = m[(i, j)] / trace;
            herm[(j, i)] = herm[(i, j)].conj();
        }
    }
    Ok(PFunctionDensity {
        density: density_from_coeffs(herm, q, trunc)?,
        trace_drift,
        raw,
    })
}

/// q-Poisson weight `s^n / ([n]! e_q(s))`.
pub fn q_poisson(n: usize, s: f64, q: DeformationParam) -> Result<f64> {
    check_poisson_domain(s, q)?;
    Ok(s.powi(n as i32) * inverse_e_q(s, q)? / q_factorial(n, q)?)
}

/// The weights `n = 0..=n_max`, by the recurrence `p_n = p_{n-1} s / [n]`
/// so that long tables do not overflow the factorials.
pub fn q_poisson_pmf(s: f64, q: DeformationParam, n_max: usize) -> Result<Vec<f64>> {
    check_poisson_domain(s, q)?;
    let mut out = Vec::with_capacity(n_max + 1);
    let mut p = inverse_e_q(s, q)?;
    out.push(p);
    for n in 1..=n_max {
        p *= s / q_number(n, q);
        out.push(p);
    }
    Ok(out)
}

fn check_poisson_domain(s: f64, q: DeformationParam) -> Result<()> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("q-Poisson parameter s = {s} must be finite and >= 0")));
    }
    if let Some(r) = q.radius() {
        if s >= r {
            return Err(Error::Divergence { magnitude: s, radius: r });
        }
    }
    Ok(())
}

/// Table `C[p][s]`, `0 <= p, s <= cutoff`, of `F = sum C[p][s] (a^dag)^p a^s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalOrderCoeffs {
    pub table: Vec<Vec<Complex64>>,
    pub q: DeformationParam,
    pub cutoff: usize,
}

impl NormalOrderCoeffs {
    pub fn get(&self, p: usize, s: usize) -> Complex64 {
        self.table[p][s]
    }

    /// `sum C[p][s] conj(zp)^p z^s`, which equals `<zp|F|z> / <zp|z>` when
    /// `F` has normal-ordered degree at most `cutoff`.
    pub fn evaluate(&self, zp: Complex64, z: Complex64) -> Complex64 {
        let mut acc = CompensatedSum::new();
        let mut zp_pow = real(1.0);
        for row in &self.table {
            let mut z_pow = real(1.0);
            for &c in row {
                acc.add(c * zp_pow * z_pow);
                z_pow *= z;
            }
            zp_pow *= zp.conj();
        }
        acc.value()
    }

    /// `max |C[p][s] - conj(C[s][p])|`.
    pub fn hermiticity_violation(&self) -> f64 {
        let mut worst = 0.0f64;
        for p in 0..=self.cutoff {
            for s in 0..=self.cutoff {
                worst = worst.max((self.table[p][s] - self.table[s][p].conj()).norm());
            }
        }
        worst
    }

    pub fn max_diff(&self, other: &Self) -> f64 {
        self.table
            .iter()
            .flatten()
            .zip(other.table.iter().flatten())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Closed form used by [`normal_order_coeffs`], as reported by the CLI.
pub const NORMAL_ORDER_CLOSED_FORM: &str =
    "C[p][s] = sum_{k=0}^{min(p,s)} (-1)^k q^{k(k-1)/2} / ([k]! sqrt([s-k]! [p-k]!)) <p-k|F|s-k>";

fn check_cutoff(f: &FockOperator, cutoff: usize) -> Result<Vec<f64>> {
    let limit = f.trunc().n_max() / 2;
    if cutoff > limit {
        return Err(Error::CutoffTooLarge { cutoff, limit });
    }
    q_factorials(cutoff, f.q())
}

pub fn normal_order_coeffs(f: &FockOperator, cutoff: usize) -> Result<NormalOrderCoeffs> {
    let fact = check_cutoff(f, cutoff)?;
    let q = f.q();
    let qv = q.value();
    let mut table = vec![vec![real(0.0); cutoff + 1]; cutoff + 1];
    for (p, row) in table.iter_mut().enumerate() {
        for (s, entry) in row.iter_mut().enumerate() {
            let mut acc = CompensatedSum::new();
            for k in 0..=p.min(s) {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let qk = qv.powi((k * k.saturating_sub(1) / 2) as i32);
                let denom = fact[k] * (fact[s - k] * fact[p - k]).sqrt();
                acc.add(f.element(p - k, s - k) * (sign * qk / denom));
            }
            *entry = acc.value();
        }
    }
    Ok(NormalOrderCoeffs { table, q, cutoff })
}

/// Coefficients obtained by matching the double power series
/// `sum <n|F|m> x^n y^m / sqrt([n]! [m]!) = e_q(x y) sum C[p][s] x^p y^s`
/// order by order, with no closed form involved.
pub fn normal_order_oracle(f: &FockOperator, cutoff: usize) -> Result<NormalOrderCoeffs> {
    let fact = check_cutoff(f, cutoff)?;
    let q = f.q();
    let mut table = vec![vec![real(0.0); cutoff + 1]; cutoff + 1];
    for p in 0..=cutoff {
        for s in 0..=cutoff {
            let g = f.element(p, s) / (fact[p] * fact[s]).sqrt();
            let mut lower = CompensatedSum::new();
            for k in 1..=p.min(s) {
                lower.add(table[p - k][s - k] / fact[k]);
            }
            table[p][s] = g - lower.value();
        }
    }
    Ok(NormalOrderCoeffs { table, q, cutoff })
}
