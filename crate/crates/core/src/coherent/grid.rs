//! Phase-space quadrature for `int d^2z` and the calibration of its radial measure.
//!
//! Writing `z = sqrt(s) e^{i theta}`, the radial variable `s = |z|^2` is
//! integrated with Jackson nodes `s_j = S q^j` on `[0, S]` and the angle with
//! `M` uniform nodes. Integrands in this crate almost always carry the factor
//! `1/e_q(|z|^2)` from the coherent-state normalization; the grid absorbs it
//! into a radial weight `W(s)` and integrates the remaining "stripped"
//! integrand:
//!
//! ```text
//! int d^2z g(z) / e_q(|z|^2)  ~=  sum_{j,k} mu * w_j * W(s_j) * (2 pi / M) * g(z_jk)
//! ```
//!
//! The weight form `W`, the upper limit `S` and the constant `mu` are fixed by
//! requiring the radial moments `2 mu int_0^S s^n W(s) d_q s` to equal `[n]!`,
//! which is exactly the condition for `(1/pi) int d^2z |z><z| = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::FockTruncation;
use crate::numeric::{CompensatedSum, MatrixAccumulator};
use crate::qcalc::{
    composite_gauss_legendre, e_q_real, inverse_e_q, jackson_integral, q_factorial,
    DeformationParam, JacksonOptions,
};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Relative tolerance on the calibrated moments.
pub const MOMENT_TOL: f64 = 1e-8;
/// Number of moments `0..=DEFAULT_MOMENTS` checked during calibration.
pub const DEFAULT_MOMENTS: usize = 10;
/// Largest acceptable missing radial mass `q^J` for a grid.
pub const DEFAULT_TAIL_TOL: f64 = 1e-6;

const GL_POINTS_PER_PANEL: usize = 16;

/// Radial weight replacing `1/e_q(s)` inside the measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightForm {
    /// `W(s) = 1/e_q(s) = E_q(-s)`, the normalization factor as written.
    InverseExp,
    /// `W(s) = E_q(-q s)`, the q-Gamma weight.
    ShiftedInverseExp,
}

impl WeightForm {
    pub fn eval(self, s: f64, q: DeformationParam) -> Result<f64> {
        match self {
            WeightForm::InverseExp => inverse_e_q(s, q),
            WeightForm::ShiftedInverseExp => inverse_e_q(q.value() * s, q),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            WeightForm::InverseExp => "1/e_q(s) = E_q(-s)",
            WeightForm::ShiftedInverseExp => "E_q(-q s)",
        }
    }
}

/// Upper limit of the radial q-integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpperLimit {
    /// `1/(1-q)`, the first zero of the q-exponential.
    FirstZero,
    /// `1/(1-q^2)`.
    SquaredDeformation,
    /// Finite cutoff standing in for `infinity` at `q = 1`.
    ClassicalCutoff,
}

impl UpperLimit {
    fn value(self, q: DeformationParam) -> f64 {
        let qv = q.value();
        match self {
            UpperLimit::FirstZero => 1.0 / (1.0 - qv),
            UpperLimit::SquaredDeformation => 1.0 / (1.0 - qv * qv),
            UpperLimit::ClassicalCutoff => classical_cutoff(2 * DEFAULT_MOMENTS),
        }
    }
}

/// Smallest cutoff `C` (stepping by 1) with `e^{-C} sum_{k<=degree+1} C^k/k! < 1e-16`,
/// i.e. the classical tail of `int s^degree e^{-s}` relative to `degree!`.
pub fn classical_cutoff(degree: usize) -> f64 {
    let mut c = (degree as f64 + 10.0).max(30.0);
    loop {
        let mut term = 1.0f64;
        let mut sum = 1.0f64;
        for k in 1..=(degree + 1) {
            term *= c / k as f64;
            sum += term;
        }
        if (-c + sum.ln()).exp() < 1e-16 {
            return c;
        }
        c += 1.0;
    }
}

/// One calibration candidate with its moment errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureCandidate {
    pub weight_form: WeightForm,
    pub upper_limit: UpperLimit,
    pub upper: f64,
    pub mu: f64,
    pub moment_rel_errors: Vec<f64>,
    pub max_moment_rel_error: f64,
}

/// Resolved radial measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureCalibration {
    pub q: DeformationParam,
    pub weight_form: WeightForm,
    pub upper_limit: UpperLimit,
    pub upper: f64,
    pub mu: f64,
    pub max_moment_rel_error: f64,
    pub moments_checked: usize,
    pub convention: String,
    pub candidates: Vec<MeasureCandidate>,
}

fn radial_moment(n: usize, form: WeightForm, upper: f64, q: DeformationParam) -> Result<f64> {
    if q.is_classical() {
        let panels = (upper / 2.0).ceil() as usize;
        let sum: CompensatedSum = composite_gauss_legendre(0.0, upper, panels)
            .into_iter()
            .map(|(s, w)| Complex64::new(w * s.powi(n as i32) * (-s).exp(), 0.0))
            .collect();
        return Ok(sum.value().re);
    }
    let mut failure = None;
    let value = jackson_integral(
        |s| match form.eval(s, q) {
            Ok(w) => Complex64::new(s.powi(n as i32) * w, 0.0),
            Err(e) => {
                failure.get_or_insert(e);
                Complex64::new(0.0, 0.0)
            }
        },
        upper,
        q,
        JacksonOptions {
            tol: 1e-16,
            max_nodes: 100_000,
        },
    );
    // the closure borrow ends with the call above
    match failure {
        Some(e) => Err(e),
        None => Ok(value?.re),
    }
}

fn evaluate_candidate(
    form: WeightForm,
    limit: UpperLimit,
    q: DeformationParam,
    moments: usize,
) -> Result<MeasureCandidate> {
    let upper = limit.value(q);
    let m0 = radial_moment(0, form, upper, q)?;
    let mu = 0.5 / m0;
    let mut errs = Vec::with_capacity(moments + 1);
    for n in 0..=moments {
        let mn = radial_moment(n, form, upper, q)?;
        let f = q_factorial(n, q)?;
        errs.push((2.0 * mu * mn - f).abs() / f);
    }
    let max = errs
        .iter()
        .map(|e| if e.is_nan() { f64::INFINITY } else { *e })
        .fold(0.0, f64::max);
    Ok(MeasureCandidate {
        weight_form: form,
        upper_limit: limit,
        upper,
        mu,
        moment_rel_errors: errs,
        max_moment_rel_error: max,
    })
}

/// Resolves the radial weight form, the upper limit and `mu` by matching the
/// moments `n = 0..=moments` against `[n]!`.
///
/// Candidates at `q < 1` are the two weight forms crossed with the upper
/// limits `1/(1-q)` and `1/(1-q^2)`. At `q = 1` the only candidate is
/// `e^{-s}` on a cutoff half-line.
pub fn calibrate_measure(q: DeformationParam, moments: usize) -> Result<MeasureCalibration> {
    let mut candidates = Vec::new();
    if q.is_classical() {
        candidates.push(evaluate_candidate(
            WeightForm::ShiftedInverseExp,
            UpperLimit::ClassicalCutoff,
            q,
            moments,
        )?);
    } else {
        for form in [WeightForm::InverseExp, WeightForm::ShiftedInverseExp] {
            for limit in [UpperLimit::FirstZero, UpperLimit::SquaredDeformation] {
                candidates.push(evaluate_candidate(form, limit, q, moments)?);
            }
        }
    }
    let best = candidates
        .iter()
        .min_by(|a, b| a.max_moment_rel_error.total_cmp(&b.max_moment_rel_error))
        .cloned()
        .expect("at least one candidate");
    if !(best.max_moment_rel_error <= MOMENT_TOL) {
        return Err(Error::CalibrationFailed(best.max_moment_rel_error));
    }
    let measure = if (best.mu - 0.5).abs() < 1e-6 {
        "r dr dtheta"
    } else if (best.mu - 1.0).abs() < 1e-6 {
        "d(r^2) dtheta"
    } else {
        "non-standard constant"
    };
    let convention = if q.is_classical() {
        format!(
            "d^2z = mu ds dtheta with s = |z|^2, mu = {:.15} ({measure}); weight e^(-s) on [0, {}]",
            best.mu, best.upper
        )
    } else {
        format!(
            "d^2z = mu e_q(s) W(s) d_q s dtheta with s = |z|^2, W(s) = {}, mu = {:.15} ({measure}); \
             Jackson integral over [0, {}]",
            best.weight_form.label(),
            best.mu,
            best.upper
        )
    };
    Ok(MeasureCalibration {
        q,
        weight_form: best.weight_form,
        upper_limit: best.upper_limit,
        upper: best.upper,
        mu: best.mu,
        max_moment_rel_error: best.max_moment_rel_error,
        moments_checked: moments,
        convention,
        candidates,
    })
}

/// Grid resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Radial node count `J`.
    pub radial: usize,
    /// Angular node count `M`.
    pub angular: usize,
    /// Levels excluded from identity checks at the top of the truncation.
    pub guard_band: Option<usize>,
    /// Radial cutoff at `q = 1`.
    pub classical_cutoff: Option<f64>,
    pub tail_tol: f64,
}

impl GridSpec {
    pub fn new(radial: usize, angular: usize) -> Self {
        Self {
            radial,
            angular,
            guard_band: None,
            classical_cutoff: None,
            tail_tol: DEFAULT_TAIL_TOL,
        }
    }

    /// `J = 200`, `M = 2 n_max + 2`.
    pub fn default_for(trunc: FockTruncation) -> Self {
        Self::new(200, 2 * trunc.n_max() + 2)
    }

    pub fn doubled(&self) -> Self {
        Self {
            radial: 2 * self.radial,
            angular: 2 * self.angular,
            ..*self
        }
    }
}

/// Serializable summary of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    #[serde(rename = "J")]
    pub radial: usize,
    #[serde(rename = "M")]
    pub angular: usize,
    pub q: f64,
    pub guard_band: usize,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialNode {
    pub s: f64,
    /// Jackson (or Gauss-Legendre) weight of `d_q s`.
    pub base_weight: f64,
    /// `mu * base_weight * W(s)`.
    pub measure_weight: f64,
}

/// A point `z_jk` of the grid with its stripped-measure weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridNode {
    pub z: Complex64,
    pub radial_index: usize,
    pub weight: f64,
}

/// Tensor grid of radial and angular nodes carrying a calibrated measure.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    q: DeformationParam,
    trunc: FockTruncation,
    spec: GridSpec,
    radial: Vec<RadialNode>,
    angles: Vec<Complex64>,
    guard_band: usize,
    radial_tail: f64,
    calibration: MeasureCalibration,
}

impl QuadratureGrid {
    pub fn new(q: DeformationParam, trunc: FockTruncation, spec: GridSpec) -> Result<Self> {
        let calibration = calibrate_measure(q, DEFAULT_MOMENTS)?;
        Self::with_calibration(trunc, spec, calibration)
    }

    pub fn with_calibration(
        trunc: FockTruncation,
        spec: GridSpec,
        calibration: MeasureCalibration,
    ) -> Result<Self> {
        let q = calibration.q;
        if spec.angular < 2 * trunc.n_max() + 1 {
            return Err(Error::GridMismatch(format!(
                "M = {} angular nodes cannot resolve Fourier degree 2 n_max = {}",
                spec.angular,
                2 * trunc.n_max()
            )));
        }
        if spec.radial == 0 {
            return Err(Error::GridMismatch("no radial nodes".into()));
        }
        let (radial, radial_tail) = if q.is_classical() {
            let cutoff = spec
                .classical_cutoff
                .unwrap_or_else(|| classical_cutoff(2 * trunc.n_max() + 2));
            let panels = spec.radial.div_ceil(GL_POINTS_PER_PANEL);
            let nodes = composite_gauss_legendre(0.0, cutoff, panels)
                .into_iter()
                .map(|(s, w)| RadialNode {
                    s,
                    base_weight: w,
                    measure_weight: calibration.mu * w * (-s).exp(),
                })
                .collect();
            // incomplete-gamma tail of the highest diagonal moment
            let mut term = 1.0f64;
            let mut sum = 1.0f64;
            for k in 1..=(2 * trunc.n_max() + 1) {
                term *= cutoff / k as f64;
                sum += term;
            }
            (nodes, (-cutoff + sum.ln()).exp())
        } else {
            let qv = q.value();
            let upper = calibration.upper;
            let mut nodes = Vec::with_capacity(spec.radial);
            let mut qj = 1.0;
            for _ in 0..spec.radial {
                let s = upper * qj;
                let w = upper * (1.0 - qv) * qj;
                nodes.push(RadialNode {
                    s,
                    base_weight: w,
                    measure_weight: calibration.mu * w * calibration.weight_form.eval(s, q)?,
                });
                qj *= qv;
            }
            (nodes, qj)
        };
        if !(radial_tail <= spec.tail_tol) {
            return Err(Error::GridMismatch(format!(
                "radial tail {radial_tail:e} exceeds tolerance {:e}; increase J",
                spec.tail_tol
            )));
        }
        let m = spec.angular;
        let angles = (0..m)
            .map(|k| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / m as f64))
            .collect();
        let guard_band = spec.guard_band.unwrap_or(trunc.n_max().div_ceil(5));
        Ok(Self {
            q,
            trunc,
            spec,
            radial,
            angles,
            guard_band,
            radial_tail,
            calibration,
        })
    }

    /// Same calibration, `J` and `M` doubled.
    pub fn refined(&self) -> Result<Self> {
        Self::with_calibration(self.trunc, self.spec.doubled(), self.calibration.clone())
    }

    pub fn q(&self) -> DeformationParam {
        self.q
    }

    pub fn trunc(&self) -> FockTruncation {
        self.trunc
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn calibration(&self) -> &MeasureCalibration {
        &self.calibration
    }

    pub fn mu(&self) -> f64 {
        self.calibration.mu
    }

    pub fn guard_band(&self) -> usize {
        self.guard_band
    }

    pub fn radial_tail(&self) -> f64 {
        self.radial_tail
    }

    pub fn radial_nodes(&self) -> &[RadialNode] {
        &self.radial
    }

    pub fn angular_count(&self) -> usize {
        self.angles.len()
    }

    pub fn params(&self) -> GridParams {
        GridParams {
            radial: self.spec.radial,
            angular: self.spec.angular,
            q: self.q.value(),
            guard_band: self.guard_band,
            mu: self.calibration.mu,
        }
    }

    /// Checks that this grid was built for `q` and resolves `trunc`.
    pub fn ensure_compatible(&self, q: DeformationParam, trunc: FockTruncation) -> Result<()> {
        if self.q != q {
            return Err(Error::GridMismatch(format!("grid built for q = {}, used with q = {q}", self.q)));
        }
        if self.angles.len() < 2 * trunc.n_max() + 1 {
            return Err(Error::GridMismatch(format!(
                "M = {} too small for n_max = {}",
                self.angles.len(),
                trunc.n_max()
            )));
        }
        Ok(())
    }

    /// All grid points with the weight of the stripped measure
    /// `d^2z / e_q(|z|^2)` (angular factor `2 pi / M` included).
    pub fn nodes(&self) -> impl Iterator<Item = GridNode> + '_ {
        let dtheta = 2.0 * std::f64::consts::PI / self.angles.len() as f64;
        self.radial.iter().enumerate().flat_map(move |(j, node)| {
            let r = node.s.sqrt();
            self.angles.iter().map(move |&phase| GridNode {
                z: phase * r,
                radial_index: j,
                weight: node.measure_weight * dtheta,
            })
        })
    }

    /// `int d^2z g(z) / e_q(|z|^2)`.
    pub fn integrate_stripped<F>(&self, mut g: F) -> Result<Complex64>
    where
        F: FnMut(Complex64) -> Result<Complex64>,
    {
        let mut acc = CompensatedSum::new();
        for node in self.nodes() {
            if node.weight != 0.0 {
                acc.add(g(node.z)? * node.weight);
            }
        }
        Ok(acc.value())
    }

    /// `int d^2z G(z) / e_q(|z|^2)` for a matrix-valued `G` written into a buffer.
    pub fn integrate_stripped_matrix<F>(&self, dim: usize, mut g: F) -> Result<DMatrix<Complex64>>
    where
        F: FnMut(Complex64, &mut DMatrix<Complex64>) -> Result<()>,
    {
        let mut acc = MatrixAccumulator::zeros(dim);
        let mut buf = DMatrix::zeros(dim, dim);
        for node in self.nodes() {
            if node.weight == 0.0 {
                continue;
            }
            g(node.z, &mut buf)?;
            for j in 0..dim {
                for i in 0..dim {
                    acc.add_entry(i, j, buf[(i, j)] * node.weight);
                }
            }
        }
        Ok(acc.value())
    }

    /// Factor `e_q(s_j)` turning the stripped measure into plain `d^2z` at radial node `j`.
    pub fn plain_density(&self, j: usize) -> Result<f64> {
        e_q_real(self.radial[j].s, self.q)
    }
}
