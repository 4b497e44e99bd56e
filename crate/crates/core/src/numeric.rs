//! Compensated accumulation for grid sums.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Neumaier-compensated running sum of complex values.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: Complex64,
    comp: Complex64,
}

#[inline]
fn two_sum(sum: f64, comp: &mut f64, x: f64) -> f64 {
    let t = sum + x;
    if sum.abs() >= x.abs() {
        *comp += (sum - t) + x;
    } else {
        *comp += (x - t) + sum;
    }
    t
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: Complex64) {
        self.sum.re = two_sum(self.sum.re, &mut self.comp.re, x.re);
        self.sum.im = two_sum(self.sum.im, &mut self.comp.im, x.im);
    }

    pub fn value(&self) -> Complex64 {
        self.sum + self.comp
    }
}

impl FromIterator<Complex64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = Complex64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Entrywise compensated accumulator for square complex matrices.
#[derive(Debug, Clone)]
pub struct MatrixAccumulator {
    sum: DMatrix<Complex64>,
    comp: DMatrix<Complex64>,
}

impl MatrixAccumulator {
    pub fn zeros(dim: usize) -> Self {
        Self {
            sum: DMatrix::zeros(dim, dim),
            comp: DMatrix::zeros(dim, dim),
        }
    }

    pub fn add_entry(&mut self, row: usize, col: usize, x: Complex64) {
        let s = &mut self.sum[(row, col)];
        let c = &mut self.comp[(row, col)];
        s.re = two_sum(s.re, &mut c.re, x.re);
        s.im = two_sum(s.im, &mut c.im, x.im);
    }

    pub fn value(&self) -> DMatrix<Complex64> {
        &self.sum + &self.comp
    }
}

/// Largest entry modulus.
pub fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest modulus of `a - b` over the leading `rows x cols` block.
pub fn max_abs_diff_block(
    a: &DMatrix<Complex64>,
    b: &DMatrix<Complex64>,
    rows: usize,
    cols: usize,
) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..rows {
        for j in 0..cols {
            worst = worst.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    worst
}
