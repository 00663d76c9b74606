//! Small dense helpers shared by every stage.
//!
//! Everything here works on `DMatrix<f64>`; the intended dimensions are small
//! (d <= 32), so no attempt is made at blocking or sparsity.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = DMatrix<f64>;

/// Row-sum norm.
pub fn inf_norm(m: &Mat) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn identity(d: usize) -> Mat {
    Mat::identity(d, d)
}

pub fn inverse(m: &Mat) -> Option<Mat> {
    let inv = m.clone().lu().try_inverse()?;
    if inv.iter().all(|v| v.is_finite()) {
        Some(inv)
    } else {
        None
    }
}

/// Reciprocal condition number in the infinity norm; 0 for singular input.
pub fn rcond(m: &Mat) -> f64 {
    let norm = inf_norm(m);
    if norm == 0.0 {
        return 0.0;
    }
    match inverse(m) {
        Some(inv) => 1.0 / (norm * inf_norm(&inv)),
        None => 0.0,
    }
}

/// Householder QR with the sign convention `R[i][i] >= 0`.
pub fn qr_positive(m: &Mat) -> (Mat, Mat) {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for i in 0..r.nrows() {
        if r[(i, i)] < 0.0 {
            r.row_mut(i).neg_mut();
            q.column_mut(i).neg_mut();
        }
    }
    (q, r)
}

/// Largest absolute entry strictly below the diagonal.
pub fn lower_residual(m: &Mat) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..i.min(m.ncols()) {
            worst = worst.max(m[(i, j)].abs());
        }
    }
    worst
}

/// `‖QᵀQ − I‖∞`.
pub fn orthogonality_residual(q: &Mat) -> f64 {
    let g = q.transpose() * q - identity(q.ncols());
    inf_norm(&g)
}

/// A deterministic orthogonal frame, generic with probability one.
///
/// Subspace iterations started from coordinate axes can get stuck on
/// invariant coordinate subspaces; starting from a random frame avoids that.
pub fn generic_frame(d: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = Mat::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let (q, _) = qr_positive(&(raw + identity(d) * 0.25));
    q
}

/// Block-diagonal assembly.
pub fn block_diag(blocks: &[Mat]) -> Mat {
    let d: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(d, d);
    let mut off = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((off, off), (k, k)).copy_from(b);
        off += k;
    }
    out
}

const RESCALE_HI: f64 = 1e200;
const RESCALE_LO: f64 = 1e-200;

/// A matrix stored as `unit · exp(log_scale)`.
///
/// Long cocycle products with growth rate away from one leave the double
/// range after a few thousand steps; keeping the magnitude in a separate
/// logarithm sidesteps that.
#[derive(Debug, Clone)]
pub struct ScaledMatrix {
    pub unit: Mat,
    pub log_scale: f64,
}

impl ScaledMatrix {
    pub fn new(m: Mat) -> Self {
        let mut s = ScaledMatrix { unit: m, log_scale: 0.0 };
        s.rescale();
        s
    }

    pub fn identity(d: usize) -> Self {
        ScaledMatrix { unit: identity(d), log_scale: 0.0 }
    }

    fn rescale(&mut self) {
        let n = inf_norm(&self.unit);
        if n > 0.0 && !(RESCALE_LO..=RESCALE_HI).contains(&n) {
            self.unit /= n;
            self.log_scale += n.ln();
        }
    }

    /// `factor · self`.
    pub fn premul(&mut self, factor: &Mat) {
        self.unit = factor * &self.unit;
        self.rescale();
    }

    /// `self · factor`.
    pub fn postmul(&mut self, factor: &Mat) {
        self.unit = &self.unit * factor;
        self.rescale();
    }

    pub fn log_norm(&self) -> f64 {
        inf_norm(&self.unit).ln() + self.log_scale
    }

    pub fn to_matrix(&self) -> Mat {
        self.to_matrix_with(0.0)
    }

    /// Returns the plain matrix multiplied by `exp(extra_log)`.
    ///
    /// The unit's own magnitude is folded into the exponent so that the
    /// scale factor cannot underflow into subnormals while the result is
    /// still representable.
    pub fn to_matrix_with(&self, extra_log: f64) -> Mat {
        let total = self.log_scale + extra_log;
        if total == 0.0 {
            return self.unit.clone();
        }
        let n = inf_norm(&self.unit);
        if n == 0.0 || !n.is_finite() {
            return &self.unit * total.exp();
        }
        (&self.unit / n) * (n.ln() + total).exp()
    }
}
