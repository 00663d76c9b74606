#![allow(dead_code)]

use dichotomy_spectrum::linalg::{qr_positive, Mat};
use dichotomy_spectrum::similarity::SimilarityTransform;
use dichotomy_spectrum::MatrixSequence;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn diag(v: &[f64]) -> Mat {
    Mat::from_diagonal(&DVector::from_row_slice(v))
}

pub fn two_level(a: f64, b: f64) -> MatrixSequence {
    MatrixSequence::piecewise(Mat::from_element(1, 1, a), vec![(0, Mat::from_element(1, 1, b))]).unwrap()
}

pub fn random_orthogonal(d: usize, r: &mut ChaCha8Rng) -> Mat {
    let raw = Mat::from_fn(d, d, |_, _| r.gen_range(-1.0..1.0)) + Mat::identity(d, d) * 0.5;
    qr_positive(&raw).0
}

/// Upper triangular system whose diagonal switches at `n = 0`, conjugated by
/// a constant orthogonal matrix.  Returns the system and the union of the
/// per-entry hulls, merged.
pub fn switched_triangular(d: usize, r: &mut ChaCha8Rng) -> (MatrixSequence, Vec<(f64, f64)>) {
    let left: Vec<f64> = (0..d).map(|_| r.gen_range(0.3..3.0)).collect();
    let right: Vec<f64> = (0..d).map(|_| r.gen_range(0.3..3.0)).collect();
    let mut upper = Mat::zeros(d, d);
    for i in 0..d {
        for j in i + 1..d {
            upper[(i, j)] = r.gen_range(-0.5..0.5);
        }
    }
    let q = random_orthogonal(d, r);
    let qt = q.transpose();
    let lm = &q * (diag(&left) + &upper) * &qt;
    let rm = &q * (diag(&right) + &upper) * &qt;
    let seq = MatrixSequence::piecewise(lm, vec![(0, rm)]).unwrap();
    let mut hulls: Vec<(f64, f64)> = left.iter().zip(&right).map(|(a, b)| (a.min(*b), a.max(*b))).collect();
    hulls.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for h in hulls {
        match merged.last_mut() {
            Some(m) if h.0 <= m.1 => m.1 = m.1.max(h.1),
            _ => merged.push(h),
        }
    }
    (seq, merged)
}

/// Periodic system with well-conditioned random coefficients.
pub fn random_periodic(d: usize, period: usize, r: &mut ChaCha8Rng) -> MatrixSequence {
    let ms = (0..period)
        .map(|_| {
            let s: Vec<f64> = (0..d).map(|_| r.gen_range(0.4..2.5)).collect();
            let u = random_orthogonal(d, r);
            let v = random_orthogonal(d, r);
            u * diag(&s) * v.transpose()
        })
        .collect();
    MatrixSequence::periodic(ms).unwrap()
}

/// Random bounded fixture of dimension `1 ..= 4`, alternating families.
pub fn random_fixture(i: usize, r: &mut ChaCha8Rng) -> MatrixSequence {
    let d = 1 + i % 4;
    if i % 2 == 0 {
        switched_triangular(d, r).0
    } else {
        random_periodic(d, 1 + (i / 2) % 3, r)
    }
}

/// `F(n) = I + E(n)` with `‖E(n)‖∞ <= 0.6`, so `‖F‖∞ <= 1.6` and
/// `‖F⁻¹‖∞ <= 2.5`.
pub fn random_transform(d: usize, lo: i64, hi: i64, r: &mut ChaCha8Rng) -> SimilarityTransform {
    let values = (lo..=hi)
        .map(|_| {
            let e = Mat::from_fn(d, d, |_, _| r.gen_range(-1.0..1.0));
            let s = 0.6 / dichotomy_spectrum::linalg::inf_norm(&e).max(1e-12);
            Mat::identity(d, d) + e * s
        })
        .collect();
    SimilarityTransform::new(lo, values).unwrap()
}
