//! Kinematic similarity transforms `y(n) = F(n)⁻¹x(n)`.

use serde::Serialize;

use crate::dichotomy::{splitting, DEFAULT_GAP_TOL};
use crate::error::{Error, Result};
use crate::linalg::{block_diag, identity, inf_norm, inverse, lower_residual, qr_positive, Mat};
use crate::propagator::TransitionOperator;
use crate::spectrum::{spectrum_via_triangular, SpectrumEstimate};
use crate::system::{MatrixSequence, WindowedValues};

/// Default relative tolerance on the off-block coupling left by a split.
pub const DEFAULT_COUPLING_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityTransform {
    pub start: i64,
    pub values: Vec<Mat>,
    pub f_sup: f64,
    pub finv_sup: f64,
    pub delta_tag: Option<f64>,
}

impl SimilarityTransform {
    pub fn new(start: i64, values: Vec<Mat>) -> Result<Self> {
        let mut f_sup: f64 = 0.0;
        let mut finv_sup: f64 = 0.0;
        for (i, f) in values.iter().enumerate() {
            let n = start + i as i64;
            if crate::linalg::rcond(f) < crate::system::DEFAULT_SING_TOL {
                return Err(Error::SingularTransform(n));
            }
            let inv = inverse(f).ok_or(Error::SingularTransform(n))?;
            f_sup = f_sup.max(inf_norm(f));
            finv_sup = finv_sup.max(inf_norm(&inv));
        }
        if values.is_empty() {
            return Err(Error::WindowMismatch("transform has no values".into()));
        }
        Ok(SimilarityTransform { start, values, f_sup, finv_sup, delta_tag: None })
    }

    pub fn identity(d: usize, lo: i64, hi: i64) -> Self {
        SimilarityTransform {
            start: lo,
            values: vec![identity(d); (hi - lo + 1) as usize],
            f_sup: 1.0,
            finv_sup: 1.0,
            delta_tag: None,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta_tag = Some(delta);
        self
    }

    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64 - 1
    }

    pub fn dimension(&self) -> usize {
        self.values[0].nrows()
    }

    pub fn get(&self, n: i64) -> Option<&Mat> {
        if n < self.start {
            return None;
        }
        self.values.get((n - self.start) as usize)
    }

    /// Pointwise product `self(n)·other(n)` on the common window.
    pub fn compose(&self, other: &SimilarityTransform) -> Result<Self> {
        let lo = self.start.max(other.start);
        let hi = self.end().min(other.end());
        if lo > hi {
            return Err(Error::WindowMismatch("transforms do not overlap".into()));
        }
        let values = (lo..=hi).map(|n| self.get(n).unwrap() * other.get(n).unwrap()).collect();
        SimilarityTransform::new(lo, values)
    }

    pub fn restrict(&self, lo: i64, hi: i64) -> Result<Self> {
        if lo < self.start || hi > self.end() || lo > hi {
            return Err(Error::WindowMismatch(format!(
                "[{lo}, {hi}] is not inside [{}, {}]",
                self.start,
                self.end()
            )));
        }
        let a = (lo - self.start) as usize;
        let b = (hi - self.start) as usize;
        let mut t = SimilarityTransform::new(lo, self.values[a..=b].to_vec())?;
        t.delta_tag = self.delta_tag;
        Ok(t)
    }

    pub fn as_values(&self) -> WindowedValues {
        WindowedValues::new(self.start, self.values.clone())
    }
}

/// `B(n) = F(n+1)⁻¹A(n)F(n)` wherever both sides are defined.
pub fn conjugate(a: &WindowedValues, f: &SimilarityTransform) -> Result<WindowedValues> {
    let lo = a.start.max(f.start);
    let hi = a.end().min(f.end() - 1);
    if lo > hi {
        return Err(Error::WindowMismatch(format!(
            "A on [{}, {}] and F on [{}, {}] share no step",
            a.start,
            a.end(),
            f.start,
            f.end()
        )));
    }
    let mut out = Vec::with_capacity((hi - lo + 1) as usize);
    for n in lo..=hi {
        let next = f.get(n + 1).unwrap();
        let lu = next.clone().lu();
        let rhs = a.get(n).unwrap() * f.get(n).unwrap();
        out.push(lu.solve(&rhs).ok_or(Error::SingularTransform(n + 1))?);
    }
    Ok(WindowedValues::new(lo, out))
}

/// [`conjugate`] for a sequence sampled on the transform's window.
pub fn conjugate_sequence(seq: &MatrixSequence, f: &SimilarityTransform) -> Result<WindowedValues> {
    conjugate(&seq.sample(f.start, f.end() - 1), f)
}

/// Discrete QR: `A(n)Q(n) = Q(n+1)C(n)` with `Q(n₀) = I` and `C(n)` upper
/// triangular with positive diagonal.
///
/// `Q` is returned on `[n₀, n₁+1]` and `C` on `[n₀, n₁]`.
pub fn qr_triangularize(seq: &MatrixSequence, window: (i64, i64)) -> Result<(SimilarityTransform, WindowedValues)> {
    let (n0, n1) = window;
    if n0 > n1 {
        return Err(Error::Precondition("empty window".into()));
    }
    seq.validate(window, crate::system::DEFAULT_SING_TOL)?;
    Ok(qr_triangularize_values(&seq.sample(n0, n1)))
}

pub fn qr_triangularize_values(a: &WindowedValues) -> (SimilarityTransform, WindowedValues) {
    let d = a.dimension();
    let mut qs = Vec::with_capacity(a.values.len() + 1);
    let mut cs = Vec::with_capacity(a.values.len());
    let mut q = identity(d);
    for m in &a.values {
        let (qn, c) = qr_positive(&(m * &q));
        qs.push(std::mem::replace(&mut q, qn));
        cs.push(c);
    }
    qs.push(q);
    let t = SimilarityTransform {
        start: a.start,
        values: qs,
        f_sup: 0.0,
        finv_sup: 0.0,
        delta_tag: None,
    };
    // orthogonal up to rounding: ‖Q‖∞ and ‖Qᵀ‖∞ are measured, not assumed
    let f_sup = t.values.iter().map(inf_norm).fold(0.0, f64::max);
    let finv_sup = t.values.iter().map(|q| inf_norm(&q.transpose())).fold(0.0, f64::max);
    (SimilarityTransform { f_sup, finv_sup, ..t }, WindowedValues::new(a.start, cs))
}

/// `D_β = diag(1, β, …, β^{d−1})`.
pub fn beta_matrix(d: usize, beta: f64) -> Mat {
    Mat::from_diagonal(&nalgebra::DVector::from_fn(d, |i, _| beta.powi(i as i32)))
}

/// `D_β⁻¹C(n)D_β`: entry `(r, s)` is scaled by `β^{s−r}`.
pub fn beta_transform(c: &WindowedValues, beta: f64) -> Result<WindowedValues> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Precondition(format!("beta = {beta} must lie in (0, 1)")));
    }
    let mut out = Vec::with_capacity(c.values.len());
    for m in &c.values {
        let low = lower_residual(m);
        if low > 1e-12 * (1.0 + inf_norm(m)) {
            return Err(Error::NotTriangular(low));
        }
        let mut g = Mat::zeros(m.nrows(), m.ncols());
        for r in 0..m.nrows() {
            for s in r..m.ncols() {
                g[(r, s)] = m[(r, s)] * beta.powi((s - r) as i32);
            }
        }
        out.push(g);
    }
    Ok(WindowedValues::new(c.start, out))
}

/// `n ↦ μ·A(n)`.
pub fn scale_system(seq: &MatrixSequence, mu: f64) -> Result<MatrixSequence> {
    seq.scale(mu)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityReport {
    /// `max ‖F(n+1)B(n) − A(n)F(n)‖∞ / (1 + ‖A(n)‖∞)`.
    pub max_residual: f64,
    pub worst_n: Option<i64>,
    pub f_sup: f64,
    pub finv_sup: f64,
    pub delta_tag: Option<f64>,
    pub holds: bool,
}

pub fn check_similarity(
    f: &SimilarityTransform,
    a: &WindowedValues,
    b: &WindowedValues,
    tol: f64,
) -> SimilarityReport {
    let lo = a.start.max(b.start).max(f.start);
    let hi = a.end().min(b.end()).min(f.end() - 1);
    let mut worst: f64 = 0.0;
    let mut worst_n = None;
    for n in lo..=hi {
        let (an, bn) = (a.get(n).unwrap(), b.get(n).unwrap());
        let r = inf_norm(&(f.get(n + 1).unwrap() * bn - an * f.get(n).unwrap())) / (1.0 + inf_norm(an));
        if r > worst || worst_n.is_none() {
            worst = worst.max(r);
            worst_n = Some(n);
        }
    }
    let bounded = f.f_sup.is_finite() && f.finv_sup.is_finite();
    SimilarityReport {
        max_residual: worst,
        worst_n,
        f_sup: f.f_sup,
        finv_sup: f.finv_sup,
        delta_tag: f.delta_tag,
        holds: bounded && lo <= hi && worst <= tol,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockOptions {
    pub coupling_tol: f64,
    /// Allowed distance between a block's triangular spectrum and its interval.
    pub spectrum_tol: f64,
    /// Steps added on each side of the window per split so that the
    /// subspace sweeps have converged on the reported window.
    pub margin: i64,
    /// Seed of the generic frame used by the subspace sweeps.
    pub frame_seed: u64,
}

impl Default for BlockOptions {
    fn default() -> Self {
        BlockOptions {
            coupling_tol: DEFAULT_COUPLING_TOL,
            spectrum_tol: 0.05,
            margin: 200,
            frame_seed: crate::propagator::DEFAULT_FRAME_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockDecomposition {
    /// `F` on `[-N, N+1]`.
    pub transform: SimilarityTransform,
    /// `B_i` on `[-N, N]`, in the order of the spectral intervals.
    pub blocks: Vec<WindowedValues>,
    /// Relative off-block coupling removed at each split, top split last.
    pub coupling: Vec<f64>,
}

impl BlockDecomposition {
    pub fn assembled(&self) -> WindowedValues {
        let b0 = &self.blocks[0];
        let values = (b0.start..=b0.end())
            .map(|n| block_diag(&self.blocks.iter().map(|b| b.get(n).unwrap().clone()).collect::<Vec<_>>()))
            .collect();
        WindowedValues::new(b0.start, values)
    }
}

/// Kinematic similarity to `diag(B_1, …, B_ℓ)` with `Σ(B_i) ≈ [a_i, b_i]`.
pub fn block_diagonalize(seq: &MatrixSequence, sigma: &SpectrumEstimate, horizon: i64) -> Result<BlockDecomposition> {
    block_diagonalize_with(seq, sigma, horizon, &BlockOptions::default())
}

pub fn block_diagonalize_with(
    seq: &MatrixSequence,
    sigma: &SpectrumEstimate,
    horizon: i64,
    opts: &BlockOptions,
) -> Result<BlockDecomposition> {
    if horizon < 1 {
        return Err(Error::Precondition("horizon must be positive".into()));
    }
    let d = seq.dimension();
    if sigma.ell > d {
        return Err(Error::Precondition(format!("{} intervals exceed dimension {d}", sigma.ell)));
    }
    if sigma.ell <= 1 {
        return Ok(BlockDecomposition {
            transform: SimilarityTransform::identity(d, -horizon, horizon + 1),
            blocks: vec![seq.sample(-horizon, horizon)],
            coupling: Vec::new(),
        });
    }
    let margin = opts.margin.max(horizon);
    let outer = horizon + margin * sigma.ell as i64;
    let values = seq.sample(-outer, outer);
    let (f, blocks, coupling) = split_recursive(&values, &sigma.intervals, margin, opts)?;
    let transform = SimilarityTransform::new(-horizon, (-horizon..=horizon + 1).map(|n| f.get(n).unwrap().clone()).collect())?;
    let blocks: Vec<WindowedValues> = blocks.iter().map(|b| b.restrict(-horizon, horizon)).collect();

    let window = (horizon as usize).max(1);
    for (i, (b, iv)) in blocks.iter().zip(&sigma.intervals).enumerate() {
        let s = spectrum_via_triangular(&b.to_sequence()?, horizon, window)?;
        let (lo, hi) = s.hull().ok_or(Error::GapUnresolvable(i))?;
        if lo < iv.0 - opts.spectrum_tol || hi > iv.1 + opts.spectrum_tol {
            return Err(Error::GapUnresolvable(i));
        }
    }
    Ok(BlockDecomposition { transform, blocks, coupling })
}

/// Splits off the top interval on `values`' window and recurses on the
/// leading block; each level gives up `margin` steps on both sides.
fn split_recursive(
    values: &WindowedValues,
    intervals: &[(f64, f64)],
    margin: i64,
    opts: &BlockOptions,
) -> Result<(WindowedValues, Vec<WindowedValues>, Vec<f64>)> {
    let d = values.dimension();
    let (lo, hi) = (values.start, values.end());
    if intervals.len() <= 1 {
        let eye = vec![identity(d); (hi - lo + 2) as usize];
        return Ok((WindowedValues::new(lo, eye), vec![values.clone()], Vec::new()));
    }
    let l = intervals.len();
    let gap = l - 1;
    let lambda = (intervals[l - 2].1 * intervals[l - 1].0).sqrt();
    let h = (-lo).min(hi);
    let op = TransitionOperator::on_window(&values.to_sequence()?, -h, h)?.with_frame_seed(opts.frame_seed);
    let sp = splitting(&op, h)?;
    let m = sp.rank_at(lambda, DEFAULT_GAP_TOL).map_err(|_| Error::GapUnresolvable(gap))?;
    if m == 0 || m == d {
        return Err(Error::GapUnresolvable(gap));
    }
    let inner = h - margin;
    if inner < 1 {
        return Err(Error::Precondition("window too short for the requested split depth".into()));
    }
    let fs: Vec<Mat> = (-inner..=inner + 1)
        .map(|n| {
            let (s, u) = sp.subspaces(n, m);
            let mut f = Mat::zeros(d, d);
            f.columns_mut(0, m).copy_from(&s);
            f.columns_mut(m, d - m).copy_from(&u);
            f
        })
        .collect();
    let f = SimilarityTransform::new(-inner, fs)?;
    let b = conjugate(values, &f)?;
    let mut worst: f64 = 0.0;
    let mut lead = Vec::with_capacity(b.values.len());
    let mut trail = Vec::with_capacity(b.values.len());
    for bn in &b.values {
        let off = inf_norm(&bn.view((0, m), (m, d - m)).into_owned())
            .max(inf_norm(&bn.view((m, 0), (d - m, m)).into_owned()));
        worst = worst.max(off / inf_norm(bn));
        lead.push(bn.view((0, 0), (m, m)).into_owned());
        trail.push(bn.view((m, m), (d - m, d - m)).into_owned());
    }
    if worst > opts.coupling_tol {
        return Err(Error::CouplingResidual { index: gap, value: worst });
    }
    let lead = WindowedValues::new(b.start, lead);
    let trail = WindowedValues::new(b.start, trail);
    let (f_lead, mut blocks, mut coupling) = split_recursive(&lead, &intervals[..l - 1], margin, opts)?;
    // F = F_top · diag(F', I) on the window of F'
    let composed = (f_lead.start..=f_lead.end())
        .map(|n| f.get(n).unwrap() * block_diag(&[f_lead.get(n).unwrap().clone(), identity(d - m)]))
        .collect();
    let new_lo = f_lead.start;
    let new_hi = f_lead.end() - 1;
    blocks.push(trail.restrict(new_lo, new_hi));
    coupling.push(worst);
    Ok((WindowedValues::new(new_lo, composed), blocks, coupling))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthogonality_residual;
    use nalgebra::DVector;

    fn mat(r: usize, v: &[f64]) -> Mat {
        Mat::from_row_slice(r, r, v)
    }

    fn diag(v: &[f64]) -> Mat {
        Mat::from_diagonal(&DVector::from_row_slice(v))
    }

    fn rotation(angle: f64) -> Mat {
        let (s, c) = angle.sin_cos();
        mat(2, &[c, -s, s, c])
    }

    fn constant_transform(f: Mat, lo: i64, hi: i64) -> SimilarityTransform {
        SimilarityTransform::new(lo, vec![f; (hi - lo + 1) as usize]).unwrap()
    }

    #[test]
    fn conjugate_examples() {
        let a = MatrixSequence::constant(mat(2, &[1.0, 3.0, -2.0, 0.5])).unwrap().sample(-3, 3);
        let b = conjugate(&a, &SimilarityTransform::identity(2, -3, 4)).unwrap();
        assert_eq!(b, a);

        let a = MatrixSequence::constant(diag(&[1.0, 2.0])).unwrap().sample(0, 4);
        let b = conjugate(&a, &constant_transform(diag(&[2.0, 1.0]), 0, 5)).unwrap();
        assert!(b.values.iter().all(|m| inf_norm(&(m - diag(&[1.0, 2.0]))) < 1e-15));

        let a = MatrixSequence::constant(mat(2, &[0.0, 1.0, 1.0, 0.0])).unwrap().sample(0, 4);
        let b = conjugate(&a, &constant_transform(diag(&[2.0, 1.0]), 0, 5)).unwrap();
        // direct product oracle: diag(1/2, 1)·[[0,1],[1,0]]·diag(2, 1)
        let oracle = mat(2, &[0.0, 0.5, 2.0, 0.0]);
        assert!(b.values.iter().all(|m| inf_norm(&(m - &oracle)) < 1e-15));
    }

    #[test]
    fn conjugate_window_mismatch() {
        let a = MatrixSequence::scalar_constant(1.0).unwrap().sample(10, 20);
        let f = SimilarityTransform::identity(1, 0, 5);
        assert!(matches!(conjugate(&a, &f), Err(Error::WindowMismatch(_))));
    }

    #[test]
    fn singular_transform_rejected() {
        let r = SimilarityTransform::new(3, vec![mat(2, &[1.0, 1.0, 1.0, 1.0])]);
        assert_eq!(r, Err(Error::SingularTransform(3)));
    }

    #[test]
    fn qr_of_triangular_is_identity() {
        let seq = MatrixSequence::constant(mat(2, &[0.5, 7.0, 0.0, 3.0])).unwrap();
        let (q, c) = qr_triangularize(&seq, (-5, 5)).unwrap();
        for qn in &q.values {
            assert!(inf_norm(&(qn - identity(2))) < 1e-14);
        }
        for cn in &c.values {
            assert!(inf_norm(&(cn - seq.evaluate(0))) < 1e-13);
        }
    }

    #[test]
    fn qr_sign_convention() {
        let seq = MatrixSequence::constant(diag(&[-1.0, 2.0])).unwrap();
        let (q, c) = qr_triangularize(&seq, (0, 6)).unwrap();
        for (i, cn) in c.values.iter().enumerate() {
            assert!(inf_norm(&(cn - diag(&[1.0, 2.0]))) < 1e-14);
            // 2×2 QR oracle: Q(n) = diag((−1)^n, 1)
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            assert!(inf_norm(&(&q.values[i] - diag(&[sign, 1.0]))) < 1e-14);
        }
    }

    #[test]
    fn qr_random_fixture_residual() {
        let seq = MatrixSequence::periodic(vec![
            mat(3, &[1.2, -0.3, 0.5, 0.1, 0.8, -0.7, 0.4, 0.2, 1.5]),
            mat(3, &[0.6, 0.9, 0.0, -0.5, 1.1, 0.3, 0.2, -0.4, 0.9]),
        ])
        .unwrap();
        let (q, c) = qr_triangularize(&seq, (-50, 50)).unwrap();
        for n in -50..=50 {
            let lhs = seq.evaluate(n) * q.get(n).unwrap();
            let rhs = q.get(n + 1).unwrap() * c.get(n).unwrap();
            assert!(inf_norm(&(lhs - rhs)) <= 1e-10);
            assert!(orthogonality_residual(q.get(n).unwrap()) <= 1e-12);
            assert_eq!(lower_residual(c.get(n).unwrap()), 0.0);
            assert!((0..3).all(|r| c.get(n).unwrap()[(r, r)] > 0.0));
        }
        let report = check_similarity(&q, &seq.sample(-50, 50), &c, 1e-10);
        assert!(report.holds);
    }

    #[test]
    fn beta_examples() {
        let c = WindowedValues::new(0, vec![mat(2, &[1.0, 10.0, 0.0, 2.0])]);
        let g = beta_transform(&c, 0.01).unwrap();
        assert!(inf_norm(&(&g.values[0] - mat(2, &[1.0, 0.1, 0.0, 2.0]))) < 1e-15);

        let c = WindowedValues::new(0, vec![diag(&[3.0, -1.0, 0.5])]);
        assert_eq!(beta_transform(&c, 0.37).unwrap(), c);

        let c = WindowedValues::new(0, vec![mat(3, &[1.0, 2.0, 3.0, 0.0, 1.0, 4.0, 0.0, 0.0, 1.0])]);
        let g = beta_transform(&c, 0.1).unwrap();
        assert!((g.values[0][(0, 2)] - 0.03).abs() < 1e-16);
        assert!((g.values[0][(0, 1)] - 0.2).abs() < 1e-16);

        let lower = WindowedValues::new(0, vec![mat(2, &[1.0, 0.0, 1.0, 1.0])]);
        assert!(matches!(beta_transform(&lower, 0.5), Err(Error::NotTriangular(_))));
    }

    #[test]
    fn beta_equals_conjugation_by_d_beta() {
        let c = WindowedValues::new(0, vec![mat(3, &[1.0, 2.0, 3.0, 0.0, 1.0, 4.0, 0.0, 0.0, 1.0])]);
        let beta = 0.3;
        let db = beta_matrix(3, beta);
        let direct = inverse(&db).unwrap() * &c.values[0] * &db;
        let g = beta_transform(&c, beta).unwrap();
        assert!(inf_norm(&(direct - &g.values[0])) < 1e-14);
    }

    #[test]
    fn scale_examples() {
        let s = scale_system(&MatrixSequence::scalar_constant(2.0).unwrap(), 0.5).unwrap();
        assert_eq!(s.evaluate(9)[(0, 0)], 1.0);
        let two_level = MatrixSequence::piecewise(Mat::from_element(1, 1, 0.5), vec![(0, Mat::from_element(1, 1, 2.0))]).unwrap();
        let s = scale_system(&two_level, 2.0).unwrap();
        assert_eq!((s.evaluate(-1)[(0, 0)], s.evaluate(0)[(0, 0)]), (1.0, 4.0));
        assert_eq!(scale_system(&two_level, 0.0), Err(Error::NonpositiveMu(0.0)));
    }

    #[test]
    fn check_similarity_examples() {
        let a = MatrixSequence::constant(mat(2, &[1.0, 2.0, 3.0, 4.0])).unwrap().sample(0, 5);
        let eye = SimilarityTransform::identity(2, 0, 6);
        let r = check_similarity(&eye, &a, &a, 1e-12);
        assert!(r.holds && r.max_residual == 0.0);
        let twice = WindowedValues::new(0, a.values.iter().map(|m| m * 2.0).collect());
        assert!(!check_similarity(&eye, &a, &twice, 1e-3).holds);
    }

    #[test]
    fn block_diagonal_of_diagonal_is_trivial() {
        let seq = MatrixSequence::constant(diag(&[0.5, 3.0])).unwrap();
        let sigma = SpectrumEstimate::new(vec![(0.5, 0.5), (3.0, 3.0)], 0.0, 50, "scan");
        let bd = block_diagonalize(&seq, &sigma, 50).unwrap();
        assert_eq!(bd.blocks.len(), 2);
        for n in -50..=50 {
            assert!((bd.blocks[0].get(n).unwrap()[(0, 0)] - 0.5).abs() < 1e-10);
            assert!((bd.blocks[1].get(n).unwrap()[(0, 0)] - 3.0).abs() < 1e-10);
        }
        for f in &bd.transform.values {
            // F = I up to column signs
            assert!(f[(0, 1)].abs() < 1e-10 && f[(1, 0)].abs() < 1e-10);
            assert!((f[(0, 0)].abs() - 1.0).abs() < 1e-10 && (f[(1, 1)].abs() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn block_diagonal_of_rotated() {
        let r = rotation(0.9);
        let a = &r * mat(2, &[0.5, 1.0, 0.0, 3.0]) * r.transpose();
        let seq = MatrixSequence::constant(a).unwrap();
        let sigma = SpectrumEstimate::new(vec![(0.5, 0.5), (3.0, 3.0)], 0.0, 60, "scan");
        let bd = block_diagonalize(&seq, &sigma, 60).unwrap();
        assert!((bd.blocks[0].get(7).unwrap()[(0, 0)] - 0.5).abs() < 0.05);
        assert!((bd.blocks[1].get(-7).unwrap()[(0, 0)] - 3.0).abs() < 0.05);
        let report = check_similarity(&bd.transform, &seq.sample(-60, 60), &bd.assembled(), 1e-8);
        assert!(report.holds, "{report:?}");
        assert!(bd.coupling.iter().all(|c| *c < DEFAULT_COUPLING_TOL));
    }

    #[test]
    fn block_diagonal_three_way() {
        let r = mat(3, &[0.8, -0.6, 0.0, 0.6, 0.8, 0.0, 0.0, 0.0, 1.0]);
        let a = &r * mat(3, &[0.5, 0.4, 0.1, 0.0, 1.5, -0.3, 0.0, 0.0, 4.0]) * r.transpose();
        let seq = MatrixSequence::constant(a).unwrap();
        let sigma = SpectrumEstimate::new(vec![(0.5, 0.5), (1.5, 1.5), (4.0, 4.0)], 0.0, 40, "scan");
        let bd = block_diagonalize(&seq, &sigma, 40).unwrap();
        let want = [0.5, 1.5, 4.0];
        for (b, w) in bd.blocks.iter().zip(want) {
            assert!((b.get(0).unwrap()[(0, 0)] - w).abs() < 1e-6);
        }
        let report = check_similarity(&bd.transform, &seq.sample(-40, 40), &bd.assembled(), 1e-8);
        assert!(report.holds, "{report:?}");
    }

    #[test]
    fn single_interval_short_circuits() {
        let seq = MatrixSequence::piecewise(Mat::from_element(1, 1, 0.5), vec![(0, Mat::from_element(1, 1, 2.0))]).unwrap();
        let sigma = SpectrumEstimate::new(vec![(0.5, 2.0)], 0.0, 30, "scan");
        let bd = block_diagonalize(&seq, &sigma, 30).unwrap();
        assert_eq!(bd.blocks, vec![seq.sample(-30, 30)]);
        assert!(bd.transform.values.iter().all(|f| f[(0, 0)] == 1.0));
    }
}
