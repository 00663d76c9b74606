//! Dichotomy spectrum as a union of closed intervals.

use serde::Serialize;

use crate::dichotomy::{bohl_interval_of_values, splitting, test_dichotomy_with, DichotomyOptions, Verdict};
use crate::error::{Error, Result};
use crate::propagator::TransitionOperator;
use crate::similarity::qr_triangularize;
use crate::system::MatrixSequence;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumEstimate {
    pub intervals: Vec<(f64, f64)>,
    pub ell: usize,
    /// Widest bracket left around a reported endpoint.
    pub resolution: f64,
    pub horizon: i64,
    pub method: String,
}

impl SpectrumEstimate {
    pub fn new(mut intervals: Vec<(f64, f64)>, resolution: f64, horizon: i64, method: &str) -> Self {
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        SpectrumEstimate {
            ell: intervals.len(),
            intervals,
            resolution,
            horizon,
            method: method.to_string(),
        }
    }

    /// Smallest and largest spectral value.
    pub fn hull(&self) -> Option<(f64, f64)> {
        Some((self.intervals.first()?.0, self.intervals.last()?.1))
    }

    /// Distance from `x` to the nearest interval.
    pub fn distance(&self, x: f64) -> f64 {
        self.intervals
            .iter()
            .map(|&(a, b)| if x < a { a - x } else if x > b { x - b } else { 0.0 })
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the interval containing `x` within `tol`.
    pub fn locate(&self, x: f64, tol: f64) -> Option<usize> {
        self.intervals.iter().position(|&(a, b)| x >= a - tol && x <= b + tol)
    }

    /// Merges intervals closer than `gap`.
    pub fn merged(mut self, gap: f64) -> Self {
        self.intervals = merge_intervals(std::mem::take(&mut self.intervals), gap);
        self.ell = self.intervals.len();
        self
    }
}

fn merge_intervals(mut v: Vec<(f64, f64)>, gap: f64) -> Vec<(f64, f64)> {
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a - last.1 < gap => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub grid: usize,
    pub eps_lambda: f64,
    pub horizon: i64,
    pub dichotomy: DichotomyOptions,
}

impl ScanOptions {
    pub fn new(horizon: i64) -> Self {
        ScanOptions {
            lambda_lo: 1e-3,
            lambda_hi: 1e3,
            grid: 64,
            eps_lambda: 1e-3,
            horizon,
            dichotomy: DichotomyOptions::default(),
        }
    }
}

/// λ-scan over dichotomy verdicts with bisection of every verdict change.
pub fn spectrum_scan(
    op: &TransitionOperator,
    lambda_lo: f64,
    lambda_hi: f64,
    grid: usize,
    eps_lambda: f64,
    horizon: i64,
) -> Result<SpectrumEstimate> {
    spectrum_scan_with(
        op,
        &ScanOptions { lambda_lo, lambda_hi, grid, eps_lambda, ..ScanOptions::new(horizon) },
    )
}

struct Scanner<'a> {
    op: &'a TransitionOperator,
    opts: &'a ScanOptions,
    /// Per-step growth rates, ascending.
    rates: Vec<f64>,
    /// `(λ, rank)` with `None` for "in spectrum".
    points: Vec<(f64, Option<usize>)>,
}

impl Scanner<'_> {
    fn verdict(&mut self, lambda: f64) -> Result<Option<usize>> {
        let v = test_dichotomy_with(self.op, lambda, self.opts.horizon, self.opts.dichotomy)?;
        let r = match v {
            Verdict::Dichotomy(w) => Some(w.projector.rank),
            Verdict::Refusal(_) => None,
        };
        self.points.push((lambda, r));
        Ok(r)
    }

    /// Growth rates clearly below `ln λ`.
    fn below(&self, lambda: f64) -> usize {
        let cut = lambda.ln() - self.opts.dichotomy.gap_tol;
        self.rates.iter().filter(|r| **r < cut).count()
    }

    /// Refines `(l, r)` until every verdict change is bracketed within `eps/2`.
    ///
    /// Two refusals separated by a growth rate may hide a gap between them,
    /// so such brackets are refined as well.
    fn refine(&mut self, l: f64, vl: Option<usize>, r: f64, vr: Option<usize>) -> Result<()> {
        if r - l <= self.opts.eps_lambda / 2.0 {
            return Ok(());
        }
        let split_refusal = vl.is_none() && vr.is_none() && self.below(l) != self.below(r);
        if vl == vr && !split_refusal {
            return Ok(());
        }
        let mid = (l * r).sqrt();
        let vm = self.verdict(mid)?;
        self.refine(l, vl, mid, vm)?;
        self.refine(mid, vm, r, vr)
    }
}

pub fn spectrum_scan_with(op: &TransitionOperator, opts: &ScanOptions) -> Result<SpectrumEstimate> {
    let (lo, hi) = (opts.lambda_lo, opts.lambda_hi);
    if !(lo > 0.0 && lo < hi) {
        return Err(Error::Precondition(format!("λ range [{lo}, {hi}] must satisfy 0 < lo < hi")));
    }
    if opts.grid < 8 {
        return Err(Error::Precondition("grid must have at least 8 points".into()));
    }
    if !(opts.eps_lambda > 0.0) {
        return Err(Error::Precondition("eps_lambda must be positive".into()));
    }
    let rates = splitting(op, opts.horizon)?.growth_rates();
    let mut sc = Scanner { op, opts, rates, points: Vec::new() };
    let ratio = (hi / lo).ln() / (opts.grid - 1) as f64;
    let grid: Vec<f64> = (0..opts.grid)
        .map(|i| if i + 1 == opts.grid { hi } else { lo * (ratio * i as f64).exp() })
        .collect();
    let mut verdicts = Vec::with_capacity(grid.len());
    for &l in &grid {
        verdicts.push(sc.verdict(l)?);
    }
    // rank 0 below and d above the spectrum, otherwise part of it lies outside
    if verdicts[0] != Some(0) {
        return Err(Error::RangeTooNarrow(lo));
    }
    if verdicts[grid.len() - 1] != Some(op.dimension()) {
        return Err(Error::RangeTooNarrow(hi));
    }
    for i in 0..grid.len() - 1 {
        sc.refine(grid[i], verdicts[i], grid[i + 1], verdicts[i + 1])?;
    }
    let mut pts = sc.points;
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|a, b| a.0 == b.0);

    // Refused runs become intervals; a rank jump between adjacent accepted
    // points is a spectral component thinner than the resolution.
    let g = opts.dichotomy.gap_tol;
    let mut raw = Vec::new();
    let mut resolution: f64 = 0.0;
    let mut open: Option<f64> = None;
    for w in pts.windows(2) {
        let ((l, vl), (r, vr)) = (w[0], w[1]);
        let mid = (l * r).sqrt();
        match (vl, vr) {
            (Some(_), None) => {
                open = Some(mid);
                resolution = resolution.max(r - l);
            }
            (None, Some(_)) => {
                let a = open.take().expect("refused run starts after an accepted point");
                raw.push((a, mid));
                resolution = resolution.max(r - l);
            }
            (Some(x), Some(y)) if x != y => {
                raw.push((mid, mid));
                resolution = resolution.max(r - l);
            }
            _ => {}
        }
    }
    // The refused set is the spectrum widened by the deadband e^{±g}.
    let debiased = raw
        .into_iter()
        .map(|(a, b): (f64, f64)| {
            let (a2, b2) = (a * g.exp(), b * (-g).exp());
            if a2 <= b2 {
                (a2, b2)
            } else {
                let m = (a * b).sqrt();
                (m, m)
            }
        })
        .collect();
    let intervals = merge_intervals(debiased, opts.eps_lambda);
    Ok(SpectrumEstimate::new(intervals, resolution, opts.horizon, "scan"))
}

/// Spectrum through QR triangularization and scalar Bohl intervals of the
/// diagonal.
///
/// The QR recursion is started at `-2N` so that its transient has died out
/// on `[-N, N]`.
pub fn spectrum_via_triangular(seq: &MatrixSequence, horizon: i64, window: usize) -> Result<SpectrumEstimate> {
    if horizon < 1 || window == 0 || window as i64 > 2 * horizon {
        return Err(Error::Precondition(format!(
            "window {window} must lie in [1, 2N] for N = {horizon}"
        )));
    }
    let (_, c) = qr_triangularize(seq, (-2 * horizon, horizon))?;
    let d = seq.dimension();
    let mut intervals = Vec::with_capacity(d);
    for r in 0..d {
        let values: Vec<f64> = (-horizon..horizon).map(|n| c.get(n).expect("in window")[(r, r)]).collect();
        let b = bohl_interval_of_values(-horizon, &values, &[window])?;
        intervals.push((b.lo, b.hi));
    }
    let intervals = merge_intervals(intervals, 0.0);
    Ok(SpectrumEstimate::new(intervals, 0.0, horizon, "triangular"))
}

/// `Σ(λ⁻¹A) = Σ(A)/λ`.
pub fn scale_spectrum(sigma: &SpectrumEstimate, lambda: f64) -> Result<SpectrumEstimate> {
    if !(lambda > 0.0) {
        return Err(Error::NonpositiveLambda(lambda));
    }
    let mut out = sigma.clone();
    for iv in &mut out.intervals {
        *iv = (iv.0 / lambda, iv.1 / lambda);
    }
    out.resolution /= lambda;
    Ok(out)
}

/// λ below, between and above the intervals: `a₁/2`, geometric gap
/// midpoints, `2b_ℓ`.
pub fn probe_points(sigma: &SpectrumEstimate) -> Vec<f64> {
    let iv = &sigma.intervals;
    let mut pts = Vec::with_capacity(iv.len() + 1);
    if let (Some(first), Some(last)) = (iv.first(), iv.last()) {
        pts.push(first.0 / 2.0);
        for w in iv.windows(2) {
            pts.push((w[0].1 * w[1].0).sqrt());
        }
        pts.push(last.1 * 2.0);
    }
    pts
}

/// Projector ranks at [`probe_points`], as `(gap index, rank)`.
///
/// Fails with [`Error::AmbiguousSplitting`] when a probe is refused and with
/// [`Error::GapUnresolvable`] when the ranks are not `0 < … < d` strictly
/// increasing.
pub fn rank_profile(op: &TransitionOperator, sigma: &SpectrumEstimate, horizon: i64) -> Result<Vec<(usize, usize)>> {
    if sigma.ell == 0 {
        return Err(Error::Precondition("rank profile needs at least one interval".into()));
    }
    let d = op.dimension();
    let mut out = Vec::new();
    for (i, lambda) in probe_points(sigma).into_iter().enumerate() {
        match test_dichotomy_with(op, lambda, horizon, DichotomyOptions::default())? {
            Verdict::Dichotomy(w) => out.push((i, w.projector.rank)),
            Verdict::Refusal(r) => return Err(Error::AmbiguousSplitting { lambda, rate: r.rate }),
        }
    }
    let ranks: Vec<usize> = out.iter().map(|p| p.1).collect();
    if ranks[0] != 0 {
        return Err(Error::GapUnresolvable(0));
    }
    if ranks[ranks.len() - 1] != d {
        return Err(Error::GapUnresolvable(ranks.len() - 1));
    }
    if let Some(i) = ranks.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::GapUnresolvable(i + 1));
    }
    Ok(out)
}

pub fn full_spectrum_condition(sigma: &SpectrumEstimate, d: usize) -> bool {
    sigma.ell == d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use nalgebra::DVector;

    fn scalar(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn diag(v: &[f64]) -> MatrixSequence {
        MatrixSequence::constant(Mat::from_diagonal(&DVector::from_row_slice(v))).unwrap()
    }

    fn rotated(v: &[f64; 2], angle: f64) -> MatrixSequence {
        let (s, c) = angle.sin_cos();
        let r = Mat::from_row_slice(2, 2, &[c, -s, s, c]);
        let d = Mat::from_diagonal(&DVector::from_row_slice(v));
        MatrixSequence::constant(&r * d * r.transpose()).unwrap()
    }

    fn close(a: &[(f64, f64)], b: &[(f64, f64)], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x.0 - y.0).abs() <= tol && (x.1 - y.1).abs() <= tol)
    }

    #[test]
    fn scan_constant_scalar() {
        let op = TransitionOperator::new(&MatrixSequence::scalar_constant(0.5).unwrap(), 100).unwrap();
        let s = spectrum_scan(&op, 0.1, 10.0, 32, 1e-3, 100).unwrap();
        assert!(close(&s.intervals, &[(0.5, 0.5)], 1e-3), "{:?}", s.intervals);
        assert_eq!(s.ell, 1);
        assert!(s.resolution <= 1e-3);
    }

    #[test]
    fn scan_diagonal() {
        let op = TransitionOperator::new(&diag(&[0.5, 3.0]), 100).unwrap();
        let s = spectrum_scan(&op, 0.1, 10.0, 32, 1e-3, 100).unwrap();
        assert!(close(&s.intervals, &[(0.5, 0.5), (3.0, 3.0)], 3e-3), "{:?}", s.intervals);
        assert!(full_spectrum_condition(&s, 2));
    }

    #[test]
    fn scan_finds_gap_between_adjacent_refusals() {
        // grid points land on both eigenvalues, so neighbouring samples are
        // both refused with the gap between them unsampled
        let q: f64 = 1.07;
        let op = TransitionOperator::new(&diag(&[1.0, q]), 200).unwrap();
        let s = spectrum_scan(&op, q.powi(-3), q.powi(4), 8, 1e-3, 200).unwrap();
        assert!(close(&s.intervals, &[(1.0, 1.0), (q, q)], 3e-3), "{:?}", s.intervals);
    }

    #[test]
    fn scan_two_level() {
        let seq = MatrixSequence::piecewise(scalar(0.5), vec![(0, scalar(2.0))]).unwrap();
        let op = TransitionOperator::new(&seq, 300).unwrap();
        let s = spectrum_scan(&op, 0.1, 10.0, 32, 1e-3, 300).unwrap();
        assert!(close(&s.intervals, &[(0.5, 2.0)], 0.05), "{:?}", s.intervals);
    }

    #[test]
    fn scan_range_too_narrow() {
        let op = TransitionOperator::new(&MatrixSequence::scalar_constant(0.5).unwrap(), 50).unwrap();
        assert!(matches!(spectrum_scan(&op, 0.5, 10.0, 16, 1e-3, 50), Err(Error::RangeTooNarrow(_))));
        assert!(matches!(spectrum_scan(&op, 0.01, 0.5, 16, 1e-3, 50), Err(Error::RangeTooNarrow(_))));
        // a component entirely outside the range is detected through the rank
        let op = TransitionOperator::new(&diag(&[1.0, 3.0]), 50).unwrap();
        assert_eq!(spectrum_scan(&op, 0.1, 2.0, 16, 1e-3, 50), Err(Error::RangeTooNarrow(2.0)));
        assert_eq!(spectrum_scan(&op, 1.5, 10.0, 16, 1e-3, 50), Err(Error::RangeTooNarrow(1.5)));
    }

    #[test]
    fn triangular_examples() {
        let tri = MatrixSequence::constant(Mat::from_row_slice(2, 2, &[0.5, 7.0, 0.0, 3.0])).unwrap();
        let s = spectrum_via_triangular(&tri, 200, 200).unwrap();
        assert!(close(&s.intervals, &[(0.5, 0.5), (3.0, 3.0)], 1e-12), "{:?}", s.intervals);

        let s = spectrum_via_triangular(&rotated(&[0.5, 3.0], 0.7), 200, 200).unwrap();
        assert!(close(&s.intervals, &[(0.5, 0.5), (3.0, 3.0)], 0.05), "{:?}", s.intervals);

        let seq = MatrixSequence::piecewise(scalar(0.5), vec![(0, scalar(2.0))]).unwrap();
        let s = spectrum_via_triangular(&seq, 500, 200).unwrap();
        let b = crate::dichotomy::scalar_bohl_interval(&seq, 500, &[200]).unwrap();
        assert_eq!(s.intervals, vec![(b.lo, b.hi)]);
    }

    #[test]
    fn scale_examples() {
        let s = SpectrumEstimate::new(vec![(1.0, 2.0), (4.0, 8.0)], 0.0, 10, "scan");
        assert_eq!(scale_spectrum(&s, 2.0).unwrap().intervals, vec![(0.5, 1.0), (2.0, 4.0)]);
        assert_eq!(scale_spectrum(&s, 1.0).unwrap(), s);
        let p = SpectrumEstimate::new(vec![(0.5, 0.5)], 0.0, 10, "scan");
        assert_eq!(scale_spectrum(&p, 0.5).unwrap().intervals, vec![(1.0, 1.0)]);
        assert_eq!(scale_spectrum(&p, -1.0), Err(Error::NonpositiveLambda(-1.0)));
    }

    #[test]
    fn rank_profile_examples() {
        let op = TransitionOperator::new(&diag(&[0.5, 3.0]), 100).unwrap();
        let s = SpectrumEstimate::new(vec![(0.5, 0.5), (3.0, 3.0)], 0.0, 100, "scan");
        let r = rank_profile(&op, &s, 100).unwrap();
        assert_eq!(r, vec![(0, 0), (1, 1), (2, 2)]);

        let op = TransitionOperator::new(&MatrixSequence::scalar_constant(2.0).unwrap(), 50).unwrap();
        let s = SpectrumEstimate::new(vec![(2.0, 2.0)], 0.0, 50, "scan");
        assert_eq!(rank_profile(&op, &s, 50).unwrap(), vec![(0, 0), (1, 1)]);

        // a wrong estimate puts a probe inside the true spectrum
        let bad = SpectrumEstimate::new(vec![(0.9, 1.0), (4.0, 5.0)], 0.0, 50, "scan");
        assert!(matches!(rank_profile(&op, &bad, 50), Err(Error::AmbiguousSplitting { .. })));
    }

    #[test]
    fn full_spectrum_examples() {
        let s = SpectrumEstimate::new(vec![(1.0, 2.0)], 0.0, 10, "scan");
        assert!(!full_spectrum_condition(&s, 2));
        assert!(full_spectrum_condition(&s, 1));
    }

    #[test]
    fn merging() {
        let s = SpectrumEstimate::new(vec![(1.0, 2.0), (2.0005, 3.0), (5.0, 6.0)], 0.0, 10, "scan").merged(1e-3);
        assert_eq!(s.intervals, vec![(1.0, 3.0), (5.0, 6.0)]);
        assert_eq!(s.ell, 2);
    }
}
