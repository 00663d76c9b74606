//! Finite-horizon exponential dichotomy tests.
//!
//! For a window `[-N, N]` the cocycle is split once, independently of λ:
//!
//! * a forward discrete-QR sweep `A(j)Q_f(j) = Q_f(j+1)R_j` started far in
//!   the past, whose leading columns converge to the most expanding
//!   (unstable) subspaces;
//! * a backward sweep `A(j)⁻¹Q_b(j+1) = Q_b(j)R̃_j` started far in the
//!   future, whose leading columns converge to the stable subspaces.
//!
//! Both sweeps keep the subspaces exactly invariant in their own
//! coordinates, so the cocycle restricted to either bundle is a product of
//! small triangular blocks. That gives every norm `‖X(n,k)P(k)‖` and
//! `‖X(n,k)(I−P(k))‖` without ever forming `X(k)⁻¹`. Weighting by λ only
//! shifts `log ‖·‖` by `∓(n−k)·ln λ`, so envelopes are tabulated once per
//! projector rank and every λ query afterwards is a cheap fit.

use std::sync::{Arc, OnceLock};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{generic_frame, inf_norm, inverse, qr_positive, Mat};
use crate::propagator::TransitionOperator;
use crate::system::MatrixSequence;

/// Default deadband in log scale separating "dichotomy" from "in spectrum".
pub const DEFAULT_GAP_TOL: f64 = 0.02;
/// Default relative inflation of the fitted K.
pub const DEFAULT_FIT_MARGIN: f64 = 0.05;
/// All pairs with `n − k` up to this separation are sampled.
const SHORT_SEPARATION: i64 = 64;
/// Number of long walks used for separations beyond [`SHORT_SEPARATION`].
const LONG_WALKS: i64 = 64;
/// `ln K` above which the fitted constant is treated as unbounded.
const MAX_LOG_K: f64 = 600.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Projector {
    #[serde(serialize_with = "crate::report::serialize_matrix")]
    pub matrix: Mat,
    pub rank: usize,
}

impl Projector {
    pub fn new(matrix: Mat) -> Self {
        let svd = matrix.clone().svd(false, false);
        let rank = svd.singular_values.iter().filter(|s| **s > 0.5).count();
        Projector { matrix, rank }
    }

    /// `‖P² − P‖∞`.
    pub fn idempotency_residual(&self) -> f64 {
        inf_norm(&(&self.matrix * &self.matrix - &self.matrix))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DichotomyWitness {
    pub k_const: f64,
    pub rho: f64,
    pub projector: Projector,
    pub horizon: i64,
    /// `max (‖·‖ / Kρ^{|n−k|}) − 1` over the sampled pairs; `<= 0` iff every bound holds.
    pub max_residual: f64,
    pub lambda: f64,
    /// True when the system is eventually periodic and the horizon is long
    /// enough for the finite check to decide the verdict on all of ℤ.
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Refusal {
    pub lambda: f64,
    pub horizon: i64,
    /// Pair `(n, k)` worst violating the weakest admissible rate.
    pub worst_pair: Option<(i64, i64)>,
    /// Fitted (or ambiguous) per-step log growth rate.
    pub rate: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Dichotomy(DichotomyWitness),
    Refusal(Refusal),
}

impl Verdict {
    pub fn is_dichotomy(&self) -> bool {
        matches!(self, Verdict::Dichotomy(_))
    }

    pub fn rank(&self) -> Option<usize> {
        match self {
            Verdict::Dichotomy(w) => Some(w.projector.rank),
            Verdict::Refusal(_) => None,
        }
    }

    pub fn witness(&self) -> Option<&DichotomyWitness> {
        match self {
            Verdict::Dichotomy(w) => Some(w),
            Verdict::Refusal(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DichotomyOptions {
    pub gap_tol: f64,
    pub fit_margin: f64,
}

impl Default for DichotomyOptions {
    fn default() -> Self {
        DichotomyOptions { gap_tol: DEFAULT_GAP_TOL, fit_margin: DEFAULT_FIT_MARGIN }
    }
}

/// Worst log-norm per separation, with the start index attaining it.
#[derive(Debug, Clone)]
struct Envelope {
    value: Vec<f64>,
    start: Vec<i64>,
}

impl Envelope {
    fn empty(len: usize) -> Self {
        Envelope { value: vec![f64::NEG_INFINITY; len], start: vec![0; len] }
    }

    fn record(&mut self, t: usize, v: f64, k: i64) {
        if v > self.value[t] {
            self.value[t] = v;
            self.start[t] = k;
        }
    }
}

#[derive(Debug)]
struct RankTables {
    stable: Envelope,
    unstable: Envelope,
    projector0: Mat,
}

/// λ-independent splitting data of a cocycle on `[-N, N]`.
#[derive(Debug)]
pub struct Splitting {
    horizon: i64,
    dimension: usize,
    /// Accumulated `ln R_j[i,i]` of the forward sweep over `[-N/2, N)`.
    growth: Vec<f64>,
    growth_steps: i64,
    qf: Vec<Mat>,
    rf: Vec<Mat>,
    qb: Vec<Mat>,
    rb: Vec<Mat>,
    tables: Vec<OnceLock<Option<RankTables>>>,
}

impl Splitting {
    pub fn horizon(&self) -> i64 {
        self.horizon
    }

    fn idx(&self, n: i64) -> usize {
        (n + self.horizon) as usize
    }

    /// Per-step log growth rates of the unweighted cocycle, ascending.
    pub fn growth_rates(&self) -> Vec<f64> {
        let steps = self.growth_steps as f64;
        let mut r: Vec<f64> = self.growth.iter().map(|g| g / steps).collect();
        r.sort_by(f64::total_cmp);
        r
    }

    /// Rank of the stable projector at λ, or the offending rate when one
    /// growth rate sits inside the deadband around `ln λ`.
    pub fn rank_at(&self, lambda: f64, gap_tol: f64) -> std::result::Result<usize, f64> {
        let ll = lambda.ln();
        let mut rank = 0;
        for r in self.growth_rates() {
            let shifted = r - ll;
            if shifted.abs() <= gap_tol {
                return Err(shifted);
            }
            if shifted < 0.0 {
                rank += 1;
            }
        }
        Ok(rank)
    }

    /// Orthonormal bases of the stable (first `m` backward columns) and
    /// unstable (first `d − m` forward columns) subspaces at `n`.
    pub fn subspaces(&self, n: i64, m: usize) -> (Mat, Mat) {
        let i = self.idx(n);
        let u = self.dimension - m;
        (self.qb[i].columns(0, m).into_owned(), self.qf[i].columns(0, u).into_owned())
    }

    /// Projector at `n` onto the stable subspace along the unstable one.
    pub fn projector_at(&self, n: i64, m: usize) -> Option<Mat> {
        let (s, u) = self.subspaces(n, m);
        projector_from_bases(&s, &u).map(|(p, _)| p)
    }

    fn tables(&self, m: usize) -> Option<&RankTables> {
        self.tables[m].get_or_init(|| self.build_tables(m)).as_ref()
    }

    fn build_tables(&self, m: usize) -> Option<RankTables> {
        let d = self.dimension;
        let u = d - m;
        let n_h = self.horizon;
        let len = (2 * n_h + 1) as usize;
        let mut ys = Vec::with_capacity(len);
        let mut yu = Vec::with_capacity(len);
        let mut projector0 = None;
        for n in -n_h..=n_h {
            let (s, un) = self.subspaces(n, m);
            let (p, vinv) = projector_from_bases(&s, &un)?;
            if n == 0 {
                projector0 = Some(p);
            }
            ys.push(vinv.rows(0, m).into_owned());
            yu.push(vinv.rows(m, u).into_owned());
        }
        // restricted one-step maps
        let ts: Vec<Mat> = self
            .rb
            .iter()
            .map(|r| inverse(&r.view((0, 0), (m, m)).into_owned()).unwrap_or_else(|| Mat::zeros(m, m)))
            .collect();
        let ru_inv: Vec<Mat> = self
            .rf
            .iter()
            .map(|r| inverse(&r.view((0, 0), (u, u)).into_owned()).unwrap_or_else(|| Mat::zeros(u, u)))
            .collect();

        let mut stride = ((2 * n_h) / LONG_WALKS).max(1);
        if stride % 2 == 0 {
            stride += 1;
        }
        // the walk grid is anchored at 0 and includes both window edges
        let is_long = |k: i64| k.rem_euclid(stride) == 0 || k.abs() == n_h;

        let mut stable = Envelope::empty(len);
        let mut unstable = Envelope::empty(len);
        if m > 0 {
            for k in -n_h..=n_h {
                let end = if is_long(k) { n_h } else { (k + SHORT_SEPARATION).min(n_h) };
                let mut w = ys[self.idx(k)].clone();
                let mut log_acc = 0.0;
                for n in k..=end {
                    if n > k {
                        w = &ts[self.idx(n - 1)] * &w;
                        let s = inf_norm(&w);
                        if s == 0.0 || !s.is_finite() {
                            break;
                        }
                        w /= s;
                        log_acc += s.ln();
                    }
                    let basis = self.qb[self.idx(n)].columns(0, m);
                    let v = inf_norm(&(basis * &w)).ln() + log_acc;
                    stable.record((n - k) as usize, v, k);
                }
            }
        }
        if u > 0 {
            for k in -n_h..=n_h {
                let end = if is_long(k) { -n_h } else { (k - SHORT_SEPARATION).max(-n_h) };
                let mut w = yu[self.idx(k)].clone();
                let mut log_acc = 0.0;
                for n in (end..=k).rev() {
                    if n < k {
                        w = &ru_inv[self.idx(n)] * &w;
                        let s = inf_norm(&w);
                        if s == 0.0 || !s.is_finite() {
                            break;
                        }
                        w /= s;
                        log_acc += s.ln();
                    }
                    let basis = self.qf[self.idx(n)].columns(0, u);
                    let v = inf_norm(&(basis * &w)).ln() + log_acc;
                    unstable.record((k - n) as usize, v, k);
                }
            }
        }
        Some(RankTables { stable, unstable, projector0: projector0? })
    }
}

/// Ranks `0` and `d` have the exact projectors `0` and `I`.
fn trivial_or(m: usize, d: usize, p: &Mat) -> Mat {
    if m == 0 {
        Mat::zeros(d, d)
    } else if m == d {
        Mat::identity(d, d)
    } else {
        p.clone()
    }
}

/// `P = V diag(I_m, 0) V⁻¹` for `V = [S U]`, together with `V⁻¹`.
fn projector_from_bases(s: &Mat, u: &Mat) -> Option<(Mat, Mat)> {
    let d = s.nrows().max(u.nrows());
    let m = s.ncols();
    let mut v = Mat::zeros(d, d);
    if m > 0 {
        v.columns_mut(0, m).copy_from(s);
    }
    if u.ncols() > 0 {
        v.columns_mut(m, u.ncols()).copy_from(u);
    }
    if crate::linalg::rcond(&v) < 1e-13 {
        return None;
    }
    let vinv = inverse(&v)?;
    let p = v.columns(0, m) * vinv.rows(0, m);
    Some((p, vinv))
}

/// Splitting of `op` on `[-horizon, horizon]`, cached on the operator.
pub fn splitting(op: &TransitionOperator, horizon: i64) -> Result<Arc<Splitting>> {
    if horizon < 1 || horizon > op.horizon() {
        return Err(Error::Precondition(format!(
            "horizon {horizon} must lie in [1, {}]",
            op.horizon()
        )));
    }
    if let Some(s) = op.cached_splitting(horizon) {
        return Ok(s);
    }
    let d = op.dimension();
    let (lo, hi) = op.window();
    let frame = generic_frame(d, op.frame_seed());
    let keep = |n: i64| n >= -horizon && n <= horizon;

    let mut qf = Vec::new();
    let mut rf = Vec::new();
    let mut growth = vec![0.0; d];
    let mut q = frame.clone();
    for j in lo..hi {
        if keep(j) {
            qf.push(q.clone());
        }
        let (qn, r) = qr_positive(&(op.coeff(j)? * &q));
        if j >= -horizon / 2 && j < horizon {
            // the first half of the window absorbs the transient of the frame
            for (i, g) in growth.iter_mut().enumerate() {
                *g += r[(i, i)].ln();
            }
        }
        if j >= -horizon && j < horizon {
            rf.push(r);
        }
        q = qn;
    }
    qf.push(q);

    let mut qb = Vec::new();
    let mut rb = Vec::new();
    let mut q = frame;
    for j in (lo..hi).rev() {
        if keep(j + 1) {
            qb.push(q.clone());
        }
        let (qn, r) = qr_positive(&(op.coeff_inverse(j)? * &q));
        if j >= -horizon && j < horizon {
            rb.push(r);
        }
        q = qn;
    }
    if keep(lo) {
        qb.push(q);
    }
    qb.reverse();
    rb.reverse();
    debug_assert_eq!(qb.len(), (2 * horizon + 1) as usize);

    let s = Arc::new(Splitting {
        horizon,
        dimension: d,
        growth,
        growth_steps: horizon - (-horizon / 2),
        qf,
        rf,
        qb,
        rb,
        tables: (0..=d).map(|_| OnceLock::new()).collect(),
    });
    op.store_splitting(horizon, s.clone());
    Ok(s)
}

/// Projector at time 0 onto the numerically contracting directions of
/// `x(n+1) = λ⁻¹A(n)x(n)`.
pub fn estimate_projector(op: &TransitionOperator, lambda: f64, horizon: i64) -> Result<Projector> {
    estimate_projector_with(op, lambda, horizon, DEFAULT_GAP_TOL)
}

pub fn estimate_projector_with(
    op: &TransitionOperator,
    lambda: f64,
    horizon: i64,
    gap_tol: f64,
) -> Result<Projector> {
    if !(lambda > 0.0) {
        return Err(Error::NonpositiveLambda(lambda));
    }
    if horizon < 2 {
        return Err(Error::Precondition("projector estimation needs N >= 2".into()));
    }
    let sp = splitting(op, horizon)?;
    let m = sp
        .rank_at(lambda, gap_tol)
        .map_err(|rate| Error::AmbiguousSplitting { lambda, rate })?;
    let p = sp
        .projector_at(0, m)
        .ok_or(Error::AmbiguousSplitting { lambda, rate: f64::NAN })?;
    Ok(Projector { matrix: trivial_or(m, op.dimension(), &p), rank: m })
}

fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Decides whether `x(n+1) = λ⁻¹A(n)x(n)` has a dichotomy on `[-N, N]`.
pub fn test_dichotomy(op: &TransitionOperator, lambda: f64, horizon: i64, fit_margin: f64) -> Result<Verdict> {
    test_dichotomy_with(
        op,
        lambda,
        horizon,
        DichotomyOptions { fit_margin, ..DichotomyOptions::default() },
    )
}

pub fn test_dichotomy_with(
    op: &TransitionOperator,
    lambda: f64,
    horizon: i64,
    opts: DichotomyOptions,
) -> Result<Verdict> {
    if !(lambda > 0.0) {
        return Err(Error::NonpositiveLambda(lambda));
    }
    if !(opts.fit_margin > 0.0) {
        return Err(Error::Precondition("fit_margin must be positive".into()));
    }
    let sp = splitting(op, horizon)?;
    let refuse = |worst_pair, rate, reason: &str| {
        Ok(Verdict::Refusal(Refusal {
            lambda,
            horizon,
            worst_pair,
            rate,
            reason: reason.to_string(),
        }))
    };
    let m = match sp.rank_at(lambda, opts.gap_tol) {
        Ok(m) => m,
        Err(rate) => return refuse(None, rate, "growth rate inside the gap deadband"),
    };
    let Some(tables) = sp.tables(m) else {
        return refuse(None, f64::NAN, "stable and unstable subspaces are not complementary");
    };

    // log-norm of the worst pair per separation, weighted by λ
    let ll = lambda.ln();
    let len = tables.stable.value.len();
    let mut env = Vec::with_capacity(len);
    for t in 0..len {
        let tf = t as f64;
        let s = tables.stable.value[t] - tf * ll;
        let u = tables.unstable.value[t] + tf * ll;
        // (value, (n, k))
        let (v, pair) = if s >= u {
            (s, (tables.stable.start[t] + t as i64, tables.stable.start[t]))
        } else {
            (u, (tables.unstable.start[t] - t as i64, tables.unstable.start[t]))
        };
        env.push((tf, v, pair));
    }
    let (fit_lo, fit_hi) = if horizon >= 4 { (horizon / 2, horizon) } else { (1, horizon) };
    let fit_points: Vec<(f64, f64)> = env[fit_lo as usize..=fit_hi as usize]
        .iter()
        .filter(|e| e.1.is_finite())
        .map(|e| (e.0, e.1))
        .collect();
    let slope = least_squares_slope(&fit_points).unwrap_or(f64::NEG_INFINITY);

    if slope > -opts.gap_tol {
        let worst = env
            .iter()
            .filter(|e| e.1.is_finite())
            .max_by(|a, b| (a.1 + opts.gap_tol * a.0).total_cmp(&(b.1 + opts.gap_tol * b.0)))
            .map(|e| e.2);
        return refuse(worst, slope, "fitted rate does not contract");
    }
    let intercept = env
        .iter()
        .filter(|e| e.1.is_finite())
        .map(|e| e.1 - slope * e.0)
        .fold(f64::NEG_INFINITY, f64::max);
    // offsets at the level of the rounding in the accumulated log-norms are zero
    let noise = 16.0
        * f64::EPSILON
        * env
            .iter()
            .filter(|e| e.1.is_finite())
            .map(|e| e.1.abs() + (slope * e.0).abs())
            .fold(0.0, f64::max);
    let lift = if intercept <= noise { 0.0 } else { intercept };
    let log_k = lift + opts.fit_margin.ln_1p();
    if log_k > MAX_LOG_K {
        return refuse(None, slope, "fitted constant K is unbounded");
    }
    let max_residual = env
        .iter()
        .filter(|e| e.1.is_finite())
        .map(|e| (e.1 - log_k - slope * e.0).exp() - 1.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let exact = op
        .source()
        .period()
        .is_some_and(|p| horizon >= (2 * p * op.dimension()) as i64);
    Ok(Verdict::Dichotomy(DichotomyWitness {
        k_const: log_k.exp(),
        rho: slope.exp(),
        projector: Projector { matrix: trivial_or(m, op.dimension(), &tables.projector0), rank: m },
        horizon,
        max_residual,
        lambda,
        exact,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSlack {
    pub n: i64,
    pub k: i64,
    /// `Kρ^{|n−k|}` minus the directly evaluated norm.
    pub slack: f64,
    /// A-priori bound on the rounding error of the direct evaluation.
    pub rounding: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub slacks: Vec<PairSlack>,
    pub holds: bool,
}

/// Re-evaluates both bound families at the given pairs directly from
/// `X(n,0)·P·X(0,k)`.
///
/// The direct route amplifies rounding by `‖X(n,0)‖·‖P‖·‖X(0,k)‖`; a pair
/// counts as holding when its slack is not below that rounding bound.
pub fn verify_dichotomy_bounds(
    witness: &DichotomyWitness,
    op: &TransitionOperator,
    pairs: &[(i64, i64)],
) -> Result<BoundsReport> {
    let d = op.dimension();
    let p = &witness.projector.matrix;
    let q = Mat::identity(d, d) - p;
    let mut slacks = Vec::with_capacity(pairs.len());
    for &(n, k) in pairs {
        let left = op.weighted_transition(witness.lambda, n, 0)?;
        let right = op.weighted_transition(witness.lambda, 0, k)?;
        let t = (n - k).unsigned_abs() as i32;
        let bound = witness.k_const * witness.rho.powi(t);
        let mut slack = f64::INFINITY;
        let mut proj_norm: f64 = 0.0;
        if n >= k {
            slack = slack.min(bound - inf_norm(&(&left * p * &right)));
            proj_norm = proj_norm.max(inf_norm(p));
        }
        if n <= k {
            slack = slack.min(bound - inf_norm(&(&left * &q * &right)));
            proj_norm = proj_norm.max(inf_norm(&q));
        }
        let factors = (n.unsigned_abs() + k.unsigned_abs()) as f64 + 2.0;
        let rounding =
            factors * d as f64 * f64::EPSILON * inf_norm(&left) * proj_norm.max(1.0) * inf_norm(&right);
        slacks.push(PairSlack { n, k, slack, rounding });
    }
    let holds = slacks.iter().all(|s| s.slack >= -s.rounding);
    Ok(BoundsReport { slacks, holds })
}

/// Explicit constants for λ outside a bound on the spectrum via the
/// discrete Gronwall estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GronwallRate {
    /// Weight `h` the estimate is stated for.
    pub weight: f64,
    /// Contraction factor `θ`.
    pub theta: f64,
    /// True for the `λ` above the spectrum case (projector `I`).
    pub above: bool,
}

/// Gronwall-type dichotomy constants with `K = 1`.
///
/// Above the spectrum: `L = sup‖A(n) − I‖`, `h = max(L + 2, λ)` and
/// `‖X(n,k)‖·h^{k−n} <= ((1+L)/h)^{n−k}` for `n >= k`.
/// Below: `L' = sup‖A(n)⁻¹ − I‖`, `h = min(λ, 1/(L' + 2))` and
/// `‖X(n,k)‖·h^{k−n} <= ((1+L')h)^{k−n}` for `n <= k`.
pub fn gronwall_rate(op: &TransitionOperator, lambda: f64, above: bool) -> Result<GronwallRate> {
    if !(lambda > 0.0) {
        return Err(Error::NonpositiveLambda(lambda));
    }
    let (lo, hi) = op.window();
    let d = op.dimension();
    let eye = Mat::identity(d, d);
    let mut l = 0.0f64;
    for n in lo..=hi {
        let a = if above { op.coeff(n)? } else { op.coeff_inverse(n)? };
        l = l.max(inf_norm(&(a - &eye)));
    }
    Ok(if above {
        let h = (l + 2.0).max(lambda);
        GronwallRate { weight: h, theta: (1.0 + l) / h, above }
    } else {
        let h = lambda.min(1.0 / (l + 2.0));
        GronwallRate { weight: h, theta: (1.0 + l) * h, above }
    })
}

/// Finite-horizon Bohl interval of a scalar sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BohlInterval {
    pub lo: f64,
    pub hi: f64,
    /// Window length of the reported sweep (the largest requested).
    pub window: usize,
    /// `(W, lo, hi)` for every requested window length.
    pub sweeps: Vec<(usize, f64, f64)>,
}

/// Min/max windowed geometric means of `|c(j)|` for `j` in `[-N, N)`.
pub fn scalar_bohl_interval(c: &MatrixSequence, horizon: i64, windows: &[usize]) -> Result<BohlInterval> {
    if c.dimension() != 1 {
        return Err(Error::DimensionMismatch("scalar Bohl interval needs a one-dimensional sequence".into()));
    }
    let values: Vec<f64> = (-horizon..horizon).map(|n| c.evaluate(n)[(0, 0)]).collect();
    bohl_interval_of_values(-horizon, &values, windows)
}

/// Same as [`scalar_bohl_interval`] on explicit values starting at `start`.
pub fn bohl_interval_of_values(start: i64, values: &[f64], windows: &[usize]) -> Result<BohlInterval> {
    if windows.is_empty() {
        return Err(Error::Precondition("no window lengths given".into()));
    }
    let mut logs = Vec::with_capacity(values.len());
    for (i, v) in values.iter().enumerate() {
        if *v == 0.0 {
            return Err(Error::ZeroCoefficient(start + i as i64));
        }
        logs.push(v.abs().ln());
    }
    let mut sorted = windows.to_vec();
    sorted.sort_unstable();
    let mut sweeps = Vec::with_capacity(sorted.len());
    for &w in &sorted {
        if w == 0 || w > values.len() {
            return Err(Error::Precondition(format!(
                "window {w} must lie in [1, {}]",
                values.len()
            )));
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..=values.len() - w {
            let mean = compensated_sum(&logs[k..k + w]) / w as f64;
            lo = lo.min(mean);
            hi = hi.max(mean);
        }
        sweeps.push((w, lo.exp(), hi.exp()));
    }
    let &(window, lo, hi) = sweeps.last().expect("at least one window");
    Ok(BohlInterval { lo, hi, window, sweeps })
}

/// Neumaier summation; windows of equal terms come out exact.
fn compensated_sum(xs: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &x in xs {
        let t = sum + x;
        comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn constant(v: f64, n: i64) -> TransitionOperator {
        TransitionOperator::new(&MatrixSequence::scalar_constant(v).unwrap(), n).unwrap()
    }

    fn diag(vals: &[f64]) -> MatrixSequence {
        MatrixSequence::constant(Mat::from_diagonal(&nalgebra::DVector::from_row_slice(vals))).unwrap()
    }

    fn two_level() -> MatrixSequence {
        MatrixSequence::piecewise(scalar(0.5), vec![(0, scalar(2.0))]).unwrap()
    }

    #[test]
    fn projector_examples() {
        let p = estimate_projector(&constant(0.5, 50), 1.0, 50).unwrap();
        assert_eq!(p.rank, 1);
        assert!((p.matrix[(0, 0)] - 1.0).abs() < 1e-12);
        let p = estimate_projector(&constant(2.0, 50), 1.0, 50).unwrap();
        assert_eq!(p.rank, 0);
        assert!(p.matrix[(0, 0)].abs() < 1e-12);

        let op = TransitionOperator::new(&diag(&[0.5, 3.0]), 50).unwrap();
        let p = estimate_projector(&op, 1.0, 50).unwrap();
        // per-axis oracle: axis 0 decays, axis 1 grows
        let oracle = Mat::from_diagonal(&nalgebra::DVector::from_row_slice(&[1.0, 0.0]));
        assert_eq!(p.rank, 1);
        assert!(inf_norm(&(&p.matrix - oracle)) < 1e-10);
        assert!(p.idempotency_residual() <= 1e-10);
        assert_eq!(Projector::new(p.matrix.clone()).rank, 1);
    }

    #[test]
    fn projector_ambiguous_inside_spectrum() {
        let r = estimate_projector(&constant(0.5, 50), 0.5, 50);
        assert!(matches!(r, Err(Error::AmbiguousSplitting { .. })));
    }

    #[test]
    fn dichotomy_examples() {
        let op = constant(0.5, 100);
        let w = test_dichotomy(&op, 1.0, 100, DEFAULT_FIT_MARGIN).unwrap();
        let w = w.witness().expect("pure decay is a dichotomy");
        assert!((w.rho - 0.5).abs() < 1e-12);
        assert!(w.k_const >= 1.0 && w.k_const <= 1.0 + DEFAULT_FIT_MARGIN + 1e-12);
        assert_eq!(w.projector.rank, 1);
        assert!(w.max_residual <= 0.0);
        assert!(w.exact);

        assert!(!test_dichotomy(&op, 0.5, 100, DEFAULT_FIT_MARGIN).unwrap().is_dichotomy());

        let op = TransitionOperator::new(&two_level(), 200).unwrap();
        let v = test_dichotomy(&op, 1.0, 200, DEFAULT_FIT_MARGIN).unwrap();
        assert!(!v.is_dichotomy());
    }

    #[test]
    fn two_level_refuses_inside_and_accepts_outside() {
        let op = TransitionOperator::new(&two_level(), 400).unwrap();
        for lambda in [0.6, 0.8, 1.5, 1.95] {
            assert!(!test_dichotomy(&op, lambda, 400, 0.05).unwrap().is_dichotomy(), "λ = {lambda}");
        }
        let v = test_dichotomy(&op, 2.2, 400, 0.05).unwrap();
        assert_eq!(v.rank(), Some(1));
        let v = test_dichotomy(&op, 0.45, 400, 0.05).unwrap();
        assert_eq!(v.rank(), Some(0));
    }

    #[test]
    fn refusal_names_a_violating_pair() {
        let op = TransitionOperator::new(&two_level(), 100).unwrap();
        match test_dichotomy(&op, 0.8, 100, 0.05).unwrap() {
            Verdict::Refusal(r) => {
                let (n, k) = r.worst_pair.expect("pair");
                assert!((-100..=100).contains(&n) && (-100..=100).contains(&k));
            }
            Verdict::Dichotomy(_) => panic!("λ = 0.8 lies in the spectrum"),
        }
    }

    #[test]
    fn verify_bounds_examples() {
        let op = constant(0.5, 20);
        let w = DichotomyWitness {
            k_const: 1.0,
            rho: 0.5,
            projector: Projector { matrix: scalar(1.0), rank: 1 },
            horizon: 20,
            max_residual: 0.0,
            lambda: 1.0,
            exact: true,
        };
        let r = verify_dichotomy_bounds(&w, &op, &[(5, 0)]).unwrap();
        assert_eq!(r.slacks[0].slack, 0.0);
        assert!(r.holds);
        let forged = DichotomyWitness { rho: 0.4, ..w };
        let r = verify_dichotomy_bounds(&forged, &op, &[(5, 0)]).unwrap();
        assert!(r.slacks[0].slack < 0.0);
        assert!(!r.holds);
    }

    #[test]
    fn verify_bounds_on_fitted_diagonal_witness() {
        let op = TransitionOperator::new(&diag(&[0.5, 3.0]), 60).unwrap();
        let v = test_dichotomy(&op, 1.0, 60, DEFAULT_FIT_MARGIN).unwrap();
        let w = v.witness().unwrap();
        let pairs: Vec<(i64, i64)> = (-40..=40).flat_map(|n| (-40..=40).map(move |k| (n, k))).collect();
        let r = verify_dichotomy_bounds(w, &op, &pairs).unwrap();
        assert!(r.holds, "{:?}", r.slacks.iter().find(|s| s.slack < -s.rounding));
        // pairs of moderate magnitude hold without the rounding allowance
        assert!(r.slacks.iter().filter(|s| s.n.abs() <= 12 && s.k.abs() <= 12).all(|s| s.slack >= 0.0));
    }

    #[test]
    fn bohl_examples() {
        let c = MatrixSequence::scalar_constant(2.0).unwrap();
        let b = scalar_bohl_interval(&c, 50, &[10, 20]).unwrap();
        assert!((b.lo - 2.0).abs() <= 4.0 * f64::EPSILON && (b.hi - 2.0).abs() <= 4.0 * f64::EPSILON);
        let b = scalar_bohl_interval(&two_level(), 1000, &[100, 400]).unwrap();
        assert!((b.lo - 0.5).abs() <= 0.05 && (b.hi - 2.0).abs() <= 0.05);
        assert_eq!(b.window, 400);
        assert_eq!(b.sweeps.len(), 2);
        let p = MatrixSequence::periodic(vec![scalar(1.0), scalar(4.0)]).unwrap();
        let b = scalar_bohl_interval(&p, 500, &[100]).unwrap();
        // windowed geometric-mean oracle: every even window holds fifty 1s and fifty 4s
        let oracle = (50.0 * 4f64.ln() / 100.0).exp();
        assert!((b.lo - oracle).abs() < 1e-6 && (b.hi - oracle).abs() < 1e-6);
        assert!((oracle - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bohl_uses_absolute_values_and_rejects_zero() {
        let b = bohl_interval_of_values(0, &[-2.0, 2.0, -2.0], &[2]).unwrap();
        assert!((b.lo - 2.0).abs() <= 4.0 * f64::EPSILON && (b.hi - 2.0).abs() <= 4.0 * f64::EPSILON);
        assert_eq!(bohl_interval_of_values(-3, &[1.0, 0.0], &[1]), Err(Error::ZeroCoefficient(-2)));
    }

    #[test]
    fn gronwall_constants_for_scalar() {
        let op = constant(3.0, 10);
        let g = gronwall_rate(&op, 5.0, true).unwrap();
        assert_eq!(g.weight, 5.0);
        assert_eq!(g.theta, 3.0 / 5.0);
        let op = constant(0.25, 10);
        let g = gronwall_rate(&op, 0.1, false).unwrap();
        // L' = |4 − 1| = 3, h = min(0.1, 1/5)
        assert_eq!(g.weight, 0.1);
        assert!((g.theta - 0.4).abs() < 1e-15);
    }
}
