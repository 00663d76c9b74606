//! Contraction of a system to `diag(H(n))·(I + R(n))` with `H(n)` drawn from
//! the spectrum and `‖R(n)‖∞` small.
//!
//! Per spectral block `C_i` (upper triangular after QR):
//!
//! 1. a switching schedule alternates `h = a_i, Δ = −δ/2` with
//!    `h = b_i, Δ = +δ/2` so that every `∏|c_rr/(h+Δ)|` stays in `[1/μ, μ]`;
//! 2. `L_i = diag(μ_r)` with `μ_r(n+1) = μ_r(n)·c_rr(n)/(h(n)+Δ(n))` makes the
//!    diagonal of `Λ_i = L_i⁻¹(n+1)C_iL_i(n)` equal to `h + Δ`;
//! 3. a β-transformation shrinks the off-diagonal part of `Λ_i`, giving
//!    `Γ_i = h_i I + R_i` with `‖R_i‖∞ < δ`.

use serde::Serialize;

use crate::dichotomy::bohl_interval_of_values;
use crate::error::{Error, Result};
use crate::linalg::{block_diag, inf_norm, inverse, Mat};
use crate::propagator::TransitionOperator;
use crate::similarity::{
    beta_matrix, block_diagonalize_with, check_similarity, qr_triangularize_values, BlockOptions,
    SimilarityTransform,
};
use crate::spectrum::{spectrum_scan_with, ScanOptions, SpectrumEstimate};
use crate::system::{MatrixSequence, WindowedValues};

/// Smallest admissible β bound before [`Error::BetaUnderflow`].
const BETA_FLOOR: f64 = 1e-14;
/// Number of times an automatic μ is doubled after [`Error::InfeasibleMu`].
const MU_RETRIES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    /// `h = a`, `Δ = −δ/2`.
    Growth,
    /// `h = b`, `Δ = +δ/2`.
    Decay,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchingSchedule {
    /// First index of each phase on `j >= 0`; starts with 0.
    pub switch_times: Vec<i64>,
    /// Same for `j <= −1` in mirrored time `−1 − j`; starts with 0.
    pub mirrored_switch_times: Vec<i64>,
    pub mu: f64,
    pub phase_rule: String,
}

/// `h(n)` and `Δ(n)` on a window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepPair {
    pub start: i64,
    pub h: Vec<f64>,
    pub delta_seq: Vec<f64>,
}

impl StepPair {
    pub fn end(&self) -> i64 {
        self.start + self.h.len() as i64 - 1
    }

    fn idx(&self, n: i64) -> usize {
        (n - self.start) as usize
    }

    pub fn h_at(&self, n: i64) -> f64 {
        self.h[self.idx(n)]
    }

    /// `h(n) + Δ(n)`.
    pub fn denominator(&self, n: i64) -> f64 {
        let i = self.idx(n);
        self.h[i] + self.delta_seq[i]
    }
}

fn phase_values(phase: Phase, a: f64, b: f64, delta: f64) -> (f64, f64) {
    match phase {
        Phase::Growth => (a, -delta / 2.0),
        Phase::Decay => (b, delta / 2.0),
    }
}

fn flip(p: Phase) -> Phase {
    match p {
        Phase::Growth => Phase::Decay,
        Phase::Decay => Phase::Growth,
    }
}

/// Greedy schedule keeping all partial products strictly inside `(1/μ, μ)`.
///
/// `c_diag[r][i]` is `c_rr(start + i)`; the window must contain 0.
pub fn build_schedule(
    c_diag: &[Vec<f64>],
    start: i64,
    a: f64,
    b: f64,
    delta: f64,
    mu: f64,
) -> Result<(StepPair, SwitchingSchedule)> {
    if !(delta > 0.0 && delta < 2.0 * a) {
        return Err(Error::Precondition(format!("delta = {delta} must lie in (0, 2a) with a = {a}")));
    }
    if !(mu > 1.0) {
        return Err(Error::Precondition(format!("mu = {mu} must exceed 1")));
    }
    if !(a <= b) {
        return Err(Error::Precondition(format!("interval [{a}, {b}] is empty")));
    }
    let len = c_diag.first().map_or(0, Vec::len);
    if len == 0 || c_diag.iter().any(|c| c.len() != len) {
        return Err(Error::DimensionMismatch("diagonal sequences must be non-empty and of equal length".into()));
    }
    let end = start + len as i64 - 1;
    if start > 0 || end < 0 {
        return Err(Error::Precondition(format!("window [{start}, {end}] must contain 0")));
    }
    let c = |r: usize, j: i64| c_diag[r][(j - start) as usize];
    let inside = |p: f64| p > 1.0 / mu && p < mu;
    let mut h = vec![0.0; len];
    let mut dl = vec![0.0; len];

    // forward: p_r(n+1) = p_r(n)·|c_r(n)|/(h+Δ)
    let mut prods = vec![1.0; c_diag.len()];
    let mut phase = Phase::Growth;
    let mut switch_times = vec![0];
    for j in 0..=end {
        let mut taken = None;
        for cand in [phase, flip(phase)] {
            let (hv, dv) = phase_values(cand, a, b, delta);
            let den = hv + dv;
            let next: Vec<f64> = prods.iter().enumerate().map(|(r, p)| p * (c(r, j) / den).abs()).collect();
            if next.iter().all(|p| inside(*p)) {
                taken = Some((cand, hv, dv, next));
                break;
            }
        }
        let (cand, hv, dv, next) = taken.ok_or(Error::InfeasibleMu { mu, n: j })?;
        if cand != phase && j > 0 {
            switch_times.push(j);
        }
        phase = cand;
        h[(j - start) as usize] = hv;
        dl[(j - start) as usize] = dv;
        prods = next;
    }

    // backward: p_r(n) = p_r(n+1)·(h+Δ)/|c_r(n)|
    let mut prods = vec![1.0; c_diag.len()];
    let mut phase = Phase::Growth;
    let mut mirrored = vec![0];
    for j in (start..0).rev() {
        let mut taken = None;
        for cand in [phase, flip(phase)] {
            let (hv, dv) = phase_values(cand, a, b, delta);
            let den = hv + dv;
            let next: Vec<f64> = prods.iter().enumerate().map(|(r, p)| p * (den / c(r, j)).abs()).collect();
            if next.iter().all(|p| inside(*p)) {
                taken = Some((cand, hv, dv, next));
                break;
            }
        }
        let (cand, hv, dv, next) = taken.ok_or(Error::InfeasibleMu { mu, n: j })?;
        if cand != phase && j < -1 {
            mirrored.push(-1 - j);
        }
        phase = cand;
        h[(j - start) as usize] = hv;
        dl[(j - start) as usize] = dv;
        prods = next;
    }
    Ok((
        StepPair { start, h, delta_seq: dl },
        SwitchingSchedule {
            switch_times,
            mirrored_switch_times: mirrored,
            mu,
            phase_rule: "growth phases use a - delta/2, decay phases b + delta/2; the first phase is growth".into(),
        },
    ))
}

/// `μ_r(n)` for one diagonal entry on `[start, end+1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingSequence {
    pub start: i64,
    pub values: Vec<f64>,
    pub m1: f64,
    pub m2: f64,
}

impl ScalingSequence {
    pub fn at(&self, n: i64) -> f64 {
        self.values[(n - self.start) as usize]
    }
}

/// Two-sided product `μ_r(n)`: forward for `n >= 0`, inverse for `n <= −1`.
///
/// The forward branch repeats the arithmetic of [`build_schedule`] so that
/// the band check on its values is exact.
pub fn build_scaling(pair: &StepPair, c_rr: &[f64], mu: f64) -> Result<ScalingSequence> {
    if c_rr.len() != pair.h.len() {
        return Err(Error::DimensionMismatch("diagonal sequence and step pair differ in length".into()));
    }
    let start = pair.start;
    let end = pair.end();
    let mut values = vec![0.0; c_rr.len() + 1];
    let at = |n: i64| (n - start) as usize;
    values[at(0)] = 1.0;
    let mut mags = vec![0.0; values.len()];
    mags[at(0)] = 1.0;
    for j in 0..=end {
        let den = pair.denominator(j);
        values[at(j + 1)] = values[at(j)] * (c_rr[at(j)] / den);
        mags[at(j + 1)] = mags[at(j)] * (c_rr[at(j)] / den).abs();
    }
    for j in (start..0).rev() {
        let den = pair.denominator(j);
        values[at(j)] = values[at(j + 1)] * (den / c_rr[at(j)]);
        mags[at(j)] = mags[at(j + 1)] * (den / c_rr[at(j)]).abs();
    }
    let m1 = mags.iter().copied().fold(0.0, f64::max);
    let m2 = mags.iter().copied().fold(f64::INFINITY, f64::min);
    if !(m2 > 0.0) || !m1.is_finite() {
        return Err(Error::BoundViolation { ratio: f64::INFINITY, limit: mu * mu });
    }
    if m1 / m2 > mu * mu * (1.0 + 1e-12) {
        return Err(Error::BoundViolation { ratio: m1 / m2, limit: mu * mu });
    }
    Ok(ScalingSequence { start, values, m1, m2 })
}

/// Fundamental solutions of the two shifted scalar equations of a block
/// diagonal entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarDichotomyPair {
    pub start: i64,
    /// `U(n+1) = c(n)/(a − δ/2)·U(n)`, `U(0) = 1`.
    pub u_values: Vec<f64>,
    /// `S(n+1) = c(n)/(b + δ/2)·S(n)`, `S(0) = 1`.
    pub s_values: Vec<f64>,
    /// Smallest θ with `|U(n)U⁻¹(k)| <= θ^{k−n}` (k >= n) and
    /// `|S(n)S⁻¹(k)| <= θ^{n−k}` (n >= k) over the window; `>= 1` when the
    /// window does not show a dichotomy with constant one.
    pub theta: f64,
}

pub fn scalar_dichotomy_pair(c: &[f64], start: i64, a: f64, b: f64, delta: f64) -> Result<ScalarDichotomyPair> {
    if !(delta > 0.0 && delta < 2.0 * a) {
        return Err(Error::Precondition(format!("delta = {delta} must lie in (0, 2a) with a = {a}")));
    }
    let end = start + c.len() as i64 - 1;
    if c.is_empty() || start > 0 || end < 0 {
        return Err(Error::Precondition("window must contain 0".into()));
    }
    let (du, ds) = (a - delta / 2.0, b + delta / 2.0);
    let solve = |den: f64| {
        let mut v = vec![0.0; c.len() + 1];
        let z = (-start) as usize;
        v[z] = 1.0;
        for i in z..c.len() {
            v[i + 1] = v[i] * c[i] / den;
        }
        for i in (0..z).rev() {
            v[i] = v[i + 1] * den / c[i];
        }
        v
    };
    let u_values = solve(du);
    let s_values = solve(ds);
    // per-step logs of the decaying direction of each family
    let lu: Vec<f64> = c.iter().map(|x| (du / x).abs().ln()).collect();
    let ls: Vec<f64> = c.iter().map(|x| (x / ds).abs().ln()).collect();
    let mut theta_log = f64::NEG_INFINITY;
    for logs in [&lu, &ls] {
        let mut prefix = vec![0.0; logs.len() + 1];
        for (i, v) in logs.iter().enumerate() {
            prefix[i + 1] = prefix[i] + v;
        }
        for i in 0..logs.len() {
            for k in i + 1..=logs.len() {
                theta_log = theta_log.max((prefix[k] - prefix[i]) / (k - i) as f64);
            }
        }
    }
    Ok(ScalarDichotomyPair { start, u_values, s_values, theta: theta_log.exp() })
}

/// The two shifted scalar systems `c/(a − δ/2)` and `c/(b + δ/2)` as table
/// sequences.
pub fn shifted_scalar_systems(
    c: &[f64],
    start: i64,
    a: f64,
    b: f64,
    delta: f64,
) -> Result<(MatrixSequence, MatrixSequence)> {
    let make = |den: f64| {
        MatrixSequence::table(start, c.iter().map(|x| Mat::from_element(1, 1, x / den)).collect())
    };
    Ok((make(a - delta / 2.0)?, make(b + delta / 2.0)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BlockSettings {
    /// `None` selects `max(2, (b + δ/2)/(a − δ/2))`, doubled on infeasibility.
    pub mu: Option<f64>,
    /// `None` selects half of the admissible bound.
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockContraction {
    pub interval: (f64, f64),
    pub pair: StepPair,
    pub schedule: SwitchingSchedule,
    pub scaling: Vec<ScalingSequence>,
    /// `Γ_i(n) = h_i(n)I + R_i(n)` on the window of `C_i`.
    pub gamma: WindowedValues,
    pub r: WindowedValues,
    /// `L_i(n)·D_β` on the window of `C_i` extended by one step.
    pub transform: SimilarityTransform,
    pub beta: f64,
    pub beta_bound: f64,
    pub m1: f64,
    pub m2: f64,
    pub c_plus: f64,
    /// `δ/2 + (M₁C⁺/M₂)·β/(1−β)`.
    pub analytic_bound: f64,
    pub max_r_norm: f64,
    pub mu: f64,
}

/// Contracts one upper triangular block with spectrum `interval`.
pub fn contract_block(c: &WindowedValues, interval: (f64, f64), delta: f64, settings: BlockSettings) -> Result<BlockContraction> {
    let (a, b) = interval;
    if !(delta > 0.0 && delta < 2.0 * a) {
        return Err(Error::Precondition(format!("delta = {delta} must lie in (0, 2a) with a = {a}")));
    }
    let m = c.dimension();
    let diag: Vec<Vec<f64>> = (0..m).map(|r| c.values.iter().map(|x| x[(r, r)]).collect()).collect();
    let (mu, pair, schedule) = match settings.mu {
        Some(mu) => {
            let (p, s) = build_schedule(&diag, c.start, a, b, delta, mu)?;
            (mu, p, s)
        }
        None => {
            let mut mu = 2f64.max((b + delta / 2.0) / (a - delta / 2.0));
            let mut tries = 0;
            loop {
                match build_schedule(&diag, c.start, a, b, delta, mu) {
                    Ok((p, s)) => break (mu, p, s),
                    Err(Error::InfeasibleMu { .. }) if tries < MU_RETRIES => {
                        mu *= 2.0;
                        tries += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    };
    let scaling = diag.iter().map(|d| build_scaling(&pair, d, mu)).collect::<Result<Vec<_>>>()?;
    let m1 = scaling.iter().map(|s| s.m1).fold(0.0, f64::max);
    let m2 = scaling.iter().map(|s| s.m2).fold(f64::INFINITY, f64::min);
    let c_plus = c.sup_norm();
    let ratio = c_plus * m1 / m2;
    let beta_bound = delta / (delta + 2.0 * ratio);
    if beta_bound < BETA_FLOOR {
        return Err(Error::BetaUnderflow(beta_bound));
    }
    let beta = match settings.beta {
        Some(beta) if !(beta > 0.0 && beta < beta_bound) => {
            return Err(Error::InvalidBeta { beta, bound: beta_bound });
        }
        Some(beta) => beta,
        None => beta_bound / 2.0,
    };
    let analytic_bound = delta / 2.0 + ratio * beta / (1.0 - beta);

    let mut gamma = Vec::with_capacity(c.values.len());
    let mut rs = Vec::with_capacity(c.values.len());
    let mut max_r_norm: f64 = 0.0;
    for (n, cn) in c.iter() {
        let h = pair.h_at(n);
        let mut r = Mat::zeros(m, m);
        for i in 0..m {
            // diagonal of Λ is h + Δ by construction of μ
            r[(i, i)] = pair.denominator(n) - h;
            let denom = scaling[i].at(n + 1);
            for s in i + 1..m {
                r[(i, s)] = beta.powi((s - i) as i32) * scaling[s].at(n) / denom * cn[(i, s)];
            }
        }
        max_r_norm = max_r_norm.max(inf_norm(&r));
        gamma.push(Mat::identity(m, m) * h + &r);
        rs.push(r);
    }
    let db = beta_matrix(m, beta);
    let transform = SimilarityTransform::new(
        c.start,
        (c.start..=c.end() + 1)
            .map(|n| Mat::from_diagonal(&nalgebra::DVector::from_fn(m, |r, _| scaling[r].at(n))) * &db)
            .collect(),
    )?;
    Ok(BlockContraction {
        interval,
        pair,
        schedule,
        scaling,
        gamma: WindowedValues::new(c.start, gamma),
        r: WindowedValues::new(c.start, rs),
        transform,
        beta,
        beta_bound,
        m1,
        m2,
        c_plus,
        analytic_bound,
        max_r_norm,
        mu,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractOptions {
    pub horizon: i64,
    pub scan: ScanOptions,
    pub block: BlockOptions,
    pub settings: BlockSettings,
    /// Tolerance for `H` membership in the spectrum and the minimality probe.
    pub tol: f64,
    /// Relative tolerance of the end-to-end similarity check.
    pub similarity_tol: f64,
}

impl ContractOptions {
    pub fn new(horizon: i64) -> Self {
        ContractOptions {
            horizon,
            scan: ScanOptions::new(horizon),
            block: BlockOptions::default(),
            settings: BlockSettings::default(),
            tol: 0.05,
            similarity_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdicts {
    pub similarity: bool,
    pub h_in_spectrum: bool,
    pub residual_bound: bool,
    pub minimality: bool,
}

impl Verdicts {
    pub fn all(&self) -> bool {
        self.similarity && self.h_in_spectrum && self.residual_bound && self.minimality
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionResult {
    pub start: i64,
    /// `H(n)` entries for `n` in `[start, start + len)`.
    pub diagonal_part: Vec<Vec<f64>>,
    pub residual: Vec<Mat>,
    pub delta: f64,
    /// `δ / min_i a_i`, the certified bound on `‖R(n)‖∞`.
    pub delta_tilde: f64,
    /// `δ / |b₁|`, recorded for comparison.
    pub delta_over_b1: f64,
    pub transform: SimilarityTransform,
    pub blocks: Vec<BlockContraction>,
    pub block_sizes: Vec<usize>,
    pub sigma: SpectrumEstimate,
    /// `max ‖T(n+1)Γ(n)T(n)⁻¹ − A(n)‖∞ / ‖A(n)‖∞`.
    pub similarity_residual: f64,
    pub verdicts: Verdicts,
}

impl ContractionResult {
    pub fn end(&self) -> i64 {
        self.start + self.diagonal_part.len() as i64 - 1
    }

    /// `diag(H(n))·(I + R(n))`.
    pub fn contracted(&self) -> WindowedValues {
        let d = self.residual[0].nrows();
        let values = self
            .diagonal_part
            .iter()
            .zip(&self.residual)
            .map(|(h, r)| Mat::from_diagonal(&nalgebra::DVector::from_row_slice(h)) * (Mat::identity(d, d) + r))
            .collect();
        WindowedValues::new(self.start, values)
    }

    pub fn r_norms(&self) -> Vec<f64> {
        self.residual.iter().map(inf_norm).collect()
    }
}

/// Scans the spectrum and contracts `seq` on `[-N, N]`.
pub fn contract_system(seq: &MatrixSequence, delta: f64, horizon: i64, mu: Option<f64>) -> Result<ContractionResult> {
    let mut opts = ContractOptions::new(horizon);
    opts.settings.mu = mu;
    contract_system_with(seq, delta, &opts)
}

pub fn spectrum_for(seq: &MatrixSequence, opts: &ContractOptions) -> Result<SpectrumEstimate> {
    let op = TransitionOperator::new(seq, opts.horizon)?.with_frame_seed(opts.block.frame_seed);
    let sigma = match spectrum_scan_with(&op, &opts.scan) {
        Err(Error::RangeTooNarrow(_)) => return Err(Error::UnboundedSpectrum),
        r => r?,
    };
    if sigma.ell == 0 {
        return Err(Error::UnboundedSpectrum);
    }
    Ok(sigma)
}

pub fn contract_system_with(seq: &MatrixSequence, delta: f64, opts: &ContractOptions) -> Result<ContractionResult> {
    if !(delta > 0.0) {
        return Err(Error::Precondition(format!("delta = {delta} must be positive")));
    }
    let sigma = spectrum_for(seq, opts)?;
    contract_with_spectrum(seq, &sigma, delta, opts)
}

/// Contraction against a given spectrum estimate.
pub fn contract_with_spectrum(
    seq: &MatrixSequence,
    sigma: &SpectrumEstimate,
    delta: f64,
    opts: &ContractOptions,
) -> Result<ContractionResult> {
    let a1 = sigma.intervals.first().ok_or(Error::UnboundedSpectrum)?.0;
    if !(delta > 0.0 && delta < 2.0 * a1) {
        return Err(Error::Precondition(format!("delta = {delta} must lie in (0, 2a_1) with a_1 = {a1}")));
    }
    let n_h = opts.horizon;
    let bd = block_diagonalize_with(seq, sigma, n_h, &opts.block)?;
    let mut blocks = Vec::with_capacity(bd.blocks.len());
    let mut qs = Vec::with_capacity(bd.blocks.len());
    for (b, iv) in bd.blocks.iter().zip(&sigma.intervals) {
        let (q, c) = qr_triangularize_values(b);
        blocks.push(contract_block(&c, *iv, delta, opts.settings)?);
        qs.push(q);
    }
    let block_sizes: Vec<usize> = bd.blocks.iter().map(|b| b.dimension()).collect();

    // T(n) = F(n)·diag(Q_i(n)L_i(n)D_β)
    let tvals: Vec<Mat> = (-n_h..=n_h + 1)
        .map(|n| {
            let parts: Vec<Mat> = qs
                .iter()
                .zip(&blocks)
                .map(|(q, bc)| q.get(n).unwrap() * bc.transform.get(n).unwrap())
                .collect();
            bd.transform.get(n).unwrap() * block_diag(&parts)
        })
        .collect();
    let transform = SimilarityTransform::new(-n_h, tvals)?.with_delta(delta);

    let mut diagonal_part = Vec::with_capacity((2 * n_h + 1) as usize);
    let mut residual = Vec::with_capacity(diagonal_part.capacity());
    for n in -n_h..=n_h {
        let mut h = Vec::new();
        let mut rs = Vec::new();
        for (bc, &m) in blocks.iter().zip(&block_sizes) {
            let hv = bc.pair.h_at(n);
            h.extend(std::iter::repeat(hv).take(m));
            rs.push(bc.r.get(n).unwrap() / hv);
        }
        diagonal_part.push(h);
        residual.push(block_diag(&rs));
    }
    let a_min = sigma.intervals.iter().map(|iv| iv.0).fold(f64::INFINITY, f64::min);
    let mut result = ContractionResult {
        start: -n_h,
        diagonal_part,
        residual,
        delta,
        delta_tilde: delta / a_min,
        delta_over_b1: delta / sigma.intervals[0].1.abs(),
        transform,
        blocks,
        block_sizes,
        sigma: sigma.clone(),
        similarity_residual: 0.0,
        verdicts: Verdicts { similarity: false, h_in_spectrum: false, residual_bound: false, minimality: false },
    };
    result.similarity_residual = back_conjugation_residual(&result, seq)?;
    let report = verify_contraction(&result, seq, sigma, opts.tol);
    result.verdicts = Verdicts {
        similarity: report.verdicts.similarity && result.similarity_residual < opts.similarity_tol,
        ..report.verdicts
    };
    Ok(result)
}

/// `max ‖T(n+1)Γ(n)T(n)⁻¹ − A(n)‖∞ / ‖A(n)‖∞` over the window.
pub fn back_conjugation_residual(result: &ContractionResult, seq: &MatrixSequence) -> Result<f64> {
    let gamma = result.contracted();
    let mut worst: f64 = 0.0;
    for (n, g) in gamma.iter() {
        let t = result.transform.get(n).ok_or(Error::OutOfWindow(n))?;
        let t1 = result.transform.get(n + 1).ok_or(Error::OutOfWindow(n + 1))?;
        let tinv = inverse(t).ok_or(Error::SingularTransform(n))?;
        let a = seq.evaluate(n);
        worst = worst.max(inf_norm(&(t1 * g * tinv - a)) / inf_norm(a));
    }
    Ok(worst)
}

/// Full-spectrum diagonalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagonalization {
    pub transform: SimilarityTransform,
    /// Diagonal entries `(B_1(n), …, B_d(n))` on `[-N, N]`.
    pub diagonal: WindowedValues,
    /// Largest relative off-block coupling removed during the splits.
    pub coupling: f64,
    /// Bohl interval of each diagonal entry.
    pub bohl: Vec<(f64, f64)>,
    pub sigma: SpectrumEstimate,
}

pub fn diagonalize_full_spectrum(seq: &MatrixSequence, horizon: i64) -> Result<Diagonalization> {
    diagonalize_full_spectrum_with(seq, &ContractOptions::new(horizon))
}

pub fn diagonalize_full_spectrum_with(seq: &MatrixSequence, opts: &ContractOptions) -> Result<Diagonalization> {
    let sigma = spectrum_for(seq, opts)?;
    let d = seq.dimension();
    if sigma.ell != d {
        return Err(Error::NotFullSpectrum { ell: sigma.ell, dimension: d });
    }
    let bd = block_diagonalize_with(seq, &sigma, opts.horizon, &opts.block)?;
    let diagonal = bd.assembled();
    let window = opts.horizon as usize;
    let mut bohl = Vec::with_capacity(d);
    for b in &bd.blocks {
        let vals: Vec<f64> = b.values[..b.values.len() - 1].iter().map(|m| m[(0, 0)]).collect();
        let iv = bohl_interval_of_values(b.start, &vals, &[window.min(vals.len())])?;
        bohl.push((iv.lo, iv.hi));
    }
    Ok(Diagonalization {
        transform: bd.transform,
        diagonal,
        coupling: bd.coupling.iter().copied().fold(0.0, f64::max),
        bohl,
        sigma,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub verdicts: Verdicts,
    pub similarity_residual: f64,
    /// Largest distance from an `H` entry to the spectrum.
    pub max_h_distance: f64,
    pub max_r_norm: f64,
    pub delta_tilde: f64,
    /// Per interval: `(min, max)` of the `H` values assigned to it.
    pub hulls: Vec<Option<(f64, f64)>>,
}

/// Independent re-check of a contraction result against `seq` and `sigma`.
pub fn verify_contraction(result: &ContractionResult, seq: &MatrixSequence, sigma: &SpectrumEstimate, tol: f64) -> ContractionReport {
    let gamma = result.contracted();
    let a = seq.sample(gamma.start, gamma.end());
    let sim = check_similarity(&result.transform, &a, &gamma, 1e-6);
    let similarity = sim.holds && result.transform.f_sup.is_finite() && result.transform.finv_sup.is_finite();

    let mut max_h_distance: f64 = 0.0;
    let mut hulls: Vec<Option<(f64, f64)>> = vec![None; sigma.intervals.len()];
    for h in result.diagonal_part.iter().flatten() {
        max_h_distance = max_h_distance.max(sigma.distance(*h));
        if let Some(i) = sigma.locate(*h, tol) {
            hulls[i] = Some(match hulls[i] {
                Some((lo, hi)) => (lo.min(*h), hi.max(*h)),
                None => (*h, *h),
            });
        }
    }
    let h_in_spectrum = max_h_distance <= tol;
    let max_r_norm = result.r_norms().into_iter().fold(0.0, f64::max);
    let residual_bound = max_r_norm < result.delta_tilde;
    let minimality = sigma
        .intervals
        .iter()
        .zip(&hulls)
        .all(|(&(lo, hi), hull)| hull.is_some_and(|(a, b)| a <= lo + tol && b >= hi - tol));
    ContractionReport {
        verdicts: Verdicts { similarity, h_in_spectrum, residual_bound, minimality },
        similarity_residual: sim.max_residual,
        max_h_distance,
        max_r_norm,
        delta_tilde: result.delta_tilde,
        hulls,
    }
}
