//! Fundamental and transition matrices of `x(n+1) = A(n)x(n)` on a window.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::dichotomy::Splitting;
use crate::error::{Error, Result};
use crate::linalg::{inverse, Mat, ScaledMatrix};
use crate::system::MatrixSequence;

pub const DEFAULT_FRAME_SEED: u64 = 0x5eed_cafe;

/// Cached cocycle of a sequence over `[lo, hi]` (with `lo <= 0 <= hi`).
///
/// `X(n)` is stored in log-scaled form for every `n` in the window. The
/// coefficients and their inverses are cached as well so that transition
/// matrices can be accumulated directly as products.
#[derive(Debug)]
pub struct TransitionOperator {
    source: MatrixSequence,
    lo: i64,
    hi: i64,
    coeffs: Vec<Mat>,
    inverses: Vec<Mat>,
    fundamentals: Vec<ScaledMatrix>,
    frame_seed: u64,
    splittings: Mutex<HashMap<i64, Arc<Splitting>>>,
}

impl TransitionOperator {
    /// Operator on the symmetric window `[-horizon, horizon]`.
    pub fn new(source: &MatrixSequence, horizon: i64) -> Result<Self> {
        Self::on_window(source, -horizon, horizon)
    }

    pub fn on_window(source: &MatrixSequence, lo: i64, hi: i64) -> Result<Self> {
        if lo > 0 || hi < 0 {
            return Err(Error::Precondition(format!("window [{lo}, {hi}] must contain 0")));
        }
        let mut coeffs = Vec::with_capacity((hi - lo + 1) as usize);
        let mut inverses = Vec::with_capacity(coeffs.capacity());
        for n in lo..=hi {
            let a = source.evaluate(n).clone();
            let inv = inverse(&a).ok_or(Error::SingularCoefficient(n))?;
            coeffs.push(a);
            inverses.push(inv);
        }
        let d = source.dimension();
        let len = (hi - lo + 1) as usize;
        let mut fundamentals = vec![ScaledMatrix::identity(d); len];
        let zero = (-lo) as usize;
        for i in zero + 1..len {
            let mut x = fundamentals[i - 1].clone();
            x.premul(&coeffs[i - 1]);
            fundamentals[i] = x;
        }
        for i in (0..zero).rev() {
            let mut x = fundamentals[i + 1].clone();
            x.premul(&inverses[i]);
            fundamentals[i] = x;
        }
        Ok(TransitionOperator {
            source: source.clone(),
            lo,
            hi,
            coeffs,
            inverses,
            fundamentals,
            frame_seed: DEFAULT_FRAME_SEED,
            splittings: Mutex::new(HashMap::new()),
        })
    }

    /// Seed of the generic starting frame used by subspace iterations.
    pub fn with_frame_seed(mut self, seed: u64) -> Self {
        self.frame_seed = seed;
        self
    }

    pub fn frame_seed(&self) -> u64 {
        self.frame_seed
    }

    pub fn source(&self) -> &MatrixSequence {
        &self.source
    }

    pub fn dimension(&self) -> usize {
        self.source.dimension()
    }

    pub fn window(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    /// Largest symmetric horizon contained in the window.
    pub fn horizon(&self) -> i64 {
        (-self.lo).min(self.hi)
    }

    fn check(&self, n: i64) -> Result<usize> {
        if n < self.lo || n > self.hi {
            Err(Error::OutOfWindow(n))
        } else {
            Ok((n - self.lo) as usize)
        }
    }

    /// `A(n)` from the cache.
    pub fn coeff(&self, n: i64) -> Result<&Mat> {
        Ok(&self.coeffs[self.check(n)?])
    }

    pub fn coeff_inverse(&self, n: i64) -> Result<&Mat> {
        Ok(&self.inverses[self.check(n)?])
    }

    pub fn fundamental_scaled(&self, n: i64) -> Result<&ScaledMatrix> {
        Ok(&self.fundamentals[self.check(n)?])
    }

    /// `X(n)`; entries may overflow for very long windows, use
    /// [`fundamental_scaled`](Self::fundamental_scaled) there.
    pub fn fundamental(&self, n: i64) -> Result<Mat> {
        Ok(self.fundamental_scaled(n)?.to_matrix())
    }

    /// `X(n,k)` accumulated as a product of coefficients.
    pub fn transition_scaled(&self, n: i64, k: i64) -> Result<ScaledMatrix> {
        self.check(n)?;
        self.check(k)?;
        let d = self.dimension();
        let mut acc = ScaledMatrix::identity(d);
        if n > k {
            for j in k..n {
                acc.premul(&self.coeffs[(j - self.lo) as usize]);
            }
        } else {
            // A⁻¹(n) ··· A⁻¹(k−1)
            for j in (n..k).rev() {
                acc.premul(&self.inverses[(j - self.lo) as usize]);
            }
        }
        Ok(acc)
    }

    pub fn transition(&self, n: i64, k: i64) -> Result<Mat> {
        Ok(self.transition_scaled(n, k)?.to_matrix())
    }

    /// `X(n)·X(k)⁻¹` through the cached fundamentals (one LU solve).
    ///
    /// Cheap but loses precision when `X(k)` is badly conditioned; the
    /// product route of [`transition`](Self::transition) is the default.
    pub fn transition_via_cache(&self, n: i64, k: i64) -> Result<Mat> {
        let xn = self.fundamental_scaled(n)?;
        let xk = self.fundamental_scaled(k)?;
        let lu = xk.unit.transpose().lu();
        let y = lu
            .solve(&xn.unit.transpose())
            .ok_or(Error::SingularTransform(k))?;
        Ok(y.transpose() * (xn.log_scale - xk.log_scale).exp())
    }

    /// `λ^{k−n}·X(n,k)`, the transition of `x(n+1) = λ⁻¹A(n)x(n)`.
    pub fn weighted_transition(&self, lambda: f64, n: i64, k: i64) -> Result<Mat> {
        if !(lambda > 0.0) {
            return Err(Error::NonpositiveLambda(lambda));
        }
        let x = self.transition_scaled(n, k)?;
        let steps = k - n;
        if lambda == 1.0 {
            return Ok(x.to_matrix());
        }
        if steps.abs() <= 256 {
            let w = lambda.powi(steps as i32) * x.log_scale.exp();
            if w.is_finite() && w != 0.0 {
                return Ok(&x.unit * w);
            }
        }
        Ok(x.to_matrix_with(steps as f64 * lambda.ln()))
    }

    pub(crate) fn cached_splitting(&self, horizon: i64) -> Option<Arc<Splitting>> {
        self.splittings.lock().expect("splitting cache poisoned").get(&horizon).cloned()
    }

    pub(crate) fn store_splitting(&self, horizon: i64, s: Arc<Splitting>) {
        self.splittings.lock().expect("splitting cache poisoned").insert(horizon, s);
    }
}
