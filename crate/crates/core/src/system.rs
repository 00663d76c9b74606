//! Coefficient sequences `n ↦ A(n)` over the integers.
//!
//! Sequences are described by a finite payload (constant, piecewise,
//! periodic or table) so that sup-norms over any window and the behaviour
//! beyond it are decidable from the description alone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inf_norm, inverse, rcond, Mat};

/// Default reciprocal-condition threshold below which a coefficient counts as singular.
pub const DEFAULT_SING_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum SequenceKind {
    Constant(Mat),
    /// `base` for `n` below every threshold, otherwise the matrix of the
    /// last threshold `<= n`.
    Piecewise { base: Mat, pieces: Vec<(i64, Mat)> },
    /// `matrices[n mod p]`.
    Periodic(Vec<Mat>),
    /// Explicit values on `[n_min, n_min + len)`, extended constantly outside.
    Table { n_min: i64, matrices: Vec<Mat> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSequence {
    dimension: usize,
    kind: SequenceKind,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthBounds {
    pub a_sup: f64,
    pub ainv_sup: f64,
    /// `sup ‖A(n) − I‖∞`.
    pub l_bound: f64,
    /// `sup ‖A(n)‖∞`; the `C⁺` constant when the sequence is triangular.
    pub c_plus: f64,
    pub window: (i64, i64),
}

impl MatrixSequence {
    pub fn new(dimension: usize, kind: SequenceKind) -> Result<Self> {
        Self::with_tolerance(dimension, kind, DEFAULT_SING_TOL)
    }

    pub fn with_tolerance(dimension: usize, kind: SequenceKind, sing_tol: f64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::DimensionMismatch("dimension must be positive".into()));
        }
        let seq = MatrixSequence { dimension, kind, label: String::new() };
        for (n, m) in seq.payload() {
            if m.nrows() != dimension || m.ncols() != dimension {
                return Err(Error::DimensionMismatch(format!(
                    "matrix for n = {n} is {}x{}, expected {dimension}x{dimension}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if !m.iter().all(|v| v.is_finite()) || rcond(m) < sing_tol {
                return Err(Error::SingularCoefficient(n));
            }
        }
        match &seq.kind {
            SequenceKind::Piecewise { pieces, .. } => {
                if pieces.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(Error::Precondition("piecewise thresholds must be strictly increasing".into()));
                }
            }
            SequenceKind::Periodic(ms) if ms.is_empty() => {
                return Err(Error::Precondition("periodic sequence needs at least one matrix".into()));
            }
            SequenceKind::Table { matrices, .. } if matrices.is_empty() => {
                return Err(Error::Precondition("table sequence needs at least one matrix".into()));
            }
            _ => {}
        }
        Ok(seq)
    }

    pub fn constant(m: Mat) -> Result<Self> {
        Self::new(m.nrows(), SequenceKind::Constant(m))
    }

    pub fn piecewise(base: Mat, pieces: Vec<(i64, Mat)>) -> Result<Self> {
        Self::new(base.nrows(), SequenceKind::Piecewise { base, pieces })
    }

    pub fn periodic(matrices: Vec<Mat>) -> Result<Self> {
        let d = matrices.first().map_or(0, |m| m.nrows());
        Self::new(d, SequenceKind::Periodic(matrices))
    }

    pub fn table(n_min: i64, matrices: Vec<Mat>) -> Result<Self> {
        let d = matrices.first().map_or(0, |m| m.nrows());
        Self::new(d, SequenceKind::Table { n_min, matrices })
    }

    pub fn scalar_constant(c: f64) -> Result<Self> {
        Self::constant(Mat::from_element(1, 1, c))
    }

    pub fn labelled(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn kind(&self) -> &SequenceKind {
        &self.kind
    }

    /// Period of the coefficient map when it is eventually periodic in both
    /// directions with one pattern (constant and periodic kinds).
    pub fn period(&self) -> Option<usize> {
        match &self.kind {
            SequenceKind::Constant(_) => Some(1),
            SequenceKind::Periodic(ms) => Some(ms.len()),
            _ => None,
        }
    }

    /// Every payload matrix tagged with a representative time index.
    fn payload(&self) -> Vec<(i64, &Mat)> {
        match &self.kind {
            SequenceKind::Constant(m) => vec![(0, m)],
            SequenceKind::Piecewise { base, pieces } => {
                let first = pieces.first().map_or(0, |p| p.0 - 1);
                std::iter::once((first, base))
                    .chain(pieces.iter().map(|(n, m)| (*n, m)))
                    .collect()
            }
            SequenceKind::Periodic(ms) => ms.iter().enumerate().map(|(i, m)| (i as i64, m)).collect(),
            SequenceKind::Table { n_min, matrices } => matrices
                .iter()
                .enumerate()
                .map(|(i, m)| (n_min + i as i64, m))
                .collect(),
        }
    }

    pub fn evaluate(&self, n: i64) -> &Mat {
        match &self.kind {
            SequenceKind::Constant(m) => m,
            SequenceKind::Piecewise { base, pieces } => {
                let idx = pieces.partition_point(|(t, _)| *t <= n);
                if idx == 0 {
                    base
                } else {
                    &pieces[idx - 1].1
                }
            }
            SequenceKind::Periodic(ms) => &ms[n.rem_euclid(ms.len() as i64) as usize],
            SequenceKind::Table { n_min, matrices } => {
                let last = matrices.len() as i64 - 1;
                let idx = (n - n_min).clamp(0, last);
                &matrices[idx as usize]
            }
        }
    }

    /// Sup-norm bounds over `[window.0, window.1]`.
    pub fn validate(&self, window: (i64, i64), sing_tol: f64) -> Result<GrowthBounds> {
        if window.0 > window.1 {
            return Err(Error::Precondition("empty window".into()));
        }
        if sing_tol <= 0.0 {
            return Err(Error::Precondition("singularity threshold must be positive".into()));
        }
        let d = self.dimension;
        let eye = Mat::identity(d, d);
        let mut b = GrowthBounds { a_sup: 0.0, ainv_sup: 0.0, l_bound: 0.0, c_plus: 0.0, window };
        for n in window.0..=window.1 {
            let a = self.evaluate(n);
            let inv = inverse(a).ok_or(Error::SingularCoefficient(n))?;
            let an = inf_norm(a);
            let ain = inf_norm(&inv);
            if 1.0 / (an * ain) < sing_tol {
                return Err(Error::SingularCoefficient(n));
            }
            b.a_sup = b.a_sup.max(an);
            b.ainv_sup = b.ainv_sup.max(ain);
            b.l_bound = b.l_bound.max(inf_norm(&(a - &eye)));
        }
        b.c_plus = b.a_sup;
        Ok(b)
    }

    /// `n ↦ μ·A(n)`.
    pub fn scale(&self, mu: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::NonpositiveMu(mu));
        }
        let s = |m: &Mat| m * mu;
        let kind = match &self.kind {
            SequenceKind::Constant(m) => SequenceKind::Constant(s(m)),
            SequenceKind::Piecewise { base, pieces } => SequenceKind::Piecewise {
                base: s(base),
                pieces: pieces.iter().map(|(n, m)| (*n, s(m))).collect(),
            },
            SequenceKind::Periodic(ms) => SequenceKind::Periodic(ms.iter().map(s).collect()),
            SequenceKind::Table { n_min, matrices } => SequenceKind::Table {
                n_min: *n_min,
                matrices: matrices.iter().map(s).collect(),
            },
        };
        Ok(MatrixSequence { dimension: self.dimension, kind, label: self.label.clone() })
    }

    /// Samples the sequence on `[lo, hi]`.
    pub fn sample(&self, lo: i64, hi: i64) -> WindowedValues {
        WindowedValues {
            start: lo,
            values: (lo..=hi).map(|n| self.evaluate(n).clone()).collect(),
        }
    }

    /// Scalar entry sequence `(r, r)` sampled on a window.
    pub fn diagonal_entry(&self, r: usize, lo: i64, hi: i64) -> Vec<f64> {
        (lo..=hi).map(|n| self.evaluate(n)[(r, r)]).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(RawSystem::from(self)).expect("system serialization is infallible")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&RawSystem::from(self)).expect("system serialization is infallible")
    }
}

/// Values of a matrix function on a finite integer window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedValues {
    pub start: i64,
    pub values: Vec<Mat>,
}

impl WindowedValues {
    pub fn new(start: i64, values: Vec<Mat>) -> Self {
        WindowedValues { start, values }
    }

    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64 - 1
    }

    pub fn dimension(&self) -> usize {
        self.values.first().map_or(0, |m| m.nrows())
    }

    pub fn get(&self, n: i64) -> Option<&Mat> {
        if n < self.start {
            return None;
        }
        self.values.get((n - self.start) as usize)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, &Mat)> {
        self.values.iter().enumerate().map(move |(i, m)| (self.start + i as i64, m))
    }

    /// Restriction to `[lo, hi]`; panics if the range is not covered.
    pub fn restrict(&self, lo: i64, hi: i64) -> WindowedValues {
        assert!(lo >= self.start && hi <= self.end(), "restriction outside window");
        let a = (lo - self.start) as usize;
        let b = (hi - self.start) as usize;
        WindowedValues { start: lo, values: self.values[a..=b].to_vec() }
    }

    /// Table-kind sequence with these values.
    pub fn to_sequence(&self) -> Result<MatrixSequence> {
        MatrixSequence::table(self.start, self.values.clone())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(inf_norm).fold(0.0, f64::max)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPiece {
    from: i64,
    matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    dimension: usize,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pieces: Option<Vec<RawPiece>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrices: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_min: Option<i64>,
}

fn rows_of(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl From<&MatrixSequence> for RawSystem {
    fn from(seq: &MatrixSequence) -> Self {
        let mut raw = RawSystem {
            dimension: seq.dimension,
            kind: String::new(),
            label: (!seq.label.is_empty()).then(|| seq.label.clone()),
            matrix: None,
            base: None,
            pieces: None,
            matrices: None,
            n_min: None,
        };
        match &seq.kind {
            SequenceKind::Constant(m) => {
                raw.kind = "constant".into();
                raw.matrix = Some(rows_of(m));
            }
            SequenceKind::Piecewise { base, pieces } => {
                raw.kind = "piecewise".into();
                raw.base = Some(rows_of(base));
                raw.pieces = Some(
                    pieces
                        .iter()
                        .map(|(n, m)| RawPiece { from: *n, matrix: rows_of(m) })
                        .collect(),
                );
            }
            SequenceKind::Periodic(ms) => {
                raw.kind = "periodic".into();
                raw.matrices = Some(ms.iter().map(rows_of).collect());
            }
            SequenceKind::Table { n_min, matrices } => {
                raw.kind = "table".into();
                raw.n_min = Some(*n_min);
                raw.matrices = Some(matrices.iter().map(rows_of).collect());
            }
        }
        raw
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], d: usize, what: &str) -> Result<Mat> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        let cols = rows.first().map_or(0, |r| r.len());
        return Err(Error::DimensionMismatch(format!(
            "{what} is {}x{cols}, expected {d}x{d}",
            rows.len()
        )));
    }
    Ok(Mat::from_fn(d, d, |i, j| rows[i][j]))
}

fn missing(key: &str, kind: &str) -> Error {
    Error::ParseError { position: "document".into(), reason: format!("kind \"{kind}\" requires key \"{key}\"") }
}

/// Parses a system document (UTF-8 JSON).
pub fn parse_system(text: &[u8]) -> Result<MatrixSequence> {
    let raw: RawSystem = serde_json::from_slice(text).map_err(|e| Error::ParseError {
        position: format!("line {} column {}", e.line(), e.column()),
        reason: e.to_string(),
    })?;
    let d = raw.dimension;
    if d == 0 {
        return Err(Error::DimensionMismatch("dimension must be positive".into()));
    }
    let kind = match raw.kind.as_str() {
        "constant" => {
            let m = raw.matrix.as_ref().ok_or_else(|| missing("matrix", "constant"))?;
            SequenceKind::Constant(matrix_from_rows(m, d, "matrix")?)
        }
        "piecewise" => {
            let base = raw.base.as_ref().ok_or_else(|| missing("base", "piecewise"))?;
            let pieces = raw.pieces.as_ref().ok_or_else(|| missing("pieces", "piecewise"))?;
            SequenceKind::Piecewise {
                base: matrix_from_rows(base, d, "base")?,
                pieces: pieces
                    .iter()
                    .map(|p| Ok((p.from, matrix_from_rows(&p.matrix, d, "piece matrix")?)))
                    .collect::<Result<_>>()?,
            }
        }
        "periodic" => {
            let ms = raw.matrices.as_ref().ok_or_else(|| missing("matrices", "periodic"))?;
            SequenceKind::Periodic(
                ms.iter().map(|m| matrix_from_rows(m, d, "periodic matrix")).collect::<Result<_>>()?,
            )
        }
        "table" => {
            let ms = raw.matrices.as_ref().ok_or_else(|| missing("matrices", "table"))?;
            let n_min = raw.n_min.ok_or_else(|| missing("n_min", "table"))?;
            SequenceKind::Table {
                n_min,
                matrices: ms.iter().map(|m| matrix_from_rows(m, d, "table matrix")).collect::<Result<_>>()?,
            }
        }
        other => {
            return Err(Error::ParseError {
                position: "key \"kind\"".into(),
                reason: format!("unknown kind \"{other}\""),
            })
        }
    };
    let seq = MatrixSequence::new(d, kind)?;
    Ok(match raw.label {
        Some(l) => seq.labelled(l),
        None => seq,
    })
}
