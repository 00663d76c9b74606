//! Canonical JSON reports.
//!
//! Objects are written with sorted keys, floats with 17 significant digits
//! in exponent form and integers plainly, so equal results give byte-equal
//! files.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serializer;
use serde_json::{json, Map, Value};

use crate::contraction::{ContractionResult, Diagonalization, Verdicts};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::similarity::{BlockDecomposition, SimilarityTransform};
use crate::spectrum::SpectrumEstimate;
use crate::system::WindowedValues;

pub fn serialize_matrix<S: Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&matrix_rows(m), s)
}

fn matrix_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// JSON number for a float; non-finite values become `null`.
fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

fn matrix_value(m: &Mat) -> Value {
    Value::Array(
        m.row_iter()
            .map(|r| Value::Array(r.iter().map(|v| num(*v)).collect()))
            .collect(),
    )
}

fn values_value(v: &WindowedValues) -> Value {
    json!({
        "start": v.start,
        "matrices": v.values.iter().map(matrix_value).collect::<Vec<_>>(),
    })
}

pub fn spectrum_report(sigma: &SpectrumEstimate) -> Value {
    json!({
        "intervals": sigma.intervals.iter().map(|(a, b)| vec![num(*a), num(*b)]).collect::<Vec<_>>(),
        "ell": sigma.ell,
        "horizon": sigma.horizon,
        "resolution": num(sigma.resolution),
        "method": sigma.method,
    })
}

pub fn transform_report(t: &SimilarityTransform) -> Value {
    json!({
        "start": t.start,
        "matrices": t.values.iter().map(matrix_value).collect::<Vec<_>>(),
        "f_sup": num(t.f_sup),
        "finv_sup": num(t.finv_sup),
        "delta_tag": t.delta_tag.map_or(Value::Null, num),
    })
}

pub fn triangularize_report(q: &SimilarityTransform, c: &WindowedValues, residual: f64) -> Value {
    json!({
        "q": transform_report(q),
        "c": values_value(c),
        "factorization_residual": num(residual),
    })
}

pub fn blockdiag_report(bd: &BlockDecomposition, sigma: &SpectrumEstimate, residual: f64) -> Value {
    json!({
        "transform": transform_report(&bd.transform),
        "blocks": bd.blocks.iter().map(values_value).collect::<Vec<_>>(),
        "coupling": bd.coupling.iter().map(|c| num(*c)).collect::<Vec<_>>(),
        "similarity_residual": num(residual),
        "spectrum": spectrum_report(sigma),
    })
}

pub fn diagonalization_report(dg: &Diagonalization) -> Value {
    json!({
        "transform": transform_report(&dg.transform),
        "start": dg.diagonal.start,
        "diagonal": dg.diagonal.values.iter()
            .map(|m| (0..m.nrows()).map(|i| num(m[(i, i)])).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
        "coupling": num(dg.coupling),
        "bohl": dg.bohl.iter().map(|(a, b)| vec![num(*a), num(*b)]).collect::<Vec<_>>(),
        "spectrum": spectrum_report(&dg.sigma),
    })
}

fn verdicts_value(v: &Verdicts) -> Value {
    json!({
        "similarity": v.similarity,
        "h_in_spectrum": v.h_in_spectrum,
        "residual_bound": v.residual_bound,
        "minimality": v.minimality,
    })
}

pub fn certificate_report(res: &ContractionResult) -> Value {
    let blocks: Vec<Value> = res
        .blocks
        .iter()
        .zip(&res.block_sizes)
        .map(|(b, size)| {
            json!({
                "interval": vec![num(b.interval.0), num(b.interval.1)],
                "size": size,
                "m1": num(b.m1),
                "m2": num(b.m2),
                "c_plus": num(b.c_plus),
                "beta_bound": num(b.beta_bound),
                "analytic_bound": num(b.analytic_bound),
                "max_r_norm": num(b.max_r_norm),
                "mirrored_switch_times": b.schedule.mirrored_switch_times,
            })
        })
        .collect();
    json!({
        "delta": num(res.delta),
        "delta_tilde": num(res.delta_tilde),
        "delta_over_b1": num(res.delta_over_b1),
        "mu": res.blocks.iter().map(|b| num(b.mu)).collect::<Vec<_>>(),
        "beta": res.blocks.iter().map(|b| num(b.beta)).collect::<Vec<_>>(),
        "switch_times": res.blocks.iter().map(|b| b.schedule.switch_times.clone()).collect::<Vec<_>>(),
        "blocks": blocks,
        "start": res.start,
        "H": res.diagonal_part.iter().map(|h| h.iter().map(|v| num(*v)).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "R_norm": res.r_norms().into_iter().map(num).collect::<Vec<_>>(),
        "transform": {
            "f_sup": num(res.transform.f_sup),
            "finv_sup": num(res.transform.finv_sup),
            "delta_tag": res.transform.delta_tag.map_or(Value::Null, num),
        },
        "similarity_residual": num(res.similarity_residual),
        "spectrum": spectrum_report(&res.sigma),
        "verdicts": verdicts_value(&res.verdicts),
    })
}

/// Canonical text of a JSON value.
pub fn to_canonical_string(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v);
    out.push('\n');
    out
}

fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                write!(out, "{i}").unwrap();
            } else if let Some(u) = n.as_u64() {
                write!(out, "{u}").unwrap();
            } else {
                write!(out, "{:.16e}", n.as_f64().unwrap()).unwrap();
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).unwrap()),
        Value::Array(a) => {
            out.push('[');
            for (i, x) in a.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, x);
            }
            out.push(']');
        }
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).unwrap());
                out.push(':');
                write_value(out, &m[k]);
            }
            out.push('}');
        }
    }
}

pub fn emit_report(v: &Value, path: &Path) -> Result<()> {
    std::fs::write(path, to_canonical_string(v))?;
    Ok(())
}

/// The parts of a contraction certificate that can be checked without the
/// transform.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateView {
    pub delta: f64,
    pub delta_tilde: f64,
    pub start: i64,
    pub h: Vec<Vec<f64>>,
    pub r_norm: Vec<f64>,
    pub spectrum: Vec<(f64, f64)>,
    pub verdicts: Map<String, Value>,
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| Error::ParseError {
        position: format!("key \"{key}\""),
        reason: "missing".into(),
    })
}

fn as_f64(v: &Value, what: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| Error::ParseError { position: what.into(), reason: "expected a number".into() })
}

fn as_array<'a>(v: &'a Value, what: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| Error::ParseError { position: what.into(), reason: "expected an array".into() })
}

pub fn parse_certificate(text: &[u8]) -> Result<CertificateView> {
    let v: Value = serde_json::from_slice(text).map_err(|e| Error::ParseError {
        position: format!("line {} column {}", e.line(), e.column()),
        reason: e.to_string(),
    })?;
    let h = as_array(field(&v, "H")?, "H")?
        .iter()
        .map(|row| as_array(row, "H")?.iter().map(|x| as_f64(x, "H")).collect())
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let r_norm = as_array(field(&v, "R_norm")?, "R_norm")?
        .iter()
        .map(|x| as_f64(x, "R_norm"))
        .collect::<Result<Vec<f64>>>()?;
    if h.len() != r_norm.len() {
        return Err(Error::DimensionMismatch("H and R_norm have different lengths".into()));
    }
    let spectrum = as_array(field(field(&v, "spectrum")?, "intervals")?, "spectrum.intervals")?
        .iter()
        .map(|iv| {
            let p = as_array(iv, "interval")?;
            if p.len() != 2 {
                return Err(Error::ParseError { position: "interval".into(), reason: "expected two endpoints".into() });
            }
            Ok((as_f64(&p[0], "interval")?, as_f64(&p[1], "interval")?))
        })
        .collect::<Result<Vec<_>>>()?;
    let verdicts = field(&v, "verdicts")?
        .as_object()
        .cloned()
        .ok_or_else(|| Error::ParseError { position: "verdicts".into(), reason: "expected an object".into() })?;
    Ok(CertificateView {
        delta: as_f64(field(&v, "delta")?, "delta")?,
        delta_tilde: as_f64(field(&v, "delta_tilde")?, "delta_tilde")?,
        start: field(&v, "start")?
            .as_i64()
            .ok_or_else(|| Error::ParseError { position: "start".into(), reason: "expected an integer".into() })?,
        h,
        r_norm,
        spectrum,
        verdicts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateCheck {
    pub recorded_verdicts: bool,
    pub h_in_spectrum: bool,
    pub residual_bound: bool,
    pub minimality: bool,
    /// Largest endpoint difference between the recorded and the recomputed spectrum.
    pub spectrum_drift: f64,
    pub spectrum_agrees: bool,
}

impl CertificateCheck {
    pub fn holds(&self) -> bool {
        self.recorded_verdicts && self.h_in_spectrum && self.residual_bound && self.minimality && self.spectrum_agrees
    }
}

/// Re-checks a certificate against an independently computed spectrum.
pub fn check_certificate(cert: &CertificateView, sigma: &SpectrumEstimate, tol: f64) -> CertificateCheck {
    let recorded_verdicts = ["similarity", "h_in_spectrum", "residual_bound", "minimality"]
        .iter()
        .all(|k| cert.verdicts.get(*k).and_then(Value::as_bool) == Some(true));
    let h_in_spectrum = cert.h.iter().flatten().all(|h| sigma.distance(*h) <= tol);
    let residual_bound = cert.r_norm.iter().all(|r| *r < cert.delta_tilde);
    let minimality = sigma.intervals.iter().all(|&(a, b)| {
        let near: Vec<f64> = cert.h.iter().flatten().copied().filter(|h| *h >= a - tol && *h <= b + tol).collect();
        let lo = near.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = near.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        !near.is_empty() && lo <= a + tol && hi >= b - tol
    });
    let spectrum_drift = if cert.spectrum.len() == sigma.intervals.len() {
        cert.spectrum
            .iter()
            .zip(&sigma.intervals)
            .map(|(x, y)| (x.0 - y.0).abs().max((x.1 - y.1).abs()))
            .fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    CertificateCheck {
        recorded_verdicts,
        h_in_spectrum,
        residual_bound,
        minimality,
        spectrum_drift,
        spectrum_agrees: spectrum_drift <= tol,
    }
}
