//! Command-line front end.

use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use serde_json::Value;

use crate::contraction::{contract_system_with, diagonalize_full_spectrum_with, spectrum_for, ContractOptions};
use crate::error::{Error, Result};
use crate::linalg::{inf_norm, lower_residual, orthogonality_residual};
use crate::propagator::{TransitionOperator, DEFAULT_FRAME_SEED};
use crate::report::{self, check_certificate, parse_certificate};
use crate::similarity::{block_diagonalize_with, check_similarity, qr_triangularize};
use crate::spectrum::spectrum_scan_with;
use crate::system::parse_system;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Spectrum,
    Triangularize,
    Blockdiag,
    Contract,
    Diagonalize,
    Verify,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "dspec", version, about = "Dichotomy spectra and contraction certificates for linear difference systems")]
pub struct RunConfig {
    pub command: Command,
    /// System description (JSON).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub horizon: i64,
    #[arg(long, default_value_t = 1e-3)]
    pub lambda_min: f64,
    #[arg(long, default_value_t = 1e3)]
    pub lambda_max: f64,
    #[arg(long, default_value_t = 64)]
    pub grid: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub eps_lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// Scaling bound; chosen automatically when absent.
    #[arg(long)]
    pub mu: Option<f64>,
    /// β-transformation factor; half the admissible bound when absent.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub tol: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_FRAME_SEED)]
    pub seed: u64,
    /// Certificate to re-check (verify only).
    #[arg(long)]
    pub certificate: Option<PathBuf>,
}

impl RunConfig {
    pub fn options(&self) -> Result<ContractOptions> {
        if self.horizon < 8 {
            return Err(Error::Precondition(format!("horizon {} is below 8", self.horizon)));
        }
        if !(self.eps_lambda > 0.0) {
            return Err(Error::Precondition("eps-lambda must be positive".into()));
        }
        if !(self.lambda_min > 0.0 && self.lambda_min < self.lambda_max) {
            return Err(Error::Precondition("lambda range must satisfy 0 < min < max".into()));
        }
        let mut opts = ContractOptions::new(self.horizon);
        opts.scan.lambda_lo = self.lambda_min;
        opts.scan.lambda_hi = self.lambda_max;
        opts.scan.grid = self.grid;
        opts.scan.eps_lambda = self.eps_lambda;
        opts.block.frame_seed = self.seed;
        opts.settings.mu = self.mu;
        opts.settings.beta = self.beta;
        opts.tol = self.tol;
        Ok(opts)
    }
}

/// Result of one command: the JSON report, a summary, and whether every
/// check passed.
pub struct Outcome {
    pub report: Value,
    pub summary: String,
    pub passed: bool,
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    let text = std::fs::read(&cfg.input)?;
    let seq = parse_system(&text)?;
    let opts = cfg.options()?;
    let n = cfg.horizon;
    match cfg.command {
        Command::Spectrum => {
            let op = TransitionOperator::new(&seq, n)?.with_frame_seed(cfg.seed);
            let sigma = spectrum_scan_with(&op, &opts.scan)?;
            let summary = format!("spectrum: {} interval(s) {:?}", sigma.ell, sigma.intervals);
            Ok(Outcome { report: report::spectrum_report(&sigma), summary, passed: true })
        }
        Command::Triangularize => {
            let (q, c) = qr_triangularize(&seq, (-n, n))?;
            let mut fact: f64 = 0.0;
            let mut orth: f64 = 0.0;
            let mut lower: f64 = 0.0;
            let mut positive = true;
            for (k, ck) in c.iter() {
                let a = seq.evaluate(k);
                let r = a * q.get(k).unwrap() - q.get(k + 1).unwrap() * ck;
                fact = fact.max(inf_norm(&r) / (1.0 + inf_norm(a)));
                orth = orth.max(orthogonality_residual(q.get(k).unwrap()));
                lower = lower.max(lower_residual(ck));
                positive &= (0..ck.nrows()).all(|i| ck[(i, i)] > 0.0);
            }
            let passed = fact <= 1e-10 && orth <= 1e-12 && lower == 0.0 && positive;
            let summary = format!(
                "triangularize: factorization residual {fact:.3e}, orthogonality residual {orth:.3e}, positive diagonal {positive}"
            );
            Ok(Outcome { report: report::triangularize_report(&q, &c, fact), summary, passed })
        }
        Command::Blockdiag => {
            let sigma = spectrum_for(&seq, &opts)?;
            let bd = block_diagonalize_with(&seq, &sigma, n, &opts.block)?;
            let b = bd.assembled();
            let a = seq.sample(b.start, b.end());
            let sim = check_similarity(&bd.transform, &a, &b, opts.similarity_tol);
            let summary = format!(
                "blockdiag: {} block(s), coupling {:?}, similarity residual {:.3e} ({})",
                bd.blocks.len(),
                bd.coupling,
                sim.max_residual,
                if sim.holds { "ok" } else { "FAILED" }
            );
            Ok(Outcome { report: report::blockdiag_report(&bd, &sigma, sim.max_residual), summary, passed: sim.holds })
        }
        Command::Contract => {
            let res = contract_system_with(&seq, cfg.delta, &opts)?;
            let v = &res.verdicts;
            let summary = format!(
                "contract: delta_tilde {:.6e}, max R norm {:.6e}, similarity residual {:.3e}\n  similarity {}\n  h_in_spectrum {}\n  residual_bound {}\n  minimality {}",
                res.delta_tilde,
                res.r_norms().into_iter().fold(0.0, f64::max),
                res.similarity_residual,
                v.similarity,
                v.h_in_spectrum,
                v.residual_bound,
                v.minimality
            );
            Ok(Outcome { report: report::certificate_report(&res), summary, passed: v.all() })
        }
        Command::Diagonalize => {
            let dg = diagonalize_full_spectrum_with(&seq, &opts)?;
            let bohl_ok = dg
                .bohl
                .iter()
                .zip(&dg.sigma.intervals)
                .all(|(x, y)| (x.0 - y.0).abs() <= cfg.tol && (x.1 - y.1).abs() <= cfg.tol);
            let passed = dg.coupling < 1e-8 && bohl_ok;
            let summary = format!(
                "diagonalize: coupling {:.3e}, Bohl intervals {:?} against spectrum {:?}",
                dg.coupling, dg.bohl, dg.sigma.intervals
            );
            Ok(Outcome { report: report::diagonalization_report(&dg), summary, passed })
        }
        Command::Verify => {
            let path = cfg
                .certificate
                .as_ref()
                .ok_or_else(|| Error::Precondition("verify needs --certificate".into()))?;
            let cert = parse_certificate(&std::fs::read(path)?)?;
            let sigma = spectrum_for(&seq, &opts)?;
            let chk = check_certificate(&cert, &sigma, cfg.tol);
            let report = serde_json::json!({
                "recorded_verdicts": chk.recorded_verdicts,
                "h_in_spectrum": chk.h_in_spectrum,
                "residual_bound": chk.residual_bound,
                "minimality": chk.minimality,
                "spectrum_agrees": chk.spectrum_agrees,
                "spectrum_drift": chk.spectrum_drift,
                "holds": chk.holds(),
            });
            let summary = format!(
                "verify: recorded verdicts {}, H in spectrum {}, R bound {}, minimality {}, spectrum drift {:.3e}",
                chk.recorded_verdicts, chk.h_in_spectrum, chk.residual_bound, chk.minimality, chk.spectrum_drift
            );
            Ok(Outcome { report, summary, passed: chk.holds() })
        }
    }
}

/// Runs a command and returns the process exit code.
pub fn run(cfg: &RunConfig) -> i32 {
    let outcome = match execute(cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let text = report::to_canonical_string(&outcome.report);
    match &cfg.output {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &text) {
                eprintln!("error: {}", Error::from(e));
                return 1;
            }
            println!("{}", outcome.summary);
        }
        None => {
            print!("{text}");
            eprintln!("{}", outcome.summary);
        }
    }
    if outcome.passed {
        0
    } else {
        eprintln!("verification failed");
        2
    }
}
