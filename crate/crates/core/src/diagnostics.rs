//! Convergence history of a Robin–Robin run and the certificates computed
//! from it: the telescoping contraction of `μⁿ`/`λⁿ`, the decay of the
//! monotone pairings, and an error-decay summary.
//!
//! A history serializes into two files: a per-iteration CSV with the fixed
//! header [`CSV_HEADER`] and a JSON sidecar ([`HistorySidecar`]) carrying
//! the run metadata, the `n = 0` quantities and the pairing sequences.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "n,gap,err_eta1,err_eta2,err_u1,err_u2,mu_err,lambda_err,newton1,newton2";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub preset: String,
    pub p: f64,
    pub r: f64,
    pub s: f64,
    pub h: f64,
    pub dim: usize,
    pub n_interface: usize,
    pub seed: u64,
    pub newton_tol: f64,
    pub tol_gap: f64,
    pub max_outer: usize,
    /// Slack for the certificate inequalities, `10 × newton_tol`.
    pub slack: f64,
}

/// Quantities of iterate `n ≥ 1`. Reference errors are `None` when the run
/// had no reference solution. Norms on the interface are discrete `L²(Γ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub n: usize,
    pub gap: f64,
    pub err_eta1: Option<f64>,
    pub err_eta2: Option<f64>,
    pub err_u1: Option<f64>,
    pub err_u2: Option<f64>,
    /// `‖μⁿ − μ‖` with `μⁿ = sη₂ⁿ + 𝒮₂η₂ⁿ`.
    pub mu_err: Option<f64>,
    /// `‖λⁿ − λ‖` with `λⁿ = sη₂ⁿ − 𝒮₂η₂ⁿ`.
    pub lambda_err: Option<f64>,
    pub newton1: usize,
    pub newton2: usize,
    /// `(𝒮₁η₁ⁿ − 𝒮₁η, η₁ⁿ − η)_{L²(Γ)}`.
    #[serde(skip)]
    pub pairing1: Option<f64>,
    /// `(𝒮₂η₂ⁿ − 𝒮₂η, η₂ⁿ − η)_{L²(Γ)}`.
    #[serde(skip)]
    pub pairing2: Option<f64>,
}

/// State before the first sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialRecord {
    /// `‖𝒮η₂⁰‖_{L²(Γ)}`; the run stops at `n = 0` if this is below `tol_gap`.
    pub flux_residual: f64,
    pub mu_err: Option<f64>,
    pub lambda_err: Option<f64>,
    pub pairing2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceHistory {
    pub meta: RunMetadata,
    pub initial: InitialRecord,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    /// Iteration index at which the stopping criterion was met.
    pub converged_at: Option<usize>,
}

/// Everything in a [`ConvergenceHistory`] that the CSV does not carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistorySidecar {
    pub meta: RunMetadata,
    pub initial: InitialRecord,
    pub converged: bool,
    pub converged_at: Option<usize>,
    pub pairing1: Vec<Option<f64>>,
    pub pairing2: Vec<Option<f64>>,
}

impl ConvergenceHistory {
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.n)
    }

    pub fn final_gap(&self) -> Option<f64> {
        self.records.last().map(|r| r.gap)
    }

    pub fn has_reference(&self) -> bool {
        self.initial.mu_err.is_some() && self.records.iter().all(|r| r.mu_err.is_some())
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        if self.records.is_empty() {
            wtr.write_record(CSV_HEADER.split(','))
                .map_err(|e| Error::Parse(e.to_string()))?;
        }
        for r in &self.records {
            wtr.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn sidecar(&self) -> HistorySidecar {
        HistorySidecar {
            meta: self.meta.clone(),
            initial: self.initial.clone(),
            converged: self.converged,
            converged_at: self.converged_at,
            pairing1: self.records.iter().map(|r| r.pairing1).collect(),
            pairing2: self.records.iter().map(|r| r.pairing2).collect(),
        }
    }

    /// Rebuilds a history from its CSV and sidecar.
    pub fn from_parts(csv_data: impl Read, sidecar: HistorySidecar) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(csv_data);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Parse(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.join(",") != CSV_HEADER {
            return Err(Error::Parse(format!("unexpected CSV header `{}`", header.join(","))));
        }
        let mut records = Vec::new();
        for row in rdr.deserialize() {
            let r: IterationRecord = row.map_err(|e| Error::Parse(e.to_string()))?;
            records.push(r);
        }
        if sidecar.pairing1.len() != records.len() || sidecar.pairing2.len() != records.len() {
            return Err(Error::Parse("pairing sequences do not match the CSV rows".into()));
        }
        for (i, r) in records.iter_mut().enumerate() {
            if r.n != i + 1 {
                return Err(Error::Parse(format!("row {i} has n = {}, expected {}", r.n, i + 1)));
            }
            r.pairing1 = sidecar.pairing1[i];
            r.pairing2 = sidecar.pairing2[i];
        }
        Ok(Self {
            meta: sidecar.meta,
            initial: sidecar.initial,
            records,
            converged: sidecar.converged,
            converged_at: sidecar.converged_at,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertResult {
    pub name: String,
    pub passed: bool,
    /// First iteration index at which an inequality failed.
    pub first_violation: Option<usize>,
    /// Largest amount by which any inequality exceeded its bound (≤ 0 when
    /// everything holds).
    pub worst_excess: f64,
    pub checked: usize,
    pub detail: String,
}

struct Verdict {
    first: Option<usize>,
    worst: f64,
    checked: usize,
}

impl Verdict {
    fn new() -> Self {
        Self {
            first: None,
            worst: f64::NEG_INFINITY,
            checked: 0,
        }
    }

    /// Records `lhs ≤ rhs + slack` at index `n`.
    fn le(&mut self, n: usize, lhs: f64, rhs: f64, slack: f64) {
        let excess = lhs - rhs - slack;
        self.checked += 1;
        self.worst = self.worst.max(excess);
        if (excess > 0.0 || excess.is_nan()) && self.first.is_none() {
            self.first = Some(n);
        }
    }

    fn finish(self, name: &str, detail: String) -> CertResult {
        CertResult {
            name: name.to_string(),
            passed: self.first.is_none(),
            first_violation: self.first,
            worst_excess: if self.checked == 0 { 0.0 } else { self.worst },
            checked: self.checked,
            detail,
        }
    }
}

/// Checks `‖μⁿ⁺¹−μ‖ ≤ ‖λⁿ−λ‖ ≤ ‖μⁿ−μ‖` for every recorded `n` (including
/// `n = 0`), and the telescoping bound
/// `0 ≤ Σₙ (‖μⁿ−μ‖² − ‖μⁿ⁺¹−μ‖²) ≤ ‖μ⁰−μ‖²`, with the history's slack.
pub fn contraction_certificate(hist: &ConvergenceHistory) -> Result<CertResult> {
    if !hist.has_reference() || hist.records.iter().any(|r| r.lambda_err.is_none()) || hist.initial.lambda_err.is_none() {
        return Err(Error::MissingReference);
    }
    let slack = hist.meta.slack;
    let mut mus = vec![hist.initial.mu_err.unwrap_or_default()];
    let mut lams = vec![hist.initial.lambda_err.unwrap_or_default()];
    for r in &hist.records {
        mus.push(r.mu_err.unwrap_or_default());
        lams.push(r.lambda_err.unwrap_or_default());
    }
    let mut v = Verdict::new();
    for n in 0..mus.len() {
        v.le(n, lams[n], mus[n], slack);
        if n + 1 < mus.len() {
            v.le(n, mus[n + 1], lams[n], slack);
        }
    }
    let mut telescoped = 0.0;
    for n in 0..mus.len().saturating_sub(1) {
        telescoped += mus[n] * mus[n] - mus[n + 1] * mus[n + 1];
        v.le(n, 0.0, telescoped, slack * mus[0].max(slack));
        v.le(n, telescoped, mus[0] * mus[0], slack * mus[0].max(slack));
    }
    let detail = format!(
        "‖μ⁰−μ‖ = {:.3e}, final ‖μᴺ−μ‖ = {:.3e}, slack {:.1e}",
        mus[0],
        mus[mus.len() - 1],
        slack
    );
    Ok(v.finish("contraction", detail))
}

/// Checks that the pairings `(𝒮_iηⁿ_i − 𝒮_iη, ηⁿ_i − η)` are `≥ −slack` for
/// every `n` and `≤ final_tol` at the last iterate.
pub fn monotone_gap_certificate(hist: &ConvergenceHistory, final_tol: f64) -> Result<CertResult> {
    let slack = hist.meta.slack;
    let mut v = Verdict::new();
    let p20 = hist.initial.pairing2.ok_or(Error::MissingReference)?;
    v.le(0, -p20, 0.0, slack);
    for r in &hist.records {
        let (p1, p2) = r.pairing1.zip(r.pairing2).ok_or(Error::MissingReference)?;
        v.le(r.n, -p1, 0.0, slack);
        v.le(r.n, -p2, 0.0, slack);
    }
    let (last1, last2) = match hist.records.last() {
        Some(r) => (r.pairing1.unwrap_or_default(), r.pairing2.unwrap_or_default()),
        None => (0.0, p20),
    };
    let n_last = hist.iterations();
    v.le(n_last, last1, final_tol, 0.0);
    v.le(n_last, last2, final_tol, 0.0);
    let detail = format!("final pairings ({last1:.3e}, {last2:.3e}) vs {final_tol:.1e}, slack {slack:.1e}");
    Ok(v.finish("monotone_pairing", detail))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDecaySummary {
    pub iterations: usize,
    pub converged: bool,
    pub final_gap: Option<f64>,
    pub final_err_eta: [Option<f64>; 2],
    pub final_err_u: [Option<f64>; 2],
    /// `(k, n)`: first iterate whose gap is below `10^{-k}` times the first gap.
    pub decades: Vec<(usize, usize)>,
    /// Whether `err_u1 + err_u2` never increased from one iterate to the next.
    pub err_u_monotone: Option<bool>,
}

pub fn error_decay_summary(hist: &ConvergenceHistory) -> ErrorDecaySummary {
    let last = hist.records.last();
    let mut decades = Vec::new();
    if let Some(first) = hist.records.first() {
        let g0 = first.gap;
        let mut k = 1;
        for r in &hist.records {
            while g0 > 0.0 && r.gap <= g0 * 10f64.powi(-(k as i32)) {
                decades.push((k, r.n));
                k += 1;
            }
        }
    }
    let totals: Option<Vec<f64>> = hist
        .records
        .iter()
        .map(|r| Some(r.err_u1? + r.err_u2?))
        .collect();
    let err_u_monotone = totals.map(|t| t.windows(2).all(|w| w[1] <= w[0]));
    ErrorDecaySummary {
        iterations: hist.iterations(),
        converged: hist.converged,
        final_gap: last.map(|r| r.gap),
        final_err_eta: [last.and_then(|r| r.err_eta1), last.and_then(|r| r.err_eta2)],
        final_err_u: [last.and_then(|r| r.err_u1), last.and_then(|r| r.err_u2)],
        decades,
        err_u_monotone,
    }
}

impl ErrorDecaySummary {
    /// Plain-text table.
    pub fn table(&self) -> String {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3e}"));
        let mut out = String::new();
        out.push_str(&format!(
            "iterations {}  converged {}  final gap {}\n",
            self.iterations,
            self.converged,
            f(self.final_gap)
        ));
        out.push_str(&format!(
            "err_eta1 {}  err_eta2 {}  err_u1 {}  err_u2 {}\n",
            f(self.final_err_eta[0]),
            f(self.final_err_eta[1]),
            f(self.final_err_u[0]),
            f(self.final_err_u[1])
        ));
        out.push_str("decade  iteration\n");
        for (k, n) in &self.decades {
            out.push_str(&format!("{k:>6}  {n:>9}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> RunMetadata {
        RunMetadata {
            preset: "linear".into(),
            p: 2.0,
            r: 2.0,
            s: 1.0,
            h: 0.1,
            dim: 1,
            n_interface: 1,
            seed: 0,
            newton_tol: 1e-10,
            tol_gap: 1e-8,
            max_outer: 10,
            slack: 1e-9,
        }
    }

    fn record(n: usize, mu: f64, lam: f64) -> IterationRecord {
        IterationRecord {
            n,
            gap: mu,
            err_eta1: Some(mu),
            err_eta2: Some(mu),
            err_u1: Some(mu),
            err_u2: Some(mu),
            mu_err: Some(mu),
            lambda_err: Some(lam),
            newton1: 1,
            newton2: 1,
            pairing1: Some((lam * lam - mu * mu).max(0.0)),
            pairing2: Some(mu * mu - lam * lam),
        }
    }

    fn history(records: Vec<IterationRecord>, mu0: f64, lam0: f64) -> ConvergenceHistory {
        ConvergenceHistory {
            meta: meta(),
            initial: InitialRecord {
                flux_residual: 1.0,
                mu_err: Some(mu0),
                lambda_err: Some(lam0),
                pairing2: Some(mu0 * mu0 - lam0 * lam0),
            },
            records,
            converged: true,
            converged_at: Some(3),
        }
    }

    #[test]
    fn fixed_point_history_is_all_equalities() {
        let h = history(vec![record(1, 0.0, 0.0), record(2, 0.0, 0.0)], 0.0, 0.0);
        let c = contraction_certificate(&h).unwrap();
        assert!(c.passed);
        assert!(c.worst_excess <= 0.0);
        let m = monotone_gap_certificate(&h, 1e-6).unwrap();
        assert!(m.passed);
    }

    #[test]
    fn contraction_violation_is_located() {
        let h = history(vec![record(1, 0.5, 0.4), record(2, 0.45, 0.3)], 1.0, 0.6);
        let c = contraction_certificate(&h).unwrap();
        assert!(!c.passed);
        // μ² = 0.45 > λ¹ = 0.4
        assert_eq!(c.first_violation, Some(1));
    }

    #[test]
    fn missing_reference_is_an_error() {
        let mut h = history(vec![record(1, 0.5, 0.4)], 1.0, 0.6);
        h.records[0].mu_err = None;
        assert!(matches!(contraction_certificate(&h), Err(Error::MissingReference)));
    }

    #[test]
    fn csv_round_trip_preserves_verdicts() {
        let h = history(vec![record(1, 0.5, 0.4), record(2, 0.3, 0.2), record(3, 1e-9 / 3.0, 0.0)], 1.0, 0.6);
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        let json = serde_json::to_string(&h.sidecar()).unwrap();
        let back = ConvergenceHistory::from_parts(&buf[..], serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, h);
        assert_eq!(contraction_certificate(&back).unwrap(), contraction_certificate(&h).unwrap());
    }

    #[test]
    fn empty_history_csv_has_header() {
        let h = history(vec![], 0.0, 0.0);
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), CSV_HEADER);
        let back = ConvergenceHistory::from_parts(&b"n,gap,err_eta1,err_eta2,err_u1,err_u2,mu_err,lambda_err,newton1,newton2\n"[..], h.sidecar()).unwrap();
        assert!(back.records.is_empty());
    }

    #[test]
    fn decay_summary_counts_decades() {
        let recs = vec![record(1, 1.0, 0.5), record(2, 0.05, 0.01), record(3, 0.002, 0.001)];
        let s = error_decay_summary(&history(recs, 2.0, 1.0));
        assert_eq!(s.decades, vec![(1, 2), (2, 3)]);
        assert_eq!(s.err_u_monotone, Some(true));
        assert!(s.table().contains("decade"));
    }
}
