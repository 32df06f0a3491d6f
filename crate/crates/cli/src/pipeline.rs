//! The run pipeline: mesh → decomposition → monolithic reference →
//! interface iteration → certificates → output files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use robin_dd::diagnostics::{
    contraction_certificate, error_decay_summary, monotone_gap_certificate, ErrorDecaySummary, HistorySidecar,
};
use robin_dd::fem::{error_w1p, norm_w1p};
use robin_dd::interface::run_with_state;
use robin_dd::mesh::glue;
use robin_dd::monolithic::{check_global, check_transmission, solve_global, EquivalenceReport};
use robin_dd::{CertResult, ConvergenceHistory, Reference};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::{exit, solver, CliError};

pub const SUMMARY_SCHEMA: &str = "robin-dd-summary/1";
pub const HISTORY_CSV: &str = "history.csv";
pub const HISTORY_JSON: &str = "history.json";
pub const SUMMARY_JSON: &str = "summary.json";
pub const MESH_DUMP: &str = "mesh.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonolithicSummary {
    pub newton_iterations: usize,
    pub final_residual: f64,
    /// `W^{1,p}` error against the manufactured solution, when known.
    pub discretization_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionSummary {
    /// Defects of the restricted monolithic solution.
    pub forward: EquivalenceReport,
    /// Defects of the final subdomain pair and the residual of its gluing.
    pub glued: Option<EquivalenceReport>,
    /// `glued_residual / tol_gap`.
    pub glued_constant: Option<f64>,
    /// `‖glue(u₁, u₂) − u_global‖_{W^{1,p}}`.
    pub glued_error_w1p: Option<f64>,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: String,
    pub config: Config,
    pub converged: bool,
    pub iterations: usize,
    pub final_gap: Option<f64>,
    pub monolithic: MonolithicSummary,
    pub transmission: TransmissionSummary,
    pub certificates: Vec<CertResult>,
    pub error_decay: ErrorDecaySummary,
    pub history: HistorySidecar,
    pub exit_code: i32,
}

pub struct Outcome {
    pub summary: Summary,
    pub dir: PathBuf,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        self.summary.exit_code
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io(path))
}

/// Certificates every run reports, in a fixed order.
pub fn certificates(hist: &ConvergenceHistory, pairing_tol: f64) -> Result<Vec<CertResult>, CliError> {
    Ok(vec![
        contraction_certificate(hist).map_err(solver("contraction certificate"))?,
        monotone_gap_certificate(hist, pairing_tol).map_err(solver("monotone pairing certificate"))?,
    ])
}

fn transmission_cert(forward: &EquivalenceReport, tol: f64) -> CertResult {
    let excess = forward.max_defect() - tol;
    CertResult {
        name: "transmission".into(),
        passed: excess <= 0.0,
        first_violation: None,
        worst_excess: excess,
        checked: 5,
        detail: format!("max defect of the restricted monolithic solution {:.3e} vs {tol:.1e}", forward.max_defect()),
    }
}

/// Runs one experiment and writes `history.csv`, `summary.json` and
/// `mesh.txt` into `dir`.
pub fn run_experiment(cfg: &Config, dir: &Path) -> Result<Outcome, CliError> {
    let built = cfg.build()?;
    let problem = &built.problem;
    let newton = &built.newton;
    fs::create_dir_all(dir).map_err(io(dir))?;

    let (u_global, mono) = solve_global(
        problem.decomposition().global(),
        problem.pstructure(),
        problem.source(),
        problem.quadrature(),
        newton,
    )
    .map_err(solver("monolithic solve"))?;
    let discretization_error = match &built.manufactured {
        Some(m) => Some(
            error_w1p(
                problem.decomposition().global(),
                &u_global,
                problem.pstructure(),
                problem.quadrature(),
                m.exact,
                m.exact_grad,
            )
            .map_err(solver("discretization error"))?,
        ),
        None => None,
    };
    let reference = Reference::from_global(problem, &u_global, newton).map_err(solver("reference traces"))?;
    let (hist, state) =
        run_with_state(problem, &built.options, newton, Some(&reference)).map_err(solver("interface iteration"))?;

    let mut csv = Vec::new();
    hist.write_csv(&mut csv).map_err(solver("writing history"))?;
    write_file(&dir.join(HISTORY_CSV), &csv)?;
    let sidecar = serde_json::to_vec_pretty(&hist.sidecar()).map_err(|e| CliError::Input {
        what: "history sidecar".into(),
        message: e.to_string(),
    })?;
    write_file(&dir.join(HISTORY_JSON), &sidecar)?;
    let mut dump = Vec::new();
    problem.decomposition().global().write_dump(&mut dump).map_err(io(dir))?;
    write_file(&dir.join(MESH_DUMP), &dump)?;

    let slack = hist.meta.slack;
    let forward = check_global(problem, &u_global).map_err(solver("transmission check"))?;
    let mut certs = certificates(&hist, cfg.method.pairing_tol)?;
    certs.push(transmission_cert(&forward, slack));

    let (glued, glued_error) = match &state {
        Some(st) => {
            let one = st.one.as_ref().expect("state after at least one sweep");
            let rep = check_transmission(problem, &one.u, &st.two.u).map_err(solver("transmission check"))?;
            let dec = problem.decomposition();
            let g = glue(dec, &one.u, &st.two.u).map_err(solver("gluing"))?;
            let diff = g.minus(&u_global).map_err(solver("gluing"))?;
            let err = norm_w1p(dec.global(), &diff, problem.pstructure()).map_err(solver("gluing"))?;
            (Some(rep), Some(err))
        }
        None => (None, None),
    };

    let exit_code = if !hist.converged {
        exit::NOT_CONVERGED
    } else if certs.iter().any(|c| !c.passed) {
        exit::CERTIFICATE
    } else {
        exit::OK
    };
    let summary = Summary {
        schema: SUMMARY_SCHEMA.into(),
        config: cfg.clone(),
        converged: hist.converged,
        iterations: hist.iterations(),
        final_gap: hist.final_gap(),
        monolithic: MonolithicSummary {
            newton_iterations: mono.iterations,
            final_residual: mono.final_residual,
            discretization_error,
        },
        transmission: TransmissionSummary {
            forward,
            glued_constant: glued.map(|g| g.glued_residual / cfg.method.tol_gap),
            glued,
            glued_error_w1p: glued_error,
        },
        certificates: certs,
        error_decay: error_decay_summary(&hist),
        history: hist.sidecar(),
        exit_code,
    };
    let json = serde_json::to_vec_pretty(&summary).map_err(|e| CliError::Input {
        what: "summary".into(),
        message: e.to_string(),
    })?;
    write_file(&dir.join(SUMMARY_JSON), &json)?;
    Ok(Outcome {
        summary,
        dir: dir.to_path_buf(),
    })
}

/// Human-readable report of a finished run.
pub fn report(out: &Outcome, w: &mut impl Write) -> std::io::Result<()> {
    let s = &out.summary;
    writeln!(
        w,
        "run: {} after {} iterations, final gap {}",
        if s.converged { "converged" } else { "NOT converged" },
        s.iterations,
        s.final_gap.map_or("-".into(), |g| format!("{g:.3e}"))
    )?;
    if let Some(e) = s.monolithic.discretization_error {
        writeln!(w, "discretization error (W1p): {e:.3e}")?;
    }
    for c in &s.certificates {
        writeln!(w, "{}: {} ({})", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail)?;
    }
    if let (Some(g), Some(c)) = (s.transmission.glued, s.transmission.glued_constant) {
        writeln!(w, "glued residual {:.3e} = {c:.3e} x tol_gap", g.glued_residual)?;
    }
    write!(w, "{}", s.error_decay.table())?;
    writeln!(w, "outputs in {}", out.dir.display())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepAxis {
    S,
    P,
    H,
}

impl SweepAxis {
    fn name(self) -> &'static str {
        match self {
            SweepAxis::S => "s",
            SweepAxis::P => "p",
            SweepAxis::H => "h",
        }
    }

    fn apply(self, cfg: &mut Config, value: &str) -> Result<(), CliError> {
        let bad = |e: &dyn std::fmt::Display| CliError::Config(format!("sweep value `{value}` for {}: {e}", self.name()));
        match self {
            SweepAxis::S => cfg.method.s = value.parse().map_err(|e| bad(&e))?,
            SweepAxis::P => cfg.problem.p = value.parse().map_err(|e| bad(&e))?,
            SweepAxis::H => {
                cfg.mesh.n = value.parse().map_err(|e| bad(&e))?;
                cfg.mesh.ny = None;
            }
        }
        cfg.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: String,
    pub h: Option<f64>,
    pub exit_code: i32,
    pub converged: bool,
    pub iterations: Option<usize>,
    pub final_gap: Option<f64>,
    pub err_u1: Option<f64>,
    pub err_u2: Option<f64>,
    pub error: Option<String>,
}

/// Runs one experiment per value in parallel, each in `<dir>/<axis>_<value>`,
/// and writes `<dir>/sweep_<axis>.csv`. Returns the rows and the worst exit
/// code.
pub fn run_sweep(cfg: &Config, dir: &Path, axis: SweepAxis, values: &[String]) -> Result<(Vec<SweepRow>, i32), CliError> {
    if values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .map(|v| {
            let mut c = cfg.clone();
            axis.apply(&mut c, v)?;
            Ok((v.clone(), c))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    fs::create_dir_all(dir).map_err(io(dir))?;
    let rows: Vec<SweepRow> = configs
        .par_iter()
        .map(|(v, c)| {
            let sub = dir.join(format!("{}_{v}", axis.name()));
            match run_experiment(c, &sub) {
                Ok(out) => {
                    let s = &out.summary;
                    SweepRow {
                        value: v.clone(),
                        h: Some(s.history.meta.h),
                        exit_code: s.exit_code,
                        converged: s.converged,
                        iterations: Some(s.iterations),
                        final_gap: s.final_gap,
                        err_u1: s.error_decay.final_err_u[0],
                        err_u2: s.error_decay.final_err_u[1],
                        error: None,
                    }
                }
                Err(e) => SweepRow {
                    value: v.clone(),
                    h: None,
                    exit_code: e.exit_code(),
                    converged: false,
                    iterations: None,
                    final_gap: None,
                    err_u1: None,
                    err_u2: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let path = dir.join(format!("sweep_{}.csv", axis.name()));
    let mut wtr = csv::Writer::from_path(&path).map_err(|e| CliError::Input {
        what: path.display().to_string(),
        message: e.to_string(),
    })?;
    for r in &rows {
        wtr.serialize(r).map_err(|e| CliError::Input {
            what: path.display().to_string(),
            message: e.to_string(),
        })?;
    }
    wtr.flush().map_err(io(&path))?;
    let worst = rows.iter().map(|r| r.exit_code).max().unwrap_or(exit::OK);
    Ok((rows, worst))
}

pub struct CertifyOutcome {
    pub results: Vec<CertResult>,
    /// Whether the recomputed verdicts equal the ones stored in the summary.
    pub reproduced: bool,
}

/// Re-derives the history certificates from `history.csv` and the sidecar
/// stored in `summary.json`.
pub fn certify_files(csv_path: &Path, summary_path: &Path) -> Result<CertifyOutcome, CliError> {
    let text = fs::read_to_string(summary_path).map_err(io(summary_path))?;
    let summary: Summary = serde_json::from_str(&text).map_err(|e| CliError::Input {
        what: summary_path.display().to_string(),
        message: e.to_string(),
    })?;
    let file = fs::File::open(csv_path).map_err(io(csv_path))?;
    let hist = ConvergenceHistory::from_parts(file, summary.history.clone()).map_err(|e| CliError::Input {
        what: csv_path.display().to_string(),
        message: e.to_string(),
    })?;
    let results = certificates(&hist, summary.config.method.pairing_tol)?;
    let reproduced = results
        .iter()
        .all(|r| summary.certificates.iter().any(|s| s == r));
    Ok(CertifyOutcome { results, reproduced })
}
