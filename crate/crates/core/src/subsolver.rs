//! Damped Newton and the subdomain solves built on it: the Dirichlet solution
//! operator `F_i` and the Robin solve that realizes `(sJ + S_i)⁻¹`.

use nalgebra_sparse::CscMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Divergence, Error, Result};
use crate::fem::{interface_entries, jacobian_builder, residual_raw, InterfaceMass, Source};
use crate::linalg::{norm2, solve};
use crate::mesh::{Decomposition, DualTrace, FeFunction, Mesh, Side, TraceVector};
use crate::pstructure::PStructure;
use crate::quadrature::Quadrature;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonConfig {
    /// Absolute tolerance on the Euclidean norm of the constrained residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Backtracking factor β ∈ (0, 1).
    pub damping: f64,
    pub max_backtracks: usize,
    /// Gradient regularization used in Jacobians only.
    pub eps_reg: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
            damping: 0.5,
            max_backtracks: 60,
            eps_reg: 1e-10,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid("newton tol must be positive"));
        }
        if self.max_iter < 1 {
            return Err(Error::invalid("newton max_iter must be at least 1"));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::invalid("newton damping must lie in (0, 1)"));
        }
        if !(self.eps_reg >= 0.0) {
            return Err(Error::invalid("eps_reg must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NewtonReport {
    pub iterations: usize,
    /// Residual norm at the start and after every accepted step.
    pub residual_history: Vec<f64>,
    /// Backtracking steps taken for each accepted step.
    pub backtracks: Vec<usize>,
    pub final_residual: f64,
}

/// A square nonlinear system whose constrained rows are already folded in:
/// the residual vanishes there and the Jacobian has identity rows.
pub trait NonlinearSystem {
    fn residual(&self, u: &[f64]) -> Vec<f64>;
    fn jacobian(&self, u: &[f64]) -> CscMatrix<f64>;
}

/// Damped Newton. A step `δ` is accepted with the factor `t = β^k` for the
/// smallest `k ≥ 0` such that `‖r(u + tδ)‖ ≤ (1 − t/2)‖r(u)‖`.
pub fn newton_iterate(
    sys: &impl NonlinearSystem,
    cfg: &NewtonConfig,
    start: Vec<f64>,
) -> Result<(Vec<f64>, NewtonReport)> {
    cfg.validate()?;
    let mut u = start;
    let mut r = sys.residual(&u);
    check_len(u.len(), r.len())?;
    let mut norm = norm2(&r);
    let mut report = NewtonReport {
        residual_history: vec![norm],
        ..Default::default()
    };
    let diverged = |reason: &str, report: &NewtonReport| {
        Error::Divergence(Box::new(Divergence {
            reason: reason.to_string(),
            iterations: report.iterations,
            residual_history: report.residual_history.clone(),
        }))
    };
    if !norm.is_finite() {
        return Err(diverged("non-finite residual", &report));
    }
    while norm > cfg.tol {
        if report.iterations == cfg.max_iter {
            return Err(diverged("max_iter exceeded", &report));
        }
        let jac = sys.jacobian(&u);
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = solve(&jac, &rhs)?;
        let mut t = 1.0;
        let mut accepted = None;
        for k in 0..=cfg.max_backtracks {
            let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + t * d).collect();
            let rt = sys.residual(&trial);
            let nt = norm2(&rt);
            if nt.is_finite() && nt < norm && nt <= (1.0 - 0.5 * t) * norm {
                accepted = Some((trial, rt, nt, k));
                break;
            }
            t *= cfg.damping;
        }
        let Some((trial, rt, nt, k)) = accepted else {
            return Err(diverged("backtracking exhausted", &report));
        };
        u = trial;
        r = rt;
        norm = nt;
        report.iterations += 1;
        report.residual_history.push(norm);
        report.backtracks.push(k);
    }
    report.final_residual = norm;
    Ok((u, report))
}

/// Boundary condition imposed on the interface of a subdomain solve.
#[derive(Debug, Clone)]
pub enum BoundaryMode {
    /// Interface values pinned to `η`.
    Dirichlet(TraceVector),
    /// `a_i(u, v) + s(T u, T v)_Γ = (f, v) + ⟨χ, T v⟩`.
    Robin { s: f64, chi: DualTrace },
    /// `a_i(u, v) = (f, v) + ⟨χ, T v⟩`.
    Neumann(DualTrace),
}

/// One nonlinear subdomain problem.
#[derive(Debug, Clone)]
pub struct SubdomainProblem<'a> {
    pub dec: &'a Decomposition,
    pub side: Side,
    pub ps: &'a PStructure,
    pub source: &'a Source,
    pub quad: &'a Quadrature,
    pub mass: &'a InterfaceMass,
    pub mode: BoundaryMode,
}

/// Result of a subdomain solve. `flux` holds the interface entries of the
/// unconstrained residual `a_i(u, R_i μ_k) − (f_i, R_i μ_k)`, i.e. the
/// discrete `S_i(T_i u)`.
#[derive(Debug, Clone)]
pub struct SubdomainSolution {
    pub u: FeFunction,
    pub flux: DualTrace,
    pub report: NewtonReport,
}

impl SubdomainSolution {
    pub fn trace(&self, dec: &Decomposition, side: Side) -> TraceVector {
        crate::mesh::trace(dec, side, &self.u).expect("solution lives on its subdomain")
    }
}

struct SubdomainSystem<'a> {
    mesh: &'a Mesh,
    ps: &'a PStructure,
    source: &'a Source,
    quad: &'a Quadrature,
    eps_reg: f64,
    constrained: Vec<bool>,
    interface: &'a [usize],
    /// Robin weight, Robin/Neumann datum.
    natural: Option<(f64, &'a InterfaceMass, &'a DualTrace)>,
}

impl NonlinearSystem for SubdomainSystem<'_> {
    fn residual(&self, u: &[f64]) -> Vec<f64> {
        let mut r = residual_raw(self.ps, self.mesh, u, self.source, self.quad);
        for (ri, &c) in r.iter_mut().zip(&self.constrained) {
            if c {
                *ri = 0.0;
            }
        }
        if let Some((s, mass, chi)) = self.natural {
            let m = mass.matrix();
            for (k, &lk) in self.interface.iter().enumerate() {
                let mut acc = -chi.as_slice()[k];
                if s != 0.0 {
                    for (j, &lj) in self.interface.iter().enumerate() {
                        acc += s * m[(k, j)] * u[lj];
                    }
                }
                r[lk] += acc;
            }
        }
        r
    }

    fn jacobian(&self, u: &[f64]) -> CscMatrix<f64> {
        let mut b = jacobian_builder(self.ps, self.mesh, u, self.quad, self.eps_reg, &self.constrained);
        if let Some((s, mass, _)) = self.natural {
            if s != 0.0 {
                let m = mass.matrix();
                for (k, &lk) in self.interface.iter().enumerate() {
                    for (j, &lj) in self.interface.iter().enumerate() {
                        b.add(lk, lj, s * m[(k, j)]);
                    }
                }
            }
        }
        b.build()
    }
}

fn solve_subdomain(
    prob: &SubdomainProblem<'_>,
    cfg: &NewtonConfig,
    warm_start: Option<&FeFunction>,
) -> Result<SubdomainSolution> {
    cfg.validate()?;
    let dec = prob.dec;
    let sub = dec.side(prob.side);
    let mesh = sub.mesh();
    let interface = sub.interface_vertices();
    let n_if = dec.n_interface();
    let mut constrained: Vec<bool> = (0..mesh.n_vertices()).map(|v| mesh.is_dirichlet(v)).collect();
    let mut pinned = vec![0.0; mesh.n_vertices()];
    let natural = match &prob.mode {
        BoundaryMode::Dirichlet(eta) => {
            check_len(n_if, eta.len())?;
            for (&l, &v) in interface.iter().zip(eta.as_slice()) {
                constrained[l] = true;
                pinned[l] = v;
            }
            None
        }
        BoundaryMode::Robin { s, chi } => {
            check_len(n_if, chi.len())?;
            Some((*s, prob.mass, chi))
        }
        BoundaryMode::Neumann(chi) => {
            check_len(n_if, chi.len())?;
            Some((0.0, prob.mass, chi))
        }
    };
    let sys = SubdomainSystem {
        mesh,
        ps: prob.ps,
        source: prob.source,
        quad: prob.quad,
        eps_reg: cfg.eps_reg,
        constrained,
        interface,
        natural,
    };
    let apply_constraints = |u: &mut Vec<f64>| {
        for (i, (&c, &p)) in sys.constrained.iter().zip(&pinned).enumerate() {
            if c {
                u[i] = p;
            }
        }
    };

    let start = match warm_start {
        Some(w) => {
            w.check_on(mesh)?;
            let mut u = w.values().to_vec();
            apply_constraints(&mut u);
            u
        }
        None => {
            // Linear surrogate (Laplacian plus identity reaction) with the
            // same constraints: nondegenerate gradients for the first Newton
            // step.
            let linear = PStructure::linear(1.0)?;
            let surrogate = SubdomainSystem { ps: &linear, ..sys.clone_shallow() };
            let mut u0 = vec![0.0; mesh.n_vertices()];
            apply_constraints(&mut u0);
            let r0 = surrogate.residual(&u0);
            let rhs: Vec<f64> = r0.iter().map(|v| -v).collect();
            let du = solve(&surrogate.jacobian(&u0), &rhs)?;
            let mut u: Vec<f64> = u0.iter().zip(&du).map(|(a, b)| a + b).collect();
            apply_constraints(&mut u);
            u
        }
    };

    let (values, report) = newton_iterate(&sys, cfg, start)?;
    let raw = residual_raw(prob.ps, mesh, &values, prob.source, prob.quad);
    let flux = interface_entries(dec, prob.side, &raw);
    Ok(SubdomainSolution {
        u: FeFunction::from_values(mesh, values)?,
        flux,
        report,
    })
}

impl<'a> SubdomainSystem<'a> {
    fn clone_shallow(&self) -> SubdomainSystem<'a> {
        SubdomainSystem {
            mesh: self.mesh,
            ps: self.ps,
            source: self.source,
            quad: self.quad,
            eps_reg: self.eps_reg,
            constrained: self.constrained.clone(),
            interface: self.interface,
            natural: self.natural,
        }
    }
}

/// Discrete `F_i η`: interface values pinned to `η`, Dirichlet values zero,
/// interior equations solved by Newton.
pub fn solve_dirichlet(
    prob: &SubdomainProblem<'_>,
    cfg: &NewtonConfig,
    warm_start: Option<&FeFunction>,
) -> Result<SubdomainSolution> {
    if !matches!(prob.mode, BoundaryMode::Dirichlet(_)) {
        return Err(Error::invalid("solve_dirichlet needs a Dirichlet boundary mode"));
    }
    solve_subdomain(prob, cfg, warm_start)
}

/// Robin solve: find `u` with `a_i(u, v) + s(T_i u, T_i v)_Γ = (f_i, v) +
/// ⟨χ, T_i v⟩` for all `v`. The trace of the result is `(sJ + S_i)⁻¹ χ`.
pub fn solve_robin(
    prob: &SubdomainProblem<'_>,
    cfg: &NewtonConfig,
    warm_start: Option<&FeFunction>,
) -> Result<SubdomainSolution> {
    match &prob.mode {
        BoundaryMode::Robin { s, .. } if *s > 0.0 && s.is_finite() => solve_subdomain(prob, cfg, warm_start),
        BoundaryMode::Robin { s, .. } => Err(Error::invalid(format!("Robin parameter s = {s} must be positive"))),
        _ => Err(Error::invalid("solve_robin needs a Robin boundary mode")),
    }
}

/// Natural-boundary solve `a_i(u, v) = (f_i, v) + ⟨χ, T_i v⟩`. With `χ = 0`
/// the trace solves `S_i η = 0`.
pub fn solve_neumann(
    prob: &SubdomainProblem<'_>,
    cfg: &NewtonConfig,
    warm_start: Option<&FeFunction>,
) -> Result<SubdomainSolution> {
    if !matches!(prob.mode, BoundaryMode::Neumann(_)) {
        return Err(Error::invalid("solve_neumann needs a Neumann boundary mode"));
    }
    solve_subdomain(prob, cfg, warm_start)
}
