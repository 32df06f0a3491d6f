//! Monolithic solve on the undecomposed mesh and the transmission check that
//! links it to the pair of subdomain problems.

use nalgebra_sparse::CscMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};
use crate::fem::{interface_entries, jacobian_builder, residual_raw, Source};
use crate::interface::DecomposedProblem;
use crate::linalg::{max_abs, solve};
use crate::mesh::{glue, restrict, trace, FeFunction, Mesh, Side};
use crate::pstructure::PStructure;
use crate::quadrature::Quadrature;
use crate::subsolver::{newton_iterate, NewtonConfig, NewtonReport, NonlinearSystem};

struct GlobalSystem<'a> {
    mesh: &'a Mesh,
    ps: &'a PStructure,
    source: &'a Source,
    quad: &'a Quadrature,
    eps_reg: f64,
    constrained: Vec<bool>,
}

impl NonlinearSystem for GlobalSystem<'_> {
    fn residual(&self, u: &[f64]) -> Vec<f64> {
        let mut r = residual_raw(self.ps, self.mesh, u, self.source, self.quad);
        for (ri, &c) in r.iter_mut().zip(&self.constrained) {
            if c {
                *ri = 0.0;
            }
        }
        r
    }

    fn jacobian(&self, u: &[f64]) -> CscMatrix<f64> {
        jacobian_builder(self.ps, self.mesh, u, self.quad, self.eps_reg, &self.constrained).build()
    }
}

/// Solves `-div α(∇u) + g(u) = f` with zero Dirichlet data on `mesh` by damped
/// Newton, cold-started from the linear surrogate.
pub fn solve_global(
    mesh: &Mesh,
    ps: &PStructure,
    source: &Source,
    quad: &Quadrature,
    cfg: &NewtonConfig,
) -> Result<(FeFunction, NewtonReport)> {
    cfg.validate()?;
    ps.check_exponents(mesh.dim())?;
    let constrained: Vec<bool> = (0..mesh.n_vertices()).map(|v| mesh.is_dirichlet(v)).collect();
    let linear = PStructure::linear(1.0)?;
    let surrogate = GlobalSystem {
        mesh,
        ps: &linear,
        source,
        quad,
        eps_reg: cfg.eps_reg,
        constrained: constrained.clone(),
    };
    let zero = vec![0.0; mesh.n_vertices()];
    let rhs: Vec<f64> = surrogate.residual(&zero).iter().map(|v| -v).collect();
    let start = solve(&surrogate.jacobian(&zero), &rhs)?;
    let sys = GlobalSystem {
        mesh,
        ps,
        source,
        quad,
        eps_reg: cfg.eps_reg,
        constrained,
    };
    let (values, report) = newton_iterate(&sys, cfg, start).map_err(|e| e.at("monolithic solve"))?;
    Ok((FeFunction::from_values(mesh, values)?, report))
}

/// Defects of the subdomain transmission conditions for a given pair of
/// subdomain functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    /// Max-abs residual over interior (non-interface, non-Dirichlet) rows.
    pub interior_residual: [f64; 2],
    /// Max-abs difference of the two traces.
    pub trace_mismatch: f64,
    /// Max-abs entry of `S₁η₁ + S₂η₂`.
    pub flux_balance: f64,
    /// Max-abs masked residual of the glued function on the global mesh.
    pub glued_residual: f64,
}

impl EquivalenceReport {
    pub fn max_defect(&self) -> f64 {
        self.interior_residual[0]
            .max(self.interior_residual[1])
            .max(self.trace_mismatch)
            .max(self.flux_balance)
            .max(self.glued_residual)
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.max_defect() <= tol
    }
}

/// Evaluates the transmission conditions for `(u₁, u₂)` and the global
/// residual of their gluing. For the restrictions of a monolithic solution
/// every defect is at the Newton tolerance, and conversely a pair with
/// vanishing defects glues to a global solution.
pub fn check_transmission(problem: &DecomposedProblem, u1: &FeFunction, u2: &FeFunction) -> Result<EquivalenceReport> {
    let dec = problem.decomposition();
    let ps = problem.pstructure();
    let src = problem.source();
    let quad = problem.quadrature();
    let mut interior_residual = [0.0; 2];
    let mut fluxes = Vec::with_capacity(2);
    for (side, u) in [(Side::One, u1), (Side::Two, u2)] {
        let mesh = dec.mesh(side);
        u.check_on(mesh)?;
        let raw = residual_raw(ps, mesh, u.values(), src, quad);
        let sub = dec.side(side);
        let mut interior = raw.clone();
        for (v, r) in interior.iter_mut().enumerate() {
            if mesh.is_dirichlet(v) {
                *r = 0.0;
            }
        }
        for &l in sub.interface_vertices() {
            interior[l] = 0.0;
        }
        interior_residual[side.index()] = max_abs(&interior);
        fluxes.push(interface_entries(dec, side, &raw));
    }
    let t1 = trace(dec, Side::One, u1)?;
    let t2 = trace(dec, Side::Two, u2)?;
    check_len(t1.len(), t2.len())?;
    let trace_mismatch = t1.combine(1.0, &t2, -1.0).max_abs();
    let flux_balance = fluxes[0].combine(1.0, &fluxes[1], 1.0).max_abs();

    let global = dec.global();
    let glued = glue(dec, u1, u2)?;
    let mut r = residual_raw(ps, global, glued.values(), src, quad);
    for (v, ri) in r.iter_mut().enumerate() {
        if global.is_dirichlet(v) {
            *ri = 0.0;
        }
    }
    Ok(EquivalenceReport {
        interior_residual,
        trace_mismatch,
        flux_balance,
        glued_residual: max_abs(&r),
    })
}

/// [`check_transmission`] applied to the restrictions of a global function.
pub fn check_global(problem: &DecomposedProblem, u: &FeFunction) -> Result<EquivalenceReport> {
    let dec = problem.decomposition();
    let u1 = restrict(dec, Side::One, u)?;
    let u2 = restrict(dec, Side::Two, u)?;
    check_transmission(problem, &u1, &u2)
}
