//! P1 assembly of the nonlinear residual `a(u, φ_k) − (f, φ_k)`, its
//! Jacobian, the interface mass matrix, and the discrete norms.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use nalgebra_sparse::CscMatrix;

use crate::error::{Error, Result};
use crate::linalg::SparseBuilder;
use crate::mesh::{Decomposition, DualTrace, FeFunction, Mesh, Side, TraceVector};
use crate::pstructure::PStructure;
use crate::quadrature::Quadrature;

/// Right-hand side `f(x, y)`.
#[derive(Clone)]
pub struct Source(Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>);

impl Source {
    pub fn new(f: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static) -> Self {
        Source(Arc::new(f))
    }

    pub fn zero() -> Self {
        Source::new(|_| 0.0)
    }

    pub fn constant(c: f64) -> Self {
        Source::new(move |_| c)
    }

    #[inline]
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        (self.0)(x)
    }
}

impl fmt::Debug for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Source(..)")
    }
}

fn check_quad(mesh: &Mesh, quad: &Quadrature) -> Result<()> {
    if quad.dim() != mesh.dim() {
        return Err(Error::invalid(format!(
            "quadrature for dimension {} used on a {}D mesh",
            quad.dim(),
            mesh.dim()
        )));
    }
    if quad.order() < 1 {
        return Err(Error::invalid("quadrature order must be at least 1"));
    }
    Ok(())
}

#[inline]
fn cell_gradient(grads: &[[f64; 2]; 3], cell: &[usize], u: &[f64]) -> [f64; 2] {
    let mut g = [0.0; 2];
    for (a, &v) in cell.iter().enumerate() {
        g[0] += u[v] * grads[a][0];
        g[1] += u[v] * grads[a][1];
    }
    g
}

#[inline]
fn cell_value(phi: &[f64; 3], cell: &[usize], u: &[f64]) -> f64 {
    cell.iter().enumerate().map(|(a, &v)| phi[a] * u[v]).sum()
}

/// Unmasked residual: entry `k` is `a(u, φ_k) − (f, φ_k)` over `mesh`.
pub(crate) fn residual_raw(ps: &PStructure, mesh: &Mesh, u: &[f64], f: &Source, quad: &Quadrature) -> Vec<f64> {
    let d = mesh.dim();
    let mut r = vec![0.0; mesh.n_vertices()];
    let mut flux = [0.0; 2];
    for e in 0..mesh.n_cells() {
        let cell = mesh.cell(e);
        let geo = mesh.geometry(e);
        let grad = cell_gradient(&geo.grads, cell, u);
        ps.flux_into(&grad[..d], &mut flux[..d]);
        for (a, &v) in cell.iter().enumerate() {
            let dot: f64 = (0..d).map(|i| flux[i] * geo.grads[a][i]).sum();
            r[v] += geo.measure * dot;
        }
        for (phi, w) in quad.iter() {
            let uq = cell_value(&phi, cell, u);
            let x = mesh.map_point(e, &phi);
            let integrand = w * geo.measure * (ps.reaction_value(uq) - f.eval(x));
            for (a, &v) in cell.iter().enumerate() {
                r[v] += integrand * phi[a];
            }
        }
    }
    r
}

/// Residual with Dirichlet entries masked to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledResidual {
    values: Vec<f64>,
}

impl AssembledResidual {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm2(&self.values)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

pub fn assemble_residual(
    ps: &PStructure,
    mesh: &Mesh,
    u: &FeFunction,
    f: &Source,
    quad: &Quadrature,
) -> Result<AssembledResidual> {
    u.check_on(mesh)?;
    check_quad(mesh, quad)?;
    let mut values = residual_raw(ps, mesh, u.values(), f, quad);
    for (v, r) in values.iter_mut().enumerate() {
        if mesh.is_dirichlet(v) {
            *r = 0.0;
        }
    }
    Ok(AssembledResidual { values })
}

/// Jacobian entries for free rows/columns, identity on constrained dofs.
pub(crate) fn jacobian_builder(
    ps: &PStructure,
    mesh: &Mesh,
    u: &[f64],
    quad: &Quadrature,
    eps_reg: f64,
    constrained: &[bool],
) -> SparseBuilder {
    let d = mesh.dim();
    let mut b = SparseBuilder::new(mesh.n_vertices());
    let mut dalpha = [0.0; 4];
    for e in 0..mesh.n_cells() {
        let cell = mesh.cell(e);
        let geo = mesh.geometry(e);
        let grad = cell_gradient(&geo.grads, cell, u);
        ps.flux_jacobian_into(&grad[..d], eps_reg, &mut dalpha[..d * d]);
        let n = cell.len();
        let mut local = [[0.0; 3]; 3];
        for a in 0..n {
            for bb in 0..n {
                let mut s = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        s += geo.grads[a][i] * dalpha[i * d + j] * geo.grads[bb][j];
                    }
                }
                local[a][bb] = geo.measure * s;
            }
        }
        for (phi, w) in quad.iter() {
            let uq = cell_value(&phi, cell, u);
            let gp = w * geo.measure * ps.reaction_derivative_reg(uq, eps_reg);
            for a in 0..n {
                for bb in 0..n {
                    local[a][bb] += gp * phi[a] * phi[bb];
                }
            }
        }
        for (a, &va) in cell.iter().enumerate() {
            if constrained[va] {
                continue;
            }
            for (bb, &vb) in cell.iter().enumerate() {
                if !constrained[vb] {
                    b.add(va, vb, local[a][bb]);
                }
            }
        }
    }
    for (v, &c) in constrained.iter().enumerate() {
        if c {
            b.add(v, v, 1.0);
        }
    }
    b
}

/// Jacobian `∫ Dα(∇u)∇φ_l·∇φ_k + g'(u)φ_lφ_k` with Dirichlet rows and columns
/// replaced by the identity.
pub fn assemble_jacobian(
    ps: &PStructure,
    mesh: &Mesh,
    u: &FeFunction,
    quad: &Quadrature,
    eps_reg: f64,
) -> Result<CscMatrix<f64>> {
    u.check_on(mesh)?;
    check_quad(mesh, quad)?;
    if !(eps_reg >= 0.0) {
        return Err(Error::invalid("eps_reg must be non-negative"));
    }
    let constrained: Vec<bool> = (0..mesh.n_vertices()).map(|v| mesh.is_dirichlet(v)).collect();
    Ok(jacobian_builder(ps, mesh, u.values(), quad, eps_reg, &constrained).build())
}

/// Gram matrix of the interface hat functions in `L²(Γ)`. For a 1D
/// decomposition the interface is a point and the pairing is the plain
/// product, so the matrix is `[[1]]`.
#[derive(Debug, Clone)]
pub struct InterfaceMass {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

pub fn interface_mass(dec: &Decomposition, quad: &Quadrature) -> Result<InterfaceMass> {
    let n = dec.n_interface();
    let mut m = DMatrix::zeros(n, n);
    if dec.global().dim() == 1 {
        m[(0, 0)] = 1.0;
    } else {
        if quad.order() < 2 {
            return Err(Error::invalid("interface mass needs a quadrature of order ≥ 2"));
        }
        let line_quad = Quadrature::new(1, quad.order())?;
        let coords = dec.global().coords();
        let dof_of = |g: usize| dec.interface_global().iter().position(|&v| v == g);
        for seg in dec.cut_line().windows(2) {
            let (a, b) = (coords[seg[0]], coords[seg[1]]);
            let len = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            let dofs = [dof_of(seg[0]), dof_of(seg[1])];
            for (phi, w) in line_quad.iter() {
                for i in 0..2 {
                    for j in 0..2 {
                        if let (Some(p), Some(q)) = (dofs[i], dofs[j]) {
                            m[(p, q)] += w * len * phi[i] * phi[j];
                        }
                    }
                }
            }
        }
    }
    let chol = Cholesky::new(m.clone()).ok_or_else(|| Error::LinearSolve("interface mass is not SPD".into()))?;
    Ok(InterfaceMass { matrix: m, chol })
}

impl InterfaceMass {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row sums, i.e. `∫_Γ φ_k Σ_l φ_l`.
    pub fn weights(&self) -> Vec<f64> {
        self.matrix.row_iter().map(|r| r.sum()).collect()
    }

    /// `J η`.
    pub fn apply(&self, eta: &TraceVector) -> DualTrace {
        let v = &self.matrix * DVector::from_column_slice(eta.as_slice());
        DualTrace::new(v.as_slice().to_vec())
    }

    /// `J⁻¹ χ`: the `L²(Γ)` representative of a functional.
    pub fn riesz(&self, chi: &DualTrace) -> TraceVector {
        let v = self.chol.solve(&DVector::from_column_slice(chi.as_slice()));
        TraceVector::new(v.as_slice().to_vec())
    }

    pub fn inner(&self, a: &TraceVector, b: &TraceVector) -> f64 {
        self.apply(a).pair(b)
    }

    pub fn norm(&self, a: &TraceVector) -> f64 {
        self.inner(a, a).max(0.0).sqrt()
    }

    /// `L²(Γ)` distance between two traces.
    pub fn distance(&self, a: &TraceVector, b: &TraceVector) -> f64 {
        self.norm(&a.combine(1.0, b, -1.0))
    }
}

/// Extracts the interface entries of a subdomain vector.
pub(crate) fn interface_entries(dec: &Decomposition, side: Side, v: &[f64]) -> DualTrace {
    DualTrace::new(dec.side(side).interface_vertices().iter().map(|&l| v[l]).collect())
}

/// `‖∇u‖_{L^p}`.
pub fn seminorm_grad_lp(mesh: &Mesh, u: &FeFunction, ps: &PStructure) -> Result<f64> {
    u.check_on(mesh)?;
    let p = ps.p();
    let mut acc = 0.0;
    for e in 0..mesh.n_cells() {
        let geo = mesh.geometry(e);
        let g = cell_gradient(&geo.grads, mesh.cell(e), u.values());
        acc += geo.measure * (g[0] * g[0] + g[1] * g[1]).sqrt().powf(p);
    }
    Ok(acc.powf(1.0 / p))
}

/// `‖u‖_{L^r}` with the default quadrature.
pub fn norm_lr(mesh: &Mesh, u: &FeFunction, ps: &PStructure) -> Result<f64> {
    u.check_on(mesh)?;
    let quad = Quadrature::default_for(mesh.dim())?;
    let r = ps.r();
    let mut acc = 0.0;
    for e in 0..mesh.n_cells() {
        let cell = mesh.cell(e);
        let m = mesh.geometry(e).measure;
        for (phi, w) in quad.iter() {
            acc += w * m * cell_value(&phi, cell, u.values()).abs().powf(r);
        }
    }
    Ok(acc.powf(1.0 / r))
}

/// `‖∇u‖_{L^p} + ‖u‖_{L^r}`.
pub fn norm_w1p(mesh: &Mesh, u: &FeFunction, ps: &PStructure) -> Result<f64> {
    Ok(seminorm_grad_lp(mesh, u, ps)? + norm_lr(mesh, u, ps)?)
}

/// `‖∇(u_h − u)‖_{L^p} + ‖u_h − u‖_{L^r}` against an exact solution, by
/// quadrature.
pub fn error_w1p(
    mesh: &Mesh,
    u: &FeFunction,
    ps: &PStructure,
    quad: &Quadrature,
    exact: impl Fn([f64; 2]) -> f64,
    exact_grad: impl Fn([f64; 2]) -> [f64; 2],
) -> Result<f64> {
    u.check_on(mesh)?;
    check_quad(mesh, quad)?;
    let (p, r) = (ps.p(), ps.r());
    let (mut gp, mut lr) = (0.0, 0.0);
    for e in 0..mesh.n_cells() {
        let cell = mesh.cell(e);
        let geo = mesh.geometry(e);
        let gh = cell_gradient(&geo.grads, cell, u.values());
        for (phi, w) in quad.iter() {
            let x = mesh.map_point(e, &phi);
            let ge = exact_grad(x);
            let dg = ((gh[0] - ge[0]).powi(2) + (gh[1] - ge[1]).powi(2)).sqrt();
            gp += w * geo.measure * dg.powf(p);
            lr += w * geo.measure * (cell_value(&phi, cell, u.values()) - exact(x)).abs().powf(r);
        }
    }
    Ok(gp.powf(1.0 / p) + lr.powf(1.0 / r))
}
