//! Dense P1 oracles for the linear problem `-Δu + λu = f`, assembled from
//! closed-form element matrices, independent of the library's assembly.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use robin_dd::mesh::{build_interval_mesh, build_rect_mesh, decompose, Axis, Decomposition, Mesh, Side};

pub const GEOM: f64 = 1e-12;

/// Element stiffness, mass and vertex count for one cell given its vertex
/// coordinates.
fn element(dim: usize, xs: &[[f64; 2]]) -> (DMatrix<f64>, DMatrix<f64>, f64) {
    if dim == 1 {
        let h = (xs[1][0] - xs[0][0]).abs();
        let k = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]) / h;
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]) * (h / 6.0);
        (k, m, h)
    } else {
        let [x1, y1] = xs[0];
        let [x2, y2] = xs[1];
        let [x3, y3] = xs[2];
        let area = 0.5 * ((x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)).abs();
        let b = [y2 - y3, y3 - y1, y1 - y2];
        let c = [x3 - x2, x1 - x3, x2 - x1];
        let k = DMatrix::from_fn(3, 3, |i, j| (b[i] * b[j] + c[i] * c[j]) / (4.0 * area));
        let m = DMatrix::from_fn(3, 3, |i, j| area / 12.0 * if i == j { 2.0 } else { 1.0 });
        (k, m, area)
    }
}

/// `A = K + λM` and the load of a constant source over every vertex of `mesh`.
pub fn assemble_linear(mesh: &Mesh, lambda: f64, f: f64) -> (DMatrix<f64>, DVector<f64>) {
    let n = mesh.n_vertices();
    let npc = mesh.dim() + 1;
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for e in 0..mesh.n_cells() {
        let cell = mesh.cell(e);
        let xs: Vec<[f64; 2]> = cell.iter().map(|&v| mesh.coords()[v]).collect();
        let (k, m, meas) = element(mesh.dim(), &xs);
        for i in 0..npc {
            b[cell[i]] += f * meas / npc as f64;
            for j in 0..npc {
                a[(cell[i], cell[j])] += k[(i, j)] + lambda * m[(i, j)];
            }
        }
    }
    (a, b)
}

/// Geometric boundary test on `[0, lx] × [0, ly]` (or `[0, lx]` in 1D).
pub fn on_boundary(dim: usize, lx: f64, ly: f64, x: [f64; 2]) -> bool {
    let edge = |v: f64, l: f64| v.abs() < GEOM || (v - l).abs() < GEOM;
    edge(x[0], lx) || (dim == 2 && edge(x[1], ly))
}

pub struct SubOracle {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub interior: Vec<usize>,
    pub gamma: Vec<usize>,
    pub n: usize,
}

fn sub_matrix(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

fn sub_vector(b: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
    DVector::from_fn(rows.len(), |i, _| b[rows[i]])
}

impl SubOracle {
    /// Oracle on one side of a decomposition of `[0, lx] × [0, ly]`, cut
    /// along `x = cut`. Interface vertices are found geometrically and sorted
    /// along the cut.
    pub fn new(dec: &Decomposition, side: Side, lx: f64, ly: f64, cut: f64, lambda: f64, f: f64) -> Self {
        let mesh = dec.mesh(side);
        let dim = mesh.dim();
        let (a, b) = assemble_linear(mesh, lambda, f);
        let x = mesh.coords();
        let mut gamma: Vec<usize> = (0..mesh.n_vertices())
            .filter(|&v| (x[v][0] - cut).abs() < GEOM && !on_boundary(dim, lx, ly, x[v]))
            .collect();
        gamma.sort_by(|&p, &q| x[p][1].total_cmp(&x[q][1]));
        let interior = (0..mesh.n_vertices())
            .filter(|&v| !on_boundary(dim, lx, ly, x[v]) && !gamma.contains(&v))
            .collect();
        Self {
            a,
            b,
            interior,
            gamma,
            n: mesh.n_vertices(),
        }
    }

    /// Full nodal vector of the Dirichlet extension of `eta`.
    pub fn dirichlet(&self, eta: &[f64]) -> DVector<f64> {
        let (i, g) = (&self.interior, &self.gamma);
        let eta = DVector::from_column_slice(eta);
        let rhs = sub_vector(&self.b, i) - sub_matrix(&self.a, i, g) * &eta;
        let ui = sub_matrix(&self.a, i, i).lu().solve(&rhs).expect("regular");
        let mut u = DVector::zeros(self.n);
        for (k, &v) in i.iter().enumerate() {
            u[v] = ui[k];
        }
        for (k, &v) in g.iter().enumerate() {
            u[v] = eta[k];
        }
        u
    }

    /// Affine Steklov–Poincaré map `η ↦ A_ΓΓη + A_ΓI u_I − b_Γ`.
    pub fn schur(&self, eta: &[f64]) -> DVector<f64> {
        let u = self.dirichlet(eta);
        let all: Vec<usize> = self.interior.iter().chain(&self.gamma).copied().collect();
        let ug = sub_vector(&u, &all);
        sub_matrix(&self.a, &self.gamma, &all) * ug - sub_vector(&self.b, &self.gamma)
    }

    /// Robin solve `A u + s M_Γ u_Γ = b + χ` on free dofs; returns the trace.
    pub fn robin(&self, s: f64, mass: &DMatrix<f64>, chi: &DVector<f64>) -> DVector<f64> {
        let all: Vec<usize> = self.interior.iter().chain(&self.gamma).copied().collect();
        let ni = self.interior.len();
        let mut mat = sub_matrix(&self.a, &all, &all);
        let mut rhs = sub_vector(&self.b, &all);
        for k in 0..self.gamma.len() {
            rhs[ni + k] += chi[k];
            for j in 0..self.gamma.len() {
                mat[(ni + k, ni + j)] += s * mass[(k, j)];
            }
        }
        let u = mat.lu().solve(&rhs).expect("regular");
        DVector::from_fn(self.gamma.len(), |k, _| u[ni + k])
    }
}

/// Line mass of the interior cut vertices of a 2D decomposition, or `[[1]]`
/// in 1D.
pub fn interface_mass_oracle(dec: &Decomposition) -> DMatrix<f64> {
    let mesh = dec.global();
    if mesh.dim() == 1 {
        return DMatrix::identity(1, 1);
    }
    let mut ys: Vec<f64> = (0..mesh.n_vertices())
        .filter(|&v| (mesh.coords()[v][0] - dec.cut()).abs() < GEOM)
        .map(|v| mesh.coords()[v][1])
        .collect();
    ys.sort_by(f64::total_cmp);
    let n = ys.len();
    let mut full = DMatrix::zeros(n, n);
    for w in 0..n - 1 {
        let l = ys[w + 1] - ys[w];
        full[(w, w)] += l / 3.0;
        full[(w + 1, w + 1)] += l / 3.0;
        full[(w, w + 1)] += l / 6.0;
        full[(w + 1, w)] += l / 6.0;
    }
    full.view((1, 1), (n - 2, n - 2)).into_owned()
}

/// Direct solve of the global linear problem; returns all vertex values.
pub fn global_linear(mesh: &Mesh, lx: f64, ly: f64, lambda: f64, f: f64) -> DVector<f64> {
    let (a, b) = assemble_linear(mesh, lambda, f);
    let free: Vec<usize> = (0..mesh.n_vertices())
        .filter(|&v| !on_boundary(mesh.dim(), lx, ly, mesh.coords()[v]))
        .collect();
    let uf = sub_matrix(&a, &free, &free).lu().solve(&sub_vector(&b, &free)).expect("regular");
    let mut u = DVector::zeros(mesh.n_vertices());
    for (k, &v) in free.iter().enumerate() {
        u[v] = uf[k];
    }
    u
}

pub fn interval(n: usize, cut: f64) -> Decomposition {
    let m = build_interval_mesh(0.0, 1.0, n).unwrap();
    decompose(&m, Axis::X, cut).unwrap()
}

pub fn square(n: usize, cut: f64) -> Decomposition {
    let m = build_rect_mesh(1.0, 1.0, n, n).unwrap();
    decompose(&m, Axis::X, cut).unwrap()
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robin_dd::fem::{assemble_jacobian, assemble_residual, error_w1p};
use robin_dd::monolithic::solve_global;
use robin_dd::pstructure::{alpha_eval, alpha_jacobian, g_derivative, g_eval};
use robin_dd::{FeFunction, NewtonConfig, PStructure, Quadrature, Source};

const FD_STEP: f64 = 1e-6;

fn rel(err: f64, scale: f64) -> f64 {
    err / scale.max(1e-8)
}

/// Worst relative mismatch of `Dα` against central differences over random
/// `z` with `|z| ≥ 0.1`.
pub fn fd_alpha(ps: &PStructure, dim: usize, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < samples {
        let z: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        if z.iter().map(|v| v * v).sum::<f64>().sqrt() < 0.1 {
            continue;
        }
        done += 1;
        let jac = alpha_jacobian(ps, &z, 0.0).unwrap();
        let scale = jac.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for j in 0..dim {
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[j] += FD_STEP;
            zm[j] -= FD_STEP;
            let (ap, am) = (alpha_eval(ps, &zp).unwrap(), alpha_eval(ps, &zm).unwrap());
            for i in 0..dim {
                let fd = (ap[i] - am[i]) / (2.0 * FD_STEP);
                worst = worst.max(rel((fd - jac[i * dim + j]).abs(), scale));
            }
        }
    }
    worst
}

/// Same for `g'` over `|x| ≥ 0.1`.
pub fn fd_g(ps: &PStructure, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < samples {
        let x: f64 = rng.gen_range(-2.0..2.0);
        if x.abs() < 0.1 {
            continue;
        }
        done += 1;
        let d = g_derivative(ps, x).unwrap();
        let fd = (g_eval(ps, x + FD_STEP).unwrap() - g_eval(ps, x - FD_STEP).unwrap()) / (2.0 * FD_STEP);
        worst = worst.max(rel((fd - d).abs(), d.abs()));
    }
    worst
}

/// Worst relative column mismatch of the assembled Jacobian at a random
/// state against differences of the assembled residual, free dofs only.
pub fn fd_assembled(ps: &PStructure, mesh: &Mesh, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let quad = Quadrature::default_for(mesh.dim()).unwrap();
    let f = Source::new(|x| 1.0 + x[0]);
    let mut u = FeFunction::zeros(mesh);
    for (v, val) in u.values_mut().iter_mut().enumerate() {
        if !mesh.is_dirichlet(v) {
            *val = rng.gen_range(-1.0..1.0);
        }
    }
    let jac = robin_dd::linalg::to_dense(&assemble_jacobian(ps, mesh, &u, &quad, 0.0).unwrap());
    let scale = jac.abs().max();
    let mut worst: f64 = 0.0;
    for j in (0..mesh.n_vertices()).filter(|&v| !mesh.is_dirichlet(v)) {
        let (mut up, mut um) = (u.clone(), u.clone());
        up.values_mut()[j] += FD_STEP;
        um.values_mut()[j] -= FD_STEP;
        let rp = assemble_residual(ps, mesh, &up, &f, &quad).unwrap();
        let rm = assemble_residual(ps, mesh, &um, &f, &quad).unwrap();
        for i in (0..mesh.n_vertices()).filter(|&v| !mesh.is_dirichlet(v)) {
            let fd = (rp.values()[i] - rm.values()[i]) / (2.0 * FD_STEP);
            worst = worst.max(rel((fd - jac[(i, j)]).abs(), scale));
        }
    }
    worst
}

/// `W^{1,p}` errors of the 1D p = 3 manufactured problem `u = x(1 − x)`,
/// `g(u) = u`, `f = 4|1 − 2x| + x(1 − x)` for each `n`.
pub fn manufactured_errors(ns: &[usize]) -> Vec<f64> {
    let ps = PStructure::resolvent(3.0, 1.0).unwrap();
    let f = Source::new(|x| 4.0 * (1.0 - 2.0 * x[0]).abs() + x[0] * (1.0 - x[0]));
    let quad = Quadrature::new(1, 8).unwrap();
    ns.iter()
        .map(|&n| {
            let mesh = build_interval_mesh(0.0, 1.0, n).unwrap();
            let (u, _) = solve_global(&mesh, &ps, &f, &quad, &NewtonConfig::default()).unwrap();
            error_w1p(&mesh, &u, &ps, &quad, |x| x[0] * (1.0 - x[0]), |x| [1.0 - 2.0 * x[0], 0.0]).unwrap()
        })
        .collect()
}
