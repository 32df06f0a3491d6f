//! Structured P1 meshes, the two-subdomain split along a straight cut, and the
//! discrete trace / lift maps between subdomain functions and interface data.

use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

const GEOM_TOL: f64 = 1e-12;

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MeshId(u64);

impl MeshId {
    fn fresh() -> Self {
        MeshId(NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VertexTag {
    Interior,
    Dirichlet,
    Interface,
}

impl VertexTag {
    fn as_str(self) -> &'static str {
        match self {
            VertexTag::Interior => "interior",
            VertexTag::Dirichlet => "dirichlet",
            VertexTag::Interface => "interface",
        }
    }
}

/// Simplicial mesh in one or two dimensions. 1D vertices carry `y = 0`.
#[derive(Debug, Clone)]
pub struct Mesh {
    id: MeshId,
    dim: usize,
    coords: Vec<[f64; 2]>,
    cells: Vec<usize>,
    tags: Vec<VertexTag>,
}

/// Constant P1 basis gradients and measure of one cell.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub grads: [[f64; 2]; 3],
    pub measure: f64,
}

impl Mesh {
    pub fn new(dim: usize, coords: Vec<[f64; 2]>, cells: Vec<usize>, tags: Vec<VertexTag>) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::invalid(format!("unsupported dimension {dim}")));
        }
        check_len(coords.len(), tags.len())?;
        if cells.len() % (dim + 1) != 0 {
            return Err(Error::invalid("connectivity length is not a multiple of the cell size"));
        }
        if let Some(&bad) = cells.iter().find(|&&v| v >= coords.len()) {
            return Err(Error::invalid(format!("connectivity index {bad} out of range")));
        }
        let mesh = Self {
            id: MeshId::fresh(),
            dim,
            coords,
            cells,
            tags,
        };
        for e in 0..mesh.n_cells() {
            if !(mesh.geometry(e).measure > 0.0) {
                return Err(Error::invalid(format!("cell {e} has non-positive measure")));
            }
        }
        Ok(mesh)
    }

    pub fn id(&self) -> MeshId {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_vertices(&self) -> usize {
        self.coords.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn nodes_per_cell(&self) -> usize {
        self.dim + 1
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn tags(&self) -> &[VertexTag] {
        &self.tags
    }

    pub fn tag(&self, v: usize) -> VertexTag {
        self.tags[v]
    }

    pub fn cell(&self, e: usize) -> &[usize] {
        let n = self.dim + 1;
        &self.cells[e * n..(e + 1) * n]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[usize]> {
        self.cells.chunks(self.dim + 1)
    }

    pub fn is_dirichlet(&self, v: usize) -> bool {
        self.tags[v] == VertexTag::Dirichlet
    }

    pub fn geometry(&self, e: usize) -> CellGeometry {
        let c = self.cell(e);
        if self.dim == 1 {
            let (x0, x1) = (self.coords[c[0]][0], self.coords[c[1]][0]);
            let h = x1 - x0;
            CellGeometry {
                grads: [[-1.0 / h, 0.0], [1.0 / h, 0.0], [0.0, 0.0]],
                measure: h,
            }
        } else {
            let [a, b, d] = [self.coords[c[0]], self.coords[c[1]], self.coords[c[2]]];
            let det = (b[0] - a[0]) * (d[1] - a[1]) - (d[0] - a[0]) * (b[1] - a[1]);
            let inv = 1.0 / det;
            CellGeometry {
                grads: [
                    [(b[1] - d[1]) * inv, (d[0] - b[0]) * inv],
                    [(d[1] - a[1]) * inv, (a[0] - d[0]) * inv],
                    [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv],
                ],
                measure: 0.5 * det,
            }
        }
    }

    /// Physical coordinates of a reference point `(ξ, η)` in cell `e`.
    pub fn map_point(&self, e: usize, phi: &[f64; 3]) -> [f64; 2] {
        let mut x = [0.0; 2];
        for (a, &v) in self.cell(e).iter().enumerate() {
            x[0] += phi[a] * self.coords[v][0];
            x[1] += phi[a] * self.coords[v][1];
        }
        x
    }

    /// Largest cell diameter.
    pub fn mesh_width(&self) -> f64 {
        self.cells()
            .map(|c| {
                let mut h: f64 = 0.0;
                for (i, &a) in c.iter().enumerate() {
                    for &b in &c[i + 1..] {
                        let (p, q) = (self.coords[a], self.coords[b]);
                        h = h.max(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
                    }
                }
                h
            })
            .fold(0.0, f64::max)
    }

    /// Plain-text listing:
    ///
    /// ```text
    /// dim <d>
    /// vertices <n>
    /// <index> <x> <y> <tag>
    /// cells <m> <nodes per cell>
    /// <index> <v0> <v1> [<v2>]
    /// ```
    pub fn write_dump(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "dim {}", self.dim)?;
        writeln!(w, "vertices {}", self.n_vertices())?;
        for (i, (c, t)) in self.coords.iter().zip(&self.tags).enumerate() {
            writeln!(w, "{i} {} {} {}", c[0], c[1], t.as_str())?;
        }
        writeln!(w, "cells {} {}", self.n_cells(), self.nodes_per_cell())?;
        for (e, c) in self.cells().enumerate() {
            let ids: Vec<String> = c.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{e} {}", ids.join(" "))?;
        }
        Ok(())
    }
}

/// Uniform mesh of `[a, b]` with `n` cells; both endpoints are Dirichlet.
pub fn build_interval_mesh(a: f64, b: f64, n: usize) -> Result<Mesh> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::invalid(format!("invalid interval [{a}, {b}]")));
    }
    if n < 2 {
        return Err(Error::invalid("an interval mesh needs at least 2 cells"));
    }
    let h = (b - a) / n as f64;
    let coords = (0..=n)
        .map(|i| [if i == n { b } else { a + i as f64 * h }, 0.0])
        .collect();
    let cells = (0..n).flat_map(|i| [i, i + 1]).collect();
    let mut tags = vec![VertexTag::Interior; n + 1];
    tags[0] = VertexTag::Dirichlet;
    tags[n] = VertexTag::Dirichlet;
    Mesh::new(1, coords, cells, tags)
}

/// Structured triangulation of `[0, lx] × [0, ly]`: each of the `nx × ny`
/// cells is split along its diagonal. All boundary vertices are Dirichlet.
pub fn build_rect_mesh(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Mesh> {
    if !(lx > 0.0 && ly > 0.0) || !lx.is_finite() || !ly.is_finite() {
        return Err(Error::invalid("rectangle sides must be positive"));
    }
    if nx < 2 || ny < 2 {
        return Err(Error::invalid("a rectangle mesh needs at least 2 cells per direction"));
    }
    let (hx, hy) = (lx / nx as f64, ly / ny as f64);
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut coords = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut tags = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = if i == nx { lx } else { i as f64 * hx };
            let y = if j == ny { ly } else { j as f64 * hy };
            coords.push([x, y]);
            let boundary = i == 0 || j == 0 || i == nx || j == ny;
            tags.push(if boundary { VertexTag::Dirichlet } else { VertexTag::Interior });
        }
    }
    let mut cells = Vec::with_capacity(6 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            cells.extend_from_slice(&[v00, v10, v11, v00, v11, v01]);
        }
    }
    Mesh::new(2, coords, cells, tags)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    One,
    Two,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::One, Side::Two];

    pub fn index(self) -> usize {
        match self {
            Side::One => 0,
            Side::Two => 1,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::One => Side::Two,
            Side::Two => Side::One,
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Ω{}", self.index() + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    fn component(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Subdomain {
    mesh: Mesh,
    to_global: Vec<usize>,
    /// Interface dof `k` → local vertex.
    interface: Vec<usize>,
}

impl Subdomain {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn to_global(&self) -> &[usize] {
        &self.to_global
    }

    pub fn interface_vertices(&self) -> &[usize] {
        &self.interface
    }
}

/// Global mesh split along the line `{axis coordinate = cut}`. Side one lies
/// below the cut, so `ν₁ = +e_axis` and `ν₂ = −e_axis` on the interface.
#[derive(Debug, Clone)]
pub struct Decomposition {
    global: Mesh,
    sides: [Subdomain; 2],
    interface_global: Vec<usize>,
    /// All global vertices on the cut (interface dofs and their Dirichlet
    /// endpoints), sorted along the cut.
    line: Vec<usize>,
    axis: Axis,
    cut: f64,
}

pub fn decompose(mesh: &Mesh, axis: Axis, cut: f64) -> Result<Decomposition> {
    if mesh.dim() == 1 && axis != Axis::X {
        return Err(Error::invalid("1D meshes can only be cut along x"));
    }
    let c = axis.component();
    let coord = |v: usize| mesh.coords()[v][c];
    let on_cut = |v: usize| (coord(v) - cut).abs() < GEOM_TOL * cut.abs().max(1.0);

    let mut cell_side = Vec::with_capacity(mesh.n_cells());
    for (e, cell) in mesh.cells().enumerate() {
        let below = cell.iter().all(|&v| on_cut(v) || coord(v) < cut);
        let above = cell.iter().all(|&v| on_cut(v) || coord(v) > cut);
        match (below, above) {
            (true, false) => cell_side.push(Side::One),
            (false, true) => cell_side.push(Side::Two),
            _ => {
                return Err(Error::invalid(format!(
                    "cut {cut} does not coincide with a mesh line (cell {e} straddles it)"
                )))
            }
        }
    }
    if !cell_side.contains(&Side::One) || !cell_side.contains(&Side::Two) {
        return Err(Error::invalid(format!("cut {cut} leaves one side empty")));
    }

    let mut line: Vec<usize> = (0..mesh.n_vertices()).filter(|&v| on_cut(v)).collect();
    let t = 1 - c;
    line.sort_by(|&a, &b| mesh.coords()[a][t].total_cmp(&mesh.coords()[b][t]));
    let interface_global: Vec<usize> = line.iter().copied().filter(|&v| !mesh.is_dirichlet(v)).collect();
    if interface_global.is_empty() {
        return Err(Error::invalid("the cut has no interior interface vertices"));
    }

    let build_side = |side: Side| -> Result<Subdomain> {
        let mut used = vec![false; mesh.n_vertices()];
        for (e, cell) in mesh.cells().enumerate() {
            if cell_side[e] == side {
                cell.iter().for_each(|&v| used[v] = true);
            }
        }
        let to_global: Vec<usize> = (0..mesh.n_vertices()).filter(|&v| used[v]).collect();
        let mut to_local = vec![usize::MAX; mesh.n_vertices()];
        for (l, &g) in to_global.iter().enumerate() {
            to_local[g] = l;
        }
        let coords = to_global.iter().map(|&g| mesh.coords()[g]).collect();
        let tags = to_global
            .iter()
            .map(|&g| match mesh.tag(g) {
                VertexTag::Dirichlet => VertexTag::Dirichlet,
                _ if on_cut(g) => VertexTag::Interface,
                t => t,
            })
            .collect();
        let cells = mesh
            .cells()
            .enumerate()
            .filter(|(e, _)| cell_side[*e] == side)
            .flat_map(|(_, cell)| cell.iter().map(|&v| to_local[v]).collect::<Vec<_>>())
            .collect();
        let interface = interface_global.iter().map(|&g| to_local[g]).collect();
        Ok(Subdomain {
            mesh: Mesh::new(mesh.dim(), coords, cells, tags)?,
            to_global,
            interface,
        })
    };
    let sides = [build_side(Side::One)?, build_side(Side::Two)?];

    Ok(Decomposition {
        global: mesh.clone(),
        sides,
        interface_global,
        line,
        axis,
        cut,
    })
}

impl Decomposition {
    pub fn global(&self) -> &Mesh {
        &self.global
    }

    pub fn side(&self, side: Side) -> &Subdomain {
        &self.sides[side.index()]
    }

    pub fn mesh(&self, side: Side) -> &Mesh {
        &self.sides[side.index()].mesh
    }

    pub fn n_interface(&self) -> usize {
        self.interface_global.len()
    }

    pub fn interface_global(&self) -> &[usize] {
        &self.interface_global
    }

    /// Global vertices on the cut line ordered along it, including the
    /// Dirichlet endpoints in 2D.
    pub fn cut_line(&self) -> &[usize] {
        &self.line
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn cut(&self) -> f64 {
        self.cut
    }

    /// Outward unit normal of the given side on the interface.
    pub fn normal(&self, side: Side) -> [f64; 2] {
        let mut n = [0.0; 2];
        n[self.axis.component()] = match side {
            Side::One => 1.0,
            Side::Two => -1.0,
        };
        n
    }

    fn check_on(&self, side: Side, u: &FeFunction) -> Result<()> {
        if u.mesh != self.mesh(side).id() {
            return Err(Error::MeshMismatch);
        }
        Ok(())
    }
}

/// Nodal coefficient vector of a P1 function on one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct FeFunction {
    mesh: MeshId,
    values: Vec<f64>,
}

impl FeFunction {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self {
            mesh: mesh.id(),
            values: vec![0.0; mesh.n_vertices()],
        }
    }

    pub fn from_values(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        check_len(mesh.n_vertices(), values.len())?;
        Ok(Self { mesh: mesh.id(), values })
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: &Mesh, f: impl Fn([f64; 2]) -> f64) -> Self {
        Self {
            mesh: mesh.id(),
            values: mesh.coords().iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn mesh_id(&self) -> MeshId {
        self.mesh
    }

    pub fn lives_on(&self, mesh: &Mesh) -> bool {
        self.mesh == mesh.id()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn check_on(&self, mesh: &Mesh) -> Result<()> {
        if self.mesh != mesh.id() {
            return Err(Error::MeshMismatch);
        }
        Ok(())
    }

    /// `self - other` on the same mesh.
    pub fn minus(&self, other: &FeFunction) -> Result<FeFunction> {
        if self.mesh != other.mesh {
            return Err(Error::MeshMismatch);
        }
        Ok(FeFunction {
            mesh: self.mesh,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }
}

macro_rules! interface_vector {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        pub struct $name(Vec<f64>);

        impl $name {
            pub fn new(values: Vec<f64>) -> Self {
                Self(values)
            }

            pub fn zeros(n: usize) -> Self {
                Self(vec![0.0; n])
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn as_mut_slice(&mut self) -> &mut [f64] {
                &mut self.0
            }

            pub fn into_vec(self) -> Vec<f64> {
                self.0
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            /// `a·self + b·other`.
            pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
                debug_assert_eq!(self.len(), other.len());
                Self(self.0.iter().zip(&other.0).map(|(x, y)| a * x + b * y).collect())
            }

            pub fn scaled(&self, a: f64) -> Self {
                Self(self.0.iter().map(|x| a * x).collect())
            }

            pub fn max_abs(&self) -> f64 {
                crate::linalg::max_abs(&self.0)
            }
        }
    };
}

interface_vector!(
    /// Nodal values on the interface dofs.
    TraceVector
);
interface_vector!(
    /// Functional on interface data, paired with a [`TraceVector`] through
    /// the coefficient dot product.
    DualTrace
);

impl DualTrace {
    pub fn pair(&self, eta: &TraceVector) -> f64 {
        crate::linalg::dot(&self.0, &eta.0)
    }
}

/// Restriction of a subdomain function to the interface dofs.
pub fn trace(dec: &Decomposition, side: Side, u: &FeFunction) -> Result<TraceVector> {
    dec.check_on(side, u)?;
    Ok(TraceVector(
        dec.side(side).interface.iter().map(|&l| u.values[l]).collect(),
    ))
}

/// Nodal extension of interface data by zero.
pub fn lift(dec: &Decomposition, side: Side, eta: &TraceVector) -> Result<FeFunction> {
    check_len(dec.n_interface(), eta.len())?;
    let sub = dec.side(side);
    let mut u = FeFunction::zeros(&sub.mesh);
    for (&l, &v) in sub.interface.iter().zip(&eta.0) {
        u.values[l] = v;
    }
    Ok(u)
}

/// Restriction of a global function to one subdomain.
pub fn restrict(dec: &Decomposition, side: Side, u: &FeFunction) -> Result<FeFunction> {
    u.check_on(&dec.global)?;
    let sub = dec.side(side);
    Ok(FeFunction {
        mesh: sub.mesh.id(),
        values: sub.to_global.iter().map(|&g| u.values[g]).collect(),
    })
}

/// Glues two subdomain functions into a global one. Interface values are
/// averaged when the traces disagree.
pub fn glue(dec: &Decomposition, u1: &FeFunction, u2: &FeFunction) -> Result<FeFunction> {
    dec.check_on(Side::One, u1)?;
    dec.check_on(Side::Two, u2)?;
    let mut values = vec![0.0; dec.global.n_vertices()];
    let mut count = vec![0u8; dec.global.n_vertices()];
    for (side, u) in [(Side::One, u1), (Side::Two, u2)] {
        for (l, &g) in dec.side(side).to_global.iter().enumerate() {
            values[g] += u.values[l];
            count[g] += 1;
        }
    }
    for (v, &c) in values.iter_mut().zip(&count) {
        if c > 1 {
            *v /= c as f64;
        }
    }
    Ok(FeFunction {
        mesh: dec.global.id(),
        values,
    })
}
