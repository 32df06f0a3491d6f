//! Problem setups shared by the benchmarks.

use robin_dd::mesh::{build_interval_mesh, build_rect_mesh, decompose};
use robin_dd::{Axis, DecomposedProblem, PStructure, Quadrature, Source};

/// p-Laplacian with p-homogeneous reaction on the unit square, `n × n` cells,
/// cut at `x = 0.5`.
pub fn square(p: f64, n: usize) -> DecomposedProblem {
    let mesh = build_rect_mesh(1.0, 1.0, n, n).expect("mesh");
    let dec = decompose(&mesh, Axis::X, 0.5).expect("decomposition");
    let ps = PStructure::reaction(p, 1.0).expect("p-structure");
    DecomposedProblem::new(dec, ps, Source::new(|x| 1.0 + x[0]), Quadrature::default_for(2).expect("quadrature"))
        .expect("problem")
}

/// Same on the unit interval with `n` cells.
pub fn interval(p: f64, n: usize) -> DecomposedProblem {
    let mesh = build_interval_mesh(0.0, 1.0, n).expect("mesh");
    let dec = decompose(&mesh, Axis::X, 0.5).expect("decomposition");
    let ps = PStructure::resolvent(p, 1.0).expect("p-structure");
    DecomposedProblem::new(dec, ps, Source::new(|x| 1.0 + x[0]), Quadrature::default_for(1).expect("quadrature"))
        .expect("problem")
}
