//! Gauss rules on the reference segment `[0, 1]` and the reference triangle
//! `{ξ, η ≥ 0, ξ + η ≤ 1}`.

use crate::error::{Error, Result};

/// Default polynomial degree integrated exactly on every element.
pub const DEFAULT_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    order: usize,
    dim: usize,
    /// Reference coordinates; the second entry is unused in 1D.
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
}

impl Quadrature {
    /// Rule of polynomial exactness `order` on the reference element of the
    /// given dimension (1 or 2).
    pub fn new(dim: usize, order: usize) -> Result<Self> {
        if order < 1 {
            return Err(Error::invalid("quadrature order must be at least 1"));
        }
        match dim {
            1 => Ok(Self::segment(order)),
            2 => Ok(Self::triangle(order)),
            _ => Err(Error::invalid(format!("unsupported dimension {dim}"))),
        }
    }

    pub fn default_for(dim: usize) -> Result<Self> {
        Self::new(dim, DEFAULT_ORDER)
    }

    fn segment(order: usize) -> Self {
        let n = (order + 2) / 2;
        let (x, w) = gauss_legendre(n);
        Self {
            order,
            dim: 1,
            points: x.iter().map(|&t| [0.5 * (t + 1.0), 0.0]).collect(),
            weights: w.iter().map(|w| 0.5 * w).collect(),
        }
    }

    /// Collapsed (Duffy) tensor Gauss rule. The Jacobian `1 - a` raises the
    /// degree in `a` by one, hence `n` points with `2n - 1 >= order + 1`.
    fn triangle(order: usize) -> Self {
        let n = (order + 3) / 2;
        let (x, w) = gauss_legendre(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (xa, wa) in x.iter().zip(&w) {
            let a = 0.5 * (xa + 1.0);
            for (xb, wb) in x.iter().zip(&w) {
                let b = 0.5 * (xb + 1.0);
                points.push([a, b * (1.0 - a)]);
                weights.push(0.25 * wa * wb * (1.0 - a));
            }
        }
        Self {
            order,
            dim: 2,
            points,
            weights,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Measure of the reference element.
    pub fn reference_measure(&self) -> f64 {
        if self.dim == 1 {
            1.0
        } else {
            0.5
        }
    }

    /// P1 basis values at a reference point.
    #[inline]
    pub fn basis(&self, pt: &[f64; 2]) -> [f64; 3] {
        if self.dim == 1 {
            [1.0 - pt[0], pt[0], 0.0]
        } else {
            [1.0 - pt[0] - pt[1], pt[0], pt[1]]
        }
    }

    /// Iterator over `(basis values, weight as a fraction of the element
    /// measure)`.
    pub fn iter(&self) -> impl Iterator<Item = ([f64; 3], f64)> + '_ {
        let m = self.reference_measure();
        self.points
            .iter()
            .zip(&self.weights)
            .map(move |(p, w)| (self.basis(p), w / m))
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}
