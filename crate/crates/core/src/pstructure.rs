//! Nonlinearities `(α, g)` with p-structure and a sampling certifier for the
//! growth, monotonicity and coercivity bounds they are required to satisfy.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when comparing sampled ratios against the stored constants.
pub const CERTIFICATION_TOL: f64 = 1e-12;

/// User-supplied flux `α : R^d → R^d`.
pub trait FluxFn: Send + Sync {
    fn eval(&self, z: &[f64], out: &mut [f64]);
    /// Row-major `d × d` derivative. `eps_reg` may be used to regularize
    /// degenerate points.
    fn jacobian(&self, z: &[f64], eps_reg: f64, out: &mut [f64]);
}

/// User-supplied reaction term `g : R → R`.
pub trait ReactionFn: Send + Sync {
    fn eval(&self, x: f64) -> f64;
    fn derivative(&self, x: f64, eps_reg: f64) -> f64;
}

#[derive(Clone)]
pub enum Flux {
    /// `α(z) = |z|^{p-2} z`.
    PLaplacian { p: f64 },
    Custom(Arc<dyn FluxFn>),
}

#[derive(Clone)]
pub enum Reaction {
    /// `g(x) = λ x`.
    Linear { lambda: f64 },
    /// `g(x) = λ |x|^{q-2} x`.
    Power { lambda: f64, q: f64 },
    Custom(Arc<dyn ReactionFn>),
}

impl fmt::Debug for Flux {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Flux::PLaplacian { p } => write!(f, "PLaplacian {{ p: {p} }}"),
            Flux::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl fmt::Debug for Reaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reaction::Linear { lambda } => write!(f, "Linear {{ lambda: {lambda} }}"),
            Reaction::Power { lambda, q } => write!(f, "Power {{ lambda: {lambda}, q: {q} }}"),
            Reaction::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// Constants of the growth (`C1`, `C2`), monotonicity (`c1`, `c3`) and
/// coercivity (`c2`, `c4`) bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureConstants {
    pub flux_growth: f64,
    pub reaction_growth: f64,
    pub flux_monotonicity: f64,
    pub flux_coercivity: f64,
    pub reaction_monotonicity: f64,
    pub reaction_coercivity: f64,
}

#[derive(Debug, Clone)]
pub struct PStructure {
    name: String,
    p: f64,
    r: f64,
    flux: Flux,
    reaction: Reaction,
    constants: StructureConstants,
}

fn finite(v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("non-finite value {v}")))
    }
}

impl PStructure {
    /// `-Δ_p u + λu = f`: p-Laplacian flux with linear reaction, `r = 2`.
    pub fn resolvent(p: f64, lambda: f64) -> Result<Self> {
        check_preset(p, lambda)?;
        let c1 = 2f64.powf(2.0 - p);
        Self::custom(
            "resolvent",
            p,
            2.0,
            Flux::PLaplacian { p },
            Reaction::Linear { lambda },
            StructureConstants {
                flux_growth: 1.0,
                reaction_growth: lambda,
                flux_monotonicity: c1,
                flux_coercivity: 1.0,
                reaction_monotonicity: lambda,
                reaction_coercivity: lambda,
            },
        )
    }

    /// `-Δ_p u + λ|u|^{p-2}u = f`, `r = p`.
    pub fn reaction(p: f64, lambda: f64) -> Result<Self> {
        check_preset(p, lambda)?;
        let c1 = 2f64.powf(2.0 - p);
        Self::custom(
            "reaction",
            p,
            p,
            Flux::PLaplacian { p },
            Reaction::Power { lambda, q: p },
            StructureConstants {
                flux_growth: 1.0,
                reaction_growth: lambda,
                flux_monotonicity: c1,
                flux_coercivity: 1.0,
                reaction_monotonicity: lambda * c1,
                reaction_coercivity: lambda,
            },
        )
    }

    /// `-Δu + λu = f`.
    pub fn linear(lambda: f64) -> Result<Self> {
        let mut ps = Self::resolvent(2.0, lambda)?;
        ps.name = "linear".into();
        Ok(ps)
    }

    /// Builds a structure from arbitrary nonlinearities. The constants are
    /// taken at face value; use [`certify_p_structure`] to check them.
    pub fn custom(
        name: impl Into<String>,
        p: f64,
        r: f64,
        flux: Flux,
        reaction: Reaction,
        constants: StructureConstants,
    ) -> Result<Self> {
        if !(p >= 2.0 && p.is_finite()) {
            return Err(Error::invalid(format!("p = {p} must lie in [2, ∞)")));
        }
        if !(r > 1.0 && r.is_finite()) {
            return Err(Error::invalid(format!("r = {r} must lie in (1, ∞)")));
        }
        let c = constants;
        let growth_ok = c.flux_growth >= 0.0 && c.reaction_growth >= 0.0;
        let lower_ok = [
            c.flux_monotonicity,
            c.flux_coercivity,
            c.reaction_monotonicity,
            c.reaction_coercivity,
        ]
        .iter()
        .all(|&v| v > 0.0);
        if !growth_ok || !lower_ok {
            return Err(Error::invalid(
                "growth constants must be ≥ 0 and monotonicity/coercivity constants > 0",
            ));
        }
        Ok(Self {
            name: name.into(),
            p,
            r,
            flux,
            reaction,
            constants,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn flux(&self) -> &Flux {
        &self.flux
    }

    pub fn reaction_term(&self) -> &Reaction {
        &self.reaction
    }

    pub fn constants(&self) -> &StructureConstants {
        &self.constants
    }

    /// Checks the exponent restriction `r ≤ dp/(2(d−p)) + 1` when `p < d`.
    pub fn check_exponents(&self, dim: usize) -> Result<()> {
        let d = dim as f64;
        if self.p < d {
            let bound = d * self.p / (2.0 * (d - self.p)) + 1.0;
            if self.r > bound {
                return Err(Error::invalid(format!(
                    "r = {} exceeds {bound} required for p = {} < d = {dim}",
                    self.r, self.p
                )));
            }
        }
        Ok(())
    }

    /// Unchecked flux evaluation into `out`.
    #[inline]
    pub fn flux_into(&self, z: &[f64], out: &mut [f64]) {
        match &self.flux {
            Flux::PLaplacian { p } => {
                let m2: f64 = z.iter().map(|v| v * v).sum();
                let scale = if *p == 2.0 {
                    1.0
                } else if m2 == 0.0 {
                    0.0
                } else {
                    m2.powf(0.5 * (p - 2.0))
                };
                for (o, v) in out.iter_mut().zip(z) {
                    *o = scale * v;
                }
            }
            Flux::Custom(f) => f.eval(z, out),
        }
    }

    /// Unchecked row-major flux Jacobian into `out`.
    #[inline]
    pub fn flux_jacobian_into(&self, z: &[f64], eps_reg: f64, out: &mut [f64]) {
        match &self.flux {
            Flux::PLaplacian { p } => {
                let d = z.len();
                let m2 = z.iter().map(|v| v * v).sum::<f64>() + eps_reg * eps_reg;
                out.iter_mut().for_each(|o| *o = 0.0);
                if *p == 2.0 {
                    for i in 0..d {
                        out[i * d + i] = 1.0;
                    }
                    return;
                }
                if m2 == 0.0 {
                    return;
                }
                let scale = m2.powf(0.5 * (p - 2.0));
                for i in 0..d {
                    for j in 0..d {
                        let delta = if i == j { 1.0 } else { 0.0 };
                        out[i * d + j] = scale * (delta + (p - 2.0) * z[i] * z[j] / m2);
                    }
                }
            }
            Flux::Custom(f) => f.jacobian(z, eps_reg, out),
        }
    }

    #[inline]
    pub fn reaction_value(&self, x: f64) -> f64 {
        match &self.reaction {
            Reaction::Linear { lambda } => lambda * x,
            Reaction::Power { lambda, q } => {
                if x == 0.0 {
                    0.0
                } else {
                    lambda * x.abs().powf(q - 2.0) * x
                }
            }
            Reaction::Custom(g) => g.eval(x),
        }
    }

    /// `g'(x)`, with `|x|` replaced by `sqrt(x² + eps²)` for power reactions.
    #[inline]
    pub fn reaction_derivative_reg(&self, x: f64, eps_reg: f64) -> f64 {
        match &self.reaction {
            Reaction::Linear { lambda } => *lambda,
            Reaction::Power { lambda, q } => {
                if *q == 2.0 {
                    return *lambda;
                }
                let m2 = x * x + eps_reg * eps_reg;
                if m2 == 0.0 {
                    0.0
                } else {
                    lambda * (q - 1.0) * m2.powf(0.5 * (q - 2.0))
                }
            }
            Reaction::Custom(g) => g.derivative(x, eps_reg),
        }
    }
}

fn check_preset(p: f64, lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("λ = {lambda} must be positive")));
    }
    if !(p >= 2.0 && p.is_finite()) {
        return Err(Error::invalid(format!("p = {p} must lie in [2, ∞)")));
    }
    Ok(())
}

/// `α(z)`.
pub fn alpha_eval(ps: &PStructure, z: &[f64]) -> Result<Vec<f64>> {
    z.iter().try_for_each(|&v| finite(v))?;
    let mut out = vec![0.0; z.len()];
    ps.flux_into(z, &mut out);
    Ok(out)
}

/// `Dα(z)` as a row-major `d × d` matrix, regularized by `eps_reg`.
pub fn alpha_jacobian(ps: &PStructure, z: &[f64], eps_reg: f64) -> Result<Vec<f64>> {
    z.iter().try_for_each(|&v| finite(v))?;
    if !(eps_reg >= 0.0) {
        return Err(Error::invalid("eps_reg must be non-negative"));
    }
    let mut out = vec![0.0; z.len() * z.len()];
    ps.flux_jacobian_into(z, eps_reg, &mut out);
    Ok(out)
}

pub fn g_eval(ps: &PStructure, x: f64) -> Result<f64> {
    finite(x)?;
    Ok(ps.reaction_value(x))
}

pub fn g_derivative(ps: &PStructure, x: f64) -> Result<f64> {
    finite(x)?;
    Ok(ps.reaction_derivative_reg(x, 0.0))
}

/// Worst sampled ratio for one bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundCheck {
    pub bound: String,
    /// Max ratio for growth bounds, min ratio for lower bounds.
    pub worst_ratio: f64,
    pub constant: f64,
    /// `constant - worst` for growth bounds, `worst - constant` otherwise.
    pub margin: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificationReport {
    pub preset: String,
    pub samples: usize,
    pub seed: u64,
    pub half_width: f64,
    pub checks: Vec<BoundCheck>,
    /// Smallest raw `(α(z)−α(z̃))·(z−z̃)` seen; must be ≥ 0 with no tolerance.
    pub min_flux_pairing: f64,
    /// Smallest raw `α(z)·z` seen.
    pub min_flux_product: f64,
}

impl CertificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed) && self.min_flux_pairing >= 0.0 && self.min_flux_product >= 0.0
    }

    pub fn check(&self, bound: &str) -> Option<&BoundCheck> {
        self.checks.iter().find(|c| c.bound == bound)
    }
}

struct Tracker {
    bound: &'static str,
    constant: f64,
    upper: bool,
    worst: f64,
}

impl Tracker {
    fn new(bound: &'static str, constant: f64, upper: bool) -> Self {
        let worst = if upper { f64::NEG_INFINITY } else { f64::INFINITY };
        Self {
            bound,
            constant,
            upper,
            worst,
        }
    }

    fn observe(&mut self, ratio: f64, sample: &[f64]) -> Result<()> {
        let violated = if self.upper {
            ratio > self.constant + CERTIFICATION_TOL
        } else {
            ratio < self.constant - CERTIFICATION_TOL
        };
        if violated || !ratio.is_finite() {
            return Err(Error::BoundViolated {
                bound: self.bound,
                ratio,
                constant: self.constant,
                sample: sample.to_vec(),
            });
        }
        self.worst = if self.upper {
            self.worst.max(ratio)
        } else {
            self.worst.min(ratio)
        };
        Ok(())
    }

    fn finish(self) -> BoundCheck {
        let margin = if self.upper {
            self.constant - self.worst
        } else {
            self.worst - self.constant
        };
        BoundCheck {
            bound: self.bound.to_string(),
            worst_ratio: self.worst,
            constant: self.constant,
            margin,
            passed: margin >= -CERTIFICATION_TOL,
        }
    }
}

/// Samples `sample_count` pairs `(z, z̃)` in `[-h, h]^dim` and pairs `(x, x̃)`
/// in `[-h, h]`, and checks the six p-structure inequalities against the
/// stored constants. Pairs closer than `1e-6` are redrawn.
pub fn certify_p_structure(
    ps: &PStructure,
    dim: usize,
    sample_count: usize,
    seed: u64,
    half_width: f64,
) -> Result<CertificationReport> {
    if sample_count == 0 {
        return Err(Error::invalid("sample_count must be at least 1"));
    }
    if dim == 0 || !(half_width > 0.0) {
        return Err(Error::invalid("dimension and box half-width must be positive"));
    }
    ps.check_exponents(dim)?;
    let (p, r) = (ps.p, ps.r);
    let c = ps.constants;
    let mut growth_flux = Tracker::new("flux_growth", c.flux_growth, true);
    let mut growth_reac = Tracker::new("reaction_growth", c.reaction_growth, true);
    let mut mono_flux = Tracker::new("flux_monotonicity", c.flux_monotonicity, false);
    let mut coer_flux = Tracker::new("flux_coercivity", c.flux_coercivity, false);
    let mut mono_reac = Tracker::new("reaction_monotonicity", c.reaction_monotonicity, false);
    let mut coer_reac = Tracker::new("reaction_coercivity", c.reaction_coercivity, false);

    // Growth bounds force α(0) = 0 and g(0) = 0.
    let zero = vec![0.0; dim];
    let mut a0 = vec![0.0; dim];
    ps.flux_into(&zero, &mut a0);
    if a0.iter().any(|v| *v != 0.0) {
        return Err(Error::BoundViolated {
            bound: "flux_growth",
            ratio: f64::INFINITY,
            constant: c.flux_growth,
            sample: zero,
        });
    }
    if ps.reaction_value(0.0) != 0.0 {
        return Err(Error::BoundViolated {
            bound: "reaction_growth",
            ratio: f64::INFINITY,
            constant: c.reaction_growth,
            sample: vec![0.0],
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-half_width..=half_width)).collect()
    };
    let mut min_pairing = f64::INFINITY;
    let mut min_product = f64::INFINITY;
    let mut az = vec![0.0; dim];
    let mut azt = vec![0.0; dim];
    for _ in 0..sample_count {
        let (z, zt) = loop {
            let z = draw(&mut rng, dim);
            let zt = draw(&mut rng, dim);
            let d2: f64 = z.iter().zip(&zt).map(|(a, b)| (a - b) * (a - b)).sum();
            let n2: f64 = z.iter().map(|a| a * a).sum();
            if d2.sqrt() > 1e-6 && n2.sqrt() > 1e-6 {
                break (z, zt);
            }
        };
        let (x, xt) = loop {
            let x = draw(&mut rng, 1)[0];
            let xt = draw(&mut rng, 1)[0];
            if (x - xt).abs() > 1e-6 && x.abs() > 1e-6 {
                break (x, xt);
            }
        };
        ps.flux_into(&z, &mut az);
        ps.flux_into(&zt, &mut azt);
        let zn: f64 = z.iter().map(|a| a * a).sum::<f64>().sqrt();
        let dn: f64 = z.iter().zip(&zt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let an: f64 = az.iter().map(|a| a * a).sum::<f64>().sqrt();
        let pairing: f64 = az
            .iter()
            .zip(&azt)
            .zip(z.iter().zip(&zt))
            .map(|((a, at), (v, vt))| (a - at) * (v - vt))
            .sum();
        let product: f64 = az.iter().zip(&z).map(|(a, v)| a * v).sum();
        min_pairing = min_pairing.min(pairing);
        min_product = min_product.min(product);

        let mut sample = z.clone();
        sample.extend_from_slice(&zt);
        growth_flux.observe(an / zn.powf(p - 1.0), &z)?;
        mono_flux.observe(pairing / dn.powf(p), &sample)?;
        coer_flux.observe(product / zn.powf(p), &z)?;

        let (gx, gxt) = (ps.reaction_value(x), ps.reaction_value(xt));
        growth_reac.observe(gx.abs() / x.abs().powf(r - 1.0), &[x])?;
        mono_reac.observe((gx - gxt) * (x - xt) / (x - xt).abs().powf(r), &[x, xt])?;
        coer_reac.observe(gx * x / x.abs().powf(r), &[x])?;
    }

    Ok(CertificationReport {
        preset: ps.name.clone(),
        samples: sample_count,
        seed,
        half_width,
        checks: vec![
            growth_flux.finish(),
            growth_reac.finish(),
            mono_flux.finish(),
            coer_flux.finish(),
            mono_reac.finish(),
            coer_reac.finish(),
        ],
        min_flux_pairing: min_pairing,
        min_flux_product: min_product,
    })
}
