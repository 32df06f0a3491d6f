//! Discrete Steklov–Poincaré operators and the two equivalent interface
//! iterations: Robin–Robin on the subdomains and Peaceman–Rachford on the
//! interface traces.
//!
//! All interface operators are applied through the subdomain solves: `S_i η`
//! is the interface part of the residual of `F_i η`, so no operator is ever
//! assembled explicitly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{ConvergenceHistory, InitialRecord, IterationRecord, RunMetadata};
use crate::error::{check_len, Error, Result};
use crate::fem::{interface_mass, norm_w1p, InterfaceMass, Source};
use crate::mesh::{restrict, trace, Decomposition, DualTrace, FeFunction, Side, TraceVector};
use crate::pstructure::PStructure;
use crate::quadrature::Quadrature;
use crate::subsolver::{
    solve_dirichlet, solve_neumann, solve_robin, BoundaryMode, NewtonConfig, SubdomainProblem, SubdomainSolution,
};

/// A decomposed nonlinear problem: mesh split, nonlinearity, source,
/// quadrature and the interface mass matrix.
#[derive(Debug, Clone)]
pub struct DecomposedProblem {
    dec: Decomposition,
    ps: PStructure,
    source: Source,
    quad: Quadrature,
    mass: InterfaceMass,
}

impl DecomposedProblem {
    pub fn new(dec: Decomposition, ps: PStructure, source: Source, quad: Quadrature) -> Result<Self> {
        ps.check_exponents(dec.global().dim())?;
        if quad.dim() != dec.global().dim() {
            return Err(Error::invalid("quadrature dimension does not match the mesh"));
        }
        let mass = interface_mass(&dec, &quad)?;
        Ok(Self {
            dec,
            ps,
            source,
            quad,
            mass,
        })
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.dec
    }

    pub fn pstructure(&self) -> &PStructure {
        &self.ps
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quad
    }

    pub fn mass(&self) -> &InterfaceMass {
        &self.mass
    }

    pub fn n_interface(&self) -> usize {
        self.dec.n_interface()
    }

    pub fn subproblem(&self, side: Side, mode: BoundaryMode) -> SubdomainProblem<'_> {
        SubdomainProblem {
            dec: &self.dec,
            side,
            ps: &self.ps,
            source: &self.source,
            quad: &self.quad,
            mass: &self.mass,
            mode,
        }
    }

    /// `F_i η`.
    pub fn solve_dirichlet(
        &self,
        side: Side,
        eta: &TraceVector,
        cfg: &NewtonConfig,
        warm: Option<&FeFunction>,
    ) -> Result<SubdomainSolution> {
        check_len(self.n_interface(), eta.len())?;
        solve_dirichlet(&self.subproblem(side, BoundaryMode::Dirichlet(eta.clone())), cfg, warm)
    }

    /// Robin solve with datum `χ`; its trace is `(sJ + S_i)⁻¹ χ`.
    pub fn solve_robin(
        &self,
        side: Side,
        s: f64,
        chi: &DualTrace,
        cfg: &NewtonConfig,
        warm: Option<&FeFunction>,
    ) -> Result<SubdomainSolution> {
        solve_robin(&self.subproblem(side, BoundaryMode::Robin { s, chi: chi.clone() }), cfg, warm)
    }

    /// Trace `η` with `⟨S_i η, μ⟩ = 0` for all `μ`.
    pub fn natural_trace(&self, side: Side, cfg: &NewtonConfig) -> Result<SubdomainSolution> {
        let zero = DualTrace::zeros(self.n_interface());
        solve_neumann(&self.subproblem(side, BoundaryMode::Neumann(zero)), cfg, None)
    }

    /// `S_i η` as a dual vector: entry `k` is `a_i(F_i η, R_i μ_k) − (f_i, R_i μ_k)`.
    pub fn steklov_apply(&self, side: Side, eta: &TraceVector, cfg: &NewtonConfig) -> Result<DualTrace> {
        Ok(self.solve_dirichlet(side, eta, cfg, None)?.flux)
    }

    /// `S₁η + S₂η`.
    pub fn steklov_residual(&self, eta: &TraceVector, cfg: &NewtonConfig) -> Result<DualTrace> {
        let s1 = self.steklov_apply(Side::One, eta, cfg)?;
        let s2 = self.steklov_apply(Side::Two, eta, cfg)?;
        Ok(s1.combine(1.0, &s2, 1.0))
    }
}

/// Free-function form of [`DecomposedProblem::steklov_apply`].
pub fn steklov_apply(problem: &DecomposedProblem, side: Side, eta: &TraceVector, cfg: &NewtonConfig) -> Result<DualTrace> {
    problem.steklov_apply(side, eta, cfg)
}

/// Free-function form of [`DecomposedProblem::steklov_residual`].
pub fn steklov_residual(problem: &DecomposedProblem, eta: &TraceVector, cfg: &NewtonConfig) -> Result<DualTrace> {
    problem.steklov_residual(eta, cfg)
}

/// Current iterate on one side: `u = F_i η` and the cached `S_i η`.
#[derive(Debug, Clone)]
pub struct SideState {
    pub eta: TraceVector,
    pub u: FeFunction,
    pub flux: DualTrace,
    pub newton_iterations: usize,
}

impl SideState {
    fn from_solution(dec: &Decomposition, side: Side, sol: SubdomainSolution) -> Self {
        Self {
            eta: sol.trace(dec, side),
            flux: sol.flux,
            newton_iterations: sol.report.iterations,
            u: sol.u,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InterfaceState {
    pub n: usize,
    pub s: f64,
    /// `None` before the first sweep.
    pub one: Option<SideState>,
    pub two: SideState,
}

impl InterfaceState {
    /// State at `n = 0` with `u₂⁰ = F₂η₂⁰`.
    pub fn new(problem: &DecomposedProblem, s: f64, eta2: &TraceVector, cfg: &NewtonConfig) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::invalid(format!("Robin parameter s = {s} must be positive")));
        }
        let sol = problem
            .solve_dirichlet(Side::Two, eta2, cfg, None)
            .map_err(|e| e.at("initial Dirichlet solve on Ω2"))?;
        Ok(Self {
            n: 0,
            s,
            one: None,
            two: SideState::from_solution(problem.decomposition(), Side::Two, sol),
        })
    }

    pub fn eta1(&self) -> Option<&TraceVector> {
        self.one.as_ref().map(|s| &s.eta)
    }

    pub fn eta2(&self) -> &TraceVector {
        &self.two.eta
    }
}

/// One Robin–Robin sweep: a Robin solve on Ω₁ with datum `sJη₂ⁿ − S₂η₂ⁿ`,
/// then a Robin solve on Ω₂ with datum `sJη₁ⁿ⁺¹ − S₁η₁ⁿ⁺¹`. The `S_i` terms
/// are the interface residuals of the stored solutions unless
/// `strict_recompute` asks for fresh Dirichlet solves.
pub fn robin_robin_step(
    problem: &DecomposedProblem,
    state: &InterfaceState,
    cfg: &NewtonConfig,
    strict_recompute: bool,
) -> Result<InterfaceState> {
    let dec = problem.decomposition();
    let s = state.s;
    let n1 = state.n + 1;
    let flux2 = if strict_recompute {
        problem
            .solve_dirichlet(Side::Two, &state.two.eta, cfg, Some(&state.two.u))
            .map_err(|e| e.at(format!("recomputing S2 at n = {}", state.n)))?
            .flux
    } else {
        state.two.flux.clone()
    };
    let chi1 = problem.mass().apply(&state.two.eta).combine(s, &flux2, -1.0);
    let warm1 = state.one.as_ref().map(|o| &o.u);
    let sol1 = problem
        .solve_robin(Side::One, s, &chi1, cfg, warm1)
        .map_err(|e| e.at(format!("Robin half-step on Ω1, n = {n1}")))?;
    let one = SideState::from_solution(dec, Side::One, sol1);

    let flux1 = if strict_recompute {
        problem
            .solve_dirichlet(Side::One, &one.eta, cfg, Some(&one.u))
            .map_err(|e| e.at(format!("recomputing S1 at n = {n1}")))?
            .flux
    } else {
        one.flux.clone()
    };
    let chi2 = problem.mass().apply(&one.eta).combine(s, &flux1, -1.0);
    let sol2 = problem
        .solve_robin(Side::Two, s, &chi2, cfg, Some(&state.two.u))
        .map_err(|e| e.at(format!("Robin half-step on Ω2, n = {n1}")))?;
    let two = SideState::from_solution(dec, Side::Two, sol2);
    Ok(InterfaceState {
        n: n1,
        s,
        one: Some(one),
        two,
    })
}

/// One Peaceman–Rachford step on `L²(Γ)`:
/// `(sI + 𝒮₁)η₁ⁿ⁺¹ = (sI − 𝒮₂)η₂ⁿ`, `(sI + 𝒮₂)η₂ⁿ⁺¹ = (sI − 𝒮₁)η₁ⁿ⁺¹`,
/// with `𝒮_i = J⁻¹S_i` materialized from fresh Dirichlet solves and the
/// resolvents applied through Robin solves.
pub fn peaceman_rachford_step(
    problem: &DecomposedProblem,
    state: &InterfaceState,
    cfg: &NewtonConfig,
) -> Result<InterfaceState> {
    let dec = problem.decomposition();
    let mass = problem.mass();
    let s = state.s;
    let n1 = state.n + 1;

    let half = |from: Side, eta: &TraceVector, warm_from: &FeFunction, warm_to: Option<&FeFunction>| -> Result<SubdomainSolution> {
        let to = from.other();
        let s_eta = problem
            .solve_dirichlet(from, eta, cfg, Some(warm_from))
            .map_err(|e| e.at(format!("Dirichlet solve on {from}, n = {n1}")))?
            .flux;
        let l2_image = mass.riesz(&s_eta);
        let rhs = eta.combine(s, &l2_image, -1.0);
        problem
            .solve_robin(to, s, &mass.apply(&rhs), cfg, warm_to)
            .map_err(|e| e.at(format!("resolvent on {to}, n = {n1}")))
    };

    let sol1 = half(Side::Two, &state.two.eta, &state.two.u, state.one.as_ref().map(|o| &o.u))?;
    let one = SideState::from_solution(dec, Side::One, sol1);
    let sol2 = half(Side::One, &one.eta, &one.u, Some(&state.two.u))?;
    let two = SideState::from_solution(dec, Side::Two, sol2);
    Ok(InterfaceState {
        n: n1,
        s,
        one: Some(one),
        two,
    })
}

/// Reference quantities from the monolithic solution `u*`: its trace `η*`,
/// restrictions and `S_i η*`.
#[derive(Debug, Clone)]
pub struct Reference {
    pub eta: TraceVector,
    pub u_global: FeFunction,
    pub u: [FeFunction; 2],
    pub flux: [DualTrace; 2],
}

impl Reference {
    pub fn from_global(problem: &DecomposedProblem, u_global: &FeFunction, cfg: &NewtonConfig) -> Result<Self> {
        let dec = problem.decomposition();
        let u1 = restrict(dec, Side::One, u_global)?;
        let u2 = restrict(dec, Side::Two, u_global)?;
        let eta = trace(dec, Side::One, &u1)?;
        let f1 = problem.solve_dirichlet(Side::One, &eta, cfg, Some(&u1))?.flux;
        let f2 = problem.solve_dirichlet(Side::Two, &eta, cfg, Some(&u2))?.flux;
        Ok(Self {
            eta,
            u_global: u_global.clone(),
            u: [u1, u2],
            flux: [f1, f2],
        })
    }

    /// `μ = (sI + 𝒮₂)η*` and `λ = (sI − 𝒮₂)η*`.
    fn mu_lambda(&self, mass: &InterfaceMass, s: f64) -> (TraceVector, TraceVector) {
        mu_lambda(mass, s, &self.eta, &self.flux[1])
    }
}

fn mu_lambda(mass: &InterfaceMass, s: f64, eta: &TraceVector, flux: &DualTrace) -> (TraceVector, TraceVector) {
    let image = mass.riesz(flux);
    (eta.combine(s, &image, 1.0), eta.combine(s, &image, -1.0))
}

/// Start value `η₂⁰`.
#[derive(Debug, Clone)]
pub enum InitialTrace {
    /// Solution of `⟨S₂η₂⁰, μ⟩ = 0`.
    Natural,
    Zero,
    /// Uniform random values in `[-amplitude, amplitude]`.
    Random { seed: u64, amplitude: f64 },
    Given(TraceVector),
}

impl InitialTrace {
    pub fn resolve(&self, problem: &DecomposedProblem, cfg: &NewtonConfig) -> Result<TraceVector> {
        let n = problem.n_interface();
        match self {
            InitialTrace::Natural => {
                let sol = problem
                    .natural_trace(Side::Two, cfg)
                    .map_err(|e| e.at("solving S2 η = 0 for the initial trace"))?;
                Ok(sol.trace(problem.decomposition(), Side::Two))
            }
            InitialTrace::Zero => Ok(TraceVector::zeros(n)),
            InitialTrace::Random { seed, amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok(TraceVector::new((0..n).map(|_| rng.gen_range(-amplitude..=*amplitude)).collect()))
            }
            InitialTrace::Given(eta) => {
                check_len(n, eta.len())?;
                Ok(eta.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopCriteria {
    /// Bound on `‖η₁ⁿ − η₂ⁿ‖_{L²(Γ)}`.
    pub tol_gap: f64,
    pub max_outer: usize,
}

impl Default for StopCriteria {
    fn default() -> Self {
        Self {
            tol_gap: 1e-8,
            max_outer: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub s: f64,
    pub initial: InitialTrace,
    pub stop: StopCriteria,
    pub strict_recompute: bool,
    /// Iterate with [`peaceman_rachford_step`] instead of [`robin_robin_step`].
    pub peaceman_rachford: bool,
    /// Recorded in the metadata only.
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            s: 1.0,
            initial: InitialTrace::Natural,
            stop: StopCriteria::default(),
            strict_recompute: false,
            peaceman_rachford: false,
            seed: 0,
        }
    }
}

struct Tracker<'a> {
    problem: &'a DecomposedProblem,
    reference: Option<&'a Reference>,
    mu_lambda: Option<(TraceVector, TraceVector)>,
    s: f64,
}

impl Tracker<'_> {
    fn mu_lambda_errs(&self, eta2: &TraceVector, flux2: &DualTrace) -> (Option<f64>, Option<f64>) {
        match &self.mu_lambda {
            Some((mu, lam)) => {
                let mass = self.problem.mass();
                let (mun, lamn) = mu_lambda(mass, self.s, eta2, flux2);
                (Some(mass.distance(&mun, mu)), Some(mass.distance(&lamn, lam)))
            }
            None => (None, None),
        }
    }

    fn pairing(&self, side: Side, eta: &TraceVector, flux: &DualTrace) -> Option<f64> {
        self.reference.map(|r| {
            let i = side.index();
            flux.combine(1.0, &r.flux[i], -1.0).pair(&eta.combine(1.0, &r.eta, -1.0))
        })
    }

    fn record(&self, state: &InterfaceState) -> Result<IterationRecord> {
        let one = state.one.as_ref().expect("recorded after a sweep");
        let two = &state.two;
        let mass = self.problem.mass();
        let dec = self.problem.decomposition();
        let ps = self.problem.pstructure();
        let err_u = |side: Side, u: &FeFunction| -> Result<Option<f64>> {
            match self.reference {
                Some(r) => Ok(Some(norm_w1p(dec.mesh(side), &u.minus(&r.u[side.index()])?, ps)?)),
                None => Ok(None),
            }
        };
        let (mu_err, lambda_err) = self.mu_lambda_errs(&two.eta, &two.flux);
        Ok(IterationRecord {
            n: state.n,
            gap: mass.distance(&one.eta, &two.eta),
            err_eta1: self.reference.map(|r| mass.distance(&one.eta, &r.eta)),
            err_eta2: self.reference.map(|r| mass.distance(&two.eta, &r.eta)),
            err_u1: err_u(Side::One, &one.u)?,
            err_u2: err_u(Side::Two, &two.u)?,
            mu_err,
            lambda_err,
            newton1: one.newton_iterations,
            newton2: two.newton_iterations,
            pairing1: self.pairing(Side::One, &one.eta, &one.flux),
            pairing2: self.pairing(Side::Two, &two.eta, &two.flux),
        })
    }
}

/// Runs the interface iteration until the trace gap drops below `tol_gap` or
/// `max_outer` sweeps are done. Before the first sweep the run checks whether
/// `η₂⁰` already solves the interface equation (`‖𝒮η₂⁰‖ ≤ tol_gap`) and
/// stops at `n = 0` if so. Non-convergence is reported through
/// `converged = false`, not as an error.
pub fn run(
    problem: &DecomposedProblem,
    opts: &RunOptions,
    cfg: &NewtonConfig,
    reference: Option<&Reference>,
) -> Result<ConvergenceHistory> {
    run_with_state(problem, opts, cfg, reference).map(|(hist, _)| hist)
}

/// [`run`] that also returns the final state, or `None` when the run stopped
/// at `n = 0`.
pub fn run_with_state(
    problem: &DecomposedProblem,
    opts: &RunOptions,
    cfg: &NewtonConfig,
    reference: Option<&Reference>,
) -> Result<(ConvergenceHistory, Option<InterfaceState>)> {
    cfg.validate()?;
    if !(opts.stop.tol_gap > 0.0) || opts.stop.max_outer < 1 {
        return Err(Error::invalid("tol_gap must be positive and max_outer at least 1"));
    }
    let eta0 = opts.initial.resolve(problem, cfg)?;
    let mut state = InterfaceState::new(problem, opts.s, &eta0, cfg)?;
    let tracker = Tracker {
        problem,
        reference,
        mu_lambda: reference.map(|r| r.mu_lambda(problem.mass(), opts.s)),
        s: opts.s,
    };

    let flux1_0 = problem
        .solve_dirichlet(Side::One, &eta0, cfg, None)
        .map_err(|e| e.at("initial Dirichlet solve on Ω1"))?
        .flux;
    let flux_residual = problem.mass().norm(&problem.mass().riesz(&flux1_0.combine(1.0, &state.two.flux, 1.0)));
    let (mu0, lam0) = tracker.mu_lambda_errs(&state.two.eta, &state.two.flux);
    let initial = InitialRecord {
        flux_residual,
        mu_err: mu0,
        lambda_err: lam0,
        pairing2: tracker.pairing(Side::Two, &state.two.eta, &state.two.flux),
    };

    let dec = problem.decomposition();
    let meta = RunMetadata {
        preset: problem.pstructure().name().to_string(),
        p: problem.pstructure().p(),
        r: problem.pstructure().r(),
        s: opts.s,
        h: dec.global().mesh_width(),
        dim: dec.global().dim(),
        n_interface: dec.n_interface(),
        seed: opts.seed,
        newton_tol: cfg.tol,
        tol_gap: opts.stop.tol_gap,
        max_outer: opts.stop.max_outer,
        slack: 10.0 * cfg.tol,
    };
    let mut hist = ConvergenceHistory {
        meta,
        initial,
        records: Vec::new(),
        converged: false,
        converged_at: None,
    };
    if flux_residual <= opts.stop.tol_gap {
        hist.converged = true;
        hist.converged_at = Some(0);
        return Ok((hist, None));
    }
    while state.n < opts.stop.max_outer {
        state = if opts.peaceman_rachford {
            peaceman_rachford_step(problem, &state, cfg)?
        } else {
            robin_robin_step(problem, &state, cfg, opts.strict_recompute)?
        };
        let rec = tracker.record(&state)?;
        let done = rec.gap <= opts.stop.tol_gap;
        hist.records.push(rec);
        if done {
            hist.converged = true;
            hist.converged_at = Some(state.n);
            break;
        }
    }
    Ok((hist, Some(state)))
}
