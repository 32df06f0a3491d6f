//! Experiment configuration (TOML) and its translation into solver inputs.

use std::path::{Path, PathBuf};

use robin_dd::mesh::{build_interval_mesh, build_rect_mesh, decompose, Axis, Mesh};
use robin_dd::{DecomposedProblem, InitialTrace, NewtonConfig, PStructure, Quadrature, RunOptions, Source, StopCriteria};
use serde::{Deserialize, Serialize};

use crate::expr::Expr;
use crate::CliError;

pub const OUTPUT_ROOT_ENV: &str = "ROBIN_DD_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub problem: ProblemSection,
    pub mesh: MeshSection,
    #[serde(default)]
    pub method: MethodSection,
    #[serde(default)]
    pub newton: NewtonConfig,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Linear,
    Resolvent,
    Reaction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub preset: Preset,
    #[serde(default = "two")]
    pub p: f64,
    /// Optional consistency check against the preset's reaction exponent.
    pub r: Option<f64>,
    #[serde(default = "one")]
    pub lambda: f64,
    /// Expression in `x`, `y`.
    pub source: Option<String>,
    /// Manufactured solution id; sets the source and enables the
    /// discretization-error report.
    pub manufactured: Option<String>,
    #[serde(default = "default_quadrature")]
    pub quadrature_order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub d: usize,
    #[serde(default = "one")]
    pub lx: f64,
    #[serde(default = "one")]
    pub ly: f64,
    pub n: usize,
    pub ny: Option<usize>,
    #[serde(default)]
    pub axis: AxisName,
    pub cut: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisName {
    #[default]
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Eta0 {
    #[default]
    Natural,
    Zero,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodSection {
    pub s: f64,
    pub tol_gap: f64,
    pub max_outer: usize,
    pub eta0: Eta0,
    pub eta0_amplitude: f64,
    pub seed: u64,
    pub strict_recompute: bool,
    pub peaceman_rachford: bool,
    /// Bound on the final monotone pairings.
    pub pairing_tol: f64,
}

impl Default for MethodSection {
    fn default() -> Self {
        Self {
            s: 1.0,
            tol_gap: 1e-6,
            max_outer: 200,
            eta0: Eta0::Natural,
            eta0_amplitude: 1.0,
            seed: 0,
            strict_recompute: false,
            peaceman_rachford: false,
            pairing_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

fn default_quadrature() -> usize {
    robin_dd::quadrature::DEFAULT_ORDER
}

/// Exact solution data of a manufactured problem.
pub struct Manufactured {
    pub exact: fn([f64; 2]) -> f64,
    pub exact_grad: fn([f64; 2]) -> [f64; 2],
}

/// Everything a run needs, built from a validated [`Config`].
pub struct Built {
    pub mesh: Mesh,
    pub problem: DecomposedProblem,
    pub options: RunOptions,
    pub newton: NewtonConfig,
    pub manufactured: Option<Manufactured>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let m = &self.method;
        if !(m.s > 0.0 && m.s.is_finite()) {
            return bad(format!("[method] s = {} must be positive", m.s));
        }
        if !(m.tol_gap > 0.0) {
            return bad(format!("[method] tol_gap = {} must be positive", m.tol_gap));
        }
        if m.max_outer < 1 {
            return bad("[method] max_outer must be at least 1".into());
        }
        if !(m.pairing_tol > 0.0) {
            return bad("[method] pairing_tol must be positive".into());
        }
        self.newton.validate().map_err(|e| CliError::Config(format!("[newton] {e}")))?;
        if !matches!(self.mesh.d, 1 | 2) {
            return bad(format!("[mesh] d = {} must be 1 or 2", self.mesh.d));
        }
        match (&self.problem.source, &self.problem.manufactured) {
            (Some(_), Some(_)) => return bad("[problem] give either source or manufactured, not both".into()),
            (None, None) => return bad("[problem] needs a source expression or a manufactured id".into()),
            _ => {}
        }
        if let Some(src) = &self.problem.source {
            src.parse::<Expr>().map_err(|e| CliError::Config(format!("[problem] source: {e}")))?;
        }
        self.pstructure()?;
        Ok(())
    }

    pub fn pstructure(&self) -> Result<PStructure, CliError> {
        let pb = &self.problem;
        let ps = match pb.preset {
            Preset::Linear => {
                if pb.p != 2.0 {
                    return Err(CliError::Config(format!("[problem] the linear preset needs p = 2, got {}", pb.p)));
                }
                PStructure::linear(pb.lambda)
            }
            Preset::Resolvent => PStructure::resolvent(pb.p, pb.lambda),
            Preset::Reaction => PStructure::reaction(pb.p, pb.lambda),
        }
        .map_err(|e| CliError::Config(format!("[problem] {e}")))?;
        if let Some(r) = pb.r {
            if r != ps.r() {
                return Err(CliError::Config(format!(
                    "[problem] r = {r} does not match the {} preset (r = {})",
                    ps.name(),
                    ps.r()
                )));
            }
        }
        Ok(ps)
    }

    fn source(&self, ps: &PStructure) -> Result<(Source, Option<Manufactured>), CliError> {
        if let Some(text) = &self.problem.source {
            let e: Expr = text.parse().map_err(|e| CliError::Config(format!("[problem] source: {e}")))?;
            return Ok((Source::new(move |x| e.eval(x)), None));
        }
        let id = self.problem.manufactured.as_deref().unwrap_or_default();
        match id {
            // u = x(1 − x) on (0, 1): −(|u'|^{p−2}u')' = 2(p − 1)|1 − 2x|^{p−2}.
            "parabola" => {
                if self.mesh.d != 1 || self.mesh.lx != 1.0 {
                    return Err(CliError::Config("manufactured `parabola` needs d = 1 and lx = 1".into()));
                }
                let p = ps.p();
                let ps = ps.clone();
                let f = Source::new(move |x| {
                    let u = x[0] * (1.0 - x[0]);
                    2.0 * (p - 1.0) * (1.0 - 2.0 * x[0]).abs().powf(p - 2.0) + ps.reaction_value(u)
                });
                Ok((
                    f,
                    Some(Manufactured {
                        exact: |x| x[0] * (1.0 - x[0]),
                        exact_grad: |x| [1.0 - 2.0 * x[0], 0.0],
                    }),
                ))
            }
            other => Err(CliError::Config(format!("[problem] unknown manufactured id `{other}`"))),
        }
    }

    pub fn build(&self) -> Result<Built, CliError> {
        self.validate()?;
        let ps = self.pstructure()?;
        let (source, manufactured) = self.source(&ps)?;
        let ms = &self.mesh;
        let mesh = match ms.d {
            1 => build_interval_mesh(0.0, ms.lx, ms.n),
            _ => build_rect_mesh(ms.lx, ms.ly, ms.n, ms.ny.unwrap_or(ms.n)),
        }
        .map_err(|e| CliError::Config(format!("[mesh] {e}")))?;
        let (axis, extent) = match ms.axis {
            AxisName::X => (Axis::X, ms.lx),
            AxisName::Y => (Axis::Y, ms.ly),
        };
        let cut = ms.cut.unwrap_or(0.5 * extent);
        let dec = decompose(&mesh, axis, cut).map_err(|e| CliError::Config(format!("[mesh] {e}")))?;
        let quad = Quadrature::new(ms.d, self.problem.quadrature_order)
            .map_err(|e| CliError::Config(format!("[problem] quadrature_order: {e}")))?;
        let problem = DecomposedProblem::new(dec, ps, source, quad).map_err(|e| CliError::Config(e.to_string()))?;
        let m = &self.method;
        let initial = match m.eta0 {
            Eta0::Natural => InitialTrace::Natural,
            Eta0::Zero => InitialTrace::Zero,
            Eta0::Random => InitialTrace::Random {
                seed: m.seed,
                amplitude: m.eta0_amplitude,
            },
        };
        let options = RunOptions {
            s: m.s,
            initial,
            stop: StopCriteria {
                tol_gap: m.tol_gap,
                max_outer: m.max_outer,
            },
            strict_recompute: m.strict_recompute,
            peaceman_rachford: m.peaceman_rachford,
            seed: m.seed,
        };
        Ok(Built {
            mesh,
            problem,
            options,
            newton: self.newton,
            manufactured,
        })
    }

    /// Output directory, placed under `$ROBIN_DD_OUTPUT_ROOT` when that is set
    /// and the configured path is relative.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output.dir.is_relative() => PathBuf::from(root).join(&self.output.dir),
            _ => self.output.dir.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[problem]
preset = "reaction"
p = 3.0
source = "1 + x"

[mesh]
d = 2
n = 4
"#;

    #[test]
    fn defaults_fill_in() {
        let c = Config::parse(BASE).unwrap();
        assert_eq!(c.method.s, 1.0);
        assert_eq!(c.newton, NewtonConfig::default());
        assert_eq!(c.mesh.axis, AxisName::X);
        let b = c.build().unwrap();
        assert_eq!(b.problem.n_interface(), 3);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let with = |extra: &str| Config::parse(&format!("{BASE}\n{extra}"));
        assert!(with("[method]\ns = -1.0").is_err());
        assert!(with("[method]\ntol_gap = 0.0").is_err());
        assert!(with("[newton]\ndamping = 1.5").is_err());
        assert!(with("[output]\nbogus = 1").is_err());
        assert!(Config::parse(&BASE.replace("1 + x", "1 + ")).is_err());
        assert!(Config::parse(&BASE.replace("p = 3.0", "p = 1.5")).is_err());
        assert!(Config::parse(&BASE.replace("\"reaction\"", "\"linear\"")).is_err());
        assert!(Config::parse(&BASE.replace("n = 4", "n = 4\ncut = 0.3")).unwrap().build().is_err());
    }

    #[test]
    fn exponent_consistency_is_checked() {
        assert!(Config::parse(&BASE.replace("p = 3.0", "p = 3.0\nr = 2.0")).is_err());
        assert!(Config::parse(&BASE.replace("p = 3.0", "p = 3.0\nr = 3.0")).is_ok());
    }

    #[test]
    fn manufactured_source_matches_the_closed_form() {
        let text = r#"
[problem]
preset = "resolvent"
p = 3.0
manufactured = "parabola"

[mesh]
d = 1
n = 8
"#;
        let c = Config::parse(text).unwrap();
        let ps = c.pstructure().unwrap();
        let (f, m) = c.source(&ps).unwrap();
        assert!(m.is_some());
        for x in [0.1f64, 0.5, 0.8] {
            let want = 4.0 * (1.0 - 2.0 * x).abs() + x * (1.0 - x);
            assert!((f.eval([x, 0.0]) - want).abs() < 1e-14);
        }
        assert!(Config::parse(&text.replace("d = 1", "d = 2")).unwrap().build().is_err());
    }
}
