//! Scenario files, the built-in catalog and the `verify → synthesize → simulate → certify`
//! pipeline.
//!
//! A scenario is a TOML document. The model is either a built-in (`[model] builtin = "…"`)
//! or inline coefficient expressions (`[model.inline]`); see the README for the full schema.

mod builtins;
mod model;
mod run;

pub use builtins::{builtin_scenario, list_builtins, BuiltinInfo};
pub use model::{compile_target, Model, RateFn};
pub use run::{
    run, CertificateOutcome, RunOutcome, RunReport, StageError, StageTiming, SynthesisSummary,
};

use crate::model::ControlSetSpec;
use crate::verifier::{ConditionId, Tolerances};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Verify,
    Synthesize,
    Simulate,
    Certify,
}

fn all_stages() -> Vec<Stage> {
    vec![
        Stage::Verify,
        Stage::Synthesize,
        Stage::Simulate,
        Stage::Certify,
    ]
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    #[serde(default = "all_stages")]
    pub stages: Vec<Stage>,
    pub model: ModelSpec,
    pub tolerances: ToleranceSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verify: Vec<VerifySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesis: Option<SynthesisSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<TargetSpec>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub certify: CertifySpec,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    /// Overrides of built-in parameters.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inline: Option<InlineModel>,
}

/// Coefficients as expressions over `states`, `controls` and `constants`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineModel {
    pub states: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub controls: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub constants: BTreeMap<String, f64>,
    /// One expression per state coordinate. Omit when `affine` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<String>>,
    /// `N` rows of `M` expressions. Omit when `affine` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispersion: Option<Vec<Vec<String>>>,
    #[serde(default = "ControlSetSpec::uncontrolled")]
    pub control_set: ControlSetSpec,
    pub lyapunov: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov_gradient: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov_hessian: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affine: Option<AffineSpec>,
}

/// `dX = (f + Σ αᵢ gᵢ) dt + (σ + α_P τ) dB`; expressions are over the state only.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineSpec {
    pub f: Vec<String>,
    pub g: Vec<Vec<String>>,
    pub sigma: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_box: Option<Vec<[f64; 2]>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    pub orth_tol: f64,
    pub margin_tol: f64,
    #[serde(default = "default_boundary_tol")]
    pub boundary_tol: f64,
}

fn default_boundary_tol() -> f64 {
    1e-6
}

impl From<ToleranceSpec> for Tolerances {
    fn from(t: ToleranceSpec) -> Self {
        Tolerances {
            orth_tol: t.orth_tol,
            margin_tol: t.margin_tol,
            boundary_tol: t.boundary_tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SamplerSpec {
    Annulus {
        r_min: f64,
        r_max: f64,
        count: usize,
    },
    Points {
        points: Vec<Vec<f64>>,
    },
    /// Points on the sphere `|x| = radius` (deterministic directions).
    Sphere {
        radius: f64,
        count: usize,
    },
}

fn one() -> f64 {
    1.0
}

fn is_zero(v: &u64) -> bool {
    *v == 0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    pub condition: ConditionId,
    /// Rate of the exponential condition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub sampler: SamplerSpec,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub seed: u64,
    /// `M` for set conditions, `K` (a sublevel set) for viability.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set: Option<TargetSpec>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub min_pass_fraction: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthesisMethod {
    /// Single-input formula when the system has one input and no controlled noise.
    #[default]
    Auto,
    Single,
    Multi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub r_min: f64,
    pub r_max: f64,
    pub count: usize,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturationSpec {
    pub r0: f64,
    pub probes: usize,
    pub levels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSpec {
    #[serde(default, skip_serializing_if = "is_default")]
    pub method: SynthesisMethod,
    pub probes: ProbeSpec,
    /// Decrease slack at the probes; defaults to `tolerances.margin_tol`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<SaturationSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlMode {
    /// The synthesized feedback `(k, h)`.
    Synthesized,
    /// `k ≡ 0, h ≡ 0` on the affine system.
    Zero,
    /// Grid witness of the constrained Hamiltonian of the Lyapunov candidate.
    Witness,
    Fixed(usize),
    Schedule {
        breakpoints: Vec<f64>,
        indices: Vec<usize>,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DumpLayout {
    #[default]
    PerPath,
    Long,
    None,
}

fn default_dump_paths() -> usize {
    10
}

fn default_blowup() -> f64 {
    1e6
}

fn default_sections() -> usize {
    11
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub dt: f64,
    pub horizon: f64,
    pub paths: usize,
    pub master_seed: u64,
    pub x0: Vec<f64>,
    pub control: ControlMode,
    #[serde(default, skip_serializing_if = "is_default")]
    pub layout: DumpLayout,
    /// How many paths (from index 0) are written as CSV.
    #[serde(default = "default_dump_paths")]
    pub dump_paths: usize,
    #[serde(default = "default_blowup")]
    pub blowup_bound: f64,
    /// Grid times at which the cross-path spread of `V` is recorded.
    #[serde(default = "default_sections")]
    pub cross_sections: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetSpec {
    Origin,
    Ball {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        radius: f64,
    },
    ExteriorBall {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        radius: f64,
    },
    /// `{W ≤ level}`; `W` defaults to the model's Lyapunov candidate.
    Sublevel {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        function: Option<String>,
        level: f64,
    },
    /// `{|d(x)| ≤ tolerance}`.
    ZeroSet {
        function: String,
        #[serde(default)]
        tolerance: f64,
    },
}

fn default_cert_tol() -> f64 {
    0.05
}

fn default_min_fraction() -> f64 {
    0.99
}

fn default_angular() -> usize {
    360
}

fn default_boundary_samples() -> usize {
    720
}

fn default_paths_per_state() -> usize {
    100
}

fn default_factor() -> f64 {
    10.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySpec {
    #[serde(default = "default_cert_tol")]
    pub cert_tol: f64,
    #[serde(default = "default_min_fraction")]
    pub min_fraction: f64,
    /// Radii of the comparison envelopes.
    pub radii: Vec<f64>,
    #[serde(default = "default_angular")]
    pub angular_samples: usize,
    /// When set, the fraction of paths ending within this radius is also required.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conv_radius: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecreaseSpec {
    /// Bound on `C = violation / √dt`; the discretized supermartingale defect scales with `√dt`.
    pub max_scaled_violation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentialSpec {
    pub expected: f64,
    pub rel_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetBoundSpec {
    pub target: usize,
    pub rate_floor: f64,
    #[serde(default = "default_boundary_samples")]
    pub boundary_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttractorSpec {
    pub set: TargetSpec,
    pub max_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseFreeSpec {
    #[serde(default = "default_factor")]
    pub factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReachBracketSpec {
    pub target: usize,
    pub t: f64,
    pub rate_floor: f64,
    pub states: Vec<Vec<f64>>,
    #[serde(default = "default_paths_per_state")]
    pub paths_per_state: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantCoordinateSpec {
    /// Index of a state coordinate that must stay bit-identical along every path.
    pub coordinate: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilitySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decrease: Option<DecreaseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponential: Option<ExponentialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_bound: Option<TargetBoundSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attractor: Option<AttractorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_free_v: Option<NoiseFreeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reach_bracket: Option<ReachBracketSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariant_coordinate: Option<InvariantCoordinateSpec>,
}

/// Command-line overrides of the simulation block.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
}

impl Scenario {
    /// Parses and validates a scenario document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Compiles the model and checks every cross-reference.
    pub fn validate(&self) -> Result<Model> {
        let model = Model::compile(&self.model)?;
        let n = model.dim();
        let t = self.tolerances;
        if !(t.orth_tol >= 0.0) || !(t.margin_tol >= 0.0) || !(t.boundary_tol >= 0.0) {
            return Err(Error::Scenario("tolerances must be nonnegative".into()));
        }
        for (i, v) in self.verify.iter().enumerate() {
            let ctx = format!("verify[{i}]");
            if let SamplerSpec::Points { points } = &v.sampler {
                check_points(points, n, &ctx)?;
            }
            match v.condition {
                ConditionId::Exponential if v.lambda.is_none() => {
                    return Err(Error::Scenario(format!(
                        "{ctx}: exponential needs `lambda`"
                    )))
                }
                ConditionId::StrictClf | ConditionId::SetClf if model.rate.is_none() => {
                    return Err(Error::Scenario(format!(
                        "{ctx}: {} needs a rate function in the model",
                        v.condition
                    )))
                }
                ConditionId::SetClf | ConditionId::Viability if v.set.is_none() => {
                    return Err(Error::Scenario(format!(
                        "{ctx}: {} needs `set`",
                        v.condition
                    )))
                }
                _ => {}
            }
            if let Some(set) = &v.set {
                compile_target(set, &model)?;
            }
        }
        for tgt in &self.targets {
            compile_target(tgt, &model)?;
        }
        if let Some(sim) = &self.simulation {
            if sim.x0.len() != n {
                return Err(Error::Dimension(format!(
                    "x0 has length {}, the model has {n} states",
                    sim.x0.len()
                )));
            }
            if sim.paths == 0 {
                return Err(Error::Scenario(
                    "simulation.paths must be at least 1".into(),
                ));
            }
            crate::simulator::SimParams::new(sim.dt, sim.horizon).steps()?;
            if matches!(sim.control, ControlMode::Zero | ControlMode::Synthesized)
                && model.affine.is_none()
            {
                return Err(Error::Scenario(
                    "zero and synthesized controls need an affine model".into(),
                ));
            }
        }
        if self.synthesis.is_some() && model.affine.is_none() {
            return Err(Error::Scenario("synthesis needs an affine model".into()));
        }
        let c = &self.certify;
        for (what, idx) in [
            ("target_bound", c.target_bound.as_ref().map(|s| s.target)),
            ("reach_bracket", c.reach_bracket.as_ref().map(|s| s.target)),
        ] {
            if let Some(i) = idx {
                if i >= self.targets.len() {
                    return Err(Error::Scenario(format!(
                        "certify.{what} refers to target {i}, only {} defined",
                        self.targets.len()
                    )));
                }
            }
        }
        if let Some(r) = &c.reach_bracket {
            check_points(&r.states, n, "certify.reach_bracket")?;
        }
        if let Some(a) = &c.attractor {
            compile_target(&a.set, &model)?;
        }
        if let Some(ic) = &c.invariant_coordinate {
            if ic.coordinate >= n {
                return Err(Error::Dimension(format!(
                    "invariant coordinate {} out of range",
                    ic.coordinate
                )));
            }
        }
        Ok(model)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(sim) = &mut self.simulation {
            if let Some(s) = o.seed {
                sim.master_seed = s;
            }
            if let Some(p) = o.paths {
                sim.paths = p;
            }
            if let Some(dt) = o.dt {
                sim.dt = dt;
            }
            if let Some(h) = o.horizon {
                sim.horizon = h;
            }
        }
    }

    pub fn wants(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }
}

fn check_points(points: &[Vec<f64>], n: usize, ctx: &str) -> Result<()> {
    if let Some(p) = points.iter().find(|p| p.len() != n) {
        return Err(Error::Dimension(format!(
            "{ctx}: point {p:?} does not have {n} coordinates"
        )));
    }
    Ok(())
}

/// Reads a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    Scenario::from_toml(&std::fs::read_to_string(path)?)
}
