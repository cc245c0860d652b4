//! Pointwise constrained decrease conditions and their aggregation over sample sets.
//!
//! Every condition has the shape "there is a grid control `α` with `σ(x, α)ᵀp = 0` and some
//! expression `≥ threshold`". Orthogonality is tested as `‖σᵀp‖ ≤ orth_tol · (1 + |p|)`.
//! A grid witness proves the existential; a failing grid search only means the point is
//! not certified.

use crate::model::{diffusion_matrix, ControlSystem, LyapunovCandidate, SubjetElement, TargetSet};
use crate::{rng, Control, Error, Matrix, Result, ScalarField, State};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    pub orth_tol: f64,
    pub margin_tol: f64,
    /// Allowed `|V(x) − μ|` for points declared to lie on a level set boundary.
    pub boundary_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            orth_tol: 1e-8,
            margin_tol: 1e-9,
            boundary_tol: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionId {
    Clf,
    StrictClf,
    Exponential,
    Radial,
    Viability,
    SetClf,
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ConditionId::Clf => "clf",
            ConditionId::StrictClf => "strict-clf",
            ConditionId::Exponential => "exponential",
            ConditionId::Radial => "radial",
            ConditionId::Viability => "viability",
            ConditionId::SetClf => "set-clf",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "status", content = "reason")]
pub enum VerdictStatus {
    Certified,
    /// The best grid control misses the threshold. Grid search is one-sided, so this is
    /// "not certified" rather than "false".
    NotCertified,
    NoAdmissibleControl,
    /// `DV(x) = 0` on a level set boundary; the canonical normal is uninformative.
    DegenerateNormal,
    /// A precondition of the pointwise check failed (e.g. `l(x) ≤ 0`).
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointVerdict {
    pub point: Vec<f64>,
    pub condition: ConditionId,
    #[serde(flatten)]
    pub status: VerdictStatus,
    /// Grid index of the witness control for the decisive element.
    pub witness: Option<usize>,
    pub witness_control: Option<Vec<f64>>,
    /// Decrease expression minus threshold at the witness, minimized over tested elements.
    pub margin: Option<f64>,
    pub admissible_count: usize,
    pub elements_tested: usize,
}

impl PointVerdict {
    pub fn passed(&self) -> bool {
        self.status == VerdictStatus::Certified
    }

    fn invalid(x: &State, condition: ConditionId, reason: String) -> Self {
        Self {
            point: x.as_slice().to_vec(),
            condition,
            status: VerdictStatus::Invalid(reason),
            witness: None,
            witness_control: None,
            margin: None,
            admissible_count: 0,
            elements_tested: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub system_id: String,
    pub candidate_id: String,
    pub condition: ConditionId,
    pub sample_description: String,
    pub tolerances: Tolerances,
    pub verdicts: Vec<PointVerdict>,
    pub passed: usize,
    pub total: usize,
    pub pass_fraction: f64,
    pub notes: Vec<String>,
}

impl VerificationReport {
    fn assemble(
        sys: &ControlSystem,
        candidate_id: &str,
        condition: ConditionId,
        sample_description: String,
        tolerances: Tolerances,
        verdicts: Vec<PointVerdict>,
    ) -> Self {
        let total = verdicts.len();
        let passed = verdicts.iter().filter(|v| v.passed()).count();
        let pass_fraction = if total == 0 {
            0.0
        } else {
            passed as f64 / total as f64
        };
        let mut notes = vec![
            "existence over the control set is checked on a finite grid: a witness certifies, \
             a miss does not refute"
                .to_string(),
            "controls are restricted to feedback laws and piecewise-constant schedules".to_string(),
        ];
        if sys.convexity_assumed() {
            notes.push("convexity of {(a, f)(x, A)} is assumed, not checked".to_string());
        }
        Self {
            system_id: sys.id().to_string(),
            candidate_id: candidate_id.to_string(),
            condition,
            sample_description,
            tolerances,
            verdicts,
            passed,
            total,
            pass_fraction,
            notes,
        }
    }
}

/// `x ↦ ‖σ(x, α)ᵀp‖`.
fn orth_residual(sys: &ControlSystem, x: &State, alpha: &Control, p: &State) -> f64 {
    (sys.dispersion(x, alpha).transpose() * p).norm()
}

fn trace_product(a: &Matrix, y: &Matrix) -> f64 {
    a.iter().zip(y.transpose().iter()).map(|(u, v)| u * v).sum()
}

/// Grid indices (in grid order) of the controls with `‖σ(x, α)ᵀp‖ ≤ orth_tol · (1 + |p|)`.
pub fn admissible_controls(sys: &ControlSystem, p: &State, x: &State, orth_tol: f64) -> Vec<usize> {
    let scale = orth_tol * (1.0 + p.norm());
    sys.control_set()
        .points()
        .iter()
        .enumerate()
        .filter(|(_, a)| orth_residual(sys, x, a, p) <= scale)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianValue {
    pub value: f64,
    pub witness: usize,
    pub control: Control,
    pub admissible_count: usize,
}

/// `max { −p·f(x, α) − tr[a(x, α) Y] }` over admissible grid controls; the first grid index
/// attaining the maximum is the witness.
pub fn constrained_hamiltonian(
    sys: &ControlSystem,
    x: &State,
    p: &State,
    y: &Matrix,
    orth_tol: f64,
) -> Result<HamiltonianValue> {
    let scale = orth_tol * (1.0 + p.norm());
    let mut best: Option<(f64, usize)> = None;
    let mut count = 0;
    let mut min_residual = f64::INFINITY;
    for (i, alpha) in sys.control_set().points().iter().enumerate() {
        let res = orth_residual(sys, x, alpha, p);
        min_residual = min_residual.min(res);
        if !(res <= scale) {
            continue;
        }
        count += 1;
        let f = sys.drift(x, alpha);
        let a = diffusion_matrix(sys, x, alpha)?;
        let value = -p.dot(&f) - trace_product(&a, y);
        if !value.is_finite() {
            return Err(Error::NonFinite {
                what: "hamiltonian",
                x: x.as_slice().to_vec(),
                control: alpha.as_slice().to_vec(),
            });
        }
        if best.is_none_or(|(b, _)| value > b) {
            best = Some((value, i));
        }
    }
    match best {
        Some((value, witness)) => Ok(HamiltonianValue {
            value,
            witness,
            control: sys.control_set().points()[witness].clone(),
            admissible_count: count,
        }),
        None => Err(Error::NoAdmissibleControl {
            x: x.as_slice().to_vec(),
            min_residual,
        }),
    }
}

/// Tests every element against `threshold`; the decisive element is the one with the
/// smallest margin (first one on ties).
fn decrease_verdict(
    sys: &ControlSystem,
    elements: &[SubjetElement],
    x: &State,
    threshold: f64,
    condition: ConditionId,
    tol: &Tolerances,
) -> Result<PointVerdict> {
    let mut verdict = PointVerdict {
        point: x.as_slice().to_vec(),
        condition,
        status: VerdictStatus::Certified,
        witness: None,
        witness_control: None,
        margin: None,
        admissible_count: 0,
        elements_tested: elements.len(),
    };
    for el in elements {
        match constrained_hamiltonian(sys, x, &el.p, &el.y, tol.orth_tol) {
            Ok(h) => {
                let m = h.value - threshold;
                if verdict.margin.is_none_or(|cur| m < cur) {
                    verdict.margin = Some(m);
                    verdict.witness = Some(h.witness);
                    verdict.witness_control = Some(h.control.as_slice().to_vec());
                    verdict.admissible_count = h.admissible_count;
                }
            }
            Err(Error::NoAdmissibleControl { .. }) => {
                verdict.status = VerdictStatus::NoAdmissibleControl;
                verdict.margin = None;
                verdict.witness = None;
                verdict.witness_control = None;
                verdict.admissible_count = 0;
                return Ok(verdict);
            }
            Err(e) => return Err(e),
        }
    }
    if let Some(m) = verdict.margin {
        if m < -tol.margin_tol {
            verdict.status = VerdictStatus::NotCertified;
        }
    }
    Ok(verdict)
}

fn require_nonzero(x: &State) -> Result<()> {
    if x.norm() == 0.0 {
        return Err(Error::Precondition(
            "pointwise checks are made off the origin".into(),
        ));
    }
    Ok(())
}

fn require_domain(v: &LyapunovCandidate, x: &State) -> Result<()> {
    if !v.in_domain(x) {
        return Err(Error::Precondition(format!(
            "{:?} lies outside the domain of {}",
            x.as_slice(),
            v.id()
        )));
    }
    Ok(())
}

fn require_rate(l: &ScalarField, x: &State) -> Result<f64> {
    let value = l(x);
    if !(value > 0.0) {
        return Err(Error::RateNotPositive {
            x: x.as_slice().to_vec(),
            value,
        });
    }
    Ok(value)
}

/// `∃α: σᵀp = 0, −p·f − tr[aY] ≥ 0` for every tested `(p, Y)`.
pub fn check_clf_at(
    sys: &ControlSystem,
    v: &LyapunovCandidate,
    x: &State,
    tol: &Tolerances,
) -> Result<PointVerdict> {
    require_nonzero(x)?;
    require_domain(v, x)?;
    decrease_verdict(sys, &v.jet(x), x, 0.0, ConditionId::Clf, tol)
}

/// As [`check_clf_at`] with threshold `l(x) > 0`.
pub fn check_strict_clf_at(
    sys: &ControlSystem,
    v: &LyapunovCandidate,
    l: &ScalarField,
    x: &State,
    tol: &Tolerances,
) -> Result<PointVerdict> {
    require_nonzero(x)?;
    require_domain(v, x)?;
    let rate = require_rate(l, x)?;
    decrease_verdict(sys, &v.jet(x), x, rate, ConditionId::StrictClf, tol)
}

/// Strict check with `l(x)` replaced by `λ V(x)`.
pub fn check_exponential_at(
    sys: &ControlSystem,
    v: &LyapunovCandidate,
    lambda: f64,
    x: &State,
    tol: &Tolerances,
) -> Result<PointVerdict> {
    if !(lambda > 0.0) {
        return Err(Error::Precondition(format!(
            "λ must be positive, got {lambda}"
        )));
    }
    require_nonzero(x)?;
    require_domain(v, x)?;
    let threshold = lambda * v.value(x);
    decrease_verdict(sys, &v.jet(x), x, threshold, ConditionId::Exponential, tol)
}

/// Radial criterion `min { f·x + tr a : σᵀx = 0 } ≤ 0`, independent of the radial profile.
/// The reported margin is `−min`, so passing means `margin ≥ −margin_tol`.
pub fn check_radial_condition(
    sys: &ControlSystem,
    x: &State,
    tol: &Tolerances,
) -> Result<PointVerdict> {
    require_nonzero(x)?;
    let admissible = admissible_controls(sys, x, x, tol.orth_tol);
    let mut verdict = PointVerdict {
        point: x.as_slice().to_vec(),
        condition: ConditionId::Radial,
        status: VerdictStatus::NoAdmissibleControl,
        witness: None,
        witness_control: None,
        margin: None,
        admissible_count: admissible.len(),
        elements_tested: 1,
    };
    let mut best: Option<(f64, usize)> = None;
    for &i in &admissible {
        let alpha = &sys.control_set().points()[i];
        let val = sys.drift(x, alpha).dot(x) + diffusion_matrix(sys, x, alpha)?.trace();
        if best.is_none_or(|(b, _)| val < b) {
            best = Some((val, i));
        }
    }
    if let Some((val, i)) = best {
        verdict.margin = Some(-val);
        verdict.witness = Some(i);
        verdict.witness_control = Some(sys.control_set().points()[i].as_slice().to_vec());
        verdict.status = if -val >= -tol.margin_tol {
            VerdictStatus::Certified
        } else {
            VerdictStatus::NotCertified
        };
    }
    Ok(verdict)
}

/// Viability of `K = {W ≤ μ}` tested on boundary points: for the canonical normal-cone
/// element `(−DW, −D²W)` and any supplied elements, some grid control must give
/// `f·p + tr[aY] ≥ −margin_tol`. No orthogonality filter applies here.
pub fn check_viability_boundary(
    sys: &ControlSystem,
    k: &TargetSet,
    boundary_points: &[State],
    cone_elements: Option<&[Vec<SubjetElement>]>,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    let level = match k.kind() {
        crate::model::TargetKind::Sublevel { level } => *level,
        _ => {
            return Err(Error::Precondition(
                "viability boundary checks need a sublevel target".into(),
            ))
        }
    };
    let w = k
        .level_function()
        .expect("sublevel target carries its function");
    if let Some(extra) = cone_elements {
        if extra.len() != boundary_points.len() {
            return Err(Error::Dimension(
                "one list of cone elements per boundary point is required".into(),
            ));
        }
    }
    let grid = sys.control_set().points();
    let mut verdicts = Vec::with_capacity(boundary_points.len());
    for (idx, x) in boundary_points.iter().enumerate() {
        let gap = (w.value(x) - level).abs();
        if gap > tol.boundary_tol {
            return Err(Error::Precondition(format!(
                "{:?} is not on the boundary: |W(x) − μ| = {gap:e}",
                x.as_slice()
            )));
        }
        let dw = w.gradient(x);
        let mut elements = Vec::new();
        let degenerate = dw.norm() <= 1e-14;
        if !degenerate {
            elements.push(SubjetElement::new(-dw, -w.hessian(x)));
        }
        if let Some(extra) = cone_elements {
            elements.extend(extra[idx].iter().cloned());
        }
        let mut verdict = PointVerdict {
            point: x.as_slice().to_vec(),
            condition: ConditionId::Viability,
            status: VerdictStatus::Certified,
            witness: None,
            witness_control: None,
            margin: None,
            admissible_count: grid.len(),
            elements_tested: elements.len(),
        };
        for el in &elements {
            let mut best: Option<(f64, usize)> = None;
            for (i, alpha) in grid.iter().enumerate() {
                let val = sys.drift(x, alpha).dot(&el.p)
                    + trace_product(&diffusion_matrix(sys, x, alpha)?, &el.y);
                if best.is_none_or(|(b, _)| val > b) {
                    best = Some((val, i));
                }
            }
            let (val, i) = best.expect("control grid is nonempty");
            if verdict.margin.is_none_or(|m| val < m) {
                verdict.margin = Some(val);
                verdict.witness = Some(i);
                verdict.witness_control = Some(grid[i].as_slice().to_vec());
            }
        }
        verdict.status = if degenerate {
            VerdictStatus::DegenerateNormal
        } else if verdict.margin.is_some_and(|m| m < -tol.margin_tol) {
            VerdictStatus::NotCertified
        } else {
            VerdictStatus::Certified
        };
        verdicts.push(verdict);
    }
    Ok(VerificationReport::assemble(
        sys,
        w.id(),
        ConditionId::Viability,
        format!("{} boundary points of {}", boundary_points.len(), k.label()),
        *tol,
        verdicts,
    ))
}

/// Strict decrease at `x ∉ M`, with positivity of `V` and `l` measured off `M`.
pub fn check_set_clf_at(
    sys: &ControlSystem,
    v: &LyapunovCandidate,
    m: &TargetSet,
    x: &State,
    l: &ScalarField,
    tol: &Tolerances,
) -> Result<PointVerdict> {
    if m.contains(x) {
        return Err(Error::Precondition(format!(
            "{:?} lies in {}",
            x.as_slice(),
            m.label()
        )));
    }
    require_domain(v, x)?;
    let rate = require_rate(l, x)?;
    let vx = v.value(x);
    if !(vx > 0.0) {
        return Err(Error::NotPositiveDefinite {
            x: x.as_slice().to_vec(),
            value: vx,
        });
    }
    decrease_verdict(sys, &v.jet(x), x, rate, ConditionId::SetClf, tol)
}

/// What [`verify_region`] checks at each sample.
#[derive(Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Condition {
    Clf,
    StrictClf {
        rate: ScalarField,
    },
    Exponential {
        lambda: f64,
    },
    Radial,
    SetClf {
        target: TargetSet,
        rate: ScalarField,
    },
}

impl Condition {
    pub fn id(&self) -> ConditionId {
        match self {
            Condition::Clf => ConditionId::Clf,
            Condition::StrictClf { .. } => ConditionId::StrictClf,
            Condition::Exponential { .. } => ConditionId::Exponential,
            Condition::Radial => ConditionId::Radial,
            Condition::SetClf { .. } => ConditionId::SetClf,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Sampler {
    /// `count` points with uniform direction and radius uniform in `[r_min, r_max]`.
    Annulus {
        r_min: f64,
        r_max: f64,
        count: usize,
    },
    Points(Vec<State>),
}

impl Sampler {
    pub fn points(&self, dim: usize, seed: u64) -> Result<Vec<State>> {
        match self {
            Sampler::Points(p) => Ok(p.clone()),
            Sampler::Annulus {
                r_min,
                r_max,
                count,
            } => {
                if !(*r_min > 0.0) || r_max < r_min {
                    return Err(Error::Precondition(format!(
                        "annulus needs 0 < r_min ≤ r_max, got [{r_min}, {r_max}]"
                    )));
                }
                let mut rng = rng::sampler_rng(seed);
                let mut out = Vec::with_capacity(*count);
                while out.len() < *count {
                    let u = State::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let n = u.norm();
                    if n < 1e-12 {
                        continue;
                    }
                    let r = r_min + (r_max - r_min) * rng.random::<f64>();
                    out.push(u * (r / n));
                }
                Ok(out)
            }
        }
    }

    fn describe(&self, seed: u64) -> String {
        match self {
            Sampler::Annulus {
                r_min,
                r_max,
                count,
            } => format!("{count} annulus points, r in [{r_min}, {r_max}], seed {seed}"),
            Sampler::Points(p) => format!("{} explicit points", p.len()),
        }
    }
}

/// Runs a pointwise condition over a sample set. Points are evaluated in parallel; verdicts
/// keep sampler order. Set-valued checks skip samples inside the set.
pub fn verify_region(
    sys: &ControlSystem,
    v: &LyapunovCandidate,
    condition: &Condition,
    sampler: &Sampler,
    tol: &Tolerances,
    seed: u64,
) -> Result<VerificationReport> {
    let mut points = sampler.points(sys.dim_state(), seed)?;
    let mut description = sampler.describe(seed);
    if let Condition::SetClf { target, .. } = condition {
        let before = points.len();
        points.retain(|x| !target.contains(x));
        if points.len() != before {
            description.push_str(&format!(
                ", {} samples inside {} skipped",
                before - points.len(),
                target.label()
            ));
        }
    }
    let id = condition.id();
    let verdicts: Vec<PointVerdict> = points
        .par_iter()
        .map(|x| {
            let res = match condition {
                Condition::Clf => check_clf_at(sys, v, x, tol),
                Condition::StrictClf { rate } => check_strict_clf_at(sys, v, rate, x, tol),
                Condition::Exponential { lambda } => check_exponential_at(sys, v, *lambda, x, tol),
                Condition::Radial => check_radial_condition(sys, x, tol),
                Condition::SetClf { target, rate } => {
                    check_set_clf_at(sys, v, target, x, rate, tol)
                }
            };
            res.unwrap_or_else(|e| PointVerdict::invalid(x, id, e.to_string()))
        })
        .collect();
    Ok(VerificationReport::assemble(
        sys,
        v.id(),
        id,
        description,
        *tol,
        verdicts,
    ))
}
