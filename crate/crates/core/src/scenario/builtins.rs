//! The built-in catalog. Each entry is a model written as closures with analytic
//! derivatives plus a scenario document stored under `builtins/`.

use super::model::{Model, RateFn};
use super::Scenario;
use crate::feedback::{field, AffineSystem};
use crate::model::{ControlSet, ControlSetSpec, ControlSystem, LyapunovCandidate, SubjetElement};
use crate::{Control, Error, Matrix, Result, ScalarField, State};
use serde::Serialize;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BuiltinInfo {
    pub id: &'static str,
    pub description: &'static str,
}

struct Entry {
    id: &'static str,
    description: &'static str,
    scenario: &'static str,
    params: &'static [(&'static str, f64)],
    build: fn(&Params) -> Result<Model>,
}

const CATALOG: &[Entry] = &[
    Entry {
        id: "krasovskii",
        description: "polar system with invariant circles rho = 1/sqrt(n) and a step Lyapunov function",
        scenario: include_str!("../../builtins/krasovskii.toml"),
        params: &[("sigma_scale", 1.0)],
        build: krasovskii,
    },
    Entry {
        id: "perturbed-drift",
        description: "stabilizable drift alpha*x perturbed by noise tangential to the level sets of |x|^2",
        scenario: include_str!("../../builtins/perturbed-drift.toml"),
        params: &[("kappa", 0.5)],
        build: perturbed_drift,
    },
    Entry {
        id: "perturbed-coupled",
        description: "stabilizable planar drift coupled to an Ornstein-Uhlenbeck state, stabilized at {x = 0}",
        scenario: include_str!("../../builtins/perturbed-coupled.toml"),
        params: &[("coupling", 0.5)],
        build: perturbed_coupled,
    },
    Entry {
        id: "radial-affine",
        description: "single-input affine system with a radial strict Lyapunov function and its universal-formula feedback",
        scenario: include_str!("../../builtins/radial-affine.toml"),
        params: &[("kappa", 0.5), ("domain_radius", 0.8)],
        build: radial_affine,
    },
    Entry {
        id: "polar-radial",
        description: "polar system whose radial noise can be switched off, stabilized at {rho = 0}",
        scenario: include_str!("../../builtins/polar-radial.toml"),
        params: &[],
        build: polar_radial,
    },
    Entry {
        id: "exterior-ball",
        description: "rotational noise pushing trajectories out of the unit ball, stabilized at its exterior",
        scenario: include_str!("../../builtins/exterior-ball.toml"),
        params: &[("radius", 1.0), ("contraction", 0.1), ("rotation", 1.0)],
        build: exterior_ball,
    },
    Entry {
        id: "periodic-orbit",
        description: "planar system with an attracting circle and noise tangential to it",
        scenario: include_str!("../../builtins/periodic-orbit.toml"),
        params: &[("radius", 1.0), ("kappa", 0.5)],
        build: periodic_orbit,
    },
    Entry {
        id: "linear-tangential",
        description: "f = -lambda x with tangential noise kappa*(-x2, x1); V = |x|^2 decays at rate 2 lambda - kappa^2",
        scenario: include_str!("../../builtins/linear-tangential.toml"),
        params: &[("lambda", 1.0), ("kappa", 0.5)],
        build: linear_tangential,
    },
    Entry {
        id: "deterministic-linear",
        description: "noise-free f = -x with V = |x|^2, the reference for entry-time bounds",
        scenario: include_str!("../../builtins/deterministic-linear.toml"),
        params: &[],
        build: deterministic_linear,
    },
];

/// Stable ids and one-line descriptions.
pub fn list_builtins() -> Vec<BuiltinInfo> {
    CATALOG
        .iter()
        .map(|e| BuiltinInfo {
            id: e.id,
            description: e.description,
        })
        .collect()
}

fn entry(id: &str) -> Result<&'static Entry> {
    CATALOG
        .iter()
        .find(|e| e.id == id)
        .ok_or_else(|| Error::UnknownBuiltin {
            id: id.to_string(),
            valid: CATALOG.iter().map(|e| e.id).collect::<Vec<_>>().join(", "),
        })
}

/// The scenario document shipped with a built-in.
pub fn builtin_scenario(id: &str) -> Result<Scenario> {
    Scenario::from_toml(entry(id)?.scenario)
}

pub(super) fn builtin_model(id: &str, overrides: &BTreeMap<String, f64>) -> Result<Model> {
    let e = entry(id)?;
    let mut values: BTreeMap<String, f64> =
        e.params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (k, v) in overrides {
        if !values.contains_key(k) {
            return Err(Error::Scenario(format!(
                "built-in {id} has no parameter `{k}` (parameters: {})",
                e.params.iter().map(|p| p.0).collect::<Vec<_>>().join(", ")
            )));
        }
        values.insert(k.clone(), *v);
    }
    let mut model = (e.build)(&Params(values))?;
    model.id = id.to_string();
    Ok(model)
}

struct Params(BTreeMap<String, f64>);

impl Params {
    fn get(&self, k: &str) -> f64 {
        self.0[k]
    }

    fn constants(&self) -> Vec<(String, f64)> {
        self.0.iter().map(|(k, v)| (k.clone(), *v)).collect()
    }
}

fn names(n: &[&str]) -> Vec<String> {
    n.iter().map(|s| s.to_string()).collect()
}

fn rate(f: impl Fn(&State) -> f64 + Send + Sync + 'static) -> Option<RateFn> {
    let f: ScalarField = Arc::new(f);
    Some(RateFn(f))
}

fn finite(points: &[f64]) -> Result<ControlSet> {
    ControlSet::new(ControlSetSpec::Finite {
        points: points.iter().map(|&p| vec![p]).collect(),
    })
}

/// `J x = (−x₂, x₁)`.
fn rot(x: &State) -> State {
    State::from_column_slice(&[-x[1], x[0]])
}

/// `|x|²` with gradient `2x` and Hessian `2I`.
fn square(dim: usize) -> LyapunovCandidate {
    LyapunovCandidate::new("|x|^2", dim, |x: &State| x.norm_squared())
        .with_gradient(|x: &State| 2.0 * x)
        .with_hessian(move |_: &State| 2.0 * Matrix::identity(dim, dim))
}

fn model(
    names_: &[&str],
    p: &Params,
    system: ControlSystem,
    candidate: LyapunovCandidate,
    rate: Option<RateFn>,
) -> Model {
    Model {
        id: String::new(),
        state_names: names(names_),
        constants: p.constants(),
        system,
        candidate,
        rate,
        affine: None,
    }
}

/// Index `n` with `ρ = 1/√n` up to round-off, for `n ≥ 1`.
fn circle_index(rho: f64) -> Option<u64> {
    if !(rho > 0.0) {
        return None;
    }
    let q = 1.0 / (rho * rho);
    let n = q.round();
    (n >= 1.0 && (q - n).abs() <= 1e-9 * q).then_some(n as u64)
}

/// `sin²(π/ρ²)`, exactly zero on the circles.
fn circle_factor(rho: f64) -> f64 {
    if circle_index(rho).is_some() || rho == 0.0 {
        return 0.0;
    }
    let q = 1.0 / (rho * rho);
    (PI * (q - q.round())).sin().powi(2)
}

/// Step function `1/√n` on `1/√n < ρ ≤ 1/√(n−1)`.
fn step_value(rho: f64) -> f64 {
    if !(rho > 0.0) {
        return 0.0;
    }
    let n = match circle_index(rho) {
        Some(k) => k + 1,
        None => (1.0 / (rho * rho)).floor() as u64 + 1,
    };
    1.0 / (n as f64).sqrt()
}

fn krasovskii_subjets(x: &State) -> Option<Vec<SubjetElement>> {
    let zero = State::zeros(2);
    if circle_index(x[0]).is_none() {
        return Some(vec![
            SubjetElement::new(zero.clone(), Matrix::zeros(2, 2)),
            SubjetElement::new(zero, -Matrix::identity(2, 2)),
        ]);
    }
    let mut out = Vec::new();
    for s in [0.0, 0.5, 1.0, 2.0] {
        for a in [-1.0, 0.0, 1.0] {
            for b in [-1.0, 0.0, 1.0] {
                for c in [-1.0, 0.0] {
                    out.push(SubjetElement::new(
                        State::from_column_slice(&[s, 0.0]),
                        Matrix::from_row_slice(2, 2, &[a, b, b, c]),
                    ));
                }
            }
        }
    }
    Some(out)
}

fn krasovskii(p: &Params) -> Result<Model> {
    let scale = p.get("sigma_scale");
    let sys = ControlSystem::new(
        "krasovskii",
        2,
        1,
        |x: &State, _: &Control| {
            let (rho, th) = (x[0], x[1]);
            let s = circle_factor(rho);
            State::from_column_slice(&[
                rho.powi(7) * th.sin().powi(2) * s,
                -1.0 + rho.powi(6) * th.sin() * th.cos() * s,
            ])
        },
        move |x: &State, _: &Control| {
            let rho = x[0];
            let sigma = (scale * rho * (1.0 - rho)).clamp(0.0, 1.0);
            Matrix::from_column_slice(2, 1, &[sigma * circle_factor(rho), 0.0])
        },
        ControlSet::uncontrolled(),
    )?;
    let v = LyapunovCandidate::new("step 1/sqrt(n)", 2, |x: &State| step_value(x[0]))
        .with_gradient(|_: &State| State::zeros(2))
        .with_hessian(|_: &State| Matrix::zeros(2, 2))
        .with_subjets(krasovskii_subjets);
    Ok(model(&["rho", "theta"], p, sys, v, None))
}

fn perturbed_drift(p: &Params) -> Result<Model> {
    let k = p.get("kappa");
    let sys = ControlSystem::new(
        "perturbed-drift",
        2,
        1,
        |x: &State, a: &Control| a[0] * x,
        move |x: &State, _: &Control| Matrix::from_column_slice(2, 1, (k * rot(x)).as_slice()),
        finite(&[-1.0, 1.0])?,
    )?;
    Ok(model(
        &["x1", "x2"],
        p,
        sys,
        square(2),
        rate(move |x: &State| (2.0 - k * k) * x.norm_squared()),
    ))
}

fn perturbed_coupled(p: &Params) -> Result<Model> {
    let c = p.get("coupling");
    let sys = ControlSystem::new(
        "perturbed-coupled",
        3,
        1,
        move |x: &State, a: &Control| {
            let gain = a[0] + c * x[2].sin();
            State::from_column_slice(&[gain * x[0], gain * x[1], -x[2]])
        },
        |_: &State, _: &Control| Matrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]),
        finite(&[-1.0, 0.0, 1.0])?,
    )?;
    let v = LyapunovCandidate::new("(x1^2 + x2^2)/2", 3, |x: &State| {
        0.5 * (x[0] * x[0] + x[1] * x[1])
    })
    .with_gradient(|x: &State| State::from_column_slice(&[x[0], x[1], 0.0]))
    .with_hessian(|_: &State| Matrix::from_diagonal(&State::from_column_slice(&[1.0, 1.0, 0.0])));
    Ok(model(
        &["x1", "x2", "y"],
        p,
        sys,
        v,
        rate(move |x: &State| (1.0 - c) * (x[0] * x[0] + x[1] * x[1])),
    ))
}

fn radial_affine(p: &Params) -> Result<Model> {
    let k = p.get("kappa");
    let affine = AffineSystem::new(
        2,
        field(|x: &State| State::from_column_slice(&[x[0], -x[1]])),
        vec![field(|_: &State| State::from_column_slice(&[1.0, 0.0]))],
        field(move |x: &State| k * rot(x)),
    )?
    .with_constraint_box(vec![(-1.0, 1.0)]);
    let grid = ControlSet::new(ControlSetSpec::Box {
        lower: vec![-1.0, 0.0],
        upper: vec![1.0, 0.0],
        counts: vec![21, 1],
    })?;
    let sys = affine.control_system("radial-affine", grid)?;
    let v = LyapunovCandidate::new("|x|^2/2", 2, |x: &State| 0.5 * x.norm_squared())
        .with_gradient(|x: &State| x.clone())
        .with_hessian(|_: &State| Matrix::identity(2, 2))
        .with_domain_radius(p.get("domain_radius"));
    let mut m = model(
        &["x1", "x2"],
        p,
        sys,
        v,
        rate(move |x: &State| {
            x[0].abs() - x[0] * x[0] + x[1] * x[1] - 0.5 * k * k * x.norm_squared()
        }),
    );
    m.affine = Some(affine);
    Ok(m)
}

fn polar_radial(p: &Params) -> Result<Model> {
    let sys = ControlSystem::new(
        "polar-radial",
        2,
        1,
        |x: &State, a: &Control| State::from_column_slice(&[x[0] * (0.5 - 1.5 * a[0]), 1.0]),
        |x: &State, a: &Control| Matrix::from_column_slice(2, 1, &[0.3 * (1.0 - a[0]) * x[0], 0.5]),
        finite(&[0.0, 0.5, 1.0])?,
    )?;
    let v = LyapunovCandidate::new("rho^2", 2, |x: &State| x[0] * x[0])
        .with_gradient(|x: &State| State::from_column_slice(&[2.0 * x[0], 0.0]))
        .with_hessian(|_: &State| Matrix::from_diagonal(&State::from_column_slice(&[2.0, 0.0])));
    Ok(model(
        &["rho", "theta"],
        p,
        sys,
        v,
        rate(|x: &State| x[0] * x[0]),
    ))
}

fn exterior_ball(p: &Params) -> Result<Model> {
    let (r, c, w) = (p.get("radius"), p.get("contraction"), p.get("rotation"));
    let sys = ControlSystem::new(
        "exterior-ball",
        2,
        1,
        move |x: &State, _: &Control| -c * x,
        move |x: &State, _: &Control| Matrix::from_column_slice(2, 1, (w * rot(x)).as_slice()),
        ControlSet::uncontrolled(),
    )?;
    let r2 = r * r;
    let v = LyapunovCandidate::new("max(R^2 - |x|^2, 0)", 2, move |x: &State| {
        (r2 - x.norm_squared()).max(0.0)
    })
    .with_gradient(move |x: &State| {
        if x.norm_squared() < r2 {
            -2.0 * x
        } else {
            State::zeros(2)
        }
    })
    .with_hessian(move |x: &State| {
        if x.norm_squared() < r2 {
            -2.0 * Matrix::identity(2, 2)
        } else {
            Matrix::zeros(2, 2)
        }
    });
    Ok(model(
        &["x1", "x2"],
        p,
        sys,
        v,
        rate(move |x: &State| (w * w - 2.0 * c) * x.norm_squared()),
    ))
}

fn periodic_orbit(p: &Params) -> Result<Model> {
    let (r, k) = (p.get("radius"), p.get("kappa"));
    let r2 = r * r;
    let sys = ControlSystem::new(
        "periodic-orbit",
        2,
        1,
        move |x: &State, _: &Control| (r2 - x.norm_squared() - 0.5 * k * k) * x + rot(x),
        move |x: &State, _: &Control| Matrix::from_column_slice(2, 1, (k * rot(x)).as_slice()),
        ControlSet::uncontrolled(),
    )?;
    let v = LyapunovCandidate::new("(|x|^2 - R^2)^2", 2, move |x: &State| {
        (x.norm_squared() - r2).powi(2)
    })
    .with_gradient(move |x: &State| 4.0 * (x.norm_squared() - r2) * x)
    .with_hessian(move |x: &State| {
        4.0 * (x.norm_squared() - r2) * Matrix::identity(2, 2) + 8.0 * x * x.transpose()
    });
    Ok(model(
        &["x1", "x2"],
        p,
        sys,
        v,
        rate(move |x: &State| {
            let s = x.norm_squared();
            2.0 * (s - r2).powi(2) * s
        }),
    ))
}

fn linear_tangential(p: &Params) -> Result<Model> {
    let (l, k) = (p.get("lambda"), p.get("kappa"));
    let sys = ControlSystem::new(
        "linear-tangential",
        2,
        1,
        move |x: &State, _: &Control| -l * x,
        move |x: &State, _: &Control| Matrix::from_column_slice(2, 1, (k * rot(x)).as_slice()),
        ControlSet::uncontrolled(),
    )?;
    Ok(model(
        &["x1", "x2"],
        p,
        sys,
        square(2),
        rate(move |x: &State| (2.0 * l - k * k) * x.norm_squared()),
    ))
}

fn deterministic_linear(p: &Params) -> Result<Model> {
    let sys = ControlSystem::new(
        "deterministic-linear",
        2,
        1,
        |x: &State, _: &Control| -x,
        |_: &State, _: &Control| Matrix::zeros(2, 1),
        ControlSet::uncontrolled(),
    )?;
    Ok(model(
        &["x1", "x2"],
        p,
        sys,
        square(2),
        rate(|x: &State| 2.0 * x.norm_squared()),
    ))
}
