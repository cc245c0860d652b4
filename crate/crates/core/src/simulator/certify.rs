//! Path-level and report-level checks of the stability conclusions.
//!
//! "Almost surely" is reported as a path fraction with a 95% Wilson interval; nothing here
//! claims more than the simulated sample supports.

use super::monte_carlo::{run_monte_carlo, MetricsSpec, MonteCarloReport};
use super::{Sde, SdePath, SimParams};
use crate::model::{ComparisonPair, LyapunovCandidate, TargetSet};
use crate::rng::derive_seed;
use crate::{Error, Result, ScalarField, State};
use serde::Serialize;

const Z95: f64 = 1.959_963_984_540_054;

/// 95% Wilson score interval for `successes` out of `n`.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = Z95 * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// `max_t [V(X_t) + ∫₀ᵗ l(X_s) ds] − V(x₀)` with the integral by the trapezoid rule.
/// Nonpositive (up to discretization) when the path obeys the decrease bound.
pub fn decrease_certificate(path: &SdePath, v: &ScalarField, l: &ScalarField) -> f64 {
    let v0 = v(&path.states[0]);
    let mut integral = 0.0;
    let mut l_prev = l(&path.states[0]);
    let mut worst = 0.0f64;
    for i in 1..path.states.len() {
        let x = &path.states[i];
        let cur = l(x);
        integral += 0.5 * (path.times[i] - path.times[i - 1]) * (l_prev + cur);
        l_prev = cur;
        worst = worst.max(v(x) + integral - v0);
    }
    worst
}

/// `−slope` of the least-squares line through `(t, ln V(X_t))` on the samples with
/// `V > 1e-12`; 0 when fewer than two such samples exist.
pub fn exponential_rate_fit(path: &SdePath, v: &ScalarField) -> f64 {
    let mut n = 0.0;
    let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
    for (i, x) in path.states.iter().enumerate() {
        let val = path.v_values.get(i).copied().unwrap_or_else(|| v(x));
        if !(val > 1e-12) {
            continue;
        }
        let t = path.times[i];
        let y = val.ln();
        n += 1.0;
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    let det = n * stt - st * st;
    if n < 2.0 || det <= 0.0 {
        return 0.0;
    }
    let slope = (n * sty - st * sy) / det;
    0.0 - slope
}

/// Smallest grid time at which the path is in `target`.
pub fn first_entry_time(path: &SdePath, target: &TargetSet) -> Option<f64> {
    path.states
        .iter()
        .position(|x| target.contains(x))
        .map(|i| path.times[i])
}

/// Largest distance to `set` over the final 10% of the path.
pub fn attractor_distance(path: &SdePath, set: &TargetSet) -> f64 {
    let last = path.states.len() - 1;
    let start = (last as f64 * 0.9).floor() as usize;
    path.states[start..]
        .iter()
        .map(|x| set.distance(x))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityCertificate {
    pub path_count: usize,
    /// `γ₁⁻¹(γ₂(|x₀|))`.
    pub bound: f64,
    pub cert_tol: f64,
    pub bounded_count: usize,
    pub bounded_fraction: f64,
    pub bounded_interval: (f64, f64),
    pub conv_radius: f64,
    pub converged_count: usize,
    pub converged_fraction: f64,
    pub converged_interval: (f64, f64),
}

/// Fraction of paths with `sup |X_t| ≤ bound(|x₀|)(1 + cert_tol)` and fraction ending
/// within `conv_radius` of the origin.
pub fn stability_certificate(
    report: &MonteCarloReport,
    pair: &ComparisonPair,
    x0: &State,
    cert_tol: f64,
    conv_radius: f64,
) -> StabilityCertificate {
    let bound = pair.bound(x0.norm());
    let n = report.paths.len();
    let bounded = report
        .paths
        .iter()
        .filter(|p| !p.escaped && p.sup_norm <= bound * (1.0 + cert_tol))
        .count();
    let converged = report
        .paths
        .iter()
        .filter(|p| !p.escaped && p.final_norm <= conv_radius)
        .count();
    StabilityCertificate {
        path_count: n,
        bound,
        cert_tol,
        bounded_count: bounded,
        bounded_fraction: bounded as f64 / n as f64,
        bounded_interval: wilson_interval(bounded, n),
        conv_radius,
        converged_count: converged,
        converged_fraction: converged as f64 / n as f64,
        converged_interval: wilson_interval(converged, n),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TargetBoundCheck {
    pub v_initial: f64,
    pub inf_boundary_v: f64,
    pub rate_floor: f64,
    /// `(V(x₀) − inf_{∂T} V) / L`, floored at 0 when `x₀ ∈ T`.
    pub bound: f64,
    /// Allowance for entry being observed on the time grid.
    pub slack: f64,
    pub within_count: usize,
    pub never_entered: usize,
    pub fraction_within: f64,
    pub fraction_interval: (f64, f64),
    pub max_entry_time: Option<f64>,
}

impl TargetBoundCheck {
    pub fn passed(&self) -> bool {
        self.never_entered == 0 && self.fraction_within == 1.0
    }
}

/// Compares entry times into `report`'s target number `target_index` with the bound
/// `(V(x₀) − inf_{∂T} V) / L`. `inf_{∂T} V` comes from `boundary_samples` boundary points.
pub fn target_bound_check(
    report: &MonteCarloReport,
    target_index: usize,
    v: &LyapunovCandidate,
    rate_floor: f64,
    target: &TargetSet,
    x0: &State,
    boundary_samples: usize,
) -> Result<TargetBoundCheck> {
    if !(rate_floor > 0.0) {
        return Err(Error::Precondition(format!(
            "the rate floor L must be positive, got {rate_floor}"
        )));
    }
    let inf_boundary_v = target.inf_on_boundary(v, boundary_samples).ok_or_else(|| {
        Error::Precondition(format!("cannot sample the boundary of {}", target.label()))
    })?;
    let v_initial = v.value(x0);
    let mut bound = (v_initial - inf_boundary_v) / rate_floor;
    if target.contains(x0) {
        bound = bound.max(0.0);
    }
    let slack = report.dt;
    let mut within = 0;
    let mut never = 0;
    let mut max_entry: Option<f64> = None;
    for p in &report.paths {
        match p.entry_times.get(target_index).ok_or_else(|| {
            Error::Precondition(format!("report has no target number {target_index}"))
        })? {
            Some(t) => {
                max_entry = Some(max_entry.map_or(*t, |m| m.max(*t)));
                if *t <= bound + slack {
                    within += 1;
                }
            }
            None => never += 1,
        }
    }
    let n = report.paths.len();
    Ok(TargetBoundCheck {
        v_initial,
        inf_boundary_v,
        rate_floor,
        bound,
        slack,
        within_count: within,
        never_entered: never,
        fraction_within: within as f64 / n as f64,
        fraction_interval: wilson_interval(within, n),
        max_entry_time: max_entry,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseFreeCheck {
    pub max_relative_variance: f64,
    pub threshold: f64,
    pub sections: usize,
    pub passed: bool,
}

/// Cross-path relative variance of `V(X_t)` against `factor · dt`.
pub fn noise_free_v_check(report: &MonteCarloReport, factor: f64) -> NoiseFreeCheck {
    let sections = &report.aggregates.v_cross_sections;
    let max_relative_variance = sections
        .iter()
        .map(|c| c.relative_variance)
        .fold(0.0, f64::max);
    let threshold = factor * report.dt;
    NoiseFreeCheck {
        max_relative_variance,
        threshold,
        sections: sections.len(),
        passed: !sections.is_empty() && max_relative_variance <= threshold,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReachEntry {
    pub state: Vec<f64>,
    pub v: f64,
    /// `V(x) ≤ L t + inf_{∂T} V`.
    pub predicted_inside: bool,
    pub simulated_fraction: f64,
    /// At least 99% of the simulated paths reached the target by `t`.
    pub simulated_inside: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReachBracket {
    pub t: f64,
    pub rate_floor: f64,
    pub inf_boundary_v: f64,
    pub entries: Vec<ReachEntry>,
    /// Indices of states predicted inside but not simulated inside.
    pub violations: Vec<usize>,
}

impl ReachBracket {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the inner estimate `{V ≤ L t + inf_{∂T} V} ⊆ R(t)` of the reachable set at the
/// sampled states. States outside the estimate are listed but carry no claim.
#[allow(clippy::too_many_arguments)]
pub fn reach_set_bracket(
    sde: &Sde,
    v: &LyapunovCandidate,
    target: &TargetSet,
    t: f64,
    rate_floor: f64,
    states: &[State],
    paths_per_state: usize,
    dt: f64,
    master_seed: u64,
) -> Result<ReachBracket> {
    if !(rate_floor > 0.0) || !(t >= 0.0) {
        return Err(Error::Precondition(
            "reach bracket needs L > 0 and t ≥ 0".into(),
        ));
    }
    let inf_boundary_v = target.inf_on_boundary(v, 720).ok_or_else(|| {
        Error::Precondition(format!("cannot sample the boundary of {}", target.label()))
    })?;
    let level = rate_floor * t + inf_boundary_v;
    let mut entries = Vec::with_capacity(states.len());
    for (j, x) in states.iter().enumerate() {
        let vx = v.value(x);
        let simulated_fraction = if target.contains(x) {
            1.0
        } else if t < dt {
            0.0
        } else {
            let spec = MetricsSpec {
                targets: vec![target.clone()],
                ..Default::default()
            };
            let run = run_monte_carlo(
                sde,
                x,
                &SimParams::new(dt, t),
                paths_per_state,
                derive_seed(master_seed, j as u64),
                &spec,
            )?;
            run.report.aggregates.entered_fraction[0]
        };
        entries.push(ReachEntry {
            state: x.as_slice().to_vec(),
            v: vx,
            predicted_inside: vx <= level,
            simulated_fraction,
            simulated_inside: simulated_fraction >= 0.99,
        });
    }
    let violations = entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.predicted_inside && !e.simulated_inside)
        .map(|(i, _)| i)
        .collect();
    Ok(ReachBracket {
        t,
        rate_floor,
        inf_boundary_v,
        entries,
        violations,
    })
}
