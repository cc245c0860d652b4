use super::certify::{
    attractor_distance, decrease_certificate, exponential_rate_fit, first_entry_time,
};
use super::{euler_maruyama, PathFunctionals, Sde, SdePath, SimParams};
use crate::model::TargetSet;
use crate::rng::derive_seed;
use crate::{Error, Result, ScalarField, State};
use rayon::prelude::*;
use serde::Serialize;

/// What to measure on each path.
#[derive(Clone, Default)]
pub struct MetricsSpec {
    pub v: Option<ScalarField>,
    pub l: Option<ScalarField>,
    pub targets: Vec<TargetSet>,
    /// Set the tail distance is measured to (typically the zero set of `l`).
    pub attractor: Option<TargetSet>,
    /// Number of evenly spaced grid times at which the cross-path spread of `V` is recorded.
    pub cross_sections: usize,
    /// Number of leading paths whose full trajectories are returned.
    pub keep_paths: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathSummary {
    pub index: usize,
    pub seed: u64,
    pub steps: usize,
    pub escaped: bool,
    pub sup_norm: f64,
    pub final_norm: f64,
    pub sup_v: Option<f64>,
    pub final_v: Option<f64>,
    /// First grid time in each target, in `MetricsSpec::targets` order.
    pub entry_times: Vec<Option<f64>>,
    /// `max_t V(X_t) + ∫₀ᵗ l − V(x₀)`.
    pub decrease_violation: Option<f64>,
    pub fitted_rate: Option<f64>,
    pub attractor_tail_distance: Option<f64>,
    /// State coordinates that stay bit-identical to their initial value along the path.
    pub constant_coordinates: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Quantiles {
    pub min: f64,
    pub p05: f64,
    pub median: f64,
    pub p95: f64,
    pub max: f64,
}

impl Quantiles {
    /// Nearest-rank quantiles; `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let rank = |q: f64| {
            let k = (q * v.len() as f64).ceil() as usize;
            v[k.clamp(1, v.len()) - 1]
        };
        Some(Self {
            min: v[0],
            p05: rank(0.05),
            median: rank(0.5),
            p95: rank(0.95),
            max: v[v.len() - 1],
        })
    }
}

/// Cross-path statistics of `V(X_t)` at one grid time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossSection {
    pub t: f64,
    pub paths: usize,
    pub mean: f64,
    pub variance: f64,
    /// `variance / mean²` (0 when the mean vanishes).
    pub relative_variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregates {
    pub escaped_fraction: f64,
    pub sup_norm: Option<Quantiles>,
    pub final_norm: Option<Quantiles>,
    pub entered_fraction: Vec<f64>,
    pub max_decrease_violation: Option<f64>,
    pub mean_fitted_rate: Option<f64>,
    pub max_attractor_tail_distance: Option<f64>,
    pub v_cross_sections: Vec<CrossSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub path_count: usize,
    pub horizon: f64,
    pub dt: f64,
    pub blowup_bound: f64,
    pub master_seed: u64,
    pub initial_state: Vec<f64>,
    pub paths: Vec<PathSummary>,
    pub aggregates: Aggregates,
}

#[derive(Clone, Debug)]
pub struct MonteCarloRun {
    pub report: MonteCarloReport,
    /// Full trajectories of the first `keep_paths` paths.
    pub paths: Vec<SdePath>,
}

fn summarize(index: usize, path: &SdePath, spec: &MetricsSpec) -> PathSummary {
    let norms: Vec<f64> = path.states.iter().map(|x| x.norm()).collect();
    let fit = spec.v.as_ref().map(|v| exponential_rate_fit(path, v));
    PathSummary {
        index,
        seed: path.seed,
        steps: path.len() - 1,
        escaped: path.escaped,
        sup_norm: norms.iter().copied().fold(0.0, f64::max),
        final_norm: *norms.last().expect("nonempty path"),
        sup_v: (!path.v_values.is_empty()).then(|| {
            path.v_values
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        }),
        final_v: path.v_values.last().copied(),
        entry_times: spec
            .targets
            .iter()
            .map(|t| first_entry_time(path, t))
            .collect(),
        decrease_violation: match (&spec.v, &spec.l) {
            (Some(v), Some(l)) => Some(decrease_certificate(path, v, l)),
            _ => None,
        },
        fitted_rate: fit,
        attractor_tail_distance: spec.attractor.as_ref().map(|m| attractor_distance(path, m)),
        constant_coordinates: (0..path.states[0].len())
            .filter(|&i| {
                let x0 = path.states[0][i].to_bits();
                path.states.iter().all(|x| x[i].to_bits() == x0)
            })
            .collect(),
    }
}

fn cross_sections(
    paths: &[SdePath],
    params: &SimParams,
    count: usize,
) -> Result<Vec<CrossSection>> {
    if count == 0 || paths.iter().any(|p| p.v_values.is_empty()) {
        return Ok(Vec::new());
    }
    let steps = params.steps()?;
    let mut indices: Vec<usize> = if count == 1 {
        vec![steps]
    } else {
        (0..count).map(|j| j * steps / (count - 1)).collect()
    };
    indices.dedup();
    Ok(indices
        .into_iter()
        .filter_map(|i| {
            let vals: Vec<f64> = paths
                .iter()
                .filter_map(|p| p.v_values.get(i).copied())
                .collect();
            if vals.is_empty() {
                return None;
            }
            // shifted by the first value so identical samples give exactly zero
            let n = vals.len() as f64;
            let shift = vals[0];
            let mean_d = vals.iter().map(|v| v - shift).sum::<f64>() / n;
            let variance = vals
                .iter()
                .map(|v| (v - shift - mean_d).powi(2))
                .sum::<f64>()
                / n;
            let mean = shift + mean_d;
            Some(CrossSection {
                t: i as f64 * params.dt,
                paths: vals.len(),
                mean,
                variance,
                relative_variance: if mean == 0.0 {
                    0.0
                } else {
                    variance / (mean * mean)
                },
            })
        })
        .collect())
}

fn aggregate(summaries: &[PathSummary], sections: Vec<CrossSection>, targets: usize) -> Aggregates {
    let n = summaries.len() as f64;
    let collect = |f: &dyn Fn(&PathSummary) -> Option<f64>| -> Vec<f64> {
        summaries.iter().filter_map(f).collect()
    };
    let max_of = |v: Vec<f64>| v.into_iter().reduce(f64::max);
    let rates = collect(&|s| s.fitted_rate);
    Aggregates {
        escaped_fraction: summaries.iter().filter(|s| s.escaped).count() as f64 / n,
        sup_norm: Quantiles::of(&collect(&|s| Some(s.sup_norm))),
        final_norm: Quantiles::of(&collect(&|s| Some(s.final_norm))),
        entered_fraction: (0..targets)
            .map(|k| {
                summaries
                    .iter()
                    .filter(|s| s.entry_times[k].is_some())
                    .count() as f64
                    / n
            })
            .collect(),
        max_decrease_violation: max_of(collect(&|s| s.decrease_violation)),
        mean_fitted_rate: (!rates.is_empty())
            .then(|| rates.iter().sum::<f64>() / rates.len() as f64),
        max_attractor_tail_distance: max_of(collect(&|s| s.attractor_tail_distance)),
        v_cross_sections: sections,
    }
}

/// Simulates `path_count` paths from `x0`; path `i` uses `derive_seed(master_seed, i)`.
/// Paths run concurrently and are folded in index order, so the report only depends on
/// the inputs.
pub fn run_monte_carlo(
    sde: &Sde,
    x0: &State,
    params: &SimParams,
    path_count: usize,
    master_seed: u64,
    spec: &MetricsSpec,
) -> Result<MonteCarloRun> {
    if path_count == 0 {
        return Err(Error::Precondition("path_count must be at least 1".into()));
    }
    params.steps()?;
    let functionals = PathFunctionals {
        v: spec.v.clone(),
        l: spec.l.clone(),
    };
    let mut paths = (0..path_count)
        .into_par_iter()
        .map(|i| {
            euler_maruyama(
                sde,
                x0,
                params,
                derive_seed(master_seed, i as u64),
                &functionals,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let summaries: Vec<PathSummary> = paths
        .par_iter()
        .enumerate()
        .map(|(i, p)| summarize(i, p, spec))
        .collect();
    let sections = cross_sections(&paths, params, spec.cross_sections)?;
    let aggregates = aggregate(&summaries, sections, spec.targets.len());
    Ok(MonteCarloRun {
        report: MonteCarloReport {
            path_count,
            horizon: params.horizon,
            dt: params.dt,
            blowup_bound: params.blowup_bound,
            master_seed,
            initial_state: x0.as_slice().to_vec(),
            paths: summaries,
            aggregates,
        },
        paths: {
            paths.truncate(spec.keep_paths);
            paths
        },
    })
}
