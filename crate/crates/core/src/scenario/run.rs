use super::model::Model;
use super::{
    compile_target, ControlMode, DumpLayout, SamplerSpec, Scenario, SimulationSpec, Stage,
    SynthesisMethod, SynthesisSpec, VerifySpec,
};
use crate::feedback::{
    closed_loop, saturation_check, synthesize_multi_input, synthesize_single_input, FeedbackLaw,
    LawMetadata, SaturationReport, SynthesisOptions, SynthesisProbeReport,
};
use crate::model::{fit_comparison_pair, sphere_directions, TargetSet};
use crate::simulator::{
    noise_free_v_check, reach_set_bracket, run_monte_carlo, stability_certificate,
    target_bound_check, write_long_csv, write_path_csv, ControlPolicy, MetricsSpec,
    MonteCarloReport, Sde, SdePath, SimParams,
};
use crate::verifier::{
    check_viability_boundary, verify_region, Condition, ConditionId, Sampler, Tolerances,
    VerificationReport,
};
use crate::{Error, Result, State};
use serde::Serialize;
use serde_json::{json, Value};
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynthesisSummary {
    pub metadata: LawMetadata,
    pub probe_report: SynthesisProbeReport,
    pub saturation: Option<SaturationReport>,
}

/// One requested check and whether it passed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificateOutcome {
    pub name: String,
    pub passed: bool,
    pub summary: String,
    pub detail: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
}

/// Everything a run produced except wall-clock timings, which live in a separate file so
/// the report is reproducible byte for byte.
///
/// `passed` is the conjunction of: no stage error, and every entry of `certificates`
/// passed. Certificates are one per `[[verify]]` block (pass fraction at least
/// `min_pass_fraction`), one for synthesis (no flagged probe) and one per `[certify.*]`
/// table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: Scenario,
    pub model_id: String,
    pub verification: Vec<VerificationReport>,
    pub synthesis: Option<SynthesisSummary>,
    pub monte_carlo: Option<MonteCarloReport>,
    pub certificates: Vec<CertificateOutcome>,
    pub stage_errors: Vec<StageError>,
    pub passed: bool,
    pub artifacts: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

/// Result of [`run`]: the report, timings and the trajectories selected for dumping.
pub struct RunOutcome {
    pub report: RunReport,
    pub timings: Vec<StageTiming>,
    pub paths: Vec<SdePath>,
    /// Bound `γ₁⁻¹(γ₂(|x₀|))` on `sup |X_t|` when a stability certificate was computed.
    pub norm_bound: Option<f64>,
}

impl RunOutcome {
    /// 0 when the run passed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.report.passed {
            0
        } else {
            1
        }
    }

    /// Writes `report.json`, `timings.json` and, when the simulation stage ran, the CSV
    /// dumps and `plot.py` into `dir`. Returns the written files.
    pub fn write(&mut self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut artifacts = Vec::new();
        let sim = self.report.scenario.simulation.clone();
        let simulated = self.report.monte_carlo.is_some();
        if let (true, Some(sim)) = (simulated, &sim) {
            match sim.layout {
                DumpLayout::PerPath if !self.paths.is_empty() => {
                    fs::create_dir_all(dir.join("paths"))?;
                    for (i, p) in self.paths.iter().enumerate() {
                        let name = format!("paths/path_{i:04}.csv");
                        write_path_csv(p, BufWriter::new(fs::File::create(dir.join(&name))?))?;
                        artifacts.push(name);
                    }
                }
                DumpLayout::Long if !self.paths.is_empty() => {
                    let name = "paths.csv".to_string();
                    write_long_csv(
                        &self.paths,
                        BufWriter::new(fs::File::create(dir.join(&name))?),
                    )?;
                    artifacts.push(name);
                }
                _ => {}
            }
            if !artifacts.is_empty() {
                let name = "plot.py".to_string();
                fs::write(dir.join(&name), plot_script(sim, self.norm_bound))?;
                artifacts.push(name);
            }
        }
        artifacts.insert(0, "report.json".into());
        self.report.artifacts = artifacts.clone();
        let mut text = serde_json::to_string_pretty(&self.report)?;
        text.push('\n');
        fs::write(dir.join("report.json"), text)?;
        let mut t = serde_json::to_string_pretty(&self.timings)?;
        t.push('\n');
        fs::write(dir.join("timings.json"), t)?;
        for a in &artifacts {
            written.push(dir.join(a));
        }
        written.push(dir.join("timings.json"));
        Ok(written)
    }
}

fn plot_script(sim: &SimulationSpec, bound: Option<f64>) -> String {
    let (files, long) = match sim.layout {
        DumpLayout::Long => ("[\"paths.csv\"]".to_string(), "True"),
        _ => (
            "sorted(glob.glob(os.path.join(HERE, \"paths\", \"path_*.csv\")))".to_string(),
            "False",
        ),
    };
    let bound = bound.map_or("None".to_string(), |b| format!("{b:.17e}"));
    format!(
        r#"# Plots |X_t| and V(X_t) for the dumped paths. Requires numpy and matplotlib.
import glob
import os

import matplotlib.pyplot as plt
import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
LONG = {long}
NORM_BOUND = {bound}


def load(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    return data


def series():
    files = {files}
    for f in files:
        data = load(os.path.join(HERE, f))
        if LONG:
            for pid in np.unique(data["path_id"]):
                yield data[data["path_id"] == pid]
        else:
            yield data


def main():
    fig, (ax_norm, ax_v) = plt.subplots(2, 1, sharex=True, figsize=(8, 6))
    for d in series():
        xs = [n for n in d.dtype.names if n.startswith("x")]
        norm = np.sqrt(sum(d[n] ** 2 for n in xs))
        ax_norm.plot(d["t"], norm, lw=0.7, alpha=0.6)
        ax_v.plot(d["t"], d["V"], lw=0.7, alpha=0.6)
    if NORM_BOUND is not None:
        ax_norm.axhline(NORM_BOUND, color="k", ls="--", label="comparison bound")
        ax_norm.legend()
    ax_norm.set_ylabel("|X_t|")
    ax_v.set_ylabel("V(X_t)")
    ax_v.set_xlabel("t")
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, "paths.png"), dpi=150)


if __name__ == "__main__":
    main()
"#
    )
}

fn sampler(spec: &SamplerSpec, dim: usize, seed: u64) -> Sampler {
    match spec {
        SamplerSpec::Annulus {
            r_min,
            r_max,
            count,
        } => Sampler::Annulus {
            r_min: *r_min,
            r_max: *r_max,
            count: *count,
        },
        SamplerSpec::Points { points } => {
            Sampler::Points(points.iter().map(|p| State::from_column_slice(p)).collect())
        }
        SamplerSpec::Sphere { radius, count } => Sampler::Points(
            sphere_directions(dim, *count, 0.0, seed)
                .into_iter()
                .map(|u| u * *radius)
                .collect(),
        ),
    }
}

fn verify_one(model: &Model, spec: &VerifySpec, tol: &Tolerances) -> Result<VerificationReport> {
    let n = model.dim();
    let smp = sampler(&spec.sampler, n, spec.seed);
    let rate = || {
        model
            .rate_field()
            .ok_or_else(|| Error::Scenario(format!("{} needs a rate function", spec.condition)))
    };
    let set = || {
        spec.set
            .as_ref()
            .ok_or_else(|| Error::Scenario(format!("{} needs `set`", spec.condition)))
            .and_then(|s| compile_target(s, model))
    };
    let condition = match spec.condition {
        ConditionId::Clf => Condition::Clf,
        ConditionId::StrictClf => Condition::StrictClf { rate: rate()? },
        ConditionId::Exponential => Condition::Exponential {
            lambda: spec
                .lambda
                .ok_or_else(|| Error::Scenario("exponential needs `lambda`".into()))?,
        },
        ConditionId::Radial => Condition::Radial,
        ConditionId::SetClf => Condition::SetClf {
            target: set()?,
            rate: rate()?,
        },
        ConditionId::Viability => {
            let points = smp.points(n, spec.seed)?;
            return check_viability_boundary(&model.system, &set()?, &points, None, tol);
        }
    };
    verify_region(
        &model.system,
        &model.candidate,
        &condition,
        &smp,
        tol,
        spec.seed,
    )
}

fn synthesize(
    model: &Model,
    spec: &SynthesisSpec,
    tol: &Tolerances,
) -> Result<(FeedbackLaw, SynthesisSummary)> {
    let sys = model
        .affine
        .as_ref()
        .ok_or_else(|| Error::Scenario("synthesis needs an affine model".into()))?;
    let l = model
        .rate_field()
        .ok_or_else(|| Error::Scenario("synthesis needs a rate function".into()))?;
    let p = &spec.probes;
    let mut opts = SynthesisOptions::annulus(sys.dim(), p.r_min, p.r_max, p.count, p.seed)?;
    opts.margin_tol = spec.margin_tol.unwrap_or(tol.margin_tol);
    opts.orth_tol = tol.orth_tol;
    let single = match spec.method {
        SynthesisMethod::Single => true,
        SynthesisMethod::Multi => false,
        SynthesisMethod::Auto => sys.input_count() == 1 && !sys.has_tau(),
    };
    let law = if single {
        synthesize_single_input(sys, &model.candidate, l, &opts)?
    } else {
        synthesize_multi_input(sys, &model.candidate, l, &opts)?
    };
    let saturation = match (&spec.saturation, sys.constraint_box()) {
        (Some(s), Some(b)) => Some(saturation_check(&law, b, s.r0, s.probes, s.levels)?),
        (Some(_), None) => {
            return Err(Error::Scenario(
                "a saturation sweep needs a constraint box on the inputs".into(),
            ))
        }
        _ => None,
    };
    let summary = SynthesisSummary {
        metadata: law.metadata().clone(),
        probe_report: law.probe_report().clone(),
        saturation,
    };
    Ok((law, summary))
}

fn build_sde(
    model: &Model,
    sim: &SimulationSpec,
    law: Option<&FeedbackLaw>,
    tol: &Tolerances,
) -> Result<Sde> {
    let affine = || {
        model
            .affine
            .as_ref()
            .ok_or_else(|| Error::Scenario("this control mode needs an affine model".into()))
    };
    match &sim.control {
        ControlMode::Synthesized => {
            let law = law.ok_or_else(|| {
                Error::Scenario(
                    "no synthesized law: the synthesize stage did not produce one".into(),
                )
            })?;
            closed_loop(affine()?, law)
        }
        ControlMode::Zero => {
            let sys = affine()?;
            closed_loop(sys, &FeedbackLaw::zero(sys))
        }
        ControlMode::Witness => Sde::from_system(
            &model.system,
            ControlPolicy::Witness {
                candidate: model.candidate.clone(),
                orth_tol: tol.orth_tol,
            },
        ),
        ControlMode::Fixed(i) => Sde::from_system(&model.system, ControlPolicy::Fixed(*i)),
        ControlMode::Schedule {
            breakpoints,
            indices,
        } => Sde::from_system(
            &model.system,
            ControlPolicy::Schedule {
                breakpoints: breakpoints.clone(),
                indices: indices.clone(),
            },
        ),
    }
}

fn outcome(name: &str, passed: bool, summary: String, detail: Value) -> CertificateOutcome {
    CertificateOutcome {
        name: name.to_string(),
        passed,
        summary,
        detail,
    }
}

struct SimState {
    sde: Sde,
    report: MonteCarloReport,
    x0: State,
    targets: Vec<TargetSet>,
}

/// Runs the requested stages in order. Stage failures are recorded in the report; nothing
/// here touches the file system.
pub fn run(scenario: &Scenario) -> Result<RunOutcome> {
    let model = scenario.validate()?;
    let tol: Tolerances = scenario.tolerances.into();
    let mut report = RunReport {
        scenario: scenario.clone(),
        model_id: model.id.clone(),
        verification: Vec::new(),
        synthesis: None,
        monte_carlo: None,
        certificates: Vec::new(),
        stage_errors: Vec::new(),
        passed: false,
        artifacts: Vec::new(),
    };
    let mut timings = Vec::new();
    let mut kept_paths = Vec::new();
    let mut norm_bound = None;
    let fail = |report: &mut RunReport, stage: Stage, e: Error| {
        report.stage_errors.push(StageError {
            stage,
            message: e.to_string(),
        })
    };

    if scenario.wants(Stage::Verify) && !scenario.verify.is_empty() {
        let start = Instant::now();
        for (i, spec) in scenario.verify.iter().enumerate() {
            let name = format!("verify[{i}]:{}", spec.condition);
            match verify_one(&model, spec, &tol) {
                Ok(r) => {
                    let ok = r.total > 0 && r.pass_fraction >= spec.min_pass_fraction;
                    report.certificates.push(outcome(
                        &name,
                        ok,
                        format!(
                            "{}/{} points certified (required fraction {})",
                            r.passed, r.total, spec.min_pass_fraction
                        ),
                        json!({ "pass_fraction": r.pass_fraction }),
                    ));
                    report.verification.push(r);
                }
                Err(e) => {
                    report
                        .certificates
                        .push(outcome(&name, false, e.to_string(), Value::Null));
                    fail(&mut report, Stage::Verify, e);
                }
            }
        }
        timings.push(StageTiming {
            stage: Stage::Verify,
            seconds: start.elapsed().as_secs_f64(),
        });
    }

    let mut law = None;
    if let (true, Some(spec)) = (scenario.wants(Stage::Synthesize), &scenario.synthesis) {
        let start = Instant::now();
        match synthesize(&model, spec, &tol) {
            Ok((l, summary)) => {
                let p = &summary.probe_report;
                report.certificates.push(outcome(
                    "synthesis",
                    p.passed(),
                    format!(
                        "{} probes, {} flagged, max decrease excess {:.3e}",
                        p.probes,
                        p.flagged.len(),
                        p.max_decrease_excess
                    ),
                    json!({
                        "identity_max_residual": p.identity_max_residual,
                        "orth_max_residual": p.orth_max_residual,
                    }),
                ));
                report.synthesis = Some(summary);
                law = Some(l);
            }
            Err(e) => {
                report
                    .certificates
                    .push(outcome("synthesis", false, e.to_string(), Value::Null));
                fail(&mut report, Stage::Synthesize, e);
            }
        }
        timings.push(StageTiming {
            stage: Stage::Synthesize,
            seconds: start.elapsed().as_secs_f64(),
        });
    }

    let mut sim_state = None;
    if let (true, Some(sim)) = (scenario.wants(Stage::Simulate), &scenario.simulation) {
        let start = Instant::now();
        match simulate(&model, scenario, sim, law.as_ref(), &tol) {
            Ok((state, paths)) => {
                report.monte_carlo = Some(state.report.clone());
                kept_paths = paths;
                sim_state = Some(state);
            }
            Err(e) => fail(&mut report, Stage::Simulate, e),
        }
        timings.push(StageTiming {
            stage: Stage::Simulate,
            seconds: start.elapsed().as_secs_f64(),
        });
    }

    if scenario.wants(Stage::Certify) && scenario.certify != Default::default() {
        let start = Instant::now();
        match &sim_state {
            Some(s) => {
                let (outs, bound) = certify(&model, scenario, s);
                norm_bound = bound;
                for o in outs {
                    match o {
                        Ok(c) => report.certificates.push(c),
                        Err((name, e)) => {
                            report.certificates.push(outcome(
                                &name,
                                false,
                                e.to_string(),
                                Value::Null,
                            ));
                            fail(&mut report, Stage::Certify, e);
                        }
                    }
                }
            }
            None => fail(
                &mut report,
                Stage::Certify,
                Error::Scenario("certificates need a completed simulate stage".into()),
            ),
        }
        timings.push(StageTiming {
            stage: Stage::Certify,
            seconds: start.elapsed().as_secs_f64(),
        });
    }

    report.passed = report.stage_errors.is_empty() && report.certificates.iter().all(|c| c.passed);
    Ok(RunOutcome {
        report,
        timings,
        paths: kept_paths,
        norm_bound,
    })
}

fn simulate(
    model: &Model,
    scenario: &Scenario,
    sim: &SimulationSpec,
    law: Option<&FeedbackLaw>,
    tol: &Tolerances,
) -> Result<(SimState, Vec<SdePath>)> {
    let sde = build_sde(model, sim, law, tol)?;
    let targets = scenario
        .targets
        .iter()
        .map(|t| compile_target(t, model))
        .collect::<Result<Vec<_>>>()?;
    let attractor = scenario
        .certify
        .attractor
        .as_ref()
        .map(|a| compile_target(&a.set, model))
        .transpose()?;
    let spec = MetricsSpec {
        v: Some(model.candidate.value_field()),
        l: model.rate_field(),
        targets: targets.clone(),
        attractor,
        cross_sections: sim.cross_sections,
        keep_paths: if sim.layout == DumpLayout::None {
            0
        } else {
            sim.dump_paths
        },
    };
    let mut params = SimParams::new(sim.dt, sim.horizon);
    params.blowup_bound = sim.blowup_bound;
    let x0 = State::from_column_slice(&sim.x0);
    let run = run_monte_carlo(&sde, &x0, &params, sim.paths, sim.master_seed, &spec)?;
    Ok((
        SimState {
            sde,
            report: run.report,
            x0,
            targets,
        },
        run.paths,
    ))
}

type CertResult = std::result::Result<CertificateOutcome, (String, Error)>;

fn certify(model: &Model, scenario: &Scenario, s: &SimState) -> (Vec<CertResult>, Option<f64>) {
    let c = &scenario.certify;
    let agg = &s.report.aggregates;
    let mut out: Vec<CertResult> = Vec::new();
    let mut bound = None;
    let tag = |name: &'static str| move |e: Error| (name.to_string(), e);

    if let Some(st) = &c.stability {
        let r = fit_comparison_pair(&model.candidate, &st.radii, st.angular_samples)
            .map(|pair| {
                let cert = stability_certificate(
                    &s.report,
                    &pair,
                    &s.x0,
                    st.cert_tol,
                    st.conv_radius.unwrap_or(f64::INFINITY),
                );
                bound = Some(cert.bound);
                let ok = cert.bounded_fraction >= st.min_fraction
                    && (st.conv_radius.is_none() || cert.converged_fraction >= st.min_fraction);
                outcome(
                    "stability",
                    ok,
                    match st.conv_radius {
                        Some(r) => format!(
                            "{:.4} of paths stay within {:.4}, {:.4} end within {r} (required {})",
                            cert.bounded_fraction,
                            cert.bound * (1.0 + st.cert_tol),
                            cert.converged_fraction,
                            st.min_fraction
                        ),
                        None => format!(
                            "{:.4} of paths stay within {:.4} (required {})",
                            cert.bounded_fraction,
                            cert.bound * (1.0 + st.cert_tol),
                            st.min_fraction
                        ),
                    },
                    json!({ "certificate": cert, "comparison_pair": pair }),
                )
            })
            .map_err(tag("stability"));
        out.push(r);
    }
    if let Some(d) = &c.decrease {
        let r = match agg.max_decrease_violation {
            Some(v) => {
                let scaled = v / s.report.dt.sqrt();
                Ok(outcome(
                    "decrease",
                    scaled <= d.max_scaled_violation,
                    format!(
                        "max violation {v:.3e}, C = violation/sqrt(dt) = {scaled:.3e} (allowed {:.3e})",
                        d.max_scaled_violation
                    ),
                    json!({ "max_violation": v, "scaled_violation": scaled }),
                ))
            }
            None => Err((
                "decrease".to_string(),
                Error::Scenario("decrease needs a rate function".into()),
            )),
        };
        out.push(r);
    }
    if let Some(e) = &c.exponential {
        let r = match agg.mean_fitted_rate {
            Some(rate) => {
                let rel = (rate - e.expected).abs() / e.expected.abs();
                Ok(outcome(
                    "exponential",
                    rel <= e.rel_tol,
                    format!(
                        "mean fitted rate {rate:.5} vs {} (relative error {rel:.3e})",
                        e.expected
                    ),
                    json!({ "fitted_rate": rate, "relative_error": rel }),
                ))
            }
            None => Err((
                "exponential".to_string(),
                Error::Scenario("no fitted rate".into()),
            )),
        };
        out.push(r);
    }
    if let Some(tb) = &c.target_bound {
        let r = target_bound_check(
            &s.report,
            tb.target,
            &model.candidate,
            tb.rate_floor,
            &s.targets[tb.target],
            &s.x0,
            tb.boundary_samples,
        )
        .map(|chk| {
            outcome(
                "target_bound",
                chk.passed(),
                format!(
                    "{} of {} paths entered within the bound {:.4} (latest entry {:?})",
                    chk.within_count, s.report.path_count, chk.bound, chk.max_entry_time
                ),
                json!(chk),
            )
        })
        .map_err(tag("target_bound"));
        out.push(r);
    }
    if let Some(a) = &c.attractor {
        let r = match agg.max_attractor_tail_distance {
            Some(d) => Ok(outcome(
                "attractor",
                d <= a.max_distance,
                format!("max tail distance {d:.3e} (allowed {:.3e})", a.max_distance),
                json!({ "max_tail_distance": d }),
            )),
            None => Err((
                "attractor".to_string(),
                Error::Scenario("no tail distance".into()),
            )),
        };
        out.push(r);
    }
    if let Some(nf) = &c.noise_free_v {
        let chk = noise_free_v_check(&s.report, nf.factor);
        out.push(Ok(outcome(
            "noise_free_v",
            chk.passed,
            format!(
                "max relative variance {:.3e} (threshold {:.3e})",
                chk.max_relative_variance, chk.threshold
            ),
            json!(chk),
        )));
    }
    if let Some(rb) = &c.reach_bracket {
        let states: Vec<State> = rb
            .states
            .iter()
            .map(|p| State::from_column_slice(p))
            .collect();
        let r = reach_set_bracket(
            &s.sde,
            &model.candidate,
            &s.targets[rb.target],
            rb.t,
            rb.rate_floor,
            &states,
            rb.paths_per_state,
            s.report.dt,
            s.report.master_seed,
        )
        .map(|b| {
            outcome(
                "reach_bracket",
                b.passed(),
                format!(
                    "{} states, {} violations",
                    b.entries.len(),
                    b.violations.len()
                ),
                json!(b),
            )
        })
        .map_err(tag("reach_bracket"));
        out.push(r);
    }
    if let Some(ic) = &c.invariant_coordinate {
        let k = ic.coordinate;
        let held = s
            .report
            .paths
            .iter()
            .filter(|p| !p.escaped && p.constant_coordinates.contains(&k))
            .count();
        out.push(Ok(outcome(
            "invariant_coordinate",
            held == s.report.path_count,
            format!(
                "coordinate {} bit-identical on {held} of {} paths",
                model.state_names[k], s.report.path_count
            ),
            json!({ "coordinate": k, "held": held }),
        )));
    }
    (out, bound)
}
