//! Acceptance criteria. Runs as a plain binary (no libtest harness) so that every criterion
//! prints exactly one PASS/FAIL line; the process exits nonzero if any criterion fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};
use stochstab::feedback::{
    field, synthesize_multi_input, synthesize_single_input, AffineSystem, SynthesisOptions,
};
use stochstab::model::fit_comparison_pair;
use stochstab::rng::{derive_seed, NoiseStream};
use stochstab::scenario::{
    builtin_scenario, list_builtins, run, ControlMode, RunOutcome, Scenario,
};
use stochstab::simulator::{euler_maruyama, PathFunctionals, Sde, SimParams};
use stochstab::verifier::constrained_hamiltonian;
use stochstab::{
    state, ControlSet, ControlSetSpec, ControlSystem, Error, LyapunovCandidate, Matrix,
    ScalarField, State,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<f64, String> {
    let took = start.elapsed();
    ensure(took <= limit, || {
        format!(
            "took {:.2}s, limit {:.0}s",
            took.as_secs_f64(),
            limit.as_secs_f64()
        )
    })?;
    Ok(took.as_secs_f64())
}

fn run_builtin(id: &str, edit: impl FnOnce(&mut Scenario)) -> Result<RunOutcome, String> {
    let mut sc = builtin_scenario(id).map_err(|e| e.to_string())?;
    edit(&mut sc);
    run(&sc).map_err(|e| e.to_string())
}

fn certificate<'a>(
    o: &'a RunOutcome,
    name: &str,
) -> Result<&'a stochstab::scenario::CertificateOutcome, String> {
    o.report
        .certificates
        .iter()
        .find(|c| c.name == name)
        .ok_or_else(|| format!("no {name} certificate in the report"))
}

// ---------------------------------------------------------------------------------------
// 1. Grid Hamiltonian against an exhaustive-loop oracle.
//
// All data are small multiples of 1/8, so every product and sum below is exact in binary
// floating point and the two implementations must agree bit for bit regardless of
// summation order, including which index wins a tie.

struct DyadicSystem {
    n: usize,
    m: usize,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
    t: Vec<Vec<f64>>,
    grid: Vec<[f64; 2]>,
}

fn dyadic(rng: &mut ChaCha8Rng, k: i32) -> f64 {
    rng.random_range(-k..=k) as f64 / 8.0
}

fn dyadic_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| dyadic(rng, 12)).collect())
        .collect()
}

impl DyadicSystem {
    fn random(rng: &mut ChaCha8Rng, quiet_first_row: bool) -> Self {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=3);
        let mut s = dyadic_matrix(rng, n, m);
        let mut t = dyadic_matrix(rng, n, m);
        if quiet_first_row {
            s[0].iter_mut().for_each(|v| *v = 0.0);
            t[0].iter_mut().for_each(|v| *v = 0.0);
        }
        let g = rng.random_range(20..=200);
        let grid = (0..g)
            .map(|_| {
                let a0 = if rng.random_bool(1.0 / 3.0) {
                    0.0
                } else {
                    dyadic(rng, 8)
                };
                let a1 = if rng.random_bool(0.5) {
                    0.0
                } else {
                    dyadic(rng, 8)
                };
                [a0, a1]
            })
            // without the zero control, generic costates leave nothing admissible
            .filter(|a| quiet_first_row || *a != [0.0, 0.0])
            .collect();
        Self {
            n,
            m,
            a: dyadic_matrix(rng, n, n),
            b: dyadic_matrix(rng, n, 2),
            s,
            t,
            grid,
        }
    }

    fn sigma(&self, alpha: &[f64]) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| {
                (0..self.m)
                    .map(|k| alpha[0] * self.s[i][k] + alpha[1] * self.t[i][k])
                    .collect()
            })
            .collect()
    }

    fn drift(&self, x: &[f64], alpha: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let ax: f64 = (0..self.n).map(|j| self.a[i][j] * x[j]).sum();
                ax + self.b[i][0] * alpha[0] + self.b[i][1] * alpha[1]
            })
            .collect()
    }

    fn system(self: &Arc<Self>) -> ControlSystem {
        let grid = ControlSet::new(ControlSetSpec::Finite {
            points: self.grid.iter().map(|p| p.to_vec()).collect(),
        })
        .expect("grid");
        let (d, s) = (self.clone(), self.clone());
        ControlSystem::new(
            "dyadic",
            self.n,
            self.m,
            move |x: &State, a: &stochstab::Control| {
                State::from_vec(d.drift(x.as_slice(), a.as_slice()))
            },
            move |_x: &State, a: &stochstab::Control| {
                let sig = s.sigma(a.as_slice());
                Matrix::from_fn(s.n, s.m, |i, k| sig[i][k])
            },
            grid,
        )
        .expect("system")
    }

    /// `(index, value)` of every admissible control, by plain loops.
    fn admissible_values(
        &self,
        x: &[f64],
        p: &[f64],
        y: &[Vec<f64>],
        orth_tol: f64,
    ) -> Vec<(usize, f64)> {
        let p_norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = orth_tol * (1.0 + p_norm);
        let mut out = Vec::new();
        for (idx, alpha) in self.grid.iter().enumerate() {
            let sig = self.sigma(alpha);
            let residual = (0..self.m)
                .map(|k| {
                    let c: f64 = (0..self.n).map(|i| sig[i][k] * p[i]).sum();
                    c * c
                })
                .sum::<f64>()
                .sqrt();
            if residual > scale {
                continue;
            }
            let f = self.drift(x, alpha);
            let mut value = -(0..self.n).map(|i| p[i] * f[i]).sum::<f64>();
            for i in 0..self.n {
                for j in 0..self.n {
                    let a_ij: f64 = 0.5 * (0..self.m).map(|k| sig[i][k] * sig[j][k]).sum::<f64>();
                    value -= a_ij * y[j][i];
                }
            }
            out.push((idx, value));
        }
        out
    }
}

/// `(value, first maximizing index)`.
fn first_max(values: &[(usize, f64)]) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for &(idx, value) in values {
        if best.is_none_or(|(b, _)| value > b) {
            best = Some((value, idx));
        }
    }
    best
}

fn grid_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0001);
    let orth_tol = 1e-8;
    let (mut compared, mut none_admissible, mut ties) = (0usize, 0usize, 0usize);
    for sys_index in 0..10 {
        let ds = Arc::new(DyadicSystem::random(&mut rng, sys_index % 2 == 0));
        let sys = ds.system();
        let n = ds.n;
        for _ in 0..100 {
            let x: Vec<f64> = (0..n).map(|_| dyadic(&mut rng, 16)).collect();
            let p: Vec<f64> = match rng.random_range(0..4) {
                0 => vec![0.0; n],
                1 => {
                    let mut p = vec![0.0; n];
                    p[0] = dyadic(&mut rng, 16);
                    p
                }
                _ => (0..n).map(|_| dyadic(&mut rng, 16)).collect(),
            };
            let mut y = vec![vec![0.0; n]; n];
            for (i, j) in (0..n).flat_map(|i| (i..n).map(move |j| (i, j))) {
                let v = dyadic(&mut rng, 16);
                y[i][j] = v;
                y[j][i] = v;
            }
            let values = ds.admissible_values(&x, &p, &y, orth_tol);
            let expected = first_max(&values);
            let got = constrained_hamiltonian(
                &sys,
                &State::from_vec(x.clone()),
                &State::from_vec(p.clone()),
                &Matrix::from_fn(n, n, |i, j| y[i][j]),
                orth_tol,
            );
            match (expected, got) {
                (None, Err(Error::NoAdmissibleControl { .. })) => none_admissible += 1,
                (Some((value, witness)), Ok(h)) => {
                    ensure(h.value == value && h.witness == witness, || {
                        format!(
                            "system {sys_index}: got ({}, {}) expected ({value}, {witness})",
                            h.value, h.witness
                        )
                    })?;
                    let attaining = values.iter().filter(|(_, v)| *v == value).count();
                    if attaining > 1 {
                        ties += 1;
                    }
                }
                (e, g) => return Err(format!("system {sys_index}: oracle {e:?}, library {g:?}")),
            }
            compared += 1;
        }
    }
    let secs = within_time(start, Duration::from_secs(5))?;
    Ok(format!(
        "{compared} queries on 10 systems agree exactly ({ties} with tied maximizers, \
         {none_admissible} with no admissible control) in {secs:.2}s"
    ))
}

// ---------------------------------------------------------------------------------------
// 2. Universal-formula identity and closed-loop decrease.

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Matrix {
    Matrix::from_fn(n, n, |_, _| scale * rng.random_range(-1.0..1.0))
}

fn quadratic_candidate(p: Matrix) -> LyapunovCandidate {
    let n = p.nrows();
    let (pv, pg, ph) = (p.clone(), p.clone(), p);
    LyapunovCandidate::new("quadratic", n, move |x: &State| 0.5 * x.dot(&(&pv * x)))
        .with_gradient(move |x: &State| &pg * x)
        .with_hessian(move |_x: &State| ph.clone())
}

fn linear_field(m: Matrix) -> stochstab::StateField {
    field(move |x: &State| &m * x)
}

fn feedback_identity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0002);
    let (mut probes, mut worst_identity, mut worst_excess) = (0, 0.0f64, f64::NEG_INFINITY);
    for k in 0..5 {
        let n = 2 + k % 2;
        let q = random_matrix(&mut rng, n, 0.5);
        let p = q.transpose() * &q + Matrix::identity(n, n) * 0.5;
        let g = Matrix::identity(n, n) + random_matrix(&mut rng, n, 0.3);
        let gs = (0..n)
            .map(|i| {
                let col = g.column(i).into_owned();
                field(move |_x: &State| col.clone())
            })
            .collect();
        let tau_gain = rng.random_range(0.5..1.5);
        let sys = AffineSystem::new(
            n,
            linear_field(random_matrix(&mut rng, n, 1.0)),
            gs,
            linear_field(random_matrix(&mut rng, n, 0.5)),
        )
        .map_err(|e| e.to_string())?
        .with_tau(field(move |x: &State| x * tau_gain));
        let rate = rng.random_range(0.1..1.0);
        let l: ScalarField = Arc::new(move |x: &State| rate * x.norm_squared());
        let opts = SynthesisOptions::annulus(n, 0.1, 2.0, 200, 100 + k as u64)
            .map_err(|e| e.to_string())?;
        let law = synthesize_multi_input(&sys, &quadratic_candidate(p), l, &opts)
            .map_err(|e| format!("system {k}: {e}"))?;
        let r = law.probe_report();
        ensure(!r.used_fd, || "finite differences were used".into())?;
        probes += r.probes;
        worst_identity = worst_identity.max(r.identity_max_residual);
        worst_excess = worst_excess.max(r.max_decrease_excess);
    }
    ensure(probes == 1000, || format!("{probes} probes evaluated"))?;
    ensure(worst_identity <= 1e-10, || {
        format!("identity residual {worst_identity:.3e} > 1e-10")
    })?;
    ensure(worst_excess <= 1e-8, || {
        format!("closed-loop generator + l/2 reaches {worst_excess:.3e} > 1e-8")
    })?;
    within_time(start, Duration::from_secs(5))?;
    Ok(format!(
        "{probes} probes on 5 systems: identity residual {worst_identity:.2e}, \
         max(generator + l/2) {worst_excess:.2e}"
    ))
}

// ---------------------------------------------------------------------------------------
// 3. Single-input law equals the multi-input law with one drift input and no controlled noise.

fn single_multi_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0003);
    let mut worst = 0.0f64;
    let mut points = 0;
    for k in 0..4 {
        let a = random_matrix(&mut rng, 2, 1.0);
        let b = state(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
        let c = rng.random_range(0.1..0.8);
        let sys = AffineSystem::new(
            2,
            linear_field(a),
            vec![field(move |_x: &State| b.clone())],
            field(move |x: &State| state(&[-c * x[1], c * x[0]])),
        )
        .map_err(|e| e.to_string())?;
        let v = quadratic_candidate(Matrix::identity(2, 2));
        let rate = rng.random_range(0.1..1.0);
        let l: ScalarField = Arc::new(move |x: &State| rate * x.norm_squared());
        let opts =
            SynthesisOptions::annulus(2, 0.05, 2.0, 25, 300 + k).map_err(|e| e.to_string())?;
        let single =
            synthesize_single_input(&sys, &v, l.clone(), &opts).map_err(|e| e.to_string())?;
        let multi = synthesize_multi_input(&sys, &v, l, &opts).map_err(|e| e.to_string())?;
        for x in &opts.probes {
            let (us, um) = (single.control(x), multi.control(x));
            ensure(us.len() == 2 && um.len() == 2, || {
                "control length differs from 2".into()
            })?;
            for i in 0..2 {
                let err = (us[i] - um[i]).abs() / us[i].abs().max(1.0);
                worst = worst.max(err);
            }
            points += 1;
        }
    }
    ensure(points == 100, || format!("{points} points compared"))?;
    ensure(worst <= 1e-10, || {
        format!("largest relative difference {worst:.3e} > 1e-10")
    })?;
    Ok(format!(
        "{points} points on 4 systems, largest relative difference {worst:.2e}"
    ))
}

// ---------------------------------------------------------------------------------------
// 4. Invariant circles of the step candidate.

fn krasovskii() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    for n in [2.0f64, 3.0] {
        let rho = 1.0 / n.sqrt();
        let o = run_builtin("krasovskii", |sc| {
            let sim = sc.simulation.as_mut().expect("simulation block");
            sim.x0 = vec![rho, 0.0];
            sim.paths = 100;
            sim.dt = 1e-3;
            sim.horizon = 10.0;
        })?;
        let mc = o
            .report
            .monte_carlo
            .as_ref()
            .ok_or("no Monte Carlo report")?;
        ensure(mc.path_count == 100, || format!("{} paths", mc.path_count))?;
        let constant = mc
            .paths
            .iter()
            .filter(|p| !p.escaped && p.constant_coordinates.contains(&0))
            .count();
        ensure(constant == 100, || {
            format!("rho constant on {constant}/100 paths from C{n}")
        })?;
        let inv = certificate(&o, "invariant_coordinate")?;
        ensure(inv.passed, || inv.summary.clone())?;
        let ver = o
            .report
            .verification
            .first()
            .ok_or("no verification report")?;
        // the first 20 sample points lie on the circles n = 2..6
        let on_circles = ver.verdicts.iter().take(20).filter(|v| v.passed()).count();
        ensure(on_circles == 20, || {
            format!("{on_circles}/20 circle points certified")
        })?;
        ensure(ver.passed == ver.total, || {
            format!("{}/{} points certified", ver.passed, ver.total)
        })?;
        ensure(o.report.passed, || "run did not pass".into())?;
        lines.push(format!("C{n}: 100/100 paths rho bit-exact"));
    }
    let secs = within_time(start, Duration::from_secs(30))?;
    Ok(format!(
        "{}; circle subjets certified for n = 2..6; {secs:.2}s",
        lines.join(", ")
    ))
}

// ---------------------------------------------------------------------------------------
// 5. Exponential decay without martingale part.

fn exponential_rate() -> Outcome {
    let start = Instant::now();
    let o = run_builtin("linear-tangential", |_| {})?;
    let mc = o
        .report
        .monte_carlo
        .as_ref()
        .ok_or("no Monte Carlo report")?;
    ensure(mc.path_count == 200, || format!("{} paths", mc.path_count))?;
    let rate = mc.aggregates.mean_fitted_rate.ok_or("no fitted rate")?;
    ensure((rate - 1.75).abs() <= 0.05 * 1.75, || {
        format!("fitted rate {rate} outside 1.75 ± 5%")
    })?;
    let exp = certificate(&o, "exponential")?;
    ensure(exp.passed, || exp.summary.clone())?;
    let nf = certificate(&o, "noise_free_v")?;
    ensure(nf.passed, || nf.summary.clone())?;
    let secs = within_time(start, Duration::from_secs(60))?;
    Ok(format!(
        "fitted rate {rate:.5} over 200 paths; {}; {secs:.2}s",
        nf.summary
    ))
}

// ---------------------------------------------------------------------------------------
// 6. Entry-time bound on a noise-free system.

fn target_bound() -> Outcome {
    let o = run_builtin("deterministic-linear", |_| {})?;
    let mc = o
        .report
        .monte_carlo
        .as_ref()
        .ok_or("no Monte Carlo report")?;
    let dt = mc.dt;
    let expected = 2f64.ln();
    let mut worst: f64 = 0.0;
    for p in &mc.paths {
        let t = p.entry_times[0].ok_or_else(|| format!("path {} never entered", p.index))?;
        worst = worst.max((t - expected).abs());
        ensure(t <= 1.5, || {
            format!("path {} entered at {t} > 1.5", p.index)
        })?;
    }
    ensure(worst <= dt, || {
        format!("entry time off ln 2 by {worst} > dt = {dt}")
    })?;
    let tb = certificate(&o, "target_bound")?;
    ensure(tb.passed, || tb.summary.clone())?;
    let bound = tb.detail["bound"].as_f64().ok_or("bound missing")?;
    ensure((bound - 1.5).abs() <= 1e-9, || {
        format!("bound {bound} differs from 1.5")
    })?;
    let frac = tb.detail["fraction_within"]
        .as_f64()
        .ok_or("fraction missing")?;
    ensure(frac == 1.0, || format!("fraction within {frac}"))?;
    Ok(format!(
        "{} paths enter within {worst:.1e} of ln 2, all below the bound {bound}",
        mc.path_count
    ))
}

// ---------------------------------------------------------------------------------------
// 7. Strong convergence of the scheme on dX = −X dt + 0.1 dB.
//
// The exact solution is built on the same Brownian increments the scheme consumed: over one
// step, I = ∫ e^{−(h−s)} dB_s is Gaussian jointly with ΔB, so it is drawn as its conditional
// mean given ΔB plus independent noise from a second stream.

fn rms_terminal_error(dt: f64, paths: usize, master: u64) -> Result<f64, String> {
    let noise = 0.1;
    let sde = Sde::autonomous(
        1,
        1,
        Arc::new(|x: &State| -x),
        Arc::new(move |_x: &State| Matrix::from_element(1, 1, noise)),
    );
    let params = SimParams::new(dt, 1.0);
    let steps = params.steps().map_err(|e| e.to_string())?;
    let decay = (-dt).exp();
    let cov = -(-dt).exp_m1();
    let var_i = -(-2.0 * dt).exp_m1() / 2.0;
    let resid_sd = (var_i - cov * cov / dt).max(0.0).sqrt();
    let mut sum_sq = 0.0;
    for i in 0..paths {
        let seed = derive_seed(master, i as u64);
        let path = euler_maruyama(
            &sde,
            &state(&[1.0]),
            &params,
            seed,
            &PathFunctionals::default(),
        )
        .map_err(|e| e.to_string())?;
        ensure(path.times.len() == steps + 1, || "path ended early".into())?;
        let brownian = NoiseStream::new(seed);
        let extra = NoiseStream::new(seed ^ 0x5A5A_5A5A_5A5A_5A5A);
        let (mut z, mut w) = ([0.0], [0.0]);
        let mut exact = 1.0;
        for n in 0..steps {
            brownian.fill_normals(n as u64, &mut z);
            extra.fill_normals(n as u64, &mut w);
            let db = dt.sqrt() * z[0];
            exact = decay * exact + noise * (cov / dt * db + resid_sd * w[0]);
        }
        let err = path.final_state()[0] - exact;
        sum_sq += err * err;
    }
    Ok((sum_sq / paths as f64).sqrt())
}

fn strong_convergence() -> Outcome {
    let coarse = rms_terminal_error(2e-3, 500, 0xACCE_0007)?;
    let fine = rms_terminal_error(1e-3, 500, 0xACCE_0107)?;
    let ratio = coarse / fine;
    ensure((1.2..=3.4).contains(&ratio), || {
        format!("error ratio {ratio:.3} outside [1.2, 3.4] (rms {coarse:.3e} vs {fine:.3e})")
    })?;
    Ok(format!(
        "rms terminal error {coarse:.3e} -> {fine:.3e}, ratio {ratio:.3}"
    ))
}

// ---------------------------------------------------------------------------------------
// 8. Reproducibility of every built-in.

fn collect_files(
    root: &Path,
    dir: &Path,
    out: &mut BTreeMap<PathBuf, Vec<u8>>,
) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("under root").to_path_buf();
            out.insert(rel, std::fs::read(&path)?);
        }
    }
    Ok(())
}

fn reproducibility() -> Outcome {
    let mut compared = 0;
    let ids: Vec<&str> = list_builtins().iter().map(|b| b.id).collect();
    for id in &ids {
        let mut outputs = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let mut o = run_builtin(id, |_| {})?;
            o.write(dir.path()).map_err(|e| e.to_string())?;
            let mut files = BTreeMap::new();
            collect_files(dir.path(), dir.path(), &mut files).map_err(|e| e.to_string())?;
            files.remove(Path::new("timings.json"));
            outputs.push(files);
        }
        let (a, b) = (&outputs[0], &outputs[1]);
        ensure(a.keys().eq(b.keys()), || {
            format!("{id}: different file sets")
        })?;
        ensure(a.contains_key(Path::new("report.json")), || {
            format!("{id}: no report")
        })?;
        for (name, bytes) in a {
            ensure(b[name] == *bytes, || {
                format!("{id}: {} differs", name.display())
            })?;
            compared += 1;
        }
    }
    Ok(format!(
        "{} built-ins, {compared} files byte-identical across two runs",
        ids.len()
    ))
}

// ---------------------------------------------------------------------------------------
// 9. Comparison envelopes of an anisotropic quadratic.

fn comparison_pair() -> Outcome {
    let v = LyapunovCandidate::new("anisotropic", 2, |x: &State| {
        x[0] * x[0] + 4.0 * x[1] * x[1]
    });
    let pair =
        fit_comparison_pair(&v, &[0.25, 0.5, 1.0, 2.0, 4.0], 360).map_err(|e| e.to_string())?;
    let dense = 200_000;
    let mut parts = Vec::new();
    for r in [0.5, 1.0, 2.0] {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..dense {
            let th = std::f64::consts::TAU * k as f64 / dense as f64;
            let val = v.value(&state(&[r * th.cos(), r * th.sin()]));
            lo = lo.min(val);
            hi = hi.max(val);
        }
        // homogeneous of degree 2: γ1(s) = lo s²/r², so γ1⁻¹(hi) = r √(hi / lo)
        let brute = r * (hi / lo).sqrt();
        let b = pair.bound(r);
        ensure((b - 2.0 * r).abs() <= 0.01 * 2.0 * r, || {
            format!("bound({r}) = {b}, expected {}", 2.0 * r)
        })?;
        ensure((b - brute).abs() <= 0.01 * brute, || {
            format!("bound({r}) = {b}, brute force {brute}")
        })?;
        parts.push(format!("bound({r}) = {b:.6}"));
    }
    Ok(parts.join(", "))
}

// ---------------------------------------------------------------------------------------
// 10. End to end through the command-line binary.

fn cli(args: &[&str]) -> Result<(i32, String), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_stochstab"))
        .args(args)
        .env_remove("STOCHSTAB_OUT_DIR")
        .output()
        .map_err(|e| e.to_string())?;
    let code = out.status.code().ok_or("terminated by signal")?;
    Ok((code, String::from_utf8_lossy(&out.stdout).into_owned()))
}

fn stability_of(report: &Path) -> Result<(bool, f64, u64), String> {
    let text = std::fs::read_to_string(report).map_err(|e| e.to_string())?;
    let json: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let cert = json["certificates"]
        .as_array()
        .and_then(|cs| cs.iter().find(|c| c["name"] == "stability"))
        .ok_or("no stability certificate")?;
    Ok((
        cert["passed"].as_bool().ok_or("passed missing")?,
        cert["detail"]["certificate"]["bounded_fraction"]
            .as_f64()
            .ok_or("fraction missing")?,
        cert["detail"]["certificate"]["path_count"]
            .as_u64()
            .ok_or("path count missing")?,
    ))
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().to_str().ok_or("non-utf8 temp dir")?;
    let (code, _) = cli(&["run", "--builtin", "radial-affine", "--out-dir", out])?;
    ensure(code == 0, || {
        format!("exit code {code} for the synthesized law")
    })?;
    let (passed, fraction, paths) = stability_of(&dir.path().join("radial-affine/report.json"))?;
    ensure(passed && fraction >= 0.99 && paths == 200, || {
        format!("stability passed={passed}, fraction {fraction} over {paths} paths")
    })?;

    let mut zero = builtin_scenario("radial-affine").map_err(|e| e.to_string())?;
    zero.name = "radial-affine-zero".into();
    zero.simulation.as_mut().expect("simulation block").control = ControlMode::Zero;
    let file = dir.path().join("zero.toml");
    std::fs::write(&file, zero.to_toml().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let (zcode, _) = cli(&["run", file.to_str().ok_or("path")?, "--out-dir", out])?;
    let (zpassed, zfraction, _) = stability_of(&dir.path().join("radial-affine-zero/report.json"))?;
    ensure(zcode == 1 && !zpassed, || {
        format!("zero law: exit code {zcode}, stability passed={zpassed}")
    })?;
    Ok(format!(
        "synthesized law: exit 0, bounded fraction {fraction} over {paths} paths; \
         zero law: exit 1, bounded fraction {zfraction}"
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("grid Hamiltonian matches exhaustive oracle", grid_oracle),
        ("universal formula identity and decrease", feedback_identity),
        (
            "single-input law equals multi-input law",
            single_multi_agreement,
        ),
        ("invariant circles of the step candidate", krasovskii),
        ("exponential decay rate and noise-free V", exponential_rate),
        ("entry-time bound", target_bound),
        ("strong convergence of the scheme", strong_convergence),
        ("byte-identical reruns", reproducibility),
        ("comparison envelopes", comparison_pair),
        ("end-to-end stabilization via the binary", end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
