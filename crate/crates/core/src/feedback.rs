//! Universal-formula feedback for control-affine diffusions
//! `dX = (f + Σ αᵢ gᵢ) dt + (σ + α_P τ) dB` with one Brownian channel.
//!
//! The diffusion control `h` cancels the component of the noise along `DV`; the drift
//! controls `kᵢ = −φ(γ, β) gᵢ·DV` then enforce strict decrease at rate `l/2`. Synthesized
//! laws are re-checked at probe points and carry the outcome in a [`SynthesisProbeReport`].

use crate::model::{ControlSet, ControlSystem, LyapunovCandidate};
use crate::simulator::Sde;
use crate::verifier::Sampler;
use crate::{Control, Error, Matrix, Result, ScalarField, State, StateField};
use serde::Serialize;
use std::fmt;
use std::sync::Arc;

/// Below this norm a law returns zero without touching derivatives.
pub const ORIGIN_RADIUS: f64 = 1e-12;

/// Wraps a closure as a [`StateField`].
pub fn field(f: impl Fn(&State) -> State + Send + Sync + 'static) -> StateField {
    Arc::new(f)
}

#[derive(Clone)]
pub struct AffineSystem {
    dim: usize,
    f: StateField,
    g: Vec<StateField>,
    sigma: StateField,
    tau: Option<StateField>,
    constraint_box: Option<Vec<(f64, f64)>>,
}

impl fmt::Debug for AffineSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AffineSystem")
            .field("dim", &self.dim)
            .field("inputs", &self.g.len())
            .field("controlled_noise", &self.tau.is_some())
            .field("constraint_box", &self.constraint_box)
            .finish()
    }
}

impl AffineSystem {
    /// Fails unless `f(0) = 0` and `σ(0) = 0`.
    pub fn new(dim: usize, f: StateField, g: Vec<StateField>, sigma: StateField) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("state dimension must be positive".into()));
        }
        let zero = State::zeros(dim);
        for (name, v) in [("f", f(&zero)), ("σ", sigma(&zero))] {
            if v.len() != dim {
                return Err(Error::Dimension(format!("{name} has length {}", v.len())));
            }
            if v.norm() > 1e-12 {
                return Err(Error::Precondition(format!(
                    "{name}(0) = {:?} must vanish",
                    v.as_slice()
                )));
            }
        }
        for (i, gi) in g.iter().enumerate() {
            if gi(&zero).len() != dim {
                return Err(Error::Dimension(format!("g{} has the wrong length", i + 1)));
            }
        }
        Ok(Self {
            dim,
            f,
            g,
            sigma,
            tau: None,
            constraint_box: None,
        })
    }

    pub fn with_tau(mut self, tau: StateField) -> Self {
        self.tau = Some(tau);
        self
    }

    pub fn with_constraint_box(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.constraint_box = Some(bounds);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of drift controls `P − 1`.
    pub fn input_count(&self) -> usize {
        self.g.len()
    }

    /// Length of the full control `(α₁, …, α_{P−1}, α_P)`.
    pub fn control_dim(&self) -> usize {
        self.g.len() + 1
    }

    pub fn constraint_box(&self) -> Option<&[(f64, f64)]> {
        self.constraint_box.as_deref()
    }

    pub fn has_tau(&self) -> bool {
        self.tau.is_some()
    }

    pub fn f(&self, x: &State) -> State {
        (self.f)(x)
    }

    pub fn g(&self, i: usize, x: &State) -> State {
        (self.g[i])(x)
    }

    pub fn sigma(&self, x: &State) -> State {
        (self.sigma)(x)
    }

    pub fn tau(&self, x: &State) -> State {
        match &self.tau {
            Some(t) => t(x),
            None => State::zeros(self.dim),
        }
    }

    /// `f + Σ uᵢ gᵢ`.
    pub fn drift_with(&self, x: &State, u: &[f64]) -> State {
        let mut d = self.f(x);
        for (gi, ui) in self.g.iter().zip(u) {
            if *ui != 0.0 {
                d += gi(x) * *ui;
            }
        }
        d
    }

    /// `σ + u_P τ` as an `N × 1` matrix.
    pub fn dispersion_with(&self, x: &State, u: &[f64]) -> Matrix {
        let mut s = self.sigma(x);
        if let (Some(t), Some(up)) = (&self.tau, u.get(self.g.len())) {
            if *up != 0.0 {
                s += t(x) * *up;
            }
        }
        Matrix::from_column_slice(self.dim, 1, s.as_slice())
    }

    /// The general controlled system obtained by letting the controls range over `grid`.
    pub fn control_system(&self, id: &str, grid: ControlSet) -> Result<ControlSystem> {
        if grid.dim() != self.control_dim() {
            return Err(Error::Dimension(format!(
                "control grid has dimension {}, system expects {}",
                grid.dim(),
                self.control_dim()
            )));
        }
        let a = self.clone();
        let b = self.clone();
        ControlSystem::new(
            id,
            self.dim,
            1,
            move |x: &State, u: &Control| a.drift_with(x, u.as_slice()),
            move |x: &State, u: &Control| b.dispersion_with(x, u.as_slice()),
            grid,
        )
    }
}

/// `φ(a, b) = (a + √(a² + b²)) / b`, with `φ(a, 0) = 0` for `a < 0`.
pub fn sontag_phi(a: f64, b: f64) -> Result<f64> {
    if !(b >= 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::PhiDomain { a, b });
    }
    if b == 0.0 {
        return if a < 0.0 {
            Ok(0.0)
        } else {
            Err(Error::PhiDomain { a, b })
        };
    }
    let r = a.hypot(b);
    if a < 0.0 && b < 1e-8 * a.abs() {
        Ok(b / (r - a))
    } else {
        Ok((a + r) / b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaValue {
    pub value: f64,
    /// Derivatives came from finite differences.
    pub used_fd: bool,
}

fn uses_fd(v: &LyapunovCandidate) -> bool {
    !(v.has_analytic_gradient() && v.has_analytic_hessian())
}

fn quad(m: &Matrix, s: &State) -> f64 {
    s.dot(&(m * s))
}

fn require_single(sys: &AffineSystem) -> Result<()> {
    if sys.input_count() != 1 || sys.has_tau() {
        return Err(Error::Precondition(
            "the single-input formula needs exactly one drift control and no controlled noise"
                .into(),
        ));
    }
    Ok(())
}

/// `f·DV + ½ σᵀD²Vσ + l/2` for a single-input system.
pub fn gamma_single(
    sys: &AffineSystem,
    v: &LyapunovCandidate,
    l: &ScalarField,
    x: &State,
) -> Result<GammaValue> {
    require_single(sys)?;
    if x.norm() == 0.0 {
        return Err(Error::Precondition("γ is evaluated off the origin".into()));
    }
    let dv = v.gradient(x);
    let d2v = v.hessian(x);
    Ok(GammaValue {
        value: sys.f(x).dot(&dv) + 0.5 * quad(&d2v, &sys.sigma(x)) + 0.5 * l(x),
        used_fd: uses_fd(v),
    })
}

/// Single-input universal gain `−(γ + √(γ² + b⁴)) / b`, zero when `b = 0`.
fn single_gain(gamma: f64, b: f64) -> f64 {
    if b == 0.0 {
        return 0.0;
    }
    let b2 = b * b;
    let s = gamma.hypot(b2);
    if gamma < 0.0 {
        -b * b2 / (s - gamma)
    } else {
        -(gamma + s) / b
    }
}

/// Diffusion control `h = −σ·DV / τ·DV`, or 0 where `σ·DV` already vanishes.
pub fn compute_h(
    sys: &AffineSystem,
    v: &LyapunovCandidate,
    x: &State,
    orth_tol: f64,
) -> Result<f64> {
    if x.norm() == 0.0 {
        return Err(Error::Precondition("h is evaluated off the origin".into()));
    }
    h_from_gradient(sys, &v.gradient(x), x, orth_tol)
}

fn h_from_gradient(sys: &AffineSystem, dv: &State, x: &State, orth_tol: f64) -> Result<f64> {
    let scale = orth_tol * (1.0 + dv.norm());
    let sigma_dv = sys.sigma(x).dot(dv);
    if sigma_dv.abs() <= scale {
        return Ok(0.0);
    }
    let tau_dv = sys.tau(x).dot(dv);
    if tau_dv.abs() <= scale {
        return Err(Error::NoDiffusionCancellation {
            x: x.as_slice().to_vec(),
            sigma_dv,
            tau_dv,
        });
    }
    Ok(-sigma_dv / tau_dv)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawKind {
    Zero,
    Constant,
    SingleInput,
    MultiInput,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LawMetadata {
    pub kind: LawKind,
    pub drift_formula: String,
    pub diffusion_formula: String,
    pub orth_tol: f64,
}

/// Pointwise quantities behind a law evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct LawEvaluation {
    pub k: Vec<f64>,
    pub h: f64,
    pub gamma: f64,
    pub beta: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SynthesisProbeReport {
    pub probes: usize,
    /// Probe points where the closed-loop decrease misses `−l/2` by more than `margin_tol`.
    pub flagged: Vec<Vec<f64>>,
    /// `max (closed-loop generator of V + l/2)`; nonpositive when every probe decreases.
    pub max_decrease_excess: f64,
    /// `max |γ − βφ(γ, β) + √(γ² + β²)| / max(1, √(γ² + β²))`.
    pub identity_max_residual: f64,
    /// `max |(σ + hτ)·DV| / (1 + |DV|)`.
    pub orth_max_residual: f64,
    pub used_fd: bool,
    pub margin_tol: f64,
}

impl SynthesisProbeReport {
    pub fn passed(&self) -> bool {
        self.flagged.is_empty()
    }
}

#[derive(Clone)]
#[allow(clippy::large_enum_variant)]
enum LawData {
    Zero,
    Constant(Vec<f64>),
    Formula {
        sys: AffineSystem,
        v: LyapunovCandidate,
        l: ScalarField,
    },
}

/// State feedback `x ↦ (k₁, …, k_{P−1}, h)`.
#[derive(Clone)]
pub struct FeedbackLaw {
    dim: usize,
    control_dim: usize,
    data: LawData,
    metadata: LawMetadata,
    probe_report: SynthesisProbeReport,
}

impl fmt::Debug for FeedbackLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeedbackLaw")
            .field("dim", &self.dim)
            .field("control_dim", &self.control_dim)
            .field("metadata", &self.metadata)
            .field("probe_report", &self.probe_report)
            .finish()
    }
}

impl FeedbackLaw {
    /// `k ≡ 0`, `h ≡ 0`: the open loop.
    pub fn zero(sys: &AffineSystem) -> Self {
        Self::fixed(sys.dim(), sys.control_dim(), LawData::Zero, LawKind::Zero)
    }

    /// Constant drift controls and `h ≡ 0`.
    pub fn constant(sys: &AffineSystem, k: Vec<f64>) -> Result<Self> {
        if k.len() != sys.input_count() {
            return Err(Error::Dimension(format!(
                "{} constant gains for {} inputs",
                k.len(),
                sys.input_count()
            )));
        }
        Ok(Self::fixed(
            sys.dim(),
            sys.control_dim(),
            LawData::Constant(k),
            LawKind::Constant,
        ))
    }

    fn fixed(dim: usize, control_dim: usize, data: LawData, kind: LawKind) -> Self {
        Self {
            dim,
            control_dim,
            data,
            metadata: LawMetadata {
                kind,
                drift_formula: "constant".into(),
                diffusion_formula: "zero".into(),
                orth_tol: 0.0,
            },
            probe_report: SynthesisProbeReport::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn metadata(&self) -> &LawMetadata {
        &self.metadata
    }

    pub fn probe_report(&self) -> &SynthesisProbeReport {
        &self.probe_report
    }

    /// Evaluates the law, surfacing premise violations as errors.
    pub fn evaluate(&self, x: &State) -> Result<LawEvaluation> {
        let inputs = self.control_dim - 1;
        let zero = LawEvaluation {
            k: vec![0.0; inputs],
            h: 0.0,
            gamma: 0.0,
            beta: 0.0,
        };
        match &self.data {
            LawData::Zero => Ok(zero),
            LawData::Constant(k) => Ok(LawEvaluation {
                k: k.clone(),
                ..zero
            }),
            LawData::Formula { .. } if x.norm() < ORIGIN_RADIUS => Ok(zero),
            LawData::Formula { sys, v, l } => match self.metadata.kind {
                LawKind::SingleInput => single_eval(sys, v, l, x),
                _ => multi_eval(sys, v, l, x, self.metadata.orth_tol),
            },
        }
    }

    /// The applied control. Where the premise fails at runtime the offending component is
    /// set to zero instead of aborting the path.
    pub fn control(&self, x: &State) -> Control {
        match self.evaluate(x) {
            Ok(e) => {
                let mut u = e.k;
                u.push(e.h);
                Control::from_vec(u)
            }
            Err(_) => self.fallback(x),
        }
    }

    fn fallback(&self, x: &State) -> Control {
        let mut u = Control::zeros(self.control_dim);
        if let LawData::Formula { sys, v, l } = &self.data {
            let dv = v.gradient(x);
            let h = h_from_gradient(sys, &dv, x, self.metadata.orth_tol).unwrap_or(0.0);
            let gamma = multi_gamma(sys, v, l, x, &dv, h);
            let b: Vec<f64> = (0..sys.input_count())
                .map(|i| sys.g(i, x).dot(&dv))
                .collect();
            let beta: f64 = b.iter().map(|bi| bi * bi).sum();
            let phi = sontag_phi(gamma, beta).unwrap_or(0.0);
            for (i, bi) in b.iter().enumerate() {
                u[i] = -phi * bi;
            }
            u[self.control_dim - 1] = h;
        }
        u
    }

    /// `(k, h)` evaluated at `x`, as a field usable by the simulator.
    pub fn policy(&self) -> Arc<dyn Fn(&State) -> Control + Send + Sync> {
        let law = self.clone();
        Arc::new(move |x: &State| law.control(x))
    }
}

fn single_eval(
    sys: &AffineSystem,
    v: &LyapunovCandidate,
    l: &ScalarField,
    x: &State,
) -> Result<LawEvaluation> {
    let dv = v.gradient(x);
    let d2v = v.hessian(x);
    let gamma = sys.f(x).dot(&dv) + 0.5 * quad(&d2v, &sys.sigma(x)) + 0.5 * l(x);
    let b = sys.g(0, x).dot(&dv);
    if b == 0.0 && gamma > 0.0 {
        return Err(Error::ClfPremise {
            x: x.as_slice().to_vec(),
            gamma,
        });
    }
    Ok(LawEvaluation {
        k: vec![single_gain(gamma, b)],
        h: 0.0,
        gamma,
        beta: b * b,
    })
}

fn multi_gamma(
    sys: &AffineSystem,
    v: &LyapunovCandidate,
    l: &ScalarField,
    x: &State,
    dv: &State,
    h: f64,
) -> f64 {
    let s = sys.sigma(x) + sys.tau(x) * h;
    sys.f(x).dot(dv) + 0.5 * quad(&v.hessian(x), &s) + 0.5 * l(x)
}

fn multi_eval(
    sys: &AffineSystem,
    v: &LyapunovCandidate,
    l: &ScalarField,
    x: &State,
    orth_tol: f64,
) -> Result<LawEvaluation> {
    let dv = v.gradient(x);
    let h = h_from_gradient(sys, &dv, x, orth_tol)?;
    let gamma = multi_gamma(sys, v, l, x, &dv, h);
    let b: Vec<f64> = (0..sys.input_count())
        .map(|i| sys.g(i, x).dot(&dv))
        .collect();
    let beta: f64 = b.iter().map(|bi| bi * bi).sum();
    if beta == 0.0 && gamma >= 0.0 {
        return Err(Error::ClfPremise {
            x: x.as_slice().to_vec(),
            gamma,
        });
    }
    let phi = sontag_phi(gamma, beta)?;
    Ok(LawEvaluation {
        k: b.iter().map(|bi| -phi * bi).collect(),
        h,
        gamma,
        beta,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisOptions {
    pub probes: Vec<State>,
    pub margin_tol: f64,
    pub orth_tol: f64,
}

impl SynthesisOptions {
    /// `count` probes in the annulus `[r_min, r_max]`, drawn with `seed`.
    pub fn annulus(dim: usize, r_min: f64, r_max: f64, count: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            probes: Sampler::Annulus {
                r_min,
                r_max,
                count,
            }
            .points(dim, seed)?,
            margin_tol: 1e-8,
            orth_tol: 1e-8,
        })
    }
}

/// Closed-loop generator of `V` plus `l/2`, together with the orthogonality residual.
fn closed_loop_excess(
    sys: &AffineSystem,
    v: &LyapunovCandidate,
    l: &ScalarField,
    x: &State,
    e: &LawEvaluation,
) -> (f64, f64) {
    let dv = v.gradient(x);
    let mut u = e.k.clone();
    u.push(e.h);
    let drift = sys.drift_with(x, &u);
    let s = sys.sigma(x) + sys.tau(x) * e.h;
    let generator = drift.dot(&dv) + 0.5 * quad(&v.hessian(x), &s);
    (generator + 0.5 * l(x), s.dot(&dv).abs() / (1.0 + dv.norm()))
}

fn probe(law: &mut FeedbackLaw, opts: &SynthesisOptions) -> Result<()> {
    let (sys, v, l) = match &law.data {
        LawData::Formula { sys, v, l } => (sys.clone(), v.clone(), l.clone()),
        _ => return Ok(()),
    };
    let mut report = SynthesisProbeReport {
        used_fd: uses_fd(&v),
        margin_tol: opts.margin_tol,
        max_decrease_excess: f64::NEG_INFINITY,
        ..Default::default()
    };
    for x in &opts.probes {
        if x.norm() < ORIGIN_RADIUS {
            continue;
        }
        let e = law.evaluate(x)?;
        report.probes += 1;
        let (excess, orth) = closed_loop_excess(&sys, &v, &l, x, &e);
        report.max_decrease_excess = report.max_decrease_excess.max(excess);
        report.orth_max_residual = report.orth_max_residual.max(orth);
        if excess > opts.margin_tol {
            report.flagged.push(x.as_slice().to_vec());
        }
        let r = e.gamma.hypot(e.beta);
        let phi = sontag_phi(e.gamma, e.beta)?;
        let residual = (e.gamma - e.beta * phi + r).abs() / r.max(1.0);
        report.identity_max_residual = report.identity_max_residual.max(residual);
    }
    if report.probes == 0 {
        report.max_decrease_excess = 0.0;
    }
    law.probe_report = report;
    Ok(())
}

/// Single-input law `k = −(γ + √(γ² + (g·DV)⁴)) / g·DV`, checked at the probe points.
pub fn synthesize_single_input(
    sys: &AffineSystem,
    v: &LyapunovCandidate,
    l: ScalarField,
    opts: &SynthesisOptions,
) -> Result<FeedbackLaw> {
    require_single(sys)?;
    let mut law = FeedbackLaw {
        dim: sys.dim(),
        control_dim: sys.control_dim(),
        data: LawData::Formula {
            sys: sys.clone(),
            v: v.clone(),
            l,
        },
        metadata: LawMetadata {
            kind: LawKind::SingleInput,
            drift_formula: "k = -(gamma + sqrt(gamma^2 + (g.DV)^4)) / g.DV".into(),
            diffusion_formula: "zero".into(),
            orth_tol: opts.orth_tol,
        },
        probe_report: SynthesisProbeReport::default(),
    };
    probe(&mut law, opts)?;
    Ok(law)
}

/// Multi-input law `kᵢ = −φ(γ, β) gᵢ·DV` with diffusion control `h`.
pub fn synthesize_multi_input(
    sys: &AffineSystem,
    v: &LyapunovCandidate,
    l: ScalarField,
    opts: &SynthesisOptions,
) -> Result<FeedbackLaw> {
    let mut law = FeedbackLaw {
        dim: sys.dim(),
        control_dim: sys.control_dim(),
        data: LawData::Formula {
            sys: sys.clone(),
            v: v.clone(),
            l,
        },
        metadata: LawMetadata {
            kind: LawKind::MultiInput,
            drift_formula: "k_i = -phi(gamma, beta) g_i.DV".into(),
            diffusion_formula: if sys.has_tau() {
                "h = -sigma.DV / tau.DV".into()
            } else {
                "zero".into()
            },
            orth_tol: opts.orth_tol,
        },
        probe_report: SynthesisProbeReport::default(),
    };
    probe(&mut law, opts)?;
    Ok(law)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SaturationLevel {
    pub radius: f64,
    pub max_abs_k: f64,
    pub in_box: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SaturationReport {
    /// Probe radii `r₀, r₀/2, r₀/4, …`.
    pub levels: Vec<SaturationLevel>,
    /// Largest tested radius whose ball (and every smaller tested ball) respects the box.
    pub largest_in_box_radius: Option<f64>,
}

/// Sweeps balls of radius `r₀ / 2ʲ` and reports the largest `|kᵢ|` on each.
pub fn saturation_check(
    law: &FeedbackLaw,
    bounds: &[(f64, f64)],
    r0: f64,
    probe_count: usize,
    levels: usize,
) -> Result<SaturationReport> {
    if bounds.len() != law.control_dim() - 1 {
        return Err(Error::Dimension(format!(
            "box has {} intervals for {} drift controls",
            bounds.len(),
            law.control_dim() - 1
        )));
    }
    if !(r0 > 0.0) || probe_count == 0 {
        return Err(Error::Precondition(
            "saturation sweep needs r₀ > 0 and probes".into(),
        ));
    }
    let dirs = crate::model::sphere_directions(law.dim(), probe_count, 0.5, 17);
    let mut out = Vec::with_capacity(levels);
    for j in 0..levels.max(1) {
        let radius = r0 / 2f64.powi(j as i32);
        let mut max_abs_k: f64 = 0.0;
        let mut in_box = true;
        for d in &dirs {
            for s in 1..=probe_count {
                let x = d * (radius * s as f64 / probe_count as f64);
                let u = law.control(&x);
                for (c, (lo, hi)) in bounds.iter().enumerate() {
                    max_abs_k = max_abs_k.max(u[c].abs());
                    in_box &= u[c] >= *lo && u[c] <= *hi;
                }
            }
        }
        out.push(SaturationLevel {
            radius,
            max_abs_k,
            in_box,
        });
    }
    let mut largest = None;
    for lvl in out.iter().rev() {
        if !lvl.in_box {
            break;
        }
        largest = Some(lvl.radius);
    }
    Ok(SaturationReport {
        levels: out,
        largest_in_box_radius: largest,
    })
}

/// Autonomous SDE `dX = (f + Σ kᵢ gᵢ) dt + (σ + hτ) dB`.
pub fn closed_loop(sys: &AffineSystem, law: &FeedbackLaw) -> Result<Sde> {
    if law.dim() != sys.dim() || law.control_dim() != sys.control_dim() {
        return Err(Error::Dimension("law does not match the system".into()));
    }
    let a = sys.clone();
    let b = sys.clone();
    let policy = law.policy();
    Ok(Sde::new(
        sys.dim(),
        1,
        sys.control_dim(),
        Arc::new(move |x: &State, u: &Control| a.drift_with(x, u.as_slice())),
        Arc::new(move |x: &State, u: &Control| b.dispersion_with(x, u.as_slice())),
        Arc::new(move |_t: f64, x: &State| policy(x)),
    ))
}
