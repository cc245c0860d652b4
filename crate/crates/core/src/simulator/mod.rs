//! Euler–Maruyama integration, the Monte Carlo harness and path-level certificates.

mod certify;
mod csv;
mod monte_carlo;

pub use self::csv::{read_csv, write_long_csv, write_path_csv, CsvTable};
pub use certify::{
    attractor_distance, decrease_certificate, exponential_rate_fit, first_entry_time,
    noise_free_v_check, reach_set_bracket, stability_certificate, target_bound_check,
    wilson_interval, NoiseFreeCheck, ReachBracket, ReachEntry, StabilityCertificate,
    TargetBoundCheck,
};
pub use monte_carlo::{
    run_monte_carlo, Aggregates, CrossSection, MetricsSpec, MonteCarloReport, MonteCarloRun,
    PathSummary, Quantiles,
};

use crate::model::{equilibrium_check, ControlSystem, LyapunovCandidate};
use crate::rng::NoiseStream;
use crate::verifier::constrained_hamiltonian;
use crate::{
    Control, DispersionField, Error, Matrix, MatrixField, Result, ScalarField, State, StateField,
    VectorField,
};
use std::fmt;
use std::sync::Arc;

/// `(t, x) ↦ u`.
pub type Policy = Arc<dyn Fn(f64, &State) -> Control + Send + Sync>;

/// Controlled SDE closed by a policy: `dX = b(X, u) dt + s(X, u) dB` with `u = π(t, X)`.
#[derive(Clone)]
pub struct Sde {
    dim: usize,
    noise_dim: usize,
    control_dim: usize,
    drift: VectorField,
    dispersion: DispersionField,
    policy: Policy,
}

impl fmt::Debug for Sde {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Sde")
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("control_dim", &self.control_dim)
            .finish()
    }
}

/// How a [`ControlSystem`] is closed for simulation.
#[derive(Clone, Debug)]
pub enum ControlPolicy {
    /// Constant grid control.
    Fixed(usize),
    /// Piecewise-constant schedule: `indices[j]` applies on `[breakpoints[j−1], breakpoints[j])`
    /// with `breakpoints` increasing and one entry shorter than `indices`.
    Schedule {
        breakpoints: Vec<f64>,
        indices: Vec<usize>,
    },
    /// The grid witness of the constrained Hamiltonian of `candidate` at the current state.
    /// Where no control is admissible the one with the smallest `|σᵀDV|` is used.
    Witness {
        candidate: LyapunovCandidate,
        orth_tol: f64,
    },
}

impl Sde {
    pub fn new(
        dim: usize,
        noise_dim: usize,
        control_dim: usize,
        drift: VectorField,
        dispersion: DispersionField,
        policy: Policy,
    ) -> Self {
        Self {
            dim,
            noise_dim,
            control_dim,
            drift,
            dispersion,
            policy,
        }
    }

    /// Uncontrolled SDE.
    pub fn autonomous(
        dim: usize,
        noise_dim: usize,
        drift: StateField,
        dispersion: MatrixField,
    ) -> Self {
        Self::new(
            dim,
            noise_dim,
            0,
            Arc::new(move |x: &State, _: &Control| drift(x)),
            Arc::new(move |x: &State, _: &Control| dispersion(x)),
            Arc::new(|_, _: &State| Control::zeros(0)),
        )
    }

    pub fn from_system(sys: &ControlSystem, policy: ControlPolicy) -> Result<Self> {
        let grid = sys.control_set().points().to_vec();
        let check = |i: usize| {
            if i >= grid.len() {
                Err(Error::Precondition(format!(
                    "control index {i} outside a grid of {}",
                    grid.len()
                )))
            } else {
                Ok(())
            }
        };
        let policy: Policy = match policy {
            ControlPolicy::Fixed(i) => {
                check(i)?;
                let u = grid[i].clone();
                Arc::new(move |_, _: &State| u.clone())
            }
            ControlPolicy::Schedule {
                breakpoints,
                indices,
            } => {
                if indices.len() != breakpoints.len() + 1
                    || breakpoints.windows(2).any(|w| w[0] >= w[1])
                {
                    return Err(Error::Precondition(
                        "a schedule needs increasing breakpoints and one more index".into(),
                    ));
                }
                for &i in &indices {
                    check(i)?;
                }
                let grid = grid.clone();
                Arc::new(move |t, _: &State| {
                    let j = breakpoints.partition_point(|&b| b <= t);
                    grid[indices[j]].clone()
                })
            }
            ControlPolicy::Witness {
                candidate,
                orth_tol,
            } => {
                let rest = equilibrium_check(sys, 1e-12).map(|(i, _)| i).unwrap_or(0);
                let sys = sys.clone();
                Arc::new(move |_, x: &State| witness_control(&sys, &candidate, orth_tol, rest, x))
            }
        };
        Ok(Self::new(
            sys.dim_state(),
            sys.dim_noise(),
            sys.control_set().dim(),
            sys.drift_field(),
            sys.dispersion_field(),
            policy,
        ))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn control_at(&self, t: f64, x: &State) -> Control {
        (self.policy)(t, x)
    }

    pub fn drift_at(&self, t: f64, x: &State) -> State {
        (self.drift)(x, &self.control_at(t, x))
    }

    pub fn dispersion_at(&self, t: f64, x: &State) -> Matrix {
        (self.dispersion)(x, &self.control_at(t, x))
    }

    /// Replaces the policy, keeping the coefficients.
    pub fn with_policy(mut self, policy: Policy) -> Self {
        self.policy = policy;
        self
    }
}

fn witness_control(
    sys: &ControlSystem,
    v: &LyapunovCandidate,
    orth_tol: f64,
    rest: usize,
    x: &State,
) -> Control {
    let grid = sys.control_set().points();
    if x.norm() < 1e-12 || !v.in_domain(x) {
        return grid[rest].clone();
    }
    let p = v.gradient(x);
    let y = v.hessian(x);
    match constrained_hamiltonian(sys, x, &p, &y, orth_tol) {
        Ok(h) => h.control,
        Err(_) => {
            let mut best = (f64::INFINITY, 0);
            for (i, a) in grid.iter().enumerate() {
                let r = (sys.dispersion(x, a).transpose() * &p).norm();
                if r < best.0 {
                    best = (r, i);
                }
            }
            grid[best.1].clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimParams {
    pub dt: f64,
    pub horizon: f64,
    pub blowup_bound: f64,
}

impl SimParams {
    pub fn new(dt: f64, horizon: f64) -> Self {
        Self {
            dt,
            horizon,
            blowup_bound: 1e6,
        }
    }

    /// Number of steps `round(T / dt)`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Precondition(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        let n = (self.horizon / self.dt).round();
        if !(n >= 1.0) || !n.is_finite() {
            return Err(Error::Precondition(format!(
                "horizon {} is shorter than dt {}",
                self.horizon, self.dt
            )));
        }
        Ok(n as usize)
    }
}

/// Functionals tracked along a path.
#[derive(Clone, Default)]
pub struct PathFunctionals {
    pub v: Option<ScalarField>,
    pub l: Option<ScalarField>,
}

/// One discretized trajectory. `controls[i]` is the control applied on `[tᵢ, tᵢ₊₁)` (the last
/// entry is the control the policy would apply at the final state).
#[derive(Clone, Debug, PartialEq)]
pub struct SdePath {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub controls: Vec<Control>,
    /// `V(Xᵢ)`; empty when no `V` was supplied.
    pub v_values: Vec<f64>,
    /// Trapezoidal `∫₀ᵗ l(X_s) ds`; empty when no `l` was supplied.
    pub running_l_integral: Vec<f64>,
    pub seed: u64,
    /// The path left the blow-up ball and was truncated.
    pub escaped: bool,
}

impl SdePath {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn final_state(&self) -> &State {
        self.states
            .last()
            .expect("a path has at least its initial state")
    }
}

/// `X_{n+1} = X_n + b dt + s ΔB_n`, with `ΔB_n = √dt · Z(seed, n)`.
pub fn euler_maruyama(
    sde: &Sde,
    x0: &State,
    params: &SimParams,
    seed: u64,
    functionals: &PathFunctionals,
) -> Result<SdePath> {
    if x0.len() != sde.dim {
        return Err(Error::Dimension(format!(
            "initial state has length {}, system has {}",
            x0.len(),
            sde.dim
        )));
    }
    let steps = params.steps()?;
    let dt = params.dt;
    let sqrt_dt = dt.sqrt();
    let noise = NoiseStream::new(seed);
    let mut z = vec![0.0; sde.noise_dim];

    let mut path = SdePath {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        controls: Vec::with_capacity(steps + 1),
        v_values: Vec::new(),
        running_l_integral: Vec::new(),
        seed,
        escaped: false,
    };
    let mut x = x0.clone();
    let mut l_prev = functionals.l.as_ref().map(|l| l(&x));
    let mut integral = 0.0;
    for n in 0..=steps {
        let t = n as f64 * dt;
        let u = sde.control_at(t, &x);
        path.times.push(t);
        if let Some(v) = &functionals.v {
            path.v_values.push(v(&x));
        }
        if functionals.l.is_some() {
            path.running_l_integral.push(integral);
        }
        path.states.push(x.clone());
        path.controls.push(u.clone());
        if n == steps {
            break;
        }

        let drift = (sde.drift)(&x, &u);
        let disp = (sde.dispersion)(&x, &u);
        noise.fill_normals(n as u64, &mut z);
        let mut next = &x + drift * dt;
        if sde.noise_dim > 0 {
            let db = State::from_iterator(sde.noise_dim, z.iter().map(|v| v * sqrt_dt));
            next += disp * db;
        }
        let finite = next.iter().all(|v| v.is_finite());
        if !finite || next.norm() > params.blowup_bound {
            path.escaped = true;
            if finite {
                x = next;
                path.times.push((n + 1) as f64 * dt);
                if let Some(v) = &functionals.v {
                    path.v_values.push(v(&x));
                }
                if let (Some(l), Some(prev)) = (&functionals.l, l_prev) {
                    integral += 0.5 * dt * (prev + l(&x));
                    path.running_l_integral.push(integral);
                }
                path.controls.push(sde.control_at((n + 1) as f64 * dt, &x));
                path.states.push(x);
            }
            break;
        }
        if let (Some(l), Some(prev)) = (&functionals.l, l_prev) {
            let cur = l(&next);
            integral += 0.5 * dt * (prev + cur);
            l_prev = Some(cur);
        }
        x = next;
    }
    Ok(path)
}
