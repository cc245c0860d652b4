use super::ControlSet;
use crate::{Control, DispersionField, Error, Matrix, Result, State, VectorField};
use std::fmt;
use std::sync::Arc;

/// Controlled diffusion `dX = f(X, α) dt + σ(X, α) dB` with `α` ranging over a control grid.
#[derive(Clone)]
pub struct ControlSystem {
    id: String,
    dim_state: usize,
    dim_noise: usize,
    drift: VectorField,
    dispersion: DispersionField,
    control_set: ControlSet,
    lipschitz_hint: Option<f64>,
    convexity_assumed: bool,
}

impl fmt::Debug for ControlSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlSystem")
            .field("id", &self.id)
            .field("dim_state", &self.dim_state)
            .field("dim_noise", &self.dim_noise)
            .field("controls", &self.control_set.len())
            .field("lipschitz_hint", &self.lipschitz_hint)
            .finish()
    }
}

impl ControlSystem {
    pub fn new(
        id: impl Into<String>,
        dim_state: usize,
        dim_noise: usize,
        drift: impl Fn(&State, &Control) -> State + Send + Sync + 'static,
        dispersion: impl Fn(&State, &Control) -> Matrix + Send + Sync + 'static,
        control_set: ControlSet,
    ) -> Result<Self> {
        if dim_state == 0 || dim_noise == 0 {
            return Err(Error::Dimension(
                "state and noise dimensions must be positive".into(),
            ));
        }
        Ok(Self {
            id: id.into(),
            dim_state,
            dim_noise,
            drift: Arc::new(drift),
            dispersion: Arc::new(dispersion),
            control_set,
            lipschitz_hint: None,
            convexity_assumed: true,
        })
    }

    pub fn with_lipschitz_hint(mut self, c: f64) -> Self {
        self.lipschitz_hint = Some(c);
        self
    }

    /// Records whether `{(a, f)(x, A)}` is assumed convex. It is never checked.
    pub fn with_convexity_assumed(mut self, assumed: bool) -> Self {
        self.convexity_assumed = assumed;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim_state(&self) -> usize {
        self.dim_state
    }

    pub fn dim_noise(&self) -> usize {
        self.dim_noise
    }

    pub fn control_set(&self) -> &ControlSet {
        &self.control_set
    }

    pub fn lipschitz_hint(&self) -> Option<f64> {
        self.lipschitz_hint
    }

    pub fn convexity_assumed(&self) -> bool {
        self.convexity_assumed
    }

    pub fn drift(&self, x: &State, alpha: &Control) -> State {
        (self.drift)(x, alpha)
    }

    pub fn dispersion(&self, x: &State, alpha: &Control) -> Matrix {
        (self.dispersion)(x, alpha)
    }

    pub fn drift_field(&self) -> VectorField {
        self.drift.clone()
    }

    pub fn dispersion_field(&self) -> DispersionField {
        self.dispersion.clone()
    }

    /// Largest sampled difference quotient of `f` and `σ` over consecutive sample pairs and
    /// every grid control.
    pub fn spot_check_lipschitz(&self, samples: &[State]) -> LipschitzCheck {
        let mut max_drift: f64 = 0.0;
        let mut max_disp: f64 = 0.0;
        for pair in samples.windows(2) {
            let (x, y) = (&pair[0], &pair[1]);
            let d = (x - y).norm();
            if d == 0.0 {
                continue;
            }
            for a in self.control_set.points() {
                max_drift = max_drift.max((self.drift(x, a) - self.drift(y, a)).norm() / d);
                max_disp = max_disp.max((self.dispersion(x, a) - self.dispersion(y, a)).norm() / d);
            }
        }
        LipschitzCheck {
            max_drift_quotient: max_drift,
            max_dispersion_quotient: max_disp,
            within_hint: self.lipschitz_hint.map(|c| max_drift <= c && max_disp <= c),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzCheck {
    pub max_drift_quotient: f64,
    pub max_dispersion_quotient: f64,
    /// `None` when the system carries no hint.
    pub within_hint: Option<bool>,
}

/// `a(x, α) = ½ σσᵀ`.
pub fn diffusion_matrix(sys: &ControlSystem, x: &State, alpha: &Control) -> Result<Matrix> {
    let s = sys.dispersion(x, alpha);
    if s.nrows() != sys.dim_state || s.ncols() != sys.dim_noise {
        return Err(Error::Dimension(format!(
            "dispersion is {}×{}, expected {}×{}",
            s.nrows(),
            s.ncols(),
            sys.dim_state,
            sys.dim_noise
        )));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "dispersion",
            x: x.as_slice().to_vec(),
            control: alpha.as_slice().to_vec(),
        });
    }
    Ok(0.5 * &s * s.transpose())
}

/// First grid control (index and point) with `|f(0, α)| ≤ tol` and `‖σ(0, α)‖ ≤ tol`.
pub fn equilibrium_check(sys: &ControlSystem, tol: f64) -> Option<(usize, Control)> {
    let origin = State::zeros(sys.dim_state);
    sys.control_set
        .points()
        .iter()
        .enumerate()
        .find(|(_, a)| {
            sys.drift(&origin, a).norm() <= tol && sys.dispersion(&origin, a).norm() <= tol
        })
        .map(|(i, a)| (i, a.clone()))
}
