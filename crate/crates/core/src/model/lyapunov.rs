use crate::{Error, Matrix, MatrixField, Result, ScalarField, State, StateField};
use serde::Serialize;
use std::fmt;
use std::sync::Arc;

/// Element `(p, Y)` of a second-order subjet (or of a second-order normal cone).
#[derive(Clone, Debug, PartialEq)]
pub struct SubjetElement {
    pub p: State,
    pub y: Matrix,
}

impl SubjetElement {
    pub fn new(p: State, y: Matrix) -> Self {
        Self { p, y }
    }
}

/// `x ↦ Some(elements)` where the candidate is nonsmooth and its subjet is parameterized by
/// hand; `None` where the candidate is smooth and `(DV, D²V)` should be used.
pub type SubjetProvider = Arc<dyn Fn(&State) -> Option<Vec<SubjetElement>> + Send + Sync>;

/// Candidate Lyapunov function with optional analytic derivatives.
#[derive(Clone)]
pub struct LyapunovCandidate {
    id: String,
    dim: usize,
    value: ScalarField,
    gradient: Option<StateField>,
    hessian: Option<MatrixField>,
    fd_step: Option<f64>,
    subjets: Option<SubjetProvider>,
    domain_radius: f64,
}

impl fmt::Debug for LyapunovCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LyapunovCandidate")
            .field("id", &self.id)
            .field("dim", &self.dim)
            .field("analytic_gradient", &self.gradient.is_some())
            .field("analytic_hessian", &self.hessian.is_some())
            .field("subjets", &self.subjets.is_some())
            .field("domain_radius", &self.domain_radius)
            .finish()
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct DerivativeCheck {
    pub max_gradient_rel_error: f64,
    pub max_hessian_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl LyapunovCandidate {
    pub fn new(
        id: impl Into<String>,
        dim: usize,
        value: impl Fn(&State) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: id.into(),
            dim,
            value: Arc::new(value),
            gradient: None,
            hessian: None,
            fd_step: None,
            subjets: None,
            domain_radius: f64::INFINITY,
        }
    }

    pub fn with_gradient(mut self, g: impl Fn(&State) -> State + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn with_hessian(mut self, h: impl Fn(&State) -> Matrix + Send + Sync + 'static) -> Self {
        self.hessian = Some(Arc::new(h));
        self
    }

    /// Fixed finite-difference step; the default is `1e-5 · (1 + |x|)`.
    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = Some(h);
        self
    }

    pub fn with_subjets(
        mut self,
        provider: impl Fn(&State) -> Option<Vec<SubjetElement>> + Send + Sync + 'static,
    ) -> Self {
        self.subjets = Some(Arc::new(provider));
        self
    }

    /// Radius of the open ball the candidate is defined on.
    pub fn with_domain_radius(mut self, r: f64) -> Self {
        self.domain_radius = r;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain_radius(&self) -> f64 {
        self.domain_radius
    }

    pub fn in_domain(&self, x: &State) -> bool {
        x.norm() < self.domain_radius
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn has_analytic_hessian(&self) -> bool {
        self.hessian.is_some()
    }

    pub fn value(&self, x: &State) -> f64 {
        (self.value)(x)
    }

    pub fn value_field(&self) -> ScalarField {
        self.value.clone()
    }

    fn step(&self, x: &State) -> f64 {
        self.fd_step.unwrap_or(1e-5 * (1.0 + x.norm()))
    }

    pub fn gradient(&self, x: &State) -> State {
        match &self.gradient {
            Some(g) => g(x),
            None => self.fd_gradient(x),
        }
    }

    pub fn hessian(&self, x: &State) -> Matrix {
        match &self.hessian {
            Some(h) => h(x),
            None => self.fd_hessian(x),
        }
    }

    /// Central differences of the value.
    pub fn fd_gradient(&self, x: &State) -> State {
        let h = self.step(x);
        let mut g = State::zeros(self.dim);
        let mut y = x.clone();
        for i in 0..self.dim {
            y[i] = x[i] + h;
            let up = self.value(&y);
            y[i] = x[i] - h;
            let down = self.value(&y);
            y[i] = x[i];
            g[i] = (up - down) / (2.0 * h);
        }
        g
    }

    /// Central differences of the gradient when it is analytic, otherwise second differences
    /// of the value with a ten times larger step.
    pub fn fd_hessian(&self, x: &State) -> Matrix {
        let n = self.dim;
        let mut hm = Matrix::zeros(n, n);
        if let Some(g) = &self.gradient {
            let h = self.step(x);
            let mut y = x.clone();
            for j in 0..n {
                y[j] = x[j] + h;
                let up = g(&y);
                y[j] = x[j] - h;
                let down = g(&y);
                y[j] = x[j];
                let col = (up - down) / (2.0 * h);
                hm.set_column(j, &col);
            }
        } else {
            let h = 10.0 * self.step(x);
            let f0 = self.value(x);
            let mut y = x.clone();
            for i in 0..n {
                y[i] = x[i] + h;
                let up = self.value(&y);
                y[i] = x[i] - h;
                let down = self.value(&y);
                y[i] = x[i];
                hm[(i, i)] = (up - 2.0 * f0 + down) / (h * h);
                for j in (i + 1)..n {
                    let mut corner = |si: f64, sj: f64| {
                        y[i] = x[i] + si * h;
                        y[j] = x[j] + sj * h;
                        let v = self.value(&y);
                        y[i] = x[i];
                        y[j] = x[j];
                        v
                    };
                    let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0)
                        + corner(-1.0, -1.0))
                        / (4.0 * h * h);
                    hm[(i, j)] = v;
                    hm[(j, i)] = v;
                }
            }
        }
        0.5 * (&hm + hm.transpose())
    }

    /// Hand-supplied subjet elements at `x`, if the candidate is nonsmooth there.
    pub fn subjet_elements(&self, x: &State) -> Option<Vec<SubjetElement>> {
        self.subjets.as_ref().and_then(|s| s(x))
    }

    /// The `(p, Y)` pairs a pointwise check has to test at `x`.
    pub fn jet(&self, x: &State) -> Vec<SubjetElement> {
        self.subjet_elements(x)
            .unwrap_or_else(|| vec![SubjetElement::new(self.gradient(x), self.hessian(x))])
    }

    /// `V(0) = 0` and `V(x) > 0` at every nonzero sample.
    pub fn check_positive_definite(&self, samples: &[State]) -> Result<()> {
        let origin = State::zeros(self.dim);
        let v0 = self.value(&origin);
        if v0 != 0.0 {
            return Err(Error::NotPositiveDefinite {
                x: origin.as_slice().to_vec(),
                value: v0,
            });
        }
        for x in samples {
            if x.norm() == 0.0 || !self.in_domain(x) {
                continue;
            }
            let v = self.value(x);
            if !(v > 0.0) {
                return Err(Error::NotPositiveDefinite {
                    x: x.as_slice().to_vec(),
                    value: v,
                });
            }
        }
        Ok(())
    }

    /// Compares analytic derivatives with central differences at the samples.
    pub fn check_derivatives(&self, samples: &[State], rel_tol: f64) -> DerivativeCheck {
        let mut g_err: f64 = 0.0;
        let mut h_err: f64 = 0.0;
        for x in samples {
            if let Some(g) = &self.gradient {
                let a = g(x);
                let scale = a.norm().max(1e-8);
                g_err = g_err.max((a - self.fd_gradient(x)).norm() / scale);
            }
            if let Some(h) = &self.hessian {
                let a = h(x);
                let scale = a.norm().max(1e-8);
                h_err = h_err.max((a - self.fd_hessian(x)).norm() / scale);
            }
        }
        DerivativeCheck {
            max_gradient_rel_error: g_err,
            max_hessian_rel_error: h_err,
            tolerance: rel_tol,
            passed: g_err <= rel_tol && h_err <= rel_tol,
        }
    }
}
