use super::{builtins, InlineModel, ModelSpec, TargetSpec};
use crate::expr::{Expr, Symbols};
use crate::feedback::{field, AffineSystem};
use crate::model::{ControlSet, ControlSetSpec, ControlSystem, LyapunovCandidate, TargetSet};
use crate::{Control, Error, Matrix, Result, ScalarField, State};
use std::sync::Arc;

/// A compiled model: the controlled system, its Lyapunov candidate and the optional rate
/// function `l` and affine structure.
#[derive(Clone, Debug)]
pub struct Model {
    pub id: String,
    pub state_names: Vec<String>,
    pub constants: Vec<(String, f64)>,
    pub system: ControlSystem,
    pub candidate: LyapunovCandidate,
    pub rate: Option<RateFn>,
    pub affine: Option<AffineSystem>,
}

/// Rate function wrapper so [`Model`] can derive `Debug`.
#[derive(Clone)]
pub struct RateFn(pub ScalarField);

impl std::fmt::Debug for RateFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("RateFn")
    }
}

impl Model {
    pub fn compile(spec: &ModelSpec) -> Result<Self> {
        match (&spec.builtin, &spec.inline) {
            (Some(id), None) => builtins::builtin_model(id, &spec.params),
            (None, Some(inline)) => {
                if !spec.params.is_empty() {
                    return Err(Error::Scenario(
                        "`params` only applies to built-in models; use `constants`".into(),
                    ));
                }
                compile_inline(inline)
            }
            (Some(_), Some(_)) => Err(Error::Scenario(
                "model needs exactly one of `builtin` and `inline`, both given".into(),
            )),
            (None, None) => Err(Error::Scenario(
                "model needs exactly one of `builtin` and `inline`".into(),
            )),
        }
    }

    pub fn dim(&self) -> usize {
        self.state_names.len()
    }

    /// Symbols for state-only expressions (targets, extra functions).
    pub fn symbols(&self) -> Symbols {
        Symbols::new(&self.state_names, &[], &self.constants)
    }

    pub fn rate_field(&self) -> Option<ScalarField> {
        self.rate.as_ref().map(|r| r.0.clone())
    }
}

fn state_expr(src: &str, symbols: &Symbols, context: &str) -> Result<Expr> {
    Expr::parse(src, &symbols.state_only(), context)
}

fn scalar_field(e: Expr) -> ScalarField {
    Arc::new(move |x: &State| e.eval(x.as_slice(), &[]))
}

fn vector_exprs(srcs: &[String], n: usize, symbols: &Symbols, context: &str) -> Result<Vec<Expr>> {
    if srcs.len() != n {
        return Err(Error::Dimension(format!(
            "{context} has {} entries, the model has {n} states",
            srcs.len()
        )));
    }
    srcs.iter()
        .enumerate()
        .map(|(i, s)| state_expr(s, symbols, &format!("{context}[{i}]")))
        .collect()
}

fn state_vector_field(exprs: Vec<Expr>) -> crate::StateField {
    field(move |x: &State| {
        State::from_iterator(exprs.len(), exprs.iter().map(|e| e.eval(x.as_slice(), &[])))
    })
}

fn compile_inline(m: &InlineModel) -> Result<Model> {
    let n = m.states.len();
    if n == 0 {
        return Err(Error::Dimension(
            "an inline model needs at least one state".into(),
        ));
    }
    let constants: Vec<(String, f64)> = m.constants.iter().map(|(k, v)| (k.clone(), *v)).collect();
    let symbols = Symbols::new(&m.states, &m.controls, &constants);

    let (system, affine) = match (&m.affine, &m.drift, &m.dispersion) {
        (Some(a), None, None) => {
            if !m.controls.is_empty() {
                return Err(Error::Scenario(
                    "affine models name no controls: inputs are k1..kP-1 and h".into(),
                ));
            }
            let f = state_vector_field(vector_exprs(&a.f, n, &symbols, "affine.f")?);
            let g =
                a.g.iter()
                    .enumerate()
                    .map(|(i, gi)| {
                        Ok(state_vector_field(vector_exprs(
                            gi,
                            n,
                            &symbols,
                            &format!("affine.g[{i}]"),
                        )?))
                    })
                    .collect::<Result<Vec<_>>>()?;
            let sigma = state_vector_field(vector_exprs(&a.sigma, n, &symbols, "affine.sigma")?);
            let mut sys = AffineSystem::new(n, f, g, sigma)?;
            if let Some(tau) = &a.tau {
                sys = sys.with_tau(state_vector_field(vector_exprs(
                    tau,
                    n,
                    &symbols,
                    "affine.tau",
                )?));
            }
            if let Some(b) = &a.constraint_box {
                if b.len() != sys.input_count() {
                    return Err(Error::Dimension(format!(
                        "constraint_box has {} intervals for {} inputs",
                        b.len(),
                        sys.input_count()
                    )));
                }
                sys = sys.with_constraint_box(b.iter().map(|[lo, hi]| (*lo, *hi)).collect());
            }
            let spec = if m.control_set == ControlSetSpec::uncontrolled() {
                // no grid given: only the zero input
                ControlSetSpec::Finite {
                    points: vec![vec![0.0; sys.control_dim()]],
                }
            } else {
                m.control_set.clone()
            };
            let cs = sys.control_system("inline", ControlSet::new(spec)?)?;
            (cs, Some(sys))
        }
        (None, Some(drift), Some(disp)) => {
            let grid = ControlSet::new(m.control_set.clone())?;
            if grid.dim() != m.controls.len() {
                return Err(Error::Dimension(format!(
                    "control set has dimension {}, {} controls are named",
                    grid.dim(),
                    m.controls.len()
                )));
            }
            if drift.len() != n {
                return Err(Error::Dimension(format!(
                    "drift has {} entries, the model has {n} states",
                    drift.len()
                )));
            }
            if disp.len() != n {
                return Err(Error::Dimension(format!(
                    "dispersion has {} rows, the model has {n} states",
                    disp.len()
                )));
            }
            let noise = disp[0].len();
            if noise == 0 || disp.iter().any(|r| r.len() != noise) {
                return Err(Error::Dimension(
                    "dispersion rows must all have the same positive length".into(),
                ));
            }
            let drift: Vec<Expr> = drift
                .iter()
                .enumerate()
                .map(|(i, s)| Expr::parse(s, &symbols, &format!("drift[{i}]")))
                .collect::<Result<_>>()?;
            let disp: Vec<Expr> = disp
                .iter()
                .enumerate()
                .flat_map(|(i, row)| {
                    let symbols = &symbols;
                    row.iter().enumerate().map(move |(j, s)| {
                        Expr::parse(s, symbols, &format!("dispersion[{i}][{j}]"))
                    })
                })
                .collect::<Result<_>>()?;
            let sys = ControlSystem::new(
                "inline",
                n,
                noise,
                move |x: &State, u: &Control| {
                    State::from_iterator(
                        n,
                        drift.iter().map(|e| e.eval(x.as_slice(), u.as_slice())),
                    )
                },
                move |x: &State, u: &Control| {
                    Matrix::from_row_iterator(
                        n,
                        noise,
                        disp.iter().map(|e| e.eval(x.as_slice(), u.as_slice())),
                    )
                },
                grid,
            )?;
            (sys, None)
        }
        _ => {
            return Err(Error::Scenario(
                "an inline model needs either `drift` and `dispersion`, or `affine`".into(),
            ))
        }
    };

    let v = state_expr(&m.lyapunov, &symbols, "lyapunov")?;
    let v_eval = v.clone();
    let mut candidate = LyapunovCandidate::new(m.lyapunov.clone(), n, move |x: &State| {
        v_eval.eval(x.as_slice(), &[])
    });
    if let Some(grad) = &m.lyapunov_gradient {
        let g = vector_exprs(grad, n, &symbols, "lyapunov_gradient")?;
        candidate = candidate.with_gradient(move |x: &State| {
            State::from_iterator(n, g.iter().map(|e| e.eval(x.as_slice(), &[])))
        });
    }
    if let Some(hess) = &m.lyapunov_hessian {
        if hess.len() != n || hess.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension(format!(
                "lyapunov_hessian must be {n} x {n}"
            )));
        }
        let h: Vec<Expr> = hess
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                let symbols = &symbols;
                row.iter().enumerate().map(move |(j, s)| {
                    state_expr(s, symbols, &format!("lyapunov_hessian[{i}][{j}]"))
                })
            })
            .collect::<Result<_>>()?;
        candidate = candidate.with_hessian(move |x: &State| {
            Matrix::from_row_iterator(n, n, h.iter().map(|e| e.eval(x.as_slice(), &[])))
        });
    }
    if let Some(r) = m.domain_radius {
        candidate = candidate.with_domain_radius(r);
    }
    let rate = m
        .rate
        .as_ref()
        .map(|s| state_expr(s, &symbols, "rate").map(|e| RateFn(scalar_field(e))))
        .transpose()?;
    Ok(Model {
        id: "inline".into(),
        state_names: m.states.clone(),
        constants,
        system,
        candidate,
        rate,
        affine,
    })
}

fn center(c: &Option<Vec<f64>>, n: usize) -> Result<State> {
    match c {
        None => Ok(State::zeros(n)),
        Some(v) if v.len() == n => Ok(State::from_column_slice(v)),
        Some(v) => Err(Error::Dimension(format!(
            "target center has {} coordinates, the model has {n}",
            v.len()
        ))),
    }
}

/// Builds a target set; function expressions range over the model's states and constants.
pub fn compile_target(spec: &TargetSpec, model: &Model) -> Result<TargetSet> {
    let n = model.dim();
    let symbols = model.symbols();
    Ok(match spec {
        TargetSpec::Origin => TargetSet::origin(n),
        TargetSpec::Ball { center: c, radius } => TargetSet::ball(center(c, n)?, *radius),
        TargetSpec::ExteriorBall { center: c, radius } => {
            TargetSet::exterior_ball(center(c, n)?, *radius)
        }
        TargetSpec::Sublevel { function, level } => {
            let w = match function {
                None => model.candidate.clone(),
                Some(src) => {
                    let e = state_expr(src, &symbols, "target.function")?;
                    LyapunovCandidate::new(src.clone(), n, move |x: &State| {
                        e.eval(x.as_slice(), &[])
                    })
                }
            };
            TargetSet::sublevel(w, *level)
        }
        TargetSpec::ZeroSet {
            function,
            tolerance,
        } => {
            let e = state_expr(function, &symbols, "target.function")?;
            TargetSet::zero_set(
                format!("{{{function} = 0}}"),
                move |x: &State| e.eval(x.as_slice(), &[]),
                *tolerance,
            )
        }
    })
}
