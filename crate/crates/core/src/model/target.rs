use super::{sphere_directions, LyapunovCandidate};
use crate::{ScalarField, State};
use std::fmt;
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq)]
pub enum TargetKind {
    /// Closed ball `|x − c| ≤ R`.
    Ball { center: State, radius: f64 },
    /// Sublevel set `{V ≤ μ}` of the attached function.
    Sublevel { level: f64 },
    /// Complement of the open ball, `|x − c| ≥ R`.
    ExteriorBall { center: State, radius: f64 },
    /// `{x : d(x) ≤ tol}` for a user supplied distance-like function `d`.
    ZeroSet { tolerance: f64 },
}

/// Closed target set with membership and distance.
///
/// For balls and exterior balls `distance` is the Euclidean distance. For sublevel sets it is
/// the level gap `max(0, V(x) − μ)` and for zero sets the attached function itself, clamped
/// to zero inside the set, so `distance(x) = 0` exactly when `contains(x)`.
#[derive(Clone)]
pub struct TargetSet {
    label: String,
    kind: TargetKind,
    function: Option<LyapunovCandidate>,
    zero_distance: Option<ScalarField>,
}

impl fmt::Debug for TargetSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetSet")
            .field("label", &self.label)
            .field("kind", &self.kind)
            .finish()
    }
}

impl TargetSet {
    pub fn ball(center: State, radius: f64) -> Self {
        Self {
            label: format!("ball(r={radius})"),
            kind: TargetKind::Ball { center, radius },
            function: None,
            zero_distance: None,
        }
    }

    /// The singleton `{0}`.
    pub fn origin(dim: usize) -> Self {
        let mut t = Self::ball(State::zeros(dim), 0.0);
        t.label = "origin".into();
        t
    }

    pub fn exterior_ball(center: State, radius: f64) -> Self {
        Self {
            label: format!("exterior-ball(r={radius})"),
            kind: TargetKind::ExteriorBall { center, radius },
            function: None,
            zero_distance: None,
        }
    }

    pub fn sublevel(v: LyapunovCandidate, level: f64) -> Self {
        Self {
            label: format!("sublevel({} <= {level})", v.id()),
            kind: TargetKind::Sublevel { level },
            function: Some(v),
            zero_distance: None,
        }
    }

    pub fn zero_set(
        label: impl Into<String>,
        distance: impl Fn(&State) -> f64 + Send + Sync + 'static,
        tolerance: f64,
    ) -> Self {
        Self {
            label: label.into(),
            kind: TargetKind::ZeroSet { tolerance },
            function: None,
            zero_distance: Some(Arc::new(distance)),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> &TargetKind {
        &self.kind
    }

    /// The function whose sublevel set this is, for sublevel targets.
    pub fn level_function(&self) -> Option<&LyapunovCandidate> {
        self.function.as_ref()
    }

    pub fn contains(&self, x: &State) -> bool {
        self.distance(x) == 0.0
    }

    pub fn distance(&self, x: &State) -> f64 {
        match &self.kind {
            TargetKind::Ball { center, radius } => ((x - center).norm() - radius).max(0.0),
            TargetKind::ExteriorBall { center, radius } => (radius - (x - center).norm()).max(0.0),
            TargetKind::Sublevel { level } => {
                let v = self.function.as_ref().expect("sublevel carries V").value(x);
                (v - level).max(0.0)
            }
            TargetKind::ZeroSet { tolerance } => {
                let d = self.zero_distance.as_ref().expect("zero set carries d")(x).abs();
                if d <= *tolerance {
                    0.0
                } else {
                    d
                }
            }
        }
    }

    /// Deterministic points on the boundary of ball-type targets.
    pub fn boundary_samples(&self, dim: usize, count: usize) -> Option<Vec<State>> {
        match &self.kind {
            TargetKind::Ball { center, radius } | TargetKind::ExteriorBall { center, radius } => {
                Some(
                    sphere_directions(dim, count, 0.0, 0xB0DE)
                        .into_iter()
                        .map(|u| center + u * *radius)
                        .collect(),
                )
            }
            _ => None,
        }
    }

    /// `inf_{∂T} V`: the level for sublevel targets of `V` itself, a boundary sample minimum
    /// for ball-type targets.
    pub fn inf_on_boundary(&self, v: &LyapunovCandidate, count: usize) -> Option<f64> {
        match &self.kind {
            TargetKind::Sublevel { level } => Some(*level),
            _ => self
                .boundary_samples(v.dim(), count)
                .map(|pts| pts.iter().map(|x| v.value(x)).fold(f64::INFINITY, f64::min)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state;

    #[test]
    fn distance_zero_iff_member() {
        let sq = LyapunovCandidate::new("sq", 2, |x: &State| x.norm_squared());
        let targets = [
            TargetSet::ball(state(&[0.5, 0.0]), 1.0),
            TargetSet::exterior_ball(State::zeros(2), 1.0),
            TargetSet::sublevel(sq, 0.25),
            TargetSet::zero_set("x1 = 0", |x: &State| x[0], 1e-9),
            TargetSet::origin(2),
        ];
        for t in &targets {
            for k in 0..200 {
                let a = k as f64 * 0.37;
                let x = state(&[1.6 * a.cos() * (k % 7) as f64 / 6.0, 1.6 * a.sin()]);
                assert_eq!(t.contains(&x), t.distance(&x) == 0.0, "{}", t.label());
                assert!(t.distance(&x) >= 0.0);
            }
        }
    }

    #[test]
    fn ball_distances() {
        let b = TargetSet::ball(State::zeros(2), 1.0);
        assert!((b.distance(&state(&[3.0, 4.0])) - 4.0).abs() < 1e-12);
        assert!(b.contains(&state(&[0.6, 0.7])));
        let e = TargetSet::exterior_ball(State::zeros(2), 2.0);
        assert!((e.distance(&state(&[0.5, 0.0])) - 1.5).abs() < 1e-12);
        assert!(e.contains(&state(&[2.0, 0.0])));
    }

    #[test]
    fn boundary_infimum_of_square_on_unit_ball() {
        let v = LyapunovCandidate::new("sq", 2, |x: &State| x.norm_squared());
        let b = TargetSet::ball(State::zeros(2), 1.0);
        assert!((b.inf_on_boundary(&v, 64).unwrap() - 1.0).abs() < 1e-12);
    }
}
