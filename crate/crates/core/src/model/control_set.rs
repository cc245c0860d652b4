use crate::{Control, Error, Result};
use serde::{Deserialize, Serialize};

/// Descriptor of a compact control set, sampled by a deterministic grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ControlSetSpec {
    /// Explicit list of control points.
    Finite { points: Vec<Vec<f64>> },
    /// Box `Π [lower_i, upper_i]` sampled with `counts_i` equally spaced points per axis
    /// (a single point is the axis midpoint).
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
        counts: Vec<usize>,
    },
    /// Cartesian product `points × box`; each grid control is a finite point followed by a box
    /// point.
    Product {
        points: Vec<Vec<f64>>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        counts: Vec<usize>,
    },
}

impl ControlSetSpec {
    /// The control set of an uncontrolled system: a single empty control.
    pub fn uncontrolled() -> Self {
        ControlSetSpec::Finite {
            points: vec![Vec::new()],
        }
    }
}

/// A control set together with its induced grid. Grid order is fixed by the descriptor:
/// finite points in listed order, box points in lexicographic order with the first axis
/// varying slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSet {
    spec: ControlSetSpec,
    dim: usize,
    points: Vec<Control>,
}

fn finite_points(points: &[Vec<f64>]) -> Result<(usize, Vec<Vec<f64>>)> {
    let first = points
        .first()
        .ok_or_else(|| Error::Precondition("control set has no points".into()))?;
    let dim = first.len();
    for p in points {
        if p.len() != dim {
            return Err(Error::Dimension(format!(
                "control point {p:?} has length {}, expected {dim}",
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition(format!(
                "non-finite control point {p:?}"
            )));
        }
    }
    Ok((dim, points.to_vec()))
}

fn box_points(lower: &[f64], upper: &[f64], counts: &[usize]) -> Result<Vec<Vec<f64>>> {
    if lower.len() != upper.len() || lower.len() != counts.len() {
        return Err(Error::Dimension(
            "box bounds and counts must have equal lengths".into(),
        ));
    }
    let mut axes = Vec::with_capacity(lower.len());
    for ((&lo, &hi), &n) in lower.iter().zip(upper).zip(counts) {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::Precondition(format!(
                "invalid box axis [{lo}, {hi}]"
            )));
        }
        if n == 0 {
            return Err(Error::Precondition(
                "box axis sample count must be ≥ 1".into(),
            ));
        }
        let axis: Vec<f64> = if n == 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..n)
                .map(|k| {
                    if k == n - 1 {
                        hi
                    } else {
                        lo + (hi - lo) * k as f64 / (n - 1) as f64
                    }
                })
                .collect()
        };
        axes.push(axis);
    }
    let mut grid = vec![Vec::new()];
    for axis in &axes {
        let mut next = Vec::with_capacity(grid.len() * axis.len());
        for prefix in &grid {
            for &v in axis {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        grid = next;
    }
    Ok(grid)
}

impl ControlSet {
    pub fn new(spec: ControlSetSpec) -> Result<Self> {
        let (dim, raw) = match &spec {
            ControlSetSpec::Finite { points } => finite_points(points)?,
            ControlSetSpec::Box {
                lower,
                upper,
                counts,
            } => (lower.len(), box_points(lower, upper, counts)?),
            ControlSetSpec::Product {
                points,
                lower,
                upper,
                counts,
            } => {
                let (fdim, fin) = finite_points(points)?;
                let bx = box_points(lower, upper, counts)?;
                let mut out = Vec::with_capacity(fin.len() * bx.len());
                for f in &fin {
                    for b in &bx {
                        let mut p = f.clone();
                        p.extend_from_slice(b);
                        out.push(p);
                    }
                }
                (fdim + lower.len(), out)
            }
        };
        let points = raw.iter().map(|p| Control::from_column_slice(p)).collect();
        Ok(Self { spec, dim, points })
    }

    pub fn uncontrolled() -> Self {
        Self::new(ControlSetSpec::uncontrolled()).expect("uncontrolled set is valid")
    }

    pub fn spec(&self) -> &ControlSetSpec {
        &self.spec
    }

    /// Dimension `P` of a control point.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Control] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Control> {
        self.points.get(index)
    }
}
