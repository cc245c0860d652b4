//! Controlled diffusions, control grids, Lyapunov candidates, comparison envelopes and
//! target sets. Everything in here is immutable after construction and cheap to clone.

mod comparison;
mod control_set;
mod lyapunov;
mod system;
mod target;

pub use comparison::{fit_comparison_pair, ComparisonPair};
pub use control_set::{ControlSet, ControlSetSpec};
pub use lyapunov::{DerivativeCheck, LyapunovCandidate, SubjetElement, SubjetProvider};
pub use system::{diffusion_matrix, equilibrium_check, ControlSystem, LipschitzCheck};
pub use target::{TargetKind, TargetSet};

use crate::{rng, State};
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

/// Deterministic unit directions in `R^dim`.
///
/// One dimension gives `±1`; two dimensions give `count` equally spaced angles starting at
/// `offset · 2π / count`; higher dimensions use normalized Gaussian draws from `seed`
/// together with the signed coordinate axes.
pub fn sphere_directions(dim: usize, count: usize, offset: f64, seed: u64) -> Vec<State> {
    match dim {
        0 => Vec::new(),
        1 => vec![State::from_element(1, 1.0), State::from_element(1, -1.0)],
        2 => (0..count.max(1))
            .map(|k| {
                let th = 2.0 * PI * (k as f64 + offset) / count.max(1) as f64;
                State::from_column_slice(&[th.cos(), th.sin()])
            })
            .collect(),
        _ => {
            let mut out = Vec::with_capacity(count + 2 * dim);
            for i in 0..dim {
                for s in [1.0, -1.0] {
                    let mut e = State::zeros(dim);
                    e[i] = s;
                    out.push(e);
                }
            }
            let mut r = rng::sampler_rng(seed);
            while out.len() < count.max(2 * dim) {
                let v = State::from_fn(dim, |_, _| StandardNormal.sample(&mut r));
                let n = v.norm();
                if n > 1e-9 {
                    out.push(v / n);
                }
            }
            out
        }
    }
}
