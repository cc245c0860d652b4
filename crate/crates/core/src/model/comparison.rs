use super::{sphere_directions, LyapunovCandidate};
use crate::{Error, Result, State};
use serde::Serialize;

/// Tabulated comparison envelopes `γ1(|x|) ≤ V(x) ≤ γ2(|x|)`.
///
/// Between and beyond tabulated radii the envelopes are interpolated piecewise as power laws
/// `γ(r) = γ_i (r / r_i)^{e_i}`, which keeps them in class K (vanishing at 0, nondecreasing)
/// and reproduces homogeneous candidates exactly.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonPair {
    pub radii: Vec<f64>,
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
    /// Relative sandwich tolerance: `γ1(r) − ε γ2(r) ≤ V ≤ (1 + ε) γ2(r)` is expected to hold
    /// at points not used in the fit. Estimated from off-grid radii and directions.
    pub relative_tolerance: f64,
}

fn exponents(r: &[f64], g: &[f64]) -> Vec<f64> {
    r.windows(2)
        .zip(g.windows(2))
        .map(|(rr, gg)| (gg[1] / gg[0]).ln() / (rr[1] / rr[0]).ln())
        .collect()
}

fn power_interp(r: &[f64], g: &[f64], x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let e = exponents(r, g);
    let last = r.len() - 1;
    let i = if x <= r[0] {
        0
    } else if x >= r[last] {
        last - 1
    } else {
        r.windows(2).position(|w| x <= w[1]).unwrap_or(last - 1)
    };
    g[i] * (x / r[i]).powf(e[i])
}

impl ComparisonPair {
    pub fn gamma1_at(&self, r: f64) -> f64 {
        power_interp(&self.radii, &self.gamma1, r)
    }

    pub fn gamma2_at(&self, r: f64) -> f64 {
        power_interp(&self.radii, &self.gamma2, r)
    }

    /// Smallest `r` with `γ1(r) ≥ y`; infinite if the envelope saturates below `y`.
    pub fn gamma1_inverse(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let (r, g) = (&self.radii, &self.gamma1);
        let e = exponents(r, g);
        let last = r.len() - 1;
        let seg = if y <= g[0] {
            0
        } else if y > g[last] {
            last - 1
        } else {
            match (0..last).find(|&i| y <= g[i + 1]) {
                Some(i) => i,
                None => last - 1,
            }
        };
        if y > g[0] && y <= g[last] && g[seg] == g[seg + 1] {
            return r[seg];
        }
        if e[seg] <= 0.0 {
            return if y <= g[seg] { r[seg] } else { f64::INFINITY };
        }
        r[seg] * (y / g[seg]).powf(1.0 / e[seg])
    }

    /// Trajectory bound `r ↦ γ1⁻¹(γ2(r))`.
    pub fn bound(&self, r: f64) -> f64 {
        self.gamma1_inverse(self.gamma2_at(r))
    }

    /// Sandwich test at a single point with the declared relative tolerance.
    pub fn sandwiches(&self, v: &LyapunovCandidate, x: &State) -> bool {
        let r = x.norm();
        let val = v.value(x);
        let eps = self.relative_tolerance * self.gamma2_at(r);
        self.gamma1_at(r) - eps <= val && val <= self.gamma2_at(r) + eps
    }
}

fn directional_extrema(v: &LyapunovCandidate, r: f64, dirs: &[State]) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for u in dirs {
        let x = u * r;
        let val = v.value(&x);
        if !(val > 0.0) {
            return Err(Error::NotPositiveDefinite {
                x: x.as_slice().to_vec(),
                value: val,
            });
        }
        lo = lo.min(val);
        hi = hi.max(val);
    }
    Ok((lo, hi))
}

/// Fits monotone comparison envelopes to `V` from the directional extrema on each radius.
///
/// `gamma2` is the running maximum of the directional maxima from the innermost radius
/// outward, `gamma1` the running minimum of the directional minima from the outermost radius
/// inward.
pub fn fit_comparison_pair(
    v: &LyapunovCandidate,
    radii: &[f64],
    angular_samples: usize,
) -> Result<ComparisonPair> {
    if radii.len() < 2 {
        return Err(Error::Precondition(
            "at least two radii are needed for the envelopes".into(),
        ));
    }
    if radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition(
            "radii must be positive and strictly increasing".into(),
        ));
    }
    if radii[radii.len() - 1] >= v.domain_radius() {
        return Err(Error::Precondition(format!(
            "radius {} is outside the candidate domain (radius {})",
            radii[radii.len() - 1],
            v.domain_radius()
        )));
    }
    if angular_samples == 0 {
        return Err(Error::Precondition(
            "angular_samples must be positive".into(),
        ));
    }
    let dim = v.dim();
    let dirs = sphere_directions(dim, angular_samples, 0.0, 0x5EED);
    let mut raw_min = Vec::with_capacity(radii.len());
    let mut raw_max = Vec::with_capacity(radii.len());
    for &r in radii {
        let (lo, hi) = directional_extrema(v, r, &dirs)?;
        raw_min.push(lo);
        raw_max.push(hi);
    }
    let mut gamma2 = raw_max.clone();
    for i in 1..gamma2.len() {
        gamma2[i] = gamma2[i].max(gamma2[i - 1]);
    }
    let mut gamma1 = raw_min.clone();
    for i in (0..gamma1.len() - 1).rev() {
        gamma1[i] = gamma1[i].min(gamma1[i + 1]);
    }
    let mut pair = ComparisonPair {
        radii: radii.to_vec(),
        gamma1,
        gamma2,
        relative_tolerance: 0.0,
    };

    // Off-sample probes: half-offset directions on the tabulated radii and geometric
    // midpoints between them.
    let probe_dirs = sphere_directions(dim, angular_samples, 0.5, 0xF00D);
    let mut probe_radii = radii.to_vec();
    probe_radii.extend(radii.windows(2).map(|w| (w[0] * w[1]).sqrt()));
    let mut worst: f64 = 0.0;
    for &r in &probe_radii {
        let (g1, g2) = (pair.gamma1_at(r), pair.gamma2_at(r));
        for u in probe_dirs.iter().chain(dirs.iter()) {
            let val = v.value(&(u * r));
            worst = worst.max((g1 - val).max(val - g2).max(0.0) / g2);
        }
    }
    pair.relative_tolerance = 2.0 * worst + 1e-9;
    Ok(pair)
}

#[cfg(test)]
mod tests {
    use super::*;
    fn radial(p: i32) -> LyapunovCandidate {
        LyapunovCandidate::new("radial", 2, move |x: &State| x.norm().powi(p))
    }

    #[test]
    fn radially_symmetric_square() {
        let pair = fit_comparison_pair(&radial(2), &[0.25, 0.5, 1.0, 2.0], 64).unwrap();
        for (i, r) in pair.radii.iter().enumerate() {
            assert!((pair.gamma1[i] - r * r).abs() < 1e-12);
            assert!((pair.gamma2[i] - r * r).abs() < 1e-12);
        }
        for r in [0.1, 0.3, 0.7, 1.5, 3.0] {
            assert!((pair.bound(r) - r).abs() < 1e-9 * r.max(1.0), "r = {r}");
        }
    }

    #[test]
    fn radially_symmetric_quartic() {
        let pair = fit_comparison_pair(&radial(4), &[0.5, 1.0, 2.0], 36).unwrap();
        for r in [0.5, 1.0, 2.0, 0.8] {
            assert!((pair.bound(r) - r).abs() < 1e-9, "r = {r}");
        }
    }

    #[test]
    fn nonpositive_sample_is_rejected() {
        let v = LyapunovCandidate::new("x1", 2, |x: &State| x[0]);
        assert!(matches!(
            fit_comparison_pair(&v, &[0.5, 1.0], 8),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn radii_must_increase_and_lie_in_domain() {
        let v = radial(2).with_domain_radius(1.0);
        assert!(fit_comparison_pair(&v, &[0.5, 0.5], 8).is_err());
        assert!(fit_comparison_pair(&v, &[0.5, 1.5], 8).is_err());
    }

    #[test]
    fn envelopes_are_rectified() {
        // Directional extrema dip at r = 1; rectification keeps both envelopes monotone.
        let v = LyapunovCandidate::new("bump", 1, |x: &State| {
            let r = x[0].abs();
            r * r
                * (1.0
                    + 0.9
                        * (-(r - 1.0) * (r - 1.0) * 50.0).exp()
                        * if x[0] > 0.0 { -1.0 } else { 1.0 })
        });
        let pair = fit_comparison_pair(&v, &[0.8, 1.0, 1.05, 1.2], 2).unwrap();
        assert!(pair.gamma1.windows(2).all(|w| w[0] <= w[1]));
        assert!(pair.gamma2.windows(2).all(|w| w[0] <= w[1]));
        assert!(pair.gamma1.iter().zip(&pair.gamma2).all(|(a, b)| a <= b));
    }
}
