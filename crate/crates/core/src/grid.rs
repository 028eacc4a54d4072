//! Uniform 1D grids and trapezoid quadrature.
//!
//! Every 1D object in the crate lives on a uniform grid over `[0, t_end]`
//! with `n` nodes including both endpoints. Quadrature is trapezoidal
//! throughout; the half-weights at the ends are what make the discrete
//! quadratic forms exactly symmetric, so nothing here may silently switch
//! schemes.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    pub t: Vec<f64>,
    pub h: f64,
}

impl Grid1D {
    pub fn uniform(t_end: f64, n: usize) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::domain(format!("grid endpoint must be positive, got {t_end}")));
        }
        if n < 16 {
            return Err(Error::domain(format!("grid needs at least 16 nodes, got {n}")));
        }
        let h = t_end / (n - 1) as f64;
        let t = (0..n).map(|i| i as f64 * h).collect();
        Ok(Grid1D { t, h })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        *self.t.last().expect("grid is never empty")
    }

    /// Trapezoid weight of node `i`: `h` inside, `h/2` at the ends.
    pub fn tau(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.t.len() {
            0.5 * self.h
        } else {
            self.h
        }
    }
}

/// `int v dt` by the trapezoid rule on a uniform grid with spacing `h`.
pub fn trapz(h: f64, v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let interior: f64 = v[1..v.len() - 1].iter().sum();
    h * (0.5 * v[0] + interior + 0.5 * v[v.len() - 1])
}

/// Running trapezoid integral; output[0] = 0, output matches `trapz` at the end.
pub fn cumtrapz(h: f64, v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in v.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Central differences inside, one-sided second-order at the ends.
pub fn derivative(h: f64, v: &[f64]) -> Vec<f64> {
    let n = v.len();
    assert!(n >= 3, "derivative stencil needs at least 3 nodes");
    let mut d = vec![0.0; n];
    d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    for i in 1..n - 1 {
        d[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
    }
    d[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
    d
}

/// Fourth-order central differences in the interior, falling back to the
/// second-order stencils within two nodes of each end. The fallback nodes sit
/// where the data this crate feeds in is flat (Neumann end) or decayed, so
/// the mixed order does not show up in max-norm error.
pub fn derivative4(h: f64, v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut d = derivative(h, v);
    for i in 2..n.saturating_sub(2) {
        d[i] = (v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) / (12.0 * h);
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn trapz_integrates_linear_exactly() {
        let g = Grid1D::uniform(2.0, 101).unwrap();
        let v: Vec<f64> = g.t.iter().map(|&t| 3.0 * t + 1.0).collect();
        assert_relative_eq!(trapz(g.h, &v), 8.0, max_relative = 1e-14);
    }

    #[test]
    fn cumtrapz_endpoint_matches_trapz() {
        let g = Grid1D::uniform(1.0, 57).unwrap();
        let v: Vec<f64> = g.t.iter().map(|&t| (t * 2.3).sin()).collect();
        let c = cumtrapz(g.h, &v);
        assert_relative_eq!(*c.last().unwrap(), trapz(g.h, &v), epsilon = 1e-15);
        assert_eq!(c[0], 0.0);
    }

    #[test]
    fn tau_sums_to_interval_length() {
        let g = Grid1D::uniform(3.5, 64).unwrap();
        let total: f64 = (0..g.len()).map(|i| g.tau(i)).sum();
        assert_relative_eq!(total, 3.5, max_relative = 1e-14);
    }

    #[test]
    fn derivative_is_second_order() {
        let err = |n: usize| {
            let g = Grid1D::uniform(1.0, n).unwrap();
            let v: Vec<f64> = g.t.iter().map(|&t| (3.0 * t).sin()).collect();
            let d = derivative(g.h, &v);
            g.t.iter()
                .zip(&d)
                .map(|(&t, &di)| (di - 3.0 * (3.0 * t).cos()).abs())
                .fold(0.0_f64, f64::max)
        };
        let ratio = err(101) / err(201);
        assert!((3.0..5.5).contains(&ratio), "expected O(h^2), ratio {ratio}");
    }
}
