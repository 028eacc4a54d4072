//! Ground states of the two 1D model operators.
//!
//! The flat ("oscillator") family is `-d²/dt² + (t + alpha)²` on `[0, T]`,
//! Neumann at 0, Dirichlet at the truncation `T`. Its ground energy
//! `mu_osc(alpha)` dips below 1 exactly on a negative `alpha` interval and
//! attains its minimum `theta0 ~ 0.5901` at `alpha0 = -sqrt(theta0)`.
//!
//! The curved family lives on `[0, t_eps]`, `t_eps = c0 |log eps|`, in the
//! weighted measure `(1 - eps k t) dt`:
//!
//! ```text
//! H_{k,alpha} = -d²/dt² - (eps k / (1 - eps k t)) d/dt + V_{k,alpha},
//! V_{k,alpha}(t) = ((t + alpha - eps k t²/2) / (1 - eps k t))².
//! ```
//!
//! We never discretize the drift term directly. Both operators are assembled
//! from their quadratic forms
//! `q[phi] = int w (phi'² + V phi²) dt` against `B = diag(tau_i w_i)`,
//! with trapezoid weights `tau` and midpoint link weights for `w phi'²`. That
//! discrete pencil is symmetric by construction, so self-adjointness in the
//! weighted inner product holds to round-off, and the natural (free) boundary
//! rows reproduce the ghost-point Neumann stencil exactly.

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::optim::{bisect_root, golden_min};
use crate::tridiag::{self, EigOptions, SymTridiag};
use crate::abs_log;

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct OscillatorSpec {
    pub alpha: f64,
    pub truncation_t: f64,
    pub n_points: usize,
}

impl OscillatorSpec {
    pub fn new(alpha: f64) -> Self {
        OscillatorSpec { alpha, truncation_t: 12.0, n_points: 4096 }
    }

    pub fn with_grid(alpha: f64, truncation_t: f64, n_points: usize) -> Self {
        OscillatorSpec { alpha, truncation_t, n_points }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() {
            return Err(Error::domain("alpha must be finite"));
        }
        if !(self.truncation_t > 0.0) || self.n_points < 16 {
            return Err(Error::domain("oscillator grid invalid"));
        }
        // The ground state concentrates near t = max(0, -alpha) with Gaussian
        // tails; require ~6 widths of room so truncation sits below round-off.
        if self.truncation_t < (-self.alpha).max(0.0) + 6.0 {
            return Err(Error::domain(format!(
                "truncation_t = {} too small for alpha = {}",
                self.truncation_t, self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct CurvedOperatorSpec {
    pub k: f64,
    pub alpha: f64,
    pub eps: f64,
    pub c0: f64,
    pub n_points: usize,
}

impl CurvedOperatorSpec {
    pub fn new(k: f64, alpha: f64, eps: f64) -> Result<Self> {
        Self::with_grid(k, alpha, eps, 4.0, 2048)
    }

    pub fn with_grid(k: f64, alpha: f64, eps: f64, c0: f64, n_points: usize) -> Result<Self> {
        let spec = CurvedOperatorSpec { k, alpha, eps, c0, n_points };
        spec.validate()?;
        Ok(spec)
    }

    /// Like `with_grid`, but shrinks `c0` when the requested window would
    /// make the weight vanish: `c0_eff = min(c0, 0.9 / (eps k |log eps|))`.
    pub fn with_c0_clamped(k: f64, alpha: f64, eps: f64, c0: f64, n_points: usize) -> Result<Self> {
        let c0_eff = if k > 0.0 && eps > 0.0 {
            c0.min(0.9 / (eps * k * abs_log(eps)))
        } else {
            c0
        };
        Self::with_grid(k, alpha, eps, c0_eff, n_points)
    }

    pub fn t_eps(&self) -> f64 {
        self.c0 * abs_log(self.eps)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || !self.k.is_finite() {
            return Err(Error::domain("alpha and k must be finite"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::domain(format!("eps must lie in (0,1), got {}", self.eps)));
        }
        if self.k < 0.0 {
            return Err(Error::domain("curvature k must be nonnegative"));
        }
        if !(self.c0 > 0.0) || self.n_points < 16 {
            return Err(Error::domain("curved-operator grid invalid"));
        }
        if self.eps * self.k * self.t_eps() >= 1.0 {
            return Err(Error::domain(format!(
                "weight 1 - eps k t vanishes on [0, t_eps]: eps*k*t_eps = {:.3} >= 1 (reduce c0)",
                self.eps * self.k * self.t_eps()
            )));
        }
        Ok(())
    }

    /// Weight samples `w_i = 1 - eps k t_i`.
    pub fn weights(&self, grid: &Grid1D) -> Vec<f64> {
        grid.t.iter().map(|&t| 1.0 - self.eps * self.k * t).collect()
    }

    /// Potential samples `V_i = ((t + alpha - eps k t²/2) / w)²`.
    pub fn potential(&self, grid: &Grid1D) -> Vec<f64> {
        grid.t
            .iter()
            .map(|&t| {
                let w = 1.0 - self.eps * self.k * t;
                let c = t + self.alpha - 0.5 * self.eps * self.k * t * t;
                (c / w) * (c / w)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub mu: f64,
    /// Grid abscissae, including the Dirichlet endpoint when present.
    pub t: Vec<f64>,
    /// Ground state, nonneg, normalized to `sum tau_i w_i phi_i² = 1`.
    pub phi: Vec<f64>,
    /// Scaled eigen-residual (pencil backward error, see `tridiag::residual`).
    pub residual: f64,
}

/// Assemble the discrete pencil `(A, B)` of the weighted form on a uniform
/// grid. `A` is the stiffness-plus-potential form matrix, `B = diag(tau w)`.
/// With `dirichlet_right` the last node is eliminated; its stiffness link
/// stays in the remaining diagonal, which is exactly the Dirichlet condition.
pub fn assemble_form(
    grid: &Grid1D,
    w: &[f64],
    v: &[f64],
    dirichlet_right: bool,
) -> (SymTridiag, Vec<f64>) {
    let n_full = grid.len();
    let h = grid.h;
    let n = if dirichlet_right { n_full - 1 } else { n_full };
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n - 1];
    let mut b = vec![0.0; n];
    for i in 0..n {
        let mut d = grid.tau(i) * w[i] * v[i];
        if i > 0 {
            d += 0.5 * (w[i - 1] + w[i]) / h;
        }
        if i + 1 < n_full {
            d += 0.5 * (w[i] + w[i + 1]) / h;
        }
        diag[i] = d;
        b[i] = grid.tau(i) * w[i];
        if i + 1 < n {
            off[i] = -0.5 * (w[i] + w[i + 1]) / h;
        }
    }
    (SymTridiag { diag, off }, b)
}

fn solve_ground(
    grid: &Grid1D,
    w: &[f64],
    v: &[f64],
    dirichlet_right: bool,
    opts: EigOptions,
) -> Result<SpectralResult> {
    let (a, b) = assemble_form(grid, w, v, dirichlet_right);
    let (mu, mut phi) = tridiag::smallest_eigenpair(&a, &b, opts)?;
    let residual = tridiag::residual(&a, &b, mu, &phi);
    if dirichlet_right {
        phi.push(0.0);
    }
    Ok(SpectralResult { mu, t: grid.t.clone(), phi, residual })
}

/// Ground energy of the flat oscillator family.
pub fn mu_osc(spec: &OscillatorSpec) -> Result<SpectralResult> {
    spec.validate()?;
    let grid = Grid1D::uniform(spec.truncation_t, spec.n_points)?;
    let w = vec![1.0; grid.len()];
    let v: Vec<f64> = grid.t.iter().map(|&t| (t + spec.alpha) * (t + spec.alpha)).collect();
    solve_ground(&grid, &w, &v, true, EigOptions::default())
}

/// Ground energy of the curved, weighted family. Neumann at both ends: the
/// state is `O(exp(-t²/2))` at `t_eps`, so the free right end costs nothing,
/// and the weighted form makes the condition natural.
pub fn mu_eps(spec: &CurvedOperatorSpec) -> Result<SpectralResult> {
    spec.validate()?;
    let grid = Grid1D::uniform(spec.t_eps(), spec.n_points)?;
    let w = spec.weights(&grid);
    let v = spec.potential(&grid);
    solve_ground(&grid, &w, &v, false, EigOptions::default())
}

#[derive(Debug, Clone, Copy)]
pub struct Theta0Config {
    pub bracket: (f64, f64),
    pub scan_step: f64,
    pub alpha_tol: f64,
    pub truncation_t: f64,
    pub n_points: usize,
}

impl Default for Theta0Config {
    fn default() -> Self {
        Theta0Config {
            bracket: (-1.2, -0.4),
            scan_step: 0.05,
            alpha_tol: 1e-8,
            truncation_t: 12.0,
            n_points: 8192,
        }
    }
}

/// Minimize `mu_osc` over `alpha`: returns `(theta0, alpha0)`.
///
/// A coarse scan must expose an interior minimum with a clean
/// decrease-then-increase pattern; otherwise the bracket is rejected with the
/// scan trace attached. Golden-section then refines inside the scan cell.
pub fn find_theta0(cfg: &Theta0Config) -> Result<(f64, f64)> {
    let (lo, hi) = cfg.bracket;
    if !(hi > lo) || !(cfg.scan_step > 0.0) {
        return Err(Error::domain("theta0 bracket/scan config invalid"));
    }
    let eval = |alpha: f64| -> Result<f64> {
        let spec = OscillatorSpec::with_grid(alpha, cfg.truncation_t, cfg.n_points);
        Ok(mu_osc(&spec)?.mu)
    };

    let mut trace: Vec<(f64, f64)> = Vec::new();
    let mut alpha = lo;
    while alpha < hi + 0.5 * cfg.scan_step {
        let a = alpha.min(hi);
        trace.push((a, eval(a)?));
        alpha += cfg.scan_step;
    }
    let j = trace
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .expect("scan is nonempty");
    if j == 0 || j + 1 == trace.len() {
        return Err(Error::Bracket {
            message: format!(
                "minimum of mu_osc sits at the bracket edge alpha = {:.4}; widen the bracket",
                trace[j].0
            ),
            trace,
        });
    }
    for w in trace[..=j].windows(2) {
        if w[1].1 > w[0].1 + 1e-12 {
            return Err(Error::Bracket {
                message: "mu_osc is not unimodal on the bracket (non-monotone descent)".into(),
                trace,
            });
        }
    }
    for w in trace[j..].windows(2) {
        if w[1].1 < w[0].1 - 1e-12 {
            return Err(Error::Bracket {
                message: "mu_osc is not unimodal on the bracket (non-monotone ascent)".into(),
                trace,
            });
        }
    }

    let (a_lo, a_hi) = (trace[j - 1].0, trace[j + 1].0);
    let (alpha0, theta0) = golden_min(
        |a| {
            let spec = OscillatorSpec::with_grid(a, cfg.truncation_t, cfg.n_points);
            mu_osc(&spec).map(|r| r.mu).unwrap_or(f64::INFINITY)
        },
        a_lo,
        a_hi,
        cfg.alpha_tol,
    );
    if !theta0.is_finite() {
        return Err(Error::internal("eigensolve failed during theta0 refinement"));
    }
    Ok((theta0, alpha0))
}

#[derive(Debug, Clone, Copy)]
pub struct WindowOptions {
    pub root_tol: f64,
    pub c0: f64,
    pub n_points: usize,
}

impl Default for WindowOptions {
    fn default() -> Self {
        WindowOptions { root_tol: 1e-10, c0: 4.0, n_points: 2048 }
    }
}

/// The open interval of `alpha` on which `1/b > mu(k, alpha, eps)`, found by
/// bisection outward from the interior minimum of `mu`. `Ok(None)` is the
/// empty-window signal: the quadratic form is nonnegative for every `alpha`
/// and the 1D minimizer downstream is identically zero.
///
/// `eps = 0` selects the flat oscillator family (curvature only enters
/// through `eps k`).
pub fn alpha_window(b: f64, k: f64, eps: f64, opts: &WindowOptions) -> Result<Option<(f64, f64)>> {
    // b beyond 1/theta0 is not rejected: it lands in the empty-window branch
    // below, which is exactly what it means physically.
    if !(b > 1.0) || !b.is_finite() {
        return Err(Error::domain(format!("alpha_window requires b > 1, got {b}")));
    }
    let mu_of = |alpha: f64| -> Result<f64> {
        if eps == 0.0 {
            mu_osc(&OscillatorSpec::with_grid(alpha, 12.0, opts.n_points)).map(|r| r.mu)
        } else {
            let spec = CurvedOperatorSpec::with_c0_clamped(k, alpha, eps, opts.c0, opts.n_points)?;
            mu_eps(&spec).map(|r| r.mu)
        }
    };
    let target = 1.0 / b;

    // Interior minimum first.
    let mut scan: Vec<(f64, f64)> = Vec::new();
    let mut a = -1.5;
    while a <= 0.2 + 1e-12 {
        scan.push((a, mu_of(a)?));
        a += 0.05;
    }
    let j = scan
        .iter()
        .enumerate()
        .min_by(|x, y| x.1 .1.total_cmp(&y.1 .1))
        .map(|(i, _)| i)
        .expect("scan nonempty");
    if j == 0 || j + 1 == scan.len() {
        return Err(Error::Bracket {
            message: "interior minimum of mu over alpha not found in [-1.5, 0.2]".into(),
            trace: scan,
        });
    }
    let (alpha_star, mu_star) =
        golden_min(|x| mu_of(x).unwrap_or(f64::INFINITY), scan[j - 1].0, scan[j + 1].0, 1e-9);
    if target <= mu_star {
        return Ok(None);
    }

    // Walk outward until mu crosses 1/b, then bisect.
    let edge = |dir: f64| -> Result<f64> {
        let mut x = alpha_star;
        for _ in 0..60 {
            let prev = x;
            x += dir * 0.1;
            if mu_of(x)? >= target {
                let root = bisect_root(
                    |y| mu_of(y).unwrap_or(f64::INFINITY) - target,
                    if dir < 0.0 { x } else { prev },
                    if dir < 0.0 { prev } else { x },
                    opts.root_tol,
                )
                .ok_or_else(|| Error::internal("bisection lost its sign change"))?;
                return Ok(root);
            }
        }
        Err(Error::domain("window edge not found within 6 units of the minimum"))
    };
    let lo_edge = edge(-1.0)?;
    let hi_edge = edge(1.0)?;

    // Exactly one crossing on each side: count sign changes on a fine scan.
    let mut crossings = 0;
    let mut trace = Vec::new();
    let mut x = lo_edge - 0.3;
    let mut prev_sign = (mu_of(x)? - target).signum();
    trace.push((x, prev_sign));
    while x <= hi_edge + 0.3 {
        x += 0.02;
        let s = (mu_of(x)? - target).signum();
        if s != prev_sign {
            crossings += 1;
            prev_sign = s;
        }
        trace.push((x, s));
    }
    if crossings != 2 {
        return Err(Error::Bracket {
            message: format!("expected exactly 2 crossings of mu = 1/b, found {crossings}"),
            trace,
        });
    }
    if hi_edge >= 0.0 {
        return Err(Error::internal("window touches alpha >= 0, contradicting mu(0) = 1 > 1/b"));
    }
    Ok(Some((lo_edge, hi_edge)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn oscillator_at_zero_alpha_is_one() {
        // Half harmonic oscillator with Neumann wall: ground energy 1.
        let r = mu_osc(&OscillatorSpec::new(0.0)).unwrap();
        assert_relative_eq!(r.mu, 1.0, epsilon = 1e-6);
        assert!(r.residual <= 1e-12, "residual {}", r.residual);
    }

    #[test]
    fn ground_state_is_normalized_and_nonnegative() {
        let spec = OscillatorSpec::new(-0.7);
        let r = mu_osc(&spec).unwrap();
        let grid = Grid1D::uniform(spec.truncation_t, spec.n_points).unwrap();
        let norm: f64 = (0..grid.len()).map(|i| grid.tau(i) * r.phi[i] * r.phi[i]).sum();
        assert!((norm - 1.0).abs() <= 1e-10, "norm deviates: {norm}");
        assert!(r.phi.iter().all(|&p| p >= 0.0));
        assert_eq!(*r.phi.last().unwrap(), 0.0, "Dirichlet end");
    }

    #[test]
    fn curved_matrix_is_symmetric_and_weight_guard_fires() {
        let spec = CurvedOperatorSpec::with_grid(1.0, -0.7, 0.05, 4.0, 512).unwrap();
        let grid = Grid1D::uniform(spec.t_eps(), spec.n_points).unwrap();
        let (a, _) = assemble_form(&grid, &spec.weights(&grid), &spec.potential(&grid), false);
        // Symmetry is structural here; spot-check the assembled bands exist
        // and the weight guard rejects a window where 1 - eps*k*t <= 0.
        assert_eq!(a.off.len() + 1, a.diag.len());
        let bad = CurvedOperatorSpec::with_grid(2.0, -0.7, 0.2, 4.0, 512);
        assert!(matches!(bad, Err(Error::Domain(_))));
    }

    #[test]
    fn mu_eps_without_curvature_degenerates_to_oscillator() {
        let spec = CurvedOperatorSpec::with_grid(0.0, -0.7, 0.05, 4.0, 2048).unwrap();
        let curved = mu_eps(&spec).unwrap();
        let osc = mu_osc(&OscillatorSpec::with_grid(-0.7, spec.t_eps(), 2048)).unwrap();
        assert!((curved.mu - osc.mu).abs() <= 1e-9, "gap {}", (curved.mu - osc.mu).abs());
    }

    #[test]
    fn theta0_bracket_missing_minimum_errors_with_trace() {
        let cfg = Theta0Config {
            bracket: (-0.55, -0.4),
            n_points: 1024,
            ..Theta0Config::default()
        };
        match find_theta0(&cfg) {
            Err(Error::Bracket { trace, .. }) => assert!(trace.len() >= 3),
            other => panic!("expected bracket failure, got {other:?}"),
        }
    }
}
