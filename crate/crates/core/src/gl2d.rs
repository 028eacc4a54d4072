//! The full two-dimensional functional on a disc sample.
//!
//! The discretization is a polar lattice whose radial nodes are the image
//! `r = R - eps t` of the 1D layer grid, so the radial kinetic, potential
//! and quartic sums coincide node-by-node with their 1D counterparts and
//! every comparison against the layer theory is a same-grid statement.
//! Everything magnetic is stored as link integrals `int A . dl`: the
//! kinetic term couples neighbours through the phase factors
//! `exp(i link / eps^2)`, a discrete gauge transform shifts links by exact
//! differences, and the plaquette circulation divided by the cell area is
//! the lattice curl. In the fixed-field gauge `A = (r/2) e_theta` both the
//! link integrals and the curl are exact, not quadratures.
//!
//! The order parameter is tiny deeper than a few layer widths, so the
//! lattice stops at `r = R - eps t_end` and pins the innermost ring to
//! zero; the truncation is far below every tolerance used here.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::layer::{LayerField, LayerParams};
use crate::profile1d::{energy_at_alpha, OptimalProfile};

/// Convergence target for the max-norm of the weighted energy gradient.
pub const GRAD_TOL: f64 = 1e-8;
/// Converged minimizers must satisfy `|psi| <= 1 + MOD_TOL`.
pub const MOD_TOL: f64 = 1e-8;
/// A phase-increment sum must land on an integer multiple of `2 pi` within
/// this slack before it is reported as a degree.
const DEGREE_TOL: f64 = 1e-6;
/// Desk-scale rendering of the admissibility condition on `gamma_eps`: the
/// threshold must dominate `eps^{1/6} |log eps|^{4/3}`, and the constant is
/// calibrated so that the worked choice `|log eps|^{-2}` passes on the
/// default sweep while clearly vanishing choices fail.
const GAME_CONST: f64 = 0.04;

/// Polar lattice clustered in the boundary layer.
#[derive(Debug, Clone)]
pub struct DiscGrid {
    pub radius: f64,
    pub eps: f64,
    /// Generating layer grid; ring `i` sits at `r = radius - eps * t[n_r-1-i]`.
    pub grid_t: Grid1D,
    /// Radial nodes, ascending; the last one is the boundary `r = radius`.
    pub r: Vec<f64>,
    /// Azimuthal nodes, uniform and periodic; forced even for the sweeps
    /// used by the smoother.
    pub n_theta: usize,
}

/// Azimuthal resolution scaled so the phase advance per cell stays uniform
/// across the default sweep.
pub fn suggested_n_theta(eps: f64) -> usize {
    let n = (384.0 * (0.12 / eps).powf(1.7)).ceil() as usize;
    n + n % 2
}

impl DiscGrid {
    pub fn boundary_layer(radius: f64, eps: f64, layer: &Grid1D, n_theta: usize) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::domain(format!("radius must be positive, got {radius}")));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::domain(format!("eps must lie in (0,1), got {eps}")));
        }
        if eps * layer.t_end() >= radius {
            return Err(Error::domain(
                "layer grid reaches past the disc center; shrink t_end or eps",
            ));
        }
        if n_theta < 16 {
            return Err(Error::domain(format!("need at least 16 angular nodes, got {n_theta}")));
        }
        let within = layer.t.iter().filter(|&&t| t <= 3.0).count();
        if within < 24 {
            return Err(Error::domain(format!(
                "only {within} radial nodes within 3 eps of the boundary; need 24"
            )));
        }
        let n_theta = n_theta + n_theta % 2;
        let r: Vec<f64> = layer.t.iter().rev().map(|&t| radius - eps * t).collect();
        Ok(DiscGrid { radius, eps, grid_t: layer.clone(), r, n_theta })
    }

    pub fn n_r(&self) -> usize {
        self.r.len()
    }

    pub fn h_theta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    pub fn theta(&self, j: usize) -> f64 {
        self.h_theta() * j as f64
    }

    /// Layer depth of ring `i` (outermost ring has `t = 0`).
    pub fn t_of_ring(&self, i: usize) -> f64 {
        self.grid_t.t[self.n_r() - 1 - i]
    }

    /// Ring carrying layer node `l` of the generating grid.
    pub fn ring_of(&self, l: usize) -> usize {
        self.n_r() - 1 - l
    }

    fn node(&self, i: usize, j: usize) -> usize {
        i * self.n_theta + j
    }
}

/// How the magnetic field is treated during minimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `A = (r/2) e_theta` frozen; the induced-field correction is beyond
    /// the error budget of every check run here.
    FixedA,
    /// Alternating descent on the order parameter and the link integrals,
    /// with the field cost `(b/eps^4) |curl A - 1|^2`.
    Coupled,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed_a" | "fixed-a" | "fixed" => Ok(Mode::FixedA),
            "coupled" => Ok(Mode::Coupled),
            other => Err(Error::domain(format!("unknown mode '{other}', expected fixed_a|coupled"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::FixedA => "fixed_a",
            Mode::Coupled => "coupled",
        })
    }
}

/// Order parameter and magnetic data on a `DiscGrid`.
///
/// `psi` is row-major, `psi[i * n_theta + j]` at `(r_i, theta_j)`; the
/// innermost ring `i = 0` is pinned to zero. `link_r[i*n_theta+j]` holds
/// `int A . dl` along the radial edge from ring `i` to ring `i+1` at
/// `theta_j`, and `link_theta[i*n_theta+j]` along the arc from `theta_j`
/// to `theta_{j+1}` on ring `i`.
#[derive(Debug, Clone)]
pub struct DiscField {
    pub grid: DiscGrid,
    pub b: f64,
    pub psi: Vec<Complex64>,
    pub link_r: Vec<f64>,
    pub link_theta: Vec<f64>,
    pub mode: Mode,
    pub energy: f64,
}

impl DiscField {
    pub fn eps(&self) -> f64 {
        self.grid.eps
    }

    pub fn psi_at(&self, i: usize, j: usize) -> Complex64 {
        self.psi[self.grid.node(i, j)]
    }

    pub fn max_modulus(&self) -> f64 {
        self.psi.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Mean tangential potential on the boundary: `(1/|dOmega|) oint A . dl`.
    pub fn gamma0(&self) -> f64 {
        let i = self.grid.n_r() - 1;
        let row = &self.link_theta[i * self.grid.n_theta..(i + 1) * self.grid.n_theta];
        row.iter().sum::<f64>() / (2.0 * PI * self.grid.radius)
    }

    /// Lattice curl on plaquette `(i, j)`: circulation over area.
    pub fn curl(&self, i: usize, j: usize) -> f64 {
        let n = self.grid.n_theta;
        let jp = (j + 1) % n;
        let circ = self.link_r[i * n + j] + self.link_theta[(i + 1) * n + j]
            - self.link_r[i * n + jp]
            - self.link_theta[i * n + j];
        let area = 0.5 * self.grid.h_theta() * (self.grid.r[i + 1].powi(2) - self.grid.r[i].powi(2));
        circ / area
    }
}

/// Link integrals of the smooth gauge `A = (r/2) e_theta`: arcs carry
/// `r^2 h_theta / 2` exactly, radial edges vanish.
pub fn symmetric_links(grid: &DiscGrid) -> (Vec<f64>, Vec<f64>) {
    let n = grid.n_theta;
    let link_r = vec![0.0; (grid.n_r() - 1) * n];
    let mut link_theta = vec![0.0; grid.n_r() * n];
    for (i, &r) in grid.r.iter().enumerate() {
        let a = 0.5 * r * r * grid.h_theta();
        link_theta[i * n..(i + 1) * n].fill(a);
    }
    (link_r, link_theta)
}

/// Link integrals of the trial gauge `A = -(R^2 - r^2)/(2r) e_theta`, which
/// vanishes on the boundary and keeps `curl A = 1` on the annulus.
pub fn trial_links(grid: &DiscGrid) -> (Vec<f64>, Vec<f64>) {
    let n = grid.n_theta;
    let link_r = vec![0.0; (grid.n_r() - 1) * n];
    let mut link_theta = vec![0.0; grid.n_r() * n];
    let r2 = grid.radius * grid.radius;
    for (i, &r) in grid.r.iter().enumerate() {
        let a = -0.5 * (r2 - r * r) * grid.h_theta();
        link_theta[i * n..(i + 1) * n].fill(a);
    }
    (link_r, link_theta)
}

/// Quadrature weights shared by the energy, the gradient and the smoother.
struct Assembly {
    n_r: usize,
    n_theta: usize,
    /// Radial link weight `r_mid h_theta / dr`.
    c_r: Vec<f64>,
    /// Arc link weight `tau_i / (r_i h_theta)`.
    c_th: Vec<f64>,
    /// Node mass `tau_i r_i h_theta`.
    mass: Vec<f64>,
    /// Jacobi scale: sum of incident link weights plus the potential scale.
    diag: Vec<f64>,
    /// `1 / (b eps^2)`.
    pot: f64,
}

fn assemble(grid: &DiscGrid, b: f64) -> Assembly {
    let n_r = grid.n_r();
    let ht = grid.h_theta();
    let mut c_r = Vec::with_capacity(n_r - 1);
    for i in 0..n_r - 1 {
        let dr = grid.r[i + 1] - grid.r[i];
        c_r.push(0.5 * (grid.r[i] + grid.r[i + 1]) * ht / dr);
    }
    let mut tau = vec![0.0; n_r];
    for i in 0..n_r {
        let left = if i > 0 { grid.r[i] - grid.r[i - 1] } else { 0.0 };
        let right = if i + 1 < n_r { grid.r[i + 1] - grid.r[i] } else { 0.0 };
        tau[i] = 0.5 * (left + right);
    }
    let mass: Vec<f64> = (0..n_r).map(|i| tau[i] * grid.r[i] * ht).collect();
    let c_th: Vec<f64> = (0..n_r).map(|i| tau[i] / (grid.r[i] * ht)).collect();
    let pot = 1.0 / (b * grid.eps * grid.eps);
    let diag: Vec<f64> = (0..n_r)
        .map(|i| {
            let left = if i > 0 { c_r[i - 1] } else { 0.0 };
            let right = if i + 1 < n_r { c_r[i] } else { 0.0 };
            left + right + 2.0 * c_th[i] + mass[i] * pot
        })
        .collect();
    Assembly { n_r, n_theta: grid.n_theta, c_r, c_th, mass, diag, pot }
}

/// Phase factors `exp(i link / eps^2)` for every edge.
fn phase_factors(eps: f64, link_r: &[f64], link_theta: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let inv = 1.0 / (eps * eps);
    let ph = |a: &f64| Complex64::from_polar(1.0, a * inv);
    (link_r.iter().map(ph).collect(), link_theta.iter().map(ph).collect())
}

/// Kinetic plus potential energy of `psi` against fixed links. Per-ring
/// partial sums are combined in ring order, so the result does not depend
/// on the thread count.
fn psi_energy(asm: &Assembly, psi: &[Complex64], ph_r: &[Complex64], ph_th: &[Complex64]) -> f64 {
    let n = asm.n_theta;
    let partials: Vec<f64> = (0..asm.n_r)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            let row = i * n;
            for j in 0..n {
                let p = psi[row + j];
                if i + 1 < asm.n_r {
                    let d = p - psi[row + n + j] * ph_r[row + j];
                    acc += asm.c_r[i] * d.norm_sqr();
                }
                let jp = if j + 1 == n { 0 } else { j + 1 };
                let d = p - psi[row + jp] * ph_th[row + j];
                acc += asm.c_th[i] * d.norm_sqr();
                let m2 = p.norm_sqr();
                acc += 0.5 * asm.mass[i] * asm.pot * (m2 * m2 - 2.0 * m2);
            }
            acc
        })
        .collect();
    partials.iter().sum()
}

/// Gradient `dE/d conj(psi)` with the pinned ring masked. Row-parallel.
fn psi_gradient(
    asm: &Assembly,
    psi: &[Complex64],
    ph_r: &[Complex64],
    ph_th: &[Complex64],
    grad: &mut [Complex64],
) {
    let n = asm.n_theta;
    let n_r = asm.n_r;
    grad.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
        if i == 0 {
            out.fill(Complex64::new(0.0, 0.0));
            return;
        }
        let row = i * n;
        for (j, slot) in out.iter_mut().enumerate() {
            let p = psi[row + j];
            let mut g = Complex64::new(0.0, 0.0);
            if i + 1 < n_r {
                g += asm.c_r[i] * (p - psi[row + n + j] * ph_r[row + j]);
            }
            g += asm.c_r[i - 1] * (p - psi[row - n + j] * ph_r[row - n + j].conj());
            let jp = if j + 1 == n { 0 } else { j + 1 };
            let jm = if j == 0 { n - 1 } else { j - 1 };
            g += asm.c_th[i] * (p - psi[row + jp] * ph_th[row + j]);
            g += asm.c_th[i] * (p - psi[row + jm] * ph_th[row + jm].conj());
            g += asm.mass[i] * asm.pot * (p.norm_sqr() - 1.0) * p;
            *slot = g;
        }
    });
}

/// Field-energy term of the coupled functional.
fn field_energy(grid: &DiscGrid, b: f64, link_r: &[f64], link_theta: &[f64]) -> f64 {
    let n = grid.n_theta;
    let ht = grid.h_theta();
    let scale = b / grid.eps.powi(4);
    let partials: Vec<f64> = (0..grid.n_r() - 1)
        .into_par_iter()
        .map(|i| {
            let area = 0.5 * ht * (grid.r[i + 1].powi(2) - grid.r[i].powi(2));
            let mut acc = 0.0;
            for j in 0..n {
                let jp = if j + 1 == n { 0 } else { j + 1 };
                let circ = link_r[i * n + j] + link_theta[(i + 1) * n + j]
                    - link_r[i * n + jp]
                    - link_theta[i * n + j];
                let d = circ / area - 1.0;
                acc += scale * area * d * d;
            }
            acc
        })
        .collect();
    partials.iter().sum()
}

/// Total discrete energy of a field (kinetic + potential, plus the field
/// term in coupled mode).
pub fn disc_energy(field: &DiscField) -> f64 {
    let asm = assemble(&field.grid, field.b);
    let (ph_r, ph_th) = phase_factors(field.grid.eps, &field.link_r, &field.link_theta);
    let mut e = psi_energy(&asm, &field.psi, &ph_r, &ph_th);
    if field.mode == Mode::Coupled {
        e += field_energy(&field.grid, field.b, &field.link_r, &field.link_theta);
    }
    e
}

/// Discrete gauge transform: `psi -> psi exp(-i chi / eps^2)` at the nodes
/// and `link -> link + (chi_head - chi_tail)` on the edges. The energy is
/// invariant to round-off by construction.
pub fn gauge_transform(field: &DiscField, chi: &[f64]) -> Result<DiscField> {
    let grid = &field.grid;
    let n = grid.n_theta;
    if chi.len() != field.psi.len() {
        return Err(Error::shape("gauge function must be sampled on every node"));
    }
    let inv = 1.0 / (grid.eps * grid.eps);
    let mut out = field.clone();
    for (p, &c) in out.psi.iter_mut().zip(chi) {
        *p *= Complex64::from_polar(1.0, -c * inv);
    }
    for i in 0..grid.n_r() - 1 {
        for j in 0..n {
            out.link_r[i * n + j] += chi[(i + 1) * n + j] - chi[i * n + j];
        }
    }
    for i in 0..grid.n_r() {
        for j in 0..n {
            let jp = if j + 1 == n { 0 } else { j + 1 };
            out.link_theta[i * n + j] += chi[i * n + jp] - chi[i * n + j];
        }
    }
    out.energy = disc_energy(&out);
    Ok(out)
}

fn check_profile(grid: &DiscGrid, opt: &OptimalProfile) -> Result<()> {
    let p = &opt.profile.params;
    if (p.k * grid.radius - 1.0).abs() > 1e-12 {
        return Err(Error::domain(format!(
            "profile curvature {} does not match the disc radius {}",
            p.k, grid.radius
        )));
    }
    if p.eps != grid.eps {
        return Err(Error::domain("profile eps does not match the grid"));
    }
    if opt.profile.f.len() != grid.n_r() {
        return Err(Error::shape(format!(
            "profile has {} nodes, grid has {} rings",
            opt.profile.f.len(),
            grid.n_r()
        )));
    }
    if opt.profile.is_trivial() {
        return Err(Error::TrivialRegime("the matching 1D profile vanishes".into()));
    }
    Ok(())
}

/// Modulus cutoff of the trial state: one through the layer, a Gaussian
/// shoulder below it, hard zero on the inner half of the disc.
pub fn trial_cutoff(r: f64, radius: f64, eps: f64, t_eps: f64) -> f64 {
    if r >= radius - eps * t_eps {
        1.0
    } else if r <= 0.5 * radius {
        0.0
    } else {
        let d = (radius - eps * t_eps - r) / eps;
        (-d * d).exp()
    }
}

/// Trial state: the 1D profile riding the integer phase closest to the
/// optimal one, in the gauge whose boundary circulation vanishes.
pub fn build_trial(grid: &DiscGrid, opt: &OptimalProfile) -> Result<DiscField> {
    check_profile(grid, opt)?;
    let n = grid.n_theta;
    let n_r = grid.n_r();
    let eps = grid.eps;
    let t_eps = grid.grid_t.t_end();
    let winding = -(opt.alpha_k / eps).floor();
    let (link_r, link_theta) = trial_links(grid);
    let mut psi = vec![Complex64::new(0.0, 0.0); n_r * n];
    for i in 1..n_r {
        let f = opt.profile.f[n_r - 1 - i] * trial_cutoff(grid.r[i], grid.radius, eps, t_eps);
        for j in 0..n {
            psi[i * n + j] = f * Complex64::from_polar(1.0, winding * grid.theta(j));
        }
    }
    let mut field = DiscField {
        grid: grid.clone(),
        b: opt.profile.params.b,
        psi,
        link_r,
        link_theta,
        mode: Mode::FixedA,
        energy: 0.0,
    };
    field.energy = disc_energy(&field);
    Ok(field)
}

/// Optimal integer winding for the smooth symmetric gauge: the winding
/// whose effective 1D phase, flux quanta included, has the lowest discrete
/// 1D energy. At small eps this is the nearest integer to the real-valued
/// target; resolving the tie by energy matters on coarse sweeps.
fn symmetric_winding(grid: &DiscGrid, opt: &OptimalProfile) -> f64 {
    let eps = grid.eps;
    let r = grid.radius;
    let quanta = (0.5 * r * r / (eps * eps)).floor();
    let target = -r * (opt.alpha_k / eps + quanta);
    let alpha_of = |w: f64| -(w * eps / r + eps * quanta);
    let cost = |w: f64| {
        energy_at_alpha(&opt.profile, alpha_of(w)).unwrap_or(f64::INFINITY)
    };
    let lo = target.floor();
    if cost(lo) <= cost(lo + 1.0) {
        lo
    } else {
        lo + 1.0
    }
}

struct Budget {
    ncg_block: usize,
    gs_block: usize,
    rounds: usize,
}

const BUDGET: Budget = Budget { ncg_block: 600, gs_block: 40, rounds: 80 };

/// Jacobi-preconditioned nonlinear conjugate gradient (restarted every 50
/// steps) with Armijo backtracking, alternating with red-black sweeps of
/// exact single-node minimizations once it stops paying. Runs until the
/// gradient max-norm reaches `tol`.
fn solve_psi(
    asm: &Assembly,
    psi: &mut Vec<Complex64>,
    ph_r: &[Complex64],
    ph_th: &[Complex64],
    tol: f64,
    trace: &mut Vec<(usize, f64, f64)>,
) -> Result<f64> {
    let nn = psi.len();
    let n = asm.n_theta;
    let inner = |a: &[Complex64], b: &[Complex64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
    };
    let precond = |g: &[Complex64], out: &mut Vec<Complex64>| {
        out.clear();
        out.extend(g.iter().enumerate().map(|(p, &v)| v / asm.diag[p / n]));
    };
    // The residual is measured against the Jacobi scale: the raw gradient
    // max-norm grows with the quadrature weights, the weighted one does not.
    let weighted_max = |g: &[Complex64]| -> f64 {
        g.iter()
            .enumerate()
            .map(|(p, z)| z.norm() / asm.diag[p / n])
            .fold(0.0, f64::max)
    };

    let mut grad = vec![Complex64::new(0.0, 0.0); nn];
    let mut pg: Vec<Complex64> = Vec::with_capacity(nn);
    let mut dir = vec![Complex64::new(0.0, 0.0); nn];
    let mut candidate = vec![Complex64::new(0.0, 0.0); nn];
    let mut energy = psi_energy(asm, psi, ph_r, ph_th);
    let mut step: f64 = 1.0;
    let mut iters = 0usize;

    for _round in 0..BUDGET.rounds {
        // Conjugate-gradient block.
        let mut gg_prev = 0.0;
        let mut pg_prev: Vec<Complex64> = Vec::new();
        for it in 0..BUDGET.ncg_block {
            psi_gradient(asm, psi, ph_r, ph_th, &mut grad);
            let gmax = weighted_max(&grad);
            if it == 0 || (iters + it) % 100 == 0 {
                trace.push((iters + it, gmax, energy));
            }
            if gmax <= tol {
                trace.push((iters + it, gmax, energy));
                return Ok(energy);
            }
            precond(&grad, &mut pg);
            let gg = inner(&grad, &pg);
            let beta = if it % 50 == 0 || pg_prev.is_empty() {
                0.0
            } else {
                ((gg - inner(&grad, &pg_prev)) / gg_prev).max(0.0)
            };
            for p in 0..nn {
                dir[p] = -pg[p] + beta * dir[p];
            }
            let mut slope = 2.0 * inner(&grad, &dir);
            if slope >= 0.0 {
                dir.copy_from_slice(&pg);
                for d in dir.iter_mut() {
                    *d = -*d;
                }
                slope = -2.0 * gg;
            }
            // Armijo backtracking from an adaptively grown step.
            let mut t = (step * 2.0).min(4.0);
            let mut accepted = false;
            for _ in 0..60 {
                candidate.copy_from_slice(psi);
                for p in 0..nn {
                    candidate[p] += t * dir[p];
                }
                let e_new = psi_energy(asm, &candidate, ph_r, ph_th);
                if e_new <= energy + 1e-4 * t * slope {
                    std::mem::swap(psi, &mut candidate);
                    energy = e_new;
                    step = t;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                // The direction is exhausted at this precision; hand over
                // to the nodewise sweeps.
                break;
            }
            gg_prev = gg;
            std::mem::swap(&mut pg_prev, &mut pg);
        }
        iters += BUDGET.ncg_block;

        // Nodewise exact-minimization block (red-black over node parity).
        for _ in 0..BUDGET.gs_block {
            gs_sweep(asm, psi, ph_r, ph_th);
        }
        energy = psi_energy(asm, psi, ph_r, ph_th);
        psi_gradient(asm, psi, ph_r, ph_th, &mut grad);
        let gmax = weighted_max(&grad);
        trace.push((iters, gmax, energy));
        if gmax <= tol {
            return Ok(energy);
        }
    }
    Err(Error::Solver {
        message: format!("descent exhausted its budget above tolerance {tol:.1e}"),
        trace: std::mem::take(trace),
    })
}

/// One red-black sweep of exact per-node minimization: with the neighbours
/// frozen the energy in a single node is `diag-quadratic + quartic`, whose
/// minimizer has a closed direction and a scalar cubic for the modulus.
fn gs_sweep(asm: &Assembly, psi: &mut [Complex64], ph_r: &[Complex64], ph_th: &[Complex64]) {
    let n = asm.n_theta;
    let n_r = asm.n_r;
    for color in 0..2usize {
        let updates: Vec<Vec<(usize, Complex64)>> = (1..n_r)
            .into_par_iter()
            .map(|i| {
                let row = i * n;
                let mut ups = Vec::with_capacity(n / 2 + 1);
                let quad = {
                    let left = asm.c_r[i - 1];
                    let right = if i + 1 < n_r { asm.c_r[i] } else { 0.0 };
                    left + right + 2.0 * asm.c_th[i]
                };
                let mu = asm.mass[i] * asm.pot;
                for j in 0..n {
                    if (i + j) % 2 != color {
                        continue;
                    }
                    let mut c = asm.c_r[i - 1] * psi[row - n + j] * ph_r[row - n + j].conj();
                    if i + 1 < n_r {
                        c += asm.c_r[i] * psi[row + n + j] * ph_r[row + j];
                    }
                    let jp = if j + 1 == n { 0 } else { j + 1 };
                    let jm = if j == 0 { n - 1 } else { j - 1 };
                    c += asm.c_th[i] * psi[row + jp] * ph_th[row + j];
                    c += asm.c_th[i] * psi[row + jm] * ph_th[row + jm].conj();
                    let rhs = c.norm();
                    let value = if rhs == 0.0 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        // (quad - mu + mu rho^2) rho = rhs, monotone in rho.
                        let a = quad - mu;
                        let mut rho = rhs / quad;
                        for _ in 0..4 {
                            let g = mu * rho * rho * rho + a * rho - rhs;
                            let dg = 3.0 * mu * rho * rho + a;
                            rho -= g / dg;
                        }
                        (rho / rhs) * c
                    };
                    ups.push((row + j, value));
                }
                ups
            })
            .collect();
        for ups in updates {
            for (p, v) in ups {
                psi[p] = v;
            }
        }
    }
}

/// Descent on the link integrals at frozen `psi` (coupled mode):
/// preconditioned gradient steps with Armijo backtracking on the total
/// energy, so the relaxation is monotone. Boundary arcs stay pinned to the
/// applied gauge.
fn relax_links(
    grid: &DiscGrid,
    asm: &Assembly,
    b: f64,
    psi: &[Complex64],
    link_r: &mut Vec<f64>,
    link_theta: &mut Vec<f64>,
    iters: usize,
) {
    let n = grid.n_theta;
    let n_r = grid.n_r();
    let eps2 = grid.eps * grid.eps;
    let scale = b / (eps2 * eps2);
    let areas: Vec<f64> = (0..n_r - 1)
        .map(|i| 0.5 * grid.h_theta() * (grid.r[i + 1].powi(2) - grid.r[i].powi(2)))
        .collect();
    let total = |lr: &[f64], lt: &[f64]| -> f64 {
        let (ph_r, ph_th) = phase_factors(grid.eps, lr, lt);
        psi_energy(asm, psi, &ph_r, &ph_th) + field_energy(grid, b, lr, lt)
    };
    let mut energy = total(link_r, link_theta);
    let mut step: f64 = 1.0;
    for _ in 0..iters {
        let (ph_r, ph_th) = phase_factors(grid.eps, link_r, link_theta);
        let mut g_r = vec![0.0; link_r.len()];
        let mut g_th = vec![0.0; link_theta.len()];
        for i in 0..n_r - 1 {
            for j in 0..n {
                let jp = if j + 1 == n { 0 } else { j + 1 };
                let circ = link_r[i * n + j] + link_theta[(i + 1) * n + j]
                    - link_r[i * n + jp]
                    - link_theta[i * n + j];
                let d = 2.0 * scale * (circ / areas[i] - 1.0);
                g_r[i * n + j] += d;
                g_r[i * n + jp] -= d;
                g_th[(i + 1) * n + j] += d;
                g_th[i * n + j] -= d;
            }
        }
        for i in 0..n_r - 1 {
            for j in 0..n {
                g_r[i * n + j] += 2.0 / eps2
                    * asm.c_r[i]
                    * (psi[i * n + j].conj() * psi[(i + 1) * n + j] * ph_r[i * n + j]).im;
            }
        }
        for i in 0..n_r {
            for j in 0..n {
                let jp = if j + 1 == n { 0 } else { j + 1 };
                g_th[i * n + j] += 2.0 / eps2
                    * asm.c_th[i]
                    * (psi[i * n + j].conj() * psi[i * n + jp] * ph_th[i * n + j]).im;
            }
        }
        // The applied field fixes the outer-boundary arcs.
        for j in 0..n {
            g_th[(n_r - 1) * n + j] = 0.0;
        }
        // Field-term diagonal as the preconditioner; the kinetic curvature
        // is negligible against it.
        let mut p_r = g_r;
        let mut p_th = g_th;
        let mut slope = 0.0;
        for i in 0..n_r - 1 {
            let d = 4.0 * scale / areas[i];
            for j in 0..n {
                slope -= p_r[i * n + j] * p_r[i * n + j] / d;
                p_r[i * n + j] /= d;
            }
        }
        for i in 0..n_r - 1 {
            let d = 4.0 * scale / if i == 0 { areas[0] } else { areas[i - 1].min(areas[i]) };
            for j in 0..n {
                slope -= p_th[i * n + j] * p_th[i * n + j] / d;
                p_th[i * n + j] /= d;
            }
        }
        if slope > -1e-18 * (1.0 + energy.abs()) {
            break;
        }
        let mut t = (2.0 * step).min(1.0);
        let mut accepted = false;
        for _ in 0..40 {
            let cand_r: Vec<f64> =
                link_r.iter().zip(&p_r).map(|(l, p)| l - t * p).collect();
            let cand_th: Vec<f64> =
                link_theta.iter().zip(&p_th).map(|(l, p)| l - t * p).collect();
            let e_new = total(&cand_r, &cand_th);
            if e_new <= energy + 1e-4 * t * slope {
                *link_r = cand_r;
                *link_theta = cand_th;
                energy = e_new;
                step = t;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
}

/// Minimize the discrete functional in the smooth symmetric gauge.
///
/// The start is the 1D profile riding the optimal integer winding with a
/// seeded multiplicative perturbation; descent runs until the weighted
/// gradient max-norm reaches `GRAD_TOL`. In coupled mode the link
/// integrals relax against the field cost between descent rounds.
pub fn minimize_gl(grid: &DiscGrid, opt: &OptimalProfile, mode: Mode, seed: u64) -> Result<DiscField> {
    check_profile(grid, opt)?;
    let b = opt.profile.params.b;
    if !(b > 1.0 && b < crate::b_upper()) {
        return Err(Error::domain(format!(
            "b = {b} outside the surface regime (1, {:.6})",
            crate::b_upper()
        )));
    }
    let n = grid.n_theta;
    let n_r = grid.n_r();
    let (mut link_r, mut link_theta) = symmetric_links(grid);
    let winding = symmetric_winding(grid, opt);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut psi = vec![Complex64::new(0.0, 0.0); n_r * n];
    for i in 1..n_r {
        let f = opt.profile.f[n_r - 1 - i];
        for j in 0..n {
            let noise = Complex64::new(
                1.0 + 1e-2 * (rng.gen::<f64>() - 0.5),
                1e-2 * (rng.gen::<f64>() - 0.5),
            );
            psi[i * n + j] = f * Complex64::from_polar(1.0, winding * grid.theta(j)) * noise;
        }
    }

    let asm = assemble(grid, b);
    let mut trace = Vec::new();
    let mut energy;
    match mode {
        Mode::FixedA => {
            let (ph_r, ph_th) = phase_factors(grid.eps, &link_r, &link_theta);
            energy = solve_psi(&asm, &mut psi, &ph_r, &ph_th, GRAD_TOL, &mut trace)?;
        }
        Mode::Coupled => {
            // Alternate: order parameter to a loose tolerance, links, then a
            // final full-tolerance pass at frozen links.
            for round in 0..6 {
                let (ph_r, ph_th) = phase_factors(grid.eps, &link_r, &link_theta);
                let tol = if round < 5 { 1e-5 } else { GRAD_TOL };
                solve_psi(&asm, &mut psi, &ph_r, &ph_th, tol, &mut trace)?;
                if round < 5 {
                    relax_links(grid, &asm, b, &psi, &mut link_r, &mut link_theta, 40);
                }
            }
            let (ph_r, ph_th) = phase_factors(grid.eps, &link_r, &link_theta);
            energy = psi_energy(&asm, &psi, &ph_r, &ph_th)
                + field_energy(grid, b, &link_r, &link_theta);
        }
    }

    let max_mod = psi.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max_mod > 1.0 + MOD_TOL {
        return Err(Error::Certificate {
            message: format!("converged modulus reaches {max_mod:.12}, above 1"),
            at: 0.0,
        });
    }
    if mode == Mode::FixedA {
        energy = {
            let (ph_r, ph_th) = phase_factors(grid.eps, &link_r, &link_theta);
            psi_energy(&asm, &psi, &ph_r, &ph_th)
        };
    }
    Ok(DiscField { grid: grid.clone(), b, psi, link_r, link_theta, mode, energy })
}

/// Phase circulation of `psi` around a lattice ring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindingReport {
    /// Exact integer: wrapped phase increments summed over the contour,
    /// divided by `2 pi`.
    pub degree: i64,
    /// Leading prediction `pi R^2 / eps^2 + |alpha_k| / eps` for the phase
    /// circulation of the minimizer in the symmetric gauge.
    pub predicted: f64,
    /// `2 pi |degree|`, the quantity the prediction addresses.
    pub circulation: f64,
    /// `|circulation - predicted|`.
    pub gap: f64,
    pub min_modulus_on_contour: f64,
    pub contour_r: f64,
    pub threshold: f64,
}

/// Winding number of the field on the ring nearest `contour_r`. The degree
/// is refused if the modulus anywhere on the contour drops below the
/// threshold (default: 5% of the field's maximum modulus).
pub fn winding_number(
    field: &DiscField,
    opt: &OptimalProfile,
    contour_r: f64,
    threshold: Option<f64>,
) -> Result<WindingReport> {
    let grid = &field.grid;
    let n = grid.n_theta;
    let i = grid
        .r
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - contour_r).abs().partial_cmp(&(b.1 - contour_r).abs()).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let threshold = threshold.unwrap_or(0.05 * field.max_modulus());
    let row = &field.psi[i * n..(i + 1) * n];
    let min_mod = row.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    if !(min_mod >= threshold) {
        return Err(Error::Certificate {
            message: format!(
                "modulus {min_mod:.3e} on the contour r = {:.6} is below the threshold {threshold:.3e}; the degree is not defined",
                grid.r[i]
            ),
            at: grid.r[i],
        });
    }
    let mut total = 0.0;
    for j in 0..n {
        let jp = if j + 1 == n { 0 } else { j + 1 };
        total += (row[jp] * row[j].conj()).arg();
    }
    let turns = total / (2.0 * PI);
    if (turns - turns.round()).abs() > DEGREE_TOL {
        return Err(Error::internal(format!(
            "phase increments summed to {turns} turns, not an integer"
        )));
    }
    let degree = turns.round() as i64;
    let eps = grid.eps;
    let predicted = PI * grid.radius * grid.radius / (eps * eps) + opt.alpha_k.abs() / eps;
    let circulation = 2.0 * PI * degree.abs() as f64;
    Ok(WindingReport {
        degree,
        predicted,
        circulation,
        gap: (circulation - predicted).abs(),
        min_modulus_on_contour: min_mod,
        contour_r: grid.r[i],
        threshold,
    })
}

/// Density comparisons against the 1D profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityReport {
    /// `L^2` norm over the sample of `|psi|^2 - f^2`.
    pub l2_error: f64,
    /// Sup of `||psi| - f|` over the region where `f >= gamma_eps`.
    pub sup_layer: f64,
    /// Sup of `||psi| - f(0)|` over the boundary ring.
    pub sup_boundary: f64,
    pub gamma_eps: f64,
    /// Depth (in layer units) of the comparison region.
    pub layer_depth: f64,
}

/// Pointwise and integral density errors. `gamma_eps` must dominate the
/// admissibility scale `eps^{1/6} |log eps|^{4/3}` and stay below `f(0)`,
/// otherwise the comparison region is not a boundary layer.
pub fn density_checks(
    field: &DiscField,
    opt: &OptimalProfile,
    gamma_eps: f64,
) -> Result<DensityReport> {
    check_profile(&field.grid, opt)?;
    let eps = field.grid.eps;
    let floor = GAME_CONST * eps.powf(1.0 / 6.0) * crate::abs_log(eps).powf(4.0 / 3.0);
    if !(gamma_eps >= floor) {
        return Err(Error::domain(format!(
            "gamma_eps = {gamma_eps:.3e} below the admissible scale {floor:.3e} at eps = {eps}"
        )));
    }
    let f0 = opt.profile.f[0];
    if !(gamma_eps < f0) {
        return Err(Error::domain(format!(
            "gamma_eps = {gamma_eps:.3e} not below f(0) = {f0:.6}; the comparison region is empty"
        )));
    }
    let grid = &field.grid;
    let n = grid.n_theta;
    let n_r = grid.n_r();
    let asm = assemble(grid, field.b);
    let mut l2 = 0.0;
    let mut sup_layer: f64 = 0.0;
    let mut sup_boundary: f64 = 0.0;
    let mut depth: f64 = 0.0;
    for i in 0..n_r {
        let f = opt.profile.f[n_r - 1 - i];
        for j in 0..n {
            let m = field.psi[i * n + j].norm();
            l2 += asm.mass[i] * (m * m - f * f).powi(2);
            if f >= gamma_eps {
                sup_layer = sup_layer.max((m - f).abs());
                depth = depth.max(grid.t_of_ring(i));
            }
            if i == n_r - 1 {
                sup_boundary = sup_boundary.max((m - f0).abs());
            }
        }
    }
    Ok(DensityReport {
        l2_error: l2.sqrt(),
        sup_layer,
        sup_boundary,
        gamma_eps,
        layer_depth: depth,
    })
}

/// Re-express a disc field in boundary-layer coordinates.
///
/// The boundary winding is measured on the outer ring, the flux phase is
/// accumulated by lattice quadrature along a radial path and the boundary
/// arc, and their whole-quantum part becomes the layer carrier `sigma`, so
/// the stored envelope varies slowly. Node-for-node: the radial nodes are
/// the image of the layer grid, no interpolation is involved.
pub fn extract_layer_field(field: &DiscField, opt: &OptimalProfile) -> Result<LayerField> {
    check_profile(&field.grid, opt)?;
    let grid = &field.grid;
    let n = grid.n_theta;
    let n_r = grid.n_r();
    let eps = grid.eps;
    let outer = winding_number(field, opt, grid.radius, None)?;
    let w = outer.degree as f64;

    let gamma0 = field.gamma0();
    let flux = gamma0 / (eps * eps);
    let quanta = flux.floor();
    let delta = flux - quanta;
    if (grid.radius * quanta - (grid.radius * quanta).round()).abs() > 1e-9 {
        return Err(Error::domain(
            "whole flux quanta do not close around this boundary length; extraction needs R * floor(flux) integral",
        ));
    }

    let l_s = 2.0 * PI * grid.radius / eps;
    let hs = l_s / n as f64;
    // Boundary-arc partial sums of the flux phase, in units of 1/eps^2.
    let mut arc = vec![0.0; n];
    for j in 1..n {
        arc[j] = arc[j - 1] + field.link_theta[(n_r - 1) * n + (j - 1)];
    }
    // Radial partial sums from the boundary inward at each angle.
    let mut radial = vec![0.0; n_r * n];
    for i in (0..n_r - 1).rev() {
        for j in 0..n {
            radial[i * n + j] = radial[(i + 1) * n + j] + field.link_r[i * n + j];
        }
    }

    let sigma = -(w * eps / grid.radius + eps * quanta);
    let inv = 1.0 / (eps * eps);
    let n_t = grid.grid_t.len();
    let mut chi = vec![Complex64::new(0.0, 0.0); n * n_t];
    for j in 0..n {
        let s = hs * j as f64;
        for l in 0..n_t {
            let i = grid.ring_of(l);
            let phi = inv * (arc[j] + radial[i * n + j]) - eps * delta * s;
            let carrier = Complex64::from_polar(1.0, phi + sigma * s);
            chi[j * n_t + l] = field.psi[i * n + j] * carrier;
        }
    }
    let params = LayerParams {
        k: 1.0 / grid.radius,
        eps,
        b: field.b,
        delta_eps: delta,
    };
    LayerField::new(params, grid.grid_t.clone(), n, chi, sigma)
}

/// Least-squares decay fit of `log |psi|` against the layer depth on the
/// mid-layer window `t in [1.5, 4]`. Returns `(rate, r_squared)`; a flat
/// modulus yields zero quality instead of an error.
pub fn agmon_decay_fit(field: &DiscField) -> (f64, f64) {
    let grid = &field.grid;
    let n = grid.n_theta;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..grid.n_r() {
        let t = grid.t_of_ring(i);
        if !(1.5..=4.0).contains(&t) {
            continue;
        }
        let mean: f64 =
            field.psi[i * n..(i + 1) * n].iter().map(|z| z.norm()).sum::<f64>() / n as f64;
        xs.push(t);
        ys.push(mean.max(1e-300).ln());
    }
    if xs.len() < 3 {
        return (0.0, 0.0);
    }
    let m = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let ss_tot: f64 = ys.iter().map(|y| (y - ybar) * (y - ybar)).sum();
    if ss_tot < 1e-20 {
        return (-slope, 0.0);
    }
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let fit = ybar + slope * (x - xbar);
            (y - fit) * (y - fit)
        })
        .sum();
    (-slope, 1.0 - ss_res / ss_tot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile1d::{energy_at_alpha, optimize_alpha, AlphaSearch};
    use once_cell::sync::Lazy;

    fn search() -> AlphaSearch {
        AlphaSearch { c0: 3.0, n_points: 160, ..Default::default() }
    }

    static OPT: Lazy<OptimalProfile> =
        Lazy::new(|| optimize_alpha(1.0, 0.15, 1.5, &search()).expect("small disc profile"));

    static GRID: Lazy<DiscGrid> = Lazy::new(|| {
        let grid_t = OPT.profile.params.grid().unwrap();
        DiscGrid::boundary_layer(1.0, 0.15, &grid_t, 96).unwrap()
    });

    static MINIMIZER: Lazy<DiscField> =
        Lazy::new(|| minimize_gl(&GRID, &OPT, Mode::FixedA, 7).expect("small minimizer"));

    #[test]
    fn grid_clusters_nodes_at_the_boundary() {
        let g = &*GRID;
        assert_eq!(g.r.len(), OPT.profile.f.len());
        assert_eq!(*g.r.last().unwrap(), 1.0);
        assert!(g.r.windows(2).all(|w| w[0] < w[1]));
        let within = g.r.iter().filter(|&&r| r >= 1.0 - 3.0 * 0.15).count();
        assert!(within >= 24);
        assert_eq!(g.t_of_ring(g.n_r() - 1), 0.0);
        assert_eq!(g.ring_of(0), g.n_r() - 1);

        let coarse = Grid1D::uniform(5.0, 32).unwrap();
        assert!(DiscGrid::boundary_layer(1.0, 0.15, &coarse, 96).is_err());
        let deep = Grid1D::uniform(8.0, 512).unwrap();
        assert!(DiscGrid::boundary_layer(1.0, 0.15, &deep, 96).is_err());
    }

    #[test]
    fn both_gauges_have_unit_curl_on_every_plaquette() {
        for links in [symmetric_links(&GRID), trial_links(&GRID)] {
            let field = DiscField {
                grid: GRID.clone(),
                b: 1.5,
                psi: vec![Complex64::new(0.0, 0.0); GRID.n_r() * GRID.n_theta],
                link_r: links.0,
                link_theta: links.1,
                mode: Mode::FixedA,
                energy: 0.0,
            };
            for i in 0..GRID.n_r() - 1 {
                for j in [0, 1, GRID.n_theta / 2, GRID.n_theta - 1] {
                    assert!((field.curl(i, j) - 1.0).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn trial_state_has_exact_boundary_data() {
        let trial = build_trial(&GRID, &OPT).unwrap();
        let n = GRID.n_theta;
        let i = GRID.n_r() - 1;
        let f0 = OPT.profile.f[0];
        for j in 0..n {
            assert!((trial.psi[i * n + j].norm() - f0).abs() <= 1e-14 * f0);
        }
        let expected = -(OPT.alpha_k / 0.15).floor() as i64;
        assert_eq!(expected, (OPT.alpha_k.abs() / 0.15).ceil() as i64);
        let report = winding_number(&trial, &OPT, 1.0, None).unwrap();
        assert_eq!(report.degree, expected);
        let inner = winding_number(&trial, &OPT, 1.0 - 0.15 / 2.0, None).unwrap();
        assert_eq!(inner.degree, expected);
        assert!(report.min_modulus_on_contour >= report.threshold);
        assert!(trial.energy < 0.0);
    }

    #[test]
    fn synthetic_windings_are_counted_exactly() {
        let n = GRID.n_theta;
        let (link_r, link_theta) = symmetric_links(&GRID);
        for m in [-5i64, 0, 3] {
            let mut psi = vec![Complex64::new(0.0, 0.0); GRID.n_r() * n];
            for i in 0..GRID.n_r() {
                for j in 0..n {
                    psi[i * n + j] = Complex64::from_polar(1.0, m as f64 * GRID.theta(j));
                }
            }
            let field = DiscField {
                grid: GRID.clone(),
                b: 1.5,
                psi,
                link_r: link_r.clone(),
                link_theta: link_theta.clone(),
                mode: Mode::FixedA,
                energy: 0.0,
            };
            let report = winding_number(&field, &OPT, 1.0, None).unwrap();
            assert_eq!(report.degree, m);
        }

        // A dead contour refuses to define a degree.
        let mut psi = vec![Complex64::new(1.0, 0.0); GRID.n_r() * n];
        let outer = (GRID.n_r() - 1) * n;
        for j in 0..n {
            psi[outer + j] = Complex64::new(1e-9, 0.0);
        }
        let field = DiscField {
            grid: GRID.clone(),
            b: 1.5,
            psi,
            link_r,
            link_theta,
            mode: Mode::FixedA,
            energy: 0.0,
        };
        assert!(matches!(
            winding_number(&field, &OPT, 1.0, None),
            Err(Error::Certificate { .. })
        ));
    }

    #[test]
    fn lattice_gauge_transforms_leave_the_energy_fixed() {
        let trial = build_trial(&GRID, &OPT).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let chi: Vec<f64> = (0..trial.psi.len()).map(|_| 0.1 * (rng.gen::<f64>() - 0.5)).collect();
        let moved = gauge_transform(&trial, &chi).unwrap();
        assert!((moved.energy - trial.energy).abs() <= 1e-11 * trial.energy.abs());
    }

    #[test]
    fn gradient_matches_directional_differences() {
        let asm = assemble(&GRID, 1.5);
        let (lr, lt) = symmetric_links(&GRID);
        let (ph_r, ph_th) = phase_factors(GRID.eps, &lr, &lt);
        let trial = build_trial(&GRID, &OPT).unwrap();
        // A state away from any critical point, nonzero everywhere it is free.
        let psi: Vec<Complex64> = trial
            .psi
            .iter()
            .enumerate()
            .map(|(p, z)| z * 0.7 + Complex64::new(0.05, -0.03) * ((p % 7) as f64 - 3.0))
            .collect();
        let mut grad = vec![Complex64::new(0.0, 0.0); psi.len()];
        psi_gradient(&asm, &psi, &ph_r, &ph_th, &mut grad);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let dir: Vec<Complex64> = (0..psi.len())
                .map(|p| {
                    if p < GRID.n_theta {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                    }
                })
                .collect();
            let h = 1e-6;
            let at = |t: f64| -> f64 {
                let moved: Vec<Complex64> =
                    psi.iter().zip(&dir).map(|(z, d)| z + t * d).collect();
                psi_energy(&asm, &moved, &ph_r, &ph_th)
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            let an: f64 = 2.0 * grad.iter().zip(&dir).map(|(g, d)| g.re * d.re + g.im * d.im).sum::<f64>();
            assert!(
                (fd - an).abs() <= 1e-6 * (1.0 + an.abs()),
                "directional derivative {fd} vs gradient {an}"
            );
        }
    }

    #[test]
    fn minimizer_converges_and_respects_the_modulus_bound() {
        let field = &*MINIMIZER;
        assert!(field.max_modulus() <= 1.0 + MOD_TOL);
        assert!(field.energy < 0.0);

        // The energy betters the gauge-matched start: rebuild the unseeded
        // initial state and evaluate it on the same lattice.
        let n = GRID.n_theta;
        let w = symmetric_winding(&GRID, &OPT);
        let mut psi = vec![Complex64::new(0.0, 0.0); GRID.n_r() * n];
        for i in 1..GRID.n_r() {
            let f = OPT.profile.f[GRID.n_r() - 1 - i];
            for j in 0..n {
                psi[i * n + j] = f * Complex64::from_polar(1.0, w * GRID.theta(j));
            }
        }
        let (link_r, link_theta) = symmetric_links(&GRID);
        let start = DiscField {
            grid: GRID.clone(),
            b: 1.5,
            psi,
            link_r,
            link_theta,
            mode: Mode::FixedA,
            energy: 0.0,
        };
        let e_start = disc_energy(&start);
        assert!(field.energy <= e_start + 1e-10);

        // Independent seeds land on the same minimum.
        let again = minimize_gl(&GRID, &OPT, Mode::FixedA, 1234).unwrap();
        assert!((again.energy - field.energy).abs() <= 1e-7);

        // Quantifying the descent against the trial state: the gauges pin
        // different integer phases, so compare after removing the exactly
        // computable 1D quantization offsets, both measured off the fields.
        let trial = build_trial(&GRID, &OPT).unwrap();
        let eps = 0.15;
        let l_s = 2.0 * PI / eps;
        let alpha_trial = eps * (OPT.alpha_k / eps).floor();
        let w_min = winding_number(field, &OPT, 1.0, None).unwrap().degree as f64;
        let quanta = (field.gamma0() / (eps * eps)).floor();
        let alpha_min = -eps * (w_min + quanta);
        let e1_trial = energy_at_alpha(&OPT.profile, alpha_trial).unwrap();
        let e1_min = energy_at_alpha(&OPT.profile, alpha_min).unwrap();
        let jitter = l_s * (e1_min - e1_trial);
        assert!(
            field.energy <= trial.energy + jitter.max(0.0) + 1e-6 * trial.energy.abs(),
            "minimizer {} vs trial {} with quantization offset {}",
            field.energy,
            trial.energy,
            jitter
        );
    }

    #[test]
    fn density_checks_gate_gamma_and_report_zero_boundary_error_for_the_trial() {
        let trial = build_trial(&GRID, &OPT).unwrap();
        let gamma = crate::abs_log(0.15).powi(-2);
        let report = density_checks(&trial, &OPT, gamma).unwrap();
        // The trial modulus is f up to the rounding of a unit phase factor.
        assert!(report.sup_boundary <= 1e-14);
        assert!(report.sup_layer <= 1e-14);
        assert!(report.l2_error >= 0.0);
        assert!(report.layer_depth > 1.0);

        // Too small to dominate the admissibility scale.
        assert!(matches!(density_checks(&trial, &OPT, 1e-4), Err(Error::Domain(_))));
        // Not below f(0): the comparison region is empty.
        assert!(matches!(
            density_checks(&trial, &OPT, OPT.profile.f[0] * 1.5),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn trial_extraction_is_exact_and_matches_the_quantized_1d_energy() {
        let trial = build_trial(&GRID, &OPT).unwrap();
        let layer = extract_layer_field(&trial, &OPT).unwrap();
        assert_eq!(layer.params.delta_eps, 0.0);
        let n_t = GRID.grid_t.len();
        for j in 0..layer.n_s {
            for l in 0..n_t {
                let diff = (layer.chi[j * n_t + l] - Complex64::new(OPT.profile.f[l], 0.0)).norm();
                // The innermost ring is pinned to zero on the lattice.
                let expected = if l == n_t - 1 { OPT.profile.f[l] } else { 1e-12 };
                assert!(diff <= expected + 1e-12, "chi off by {diff} at ({j}, {l})");
            }
        }
        let eval = crate::layer::eval_layer_energy(&layer, crate::layer::Variant::Disc).unwrap();
        let alpha_trial = 0.15 * (OPT.alpha_k / 0.15).floor();
        let e1 = energy_at_alpha(&OPT.profile, alpha_trial).unwrap();
        let expected = layer.l_s * e1;
        // The pinned ring subtracts one boundary node's worth of tail mass;
        // the kinetic part of that node scales with 1/h, so allow for it.
        let f_end = OPT.profile.f[n_t - 1];
        let h = GRID.grid_t.t[1] - GRID.grid_t.t[0];
        let slack = layer.l_s * f_end * f_end * (4.0 / h) + 1e-10 * expected.abs();
        assert!(
            (eval - expected).abs() <= slack,
            "layer evaluation {eval} vs quantized 1D energy {expected}"
        );

        let gamma0 = trial.gamma0();
        assert!(gamma0.abs() <= 1e-12);
    }

    #[test]
    fn minimizer_extraction_recovers_flux_and_energy_bookkeeping() {
        let field = &*MINIMIZER;
        let gamma0 = field.gamma0();
        assert!((gamma0 - 0.5).abs() <= 1e-12, "gamma0 = {gamma0}");
        let layer = extract_layer_field(field, &OPT).unwrap();
        let frac = {
            let x: f64 = 0.5 / (0.15 * 0.15);
            x - x.floor()
        };
        assert!((layer.params.delta_eps - frac).abs() <= 1e-9);
        let eval = crate::layer::eval_layer_energy(&layer, crate::layer::Variant::Disc).unwrap();
        // Same state, two quadratures. The radial and potential sums agree
        // node-by-node, so the whole mismatch is the azimuthal stencil: the
        // lattice damps each cell's momentum by sinc^2(q hs / 2) while the
        // layer stencil carries the mean rate analytically. Hence the layer
        // reading sits above, by O((q hs)^2) of the total: a few percent on
        // this deliberately coarse fixture, shrinking quadratically in
        // n_theta.
        assert!(eval >= field.energy - 1e-6 * field.energy.abs());
        assert!(
            eval - field.energy <= 8e-2 * field.energy.abs(),
            "layer {eval} vs lattice {}",
            field.energy
        );
    }

    #[test]
    fn agmon_fit_sees_gaussian_decay_and_flags_flat_fields() {
        let trial = build_trial(&GRID, &OPT).unwrap();
        let (rate, quality) = agmon_decay_fit(&trial);
        assert!(rate > 0.5 && rate < 4.0, "rate = {rate}");
        assert!(quality >= 0.9, "quality = {quality}");

        let (link_r, link_theta) = symmetric_links(&GRID);
        let flat = DiscField {
            grid: GRID.clone(),
            b: 1.5,
            psi: vec![Complex64::new(1.0, 0.0); GRID.n_r() * GRID.n_theta],
            link_r,
            link_theta,
            mode: Mode::FixedA,
            energy: 0.0,
        };
        let (_, q) = agmon_decay_fit(&flat);
        assert!(q < 0.5, "flat field fit quality {q}");
    }

    #[test]
    fn coupled_mode_relaxes_without_breaking_the_field() {
        let coarse_opt = optimize_alpha(
            1.0,
            0.15,
            1.5,
            &AlphaSearch { c0: 3.0, n_points: 80, ..Default::default() },
        )
        .unwrap();
        let grid_t = coarse_opt.profile.params.grid().unwrap();
        let grid = DiscGrid::boundary_layer(1.0, 0.15, &grid_t, 48).unwrap();
        let coupled = minimize_gl(&grid, &coarse_opt, Mode::Coupled, 5).unwrap();
        assert!(coupled.max_modulus() <= 1.0 + MOD_TOL);
        // The induced field stays a small correction to the applied one.
        let n = grid.n_theta;
        for i in 0..grid.n_r() - 1 {
            for j in 0..n {
                let _ = j;
                let c = coupled.curl(i, j % n);
                assert!((c - 1.0).abs() <= 0.5, "curl = {c} at ring {i}");
            }
        }
        // Relaxing the links cannot cost energy against the frozen gauge.
        let fixed = minimize_gl(&grid, &coarse_opt, Mode::FixedA, 5).unwrap();
        assert!(coupled.energy <= fixed.energy + 1e-6 * fixed.energy.abs());
    }

    #[test]
    fn mode_names_round_trip() {
        for (s, m) in [("fixed_a", Mode::FixedA), ("coupled", Mode::Coupled)] {
            assert_eq!(s.parse::<Mode>().unwrap(), m);
            assert_eq!(m.to_string(), s);
        }
        assert!("other".parse::<Mode>().is_err());
    }
}
