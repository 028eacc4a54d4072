//! Boundary-layer fields on the rescaled strip and the exact splitting of
//! their energy around the 1D profile.
//!
//! A field lives on `[0, L_s] x [0, t_end]` with `L_s = perimeter / eps`,
//! periodic in `s`. It is stored as a periodic envelope `chi` plus an
//! explicit phase rate `sigma`, so `psi(s, t) = chi(s, t) e^{-i sigma s}`.
//! The `s`-derivative differentiates the phase analytically and the envelope
//! by central differences; pure-phase fields therefore reproduce the 1D
//! energy to round-off instead of to `O(h_s^2)`, and the phase rate itself
//! need not be commensurate with the grid (the physical field may pick up a
//! constant phase across the seam; only `|psi|` has to be periodic).

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::costfn;
use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::profile1d::OptimalProfile;

/// Splitting identity tolerance, relative to the total energy.
pub const SPLIT_TOL: f64 = 1e-9;
/// Slack allowed when asserting `reduced >= certified`.
pub const CERT_TOL: f64 = 1e-8;
/// Slack allowed in the pointwise vorticity control `|mu| <= |grad u|^2`.
pub const CURL_TOL: f64 = 1e-10;

/// EL residual above which a profile is refused for splitting: the identity
/// picks up `L_s * sum f |grad E| * (|u|^2 - 1)` and round-off claims die.
const EL_GATE: f64 = 1e-11;

/// Gauge and geometry data attached to a layer field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    /// Boundary curvature; `0` selects the flat strip conventions.
    pub k: f64,
    pub eps: f64,
    pub b: f64,
    /// Fractional flux left after gauging away whole quanta; in `[0, 1)`.
    pub delta_eps: f64,
}

impl LayerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::domain(format!("eps must lie in (0,1), got {}", self.eps)));
        }
        if !(self.b > 0.0) || !self.b.is_finite() {
            return Err(Error::domain(format!("b must be positive, got {}", self.b)));
        }
        if !(self.k >= 0.0) || !self.k.is_finite() {
            return Err(Error::domain(format!("curvature must be >= 0, got {}", self.k)));
        }
        if !(0.0..1.0).contains(&self.delta_eps) {
            return Err(Error::domain(format!(
                "delta_eps is a fractional part, must lie in [0,1), got {}",
                self.delta_eps
            )));
        }
        Ok(())
    }

    /// Boundary length of the underlying domain: `2 pi / k` for the disc,
    /// `2 pi` (unit radius) for the flat strip.
    pub fn perimeter(&self) -> f64 {
        if self.k > 0.0 {
            2.0 * PI / self.k
        } else {
            2.0 * PI
        }
    }
}

/// Fractional flux `delta_eps` of a disc of the given radius in the
/// applied-field gauge, where the mean flux per unit boundary length is
/// `R/2` exactly: the fractional part of `R / (2 eps^2)`.
pub fn delta_eps_disc(radius: f64, eps: f64) -> f64 {
    let x = 0.5 * radius / (eps * eps);
    x - x.floor()
}

/// Which rescaled functional to evaluate: the disc one keeps the curvature
/// weight and gauge, the flat one drops curvature and imposes a Dirichlet
/// condition at the top of the strip (enforced by masking the last row).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Disc,
    Flat,
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "disc" => Ok(Variant::Disc),
            "flat" => Ok(Variant::Flat),
            other => Err(Error::domain(format!("unknown variant '{other}', expected disc|flat"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Disc => "disc",
            Variant::Flat => "flat",
        })
    }
}

/// A complex field on the periodic strip, stored as envelope plus phase rate.
#[derive(Debug, Clone)]
pub struct LayerField {
    pub params: LayerParams,
    pub grid_t: Grid1D,
    pub n_s: usize,
    /// Strip length `perimeter / eps`.
    pub l_s: f64,
    /// Periodic envelope, row-major: `chi[j * n_t + i]` at `(s_j, t_i)`.
    pub chi: Vec<Complex64>,
    /// `psi = chi * exp(-i sigma s)`; the rate is carried exactly.
    pub sigma: f64,
}

impl LayerField {
    pub fn new(
        params: LayerParams,
        grid_t: Grid1D,
        n_s: usize,
        chi: Vec<Complex64>,
        sigma: f64,
    ) -> Result<Self> {
        params.validate()?;
        if n_s < 4 {
            return Err(Error::domain(format!("need at least 4 s-nodes, got {n_s}")));
        }
        if chi.len() != n_s * grid_t.len() {
            return Err(Error::shape(format!(
                "chi has {} entries for a {} x {} grid",
                chi.len(),
                n_s,
                grid_t.len()
            )));
        }
        if !sigma.is_finite() || chi.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::domain("layer field must be finite"));
        }
        let l_s = params.perimeter() / params.eps;
        Ok(LayerField { params, grid_t, n_s, l_s, chi, sigma })
    }

    /// `psi = f_k(t) e^{-i sigma s}`: the envelope is the 1D profile itself.
    pub fn pure_phase(
        opt: &OptimalProfile,
        delta_eps: f64,
        n_s: usize,
        sigma: f64,
    ) -> Result<Self> {
        Self::modulated(opt, delta_eps, n_s, sigma, |_, _| Complex64::new(1.0, 0.0))
    }

    /// `chi(s_j, t_i) = f_k(t_i) g(s_j, t_i)`: profile times a modulation.
    pub fn modulated(
        opt: &OptimalProfile,
        delta_eps: f64,
        n_s: usize,
        sigma: f64,
        g: impl Fn(f64, f64) -> Complex64,
    ) -> Result<Self> {
        let p = &opt.profile.params;
        let params = LayerParams { k: p.k, eps: p.eps, b: p.b, delta_eps };
        params.validate()?;
        let grid = p.grid()?;
        let l_s = params.perimeter() / params.eps;
        let hs = l_s / n_s as f64;
        let n_t = grid.len();
        let mut chi = Vec::with_capacity(n_s * n_t);
        for j in 0..n_s {
            let s = j as f64 * hs;
            for i in 0..n_t {
                chi.push(opt.profile.f[i] * g(s, grid.t[i]));
            }
        }
        Self::new(params, grid, n_s, chi, sigma)
    }

    pub fn n_t(&self) -> usize {
        self.grid_t.len()
    }

    pub fn hs(&self) -> f64 {
        self.l_s / self.n_s as f64
    }

    /// Smallest phase rate resolvable on the strip, `2 pi / L_s`.
    pub fn phase_quantum(&self) -> f64 {
        2.0 * PI / self.l_s
    }

    pub fn at(&self, j: usize, i: usize) -> Complex64 {
        self.chi[j * self.grid_t.len() + i]
    }

    /// Full sample including the phase factor.
    pub fn psi(&self, j: usize, i: usize) -> Complex64 {
        let s = j as f64 * self.hs();
        self.at(j, i) * Complex64::from_polar(1.0, -self.sigma * s)
    }

    /// Multiply `psi` by `exp(i m (2 pi / L_s) s)`. The envelope is untouched;
    /// only the phase rate moves, so the shift is exact.
    pub fn gauge_shift(&self, m: i64) -> LayerField {
        let mut shifted = self.clone();
        shifted.sigma -= m as f64 * self.phase_quantum();
        shifted
    }

    /// Fold the phase rate into the samples, leaving `sigma = 0`. Only legal
    /// when `sigma L_s` is a whole number of turns; otherwise the folded
    /// envelope would be discontinuous across the seam. Note the folded field
    /// is a different discrete object: central differences now see the phase
    /// at `O(h_s^2)` instead of exactly.
    pub fn fold_phase(&self) -> Result<LayerField> {
        let turns = self.sigma * self.l_s / (2.0 * PI);
        if (turns - turns.round()).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "sigma * L_s = {turns:.6} turns is not an integer; the folded envelope would jump at the seam"
            )));
        }
        let mut folded = self.clone();
        let n_t = self.n_t();
        let hs = self.hs();
        for j in 0..self.n_s {
            let phase = Complex64::from_polar(1.0, -self.sigma * j as f64 * hs);
            for i in 0..n_t {
                folded.chi[j * n_t + i] = self.chi[j * n_t + i] * phase;
            }
        }
        folded.sigma = 0.0;
        Ok(folded)
    }

    fn require_vanishing_top(&self) -> Result<()> {
        let n_t = self.grid_t.len();
        let sup_all = self.chi.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
        let sup_top =
            (0..self.n_s).map(|j| self.chi[j * n_t + n_t - 1].norm()).fold(0.0_f64, f64::max);
        if sup_top > 1e-10 * (1.0 + sup_all) {
            return Err(Error::domain(format!(
                "flat variant needs psi to vanish at the top of the strip; last row reaches {sup_top:.3e}"
            )));
        }
        Ok(())
    }

    /// Serialize to the binary field format: header `(n_s, n_t)` as
    /// little-endian u32 and `(k, eps, b, delta_eps)` as little-endian f64,
    /// then row-major interleaved `(re, im)` doubles. The format stores plain
    /// samples, so a nonzero phase rate must be folded first (and the grid
    /// extent travels separately: `read_bin` takes it back explicitly).
    pub fn write_bin(&self, path: &Path) -> Result<()> {
        if self.sigma != 0.0 {
            return Err(Error::domain(
                "field.bin stores plain samples; fold_phase() before writing (sigma must be 0)",
            ));
        }
        let mut buf =
            Vec::with_capacity(8 + 32 + 16 * self.chi.len());
        buf.extend_from_slice(&(self.n_s as u32).to_le_bytes());
        buf.extend_from_slice(&(self.n_t() as u32).to_le_bytes());
        for v in [self.params.k, self.params.eps, self.params.b, self.params.delta_eps] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for z in &self.chi {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(&buf)?;
        Ok(())
    }

    /// Read a field back. The header does not carry the strip height, so the
    /// caller supplies `t_end` (normally from the accompanying profile).
    pub fn read_bin(path: &Path, t_end: f64) -> Result<LayerField> {
        let mut file = std::fs::File::open(path)?;
        let mut raw = Vec::new();
        file.read_to_end(&mut raw)?;
        if raw.len() < 40 {
            return Err(Error::shape(format!("field file too short: {} bytes", raw.len())));
        }
        let u32_at = |off: usize| u32::from_le_bytes(raw[off..off + 4].try_into().unwrap());
        let f64_at = |off: usize| f64::from_le_bytes(raw[off..off + 8].try_into().unwrap());
        let n_s = u32_at(0) as usize;
        let n_t = u32_at(4) as usize;
        let params = LayerParams {
            k: f64_at(8),
            eps: f64_at(16),
            b: f64_at(24),
            delta_eps: f64_at(32),
        };
        let expect = 40 + 16 * n_s * n_t;
        if raw.len() != expect {
            return Err(Error::shape(format!(
                "field file holds {} bytes, header promises {expect}",
                raw.len()
            )));
        }
        let mut chi = Vec::with_capacity(n_s * n_t);
        for idx in 0..n_s * n_t {
            let off = 40 + 16 * idx;
            chi.push(Complex64::new(f64_at(off), f64_at(off + 8)));
        }
        let grid = Grid1D::uniform(t_end, n_t)?;
        LayerField::new(params, grid, n_s, chi, 0.0)
    }
}

/// Quadrature of the rescaled functional. Disc keeps the curvature weight
/// `1 - eps k t` and the gauge `a = -t + eps k t^2 / 2 + eps delta_eps`; flat
/// sets the weight to one, drops the curvature term of the gauge, and imposes
/// `psi = 0` on the last row.
pub fn eval_layer_energy(field: &LayerField, variant: Variant) -> Result<f64> {
    let p = &field.params;
    let grid = &field.grid_t;
    let n_t = grid.len();
    let n_s = field.n_s;
    let h = grid.h;
    let hs = field.hs();
    let ek = match variant {
        Variant::Disc => p.eps * p.k,
        Variant::Flat => 0.0,
    };
    let w: Vec<f64> = grid.t.iter().map(|&t| 1.0 - ek * t).collect();
    if let Some(i) = w.iter().position(|&wi| wi <= 0.0) {
        return Err(Error::domain(format!(
            "curvature weight vanishes at t = {:.4}: eps*k*t_end >= 1",
            grid.t[i]
        )));
    }
    let mask = matches!(variant, Variant::Flat);
    if mask {
        field.require_vanishing_top()?;
    }
    let half_b_inv = 1.0 / (2.0 * p.b);
    let get = |j: usize, i: usize| -> Complex64 {
        if mask && i == n_t - 1 {
            Complex64::new(0.0, 0.0)
        } else {
            field.chi[j * n_t + i]
        }
    };
    let mut total = 0.0;
    for j in 0..n_s {
        let jp = (j + 1) % n_s;
        let jm = (j + n_s - 1) % n_s;
        let mut col = 0.0;
        for i in 0..n_t - 1 {
            let wl = 0.5 * (w[i] + w[i + 1]);
            col += wl * (get(j, i + 1) - get(j, i)).norm_sqr() / h;
        }
        for i in 0..n_t {
            let t = grid.t[i];
            let a = -t + 0.5 * ek * t * t + p.eps * p.delta_eps;
            let x = get(j, i);
            let dc = (get(jp, i) - get(jm, i)) / (2.0 * hs);
            let cov = dc + Complex64::new(0.0, a - field.sigma) * x;
            let m2 = x.norm_sqr();
            col += grid.tau(i) * (cov.norm_sqr() / w[i] - w[i] * half_b_inv * (2.0 * m2 - m2 * m2));
        }
        total += col;
    }
    Ok(hs * total)
}

/// The two halves of the energy: `main = L_s E^1D` and the reduced energy of
/// `u = psi e^{i (alpha + eps delta_eps) s} / f_k`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitEnergy {
    pub main: f64,
    pub reduced: f64,
}

impl SplitEnergy {
    pub fn total(&self) -> f64 {
        self.main + self.reduced
    }
}

/// The reduced field `u`, its node currents, and its plaquette vorticity.
#[derive(Debug, Clone)]
pub struct ReducedField {
    pub params: LayerParams,
    pub grid_t: Grid1D,
    pub n_s: usize,
    pub l_s: f64,
    /// Periodic envelope of `u`: `u = chi_u e^{-i sigma_u s}` with
    /// `chi_u = chi / f_k` and `sigma_u = sigma - (alpha + eps delta_eps)`.
    pub chi_u: Vec<Complex64>,
    pub sigma_u: f64,
    /// Node samples of the current `(iu, d_s u)`, row-major like `chi_u`.
    pub current_s: Vec<f64>,
    /// Plaquette curl of the link currents, `n_s x (n_t - 1)` row-major;
    /// plaquette `(j, i)` sits between s-columns `j, j+1` and t-rows `i, i+1`.
    pub vorticity: Vec<f64>,
}

impl ReducedField {
    pub fn n_t(&self) -> usize {
        self.grid_t.len()
    }

    pub fn hs(&self) -> f64 {
        self.l_s / self.n_s as f64
    }
}

/// Term breakdown of the reduced energy and its certified floor.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReducedTerms {
    /// Weighted kinetic part (t-links plus covariant s-derivative).
    pub kinetic: f64,
    /// The signed momentum term `-2 integral w f^2 b_k (iu, d_s u)`.
    pub momentum: f64,
    /// Quartic confinement `(1/2b) integral w f^4 (1 - |u|^2)^2`.
    pub quartic: f64,
    /// Lower bound `integral_I w K [kinetic density] + d_eps-kinetic +
    /// quartic`, certified from the cost function.
    pub certified: f64,
    pub d_eps: f64,
    pub t_bar: f64,
}

impl ReducedTerms {
    pub fn reduced(&self) -> f64 {
        self.kinetic + self.momentum + self.quartic
    }
}

/// Shared validation: the profile must match the field's geometry and
/// parameters, be strictly positive, and satisfy the discrete EL equation to
/// round-off (that residual is exactly what the splitting identity pays).
fn check_compat(field: &LayerField, opt: &OptimalProfile) -> Result<()> {
    let p = &opt.profile.params;
    let q = &field.params;
    if p.k != q.k || p.eps != q.eps || p.b != q.b {
        return Err(Error::shape(format!(
            "profile (k, eps, b) = ({}, {}, {}) does not match field ({}, {}, {})",
            p.k, p.eps, p.b, q.k, q.eps, q.b
        )));
    }
    let og = p.grid()?;
    let fg = &field.grid_t;
    if og.len() != fg.len() || (og.h - fg.h).abs() > 1e-12 * (1.0 + og.h) {
        return Err(Error::shape(format!(
            "profile grid ({} nodes, h = {:.6e}) does not match field grid ({} nodes, h = {:.6e})",
            og.len(),
            og.h,
            fg.len(),
            fg.h
        )));
    }
    if opt.profile.f.len() != og.len() {
        return Err(Error::shape("profile length does not match its grid"));
    }
    if opt.profile.f.iter().any(|&v| v <= 0.0) {
        return Err(Error::TrivialRegime(
            "splitting divides by f_k, which must be strictly positive".into(),
        ));
    }
    if !(opt.profile.grad_norm <= EL_GATE) {
        return Err(Error::domain(format!(
            "splitting needs the discrete EL residual at round-off; got {:.3e} > {EL_GATE:.0e}",
            opt.profile.grad_norm
        )));
    }
    if opt.alpha_k != p.alpha {
        return Err(Error::internal("optimal profile disagrees with its own phase"));
    }
    Ok(())
}

/// Envelope and phase rate of `u`.
fn reduce_envelope(field: &LayerField, opt: &OptimalProfile) -> (Vec<Complex64>, f64) {
    let n_t = field.grid_t.len();
    let f = &opt.profile.f;
    let chi_u: Vec<Complex64> = field
        .chi
        .iter()
        .enumerate()
        .map(|(idx, &z)| z / f[idx % n_t])
        .collect();
    let c = opt.alpha_k + field.params.eps * field.params.delta_eps;
    (chi_u, field.sigma - c)
}

struct Parts {
    kinetic_t: f64,
    kinetic_s: f64,
    momentum: f64,
    quartic: f64,
}

/// Certified-floor data: cost samples, the `d_eps` in use, and the right end
/// of the certified region.
struct Floor {
    cost: Vec<f64>,
    d_eps: f64,
    t_bar: f64,
}

/// One pass over the reduced field: the exact term sums, and optionally the
/// certified floor accumulated with the same stencils. The floor's t-link
/// coefficient takes the *smaller* of the two nodal `K/f^2` ratios times
/// `f_i f_{i+1}`, which keeps it provably below the reduced coefficient
/// `f_i f_{i+1}` wherever `K <= f^2` (i.e. wherever `F <= 0`).
fn accumulate(
    chi_u: &[Complex64],
    sigma_u: f64,
    n_s: usize,
    grid: &Grid1D,
    l_s: f64,
    opt: &OptimalProfile,
    floor: Option<&Floor>,
) -> (Parts, f64) {
    let p = &opt.profile.params;
    let f = &opt.profile.f;
    let n_t = grid.len();
    let h = grid.h;
    let hs = l_s / n_s as f64;
    let ek = p.eps * p.k;
    let half_b_inv = 1.0 / (2.0 * p.b);
    let mut kin_t = 0.0;
    let mut kin_s = 0.0;
    let mut mom = 0.0;
    let mut quart = 0.0;
    let mut cert = 0.0;
    for j in 0..n_s {
        let jp = (j + 1) % n_s;
        let jm = (j + n_s - 1) % n_s;
        for i in 0..n_t - 1 {
            let (t0, t1) = (grid.t[i], grid.t[i + 1]);
            let wl = 0.5 * ((1.0 - ek * t0) + (1.0 - ek * t1));
            let dsq = (chi_u[jp0(j, i + 1, n_t)] - chi_u[jp0(j, i, n_t)]).norm_sqr() / h;
            kin_t += wl * f[i] * f[i + 1] * dsq;
            if let Some(fl) = floor {
                let mut lam = fl.d_eps * f[i] * f[i + 1];
                if t0 <= fl.t_bar && t1 <= fl.t_bar {
                    let ratio =
                        (fl.cost[i] / (f[i] * f[i])).min(fl.cost[i + 1] / (f[i + 1] * f[i + 1]));
                    lam += ratio * f[i] * f[i + 1];
                }
                cert += wl * lam * dsq;
            }
        }
        for i in 0..n_t {
            let t = grid.t[i];
            let w = 1.0 - ek * t;
            let tau = grid.tau(i);
            let c_lin = t + p.alpha - 0.5 * ek * t * t;
            let x = chi_u[jp0(j, i, n_t)];
            let dc = (chi_u[jp0(jp, i, n_t)] - chi_u[jp0(jm, i, n_t)]) / (2.0 * hs);
            let dhat = dc - Complex64::new(0.0, sigma_u) * x;
            let cur = (x.conj() * dhat).im;
            kin_s += tau * (f[i] * f[i] / w) * dhat.norm_sqr();
            mom -= tau * 2.0 * (c_lin / w) * f[i] * f[i] * cur;
            let m2 = x.norm_sqr();
            quart += tau * w * half_b_inv * f[i].powi(4) * (1.0 - m2) * (1.0 - m2);
            if let Some(fl) = floor {
                let mut coeff = fl.d_eps * f[i] * f[i];
                if t <= fl.t_bar {
                    coeff += fl.cost[i];
                }
                cert += tau * (coeff / w) * dhat.norm_sqr();
            }
        }
    }
    (
        Parts {
            kinetic_t: hs * kin_t,
            kinetic_s: hs * kin_s,
            momentum: hs * mom,
            quartic: hs * quart,
        },
        hs * cert,
    )
}

#[inline]
fn jp0(j: usize, i: usize, n_t: usize) -> usize {
    j * n_t + i
}

/// Split the energy into `L_s E^1D` plus the reduced energy of `u`. The two
/// sides recombine to `eval_layer_energy` to round-off for *any* admissible
/// field, because the discrete profile kills the cross terms through its own
/// EL equation; nothing about `psi` being a minimizer is used.
pub fn split_energy(field: &LayerField, opt: &OptimalProfile) -> Result<SplitEnergy> {
    check_compat(field, opt)?;
    let (chi_u, sigma_u) = reduce_envelope(field, opt);
    let (parts, _) = accumulate(&chi_u, sigma_u, field.n_s, &field.grid_t, field.l_s, opt, None);
    Ok(SplitEnergy {
        main: field.l_s * opt.profile.energy,
        reduced: parts.kinetic_t + parts.kinetic_s + parts.momentum + parts.quartic,
    })
}

/// Extract `u`, its node currents, and its plaquette vorticity, verifying the
/// pointwise control `|mu| <= |grad u|^2` with the same edge stencils on both
/// sides (for which the inequality is exact, not asymptotic).
pub fn compute_current_vorticity(
    field: &LayerField,
    opt: &OptimalProfile,
) -> Result<ReducedField> {
    check_compat(field, opt)?;
    let (chi_u, sigma_u) = reduce_envelope(field, opt);
    let n_t = field.grid_t.len();
    let n_s = field.n_s;
    let h = field.grid_t.h;
    let hs = field.hs();

    let mut current = vec![0.0; n_s * n_t];
    for j in 0..n_s {
        let jp = (j + 1) % n_s;
        let jm = (j + n_s - 1) % n_s;
        for i in 0..n_t {
            let x = chi_u[j * n_t + i];
            let dc = (chi_u[jp * n_t + i] - chi_u[jm * n_t + i]) / (2.0 * hs);
            let dhat = dc - Complex64::new(0.0, sigma_u) * x;
            current[j * n_t + i] = (x.conj() * dhat).im;
        }
    }

    // Plaquette corners in the local gauge of column j: the relative link
    // phase is the same for every pair, seam included, because L_s = n_s h_s.
    let link = Complex64::from_polar(1.0, -sigma_u * hs);
    let mut vorticity = vec![0.0; n_s * (n_t - 1)];
    for j in 0..n_s {
        let jp = (j + 1) % n_s;
        for i in 0..n_t - 1 {
            let a = chi_u[j * n_t + i];
            let b = chi_u[jp * n_t + i] * link;
            let c = chi_u[j * n_t + i + 1];
            let d = chi_u[jp * n_t + i + 1] * link;
            let (ds0, ds1) = (b - a, d - c);
            let (dt0, dt1) = (c - a, d - b);
            let mu = ((ds0.conj() * dt1).im - (dt0.conj() * ds1).im) / (hs * h);
            let grad = (ds0.norm_sqr() + ds1.norm_sqr()) / (2.0 * hs * hs)
                + (dt0.norm_sqr() + dt1.norm_sqr()) / (2.0 * h * h);
            if mu.abs() > grad + CURL_TOL {
                return Err(Error::Certificate {
                    message: format!(
                        "vorticity control failed: |mu| = {:.6e} > |grad u|^2 = {:.6e}",
                        mu.abs(),
                        grad
                    ),
                    at: field.grid_t.t[i],
                });
            }
            vorticity[j * (n_t - 1) + i] = mu;
        }
    }

    Ok(ReducedField {
        params: field.params,
        grid_t: field.grid_t.clone(),
        n_s,
        l_s: field.l_s,
        chi_u,
        sigma_u,
        current_s: current,
        vorticity,
    })
}

/// Term breakdown of the reduced energy together with its certified floor,
/// asserted up to `CERT_TOL`. The floor integrates the cost `K` against the
/// kinetic density over the certified region `[0, t_bar]` and adds the
/// `d_eps`-kinetic and quartic leftovers; for the disc the cost curve is the
/// curved one at the default `d_eps`, for the flat strip it is `f^2 + F` on
/// the whole grid with `d_eps = 0`.
pub fn reduced_terms(rf: &ReducedField, opt: &OptimalProfile) -> Result<ReducedTerms> {
    let p = &opt.profile.params;
    if p.k != rf.params.k || p.eps != rf.params.eps || p.b != rf.params.b {
        return Err(Error::shape("profile parameters do not match the reduced field"));
    }
    if opt.profile.f.len() != rf.grid_t.len() {
        return Err(Error::shape("profile grid does not match the reduced field"));
    }
    let floor = if p.k > 0.0 {
        // The auto-d curve is an asymptotic object: at desk-scale eps it can
        // dip below its own positivity certificate, in which case the d = 0
        // curve (certifiable at any admissible parameters) provides the
        // floor, minus the d-kinetic term.
        let curve = match costfn::cost_kk(opt, costfn::auto_d_eps(p.eps)) {
            Ok(curve) => curve,
            Err(Error::Certificate { .. }) => costfn::cost_kk(opt, 0.0)?,
            Err(e) => return Err(e),
        };
        Floor { cost: curve.cost, d_eps: curve.d_eps, t_bar: curve.t_bar }
    } else {
        let potential = costfn::potential_f(opt)?;
        let cost = opt
            .profile
            .f
            .iter()
            .zip(&potential)
            .map(|(&fi, &pot)| fi * fi + pot)
            .collect();
        Floor { cost, d_eps: 0.0, t_bar: rf.grid_t.t_end() }
    };
    let (parts, certified) =
        accumulate(&rf.chi_u, rf.sigma_u, rf.n_s, &rf.grid_t, rf.l_s, opt, Some(&floor));
    let terms = ReducedTerms {
        kinetic: parts.kinetic_t + parts.kinetic_s,
        momentum: parts.momentum,
        quartic: parts.quartic,
        certified,
        d_eps: floor.d_eps,
        t_bar: floor.t_bar,
    };
    if terms.reduced() < certified - CERT_TOL {
        return Err(Error::Certificate {
            message: format!(
                "reduced energy {:.6e} fell below its certified floor {:.6e}",
                terms.reduced(),
                certified
            ),
            at: floor.t_bar,
        });
    }
    Ok(terms)
}

/// The circulation of `u` along the bottom edge: `h_s` times the sum of the
/// node currents at `t = 0`. For `u = e^{i m (2 pi / L_s) s}` this is `2 pi m`
/// exactly, because the phase rate is differentiated analytically.
pub fn boundary_circulation_u(rf: &ReducedField) -> f64 {
    let n_t = rf.grid_t.len();
    let hs = rf.hs();
    (0..rf.n_s).map(|j| rf.current_s[j * n_t]).sum::<f64>() * hs
}

/// Both sides of the momentum integration by parts: the momentum term
/// `-2 integral w f^2 b_k (iu, d_s u)` and its partner
/// `integral F d_t (iu, d_s u)`, which agree to `O(h^2)` because `F` is the
/// cumulative integral of the momentum weight and vanishes at both ends
/// (exactly at `t = 0`, to the phase-optimality residual at `t_end`).
pub fn momentum_ibp(rf: &ReducedField, opt: &OptimalProfile) -> Result<(f64, f64)> {
    let p = &opt.profile.params;
    if opt.profile.f.len() != rf.grid_t.len() {
        return Err(Error::shape("profile grid does not match the reduced field"));
    }
    let potential = costfn::potential_f(opt)?;
    let grid = &rf.grid_t;
    let n_t = grid.len();
    let hs = rf.hs();
    let ek = p.eps * p.k;
    // Column sums of the node current, then one t-quadrature each side.
    let mut col = vec![0.0; n_t];
    for j in 0..rf.n_s {
        for i in 0..n_t {
            col[i] += rf.current_s[j * n_t + i];
        }
    }
    let mut lhs = 0.0;
    for i in 0..n_t {
        let t = grid.t[i];
        let w = 1.0 - ek * t;
        let c_lin = t + p.alpha - 0.5 * ek * t * t;
        lhs -= grid.tau(i) * 2.0 * (c_lin / w) * opt.profile.f[i] * opt.profile.f[i] * col[i];
    }
    let dcol = crate::grid::derivative(grid.h, &col);
    let mut rhs = 0.0;
    for i in 0..n_t {
        rhs += grid.tau(i) * potential[i] * dcol[i];
    }
    Ok((hs * lhs, hs * rhs))
}
