//! Symmetric metrics on `F_k` as convex momentum profiles.
//!
//! Away from the two invariant sections a U(2)-invariant Kähler form is
//!
//! ```text
//! ω = s·ω_Σ + (i/2π)∂∂̄u(ρ) = (s + k·u′)·ω_Σ + u″·(i/2π)∂ρ∧∂̄ρ
//! ```
//!
//! with `ω_Σ` the unit-area Fubini-Study form of the base and `ρ` the log of
//! the fiber coordinate's Hermitian norm. The horizontal component is
//! `h = s + k·u′`, the vertical one `v = u″`, and `u′` sweeps `(a, b)`.
//!
//! Profiles live on the compactified coordinate `x = e^ρ/(1+e^ρ) ∈ (0, 1)`.
//! Every admissible `u` splits as `u = a·ln x − b·ln(1−x) + g(x)`, where the
//! first part is the Fubini-Study model with slopes `(a, b)` and `g` is
//! smooth on the closed interval. Only `g` is differenced numerically, so
//! the logarithmic ends never touch a stencil.

use std::f64::consts::PI;
use std::io::{Read, Write};

use crate::geometry::{BundleGeometry, KahlerClass};
use crate::{Error, Result};

pub const DEFAULT_GRID_N: usize = 1024;

/// Pole-to-pole length of a fiber is `κ·∫√u″ dρ`.
pub const DIAMETER_CONSTANT: f64 = 0.28209479177387814; // 1/(2√π)

pub fn rho_of_x(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

pub fn x_of_rho(rho: f64) -> f64 {
    if rho >= 0.0 {
        1.0 / (1.0 + (-rho).exp())
    } else {
        let e = rho.exp();
        e / (1.0 + e)
    }
}

/// Cell-centred grid, uniform in `x`, with nodes `x_i = (i + 1/2)/n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::InvalidProfile(format!("grid needs at least 4 nodes, got {n}")));
        }
        Ok(Grid { n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.n as f64
    }

    /// Cell faces `j/n`, `j = 0..=n`.
    pub fn face(&self, j: usize) -> f64 {
        j as f64 / self.n as f64
    }

    pub fn rho(&self, i: usize) -> f64 {
        rho_of_x(self.x(i))
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// `x(1−x)/Δx²` at each face; zero at the two boundary faces.
    pub fn face_weights(&self) -> Vec<f64> {
        let inv_dx2 = (self.n * self.n) as f64;
        (0..=self.n)
            .map(|j| {
                let y = self.face(j);
                y * (1.0 - y) * inv_dx2
            })
            .map(|w| if w.abs() < 1e-300 { 0.0 } else { w })
            .collect()
    }

    /// Exact cell integrals of the Chebyshev weight `1/√(x(1−x))`.
    pub fn chebyshev_weights(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = (2.0 * self.face(i) - 1.0).clamp(-1.0, 1.0).asin();
                let hi = (2.0 * self.face(i + 1) - 1.0).clamp(-1.0, 1.0).asin();
                hi - lo
            })
            .collect()
    }
}

/// Fluxes `x(1−x)·g_x` at the faces, zero at `x = 0, 1`.
pub(crate) fn regular_fluxes(grid: &Grid, regular: &[f64], out: &mut Vec<f64>) {
    let n = grid.len();
    let dx = grid.dx();
    out.clear();
    out.push(0.0);
    for j in 1..n {
        let y = grid.face(j);
        out.push(y * (1.0 - y) * (regular[j] - regular[j - 1]) / dx);
    }
    out.push(0.0);
}

/// A symmetric Kähler metric on `F_k`, up to the choice of `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    grid: Grid,
    s: f64,
    a: f64,
    b: f64,
    regular: Vec<f64>,
}

impl Profile {
    /// Builds a profile from its parts without checking positivity.
    pub fn from_parts(grid: Grid, s: f64, a: f64, b: f64, regular: Vec<f64>) -> Result<Self> {
        if regular.len() != grid.len() {
            return Err(Error::InvalidProfile(format!(
                "{} regular samples on a grid of {}",
                regular.len(),
                grid.len()
            )));
        }
        if ![s, a, b].iter().all(|v| v.is_finite()) || regular.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProfile("non-finite profile data".into()));
        }
        Ok(Profile { grid, s, a, b, regular })
    }

    /// `u(ρ) = a·ρ + (b−a)·ln(1+e^ρ)`, the Fubini-Study fiber of area `b − a`.
    pub fn fs_model(grid: Grid, a: f64, b: f64, s: f64) -> Result<Self> {
        if !(a >= 0.0 && a < b && b.is_finite()) {
            return Err(Error::InvalidProfile(format!(
                "model slopes must satisfy 0 ≤ a < b, got a = {a}, b = {b}"
            )));
        }
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::InvalidProfile(format!("base coefficient {s} must be ≥ 0")));
        }
        let n = grid.len();
        Profile::from_parts(grid, s, a, b, vec![0.0; n])
    }

    /// Profile from values `u_i` and slopes `u′_i` at the grid nodes. The
    /// endpoint slopes are chosen so that the discrete slopes of the result
    /// reproduce `u′` at the two outermost nodes.
    pub fn from_samples(grid: Grid, s: f64, u: &[f64], du: &[f64]) -> Result<Self> {
        let n = grid.len();
        if u.len() != n || du.len() != n {
            return Err(Error::InvalidProfile("sample count does not match grid".into()));
        }
        // discrete end slopes are affine in (a, b): fit from three evaluations
        let ends = |a: f64, b: f64| {
            let g = |i: usize| u[i] - model_potential(a, b, grid.x(i));
            let flux = |j: usize| {
                let y = grid.face(j);
                y * (1.0 - y) * (g(j) - g(j - 1)) / grid.dx()
            };
            let f = b - a;
            (
                a + f * grid.x(0) + 0.5 * flux(1) - du[0],
                a + f * grid.x(n - 1) + 0.5 * flux(n - 1) - du[n - 1],
            )
        };
        let (a0, b0) = extrapolate_slopes(du);
        let r0 = ends(a0, b0);
        let ra = ends(a0 + 1.0, b0);
        let rb = ends(a0, b0 + 1.0);
        let (m00, m10) = (ra.0 - r0.0, ra.1 - r0.1);
        let (m01, m11) = (rb.0 - r0.0, rb.1 - r0.1);
        let det = m00 * m11 - m01 * m10;
        let (a, b) = if det.abs() > 1e-12 {
            (
                a0 - (m11 * r0.0 - m01 * r0.1) / det,
                b0 - (-m10 * r0.0 + m00 * r0.1) / det,
            )
        } else {
            (a0, b0)
        };
        let regular = (0..n).map(|i| u[i] - model_potential(a, b, grid.x(i))).collect();
        Profile::from_parts(grid, s, a, b, regular)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// The smooth part `g = u − u_model(a, b)`.
    pub fn regular(&self) -> &[f64] {
        &self.regular
    }

    pub fn u(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|i| model_potential(self.a, self.b, self.grid.x(i)) + self.regular[i])
            .collect()
    }

    /// `u′` at the nodes.
    pub fn slopes(&self) -> Vec<f64> {
        let mut flux = Vec::with_capacity(self.grid.len() + 1);
        regular_fluxes(&self.grid, &self.regular, &mut flux);
        let f = self.b - self.a;
        (0..self.grid.len())
            .map(|i| self.a + f * self.grid.x(i) + 0.5 * (flux[i] + flux[i + 1]))
            .collect()
    }

    /// `u″/(x(1−x)) = d(u′)/dx` at the nodes; the fiber density in `x`.
    pub fn fiber_density(&self) -> Vec<f64> {
        let mut flux = Vec::with_capacity(self.grid.len() + 1);
        regular_fluxes(&self.grid, &self.regular, &mut flux);
        let f = self.b - self.a;
        let inv_dx = self.grid.len() as f64;
        (0..self.grid.len())
            .map(|i| f + (flux[i + 1] - flux[i]) * inv_dx)
            .collect()
    }

    /// `u″` at the nodes.
    pub fn second_derivative(&self) -> Vec<f64> {
        self.fiber_density()
            .into_iter()
            .enumerate()
            .map(|(i, q)| {
                let x = self.grid.x(i);
                x * (1.0 - x) * q
            })
            .collect()
    }

    pub fn fiber_area(&self) -> f64 {
        self.b - self.a
    }

    pub fn section_area(&self, geom: &BundleGeometry) -> f64 {
        self.s + geom.kf() * self.a
    }

    pub fn total_volume(&self, geom: &BundleGeometry) -> f64 {
        self.s * (self.b - self.a) + geom.kf() * (self.b * self.b - self.a * self.a) / 2.0
    }

    pub fn class(&self, geom: &BundleGeometry) -> KahlerClass {
        KahlerClass::new(self.fiber_area(), self.section_area(geom))
    }

    /// `∫u″ dρ` by midpoint quadrature of the nodal density.
    pub fn fiber_area_quadrature(&self) -> f64 {
        self.fiber_density().iter().sum::<f64>() * self.grid.dx()
    }

    /// `∫(s + k·u′)·u″ dρ` by midpoint quadrature.
    pub fn volume_quadrature(&self, geom: &BundleGeometry) -> f64 {
        let k = geom.kf();
        let p = self.slopes();
        let q = self.fiber_density();
        p.iter()
            .zip(&q)
            .map(|(p, q)| (self.s + k * p) * q)
            .sum::<f64>()
            * self.grid.dx()
    }

    /// Endpoint slopes recovered from nodal `u′` alone.
    pub fn fitted_slopes(&self) -> (f64, f64) {
        extrapolate_slopes(&self.slopes())
    }

    /// Pole-to-pole fiber length `κ·∫√u″ dρ`, integrated against the exact
    /// cell weights of `1/√(x(1−x))`.
    pub fn fiber_diameter(&self) -> f64 {
        let w = self.grid.chebyshev_weights();
        DIAMETER_CONSTANT
            * self
                .fiber_density()
                .iter()
                .zip(&w)
                .map(|(q, w)| q.max(0.0).sqrt() * w)
                .sum::<f64>()
    }

    /// `u ↦ λu`, `s ↦ λs`.
    pub fn scaled(&self, lambda: f64) -> Profile {
        Profile {
            grid: self.grid.clone(),
            s: lambda * self.s,
            a: lambda * self.a,
            b: lambda * self.b,
            regular: self.regular.iter().map(|g| lambda * g).collect(),
        }
    }

    /// `(u′, u″/(x(1−x)))` at an arbitrary `x ∈ [0, 1]` by linear
    /// interpolation; the slope takes its exact limits at the ends.
    pub fn sample_at(&self, x: f64, slopes: &[f64], density: &[f64]) -> (f64, f64) {
        let n = self.grid.len();
        let x = x.clamp(0.0, 1.0);
        let pos = x * n as f64 - 0.5;
        if pos <= 0.0 {
            let t = x / self.grid.x(0);
            let p = self.a + t * (slopes[0] - self.a);
            let q = density[0] + pos * (density[1] - density[0]);
            return (p, q.max(0.0));
        }
        if pos >= (n - 1) as f64 {
            let t = (1.0 - x) / (1.0 - self.grid.x(n - 1));
            let p = self.b + t * (slopes[n - 1] - self.b);
            let over = pos - (n - 1) as f64;
            let q = density[n - 1] + over * (density[n - 1] - density[n - 2]);
            return (p, q.max(0.0));
        }
        let i = pos.floor() as usize;
        let t = pos - i as f64;
        (
            slopes[i] + t * (slopes[i + 1] - slopes[i]),
            density[i] + t * (density[i + 1] - density[i]),
        )
    }

    /// Checks `a < b`, horizontal positivity and discrete convexity.
    pub fn validate(&self, geom: &BundleGeometry) -> Result<()> {
        if self.a >= self.b {
            return Err(Error::InvalidProfile(format!(
                "endpoint slopes a = {} ≥ b = {}",
                self.a, self.b
            )));
        }
        assemble_metric(self, geom).map(|_| ())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,u,du,ddu")?;
        let u = self.u();
        let du = self.slopes();
        let ddu = self.second_derivative();
        for i in 0..self.grid.len() {
            writeln!(
                out,
                "{},{},{},{}",
                self.grid.x(i),
                u[i],
                du[i],
                ddu[i]
            )?;
        }
        Ok(())
    }

    /// Reads a profile written by [`Profile::write_csv`]. The base
    /// coefficient is not part of the table and is supplied by the caller.
    pub fn read_csv<R: Read>(input: R, s: f64) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let headers = reader.headers().map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        if headers.iter().collect::<Vec<_>>() != ["x", "u", "du", "ddu"] {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header x,u,du,ddu, found {:?}", headers),
            });
        }
        let mut xs = Vec::new();
        let mut u = Vec::new();
        let mut du = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let line = row + 2;
            let record = record.map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            if record.len() != 4 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 4 fields, found {}", record.len()),
                });
            }
            let mut vals = [0.0; 4];
            for (slot, field) in vals.iter_mut().zip(record.iter()) {
                *slot = field
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line,
                        message: format!("not a finite number: {field:?}"),
                    })?;
            }
            xs.push(vals[0]);
            u.push(vals[1]);
            du.push(vals[2]);
        }
        let grid = Grid::new(xs.len()).map_err(|e| Error::Parse {
            line: xs.len() + 1,
            message: e.to_string(),
        })?;
        for (i, &x) in xs.iter().enumerate() {
            if (x - grid.x(i)).abs() > 1e-12 {
                return Err(Error::Parse {
                    line: i + 2,
                    message: format!("node {x} is off the uniform cell-centred grid"),
                });
            }
        }
        Profile::from_samples(grid, s, &u, &du)
    }
}

/// `a·ln x − b·ln(1−x)`.
pub fn model_potential(a: f64, b: f64, x: f64) -> f64 {
    a * x.ln() - b * (-x).ln_1p()
}

/// Quadratic extrapolation of nodal slopes to `x = 0` and `x = 1`.
/// Near the ends `u′ − a` decays like `e^ρ ≈ x` (and `b − u′` like
/// `e^{−ρ} ≈ 1−x`), so the fit is exact for the model profiles.
fn extrapolate_slopes(du: &[f64]) -> (f64, f64) {
    let n = du.len();
    const C: [f64; 3] = [1.875, -1.25, 0.375];
    let a = C[0] * du[0] + C[1] * du[1] + C[2] * du[2];
    let b = C[0] * du[n - 1] + C[1] * du[n - 2] + C[2] * du[n - 3];
    (a, b)
}

/// Horizontal and vertical metric components at the grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricComponents {
    /// `h = s + k·u′`, coefficient of the unit-area base form.
    pub h: Vec<f64>,
    /// `v = u″`, fiber density in `(ρ, θ)`.
    pub v: Vec<f64>,
    /// `v/(x(1−x))`, fiber density in `x`; bounded away from zero at the poles.
    pub density: Vec<f64>,
}

impl MetricComponents {
    pub fn min_v(&self) -> f64 {
        self.v.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_h(&self) -> f64 {
        self.h.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn assemble_metric(p: &Profile, geom: &BundleGeometry) -> Result<MetricComponents> {
    let k = geom.kf();
    let slopes = p.slopes();
    let density = p.fiber_density();
    let grid = p.grid();
    let mut h = Vec::with_capacity(grid.len());
    let mut v = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let x = grid.x(i);
        let hi = p.s + k * slopes[i];
        let vi = x * (1.0 - x) * density[i];
        if !(hi > 0.0 && vi > 0.0) {
            return Err(Error::PositivityLoss { node: i, h: hi, v: vi });
        }
        h.push(hi);
        v.push(vi);
    }
    Ok(MetricComponents { h, v, density })
}

/// Intrinsic diameter of a round sphere of the given area.
pub fn round_sphere_diameter(area: f64) -> f64 {
    (PI * area).sqrt() / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::new(n).unwrap()
    }

    // g(x) = ε·x²(1−x)²: smooth, vanishing slope at both ends.
    fn bump(eps: f64) -> impl Fn(f64) -> (f64, f64, f64) {
        move |x: f64| {
            let g = eps * x * x * (1.0 - x) * (1.0 - x);
            let gx = eps * 2.0 * x * (1.0 - x) * (1.0 - 2.0 * x);
            let gxx = eps * (2.0 - 12.0 * x + 12.0 * x * x);
            (g, gx, gxx)
        }
    }

    fn bumped(n: usize, a: f64, b: f64, s: f64, eps: f64) -> Profile {
        let gr = grid(n);
        let reg = (0..n).map(|i| bump(eps)(gr.x(i)).0).collect();
        Profile::from_parts(gr, s, a, b, reg).unwrap()
    }

    #[test]
    fn model_slope_at_midpoint() {
        let p = Profile::fs_model(grid(64), 0.0, 1.0, 1.0).unwrap();
        // x = 1/2 sits between nodes 31 and 32
        let du = p.slopes();
        assert!(((du[31] + du[32]) / 2.0 - 0.5).abs() < 1e-14);
    }

    #[test]
    fn model_second_derivative_is_logistic() {
        let (a, b) = (1.0, 3.0);
        let p = Profile::fs_model(grid(128), a, b, 1.0).unwrap();
        let v = p.second_derivative();
        for (i, vi) in v.iter().enumerate() {
            let rho = p.grid().rho(i);
            let e = rho.exp();
            let exact = (b - a) * e / ((1.0 + e) * (1.0 + e));
            assert!((vi - exact).abs() < 1e-13);
            assert!((vi - v[127 - i]).abs() < 1e-13);
        }
        let max = v.iter().copied().fold(0.0, f64::max);
        // logistic second derivative peaks at (b−a)/4
        assert!(max <= 0.25 * (b - a) + 1e-14);
        assert!(max > 0.25 * (b - a) * 0.999);
    }

    #[test]
    fn model_rejects_bad_slopes() {
        assert!(Profile::fs_model(grid(16), 2.0, 1.0, 1.0).is_err());
        assert!(Profile::fs_model(grid(16), 1.0, 1.0, 1.0).is_err());
        assert!(Profile::fs_model(grid(16), -0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn fiber_area_matches_quadrature_of_model() {
        for &area in &[0.5, 2.0, 7.0] {
            let p = Profile::fs_model(grid(256), 0.0, area, 1.0).unwrap();
            assert_eq!(p.fiber_area(), area);
            // independent trapezoid quadrature of the analytic u″ over ρ
            let m = 200_000;
            let (lo, hi) = (-40.0, 40.0);
            let h = (hi - lo) / m as f64;
            let mut sum = 0.0;
            for j in 0..=m {
                let rho: f64 = lo + j as f64 * h;
                let e = rho.exp();
                let w = if j == 0 || j == m { 0.5 } else { 1.0 };
                sum += w * area * e / ((1.0 + e) * (1.0 + e));
            }
            assert!((sum * h - area).abs() < 1e-8);
            assert!((p.fiber_area_quadrature() - area).abs() < 1e-12);
        }
    }

    #[test]
    fn areas_and_volume_of_model() {
        let geom = BundleGeometry::new(0);
        let p = Profile::fs_model(grid(128), 0.0, 2.0, 4.0).unwrap();
        assert_eq!(p.fiber_area(), 2.0);
        assert_eq!(p.section_area(&geom), 4.0);
        assert_eq!(p.total_volume(&geom), 8.0);
        assert!((p.volume_quadrature(&geom) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn twist_free_horizontal_component_is_constant() {
        let geom = BundleGeometry::new(0);
        let p = bumped(64, 0.3, 2.0, 2.0, 0.5);
        let m = assemble_metric(&p, &geom).unwrap();
        assert!(m.h.iter().all(|&h| h == 2.0));
    }

    #[test]
    fn horizontal_component_at_midpoint() {
        let geom = BundleGeometry::new(1);
        let p = Profile::fs_model(grid(64), 1.0, 3.0, 0.0).unwrap();
        let m = assemble_metric(&p, &geom).unwrap();
        assert!(((m.h[31] + m.h[32]) / 2.0 - 2.0).abs() < 1e-14);
    }

    #[test]
    fn positivity_loss_reported() {
        let geom = BundleGeometry::new(1);
        // s + k·a < 0
        let p = Profile::fs_model(grid(32), 0.0, 1.0, 0.0).unwrap();
        let p = Profile::from_parts(p.grid().clone(), -0.5, 0.0, 1.0, vec![0.0; 32]).unwrap();
        assert!(matches!(assemble_metric(&p, &geom), Err(Error::PositivityLoss { .. })));
        // strongly non-convex perturbation
        let q = bumped(64, 0.0, 1.0, 1.0, -40.0);
        assert!(matches!(q.validate(&geom), Err(Error::PositivityLoss { .. })));
    }

    #[test]
    fn perturbed_profile_converges_at_second_order() {
        let geom = BundleGeometry::new(1);
        let (a, b, s, eps) = (0.2, 2.2, 1.0, 0.8);
        let err = |n: usize| {
            let p = bumped(n, a, b, s, eps);
            let m = assemble_metric(&p, &geom).unwrap();
            let mut e: f64 = 0.0;
            for i in 0..n {
                let x = p.grid().x(i);
                let (_, gx, gxx) = bump(eps)(x);
                let du = a + (b - a) * x + x * (1.0 - x) * gx;
                let q = (b - a) + (1.0 - 2.0 * x) * gx + x * (1.0 - x) * gxx;
                e = e.max((m.h[i] - (s + du)).abs());
                e = e.max((m.v[i] - x * (1.0 - x) * q).abs());
            }
            e
        };
        let (e1, e2, e3) = (err(64), err(128), err(256));
        let o1 = (e1 / e2).log2();
        let o2 = (e2 / e3).log2();
        assert!(o1 >= 1.9 && o2 >= 1.9, "orders {o1} {o2}");
    }

    #[test]
    fn volume_identity_with_class() {
        use crate::geometry::class_volume;
        let mut seed = 12345u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..20 {
            let k = (next() * 4.0) as u32;
            let geom = BundleGeometry::new(k);
            let a = next() * 2.0;
            let b = a + 0.1 + next() * 3.0;
            let s = 0.1 + next() * 5.0;
            let p = Profile::fs_model(grid(1024), a, b, s).unwrap();
            let cv = class_volume(p.class(&geom), &geom);
            assert!((p.total_volume(&geom) - cv).abs() <= 1e-12 * cv);
            assert!((p.volume_quadrature(&geom) - cv).abs() <= 1e-6 * cv);
        }
    }

    #[test]
    fn diameter_calibrated_on_round_sphere() {
        for &area in &[0.1, 1.0, 2.0, 9.0] {
            let p = Profile::fs_model(grid(64), 0.0, area, 1.0).unwrap();
            let d = p.fiber_diameter();
            assert!((d - round_sphere_diameter(area)).abs() < 1e-12);
            assert!((d / area.sqrt() - PI.sqrt() / 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn diameter_scaling_and_degenerate_limit() {
        let p = bumped(256, 0.0, 1.5, 1.0, 0.3);
        let d = p.fiber_diameter();
        assert!((p.scaled(4.0).fiber_diameter() - 2.0 * d).abs() < 1e-12);
        let flat = Profile::from_parts(grid(32), 1.0, 0.7, 0.7, vec![0.0; 32]).unwrap();
        assert_eq!(flat.fiber_diameter(), 0.0);
        assert_eq!(flat.fiber_area(), 0.0);
    }

    #[test]
    fn functionals_scale_linearly() {
        let geom = BundleGeometry::new(2);
        let p = bumped(128, 0.5, 2.0, 1.0, 0.4);
        let l = 3.5;
        let q = p.scaled(l);
        assert!((q.fiber_area() - l * p.fiber_area()).abs() < 1e-12);
        assert!((q.section_area(&geom) - l * p.section_area(&geom)).abs() < 1e-12);
        // volume is quadratic in the class
        assert!((q.total_volume(&geom) - l * l * p.total_volume(&geom)).abs() < 1e-10);
    }

    #[test]
    fn fitted_slopes_exact_for_model() {
        let p = Profile::fs_model(grid(100), 0.4, 2.9, 1.0).unwrap();
        let (a, b) = p.fitted_slopes();
        assert!((a - 0.4).abs() < 1e-13 && (b - 2.9).abs() < 1e-13);
    }

    #[test]
    fn csv_round_trip() {
        let p = bumped(64, 0.25, 1.75, 2.0, 0.3);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,u,du,ddu\n"));
        let back = Profile::read_csv(buf.as_slice(), 2.0).unwrap();
        assert!((back.a() - p.a()).abs() < 1e-9);
        assert!((back.b() - p.b()).abs() < 1e-9);
        let (u0, u1) = (p.u(), back.u());
        assert!(u0.iter().zip(&u1).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn corrupted_csv_is_a_parse_error() {
        let p = Profile::fs_model(grid(16), 0.0, 1.0, 1.0).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();

        let first_row = text.find('\n').unwrap() + 1;
        let comma = first_row + text[first_row..].find(',').unwrap();
        let bad_number = format!("{}x{}", &text[..comma], &text[comma..]);
        match Profile::read_csv(bad_number.as_bytes(), 1.0) {
            Err(Error::Parse { line, .. }) => assert!(line >= 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let bad_header = text.replacen("ddu", "d2u", 1);
        assert!(matches!(
            Profile::read_csv(bad_header.as_bytes(), 1.0),
            Err(Error::Parse { line: 1, .. })
        ));
        let mut lines: Vec<&str> = text.lines().collect();
        lines.remove(5);
        let missing = lines.join("\n");
        assert!(matches!(
            Profile::read_csv(missing.as_bytes(), 1.0),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn interpolation_hits_ends_exactly() {
        let p = Profile::fs_model(grid(32), 0.5, 2.5, 1.0).unwrap();
        let (sl, de) = (p.slopes(), p.fiber_density());
        assert!((p.sample_at(0.0, &sl, &de).0 - 0.5).abs() < 1e-14);
        assert!((p.sample_at(1.0, &sl, &de).0 - 2.5).abs() < 1e-14);
        for &x in &[0.0, 0.01, 0.3, 0.77, 1.0] {
            let (pu, q) = p.sample_at(x, &sl, &de);
            assert!((pu - (0.5 + 2.0 * x)).abs() < 1e-13);
            assert!((q - 2.0).abs() < 1e-13);
        }
    }
}
