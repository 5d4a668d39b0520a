//! Monitors for the a priori estimates along a run.
//!
//! All quantities are computed pointwise from the symmetric reduction. Base
//! points are described by the affine coordinate `z` on `P¹` and fiber points
//! by `ρ`, with `w` the fiber coordinate of `O(−k)` chosen real so that
//! `|w|² = e^ρ/(1+|z|²)^k`. In the coordinates `(z, w)` the metric is the
//! Hermitian matrix
//!
//! ```text
//! G = [[h·g_Σ + v|α|², v·α/w], [v·ᾱ/w, v/w²]],   α = k·z̄/(1+|z|²),
//! ```
//!
//! with `g_Σ = (1+|z|²)^{−2}`. The comparison form `ω_sing` is the pullback
//! of `c_B·ω_Σ ⊕ ω_FS` through the frame `(s₁, s₂)`: the fiber coordinate
//! `ŵ = p(z)·w` of the split bundle feeds the Fubini-Study factor.

use num_complex::Complex64;

use crate::calabi::MetricComponents;
use crate::flow::{Flow, FlowState};
use crate::fsgeom::{frame_map, pullback_norm, ProjectivePoint, TangentVector};
use crate::{Error, Result};

/// Samples closer than this fraction of the base spacing to a root of `p`
/// count as hitting it.
const ROOT_CLEARANCE: f64 = 1e-3;

/// Default sampling for the split-bundle monitors.
pub const DEFAULT_BASE_SAMPLES: usize = 24;
pub const DEFAULT_FIBER_SAMPLES: usize = 64;

/// `min h / c_B`.
pub fn schwarz_infimum(metric: &MetricComponents, c_base: f64) -> f64 {
    metric.min_h() / c_base
}

/// `sup (h/h₀ + v/v₀)`.
pub fn trace_supremum(metric: &MetricComponents, initial: &MetricComponents) -> f64 {
    metric
        .h
        .iter()
        .zip(&metric.density)
        .zip(initial.h.iter().zip(&initial.density))
        .map(|((h, q), (h0, q0))| h / h0 + q / q0)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    pub exponent: f64,
    /// `C` in `diam ≈ C·(T−t)^exponent`.
    pub prefactor: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    /// Window bounds as fractions of `T`.
    pub window_lo: f64,
    pub window_hi: f64,
    pub samples: usize,
}

pub const MIN_FIT_SAMPLES: usize = 8;

/// Least-squares slope of `ln diam` against `ln(T − t)` for samples with
/// `t/T` in the window.
pub fn decay_exponent(
    times: &[f64],
    diameters: &[f64],
    t_sing: f64,
    window: (f64, f64),
) -> Result<DecayFit> {
    let (lo, hi) = window;
    let eps = 1e-12;
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(diameters)
        .filter(|(t, d)| {
            let f = *t / t_sing;
            f >= lo - eps && f <= hi + eps && **d > 0.0 && **t < t_sing
        })
        .map(|(t, d)| ((t_sing - t).ln(), d.ln()))
        .collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_FIT_SAMPLES,
            found: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx = pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let sxy = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>();
    Ok(DecayFit {
        exponent: slope,
        prefactor: intercept.exp(),
        residual: (rss / n).sqrt(),
        window_lo: lo,
        window_hi: hi,
        samples: pts.len(),
    })
}

/// `E = O ⊕ O(−k)` with the sections `s₁ = 1` of `O` and `s₂ = p(z)` of
/// `O(k)`; `|f|²_h = |p|²/(1+|z|²)^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitBundleData {
    k: u32,
    /// Coefficients of `p`, constant term first.
    coeffs: Vec<Complex64>,
    roots: Vec<Complex64>,
}

impl SplitBundleData {
    pub fn new(k: u32, coeffs: Vec<Complex64>) -> Result<Self> {
        let mut coeffs = coeffs;
        while coeffs.last().is_some_and(|c| c.norm() == 0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            return Err(Error::Validation("the section p vanishes identically".into()));
        }
        if coeffs.len() > k as usize + 1 {
            return Err(Error::Validation(format!(
                "a section of O({k}) has degree at most {k}, got {}",
                coeffs.len() - 1
            )));
        }
        let roots = polynomial_roots(&coeffs);
        Ok(SplitBundleData { k, coeffs, roots })
    }

    /// `p(z) = z^k + 1`.
    pub fn default_for(k: u32) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); k as usize + 1];
        coeffs[0] += 1.0;
        coeffs[k as usize] += 1.0;
        SplitBundleData::new(k, coeffs).expect("z^k + 1 is a valid section")
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn roots(&self) -> &[Complex64] {
        &self.roots
    }

    /// `(p(z), p′(z))` by Horner's rule.
    pub fn eval(&self, z: Complex64) -> (Complex64, Complex64) {
        let mut p = Complex64::new(0.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        for c in self.coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    }

    /// `|f|²_h(z) = |p(z)|²/(1+|z|²)^k`.
    pub fn weight(&self, z: Complex64) -> f64 {
        self.eval(z).0.norm_sqr() / (1.0 + z.norm_sqr()).powi(self.k as i32)
    }

    /// Chordal distance on the unit sphere to the nearest finite root.
    pub fn root_distance(&self, z: Complex64) -> f64 {
        self.roots
            .iter()
            .map(|r| chordal_distance(z, *r))
            .fold(f64::INFINITY, f64::min)
    }

    /// Fails with `SampleAtZero` when `z` sits on a root at the given spacing.
    pub fn check_clearance(&self, z: Complex64, spacing: f64) -> Result<()> {
        let d = self.root_distance(z);
        if d < ROOT_CLEARANCE * spacing {
            return Err(Error::SampleAtZero {
                z: format!("{z}"),
                distance: d,
            });
        }
        Ok(())
    }
}

/// Chordal distance between points of `P¹` in the round unit sphere.
pub fn chordal_distance(a: Complex64, b: Complex64) -> f64 {
    2.0 * (a - b).norm() / ((1.0 + a.norm_sqr()) * (1.0 + b.norm_sqr())).sqrt()
}

/// Roots by Durand-Kerner iteration (fixed start, deterministic).
fn polynomial_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let deg = coeffs.len() - 1;
    if deg == 0 {
        return Vec::new();
    }
    let lead = coeffs[deg];
    let monic: Vec<Complex64> = coeffs.iter().map(|c| c / lead).collect();
    let eval = |z: Complex64| monic.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c);
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..deg).map(|i| seed.powu(i as u32)).collect();
    for _ in 0..500 {
        let mut delta: f64 = 0.0;
        for i in 0..deg {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..deg {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    roots
}

/// A base sample in polar coordinates with its affine coordinate
/// `z = tan(polar/2)·e^{i·azimuth}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaseSample {
    pub polar: f64,
    pub azimuth: f64,
    pub z: Complex64,
}

/// Cell-centred `m×m` grid in `(polar, azimuth)`; `m` must be even so that
/// no sample lies on the equator or on the negative real axis.
pub fn base_grid(m: usize) -> Result<Vec<BaseSample>> {
    if m < 2 || m % 2 != 0 {
        return Err(Error::Validation(format!("base sample count {m} must be even and ≥ 2")));
    }
    let mut out = Vec::with_capacity(m * m);
    for i in 0..m {
        let polar = std::f64::consts::PI * (i as f64 + 0.5) / m as f64;
        for j in 0..m {
            let azimuth = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / m as f64;
            let z = Complex64::from_polar((polar / 2.0).tan(), azimuth);
            out.push(BaseSample { polar, azimuth, z });
        }
    }
    Ok(out)
}

type Herm2 = [[Complex64; 2]; 2];

/// `tr(S⁻¹G)` for 2×2 Hermitian `S`, `G`.
fn relative_trace(s: &Herm2, g: &Herm2) -> f64 {
    let det = (s[0][0] * s[1][1] - s[0][1] * s[1][0]).re;
    let num = s[1][1] * g[0][0] - s[0][1] * g[1][0] - s[1][0] * g[0][1] + s[0][0] * g[1][1];
    num.re / det
}

/// Pointwise evaluation of `ω`, `ω_sing` and the weight on the sample set.
pub struct SingularComparison<'a> {
    data: &'a SplitBundleData,
    c_base: f64,
    base: Vec<BaseSample>,
    fiber_nodes: Vec<usize>,
    spacing: f64,
}

/// `ω_sing` at one base point for every sampled fiber node.
struct SingularColumn {
    weight: f64,
    forms: Vec<Herm2>,
}

impl<'a> SingularComparison<'a> {
    pub fn new(
        data: &'a SplitBundleData,
        c_base: f64,
        base_samples: usize,
        fiber_samples: usize,
        grid_len: usize,
    ) -> Result<Self> {
        let base = base_grid(base_samples)?;
        let spacing = std::f64::consts::PI / base_samples as f64;
        for b in &base {
            data.check_clearance(b.z, spacing)?;
        }
        let stride = (grid_len / fiber_samples.max(1)).max(1);
        let mut fiber_nodes: Vec<usize> = (0..grid_len).step_by(stride).collect();
        if fiber_nodes.last() != Some(&(grid_len - 1)) {
            fiber_nodes.push(grid_len - 1);
        }
        Ok(SingularComparison {
            data,
            c_base,
            base,
            fiber_nodes,
            spacing,
        })
    }

    pub fn base_samples(&self) -> &[BaseSample] {
        &self.base
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// `ω_sing` at `z`; its fiber entry comes from the Fubini-Study pullback
    /// through the frame map.
    fn column(&self, z: Complex64, xs: &[f64]) -> Result<SingularColumn> {
        let k = self.data.k() as i32;
        let r2 = 1.0 + z.norm_sqr();
        let g_sigma = 1.0 / (r2 * r2);
        let weight = self.data.weight(z);
        let (p, dp) = self.data.eval(z);
        let frame = frame_map(z, self.data, self.spacing)?;
        let mut forms = Vec::with_capacity(self.fiber_nodes.len());
        for &i in &self.fiber_nodes {
            let x = xs[i];
            let e_rho = x / (1.0 - x);
            let w = (e_rho / r2.powi(k)).sqrt();
            // ŵ_h = √(e^ρ) is the h-unitary fiber coordinate
            let wh = e_rho.sqrt();
            let point = ProjectivePoint::from_slice(&[Complex64::new(1.0, 0.0), Complex64::new(wh, 0.0)])?;
            // the fiber is one-dimensional, so any chart tangent spans it
            let chart = point.preferred_chart();
            let xi = TangentVector::from_chart_coordinates(chart, &[Complex64::new(1.0, 0.0)]);
            let ratio = pullback_norm(&frame, &point, &xi)?;
            let fs = 1.0 / ((1.0 + e_rho) * (1.0 + e_rho));
            // dŵ_h/dw = (1+|z|²)^{k/2}
            let ww = ratio * fs * r2.powi(k);
            let gamma = 1.0 / (1.0 + weight * e_rho).powi(2);
            let c0 = dp * w;
            let s11 = self.c_base * g_sigma + gamma * c0.norm_sqr();
            let s12 = gamma * c0 * p.conj();
            forms.push([
                [Complex64::new(s11, 0.0), s12],
                [s12.conj(), Complex64::new(ww, 0.0)],
            ]);
        }
        Ok(SingularColumn { weight, forms })
    }

    /// `G` at `z` and fiber node `i`.
    fn metric_form(&self, z: Complex64, metric: &MetricComponents, x: f64, i: usize) -> Herm2 {
        let k = self.data.k();
        let kf = k as f64;
        let r2 = 1.0 + z.norm_sqr();
        let g_sigma = 1.0 / (r2 * r2);
        let e_rho = x / (1.0 - x);
        let w = (e_rho / r2.powi(k as i32)).sqrt();
        let alpha = z.conj() * (kf / r2);
        let q = metric.density[i];
        let v = metric.v[i];
        let g11 = metric.h[i] * g_sigma + v * alpha.norm_sqr();
        let g12 = alpha * (v / w);
        let g22 = q * (1.0 - x) * (1.0 - x) * r2.powi(k as i32);
        [
            [Complex64::new(g11, 0.0), g12],
            [g12.conj(), Complex64::new(g22, 0.0)],
        ]
    }

    /// `sup_samples |f|²_h · tr_{ω_sing} ω` and `sup_samples log(|f|³_h · tr_{ω_sing} ω)`.
    pub fn evaluate(&self, metric: &MetricComponents, xs: &[f64]) -> Result<(f64, f64)> {
        let mut weighted = f64::NEG_INFINITY;
        let mut h_sup = f64::NEG_INFINITY;
        for b in &self.base {
            let col = self.column(b.z, xs)?;
            for (slot, &i) in self.fiber_nodes.iter().enumerate() {
                let g = self.metric_form(b.z, metric, xs[i], i);
                let tr = relative_trace(&col.forms[slot], &g);
                weighted = weighted.max(col.weight * tr);
                h_sup = h_sup.max((col.weight.powf(1.5) * tr).ln());
            }
        }
        Ok((weighted, h_sup))
    }
}

/// `sup |f|²_h · tr_{ω_sing} ω₀` over the sample set.
pub fn singular_trace_check(
    flow: &Flow,
    data: &SplitBundleData,
    base_samples: usize,
    fiber_samples: usize,
) -> Result<f64> {
    let grid = flow.initial_profile().grid();
    let cmp = SingularComparison::new(data, flow.base_period(), base_samples, fiber_samples, grid.len())?;
    let metric = flow.metric(&flow.initial_state())?;
    Ok(cmp.evaluate(&metric, &grid.xs())?.0)
}

/// `sup log(|f|³_h · tr_{ω_sing} ω(t))` over the sample set.
pub fn h_monitor(
    flow: &Flow,
    state: &FlowState,
    data: &SplitBundleData,
    base_samples: usize,
    fiber_samples: usize,
) -> Result<f64> {
    let grid = flow.initial_profile().grid();
    let cmp = SingularComparison::new(data, flow.base_period(), base_samples, fiber_samples, grid.len())?;
    let metric = flow.metric(state)?;
    Ok(cmp.evaluate(&metric, &grid.xs())?.1)
}

/// One row of `monitors.csv`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonitorRow {
    pub t: f64,
    pub schwarz_inf: f64,
    pub trace_sup: f64,
    pub fiber_diam: f64,
    pub h_sup: f64,
    pub phi_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonitorSeries {
    pub rows: Vec<MonitorRow>,
    /// Supremum of `|f|²_h · tr_{ω_sing} ω₀`.
    pub singular_check: f64,
}

impl MonitorSeries {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn fiber_diameters(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.fiber_diam).collect()
    }

    pub fn fit(&self, t_sing: f64, window: (f64, f64)) -> Result<DecayFit> {
        decay_exponent(&self.times(), &self.fiber_diameters(), t_sing, window)
    }
}

/// Evaluates every monitor on every snapshot (snapshots sorted by time).
pub fn monitor_series(
    flow: &Flow,
    snapshots: &[FlowState],
    data: &SplitBundleData,
    base_samples: usize,
    fiber_samples: usize,
) -> Result<MonitorSeries> {
    let grid = flow.initial_profile().grid();
    let xs = grid.xs();
    let cmp = SingularComparison::new(data, flow.base_period(), base_samples, fiber_samples, grid.len())?;
    let initial = flow.metric(&flow.initial_state())?;
    let singular_check = cmp.evaluate(&initial, &xs)?.0;
    let mut rows = Vec::with_capacity(snapshots.len());
    for (j, s) in snapshots.iter().enumerate() {
        if j > 0 && s.t <= snapshots[j - 1].t {
            return Err(Error::Validation("snapshot times must increase".into()));
        }
        let metric = flow.metric(s)?;
        rows.push(MonitorRow {
            t: s.t,
            schwarz_inf: schwarz_infimum(&metric, flow.base_period()),
            trace_sup: trace_supremum(&metric, &initial),
            fiber_diam: s.profile.fiber_diameter(),
            h_sup: cmp.evaluate(&metric, &xs)?.1,
            phi_max: s.max_abs_phi(),
        });
    }
    Ok(MonitorSeries {
        rows,
        singular_check,
    })
}
