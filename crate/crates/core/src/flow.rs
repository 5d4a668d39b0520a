//! Gauge-fixed parabolic complex Monge-Ampère flow in the symmetric reduction.
//!
//! The evolving form is `ω = ω̂_t + (i/2π)∂∂̄φ` with the affine reference
//! family `ω̂_t = ((T−t)·ω₀ + t·π*ω_B)/T`, and the potential obeys
//!
//! ```text
//! ∂φ/∂t = log(ω²/Ω),   φ(0) = 0,
//! ```
//!
//! where `(i/2π)∂∂̄ log Ω = (π*ω_B − ω₀)/T` and `∫_X Ω = 1`. On a profile
//! `u = u_model(a, b) + g`, the reduced density is `Ω = C·x(1−x)·e^{−g₀/T}`
//! against `dμ = ω_Σ ∧ dρ ∧ dθ/2π`, and `ω² = 2·h·v·dμ`. The `x(1−x)`
//! factors cancel, so the right-hand side is
//!
//! ```text
//! ∂φ/∂t = ln(2·h·q) + g₀/T − ln C,    q = u″/(x(1−x)).
//! ```
//!
//! Two steppers are provided. [`Stepper::Rosenbrock`] is the two-stage
//! L-stable linearly implicit scheme with the exact tridiagonal Jacobian and
//! steps proportional to `T − t`. [`Stepper::Rk4`] is classical RK4 with the
//! step bounded by a Gershgorin estimate of the linearized operator (a
//! parabolic CFL condition); it needs `O(N²/(T−t))` steps and is kept for
//! cross-checks and short runs.

use crate::calabi::{assemble_metric, Grid, MetricComponents, Profile};
use crate::geometry::{class_volume, BundleGeometry, KahlerClassPath};
use crate::{Error, Result};

/// Real-axis extent of the classical RK4 stability region.
const RK4_STABILITY: f64 = 2.785;

/// Rosenbrock stage coefficient `1 + 1/√2`.
const ROS2_GAMMA: f64 = 1.0 + std::f64::consts::FRAC_1_SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stepper {
    Rosenbrock,
    Rk4,
}

impl std::str::FromStr for Stepper {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rosenbrock" => Ok(Stepper::Rosenbrock),
            "rk4" => Ok(Stepper::Rk4),
            other => Err(format!("unknown stepper {other:?} (expected rosenbrock or rk4)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowConfig {
    pub stepper: Stepper,
    /// Safety factor applied to the RK4 stability bound.
    pub cfl: f64,
    /// Rosenbrock steps are `step_fraction·(T − t)`.
    pub step_fraction: f64,
    /// Runs stop at `T·(1 − delta)`.
    pub delta: f64,
    pub step_floor: f64,
}

impl FlowConfig {
    pub fn new(stepper: Stepper, cfl: f64, step_fraction: f64, delta: f64) -> Result<Self> {
        let config = FlowConfig {
            stepper,
            cfl,
            step_fraction,
            delta,
            ..FlowConfig::default()
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_fraction > 0.0 && self.step_fraction <= 0.1) {
            return Err(Error::Validation(format!(
                "step_fraction {} must lie in (0, 0.1]",
                self.step_fraction
            )));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Validation(format!("cfl {} must lie in (0, 1]", self.cfl)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Validation(format!("delta {} must lie in (0, 1)", self.delta)));
        }
        Ok(())
    }
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            stepper: Stepper::Rosenbrock,
            cfl: 0.8,
            step_fraction: 1e-3,
            delta: 1e-3,
            step_floor: 1e-12,
        }
    }
}

/// Normalized volume form `Ω` in the reduced picture.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeDensity {
    /// `ln(Ω_i/(x_i(1−x_i)))`.
    log_ratio: Vec<f64>,
    normalization: f64,
}

impl VolumeDensity {
    pub fn for_initial(initial: &Profile, t_sing: f64) -> Self {
        let grid = initial.grid();
        let shape: Vec<f64> = initial.regular().iter().map(|g| -g / t_sing).collect();
        // ∫Ω dρ = C·∫₀¹ e^{−g₀/T} dx
        let integral = shape.iter().map(|e| e.exp()).sum::<f64>() * grid.dx();
        let normalization = 1.0 / integral;
        let ln_c = normalization.ln();
        VolumeDensity {
            log_ratio: shape.iter().map(|e| ln_c + e).collect(),
            normalization,
        }
    }

    /// The same `∂∂̄`-class with the normalizing constant multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        let shift = factor.ln();
        VolumeDensity {
            log_ratio: self.log_ratio.iter().map(|l| l + shift).collect(),
            normalization: self.normalization * factor,
        }
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// `Ω_i` as a density against `dρ`.
    pub fn samples(&self, grid: &Grid) -> Vec<f64> {
        self.log_ratio
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let x = grid.x(i);
                x * (1.0 - x) * l.exp()
            })
            .collect()
    }

    /// `∫Ω dρ` by midpoint quadrature in `x`.
    pub fn total(&self, grid: &Grid) -> f64 {
        self.log_ratio.iter().map(|l| l.exp()).sum::<f64>() * grid.dx()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub t: f64,
    /// Potential in the gauge `ω = ω̂_t + (i/2π)∂∂̄φ`.
    pub phi: Vec<f64>,
    /// `û_t + φ` as a profile.
    pub profile: Profile,
    pub dt_last: f64,
    pub steps: usize,
}

impl FlowState {
    pub fn max_abs_phi(&self) -> f64 {
        self.phi.iter().fold(0.0, |m, p| m.max(p.abs()))
    }
}

/// Conservation residuals against the class trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassResiduals {
    pub fiber: f64,
    pub section: f64,
    pub volume: f64,
}

impl ClassResiduals {
    pub fn max(&self) -> f64 {
        self.fiber.max(self.section).max(self.volume)
    }
}

/// Coefficients of the evolving profile that are fixed by the class.
#[derive(Clone, Copy, Debug)]
struct Frame {
    a: f64,
    f: f64,
    s: f64,
    /// `(T−t)/T`, the weight of the initial smooth part in `û_t`.
    r: f64,
}

#[derive(Clone, Debug)]
pub struct Flow {
    geom: BundleGeometry,
    path: KahlerClassPath,
    t_sing: f64,
    c_base: f64,
    initial: Profile,
    omega: VolumeDensity,
    config: FlowConfig,
    xs: Vec<f64>,
    face_w: Vec<f64>,
    smooth_initial: bool,
}

struct Scratch {
    g: Vec<f64>,
    stage: Vec<f64>,
    k: [Vec<f64>; 4],
    /// Tridiagonal Jacobian: sub-, main and super-diagonal.
    jac: [Vec<f64>; 3],
    sweep: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            g: vec![0.0; n],
            stage: vec![0.0; n],
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            jac: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            sweep: vec![0.0; n],
        }
    }
}

/// Solves `(I − c·J)·x = rhs` in place for tridiagonal `J` (Thomas algorithm).
fn solve_shifted(jac: &[Vec<f64>; 3], c: f64, rhs: &mut [f64], sweep: &mut [f64]) {
    let [lower, diag, upper] = jac;
    let n = rhs.len();
    let mut denom = 1.0 - c * diag[0];
    sweep[0] = -c * upper[0] / denom;
    rhs[0] /= denom;
    for i in 1..n {
        let l = -c * lower[i];
        denom = 1.0 - c * diag[i] - l * sweep[i - 1];
        sweep[i] = -c * upper[i] / denom;
        rhs[i] = (rhs[i] - l * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= sweep[i] * rhs[i + 1];
    }
}

impl Flow {
    pub fn new(geom: BundleGeometry, initial: Profile, config: FlowConfig) -> Result<Self> {
        initial.validate(&geom)?;
        config.validate()?;
        let path = KahlerClassPath::new(initial.fiber_area(), initial.section_area(&geom));
        let c_base = path.base_collapse(&geom).ok_or_else(|| {
            Error::Validation(format!(
                "class (f0 = {}, c0 = {}) does not collapse onto the base",
                path.f0, path.c0
            ))
        })?;
        let t_sing = path.singular_time(&geom).t;
        let omega = VolumeDensity::for_initial(&initial, t_sing);
        let grid = initial.grid();
        let smooth_initial = initial.regular().iter().all(|&g| g == 0.0);
        Ok(Flow {
            geom,
            path,
            t_sing,
            c_base,
            xs: grid.xs(),
            face_w: grid.face_weights(),
            omega,
            config,
            initial,
            smooth_initial,
        })
    }

    /// Replaces the volume form by another admissible normalization.
    pub fn with_volume_density(mut self, omega: VolumeDensity) -> Self {
        self.omega = omega;
        self
    }

    pub fn geometry(&self) -> &BundleGeometry {
        &self.geom
    }

    pub fn path(&self) -> &KahlerClassPath {
        &self.path
    }

    pub fn singular_time(&self) -> f64 {
        self.t_sing
    }

    /// `c_B`: the base period of the limiting class.
    pub fn base_period(&self) -> f64 {
        self.c_base
    }

    pub fn initial_profile(&self) -> &Profile {
        &self.initial
    }

    pub fn volume_density(&self) -> &VolumeDensity {
        &self.omega
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    pub fn stop_time(&self) -> f64 {
        self.t_sing * (1.0 - self.config.delta)
    }

    fn frame(&self, t: f64) -> Frame {
        let big_t = self.t_sing;
        let r = (big_t - t) / big_t;
        let p0 = &self.initial;
        let s = ((big_t - t) * p0.s() + t * self.c_base) / big_t;
        Frame {
            a: r * p0.a(),
            f: r * p0.fiber_area(),
            s,
            r,
        }
    }

    fn check_window(&self, t: f64) -> Result<()> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::InvalidTime(t));
        }
        if t > self.t_sing {
            return Err(Error::OutOfWindow {
                t,
                t_sing: self.t_sing,
            });
        }
        Ok(())
    }

    /// `û_t = ((T−t)/T)·u₀` with base coefficient `s_t = ((T−t)s₀ + t·c_B)/T`.
    pub fn reference_profile(&self, t: f64) -> Result<Profile> {
        self.check_window(t)?;
        let fr = self.frame(t);
        let grid = self.initial.grid().clone();
        let regular = self.initial.regular().iter().map(|g| fr.r * g).collect();
        Profile::from_parts(grid, fr.s, fr.a, fr.a + fr.f, regular)
    }

    fn assemble(&self, t: f64, phi: &[f64]) -> Result<Profile> {
        let fr = self.frame(t);
        let regular = self
            .initial
            .regular()
            .iter()
            .zip(phi)
            .map(|(g0, p)| fr.r * g0 + p)
            .collect();
        Profile::from_parts(self.initial.grid().clone(), fr.s, fr.a, fr.a + fr.f, regular)
    }

    pub fn initial_state(&self) -> FlowState {
        let n = self.initial.grid().len();
        FlowState {
            t: 0.0,
            phi: vec![0.0; n],
            profile: self.initial.clone(),
            dt_last: 0.0,
            steps: 0,
        }
    }

    pub fn state_from_potential(&self, t: f64, phi: Vec<f64>) -> Result<FlowState> {
        self.check_window(t)?;
        let profile = self.assemble(t, &phi)?;
        Ok(FlowState {
            t,
            phi,
            profile,
            dt_last: 0.0,
            steps: 0,
        })
    }

    pub fn metric(&self, state: &FlowState) -> Result<MetricComponents> {
        assemble_metric(&state.profile, &self.geom)
    }

    /// `∂φ/∂t` at every node.
    pub fn rhs(&self, state: &FlowState) -> Result<Vec<f64>> {
        let n = state.phi.len();
        let mut out = vec![0.0; n];
        let mut g = vec![0.0; n];
        self.rhs_into(state.t, &state.phi, &mut g, &mut out, None)?;
        Ok(out)
    }

    /// Largest stable RK4 step at the given state.
    pub fn stable_step(&self, state: &FlowState) -> Result<f64> {
        let n = state.phi.len();
        let mut out = vec![0.0; n];
        let mut g = vec![0.0; n];
        let bound = self.rhs_into(state.t, &state.phi, &mut g, &mut out, None)?;
        Ok(self.config.cfl * RK4_STABILITY / bound)
    }

    /// Evaluates the right-hand side into `out` and returns a Gershgorin
    /// bound on the spectral radius of its Jacobian. With `jac` present the
    /// tridiagonal Jacobian with respect to `φ` is stored there as well.
    fn rhs_into(
        &self,
        t: f64,
        phi: &[f64],
        g: &mut [f64],
        out: &mut [f64],
        mut jac: Option<&mut [Vec<f64>; 3]>,
    ) -> Result<f64> {
        let fr = self.frame(t);
        let n = phi.len();
        if self.smooth_initial {
            g.copy_from_slice(phi);
        } else {
            for ((gi, g0), p) in g.iter_mut().zip(self.initial.regular()).zip(phi) {
                *gi = fr.r * g0 + p;
            }
        }
        let k = self.geom.kf();
        let half_dx = 0.5 / n as f64;
        let kdx = k / n as f64;
        let mut bound: f64 = 0.0;
        let w = &self.face_w;
        for i in 0..n {
            let d_lo = if i > 0 { g[i] - g[i - 1] } else { 0.0 };
            let d_hi = if i + 1 < n { g[i + 1] - g[i] } else { 0.0 };
            let (w_lo, w_hi) = (w[i], w[i + 1]);
            let q = fr.f + w_hi * d_hi - w_lo * d_lo;
            let p = fr.a + fr.f * self.xs[i] + half_dx * (w_hi * d_hi + w_lo * d_lo);
            let h = fr.s + k * p;
            if !(h > 0.0 && q > 0.0) {
                let x = self.xs[i];
                return Err(Error::PositivityLoss {
                    node: i,
                    h,
                    v: x * (1.0 - x) * q,
                });
            }
            out[i] = (2.0 * h * q).ln() - self.omega.log_ratio[i];
            let (inv_q, kh) = (1.0 / q, k * half_dx / h);
            bound = bound.max((w_lo + w_hi) * (2.0 * inv_q + kdx / h));
            if let Some([lower, diag, upper]) = jac.as_deref_mut() {
                lower[i] = w_lo * (inv_q - kh);
                diag[i] = -(w_lo + w_hi) * inv_q + (w_lo - w_hi) * kh;
                upper[i] = w_hi * (inv_q + kh);
            }
        }
        Ok(bound)
    }

    /// One step of size `dt` with the configured stepper. For RK4 the
    /// caller keeps `dt` within [`Flow::stable_step`].
    pub fn step(&self, state: &FlowState, dt: f64) -> Result<FlowState> {
        let n = state.phi.len();
        let mut scratch = Scratch::new(n);
        let mut phi = state.phi.clone();
        match self.config.stepper {
            Stepper::Rk4 => {
                self.rk4_stage_one(state.t, &phi, &mut scratch)?;
                self.rk4_finish(state.t, dt, &mut phi, &mut scratch)?;
            }
            Stepper::Rosenbrock => self.ros2_step(state.t, dt, &mut phi, &mut scratch)?,
        }
        let t = state.t + dt;
        Ok(FlowState {
            t,
            profile: self.assemble(t, &phi)?,
            phi,
            dt_last: dt,
            steps: state.steps + 1,
        })
    }

    fn rk4_stage_one(&self, t: f64, phi: &[f64], s: &mut Scratch) -> Result<f64> {
        let Scratch { g, k, .. } = s;
        self.rhs_into(t, phi, g, &mut k[0], None)
    }

    /// Two-stage Rosenbrock step (ROS2, `γ = 1 + 1/√2`); the time dependence
    /// of the frame is treated explicitly, which keeps second order.
    fn ros2_step(&self, t: f64, dt: f64, phi: &mut [f64], s: &mut Scratch) -> Result<()> {
        let Scratch {
            g,
            stage,
            k,
            jac,
            sweep,
        } = s;
        let (k1, rest) = k.split_first_mut().expect("stages");
        let k2 = &mut rest[0];
        self.rhs_into(t, phi, g, k1, Some(jac))?;
        let c = ROS2_GAMMA * dt;
        solve_shifted(jac, c, k1, sweep);
        for ((st, p), d) in stage.iter_mut().zip(phi.iter()).zip(k1.iter()) {
            *st = p + dt * d;
        }
        self.rhs_into(t + dt, stage, g, k2, None)?;
        for (b, a) in k2.iter_mut().zip(k1.iter()) {
            *b -= 2.0 * a;
        }
        solve_shifted(jac, c, k2, sweep);
        for i in 0..phi.len() {
            phi[i] += dt * (1.5 * k1[i] + 0.5 * k2[i]);
        }
        Ok(())
    }

    fn rk4_finish(&self, t: f64, dt: f64, phi: &mut [f64], s: &mut Scratch) -> Result<()> {
        let Scratch { g, stage, k, .. } = s;
        let (k1, rest) = k.split_first_mut().expect("four stages");
        let (k2, rest) = rest.split_first_mut().expect("four stages");
        let (k3, rest) = rest.split_first_mut().expect("four stages");
        let k4 = &mut rest[0];
        for ((st, p), d) in stage.iter_mut().zip(phi.iter()).zip(k1.iter()) {
            *st = p + 0.5 * dt * d;
        }
        self.rhs_into(t + 0.5 * dt, stage, g, k2, None)?;
        for ((st, p), d) in stage.iter_mut().zip(phi.iter()).zip(k2.iter()) {
            *st = p + 0.5 * dt * d;
        }
        self.rhs_into(t + 0.5 * dt, stage, g, k3, None)?;
        for ((st, p), d) in stage.iter_mut().zip(phi.iter()).zip(k3.iter()) {
            *st = p + dt * d;
        }
        self.rhs_into(t + dt, stage, g, k4, None)?;
        let sixth = dt / 6.0;
        for i in 0..phi.len() {
            phi[i] += sixth * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
        Ok(())
    }

    /// Integrates from `t = 0` and returns a snapshot at every requested time.
    pub fn run(&self, stops: &[f64]) -> Result<Vec<FlowState>> {
        let mut sorted = stops.to_vec();
        for &t in &sorted {
            self.check_window(t)?;
            if t > self.stop_time() * (1.0 + 1e-12) {
                return Err(Error::OutOfWindow {
                    t,
                    t_sing: self.t_sing,
                });
            }
        }
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();

        let n = self.initial.grid().len();
        let mut scratch = Scratch::new(n);
        let mut phi = vec![0.0; n];
        let mut t = 0.0;
        let mut steps = 0usize;
        let mut dt_last = 0.0;
        let mut snapshots = Vec::with_capacity(sorted.len());

        for &stop in &sorted {
            while t < stop {
                let dt_target = match self.config.stepper {
                    Stepper::Rk4 => {
                        let bound = self.rk4_stage_one(t, &phi, &mut scratch)?;
                        self.config.cfl * RK4_STABILITY / bound
                    }
                    Stepper::Rosenbrock => self.config.step_fraction * (self.t_sing - t),
                };
                if dt_target < self.config.step_floor {
                    return Err(Error::StepFloor {
                        dt: dt_target,
                        last: Box::new(FlowState {
                            t,
                            profile: self.assemble(t, &phi)?,
                            phi: phi.clone(),
                            dt_last,
                            steps,
                        }),
                    });
                }
                let remaining = stop - t;
                let (dt, lands) = if remaining <= dt_target {
                    (remaining, true)
                } else if remaining < 2.0 * dt_target {
                    (0.5 * remaining, false)
                } else {
                    (dt_target, false)
                };
                match self.config.stepper {
                    Stepper::Rk4 => self.rk4_finish(t, dt, &mut phi, &mut scratch)?,
                    Stepper::Rosenbrock => self.ros2_step(t, dt, &mut phi, &mut scratch)?,
                }
                t = if lands { stop } else { t + dt };
                dt_last = dt;
                steps += 1;
            }
            snapshots.push(FlowState {
                t,
                profile: self.assemble(t, &phi)?,
                phi: phi.clone(),
                dt_last,
                steps,
            });
        }
        Ok(snapshots)
    }

    /// Gauge-invariant conservation residuals. Areas are recomputed from
    /// nodal data: fiber and volume by quadrature, the section period from
    /// the extrapolated lower slope.
    pub fn class_consistency(&self, state: &FlowState) -> Result<ClassResiduals> {
        let class = self.path.class_at(&self.geom, state.t)?;
        let p = &state.profile;
        let (a_fit, _) = p.fitted_slopes();
        Ok(ClassResiduals {
            fiber: (p.fiber_area_quadrature() - class.fiber).abs(),
            section: (p.s() + self.geom.kf() * a_fit - class.section).abs(),
            volume: (p.volume_quadrature(&self.geom) - class_volume(class, &self.geom)).abs(),
        })
    }
}

/// Default snapshot times as fractions of `T`: every 5% up to 90%, then
/// logarithmically spaced in `T − t` down to `delta·T`, plus extra points.
pub fn default_schedule(delta: f64, extra: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = (0..=18).map(|i| i as f64 * 0.05).collect();
    let m = 20;
    let (lo, hi) = (delta.ln(), 0.1f64.ln());
    for j in 0..=m {
        let gap = (hi + (lo - hi) * j as f64 / m as f64).exp();
        out.push(1.0 - gap);
    }
    out.extend_from_slice(extra);
    out.push(1.0 - delta);
    out.retain(|&f| (0.0..=1.0 - delta + 1e-15).contains(&f));
    for f in out.iter_mut() {
        *f = (*f * 1e12).round() / 1e12;
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calabi::Grid;

    fn product_flow(n: usize) -> Flow {
        let p = Profile::fs_model(Grid::new(n).unwrap(), 0.0, 2.0, 6.0).unwrap();
        Flow::new(BundleGeometry::new(0), p, FlowConfig::default()).unwrap()
    }

    fn hirzebruch_flow(n: usize) -> Flow {
        let p = Profile::fs_model(Grid::new(n).unwrap(), 0.0, 2.0, 6.0).unwrap();
        Flow::new(BundleGeometry::new(1), p, FlowConfig::default()).unwrap()
    }

    #[test]
    fn volume_density_is_normalized_and_positive() {
        let flow = hirzebruch_flow(128);
        let grid = flow.initial_profile().grid();
        let omega = flow.volume_density();
        assert!((omega.total(grid) - 1.0).abs() < 1e-12);
        assert!(omega.samples(grid).iter().all(|&w| w > 0.0));

        let g = Grid::new(256).unwrap();
        let reg = (0..256)
            .map(|i| {
                let x = g.x(i);
                0.3 * (x * (1.0 - x)).powi(2)
            })
            .collect();
        let p = Profile::from_parts(g.clone(), 6.0, 0.0, 2.0, reg).unwrap();
        let om = VolumeDensity::for_initial(&p, 1.0);
        assert!((om.total(&g) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn reference_family_endpoints() {
        let flow = hirzebruch_flow(64);
        let r0 = flow.reference_profile(0.0).unwrap();
        assert_eq!(&r0, flow.initial_profile());
        let big_t = flow.singular_time();
        let rt = flow.reference_profile(big_t).unwrap();
        assert_eq!(rt.fiber_area(), 0.0);
        assert_eq!(rt.s(), flow.base_period());
        let rh = flow.reference_profile(big_t / 2.0).unwrap();
        assert!((rh.fiber_area() - 1.0).abs() < 1e-15);
        assert!((rh.fiber_area_quadrature() - 1.0).abs() < 1e-12);
        assert!(matches!(
            flow.reference_profile(1.5 * big_t),
            Err(Error::OutOfWindow { .. })
        ));
    }

    #[test]
    fn initial_rate_is_log_of_volume_ratio() {
        let flow = hirzebruch_flow(64);
        let st = flow.initial_state();
        let rate = flow.rhs(&st).unwrap();
        let m = flow.metric(&st).unwrap();
        let om = flow.volume_density().samples(flow.initial_profile().grid());
        for i in 0..64 {
            let expect = (2.0 * m.h[i] * m.v[i] / om[i]).ln();
            assert!((rate[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn product_rate_is_spatially_constant() {
        let flow = product_flow(64);
        let rate = flow.rhs(&flow.initial_state()).unwrap();
        // ln(2·6·2)
        for r in &rate {
            assert!((r - 24f64.ln()).abs() < 1e-13);
        }
    }

    #[test]
    fn constant_shift_of_potential_is_invisible() {
        let flow = hirzebruch_flow(64);
        let st = flow.step(&flow.initial_state(), 1e-4).unwrap();
        let shifted = flow
            .state_from_potential(st.t, st.phi.iter().map(|p| p + 3.25).collect())
            .unwrap();
        let (r1, r2) = (flow.rhs(&st).unwrap(), flow.rhs(&shifted).unwrap());
        for (a, b) in r1.iter().zip(&r2) {
            assert!((a - b).abs() < 1e-12);
        }
        let (m1, m2) = (flow.metric(&st).unwrap(), flow.metric(&shifted).unwrap());
        for i in 0..64 {
            assert!((m1.h[i] - m2.h[i]).abs() < 1e-12);
            assert!((m1.v[i] - m2.v[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn run_at_zero_returns_initial_profile() {
        let flow = hirzebruch_flow(32);
        let snaps = flow.run(&[0.0]).unwrap();
        assert_eq!(snaps.len(), 1);
        assert_eq!(&snaps[0].profile, flow.initial_profile());
        assert!(snaps[0].phi.iter().all(|&p| p == 0.0));
        let res = flow.class_consistency(&snaps[0]).unwrap();
        assert!(res.max() < 1e-12, "{res:?}");
    }

    #[test]
    fn product_run_follows_closed_form() {
        let flow = product_flow(64);
        let snaps = flow.run(&[0.25, 0.5, 0.9]).unwrap();
        for s in &snaps {
            let f = 2.0 - 2.0 * s.t;
            assert!((s.profile.fiber_area_quadrature() - f).abs() < 1e-10);
            let du = s.profile.slopes();
            for (i, d) in du.iter().enumerate() {
                let exact = f * flow.initial_profile().grid().x(i);
                assert!((d - exact).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn stops_past_the_window_are_rejected() {
        let flow = product_flow(16);
        assert!(matches!(flow.run(&[0.9995]), Err(Error::OutOfWindow { .. })));
        assert!(matches!(flow.run(&[-0.1]), Err(Error::InvalidTime(_))));
    }

    #[test]
    fn step_floor_reports_last_state() {
        let p = Profile::fs_model(Grid::new(32).unwrap(), 0.0, 2.0, 6.0).unwrap();
        let cfg = FlowConfig {
            step_floor: 1.0,
            ..FlowConfig::default()
        };
        let flow = Flow::new(BundleGeometry::new(1), p, cfg).unwrap();
        match flow.run(&[0.5]) {
            Err(Error::StepFloor { last, .. }) => assert_eq!(last.t, 0.0),
            other => panic!("expected step floor, got {other:?}"),
        }
    }

    #[test]
    fn non_collapsing_class_rejected() {
        // c0 = 1 with k = 0: the section period vanishes first
        let p = Profile::fs_model(Grid::new(16).unwrap(), 0.0, 2.0, 1.0).unwrap();
        assert!(matches!(
            Flow::new(BundleGeometry::new(0), p, FlowConfig::default()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn schedule_is_sorted_and_inside_window() {
        let s = default_schedule(1e-3, &[0.5, 0.8, 0.95, 0.99]);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s[0], 0.0);
        assert!((s.last().unwrap() - 0.999).abs() < 1e-12);
        let in_window = s.iter().filter(|&&f| f >= 0.9 && f <= 0.999).count();
        assert!(in_window >= 8);
        assert!(s.contains(&0.99));
    }
}
