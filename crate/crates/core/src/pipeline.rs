//! Scenario execution: flow run, monitor sweep, GH schedule, run-level
//! invariant checks and artifact emission.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::estimates::{monitor_series, DecayFit, MonitorSeries};
use crate::flow::{Flow, FlowState};
use crate::fsgeom::{lemma_suite, LemmaRecord};
use crate::geometry::class_volume;
use crate::metricspace::{
    base_labels, default_base_points, default_samples, equicontinuity_ratio, gh_epsilon,
    limit_distance, sandwich_check, section_lift, triangle_audit, Correspondence,
    FiniteMetricSpace, GhReport, GraphMetric, LimitReport, Resolution, Sandwich,
};
use crate::scenario::Scenario;
use crate::{output, plot, Error, Result};

/// Class conservation tolerances, checked for `t ≤ 0.95·T`.
pub const FIBER_AREA_TOLERANCE: f64 = 2e-3;
pub const VOLUME_TOLERANCE: f64 = 1e-3;
pub const CONSERVATION_HORIZON: f64 = 0.95;
pub const TRIANGLE_SLACK: f64 = 1e-9;

/// Lemma suite shape used by the `fslemma` stage.
pub const LEMMA_MATRICES: usize = 200;
pub const LEMMA_RANKS: [usize; 4] = [2, 3, 4, 5];
pub const LEMMA_SAMPLES: usize = 1000;

/// One row of `run_summary.csv`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SummaryRow {
    pub t: f64,
    pub fiber_area: f64,
    pub section_area: f64,
    pub volume: f64,
    pub min_v: f64,
    pub max_phi: f64,
    pub dt_last: f64,
}

/// One row of `gh.csv`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GhRow {
    pub t: f64,
    pub epsilon: f64,
    pub max_fiber_diam: f64,
    /// Larger of the two distortion terms of the correspondence.
    pub distortion: f64,
    pub sqrt_c: f64,
    pub c2: f64,
    /// `sup |d_t − d_{t_prev}|` against the previous GH time.
    pub cauchy_sup: Option<f64>,
    pub report: GhReport,
}

#[derive(Clone, Debug)]
pub struct GhAnalysis {
    pub resolution: Resolution,
    pub rows: Vec<GhRow>,
    /// Spaces at the GH times followed by the final time.
    pub spaces: Vec<FiniteMetricSpace>,
    pub initial: FiniteMetricSpace,
    /// `c_B·ω_Σ` on the base samples.
    pub base: FiniteMetricSpace,
    pub limit: LimitReport,
    pub limit_sandwich: Sandwich,
    /// Diameter of `d_{B,∞}` on the base samples.
    pub base_diameter: f64,
    pub triangle_worst: f64,
    pub equicontinuity: f64,
    /// Wall time per GH time (graph build, distances, fiber diameters).
    pub seconds: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub scenario: Scenario,
    pub t_sing: f64,
    pub c_base: f64,
    pub snapshots: Vec<FlowState>,
    pub summary: Vec<SummaryRow>,
    pub monitors: MonitorSeries,
    pub fit: Option<DecayFit>,
    pub gh: Option<GhAnalysis>,
    pub flow_seconds: f64,
    /// Named run invariants that failed.
    pub failures: Vec<String>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Snapshot closest to `t` (exact schedule times are hit by the run).
pub fn snapshot_at(snapshots: &[FlowState], t: f64) -> Result<&FlowState> {
    snapshots
        .iter()
        .find(|s| (s.t - t).abs() <= 1e-9 * t.abs().max(1.0))
        .ok_or_else(|| Error::Validation(format!("no snapshot at t = {t}")))
}

pub fn simulate(s: &Scenario) -> Result<(Flow, Vec<FlowState>)> {
    s.validate()?;
    let flow = s.flow()?;
    let t_sing = flow.singular_time();
    let stops: Vec<f64> = s.snapshot_fractions().iter().map(|f| f * t_sing).collect();
    let snapshots = flow.run(&stops)?;
    Ok((flow, snapshots))
}

pub fn summarize(flow: &Flow, snapshots: &[FlowState]) -> Result<Vec<SummaryRow>> {
    let geom = flow.geometry();
    snapshots
        .iter()
        .map(|s| {
            let p = &s.profile;
            let (a_fit, _) = p.fitted_slopes();
            Ok(SummaryRow {
                t: s.t,
                fiber_area: p.fiber_area_quadrature(),
                section_area: p.s() + geom.kf() * a_fit,
                volume: p.volume_quadrature(geom),
                min_v: flow.metric(s)?.min_v(),
                max_phi: s.max_abs_phi(),
                dt_last: s.dt_last,
            })
        })
        .collect()
}

/// Fiber area and relative volume errors against the class trajectory over
/// `t ≤ horizon·T`.
pub fn conservation_errors(flow: &Flow, snapshots: &[FlowState], horizon: f64) -> Result<(f64, f64)> {
    let geom = flow.geometry();
    let t_sing = flow.singular_time();
    let mut fiber: f64 = 0.0;
    let mut volume: f64 = 0.0;
    for s in snapshots.iter().filter(|s| s.t <= horizon * t_sing + 1e-12) {
        let class = flow.path().class_at(geom, s.t)?;
        fiber = fiber.max((s.profile.fiber_area_quadrature() - class.fiber).abs());
        let exact = class_volume(class, geom);
        volume = volume.max((s.profile.volume_quadrature(geom) - exact).abs() / exact);
    }
    Ok((fiber, volume))
}

/// GH schedule: graph spaces at the GH times and the final snapshot, the
/// limit estimate, correspondences, sandwich constants and audits.
pub fn gh_analysis(
    s: &Scenario,
    flow: &Flow,
    snapshots: &[FlowState],
    trace_bound: f64,
) -> Result<GhAnalysis> {
    let geom = flow.geometry();
    let t_sing = flow.singular_time();
    let res = Resolution::uniform(s.gh_resolution);
    let labels = default_samples(res);
    let lift = section_lift(res);
    let build = |state: &FlowState| -> Result<(GraphMetric, FiniteMetricSpace)> {
        let g = GraphMetric::from_profile(&state.profile, geom, res)?;
        let space = g.space(state.t, &labels)?;
        Ok((g, space))
    };

    let mut spaces = Vec::new();
    let mut fiber_diams = Vec::new();
    let mut seconds = Vec::new();
    for &frac in &s.gh_times {
        let start = Instant::now();
        let state = snapshot_at(snapshots, frac * t_sing)?;
        let (g, space) = build(state)?;
        // rotating φ is a graph automorphism, so one base point per latitude
        let mut points = default_base_points(res.base);
        points.sort_by_key(|p| p.0);
        points.dedup_by_key(|p| p.0);
        let diam = points
            .into_iter()
            .map(|b| g.fiber_diameter(b))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        spaces.push(space);
        fiber_diams.push(diam);
        seconds.push(start.elapsed().as_secs_f64());
    }
    let final_state = snapshots
        .last()
        .ok_or(Error::InsufficientSnapshots { needed: 1, found: 0 })?;
    if spaces.last().is_none_or(|sp| sp.t < final_state.t) {
        spaces.push(build(final_state)?.1);
    }
    let initial = build(&snapshots[0])?.1;
    let limit = limit_distance(&spaces, lift)?;

    let base_graph = GraphMetric::base_sphere(flow.base_period(), res.base)?;
    let base = base_graph.space(t_sing, &base_labels(&limit.limit))?;
    let limit_sandwich = sandwich_check(&limit.limit, &base)?;

    let mut rows = Vec::with_capacity(s.gh_times.len());
    for (i, diam) in fiber_diams.iter().enumerate() {
        let space = &spaces[i];
        let corr = Correspondence::projection(space, &limit.base_limit, lift)?;
        let report = gh_epsilon(space, &limit.base_limit, &corr)?;
        let sandwich = sandwich_check(space, &base)?;
        rows.push(GhRow {
            t: space.t,
            epsilon: report.epsilon,
            max_fiber_diam: *diam,
            distortion: report.distortion_x.max(report.distortion_b),
            sqrt_c: sandwich.sqrt_c,
            c2: sandwich.c2,
            cauchy_sup: (i > 0).then(|| crate::metricspace::sup_difference(&spaces[i - 1], space)),
            report,
        });
    }

    let mut triangle_worst = triangle_audit(&initial).max(triangle_audit(&base));
    triangle_worst = triangle_worst.max(triangle_audit(&limit.base_limit));
    let mut equicontinuity: f64 = 0.0;
    for space in &spaces {
        triangle_worst = triangle_worst.max(triangle_audit(space));
        equicontinuity = equicontinuity.max(equicontinuity_ratio(space, &initial, trace_bound)?);
    }
    Ok(GhAnalysis {
        resolution: res,
        rows,
        base_diameter: limit.base_limit.diameter(),
        spaces,
        initial,
        base,
        limit,
        limit_sandwich,
        triangle_worst,
        equicontinuity,
        seconds,
    })
}

/// Runs every stage of a scenario without touching the filesystem.
pub fn execute(s: &Scenario) -> Result<RunOutcome> {
    let start = Instant::now();
    let (flow, snapshots) = simulate(s)?;
    let flow_seconds = start.elapsed().as_secs_f64();
    let t_sing = flow.singular_time();
    let summary = summarize(&flow, &snapshots)?;
    let data = s.split_data()?;
    let monitors = monitor_series(&flow, &snapshots, &data, s.monitor_base, s.monitor_fiber)?;
    let mut failures = Vec::new();

    let fit = match monitors.fit(t_sing, s.fit_window) {
        Ok(f) => Some(f),
        Err(e) => {
            failures.push(format!("decay fit: {e}"));
            None
        }
    };
    let (fiber_err, volume_err) = conservation_errors(&flow, &snapshots, CONSERVATION_HORIZON)?;
    if fiber_err > FIBER_AREA_TOLERANCE {
        failures.push(format!("fiber-area conservation: error {fiber_err:e} > {FIBER_AREA_TOLERANCE:e}"));
    }
    if volume_err > VOLUME_TOLERANCE {
        failures.push(format!("volume conservation: relative error {volume_err:e} > {VOLUME_TOLERANCE:e}"));
    }
    if let Some(row) = monitors.rows.iter().find(|r| !(r.schwarz_inf > 0.0)) {
        failures.push(format!("schwarz lower bound: infimum {} at t = {}", row.schwarz_inf, row.t));
    }
    if let Ok(half) = snapshot_at(&snapshots, 0.5 * t_sing) {
        let reference = half.max_abs_phi();
        let worst = snapshots.iter().map(FlowState::max_abs_phi).fold(0.0, f64::max);
        if worst > 10.0 * reference {
            failures.push(format!("potential bound: max |φ| = {worst} exceeds 10× {reference}"));
        }
    }

    let trace_bound = monitors.rows.iter().map(|r| r.trace_sup).fold(0.0, f64::max);
    let gh = if s.gh_times.is_empty() {
        None
    } else {
        let gh = gh_analysis(s, &flow, &snapshots, trace_bound)?;
        if gh.triangle_worst > TRIANGLE_SLACK {
            failures.push(format!("triangle inequality: violation {:e}", gh.triangle_worst));
        }
        if !gh.limit_sandwich.passes() || gh.rows.iter().any(|r| !(r.sqrt_c > 0.0 && r.sqrt_c <= r.c2)) {
            failures.push("sandwich bounds: 0 < √c ≤ C₂ < ∞ violated".into());
        }
        if gh.equicontinuity > 1.0 + 1e-9 {
            failures.push(format!("equicontinuity: ratio {} > 1", gh.equicontinuity));
        }
        Some(gh)
    };

    Ok(RunOutcome {
        scenario: s.clone(),
        t_sing,
        c_base: flow.base_period(),
        snapshots,
        summary,
        monitors,
        fit,
        gh,
        flow_seconds,
        failures,
    })
}

/// Writes every table and plot of an outcome into `dir`.
pub fn write_artifacts(outcome: &RunOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    output::ensure_dir(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };
    output::write_text(&put("scenario.ini"), &outcome.scenario.to_ini())?;
    output::write_run_summary(&put("run_summary.csv"), &outcome.summary)?;
    output::write_monitors(&put("monitors.csv"), &outcome.monitors.rows)?;
    if let Some(fit) = &outcome.fit {
        output::write_fit(&put("fit.csv"), fit)?;
    }
    let svg = plot::diameter_plot(
        &outcome.monitors.times(),
        &outcome.monitors.fiber_diameters(),
        outcome.t_sing,
        outcome.fit.as_ref(),
    );
    output::write_text(&put("diameter.svg"), &svg)?;
    if let Some(gh) = &outcome.gh {
        output::write_gh(&put("gh.csv"), &gh.rows)?;
        output::write_text(&put("gh.svg"), &plot::gh_plot(&gh.rows, outcome.t_sing))?;
    }
    written.extend(output::write_profiles(dir, &outcome.snapshots)?);
    Ok(written)
}

/// Output directory: the explicit one, else the scenario's, else
/// `runs/<name>`.
pub fn output_dir(s: &Scenario, explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| s.out.clone())
        .unwrap_or_else(|| Path::new("runs").join(&s.name))
}

pub fn run_scenario(s: &Scenario, dir: &Path) -> Result<RunOutcome> {
    let outcome = execute(s)?;
    write_artifacts(&outcome, dir)?;
    Ok(outcome)
}

/// Independent scenarios run concurrently, each into `root/<name>`.
pub fn sweep(scenarios: &[Scenario], root: &Path) -> Vec<(String, Result<RunOutcome>)> {
    scenarios
        .par_iter()
        .map(|s| (s.name.clone(), run_scenario(s, &root.join(&s.name))))
        .collect()
}

pub fn fslemma(seed: u64) -> Result<Vec<LemmaRecord>> {
    lemma_suite(LEMMA_MATRICES, &LEMMA_RANKS, LEMMA_SAMPLES, seed)
}
