//! Sampled metric geometry of `(X, ω(t))` by graph geodesics.
//!
//! Nodes sit on a product grid: polar angle `ϑ` (poles included) and
//! azimuth `φ` on the base, and `χ` (poles included) and `θ` on the fiber,
//! with `x = (1 − cos χ)/2`. The line element is
//!
//! ```text
//! 4π·ds² = h·(dϑ² + sin²ϑ dφ²) + q·(dχ² + sin²χ·(dθ + k·sin²(ϑ/2)·dφ)²),
//! ```
//!
//! with `h = s + k·u′` and `q = u″/(x(1−x))` read off the profile. Edges join
//! every node to its 80 king-move neighbours and 48 knight-move neighbours;
//! the knight moves let paths follow the twisted gauge at the south pole for
//! `k ≤ 2`. Edge lengths use the metric at the segment midpoint.
//!
//! The metric does not depend on `φ` or `θ`, so shifting both periodic
//! indices is a graph automorphism. Distances are computed from one
//! canonical source per `(ϑ, χ)` class and rotated.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;

use rayon::prelude::*;

use crate::calabi::Profile;
use crate::geometry::BundleGeometry;
use crate::{Error, Result};

pub const DEFAULT_RESOLUTION: usize = 15;
pub const MIN_RESOLUTION: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Resolution {
    /// Nodes along `ϑ` and along `φ`.
    pub base: usize,
    /// Nodes along `χ` and along `θ`; 1 collapses the fiber to a point.
    pub fiber: usize,
}

impl Resolution {
    pub const fn uniform(n: usize) -> Self {
        Resolution { base: n, fiber: n }
    }

    pub const fn collapsed(base: usize) -> Self {
        Resolution { base, fiber: 1 }
    }

    fn validate(&self, k: u32) -> Result<()> {
        if self.base < MIN_RESOLUTION {
            return Err(Error::Validation(format!(
                "base resolution {} is below {MIN_RESOLUTION}",
                self.base
            )));
        }
        if self.fiber != 1 && self.fiber < MIN_RESOLUTION {
            return Err(Error::Validation(format!(
                "fiber resolution {} must be 1 or at least {MIN_RESOLUTION}",
                self.fiber
            )));
        }
        if self.fiber > 1 && k > 0 && self.fiber != self.base {
            return Err(Error::Validation(
                "twisted bundles need equal base and fiber resolution".into(),
            ));
        }
        if self.fiber > 1 && k > 2 {
            return Err(Error::Validation(format!(
                "the stencil follows the south-pole gauge only for k ≤ 2 (k = {k})"
            )));
        }
        Ok(())
    }
}

/// Grid coordinates of a node: `(ϑ, φ, χ, θ)` indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeIndex {
    pub polar: usize,
    pub azimuth: usize,
    pub chi: usize,
    pub angle: usize,
}

/// Label of a sampled point: a base node and, unless the space is the base
/// itself, a fiber node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SampleLabel {
    pub base: (usize, usize),
    pub fiber: Option<(usize, usize)>,
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: u32,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Reach of the full stencil: every offset with entries in
/// `−STENCIL_REACH..=STENCIL_REACH`.
pub const STENCIL_REACH: i32 = 2;
/// Reach of the extra moves confined to a coordinate plane.
pub const PLANAR_REACH: i32 = 3;

/// Angle between `(ϑ₁, φ₁)` and `(ϑ₂, φ₂)` on the unit sphere (haversine).
fn sphere_angle(polar_a: f64, polar_b: f64, dazimuth: f64) -> f64 {
    let hav = (0.5 * (polar_b - polar_a)).sin().powi(2)
        + polar_a.sin() * polar_b.sin() * (0.5 * dazimuth).sin().powi(2);
    2.0 * hav.clamp(0.0, 1.0).sqrt().asin()
}

/// Offsets of reach `STENCIL_REACH` in the active axes, plus planar offsets
/// of reach `PLANAR_REACH`. Non-primitive offsets are kept because edge
/// lengths are chord lengths, not sums along coordinate lines.
fn stencil(fiber_moves: bool) -> Vec<[i32; 4]> {
    let axes = if fiber_moves { 4 } else { 2 };
    let width = (2 * STENCIL_REACH + 1) as usize;
    let mut out = Vec::new();
    for code in 0..width.pow(axes as u32) {
        let mut d = [0i32; 4];
        let mut c = code;
        for slot in d.iter_mut().take(axes) {
            *slot = (c % width) as i32 - STENCIL_REACH;
            c /= width;
        }
        if d.iter().any(|&v| v != 0) {
            out.push(d);
        }
    }
    for a in 0..axes {
        for b in a + 1..axes {
            for da in -PLANAR_REACH..=PLANAR_REACH {
                for db in -PLANAR_REACH..=PLANAR_REACH {
                    if da.abs().max(db.abs()) <= STENCIL_REACH {
                        continue;
                    }
                    let mut m = [0i32; 4];
                    m[a] = da;
                    m[b] = db;
                    out.push(m);
                }
            }
        }
    }
    out
}

/// Implicit weighted graph on the product grid.
#[derive(Clone, Debug)]
pub struct GraphMetric {
    res: Resolution,
    /// Out-edges of every `(ϑ index, χ index)` class, flattened.
    edges: Vec<Edge>,
    /// `edges[rows[c]..rows[c + 1]]` belong to class `c = i·fiber + l`.
    rows: Vec<usize>,
}

/// A move from any node of its class.
#[derive(Clone, Copy, Debug)]
struct Edge {
    /// Change of the flat node index before periodic wrapping.
    shift: i64,
    azimuth: i32,
    angle: i32,
    len: f64,
}

impl GraphMetric {
    /// Graph for the symmetric metric `(h(x), q(x))` with twist `k`.
    pub fn from_coefficients<F>(res: Resolution, k: u32, coeff: F) -> Result<Self>
    where
        F: Fn(f64) -> (f64, f64),
    {
        res.validate(k)?;
        let nb = res.base;
        let nf = res.fiber;
        let fiber_moves = nf > 1;
        let stencil = stencil(fiber_moves);
        let dpolar = PI / (nb - 1) as f64;
        let dazimuth = 2.0 * PI / nb as f64;
        let (dchi, dangle) = if fiber_moves {
            (PI / (nf - 1) as f64, 2.0 * PI / nf as f64)
        } else {
            (0.0, 0.0)
        };
        let kf = k as f64;
        let s = stencil.len();
        let mut weights = vec![f64::NAN; nb * nf * s];
        let mut cache: HashMap<u64, (f64, f64)> = HashMap::new();
        let mut metric_at = |chi: f64| -> Result<(f64, f64)> {
            let x = 0.5 * (1.0 - chi.cos());
            let entry = *cache.entry(x.to_bits()).or_insert_with(|| coeff(x));
            let (h, q) = entry;
            if !(h > 0.0 && q > 0.0 && h.is_finite() && q.is_finite()) {
                return Err(Error::PositivityLoss {
                    node: (chi / PI * 1e6) as usize,
                    h,
                    v: x * (1.0 - x) * q,
                });
            }
            Ok(entry)
        };
        for i in 0..nb {
            for l in 0..nf {
                for (slot, d) in stencil.iter().enumerate() {
                    let i2 = i as i64 + d[0] as i64;
                    let l2 = l as i64 + d[2] as i64;
                    if i2 < 0 || i2 >= nb as i64 || l2 < 0 || l2 >= nf as i64 {
                        continue;
                    }
                    // frozen-coefficient chord: Simpson means of h, q and the
                    // twist along the segment, then the product-of-spheres distance
                    let polar0 = dpolar * i as f64;
                    let a = dpolar * d[0] as f64;
                    let b = dazimuth * d[1] as f64;
                    let chi0 = dchi * l as f64;
                    let c = dchi * d[2] as f64;
                    let pieces = 2 * d.iter().map(|v| v.abs()).max().unwrap_or(1) as usize;
                    let (mut hm, mut qm, mut tw) = (0.0, 0.0, 0.0);
                    for p in 0..=pieces {
                        let w = if p == 0 || p == pieces {
                            1.0
                        } else if p % 2 == 1 {
                            4.0
                        } else {
                            2.0
                        };
                        let frac = p as f64 / pieces as f64;
                        // the collapsed fiber keeps the horizontal part at ρ = 0
                        let chi = if fiber_moves { chi0 + frac * c } else { 0.5 * PI };
                        let (h, q) = metric_at(chi)?;
                        hm += w * h;
                        qm += w * q;
                        tw += w * (0.5 * (polar0 + frac * a)).sin().powi(2);
                    }
                    let norm = 3.0 * pieces as f64;
                    let (hm, qm, tw) = (hm / norm, qm / norm, tw / norm);
                    let base = sphere_angle(polar0, polar0 + a, b);
                    let mut len2 = hm * base * base;
                    if fiber_moves {
                        let fiber = sphere_angle(chi0, chi0 + c, dangle * d[3] as f64 + kf * tw * b);
                        len2 += qm * fiber * fiber;
                    }
                    let len = len2.sqrt();
                    weights[(i * nf + l) * s + slot] = len / (4.0 * PI).sqrt();
                }
            }
        }
        let (stride_j, stride_i) = ((nf * nf) as i64, (nb * nf * nf) as i64);
        let mut edges = Vec::new();
        let mut rows = vec![0];
        for class in 0..nb * nf {
            for (slot, d) in stencil.iter().enumerate() {
                let len = weights[class * s + slot];
                if len.is_nan() {
                    continue;
                }
                edges.push(Edge {
                    shift: d[0] as i64 * stride_i
                        + d[1] as i64 * stride_j
                        + d[2] as i64 * nf as i64
                        + d[3] as i64,
                    azimuth: d[1],
                    angle: d[3],
                    len,
                });
            }
            rows.push(edges.len());
        }
        Ok(GraphMetric { res, edges, rows })
    }

    /// Graph of `(X, ω)` for a profile.
    pub fn from_profile(profile: &Profile, geom: &BundleGeometry, res: Resolution) -> Result<Self> {
        let slopes = profile.slopes();
        let density = profile.fiber_density();
        let k = geom.kf();
        let s = profile.s();
        GraphMetric::from_coefficients(res, geom.k(), |x| {
            let (p, q) = profile.sample_at(x, &slopes, &density);
            (s + k * p, q)
        })
    }

    /// Graph of the round base `c·ω_Σ`.
    pub fn base_sphere(c: f64, base: usize) -> Result<Self> {
        GraphMetric::from_coefficients(Resolution::collapsed(base), 0, |_| (c, 1.0))
    }

    pub fn resolution(&self) -> Resolution {
        self.res
    }

    pub fn node_count(&self) -> usize {
        let Resolution { base, fiber } = self.res;
        base * base * fiber * fiber
    }

    pub fn index(&self, n: NodeIndex) -> usize {
        let Resolution { base, fiber } = self.res;
        ((n.polar * base + n.azimuth) * fiber + n.chi) * fiber + n.angle
    }

    pub fn node(&self, idx: usize) -> NodeIndex {
        let Resolution { base, fiber } = self.res;
        let angle = idx % fiber;
        let rest = idx / fiber;
        let chi = rest % fiber;
        let rest = rest / fiber;
        NodeIndex {
            polar: rest / base,
            azimuth: rest % base,
            chi,
            angle,
        }
    }

    pub fn label_node(&self, label: &SampleLabel) -> Result<NodeIndex> {
        let Resolution { base, fiber } = self.res;
        let (i, j) = label.base;
        if i >= base || j >= base {
            return Err(Error::UnknownBasePoint(i, j));
        }
        let (l, m) = label.fiber.unwrap_or((0, 0));
        if l >= fiber || m >= fiber {
            return Err(Error::InvalidPoint(format!("fiber node ({l}, {m}) is off the grid")));
        }
        Ok(NodeIndex {
            polar: i,
            azimuth: j,
            chi: l,
            angle: m,
        })
    }

    /// Dijkstra from one node; stops once every target is settled (all
    /// nodes when `targets` is empty).
    pub fn shortest_paths(&self, source: usize, targets: &[usize]) -> Vec<f64> {
        let n = self.node_count();
        let Resolution { base, fiber } = self.res;
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        let mut is_target = vec![false; if targets.is_empty() { 0 } else { n }];
        for &t in targets {
            is_target[t] = true;
        }
        let mut remaining = targets.len();
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapEntry {
            dist: 0.0,
            node: source as u32,
        });
        let (bi, fi) = (base as i32, fiber as i32);
        let wrap_j = (base * fiber * fiber) as i64;
        let wrap_m = fiber as i64;
        while let Some(HeapEntry { dist: d, node }) = heap.pop() {
            let u = node as usize;
            if done[u] {
                continue;
            }
            done[u] = true;
            if !targets.is_empty() && is_target[u] {
                remaining -= 1;
                if remaining == 0 {
                    break;
                }
            }
            let NodeIndex {
                polar,
                azimuth,
                chi,
                angle,
            } = self.node(u);
            let class = polar * fiber + chi;
            for e in &self.edges[self.rows[class]..self.rows[class + 1]] {
                let mut v = u as i64 + e.shift;
                let j2 = azimuth as i32 + e.azimuth;
                if j2 < 0 {
                    v += wrap_j;
                } else if j2 >= bi {
                    v -= wrap_j;
                }
                let m2 = angle as i32 + e.angle;
                if m2 < 0 {
                    v += wrap_m;
                } else if m2 >= fi {
                    v -= wrap_m;
                }
                let v = v as usize;
                let nd = d + e.len;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(HeapEntry {
                        dist: nd,
                        node: v as u32,
                    });
                }
            }
        }
        dist
    }

    /// Node index after rotating by `(−j0, −m0)` in the periodic directions.
    fn rotate(&self, n: NodeIndex, j0: usize, m0: usize) -> usize {
        let Resolution { base, fiber } = self.res;
        self.index(NodeIndex {
            azimuth: (n.azimuth + base - j0) % base,
            angle: (n.angle + fiber - m0) % fiber,
            ..n
        })
    }

    /// Pairwise distances between labelled samples, symmetrized by `min`.
    pub fn space(&self, t: f64, labels: &[SampleLabel]) -> Result<FiniteMetricSpace> {
        let nodes: Vec<NodeIndex> = labels
            .iter()
            .map(|l| self.label_node(l))
            .collect::<Result<_>>()?;
        let mut keys: Vec<(usize, usize)> = nodes.iter().map(|n| (n.polar, n.chi)).collect();
        keys.sort();
        keys.dedup();
        // one search per (ϑ, χ) class, run concurrently on the shared graph
        let canonical: HashMap<(usize, usize), Vec<f64>> = keys
            .par_iter()
            .map(|&key| {
                let src = self.index(NodeIndex {
                    polar: key.0,
                    azimuth: 0,
                    chi: key.1,
                    angle: 0,
                });
                // every target, seen from the canonical source
                let mut targets: Vec<usize> = Vec::new();
                for a in nodes.iter().filter(|n| (n.polar, n.chi) == key) {
                    for b in &nodes {
                        targets.push(self.rotate(*b, a.azimuth, a.angle));
                    }
                }
                targets.sort_unstable();
                targets.dedup();
                (key, self.shortest_paths(src, &targets))
            })
            .collect();
        let m = nodes.len();
        let mut dist = vec![vec![0.0; m]; m];
        for (a, na) in nodes.iter().enumerate() {
            let field = &canonical[&(na.polar, na.chi)];
            for (b, nb) in nodes.iter().enumerate() {
                dist[a][b] = field[self.rotate(*nb, na.azimuth, na.angle)];
            }
        }
        for a in 0..m {
            dist[a][a] = 0.0;
            for b in 0..a {
                let d = dist[a][b].min(dist[b][a]);
                dist[a][b] = d;
                dist[b][a] = d;
            }
        }
        Ok(FiniteMetricSpace {
            t,
            labels: labels.to_vec(),
            dist,
        })
    }

    /// Largest graph distance between two nodes of the fiber over a base
    /// node; paths may leave the fiber.
    pub fn fiber_diameter(&self, base: (usize, usize)) -> Result<f64> {
        let Resolution { base: nb, fiber } = self.res;
        if base.0 >= nb || base.1 >= nb {
            return Err(Error::UnknownBasePoint(base.0, base.1));
        }
        if fiber == 1 {
            return Ok(0.0);
        }
        let all: Vec<usize> = (0..fiber)
            .flat_map(|l| (0..fiber).map(move |m| (l, m)))
            .map(|(l, m)| {
                self.index(NodeIndex {
                    polar: base.0,
                    azimuth: base.1,
                    chi: l,
                    angle: m,
                })
            })
            .collect();
        let mut diam: f64 = 0.0;
        // rotating θ maps the fiber to itself, so sources at θ index 0 suffice
        for l in 0..fiber {
            let src = self.index(NodeIndex {
                polar: base.0,
                azimuth: base.1,
                chi: l,
                angle: 0,
            });
            let d = self.shortest_paths(src, &all);
            diam = all.iter().map(|&v| d[v]).fold(diam, f64::max);
        }
        Ok(diam)
    }
}

/// Sampled points with their pairwise distances.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMetricSpace {
    pub t: f64,
    pub labels: Vec<SampleLabel>,
    pub dist: Vec<Vec<f64>>,
}

impl FiniteMetricSpace {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().flatten().copied().fold(0.0, f64::max)
    }

    fn same_samples(&self, other: &FiniteMetricSpace) -> Result<()> {
        if self.labels != other.labels {
            return Err(Error::SampleMismatch(format!(
                "spaces at t = {} and t = {} use different samples",
                self.t, other.t
            )));
        }
        Ok(())
    }
}

/// Sup of the triangle-inequality violations, symmetry defects and diagonal
/// entries; a metric gives a value ≤ 0 (up to the audit slack).
pub fn triangle_audit(space: &FiniteMetricSpace) -> f64 {
    let d = &space.dist;
    let m = d.len();
    let mut worst = f64::NEG_INFINITY;
    for a in 0..m {
        worst = worst.max(d[a][a].abs());
        for b in 0..m {
            worst = worst.max((d[a][b] - d[b][a]).abs());
            for c in 0..m {
                worst = worst.max(d[a][c] - d[a][b] - d[b][c]);
            }
        }
    }
    worst
}

/// `max |d_t(x,y) − d_t(x′,y′)| / (√C·(d₀(x,x′) + d₀(y,y′)))` over all
/// sample quadruples with a positive denominator.
pub fn equicontinuity_ratio(
    space: &FiniteMetricSpace,
    initial: &FiniteMetricSpace,
    trace_bound: f64,
) -> Result<f64> {
    space.same_samples(initial)?;
    let (d, d0) = (&space.dist, &initial.dist);
    let m = d.len();
    let root_c = trace_bound.sqrt();
    let mut worst: f64 = 0.0;
    for x in 0..m {
        for x2 in 0..m {
            for y in 0..m {
                for y2 in 0..m {
                    let denom = root_c * (d0[x][x2] + d0[y][y2]);
                    if denom > 0.0 {
                        worst = worst.max((d[x][y] - d[x2][y2]).abs() / denom);
                    }
                }
            }
        }
    }
    Ok(worst)
}

/// The default 32 samples: 8 base nodes (both poles, four equator points,
/// two mid-latitudes) times 4 fiber nodes (both fiber poles and two points
/// on the `ρ = 0` circle, the first of which is the lift used for `G`).
pub fn default_samples(res: Resolution) -> Vec<SampleLabel> {
    let bases = default_base_points(res.base);
    let fibers = if res.fiber == 1 {
        vec![None]
    } else {
        default_fiber_points(res.fiber).into_iter().map(Some).collect()
    };
    bases
        .iter()
        .flat_map(|&b| fibers.iter().map(move |&f| SampleLabel { base: b, fiber: f }))
        .collect()
}

pub fn default_base_points(nb: usize) -> Vec<(usize, usize)> {
    let eq = (nb - 1) / 2;
    vec![
        (0, 0),
        (nb - 1, 0),
        (eq, 0),
        (eq, nb / 4),
        (eq, nb / 2),
        (eq, (3 * nb) / 4),
        (eq / 2, nb / 2),
        (eq + (nb - 1 - eq) / 2, nb / 4),
    ]
}

pub fn default_fiber_points(nf: usize) -> Vec<(usize, usize)> {
    let eq = (nf - 1) / 2;
    vec![(0, 0), (nf - 1, 0), (eq, 0), (eq, nf / 2)]
}

/// The fiber node used for the lift `G`: `ρ = 0`, `θ = 0`.
pub fn section_lift(res: Resolution) -> Option<(usize, usize)> {
    (res.fiber > 1).then_some(((res.fiber - 1) / 2, 0))
}

/// Base samples of `space`, in first-appearance order.
pub fn base_labels(space: &FiniteMetricSpace) -> Vec<SampleLabel> {
    let mut seen = Vec::new();
    for l in &space.labels {
        let b = SampleLabel {
            base: l.base,
            fiber: None,
        };
        if !seen.contains(&b) {
            seen.push(b);
        }
    }
    seen
}

/// Maps `F = π` and `G` = section lift between sample sets.
#[derive(Clone, Debug, PartialEq)]
pub struct Correspondence {
    /// For each sample of `X`, its base sample.
    pub forward: Vec<usize>,
    /// For each base sample, a sample of `X` above it.
    pub backward: Vec<usize>,
}

impl Correspondence {
    pub fn validate(&self, x_len: usize, b_len: usize) -> Result<()> {
        if self.forward.len() != x_len || self.backward.len() != b_len {
            return Err(Error::SampleMismatch("correspondence sizes do not match".into()));
        }
        if self.forward.iter().any(|&p| p >= b_len) || self.backward.iter().any(|&x| x >= x_len) {
            return Err(Error::SampleMismatch("correspondence index out of range".into()));
        }
        for (p, &x) in self.backward.iter().enumerate() {
            if self.forward[x] != p {
                return Err(Error::SampleMismatch(format!("F∘G moves base sample {p}")));
            }
        }
        Ok(())
    }

    /// Projection and the lift through the given fiber node.
    pub fn projection(
        space_x: &FiniteMetricSpace,
        space_b: &FiniteMetricSpace,
        lift: Option<(usize, usize)>,
    ) -> Result<Self> {
        let forward = space_x
            .labels
            .iter()
            .map(|l| {
                space_b
                    .labels
                    .iter()
                    .position(|b| b.base == l.base)
                    .ok_or_else(|| Error::SampleMismatch(format!("no base sample under {:?}", l.base)))
            })
            .collect::<Result<Vec<_>>>()?;
        let backward = space_b
            .labels
            .iter()
            .map(|b| {
                space_x
                    .labels
                    .iter()
                    .position(|l| l.base == b.base && l.fiber == lift)
                    .ok_or_else(|| Error::SampleMismatch(format!("no lift of {:?}", b.base)))
            })
            .collect::<Result<Vec<_>>>()?;
        let c = Correspondence { forward, backward };
        c.validate(space_x.len(), space_b.len())?;
        Ok(c)
    }

    pub fn identity(n: usize) -> Self {
        Correspondence {
            forward: (0..n).collect(),
            backward: (0..n).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GhReport {
    pub epsilon: f64,
    /// `sup |d_X(x₁,x₂) − d_B(Fx₁,Fx₂)|`.
    pub distortion_x: f64,
    /// `sup d_X(x, G∘F x)`.
    pub displacement: f64,
    /// `sup |d_B(p₁,p₂) − d_X(Gp₁,Gp₂)|`.
    pub distortion_b: f64,
}

pub fn gh_epsilon(
    space_x: &FiniteMetricSpace,
    space_b: &FiniteMetricSpace,
    corr: &Correspondence,
) -> Result<GhReport> {
    corr.validate(space_x.len(), space_b.len())?;
    let (dx, db) = (&space_x.dist, &space_b.dist);
    let (f, g) = (&corr.forward, &corr.backward);
    let mut distortion_x: f64 = 0.0;
    let mut displacement: f64 = 0.0;
    for a in 0..dx.len() {
        displacement = displacement.max(dx[a][g[f[a]]]);
        for b in 0..dx.len() {
            distortion_x = distortion_x.max((dx[a][b] - db[f[a]][f[b]]).abs());
        }
    }
    let mut distortion_b: f64 = 0.0;
    for p in 0..db.len() {
        for q in 0..db.len() {
            distortion_b = distortion_b.max((db[p][q] - dx[g[p]][g[q]]).abs());
        }
    }
    // d_B(p, F∘G p) vanishes because F∘G is the identity
    Ok(GhReport {
        epsilon: distortion_x.max(displacement).max(distortion_b),
        distortion_x,
        displacement,
        distortion_b,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LimitReport {
    /// `d_∞` on the samples, estimated by the latest space.
    pub limit: FiniteMetricSpace,
    /// `sup |d_{t_i} − d_{t_{i+1}}|` for consecutive pairs.
    pub cauchy: Vec<f64>,
    /// `d_{B,∞}` on base samples through the lift `G`.
    pub base_limit: FiniteMetricSpace,
    /// Largest spread of `d_∞(x̃, ỹ)` over all sampled lifts of a base pair.
    pub lift_spread: f64,
}

pub fn limit_distance(
    spaces: &[FiniteMetricSpace],
    lift: Option<(usize, usize)>,
) -> Result<LimitReport> {
    if spaces.len() < 3 {
        return Err(Error::InsufficientSnapshots {
            needed: 3,
            found: spaces.len(),
        });
    }
    for w in spaces.windows(2) {
        w[0].same_samples(&w[1])?;
        if w[1].t <= w[0].t {
            return Err(Error::Validation("spaces must be ordered by time".into()));
        }
    }
    let cauchy = spaces
        .windows(2)
        .map(|w| sup_difference(&w[0], &w[1]))
        .collect();
    let limit = spaces[spaces.len() - 1].clone();
    let bases = base_labels(&limit);
    let lifted: Vec<usize> = bases
        .iter()
        .map(|b| {
            limit
                .labels
                .iter()
                .position(|l| l.base == b.base && l.fiber == lift)
                .ok_or_else(|| Error::SampleMismatch(format!("no lift of {:?}", b.base)))
        })
        .collect::<Result<_>>()?;
    let dist = lifted
        .iter()
        .map(|&a| lifted.iter().map(|&b| limit.dist[a][b]).collect())
        .collect();
    let mut lift_spread: f64 = 0.0;
    for p in &bases {
        for q in &bases {
            let vals: Vec<f64> = limit
                .labels
                .iter()
                .enumerate()
                .filter(|(_, l)| l.base == p.base)
                .flat_map(|(a, _)| {
                    limit
                        .labels
                        .iter()
                        .enumerate()
                        .filter(|(_, l)| l.base == q.base)
                        .map(move |(b, _)| (a, b))
                })
                .map(|(a, b)| limit.dist[a][b])
                .collect();
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            lift_spread = lift_spread.max(hi - lo);
        }
    }
    Ok(LimitReport {
        base_limit: FiniteMetricSpace {
            t: limit.t,
            labels: bases,
            dist,
        },
        limit,
        cauchy,
        lift_spread,
    })
}

/// `sup |d − d′|` over matched samples.
pub fn sup_difference(a: &FiniteMetricSpace, b: &FiniteMetricSpace) -> f64 {
    a.dist
        .iter()
        .flatten()
        .zip(b.dist.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sandwich {
    /// Best lower constant: `min d/d_B`.
    pub sqrt_c: f64,
    /// Best upper constant: `max d/d_B`.
    pub c2: f64,
}

impl Sandwich {
    pub fn passes(&self) -> bool {
        self.sqrt_c > 0.0 && self.sqrt_c <= self.c2 && self.c2.is_finite()
    }
}

/// Extreme ratios `d(x,y)/d_B(πx,πy)` over sample pairs in distinct fibers.
pub fn sandwich_check(space: &FiniteMetricSpace, base: &FiniteMetricSpace) -> Result<Sandwich> {
    let index: Vec<usize> = space
        .labels
        .iter()
        .map(|l| {
            base.labels
                .iter()
                .position(|b| b.base == l.base)
                .ok_or_else(|| Error::SampleMismatch(format!("no base sample under {:?}", l.base)))
        })
        .collect::<Result<_>>()?;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (a, &pa) in index.iter().enumerate() {
        for (b, &pb) in index.iter().enumerate() {
            let db = base.dist[pa][pb];
            if db > 0.0 {
                let r = space.dist[a][b] / db;
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
    }
    Ok(Sandwich { sqrt_c: lo, c2: hi })
}

/// Great-circle distance on the unit-area round sphere between grid nodes.
pub fn unit_sphere_distance(polar_a: f64, azimuth_a: f64, polar_b: f64, azimuth_b: f64) -> f64 {
    let cos = polar_a.cos() * polar_b.cos()
        + polar_a.sin() * polar_b.sin() * (azimuth_a - azimuth_b).cos();
    cos.clamp(-1.0, 1.0).acos() / (4.0 * PI).sqrt()
}

/// Angles `(ϑ, φ)` of a base node and `(χ, θ)` of a fiber node.
pub fn node_angles(res: Resolution, polar: usize, azimuth: usize) -> (f64, f64) {
    (
        PI * polar as f64 / (res.base - 1) as f64,
        2.0 * PI * azimuth as f64 / res.base as f64,
    )
}

pub fn fiber_angles(res: Resolution, chi: usize, angle: usize) -> (f64, f64) {
    (
        PI * chi as f64 / (res.fiber - 1) as f64,
        2.0 * PI * angle as f64 / res.fiber as f64,
    )
}

/// Space on grid samples with distances given in closed form from the
/// unit-area base and fiber sphere distances `(d_b, d_f)`.
pub fn closed_form_space<F>(t: f64, res: Resolution, labels: &[SampleLabel], dist: F) -> FiniteMetricSpace
where
    F: Fn(f64, f64) -> f64,
{
    let angles = |l: &SampleLabel| {
        let (p, a) = node_angles(res, l.base.0, l.base.1);
        let (c, th) = match l.fiber {
            Some((i, j)) if res.fiber > 1 => fiber_angles(res, i, j),
            _ => (0.0, 0.0),
        };
        (p, a, c, th)
    };
    let d = labels
        .iter()
        .map(|la| {
            let (p1, a1, c1, t1) = angles(la);
            labels
                .iter()
                .map(|lb| {
                    if la == lb {
                        return 0.0;
                    }
                    let (p2, a2, c2, t2) = angles(lb);
                    let sphere = |x1: f64, y1: f64, x2: f64, y2: f64| {
                        sphere_angle(x1, x2, y2 - y1) / (4.0 * PI).sqrt()
                    };
                    dist(sphere(p1, a1, p2, a2), sphere(c1, t1, c2, t2))
                })
                .collect()
        })
        .collect();
    FiniteMetricSpace {
        t,
        labels: labels.to_vec(),
        dist: d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calabi::{round_sphere_diameter, Grid};

    #[test]
    fn stencil_size() {
        // 5⁴ − 1 moves of reach 2, plus 24 planar moves of reach 3 per axis pair
        assert_eq!(stencil(true).len(), 624 + 6 * 24);
        assert_eq!(stencil(false).len(), 24 + 24);
    }

    #[test]
    fn round_sphere_graph() {
        let area = 3.0;
        let g = GraphMetric::base_sphere(area, 15).unwrap();
        let res = g.resolution();
        let labels: Vec<SampleLabel> = (0..15)
            .step_by(2)
            .flat_map(|i| (0..15).step_by(3).map(move |j| SampleLabel { base: (i, j), fiber: None }))
            .collect();
        let space = g.space(0.0, &labels).unwrap();
        let diam = space.diameter();
        let exact = round_sphere_diameter(area);
        assert!(((diam - exact) / exact).abs() < 0.08, "{diam} vs {exact}");
        for (a, la) in labels.iter().enumerate() {
            for (b, lb) in labels.iter().enumerate() {
                let (pa, fa) = node_angles(res, la.base.0, la.base.1);
                let (pb, fb) = node_angles(res, lb.base.0, lb.base.1);
                let d = area.sqrt() * unit_sphere_distance(pa, fa, pb, fb);
                assert!((space.dist[a][b] - d).abs() <= 0.08 * d + 1e-6);
            }
        }
        assert!(triangle_audit(&space) <= 1e-9);
    }

    /// Largest relative error against great-circle distances over all
    /// pairs of the given base nodes.
    fn sphere_error(g: &GraphMetric, area: f64, nodes: &[(usize, usize)]) -> f64 {
        let res = g.resolution();
        let labels: Vec<SampleLabel> =
            nodes.iter().map(|&b| SampleLabel { base: b, fiber: None }).collect();
        let space = g.space(0.0, &labels).unwrap();
        let mut worst: f64 = 0.0;
        for (a, la) in labels.iter().enumerate() {
            for (b, lb) in labels.iter().enumerate() {
                let (pa, fa) = node_angles(res, la.base.0, la.base.1);
                let (pb, fb) = node_angles(res, lb.base.0, lb.base.1);
                let d = area.sqrt() * unit_sphere_distance(pa, fa, pb, fb);
                if d > 1e-6 {
                    worst = worst.max((space.dist[a][b] / d - 1.0).abs());
                }
            }
        }
        worst
    }

    #[test]
    fn sphere_refinement_is_stable() {
        // azimuth grids of 15 and 29 nodes do not nest, so each resolution is
        // compared with the continuum; the two can then differ by at most the
        // sum of the errors
        let coarse = GraphMetric::base_sphere(1.0, 15).unwrap();
        let fine = GraphMetric::base_sphere(1.0, 29).unwrap();
        let ec = sphere_error(&coarse, 1.0, &[(0, 0), (7, 0), (7, 5), (3, 10), (12, 3), (14, 0)]);
        let ef = sphere_error(&fine, 1.0, &[(0, 0), (14, 0), (14, 10), (6, 19), (24, 6), (28, 0)]);
        assert!(ec + ef < 0.05, "{ec} + {ef}");
    }

    fn product_graph(f: f64, c: f64) -> GraphMetric {
        let p = Profile::fs_model(Grid::new(128).unwrap(), 0.0, f, c).unwrap();
        GraphMetric::from_profile(&p, &BundleGeometry::new(0), Resolution::uniform(15)).unwrap()
    }

    #[test]
    fn product_distances() {
        let (f, c) = (1.0, 5.0);
        let g = product_graph(f, c);
        let res = g.resolution();
        let labels = default_samples(res);
        let space = g.space(0.5, &labels).unwrap();
        for (a, la) in labels.iter().enumerate() {
            for (b, lb) in labels.iter().enumerate() {
                let (pa, aa) = node_angles(res, la.base.0, la.base.1);
                let (pb, ab) = node_angles(res, lb.base.0, lb.base.1);
                let (fa, ta) = fiber_angles(res, la.fiber.unwrap().0, la.fiber.unwrap().1);
                let (fb, tb) = fiber_angles(res, lb.fiber.unwrap().0, lb.fiber.unwrap().1);
                let db = unit_sphere_distance(pa, aa, pb, ab);
                let df = unit_sphere_distance(fa, ta, fb, tb);
                let exact = (c * db * db + f * df * df).sqrt();
                let d = space.dist[a][b];
                if la.base == lb.base {
                    assert!((d - exact).abs() <= 0.08 * exact + 1e-6, "{la:?} {lb:?}: {d} vs {exact}");
                } else {
                    // a path may split into a base leg and a fiber leg, which
                    // overshoots by at most the fiber leg
                    let slack = 0.08 * exact + f.sqrt() * df;
                    assert!(d >= 0.98 * exact && d <= exact + slack, "{la:?} {lb:?}: {d} vs {exact}");
                }
            }
        }
        assert!(triangle_audit(&space) <= 1e-9);
        let fd = g.fiber_diameter((7, 0)).unwrap();
        let exact = round_sphere_diameter(f);
        assert!(((fd - exact) / exact).abs() < 0.08, "{fd} vs {exact}");
    }

    #[test]
    fn collapsed_fiber_reduces_to_base() {
        let p = Profile::fs_model(Grid::new(64).unwrap(), 0.0, 1.0, 4.0).unwrap();
        let g = GraphMetric::from_profile(&p, &BundleGeometry::new(0), Resolution::collapsed(15))
            .unwrap();
        let b = GraphMetric::base_sphere(4.0, 15).unwrap();
        let labels = default_samples(Resolution::collapsed(15));
        let (s1, s2) = (g.space(0.0, &labels).unwrap(), b.space(0.0, &labels).unwrap());
        assert!(sup_difference(&s1, &s2) < 1e-12);
        assert_eq!(g.fiber_diameter((3, 3)).unwrap(), 0.0);
        assert!(matches!(g.fiber_diameter((15, 0)), Err(Error::UnknownBasePoint(15, 0))));
    }

    #[test]
    fn twisted_south_pole_is_a_point() {
        // every θ-circle over the south pole is one fiber; shifting φ with the
        // gauge must cost nothing
        for k in 1..=2u32 {
            let p = Profile::fs_model(Grid::new(64).unwrap(), 0.0, 2.0, 6.0).unwrap();
            let g = GraphMetric::from_profile(&p, &BundleGeometry::new(k), Resolution::uniform(15))
                .unwrap();
            let src = g.index(NodeIndex { polar: 14, azimuth: 0, chi: 7, angle: 0 });
            let dst = g.index(NodeIndex {
                polar: 14,
                azimuth: 1,
                chi: 7,
                angle: 15 - k as usize,
            });
            let d = g.shortest_paths(src, &[dst]);
            assert!(d[dst] < 1e-12, "k = {k}: {}", d[dst]);
        }
    }

    #[test]
    fn identity_correspondence_and_point_base() {
        let g = product_graph(1.0, 5.0);
        let labels = default_samples(g.resolution());
        let x = g.space(0.0, &labels).unwrap();
        let r = gh_epsilon(&x, &x, &Correspondence::identity(x.len())).unwrap();
        assert_eq!(r.epsilon, 0.0);
        let point = FiniteMetricSpace {
            t: 0.0,
            labels: vec![SampleLabel { base: (0, 0), fiber: None }],
            dist: vec![vec![0.0]],
        };
        let corr = Correspondence {
            forward: vec![0; x.len()],
            backward: vec![0],
        };
        let r = gh_epsilon(&x, &point, &corr).unwrap();
        assert_eq!(r.epsilon, x.diameter());
        let bad = Correspondence {
            forward: vec![0; x.len()],
            backward: vec![x.len()],
        };
        assert!(matches!(gh_epsilon(&x, &point, &bad), Err(Error::SampleMismatch(_))));
    }

    #[test]
    fn sandwich_of_identical_spaces() {
        let b = GraphMetric::base_sphere(2.0, 15).unwrap();
        let labels = default_samples(Resolution::collapsed(15));
        let s = b.space(0.0, &labels).unwrap();
        let w = sandwich_check(&s, &s).unwrap();
        assert!((w.sqrt_c - 1.0).abs() < 1e-15 && (w.c2 - 1.0).abs() < 1e-15);
        assert!(w.passes());
    }

    #[test]
    fn limit_needs_three_spaces() {
        let b = GraphMetric::base_sphere(2.0, 15).unwrap();
        let labels = default_samples(Resolution::collapsed(15));
        let s = b.space(0.0, &labels).unwrap();
        assert!(matches!(
            limit_distance(&[s.clone(), s], None),
            Err(Error::InsufficientSnapshots { needed: 3, found: 2 })
        ));
    }

    #[test]
    fn resolution_rules() {
        assert!(Resolution::uniform(7).validate(0).is_err());
        assert!(Resolution { base: 15, fiber: 9 }.validate(1).is_err());
        assert!(Resolution { base: 15, fiber: 9 }.validate(0).is_ok());
        assert!(Resolution::uniform(15).validate(3).is_err());
        assert!(Resolution::collapsed(15).validate(3).is_ok());
    }
}
