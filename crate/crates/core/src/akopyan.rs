//! Approximation of non-expanding piecewise linear maps by piecewise
//! distance preserving ones.
//!
//! The pipeline runs in three stages.  First the map is restricted to the
//! 1-skeleton of a refined triangulation and smoothed so that it is constant
//! on a small collar around every skeleton vertex.  Second, each skeleton
//! edge is replaced by a zigzag: a sawtooth normal displacement that makes
//! the edge map piecewise isometric while staying uniformly close to the
//! original.  Third, every triangle of the refinement is filled by a rigid
//! extension of the zigzag boundary data.
//!
//! Zigzag density is chosen adaptively: a dry run validates every triangle's
//! boundary constraints and refines only the intervals that participate in a
//! violation, and a sampled non-expansion certificate (path-length upper
//! bounds on a few hundred thousand point pairs) must pass before any
//! extension is attempted.

use std::collections::BTreeMap;

use crate::brehm::{extend, ConstraintSet};
use crate::geom2d::{orient, seg_closest_point, seg_intersection, ConvexPolygon, Point2};
use crate::polyspace::{eval_affine, PLMap, Piece, PolySpace, SegPiece, SubTri};
use crate::tol::DIST_TOL;
use crate::{Error, Result};

/// Reference direction for zigzag displacements.  Edges whose image
/// degenerates to a point are displaced along this axis, which is what makes
/// the sawtooth patterns of different edges around a common vertex agree.
pub const ZIGZAG_E: Point2 = Point2 { x: 0.0, y: 1.0 };

// ---------------------------------------------------------------------------
// One-dimensional piecewise linear maps
// ---------------------------------------------------------------------------

/// A piecewise linear map from an interval `[0, len]` into the plane,
/// stored as increasing breakpoints with their images.
#[derive(Clone, Debug, Default)]
pub struct EdgePL {
    pub breaks: Vec<f64>,
    pub values: Vec<Point2>,
}

impl EdgePL {
    pub fn new(breaks: Vec<f64>, values: Vec<Point2>) -> Result<EdgePL> {
        if breaks.len() != values.len() || breaks.len() < 2 {
            return Err(Error::InvalidInput(
                "edge map needs matching breakpoint and value lists".into(),
            ));
        }
        if breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "edge map breakpoints must increase strictly".into(),
            ));
        }
        Ok(EdgePL { breaks, values })
    }

    pub fn len(&self) -> f64 {
        *self.breaks.last().unwrap() - self.breaks[0]
    }

    pub fn is_empty(&self) -> bool {
        self.breaks.is_empty()
    }

    /// Value at parameter `t`, clamped to the parameter range.
    pub fn eval(&self, t: f64) -> Point2 {
        let n = self.breaks.len();
        if t <= self.breaks[0] {
            return self.values[0];
        }
        if t >= self.breaks[n - 1] {
            return self.values[n - 1];
        }
        let hi = self.breaks.partition_point(|&b| b <= t).min(n - 1);
        let lo = hi - 1;
        let span = self.breaks[hi] - self.breaks[lo];
        let f = (t - self.breaks[lo]) / span;
        self.values[lo] + (self.values[hi] - self.values[lo]) * f
    }

    /// Largest interval speed `|Δvalue| / Δbreak`.
    pub fn max_speed(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 1..self.breaks.len() {
            let dt = self.breaks[i] - self.breaks[i - 1];
            let dv = self.values[i].dist(self.values[i - 1]);
            worst = worst.max(dv / dt);
        }
        worst
    }

    /// Largest deviation of any interval from unit speed.
    pub fn isometry_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 1..self.breaks.len() {
            let dt = self.breaks[i] - self.breaks[i - 1];
            let dv = self.values[i].dist(self.values[i - 1]);
            worst = worst.max((dv - dt).abs());
        }
        worst
    }

    /// Supremum distance to another map over the same interval.  Both maps
    /// are piecewise linear, so the supremum is attained at a breakpoint of
    /// one of them.
    pub fn sup_dist(&self, other: &EdgePL) -> f64 {
        let mut worst: f64 = 0.0;
        for &t in self.breaks.iter().chain(other.breaks.iter()) {
            worst = worst.max(self.eval(t).dist(other.eval(t)));
        }
        worst
    }
}

// ---------------------------------------------------------------------------
// Zigzag
// ---------------------------------------------------------------------------

/// Sawtooth displacement direction for a linear segment image: the unit
/// normal of the image direction with positive component along [`ZIGZAG_E`]
/// (ties broken toward positive x), or `ZIGZAG_E` itself when the image
/// degenerates to a point.
fn zigzag_normal(v0: Point2, v1: Point2, lp: f64) -> Point2 {
    if lp <= 1e-14 {
        return ZIGZAG_E;
    }
    let dir = (v1 - v0) * (1.0 / lp);
    let mut u = dir.perp();
    let along = u.dot(ZIGZAG_E);
    if along < 0.0 || (along == 0.0 && u.x < 0.0) {
        u = Point2::new(-u.x, -u.y);
    }
    u
}

/// Appends the zigzag of one linear interval to a breakpoint list.  The
/// caller has already pushed the interval start `(t0, v0)`; this pushes the
/// remaining `2n` breakpoints through `(t1, v1)`.  Every half-interval of the
/// result has speed exactly one.
fn zigzag_interval(
    t0: f64,
    t1: f64,
    v0: Point2,
    v1: Point2,
    n: usize,
    breaks: &mut Vec<f64>,
    values: &mut Vec<Point2>,
) -> Result<()> {
    let len = t1 - t0;
    let lp = v0.dist(v1);
    if lp > len * (1.0 + 1e-9) + 1e-15 {
        return Err(Error::DistanceMismatch(format!(
            "segment image length {lp} exceeds parameter length {len}"
        )));
    }
    let ratio = (lp / len).min(1.0);
    let k = (1.0 - ratio * ratio).max(0.0).sqrt();
    let u = zigzag_normal(v0, v1, lp);
    let amp = k * len / (2.0 * n as f64);
    let dv = v1 - v0;
    for j in 1..=2 * n {
        if j == 2 * n {
            breaks.push(t1);
            values.push(v1);
            break;
        }
        let frac = j as f64 / (2.0 * n as f64);
        let base = v0 + dv * frac;
        breaks.push(t0 + len * frac);
        values.push(if j % 2 == 1 { base + u * amp } else { base });
    }
    Ok(())
}

/// Replaces the linear map sending `[0, len]` onto the segment from `h0` to
/// `h1` by an `n`-tooth sawtooth that is piecewise isometric (unit speed on
/// each of the `2n` half-intervals) and stays within `len / (2n)` of the
/// original.
pub fn zigzag(len: f64, h0: Point2, h1: Point2, n: usize) -> Result<EdgePL> {
    if !(len > 0.0) || n == 0 {
        return Err(Error::InvalidInput(
            "zigzag needs a positive length and at least one tooth".into(),
        ));
    }
    let mut breaks = vec![0.0];
    let mut values = vec![h0];
    zigzag_interval(0.0, len, h0, h1, n, &mut breaks, &mut values)?;
    EdgePL::new(breaks, values)
}

// ---------------------------------------------------------------------------
// Skeleton of a refined triangulation
// ---------------------------------------------------------------------------

/// A vertex of the skeleton.  Vertices that bound triangles carry a chart
/// anchor; the free endpoint of a dangling edge has none.
#[derive(Clone, Copy, Debug)]
pub struct SkelNode {
    pub host: Option<(usize, Point2)>,
}

/// An edge of the skeleton, oriented from `n0` to `n1`.  Edges that bound
/// triangles carry one hosting chart with the endpoint positions there;
/// dangling segments reference the space's hanging-edge list instead.
#[derive(Clone, Copy, Debug)]
pub struct SkelEdge {
    pub n0: usize,
    pub n1: usize,
    pub len: f64,
    pub host: Option<(usize, Point2, Point2)>,
    pub hanging: Option<usize>,
}

/// The 1-skeleton of a uniformly refined triangulation of a space, with the
/// sub-triangles it came from and the wiring between them.  Sides and
/// corners of glued charts are identified, so a seam edge appears once.
#[derive(Clone, Debug)]
pub struct Skeleton {
    pub subs: Vec<SubTri>,
    pub nodes: Vec<SkelNode>,
    pub edges: Vec<SkelEdge>,
    /// Node ids of each sub-triangle's corners.
    pub corner_nodes: Vec<[usize; 3]>,
    /// Edge ids of each sub-triangle's sides; slot `k` joins corners `k` and
    /// `(k + 1) % 3`.
    pub side_edges: Vec<[usize; 3]>,
}

/// Splits every chart of the space into `4^depth` congruent sub-triangles by
/// recursive edge midpoint subdivision.  Shared midpoints are computed from
/// identical operands along every path, so coinciding corners agree bitwise.
pub fn midpoint_refinement(space: &PolySpace, depth: usize) -> Vec<SubTri> {
    fn split(parent: usize, tri: [Point2; 3], d: usize, out: &mut Vec<SubTri>) {
        if d == 0 {
            out.push(SubTri { parent, chart: tri });
            return;
        }
        let m01 = (tri[0] + tri[1]) * 0.5;
        let m12 = (tri[1] + tri[2]) * 0.5;
        let m20 = (tri[2] + tri[0]) * 0.5;
        split(parent, [tri[0], m01, m20], d - 1, out);
        split(parent, [m01, tri[1], m12], d - 1, out);
        split(parent, [m20, m12, tri[2]], d - 1, out);
        split(parent, [m01, m12, m20], d - 1, out);
    }
    let mut subs = Vec::with_capacity(space.triangle_count() << (2 * depth));
    for t in 0..space.triangle_count() {
        split(t, space.chart(t), depth, &mut subs);
    }
    subs
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum NodeKey {
    /// A vertex class of the space.
    Vertex(usize),
    /// A dyadic point on a gluing class: (class, numerator of the fraction).
    Side(usize, u32),
    /// A point interior to one chart, keyed by its exact coordinates.
    Interior(usize, u64, u64),
    /// The free endpoint of a hanging edge.
    Leaf(usize),
}

impl Skeleton {
    /// Builds the skeleton of a midpoint refinement at the given depth.
    /// `subs` must come from [`midpoint_refinement`] of the same space at a
    /// denominator-compatible depth so that side nodes land on the dyadic
    /// grid used for seam identification.
    pub fn build(space: &PolySpace, subs: Vec<SubTri>, depth: usize) -> Result<Skeleton> {
        let denom = (1u32 << depth) as f64;
        let mut key_of = BTreeMap::new();
        let mut nodes: Vec<SkelNode> = Vec::new();
        let mut corner_nodes = Vec::with_capacity(subs.len());

        let classify = |tri: usize, p: Point2| -> Result<NodeKey> {
            let chart = space.chart(tri);
            let scale = space
                .side_lengths(tri)
                .iter()
                .fold(1.0f64, |m, &l| m.max(l));
            let tol = 1e-9 * scale;
            for c in 0..3 {
                if p.dist(chart[c]) <= tol {
                    return Ok(NodeKey::Vertex(space.vertex_class(tri, c)));
                }
            }
            for s in 0..3 {
                let (u, v) = space.side_segment(tri, s);
                if p.dist(seg_closest_point(u, v, p)) <= tol {
                    let class = space.class_of(tri, s);
                    let frac = space.side_param(tri, s, p) / space.gluing_classes()[class].len;
                    let idx = (frac * denom).round();
                    if (frac * denom - idx).abs() > 1e-6 {
                        return Err(Error::Internal(format!(
                            "refinement node off the dyadic side grid (triangle {tri})"
                        )));
                    }
                    return Ok(NodeKey::Side(class, idx as u32));
                }
            }
            Ok(NodeKey::Interior(tri, p.x.to_bits(), p.y.to_bits()))
        };

        for sub in &subs {
            let mut ids = [0usize; 3];
            for c in 0..3 {
                let key = classify(sub.parent, sub.chart[c])?;
                let id = *key_of.entry(key).or_insert_with(|| {
                    nodes.push(SkelNode {
                        host: Some((sub.parent, sub.chart[c])),
                    });
                    nodes.len() - 1
                });
                ids[c] = id;
            }
            corner_nodes.push(ids);
        }

        let mut edge_of: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut edges: Vec<SkelEdge> = Vec::new();
        let mut side_edges = Vec::with_capacity(subs.len());
        for (i, sub) in subs.iter().enumerate() {
            let mut ids = [0usize; 3];
            for k in 0..3 {
                let (na, nb) = (corner_nodes[i][k], corner_nodes[i][(k + 1) % 3]);
                let (pa, pb) = (sub.chart[k], sub.chart[(k + 1) % 3]);
                if na == nb {
                    return Err(Error::Internal("degenerate refinement side".into()));
                }
                let key = (na.min(nb), na.max(nb));
                let id = *edge_of.entry(key).or_insert_with(|| {
                    let (n0, n1, a, b) = if na < nb { (na, nb, pa, pb) } else { (nb, na, pb, pa) };
                    edges.push(SkelEdge {
                        n0,
                        n1,
                        len: a.dist(b),
                        host: Some((sub.parent, a, b)),
                        hanging: None,
                    });
                    edges.len() - 1
                });
                ids[k] = id;
            }
            side_edges.push(ids);
        }

        for (idx, he) in space.hanging_edges().iter().enumerate() {
            let attach = *key_of
                .get(&NodeKey::Vertex(he.attach))
                .ok_or_else(|| Error::Internal("hanging edge attached to unused vertex".into()))?;
            nodes.push(SkelNode { host: None });
            let leaf = nodes.len() - 1;
            key_of.insert(NodeKey::Leaf(idx), leaf);
            edges.push(SkelEdge {
                n0: attach,
                n1: leaf,
                len: he.len,
                host: None,
                hanging: Some(idx),
            });
        }

        Ok(Skeleton {
            subs,
            nodes,
            edges,
            corner_nodes,
            side_edges,
        })
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (e, edge) in self.edges.iter().enumerate() {
            adj[edge.n0].push(e);
            adj[edge.n1].push(e);
        }
        adj
    }
}

// ---------------------------------------------------------------------------
// Restriction of a map to the skeleton
// ---------------------------------------------------------------------------

fn pieces_by_parent(space: &PolySpace, h: &PLMap) -> Result<Vec<Vec<usize>>> {
    let mut by_parent = vec![Vec::new(); space.triangle_count()];
    for (i, piece) in h.pieces.iter().enumerate() {
        if piece.parent >= space.triangle_count() {
            return Err(Error::InvalidInput("map piece references no triangle".into()));
        }
        by_parent[piece.parent].push(i);
    }
    for (t, list) in by_parent.iter().enumerate() {
        if list.is_empty() {
            return Err(Error::InvalidInput(format!(
                "map leaves triangle {t} uncovered"
            )));
        }
    }
    Ok(by_parent)
}

fn eval_in_chart(h: &PLMap, by_parent: &[Vec<usize>], tri: usize, p: Point2) -> Result<Point2> {
    let mut best = f64::NEG_INFINITY;
    let mut at = None;
    for &i in &by_parent[tri] {
        let c = h.pieces[i].chart;
        let mut slack = f64::INFINITY;
        for k in 0..3 {
            let (u, v) = (c[k], c[(k + 1) % 3]);
            let l = u.dist(v).max(1e-300);
            slack = slack.min(orient(u, v, p) / l);
        }
        if slack > best {
            best = slack;
            at = Some(i);
        }
    }
    let i = at.ok_or_else(|| Error::InvalidInput("map has no pieces on a triangle".into()))?;
    if best < -1e-6 {
        return Err(Error::InvalidInput(
            "map pieces do not cover their triangle".into(),
        ));
    }
    Ok(eval_affine(&h.pieces[i], p))
}

/// Restricts a piecewise linear map to every skeleton edge, with breakpoints
/// wherever the map changes pieces.  Endpoint values are taken from a single
/// per-node evaluation so that the restrictions of all edges incident to a
/// node agree there exactly.
pub fn restrict_to_skeleton(
    space: &PolySpace,
    skel: &Skeleton,
    h: &PLMap,
) -> Result<Vec<EdgePL>> {
    let by_parent = pieces_by_parent(space, h)?;

    let mut node_vals = vec![Point2::ZERO; skel.nodes.len()];
    let mut node_known = vec![false; skel.nodes.len()];
    for (i, node) in skel.nodes.iter().enumerate() {
        if let Some((tri, p)) = node.host {
            node_vals[i] = eval_in_chart(h, &by_parent, tri, p)?;
            node_known[i] = true;
        }
    }

    let mut out = Vec::with_capacity(skel.edges.len());
    for edge in &skel.edges {
        if let Some(hedge) = edge.hanging {
            let mut segs: Vec<&SegPiece> =
                h.segments.iter().filter(|s| s.hedge == hedge).collect();
            if segs.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "map leaves hanging edge {hedge} uncovered"
                )));
            }
            segs.sort_by(|a, b| a.param[0].total_cmp(&b.param[0]));
            let mut breaks = vec![0.0];
            let mut values = vec![node_vals[edge.n0]];
            let mut reach = 0.0;
            for s in segs {
                if (s.param[0] - reach).abs() > 1e-9 {
                    return Err(Error::InvalidInput(format!(
                        "hanging edge {hedge} has a coverage gap"
                    )));
                }
                if s.param[0] > 1e-12 && values.last().unwrap().dist(s.image[0]) > 1e-6 {
                    return Err(Error::InvalidInput(format!(
                        "map is discontinuous on hanging edge {hedge}"
                    )));
                }
                reach = s.param[1];
                breaks.push(reach);
                values.push(s.image[1]);
            }
            if (reach - edge.len).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "map covers only part of hanging edge {hedge}"
                )));
            }
            *breaks.last_mut().unwrap() = edge.len;
            let leaf_val = *values.last().unwrap();
            node_vals[edge.n1] = leaf_val;
            node_known[edge.n1] = true;
            out.push(EdgePL::new(breaks, values)?);
            continue;
        }

        let (tri, a, b) = edge.host.unwrap();
        let len = edge.len;
        let dir = (b - a) * (1.0 / len);
        let scale = space
            .side_lengths(tri)
            .iter()
            .fold(1.0f64, |m, &l| m.max(l));
        let mut fracs = vec![0.0, 1.0];
        for &i in &by_parent[tri] {
            let c = h.pieces[i].chart;
            for k in 0..3 {
                let (u, v) = (c[k], c[(k + 1) % 3]);
                if let Some((s, _)) = seg_intersection(a, b, u, v) {
                    if s > 1e-9 && s < 1.0 - 1e-9 {
                        fracs.push(s);
                    }
                }
                let w = u - a;
                let t = w.dot(dir);
                if t > 1e-9 * len
                    && t < len * (1.0 - 1e-9)
                    && (a + dir * t).dist(u) <= 1e-9 * scale
                {
                    fracs.push(t / len);
                }
            }
        }
        fracs.sort_by(f64::total_cmp);
        fracs.dedup_by(|x, y| (*x - *y).abs() <= 1e-9);
        let mut breaks = Vec::with_capacity(fracs.len());
        let mut values = Vec::with_capacity(fracs.len());
        for (j, &f) in fracs.iter().enumerate() {
            if j == 0 {
                breaks.push(0.0);
                values.push(node_vals[edge.n0]);
            } else if j + 1 == fracs.len() {
                breaks.push(len);
                values.push(node_vals[edge.n1]);
            } else {
                breaks.push(f * len);
                values.push(eval_in_chart(h, &by_parent, tri, a + (b - a) * f)?);
            }
        }
        out.push(EdgePL::new(breaks, values)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Vertex-collar smoothing
// ---------------------------------------------------------------------------

/// The reparameterization of one edge that collapses a collar of width
/// `delta` at each end onto the endpoints and stretches the middle linearly
/// over the whole edge.
#[derive(Clone, Copy, Debug)]
pub struct SmashMap {
    pub len: f64,
    pub delta: f64,
}

impl SmashMap {
    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.delta {
            0.0
        } else if t >= self.len - self.delta {
            self.len
        } else {
            (t - self.delta) * self.len / (self.len - 2.0 * self.delta)
        }
    }
}

/// Builds the collar reparameterizations of every skeleton edge together
/// with the worst stretch factor `max len / (len - 2 delta)` they introduce.
pub fn smash(skel: &Skeleton, delta: f64) -> Result<(Vec<SmashMap>, f64)> {
    let min_len = skel
        .edges
        .iter()
        .map(|e| e.len)
        .fold(f64::INFINITY, f64::min);
    if !(delta > 0.0) || delta >= min_len / 2.0 {
        return Err(Error::InvalidInput(format!(
            "collar width {delta} must be positive and below half the shortest edge {min_len}"
        )));
    }
    let maps: Vec<SmashMap> = skel
        .edges
        .iter()
        .map(|e| SmashMap {
            len: e.len,
            delta,
        })
        .collect();
    let stretch = skel
        .edges
        .iter()
        .map(|e| e.len / (e.len - 2.0 * delta))
        .fold(1.0f64, f64::max);
    Ok((maps, stretch))
}

/// Applies the collar smoothing to one restricted edge map: precompose with
/// the collar reparameterization, then scale the image by
/// `(1 - delta) / stretch` so the result contracts strictly.
fn smoothed_edge(h: &EdgePL, sm: &SmashMap, delta: f64, factor: f64) -> EdgePL {
    let len = sm.len;
    let inner = (len - 2.0 * delta) / len;
    let mut breaks = vec![0.0, delta];
    let mut values = vec![h.values[0] * factor, h.values[0] * factor];
    for (j, &b) in h.breaks.iter().enumerate() {
        if j == 0 || j + 1 == h.breaks.len() {
            continue;
        }
        let t = delta + b * inner;
        breaks.push(t);
        values.push(h.values[j] * factor);
    }
    breaks.push(len - delta);
    values.push(*h.values.last().unwrap() * factor);
    breaks.push(len);
    values.push(*h.values.last().unwrap() * factor);
    EdgePL { breaks, values }
}

struct Smoothed {
    edges: Vec<EdgePL>,
    delta: f64,
    stretch: f64,
}

/// Shrinks the collar width until the smoothed skeleton map is within
/// `budget` of the original everywhere.
fn smooth_skeleton(skel: &Skeleton, h_edges: &[EdgePL], budget: f64, cap: f64) -> Result<Smoothed> {
    let min_len = skel
        .edges
        .iter()
        .map(|e| e.len)
        .fold(f64::INFINITY, f64::min);
    let mut delta = (min_len / 4.0).min(cap);
    for _ in 0..200 {
        let (maps, stretch) = smash(skel, delta)?;
        let factor = (1.0 - delta) / stretch;
        if factor > 0.0 {
            let edges: Vec<EdgePL> = h_edges
                .iter()
                .zip(&maps)
                .map(|(h, sm)| smoothed_edge(h, sm, delta, factor))
                .collect();
            let sup = edges
                .iter()
                .zip(h_edges)
                .map(|(s, h)| s.sup_dist(h))
                .fold(0.0f64, f64::max);
            if sup < budget {
                return Ok(Smoothed {
                    edges,
                    delta,
                    stretch,
                });
            }
        }
        delta *= 0.5;
    }
    Err(Error::InvalidInput(
        "collar smoothing did not converge; the input map appears to expand".into(),
    ))
}

// ---------------------------------------------------------------------------
// Zigzag plans and construction of the skeleton map
// ---------------------------------------------------------------------------

/// Tooth counts for the zigzag stage: one global count for the collar
/// intervals (their sawtooth patterns must agree around every vertex) and an
/// independent count per interior interval of each edge.
#[derive(Clone, Debug)]
struct ZigzagPlan {
    n_collar: usize,
    n_mid: Vec<Vec<usize>>,
}

impl ZigzagPlan {
    fn base(smoothed: &[EdgePL], amp_budget: f64) -> ZigzagPlan {
        let n_mid = smoothed
            .iter()
            .map(|e| {
                (1..e.breaks.len())
                    .map(|i| {
                        let len = e.breaks[i] - e.breaks[i - 1];
                        ((len / (2.0 * amp_budget)).ceil() as usize).max(1)
                    })
                    .collect()
            })
            .collect();
        ZigzagPlan {
            n_collar: 1,
            n_mid,
        }
    }

    fn total_teeth(&self) -> usize {
        self.n_mid
            .iter()
            .map(|e| e.iter().sum::<usize>())
            .sum::<usize>()
            + 2 * self.n_mid.len() * self.n_collar
    }
}

/// The zigzag skeleton map: one piecewise isometric map per skeleton edge,
/// tagged with the smoothed interval each breakpoint interior belongs to.
pub struct SkeletonMap {
    pub edge_maps: Vec<EdgePL>,
    /// For each edge, the smoothed-interval index of each breakpoint's
    /// preceding interval (breakpoint 0 tagged 0).
    pub interval_tags: Vec<Vec<u32>>,
}

fn build_skeleton_map(smoothed: &[EdgePL], plan: &ZigzagPlan) -> Result<SkeletonMap> {
    let mut edge_maps = Vec::with_capacity(smoothed.len());
    let mut tags = Vec::with_capacity(smoothed.len());
    for (e, h) in smoothed.iter().enumerate() {
        let m = h.breaks.len() - 1;
        let mut breaks = vec![h.breaks[0]];
        let mut values = vec![h.values[0]];
        let mut tag = vec![0u32];
        for i in 0..m {
            let n = if i == 0 || i + 1 == m {
                plan.n_collar
            } else {
                plan.n_mid[e][i]
            };
            let before = breaks.len();
            zigzag_interval(
                h.breaks[i],
                h.breaks[i + 1],
                h.values[i],
                h.values[i + 1],
                n,
                &mut breaks,
                &mut values,
            )?;
            tag.extend(std::iter::repeat(i as u32).take(breaks.len() - before));
        }
        edge_maps.push(EdgePL::new(breaks, values)?);
        tags.push(tag);
    }
    Ok(SkeletonMap {
        edge_maps,
        interval_tags: tags,
    })
}

// ---------------------------------------------------------------------------
// Non-expansion certificate
// ---------------------------------------------------------------------------

struct SplitMix(u64);

impl SplitMix {
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }
    fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Outcome of the sampled non-expansion check of a skeleton map.
#[derive(Clone, Copy, Debug)]
pub struct Certificate {
    /// Smallest `upper_bound - |w(x) - w(y)|` over all checked pairs.
    pub margin: f64,
    pub pairs: usize,
}

fn dijkstra(adj: &[Vec<usize>], edges: &[SkelEdge], src: usize) -> Vec<f64> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    let mut dist = vec![f64::INFINITY; adj.len()];
    dist[src] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((0u64, src)));
    while let Some(Reverse((dbits, v))) = heap.pop() {
        let d = f64::from_bits(dbits);
        if d > dist[v] {
            continue;
        }
        for &e in &adj[v] {
            let edge = &edges[e];
            let o = if edge.n0 == v { edge.n1 } else { edge.n0 };
            let nd = d + edge.len;
            if nd < dist[o] {
                dist[o] = nd;
                heap.push(Reverse((nd.to_bits(), o)));
            }
        }
    }
    dist
}

/// Checks sampled point pairs of the skeleton for non-expansion of `w`
/// against upper bounds on their intrinsic distance: pairs on edges around a
/// common vertex (bounded by the two-leg path and, when co-hosted, the chart
/// segment) and random cross pairs bounded by shortest path lengths through
/// the skeleton graph.
fn certificate(skel: &Skeleton, w: &SkeletonMap, delta: f64) -> Certificate {
    let adj = skel.adjacency();
    let mut margin = f64::INFINITY;
    let mut pairs = 0usize;

    let value = |e: usize, t: f64| w.edge_maps[e].eval(t);
    let position = |e: usize, t: f64| -> Option<(usize, Point2)> {
        skel.edges[e].host.map(|(tri, a, b)| {
            let f = t / skel.edges[e].len;
            (tri, a + (b - a) * f)
        })
    };

    // Pairs around a shared vertex, sampled inside and just outside the
    // collar where the sawtooth patterns interact.
    let stride = (skel.nodes.len() / 1200).max(1);
    let dists = [0.25 * delta, 0.6 * delta, 0.95 * delta, 1.9 * delta, 3.4 * delta];
    for v in (0..skel.nodes.len()).step_by(stride) {
        let star = &adj[v];
        for i in 0..star.len().min(6) {
            for j in (i + 1)..star.len().min(6) {
                let (e1, e2) = (star[i], star[j]);
                for &s1 in &dists {
                    for &s2 in &dists {
                        if s1 > skel.edges[e1].len || s2 > skel.edges[e2].len {
                            continue;
                        }
                        let t1 = if skel.edges[e1].n0 == v { s1 } else { skel.edges[e1].len - s1 };
                        let t2 = if skel.edges[e2].n0 == v { s2 } else { skel.edges[e2].len - s2 };
                        let mut bound = s1 + s2;
                        if let (Some((h1, p1)), Some((h2, p2))) = (position(e1, t1), position(e2, t2)) {
                            if h1 == h2 {
                                bound = bound.min(p1.dist(p2));
                            }
                        }
                        let d = value(e1, t1).dist(value(e2, t2));
                        margin = margin.min(bound - d);
                        pairs += 1;
                    }
                }
            }
        }
    }

    // Random cross pairs against shortest-path upper bounds.
    let sources: Vec<usize> = (0..skel.nodes.len())
        .step_by((skel.nodes.len() / 64).max(1))
        .take(64)
        .collect();
    let per_source = (10_000 / sources.len()).max(1);
    let mut rng = SplitMix(0x5EED_0BAD_F00D ^ skel.edges.len() as u64);
    for &src in &sources {
        let dist = dijkstra(&adj, &skel.edges, src);
        let wsrc = {
            let e = adj[src][0];
            let t = if skel.edges[e].n0 == src { 0.0 } else { skel.edges[e].len };
            value(e, t)
        };
        for _ in 0..per_source {
            let e = (rng.next_u64() % skel.edges.len() as u64) as usize;
            let t = rng.next_f64() * skel.edges[e].len;
            let bound = (dist[skel.edges[e].n0] + t).min(dist[skel.edges[e].n1] + skel.edges[e].len - t);
            if !bound.is_finite() {
                continue;
            }
            let d = wsrc.dist(value(e, t));
            margin = margin.min(bound - d);
            pairs += 1;
        }
    }

    Certificate { margin, pairs }
}

/// How far a sampled certificate margin may dip below zero before the
/// zigzag is considered expanding and gets refined.
pub const CERTIFICATE_SLACK: f64 = 1e-9;

/// Summary of one skeleton approximation run.
#[derive(Clone, Copy, Debug)]
pub struct SkeletonReport {
    pub delta: f64,
    pub stretch: f64,
    pub collar_teeth: usize,
    pub max_interval_teeth: usize,
    pub refinement_rounds: usize,
    pub certificate_margin: f64,
    pub certificate_pairs: usize,
}

/// Approximates a non-expanding skeleton map by a piecewise isometric one
/// within `eps`: collar smoothing within `eps / 2`, then zigzags with
/// amplitude at most `eps / 4`, refined until the sampled non-expansion
/// certificate passes.
pub fn skeleton_approx(
    skel: &Skeleton,
    h_edges: &[EdgePL],
    eps: f64,
) -> Result<(SkeletonMap, SkeletonReport)> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput("approximation bound must be positive".into()));
    }
    if h_edges.len() != skel.edges.len() {
        return Err(Error::InvalidInput(
            "one restricted map per skeleton edge is required".into(),
        ));
    }
    for (e, h) in h_edges.iter().enumerate() {
        if h.max_speed() > 1.0 + 1e-9 {
            return Err(Error::InvalidInput(format!(
                "skeleton map expands on edge {e}"
            )));
        }
    }
    let smoothed = smooth_skeleton(skel, h_edges, eps / 2.0, eps / 4.0)?;
    let mut plan = ZigzagPlan::base(&smoothed.edges, eps / 4.0);
    let mut rounds = 0usize;
    for _ in 0..=20 {
        let w = build_skeleton_map(&smoothed.edges, &plan)?;
        let cert = certificate(skel, &w, smoothed.delta);
        if cert.margin >= -CERTIFICATE_SLACK {
            let report = SkeletonReport {
                delta: smoothed.delta,
                stretch: smoothed.stretch,
                collar_teeth: plan.n_collar,
                max_interval_teeth: plan
                    .n_mid
                    .iter()
                    .flat_map(|e| e.iter().copied())
                    .max()
                    .unwrap_or(1),
                refinement_rounds: rounds,
                certificate_margin: cert.margin,
                certificate_pairs: cert.pairs,
            };
            return Ok((w, report));
        }
        plan.n_collar *= 2;
        for e in &mut plan.n_mid {
            for n in e.iter_mut() {
                *n *= 2;
            }
        }
        rounds += 1;
    }
    Err(Error::Internal(
        "zigzag certificate kept failing after twenty refinements".into(),
    ))
}

// ---------------------------------------------------------------------------
// Full approximation
// ---------------------------------------------------------------------------

/// Receives the pieces of an approximation as they are produced.  On error
/// the sink's contents are unspecified.
pub trait PieceSink {
    fn piece(&mut self, p: Piece) -> Result<()>;
    fn segment(&mut self, s: SegPiece) -> Result<()>;
}

/// A sink that stores everything in a [`PLMap`].
#[derive(Default)]
pub struct Collect {
    pub pieces: Vec<Piece>,
    pub segments: Vec<SegPiece>,
}

impl PieceSink for Collect {
    fn piece(&mut self, p: Piece) -> Result<()> {
        self.pieces.push(p);
        Ok(())
    }
    fn segment(&mut self, s: SegPiece) -> Result<()> {
        self.segments.push(s);
        Ok(())
    }
}

fn map_is_isometric(h: &PLMap) -> bool {
    for p in &h.pieces {
        for k in 0..3 {
            let dc = p.chart[k].dist(p.chart[(k + 1) % 3]);
            let di = p.image[k].dist(p.image[(k + 1) % 3]);
            if (dc - di).abs() > DIST_TOL {
                return false;
            }
        }
    }
    for s in &h.segments {
        let dp = (s.param[1] - s.param[0]).abs();
        let di = s.image[0].dist(s.image[1]);
        if (dp - di).abs() > DIST_TOL {
            return false;
        }
    }
    true
}

fn validate_tiling(space: &PolySpace, h: &PLMap) -> Result<()> {
    let mut areas = vec![0.0f64; space.triangle_count()];
    for (i, p) in h.pieces.iter().enumerate() {
        let a = orient(p.chart[0], p.chart[1], p.chart[2]) / 2.0;
        if a <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "map piece {i} has a non-positive chart area"
            )));
        }
        areas[p.parent] += a;
    }
    for t in 0..space.triangle_count() {
        let want = space.chart_area(t);
        if (areas[t] - want).abs() > 1e-7 * want.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "map pieces tile triangle {t} to area {} instead of {want}",
                areas[t]
            )));
        }
    }
    Ok(())
}

/// Constraint breakpoints of one refined triangle: position in the chart,
/// image under the skeleton map, and the interval that produced them.
struct BoundaryPoint {
    at: Point2,
    img: Point2,
    edge: usize,
    interval: u32,
}

fn boundary_points(skel: &Skeleton, w: &SkeletonMap, sub: usize) -> Vec<BoundaryPoint> {
    let mut out = Vec::new();
    for k in 0..3 {
        let e = skel.side_edges[sub][k];
        let edge = &skel.edges[e];
        let na = skel.corner_nodes[sub][k];
        let pa = skel.subs[sub].chart[k];
        let pb = skel.subs[sub].chart[(k + 1) % 3];
        let em = &w.edge_maps[e];
        let tags = &w.interval_tags[e];
        let m = em.breaks.len();
        let forward = edge.n0 == na;
        for idx in 0..m - 1 {
            let (i, frac_from_a) = if forward {
                (idx, em.breaks[idx] / edge.len)
            } else {
                (m - 1 - idx, 1.0 - em.breaks[m - 1 - idx] / edge.len)
            };
            out.push(BoundaryPoint {
                at: pa + (pb - pa) * frac_from_a,
                img: em.values[i],
                edge: e,
                interval: tags[if forward { i } else { (i + 1).min(m - 1) }],
            });
        }
    }
    out
}

/// Scans one triangle's boundary constraints for expanding pairs.  Returns
/// the offending `(edge, interval)` tags, empty when the set is admissible.
fn expanding_pairs(points: &[BoundaryPoint]) -> Vec<(usize, u32)> {
    let mut bad = Vec::new();
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let da = points[i].at.dist(points[j].at);
            let db = points[i].img.dist(points[j].img);
            if db > da + DIST_TOL {
                bad.push((points[i].edge, points[i].interval));
                bad.push((points[j].edge, points[j].interval));
            }
        }
    }
    bad
}

/// Approximates a continuous non-expanding piecewise linear map on a space
/// by a piecewise distance preserving map within `eps`, streaming the output
/// pieces into `sink`.  Returns the skeleton-stage report.
pub fn approximate_into(
    space: &PolySpace,
    h: &PLMap,
    eps: f64,
    sink: &mut dyn PieceSink,
) -> Result<SkeletonReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput("approximation bound must be positive".into()));
    }
    validate_tiling(space, h)?;

    if map_is_isometric(h) {
        for p in &h.pieces {
            sink.piece(*p)?;
        }
        for s in &h.segments {
            sink.segment(*s)?;
        }
        return Ok(SkeletonReport {
            delta: 0.0,
            stretch: 1.0,
            collar_teeth: 0,
            max_interval_teeth: 0,
            refinement_rounds: 0,
            certificate_margin: f64::INFINITY,
            certificate_pairs: 0,
        });
    }

    // Refine until every triangle's inradius is below eps / 4, so that any
    // interior point is within eps / 4 of boundary data that is itself
    // within 3 eps / 8 of the input.
    let mut r_max = 0.0f64;
    for t in 0..space.triangle_count() {
        let s: f64 = space.side_lengths(t).iter().sum::<f64>() / 2.0;
        r_max = r_max.max(space.chart_area(t) / s);
    }
    let mut depth = 0usize;
    while r_max / (1u64 << depth) as f64 >= eps / 4.0 {
        depth += 1;
        if space.triangle_count() << (2 * depth) > 400_000 {
            return Err(Error::InvalidInput(
                "approximation bound is too small for this space".into(),
            ));
        }
    }

    let subs = midpoint_refinement(space, depth);
    let skel = Skeleton::build(space, subs, depth)?;
    let h_edges = restrict_to_skeleton(space, &skel, h)?;
    for (e, he) in h_edges.iter().enumerate() {
        if he.max_speed() > 1.0 + 1e-9 {
            return Err(Error::InvalidInput(format!(
                "input map expands along skeleton edge {e}"
            )));
        }
    }

    let smoothed = smooth_skeleton(&skel, &h_edges, eps / 4.0, eps / 8.0)?;
    let mut plan = ZigzagPlan::base(&smoothed.edges, eps / 8.0);
    let mut rounds = 0usize;
    let mut w = build_skeleton_map(&smoothed.edges, &plan)?;

    // Adaptive dry run: refine exactly the intervals participating in an
    // expanding boundary pair until every triangle's constraint set is
    // admissible, then require the sampled certificate to pass as well.
    loop {
        let mut refined = false;
        let mut collar_bump = false;
        let mut mid_bumps = std::collections::BTreeSet::new();
        for sub in 0..skel.subs.len() {
            let pts = boundary_points(&skel, &w, sub);
            for (edge, interval) in expanding_pairs(&pts) {
                let last = (smoothed.edges[edge].breaks.len() - 2) as u32;
                if interval == 0 || interval >= last {
                    collar_bump = true;
                } else {
                    mid_bumps.insert((edge, interval));
                }
            }
        }
        if collar_bump {
            plan.n_collar *= 2;
            refined = true;
        }
        for (edge, interval) in mid_bumps {
            plan.n_mid[edge][interval as usize] *= 2;
            refined = true;
        }
        if !refined {
            let cert = certificate(&skel, &w, smoothed.delta);
            if cert.margin >= -CERTIFICATE_SLACK {
                let report = SkeletonReport {
                    delta: smoothed.delta,
                    stretch: smoothed.stretch,
                    collar_teeth: plan.n_collar,
                    max_interval_teeth: plan
                        .n_mid
                        .iter()
                        .flat_map(|e| e.iter().copied())
                        .max()
                        .unwrap_or(1),
                    refinement_rounds: rounds,
                    certificate_margin: cert.margin,
                    certificate_pairs: cert.pairs,
                };
                extend_all(&skel, &w, sink)?;
                return Ok(report);
            }
            plan.n_collar *= 2;
            for e in &mut plan.n_mid {
                for n in e.iter_mut() {
                    *n *= 2;
                }
            }
        }
        rounds += 1;
        if rounds > 60 || plan.total_teeth() > 3_000_000 {
            return Err(Error::Internal(
                "zigzag refinement did not stabilize within its budget".into(),
            ));
        }
        w = build_skeleton_map(&smoothed.edges, &plan)?;
    }
}

fn extend_all(skel: &Skeleton, w: &SkeletonMap, sink: &mut dyn PieceSink) -> Result<()> {
    for sub in 0..skel.subs.len() {
        let pts = boundary_points(skel, w, sub);
        if pts.len() > 4000 {
            return Err(Error::Internal(
                "boundary constraint density is out of bounds".into(),
            ));
        }
        let area = ConvexPolygon::try_new(skel.subs[sub].chart.to_vec())?;
        let constraints = ConstraintSet {
            pairs: pts.iter().map(|p| (p.at, p.img)).collect(),
        };
        let f = extend(&area, &constraints).map_err(|e| {
            if let Ok(path) = std::env::var("EXTEND_DUMP") {
                use std::io::Write;
                let mut out = String::new();
                let c = skel.subs[sub].chart;
                out.push_str(&format!(
                    "{:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e}\n",
                    c[0].x, c[0].y, c[1].x, c[1].y, c[2].x, c[2].y
                ));
                for (a, b) in &constraints.pairs {
                    out.push_str(&format!(
                        "{:.17e} {:.17e} {:.17e} {:.17e}\n",
                        a.x, a.y, b.x, b.y
                    ));
                }
                let _ = std::fs::File::create(&path)
                    .and_then(|mut f| f.write_all(out.as_bytes()));
                eprintln!("EXTEND FAIL sub={sub} err={e:?} dumped to {path}");
            }
            match e {
                Error::InvalidConstraints(msg) => Error::Internal(format!(
                    "triangle {sub} failed after its dry run: {msg}"
                )),
                other => other,
            }
        })?;
        let parent = skel.subs[sub].parent;
        for piece in f.pieces {
            sink.piece(Piece {
                parent,
                chart: piece.dom,
                image: piece.img,
            })?;
        }
    }
    for (e, edge) in skel.edges.iter().enumerate() {
        let Some(hedge) = edge.hanging else { continue };
        let em = &w.edge_maps[e];
        for i in 1..em.breaks.len() {
            sink.segment(SegPiece {
                hedge,
                param: [em.breaks[i - 1], em.breaks[i]],
                image: [em.values[i - 1], em.values[i]],
            })?;
        }
    }
    Ok(())
}

/// Approximates a continuous non-expanding piecewise linear map by a
/// piecewise distance preserving one within `eps`.
pub fn approximate(space: &PolySpace, h: &PLMap, eps: f64) -> Result<PLMap> {
    let (map, _) = approximate_with_report(space, h, eps)?;
    Ok(map)
}

/// Like [`approximate`], returning the skeleton-stage report alongside.
pub fn approximate_with_report(
    space: &PolySpace,
    h: &PLMap,
    eps: f64,
) -> Result<(PLMap, SkeletonReport)> {
    let mut sink = Collect::default();
    let report = approximate_into(space, h, eps, &mut sink)?;
    Ok((
        PLMap {
            pieces: sink.pieces,
            segments: sink.segments,
            pdp: true,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::check_pdp;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_square() -> PolySpace {
        PolySpace::from_embedded(
            &[
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0],
                vec![0.0, 1.0],
            ],
            &[[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    /// A map that is affine on each chart, sending chart corners to the
    /// given images.
    fn per_chart_map(space: &PolySpace, images: impl Fn(usize, [Point2; 3]) -> [Point2; 3]) -> PLMap {
        let pieces = (0..space.triangle_count())
            .map(|t| {
                let chart = space.chart(t);
                Piece {
                    parent: t,
                    chart,
                    image: images(t, chart),
                }
            })
            .collect();
        PLMap {
            pieces,
            segments: Vec::new(),
            pdp: false,
        }
    }

    /// λ-scaled copy of the square's planar embedding.  Unlike scaling the
    /// charts (which are independent local frames and disagree along the
    /// glued diagonal), this is continuous on the whole space.
    fn scaled_identity(space: &PolySpace, lambda: f64) -> PLMap {
        let v = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        let faces = [[0usize, 1, 2], [0, 2, 3]];
        per_chart_map(space, |t, _| {
            let f = faces[t];
            [v[f[0]] * lambda, v[f[1]] * lambda, v[f[2]] * lambda]
        })
    }

    fn constant_map(space: &PolySpace, c: Point2) -> PLMap {
        per_chart_map(space, |_, _| [c, c, c])
    }

    fn sup_to_input(space: &PolySpace, h: &PLMap, f: &PLMap, samples: usize) -> f64 {
        let by_parent = pieces_by_parent(space, h).unwrap();
        let mut worst = 0.0f64;
        for piece in &f.pieces {
            let c = piece.chart;
            let pts = [
                (c[0] + c[1] + c[2]) * (1.0 / 3.0),
                c[0],
                c[1],
                c[2],
                (c[0] + c[1]) * 0.5,
                (c[1] + c[2]) * 0.5,
                (c[2] + c[0]) * 0.5,
            ];
            for p in pts.into_iter().take(samples) {
                let got = eval_affine(piece, p);
                let want = eval_in_chart(h, &by_parent, piece.parent, p).unwrap();
                worst = worst.max(got.dist(want));
            }
        }
        worst
    }

    #[test]
    fn zigzag_of_an_isometric_segment_is_the_segment() {
        let w = zigzag(2.0, Point2::new(1.0, 1.0), Point2::new(3.0, 1.0), 3).unwrap();
        for (i, &b) in w.breaks.iter().enumerate() {
            let want = Point2::new(1.0 + b, 1.0);
            assert!(w.values[i].dist(want) < 1e-15);
        }
        assert_eq!(w.breaks.len(), 7);
    }

    #[test]
    fn zigzag_over_a_point_image_is_a_tent_along_the_reference_axis() {
        let p = Point2::new(0.4, -0.7);
        let w = zigzag(1.0, p, p, 1).unwrap();
        assert_eq!(w.breaks, vec![0.0, 0.5, 1.0]);
        assert!(w.values[1].dist(p + ZIGZAG_E * 0.5) < 1e-15);
        assert!(w.isometry_residual() < 1e-15);
    }

    #[test]
    fn zigzag_amplitude_follows_the_contraction_factor() {
        // Image 0.6 times shorter than the edge: teeth of height
        // sqrt(1 - 0.36) / (2 * 4) = 0.1.
        let w = zigzag(1.0, Point2::ZERO, Point2::new(0.6, 0.0), 4).unwrap();
        let line = EdgePL::new(vec![0.0, 1.0], vec![Point2::ZERO, Point2::new(0.6, 0.0)]).unwrap();
        let sup = w.sup_dist(&line);
        assert!((sup - 0.1).abs() < 1e-12, "sup {sup}");
        assert!(w.isometry_residual() < 1e-12);
        assert!(w.values[1].y > 0.0);
    }

    #[test]
    fn zigzag_teeth_keep_unit_speed_across_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..60 {
            let len = rng.gen_range(0.2..3.0);
            let ratio = rng.gen_range(0.0..0.999);
            let ang = rng.gen_range(0.0..std::f64::consts::TAU);
            let h0 = Point2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let h1 = h0 + Point2::new(ang.cos(), ang.sin()) * (len * ratio);
            let n = rng.gen_range(1..8);
            let w = zigzag(len, h0, h1, n).unwrap();
            assert!(w.isometry_residual() < 1e-12);
            let line = EdgePL::new(vec![0.0, len], vec![h0, h1]).unwrap();
            assert!(w.sup_dist(&line) <= len / (2.0 * n as f64) + 1e-12);
            assert_eq!(w.values[0], h0);
            assert_eq!(*w.values.last().unwrap(), h1);
        }
    }

    #[test]
    fn collar_maps_collapse_the_ends_and_stretch_the_middle() {
        let space = unit_square();
        let subs = midpoint_refinement(&space, 0);
        let skel = Skeleton::build(&space, subs, 0).unwrap();
        let (maps, stretch) = smash(&skel, 0.01).unwrap();
        // Unit sides dominate the stretch: 1 / 0.98.
        assert!((stretch - 1.0 / 0.98).abs() < 1e-12);
        let unit = maps.iter().find(|m| (m.len - 1.0).abs() < 1e-12).unwrap();
        assert_eq!(unit.eval(0.005), 0.0);
        assert_eq!(unit.eval(0.999), 1.0);
        assert!((unit.eval(0.5) - 0.5).abs() < 1e-12);
        assert!(smash(&skel, 0.6).is_err());
    }

    #[test]
    fn square_skeleton_has_the_right_complex_counts() {
        let space = unit_square();
        for (depth, want_nodes, want_edges) in [(0usize, 4, 5), (1, 9, 16)] {
            let subs = midpoint_refinement(&space, depth);
            let faces = subs.len();
            let skel = Skeleton::build(&space, subs, depth).unwrap();
            assert_eq!(skel.nodes.len(), want_nodes, "depth {depth}");
            assert_eq!(skel.edges.len(), want_edges, "depth {depth}");
            // A disk: V - E + F = 1.
            assert_eq!(
                skel.nodes.len() as i64 - skel.edges.len() as i64 + faces as i64,
                1
            );
        }
    }

    #[test]
    fn tetrahedron_skeleton_is_a_sphere_complex() {
        let s = 1.0 / 8.0f64.sqrt();
        let coords = [
            vec![s, s, s],
            vec![s, -s, -s],
            vec![-s, s, -s],
            vec![-s, -s, s],
        ];
        let faces = [[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
        let space = PolySpace::from_embedded(&coords, &faces).unwrap();
        let subs = midpoint_refinement(&space, 1);
        let faces = subs.len();
        let skel = Skeleton::build(&space, subs, 1).unwrap();
        assert_eq!(skel.nodes.len(), 10);
        assert_eq!(skel.edges.len(), 24);
        assert_eq!(
            skel.nodes.len() as i64 - skel.edges.len() as i64 + faces as i64,
            2
        );
    }

    #[test]
    fn restricting_an_affine_map_stays_linear_on_every_edge() {
        let space = unit_square();
        let h = scaled_identity(&space, 0.5);
        let subs = midpoint_refinement(&space, 1);
        let skel = Skeleton::build(&space, subs, 1).unwrap();
        let edges = restrict_to_skeleton(&space, &skel, &h).unwrap();
        for (e, em) in edges.iter().enumerate() {
            let line = EdgePL::new(
                vec![0.0, em.len()],
                vec![em.values[0], *em.values.last().unwrap()],
            )
            .unwrap();
            assert!(em.sup_dist(&line) < 1e-12, "edge {e} is not linear");
            assert!((em.max_speed() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn skeleton_stage_tracks_a_constant_map() {
        let space = unit_square();
        let c = Point2::new(0.3, 0.2);
        let h = constant_map(&space, c);
        let subs = midpoint_refinement(&space, 2);
        let skel = Skeleton::build(&space, subs, 2).unwrap();
        let h_edges = restrict_to_skeleton(&space, &skel, &h).unwrap();
        let (w, report) = skeleton_approx(&skel, &h_edges, 0.2).unwrap();
        assert!(report.certificate_margin >= -CERTIFICATE_SLACK);
        assert!(report.certificate_pairs > 5_000);
        for (em, he) in w.edge_maps.iter().zip(&h_edges) {
            assert!(em.sup_dist(he) < 0.2);
            assert!(em.isometry_residual() < 1e-12);
        }
    }

    #[test]
    fn approximation_of_a_constant_map_lands_in_a_small_disk() {
        let space = unit_square();
        let c = Point2::new(0.3, 0.2);
        let h = constant_map(&space, c);
        let (f, report) = approximate_with_report(&space, &h, 0.25).unwrap();
        assert!(f.pdp);
        assert!(report.certificate_margin >= -CERTIFICATE_SLACK);
        let rep = check_pdp(&space, &f).unwrap();
        assert!(rep.max_side_residual < 1e-8);
        assert!(sup_to_input(&space, &h, &f, 7) < 0.25);
    }

    #[test]
    fn approximation_of_the_halved_identity_verifies() {
        let space = unit_square();
        let h = scaled_identity(&space, 0.5);
        let (f, _) = approximate_with_report(&space, &h, 0.35).unwrap();
        let rep = check_pdp(&space, &f).unwrap();
        assert!(rep.max_side_residual < 1e-8);
        assert!(sup_to_input(&space, &h, &f, 7) < 0.35);
    }

    #[test]
    fn an_isometric_map_takes_the_fast_path_unchanged() {
        let space = unit_square();
        let mut h = scaled_identity(&space, 1.0);
        h.pdp = false;
        let (f, report) = approximate_with_report(&space, &h, 0.1).unwrap();
        assert!(f.pdp);
        assert_eq!(f.pieces.len(), h.pieces.len());
        assert_eq!(report.collar_teeth, 0);
        for (a, b) in f.pieces.iter().zip(&h.pieces) {
            assert_eq!(a.image, b.image);
        }
    }

    #[test]
    fn an_expanding_map_is_rejected() {
        let space = unit_square();
        let h = scaled_identity(&space, 2.0);
        assert!(approximate(&space, &h, 0.3).is_err());
    }

    #[test]
    fn vertical_projection_of_a_tripod_is_approximated() {
        let coords = [
            vec![0.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![2.0, 0.0, 0.0],
            vec![-1.0, 2.0, 0.0],
            vec![-1.0, -2.0, 0.0],
        ];
        let faces = [[0, 1, 2], [0, 1, 3], [0, 1, 4]];
        let space = PolySpace::from_embedded(&coords, &faces).unwrap();
        let h = per_chart_map(&space, |t, _| {
            let f = faces[t];
            [
                Point2::new(coords[f[0]][0], coords[f[0]][1]),
                Point2::new(coords[f[1]][0], coords[f[1]][1]),
                Point2::new(coords[f[2]][0], coords[f[2]][1]),
            ]
        });
        let (f, report) = approximate_with_report(&space, &h, 0.5).unwrap();
        assert!(report.certificate_margin >= -CERTIFICATE_SLACK);
        let rep = check_pdp(&space, &f).unwrap();
        assert!(rep.max_side_residual < 1e-8);
        assert!(sup_to_input(&space, &h, &f, 7) < 0.5);
    }

    #[test]
    fn hanging_edges_ride_along_as_isometric_segments() {
        let space = PolySpace::new(
            vec![[1.0, 1.0, 1.0]],
            vec![vec![(0, 0, false)], vec![(0, 1, false)], vec![(0, 2, false)]],
            vec![(0, 0, 0.5)],
        )
        .unwrap();
        let mut h = constant_map(&space, Point2::new(0.1, 0.1));
        h.segments.push(SegPiece {
            hedge: 0,
            param: [0.0, 0.5],
            image: [Point2::new(0.1, 0.1), Point2::new(0.3, 0.1)],
        });
        let f = approximate(&space, &h, 0.3).unwrap();
        assert!(!f.segments.is_empty());
        let total: f64 = f
            .segments
            .iter()
            .map(|s| s.image[0].dist(s.image[1]))
            .sum();
        assert!((total - 0.5).abs() < 1e-9);
        let rep = check_pdp(&space, &f).unwrap();
        assert!(rep.max_side_residual < 1e-8);
    }
}
