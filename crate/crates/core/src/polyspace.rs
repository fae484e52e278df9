//! Two-dimensional polyhedral length spaces: triangles with prescribed side
//! lengths glued along sides, each triangle carrying a fixed planar chart.
//!
//! A space is described combinatorially (side lengths plus gluing classes);
//! an embedding in R^n is only ever a way to *derive* those lengths.  All
//! downstream constructions (foldings, subdivisions, piecewise maps) work in
//! the per-triangle charts.

use serde::{Deserialize, Serialize};

use crate::geom2d::{orient, place_apex, Point2};
use crate::tol::DIST_TOL;
use crate::{Error, Result};

/// One member of a gluing class: side `side` of triangle `tri`.  The side's
/// canonical direction runs from corner `(side + 1) % 3` to corner
/// `(side + 2) % 3`; `reversed` says that direction is opposite to the
/// class's abstract `endpoint 0 -> endpoint 1` direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GluingMember {
    pub tri: usize,
    pub side: usize,
    pub reversed: bool,
}

/// A set of triangle sides identified isometrically.  Size one means a free
/// boundary side; sizes three and larger are legal (branching spaces).
#[derive(Clone, Debug)]
pub struct GluingClass {
    pub members: Vec<GluingMember>,
    pub len: f64,
}

/// A segment of prescribed length attached to the space at a single vertex,
/// bounding no triangle.  Stored separately from the gluing structure; maps
/// restrict to such edges one-dimensionally.
#[derive(Clone, Copy, Debug)]
pub struct HangingEdge {
    /// Vertex class of the attachment point.
    pub attach: usize,
    pub len: f64,
}

#[derive(Clone, Debug)]
pub struct PolySpace {
    tris: Vec<[f64; 3]>,
    charts: Vec<[Point2; 3]>,
    gluings: Vec<GluingClass>,
    side_class: Vec<[usize; 3]>,
    vclass: Vec<[usize; 3]>,
    vclass_members: Vec<Vec<(usize, usize)>>,
    hanging: Vec<HangingEdge>,
}

fn chart_for(sides: [f64; 3]) -> Result<[Point2; 3]> {
    let apex = place_apex(sides[2], sides[1], sides[0])?;
    Ok([Point2::ZERO, Point2::new(sides[2], 0.0), apex])
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }
    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut i = i;
        while self.0[i] != r {
            let next = self.0[i];
            self.0[i] = r;
            i = next;
        }
        r
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

impl PolySpace {
    /// Builds a space from per-triangle side lengths (side `i` opposite
    /// corner `i`) and a partition of the side slots into gluing classes.
    /// `hanging` attaches extra dangling segments at `(tri, corner)`.
    pub fn new(
        tris: Vec<[f64; 3]>,
        gluing_members: Vec<Vec<(usize, usize, bool)>>,
        hanging: Vec<(usize, usize, f64)>,
    ) -> Result<PolySpace> {
        if tris.is_empty() {
            return Err(Error::InvalidSpace("no triangles".into()));
        }
        let mut charts = Vec::with_capacity(tris.len());
        for (t, sides) in tris.iter().enumerate() {
            let chart = chart_for(*sides)
                .map_err(|e| Error::InvalidSpace(format!("triangle {t}: {e}")))?;
            charts.push(chart);
        }

        let mut side_class = vec![[usize::MAX; 3]; tris.len()];
        let mut gluings = Vec::with_capacity(gluing_members.len());
        for (ci, members) in gluing_members.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::InvalidSpace(format!("gluing class {ci} is empty")));
            }
            let mut len = None;
            let mut ms = Vec::with_capacity(members.len());
            for &(t, s, reversed) in members {
                if t >= tris.len() || s >= 3 {
                    return Err(Error::InvalidSpace(format!(
                        "gluing class {ci} references side ({t}, {s}) out of range"
                    )));
                }
                if side_class[t][s] != usize::MAX {
                    return Err(Error::InvalidSpace(format!(
                        "side ({t}, {s}) appears in more than one gluing class"
                    )));
                }
                side_class[t][s] = ci;
                let l = tris[t][s];
                match len {
                    None => len = Some(l),
                    Some(prev) => {
                        if (prev - l).abs() > DIST_TOL * prev.max(1.0) {
                            return Err(Error::InvalidSpace(format!(
                                "gluing class {ci} identifies sides of different lengths ({prev} vs {l})"
                            )));
                        }
                    }
                }
                ms.push(GluingMember {
                    tri: t,
                    side: s,
                    reversed,
                });
            }
            gluings.push(GluingClass {
                members: ms,
                len: len.unwrap(),
            });
        }
        for (t, sc) in side_class.iter().enumerate() {
            for (s, &c) in sc.iter().enumerate() {
                if c == usize::MAX {
                    return Err(Error::InvalidSpace(format!(
                        "side ({t}, {s}) belongs to no gluing class; boundary sides need a class of size one"
                    )));
                }
            }
        }

        // Vertex classes from the gluing structure: side endpoints of glued
        // members are identified according to their orientation flags.
        let slot = |t: usize, c: usize| 3 * t + c;
        let mut uf = UnionFind::new(3 * tris.len());
        for class in &gluings {
            let ends = |m: &GluingMember| {
                let a = (m.side + 1) % 3;
                let b = (m.side + 2) % 3;
                if m.reversed {
                    (b, a)
                } else {
                    (a, b)
                }
            };
            let (e0, e1) = ends(&class.members[0]);
            let anchor0 = slot(class.members[0].tri, e0);
            let anchor1 = slot(class.members[0].tri, e1);
            for m in &class.members[1..] {
                let (f0, f1) = ends(m);
                uf.union(anchor0, slot(m.tri, f0));
                uf.union(anchor1, slot(m.tri, f1));
            }
        }
        let mut roots: Vec<usize> = (0..3 * tris.len()).map(|i| uf.find(i)).collect();
        let mut uniq = roots.clone();
        uniq.sort_unstable();
        uniq.dedup();
        let mut vclass = vec![[0usize; 3]; tris.len()];
        let mut vclass_members: Vec<Vec<(usize, usize)>> = vec![Vec::new(); uniq.len()];
        for t in 0..tris.len() {
            for c in 0..3 {
                let id = uniq.binary_search(&roots[slot(t, c)]).unwrap();
                vclass[t][c] = id;
                vclass_members[id].push((t, c));
            }
        }
        roots.clear();

        // Connectivity through shared vertex classes.
        let mut tf = UnionFind::new(tris.len());
        let mut seen_at: Vec<Option<usize>> = vec![None; uniq.len()];
        for t in 0..tris.len() {
            for c in 0..3 {
                match seen_at[vclass[t][c]] {
                    None => seen_at[vclass[t][c]] = Some(t),
                    Some(prev) => tf.union(prev, t),
                }
            }
        }
        let root0 = tf.find(0);
        for t in 1..tris.len() {
            if tf.find(t) != root0 {
                return Err(Error::InvalidSpace("space is not connected".into()));
            }
        }

        let hanging = hanging
            .into_iter()
            .map(|(t, c, len)| -> Result<HangingEdge> {
                if t >= tris.len() || c >= 3 {
                    return Err(Error::InvalidSpace(format!(
                        "hanging edge attached to missing corner ({t}, {c})"
                    )));
                }
                if len <= 0.0 {
                    return Err(Error::InvalidSpace(
                        "hanging edge length must be positive".into(),
                    ));
                }
                Ok(HangingEdge {
                    attach: vclass[t][c],
                    len,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(PolySpace {
            tris,
            charts,
            gluings,
            side_class,
            vclass,
            vclass_members,
            hanging,
        })
    }

    /// Derives a space from vertex coordinates in R^n and triangular faces:
    /// side lengths are Euclidean distances, and faces sharing a vertex
    /// index pair are glued along the corresponding sides.
    pub fn from_embedded(coords: &[Vec<f64>], faces: &[[usize; 3]]) -> Result<PolySpace> {
        if coords.is_empty() || faces.is_empty() {
            return Err(Error::InvalidSpace("empty embedding".into()));
        }
        let dim = coords[0].len();
        if dim == 0 || coords.iter().any(|c| c.len() != dim) {
            return Err(Error::InvalidSpace(
                "embedding coordinates must share one positive dimension".into(),
            ));
        }
        let dist = |a: usize, b: usize| -> f64 {
            coords[a]
                .iter()
                .zip(&coords[b])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        };
        let mut tris = Vec::with_capacity(faces.len());
        for (t, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= coords.len() {
                    return Err(Error::InvalidSpace(format!(
                        "face {t} references missing vertex {v}"
                    )));
                }
            }
            tris.push([
                dist(f[1], f[2]),
                dist(f[2], f[0]),
                dist(f[0], f[1]),
            ]);
        }
        use std::collections::BTreeMap;
        let mut by_pair: BTreeMap<(usize, usize), Vec<(usize, usize, bool)>> = BTreeMap::new();
        for (t, f) in faces.iter().enumerate() {
            for s in 0..3 {
                let a = f[(s + 1) % 3];
                let b = f[(s + 2) % 3];
                if a == b {
                    return Err(Error::InvalidSpace(format!(
                        "face {t} repeats vertex {a}"
                    )));
                }
                // Abstract direction: smaller global index -> larger.
                by_pair
                    .entry((a.min(b), a.max(b)))
                    .or_default()
                    .push((t, s, a > b));
            }
        }
        let gluings: Vec<Vec<(usize, usize, bool)>> = by_pair.into_values().collect();
        PolySpace::new(tris, gluings, Vec::new())
    }

    pub fn triangle_count(&self) -> usize {
        self.tris.len()
    }

    pub fn side_lengths(&self, t: usize) -> [f64; 3] {
        self.tris[t]
    }

    /// Fixed planar chart of triangle `t`: corner 0 at the origin, corner 1
    /// on the positive x-axis, corner 2 in the upper half-plane.
    pub fn chart(&self, t: usize) -> [Point2; 3] {
        self.charts[t]
    }

    pub fn chart_area(&self, t: usize) -> f64 {
        let c = self.charts[t];
        orient(c[0], c[1], c[2]) / 2.0
    }

    pub fn gluing_classes(&self) -> &[GluingClass] {
        &self.gluings
    }

    pub fn class_of(&self, t: usize, s: usize) -> usize {
        self.side_class[t][s]
    }

    pub fn member_of(&self, t: usize, s: usize) -> GluingMember {
        *self.gluings[self.side_class[t][s]]
            .members
            .iter()
            .find(|m| m.tri == t && m.side == s)
            .expect("side listed in its own class")
    }

    pub fn is_boundary(&self, class: usize) -> bool {
        self.gluings[class].members.len() == 1
    }

    pub fn vertex_class(&self, t: usize, c: usize) -> usize {
        self.vclass[t][c]
    }

    pub fn vertex_class_count(&self) -> usize {
        self.vclass_members.len()
    }

    pub fn vertex_class_members(&self, vc: usize) -> &[(usize, usize)] {
        &self.vclass_members[vc]
    }

    pub fn hanging_edges(&self) -> &[HangingEdge] {
        &self.hanging
    }

    /// Chart endpoints of side `s` of triangle `t` in canonical direction
    /// (corner `(s+1)%3` to corner `(s+2)%3`).
    pub fn side_segment(&self, t: usize, s: usize) -> (Point2, Point2) {
        let c = self.charts[t];
        (c[(s + 1) % 3], c[(s + 2) % 3])
    }

    /// Chart point at abstract parameter `param` (distance from the class's
    /// endpoint 0) on the given member side.
    pub fn side_point(&self, m: GluingMember, param: f64) -> Point2 {
        let (a, b) = self.side_segment(m.tri, m.side);
        let len = self.gluings[self.side_class[m.tri][m.side]].len;
        let local = if m.reversed { len - param } else { param };
        a + (b - a) * (local / len)
    }

    /// Abstract parameter of a chart point assumed to lie on side `s`.
    pub fn side_param(&self, t: usize, s: usize, p: Point2) -> f64 {
        let (a, b) = self.side_segment(t, s);
        let len = self.gluings[self.side_class[t][s]].len;
        let local = (p - a).dot((b - a) * (1.0 / len.max(1e-300)));
        if self.member_of(t, s).reversed {
            len - local
        } else {
            local
        }
    }

    /// Smallest edge length (gluing classes and hanging edges).
    pub fn min_edge_length(&self) -> f64 {
        let e = self
            .gluings
            .iter()
            .map(|g| g.len)
            .fold(f64::INFINITY, f64::min);
        self.hanging.iter().map(|h| h.len).fold(e, f64::min)
    }

    /// Smallest corner angle over all triangles, in radians.
    pub fn min_angle(&self) -> f64 {
        let mut best = f64::INFINITY;
        for t in 0..self.tris.len() {
            for c in 0..3 {
                best = best.min(self.corner_angle(t, c));
            }
        }
        best
    }

    pub fn corner_angle(&self, t: usize, c: usize) -> f64 {
        let [a, b, g] = self.tris[t];
        let (opp, s1, s2) = match c {
            0 => (a, b, g),
            1 => (b, g, a),
            _ => (g, a, b),
        };
        (((s1 * s1 + s2 * s2 - opp * opp) / (2.0 * s1 * s2)).clamp(-1.0, 1.0)).acos()
    }

    /// Total angle around a vertex class (2 pi at flat interior points).
    pub fn vertex_total_angle(&self, vc: usize) -> f64 {
        self.vclass_members[vc]
            .iter()
            .map(|&(t, c)| self.corner_angle(t, c))
            .sum()
    }

    /// The set of triangles containing the point: one for interior points,
    /// the gluing class's triangles for side points, the whole vertex class
    /// star for corner points.
    pub fn star(&self, w: &PointOnSpace) -> Vec<usize> {
        let tol = 1e-9;
        let mut out: Vec<usize> = Vec::new();
        let zero: Vec<usize> = (0..3).filter(|&i| w.bary[i] <= tol).collect();
        match zero.len() {
            0 => out.push(w.tri),
            1 => {
                let class = &self.gluings[self.side_class[w.tri][zero[0]]];
                out.extend(class.members.iter().map(|m| m.tri));
            }
            _ => {
                let corner = (0..3).max_by(|&i, &j| {
                    w.bary[i].partial_cmp(&w.bary[j]).expect("finite")
                });
                let vc = self.vclass[w.tri][corner.unwrap()];
                out.extend(self.vclass_members[vc].iter().map(|&(t, _)| t));
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Validates a per-triangle decomposition and assembles it into a
    /// [`Triangulation`].  Sub-triangle vertices on glued sides must agree
    /// across all members of each gluing class.
    pub fn subdivide(&self, decomps: &[Vec<[Point2; 3]>]) -> Result<Triangulation> {
        if decomps.len() != self.tris.len() {
            return Err(Error::InvalidSubdivision(format!(
                "expected {} per-triangle decompositions, got {}",
                self.tris.len(),
                decomps.len()
            )));
        }
        let mut subs = Vec::new();
        for (t, tris) in decomps.iter().enumerate() {
            for &chart in tris {
                subs.push(SubTri { parent: t, chart });
            }
        }
        let tri = Triangulation::try_new(self, subs, None)?;

        // Boundary splits must match across gluing classes.
        for (ci, class) in self.gluings.iter().enumerate() {
            if class.members.len() < 2 {
                continue;
            }
            let mut per_member: Vec<Vec<f64>> = Vec::new();
            for m in &class.members {
                let mut params: Vec<f64> = Vec::new();
                let (a, b) = self.side_segment(m.tri, m.side);
                for sub in decomps[m.tri].iter() {
                    for &v in sub {
                        if dist_to_segment(v, a, b) <= DIST_TOL {
                            let p = self.side_param(m.tri, m.side, v);
                            if p > DIST_TOL && p < class.len - DIST_TOL {
                                params.push(p);
                            }
                        }
                    }
                }
                params.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
                params.dedup_by(|x, y| (*x - *y).abs() <= DIST_TOL);
                per_member.push(params);
            }
            for other in &per_member[1..] {
                let matches = other.len() == per_member[0].len()
                    && other
                        .iter()
                        .zip(&per_member[0])
                        .all(|(x, y)| (x - y).abs() <= DIST_TOL);
                if !matches {
                    return Err(Error::InvalidSubdivision(format!(
                        "mismatched boundary vertices on gluing class {ci}: {:?} vs {:?}",
                        per_member[0], other
                    )));
                }
            }
        }
        Ok(tri)
    }
}

fn dist_to_segment(p: Point2, a: Point2, b: Point2) -> f64 {
    crate::geom2d::seg_closest_point(a, b, p).dist(p)
}

/// A point of the space: a triangle plus barycentric coordinates in it.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PointOnSpace {
    pub tri: usize,
    pub bary: [f64; 3],
}

impl PointOnSpace {
    pub fn new(tri: usize, bary: [f64; 3]) -> Self {
        let s: f64 = bary.iter().sum();
        PointOnSpace {
            tri,
            bary: [bary[0] / s, bary[1] / s, bary[2] / s],
        }
    }

    pub fn chart_point(&self, space: &PolySpace) -> Point2 {
        let c = space.chart(self.tri);
        c[0] * self.bary[0] + c[1] * self.bary[1] + c[2] * self.bary[2]
    }
}

/// Per-corner tag on a sub-triangle of a [`Triangulation`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tag {
    White,
    Black,
    Plain,
}

#[derive(Clone, Copy, Debug)]
pub struct SubTri {
    pub parent: usize,
    pub chart: [Point2; 3],
}

/// A refinement of a space: sub-triangles in parent charts, optionally with
/// corner tags.  Construction checks that every sub-triangle sits inside
/// its parent with positive orientation and that per-parent areas add up.
#[derive(Clone, Debug)]
pub struct Triangulation {
    pub subs: Vec<SubTri>,
    pub tags: Option<Vec<[Tag; 3]>>,
}

impl Triangulation {
    pub fn try_new(
        space: &PolySpace,
        subs: Vec<SubTri>,
        tags: Option<Vec<[Tag; 3]>>,
    ) -> Result<Triangulation> {
        if let Some(tags) = &tags {
            if tags.len() != subs.len() {
                return Err(Error::InvalidSubdivision(
                    "tag list length differs from sub-triangle count".into(),
                ));
            }
        }
        let mut areas = vec![0.0f64; space.triangle_count()];
        for (i, sub) in subs.iter().enumerate() {
            if sub.parent >= space.triangle_count() {
                return Err(Error::InvalidSubdivision(format!(
                    "sub-triangle {i} references missing parent {}",
                    sub.parent
                )));
            }
            let a = orient(sub.chart[0], sub.chart[1], sub.chart[2]) / 2.0;
            if a <= 0.0 {
                return Err(Error::InvalidSubdivision(format!(
                    "sub-triangle {i} is not positively oriented (area {a:.3e})"
                )));
            }
            let parent = space.chart(sub.parent);
            for &v in &sub.chart {
                for k in 0..3 {
                    let o = orient(parent[k], parent[(k + 1) % 3], v);
                    let edge = parent[k].dist(parent[(k + 1) % 3]);
                    if o < -DIST_TOL * edge {
                        return Err(Error::InvalidSubdivision(format!(
                            "sub-triangle {i} leaves its parent {}",
                            sub.parent
                        )));
                    }
                }
            }
            areas[sub.parent] += a;
        }
        for (t, &a) in areas.iter().enumerate() {
            let want = space.chart_area(t);
            if (a - want).abs() > 1e-9 {
                return Err(Error::InvalidSubdivision(format!(
                    "sub-triangle areas in parent {t} sum to {a}, expected {want}"
                )));
            }
        }
        Ok(Triangulation { subs, tags })
    }
}

/// One 2-dimensional piece of a piecewise linear map: a sub-triangle of a
/// parent chart together with the images of its corners.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Piece {
    pub parent: usize,
    pub chart: [Point2; 3],
    pub image: [Point2; 3],
}

/// One 1-dimensional piece: a parameter interval of a hanging edge with the
/// planar images of its endpoints.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SegPiece {
    pub hedge: usize,
    pub param: [f64; 2],
    pub image: [Point2; 2],
}

/// A piecewise linear map from a space to the plane.  `pdp` records that
/// every piece was built as (and verified to be) an isometry onto its image.
#[derive(Clone, Debug, Default)]
pub struct PLMap {
    pub pieces: Vec<Piece>,
    pub segments: Vec<SegPiece>,
    pub pdp: bool,
}

impl PLMap {
    /// Point-location based evaluation.  Wherever pieces overlap on shared
    /// boundaries any owner gives the same value for a continuous map; the
    /// lowest-index piece is used.
    pub fn eval(&self, space: &PolySpace, at: &PointOnSpace) -> Result<Point2> {
        let p = at.chart_point(space);
        let mut best: Option<(f64, Point2)> = None;
        for piece in self.pieces.iter().filter(|pc| pc.parent == at.tri) {
            let slack = piece_slack(piece);
            let mut worst = f64::INFINITY;
            for k in 0..3 {
                let o = orient(piece.chart[k], piece.chart[(k + 1) % 3], p)
                    / piece.chart[k].dist(piece.chart[(k + 1) % 3]).max(1e-300);
                worst = worst.min(o);
            }
            if worst >= -slack {
                let v = eval_affine(piece, p);
                if best.map_or(true, |(w, _)| worst > w && w < 0.0) {
                    best = Some((worst, v));
                }
                if worst >= 0.0 {
                    return Ok(v);
                }
            }
        }
        best.map(|(_, v)| v).ok_or_else(|| {
            Error::InvalidInput(format!(
                "point in triangle {} is outside every piece",
                at.tri
            ))
        })
    }
}

fn piece_slack(piece: &Piece) -> f64 {
    let mut s = 1.0f64;
    for v in &piece.chart {
        s = s.max(v.x.abs()).max(v.y.abs());
    }
    DIST_TOL * s
}

/// Value of the affine extension of the piece's corner mapping at `p`.
///
/// Barycentric weights lose `eps / area` digits, so a sliver piece would
/// scatter evaluations by far more than its corner data warrants.  Pieces
/// thinner than a millionth of their diameter are treated as the similarity
/// determined by their longest side and the handedness of the third corner,
/// which reproduces that side's endpoints exactly and stays stable no matter
/// how thin the triangle gets.
pub fn eval_affine(piece: &Piece, p: Point2) -> Point2 {
    let [a, b, c] = piece.chart;
    let area = orient(a, b, c);
    let d01 = a.dist(b);
    let d12 = b.dist(c);
    let d20 = c.dist(a);
    let longest = d01.max(d12).max(d20);
    if area.abs() >= 1e-6 * longest * longest {
        let wa = orient(p, b, c) / area;
        let wb = orient(a, p, c) / area;
        let wc = 1.0 - wa - wb;
        return piece.image[0] * wa + piece.image[1] * wb + piece.image[2] * wc;
    }
    let (i, j) = if d01 >= d12 && d01 >= d20 {
        (0, 1)
    } else if d12 >= d01 && d12 >= d20 {
        (1, 2)
    } else {
        (2, 0)
    };
    let k = 3 - i - j;
    let u = piece.chart[j] - piece.chart[i];
    let w = piece.image[j] - piece.image[i];
    let (lu, lw) = (u.norm(), w.norm());
    if lu == 0.0 || lw == 0.0 {
        return piece.image[i];
    }
    let (u, w) = (u / lu, w / lw);
    let flip = orient(piece.chart[i], piece.chart[j], piece.chart[k])
        * orient(piece.image[i], piece.image[j], piece.image[k])
        < 0.0;
    let d = p - piece.chart[i];
    let (x, mut y) = (d.dot(u), d.dot(u.perp()));
    if flip {
        y = -y;
    }
    piece.image[i] + (w * x + w.perp() * y) * (lw / lu)
}
