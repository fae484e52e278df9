//! Extending a non-expanding assignment on finitely many points of a convex
//! polygon to a piecewise distance preserving map of the whole polygon, by
//! recursion on the number of points: each step carves out the star-shaped
//! region where the new point still has slack, fans it with rigid cones, and
//! fills the leftover sectors with at most one fold each.

use crate::geom2d::{
    orient, perpendicular_bisector, seg_closest_point, seg_intersection, ConvexPolygon,
    HalfPlane, Isometry2, Point2,
};
use crate::tol::DIST_TOL;
use crate::verify::eval_plane_affine;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// One affine piece of a plane-to-plane map: a domain triangle (positively
/// oriented) and the images of its corners.  The image triangle may be
/// degenerate when the piece collapses dimension.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PlanePiece {
    pub dom: [Point2; 3],
    pub img: [Point2; 3],
}

/// A piecewise affine map on a polygonal region of the plane, with a flag
/// recording whether every piece is an isometry.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PlaneMap {
    pub pieces: Vec<PlanePiece>,
    pub pdp: bool,
}

impl PlaneMap {
    /// Index of the piece containing `p`, judged by the least signed edge
    /// distance; `None` when `p` is clearly outside every piece.
    pub fn locate(&self, p: Point2) -> Option<usize> {
        let mut best = None;
        let mut best_slack = f64::NEG_INFINITY;
        for (i, piece) in self.pieces.iter().enumerate() {
            let mut slack = f64::INFINITY;
            for k in 0..3 {
                let a = piece.dom[k];
                let b = piece.dom[(k + 1) % 3];
                let len = a.dist(b).max(1e-300);
                slack = slack.min(orient(a, b, p) / len);
            }
            if slack > best_slack {
                best_slack = slack;
                best = Some(i);
            }
        }
        if best_slack < -1e-6 {
            return None;
        }
        best
    }

    pub fn eval(&self, p: Point2) -> Result<Point2> {
        let i = self.locate(p).ok_or_else(|| {
            Error::InvalidInput(format!("point ({}, {}) is outside the map's domain", p.x, p.y))
        })?;
        Ok(eval_plane_affine(&self.pieces[i], p))
    }
}

/// Point pairs `(a_i, b_i)` asking for a map with `f(a_i) = b_i`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub pairs: Vec<(Point2, Point2)>,
}

impl ConstraintSet {
    /// The pairs admit a non-expanding interpolant only if no image distance
    /// exceeds its source distance.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.pairs.len() {
            for j in (i + 1)..self.pairs.len() {
                let (ai, bi) = self.pairs[i];
                let (aj, bj) = self.pairs[j];
                if bi.dist(bj) > ai.dist(aj) + DIST_TOL {
                    return Err(Error::InvalidConstraints(format!(
                        "pairs {i} and {j} expand: |a_i-a_j| = {} but |b_i-b_j| = {}",
                        ai.dist(aj),
                        bi.dist(bj)
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One maximal segment of the slack region's interior boundary, with the
/// index of the map piece it came from.
#[derive(Clone, Debug)]
pub struct BoundarySeg {
    pub seg: [Point2; 2],
    pub piece: usize,
}

/// The open region where a prescribed point still has slack — where the
/// current map moves points closer to the target image than they are to the
/// source point — cut piecewise from the map's triangles.
#[derive(Clone, Debug)]
pub struct OmegaRegion {
    pub region: Vec<ConvexPolygon>,
    pub boundary: Vec<BoundarySeg>,
}

impl OmegaRegion {
    pub fn is_empty(&self) -> bool {
        self.region.is_empty()
    }
}

fn piece_isometry(p: &PlanePiece) -> Result<Isometry2> {
    Isometry2::from_three_points(p.dom, p.img)
}

/// Corner-snapping tolerance for bisector splits.  Mesh vertices this close
/// to the cut line count as lying on it; when the prescribed points continue
/// an isometric chain, the new frontier passes through earlier pins exactly,
/// and snapping keeps every piece's split agreeing on those shared vertices
/// instead of shaving rounding-width slivers around them.
fn snap_tol(h: &PlaneMap) -> f64 {
    let mut m = 1.0f64;
    for p in &h.pieces {
        for v in &p.dom {
            m = m.max(v.x.abs()).max(v.y.abs());
        }
    }
    1e-11 * m
}

/// One piece's triangle split by a bisector, with corners within `vtol` of
/// the line treated as lying on it.
struct BisectorSplit {
    /// Vertex loop of the part on the far side (signed ≥ 0), kept as it is
    /// by a rebuild.  Kept as a raw loop: a clip can shave it so thin that
    /// a consecutive boundary triple goes collinear, yet its material still
    /// counts and fans into well-conditioned triangles from a good apex.
    kept: Vec<Point2>,
    /// Part on the near side (signed ≤ 0), to be re-covered by cones.
    slack: Option<ConvexPolygon>,
    /// The split line crossed with the triangle.
    cut: Option<[Point2; 2]>,
    /// Whether some corner lies strictly on the near side.
    any_slack: bool,
}

fn split_by_bisector(dom: &[Point2; 3], hp: &HalfPlane, vtol: f64) -> BisectorSplit {
    let s = [hp.signed(dom[0]), hp.signed(dom[1]), hp.signed(dom[2])];
    let on = [s[0].abs() <= vtol, s[1].abs() <= vtol, s[2].abs() <= vtol];
    let mut kept: Vec<Point2> = Vec::new();
    let mut slack: Vec<Point2> = Vec::new();
    let mut cut: Vec<Point2> = Vec::new();
    for k in 0..3 {
        let kn = (k + 1) % 3;
        if on[k] {
            kept.push(dom[k]);
            slack.push(dom[k]);
            cut.push(dom[k]);
        } else if s[k] > 0.0 {
            kept.push(dom[k]);
        } else {
            slack.push(dom[k]);
        }
        if !on[k] && !on[kn] && s[k] * s[kn] < 0.0 {
            let t = s[k] / (s[k] - s[kn]);
            let x = dom[k] + (dom[kn] - dom[k]) * t;
            kept.push(x);
            slack.push(x);
            cut.push(x);
        }
    }
    cut.dedup_by(|x, y| x.dist(*y) <= vtol);
    let cut = if cut.len() >= 2 {
        let (mut p, mut q) = (cut[0], cut[1]);
        // With three collinear hits keep the extreme two.
        for &extra in cut.iter().skip(2) {
            if extra.dist(p) > p.dist(q) && extra.dist(p) > extra.dist(q) {
                q = extra;
            } else if extra.dist(q) > p.dist(q) {
                p = extra;
            }
        }
        Some([p, q])
    } else {
        None
    };
    BisectorSplit {
        kept,
        slack: ConvexPolygon::try_new(slack).ok(),
        cut,
        any_slack: s.iter().any(|&v| v < -vtol),
    }
}

/// Fans a convex vertex loop into map pieces under one isometry, tolerating
/// degenerate loops: triangles too thin for an isometry to be refit from
/// their corners are skipped, which loses at most rounding-level area.
fn fan_loop(loop_pts: &[Point2], iso: &Isometry2, out: &mut Vec<PlanePiece>) -> bool {
    if loop_pts.len() < 3 {
        return false;
    }
    // Fan from the vertex whose two adjacent corners subtend the widest
    // opening: clips shave slivers, and fanning from the sliver's apex keeps
    // every triangle as fat as the loop allows.
    let n = loop_pts.len();
    let mut apex = 0;
    let mut best = f64::MIN;
    for k in 0..n {
        let o = orient(
            loop_pts[k],
            loop_pts[(k + 1) % n],
            loop_pts[(k + n - 1) % n],
        )
        .abs();
        if o > best {
            best = o;
            apex = k;
        }
    }
    let mut pushed = false;
    for j in 1..n - 1 {
        let tri = [
            loop_pts[apex],
            loop_pts[(apex + j) % n],
            loop_pts[(apex + j + 1) % n],
        ];
        let (d01, d12, d02) = (tri[0].dist(tri[1]), tri[1].dist(tri[2]), tri[0].dist(tri[2]));
        let longest = d01.max(d12).max(d02);
        let shortest = d01.min(d12).min(d02);
        if shortest > 10.0 * crate::tol::ALG_TOL
            && orient(tri[0], tri[1], tri[2]) > 4.0 * crate::tol::ALG_TOL * longest * longest
        {
            out.push(PlanePiece {
                dom: tri,
                img: [iso.apply(tri[0]), iso.apply(tri[1]), iso.apply(tri[2])],
            });
            pushed = true;
        }
    }
    pushed
}

fn dom_polygon(p: &PlanePiece) -> Result<ConvexPolygon> {
    ConvexPolygon::try_new(p.dom.to_vec())
        .map_err(|e| Error::Internal(format!("piece domain is not a triangle: {e}")))
}

/// Fans a convex polygon into map pieces under one isometry.
fn rigid_pieces(poly: &ConvexPolygon, iso: &Isometry2, out: &mut Vec<PlanePiece>) {
    for tri in poly.fan_triangles() {
        out.push(PlanePiece {
            dom: tri,
            img: [iso.apply(tri[0]), iso.apply(tri[1]), iso.apply(tri[2])],
        });
    }
}

fn rigid_map(area: &ConvexPolygon, iso: &Isometry2) -> PlaneMap {
    let mut pieces = Vec::new();
    rigid_pieces(area, iso, &mut pieces);
    PlaneMap { pieces, pdp: true }
}

/// Computes the slack region of `(a1, b1)` under `h`.  Per piece, `h`
/// extends to a rigid motion of the whole plane; pulling `b1` back through
/// it turns the slack condition into a half-plane, so the region is convex
/// on each piece and its interior boundary is a segment per piece.
pub fn omega(h: &PlaneMap, a1: Point2, b1: Point2) -> Result<OmegaRegion> {
    let mut region = Vec::new();
    let mut boundary = Vec::new();
    let vtol = snap_tol(h);
    let probe: Option<usize> = std::env::var("OMEGA_PROBE")
        .ok()
        .and_then(|s| s.parse().ok());
    for (pi, piece) in h.pieces.iter().enumerate() {
        let iota = piece_isometry(piece)?;
        let b1p = iota.inverse().apply(b1);
        if b1p.dist(a1) <= DIST_TOL {
            if probe == Some(pi) {
                println!("PROBE {pi}: compat, skipped");
            }
            continue;
        }
        let hp = perpendicular_bisector(a1, b1p)?;
        let split = split_by_bisector(&piece.dom, &hp, vtol);
        if probe == Some(pi) {
            println!(
                "PROBE {pi}: a1={a1:?} b1={b1:?} slack={} any={} signs={:?}",
                split.slack.is_some(),
                split.any_slack,
                piece.dom.iter().map(|&v| hp.signed(v)).collect::<Vec<_>>()
            );
        }
        // A piece's slice of the interior boundary counts whenever the piece
        // holds material on the near side, even material too thin to survive
        // as a polygon — dropping it would snap a link out of the frontier.
        if split.slack.is_some() || split.any_slack {
            if let Some([p, q]) = split.cut {
                if p.dist(q) > 100.0 * crate::tol::ALG_TOL {
                    boundary.push(BoundarySeg {
                        seg: [p, q],
                        piece: pi,
                    });
                }
            }
        }
        if let Some(inside) = split.slack {
            region.push(inside);
        }
    }

    // A piece whose rigid motion already sends a1 to b1 lies pointwise on
    // the slack frontier, so the frontier leaves the bisector locus and runs
    // along the piece's edges wherever a neighbour still has genuine slack.
    // Emit those stretches, carried by the compatible piece itself.
    for (ci, cpiece) in h.pieces.iter().enumerate() {
        let iota_c = piece_isometry(cpiece)?;
        if iota_c.inverse().apply(b1).dist(a1) > DIST_TOL {
            continue;
        }
        for k in 0..3 {
            let (u, v) = (cpiece.dom[k], cpiece.dom[(k + 1) % 3]);
            let e = v - u;
            let elen = e.norm();
            if elen <= 100.0 * crate::tol::ALG_TOL {
                continue;
            }
            // Only edges facing a1 can carry frontier: coning over an edge
            // whose far side holds the pin would sweep through the piece.
            let side_c = orient(u, v, cpiece.dom[(k + 2) % 3]);
            let side_a = orient(u, v, a1);
            if side_a * side_c > 0.0 && side_a.abs() > 1e-12 * elen {
                continue;
            }
            let ud = e * (1.0 / elen);
            let line_tol = 1e-9 * elen.max(1.0);
            for (pi, piece) in h.pieces.iter().enumerate() {
                if pi == ci {
                    continue;
                }
                let iota = piece_isometry(piece)?;
                let b1p = iota.inverse().apply(b1);
                if b1p.dist(a1) <= DIST_TOL {
                    continue;
                }
                let hp = perpendicular_bisector(a1, b1p)?;
                for m in 0..3 {
                    let (w0, w1) = (piece.dom[m], piece.dom[(m + 1) % 3]);
                    let off0 = ud.perp().dot(w0 - u).abs();
                    let off1 = ud.perp().dot(w1 - u).abs();
                    if off0 > line_tol || off1 > line_tol {
                        continue;
                    }
                    let (t0, t1) = ((w0 - u).dot(ud), (w1 - u).dot(ud));
                    let lo = t0.min(t1).max(0.0);
                    let hi = t0.max(t1).min(elen);
                    if hi - lo <= line_tol {
                        continue;
                    }
                    // Keep the part on the neighbour's slack side.  A
                    // bisector running along the edge itself yields signed
                    // values at rounding level; snap those to zero so the
                    // crossing interpolation never divides noise by noise.
                    let (mut sa, mut sb) = (lo, hi);
                    let snap = |g: f64| if g.abs() <= vtol { 0.0 } else { g };
                    let (ga, gb) = (
                        snap(hp.signed(u + ud * lo)),
                        snap(hp.signed(u + ud * hi)),
                    );
                    if ga > 0.0 && gb > 0.0 {
                        continue;
                    }
                    if ga > 0.0 || gb > 0.0 {
                        let t = lo + (hi - lo) * (ga / (ga - gb));
                        if ga > 0.0 {
                            sa = t;
                        } else {
                            sb = t;
                        }
                    }
                    if sb - sa > 100.0 * crate::tol::ALG_TOL {
                        boundary.push(BoundarySeg {
                            seg: [u + ud * sa, u + ud * sb],
                            piece: ci,
                        });
                    }
                }
            }
        }
    }
    // A piece whose bisector runs along one of its edges reports that edge as
    // its own cut while the neighbour on the other side reports the same
    // stretch; keep one copy of each such frontier segment.
    let mut dedup: Vec<BoundarySeg> = Vec::new();
    'seg: for b in boundary {
        let (p, q) = (b.seg[0], b.seg[1]);
        let tol = 1e-9 * (1.0 + p.dist(q));
        for d in &dedup {
            let (dp, dq) = (d.seg[0], d.seg[1]);
            if (p.dist(dp) <= tol && q.dist(dq) <= tol)
                || (p.dist(dq) <= tol && q.dist(dp) <= tol)
            {
                if std::env::var("BLIND_DEBUG").is_ok() {
                    println!(
                        "DEDUP drop piece={} seg={:?} (matches piece={} seg={:?})",
                        b.piece, b.seg, d.piece, d.seg
                    );
                }
                continue 'seg;
            }
        }
        dedup.push(b);
    }
    Ok(OmegaRegion {
        region,
        boundary: dedup,
    })
}

/// A boundary segment oriented along its arc, carrying the images its cone
/// isometry must reproduce.
#[derive(Clone, Copy, Debug)]
struct ArcSeg {
    p: Point2,
    q: Point2,
    ip: Point2,
    iq: Point2,
    piece: usize,
}

impl ArcSeg {
    fn reversed(self) -> ArcSeg {
        ArcSeg {
            p: self.q,
            q: self.p,
            ip: self.iq,
            iq: self.ip,
            piece: self.piece,
        }
    }
}

/// Chains segments into maximal arcs by endpoint proximity, orientation
/// agnostic; each returned arc is a consecutive run, flagged closed when it
/// loops back onto itself.
fn chain_arcs(mut segs: Vec<ArcSeg>, tol: f64) -> Vec<(Vec<ArcSeg>, bool)> {
    let mut arcs = Vec::new();
    while let Some(first) = segs.pop() {
        let mut arc = vec![first];
        let mut closed = false;
        // Grow forward from the tail, always taking the nearest candidate so
        // a micro-segment sitting at a junction is not skipped over.
        loop {
            let tail = arc.last().unwrap().q;
            if arc.len() > 1 && tail.dist(arc[0].p) <= tol {
                closed = true;
                break;
            }
            let mut found: Option<(usize, ArcSeg, f64)> = None;
            for (i, s) in segs.iter().enumerate() {
                let (dp, dq) = (s.p.dist(tail), s.q.dist(tail));
                let (d, cand) = if dp <= dq { (dp, *s) } else { (dq, s.reversed()) };
                if d <= tol && found.as_ref().is_none_or(|&(_, _, bd)| d < bd) {
                    found = Some((i, cand, d));
                }
            }
            match found {
                Some((i, s, _)) => {
                    segs.remove(i);
                    arc.push(s);
                }
                None => {
                    if std::env::var("CHAIN_DEBUG").is_ok() {
                        let mut near: Vec<(f64, usize)> = segs
                            .iter()
                            .enumerate()
                            .map(|(i, s)| (s.p.dist(tail).min(s.q.dist(tail)), i))
                            .collect();
                        near.sort_by(|a, b| a.0.total_cmp(&b.0));
                        for &(d, i) in near.iter().take(3) {
                            if d <= 100.0 * tol {
                                println!(
                                    "CHAIN stop at tail={tail:?}: free seg piece={} d={d:e} (tol={tol:e})",
                                    segs[i].piece
                                );
                            }
                        }
                    }
                    break;
                }
            }
        }
        if !closed {
            // Grow backward from the head.
            loop {
                let head = arc[0].p;
                let mut found: Option<(usize, ArcSeg, f64)> = None;
                for (i, s) in segs.iter().enumerate() {
                    let (dp, dq) = (s.q.dist(head), s.p.dist(head));
                    let (d, cand) = if dp <= dq { (dp, *s) } else { (dq, s.reversed()) };
                    if d <= tol && found.as_ref().is_none_or(|&(_, _, bd)| d < bd) {
                        found = Some((i, cand, d));
                    }
                }
                match found {
                    Some((i, s, _)) => {
                        segs.remove(i);
                        arc.insert(0, s);
                    }
                    None => break,
                }
            }
        }
        arcs.push((arc, closed));
    }
    arcs
}

/// Arc-length position of `p` along the polygon's boundary cycle.
fn boundary_param(area: &ConvexPolygon, p: Point2) -> (f64, f64) {
    let verts = area.vertices();
    let n = verts.len();
    let mut best = (0.0, f64::INFINITY);
    let mut acc = 0.0;
    for i in 0..n {
        let (u, v) = (verts[i], verts[(i + 1) % n]);
        let foot = seg_closest_point(u, v, p);
        let d = foot.dist(p);
        if d < best.1 {
            best = (acc + foot.dist(u), d);
        }
        acc += u.dist(v);
    }
    (best.0, best.1)
}

/// The isometry sending `a1 -> b1` and the whole segment `[a1, p] -> [b1,
/// ip]`, with handedness chosen so that `q` lands on `iq`.
fn cone_isometry(
    a1: Point2,
    b1: Point2,
    p: Point2,
    ip: Point2,
    q: Point2,
    iq: Point2,
    tol: f64,
) -> Result<Isometry2> {
    // Both the rotation and the reflection send `a1 -> b1, p -> ip`; only
    // the image of `q` tells them apart.  For short or nearly radial
    // segments both land within `tol` of `iq`, so take the closer fit
    // rather than the first acceptable one: the residual gap becomes a
    // seam between this cone and the piece that emitted the segment.
    let mut best: Option<(Isometry2, f64)> = None;
    for flip in [false, true] {
        if let Ok(iso) = Isometry2::from_two_points(a1, p, b1, ip, flip) {
            let err = iso.apply(q).dist(iq);
            if err <= tol && best.as_ref().is_none_or(|&(_, b)| err < b) {
                best = Some((iso, err));
            }
        }
    }
    best.map(|(iso, _)| iso).ok_or_else(|| {
        Error::Internal("no rigid cone matches the prescribed boundary images".into())
    })
}

/// Fills one blind sector: the part of the slack region swept by rays from
/// `a1` through a stretch of the outer boundary, on which the map is pinned
/// only along the two extreme rays.  After normalizing so one pinned ray is
/// fixed, the fill is either a single isometry or one fold across the
/// bisector through `a1`.
#[allow(clippy::too_many_arguments)]
fn fill_blind_sector(
    a1: Point2,
    b1: Point2,
    walk: &[Point2],
    x1: Point2,
    y1: Point2,
    xk: Point2,
    yk: Point2,
    scale: f64,
    pieces: &mut Vec<PlanePiece>,
) -> Result<()> {
    let tol = 1e-7 * scale.max(1.0);
    let mut norm = None;
    let side_x = orient(a1, x1, xk);
    for flip in [false, true] {
        if let Ok(up) = Isometry2::from_two_points(b1, y1, a1, x1, flip) {
            let side_y = orient(a1, x1, up.apply(yk));
            if side_x.abs() <= tol * scale
                || side_y.abs() <= tol * scale
                || side_x.signum() == side_y.signum()
            {
                norm = Some(up);
                break;
            }
        }
    }
    let up = norm.ok_or_else(|| {
        Error::Internal("no normalizing isometry for a blind sector".into())
    })?;
    let ykp = up.apply(yk);
    if std::env::var("BLIND_DEBUG").is_ok() {
        println!("SECTOR a1={a1:?} b1={b1:?}");
        println!("  x1={x1:?} y1={y1:?}");
        println!("  xk={xk:?} yk={yk:?}");
        println!("  walk={walk:?}");
        println!("  ykp={ykp:?} rigid={}", ykp.dist(xk) <= tol);
    }

    let fan: Vec<[Point2; 3]> = (0..walk.len() - 1)
        .map(|i| [a1, walk[i], walk[i + 1]])
        .filter(|t| orient(t[0], t[1], t[2]) > 1e-12 * scale * scale)
        .collect();

    // Rigid only when the normalized image of `yk` coincides with `xk` to
    // rounding: a rigid fill misplaces the far seam by exactly that gap,
    // while the fold below pins both extreme rays exactly.
    if ykp.dist(xk) <= 1e-11 * scale.max(1.0) {
        let iso = up.inverse();
        for tri in fan {
            pieces.push(PlanePiece {
                dom: tri,
                img: [iso.apply(tri[0]), iso.apply(tri[1]), iso.apply(tri[2])],
            });
        }
        return Ok(());
    }

    // Fold across the bisector of the angle between xk and its normalized
    // image: the reflection in that line carries one onto the other.
    let u = (xk - a1)
        .normalized()
        .map_err(|e| Error::Internal(format!("blind sector ray through xk: {e}")))?;
    let v = (ykp - a1)
        .normalized()
        .map_err(|e| Error::Internal(format!("blind sector ray through yk: {e}")))?;
    let sum = u + v;
    let dir = if sum.norm() <= 1e-9 { u.perp() } else { sum.normalized()? };
    let normal = dir.perp();
    let mut hp = HalfPlane::new(normal, normal.dot(a1));
    if hp.signed(xk) <= 0.0 {
        hp = hp.flipped();
    }
    let refl = Isometry2::reflection(a1, dir)?;
    let keep = up.inverse();
    let fold = up.inverse().compose(&refl);
    if fold.apply(xk).dist(yk) > tol {
        return Err(Error::Internal(
            "blind sector fold misses its prescribed image".into(),
        ));
    }
    // `hp` is the side of the fold line holding the ray through x1, where the
    // map stays rigid; the reflection acts on the other side, where xk lives.
    for tri in fan {
        let poly = ConvexPolygon::try_new(tri.to_vec())
            .map_err(|e| Error::Internal(format!("degenerate blind fan triangle: {e}")))?;
        for (clip, iso) in [(hp, &keep), (hp.flipped(), &fold)] {
            if let Some(part) = poly.clip_halfplane(&clip) {
                rigid_pieces(&part, iso, pieces);
            }
        }
    }
    Ok(())
}

/// Rebuilds the map after pinning `(a1, b1)`: keeps `h` outside the slack
/// region, covers the region with cones from `a1` over its interior
/// boundary, and fills the blind sectors along the outer boundary.
pub fn fan_and_fill(
    h: &PlaneMap,
    a1: Point2,
    b1: Point2,
    region: &OmegaRegion,
    area: &ConvexPolygon,
) -> Result<PlaneMap> {
    let scale = area.perimeter().max(1.0);
    let vtol = snap_tol(h);
    let mut pieces: Vec<PlanePiece> = Vec::new();
    let mut dropped_all = true;
    let mut kept_all = true;

    let hole_pt: Option<Point2> = std::env::var("HOLE_PT").ok().and_then(|s| {
        let mut it = s.split(',').map(|v| v.parse::<f64>());
        match (it.next(), it.next()) {
            (Some(Ok(x)), Some(Ok(y))) => Some(Point2::new(x, y)),
            _ => None,
        }
    });
    if let Some(pt) = hole_pt {
        for (i, piece) in h.pieces.iter().enumerate() {
            let near = (0..3).all(|k| {
                let (va, vb) = (piece.dom[k], piece.dom[(k + 1) % 3]);
                orient(va, vb, pt) >= -1e-7 * va.dist(vb).max(1e-12)
            });
            if near {
                let iota = piece_isometry(piece)?;
                let b1p = iota.inverse().apply(b1);
                if b1p.dist(a1) <= DIST_TOL {
                    println!("HOLE_PT in h piece {i}: COMPAT dom={:?}", piece.dom);
                    continue;
                }
                let hp = perpendicular_bisector(a1, b1p)?;
                let split = split_by_bisector(&piece.dom, &hp, vtol);
                println!(
                    "HOLE_PT in h piece {i}: dom={:?}\n  signs={:?} kept={} slack={} cut={:?}",
                    piece.dom,
                    [hp.signed(piece.dom[0]), hp.signed(piece.dom[1]), hp.signed(piece.dom[2])],
                    split.kept.len(),
                    split.slack.is_some(),
                    split.cut
                );
            }
        }
    }

    for piece in &h.pieces {
        let iota = piece_isometry(piece)?;
        let b1p = iota.inverse().apply(b1);
        if b1p.dist(a1) <= DIST_TOL {
            pieces.push(*piece);
            dropped_all = false;
            continue;
        }
        let hp = perpendicular_bisector(a1, b1p)?;
        let split = split_by_bisector(&piece.dom, &hp, vtol);
        let has_slack = split.slack.is_some() || split.any_slack;
        if !has_slack {
            pieces.push(*piece);
            dropped_all = false;
            continue;
        }
        kept_all = false;
        if fan_loop(&split.kept, &iota, &mut pieces) {
            dropped_all = false;
        }
    }

    let kept_count = pieces.len();

    if region.boundary.is_empty() {
        if dropped_all {
            // Nothing binds: the whole polygon slides rigidly.
            return Ok(rigid_map(area, &Isometry2::translation(b1 - a1)));
        }
        if kept_all {
            return Ok(h.clone());
        }
        return Err(Error::Internal(
            "slack region has no interior boundary yet splits the domain".into(),
        ));
    }

    // Cone over every boundary segment.
    let segs: Vec<ArcSeg> = region
        .boundary
        .iter()
        .map(|b| -> Result<ArcSeg> {
            let iota = piece_isometry(&h.pieces[b.piece])?;
            Ok(ArcSeg {
                p: b.seg[0],
                q: b.seg[1],
                ip: iota.apply(b.seg[0]),
                iq: iota.apply(b.seg[1]),
                piece: b.piece,
            })
        })
        .collect::<Result<_>>()?;

    let chain_tol = 1e-7 * scale;
    let mut arcs = chain_arcs(segs, chain_tol);
    // Neighbouring pieces measure the frontier against different pulled-back
    // bisectors, so where it grazes a mesh vertex one piece can report a
    // rounding-level cut that no neighbour continues.  Such stranded micro
    // arcs bound slack slivers of sub-rounding area; coning over them would
    // sweep rays across territory the rebuild keeps.  Drop them, except for
    // micro bites whose both ends already sit on the outer boundary — those
    // chain into the blind-sector walk like any other open arc.
    arcs.retain(|(arc, closed)| {
        let len: f64 = arc.iter().map(|s| s.p.dist(s.q)).sum();
        if len > chain_tol {
            return true;
        }
        if !*closed {
            let (_, dp) = boundary_param(area, arc[0].p);
            let (_, dq) = boundary_param(area, arc.last().unwrap().q);
            if dp <= 1e-6 * scale && dq <= 1e-6 * scale {
                return true;
            }
        }
        if std::env::var("BLIND_DEBUG").is_ok() {
            println!(
                "DROP micro arc: len={len:e} closed={closed} head={:?}",
                arc[0].p
            );
        }
        false
    });

    // Where the frontier crosses a triangle nearly along the cut line, the
    // crossing point is ill-conditioned: rounding-level disagreement between
    // the neighbours' pulled-back bisectors is divided by the sine of the
    // crossing angle, so two adjacent pieces can place their shared junction
    // farther apart than the chaining tolerance.  Stitch such breaks back
    // together: ends that stop in the interior are joined to the nearest
    // matching interior end, smallest gap first.  Ends resting on the outer
    // boundary are genuine arc terminations and are never merged.
    let btol = 1e-6 * scale;
    let merge_tol = 1e-5 * scale;
    let off_boundary = |p: Point2| boundary_param(area, p).1 > btol;
    loop {
        for (arc, closed) in arcs.iter_mut() {
            if !*closed && arc.len() > 1 {
                let (head, tail) = (arc[0].p, arc.last().unwrap().q);
                if tail.dist(head) <= merge_tol && off_boundary(head) && off_boundary(tail) {
                    *closed = true;
                }
            }
        }
        let mut best: Option<(usize, usize, bool, f64)> = None;
        for i in 0..arcs.len() {
            if arcs[i].1 {
                continue;
            }
            let tail_i = arcs[i].0.last().unwrap().q;
            if !off_boundary(tail_i) {
                continue;
            }
            for j in 0..arcs.len() {
                if i == j || arcs[j].1 {
                    continue;
                }
                let head_j = arcs[j].0[0].p;
                let tail_j = arcs[j].0.last().unwrap().q;
                for (pt, rev) in [(head_j, false), (tail_j, true)] {
                    if !off_boundary(pt) {
                        continue;
                    }
                    let gap = tail_i.dist(pt);
                    if gap <= merge_tol
                        && best.as_ref().is_none_or(|&(_, _, _, bg)| gap < bg)
                    {
                        best = Some((i, j, rev, gap));
                    }
                }
            }
        }
        match best {
            Some((i, j, rev, gap)) => {
                if std::env::var("BLIND_DEBUG").is_ok() {
                    println!("MERGE arcs {i}+{j} rev={rev} gap={gap:e}");
                }
                let (mut tail_arc, _) = arcs.remove(j);
                if rev {
                    tail_arc.reverse();
                    for s in tail_arc.iter_mut() {
                        *s = s.reversed();
                    }
                }
                let i = if j < i { i - 1 } else { i };
                arcs[i].0.extend(tail_arc);
            }
            None => break,
        }
    }

    // Orient every arc counterclockwise around a1.
    for (arc, _) in arcs.iter_mut() {
        let turn: f64 = arc.iter().map(|s| orient(a1, s.p, s.q)).sum();
        if turn < 0.0 {
            arc.reverse();
            for s in arc.iter_mut() {
                *s = s.reversed();
            }
        }
    }

    let match_tol = 1e-7 * scale;
    for (arc, closed) in &arcs {
        for (k, s) in arc.iter().enumerate() {
            if orient(a1, s.p, s.q) > 1e-12 * scale * scale {
                let iso = cone_isometry(a1, b1, s.p, s.ip, s.q, s.iq, match_tol)?;
                pieces.push(PlanePiece {
                    dom: [a1, s.p, s.q],
                    img: [b1, iso.apply(s.p), iso.apply(s.q)],
                });
            }
            // Consecutive segments need not touch: a merged break, or simple
            // junction scatter, leaves a wedge between this segment's end and
            // the next one's start.  Dress it with its own cone, anchored on
            // both segments' endpoint data so the junction rays map exactly;
            // the isometry fit rejects any join the data cannot support.
            let next = if k + 1 < arc.len() {
                Some(&arc[k + 1])
            } else if *closed {
                Some(&arc[0])
            } else {
                None
            };
            if let Some(t) = next {
                if s.q.dist(t.p) > 10.0 * crate::tol::ALG_TOL
                    && orient(a1, s.q, t.p) > 1e-12 * scale * scale
                {
                    let iso = cone_isometry(a1, b1, s.q, s.iq, t.p, t.ip, match_tol)?;
                    pieces.push(PlanePiece {
                        dom: [a1, s.q, t.p],
                        img: [b1, iso.apply(s.q), iso.apply(t.p)],
                    });
                }
            }
        }
    }

    // Blind sectors live between consecutive open arcs along the outer
    // boundary.
    let open: Vec<&Vec<ArcSeg>> = arcs
        .iter()
        .filter(|(_, closed)| !closed)
        .map(|(arc, _)| arc)
        .collect();
    if !open.is_empty() {
        let per = area.perimeter();
        let mut ends = Vec::new();
        for arc in &open {
            let head = arc[0].p;
            let tail = arc.last().unwrap().q;
            let (tp, dp) = boundary_param(area, head);
            let (tq, dq) = boundary_param(area, tail);
            if dp > 1e-6 * scale || dq > 1e-6 * scale {
                if std::env::var("BLIND_DEBUG").is_ok() {
                    println!("OPEN ARC off boundary: dp={dp:e} dq={dq:e} scale={scale:e}");
                    println!("  a1={a1:?} b1={b1:?}");
                    println!("  head={head:?} tail={tail:?} segs={}", arc.len());
                    println!("  all arcs: {}", arcs.len());
                    for (k, (a, closed)) in arcs.iter().enumerate() {
                        println!(
                            "    arc {k}: closed={closed} n={} head={:?} tail={:?}",
                            a.len(),
                            a[0].p,
                            a.last().unwrap().q
                        );
                        for s in a.iter() {
                            println!(
                                "      seg piece={} p=({:.12},{:.12}) q=({:.12},{:.12})",
                                s.piece, s.p.x, s.p.y, s.q.x, s.q.y
                            );
                        }
                    }
                    for b in &region.boundary {
                        if b.seg[0].dist(head).min(b.seg[1].dist(head)) < 1e-4 {
                            println!("  near-head boundary seg {:?} piece {}", b.seg, b.piece);
                        }
                    }
                    if let Ok(spec) = std::env::var("NEAR_PT") {
                        let mut it = spec.split(',').map(|s| s.trim().parse::<f64>().unwrap());
                        let pt = Point2::new(it.next().unwrap(), it.next().unwrap());
                        for b in &region.boundary {
                            if b.seg[0].dist(pt).min(b.seg[1].dist(pt)) < 1e-5 {
                                println!("  NEAR_PT boundary seg {:?} piece {}", b.seg, b.piece);
                            }
                        }
                    }
                    if let Ok(list) = std::env::var("ARC_PIECES") {
                        for tok in list.split(',') {
                            if let Ok(pi) = tok.trim().parse::<usize>() {
                                if pi < h.pieces.len() {
                                    let piece = &h.pieces[pi];
                                    let iota = piece_isometry(piece).unwrap();
                                    let b1p = iota.inverse().apply(b1);
                                    let sgn: Vec<f64> = if b1p.dist(a1) > DIST_TOL {
                                        let hp = perpendicular_bisector(a1, b1p).unwrap();
                                        piece.dom.iter().map(|&v| hp.signed(v)).collect()
                                    } else {
                                        vec![]
                                    };
                                    println!(
                                        "  DUMP piece {pi}: dom={:?}\n    b1p_dist={:e} signs={sgn:?}",
                                        piece.dom,
                                        b1p.dist(a1)
                                    );
                                }
                            }
                        }
                    }
                    for (pi, piece) in h.pieces.iter().enumerate() {
                        let inside = (0..3).all(|k| {
                            let (va, vb) = (piece.dom[k], piece.dom[(k + 1) % 3]);
                            orient(va, vb, head) >= -1e-6 * va.dist(vb)
                        });
                        if inside {
                            let iota = piece_isometry(piece).unwrap();
                            let b1p = iota.inverse().apply(b1);
                            let sgn: Vec<f64> = if b1p.dist(a1) > DIST_TOL {
                                let hp = perpendicular_bisector(a1, b1p).unwrap();
                                piece.dom.iter().map(|&v| hp.signed(v)).collect()
                            } else {
                                vec![]
                            };
                            println!(
                                "  piece {pi} CONTAINS head: dom={:?}\n    b1p_dist={:e} signs={sgn:?}",
                                piece.dom,
                                b1p.dist(a1)
                            );
                        }
                    }
                }
                return Err(Error::Internal(
                    "an open boundary arc does not end on the polygon boundary".into(),
                ));
            }
            ends.push((tp, tq, arc));
        }
        let verts = area.vertices();
        let mut corner_params = Vec::new();
        let mut acc = 0.0;
        for i in 0..verts.len() {
            corner_params.push((acc, verts[i]));
            acc += verts[i].dist(verts[(i + 1) % verts.len()]);
        }
        for &(_, t_end, arc) in &ends {
            // The next arc start, cyclically, after this arc's tail.
            let mut best: Option<(f64, &Vec<ArcSeg>)> = None;
            for &(tp, _, other) in &ends {
                let fwd = (tp - t_end).rem_euclid(per);
                if best.as_ref().map_or(true, |(b, _)| fwd < *b) {
                    best = Some((fwd, other));
                }
            }
            let (gap, next) = best.expect("nonempty arcs");
            let x1 = arc.last().unwrap().q;
            let y1 = arc.last().unwrap().iq;
            let xk = next[0].p;
            let yk = next[0].ip;
            if x1.dist(xk) <= chain_tol {
                continue;
            }
            let mut walk = vec![x1];
            let mut offs: Vec<(f64, Point2)> = corner_params
                .iter()
                .map(|&(t, v)| ((t - t_end).rem_euclid(per), v))
                .filter(|&(d, _)| d > 1e-9 * scale && d < gap - 1e-9 * scale)
                .collect();
            offs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            for (_, v) in offs {
                if walk.last().unwrap().dist(v) > 1e-9 * scale {
                    walk.push(v);
                }
            }
            if walk.last().unwrap().dist(xk) > 1e-9 * scale {
                walk.push(xk);
            }
            if walk.len() < 2 {
                continue;
            }
            // The gap may already be occupied by pieces that were kept as
            // they are (a fully slack-free triangle reaching the outer
            // boundary); only genuinely bare stretches get the sector fill.
            let mut wlen = 0.0;
            for i in 0..walk.len() - 1 {
                wlen += walk[i].dist(walk[i + 1]);
            }
            let mut rem = wlen / 2.0;
            let mut wmid = walk[0];
            for i in 0..walk.len() - 1 {
                let d = walk[i].dist(walk[i + 1]);
                if rem <= d {
                    wmid = walk[i] + (walk[i + 1] - walk[i]) * (rem / d.max(f64::MIN_POSITIVE));
                    break;
                }
                rem -= d;
            }
            let covered = pieces[..kept_count].iter().any(|p| {
                (0..3).all(|k| {
                    let (va, vb) = (p.dom[k], p.dom[(k + 1) % 3]);
                    orient(va, vb, wmid) >= -1e-9 * va.dist(vb) * scale
                })
            });
            if covered {
                continue;
            }
            fill_blind_sector(a1, b1, &walk, x1, y1, xk, yk, scale, &mut pieces)?;
        }
    }

    // Global audit: the pieces must re-tile the polygon.
    let mut covered = 0.0;
    for p in &pieces {
        covered += orient(p.dom[0], p.dom[1], p.dom[2]) / 2.0;
    }
    let want = area.area();
    if std::env::var("AUDIT_TRACE").is_ok() && (covered - want).abs() > 1e-12 {
        println!("AUDIT a1={a1:?}: excess={:e}", covered - want);
    }
    if (covered - want).abs() > 1e-7 * want.max(1.0) {
        if std::env::var("BLIND_DEBUG").is_ok() {
            let part = |lo: usize, hi: usize| -> f64 {
                pieces[lo..hi]
                    .iter()
                    .map(|p| orient(p.dom[0], p.dom[1], p.dom[2]) / 2.0)
                    .sum()
            };
            println!(
                "AREA AUDIT: kept={:.12} rest={:.12} want={want:.12} excess={:e}",
                part(0, kept_count),
                part(kept_count, pieces.len()),
                covered - want
            );
            println!("  a1={a1:?} b1={b1:?} arcs={} ", arcs.len());
            // Probe for holes: edge midpoints whose outward offset is inside
            // the polygon but covered by no piece.
            let inside_any = |pt: Point2| -> bool {
                pieces.iter().any(|p| {
                    (0..3).all(|k| {
                        let (va, vb) = (p.dom[k], p.dom[(k + 1) % 3]);
                        orient(va, vb, pt) >= -1e-12 * va.dist(vb).max(1e-12)
                    })
                })
            };
            let in_area = |pt: Point2| -> bool {
                let vs = area.vertices();
                (0..vs.len()).all(|k| {
                    let (va, vb) = (vs[k], vs[(k + 1) % vs.len()]);
                    orient(va, vb, pt) >= 1e-12 * va.dist(vb)
                })
            };
            let mut shown = 0;
            'probe: for (i, p) in pieces.iter().enumerate() {
                for k in 0..3 {
                    let (va, vb) = (p.dom[k], p.dom[(k + 1) % 3]);
                    let m = (va + vb) * 0.5;
                    let out = (vb - va).perp() * (-1.0 / va.dist(vb).max(1e-300));
                    for d in [1e-8, 1e-6, 1e-5] {
                        let probe = m + out * d;
                        if in_area(probe) && !inside_any(probe) {
                            println!(
                                "  HOLE piece {i} edge {k} mid={m:?} depth {d:e} (va={va:?} vb={vb:?})"
                            );
                            shown += 1;
                            if shown >= 12 {
                                break 'probe;
                            }
                            break;
                        }
                    }
                }
            }
        }
        return Err(Error::Internal(format!(
            "rebuilt map covers area {covered} of {want}"
        )));
    }
    Ok(PlaneMap { pieces, pdp: true })
}

fn extend_recursive(area: &ConvexPolygon, pairs: &[(Point2, Point2)]) -> Result<PlaneMap> {
    let (a1, b1) = pairs[0];
    if pairs.len() == 1 {
        return Ok(rigid_map(area, &Isometry2::translation(b1 - a1)));
    }
    let h = extend_recursive(area, &pairs[1..])?;
    if h.eval(a1)?.dist(b1) <= DIST_TOL {
        return Ok(h);
    }
    if std::env::var("PIN_TRACE").is_ok() {
        println!("PIN_TRACE {} a1={a1:?} b1={b1:?}", pairs.len());
    }
    let region = omega(&h, a1, b1)?;
    let out = fan_and_fill(&h, a1, b1, &region, area)?;
    if std::env::var("PIN_CHECK").is_ok() {
        let rep = crate::verify::check_pdp_plane(&out)?;
        if !rep.pass {
            println!(
                "PIN {} a1={a1:?} b1={b1:?}: cont={:e} side={:e}",
                pairs.len(),
                rep.max_continuity_residual,
                rep.max_side_residual
            );
            if std::env::var("PIN_DETAIL").ok().as_deref()
                == Some(&pairs.len().to_string())
            {
                use crate::verify::{eval_plane_affine, PlaneGrid};
                let grid = PlaneGrid::new(&out, 1.0);
                let mut worst = (0.0f64, 0usize, 0usize, a1);
                let mut buf = Vec::new();
                for (i, p) in out.pieces.iter().enumerate() {
                    for (k, &v) in p.dom.iter().enumerate() {
                        buf.clear();
                        grid.containing(&out, v, &mut buf);
                        for &j in &buf {
                            if j as usize == i {
                                continue;
                            }
                            let d =
                                eval_plane_affine(&out.pieces[j as usize], v).dist(p.img[k]);
                            if d > worst.0 {
                                worst = (d, i, j as usize, v);
                            }
                        }
                    }
                }
                let (d, i, j, v) = worst;
                println!("  worst crack: d={d:e} at {v:?}");
                println!(
                    "  piece {i}: dom={:?}\n    img={:?}",
                    out.pieces[i].dom, out.pieces[i].img
                );
                println!(
                    "  piece {j}: dom={:?}\n    img={:?}",
                    out.pieces[j].dom, out.pieces[j].img
                );
            }
        }
    }
    Ok(out)
}

/// Builds a piecewise distance preserving map of `area` sending each `a_i`
/// to `b_i`, provided no image distance exceeds its source distance and
/// every `a_i` lies in `area`.
pub fn extend(area: &ConvexPolygon, constraints: &ConstraintSet) -> Result<PlaneMap> {
    constraints.validate()?;
    for (i, (a, _)) in constraints.pairs.iter().enumerate() {
        if !area.contains(*a, DIST_TOL) {
            return Err(Error::InvalidConstraints(format!(
                "source point {i} at ({}, {}) is outside the polygon",
                a.x, a.y
            )));
        }
    }
    if constraints.pairs.is_empty() {
        return Ok(rigid_map(area, &Isometry2::identity()));
    }
    extend_recursive(area, &constraints.pairs)
}

/// Non-expanding extension of a map on a finite point set to an arbitrary
/// convex region: project onto the points' hull, then apply the rigid
/// extension inside it.  The result is non-expanding everywhere but no
/// longer distance preserving piecewise, hence flagged accordingly.
pub fn kirszbraun_finite(
    q: &[Point2],
    images: &[Point2],
    domain: &ConvexPolygon,
) -> Result<PlaneMap> {
    if q.is_empty() || q.len() != images.len() {
        return Err(Error::InvalidInput(
            "need equally many source and image points, at least one".into(),
        ));
    }
    let constraints = ConstraintSet {
        pairs: q.iter().copied().zip(images.iter().copied()).collect(),
    };
    constraints.validate().map_err(|_| {
        Error::InvalidConstraints("the assignment expands some pair".into())
    })?;

    let hull = crate::geom2d::convex_hull(q)?;
    if hull.len() == 1 {
        // One distinct source: slide rigidly.
        let i = q.iter().position(|p| p.dist(hull[0]) <= DIST_TOL).unwrap();
        return Ok(PlaneMap {
            pieces: rigid_map(domain, &Isometry2::translation(images[i] - q[i])).pieces,
            pdp: false,
        });
    }
    if hull.len() == 2 {
        return kirszbraun_collinear(q, images, domain, hull[0], hull[1]);
    }

    let hull_poly = ConvexPolygon::try_new(hull)?;
    let f = extend(&hull_poly, &constraints)?;
    let mut pieces = Vec::new();

    // Inside the hull: the rigid extension, clipped to the domain.
    for piece in &f.pieces {
        let mut poly = Some(dom_polygon(piece)?);
        for i in 0..domain.vertices().len() {
            let u = domain.vertices()[i];
            let v = domain.vertices()[(i + 1) % domain.vertices().len()];
            let n = (v - u).perp();
            // Interior of the domain is where n . (x - u) >= 0.
            let hp = HalfPlane::new(-n, -n.dot(u));
            poly = poly.and_then(|p| p.clip_halfplane(&hp));
        }
        if let Some(p) = poly {
            for tri in p.fan_triangles() {
                pieces.push(PlanePiece {
                    dom: tri,
                    img: [
                        eval_plane_affine(piece, tri[0]),
                        eval_plane_affine(piece, tri[1]),
                        eval_plane_affine(piece, tri[2]),
                    ],
                });
            }
        }
    }

    let hv = hull_poly.vertices();
    let n = hv.len();
    for i in 0..n {
        let (u, v) = (hv[i], hv[(i + 1) % n]);
        let d = v - u;
        let len = d.norm();
        let ud = d * (1.0 / len);
        let n_in = d.perp();
        // Strip beyond edge (u, v): projection lands inside the edge.
        let beyond = HalfPlane::new(n_in, n_in.dot(u));
        let lo = HalfPlane::new(-ud, -ud.dot(u));
        let hi = HalfPlane::new(ud, ud.dot(v));
        let strip = domain
            .clip_halfplane(&beyond)
            .and_then(|p| p.clip_halfplane(&lo))
            .and_then(|p| p.clip_halfplane(&hi));
        if let Some(strip) = strip {
            // The rigid extension may change pieces along the edge: split
            // the strip wherever a piece side crosses it.
            let mut ts = vec![0.0, len];
            for piece in &f.pieces {
                for k in 0..3 {
                    let (c1, c2) = (piece.dom[k], piece.dom[(k + 1) % 3]);
                    if let Some((t, _)) = seg_intersection(u, v, c1, c2) {
                        ts.push((t * len).clamp(0.0, len));
                    }
                    let foot = seg_closest_point(u, v, c1);
                    if foot.dist(c1) <= 1e-9 {
                        ts.push((c1 - u).dot(ud).clamp(0.0, len));
                    }
                }
            }
            ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ts.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);
            for w in ts.windows(2) {
                let (ta, tb) = (w[0], w[1]);
                if tb - ta <= 1e-9 {
                    continue;
                }
                let cut_lo = HalfPlane::new(-ud, -(ud.dot(u) + ta));
                let cut_hi = HalfPlane::new(ud, ud.dot(u) + tb);
                let part = strip
                    .clip_halfplane(&cut_lo)
                    .and_then(|p| p.clip_halfplane(&cut_hi));
                if let Some(part) = part {
                    let mid = u + ud * ((ta + tb) / 2.0);
                    let idx = f.locate(mid).ok_or_else(|| {
                        Error::Internal("hull edge midpoint escapes the extension".into())
                    })?;
                    let proj_img = |c: Point2| {
                        let t = (c - u).dot(ud).clamp(ta, tb);
                        eval_plane_affine(&f.pieces[idx], u + ud * t)
                    };
                    for tri in part.fan_triangles() {
                        pieces.push(PlanePiece {
                            dom: tri,
                            img: [proj_img(tri[0]), proj_img(tri[1]), proj_img(tri[2])],
                        });
                    }
                }
            }
        }

        // Wedge beyond vertex v: projection is constant there.  The cell of
        // points nearest to v is bounded by the perpendiculars at v to the
        // two incident edges.
        let j = (i + 1) % n;
        let w_next = hv[(j + 1) % n];
        let ud_next = (w_next - v).normalized()?;
        let wedge = domain
            .clip_halfplane(&HalfPlane::new(-ud, -ud.dot(v)))
            .and_then(|p| p.clip_halfplane(&HalfPlane::new(ud_next, ud_next.dot(v))));
        if let Some(wedge) = wedge {
            let img = f.eval(v)?;
            for tri in wedge.fan_triangles() {
                pieces.push(PlanePiece {
                    dom: tri,
                    img: [img, img, img],
                });
            }
        }
    }

    Ok(PlaneMap { pieces, pdp: false })
}

/// The collinear case: project onto the carrier line, then interpolate the
/// images along it, each interval at its own (non-expanding) speed.
fn kirszbraun_collinear(
    q: &[Point2],
    images: &[Point2],
    domain: &ConvexPolygon,
    h0: Point2,
    h1: Point2,
) -> Result<PlaneMap> {
    let ud = (h1 - h0).normalized()?;
    let mut knots: Vec<(f64, Point2)> = Vec::new();
    for (p, img) in q.iter().zip(images) {
        let t = (*p - h0).dot(ud);
        if (h0 + ud * t).dist(*p) > DIST_TOL {
            return Err(Error::Internal("hull is a segment but a point is off it".into()));
        }
        if !knots.iter().any(|&(s, _)| (s - t).abs() <= DIST_TOL) {
            knots.push((t, *img));
        }
    }
    knots.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // Evaluate the 1D interpolant at parameter t.
    let value = |t: f64| -> Point2 {
        if t <= knots[0].0 {
            return knots[0].1;
        }
        for w in knots.windows(2) {
            let ((t0, v0), (t1, v1)) = (w[0], w[1]);
            if t <= t1 {
                let s = (t - t0) / (t1 - t0);
                return v0 + (v1 - v0) * s;
            }
        }
        knots.last().unwrap().1
    };

    let mut cuts: Vec<f64> = knots.iter().map(|&(t, _)| t).collect();
    // Include the domain's reach so end strips are explicit.
    let (mut tmin, mut tmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in domain.vertices() {
        let t = (v - h0).dot(ud);
        tmin = tmin.min(t);
        tmax = tmax.max(t);
    }
    cuts.push(tmin - 1.0);
    cuts.push(tmax + 1.0);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);

    let mut pieces = Vec::new();
    for w in cuts.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        let lo = HalfPlane::new(-ud, -(ud.dot(h0) + ta));
        let hi = HalfPlane::new(ud, ud.dot(h0) + tb);
        let part = domain
            .clip_halfplane(&lo)
            .and_then(|p| p.clip_halfplane(&hi));
        if let Some(part) = part {
            let img_of = |c: Point2| value((c - h0).dot(ud).clamp(ta, tb));
            for tri in part.fan_triangles() {
                pieces.push(PlanePiece {
                    dom: tri,
                    img: [img_of(tri[0]), img_of(tri[1]), img_of(tri[2])],
                });
            }
        }
    }
    Ok(PlaneMap { pieces, pdp: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom2d::hull_perimeter;
    use crate::verify::check_pdp_plane;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> ConvexPolygon {
        ConvexPolygon::rectangle(x0, y0, x1, y1).unwrap()
    }

    fn pt(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    #[test]
    fn single_pair_gives_a_translation() {
        let area = rect(0.0, 0.0, 2.0, 1.0);
        let cs = ConstraintSet {
            pairs: vec![(pt(0.0, 0.0), pt(5.0, 5.0))],
        };
        let f = extend(&area, &cs).unwrap();
        assert!(f.pdp);
        assert!(f.eval(pt(0.0, 0.0)).unwrap().dist(pt(5.0, 5.0)) < 1e-12);
        assert!(f.eval(pt(1.3, 0.7)).unwrap().dist(pt(6.3, 5.7)) < 1e-12);
        assert!(check_pdp_plane(&f).unwrap().pass);
    }

    #[test]
    fn fixed_points_give_the_identity() {
        let area = rect(0.0, 0.0, 1.0, 1.0);
        let pts = [pt(0.2, 0.2), pt(0.8, 0.3), pt(0.5, 0.9)];
        let cs = ConstraintSet {
            pairs: pts.iter().map(|&p| (p, p)).collect(),
        };
        let f = extend(&area, &cs).unwrap();
        for i in 0..=5 {
            for j in 0..=5 {
                let p = pt(i as f64 / 5.0, j as f64 / 5.0);
                assert!(f.eval(p).unwrap().dist(p) < 1e-12);
            }
        }
    }

    #[test]
    fn two_collapsing_points_fold_the_strip() {
        // Closed form for the pinned pair: left of the fold line the map
        // reflects, right of it the map translates.
        let area = rect(0.0, 0.0, 3.0, 1.0);
        let cs = ConstraintSet {
            pairs: vec![
                (pt(0.0, 0.0), pt(0.0, 0.0)),
                (pt(1.0, 0.0), pt(0.0, 0.0)),
            ],
        };
        let f = extend(&area, &cs).unwrap();
        assert!(check_pdp_plane(&f).unwrap().pass);
        for i in 0..=15 {
            for j in 0..=5 {
                let p = pt(3.0 * i as f64 / 15.0, j as f64 / 5.0);
                let want = if p.x <= 0.5 {
                    pt(-p.x, p.y)
                } else {
                    pt(p.x - 1.0, p.y)
                };
                let got = f.eval(p).unwrap();
                assert!(
                    got.dist(want) < 1e-10,
                    "at ({}, {}): got ({}, {})",
                    p.x,
                    p.y,
                    got.x,
                    got.y
                );
            }
        }
    }

    #[test]
    fn slack_region_of_a_translation_is_a_half_strip() {
        let area = rect(0.0, 0.0, 3.0, 1.0);
        let h = rigid_map(&area, &Isometry2::translation(pt(-1.0, 0.0)));
        let region = omega(&h, pt(0.0, 0.0), pt(0.0, 0.0)).unwrap();
        let total: f64 = region.region.iter().map(|p| p.area()).sum();
        assert!((total - 0.5).abs() < 1e-9, "area {total}");
        let blen: f64 = region
            .boundary
            .iter()
            .map(|b| b.seg[0].dist(b.seg[1]))
            .sum();
        assert!((blen - 1.0).abs() < 1e-9, "boundary length {blen}");
        for b in &region.boundary {
            assert!((b.seg[0].x - 0.5).abs() < 1e-12);
            assert!((b.seg[1].x - 0.5).abs() < 1e-12);
        }

        // Empty when the pin is already satisfied.
        let id = rigid_map(&area, &Isometry2::identity());
        let region = omega(&id, pt(1.0, 0.5), pt(1.0, 0.5)).unwrap();
        assert!(region.is_empty());
    }

    #[test]
    fn slack_region_is_star_shaped_from_the_pin() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let area = rect(0.0, 0.0, 2.0, 2.0);
        for _ in 0..20 {
            let pairs: Vec<(Point2, Point2)> = (0..3)
                .map(|_| {
                    (
                        pt(rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0)),
                        pt(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)),
                    )
                })
                .collect();
            let cs = ConstraintSet { pairs };
            if cs.validate().is_err() {
                continue;
            }
            let h = match extend(&area, &ConstraintSet {
                pairs: cs.pairs[1..].to_vec(),
            }) {
                Ok(h) => h,
                Err(_) => continue,
            };
            let (a1, b1) = cs.pairs[0];
            if h.eval(a1).unwrap().dist(b1) <= DIST_TOL {
                continue;
            }
            let region = omega(&h, a1, b1).unwrap();
            let inside = |p: Point2| region.region.iter().any(|poly| poly.contains(p, 1e-7));
            for poly in &region.region {
                let c = poly.centroid();
                if !inside(c) {
                    continue;
                }
                for k in 1..10 {
                    let y = a1 + (c - a1) * (k as f64 / 10.0);
                    assert!(inside(y), "segment to the pin leaves the region");
                }
            }
        }
    }

    #[test]
    fn replay_extend_tmp() {
        let Ok(path) = std::env::var("EXTEND_REPLAY") else { return };
        let text = std::fs::read_to_string(path).unwrap();
        let mut lines = text.lines();
        let head: Vec<f64> = lines
            .next()
            .unwrap()
            .split_whitespace()
            .map(|s| s.parse().unwrap())
            .collect();
        let area = ConvexPolygon::try_new(vec![
            pt(head[0], head[1]),
            pt(head[2], head[3]),
            pt(head[4], head[5]),
        ])
        .unwrap();
        let pairs: Vec<(Point2, Point2)> = lines
            .map(|l| {
                let v: Vec<f64> = l.split_whitespace().map(|s| s.parse().unwrap()).collect();
                (pt(v[0], v[1]), pt(v[2], v[3]))
            })
            .collect();
        println!("replay: {} constraints", pairs.len());
        let cs = ConstraintSet { pairs };
        match extend(&area, &cs) {
            Ok(f) => {
                let report = check_pdp_plane(&f).unwrap();
                println!("replay OK: {report:?}");
                if !report.pass {
                    use crate::verify::{eval_plane_affine, PlaneGrid};
                    let grid = PlaneGrid::new(&f, 1.0);
                    let mut worst = (0.0f64, 0usize, 0usize, pt(0.0, 0.0));
                    let mut buf = Vec::new();
                    for (i, p) in f.pieces.iter().enumerate() {
                        for (k, &v) in p.dom.iter().enumerate() {
                            buf.clear();
                            grid.containing(&f, v, &mut buf);
                            for &j in &buf {
                                if j as usize == i {
                                    continue;
                                }
                                let d = eval_plane_affine(&f.pieces[j as usize], v)
                                    .dist(p.img[k]);
                                if d > worst.0 {
                                    worst = (d, i, j as usize, v);
                                }
                            }
                        }
                    }
                    let (d, i, j, v) = worst;
                    println!("worst crack: d={d:e} at {v:?}");
                    println!("  piece {i}: dom={:?}\n    img={:?}", f.pieces[i].dom, f.pieces[i].img);
                    println!("  piece {j}: dom={:?}\n    img={:?}", f.pieces[j].dom, f.pieces[j].img);
                }
            }
            Err(e) => println!("replay ERR: {e:?}"),
        }
    }

    #[test]
    fn random_constraint_sets_are_matched() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for round in 0..30 {
            let area = rect(0.0, 0.0, 2.0, 2.0);
            let n = rng.gen_range(1..=4);
            // Contractions of random similarity type are always valid.
            let lambda: f64 = rng.gen_range(0.0..=1.0);
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let mirror: bool = rng.gen();
            let shift = pt(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let pairs: Vec<(Point2, Point2)> = (0..n)
                .map(|_| {
                    let a = pt(rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0));
                    let am = if mirror { pt(a.y, a.x) } else { a };
                    let r = Isometry2::rotation(theta).apply(am);
                    (a, r * lambda + shift)
                })
                .collect();
            let cs = ConstraintSet { pairs };
            cs.validate().unwrap();
            let f = extend(&area, &cs).unwrap();
            for (i, (a, b)) in cs.pairs.iter().enumerate() {
                let got = f.eval(*a).unwrap();
                assert!(
                    got.dist(*b) < 1e-8,
                    "round {round}, pair {i}: |f(a) - b| = {}",
                    got.dist(*b)
                );
            }
            let report = check_pdp_plane(&f).unwrap();
            assert!(report.pass, "round {round}: {report:?}");
        }
    }

    #[test]
    fn image_hulls_never_outgrow_source_hulls() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let area = rect(0.0, 0.0, 2.0, 2.0);
        let cs = ConstraintSet {
            pairs: vec![
                (pt(0.1, 0.1), pt(0.3, 0.3)),
                (pt(1.9, 0.2), pt(1.2, 0.4)),
                (pt(1.0, 1.8), pt(0.8, 1.0)),
            ],
        };
        cs.validate().unwrap();
        let f = extend(&area, &cs).unwrap();
        for _ in 0..20 {
            let xs: Vec<Point2> = (0..5)
                .map(|_| pt(rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0)))
                .collect();
            let ys: Vec<Point2> = xs.iter().map(|&x| f.eval(x).unwrap()).collect();
            let src = hull_perimeter(&xs).unwrap();
            let img = hull_perimeter(&ys).unwrap();
            assert!(img <= src + 1e-8, "hull grew: {img} > {src}");
        }
    }

    #[test]
    fn finite_kirszbraun_cases() {
        let domain = rect(-1.0, -1.0, 3.0, 2.0);

        // One point: rigid slide.
        let f = kirszbraun_finite(&[pt(0.0, 0.0)], &[pt(2.0, 1.0)], &domain).unwrap();
        assert!(f.eval(pt(0.5, 0.5)).unwrap().dist(pt(2.5, 1.5)) < 1e-12);

        // Collinear pair, contracting.
        let f = kirszbraun_finite(
            &[pt(0.0, 0.0), pt(2.0, 0.0)],
            &[pt(0.0, 0.0), pt(1.0, 0.0)],
            &domain,
        )
        .unwrap();
        assert!(!f.pdp);
        assert!(f.eval(pt(0.0, 0.0)).unwrap().dist(pt(0.0, 0.0)) < 1e-9);
        assert!(f.eval(pt(2.0, 0.0)).unwrap().dist(pt(1.0, 0.0)) < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..1000 {
            let x = pt(rng.gen_range(-1.0..3.0), rng.gen_range(-1.0..2.0));
            let y = pt(rng.gen_range(-1.0..3.0), rng.gen_range(-1.0..2.0));
            let (fx, fy) = (f.eval(x).unwrap(), f.eval(y).unwrap());
            assert!(fx.dist(fy) <= x.dist(y) + 1e-9);
        }

        // Identity on a genuine hull fixes the hull pointwise.
        let src = [pt(0.0, 0.0), pt(2.0, 0.0), pt(1.0, 1.5)];
        let f = kirszbraun_finite(&src, &src, &domain).unwrap();
        for &p in &src {
            assert!(f.eval(p).unwrap().dist(p) < 1e-9);
        }
        assert!(f.eval(pt(1.0, 0.5)).unwrap().dist(pt(1.0, 0.5)) < 1e-9);
        // Outside, everything lands on the hull and stays non-expanding.
        for _ in 0..1000 {
            let x = pt(rng.gen_range(-1.0..3.0), rng.gen_range(-1.0..2.0));
            let y = pt(rng.gen_range(-1.0..3.0), rng.gen_range(-1.0..2.0));
            let (fx, fy) = (f.eval(x).unwrap(), f.eval(y).unwrap());
            assert!(fx.dist(fy) <= x.dist(y) + 1e-9);
        }
    }

    #[test]
    fn rejects_expanding_or_external_constraints() {
        let area = rect(0.0, 0.0, 1.0, 1.0);
        let expanding = ConstraintSet {
            pairs: vec![
                (pt(0.1, 0.1), pt(0.0, 0.0)),
                (pt(0.2, 0.1), pt(5.0, 0.0)),
            ],
        };
        assert!(matches!(
            extend(&area, &expanding),
            Err(Error::InvalidConstraints(_))
        ));
        let external = ConstraintSet {
            pairs: vec![(pt(7.0, 7.0), pt(0.0, 0.0))],
        };
        assert!(matches!(
            extend(&area, &external),
            Err(Error::InvalidConstraints(_))
        ));
    }
}
