//! Executable verification: distance-preservation certificates for piecewise
//! maps, the ℓ_k length functionals, and the black/white foldability
//! criterion with its shelling-based construction.

use serde::{Deserialize, Serialize};

use crate::brehm::{PlaneMap, PlanePiece};
use crate::geom2d::{orient, seg_closest_point, Isometry2, Point2};
use crate::polyspace::{eval_affine, PLMap, Piece, PolySpace};
use crate::tol::DIST_TOL;
use crate::{Error, Result};

/// Outcome of a distance-preservation check.  `pass` certifies that every
/// piece is an isometry onto its image and that the pieces agree wherever
/// they meet, which makes the whole map continuous, length-preserving and
/// non-expanding.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PdpReport {
    pub pieces: usize,
    pub segments: usize,
    pub max_side_residual: f64,
    pub max_continuity_residual: f64,
    pub pass: bool,
}

impl PdpReport {
    fn from_residuals(pieces: usize, segments: usize, side: f64, cont: f64) -> PdpReport {
        PdpReport {
            pieces,
            segments,
            max_side_residual: side,
            max_continuity_residual: cont,
            pass: side < DIST_TOL && cont < DIST_TOL,
        }
    }
}

/// Uniform grid over the pieces of one parent chart, for point queries.
struct ParentGrid {
    x0: f64,
    y0: f64,
    inv: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
}

impl ParentGrid {
    fn build(chart: [Point2; 3], ids: &[u32], pieces: &[Piece]) -> ParentGrid {
        let xs = [chart[0].x, chart[1].x, chart[2].x];
        let ys = [chart[0].y, chart[1].y, chart[2].y];
        let x0 = xs.iter().cloned().fold(f64::INFINITY, f64::min) - 1e-9;
        let x1 = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1e-9;
        let y0 = ys.iter().cloned().fold(f64::INFINITY, f64::min) - 1e-9;
        let y1 = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1e-9;
        let n = (ids.len() as f64).sqrt().ceil() as usize;
        let n = n.clamp(1, 1024);
        let (nx, ny) = (n, n);
        let w = (x1 - x0).max(1e-12);
        let h = (y1 - y0).max(1e-12);
        let inv_x = nx as f64 / w;
        let inv_y = ny as f64 / h;
        let inv = inv_x.min(inv_y);
        // Use one scale so cells are square-ish; recompute counts.
        let nx = ((x1 - x0) * inv).ceil().max(1.0) as usize;
        let ny = ((y1 - y0) * inv).ceil().max(1.0) as usize;
        let mut cells = vec![Vec::new(); nx * ny];
        let pad = DIST_TOL * (1.0 + w.max(h));
        for &id in ids {
            let c = pieces[id as usize].chart;
            let bx0 = c[0].x.min(c[1].x).min(c[2].x) - pad;
            let bx1 = c[0].x.max(c[1].x).max(c[2].x) + pad;
            let by0 = c[0].y.min(c[1].y).min(c[2].y) - pad;
            let by1 = c[0].y.max(c[1].y).max(c[2].y) + pad;
            let ix0 = (((bx0 - x0) * inv).floor().max(0.0) as usize).min(nx - 1);
            let ix1 = (((bx1 - x0) * inv).floor().max(0.0) as usize).min(nx - 1);
            let iy0 = (((by0 - y0) * inv).floor().max(0.0) as usize).min(ny - 1);
            let iy1 = (((by1 - y0) * inv).floor().max(0.0) as usize).min(ny - 1);
            for iy in iy0..=iy1 {
                for ix in ix0..=ix1 {
                    cells[iy * nx + ix].push(id);
                }
            }
        }
        ParentGrid {
            x0,
            y0,
            inv,
            nx,
            ny,
            cells,
        }
    }

    fn cell(&self, p: Point2) -> &[u32] {
        let ix = (((p.x - self.x0) * self.inv).floor().max(0.0) as usize).min(self.nx - 1);
        let iy = (((p.y - self.y0) * self.inv).floor().max(0.0) as usize).min(self.ny - 1);
        &self.cells[iy * self.nx + ix]
    }
}

/// Point-location index over a map's pieces, one grid per parent triangle.
pub struct PieceLocator {
    grids: Vec<ParentGrid>,
    scale: Vec<f64>,
}

impl PieceLocator {
    pub fn new(space: &PolySpace, map: &PLMap) -> PieceLocator {
        let mut per_parent: Vec<Vec<u32>> = vec![Vec::new(); space.triangle_count()];
        for (i, p) in map.pieces.iter().enumerate() {
            per_parent[p.parent].push(i as u32);
        }
        let mut grids = Vec::with_capacity(per_parent.len());
        let mut scale = Vec::with_capacity(per_parent.len());
        for (t, ids) in per_parent.iter().enumerate() {
            let chart = space.chart(t);
            grids.push(ParentGrid::build(chart, ids, &map.pieces));
            let s = chart
                .iter()
                .map(|v| v.x.abs().max(v.y.abs()))
                .fold(1.0, f64::max);
            scale.push(s);
        }
        PieceLocator { grids, scale }
    }

    /// Pieces of parent `t` whose closure contains `p` (within a tolerance
    /// proportional to the chart scale), appended to `out`.
    pub fn containing(
        &self,
        map: &PLMap,
        t: usize,
        p: Point2,
        out: &mut Vec<u32>,
    ) {
        let slack = DIST_TOL * self.scale[t];
        for &id in self.grids[t].cell(p) {
            let c = map.pieces[id as usize].chart;
            let mut inside = true;
            for k in 0..3 {
                let e = c[k].dist(c[(k + 1) % 3]).max(1e-300);
                if orient(c[k], c[(k + 1) % 3], p) / e < -slack {
                    inside = false;
                    break;
                }
            }
            if inside {
                out.push(id);
            }
        }
    }

    /// Map value at a chart point of parent `t`, through any piece that
    /// contains it.
    pub fn eval(&self, map: &PLMap, t: usize, p: Point2) -> Result<Point2> {
        let mut buf = Vec::new();
        self.containing(map, t, p, &mut buf);
        match buf.first() {
            Some(&id) => Ok(eval_affine(&map.pieces[id as usize], p)),
            None => Err(Error::InvalidInput(format!(
                "no piece of parent {t} contains ({}, {})",
                p.x, p.y
            ))),
        }
    }
}

/// Verifies that `map` is a piecewise distance preserving map on `space`:
/// each piece an isometry onto its image, pieces tiling every parent chart,
/// and all pieces agreeing wherever their closures meet (including across
/// gluings and on hanging edges).  Tiling violations are reported as domain
/// mismatch errors; metric violations make the report fail.
pub fn check_pdp(space: &PolySpace, map: &PLMap) -> Result<PdpReport> {
    let mut side_res = 0.0f64;

    // Per-piece geometry and per-parent area accounting (compensated sums).
    let mut area = vec![0.0f64; space.triangle_count()];
    let mut area_c = vec![0.0f64; space.triangle_count()];
    for (i, p) in map.pieces.iter().enumerate() {
        if p.parent >= space.triangle_count() {
            return Err(Error::InvalidInput(format!(
                "piece {i} references missing parent {}",
                p.parent
            )));
        }
        let a = orient(p.chart[0], p.chart[1], p.chart[2]) / 2.0;
        if a <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "piece {i} has non-positive chart area {a:.3e}"
            )));
        }
        let parent = space.chart(p.parent);
        let scale = space.side_lengths(p.parent).iter().cloned().fold(1.0, f64::max);
        for &v in &p.chart {
            for k in 0..3 {
                let e = parent[k].dist(parent[(k + 1) % 3]);
                if orient(parent[k], parent[(k + 1) % 3], v) / e < -DIST_TOL * scale {
                    return Err(Error::InvalidInput(format!(
                        "piece {i} leaves its parent chart {}",
                        p.parent
                    )));
                }
            }
        }
        let y = a - area_c[p.parent];
        let t = area[p.parent] + y;
        area_c[p.parent] = (t - area[p.parent]) - y;
        area[p.parent] = t;
        for k in 0..3 {
            let dc = p.chart[k].dist(p.chart[(k + 1) % 3]);
            let di = p.image[k].dist(p.image[(k + 1) % 3]);
            side_res = side_res.max((dc - di).abs());
        }
    }
    for t in 0..space.triangle_count() {
        let want = space.chart_area(t);
        if (area[t] - want).abs() > 1e-9 * want.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "pieces of parent {t} cover area {} of {want}",
                area[t]
            )));
        }
    }

    // Continuity: every piece vertex against every piece whose closure
    // contains it, both within its parent and transferred across gluings.
    let locator = PieceLocator::new(space, map);
    let mut cont_res = 0.0f64;
    let mut buf: Vec<u32> = Vec::new();
    for (i, p) in map.pieces.iter().enumerate() {
        let parent_chart = space.chart(p.parent);
        let scale = space.side_lengths(p.parent).iter().cloned().fold(1.0, f64::max);
        let tol = DIST_TOL * scale;
        for (k, &v) in p.chart.iter().enumerate() {
            let val = p.image[k];
            buf.clear();
            locator.containing(map, p.parent, v, &mut buf);
            for &j in &buf {
                if j as usize == i {
                    continue;
                }
                let d = eval_affine(&map.pieces[j as usize], v).dist(val);
                cont_res = cont_res.max(d);
            }
            // Transfer across glued sides.
            for s in 0..3 {
                let (a, b) = space.side_segment(p.parent, s);
                if seg_closest_point(a, b, v).dist(v) > tol {
                    continue;
                }
                let class = space.class_of(p.parent, s);
                let len = space.gluing_classes()[class].len;
                let param = space.side_param(p.parent, s, v).clamp(0.0, len);
                for m in &space.gluing_classes()[class].members {
                    if m.tri == p.parent && m.side == s {
                        continue;
                    }
                    let v2 = space.side_point(*m, param);
                    buf.clear();
                    locator.containing(map, m.tri, v2, &mut buf);
                    for &j in &buf {
                        let d = eval_affine(&map.pieces[j as usize], v2).dist(val);
                        cont_res = cont_res.max(d);
                    }
                }
            }
            // Transfer across vertex classes (covers corners of the parent).
            for c in 0..3 {
                if parent_chart[c].dist(v) > tol {
                    continue;
                }
                let vc = space.vertex_class(p.parent, c);
                for &(t2, c2) in space.vertex_class_members(vc) {
                    if t2 == p.parent && c2 == c {
                        continue;
                    }
                    let v2 = space.chart(t2)[c2];
                    buf.clear();
                    locator.containing(map, t2, v2, &mut buf);
                    for &j in &buf {
                        let d = eval_affine(&map.pieces[j as usize], v2).dist(val);
                        cont_res = cont_res.max(d);
                    }
                }
            }
        }
    }

    // Hanging edges: their one-dimensional pieces must cover the interval,
    // preserve length, chain continuously, and attach to the 2D map.
    let mut by_edge: Vec<Vec<usize>> = vec![Vec::new(); space.hanging_edges().len()];
    for (i, s) in map.segments.iter().enumerate() {
        if s.hedge >= by_edge.len() {
            return Err(Error::InvalidInput(format!(
                "segment piece {i} references missing hanging edge {}",
                s.hedge
            )));
        }
        by_edge[s.hedge].push(i);
    }
    for (h, ids) in by_edge.iter().enumerate() {
        let edge = space.hanging_edges()[h];
        if ids.is_empty() {
            return Err(Error::InvalidInput(format!(
                "hanging edge {h} is not covered by any segment piece"
            )));
        }
        let mut ids = ids.clone();
        ids.sort_by(|&a, &b| {
            map.segments[a].param[0]
                .partial_cmp(&map.segments[b].param[0])
                .expect("finite")
        });
        let mut cursor = 0.0f64;
        let mut prev_img: Option<Point2> = None;
        for &i in &ids {
            let s = &map.segments[i];
            if (s.param[0] - cursor).abs() > DIST_TOL {
                return Err(Error::InvalidInput(format!(
                    "hanging edge {h} has a coverage gap at parameter {cursor}"
                )));
            }
            if s.param[1] <= s.param[0] {
                return Err(Error::InvalidInput(format!(
                    "segment piece {i} has a non-positive parameter span"
                )));
            }
            let span = s.param[1] - s.param[0];
            side_res = side_res.max((s.image[0].dist(s.image[1]) - span).abs());
            if let Some(prev) = prev_img {
                cont_res = cont_res.max(prev.dist(s.image[0]));
            }
            prev_img = Some(s.image[1]);
            cursor = s.param[1];
        }
        if (cursor - edge.len).abs() > DIST_TOL {
            return Err(Error::InvalidInput(format!(
                "hanging edge {h} coverage ends at {cursor}, length is {}",
                edge.len
            )));
        }
        // Attachment: the parameter-0 image must equal the map's value at
        // the attachment vertex.
        let &(t, c) = &space.vertex_class_members(edge.attach)[0];
        let at = space.chart(t)[c];
        let val = locator.eval(map, t, at)?;
        cont_res = cont_res.max(val.dist(map.segments[ids[0]].image[0]));
    }

    Ok(PdpReport::from_residuals(
        map.pieces.len(),
        map.segments.len(),
        side_res,
        cont_res,
    ))
}

/// Distance-preservation check for a map given by plane-to-plane pieces.
/// The pieces must tile a convex region (their convex hull) edge-to-edge up
/// to hanging nodes; the same vertex-agreement argument as [`check_pdp`]
/// then certifies continuity.
pub fn check_pdp_plane(map: &PlaneMap) -> Result<PdpReport> {
    let mut side_res = 0.0f64;
    let mut pts: Vec<Point2> = Vec::new();
    let mut area = 0.0f64;
    let mut area_c = 0.0f64;
    for (i, p) in map.pieces.iter().enumerate() {
        let a = orient(p.dom[0], p.dom[1], p.dom[2]) / 2.0;
        if a <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "piece {i} has non-positive domain area {a:.3e}"
            )));
        }
        let y = a - area_c;
        let t = area + y;
        area_c = (t - area) - y;
        area = t;
        pts.extend_from_slice(&p.dom);
        for k in 0..3 {
            let dc = p.dom[k].dist(p.dom[(k + 1) % 3]);
            let di = p.img[k].dist(p.img[(k + 1) % 3]);
            side_res = side_res.max((dc - di).abs());
        }
    }
    let hull = crate::geom2d::convex_hull(&pts)?;
    let mut hull_area = 0.0;
    for k in 1..hull.len().saturating_sub(1) {
        hull_area += orient(hull[0], hull[k], hull[k + 1]) / 2.0;
    }
    if (area - hull_area).abs() > 1e-7 * hull_area.max(1.0) {
        return Err(Error::InvalidInput(format!(
            "pieces cover area {area}, convex hull of the domain has area {hull_area}"
        )));
    }

    let scale = pts
        .iter()
        .map(|v| v.x.abs().max(v.y.abs()))
        .fold(1.0, f64::max);
    let grid = PlaneGrid::new(map, scale);
    let mut cont_res = 0.0f64;
    let mut buf = Vec::new();
    for (i, p) in map.pieces.iter().enumerate() {
        for (k, &v) in p.dom.iter().enumerate() {
            buf.clear();
            grid.containing(map, v, &mut buf);
            for &j in &buf {
                if j as usize == i {
                    continue;
                }
                let q = &map.pieces[j as usize];
                let d = eval_plane_affine(q, v).dist(p.img[k]);
                cont_res = cont_res.max(d);
            }
        }
    }
    Ok(PdpReport::from_residuals(
        map.pieces.len(),
        0,
        side_res,
        cont_res,
    ))
}

/// Point-location grid over a plane map's domain triangles.
pub struct PlaneGrid {
    grid: ParentGrid,
    scale: f64,
    pieces_as_core: Vec<Piece>,
}

impl PlaneGrid {
    pub fn new(map: &PlaneMap, scale: f64) -> PlaneGrid {
        // Reuse the parent-grid machinery by converting the domain
        // triangles into chart-only pieces while noting the overall bbox.
        let pieces: Vec<Piece> = map
            .pieces
            .iter()
            .map(|p| Piece {
                parent: 0,
                chart: p.dom,
                image: p.img,
            })
            .collect();
        let ids: Vec<u32> = (0..pieces.len() as u32).collect();
        let mut x0 = f64::INFINITY;
        let mut x1 = f64::NEG_INFINITY;
        let mut y0 = f64::INFINITY;
        let mut y1 = f64::NEG_INFINITY;
        for p in &pieces {
            for v in &p.chart {
                x0 = x0.min(v.x);
                x1 = x1.max(v.x);
                y0 = y0.min(v.y);
                y1 = y1.max(v.y);
            }
        }
        let bbox = [
            Point2::new(x0, y0),
            Point2::new(x1, y0),
            Point2::new(x1, y1),
        ];
        let grid = ParentGrid::build(bbox, &ids, &pieces);
        PlaneGrid {
            grid,
            scale,
            pieces_as_core: pieces,
        }
    }

    pub fn containing(&self, _map: &PlaneMap, p: Point2, out: &mut Vec<u32>) {
        let slack = DIST_TOL * self.scale;
        for &id in self.grid.cell(p) {
            let c = self.pieces_as_core[id as usize].chart;
            let mut inside = true;
            for k in 0..3 {
                let e = c[k].dist(c[(k + 1) % 3]).max(1e-300);
                if orient(c[k], c[(k + 1) % 3], p) / e < -slack {
                    inside = false;
                    break;
                }
            }
            if inside {
                out.push(id);
            }
        }
    }
}

pub fn eval_plane_affine(p: &PlanePiece, at: Point2) -> Point2 {
    let piece = Piece {
        parent: 0,
        chart: p.dom,
        image: p.img,
    };
    eval_affine(&piece, at)
}

/// Samples of a curve: strictly increasing parameters with their points.
#[derive(Clone, Debug)]
pub struct CurveSamples {
    pub params: Vec<f64>,
    pub points: Vec<Point2>,
}

impl CurveSamples {
    pub fn new(params: Vec<f64>, points: Vec<Point2>) -> Result<CurveSamples> {
        if params.len() != points.len() || params.len() < 2 {
            return Err(Error::InvalidInput(
                "curve samples need matching parameters and at least two points".into(),
            ));
        }
        if params.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "curve parameters must be strictly increasing".into(),
            ));
        }
        Ok(CurveSamples { params, points })
    }

    pub fn chord_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].dist(w[1])).sum()
    }
}

/// The k-segment length functional: the largest total length of a polygonal
/// chain through at most `k + 1` of the sample points, in order, pinned at
/// both ends.  Exact for piecewise linear curves sampled at breakpoints;
/// nondecreasing in `k`, with ℓ₁ the endpoint distance and the chord length
/// as an upper bound.
pub fn ell_k(curve: &CurveSamples, k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidInput("ell_k needs k >= 1".into()));
    }
    let pts = &curve.points;
    let m = pts.len();
    // dp[i] = best total length of a chain from point 0 to point i using at
    // most j segments, rolled over j.  Repeating an index adds a zero step,
    // so "at most" comes for free.
    let mut dp: Vec<f64> = pts.iter().map(|p| pts[0].dist(*p)).collect();
    let mut next = vec![0.0f64; m];
    for _ in 1..k.min(m - 1) {
        for i in 0..m {
            let mut best = dp[i];
            for i2 in 0..i {
                let cand = dp[i2] + pts[i2].dist(pts[i]);
                if cand > best {
                    best = cand;
                }
            }
            next[i] = best;
        }
        std::mem::swap(&mut dp, &mut next);
    }
    Ok(dp[m - 1])
}

/// An edge-to-edge triangulation of a convex polygon with a total black /
/// white coloring of the triangles.
#[derive(Clone, Debug)]
pub struct ColoredTriangulation {
    pub tris: Vec<[Point2; 3]>,
    pub black: Vec<bool>,
    verts: Vec<Point2>,
    /// Per triangle, per corner: index into `verts`.
    corner_vert: Vec<[usize; 3]>,
    /// Interior vertex flags.
    interior: Vec<bool>,
}

impl ColoredTriangulation {
    pub fn try_new(tris: Vec<[Point2; 3]>, black: Vec<bool>) -> Result<ColoredTriangulation> {
        if tris.is_empty() || tris.len() != black.len() {
            return Err(Error::InvalidInput(
                "need one color per triangle and at least one triangle".into(),
            ));
        }
        let mut scale = 1.0f64;
        for t in &tris {
            for v in t {
                scale = scale.max(v.x.abs()).max(v.y.abs());
            }
        }
        let tol = DIST_TOL * scale;

        // Cluster corner coordinates into vertices.
        let mut verts: Vec<Point2> = Vec::new();
        let mut corner_vert = vec![[usize::MAX; 3]; tris.len()];
        for (i, t) in tris.iter().enumerate() {
            if orient(t[0], t[1], t[2]) <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "triangle {i} is not positively oriented"
                )));
            }
            for (c, &v) in t.iter().enumerate() {
                let hit = verts.iter().position(|&w| w.dist(v) <= tol);
                let id = match hit {
                    Some(id) => id,
                    None => {
                        verts.push(v);
                        verts.len() - 1
                    }
                };
                corner_vert[i][c] = id;
            }
        }

        // Edge-to-edge: each undirected vertex pair backs one or two
        // triangle sides, with opposite directions when shared.
        use std::collections::BTreeMap;
        let mut edge_uses: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
        for (i, cv) in corner_vert.iter().enumerate() {
            for s in 0..3 {
                let a = cv[(s + 1) % 3];
                let b = cv[(s + 2) % 3];
                if a == b {
                    return Err(Error::InvalidInput(format!(
                        "triangle {i} has a collapsed side"
                    )));
                }
                edge_uses.entry((a.min(b), a.max(b))).or_default().push((i, s));
            }
        }
        let mut boundary_vert = vec![false; verts.len()];
        for ((a, b), uses) in &edge_uses {
            match uses.len() {
                1 => {
                    boundary_vert[*a] = true;
                    boundary_vert[*b] = true;
                }
                2 => {}
                n => {
                    return Err(Error::InvalidInput(format!(
                        "edge between vertices {a} and {b} is used by {n} triangles"
                    )));
                }
            }
        }
        let interior: Vec<bool> = boundary_vert.iter().map(|&b| !b).collect();

        // The triangles must tile the convex hull of their vertices.
        let mut area = 0.0;
        for t in &tris {
            area += orient(t[0], t[1], t[2]) / 2.0;
        }
        let hull = crate::geom2d::convex_hull(&verts)?;
        let mut hull_area = 0.0;
        for k in 1..hull.len().saturating_sub(1) {
            hull_area += orient(hull[0], hull[k], hull[k + 1]) / 2.0;
        }
        if (area - hull_area).abs() > 1e-9 * hull_area.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "triangles cover area {area}, expected the hull area {hull_area}"
            )));
        }

        Ok(ColoredTriangulation {
            tris,
            black,
            verts,
            corner_vert,
            interior,
        })
    }

    fn corner_angle(&self, tri: usize, corner: usize) -> f64 {
        let t = self.tris[tri];
        let u = t[(corner + 1) % 3] - t[corner];
        let v = t[(corner + 2) % 3] - t[corner];
        (u.dot(v) / (u.norm() * v.norm())).clamp(-1.0, 1.0).acos()
    }
}

/// Result of the foldability criterion: per interior vertex, the sum of
/// black angles, which must be 0, π, or 2π for a fold to exist.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FoldabilityReport {
    pub foldable: bool,
    /// (vertex position, black-angle sum) for each interior vertex.
    pub interior_black_sums: Vec<(Point2, f64)>,
}

pub fn black_white_check(ct: &ColoredTriangulation) -> FoldabilityReport {
    use std::f64::consts::PI;
    let mut sums = vec![Vec::new(); ct.verts.len()];
    for (i, cv) in ct.corner_vert.iter().enumerate() {
        if !ct.black[i] {
            continue;
        }
        for (c, &v) in cv.iter().enumerate() {
            sums[v].push(ct.corner_angle(i, c));
        }
    }
    let mut out = Vec::new();
    let mut foldable = true;
    for (v, angles) in sums.iter_mut().enumerate() {
        if !ct.interior[v] {
            continue;
        }
        // Pairwise summation to limit drift on high-degree vertices.
        let sum = pairwise_sum(angles);
        let ok = [0.0, PI, 2.0 * PI]
            .iter()
            .any(|&target| (sum - target).abs() < 1e-9);
        foldable &= ok;
        out.push((ct.verts[v], sum));
    }
    FoldabilityReport {
        foldable,
        interior_black_sums: out,
    }
}

fn pairwise_sum(xs: &mut Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    while xs.len() > 1 {
        let mut next = Vec::with_capacity((xs.len() + 1) / 2);
        for pair in xs.chunks(2) {
            next.push(pair.iter().sum());
        }
        *xs = next;
    }
    xs[0]
}

/// Builds the fold map of a foldable coloring: the first (white, boundary)
/// triangle keeps its position, and isometries propagate across a greedy
/// shelling, reflecting wherever the color changes.  A triangle closing a
/// fan is checked for consistency; an inconsistency after a passed check is
/// an internal error, and a triangulation defeating the greedy shelling is
/// reported rather than silently mis-folded.
pub fn black_white_fold(ct: &ColoredTriangulation) -> Result<PlaneMap> {
    let report = black_white_check(ct);
    if !report.foldable {
        return Err(Error::InvalidInput(
            "coloring fails the interior black-angle criterion".into(),
        ));
    }
    let n = ct.tris.len();

    // Adjacency across shared edges.
    use std::collections::BTreeMap;
    let mut edge_owner: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, cv) in ct.corner_vert.iter().enumerate() {
        for s in 0..3 {
            let a = cv[(s + 1) % 3];
            let b = cv[(s + 2) % 3];
            edge_owner.entry((a.min(b), a.max(b))).or_default().push(i);
        }
    }
    let neighbors = |i: usize| -> Vec<usize> {
        let cv = ct.corner_vert[i];
        let mut out = Vec::new();
        for s in 0..3 {
            let a = cv[(s + 1) % 3];
            let b = cv[(s + 2) % 3];
            for &j in &edge_owner[&(a.min(b), a.max(b))] {
                if j != i {
                    out.push(j);
                }
            }
        }
        out
    };

    // Start from a white triangle when one exists so white pieces preserve
    // orientation; an all-black coloring folds through one global
    // reflection instead.
    let start = (0..n).find(|&i| !ct.black[i]).unwrap_or(0);
    let mut iso: Vec<Option<Isometry2>> = vec![None; n];
    iso[start] = Some(if ct.black[start] {
        let t = ct.tris[start];
        reflection_across(t[0], t[1])
    } else {
        Isometry2::identity()
    });

    let mut placed_verts: Vec<bool> = vec![false; ct.verts.len()];
    for &v in &ct.corner_vert[start] {
        placed_verts[v] = true;
    }
    let mut placed = 1usize;
    let mut done = vec![false; n];
    done[start] = true;

    while placed < n {
        // Greedy: find an unplaced triangle sharing edges with the placed
        // region such that adding it keeps the region a disc — either one
        // shared edge and a fresh vertex, or two shared edges and no fresh
        // vertex.
        let mut pick: Option<(usize, usize, usize)> = None; // (tri, shared, fresh)
        'search: for i in 0..n {
            if done[i] {
                continue;
            }
            let cv = ct.corner_vert[i];
            let mut shared_edges = 0;
            let mut share_partner = usize::MAX;
            for s in 0..3 {
                let a = cv[(s + 1) % 3];
                let b = cv[(s + 2) % 3];
                for &j in &edge_owner[&(a.min(b), a.max(b))] {
                    if j != i && done[j] {
                        shared_edges += 1;
                        share_partner = j;
                    }
                }
            }
            if shared_edges == 0 {
                continue;
            }
            let fresh = cv.iter().filter(|&&v| !placed_verts[v]).count();
            let ok = matches!((shared_edges, fresh), (1, 1) | (2, 0));
            if ok {
                pick = Some((i, shared_edges, share_partner));
                break 'search;
            }
        }
        let (i, _, _) = pick.ok_or_else(|| {
            Error::Internal(
                "greedy shelling found no admissible next triangle; the triangulation defeats the fold construction".into(),
            )
        })?;

        // Propagate the isometry across every placed neighbor and insist
        // they agree.
        let mut candidate: Option<Isometry2> = None;
        let cv = ct.corner_vert[i];
        for s in 0..3 {
            let a = cv[(s + 1) % 3];
            let b = cv[(s + 2) % 3];
            for &j in &edge_owner[&(a.min(b), a.max(b))] {
                if j == i || !done[j] {
                    continue;
                }
                let base = iso[j].unwrap();
                let next = if ct.black[i] == ct.black[j] {
                    base
                } else {
                    let pa = base.apply(ct.verts[a]);
                    let pb = base.apply(ct.verts[b]);
                    reflection_across(pa, pb).compose(&base)
                };
                match candidate {
                    None => candidate = Some(next),
                    Some(prev) => {
                        let scale = ct
                            .verts
                            .iter()
                            .map(|v| v.x.abs().max(v.y.abs()))
                            .fold(1.0, f64::max);
                        for &v in &cv {
                            let d = prev.apply(ct.verts[v]).dist(next.apply(ct.verts[v]));
                            if d > 1e-7 * scale {
                                return Err(Error::Internal(format!(
                                    "fold closure inconsistent by {d:.3e} despite a passed criterion"
                                )));
                            }
                        }
                    }
                }
            }
        }
        iso[i] = candidate;
        done[i] = true;
        placed += 1;
        for &v in &cv {
            placed_verts[v] = true;
        }
        let _ = neighbors;
    }

    let pieces = (0..n)
        .map(|i| {
            let g = iso[i].unwrap();
            PlanePiece {
                dom: ct.tris[i],
                img: [
                    g.apply(ct.tris[i][0]),
                    g.apply(ct.tris[i][1]),
                    g.apply(ct.tris[i][2]),
                ],
            }
        })
        .collect();
    Ok(PlaneMap { pieces, pdp: true })
}

fn reflection_across(a: Point2, b: Point2) -> Isometry2 {
    Isometry2::reflection(a, b - a).expect("reflection axis endpoints distinct")
}

/// Largest violation of |f(x) − f(y)| ≤ |x − y| over random same-piece point
/// pairs; negative when non-expansion holds with margin.
pub fn sampled_nonexpansion(map: &PLMap, pairs: usize, seed: u64) -> f64 {
    // Simple splitmix-style generator; enough for test sampling without
    // pulling RNG crates into the library itself.
    let mut state = seed.wrapping_add(0x9e3779b97f4a7c15);
    let mut next = move || {
        state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64
    };
    if map.pieces.is_empty() {
        return f64::NEG_INFINITY;
    }
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..pairs {
        let pi = (next() * map.pieces.len() as f64) as usize % map.pieces.len();
        let p = &map.pieces[pi];
        let mut sample = || {
            let (mut u, mut v) = (next(), next());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            (
                p.chart[0] + (p.chart[1] - p.chart[0]) * u + (p.chart[2] - p.chart[0]) * v,
                u,
                v,
            )
        };
        let (x, _, _) = sample();
        let (y, _, _) = sample();
        let fx = eval_affine(p, x);
        let fy = eval_affine(p, y);
        worst = worst.max(fx.dist(fy) - x.dist(y));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyspace::{PLMap, Piece, PointOnSpace};

    fn square_space() -> PolySpace {
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

    /// Per-triangle rigid placement of each chart onto the square's actual
    /// embedding, so the images agree along the glued diagonal.
    fn embedding_isometries(space: &PolySpace) -> Vec<Isometry2> {
        let v = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        let faces = [[0usize, 1, 2], [0, 2, 3]];
        (0..space.triangle_count())
            .map(|t| {
                let dst = [v[faces[t][0]], v[faces[t][1]], v[faces[t][2]]];
                Isometry2::from_three_points(space.chart(t), dst).unwrap()
            })
            .collect()
    }

    fn identity_map(space: &PolySpace) -> PLMap {
        let isos = embedding_isometries(space);
        PLMap {
            pieces: (0..space.triangle_count())
                .map(|t| {
                    let c = space.chart(t);
                    Piece {
                        parent: t,
                        chart: c,
                        image: [isos[t].apply(c[0]), isos[t].apply(c[1]), isos[t].apply(c[2])],
                    }
                })
                .collect(),
            segments: Vec::new(),
            pdp: true,
        }
    }

    #[test]
    fn identity_passes_with_zero_residuals() {
        let sq = square_space();
        let map = identity_map(&sq);
        let report = check_pdp(&sq, &map).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.max_side_residual < 1e-12);
        assert!(report.max_continuity_residual < 1e-12);
    }

    #[test]
    fn planted_scaling_defect_is_caught() {
        let sq = square_space();
        let mut map = identity_map(&sq);
        for v in map.pieces[1].image.iter_mut() {
            *v = *v * 0.99;
        }
        let report = check_pdp(&sq, &map).unwrap();
        assert!(!report.pass);
        // One side of the shrunk piece has length √2, so the residual is
        // about 0.01·√2.
        assert!(report.max_side_residual > 0.009);
        assert!(report.max_side_residual < 0.02);
    }

    #[test]
    fn refined_identity_with_midpoints_passes() {
        let sq = square_space();
        let isos = embedding_isometries(&sq);
        let mut pieces = Vec::new();
        for t in 0..2 {
            let c = sq.chart(t);
            let m01 = (c[0] + c[1]) * 0.5;
            let m12 = (c[1] + c[2]) * 0.5;
            let m20 = (c[2] + c[0]) * 0.5;
            for tri in [
                [c[0], m01, m20],
                [m01, c[1], m12],
                [m20, m12, c[2]],
                [m01, m12, m20],
            ] {
                pieces.push(Piece {
                    parent: t,
                    chart: tri,
                    image: [isos[t].apply(tri[0]), isos[t].apply(tri[1]), isos[t].apply(tri[2])],
                });
            }
        }
        let map = PLMap {
            pieces,
            segments: Vec::new(),
            pdp: true,
        };
        let report = check_pdp(&sq, &map).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn area_deficit_is_a_domain_mismatch() {
        let sq = square_space();
        let mut map = identity_map(&sq);
        map.pieces.pop();
        assert!(check_pdp(&sq, &map).is_err());
    }

    #[test]
    fn ell_k_on_straight_segment_is_its_length() {
        let pts: Vec<Point2> = (0..=10)
            .map(|i| Point2::new(0.3 * i as f64, 0.4 * i as f64))
            .collect();
        let params: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let curve = CurveSamples::new(params, pts).unwrap();
        for k in 1..8 {
            let l = ell_k(&curve, k).unwrap();
            assert!((l - 5.0).abs() < 1e-12, "k={k}: {l}");
        }
    }

    #[test]
    fn stairs_versus_diagonal() {
        // m-step staircase from (0,0) to (1,1): chord length 2, but the
        // one-segment functional only sees √2.
        let m = 8;
        let mut pts = vec![Point2::ZERO];
        let mut params = vec![0.0];
        for i in 0..m {
            let x0 = i as f64 / m as f64;
            pts.push(Point2::new(x0 + 1.0 / m as f64, i as f64 / m as f64));
            params.push(params.last().unwrap() + 1.0);
            pts.push(Point2::new(x0 + 1.0 / m as f64, (i + 1) as f64 / m as f64));
            params.push(params.last().unwrap() + 1.0);
        }
        let curve = CurveSamples::new(params, pts).unwrap();
        let l1 = ell_k(&curve, 1).unwrap();
        assert!((l1 - 2f64.sqrt()).abs() < 1e-12);
        let mut prev = l1;
        for k in 2..=(2 * m + 2) {
            let l = ell_k(&curve, k).unwrap();
            assert!(l >= prev - 1e-12, "not monotone at k={k}");
            assert!(l <= curve.chord_length() + 1e-12);
            prev = l;
        }
        assert!((prev - 2.0).abs() < 1e-12, "ℓ_k saturates at the stairs length");
    }

    fn square_fan() -> (Vec<[Point2; 3]>, Point2) {
        let c = Point2::ZERO;
        let corner = [
            Point2::new(1.0, 1.0),
            Point2::new(-1.0, 1.0),
            Point2::new(-1.0, -1.0),
            Point2::new(1.0, -1.0),
        ];
        let tris = (0..4)
            .map(|i| [c, corner[i], corner[(i + 1) % 4]])
            .collect();
        (tris, c)
    }

    #[test]
    fn black_white_criterion_cases() {
        let (tris, _) = square_fan();
        // All white: foldable with sum 0 at the center.
        let ct = ColoredTriangulation::try_new(tris.clone(), vec![false; 4]).unwrap();
        let rep = black_white_check(&ct);
        assert!(rep.foldable);
        assert_eq!(rep.interior_black_sums.len(), 1);
        assert_eq!(rep.interior_black_sums[0].1, 0.0);

        // Opposite pair black: sum π, foldable.
        let ct = ColoredTriangulation::try_new(tris.clone(), vec![true, false, true, false])
            .unwrap();
        let rep = black_white_check(&ct);
        assert!(rep.foldable);
        assert!((rep.interior_black_sums[0].1 - std::f64::consts::PI).abs() < 1e-12);

        // A single black triangle: sum π/2, not foldable.
        let ct = ColoredTriangulation::try_new(tris, vec![true, false, false, false]).unwrap();
        assert!(!black_white_check(&ct).foldable);
    }

    #[test]
    fn fold_of_alternating_square_folds_onto_half() {
        let (tris, _) = square_fan();
        let ct =
            ColoredTriangulation::try_new(tris, vec![false, true, false, true]).unwrap();
        let map = black_white_fold(&ct).unwrap();
        let report = check_pdp_plane(&map).unwrap();
        assert!(report.pass, "{report:?}");
        // White triangles stay put, black ones land on their white
        // neighbors' images, so every image point has |y| ≥ 0 side chosen
        // by the first triangle; here the image is the upper-left white
        // triangle pair's union.
        for (i, p) in map.pieces.iter().enumerate() {
            let _ = i;
            for v in &p.img {
                assert!(v.y >= -1e-12 || v.x.abs() <= 1.0 + 1e-12);
            }
        }
        // The two black triangles are reflected onto whites: their images
        // must coincide with some white triangle's image as a set.
        let img_of = |i: usize| {
            let mut v = map.pieces[i].img.to_vec();
            v.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
            v
        };
        assert_eq!(ct_black_count(&ct), 2);
        let whites: Vec<Vec<Point2>> = (0..4).filter(|&i| !ct.black[i]).map(img_of).collect();
        for i in (0..4).filter(|&i| ct.black[i]) {
            let img = img_of(i);
            assert!(whites.iter().any(|w| w
                .iter()
                .zip(&img)
                .all(|(a, b)| a.dist(*b) < 1e-9)));
        }
    }

    fn ct_black_count(ct: &ColoredTriangulation) -> usize {
        ct.black.iter().filter(|&&b| b).count()
    }

    #[test]
    fn fold_of_medial_subdivision_runs_and_verifies() {
        let a = Point2::ZERO;
        let b = Point2::new(1.0, 0.0);
        let c = Point2::new(0.5, 3f64.sqrt() / 2.0);
        let mab = (a + b) * 0.5;
        let mbc = (b + c) * 0.5;
        let mca = (c + a) * 0.5;
        let tris = vec![
            [a, mab, mca],
            [mab, b, mbc],
            [mca, mbc, c],
            [mab, mbc, mca],
        ];
        let ct = ColoredTriangulation::try_new(tris, vec![false, false, false, true]).unwrap();
        assert!(black_white_check(&ct).foldable);
        let map = black_white_fold(&ct).unwrap();
        assert!(check_pdp_plane(&map).unwrap().pass);
    }

    #[test]
    fn random_fan_colorings_fold_and_verify() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(61);
        for _ in 0..100 {
            // Random convex polygon: sorted angles on a circle, fan
            // triangulated from vertex 0 (no interior vertices, so any
            // coloring is foldable).
            let n = rng.gen_range(4..9);
            let mut angs: Vec<f64> = (0..n)
                .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
                .collect();
            angs.sort_by(|x, y| x.partial_cmp(y).unwrap());
            angs.dedup_by(|x, y| (*x - *y).abs() < 1e-3);
            if angs.len() < 4 {
                continue;
            }
            let pts: Vec<Point2> = angs
                .iter()
                .map(|&t| Point2::new(t.cos(), t.sin()))
                .collect();
            let tris: Vec<[Point2; 3]> = (1..pts.len() - 1)
                .map(|i| [pts[0], pts[i], pts[i + 1]])
                .collect();
            let colors: Vec<bool> = (0..tris.len()).map(|_| rng.gen_bool(0.5)).collect();
            let ct = ColoredTriangulation::try_new(tris, colors).unwrap();
            assert!(black_white_check(&ct).foldable);
            let map = black_white_fold(&ct).unwrap();
            let rep = check_pdp_plane(&map).unwrap();
            assert!(rep.pass, "{rep:?}");
        }
    }

    #[test]
    fn locator_eval_matches_plmap_eval() {
        let sq = square_space();
        let map = identity_map(&sq);
        let loc = PieceLocator::new(&sq, &map);
        let at = PointOnSpace::new(0, [0.25, 0.6, 0.15]);
        let p = at.chart_point(&sq);
        let via_loc = loc.eval(&map, 0, p).unwrap();
        let via_map = map.eval(&sq, &at).unwrap();
        assert!(via_loc.dist(via_map) < 1e-15);
        assert!(via_loc.dist(p) < 1e-15);
    }

    #[test]
    fn nonexpansion_sampling_on_isometry_has_no_violation() {
        let sq = square_space();
        let map = identity_map(&sq);
        let worst = sampled_nonexpansion(&map, 1000, 7);
        assert!(worst <= 1e-9, "worst violation {worst}");
    }
}
