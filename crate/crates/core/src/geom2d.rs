//! Planar kernel: points, isometries, half-planes, convex polygons.
//!
//! Everything downstream manipulates plane geometry through this module.
//! Conventions, fixed once:
//! * polygons are counterclockwise, with no three consecutive vertices
//!   collinear;
//! * a [`HalfPlane`] is the set `n . x <= c`;
//! * isometry composition `f.compose(&g)` applies `g` first, then `f`;
//! * orientation decisions go through [`tol::orient2d`].

use crate::tol::{orient2d, ALG_TOL, DIST_TOL};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

/// A point (or vector) in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Point2 {
    fn from(a: [f64; 2]) -> Self {
        Point2 { x: a[0], y: a[1] }
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Point2 {
    pub const ZERO: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    /// Counterclockwise perpendicular.
    pub fn perp(self) -> Point2 {
        Point2::new(-self.y, self.x)
    }

    /// Unit vector in the same direction; error on (near-)zero input.
    pub fn normalized(self) -> Result<Point2> {
        let n = self.norm();
        if n <= ALG_TOL {
            return Err(Error::DegenerateGeometry(
                "cannot normalize a zero vector".into(),
            ));
        }
        Ok(Point2::new(self.x / n, self.y / n))
    }

    fn arr(self) -> [f64; 2] {
        [self.x, self.y]
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Signed double area of `(a, b, c)`; see [`tol::orient2d`].
pub fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    orient2d(a.arr(), b.arr(), c.arr())
}

/// A rigid motion of the plane, possibly orientation reversing:
/// `x -> M x + t` with `M` orthogonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Isometry2 {
    /// Row-major orthogonal linear part.
    pub m: [[f64; 2]; 2],
    /// Translation part.
    pub t: Point2,
}

impl Isometry2 {
    pub fn identity() -> Self {
        Isometry2 {
            m: [[1.0, 0.0], [0.0, 1.0]],
            t: Point2::ZERO,
        }
    }

    pub fn translation(v: Point2) -> Self {
        Isometry2 {
            m: [[1.0, 0.0], [0.0, 1.0]],
            t: v,
        }
    }

    /// Rotation by `theta` about the origin.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Isometry2 {
            m: [[c, -s], [s, c]],
            t: Point2::ZERO,
        }
    }

    /// Reflection across the line through `p` with direction `d` (`d` need
    /// not be unit).
    pub fn reflection(p: Point2, d: Point2) -> Result<Self> {
        let u = d.normalized()?;
        let m = [
            [u.x * u.x - u.y * u.y, 2.0 * u.x * u.y],
            [2.0 * u.x * u.y, u.y * u.y - u.x * u.x],
        ];
        let mp = Point2::new(m[0][0] * p.x + m[0][1] * p.y, m[1][0] * p.x + m[1][1] * p.y);
        Ok(Isometry2 { m, t: p - mp })
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        Point2::new(
            self.m[0][0] * p.x + self.m[0][1] * p.y + self.t.x,
            self.m[1][0] * p.x + self.m[1][1] * p.y + self.t.y,
        )
    }

    /// Apply only the linear part (useful for direction vectors).
    pub fn apply_vec(&self, v: Point2) -> Point2 {
        Point2::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y,
            self.m[1][0] * v.x + self.m[1][1] * v.y,
        )
    }

    /// `self.compose(&g)` is the map `x -> self(g(x))`: `g` applies first.
    pub fn compose(&self, g: &Isometry2) -> Isometry2 {
        let a = self.m;
        let b = g.m;
        let m = [
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ];
        Isometry2 {
            m,
            t: self.apply(g.t),
        }
    }

    /// Determinant of the linear part: `+1` (orientation preserving) or `-1`.
    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn inverse(&self) -> Isometry2 {
        // Orthogonal linear part: inverse = transpose.
        let m = [
            [self.m[0][0], self.m[1][0]],
            [self.m[0][1], self.m[1][1]],
        ];
        let ti = Point2::new(
            -(m[0][0] * self.t.x + m[0][1] * self.t.y),
            -(m[1][0] * self.t.x + m[1][1] * self.t.y),
        );
        Isometry2 { m, t: ti }
    }

    /// The isometry taking `p1 -> q1`, `p2 -> q2` with a chosen handedness
    /// (`flip = false` preserves orientation).  Unlike
    /// [`Isometry2::from_three_points`] this stays well-conditioned for any
    /// pair with `|p1 - p2|` bounded away from zero, which matters when the
    /// third witness point of a sliver triangle is unreliable.
    pub fn from_two_points(
        p1: Point2,
        p2: Point2,
        q1: Point2,
        q2: Point2,
        flip: bool,
    ) -> Result<Isometry2> {
        let dp = p2 - p1;
        let dq = q2 - q1;
        if (dp.norm() - dq.norm()).abs() > DIST_TOL {
            return Err(Error::DistanceMismatch(format!(
                "segment lengths {:.17} vs {:.17}",
                dp.norm(),
                dq.norm()
            )));
        }
        let e1 = dp.normalized()?;
        let e2 = e1.perp();
        let f1 = dq.normalized()?;
        let f2 = if flip { -f1.perp() } else { f1.perp() };
        let m = [
            [f1.x * e1.x + f2.x * e2.x, f1.x * e1.y + f2.x * e2.y],
            [f1.y * e1.x + f2.y * e2.x, f1.y * e1.y + f2.y * e2.y],
        ];
        let lin = Isometry2 { m, t: Point2::ZERO };
        let t = q1 - lin.apply(p1);
        Ok(Isometry2 { m, t })
    }

    /// The unique isometry taking each `src[i]` to `dst[i]`.
    ///
    /// Fails when the sources are (near-)collinear or some pairwise distance
    /// disagrees beyond [`DIST_TOL`].
    pub fn from_three_points(src: [Point2; 3], dst: [Point2; 3]) -> Result<Isometry2> {
        let mut scale: f64 = 0.0;
        for (i, j) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let ds = src[i].dist(src[j]);
            let dd = dst[i].dist(dst[j]);
            scale = scale.max(ds);
            if (ds - dd).abs() > DIST_TOL {
                return Err(Error::DistanceMismatch(format!(
                    "side {i}-{j}: source {ds:.17} vs destination {dd:.17}"
                )));
            }
        }
        let area_s = orient(src[0], src[1], src[2]);
        if area_s.abs() <= ALG_TOL * scale * scale {
            return Err(Error::DegenerateGeometry(
                "collinear source points for isometry".into(),
            ));
        }
        let area_d = orient(dst[0], dst[1], dst[2]);
        let e1 = (src[1] - src[0]).normalized()?;
        let e2 = e1.perp();
        let f1 = (dst[1] - dst[0]).normalized()?;
        let mut f2 = f1.perp();
        if area_s.signum() != area_d.signum() {
            f2 = -f2;
        }
        // M maps the orthonormal basis (e1, e2) to (f1, f2).
        let m = [
            [f1.x * e1.x + f2.x * e2.x, f1.x * e1.y + f2.x * e2.y],
            [f1.y * e1.x + f2.y * e2.x, f1.y * e1.y + f2.y * e2.y],
        ];
        let lin = Isometry2 { m, t: Point2::ZERO };
        let t = dst[0] - lin.apply(src[0]);
        Ok(Isometry2 { m, t })
    }
}

/// The closed half-plane `normal . x <= offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub normal: Point2,
    pub offset: f64,
}

impl HalfPlane {
    pub fn new(normal: Point2, offset: f64) -> Self {
        HalfPlane { normal, offset }
    }

    /// `normal . p - offset`: negative inside, positive outside.
    pub fn signed(&self, p: Point2) -> f64 {
        self.normal.dot(p) - self.offset
    }

    pub fn contains(&self, p: Point2, slack: f64) -> bool {
        self.signed(p) <= slack
    }

    /// The complementary half-plane (shares the boundary line).
    pub fn flipped(&self) -> HalfPlane {
        HalfPlane::new(-self.normal, -self.offset)
    }

    /// Pull the half-plane back through an isometry: `x` is in the result
    /// iff `iso(x)` is in `self`.
    pub fn pulled_back(&self, iso: &Isometry2) -> HalfPlane {
        // n.(Mx + t) <= c  <=>  (M^T n).x <= c - n.t
        let inv = iso.inverse();
        let n = Point2::new(
            inv.m[0][0] * self.normal.x + inv.m[0][1] * self.normal.y,
            inv.m[1][0] * self.normal.x + inv.m[1][1] * self.normal.y,
        );
        HalfPlane::new(n, self.offset - self.normal.dot(iso.t))
    }
}

/// The perpendicular bisector of `[p, q]`, oriented so the interior is the
/// side of `p`: `x` is in the half-plane iff `|x - p| <= |x - q|`.
pub fn perpendicular_bisector(p: Point2, q: Point2) -> Result<HalfPlane> {
    let n = (q - p).normalized()?;
    let mid = (p + q) * 0.5;
    Ok(HalfPlane::new(n, n.dot(mid)))
}

/// Closest point to `p` on the segment `[a, b]`.
pub fn seg_closest_point(a: Point2, b: Point2, p: Point2) -> Point2 {
    let d = b - a;
    let len2 = d.dot(d);
    if len2 <= ALG_TOL * ALG_TOL {
        return a;
    }
    let t = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
    a + d * t
}

/// Proper intersection parameters of segments `[a, b]` and `[c, d]`:
/// returns `(t, u)` with the crossing at `a + t (b - a) = c + u (d - c)`,
/// both parameters in `[0, 1]`.  `None` when parallel or disjoint.
pub fn seg_intersection(a: Point2, b: Point2, c: Point2, d: Point2) -> Option<(f64, f64)> {
    let r = b - a;
    let s = d - c;
    let denom = r.x * s.y - r.y * s.x;
    let qp = c - a;
    if denom.abs() <= ALG_TOL * (r.norm() * s.norm()).max(ALG_TOL) {
        return None;
    }
    let t = (qp.x * s.y - qp.y * s.x) / denom;
    let u = (qp.x * r.y - qp.y * r.x) / denom;
    if (-ALG_TOL..=1.0 + ALG_TOL).contains(&t) && (-ALG_TOL..=1.0 + ALG_TOL).contains(&u) {
        Some((t.clamp(0.0, 1.0), u.clamp(0.0, 1.0)))
    } else {
        None
    }
}

/// A bounded convex polygon: at least three counterclockwise vertices, no
/// three consecutive collinear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon {
    verts: Vec<Point2>,
}

fn coord_scale(verts: &[Point2]) -> f64 {
    let mut s = 1.0f64;
    for v in verts {
        s = s.max(v.x.abs()).max(v.y.abs());
    }
    s
}

impl ConvexPolygon {
    /// Validate and build.  Vertices must already be counterclockwise.
    pub fn try_new(verts: Vec<Point2>) -> Result<ConvexPolygon> {
        if verts.len() < 3 {
            return Err(Error::DegenerateGeometry(format!(
                "a convex polygon needs at least 3 vertices, got {}",
                verts.len()
            )));
        }
        let scale = coord_scale(&verts);
        let thr = ALG_TOL * scale * scale;
        let n = verts.len();
        for i in 0..n {
            let a = verts[i];
            let b = verts[(i + 1) % n];
            let c = verts[(i + 2) % n];
            let o = orient(a, b, c);
            if o <= thr {
                return Err(Error::DegenerateGeometry(format!(
                    "vertices {i}..{} are not a strict counterclockwise turn (orient {o:e})",
                    (i + 2) % n
                )));
            }
        }
        Ok(ConvexPolygon { verts })
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<ConvexPolygon> {
        ConvexPolygon::try_new(vec![
            Point2::new(x0, y0),
            Point2::new(x1, y0),
            Point2::new(x1, y1),
            Point2::new(x0, y1),
        ])
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.verts
    }

    pub fn area(&self) -> f64 {
        let n = self.verts.len();
        let mut a = 0.0;
        for i in 0..n {
            let p = self.verts[i];
            let q = self.verts[(i + 1) % n];
            a += p.x * q.y - q.x * p.y;
        }
        a * 0.5
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.verts.len();
        (0..n)
            .map(|i| self.verts[i].dist(self.verts[(i + 1) % n]))
            .sum()
    }

    pub fn centroid(&self) -> Point2 {
        let n = self.verts.len() as f64;
        let mut c = Point2::ZERO;
        for v in &self.verts {
            c = c + *v;
        }
        c * (1.0 / n)
    }

    /// Containment with a distance slack (`slack >= 0` accepts boundary).
    pub fn contains(&self, p: Point2, slack: f64) -> bool {
        let n = self.verts.len();
        for i in 0..n {
            let a = self.verts[i];
            let b = self.verts[(i + 1) % n];
            let e = b - a;
            let len = e.norm();
            if orient(a, b, p) < -slack * len {
                return false;
            }
        }
        true
    }

    /// Intersection with a half-plane.  `None` when the intersection has no
    /// interior.  Vertices kept from the input are bitwise unchanged; new
    /// vertices are exact edge/line intersections.
    pub fn clip_halfplane(&self, hp: &HalfPlane) -> Option<ConvexPolygon> {
        let n = self.verts.len();
        let slack = ALG_TOL * (1.0 + hp.offset.abs()).max(hp.normal.norm());
        let mut out: Vec<Point2> = Vec::with_capacity(n + 2);
        for i in 0..n {
            let a = self.verts[i];
            let b = self.verts[(i + 1) % n];
            let da = hp.signed(a);
            let db = hp.signed(b);
            let a_in = da <= slack;
            let b_in = db <= slack;
            if a_in {
                out.push(a);
            }
            if a_in != b_in {
                let t = da / (da - db);
                if t > 0.0 && t < 1.0 {
                    out.push(a + (b - a) * t);
                }
            }
        }
        Self::from_clip_output(out)
    }

    /// Clean up a clip result: drop duplicate and collinear-middle vertices,
    /// reject empty/degenerate output.
    fn from_clip_output(mut verts: Vec<Point2>) -> Option<ConvexPolygon> {
        if verts.len() < 3 {
            return None;
        }
        let scale = coord_scale(&verts);
        let dup = ALG_TOL * scale;
        // Remove consecutive duplicates (cyclically).
        let mut dedup: Vec<Point2> = Vec::with_capacity(verts.len());
        for v in verts.drain(..) {
            if dedup.last().is_none_or(|l| l.dist(v) > dup) {
                dedup.push(v);
            }
        }
        while dedup.len() >= 2 && dedup[0].dist(*dedup.last().unwrap()) <= dup {
            dedup.pop();
        }
        if dedup.len() < 3 {
            return None;
        }
        // Remove collinear middles one at a time, re-testing against the
        // surviving neighbours: a cluster of mutually near-collinear
        // vertices must not disappear wholesale and take a corner with it.
        let thr = ALG_TOL * scale * scale;
        let mut keep = dedup;
        loop {
            if keep.len() < 3 {
                return None;
            }
            let m = keep.len();
            let mut flattest: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = keep[(i + m - 1) % m];
                let b = keep[i];
                let c = keep[(i + 1) % m];
                let o = orient(a, b, c).abs();
                if o <= thr && flattest.is_none_or(|(_, w)| o < w) {
                    flattest = Some((i, o));
                }
            }
            match flattest {
                Some((i, _)) => {
                    keep.remove(i);
                }
                None => break,
            }
        }
        ConvexPolygon::try_new(keep).ok()
    }

    /// Splits the polygon into triangles fanned from its first vertex.
    pub fn fan_triangles(&self) -> Vec<[Point2; 3]> {
        let v = &self.verts;
        (1..v.len() - 1).map(|i| [v[0], v[i], v[i + 1]]).collect()
    }

    /// Nearest point of the (closed, filled) polygon: `p` itself when
    /// inside, otherwise the closest boundary point.  Non-expanding as a map.
    pub fn project(&self, p: Point2) -> Point2 {
        if self.contains(p, 0.0) {
            return p;
        }
        let n = self.verts.len();
        let mut best = self.verts[0];
        let mut best_d = f64::INFINITY;
        for i in 0..n {
            let q = seg_closest_point(self.verts[i], self.verts[(i + 1) % n], p);
            let d = q.dist(p);
            if d < best_d {
                best_d = d;
                best = q;
            }
        }
        best
    }
}

/// Convex hull (Andrew's monotone chain), counterclockwise.  Collapses to
/// two points for collinear input and one for coincident input.
pub fn convex_hull(points: &[Point2]) -> Result<Vec<Point2>> {
    if points.is_empty() {
        return Err(Error::DegenerateGeometry("hull of an empty set".into()));
    }
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
    pts.dedup_by(|a, b| a.dist(*b) <= ALG_TOL);
    if pts.len() == 1 {
        return Ok(pts);
    }
    let scale = coord_scale(&pts);
    let thr = ALG_TOL * scale * scale;
    let build = |iter: &mut dyn Iterator<Item = Point2>| {
        let mut chain: Vec<Point2> = Vec::new();
        for p in iter {
            while chain.len() >= 2
                && orient(chain[chain.len() - 2], chain[chain.len() - 1], p) <= thr
            {
                chain.pop();
            }
            chain.push(p);
        }
        chain
    };
    let lower = build(&mut pts.iter().copied());
    let upper = build(&mut pts.iter().rev().copied());
    let mut hull = lower;
    hull.pop();
    hull.extend(upper.iter().copied().take(upper.len().saturating_sub(1)));
    if hull.len() < 3 {
        // Collinear input: the two extreme points.
        return Ok(vec![pts[0], *pts.last().unwrap()]);
    }
    Ok(hull)
}

/// Perimeter of the convex hull of a point set.
///
/// Degenerate conventions: one point has perimeter `0`; two (or collinear)
/// points have perimeter `2 |p - q|` (the doubled segment, matching the
/// degenerate-polygon convention used for folded figures).
pub fn hull_perimeter(points: &[Point2]) -> Result<f64> {
    let hull = convex_hull(points)?;
    Ok(match hull.len() {
        1 => 0.0,
        2 => 2.0 * hull[0].dist(hull[1]),
        n => (0..n).map(|i| hull[i].dist(hull[(i + 1) % n])).sum(),
    })
}

/// Planar realization of a triangle from its side lengths: returns the apex
/// `c` of the triangle with base `(0,0) -> (base, 0)` such that
/// `|c - (0,0)| = left`, `|c - (base,0)| = right`, and `c.y >= 0`.
pub fn place_apex(base: f64, left: f64, right: f64) -> Result<Point2> {
    if base <= 0.0 || left <= 0.0 || right <= 0.0 {
        return Err(Error::DegenerateGeometry(
            "triangle side lengths must be positive".into(),
        ));
    }
    let x = (base * base + left * left - right * right) / (2.0 * base);
    let y2 = left * left - x * x;
    let scale = base.max(left).max(right);
    if y2 <= ALG_TOL * scale * scale {
        return Err(Error::DegenerateGeometry(format!(
            "sides ({base}, {left}, {right}) violate the strict triangle inequality"
        )));
    }
    Ok(Point2::new(x, y2.sqrt()))
}

/// Largest singular value of the linear part of the affine map sending the
/// triangle `dom` to `img` (the map's operator norm).  A non-expanding piece
/// has norm at most `1`.
pub fn affine_op_norm(dom: [Point2; 3], img: [Point2; 3]) -> Result<f64> {
    let d1 = dom[1] - dom[0];
    let d2 = dom[2] - dom[0];
    let det = d1.x * d2.y - d1.y * d2.x;
    let scale = coord_scale(&dom);
    if det.abs() <= ALG_TOL * scale * scale {
        return Err(Error::DegenerateGeometry(
            "degenerate domain triangle in affine_op_norm".into(),
        ));
    }
    let i1 = img[1] - img[0];
    let i2 = img[2] - img[0];
    // M = [i1 i2] * [d1 d2]^{-1}
    let inv = [[d2.y / det, -d2.x / det], [-d1.y / det, d1.x / det]];
    let m = [
        [
            i1.x * inv[0][0] + i2.x * inv[1][0],
            i1.x * inv[0][1] + i2.x * inv[1][1],
        ],
        [
            i1.y * inv[0][0] + i2.y * inv[1][0],
            i1.y * inv[0][1] + i2.y * inv[1][1],
        ],
    ];
    // Closed-form 2x2 SVD: singular values from the Frobenius norm and
    // determinant via sigma_max^2 + sigma_min^2 = |M|_F^2, sigma_max*sigma_min = |det M|.
    let frob2 = m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1];
    let det_m = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let diff = (frob2 * frob2 - 4.0 * det_m * det_m).max(0.0).sqrt();
    Ok(((frob2 + diff) / 2.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_point(rng: &mut ChaCha8Rng, r: f64) -> Point2 {
        Point2::new(rng.gen_range(-r..r), rng.gen_range(-r..r))
    }

    #[test]
    fn isometry_from_three_points_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let src = [
                rand_point(&mut rng, 5.0),
                rand_point(&mut rng, 5.0),
                rand_point(&mut rng, 5.0),
            ];
            if orient(src[0], src[1], src[2]).abs() < 1e-3 {
                continue;
            }
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let flip = rng.gen_bool(0.5);
            let mut iso = Isometry2::rotation(theta);
            if flip {
                iso = iso
                    .compose(&Isometry2::reflection(Point2::ZERO, Point2::new(1.0, 0.0)).unwrap());
            }
            iso.t = rand_point(&mut rng, 3.0);
            let dst = [iso.apply(src[0]), iso.apply(src[1]), iso.apply(src[2])];
            let got = Isometry2::from_three_points(src, dst).unwrap();
            for _ in 0..8 {
                let p = rand_point(&mut rng, 5.0);
                assert!(got.apply(p).dist(iso.apply(p)) < 1e-9);
            }
            assert!((got.det() - iso.det()).abs() < 1e-9);
        }
    }

    #[test]
    fn isometry_rejects_bad_input() {
        let col = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(2.0, 0.0),
        ];
        assert!(Isometry2::from_three_points(col, col).is_err());
        let src = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ];
        let dst = [
            Point2::new(0.0, 0.0),
            Point2::new(1.1, 0.0),
            Point2::new(0.0, 1.0),
        ];
        assert!(matches!(
            Isometry2::from_three_points(src, dst),
            Err(Error::DistanceMismatch(_))
        ));
    }

    #[test]
    fn compose_applies_right_first() {
        let r = Isometry2::rotation(std::f64::consts::FRAC_PI_2);
        let t = Isometry2::translation(Point2::new(1.0, 0.0));
        // (r o t)(0,0) = r(1,0) = (0,1)
        let p = r.compose(&t).apply(Point2::ZERO);
        assert!(p.dist(Point2::new(0.0, 1.0)) < 1e-15);
        // (t o r)(0,0) = t(0,0) = (1,0)
        let q = t.compose(&r).apply(Point2::ZERO);
        assert!(q.dist(Point2::new(1.0, 0.0)) < 1e-15);
    }

    #[test]
    fn inverse_composes_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let mut iso = Isometry2::rotation(rng.gen_range(0.0..6.28));
            if rng.gen_bool(0.5) {
                iso = Isometry2::reflection(rand_point(&mut rng, 2.0), rand_point(&mut rng, 1.0))
                    .map(|f| f.compose(&iso))
                    .unwrap_or(iso);
            }
            iso.t = iso.t + rand_point(&mut rng, 4.0);
            let p = rand_point(&mut rng, 5.0);
            assert!(iso.inverse().apply(iso.apply(p)).dist(p) < 1e-12);
        }
    }

    #[test]
    fn bisector_separates_by_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let p = rand_point(&mut rng, 4.0);
            let q = rand_point(&mut rng, 4.0);
            if p.dist(q) < 1e-6 {
                continue;
            }
            let hp = perpendicular_bisector(p, q).unwrap();
            let x = rand_point(&mut rng, 6.0);
            let closer_p = x.dist(p) <= x.dist(q) + 1e-12;
            assert_eq!(hp.contains(x, 1e-12), closer_p);
        }
    }

    #[test]
    fn clip_keeps_contained_polygon_unchanged() {
        let poly = ConvexPolygon::rectangle(0.0, 0.0, 2.0, 1.0).unwrap();
        let hp = HalfPlane::new(Point2::new(1.0, 0.0), 10.0);
        let clipped = poly.clip_halfplane(&hp).unwrap();
        assert_eq!(clipped.vertices(), poly.vertices());
    }

    #[test]
    fn clip_is_idempotent() {
        let poly = ConvexPolygon::rectangle(0.0, 0.0, 2.0, 1.0).unwrap();
        let hp = perpendicular_bisector(Point2::new(0.3, 0.2), Point2::new(1.7, 0.9)).unwrap();
        let once = poly.clip_halfplane(&hp).unwrap();
        let twice = once.clip_halfplane(&hp).unwrap();
        assert_eq!(once.vertices().len(), twice.vertices().len());
        for (a, b) in once.vertices().iter().zip(twice.vertices()) {
            assert!(a.dist(*b) <= 1e-12);
        }
    }

    #[test]
    fn clip_to_empty() {
        let poly = ConvexPolygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap();
        let hp = HalfPlane::new(Point2::new(1.0, 0.0), -1.0);
        assert!(poly.clip_halfplane(&hp).is_none());
        // Touching along an edge only: no interior survives.
        let touch = HalfPlane::new(Point2::new(1.0, 0.0), 0.0);
        assert!(poly.clip_halfplane(&touch).is_none());
    }

    #[test]
    fn projection_is_non_expanding() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut pts = Vec::new();
        for _ in 0..9 {
            pts.push(rand_point(&mut rng, 2.0));
        }
        let hull = convex_hull(&pts).unwrap();
        let poly = ConvexPolygon::try_new(hull).unwrap();
        for _ in 0..1000 {
            let x = rand_point(&mut rng, 5.0);
            let y = rand_point(&mut rng, 5.0);
            let px = poly.project(x);
            let py = poly.project(y);
            assert!(px.dist(py) <= x.dist(y) + 1e-9);
            assert!(poly.contains(px, 1e-9));
        }
    }

    #[test]
    fn hull_perimeter_degenerate_conventions() {
        let p = Point2::new(0.5, -0.25);
        assert_eq!(hull_perimeter(&[p]).unwrap(), 0.0);
        let q = Point2::new(2.5, -0.25);
        assert!((hull_perimeter(&[p, q]).unwrap() - 4.0).abs() < 1e-15);
        // Collinear triple: still the doubled outer segment.
        let mid = Point2::new(1.5, -0.25);
        assert!((hull_perimeter(&[p, mid, q]).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn hull_perimeter_monotone_under_deletion() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..50 {
            let pts: Vec<Point2> = (0..12).map(|_| rand_point(&mut rng, 3.0)).collect();
            let full = hull_perimeter(&pts).unwrap();
            let hull = convex_hull(&pts).unwrap();
            for i in 0..pts.len() {
                let mut rest = pts.clone();
                let removed = rest.remove(i);
                let part = hull_perimeter(&rest).unwrap();
                let on_hull = hull.iter().any(|h| h.dist(removed) <= 1e-12);
                if on_hull {
                    assert!(part <= full + 1e-12);
                } else {
                    assert!((part - full).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn place_apex_matches_lengths() {
        let c = place_apex(1.0, 1.0, 1.0).unwrap();
        assert!(c.dist(Point2::new(0.5, 3f64.sqrt() / 2.0)) < 1e-15);
        assert!(place_apex(2.0, 1.0, 1.0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let a = rand_point(&mut rng, 4.0);
            let b = rand_point(&mut rng, 4.0);
            let c = rand_point(&mut rng, 4.0);
            if orient(a, b, c).abs() < 1e-3 {
                continue;
            }
            let apex = place_apex(a.dist(b), a.dist(c), b.dist(c)).unwrap();
            assert!((apex.norm() - a.dist(c)).abs() < 1e-12);
            assert!((apex.dist(Point2::new(a.dist(b), 0.0)) - b.dist(c)).abs() < 1e-12);
            assert!(apex.y > 0.0);
        }
    }

    #[test]
    fn segment_intersection_basic() {
        let (t, u) = seg_intersection(
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 2.0),
            Point2::new(0.0, 2.0),
            Point2::new(2.0, 0.0),
        )
        .unwrap();
        assert!((t - 0.5).abs() < 1e-15 && (u - 0.5).abs() < 1e-15);
        assert!(seg_intersection(
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(1.0, 1.0),
        )
        .is_none());
    }

    #[test]
    fn two_point_isometry_matches_sign_choice() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        for _ in 0..200 {
            let p1 = rand_point(&mut rng, 4.0);
            let p2 = rand_point(&mut rng, 4.0);
            if p1.dist(p2) < 1e-3 {
                continue;
            }
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let t = rand_point(&mut rng, 2.0);
            let mut iso = Isometry2::rotation(theta);
            iso.t = t;
            let flip = rng.gen_bool(0.5);
            if flip {
                iso = iso
                    .compose(&Isometry2::reflection(Point2::ZERO, Point2::new(0.3, 1.7)).unwrap());
            }
            let got = Isometry2::from_two_points(p1, p2, iso.apply(p1), iso.apply(p2), flip)
                .unwrap();
            for _ in 0..4 {
                let p = rand_point(&mut rng, 5.0);
                assert!(got.apply(p).dist(iso.apply(p)) < 1e-9);
            }
        }
    }

    #[test]
    fn op_norm_detects_expansion() {
        let dom = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ];
        let shrunk = [
            Point2::new(0.0, 0.0),
            Point2::new(0.5, 0.0),
            Point2::new(0.0, 0.5),
        ];
        assert!((affine_op_norm(dom, shrunk).unwrap() - 0.5).abs() < 1e-12);
        let iso = [
            Point2::new(2.0, 1.0),
            Point2::new(2.0, 2.0),
            Point2::new(1.0, 1.0),
        ];
        assert!((affine_op_norm(dom, iso).unwrap() - 1.0).abs() < 1e-12);
        let stretched = [
            Point2::new(0.0, 0.0),
            Point2::new(1.3, 0.0),
            Point2::new(0.0, 0.4),
        ];
        assert!((affine_op_norm(dom, stretched).unwrap() - 1.3).abs() < 1e-12);
    }
}
