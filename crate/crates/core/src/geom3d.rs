//! Minimal 3D geometry: convex polytopes with validated face structure,
//! an incremental convex hull, nearest-point projection onto a polytope,
//! and the exterior feature decomposition (face prisms, edge wedges,
//! vertex cones) used to build piecewise linear projection maps.

use serde::{Deserialize, Serialize};

use crate::tol::DIST_TOL;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        [p.x, p.y, p.z]
    }
}

impl Point3 {
    pub const ZERO: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn dot(self, o: Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Point3) -> Point3 {
        Point3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dist(self, o: Point3) -> f64 {
        (self - o).norm()
    }

    pub fn normalized(self) -> Result<Point3> {
        let n = self.norm();
        if n <= 1e-12 {
            return Err(Error::DegenerateGeometry(
                "cannot normalize a near-zero 3-vector".into(),
            ));
        }
        Ok(self * (1.0 / n))
    }
}

impl std::ops::Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl std::ops::Neg for Point3 {
    type Output = Point3;
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

/// Closed half-space `{ x : normal . x <= offset }`.
#[derive(Clone, Copy, Debug)]
pub struct HalfSpace3 {
    pub normal: Point3,
    pub offset: f64,
}

impl HalfSpace3 {
    pub fn signed(&self, p: Point3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    pub fn contains(&self, p: Point3, slack: f64) -> bool {
        self.signed(p) <= slack
    }
}

/// An undirected polytope edge together with its two incident faces.
#[derive(Clone, Copy, Debug)]
pub struct PolyEdge {
    pub v0: usize,
    pub v1: usize,
    pub faces: [usize; 2],
}

/// A bounded convex polytope in 3-space given by its vertices and planar
/// faces (vertex cycles, counterclockwise seen from outside).
///
/// Construction validates that every face is planar, oriented outward,
/// that every vertex is an extreme point lying on the boundary, that each
/// edge is shared by exactly two faces with opposite orientations, and
/// that the face lattice closes up (`V - E + F = 2`).
#[derive(Clone, Debug)]
pub struct ConvexPolytope3 {
    verts: Vec<Point3>,
    faces: Vec<Vec<usize>>,
    planes: Vec<HalfSpace3>,
    edges: Vec<PolyEdge>,
}

impl ConvexPolytope3 {
    pub fn try_new(verts: Vec<Point3>, faces: Vec<Vec<usize>>) -> Result<ConvexPolytope3> {
        if verts.len() < 4 || faces.len() < 4 {
            return Err(Error::InvalidInput(
                "a solid polytope needs at least 4 vertices and 4 faces".into(),
            ));
        }
        let mut scale = 1.0f64;
        for v in &verts {
            scale = scale.max(v.x.abs()).max(v.y.abs()).max(v.z.abs());
        }
        let tol = DIST_TOL * scale;

        let centroid = verts
            .iter()
            .fold(Point3::ZERO, |acc, &v| acc + v * (1.0 / verts.len() as f64));

        let mut planes = Vec::with_capacity(faces.len());
        for (fi, face) in faces.iter().enumerate() {
            if face.len() < 3 {
                return Err(Error::InvalidInput(format!(
                    "face {fi} has fewer than 3 vertices"
                )));
            }
            for &vi in face {
                if vi >= verts.len() {
                    return Err(Error::InvalidInput(format!(
                        "face {fi} references missing vertex {vi}"
                    )));
                }
            }
            // Newell normal; robust for any planar polygon.
            let mut n = Point3::ZERO;
            for i in 0..face.len() {
                let a = verts[face[i]];
                let b = verts[face[(i + 1) % face.len()]];
                n = n + Point3::new(
                    (a.y - b.y) * (a.z + b.z),
                    (a.z - b.z) * (a.x + b.x),
                    (a.x - b.x) * (a.y + b.y),
                );
            }
            let n = n.normalized().map_err(|_| {
                Error::DegenerateGeometry(format!("face {fi} is degenerate (zero area)"))
            })?;
            let offset = n.dot(verts[face[0]]);
            for &vi in face {
                if (n.dot(verts[vi]) - offset).abs() > tol {
                    return Err(Error::InvalidInput(format!(
                        "face {fi} is not planar (vertex {vi} off-plane by {:.3e})",
                        (n.dot(verts[vi]) - offset).abs()
                    )));
                }
            }
            if n.dot(centroid) - offset >= -tol {
                return Err(Error::InvalidInput(format!(
                    "face {fi} is not oriented outward"
                )));
            }
            planes.push(HalfSpace3 { normal: n, offset });
        }

        // Edge bookkeeping: each undirected edge must appear in exactly two
        // faces, once per direction.
        use std::collections::BTreeMap;
        let mut edge_map: BTreeMap<(usize, usize), Vec<(usize, bool)>> = BTreeMap::new();
        for (fi, face) in faces.iter().enumerate() {
            for i in 0..face.len() {
                let a = face[i];
                let b = face[(i + 1) % face.len()];
                if a == b {
                    return Err(Error::InvalidInput(format!(
                        "face {fi} repeats vertex {a} on an edge"
                    )));
                }
                let key = (a.min(b), a.max(b));
                edge_map.entry(key).or_default().push((fi, a < b));
            }
        }
        let mut edges = Vec::with_capacity(edge_map.len());
        for ((v0, v1), uses) in &edge_map {
            if uses.len() != 2 || uses[0].1 == uses[1].1 {
                return Err(Error::InvalidInput(format!(
                    "edge ({v0}, {v1}) is not shared by exactly two opposite-oriented faces"
                )));
            }
            edges.push(PolyEdge {
                v0: *v0,
                v1: *v1,
                faces: [uses[0].0, uses[1].0],
            });
        }

        let euler = verts.len() as i64 - edges.len() as i64 + faces.len() as i64;
        if euler != 2 {
            return Err(Error::InvalidInput(format!(
                "face lattice does not close up (V - E + F = {euler}, expected 2)"
            )));
        }

        // Every vertex must lie on the boundary and be extreme: inside or on
        // every face plane, and supported by at least three independent
        // face normals.
        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); verts.len()];
        for (fi, face) in faces.iter().enumerate() {
            for &vi in face {
                incident[vi].push(fi);
            }
        }
        for (vi, v) in verts.iter().enumerate() {
            for (fi, pl) in planes.iter().enumerate() {
                if pl.signed(*v) > tol {
                    return Err(Error::InvalidInput(format!(
                        "vertex {vi} lies outside face {fi}"
                    )));
                }
            }
            let inc = &incident[vi];
            let mut spanning = false;
            'outer: for i in 0..inc.len() {
                for j in i + 1..inc.len() {
                    for k in j + 1..inc.len() {
                        let det = planes[inc[i]]
                            .normal
                            .cross(planes[inc[j]].normal)
                            .dot(planes[inc[k]].normal);
                        if det.abs() > 1e-9 {
                            spanning = true;
                            break 'outer;
                        }
                    }
                }
            }
            if !spanning {
                return Err(Error::InvalidInput(format!(
                    "vertex {vi} is not an extreme point (incident face normals do not span)"
                )));
            }
        }

        Ok(ConvexPolytope3 {
            verts,
            faces,
            planes,
            edges,
        })
    }

    /// Axis-aligned box `[-hx, hx] x [-hy, hy] x [-hz, hz]`.
    pub fn cuboid(hx: f64, hy: f64, hz: f64) -> Result<ConvexPolytope3> {
        let verts = vec![
            Point3::new(-hx, -hy, -hz),
            Point3::new(hx, -hy, -hz),
            Point3::new(hx, hy, -hz),
            Point3::new(-hx, hy, -hz),
            Point3::new(-hx, -hy, hz),
            Point3::new(hx, -hy, hz),
            Point3::new(hx, hy, hz),
            Point3::new(-hx, hy, hz),
        ];
        let faces = vec![
            vec![0, 3, 2, 1], // bottom
            vec![4, 5, 6, 7], // top
            vec![0, 1, 5, 4],
            vec![1, 2, 6, 5],
            vec![2, 3, 7, 6],
            vec![3, 0, 4, 7],
        ];
        ConvexPolytope3::try_new(verts, faces)
    }

    /// Regular tetrahedron with vertices on the sphere of radius
    /// `r = s * sqrt(3)`, centered at the origin; edge length `2 s sqrt(2)`.
    pub fn regular_tetrahedron(s: f64) -> Result<ConvexPolytope3> {
        let verts = vec![
            Point3::new(s, s, s),
            Point3::new(s, -s, -s),
            Point3::new(-s, s, -s),
            Point3::new(-s, -s, s),
        ];
        let faces = vec![vec![0, 1, 2], vec![0, 3, 1], vec![0, 2, 3], vec![1, 3, 2]];
        ConvexPolytope3::try_new(verts, faces)
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.verts
    }

    pub fn faces(&self) -> &[Vec<usize>] {
        &self.faces
    }

    pub fn face_plane(&self, f: usize) -> HalfSpace3 {
        self.planes[f]
    }

    pub fn edges(&self) -> &[PolyEdge] {
        &self.edges
    }

    pub fn contains(&self, p: Point3, slack: f64) -> bool {
        self.planes.iter().all(|pl| pl.contains(p, slack))
    }

    /// The polytope scaled by `s` about the origin.  With the origin in the
    /// interior and `s > 1` the result strictly contains the original.
    pub fn scaled(&self, s: f64) -> Result<ConvexPolytope3> {
        ConvexPolytope3::try_new(
            self.verts.iter().map(|&v| v * s).collect(),
            self.faces.clone(),
        )
    }

    /// Nearest point of the solid polytope: `p` itself when inside, else the
    /// closest point of the boundary.  Non-expanding as a map.
    pub fn project(&self, p: Point3) -> Point3 {
        if self.contains(p, 0.0) {
            return p;
        }
        let mut best = self.verts[0];
        let mut best_d = f64::INFINITY;
        for (fi, face) in self.faces.iter().enumerate() {
            let q = self.project_to_face(fi, face, p);
            let d = q.dist(p);
            if d < best_d {
                best_d = d;
                best = q;
            }
        }
        best
    }

    fn project_to_face(&self, fi: usize, face: &[usize], p: Point3) -> Point3 {
        let pl = self.planes[fi];
        let foot = p + pl.normal * -(pl.signed(p));
        // In-plane containment: the foot is inside iff it is on the inner
        // side of every edge (edge direction x outward normal points into
        // the face's exterior halfplane within the face plane).
        let mut inside = true;
        for i in 0..face.len() {
            let a = self.verts[face[i]];
            let b = self.verts[face[(i + 1) % face.len()]];
            let m = (b - a).cross(pl.normal); // in-plane outward edge normal
            if m.dot(foot - a) > 0.0 {
                inside = false;
                break;
            }
        }
        if inside {
            return foot;
        }
        let mut best = self.verts[face[0]];
        let mut best_d = f64::INFINITY;
        for i in 0..face.len() {
            let a = self.verts[face[i]];
            let b = self.verts[face[(i + 1) % face.len()]];
            let d = b - a;
            let t = ((p - a).dot(d) / d.dot(d)).clamp(0.0, 1.0);
            let q = a + d * t;
            if q.dist(p) < best_d {
                best_d = q.dist(p);
                best = q;
            }
        }
        best
    }

    /// Decomposition of the exterior by nearest feature.  Each region is an
    /// intersection of half-spaces, and within it the nearest-point map is
    /// the affine formula carried in `proj`: the regions are face prisms,
    /// edge wedges, and vertex normal cones, which together cover every
    /// exterior point (overlapping only on shared boundaries).
    pub fn feature_regions(&self) -> Vec<FeatureRegion> {
        let mut regions = Vec::new();
        // Face prisms.
        for (fi, face) in self.faces.iter().enumerate() {
            let pl = self.planes[fi];
            let mut hs = vec![HalfSpace3 {
                normal: -pl.normal,
                offset: -pl.offset,
            }];
            for i in 0..face.len() {
                let a = self.verts[face[i]];
                let b = self.verts[face[(i + 1) % face.len()]];
                let m = (b - a).cross(pl.normal);
                hs.push(HalfSpace3 {
                    normal: m,
                    offset: m.dot(a),
                });
            }
            regions.push(FeatureRegion {
                halfspaces: hs,
                proj: FeatureProj::Face {
                    normal: pl.normal,
                    offset: pl.offset,
                },
                face_hint: fi,
            });
        }
        // Edge wedges.
        for e in &self.edges {
            let u = self.verts[e.v0];
            let v = self.verts[e.v1];
            let t = v - u;
            let len = t.norm();
            let n1 = self.planes[e.faces[0]].normal;
            let n2 = self.planes[e.faces[1]].normal;
            // In-face outward edge normals: perpendicular to the edge,
            // tangent to each face, pointing away from the face interior.
            let m1 = {
                let m = t.cross(n1);
                if m.dot(n2) >= 0.0 {
                    m
                } else {
                    -m
                }
            };
            let m2 = {
                let m = t.cross(n2);
                if m.dot(n1) >= 0.0 {
                    m
                } else {
                    -m
                }
            };
            let hs = vec![
                HalfSpace3 {
                    normal: -t,
                    offset: -t.dot(u),
                },
                HalfSpace3 {
                    normal: t,
                    offset: t.dot(v),
                },
                HalfSpace3 {
                    normal: -m1,
                    offset: -m1.dot(u),
                },
                HalfSpace3 {
                    normal: -m2,
                    offset: -m2.dot(u),
                },
            ];
            regions.push(FeatureRegion {
                halfspaces: hs,
                proj: FeatureProj::Edge {
                    origin: u,
                    dir: t * (1.0 / len),
                    len,
                },
                face_hint: e.faces[0].min(e.faces[1]),
            });
        }
        // Vertex normal cones.
        let mut incident_edges: Vec<Vec<usize>> = vec![Vec::new(); self.verts.len()];
        let mut incident_faces: Vec<usize> = vec![usize::MAX; self.verts.len()];
        for (ei, e) in self.edges.iter().enumerate() {
            incident_edges[e.v0].push(ei);
            incident_edges[e.v1].push(ei);
            for &f in &e.faces {
                incident_faces[e.v0] = incident_faces[e.v0].min(f);
                incident_faces[e.v1] = incident_faces[e.v1].min(f);
            }
        }
        for (vi, v) in self.verts.iter().enumerate() {
            let mut hs = Vec::new();
            for &ei in &incident_edges[vi] {
                let e = &self.edges[ei];
                let other = if e.v0 == vi { e.v1 } else { e.v0 };
                let d = self.verts[other] - *v;
                hs.push(HalfSpace3 {
                    normal: d,
                    offset: d.dot(*v),
                });
            }
            regions.push(FeatureRegion {
                halfspaces: hs,
                proj: FeatureProj::Vertex { v: *v },
                face_hint: incident_faces[vi],
            });
        }
        regions
    }
}

/// How points of a [`FeatureRegion`] project onto the polytope boundary.
#[derive(Clone, Copy, Debug)]
pub enum FeatureProj {
    Face { normal: Point3, offset: f64 },
    Edge { origin: Point3, dir: Point3, len: f64 },
    Vertex { v: Point3 },
}

impl FeatureProj {
    pub fn apply(&self, p: Point3) -> Point3 {
        match *self {
            FeatureProj::Face { normal, offset } => p + normal * (offset - normal.dot(p)),
            FeatureProj::Edge { origin, dir, len } => {
                let t = dir.dot(p - origin).clamp(0.0, len);
                origin + dir * t
            }
            FeatureProj::Vertex { v } => v,
        }
    }
}

/// One cell of the exterior feature decomposition; see
/// [`ConvexPolytope3::feature_regions`].
#[derive(Clone, Debug)]
pub struct FeatureRegion {
    pub halfspaces: Vec<HalfSpace3>,
    pub proj: FeatureProj,
    /// A face whose closure contains the projected image (ties resolved to
    /// the lowest index), used to pick a chart deterministically.
    pub face_hint: usize,
}

/// Convex hull of a point set in general position (no four relevant points
/// coplanar), as a polytope with triangular faces.  Inputs failing general
/// position are rejected rather than silently mis-handled.
pub fn convex_hull_3d(points: &[Point3]) -> Result<ConvexPolytope3> {
    let mut scale = 1.0f64;
    for p in points {
        scale = scale.max(p.x.abs()).max(p.y.abs()).max(p.z.abs());
    }
    let eps = DIST_TOL * scale;

    let mut pts: Vec<Point3> = Vec::new();
    for &p in points {
        if !pts.iter().any(|q| q.dist(p) <= eps) {
            pts.push(p);
        }
    }
    if pts.len() < 4 {
        return Err(Error::DegenerateGeometry(
            "hull needs at least 4 distinct points".into(),
        ));
    }
    pts.sort_by(|a, b| {
        (a.x, a.y, a.z)
            .partial_cmp(&(b.x, b.y, b.z))
            .expect("finite coordinates")
    });

    // Initial simplex: spread-out quadruple.
    let i0 = 0;
    let i1 = (0..pts.len())
        .max_by(|&a, &b| {
            pts[a]
                .dist(pts[i0])
                .partial_cmp(&pts[b].dist(pts[i0]))
                .unwrap()
        })
        .unwrap();
    let line = pts[i1] - pts[i0];
    let i2 = (0..pts.len())
        .max_by(|&a, &b| {
            let da = line.cross(pts[a] - pts[i0]).norm();
            let db = line.cross(pts[b] - pts[i0]).norm();
            da.partial_cmp(&db).unwrap()
        })
        .unwrap();
    let nrm = line.cross(pts[i2] - pts[i0]);
    if nrm.norm() <= eps * scale {
        return Err(Error::DegenerateGeometry("all points collinear".into()));
    }
    let i3 = (0..pts.len())
        .max_by(|&a, &b| {
            let da = nrm.dot(pts[a] - pts[i0]).abs();
            let db = nrm.dot(pts[b] - pts[i0]).abs();
            da.partial_cmp(&db).unwrap()
        })
        .unwrap();
    if nrm.dot(pts[i3] - pts[i0]).abs() <= eps * scale {
        return Err(Error::DegenerateGeometry("all points coplanar".into()));
    }

    let (a, b) = if nrm.dot(pts[i3] - pts[i0]) > 0.0 {
        (i2, i1) // flip so i3 is below (i0, i1, i2)
    } else {
        (i1, i2)
    };
    let mut faces: Vec<[usize; 3]> = vec![[i0, a, b], [i0, b, i3], [i0, i3, a], [a, i3, b]];

    let outward = |f: &[usize; 3], p: Point3| -> f64 {
        let n = (pts[f[1]] - pts[f[0]]).cross(pts[f[2]] - pts[f[0]]);
        n.dot(p - pts[f[0]]) / n.norm()
    };

    for pi in 0..pts.len() {
        if [i0, i1, i2, i3].contains(&pi) {
            continue;
        }
        let p = pts[pi];
        let visible: Vec<usize> = (0..faces.len())
            .filter(|&fi| outward(&faces[fi], p) > eps)
            .collect();
        if visible.is_empty() {
            continue;
        }
        use std::collections::BTreeSet;
        let vis_set: BTreeSet<usize> = visible.iter().copied().collect();
        let mut directed: BTreeSet<(usize, usize)> = BTreeSet::new();
        for &fi in &visible {
            let f = faces[fi];
            for k in 0..3 {
                directed.insert((f[k], f[(k + 1) % 3]));
            }
        }
        let mut horizon: Vec<(usize, usize)> = Vec::new();
        for &(u, v) in &directed {
            if !directed.contains(&(v, u)) {
                horizon.push((u, v));
            }
        }
        let mut next: Vec<[usize; 3]> = faces
            .iter()
            .enumerate()
            .filter(|(fi, _)| !vis_set.contains(fi))
            .map(|(_, f)| *f)
            .collect();
        for (u, v) in horizon {
            next.push([u, v, pi]);
        }
        faces = next;
    }

    // Compact to the vertices actually used.
    let mut used: Vec<usize> = faces.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    let mut remap = vec![usize::MAX; pts.len()];
    for (new, &old) in used.iter().enumerate() {
        remap[old] = new;
    }
    let verts: Vec<Point3> = used.iter().map(|&i| pts[i]).collect();
    let faces: Vec<Vec<usize>> = faces
        .iter()
        .map(|f| f.iter().map(|&i| remap[i]).collect())
        .collect();

    let hull = ConvexPolytope3::try_new(verts, faces)?;
    for &p in points {
        if !hull.contains(p, 10.0 * eps) {
            return Err(Error::DegenerateGeometry(
                "hull construction left an input point outside (input likely not in general position)"
                    .into(),
            ));
        }
    }
    Ok(hull)
}

/// `n` points spread deterministically over the unit sphere (golden-angle
/// spiral).  Handy for building near-round hulls without randomness.
pub fn fibonacci_sphere(n: usize) -> Vec<Point3> {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Point3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}
