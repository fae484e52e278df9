//! Folding a polyhedral space into the plane: white point marking, per-chart
//! Voronoi cells, the white/black fan triangulation, and the polar folding
//! map that sends every marked point to the origin while preserving
//! distances on each piece.

use crate::geom2d::{perpendicular_bisector, seg_closest_point, ConvexPolygon, Point2};
use crate::polyspace::{PLMap, Piece, PolySpace, SegPiece, SubTri, Tag, Triangulation};
use crate::tol::DIST_TOL;
use crate::{Error, Result};

/// Where a marked point lives: a vertex class of the space, or a point on a
/// gluing class at a distance `param` from the class's first endpoint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WhiteLocus {
    Vertex(usize),
    Edge { class: usize, param: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WhitePoint {
    pub locus: WhiteLocus,
}

/// The marked points: every vertex of the space, plus points on each edge
/// whose distance to the nearer endpoint is a positive multiple of `eps`
/// (capped at the half-edge).  Points closer than the distance tolerance
/// are merged.
#[derive(Clone, Debug)]
pub struct WhiteMarking {
    pub eps: f64,
    pub whites: Vec<WhitePoint>,
}

impl WhiteMarking {
    /// Builds the marking for an arbitrary `eps`, skipping the safety bound
    /// check.  With an oversized `eps` the construction can produce cells
    /// that reach across triangles; [`voronoi_cells`] detects that and
    /// fails, which is exactly what tests of the bound rely on.
    pub fn with_eps_unchecked(space: &PolySpace, eps: f64) -> WhiteMarking {
        let mut whites: Vec<WhitePoint> = (0..space.vertex_class_count())
            .map(|vc| WhitePoint {
                locus: WhiteLocus::Vertex(vc),
            })
            .collect();
        for (ci, class) in space.gluing_classes().iter().enumerate() {
            let mut params: Vec<f64> = Vec::new();
            let mut k = 1.0;
            while k * eps <= class.len / 2.0 {
                params.push(k * eps);
                params.push(class.len - k * eps);
                k += 1.0;
            }
            params.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            params.dedup_by(|a, b| (*a - *b).abs() <= DIST_TOL);
            whites.extend(params.into_iter().map(|param| WhitePoint {
                locus: WhiteLocus::Edge { class: ci, param },
            }));
        }
        WhiteMarking { eps, whites }
    }
}

/// Marks white points with a step `eps` strictly below `ℓ·α/100` (minimum
/// edge length times minimum corner angle), defaulting to `ℓ·α/200`.  The
/// bound guarantees every Voronoi cell stays inside the star of its point.
pub fn mark_white(space: &PolySpace, eps: Option<f64>) -> Result<WhiteMarking> {
    let bound = space.min_edge_length() * space.min_angle() / 100.0;
    let eps = match eps {
        None => bound / 2.0,
        Some(e) if e <= 0.0 => {
            return Err(Error::InvalidInput("eps must be positive".into()));
        }
        Some(e) if e >= bound => {
            return Err(Error::InvalidInput(format!(
                "eps {e} is not below the safe bound {bound}"
            )));
        }
        Some(e) => e,
    };
    Ok(WhiteMarking::with_eps_unchecked(space, eps))
}

/// One Voronoi cell: the territory of one white point inside one chart.  A
/// white point glued into a triangle at several positions owns one cell per
/// position.
#[derive(Clone, Debug)]
pub struct Cell {
    pub tri: usize,
    pub white: usize,
    pub site: Point2,
    pub poly: ConvexPolygon,
    /// Bitmask of the triangle's sides containing the white point's locus;
    /// the cell may touch exactly these sides of the chart boundary.
    pub locus_sides: u8,
}

#[derive(Clone, Debug)]
pub struct VoronoiDecomposition {
    pub cells: Vec<Cell>,
    /// Cell corners that are not white, per chart, deduplicated.
    pub blacks: Vec<(usize, Point2)>,
    /// Midpoint parameter of each dangling edge (always half its length).
    pub hanging_mids: Vec<(usize, f64)>,
}

#[derive(Clone)]
struct Site {
    white: usize,
    pos: Point2,
    locus_sides: u8,
}

fn incident_sites(space: &PolySpace, marking: &WhiteMarking) -> Vec<Vec<Site>> {
    let mut sites: Vec<Vec<Site>> = vec![Vec::new(); space.triangle_count()];
    for (wid, w) in marking.whites.iter().enumerate() {
        match w.locus {
            WhiteLocus::Vertex(vc) => {
                for &(t, c) in space.vertex_class_members(vc) {
                    sites[t].push(Site {
                        white: wid,
                        pos: space.chart(t)[c],
                        locus_sides: 0b111 ^ (1 << c),
                    });
                }
            }
            WhiteLocus::Edge { class, param } => {
                for m in &space.gluing_classes()[class].members {
                    sites[m.tri].push(Site {
                        white: wid,
                        pos: space.side_point(*m, param),
                        locus_sides: 1 << m.side,
                    });
                }
            }
        }
    }
    sites
}

/// Clips each chart triangle into the Voronoi cells of its incident white
/// points.  Far sites are pruned by distance; a cell reaching a side of the
/// chart that does not carry its white point's locus means the marking step
/// was too coarse and is reported as an escape.
pub fn voronoi_cells(
    space: &PolySpace,
    marking: &WhiteMarking,
) -> Result<VoronoiDecomposition> {
    let sites = incident_sites(space, marking);
    let mut cells = Vec::new();
    let mut blacks = Vec::new();

    for t in 0..space.triangle_count() {
        let chart = space.chart(t);
        let scale = space
            .side_lengths(t)
            .iter()
            .cloned()
            .fold(1.0, f64::max);
        let tol = DIST_TOL * scale;
        let triangle = ConvexPolygon::try_new(chart.to_vec())
            .map_err(|e| Error::Internal(format!("chart {t} is not a polygon: {e}")))?;
        let local = &sites[t];
        if local.is_empty() {
            return Err(Error::Internal(format!(
                "triangle {t} has no incident white points"
            )));
        }
        let mut area_sum = 0.0f64;
        let mut tri_blacks: Vec<Point2> = Vec::new();
        for (si, s) in local.iter().enumerate() {
            let mut poly = triangle.clone();
            // Competing sites, visited nearest first and cut off once they
            // can no longer reach the cell.  Non-negative distances sort by
            // their bit patterns, which keeps the heap free of float
            // ordering wrappers.
            let mut heap: std::collections::BinaryHeap<std::cmp::Reverse<(u64, usize)>> = local
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != si)
                .map(|(j, o)| std::cmp::Reverse((o.pos.dist(s.pos).to_bits(), j)))
                .collect();
            while let Some(std::cmp::Reverse((bits, j))) = heap.pop() {
                let d = f64::from_bits(bits);
                let radius = poly
                    .vertices()
                    .iter()
                    .map(|v| v.dist(s.pos))
                    .fold(0.0, f64::max);
                if d > 2.0 * radius + tol {
                    break;
                }
                if d <= DIST_TOL {
                    return Err(Error::Internal(format!(
                        "white points {} and {} coincide in chart {t}",
                        s.white, local[j].white
                    )));
                }
                let hp = perpendicular_bisector(s.pos, local[j].pos)?;
                poly = match poly.clip_halfplane(&hp) {
                    Some(p) => p,
                    None => {
                        return Err(Error::Internal(format!(
                            "white point {} lost its own cell in chart {t}",
                            s.white
                        )));
                    }
                };
            }

            // Escape detection: a segment of a foreign side inside the cell
            // shows up as two separated cell corners on that side.
            for side in 0..3u8 {
                if s.locus_sides & (1 << side) != 0 {
                    continue;
                }
                let (a, b) = space.side_segment(t, side as usize);
                let mut on_side: Vec<Point2> = poly
                    .vertices()
                    .iter()
                    .cloned()
                    .filter(|&v| seg_closest_point(a, b, v).dist(v) <= tol)
                    .collect();
                on_side.dedup_by(|x, y| x.dist(*y) <= 10.0 * tol);
                if on_side.len() >= 2
                    && on_side
                        .iter()
                        .any(|&v| on_side.iter().any(|&w| v.dist(w) > 10.0 * tol))
                {
                    return Err(Error::CellEscape {
                        white: s.white,
                        triangle: t,
                    });
                }
            }

            area_sum += poly.area();
            for &v in poly.vertices() {
                let is_white = local.iter().any(|o| o.pos.dist(v) <= tol);
                if !is_white && !tri_blacks.iter().any(|b| b.dist(v) <= tol) {
                    tri_blacks.push(v);
                }
            }
            cells.push(Cell {
                tri: t,
                white: s.white,
                site: s.pos,
                poly,
                locus_sides: s.locus_sides,
            });
        }
        let want = space.chart_area(t);
        if (area_sum - want).abs() > 1e-9 * want.max(1.0) {
            return Err(Error::Internal(format!(
                "cells of chart {t} cover area {area_sum} of {want}"
            )));
        }
        blacks.extend(tri_blacks.into_iter().map(|p| (t, p)));
    }

    let hanging_mids = space
        .hanging_edges()
        .iter()
        .enumerate()
        .map(|(h, e)| (h, e.len / 2.0))
        .collect();
    Ok(VoronoiDecomposition {
        cells,
        blacks,
        hanging_mids,
    })
}

/// The corner fan of one cell: triangles (site, u, v) over the boundary
/// sides not incident to the site, with the site inserted into the boundary
/// cycle when it lies on it.
fn cell_fan(cell: &Cell, tol: f64) -> Result<Vec<[Point2; 3]>> {
    let verts = cell.poly.vertices();
    let mut cycle: Vec<(Point2, bool)> = Vec::with_capacity(verts.len() + 1);
    let mut site_on_boundary = false;
    for (i, &v) in verts.iter().enumerate() {
        let is_site = v.dist(cell.site) <= tol;
        site_on_boundary |= is_site;
        cycle.push((v, is_site));
        let w = verts[(i + 1) % verts.len()];
        if !is_site && w.dist(cell.site) > tol {
            let foot = seg_closest_point(v, w, cell.site);
            if foot.dist(cell.site) <= tol && foot.dist(v) > tol && foot.dist(w) > tol {
                cycle.push((cell.site, true));
                site_on_boundary = true;
            }
        }
    }
    let mut fan = Vec::new();
    for i in 0..cycle.len() {
        let (u, u_site) = cycle[i];
        let (v, v_site) = cycle[(i + 1) % cycle.len()];
        if u_site || v_site {
            continue;
        }
        let area = crate::geom2d::orient(cell.site, u, v);
        if area <= 0.0 {
            return Err(Error::Internal(format!(
                "degenerate fan triangle in the cell of white {} (area {area:.3e})",
                cell.white
            )));
        }
        fan.push([cell.site, u, v]);
    }
    if fan.is_empty() && !site_on_boundary {
        return Err(Error::Internal(format!(
            "cell of white {} produced no fan triangles",
            cell.white
        )));
    }
    Ok(fan)
}

/// Builds the fan triangulation of a decomposition: every sub-triangle has
/// one white corner (the cell's point, always corner 0) and two black
/// corners, and sub-triangles across a black–black edge come in congruent
/// pairs.
pub fn build_t1(space: &PolySpace, decomp: &VoronoiDecomposition) -> Result<Triangulation> {
    let mut subs = Vec::new();
    let mut tags = Vec::new();
    for cell in &decomp.cells {
        let scale = space
            .side_lengths(cell.tri)
            .iter()
            .cloned()
            .fold(1.0, f64::max);
        for tri in cell_fan(cell, DIST_TOL * scale)? {
            subs.push(SubTri {
                parent: cell.tri,
                chart: tri,
            });
            tags.push([Tag::White, Tag::Black, Tag::Black]);
        }
    }
    Triangulation::try_new(space, subs, Some(tags))
}

/// Folds the space flat with the default marking step.
pub fn fold(space: &PolySpace) -> Result<PLMap> {
    let marking = mark_white(space, None)?;
    fold_with_marking(space, &marking)
}

/// Folds the space flat using a given marking: each fan triangle is split
/// along the bisector at its white corner, and each half is laid out rigidly
/// with the white corner at the origin and the black corner on the positive
/// x-axis.  All marked points map to the origin exactly; distances on every
/// piece are preserved, so the whole map is length-preserving and
/// non-expanding.
pub fn fold_with_marking(space: &PolySpace, marking: &WhiteMarking) -> Result<PLMap> {
    let decomp = voronoi_cells(space, marking)?;
    let mut pieces = Vec::new();
    for cell in &decomp.cells {
        let scale = space
            .side_lengths(cell.tri)
            .iter()
            .cloned()
            .fold(1.0, f64::max);
        for [w, b1, b2] in cell_fan(cell, DIST_TOL * scale)? {
            let r1 = w.dist(b1);
            let r2 = w.dist(b2);
            let u1 = (b1 - w) * (1.0 / r1);
            let u2 = (b2 - w) * (1.0 / r2);
            let psi = (u1.dot(u2)).clamp(-1.0, 1.0).acos() / 2.0;
            // The bisector meets [b1, b2] at distances proportional to the
            // adjacent side lengths.
            let m = b1 + (b2 - b1) * (r1 / (r1 + r2));
            let rm = w.dist(m);
            let m_img = Point2::new(rm * psi.cos(), rm * psi.sin());
            pieces.push(Piece {
                parent: cell.tri,
                chart: [w, b1, m],
                image: [Point2::ZERO, Point2::new(r1, 0.0), m_img],
            });
            pieces.push(Piece {
                parent: cell.tri,
                chart: [w, m, b2],
                image: [Point2::ZERO, m_img, Point2::new(r2, 0.0)],
            });
        }
    }

    // Dangling edges fold onto a ray: the half nearer the attachment keeps
    // its distance from it, the far half folds back toward the origin.
    let mut segments = Vec::new();
    for (h, edge) in space.hanging_edges().iter().enumerate() {
        let half = edge.len / 2.0;
        segments.push(SegPiece {
            hedge: h,
            param: [0.0, half],
            image: [Point2::ZERO, Point2::new(half, 0.0)],
        });
        segments.push(SegPiece {
            hedge: h,
            param: [half, edge.len],
            image: [Point2::new(half, 0.0), Point2::ZERO],
        });
    }

    // Cheap self-audit of the construction before flagging the result.
    let mut worst = 0.0f64;
    for p in &pieces {
        for k in 0..3 {
            let dc = p.chart[k].dist(p.chart[(k + 1) % 3]);
            let di = p.image[k].dist(p.image[(k + 1) % 3]);
            worst = worst.max((dc - di).abs());
        }
    }
    if worst >= DIST_TOL {
        return Err(Error::Internal(format!(
            "folded piece distorts a side by {worst:.3e}"
        )));
    }
    Ok(PLMap {
        pieces,
        segments,
        pdp: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::check_pdp;

    fn equilateral() -> PolySpace {
        PolySpace::from_embedded(
            &[
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![0.5, 3f64.sqrt() / 2.0],
            ],
            &[[0, 1, 2]],
        )
        .unwrap()
    }

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

    fn tetrahedron() -> PolySpace {
        let s = 1.0 / 8.0f64.sqrt();
        PolySpace::from_embedded(
            &[
                vec![s, s, s],
                vec![s, -s, -s],
                vec![-s, s, -s],
                vec![-s, -s, s],
            ],
            &[[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]],
        )
        .unwrap()
    }

    fn vertex_only_marking(space: &PolySpace) -> WhiteMarking {
        // A step larger than every half-edge leaves only vertex whites.
        let eps = space
            .gluing_classes()
            .iter()
            .map(|g| g.len)
            .fold(0.0, f64::max);
        WhiteMarking::with_eps_unchecked(space, eps)
    }

    #[test]
    fn marking_offsets_and_bounds() {
        let tri = equilateral();
        // Oversized step via the unchecked constructor: one offset from
        // each end.
        let m = WhiteMarking::with_eps_unchecked(&tri, 0.3);
        let mut edge_params: Vec<f64> = m
            .whites
            .iter()
            .filter_map(|w| match w.locus {
                WhiteLocus::Edge { param, .. } => Some(param),
                _ => None,
            })
            .collect();
        edge_params.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(edge_params.len(), 6);
        assert!((edge_params[0] - 0.3).abs() < 1e-12);
        assert!((edge_params[5] - 0.7).abs() < 1e-12);

        // A step beyond the half-edge leaves vertex whites only.
        let m = WhiteMarking::with_eps_unchecked(&tri, 0.6);
        assert_eq!(m.whites.len(), 3);

        // The default step: 190 interior points per edge.
        let m = mark_white(&tri, None).unwrap();
        let per_edge = m
            .whites
            .iter()
            .filter(|w| matches!(w.locus, WhiteLocus::Edge { class: 0, .. }))
            .count();
        assert_eq!(per_edge, 190);

        // User steps at or above the bound are rejected.
        let bound = tri.min_edge_length() * tri.min_angle() / 100.0;
        assert!(mark_white(&tri, Some(bound)).is_err());
        assert!(mark_white(&tri, Some(bound * 0.9)).is_ok());
    }

    #[test]
    fn vertex_only_cells_are_kites_meeting_at_the_circumcenter() {
        let tri = equilateral();
        let m = vertex_only_marking(&tri);
        assert_eq!(m.whites.len(), 3);
        let decomp = voronoi_cells(&tri, &m).unwrap();
        assert_eq!(decomp.cells.len(), 3);
        let center = Point2::new(0.5, 1.0 / (2.0 * 3f64.sqrt()));
        for cell in &decomp.cells {
            assert_eq!(cell.poly.vertices().len(), 4, "kite expected");
            assert!(cell
                .poly
                .vertices()
                .iter()
                .any(|v| v.dist(center) < 1e-9));
            assert!(cell.poly.contains(cell.site, 1e-9));
        }
        // Sub-triangle count from the fan: two per kite.
        let t1 = build_t1(&tri, &decomp).unwrap();
        assert_eq!(t1.subs.len(), 6);
        for tags in t1.tags.as_ref().unwrap() {
            assert_eq!(tags.iter().filter(|&&t| t == Tag::White).count(), 1);
            assert_eq!(tags.iter().filter(|&&t| t == Tag::Black).count(), 2);
        }
    }

    #[test]
    fn tetrahedron_vertex_only_t1_has_congruent_pairs() {
        let tet = tetrahedron();
        let m = vertex_only_marking(&tet);
        let decomp = voronoi_cells(&tet, &m).unwrap();
        let t1 = build_t1(&tet, &decomp).unwrap();
        assert_eq!(t1.subs.len(), 24);

        // Pair sub-triangles inside each chart across their black–black
        // side (corners 1 and 2 of each fan triangle) and compare sorted
        // side lengths.
        use std::collections::BTreeMap;
        let mut groups: BTreeMap<(usize, [i64; 4]), Vec<usize>> = BTreeMap::new();
        let quant = |p: Point2| -> [i64; 2] {
            [(p.x * 1e9).round() as i64, (p.y * 1e9).round() as i64]
        };
        for (i, sub) in t1.subs.iter().enumerate() {
            let b1 = quant(sub.chart[1]);
            let b2 = quant(sub.chart[2]);
            let key = if b1 <= b2 {
                [b1[0], b1[1], b2[0], b2[1]]
            } else {
                [b2[0], b2[1], b1[0], b1[1]]
            };
            groups.entry((sub.parent, key)).or_default().push(i);
        }
        let mut paired = 0;
        for (_, ids) in groups {
            if ids.len() == 2 {
                paired += 2;
                let sides = |i: usize| -> Vec<f64> {
                    let c = t1.subs[i].chart;
                    let mut s = vec![c[0].dist(c[1]), c[1].dist(c[2]), c[2].dist(c[0])];
                    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    s
                };
                let (a, b) = (sides(ids[0]), sides(ids[1]));
                for (x, y) in a.iter().zip(&b) {
                    assert!((x - y).abs() < 1e-9, "pair not congruent");
                }
            }
        }
        assert_eq!(paired, 24, "every sub-triangle pairs across its black side");
    }

    #[test]
    fn fold_sends_whites_to_origin_and_verifies() {
        let tet = tetrahedron();
        let marking = WhiteMarking::with_eps_unchecked(&tet, 0.2);
        let map = fold_with_marking(&tet, &marking).unwrap();
        assert!(map.pdp);
        let report = check_pdp(&tet, &map).unwrap();
        assert!(report.pass, "{report:?}");
        for p in &map.pieces {
            assert_eq!(p.image[0], Point2::ZERO, "white corner lands exactly at 0");
        }
    }

    #[test]
    fn fold_of_equilateral_stays_in_the_circumradius_disk() {
        let tri = equilateral();
        let map = fold(&tri).unwrap();
        let report = check_pdp(&tri, &map).unwrap();
        assert!(report.pass, "{report:?}");
        let r = 1.0 / 3f64.sqrt() + 1e-9;
        for p in &map.pieces {
            for v in &p.image {
                assert!(v.norm() <= r, "image point {v:?} outside the disk");
            }
        }
    }

    #[test]
    fn square_with_vertex_whites_folds_into_sixteen_pieces() {
        let sq = unit_square();
        let m = vertex_only_marking(&sq);
        let map = fold_with_marking(&sq, &m).unwrap();
        assert_eq!(map.pieces.len(), 16);
        let report = check_pdp(&sq, &map).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn hanging_edge_folds_onto_a_ray() {
        let tri = PolySpace::new(
            vec![[1.0, 1.0, 1.0]],
            vec![vec![(0, 0, false)], vec![(0, 1, false)], vec![(0, 2, false)]],
            vec![(0, 0, 0.8)],
        )
        .unwrap();
        let map = fold(&tri).unwrap();
        assert_eq!(map.segments.len(), 2);
        assert_eq!(map.segments[0].image[0], Point2::ZERO);
        assert!((map.segments[0].image[1].x - 0.4).abs() < 1e-12);
        assert_eq!(map.segments[1].image[1], Point2::ZERO);
        let report = check_pdp(&tri, &map).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn oversized_step_escapes_on_the_flat_obtuse_fixture() {
        // A wide, flat triangle glued along its long side to an equilateral
        // one.  With the marking step forced to ℓ·α (one hundred times the
        // safe bound) the long side gets a single offset pair from each
        // end, leaving its middle uncovered; the flat apex then owns a
        // stretch of the far side and the cell computation reports it.
        let h = 0.4843;
        let space = PolySpace::from_embedded(
            &[
                vec![0.0, 0.0],
                vec![2.0, 0.0],
                vec![1.0, h],
                vec![1.0, -(3f64.sqrt())],
            ],
            &[[0, 1, 2], [1, 0, 3]],
        )
        .unwrap();
        let eps = space.min_edge_length() * space.min_angle();
        let marking = WhiteMarking::with_eps_unchecked(&space, eps);
        match voronoi_cells(&space, &marking) {
            Err(Error::CellEscape { .. }) => {}
            other => panic!("expected a cell escape, got {other:?}"),
        }
        // The default step on the same space is safe.
        let map = fold(&space).unwrap();
        assert!(check_pdp(&space, &map).unwrap().pass);
    }

    #[test]
    fn default_fold_on_the_square_verifies() {
        let sq = unit_square();
        let map = fold(&sq).unwrap();
        let report = check_pdp(&sq, &map).unwrap();
        assert!(report.pass, "{report:?}");
    }
}
