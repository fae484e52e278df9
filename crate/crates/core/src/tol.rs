//! Shared numeric tolerances and the one orientation predicate.
//!
//! Every distance comparison in the crate goes through [`DIST_TOL`] and every
//! algebraic identity through [`ALG_TOL`]; keeping them here (rather than ad
//! hoc constants at call sites) keeps the certification thresholds auditable.
//! All orientation tests funnel through [`orient2d`] so that collinearity
//! decisions are made by a single function.

/// Tolerance for distance comparisons (lengths, residuals, point identity).
pub const DIST_TOL: f64 = 1e-9;

/// Tolerance for algebraic identities (determinants, barycentric sums,
/// parameter clamping).
pub const ALG_TOL: f64 = 1e-12;

/// Signed double area of the triangle `(a, b, c)`.
///
/// Positive when `c` lies to the left of the directed line `a -> b`.  This is
/// the only orientation predicate in the crate; callers compare its sign (or
/// its magnitude against a scaled tolerance for near-degeneracy tests).
#[inline]
pub fn orient2d(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orientation_signs() {
        assert!(orient2d([0.0, 0.0], [1.0, 0.0], [0.0, 1.0]) > 0.0);
        assert!(orient2d([0.0, 0.0], [1.0, 0.0], [0.0, -1.0]) < 0.0);
        assert_eq!(orient2d([0.0, 0.0], [1.0, 0.0], [2.0, 0.0]), 0.0);
    }

    #[test]
    fn tolerances_are_ordered() {
        // The algebraic tolerance must be strictly finer than the distance
        // tolerance; several modules rely on that when snapping.
        assert!(ALG_TOL < DIST_TOL);
    }
}
