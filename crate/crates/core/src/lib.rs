//! Piecewise distance preserving (PDP) maps from 2-dimensional polyhedral
//! spaces into the plane.
//!
//! A map is *piecewise distance preserving* when the domain admits a
//! triangulation such that the restriction of the map to every simplex is an
//! isometry onto its image.  This crate constructs such maps (folding a
//! polyhedral space onto the plane, extending a finite non-expanding
//! correspondence, approximating an arbitrary non-expanding map) and verifies
//! them numerically.
//!
//! Modules:
//! * [`geom2d`] / [`geom3d`] — exact-predicate planar kernel and the small
//!   amount of 3-space convexity needed by [`rumple`];
//! * [`polyspace`] — 2-dimensional polyhedral spaces given by triangle side
//!   lengths and edge gluings, their charts, triangulations and PL maps;
//! * [`zalgaller`] — folding a polyhedral space onto the plane;
//! * [`brehm`] — extending a non-expanding finite point correspondence of a
//!   convex polygon to a PDP map, plus the finite Kirszbraun extension;
//! * [`akopyan`] — approximating a non-expanding map by a PDP map;
//! * [`verify`] — PDP certification, the `ell_k` length functionals, and
//!   black/white foldability;
//! * [`arnold`] — paper folding of a square: perimeter-monotone line folds,
//!   the star maps, and the four-dimensional unfolding homotopy;
//! * [`rumple`] — finite stages of the rumpling construction over nested
//!   convex polytopes.
//!
//! All public functions are pure (no interior mutability, no globals), so
//! callers may freely run them concurrently on shared inputs.

pub mod akopyan;
pub mod arnold;
pub mod brehm;
pub mod geom2d;
pub mod geom3d;
pub mod io;
pub mod polyspace;
pub mod rumple;
pub mod tol;
pub mod verify;
pub mod zalgaller;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Geometric construction received degenerate input (collinear frame
    /// points, empty point set, zero-length segment, ...).
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    /// Pairwise distances of a would-be isometry disagree.
    #[error("distance mismatch: {0}")]
    DistanceMismatch(String),
    /// A polyhedral space description is invalid (triangle inequality,
    /// inconsistent gluing lengths, disconnected, bad indices, ...).
    #[error("invalid polyhedral space: {0}")]
    InvalidSpace(String),
    /// A subdivision does not tile its parent or disagrees across a gluing.
    #[error("invalid subdivision: {0}")]
    InvalidSubdivision(String),
    /// A Voronoi cell of a white point escaped the star of its site.  This
    /// violates the guarantee of the marking bound and signals that the
    /// marking step accepted an illegal spacing.
    #[error("voronoi cell of white point {white} escaped its star in triangle {triangle}")]
    CellEscape { white: usize, triangle: usize },
    /// Constraints handed to an extension are not non-expanding, or lie
    /// outside the domain.
    #[error("invalid constraints: {0}")]
    InvalidConstraints(String),
    /// An internal consistency check failed; indicates a bug.
    #[error("internal invariant violated: {0}")]
    Internal(String),
    /// Input file or parameter is malformed.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
