//! Serialization schemas for spaces, maps, constraint sets, and reports.
