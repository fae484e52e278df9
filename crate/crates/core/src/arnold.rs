//! Folded plane figures: reflection folds, perimeter accounting, star-shaped
//! wrapping maps, and the straightening homotopy through four dimensions.
