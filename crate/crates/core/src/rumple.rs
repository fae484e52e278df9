//! Staged rumpling: surfaces of convex bodies, compatible projections
//! between nested surfaces, and the recursive approximation schedule.
