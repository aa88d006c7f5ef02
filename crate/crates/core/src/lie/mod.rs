//! Closed-form Lie-group algebra for T(1), T(2), SO(2), R>0 x SO(2) and SE(2).

mod element;
mod lift;
mod tag;

pub use element::{group_exp, group_log, pseudo_distance, AlgebraVector, GroupElement, Point};
pub use lift::{lift, lift_all, orbit_distance, origin, total_distance, LiftedPoint};
pub use tag::GroupTag;
