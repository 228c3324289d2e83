mod fixtures;
mod ops;

pub use fixtures::{
    loss_fixture, loss_fixture_with, min_projection_norm, LossFixture, MIN_PROJECTION_NORM, SMALL_DIMS,
    TINY_DIMS,
};
pub use ops::{op_case, OpCase};
