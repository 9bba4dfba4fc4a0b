//! Small reverse-mode differentiation engine over dense `f64` arrays.
//!
//! The primitive set is closed: affine maps, elementwise arithmetic and
//! nonlinearities, sums and means, last-axis softmax / slice / l2-normalization,
//! first-axis concatenation, plus the structural `reshape` and `gather_rows`.
//! There is no implicit broadcasting.

mod array;
mod gradcheck;
mod tape;

pub use array::Array;
pub use gradcheck::{grad_check, grad_check_with, Coverage, GradCheckReport};
pub use tape::{Tape, Var};
