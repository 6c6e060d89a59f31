//! Lindblad models, fixed-step RK4 integration and steady states.

mod model;
mod propagate;
mod steady;

pub use model::{
    build_superoperator, rhs, three_level_model, unvectorize, vectorize, CollapseOperator, DriveTerm, Frame,
    LindbladModel, ThreeLevelParams,
};
pub use propagate::{evolve, evolve_sampled, evolve_to, steps_for, Propagator, TimeSeries};
pub use steady::{steady_state, NULL_THRESHOLD, STEADY_RESIDUAL};
