//! Reverse-mode differentiation of every stage of the pipeline.

pub mod bundle;
pub mod filter;
pub mod gradcheck;
pub mod jacobian;
pub mod tape;

pub use bundle::GradientBundle;
pub use filter::{
    allpole_backward, allpole_forward, biquad_frame_adjoint, fir_backward, fir_forward, AllpoleGrads, AllpoleRecord,
    FirGrads, FrameAdjoint,
};
pub use gradcheck::{grad_check, grad_check_random, grad_target, GradCheckReport, GradTarget, GRAD_TARGETS};
pub use jacobian::{coeff_jacobian, CoeffJacobian};
pub use tape::{backward_through_chain, Gradients, Tape, ValueId};
