//! Assembly planning for interlocking-brick designs.
//!
//! Given a digital brick design, this crate can
//!
//! * decide the order in which the bricks can physically be assembled,
//!   restricted to a small library of relative placement skills
//!   ([`planner`]),
//! * judge whether every intermediate structure stands up on its own, via
//!   a static-equilibrium linear program over stud contact forces
//!   ([`stability`]),
//! * draw per-step instruction images with the rest of the scene dimmed
//!   ([`render`], [`grounding`]), aligned to an observed image by
//!   photometric registration,
//! * and estimate how often a stochastic skill executor finishes the plan
//!   ([`executor`]).
//!
//! All geometry is discrete: stud cells in x/y, layers in z.

pub mod executor;
pub mod grid;
pub mod grounding;
pub mod img;
pub mod planner;
pub mod render;
pub mod simplex;
pub mod stability;

pub use grid::{
    apply_encoding_pose, baseplate_ref, relative_encoding, rotate_ccw, Brick, BrickType, Contact,
    ContactRef, GridError, Structure, TaskEncoding, Workspace, BASEPLATE,
};
pub use planner::{plan_assembly, validate_plan, Plan, PlanError, PlanStep, PlannerConfig};
pub use stability::{assess_stability, StabilityParams, StabilityReport};

/// Crate-wide error: any module failure or file/serde problem.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Grounding(#[from] grounding::GroundingError),
    #[error(transparent)]
    Exec(#[from] executor::ExecError),
    #[error(transparent)]
    Image(#[from] img::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
