//! Data-association-aware myopic belief space planning.
//!
//! The engine keeps a Gaussian-mixture belief over a planar robot pose, one
//! component per data-association hypothesis, and chooses between candidate
//! actions by the expected entropy of the posterior hypothesis weights.
//! Instead of evaluating every hypothesis, the planner works on a distilled
//! subset of them and computes certified lower and upper bounds on the
//! normalizer and on the entropy cost. When the bounds of one action separate
//! from all others, the choice provably matches the full evaluation; under a
//! hard hypothesis budget the planner reports whether that guarantee holds.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the simulator
//! and the command line live in the companion `aliasplan` crate.
//!
//! Modules:
//!
//!  - [`world`]: poses, landmark maps, motion/observation models, association
//!    enumeration and the a-priori constants used by the likelihood bound.
//!  - [`belief`]: the mixture belief, prediction, the association-aware
//!    update and weight entropy.
//!  - [`simplification`]: simplified beliefs and the bounds on the normalizer
//!    and on the entropy cost, including incremental refinement.
//!  - [`planner`]: observation sampling, exact and bounded objective
//!    evaluation, guaranteed and budgeted action selection.
//!  - [`oracle`]: independent brute-force references used by tests and the
//!    acceptance runs.
//!  - [`verify`]: randomized soundness checks shared by the CLI and tests.
//!  - [`rng`]: seeded random streams.

#![no_std]

extern crate alloc;

pub mod belief;
pub mod oracle;
pub mod planner;
pub mod rng;
pub mod simplification;
pub mod sum;
pub mod verify;
pub mod world;

pub use belief::{
    BeliefError, GaussianComponent, HypothesisComponent, MixtureBelief, ZetaTable,
};
pub use planner::{ActionEvaluation, PlanError, PlanOutcome, PlannerConfig, RefinementOrder};
pub use simplification::{
    BoundCache, BoundError, BoundInterval, DistilledSelection, EntropyBounds, LikelihoodBounds,
};
pub use world::{
    ActionId, AssociationVector, ClassId, Landmark, LandmarkId, LandmarkMap, Measurement,
    ModelError, MotionModel, MotionPrimitive, ObservationModel, ObservationSet, RobotPose,
    WorldModel,
};
