//! Deterministic crossing micro-simulation, stated-preference trial protocol
//! and logit choice estimation.
//!
//! The numerical kernels ([`geom`], [`idm`], [`social_force`], and the
//! likelihood in [`choice`]) are generic over [`num::Real`]. The engine and
//! the experiment layer run in `f64`; the aliases below name the concrete
//! types used there.

pub mod autopilot;
pub mod choice;
pub mod experiment;
pub mod geom;
pub mod idm;
pub mod microsim;
pub mod num;
pub mod scene;
pub mod social_force;
pub mod spatial;
pub mod tracking;

pub type Scalar = f64;
pub type Vec2 = geom::Vec2<Scalar>;
pub type Polygon = geom::Polygon<Scalar>;
pub type OrientedRect = geom::OrientedRect<Scalar>;
pub type IdmParams = idm::IdmParams<Scalar>;
pub type GapObservation = idm::GapObservation<Scalar>;
pub type SocialForceParams = social_force::SocialForceParams<Scalar>;

pub use idm::idm_acceleration;
pub use microsim::{AgentId, AgentKind, AgentState, SimEvent, SimEventKind, SimParams, World};
pub use scene::{load_scene, save_scene, signal_state, Scene, SceneError, SignalPhase, SignalPlan};
pub use social_force::social_force;
pub use spatial::SpatialGrid;
