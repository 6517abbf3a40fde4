//! Edge-cloud assistant runtime: urgency detection and intent routing,
//! fixture-backed expert agents, streaming model backends, and a response
//! fusion engine that splices a fast edge answer into a cloud-informed
//! continuation. A deterministic simulator replays scripted workloads on a
//! virtual clock.

pub mod agents;
pub mod backends;
pub mod classify;
pub mod clock;
pub mod fusion;
pub mod pipeline;
pub mod sim;
pub mod template;
pub mod types;

pub use types::{BackendKind, EventKind, FrameRef, Query, RouteLabel, Timestamp, TokenEvent, Track};
