//! Deterministic discrete-event network harness.
//!
//! Time is simulated (microsecond ticks), every random choice comes from a
//! seeded generator, and all ordered state uses ordered collections, so the
//! same topology, seed and inputs replay identically.

pub mod clock;
pub mod nat;
pub mod net;
pub mod nodes;
pub mod world;

pub use clock::{Clock, EventCapExceeded, SimTime, MS, SEC};
pub use nat::NatBoundary;
pub use net::{Body, HttpExchange, Iface, IfaceId, LinkParams, NodeId, Packet, Segment, SegmentId, SegmentKind};
pub use nodes::{CloudNode, GatewayNode, RogueMode, RogueNode, RouterNode, UpstreamPlan};
pub use world::{CaptureRecord, CorruptHttpBody, Ctx, NetError, Node, World};
