//! Simulated diskless PXE/iPXE client.

pub mod node;
pub mod offer;
pub mod session;

pub use node::{summarize, ClientNode};
pub use offer::{select_offer, OfferError};
pub use session::{
    Artifact, BootSession, ClientConfig, CredentialSource, Direction, FailureKind, IpConfig,
    RetryMode, SessionState, Stage, TraceEvent,
};
