use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectivityKind {
    Wifi { ssid: String, passphrase: String },
    Cellular { apn: String, credentials: String },
    Wired,
}

impl ConnectivityKind {
    pub fn label(&self) -> String {
        match self {
            ConnectivityKind::Wifi { ssid, .. } => format!("Wi-Fi network {ssid}"),
            ConnectivityKind::Cellular { apn, .. } => format!("cellular APN {apn}"),
            ConnectivityKind::Wired => "wired uplink".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectivityStatus {
    Unconfigured,
    Connecting,
    Connected,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectivityProfile {
    pub kind: ConnectivityKind,
    pub status: ConnectivityStatus,
}

impl ConnectivityProfile {
    pub fn new(kind: ConnectivityKind) -> Self {
        Self {
            kind,
            status: ConnectivityStatus::Unconfigured,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AttachError {
    #[error("no upstream network matches the profile")]
    NoSuchNetwork,
    #[error("upstream network rejected the credentials")]
    AuthFailure,
}

/// An upstream link the gateway can bind to (a radio, a modem, a cable, or
/// a simulated segment).
pub trait UpstreamAttach {
    fn attach(&mut self, kind: &ConnectivityKind) -> Result<(), AttachError>;
}

/// Binds the upstream interface per `profile` and records the outcome in
/// its status.
pub fn attach_upstream(
    profile: &mut ConnectivityProfile,
    net: &mut impl UpstreamAttach,
) -> Result<ConnectivityStatus, AttachError> {
    profile.status = ConnectivityStatus::Connecting;
    match net.attach(&profile.kind) {
        Ok(()) => {
            profile.status = ConnectivityStatus::Connected;
            Ok(profile.status)
        }
        Err(e) => {
            profile.status = ConnectivityStatus::Failed;
            Err(e)
        }
    }
}
