//! Boot-session state, configuration, and trace records.

use std::collections::{BTreeMap, VecDeque};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::codec::MacAddr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    PowerOn,
    Discovering,
    OfferSelected,
    FetchingBootloader,
    ExecutingScript,
    AwaitingCredentials,
    Authenticating,
    FetchingArtifacts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    NoOffer,
    TftpError,
    ScriptError,
    DnsError,
    HttpError,
    AuthRejected,
    DigestMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub url: String,
    pub size: u64,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SessionState {
    PowerOn,
    Discovering,
    OfferSelected,
    FetchingBootloader,
    ExecutingScript,
    AwaitingCredentials,
    Authenticating,
    FetchingArtifacts,
    Booted {
        os_id: String,
        artifacts: Vec<Artifact>,
    },
    Failed {
        stage: Stage,
        reason: FailureKind,
        detail: String,
    },
}

impl SessionState {
    pub fn from_stage(stage: Stage) -> Self {
        match stage {
            Stage::PowerOn => SessionState::PowerOn,
            Stage::Discovering => SessionState::Discovering,
            Stage::OfferSelected => SessionState::OfferSelected,
            Stage::FetchingBootloader => SessionState::FetchingBootloader,
            Stage::ExecutingScript => SessionState::ExecutingScript,
            Stage::AwaitingCredentials => SessionState::AwaitingCredentials,
            Stage::Authenticating => SessionState::Authenticating,
            Stage::FetchingArtifacts => SessionState::FetchingArtifacts,
        }
    }

    /// The stage this state belongs to; terminal states report where they ended.
    pub fn stage(&self) -> Stage {
        match self {
            SessionState::PowerOn => Stage::PowerOn,
            SessionState::Discovering => Stage::Discovering,
            SessionState::OfferSelected => Stage::OfferSelected,
            SessionState::FetchingBootloader => Stage::FetchingBootloader,
            SessionState::ExecutingScript => Stage::ExecutingScript,
            SessionState::AwaitingCredentials => Stage::AwaitingCredentials,
            SessionState::Authenticating => Stage::Authenticating,
            SessionState::FetchingArtifacts | SessionState::Booted { .. } => Stage::FetchingArtifacts,
            SessionState::Failed { stage, .. } => *stage,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, SessionState::Booted { .. } | SessionState::Failed { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            SessionState::PowerOn => "power_on",
            SessionState::Discovering => "discovering",
            SessionState::OfferSelected => "offer_selected",
            SessionState::FetchingBootloader => "fetching_bootloader",
            SessionState::ExecutingScript => "executing_script",
            SessionState::AwaitingCredentials => "awaiting_credentials",
            SessionState::Authenticating => "authenticating",
            SessionState::FetchingArtifacts => "fetching_artifacts",
            SessionState::Booted { .. } => "booted",
            SessionState::Failed { .. } => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IpConfig {
    pub ip: Ipv4Addr,
    pub netmask: Option<Ipv4Addr>,
    pub router: Option<Ipv4Addr>,
    pub dns: Vec<Ipv4Addr>,
    pub next_server: Ipv4Addr,
    pub boot_file: String,
    /// Server that granted the address (option 54).
    pub address_server: Ipv4Addr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Tx,
    Rx,
    State,
    Script,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Simulated milliseconds.
    pub time: f64,
    pub direction: Direction,
    pub protocol: String,
    pub summary: String,
}

/// Scripted credentials, consumed in order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CredentialSource {
    pending: VecDeque<(String, String)>,
}

impl CredentialSource {
    pub fn scripted(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        Self {
            pending: pairs.into_iter().collect(),
        }
    }

    pub fn next_pair(&mut self) -> Option<(String, String)> {
        self.pending.pop_front()
    }

    pub fn remaining(&self) -> usize {
        self.pending.len()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetryMode {
    /// The loaded bootloader re-runs DHCP and its embedded script.
    #[default]
    InPlace,
    /// The machine restarts from PXE, fetching the bootloader again.
    PowerCycle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    pub name: String,
    pub mac: MacAddr,
    /// `(username, password)` per login attempt, fresh for every power-on.
    pub credentials: Vec<(String, String)>,
    /// Answers for `prompt` and `choose`, keyed by variable name.
    pub prompts: BTreeMap<String, String>,
    pub power_on_ms: Vec<u64>,
    pub retry: RetryMode,
    /// Boot attempts per power-on before giving up on scripts that never boot.
    pub max_boot_attempts: u32,
    pub retry_delay_ms: u64,
    pub max_auth_attempts: u32,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            name: "client".into(),
            mac: MacAddr([0x52, 0x54, 0x00, 0x00, 0x00, 0x01]),
            credentials: Vec::new(),
            prompts: BTreeMap::new(),
            power_on_ms: vec![0],
            retry: RetryMode::InPlace,
            max_boot_attempts: 4,
            retry_delay_ms: 1000,
            max_auth_attempts: 3,
        }
    }
}

/// One power-on of a diskless client.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootSession {
    pub mac: MacAddr,
    pub power_on_us: u64,
    pub state: SessionState,
    pub ip_config: Option<IpConfig>,
    /// Simulated microseconds from power-on to `Booted`.
    pub boot_time_us: Option<u64>,
    pub boot_attempts: u32,
    pub auth_attempts: u32,
    pub trace: Vec<TraceEvent>,
    /// Every state entered, in order.
    pub history: Vec<SessionState>,
}

impl BootSession {
    pub fn new(mac: MacAddr, power_on_us: u64) -> Self {
        Self {
            mac,
            power_on_us,
            state: SessionState::PowerOn,
            ip_config: None,
            boot_time_us: None,
            boot_attempts: 0,
            auth_attempts: 0,
            trace: Vec::new(),
            history: vec![SessionState::PowerOn],
        }
    }

    /// The trace as JSON lines.
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for ev in &self.trace {
            out.push_str(&serde_json::to_string(ev).expect("trace serializes"));
            out.push('\n');
        }
        out
    }

    pub fn booted_os(&self) -> Option<&str> {
        match &self.state {
            SessionState::Booted { os_id, .. } => Some(os_id),
            _ => None,
        }
    }
}
