//! Scenario files: topology, gateway and cloud seed data, clients, faults,
//! timed actions and expected outcomes.

use std::collections::BTreeSet;
use std::net::Ipv4Addr;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::client::{ClientConfig, FailureKind, Stage};
use crate::cloud::credential::KdfParams;
use crate::gateway::GatewayConfig;
use crate::sim::net::LinkParams;
use crate::sim::nodes::{RogueMode, UpstreamPlan};

use super::ScenarioError;

/// What sits on the far side of the gateway's upstream interface.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum UplinkSpec {
    Wired,
    Wifi { ssid: String, passphrase: String },
    Cellular { apn: String },
    /// No upstream network at all.
    Absent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySpec {
    pub lan: LinkParams,
    pub uplink: LinkParams,
    pub internet: LinkParams,
    pub upstream: UplinkSpec,
    pub plan: UpstreamPlan,
}

impl Default for TopologySpec {
    fn default() -> Self {
        Self {
            lan: LinkParams::default(),
            uplink: LinkParams::default(),
            internet: LinkParams::default(),
            upstream: UplinkSpec::Wired,
            plan: UpstreamPlan::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSeed {
    pub filename: String,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OsSeed {
    pub name: String,
    /// Defaults to `kernel` for the first file, `initrd` for the rest, then `boot`.
    #[serde(default)]
    pub boot_template: Option<String>,
    #[serde(default)]
    pub kernel_params: String,
    pub files: Vec<FileSeed>,
}

impl OsSeed {
    pub fn template(&self) -> String {
        if let Some(t) = &self.boot_template {
            return t.clone();
        }
        let mut text = String::from("#!ipxe\n");
        for (i, f) in self.files.iter().enumerate() {
            let cmd = if i == 0 { "kernel" } else { "initrd" };
            text.push_str(&format!("{cmd} {{{{base_url}}}}/files/{{{{os_id}}}}/{}\n", f.filename));
        }
        text.push_str("boot\n");
        text
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSeed {
    pub username: String,
    pub password: String,
    /// OS name as declared under `cloud.oses`.
    pub os: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CloudSeed {
    /// Defaults to `http://<gateway.cloud_domain>`.
    pub base_url: Option<String>,
    pub admin_token: Option<String>,
    pub kdf: KdfParams,
    /// Wall-clock milliseconds that simulated time zero maps to.
    pub epoch_ms: u64,
    pub oses: Vec<OsSeed>,
    pub users: Vec<UserSeed>,
}

impl Default for CloudSeed {
    fn default() -> Self {
        Self {
            base_url: None,
            admin_token: Some("sim-admin-token".into()),
            kdf: KdfParams::default(),
            epoch_ms: 1_700_000_000_000,
            oses: Vec::new(),
            users: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentName {
    Lan,
    Uplink,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RogueSpec {
    pub segment: SegmentName,
    pub ip: Ipv4Addr,
    pub mode: RogueMode,
    #[serde(default = "default_rogue_file")]
    pub boot_file: String,
}

fn default_rogue_file() -> String {
    "evil.ipxe".into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "fault", deny_unknown_fields)]
pub enum FaultSpec {
    /// Flips one byte at `offset` in the next `count` HTTP bodies for `path`.
    CorruptHttpBody { path: String, offset: usize, count: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "action")]
pub enum Action {
    DeactivateUser { username: String },
    StopCloud,
    StartCloud,
    /// Stop, then reopen the control plane from its store.
    RestartCloud,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedAction {
    pub at_ms: u64,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub client: String,
    /// Zero-based power-on index; the last session when unset.
    #[serde(default)]
    pub session: Option<usize>,
    /// Terminal state label, e.g. `booted` or `failed`.
    pub state: String,
    /// OS name or id the client must have booted.
    #[serde(default)]
    pub os: Option<String>,
    #[serde(default)]
    pub stage: Option<Stage>,
    #[serde(default)]
    pub reason: Option<FailureKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub topology: TopologySpec,
    #[serde(default)]
    pub gateway: GatewayConfig,
    #[serde(default)]
    pub cloud: CloudSeed,
    pub clients: Vec<ClientConfig>,
    #[serde(default)]
    pub rogues: Vec<RogueSpec>,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    #[serde(default)]
    pub actions: Vec<TimedAction>,
    #[serde(default)]
    pub expect: Vec<Expectation>,
}

const BUNDLED: &[(&str, &str)] = &[
    ("paper-experiment", include_str!("../../scenarios/paper-experiment.json")),
    ("wrong-password", include_str!("../../scenarios/wrong-password.json")),
    ("offboarding", include_str!("../../scenarios/offboarding.json")),
    ("mode-switch", include_str!("../../scenarios/mode-switch.json")),
    ("poisoning", include_str!("../../scenarios/poisoning.json")),
    ("restart", include_str!("../../scenarios/restart.json")),
];

/// Names of the scenarios compiled into the binary.
pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let mut spec: ScenarioSpec =
            serde_json::from_str(text).map_err(|e| ScenarioError::Invalid(format!("line {}: {e}", e.line())))?;
        spec.gateway
            .load_bootloader(None)
            .map_err(|e| ScenarioError::Invalid(format!("gateway: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn bundled(name: &str) -> Option<Self> {
        let (_, text) = BUNDLED.iter().find(|(n, _)| *n == name)?;
        Some(Self::from_json(text).expect("bundled scenarios are valid"))
    }

    /// Loads a bundled scenario by name, or a scenario file by path.
    pub fn load(name_or_path: &str) -> Result<Self, ScenarioError> {
        if let Some(spec) = Self::bundled(name_or_path) {
            return Ok(spec);
        }
        let path = Path::new(name_or_path);
        let text = std::fs::read_to_string(path).map_err(|e| {
            ScenarioError::Invalid(format!(
                "`{name_or_path}` is neither a bundled scenario ({}) nor a readable file: {e}",
                bundled_names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        let mut spec: ScenarioSpec =
            serde_json::from_str(&text).map_err(|e| ScenarioError::Invalid(format!("line {}: {e}", e.line())))?;
        spec.gateway
            .load_bootloader(path.parent())
            .map_err(|e| ScenarioError::Invalid(format!("gateway: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn base_url(&self) -> String {
        self.cloud
            .base_url
            .clone()
            .unwrap_or_else(|| format!("http://{}", self.gateway.cloud_domain))
    }

    /// Checks that every reference in the scenario resolves.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        self.gateway
            .validate()
            .map_err(|e| ScenarioError::Invalid(format!("gateway: {e}")))?;
        let base = url::Url::parse(&self.base_url())
            .map_err(|e| ScenarioError::Invalid(format!("cloud.base_url: {e}")))?;
        if base.host_str() != Some(self.gateway.cloud_domain.as_str()) {
            return bad(format!(
                "cloud.base_url host must be the gateway cloud_domain `{}`",
                self.gateway.cloud_domain
            ));
        }
        let mut os_names = BTreeSet::new();
        for os in &self.cloud.oses {
            if !os_names.insert(os.name.to_lowercase()) {
                return bad(format!("OS `{}` declared twice", os.name));
            }
            if os.files.is_empty() {
                return bad(format!("OS `{}` has no files", os.name));
            }
            if let Some(f) = os.files.iter().find(|f| f.size == 0) {
                return bad(format!("OS `{}` file `{}` is empty", os.name, f.filename));
            }
        }
        let mut users = BTreeSet::new();
        for u in &self.cloud.users {
            if !users.insert(u.username.as_str()) {
                return bad(format!("user `{}` declared twice", u.username));
            }
            if !os_names.contains(&u.os.to_lowercase()) {
                return bad(format!("user `{}` references undefined OS `{}`", u.username, u.os));
            }
        }
        let mut clients = BTreeSet::new();
        let mut macs = BTreeSet::new();
        for c in &self.clients {
            if !clients.insert(c.name.as_str()) {
                return bad(format!("client `{}` declared twice", c.name));
            }
            if !macs.insert(c.mac) {
                return bad(format!("client `{}` reuses MAC {}", c.name, c.mac));
            }
            if c.power_on_ms.is_empty() {
                return bad(format!("client `{}` never powers on", c.name));
            }
            if let Some((u, _)) = c.credentials.iter().find(|(u, _)| !users.contains(u.as_str())) {
                return bad(format!("client `{}` logs in as undefined user `{u}`", c.name));
            }
        }
        for a in &self.actions {
            if let Action::DeactivateUser { username } = &a.action {
                if !users.contains(username.as_str()) {
                    return bad(format!("action at {} ms references undefined user `{username}`", a.at_ms));
                }
            }
        }
        for e in &self.expect {
            let Some(client) = self.clients.iter().find(|c| c.name == e.client) else {
                return bad(format!("expectation names undefined client `{}`", e.client));
            };
            if let Some(i) = e.session {
                if i >= client.power_on_ms.len() {
                    return bad(format!("client `{}` has no session {i}", e.client));
                }
            }
            if let Some(os) = &e.os {
                if !os_names.contains(&os.to_lowercase()) && !self.cloud.oses.iter().any(|o| crate::cloud::slug(&o.name) == *os) {
                    return bad(format!("expectation for `{}` names undefined OS `{os}`", e.client));
                }
            }
        }
        if self.topology.upstream == UplinkSpec::Absent
            && self.rogues.iter().any(|r| r.segment == SegmentName::Uplink)
        {
            return bad("rogue on the uplink requires an upstream network".into());
        }
        Ok(())
    }
}
