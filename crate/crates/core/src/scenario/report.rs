//! JSON report of a scenario run.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;

use crate::client::{Artifact, BootSession, FailureKind, SessionState, Stage};
use crate::gateway::{GatewayMode, TimedEvent};
use crate::sim::MS;

use super::run::Simulation;
use super::spec::Expectation;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct SessionReport {
    pub index: usize,
    pub state: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<FailureKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub os_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub os_name: Option<String>,
    pub power_on_ms: f64,
    /// Simulated time from power-on to boot.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boot_time_ms: Option<f64>,
    pub boot_attempts: u32,
    pub auth_attempts: u32,
    pub artifacts: Vec<Artifact>,
    /// Artifacts match the digests and sizes held by the control plane.
    pub digests_verified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ip: Option<std::net::Ipv4Addr>,
    pub trace_events: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClientReport {
    pub name: String,
    pub mac: String,
    pub sessions: Vec<SessionReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GatewayReport {
    #[serde(flatten)]
    pub mode: GatewayMode,
    pub events: Vec<TimedEvent>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpectationResult {
    #[serde(flatten)]
    pub expected: Expectation,
    pub passed: bool,
    pub actual: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub end_time_ms: f64,
    pub gateway: GatewayReport,
    pub clients: Vec<ClientReport>,
    pub auth_log_entries: usize,
    pub cloud_restarts: u32,
    pub expectations: Vec<ExpectationResult>,
    /// True when every expectation held.
    pub passed: bool,
}

impl ScenarioReport {
    pub fn session(&self, client: &str, index: Option<usize>) -> Option<&SessionReport> {
        let c = self.clients.iter().find(|c| c.name == client)?;
        match index {
            Some(i) => c.sessions.get(i),
            None => c.sessions.last(),
        }
    }
}

fn session_report(
    sim: &Simulation,
    index: usize,
    s: &BootSession,
    trace_path: Option<PathBuf>,
    names: &BTreeMap<String, String>,
) -> SessionReport {
    let (stage, reason, detail) = match &s.state {
        SessionState::Failed { stage, reason, detail } => (Some(*stage), Some(*reason), Some(detail.clone())),
        _ => (None, None, None),
    };
    let (os_id, artifacts) = match &s.state {
        SessionState::Booted { os_id, artifacts } => (Some(os_id.clone()), artifacts.clone()),
        _ => (None, Vec::new()),
    };
    SessionReport {
        index,
        state: s.state.label(),
        stage,
        reason,
        detail,
        os_name: os_id.as_ref().and_then(|id| names.get(id).cloned()),
        os_id,
        power_on_ms: s.power_on_us as f64 / MS as f64,
        boot_time_ms: s.boot_time_us.map(|t| t as f64 / MS as f64),
        boot_attempts: s.boot_attempts,
        auth_attempts: s.auth_attempts,
        artifacts,
        digests_verified: sim.digests_match_store(&s.state),
        ip: s.ip_config.as_ref().map(|c| c.ip),
        trace_events: s.trace.len(),
        trace_path,
    }
}

fn check(e: &Expectation, s: Option<&SessionReport>) -> (bool, String) {
    let Some(s) = s else {
        return (false, "no such session".into());
    };
    let mut actual = s.state.to_string();
    if let Some(os) = &s.os_name {
        actual.push_str(&format!(" os={os}"));
    }
    if let (Some(stage), Some(reason)) = (s.stage, s.reason) {
        actual.push_str(&format!(" stage={stage:?} reason={reason:?}"));
    }
    let os_ok = e.os.as_ref().is_none_or(|want| {
        s.os_id.as_deref() == Some(want.as_str())
            || s.os_name.as_ref().is_some_and(|n| n.eq_ignore_ascii_case(want))
    });
    let passed = s.state.eq_ignore_ascii_case(&e.state)
        && os_ok
        && e.stage.is_none_or(|st| s.stage == Some(st))
        && e.reason.is_none_or(|r| s.reason == Some(r))
        && (s.state != "booted" || s.digests_verified);
    (passed, actual)
}

pub(super) fn build(sim: &Simulation, trace_paths: &BTreeMap<(String, usize), PathBuf>) -> ScenarioReport {
    let plane = sim.cloud().plane();
    let names: BTreeMap<String, String> = plane
        .map(|p| p.list_oses().into_iter().map(|o| (o.os_id, o.name)).collect())
        .unwrap_or_default();
    let clients: Vec<ClientReport> = sim
        .clients
        .iter()
        .filter_map(|(name, _)| {
            let node = sim.client(name)?;
            Some(ClientReport {
                name: name.clone(),
                mac: node.config().mac.to_string(),
                sessions: node
                    .sessions()
                    .iter()
                    .enumerate()
                    .map(|(i, s)| session_report(sim, i, s, trace_paths.get(&(name.clone(), i)).cloned(), &names))
                    .collect(),
            })
        })
        .collect();
    let mut report = ScenarioReport {
        schema_version: SCHEMA_VERSION,
        scenario: sim.spec.name.clone(),
        seed: sim.spec.seed,
        end_time_ms: sim.world.now() as f64 / MS as f64,
        gateway: GatewayReport {
            mode: sim.gateway.mode(),
            events: sim.gateway.events(),
        },
        clients,
        auth_log_entries: plane.map(|p| p.auth_log_len()).unwrap_or(0),
        cloud_restarts: sim.cloud().restarts,
        expectations: Vec::new(),
        passed: true,
    };
    report.expectations = sim
        .spec
        .expect
        .iter()
        .map(|e| {
            let (passed, actual) = check(e, report.session(&e.client, e.session));
            ExpectationResult {
                expected: e.clone(),
                passed,
                actual,
            }
        })
        .collect();
    report.passed = report.expectations.iter().all(|r| r.passed);
    report
}
