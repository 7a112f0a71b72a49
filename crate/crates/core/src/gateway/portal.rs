//! Connectivity-setup portal rendered as iPXE menus and prompts.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::script::{Script, Statement};

use super::config::GatewayConfig;
use super::connectivity::{ConnectivityKind, ConnectivityProfile, ConnectivityStatus};

pub const WIFI_PATH: &str = "/portal/wifi";
pub const CELLULAR_PATH: &str = "/portal/cellular";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PortalError {
    #[error("missing field `{0}`")]
    MissingField(&'static str),
}

/// What a portal request produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortalOutcome {
    pub script: Script,
    /// Set when the request submitted a new upstream profile to attach.
    pub attach: Option<ConnectivityProfile>,
}

/// Strips characters that cannot appear on a single script line.
fn one_line(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_control() { ' ' } else { c })
        .collect::<String>()
        .trim()
        .to_string()
}

fn setup_form(cfg: &GatewayConfig, error: Option<&PortalError>) -> Script {
    let base = cfg.portal_base();
    let mut stmts = vec![Statement::Echo(
        "No upstream network is configured on this boot gateway".into(),
    )];
    if let Some(err) = error {
        stmts.push(Statement::Echo(format!("Error: {err}")));
    }
    stmts.extend([
        Statement::MenuStart("Connectivity setup".into()),
        Statement::MenuItem {
            key: "wifi".into(),
            label: "Wi-Fi network".into(),
        },
        Statement::MenuItem {
            key: "cellular".into(),
            label: "Cellular modem".into(),
        },
        Statement::Choose("conn".into()),
        Statement::Prompt {
            var: "network".into(),
            message: "SSID (Wi-Fi) or APN (cellular)".into(),
            masked: false,
        },
        Statement::Prompt {
            var: "secret".into(),
            message: "Password".into(),
            masked: true,
        },
        Statement::Chain(format!(
            "{base}/portal/${{conn}}?ssid=${{network}}&apn=${{network}}&pass=${{secret}}"
        )),
    ]);
    Script::new(stmts).expect("portal form is a valid script")
}

fn connecting(kind: &ConnectivityKind) -> Script {
    Script::new(vec![
        Statement::Echo(format!("Connecting to {}", one_line(&kind.label()))),
        Statement::Echo("Network boot restarts once the upstream link is up".into()),
    ])
    .expect("portal reply is a valid script")
}

fn field<'a>(
    fields: &'a BTreeMap<String, String>,
    name: &'static str,
    allow_empty: bool,
) -> Result<&'a str, PortalError> {
    match fields.get(name) {
        Some(v) if allow_empty || !v.is_empty() => Ok(v),
        _ => Err(PortalError::MissingField(name)),
    }
}

fn parse_submission(
    path: &str,
    fields: &BTreeMap<String, String>,
) -> Option<Result<ConnectivityKind, PortalError>> {
    match path {
        WIFI_PATH => Some((|| {
            Ok(ConnectivityKind::Wifi {
                ssid: field(fields, "ssid", false)?.to_string(),
                passphrase: field(fields, "pass", true)?.to_string(),
            })
        })()),
        CELLULAR_PATH => Some((|| {
            Ok(ConnectivityKind::Cellular {
                apn: field(fields, "apn", false)?.to_string(),
                credentials: fields.get("pass").cloned().unwrap_or_default(),
            })
        })()),
        _ => None,
    }
}

/// Handles one portal request. Submissions store a profile in `profile`
/// with status `Connecting` and ask the caller to attach it; every other
/// path renders the setup form.
pub fn portal_request(
    path: &str,
    form_fields: &BTreeMap<String, String>,
    cfg: &GatewayConfig,
    profile: &mut Option<ConnectivityProfile>,
) -> PortalOutcome {
    match parse_submission(path, form_fields) {
        Some(Ok(kind)) => {
            let stored = ConnectivityProfile {
                kind,
                status: ConnectivityStatus::Connecting,
            };
            *profile = Some(stored.clone());
            PortalOutcome {
                script: connecting(&stored.kind),
                attach: Some(stored),
            }
        }
        Some(Err(err)) => PortalOutcome {
            script: setup_form(cfg, Some(&err)),
            attach: None,
        },
        None => PortalOutcome {
            script: setup_form(cfg, None),
            attach: None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::script::{parse_script, render_script};

    fn fields(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn root_renders_setup_form() {
        let cfg = GatewayConfig::default();
        let mut profile = None;
        let out = portal_request("/", &BTreeMap::new(), &cfg, &mut profile);
        assert!(out.attach.is_none());
        let stmts = out.script.statements();
        assert!(stmts.iter().any(|s| matches!(s, Statement::MenuItem { key, .. } if key == "wifi")));
        assert!(stmts.iter().any(|s| matches!(s, Statement::MenuItem { key, .. } if key == "cellular")));
        assert!(stmts.iter().any(|s| matches!(s, Statement::Prompt { message, .. } if message.contains("SSID"))));
        assert!(stmts.iter().any(|s| matches!(s, Statement::Prompt { masked: true, .. })));
        let text = render_script(&out.script);
        assert_eq!(parse_script(&text).unwrap(), out.script);
    }

    #[test]
    fn wifi_submission_stores_profile() {
        let cfg = GatewayConfig::default();
        let mut profile = None;
        let out = portal_request(
            WIFI_PATH,
            &fields(&[("ssid", "lab"), ("pass", "secret")]),
            &cfg,
            &mut profile,
        );
        let stored = profile.unwrap();
        assert_eq!(stored.status, ConnectivityStatus::Connecting);
        assert_eq!(
            stored.kind,
            ConnectivityKind::Wifi {
                ssid: "lab".into(),
                passphrase: "secret".into()
            }
        );
        assert_eq!(out.attach, Some(stored));
        let text = render_script(&out.script);
        assert!(text.contains("restarts"), "{text}");
    }

    #[test]
    fn empty_ssid_reprompts() {
        let cfg = GatewayConfig::default();
        let mut profile = None;
        let out = portal_request(WIFI_PATH, &fields(&[("ssid", "")]), &cfg, &mut profile);
        assert!(profile.is_none());
        assert!(out.attach.is_none());
        assert!(out
            .script
            .statements()
            .contains(&Statement::Echo("Error: missing field `ssid`".into())));
        assert!(out
            .script
            .statements()
            .iter()
            .any(|s| matches!(s, Statement::Prompt { .. })));
    }

    #[test]
    fn hostile_ssid_still_renders() {
        let cfg = GatewayConfig::default();
        let mut profile = None;
        let out = portal_request(
            WIFI_PATH,
            &fields(&[("ssid", "evil\nboot"), ("pass", "")]),
            &cfg,
            &mut profile,
        );
        let text = render_script(&out.script);
        assert_eq!(parse_script(&text).unwrap(), out.script);
    }

    #[test]
    fn cellular_submission() {
        let cfg = GatewayConfig::default();
        let mut profile = None;
        portal_request(
            CELLULAR_PATH,
            &fields(&[("apn", "internet"), ("pass", "")]),
            &cfg,
            &mut profile,
        );
        assert!(matches!(
            profile.unwrap().kind,
            ConnectivityKind::Cellular { ref apn, .. } if apn == "internet"
        ));
    }
}
