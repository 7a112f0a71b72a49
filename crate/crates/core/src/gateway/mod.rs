//! The boot gateway: probes the upstream for DHCP, then serves either
//! standalone DHCP (with captive DNS and the connectivity portal) or
//! ProxyDHCP, plus the chainloading bootloader over TFTP.
//!
//! [`Gateway`] holds the mutable state behind one lock; every handler takes
//! `&self` so live listeners and the simulator share the same code.

pub mod bootloader;
pub mod config;
pub mod connectivity;
pub mod dhcp;
pub mod dns;
pub mod lease;
pub mod portal;
pub mod probe;
pub mod tftp;

use std::collections::BTreeMap;
use std::net::Ipv4Addr;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::Serialize;

use crate::codec::{self, dhcp::MessageType, DhcpMessage, MacAddr, TftpPacket};
use crate::http::{HttpRequest, HttpResponse};
use crate::script::{render_script, MEDIA_TYPE};

pub use config::{ConfigError, GatewayConfig, Ports};
pub use connectivity::{
    attach_upstream, AttachError, ConnectivityKind, ConnectivityProfile, ConnectivityStatus,
    UpstreamAttach,
};
pub use dhcp::{carries_boot_steering, handle_dhcp_proxy, handle_dhcp_standalone, DhcpServeError};
pub use dns::answer_dns;
pub use lease::{Lease, LeaseTable};
pub use portal::{portal_request, PortalError, PortalOutcome};
pub use probe::{probe_upstream, ProbeLink, ProbeStep, UpstreamProbe};
pub use tftp::{serve_tftp, start_transfer, TftpTransfer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum GatewayMode {
    Standalone,
    Proxy { upstream_server: Ipv4Addr },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "event")]
pub enum GatewayEvent {
    ModeChanged { mode: GatewayMode },
    PoolExhausted { mac: String },
    ProfileStored { label: String },
    UpstreamAttached { label: String },
    AttachFailed { label: String, reason: String },
    /// A boot-steering reply from upstream was kept off the client side.
    SteeringBlocked { server: Ipv4Addr },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TimedEvent {
    pub at_ms: u64,
    #[serde(flatten)]
    pub event: GatewayEvent,
}

#[derive(Debug)]
struct State {
    mode: GatewayMode,
    leases: LeaseTable,
    profile: Option<ConnectivityProfile>,
    upstream_connected: bool,
    /// Bumped on every attach so stale probe results are discarded.
    attach_epoch: u64,
    transfers: BTreeMap<(Ipv4Addr, u16), TftpTransfer>,
    events: Vec<TimedEvent>,
}

pub struct Gateway {
    cfg: GatewayConfig,
    blob: Arc<[u8]>,
    state: Mutex<State>,
}

impl Gateway {
    pub fn new(cfg: GatewayConfig) -> Self {
        let blob: Arc<[u8]> = cfg.bootloader_blob.clone().into();
        let profile = cfg.upstream.clone().map(ConnectivityProfile::new);
        Self {
            state: Mutex::new(State {
                mode: GatewayMode::Standalone,
                leases: LeaseTable::new(),
                profile,
                upstream_connected: cfg.upstream_connected,
                attach_epoch: 0,
                transfers: BTreeMap::new(),
                events: Vec::new(),
            }),
            blob,
            cfg,
        }
    }

    fn state(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.cfg
    }

    pub fn bootloader(&self) -> &[u8] {
        &self.blob
    }

    pub fn mode(&self) -> GatewayMode {
        self.state().mode
    }

    pub fn profile(&self) -> Option<ConnectivityProfile> {
        self.state().profile.clone()
    }

    pub fn upstream_connected(&self) -> bool {
        self.state().upstream_connected
    }

    pub fn events(&self) -> Vec<TimedEvent> {
        self.state().events.clone()
    }

    pub fn leases(&self) -> LeaseTable {
        self.state().leases.clone()
    }

    /// Captive DNS is active whenever the gateway is not proxying.
    pub fn captive_dns_active(&self) -> bool {
        self.mode() == GatewayMode::Standalone
    }

    fn push_event(state: &mut State, at_ms: u64, event: GatewayEvent) {
        tracing::info!(at_ms, ?event, "gateway event");
        state.events.push(TimedEvent { at_ms, event });
    }

    /// Handles a decoded DHCP request according to the current mode.
    pub fn handle_dhcp_msg(&self, msg: &DhcpMessage, now_ms: u64) -> Option<DhcpMessage> {
        let mut state = self.state();
        match state.mode {
            GatewayMode::Standalone => {
                match handle_dhcp_standalone(msg, &mut state.leases, &self.cfg, now_ms) {
                    Ok(reply) => reply,
                    Err(DhcpServeError::PoolExhausted) => {
                        let mac = msg.client_mac.to_string();
                        Self::push_event(&mut state, now_ms, GatewayEvent::PoolExhausted { mac });
                        None
                    }
                    Err(DhcpServeError::NotPxeClient) => None,
                }
            }
            GatewayMode::Proxy { .. } => handle_dhcp_proxy(msg, &self.cfg).ok().flatten(),
        }
    }

    pub fn handle_dhcp(&self, raw: &[u8], now_ms: u64) -> Option<Vec<u8>> {
        let msg = match codec::decode_dhcp(raw) {
            Ok(m) => m,
            Err(e) => {
                tracing::debug!(error = %e, "dropping undecodable DHCP packet");
                return None;
            }
        };
        let reply = self.handle_dhcp_msg(&msg, now_ms)?;
        codec::encode_dhcp(&reply).ok()
    }

    /// Handles one TFTP packet from `peer`.
    pub fn handle_tftp_packet(&self, peer: (Ipv4Addr, u16), pkt: &TftpPacket) -> Option<TftpPacket> {
        let mut state = self.state();
        match pkt {
            TftpPacket::ReadRequest { .. } => {
                match start_transfer(pkt, &self.cfg.boot_filename, self.blob.clone()) {
                    Ok((transfer, first)) => {
                        state.transfers.insert(peer, transfer);
                        Some(first)
                    }
                    Err(err) => {
                        state.transfers.remove(&peer);
                        Some(err)
                    }
                }
            }
            TftpPacket::Ack { block } => {
                let transfer = state.transfers.get_mut(&peer)?;
                let next = transfer.on_ack(*block);
                if transfer.is_finished() {
                    state.transfers.remove(&peer);
                }
                next
            }
            TftpPacket::Error { .. } => {
                state.transfers.remove(&peer);
                None
            }
            _ => Some(TftpPacket::error(
                codec::tftp::ErrorCode::IllegalOperation,
                "unexpected packet",
            )),
        }
    }

    pub fn handle_tftp(&self, peer: (Ipv4Addr, u16), raw: &[u8]) -> Option<Vec<u8>> {
        let reply = match codec::decode_tftp(raw) {
            Ok(pkt) => self.handle_tftp_packet(peer, &pkt)?,
            Err(_) => TftpPacket::error(codec::tftp::ErrorCode::IllegalOperation, "malformed packet"),
        };
        codec::encode_tftp(&reply).ok()
    }

    pub fn active_transfers(&self) -> usize {
        self.state().transfers.len()
    }

    pub fn handle_dns(&self, raw: &[u8]) -> Option<Vec<u8>> {
        let query = codec::decode_dns_query(raw).ok()?;
        codec::encode_dns_answer(&answer_dns(&query, &self.cfg)).ok()
    }

    /// Serves the connectivity portal. A returned profile should be passed
    /// to [`Gateway::attach`] by the transport that owns the upstream link.
    pub fn handle_http(
        &self,
        req: &HttpRequest,
        now_ms: u64,
    ) -> (HttpResponse, Option<ConnectivityProfile>) {
        let fields: BTreeMap<String, String> = req.params().into_iter().collect();
        let mut state = self.state();
        let outcome = portal_request(&req.path, &fields, &self.cfg, &mut state.profile);
        if let Some(p) = &outcome.attach {
            Self::push_event(
                &mut state,
                now_ms,
                GatewayEvent::ProfileStored {
                    label: p.kind.label(),
                },
            );
        }
        let body = render_script(&outcome.script);
        (HttpResponse::text(200, body).with_header("content-type", MEDIA_TYPE), outcome.attach)
    }

    /// Attaches the stored profile over `net`. On success the gateway stays
    /// in standalone mode until a fresh probe sees an upstream OFFER; the
    /// returned epoch must accompany that probe's result.
    pub fn attach(&self, net: &mut impl UpstreamAttach, now_ms: u64) -> Result<u64, AttachError> {
        let mut state = self.state();
        let Some(mut profile) = state.profile.clone() else {
            return Err(AttachError::NoSuchNetwork);
        };
        state.attach_epoch += 1;
        state.mode = GatewayMode::Standalone;
        let result = attach_upstream(&mut profile, net);
        let label = profile.kind.label();
        state.upstream_connected = result.is_ok();
        state.profile = Some(profile);
        match result {
            Ok(_) => {
                Self::push_event(&mut state, now_ms, GatewayEvent::UpstreamAttached { label });
                Ok(state.attach_epoch)
            }
            Err(e) => {
                let reason = e.to_string();
                Self::push_event(&mut state, now_ms, GatewayEvent::AttachFailed { label, reason });
                Err(e)
            }
        }
    }

    pub fn attach_epoch(&self) -> u64 {
        self.state().attach_epoch
    }

    /// Starts a probe, returning it with the epoch its result belongs to.
    /// `None` when no upstream link is up.
    pub fn begin_probe(&self, mac: MacAddr, xid: u32) -> Option<(UpstreamProbe, u64)> {
        let state = self.state();
        state
            .upstream_connected
            .then(|| (UpstreamProbe::new(&self.cfg, mac, xid), state.attach_epoch))
    }

    /// Applies a probe result unless a newer attach superseded it.
    pub fn finish_probe(&self, epoch: u64, mode: GatewayMode, now_ms: u64) {
        let mut state = self.state();
        if epoch != state.attach_epoch {
            return;
        }
        let mode = if state.upstream_connected {
            mode
        } else {
            GatewayMode::Standalone
        };
        if state.mode != mode {
            state.mode = mode;
            Self::push_event(&mut state, now_ms, GatewayEvent::ModeChanged { mode });
        }
    }

    /// Bridge filter between the upstream link and the client side. While
    /// proxying, DHCP replies from upstream that try to steer the boot are
    /// dropped so boot steering only ever comes from this gateway.
    pub fn bridge_admits_from_upstream(&self, dhcp_reply: &[u8], now_ms: u64) -> bool {
        let Ok(msg) = codec::decode_dhcp(dhcp_reply) else {
            return true;
        };
        if msg.message_type() == Some(MessageType::Discover) || !carries_boot_steering(&msg) {
            return true;
        }
        let server = msg
            .option_ip(codec::dhcp::OPT_SERVER_ID)
            .unwrap_or(msg.server_ip);
        let mut state = self.state();
        Self::push_event(&mut state, now_ms, GatewayEvent::SteeringBlocked { server });
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::dhcp::{Op, OPT_VENDOR_CLASS};

    struct Link(Result<(), AttachError>);

    impl UpstreamAttach for Link {
        fn attach(&mut self, _kind: &ConnectivityKind) -> Result<(), AttachError> {
            self.0.clone()
        }
    }

    fn pxe_discover() -> DhcpMessage {
        let mut m = DhcpMessage::new(
            Op::BootRequest,
            1,
            MacAddr([0x52, 0x54, 0, 0, 0, 1]),
            MessageType::Discover,
        );
        m.set_option(OPT_VENDOR_CLASS, "PXEClient").unwrap();
        m
    }

    fn with_wifi_profile(gw: &Gateway) {
        let req = HttpRequest::get("/portal/wifi?ssid=lab&pass=secret");
        let (_, attach) = gw.handle_http(&req, 0);
        assert!(attach.is_some());
    }

    #[test]
    fn starts_standalone_and_serves_leases() {
        let gw = Gateway::new(GatewayConfig::default());
        assert_eq!(gw.mode(), GatewayMode::Standalone);
        assert!(gw.captive_dns_active());
        let offer = gw.handle_dhcp_msg(&pxe_discover(), 0).unwrap();
        assert_ne!(offer.your_ip, Ipv4Addr::UNSPECIFIED);
    }

    #[test]
    fn successful_attach_then_probe_switches_to_proxy() {
        let gw = Gateway::new(GatewayConfig::default());
        with_wifi_profile(&gw);
        let epoch = gw.attach(&mut Link(Ok(())), 5).unwrap();
        assert_eq!(gw.profile().unwrap().status, ConnectivityStatus::Connected);
        // Still captive until the probe reports an upstream server.
        assert_eq!(gw.mode(), GatewayMode::Standalone);
        let upstream = GatewayMode::Proxy {
            upstream_server: Ipv4Addr::new(10, 0, 2, 1),
        };
        gw.finish_probe(epoch, upstream, 10);
        assert_eq!(gw.mode(), upstream);
        let offer = gw.handle_dhcp_msg(&pxe_discover(), 20).unwrap();
        assert_eq!(offer.your_ip, Ipv4Addr::UNSPECIFIED);
    }

    #[test]
    fn wrong_passphrase_fails_attach() {
        let gw = Gateway::new(GatewayConfig::default());
        with_wifi_profile(&gw);
        assert_eq!(
            gw.attach(&mut Link(Err(AttachError::AuthFailure)), 0),
            Err(AttachError::AuthFailure)
        );
        assert_eq!(gw.profile().unwrap().status, ConnectivityStatus::Failed);
        assert!(!gw.upstream_connected());
        assert!(gw.begin_probe(MacAddr::default(), 1).is_none());
    }

    #[test]
    fn stale_probe_result_is_ignored() {
        let gw = Gateway::new(GatewayConfig::default());
        with_wifi_profile(&gw);
        let first = gw.attach(&mut Link(Ok(())), 0).unwrap();
        let _second = gw.attach(&mut Link(Ok(())), 1).unwrap();
        gw.finish_probe(
            first,
            GatewayMode::Proxy {
                upstream_server: Ipv4Addr::new(10, 0, 2, 1),
            },
            2,
        );
        assert_eq!(gw.mode(), GatewayMode::Standalone);
    }

    #[test]
    fn wired_profile_from_config_attaches() {
        let gw = Gateway::new(GatewayConfig {
            upstream: Some(ConnectivityKind::Wired),
            ..GatewayConfig::default()
        });
        assert!(gw.attach(&mut Link(Ok(())), 0).is_ok());
        assert_eq!(gw.profile().unwrap().status, ConnectivityStatus::Connected);
    }

    #[test]
    fn pool_exhaustion_is_logged() {
        let gw = Gateway::new(GatewayConfig {
            lease_pool_end: Ipv4Addr::new(192, 168, 77, 100),
            ..GatewayConfig::default()
        });
        assert!(gw.handle_dhcp_msg(&pxe_discover(), 0).is_some());
        let mut other = pxe_discover();
        other.client_mac = MacAddr([0x52, 0x54, 0, 0, 0, 2]);
        assert!(gw.handle_dhcp_msg(&other, 0).is_none());
        assert!(matches!(
            gw.events().last().unwrap().event,
            GatewayEvent::PoolExhausted { .. }
        ));
    }

    #[test]
    fn tftp_transfer_lifecycle() {
        let gw = Gateway::new(GatewayConfig::default());
        let peer = (Ipv4Addr::new(192, 168, 77, 100), 2000);
        let rrq = TftpPacket::ReadRequest {
            filename: "boot.ipxe".into(),
            mode: "octet".into(),
            options: vec![("blksize".into(), "1428".into())],
        };
        assert!(matches!(
            gw.handle_tftp_packet(peer, &rrq),
            Some(TftpPacket::OptionAck { .. })
        ));
        let mut received = Vec::new();
        let mut ack = 0;
        while let Some(TftpPacket::Data { block, payload }) =
            gw.handle_tftp_packet(peer, &TftpPacket::Ack { block: ack })
        {
            received.extend_from_slice(&payload);
            ack = block;
        }
        assert_eq!(received, gw.bootloader());
        assert_eq!(gw.active_transfers(), 0);
    }

    #[test]
    fn raw_handlers_reject_garbage() {
        let gw = Gateway::new(GatewayConfig::default());
        assert!(gw.handle_dhcp(&[0u8; 10], 0).is_none());
        assert!(gw.handle_dns(&[1, 2, 3]).is_none());
        let err = gw.handle_tftp((Ipv4Addr::LOCALHOST, 1), &[0, 9]).unwrap();
        assert_eq!(&err[..4], &[0, 5, 0, 4]);
    }
}
