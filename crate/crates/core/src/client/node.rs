//! The simulated diskless client: a [`Node`] that drives one
//! [`BootSession`] per power-on through DHCP, TFTP, script execution, DNS
//! and HTTP.

use std::any::Any;
use std::collections::BTreeMap;
use std::net::{Ipv4Addr, SocketAddrV4};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::cloud::DIGEST_HEADER;
use crate::codec::dhcp::{
    DhcpMessage, MessageType, Op, FLAG_BROADCAST, OPT_CLIENT_ARCH, OPT_PARAMETER_LIST,
    OPT_REQUESTED_IP, OPT_SERVER_ID, OPT_VENDOR_CLASS,
};
use crate::codec::tftp::{ErrorCode, MAX_BLOCK_SIZE, OPT_BLKSIZE, OPT_TSIZE};
use crate::codec::{self, DnsQuery, TftpPacket};
use crate::gateway::bootloader::extract_script;
use crate::http::HttpRequest;
use crate::script::{parse_script, Script, Statement, VarEnv};
use crate::sim::clock::{SimTime, MS, SEC};
use crate::sim::net::{Body, IfaceId, Packet, BROADCAST};
use crate::sim::nodes::{DHCP_CLIENT_PORT, DHCP_SERVER_PORT, DNS_PORT, TFTP_PORT};
use crate::sim::world::{Ctx, Node};

use super::offer::select_offer;
use super::session::{
    Artifact, BootSession, ClientConfig, CredentialSource, Direction, FailureKind, IpConfig,
    RetryMode, SessionState, Stage, TraceEvent,
};

pub const PXE_VENDOR_CLASS_ID: &str = "PXEClient:Arch:00000:UNDI:002001";
const DHCP_ATTEMPTS: u32 = 4;
const OFFER_SETTLE: SimTime = 100 * MS;
const REQUEST_ATTEMPTS: u32 = 3;
const REQUEST_TIMEOUT: SimTime = 2 * SEC;
const TFTP_TIMEOUT: SimTime = SEC;
const TFTP_RETRIES: u32 = 5;
const DNS_TIMEOUT: SimTime = SEC;
const DNS_ATTEMPTS: u32 = 3;
const HTTP_TIMEOUT: SimTime = 10 * SEC;
const FIRST_EPHEMERAL_PORT: u16 = 49152;
const POWER_ON: u64 = 1 << 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Purpose {
    Chain,
    Kernel,
    Initrd,
}

#[derive(Debug, Clone)]
struct Fetch {
    url: url::Url,
    purpose: Purpose,
}

#[derive(Debug)]
enum Phase {
    Idle,
    Discover {
        xid: u32,
        attempt: u32,
        offers: Vec<DhcpMessage>,
        settling: bool,
    },
    Request {
        xid: u32,
        offer: DhcpMessage,
        attempt: u32,
    },
    Tftp {
        server: Ipv4Addr,
        local: u16,
        block_size: usize,
        expected: u16,
        data: Vec<u8>,
        last: (SocketAddrV4, Vec<u8>),
        retries: u32,
    },
    Dns {
        id: u16,
        local: u16,
        server: Ipv4Addr,
        query: Vec<u8>,
        attempt: u32,
        fetch: Fetch,
    },
    Http {
        local: u16,
        fetch: Fetch,
    },
    Retry,
}

#[derive(Debug)]
struct ScriptRun {
    stmts: Vec<Statement>,
    pc: usize,
    menu: Vec<String>,
}

impl ScriptRun {
    fn new(script: Script) -> Self {
        Self {
            stmts: script.into_statements(),
            pc: 0,
            menu: Vec::new(),
        }
    }
}

/// Volatile state of the running session; dropped at power-off.
#[derive(Debug)]
struct Active {
    phase: Phase,
    timer: Option<u64>,
    creds: CredentialSource,
    env: VarEnv,
    dns_cache: BTreeMap<String, Ipv4Addr>,
    next_port: u16,
    bootloader: Option<Script>,
    run: Option<ScriptRun>,
    after_login: bool,
    logins: u32,
    artifacts: Vec<Artifact>,
    selected: Option<DhcpMessage>,
}

pub struct ClientNode {
    cfg: ClientConfig,
    iface: IfaceId,
    rng: ChaCha8Rng,
    sessions: Vec<BootSession>,
    active: Option<Active>,
    next_token: u64,
    /// Mirrors the interface address; `Ctx::set_ip` lands after the callback.
    ip: Ipv4Addr,
}

fn ms(t: SimTime) -> f64 {
    t as f64 / MS as f64
}

fn dhcp_summary(m: &DhcpMessage) -> String {
    let kind = m
        .message_type()
        .map(|t| format!("{t:?}").to_ascii_uppercase())
        .unwrap_or_else(|| "BOOTP".into());
    let mut s = format!("{kind} xid=0x{:08x} chaddr={}", m.transaction_id, m.client_mac);
    if m.op == Op::BootReply {
        s.push_str(&format!(" yiaddr={} siaddr={}", m.your_ip, m.server_ip));
        if let Some(server) = m.option_ip(OPT_SERVER_ID) {
            s.push_str(&format!(" server={server}"));
        }
        if let Some(file) = m.boot_file_name() {
            s.push_str(&format!(" file={file}"));
        }
        let dns = m.dns_servers();
        if dns.is_empty() {
            s.push_str(" dns=none");
        } else {
            let list: Vec<String> = dns.iter().map(Ipv4Addr::to_string).collect();
            s.push_str(&format!(" dns={}", list.join(",")));
        }
    }
    if let Some(v) = m.vendor_class() {
        s.push_str(&format!(" vendor={v}"));
    }
    s
}

fn tftp_summary(p: &TftpPacket) -> String {
    match p {
        TftpPacket::ReadRequest { filename, mode, options } => {
            let opts: Vec<String> = options.iter().map(|(k, v)| format!("{k}={v}")).collect();
            format!("RRQ {filename} {mode} {}", opts.join(" ")).trim_end().to_string()
        }
        TftpPacket::Data { block, payload } => format!("DATA block={block} len={}", payload.len()),
        TftpPacket::Ack { block } => format!("ACK block={block}"),
        TftpPacket::Error { code, message } => format!("ERROR code={code} {message}"),
        TftpPacket::OptionAck { options } => {
            let opts: Vec<String> = options.iter().map(|(k, v)| format!("{k}={v}")).collect();
            format!("OACK {}", opts.join(" "))
        }
    }
}

/// Protocol label and one-line summary for trace records.
pub fn summarize(pkt: &Packet) -> (String, String) {
    let route = format!("{} -> {}", pkt.src, pkt.dst);
    let proto = pkt.protocol();
    let detail = match &pkt.body {
        Body::Udp(raw) => match proto {
            "dhcp" => codec::decode_dhcp(raw)
                .map(|m| dhcp_summary(&m))
                .unwrap_or_else(|e| format!("undecodable: {e}")),
            "dns" => {
                if pkt.src.port() == DNS_PORT {
                    match codec::decode_dns_answer(raw) {
                        Ok(a) => {
                            let addrs: Vec<String> = a.records.iter().map(|r| r.addr.to_string()).collect();
                            format!(
                                "ANSWER id={} rcode={} {} -> [{}]",
                                a.id,
                                a.rcode,
                                a.question.name,
                                addrs.join(",")
                            )
                        }
                        Err(e) => format!("undecodable: {e}"),
                    }
                } else {
                    match codec::decode_dns_query(raw) {
                        Ok(q) => format!("QUERY id={} {} type={}", q.id, q.name, q.qtype),
                        Err(e) => format!("undecodable: {e}"),
                    }
                }
            }
            "tftp" => codec::decode_tftp(raw)
                .map(|p| tftp_summary(&p))
                .unwrap_or_else(|e| format!("undecodable: {e}")),
            _ => format!("{} bytes", raw.len()),
        },
        Body::HttpRequest(r) => {
            let host = r.header("host").unwrap_or("");
            if r.query.is_empty() {
                format!("{} http://{host}{}", r.method, r.path)
            } else {
                format!("{} http://{host}{}?{}", r.method, r.path, redact_query(&r.query))
            }
        }
        Body::HttpResponse(x) => {
            let mut s = format!("{} {} len={}", x.response.status, x.path, x.response.body.len());
            if let Some(d) = x.response.header(DIGEST_HEADER) {
                s.push_str(&format!(" digest={d}"));
            }
            s
        }
    };
    (proto.to_string(), format!("{route} {detail}"))
}

/// Masks secret query values so traces never carry passwords.
fn redact_query(query: &str) -> String {
    query
        .split('&')
        .map(|pair| match pair.split_once('=') {
            Some((k, _)) if matches!(k, "password" | "pass") => format!("{k}=***"),
            _ => pair.to_string(),
        })
        .collect::<Vec<_>>()
        .join("&")
}

fn os_from_url(url: &str) -> Option<String> {
    let u = url::Url::parse(url).ok()?;
    let segs: Vec<&str> = u.path_segments()?.collect();
    (segs.len() == 3 && segs[0] == "files").then(|| segs[1].to_string())
}

impl ClientNode {
    pub fn new(cfg: ClientConfig, iface: IfaceId, seed: u64) -> Self {
        let mac_bits = cfg.mac.0.iter().fold(0u64, |acc, b| (acc << 8) | u64::from(*b));
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed ^ mac_bits.rotate_left(17)),
            cfg,
            iface,
            sessions: Vec::new(),
            active: None,
            next_token: 0,
            ip: Ipv4Addr::UNSPECIFIED,
        }
    }

    pub fn config(&self) -> &ClientConfig {
        &self.cfg
    }

    pub fn sessions(&self) -> &[BootSession] {
        &self.sessions
    }

    /// True while a session is running and not parked or terminal.
    pub fn is_busy(&self) -> bool {
        self.active.as_ref().is_some_and(|a| !matches!(a.phase, Phase::Idle))
    }

    fn cur(&mut self) -> &mut BootSession {
        self.sessions.last_mut().expect("session running")
    }

    fn act(&mut self) -> &mut Active {
        self.active.as_mut().expect("session running")
    }

    fn trace(&mut self, now: SimTime, direction: Direction, protocol: &str, summary: String) {
        if let Some(s) = self.sessions.last_mut() {
            s.trace.push(TraceEvent {
                time: ms(now),
                direction,
                protocol: protocol.into(),
                summary,
            });
        }
    }

    fn set_state(&mut self, now: SimTime, state: SessionState) {
        if self.cur().state == state {
            return;
        }
        let label = state.label();
        let detail = match &state {
            SessionState::Failed { stage, reason, detail } => format!("{label} {stage:?} {reason:?}: {detail}"),
            SessionState::Booted { os_id, .. } => format!("{label} os={os_id}"),
            _ => label.to_string(),
        };
        self.trace(now, Direction::State, "session", detail);
        let s = self.cur();
        s.history.push(state.clone());
        s.state = state;
    }

    fn set_timer(&mut self, ctx: &mut Ctx<'_>, delay: SimTime) {
        self.next_token += 1;
        let token = self.next_token;
        self.act().timer = Some(token);
        ctx.timer(delay, token);
    }

    fn send(&mut self, ctx: &mut Ctx<'_>, pkt: Packet) {
        let (proto, summary) = summarize(&pkt);
        self.trace(ctx.now(), Direction::Tx, &proto, summary);
        ctx.send(self.iface, pkt);
    }

    fn port(&mut self) -> u16 {
        let a = self.act();
        let p = a.next_port;
        a.next_port = if p == u16::MAX { FIRST_EPHEMERAL_PORT } else { p + 1 };
        p
    }

    fn set_ip(&mut self, ctx: &mut Ctx<'_>, ip: Ipv4Addr) {
        self.ip = ip;
        ctx.set_ip(self.iface, ip);
    }

    fn fail_at(&mut self, ctx: &mut Ctx<'_>, stage: Stage, reason: FailureKind, detail: impl Into<String>) {
        let now = ctx.now();
        self.set_state(
            now,
            SessionState::Failed {
                stage,
                reason,
                detail: detail.into(),
            },
        );
        if let Some(a) = self.active.as_mut() {
            a.phase = Phase::Idle;
            a.timer = None;
            a.run = None;
        }
    }

    fn fail(&mut self, ctx: &mut Ctx<'_>, reason: FailureKind, detail: impl Into<String>) {
        let stage = self.cur().state.stage();
        self.fail_at(ctx, stage, reason, detail);
    }

    fn park(&mut self, ctx: &mut Ctx<'_>, why: &str) {
        self.set_state(ctx.now(), SessionState::AwaitingCredentials);
        self.trace(ctx.now(), Direction::Script, "script", format!("waiting: {why}"));
        let a = self.act();
        a.phase = Phase::Idle;
        a.timer = None;
    }

    fn power_on(&mut self, ctx: &mut Ctx<'_>) {
        if self.active.take().is_some() {
            let now = ctx.now();
            self.trace(now, Direction::State, "session", "power off".into());
        }
        self.set_ip(ctx, Ipv4Addr::UNSPECIFIED);
        self.sessions.push(BootSession::new(self.cfg.mac, ctx.now()));
        self.trace(ctx.now(), Direction::State, "session", "power_on".into());
        self.active = Some(self.fresh_active());
        self.begin_attempt(ctx);
    }

    fn fresh_active(&self) -> Active {
        let mac = self.cfg.mac.to_string();
        let env = VarEnv::new()
            .with("mac", mac.clone())
            .with("net0/mac", mac);
        Active {
            phase: Phase::Idle,
            timer: None,
            creds: CredentialSource::scripted(self.cfg.credentials.iter().cloned()),
            env,
            dns_cache: BTreeMap::new(),
            next_port: FIRST_EPHEMERAL_PORT,
            bootloader: None,
            run: None,
            after_login: false,
            logins: 0,
            artifacts: Vec::new(),
            selected: None,
        }
    }

    fn begin_attempt(&mut self, ctx: &mut Ctx<'_>) {
        self.cur().boot_attempts += 1;
        self.set_state(ctx.now(), SessionState::Discovering);
        let xid: u32 = self.rng.random();
        self.act().phase = Phase::Discover {
            xid,
            attempt: 1,
            offers: Vec::new(),
            settling: false,
        };
        self.send_discover(ctx, xid, 1);
    }

    fn send_discover(&mut self, ctx: &mut Ctx<'_>, xid: u32, attempt: u32) {
        let mut m = DhcpMessage::new(Op::BootRequest, xid, self.cfg.mac, MessageType::Discover);
        m.flags = FLAG_BROADCAST;
        m.secs = ((1u32 << (attempt - 1)) - 1) as u16;
        m.set_option(OPT_PARAMETER_LIST, vec![1, 3, 6, 66, 67]).expect("valid option");
        m.set_option(OPT_VENDOR_CLASS, PXE_VENDOR_CLASS_ID).expect("valid option");
        m.set_option(OPT_CLIENT_ARCH, vec![0, 0]).expect("valid option");
        self.send_dhcp(ctx, &m);
        self.set_timer(ctx, SEC << (attempt - 1));
    }

    fn send_dhcp(&mut self, ctx: &mut Ctx<'_>, m: &DhcpMessage) {
        if let Ok(raw) = codec::encode_dhcp(m) {
            let pkt = Packet::udp(
                SocketAddrV4::new(Ipv4Addr::UNSPECIFIED, DHCP_CLIENT_PORT),
                SocketAddrV4::new(BROADCAST, DHCP_SERVER_PORT),
                raw,
            );
            self.send(ctx, pkt);
        }
    }

    fn send_request(&mut self, ctx: &mut Ctx<'_>, xid: u32, offer: &DhcpMessage) {
        let mut m = DhcpMessage::new(Op::BootRequest, xid, self.cfg.mac, MessageType::Request);
        m.flags = FLAG_BROADCAST;
        m.set_option(OPT_REQUESTED_IP, offer.your_ip.octets().to_vec()).expect("valid option");
        if let Some(server) = offer.option_ip(OPT_SERVER_ID) {
            m.set_option(OPT_SERVER_ID, server.octets().to_vec()).expect("valid option");
        }
        m.set_option(OPT_VENDOR_CLASS, PXE_VENDOR_CLASS_ID).expect("valid option");
        self.send_dhcp(ctx, &m);
        self.set_timer(ctx, REQUEST_TIMEOUT);
    }

    fn on_dhcp(&mut self, ctx: &mut Ctx<'_>, msg: DhcpMessage) {
        if msg.op != Op::BootReply || msg.client_mac != self.cfg.mac {
            return;
        }
        let now = ctx.now();
        match &mut self.act().phase {
            Phase::Discover { xid, offers, settling, .. }
                if msg.transaction_id == *xid && msg.message_type() == Some(MessageType::Offer) =>
            {
                offers.push(msg);
                if !*settling {
                    *settling = true;
                    self.set_timer(ctx, OFFER_SETTLE);
                }
            }
            Phase::Request { xid, offer, .. } if msg.transaction_id == *xid => {
                if msg.option_ip(OPT_SERVER_ID) != offer.option_ip(OPT_SERVER_ID) {
                    return;
                }
                match msg.message_type() {
                    Some(MessageType::Ack) => {
                        let mut selected = offer.clone();
                        selected.your_ip = msg.your_ip;
                        let Some(cfg) = IpConfig::from_offer(&selected) else {
                            self.fail(ctx, FailureKind::NoOffer, "acknowledged offer lost its boot steering");
                            return;
                        };
                        self.set_ip(ctx, cfg.ip);
                        let a = self.act();
                        a.env.set("ip", cfg.ip.to_string());
                        a.env.set("net0/ip", cfg.ip.to_string());
                        a.env.set("next-server", cfg.next_server.to_string());
                        a.env.set("filename", cfg.boot_file.clone());
                        a.selected = Some(selected);
                        a.phase = Phase::Idle;
                        a.timer = None;
                        self.cur().ip_config = Some(cfg);
                        self.trace(now, Direction::State, "session", "address configured".into());
                        self.after_address(ctx);
                    }
                    Some(MessageType::Nak) => self.fail(ctx, FailureKind::NoOffer, "request refused (NAK)"),
                    _ => {}
                }
            }
            _ => {}
        }
    }

    fn after_address(&mut self, ctx: &mut Ctx<'_>) {
        let loaded = self.act().bootloader.clone();
        match loaded {
            Some(script) if self.cfg.retry == RetryMode::InPlace => {
                self.set_state(ctx.now(), SessionState::ExecutingScript);
                self.act().run = Some(ScriptRun::new(script));
                self.run_script(ctx);
            }
            _ => self.start_tftp(ctx),
        }
    }

    fn start_tftp(&mut self, ctx: &mut Ctx<'_>) {
        self.set_state(ctx.now(), SessionState::FetchingBootloader);
        let cfg = self.cur().ip_config.clone().expect("configured");
        let local = self.port();
        let rrq = TftpPacket::ReadRequest {
            filename: cfg.boot_file.clone(),
            mode: "octet".into(),
            options: vec![
                (OPT_BLKSIZE.into(), MAX_BLOCK_SIZE.to_string()),
                (OPT_TSIZE.into(), "0".into()),
            ],
        };
        let dst = SocketAddrV4::new(cfg.next_server, TFTP_PORT);
        let raw = codec::encode_tftp(&rrq).expect("RRQ encodes");
        self.act().phase = Phase::Tftp {
            server: cfg.next_server,
            local,
            block_size: codec::tftp::DEFAULT_BLOCK_SIZE,
            expected: 1,
            data: Vec::new(),
            last: (dst, raw.clone()),
            retries: 0,
        };
        let src = SocketAddrV4::new(self.ip, local);
        self.send(ctx, Packet::udp(src, dst, raw));
        self.set_timer(ctx, TFTP_TIMEOUT);
    }

    fn tftp_send(&mut self, ctx: &mut Ctx<'_>, server: Ipv4Addr, local: u16, pkt: &TftpPacket) {
        let raw = codec::encode_tftp(pkt).expect("TFTP encodes");
        let dst = SocketAddrV4::new(server, TFTP_PORT);
        if let Phase::Tftp { last, retries, .. } = &mut self.act().phase {
            *last = (dst, raw.clone());
            *retries = 0;
        }
        let src = SocketAddrV4::new(self.ip, local);
        self.send(ctx, Packet::udp(src, dst, raw));
        self.set_timer(ctx, TFTP_TIMEOUT);
    }

    fn on_tftp(&mut self, ctx: &mut Ctx<'_>, pkt: TftpPacket) {
        let Phase::Tftp { server, local, block_size, expected, data, .. } = &mut self.act().phase else {
            return;
        };
        let (server, local) = (*server, *local);
        match pkt {
            TftpPacket::OptionAck { options } => {
                let size = options
                    .iter()
                    .find(|(k, _)| k.eq_ignore_ascii_case(OPT_BLKSIZE))
                    .and_then(|(_, v)| v.parse().ok())
                    .unwrap_or(codec::tftp::DEFAULT_BLOCK_SIZE);
                *block_size = size;
                self.tftp_send(ctx, server, local, &TftpPacket::Ack { block: 0 });
            }
            TftpPacket::Data { block, payload } => {
                if block == *expected {
                    data.extend_from_slice(&payload);
                    let done = payload.len() < *block_size;
                    *expected = expected.wrapping_add(1);
                    self.tftp_send(ctx, server, local, &TftpPacket::Ack { block });
                    if done {
                        self.bootloader_loaded(ctx);
                    }
                } else if block == expected.wrapping_sub(1) {
                    self.tftp_send(ctx, server, local, &TftpPacket::Ack { block });
                }
            }
            TftpPacket::Error { code, message } => {
                self.fail(ctx, FailureKind::TftpError, format!("server error {code}: {message}"));
            }
            _ => {
                let err = TftpPacket::error(ErrorCode::IllegalOperation, "unexpected packet");
                self.tftp_send(ctx, server, local, &err);
            }
        }
    }

    fn bootloader_loaded(&mut self, ctx: &mut Ctx<'_>) {
        let Phase::Tftp { data, .. } = std::mem::replace(&mut self.act().phase, Phase::Idle) else {
            return;
        };
        self.act().timer = None;
        let digest = hex::encode(Sha256::digest(&data));
        self.trace(
            ctx.now(),
            Direction::State,
            "session",
            format!("bootloader loaded len={} sha256={digest}", data.len()),
        );
        let script = extract_script(&data).map(|text| parse_script(&text));
        match script {
            Some(Ok(script)) => {
                self.act().bootloader = Some(script.clone());
                self.set_state(ctx.now(), SessionState::ExecutingScript);
                self.act().run = Some(ScriptRun::new(script));
                self.run_script(ctx);
            }
            Some(Err(e)) => self.fail(ctx, FailureKind::ScriptError, format!("embedded script: {e}")),
            None => self.fail(ctx, FailureKind::ScriptError, "bootloader has no embedded script"),
        }
    }

    fn script_note(&mut self, ctx: &Ctx<'_>, text: String) {
        self.trace(ctx.now(), Direction::Script, "script", text);
    }

    /// Runs statements until one blocks on the network, parks, or ends.
    fn run_script(&mut self, ctx: &mut Ctx<'_>) {
        loop {
            let a = self.act();
            let Some(run) = a.run.as_mut() else {
                return;
            };
            if run.pc >= run.stmts.len() {
                a.run = None;
                self.script_ended(ctx);
                return;
            }
            let raw = run.stmts[run.pc].clone();
            run.pc += 1;
            let stmt = match raw.substitute(&a.env) {
                Ok(s) => s,
                Err(e) => {
                    self.fail(ctx, FailureKind::ScriptError, e.to_string());
                    return;
                }
            };
            match stmt {
                Statement::Echo(text) => self.script_note(ctx, format!("echo {text}")),
                Statement::Set { var, value } => self.act().env.set(var, value),
                Statement::MenuStart(title) => {
                    self.act().run.as_mut().expect("running").menu.clear();
                    self.script_note(ctx, format!("menu {title}"));
                }
                Statement::MenuItem { key, label } => {
                    self.act().run.as_mut().expect("running").menu.push(key.clone());
                    self.script_note(ctx, format!("item {key} {label}"));
                }
                Statement::Choose(var) => {
                    self.set_state(ctx.now(), SessionState::AwaitingCredentials);
                    let Some(choice) = self.cfg.prompts.get(&var).cloned() else {
                        self.park(ctx, &format!("menu choice for {var}"));
                        return;
                    };
                    let menu = &self.act().run.as_ref().expect("running").menu;
                    if !menu.contains(&choice) {
                        self.fail(ctx, FailureKind::ScriptError, format!("`{choice}` is not a menu item"));
                        return;
                    }
                    self.script_note(ctx, format!("choose {var} = {choice}"));
                    self.act().env.set(var, choice);
                }
                Statement::Prompt { var, message, masked } => {
                    self.set_state(ctx.now(), SessionState::AwaitingCredentials);
                    let Some(answer) = self.cfg.prompts.get(&var).cloned() else {
                        self.park(ctx, &format!("prompt `{message}`"));
                        return;
                    };
                    let shown = if masked { "*".repeat(answer.len()) } else { answer.clone() };
                    self.script_note(ctx, format!("prompt {message}: {shown}"));
                    self.act().env.set(var, answer);
                }
                Statement::Login => {
                    self.set_state(ctx.now(), SessionState::AwaitingCredentials);
                    let a = self.act();
                    a.logins += 1;
                    let logins = a.logins;
                    if logins > self.cfg.max_auth_attempts {
                        self.fail_at(
                            ctx,
                            Stage::Authenticating,
                            FailureKind::AuthRejected,
                            format!("rejected {} times", self.cfg.max_auth_attempts),
                        );
                        return;
                    }
                    match self.act().creds.next_pair() {
                        Some((user, pass)) => {
                            self.script_note(ctx, format!("login {user}"));
                            let a = self.act();
                            a.env.set("username", user);
                            a.env.set("password", pass);
                            a.after_login = true;
                        }
                        None if logins > 1 => {
                            self.fail_at(
                                ctx,
                                Stage::Authenticating,
                                FailureKind::AuthRejected,
                                "credentials rejected and none left to try",
                            );
                            return;
                        }
                        None => {
                            self.park(ctx, "login credentials");
                            return;
                        }
                    }
                }
                Statement::Chain(url) => {
                    let state = if self.act().after_login {
                        SessionState::Authenticating
                    } else {
                        SessionState::ExecutingScript
                    };
                    self.set_state(ctx.now(), state);
                    self.begin_fetch(ctx, &url, Purpose::Chain);
                    return;
                }
                Statement::Kernel { url, params } => {
                    self.set_state(ctx.now(), SessionState::FetchingArtifacts);
                    self.script_note(ctx, format!("kernel {url} {params}").trim_end().to_string());
                    self.begin_fetch(ctx, &url, Purpose::Kernel);
                    return;
                }
                Statement::Initrd(url) => {
                    self.set_state(ctx.now(), SessionState::FetchingArtifacts);
                    self.begin_fetch(ctx, &url, Purpose::Initrd);
                    return;
                }
                Statement::Boot => {
                    self.booted(ctx);
                    return;
                }
            }
        }
    }

    fn booted(&mut self, ctx: &mut Ctx<'_>) {
        let artifacts = std::mem::take(&mut self.act().artifacts);
        let os_id = artifacts
            .first()
            .and_then(|a| os_from_url(&a.url))
            .unwrap_or_else(|| "unknown".into());
        let now = ctx.now();
        let s = self.cur();
        s.boot_time_us = Some(now - s.power_on_us);
        self.set_state(now, SessionState::Booted { os_id, artifacts });
        let a = self.act();
        a.phase = Phase::Idle;
        a.timer = None;
        a.run = None;
    }

    fn script_ended(&mut self, ctx: &mut Ctx<'_>) {
        let attempts = self.cur().boot_attempts;
        if attempts >= self.cfg.max_boot_attempts {
            self.fail_at(
                ctx,
                Stage::ExecutingScript,
                FailureKind::ScriptError,
                format!("script ended without booting {attempts} times"),
            );
            return;
        }
        self.script_note(ctx, "script ended without boot; retrying".into());
        self.act().phase = Phase::Retry;
        let delay = self.cfg.retry_delay_ms * MS;
        self.set_timer(ctx, delay);
    }

    fn begin_fetch(&mut self, ctx: &mut Ctx<'_>, raw_url: &str, purpose: Purpose) {
        let url = match url::Url::parse(raw_url) {
            Ok(u) => u,
            Err(e) => {
                self.fail(ctx, FailureKind::ScriptError, format!("bad URL `{raw_url}`: {e}"));
                return;
            }
        };
        if url.scheme() != "http" {
            self.fail(ctx, FailureKind::HttpError, format!("unsupported scheme `{}`", url.scheme()));
            return;
        }
        let fetch = Fetch { url, purpose };
        match fetch.url.host() {
            Some(url::Host::Ipv4(ip)) => self.send_http(ctx, ip, fetch),
            Some(url::Host::Domain(name)) => {
                let name = name.to_ascii_lowercase();
                if let Some(ip) = self.act().dns_cache.get(&name).copied() {
                    self.send_http(ctx, ip, fetch);
                } else {
                    self.send_dns(ctx, name, fetch);
                }
            }
            _ => self.fail(ctx, FailureKind::HttpError, "unsupported host"),
        }
    }

    fn send_dns(&mut self, ctx: &mut Ctx<'_>, name: String, fetch: Fetch) {
        let server = self.cur().ip_config.as_ref().and_then(|c| c.dns.first().copied());
        let Some(server) = server else {
            self.fail(ctx, FailureKind::DnsError, format!("cannot resolve {name}: no DNS server"));
            return;
        };
        let id: u16 = self.rng.random();
        let query = codec::encode_dns_query(&DnsQuery {
            id,
            recursion_desired: true,
            name: name.clone(),
            qtype: codec::dns::TYPE_A,
            qclass: codec::dns::CLASS_IN,
        });
        let query = match query {
            Ok(q) => q,
            Err(e) => {
                self.fail(ctx, FailureKind::DnsError, format!("cannot resolve {name}: {e}"));
                return;
            }
        };
        let local = self.port();
        self.act().phase = Phase::Dns {
            id,
            local,
            server,
            query: query.clone(),
            attempt: 1,
            fetch,
        };
        let src = SocketAddrV4::new(self.ip, local);
        self.send(ctx, Packet::udp(src, SocketAddrV4::new(server, DNS_PORT), query));
        self.set_timer(ctx, DNS_TIMEOUT);
    }

    fn on_dns(&mut self, ctx: &mut Ctx<'_>, dst_port: u16, raw: &[u8]) {
        let Phase::Dns { id, local, fetch, .. } = &self.act().phase else {
            return;
        };
        if dst_port != *local {
            return;
        }
        let Ok(answer) = codec::decode_dns_answer(raw) else {
            return;
        };
        if answer.id != *id {
            return;
        }
        let fetch = fetch.clone();
        let name = answer.question.name.to_ascii_lowercase();
        match answer.records.first() {
            Some(rec) if answer.rcode == codec::dns::RCODE_NO_ERROR => {
                let ip = rec.addr;
                let a = self.act();
                a.dns_cache.insert(name, ip);
                a.phase = Phase::Idle;
                self.send_http(ctx, ip, fetch);
            }
            _ => self.fail(
                ctx,
                FailureKind::DnsError,
                format!("{name} did not resolve (rcode {})", answer.rcode),
            ),
        }
    }

    fn send_http(&mut self, ctx: &mut Ctx<'_>, ip: Ipv4Addr, fetch: Fetch) {
        let url = &fetch.url;
        let port = url.port_or_known_default().unwrap_or(80);
        let target = match url.query() {
            Some(q) => format!("{}?{q}", url.path()),
            None => url.path().to_string(),
        };
        let host = match url.port() {
            Some(p) => format!("{}:{p}", url.host_str().unwrap_or_default()),
            None => url.host_str().unwrap_or_default().to_string(),
        };
        let req = HttpRequest::get(&target)
            .with_header("host", host)
            .with_header("user-agent", "sdb-client-sim");
        if fetch.purpose == Purpose::Chain && self.act().after_login {
            self.act().after_login = false;
            self.cur().auth_attempts += 1;
        }
        let local = self.port();
        self.act().phase = Phase::Http { local, fetch };
        let src = SocketAddrV4::new(self.ip, local);
        self.send(ctx, Packet::http_request(src, SocketAddrV4::new(ip, port), req));
        self.set_timer(ctx, HTTP_TIMEOUT);
    }

    fn on_http(&mut self, ctx: &mut Ctx<'_>, dst_port: u16, x: crate::sim::net::HttpExchange) {
        let Phase::Http { local, fetch } = &self.act().phase else {
            return;
        };
        if dst_port != *local {
            return;
        }
        let fetch = fetch.clone();
        let a = self.act();
        a.phase = Phase::Idle;
        a.timer = None;
        let resp = x.response;
        if !resp.is_success() {
            self.fail(ctx, FailureKind::HttpError, format!("{} returned {}", fetch.url, resp.status));
            return;
        }
        match fetch.purpose {
            Purpose::Chain => match std::str::from_utf8(&resp.body).map(parse_script) {
                Ok(Ok(script)) => {
                    self.act().run = Some(ScriptRun::new(script));
                    self.run_script(ctx);
                }
                Ok(Err(e)) => self.fail(ctx, FailureKind::ScriptError, format!("{}: {e}", fetch.url)),
                Err(_) => self.fail(ctx, FailureKind::ScriptError, format!("{}: not text", fetch.url)),
            },
            Purpose::Kernel | Purpose::Initrd => {
                let digest = hex::encode(Sha256::digest(&resp.body));
                match resp.header(DIGEST_HEADER) {
                    Some(expected) if expected.eq_ignore_ascii_case(&digest) => {
                        self.act().artifacts.push(Artifact {
                            url: fetch.url.to_string(),
                            size: resp.body.len() as u64,
                            digest,
                        });
                        self.run_script(ctx);
                    }
                    Some(expected) => self.fail(
                        ctx,
                        FailureKind::DigestMismatch,
                        format!("{}: got {digest}, expected {expected}", fetch.url),
                    ),
                    None => self.fail(
                        ctx,
                        FailureKind::DigestMismatch,
                        format!("{}: no digest advertised", fetch.url),
                    ),
                }
            }
        }
    }

    fn on_session_timer(&mut self, ctx: &mut Ctx<'_>) {
        let phase = std::mem::replace(&mut self.act().phase, Phase::Idle);
        match phase {
            Phase::Discover { xid, attempt, offers, settling: true } => match select_offer(&offers) {
                Ok(offer) => {
                    self.set_state(ctx.now(), SessionState::OfferSelected);
                    self.trace(ctx.now(), Direction::State, "session", format!("selected {}", dhcp_summary(&offer)));
                    self.act().phase = Phase::Request {
                        xid,
                        offer: offer.clone(),
                        attempt: 1,
                    };
                    self.send_request(ctx, xid, &offer);
                }
                Err(e) => {
                    // Nothing usable yet; keep listening until the backoff expires.
                    self.trace(ctx.now(), Direction::State, "session", format!("offers unusable: {e}"));
                    self.act().phase = Phase::Discover {
                        xid,
                        attempt,
                        offers,
                        settling: false,
                    };
                    let remaining = (SEC << (attempt - 1)).saturating_sub(OFFER_SETTLE);
                    self.set_timer(ctx, remaining);
                }
            },
            Phase::Discover { xid, attempt, offers, settling: false } => {
                if attempt >= DHCP_ATTEMPTS {
                    let detail = match select_offer(&offers) {
                        Err(e) if !offers.is_empty() => e.to_string(),
                        _ => format!("no offer after {DHCP_ATTEMPTS} DISCOVERs"),
                    };
                    self.fail(ctx, FailureKind::NoOffer, detail);
                    return;
                }
                self.act().phase = Phase::Discover {
                    xid,
                    attempt: attempt + 1,
                    offers,
                    settling: false,
                };
                self.send_discover(ctx, xid, attempt + 1);
            }
            Phase::Request { xid, offer, attempt } => {
                if attempt >= REQUEST_ATTEMPTS {
                    self.fail(ctx, FailureKind::NoOffer, "no ACK for REQUEST");
                    return;
                }
                self.act().phase = Phase::Request {
                    xid,
                    offer: offer.clone(),
                    attempt: attempt + 1,
                };
                self.send_request(ctx, xid, &offer);
            }
            Phase::Tftp { server, local, block_size, expected, data, last, retries } => {
                if retries >= TFTP_RETRIES {
                    self.fail(ctx, FailureKind::TftpError, "transfer timed out");
                    return;
                }
                let (dst, raw) = last.clone();
                self.act().phase = Phase::Tftp {
                    server,
                    local,
                    block_size,
                    expected,
                    data,
                    last,
                    retries: retries + 1,
                };
                let src = SocketAddrV4::new(self.ip, local);
                self.send(ctx, Packet::udp(src, dst, raw));
                self.set_timer(ctx, TFTP_TIMEOUT);
            }
            Phase::Dns { id, local, server, query, attempt, fetch } => {
                if attempt >= DNS_ATTEMPTS {
                    self.fail(ctx, FailureKind::DnsError, format!("no answer from {server}"));
                    return;
                }
                self.act().phase = Phase::Dns {
                    id,
                    local,
                    server,
                    query: query.clone(),
                    attempt: attempt + 1,
                    fetch,
                };
                let src = SocketAddrV4::new(self.ip, local);
                self.send(ctx, Packet::udp(src, SocketAddrV4::new(server, DNS_PORT), query));
                self.set_timer(ctx, DNS_TIMEOUT);
            }
            Phase::Http { fetch, .. } => {
                self.fail(ctx, FailureKind::HttpError, format!("{} timed out", fetch.url));
            }
            Phase::Retry => {
                if self.cfg.retry == RetryMode::PowerCycle {
                    self.trace(ctx.now(), Direction::State, "session", "power-cycle".into());
                    self.set_ip(ctx, Ipv4Addr::UNSPECIFIED);
                    let creds = std::mem::take(&mut self.act().creds);
                    let mut fresh = self.fresh_active();
                    fresh.creds = creds;
                    fresh.logins = self.act().logins;
                    self.active = Some(fresh);
                } else {
                    let a = self.act();
                    a.dns_cache.clear();
                    a.run = None;
                }
                self.cur().ip_config = None;
                self.begin_attempt(ctx);
            }
            Phase::Idle => {}
        }
    }
}

impl Node for ClientNode {
    fn start(&mut self, ctx: &mut Ctx<'_>) {
        for (i, at) in self.cfg.power_on_ms.clone().into_iter().enumerate() {
            let delay = (at * MS).saturating_sub(ctx.now());
            ctx.timer(delay, POWER_ON | i as u64);
        }
    }

    fn on_packet(&mut self, ctx: &mut Ctx<'_>, _iface: IfaceId, pkt: Packet) {
        let running = self.sessions.last().is_some_and(|s| !s.state.is_terminal()) && self.active.is_some();
        if !running {
            return;
        }
        let (proto, summary) = summarize(&pkt);
        self.trace(ctx.now(), Direction::Rx, &proto, summary);
        if matches!(self.act().phase, Phase::Idle) {
            return;
        }
        let dst_port = pkt.dst.port();
        let src = pkt.src;
        match pkt.body {
            Body::Udp(raw) if dst_port == DHCP_CLIENT_PORT => {
                if let Ok(msg) = codec::decode_dhcp(&raw) {
                    self.on_dhcp(ctx, msg);
                }
            }
            Body::Udp(raw) if src.port() == DNS_PORT => self.on_dns(ctx, dst_port, &raw),
            Body::Udp(raw) => {
                let matches = matches!(
                    &self.act().phase,
                    Phase::Tftp { server, local, .. } if *server == *src.ip() && *local == dst_port
                );
                if matches {
                    if let Ok(p) = codec::decode_tftp(&raw) {
                        self.on_tftp(ctx, p);
                    }
                }
            }
            Body::HttpResponse(x) => self.on_http(ctx, dst_port, x),
            Body::HttpRequest(_) => {}
        }
    }

    fn on_timer(&mut self, ctx: &mut Ctx<'_>, token: u64) {
        if token & POWER_ON != 0 {
            self.power_on(ctx);
            return;
        }
        let current = self.active.as_ref().and_then(|a| a.timer);
        if current != Some(token) {
            return;
        }
        self.act().timer = None;
        self.on_session_timer(ctx);
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn secrets_are_redacted() {
        assert_eq!(
            redact_query("username=carol&password=hunter2&mac=52%3A54"),
            "username=carol&password=***&mac=52%3A54"
        );
        assert_eq!(redact_query("ssid=lab&pass=secret"), "ssid=lab&pass=***");
        assert_eq!(redact_query(""), "");
    }

    #[test]
    fn os_from_file_url() {
        assert_eq!(os_from_url("http://h/files/tiny/vmlinuz").as_deref(), Some("tiny"));
        assert_eq!(os_from_url("http://h/boot"), None);
    }
}
