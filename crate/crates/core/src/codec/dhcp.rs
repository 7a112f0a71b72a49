//! BOOTP/DHCP message codec (RFC 951 / RFC 2131 / RFC 2132) with the PXE
//! options used for boot steering.

use std::fmt;
use std::net::Ipv4Addr;

use thiserror::Error;

/// Length of the fixed BOOTP header.
pub const BOOTP_HEADER_LEN: usize = 236;
/// Magic cookie that separates the BOOTP header from DHCP options.
pub const MAGIC_COOKIE: [u8; 4] = [0x63, 0x82, 0x53, 0x63];
/// Encoded messages are zero-padded to at least this many bytes.
pub const MIN_ENCODED_LEN: usize = 300;

pub const SERVER_NAME_LEN: usize = 64;
pub const BOOT_FILE_LEN: usize = 128;

pub const OPT_PAD: u8 = 0;
pub const OPT_SUBNET_MASK: u8 = 1;
pub const OPT_ROUTER: u8 = 3;
pub const OPT_DNS: u8 = 6;
pub const OPT_REQUESTED_IP: u8 = 50;
pub const OPT_LEASE_TIME: u8 = 51;
pub const OPT_MESSAGE_TYPE: u8 = 53;
pub const OPT_SERVER_ID: u8 = 54;
pub const OPT_PARAMETER_LIST: u8 = 55;
pub const OPT_VENDOR_CLASS: u8 = 60;
pub const OPT_TFTP_SERVER: u8 = 66;
pub const OPT_BOOTFILE: u8 = 67;
pub const OPT_CLIENT_ARCH: u8 = 93;
pub const OPT_END: u8 = 255;

/// Vendor class prefix that identifies a PXE client (and a PXE-aware server).
pub const PXE_VENDOR_CLASS: &str = "PXEClient";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DhcpError {
    #[error("message is {0} bytes, shorter than the 240-byte minimum")]
    TooShort(usize),
    #[error("bad magic cookie {0:02x?}")]
    BadMagicCookie([u8; 4]),
    #[error("malformed option at offset {offset}: {reason}")]
    MalformedOption { offset: usize, reason: &'static str },
    #[error("message has no message-type option (53)")]
    MissingMessageType,
    #[error("option {code} payload is {len} bytes (max 255)")]
    OversizeOption { code: u8, len: usize },
    #[error("option code {0} is reserved and carries no payload")]
    ReservedOptionCode(u8),
    #[error("{field} is {len} bytes (max {max})")]
    OversizeField {
        field: &'static str,
        len: usize,
        max: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    BootRequest,
    BootReply,
}

impl Op {
    fn code(self) -> u8 {
        match self {
            Op::BootRequest => 1,
            Op::BootReply => 2,
        }
    }
}

/// DHCP message types (option 53).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageType {
    Discover = 1,
    Offer = 2,
    Request = 3,
    Decline = 4,
    Ack = 5,
    Nak = 6,
    Release = 7,
    Inform = 8,
}

impl MessageType {
    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            1 => Self::Discover,
            2 => Self::Offer,
            3 => Self::Request,
            4 => Self::Decline,
            5 => Self::Ack,
            6 => Self::Nak,
            7 => Self::Release,
            8 => Self::Inform,
            _ => return None,
        })
    }
}

/// Ethernet hardware address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    pub const BROADCAST: MacAddr = MacAddr([0xff; 6]);

    pub fn parse(s: &str) -> Option<MacAddr> {
        let mut out = [0u8; 6];
        let mut parts = s.split([':', '-']);
        for byte in out.iter_mut() {
            let part = parts.next()?;
            if part.len() != 2 {
                return None;
            }
            *byte = u8::from_str_radix(part, 16).ok()?;
        }
        if parts.next().is_some() {
            return None;
        }
        Some(MacAddr(out))
    }
}

impl serde::Serialize for MacAddr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for MacAddr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        MacAddr::parse(&text)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid MAC address `{text}`")))
    }
}

/// Lower-case, colon separated (`52:54:00:12:34:56`).
impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DhcpOption {
    pub code: u8,
    pub payload: Vec<u8>,
}

impl DhcpOption {
    pub fn new(code: u8, payload: impl Into<Vec<u8>>) -> Self {
        Self {
            code,
            payload: payload.into(),
        }
    }
}

/// A decoded BOOTP/DHCP frame.
///
/// Options are kept in insertion order and are unique by code; use
/// [`DhcpMessage::set_option`] to add or replace one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DhcpMessage {
    pub op: Op,
    pub hops: u8,
    pub transaction_id: u32,
    pub secs: u16,
    pub flags: u16,
    pub client_ip: Ipv4Addr,
    pub your_ip: Ipv4Addr,
    /// `siaddr`, the next-server used for the TFTP fetch.
    pub server_ip: Ipv4Addr,
    pub gateway_ip: Ipv4Addr,
    pub client_mac: MacAddr,
    pub server_name: String,
    pub boot_file: String,
    options: Vec<DhcpOption>,
}

pub const FLAG_BROADCAST: u16 = 0x8000;

impl DhcpMessage {
    pub fn new(op: Op, transaction_id: u32, client_mac: MacAddr, kind: MessageType) -> Self {
        let mut msg = Self {
            op,
            hops: 0,
            transaction_id,
            secs: 0,
            flags: 0,
            client_ip: Ipv4Addr::UNSPECIFIED,
            your_ip: Ipv4Addr::UNSPECIFIED,
            server_ip: Ipv4Addr::UNSPECIFIED,
            gateway_ip: Ipv4Addr::UNSPECIFIED,
            client_mac,
            server_name: String::new(),
            boot_file: String::new(),
            options: Vec::new(),
        };
        msg.options
            .push(DhcpOption::new(OPT_MESSAGE_TYPE, vec![kind as u8]));
        msg
    }

    /// Starts a reply to `request` with the transaction id, flags, relay and
    /// client hardware address copied over.
    pub fn reply_to(request: &DhcpMessage, kind: MessageType) -> Self {
        let mut msg = Self::new(
            Op::BootReply,
            request.transaction_id,
            request.client_mac,
            kind,
        );
        msg.flags = request.flags;
        msg.gateway_ip = request.gateway_ip;
        msg
    }

    pub fn options(&self) -> &[DhcpOption] {
        &self.options
    }

    pub fn option(&self, code: u8) -> Option<&[u8]> {
        self.options
            .iter()
            .find(|o| o.code == code)
            .map(|o| o.payload.as_slice())
    }

    /// Inserts `payload` under `code`, replacing an existing instance in place.
    pub fn set_option(&mut self, code: u8, payload: impl Into<Vec<u8>>) -> Result<(), DhcpError> {
        if code == OPT_PAD || code == OPT_END {
            return Err(DhcpError::ReservedOptionCode(code));
        }
        let payload = payload.into();
        match self.options.iter_mut().find(|o| o.code == code) {
            Some(existing) => existing.payload = payload,
            None => self.options.push(DhcpOption { code, payload }),
        }
        Ok(())
    }

    pub fn remove_option(&mut self, code: u8) -> Option<DhcpOption> {
        let idx = self.options.iter().position(|o| o.code == code)?;
        Some(self.options.remove(idx))
    }

    pub fn message_type(&self) -> Option<MessageType> {
        match self.option(OPT_MESSAGE_TYPE) {
            Some([code]) => MessageType::from_code(*code),
            _ => None,
        }
    }

    pub fn option_ip(&self, code: u8) -> Option<Ipv4Addr> {
        match self.option(code) {
            Some(p) if p.len() >= 4 => Some(Ipv4Addr::new(p[0], p[1], p[2], p[3])),
            _ => None,
        }
    }

    pub fn option_str(&self, code: u8) -> Option<String> {
        self.option(code)
            .map(|p| String::from_utf8_lossy(p).trim_end_matches('\0').to_string())
    }

    pub fn vendor_class(&self) -> Option<String> {
        self.option_str(OPT_VENDOR_CLASS)
    }

    pub fn is_pxe_client(&self) -> bool {
        self.vendor_class()
            .is_some_and(|v| v.starts_with(PXE_VENDOR_CLASS))
    }

    /// Boot file name from the `file` header field, falling back to option 67.
    pub fn boot_file_name(&self) -> Option<String> {
        if !self.boot_file.is_empty() {
            return Some(self.boot_file.clone());
        }
        self.option_str(OPT_BOOTFILE).filter(|s| !s.is_empty())
    }

    /// Next-server from `siaddr`, falling back to option 66 (dotted quad).
    pub fn next_server(&self) -> Option<Ipv4Addr> {
        if !self.server_ip.is_unspecified() {
            return Some(self.server_ip);
        }
        self.option_str(OPT_TFTP_SERVER)
            .and_then(|s| s.parse().ok())
    }

    pub fn dns_servers(&self) -> Vec<Ipv4Addr> {
        self.option(OPT_DNS)
            .map(|p| {
                p.chunks_exact(4)
                    .map(|c| Ipv4Addr::new(c[0], c[1], c[2], c[3]))
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// Decodes a BOOTP/DHCP frame.
///
/// Unknown options are preserved verbatim. A repeated option code keeps the
/// first instance and logs a warning.
pub fn decode_dhcp(raw: &[u8]) -> Result<DhcpMessage, DhcpError> {
    if raw.len() < BOOTP_HEADER_LEN + MAGIC_COOKIE.len() {
        return Err(DhcpError::TooShort(raw.len()));
    }
    let cookie: [u8; 4] = raw[236..240].try_into().unwrap();
    if cookie != MAGIC_COOKIE {
        return Err(DhcpError::BadMagicCookie(cookie));
    }
    let op = match raw[0] {
        1 => Op::BootRequest,
        2 => Op::BootReply,
        _ => {
            return Err(DhcpError::MalformedOption {
                offset: 0,
                reason: "op is neither BOOTREQUEST nor BOOTREPLY",
            })
        }
    };
    let ip_at = |off: usize| Ipv4Addr::new(raw[off], raw[off + 1], raw[off + 2], raw[off + 3]);
    let mut mac = [0u8; 6];
    mac.copy_from_slice(&raw[28..34]);

    let mut options: Vec<DhcpOption> = Vec::new();
    let mut pos = 240;
    let mut ended = false;
    while pos < raw.len() {
        let code = raw[pos];
        match code {
            OPT_PAD => {
                pos += 1;
                continue;
            }
            OPT_END => {
                ended = true;
                break;
            }
            _ => {}
        }
        let Some(&len) = raw.get(pos + 1) else {
            return Err(DhcpError::MalformedOption {
                offset: pos,
                reason: "option length byte missing",
            });
        };
        let start = pos + 2;
        let end = start + len as usize;
        if end > raw.len() {
            return Err(DhcpError::MalformedOption {
                offset: pos,
                reason: "option length overruns buffer",
            });
        }
        if options.iter().any(|o| o.code == code) {
            tracing::warn!(code, "duplicate DHCP option ignored; keeping first instance");
        } else {
            options.push(DhcpOption::new(code, &raw[start..end]));
        }
        pos = end;
    }
    if !ended {
        return Err(DhcpError::MalformedOption {
            offset: pos,
            reason: "missing end option",
        });
    }

    let msg = DhcpMessage {
        op,
        hops: raw[3],
        transaction_id: u32::from_be_bytes(raw[4..8].try_into().unwrap()),
        secs: u16::from_be_bytes([raw[8], raw[9]]),
        flags: u16::from_be_bytes([raw[10], raw[11]]),
        client_ip: ip_at(12),
        your_ip: ip_at(16),
        server_ip: ip_at(20),
        gateway_ip: ip_at(24),
        client_mac: MacAddr(mac),
        server_name: c_string(&raw[44..108]),
        boot_file: c_string(&raw[108..236]),
        options,
    };
    if msg.message_type().is_none() {
        return Err(DhcpError::MissingMessageType);
    }
    Ok(msg)
}

fn c_string(field: &[u8]) -> String {
    let end = field.iter().position(|&b| b == 0).unwrap_or(field.len());
    String::from_utf8_lossy(&field[..end]).into_owned()
}

/// Encodes a message: header, cookie, options in list order, end option,
/// then zero padding up to [`MIN_ENCODED_LEN`].
pub fn encode_dhcp(msg: &DhcpMessage) -> Result<Vec<u8>, DhcpError> {
    if msg.server_name.len() >= SERVER_NAME_LEN {
        return Err(DhcpError::OversizeField {
            field: "server_name",
            len: msg.server_name.len(),
            max: SERVER_NAME_LEN - 1,
        });
    }
    if msg.boot_file.len() >= BOOT_FILE_LEN {
        return Err(DhcpError::OversizeField {
            field: "boot_file",
            len: msg.boot_file.len(),
            max: BOOT_FILE_LEN - 1,
        });
    }
    let mut out = Vec::with_capacity(MIN_ENCODED_LEN);
    out.extend_from_slice(&[msg.op.code(), 1, 6, msg.hops]);
    out.extend_from_slice(&msg.transaction_id.to_be_bytes());
    out.extend_from_slice(&msg.secs.to_be_bytes());
    out.extend_from_slice(&msg.flags.to_be_bytes());
    for ip in [msg.client_ip, msg.your_ip, msg.server_ip, msg.gateway_ip] {
        out.extend_from_slice(&ip.octets());
    }
    let mut chaddr = [0u8; 16];
    chaddr[..6].copy_from_slice(&msg.client_mac.0);
    out.extend_from_slice(&chaddr);
    let mut sname = [0u8; SERVER_NAME_LEN];
    sname[..msg.server_name.len()].copy_from_slice(msg.server_name.as_bytes());
    out.extend_from_slice(&sname);
    let mut file = [0u8; BOOT_FILE_LEN];
    file[..msg.boot_file.len()].copy_from_slice(msg.boot_file.as_bytes());
    out.extend_from_slice(&file);
    debug_assert_eq!(out.len(), BOOTP_HEADER_LEN);
    out.extend_from_slice(&MAGIC_COOKIE);

    for opt in &msg.options {
        if opt.code == OPT_PAD || opt.code == OPT_END {
            return Err(DhcpError::ReservedOptionCode(opt.code));
        }
        if opt.payload.len() > 255 {
            return Err(DhcpError::OversizeOption {
                code: opt.code,
                len: opt.payload.len(),
            });
        }
        out.push(opt.code);
        out.push(opt.payload.len() as u8);
        out.extend_from_slice(&opt.payload);
    }
    out.push(OPT_END);
    if out.len() < MIN_ENCODED_LEN {
        out.resize(MIN_ENCODED_LEN, 0);
    }
    Ok(out)
}
