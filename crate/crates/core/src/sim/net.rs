//! Segments, interfaces and the packets that travel between them.

use std::net::{Ipv4Addr, SocketAddrV4};

use serde::{Deserialize, Serialize};

use crate::codec::MacAddr;
use crate::http::{HttpRequest, HttpResponse};

use super::clock::{SimTime, MS};

pub type NodeId = usize;
pub type IfaceId = usize;
pub type SegmentId = usize;

pub const BROADCAST: Ipv4Addr = Ipv4Addr::BROADCAST;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentKind {
    Broadcast,
    PointToPoint,
    WifiKeyed { ssid: String, passphrase: String },
    CellularKeyed { apn: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkParams {
    pub latency_ms: f64,
    /// Extra uniformly distributed delay in `[0, jitter_ms]`.
    pub jitter_ms: f64,
    pub loss: f64,
    /// 0 means unlimited.
    pub bandwidth_mbps: u64,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            latency_ms: 1.0,
            jitter_ms: 0.0,
            loss: 0.0,
            bandwidth_mbps: 1000,
        }
    }
}

impl LinkParams {
    pub fn latency_us(&self) -> SimTime {
        (self.latency_ms * MS as f64).round().max(0.0) as SimTime
    }

    pub fn jitter_us(&self) -> SimTime {
        (self.jitter_ms * MS as f64).round().max(0.0) as SimTime
    }

    /// Time to clock `bytes` onto the link.
    pub fn serialization_us(&self, bytes: usize) -> SimTime {
        if self.bandwidth_mbps == 0 {
            0
        } else {
            (bytes as u64 * 8).div_ceil(self.bandwidth_mbps)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Segment {
    pub id: SegmentId,
    pub name: String,
    pub kind: SegmentKind,
    pub params: LinkParams,
    pub ifaces: Vec<IfaceId>,
}

#[derive(Debug, Clone)]
pub struct Iface {
    pub id: IfaceId,
    pub node: NodeId,
    pub segment: SegmentId,
    pub name: String,
    pub mac: MacAddr,
    pub ip: Ipv4Addr,
    /// Receives unicast traffic on the segment that no other interface claims.
    pub forwarder: bool,
    pub attached: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpExchange {
    /// Request path, carried alongside the response like a stream would.
    pub path: String,
    pub response: HttpResponse,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    Udp(Vec<u8>),
    /// Carried over the reliable stream abstraction: never lost.
    HttpRequest(HttpRequest),
    HttpResponse(HttpExchange),
}

impl Body {
    pub fn wire_len(&self) -> usize {
        match self {
            Body::Udp(b) => b.len() + 28,
            Body::HttpRequest(r) => r.wire_len() + 40,
            Body::HttpResponse(x) => x.response.wire_len() + 40,
        }
    }

    pub fn is_stream(&self) -> bool {
        !matches!(self, Body::Udp(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub src: SocketAddrV4,
    pub dst: SocketAddrV4,
    pub body: Body,
    pub ttl: u8,
    /// Harness bookkeeping: the node that first sent this packet. Survives
    /// NAT and bridging; nodes must not base behaviour on it.
    pub origin: Option<NodeId>,
}

pub const DEFAULT_TTL: u8 = 16;

impl Packet {
    pub fn udp(src: SocketAddrV4, dst: SocketAddrV4, payload: Vec<u8>) -> Self {
        Self {
            src,
            dst,
            body: Body::Udp(payload),
            ttl: DEFAULT_TTL,
            origin: None,
        }
    }

    pub fn http_request(src: SocketAddrV4, dst: SocketAddrV4, req: HttpRequest) -> Self {
        Self {
            src,
            dst,
            body: Body::HttpRequest(req),
            ttl: DEFAULT_TTL,
            origin: None,
        }
    }

    pub fn http_response(
        src: SocketAddrV4,
        dst: SocketAddrV4,
        path: String,
        response: HttpResponse,
    ) -> Self {
        Self {
            src,
            dst,
            body: Body::HttpResponse(HttpExchange { path, response }),
            ttl: DEFAULT_TTL,
            origin: None,
        }
    }

    pub fn udp_payload(&self) -> Option<&[u8]> {
        match &self.body {
            Body::Udp(b) => Some(b),
            _ => None,
        }
    }

    pub fn is_broadcast(&self) -> bool {
        *self.dst.ip() == BROADCAST
    }

    /// Protocol label from well-known ports.
    pub fn protocol(&self) -> &'static str {
        match &self.body {
            Body::HttpRequest(_) | Body::HttpResponse(_) => "http",
            Body::Udp(_) => {
                let ports = [self.src.port(), self.dst.port()];
                if ports.contains(&67) || ports.contains(&68) {
                    "dhcp"
                } else if ports.contains(&53) {
                    "dns"
                } else if ports.contains(&69) {
                    "tftp"
                } else {
                    "udp"
                }
            }
        }
    }
}
