//! Endpoint-independent NAT between an inside and an outside segment.

use std::collections::BTreeMap;
use std::net::{Ipv4Addr, SocketAddrV4};

use super::clock::SimTime;

pub const FIRST_EXTERNAL_PORT: u16 = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Mapping {
    external_port: u16,
    last_used: SimTime,
}

#[derive(Debug, Clone)]
pub struct NatBoundary {
    pub external_ip: Ipv4Addr,
    idle_timeout: SimTime,
    outbound: BTreeMap<SocketAddrV4, Mapping>,
    inbound: BTreeMap<u16, SocketAddrV4>,
    next_port: u16,
}

impl NatBoundary {
    pub fn new(external_ip: Ipv4Addr, idle_timeout: SimTime) -> Self {
        Self {
            external_ip,
            idle_timeout,
            outbound: BTreeMap::new(),
            inbound: BTreeMap::new(),
            next_port: FIRST_EXTERNAL_PORT,
        }
    }

    pub fn active_mappings(&self) -> usize {
        self.outbound.len()
    }

    fn expire(&mut self, now: SimTime) {
        let timeout = self.idle_timeout;
        let stale: Vec<SocketAddrV4> = self
            .outbound
            .iter()
            .filter(|(_, m)| now.saturating_sub(m.last_used) > timeout)
            .map(|(k, _)| *k)
            .collect();
        for inside in stale {
            if let Some(m) = self.outbound.remove(&inside) {
                self.inbound.remove(&m.external_port);
            }
        }
    }

    fn allocate_port(&mut self) -> Option<u16> {
        let span = u32::from(u16::MAX - FIRST_EXTERNAL_PORT) + 1;
        for _ in 0..span {
            let port = self.next_port;
            self.next_port = if port == u16::MAX {
                FIRST_EXTERNAL_PORT
            } else {
                port + 1
            };
            if !self.inbound.contains_key(&port) {
                return Some(port);
            }
        }
        None
    }

    /// Rewrites an outbound source address, creating or refreshing the
    /// mapping. `None` when the port space is exhausted.
    pub fn outbound(&mut self, inside: SocketAddrV4, now: SimTime) -> Option<SocketAddrV4> {
        self.expire(now);
        let port = match self.outbound.get_mut(&inside) {
            Some(m) => {
                m.last_used = now;
                m.external_port
            }
            None => {
                let port = self.allocate_port()?;
                self.outbound.insert(
                    inside,
                    Mapping {
                        external_port: port,
                        last_used: now,
                    },
                );
                self.inbound.insert(port, inside);
                port
            }
        };
        Some(SocketAddrV4::new(self.external_ip, port))
    }

    /// Maps an inbound destination back inside; unsolicited traffic yields `None`.
    pub fn inbound(&mut self, external: SocketAddrV4, now: SimTime) -> Option<SocketAddrV4> {
        self.expire(now);
        if *external.ip() != self.external_ip {
            return None;
        }
        let inside = *self.inbound.get(&external.port())?;
        if let Some(m) = self.outbound.get_mut(&inside) {
            m.last_used = now;
        }
        Some(inside)
    }
}
