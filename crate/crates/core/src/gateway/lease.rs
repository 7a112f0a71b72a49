use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use crate::codec::MacAddr;

use super::config::GatewayConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lease {
    pub ip: Ipv4Addr,
    pub expires_at_ms: u64,
}

/// MAC → lease map for the standalone DHCP server.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LeaseTable {
    leases: BTreeMap<MacAddr, Lease>,
}

impl LeaseTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, mac: &MacAddr, now_ms: u64) -> Option<Lease> {
        self.leases
            .get(mac)
            .copied()
            .filter(|l| l.expires_at_ms > now_ms)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MacAddr, &Lease)> {
        self.leases.iter()
    }

    pub fn len(&self) -> usize {
        self.leases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leases.is_empty()
    }

    fn holder_of(&self, ip: Ipv4Addr, now_ms: u64) -> Option<MacAddr> {
        self.leases
            .iter()
            .find(|(_, l)| l.ip == ip && l.expires_at_ms > now_ms)
            .map(|(m, _)| *m)
    }

    /// Picks an address for `mac`: its unexpired lease if any, else the
    /// lowest free pool address. Records the lease.
    pub fn allocate(&mut self, mac: MacAddr, cfg: &GatewayConfig, now_ms: u64) -> Option<Ipv4Addr> {
        let ttl_ms = u64::from(cfg.lease_ttl_secs) * 1000;
        if let Some(lease) = self.get(&mac, now_ms) {
            if cfg.pool_contains(lease.ip) {
                self.leases.insert(
                    mac,
                    Lease {
                        ip: lease.ip,
                        expires_at_ms: now_ms + ttl_ms,
                    },
                );
                return Some(lease.ip);
            }
        }
        let start = u32::from(cfg.lease_pool_start);
        let end = u32::from(cfg.lease_pool_end);
        let ip = (start..=end)
            .map(Ipv4Addr::from)
            .filter(|ip| cfg.pool_contains(*ip))
            .find(|ip| self.holder_of(*ip, now_ms).is_none())?;
        self.leases.insert(
            mac,
            Lease {
                ip,
                expires_at_ms: now_ms + ttl_ms,
            },
        );
        Some(ip)
    }

    /// Confirms `ip` for `mac` if it is in the pool and not held by another
    /// client.
    pub fn confirm(&mut self, mac: MacAddr, ip: Ipv4Addr, cfg: &GatewayConfig, now_ms: u64) -> bool {
        if !cfg.pool_contains(ip) {
            return false;
        }
        match self.holder_of(ip, now_ms) {
            Some(holder) if holder != mac => false,
            _ => {
                self.leases.insert(
                    mac,
                    Lease {
                        ip,
                        expires_at_ms: now_ms + u64::from(cfg.lease_ttl_secs) * 1000,
                    },
                );
                true
            }
        }
    }

    pub fn release(&mut self, mac: &MacAddr) {
        self.leases.remove(mac);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mac(n: u8) -> MacAddr {
        MacAddr([0x52, 0x54, 0, 0, 0, n])
    }

    #[test]
    fn expired_lease_is_reusable() {
        let cfg = GatewayConfig {
            lease_pool_start: Ipv4Addr::new(192, 168, 77, 100),
            lease_pool_end: Ipv4Addr::new(192, 168, 77, 100),
            lease_ttl_secs: 10,
            ..GatewayConfig::default()
        };
        let mut t = LeaseTable::new();
        assert_eq!(t.allocate(mac(1), &cfg, 0), Some(Ipv4Addr::new(192, 168, 77, 100)));
        assert_eq!(t.allocate(mac(2), &cfg, 5_000), None);
        assert_eq!(
            t.allocate(mac(2), &cfg, 10_001),
            Some(Ipv4Addr::new(192, 168, 77, 100))
        );
    }

    #[test]
    fn confirm_refuses_foreign_address() {
        let cfg = GatewayConfig::default();
        let mut t = LeaseTable::new();
        let ip = t.allocate(mac(1), &cfg, 0).unwrap();
        assert!(!t.confirm(mac(2), ip, &cfg, 0));
        assert!(t.confirm(mac(1), ip, &cfg, 0));
        assert!(!t.confirm(mac(1), Ipv4Addr::new(10, 0, 0, 1), &cfg, 0));
    }
}
