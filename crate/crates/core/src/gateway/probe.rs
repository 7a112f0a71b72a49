//! Upstream DHCP discovery that decides between standalone and proxy mode.

use std::net::Ipv4Addr;

use crate::codec::dhcp::{
    DhcpMessage, MacAddr, MessageType, Op, FLAG_BROADCAST, OPT_SERVER_ID,
};

use super::config::GatewayConfig;
use super::GatewayMode;

/// Probe state: `probe_retries` DISCOVERs, each followed by a
/// `probe_timeout_ms` wait.
#[derive(Debug, Clone)]
pub struct UpstreamProbe {
    mac: MacAddr,
    xid: u32,
    attempt: u32,
    retries: u32,
    timeout_ms: u64,
}

pub enum ProbeStep {
    /// Broadcast this DISCOVER and wait `timeout_ms` for a reply.
    Send { discover: DhcpMessage, timeout_ms: u64 },
    Done(GatewayMode),
}

impl UpstreamProbe {
    pub fn new(cfg: &GatewayConfig, mac: MacAddr, xid: u32) -> Self {
        Self {
            mac,
            xid,
            attempt: 0,
            retries: cfg.probe_retries,
            timeout_ms: cfg.probe_timeout_ms,
        }
    }

    pub fn transaction_id(&self) -> u32 {
        self.xid
    }

    pub fn attempts(&self) -> u32 {
        self.attempt
    }

    /// First step, or the next one after a timeout.
    pub fn next_step(&mut self) -> ProbeStep {
        if self.attempt >= self.retries {
            return ProbeStep::Done(GatewayMode::Standalone);
        }
        self.attempt += 1;
        let mut discover =
            DhcpMessage::new(Op::BootRequest, self.xid, self.mac, MessageType::Discover);
        discover.flags = FLAG_BROADCAST;
        discover.secs = (self.attempt - 1) as u16;
        ProbeStep::Send {
            discover,
            timeout_ms: self.timeout_ms,
        }
    }

    /// Inspects a reply received while waiting. Any OFFER for our
    /// transaction means an upstream DHCP server exists.
    pub fn on_reply(&self, msg: &DhcpMessage) -> Option<GatewayMode> {
        if msg.op != Op::BootReply
            || msg.transaction_id != self.xid
            || msg.client_mac != self.mac
            || msg.message_type() != Some(MessageType::Offer)
        {
            return None;
        }
        let server = msg
            .option_ip(OPT_SERVER_ID)
            .filter(|ip| !ip.is_unspecified())
            .unwrap_or(msg.server_ip);
        Some(GatewayMode::Proxy {
            upstream_server: server,
        })
    }
}

/// A blocking upstream link used by [`probe_upstream`].
pub trait ProbeLink {
    fn broadcast(&mut self, msg: &DhcpMessage);
    /// Waits up to `timeout_ms` for a DHCP reply; `None` on timeout.
    fn recv(&mut self, timeout_ms: u64) -> Option<DhcpMessage>;
}

/// Runs the probe to completion over `link`. With no upstream link at all
/// the result is immediately `Standalone`.
pub fn probe_upstream(
    link: Option<&mut dyn ProbeLink>,
    cfg: &GatewayConfig,
    mac: MacAddr,
    xid: u32,
) -> GatewayMode {
    let Some(link) = link else {
        return GatewayMode::Standalone;
    };
    let mut probe = UpstreamProbe::new(cfg, mac, xid);
    loop {
        match probe.next_step() {
            ProbeStep::Done(mode) => return mode,
            ProbeStep::Send {
                discover,
                timeout_ms,
            } => {
                link.broadcast(&discover);
                // Unrelated replies do not extend the window.
                let mut remaining = timeout_ms;
                while remaining > 0 {
                    let Some(reply) = link.recv(remaining) else {
                        break;
                    };
                    if let Some(mode) = probe.on_reply(&reply) {
                        return mode;
                    }
                    remaining = remaining.saturating_sub(timeout_ms / 4 + 1);
                }
            }
        }
    }
}

impl GatewayMode {
    pub fn probe_result(&self) -> Option<Ipv4Addr> {
        match self {
            GatewayMode::Standalone => None,
            GatewayMode::Proxy { upstream_server } => Some(*upstream_server),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct FakeLink {
        sent: usize,
        answer_on: Option<usize>,
    }

    impl ProbeLink for FakeLink {
        fn broadcast(&mut self, _msg: &DhcpMessage) {
            self.sent += 1;
        }

        fn recv(&mut self, _timeout_ms: u64) -> Option<DhcpMessage> {
            if Some(self.sent) != self.answer_on {
                return None;
            }
            let mut offer = DhcpMessage::new(
                Op::BootReply,
                42,
                MacAddr([2, 0, 0, 0, 0, 1]),
                MessageType::Offer,
            );
            offer.your_ip = Ipv4Addr::new(10, 0, 2, 50);
            offer
                .set_option(OPT_SERVER_ID, vec![10, 0, 2, 1])
                .unwrap();
            Some(offer)
        }
    }

    const MAC: MacAddr = MacAddr([2, 0, 0, 0, 0, 1]);

    #[test]
    fn upstream_server_found() {
        let mut link = FakeLink { sent: 0, answer_on: Some(1) };
        let mode = probe_upstream(Some(&mut link), &GatewayConfig::default(), MAC, 42);
        assert_eq!(
            mode,
            GatewayMode::Proxy {
                upstream_server: Ipv4Addr::new(10, 0, 2, 1)
            }
        );
        assert_eq!(mode.probe_result(), Some(Ipv4Addr::new(10, 0, 2, 1)));
    }

    #[test]
    fn late_answer_on_final_attempt() {
        let mut link = FakeLink { sent: 0, answer_on: Some(3) };
        let mode = probe_upstream(Some(&mut link), &GatewayConfig::default(), MAC, 42);
        assert!(matches!(mode, GatewayMode::Proxy { .. }));
    }

    #[test]
    fn silent_upstream_is_standalone() {
        let mut link = FakeLink { sent: 0, answer_on: None };
        let mode = probe_upstream(Some(&mut link), &GatewayConfig::default(), MAC, 42);
        assert_eq!(mode, GatewayMode::Standalone);
        assert_eq!(link.sent, 3);
    }

    #[test]
    fn no_link_is_standalone() {
        assert_eq!(
            probe_upstream(None, &GatewayConfig::default(), MAC, 1),
            GatewayMode::Standalone
        );
    }

    #[test]
    fn foreign_transaction_ignored() {
        let probe = UpstreamProbe::new(&GatewayConfig::default(), MAC, 7);
        let offer = DhcpMessage::new(Op::BootReply, 8, MAC, MessageType::Offer);
        assert!(probe.on_reply(&offer).is_none());
    }
}
