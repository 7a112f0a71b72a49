//! Standalone DHCP server and ProxyDHCP responder.

use std::net::Ipv4Addr;

use thiserror::Error;

use crate::codec::dhcp::{
    self, DhcpMessage, MessageType, Op, OPT_BOOTFILE, OPT_CLIENT_ARCH, OPT_DNS, OPT_LEASE_TIME, OPT_REQUESTED_IP,
    OPT_ROUTER, OPT_SERVER_ID, OPT_SUBNET_MASK, OPT_TFTP_SERVER, OPT_VENDOR_CLASS, PXE_VENDOR_CLASS,
};

use super::config::GatewayConfig;
use super::lease::LeaseTable;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DhcpServeError {
    #[error("lease pool exhausted")]
    PoolExhausted,
    #[error("not a PXE client")]
    NotPxeClient,
}

/// Writes the boot steering every gateway OFFER/ACK carries: next-server
/// and boot file, both in the header and as options 66/67.
fn steer(reply: &mut DhcpMessage, cfg: &GatewayConfig) {
    reply.server_ip = cfg.gateway_ip;
    reply.boot_file = cfg.boot_filename.clone();
    set(reply, OPT_SERVER_ID, cfg.gateway_ip.octets().to_vec());
    set(reply, OPT_TFTP_SERVER, cfg.gateway_ip.to_string().into_bytes());
    set(reply, OPT_BOOTFILE, cfg.boot_filename.clone().into_bytes());
}

fn set(reply: &mut DhcpMessage, code: u8, payload: Vec<u8>) {
    reply
        .set_option(code, payload)
        .expect("gateway never sets reserved option codes");
}

fn addressed_reply(
    msg: &DhcpMessage,
    kind: MessageType,
    ip: Ipv4Addr,
    cfg: &GatewayConfig,
) -> DhcpMessage {
    let mut reply = DhcpMessage::reply_to(msg, kind);
    reply.your_ip = ip;
    steer(&mut reply, cfg);
    set(&mut reply, OPT_LEASE_TIME, cfg.lease_ttl_secs.to_be_bytes().to_vec());
    set(&mut reply, OPT_SUBNET_MASK, cfg.subnet_mask().octets().to_vec());
    set(&mut reply, OPT_ROUTER, cfg.gateway_ip.octets().to_vec());
    set(&mut reply, OPT_DNS, cfg.gateway_ip.octets().to_vec());
    if msg.is_pxe_client() {
        set(&mut reply, OPT_VENDOR_CLASS, PXE_VENDOR_CLASS.as_bytes().to_vec());
    }
    reply
}

/// Standalone mode: allocates addresses from the pool and points clients at
/// the gateway for DNS, TFTP and the boot file.
pub fn handle_dhcp_standalone(
    msg: &DhcpMessage,
    leases: &mut LeaseTable,
    cfg: &GatewayConfig,
    now_ms: u64,
) -> Result<Option<DhcpMessage>, DhcpServeError> {
    if msg.op != Op::BootRequest {
        return Ok(None);
    }
    match msg.message_type() {
        Some(MessageType::Discover) => {
            let ip = leases
                .allocate(msg.client_mac, cfg, now_ms)
                .ok_or(DhcpServeError::PoolExhausted)?;
            Ok(Some(addressed_reply(msg, MessageType::Offer, ip, cfg)))
        }
        Some(MessageType::Request) => {
            if let Some(server) = msg.option_ip(OPT_SERVER_ID) {
                if server != cfg.gateway_ip {
                    // The client took another server's offer.
                    leases.release(&msg.client_mac);
                    return Ok(None);
                }
            }
            let requested = msg
                .option_ip(OPT_REQUESTED_IP)
                .filter(|ip| !ip.is_unspecified())
                .unwrap_or(msg.client_ip);
            if leases.confirm(msg.client_mac, requested, cfg, now_ms) {
                Ok(Some(addressed_reply(msg, MessageType::Ack, requested, cfg)))
            } else {
                let mut nak = DhcpMessage::reply_to(msg, MessageType::Nak);
                set(&mut nak, OPT_SERVER_ID, cfg.gateway_ip.octets().to_vec());
                Ok(Some(nak))
            }
        }
        Some(MessageType::Release) => {
            leases.release(&msg.client_mac);
            Ok(None)
        }
        _ => Ok(None),
    }
}

/// Proxy mode: answers PXE DISCOVERs with an addressless OFFER carrying
/// only boot steering. DNS is left to the upstream server.
pub fn handle_dhcp_proxy(
    msg: &DhcpMessage,
    cfg: &GatewayConfig,
) -> Result<Option<DhcpMessage>, DhcpServeError> {
    if msg.op != Op::BootRequest {
        return Ok(None);
    }
    if !msg.is_pxe_client() {
        return Err(DhcpServeError::NotPxeClient);
    }
    if msg.message_type() != Some(MessageType::Discover) {
        return Ok(None);
    }
    let mut offer = DhcpMessage::reply_to(msg, MessageType::Offer);
    offer.your_ip = Ipv4Addr::UNSPECIFIED;
    steer(&mut offer, cfg);
    set(&mut offer, OPT_VENDOR_CLASS, PXE_VENDOR_CLASS.as_bytes().to_vec());
    if let Some(arch) = msg.option(OPT_CLIENT_ARCH) {
        set(&mut offer, OPT_CLIENT_ARCH, arch.to_vec());
    }
    Ok(Some(offer))
}

/// True when a server reply tries to steer the client's boot (next-server,
/// boot file, or a PXE vendor class).
pub fn carries_boot_steering(msg: &DhcpMessage) -> bool {
    msg.op == Op::BootReply
        && (!msg.server_ip.is_unspecified()
            || !msg.boot_file.is_empty()
            || msg.option(dhcp::OPT_TFTP_SERVER).is_some()
            || msg.option(OPT_BOOTFILE).is_some()
            || msg.is_pxe_client())
}
