//! DHCP offer selection and merging.
//!
//! Policy: a complete offer (address and boot file from one server) wins,
//! earliest first. Otherwise the earliest addressful offer is merged with
//! the earliest boot-file-bearing PXE offer, taking the address from the
//! former and the boot steering from the latter.

use std::net::Ipv4Addr;

use thiserror::Error;

use crate::codec::dhcp::{DhcpMessage, OPT_BOOTFILE, OPT_SERVER_ID, OPT_TFTP_SERVER};

use super::session::IpConfig;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OfferError {
    #[error("no offers")]
    NoOffers,
    #[error("no offer carried a boot file")]
    NoUsableOffer,
    #[error("no offer carried an address")]
    NoAddress,
}

fn has_address(m: &DhcpMessage) -> bool {
    !m.your_ip.is_unspecified()
}

fn has_boot(m: &DhcpMessage) -> bool {
    m.boot_file_name().is_some() && m.next_server().is_some()
}

pub fn select_offer(offers: &[DhcpMessage]) -> Result<DhcpMessage, OfferError> {
    if offers.is_empty() {
        return Err(OfferError::NoOffers);
    }
    if let Some(complete) = offers.iter().find(|m| has_address(m) && has_boot(m)) {
        return Ok(complete.clone());
    }
    let boot = offers
        .iter()
        .find(|m| has_boot(m) && m.is_pxe_client())
        .ok_or(OfferError::NoUsableOffer)?;
    let addr = offers.iter().find(|m| has_address(m)).ok_or(OfferError::NoAddress)?;
    let mut merged = addr.clone();
    merged.server_ip = boot.next_server().expect("checked");
    merged.boot_file = boot.boot_file_name().expect("checked");
    if let Some(v) = boot.option(OPT_TFTP_SERVER) {
        merged.set_option(OPT_TFTP_SERVER, v.to_vec()).expect("valid option");
    }
    if let Some(v) = boot.option(OPT_BOOTFILE) {
        merged.set_option(OPT_BOOTFILE, v.to_vec()).expect("valid option");
    }
    Ok(merged)
}

impl IpConfig {
    /// Extracts the configuration from a selected (possibly merged) offer.
    pub fn from_offer(m: &DhcpMessage) -> Option<IpConfig> {
        if !has_address(m) || !has_boot(m) {
            return None;
        }
        Some(IpConfig {
            ip: m.your_ip,
            netmask: m.option_ip(crate::codec::dhcp::OPT_SUBNET_MASK),
            router: m.option_ip(crate::codec::dhcp::OPT_ROUTER),
            dns: m.dns_servers(),
            next_server: m.next_server()?,
            boot_file: m.boot_file_name()?,
            address_server: m.option_ip(OPT_SERVER_ID).unwrap_or(Ipv4Addr::UNSPECIFIED),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::dhcp::{MacAddr, MessageType, Op, OPT_DNS, OPT_VENDOR_CLASS};

    fn offer(server: [u8; 4]) -> DhcpMessage {
        let mut m = DhcpMessage::new(Op::BootReply, 7, MacAddr([2; 6]), MessageType::Offer);
        m.set_option(OPT_SERVER_ID, server.to_vec()).unwrap();
        m
    }

    fn upstream() -> DhcpMessage {
        let mut m = offer([10, 0, 2, 1]);
        m.your_ip = Ipv4Addr::new(10, 0, 2, 100);
        m.set_option(OPT_DNS, vec![10, 0, 2, 1]).unwrap();
        m
    }

    fn proxy() -> DhcpMessage {
        let mut m = offer([192, 168, 77, 1]);
        m.server_ip = Ipv4Addr::new(192, 168, 77, 1);
        m.boot_file = "boot.ipxe".into();
        m.set_option(OPT_VENDOR_CLASS, "PXEClient").unwrap();
        m
    }

    #[test]
    fn merges_upstream_address_with_proxy_boot() {
        let merged = select_offer(&[upstream(), proxy()]).unwrap();
        let cfg = IpConfig::from_offer(&merged).unwrap();
        assert_eq!(cfg.ip, Ipv4Addr::new(10, 0, 2, 100));
        assert_eq!(cfg.next_server, Ipv4Addr::new(192, 168, 77, 1));
        assert_eq!(cfg.boot_file, "boot.ipxe");
        assert_eq!(cfg.dns, vec![Ipv4Addr::new(10, 0, 2, 1)]);
        assert_eq!(cfg.address_server, Ipv4Addr::new(10, 0, 2, 1));
    }

    #[test]
    fn complete_offer_is_itself() {
        let mut full = proxy();
        full.your_ip = Ipv4Addr::new(192, 168, 77, 100);
        assert_eq!(select_offer(&[full.clone()]).unwrap(), full);
    }

    #[test]
    fn complete_offer_beats_earlier_proxy_offer() {
        let mut rogue = proxy();
        rogue.server_ip = Ipv4Addr::new(192, 168, 77, 66);
        rogue.boot_file = "evil.efi".into();
        let mut full = proxy();
        full.your_ip = Ipv4Addr::new(192, 168, 77, 100);
        assert_eq!(select_offer(&[rogue, full.clone()]).unwrap(), full);
    }

    #[test]
    fn no_boot_file_is_unusable() {
        assert_eq!(select_offer(&[upstream()]), Err(OfferError::NoUsableOffer));
        assert_eq!(select_offer(&[]), Err(OfferError::NoOffers));
        assert_eq!(select_offer(&[proxy()]), Err(OfferError::NoAddress));
    }
}
