//! Wire codecs for the three protocols the gateway speaks.

pub mod dhcp;
pub mod dns;
pub mod tftp;

pub use dhcp::{decode_dhcp, encode_dhcp, DhcpError, DhcpMessage, DhcpOption, MacAddr, MessageType, Op};
pub use dns::{decode_dns_answer, decode_dns_query, encode_dns_answer, encode_dns_query, ARecord, DnsAnswer, DnsError, DnsQuery};
pub use tftp::{decode_tftp, encode_tftp, TftpError, TftpPacket};
