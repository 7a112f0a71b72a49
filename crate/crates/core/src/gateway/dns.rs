use crate::codec::dns::{
    ARecord, DnsAnswer, DnsQuery, CLASS_IN, RCODE_NOT_IMPLEMENTED, RCODE_NO_ERROR, TYPE_A,
};

use super::config::GatewayConfig;

/// Captive resolver: every A/IN query resolves to the gateway itself, with
/// no upstream recursion. Other query types get an empty NotImplemented
/// response.
pub fn answer_dns(q: &DnsQuery, cfg: &GatewayConfig) -> DnsAnswer {
    if q.qtype == TYPE_A && q.qclass == CLASS_IN {
        DnsAnswer::to_query(
            q,
            RCODE_NO_ERROR,
            vec![ARecord {
                name: q.name.clone(),
                ttl: cfg.dns_ttl_secs,
                addr: cfg.gateway_ip,
            }],
        )
    } else {
        DnsAnswer::to_query(q, RCODE_NOT_IMPLEMENTED, Vec::new())
    }
}
