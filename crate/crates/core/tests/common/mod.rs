//! Shared generators and fuzzing helpers for the integration tests.
#![allow(dead_code)]

use std::net::Ipv4Addr;

use proptest::prelude::*;
use rand::{Rng, RngCore};
use sdb::codec::dhcp::{OPT_END, OPT_MESSAGE_TYPE, OPT_PAD};
use sdb::codec::dns::{CLASS_IN, RCODE_NAME_ERROR, RCODE_NO_ERROR, TYPE_A, TYPE_AAAA};
use sdb::codec::{ARecord, DhcpMessage, DnsAnswer, DnsQuery, MacAddr, MessageType, Op, TftpPacket};
use sdb::script::Statement;

pub fn ipv4() -> impl Strategy<Value = Ipv4Addr> {
    any::<u32>().prop_map(Ipv4Addr::from)
}

pub fn mac() -> impl Strategy<Value = MacAddr> {
    any::<[u8; 6]>().prop_map(MacAddr)
}

fn message_type() -> impl Strategy<Value = MessageType> {
    (1u8..=8).prop_map(|c| MessageType::from_code(c).unwrap())
}

/// NUL-free text that fits a fixed-width BOOTP field of `max` bytes.
fn field_text(max: usize) -> impl Strategy<Value = String> {
    proptest::string::string_regex(&format!("[ -~]{{0,{}}}", max - 1)).unwrap()
}

pub fn dhcp_message() -> impl Strategy<Value = DhcpMessage> {
    let header = (
        prop_oneof![Just(Op::BootRequest), Just(Op::BootReply)],
        any::<u8>(),
        any::<u32>(),
        any::<u16>(),
        any::<u16>(),
        [ipv4(), ipv4(), ipv4(), ipv4()],
        mac(),
        message_type(),
    );
    let body = (
        field_text(64),
        field_text(128),
        proptest::collection::btree_map(
            (1u8..=254).prop_filter("message type is set separately", |c| *c != OPT_MESSAGE_TYPE),
            proptest::collection::vec(any::<u8>(), 0..=255),
            0..12,
        ),
    );
    (header, body).prop_map(|((op, hops, xid, secs, flags, ips, mac, kind), (sname, file, opts))| {
        let mut m = DhcpMessage::new(op, xid, mac, kind);
        m.hops = hops;
        m.secs = secs;
        m.flags = flags;
        [m.client_ip, m.your_ip, m.server_ip, m.gateway_ip] = ips;
        m.server_name = sname;
        m.boot_file = file;
        for (code, payload) in opts {
            assert!(code != OPT_PAD && code != OPT_END);
            m.set_option(code, payload).unwrap();
        }
        m
    })
}

fn tftp_text() -> impl Strategy<Value = String> {
    "[^\u{0}]{0,24}"
}

fn tftp_pairs() -> impl Strategy<Value = Vec<(String, String)>> {
    proptest::collection::vec((tftp_text(), tftp_text()), 0..5)
}

pub fn tftp_packet() -> impl Strategy<Value = TftpPacket> {
    prop_oneof![
        (tftp_text(), tftp_text(), tftp_pairs()).prop_map(|(filename, mode, options)| {
            TftpPacket::ReadRequest {
                filename,
                mode,
                options,
            }
        }),
        (any::<u16>(), proptest::collection::vec(any::<u8>(), 0..=1428))
            .prop_map(|(block, payload)| TftpPacket::Data { block, payload }),
        any::<u16>().prop_map(|block| TftpPacket::Ack { block }),
        (any::<u16>(), tftp_text()).prop_map(|(code, message)| TftpPacket::Error { code, message }),
        tftp_pairs().prop_map(|options| TftpPacket::OptionAck { options }),
    ]
}

pub fn dns_name() -> impl Strategy<Value = String> {
    proptest::collection::vec("[a-z0-9][a-z0-9-]{0,20}", 0..6).prop_map(|labels| labels.join("."))
}

pub fn dns_query() -> impl Strategy<Value = DnsQuery> {
    (
        any::<u16>(),
        any::<bool>(),
        dns_name(),
        prop_oneof![Just(TYPE_A), Just(TYPE_AAAA), any::<u16>()],
        prop_oneof![Just(CLASS_IN), any::<u16>()],
    )
        .prop_map(|(id, rd, name, qtype, qclass)| DnsQuery {
            id,
            recursion_desired: rd,
            name,
            qtype,
            qclass,
        })
}

pub fn dns_answer() -> impl Strategy<Value = DnsAnswer> {
    (
        dns_query(),
        prop_oneof![Just(RCODE_NO_ERROR), Just(RCODE_NAME_ERROR), 0u8..16],
        any::<bool>(),
        proptest::collection::vec((dns_name(), any::<u32>(), ipv4()), 0..4),
    )
        .prop_map(|(question, rcode, authoritative, recs)| DnsAnswer {
            id: question.id,
            rcode,
            authoritative,
            records: recs
                .into_iter()
                .map(|(name, ttl, addr)| ARecord { name, ttl, addr })
                .collect(),
            question,
        })
}

fn word() -> impl Strategy<Value = String> {
    "[A-Za-z0-9:/._?=&%${}-]{1,30}"
}

fn var() -> impl Strategy<Value = String> {
    "[A-Za-z0-9_][A-Za-z0-9_./-]{0,12}"
}

fn line_text() -> impl Strategy<Value = String> {
    prop_oneof![
        Just(String::new()),
        "[ -~]{0,40}".prop_map(|s| s.trim().to_string()),
        "[a-z]{1,8} \\$\\{[a-z]{1,8}\\} [a-z]{0,8}".prop_map(|s| s.trim().to_string()),
        "\\PC{0,20}".prop_map(|s| s.trim().to_string()),
    ]
}

/// Arbitrary statements; some are invalid, including misplaced `boot`.
pub fn statement() -> impl Strategy<Value = Statement> {
    prop_oneof![
        line_text().prop_map(Statement::Echo),
        (var(), line_text()).prop_map(|(var, value)| Statement::Set { var, value }),
        Just(Statement::Login),
        (var(), line_text(), any::<bool>()).prop_map(|(var, message, masked)| Statement::Prompt {
            var,
            message,
            masked
        }),
        word().prop_map(Statement::Chain),
        (word(), line_text()).prop_map(|(url, params)| Statement::Kernel { url, params }),
        word().prop_map(Statement::Initrd),
        Just(Statement::Boot),
        line_text().prop_map(Statement::MenuStart),
        (word(), line_text()).prop_map(|(key, label)| Statement::MenuItem { key, label }),
        var().prop_map(Statement::Choose),
    ]
}

/// Statement lists that usually form a valid script: any body, then an
/// optional kernel and boot.
pub fn statements() -> impl Strategy<Value = Vec<Statement>> {
    (
        proptest::collection::vec(statement().prop_filter("no boot in body", |s| *s != Statement::Boot), 0..12),
        proptest::option::of((word(), line_text())),
    )
        .prop_map(|(mut body, tail)| {
            if let Some((url, params)) = tail {
                body.push(Statement::Kernel { url, params });
                body.push(Statement::Boot);
            }
            body
        })
}

/// Mutates a valid encoding: bit flips, byte overwrites, truncation,
/// extension, or a fully random buffer.
pub fn mutate(seed: &[u8], rng: &mut impl RngCore) -> Vec<u8> {
    match rng.random_range(0..6) {
        0 => {
            let mut v = seed.to_vec();
            for _ in 0..rng.random_range(1..8) {
                if v.is_empty() {
                    break;
                }
                let i = rng.random_range(0..v.len());
                v[i] ^= 1 << rng.random_range(0..8);
            }
            v
        }
        1 => {
            let mut v = seed.to_vec();
            for _ in 0..rng.random_range(1..16) {
                if v.is_empty() {
                    break;
                }
                let i = rng.random_range(0..v.len());
                v[i] = rng.random();
            }
            v
        }
        2 => {
            let cut = rng.random_range(0..=seed.len());
            seed[..cut].to_vec()
        }
        3 => {
            let mut v = seed.to_vec();
            let extra = rng.random_range(1..64);
            v.extend((0..extra).map(|_| rng.random::<u8>()));
            v
        }
        4 => {
            // Keep a valid prefix and randomise the tail.
            let keep = rng.random_range(0..=seed.len());
            let mut v = seed[..keep].to_vec();
            let extra = rng.random_range(0..(seed.len() - keep + 32));
            v.extend((0..extra).map(|_| rng.random::<u8>()));
            v
        }
        _ => {
            let len = rng.random_range(0..600);
            (0..len).map(|_| rng.random::<u8>()).collect()
        }
    }
}
