mod common;

use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sdb::codec::dhcp::{OPT_REQUESTED_IP, OPT_SERVER_ID, OPT_VENDOR_CLASS};
use sdb::codec::tftp::{chunk_blocks, more_data_expected, MAX_BLOCK_SIZE};
use sdb::codec::*;
use sdb::gateway::{start_transfer, Gateway, GatewayConfig, LeaseTable};
use sdb::script::{parse_script, render_script, Script};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn dhcp_round_trip(m in common::dhcp_message()) {
        let raw = encode_dhcp(&m).unwrap();
        prop_assert!(raw.len() >= 300);
        prop_assert_eq!(decode_dhcp(&raw).unwrap(), m);
    }

    #[test]
    fn tftp_round_trip(p in common::tftp_packet()) {
        let raw = encode_tftp(&p).unwrap();
        prop_assert_eq!(decode_tftp(&raw).unwrap(), p);
    }

    #[test]
    fn dns_query_round_trip(q in common::dns_query()) {
        let raw = encode_dns_query(&q).unwrap();
        prop_assert_eq!(decode_dns_query(&raw).unwrap(), q);
    }

    #[test]
    fn dns_answer_round_trip(a in common::dns_answer()) {
        let raw = encode_dns_answer(&a).unwrap();
        prop_assert_eq!(decode_dns_answer(&raw).unwrap(), a);
    }

    #[test]
    fn valid_scripts_round_trip(stmts in common::statements()) {
        if let Ok(script) = Script::new(stmts) {
            let text = render_script(&script);
            prop_assert_eq!(parse_script(&text).unwrap(), script);
        }
    }

    #[test]
    fn decoders_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..700)) {
        let _ = decode_dhcp(&bytes);
        let _ = decode_tftp(&bytes);
        let _ = decode_dns_query(&bytes);
        let _ = decode_dns_answer(&bytes);
        let _ = String::from_utf8(bytes).map(|t| parse_script(&t));
    }

    /// Block count equals the number of DATA packets a lockstep sender
    /// emits before it sends a short block.
    #[test]
    fn tftp_block_count_matches_lockstep_sender(len in 0usize..20_000, bs in 8usize..=1428) {
        let data = vec![0xA5u8; len];
        let mut sent = 0usize;
        let mut offset = 0usize;
        loop {
            let n = bs.min(len - offset);
            sent += 1;
            offset += n;
            if n < bs {
                break;
            }
        }
        let blocks: Vec<&[u8]> = chunk_blocks(&data, bs).collect();
        prop_assert_eq!(blocks.len(), sent);
        prop_assert!(!more_data_expected(blocks.last().unwrap().len(), bs));
        prop_assert_eq!(blocks.concat(), data);
    }

    /// Allocations stay unique and inside the pool under any interleaving of
    /// DISCOVER and REQUEST from at most pool-size clients.
    #[test]
    fn lease_allocations_unique_and_in_pool(
        ops in proptest::collection::vec((0u8..16, any::<bool>(), 0u64..5_000), 1..200)
    ) {
        let cfg = GatewayConfig {
            lease_pool_start: Ipv4Addr::new(192, 168, 77, 100),
            lease_pool_end: Ipv4Addr::new(192, 168, 77, 115),
            ..GatewayConfig::default()
        };
        let gw = Gateway::new(cfg.clone());
        let mut now = 0u64;
        let mut offered = std::collections::BTreeMap::new();
        for (client, is_request, dt) in ops {
            now += dt;
            let mac = MacAddr([0x52, 0x54, 0, 0, 1, client]);
            let mut m = DhcpMessage::new(Op::BootRequest, u32::from(client), mac, MessageType::Discover);
            m.set_option(OPT_VENDOR_CLASS, "PXEClient").unwrap();
            if is_request {
                if let Some(ip) = offered.get(&client) {
                    m.set_option(53, vec![MessageType::Request as u8]).unwrap();
                    m.set_option(OPT_REQUESTED_IP, Ipv4Addr::octets(ip).to_vec()).unwrap();
                    m.set_option(OPT_SERVER_ID, cfg.gateway_ip.octets().to_vec()).unwrap();
                }
            }
            if let Some(reply) = gw.handle_dhcp_msg(&m, now) {
                if reply.message_type() == Some(MessageType::Offer) {
                    offered.insert(client, reply.your_ip);
                }
                if !reply.your_ip.is_unspecified() {
                    prop_assert!(cfg.pool_contains(reply.your_ip));
                }
            }
            let leases = gw.leases();
            let live: Vec<Ipv4Addr> = leases
                .iter()
                .filter(|(_, l)| l.expires_at_ms > now)
                .map(|(_, l)| l.ip)
                .collect();
            let unique: BTreeSet<_> = live.iter().collect();
            prop_assert_eq!(unique.len(), live.len());
            prop_assert!(live.iter().all(|ip| cfg.pool_contains(*ip)));
        }
    }

    #[test]
    fn lease_table_direct(macs in proptest::collection::vec(0u8..=255, 1..64)) {
        let cfg = GatewayConfig::default();
        let mut t = LeaseTable::new();
        let mut seen = std::collections::BTreeMap::new();
        for m in macs {
            let mac = MacAddr([2, 0, 0, 0, 0, m]);
            let ip = t.allocate(mac, &cfg, 0).unwrap();
            // Same MAC keeps its address.
            if let Some(prev) = seen.insert(m, ip) {
                prop_assert_eq!(prev, ip);
            }
        }
        let ips: BTreeSet<_> = seen.values().collect();
        prop_assert_eq!(ips.len(), seen.len());
    }
}

#[test]
fn standalone_offer_fixture() {
    let gw = Gateway::new(GatewayConfig::default());
    let mut m = DhcpMessage::new(Op::BootRequest, 0x1234_5678, MacAddr([0x52, 0x54, 0, 0x12, 0x34, 1]), MessageType::Discover);
    m.set_option(OPT_VENDOR_CLASS, "PXEClient:Arch:00000:UNDI:002001").unwrap();
    let raw = gw.handle_dhcp(&encode_dhcp(&m).unwrap(), 0).unwrap();
    assert!(raw.len() >= 300);
    assert_eq!(raw[0], 2);
    assert_eq!(&raw[4..8], &[0x12, 0x34, 0x56, 0x78]);
    assert_eq!(&raw[16..20], &[0xC0, 0xA8, 0x4D, 0x64]);
    assert_eq!(&raw[20..24], &[0xC0, 0xA8, 0x4D, 0x01]);
    assert_eq!(&raw[28..34], &[0x52, 0x54, 0x00, 0x12, 0x34, 0x01]);
    assert_eq!(&raw[236..240], &[0x63, 0x82, 0x53, 0x63]);
    // Message type OFFER is the first option.
    assert_eq!(&raw[240..243], &[53, 1, 2]);
}

#[test]
fn rrq_fixture() {
    let raw = hex::decode(include_str!("fixtures/rrq_blksize_tsize.hex").trim()).unwrap();
    let pkt = decode_tftp(&raw).unwrap();
    assert_eq!(pkt.option("blksize"), Some("1428"));
    assert_eq!(pkt.option("TSIZE"), Some("0"));
    assert_eq!(encode_tftp(&pkt).unwrap(), raw);
}

#[test]
fn dns_query_fixture() {
    // id 0xbeef, RD, boot.cloud.example A IN
    let raw = hex::decode(include_str!("fixtures/dns_query_boot_cloud_example.hex").trim()).unwrap();
    let q = decode_dns_query(&raw).unwrap();
    assert_eq!(q.name, "boot.cloud.example");
    assert_eq!(encode_dns_query(&q).unwrap(), raw);
}

#[test]
fn oack_then_blocks_cover_bootloader() {
    let cfg = GatewayConfig::default();
    let gw = Gateway::new(cfg.clone());
    let blob = gw.bootloader().to_vec();
    let rrq = TftpPacket::ReadRequest {
        filename: cfg.boot_filename.clone(),
        mode: "octet".into(),
        options: vec![("blksize".into(), "1428".into()), ("tsize".into(), "0".into())],
    };
    let (mut xfer, first) = start_transfer(&rrq, &cfg.boot_filename, gw.bootloader().into()).unwrap();
    assert_eq!(first.option("tsize"), Some(blob.len().to_string().as_str()));
    assert_eq!(xfer.block_size(), MAX_BLOCK_SIZE);
    let mut got = Vec::new();
    let mut next = xfer.on_ack(0);
    let mut ack = 0u16;
    while let Some(TftpPacket::Data { block, payload }) = next {
        assert_eq!(block, ack.wrapping_add(1));
        ack = block;
        got.extend_from_slice(&payload);
        next = xfer.on_ack(block);
    }
    assert!(xfer.is_finished());
    assert_eq!(got, blob);
    assert_eq!(usize::from(ack), blob.len() / MAX_BLOCK_SIZE + 1);
}

#[test]
fn mutation_fuzz_smoke() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let seed = encode_dhcp(&DhcpMessage::new(Op::BootRequest, 1, MacAddr([1; 6]), MessageType::Discover)).unwrap();
    for _ in 0..20_000 {
        let input = common::mutate(&seed, &mut rng);
        let _ = decode_dhcp(&input);
    }
}
