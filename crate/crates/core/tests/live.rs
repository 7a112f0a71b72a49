//! Real sockets on loopback: gateway TFTP, DNS and portal, and the cloud
//! HTTP service.

use std::net::{Ipv4Addr, SocketAddr, UdpSocket};
use std::sync::mpsc;
use std::time::Duration;

use sdb::cloud::{CloudConfig, ControlPlane, KdfParams};
use sdb::codec::{decode_dns_answer, decode_tftp, encode_dns_query, encode_tftp, DnsQuery, TftpPacket};
use sdb::gateway::{GatewayConfig, Ports};
use sdb::live::{CloudServer, GatewayServer};
use sha2::{Digest, Sha256};
use tokio::sync::oneshot;

struct Running<T> {
    info: T,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl<T> Drop for Running<T> {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Starts a gateway on loopback with ephemeral ports.
fn start_gateway() -> Running<([u16; 4], Vec<u8>, GatewayConfig)> {
    let cfg = GatewayConfig {
        ports: Ports {
            dhcp: 0,
            tftp: 0,
            dns: 0,
            http: 0,
        },
        ..GatewayConfig::default()
    };
    let (info_tx, info_rx) = mpsc::channel();
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let gw_cfg = cfg.clone();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let server = GatewayServer::bind(gw_cfg, Ipv4Addr::LOCALHOST).await.unwrap();
            info_tx
                .send((server.ports().unwrap(), server.gateway().bootloader().to_vec()))
                .unwrap();
            server
                .serve(async {
                    let _ = stop_rx.await;
                })
                .await
                .unwrap();
        });
    });
    let (ports, blob) = info_rx.recv_timeout(Duration::from_secs(30)).unwrap();
    Running {
        info: (ports, blob, cfg),
        stop: Some(stop_tx),
        thread: Some(thread),
    }
}

fn udp_client() -> UdpSocket {
    let s = UdpSocket::bind("127.0.0.1:0").unwrap();
    s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    s
}

fn recv_tftp(sock: &UdpSocket) -> (TftpPacket, SocketAddr) {
    let mut buf = [0u8; 2048];
    let (n, from) = sock.recv_from(&mut buf).unwrap();
    (decode_tftp(&buf[..n]).unwrap(), from)
}

#[test]
fn gateway_serves_bootloader_dns_and_portal() {
    let gw = start_gateway();
    let ([_, tftp, dns, http], blob, cfg) = &gw.info;

    // TFTP with blksize negotiation.
    let sock = udp_client();
    let rrq = TftpPacket::ReadRequest {
        filename: cfg.boot_filename.clone(),
        mode: "octet".into(),
        options: vec![("blksize".into(), "1428".into()), ("tsize".into(), "0".into())],
    };
    sock.send_to(&encode_tftp(&rrq).unwrap(), ("127.0.0.1", *tftp)).unwrap();
    let (oack, server) = recv_tftp(&sock);
    let TftpPacket::OptionAck { options } = oack else {
        panic!("expected OACK, got {oack:?}");
    };
    assert!(options.contains(&("blksize".into(), "1428".into())));
    assert!(options.contains(&("tsize".into(), blob.len().to_string())));
    let mut got = Vec::new();
    let mut ack = 0u16;
    loop {
        sock.send_to(&encode_tftp(&TftpPacket::Ack { block: ack }).unwrap(), server).unwrap();
        let (pkt, _) = recv_tftp(&sock);
        let TftpPacket::Data { block, payload } = pkt else {
            panic!("expected DATA, got {pkt:?}");
        };
        assert_eq!(block, ack.wrapping_add(1));
        got.extend_from_slice(&payload);
        ack = block;
        if payload.len() < 1428 {
            break;
        }
    }
    sock.send_to(&encode_tftp(&TftpPacket::Ack { block: ack }).unwrap(), server).unwrap();
    assert_eq!(Sha256::digest(&got), Sha256::digest(blob));

    // Captive DNS: no upstream configured, so the cloud name points here.
    let q = DnsQuery {
        id: 0x4242,
        recursion_desired: true,
        name: cfg.cloud_domain.clone(),
        qtype: 1,
        qclass: 1,
    };
    sock.send_to(&encode_dns_query(&q).unwrap(), ("127.0.0.1", *dns)).unwrap();
    let mut buf = [0u8; 512];
    let (n, _) = sock.recv_from(&mut buf).unwrap();
    let answer = decode_dns_answer(&buf[..n]).unwrap();
    assert_eq!(answer.id, 0x4242);
    assert_eq!(answer.records.len(), 1);
    assert_eq!(answer.records[0].addr, cfg.gateway_ip);

    // The portal answers any path with the setup form.
    let body = ureq::get(format!("http://127.0.0.1:{http}/"))
        .call()
        .unwrap()
        .body_mut()
        .read_to_string()
        .unwrap();
    assert!(body.starts_with("#!ipxe"), "{body}");
    assert!(body.contains("Connectivity setup"), "{body}");
}

fn start_cloud(dir: &std::path::Path) -> Running<(SocketAddr, std::sync::Arc<ControlPlane>)> {
    let cfg = CloudConfig {
        listen: "127.0.0.1:0".parse().unwrap(),
        store_dir: dir.to_path_buf(),
        admin_token: Some("t0ken".into()),
        kdf: KdfParams {
            m_cost_kib: 64,
            t_cost: 1,
            p_cost: 1,
        },
        ..CloudConfig::default()
    };
    let (info_tx, info_rx) = mpsc::channel();
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let server = CloudServer::bind(cfg).await.unwrap();
            info_tx.send((server.local_addr().unwrap(), server.plane())).unwrap();
            server
                .serve(async {
                    let _ = stop_rx.await;
                })
                .await
                .unwrap();
        });
    });
    let info = info_rx.recv_timeout(Duration::from_secs(30)).unwrap();
    Running {
        info,
        stop: Some(stop_tx),
        thread: Some(thread),
    }
}

fn get(url: &str) -> (u16, Vec<u8>) {
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let mut resp = agent.get(url).call().unwrap();
    (resp.status().as_u16(), resp.body_mut().read_to_vec().unwrap())
}

#[test]
fn cloud_authenticates_and_serves_files() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = start_cloud(dir.path());
    let (addr, plane) = &cloud.info;
    let os = plane
        .create_os(
            "Tiny Core Linux",
            "#!ipxe\nkernel {{base_url}}/files/{{os_id}}/vmlinuz\ninitrd {{base_url}}/files/{{os_id}}/core.gz\nboot\n",
            "quiet",
        )
        .unwrap();
    let kernel: Vec<u8> = (0..70_000u32).map(|i| (i % 251) as u8).collect();
    plane.upload_file(&os.os_id, "vmlinuz", &kernel).unwrap();
    plane.upload_file(&os.os_id, "core.gz", b"initrd").unwrap();
    plane.create_user("alice", "s3cret", &os.os_id).unwrap();

    let base = format!("http://{addr}");
    let (status, body) = get(&format!("{base}/auth?username=alice&password=s3cret&mac=52:54:00:00:00:09"));
    assert_eq!(status, 200);
    let script = String::from_utf8(body).unwrap();
    assert!(script.contains(&format!("/files/{}/vmlinuz", os.os_id)), "{script}");

    let (status, body) = get(&format!("{base}/auth?username=alice&password=nope&mac=52:54:00:00:00:09"));
    assert_eq!(status, 200);
    assert!(!String::from_utf8(body).unwrap().contains("/files/"));

    let (status, body) = get(&format!("{base}/files/{}/vmlinuz", os.os_id));
    assert_eq!(status, 200);
    assert_eq!(body, kernel);

    let (status, _) = get(&format!("{base}/api/oses"));
    assert_eq!(status, 401);

    let log = plane.list_auth_log(&Default::default(), 1, 10).entries;
    assert_eq!(log.len(), 2);
    assert_eq!(log[0].mac, "52:54:00:00:00:09");
    assert_eq!(log[1].client_ip, Ipv4Addr::LOCALHOST);
}
