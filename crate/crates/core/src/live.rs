//! Live mode: the gateway and the control plane on real sockets.
//!
//! The protocol logic is the same code the simulator drives; this module
//! only moves bytes between sockets and the handlers.

use std::future::Future;
use std::io;
use std::net::{Ipv4Addr, SocketAddr, SocketAddrV4};
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::extract::{ConnectInfo, DefaultBodyLimit, Request, State};
use axum::http::{HeaderName, HeaderValue, StatusCode};
use axum::response::Response;
use axum::Router;
use thiserror::Error;
use tokio::net::{TcpListener, UdpSocket};

use crate::cloud::{CloudConfig, CloudError, ControlPlane};
use crate::codec::{self, DhcpMessage, MacAddr};
use crate::gateway::{
    probe_upstream, AttachError, ConnectivityKind, Gateway, GatewayConfig, ProbeLink, UpstreamAttach,
};
use crate::http::{HttpRequest, HttpResponse};

const MAX_BODY: usize = 4 << 30;
const UDP_BUF: usize = 65_536;

#[derive(Debug, Error)]
pub enum LiveError {
    #[error("cannot bind {proto} port {port}: {source}")]
    PortBindFailure {
        proto: &'static str,
        port: u16,
        #[source]
        source: io::Error,
    },
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Cloud(#[from] CloudError),
}

async fn bind_udp(ip: Ipv4Addr, port: u16, proto: &'static str) -> Result<Arc<UdpSocket>, LiveError> {
    let sock = UdpSocket::bind(SocketAddrV4::new(ip, port))
        .await
        .map_err(|source| LiveError::PortBindFailure { proto, port, source })?;
    sock.set_broadcast(true)?;
    Ok(Arc::new(sock))
}

async fn bind_tcp(addr: SocketAddr, proto: &'static str) -> Result<TcpListener, LiveError> {
    TcpListener::bind(addr).await.map_err(|source| LiveError::PortBindFailure {
        proto,
        port: addr.port(),
        source,
    })
}

async fn to_request(req: Request, remote: SocketAddr) -> Result<HttpRequest, Response> {
    let (parts, body) = req.into_parts();
    let bytes = axum::body::to_bytes(body, MAX_BODY).await.map_err(|e| {
        to_response(HttpResponse::text(400, format!("unreadable body: {e}\n")))
    })?;
    let target = parts.uri.path_and_query().map(|p| p.as_str()).unwrap_or("/");
    let mut out = HttpRequest::new(parts.method.as_str(), target, bytes.to_vec());
    for (name, value) in &parts.headers {
        if let Ok(v) = value.to_str() {
            out = out.with_header(name.as_str(), v);
        }
    }
    if let SocketAddr::V4(v4) = remote {
        out = out.with_remote(*v4.ip());
    } else if let SocketAddr::V6(v6) = remote {
        if let Some(v4) = v6.ip().to_ipv4_mapped() {
            out = out.with_remote(v4);
        }
    }
    Ok(out)
}

fn to_response(resp: HttpResponse) -> Response {
    let mut out = Response::new(Body::from(resp.body));
    *out.status_mut() = StatusCode::from_u16(resp.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    for (name, value) in resp.headers {
        if let (Ok(n), Ok(v)) = (HeaderName::try_from(name), HeaderValue::try_from(value)) {
            out.headers_mut().append(n, v);
        }
    }
    out
}

/// Bound control-plane listener.
pub struct CloudServer {
    plane: Arc<ControlPlane>,
    listener: TcpListener,
}

impl CloudServer {
    /// Opens (or creates) the store and binds the HTTP listener.
    pub async fn bind(cfg: CloudConfig) -> Result<Self, LiveError> {
        let listen = cfg.listen;
        let plane = tokio::task::spawn_blocking(move || ControlPlane::open(cfg))
            .await
            .map_err(io::Error::other)??;
        let listener = bind_tcp(listen, "http").await?;
        Ok(Self {
            plane: Arc::new(plane),
            listener,
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn plane(&self) -> Arc<ControlPlane> {
        self.plane.clone()
    }

    pub async fn serve(self, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), LiveError> {
        async fn handle(
            State(plane): State<Arc<ControlPlane>>,
            ConnectInfo(remote): ConnectInfo<SocketAddr>,
            req: Request,
        ) -> Response {
            let req = match to_request(req, remote).await {
                Ok(r) => r,
                Err(resp) => return resp,
            };
            // Password hashing and file I/O block.
            match tokio::task::spawn_blocking(move || plane.handle_http(&req)).await {
                Ok(resp) => to_response(resp),
                Err(e) => to_response(HttpResponse::text(500, format!("handler failed: {e}\n"))),
            }
        }
        let app = Router::new()
            .fallback(handle)
            .layer(DefaultBodyLimit::disable())
            .with_state(self.plane);
        axum::serve(self.listener, app.into_make_service_with_connect_info::<SocketAddr>())
            .with_graceful_shutdown(shutdown)
            .await?;
        Ok(())
    }
}

/// The host's own uplink: assumed up for wired profiles.
struct HostLink;

impl UpstreamAttach for HostLink {
    fn attach(&mut self, kind: &ConnectivityKind) -> Result<(), AttachError> {
        match kind {
            ConnectivityKind::Wired => Ok(()),
            _ => Err(AttachError::NoSuchNetwork),
        }
    }
}

/// Blocking probe link on the DHCP client port. Replies from this gateway
/// itself are ignored.
struct UdpProbeLink {
    sock: std::net::UdpSocket,
    server_port: u16,
    own_ip: Ipv4Addr,
}

impl ProbeLink for UdpProbeLink {
    fn broadcast(&mut self, msg: &DhcpMessage) {
        if let Ok(raw) = codec::encode_dhcp(msg) {
            let _ = self.sock.send_to(&raw, SocketAddrV4::new(Ipv4Addr::BROADCAST, self.server_port));
        }
    }

    fn recv(&mut self, timeout_ms: u64) -> Option<DhcpMessage> {
        let deadline = Instant::now() + Duration::from_millis(timeout_ms.max(1));
        let mut buf = vec![0u8; UDP_BUF];
        loop {
            let left = deadline.checked_duration_since(Instant::now())?;
            self.sock.set_read_timeout(Some(left.max(Duration::from_millis(1)))).ok()?;
            let (n, _) = self.sock.recv_from(&mut buf).ok()?;
            if let Ok(msg) = codec::decode_dhcp(&buf[..n]) {
                let server = msg.option_ip(codec::dhcp::OPT_SERVER_ID).unwrap_or(msg.server_ip);
                if server != self.own_ip {
                    return Some(msg);
                }
            }
        }
    }
}

fn client_port(server_port: u16) -> u16 {
    if server_port == 67 {
        68
    } else {
        server_port.wrapping_add(1)
    }
}

/// Bound gateway listeners: DHCP, TFTP, DNS and the portal.
pub struct GatewayServer {
    gateway: Arc<Gateway>,
    dhcp: Arc<UdpSocket>,
    tftp: Arc<UdpSocket>,
    dns: Arc<UdpSocket>,
    http: TcpListener,
    started: Instant,
}

impl GatewayServer {
    pub async fn bind(cfg: GatewayConfig, bind_ip: Ipv4Addr) -> Result<Self, LiveError> {
        let ports = cfg.ports;
        let dhcp = bind_udp(bind_ip, ports.dhcp, "dhcp").await?;
        let tftp = bind_udp(bind_ip, ports.tftp, "tftp").await?;
        let dns = bind_udp(bind_ip, ports.dns, "dns").await?;
        let http = bind_tcp(SocketAddr::from((bind_ip, ports.http)), "http").await?;
        Ok(Self {
            gateway: Arc::new(Gateway::new(cfg)),
            dhcp,
            tftp,
            dns,
            http,
            started: Instant::now(),
        })
    }

    pub fn gateway(&self) -> Arc<Gateway> {
        self.gateway.clone()
    }

    /// Bound ports in the order dhcp, tftp, dns, http.
    pub fn ports(&self) -> io::Result<[u16; 4]> {
        Ok([
            self.dhcp.local_addr()?.port(),
            self.tftp.local_addr()?.port(),
            self.dns.local_addr()?.port(),
            self.http.local_addr()?.port(),
        ])
    }

    pub async fn serve(self, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), LiveError> {
        let started = self.started;
        let now_ms = move || started.elapsed().as_millis() as u64;
        let probe_xid = Arc::new(AtomicU32::new(0));
        let gw = self.gateway.clone();
        let dhcp_port = self.dhcp.local_addr()?.port();

        if gw.profile().is_some() {
            let (gw, xid_cell) = (gw.clone(), probe_xid.clone());
            tokio::task::spawn_blocking(move || run_probe(&gw, dhcp_port, &xid_cell, now_ms));
        }

        let dhcp = {
            let (gw, sock, xid_cell) = (gw.clone(), self.dhcp.clone(), probe_xid.clone());
            let reply_to = SocketAddrV4::new(Ipv4Addr::BROADCAST, client_port(dhcp_port));
            tokio::spawn(async move {
                let mut buf = vec![0u8; UDP_BUF];
                loop {
                    let Ok((n, _)) = sock.recv_from(&mut buf).await else {
                        continue;
                    };
                    let raw = &buf[..n];
                    let own_probe = raw.len() >= 8
                        && u32::from_be_bytes([raw[4], raw[5], raw[6], raw[7]]) == xid_cell.load(Ordering::Relaxed);
                    if own_probe {
                        continue;
                    }
                    if let Some(reply) = gw.handle_dhcp(raw, now_ms()) {
                        if let Err(e) = sock.send_to(&reply, reply_to).await {
                            tracing::warn!("dhcp reply failed: {e}");
                        }
                    }
                }
            })
        };
        let tftp = {
            let (gw, sock) = (gw.clone(), self.tftp.clone());
            tokio::spawn(async move {
                let mut buf = vec![0u8; UDP_BUF];
                loop {
                    let Ok((n, SocketAddr::V4(peer))) = sock.recv_from(&mut buf).await else {
                        continue;
                    };
                    if let Some(reply) = gw.handle_tftp((*peer.ip(), peer.port()), &buf[..n]) {
                        let _ = sock.send_to(&reply, peer).await;
                    }
                }
            })
        };
        let dns = {
            let (gw, sock) = (gw.clone(), self.dns.clone());
            tokio::spawn(async move {
                let mut buf = vec![0u8; UDP_BUF];
                loop {
                    let Ok((n, peer)) = sock.recv_from(&mut buf).await else {
                        continue;
                    };
                    if !gw.captive_dns_active() {
                        continue;
                    }
                    if let Some(reply) = gw.handle_dns(&buf[..n]) {
                        let _ = sock.send_to(&reply, peer).await;
                    }
                }
            })
        };

        async fn portal(
            State((gw, started)): State<(Arc<Gateway>, Instant)>,
            ConnectInfo(remote): ConnectInfo<SocketAddr>,
            req: Request,
        ) -> Response {
            let req = match to_request(req, remote).await {
                Ok(r) => r,
                Err(resp) => return resp,
            };
            let (resp, attach) = gw.handle_http(&req, started.elapsed().as_millis() as u64);
            if let Some(profile) = attach {
                tracing::info!("portal stored upstream profile: {}", profile.kind.label());
            }
            to_response(resp)
        }
        let app = Router::new().fallback(portal).with_state((gw.clone(), started));
        let served = axum::serve(self.http, app.into_make_service_with_connect_info::<SocketAddr>())
            .with_graceful_shutdown(shutdown)
            .await;
        dhcp.abort();
        tftp.abort();
        dns.abort();
        served?;
        Ok(())
    }
}

fn run_probe(gw: &Gateway, dhcp_port: u16, xid_cell: &AtomicU32, now_ms: impl Fn() -> u64) {
    let epoch = match gw.attach(&mut HostLink, now_ms()) {
        Ok(e) => e,
        Err(e) => {
            tracing::warn!("upstream attach failed: {e}");
            return;
        }
    };
    let port = client_port(dhcp_port);
    let sock = match std::net::UdpSocket::bind(SocketAddrV4::new(Ipv4Addr::UNSPECIFIED, port)) {
        Ok(s) => s,
        Err(e) => {
            tracing::warn!("upstream probe disabled, cannot bind udp port {port}: {e}");
            return;
        }
    };
    if sock.set_broadcast(true).is_err() {
        return;
    }
    let cfg = gw.config().clone();
    let mac = MacAddr([0x02, 0x5d, 0xb0, 0x00, 0x00, 0x01]);
    let xid = 0x5db0_f000 | (now_ms() as u32 & 0x0fff);
    xid_cell.store(xid, Ordering::Relaxed);
    let mut link = UdpProbeLink {
        sock,
        server_port: dhcp_port,
        own_ip: cfg.gateway_ip,
    };
    let mode = probe_upstream(Some(&mut link), &cfg, mac, xid);
    gw.finish_probe(epoch, mode, now_ms());
    tracing::info!("upstream probe finished: {mode:?}");
}

/// Runs `fut` on a fresh multi-threaded runtime.
pub fn block_on<F: Future>(fut: F) -> io::Result<F::Output> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    Ok(rt.block_on(fut))
}

/// Resolves when the process receives Ctrl-C.
pub async fn ctrl_c() {
    let _ = tokio::signal::ctrl_c().await;
}
