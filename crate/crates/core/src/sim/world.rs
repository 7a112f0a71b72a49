//! The harness: nodes, the network they share, and the event loop.

use std::any::Any;
use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::codec::MacAddr;

use super::clock::{Clock, EventCapExceeded, SimTime};
use super::net::{Body, Iface, IfaceId, LinkParams, NodeId, Packet, Segment, SegmentId, SegmentKind};

pub const DEFAULT_EVENT_CAP: u64 = 20_000_000;

type NodeCall = Box<dyn FnOnce(&mut dyn Node, &mut Ctx<'_>)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("interface {0} is not attached to its segment")]
    Detached(IfaceId),
}

/// A participant in the simulation. Callbacks queue their effects on `ctx`.
pub trait Node: Any {
    fn start(&mut self, _ctx: &mut Ctx<'_>) {}
    fn on_packet(&mut self, ctx: &mut Ctx<'_>, iface: IfaceId, pkt: Packet);
    fn on_timer(&mut self, _ctx: &mut Ctx<'_>, _token: u64) {}
    fn as_any(&self) -> &dyn Any;
    fn as_any_mut(&mut self) -> &mut dyn Any;
}

#[derive(Debug)]
enum Action {
    Send(IfaceId, Packet),
    Timer(SimTime, u64),
    SetIp(IfaceId, Ipv4Addr),
    SetAttached(IfaceId, bool),
}

pub struct Ctx<'w> {
    now: SimTime,
    node: NodeId,
    ifaces: &'w [Iface],
    segments: &'w [Segment],
    actions: Vec<Action>,
}

impl Ctx<'_> {
    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn send(&mut self, iface: IfaceId, pkt: Packet) {
        self.actions.push(Action::Send(iface, pkt));
    }

    pub fn timer(&mut self, delay: SimTime, token: u64) {
        self.actions.push(Action::Timer(delay, token));
    }

    pub fn set_ip(&mut self, iface: IfaceId, ip: Ipv4Addr) {
        self.actions.push(Action::SetIp(iface, ip));
    }

    pub fn set_attached(&mut self, iface: IfaceId, attached: bool) {
        self.actions.push(Action::SetAttached(iface, attached));
    }

    pub fn iface(&self, iface: IfaceId) -> &Iface {
        &self.ifaces[iface]
    }

    pub fn segment_kind(&self, iface: IfaceId) -> &SegmentKind {
        &self.segments[self.ifaces[iface].segment].kind
    }
}

#[derive(Debug)]
enum Ev {
    Start(NodeId),
    Deliver(IfaceId, Packet),
    Timer(NodeId, u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CaptureRecord {
    pub time_us: SimTime,
    pub segment: String,
    #[serde(skip)]
    pub segment_id: SegmentId,
    pub from: String,
    pub src: String,
    pub dst: String,
    pub protocol: &'static str,
    pub len: usize,
    pub delivered: Vec<String>,
    #[serde(skip)]
    pub delivered_ids: Vec<IfaceId>,
    pub dropped: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "hex_opt")]
    pub payload: Option<Vec<u8>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn hex_opt<S: serde::Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(b) => s.serialize_str(&hex::encode(b)),
        None => s.serialize_none(),
    }
}

/// Flips one byte of matching HTTP response bodies on their first hop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptHttpBody {
    pub path: String,
    pub offset: usize,
    pub remaining: u32,
}

pub struct World {
    clock: Clock<Ev>,
    segments: Vec<Segment>,
    ifaces: Vec<Iface>,
    nodes: Vec<Option<Box<dyn Node>>>,
    node_names: Vec<String>,
    rng: ChaCha8Rng,
    capture: Vec<CaptureRecord>,
    corruptions: Vec<CorruptHttpBody>,
}

impl World {
    pub fn new(seed: u64) -> Self {
        Self::with_cap(seed, DEFAULT_EVENT_CAP)
    }

    pub fn with_cap(seed: u64, cap: u64) -> Self {
        Self {
            clock: Clock::new(cap),
            segments: Vec::new(),
            ifaces: Vec::new(),
            nodes: Vec::new(),
            node_names: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            capture: Vec::new(),
            corruptions: Vec::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.clock.now()
    }

    pub fn add_segment(&mut self, name: &str, kind: SegmentKind, params: LinkParams) -> SegmentId {
        let id = self.segments.len();
        self.segments.push(Segment {
            id,
            name: name.into(),
            kind,
            params,
            ifaces: Vec::new(),
        });
        id
    }

    /// Reserves a node id; the node itself is installed with [`World::install`].
    pub fn reserve_node(&mut self, name: &str) -> NodeId {
        self.nodes.push(None);
        self.node_names.push(name.into());
        self.nodes.len() - 1
    }

    pub fn add_iface(
        &mut self,
        node: NodeId,
        segment: SegmentId,
        mac: MacAddr,
        ip: Ipv4Addr,
        forwarder: bool,
        attached: bool,
    ) -> IfaceId {
        let id = self.ifaces.len();
        let name = format!("{}/{}", self.node_names[node], self.segments[segment].name);
        self.ifaces.push(Iface {
            id,
            node,
            segment,
            name,
            mac,
            ip,
            forwarder,
            attached,
        });
        self.segments[segment].ifaces.push(id);
        id
    }

    /// Installs the node and schedules its start callback now.
    pub fn install(&mut self, id: NodeId, node: Box<dyn Node>) {
        self.nodes[id] = Some(node);
        self.clock.schedule(self.clock.now(), Ev::Start(id));
    }

    pub fn node<T: Node>(&self, id: NodeId) -> Option<&T> {
        self.nodes.get(id)?.as_ref()?.as_any().downcast_ref()
    }

    pub fn node_mut<T: Node>(&mut self, id: NodeId) -> Option<&mut T> {
        self.nodes.get_mut(id)?.as_mut()?.as_any_mut().downcast_mut()
    }

    pub fn iface(&self, id: IfaceId) -> &Iface {
        &self.ifaces[id]
    }

    pub fn segment(&self, id: SegmentId) -> &Segment {
        &self.segments[id]
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn capture(&self) -> &[CaptureRecord] {
        &self.capture
    }

    pub fn add_corruption(&mut self, fault: CorruptHttpBody) {
        self.corruptions.push(fault);
    }

    pub fn schedule_timer(&mut self, node: NodeId, at: SimTime, token: u64) {
        self.clock.schedule(at, Ev::Timer(node, token));
    }

    fn receivers(&self, from: IfaceId, pkt: &Packet) -> Vec<IfaceId> {
        let seg = &self.segments[self.ifaces[from].segment];
        let others = seg
            .ifaces
            .iter()
            .copied()
            .filter(|&i| i != from && self.ifaces[i].attached);
        if seg.kind == SegmentKind::PointToPoint || pkt.is_broadcast() {
            return others.collect();
        }
        let dst = *pkt.dst.ip();
        let direct: Vec<IfaceId> = others.clone().filter(|&i| self.ifaces[i].ip == dst).collect();
        if !direct.is_empty() {
            return direct;
        }
        others.filter(|&i| self.ifaces[i].forwarder).collect()
    }

    /// Puts `pkt` on the wire from `from`, scheduling one delivery per
    /// receiver that survives loss. Returns the scheduled `(iface, time)` pairs.
    pub fn deliver(&mut self, from: IfaceId, mut pkt: Packet) -> Result<Vec<(IfaceId, SimTime)>, NetError> {
        let now = self.clock.now();
        let iface = &self.ifaces[from];
        let seg_id = iface.segment;
        if !iface.attached {
            self.record(now, from, &pkt, Vec::new(), Vec::new(), Some("sender detached".into()));
            return Err(NetError::Detached(from));
        }
        if pkt.ttl == 0 {
            self.record(now, from, &pkt, Vec::new(), Vec::new(), Some("ttl expired".into()));
            return Ok(Vec::new());
        }
        pkt.ttl -= 1;
        if pkt.origin.is_none() {
            pkt.origin = Some(iface.node);
        }
        let mut note = None;
        if let Body::HttpResponse(x) = &mut pkt.body {
            if let Some(fault) = self
                .corruptions
                .iter_mut()
                .find(|f| f.remaining > 0 && f.path == x.path && f.offset < x.response.body.len())
            {
                fault.remaining -= 1;
                x.response.body[fault.offset] ^= 0xFF;
                note = Some(format!("corrupted byte {}", fault.offset));
            }
        }
        let params = self.segments[seg_id].params;
        let base = params.latency_us() + params.serialization_us(pkt.body.wire_len());
        let mut scheduled = Vec::new();
        let mut dropped = Vec::new();
        for rx in self.receivers(from, &pkt) {
            let lost = !pkt.body.is_stream() && params.loss > 0.0 && self.rng.random::<f64>() < params.loss;
            if lost {
                dropped.push(rx);
                continue;
            }
            let jitter = match params.jitter_us() {
                0 => 0,
                j => self.rng.random_range(0..=j),
            };
            let at = now + base + jitter;
            self.clock.schedule(at, Ev::Deliver(rx, pkt.clone()));
            scheduled.push((rx, at));
        }
        let delivered = scheduled.iter().map(|(i, _)| *i).collect();
        self.record(now, from, &pkt, delivered, dropped, note);
        Ok(scheduled)
    }

    fn record(
        &mut self,
        now: SimTime,
        from: IfaceId,
        pkt: &Packet,
        delivered: Vec<IfaceId>,
        dropped: Vec<IfaceId>,
        note: Option<String>,
    ) {
        let name = |i: &IfaceId| self.ifaces[*i].name.clone();
        let seg_id = self.ifaces[from].segment;
        let rec = CaptureRecord {
            time_us: now,
            segment: self.segments[seg_id].name.clone(),
            segment_id: seg_id,
            from: self.ifaces[from].name.clone(),
            src: pkt.src.to_string(),
            dst: pkt.dst.to_string(),
            protocol: pkt.protocol(),
            len: pkt.body.wire_len(),
            delivered: delivered.iter().map(name).collect(),
            dropped: dropped.iter().map(name).collect(),
            delivered_ids: delivered,
            payload: pkt.udp_payload().map(<[u8]>::to_vec),
            note,
        };
        self.capture.push(rec);
    }

    fn dispatch(&mut self, ev: Ev) {
        let (node_id, call): (NodeId, NodeCall) = match ev {
            Ev::Start(n) => (n, Box::new(|node, ctx| node.start(ctx))),
            Ev::Timer(n, token) => (n, Box::new(move |node, ctx| node.on_timer(ctx, token))),
            Ev::Deliver(iface, pkt) => {
                if !self.ifaces[iface].attached {
                    return;
                }
                (
                    self.ifaces[iface].node,
                    Box::new(move |node, ctx| node.on_packet(ctx, iface, pkt)),
                )
            }
        };
        let Some(mut node) = self.nodes[node_id].take() else {
            return;
        };
        let mut ctx = Ctx {
            now: self.clock.now(),
            node: node_id,
            ifaces: &self.ifaces,
            segments: &self.segments,
            actions: Vec::new(),
        };
        call(node.as_mut(), &mut ctx);
        let actions = ctx.actions;
        self.nodes[node_id] = Some(node);
        for action in actions {
            match action {
                Action::Send(iface, pkt) => {
                    debug_assert_eq!(self.ifaces[iface].node, node_id);
                    let _ = self.deliver(iface, pkt);
                }
                Action::Timer(delay, token) => self.clock.schedule_in(delay, Ev::Timer(node_id, token)),
                Action::SetIp(iface, ip) => self.ifaces[iface].ip = ip,
                Action::SetAttached(iface, attached) => self.ifaces[iface].attached = attached,
            }
        }
    }

    /// Fires every event due at or before `until`, then moves time to `until`.
    pub fn run_until(&mut self, until: SimTime) -> Result<(), EventCapExceeded> {
        while let Some((_, ev)) = self.clock.pop_until(until)? {
            self.dispatch(ev);
        }
        self.clock.advance_to(until);
        Ok(())
    }

    /// Runs until no events remain. Returns the final time.
    pub fn run_until_idle(&mut self) -> Result<SimTime, EventCapExceeded> {
        while let Some((_, ev)) = self.clock.pop()? {
            self.dispatch(ev);
        }
        Ok(self.clock.now())
    }

    /// Checks the capture for any delivery to an interface on another segment.
    pub fn leaked_deliveries(&self) -> usize {
        self.capture
            .iter()
            .map(|r| {
                r.delivered_ids
                    .iter()
                    .filter(|&&i| self.ifaces[i].segment != r.segment_id)
                    .count()
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::clock::MS;
    use std::net::SocketAddrV4;

    #[derive(Default)]
    struct Sink {
        got: Vec<(SimTime, Packet)>,
    }

    impl Node for Sink {
        fn on_packet(&mut self, ctx: &mut Ctx<'_>, _iface: IfaceId, pkt: Packet) {
            self.got.push((ctx.now(), pkt));
        }
        fn as_any(&self) -> &dyn Any {
            self
        }
        fn as_any_mut(&mut self) -> &mut dyn Any {
            self
        }
    }

    fn ip(last: u8) -> Ipv4Addr {
        Ipv4Addr::new(10, 0, 0, last)
    }

    fn lan(world: &mut World, params: LinkParams, n: u8) -> Vec<IfaceId> {
        let seg = world.add_segment("lan", SegmentKind::Broadcast, params);
        (1..=n)
            .map(|i| {
                let node = world.reserve_node(&format!("n{i}"));
                world.install(node, Box::new(Sink::default()));
                world.add_iface(node, seg, MacAddr([0, 0, 0, 0, 0, i]), ip(i), false, true)
            })
            .collect()
    }

    fn bcast() -> Packet {
        Packet::udp(
            SocketAddrV4::new(Ipv4Addr::UNSPECIFIED, 68),
            SocketAddrV4::new(Ipv4Addr::BROADCAST, 67),
            vec![1, 2, 3],
        )
    }

    #[test]
    fn broadcast_reaches_all_but_sender() {
        let mut w = World::new(1);
        let ifs = lan(&mut w, LinkParams::default(), 3);
        let out = w.deliver(ifs[0], bcast()).unwrap();
        assert_eq!(out.len(), 2);
        w.run_until_idle().unwrap();
        assert!(w.node::<Sink>(0).unwrap().got.is_empty());
        assert_eq!(w.node::<Sink>(1).unwrap().got.len(), 1);
        assert_eq!(w.node::<Sink>(1).unwrap().got[0].0, MS + LinkParams::default().serialization_us(31));
        assert_eq!(w.leaked_deliveries(), 0);
    }

    #[test]
    fn total_loss_delivers_nothing() {
        let mut w = World::new(1);
        let ifs = lan(&mut w, LinkParams { loss: 1.0, ..LinkParams::default() }, 3);
        assert!(w.deliver(ifs[0], bcast()).unwrap().is_empty());
    }

    #[test]
    fn loss_pattern_is_seed_deterministic() {
        let pattern = |seed| {
            let mut w = World::new(seed);
            let ifs = lan(&mut w, LinkParams { loss: 0.5, ..LinkParams::default() }, 2);
            (0..1000)
                .map(|_| !w.deliver(ifs[0], bcast()).unwrap().is_empty())
                .collect::<Vec<bool>>()
        };
        let a = pattern(42);
        assert_eq!(a, pattern(42));
        assert_ne!(a, pattern(43));
        let kept = a.iter().filter(|k| **k).count();
        assert!((400..600).contains(&kept), "{kept}");
    }

    #[test]
    fn unicast_prefers_owner_then_forwarders() {
        let mut w = World::new(1);
        let seg = w.add_segment("s", SegmentKind::Broadcast, LinkParams::default());
        let a = w.reserve_node("a");
        let b = w.reserve_node("b");
        let r = w.reserve_node("r");
        let ia = w.add_iface(a, seg, MacAddr([0; 6]), ip(1), false, true);
        let ib = w.add_iface(b, seg, MacAddr([0; 6]), ip(2), false, true);
        let ir = w.add_iface(r, seg, MacAddr([0; 6]), ip(254), true, true);
        let to = |last| Packet::udp(SocketAddrV4::new(ip(1), 1), SocketAddrV4::new(ip(last), 2), vec![]);
        assert_eq!(w.deliver(ia, to(2)).unwrap()[0].0, ib);
        assert_eq!(w.deliver(ia, to(99)).unwrap()[0].0, ir);
    }

    #[test]
    fn detached_sender_errors() {
        let mut w = World::new(1);
        let seg = w.add_segment("wifi", SegmentKind::Broadcast, LinkParams::default());
        let a = w.reserve_node("a");
        let ia = w.add_iface(a, seg, MacAddr([0; 6]), ip(1), false, false);
        assert_eq!(w.deliver(ia, bcast()), Err(NetError::Detached(ia)));
    }
}
