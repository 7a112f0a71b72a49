//! Builds a [`World`] from a [`ScenarioSpec`], seeds the control plane, and
//! runs every session to a terminal state.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::client::{ClientNode, SessionState};
use crate::cloud::{CloudConfig, ControlPlane};
use crate::gateway::Gateway;
use crate::sim::net::{IfaceId, NodeId, SegmentKind};
use crate::sim::nodes::{infra_mac, CloudNode, GatewayNode, RogueNode, RouterNode};
use crate::sim::world::{CorruptHttpBody, World};
use crate::sim::MS;

use super::report::{self, ScenarioReport};
use super::spec::{Action, FaultSpec, ScenarioSpec, SegmentName, UplinkSpec};
use super::ScenarioError;

/// Deterministic synthetic artifact contents, independent of the run seed.
pub fn synthetic_artifact(os_name: &str, filename: &str, size: usize) -> Vec<u8> {
    let key: [u8; 32] = Sha256::digest(format!("{os_name}\0{filename}")).into();
    let mut rng = ChaCha8Rng::from_seed(key);
    let mut data = vec![0u8; size];
    rng.fill_bytes(&mut data);
    data
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Store directory; a temporary one is used when unset.
    pub store_dir: Option<PathBuf>,
    /// Directory receiving one JSON-lines trace per session.
    pub trace_dir: Option<PathBuf>,
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
}

/// A built scenario, ready to run and inspect.
pub struct Simulation {
    pub spec: ScenarioSpec,
    pub world: World,
    pub gateway: Arc<Gateway>,
    pub gateway_node: NodeId,
    pub cloud_node: NodeId,
    pub router_node: Option<NodeId>,
    pub rogue_nodes: Vec<NodeId>,
    /// Client name to node id, in declaration order.
    pub clients: Vec<(String, NodeId)>,
    pub lan_iface_of_gateway: IfaceId,
    store_dir: PathBuf,
    trace_dir: Option<PathBuf>,
    _temp: Option<tempfile::TempDir>,
}

fn runtime<E: std::fmt::Display>(context: &str) -> impl Fn(E) -> ScenarioError + '_ {
    move |e| ScenarioError::Runtime(format!("{context}: {e}"))
}

/// Creates missing OSes, files and users. Existing items are left as they are.
fn seed_store(spec: &ScenarioSpec, cfg: &CloudConfig) -> Result<(), ScenarioError> {
    let epoch = spec.cloud.epoch_ms;
    let plane = ControlPlane::open_with_clock(cfg.clone(), Arc::new(move || epoch))
        .map_err(runtime("opening the cloud store"))?;
    let mut ids = BTreeMap::new();
    for os in &spec.cloud.oses {
        let id = match plane.resolve_os(&os.name) {
            Ok(id) => id,
            Err(_) => {
                plane
                    .create_os(&os.name, &os.template(), &os.kernel_params)
                    .map_err(runtime(&format!("creating OS `{}`", os.name)))?
                    .os_id
            }
        };
        let existing = plane.get_os(&id).map_err(runtime("reading OS"))?;
        for f in &os.files {
            if existing.file(&f.filename).is_some_and(|have| have.size == f.size as u64) {
                continue;
            }
            let data = synthetic_artifact(&os.name, &f.filename, f.size);
            plane
                .upload_file(&id, &f.filename, &data)
                .map_err(runtime(&format!("uploading `{}`", f.filename)))?;
        }
        ids.insert(os.name.to_lowercase(), id);
    }
    for u in &spec.cloud.users {
        if plane.get_user(&u.username).is_ok() {
            continue;
        }
        let os_id = &ids[&u.os.to_lowercase()];
        plane
            .create_user(&u.username, &u.password, os_id)
            .map_err(runtime(&format!("creating user `{}`", u.username)))?;
    }
    Ok(())
}

impl Simulation {
    pub fn build(spec: &ScenarioSpec, opts: &RunOptions) -> Result<Self, ScenarioError> {
        spec.validate()?;
        let mut spec = spec.clone();
        if let Some(seed) = opts.seed {
            spec.seed = seed;
        }
        let (store_dir, temp) = match &opts.store_dir {
            Some(d) => (d.clone(), None),
            None => {
                let t = tempfile::Builder::new()
                    .prefix("sdb-sim-")
                    .tempdir()
                    .map_err(runtime("creating a temporary store"))?;
                (t.path().to_path_buf(), Some(t))
            }
        };
        let cloud_cfg = CloudConfig {
            base_url: spec.base_url(),
            store_dir: store_dir.clone(),
            admin_token: spec.cloud.admin_token.clone(),
            kdf: spec.cloud.kdf,
            ..CloudConfig::default()
        };
        cloud_cfg
            .validate()
            .map_err(|e| ScenarioError::Invalid(format!("cloud: {e}")))?;
        seed_store(&spec, &cloud_cfg)?;

        let topo = &spec.topology;
        let plan = topo.plan.clone();
        let mut world = World::new(spec.seed);
        let lan = world.add_segment("lan", SegmentKind::Broadcast, topo.lan);
        let uplink_kind = match &topo.upstream {
            UplinkSpec::Wired | UplinkSpec::Absent => SegmentKind::Broadcast,
            UplinkSpec::Wifi { ssid, passphrase } => SegmentKind::WifiKeyed {
                ssid: ssid.clone(),
                passphrase: passphrase.clone(),
            },
            UplinkSpec::Cellular { apn } => SegmentKind::CellularKeyed { apn: apn.clone() },
        };
        let uplink = world.add_segment("uplink", uplink_kind, topo.uplink);
        let internet = world.add_segment("internet", SegmentKind::PointToPoint, topo.internet);

        let gateway = Arc::new(Gateway::new(spec.gateway.clone()));
        let gw = world.reserve_node("gateway");
        let gw_down = world.add_iface(gw, lan, infra_mac(1), spec.gateway.gateway_ip, true, true);
        let gw_up = world.add_iface(gw, uplink, infra_mac(2), plan.gateway_uplink_ip, true, false);
        world.install(gw, Box::new(GatewayNode::new(gateway.clone(), gw_down, gw_up)));

        let cloud = world.reserve_node("cloud");
        let cloud_iface = world.add_iface(cloud, internet, infra_mac(4), plan.cloud_ip, false, true);
        let router_node = if topo.upstream == UplinkSpec::Absent {
            None
        } else {
            let router = world.reserve_node("router");
            let inside = world.add_iface(router, uplink, infra_mac(3), plan.router_ip, true, true);
            let outside = world.add_iface(router, internet, infra_mac(5), plan.nat_external_ip, true, true);
            let zone = BTreeMap::from([(spec.gateway.cloud_domain.to_lowercase(), plan.cloud_ip)]);
            world.install(router, Box::new(RouterNode::new(inside, outside, &plan, zone)));
            Some(router)
        };
        let cloud_node = CloudNode::new(cloud_iface, cloud_cfg, spec.cloud.epoch_ms)
            .map_err(runtime("starting the control plane"))?;
        world.install(cloud, Box::new(cloud_node));

        let mut rogue_nodes = Vec::new();
        for (i, r) in spec.rogues.iter().enumerate() {
            let seg = match r.segment {
                SegmentName::Lan => lan,
                SegmentName::Uplink => uplink,
            };
            let id = world.reserve_node(&format!("rogue{}", i + 1));
            let iface = world.add_iface(id, seg, infra_mac(0x10 + i as u8), r.ip, false, true);
            world.install(id, Box::new(RogueNode::new(iface, r.ip, r.mode, &r.boot_file)));
            rogue_nodes.push(id);
        }

        let mut clients = Vec::new();
        for c in &spec.clients {
            let id = world.reserve_node(&c.name);
            let iface = world.add_iface(id, lan, c.mac, Ipv4Addr::UNSPECIFIED, false, true);
            world.install(id, Box::new(ClientNode::new(c.clone(), iface, spec.seed)));
            clients.push((c.name.clone(), id));
        }

        for f in &spec.faults {
            match f {
                FaultSpec::CorruptHttpBody { path, offset, count } => world.add_corruption(CorruptHttpBody {
                    path: path.clone(),
                    offset: *offset,
                    remaining: *count,
                }),
            }
        }

        Ok(Self {
            spec,
            world,
            gateway,
            gateway_node: gw,
            cloud_node: cloud,
            router_node,
            rogue_nodes,
            clients,
            lan_iface_of_gateway: gw_down,
            store_dir,
            trace_dir: opts.trace_dir.clone(),
            _temp: temp,
        })
    }

    pub fn store_dir(&self) -> &Path {
        &self.store_dir
    }

    pub fn client(&self, name: &str) -> Option<&ClientNode> {
        let (_, id) = self.clients.iter().find(|(n, _)| n == name)?;
        self.world.node::<ClientNode>(*id)
    }

    pub fn cloud(&self) -> &CloudNode {
        self.world.node::<CloudNode>(self.cloud_node).expect("cloud node")
    }

    pub fn cloud_mut(&mut self) -> &mut CloudNode {
        self.world.node_mut::<CloudNode>(self.cloud_node).expect("cloud node")
    }

    pub fn apply(&mut self, action: &Action) -> Result<(), ScenarioError> {
        let cloud = self.cloud_mut();
        match action {
            Action::DeactivateUser { username } => {
                let plane = cloud
                    .plane()
                    .ok_or_else(|| ScenarioError::Runtime("control plane is stopped".into()))?;
                plane.deactivate_user(username).map_err(runtime("deactivating user"))?;
            }
            Action::StopCloud => cloud.stop_plane(),
            Action::StartCloud => cloud.start_plane().map_err(runtime("starting the control plane"))?,
            Action::RestartCloud => {
                cloud.stop_plane();
                cloud.start_plane().map_err(runtime("restarting the control plane"))?;
            }
        }
        Ok(())
    }

    /// Runs timed actions in order, then drains the event queue.
    pub fn run(&mut self) -> Result<(), ScenarioError> {
        let mut actions = self.spec.actions.clone();
        actions.sort_by_key(|a| a.at_ms);
        for a in &actions {
            self.world.run_until(a.at_ms * MS).map_err(runtime("simulation"))?;
            self.apply(&a.action)?;
        }
        self.world.run_until_idle().map_err(runtime("simulation"))?;
        Ok(())
    }

    /// Every session of every client, with client names.
    pub fn sessions(&self) -> Vec<(&str, &crate::client::BootSession)> {
        let mut out = Vec::new();
        for (name, id) in &self.clients {
            if let Some(node) = self.world.node::<ClientNode>(*id) {
                out.extend(node.sessions().iter().map(|s| (name.as_str(), s)));
            }
        }
        out
    }

    pub fn all_terminal(&self) -> bool {
        self.sessions().iter().all(|(_, s)| s.state.is_terminal())
    }

    pub fn report(&self) -> Result<ScenarioReport, ScenarioError> {
        let mut trace_paths = BTreeMap::new();
        if let Some(dir) = &self.trace_dir {
            std::fs::create_dir_all(dir).map_err(runtime("creating the trace directory"))?;
            for (name, id) in &self.clients {
                let Some(node) = self.world.node::<ClientNode>(*id) else {
                    continue;
                };
                for (i, s) in node.sessions().iter().enumerate() {
                    let path = dir.join(format!("{name}-{i}.jsonl"));
                    std::fs::write(&path, s.trace_jsonl()).map_err(runtime("writing a trace"))?;
                    trace_paths.insert((name.clone(), i), path);
                }
            }
        }
        Ok(report::build(self, &trace_paths))
    }

    /// Whether the session ended booted with artifacts matching the store.
    pub fn digests_match_store(&self, state: &SessionState) -> bool {
        let SessionState::Booted { os_id, artifacts } = state else {
            return false;
        };
        let Some(plane) = self.cloud().plane() else {
            return false;
        };
        let Ok(os) = plane.get_os(os_id) else {
            return false;
        };
        !artifacts.is_empty()
            && artifacts.iter().all(|a| {
                let name = a.url.rsplit('/').next().unwrap_or_default();
                os.file(name).is_some_and(|f| f.digest == a.digest && f.size == a.size)
            })
    }
}

/// Builds, runs and reports a scenario.
pub fn run_scenario(spec: &ScenarioSpec, opts: &RunOptions) -> Result<ScenarioReport, ScenarioError> {
    let mut sim = Simulation::build(spec, opts)?;
    sim.run()?;
    sim.report()
}
