//! The `sdb` command line.
//!
//! Exit codes: 0 success, 1 expectation mismatch, 2 usage or validation
//! error, 3 environment or runtime error. Every flag that takes a value can
//! also be set through an `SDB_`-prefixed environment variable.

use std::ffi::OsString;
use std::io::Write as _;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::time::{Duration, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::cloud::{slug, AuthLogEntry, CloudConfig, CloudError, LogPage, OsDefinition, UserView};
use crate::gateway::{ConfigError, GatewayConfig};
use crate::live::{self, CloudServer, GatewayServer, LiveError};
use crate::scenario::{bundled_names, run_scenario, RunOptions, ScenarioError, ScenarioReport, ScenarioSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MISMATCH: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "sdb", version, about = "Software-defined diskless boot")]
pub struct Cli {
    /// Log filter (tracing env-filter syntax).
    /// Defaults to `info` for services and `warn` otherwise.
    #[arg(long, global = true, env = "SDB_LOG")]
    pub log: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the boot gateway on real sockets.
    Gateway(GatewayArgs),
    /// Run the cloud control plane.
    Cloud(CloudArgs),
    /// Administer a running control plane.
    Admin(AdminArgs),
    /// Run a scenario in the network simulator.
    Simulate(SimulateArgs),
    /// List the bundled scenarios.
    Scenarios,
}

#[derive(Debug, Args)]
pub struct GatewayArgs {
    /// JSON config file; flags override its values.
    #[arg(long, env = "SDB_GATEWAY_CONFIG")]
    pub config: Option<PathBuf>,
    /// Local address the listeners bind to.
    #[arg(long, env = "SDB_BIND", default_value = "0.0.0.0")]
    pub bind: Ipv4Addr,
    #[arg(long, env = "SDB_GATEWAY_IP")]
    pub gateway_ip: Option<Ipv4Addr>,
    #[arg(long, env = "SDB_CLOUD_DOMAIN")]
    pub cloud_domain: Option<String>,
    #[arg(long, env = "SDB_BOOTLOADER")]
    pub bootloader: Option<PathBuf>,
    #[arg(long, env = "SDB_DHCP_PORT")]
    pub dhcp_port: Option<u16>,
    #[arg(long, env = "SDB_TFTP_PORT")]
    pub tftp_port: Option<u16>,
    #[arg(long, env = "SDB_DNS_PORT")]
    pub dns_port: Option<u16>,
    #[arg(long, env = "SDB_HTTP_PORT")]
    pub http_port: Option<u16>,
}

#[derive(Debug, Args)]
pub struct CloudArgs {
    /// JSON config file; flags override its values.
    #[arg(long, env = "SDB_CLOUD_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "SDB_LISTEN")]
    pub listen: Option<SocketAddr>,
    #[arg(long, env = "SDB_STORE")]
    pub store: Option<PathBuf>,
    /// Admin API bearer token.
    #[arg(long, env = "SDB_TOKEN", hide_env_values = true)]
    pub token: Option<String>,
    /// URL clients use to reach this service.
    #[arg(long, env = "SDB_BASE_URL")]
    pub base_url: Option<String>,
    /// Built admin UI served under /admin.
    #[arg(long, env = "SDB_ADMIN_UI")]
    pub admin_ui: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AdminArgs {
    /// Control plane base URL.
    #[arg(long, env = "SDB_URL", default_value = "http://127.0.0.1:8080")]
    pub url: String,
    #[arg(long, env = "SDB_TOKEN", hide_env_values = true)]
    pub token: Option<String>,
    /// Print JSON instead of tables.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: AdminCommand,
}

#[derive(Debug, Subcommand)]
pub enum AdminCommand {
    /// Operating systems and their files.
    #[command(subcommand)]
    Os(OsCommand),
    /// User accounts.
    #[command(subcommand)]
    User(UserCommand),
    /// Authentication log.
    Logs(LogsArgs),
}

#[derive(Debug, Subcommand)]
pub enum OsCommand {
    List,
    Show {
        os: String,
    },
    /// Define an OS. The boot template comes from --template, or is built
    /// from --kernel and --initrd file names.
    Create {
        name: String,
        #[arg(long, conflicts_with_all = ["kernel", "initrd"])]
        template: Option<PathBuf>,
        #[arg(long)]
        kernel: Option<String>,
        #[arg(long)]
        initrd: Vec<String>,
        #[arg(long, default_value = "")]
        params: String,
    },
    Delete {
        os: String,
    },
    /// Upload a file into an OS.
    Upload {
        os: String,
        file: PathBuf,
        /// Stored name; defaults to the file's base name.
        #[arg(long)]
        name: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum UserCommand {
    List,
    Create {
        username: String,
        /// OS id or name.
        #[arg(long)]
        os: String,
        #[arg(long, env = "SDB_USER_PASSWORD", hide_env_values = true)]
        password: String,
    },
    Assign {
        username: String,
        #[arg(long)]
        os: String,
    },
    Deactivate {
        username: String,
    },
    Delete {
        username: String,
    },
}

#[derive(Debug, Args)]
pub struct LogsArgs {
    /// Failed attempts only.
    #[arg(long)]
    pub failed: bool,
    #[arg(long)]
    pub user: Option<String>,
    #[arg(long)]
    pub mac: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub page: usize,
    #[arg(long)]
    pub per_page: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Bundled scenario name or path to a scenario file.
    #[arg(long, env = "SDB_SCENARIO", default_value = "paper-experiment")]
    pub scenario: String,
    /// Overrides the scenario seed.
    #[arg(long, env = "SDB_SEED")]
    pub seed: Option<u64>,
    /// Control-plane store directory; a temporary one is used when unset.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Directory for per-session JSON-lines traces.
    #[arg(long)]
    pub trace_dir: Option<PathBuf>,
    /// Print the JSON report instead of a summary.
    #[arg(long)]
    pub json: bool,
    /// Also write the JSON report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failed command and the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::runtime(e.to_string()),
            _ => Failure::usage(e.to_string()),
        }
    }
}

impl From<CloudError> for Failure {
    fn from(e: CloudError) -> Self {
        match e {
            CloudError::Validation(_) | CloudError::BadTemplate(_) => Failure::usage(e.to_string()),
            _ => Failure::runtime(e.to_string()),
        }
    }
}

impl From<LiveError> for Failure {
    fn from(e: LiveError) -> Self {
        match e {
            LiveError::Cloud(c) => c.into(),
            other => Failure::runtime(other.to_string()),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Invalid(_) => Failure::usage(e.to_string()),
            ScenarioError::Runtime(_) => Failure::runtime(e.to_string()),
        }
    }
}

type CmdResult = Result<i32, Failure>;

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let default_log = match cli.command {
        Command::Gateway(_) | Command::Cloud(_) => "info",
        _ => "warn",
    };
    init_logging(cli.log.as_deref().unwrap_or(default_log));
    let result = match cli.command {
        Command::Gateway(a) => cmd_gateway(a),
        Command::Cloud(a) => cmd_cloud(a),
        Command::Admin(a) => cmd_admin(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Scenarios => {
            for name in bundled_names() {
                println!("{name}");
            }
            Ok(EXIT_OK)
        }
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn init_logging(filter: &str) {
    let filter = tracing_subscriber::EnvFilter::try_new(filter)
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

pub fn gateway_config(a: &GatewayArgs) -> Result<GatewayConfig, Failure> {
    let mut cfg = match &a.config {
        Some(path) => GatewayConfig::from_path(path)?,
        None => GatewayConfig::default(),
    };
    if let Some(ip) = a.gateway_ip {
        cfg.gateway_ip = ip;
    }
    if let Some(d) = &a.cloud_domain {
        cfg.cloud_domain = d.clone();
    }
    if let Some(p) = &a.bootloader {
        cfg.bootloader_path = Some(p.clone());
    }
    if let Some(p) = a.dhcp_port {
        cfg.ports.dhcp = p;
    }
    if let Some(p) = a.tftp_port {
        cfg.ports.tftp = p;
    }
    if let Some(p) = a.dns_port {
        cfg.ports.dns = p;
    }
    if let Some(p) = a.http_port {
        cfg.ports.http = p;
    }
    cfg.validate()?;
    let base = a.config.as_deref().and_then(Path::parent);
    cfg.load_bootloader(base)?;
    Ok(cfg)
}

fn cmd_gateway(a: GatewayArgs) -> CmdResult {
    let cfg = gateway_config(&a)?;
    let bind = a.bind;
    live::block_on(async move {
        let server = GatewayServer::bind(cfg, bind).await?;
        let [dhcp, tftp, dns, http] = server.ports()?;
        tracing::info!("gateway listening on {bind}: dhcp {dhcp}, tftp {tftp}, dns {dns}, http {http}");
        server.serve(live::ctrl_c()).await
    })
    .map_err(|e| Failure::runtime(e.to_string()))??;
    Ok(EXIT_OK)
}

pub fn cloud_config(a: &CloudArgs) -> Result<CloudConfig, Failure> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::runtime(format!("reading {}: {e}", path.display())))?;
            CloudConfig::from_json(&text).map_err(|e| {
                Failure::usage(format!(
                    "config parse error at line {}, column {}: {e}",
                    e.line(),
                    e.column()
                ))
            })?
        }
        None => CloudConfig::default(),
    };
    if let Some(l) = a.listen {
        cfg.listen = l;
    }
    if let Some(s) = &a.store {
        cfg.store_dir = s.clone();
    }
    if let Some(t) = &a.token {
        cfg.admin_token = Some(t.clone());
    }
    if let Some(u) = &a.base_url {
        cfg.base_url = u.clone();
    }
    if let Some(d) = &a.admin_ui {
        cfg.admin_ui_dir = Some(d.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_cloud(a: CloudArgs) -> CmdResult {
    let cfg = cloud_config(&a)?;
    if cfg.admin_token.is_none() {
        tracing::warn!("no admin token configured; the admin API is disabled");
    }
    live::block_on(async move {
        let server = CloudServer::bind(cfg).await?;
        tracing::info!("control plane listening on {}", server.local_addr()?);
        server.serve(live::ctrl_c()).await
    })
    .map_err(|e| Failure::runtime(e.to_string()))??;
    Ok(EXIT_OK)
}

fn cmd_simulate(a: SimulateArgs) -> CmdResult {
    let spec = ScenarioSpec::load(&a.scenario)?;
    let opts = RunOptions {
        store_dir: a.store.clone(),
        trace_dir: a.trace_dir.clone(),
        seed: a.seed,
    };
    let report = run_scenario(&spec, &opts)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(out) = &a.out {
        std::fs::write(out, format!("{text}\n"))
            .map_err(|e| Failure::runtime(format!("writing {}: {e}", out.display())))?;
    }
    if a.json {
        println!("{text}");
    } else {
        print_summary(&report);
    }
    Ok(if report.passed { EXIT_OK } else { EXIT_MISMATCH })
}

fn print_summary(r: &ScenarioReport) {
    println!(
        "scenario {} (seed {}), gateway mode {}, ended at {:.3} ms",
        r.scenario,
        r.seed,
        serde_json::to_value(&r.gateway)
            .ok()
            .and_then(|v| v.get("mode").and_then(Value::as_str).map(str::to_string))
            .unwrap_or_else(|| "?".into()),
        r.end_time_ms
    );
    println!(
        "{:<10} {:>3} {:<9} {:<22} {:>12} {:>8}",
        "CLIENT", "#", "STATE", "OS / REASON", "BOOT_MS", "DIGESTS"
    );
    for c in &r.clients {
        for s in &c.sessions {
            let what = match (&s.os_name, &s.reason) {
                (Some(os), _) => os.clone(),
                (None, Some(reason)) => serde_json::to_value(reason)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
                _ => String::new(),
            };
            let boot = s
                .boot_time_ms
                .map(|t| format!("{t:.3}"))
                .unwrap_or_else(|| "-".into());
            println!(
                "{:<10} {:>3} {:<9} {:<22} {:>12} {:>8}",
                c.name,
                s.index,
                s.state,
                what,
                boot,
                if s.digests_verified { "ok" } else { "-" }
            );
        }
    }
    for e in &r.expectations {
        if !e.passed {
            println!("MISMATCH {}: {}", e.expected.client, e.actual);
        }
    }
    println!(
        "{} of {} expectations held",
        r.expectations.iter().filter(|e| e.passed).count(),
        r.expectations.len()
    );
}

/// Blocking admin API client.
struct AdminClient {
    agent: ureq::Agent,
    base: String,
    token: Option<String>,
}

impl AdminClient {
    fn new(url: &str, token: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        Self {
            agent,
            base: url.trim_end_matches('/').to_string(),
            token,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}/api{path}", self.base)
    }

    fn auth(&self) -> String {
        format!("Bearer {}", self.token.as_deref().unwrap_or(""))
    }

    fn finish(&self, resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Result<Value, Failure> {
        let mut resp = resp.map_err(|e| Failure::runtime(format!("cannot reach {}: {e}", self.base)))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::runtime(format!("reading response: {e}")))?;
        let body: Value = if text.trim().is_empty() {
            Value::Null
        } else {
            serde_json::from_str(&text).unwrap_or(Value::String(text))
        };
        if (200..300).contains(&status) {
            return Ok(body);
        }
        let kind = body.get("error").and_then(Value::as_str).unwrap_or("http_error");
        let message = body
            .get("message")
            .and_then(Value::as_str)
            .map(str::to_string)
            .unwrap_or_else(|| format!("HTTP {status}"));
        let message = format!("{kind}: {message}");
        Err(if status >= 500 {
            Failure::runtime(message)
        } else {
            Failure::usage(message)
        })
    }

    fn get(&self, path: &str) -> Result<Value, Failure> {
        let r = self.agent.get(self.url(path)).header("authorization", self.auth()).call();
        self.finish(r)
    }

    fn delete(&self, path: &str) -> Result<Value, Failure> {
        let r = self.agent.delete(self.url(path)).header("authorization", self.auth()).call();
        self.finish(r)
    }

    fn send_json(&self, method: &str, path: &str, body: &Value) -> Result<Value, Failure> {
        let data = body.to_string();
        let url = self.url(path);
        let r = match method {
            "POST" => self.agent.post(url),
            "PATCH" => self.agent.patch(url),
            _ => self.agent.put(url),
        }
        .header("authorization", self.auth())
        .header("content-type", "application/json")
        .send(data.as_bytes());
        self.finish(r)
    }

    fn upload(&self, path: &str, bytes: &[u8]) -> Result<Value, Failure> {
        let r = self
            .agent
            .put(self.url(path))
            .header("authorization", self.auth())
            .header("content-type", "application/octet-stream")
            .send(bytes);
        self.finish(r)
    }

    /// Accepts an OS id, an exact name, or a name whose slug matches.
    fn resolve_os(&self, os: &str) -> Result<String, Failure> {
        let list: Vec<OsDefinition> = typed(self.get("/os")?)?;
        let wanted = slug(os);
        list.iter()
            .find(|o| o.os_id == os)
            .or_else(|| list.iter().find(|o| o.name.eq_ignore_ascii_case(os)))
            .or_else(|| list.iter().find(|o| slug(&o.name) == wanted || o.os_id.replace('-', "") == wanted.replace('-', "")))
            .map(|o| o.os_id.clone())
            .ok_or_else(|| Failure::usage(format!("no_such_os: no OS matches `{os}`")))
    }
}

fn typed<T: DeserializeOwned>(v: Value) -> Result<T, Failure> {
    serde_json::from_value(v).map_err(|e| Failure::runtime(format!("unexpected response: {e}")))
}

const SEGMENT: &percent_encoding::AsciiSet = &percent_encoding::CONTROLS
    .add(b' ')
    .add(b'"')
    .add(b'#')
    .add(b'%')
    .add(b'/')
    .add(b'?')
    .add(b'&')
    .add(b'+')
    .add(b'<')
    .add(b'>')
    .add(b'`');

fn enc(segment: &str) -> String {
    percent_encoding::utf8_percent_encode(segment, SEGMENT).to_string()
}

fn format_time(ms: u64) -> String {
    humantime::format_rfc3339_millis(UNIX_EPOCH + Duration::from_millis(ms)).to_string()
}

fn print_value(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("JSON value serializes"));
}

fn default_template(kernel: &str, initrds: &[String]) -> String {
    let mut t = String::from("#!ipxe\n");
    t.push_str(&format!("kernel {{{{base_url}}}}/files/{{{{os_id}}}}/{kernel}\n"));
    for i in initrds {
        t.push_str(&format!("initrd {{{{base_url}}}}/files/{{{{os_id}}}}/{i}\n"));
    }
    t.push_str("boot\n");
    t
}

fn cmd_admin(a: AdminArgs) -> CmdResult {
    let client = AdminClient::new(&a.url, a.token.clone());
    let out = std::io::stdout();
    let mut out = out.lock();
    match a.command {
        AdminCommand::Os(cmd) => match cmd {
            OsCommand::List => {
                let v = client.get("/os")?;
                if a.json {
                    print_value(&v);
                } else {
                    let list: Vec<OsDefinition> = typed(v)?;
                    let _ = writeln!(out, "{:<24} {:<28} {:>6} {:>14}", "OS_ID", "NAME", "FILES", "BYTES");
                    for o in list {
                        let bytes: u64 = o.files.iter().map(|f| f.size).sum();
                        let _ = writeln!(out, "{:<24} {:<28} {:>6} {:>14}", o.os_id, o.name, o.files.len(), bytes);
                    }
                }
            }
            OsCommand::Show { os } => {
                let id = client.resolve_os(&os)?;
                let v = client.get(&format!("/os/{}", enc(&id)))?;
                if a.json {
                    print_value(&v);
                } else {
                    let o: OsDefinition = typed(v)?;
                    let _ = writeln!(out, "os_id:   {}\nname:    {}\nparams:  {}", o.os_id, o.name, o.kernel_params);
                    let _ = writeln!(out, "template:\n{}", o.boot_template.trim_end());
                    for f in o.files {
                        let _ = writeln!(out, "file:    {} {} {}", f.filename, f.size, f.digest);
                    }
                }
            }
            OsCommand::Create {
                name,
                template,
                kernel,
                initrd,
                params,
            } => {
                let boot_template = match (template, kernel) {
                    (Some(path), _) => std::fs::read_to_string(&path)
                        .map_err(|e| Failure::usage(format!("reading {}: {e}", path.display())))?,
                    (None, Some(k)) => default_template(&k, &initrd),
                    (None, None) => return Err(Failure::usage("os create needs --template or --kernel")),
                };
                let v = client.send_json(
                    "POST",
                    "/os",
                    &json!({ "name": name, "boot_template": boot_template, "kernel_params": params }),
                )?;
                print_value(&v);
            }
            OsCommand::Delete { os } => {
                let id = client.resolve_os(&os)?;
                client.delete(&format!("/os/{}", enc(&id)))?;
                let _ = writeln!(out, "deleted OS {id}");
            }
            OsCommand::Upload { os, file, name } => {
                let id = client.resolve_os(&os)?;
                let stored = match name {
                    Some(n) => n,
                    None => file
                        .file_name()
                        .and_then(|n| n.to_str())
                        .ok_or_else(|| Failure::usage("cannot derive a file name; pass --name"))?
                        .to_string(),
                };
                let bytes = std::fs::read(&file)
                    .map_err(|e| Failure::usage(format!("reading {}: {e}", file.display())))?;
                let v = client.upload(&format!("/os/{}/files/{}", enc(&id), enc(&stored)), &bytes)?;
                if a.json {
                    print_value(&v);
                } else {
                    let _ = writeln!(out, "uploaded {stored} ({} bytes) to {id}", bytes.len());
                }
            }
        },
        AdminCommand::User(cmd) => match cmd {
            UserCommand::List => {
                let v = client.get("/users")?;
                if a.json {
                    print_value(&v);
                } else {
                    let list: Vec<UserView> = typed(v)?;
                    let _ = writeln!(out, "{:<20} {:<24} {:<7} CREATED", "USERNAME", "OS", "ACTIVE");
                    for u in list {
                        let _ = writeln!(
                            out,
                            "{:<20} {:<24} {:<7} {}",
                            u.username,
                            u.assigned_os,
                            u.active,
                            format_time(u.created_at)
                        );
                    }
                }
            }
            UserCommand::Create { username, os, password } => {
                let os_id = client.resolve_os(&os)?;
                let v = client.send_json(
                    "POST",
                    "/users",
                    &json!({ "username": username, "password": password, "assigned_os": os_id }),
                )?;
                print_value(&v);
            }
            UserCommand::Assign { username, os } => {
                let os_id = client.resolve_os(&os)?;
                let v = client.send_json("PATCH", &format!("/users/{}", enc(&username)), &json!({ "assigned_os": os_id }))?;
                print_value(&v);
            }
            UserCommand::Deactivate { username } => {
                let v = client.send_json("POST", &format!("/users/{}/deactivate", enc(&username)), &Value::Null)?;
                print_value(&v);
            }
            UserCommand::Delete { username } => {
                client.delete(&format!("/users/{}", enc(&username)))?;
                let _ = writeln!(out, "deleted user {username}");
            }
        },
        AdminCommand::Logs(l) => {
            let mut query = vec![format!("page={}", l.page)];
            if let Some(p) = l.per_page {
                query.push(format!("per_page={p}"));
            }
            if l.failed {
                query.push("success=false".into());
            }
            if let Some(u) = &l.user {
                query.push(format!("username={}", enc(u)));
            }
            if let Some(m) = &l.mac {
                query.push(format!("mac={}", enc(m)));
            }
            let v = client.get(&format!("/logs?{}", query.join("&")))?;
            if a.json {
                print_value(&v);
            } else {
                let page: LogPage = typed(v)?;
                print_log(&mut out, &page.entries);
                let _ = writeln!(
                    out,
                    "page {} ({} per page), {} matching entries",
                    page.page, page.per_page, page.total
                );
            }
        }
    }
    Ok(EXIT_OK)
}

fn print_log(out: &mut impl std::io::Write, entries: &[AuthLogEntry]) {
    let _ = writeln!(
        out,
        "{:>6} {:<24} {:<16} {:<17} {:<15} RESULT",
        "SEQ", "TIME", "USER", "MAC", "IP"
    );
    for e in entries {
        let result = match (&e.success, &e.failure_reason) {
            (true, _) => "ok".to_string(),
            (false, Some(r)) => serde_json::to_value(r)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_else(|| "failed".into()),
            (false, None) => "failed".into(),
        };
        let _ = writeln!(
            out,
            "{:>6} {:<24} {:<16} {:<17} {:<15} {}",
            e.seq,
            format_time(e.timestamp),
            e.username,
            e.mac,
            e.client_ip,
            result
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_exits_zero_and_bad_flag_exits_two() {
        assert_eq!(run(["sdb", "--help"]), EXIT_OK);
        assert_eq!(run(["sdb", "simulate", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["sdb"]), EXIT_USAGE);
    }

    #[test]
    fn default_template_is_scoped() {
        let t = default_template("vmlinuz", &["core.gz".into()]);
        crate::cloud::template::validate(&t, "quiet", "http://boot.example", "tiny").unwrap();
        assert!(t.contains("kernel {{base_url}}/files/{{os_id}}/vmlinuz\n"), "{t}");
    }

    #[test]
    fn gateway_flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gw.json");
        std::fs::write(&path, r#"{"cloud_domain": "a.example", "ports": {"dhcp": 1067, "tftp": 1069, "dns": 1053, "http": 1080}}"#).unwrap();
        let cli = Cli::try_parse_from(["sdb", "gateway", "--config", path.to_str().unwrap(), "--http-port", "8081"]).unwrap();
        let Command::Gateway(a) = cli.command else { panic!() };
        let cfg = gateway_config(&a).unwrap();
        assert_eq!(cfg.cloud_domain, "a.example");
        assert_eq!(cfg.ports.dhcp, 1067);
        assert_eq!(cfg.ports.http, 8081);
    }

    #[test]
    fn bad_gateway_config_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gw.json");
        std::fs::write(&path, "{\n  \"gateway_ip\": \"10.0.0.1\",\n  \"nope\": 1\n}").unwrap();
        let cli = Cli::try_parse_from(["sdb", "gateway", "--config", path.to_str().unwrap()]).unwrap();
        let Command::Gateway(a) = cli.command else { panic!() };
        let err = gateway_config(&a).unwrap_err();
        assert_eq!(err.code, EXIT_USAGE);
        assert!(err.message.contains("line 3"), "{}", err.message);
    }

    #[test]
    fn unknown_scenario_is_a_usage_error() {
        assert_eq!(run(["sdb", "simulate", "--scenario", "/nonexistent/scenario.json"]), EXIT_USAGE);
    }
}
