use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::bootloader;
use super::connectivity::ConnectivityKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl From<serde_json::Error> for ConfigError {
    fn from(e: serde_json::Error) -> Self {
        ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ports {
    pub dhcp: u16,
    pub tftp: u16,
    pub dns: u16,
    pub http: u16,
}

impl Default for Ports {
    fn default() -> Self {
        Self {
            dhcp: 67,
            tftp: 69,
            dns: 53,
            http: 80,
        }
    }
}

/// Gateway settings. The JSON config file mirrors these fields; every field
/// has a default.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    /// Static address of the client-facing interface.
    pub gateway_ip: Ipv4Addr,
    pub subnet_prefix: u8,
    pub lease_pool_start: Ipv4Addr,
    pub lease_pool_end: Ipv4Addr,
    pub lease_ttl_secs: u32,
    pub boot_filename: String,
    pub cloud_domain: String,
    pub probe_timeout_ms: u64,
    pub probe_retries: u32,
    pub upstream_connected: bool,
    /// Upstream link brought up at start, if any.
    pub upstream: Option<ConnectivityKind>,
    pub dns_ttl_secs: u32,
    pub ports: Ports,
    /// Bootloader image served over TFTP; a stand-in image is generated
    /// when unset.
    pub bootloader_path: Option<PathBuf>,
    #[serde(skip)]
    pub bootloader_blob: Vec<u8>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        let cloud_domain = "boot.cloud.example".to_string();
        Self {
            gateway_ip: Ipv4Addr::new(192, 168, 77, 1),
            subnet_prefix: 24,
            lease_pool_start: Ipv4Addr::new(192, 168, 77, 100),
            lease_pool_end: Ipv4Addr::new(192, 168, 77, 200),
            lease_ttl_secs: 3600,
            boot_filename: "boot.ipxe".into(),
            bootloader_blob: bootloader::standin(&cloud_domain, bootloader::DEFAULT_PADDING),
            cloud_domain,
            probe_timeout_ms: 2000,
            probe_retries: 3,
            upstream_connected: false,
            upstream: None,
            dns_ttl_secs: 60,
            ports: Ports::default(),
            bootloader_path: None,
        }
    }
}

impl GatewayConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let mut cfg: GatewayConfig = serde_json::from_str(text)?;
        cfg.load_bootloader(None)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: GatewayConfig = serde_json::from_str(&text)?;
        cfg.load_bootloader(path.parent())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds the stand-in bootloader (chainloading the cloud domain) or
    /// reads the configured image.
    pub fn load_bootloader(&mut self, base: Option<&Path>) -> Result<(), ConfigError> {
        self.bootloader_blob = match &self.bootloader_path {
            Some(p) => {
                let path = match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p.clone(),
                };
                std::fs::read(&path).map_err(|source| ConfigError::Io { path, source })?
            }
            None => bootloader::standin(&self.cloud_domain, bootloader::DEFAULT_PADDING),
        };
        Ok(())
    }

    pub fn subnet_mask(&self) -> Ipv4Addr {
        let bits = u32::MAX
            .checked_shl(32 - u32::from(self.subnet_prefix))
            .unwrap_or(0);
        Ipv4Addr::from(bits)
    }

    pub fn in_subnet(&self, ip: Ipv4Addr) -> bool {
        let mask = u32::from(self.subnet_mask());
        u32::from(ip) & mask == u32::from(self.gateway_ip) & mask
    }

    pub fn pool_contains(&self, ip: Ipv4Addr) -> bool {
        (u32::from(self.lease_pool_start)..=u32::from(self.lease_pool_end)).contains(&u32::from(ip))
            && ip != self.gateway_ip
    }

    pub fn pool_size(&self) -> usize {
        let (s, e) = (u32::from(self.lease_pool_start), u32::from(self.lease_pool_end));
        let gw = u32::from(self.gateway_ip);
        (e.saturating_sub(s) as usize + 1) - usize::from((s..=e).contains(&gw))
    }

    /// Base URL of the portal as seen by clients.
    pub fn portal_base(&self) -> String {
        if self.ports.http == 80 {
            format!("http://{}", self.gateway_ip)
        } else {
            format!("http://{}:{}", self.gateway_ip, self.ports.http)
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if !(8..=30).contains(&self.subnet_prefix) {
            return invalid(format!("subnet_prefix {} out of range 8..=30", self.subnet_prefix));
        }
        if u32::from(self.lease_pool_start) > u32::from(self.lease_pool_end) {
            return invalid("lease_pool_start is after lease_pool_end".into());
        }
        if !self.in_subnet(self.lease_pool_start) || !self.in_subnet(self.lease_pool_end) {
            return invalid("lease pool is not inside the gateway subnet".into());
        }
        if self.pool_size() == 0 {
            return invalid("lease pool is empty".into());
        }
        if self.boot_filename.is_empty() || self.boot_filename.len() >= 128 {
            return invalid("boot_filename must be 1..=127 bytes".into());
        }
        if self.cloud_domain.is_empty() {
            return invalid("cloud_domain must not be empty".into());
        }
        if self.probe_retries == 0 {
            return invalid("probe_retries must be at least 1".into());
        }
        if self.bootloader_blob.is_empty() {
            return invalid("bootloader image is empty".into());
        }
        Ok(())
    }
}
