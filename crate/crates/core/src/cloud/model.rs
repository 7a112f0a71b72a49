use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

/// Milliseconds since the Unix epoch.
pub type Timestamp = u64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OsFile {
    pub filename: String,
    pub size: u64,
    /// Lower-case hex SHA-256 of the stored bytes.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OsDefinition {
    pub os_id: String,
    pub name: String,
    pub files: Vec<OsFile>,
    /// Script text; `{{base_url}}` and `{{os_id}}` are filled in at issue time.
    pub boot_template: String,
    pub kernel_params: String,
    pub created_at: Timestamp,
}

impl OsDefinition {
    pub fn file(&self, filename: &str) -> Option<&OsFile> {
        self.files.iter().find(|f| f.filename == filename)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credential {
    pub algorithm: String,
    pub m_cost_kib: u32,
    pub t_cost: u32,
    pub p_cost: u32,
    /// Base64 (standard, padded).
    pub salt: String,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub username: String,
    pub credential: Credential,
    pub assigned_os: String,
    pub active: bool,
    pub created_at: Timestamp,
}

/// What the admin API returns for a user: everything but the credential.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserView {
    pub username: String,
    pub assigned_os: String,
    pub active: bool,
    pub created_at: Timestamp,
}

impl From<&UserRecord> for UserView {
    fn from(u: &UserRecord) -> Self {
        Self {
            username: u.username.clone(),
            assigned_os: u.assigned_os.clone(),
            active: u.active,
            created_at: u.created_at,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    BadPassword,
    NoSuchUser,
    Deactivated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthLogEntry {
    /// Position in the log, starting at 1.
    pub seq: u64,
    pub timestamp: Timestamp,
    pub username: String,
    pub mac: String,
    pub client_ip: Ipv4Addr,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<FailureReason>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogFilter {
    pub username: Option<String>,
    pub mac: Option<String>,
    pub success: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogPage {
    pub entries: Vec<AuthLogEntry>,
    pub page: usize,
    pub per_page: usize,
    pub total: usize,
}
