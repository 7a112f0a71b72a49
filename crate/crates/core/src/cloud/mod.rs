//! The cloud control plane: OS catalogue, users, authentication and the
//! per-user boot scripts it issues, artifact serving, and the auth log.

pub mod api;
pub mod credential;
pub mod model;
pub mod store;
pub mod template;

use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::MacAddr;
use crate::script::{Script, Statement};

pub use credential::{hash_password, verify_password, KdfParams};
pub use model::{
    AuthLogEntry, Credential, FailureReason, LogFilter, LogPage, OsDefinition, OsFile, Timestamp,
    UserRecord, UserView,
};
pub use store::{sha256_hex, Store, StoreError};

/// Response header carrying the lower-case hex SHA-256 of a served artifact.
pub const DIGEST_HEADER: &str = "x-sdb-digest";
pub const DEFAULT_PER_PAGE: usize = 50;
pub const MAX_PER_PAGE: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CloudConfig {
    /// Absolute URL clients use to reach this service; issued scripts point here.
    pub base_url: String,
    pub listen: SocketAddr,
    pub store_dir: PathBuf,
    /// Bearer token for `/api`. The admin API is disabled when unset.
    pub admin_token: Option<String>,
    pub kdf: KdfParams,
    /// Directory holding the built admin UI, served under `/admin`.
    pub admin_ui_dir: Option<PathBuf>,
}

impl Default for CloudConfig {
    fn default() -> Self {
        Self {
            base_url: "http://boot.cloud.example".into(),
            listen: SocketAddr::from(([0, 0, 0, 0], 8080)),
            store_dir: PathBuf::from("sdb-store"),
            admin_token: None,
            kdf: KdfParams::default(),
            admin_ui_dir: None,
        }
    }
}

impl CloudConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn validate(&self) -> Result<(), CloudError> {
        let url = url::Url::parse(&self.base_url)
            .map_err(|e| CloudError::Validation(format!("base_url: {e}")))?;
        if !matches!(url.scheme(), "http" | "https") || url.host().is_none() {
            return Err(CloudError::Validation(
                "base_url must be an absolute http(s) URL".into(),
            ));
        }
        if !credential::validate_params(self.kdf) {
            return Err(CloudError::Validation("kdf parameters out of range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CloudError {
    #[error("invalid boot template: {0}")]
    BadTemplate(String),
    #[error("an OS named `{0}` already exists")]
    DuplicateName(String),
    #[error("no OS with id `{0}`")]
    NoSuchOs(String),
    #[error("OS `{0}` is still assigned to users")]
    OsInUse(String),
    #[error("uploaded file is empty")]
    EmptyFile,
    #[error("invalid filename `{0}`")]
    InvalidFilename(String),
    #[error("no file `{1}` in OS `{0}`")]
    NoSuchFile(String, String),
    #[error("user `{0}` already exists")]
    DuplicateUser(String),
    #[error("no user `{0}`")]
    NoSuchUser(String),
    #[error("invalid username `{0}`")]
    InvalidUsername(String),
    #[error("password must not be empty")]
    EmptyPassword,
    #[error("requested range not satisfiable")]
    BadRange,
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl CloudError {
    pub fn kind(&self) -> &'static str {
        match self {
            CloudError::BadTemplate(_) => "bad_template",
            CloudError::DuplicateName(_) => "duplicate_name",
            CloudError::NoSuchOs(_) => "no_such_os",
            CloudError::OsInUse(_) => "os_in_use",
            CloudError::EmptyFile => "empty_file",
            CloudError::InvalidFilename(_) => "invalid_filename",
            CloudError::NoSuchFile(..) => "no_such_file",
            CloudError::DuplicateUser(_) => "duplicate_user",
            CloudError::NoSuchUser(_) => "no_such_user",
            CloudError::InvalidUsername(_) => "invalid_username",
            CloudError::EmptyPassword => "empty_password",
            CloudError::BadRange => "bad_range",
            CloudError::Validation(_) => "validation",
            CloudError::Store(StoreError::Corruption(_)) => "store_corruption",
            CloudError::Store(StoreError::Io { .. }) => "store_io",
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            CloudError::NoSuchOs(_) | CloudError::NoSuchFile(..) | CloudError::NoSuchUser(_) => {
                404
            }
            CloudError::DuplicateName(_) | CloudError::DuplicateUser(_) | CloudError::OsInUse(_) => {
                409
            }
            CloudError::BadRange => 416,
            CloudError::Store(_) => 500,
            _ => 400,
        }
    }
}

fn valid_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-')
}

pub fn valid_filename(name: &str) -> bool {
    !name.is_empty() && name.len() <= 128 && !name.starts_with('.') && name.chars().all(valid_name_char)
}

pub fn valid_username(name: &str) -> bool {
    !name.is_empty() && name.len() <= 64 && name.chars().all(|c| valid_name_char(c) || c == '@')
}

pub fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    let trimmed = out.trim_matches('-');
    if trimmed.is_empty() {
        "os".into()
    } else {
        trimmed.chars().take(40).collect()
    }
}

/// Partial OS update; `None` keeps the current value.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OsUpdate {
    pub name: Option<String>,
    pub boot_template: Option<String>,
    pub kernel_params: Option<String>,
}

/// Partial user update; `None` keeps the current value.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserUpdate {
    pub password: Option<String>,
    pub assigned_os: Option<String>,
    pub active: Option<bool>,
}

/// Inclusive byte range; `end: None` means through the last byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ByteRange {
    pub start: u64,
    pub end: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServedFile {
    pub bytes: Vec<u8>,
    pub digest: String,
    pub total_len: u64,
    /// The inclusive range served, when the request asked for one.
    pub range: Option<(u64, u64)>,
}

pub type Clock = Arc<dyn Fn() -> Timestamp + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    })
}

pub struct ControlPlane {
    cfg: CloudConfig,
    store: Mutex<Store>,
    clock: Clock,
    /// Verified against on unknown-user attempts so every attempt pays the KDF.
    dummy: Credential,
}

impl ControlPlane {
    pub fn open(cfg: CloudConfig) -> Result<Self, CloudError> {
        Self::open_with_clock(cfg, system_clock())
    }

    pub fn open_with_clock(cfg: CloudConfig, clock: Clock) -> Result<Self, CloudError> {
        cfg.validate()?;
        let store = Store::open(&cfg.store_dir)?;
        let dummy = hash_password("sdb-dummy-password", cfg.kdf);
        Ok(Self {
            store: Mutex::new(store),
            clock,
            dummy,
            cfg,
        })
    }

    pub fn config(&self) -> &CloudConfig {
        &self.cfg
    }

    pub fn store_dir(&self) -> &Path {
        &self.cfg.store_dir
    }

    fn store(&self) -> MutexGuard<'_, Store> {
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn now(&self) -> Timestamp {
        (self.clock)()
    }

    pub fn list_oses(&self) -> Vec<OsDefinition> {
        self.store().meta().oses.clone()
    }

    pub fn get_os(&self, os_id: &str) -> Result<OsDefinition, CloudError> {
        self.store()
            .meta()
            .oses
            .iter()
            .find(|o| o.os_id == os_id)
            .cloned()
            .ok_or_else(|| CloudError::NoSuchOs(os_id.into()))
    }

    /// Resolves an OS by id, falling back to an exact (case-insensitive) name.
    pub fn resolve_os(&self, id_or_name: &str) -> Result<String, CloudError> {
        let store = self.store();
        let oses = &store.meta().oses;
        oses.iter()
            .find(|o| o.os_id == id_or_name)
            .or_else(|| oses.iter().find(|o| o.name.eq_ignore_ascii_case(id_or_name)))
            .map(|o| o.os_id.clone())
            .ok_or_else(|| CloudError::NoSuchOs(id_or_name.into()))
    }

    pub fn create_os(
        &self,
        name: &str,
        boot_template: &str,
        kernel_params: &str,
    ) -> Result<OsDefinition, CloudError> {
        let name = name.trim();
        if name.is_empty() {
            return Err(CloudError::Validation("OS name must not be empty".into()));
        }
        let mut store = self.store();
        let meta = store.meta();
        if meta.oses.iter().any(|o| o.name.eq_ignore_ascii_case(name)) {
            return Err(CloudError::DuplicateName(name.into()));
        }
        let base = slug(name);
        let mut os_id = base.clone();
        let mut n = 2;
        while meta.oses.iter().any(|o| o.os_id == os_id) {
            os_id = format!("{base}-{n}");
            n += 1;
        }
        template::validate(boot_template, kernel_params, &self.cfg.base_url, &os_id)?;
        let os = OsDefinition {
            os_id,
            name: name.into(),
            files: Vec::new(),
            boot_template: boot_template.into(),
            kernel_params: kernel_params.trim().into(),
            created_at: self.now(),
        };
        let created = os.clone();
        store.commit(|m| {
            m.next_os_seq += 1;
            m.oses.push(os);
        })?;
        Ok(created)
    }

    pub fn update_os(&self, os_id: &str, update: OsUpdate) -> Result<OsDefinition, CloudError> {
        let mut store = self.store();
        let meta = store.meta();
        let idx = meta
            .oses
            .iter()
            .position(|o| o.os_id == os_id)
            .ok_or_else(|| CloudError::NoSuchOs(os_id.into()))?;
        let mut os = meta.oses[idx].clone();
        if let Some(name) = update.name {
            let name = name.trim().to_string();
            if name.is_empty() {
                return Err(CloudError::Validation("OS name must not be empty".into()));
            }
            if meta
                .oses
                .iter()
                .any(|o| o.os_id != os_id && o.name.eq_ignore_ascii_case(&name))
            {
                return Err(CloudError::DuplicateName(name));
            }
            os.name = name;
        }
        if let Some(t) = update.boot_template {
            os.boot_template = t;
        }
        if let Some(p) = update.kernel_params {
            os.kernel_params = p.trim().into();
        }
        template::validate(&os.boot_template, &os.kernel_params, &self.cfg.base_url, os_id)?;
        let updated = os.clone();
        store.commit(|m| m.oses[idx] = os)?;
        Ok(updated)
    }

    pub fn delete_os(&self, os_id: &str) -> Result<(), CloudError> {
        let mut store = self.store();
        let meta = store.meta();
        if !meta.oses.iter().any(|o| o.os_id == os_id) {
            return Err(CloudError::NoSuchOs(os_id.into()));
        }
        if meta.users.iter().any(|u| u.assigned_os == os_id) {
            return Err(CloudError::OsInUse(os_id.into()));
        }
        store.commit(|m| m.oses.retain(|o| o.os_id != os_id))?;
        store.remove_os_files(os_id)?;
        Ok(())
    }

    /// Stores (or replaces) one artifact. Readers see either the old or the
    /// new bytes, never a mix.
    pub fn upload_file(&self, os_id: &str, filename: &str, data: &[u8]) -> Result<OsFile, CloudError> {
        if !valid_filename(filename) {
            return Err(CloudError::InvalidFilename(filename.into()));
        }
        if data.is_empty() {
            return Err(CloudError::EmptyFile);
        }
        let mut store = self.store();
        let idx = store
            .meta()
            .oses
            .iter()
            .position(|o| o.os_id == os_id)
            .ok_or_else(|| CloudError::NoSuchOs(os_id.into()))?;
        let file = OsFile {
            filename: filename.into(),
            size: data.len() as u64,
            digest: sha256_hex(data),
        };
        store.write_file(os_id, filename, data)?;
        let entry = file.clone();
        store.commit(|m| {
            let files = &mut m.oses[idx].files;
            match files.iter_mut().find(|f| f.filename == entry.filename) {
                Some(existing) => *existing = entry,
                None => files.push(entry),
            }
        })?;
        Ok(file)
    }

    pub fn delete_file(&self, os_id: &str, filename: &str) -> Result<(), CloudError> {
        let mut store = self.store();
        let idx = store
            .meta()
            .oses
            .iter()
            .position(|o| o.os_id == os_id)
            .ok_or_else(|| CloudError::NoSuchOs(os_id.into()))?;
        if store.meta().oses[idx].file(filename).is_none() {
            return Err(CloudError::NoSuchFile(os_id.into(), filename.into()));
        }
        store.commit(|m| m.oses[idx].files.retain(|f| f.filename != filename))?;
        store.remove_file(os_id, filename)?;
        Ok(())
    }

    pub fn list_users(&self) -> Vec<UserView> {
        self.store().meta().users.iter().map(UserView::from).collect()
    }

    pub fn get_user(&self, username: &str) -> Result<UserView, CloudError> {
        self.store()
            .meta()
            .users
            .iter()
            .find(|u| u.username == username)
            .map(UserView::from)
            .ok_or_else(|| CloudError::NoSuchUser(username.into()))
    }

    pub fn create_user(&self, username: &str, password: &str, os_id: &str) -> Result<UserView, CloudError> {
        if !valid_username(username) {
            return Err(CloudError::InvalidUsername(username.into()));
        }
        if password.is_empty() {
            return Err(CloudError::EmptyPassword);
        }
        {
            let store = self.store();
            let meta = store.meta();
            if meta.users.iter().any(|u| u.username == username) {
                return Err(CloudError::DuplicateUser(username.into()));
            }
            if !meta.oses.iter().any(|o| o.os_id == os_id) {
                return Err(CloudError::NoSuchOs(os_id.into()));
            }
        }
        let credential = hash_password(password, self.cfg.kdf);
        let mut store = self.store();
        let meta = store.meta();
        // Re-checked: the KDF ran without the lock held.
        if meta.users.iter().any(|u| u.username == username) {
            return Err(CloudError::DuplicateUser(username.into()));
        }
        if !meta.oses.iter().any(|o| o.os_id == os_id) {
            return Err(CloudError::NoSuchOs(os_id.into()));
        }
        let user = UserRecord {
            username: username.into(),
            credential,
            assigned_os: os_id.into(),
            active: true,
            created_at: self.now(),
        };
        let view = UserView::from(&user);
        store.commit(|m| m.users.push(user))?;
        Ok(view)
    }

    pub fn update_user(&self, username: &str, update: UserUpdate) -> Result<UserView, CloudError> {
        let credential = match update.password.as_deref() {
            Some("") => return Err(CloudError::EmptyPassword),
            Some(pw) => Some(hash_password(pw, self.cfg.kdf)),
            None => None,
        };
        let mut store = self.store();
        let meta = store.meta();
        let idx = meta
            .users
            .iter()
            .position(|u| u.username == username)
            .ok_or_else(|| CloudError::NoSuchUser(username.into()))?;
        if let Some(os_id) = &update.assigned_os {
            if !meta.oses.iter().any(|o| &o.os_id == os_id) {
                return Err(CloudError::NoSuchOs(os_id.clone()));
            }
        }
        let mut user = meta.users[idx].clone();
        if let Some(c) = credential {
            user.credential = c;
        }
        if let Some(os_id) = update.assigned_os {
            user.assigned_os = os_id;
        }
        if let Some(active) = update.active {
            user.active = active;
        }
        let view = UserView::from(&user);
        store.commit(|m| m.users[idx] = user)?;
        Ok(view)
    }

    pub fn assign_os(&self, username: &str, os_id: &str) -> Result<UserView, CloudError> {
        self.update_user(
            username,
            UserUpdate {
                assigned_os: Some(os_id.into()),
                ..UserUpdate::default()
            },
        )
    }

    /// Takes effect for every authentication attempt that starts afterwards.
    pub fn deactivate_user(&self, username: &str) -> Result<UserView, CloudError> {
        self.update_user(
            username,
            UserUpdate {
                active: Some(false),
                ..UserUpdate::default()
            },
        )
    }

    pub fn delete_user(&self, username: &str) -> Result<(), CloudError> {
        let mut store = self.store();
        if !store.meta().users.iter().any(|u| u.username == username) {
            return Err(CloudError::NoSuchUser(username.into()));
        }
        store.commit(|m| m.users.retain(|u| u.username != username))?;
        Ok(())
    }

    /// The script served at `/boot`: prompt for credentials and chain them to
    /// `/auth` together with the client's MAC.
    pub fn boot_entry(&self) -> Script {
        let base = self.cfg.base_url.trim_end_matches('/');
        Script::new(vec![
            Statement::Echo("Software-defined boot: sign in to continue".into()),
            Statement::Login,
            Statement::Chain(format!(
                "{base}/auth?username=${{username}}&password=${{password}}&mac=${{net0/mac}}"
            )),
        ])
        .expect("entry script is valid")
    }

    fn failure_script(&self) -> Script {
        let base = self.cfg.base_url.trim_end_matches('/');
        Script::new(vec![
            Statement::Echo("Authentication failed".into()),
            Statement::Chain(format!("{base}/boot")),
        ])
        .expect("failure script is valid")
    }

    /// Authenticates one attempt, records it in the auth log, and returns the
    /// script to send back: the assigned OS's boot script on success, a
    /// uniform retry script otherwise.
    pub fn authenticate_and_issue(
        &self,
        username: &str,
        password: &str,
        mac: &str,
        client_ip: Ipv4Addr,
    ) -> Result<(Script, AuthLogEntry), CloudError> {
        let snapshot = self
            .store()
            .meta()
            .users
            .iter()
            .find(|u| u.username == username)
            .cloned();
        let outcome = match &snapshot {
            None => {
                verify_password(password, &self.dummy);
                Err(FailureReason::NoSuchUser)
            }
            Some(user) => {
                let ok = verify_password(password, &user.credential);
                if !user.active {
                    Err(FailureReason::Deactivated)
                } else if !ok {
                    Err(FailureReason::BadPassword)
                } else {
                    Ok(())
                }
            }
        };

        let mut store = self.store();
        // The KDF ran unlocked; re-read so a deactivation or reassignment that
        // committed meanwhile wins.
        let current = store.meta().users.iter().find(|u| u.username == username).cloned();
        let outcome = match (outcome, &current) {
            (Ok(()), None) => Err(FailureReason::NoSuchUser),
            (Ok(()), Some(u)) if !u.active => Err(FailureReason::Deactivated),
            (Ok(()), Some(u))
                if snapshot.as_ref().map(|s| &s.credential) != Some(&u.credential) =>
            {
                Err(FailureReason::BadPassword)
            }
            (o, _) => o,
        };
        let script = match (&outcome, &current) {
            (Ok(()), Some(u)) => {
                let os = store
                    .meta()
                    .oses
                    .iter()
                    .find(|o| o.os_id == u.assigned_os)
                    .ok_or_else(|| StoreError::Corruption(format!("missing OS {}", u.assigned_os)))?;
                template::issue(os, &self.cfg.base_url)?
            }
            _ => self.failure_script(),
        };
        let entry = store.append_log(AuthLogEntry {
            seq: 0,
            timestamp: self.now(),
            username: username.chars().take(64).collect(),
            mac: normalize_mac(mac),
            client_ip,
            success: outcome.is_ok(),
            failure_reason: outcome.err(),
        })?;
        Ok((script, entry))
    }

    pub fn serve_file(
        &self,
        os_id: &str,
        filename: &str,
        range: Option<ByteRange>,
    ) -> Result<ServedFile, CloudError> {
        let store = self.store();
        let os = store
            .meta()
            .oses
            .iter()
            .find(|o| o.os_id == os_id)
            .ok_or_else(|| CloudError::NoSuchOs(os_id.into()))?;
        let file = os
            .file(filename)
            .ok_or_else(|| CloudError::NoSuchFile(os_id.into(), filename.into()))?
            .clone();
        let bytes = store.read_file(os_id, filename)?;
        drop(store);
        let total_len = bytes.len() as u64;
        let Some(r) = range else {
            return Ok(ServedFile {
                bytes,
                digest: file.digest,
                total_len,
                range: None,
            });
        };
        let end = r.end.unwrap_or(total_len.saturating_sub(1)).min(total_len.saturating_sub(1));
        if total_len == 0 || r.start >= total_len || r.start > end {
            return Err(CloudError::BadRange);
        }
        Ok(ServedFile {
            bytes: bytes[r.start as usize..=end as usize].to_vec(),
            digest: file.digest,
            total_len,
            range: Some((r.start, end)),
        })
    }

    /// Newest-first page of the auth log. Pages are numbered from 1.
    pub fn list_auth_log(&self, filter: &LogFilter, page: usize, per_page: usize) -> LogPage {
        let per_page = per_page.clamp(1, MAX_PER_PAGE);
        let page = page.max(1);
        let mac = filter.mac.as_deref().map(normalize_mac);
        let store = self.store();
        let matching: Vec<&AuthLogEntry> = store
            .log()
            .iter()
            .rev()
            .filter(|e| filter.username.as_ref().is_none_or(|u| &e.username == u))
            .filter(|e| mac.as_ref().is_none_or(|m| &e.mac == m))
            .filter(|e| filter.success.is_none_or(|s| e.success == s))
            .collect();
        LogPage {
            total: matching.len(),
            entries: matching
                .into_iter()
                .skip((page - 1) * per_page)
                .take(per_page)
                .cloned()
                .collect(),
            page,
            per_page,
        }
    }

    pub fn auth_log_len(&self) -> usize {
        self.store().log().len()
    }

    pub fn verify_files(&self) -> Vec<(String, String)> {
        self.store().verify_files()
    }
}

/// Canonical lower-case colon form for parsable MACs; anything else is kept
/// (truncated) so the log still shows what the client sent.
pub fn normalize_mac(raw: &str) -> String {
    match MacAddr::parse(raw.trim()) {
        Some(mac) => mac.to_string(),
        None => raw.chars().filter(|c| !c.is_control()).take(32).collect(),
    }
}

#[cfg(test)]
mod tests;
