//! C ABI for the sdb control plane, codecs and simulator.
//!
//! Every fallible call returns an [`SdbStatus`]. On failure a description
//! is available from [`sdb_last_error`] on the same thread. Strings handed
//! out by this library must be released with [`sdb_string_free`]; handles
//! with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::net::Ipv4Addr;
use std::path::PathBuf;
use std::ptr;

use libc::{c_char, size_t};

use sdb::cloud::{CloudConfig, CloudError, ControlPlane, KdfParams};
use sdb::codec::{decode_dhcp, decode_dns_query, decode_tftp};
use sdb::scenario::{run_scenario, RunOptions, ScenarioError, ScenarioReport, ScenarioSpec};
use sdb::script::{parse_script, render_script};

/// Result codes shared by every function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdbStatus {
    Ok = 0,
    /// A pointer was null or a string was not UTF-8.
    InvalidArgument = 1,
    /// Input failed validation (bad template, bad name, malformed packet).
    Invalid = 2,
    NotFound = 3,
    Conflict = 4,
    /// Credentials were rejected. The attempt is still logged.
    Unauthorized = 5,
    /// Storage or simulation failure.
    Runtime = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: SdbStatus, msg: impl Into<String>) -> SdbStatus {
    set_error(msg);
    status
}

fn cloud_status(e: &CloudError) -> SdbStatus {
    match e {
        CloudError::NoSuchOs(_) | CloudError::NoSuchFile(..) | CloudError::NoSuchUser(_) => SdbStatus::NotFound,
        CloudError::DuplicateName(_) | CloudError::DuplicateUser(_) | CloudError::OsInUse(_) => SdbStatus::Conflict,
        CloudError::Store(_) => SdbStatus::Runtime,
        _ => SdbStatus::Invalid,
    }
}

fn cloud_fail(e: CloudError) -> SdbStatus {
    fail(cloud_status(&e), e.to_string())
}

fn scenario_fail(e: ScenarioError) -> SdbStatus {
    let status = match e {
        ScenarioError::Invalid(_) => SdbStatus::Invalid,
        ScenarioError::Runtime(_) => SdbStatus::Runtime,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning a panic into [`SdbStatus::Panic`].
fn guard(f: impl FnOnce() -> SdbStatus) -> SdbStatus {
    std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|_| fail(SdbStatus::Panic, "internal panic"))
}

unsafe fn arg_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, SdbStatus> {
    if p.is_null() {
        return Err(fail(SdbStatus::InvalidArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SdbStatus::InvalidArgument, format!("`{name}` is not UTF-8")))
}

unsafe fn arg_bytes<'a>(p: *const u8, len: size_t, name: &str) -> Result<&'a [u8], SdbStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(SdbStatus::InvalidArgument, format!("`{name}` is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> SdbStatus {
    if out.is_null() {
        return fail(SdbStatus::InvalidArgument, "output pointer is null");
    }
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            SdbStatus::Ok
        }
        Err(_) => fail(SdbStatus::Runtime, "result contains a NUL byte"),
    }
}

macro_rules! try_arg {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sdb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sdb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sdb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Opaque control-plane handle.
pub struct SdbPlane {
    inner: ControlPlane,
}

/// Opens (or creates) a store at `store_dir`. `base_url` may be null for
/// the default. `fast_kdf` nonzero selects cheap password hashing, meant
/// for tests only.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdb_plane_open(
    store_dir: *const c_char,
    base_url: *const c_char,
    fast_kdf: i32,
    out: *mut *mut SdbPlane,
) -> SdbStatus {
    guard(|| {
        let dir = try_arg!(arg_str(store_dir, "store_dir"));
        if out.is_null() {
            return fail(SdbStatus::InvalidArgument, "`out` is null");
        }
        let mut cfg = CloudConfig {
            store_dir: PathBuf::from(dir),
            ..CloudConfig::default()
        };
        if !base_url.is_null() {
            cfg.base_url = try_arg!(arg_str(base_url, "base_url")).to_string();
        }
        if fast_kdf != 0 {
            cfg.kdf = KdfParams {
                m_cost_kib: 64,
                t_cost: 1,
                p_cost: 1,
            };
        }
        match ControlPlane::open(cfg) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(SdbPlane { inner }));
                SdbStatus::Ok
            }
            Err(e) => cloud_fail(e),
        }
    })
}

/// Closes a control plane. Null is ignored.
///
/// # Safety
/// `plane` must come from [`sdb_plane_open`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sdb_plane_free(plane: *mut SdbPlane) {
    if !plane.is_null() {
        drop(Box::from_raw(plane));
    }
}

unsafe fn plane_ref<'a>(p: *const SdbPlane) -> Result<&'a ControlPlane, SdbStatus> {
    p.as_ref()
        .map(|p| &p.inner)
        .ok_or_else(|| fail(SdbStatus::InvalidArgument, "`plane` is null"))
}

/// Defines an OS from a boot template using `{{base_url}}` and `{{os_id}}`.
/// `kernel_params` may be null. The new OS id is written to `out_id`.
///
/// # Safety
/// Pointers must be valid as described for [`sdb_plane_open`].
#[no_mangle]
pub unsafe extern "C" fn sdb_plane_create_os(
    plane: *const SdbPlane,
    name: *const c_char,
    template: *const c_char,
    kernel_params: *const c_char,
    out_id: *mut *mut c_char,
) -> SdbStatus {
    guard(|| {
        let p = try_arg!(plane_ref(plane));
        let name = try_arg!(arg_str(name, "name"));
        let template = try_arg!(arg_str(template, "template"));
        let params = if kernel_params.is_null() { "" } else { try_arg!(arg_str(kernel_params, "kernel_params")) };
        match p.create_os(name, template, params) {
            Ok(os) => put_string(out_id, os.os_id),
            Err(e) => cloud_fail(e),
        }
    })
}

/// Stores a boot artifact for an OS.
///
/// # Safety
/// `data` must point to `len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn sdb_plane_upload_file(
    plane: *const SdbPlane,
    os_id: *const c_char,
    filename: *const c_char,
    data: *const u8,
    len: size_t,
) -> SdbStatus {
    guard(|| {
        let p = try_arg!(plane_ref(plane));
        let os_id = try_arg!(arg_str(os_id, "os_id"));
        let filename = try_arg!(arg_str(filename, "filename"));
        let data = try_arg!(arg_bytes(data, len, "data"));
        match p.upload_file(os_id, filename, data) {
            Ok(_) => SdbStatus::Ok,
            Err(e) => cloud_fail(e),
        }
    })
}

/// Creates a user assigned to `os_id`.
///
/// # Safety
/// String arguments must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sdb_plane_create_user(
    plane: *const SdbPlane,
    username: *const c_char,
    password: *const c_char,
    os_id: *const c_char,
) -> SdbStatus {
    guard(|| {
        let p = try_arg!(plane_ref(plane));
        let username = try_arg!(arg_str(username, "username"));
        let password = try_arg!(arg_str(password, "password"));
        let os_id = try_arg!(arg_str(os_id, "os_id"));
        match p.create_user(username, password, os_id) {
            Ok(_) => SdbStatus::Ok,
            Err(e) => cloud_fail(e),
        }
    })
}

/// Revokes a user's access. Existing log entries are kept.
///
/// # Safety
/// String arguments must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sdb_plane_deactivate_user(plane: *const SdbPlane, username: *const c_char) -> SdbStatus {
    guard(|| {
        let p = try_arg!(plane_ref(plane));
        let username = try_arg!(arg_str(username, "username"));
        match p.deactivate_user(username) {
            Ok(_) => SdbStatus::Ok,
            Err(e) => cloud_fail(e),
        }
    })
}

/// Authenticates one boot attempt and writes the issued script to
/// `out_script`. The script is written on rejection as well, and the call
/// then returns [`SdbStatus::Unauthorized`].
///
/// # Safety
/// String arguments must be NUL-terminated; `out_script` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdb_plane_authenticate(
    plane: *const SdbPlane,
    username: *const c_char,
    password: *const c_char,
    mac: *const c_char,
    client_ip: *const c_char,
    out_script: *mut *mut c_char,
) -> SdbStatus {
    guard(|| {
        let p = try_arg!(plane_ref(plane));
        let username = try_arg!(arg_str(username, "username"));
        let password = try_arg!(arg_str(password, "password"));
        let mac = try_arg!(arg_str(mac, "mac"));
        let ip: Ipv4Addr = match try_arg!(arg_str(client_ip, "client_ip")).parse() {
            Ok(ip) => ip,
            Err(_) => return fail(SdbStatus::InvalidArgument, "`client_ip` is not an IPv4 address"),
        };
        match p.authenticate_and_issue(username, password, mac, ip) {
            Ok((script, entry)) => {
                let status = put_string(out_script, render_script(&script));
                match (status, entry.success) {
                    (SdbStatus::Ok, false) => fail(
                        SdbStatus::Unauthorized,
                        format!("authentication failed for `{username}`"),
                    ),
                    (s, _) => s,
                }
            }
            Err(e) => cloud_fail(e),
        }
    })
}

/// Number of entries in the authentication log.
///
/// # Safety
/// `plane` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdb_plane_auth_log_len(plane: *const SdbPlane, out: *mut u64) -> SdbStatus {
    guard(|| {
        let p = try_arg!(plane_ref(plane));
        if out.is_null() {
            return fail(SdbStatus::InvalidArgument, "`out` is null");
        }
        *out = p.auth_log_len() as u64;
        SdbStatus::Ok
    })
}

/// Opaque simulation report.
pub struct SdbReport {
    inner: ScenarioReport,
}

/// Runs a scenario. `scenario` is either a bundled scenario name or a JSON
/// scenario document. A nonzero `seed_override` replaces the scenario seed.
///
/// # Safety
/// `scenario` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdb_simulate(scenario: *const c_char, seed_override: u64, out: *mut *mut SdbReport) -> SdbStatus {
    guard(|| {
        let text = try_arg!(arg_str(scenario, "scenario"));
        if out.is_null() {
            return fail(SdbStatus::InvalidArgument, "`out` is null");
        }
        let spec = match ScenarioSpec::bundled(text) {
            Some(s) => s,
            None if text.trim_start().starts_with('{') => match ScenarioSpec::from_json(text) {
                Ok(s) => s,
                Err(e) => return scenario_fail(e),
            },
            None => return fail(SdbStatus::NotFound, format!("no bundled scenario `{text}`")),
        };
        let opts = RunOptions {
            seed: (seed_override != 0).then_some(seed_override),
            ..RunOptions::default()
        };
        match run_scenario(&spec, &opts) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(SdbReport { inner }));
                SdbStatus::Ok
            }
            Err(e) => scenario_fail(e),
        }
    })
}

/// 1 when every expectation held, 0 otherwise or for a null report.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdb_report_passed(report: *const SdbReport) -> i32 {
    report.as_ref().map_or(0, |r| r.inner.passed as i32)
}

/// Serializes the report as JSON into `out_json`.
///
/// # Safety
/// `report` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdb_report_json(report: *const SdbReport, out_json: *mut *mut c_char) -> SdbStatus {
    guard(|| {
        let Some(r) = report.as_ref() else {
            return fail(SdbStatus::InvalidArgument, "`report` is null");
        };
        match serde_json::to_string(&r.inner) {
            Ok(s) => put_string(out_json, s),
            Err(e) => fail(SdbStatus::Runtime, e.to_string()),
        }
    })
}

/// Releases a report. Null is ignored.
///
/// # Safety
/// `report` must come from [`sdb_simulate`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sdb_report_free(report: *mut SdbReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Parses a boot script and writes its canonical rendering.
///
/// # Safety
/// `text` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sdb_script_normalize(text: *const c_char, out: *mut *mut c_char) -> SdbStatus {
    guard(|| {
        let text = try_arg!(arg_str(text, "text"));
        match parse_script(text) {
            Ok(s) => put_string(out, render_script(&s)),
            Err(e) => fail(SdbStatus::Invalid, e.to_string()),
        }
    })
}

/// Packet kinds accepted by [`sdb_packet_check`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdbPacketKind {
    Dhcp = 0,
    Tftp = 1,
    DnsQuery = 2,
}

/// Decodes a packet and reports whether it is well-formed. Returns
/// [`SdbStatus::Invalid`] with a description otherwise.
///
/// # Safety
/// `data` must point to `len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn sdb_packet_check(kind: SdbPacketKind, data: *const u8, len: size_t) -> SdbStatus {
    guard(|| {
        let data = try_arg!(arg_bytes(data, len, "data"));
        let result = match kind {
            SdbPacketKind::Dhcp => decode_dhcp(data).map(|_| ()).map_err(|e| e.to_string()),
            SdbPacketKind::Tftp => decode_tftp(data).map(|_| ()).map_err(|e| e.to_string()),
            SdbPacketKind::DnsQuery => decode_dns_query(data).map(|_| ()).map_err(|e| e.to_string()),
        };
        match result {
            Ok(()) => SdbStatus::Ok,
            Err(e) => fail(SdbStatus::Invalid, e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    fn last_error() -> String {
        unsafe { CStr::from_ptr(sdb_last_error()) }.to_string_lossy().into_owned()
    }

    unsafe fn take(s: *mut c_char) -> String {
        let out = CStr::from_ptr(s).to_string_lossy().into_owned();
        sdb_string_free(s);
        out
    }

    #[test]
    fn plane_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = c(dir.path().to_str().unwrap());
        unsafe {
            let mut plane = ptr::null_mut();
            assert_eq!(sdb_plane_open(path.as_ptr(), ptr::null(), 1, &mut plane), SdbStatus::Ok);

            let mut id = ptr::null_mut();
            let template = c("#!ipxe\nkernel {{base_url}}/files/{{os_id}}/vmlinuz\ninitrd {{base_url}}/files/{{os_id}}/core.gz\nboot\n");
            assert_eq!(
                sdb_plane_create_os(plane, c("Tiny Core").as_ptr(), template.as_ptr(), c("quiet").as_ptr(), &mut id),
                SdbStatus::Ok
            );
            let os_id = take(id);
            let cos = c(&os_id);
            let data = [7u8; 100];
            for f in ["vmlinuz", "core.gz"] {
                assert_eq!(
                    sdb_plane_upload_file(plane, cos.as_ptr(), c(f).as_ptr(), data.as_ptr(), data.len()),
                    SdbStatus::Ok
                );
            }
            assert_eq!(
                sdb_plane_create_user(plane, c("alice").as_ptr(), c("pw").as_ptr(), cos.as_ptr()),
                SdbStatus::Ok
            );
            assert_eq!(
                sdb_plane_create_user(plane, c("alice").as_ptr(), c("pw").as_ptr(), cos.as_ptr()),
                SdbStatus::Conflict
            );

            let mut script = ptr::null_mut();
            let (mac, ip) = (c("52:54:00:00:00:01"), c("10.0.2.100"));
            assert_eq!(
                sdb_plane_authenticate(plane, c("alice").as_ptr(), c("pw").as_ptr(), mac.as_ptr(), ip.as_ptr(), &mut script),
                SdbStatus::Ok
            );
            assert!(take(script).contains(&format!("/files/{os_id}/")));

            assert_eq!(sdb_plane_deactivate_user(plane, c("alice").as_ptr()), SdbStatus::Ok);
            let mut script = ptr::null_mut();
            assert_eq!(
                sdb_plane_authenticate(plane, c("alice").as_ptr(), c("pw").as_ptr(), mac.as_ptr(), ip.as_ptr(), &mut script),
                SdbStatus::Unauthorized
            );
            assert!(!take(script).contains("/files/"));

            let mut n = 0;
            assert_eq!(sdb_plane_auth_log_len(plane, &mut n), SdbStatus::Ok);
            assert_eq!(n, 2);
            sdb_plane_free(plane);
        }
    }

    #[test]
    fn errors_are_reported() {
        unsafe {
            let mut plane = ptr::null_mut();
            assert_eq!(sdb_plane_open(ptr::null(), ptr::null(), 1, &mut plane), SdbStatus::InvalidArgument);
            assert!(last_error().contains("store_dir"));
            assert_eq!(
                sdb_plane_create_user(ptr::null(), ptr::null(), ptr::null(), ptr::null()),
                SdbStatus::InvalidArgument
            );

            let dir = tempfile::tempdir().unwrap();
            let path = c(dir.path().to_str().unwrap());
            assert_eq!(sdb_plane_open(path.as_ptr(), ptr::null(), 1, &mut plane), SdbStatus::Ok);
            let mut id = ptr::null_mut();
            let bad = c("#!ipxe\nkernel {{base_url}}/files/other/k\nboot\n");
            assert_eq!(
                sdb_plane_create_os(plane, c("x").as_ptr(), bad.as_ptr(), ptr::null(), &mut id),
                SdbStatus::Invalid
            );
            assert!(last_error().contains("outside"));
            assert_eq!(
                sdb_plane_create_user(plane, c("bob").as_ptr(), c("pw").as_ptr(), c("nope").as_ptr()),
                SdbStatus::NotFound
            );
            sdb_plane_free(plane);
        }
    }

    #[test]
    fn simulate_bundled() {
        unsafe {
            let mut report = ptr::null_mut();
            assert_eq!(sdb_simulate(c("wrong-password").as_ptr(), 0, &mut report), SdbStatus::Ok);
            assert_eq!(sdb_report_passed(report), 1);
            let mut json = ptr::null_mut();
            assert_eq!(sdb_report_json(report, &mut json), SdbStatus::Ok);
            let v: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
            assert_eq!(v["scenario"], "wrong-password");
            sdb_report_free(report);

            assert_eq!(sdb_simulate(c("no-such").as_ptr(), 0, &mut report), SdbStatus::NotFound);
            assert_eq!(sdb_simulate(c("{").as_ptr(), 0, &mut report), SdbStatus::Invalid);
        }
    }

    #[test]
    fn script_and_packets() {
        unsafe {
            let mut out = ptr::null_mut();
            let text = c("#!ipxe\n  echo  hi\nkernel http://h/k   quiet\nboot\n");
            assert_eq!(sdb_script_normalize(text.as_ptr(), &mut out), SdbStatus::Ok);
            assert!(take(out).starts_with("#!ipxe\n"));
            assert_eq!(sdb_script_normalize(c("nope").as_ptr(), &mut out), SdbStatus::Invalid);

            let rrq = b"\x00\x01undionly.kpxe\x00octet\x00";
            assert_eq!(sdb_packet_check(SdbPacketKind::Tftp, rrq.as_ptr(), rrq.len()), SdbStatus::Ok);
            assert_eq!(sdb_packet_check(SdbPacketKind::Dhcp, rrq.as_ptr(), rrq.len()), SdbStatus::Invalid);
            assert_eq!(sdb_packet_check(SdbPacketKind::DnsQuery, ptr::null(), 0), SdbStatus::Invalid);
            assert!(!sdb_version().is_null());
        }
    }
}
