use super::*;
use crate::http::HttpRequest;

const TEMPLATE: &str = "#!ipxe\nkernel {{base_url}}/files/{{os_id}}/vmlinuz\ninitrd {{base_url}}/files/{{os_id}}/core.gz\nboot\n";
const IP: Ipv4Addr = Ipv4Addr::new(192, 168, 77, 100);

fn plane(dir: &Path) -> ControlPlane {
    ControlPlane::open(CloudConfig {
        store_dir: dir.to_path_buf(),
        kdf: KdfParams::fast(),
        admin_token: Some("t0ken".into()),
        ..CloudConfig::default()
    })
    .unwrap()
}

fn seeded(dir: &Path) -> (ControlPlane, String) {
    let cp = plane(dir);
    let os = cp.create_os("Tiny Core", TEMPLATE, "quiet").unwrap();
    cp.upload_file(&os.os_id, "vmlinuz", b"kernel-bytes").unwrap();
    cp.upload_file(&os.os_id, "core.gz", b"initrd-bytes").unwrap();
    cp.create_user("alice", "pw1", &os.os_id).unwrap();
    (cp, os.os_id)
}

#[test]
fn os_ids_are_unique_slugs() {
    let dir = tempfile::tempdir().unwrap();
    let cp = plane(dir.path());
    let a = cp.create_os("Tiny Core", TEMPLATE, "").unwrap();
    assert_eq!(a.os_id, "tiny-core");
    assert!(matches!(
        cp.create_os("tiny core", TEMPLATE, ""),
        Err(CloudError::DuplicateName(_))
    ));
    let b = cp.create_os("Tiny-Core", TEMPLATE, "").unwrap();
    assert_eq!(b.os_id, "tiny-core-2");
    assert_eq!(cp.resolve_os("Tiny Core").unwrap(), "tiny-core");
}

#[test]
fn upload_rules() {
    let dir = tempfile::tempdir().unwrap();
    let (cp, os) = seeded(dir.path());
    assert!(matches!(cp.upload_file(&os, "x", b""), Err(CloudError::EmptyFile)));
    assert!(matches!(
        cp.upload_file(&os, "../x", b"1"),
        Err(CloudError::InvalidFilename(_))
    ));
    assert!(matches!(
        cp.upload_file("nope", "x", b"1"),
        Err(CloudError::NoSuchOs(_))
    ));
    let replaced = cp.upload_file(&os, "vmlinuz", b"new kernel").unwrap();
    assert_eq!(cp.get_os(&os).unwrap().files.len(), 2);
    assert_eq!(replaced.digest, sha256_hex(b"new kernel"));
}

#[test]
fn successful_auth_issues_assigned_os_script() {
    let dir = tempfile::tempdir().unwrap();
    let (cp, os) = seeded(dir.path());
    let (script, entry) = cp
        .authenticate_and_issue("alice", "pw1", "52-54-00-AA-BB-CC", IP)
        .unwrap();
    assert!(entry.success);
    assert_eq!(entry.mac, "52:54:00:aa:bb:cc");
    assert_eq!(
        script.statements()[0],
        Statement::Kernel {
            url: format!("http://boot.cloud.example/files/{os}/vmlinuz"),
            params: "quiet".into()
        }
    );
}

#[test]
fn failures_are_uniform_and_logged() {
    let dir = tempfile::tempdir().unwrap();
    let (cp, _) = seeded(dir.path());
    let (bad_pw, e1) = cp.authenticate_and_issue("alice", "wrong", "m", IP).unwrap();
    let (no_user, e2) = cp.authenticate_and_issue("bob", "pw1", "m", IP).unwrap();
    cp.deactivate_user("alice").unwrap();
    let (inactive, e3) = cp.authenticate_and_issue("alice", "pw1", "m", IP).unwrap();
    assert_eq!(bad_pw, no_user);
    assert_eq!(bad_pw, inactive);
    assert_eq!(e1.failure_reason, Some(FailureReason::BadPassword));
    assert_eq!(e2.failure_reason, Some(FailureReason::NoSuchUser));
    assert_eq!(e3.failure_reason, Some(FailureReason::Deactivated));
    assert_eq!(cp.auth_log_len(), 3);
    assert_eq!([e1.seq, e2.seq, e3.seq], [1, 2, 3]);
}

#[test]
fn delete_os_in_use_refused() {
    let dir = tempfile::tempdir().unwrap();
    let (cp, os) = seeded(dir.path());
    assert!(matches!(cp.delete_os(&os), Err(CloudError::OsInUse(_))));
    cp.delete_user("alice").unwrap();
    cp.delete_os(&os).unwrap();
    assert!(!dir.path().join("files").join(&os).exists());
}

#[test]
fn ranges_and_digest() {
    let dir = tempfile::tempdir().unwrap();
    let (cp, os) = seeded(dir.path());
    let full = cp.serve_file(&os, "vmlinuz", None).unwrap();
    assert_eq!(full.bytes, b"kernel-bytes");
    assert_eq!(full.digest, sha256_hex(b"kernel-bytes"));
    let part = cp
        .serve_file(&os, "vmlinuz", Some(ByteRange { start: 7, end: None }))
        .unwrap();
    assert_eq!(part.bytes, b"bytes");
    assert_eq!(part.range, Some((7, 11)));
    assert!(matches!(
        cp.serve_file(&os, "vmlinuz", Some(ByteRange { start: 12, end: None })),
        Err(CloudError::BadRange)
    ));
}

#[test]
fn log_pagination_is_newest_first() {
    let dir = tempfile::tempdir().unwrap();
    let (cp, _) = seeded(dir.path());
    for i in 0..5 {
        let pw = if i % 2 == 0 { "pw1" } else { "x" };
        cp.authenticate_and_issue("alice", pw, "52:54:00:00:00:01", IP).unwrap();
    }
    let page = cp.list_auth_log(&LogFilter::default(), 1, 2);
    assert_eq!(page.total, 5);
    assert_eq!(page.entries.iter().map(|e| e.seq).collect::<Vec<_>>(), [5, 4]);
    let page3 = cp.list_auth_log(&LogFilter::default(), 3, 2);
    assert_eq!(page3.entries.iter().map(|e| e.seq).collect::<Vec<_>>(), [1]);
    let failures = cp.list_auth_log(
        &LogFilter {
            success: Some(false),
            mac: Some("52-54-00-00-00-01".into()),
            ..LogFilter::default()
        },
        1,
        50,
    );
    assert_eq!(failures.total, 2);
}

#[test]
fn state_survives_reopen() {
    let dir = tempfile::tempdir().unwrap();
    {
        let (cp, _) = seeded(dir.path());
        cp.authenticate_and_issue("alice", "pw1", "m", IP).unwrap();
    }
    let cp = plane(dir.path());
    assert_eq!(cp.list_users().len(), 1);
    assert_eq!(cp.auth_log_len(), 1);
    assert!(cp.verify_files().is_empty());
    let (_, e) = cp.authenticate_and_issue("alice", "pw1", "m", IP).unwrap();
    assert!(e.success);
    assert_eq!(e.seq, 2);
}

#[test]
fn http_routes() {
    let dir = tempfile::tempdir().unwrap();
    let (cp, os) = seeded(dir.path());
    let boot = cp.handle_http(&HttpRequest::get("/boot"));
    assert_eq!(boot.status, 200);
    assert!(String::from_utf8_lossy(&boot.body).contains("login"));

    let auth = cp.handle_http(
        &HttpRequest::get("/auth?username=alice&password=pw1&mac=52:54:00:00:00:01").with_remote(IP),
    );
    assert!(String::from_utf8_lossy(&auth.body).contains("kernel"));

    let file = cp.handle_http(
        &HttpRequest::get(&format!("/files/{os}/vmlinuz")).with_header("Range", "bytes=0-5"),
    );
    assert_eq!(file.status, 206);
    assert_eq!(file.body, b"kernel");
    assert_eq!(file.header("content-range"), Some("bytes 0-5/12"));
    assert_eq!(file.header(DIGEST_HEADER), Some(sha256_hex(b"kernel-bytes").as_str()));

    assert_eq!(cp.handle_http(&HttpRequest::get("/api/users")).status, 401);
    let users = cp.handle_http(&HttpRequest::get("/api/users").with_header("Authorization", "Bearer t0ken"));
    assert_eq!(users.status, 200);
    let body = String::from_utf8_lossy(&users.body);
    assert!(body.contains("alice") && !body.contains("digest"));

    let dup = cp.handle_http(
        &HttpRequest::new(
            "POST",
            "/api/users",
            br#"{"username":"alice","password":"p","assigned_os":"tiny-core"}"#.to_vec(),
        )
        .with_header("Authorization", "Bearer t0ken"),
    );
    assert_eq!(dup.status, 409);
    let v: serde_json::Value = serde_json::from_slice(&dup.body).unwrap();
    assert_eq!(v["error"], "duplicate_user");

    let logs = cp.handle_http(
        &HttpRequest::get("/api/logs?username=alice&success=true").with_header("Authorization", "Bearer t0ken"),
    );
    let v: serde_json::Value = serde_json::from_slice(&logs.body).unwrap();
    assert_eq!(v["total"], 1);
    assert_eq!(cp.handle_http(&HttpRequest::get("/admin")).status, 200);
    assert_eq!(cp.handle_http(&HttpRequest::get("/nope")).status, 404);
}
