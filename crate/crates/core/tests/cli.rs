use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

fn sdb() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sdb"));
    cmd.env_remove("SDB_LOG").env_remove("SDB_TOKEN").env_remove("SDB_URL");
    cmd
}

fn run(args: &[&str]) -> Output {
    sdb().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn lists_scenarios() {
    let out = run(&["scenarios"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for name in ["paper-experiment", "offboarding", "mode-switch", "poisoning", "restart"] {
        assert!(text.contains(name), "{text}");
    }
}

#[test]
fn simulate_json_report() {
    let out = run(&["simulate", "--scenario", "wrong-password", "--json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["scenario"], "wrong-password");
    assert_eq!(report["passed"], true);
}

#[test]
fn simulate_rejects_bad_input() {
    assert_eq!(code(&run(&["simulate", "--scenario", "no-such-scenario"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(code(&run(&["simulate", "--scenario", bad.to_str().unwrap()])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
}

struct Cloud(Child);

impl Drop for Cloud {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn start_cloud(store: &Path, port: u16) -> Cloud {
    let child = sdb()
        .args(["cloud", "--listen", &format!("127.0.0.1:{port}"), "--store"])
        .arg(store)
        .args(["--token", "t0ken", "--log", "warn"])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let cloud = Cloud(child);
    let deadline = Instant::now() + Duration::from_secs(30);
    while TcpStream::connect(("127.0.0.1", port)).is_err() {
        assert!(Instant::now() < deadline, "cloud did not start");
        std::thread::sleep(Duration::from_millis(50));
    }
    cloud
}

#[test]
fn admin_workflow_against_running_cloud() {
    let dir = tempfile::tempdir().unwrap();
    let port = free_port();
    let _cloud = start_cloud(&dir.path().join("store"), port);
    let url = format!("http://127.0.0.1:{port}");
    let admin = |args: &[&str]| {
        sdb()
            .args(["admin", "--url", &url, "--token", "t0ken"])
            .args(args)
            .output()
            .unwrap()
    };

    let out = admin(&["os", "create", "Tiny Core Linux", "--kernel", "vmlinuz", "--initrd", "core.gz", "--json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let os: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let os_id = os["os_id"].as_str().unwrap().to_string();

    let kernel = dir.path().join("vmlinuz");
    std::fs::write(&kernel, vec![9u8; 4096]).unwrap();
    let out = admin(&["os", "upload", "tiny core linux", kernel.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let out = admin(&["user", "create", "alice", "--os", &os_id, "--password", "pw"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(code(&admin(&["user", "create", "alice", "--os", &os_id, "--password", "pw"])), 2);

    let out = admin(&["os", "list"]);
    assert!(stdout(&out).contains("Tiny Core Linux"));

    let auth = ureq::get(format!("{url}/auth?username=alice&password=wrong&mac=52:54:00:00:00:07"))
        .call()
        .unwrap()
        .body_mut()
        .read_to_string()
        .unwrap();
    assert!(!auth.contains("/files/"));

    let out = admin(&["logs", "--failed", "--json"]);
    assert_eq!(code(&out), 0);
    let logs: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(logs["total"], 1);
    assert_eq!(logs["entries"][0]["mac"], "52:54:00:00:00:07");

    let out = sdb().args(["admin", "--url", &url, "--token", "wrong", "os", "list"]).output().unwrap();
    assert_eq!(code(&out), 2);

    let out = sdb()
        .args(["admin", "--url", &format!("http://127.0.0.1:{}", free_port()), "--token", "t0ken", "os", "list"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 3);
}
