use std::path::PathBuf;
use std::process::Command;

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/sdb.h")
}

#[test]
fn header_declares_every_export() {
    let text = std::fs::read_to_string(header()).expect("header generated by build.rs");
    let src = include_str!("../src/lib.rs");
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 12, "{exports:?}");
    for name in exports {
        assert!(text.contains(&format!("{name}(")), "{name} missing from sdb.h");
    }
    assert!(text.contains("typedef struct SdbPlane SdbPlane;"));
    assert!(text.contains("SDB_STATUS_UNAUTHORIZED = 5"));
}

#[test]
fn header_compiles_as_c() {
    let probe = tempfile::tempdir().unwrap();
    let src = probe.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"sdb.h\"\nint main(void) { SdbPlane *p = 0; sdb_plane_free(p); return sdb_version() == 0; }\n",
    )
    .unwrap();
    let include = header().parent().unwrap().to_path_buf();
    let status = match Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .status()
    {
        Ok(s) => s,
        Err(_) => return, // no C compiler on this host
    };
    assert!(status.success());
}
