//! End-to-end tests of the binary: exit codes, determinism, and the
//! documented file pipelines.

use std::path::Path;
use std::process::{Command, Output};

fn corrlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corrlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 output")
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).expect("write test file");
}

#[test]
fn gen_tree_is_canonical_and_parses_back() {
    let out = corrlab(&["gen", "tree", "--depth", "3"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("structure tree3\nuniverse 7\n"));
    assert!(text.contains("rel S 2"));
    // Byte-identical across runs.
    assert_eq!(text, stdout(&corrlab(&["gen", "tree", "--depth", "3"])));
}

#[test]
fn gen_rejects_bad_sizes() {
    let out = corrlab(&["gen", "shift", "--m", "3", "--d", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let out = corrlab(&["gen", "tree", "--depth", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_one() {
    let out = corrlab(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(1));
    let out = corrlab(&["corr", "fibres", "/definitely/not/a/file"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn tree_fibre_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let structure = dir.path().join("t3.struct");
    write(&structure, &stdout(&corrlab(&["gen", "tree", "--depth", "3"])));

    // The successor relation as a correspondence on the full universe.
    let corr = dir.path().join("s.corr");
    write(
        &corr,
        "corr S tree3\ndom 0 1 2 3 4 5 6\ncod 0 1 2 3 4 5 6\n\
         pair 0 1\npair 0 2\npair 1 3\npair 1 4\npair 2 5\npair 2 6\nend\n",
    );
    let out = corrlab(&["corr", "fibres", corr.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    // Internal nodes have two successors, leaves none; the root has no
    // predecessor.
    assert!(text.contains("left histogram  0x4 2x3"), "got:\n{text}");
    assert!(text.contains("right histogram 0x1 1x6"), "got:\n{text}");

    // Not uniform: leaves break it.
    let out = corrlab(&["corr", "uniform", corr.to_str().unwrap()]);
    assert!(stdout(&out).contains("not uniform"));
    let out = corrlab(&["corr", "ratio", corr.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    // Decomposition needs a single-orbit domain, which the full universe
    // is not.
    let out = corrlab(&[
        "corr",
        "decompose",
        corr.to_str().unwrap(),
        "--structure",
        structure.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unimod_check_exits_zero_on_generated_structures() {
    let dir = tempfile::tempdir().unwrap();
    for (args, name) in [
        (vec!["gen", "tree", "--depth", "3"], "t"),
        (vec!["gen", "levels", "--n", "3"], "l"),
        (vec!["gen", "shift", "--m", "4", "--d", "1"], "s"),
    ] {
        let path = dir.path().join(format!("{name}.struct"));
        write(&path, &stdout(&corrlab(&args)));
        let out = corrlab(&["unimod", "check", path.to_str().unwrap(), "--max-params", "1"]);
        assert_eq!(out.status.code(), Some(0), "unimod check on {name}");
        assert!(stdout(&out).contains("verdict true"));
    }
}

#[test]
fn unimod_check_json_is_versioned_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.struct");
    write(&path, &stdout(&corrlab(&["gen", "tree", "--depth", "2"])));
    let a = corrlab(&["unimod", "check", path.to_str().unwrap(), "--max-params", "2", "--json"]);
    let b = corrlab(&["unimod", "check", path.to_str().unwrap(), "--max-params", "2", "--json"]);
    assert_eq!(stdout(&a), stdout(&b));
    let parsed: serde_json::Value = serde_json::from_str(&stdout(&a)).expect("valid json");
    assert_eq!(parsed["schema"], "corrlab.report/1");
    assert_eq!(parsed["command"], "unimod check");
    assert_eq!(parsed["payload"]["verdict"], true);
}

#[test]
fn commensurable_reports_orbit_size_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("star.struct");
    write(
        &path,
        "structure star\nuniverse 3\nrel E 2\n0 1\n0 2\nend\n",
    );
    let out = corrlab(&[
        "unimod",
        "commensurable",
        path.to_str().unwrap(),
        "--p",
        "0",
        "--q",
        "1",
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).ends_with(": 2\n"), "got {}", stdout(&out));
}

const IDENTITY_SPEC: &str = "symset X\nray t\nend\n\
    symmap f X X\nrule t -> t block 1 prefix 0 offset 0\nend\n";
const TREE_SPEC: &str = "symset X\nray t\nend\n\
    symmap g X X\nrule t -> t block 2 prefix 1 offset 0\nexcept r:t:0 -> r:t:0\nend\n";

#[test]
fn sym_fibres_reports_the_root_exception() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("tree.sym");
    write(&spec, TREE_SPEC);
    let out = corrlab(&["sym", "fibres", spec.to_str().unwrap(), "--depth", "100"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("eventually uniform: 2"));
    assert!(text.contains("exceptional fibre at r:t:0: size 3"));
    assert!(text.contains("consistent"));
}

#[test]
fn sym_materialize_lists_the_slice() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("id.sym");
    write(&spec, IDENTITY_SPEC);
    let out = corrlab(&["sym", "materialize", spec.to_str().unwrap(), "--depth", "4"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("symset X: 4 elements at depth 4"));
    assert!(text.contains("r:t:0 -> r:t:0"));
}

#[test]
fn repair_pipeline_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("f.sym");
    let g = dir.path().join("g.sym");
    let cert = dir.path().join("cert.txt");
    write(&f, IDENTITY_SPEC);
    write(&g, TREE_SPEC);

    let out = corrlab(&[
        "repair",
        "run",
        "--f",
        f.to_str().unwrap(),
        "--g",
        g.to_str().unwrap(),
        "--out",
        cert.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("case 1"));
    assert!(text.contains("n' 1 |P| 2 |Q| 2"));

    let out = corrlab(&["repair", "verify", cert.to_str().unwrap(), "--depth", "1000"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("certificate accepted at depth 1000"));

    // Certificates are bit-identical across runs.
    let first = std::fs::read_to_string(&cert).unwrap();
    corrlab(&[
        "repair",
        "run",
        "--f",
        f.to_str().unwrap(),
        "--g",
        g.to_str().unwrap(),
        "--out",
        cert.to_str().unwrap(),
    ]);
    assert_eq!(first, std::fs::read_to_string(&cert).unwrap());

    // A tampered certificate is rejected.
    let tampered = first.replace("except r:t#0:1 -> p:Q1", "except r:t#0:1 -> p:Q0");
    assert_ne!(first, tampered);
    write(&cert, &tampered);
    let out = corrlab(&["repair", "verify", cert.to_str().unwrap(), "--depth", "1000"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(err.contains("fibre"), "stderr: {err}");
}

#[test]
fn repair_rejects_balanced_input() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("f.sym");
    write(&f, IDENTITY_SPEC);
    let out = corrlab(&[
        "repair",
        "run",
        "--f",
        f.to_str().unwrap(),
        "--g",
        f.to_str().unwrap(),
        "--out",
        dir.path().join("cert.txt").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nothing to repair"));
}

#[test]
fn compose_emits_a_corr_file() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.corr");
    // The 3-cycle edge correspondence composed with itself is the
    // reversed-edge correspondence.
    write(
        &a,
        "corr e c3\ndom 0 1 2\ncod 0 1 2\npair 0 1\npair 1 2\npair 2 0\nend\n",
    );
    let out = corrlab(&["corr", "compose", a.to_str().unwrap(), a.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("corr e_e c3\n"));
    assert!(text.contains("pair 0 2\n") && text.contains("pair 1 0\n"));
}

#[test]
fn product_reports_the_fibre_formulas() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.corr");
    write(&a, "corr star s\ndom 0\ncod 1 2\npair 0 1\npair 0 2\nend\n");
    let out = corrlab(&[
        "corr",
        "product",
        a.to_str().unwrap(),
        a.to_str().unwrap(),
        "--json",
    ]);
    assert!(out.status.success());
    let parsed: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(parsed["payload"]["k"], 2);
    assert_eq!(parsed["payload"]["l"], 2);
}
