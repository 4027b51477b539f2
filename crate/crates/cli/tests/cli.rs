use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_egfem-bench"))
}

#[test]
fn bench_writes_parsable_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.csv");
    let status = bin()
        .args([
            "bench",
            "--problem",
            "quadratic",
            "--method",
            "sga,egfem-p2",
            "--levels",
            "3",
            "--repeats",
            "1",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("problem,method,level,system_size"));
    let rows = egfem::bench::rows_from_csv(&text).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].method, "sga");
    assert_eq!(rows[1].method, "egfem-p2");
    assert_eq!(rows[0].system_size, 81);
    assert_eq!(rows[1].status, "converged");
    assert!(rows[1].speedup_vs_sga.is_some());
    assert!(rows[1].rel_l2_error.unwrap() > 0.0);
}

#[test]
fn bench_writes_parsable_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let status = bin()
        .args([
            "bench",
            "--problem",
            "quadratic",
            "--method",
            "gfem",
            "--levels",
            "3",
            "--repeats",
            "0",
            "--format",
            "json",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let report = egfem::bench::parse_report(&out).unwrap();
    assert_eq!(report.config.problem, "quadratic");
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.rows[0].system_size, 162);
}

#[test]
fn bench_rejects_unknown_problem() {
    let out = bin()
        .args(["bench", "--problem", "nope", "--method", "sga", "--levels", "3", "--out", "/tmp/x.csv"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn mesh_info_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("square.msh");
    // one unit square split along the diagonal, all edges on physical line 1
    std::fs::write(
        &path,
        "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n\
         $Nodes\n4\n1 0 0 0\n2 1 0 0\n3 1 1 0\n4 0 1 0\n$EndNodes\n\
         $Elements\n6\n\
         1 1 2 1 1 1 2\n2 1 2 1 1 2 3\n3 1 2 1 1 3 4\n4 1 2 1 1 4 1\n\
         5 2 2 0 1 1 2 3\n6 2 2 0 1 1 3 4\n$EndElements\n",
    )
    .unwrap();
    let out = bin().args(["mesh-info", "--msh"]).arg(&path).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("vertices:        4"));
    assert!(text.contains("triangles:       2"));
    assert!(text.contains("total area:      1.0"));
}

#[test]
fn verify_passes() {
    let out = bin().arg("verify").output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "verify failed:\n{text}");
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 4);
    assert!(!text.contains("FAIL"));
}

#[test]
fn rejects_bad_thread_env() {
    let out = bin()
        .env("EGFEM_NUM_THREADS", "zero")
        .arg("verify")
        .output()
        .unwrap();
    assert!(!out.status.success());
}
