//! End-to-end runs of the command-line binary.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_asyflexa"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("asyflexa-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn generate_then_solve_produces_trace_and_solution() {
    let dir = tmp_dir("solve");
    let inst = dir.join("inst.bin");
    let out = bin()
        .args(["generate", "--family", "liu-wright", "--m", "40", "--n", "60"])
        .args(["--s", "5", "--sigma", "0.05", "--seed", "11"])
        .arg("--out")
        .arg(&inst)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let cfg = dir.join("solver.cfg");
    std::fs::write(&cfg, "rule = asyflexa\ngamma = 0.9\ntau.value = 1\nmerit = 1e-6\nmax_iter = 120000\n").unwrap();
    let trace = dir.join("trace.csv");
    let sol = dir.join("x.txt");
    let out = bin()
        .arg("solve")
        .arg("--instance")
        .arg(&inst)
        .arg("--config")
        .arg(&cfg)
        .arg("--trace")
        .arg(&trace)
        .arg("--solution")
        .arg(&sol)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = String::from_utf8_lossy(&out.stdout);
    assert!(summary.contains("reason=merit"), "summary: {summary}");

    let trace_text = std::fs::read_to_string(&trace).unwrap();
    assert!(trace_text.starts_with("time_s,k,objective,rel_err,merit,max_delay,gamma,tau"));
    assert!(trace_text.lines().count() > 2);
    let sol_lines = std::fs::read_to_string(&sol).unwrap();
    assert_eq!(sol_lines.lines().count(), 60);
    for line in sol_lines.lines() {
        line.parse::<f64>().unwrap();
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn bound_table_comes_out_with_sidecar() {
    let dir = tmp_dir("bound");
    let consts = dir.join("constants.txt");
    std::fs::write(
        &consts,
        "n_blocks = 8\nl_f = 4\nc_tilde_f = 1.5\nl_xhat = 2\nl_b = 3\nl_e = 4\np_min = 0.125\ncap_delta = 0.125\nf0 = 5\nfstar = 0\n",
    )
    .unwrap();
    let csv = dir.join("bounds.csv");
    let out = bin()
        .arg("bound")
        .arg("--constants")
        .arg(&consts)
        .args(["--deltas", "0,2", "--epsilons", "1e-1,1e-3"])
        .arg("--out")
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("delta,gamma_max,gamma_used,epsilon,k_epsilon_bound"));
    assert!(dir.join("bounds.meta.txt").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn bad_flags_fail_loudly() {
    let out = bin()
        .args(["generate", "--family", "no-such-family", "--out", "/tmp/x.bin"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let out = bin()
        .args(["bench", "error-curve", "--metric", "bogus", "--out-dir", "/tmp"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
