//! End-to-end checks of the command-line harness: exit codes, output
//! schemas, and byte-level reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_quantgrid")
}

struct Workspace {
    dir: PathBuf,
}

impl Workspace {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!(
            "quantgrid-cli-test-{tag}-{}",
            std::process::id()
        ));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        Workspace { dir }
    }

    fn file(&self, name: &str, contents: &str) -> PathBuf {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).unwrap();
        path
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

impl Drop for Workspace {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.dir);
    }
}

fn run_cli(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn quadratic_config(bits: &str, out: &Path, extra: &str) -> String {
    format!(
        r#"
[problem]
kind = "quadratic"
d = 4
mu = 1.0
lip = 6.0
seed = 11

[topology]
kind = "master"
nodes = 4

[algorithm]
kind = "gd"

[quantization]
bits = {bits}

{extra}

[run]
eps = 1e-4
horizon = 60
seed = 9
out = "{}"
"#,
        out.display()
    )
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("missing {}: {e}", path.display()))
}

#[test]
fn run_writes_trace_and_summary() {
    let ws = Workspace::new("run-ok");
    let out = ws.path("results");
    let config = ws.file("exp.toml", &quadratic_config("16", &out, ""));
    let result = run_cli(&["run", "--config", config.to_str().unwrap()]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let trace = read(&out.join("trace.csv"));
    assert!(trace.starts_with("k,err,r_k,bits_cum,t_seconds\n"));
    assert_eq!(trace.lines().count(), 62);
    let summary = read(&out.join("summary.txt"));
    assert!(summary.contains("status: completed"));
    assert!(summary.contains("envelope: held"));
}

#[test]
fn identical_config_and_seed_reproduce_bytes() {
    let ws = Workspace::new("determinism");
    let out_a = ws.path("a");
    let out_b = ws.path("b");
    let config_a = ws.file("a.toml", &quadratic_config("12", &out_a, ""));
    let config_b = ws.file("b.toml", &quadratic_config("12", &out_b, ""));
    assert!(run_cli(&["run", "--config", config_a.to_str().unwrap()]).status.success());
    assert!(run_cli(&["run", "--config", config_b.to_str().unwrap()]).status.success());
    assert_eq!(read(&out_a.join("trace.csv")), read(&out_b.join("trace.csv")));
    assert_eq!(read(&out_a.join("summary.txt")), read(&out_b.join("summary.txt")));
}

#[test]
fn too_few_bits_exits_4_and_names_the_minimum() {
    let ws = Workspace::new("divergent");
    let out = ws.path("results");
    let config = ws.file("exp.toml", &quadratic_config("2", &out, ""));
    let result = run_cli(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(4));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("bits"), "stderr: {stderr}");
}

#[test]
fn overflow_exits_3() {
    let ws = Workspace::new("overflow");
    let out = ws.path("results");
    // A radius schedule at half the contraction factor shrinks the grid
    // far too fast.
    let config = ws.file(
        "exp.toml",
        &quadratic_config("16", &out, "").replace("bits = 16", "bits = 16\nalpha = 0.33"),
    );
    let result = run_cli(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(3));
    // The partial trace is still on disk.
    assert!(out.join("trace.csv").exists());
}

#[test]
fn missing_input_file_exits_2() {
    let ws = Workspace::new("missing-file");
    let out = ws.path("results");
    let config = ws.file(
        "exp.toml",
        &format!(
            r#"
[problem]
kind = "csv"
path = "{}"
rho = 1.0

[topology]
kind = "master"
nodes = 2

[algorithm]
kind = "gd"

[quantization]
bits = 8

[run]
out = "{}"
"#,
            ws.path("does-not-exist.csv").display(),
            out.display()
        ),
    );
    let result = run_cli(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn unknown_config_key_exits_2() {
    let ws = Workspace::new("unknown-key");
    let out = ws.path("results");
    let config = ws.file(
        "exp.toml",
        &quadratic_config("8", &out, "").replace("[run]", "[run]\nbogus_key = 1"),
    );
    let result = run_cli(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("bogus_key"), "stderr: {stderr}");
}

#[test]
fn sweep_bits_emits_schema_and_marks_argmin() {
    let ws = Workspace::new("sweep");
    let out = ws.path("results");
    let config = ws.file(
        "exp.toml",
        &quadratic_config("\"6..12\"", &out, "").replace(
            "bits = \"6..12\"",
            "bits = \"6..12\"\nempirical = true",
        ),
    );
    let result = run_cli(&["run", "--config", config.to_str().unwrap()]);
    // run rejects ranges; the sweep accepts them.
    assert_eq!(result.status.code(), Some(2));
    let result = run_cli(&["sweep-bits", "--config", config.to_str().unwrap()]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let sweep = read(&out.join("sweep_bits.csv"));
    let mut lines = sweep.lines();
    assert_eq!(
        lines.next().unwrap(),
        "b,k_eps,B_eps,T_eps,empirical_k,empirical_bits,argmin"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 7);
    let marked: Vec<&str> = rows
        .iter()
        .filter(|r| r.ends_with(",1"))
        .copied()
        .collect();
    assert_eq!(marked.len(), 1, "exactly one argmin row: {sweep}");
    // Empirical iteration counts are filled and no larger than the
    // closed-form budgets.
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        let k_eps: f64 = fields[1].parse().unwrap();
        let emp: u64 = fields[4].parse().unwrap();
        assert!(emp as f64 <= k_eps.ceil() + 1.0, "row {row}");
    }

    // A single bit width sweeps to a single row.
    let single = ws.file("single.toml", &quadratic_config("9", &out, ""));
    assert!(run_cli(&["sweep-bits", "--config", single.to_str().unwrap()]).status.success());
    let sweep = read(&out.join("sweep_bits.csv"));
    assert_eq!(sweep.lines().count(), 2);
}

#[test]
fn automatic_bit_width_uses_the_condition_number() {
    let ws = Workspace::new("auto-bits");
    let out = ws.path("results");
    let config = ws.file("exp.toml", &quadratic_config("\"auto\"", &out, ""));
    let result = run_cli(&["run", "--config", config.to_str().unwrap()]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    // kappa = 6 and d = 4: ceil(log2(24 * 7 * 2)) = 9.
    let summary = read(&out.join("summary.txt"));
    assert!(summary.contains("bits: 9"), "summary: {summary}");
}

#[test]
fn ttc_emits_channel_schema() {
    let ws = Workspace::new("ttc");
    let out = ws.path("results");
    let channel = r#"
[channel]
rate = "constant"
c = 0.6931471805599453
theta = 3
p = 0.05
"#;
    let config = ws.file("exp.toml", &quadratic_config("\"6..10\"", &out, channel));
    let result = run_cli(&["ttc", "--config", config.to_str().unwrap()]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let ttc = read(&out.join("ttc.csv"));
    let mut lines = ttc.lines();
    assert_eq!(lines.next().unwrap(), "b,theta,p,rate_model,k_eps,T_eps,LB,UB,rho");
    for row in lines {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[1], "3");
        assert_eq!(fields[2], "0.05");
        assert_eq!(fields[3], "constant");
        let lb: f64 = fields[6].parse().unwrap();
        let ub: f64 = fields[7].parse().unwrap();
        assert!(lb <= ub);
        let rho: f64 = fields[8].parse().unwrap();
        assert!(rho < 1.0);
    }
}

#[test]
fn retrans_means_sit_inside_the_bounds() {
    let ws = Workspace::new("retrans");
    let out = ws.path("results");
    let channel = r#"
[channel]
rate = "constant"
c = 0.6931471805599453
p_grid = [0.05, 0.2]
"#;
    let config = ws.file("exp.toml", &quadratic_config("10", &out, channel));
    let result = run_cli(&[
        "retrans",
        "--config",
        config.to_str().unwrap(),
        "--replicas",
        "2000",
    ]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let retrans = read(&out.join("retrans.csv"));
    let mut lines = retrans.lines();
    assert_eq!(lines.next().unwrap(), "p,LB,UB,mean_T,ci_low,ci_high");
    let mut rows = 0;
    for row in lines {
        let fields: Vec<&str> = row.split(',').collect();
        let lb: f64 = fields[1].parse().unwrap();
        let ub: f64 = fields[2].parse().unwrap();
        let mean: f64 = fields[3].parse().unwrap();
        assert!(lb <= mean && mean <= ub, "row {row}");
        rows += 1;
    }
    assert_eq!(rows, 2);

    // Analytic-only mode leaves the simulated columns empty.
    let result = run_cli(&[
        "retrans",
        "--config",
        config.to_str().unwrap(),
        "--replicas",
        "0",
    ]);
    assert!(result.status.success());
    let retrans = read(&out.join("retrans.csv"));
    let row = retrans.lines().nth(1).unwrap();
    assert!(row.ends_with(",,,"), "row {row}");
}

#[test]
fn retrans_fixed_rounds_reports_success_rate() {
    let ws = Workspace::new("retrans-fixed");
    let out = ws.path("results");
    let channel = r#"
[channel]
rate = "constant"
c = 0.6931471805599453
policy = "fixed-rounds"
delta = 0.9
p_grid = [0.05]
"#;
    let config = ws.file("exp.toml", &quadratic_config("10", &out, channel));
    let result = run_cli(&[
        "retrans",
        "--config",
        config.to_str().unwrap(),
        "--replicas",
        "2000",
    ]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let retrans = read(&out.join("retrans.csv"));
    let mut lines = retrans.lines();
    assert_eq!(lines.next().unwrap(), "p,LB,UB,mean_T,ci_low,ci_high,success_rate");
    let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
    let success: f64 = fields[6].parse().unwrap();
    assert!(success >= 0.85, "success rate {success}");
}

#[test]
fn dual_decomposition_over_a_graph_runs() {
    let ws = Workspace::new("dual");
    let out = ws.path("results");
    let config = ws.file(
        "exp.toml",
        &format!(
            r#"
[problem]
kind = "quadratic"
d = 2
mu = 1.0
lip = 4.0
seed = 3

[topology]
kind = "random-geometric"
nodes = 8
radius = 0.5
seed = 21

[algorithm]
kind = "dual"

[quantization]
bits = 16

[run]
eps = 1e-4
horizon = 200
seed = 5
out = "{}"
"#,
            out.display()
        ),
    );
    let result = run_cli(&["run", "--config", config.to_str().unwrap()]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let summary = read(&out.join("summary.txt"));
    assert!(summary.contains("status: completed"));
    assert!(summary.contains("envelope: held"), "summary: {summary}");
}

#[test]
fn gd_over_a_graph_is_rejected_early() {
    let ws = Workspace::new("combo");
    let out = ws.path("results");
    let config = ws.file(
        "exp.toml",
        &quadratic_config("8", &out, "").replace(
            "kind = \"master\"\nnodes = 4",
            "kind = \"random-geometric\"\nnodes = 4\nradius = 0.9",
        ),
    );
    let result = run_cli(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
}
