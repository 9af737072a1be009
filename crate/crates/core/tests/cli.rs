use std::path::Path;
use std::process::{Command, Output};

use hybrid_mixed::export::read_pressure_csv;

const BIN: &str = env!("CARGO_BIN_EXE_hybrid-mixed");

const CONFIG: &str = "\
[mesh]
source = structured:4

[params]
alpha = 1
beta = 2
gamma = 1.5
porosity = 0.4

[problem]
variant = coupled
source = 1 + x*y
boundary = 1 + x
initial_physical = 1 + 0.5*y

[time]
dt = 0.1
steps = 3

[output]
dir = out
";

fn hm(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), CONFIG).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn steady_writes_outputs_and_is_deterministic() {
    let dir = setup();
    let a = hm(dir.path(), &["steady", "--config", "run.cfg", "--out", "a", "--vtk"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(stdout(&a).contains("converged in"));
    let b = hm(dir.path(), &["steady", "--config", "run.cfg", "--out", "b"]);
    assert!(b.status.success());
    for f in ["p.csv", "flux.csv", "log.csv"] {
        let x = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between runs");
    }
    assert!(dir.path().join("a/solution.vtk").exists());
    assert!(!dir.path().join("b/solution.vtk").exists());
    let log = std::fs::read_to_string(dir.path().join("a/log.csv")).unwrap();
    assert!(log.starts_with("iteration,residual,damping\n"));

    let p = read_pressure_csv(std::io::BufReader::new(
        std::fs::File::open(dir.path().join("a/p.csv")).unwrap(),
    ))
    .unwrap();
    assert_eq!(p.len(), 32);
    assert!(p.iter().all(|v| v.is_finite() && *v > 0.0));
}

#[test]
fn variants_agree_through_cli() {
    let dir = setup();
    let mut tables = Vec::new();
    for v in ["flux-only", "closed-form", "coupled"] {
        let o = hm(dir.path(), &["steady", "--config", "run.cfg", "--variant", v, "--out", v]);
        assert!(o.status.success());
        let f = std::fs::File::open(dir.path().join(v).join("p.csv")).unwrap();
        tables.push(read_pressure_csv(std::io::BufReader::new(f)).unwrap());
    }
    for t in &tables[1..] {
        for (a, b) in t.iter().zip(&tables[0]) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}

#[test]
fn verify_passes_on_converged_solution() {
    let dir = setup();
    let o = hm(dir.path(), &["verify", "--config", "run.cfg", "--mesh", "structured:2"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("all checks passed"));
    let csv = std::fs::read_to_string(dir.path().join("out/verify.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with("true")), "{csv}");
}

#[test]
fn march_writes_steps_budget_and_log() {
    let dir = setup();
    let o = hm(dir.path(), &["march", "--config", "run.cfg", "--steps", "2", "--out", "m"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = dir.path().join("m");
    assert!(m.join("p_0002.csv").exists());
    assert!(!m.join("p_0001.csv").exists());
    let budget = std::fs::read_to_string(m.join("budget.csv")).unwrap();
    let rows: Vec<&str> = budget.lines().collect();
    assert_eq!(rows[0], "step,time,mass,outflow,source,relative_defect");
    assert_eq!(rows.len(), 3);
    for r in &rows[1..] {
        let defect: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
        assert!(defect <= 1e-8);
    }
    let log = std::fs::read_to_string(m.join("log.csv")).unwrap();
    assert!(log.starts_with("step,iteration,residual,damping\n"));
    assert!(log.lines().any(|l| l.starts_with("2,")));
}

#[test]
fn mesh_info_reports_counts_and_round_trips() {
    let dir = setup();
    let o = hm(dir.path(), &["mesh-info", "--mesh", "structured:3", "--write", "m.txt"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("triangles       18"), "{text}");
    assert!(text.contains("edges           33"), "{text}");
    let o = hm(dir.path(), &["mesh-info", "--mesh", "m.txt"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("triangles       18"));
}

#[test]
fn mms_writes_table() {
    let dir = setup();
    let o = hm(dir.path(), &["mms", "--levels", "2", "--case", "darcy", "--out", "."]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("fitted pressure order"));
    let csv = std::fs::read_to_string(dir.path().join("mms_darcy.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = setup();
    let o = hm(dir.path(), &["steady", "--variant", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(dir.path().join("bad.cfg"), "[problem]\nsource = 1 +\n").unwrap();
    let o = hm(dir.path(), &["steady", "--config", "bad.cfg"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let o = hm(dir.path(), &["steady", "--config", "missing.cfg"]);
    assert_eq!(o.status.code(), Some(1));
}
