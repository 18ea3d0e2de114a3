use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_symplectic"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&read(dir.join("manifest.json"))).unwrap()
}

#[test]
fn list_shows_the_catalog() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["list"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    for name in ["Ruth", "s5odr4", "BABs7o7H", "BAB's9o7H", "Yosh s7o6 A"] {
        assert!(s.contains(name), "{name}");
    }
    assert_eq!(s.lines().count(), 18);
    assert_eq!(manifest(d.path())["command"], "list");
}

#[test]
fn validate_accepts_the_catalog() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["validate"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn validate_rejects_a_corrupted_file() {
    let d = TempDir::new().unwrap();
    let src = read(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data/table4/BABs6o5H.coef"));
    let bad = src.replacen("d 1 0.0658", "d 1 0.0758", 1);
    assert_ne!(src, bad);
    let f = d.path().join("bad.coef");
    std::fs::write(&f, bad).unwrap();
    let o = run(d.path(), &["validate", "--method", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("FAIL"));
}

#[test]
fn usage_errors_exit_two() {
    let d = TempDir::new().unwrap();
    assert_eq!(run(d.path(), &["bench", "--tau-grid", "what"]).status.code(), Some(2));
    assert_eq!(run(d.path(), &["no-such-command"]).status.code(), Some(2));
    let o = run(d.path(), &["step", "--method", "Nope", "--tau", "0.1"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("Ruth") && e.contains("BAB's9o7H"), "{e}");
}

#[test]
fn spectrum_of_the_eight_stage_set() {
    let d = TempDir::new().unwrap();
    let o = run(
        d.path(),
        &["spectrum", "--method", "BAB's8o7H", "--mode", "bab-prime", "--lambda-max", "9"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(d.path().join("spectrum.csv"));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("method,mode,lambda,kappa"));
    let mut seen = 0;
    for l in lines {
        let f: Vec<&str> = l.split(',').collect();
        let (lambda, kappa): (usize, f64) = (f[2].parse().unwrap(), f[3].parse().unwrap());
        if (1..=7).contains(&lambda) {
            assert!(kappa < 1e-70, "{l}");
            seen += 1;
        }
        if lambda == 8 {
            assert!(kappa > 1e-70, "{l}");
        }
    }
    assert_eq!(seen, 7);
}

#[test]
fn henon_heiles_bench_writes_the_full_grid() {
    let d = TempDir::new().unwrap();
    let o = run(
        d.path(),
        &["bench", "--system", "henon-heiles", "--t-end", "500", "--methods", "all", "--tau-grid", "default"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(d.path().join("sweep_henon-heiles.csv"));
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("method,scheme,stages,tau,"), "{header}");
    let cols = header.split(',').count();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 10 * 49);
    assert!(rows.iter().all(|r| r.split(',').count() == cols));
    assert!(rows.iter().any(|r| r.contains(",inf,")));
    let m = manifest(d.path());
    assert_eq!(m["command"]["bench"]["system"], "henon-heiles");
    assert_eq!(m["outputs"].as_array().unwrap().len(), 1);
}

#[test]
fn fixed_seed_optimize_is_byte_identical() {
    let mut trees = Vec::new();
    for _ in 0..2 {
        let d = TempDir::new().unwrap();
        let o = run(
            d.path(),
            &["--seed", "11", "optimize", "--method", "ABAs3o4H", "--restarts", "16"],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        let sub = d.path().join("abas3o4h");
        let mut files: Vec<_> = std::fs::read_dir(&sub).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        assert!(files.iter().any(|p| p.ends_with("ranking.csv")));
        let contents: Vec<(String, String)> = files
            .iter()
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), read(p)))
            .collect();
        trees.push(contents);
    }
    assert_eq!(trees[0], trees[1]);
    assert!(trees[0].len() >= 2);
}

#[test]
fn trace_writes_rows_and_a_grid() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["trace", "--method", "Yosh s7o6 A", "--system", "sho", "--tau", "0.785398", "--initial", "0,1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let files: Vec<String> = std::fs::read_dir(d.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    let trace = files.iter().find(|f| f.starts_with("trace_") && !f.contains(".grid")).unwrap();
    let grid = files.iter().find(|f| f.ends_with(".grid.csv")).unwrap();
    let t = read(d.path().join(trace));
    assert!(t.starts_with("# system=sho"));
    assert!(t.contains("step,substep,q,p,H,c_sign,d_sign"));
    assert!(t.lines().any(|l| l.ends_with(",-1,1") || l.ends_with(",1,-1") || l.ends_with(",-1,-1")));
    assert_eq!(read(d.path().join(grid)).lines().count(), 1 + 101 * 101);
}

#[test]
fn precession_fits_one_step() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["precession", "--methods", "Ruth", "--tau", "3e4", "--t-end", "1e8"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(d.path().join("precession.csv"));
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with("method,"));
    let short = run(d.path(), &["precession", "--methods", "Ruth", "--tau", "3e4", "--t-end", "1e6"]);
    assert_eq!(short.status.code(), Some(2));
}
