use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

const DAM_SMALL: &str = "\
model = dam
omega_min = 1e-6
omega_max = 1e6
n_points = 240
omega0 = 1
sigma0 = 0.1
integrator = rosenbrock
tolerance = 1e-3
t_final = 1
output_start = 1e-2
outputs_per_decade = 5
";

/// Narrow grid: the UV tail hits the margin almost at once.
const DAM_BOUNDARY: &str = "\
model = dam
omega_min = 1e-2
omega_max = 1e2
n_points = 120
omega0 = 1
sigma0 = 0.1
boundary_margin_decades = 1
output_start = 1e-3
outputs_per_decade = 5
";

fn nls_small(t_final: f64) -> String {
    format!(
        "model = nls
resolution = 32
box_size = 6.283185307179586
dt = 1e-3
t_final = {t_final}
nu = 1e-20
hyper_order = 8
amplitude = 0.3
k0 = 4
sigma0 = 0.2
seed = 7
members = 2
output_start = 0.01
outputs_per_decade = 10
invariants_every = 10
bins_per_decade = 10
"
    )
}

fn wavecool(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavecool"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn sorted_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn dam_run_writes_layout_and_hashes_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(tmp.path(), "small.cfg", DAM_SMALL);
    let out = tmp.path().join("run");
    let o = wavecool(&["dam", "run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    assert_eq!(fs::read(out.join("config.cfg")).unwrap(), DAM_SMALL.as_bytes());
    let m = manifest(&out);
    let want = hex::encode(Sha256::digest(DAM_SMALL.as_bytes()));
    assert_eq!(m["config_sha256"], want);
    assert_eq!(m["status"], "completed");
    assert!(m["finished"].as_f64().unwrap() >= m["started"].as_f64().unwrap());

    let snaps = sorted_files(&out.join("snapshots"));
    assert!(snaps.iter().any(|p| p.extension().unwrap() == "json"));
    assert!(snaps.len() >= 2 * 11);
    let conserved = fs::read_to_string(out.join("conserved.csv")).unwrap();
    assert!(conserved.starts_with("t,N,E\n"));
    // one flux table per snapshot by default
    let fluxes = sorted_files(&out.join("fluxes"));
    assert_eq!(2 * fluxes.len(), snaps.len());
    assert!(fs::read_to_string(&fluxes[0]).unwrap().starts_with("omega,K,Q,P\n"));
    for name in m["outputs"].as_array().unwrap() {
        assert!(out.join(name.as_str().unwrap()).exists(), "{name}");
    }
}

#[test]
fn dam_rerun_is_bit_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(tmp.path(), "small.cfg", DAM_SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = wavecool(&["dam", "run", "--config", s(&cfg), "--out", s(d), "--fluxes", "all"]);
        assert_eq!(code(&o), 0);
    }
    for sub in ["snapshots", "fluxes"] {
        let (fa, fb) = (sorted_files(&a.join(sub)), sorted_files(&b.join(sub)));
        assert_eq!(fa.len(), fb.len());
        for (x, y) in fa.iter().zip(&fb) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
        }
    }
    assert_eq!(
        fs::read(a.join("conserved.csv")).unwrap(),
        fs::read(b.join("conserved.csv")).unwrap()
    );
}

#[test]
fn boundary_termination_exits_4() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(tmp.path(), "narrow.cfg", DAM_BOUNDARY);
    let out = tmp.path().join("run");
    let o = wavecool(&["dam", "run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(manifest(&out)["status"], "boundary_reached");
    assert!(out.join("conserved.csv").exists());
}

#[test]
fn invalid_configuration_exits_2() {
    let tmp = TempDir::new().unwrap();
    let bad = nls_small(0.1).replace("resolution = 32", "resolution = 300");
    let cfg = write_cfg(tmp.path(), "bad.cfg", &bad);
    let o = wavecool(&["nls", "run", "--config", s(&cfg), "--out", s(&tmp.path().join("run"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("resolution"));

    let cfg = write_cfg(tmp.path(), "typo.cfg", &DAM_SMALL.replace("sigma0", "sigma_0"));
    let o = wavecool(&["dam", "run", "--config", s(&cfg), "--out", s(&tmp.path().join("run2"))]);
    assert_eq!(code(&o), 2);

    let o = wavecool(&["dam", "run", "--config", s(&tmp.path().join("missing.cfg")), "--out", "x"]);
    assert_eq!(code(&o), 2);
    let o = wavecool(&["reproduce", "fig42"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn nls_resume_matches_uninterrupted_run() {
    let tmp = TempDir::new().unwrap();
    let full = write_cfg(tmp.path(), "full.cfg", &nls_small(0.2));
    let half = write_cfg(tmp.path(), "half.cfg", &nls_small(0.1));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));

    let o = wavecool(&["nls", "run", "--config", s(&full), "--out", s(&a)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = wavecool(&["nls", "run", "--config", s(&half), "--out", s(&b)]);
    assert_eq!(code(&o), 0);
    let ckpt = b.join("checkpoints");
    let o = wavecool(&["nls", "run", "--config", s(&full), "--out", s(&b), "--resume", s(&ckpt)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let m = manifest(&a);
    assert_eq!(m["seeds"], serde_json::json!([7, 8]));
    let last = |d: &Path| sorted_files(&d.join("spectra")).into_iter().filter(|p| p.extension().unwrap() == "csv").next_back().unwrap();
    let (la, lb) = (last(&a), last(&b));
    assert_eq!(la.file_name(), lb.file_name());
    assert!(la.file_name().unwrap().to_str().unwrap().contains("000000000200"));
    assert_eq!(fs::read(&la).unwrap(), fs::read(&lb).unwrap());
    for id in 0..2 {
        let name = format!("checkpoints/member_{id}.ckpt");
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
    }
    let inv = fs::read_to_string(a.join("invariants.csv")).unwrap();
    assert!(inv.starts_with("t,waveaction,quad_energy,hamiltonian,dissipated\n"));
    assert_eq!(inv.lines().last(), fs::read_to_string(b.join("invariants.csv")).unwrap().lines().last());
}

#[test]
fn kernel_eval_prints_the_kernel_and_respects_homogeneity() {
    let parse = |args: &[&str]| -> Vec<f64> {
        let o = wavecool(args);
        assert_eq!(code(&o), 0);
        let text = String::from_utf8(o.stdout).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("S1,q,K,S"));
        lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect()
    };
    let a = parse(&["kernel", "eval", "--quartet", "1,2,0.7"]);
    let b = parse(&["kernel", "eval", "--quartet", "3,6,2.1"]);
    assert_eq!(a.len(), 4);
    assert!(a[3] > 0.0);
    assert!((b[3] * 3.0 / a[3] - 1.0).abs() < 1e-12);
    assert!((a[1] - b[1]).abs() < 1e-14);
}

#[test]
fn kernel_scan_reports_the_window() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("scan.csv");
    let o = wavecool(&["kernel", "scan", "--x-min", "0.25", "--x-max", "1.25", "--step", "0.25", "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let summary = String::from_utf8(o.stdout).unwrap();
    assert!(summary.contains("convergence window: (0.5, 1]"), "{summary}");
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("x,region,measured,predicted,r_squared,identically_zero,convergent\n"));
    assert_eq!(csv.lines().filter(|l| l.contains(",all,")).count(), 5);
}

#[test]
fn reproduce_prints_plans() {
    let plan = |fig: &str| -> Vec<String> {
        let o = wavecool(&["reproduce", fig, "--out", "runs"]);
        assert_eq!(code(&o), 0);
        String::from_utf8(o.stdout).unwrap().lines().map(String::from).collect()
    };
    let fig2 = plan("fig2");
    assert_eq!(fig2[0], "wavecool dam run --preset dam-deep --out runs/dam-deep --fluxes final");
    assert!(fig2.iter().any(|l| l.contains("nls run --preset nls-desk")));
    assert!(fig2.iter().any(|l| l.contains("analyze rj") && l.contains("--sigma 0.7")));

    let fig5 = plan("fig5");
    assert!(fig5.iter().any(|l| l.contains("analyze wg") && l.contains("--g -0.5,-1,-2,-3")));
    assert!(fig5.iter().any(|l| l.contains("analyze collapse") && l.ends_with("--g -2")));

    let fig9 = plan("fig9");
    assert_eq!(fig9.len(), 1);
    assert!(fig9[0].starts_with("wavecool kernel scan --x-min -0.5 --x-max 2 --step 0.05"));
}

#[test]
fn preset_lists_and_prints() {
    let o = wavecool(&["preset"]);
    assert_eq!(code(&o), 0);
    let names = String::from_utf8(o.stdout).unwrap();
    for n in ["dam-desk", "dam-deep", "nls-desk"] {
        assert!(names.contains(n));
    }
    let o = wavecool(&["preset", "dam-desk"]);
    assert!(String::from_utf8(o.stdout).unwrap().contains("n_points = 1200"));
}

#[test]
fn analyze_commands_read_a_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_cfg(tmp.path(), "small.cfg", DAM_SMALL);
    let run = tmp.path().join("run");
    assert_eq!(code(&wavecool(&["dam", "run", "--config", s(&cfg), "--out", s(&run)])), 0);
    let rep = tmp.path().join("rep");

    let fronts = rep.join("fronts.csv");
    let o = wavecool(&["analyze", "fronts", "--in", s(&run), "--out", s(&fronts)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&fronts).unwrap();
    assert!(text.starts_with("t,omega_hat_minus,omega_hat_plus,omega_minus,omega_plus\n"));
    assert_eq!(text.lines().count(), 1 + 12);

    let rj = rep.join("rj.csv");
    assert_eq!(code(&wavecool(&["analyze", "rj", "--in", s(&run), "--out", s(&rj)])), 0);
    assert!(fs::read_to_string(&rj).unwrap().starts_with("t,T,mu,T_hat,mu_hat,omega_hat_plus\n"));

    let wg = rep.join("wg.csv");
    let o = wavecool(&["analyze", "wg", "--in", s(&run), "--out", s(&wg), "--g", "-1,2", "--window", "0.1,1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(&wg).unwrap();
    assert!(report.contains("\n-1,stretched_exp,"));
    assert!(report.contains("\n2,power,"));
    assert!(rep.join("wg_series.csv").exists());

    let o = wavecool(&["analyze", "wg", "--in", s(&run), "--out", s(&wg), "--g", "1", "--window", "1,0.1"]);
    assert_eq!(code(&o), 2);
    let empty = tmp.path().join("empty");
    fs::create_dir_all(empty.join("snapshots")).unwrap();
    assert_eq!(code(&wavecool(&["analyze", "rj", "--in", s(&empty), "--out", s(&rj)])), 2);
}
