use std::path::Path;
use std::process::{Command, Output};

use fractrace_core::dynamics::{inverse_curve, vector, FractionalSystem};
use fractrace_core::matrix_ops::RealMatrix;

fn fractrace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fractrace"))
        .args(args)
        .env_remove("FRACTRACE_TOL_SCALE")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn rows(csv: &str) -> (Vec<String>, Vec<Vec<String>>) {
    assert!(!csv.contains('\r'));
    let mut lines = csv.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    (header, lines.map(|l| l.split(',').map(str::to_string).collect()).collect())
}

const TRAJECTORY: [&str; 11] =
    ["trajectory", "--alpha", "0.9", "--matrix", "0,1;-1,0", "--x0", "2,1", "--t-max", "3", "--samples", "600"];

#[test]
fn trajectory_example_has_600_rows() {
    let (header, body) = rows(&stdout(&fractrace(&TRAJECTORY)));
    assert_eq!(header, ["t", "x1", "x2"]);
    assert_eq!(body.len(), 600);
    assert_eq!(body[0], ["0.0", "2.0", "1.0"]);
    assert_eq!(body[599][0], "3.0");
}

#[test]
fn trajectory_rows_round_trip_exactly() {
    let (_, body) = rows(&stdout(&fractrace(&TRAJECTORY)));
    let a = RealMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let sys = FractionalSystem::new(0.9, a).unwrap();
    let x0 = vector(&[2.0, 1.0]);
    for row in body.iter().step_by(37) {
        let v: Vec<f64> = row.iter().map(|s| s.parse().unwrap()).collect();
        let u = sys.propagate(&x0, v[0]).unwrap();
        assert_eq!((v[1].to_bits(), v[2].to_bits()), (u[0].to_bits(), u[1].to_bits()), "t = {}", v[0]);
    }
}

#[test]
fn output_is_deterministic_and_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    let first = stdout(&fractrace(&TRAJECTORY));
    let mut args = TRAJECTORY.to_vec();
    args.extend(["--out", path.to_str().unwrap()]);
    assert!(stdout(&fractrace(&args)).is_empty());
    assert_eq!(std::fs::read_to_string(&path).unwrap(), first);
    assert_eq!(stdout(&fractrace(&TRAJECTORY)), first);
}

#[test]
fn zeros_example_lists_the_reference_zeros() {
    let out = stdout(&fractrace(&["zeros", "--alpha", "0.3333333333", "--beta", "0", "--re", "1:3", "--im", "-2:2"]));
    let (header, body) = rows(&out);
    assert_eq!(header, ["alpha", "beta", "re", "im", "residual", "index"]);
    let zs: Vec<(f64, f64, f64)> =
        body.iter().map(|r| (r[2].parse().unwrap(), r[3].parse().unwrap(), r[4].parse().unwrap())).collect();
    for (re, im) in [(2.21095, -1.60243), (1.47895, 1.349246)] {
        let hit = zs.iter().find(|z| (z.0 - re).abs() < 1e-3 && (z.1 - im).abs() < 1e-3);
        assert!(hit.is_some_and(|z| z.2 <= 1e-8), "{re}{im:+}i missing from\n{out}");
    }
}

#[test]
fn classify_reports_type_one() {
    let dir = tempfile::tempdir().unwrap();
    let scan = dir.path().join("scan.csv");
    let out =
        stdout(&fractrace(&["classify", "--alpha", "0.9", "--matrix", "0,1;-1,0", "--out", scan.to_str().unwrap()]));
    assert!(out.contains("verdict: Type I\n"), "{out}");
    assert!(out.contains("search bound: 20.0"));
    assert!(out.contains("asymptotic flags: none"));
    let (header, body) = rows(&std::fs::read_to_string(scan).unwrap());
    assert_eq!(header, ["t", "det_re", "det_im", "invertible"]);
    assert!(body.iter().all(|r| r[3] == "true"));
}

#[test]
fn collapse_system_is_type_two_with_a_fiber() {
    // First zero of E_{1/2,1}(z) = exp(z²) erfc(-z) (mpmath, 30 digits); the
    // block built from it collapses at T = 1.
    let (re, im) = (1.354_810_128_112_006_2, 1.991_466_842_833_879_6);
    let m = format!("{re},{im};{},{re}", -im);
    let out = stdout(&fractrace(&["classify", "--alpha", "0.5", "--matrix", &m]));
    assert!(out.contains("verdict: Type II"), "{out}");
    let fiber = stdout(&fractrace(&["eist", "--alpha", "0.5", "--matrix", &m, "--p", "0,0", "--t", "1"]));
    let (_, body) = rows(&fiber);
    assert_eq!(body.iter().filter(|r| r[0] == "direction").count(), 2, "{fiber}");
    let missed = fractrace(&["eist", "--alpha", "0.5", "--matrix", &m, "--p", "1,0", "--t", "1"]);
    assert_eq!(missed.status.code(), Some(1));
}

#[test]
fn usage_and_domain_errors_have_distinct_codes() {
    let code = |args: &[&str]| fractrace(args).status.code();
    assert_eq!(code(&["trajectory", "--alpha", "0.9", "--matrix", "0,1;-1", "--x0", "1,1", "--t-max", "1"]), Some(2));
    assert_eq!(code(&["trajectory", "--alpha", "0.9", "--matrix", "0,1;-1,0", "--x0", "1", "--t-max", "1"]), Some(2));
    assert_eq!(code(&["trajectory", "--alpha", "0.9"]), Some(2));
    assert_eq!(code(&["no-such-command"]), Some(2));
    assert_eq!(code(&["trajectory", "--alpha", "1.5", "--matrix", "0,1;-1,0", "--x0", "1,1", "--t-max", "1"]), Some(1));
    assert_eq!(code(&["ml-eval", "--alpha", "0.5", "--beta", "1", "--z", "100"]), Some(1));
    assert_eq!(code(&["--help"]), Some(0));
    let scaled = Command::new(env!("CARGO_BIN_EXE_fractrace"))
        .args(["classify", "--alpha", "0.9", "--matrix", "0,1;-1,0"])
        .env("FRACTRACE_TOL_SCALE", "-1")
        .output()
        .unwrap();
    assert_eq!(scaled.status.code(), Some(2));
}

#[test]
fn eidt_finds_the_constructed_meeting() {
    // x = γ_{x0}(0.83), so u(0.83; x) = x0 = u(0; x0).
    let a = RealMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let sys = FractionalSystem::new(0.9, a).unwrap();
    let x = inverse_curve(&sys, &vector(&[2.0, 1.0]), &[0.83]).unwrap().samples.remove(0).1;
    let x = format!("{:?},{:?}", x[0], x[1]);
    let out = stdout(&fractrace(&[
        "eidt",
        "--alpha",
        "0.9",
        "--matrix",
        "0,1;-1,0",
        "--x0",
        "2,1",
        "--x",
        &x,
        "--window-x0",
        "0:3",
        "--window-x",
        "0:3",
        "--grid",
        "120",
    ]));
    let (header, body) = rows(&out);
    assert_eq!(header, ["t_x0", "t_x", "residual", "p1", "p2"]);
    let w: Vec<Vec<f64>> = body.iter().map(|r| r.iter().map(|s| s.parse().unwrap()).collect()).collect();
    assert!(w.iter().all(|r| (r[0] - r[1]).abs() > 3e-3 && r[2] <= 1e-5), "{out}");
    assert!(w.iter().any(|r| r[0] < 1e-6 && (r[1] - 0.83).abs() < 1e-6), "{out}");
}

fn svg_ok(path: &Path) {
    let s = std::fs::read_to_string(path).unwrap();
    assert!(s.starts_with("<svg") && s.contains(r#"viewBox="0 0 800 600""#) && s.contains("<polyline"));
}

#[test]
fn trajectory_and_inverse_curve_svgs() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("t.svg");
    let mut args = TRAJECTORY.to_vec();
    args.extend(["--svg", svg.to_str().unwrap()]);
    stdout(&fractrace(&args));
    svg_ok(&svg);
    let out = stdout(&fractrace(&[
        "inverse-curve",
        "--alpha",
        "0.9",
        "--matrix",
        "0,1;-1,0",
        "--x0",
        "2,1",
        "--t-max",
        "3",
        "--samples",
        "50",
        "--evolve",
        "0.5",
        "--evolve",
        "1.2",
        "--svg",
        svg.to_str().unwrap(),
    ]));
    let (header, body) = rows(&out);
    assert_eq!(header, ["t_tilde", "t", "x1", "x2"]);
    assert_eq!(body.len(), 150);
    assert_eq!(body[0], ["0.0", "0.0", "2.0", "1.0"]);
    svg_ok(&svg);
}

#[test]
fn reproduce_figures_writes_loop_and_cusp() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout(&fractrace(&["reproduce-figures", "--outdir", dir.path().to_str().unwrap()]));
    assert_eq!(out.lines().count(), 4, "{out}");
    for stem in ["fig1", "fig2", "fig3a", "fig3b"] {
        assert!(dir.path().join(format!("{stem}.csv")).is_file());
        svg_ok(&dir.path().join(format!("{stem}.svg")));
    }
    let read = |stem: &str| {
        let (_, body) = rows(&std::fs::read_to_string(dir.path().join(format!("{stem}.csv"))).unwrap());
        body.into_iter().map(|r| r.iter().map(|s| s.parse::<f64>().unwrap()).collect::<Vec<_>>()).collect::<Vec<_>>()
    };

    let loop_rows = read("fig3a");
    let mut node = f64::INFINITY;
    for (i, a) in loop_rows.iter().enumerate() {
        for b in &loop_rows[i + 1..] {
            if (a[0] - b[0]).abs() > 0.05 {
                node = node.min((a[1] - b[1]).hypot(a[2] - b[2]));
            }
        }
    }
    assert!(node < 1e-4, "closest distinct-time rows {node:e}");

    let cusp = read("fig3b");
    let slow = cusp.iter().min_by(|a, b| a[3].total_cmp(&b[3])).unwrap();
    assert!(slow[3] < 1e-5 && (slow[0] - 1.0).abs() < 1e-3, "{slow:?}");

    let fig1 = std::fs::read_to_string(dir.path().join("fig1.csv")).unwrap();
    assert!(fig1.starts_with("curve,t,x1,x2\ngamma,0.0,2.0,1.0\n"));
}
