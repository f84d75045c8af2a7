use std::path::Path;
use std::process::{Command, Output};

use fraclab::energy::{ScalarField, UniformGrid};
use fraclab::lab::*;

fn fraclab(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fraclab"));
    cmd.args(args).env_remove(THREADS_ENV);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn run_json(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("run.json")).unwrap()).unwrap()
}

const CAPACITY: &str = r#"
[capacity]
t = { shape = "ball", radius = 1.0, center = [0.0, 0.0] }
r_list = [2.0, 4.0]
r_ratio = 2.0
ratio_sweep = [2.0, 4.0]
kernel = { n = 2, s = 0.55, p = 2.0 }
h = 0.25
"#;

const LIGHT_STUDY: &str = r#"
[homogenize]
epsilon_list = [0.3333333333333333, 0.25]
kernel = { n = 2, s = 0.51, p = 2.0 }
capacity = { r_list = [4.0, 8.0], h = 0.25 }
grid = { nodes_per_lambda = 2.0, refine = 1 }
"#;

#[test]
fn check_without_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("chk");
    let o = fraclab(&["check", "--out", out.to_str().unwrap()], &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(!stdout.contains("FAIL"));
    let rec = run_json(&out);
    let names: Vec<&str> = rec["verdicts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["name"].as_str().unwrap())
        .collect();
    for suite in SUITES {
        assert!(
            names.iter().any(|n| n.starts_with(suite)),
            "suite {suite} missing"
        );
    }
    assert_eq!(rec["input_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &format!("{CAPACITY}bogus = 1\n"));
    let o = fraclab(
        &[
            "capacity",
            "--config",
            &cfg,
            "--out",
            dir.path().join("o").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn missing_table_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", CAPACITY);
    let o = fraclab(&["random", "--config", &cfg], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[random]"));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let o = fraclab(&["capacity"], &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = fraclab(&["capacity", "--config", "/nonexistent/x.toml"], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn capacity_run_writes_table_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", CAPACITY);
    let out = dir.path().join("o");
    let o = fraclab(
        &["capacity", "--config", &cfg, "--out", out.to_str().unwrap()],
        &[],
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = std::fs::read_to_string(out.join("capacity.csv")).unwrap();
    assert!(csv.starts_with("variant,r,R,value,residual,iterations\n"));
    // 17 significant digits.
    let value = csv.lines().nth(1).unwrap().split(',').nth(3).unwrap();
    assert_eq!(
        value
            .split('e')
            .next()
            .unwrap()
            .replace(['-', '.'], "")
            .len(),
        17
    );
    let svg = std::fs::read_to_string(out.join("capacity_vs_r.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
    assert!(out.join("plots.gp").exists());
    let rec = run_json(&out);
    assert_eq!(rec["subcommand"], "capacity");
    assert!(rec["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .any(|a| a == "capacity.csv"));
}

#[test]
fn threads_come_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = fraclab(
        &["check", "--out", out.to_str().unwrap()],
        &[(THREADS_ENV, "2")],
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(run_json(&out)["threads"], 2);
    let o = fraclab(
        &["check", "--threads", "3", "--out", out.to_str().unwrap()],
        &[(THREADS_ENV, "2")],
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(run_json(&out)["threads"], 3);
    let o = fraclab(
        &["check", "--out", out.to_str().unwrap()],
        &[(THREADS_ENV, "many")],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_verdict_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "h.toml",
        &format!("[tolerances]\ngap_threshold = 1e-12\n{LIGHT_STUDY}"),
    );
    let out = dir.path().join("o");
    let o = fraclab(
        &[
            "homogenize",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(
        o.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL homogenize.finest_gap"));
    for f in [
        "minima.csv",
        "study.json",
        "gap_vs_eps.svg",
        "u_perforated.svg",
        "u_homogenized.svg",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn solver_breakdown_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        &format!("{CAPACITY}cg = {{ tol = 1e-14, max_iter = 1 }}\n"),
    );
    let out = dir.path().join("o");
    let o = fraclab(
        &["capacity", "--config", &cfg, "--out", out.to_str().unwrap()],
        &[],
    );
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(run_json(&out)["error"]
        .as_str()
        .unwrap()
        .contains("converge"));
}

#[test]
fn same_seed_same_points() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "d.toml",
        "[delone]\nrandom = { kind = { kind = \"perturbed_lattice\", m = 0.5 }, epsilon = 0.05 }\n",
    );
    let mut texts = Vec::new();
    for (i, seed) in ["4", "4", "5"].iter().enumerate() {
        let out = dir.path().join(format!("o{i}"));
        let o = fraclab(
            &[
                "delone",
                "--config",
                &cfg,
                "--seed",
                seed,
                "--out",
                out.to_str().unwrap(),
            ],
            &[],
        );
        assert_eq!(o.status.code(), Some(0));
        texts.push(std::fs::read(out.join("points.csv")).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
    assert_ne!(texts[0], texts[2]);
}

#[test]
fn content_hash_is_a_git_style_blob_id() {
    assert_eq!(
        content_hash(b""),
        "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
    );
    assert_eq!(
        content_hash(b"hello"),
        "8aec4e4876f854f688d0ebfc8f37598f38e5fd6903cccc850ca36591175aeb60"
    );
}

#[test]
fn config_round_trips_through_toml() {
    let text = format!("seed = 3\nthreads = 2\n{CAPACITY}");
    let cfg = ExperimentConfig::parse(&text).unwrap();
    let again = ExperimentConfig::parse(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(cfg, again);
    assert_eq!(cfg.capacity.unwrap().r_list, vec![2.0, 4.0]);
}

#[test]
fn seed_override_reseeds_the_random_study() {
    let cfg = ExperimentConfig::parse(
        "seed = 1\n[random]\nepsilon_list = [0.25]\nseeds = [1, 2, 3, 4]\n",
    )
    .unwrap();
    let opts = RunOptions {
        seed: Some(10),
        ..Default::default()
    };
    let r = resolve(Subcommand::Random, cfg.clone(), &opts).unwrap();
    assert_eq!(r.random.unwrap().seeds, vec![10, 11, 12, 13]);
    let r = resolve(Subcommand::Random, cfg, &RunOptions::default()).unwrap();
    assert_eq!(r.random.unwrap().seeds, vec![1, 2, 3, 4]);
}

#[test]
fn delone_needs_exactly_one_source() {
    let cfg = ExperimentConfig::parse("[delone]\nhist_cell = 0.25\n").unwrap();
    assert!(matches!(
        resolve(Subcommand::Delone, cfg, &RunOptions::default()),
        Err(fraclab::Error::Config(_))
    ));
}

#[test]
fn empty_record_plots_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut rec = RunRecord::new("homogenize", 0, 1, serde_json::Value::Null);
    emit_plots(dir.path(), &mut rec).unwrap();
    assert!(rec.artifacts.is_empty());
    assert!(rec.notes.iter().any(|n| n.contains("no tables")));
}

#[test]
fn gap_plot_uses_log_axes() {
    let series = [Series {
        name: "gap".into(),
        points: vec![(0.25, 0.05), (0.125, 0.01), (0.1, 0.0)],
        scatter: false,
    }];
    let plot = LinePlot {
        title: "t",
        x_label: "epsilon",
        y_label: "gap",
        log_x: true,
        log_y: true,
    };
    let svg = line_svg(&plot, &series).unwrap();
    // The zero gap is dropped on the log axis.
    assert_eq!(svg.matches("<circle").count(), 2);
    assert!(svg.contains("1e-2"));
    let empty = [Series {
        name: "gap".into(),
        points: vec![(0.25, 0.0)],
        scatter: false,
    }];
    assert!(line_svg(&plot, &empty).is_none());
}

#[test]
fn heatmap_needs_a_planar_field() {
    let g2 = UniformGrid::unit_cube(2, 8).unwrap();
    let u = ScalarField::from_fn(g2, false, |x| x[0] * x[1]);
    let svg = heatmap_svg("u", &u).unwrap();
    assert_eq!(svg.matches("<rect").count(), 1 + 81 + 50);
    let g3 = UniformGrid::unit_cube(3, 4).unwrap();
    assert!(heatmap_svg("u", &ScalarField::zeros(g3, false)).is_none());
}

#[test]
fn exit_codes_follow_the_error_kind() {
    use fraclab::Error;
    assert_eq!(exit_code(&Err(Error::Config("x".into()))), 2);
    assert_eq!(
        exit_code(&Err(Error::NotConverged {
            iterations: 1,
            residual: 1.0
        })),
        3
    );
    let mut rec = RunRecord::new("check", 0, 1, serde_json::Value::Null);
    assert_eq!(exit_code(&Ok(rec.clone())), 0);
    rec.verdict("x", false, "");
    assert_eq!(exit_code(&Ok(rec)), 1);
}
