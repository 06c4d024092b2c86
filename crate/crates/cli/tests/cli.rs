use std::path::Path;
use std::process::{Command, Output};

use stemvine::bounds::total_r;
use stemvine::graph::{parse_network, serialize_network};
use stemvine::linalg::save_matrix;
use stemvine::{
    LabeledDataset, Matrix, Nonlinearity, NormProfile, StemElement, StemVineNetwork, Vine,
};

fn stemvine(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stemvine"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn small_net(s: f64, b: f64) -> StemVineNetwork {
    let p = NormProfile::new(s, b);
    StemVineNetwork::new(
        vec![
            StemElement::weight(2, 3, p.clone()),
            StemElement::nonlin(3, Nonlinearity::Relu),
            StemElement::weight(3, 2, p.clone()),
            StemElement::nonlin(2, Nonlinearity::Identity),
        ],
        vec![Vine::chain(1, 5, vec![StemElement::weight(2, 2, p)])],
    )
}

/// Ones on the leading diagonal.
fn eye(rows: usize, cols: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..rows.min(cols) {
        m.set(i, i, 1.0);
    }
    m
}

/// Writes the architecture, one weight file per slot and a dataset.
fn fixture(dir: &Path, net: &StemVineNetwork, weight: impl Fn(usize, usize) -> Matrix) {
    std::fs::write(dir.join("net.toml"), serialize_network(net)).unwrap();
    let w = dir.join("w");
    std::fs::create_dir_all(&w).unwrap();
    for slot in net.weight_slots() {
        save_matrix(
            w.join(format!("{}.svm", slot.id)),
            &weight(slot.out_dim, slot.in_dim),
        )
        .unwrap();
    }
    let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [-1.0, 0.5], [0.5, -2.0]]);
    LabeledDataset::new(x, vec![1, 2, 1, 2], 2)
        .unwrap()
        .save(dir.join("data.svd"))
        .unwrap();
}

fn certify_args<'a>(dir: &'a Path, extra: &[&'a str]) -> Vec<String> {
    let mut v: Vec<String> = vec![
        "certify".into(),
        "--arch".into(),
        dir.join("net.toml").display().to_string(),
        "--weights".into(),
        dir.join("w").display().to_string(),
        "--data".into(),
        dir.join("data.svd").display().to_string(),
    ];
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn run_strings(args: &[String]) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    stemvine(&refs)
}

#[test]
fn template_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    let arch = dir.path().join("resnet.toml");
    let arch_s = arch.to_str().unwrap();
    let o = stemvine(&[
        "template", "resnet34", "--widths", "4,4,8,8", "--out", arch_s,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // the temporary file was renamed into place
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    let net = parse_network(&std::fs::read_to_string(&arch).unwrap()).unwrap();
    assert_eq!(net.vertex_count(), 70);
    let o = stemvine(&["validate", arch_s]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("70 vertices, 16 vines, 37 weight matrices"));
}

#[test]
fn validate_lists_violations() {
    let dir = tempfile::tempdir().unwrap();
    let arch = dir.path().join("bad.toml");
    std::fs::write(
        &arch,
        r#"version = "stemvine/1"

[[stem]]
type = "weight"
in = 2
out = 3
s = 1.0
b = 1.0

[[stem]]
type = "nonlin"
dim = 4
kind = "relu"

[[vines]]
u = 3
v = 1
"#,
    )
    .unwrap();
    let o = stemvine(&["validate", arch.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.lines().count() >= 2, "{out}");
    assert!(out.lines().all(|l| l.starts_with("violation: ")));
}

#[test]
fn zero_b_network_certifies_with_zero_r() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path(), &small_net(1.0, 0.0), Matrix::zeros);
    let o = run_strings(&certify_args(dir.path(), &[]));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: toml::Table = stdout(&o).parse().unwrap();
    assert_eq!(doc["version"].as_str(), Some("svcert/1"));
    assert_eq!(doc["complexity"]["r"].as_float(), Some(0.0));
    assert_eq!(doc["term"].as_array().unwrap().len(), 3);
}

#[test]
fn csv_report_lists_every_term() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path(), &small_net(2.0, 5.0), eye);
    let out = dir.path().join("terms.csv");
    let args = certify_args(
        dir.path(),
        &["--format", "csv", "--out", out.to_str().unwrap()],
    );
    let o = run_strings(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], stemvine::cert::CSV_HEADER);
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("V1-5-1.A1,vine:1-5-1:1,"));
}

#[test]
fn weights_over_their_declared_bound_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path(), &small_net(1.0, 100.0), |r, c| {
        eye(r, c).scale(3.0)
    });
    let o = run_strings(&certify_args(dir.path(), &[]));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("spectral bound"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(stemvine(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(stemvine(&["certify"]).status.code(), Some(2));
    assert_eq!(
        stemvine(&["train-demo", "--delta", "1.5"]).status.code(),
        Some(2)
    );
    assert_eq!(
        stemvine(&["train-demo", "--lambda", "-1"]).status.code(),
        Some(2)
    );
    assert_eq!(
        stemvine(&["template", "resnet34", "--widths", "4,4"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn sweep_norms_scales_r_quadratically_in_b() {
    let dir = tempfile::tempdir().unwrap();
    let net = small_net(1.5, 0.75);
    std::fs::write(dir.path().join("net.toml"), serialize_network(&net)).unwrap();
    let arch = dir.path().join("net.toml");
    let o = stemvine(&[
        "sweep-norms",
        "--arch",
        arch.to_str().unwrap(),
        "--factors",
        "1,2",
        "--scale",
        "b",
        "--input-norm",
        "3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let rows: Vec<Vec<f64>> = out
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(out.lines().next(), Some("factor,r,bound"));
    let r1 = total_r(&net, 3.0).unwrap();
    let doubled = net.map_profiles(|_, p| NormProfile::new(p.s, 2.0 * p.b));
    assert_eq!(rows[0][1], r1);
    assert_eq!(rows[1][1], total_r(&doubled, 3.0).unwrap());
    assert!((rows[1][1] - 4.0 * r1).abs() <= 1e-12 * r1);
    assert!(rows[1][2] > rows[0][2]);
}

#[test]
fn oracle_tables_pass() {
    for cmd in [
        &["oracle-cover"][..],
        &["oracle-rademacher", "--trials", "500"],
        &["sweep-placement"],
    ] {
        let o = stemvine(cmd);
        assert_eq!(o.status.code(), Some(0), "{cmd:?}");
        let out = stdout(&o);
        let rows: Vec<&str> = out.lines().skip(1).collect();
        assert!(!rows.is_empty());
        assert!(rows.iter().all(|l| l.ends_with("PASS")), "{out}");
    }
}

#[test]
fn train_demo_is_deterministic() {
    let args = ["train-demo", "--epochs", "20", "--seed", "3"];
    let a = stemvine(&args);
    let b = stemvine(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let doc: toml::Table = stdout(&a).parse().unwrap();
    assert_eq!(doc["sample"]["n"].as_integer(), Some(200));
    let other = stemvine(&["train-demo", "--epochs", "20", "--seed", "4"]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn weights_table_in_the_architecture_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let net = small_net(2.0, 5.0);
    fixture(dir.path(), &net, eye);
    let mut file = stemvine::graph::ArchitectureFile::new(net.clone());
    for slot in net.weight_slots() {
        file.weights
            .insert(slot.id.clone(), format!("w/{}.svm", slot.id).into());
    }
    let arch = dir.path().join("with_weights.toml");
    std::fs::write(&arch, stemvine::graph::serialize_network_file(&file)).unwrap();
    let data = dir.path().join("data.svd");
    let o = stemvine(&[
        "certify",
        "--arch",
        arch.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let by_dir = run_strings(&certify_args(dir.path(), &[]));
    assert_eq!(o.stdout, by_dir.stdout);

    let bare = dir.path().join("net.toml");
    let o = stemvine(&[
        "certify",
        "--arch",
        bare.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
