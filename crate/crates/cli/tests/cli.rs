use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn klfield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_klfield"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn meta_value(dir: &Path, key: &str) -> String {
    let meta = fs::read_to_string(dir.join("run.meta")).unwrap();
    meta.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no `{key}` in run.meta"))
        .to_string()
}

#[test]
fn rmse_table_has_one_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = klfield(&["rmse-table", "--example", "1", "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("rmse_table.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "h,M,rmse");
    assert_eq!(rows.len(), 13);
    for row in &rows[1..] {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 3);
        let rmse: f64 = cols[2].parse().unwrap();
        assert!(rmse > 0.0 && rmse < 0.1);
    }
}

#[test]
fn identical_runs_give_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.cfg");
    fs::write(&cfg, "field = example1\nn = 257\nm_list = 2, 4\nh_list = 16, 32\n").unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let o = klfield(&["--config", path(&cfg), "rmse-table", "--out", path(dir)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(
        fs::read(a.join("rmse_table.csv")).unwrap(),
        fs::read(b.join("rmse_table.csv")).unwrap()
    );
    assert_eq!(meta_value(&a, "config_sha256"), meta_value(&b, "config_sha256"));
}

#[test]
fn seed_flag_changes_results_and_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let base = ["rmse-table", "--n", "127", "--m-list", "2", "--h-list", "16"];
    let run = |dir: &Path, seed: &str| {
        let mut args = base.to_vec();
        args.extend(["--out", path(dir), "--seed", seed]);
        assert!(klfield(&args).status.success());
    };
    run(&a, "10");
    run(&b, "20");
    assert_ne!(meta_value(&a, "config_sha256"), meta_value(&b, "config_sha256"));
    assert_eq!(meta_value(&a, "construction_seed"), "10");
    assert_eq!(meta_value(&a, "eval_seed"), "11");
}

#[test]
fn cbc_writes_components_and_wce() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("z.csv");
    let o = klfield(&["cbc", "--example", "2", "--dim", "4", "--n", "31", "--points", "--out", path(&file)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&file).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "component,value");
    assert_eq!(lines[1], "1,1");
    assert_eq!(lines.len(), 6);
    let wce: f64 = lines[5].strip_prefix("wce,").unwrap().parse().unwrap();
    assert!(wce > 0.0);
    let points = fs::read_to_string(tmp.path().join("points.csv")).unwrap();
    assert_eq!(points.lines().count(), 31);
}

#[test]
fn cbc_accepts_a_weights_file() {
    let tmp = tempfile::tempdir().unwrap();
    let weights = tmp.path().join("w.txt");
    fs::write(&weights, "order = unit\n0.5\n0.25\n").unwrap();
    let o = klfield(&[
        "cbc",
        "--example",
        "2",
        "--dim",
        "2",
        "--n",
        "13",
        "--weights-file",
        path(&weights),
        "--out",
        path(&tmp.path().join("run")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    fs::write(&weights, "0.5\nabc\n").unwrap();
    let o = klfield(&["cbc", "--example", "2", "--dim", "2", "--weights-file", path(&weights)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn dumped_sample_matrix_reproduces_the_spectrum() {
    let tmp = tempfile::tempdir().unwrap();
    let g = tmp.path().join("g.bin");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let common = ["--example", "1", "--n", "127", "--h-list", "16", "--m-list", "4"];
    let mut args = vec!["spectrum"];
    args.extend(common);
    args.extend(["--dump-g", path(&g), "--out", path(&a)]);
    assert!(klfield(&args).status.success());
    let bytes = fs::read(&g).unwrap();
    assert_eq!(&bytes[..4], b"KLG1");
    let q = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let n = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    assert_eq!((q, n), (33, 127));
    assert_eq!(bytes.len(), 20 + 8 * q * n);

    let mut args = vec!["spectrum"];
    args.extend(common);
    args.extend(["--load-g", path(&g), "--out", path(&b)]);
    assert!(klfield(&args).status.success());
    assert_eq!(
        fs::read(a.join("spectrum.csv")).unwrap(),
        fs::read(b.join("spectrum.csv")).unwrap()
    );
}

#[test]
fn unknown_config_key_reports_its_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "# comment\nfield = example1\nmesh = 16\n").unwrap();
    let o = klfield(&["--config", path(&cfg), "rmse-table"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("mesh"), "{err}");
}

#[test]
fn invalid_values_exit_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    for args in [
        vec!["rmse-table", "--example", "3"],
        vec!["rmse-table", "--n", "1"],
        vec!["rmse-table", "--m-list", "0"],
        vec!["balance", "--epsilon", "-1"],
        vec!["realize", "--example", "1", "--dim", "3"],
    ] {
        let mut args = args.clone();
        args.extend(["--out", path(&out)]);
        let o = klfield(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn balance_and_check_write_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bal");
    assert!(klfield(&["balance", "--epsilon", "0.1", "--s", "1.5", "--out", path(&out)]).status.success());
    let csv = fs::read_to_string(out.join("balance.csv")).unwrap();
    assert!(csv.starts_with("quantity,value\n"));
    assert!(csv.lines().any(|l| l == "M,5"), "{csv}");
    assert!(csv.lines().any(|l| l == "N,465"), "{csv}");

    let out = tmp.path().join("chk");
    assert!(klfield(&["check", "--example", "1", "--out", path(&out)]).status.success());
    let csv = fs::read_to_string(out.join("check.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("h,M,m_bound,m_pass,h_bound,h_pass"));
    assert_eq!(csv.lines().count(), 13);
}

#[test]
fn realize_and_pde_study_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    assert!(klfield(&["realize", "--example", "1", "--n", "127", "--h-list", "16", "--out", path(&out)])
        .status
        .success());
    let csv = fs::read_to_string(out.join("realize.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("x,logkappa,kappa"));
    assert_eq!(csv.lines().count(), 1002);
    for line in csv.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((v[1].exp() - v[2]).abs() <= 1e-12 * v[2]);
    }

    let out = tmp.path().join("p");
    let o = klfield(&[
        "pde-study", "--example", "1", "--n", "127", "--h", "16", "--samples", "16", "--m-list", "2,4", "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let study = fs::read_to_string(out.join("pde_study.csv")).unwrap();
    assert_eq!(study.lines().next(), Some("M,p,error_estimate,kappa_min_mean,kappa_max_mean"));
    assert_eq!(study.lines().count(), 3);
    let bound = fs::read_to_string(out.join("pde_bound.csv")).unwrap();
    for line in bound.lines().skip(1) {
        let ratio: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(ratio <= 1.0 + 1e-10);
    }
}
