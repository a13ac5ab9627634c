use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_dlfpkmc");

fn presets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("DLFPKMC_OUT").output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Data rows of a CSV after the metadata and header lines.
fn rows(file: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(file).unwrap();
    text.lines().skip(2).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn column(file: &Path, name: &str) -> Vec<String> {
    let text = fs::read_to_string(file).unwrap();
    let header: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows(file).into_iter().map(|r| r[k].clone()).collect()
}

fn mean_and_half_width(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, 2.576 * (var / n).sqrt())
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let config = presets().join("twenty-molecule.toml");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["simulate", path(&config), "--seed", "42", "--realizations", "5", "--out", path(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["realizations.csv", "reactions.csv", "meshes.csv"] {
        let (x, y) = (fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
        assert_eq!(x, y, "{name} differs");
        let text = String::from_utf8(x).unwrap();
        assert!(text.starts_with("# config_sha256="), "{name} lacks the metadata line");
        assert!(text.lines().next().unwrap().contains(" seed=42 "));
    }
    assert_eq!(rows(&a.join("reactions.csv")).len(), 50);
    assert!(column(&a.join("realizations.csv"), "n_initial_per_species").iter().all(|c| c == "10;10"));

    let c = dir.path().join("c");
    run(&["simulate", path(&config), "--seed", "43", "--realizations", "5", "--out", path(&c)]);
    assert_ne!(fs::read(a.join("reactions.csv")).unwrap(), fs::read(c.join("reactions.csv")).unwrap());
}

#[test]
fn malformed_configs_exit_2_without_files() {
    let dir = tempfile::tempdir().unwrap();
    let good = fs::read_to_string(presets().join("two-molecule-vzero.toml")).unwrap();
    let cases = [
        good.replace("[mesh]", "[mesh]\nspacing = 3"),
        good.replace("h_p = 0.0025", "h_p = 0.003"),
        good.replace("species = \"B\"", "species = \"C\""),
        good.replace("radius = 0.02", "radius = \"wide\""),
        good.replace("count = 1\n", "count = 1\npositions = [0.5]\n"),
        good.replace("[[initial]]\nspecies = \"A\"\ncount = 1", "[[initial]]\nspecies = \"A\"\npositions = [1.5]"),
        "not toml at all [".to_string(),
    ];
    for (k, text) in cases.iter().enumerate() {
        assert_ne!(text, &good);
        let config = dir.path().join(format!("bad{k}.toml"));
        fs::write(&config, text).unwrap();
        let out = dir.path().join(format!("out{k}"));
        let o = run(&["simulate", path(&config), "--out", path(&out)]);
        assert_eq!(o.status.code(), Some(2), "case {k}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists(), "case {k} left output behind");
    }
}

#[test]
fn every_preset_runs() {
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(presets()).unwrap() {
        let config = entry.unwrap().path();
        let out = dir.path().join(config.file_stem().unwrap());
        let o = run(&["simulate", path(&config), "--realizations", "2", "--out", path(&out)]);
        assert!(o.status.success(), "{}: {}", config.display(), String::from_utf8_lossy(&o.stderr));
        assert_eq!(rows(&out.join("realizations.csv")).len(), 2);
    }
}

#[test]
fn two_molecule_mean_matches_the_exact_value() {
    let dir = tempfile::tempdir().unwrap();
    let config = presets().join("two-molecule-vzero.toml");
    let o = run(&["simulate", path(&config), "--out", path(dir.path())]);
    assert!(o.status.success());
    let times: Vec<f64> = column(&dir.path().join("realizations.csv"), "extinction_time").iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(times.len(), 1000);
    let (m, half) = mean_and_half_width(&times);
    assert!((m - 0.064831881311).abs() < half, "mean {m} +/- {half}");
    let hops: u64 = column(&dir.path().join("meshes.csv"), "use_count").iter().map(|s| s.parse::<u64>().unwrap()).sum();
    let total: u64 = column(&dir.path().join("realizations.csv"), "hop_count").iter().map(|s| s.parse::<u64>().unwrap()).sum();
    assert_eq!(hops, total);
}

#[test]
fn analytic_oracle_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["oracle", "--mode", "analytic", "--out", path(dir.path())]);
    assert!(o.status.success());
    let mean: f64 = column(&dir.path().join("summary.csv"), "mean_time")[0].parse().unwrap();
    assert!((mean - 0.064831881311).abs() < 1e-11);
    let s: Vec<f64> = column(&dir.path().join("survival.csv"), "S").iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(s.len(), 201);
    assert!((s[0] - 0.9604).abs() < 1e-12);
    assert!(s.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn oracle_mode_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["oracle", "--mode", "analytic", "--landscape", "vcos"],
        vec!["oracle", "--mode", "fixed-lattice", "--landscape", "vstep"],
        vec!["oracle", "--mode", "fixed-lattice", "--radius", "0.03"],
        vec!["oracle", "--mode", "pde", "--landscape", "three-well"],
    ] {
        let out = dir.path().join("never");
        let mut full = args.clone();
        full.extend(["--out", path(&out)]);
        let o = run(&full);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!out.exists());
    }
}

#[test]
fn pde_oracle_reports_second_order() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["oracle", "--mode", "pde", "--halvings", "2", "--out", path(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let order: f64 = column(&dir.path().join("summary.csv"), "order")[0].parse().unwrap();
    assert!((order - 2.0).abs() < 0.1, "order {order}");
    assert_eq!(rows(&dir.path().join("convergence.csv")).len(), 3);
}

#[test]
fn fixed_lattice_oracle_agrees_with_the_exact_mean() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["oracle", "--mode", "fixed-lattice", "--realizations", "10000", "--seed", "5", "--out", path(dir.path())]);
    assert!(o.status.success());
    let summary = dir.path().join("summary.csv");
    let mean: f64 = column(&summary, "mean_time")[0].parse().unwrap();
    let half: f64 = column(&summary, "half_width")[0].parse().unwrap();
    assert!((mean - 0.064831881311).abs() < half, "mean {mean} +/- {half}");
}

#[test]
fn zero_landscape_convergence_is_resolved_at_the_finest_level() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["convergence", "vzero", "--levels", "3", "--realizations", "10000", "--seed", "2", "--out", path(dir.path())]);
    assert!(o.status.success());
    let table = dir.path().join("convergence.csv");
    assert_eq!(column(&table, "resolved").last().unwrap(), "true");
    let kl: Vec<f64> = column(&table, "kl").iter().map(|s| s.parse().unwrap()).collect();
    assert!(kl.iter().all(|&k| (0.0..0.01).contains(&k)));
    assert!(dir.path().join("convergence_fit.csv").exists());
}

#[test]
fn scaling_writes_timings_and_lattice_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["scaling", "--n-list", "8,16", "--realizations", "4", "--radius", "0.01", "--lattice", "--out", path(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let methods = column(&dir.path().join("scaling.csv"), "method");
    assert_eq!(methods, ["dl-fpkmc", "fixed-lattice", "dl-fpkmc", "fixed-lattice"]);
    assert_eq!(rows(&dir.path().join("scaling_fit.csv")).len(), 2);
    let o = run(&["scaling", "--n-list", "7", "--out", path(&dir.path().join("odd"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn output_directory_defaults_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(BIN).args(["oracle", "--mode", "analytic"]).env("DLFPKMC_OUT", dir.path()).output().unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("summary.csv").exists());
}
