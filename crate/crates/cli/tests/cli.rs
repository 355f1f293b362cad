use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn crdsa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crdsa"))
        .args(args)
        .env("CRDSA_OUT_DIR", dir)
        .output()
        .expect("run crdsa")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Small table shared by the tests: 10-slot frames, up to 40 attempts.
fn small_table() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    let dir = DIR.get_or_init(|| {
        let d = TempDir::new().unwrap();
        let o = crdsa(
            d.path(),
            &["build-q", "--slots", "10", "--iterations", "5", "--tau-max", "40", "--trials", "300", "--seed", "3"],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        d
    });
    dir.path()
}

fn table_arg() -> String {
    small_table().join("q-table.txt").display().to_string()
}

fn report(dir: &Path, cmd: &str) -> String {
    fs::read_to_string(dir.join(format!("{cmd}.report.txt"))).unwrap()
}

fn without_timestamp(s: &str) -> String {
    s.lines().filter(|l| !l.starts_with("generated_unix")).collect::<Vec<_>>().join("\n")
}

#[test]
fn build_q_is_reproducible() {
    let a = small_table();
    let b = TempDir::new().unwrap();
    let o = crdsa(
        b.path(),
        &["build-q", "--slots", "10", "--iterations", "5", "--tau-max", "40", "--trials", "300", "--seed", "3"],
    );
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read(a.join("q-table.txt")).unwrap(),
        fs::read(b.path().join("q-table.txt")).unwrap()
    );
    assert!(report(b.path(), "build-q").contains("peak_throughput = "));
    assert!(fs::read_to_string(b.path().join("build-q.csv")).unwrap().starts_with("load,throughput\n"));
}

#[test]
fn usage_errors_exit_2() {
    let d = TempDir::new().unwrap();
    assert_eq!(code(&crdsa(d.path(), &["build-q", "--degree", "two"])), 2);
    assert_eq!(code(&crdsa(d.path(), &["delay", "--scheme", "sa", "-m", "10", "--pr", "0.1"])), 2);
    assert_eq!(code(&crdsa(d.path(), &["delay", "--scheme", "sa", "-m", "10", "--p0", "1.5", "--pr", "0.1"])), 2);
    let o = crdsa(d.path(), &["delay", "-m", "20", "--p0", "0.1", "--pr", "0.1", "--slots", "100", "--table", &table_arg()]);
    assert_eq!(code(&o), 2, "frame mismatch with the table");
    let o = crdsa(d.path(), &["delay", "-m", "50", "--p0", "0.1", "--pr", "0.1", "--table", &table_arg()]);
    assert_eq!(code(&o), 2, "population beyond the table");
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[invalid-config]"));
}

#[test]
fn missing_table_exits_4() {
    let d = TempDir::new().unwrap();
    let o = crdsa(d.path(), &["delay", "-m", "20", "--p0", "0.1", "--pr", "0.1"]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("build-q"));
}

#[test]
fn delay_and_equilibria_on_stable_channel() {
    let d = TempDir::new().unwrap();
    let args = ["-m", "20", "--p0", "0.05", "--pr", "0.3", "--table", &table_arg()];
    let o = crdsa(d.path(), &[&["delay"][..], &args].concat());
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("n0 = "));
    let r = report(d.path(), "delay");
    for key in ["classification = stable", "n0 = ", "s0 = ", "delay_slots = ", "min_service_slots = 10"] {
        assert!(r.contains(key), "{key} in {r}");
    }
    let o = crdsa(d.path(), &[&["equilibria"][..], &args].concat());
    assert_eq!(code(&o), 0);
    assert!(report(d.path(), "equilibria").contains("equilibria = 1\n"));
    let csv = fs::read_to_string(d.path().join("equilibria.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn unstable_delay_exits_3() {
    let d = TempDir::new().unwrap();
    let o = crdsa(d.path(), &["delay", "--scheme", "sa", "-m", "100", "--p0", "0.05", "--pr", "0.5"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[infeasible]"));
    assert!(report(d.path(), "delay").contains("status = not-applicable"));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("run.cfg");
    fs::write(&cfg, "# slotted ALOHA\nscheme = sa\npopulation = 40\np0 = 0.002\npr = 0.05\n").unwrap();
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&crdsa(d.path(), &["delay", "--config", c])), 0);
    assert!(report(d.path(), "delay").contains("population = 40\n"));
    assert_eq!(code(&crdsa(d.path(), &["delay", "--config", c, "-m", "30"])), 0);
    assert!(report(d.path(), "delay").contains("population = 30\n"));

    fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(code(&crdsa(d.path(), &["delay", "--config", c])), 2);
}

#[test]
fn reruns_are_identical_apart_from_timestamp() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = ["fet-curve", "-m", "30", "--p0", "0.4", "--pr-grid", "log:0.01:1:12", "--table", &table_arg()];
    assert_eq!(code(&crdsa(a.path(), &args)), 0);
    assert_eq!(code(&crdsa(b.path(), &[&args[..], &["--workers", "1"]].concat())), 0);
    let csv = |d: &Path| fs::read(d.join("fet-curve.csv")).unwrap();
    assert_eq!(csv(a.path()), csv(b.path()));
    assert_eq!(without_timestamp(&report(a.path(), "fet-curve")), without_timestamp(&report(b.path(), "fet-curve")));
}

#[test]
fn sa_optimisation_commands() {
    let d = TempDir::new().unwrap();
    let sa = ["--scheme", "sa", "-m", "40", "--p0", "0.002", "--pr-grid", "log:1e-3:1:30"];
    let o = crdsa(d.path(), &[&["optimize-pr"][..], &sa].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(report(d.path(), "optimize-pr").contains("feasible = true"));
    assert_eq!(fs::read_to_string(d.path().join("optimize-pr.csv")).unwrap().lines().count(), 31);

    let o = crdsa(d.path(), &[&["max-m", "--target", "200", "--m-max", "200", "--locus"][..], &sa].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("M* = "));
    assert!(d.path().join("max-m.locus.csv").exists());

    let o = crdsa(d.path(), &[&["max-p0", "--target", "200"][..], &sa].concat());
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("p0* = "));

    let o = crdsa(d.path(), &[&["max-m", "--target", "100", "--m-min", "400"][..], &sa].concat());
    assert_eq!(code(&o), 3, "no stable population above 400");
    assert!(report(d.path(), "max-m").contains("feasible = false"));
}

#[test]
fn fet_by_boundary_and_rule() {
    let d = TempDir::new().unwrap();
    let sa = ["--scheme", "sa", "-m", "60", "--p0", "0.01", "--pr", "0.5"];
    let o = crdsa(d.path(), &[&["fet", "--boundary", "10"][..], &sa].concat());
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(d.path().join("fet.csv")).unwrap().lines().count(), 12);
    let o = crdsa(d.path(), &[&["fet", "--rule", "saturation"][..], &sa].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(report(d.path(), "fet").contains("rule = saturation"));

    let stable = ["fet", "--scheme", "sa", "-m", "20", "--p0", "0.002", "--pr", "0.05"];
    assert_eq!(code(&crdsa(d.path(), &stable)), 3);
}

#[test]
fn validate_against_analysis() {
    let d = TempDir::new().unwrap();
    let o = crdsa(
        d.path(),
        &["validate", "-m", "30", "--p0", "0.4", "--pr", "0.3", "--runs", "20", "--epochs", "2000", "--boundary", "8", "--table", &table_arg()],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(d.path(), "validate");
    for key in ["sim_fet_epochs = ", "computed_fet_epochs = ", "matrix_max_abs_deviation = "] {
        assert!(r.contains(key), "{key}");
    }
    assert_eq!(fs::read_to_string(d.path().join("validate.csv")).unwrap().lines().count(), 21);
    assert_eq!(fs::read_to_string(d.path().join("validate.matrix.csv")).unwrap().lines().count(), 82);
}

#[test]
fn compare_schemes() {
    let d = TempDir::new().unwrap();
    let o = crdsa(d.path(), &["compare", "-m", "30", "--p0", "0.2", "--pr-grid", "log:1e-3:1:30", "--table", &table_arg()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(d.path(), "compare");
    assert!(r.contains("sa_p0 = 0.02\n"), "{r}");
    assert!(r.contains("delay_saving = "));

    let o = crdsa(
        d.path(),
        &["compare", "--analysis", "fet-curve", "-m", "40", "--p0", "0.1", "--pr-grid", "lin:0.3:1:8", "--table", &table_arg()],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(d.path().join("compare.csv")).unwrap().starts_with("pr,crdsa_fet_slots,sa_fet_slots,ratio"));
}

#[test]
fn out_dir_flag_beats_env() {
    let env_dir = TempDir::new().unwrap();
    let flag_dir = TempDir::new().unwrap();
    let f = flag_dir.path().to_str().unwrap();
    let o = crdsa(env_dir.path(), &["drift", "--scheme", "sa", "-m", "10", "--p0", "0.01", "--pr", "0.1", "--out-dir", f]);
    assert_eq!(code(&o), 0);
    assert!(flag_dir.path().join("drift.csv").exists());
    assert!(!env_dir.path().join("drift.csv").exists());
    let _: PathBuf = flag_dir.path().join("drift.report.txt");
}
