use std::borrow::BorrowMut;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lowrank(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lowrank"));
    cmd.args(args).env_remove("LOWRANK_OUTPUT_DIR");
    cmd
}

fn run(mut cmd: impl BorrowMut<Command>) -> Output {
    cmd.borrow_mut().output().expect("binary runs")
}

fn stdout_lines(out: &Output) -> Vec<String> {
    String::from_utf8(out.stdout.clone()).unwrap().lines().map(String::from).collect()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

const SMALL: &[&str] = &[
    "--m", "40", "--n", "30", "--r-true", "2", "--noise", "0.05", "--p", "0.5", "--rank", "4",
    "--beta-max", "1", "--max-iter", "100",
];

fn synth(extra: &[&str]) -> Command {
    let mut args = vec!["synth"];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    lowrank(&args)
}

fn write_ratings(path: &Path) {
    let mut text = String::new();
    for u in 0..30 {
        for i in 0..20 {
            if (u + 2 * i) % 3 != 0 {
                let y = 1 + (u + 2 * i) % 5;
                text.push_str(&format!("u{u}\tm{i}\t{y}\t0\n"));
            }
        }
    }
    fs::write(path, text).unwrap();
}

#[test]
fn help_and_version_succeed() {
    assert!(run(&mut lowrank(&["--help"])).status.success());
    assert!(run(&mut lowrank(&["--version"])).status.success());
    let out = run(&mut lowrank(&["sweep", "--help"]));
    assert!(String::from_utf8(out.stdout).unwrap().contains("--beta-max"));
}

#[test]
fn synth_prints_one_row_per_seed_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(synth(&["--seeds", "0,1,2", "--output-dir", dir.path().to_str().unwrap()]));
    assert!(out.status.success(), "{}", stderr(&out));
    let lines = stdout_lines(&out);
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("cell,beta_max,gamma0,p,seed"));
    assert_eq!(fs::read_to_string(dir.path().join("summary.csv")).unwrap().lines().count(), 4);
    assert_eq!(fs::read_dir(dir.path().join("traces")).unwrap().count(), 3);
}

#[test]
fn config_file_supplies_options_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "m = 40\nn = 30\nr_true = 2\nnoise = 0.05\np = [0.5]\nrank = 4\nbeta_max = [1]\n\
         gamma0 = [\"auto\"]\nmax_iter = 100\nseeds = [0, 1, 2]\nregularizer = \"log_det\"\n",
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();

    let out = run(&mut lowrank(&["synth", "--config", cfg]));
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout_lines(&out).len(), 4);

    let out = run(&mut lowrank(&["synth", "--config", cfg, "--seeds", "7", "--beta-max", "2"]));
    assert!(out.status.success(), "{}", stderr(&out));
    let lines = stdout_lines(&out);
    assert_eq!(lines.len(), 2);
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!((fields[1], fields[4]), ("2.0", "7"));
}

#[test]
fn config_file_errors_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "beta_maks = [1.0]\n").unwrap();
    let out = run(&mut lowrank(&["synth", "--config", cfg.to_str().unwrap()]));
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("beta_maks"));

    fs::write(&cfg, "gamma0 = [\"often\"]\n").unwrap();
    let out = run(&mut lowrank(&["synth", "--config", cfg.to_str().unwrap()]));
    assert_eq!(out.status.code(), Some(1));

    let out = run(&mut lowrank(&["synth", "--config", "/nonexistent/run.toml"]));
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn output_dir_comes_from_the_environment_last() {
    let env_dir = tempfile::tempdir().unwrap();
    let out = run(synth(&[]).env("LOWRANK_OUTPUT_DIR", env_dir.path()));
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(env_dir.path().join("summary.csv").is_file());

    let file_dir = tempfile::tempdir().unwrap();
    let cfg = file_dir.path().join("run.toml");
    fs::write(&cfg, format!("output_dir = {:?}\n", file_dir.path().join("out"))).unwrap();
    let other = tempfile::tempdir().unwrap();
    let out = run(synth(&["--config", cfg.to_str().unwrap()]).env("LOWRANK_OUTPUT_DIR", other.path()));
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(file_dir.path().join("out/summary.csv").is_file());
    assert!(!other.path().join("summary.csv").exists());
}

#[test]
fn invalid_options_exit_with_config_code() {
    let out = run(&mut lowrank(&["synth", "--m", "40", "--n", "30", "--p", "0.5"]));
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("r_true"));

    let out = run(synth(&["--beta-max", "1,2"]));
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("sweep"));

    let out = run(synth(&["--regularizer", "capped_l1", "--method", "gen_altmin"]));
    assert_eq!(out.status.code(), Some(1));

    let out = run(synth(&["--regularizer", "frobenius"]));
    assert_eq!(out.status.code(), Some(1));

    let out = run(synth(&["--seeds", "x"]));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_multiplies_axes() {
    let out = run(&mut lowrank(&[
        "sweep", "--m", "40", "--n", "30", "--r-true", "2", "--p", "0.4,0.6", "--rank", "4",
        "--beta-max", "0.5,1", "--gamma0", "auto,8", "--max-iter", "60", "--seeds", "0,1",
    ]));
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout_lines(&out).len(), 1 + 2 * 2 * 2 * 2);
}

#[test]
fn xval_reports_folds_and_average() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ratings.tsv");
    write_ratings(&data);
    let out = run(&mut lowrank(&[
        "xval", "--input", data.to_str().unwrap(), "--folds", "4", "--rank", "3", "--beta-max",
        "0.5", "--max-iter", "60",
    ]));
    assert!(out.status.success(), "{}", stderr(&out));
    let lines = stdout_lines(&out);
    assert_eq!(lines.len(), 1 + 4 + 1);
    assert!(lines[5].contains(",avg,nmae,"));
}

#[test]
fn bad_input_files_exit_with_io_code() {
    let out = run(&mut lowrank(&["xval", "--input", "/nonexistent/u.data"]));
    assert_eq!(out.status.code(), Some(3));

    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ratings.tsv");
    fs::write(&data, "1\t1\t5\n1\t2\n").unwrap();
    let out = run(&mut lowrank(&["xval", "--input", data.to_str().unwrap()]));
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains(":2:"));
}

#[test]
fn complete_fills_a_dense_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("m.txt");
    let mut text = String::from("6 5\n");
    for i in 0..6 {
        let row: Vec<String> = (0..5)
            .map(|j| if (i + j) % 4 == 0 { "NaN".into() } else { format!("{}", (i + 1) * (j + 1)) })
            .collect();
        text.push_str(&row.join(" "));
        text.push('\n');
    }
    fs::write(&input, text).unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&mut lowrank(&[
        "complete", "--input", input.to_str().unwrap(), "--format", "matrix", "--rank", "1",
        "--beta-max", "100", "--output-dir", out_dir.to_str().unwrap(),
    ]));
    assert!(out.status.success(), "{}", stderr(&out));
    let lines = stdout_lines(&out);
    assert!(lines[1].starts_with("6,5,22,"));
    let completed = fs::read_to_string(out_dir.join("completed.txt")).unwrap();
    let mut rows = completed.lines();
    assert_eq!(rows.next(), Some("6 5"));
    // the missing (0, 0) entry of the rank-1 matrix is close to 1
    let first: f64 = rows.next().unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!((first - 1.0).abs() < 1e-3, "{first}");
    assert!(out_dir.join("trace.csv").is_file());
}

#[test]
fn complete_ratings_keeps_identifiers() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("ratings.tsv");
    write_ratings(&data);
    let out_dir = dir.path().join("out");
    let out = run(&mut lowrank(&[
        "complete", "--input", data.to_str().unwrap(), "--rank", "3", "--beta-max", "0.5",
        "--max-iter", "50", "--output-dir", out_dir.to_str().unwrap(),
    ]));
    assert!(out.status.success(), "{}", stderr(&out));
    let users = fs::read_to_string(out_dir.join("rows.txt")).unwrap();
    assert_eq!(users.lines().count(), 30);
    assert_eq!(users.lines().next(), Some("u0"));
    assert_eq!(fs::read_to_string(out_dir.join("cols.txt")).unwrap().lines().count(), 20);
}
