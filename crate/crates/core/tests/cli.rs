use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_blockwise");

const DATA: &str = "id\tY\tx\n\
a\t1\t0\n\
a\t3\t1\n\
a\t5\t2\n\
b\t2\t0\n\
b\t2.5\t1\n\
c\t7\t3\n\
c\t9\t4\n\
d\t0\t0\n\
e\t1.5\t2\n";

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(dir).output().unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("d.tsv"), DATA).unwrap();
    dir
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn summary_to_stdout_and_report_on_stderr() {
    let dir = setup();
    let out = run(&["summary", "d.tsv"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("id\tcolumn\ttype\t"));
    assert_eq!(stdout.lines().count(), 1 + 5 * 2);
    assert!(String::from_utf8(out.stderr).unwrap().contains("blocks processed: 5"));
}

#[test]
fn output_independent_of_workers_and_chunks() {
    let dir = setup();
    let base = run(&["melt", "d.tsv"], dir.path()).stdout;
    for (w, c) in [("2", "1"), ("4", "7"), ("3", "64")] {
        for cmd in ["melt", "summary"] {
            let a = run(&[cmd, "--workers", w, "--chunk-bytes", c, "d.tsv"], dir.path());
            let b = run(&[cmd, "d.tsv"], dir.path());
            assert_eq!(a.stdout, b.stdout, "{cmd} w={w} c={c}");
        }
    }
    assert!(!base.is_empty());
}

#[test]
fn regress_writes_coefficients_and_fits() {
    let dir = setup();
    let out = run(
        &["regress", "--response", "Y", "--errors", "skip", "--fits", "fits.jsonl", "d.tsv", "coef.tsv"],
        dir.path(),
    );
    // d and e have a single row and cannot identify a slope, but still fit.
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let coef = read(dir.path(), "coef.tsv");
    let lines: Vec<&str> = coef.lines().collect();
    assert_eq!(lines[0], "id\t(Intercept)\tx");
    let a: Vec<f64> = lines[1].split('\t').skip(1).map(|v| v.parse().unwrap()).collect();
    assert!((a[0] - 1.0).abs() < 1e-12 && (a[1] - 2.0).abs() < 1e-12, "{a:?}");
    assert_eq!(lines.len(), 6);
    let fits = read(dir.path(), "fits.jsonl");
    let first: serde_json::Value = serde_json::from_str(fits.lines().next().unwrap()).unwrap();
    assert_eq!(first["key"], "a");
    assert_eq!(first["n"], 3);
    assert_eq!(first["rank_deficient"], false);
    let d: serde_json::Value = serde_json::from_str(fits.lines().nth(3).unwrap()).unwrap();
    assert_eq!(d["rank_deficient"], true);
    assert!(d["coefficients"][1].is_null());
}

#[test]
fn exec_cat_is_identity() {
    let dir = setup();
    let out = run(&["exec", "--workers", "3", "d.tsv", "o.tsv", "--", "cat"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(read(dir.path(), "o.tsv"), DATA);
}

#[test]
fn exec_head_gives_first_row_of_each_block() {
    let dir = setup();
    let mut want = String::from("id\tY\tx\n");
    let mut last = "";
    for line in DATA.lines().skip(1) {
        let key = line.split('\t').next().unwrap();
        if key != last {
            want.push_str(line);
            want.push('\n');
            last = key;
        }
    }
    // The child sees a header line by default, so it has to keep two lines.
    let out = run(&["exec", "d.tsv", "o.tsv", "--", "head", "-n", "2"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(read(dir.path(), "o.tsv"), want);
    let out = run(&["exec", "--no-child-header", "d.tsv", "o2.tsv", "--", "head -n 1"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(read(dir.path(), "o2.tsv"), want);
}

#[test]
fn exec_failure_is_skipped_with_exit_2() {
    let dir = setup();
    let script = r#"if [ "$BLOCK_KEY" = c ]; then exit 1; fi; cat"#;
    let out = run(&["exec", "--errors", "skip", "d.tsv", "o.tsv", "--", script], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let o = read(dir.path(), "o.tsv");
    assert!(o.contains("\nb\t2.5\t1\n") && o.contains("\nd\t0\t0\n"));
    assert!(!o.contains("\nc\t"));

    let out = run(&["exec", "d.tsv", "o2.tsv", "--", script], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("o2.tsv").exists());
}

#[test]
fn head_copies_first_blocks_verbatim() {
    let dir = setup();
    let out = run(&["head", "--blocks", "2", "d.tsv"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let want: String = DATA.lines().take(6).map(|l| format!("{l}\n")).collect();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), want);
}

#[test]
fn lint_exit_status() {
    let dir = setup();
    assert_eq!(run(&["lint", "d.tsv"], dir.path()).status.code(), Some(0));
    std::fs::write(dir.path().join("bad.tsv"), "k\tv\na\t1\na\t2\nb\t3\na\t4\n").unwrap();
    let out = run(&["lint", "bad.tsv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().contains("`a`"));
}

#[test]
fn reads_standard_input() {
    let dir = setup();
    let mut child = Command::new(BIN)
        .args(["melt", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(DATA.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.stdout, run(&["melt", "d.tsv"], dir.path()).stdout);
}

#[test]
fn bad_flags_exit_1() {
    let dir = setup();
    assert_eq!(run(&["summary", "--workers", "0", "d.tsv"], dir.path()).status.code(), Some(1));
    assert_eq!(run(&["summary", "missing.tsv"], dir.path()).status.code(), Some(1));
    assert_eq!(run(&["exec", "d.tsv", "o.tsv"], dir.path()).status.code(), Some(1));
    assert_eq!(run(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn bench_with_zero_lines() {
    let dir = setup();
    let out = run(&["bench", "--lines", "0", "--repeats", "2"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let s = String::from_utf8(out.stdout).unwrap();
    assert!(s.contains("0 lines") && s.contains("identical across repeats: yes"));
}
