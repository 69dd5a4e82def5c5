use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn linesim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linesim")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = linesim(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn lines(p: &Path) -> Vec<String> {
    std::fs::read_to_string(p).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn reconstruct_classify_cif() {
    let dir = tempfile::tempdir().unwrap();
    let pfs = dir.path().join("pfs.csv");
    let os = dir.path().join("os.csv");
    let classified = dir.path().join("classified.csv");
    let cif = dir.path().join("cif.csv");
    let hazards = dir.path().join("hazards.csv");

    ok(&["reconstruct", "--curve", s(&fixtures().join("line2_aa_pfs.json")), "--out", s(&pfs)]);
    ok(&["reconstruct", "--curve", s(&fixtures().join("line2_aa_os.json")), "--out", s(&os)]);
    let pfs_rows = lines(&pfs);
    assert_eq!(pfs_rows[0], "time,indicator");
    assert_eq!(pfs_rows.len() - 1, 564);

    ok(&["classify", "--pfs", s(&pfs), "--os", s(&os), "--epsilon", "0.01", "--out", s(&classified)]);
    let rows = lines(&classified);
    assert_eq!(rows[0], "time,code");
    assert_eq!(rows.len(), pfs_rows.len());
    assert!(rows.iter().skip(1).any(|r| r.ends_with(",2")));

    ok(&[
        "cif", "--data", s(&classified), "--out", s(&cif),
        "--transitions", s(&hazards), "--horizon", "20",
    ]);
    assert_eq!(lines(&cif)[0], "time,f_prog,f_death,s_all");
    let h = lines(&hazards);
    assert_eq!(h[0], "cycle,h_prog,h_death");
    assert_eq!(h.len(), 21);
}

#[test]
fn missing_curve_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = linesim(&["reconstruct", "--curve", s(&missing), "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nope.json"), "{err}");
}

#[test]
fn run_all_reports_failing_stage() {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(fixtures()).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
    }
    std::fs::remove_file(dir.path().join("line1_dct_pfs.json")).unwrap();
    let out = linesim(&["run-all", "--config", s(&dir.path().join("config.json")), "--out", s(&dir.path().join("out"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("reconstruct") && err.contains("line1_dct_pfs.json"), "{err}");
}

#[test]
fn make_fixtures_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["make-fixtures", "--out", s(&a), "--n-patients", "500"]);
    ok(&["make-fixtures", "--out", s(&b), "--n-patients", "500"]);
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 10);
    for n in names {
        assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
    assert!(std::fs::read_to_string(a.join("config.json")).unwrap().contains("\"n_patients\": 500"));
}

#[test]
fn bad_arguments_are_rejected() {
    let out = linesim(&["ce", "--config", "x.json", "--theta", "2", "--out", "y.csv"]);
    assert_eq!(out.status.code(), Some(2));
}
