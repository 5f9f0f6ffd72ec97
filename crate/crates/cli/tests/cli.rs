use std::path::Path;
use std::process::{Command, Output};

use partcert::harness::{write_csv, CsvSchema};
use partcert::synthetic;

fn partcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_partcert")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn setup(dir: &Path) -> String {
    let schema = CsvSchema {
        target: "label".into(),
        delimiter: b',',
    };
    let data = synthetic::gaussian_blobs(150, 10, 3, 1.5, 4).unwrap();
    write_csv(&dir.join("blobs.csv"), &data, &schema).unwrap();
    let cfg = dir.join("run.cfg");
    std::fs::write(
        &cfg,
        "# blobs\ndataset = blobs.csv\ntarget = label\nsubmodels = 5\ndecision = runoff\ntopk = 2\niterations = 100\n",
    )
    .unwrap();
    cfg.to_str().unwrap().to_string()
}

#[test]
fn partition_writes_json_and_requires_seed_when_random() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.json");
    let out_s = out.to_str().unwrap();
    let ok = partcert(&["partition", "--features", "7", "--submodels", "3", "--strategy", "strided", "--out", out_s]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("partcert-partition/1"));

    let unseeded = partcert(&["partition", "--features", "7", "--submodels", "3", "--out", out_s]);
    assert_eq!(code(&unseeded), 3);
    assert!(stderr(&unseeded).contains("--seed"));

    let overlap = partcert(&[
        "partition", "--features", "8", "--submodels", "2", "--strategy", "overlapping", "--spread", "2", "--seed", "5",
        "--out", out_s,
    ]);
    assert_eq!(code(&overlap), 0, "{}", stderr(&overlap));

    let too_many = partcert(&["partition", "--features", "2", "--submodels", "3", "--strategy", "strided", "--out", out_s]);
    assert_eq!(code(&too_many), 3);
}

#[test]
fn evaluate_writes_report_and_needs_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let report = dir.path().join("report");
    let report_s = report.to_str().unwrap();
    let out = partcert(&["evaluate", "--config", &cfg, "--seed", "9", "--out", report_s]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("runoff"));
    for f in ["records.jsonl", "summary.json", "curve-runoff.csv", "curve-topk-2.csv"] {
        assert!(report.join(f).exists(), "{f} missing");
    }
    let first = std::fs::read_to_string(report.join("records.jsonl")).unwrap();
    assert!(first.lines().next().unwrap().contains("\"instance_id\""));

    let unseeded = partcert(&["evaluate", "--config", &cfg, "--out", report_s]);
    assert_eq!(code(&unseeded), 3);

    let bad_key = partcert(&["evaluate", "--config", &cfg, "--seed", "1", "--set", "colour=red", "--out", report_s]);
    assert_eq!(code(&bad_key), 3);

    let bad_topk = partcert(&["evaluate", "--config", &cfg, "--seed", "1", "--set", "topk=3", "--out", report_s]);
    assert_eq!(code(&bad_topk), 3, "{}", stderr(&bad_topk));
}

#[test]
fn train_then_certify_heldout_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let model = dir.path().join("model");
    let model_s = model.to_str().unwrap();
    let out = partcert(&["train", "--config", &cfg, "--seed", "2", "--out", model_s]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(model.join("manifest.json").exists());

    let heldout = model.join("heldout.csv");
    let certs = dir.path().join("certs");
    let out = partcert(&[
        "certify", "--model", model_s, "--data", heldout.to_str().unwrap(), "--target", "label", "--decision", "runoff",
        "--topk", "2", "--out", certs.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = std::fs::read_to_string(&heldout).unwrap().lines().count() - 1;
    let records = std::fs::read_to_string(certs.join("records.jsonl")).unwrap().lines().count();
    assert_eq!(records, 2 * rows);

    let regression_rule = partcert(&[
        "certify", "--model", model_s, "--data", heldout.to_str().unwrap(), "--target", "label", "--interval",
        "absolute:1", "--out", certs.to_str().unwrap(),
    ]);
    assert_eq!(code(&regression_rule), 3);
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "a,b,label\n1,2,x\n3,NaN,y\n4,5,x\n").unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "dataset = bad.csv\ntarget = label\nsubmodels = 2\n").unwrap();
    let out = partcert(&["evaluate", "--config", cfg.to_str().unwrap(), "--seed", "1", "--out", "unused"]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("line 3") && err.contains("column `b`"), "{err}");
}

#[test]
fn oracle_check_reports_and_enforces_caps() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let out = partcert(&[
        "oracle-check", "--method", "runoff", "--submodels", "4", "--labels", "3", "--profiles", "50", "--seed", "3",
        "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("profile_hash,method,label,certified,oracle,equal"));
    assert_eq!(text.lines().count(), 51);

    let topk = partcert(&["oracle-check", "--method", "topk(2)", "--submodels", "5", "--labels", "4", "--profiles", "20", "--seed", "1"]);
    assert_eq!(code(&topk), 0, "{}", stderr(&topk));

    let big = partcert(&["oracle-check", "--method", "plurality", "--submodels", "12", "--labels", "2", "--profiles", "1", "--seed", "1"]);
    assert_eq!(code(&big), 4);
    let raised = partcert(&[
        "oracle-check", "--method", "plurality", "--submodels", "12", "--labels", "2", "--profiles", "2", "--seed", "1",
        "--max-submodels", "12",
    ]);
    assert_eq!(code(&raised), 0);

    let bad = partcert(&["oracle-check", "--method", "borda", "--submodels", "3", "--labels", "2", "--seed", "1"]);
    assert_eq!(code(&bad), 3);
}

#[test]
fn envelope_takes_pointwise_maximum() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    std::fs::write(&a, "psi,certified_accuracy\n0,0.9\n1,0.5\n").unwrap();
    std::fs::write(&b, "psi,certified_accuracy\n0,0.8\n1,0.6\n2,0.1\n").unwrap();
    let env = dir.path().join("env.csv");
    let out = partcert(&["envelope", a.to_str().unwrap(), b.to_str().unwrap(), "--out", env.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(
        std::fs::read_to_string(&env).unwrap(),
        "psi,certified_accuracy\n0,0.9\n1,0.6\n2,0.1\n"
    );
}
