//! End-to-end tests of the `coda` binary.

use std::path::{Path, PathBuf};
use std::process::Command;

use coda_cli::{load_csv, RoleSpec, SavedModel};

const GLASS_ROLES: &str = "RI=response,Na:Fe=part,type=strata";

fn glass() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/glass.csv")
}

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn coda(args: &[&str]) -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_coda"))
        .args(args)
        .output()
        .unwrap();
    Outcome {
        code: out.status.code().unwrap(),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn assert_single_error_line(o: &Outcome, code: i32, tag: &str) {
    assert_eq!(o.code, code, "stderr: {}", o.stderr);
    assert_eq!(o.stderr.lines().count(), 1, "{}", o.stderr);
    assert!(o.stderr.contains(&format!("code={tag}")), "{}", o.stderr);
}

#[test]
fn loads_glass() {
    let d = load_csv(
        &glass(),
        &RoleSpec::parse("RI=response,Na:Fe=part,type=factor").unwrap(),
    )
    .unwrap();
    assert_eq!(d.n(), 214);
    assert_eq!(d.composition.dim(), 8);
    assert_eq!(d.composition.labels()[0], "Na");
    assert_eq!(d.factor.unwrap().1.len(), 214);
}

#[test]
fn cv_and_selection_are_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let input = glass();
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let o = coda(&[
            "pcr-cv",
            "--input",
            input.to_str().unwrap(),
            "--roles",
            GLASS_ROLES,
            "--alpha-grid",
            "0.5:1:0.25",
            "--k-grid",
            "6:7",
            "--folds",
            "10",
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.code, 0, "{}", o.stderr);
        assert!(o.stdout.starts_with("ok command=pcr-cv"));
        reports.push(std::fs::read(out.join("cv_report.csv")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let text = String::from_utf8(reports[0].clone()).unwrap();
    // 3 alphas x 2 ks x 10 folds plus the header
    assert_eq!(text.lines().count(), 61);

    let mut curves = Vec::new();
    for run in ["c", "d"] {
        let out = tmp.path().join(run);
        let o = coda(&[
            "select-alpha",
            "--input",
            input.to_str().unwrap(),
            "--roles",
            "Na:Fe=part",
            "--alpha-grid",
            "0.5:1:0.25",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.code, 0, "{}", o.stderr);
        curves.push(std::fs::read(out.join("criterion_curve.csv")).unwrap());
    }
    assert_eq!(curves[0], curves[1]);
}

#[test]
fn model_json_round_trips_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let o = coda(&[
        "pcr",
        "--input",
        glass().to_str().unwrap(),
        "--roles",
        "RI=response,Na:Fe=part,type=factor",
        "--reference",
        "Head",
        "--alpha",
        "0.95",
        "--k",
        "7",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let text = std::fs::read_to_string(tmp.path().join("model.json")).unwrap();
    let model = SavedModel::from_json(&text).unwrap();
    assert_eq!(format!("{}\n", model.to_json().unwrap()), text);
    assert_eq!(
        SavedModel::from_json(&model.to_json().unwrap()).unwrap(),
        model
    );

    // predictions from the saved model equal the in-sample fit
    let pred_dir = tmp.path().join("pred");
    let o = coda(&[
        "predict",
        "--input",
        glass().to_str().unwrap(),
        "--roles",
        "Na:Fe=part,type=factor",
        "--model",
        tmp.path().join("model.json").to_str().unwrap(),
        "--out",
        pred_dir.to_str().unwrap(),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let pred = std::fs::read_to_string(pred_dir.join("predictions.csv")).unwrap();
    let fitted = std::fs::read_to_string(tmp.path().join("observed_vs_fitted.csv")).unwrap();
    for (p, f) in pred.lines().skip(1).zip(fitted.lines().skip(1)) {
        assert_eq!(p.split(',').nth(1), f.split(',').nth(2));
    }
}

#[test]
fn regression_model_round_trips_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write(
        tmp.path(),
        "in.csv",
        "t,a,b,c\n0.1,0.2,0.3,0.5\n0.5,0.1,0.6,0.3\n0.9,0.3,0.3,0.4\n1.3,0.25,0.5,0.25\n1.7,0.6,0.2,0.2\n2.1,0.15,0.15,0.7\n",
    );
    let out = tmp.path().join("o");
    let o = coda(&[
        "alphareg",
        "--input",
        input.to_str().unwrap(),
        "--roles",
        "t=covariate,a:c=part",
        "--alpha",
        "0.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let text = std::fs::read_to_string(out.join("model.json")).unwrap();
    let model = SavedModel::from_json(&text).unwrap();
    assert_eq!(format!("{}\n", model.to_json().unwrap()), text);
}

#[test]
fn label_mismatch_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = coda(&[
        "pcr",
        "--input",
        glass().to_str().unwrap(),
        "--roles",
        "RI=response,Na:Fe=part",
        "--alpha",
        "1",
        "--k",
        "3",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let other = write(
        tmp.path(),
        "other.csv",
        "x1,x2,x3,x4,x5,x6,x7,x8\n1,2,3,4,5,6,7,8\n",
    );
    let o = coda(&[
        "predict",
        "--input",
        other.to_str().unwrap(),
        "--roles",
        "x1:x8=part",
        "--model",
        tmp.path().join("model.json").to_str().unwrap(),
        "--out",
        tmp.path().join("p").to_str().unwrap(),
    ]);
    assert_single_error_line(&o, 3, "LabelMismatch");
}

#[test]
fn unknown_factor_level_at_prediction() {
    let tmp = tempfile::tempdir().unwrap();
    let o = coda(&[
        "pcr",
        "--input",
        glass().to_str().unwrap(),
        "--roles",
        "RI=response,Na:Fe=part,type=factor",
        "--alpha",
        "1",
        "--k",
        "3",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let new = write(
        tmp.path(),
        "new.csv",
        "Na,Mg,Al,Si,K,Ca,Ba,Fe,type\n13,3,1,72,0.5,8,0,0,Bottle\n",
    );
    let o = coda(&[
        "predict",
        "--input",
        new.to_str().unwrap(),
        "--roles",
        "Na:Fe=part,type=factor",
        "--model",
        tmp.path().join("model.json").to_str().unwrap(),
        "--out",
        tmp.path().join("p").to_str().unwrap(),
    ]);
    assert_single_error_line(&o, 3, "UnknownFactorLevel");
}

#[test]
fn header_only_file_is_empty_data() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write(tmp.path(), "h.csv", "a,b,c\n");
    let o = coda(&[
        "transform",
        "--input",
        input.to_str().unwrap(),
        "--roles",
        "a:c=part",
        "--alpha",
        "0.5",
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_single_error_line(&o, 3, "EmptyData");
}

#[test]
fn unparseable_cell_names_row_and_column() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write(tmp.path(), "na.csv", "a,b,c\n1,2,3\n4,n/a,6\n");
    let o = coda(&[
        "transform",
        "--input",
        input.to_str().unwrap(),
        "--roles",
        "a:c=part",
        "--alpha",
        "0.5",
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_single_error_line(&o, 3, "ParseError");
    assert!(o.stderr.contains("row 2"), "{}", o.stderr);
    assert!(o.stderr.contains("\\\"b\\\""), "{}", o.stderr);
}

#[test]
fn configuration_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let g = glass();
    let cases: Vec<Vec<&str>> = vec![
        vec![
            "pcr",
            "--input",
            g.to_str().unwrap(),
            "--roles",
            "RI=response,Na:Fe=part",
            "--k",
            "7",
            "--out",
            out.to_str().unwrap(),
        ],
        vec![
            "pcr",
            "--input",
            g.to_str().unwrap(),
            "--roles",
            "RI=response,Nope:Fe=part",
            "--alpha",
            "1",
            "--k",
            "7",
            "--out",
            out.to_str().unwrap(),
        ],
        vec![
            "pcr-cv",
            "--input",
            g.to_str().unwrap(),
            "--roles",
            "RI=response,Na:Fe=part",
            "--alpha-grid",
            "0:1",
            "--k",
            "7",
            "--out",
            out.to_str().unwrap(),
        ],
        vec![
            "frobnicate",
            "--input",
            g.to_str().unwrap(),
            "--roles",
            "x=part",
            "--out",
            out.to_str().unwrap(),
        ],
        vec![
            "pcr",
            "--input",
            g.to_str().unwrap(),
            "--roles",
            "RI=response,Na:Fe=part",
            "--alpha",
            "1.5",
            "--k",
            "7",
            "--out",
            out.to_str().unwrap(),
        ],
    ];
    for args in cases {
        let o = coda(&args);
        assert_eq!(o.code, 2, "{args:?}: {}", o.stderr);
        assert_eq!(o.stderr.lines().count(), 1, "{}", o.stderr);
        assert!(o.stderr.starts_with("error kind=config"));
    }
}

#[test]
fn numeric_failure_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    // a constant response makes the adjusted R^2 undefined
    let input = write(
        tmp.path(),
        "c.csv",
        "y,a,b,c\n1,0.2,0.3,0.5\n1,0.1,0.6,0.3\n1,0.3,0.3,0.4\n1,0.25,0.5,0.25\n1,0.6,0.2,0.2\n",
    );
    let o = coda(&[
        "pcr",
        "--input",
        input.to_str().unwrap(),
        "--roles",
        "y=response,a:c=part",
        "--alpha",
        "1",
        "--k",
        "1",
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_single_error_line(&o, 4, "DegenerateVariance");
}

#[test]
fn zeros_with_log_ratio_is_a_data_error_and_impute_fixes_it() {
    let tmp = tempfile::tempdir().unwrap();
    let g = glass();
    let o = coda(&[
        "transform",
        "--input",
        g.to_str().unwrap(),
        "--roles",
        "Na:Fe=part",
        "--alpha",
        "0",
        "--out",
        tmp.path().join("a").to_str().unwrap(),
    ]);
    assert_single_error_line(&o, 3, "ZeroPart");
    let o = coda(&[
        "transform",
        "--input",
        g.to_str().unwrap(),
        "--roles",
        "Na:Fe=part",
        "--alpha",
        "0",
        "--impute",
        "--out",
        tmp.path().join("b").to_str().unwrap(),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let o = coda(&[
        "impute",
        "--input",
        g.to_str().unwrap(),
        "--roles",
        "Na:Fe=part",
        "--out",
        tmp.path().join("c").to_str().unwrap(),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let imputed = std::fs::read_to_string(tmp.path().join("c/imputed.csv")).unwrap();
    assert_eq!(imputed.lines().count(), 215);
    assert!(tmp.path().join("c/impute_report.json").exists());
}

#[test]
fn artifacts_leave_no_temporary_files() {
    let tmp = tempfile::tempdir().unwrap();
    let o = coda(&[
        "alrreg",
        "--input",
        glass().to_str().unwrap(),
        "--roles",
        "RI=covariate,Na=part,Al=part,Si=part,Ca=part",
        "--divisor",
        "Si",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let mut names: Vec<String> = std::fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["model.json", "observed_vs_fitted.csv"]);
}
