use std::path::Path;
use std::process::{Command, Output};

use glomics::cohort::{encode_pgm, write_case_features, Unit};
use glomics::morphometry::{CaseFeatureVector, FEATURE_NAMES};
use tempfile::TempDir;

fn glomics(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glomics"))
        .args(args)
        .env_remove("GLOMICS_DATA_ROOT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Concentric capsule (label 1) and tuft (label 2) disks.
fn glomerulus(size: usize, r_bow: f64, r_tuft: f64) -> Vec<u8> {
    let c = size as f64 / 2.0;
    let mut labels = vec![0u8; size * size];
    for y in 0..size {
        for x in 0..size {
            let d = ((x as f64 + 0.5 - c).powi(2) + (y as f64 + 0.5 - c).powi(2)).sqrt();
            labels[y * size + x] = if d <= r_tuft {
                2
            } else if d <= r_bow {
                1
            } else {
                0
            };
        }
    }
    labels
}

fn mask_cohort(dir: &Path) {
    for (i, case) in ["A", "B", "C"].iter().enumerate() {
        std::fs::create_dir_all(dir.join(case)).unwrap();
        for g in 0..3 {
            let r = 12.0 + (i * 3 + g) as f64;
            let bytes = encode_pgm(40, 40, &glomerulus(40, r, r * 0.6));
            std::fs::write(dir.join(case).join(format!("g{g}.pgm")), bytes).unwrap();
        }
    }
}

fn features(n: usize) -> Vec<CaseFeatureVector> {
    (0..n)
        .map(|i| {
            let mut values = [0.0; 14];
            for (j, v) in values.iter_mut().enumerate() {
                *v = 10.0 + ((i * 7 + j * 3) % 11) as f64 + 0.1 * i as f64;
            }
            CaseFeatureVector {
                case_id: format!("c{i:02}"),
                values,
                n_glomeruli: 4,
            }
        })
        .collect()
}

fn clinical(dir: &Path, n: usize) -> std::path::PathBuf {
    let mut text = String::from("case_id,Gender,Age,Lesion\n");
    for i in 0..n {
        let gender = if i % 2 == 0 { "M" } else { "F" };
        text += &format!("c{i:02},{gender},{},{}\n", 30 + i, i % 3);
    }
    let path = dir.join("clinical.csv");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn every_subcommand_has_help() {
    for cmd in ["morph", "associate", "regress", "fewshot", "eval", "distill-sim", "attn-align"] {
        let o = glomics(&[cmd, "--help"]);
        assert_eq!(code(&o), 0, "{cmd}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("--out"), "{cmd}");
    }
    assert_eq!(code(&glomics(&["--help"])), 0);
    assert_eq!(code(&glomics(&["no-such-command"])), 1);
}

#[test]
fn morph_writes_tables_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let masks = tmp.path().join("masks");
    mask_cohort(&masks);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = glomics(&["morph", "--masks", p(&masks), "--out", p(out), "--resolution", "0.5"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["glomeruli.csv", "case_features.csv", "morph_report.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let cases = std::fs::read_to_string(a.join("case_features.csv")).unwrap();
    assert_eq!(cases.lines().filter(|l| !l.starts_with('#')).count(), 4);
    let glom = std::fs::read_to_string(a.join("glomeruli.csv")).unwrap();
    assert_eq!(glom.lines().filter(|l| !l.starts_with('#')).count(), 10);
}

#[test]
fn exit_codes_separate_validation_from_io() {
    let tmp = TempDir::new().unwrap();
    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = tmp.path().join("out");
    assert_eq!(code(&glomics(&["morph", "--masks", p(&empty), "--out", p(&out)])), 1);
    let missing = tmp.path().join("missing");
    assert_eq!(code(&glomics(&["morph", "--masks", p(&missing), "--out", p(&out)])), 2);
    assert_eq!(code(&glomics(&["morph", "--out", p(&out)])), 1);
    let o = glomics(&["associate", "--features", p(&missing), "--clinical", p(&missing), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn relative_inputs_resolve_against_data_root() {
    let tmp = TempDir::new().unwrap();
    mask_cohort(&tmp.path().join("masks"));
    let out = tmp.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_glomics"))
        .args(["morph", "--masks", "masks", "--out", p(&out)])
        .env("GLOMICS_DATA_ROOT", tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("case_features.csv").exists());
}

#[test]
fn associate_reports_every_feature_variable_pair() {
    let tmp = TempDir::new().unwrap();
    let feats = tmp.path().join("features.csv");
    // c20 and c21 have features only
    write_case_features(&feats, &features(22), Unit::for_resolution(None)).unwrap();
    let clin = clinical(tmp.path(), 20);
    let out = tmp.path().join("out");
    let o = glomics(&["associate", "--features", p(&feats), "--clinical", p(&clin), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(out.join("association.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 14 * 3);
    let ex: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("exclusions.json")).unwrap()).unwrap();
    assert_eq!(ex["features_only"], serde_json::json!(["c20", "c21"]));
    assert_eq!(ex["used"], 20);

    let o = glomics(&[
        "associate", "--features", p(&feats), "--clinical", p(&clin), "--out", p(&out),
        "--variables", "Gender", "--format", "json",
    ]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("association.json")).unwrap()).unwrap();
    assert_eq!(v["results"].as_array().unwrap().len(), 14);
}

#[test]
fn regress_names_collinear_terms() {
    let tmp = TempDir::new().unwrap();
    let feats = tmp.path().join("features.csv");
    let mut f = features(20);
    for v in &mut f {
        v.values[3] = 2.0 * v.values[2];
    }
    write_case_features(&feats, &f, Unit::for_resolution(None)).unwrap();
    let clin = clinical(tmp.path(), 20);
    let out = tmp.path().join("out");
    let o = glomics(&[
        "regress", "--features", p(&feats), "--clinical", p(&clin), "--out", p(&out),
        "--outcome", FEATURE_NAMES[0], "--covariates", "Age", "--covariates", "Gender",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("regression.csv")).unwrap();
    let header = text.lines().next().unwrap();
    for col in ["R2", "coef (Age)", "p (Age)", "coef (Gender)", "p (Gender)"] {
        assert!(header.contains(col), "{header}");
    }
    let o = glomics(&[
        "regress", "--features", p(&feats), "--clinical", p(&clin), "--out", p(&out),
        "--outcome", FEATURE_NAMES[0], "--covariates", FEATURE_NAMES[2], "--covariates", FEATURE_NAMES[3],
    ]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("rank deficient"), "{err}");
    // pivoting may drop either member of the pair
    assert!(err.contains(FEATURE_NAMES[2]) || err.contains(FEATURE_NAMES[3]), "{err}");
    let o = glomics(&["regress", "--features", p(&feats), "--clinical", p(&clin), "--out", p(&out)]);
    assert_eq!(code(&o), 1, "covariates are required");
}

fn blob_csv(dir: &Path) -> std::path::PathBuf {
    let data = glomics::fewshot::gaussian_blobs(30, 4, 3.0, 1);
    let mut text = String::from("id,label,f0,f1,f2,f3\n");
    for (i, row) in data.vectors().rows().into_iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text += &format!("{},{},{}\n", data.ids()[i], data.classes()[data.labels()[i]], cells.join(","));
    }
    let path = dir.join("emb.csv");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn fewshot_is_reproducible_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let emb = blob_csv(tmp.path());
    let run = |out: &Path, threads: &str| {
        let o = glomics(&[
            "fewshot", "--embeddings", p(&emb), "--out", p(out), "--ks", "1", "--ks", "5",
            "--repeats", "3", "--seed", "9", "--threads", threads,
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out.join("fewshot.csv")).unwrap()
    };
    let a = run(&tmp.path().join("a"), "1");
    let b = run(&tmp.path().join("b"), "4");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("method,k=1,k=5"), "{text}");
    assert_eq!(text.lines().count(), 5);

    let out = tmp.path().join("c");
    let o = glomics(&["fewshot", "--embeddings", p(&emb), "--out", p(&out), "--ks", "0"]);
    assert_eq!(code(&o), 1);
    let o = glomics(&["fewshot", "--embeddings", p(&emb), "--out", p(&out), "--classifiers", "svm"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn eval_scores_worked_example() {
    let tmp = TempDir::new().unwrap();
    let scores = tmp.path().join("scores.csv");
    std::fs::write(&scores, "score,label\n0.1,0\n0.4,0\n0.35,1\n0.8,1\n").unwrap();
    let out = tmp.path().join("out");
    let o = glomics(&["eval", "--scores", p(&scores), "--out", p(&out), "--format", "json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("eval.json")).unwrap()).unwrap();
    assert_eq!(v["roc_auc"], 0.75);
    assert_eq!((v["tp"].as_u64(), v["fp"].as_u64()), (Some(1), Some(0)));
}

#[test]
fn eval_mask_pairs() {
    let tmp = TempDir::new().unwrap();
    let (pred, truth) = (tmp.path().join("pred"), tmp.path().join("truth"));
    mask_cohort(&pred);
    mask_cohort(&truth);
    let out = tmp.path().join("out");
    let o = glomics(&["eval", "--pred", p(&pred), "--truth", p(&truth), "--out", p(&out), "--format", "json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("eval.json")).unwrap()).unwrap();
    assert_eq!(v["pairs"].as_array().unwrap().len(), 9);
    assert_eq!(v["mean_iou_foreground"], 1.0);
}

#[test]
fn config_values_yield_to_flags() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"steps": 5, "n-per-class": 4, "seed": 3}"#).unwrap();
    let out = tmp.path().join("out");
    let o = glomics(&["distill-sim", "--config", p(&cfg), "--steps", "3", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let log = std::fs::read_to_string(out.join("training_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 3);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 3);

    std::fs::write(&cfg, r#"{"stepz": 5}"#).unwrap();
    assert_eq!(code(&glomics(&["distill-sim", "--config", p(&cfg), "--out", p(&out)])), 1);
}

#[test]
fn distill_sim_reruns_are_identical() {
    let tmp = TempDir::new().unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = glomics(&["distill-sim", "--steps", "4", "--n-per-class", "4", "--seed", "5", "--out", p(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (std::fs::read(out.join("training_log.csv")).unwrap(), std::fs::read(out.join("summary.json")).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn attn_align_json_and_grid_inputs() {
    let tmp = TempDir::new().unwrap();
    let values: Vec<f64> = (0..16).map(|i| if i % 4 < 2 && i / 4 < 2 { 0.9 } else { 0.1 + 0.01 * i as f64 }).collect();
    let map = serde_json::json!({
        "width": 4, "height": 4, "values": values,
        "boxes": [{"x0": 0, "y0": 0, "x1": 2, "y1": 2}]
    });
    let json = tmp.path().join("attn.json");
    std::fs::write(&json, map.to_string()).unwrap();
    let out = tmp.path().join("out");
    let o = glomics(&["attn-align", "--attention", p(&json), "--out", p(&out), "--format", "json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("alignment.json")).unwrap()).unwrap();
    assert_eq!(v["result"]["d"], 1.0);
    assert_eq!(v["result"]["n_in"], 4);

    let grid = tmp.path().join("attn.csv");
    let rows: Vec<String> = values.chunks(4).map(|r| r.iter().map(f64::to_string).collect::<Vec<_>>().join(",")).collect();
    std::fs::write(&grid, rows.join("\n")).unwrap();
    let boxes = tmp.path().join("boxes.json");
    std::fs::write(&boxes, r#"[{"x0": 0, "y0": 0, "x1": 2, "y1": 2}]"#).unwrap();
    let o = glomics(&["attn-align", "--attention", p(&grid), "--boxes", p(&boxes), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(out.join("alignment.csv")).unwrap().starts_with("level,n_maps"));
    assert_eq!(code(&glomics(&["attn-align", "--attention", p(&grid), "--out", p(&out)])), 1);
}
