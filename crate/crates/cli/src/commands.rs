use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use glomics::cohort::{
    csv_bytes, fmt4, fmt_full, load_clinical, load_mask_cohort, read_case_features,
    read_embeddings, to_json_bytes, write_association_report, write_bytes, write_case_features,
    write_glomerulus_table, write_regression_report, BinningSpec, ReportFormat, Unit,
};
use glomics::distill::{self, DistillConfig, DistillState};
use glomics::fewshot::{run_protocol, splitmix64, Classifier, DEFAULT_KS};
use glomics::metrics::{f1_score, iou, pr_auc, roc_auc, ConfusionCounts};
use glomics::morphometry::{
    aggregate_case, morphometry_batch, CaseFeatureVector, MorphError, MorphometryRecord,
    FEATURE_NAMES,
};
use glomics::stats::{
    associate as run_association, attention_alignment_pixels, attention_alignment_pooled,
    regress_cohort, AttentionMap, BoxRegion, Stars,
};

use crate::{
    AssociateArgs, AttnArgs, Common, DistillArgs, EvalArgs, Failure, FewshotArgs, MorphArgs,
    RegressArgs, DATA_ROOT_ENV,
};

fn resolve_input(p: &Path) -> PathBuf {
    match std::env::var_os(DATA_ROOT_ENV) {
        Some(root) if p.is_relative() && !root.is_empty() => PathBuf::from(root).join(p),
        _ => p.to_path_buf(),
    }
}

/// Resolves an input path and checks that it exists.
fn input(p: &Option<PathBuf>, flag: &str) -> Result<PathBuf, Failure> {
    let p = p
        .as_ref()
        .ok_or_else(|| Failure::usage(format!("missing required --{flag}")))?;
    let resolved = resolve_input(p);
    if !resolved.exists() {
        return Err(Failure::io(
            &resolved,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        ));
    }
    Ok(resolved)
}

fn out_dir(common: &Common) -> Result<PathBuf, Failure> {
    common
        .out
        .clone()
        .ok_or_else(|| Failure::usage("missing required --out"))
}

fn format(common: &Common) -> Result<ReportFormat, Failure> {
    common
        .format
        .as_deref()
        .unwrap_or("csv")
        .parse()
        .map_err(Failure::usage)
}

fn load_spec(spec: &Option<String>) -> Result<BinningSpec, Failure> {
    let name = spec.as_deref().unwrap_or("xj-light");
    if let Some(s) = BinningSpec::builtin(name) {
        return Ok(s);
    }
    let path = input(&Some(PathBuf::from(name)), "spec")?;
    Ok(BinningSpec::load(&path)?)
}

struct MorphRun {
    unit: Unit,
    glomeruli: Vec<(String, Vec<MorphometryRecord>)>,
    cases: Vec<CaseFeatureVector>,
    /// Case ids without a single usable glomerulus.
    skipped: Vec<String>,
    rejected: Vec<(String, String)>,
}

fn morph_cohort(root: &Path, resolution: Option<f64>) -> Result<MorphRun, Failure> {
    if let Some(r) = resolution {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Failure::usage("--resolution must be positive"));
        }
    }
    let cohort = load_mask_cohort(root, resolution.unwrap_or(1.0))?;
    let rejected = cohort
        .rejected
        .iter()
        .map(|(p, why)| {
            let rel = p.strip_prefix(root).unwrap_or(p);
            (rel.display().to_string(), why.clone())
        })
        .collect();
    let mut glomeruli = Vec::new();
    let mut cases = Vec::new();
    let mut skipped = Vec::new();
    for (case, masks) in &cohort.cases {
        let records = morphometry_batch(masks);
        match aggregate_case(case.clone(), &records) {
            Ok(v) => cases.push(v),
            Err(MorphError::EmptyCase) => skipped.push(case.clone()),
            Err(e) => return Err(e.into()),
        }
        glomeruli.push((case.clone(), records));
    }
    Ok(MorphRun {
        unit: Unit::for_resolution(resolution),
        glomeruli,
        cases,
        skipped,
        rejected,
    })
}

fn load_features(
    features: &Option<PathBuf>,
    masks: &Option<PathBuf>,
    resolution: Option<f64>,
) -> Result<Vec<CaseFeatureVector>, Failure> {
    match (features, masks) {
        (Some(_), Some(_)) => Err(Failure::usage("give either --features or --masks, not both")),
        (Some(_), None) => Ok(read_case_features(&input(features, "features")?)?.0),
        (None, Some(_)) => {
            let run = morph_cohort(&input(masks, "masks")?, resolution)?;
            if run.cases.is_empty() {
                return Err(Failure::usage("no case has a usable glomerulus"));
            }
            Ok(run.cases)
        }
        (None, None) => Err(Failure::usage("missing required --features (or --masks)")),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    Ok(write_bytes(path, &to_json_bytes(value)?)?)
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), Failure> {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    Ok(write_bytes(path, &csv_bytes(&header, rows)?)?)
}

#[derive(Serialize)]
struct MorphReport {
    unit: Unit,
    n_cases: usize,
    n_masks: usize,
    cases_without_usable_glomeruli: Vec<String>,
    rejected: Vec<RejectedFile>,
}

#[derive(Serialize)]
struct RejectedFile {
    path: String,
    reason: String,
}

pub fn morph(a: &MorphArgs) -> Result<(), Failure> {
    let masks = input(&a.masks, "masks")?;
    let out = out_dir(&a.common)?;
    let run = morph_cohort(&masks, a.resolution)?;
    for (path, why) in &run.rejected {
        eprintln!("warning: skipped {path}: {why}");
    }
    let n_masks = run.glomeruli.iter().map(|(_, r)| r.len()).sum();
    write_glomerulus_table(&out.join("glomeruli.csv"), &run.glomeruli, run.unit)?;
    if run.cases.is_empty() {
        return Err(Failure::usage("no case has a usable glomerulus"));
    }
    write_case_features(&out.join("case_features.csv"), &run.cases, run.unit)?;
    write_json(
        &out.join("morph_report.json"),
        &MorphReport {
            unit: run.unit,
            n_cases: run.glomeruli.len(),
            n_masks,
            cases_without_usable_glomeruli: run.skipped.clone(),
            rejected: run
                .rejected
                .iter()
                .map(|(p, r)| RejectedFile {
                    path: p.clone(),
                    reason: r.clone(),
                })
                .collect(),
        },
    )?;
    println!(
        "{} cases, {} masks, {} feature rows, {} rejected files -> {}",
        run.glomeruli.len(),
        n_masks,
        run.cases.len(),
        run.rejected.len(),
        out.display()
    );
    Ok(())
}

pub fn associate(a: &AssociateArgs) -> Result<(), Failure> {
    let clinical_path = input(&a.clinical, "clinical")?;
    let spec = load_spec(&a.spec)?;
    let fmt = format(&a.common)?;
    let out = out_dir(&a.common)?;
    let features = load_features(&a.features, &a.masks, a.resolution)?;
    let table = load_clinical(&clinical_path, &spec)?;
    for col in &table.unknown_columns {
        eprintln!("warning: column {col:?} is not in the binning spec and is ignored");
    }
    let variables: Vec<String> = match &a.variables {
        Some(v) => v.clone(),
        None => spec
            .variables
            .iter()
            .filter(|v| table.records.iter().any(|r| r.values.contains_key(&v.name)))
            .map(|v| v.name.clone())
            .collect(),
    };
    if variables.is_empty() {
        return Err(Failure::usage("no spec variable appears in the clinical table"));
    }
    let names: Vec<&str> = variables.iter().map(String::as_str).collect();
    let report = run_association(&features, &table.records, &spec, &names)?;
    write_association_report(&report, fmt, &out.join(format!("association.{}", fmt.extension())))?;
    write_json(&out.join("exclusions.json"), &report.exclusions)?;
    let count = |s: Stars| report.results.iter().filter(|r| r.stars == s).count();
    println!(
        "{} tests ({} cases used, {} excluded): {} ***, {} **, {} * -> {}",
        report.results.len(),
        report.exclusions.used,
        report.exclusions.excluded(),
        count(Stars::Three),
        count(Stars::Two),
        count(Stars::One),
        out.display()
    );
    Ok(())
}

pub fn regress(a: &RegressArgs) -> Result<(), Failure> {
    let clinical_path = input(&a.clinical, "clinical")?;
    let spec = load_spec(&a.spec)?;
    let fmt = format(&a.common)?;
    let out = out_dir(&a.common)?;
    let covariates = a
        .covariates
        .clone()
        .ok_or_else(|| Failure::usage("missing required --covariates"))?;
    let features = load_features(&a.features, &a.masks, a.resolution)?;
    let table = load_clinical(&clinical_path, &spec)?;
    let outcomes: Vec<String> = a
        .outcome
        .clone()
        .unwrap_or_else(|| FEATURE_NAMES.iter().map(|s| s.to_string()).collect());
    let cov: Vec<&str> = covariates.iter().map(String::as_str).collect();
    let mut rows = Vec::with_capacity(outcomes.len());
    for outcome in &outcomes {
        let fit = regress_cohort(&features, &table.records, &spec, outcome, &cov)?;
        if !fit.result.converged {
            eprintln!("warning: {outcome}: logistic fit did not converge");
        }
        rows.push((outcome.clone(), fit.result));
    }
    write_regression_report(&rows, fmt, &out.join(format!("regression.{}", fmt.extension())))?;
    println!("{} models on {} covariates -> {}", rows.len(), cov.len(), out.display());
    Ok(())
}

pub fn fewshot(a: &FewshotArgs) -> Result<(), Failure> {
    let path = input(&a.embeddings, "embeddings")?;
    let fmt = format(&a.common)?;
    let out = out_dir(&a.common)?;
    let classifiers: Vec<Classifier> = match &a.classifiers {
        Some(names) => names
            .iter()
            .map(|n| n.parse().map_err(Failure::usage))
            .collect::<Result<_, _>>()?,
        None => Classifier::ALL.to_vec(),
    };
    let ks = a.ks.clone().unwrap_or_else(|| DEFAULT_KS.to_vec());
    if ks.is_empty() || ks.contains(&0) {
        return Err(Failure::usage("--ks values must be at least 1"));
    }
    let repeats = a.repeats.unwrap_or(10);
    if repeats == 0 {
        return Err(Failure::usage("--repeats must be at least 1"));
    }
    let data = read_embeddings(&path)?;
    let table = run_protocol(&data, &classifiers, &ks, repeats, a.common.seed.unwrap_or(0));
    let file = out.join(format!("fewshot.{}", fmt.extension()));
    match fmt {
        ReportFormat::Json => write_json(&file, &table)?,
        ReportFormat::Csv => {
            let mut header = vec!["method".to_string()];
            header.extend(ks.iter().map(|k| format!("k={k}")));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows: Vec<Vec<String>> = classifiers
                .iter()
                .map(|&c| {
                    let mut row = vec![c.name().to_string()];
                    for &k in &ks {
                        let cell = table.cell(c, k).expect("every cell is run");
                        row.push(match cell.error {
                            Some(_) => "failed".into(),
                            None => format!("{} ({})", fmt4(cell.mean), fmt4(cell.std)),
                        });
                    }
                    row
                })
                .collect();
            write_csv(&file, &header, &rows)?;
        }
    }
    for cell in table.cells.iter().filter(|c| c.error.is_some()) {
        eprintln!(
            "warning: {} k={}: {}",
            cell.classifier.name(),
            cell.k,
            cell.error.as_deref().unwrap_or_default()
        );
    }
    println!(
        "{} classifiers x {} k values x {} repeats on {} embeddings -> {}",
        classifiers.len(),
        ks.len(),
        repeats,
        data.n(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ScoreMetrics {
    n: usize,
    n_positive: usize,
    roc_auc: f64,
    pr_auc: f64,
    threshold: f64,
    f1: Option<f64>,
    precision: f64,
    recall: f64,
    tp: u64,
    fp: u64,
    fn_: u64,
    tn: u64,
}

fn parse_label(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "pos" | "positive" => Some(true),
        "0" | "false" | "neg" | "negative" => Some(false),
        _ => None,
    }
}

fn read_scores(path: &Path) -> Result<(Vec<f64>, Vec<bool>), Failure> {
    let file = std::fs::File::open(path).map_err(|e| Failure::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Failure::from(glomics::cohort::CohortError::MissingHeader(name.into())))
    };
    let (si, li) = (col("score")?, col("label")?);
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |column: &str, value: &str| glomics::cohort::CohortError::UnparsableNumeric {
            row: i + 2,
            column: column.into(),
            value: value.into(),
        };
        let s: f64 = row[si]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| bad("score", &row[si]))?;
        let l = parse_label(&row[li]).ok_or_else(|| bad("label", &row[li]))?;
        scores.push(s);
        labels.push(l);
    }
    Ok((scores, labels))
}

fn eval_scores(path: &Path, threshold: f64, fmt: ReportFormat, out: &Path) -> Result<(), Failure> {
    let (scores, labels) = read_scores(path)?;
    let counts = ConfusionCounts::at_threshold(&scores, &labels, threshold);
    let m = ScoreMetrics {
        n: scores.len(),
        n_positive: labels.iter().filter(|&&l| l).count(),
        roc_auc: roc_auc(&scores, &labels)?,
        pr_auc: pr_auc(&scores, &labels)?,
        threshold,
        f1: f1_score(&counts).ok(),
        precision: counts.precision(),
        recall: counts.recall(),
        tp: counts.tp,
        fp: counts.fp,
        fn_: counts.fn_,
        tn: counts.tn,
    };
    let file = out.join(format!("eval.{}", fmt.extension()));
    match fmt {
        ReportFormat::Json => write_json(&file, &m)?,
        ReportFormat::Csv => {
            let rows = vec![
                vec!["n".into(), m.n.to_string()],
                vec!["n_positive".into(), m.n_positive.to_string()],
                vec!["ROC-AUC".into(), fmt4(m.roc_auc)],
                vec!["PR-AUC".into(), fmt4(m.pr_auc)],
                vec!["threshold".into(), fmt_full(threshold)],
                vec!["F1".into(), m.f1.map(fmt4).unwrap_or_default()],
                vec!["precision".into(), fmt4(m.precision)],
                vec!["recall".into(), fmt4(m.recall)],
                vec!["TP".into(), m.tp.to_string()],
                vec!["FP".into(), m.fp.to_string()],
                vec!["FN".into(), m.fn_.to_string()],
                vec!["TN".into(), m.tn.to_string()],
            ];
            write_csv(&file, &["metric", "value"], &rows)?;
        }
    }
    println!(
        "ROC-AUC {} PR-AUC {} F1 {} over {} scores -> {}",
        fmt4(m.roc_auc),
        fmt4(m.pr_auc),
        m.f1.map(fmt4).unwrap_or_else(|| "undefined".into()),
        m.n,
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct MaskPair {
    case_id: String,
    glomerulus_id: String,
    iou_foreground: f64,
    iou_tuft: Option<f64>,
}

#[derive(Serialize)]
struct MaskEval {
    pairs: Vec<MaskPair>,
    mean_iou_foreground: f64,
    unmatched_truth: Vec<String>,
    unmatched_pred: Vec<String>,
}

fn eval_masks(pred: &Path, truth: &Path, fmt: ReportFormat, out: &Path) -> Result<(), Failure> {
    let p = load_mask_cohort(pred, 1.0)?;
    let t = load_mask_cohort(truth, 1.0)?;
    let key = |c: &str, g: &str| format!("{c}/{g}");
    let flatten = |m: &BTreeMap<String, Vec<(String, glomics::morphometry::EntityMask)>>| {
        m.iter()
            .flat_map(|(c, list)| list.iter().map(move |(g, mask)| (key(c, g), (c.clone(), g.clone(), mask.clone()))))
            .collect::<BTreeMap<_, _>>()
    };
    let (pm, tm) = (flatten(&p.cases), flatten(&t.cases));
    let mut pairs = Vec::new();
    for (k, (case, glom, tmask)) in &tm {
        let Some((_, _, pmask)) = pm.get(k) else { continue };
        if (pmask.width(), pmask.height()) != (tmask.width(), tmask.height()) {
            return Err(Failure::usage(format!("{k}: predicted and true masks differ in size")));
        }
        let fg = |m: &glomics::morphometry::EntityMask, f: fn(u8) -> bool| {
            m.labels().iter().map(|&l| f(l)).collect::<Vec<bool>>()
        };
        let iou_fg = iou(&fg(pmask, |l| l != 0), &fg(tmask, |l| l != 0))?;
        let iou_tuft = iou(&fg(pmask, |l| l == 2), &fg(tmask, |l| l == 2)).ok();
        pairs.push(MaskPair {
            case_id: case.clone(),
            glomerulus_id: glom.clone(),
            iou_foreground: iou_fg,
            iou_tuft,
        });
    }
    if pairs.is_empty() {
        return Err(Failure::usage("no predicted mask matches a true mask"));
    }
    let report = MaskEval {
        mean_iou_foreground: pairs.iter().map(|p| p.iou_foreground).sum::<f64>() / pairs.len() as f64,
        unmatched_truth: tm.keys().filter(|k| !pm.contains_key(*k)).cloned().collect(),
        unmatched_pred: pm.keys().filter(|k| !tm.contains_key(*k)).cloned().collect(),
        pairs,
    };
    let file = out.join(format!("eval.{}", fmt.extension()));
    match fmt {
        ReportFormat::Json => write_json(&file, &report)?,
        ReportFormat::Csv => {
            let rows: Vec<Vec<String>> = report
                .pairs
                .iter()
                .map(|p| {
                    vec![
                        p.case_id.clone(),
                        p.glomerulus_id.clone(),
                        fmt4(p.iou_foreground),
                        p.iou_tuft.map(fmt4).unwrap_or_default(),
                    ]
                })
                .collect();
            write_csv(&file, &["case_id", "glomerulus_id", "IoU", "IoU (tuft)"], &rows)?;
        }
    }
    println!(
        "{} mask pairs, mean IoU {} ({} truth and {} predicted masks unmatched) -> {}",
        report.pairs.len(),
        fmt4(report.mean_iou_foreground),
        report.unmatched_truth.len(),
        report.unmatched_pred.len(),
        out.display()
    );
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<(), Failure> {
    let fmt = format(&a.common)?;
    match (&a.scores, &a.pred, &a.truth) {
        (Some(_), None, None) => {
            let scores = input(&a.scores, "scores")?;
            let threshold = a.threshold.unwrap_or(0.5);
            eval_scores(&scores, threshold, fmt, &out_dir(&a.common)?)
        }
        (None, Some(_), Some(_)) => {
            let pred = input(&a.pred, "pred")?;
            let truth = input(&a.truth, "truth")?;
            eval_masks(&pred, &truth, fmt, &out_dir(&a.common)?)
        }
        _ => Err(Failure::usage("give either --scores, or both --pred and --truth")),
    }
}

/// Size of the synthetic entities, in pixels.
const ENTITY_SIZE: usize = 32;

pub fn distill_sim(a: &DistillArgs) -> Result<(), Failure> {
    let out = out_dir(&a.common)?;
    let d = DistillConfig::default();
    let cfg = DistillConfig {
        tau_student: a.tau_student.unwrap_or(d.tau_student),
        tau_teacher: a.tau_teacher.unwrap_or(d.tau_teacher),
        momentum: a.momentum.unwrap_or(d.momentum),
        center_momentum: a.center_momentum.unwrap_or(d.center_momentum),
        centering: a.centering.unwrap_or(d.centering),
        learning_rate: a.learning_rate.unwrap_or(d.learning_rate),
        grad_clip: match a.grad_clip {
            Some(c) if c == 0.0 => None,
            Some(c) => Some(c),
            None => d.grad_clip,
        },
        batch_size: a.batch_size.unwrap_or(d.batch_size),
        ..d
    };
    cfg.validate()?;
    let steps = a.steps.unwrap_or(500);
    let n_per_class = a.n_per_class.unwrap_or(32);
    if n_per_class == 0 {
        return Err(Failure::usage("--n-per-class must be at least 1"));
    }
    let seed = a.common.seed.unwrap_or(0);
    // independent streams for data, initial weights and the training loop
    let data_seed = splitmix64(seed);
    let init_seed = splitmix64(data_seed);
    let train_seed = splitmix64(init_seed);
    let data = distill::synthetic_entities(n_per_class, ENTITY_SIZE, data_seed);
    let state = DistillState::from_seed(&cfg, init_seed);
    let outcome = distill::train(state, &data, &cfg, steps, train_seed)?;
    let rows: Vec<Vec<String>> = outcome
        .log
        .iter()
        .map(|r| {
            vec![
                r.step.to_string(),
                fmt_full(r.loss),
                fmt_full(r.embedding_std),
                fmt_full(r.teacher_entropy),
            ]
        })
        .collect();
    write_csv(
        &out.join("training_log.csv"),
        &["step", "loss", "embedding_std", "teacher_entropy"],
        &rows,
    )?;
    let summary = distill::summarize(&outcome, &data, &cfg, seed);
    write_json(&out.join("summary.json"), &summary)?;
    println!(
        "{steps} steps, final embedding std {:.4}, teacher entropy {:.4} -> {}",
        summary.embedding_std,
        summary.teacher_entropy,
        out.display()
    );
    Ok(())
}

fn read_grid(path: &Path) -> Result<(usize, usize, Vec<f64>), Failure> {
    let file = std::fs::File::open(path).map_err(|e| Failure::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let (mut width, mut height, mut values) = (0, 0, Vec::new());
    for (y, row) in rdr.records().enumerate() {
        let row = row?;
        if y == 0 {
            width = row.len();
        }
        for (x, cell) in row.iter().enumerate() {
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                glomics::cohort::CohortError::UnparsableNumeric {
                    row: y + 1,
                    column: format!("{}", x + 1),
                    value: cell.into(),
                }
            })?;
            values.push(v);
        }
        height += 1;
    }
    Ok((width, height, values))
}

fn load_maps(attention: &Path, boxes: Option<PathBuf>) -> Result<Vec<AttentionMap>, Failure> {
    let is_json = attention
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        if boxes.is_some() {
            return Err(Failure::usage("--boxes applies to CSV grids; JSON maps carry their boxes"));
        }
        let text = std::fs::read_to_string(attention).map_err(|e| Failure::io(attention, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        return Ok(if value.is_array() {
            serde_json::from_value(value)?
        } else {
            vec![serde_json::from_value(value)?]
        });
    }
    let boxes = boxes.ok_or_else(|| Failure::usage("a CSV attention grid needs --boxes"))?;
    let text = std::fs::read_to_string(&boxes).map_err(|e| Failure::io(&boxes, e))?;
    let boxes: Vec<BoxRegion> = serde_json::from_str(&text)?;
    let (width, height, values) = read_grid(attention)?;
    Ok(vec![AttentionMap {
        width,
        height,
        values,
        boxes,
    }])
}

pub fn attn_align(a: &AttnArgs) -> Result<(), Failure> {
    let attention = input(&a.attention, "attention")?;
    let boxes = match &a.boxes {
        Some(_) => Some(input(&a.boxes, "boxes")?),
        None => None,
    };
    let fmt = format(&a.common)?;
    let out = out_dir(&a.common)?;
    let level = a.level.as_deref().unwrap_or("pixel");
    let maps = load_maps(&attention, boxes)?;
    let r = match level {
        "pixel" => attention_alignment_pixels(&maps)?,
        "map" => attention_alignment_pooled(&maps)?,
        other => return Err(Failure::usage(format!("unknown --level {other:?} (expected pixel or map)"))),
    };
    let file = out.join(format!("alignment.{}", fmt.extension()));
    match fmt {
        ReportFormat::Json => write_json(
            &file,
            &serde_json::json!({ "level": level, "n_maps": maps.len(), "result": r }),
        )?,
        ReportFormat::Csv => write_csv(
            &file,
            &["level", "n_maps", "mean_in", "sd_in", "n_in", "mean_out", "sd_out", "n_out", "D", "p"],
            &[vec![
                level.to_string(),
                maps.len().to_string(),
                fmt4(r.mean_in),
                fmt4(r.sd_in),
                r.n_in.to_string(),
                fmt4(r.mean_out),
                fmt4(r.sd_out),
                r.n_out.to_string(),
                fmt4(r.d),
                format!("{:.3e}", r.p_value),
            ]],
        )?,
    }
    println!(
        "in {:.4} +/- {:.4} vs out {:.4} +/- {:.4}: D = {:.4}, p = {:.3e} -> {}",
        r.mean_in,
        r.sd_in,
        r.mean_out,
        r.sd_out,
        r.d,
        r.p_value,
        out.display()
    );
    Ok(())
}
