use std::collections::BTreeMap;

use glomics::cohort::*;
use glomics::morphometry::{CaseFeatureVector, EntityMask};
use glomics::stats::associate;
use proptest::prelude::*;

fn case(i: usize) -> CaseFeatureVector {
    let mut values = [0.0; 14];
    for (j, v) in values.iter_mut().enumerate() {
        *v = ((i * 31 + j * 17) % 23) as f64 + 0.25 * j as f64;
    }
    CaseFeatureVector {
        case_id: format!("k{i:03}"),
        values,
        n_glomeruli: 3 + i % 4,
    }
}

fn record(i: usize) -> ClinicalRecord {
    let mut values = BTreeMap::new();
    values.insert("Gender".into(), ClinicalValue::Categorical(if i % 2 == 0 { "M" } else { "F" }.into()));
    values.insert("Age".into(), ClinicalValue::Numeric(25.0 + (i * 7 % 40) as f64));
    values.insert("Lesion".into(), ClinicalValue::Categorical(format!("{}", i % 3)));
    ClinicalRecord {
        case_id: format!("k{i:03}"),
        values,
    }
}

proptest! {
    #[test]
    fn association_ignores_input_order(perm in Just((0..24).collect::<Vec<usize>>()).prop_shuffle()) {
        let spec = BinningSpec::xj_light();
        let feats: Vec<_> = (0..24).map(case).collect();
        let clin: Vec<_> = (2..26).map(record).collect();
        let vars = ["Gender", "Age", "Lesion"];
        let base = associate(&feats, &clin, &spec, &vars).unwrap();
        let f2: Vec<_> = perm.iter().map(|&i| feats[i].clone()).collect();
        let c2: Vec<_> = perm.iter().rev().map(|&i| clin[i].clone()).collect();
        let other = associate(&f2, &c2, &spec, &vars).unwrap();
        prop_assert_eq!(&base, &other);
        prop_assert_eq!(base.exclusions.used + base.exclusions.excluded(), base.exclusions.total);
    }

    #[test]
    fn case_features_round_trip(n in 1usize..12) {
        let cases: Vec<_> = (0..n).map(case).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cases.csv");
        write_case_features(&path, &cases, Unit::for_resolution(Some(0.5))).unwrap();
        let (back, unit) = read_case_features(&path).unwrap();
        prop_assert_eq!(back, cases);
        prop_assert_eq!(unit, Unit::for_resolution(Some(0.5)));
    }

    #[test]
    fn pgm_round_trip(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
        let labels: Vec<u8> = (0..w * h).map(|i| ((seed >> (i % 60)) % 3) as u8).collect();
        let (pw, ph, back) = parse_pgm(&encode_pgm(w, h, &labels)).unwrap();
        prop_assert_eq!((pw, ph), (w, h));
        prop_assert_eq!(back, labels);
    }
}

#[test]
fn threshold_boundaries_follow_the_spec() {
    let xj = BinningSpec::xj_light();
    let bin = |spec: &BinningSpec, var: &str, v: f64| {
        bin_variable(&ClinicalValue::Numeric(v), var, spec).unwrap().unwrap()
    };
    assert_eq!(bin(&xj, "Age", 43.0), "≤43");
    assert_eq!(bin(&xj, "Age", 43.5), ">43");
    let kpmp = BinningSpec::kpmp();
    assert_eq!(bin(&kpmp, "eGFR", 100.0), ">100");
    assert_eq!(bin(&kpmp, "eGFR", 99.9), "50-100");
    assert_eq!(bin(&kpmp, "Age", 30.0), "30-39");
    let alias = bin_variable(&ClinicalValue::Categorical("1-Moderatre".into()), "Lesion", &xj);
    assert_eq!(alias.unwrap().as_deref(), Some("1-Moderate"));
    assert_eq!(bin_variable(&ClinicalValue::Missing, "Lesion", &xj).unwrap(), None);
}

#[test]
fn clinical_table_parses_missing_and_rejects_duplicates() {
    let spec = BinningSpec::xj_light();
    let t = read_clinical("case_id,Age,Gender,Extra\nb,NA,M,x\na,50,F,3\n".as_bytes(), &spec).unwrap();
    assert_eq!(t.records[0].case_id, "a");
    assert!(t.records[1].get("Age").is_missing());
    assert_eq!(t.unknown_columns, vec!["Extra".to_string()]);
    assert!(matches!(
        read_clinical("case_id,Age\na,1\na,2\n".as_bytes(), &spec),
        Err(CohortError::DuplicateId(_))
    ));
    assert!(matches!(
        read_clinical("case_id,Age\na,old\n".as_bytes(), &spec),
        Err(CohortError::UnparsableNumeric { .. })
    ));
}

#[test]
fn mask_cohort_collects_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let case = dir.path().join("c1");
    std::fs::create_dir(&case).unwrap();
    let mask = EntityMask::from_fn(6, 6, |x, y| u8::from((1..5).contains(&x) && (1..5).contains(&y))).unwrap();
    write_pgm(&case.join("g1.pgm"), &mask).unwrap();
    std::fs::write(case.join("g2.pgm"), b"not a pgm").unwrap();
    let c = load_mask_cohort(dir.path(), 1.0).unwrap();
    assert_eq!(c.n_masks(), 1);
    assert_eq!(c.rejected.len(), 1);
    assert!(load_mask_cohort(&dir.path().join("nope"), 1.0).is_err());
}
