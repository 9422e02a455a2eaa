use glomics::morphometry::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Rasterizes an ellipse by pixel-centre sampling.
fn ellipse_mask(a: f64, b: f64, theta: f64, label: u8) -> EntityMask {
    let size = (2.0 * a.max(b)).ceil() as usize + 8;
    let c = size as f64 / 2.0 + 0.3;
    let (st, ct) = theta.sin_cos();
    EntityMask::from_fn(size, size, |x, y| {
        let dx = x as f64 + 0.5 - c;
        let dy = y as f64 + 0.5 - c;
        let u = dx * ct + dy * st;
        let v = -dx * st + dy * ct;
        if (u / a).powi(2) + (v / b).powi(2) <= 1.0 {
            label
        } else {
            0
        }
    })
    .unwrap()
}

fn component_of(mask: &EntityMask, label: u8) -> PixelComponent {
    extract_component(mask, label).unwrap()
}

fn blob(cells: &[bool], w: usize) -> Option<PixelComponent> {
    let px: Vec<_> = cells
        .iter()
        .enumerate()
        .filter(|(_, &c)| c)
        .map(|(i, _)| (i % w, i / w))
        .collect();
    let mask = EntityMask::from_fn(w, cells.len() / w, |x, y| u8::from(cells[y * w + x])).ok()?;
    if px.is_empty() {
        return None;
    }
    extract_component(&mask, 1).ok()
}

#[test]
fn rasterized_disk_matches_analytic_values() {
    let r = 64.0;
    let s = shape_params(&component_of(&ellipse_mask(r, r, 0.0, 1), 1), 1.0);
    let pi_r2 = std::f64::consts::PI * r * r;
    assert!((s.area - pi_r2).abs() / pi_r2 < 0.01, "area {}", s.area);
    assert!((0.95..=1.02).contains(&s.circularity), "cir {}", s.circularity);
    assert!(s.eccentricity <= 0.10, "ecc {}", s.eccentricity);
}

#[test]
fn rasterized_ellipse_eccentricity() {
    for theta in [0.0, 0.3, 1.1] {
        let s = shape_params(&component_of(&ellipse_mask(80.0, 40.0, theta, 1), 1), 1.0);
        assert!((s.eccentricity - 0.75f64.sqrt()).abs() < 0.02, "ecc {}", s.eccentricity);
        assert!((s.major - 80.0).abs() < 1.0 && (s.minor - 40.0).abs() < 1.0);
    }
}

#[test]
fn disk_circularity_approaches_one() {
    for r in [20.0, 32.0, 64.0, 128.0] {
        let s = shape_params(&component_of(&ellipse_mask(r, r, 0.0, 1), 1), 1.0);
        assert!(s.circularity <= 1.05);
        assert!((s.circularity - 1.0).abs() <= 0.01, "r={r} cir={}", s.circularity);
    }
}

#[test]
fn concentric_disks_ratio() {
    let size = 220;
    let c = 110.3;
    let mask = EntityMask::from_fn(size, size, |x, y| {
        let d = ((x as f64 + 0.5 - c).powi(2) + (y as f64 + 0.5 - c).powi(2)).sqrt();
        if d <= 70.0 {
            2
        } else if d <= 100.0 {
            1
        } else {
            0
        }
    })
    .unwrap();
    let rec = glomerulus_morphometry("g", &mask);
    let r = rec.ratio().unwrap();
    assert!((r - 0.49).abs() < 0.005, "ratio {r}");
    // pixel-count oracle
    let bow_px = mask.labels().iter().filter(|&&l| l != 0).count() as f64;
    let tuft_px = mask.count(TUFT) as f64;
    assert_eq!(r, tuft_px / bow_px);
}

#[test]
fn doubling_resolution_scales_area_and_perimeter() {
    let small = shape_params(&component_of(&ellipse_mask(30.0, 18.0, 0.4, 1), 1), 1.0);
    let big = shape_params(&component_of(&ellipse_mask(60.0, 36.0, 0.4, 1), 1), 1.0);
    assert!((big.area / small.area - 4.0).abs() <= 0.08);
    assert!((big.perimeter / small.perimeter - 2.0).abs() <= 0.04);
    assert!((big.circularity - small.circularity).abs() <= 0.02);
    assert!((big.eccentricity - small.eccentricity).abs() <= 0.02);
}

#[test]
fn random_nested_shapes_ratio_is_pixel_quotient() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let a = rng.gen_range(15.0..40.0);
        let b = rng.gen_range(10.0..a);
        let theta = rng.gen_range(0.0..3.0);
        let shrink = rng.gen_range(0.4..0.9);
        let outer = ellipse_mask(a, b, theta, 1);
        let inner = ellipse_mask(a * shrink, b * shrink, theta, 2);
        let off = (outer.width() - inner.width()) / 2;
        let mask = EntityMask::from_fn(outer.width(), outer.height(), |x, y| {
            let (ix, iy) = (x.wrapping_sub(off), y.wrapping_sub(off));
            if ix < inner.width() && iy < inner.height() && inner.get(ix, iy) == 2 {
                2
            } else {
                outer.get(x, y)
            }
        })
        .unwrap();
        let rec = glomerulus_morphometry("g", &mask);
        let bow_px = mask.labels().iter().filter(|&&l| l != 0).count() as f64;
        assert_eq!(rec.ratio().unwrap(), mask.count(TUFT) as f64 / bow_px);
        assert!(rec.ratio().unwrap() <= 1.0);
    }
}

fn rotate90(c: &PixelComponent) -> PixelComponent {
    let (_, h) = c.bbox_size();
    let px: Vec<_> = c.local_pixels().map(|(x, y)| (h - 1 - y, x)).collect();
    PixelComponent::from_pixels(&px).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn shoelace_equals_pixel_count(cells in prop::collection::vec(any::<bool>(), 64..=144), w in 8usize..12) {
        let n = cells.len() / w * w;
        if let Some(c) = blob(&cells[..n], w) {
            let filled = c.fill_holes();
            let poly = trace_contour(&filled);
            prop_assert_eq!(poly.signed_area2(), 2 * filled.pixel_count() as i64);
        }
    }

    #[test]
    fn translation_is_exact(cells in prop::collection::vec(any::<bool>(), 100), dx in 0usize..50, dy in 0usize..50) {
        if let Some(c) = blob(&cells, 10) {
            let moved: Vec<_> = c.pixels().map(|(x, y)| (x + dx, y + dy)).collect();
            let m = PixelComponent::from_pixels(&moved).unwrap();
            prop_assert_eq!(shape_params(&c, 1.0), shape_params(&m, 1.0));
        }
    }

    #[test]
    fn rotation_by_quarter_turn(cells in prop::collection::vec(any::<bool>(), 120), w in prop::sample::select(vec![10usize, 12])) {
        if let Some(c) = blob(&cells, w) {
            let a = shape_params(&c, 1.0);
            let b = shape_params(&rotate90(&c), 1.0);
            prop_assert_eq!(a.area, b.area);
            prop_assert_eq!(a.perimeter, b.perimeter);
            prop_assert!((a.major - b.major).abs() <= 1e-9);
            prop_assert!((a.minor - b.minor).abs() <= 1e-9);
            prop_assert!((a.eccentricity - b.eccentricity).abs() <= 1e-9);
        }
    }

    #[test]
    fn shape_invariants(a in 6.0f64..30.0, ratio in 0.3f64..1.0, theta in 0.0f64..3.2) {
        let s = shape_params(&component_of(&ellipse_mask(a, a * ratio, theta, 1), 1), 1.0);
        prop_assert!(s.area > 0.0 && s.perimeter > 0.0);
        prop_assert!(s.major >= s.minor && s.minor > 0.0);
        prop_assert!((0.0..1.0).contains(&s.eccentricity));
        prop_assert!(s.circularity > 0.0);
    }

    #[test]
    fn aggregate_is_permutation_invariant(
        areas in prop::collection::vec((10.0f64..1000.0, 0.1f64..0.9), 1..30),
        seed in any::<u64>(),
    ) {
        let records: Vec<_> = areas.iter().enumerate().map(|(i, &(bow, r))| {
            let mk = |area: f64| ShapeParams {
                area, perimeter: area.sqrt() * 4.0, major: 2.0, minor: 1.0,
                circularity: 0.8, eccentricity: 0.3 + r / 10.0, degenerate: false,
            };
            MorphometryRecord { glomerulus_id: format!("g{i:03}"), bow: Some(mk(bow)), tuft: Some(mk(bow * r)) }
        }).collect();
        let mut shuffled = records.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut rng);
        let a = aggregate_case("c", &records).unwrap();
        let b = aggregate_case("c", &shuffled).unwrap();
        prop_assert_eq!(&a, &b);
        for p in Parameter::ALL {
            let vals: Vec<f64> = records.iter().map(|r| r.parameter(p).unwrap()).collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= a.median(p) && a.median(p) <= hi);
            prop_assert!(lo - 1e-9 <= a.mean(p) && a.mean(p) <= hi + 1e-9);
        }
    }
}

#[test]
fn odd_count_median_is_sorted_middle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let records: Vec<_> = (0..101)
        .map(|i| {
            let area: f64 = rng.gen_range(100.0..5000.0);
            let p = ShapeParams {
                area,
                perimeter: 1.0,
                major: 1.0,
                minor: 1.0,
                circularity: 1.0,
                eccentricity: 0.0,
                degenerate: false,
            };
            MorphometryRecord {
                glomerulus_id: format!("g{i}"),
                bow: Some(p),
                tuft: Some(ShapeParams { area: area / 2.0, ..p }),
            }
        })
        .collect();
    let f = aggregate_case("c", &records).unwrap();
    let mut areas: Vec<f64> = records.iter().map(|r| r.bow.unwrap().area).collect();
    areas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(f.median(Parameter::AreaBow), areas[50]);
    // independent Kahan-summed mean
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for r in &records {
        let y = r.bow.unwrap().area - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    assert!((f.mean(Parameter::AreaBow) - sum / 101.0).abs() < 1e-9);
}
