//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its runtime. Run with `cargo test --test acceptance -- --nocapture` to see
//! the lines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ricekern::config::PipelineConfig;
use ricekern::detect::{classify_chalk, ChalkMeasurement, DetectionSet};
use ricekern::eval::evaluate;
use ricekern::fusion::{fuse, rect_contour, FusionConfig};
use ricekern::imaging::{extract_contours, to_inverted_gray, ChannelImage, ChannelTag, RgbImage};
use ricekern::model::{
    AnalysisReport, BoundingBox, Branch, Contour, DensityTable, Detection, KernelInstance,
    KernelProperty, PropertySet, RawLabel,
};
use ricekern::pipeline::analyze;
use ricekern::synth::{generate_scene, ground_truth_report, GroundTruth, SceneSpec};
use ricekern::weigh::{
    estimate_group_weight, reference_density_table, report_from_items, weight_ratios, ReportItem,
    REFERENCE_CALIBRATION,
};
use std::collections::HashMap;
use std::sync::OnceLock;
use std::time::Instant;

use KernelProperty::*;

fn pass(n: u32, what: &str, t: Instant, budget_secs: f64) {
    let secs = t.elapsed().as_secs_f64();
    assert!(
        secs < budget_secs,
        "criterion {n} exceeded its {budget_secs}s budget: {secs:.1}s"
    );
    println!("PASS criterion {n}: {what} ({secs:.2}s)");
}

#[test]
fn criterion_1_calibration_densities() {
    let t = Instant::now();
    let table = reference_density_table();
    for (ty, _, weight, area, printed) in REFERENCE_CALIBRATION {
        let rho = table.rho(ty);
        assert!(
            (rho - printed).abs() / printed < 0.01,
            "{ty}: {rho} vs printed {printed}"
        );
        assert_eq!(rho, weight / area);
    }
    pass(1, "calibration densities match printed table within 1%", t, 1.0);
}

/// (type, accurate weight g, area px, printed estimated weight g)
const GROUP_ROWS: [(KernelProperty, f64, f64, f64); 17] = [
    (SO, 2.6927, 494365.0, 2.6346),
    (SO, 5.9928, 1111058.0, 5.9211),
    (PC, 1.7933, 330068.5, 1.7913),
    (PC, 1.9313, 360577.5, 1.9569),
    (PC, 2.3933, 443462.5, 2.4067),
    (MC, 1.8700, 348635.5, 1.8513),
    (MC, 1.9726, 362904.5, 1.9271),
    (MC, 2.2357, 417796.5, 2.2186),
    (YC, 1.6182, 322061.5, 1.6199),
    (YC, 1.8479, 363798.5, 1.8298),
    (YC, 1.8580, 364007.0, 1.8308),
    (SP, 1.3254, 260486.5, 1.2857),
    (SP, 1.6427, 328200.5, 1.6199),
    (SP, 1.7985, 352404.5, 1.7394),
    (BR, 0.9846, 182024.0, 0.9529),
    (BR, 1.2161, 227903.0, 1.1931),
    (BR, 1.3338, 250334.0, 1.3105),
];

#[test]
fn criterion_2_group_weight_estimates() {
    let t = Instant::now();
    let table = reference_density_table();
    for (ty, _accurate, area, printed_estimate) in GROUP_ROWS {
        let est = estimate_group_weight(area, ty, &table);
        assert!(
            (est - printed_estimate).abs() / printed_estimate < 0.01,
            "{ty} area {area}: {est} vs printed {printed_estimate}"
        );
    }
    pass(2, "all 17 group weight estimates within 1% of printed values", t, 1.0);
}

fn random_items(rng: &mut ChaCha8Rng, allow_duals: bool) -> Vec<ReportItem> {
    let n = rng.gen_range(1..=12);
    (0..n)
        .map(|i| {
            let first = KernelProperty::ALL[rng.gen_range(0..6)];
            let properties = if allow_duals && rng.gen_bool(0.4) {
                let partners: Vec<KernelProperty> = KernelProperty::ALL
                    .iter()
                    .copied()
                    .filter(|&q| q != first && PropertySet::dual(first, q).is_ok())
                    .collect();
                if partners.is_empty() {
                    PropertySet::single(first)
                } else {
                    PropertySet::dual(first, partners[rng.gen_range(0..partners.len())]).unwrap()
                }
            } else {
                PropertySet::single(first)
            };
            ReportItem {
                bbox: BoundingBox::new(100.0 * i as f64, 0.0, 40.0, 14.0),
                properties,
                area: rng.gen_range(200..4000),
                confidence: 1.0,
            }
        })
        .collect()
}

fn random_table(rng: &mut ChaCha8Rng) -> DensityTable {
    let densities = KernelProperty::ALL
        .iter()
        .map(|&p| (p, rng.gen_range(1e-6..1e-5)))
        .collect();
    DensityTable::new("fuzz", densities).unwrap()
}

#[test]
fn criterion_3_ratio_laws() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xEC1);
    for case in 0..10_000u32 {
        let duals = case % 2 == 1;
        let items = random_items(&mut rng, duals);
        let d = random_table(&mut rng);
        let r = report_from_items(&items, &d, vec![]).unwrap();
        let sum: f64 = r.ratios.values().sum();
        for (&ty, &ratio) in &r.ratios {
            assert!(ratio >= 0.0, "{ty}: {ratio}");
        }
        if items.iter().all(|i| !i.properties.is_dual()) {
            for (&ty, &ratio) in &r.ratios {
                assert!(ratio <= 1.0 + 1e-9, "{ty}: {ratio}");
            }
            assert!((sum - 1.0).abs() <= 1e-9, "no-dual sum {sum}");
        } else {
            assert!(sum >= 1.0 - 1e-9, "sum with duals {sum}");
        }
        // rescaling every density by a common factor leaves ratios unchanged
        let c = rng.gen_range(0.1..10.0);
        let scaled = DensityTable::new(
            "fuzz-scaled",
            d.densities.iter().map(|(&p, &v)| (p, v * c)).collect(),
        )
        .unwrap();
        let r2 = report_from_items(&items, &scaled, vec![]).unwrap();
        for ty in KernelProperty::ALL {
            assert!(
                (r.ratios[&ty] - r2.ratios[&ty]).abs() <= 1e-9,
                "{ty} not scale invariant"
            );
        }
    }
    pass(3, "ratio laws hold on 10,000 random kernel sets", t, 30.0);
}

fn channel(width: u32, height: u32, data: Vec<u8>) -> ChannelImage {
    ChannelImage {
        width,
        height,
        data,
        tag: ChannelTag::Vs,
    }
}

// independent morphology oracle for criterion 4
fn oracle_morph(data: &[u8], w: usize, h: usize, r: i64, take_min: bool) -> Vec<u8> {
    let mut out = vec![0u8; data.len()];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut acc = if take_min { 255u8 } else { 0u8 };
            for dy in -r..=r {
                for dx in -r..=r {
                    let sy = (y + dy).clamp(0, h as i64 - 1) as usize;
                    let sx = (x + dx).clamp(0, w as i64 - 1) as usize;
                    let v = data[sy * w + sx];
                    acc = if take_min { acc.min(v) } else { acc.max(v) };
                }
            }
            out[(y as usize) * w + x as usize] = acc;
        }
    }
    out
}

/// Hole-filled component sizes via an independent flood fill.
fn oracle_blob_areas(binary: &[u8], w: usize, h: usize) -> Vec<u64> {
    let mut labels = vec![0u32; w * h];
    let mut next = 1u32;
    let mut areas = Vec::new();
    for start in 0..w * h {
        if binary[start] == 0 || labels[start] != 0 {
            continue;
        }
        let label = next;
        next += 1;
        let mut stack = vec![start];
        labels[start] = label;
        let mut pixels = vec![start];
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = (ny as usize) * w + nx as usize;
                    if binary[j] != 0 && labels[j] == 0 {
                        labels[j] = label;
                        stack.push(j);
                        pixels.push(j);
                    }
                }
            }
        }
        // fill holes: pixels unreachable from the image border through the
        // complement of this component
        let mut open_to_border = vec![false; w * h];
        let mut bstack = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if (x == 0 || y == 0 || x == w - 1 || y == h - 1) && labels[y * w + x] != label {
                    if !open_to_border[y * w + x] {
                        open_to_border[y * w + x] = true;
                        bstack.push(y * w + x);
                    }
                }
            }
        }
        while let Some(i) = bstack.pop() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for (nx, ny) in [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)] {
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = (ny as usize) * w + nx as usize;
                if labels[j] != label && !open_to_border[j] {
                    open_to_border[j] = true;
                    bstack.push(j);
                }
            }
        }
        let filled = (0..w * h)
            .filter(|&i| labels[i] == label || (binary[i] == 0 && !open_to_border[i] && enclosed_by(i, &labels, label, w, h)))
            .count() as u64;
        areas.push(filled);
    }
    areas
}

/// True when a background pixel's enclosing region belongs to this label:
/// walk left until hitting foreground and check its label.
fn enclosed_by(i: usize, labels: &[u32], label: u32, w: usize, _h: usize) -> bool {
    let y = i / w;
    let mut x = i % w;
    while x > 0 {
        x -= 1;
        let l = labels[y * w + x];
        if l != 0 {
            return l == label;
        }
    }
    false
}

#[test]
fn criterion_4_imaging_laws() {
    let t = Instant::now();
    // exact gray endpoints
    let mut img = RgbImage::new(2, 1);
    img.put(0, 0, (255, 255, 255));
    img.put(1, 0, (0, 0, 0));
    let g = to_inverted_gray(&img);
    assert_eq!((g.get(0, 0), g.get(1, 0)), (0, 255));

    let mut rng = ChaCha8Rng::seed_from_u64(0xEC4);
    for _ in 0..1000 {
        let data: Vec<u8> = (0..32 * 32).map(|_| rng.gen()).collect();
        let c = channel(32, 32, data.clone());
        let opened = c.morph_open(1);
        // idempotence
        assert_eq!(opened.morph_open(1).data, opened.data);
        // erode <= id <= dilate, and erosion matches the oracle
        let er = c.erode(1);
        let di = c.dilate(1);
        for i in 0..data.len() {
            assert!(er.data[i] <= data[i] && data[i] <= di.data[i]);
        }
        assert_eq!(er.data, oracle_morph(&data, 32, 32, 1, true));
        assert_eq!(di.data, oracle_morph(&data, 32, 32, 1, false));
    }

    // contour areas against the independent flood-fill oracle
    let mut blobs_checked = 0usize;
    let mut scene = 0u64;
    while blobs_checked < 500 {
        scene += 1;
        let mut rng2 = ChaCha8Rng::seed_from_u64(0x0B10 + scene);
        let (w, h) = (96usize, 96usize);
        let mut data = vec![0u8; w * h];
        for _ in 0..rng2.gen_range(1..=4) {
            // random filled disc or rectangle
            let val = 200u8;
            if rng2.gen_bool(0.5) {
                let cx = rng2.gen_range(10..w as i64 - 10);
                let cy = rng2.gen_range(10..h as i64 - 10);
                let r = rng2.gen_range(4..12i64);
                for y in 0..h as i64 {
                    for x in 0..w as i64 {
                        if (x - cx).pow(2) + (y - cy).pow(2) <= r * r {
                            data[(y as usize) * w + x as usize] = val;
                        }
                    }
                }
            } else {
                let x0 = rng2.gen_range(0..w - 12);
                let y0 = rng2.gen_range(0..h - 12);
                let bw = rng2.gen_range(6..=12);
                let bh = rng2.gen_range(6..=12);
                for y in y0..y0 + bh {
                    for x in x0..x0 + bw {
                        data[y * w + x] = val;
                    }
                }
            }
        }
        let min_area = 5u64;
        let contours = extract_contours(&channel(w as u32, h as u32, data.clone()), 60, 1, min_area);
        // oracle: independent binarize + opening + labeling + hole fill
        let binary: Vec<u8> = data.iter().map(|&v| if v > 60 { 255 } else { 0 }).collect();
        let opened = oracle_morph(&oracle_morph(&binary, w, h, 1, true), w, h, 1, false);
        let mut expect: Vec<u64> = oracle_blob_areas(&opened, w, h)
            .into_iter()
            .filter(|&a| a >= min_area)
            .collect();
        let mut got: Vec<u64> = contours.iter().map(|c| c.area).collect();
        expect.sort_unstable();
        got.sort_unstable();
        assert_eq!(got, expect, "scene {scene}");
        blobs_checked += contours.len();
    }
    pass(4, "gray endpoints, morphology laws and contour areas verified", t, 60.0);
}

fn fuzz_detection(
    rng: &mut ChaCha8Rng,
    near: Option<&BoundingBox>,
    branch: Branch,
) -> Detection {
    let bbox = match near {
        Some(b) => BoundingBox::new(
            b.x + rng.gen_range(-3.0..3.0),
            b.y + rng.gen_range(-3.0..3.0),
            (b.w + rng.gen_range(-2.0..4.0)).max(4.0),
            (b.h + rng.gen_range(-2.0..4.0)).max(4.0),
        ),
        None => BoundingBox::new(
            rng.gen_range(0.0..450.0),
            rng.gen_range(0.0..450.0),
            rng.gen_range(8.0..50.0),
            rng.gen_range(6.0..24.0),
        ),
    };
    let pool: &[RawLabel] = match branch {
        Branch::Color => &[
            RawLabel::SO,
            RawLabel::YC,
            RawLabel::SP,
            RawLabel::BR,
            RawLabel::Other,
        ],
        Branch::Gray => &[RawLabel::Chalky, RawLabel::PC, RawLabel::MC],
    };
    let n_labels = rng.gen_range(1..=2);
    let mut labels: Vec<RawLabel> = Vec::new();
    for _ in 0..n_labels {
        let l = pool[rng.gen_range(0..pool.len())];
        if !labels.contains(&l) {
            labels.push(l);
        }
    }
    Detection::new(bbox, labels, rng.gen_range(0.0..=1.0), branch)
}

fn fusion_signature(
    instances: &[KernelInstance],
    unresolved: &[ricekern::model::UnresolvedDetection],
) -> String {
    let mut s = String::new();
    for i in instances {
        s.push_str(&format!(
            "{}|{:?}|{}|{:.6};",
            i.properties.label(),
            i.contour.bbox,
            i.source_detections.len(),
            i.confidence
        ));
    }
    for u in unresolved {
        s.push_str(&format!("{:?}|{};", u.detection.bbox, u.reason));
    }
    s
}

#[test]
fn criterion_5_fusion_fuzz() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xEC5);
    let cfg = FusionConfig::default();
    for scene in 0..10_000u32 {
        // non-overlapping contours on a coarse grid
        let n_contours = rng.gen_range(0..=4usize);
        let mut contours: Vec<Contour> = Vec::new();
        for ci in 0..n_contours {
            let x = 20.0 + 120.0 * (ci % 2) as f64 + rng.gen_range(0.0..30.0);
            let y = 20.0 + 120.0 * (ci / 2) as f64 + rng.gen_range(0.0..30.0);
            contours.push(rect_contour(&BoundingBox::new(
                x,
                y,
                rng.gen_range(20.0..44.0),
                rng.gen_range(10.0..18.0),
            )));
        }
        let mut color_dets = Vec::new();
        let mut gray_dets = Vec::new();
        for c in &contours {
            for _ in 0..rng.gen_range(0..=2) {
                color_dets.push(fuzz_detection(&mut rng, Some(&c.bbox), Branch::Color));
            }
            for _ in 0..rng.gen_range(0..=1) {
                gray_dets.push(fuzz_detection(&mut rng, Some(&c.bbox), Branch::Gray));
            }
        }
        for _ in 0..rng.gen_range(0..=2) {
            color_dets.push(fuzz_detection(&mut rng, None, Branch::Color));
        }
        let mut chalk_classes: HashMap<usize, KernelProperty> = HashMap::new();
        for (gi, d) in gray_dets.iter().enumerate() {
            if d.labels.contains(&RawLabel::Chalky) && rng.gen_bool(0.7) {
                chalk_classes.insert(gi, if rng.gen_bool(0.5) { PC } else { MC });
            }
        }
        let color = DetectionSet {
            branch: Branch::Color,
            width: 512,
            height: 512,
            image: String::new(),
            detections: color_dets,
        };
        let gray = DetectionSet {
            branch: Branch::Gray,
            width: 512,
            height: 512,
            image: String::new(),
            detections: gray_dets,
        };
        let (instances, unresolved) = fuse(&color, &gray, &contours, &chalk_classes, &cfg);

        // legality: every produced property set reconstructs as legal
        for inst in &instances {
            let members: Vec<KernelProperty> = inst.properties.members().collect();
            assert!(PropertySet::from_slice(&members).is_ok(), "scene {scene}");
            assert!(!inst.source_detections.is_empty(), "scene {scene}");
        }
        // conservation: every input detection is consumed or unresolved
        for d in color.detections.iter().chain(&gray.detections) {
            let consumed = instances.iter().any(|i| i.source_detections.contains(d));
            let reported = unresolved.iter().any(|u| &u.detection == d);
            assert!(consumed || reported, "scene {scene}: detection dropped");
        }
        // determinism: identical rerun
        let (i2, u2) = fuse(&color, &gray, &contours, &chalk_classes, &cfg);
        assert_eq!(
            fusion_signature(&instances, &unresolved),
            fusion_signature(&i2, &u2),
            "scene {scene}"
        );
    }
    pass(5, "fusion legality, conservation and determinism on 10,000 scenes", t, 60.0);
}

fn end_to_end_pairs() -> &'static Vec<(AnalysisReport, GroundTruth, DensityTable)> {
    static PAIRS: OnceLock<Vec<(AnalysisReport, GroundTruth, DensityTable)>> = OnceLock::new();
    PAIRS.get_or_init(|| {
        let cfg = PipelineConfig::default();
        let d = reference_density_table();
        let mut pairs = Vec::new();
        for i in 0..50u64 {
            let spec = SceneSpec {
                width: 960,
                height: 720,
                count_min: 18,
                count_max: 28,
                dual_probability: 0.25,
                seed: 9000 + i,
                ..SceneSpec::default()
            };
            let (img, gt) = generate_scene(&spec).expect("scene generates");
            let report = analyze(&img, None, None, &d, &cfg).expect("analysis succeeds");
            pairs.push((report, gt, d.clone()));
        }
        pairs
    })
}

#[test]
fn criterion_6_end_to_end_ratio_error() {
    let t = Instant::now();
    let pairs = end_to_end_pairs();
    let mut errors: HashMap<KernelProperty, Vec<f64>> = HashMap::new();
    for (report, gt, d) in pairs.iter() {
        let truth = ground_truth_report(gt, d).unwrap();
        for ty in KernelProperty::ALL {
            let err = (report.ratios[&ty] - truth.ratios[&ty]).abs();
            errors.entry(ty).or_default().push(err);
        }
    }
    for ty in KernelProperty::ALL {
        let errs = &errors[&ty];
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let max = errs.iter().copied().fold(0.0, f64::max);
        assert!(mean <= 0.02, "{ty}: mean ratio error {:.4}", mean);
        assert!(max <= 0.03, "{ty}: max ratio error {:.4}", max);
    }
    pass(6, "50-scene weight-ratio error within 2pp mean / 3pp max", t, 300.0);
}

#[test]
fn criterion_7_classifier_f1() {
    let t = Instant::now();
    let pairs = end_to_end_pairs();
    let result = evaluate(pairs).unwrap();
    for (ty, m) in &result.per_type {
        assert!(
            m.f1() >= 0.90,
            "{ty}: F1 {:.4} (tp {} fp {} fn {})",
            m.f1(),
            m.tp,
            m.fp,
            m.fn_
        );
    }
    pass(7, "per-type F1 >= 90% for the built-in detector", t, 300.0);
}

#[test]
fn criterion_8_chalk_boundary() {
    let t = Instant::now();
    let at = ChalkMeasurement {
        mask_index: 0,
        fraction: 0.5,
    };
    assert_eq!(classify_chalk(&at), PC);
    let above = ChalkMeasurement {
        mask_index: 0,
        fraction: 0.5 + f64::EPSILON,
    };
    assert_eq!(classify_chalk(&above), MC);
    pass(8, "chalk classification boundary exact at one half", t, 1.0);
}

#[test]
fn criterion_9_dual_hand_example() {
    let t = Instant::now();
    let d = DensityTable::uniform("hand", 5e-6);
    let mk = |props: PropertySet, x: f64| KernelInstance {
        contour: rect_contour(&BoundingBox::new(x, 0.0, 100.0, 10.0)),
        properties: props,
        source_detections: vec![],
        confidence: 1.0,
    };
    let kernels = vec![
        mk(PropertySet::single(SO), 0.0),
        mk(PropertySet::dual(PC, YC).unwrap(), 200.0),
    ];
    let r = weight_ratios(&kernels, &d, vec![]).unwrap();
    assert_eq!(r.ratios[&SO], 0.5);
    assert_eq!(r.ratios[&PC], 0.5);
    assert_eq!(r.ratios[&YC], 0.5);
    assert_eq!(r.ratios[&MC], 0.0);
    pass(9, "one sound plus one dual kernel splits ratios exactly in half", t, 1.0);
}
