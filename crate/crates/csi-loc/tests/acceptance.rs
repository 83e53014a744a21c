//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured values. Run with `cargo test -p csi-loc --test acceptance`
//! (add `-- --nocapture` to see the lines for passing criteria).

use csi_loc::augment::AugmentConfig;
use csi_loc::calibration::calibrate_phase;
use csi_loc::channel_sim::{self, SceneConfig, SUBCARRIER_BINS};
use csi_loc::csi_data::{read_dataset, to_polar, write_dataset, FeatureLayout};
use csi_loc::error::Result;
use csi_loc::eval::{self, Protocol};
use csi_loc::geometry::{convex_hull, point_in_hull, Point2};
use csi_loc::localizers::{
    build_cnn_regressor, build_mlp_regressor, load_localizer, save_localizer, AnyLocalizer,
    FitOptions, KnnIndex, Localizer, LocalizerKind, RpCodebook, TrunkKind,
};
use csi_loc::nn::{
    cross_entropy_loss, mde_loss, Affine, Conv2d, Layer, Mode, OptimizerKind, TrainConfig,
};
use csi_loc::streams::{derive_stream, Domain};
use csi_loc::{Network, Real, Tensor};
use rand::Rng;
use std::time::Instant;

/// The standard experiment scene with the acceptance seed.
fn standard_scene() -> SceneConfig {
    let mut scene = SceneConfig::standard();
    scene.seed = 42;
    scene
}

// ---------------------------------------------------------------------------
// Criterion 1: CNN parameter count
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_cnn_parameter_count() {
    let started = Instant::now();
    let count = build_cnn_regressor::<Real>().parameter_count();
    assert_eq!(count, 235_682, "criterion 1: FAIL — cnn parameter count {count}");
    assert!(started.elapsed().as_secs_f64() < 1.0);
    println!("criterion 1 (cnn parameter count): PASS — {count} parameters");
}

// ---------------------------------------------------------------------------
// Criterion 2: MLP parameter count
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_mlp_parameter_count() {
    let started = Instant::now();
    let count = build_mlp_regressor::<Real>().parameter_count();
    assert_eq!(count, 221_186, "criterion 2: FAIL — mlp parameter count {count}");
    assert!(started.elapsed().as_secs_f64() < 1.0);
    println!("criterion 2 (mlp parameter count): PASS — {count} parameters");
}

// ---------------------------------------------------------------------------
// Criterion 3: gradient suite
// ---------------------------------------------------------------------------

const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
const FD_INSTANCES: usize = 20;

/// Scalar probe: cotangent-weighted sum of the network output, with the
/// dropout stream frozen by `mask_seed` so finite differences see one mask.
fn probe(net: &Network, input: &Tensor, cotangent: &Tensor, mask_seed: u64) -> Real {
    let mut rng = derive_stream(mask_seed, Domain::Dropout, &[0]);
    let out = net
        .forward_trace(input, Mode::Train, &mut rng)
        .expect("forward")
        .output;
    out.values
        .iter()
        .zip(cotangent.values.iter())
        .map(|(a, b)| a * b)
        .sum()
}

fn assert_close(analytic: Real, fd: Real, what: &str) {
    let denom = analytic.abs().max(fd.abs()).max(1e-6);
    assert!(
        (analytic - fd).abs() / denom < FD_REL_TOL,
        "criterion 3: FAIL — {what}: analytic {analytic} vs fd {fd}"
    );
}

/// Checks every input and parameter gradient of a one-layer network against
/// central finite differences.
fn gradcheck_layer(layer: Layer<Real>, input_shape: Vec<usize>, case: u64) {
    let mut net = Network::new(input_shape.clone(), vec![layer]).expect("layer net");
    let mut rng = derive_stream(case, Domain::WeightInit, &[7]);
    for p in net.params_mut() {
        *p = rng.random::<f64>() * 2.0 - 1.0;
    }
    let mut batch_shape = vec![2];
    batch_shape.extend_from_slice(&input_shape);
    let n: usize = batch_shape.iter().product();
    let input = Tensor::new(batch_shape, (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
        .expect("input");
    let mask_seed = case.wrapping_mul(31).wrapping_add(5);

    let mut probe_rng = derive_stream(mask_seed, Domain::Dropout, &[0]);
    let trace = net
        .forward_trace(&input, Mode::Train, &mut probe_rng)
        .expect("forward");
    let cot_n = trace.output.values.len();
    let cotangent = Tensor::new(
        trace.output.shape.clone(),
        (0..cot_n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
    )
    .expect("cotangent");

    let grads = net.backward(&trace, &cotangent);

    // Input gradients via the layer's own backward pass (the network-level
    // backward only reports parameter gradients).
    let input_grad = {
        let mut layer_rng = derive_stream(mask_seed, Domain::Dropout, &[0]);
        let (_, ctx) = net.layers[0]
            .forward(&input, Mode::Train, &mut layer_rng)
            .expect("forward");
        net.layers[0].backward(&ctx, &cotangent).0
    };
    for j in 0..input.values.len() {
        let mut up = input.clone();
        up.values[j] += FD_STEP;
        let mut dn = input.clone();
        dn.values[j] -= FD_STEP;
        let fd = (probe(&net, &up, &cotangent, mask_seed) - probe(&net, &dn, &cotangent, mask_seed))
            / (2.0 * FD_STEP);
        assert_close(input_grad.values[j], fd, &format!("case {case} input {j}"));
    }

    // Parameter gradients.
    let flat = grads.flat();
    for j in 0..flat.len() {
        let base = *net.params_mut()[j];
        *net.params_mut()[j] = base + FD_STEP;
        let up = probe(&net, &input, &cotangent, mask_seed);
        *net.params_mut()[j] = base - FD_STEP;
        let dn = probe(&net, &input, &cotangent, mask_seed);
        *net.params_mut()[j] = base;
        let fd = (up - dn) / (2.0 * FD_STEP);
        assert_close(flat[j], fd, &format!("case {case} param {j}"));
    }
}

#[test]
fn criterion_3_gradient_suite() {
    let started = Instant::now();
    for case in 0..FD_INSTANCES as u64 {
        gradcheck_layer(Layer::FullyConnected(Affine::zeros(6, 5)), vec![6], case);
        gradcheck_layer(Layer::LinearOutput(Affine::zeros(5, 3)), vec![5], 100 + case);
        gradcheck_layer(Layer::Conv2d(Conv2d::zeros(2, 3, 3, 3)), vec![2, 5, 4], 200 + case);
        gradcheck_layer(Layer::Relu, vec![7], 300 + case);
        gradcheck_layer(Layer::MaxPool2, vec![2, 4, 4], 400 + case);
        gradcheck_layer(Layer::Dropout { rate: 0.3 }, vec![9], 500 + case);
        gradcheck_layer(Layer::SoftmaxOutput, vec![5], 600 + case);
    }

    // Both losses against central differences.
    let mut rng = derive_stream(77, Domain::WeightInit, &[3]);
    for case in 0..FD_INSTANCES {
        let batch = 1 + case % 4;
        let pred_v: Vec<f64> = (0..batch * 2).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let label_v: Vec<f64> = (0..batch * 2).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let labels = Tensor::new(vec![batch, 2], label_v).unwrap();
        let (_, grad) = mde_loss(&Tensor::new(vec![batch, 2], pred_v.clone()).unwrap(), &labels).unwrap();
        for j in 0..pred_v.len() {
            let mut up = pred_v.clone();
            up[j] += FD_STEP;
            let mut dn = pred_v.clone();
            dn[j] -= FD_STEP;
            let (lu, _) = mde_loss(&Tensor::new(vec![batch, 2], up).unwrap(), &labels).unwrap();
            let (ld, _) = mde_loss(&Tensor::new(vec![batch, 2], dn).unwrap(), &labels).unwrap();
            assert_close(grad.values[j], (lu - ld) / (2.0 * FD_STEP), &format!("mde case {case} elem {j}"));
        }

        let k = 2 + case % 5;
        let logit_v: Vec<f64> = (0..batch * k).map(|_| rng.random::<f64>() * 6.0 - 3.0).collect();
        let classes: Vec<usize> = (0..batch).map(|_| rng.random_range(0..k)).collect();
        let (_, grad) =
            cross_entropy_loss(&Tensor::new(vec![batch, k], logit_v.clone()).unwrap(), &classes).unwrap();
        for j in 0..logit_v.len() {
            let mut up = logit_v.clone();
            up[j] += FD_STEP;
            let mut dn = logit_v.clone();
            dn[j] -= FD_STEP;
            let (lu, _) = cross_entropy_loss(&Tensor::new(vec![batch, k], up).unwrap(), &classes).unwrap();
            let (ld, _) = cross_entropy_loss(&Tensor::new(vec![batch, k], dn).unwrap(), &classes).unwrap();
            assert_close(grad.values[j], (lu - ld) / (2.0 * FD_STEP), &format!("ce case {case} elem {j}"));
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "criterion 3: FAIL — took {elapsed:.1} s");
    println!(
        "criterion 3 (gradient suite): PASS — 7 layer kinds + 2 losses x {FD_INSTANCES} instances, rel tol {FD_REL_TOL}, {elapsed:.1} s"
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: calibration
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_calibration() {
    let started = Instant::now();
    let mut scene = standard_scene();
    scene.noise_std = 0.0;

    // Random (delta, Z) per packet, fixed location: calibrated phases agree
    // across packets.
    let mut max_spread: f64 = 0.0;
    for (li, loc) in [Point2::new(3.7, 4.1), Point2::new(5.2, 2.3), Point2::new(2.2, 3.0)]
        .iter()
        .enumerate()
    {
        let mut reference: Option<Vec<f64>> = None;
        for packet in 0..6u32 {
            let (symbol, draw) = channel_sim::sample_csi(&scene, *loc, packet).unwrap();
            if packet > 0 {
                assert!(draw.sto.abs() <= scene.sto_max);
            }
            let cal = calibrate_phase(&to_polar::<Real>(&symbol), &SUBCARRIER_BINS).unwrap();
            match &reference {
                None => reference = Some(cal.calibrated_phase),
                Some(anchor) => {
                    for (a, b) in anchor.iter().zip(cal.calibrated_phase.iter()) {
                        max_spread = max_spread.max((a - b).abs());
                    }
                }
            }
        }
        assert!(
            max_spread < 1e-8,
            "criterion 4: FAIL — location {li}: cross-packet spread {max_spread}"
        );
    }

    // Affine phase inputs are annihilated.
    let mut max_residual: f64 = 0.0;
    let mut rng = derive_stream(9, Domain::WeightInit, &[1]);
    for _ in 0..50 {
        let slope = rng.random::<f64>() * 0.2 - 0.1;
        let intercept = rng.random::<f64>() * 2.0 - 1.0;
        let phase: Vec<f64> = (0..3)
            .flat_map(|_| SUBCARRIER_BINS.iter().map(move |&b| slope * b as f64 + intercept))
            .collect();
        let polar = csi_loc::PolarCsi { n_rx: 3, n_sc: 30, amplitude: vec![1.0; 90], phase };
        let cal = calibrate_phase(&polar, &SUBCARRIER_BINS).unwrap();
        for p in &cal.calibrated_phase {
            max_residual = max_residual.max(p.abs());
        }
    }
    assert!(
        max_residual <= 1e-10,
        "criterion 4: FAIL — affine residual {max_residual}"
    );

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "criterion 4: FAIL — took {elapsed:.1} s");
    println!(
        "criterion 4 (calibration): PASS — cross-packet spread {max_spread:.2e} < 1e-8, affine residual {max_residual:.2e} <= 1e-10, {elapsed:.2} s"
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: regression beats classification
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_regression_beats_classification() {
    let started = Instant::now();
    let scene = standard_scene();
    let protocol = Protocol {
        train_packets_per_location: 240,
        test_packets_per_point: 60,
        include_midpoints: true,
        include_rp_test_points: false,
        n_random_test_points: 8,
        epochs: 80,
        classifier_trunk: TrunkKind::Cnn,
        ..Protocol::default()
    };
    let seeds = [1, 2, 3, 4, 5];
    let table = eval::compare_methods(
        &scene,
        &[LocalizerKind::CnnRegression, LocalizerKind::Classification],
        &protocol,
        &seeds,
        1,
        "criterion5",
    )
    .unwrap();

    let mut wins = 0;
    let mut lines = Vec::new();
    for &seed in &seeds {
        let median_of = |method: LocalizerKind| {
            table
                .rows
                .iter()
                .find(|r| r.seed == seed && r.method == method)
                .and_then(|r| r.median_error)
                .unwrap_or(f64::INFINITY)
        };
        let cnn = median_of(LocalizerKind::CnnRegression);
        let clf = median_of(LocalizerKind::Classification);
        if cnn <= clf {
            wins += 1;
        }
        lines.push(format!("seed {seed}: cnn {cnn:.3} m vs classification {clf:.3} m"));
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        wins >= 4,
        "criterion 5: FAIL — cnn beat classification in only {wins}/5 seeds\n{}",
        lines.join("\n")
    );
    assert!(elapsed < 15.0 * 60.0, "criterion 5: FAIL — took {elapsed:.0} s");
    println!(
        "criterion 5 (regression beats classification): PASS — {wins}/5 seeds, {elapsed:.0} s\n  {}",
        lines.join("\n  ")
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: augmentation helps
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_augmentation_helps() {
    let started = Instant::now();
    let scene = standard_scene();
    let protocol = Protocol {
        train_packets_per_location: 120,
        test_packets_per_point: 60,
        include_midpoints: true,
        include_rp_test_points: false,
        n_random_test_points: 8,
        epochs: 25,
        ..Protocol::default()
    };
    let augment = AugmentConfig {
        perturbation_radius: 0.10,
        samples_per_rp: 4,
        alpha: 0.0,
        seed: 17,
    };
    let seeds = [1, 2, 3, 4, 5];
    let table = eval::ablate_augmentation(
        &scene,
        LocalizerKind::MlpRegression,
        &protocol,
        &augment,
        &seeds,
        1,
        "criterion6",
    )
    .unwrap();

    let lines: Vec<String> = table
        .rows
        .iter()
        .map(|r| {
            format!(
                "seed {}: unaugmented {:.3} m -> augmented {:.3} m (ratio {:.3})",
                r.seed,
                r.median_unaugmented.unwrap_or(f64::NAN),
                r.median_augmented.unwrap_or(f64::NAN),
                r.ratio.unwrap_or(f64::NAN)
            )
        })
        .collect();
    let improvement = table.mean_relative_improvement.unwrap_or(f64::NEG_INFINITY);
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        table.seeds_improved >= 4,
        "criterion 6: FAIL — augmentation improved only {}/5 seeds\n{}",
        table.seeds_improved,
        lines.join("\n")
    );
    assert!(
        improvement >= 0.10,
        "criterion 6: FAIL — mean relative improvement {improvement:.3} < 0.10\n{}",
        lines.join("\n")
    );
    assert!(elapsed < 20.0 * 60.0, "criterion 6: FAIL — took {elapsed:.0} s");
    println!(
        "criterion 6 (augmentation helps): PASS — {}/5 seeds improved, mean improvement {:.1}%, {elapsed:.0} s\n  {}",
        table.seeds_improved,
        improvement * 100.0,
        lines.join("\n  ")
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: convex-hull property
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_convex_hull_gap() {
    let scene = standard_scene();
    let rps = scene.rp_locations();
    let hull = convex_hull(&rps);

    // Classification: fused predictions of 1000 random inputs stay in the
    // hull.
    let train = channel_sim::generate_dataset(&scene, 60, &rps).unwrap();
    let mut classifier = AnyLocalizer::new(
        LocalizerKind::Classification,
        FitOptions {
            train: TrainConfig { epochs: 2, seed: 3, ..TrainConfig::default() },
            classifier_trunk: TrunkKind::Cnn,
            ..FitOptions::default()
        },
    )
    .unwrap();
    classifier.fit(&train).unwrap();

    let mut rng = derive_stream(123, Domain::TestPoints, &[1]);
    for case in 0..1000 {
        let values: Vec<f64> = (0..2700).map(|_| rng.random::<f64>() * 2.0).collect();
        let features = csi_loc::FeatureTensor { layout: FeatureLayout::Block3x30x30, values };
        let fused = classifier.predict_features(&[features]).unwrap();
        assert!(
            point_in_hull(&hull, fused, 1e-9),
            "criterion 7: FAIL — case {case}: fused prediction ({}, {}) left the hull",
            fused.x,
            fused.y
        );
    }

    // Regression: with test locations outside the hull, at least one
    // prediction lands outside it.
    let mut regressor = AnyLocalizer::new(
        LocalizerKind::MlpRegression,
        FitOptions {
            train: TrainConfig { epochs: 30, seed: 3, ..TrainConfig::default() },
            ..FitOptions::default()
        },
    )
    .unwrap();
    regressor.fit(&train).unwrap();
    let outside_points = vec![
        Point2::new(0.7, 0.7),
        Point2::new(7.3, 0.7),
        Point2::new(0.7, 5.3),
        Point2::new(7.3, 5.3),
        Point2::new(4.0, 0.5),
        Point2::new(4.0, 5.5),
        Point2::new(0.5, 3.0),
        Point2::new(7.5, 3.0),
    ];
    for p in &outside_points {
        assert!(!point_in_hull(&hull, *p, 1e-9), "test point {p:?} is not outside the hull");
    }
    let test = channel_sim::generate_dataset_from(&scene, 60, &outside_points, 60).unwrap();
    // The classifier's error at an outside-hull point is bounded below by
    // the point's distance to the hull (its prediction cannot leave it).
    for rec in &test.records {
        let fused = classifier.predict_record(rec).unwrap();
        let error = fused.distance(rec.location);
        let bound = csi_loc::geometry::distance_to_hull(&hull, rec.location);
        assert!(
            error >= bound - 1e-9,
            "criterion 7: FAIL — classification error {error} below hull bound {bound}"
        );
    }
    let mut n_outside = 0;
    for rec in &test.records {
        let pred = regressor.predict_record(rec).unwrap();
        if !point_in_hull(&hull, pred, 1e-9) {
            n_outside += 1;
        }
    }
    assert!(
        n_outside >= 1,
        "criterion 7: FAIL — all regression predictions stayed inside the hull"
    );
    println!(
        "criterion 7 (convex hull gap): PASS — 1000/1000 fused predictions in hull, {n_outside}/{} regression predictions outside",
        outside_points.len()
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: oracle equivalences
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_oracle_equivalences() -> Result<()> {
    // KNN vs exhaustive scan on 100 random instances.
    let mut rng = derive_stream(55, Domain::TestPoints, &[2]);
    for case in 0..100 {
        let n_rp = 2 + case % 10;
        let dim = 3 + case % 4;
        let rps: Vec<Point2> = (0..n_rp)
            .map(|k| Point2::new(k as f64 * 0.7, ((k * 13) % 7) as f64 * 0.9))
            .collect();
        let fingerprints: Vec<f64> = (0..n_rp * dim).map(|_| rng.random::<f64>() * 5.0).collect();
        let index = KnnIndex {
            codebook: RpCodebook::new(rps.clone())?,
            feature_dim: dim,
            fingerprints: fingerprints.clone(),
        };
        let query: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 5.0).collect();
        let k = 1 + case % n_rp;
        let got = index.query(&query, k)?;

        let mut scored: Vec<(f64, usize)> = (0..n_rp)
            .map(|i| {
                let fp = &fingerprints[i * dim..(i + 1) * dim];
                (
                    fp.iter().zip(&query).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(),
                    i,
                )
            })
            .collect();
        scored.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (mut ex, mut ey) = (0.0, 0.0);
        for &(_, i) in scored.iter().take(k) {
            ex += rps[i].x;
            ey += rps[i].y;
        }
        let expect = Point2::new(ex / k as f64, ey / k as f64);
        assert!(
            got.distance(expect) < 1e-9,
            "criterion 8: FAIL — knn case {case}: {got:?} vs oracle {expect:?}"
        );
    }

    // Eval summaries match independent recomputation from dumped rows.
    let scene = standard_scene();
    let rps = scene.rp_locations();
    let train = channel_sim::generate_dataset(&scene, 4, &rps)?;
    let mut knn = AnyLocalizer::new(LocalizerKind::Knn, FitOptions::default())?;
    knn.fit(&train)?;
    let protocol = Protocol { n_random_test_points: 6, ..Protocol::default() };
    let points = protocol.test_points(&scene, 1);
    let test = channel_sim::generate_dataset_from(&scene, 4, &points, 10)?;
    let report = eval::evaluate(&knn, &test.records, "acceptance", 1)?;

    let dir = tempfile::tempdir()?;
    let csv_path = dir.path().join("rows.csv");
    eval::write_predictions_csv(&report.rows, &csv_path)?;
    let text = std::fs::read_to_string(&csv_path)?;
    let mut errors: Vec<f64> = Vec::new();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let (tx, ty): (f64, f64) = (cols[2].parse().unwrap(), cols[3].parse().unwrap());
        let (px, py): (f64, f64) = (cols[4].parse().unwrap(), cols[5].parse().unwrap());
        let err: f64 = cols[6].parse().unwrap();
        let recomputed = ((tx - px).powi(2) + (ty - py).powi(2)).sqrt();
        assert!(
            (err - recomputed).abs() < 1e-12,
            "criterion 8: FAIL — row error {err} vs recomputed {recomputed}"
        );
        errors.push(err);
    }
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let mut sorted = errors.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[(sorted.len() - 1) / 2];
    assert!((report.mean_error - mean).abs() < 1e-12, "criterion 8: FAIL — mean mismatch");
    assert!((report.median_error - median).abs() < 1e-12, "criterion 8: FAIL — median mismatch");
    for (threshold, fraction) in &report.cdf {
        let recomputed = errors.iter().filter(|e| *e <= threshold).count() as f64 / errors.len() as f64;
        assert!(
            (fraction - recomputed).abs() < 1e-12,
            "criterion 8: FAIL — cdf mismatch at {threshold}"
        );
    }

    // File formats round-trip bit-exactly.
    let ds_a = dir.path().join("a.csf");
    let ds_b = dir.path().join("b.csf");
    write_dataset(&test, &ds_a)?;
    write_dataset(&read_dataset(&ds_a)?, &ds_b)?;
    assert_eq!(
        std::fs::read(&ds_a)?,
        std::fs::read(&ds_b)?,
        "criterion 8: FAIL — dataset round trip"
    );
    let ck_a = dir.path().join("a.nnm");
    let ck_b = dir.path().join("b.nnm");
    save_localizer(&knn, &ck_a)?;
    save_localizer(&load_localizer(&ck_a)?, &ck_b)?;
    assert_eq!(
        std::fs::read(&ck_a)?,
        std::fs::read(&ck_b)?,
        "criterion 8: FAIL — checkpoint round trip"
    );

    println!(
        "criterion 8 (oracle equivalences): PASS — 100 knn instances, {} eval rows, round trips byte-identical",
        errors.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// Criterion 9: determinism
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_determinism() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let mut scene = standard_scene();
    scene.noise_std = 0.05;
    let rps: Vec<Point2> = scene.rp_locations().into_iter().take(6).collect();

    let run = |suffix: &str| -> Result<Vec<Vec<u8>>> {
        let mut artifacts = Vec::new();
        // simulate
        let train = channel_sim::generate_dataset(&scene, 36, &rps)?;
        let p = dir.path().join(format!("train_{suffix}.csf"));
        write_dataset(&train, &p)?;
        artifacts.push(std::fs::read(&p)?);
        // calibrate
        let calibrated = csi_loc::calibration::calibrate_dataset(&train, &SUBCARRIER_BINS)?;
        let p = dir.path().join(format!("cal_{suffix}.csf"));
        write_dataset(&calibrated, &p)?;
        artifacts.push(std::fs::read(&p)?);
        // augment
        let augmented = csi_loc::augment::augment_dataset(
            &scene,
            &train,
            &AugmentConfig { samples_per_rp: 1, seed: 11, ..AugmentConfig::default() },
        )?;
        let p = dir.path().join(format!("aug_{suffix}.csf"));
        write_dataset(&augmented, &p)?;
        artifacts.push(std::fs::read(&p)?);
        // train
        let mut model = AnyLocalizer::new(
            LocalizerKind::MlpRegression,
            FitOptions {
                train: TrainConfig {
                    epochs: 3,
                    seed: 7,
                    optimizer: OptimizerKind::adam(),
                    ..TrainConfig::default()
                },
                ..FitOptions::default()
            },
        )?;
        model.fit(&augmented)?;
        let p = dir.path().join(format!("model_{suffix}.nnm"));
        save_localizer(&model, &p)?;
        artifacts.push(std::fs::read(&p)?);
        // evaluate
        let test = channel_sim::generate_dataset_from(&scene, 36, &rps, 36)?;
        let report = eval::evaluate(&model, &test.records, "determinism", 7)?;
        let p = dir.path().join(format!("report_{suffix}.csv"));
        eval::write_predictions_csv(&report.rows, &p)?;
        artifacts.push(std::fs::read(&p)?);
        let p = dir.path().join(format!("cdf_{suffix}.csv"));
        eval::write_cdf_csv(&report.cdf, &p)?;
        artifacts.push(std::fs::read(&p)?);
        Ok(artifacts)
    };

    let first = run("a")?;
    let second = run("b")?;
    let names = ["simulate", "calibrate", "augment", "train", "evaluate", "cdf"];
    for ((a, b), name) in first.iter().zip(second.iter()).zip(names.iter()) {
        assert_eq!(a, b, "criterion 9: FAIL — {name} artifacts differ between reruns");
    }
    println!(
        "criterion 9 (determinism): PASS — {} pipeline stages bit-identical across reruns",
        names.len()
    );
    Ok(())
}
