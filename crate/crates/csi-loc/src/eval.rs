//! Evaluation harness: distance-error reports, method comparison, and the
//! augmentation ablation.
//!
//! Errors are always measured against the true capture location, never the
//! training label, so augmented records cannot leak. Reports keep the raw
//! per-point errors; mean, median (lower-middle for even counts), and the
//! error CDF are derived views.

use crate::augment::{augment_dataset, AugmentConfig};
use crate::channel_sim::{self, SceneConfig};
use crate::csi_data::{Dataset, FingerprintRecord};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::localizers::{AnyLocalizer, FitOptions, Localizer, LocalizerKind, TrunkKind};
use crate::nn::{OptimizerKind, TrainConfig};
use crate::streams::{derive_stream, Domain};
use crate::Real;
use rand::Rng;
use serde::Serialize;
use std::io::Write;
use std::path::Path;

/// One scored test point.
#[derive(Debug, Clone, Serialize)]
pub struct PredictionRow {
    pub seed: u64,
    pub method: LocalizerKind,
    pub true_point: Point2,
    pub predicted: Point2,
    pub error: Real,
}

/// Distance-error report for one (method, seed) evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub method: LocalizerKind,
    pub scenario_tag: String,
    pub seed: u64,
    pub rows: Vec<PredictionRow>,
    pub per_point_errors: Vec<Real>,
    pub mean_error: Real,
    pub median_error: Real,
    /// `(error threshold, cumulative fraction)` sampled at each distinct
    /// error value.
    pub cdf: Vec<(Real, Real)>,
}

/// Arithmetic mean.
pub fn mean(errors: &[Real]) -> Real {
    errors.iter().sum::<Real>() / errors.len() as Real
}

/// Lower-middle element for even counts.
pub fn median(errors: &[Real]) -> Real {
    let mut sorted = errors.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
    sorted[(sorted.len() - 1) / 2]
}

/// Empirical CDF sampled at each distinct error value.
pub fn error_cdf(errors: &[Real]) -> Vec<(Real, Real)> {
    let mut sorted = errors.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
    let n = sorted.len() as Real;
    let mut cdf = Vec::new();
    let mut seen = 0usize;
    let mut i = 0usize;
    while i < sorted.len() {
        let v = sorted[i];
        while i < sorted.len() && sorted[i] == v {
            i += 1;
            seen += 1;
        }
        cdf.push((v, seen as Real / n));
    }
    cdf
}

/// Scores a fitted model on test records.
pub fn evaluate(
    model: &dyn Localizer,
    test_records: &[FingerprintRecord],
    scenario_tag: &str,
    seed: u64,
) -> Result<EvalReport> {
    if test_records.is_empty() {
        return Err(Error::domain("no test records to evaluate"));
    }
    let mut rows = Vec::with_capacity(test_records.len());
    for rec in test_records {
        let predicted = model.predict_record(rec)?;
        rows.push(PredictionRow {
            seed,
            method: model.kind(),
            true_point: rec.location,
            predicted,
            error: predicted.distance(rec.location),
        });
    }
    let per_point_errors: Vec<Real> = rows.iter().map(|r| r.error).collect();
    Ok(EvalReport {
        method: model.kind(),
        scenario_tag: scenario_tag.to_string(),
        seed,
        mean_error: mean(&per_point_errors),
        median_error: median(&per_point_errors),
        cdf: error_cdf(&per_point_errors),
        per_point_errors,
        rows,
    })
}

// ---------------------------------------------------------------------------
// Train/test protocol
// ---------------------------------------------------------------------------

/// Declares how training and test data are produced and how models are
/// trained for `compare_methods` and `ablate_augmentation`.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub train_packets_per_location: usize,
    pub test_packets_per_point: usize,
    /// Midpoints between horizontally/vertically adjacent RPs.
    pub include_midpoints: bool,
    /// Fresh bursts at the RPs themselves (held-out packet indices).
    pub include_rp_test_points: bool,
    /// Seeded uniform draws inside the RP bounding box.
    pub n_random_test_points: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub knn_k: usize,
    pub window_averaging: bool,
    pub use_phase: bool,
    pub classifier_trunk: TrunkKind,
    /// Augmentation for methods trained with it (`compare_methods` applies it
    /// to every method when set; the ablation uses it for the augmented arm).
    pub augment: Option<AugmentConfig>,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            train_packets_per_location: 240,
            test_packets_per_point: 60,
            include_midpoints: true,
            include_rp_test_points: false,
            n_random_test_points: 8,
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::adam(),
            knn_k: 3,
            window_averaging: true,
            use_phase: false,
            classifier_trunk: TrunkKind::Cnn,
            augment: None,
        }
    }
}

impl Protocol {
    fn fit_options(&self, seed: u64) -> FitOptions {
        FitOptions {
            train: TrainConfig {
                optimizer: self.optimizer,
                learning_rate: self.learning_rate,
                batch_size: self.batch_size,
                epochs: self.epochs,
                seed,
                dropout_active: true,
            },
            window_averaging: self.window_averaging,
            use_phase: self.use_phase,
            knn_k: self.knn_k,
            classifier_trunk: self.classifier_trunk,
            alpha: self.augment.as_ref().map_or(0.0, |a| a.alpha),
        }
    }

    /// Test locations for a scene: midpoints of adjacent RP pairs, seeded
    /// random interior points of the RP bounding box, and optionally the RPs
    /// themselves.
    pub fn test_points(&self, scene: &SceneConfig, seed: u64) -> Vec<Point2> {
        let rps = scene.rp_locations();
        let mut points = Vec::new();
        if self.include_midpoints {
            for row in 0..scene.rp_rows {
                for col in 0..scene.rp_cols {
                    let here = rps[row * scene.rp_cols + col];
                    if col + 1 < scene.rp_cols {
                        points.push(here.midpoint(rps[row * scene.rp_cols + col + 1]));
                    }
                    if row + 1 < scene.rp_rows {
                        points.push(here.midpoint(rps[(row + 1) * scene.rp_cols + col]));
                    }
                }
            }
        }
        if self.n_random_test_points > 0 {
            let min_x = rps.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
            let max_x = rps.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
            let min_y = rps.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
            let max_y = rps.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
            let mut rng = derive_stream(seed, Domain::TestPoints, &[scene.seed]);
            for _ in 0..self.n_random_test_points {
                points.push(Point2::new(
                    min_x + rng.random::<f64>() * (max_x - min_x),
                    min_y + rng.random::<f64>() * (max_y - min_y),
                ));
            }
        }
        if self.include_rp_test_points {
            points.extend(rps);
        }
        points
    }
}

/// Re-seeds a scene for one comparison run.
fn scene_for_seed(scene: &SceneConfig, seed: u64) -> SceneConfig {
    let mut out = scene.clone();
    out.seed = scene.seed ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    out
}

/// Builds the per-seed train and test datasets. Test bursts start after the
/// training packet indices so fresh impairment/noise draws are used even at
/// the RPs themselves.
pub fn build_seed_data(scene: &SceneConfig, protocol: &Protocol, seed: u64) -> Result<(SceneConfig, Dataset, Dataset)> {
    let seed_scene = scene_for_seed(scene, seed);
    let rps = seed_scene.rp_locations();
    let mut train = channel_sim::generate_dataset(&seed_scene, protocol.train_packets_per_location, &rps)?;
    if let Some(aug) = &protocol.augment {
        let mut aug = aug.clone();
        aug.seed ^= seed.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        train = augment_dataset(&seed_scene, &train, &aug)?;
    }
    let test_points = protocol.test_points(&seed_scene, seed);
    let test = channel_sim::generate_dataset_from(
        &seed_scene,
        protocol.test_packets_per_point,
        &test_points,
        protocol.train_packets_per_location as u32,
    )?;
    Ok((seed_scene, train, test))
}

/// One method x seed cell of a comparison.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub seed: u64,
    pub method: LocalizerKind,
    pub mean_error: Option<Real>,
    pub median_error: Option<Real>,
    /// Set when training failed (e.g. divergence); the run continues.
    pub failure: Option<String>,
}

/// Across-seed summary for one method.
#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: LocalizerKind,
    pub seeds_completed: usize,
    pub mean_of_means: Option<Real>,
    pub mean_of_medians: Option<Real>,
    pub min_median: Option<Real>,
    pub max_median: Option<Real>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonTable {
    pub scenario_tag: String,
    pub rows: Vec<ComparisonRow>,
    pub summaries: Vec<MethodSummary>,
    /// Raw per-point rows for every completed cell.
    pub predictions: Vec<PredictionRow>,
}

fn run_methods_for_seed(
    scene: &SceneConfig,
    methods: &[LocalizerKind],
    protocol: &Protocol,
    seed: u64,
    tag: &str,
) -> Result<(Vec<ComparisonRow>, Vec<PredictionRow>)> {
    let (_, train, test) = build_seed_data(scene, protocol, seed)?;
    let mut rows = Vec::with_capacity(methods.len());
    let mut predictions = Vec::new();
    for &method in methods {
        let mut model = AnyLocalizer::new(method, protocol.fit_options(seed))?;
        match model.fit(&train).and_then(|()| evaluate(&model, &test.records, tag, seed)) {
            Ok(report) => {
                rows.push(ComparisonRow {
                    seed,
                    method,
                    mean_error: Some(report.mean_error),
                    median_error: Some(report.median_error),
                    failure: None,
                });
                predictions.extend(report.rows);
            }
            Err(err) => rows.push(ComparisonRow {
                seed,
                method,
                mean_error: None,
                median_error: None,
                failure: Some(err.to_string()),
            }),
        }
    }
    Ok((rows, predictions))
}

/// Fans seeds out to at most `n_threads` workers; results are ordered by
/// seed, so the table is independent of scheduling.
fn fan_out_seeds<T, F>(seeds: &[u64], n_threads: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let n_threads = n_threads.max(1).min(seeds.len().max(1));
    if n_threads == 1 {
        return seeds.iter().map(|&s| job(s)).collect();
    }
    let mut results: Vec<Option<Result<T>>> = (0..seeds.len()).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<&mut Option<Result<T>>>> =
        results.iter_mut().map(std::sync::Mutex::new).collect();
    std::thread::scope(|scope| {
        for _ in 0..n_threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= seeds.len() {
                    break;
                }
                let out = job(seeds[i]);
                **slots[i].lock().expect("result slot") = Some(out);
            });
        }
    });
    results
        .into_iter()
        .map(|slot| slot.expect("every seed produced a result"))
        .collect()
}

/// Trains every method on identical per-seed data and scores them on the
/// held-out test points.
pub fn compare_methods(
    scene: &SceneConfig,
    methods: &[LocalizerKind],
    protocol: &Protocol,
    seeds: &[u64],
    n_threads: usize,
    scenario_tag: &str,
) -> Result<ComparisonTable> {
    if methods.len() < 2 {
        return Err(Error::domain("comparison needs at least 2 methods"));
    }
    if seeds.is_empty() {
        return Err(Error::domain("comparison needs at least 1 seed"));
    }
    let per_seed = fan_out_seeds(seeds, n_threads, |seed| {
        run_methods_for_seed(scene, methods, protocol, seed, scenario_tag)
    })?;

    let mut rows = Vec::new();
    let mut predictions = Vec::new();
    for (seed_rows, seed_preds) in per_seed {
        rows.extend(seed_rows);
        predictions.extend(seed_preds);
    }

    let summaries = methods
        .iter()
        .map(|&method| {
            let medians: Vec<Real> = rows
                .iter()
                .filter(|r| r.method == method)
                .filter_map(|r| r.median_error)
                .collect();
            let means: Vec<Real> = rows
                .iter()
                .filter(|r| r.method == method)
                .filter_map(|r| r.mean_error)
                .collect();
            MethodSummary {
                method,
                seeds_completed: medians.len(),
                mean_of_means: (!means.is_empty()).then(|| mean(&means)),
                mean_of_medians: (!medians.is_empty()).then(|| mean(&medians)),
                min_median: medians.iter().copied().reduce(Real::min),
                max_median: medians.iter().copied().reduce(Real::max),
            }
        })
        .collect();

    Ok(ComparisonTable {
        scenario_tag: scenario_tag.to_string(),
        rows,
        summaries,
        predictions,
    })
}

/// One seed of the augmentation ablation.
#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub seed: u64,
    pub median_unaugmented: Option<Real>,
    pub median_augmented: Option<Real>,
    /// `augmented / unaugmented` median error.
    pub ratio: Option<Real>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationTable {
    pub scenario_tag: String,
    pub method: LocalizerKind,
    pub rows: Vec<AblationRow>,
    pub seeds_improved: usize,
    pub mean_relative_improvement: Option<Real>,
}

/// Trains `method` with and without augmentation on otherwise identical data
/// and reports per-seed median errors and their ratio.
pub fn ablate_augmentation(
    scene: &SceneConfig,
    method: LocalizerKind,
    protocol: &Protocol,
    augment: &AugmentConfig,
    seeds: &[u64],
    n_threads: usize,
    scenario_tag: &str,
) -> Result<AblationTable> {
    if !method.is_regression() {
        return Err(Error::domain("augmentation ablation applies to regression methods"));
    }
    if seeds.is_empty() {
        return Err(Error::domain("ablation needs at least 1 seed"));
    }
    let plain = Protocol { augment: None, ..protocol.clone() };
    let augmented = Protocol { augment: Some(augment.clone()), ..protocol.clone() };

    let rows = fan_out_seeds(seeds, n_threads, |seed| {
        let run = |proto: &Protocol| -> Result<Real> {
            let (_, train, test) = build_seed_data(scene, proto, seed)?;
            let mut model = AnyLocalizer::new(method, proto.fit_options(seed))?;
            model.fit(&train)?;
            Ok(evaluate(&model, &test.records, scenario_tag, seed)?.median_error)
        };
        Ok(match (run(&plain), run(&augmented)) {
            (Ok(base), Ok(aug)) => AblationRow {
                seed,
                median_unaugmented: Some(base),
                median_augmented: Some(aug),
                ratio: Some(aug / base),
                failure: None,
            },
            (base, aug) => AblationRow {
                seed,
                median_unaugmented: base.as_ref().ok().copied(),
                median_augmented: aug.as_ref().ok().copied(),
                ratio: None,
                failure: Some(
                    base.err()
                        .or(aug.err())
                        .map(|e| e.to_string())
                        .expect("at least one arm failed"),
                ),
            },
        })
    })?;

    let improvements: Vec<Real> = rows
        .iter()
        .filter_map(|r| r.ratio.map(|ratio| 1.0 - ratio))
        .collect();
    Ok(AblationTable {
        scenario_tag: scenario_tag.to_string(),
        method,
        seeds_improved: rows
            .iter()
            .filter(|r| matches!(r.ratio, Some(ratio) if ratio < 1.0))
            .count(),
        mean_relative_improvement: (!improvements.is_empty()).then(|| mean(&improvements)),
        rows,
    })
}

// ---------------------------------------------------------------------------
// Report writers
// ---------------------------------------------------------------------------

pub fn write_predictions_csv(rows: &[PredictionRow], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "seed,method,true_x,true_y,pred_x,pred_y,error")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.seed,
            r.method.name(),
            r.true_point.x,
            r.true_point.y,
            r.predicted.x,
            r.predicted.y,
            r.error
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cdf_csv(cdf: &[(Real, Real)], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "error,fraction")?;
    for (e, f) in cdf {
        writeln!(w, "{e},{f}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::config(format!("json encoding failed: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn write_comparison_csv(table: &ComparisonTable, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "seed,method,mean_error,median_error,failure")?;
    for r in &table.rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.seed,
            r.method.name(),
            r.mean_error.map_or(String::new(), |v| v.to_string()),
            r.median_error.map_or(String::new(), |v| v.to_string()),
            r.failure.clone().unwrap_or_default()
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ablation_csv(table: &AblationTable, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "seed,median_unaugmented,median_augmented,ratio,failure")?;
    for r in &table.rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.seed,
            r.median_unaugmented.map_or(String::new(), |v| v.to_string()),
            r.median_augmented.map_or(String::new(), |v| v.to_string()),
            r.ratio.map_or(String::new(), |v| v.to_string()),
            r.failure.clone().unwrap_or_default()
        )?;
    }
    w.flush()?;
    Ok(())
}
