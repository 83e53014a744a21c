//! Command-line driver for the csi-loc toolkit.
//!
//! Subcommands: `simulate`, `calibrate`, `augment`, `train`, `predict`,
//! `evaluate`, `compare`, `ablate-augment`. Exit codes: 0 success, 1 usage
//! error, 2 data/parse error, 3 training divergence. Every output artifact
//! gets a JSON manifest (resolved config, inputs, outputs, seed, version,
//! duration) written atomically next to it.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use csi_loc::augment::{augment_dataset, AugmentConfig};
use csi_loc::calibration::calibrate_dataset;
use csi_loc::channel_sim::{self, SceneConfig, SUBCARRIER_BINS};
use csi_loc::config::KeyValueFile;
use csi_loc::csi_data::{read_dataset, write_dataset};
use csi_loc::error::Error;
use csi_loc::eval::{
    ablate_augmentation, compare_methods, evaluate, write_ablation_csv, write_cdf_csv,
    write_comparison_csv, write_json, write_predictions_csv, Protocol,
};
use csi_loc::localizers::{
    load_localizer, save_localizer, AnyLocalizer, FitOptions, Localizer, LocalizerKind, TrunkKind,
};
use csi_loc::nn::{OptimizerKind, TrainConfig};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(name = "csi-loc", version, about = "WiFi CSI fingerprint localization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic CSI dataset at the scene's reference points.
    Simulate(SimulateArgs),
    /// Rewrite a dataset's phases with their calibrated values.
    Calibrate(CalibrateArgs),
    /// Expand a dataset with perturbed samples around each reference point.
    Augment(AugmentArgs),
    /// Train a localizer on a dataset and write a checkpoint.
    Train(TrainArgs),
    /// Predict locations for every record of a dataset.
    Predict(PredictArgs),
    /// Evaluate a checkpoint on a dataset and write report files.
    Evaluate(EvaluateArgs),
    /// Train and score several methods on identical data per seed.
    Compare(ScenarioArgs),
    /// Compare augmented vs unaugmented training for a regression method.
    #[command(name = "ablate-augment")]
    AblateAugment(ScenarioArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scene configuration file (`key = value` lines).
    #[arg(long)]
    scene: PathBuf,
    /// Packets per reference point.
    #[arg(long, default_value_t = 300)]
    packets: usize,
    /// Overrides the scene file's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output dataset path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Input dataset.
    #[arg(long)]
    data: PathBuf,
    /// Output dataset path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AugmentArgs {
    /// Scene configuration file the CSI is synthesized from.
    #[arg(long)]
    scene: PathBuf,
    /// Base dataset.
    #[arg(long)]
    data: PathBuf,
    /// Perturbation disk radius, meters.
    #[arg(long, default_value_t = 0.10)]
    radius: f64,
    /// Synthesized records per reference point.
    #[arg(long, default_value_t = 4)]
    samples_per_rp: usize,
    /// Fine-tuning coefficient recorded for the augmented loss.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Augmentation draw seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// mlp_regression, cnn_regression, classification, or knn.
    #[arg(long)]
    method: String,
    /// Training dataset.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    /// adam or sgd_momentum.
    #[arg(long, default_value = "adam")]
    optimizer: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Neighbor count for the knn method.
    #[arg(long, default_value_t = 3)]
    knn_k: usize,
    /// Trunk for the classification method: mlp or cnn.
    #[arg(long, default_value = "cnn")]
    classifier_trunk: String,
    /// Predict from the first window only instead of averaging.
    #[arg(long)]
    no_window_averaging: bool,
    /// Append calibrated phase to flat features.
    #[arg(long)]
    use_phase: bool,
    /// Fine-tuning coefficient of the augmented training objective.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Output checkpoint path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Localizer checkpoint.
    #[arg(long)]
    model: PathBuf,
    /// Dataset to predict on.
    #[arg(long)]
    data: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Localizer checkpoint.
    #[arg(long)]
    model: PathBuf,
    /// Test dataset.
    #[arg(long)]
    data: PathBuf,
    /// Output report directory.
    #[arg(long)]
    out: PathBuf,
    /// Scenario tag recorded in the report.
    #[arg(long, default_value = "evaluate")]
    tag: String,
    /// Seed recorded in the report rows.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file: scene keys plus protocol keys.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    let started = Instant::now();
    match run(cli, started) {
        Ok(()) => std::process::exit(0),
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                Error::Divergence { .. } => 3,
                _ => 2,
            };
            std::process::exit(code);
        }
    }
}

fn run(cli: Cli, started: Instant) -> csi_loc::Result<()> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args, started),
        Command::Calibrate(args) => cmd_calibrate(args, started),
        Command::Augment(args) => cmd_augment(args, started),
        Command::Train(args) => cmd_train(args, started),
        Command::Predict(args) => cmd_predict(args, started),
        Command::Evaluate(args) => cmd_evaluate(args, started),
        Command::Compare(args) => cmd_compare(args, started),
        Command::AblateAugment(args) => cmd_ablate(args, started),
    }
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

#[derive(serde::Serialize)]
struct RunManifest {
    subcommand: String,
    config: BTreeMap<String, String>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    seed: u64,
    tool_version: String,
    duration_seconds: f64,
}

/// Writes the manifest atomically next to the artifact: `<file>.manifest.json`
/// for file outputs, `<dir>/manifest.json` for directories.
fn write_manifest(
    subcommand: &str,
    config: BTreeMap<String, String>,
    inputs: &[&Path],
    outputs: &[&Path],
    seed: u64,
    started: Instant,
) -> csi_loc::Result<()> {
    let manifest = RunManifest {
        subcommand: subcommand.to_string(),
        config,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        duration_seconds: started.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::config(format!("manifest encoding failed: {e}")))?;
    for output in outputs {
        let path = if output.is_dir() {
            output.join("manifest.json")
        } else {
            let mut name = output.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            output.with_file_name(name)
        };
        let tmp = path.with_extension("json.tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(text.as_bytes())?;
            f.write_all(b"\n")?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, &path)?;
    }
    Ok(())
}

fn scene_config_map(scene: &SceneConfig) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    map.insert("room_width".into(), scene.room_width.to_string());
    map.insert("room_depth".into(), scene.room_depth.to_string());
    map.insert("ap_position".into(), format!("{}, {}", scene.ap_position.x, scene.ap_position.y));
    map.insert(
        "rp_grid_origin".into(),
        format!("{}, {}", scene.rp_grid_origin.x, scene.rp_grid_origin.y),
    );
    map.insert("rp_spacing".into(), scene.rp_spacing.to_string());
    map.insert("rp_rows".into(), scene.rp_rows.to_string());
    map.insert("rp_cols".into(), scene.rp_cols.to_string());
    map.insert("carrier_freq".into(), scene.carrier_freq.to_string());
    map.insert("subcarrier_spacing".into(), scene.subcarrier_spacing.to_string());
    map.insert("n_rx".into(), scene.n_rx.to_string());
    map.insert("n_sc".into(), scene.n_sc.to_string());
    map.insert("antenna_spacing".into(), scene.antenna_spacing.to_string());
    map.insert("wall_reflection_coeff".into(), scene.wall_reflection_coeff.to_string());
    map.insert("noise_std".into(), scene.noise_std.to_string());
    map.insert("sto_max".into(), scene.sto_max.to_string());
    map.insert("seed".into(), scene.seed.to_string());
    map
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_simulate(args: SimulateArgs, started: Instant) -> csi_loc::Result<()> {
    let mut scene = SceneConfig::from_file(&args.scene)?;
    if let Some(seed) = args.seed {
        scene.seed = seed;
    }
    let dataset = channel_sim::generate_dataset(&scene, args.packets, &scene.rp_locations())?;
    write_dataset(&dataset, &args.out)?;
    let mut config = scene_config_map(&scene);
    config.insert("packets".into(), args.packets.to_string());
    write_manifest("simulate", config, &[&args.scene], &[&args.out], scene.seed, started)
}

fn cmd_calibrate(args: CalibrateArgs, started: Instant) -> csi_loc::Result<()> {
    let dataset = read_dataset(&args.data)?;
    let calibrated = calibrate_dataset(&dataset, &SUBCARRIER_BINS)?;
    write_dataset(&calibrated, &args.out)?;
    let mut config = BTreeMap::new();
    config.insert("fft_bins".into(), format!("{SUBCARRIER_BINS:?}"));
    write_manifest("calibrate", config, &[&args.data], &[&args.out], 0, started)
}

fn cmd_augment(args: AugmentArgs, started: Instant) -> csi_loc::Result<()> {
    let scene = SceneConfig::from_file(&args.scene)?;
    let base = read_dataset(&args.data)?;
    let config = AugmentConfig {
        perturbation_radius: args.radius,
        samples_per_rp: args.samples_per_rp,
        alpha: args.alpha,
        seed: args.seed,
    };
    let augmented = augment_dataset(&scene, &base, &config)?;
    write_dataset(&augmented, &args.out)?;
    let mut map = scene_config_map(&scene);
    map.insert("perturbation_radius".into(), args.radius.to_string());
    map.insert("samples_per_rp".into(), args.samples_per_rp.to_string());
    map.insert("alpha".into(), args.alpha.to_string());
    map.insert("augment_seed".into(), args.seed.to_string());
    write_manifest(
        "augment",
        map,
        &[&args.scene, &args.data],
        &[&args.out],
        args.seed,
        started,
    )
}

fn parse_optimizer(name: &str) -> csi_loc::Result<OptimizerKind> {
    match name {
        "adam" => Ok(OptimizerKind::adam()),
        "sgd_momentum" => Ok(OptimizerKind::sgd_momentum()),
        other => Err(Error::config(format!(
            "unknown optimizer `{other}` (expected adam or sgd_momentum)"
        ))),
    }
}

fn parse_trunk(name: &str) -> csi_loc::Result<TrunkKind> {
    match name {
        "mlp" => Ok(TrunkKind::Mlp),
        "cnn" => Ok(TrunkKind::Cnn),
        other => Err(Error::config(format!(
            "unknown classifier trunk `{other}` (expected mlp or cnn)"
        ))),
    }
}

fn cmd_train(args: TrainArgs, started: Instant) -> csi_loc::Result<()> {
    let method = LocalizerKind::from_name(&args.method)?;
    let dataset = read_dataset(&args.data)?;
    let options = FitOptions {
        train: TrainConfig {
            optimizer: parse_optimizer(&args.optimizer)?,
            learning_rate: args.learning_rate,
            batch_size: args.batch_size,
            epochs: args.epochs,
            seed: args.seed,
            dropout_active: true,
        },
        window_averaging: !args.no_window_averaging,
        use_phase: args.use_phase,
        knn_k: args.knn_k,
        classifier_trunk: parse_trunk(&args.classifier_trunk)?,
        alpha: args.alpha,
    };
    let mut model = AnyLocalizer::new(method, options)?;
    model.fit(&dataset)?;
    save_localizer(&model, &args.out)?;

    let mut config = BTreeMap::new();
    config.insert("method".into(), args.method.clone());
    config.insert("epochs".into(), args.epochs.to_string());
    config.insert("batch_size".into(), args.batch_size.to_string());
    config.insert("learning_rate".into(), args.learning_rate.to_string());
    config.insert("optimizer".into(), args.optimizer.clone());
    config.insert("knn_k".into(), args.knn_k.to_string());
    config.insert("classifier_trunk".into(), args.classifier_trunk.clone());
    config.insert("window_averaging".into(), (!args.no_window_averaging).to_string());
    config.insert("use_phase".into(), args.use_phase.to_string());
    config.insert("alpha".into(), args.alpha.to_string());
    if let Some(last) = model.loss_history().last() {
        config.insert("final_epoch_loss".into(), last.to_string());
    }
    write_manifest("train", config, &[&args.data], &[&args.out], args.seed, started)
}

fn cmd_predict(args: PredictArgs, started: Instant) -> csi_loc::Result<()> {
    let model = load_localizer(&args.model)?;
    let dataset = read_dataset(&args.data)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(&args.out)?);
    writeln!(w, "record_index,true_x,true_y,pred_x,pred_y,error")?;
    for (k, rec) in dataset.records.iter().enumerate() {
        let pred = model.predict_record(rec)?;
        let error = pred.distance(rec.location);
        writeln!(
            w,
            "{k},{},{},{},{},{error}",
            rec.location.x, rec.location.y, pred.x, pred.y
        )?;
    }
    w.flush()?;
    drop(w);
    let mut config = BTreeMap::new();
    config.insert("method".into(), model.kind().name().to_string());
    write_manifest("predict", config, &[&args.model, &args.data], &[&args.out], 0, started)
}

fn cmd_evaluate(args: EvaluateArgs, started: Instant) -> csi_loc::Result<()> {
    let model = load_localizer(&args.model)?;
    let dataset = read_dataset(&args.data)?;
    std::fs::create_dir_all(&args.out)?;
    let report = evaluate(&model, &dataset.records, &args.tag, args.seed)?;
    write_predictions_csv(&report.rows, &args.out.join("report.csv"))?;
    write_cdf_csv(&report.cdf, &args.out.join("cdf.csv"))?;
    write_json(&report, &args.out.join("summary.json"))?;
    let mut config = BTreeMap::new();
    config.insert("method".into(), model.kind().name().to_string());
    config.insert("tag".into(), args.tag.clone());
    config.insert("mean_error".into(), report.mean_error.to_string());
    config.insert("median_error".into(), report.median_error.to_string());
    write_manifest(
        "evaluate",
        config,
        &[&args.model, &args.data],
        &[&args.out],
        args.seed,
        started,
    )
}

// ---------------------------------------------------------------------------
// Scenario files (compare / ablate-augment)
// ---------------------------------------------------------------------------

struct Scenario {
    scene: SceneConfig,
    protocol: Protocol,
    methods: Vec<LocalizerKind>,
    ablate_method: LocalizerKind,
    augment: AugmentConfig,
    seeds: Vec<u64>,
    tag: String,
    echo: BTreeMap<String, String>,
}

fn load_scenario(path: &Path) -> csi_loc::Result<Scenario> {
    let kv = KeyValueFile::load(path)?;
    let scene = SceneConfig::from_key_values(&kv)?;

    let augment = AugmentConfig {
        perturbation_radius: kv.f64_or("augment_radius", 0.10)?,
        samples_per_rp: kv.usize_or("augment_samples_per_rp", 4)?,
        alpha: kv.f64_or("augment_alpha", 0.0)?,
        seed: kv.u64_or("augment_seed", 0)?,
    };
    let apply_augment = kv.bool_or("augment", false)?;
    let protocol = Protocol {
        train_packets_per_location: kv.usize_or("train_packets_per_location", 240)?,
        test_packets_per_point: kv.usize_or("test_packets_per_point", 60)?,
        include_midpoints: kv.bool_or("include_midpoints", true)?,
        include_rp_test_points: kv.bool_or("include_rp_test_points", false)?,
        n_random_test_points: kv.usize_or("n_random_test_points", 8)?,
        epochs: kv.usize_or("epochs", 30)?,
        batch_size: kv.usize_or("batch_size", 32)?,
        learning_rate: kv.f64_or("learning_rate", 1e-3)?,
        optimizer: parse_optimizer(kv.str_opt("optimizer").unwrap_or_else(|| "adam".into()).as_str())?,
        knn_k: kv.usize_or("knn_k", 3)?,
        window_averaging: kv.bool_or("window_averaging", true)?,
        use_phase: kv.bool_or("use_phase", false)?,
        classifier_trunk: parse_trunk(kv.str_opt("classifier_trunk").unwrap_or_else(|| "cnn".into()).as_str())?,
        augment: apply_augment.then(|| augment.clone()),
    };
    let methods = kv
        .str_list("methods")?
        .unwrap_or_else(|| vec!["cnn_regression".into(), "classification".into(), "knn".into()])
        .iter()
        .map(|name| LocalizerKind::from_name(name))
        .collect::<csi_loc::Result<Vec<_>>>()?;
    let ablate_method = LocalizerKind::from_name(
        kv.str_opt("method").unwrap_or_else(|| "mlp_regression".into()).as_str(),
    )?;
    let seeds = kv.u64_list("seeds")?.unwrap_or_else(|| vec![1, 2, 3, 4, 5]);
    let tag = kv.str_opt("tag").unwrap_or_else(|| "scenario".into());
    kv.reject_unknown_keys()?;
    Ok(Scenario {
        scene,
        protocol,
        methods,
        ablate_method,
        augment,
        seeds,
        tag,
        echo: kv.entries(),
    })
}

fn worker_threads() -> csi_loc::Result<usize> {
    match std::env::var("CSI_LOC_THREADS") {
        Ok(v) => v
            .parse::<usize>()
            .map_err(|_| Error::config(format!("CSI_LOC_THREADS=`{v}` is not an integer")))
            .map(|n| n.max(1)),
        Err(_) => Ok(1),
    }
}

fn cmd_compare(args: ScenarioArgs, started: Instant) -> csi_loc::Result<()> {
    let scenario = load_scenario(&args.scenario)?;
    std::fs::create_dir_all(&args.out)?;
    let table = compare_methods(
        &scenario.scene,
        &scenario.methods,
        &scenario.protocol,
        &scenario.seeds,
        worker_threads()?,
        &scenario.tag,
    )?;
    write_comparison_csv(&table, &args.out.join("comparison.csv"))?;
    write_json(&table, &args.out.join("comparison.json"))?;
    write_predictions_csv(&table.predictions, &args.out.join("predictions.csv"))?;
    write_manifest(
        "compare",
        scenario.echo,
        &[&args.scenario],
        &[&args.out],
        *scenario.seeds.first().unwrap_or(&0),
        started,
    )
}

fn cmd_ablate(args: ScenarioArgs, started: Instant) -> csi_loc::Result<()> {
    let scenario = load_scenario(&args.scenario)?;
    std::fs::create_dir_all(&args.out)?;
    let table = ablate_augmentation(
        &scenario.scene,
        scenario.ablate_method,
        &scenario.protocol,
        &scenario.augment,
        &scenario.seeds,
        worker_threads()?,
        &scenario.tag,
    )?;
    write_ablation_csv(&table, &args.out.join("ablation.csv"))?;
    write_json(&table, &args.out.join("ablation.json"))?;
    write_manifest(
        "ablate-augment",
        scenario.echo,
        &[&args.scenario],
        &[&args.out],
        *scenario.seeds.first().unwrap_or(&0),
        started,
    )
}
