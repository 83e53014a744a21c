//! The four localization methods behind one `fit`/`predict` interface:
//! MLP and CNN coordinate regressors trained on the mean-distance loss, a
//! softmax classification baseline whose class probabilities are fused into
//! coordinates against the reference-point codebook, and a KNN baseline over
//! per-RP mean amplitude fingerprints.
//!
//! Regressors predict meters in the scene frame directly. Labels are
//! standardized internally (zero mean, one isotropic scale) during training
//! and de-standardized at prediction; the transform travels with the
//! checkpoint.

use crate::byteio::{write_f64, write_u32, CountingReader};
use crate::calibration::calibrate_phase;
use crate::channel_sim::SUBCARRIER_BINS;
use crate::csi_data::{
    assemble_block, assemble_flat, to_polar, Dataset, FeatureLayout, FeatureTensor,
    FingerprintRecord, BLOCK_PACKETS,
};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::nn::{
    train, Affine, Conv2d, Layer, LossKind, Network, TrainConfig, TrainSet, TrainTargets,
};
use crate::Real;
use std::io::Write;
use std::path::Path;

/// Method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalizerKind {
    MlpRegression,
    CnnRegression,
    Classification,
    Knn,
}

impl LocalizerKind {
    pub fn name(self) -> &'static str {
        match self {
            LocalizerKind::MlpRegression => "mlp_regression",
            LocalizerKind::CnnRegression => "cnn_regression",
            LocalizerKind::Classification => "classification",
            LocalizerKind::Knn => "knn",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "mlp_regression" => Ok(LocalizerKind::MlpRegression),
            "cnn_regression" => Ok(LocalizerKind::CnnRegression),
            "classification" => Ok(LocalizerKind::Classification),
            "knn" => Ok(LocalizerKind::Knn),
            other => Err(Error::config(format!(
                "unknown method `{other}` (expected mlp_regression, cnn_regression, classification, or knn)"
            ))),
        }
    }

    pub fn is_regression(self) -> bool {
        matches!(self, LocalizerKind::MlpRegression | LocalizerKind::CnnRegression)
    }
}

/// Trunk architecture for the classification head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrunkKind {
    Mlp,
    Cnn,
}

/// Ordered reference-point coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RpCodebook {
    pub rp_locations: Vec<Point2>,
}

impl RpCodebook {
    pub fn new(rp_locations: Vec<Point2>) -> Result<Self> {
        if rp_locations.is_empty() {
            return Err(Error::domain("codebook must be non-empty"));
        }
        for i in 0..rp_locations.len() {
            for j in i + 1..rp_locations.len() {
                if rp_locations[i] == rp_locations[j] {
                    return Err(Error::domain(format!(
                        "duplicate reference point ({}, {})",
                        rp_locations[i].x, rp_locations[i].y
                    )));
                }
            }
        }
        Ok(RpCodebook { rp_locations })
    }

    /// Distinct label locations in first-appearance order.
    pub fn from_records(records: &[FingerprintRecord]) -> Result<Self> {
        let mut locations: Vec<Point2> = Vec::new();
        for rec in records {
            if !locations.contains(&rec.label_location) {
                locations.push(rec.label_location);
            }
        }
        RpCodebook::new(locations)
    }

    pub fn len(&self) -> usize {
        self.rp_locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rp_locations.is_empty()
    }

    pub fn index_of(&self, p: Point2) -> Option<usize> {
        self.rp_locations.iter().position(|&rp| rp == p)
    }

    /// Probability-weighted coordinate fusion `sum_i p_i * rp_i`.
    pub fn fuse(&self, probabilities: &[Real]) -> Result<Point2> {
        if probabilities.len() != self.len() {
            return Err(Error::shape(format!(
                "{} probabilities for {} reference points",
                probabilities.len(),
                self.len()
            )));
        }
        let mut x = 0.0;
        let mut y = 0.0;
        for (p, rp) in probabilities.iter().zip(self.rp_locations.iter()) {
            x += p * rp.x;
            y += p * rp.y;
        }
        Ok(Point2::new(x, y))
    }
}

// ---------------------------------------------------------------------------
// Architectures
// ---------------------------------------------------------------------------

const DEFAULT_INIT_SEED: u64 = 0;
const DROPOUT_RATE: f64 = 0.3;

/// 90 -> FC 256 + ReLU (x3) -> FC 256 + ReLU + Dropout 0.3 -> FC 2 linear.
pub fn build_mlp_regressor<S: crate::Scalar>() -> Network<S> {
    let mut net = Network::new(
        vec![90],
        vec![
            Layer::FullyConnected(Affine::zeros(90, 256)),
            Layer::Relu,
            Layer::FullyConnected(Affine::zeros(256, 256)),
            Layer::Relu,
            Layer::FullyConnected(Affine::zeros(256, 256)),
            Layer::Relu,
            Layer::FullyConnected(Affine::zeros(256, 256)),
            Layer::Relu,
            Layer::Dropout { rate: DROPOUT_RATE },
            Layer::LinearOutput(Affine::zeros(256, 2)),
        ],
    )
    .expect("mlp architecture is well-formed");
    net.initialize(DEFAULT_INIT_SEED);
    net
}

/// 3x30x30 -> Conv 16x3x3 + ReLU (x2) -> Conv 16x3x3 + ReLU + MaxPool ->
/// FC 64 + ReLU + Dropout 0.3 -> FC 2 linear.
pub fn build_cnn_regressor<S: crate::Scalar>() -> Network<S> {
    let mut net = Network::new(
        vec![3, 30, 30],
        vec![
            Layer::Conv2d(Conv2d::zeros(3, 16, 3, 3)),
            Layer::Relu,
            Layer::Conv2d(Conv2d::zeros(16, 16, 3, 3)),
            Layer::Relu,
            Layer::Conv2d(Conv2d::zeros(16, 16, 3, 3)),
            Layer::Relu,
            Layer::MaxPool2,
            Layer::FullyConnected(Affine::zeros(16 * 15 * 15, 64)),
            Layer::Relu,
            Layer::Dropout { rate: DROPOUT_RATE },
            Layer::LinearOutput(Affine::zeros(64, 2)),
        ],
    )
    .expect("cnn architecture is well-formed");
    net.initialize(DEFAULT_INIT_SEED);
    net
}

/// Regressor trunk with the head swapped for `FC -> n_classes` plus softmax.
pub fn build_classifier<S: crate::Scalar>(trunk: TrunkKind, codebook: &RpCodebook) -> Result<Network<S>> {
    if codebook.len() < 2 {
        return Err(Error::domain("classifier needs at least 2 reference points"));
    }
    let base = match trunk {
        TrunkKind::Mlp => build_mlp_regressor::<S>(),
        TrunkKind::Cnn => build_cnn_regressor::<S>(),
    };
    let mut layers = base.layers;
    let head_width = match layers.pop() {
        Some(Layer::LinearOutput(a)) => a.fan_in,
        _ => unreachable!("regressor trunks end with a linear head"),
    };
    layers.push(Layer::LinearOutput(Affine::zeros(head_width, codebook.len())));
    layers.push(Layer::SoftmaxOutput);
    let mut net = Network::new(base.input_shape, layers)?;
    net.initialize(DEFAULT_INIT_SEED);
    Ok(net)
}

// ---------------------------------------------------------------------------
// Feature extraction
// ---------------------------------------------------------------------------

/// Per-packet flat features for a record. With `use_phase`, phases are
/// calibrated first and appended after the amplitudes.
pub fn record_flat_features(record: &FingerprintRecord, use_phase: bool) -> Result<Vec<FeatureTensor<Real>>> {
    record
        .symbols
        .iter()
        .map(|sym| {
            let mut polar = to_polar::<Real>(sym);
            if use_phase {
                polar.phase = calibrate_phase(&polar, &SUBCARRIER_BINS)?.calibrated_phase;
            }
            assemble_flat(&polar, use_phase)
        })
        .collect()
}

/// Disjoint 30-packet amplitude blocks for a record.
pub fn record_block_features(record: &FingerprintRecord) -> Result<Vec<FeatureTensor<Real>>> {
    let n_windows = record.symbols.len() / BLOCK_PACKETS;
    if n_windows == 0 {
        return Err(Error::domain(format!(
            "record has {} packets; block features need at least {BLOCK_PACKETS}",
            record.symbols.len()
        )));
    }
    (0..n_windows)
        .map(|w| {
            let polars: Vec<_> = record.symbols[w * BLOCK_PACKETS..(w + 1) * BLOCK_PACKETS]
                .iter()
                .map(to_polar::<Real>)
                .collect();
            assemble_block(&polars)
        })
        .collect()
}

/// Mean flat amplitude feature over all packets of a record.
pub fn record_mean_flat_feature(record: &FingerprintRecord) -> Result<Vec<Real>> {
    let features = record_flat_features(record, false)?;
    let dim = features[0].values.len();
    let mut mean = vec![0.0; dim];
    for f in &features {
        for (m, v) in mean.iter_mut().zip(f.values.iter()) {
            *m += v;
        }
    }
    let n = features.len() as Real;
    for m in &mut mean {
        *m /= n;
    }
    Ok(mean)
}

fn features_for(kind: LocalizerKind, trunk: TrunkKind, record: &FingerprintRecord, use_phase: bool) -> Result<Vec<FeatureTensor<Real>>> {
    let flat_like = match kind {
        LocalizerKind::MlpRegression => true,
        LocalizerKind::CnnRegression => false,
        LocalizerKind::Classification => trunk == TrunkKind::Mlp,
        LocalizerKind::Knn => true,
    };
    if flat_like {
        record_flat_features(record, use_phase)
    } else {
        record_block_features(record)
    }
}

// ---------------------------------------------------------------------------
// Shared interface
// ---------------------------------------------------------------------------

/// Fit/predict options shared by all methods.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub train: TrainConfig,
    /// Average per-window predictions over a burst at test time.
    pub window_averaging: bool,
    /// Append calibrated phase to flat features (180-value layout).
    pub use_phase: bool,
    /// Neighbor count for the KNN baseline.
    pub knn_k: usize,
    /// Trunk architecture for the classification baseline.
    pub classifier_trunk: TrunkKind,
    /// Fine-tuning coefficient of the augmented training objective; zero
    /// reproduces the plain mean-distance loss.
    pub alpha: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            train: TrainConfig::default(),
            window_averaging: true,
            use_phase: false,
            knn_k: 3,
            classifier_trunk: TrunkKind::Cnn,
            alpha: 0.0,
        }
    }
}

/// Common interface: fit on a labeled dataset, predict a 2-D point.
pub trait Localizer {
    fn kind(&self) -> LocalizerKind;
    fn fit(&mut self, dataset: &Dataset) -> Result<()>;
    /// Predicts from an already-assembled window list.
    fn predict_features(&self, windows: &[FeatureTensor<Real>]) -> Result<Point2>;
    /// Predicts from a raw record, assembling this method's feature layout.
    fn predict_record(&self, record: &FingerprintRecord) -> Result<Point2>;
}

/// Affine label transform stored with regression checkpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LabelTransform {
    mean_x: Real,
    mean_y: Real,
    scale: Real,
}

impl LabelTransform {
    fn identity() -> Self {
        LabelTransform { mean_x: 0.0, mean_y: 0.0, scale: 1.0 }
    }

    fn fit(labels: &[Point2]) -> Self {
        let n = labels.len() as Real;
        let mean_x = labels.iter().map(|p| p.x).sum::<Real>() / n;
        let mean_y = labels.iter().map(|p| p.y).sum::<Real>() / n;
        let var_x = labels.iter().map(|p| (p.x - mean_x).powi(2)).sum::<Real>() / n;
        let var_y = labels.iter().map(|p| (p.y - mean_y).powi(2)).sum::<Real>() / n;
        // One isotropic scale keeps the standardized loss proportional to
        // metric distance.
        let scale = var_x.max(var_y).sqrt().max(1e-9);
        LabelTransform { mean_x, mean_y, scale }
    }

    fn standardize(&self, p: Point2) -> [Real; 2] {
        [(p.x - self.mean_x) / self.scale, (p.y - self.mean_y) / self.scale]
    }

    fn restore(&self, out: &[Real]) -> Point2 {
        Point2::new(out[0] * self.scale + self.mean_x, out[1] * self.scale + self.mean_y)
    }
}

/// Network-backed localizer: the two regressors and the classifier baseline.
#[derive(Debug, Clone)]
pub struct NetLocalizer {
    kind: LocalizerKind,
    options: FitOptions,
    network: Option<Network<Real>>,
    codebook: Option<RpCodebook>,
    label_transform: LabelTransform,
    /// Mean per-epoch loss from the last fit.
    pub loss_history: Vec<Real>,
}

impl NetLocalizer {
    pub fn new(kind: LocalizerKind, options: FitOptions) -> Result<Self> {
        if kind == LocalizerKind::Knn {
            return Err(Error::config("use KnnLocalizer for the knn method"));
        }
        Ok(NetLocalizer {
            kind,
            options,
            network: None,
            codebook: None,
            label_transform: LabelTransform::identity(),
            loss_history: Vec::new(),
        })
    }

    pub fn network(&self) -> Option<&Network<Real>> {
        self.network.as_ref()
    }

    pub fn codebook(&self) -> Option<&RpCodebook> {
        self.codebook.as_ref()
    }

    fn feature_layout(&self) -> FeatureLayout {
        let flat_like = match self.kind {
            LocalizerKind::MlpRegression => true,
            LocalizerKind::CnnRegression => false,
            LocalizerKind::Classification => self.options.classifier_trunk == TrunkKind::Mlp,
            LocalizerKind::Knn => unreachable!(),
        };
        match (flat_like, self.options.use_phase) {
            (true, false) => FeatureLayout::Flat90,
            (true, true) => FeatureLayout::Flat180,
            (false, _) => FeatureLayout::Block3x30x30,
        }
    }

    fn sample_shape(&self) -> Vec<usize> {
        match self.feature_layout() {
            FeatureLayout::Flat90 => vec![90],
            FeatureLayout::Flat180 => vec![180],
            FeatureLayout::Block3x30x30 => vec![3, 30, 30],
        }
    }

    fn build_network(&self, codebook: Option<&RpCodebook>) -> Result<Network<Real>> {
        let mut net = match self.kind {
            LocalizerKind::MlpRegression => build_mlp_regressor(),
            LocalizerKind::CnnRegression => build_cnn_regressor(),
            LocalizerKind::Classification => build_classifier(
                self.options.classifier_trunk,
                codebook.ok_or_else(|| Error::domain("classifier requires a codebook"))?,
            )?,
            LocalizerKind::Knn => unreachable!(),
        };
        // Flat input widening for the phase-augmented layout.
        if self.feature_layout() == FeatureLayout::Flat180 {
            let (fan_out, rest) = match &net.layers[0] {
                Layer::FullyConnected(a) => (a.fan_out, net.layers[1..].to_vec()),
                _ => unreachable!("flat trunks start fully connected"),
            };
            let mut layers = vec![Layer::FullyConnected(Affine::zeros(180, fan_out))];
            layers.extend(rest);
            net = Network::new(vec![180], layers)?;
        }
        net.initialize(self.options.train.seed);
        Ok(net)
    }
}

impl Localizer for NetLocalizer {
    fn kind(&self) -> LocalizerKind {
        self.kind
    }

    fn fit(&mut self, dataset: &Dataset) -> Result<()> {
        if dataset.records.is_empty() {
            return Err(Error::domain("training dataset is empty"));
        }
        let codebook = RpCodebook::from_records(&dataset.records)?;
        let mut inputs: Vec<Vec<Real>> = Vec::new();
        let mut label_points: Vec<Point2> = Vec::new();
        let mut deltas: Vec<Real> = Vec::new();
        let mut classes: Vec<usize> = Vec::new();
        for rec in &dataset.records {
            let windows = features_for(self.kind, self.options.classifier_trunk, rec, self.options.use_phase)?;
            let class = codebook.index_of(rec.label_location);
            for w in windows {
                inputs.push(w.values);
                label_points.push(rec.label_location);
                deltas.push(rec.location.distance(rec.label_location));
                if self.kind == LocalizerKind::Classification {
                    classes.push(class.expect("label is in the codebook by construction"));
                }
            }
        }

        let network = match self.kind {
            LocalizerKind::Classification => {
                let mut net = self.build_network(Some(&codebook))?;
                let set = TrainSet {
                    sample_shape: self.sample_shape(),
                    inputs,
                    targets: TrainTargets::Classes(classes),
                };
                self.loss_history = train(&mut net, &set, LossKind::CrossEntropy, &self.options.train)?;
                self.codebook = Some(codebook);
                self.label_transform = LabelTransform::identity();
                net
            }
            _ => {
                let transform = LabelTransform::fit(&label_points);
                let labels: Vec<Vec<Real>> = label_points
                    .iter()
                    .map(|&p| transform.standardize(p).to_vec())
                    .collect();
                // Deltas feed the alpha term in the same standardized units
                // as the distance loss.
                let deltas: Vec<Real> = deltas.iter().map(|d| d / transform.scale).collect();
                let mut net = self.build_network(None)?;
                let set = TrainSet {
                    sample_shape: self.sample_shape(),
                    inputs,
                    targets: TrainTargets::Coords { labels, deltas },
                };
                let loss = LossKind::AugmentedMeanDistance { alpha: self.options.alpha };
                self.loss_history = train(&mut net, &set, loss, &self.options.train)?;
                self.label_transform = transform;
                self.codebook = None;
                net
            }
        };
        self.network = Some(network);
        Ok(())
    }

    fn predict_features(&self, windows: &[FeatureTensor<Real>]) -> Result<Point2> {
        let network = self
            .network
            .as_ref()
            .ok_or_else(|| Error::NotFitted(self.kind.name().to_string()))?;
        if windows.is_empty() {
            return Err(Error::domain("no feature windows to predict from"));
        }
        let used: &[FeatureTensor<Real>] =
            if self.options.window_averaging { windows } else { &windows[..1] };
        let sample_shape = self.sample_shape();
        let rows: Vec<&[Real]> = used.iter().map(|f| f.values.as_slice()).collect();
        let batch = crate::Tensor::from_samples(&sample_shape, &rows)?;
        let out = network.forward(&batch)?;
        if !out.all_finite() {
            return Err(Error::domain("model produced a non-finite output"));
        }
        let dim = out.sample_len();
        let n = out.batch() as Real;
        match self.kind {
            LocalizerKind::Classification => {
                let codebook = self.codebook.as_ref().expect("fitted classifier has a codebook");
                // Fuse each window's probabilities, then average the fused
                // coordinates.
                let mut x = 0.0;
                let mut y = 0.0;
                for b in 0..out.batch() {
                    let fused = codebook.fuse(&out.values[b * dim..(b + 1) * dim])?;
                    x += fused.x;
                    y += fused.y;
                }
                Ok(Point2::new(x / n, y / n))
            }
            _ => {
                let mut mean = [0.0; 2];
                for b in 0..out.batch() {
                    mean[0] += out.values[b * dim];
                    mean[1] += out.values[b * dim + 1];
                }
                mean[0] /= n;
                mean[1] /= n;
                Ok(self.label_transform.restore(&mean))
            }
        }
    }

    fn predict_record(&self, record: &FingerprintRecord) -> Result<Point2> {
        let windows = features_for(self.kind, self.options.classifier_trunk, record, self.options.use_phase)?;
        self.predict_features(&windows)
    }
}

/// KNN baseline over per-RP mean amplitude fingerprints.
#[derive(Debug, Clone)]
pub struct KnnLocalizer {
    options: FitOptions,
    index: Option<KnnIndex>,
}

/// Fitted KNN index: one mean fingerprint per reference point.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnIndex {
    pub codebook: RpCodebook,
    pub feature_dim: usize,
    /// Row-major `[n_rp x feature_dim]` mean fingerprints.
    pub fingerprints: Vec<Real>,
}

impl KnnIndex {
    /// Builds the index: records are grouped by label location and their
    /// flat amplitude features averaged per group.
    pub fn fit(records: &[FingerprintRecord]) -> Result<Self> {
        let codebook = RpCodebook::from_records(records)?;
        let first_feature = record_mean_flat_feature(&records[0])?;
        let feature_dim = first_feature.len();
        let mut sums = vec![0.0; codebook.len() * feature_dim];
        let mut counts = vec![0usize; codebook.len()];
        for rec in records {
            let idx = codebook.index_of(rec.label_location).expect("codebook covers all labels");
            let mean = record_mean_flat_feature(rec)?;
            if mean.len() != feature_dim {
                return Err(Error::shape("records have mixed feature dimensions"));
            }
            for (s, v) in sums[idx * feature_dim..(idx + 1) * feature_dim].iter_mut().zip(mean.iter()) {
                *s += v;
            }
            counts[idx] += 1;
        }
        for (idx, &count) in counts.iter().enumerate() {
            for s in &mut sums[idx * feature_dim..(idx + 1) * feature_dim] {
                *s /= count as Real;
            }
        }
        Ok(KnnIndex { codebook, feature_dim, fingerprints: sums })
    }

    /// Unweighted mean of the k nearest RP coordinates in flat
    /// amplitude-feature space; distance ties break toward the lower RP
    /// index.
    pub fn query(&self, features: &[Real], k: usize) -> Result<Point2> {
        if k == 0 || k > self.codebook.len() {
            return Err(Error::domain(format!(
                "k = {k} out of range 1..={}",
                self.codebook.len()
            )));
        }
        if features.len() != self.feature_dim {
            return Err(Error::shape(format!(
                "query has {} features, index stores {}",
                features.len(),
                self.feature_dim
            )));
        }
        let mut scored: Vec<(Real, usize)> = (0..self.codebook.len())
            .map(|idx| {
                let fp = &self.fingerprints[idx * self.feature_dim..(idx + 1) * self.feature_dim];
                let d2 = fp
                    .iter()
                    .zip(features.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<Real>();
                (d2, idx)
            })
            .collect();
        scored.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        let mut x = 0.0;
        let mut y = 0.0;
        for &(_, idx) in scored.iter().take(k) {
            let rp = self.codebook.rp_locations[idx];
            x += rp.x;
            y += rp.y;
        }
        Ok(Point2::new(x / k as Real, y / k as Real))
    }
}

impl KnnLocalizer {
    pub fn new(options: FitOptions) -> Self {
        KnnLocalizer { options, index: None }
    }

    pub fn index(&self) -> Option<&KnnIndex> {
        self.index.as_ref()
    }
}

impl Localizer for KnnLocalizer {
    fn kind(&self) -> LocalizerKind {
        LocalizerKind::Knn
    }

    fn fit(&mut self, dataset: &Dataset) -> Result<()> {
        let index = KnnIndex::fit(&dataset.records)?;
        if self.options.knn_k == 0 || self.options.knn_k > index.codebook.len() {
            return Err(Error::domain(format!(
                "k = {} out of range 1..={}",
                self.options.knn_k,
                index.codebook.len()
            )));
        }
        self.index = Some(index);
        Ok(())
    }

    fn predict_features(&self, windows: &[FeatureTensor<Real>]) -> Result<Point2> {
        let index = self
            .index
            .as_ref()
            .ok_or_else(|| Error::NotFitted("knn".to_string()))?;
        if windows.is_empty() {
            return Err(Error::domain("no feature windows to predict from"));
        }
        // Mean feature over the burst is the query fingerprint.
        let dim = windows[0].values.len();
        let mut mean = vec![0.0; dim];
        for w in windows {
            for (m, v) in mean.iter_mut().zip(w.values.iter()) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= windows.len() as Real;
        }
        index.query(&mean, self.options.knn_k)
    }

    fn predict_record(&self, record: &FingerprintRecord) -> Result<Point2> {
        let index = self
            .index
            .as_ref()
            .ok_or_else(|| Error::NotFitted("knn".to_string()))?;
        index.query(&record_mean_flat_feature(record)?, self.options.knn_k)
    }
}

/// Any of the four methods, for checkpointing and CLI dispatch.
#[derive(Debug, Clone)]
pub enum AnyLocalizer {
    Net(NetLocalizer),
    Knn(KnnLocalizer),
}

impl AnyLocalizer {
    pub fn new(kind: LocalizerKind, options: FitOptions) -> Result<Self> {
        Ok(match kind {
            LocalizerKind::Knn => AnyLocalizer::Knn(KnnLocalizer::new(options)),
            _ => AnyLocalizer::Net(NetLocalizer::new(kind, options)?),
        })
    }

    pub fn loss_history(&self) -> &[Real] {
        match self {
            AnyLocalizer::Net(n) => &n.loss_history,
            AnyLocalizer::Knn(_) => &[],
        }
    }
}

impl Localizer for AnyLocalizer {
    fn kind(&self) -> LocalizerKind {
        match self {
            AnyLocalizer::Net(n) => n.kind(),
            AnyLocalizer::Knn(k) => k.kind(),
        }
    }

    fn fit(&mut self, dataset: &Dataset) -> Result<()> {
        match self {
            AnyLocalizer::Net(n) => n.fit(dataset),
            AnyLocalizer::Knn(k) => k.fit(dataset),
        }
    }

    fn predict_features(&self, windows: &[FeatureTensor<Real>]) -> Result<Point2> {
        match self {
            AnyLocalizer::Net(n) => n.predict_features(windows),
            AnyLocalizer::Knn(k) => k.predict_features(windows),
        }
    }

    fn predict_record(&self, record: &FingerprintRecord) -> Result<Point2> {
        match self {
            AnyLocalizer::Net(n) => n.predict_record(record),
            AnyLocalizer::Knn(k) => k.predict_record(record),
        }
    }
}

// ---------------------------------------------------------------------------
// Localizer checkpoints: network block, then a "LOC1" extension carrying the
// method tag, feature layout, prediction options, label transform, codebook,
// and (for KNN) the fingerprint table.
// ---------------------------------------------------------------------------

const LOCALIZER_MAGIC: &[u8; 4] = b"LOC1";

fn kind_tag(kind: LocalizerKind) -> u8 {
    match kind {
        LocalizerKind::MlpRegression => 0,
        LocalizerKind::CnnRegression => 1,
        LocalizerKind::Classification => 2,
        LocalizerKind::Knn => 3,
    }
}

fn kind_from_tag(tag: u8) -> Result<LocalizerKind> {
    Ok(match tag {
        0 => LocalizerKind::MlpRegression,
        1 => LocalizerKind::CnnRegression,
        2 => LocalizerKind::Classification,
        3 => LocalizerKind::Knn,
        other => return Err(Error::parse(0, format!("unknown localizer tag {other}"))),
    })
}

fn layout_tag(layout: FeatureLayout) -> u8 {
    match layout {
        FeatureLayout::Flat90 => 0,
        FeatureLayout::Flat180 => 1,
        FeatureLayout::Block3x30x30 => 2,
    }
}

pub fn save_localizer(localizer: &AnyLocalizer, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    match localizer {
        AnyLocalizer::Net(n) => {
            let network = n
                .network
                .as_ref()
                .ok_or_else(|| Error::NotFitted("cannot save an unfitted model".to_string()))?;
            crate::nn::checkpoint::write_network(network, &mut w)?;
            w.write_all(LOCALIZER_MAGIC)?;
            w.write_all(&[
                kind_tag(n.kind),
                layout_tag(n.feature_layout()),
                n.options.window_averaging as u8,
                (n.options.classifier_trunk == TrunkKind::Cnn) as u8,
            ])?;
            write_f64(&mut w, n.label_transform.mean_x)?;
            write_f64(&mut w, n.label_transform.mean_y)?;
            write_f64(&mut w, n.label_transform.scale)?;
            let codebook = n.codebook.as_ref();
            write_u32(&mut w, codebook.map_or(0, |c| c.len()) as u32)?;
            if let Some(c) = codebook {
                for rp in &c.rp_locations {
                    write_f64(&mut w, rp.x)?;
                    write_f64(&mut w, rp.y)?;
                }
            }
        }
        AnyLocalizer::Knn(k) => {
            let index = k
                .index
                .as_ref()
                .ok_or_else(|| Error::NotFitted("cannot save an unfitted model".to_string()))?;
            let empty: Network<Real> = Network::new(vec![index.feature_dim], Vec::new())?;
            crate::nn::checkpoint::write_network(&empty, &mut w)?;
            w.write_all(LOCALIZER_MAGIC)?;
            w.write_all(&[kind_tag(LocalizerKind::Knn), 0, k.options.window_averaging as u8, 0])?;
            write_f64(&mut w, 0.0)?;
            write_f64(&mut w, 0.0)?;
            write_f64(&mut w, 1.0)?;
            write_u32(&mut w, index.codebook.len() as u32)?;
            for rp in &index.codebook.rp_locations {
                write_f64(&mut w, rp.x)?;
                write_f64(&mut w, rp.y)?;
            }
            write_u32(&mut w, k.options.knn_k as u32)?;
            write_u32(&mut w, index.feature_dim as u32)?;
            for &v in &index.fingerprints {
                write_f64(&mut w, v)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_localizer(path: &Path) -> Result<AnyLocalizer> {
    let mut r = CountingReader::new(std::io::BufReader::new(std::fs::File::open(path)?));
    let network: Network<Real> = crate::nn::checkpoint::read_network_from(&mut r)?;
    let at = r.offset;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic, "localizer magic")?;
    if &magic != LOCALIZER_MAGIC {
        return Err(Error::parse(at, format!("bad magic {magic:?}, expected \"LOC1\"")));
    }
    let kind = kind_from_tag(r.u8("localizer kind")?)?;
    let layout = r.u8("feature layout")?;
    let window_averaging = r.u8("window averaging flag")? != 0;
    let trunk = if r.u8("trunk flag")? != 0 { TrunkKind::Cnn } else { TrunkKind::Mlp };
    let mean_x = r.f64("label mean x")?;
    let mean_y = r.f64("label mean y")?;
    let scale = r.f64("label scale")?;
    let n_rp = r.u32("codebook size")? as usize;
    let mut rp_locations = Vec::with_capacity(n_rp);
    for k in 0..n_rp {
        let x = r.f64(&format!("rp {k} x"))?;
        let y = r.f64(&format!("rp {k} y"))?;
        rp_locations.push(Point2::new(x, y));
    }

    let mut options = FitOptions {
        window_averaging,
        use_phase: layout == 1,
        classifier_trunk: trunk,
        ..FitOptions::default()
    };
    match kind {
        LocalizerKind::Knn => {
            let k = r.u32("knn k")? as usize;
            let feature_dim = r.u32("knn feature dim")? as usize;
            let mut fingerprints = vec![0.0; n_rp * feature_dim];
            for (j, v) in fingerprints.iter_mut().enumerate() {
                *v = r.f64(&format!("fingerprint value {j}"))?;
            }
            options.knn_k = k;
            Ok(AnyLocalizer::Knn(KnnLocalizer {
                options,
                index: Some(KnnIndex {
                    codebook: RpCodebook::new(rp_locations)?,
                    feature_dim,
                    fingerprints,
                }),
            }))
        }
        _ => Ok(AnyLocalizer::Net(NetLocalizer {
            kind,
            options,
            network: Some(network),
            codebook: if n_rp > 0 { Some(RpCodebook::new(rp_locations)?) } else { None },
            label_transform: LabelTransform { mean_x, mean_y, scale },
            loss_history: Vec::new(),
        })),
    }
}
