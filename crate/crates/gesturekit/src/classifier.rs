//! One-against-all recognition with small feed-forward networks.
//!
//! Each class gets an independent binary network — six inputs (the feature
//! vector), one hidden layer of three sigmoid units by default, one output
//! unit — trained by full-batch gradient descent on mean squared error.
//! Multiclass decisions take the argmax over the per-class scores. A step
//! activation is available at inference; training always runs on the
//! differentiable sigmoid surrogate.
//!
//! Feature scales differ wildly (means live in [0, 255], entropy in
//! [0, 8]), so an [`OvAModel`] carries a per-feature standardizing
//! [`Normalizer`] fitted on its training set.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::features::FeatureVector;

/// Input width: the six histogram features.
pub const INPUT_SIZE: usize = 6;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("samples ({0}) and labels ({1}) differ in length or are empty")]
    LengthMismatch(usize, usize),
    #[error("labels must be 0 or 1 (found {0})")]
    BadTarget(f64),
    #[error("class {0} has no samples")]
    MissingClass(usize),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("class names must be unique and at least two")]
    BadClassNames,
    #[error("non-finite feature value")]
    NonFinite,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported model version: {0}")]
    VersionMismatch(String),
    #[error("malformed model file: {0}")]
    Parse(String),
    #[error("model structure is inconsistent: {0}")]
    Structure(String),
}

/// Output nonlinearity. `Step` emits 1 at any nonnegative pre-activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Step,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Step => {
                if z >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Step => "step",
        })
    }
}

impl FromStr for Activation {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "step" => Ok(Activation::Step),
            other => Err(ModelError::Parse(format!("unknown activation {other:?}"))),
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// One binary network: 6 → hidden → 1.
///
/// `w1` is hidden×6 row-major, `w2` is the 1×hidden output row.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryNet {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub activation: Activation,
}

impl BinaryNet {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            w1: vec![0.0; hidden * INPUT_SIZE],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
            activation: Activation::Sigmoid,
        }
    }

    /// All parameters drawn from U(−0.5, 0.5); bit-reproducible per seed.
    /// Draw order: `w1` row-major, `b1`, `w2`, `b2`.
    pub fn seeded_uniform(hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect()
        };
        let w1 = draw(hidden * INPUT_SIZE);
        let b1 = draw(hidden);
        let w2 = draw(hidden);
        let b2 = draw(1)[0];
        Self {
            w1,
            b1,
            w2,
            b2,
            activation: Activation::Sigmoid,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.b1.len()
    }

    fn is_consistent(&self) -> bool {
        let h = self.b1.len();
        h >= 1 && self.w1.len() == h * INPUT_SIZE && self.w2.len() == h
    }
}

/// Weight initialization mode. Zero init is kept for fidelity experiments;
/// under full-batch descent it provably pins all hidden rows to the same
/// values (see the symmetry test), so the seeded uniform draw is the
/// default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    SeededUniform,
    Zero,
}

/// Trainer settings. Training is full batch with a fixed sample order, so
/// identical data and config give bit-identical models.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub init: InitMode,
    pub seed: u64,
    /// Early stop once the epoch-loss improvement falls below this;
    /// zero disables early stopping.
    pub tolerance: f64,
    pub hidden_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 500,
            init: InitMode::SeededUniform,
            seed: 0,
            tolerance: 1e-6,
            hidden_size: 3,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ModelError::InvalidConfig(format!(
                "learning rate {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(ModelError::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.tolerance.is_finite() && self.tolerance >= 0.0) {
            return Err(ModelError::InvalidConfig(format!(
                "tolerance {}",
                self.tolerance
            )));
        }
        if self.hidden_size == 0 {
            return Err(ModelError::InvalidConfig("hidden size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Builds the initial network for a config.
pub fn init_net(config: &TrainConfig) -> BinaryNet {
    match config.init {
        InitMode::Zero => BinaryNet::zeros(config.hidden_size),
        InitMode::SeededUniform => BinaryNet::seeded_uniform(config.hidden_size, config.seed),
    }
}

/// Evaluates the network on one (already normalized) input under its own
/// activation label.
pub fn forward(net: &BinaryNet, x: &[f64; INPUT_SIZE]) -> Result<f64, ModelError> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite);
    }
    Ok(forward_with(net, x, net.activation))
}

fn forward_with(net: &BinaryNet, x: &[f64; INPUT_SIZE], activation: Activation) -> f64 {
    let hidden = net.hidden_size();
    let mut z2 = net.b2;
    for j in 0..hidden {
        let mut z1 = net.b1[j];
        for (i, &xi) in x.iter().enumerate() {
            z1 += net.w1[j * INPUT_SIZE + i] * xi;
        }
        z2 += net.w2[j] * activation.apply(z1);
    }
    activation.apply(z2)
}

/// Parameter gradients, same shapes as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// Mean squared error of the sigmoid surrogate over a batch.
pub fn mse_loss(net: &BinaryNet, samples: &[[f64; INPUT_SIZE]], targets: &[f64]) -> f64 {
    let n = samples.len() as f64;
    samples
        .iter()
        .zip(targets)
        .map(|(x, &t)| {
            let y = forward_with(net, x, Activation::Sigmoid);
            (y - t) * (y - t)
        })
        .sum::<f64>()
        / n
}

/// Analytic gradients of [`mse_loss`] by backpropagation.
pub fn mse_gradients(
    net: &BinaryNet,
    samples: &[[f64; INPUT_SIZE]],
    targets: &[f64],
) -> NetGradients {
    let hidden = net.hidden_size();
    let n = samples.len() as f64;
    let mut g = NetGradients {
        w1: vec![0.0; hidden * INPUT_SIZE],
        b1: vec![0.0; hidden],
        w2: vec![0.0; hidden],
        b2: 0.0,
    };
    let mut h = vec![0.0f64; hidden];
    for (x, &t) in samples.iter().zip(targets) {
        let mut z2 = net.b2;
        for j in 0..hidden {
            let mut z1 = net.b1[j];
            for (i, &xi) in x.iter().enumerate() {
                z1 += net.w1[j * INPUT_SIZE + i] * xi;
            }
            h[j] = sigmoid(z1);
            z2 += net.w2[j] * h[j];
        }
        let y = sigmoid(z2);
        let dz2 = 2.0 / n * (y - t) * y * (1.0 - y);
        g.b2 += dz2;
        for j in 0..hidden {
            g.w2[j] += dz2 * h[j];
            let dz1 = dz2 * net.w2[j] * h[j] * (1.0 - h[j]);
            g.b1[j] += dz1;
            for (i, &xi) in x.iter().enumerate() {
                g.w1[j * INPUT_SIZE + i] += dz1 * xi;
            }
        }
    }
    g
}

/// Full-batch gradient descent for one binary problem. Labels are 0/1
/// (single-label batches are allowed); sample order is fixed; the result
/// is deterministic for a fixed config.
pub fn train_binary(
    samples: &[[f64; INPUT_SIZE]],
    targets: &[f64],
    config: &TrainConfig,
) -> Result<BinaryNet, ModelError> {
    config.validate()?;
    if samples.is_empty() || samples.len() != targets.len() {
        return Err(ModelError::LengthMismatch(samples.len(), targets.len()));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t != 0.0 && t != 1.0) {
        return Err(ModelError::BadTarget(bad));
    }
    let mut net = init_net(config);
    let hidden = net.hidden_size();
    let mut prev_loss = f64::INFINITY;
    for _ in 0..config.epochs {
        let loss = mse_loss(&net, samples, targets);
        if (prev_loss - loss).abs() < config.tolerance {
            break;
        }
        let g = mse_gradients(&net, samples, targets);
        for j in 0..hidden * INPUT_SIZE {
            net.w1[j] -= config.learning_rate * g.w1[j];
        }
        for j in 0..hidden {
            net.b1[j] -= config.learning_rate * g.b1[j];
            net.w2[j] -= config.learning_rate * g.w2[j];
        }
        net.b2 -= config.learning_rate * g.b2;
        prev_loss = loss;
    }
    Ok(net)
}

/// Per-feature standardization fitted on a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub means: [f64; INPUT_SIZE],
    pub stds: [f64; INPUT_SIZE],
}

impl Normalizer {
    /// Population mean and standard deviation per feature. A zero-variance
    /// feature gets std 1 and its index is reported so callers can log it.
    pub fn fit(features: &[FeatureVector]) -> (Self, Vec<usize>) {
        let n = features.len() as f64;
        let mut means = [0.0; INPUT_SIZE];
        let mut stds = [0.0; INPUT_SIZE];
        for f in features {
            for (i, v) in f.to_array().iter().enumerate() {
                means[i] += v;
            }
        }
        for m in means.iter_mut() {
            *m /= n;
        }
        for f in features {
            for (i, v) in f.to_array().iter().enumerate() {
                stds[i] += (v - means[i]) * (v - means[i]);
            }
        }
        let mut degenerate = Vec::new();
        for (i, s) in stds.iter_mut().enumerate() {
            *s = (*s / n).sqrt();
            if *s == 0.0 {
                *s = 1.0;
                degenerate.push(i);
            }
        }
        (Self { means, stds }, degenerate)
    }

    pub fn apply(&self, features: &FeatureVector) -> [f64; INPUT_SIZE] {
        let raw = features.to_array();
        let mut out = [0.0; INPUT_SIZE];
        for i in 0..INPUT_SIZE {
            out[i] = (raw[i] - self.means[i]) / self.stds[i];
        }
        out
    }
}

/// Training provenance kept with a model. The snapshot is absent on models
/// read back from disk (the file format carries parameters only).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelMeta {
    pub config: Option<TrainConfig>,
    pub warnings: Vec<String>,
}

/// K binary networks, their shared normalizer, and the class names.
#[derive(Debug, Clone, PartialEq)]
pub struct OvAModel {
    class_names: Vec<String>,
    nets: Vec<BinaryNet>,
    normalizer: Normalizer,
    metadata: ModelMeta,
}

impl OvAModel {
    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn nets(&self) -> &[BinaryNet] {
        &self.nets
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn metadata(&self) -> &ModelMeta {
        &self.metadata
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }
}

fn per_class_seed(base: u64, class: usize) -> u64 {
    base.wrapping_add(class as u64)
}

/// Trains one binary network per class (class k against the rest) on the
/// shared normalized features. The per-class trainings are independent and
/// run concurrently; results are identical to a sequential loop because
/// every class derives its own seed (`config.seed + k`).
pub fn train_ova(
    features: &[FeatureVector],
    labels: &[usize],
    class_names: &[String],
    config: &TrainConfig,
) -> Result<OvAModel, ModelError> {
    config.validate()?;
    if features.is_empty() || features.len() != labels.len() {
        return Err(ModelError::LengthMismatch(features.len(), labels.len()));
    }
    let k = class_names.len();
    {
        let mut unique: Vec<&String> = class_names.iter().collect();
        unique.sort();
        unique.dedup();
        if k < 2 || unique.len() != k {
            return Err(ModelError::BadClassNames);
        }
    }
    for class in 0..k {
        if !labels.iter().any(|&l| l == class) {
            return Err(ModelError::MissingClass(class));
        }
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(ModelError::InvalidConfig(format!(
            "label {bad} out of range for {k} classes"
        )));
    }
    if features.iter().any(|f| !f.is_finite()) {
        return Err(ModelError::NonFinite);
    }

    let (normalizer, degenerate) = Normalizer::fit(features);
    let warnings: Vec<String> = degenerate
        .iter()
        .map(|&i| format!("feature {i} has zero variance; std forced to 1"))
        .collect();
    let normalized: Vec<[f64; INPUT_SIZE]> =
        features.iter().map(|f| normalizer.apply(f)).collect();

    let nets: Vec<BinaryNet> = (0..k)
        .into_par_iter()
        .map(|class| {
            let targets: Vec<f64> = labels
                .iter()
                .map(|&l| if l == class { 1.0 } else { 0.0 })
                .collect();
            let class_config = TrainConfig {
                seed: per_class_seed(config.seed, class),
                ..config.clone()
            };
            train_binary(&normalized, &targets, &class_config)
        })
        .collect::<Result<_, _>>()?;

    Ok(OvAModel {
        class_names: class_names.to_vec(),
        nets,
        normalizer,
        metadata: ModelMeta {
            config: Some(config.clone()),
            warnings,
        },
    })
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Normalizes, scores every class network in sigmoid mode and returns the
/// winning index (ties break toward the lowest) with the raw score array.
pub fn predict(
    model: &OvAModel,
    features: &FeatureVector,
) -> Result<(usize, Vec<f64>), ModelError> {
    if !features.is_finite() {
        return Err(ModelError::NonFinite);
    }
    let x = model.normalizer.apply(features);
    let scores: Vec<f64> = model
        .nets
        .iter()
        .map(|net| forward_with(net, &x, Activation::Sigmoid))
        .collect();
    Ok((argmax(&scores), scores))
}

const MODEL_MAGIC: &str = "ovamodel";
const MODEL_VERSION: &str = "v1";

fn full(v: f64) -> String {
    format!("{v:.16e}")
}

fn numbers_line(values: &[f64]) -> String {
    values.iter().map(|&v| full(v)).collect::<Vec<_>>().join(" ")
}

/// Writes the versioned UTF-8 text format: a header line, the normalizer
/// (two lines of six numbers), then per class a name line and the four
/// parameter blocks, all at 17 significant digits so predictions round-trip
/// bit-exactly.
pub fn save_model(model: &OvAModel, path: &Path) -> Result<(), ModelError> {
    let mut out = String::new();
    let activation = model
        .nets
        .first()
        .map(|n| n.activation)
        .unwrap_or(Activation::Sigmoid);
    out.push_str(&format!(
        "{MODEL_MAGIC} {MODEL_VERSION} K={} activation={}\n",
        model.num_classes(),
        activation
    ));
    out.push_str(&numbers_line(&model.normalizer.means));
    out.push('\n');
    out.push_str(&numbers_line(&model.normalizer.stds));
    out.push('\n');
    for (name, net) in model.class_names.iter().zip(&model.nets) {
        out.push_str(name);
        out.push('\n');
        out.push_str(&numbers_line(&net.w1));
        out.push('\n');
        out.push_str(&numbers_line(&net.b1));
        out.push('\n');
        out.push_str(&numbers_line(&net.w2));
        out.push('\n');
        out.push_str(&full(net.b2));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_numbers(line: &str, what: &str) -> Result<Vec<f64>, ModelError> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| ModelError::Parse(format!("bad number in {what}: {tok:?}")))
        })
        .collect()
}

/// Reads a model written by [`save_model`]. Structural inconsistencies
/// (wrong block widths, fewer nets than class names, trailing garbage) are
/// errors, never silently-partial models.
pub fn load_model(path: &Path) -> Result<OvAModel, ModelError> {
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| ModelError::Parse("empty file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != MODEL_MAGIC {
        return Err(ModelError::Parse(format!("bad header {header:?}")));
    }
    if fields[1] != MODEL_VERSION {
        return Err(ModelError::VersionMismatch(fields[1].into()));
    }
    let k: usize = fields[2]
        .strip_prefix("K=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| ModelError::Parse(format!("bad class count {:?}", fields[2])))?;
    let activation: Activation = fields[3]
        .strip_prefix("activation=")
        .ok_or_else(|| ModelError::Parse(format!("bad activation field {:?}", fields[3])))?
        .parse()?;

    let mut next_line = |what: &str| -> Result<&str, ModelError> {
        lines
            .next()
            .ok_or_else(|| ModelError::Parse(format!("truncated file: missing {what}")))
    };

    let means_v = parse_numbers(next_line("normalizer means")?, "normalizer means")?;
    let stds_v = parse_numbers(next_line("normalizer stds")?, "normalizer stds")?;
    if means_v.len() != INPUT_SIZE || stds_v.len() != INPUT_SIZE {
        return Err(ModelError::Structure(
            "normalizer lines must hold six numbers".into(),
        ));
    }
    if stds_v.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(ModelError::Structure("normalizer stds must be positive".into()));
    }
    let mut means = [0.0; INPUT_SIZE];
    let mut stds = [0.0; INPUT_SIZE];
    means.copy_from_slice(&means_v);
    stds.copy_from_slice(&stds_v);

    let mut class_names = Vec::with_capacity(k);
    let mut nets = Vec::with_capacity(k);
    for _ in 0..k {
        let name = next_line("class name")?.to_string();
        if name.is_empty() {
            return Err(ModelError::Parse("empty class name".into()));
        }
        let w1 = parse_numbers(next_line("w1 block")?, "w1 block")?;
        let b1 = parse_numbers(next_line("b1 block")?, "b1 block")?;
        let w2 = parse_numbers(next_line("w2 block")?, "w2 block")?;
        let b2 = parse_numbers(next_line("b2 block")?, "b2 block")?;
        if b2.len() != 1 {
            return Err(ModelError::Structure("b2 block must hold one number".into()));
        }
        let net = BinaryNet {
            w1,
            b1,
            w2,
            b2: b2[0],
            activation,
        };
        if !net.is_consistent() {
            return Err(ModelError::Structure(format!(
                "parameter blocks of class {name:?} disagree on the hidden size"
            )));
        }
        class_names.push(name);
        nets.push(net);
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(ModelError::Structure("trailing content after last net".into()));
    }
    {
        let mut unique = class_names.clone();
        unique.sort();
        unique.dedup();
        if k < 2 || unique.len() != k {
            return Err(ModelError::BadClassNames);
        }
    }
    Ok(OvAModel {
        class_names,
        nets,
        normalizer: Normalizer { means, stds },
        metadata: ModelMeta::default(),
    })
}
