//! Training: labeled crops, the focal + cross-entropy objective and the epoch
//! loop with Adam and cosine annealing.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ecgseg_nn::{cosine_lr, Adam, AdamConfig, Graph, Tensor};
use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{self, AugmentConfig};
use crate::dataset::{self, rhythm_target, DataConfig};
use crate::error::{EcgError, Result};
use crate::labels::rasterize_labels;
use crate::model::{pad_len, EcgModel, ModelConfig, Mode, MODEL_FS};
use crate::record::{AnnotationSet, EcgRecord};
use crate::resample::{resample, resample_annotations};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Desk,
    Full,
}

impl Scale {
    pub fn model_config(self) -> ModelConfig {
        match self {
            Scale::Desk => ModelConfig::desk(),
            Scale::Full => ModelConfig::full(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// First sample of the training crop at 500 Hz.
    pub crop_start: usize,
    pub crop_len: usize,
    pub leads: Vec<String>,
    /// Focal exponent.
    pub gamma: f64,
    /// Weight of the rhythm cross-entropy term.
    pub alpha: f64,
    pub seed: u64,
    pub use_cls_branch: bool,
    pub scale: Scale,
    /// Save a checkpoint every this many epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-3,
            epochs: 100,
            batch_size: 16,
            crop_start: 1000,
            crop_len: 3000,
            leads: vec!["i".into(), "ii".into()],
            gamma: 1.0,
            alpha: 1.0,
            seed: 0,
            use_cls_branch: true,
            scale: Scale::Desk,
            checkpoint_every: 0,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(EcgError::Config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if self.epochs == 0 {
            return Err(EcgError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(EcgError::Config("batch_size must be at least 1".into()));
        }
        if self.crop_len < crate::model::LENGTH_MULTIPLE {
            return Err(EcgError::Config(format!("crop_len {} is too short", self.crop_len)));
        }
        if !(self.gamma >= 0.0) || !(self.alpha >= 0.0) {
            return Err(EcgError::Config("gamma and alpha must be non-negative".into()));
        }
        if self.leads.is_empty() {
            return Err(EcgError::Config("no training leads".into()));
        }
        self.augment.validate()
    }

    /// Shortest record (at 500 Hz) that yields a crop: the crop plus equal
    /// margins on both sides.
    pub fn min_record_len(&self) -> usize {
        2 * self.crop_start + self.crop_len
    }
}

/// Config file of the `train` command: dataset plus training settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub train: TrainConfig,
    /// Output directory for checkpoints and the metrics log.
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| EcgError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg = Self::from_toml(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Ok(Self { data: cfg.data.resolved(dir), ..cfg })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub record_id: String,
    pub lead: String,
    pub signal: Vec<f32>,
    pub labels: Vec<u8>,
    /// Classifier target index, when the record states its rhythm.
    pub rhythm: Option<usize>,
}

/// Resample to 500 Hz when needed.
pub fn to_model_rate(record: &EcgRecord, annotations: &AnnotationSet) -> (EcgRecord, AnnotationSet) {
    if record.fs == MODEL_FS {
        return (record.clone(), annotations.clone());
    }
    let r = resample(record, MODEL_FS);
    let a = resample_annotations(annotations, MODEL_FS, Some(r.len()));
    (r, a)
}

/// Labeled crop of one lead. Records too short for the crop are skipped
/// (`Ok(None)`) with a warning.
pub fn make_training_example(
    record: &EcgRecord,
    lead: &str,
    annotations: &AnnotationSet,
    config: &TrainConfig,
) -> Result<Option<LabeledExample>> {
    let (record, annotations) = to_model_rate(record, annotations);
    let Some(l) = record.lead(lead) else {
        return Err(EcgError::Dataset(format!("record {} has no lead {lead}", record.record_id)));
    };
    if record.len() < config.min_record_len() {
        warn!(
            "skipping {} lead {}: {} samples, need {}",
            record.record_id,
            l.name,
            record.len(),
            config.min_record_len()
        );
        return Ok(None);
    }
    let labels = rasterize_labels(&annotations.for_lead(&l.name), record.len());
    let span = config.crop_start..config.crop_start + config.crop_len;
    Ok(Some(LabeledExample {
        record_id: record.record_id.clone(),
        lead: l.name.clone(),
        signal: l.samples[span.clone()].to_vec(),
        labels: labels[span].to_vec(),
        rhythm: rhythm_target(&record.comments).map(|r| r.index()),
    }))
}

/// Examples of every configured lead of the records in `split`.
pub fn load_examples(data: &DataConfig, config: &TrainConfig, split: &str) -> Result<Vec<LabeledExample>> {
    let entries = dataset::read_manifest(&data.manifest)?;
    let chosen: Vec<_> = dataset::split(&entries, split).into_iter().cloned().collect();
    if chosen.is_empty() {
        return Err(EcgError::Dataset(format!("manifest {} has no '{split}' records", data.manifest.display())));
    }
    let missing = data.missing(&chosen);
    if !missing.is_empty() {
        return Err(EcgError::Dataset(format!("missing records: {}", missing.join(", "))));
    }
    let mut out = Vec::new();
    for e in &chosen {
        let loaded = data.load(e)?;
        for lead in &config.leads {
            if let Some(ex) = make_training_example(&loaded.record, lead, &loaded.annotations, config)? {
                out.push(ex);
            }
        }
    }
    Ok(out)
}

/// Optimizer state carried across epochs.
pub struct TrainState {
    pub adam: Adam<f32>,
    pub step: u64,
    pub total_steps: u64,
}

impl TrainState {
    pub fn new(model: &EcgModel, config: &TrainConfig, n_examples: usize) -> Self {
        let per_epoch = n_examples.div_ceil(config.batch_size.max(1)) as u64;
        Self {
            adam: Adam::new(model.params(), AdamConfig::default()),
            step: 0,
            total_steps: per_epoch * config.epochs as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub focal: f64,
    pub bce: f64,
    pub total: f64,
    /// Learning rate of the last step.
    pub lr: f64,
    pub steps: usize,
}

fn shuffle_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// One pass over the shuffled examples. Model parameters, batch-norm running
/// statistics and the optimizer state are updated in place.
pub fn train_epoch(
    model: &mut EcgModel,
    state: &mut TrainState,
    examples: &[LabeledExample],
    config: &TrainConfig,
    epoch: usize,
) -> Result<EpochStats> {
    if examples.is_empty() {
        return Err(EcgError::Dataset("no training examples".into()));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = shuffle_rng(config.seed, epoch);
    order.shuffle(&mut rng);
    let use_cls = config.use_cls_branch && model.has_classifier();

    let (mut focal_sum, mut bce_sum, mut total_sum, mut lr) = (0.0, 0.0, 0.0, 0.0);
    let mut steps = 0;
    for batch in order.chunks(config.batch_size) {
        let len = examples[batch[0]].signal.len();
        let padded = pad_len(len);
        let mut x = Vec::with_capacity(batch.len() * padded);
        let mut y = Vec::with_capacity(batch.len() * len);
        let mut targets = Vec::with_capacity(batch.len());
        for &i in batch {
            let ex = &examples[i];
            if ex.signal.len() != len || ex.labels.len() != len {
                return Err(EcgError::Config(format!(
                    "example {} lead {} has length {}, batch expects {len}",
                    ex.record_id,
                    ex.lead,
                    ex.signal.len()
                )));
            }
            let mut arng = augment::record_rng(config.augment.seed, &format!("{}/{}", ex.record_id, ex.lead), epoch as u64);
            let (s, l) = augment::augment(&ex.signal, &ex.labels, MODEL_FS, &mut arng, &config.augment);
            x.extend_from_slice(&s);
            x.resize(x.len() + padded - len, *s.last().expect("non-empty crop"));
            y.extend_from_slice(&l);
            targets.push(ex.rhythm);
        }

        let mut g = Graph::new();
        let xv = g.input(Tensor::new(vec![batch.len(), 1, padded], x)?);
        let mut drop_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(state.step).rotate_left(17));
        let out = model.forward(&mut g, xv, len, Mode::Train(&mut drop_rng))?;
        let focal = g.focal_loss_logits(out.seg_logits, &y, config.gamma)?;
        let focal_v = g.scalar(focal) as f64;
        let mut bce_v = 0.0;
        let mut loss = focal;
        if use_cls && targets.iter().any(Option::is_some) {
            if let Some(cls) = out.cls_logits {
                let ce = g.cross_entropy_logits(cls, &targets)?;
                bce_v = g.scalar(ce) as f64;
                let weighted = g.scale(ce, config.alpha as f32);
                loss = g.add(focal, weighted)?;
            }
        }
        let total_v = g.scalar(loss) as f64;
        if !total_v.is_finite() || !focal_v.is_finite() || !bce_v.is_finite() {
            let ids: Vec<String> = batch.iter().map(|&i| format!("{}/{}", examples[i].record_id, examples[i].lead)).collect();
            return Err(EcgError::NonFinite(format!(
                "epoch {epoch} step {}: focal={focal_v} bce={bce_v} total={total_v} batch=[{}]",
                state.step,
                ids.join(", ")
            )));
        }
        g.backward(loss)?;
        model.params_mut().zero_grads();
        model.params_mut().accumulate_grads(&g);
        lr = cosine_lr(state.step, state.total_steps, config.lr0);
        state.adam.step(model.params_mut(), lr);
        model.apply_bn_stats(&out.bn_stats);
        state.step += 1;

        focal_sum += focal_v;
        bce_sum += bce_v;
        total_sum += total_v;
        steps += 1;
    }
    let n = steps as f64;
    Ok(EpochStats {
        epoch,
        focal: focal_sum / n,
        bce: bce_sum / n,
        total: total_sum / n,
        lr,
        steps,
    })
}

pub const METRICS_HEADER: &str = "epoch,focal,bce,lr";

pub fn metrics_row(s: &EpochStats) -> String {
    format!("{},{:.8},{:.8},{:.8e}", s.epoch, s.focal, s.bce, s.lr)
}

/// Full training run: `epochs` passes, a metrics CSV and checkpoints in
/// `out_dir` when given.
pub fn fit(model: &mut EcgModel, examples: &[LabeledExample], config: &TrainConfig, out_dir: Option<&Path>) -> Result<Vec<EpochStats>> {
    config.validate()?;
    if examples.is_empty() {
        return Err(EcgError::Dataset("no training examples".into()));
    }
    if let Some(dir) = out_dir {
        dataset::ensure_dir(dir)?;
    }
    let mut state = TrainState::new(model, config, examples.len());
    let mut log = String::from(METRICS_HEADER);
    log.push('\n');
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let stats = train_epoch(model, &mut state, examples, config, epoch)?;
        info!("epoch {epoch}: focal {:.5} bce {:.5} lr {:.3e}", stats.focal, stats.bce, stats.lr);
        writeln!(log, "{}", metrics_row(&stats)).expect("string write");
        if let Some(dir) = out_dir {
            fs::write(dir.join("metrics.csv"), &log)?;
            if config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 {
                model.save(&dir.join(format!("epoch{epoch:04}.ckpt")))?;
            }
        }
        history.push(stats);
    }
    if let Some(dir) = out_dir {
        model.save(&dir.join("model.ckpt"))?;
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::{BoundaryAnnotation, BoundaryKind, Wave};

    fn record(len: usize) -> EcgRecord {
        let s: Vec<f32> = (0..len).map(|i| (i as f32 * 0.01).sin()).collect();
        EcgRecord::single_lead("r1", MODEL_FS, "ii", s).unwrap()
    }

    fn qrs(set: &mut AnnotationSet, on: usize, off: usize) {
        set.items.push(BoundaryAnnotation::new(Wave::Qrs, BoundaryKind::Onset, on, "ii"));
        set.items.push(BoundaryAnnotation::new(Wave::Qrs, BoundaryKind::Offset, off, "ii"));
    }

    #[test]
    fn crop_of_ten_seconds() {
        let rec = record(5000);
        let mut set = AnnotationSet::new("r1", MODEL_FS);
        qrs(&mut set, 1500, 1540);
        let ex = make_training_example(&rec, "ii", &set, &TrainConfig::default()).unwrap().unwrap();
        assert_eq!(ex.signal.len(), 3000);
        assert_eq!(ex.labels.len(), 3000);
        assert_eq!(ex.labels[499], 0);
        assert_eq!(ex.labels[500], 2);
        assert_eq!(ex.labels[540], 2);
        assert_eq!(ex.labels[541], 0);
        assert_eq!(ex.signal[0], rec.leads[0].samples[1000]);
    }

    #[test]
    fn empty_crop_retained_and_short_skipped() {
        let set = AnnotationSet::new("r1", MODEL_FS);
        let ex = make_training_example(&record(5000), "II", &set, &TrainConfig::default()).unwrap().unwrap();
        assert!(ex.labels.iter().all(|&l| l == 0));
        assert!(make_training_example(&record(4999), "ii", &set, &TrainConfig::default()).unwrap().is_none());
        assert!(make_training_example(&record(5000), "v1", &set, &TrainConfig::default()).is_err());
    }

    #[test]
    fn lower_rate_is_resampled() {
        let rec = EcgRecord::single_lead("r", 250.0, "ii", vec![0.0; 2500]).unwrap();
        let mut set = AnnotationSet::new("r", 250.0);
        qrs(&mut set, 750, 770);
        let ex = make_training_example(&rec, "ii", &set, &TrainConfig::default()).unwrap().unwrap();
        assert_eq!(ex.labels[499], 0);
        assert_eq!(ex.labels[500], 2);
        assert_eq!(ex.labels[540], 2);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        c.validate().unwrap();
        c.epochs = 0;
        assert!(c.validate().is_err());
        c.epochs = 1;
        c.lr0 = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn run_config_toml() {
        let cfg = RunConfig::from_toml(
            "[data]\nroot = \"/data\"\n[train]\nepochs = 3\nseed = 9\n[train.augment]\np_wander = 0.0\n",
        )
        .unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.train.batch_size, 16);
        assert_eq!(cfg.train.augment.p_wander, 0.0);
        assert_eq!(cfg.data.root, PathBuf::from("/data"));
        assert!(RunConfig::from_toml("[train]\nepochs = \"x\"").is_err());
    }
}
