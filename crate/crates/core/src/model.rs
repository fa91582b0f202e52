//! The segmentation network and its rhythm classifier branch.
//!
//! Five encoder levels of two convolution blocks each, separated by max
//! pooling. Every decoder level gathers all encoder levels at or above it
//! (max-pooled down) and all deeper decoder outputs (linearly upsampled),
//! squeezes each source to `skip_width` channels with a kernel-1 block,
//! concatenates them and fuses with one convolution block. A kernel-1 head
//! produces the four class logits. The classifier branch average-pools every
//! encoder level to the deepest resolution, applies two wide convolution
//! blocks with dropout, global average pooling and a fully connected layer.

use std::path::Path;

use ecgseg_nn::{he_normal, softmax_channels, BatchNormState, BatchStats, Checkpoint, Graph, ParamId, ParamStore, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EcgError, Result};
use crate::labels::N_CLASSES;
use crate::mask::{ClassifierOutput, SegmentationMask};

/// Number of pooling stages; inputs are padded to a multiple of `2^POOL_STAGES`.
pub const POOL_STAGES: usize = 4;
pub const LENGTH_MULTIPLE: usize = 1 << POOL_STAGES;
/// Sampling rate the network is trained and run at.
pub const MODEL_FS: f64 = 500.0;

const CHECKPOINT_KIND: &str = "ecgseg-model";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub widths: [usize; 5],
    pub kernel: usize,
    pub padding: usize,
    pub relu_slope: f64,
    /// Channels each skip source is reduced to before fusion.
    pub skip_width: usize,
    pub cls_branch: bool,
    pub cls_filters: usize,
    pub cls_kernel: usize,
    pub cls_dropout: f64,
    pub n_classes: usize,
    pub cls_classes: usize,
}

impl ModelConfig {
    /// Full-size network (segmentation only, just under 20 M parameters).
    pub fn full() -> Self {
        Self {
            widths: [64, 128, 256, 512, 1024],
            kernel: 9,
            padding: 4,
            relu_slope: 0.01,
            skip_width: 32,
            cls_branch: false,
            cls_filters: 512,
            cls_kernel: 17,
            cls_dropout: 0.2,
            n_classes: N_CLASSES,
            cls_classes: 2,
        }
    }

    /// Small network for CPU training, with the classifier branch.
    pub fn desk() -> Self {
        Self {
            widths: [16, 32, 64, 128, 256],
            skip_width: 16,
            cls_branch: true,
            cls_filters: 64,
            ..Self::full()
        }
    }

    pub fn with_cls_branch(mut self, on: bool) -> Self {
        self.cls_branch = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(EcgError::Config(m.to_string()));
        if self.widths.contains(&0) || self.skip_width == 0 {
            return bad("channel widths must be positive");
        }
        if self.kernel % 2 == 0 || self.padding != (self.kernel - 1) / 2 {
            return bad("kernel must be odd with padding (kernel - 1) / 2");
        }
        if self.cls_kernel % 2 == 0 {
            return bad("classifier kernel must be odd");
        }
        if self.n_classes != N_CLASSES || self.cls_classes != 2 {
            return bad("four segmentation classes and two rhythm classes are required");
        }
        if self.cls_branch && self.cls_filters == 0 {
            return bad("classifier filters must be positive");
        }
        if !(0.0..1.0).contains(&self.cls_dropout) || self.relu_slope < 0.0 {
            return bad("dropout must be in [0, 1) and the leaky slope non-negative");
        }
        Ok(())
    }

    fn fused_width(&self) -> usize {
        self.skip_width * 5
    }
}

/// Convolution (no bias, the batch-norm shift takes its place), batch norm
/// and leaky ReLU.
#[derive(Debug, Clone)]
struct ConvBlock {
    w: ParamId,
    gamma: ParamId,
    beta: ParamId,
    bn: usize,
    padding: usize,
}

/// Parameters of the fully connected classifier output.
#[derive(Debug, Clone)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct Classifier {
    conv1: ConvBlock,
    conv2: ConvBlock,
    fc: Dense,
}

/// Network weights plus batch-norm running statistics.
#[derive(Debug, Clone)]
pub struct EcgModel {
    config: ModelConfig,
    params: ParamStore<f32>,
    bn: Vec<BatchNormState<f32>>,
    bn_names: Vec<String>,
    encoder: Vec<[ConvBlock; 2]>,
    /// `sources[d][k]`: reduction of source `k` at decoder level `d` (0-based).
    sources: Vec<Vec<ConvBlock>>,
    fuse: Vec<ConvBlock>,
    head: Dense,
    classifier: Option<Classifier>,
}

/// Graph nodes of one forward pass.
pub struct ForwardOutput {
    /// `[N, 4, L]` logits trimmed to the unpadded length.
    pub seg_logits: Var,
    /// `[N, 2]` logits when the classifier branch exists.
    pub cls_logits: Option<Var>,
    /// Batch statistics per batch-norm layer (training mode only).
    pub bn_stats: Vec<(usize, BatchStats<f32>)>,
}

/// Training mode draws dropout masks from `rng` and uses batch statistics.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut dyn rand::RngCore),
}

impl Mode<'_> {
    fn training(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

struct Builder<'a, R: Rng> {
    params: ParamStore<f32>,
    bn: Vec<BatchNormState<f32>>,
    bn_names: Vec<String>,
    rng: &'a mut R,
}

impl<R: Rng> Builder<'_, R> {
    fn conv(&mut self, name: &str, c_in: usize, c_out: usize, k: usize) -> ConvBlock {
        let w = self.params.add(format!("{name}.weight"), he_normal(&[c_out, c_in, k], c_in * k, self.rng));
        let gamma = self.params.add(format!("{name}.bn.gamma"), Tensor::full([c_out], 1.0));
        let beta = self.params.add(format!("{name}.bn.beta"), Tensor::zeros([c_out]));
        self.bn.push(BatchNormState::new(c_out));
        self.bn_names.push(format!("{name}.bn"));
        ConvBlock {
            w,
            gamma,
            beta,
            bn: self.bn.len() - 1,
            padding: (k - 1) / 2,
        }
    }

    fn dense(&mut self, name: &str, c_in: usize, c_out: usize, k: usize) -> Dense {
        let shape: Vec<usize> = if k == 0 { vec![c_out, c_in] } else { vec![c_out, c_in, k] };
        Dense {
            w: self.params.add(format!("{name}.weight"), he_normal(&shape, c_in * k.max(1), self.rng)),
            b: self.params.add(format!("{name}.bias"), Tensor::zeros([c_out])),
        }
    }
}

/// Channel count of skip source `k` at decoder level `d` (both 0-based).
fn source_width(cfg: &ModelConfig, d: usize, k: usize) -> usize {
    if k <= d || k == 4 {
        cfg.widths[k]
    } else {
        cfg.fused_width()
    }
}

/// Input length after edge padding to a multiple of 16.
pub fn pad_len(len: usize) -> usize {
    len.div_ceil(LENGTH_MULTIPLE) * LENGTH_MULTIPLE
}

/// Edge-replicate each row of `[n, len]` to the padded length.
fn pad_rows(signals: &[&[f32]], len: usize) -> Tensor<f32> {
    let padded = pad_len(len);
    let mut data = Vec::with_capacity(signals.len() * padded);
    for s in signals {
        data.extend_from_slice(s);
        let last = *s.last().expect("non-empty signal");
        data.resize(data.len() + padded - len, last);
    }
    Tensor::new(vec![signals.len(), 1, padded], data).expect("consistent shape")
}

impl EcgModel {
    /// Fresh He-normal weights from a seed.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder {
            params: ParamStore::new(),
            bn: Vec::new(),
            bn_names: Vec::new(),
            rng: &mut rng,
        };
        let k = config.kernel;
        let mut encoder = Vec::new();
        let mut c_in = 1;
        for (i, &w) in config.widths.iter().enumerate() {
            encoder.push([b.conv(&format!("enc{}.0", i + 1), c_in, w, k), b.conv(&format!("enc{}.1", i + 1), w, w, k)]);
            c_in = w;
        }
        let mut sources = Vec::new();
        let mut fuse = Vec::new();
        for d in 0..POOL_STAGES {
            sources.push(
                (0..5)
                    .map(|s| b.conv(&format!("dec{}.src{}", d + 1, s + 1), source_width(&config, d, s), config.skip_width, 1))
                    .collect(),
            );
            fuse.push(b.conv(&format!("dec{}.fuse", d + 1), config.fused_width(), config.fused_width(), k));
        }
        let head = b.dense("head", config.fused_width(), config.n_classes, 1);
        let classifier = config.cls_branch.then(|| {
            let c_in: usize = config.widths.iter().sum();
            let f = config.cls_filters;
            Classifier {
                conv1: b.conv("cls.conv1", c_in, f, config.cls_kernel),
                conv2: b.conv("cls.conv2", f, f, config.cls_kernel),
                fc: b.dense("cls.fc", f, config.cls_classes, 0),
            }
        });
        let Builder { params, bn, bn_names, .. } = b;
        Ok(Self {
            config,
            params,
            bn,
            bn_names,
            encoder,
            sources,
            fuse,
            head,
            classifier,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.params
    }

    pub fn has_classifier(&self) -> bool {
        self.classifier.is_some()
    }

    /// Learnable scalars (batch-norm running statistics excluded).
    pub fn param_count(&self) -> usize {
        self.params.num_scalars()
    }

    fn block(&self, g: &mut Graph<f32>, x: Var, blk: &ConvBlock, mode: &Mode, stats: &mut Vec<(usize, BatchStats<f32>)>) -> Result<Var> {
        let train = mode.training();
        let w = g.param(&self.params, blk.w, train);
        let c_out = self.params.value(blk.w).shape()[0];
        let b = g.input(Tensor::zeros([c_out]));
        let gamma = g.param(&self.params, blk.gamma, train);
        let beta = g.param(&self.params, blk.beta, train);
        let y = g.conv1d(x, w, b, blk.padding)?;
        let (y, st) = g.batchnorm1d(y, gamma, beta, &self.bn[blk.bn], train)?;
        if let Some(st) = st {
            stats.push((blk.bn, st));
        }
        Ok(g.leaky_relu(y, self.config.relu_slope as f32))
    }

    /// Forward pass on `[N, 1, L]` input whose length is already a multiple of
    /// 16; `out_len` trims the segmentation logits.
    pub fn forward(&self, g: &mut Graph<f32>, x: Var, out_len: usize, mut mode: Mode) -> Result<ForwardOutput> {
        let (_, c, len) = g.value(x).dims3()?;
        if c != 1 || len % LENGTH_MULTIPLE != 0 || out_len > len || out_len == 0 {
            return Err(EcgError::Config(format!("model input must be [N, 1, 16k], got {:?}", g.value(x).shape())));
        }
        let mut stats = Vec::new();
        let mut enc: Vec<Var> = Vec::with_capacity(5);
        let mut h = x;
        for (i, blocks) in self.encoder.iter().enumerate() {
            if i > 0 {
                h = g.maxpool1d(h, 2)?;
            }
            h = self.block(g, h, &blocks[0], &mode, &mut stats)?;
            h = self.block(g, h, &blocks[1], &mode, &mut stats)?;
            enc.push(h);
        }
        // dec[k] for k in 0..5, dec[4] is the deepest encoder output
        let mut dec: Vec<Option<Var>> = vec![None; 5];
        dec[4] = Some(enc[4]);
        for d in (0..POOL_STAGES).rev() {
            let mut parts = Vec::with_capacity(5);
            for (k, blk) in self.sources[d].iter().enumerate() {
                let src = if k < d {
                    g.maxpool1d(enc[k], 1 << (d - k))?
                } else if k == d {
                    enc[k]
                } else {
                    g.upsample_linear(dec[k].expect("deeper level done"), 1 << (k - d))?
                };
                parts.push(self.block(g, src, blk, &mode, &mut stats)?);
            }
            let cat = g.concat(&parts)?;
            dec[d] = Some(self.block(g, cat, &self.fuse[d], &mode, &mut stats)?);
        }
        let train = mode.training();
        let hw = g.param(&self.params, self.head.w, train);
        let hb = g.param(&self.params, self.head.b, train);
        let mut seg = g.conv1d(dec[0].expect("top level done"), hw, hb, 0)?;
        if out_len != len {
            seg = g.slice_time(seg, 0, out_len)?;
        }

        let cls_logits = match &self.classifier {
            None => None,
            Some(cls) => {
                let l5 = g.value(enc[4]).shape()[2];
                let mut parts = Vec::with_capacity(5);
                for &e in &enc[..4] {
                    parts.push(g.avgpool1d(e, l5)?);
                }
                parts.push(enc[4]);
                let mut h = g.concat(&parts)?;
                for blk in [&cls.conv1, &cls.conv2] {
                    h = self.block(g, h, blk, &mode, &mut stats)?;
                    if let Mode::Train(rng) = &mut mode {
                        if self.config.cls_dropout > 0.0 {
                            h = g.dropout(h, self.config.cls_dropout, &mut **rng)?;
                        }
                    }
                }
                let pooled = g.global_avg_pool(h)?;
                let w = g.param(&self.params, cls.fc.w, train);
                let b = g.param(&self.params, cls.fc.b, train);
                Some(g.linear(pooled, w, b)?)
            }
        };
        Ok(ForwardOutput {
            seg_logits: seg,
            cls_logits,
            bn_stats: stats,
        })
    }

    /// Fold training batch statistics into the running estimates.
    pub fn apply_bn_stats(&mut self, stats: &[(usize, BatchStats<f32>)]) {
        for (i, s) in stats {
            self.bn[*i].update(s);
        }
    }

    fn check_len(len: usize) -> Result<()> {
        if len < LENGTH_MULTIPLE {
            return Err(EcgError::InputTooShort { len, min: LENGTH_MULTIPLE });
        }
        Ok(())
    }

    /// Inference on equally long signals at 500 Hz: class masks and, with the
    /// classifier branch, rhythm probabilities.
    pub fn infer_batch(&self, signals: &[&[f32]]) -> Result<(Vec<SegmentationMask>, Option<Vec<ClassifierOutput>>)> {
        let Some(first) = signals.first() else {
            return Ok((Vec::new(), None));
        };
        let len = first.len();
        Self::check_len(len)?;
        if signals.iter().any(|s| s.len() != len) {
            return Err(EcgError::Config("batched signals must share one length".into()));
        }
        let mut g = Graph::new();
        let x = g.input(pad_rows(signals, len));
        let out = self.forward(&mut g, x, len, Mode::Eval)?;
        let n = signals.len();
        let probs = softmax_channels(g.value(out.seg_logits).data(), n, N_CLASSES, len);
        let masks = probs
            .chunks_exact(N_CLASSES * len)
            .map(|p| SegmentationMask::new(p.to_vec(), len))
            .collect::<Result<Vec<_>>>()?;
        let cls = out.cls_logits.map(|v| {
            let z = g.value(v).data();
            let p = softmax_channels(z, n, 2, 1);
            p.chunks_exact(2).map(|c| ClassifierOutput::new(c[0], c[1])).collect()
        });
        Ok((masks, cls))
    }

    /// Class probabilities of one signal at 500 Hz (at least 16 samples).
    pub fn forward_segment(&self, signal: &[f32]) -> Result<SegmentationMask> {
        Ok(self.infer_batch(&[signal])?.0.remove(0))
    }

    /// Rhythm probabilities of one signal; errors without a classifier branch.
    pub fn forward_classify(&self, signal: &[f32]) -> Result<ClassifierOutput> {
        let (_, cls) = self.infer_batch(&[signal])?;
        cls.map(|mut c| c.remove(0))
            .ok_or_else(|| EcgError::Config("model has no classifier branch".into()))
    }

    /// Pin the classifier output: zero the final weights and set the biases
    /// so that one class dominates.
    pub fn force_classifier(&mut self, afib: bool) -> Result<()> {
        let fc = self
            .classifier
            .as_ref()
            .map(|c| c.fc.clone())
            .ok_or_else(|| EcgError::Config("model has no classifier branch".into()))?;
        self.params.value_mut(fc.w).data_mut().fill(0.0);
        let b = self.params.value_mut(fc.b).data_mut();
        let (a, o) = if afib { (20.0, -20.0) } else { (-20.0, 20.0) };
        b[0] = a;
        b[1] = o;
        Ok(())
    }

    /// Zero the classifier's final layer so that it outputs `[0.5, 0.5]`.
    pub fn zero_classifier(&mut self) -> Result<()> {
        let fc = self
            .classifier
            .as_ref()
            .map(|c| c.fc.clone())
            .ok_or_else(|| EcgError::Config("model has no classifier branch".into()))?;
        self.params.value_mut(fc.w).data_mut().fill(0.0);
        self.params.value_mut(fc.b).data_mut().fill(0.0);
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new();
        ck.insert_meta("kind", CHECKPOINT_KIND);
        ck.insert_meta("config", serde_json::to_string(&self.config).map_err(|e| EcgError::Config(e.to_string()))?);
        for (_, p) in self.params.iter() {
            ck.insert_tensor(p.name.clone(), p.value.clone());
        }
        for (name, st) in self.bn_names.iter().zip(&self.bn) {
            let c = st.running_mean.len();
            ck.insert_tensor(format!("{name}.running_mean"), Tensor::new(vec![c], st.running_mean.clone())?);
            ck.insert_tensor(format!("{name}.running_var"), Tensor::new(vec![c], st.running_var.clone())?);
        }
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta("kind") != Some(CHECKPOINT_KIND) {
            return Err(EcgError::Config("checkpoint does not hold a segmentation model".into()));
        }
        let config: ModelConfig = serde_json::from_str(ck.meta("config").ok_or_else(|| EcgError::Config("checkpoint lacks a model config".into()))?)
            .map_err(|e| EcgError::Config(format!("bad model config in checkpoint: {e}")))?;
        let mut model = Self::new(config, 0)?;
        let fetch = |name: &str, shape: &[usize]| -> Result<Tensor<f32>> {
            let t = ck.tensor(name).ok_or_else(|| EcgError::Config(format!("checkpoint lacks tensor {name}")))?;
            if t.shape() != shape {
                return Err(EcgError::Config(format!("tensor {name} has shape {:?}, expected {shape:?}", t.shape())));
            }
            Ok(t.clone())
        };
        for p in model.params.iter_mut() {
            p.value = fetch(&p.name, &p.value.shape().to_vec())?;
        }
        for (name, st) in model.bn_names.iter().zip(model.bn.iter_mut()) {
            let c = [st.running_mean.len()];
            st.running_mean = fetch(&format!("{name}.running_mean"), &c)?.into_data();
            st.running_var = fetch(&format!("{name}.running_var"), &c)?.into_data();
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(self.to_checkpoint()?.save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            widths: [2, 3, 4, 5, 6],
            skip_width: 2,
            cls_filters: 3,
            ..ModelConfig::desk()
        }
    }

    fn signal(len: usize) -> Vec<f32> {
        (0..len).map(|i| ((i as f32) * 0.05).sin()).collect()
    }

    #[test]
    fn output_lengths() {
        let m = EcgModel::new(tiny(), 1).unwrap();
        for len in [16, 17, 100, 2995, 3000] {
            let mask = m.forward_segment(&signal(len)).unwrap();
            assert_eq!(mask.len(), len);
            assert!(mask.max_column_error() < 1e-5);
        }
        assert!(matches!(m.forward_segment(&signal(15)), Err(EcgError::InputTooShort { len: 15, min: 16 })));
    }

    #[test]
    fn padding_arithmetic() {
        assert_eq!(pad_len(2995), 3008);
        assert_eq!(pad_len(3000), 3008);
        assert_eq!(pad_len(5000), 5008);
        assert_eq!(pad_len(16), 16);
    }

    #[test]
    fn zeroed_classifier_is_even() {
        let mut m = EcgModel::new(tiny(), 2).unwrap();
        m.zero_classifier().unwrap();
        let c = m.forward_classify(&signal(64)).unwrap();
        assert_eq!((c.p_afib, c.p_other), (0.5, 0.5));
        m.force_classifier(true).unwrap();
        assert!(m.forward_classify(&signal(64)).unwrap().is_afib());
    }

    #[test]
    fn eval_is_deterministic() {
        let m = EcgModel::new(tiny(), 3).unwrap();
        let s = signal(300);
        assert_eq!(m.forward_segment(&s).unwrap(), m.forward_segment(&s).unwrap());
        let a = m.forward_classify(&s).unwrap();
        let b = m.forward_classify(&s).unwrap();
        assert_eq!(a, b);
        assert!((a.p_afib + a.p_other - 1.0).abs() < 1e-6);
    }

    #[test]
    fn classifier_optional() {
        let m = EcgModel::new(tiny().with_cls_branch(false), 3).unwrap();
        assert!(m.forward_classify(&signal(32)).is_err());
        assert!(m.param_count() < EcgModel::new(tiny(), 3).unwrap().param_count());
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = EcgModel::new(tiny(), 4).unwrap();
        let back = EcgModel::from_checkpoint(&m.to_checkpoint().unwrap()).unwrap();
        let s = signal(80);
        assert_eq!(m.forward_segment(&s).unwrap(), back.forward_segment(&s).unwrap());
        assert_eq!(back.config(), m.config());
    }

    #[test]
    fn invalid_configs() {
        assert!(EcgModel::new(ModelConfig { kernel: 8, ..tiny() }, 0).is_err());
        assert!(EcgModel::new(ModelConfig { padding: 3, ..tiny() }, 0).is_err());
    }
}
