//! DeepLabv3+ segmentation network: encoder, ASPP, skip-connected decoder and
//! a one-channel sigmoid head.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::imaging::{ColorSpace, RasterImage};
use crate::model::config::{Backbone, ModelConfig};
use crate::model::efficientnet::{BlockSummary, EfficientNet};
use crate::nn::norm::BatchStats;
use crate::nn::ops::{
    bce_with_logits, broadcast_spatial, concat_channels, global_avg_pool, relu, resize_bilinear, sigmoid_scalar,
};
use crate::nn::{backward, BatchNorm, Conv, ConvSpec, Gradients, Init, Mode, ParamStore, Session, Tensor, Var};

const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// Depthwise 3x3 followed by a pointwise projection.
#[derive(Debug, Clone, Copy)]
struct Separable {
    depthwise: Conv,
    pointwise: Conv,
    bn: BatchNorm,
}

impl Separable {
    fn build(store: &mut ParamStore, init: &mut Init, name: &str, cin: usize, cout: usize, dilation: usize) -> Self {
        Separable {
            depthwise: Conv::new(
                store,
                init,
                &format!("{name}.depthwise"),
                cin,
                cin,
                3,
                ConvSpec::same(3, dilation).with_groups(cin),
                false,
            ),
            pointwise: Conv::new(store, init, &format!("{name}.pointwise"), cin, cout, 1, ConvSpec::same(1, 1), false),
            bn: BatchNorm::new(store, &format!("{name}.bn"), cout),
        }
    }

    fn forward(&self, s: &Session<'_>, x: &Var) -> Var {
        relu(&s.batch_norm(&self.bn, &s.conv(&self.pointwise, &s.conv(&self.depthwise, x))))
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvBnRelu {
    conv: Conv,
    bn: BatchNorm,
}

impl ConvBnRelu {
    fn pointwise(store: &mut ParamStore, init: &mut Init, name: &str, cin: usize, cout: usize) -> Self {
        ConvBnRelu {
            conv: Conv::new(store, init, &format!("{name}.conv"), cin, cout, 1, ConvSpec::same(1, 1), false),
            bn: BatchNorm::new(store, &format!("{name}.bn"), cout),
        }
    }

    fn forward(&self, s: &Session<'_>, x: &Var) -> Var {
        relu(&s.batch_norm(&self.bn, &s.conv(&self.conv, x)))
    }
}

/// One parallel ASPP branch.
#[derive(Debug, Clone, Copy)]
enum Branch {
    Pointwise(ConvBnRelu),
    Atrous { rate: usize, conv: Separable },
    Pooling(ConvBnRelu),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BranchSummary {
    Pointwise,
    Atrous { rate: usize },
    GlobalPooling,
}

/// Structural description of a built model.
#[derive(Debug, Clone, Serialize)]
pub struct ModelSummary {
    pub backbone: String,
    pub encoder_blocks: Vec<BlockSummary>,
    pub encoder_output_stride: usize,
    pub aspp_branches: Vec<BranchSummary>,
    pub aspp_channels: usize,
    pub low_level_stride: usize,
    pub low_level_in_channels: usize,
    pub low_level_projected_channels: usize,
    pub decoder_upsamples_aspp: bool,
    pub decoder_concat_channels: usize,
    pub head_channels: usize,
    pub head_activation: &'static str,
    pub parameter_count: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardOptions {
    /// Replaces the projected low-level skip feature with zeros.
    pub zero_low_level: bool,
}

#[derive(Debug, Clone)]
struct Network {
    encoder: EfficientNet,
    branches: Vec<Branch>,
    aspp_project: ConvBnRelu,
    low_level: ConvBnRelu,
    fuse: Separable,
    head: Conv,
}

/// Trained parameters plus the configuration they were built from.
#[derive(Debug, Clone)]
pub struct SegmentationModel {
    config: ModelConfig,
    store: ParamStore,
    net: Network,
}

/// Loss, parameter gradients and batch statistics of one training pass.
pub struct TrainPass {
    pub loss: f64,
    pub grads: Gradients,
    pub stats: Vec<(BatchNorm, BatchStats)>,
}

pub fn build_model(cfg: &ModelConfig) -> Result<SegmentationModel> {
    cfg.validate()?;
    if let Backbone::EfficientNet(v) = cfg.backbone {
        if v > 7 {
            return Err(Error::Config(format!("unknown backbone efficientnet-b{v}")));
        }
    }
    let mut store = ParamStore::new();
    let mut init = Init::new(cfg.init_seed);
    let encoder = EfficientNet::build(&mut store, &mut init, cfg.backbone, cfg.output_stride);
    let c = cfg.aspp_channels;
    let high = encoder.out_channels();
    let mut branches = vec![Branch::Pointwise(ConvBnRelu::pointwise(&mut store, &mut init, "aspp.0", high, c))];
    for (i, &rate) in cfg.aspp_rates.iter().enumerate() {
        branches.push(Branch::Atrous {
            rate,
            conv: Separable::build(&mut store, &mut init, &format!("aspp.{}", i + 1), high, c, rate),
        });
    }
    let pool_name = format!("aspp.{}", cfg.aspp_rates.len() + 1);
    branches.push(Branch::Pooling(ConvBnRelu::pointwise(&mut store, &mut init, &pool_name, high, c)));
    let aspp_project = ConvBnRelu::pointwise(&mut store, &mut init, "aspp.project", branches.len() * c, c);
    let low_level = ConvBnRelu::pointwise(
        &mut store,
        &mut init,
        "decoder.low_level",
        encoder.low_level_channels(),
        cfg.decoder_low_level_channels,
    );
    let fuse = Separable::build(
        &mut store,
        &mut init,
        "decoder.fuse",
        c + cfg.decoder_low_level_channels,
        c,
        1,
    );
    let head = Conv::new(&mut store, &mut init, "head.conv", c, cfg.num_output_channels, 1, ConvSpec::same(1, 1), true);
    Ok(SegmentationModel {
        config: cfg.clone(),
        store,
        net: Network {
            encoder,
            branches,
            aspp_project,
            low_level,
            fuse,
            head,
        },
    })
}

/// Packs RGB rasters into an `N x H x W x 3` batch scaled to [0, 1].
pub fn images_to_batch(images: &[&RasterImage]) -> Result<Tensor> {
    let first = images.first().ok_or_else(|| Error::Inference("empty batch".into()))?;
    let (h, w) = first.dims();
    let mut data = Vec::with_capacity(images.len() * h * w * 3);
    for img in images {
        img.require_rgb()?;
        if img.dims() != (h, w) {
            return Err(Error::Inference(format!(
                "batch mixes image sizes {:?} and {:?}",
                (h, w),
                img.dims()
            )));
        }
        data.extend(img.data().iter().map(|&v| v as f64 / 255.0));
    }
    Ok(Tensor::new(vec![images.len(), h, w, 3], data))
}

/// Binary masks as `N x 1 x H x W` targets.
pub fn masks_to_targets(masks: &[&RasterImage]) -> Result<Tensor> {
    let first = masks.first().ok_or_else(|| Error::Inference("empty batch".into()))?;
    let (h, w) = first.dims();
    let mut data = Vec::with_capacity(masks.len() * h * w);
    for m in masks {
        if m.color_space() != ColorSpace::Gray || m.dims() != (h, w) {
            return Err(Error::Inference("targets must be single-channel masks of one size".into()));
        }
        data.extend(m.data().iter().map(|&v| if v > 0 { 1.0 } else { 0.0 }));
    }
    Ok(Tensor::new(vec![masks.len(), 1, h, w], data))
}

impl SegmentationModel {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn parameter_count(&self) -> usize {
        self.store.scalar_count()
    }

    pub fn describe(&self) -> ModelSummary {
        let encoder_output_stride = 2 * self.net.encoder.blocks().iter().map(|b| b.stride).product::<usize>();
        let aspp_branches = self
            .net
            .branches
            .iter()
            .map(|b| match b {
                Branch::Pointwise(_) => BranchSummary::Pointwise,
                Branch::Atrous { rate, .. } => BranchSummary::Atrous { rate: *rate },
                Branch::Pooling(_) => BranchSummary::GlobalPooling,
            })
            .collect();
        ModelSummary {
            backbone: self.config.backbone.to_string(),
            encoder_blocks: self.net.encoder.blocks().to_vec(),
            encoder_output_stride,
            aspp_branches,
            aspp_channels: self.config.aspp_channels,
            low_level_stride: 4,
            low_level_in_channels: self.net.encoder.low_level_channels(),
            low_level_projected_channels: self.config.decoder_low_level_channels,
            decoder_upsamples_aspp: true,
            decoder_concat_channels: self.config.aspp_channels + self.config.decoder_low_level_channels,
            head_channels: self.net.head.out_channels(&self.store),
            head_activation: "sigmoid",
            parameter_count: self.parameter_count(),
        }
    }

    fn check_batch(&self, batch: &Tensor) -> Result<(usize, usize, usize)> {
        let shape = batch.shape();
        if shape.len() != 4 || shape[3] != 3 {
            return Err(Error::Inference(format!("expected an N x H x W x 3 batch, got {shape:?}")));
        }
        let (n, h, w) = (shape[0], shape[1], shape[2]);
        let os = self.config.output_stride;
        if n == 0 || h == 0 || w == 0 || h % os != 0 || w % os != 0 {
            return Err(Error::Inference(format!(
                "batch {shape:?} needs non-empty spatial sides divisible by the output stride {os}"
            )));
        }
        if let Some(bad) = batch.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Inference(format!("input value {bad} outside [0, 1]")));
        }
        Ok((n, h, w))
    }

    /// NHWC in [0, 1] to standardised NCHW.
    fn standardise(batch: &Tensor, n: usize, h: usize, w: usize) -> Tensor {
        let hw = h * w;
        let mut out = vec![0.0; n * 3 * hw];
        for i in 0..n {
            let src = &batch.data()[i * hw * 3..(i + 1) * hw * 3];
            for (p, px) in src.chunks_exact(3).enumerate() {
                for c in 0..3 {
                    out[(i * 3 + c) * hw + p] = (px[c] - IMAGENET_MEAN[c]) / IMAGENET_STD[c];
                }
            }
        }
        Tensor::new(vec![n, 3, h, w], out)
    }

    fn logits(&self, s: &Session<'_>, x: &Var, opts: ForwardOptions) -> Var {
        let (_, _, h, w) = x.value().dims4();
        let feats = self.net.encoder.forward(s, x);
        let (_, _, fh, fw) = feats.high_level.value().dims4();
        let branches: Vec<Var> = self
            .net
            .branches
            .iter()
            .map(|b| match b {
                Branch::Pointwise(layer) => layer.forward(s, &feats.high_level),
                Branch::Atrous { conv, .. } => conv.forward(s, &feats.high_level),
                Branch::Pooling(layer) => {
                    broadcast_spatial(&layer.forward(s, &global_avg_pool(&feats.high_level)), fh, fw)
                }
            })
            .collect();
        let aspp = self.net.aspp_project.forward(s, &concat_channels(&branches));
        let (_, _, lh, lw) = feats.low_level.value().dims4();
        let up = resize_bilinear(&aspp, lh, lw);
        let mut skip = self.net.low_level.forward(s, &feats.low_level);
        if opts.zero_low_level {
            skip = Var::constant(Tensor::zeros(skip.shape()));
        }
        let fused = self.net.fuse.forward(s, &concat_channels(&[up, skip]));
        let head = s.conv(&self.net.head, &fused);
        resize_bilinear(&head, h, w)
    }

    /// Probabilities `N x H x W x 1` for an `N x H x W x 3` batch in [0, 1].
    /// Every sample is processed on its own with running batch-norm statistics.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        self.forward_with(batch, ForwardOptions::default())
    }

    pub fn forward_with(&self, batch: &Tensor, opts: ForwardOptions) -> Result<Tensor> {
        let (n, h, w) = self.check_batch(batch)?;
        let mut out = Vec::with_capacity(n * h * w);
        for i in 0..n {
            let x = Self::standardise(&batch.batch_item(i), 1, h, w);
            let session = Session::new(&self.store, Mode::Eval);
            let z = self.logits(&session, &Var::constant(x), opts);
            out.extend(z.value().data().iter().map(|&v| sigmoid_scalar(v)));
        }
        if let Some(bad) = out.iter().find(|v| !v.is_finite()) {
            return Err(Error::Inference(format!("non-finite output {bad}")));
        }
        Ok(Tensor::new(vec![n, h, w, 1], out))
    }

    /// Mean BCE of the whole batch in training mode (batch statistics) together
    /// with gradients for every trainable parameter.
    pub fn train_pass(&self, batch: &Tensor, targets: &Tensor) -> Result<TrainPass> {
        let (n, h, w) = self.check_batch(batch)?;
        if targets.shape() != [n, 1, h, w] {
            return Err(Error::Inference(format!(
                "targets {:?} do not match batch {:?}",
                targets.shape(),
                batch.shape()
            )));
        }
        let x = Self::standardise(batch, n, h, w);
        let session = Session::new(&self.store, Mode::Train);
        let z = self.logits(&session, &Var::constant(x), ForwardOptions::default());
        let loss = bce_with_logits(&z, targets);
        let grads = backward(&loss);
        let value = loss.value().data()[0];
        drop(loss);
        drop(z);
        Ok(TrainPass {
            loss: value,
            grads,
            stats: session.into_stats(),
        })
    }

    /// Mean BCE in evaluation mode, without gradients.
    pub fn eval_loss(&self, batch: &Tensor, targets: &Tensor) -> Result<f64> {
        let (n, h, w) = self.check_batch(batch)?;
        if targets.shape() != [n, 1, h, w] {
            return Err(Error::Inference("targets do not match batch".into()));
        }
        let mut total = 0.0;
        for i in 0..n {
            let x = Self::standardise(&batch.batch_item(i), 1, h, w);
            let session = Session::new(&self.store, Mode::Eval);
            let z = self.logits(&session, &Var::constant(x), ForwardOptions::default());
            total += bce_with_logits(&z, &targets.batch_item(i)).value().data()[0];
        }
        Ok(total / n as f64)
    }

    /// Runs only the dilated depthwise convolution of ASPP atrous branch
    /// `index` (0-based among the atrous branches) on an NCHW tensor.
    pub fn atrous_probe(&self, index: usize, x: &Tensor) -> Result<Tensor> {
        let conv = self
            .net
            .branches
            .iter()
            .filter_map(|b| match b {
                Branch::Atrous { conv, .. } => Some(conv.depthwise),
                _ => None,
            })
            .nth(index)
            .ok_or_else(|| Error::Inference(format!("no atrous branch {index}")))?;
        let channels = self.store.param(conv.weight).value.shape()[0];
        if x.shape().len() != 4 || x.shape()[1] != channels {
            return Err(Error::Inference(format!("probe input must be N x {channels} x H x W")));
        }
        let session = Session::new(&self.store, Mode::Eval);
        Ok(session.conv(&conv, &Var::constant(x.clone())).value().clone())
    }

    /// Replaces parameter values from another store by name and shape; returns
    /// how many were copied.
    pub fn load_matching(&mut self, other: &ParamStore, prefix: &str) -> Result<usize> {
        let mut copied = 0;
        for p in other.params().iter().filter(|p| p.name.starts_with(prefix)) {
            let Some(id) = self.store.find(&p.name) else {
                continue;
            };
            let target = self.store.param_mut(id);
            if target.value.shape() != p.value.shape() {
                return Err(Error::ConfigMismatch(format!(
                    "{}: shape {:?} vs {:?}",
                    p.name,
                    p.value.shape(),
                    target.value.shape()
                )));
            }
            target.value = p.value.clone();
            copied += 1;
        }
        let names: std::collections::HashMap<&str, usize> =
            self.store.buffers().iter().enumerate().map(|(i, b)| (b.name.as_str(), i)).collect();
        let mut updates = Vec::new();
        for b in other.buffers().iter().filter(|b| b.name.starts_with(prefix)) {
            if let Some(&i) = names.get(b.name.as_str()) {
                updates.push((i, b.value.clone()));
            }
        }
        for (i, v) in updates {
            let id = crate::nn::params::BufferId(i);
            if self.store.buffer(id).len() != v.len() {
                return Err(Error::ConfigMismatch(format!("buffer {} length differs", self.store.buffers()[i].name)));
            }
            *self.store.buffer_mut(id) = v;
        }
        Ok(copied)
    }
}
