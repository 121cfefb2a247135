//! EfficientNet feature extractor (MBConv blocks with squeeze-and-excitation),
//! with strides beyond the target output stride replaced by dilation.

use serde::Serialize;

use crate::model::config::Backbone;
use crate::nn::ops::{global_avg_pool, scale_channels, sigmoid, silu};
use crate::nn::{BatchNorm, Conv, ConvSpec, Init, ParamStore, Session, Var};

/// (expand ratio, kernel, stride, input channels, output channels, repeats) of B0.
const B0_STAGES: [(usize, usize, usize, usize, usize, usize); 7] = [
    (1, 3, 1, 32, 16, 1),
    (6, 3, 2, 16, 24, 2),
    (6, 5, 2, 24, 40, 2),
    (6, 3, 2, 40, 80, 3),
    (6, 5, 1, 80, 112, 3),
    (6, 5, 2, 112, 192, 4),
    (6, 3, 1, 192, 320, 1),
];

const STEM_CHANNELS: usize = 32;
const SE_RATIO: f64 = 0.25;
/// Stage whose output (at stride 4) feeds the decoder skip connection.
const LOW_LEVEL_STAGE: usize = 1;

pub fn round_filters(channels: usize, width: f64) -> usize {
    let scaled = channels as f64 * width;
    let mut rounded = (((scaled + 4.0) as usize) / 8 * 8).max(8);
    if (rounded as f64) < 0.9 * scaled {
        rounded += 8;
    }
    rounded
}

pub fn round_repeats(repeats: usize, depth: f64) -> usize {
    ((repeats as f64 * depth).ceil() as usize).max(1)
}

#[derive(Debug, Clone, Copy)]
struct SqueezeExcite {
    reduce: Conv,
    expand: Conv,
}

#[derive(Debug, Clone)]
struct MbConv {
    expand: Option<(Conv, BatchNorm)>,
    depthwise: (Conv, BatchNorm),
    se: SqueezeExcite,
    project: (Conv, BatchNorm),
    residual: bool,
}

/// Introspection record for one MBConv block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockSummary {
    pub stage: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub residual: bool,
}

#[derive(Debug, Clone)]
pub struct EfficientNet {
    stem: (Conv, BatchNorm),
    blocks: Vec<(usize, MbConv)>,
    summaries: Vec<BlockSummary>,
    low_level_channels: usize,
    out_channels: usize,
}

/// Encoder outputs: the stride-4 skip feature and the deepest feature map.
pub struct Features {
    pub low_level: Var,
    pub high_level: Var,
}

impl EfficientNet {
    pub fn build(store: &mut ParamStore, init: &mut Init, backbone: Backbone, output_stride: usize) -> Self {
        let (width, depth) = backbone.scaling();
        let stem_out = round_filters(STEM_CHANNELS, width);
        let stem = (
            Conv::new(store, init, "encoder.stem.conv", 3, stem_out, 3, ConvSpec::same(3, 1).with_stride(2), false),
            BatchNorm::new(store, "encoder.stem.bn", stem_out),
        );
        let mut current_stride = 2;
        let mut dilation = 1;
        let mut blocks = Vec::new();
        let mut summaries = Vec::new();
        let mut low_level_channels = 0;
        let mut channels = stem_out;
        for (stage, &(expand_ratio, kernel, stride, _, out, repeats)) in B0_STAGES.iter().enumerate() {
            let out = round_filters(out, width);
            for r in 0..round_repeats(repeats, depth) {
                let mut block_stride = if r == 0 { stride } else { 1 };
                if block_stride > 1 && current_stride * block_stride > output_stride {
                    dilation *= block_stride;
                    block_stride = 1;
                } else {
                    current_stride *= block_stride;
                }
                let name = format!("encoder.blocks.{}", blocks.len());
                let block = MbConv::build(store, init, &name, channels, out, expand_ratio, kernel, block_stride, dilation);
                summaries.push(BlockSummary {
                    stage,
                    in_channels: channels,
                    out_channels: out,
                    kernel,
                    stride: block_stride,
                    dilation,
                    residual: block.residual,
                });
                blocks.push((stage, block));
                channels = out;
            }
            if stage == LOW_LEVEL_STAGE {
                low_level_channels = channels;
            }
        }
        EfficientNet {
            stem,
            blocks,
            summaries,
            low_level_channels,
            out_channels: channels,
        }
    }

    pub fn low_level_channels(&self) -> usize {
        self.low_level_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn blocks(&self) -> &[BlockSummary] {
        &self.summaries
    }

    pub fn forward(&self, s: &Session<'_>, x: &Var) -> Features {
        let mut h = silu(&s.batch_norm(&self.stem.1, &s.conv(&self.stem.0, x)));
        let mut low_level = None;
        for (i, (stage, block)) in self.blocks.iter().enumerate() {
            h = block.forward(s, &h);
            let last_of_stage = self.blocks.get(i + 1).is_none_or(|(next, _)| next != stage);
            if *stage == LOW_LEVEL_STAGE && last_of_stage {
                low_level = Some(h.clone());
            }
        }
        Features {
            low_level: low_level.expect("encoder has a low-level stage"),
            high_level: h,
        }
    }
}

impl MbConv {
    #[allow(clippy::too_many_arguments)]
    fn build(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        cin: usize,
        cout: usize,
        expand_ratio: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
    ) -> Self {
        let hidden = cin * expand_ratio;
        let expand = (expand_ratio != 1).then(|| {
            (
                Conv::new(store, init, &format!("{name}.expand.conv"), cin, hidden, 1, ConvSpec::same(1, 1), false),
                BatchNorm::new(store, &format!("{name}.expand.bn"), hidden),
            )
        });
        let dw_spec = ConvSpec::same(kernel, dilation).with_stride(stride).with_groups(hidden);
        let depthwise = (
            Conv::new(store, init, &format!("{name}.depthwise.conv"), hidden, hidden, kernel, dw_spec, false),
            BatchNorm::new(store, &format!("{name}.depthwise.bn"), hidden),
        );
        let squeezed = ((cin as f64 * SE_RATIO) as usize).max(1);
        let se = SqueezeExcite {
            reduce: Conv::new(store, init, &format!("{name}.se.reduce"), hidden, squeezed, 1, ConvSpec::same(1, 1), true),
            expand: Conv::new(store, init, &format!("{name}.se.expand"), squeezed, hidden, 1, ConvSpec::same(1, 1), true),
        };
        let project = (
            Conv::new(store, init, &format!("{name}.project.conv"), hidden, cout, 1, ConvSpec::same(1, 1), false),
            BatchNorm::new(store, &format!("{name}.project.bn"), cout),
        );
        MbConv {
            expand,
            depthwise,
            se,
            project,
            residual: stride == 1 && cin == cout,
        }
    }

    fn forward(&self, s: &Session<'_>, x: &Var) -> Var {
        let mut h = x.clone();
        if let Some((conv, bn)) = &self.expand {
            h = silu(&s.batch_norm(bn, &s.conv(conv, &h)));
        }
        h = silu(&s.batch_norm(&self.depthwise.1, &s.conv(&self.depthwise.0, &h)));
        let gate = sigmoid(&s.conv(&self.se.expand, &silu(&s.conv(&self.se.reduce, &global_avg_pool(&h)))));
        h = scale_channels(&h, &gate);
        h = s.batch_norm(&self.project.1, &s.conv(&self.project.0, &h));
        if self.residual {
            h = crate::nn::ops::add(&h, x);
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compound_scaling_matches_reference_widths() {
        assert_eq!(round_filters(32, 1.0), 32);
        assert_eq!(round_filters(320, 1.1), 352);
        assert_eq!(round_filters(32, 1.4), 48);
        assert_eq!(round_filters(320, 2.0), 640);
        assert_eq!(round_filters(40, 0.25), 16);
        assert_eq!(round_repeats(4, 1.2), 5);
        assert_eq!(round_repeats(1, 3.1), 4);
    }

    #[test]
    fn b0_block_layout_and_dilation() {
        let mut store = ParamStore::new();
        let net = EfficientNet::build(&mut store, &mut Init::new(0), Backbone::B0, 16);
        assert_eq!(net.blocks().len(), 16);
        assert_eq!(net.low_level_channels(), 24);
        assert_eq!(net.out_channels(), 320);
        let total_stride: usize = 2 * net.blocks().iter().map(|b| b.stride).product::<usize>();
        assert_eq!(total_stride, 16);
        // the last stride-2 block became dilated, and so did everything after it
        let dilated: Vec<usize> = net.blocks().iter().filter(|b| b.dilation == 2).map(|b| b.stage).collect();
        assert_eq!(dilated, vec![5, 5, 5, 5, 6]);

        let mut store8 = ParamStore::new();
        let net8 = EfficientNet::build(&mut store8, &mut Init::new(0), Backbone::B0, 8);
        assert_eq!(2 * net8.blocks().iter().map(|b| b.stride).product::<usize>(), 8);
        assert_eq!(net8.blocks().last().unwrap().dilation, 4);
    }
}
