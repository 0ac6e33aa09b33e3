//! Named network layouts.
//!
//! The `toy` layouts are the defaults at desk scale; the `tiny` layouts stay
//! under a thousand parameters for exhaustive gradient checks; `vgg`,
//! `dcgan` and `resnet50` follow the classic full-size families.

use serde::{Deserialize, Serialize};

use super::{Architecture, LayerSpec};

const SLOPE: f64 = 0.2;

fn conv(i: usize, o: usize, kernel: usize, stride: usize, padding: usize) -> LayerSpec {
    LayerSpec::Conv2d {
        in_channels: i,
        out_channels: o,
        kernel,
        stride,
        padding,
    }
}

fn up(i: usize, o: usize) -> LayerSpec {
    LayerSpec::ConvTranspose2d {
        in_channels: i,
        out_channels: o,
        kernel: 4,
        stride: 2,
        padding: 1,
    }
}

fn lrelu() -> LayerSpec {
    LayerSpec::LeakyRelu { slope: SLOPE }
}

fn arch(name: &str, dims: (usize, usize, usize), layers: Vec<LayerSpec>) -> Architecture {
    Architecture {
        name: name.to_string(),
        input_channels: dims.0,
        input_height: dims.1,
        input_width: dims.2,
        layers,
    }
}

/// Layouts for the frequency-level generator `H` (input and output `2c` planes).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorPreset {
    /// Two stride-2 encoder convs (16, 32) and two stride-2 decoder
    /// transposed convs; linear output.
    #[default]
    Toy,
    /// Two same-size convs with 8 hidden channels.
    Tiny,
    /// VGG-style stacks of 3×3 convs (64-128-256) with a mirrored decoder.
    Vgg,
    /// A single 1×1 conv; see `Generator::identity`.
    Identity,
}

impl GeneratorPreset {
    pub fn build(self, channels: usize, height: usize, width: usize) -> Architecture {
        let c2 = 2 * channels;
        let dims = (c2, height, width);
        match self {
            GeneratorPreset::Toy => arch(
                "generator/toy",
                dims,
                vec![
                    conv(c2, 16, 3, 2, 1),
                    lrelu(),
                    conv(16, 32, 3, 2, 1),
                    lrelu(),
                    up(32, 16),
                    lrelu(),
                    up(16, c2),
                ],
            ),
            GeneratorPreset::Tiny => arch(
                "generator/tiny",
                dims,
                vec![conv(c2, 8, 3, 1, 1), lrelu(), conv(8, c2, 3, 1, 1)],
            ),
            GeneratorPreset::Vgg => arch(
                "generator/vgg",
                dims,
                vec![
                    conv(c2, 64, 3, 1, 1),
                    lrelu(),
                    conv(64, 64, 3, 2, 1),
                    lrelu(),
                    conv(64, 128, 3, 1, 1),
                    lrelu(),
                    conv(128, 128, 3, 2, 1),
                    lrelu(),
                    conv(128, 256, 3, 1, 1),
                    lrelu(),
                    up(256, 128),
                    lrelu(),
                    conv(128, 128, 3, 1, 1),
                    lrelu(),
                    up(128, 64),
                    lrelu(),
                    conv(64, c2, 3, 1, 1),
                ],
            ),
            GeneratorPreset::Identity => arch("generator/identity", dims, vec![conv(c2, c2, 1, 1, 0)]),
        }
    }
}

/// Layouts for the perturbation discriminator (one logit out).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscriminatorPreset {
    /// Four stride-2 3×3 convs (16-32-64-64), global pooling, linear head.
    #[default]
    Toy,
    /// One stride-2 conv with 4 channels and a linear head.
    Tiny,
    /// DCGAN-style stride-2 4×4 convs (64-128-256-512).
    Dcgan,
}

impl DiscriminatorPreset {
    pub fn build(self, channels: usize, height: usize, width: usize) -> Architecture {
        let dims = (channels, height, width);
        let strided = |name: &str, widths: &[usize], kernel: usize| {
            let mut layers = Vec::new();
            let mut prev = channels;
            for &w in widths {
                layers.push(conv(prev, w, kernel, 2, 1));
                layers.push(lrelu());
                prev = w;
            }
            layers.push(LayerSpec::GlobalAvgPool);
            layers.push(LayerSpec::Linear {
                inputs: prev,
                outputs: 1,
            });
            arch(name, dims, layers)
        };
        match self {
            DiscriminatorPreset::Toy => strided("discriminator/toy", &[16, 32, 64, 64], 3),
            DiscriminatorPreset::Tiny => strided("discriminator/tiny", &[4], 3),
            DiscriminatorPreset::Dcgan => strided("discriminator/dcgan", &[64, 128, 256, 512], 4),
        }
    }
}

/// Layouts for the deepfake classifier (one logit out).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierPreset {
    /// Five stride-2 3×3 convs (16-32-64-64-64), global pooling, linear head.
    #[default]
    Toy,
    /// Two stride-2 convs with 4 channels and a linear head.
    Tiny,
    /// Bottleneck residual network with the 3-4-6-3 stage layout.
    Resnet50,
}

impl ClassifierPreset {
    pub fn build(self, channels: usize, height: usize, width: usize) -> Architecture {
        let dims = (channels, height, width);
        let strided = |name: &str, widths: &[usize]| {
            let mut layers = Vec::new();
            let mut prev = channels;
            for &w in widths {
                layers.push(conv(prev, w, 3, 2, 1));
                layers.push(lrelu());
                prev = w;
            }
            layers.push(LayerSpec::GlobalAvgPool);
            layers.push(LayerSpec::Linear {
                inputs: prev,
                outputs: 1,
            });
            arch(name, dims, layers)
        };
        match self {
            ClassifierPreset::Toy => strided("classifier/toy", &[16, 32, 64, 64, 64]),
            ClassifierPreset::Tiny => strided("classifier/tiny", &[4, 4]),
            ClassifierPreset::Resnet50 => resnet50(dims),
        }
    }
}

fn bottleneck(inputs: usize, width: usize, stride: usize) -> LayerSpec {
    let outputs = 4 * width;
    let shortcut = (stride != 1 || inputs != outputs).then(|| Box::new(conv(inputs, outputs, 1, stride, 0)));
    LayerSpec::Residual {
        body: vec![
            conv(inputs, width, 1, 1, 0),
            LayerSpec::Relu,
            conv(width, width, 3, stride, 1),
            LayerSpec::Relu,
            conv(width, outputs, 1, 1, 0),
        ],
        shortcut,
    }
}

fn resnet50(dims: (usize, usize, usize)) -> Architecture {
    let mut layers = vec![conv(dims.0, 64, 7, 2, 3), LayerSpec::Relu];
    let mut prev = 64;
    for (stage, (&blocks, &width)) in [3usize, 4, 6, 3].iter().zip(&[64usize, 128, 256, 512]).enumerate() {
        for b in 0..blocks {
            let stride = if b == 0 && stage > 0 { 2 } else { 1 };
            layers.push(bottleneck(prev, width, stride));
            prev = 4 * width;
        }
    }
    layers.push(LayerSpec::GlobalAvgPool);
    layers.push(LayerSpec::Linear {
        inputs: prev,
        outputs: 1,
    });
    arch("classifier/resnet50", dims, layers)
}
