use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{BatchNorm, Graph, Mode, Module, Slot, Var};
use crate::error::{Error, Result};
use crate::layers::{Activation, Conv2d, ConvBlock};
use crate::morphology::basic::{MorphBasicBlock, MorphBasicConfig};
use crate::real::Real;

/// Structuring-window sizes for splits `2..=s`: splits in the first half of
/// the channel groups get 3x3, the rest 5x5.
pub fn default_se_schedule(scale: usize) -> Vec<usize> {
    let half = scale.div_ceil(2);
    (2..=scale).map(|i| if i <= half { 3 } else { 5 }).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiScaleConfig {
    pub channels: usize,
    pub scale: usize,
    /// One entry per operator-bearing split (`scale - 1` entries).
    pub se_sizes: Vec<usize>,
    pub conv_kernel: usize,
    pub outer_activation: Activation,
    pub morph_activation: Activation,
    pub separate_se: bool,
}

impl MultiScaleConfig {
    pub fn new(channels: usize, scale: usize) -> Self {
        MultiScaleConfig {
            channels,
            scale,
            se_sizes: default_se_schedule(scale),
            conv_kernel: 3,
            outer_activation: Activation::Relu,
            morph_activation: Activation::Relu,
            separate_se: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale < 2 {
            return Err(Error::invalid(
                "multiscale_morph",
                format!("scale must be >= 2, got {}", self.scale),
            ));
        }
        if self.channels % self.scale != 0 {
            return Err(Error::ChannelsNotDivisible {
                op: "multiscale_morph",
                channels: self.channels,
                groups: self.scale,
            });
        }
        if self.se_sizes.len() != self.scale - 1 {
            return Err(Error::invalid(
                "multiscale_morph",
                format!(
                    "need {} structuring sizes (splits 2..={}), got {}",
                    self.scale - 1,
                    self.scale,
                    self.se_sizes.len()
                ),
            ));
        }
        Ok(())
    }

    pub fn split_width(&self) -> usize {
        self.channels / self.scale
    }
}

/// Channel-split hierarchy: split 1 passes through, split `i >= 2` goes
/// through a conv block and a [`MorphBasicBlock`] after adding the previous
/// split's output; results are concatenated, projected, normalized and
/// added back onto the input.
pub struct MultiScaleMorphBlock<T> {
    pub convs: Vec<ConvBlock<T>>,
    pub morphs: Vec<MorphBasicBlock<T>>,
    pub projection: Conv2d<T>,
    pub norm: BatchNorm<T>,
    pub outer_activation: Activation,
    scale: usize,
}

impl<T: Real> MultiScaleMorphBlock<T> {
    pub fn new(name: &str, cfg: &MultiScaleConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let w = cfg.split_width();
        let mut convs = Vec::with_capacity(cfg.scale - 1);
        let mut morphs = Vec::with_capacity(cfg.scale - 1);
        for (i, &se) in cfg.se_sizes.iter().enumerate() {
            let split = i + 2;
            convs.push(ConvBlock::new(
                &format!("{name}.f{split}"),
                w,
                w,
                cfg.conv_kernel,
                1,
                rng,
            ));
            let mcfg = MorphBasicConfig {
                channels: w,
                se_size: se,
                separate_se: cfg.separate_se,
                activation: cfg.morph_activation,
                norm: true,
            };
            morphs.push(MorphBasicBlock::new(&format!("{name}.mb{split}"), &mcfg, rng)?);
        }
        Ok(MultiScaleMorphBlock {
            convs,
            morphs,
            projection: Conv2d::new(&format!("{name}.proj"), cfg.channels, cfg.channels, 1, 1, rng),
            norm: BatchNorm::new(&format!("{name}.bn"), cfg.channels),
            outer_activation: cfg.outer_activation,
            scale: cfg.scale,
        })
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn channels(&self) -> usize {
        self.projection.in_channels()
    }

    pub fn forward(&mut self, g: &mut Graph<T>, x: Var, mode: Mode) -> Result<Var> {
        self.forward_probe(g, x, mode).map(|(y, _)| y)
    }

    /// Also returns the input of each morphological block (splits `2..=s`).
    pub fn forward_probe(&mut self, g: &mut Graph<T>, x: Var, mode: Mode) -> Result<(Var, Vec<Var>)> {
        let c = g.shape(x).c;
        if c != self.channels() {
            return Err(Error::Shape {
                op: "multiscale_morph",
                dim: "channels",
                expected: self.channels(),
                got: c,
            });
        }
        let xs = g.split_channels(x, self.scale)?;
        let mut ys = Vec::with_capacity(self.scale);
        let mut probes = Vec::with_capacity(self.scale - 1);
        ys.push(xs[0]);
        for (i, (conv, mb)) in self.convs.iter_mut().zip(&mut self.morphs).enumerate() {
            let split = i + 1;
            let inp = if split == 1 {
                xs[split]
            } else {
                g.add(xs[split], ys[split - 1])?
            };
            let f = conv.forward(g, inp, mode)?;
            probes.push(f);
            ys.push(mb.forward(g, f, mode)?);
        }
        let cat = g.concat_channels(&ys)?;
        let p = self.projection.forward(g, cat)?;
        let n = self.norm.forward(g, p, mode)?;
        let r = g.add(n, x)?;
        Ok((self.outer_activation.apply(g, r), probes))
    }
}

impl<T: Real> Module<T> for MultiScaleMorphBlock<T> {
    fn visit(&mut self, f: &mut dyn FnMut(Slot<'_, T>)) {
        for (conv, mb) in self.convs.iter_mut().zip(&mut self.morphs) {
            conv.visit(f);
            mb.visit(f);
        }
        self.projection.visit(f);
        self.norm.visit(f);
    }
}
