use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Mode, Module, Slot, Var};
use crate::error::{Error, Result};
use crate::layers::{Activation, Conv2d, ConvBlock};
use crate::morphology::{default_se_schedule, MultiScaleConfig, MultiScaleMorphBlock};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    /// Tile height and width.
    pub size: usize,
    /// Channel width of encoder scales `1..=L`.
    pub widths: Vec<usize>,
    /// Width of the full-resolution stem and output stage.
    pub stem: usize,
    /// Channel splits per multi-scale morphology block.
    pub scale: usize,
    /// Structuring sizes for splits `2..=scale`; defaults to the 3x3/5x5 halves.
    pub se_sizes: Option<Vec<usize>>,
    pub separate_se: bool,
    pub morph_activation: Activation,
    pub outer_activation: Activation,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            size: 128,
            widths: vec![32, 64, 128, 256],
            stem: 8,
            scale: 8,
            se_sizes: None,
            separate_se: false,
            morph_activation: Activation::Relu,
            outer_activation: Activation::Relu,
        }
    }
}

impl GeneratorConfig {
    pub fn scales(&self) -> usize {
        self.widths.len()
    }

    pub fn se_schedule(&self) -> Vec<usize> {
        self.se_sizes
            .clone()
            .unwrap_or_else(|| default_se_schedule(self.scale))
    }

    fn morph_config(&self, channels: usize) -> MultiScaleConfig {
        MultiScaleConfig {
            channels,
            scale: self.scale,
            se_sizes: self.se_schedule(),
            conv_kernel: 3,
            outer_activation: self.outer_activation,
            morph_activation: self.morph_activation,
            separate_se: self.separate_se,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid("generator config", m));
        let l = self.scales();
        if l == 0 {
            return bad("need at least one scale".into());
        }
        if !self.size.is_power_of_two() || self.size % (1 << l) != 0 {
            return bad(format!(
                "size {} must be a power of two divisible by 2^{l}",
                self.size
            ));
        }
        if self.stem == 0 {
            return bad("stem width must be positive".into());
        }
        for &w in &self.widths {
            self.morph_config(w).validate()?;
        }
        Ok(())
    }
}

/// Encoder-decoder mask generator.
///
/// Encoder scale `i` downsamples with a stride-2 conv block to `f_i`, then
/// refines it with a multi-scale morphology block into `m_i`. The deepest
/// `m_L` passes through a bottleneck block. Decoding runs
/// `u_j = Fuse([Up(u_{j+1}), m_j])` back to scale 1, and a final upsample
/// is fused with the full-resolution stem before the sigmoid head.
pub struct Generator<T> {
    cfg: GeneratorConfig,
    pub stem: ConvBlock<T>,
    pub down: Vec<ConvBlock<T>>,
    pub morph: Vec<MultiScaleMorphBlock<T>>,
    pub bottleneck: MultiScaleMorphBlock<T>,
    /// `up[j]` maps scale `j + 1` to scale `j` (scale 0 is the stem).
    pub up: Vec<Conv2d<T>>,
    pub fuse: Vec<ConvBlock<T>>,
    pub head: Conv2d<T>,
}

/// Intermediate maps of one forward pass.
pub struct GeneratorTrace {
    pub output: Var,
    /// Pre-sigmoid head output.
    pub logits: Var,
    /// `m_1..m_L`.
    pub skips: Vec<Var>,
}

impl<T: Real> Generator<T> {
    pub fn new(cfg: &GeneratorConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let l = cfg.scales();
        let mut chans = vec![cfg.stem];
        chans.extend(&cfg.widths);
        let stem = ConvBlock::new("gen.stem", 1, cfg.stem, 3, 1, rng);
        let mut down = Vec::with_capacity(l);
        let mut morph = Vec::with_capacity(l);
        for i in 1..=l {
            down.push(ConvBlock::new(&format!("gen.down{i}"), chans[i - 1], chans[i], 3, 2, rng));
            morph.push(MultiScaleMorphBlock::new(
                &format!("gen.msm{i}"),
                &cfg.morph_config(chans[i]),
                rng,
            )?);
        }
        let bottleneck = MultiScaleMorphBlock::new("gen.bottleneck", &cfg.morph_config(chans[l]), rng)?;
        let mut up = Vec::with_capacity(l);
        let mut fuse = Vec::with_capacity(l);
        for j in 0..l {
            up.push(Conv2d::new(&format!("gen.up{j}"), chans[j + 1], 4 * chans[j], 1, 1, rng));
            fuse.push(ConvBlock::new(&format!("gen.fuse{j}"), 2 * chans[j], chans[j], 3, 1, rng));
        }
        let head = Conv2d::new("gen.head", cfg.stem, 1, 1, 1, rng);
        Ok(Generator {
            cfg: cfg.clone(),
            stem,
            down,
            morph,
            bottleneck,
            up,
            fuse,
            head,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn forward(&mut self, g: &mut Graph<T>, x: Var, mode: Mode) -> Result<Var> {
        Ok(self.trace(g, x, mode, None)?.output)
    }

    /// Full forward pass. `skips[i]`, when given and false, replaces the
    /// skip connection `m_{i+1}` with zeros (ablation). `m_L` feeds the
    /// bottleneck rather than a skip, so only the first `L - 1` entries
    /// matter.
    pub fn trace(
        &mut self,
        g: &mut Graph<T>,
        x: Var,
        mode: Mode,
        skips: Option<&[bool]>,
    ) -> Result<GeneratorTrace> {
        let s = g.shape(x);
        let n = self.cfg.size;
        for (dim, expected, got) in [("channels", 1, s.c), ("height", n, s.h), ("width", n, s.w)] {
            if expected != got {
                return Err(Error::Shape {
                    op: "generator",
                    dim,
                    expected,
                    got,
                });
            }
        }
        let l = self.cfg.scales();
        let f0 = self.stem.forward(g, x, mode)?;
        let mut feats = vec![f0];
        let mut ms = Vec::with_capacity(l);
        let mut cur = f0;
        for i in 0..l {
            let f = self.down[i].forward(g, cur, mode)?;
            let m = self.morph[i].forward(g, f, mode)?;
            ms.push(m);
            cur = m;
        }
        for (i, &m) in ms.iter().enumerate() {
            let on = skips.is_none_or(|k| k.get(i).copied().unwrap_or(true));
            feats.push(if on {
                m
            } else {
                let z = Tensor::zeros(g.shape(m));
                g.input(z)
            });
        }
        let mut u = self.bottleneck.forward(g, cur, mode)?;
        for j in (0..l).rev() {
            let up = self.up[j].forward(g, u)?;
            let up = g.pixel_shuffle(up, 2)?;
            let cat = g.concat_channels(&[up, feats[j]])?;
            u = self.fuse[j].forward(g, cat, mode)?;
        }
        let logits = self.head.forward(g, u)?;
        Ok(GeneratorTrace {
            output: g.sigmoid(logits),
            logits,
            skips: ms,
        })
    }

    /// Eval-mode prediction without gradient bookkeeping beyond one graph.
    pub fn predict(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let x = g.input(input.clone());
        let y = self.forward(&mut g, x, Mode::Eval)?;
        Ok(g.value(y).clone())
    }
}

impl<T: Real> Module<T> for Generator<T> {
    fn visit(&mut self, f: &mut dyn FnMut(Slot<'_, T>)) {
        self.stem.visit(f);
        for (d, m) in self.down.iter_mut().zip(&mut self.morph) {
            d.visit(f);
            m.visit(f);
        }
        self.bottleneck.visit(f);
        for (u, fu) in self.up.iter_mut().zip(&mut self.fuse) {
            u.visit(f);
            fu.visit(f);
        }
        self.head.visit(f);
    }
}
