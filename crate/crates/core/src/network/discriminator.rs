use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Module, Slot, Var};
use crate::error::{Error, Result};
use crate::layers::Conv2d;
use crate::real::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorConfig {
    pub widths: Vec<usize>,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            widths: vec![16, 32, 64, 128],
        }
    }
}

/// Conditional discriminator over `[target, mask]`: stride-2 3x3 conv +
/// ReLU layers, a 1x1 conv to one channel, and a global spatial mean.
pub struct Discriminator<T> {
    pub convs: Vec<Conv2d<T>>,
    pub head: Conv2d<T>,
}

impl<T: Real> Discriminator<T> {
    pub fn new(cfg: &DiscriminatorConfig, rng: &mut impl Rng) -> Result<Self> {
        if cfg.widths.is_empty() || cfg.widths.contains(&0) {
            return Err(Error::invalid("discriminator config", "widths must be non-empty and positive"));
        }
        let mut cin = 2;
        let mut convs = Vec::new();
        for (i, &w) in cfg.widths.iter().enumerate() {
            convs.push(Conv2d::new(&format!("disc.conv{i}"), cin, w, 3, 2, rng));
            cin = w;
        }
        Ok(Discriminator {
            convs,
            head: Conv2d::new("disc.head", cin, 1, 1, 1, rng),
        })
    }

    /// Logits of shape `(B, 1, 1, 1)`.
    pub fn logits(&self, g: &mut Graph<T>, target: Var, mask: Var) -> Result<Var> {
        let (a, b) = (g.shape(target), g.shape(mask));
        if a != b {
            return Err(Error::Shape {
                op: "discriminator",
                dim: "mask shape",
                expected: a.numel(),
                got: b.numel(),
            });
        }
        let mut x = g.concat_channels(&[target, mask])?;
        for c in &self.convs {
            let y = c.forward(g, x)?;
            x = g.relu(y);
        }
        let y = self.head.forward(g, x)?;
        Ok(g.spatial_mean(y))
    }

    /// Probability that `mask` is a reference mask for `target`.
    pub fn forward(&self, g: &mut Graph<T>, target: Var, mask: Var) -> Result<Var> {
        let l = self.logits(g, target, mask)?;
        Ok(g.sigmoid(l))
    }
}

impl<T: Real> Module<T> for Discriminator<T> {
    fn visit(&mut self, f: &mut dyn FnMut(Slot<'_, T>)) {
        for c in &mut self.convs {
            c.visit(f);
        }
        self.head.visit(f);
    }
}
