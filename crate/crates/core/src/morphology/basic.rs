use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{BatchNorm, Graph, Mode, Module, Slot, Var};
use crate::error::{Error, Result};
use crate::layers::{Activation, Conv2d};
use crate::morphology::ops;
use crate::morphology::surface::{GateVector, StructuringSurface};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorphBasicConfig {
    pub channels: usize,
    pub se_size: usize,
    /// Learn separate surfaces for the dilation and erosion paths.
    pub separate_se: bool,
    pub activation: Activation,
    pub norm: bool,
}

impl MorphBasicConfig {
    pub fn new(channels: usize, se_size: usize) -> Self {
        MorphBasicConfig {
            channels,
            se_size,
            separate_se: false,
            activation: Activation::Relu,
            norm: true,
        }
    }
}

/// Gated dilation/erosion with a residual, a 1x1 projection, batch norm
/// and an activation: `act(bn(proj(fuse(x) + x)))`.
pub struct MorphBasicBlock<T> {
    pub surface: StructuringSurface<T>,
    /// Only present with `separate_se`; used by the erosion path.
    pub erosion_surface: Option<StructuringSurface<T>>,
    pub gate: GateVector<T>,
    pub projection: Conv2d<T>,
    pub norm: Option<BatchNorm<T>>,
    pub activation: Activation,
}

impl<T: Real> MorphBasicBlock<T> {
    pub fn new(name: &str, cfg: &MorphBasicConfig, rng: &mut impl Rng) -> Result<Self> {
        let c = cfg.channels;
        if c == 0 {
            return Err(Error::invalid("morph_basic", "zero channels"));
        }
        Ok(MorphBasicBlock {
            surface: StructuringSurface::flat(name, c, cfg.se_size)?,
            erosion_surface: if cfg.separate_se {
                Some(StructuringSurface::flat(&format!("{name}.ero"), c, cfg.se_size)?)
            } else {
                None
            },
            gate: GateVector::zeros(name, c),
            projection: Conv2d::new(&format!("{name}.proj"), c, c, 1, 1, rng),
            norm: cfg.norm.then(|| BatchNorm::new(&format!("{name}.bn"), c)),
            activation: cfg.activation,
        })
    }

    pub fn channels(&self) -> usize {
        self.gate.channels()
    }

    fn check(&self, g: &Graph<T>, x: Var) -> Result<()> {
        let c = g.shape(x).c;
        if c != self.channels() {
            return Err(Error::Shape {
                op: "morph_basic",
                dim: "channels",
                expected: self.channels(),
                got: c,
            });
        }
        Ok(())
    }

    /// `sigmoid(g) * dilate(x) + (1 - sigmoid(g)) * erode(x)`.
    pub fn gated_fuse(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        self.check(g, x)?;
        let d = self.surface.dilate(g, x)?;
        let e = self
            .erosion_surface
            .as_ref()
            .unwrap_or(&self.surface)
            .erode(g, x)?;
        let gate = g.param(&self.gate.logits);
        ops::gate_mix(g, d, e, gate)
    }

    pub fn forward(&mut self, g: &mut Graph<T>, x: Var, mode: Mode) -> Result<Var> {
        let y = self.gated_fuse(g, x)?;
        let y = g.add(y, x)?;
        let y = self.projection.forward(g, y)?;
        let y = match &mut self.norm {
            Some(bn) => bn.forward(g, y, mode)?,
            None => y,
        };
        Ok(self.activation.apply(g, y))
    }

    /// `gated_fuse(x) - x` per channel: positive where the block expands
    /// features, negative where it contracts them.
    pub fn delta_maps(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let y = self.gated_fuse(&mut g, xv)?;
        let d = g.sub(y, xv)?;
        Ok(g.value(d).clone())
    }
}

impl<T: Real> Module<T> for MorphBasicBlock<T> {
    fn visit(&mut self, f: &mut dyn FnMut(Slot<'_, T>)) {
        self.surface.visit(f);
        if let Some(s) = &mut self.erosion_surface {
            s.visit(f);
        }
        self.gate.visit(f);
        self.projection.visit(f);
        if let Some(bn) = &mut self.norm {
            bn.visit(f);
        }
    }
}
