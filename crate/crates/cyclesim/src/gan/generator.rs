//! Residual encoder-decoder generator plus test stubs.

use ndarray::ArrayD;

use crate::nn::layers::{Conv2d, Init, InitScheme, InstanceNorm, Params};
use crate::nn::tape::{Tape, VarId};

/// Generator architecture knobs. The full-scale configuration follows the
/// cited translation design; desk-scale runs shrink filters and blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GeneratorSpec {
    pub in_channels: usize,
    pub base_filters: usize,
    pub residual_blocks: usize,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.in_channels == 0 || self.base_filters == 0 {
            return Err("generator channels must be positive".into());
        }
        if self.residual_blocks == 0 {
            return Err("generator needs at least one residual block".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct ResBlock {
    c1: Conv2d,
    n1: InstanceNorm,
    c2: Conv2d,
    n2: InstanceNorm,
}

/// Encoder (stride-2 x2) -> residual blocks -> decoder (nearest-up x2),
/// tanh output head. Output shape equals input shape; input spatial dims
/// must be divisible by 4.
#[derive(Debug, Clone)]
pub struct ResnetGenerator {
    head: Conv2d,
    head_norm: InstanceNorm,
    down1: Conv2d,
    norm1: InstanceNorm,
    down2: Conv2d,
    norm2: InstanceNorm,
    blocks: Vec<ResBlock>,
    up1: Conv2d,
    up_norm1: InstanceNorm,
    up2: Conv2d,
    up_norm2: InstanceNorm,
    tail: Conv2d,
}

impl ResnetGenerator {
    pub fn new(name: &str, spec: &GeneratorSpec, seed: u64) -> Self {
        let mut init = Init::new(seed, InitScheme::Normal(0.02));
        let (c, f) = (spec.in_channels, spec.base_filters);
        let blocks = (0..spec.residual_blocks)
            .map(|i| ResBlock {
                c1: Conv2d::new(&format!("{name}.block{i}.c1"), 4 * f, 4 * f, 3, 1, 1, &mut init),
                n1: InstanceNorm::new(&format!("{name}.block{i}.n1"), 4 * f),
                c2: Conv2d::new(&format!("{name}.block{i}.c2"), 4 * f, 4 * f, 3, 1, 1, &mut init),
                n2: InstanceNorm::new(&format!("{name}.block{i}.n2"), 4 * f),
            })
            .collect();
        Self {
            head: Conv2d::new(&format!("{name}.head"), c, f, 7, 1, 3, &mut init),
            head_norm: InstanceNorm::new(&format!("{name}.head_norm"), f),
            down1: Conv2d::new(&format!("{name}.down1"), f, 2 * f, 3, 2, 1, &mut init),
            norm1: InstanceNorm::new(&format!("{name}.norm1"), 2 * f),
            down2: Conv2d::new(&format!("{name}.down2"), 2 * f, 4 * f, 3, 2, 1, &mut init),
            norm2: InstanceNorm::new(&format!("{name}.norm2"), 4 * f),
            blocks,
            up1: Conv2d::new(&format!("{name}.up1"), 4 * f, 2 * f, 3, 1, 1, &mut init),
            up_norm1: InstanceNorm::new(&format!("{name}.up_norm1"), 2 * f),
            up2: Conv2d::new(&format!("{name}.up2"), 2 * f, f, 3, 1, 1, &mut init),
            up_norm2: InstanceNorm::new(&format!("{name}.up_norm2"), f),
            tail: Conv2d::new(&format!("{name}.tail"), f, c, 7, 1, 3, &mut init),
        }
    }

    pub fn bind(&self, t: &Tape, trainable: bool) -> BoundResnetGenerator {
        BoundResnetGenerator {
            head: self.head.bind(t, trainable),
            head_norm: self.head_norm.bind(t, trainable),
            down1: self.down1.bind(t, trainable),
            norm1: self.norm1.bind(t, trainable),
            down2: self.down2.bind(t, trainable),
            norm2: self.norm2.bind(t, trainable),
            blocks: self
                .blocks
                .iter()
                .map(|b| BoundResBlock {
                    c1: b.c1.bind(t, trainable),
                    n1: b.n1.bind(t, trainable),
                    c2: b.c2.bind(t, trainable),
                    n2: b.n2.bind(t, trainable),
                })
                .collect(),
            up1: self.up1.bind(t, trainable),
            up_norm1: self.up_norm1.bind(t, trainable),
            up2: self.up2.bind(t, trainable),
            up_norm2: self.up_norm2.bind(t, trainable),
            tail: self.tail.bind(t, trainable),
        }
    }
}

impl Params for ResnetGenerator {
    fn visit(&self, f: &mut dyn FnMut(&str, &ArrayD<f64>)) {
        self.head.visit(f);
        self.head_norm.visit(f);
        self.down1.visit(f);
        self.norm1.visit(f);
        self.down2.visit(f);
        self.norm2.visit(f);
        for b in &self.blocks {
            b.c1.visit(f);
            b.n1.visit(f);
            b.c2.visit(f);
            b.n2.visit(f);
        }
        self.up1.visit(f);
        self.up_norm1.visit(f);
        self.up2.visit(f);
        self.up_norm2.visit(f);
        self.tail.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        self.head.visit_mut(f);
        self.head_norm.visit_mut(f);
        self.down1.visit_mut(f);
        self.norm1.visit_mut(f);
        self.down2.visit_mut(f);
        self.norm2.visit_mut(f);
        for b in &mut self.blocks {
            b.c1.visit_mut(f);
            b.n1.visit_mut(f);
            b.c2.visit_mut(f);
            b.n2.visit_mut(f);
        }
        self.up1.visit_mut(f);
        self.up_norm1.visit_mut(f);
        self.up2.visit_mut(f);
        self.up_norm2.visit_mut(f);
        self.tail.visit_mut(f);
    }
}

struct BoundResBlock {
    c1: crate::nn::layers::BoundConv2d,
    n1: crate::nn::layers::BoundInstanceNorm,
    c2: crate::nn::layers::BoundConv2d,
    n2: crate::nn::layers::BoundInstanceNorm,
}

pub struct BoundResnetGenerator {
    head: crate::nn::layers::BoundConv2d,
    head_norm: crate::nn::layers::BoundInstanceNorm,
    down1: crate::nn::layers::BoundConv2d,
    norm1: crate::nn::layers::BoundInstanceNorm,
    down2: crate::nn::layers::BoundConv2d,
    norm2: crate::nn::layers::BoundInstanceNorm,
    blocks: Vec<BoundResBlock>,
    up1: crate::nn::layers::BoundConv2d,
    up_norm1: crate::nn::layers::BoundInstanceNorm,
    up2: crate::nn::layers::BoundConv2d,
    up_norm2: crate::nn::layers::BoundInstanceNorm,
    tail: crate::nn::layers::BoundConv2d,
}

impl BoundResnetGenerator {
    pub fn forward(&self, t: &Tape, x: VarId) -> VarId {
        let mut h = t.relu(self.head_norm.apply(t, self.head.apply(t, x)));
        h = t.relu(self.norm1.apply(t, self.down1.apply(t, h)));
        h = t.relu(self.norm2.apply(t, self.down2.apply(t, h)));
        for b in &self.blocks {
            let r = t.relu(b.n1.apply(t, b.c1.apply(t, h)));
            let r = b.n2.apply(t, b.c2.apply(t, r));
            h = t.add(h, r);
        }
        h = t.upsample_nearest2(h);
        h = t.relu(self.up_norm1.apply(t, self.up1.apply(t, h)));
        h = t.upsample_nearest2(h);
        h = t.relu(self.up_norm2.apply(t, self.up2.apply(t, h)));
        t.tanh(self.tail.apply(t, h))
    }

    /// Leaf ids in the same order as [`Params::visit`].
    pub fn var_ids(&self) -> Vec<VarId> {
        let mut out = Vec::new();
        self.head.var_ids(&mut out);
        self.head_norm.var_ids(&mut out);
        self.down1.var_ids(&mut out);
        self.norm1.var_ids(&mut out);
        self.down2.var_ids(&mut out);
        self.norm2.var_ids(&mut out);
        for b in &self.blocks {
            b.c1.var_ids(&mut out);
            b.n1.var_ids(&mut out);
            b.c2.var_ids(&mut out);
            b.n2.var_ids(&mut out);
        }
        self.up1.var_ids(&mut out);
        self.up_norm1.var_ids(&mut out);
        self.up2.var_ids(&mut out);
        self.up_norm2.var_ids(&mut out);
        self.tail.var_ids(&mut out);
        out
    }
}

/// A domain translator: a trained network or a fixed stub.
///
/// Stubs serve loss identities and sensitivity sanity checks; they carry no
/// parameters.
#[derive(Debug, Clone)]
pub enum Generator {
    Net(Box<ResnetGenerator>),
    Identity,
    Constant(f64),
}

impl Generator {
    pub fn net(name: &str, spec: &GeneratorSpec, seed: u64) -> Self {
        Generator::Net(Box::new(ResnetGenerator::new(name, spec, seed)))
    }

    pub fn bind(&self, t: &Tape, trainable: bool) -> BoundGenerator {
        match self {
            Generator::Net(g) => BoundGenerator::Net(Box::new(g.bind(t, trainable))),
            Generator::Identity => BoundGenerator::Identity,
            Generator::Constant(v) => BoundGenerator::Constant(*v),
        }
    }

    pub fn is_stub(&self) -> bool {
        !matches!(self, Generator::Net(_))
    }
}

impl Params for Generator {
    fn visit(&self, f: &mut dyn FnMut(&str, &ArrayD<f64>)) {
        if let Generator::Net(g) = self {
            g.visit(f);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        if let Generator::Net(g) = self {
            g.visit_mut(f);
        }
    }
}

pub enum BoundGenerator {
    Net(Box<BoundResnetGenerator>),
    Identity,
    Constant(f64),
}

impl BoundGenerator {
    pub fn forward(&self, t: &Tape, x: VarId) -> VarId {
        match self {
            BoundGenerator::Net(g) => g.forward(t, x),
            BoundGenerator::Identity => x,
            BoundGenerator::Constant(v) => {
                let shape = t.shape(x);
                t.constant(ArrayD::from_elem(ndarray::IxDyn(&shape), *v))
            }
        }
    }

    pub fn var_ids(&self) -> Vec<VarId> {
        match self {
            BoundGenerator::Net(g) => g.var_ids(),
            _ => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::weights::checksum;
    use ndarray::Array4;

    fn spec() -> GeneratorSpec {
        GeneratorSpec {
            in_channels: 3,
            base_filters: 4,
            residual_blocks: 2,
        }
    }

    #[test]
    fn output_matches_input_shape_and_range() {
        let g = Generator::net("g", &spec(), 7);
        let t = Tape::new();
        let x = t.constant(Array4::<f64>::from_elem((2, 3, 16, 16), 0.3).into_dyn());
        let y = g.bind(&t, false).forward(&t, x);
        let out = t.value(y);
        assert_eq!(out.shape(), &[2, 3, 16, 16]);
        assert!(out.iter().all(|v| v.is_finite() && v.abs() <= 1.0));
    }

    #[test]
    fn same_seed_same_weights() {
        let a = Generator::net("g", &spec(), 42);
        let b = Generator::net("g", &spec(), 42);
        let c = Generator::net("g", &spec(), 43);
        assert_eq!(checksum(&a), checksum(&b));
        assert_ne!(checksum(&a), checksum(&c));
    }

    #[test]
    fn var_ids_align_with_params() {
        let g = Generator::net("g", &spec(), 1);
        let t = Tape::new();
        let bound = g.bind(&t, true);
        let mut n = 0;
        g.visit(&mut |_, _| n += 1);
        assert_eq!(bound.var_ids().len(), n);
    }

    #[test]
    fn stubs_pass_through_or_fill() {
        let t = Tape::new();
        let x = t.constant(Array4::<f64>::from_elem((1, 3, 4, 4), 0.25).into_dyn());
        let id = Generator::Identity.bind(&t, false).forward(&t, x);
        assert_eq!(t.value(id), t.value(x));
        let c = Generator::Constant(0.5).bind(&t, false).forward(&t, x);
        assert!(t.value(c).iter().all(|&v| v == 0.5));
    }
}
