//! Patch-level discriminator: stride-2 conv stack onto a realness map.

use ndarray::ArrayD;

use crate::nn::layers::{Conv2d, Init, InitScheme, InstanceNorm, Params};
use crate::nn::tape::{Tape, VarId};

use super::GanLossMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DiscriminatorSpec {
    pub in_channels: usize,
    pub base_filters: usize,
    /// Number of stride-2 stages (>= 1).
    pub layers: usize,
}

impl DiscriminatorSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.in_channels == 0 || self.base_filters == 0 {
            return Err("discriminator channels must be positive".into());
        }
        if self.layers == 0 {
            return Err("discriminator needs at least one stride-2 stage".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PatchDiscriminator {
    stages: Vec<(Conv2d, Option<InstanceNorm>)>,
    head: Conv2d,
}

impl PatchDiscriminator {
    pub fn new(name: &str, spec: &DiscriminatorSpec, seed: u64) -> Self {
        let mut init = Init::new(seed, InitScheme::Normal(0.02));
        let mut stages = Vec::new();
        let mut cin = spec.in_channels;
        let mut cout = spec.base_filters;
        for i in 0..spec.layers {
            let conv = Conv2d::new(&format!("{name}.stage{i}"), cin, cout, 4, 2, 1, &mut init);
            // First stage runs un-normalized, as is conventional.
            let norm = (i > 0).then(|| InstanceNorm::new(&format!("{name}.norm{i}"), cout));
            stages.push((conv, norm));
            cin = cout;
            cout *= 2;
        }
        let head = Conv2d::new(&format!("{name}.head"), cin, 1, 4, 1, 1, &mut init);
        Self { stages, head }
    }

    pub fn bind(&self, t: &Tape, trainable: bool) -> BoundPatchDiscriminator {
        BoundPatchDiscriminator {
            stages: self
                .stages
                .iter()
                .map(|(c, n)| (c.bind(t, trainable), n.as_ref().map(|n| n.bind(t, trainable))))
                .collect(),
            head: self.head.bind(t, trainable),
        }
    }
}

impl Params for PatchDiscriminator {
    fn visit(&self, f: &mut dyn FnMut(&str, &ArrayD<f64>)) {
        for (c, n) in &self.stages {
            c.visit(f);
            if let Some(n) = n {
                n.visit(f);
            }
        }
        self.head.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        for (c, n) in &mut self.stages {
            c.visit_mut(f);
            if let Some(n) = n {
                n.visit_mut(f);
            }
        }
        self.head.visit_mut(f);
    }
}

pub struct BoundPatchDiscriminator {
    stages: Vec<(
        crate::nn::layers::BoundConv2d,
        Option<crate::nn::layers::BoundInstanceNorm>,
    )>,
    head: crate::nn::layers::BoundConv2d,
}

impl BoundPatchDiscriminator {
    /// Raw patch logits `[N, 1, h', w']`.
    pub fn logits(&self, t: &Tape, x: VarId) -> VarId {
        let mut h = x;
        for (conv, norm) in &self.stages {
            h = conv.apply(t, h);
            if let Some(n) = norm {
                h = n.apply(t, h);
            }
            h = t.leaky_relu(h, 0.2);
        }
        self.head.apply(t, h)
    }

    /// Realness map: sigmoid probabilities under the log loss (the bounded
    /// head Eq.-style losses need), raw scores under least squares.
    pub fn realness(&self, t: &Tape, x: VarId, mode: GanLossMode) -> VarId {
        let logits = self.logits(t, x);
        match mode {
            GanLossMode::LogAdversarial => t.sigmoid(logits),
            GanLossMode::LeastSquares => logits,
        }
    }

    pub fn var_ids(&self) -> Vec<VarId> {
        let mut out = Vec::new();
        for (c, n) in &self.stages {
            c.var_ids(&mut out);
            if let Some(n) = n {
                n.var_ids(&mut out);
            }
        }
        self.head.var_ids(&mut out);
        out
    }
}
