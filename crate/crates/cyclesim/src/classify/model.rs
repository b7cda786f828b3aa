//! Classifier architectures: single-input (teacher / baseline) and the
//! three-branch multi-input student.
//!
//! Only the TOY backbone ships with this build; the named pretrained
//! backbones are accepted in configuration but require external weights,
//! so constructing them returns an error rather than silently training a
//! random network of that size.

use std::path::Path;

use ndarray::{Array2, Array4, ArrayD, Axis};
use serde::{Deserialize, Serialize};

use crate::dataio::{batch_nchw, ImageTensor};
use crate::gan::TranslationTriple;
use crate::nn::layers::{Conv2d, Init, InitScheme, Linear, Params};
use crate::nn::tape::{Tape, VarId};
use crate::nn::weights;
use crate::par::{self, Parallelism};
use crate::seed::SeedStream;

use super::{ClassPrediction, ClassifyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BackboneId {
    Vgg16,
    Vgg19,
    InceptionV3,
    DenseNet,
    ResNet50,
    ResNet101,
    Toy,
}

/// Architecture configuration shared by teacher and student branches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub backbone: BackboneId,
    pub input_size: (usize, usize),
    /// Base filter count of the TOY backbone.
    pub toy_width: usize,
    /// Widths of the three fully connected head layers.
    pub fc_widths: [usize; 3],
    pub num_classes: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneId::Toy,
            input_size: (32, 32),
            toy_width: 8,
            fc_widths: [512, 256, 128],
            num_classes: 4,
        }
    }
}

impl ClassifierConfig {
    /// Feature dimension produced by the TOY backbone.
    fn feature_dim(&self) -> usize {
        4 * self.toy_width
    }

    fn validate(&self) -> Result<(), ClassifyError> {
        if self.backbone != BackboneId::Toy {
            return Err(ClassifyError::UnavailableBackbone(self.backbone));
        }
        if self.num_classes != 4 {
            return Err(ClassifyError::InvalidConfig(
                "this pipeline is a four-class problem".into(),
            ));
        }
        if self.toy_width == 0 || self.fc_widths.iter().any(|w| *w == 0) {
            return Err(ClassifyError::InvalidConfig(
                "layer widths must be positive".into(),
            ));
        }
        if self.input_size.0 < 8 || self.input_size.1 < 8 {
            return Err(ClassifyError::InvalidConfig(
                "TOY backbone needs inputs of at least 8x8".into(),
            ));
        }
        Ok(())
    }
}

/// Three stride-2 convolutions and a global average pool.
#[derive(Debug, Clone)]
struct ToyBackbone {
    c1: Conv2d,
    c2: Conv2d,
    c3: Conv2d,
}

impl ToyBackbone {
    fn new(prefix: &str, width: usize, init: &mut Init) -> Self {
        Self {
            c1: Conv2d::new(&format!("{prefix}.c1"), 3, width, 3, 2, 1, init),
            c2: Conv2d::new(&format!("{prefix}.c2"), width, 2 * width, 3, 2, 1, init),
            c3: Conv2d::new(&format!("{prefix}.c3"), 2 * width, 4 * width, 3, 2, 1, init),
        }
    }

    fn bind(&self, t: &Tape, trainable: bool) -> BoundToyBackbone {
        BoundToyBackbone {
            c1: self.c1.bind(t, trainable),
            c2: self.c2.bind(t, trainable),
            c3: self.c3.bind(t, trainable),
        }
    }
}

impl Params for ToyBackbone {
    fn visit(&self, f: &mut dyn FnMut(&str, &ArrayD<f64>)) {
        self.c1.visit(f);
        self.c2.visit(f);
        self.c3.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        self.c1.visit_mut(f);
        self.c2.visit_mut(f);
        self.c3.visit_mut(f);
    }
}

struct BoundToyBackbone {
    c1: crate::nn::layers::BoundConv2d,
    c2: crate::nn::layers::BoundConv2d,
    c3: crate::nn::layers::BoundConv2d,
}

impl BoundToyBackbone {
    /// `[N, 3, H, W]` -> `[N, feature_dim]`
    fn forward(&self, t: &Tape, x: VarId) -> VarId {
        let h = t.relu(self.c1.apply(t, x));
        let h = t.relu(self.c2.apply(t, h));
        let h = t.relu(self.c3.apply(t, h));
        let pooled = t.mean_spatial(h);
        let shape = t.shape(pooled);
        t.reshape(pooled, &[shape[0], shape[1]])
    }

    fn var_ids(&self, out: &mut Vec<VarId>) {
        self.c1.var_ids(out);
        self.c2.var_ids(out);
        self.c3.var_ids(out);
    }
}

/// The three fully connected layers applied after a backbone.
#[derive(Debug, Clone)]
struct FcHead {
    fc1: Linear,
    fc2: Linear,
    fc3: Linear,
}

impl FcHead {
    fn new(prefix: &str, din: usize, widths: [usize; 3], init: &mut Init) -> Self {
        Self {
            fc1: Linear::new(&format!("{prefix}.fc1"), din, widths[0], init),
            fc2: Linear::new(&format!("{prefix}.fc2"), widths[0], widths[1], init),
            fc3: Linear::new(&format!("{prefix}.fc3"), widths[1], widths[2], init),
        }
    }

    fn bind(&self, t: &Tape, trainable: bool) -> BoundFcHead {
        BoundFcHead {
            fc1: self.fc1.bind(t, trainable),
            fc2: self.fc2.bind(t, trainable),
            fc3: self.fc3.bind(t, trainable),
        }
    }
}

impl Params for FcHead {
    fn visit(&self, f: &mut dyn FnMut(&str, &ArrayD<f64>)) {
        self.fc1.visit(f);
        self.fc2.visit(f);
        self.fc3.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        self.fc1.visit_mut(f);
        self.fc2.visit_mut(f);
        self.fc3.visit_mut(f);
    }
}

struct BoundFcHead {
    fc1: crate::nn::layers::BoundLinear,
    fc2: crate::nn::layers::BoundLinear,
    fc3: crate::nn::layers::BoundLinear,
}

impl BoundFcHead {
    fn forward(&self, t: &Tape, x: VarId) -> VarId {
        let h = t.relu(self.fc1.apply(t, x));
        let h = t.relu(self.fc2.apply(t, h));
        t.relu(self.fc3.apply(t, h))
    }

    fn var_ids(&self, out: &mut Vec<VarId>) {
        self.fc1.var_ids(out);
        self.fc2.var_ids(out);
        self.fc3.var_ids(out);
    }
}

/// A batch of triples split into the three branch inputs (NCHW each).
pub struct TripleBatch {
    pub original: Array4<f64>,
    pub translated: Array4<f64>,
    pub reconstructed: Array4<f64>,
}

impl TripleBatch {
    pub fn from_triples(triples: &[&TranslationTriple]) -> Self {
        let originals: Vec<&ImageTensor> = triples.iter().map(|t| &t.original).collect();
        let translated: Vec<&ImageTensor> = triples.iter().map(|t| &t.translated).collect();
        let reconstructed: Vec<&ImageTensor> = triples.iter().map(|t| &t.reconstructed).collect();
        Self {
            original: batch_nchw(&originals),
            translated: batch_nchw(&translated),
            reconstructed: batch_nchw(&reconstructed),
        }
    }
}

/// Single-input classifier: TOY backbone, three FC layers, class layer.
#[derive(Debug, Clone)]
pub struct ClassifierModel {
    pub config: ClassifierConfig,
    backbone: ToyBackbone,
    head: FcHead,
    classifier: Linear,
    pub trained: bool,
}

impl ClassifierModel {
    pub fn new(config: ClassifierConfig, seed: u64) -> Result<Self, ClassifyError> {
        config.validate()?;
        let stream = SeedStream::new(seed);
        let mut init = Init::new(stream.child("classifier"), InitScheme::Kaiming);
        let backbone = ToyBackbone::new("backbone", config.toy_width, &mut init);
        let head = FcHead::new("head", config.feature_dim(), config.fc_widths, &mut init);
        let classifier = Linear::new("class", config.fc_widths[2], config.num_classes, &mut init);
        Ok(Self {
            config,
            backbone,
            head,
            classifier,
            trained: false,
        })
    }

    pub(crate) fn bind(&self, t: &Tape, trainable: bool) -> BoundClassifier {
        BoundClassifier {
            backbone: self.backbone.bind(t, trainable),
            head: self.head.bind(t, trainable),
            classifier: self.classifier.bind(t, trainable),
        }
    }

    /// Softmax probabilities for a batch of images.
    pub fn predict(
        &self,
        images: &[&ImageTensor],
        parallelism: Parallelism,
    ) -> Vec<ClassPrediction> {
        let chunks = chunk_indices(images.len(), 64);
        let per_chunk = par::map_indexed(parallelism, chunks.len(), |ci| {
            let (start, end) = chunks[ci];
            let t = Tape::with_parallelism(Parallelism::Sequential);
            let batch = batch_nchw(&images[start..end]);
            let x = t.constant(batch.into_dyn());
            let logits = self.bind(&t, false).forward(&t, x);
            predictions_from_logits(&t.value(logits))
        });
        per_chunk.into_iter().flatten().collect()
    }

    pub fn checksum(&self) -> String {
        weights::checksum(self)
    }

    pub fn save(&self, dir: &Path) -> Result<(), ClassifyError> {
        std::fs::create_dir_all(dir)?;
        weights::save(self, &dir.join("model.weights"))?;
        let meta = serde_json::json!({ "config": self.config, "trained": self.trained });
        std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, ClassifyError> {
        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("config.json"))?)?;
        let config: ClassifierConfig = serde_json::from_value(meta["config"].clone())?;
        let mut model = Self::new(config, 0)?;
        weights::load(&mut model, &dir.join("model.weights"))?;
        model.trained = meta["trained"].as_bool().unwrap_or(false);
        Ok(model)
    }
}

impl Params for ClassifierModel {
    fn visit(&self, f: &mut dyn FnMut(&str, &ArrayD<f64>)) {
        self.backbone.visit(f);
        self.head.visit(f);
        self.classifier.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        self.backbone.visit_mut(f);
        self.head.visit_mut(f);
        self.classifier.visit_mut(f);
    }
}

pub(crate) struct BoundClassifier {
    backbone: BoundToyBackbone,
    head: BoundFcHead,
    classifier: crate::nn::layers::BoundLinear,
}

impl BoundClassifier {
    pub(crate) fn forward(&self, t: &Tape, x: VarId) -> VarId {
        let features = self.backbone.forward(t, x);
        let h = self.head.forward(t, features);
        self.classifier.apply(t, h)
    }

    pub(crate) fn var_ids(&self) -> Vec<VarId> {
        let mut out = Vec::new();
        self.backbone.var_ids(&mut out);
        self.head.var_ids(&mut out);
        self.classifier.var_ids(&mut out);
        out
    }
}

/// Three-branch student: per-branch backbone and FC stack, concatenation,
/// final class layer. Branch 1 consumes the original image, branch 2 the
/// cross-domain translation, branch 3 the reconstruction.
#[derive(Debug, Clone)]
pub struct MultiInputClassifier {
    pub config: ClassifierConfig,
    b1: ToyBackbone,
    h1: FcHead,
    b2: ToyBackbone,
    h2: FcHead,
    b3: ToyBackbone,
    h3: FcHead,
    fusion: Linear,
    pub trained: bool,
}

impl MultiInputClassifier {
    pub fn new(config: ClassifierConfig, seed: u64) -> Result<Self, ClassifyError> {
        config.validate()?;
        let stream = SeedStream::new(seed);
        let mut init = Init::new(stream.child("student"), InitScheme::Kaiming);
        let fd = config.feature_dim();
        let b1 = ToyBackbone::new("b1", config.toy_width, &mut init);
        let h1 = FcHead::new("b1.head", fd, config.fc_widths, &mut init);
        let b2 = ToyBackbone::new("b2", config.toy_width, &mut init);
        let h2 = FcHead::new("b2.head", fd, config.fc_widths, &mut init);
        let b3 = ToyBackbone::new("b3", config.toy_width, &mut init);
        let h3 = FcHead::new("b3.head", fd, config.fc_widths, &mut init);
        let fusion = Linear::new(
            "fusion",
            3 * config.fc_widths[2],
            config.num_classes,
            &mut init,
        );
        Ok(Self {
            config,
            b1,
            h1,
            b2,
            h2,
            b3,
            h3,
            fusion,
            trained: false,
        })
    }

    pub(crate) fn bind(&self, t: &Tape, trainable: bool) -> BoundMultiInput {
        BoundMultiInput {
            b1: self.b1.bind(t, trainable),
            h1: self.h1.bind(t, trainable),
            b2: self.b2.bind(t, trainable),
            h2: self.h2.bind(t, trainable),
            b3: self.b3.bind(t, trainable),
            h3: self.h3.bind(t, trainable),
            fusion: self.fusion.bind(t, trainable),
        }
    }

    /// Softmax probabilities for a batch of triples.
    pub fn predict_triples(
        &self,
        triples: &[&TranslationTriple],
        parallelism: Parallelism,
    ) -> Vec<ClassPrediction> {
        let chunks = chunk_indices(triples.len(), 64);
        let per_chunk = par::map_indexed(parallelism, chunks.len(), |ci| {
            let (start, end) = chunks[ci];
            let batch = TripleBatch::from_triples(&triples[start..end]);
            let t = Tape::with_parallelism(Parallelism::Sequential);
            let x1 = t.constant(batch.original.into_dyn());
            let x2 = t.constant(batch.translated.into_dyn());
            let x3 = t.constant(batch.reconstructed.into_dyn());
            let logits = self.bind(&t, false).forward(&t, x1, x2, x3);
            predictions_from_logits(&t.value(logits))
        });
        per_chunk.into_iter().flatten().collect()
    }

    pub fn checksum(&self) -> String {
        weights::checksum(self)
    }

    pub fn save(&self, dir: &Path) -> Result<(), ClassifyError> {
        std::fs::create_dir_all(dir)?;
        weights::save(self, &dir.join("model.weights"))?;
        let meta = serde_json::json!({ "config": self.config, "trained": self.trained });
        std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, ClassifyError> {
        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("config.json"))?)?;
        let config: ClassifierConfig = serde_json::from_value(meta["config"].clone())?;
        let mut model = Self::new(config, 0)?;
        weights::load(&mut model, &dir.join("model.weights"))?;
        model.trained = meta["trained"].as_bool().unwrap_or(false);
        Ok(model)
    }
}

impl Params for MultiInputClassifier {
    fn visit(&self, f: &mut dyn FnMut(&str, &ArrayD<f64>)) {
        self.b1.visit(f);
        self.h1.visit(f);
        self.b2.visit(f);
        self.h2.visit(f);
        self.b3.visit(f);
        self.h3.visit(f);
        self.fusion.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        self.b1.visit_mut(f);
        self.h1.visit_mut(f);
        self.b2.visit_mut(f);
        self.h2.visit_mut(f);
        self.b3.visit_mut(f);
        self.h3.visit_mut(f);
        self.fusion.visit_mut(f);
    }
}

pub(crate) struct BoundMultiInput {
    b1: BoundToyBackbone,
    h1: BoundFcHead,
    b2: BoundToyBackbone,
    h2: BoundFcHead,
    b3: BoundToyBackbone,
    h3: BoundFcHead,
    fusion: crate::nn::layers::BoundLinear,
}

impl BoundMultiInput {
    pub(crate) fn forward(&self, t: &Tape, x1: VarId, x2: VarId, x3: VarId) -> VarId {
        let f1 = self.h1.forward(t, self.b1.forward(t, x1));
        let f2 = self.h2.forward(t, self.b2.forward(t, x2));
        let f3 = self.h3.forward(t, self.b3.forward(t, x3));
        let fused = t.concat_cols(&[f1, f2, f3]);
        self.fusion.apply(t, fused)
    }

    pub(crate) fn var_ids(&self) -> Vec<VarId> {
        let mut out = Vec::new();
        self.b1.var_ids(&mut out);
        self.h1.var_ids(&mut out);
        self.b2.var_ids(&mut out);
        self.h2.var_ids(&mut out);
        self.b3.var_ids(&mut out);
        self.h3.var_ids(&mut out);
        self.fusion.var_ids(&mut out);
        out
    }
}

/// Row-wise softmax over logits into class predictions.
pub(crate) fn predictions_from_logits(logits: &ArrayD<f64>) -> Vec<ClassPrediction> {
    let l2: Array2<f64> = logits
        .view()
        .into_dimensionality::<ndarray::Ix2>()
        .expect("rank-2 logits")
        .to_owned();
    l2.axis_iter(Axis(0))
        .map(|row| {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let mut probs = [0.0; 4];
            for (i, e) in exps.iter().enumerate() {
                probs[i] = e / sum;
            }
            ClassPrediction::from_probs(probs)
        })
        .collect()
}

fn chunk_indices(n: usize, chunk: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        out.push((start, end));
        start = end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{DomainTag, ValueRange};
    use ndarray::Array3;

    fn small_config() -> ClassifierConfig {
        ClassifierConfig {
            input_size: (16, 16),
            toy_width: 4,
            fc_widths: [16, 12, 8],
            ..ClassifierConfig::default()
        }
    }

    fn img(seed: u64) -> ImageTensor {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ImageTensor::new(
            Array3::from_shape_simple_fn((16, 16, 3), || rng.random_range(0.0..1.0)),
            ValueRange::Unit,
        )
    }

    fn triple(seed: u64) -> TranslationTriple {
        TranslationTriple {
            original: img(seed),
            translated: img(seed + 1000),
            reconstructed: img(seed + 2000),
            origin_domain: DomainTag::Wli,
        }
    }

    #[test]
    fn unavailable_backbones_error() {
        let cfg = ClassifierConfig {
            backbone: BackboneId::ResNet101,
            ..small_config()
        };
        assert!(matches!(
            ClassifierModel::new(cfg, 0),
            Err(ClassifyError::UnavailableBackbone(BackboneId::ResNet101))
        ));
    }

    #[test]
    fn predictions_are_normalized_and_pure() {
        let model = ClassifierModel::new(small_config(), 3).unwrap();
        let images: Vec<ImageTensor> = (0..5).map(img).collect();
        let refs: Vec<&ImageTensor> = images.iter().collect();
        let a = model.predict(&refs, Parallelism::Sequential);
        let b = model.predict(&refs, Parallelism::auto());
        for (pa, pb) in a.iter().zip(&b) {
            assert!(pa.is_normalized());
            assert_eq!(pa.probs, pb.probs);
        }
    }

    #[test]
    fn student_output_is_normalized_and_pure() {
        let model = MultiInputClassifier::new(small_config(), 5).unwrap();
        let triples: Vec<TranslationTriple> = (0..4).map(triple).collect();
        let refs: Vec<&TranslationTriple> = triples.iter().collect();
        let preds = model.predict_triples(&refs, Parallelism::Sequential);
        let again = model.predict_triples(&refs, Parallelism::Sequential);
        for (p, q) in preds.iter().zip(&again) {
            assert!(p.is_normalized());
            assert_eq!(p.probs, q.probs);
        }
    }

    #[test]
    fn masked_branches_do_not_react_to_their_inputs() {
        let mut model = MultiInputClassifier::new(small_config(), 7).unwrap();
        // Zero everything under b2./b3. so those branch features are
        // input-independent constants.
        model.visit_mut(&mut |name, arr| {
            if name.starts_with("b2.") || name.starts_with("b3.") {
                arr.fill(0.0);
            }
        });
        let base = triple(1);
        let mut perturbed = base.clone();
        perturbed.translated = img(999);
        perturbed.reconstructed = img(998);
        let p1 = model.predict_triples(&[&base], Parallelism::Sequential);
        let p2 = model.predict_triples(&[&perturbed], Parallelism::Sequential);
        assert_eq!(p1[0].probs, p2[0].probs);
        // And perturbing the original does change the output.
        let mut orig_changed = base.clone();
        orig_changed.original = img(997);
        let p3 = model.predict_triples(&[&orig_changed], Parallelism::Sequential);
        assert_ne!(p1[0].probs, p3[0].probs);
    }

    #[test]
    fn save_load_round_trip() {
        let model = ClassifierModel::new(small_config(), 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path()).unwrap();
        let loaded = ClassifierModel::load(dir.path()).unwrap();
        assert_eq!(loaded.checksum(), model.checksum());
        assert!(!loaded.trained);
    }
}
