//! Categorical cross-entropy on (pseudo-)labels.

use ndarray::Array2;

use crate::nn::tape::{Tape, VarId};

use super::{ClassPrediction, PseudoLabel};

/// `-sum_i t_i log p_i` with predictions clamped to [1e-12, 1].
pub fn cross_entropy(target: &PseudoLabel, pred: &ClassPrediction) -> f64 {
    -(0..4)
        .map(|i| {
            if target.probs[i] == 0.0 {
                0.0
            } else {
                target.probs[i] * pred.probs[i].clamp(1e-12, 1.0).ln()
            }
        })
        .sum::<f64>()
}

/// Batch-mean cross-entropy as a tape graph over raw logits.
///
/// `targets` is `[batch, 4]`; rows may carry per-sample weights baked in,
/// with `normalizer` the corresponding weight total (the batch size for
/// unweighted training).
pub(crate) fn ce_from_logits(
    t: &Tape,
    logits: VarId,
    targets: &Array2<f64>,
    normalizer: f64,
) -> VarId {
    let log_probs = t.log_softmax(logits);
    let tv = t.constant(targets.clone().into_dyn());
    let weighted = t.mul(log_probs, tv);
    t.mul_scalar(t.neg(t.sum_all(weighted)), 1.0 / normalizer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{LabelSource, PseudoMode};
    use crate::dataio::TissueClass;

    #[test]
    fn perfect_one_hot_prediction_is_zero() {
        let target = PseudoLabel::one_hot(TissueClass::Ntl, LabelSource::GroundTruth);
        let pred = ClassPrediction::from_probs([0.0, 0.0, 1.0, 0.0]);
        assert_eq!(cross_entropy(&target, &pred), 0.0);
    }

    #[test]
    fn uniform_prediction_costs_log_4() {
        let target = PseudoLabel::one_hot(TissueClass::Hgc, LabelSource::GroundTruth);
        let pred = ClassPrediction::from_probs([0.25; 4]);
        assert!((cross_entropy(&target, &pred) - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn soft_target_hand_value() {
        let target = PseudoLabel {
            probs: [0.5, 0.5, 0.0, 0.0],
            mode: PseudoMode::Soft,
            source: LabelSource::Teacher,
        };
        let pred = ClassPrediction::from_probs([0.5, 0.5, 0.0, 0.0]);
        assert!((cross_entropy(&target, &pred) - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn tape_loss_matches_plain_computation() {
        use crate::classify::model::predictions_from_logits;
        let t = Tape::new();
        let logits_arr = ndarray::arr2(&[[0.3, -0.2, 1.0, 0.1], [2.0, 0.0, -1.0, 0.5]]);
        let logits = t.constant(logits_arr.clone().into_dyn());
        let targets = ndarray::arr2(&[[1.0, 0.0, 0.0, 0.0], [0.0, 0.25, 0.5, 0.25]]);
        let loss = ce_from_logits(&t, logits, &targets, 2.0);
        let got = t.scalar(loss);

        let preds = predictions_from_logits(&logits_arr.into_dyn());
        let mut want = 0.0;
        for (row, pred) in targets.rows().into_iter().zip(&preds) {
            let target = PseudoLabel {
                probs: [row[0], row[1], row[2], row[3]],
                mode: PseudoMode::Soft,
                source: LabelSource::Teacher,
            };
            want += cross_entropy(&target, pred);
        }
        want /= 2.0;
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
}
