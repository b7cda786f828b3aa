//! Scoring of returned response sheets.
//!
//! Task 1 treats each forced choice as a real/fake judgement on both images
//! of the pair: picking the correct side is simultaneously a hit (real
//! called real) and a correct rejection. AUC comes from the two-point ROC
//! through (false-alarm, hit); under forced choice this equals accuracy, and
//! the chance baseline sits at 0.5.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::ClassPrediction;
use crate::dataio::{DomainTag, TissueClass};
use crate::evaluate::{classification_report, Stratum};

use super::{
    ItemKey, RespondentGroup, ResponseSheet, Side, SurveyError, SurveyManifest, TaskId,
};

/// Mean and standard deviation over respondents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl GroupStats {
    fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        Some(Self {
            mean,
            std: var.sqrt(),
            n,
        })
    }
}

/// Task-1 metrics for one translation direction (or ALL).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskOneStats {
    pub accuracy: GroupStats,
    pub precision: GroupStats,
    pub recall: GroupStats,
    pub auc: GroupStats,
}

/// Direction label for task-1 strata: the generator that produced the fake.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "WLI_TO_NBI")]
    WliToNbi,
    #[serde(rename = "NBI_TO_WLI")]
    NbiToWli,
    #[serde(rename = "ALL")]
    All,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::WliToNbi => "WLI_TO_NBI",
            Direction::NbiToWli => "NBI_TO_WLI",
            Direction::All => "ALL",
        })
    }
}

/// Scored survey, grouped by respondent group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurveyReport {
    pub task_id: TaskId,
    /// Task 1: (group, direction) -> stats.
    pub realfake: BTreeMap<String, TaskOneStats>,
    /// Task 2: (group, pair-type) -> per-respondent mean accuracy stats and
    /// the pooled four-class report.
    pub classify: BTreeMap<String, ClassifyStats>,
    pub respondents: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifyStats {
    pub accuracy: GroupStats,
    pub f1: GroupStats,
    /// Pooled multiclass report over all respondents' answers.
    pub pooled: crate::evaluate::MetricsReport,
}

impl SurveyReport {
    pub fn to_json(&self) -> Result<String, SurveyError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Reads one response CSV (`item_id,answer`).
pub fn load_response_csv(
    path: &Path,
    respondent_id: &str,
    group: RespondentGroup,
) -> Result<ResponseSheet, SurveyError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut answers = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != 2 {
            return Err(SurveyError::Malformed(format!(
                "response rows need 2 fields, got {}",
                record.len()
            )));
        }
        answers.insert(record[0].to_string(), record[1].to_string());
    }
    Ok(ResponseSheet {
        respondent_id: respondent_id.to_string(),
        group,
        answers,
    })
}

fn one_hot_prediction(class: TissueClass) -> ClassPrediction {
    let mut probs = [0.0; 4];
    probs[class.index().expect("labeled class")] = 1.0;
    ClassPrediction::from_probs(probs)
}

/// Scores sheets against a manifest and key.
///
/// Sheets must reference manifest items; incomplete sheets are scored on
/// their answered subset with a warning. Task-1 results are stratified by
/// translation direction; task-2 results by pair type.
pub fn score_responses(
    manifest: &SurveyManifest,
    sheets: &[ResponseSheet],
) -> Result<SurveyReport, SurveyError> {
    let mut warnings = Vec::new();
    for sheet in sheets {
        for item_id in sheet.answers.keys() {
            if !manifest.key.contains_key(item_id) {
                return Err(SurveyError::UnknownItem(item_id.clone()));
            }
        }
        if sheet.answers.len() < manifest.items.len() {
            warnings.push(format!(
                "respondent {} answered {}/{} items; scoring the answered subset",
                sheet.respondent_id,
                sheet.answers.len(),
                manifest.items.len()
            ));
        }
    }

    let mut realfake = BTreeMap::new();
    let mut classify = BTreeMap::new();

    match manifest.task_id {
        TaskId::RealVsFake => {
            // Pair-domain WLI means the fake came out of the NBI->WLI
            // generator, and vice versa.
            let direction_of = |domain: DomainTag| match domain {
                DomainTag::Wli => Direction::NbiToWli,
                DomainTag::Nbi => Direction::WliToNbi,
            };
            for group in [RespondentGroup::Es, RespondentGroup::Re] {
                for direction in [Direction::WliToNbi, Direction::NbiToWli, Direction::All] {
                    let mut accs = Vec::new();
                    let mut precs = Vec::new();
                    let mut recs = Vec::new();
                    let mut aucs = Vec::new();
                    for sheet in sheets.iter().filter(|s| s.group == group) {
                        let mut hits = 0usize;
                        let mut misses = 0usize;
                        for (item_id, answer) in &sheet.answers {
                            let ItemKey::RealSide { side, domain } = &manifest.key[item_id] else {
                                continue;
                            };
                            if direction != Direction::All && direction_of(*domain) != direction {
                                continue;
                            }
                            let Ok(answered) = answer.parse::<Side>() else {
                                warnings.push(format!(
                                    "respondent {}: unparseable answer {answer:?} on {item_id}",
                                    sheet.respondent_id
                                ));
                                continue;
                            };
                            if answered == *side {
                                hits += 1;
                            } else {
                                misses += 1;
                            }
                        }
                        let n = hits + misses;
                        if n == 0 {
                            continue;
                        }
                        // Forced choice: hit rate h on reals, false alarms
                        // 1 - h on fakes; two-point ROC AUC = (h - f + 1)/2.
                        let h = hits as f64 / n as f64;
                        let f = 1.0 - h;
                        accs.push(h);
                        precs.push(h); // TP/(TP+FP) under the pair expansion
                        recs.push(h); // TP/(TP+FN)
                        aucs.push((h - f + 1.0) / 2.0);
                    }
                    if let (Some(accuracy), Some(precision), Some(recall), Some(auc)) = (
                        GroupStats::from_values(&accs),
                        GroupStats::from_values(&precs),
                        GroupStats::from_values(&recs),
                        GroupStats::from_values(&aucs),
                    ) {
                        realfake.insert(
                            format!("{group}/{direction}"),
                            TaskOneStats {
                                accuracy,
                                precision,
                                recall,
                                auc,
                            },
                        );
                    }
                }
            }
        }
        TaskId::TissueClassify => {
            for group in [RespondentGroup::Es, RespondentGroup::Re] {
                for (label, want_real) in [("real_pairs", true), ("translated_pairs", false)] {
                    let mut accs = Vec::new();
                    let mut f1s = Vec::new();
                    let mut pooled_preds = Vec::new();
                    let mut pooled_truth = Vec::new();
                    for sheet in sheets.iter().filter(|s| s.group == group) {
                        let mut preds = Vec::new();
                        let mut truths = Vec::new();
                        for (item_id, answer) in &sheet.answers {
                            let ItemKey::Classify { pair_kind, class } = &manifest.key[item_id]
                            else {
                                continue;
                            };
                            if pair_kind.is_real() != want_real {
                                continue;
                            }
                            let Ok(answered) = answer.parse::<TissueClass>() else {
                                warnings.push(format!(
                                    "respondent {}: unparseable answer {answer:?} on {item_id}",
                                    sheet.respondent_id
                                ));
                                continue;
                            };
                            if !answered.is_labeled() {
                                continue;
                            }
                            preds.push(one_hot_prediction(answered));
                            truths.push(*class);
                        }
                        if preds.is_empty() {
                            continue;
                        }
                        let report =
                            classification_report(&preds, &truths, Stratum::All).map_err(|e| {
                                SurveyError::Malformed(format!("scoring failed: {e}"))
                            })?;
                        accs.push(report.accuracy);
                        f1s.push(report.f1);
                        pooled_preds.extend(preds);
                        pooled_truth.extend(truths);
                    }
                    if pooled_preds.is_empty() {
                        continue;
                    }
                    let pooled = classification_report(&pooled_preds, &pooled_truth, Stratum::All)
                        .map_err(|e| SurveyError::Malformed(format!("scoring failed: {e}")))?;
                    classify.insert(
                        format!("{group}/{label}"),
                        ClassifyStats {
                            accuracy: GroupStats::from_values(&accs).expect("non-empty"),
                            f1: GroupStats::from_values(&f1s).expect("non-empty"),
                            pooled,
                        },
                    );
                }
            }
        }
    }

    Ok(SurveyReport {
        task_id: manifest.task_id,
        realfake,
        classify,
        respondents: sheets.len(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::super::gen::test_pools::*;
    use super::super::gen::{gen_classification_task, gen_realfake_task};
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn oracle_respondent_scores_one_everywhere() {
        let (real, generated) = realfake_pools(12);
        let manifest = gen_realfake_task(&real, &generated, 3).unwrap();
        let sheet = manifest.key_as_sheet("oracle", RespondentGroup::Es);
        let report = score_responses(&manifest, &[sheet]).unwrap();
        for (label, stats) in &report.realfake {
            assert!(label.starts_with("ES/"));
            assert_eq!(stats.accuracy.mean, 1.0, "{label}");
            assert_eq!(stats.auc.mean, 1.0, "{label}");
        }

        let rows = pairing_rows(6);
        let manifest2 = gen_classification_task(&rows, 3).unwrap();
        let sheet2 = manifest2.key_as_sheet("oracle", RespondentGroup::Re);
        let report2 = score_responses(&manifest2, &[sheet2]).unwrap();
        for (label, stats) in &report2.classify {
            assert_eq!(stats.accuracy.mean, 1.0, "{label}");
            assert_eq!(stats.pooled.accuracy, 1.0, "{label}");
        }
    }

    #[test]
    fn anti_oracle_scores_zero_accuracy_and_auc() {
        let (real, generated) = realfake_pools(12);
        let manifest = gen_realfake_task(&real, &generated, 7).unwrap();
        let mut sheet = manifest.key_as_sheet("contrarian", RespondentGroup::Es);
        for answer in sheet.answers.values_mut() {
            *answer = if answer == "left" { "right" } else { "left" }.to_string();
        }
        let report = score_responses(&manifest, &[sheet]).unwrap();
        let all = &report.realfake["ES/ALL"];
        assert_eq!(all.accuracy.mean, 0.0);
        assert_eq!(all.auc.mean, 0.0);
    }

    #[test]
    fn random_guessers_sit_at_half_auc() {
        let (real, generated) = realfake_pools(12);
        let manifest = gen_realfake_task(&real, &generated, 11).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let sheets: Vec<ResponseSheet> = (0..50)
            .map(|i| {
                let answers = manifest
                    .items
                    .iter()
                    .map(|item| {
                        let ans = if rng.random_range(0.0..1.0) < 0.5 {
                            "left"
                        } else {
                            "right"
                        };
                        (item.item_id.clone(), ans.to_string())
                    })
                    .collect();
                ResponseSheet {
                    respondent_id: format!("r{i}"),
                    group: RespondentGroup::Es,
                    answers,
                }
            })
            .collect();
        let report = score_responses(&manifest, &sheets).unwrap();
        let all = &report.realfake["ES/ALL"];
        assert!(
            (all.auc.mean - 0.5).abs() < 0.05,
            "chance AUC {}",
            all.auc.mean
        );
    }

    #[test]
    fn incomplete_sheets_warn_and_unknown_items_error() {
        let (real, generated) = realfake_pools(12);
        let manifest = gen_realfake_task(&real, &generated, 13).unwrap();
        let mut sheet = manifest.key_as_sheet("partial", RespondentGroup::Re);
        let first = sheet.answers.keys().next().unwrap().clone();
        sheet.answers.remove(&first);
        let report = score_responses(&manifest, &[sheet]).unwrap();
        assert!(!report.warnings.is_empty());

        let mut bad = manifest.key_as_sheet("bad", RespondentGroup::Re);
        bad.answers.insert("t9_99".into(), "left".into());
        assert!(matches!(
            score_responses(&manifest, &[bad]),
            Err(SurveyError::UnknownItem(_))
        ));
    }

    #[test]
    fn manifest_files_round_trip() {
        let (real, generated) = realfake_pools(12);
        let manifest = gen_realfake_task(&real, &generated, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        manifest.write_to_dir(dir.path()).unwrap();
        let manifest_text = std::fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
        assert!(manifest_text.starts_with("item_id,task,left_token,right_token"));
        assert!(!manifest_text.contains("real_"), "manifest leaks sources");
        let key_text = std::fs::read_to_string(dir.path().join("key.csv")).unwrap();
        assert!(key_text.starts_with("item_id,truth"));
        let assets: BTreeMap<String, std::path::PathBuf> = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("key_assets.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(assets.len(), 40);
    }
}
