//! Multi-seed ablation suite: mean +/- std per metric per stratum, with
//! Mann-Whitney p-values against the baseline preset.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::evaluate::{mann_whitney_u, MetricsReport, Stratum};
use crate::gan::{train_gan, GanModel, GanTrainConfig};
use crate::seed::SeedStream;

use super::{run_preset, BenchmarkData, ExperimentError, ExperimentPreset, PresetConfig};

pub const METRIC_NAMES: [&str; 6] = [
    "accuracy",
    "precision",
    "recall",
    "f1",
    "mcc",
    "cohen_kappa",
];

pub const STRATUM_NAMES: [&str; 3] = ["ALL", "WLI", "NBI"];

fn metric_value(report: &MetricsReport, metric: &str) -> f64 {
    match metric {
        "accuracy" => report.accuracy,
        "precision" => report.precision,
        "recall" => report.recall,
        "f1" => report.f1,
        "mcc" => report.mcc,
        "cohen_kappa" => report.cohen_kappa,
        other => panic!("unknown metric {other}"),
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SuiteCell {
    pub mean: f64,
    pub std: f64,
    /// Two-sided Mann-Whitney p against the baseline preset; absent for the
    /// baseline itself or when significance was skipped.
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub presets: Vec<ExperimentPreset>,
    pub seeds: Vec<u64>,
    pub preset: PresetConfig,
    pub gan: GanTrainConfig,
}

/// preset -> stratum -> metric -> cell; raw per-seed samples kept alongside.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub cells: BTreeMap<String, BTreeMap<String, BTreeMap<String, SuiteCell>>>,
    pub samples: BTreeMap<String, BTreeMap<String, BTreeMap<String, Vec<f64>>>>,
    pub seeds: Vec<u64>,
    pub warnings: Vec<String>,
}

impl SuiteReport {
    pub fn to_json(&self) -> Result<String, ExperimentError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn cell(&self, preset: &str, stratum: &str, metric: &str) -> Option<&SuiteCell> {
        self.cells.get(preset)?.get(stratum)?.get(metric)
    }

    /// Plain-text table, one row per (preset, stratum).
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<18} {:<5}", "preset", "data"));
        for m in METRIC_NAMES {
            out.push_str(&format!(" {:>22}", m));
        }
        out.push('\n');
        for (preset, strata) in &self.cells {
            for (stratum, metrics) in strata {
                out.push_str(&format!("{preset:<18} {stratum:<5}"));
                for m in METRIC_NAMES {
                    match metrics.get(m) {
                        Some(c) => {
                            let p = c
                                .p_value
                                .map(|p| format!(" p={p:.3}"))
                                .unwrap_or_default();
                            out.push_str(&format!(
                                " {:>22}",
                                format!("{:.3}±{:.3}{}", c.mean, c.std, p)
                            ));
                        }
                        None => out.push_str(&format!(" {:>22}", "-")),
                    }
                }
                out.push('\n');
            }
        }
        out
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Trains the shared GAN (when any preset needs it) and runs every preset
/// over every seed, aggregating the full metric table.
pub fn ablation_suite(
    data: &BenchmarkData,
    config: &SuiteConfig,
    pretrained_gan: Option<GanModel>,
) -> Result<SuiteReport, ExperimentError> {
    if config.seeds.is_empty() {
        return Err(ExperimentError::NoSeeds);
    }
    let mut warnings = Vec::new();
    if config.seeds.len() < 2 {
        warnings.push("fewer than 2 seeds: significance testing skipped".to_string());
    }

    let needs_gan = config.presets.iter().any(|p| p.needs_gan());
    let gan = if needs_gan {
        match pretrained_gan {
            Some(g) => Some(g),
            None => {
                let stream = SeedStream::new(config.gan.seed);
                let spec = crate::gan::ArchitectureSpec::desk(8, 2);
                let mut model = crate::gan::init_gan(&spec, stream.child("gan-init"))?;
                let (pool_a, pool_b) = data.gan_pools();
                train_gan(&mut model, &pool_a, &pool_b, &config.gan, None)?;
                Some(model)
            }
        }
    } else {
        pretrained_gan
    };

    // samples[preset][stratum][metric] -> per-seed values
    let mut samples: BTreeMap<String, BTreeMap<String, BTreeMap<String, Vec<f64>>>> =
        BTreeMap::new();
    for &seed in &config.seeds {
        let teacher = super::preset::train_preset_teacher(data, &config.preset, seed)?;
        for &preset in &config.presets {
            let out = run_preset(preset, data, gan.as_ref(), &teacher, &config.preset, seed)?;
            for (stratum, name) in [
                (Stratum::All, "ALL"),
                (Stratum::Wli, "WLI"),
                (Stratum::Nbi, "NBI"),
            ] {
                let Some(report) = out.reports.get(stratum) else {
                    continue;
                };
                for metric in METRIC_NAMES {
                    samples
                        .entry(preset.to_string())
                        .or_default()
                        .entry(name.to_string())
                        .or_default()
                        .entry(metric.to_string())
                        .or_default()
                        .push(metric_value(report, metric));
                }
            }
        }
        log::info!("ablation suite: finished seed {seed}");
    }

    let baseline_name = ExperimentPreset::Baseline.to_string();
    let significance = config.seeds.len() >= 2;
    let mut cells: BTreeMap<String, BTreeMap<String, BTreeMap<String, SuiteCell>>> =
        BTreeMap::new();
    for (preset, strata) in &samples {
        for (stratum, metrics) in strata {
            for (metric, values) in metrics {
                let (mean, std) = mean_std(values);
                let p_value = if significance && preset != &baseline_name {
                    samples
                        .get(&baseline_name)
                        .and_then(|s| s.get(stratum))
                        .and_then(|m| m.get(metric))
                        .and_then(|base| mann_whitney_u(values, base).ok())
                        .map(|r| r.p_value)
                } else {
                    None
                };
                cells
                    .entry(preset.clone())
                    .or_default()
                    .entry(stratum.clone())
                    .or_default()
                    .insert(metric.clone(), SuiteCell { mean, std, p_value });
            }
        }
    }

    Ok(SuiteReport {
        cells,
        samples,
        seeds: config.seeds.clone(),
        warnings,
    })
}
