//! Survey manifest generation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{DomainTag, TissueClass};

use super::{ItemKey, Side, SurveyError, SurveyItem, SurveyManifest, TaskId};

/// Pair flavor in the classification task. Real pairs come in three
/// same-region sub-types; translated pairs contain one generated image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassPairKind {
    RealNbiNbi,
    RealWliWli,
    RealNbiWli,
    Translated,
}

impl ClassPairKind {
    pub fn is_real(self) -> bool {
        !matches!(self, ClassPairKind::Translated)
    }

    const REAL_KINDS: [ClassPairKind; 3] = [
        ClassPairKind::RealNbiNbi,
        ClassPairKind::RealWliWli,
        ClassPairKind::RealNbiWli,
    ];
}

impl fmt::Display for ClassPairKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassPairKind::RealNbiNbi => "real_nbi_nbi",
            ClassPairKind::RealWliWli => "real_wli_wli",
            ClassPairKind::RealNbiWli => "real_nbi_wli",
            ClassPairKind::Translated => "translated",
        })
    }
}

impl FromStr for ClassPairKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real_nbi_nbi" => Ok(ClassPairKind::RealNbiNbi),
            "real_wli_wli" => Ok(ClassPairKind::RealWliWli),
            "real_nbi_wli" => Ok(ClassPairKind::RealNbiWli),
            "translated" => Ok(ClassPairKind::Translated),
            other => Err(format!("unknown pair kind {other:?}")),
        }
    }
}

/// A candidate same-region pair declared by the experimenter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingRow {
    pub left_path: PathBuf,
    pub right_path: PathBuf,
    pub kind: ClassPairKind,
    pub class: TissueClass,
}

/// Reads the auxiliary pairing CSV:
/// `left_path,right_path,pair_kind,tissue_class`.
pub fn load_pairing_csv(path: &Path) -> Result<Vec<PairingRow>, SurveyError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != 4 {
            return Err(SurveyError::Malformed(format!(
                "pairing rows need 4 fields, got {}",
                record.len()
            )));
        }
        rows.push(PairingRow {
            left_path: PathBuf::from(&record[0]),
            right_path: PathBuf::from(&record[1]),
            kind: record[2]
                .parse()
                .map_err(SurveyError::Malformed)?,
            class: record[3]
                .parse::<TissueClass>()
                .map_err(SurveyError::Malformed)?,
        });
    }
    Ok(rows)
}

const REALFAKE_PER_DOMAIN: usize = 10;
const CLASSIFY_PER_CLASS: usize = 10;

fn token(prefix: &str, idx: usize, side: char) -> String {
    format!("{prefix}_{idx:02}{side}.png")
}

/// Task 1: 20 same-domain pairs (one real, one generated), 10 per domain,
/// sides randomized, order randomized. Pure function of (pools, seed).
pub fn gen_realfake_task(
    real_pool: &[(PathBuf, DomainTag)],
    generated_pool: &[(PathBuf, DomainTag)],
    seed: u64,
) -> Result<SurveyManifest, SurveyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::new();
    let mut key = BTreeMap::new();
    let mut assets = BTreeMap::new();

    let mut draft = Vec::new();
    for domain in DomainTag::ALL {
        let mut reals: Vec<&PathBuf> = real_pool
            .iter()
            .filter(|(_, d)| *d == domain)
            .map(|(p, _)| p)
            .collect();
        let mut fakes: Vec<&PathBuf> = generated_pool
            .iter()
            .filter(|(_, d)| *d == domain)
            .map(|(p, _)| p)
            .collect();
        if reals.len() < REALFAKE_PER_DOMAIN {
            return Err(SurveyError::InsufficientPool {
                what: format!("real {domain} images"),
                need: REALFAKE_PER_DOMAIN,
                have: reals.len(),
            });
        }
        if fakes.len() < REALFAKE_PER_DOMAIN {
            return Err(SurveyError::InsufficientPool {
                what: format!("generated {domain} images"),
                need: REALFAKE_PER_DOMAIN,
                have: fakes.len(),
            });
        }
        reals.shuffle(&mut rng);
        fakes.shuffle(&mut rng);
        for k in 0..REALFAKE_PER_DOMAIN {
            let real_left = rng.random_range(0.0..1.0) < 0.5;
            draft.push((reals[k].clone(), fakes[k].clone(), domain, real_left));
        }
    }
    draft.shuffle(&mut rng);

    for (idx, (real, fake, domain, real_left)) in draft.into_iter().enumerate() {
        let item_id = format!("t1_{idx:02}");
        let left_token = token("t1", idx, 'a');
        let right_token = token("t1", idx, 'b');
        let (left_path, right_path, side) = if real_left {
            (real, fake, Side::Left)
        } else {
            (fake, real, Side::Right)
        };
        assets.insert(left_token.clone(), left_path);
        assets.insert(right_token.clone(), right_path);
        key.insert(item_id.clone(), ItemKey::RealSide { side, domain });
        items.push(SurveyItem {
            item_id,
            left_token,
            right_token,
        });
    }

    Ok(SurveyManifest {
        task_id: TaskId::RealVsFake,
        seed,
        items,
        key,
        assets,
    })
}

/// Task 2: 40 pairs, 10 per tissue class, real-only and translated pairs in
/// a 50/50 ratio, the three real sub-types spread as evenly as possible.
pub fn gen_classification_task(
    pairing: &[PairingRow],
    seed: u64,
) -> Result<SurveyManifest, SurveyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_class_real = CLASSIFY_PER_CLASS / 2;
    let per_class_translated = CLASSIFY_PER_CLASS - per_class_real;

    let mut draft: Vec<(PairingRow, usize)> = Vec::new();
    for (ci, class) in TissueClass::CLASSES.iter().enumerate() {
        // Translated pairs.
        let mut translated: Vec<&PairingRow> = pairing
            .iter()
            .filter(|r| r.class == *class && r.kind == ClassPairKind::Translated)
            .collect();
        if translated.len() < per_class_translated {
            return Err(SurveyError::InsufficientPool {
                what: format!("translated pairs of class {class}"),
                need: per_class_translated,
                have: translated.len(),
            });
        }
        translated.shuffle(&mut rng);
        for row in translated.into_iter().take(per_class_translated) {
            draft.push((row.clone(), ci));
        }

        // Real pairs, rotating through the sub-types for an even spread;
        // fall back to any available real sub-type when one is exhausted.
        let mut taken = 0usize;
        let mut by_kind: BTreeMap<u8, Vec<&PairingRow>> = BTreeMap::new();
        for (ki, kind) in ClassPairKind::REAL_KINDS.iter().enumerate() {
            let mut rows: Vec<&PairingRow> = pairing
                .iter()
                .filter(|r| r.class == *class && r.kind == *kind)
                .collect();
            rows.shuffle(&mut rng);
            by_kind.insert(ki as u8, rows);
        }
        let total_real: usize = by_kind.values().map(|v| v.len()).sum();
        if total_real < per_class_real {
            return Err(SurveyError::InsufficientPool {
                what: format!("real pairs of class {class}"),
                need: per_class_real,
                have: total_real,
            });
        }
        let mut cursor = ci; // rotate the starting sub-type per class
        while taken < per_class_real {
            let ki = (cursor % 3) as u8;
            cursor += 1;
            if let Some(rows) = by_kind.get_mut(&ki) {
                if let Some(row) = rows.pop() {
                    draft.push((row.clone(), ci));
                    taken += 1;
                    continue;
                }
            }
            // All three empty would have been caught by the total check.
        }
    }
    draft.shuffle(&mut rng);

    let mut items = Vec::new();
    let mut key = BTreeMap::new();
    let mut assets = BTreeMap::new();
    for (idx, (row, _)) in draft.into_iter().enumerate() {
        let item_id = format!("t2_{idx:02}");
        let left_token = token("t2", idx, 'a');
        let right_token = token("t2", idx, 'b');
        // Randomize left/right presentation.
        let (left_path, right_path) = if rng.random_range(0.0..1.0) < 0.5 {
            (row.left_path.clone(), row.right_path.clone())
        } else {
            (row.right_path.clone(), row.left_path.clone())
        };
        assets.insert(left_token.clone(), left_path);
        assets.insert(right_token.clone(), right_path);
        key.insert(
            item_id.clone(),
            ItemKey::Classify {
                pair_kind: row.kind,
                class: row.class,
            },
        );
        items.push(SurveyItem {
            item_id,
            left_token,
            right_token,
        });
    }

    Ok(SurveyManifest {
        task_id: TaskId::TissueClassify,
        seed,
        items,
        key,
        assets,
    })
}

#[cfg(test)]
pub(crate) mod test_pools {
    use super::*;

    pub fn realfake_pools(
        n_per_domain: usize,
    ) -> (Vec<(PathBuf, DomainTag)>, Vec<(PathBuf, DomainTag)>) {
        let mut real = Vec::new();
        let mut generated = Vec::new();
        for domain in DomainTag::ALL {
            for i in 0..n_per_domain {
                real.push((PathBuf::from(format!("real_{domain}_{i}.png")), domain));
                generated.push((PathBuf::from(format!("gen_{domain}_{i}.png")), domain));
            }
        }
        (real, generated)
    }

    pub fn pairing_rows(per_kind_per_class: usize) -> Vec<PairingRow> {
        let mut rows = Vec::new();
        let kinds = [
            ClassPairKind::RealNbiNbi,
            ClassPairKind::RealWliWli,
            ClassPairKind::RealNbiWli,
            ClassPairKind::Translated,
        ];
        for class in TissueClass::CLASSES {
            for kind in kinds {
                for i in 0..per_kind_per_class {
                    rows.push(PairingRow {
                        left_path: PathBuf::from(format!("{class}_{kind}_{i}_l.png")),
                        right_path: PathBuf::from(format!("{class}_{kind}_{i}_r.png")),
                        kind,
                        class,
                    });
                }
            }
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::test_pools::*;
    use super::*;

    #[test]
    fn realfake_manifest_counts_and_determinism() {
        let (real, generated) = realfake_pools(12);
        let m = gen_realfake_task(&real, &generated, 5).unwrap();
        assert_eq!(m.items.len(), 20);
        let per_domain = |d: DomainTag| {
            m.key
                .values()
                .filter(|k| matches!(k, ItemKey::RealSide { domain, .. } if *domain == d))
                .count()
        };
        assert_eq!(per_domain(DomainTag::Wli), 10);
        assert_eq!(per_domain(DomainTag::Nbi), 10);

        let again = gen_realfake_task(&real, &generated, 5).unwrap();
        assert_eq!(m.items, again.items);
        assert_eq!(m.key, again.key);
        let other = gen_realfake_task(&real, &generated, 6).unwrap();
        assert_ne!(m.key, other.key);
    }

    #[test]
    fn realfake_position_is_balanced_over_seeds() {
        let (real, generated) = realfake_pools(12);
        let mut left = 0usize;
        let mut total = 0usize;
        for seed in 0..200 {
            let m = gen_realfake_task(&real, &generated, seed).unwrap();
            for k in m.key.values() {
                if let ItemKey::RealSide { side, .. } = k {
                    total += 1;
                    if *side == Side::Left {
                        left += 1;
                    }
                }
            }
        }
        let freq = left as f64 / total as f64;
        assert!((freq - 0.5).abs() < 0.08, "left frequency {freq}");
    }

    #[test]
    fn insufficient_pools_are_rejected() {
        let (real, generated) = realfake_pools(5);
        assert!(matches!(
            gen_realfake_task(&real, &generated, 0),
            Err(SurveyError::InsufficientPool { .. })
        ));
    }

    #[test]
    fn classification_manifest_structure() {
        let rows = pairing_rows(6);
        let m = gen_classification_task(&rows, 9).unwrap();
        assert_eq!(m.items.len(), 40);
        let translated = m
            .key
            .values()
            .filter(|k| matches!(k, ItemKey::Classify { pair_kind, .. } if !pair_kind.is_real()))
            .count();
        assert_eq!(translated, 20, "50/50 option split");
        for class in TissueClass::CLASSES {
            let n = m
                .key
                .values()
                .filter(|k| matches!(k, ItemKey::Classify { class: c, .. } if *c == class))
                .count();
            assert_eq!(n, 10, "10 items per class");
        }
        // Key round-trip: every item has a complete key entry.
        for item in &m.items {
            assert!(matches!(
                m.key.get(&item.item_id),
                Some(ItemKey::Classify { .. })
            ));
        }
    }

    #[test]
    fn manifests_do_not_leak_source_paths() {
        let rows = pairing_rows(6);
        let m = gen_classification_task(&rows, 3).unwrap();
        for item in &m.items {
            assert!(item.left_token.starts_with("t2_"));
            assert!(!item.left_token.contains("HGC"));
            assert!(m.assets.contains_key(&item.left_token));
            assert!(m.assets.contains_key(&item.right_token));
        }
    }

    #[test]
    fn pairing_csv_round_trip() {
        let rows = pairing_rows(1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairing.csv");
        let mut w = csv::Writer::from_path(&path).unwrap();
        w.write_record(["left_path", "right_path", "pair_kind", "tissue_class"])
            .unwrap();
        for r in &rows {
            w.write_record([
                r.left_path.to_str().unwrap(),
                r.right_path.to_str().unwrap(),
                &r.kind.to_string(),
                &r.class.to_string(),
            ])
            .unwrap();
        }
        w.flush().unwrap();
        let loaded = load_pairing_csv(&path).unwrap();
        assert_eq!(loaded, rows);
    }
}
