//! GAN training dataset composition (D1 / D2 / D3).

use super::{CompositionId, DataError, DatasetManifest, SourceDataset};

/// Reference per-domain counts for the published corpus, kept as run
/// metadata only; the loader always trusts the files actually on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompositionReference {
    pub nbi: usize,
    pub wli: usize,
    pub total: usize,
}

/// Published composition counts. The per-domain columns in the source
/// material disagree with the per-class table for the internal corpus
/// (e.g. D1 lists 1036 NBI against a 321-NBI class breakdown), so both
/// counts are surfaced and interpretation is left to the experimenter.
pub fn table_reference_counts(id: CompositionId) -> Option<CompositionReference> {
    match id {
        CompositionId::D1 => Some(CompositionReference {
            nbi: 1036,
            wli: 228,
            total: 1264,
        }),
        CompositionId::D2 => Some(CompositionReference {
            nbi: 4592,
            wli: 2512,
            total: 7104,
        }),
        CompositionId::D3 => Some(CompositionReference {
            nbi: 5628,
            wli: 2740,
            total: 8368,
        }),
        CompositionId::Custom => None,
    }
}

fn required_sources(id: CompositionId) -> &'static [SourceDataset] {
    match id {
        CompositionId::D1 => &[SourceDataset::DA],
        CompositionId::D2 => &[SourceDataset::DB, SourceDataset::DC, SourceDataset::DD],
        CompositionId::D3 => &[
            SourceDataset::DA,
            SourceDataset::DB,
            SourceDataset::DC,
            SourceDataset::DD,
        ],
        CompositionId::Custom => &[],
    }
}

/// Unions the given parts into one manifest, without duplicates.
///
/// D1 is the internal training corpus alone, D2 the union of the external
/// corpora, D3 the union of both. Synthetic parts are accepted under any
/// composition for desk-scale runs.
pub fn compose_gan_dataset(
    parts: &[DatasetManifest],
    composition_id: CompositionId,
) -> Result<DatasetManifest, DataError> {
    let mut records = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for part in parts {
        for r in &part.records {
            if seen.insert(r.image_path.clone()) {
                records.push(r.clone());
            }
        }
    }
    for &source in required_sources(composition_id) {
        if !records.iter().any(|r| r.source_dataset == source) {
            return Err(DataError::MissingPart {
                composition: composition_id.to_string(),
                missing: source.to_string(),
            });
        }
    }
    let mut manifest = DatasetManifest::new(records, composition_id)?;
    manifest.composition_id = composition_id;
    Ok(manifest)
}
