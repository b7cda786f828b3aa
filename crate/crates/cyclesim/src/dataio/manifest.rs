//! Manifest CSV reading and writing.
//!
//! Schema: `image_path,patient_id,domain,tissue,source_dataset` with
//! domain in {WLI, NBI}, tissue in {HGC, LGC, NTL, NST, UNLABELED}.

use std::path::{Path, PathBuf};

use super::{
    CompositionId, DataError, DatasetManifest, DomainTag, ImageRecord, SourceDataset, TissueClass,
};

pub(crate) const HEADER: [&str; 5] = [
    "image_path",
    "patient_id",
    "domain",
    "tissue",
    "source_dataset",
];

/// Loads a manifest CSV, preserving row order.
///
/// Validation: exact header, one record per data row, no duplicate paths,
/// non-empty patient id for D_A records, UNLABELED confined to NBI records
/// and external corpora. Errors carry the offending line number.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DataError> {
    if !path.exists() {
        return Err(DataError::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)?;

    let headers = reader.headers()?.clone();
    let found: Vec<&str> = headers.iter().collect();
    if found != HEADER {
        return Err(DataError::BadHeader {
            expected: HEADER.join(","),
            found: found.join(","),
        });
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != HEADER.len() {
            return Err(DataError::MalformedRow {
                line,
                msg: format!("expected {} fields, found {}", HEADER.len(), row.len()),
            });
        }
        let image_path = PathBuf::from(&row[0]);
        if row[0].is_empty() {
            return Err(DataError::MalformedRow {
                line,
                msg: "empty image_path".into(),
            });
        }
        let patient_id = row[1].to_string();
        let domain: DomainTag = row[2].parse().map_err(|_| DataError::UnknownToken {
            line,
            field: "domain",
            value: row[2].to_string(),
        })?;
        let tissue: TissueClass = row[3].parse().map_err(|_| DataError::UnknownToken {
            line,
            field: "tissue",
            value: row[3].to_string(),
        })?;
        let source_dataset: SourceDataset =
            row[4].parse().map_err(|_| DataError::UnknownToken {
                line,
                field: "source_dataset",
                value: row[4].to_string(),
            })?;
        if source_dataset == SourceDataset::DA && patient_id.is_empty() {
            return Err(DataError::MalformedRow {
                line,
                msg: "records from D_A require a patient_id".into(),
            });
        }
        if tissue == TissueClass::Unlabeled
            && domain == DomainTag::Wli
            && !source_dataset.is_external()
        {
            return Err(DataError::MalformedRow {
                line,
                msg: "UNLABELED is only permitted for NBI records or external corpora".into(),
            });
        }
        records.push(ImageRecord {
            image_path,
            patient_id,
            domain,
            tissue,
            source_dataset,
        });
    }
    DatasetManifest::new(records, CompositionId::Custom)
}

/// Writes a manifest CSV with the fixed header.
pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<(), DataError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(HEADER)?;
    for r in &manifest.records {
        writer.write_record([
            r.image_path.to_string_lossy().as_ref(),
            r.patient_id.as_str(),
            &r.domain.to_string(),
            &r.tissue.to_string(),
            &r.source_dataset.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        (dir, path)
    }

    #[test]
    fn four_rows_one_per_class() {
        let (_dir, path) = write_csv(
            "image_path,patient_id,domain,tissue,source_dataset\n\
             a.png,p1,WLI,HGC,D_A\n\
             b.png,p1,WLI,LGC,D_A\n\
             c.png,p2,WLI,NTL,D_A\n\
             d.png,p2,WLI,NST,D_A\n",
        );
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.len(), 4);
        for c in TissueClass::CLASSES {
            assert_eq!(m.count_tissue(c), 1);
        }
        // Row order preserved.
        assert_eq!(m.records[2].image_path, PathBuf::from("c.png"));
    }

    #[test]
    fn header_only_yields_empty_manifest() {
        let (_dir, path) = write_csv("image_path,patient_id,domain,tissue,source_dataset\n");
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.len(), 0);
    }

    #[test]
    fn per_domain_counts_match_reference_totals() {
        // A manifest mirroring the reference corpus totals: 1433 WLI, 321 NBI.
        let mut content = String::from("image_path,patient_id,domain,tissue,source_dataset\n");
        for i in 0..1433 {
            content.push_str(&format!("w{i}.png,p{},WLI,HGC,D_A\n", i % 23));
        }
        for i in 0..321 {
            content.push_str(&format!("n{i}.png,p{},NBI,UNLABELED,D_A\n", i % 3));
        }
        let (_dir, path) = write_csv(&content);
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.count_domain(DomainTag::Wli), 1433);
        assert_eq!(m.count_domain(DomainTag::Nbi), 321);
        assert_eq!(m.len(), 1754);
    }

    #[test]
    fn missing_file_is_reported() {
        assert!(matches!(
            load_manifest(Path::new("/nonexistent/m.csv")),
            Err(DataError::MissingFile(_))
        ));
    }

    #[test]
    fn unknown_tokens_carry_line_numbers() {
        let (_dir, path) = write_csv(
            "image_path,patient_id,domain,tissue,source_dataset\n\
             a.png,p1,WLI,HGC,D_A\n\
             b.png,p1,BLI,HGC,D_A\n",
        );
        match load_manifest(&path) {
            Err(DataError::UnknownToken { line, field, value }) => {
                assert_eq!(line, 3);
                assert_eq!(field, "domain");
                assert_eq!(value, "BLI");
            }
            other => panic!("expected UnknownToken, got {other:?}"),
        }
    }

    #[test]
    fn unlabeled_wli_in_da_is_rejected() {
        let (_dir, path) = write_csv(
            "image_path,patient_id,domain,tissue,source_dataset\n\
             a.png,p1,WLI,UNLABELED,D_A\n",
        );
        assert!(matches!(
            load_manifest(&path),
            Err(DataError::MalformedRow { line: 2, .. })
        ));
        // The same label is fine for an external corpus.
        let (_dir2, path2) = write_csv(
            "image_path,patient_id,domain,tissue,source_dataset\n\
             a.png,,WLI,UNLABELED,D_C\n",
        );
        assert!(load_manifest(&path2).is_ok());
    }

    #[test]
    fn save_load_round_trip() {
        let recs = vec![
            super::super::test_record("x/a.png", "p1", DomainTag::Wli, TissueClass::Hgc),
            super::super::test_record("x/b.png", "p2", DomainTag::Nbi, TissueClass::Unlabeled),
        ];
        let m = DatasetManifest::new(recs, CompositionId::Custom).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        save_manifest(&m, &path).unwrap();
        let loaded = load_manifest(&path).unwrap();
        assert_eq!(loaded.records, m.records);
    }
}
