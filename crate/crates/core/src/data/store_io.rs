//! On-disk form of a parsed dataset.
//!
//! A dataset directory holds three files:
//!
//! - `dataset.json`: `{ "format": "fairgo-dataset", "version": 1, "user_ids": [...],
//!   "item_ids": [...], "attributes": [...], "cardinalities": [...] }`
//! - `ratings.csv`: header `user,item,rating,split`, one row per triple with
//!   dense indices and `split` in `train|validation|test`.
//! - `attributes.csv`: header `user,<attribute>...`, one row per user; an empty
//!   cell is a missing label.
//!
//! Writing the same store twice produces byte-identical files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AttributeTable, DataError, Rating, RatingStore, Split};

pub const STORE_FORMAT_VERSION: u32 = 1;
const STORE_FORMAT: &str = "fairgo-dataset";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format: String,
    pub version: u32,
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    pub attributes: Vec<String>,
    pub cardinalities: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RatingRow {
    user: usize,
    item: usize,
    rating: f64,
    split: Split,
}

pub fn write_dataset(dir: &Path, store: &RatingStore, attributes: &AttributeTable) -> Result<(), DataError> {
    if attributes.user_count() != store.user_count() {
        return Err(DataError::InvalidStore(format!(
            "attribute table covers {} users, store has {}",
            attributes.user_count(),
            store.user_count()
        )));
    }
    fs::create_dir_all(dir)?;
    let meta = DatasetMeta {
        format: STORE_FORMAT.into(),
        version: STORE_FORMAT_VERSION,
        user_ids: store.user_ids().to_vec(),
        item_ids: store.item_ids().to_vec(),
        attributes: attributes.names().to_vec(),
        cardinalities: attributes.cardinalities().to_vec(),
    };
    fs::write(dir.join("dataset.json"), serde_json::to_string_pretty(&meta)?)?;

    let mut w = csv::Writer::from_path(dir.join("ratings.csv"))?;
    for r in store.ratings() {
        w.serialize(RatingRow {
            user: r.user,
            item: r.item,
            rating: r.value,
            split: r.split,
        })?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("attributes.csv"))?;
    let mut header = vec!["user".to_string()];
    header.extend(attributes.names().iter().cloned());
    w.write_record(&header)?;
    for u in 0..attributes.user_count() {
        let mut record = vec![u.to_string()];
        record.extend(attributes.row(u).iter().map(|v| v.map_or(String::new(), |c| c.to_string())));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<(RatingStore, AttributeTable), DataError> {
    let meta_path = dir.join("dataset.json");
    if !meta_path.is_file() {
        return Err(DataError::MissingFile(meta_path));
    }
    let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(&meta_path)?)?;
    if meta.format != STORE_FORMAT || meta.version != STORE_FORMAT_VERSION {
        return Err(DataError::InvalidStore(format!(
            "unsupported dataset format {} v{}",
            meta.format, meta.version
        )));
    }

    let mut ratings = Vec::new();
    for row in csv::Reader::from_path(dir.join("ratings.csv"))?.deserialize() {
        let row: RatingRow = row?;
        ratings.push(Rating {
            user: row.user,
            item: row.item,
            value: row.rating,
            split: row.split,
        });
    }
    let store = RatingStore::new(meta.user_ids, meta.item_ids, ratings)?;

    let mut values = vec![vec![None; meta.attributes.len()]; store.user_count()];
    let mut reader = csv::Reader::from_path(dir.join("attributes.csv"))?;
    for record in reader.records() {
        let record = record?;
        let bad = || DataError::InvalidStore(format!("bad attributes row {record:?}"));
        let user: usize = record.get(0).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let row = values.get_mut(user).ok_or_else(bad)?;
        for (k, slot) in row.iter_mut().enumerate() {
            let cell = record.get(k + 1).ok_or_else(bad)?;
            *slot = if cell.is_empty() {
                None
            } else {
                Some(cell.parse().map_err(|_| bad())?)
            };
        }
    }
    let attributes = AttributeTable::new(meta.attributes, meta.cardinalities, values)?;
    Ok((store, attributes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact_and_byte_stable() {
        let store = RatingStore::new(
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into(), "z".into()],
            vec![
                Rating { user: 0, item: 2, value: 1.0 + 1.0 / 3.0, split: Split::Train },
                Rating { user: 1, item: 0, value: 5.0, split: Split::Test },
                Rating { user: 1, item: 1, value: 2.5, split: Split::Validation },
            ],
        )
        .unwrap();
        let attrs = AttributeTable::new(
            vec!["gender".into(), "age".into()],
            vec![2, 3],
            vec![vec![Some(1), None], vec![Some(0), Some(2)]],
        )
        .unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        write_dataset(d1.path(), &store, &attrs).unwrap();
        let (s2, a2) = read_dataset(d1.path()).unwrap();
        assert_eq!(s2, store);
        assert_eq!(a2, attrs);
        write_dataset(d2.path(), &s2, &a2).unwrap();
        for f in ["dataset.json", "ratings.csv", "attributes.csv"] {
            assert_eq!(fs::read(d1.path().join(f)).unwrap(), fs::read(d2.path().join(f)).unwrap());
        }
    }

    #[test]
    fn missing_directory_is_reported() {
        let d = tempfile::tempdir().unwrap();
        assert!(matches!(read_dataset(&d.path().join("none")), Err(DataError::MissingFile(_))));
    }
}
