//! Lastfm-360K tab-separated files.
//!
//! Plays: `user \t artist-mbid \t artist-name \t plays`. The artist key is the
//! MBID, or the name when the MBID is empty. Repeated (user, artist) rows are
//! summed.
//!
//! Profile: `user \t gender \t age \t country \t signup`. Gender `f`/`m` maps to
//! 0/1; ages are binned into `[1,24]`, `[25,34]`, `[35,∞)`. Unparseable or empty
//! fields leave the label missing; such users keep their ratings.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use super::{AttributeTable, DataError, Rating, RatingStore, Split};

/// Maps a positive age to one of three classes.
pub fn age_class(age: u32) -> Option<usize> {
    match age {
        0 => None,
        1..=24 => Some(0),
        25..=34 => Some(1),
        _ => Some(2),
    }
}

/// `r = 1 + 4·(ln(1+c) − m)/(M − m)` with `m`, `M` the min and max of
/// `ln(1+c)` over `counts`. When every count is equal the result is 3.0.
pub fn log_normalize_plays(counts: &[u64]) -> Result<Vec<f64>, DataError> {
    if let Some(pos) = counts.iter().position(|&c| c == 0) {
        return Err(DataError::NonPositivePlayCount {
            path: Default::default(),
            line: pos + 1,
        });
    }
    let logs: Vec<f64> = counts.iter().map(|&c| (c as f64).ln_1p()).collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return Ok(vec![3.0; counts.len()]);
    }
    Ok(logs
        .iter()
        .map(|&l| (1.0 + 4.0 * (l - lo) / (hi - lo)).clamp(1.0, 5.0))
        .collect())
}

pub fn parse_lastfm(plays_path: &Path, profile_path: &Path) -> Result<(RatingStore, AttributeTable), DataError> {
    for p in [plays_path, profile_path] {
        if !p.is_file() {
            return Err(DataError::MissingFile(p.to_path_buf()));
        }
    }
    let plays_text = fs::read_to_string(plays_path)?;
    let profile_text = fs::read_to_string(profile_path)?;

    let mut plays: BTreeMap<(String, String), u64> = BTreeMap::new();
    for (i, line) in plays_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 4 {
            return Err(DataError::MalformedLine {
                path: plays_path.to_path_buf(),
                line: i + 1,
                reason: "expected user, artist mbid, artist name, plays".into(),
            });
        }
        let count_field = fields[fields.len() - 1].trim();
        let count: i64 = count_field.parse().map_err(|_| DataError::MalformedLine {
            path: plays_path.to_path_buf(),
            line: i + 1,
            reason: format!("bad play count {count_field:?}"),
        })?;
        if count <= 0 {
            return Err(DataError::NonPositivePlayCount {
                path: plays_path.to_path_buf(),
                line: i + 1,
            });
        }
        let artist = match fields[1].trim() {
            "" => format!("name:{}", fields[2..fields.len() - 1].join("\t")),
            mbid => mbid.to_string(),
        };
        *plays.entry((fields[0].to_string(), artist)).or_default() += count as u64;
    }
    if plays.is_empty() {
        return Err(DataError::MissingData(format!("{} has no play records", plays_path.display())));
    }

    let mut profiles: BTreeMap<String, [Option<usize>; 2]> = BTreeMap::new();
    for line in profile_text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let gender = match fields.get(1).map(|g| g.trim()) {
            Some("f") => Some(0),
            Some("m") => Some(1),
            _ => None,
        };
        let age = fields
            .get(2)
            .and_then(|a| a.trim().parse::<u32>().ok())
            .and_then(age_class);
        profiles.insert(fields[0].to_string(), [gender, age]);
    }

    let users: BTreeSet<&String> = plays.keys().map(|(u, _)| u).chain(profiles.keys()).collect();
    let items: BTreeSet<&String> = plays.keys().map(|(_, a)| a).collect();
    let user_index: BTreeMap<&String, usize> = users.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let item_index: BTreeMap<&String, usize> = items.iter().enumerate().map(|(i, &a)| (a, i)).collect();

    let counts: Vec<u64> = plays.values().copied().collect();
    let normalized = log_normalize_plays(&counts)?;
    let ratings = plays
        .keys()
        .zip(normalized)
        .map(|((u, a), value)| Rating {
            user: user_index[u],
            item: item_index[a],
            value,
            split: Split::Train,
        })
        .collect();

    let store = RatingStore::new(
        users.iter().map(|u| u.to_string()).collect(),
        items.iter().map(|a| a.to_string()).collect(),
        ratings,
    )?;
    let values = users
        .iter()
        .map(|u| profiles.get(*u).map_or(vec![None, None], |p| p.to_vec()))
        .collect();
    let attributes = AttributeTable::new(vec!["gender".into(), "age".into()], vec![2, 3], values)?;
    Ok((store, attributes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn endpoints_and_midpoint() {
        let r = log_normalize_plays(&[10, 100, 1]).unwrap();
        assert_eq!(r[2], 1.0);
        assert_eq!(r[1], 5.0);
        assert!(r[0] > 1.0 && r[0] < 5.0);

        // ln(1+c) midway between ln 2 and ln 8 is ln 4, i.e. c = 3.
        let r = log_normalize_plays(&[1, 3, 7]).unwrap();
        assert!((r[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn identical_counts_map_to_three() {
        assert_eq!(log_normalize_plays(&[4, 4, 4]).unwrap(), vec![3.0; 3]);
    }

    #[test]
    fn zero_count_is_rejected() {
        assert!(matches!(
            log_normalize_plays(&[3, 0]),
            Err(DataError::NonPositivePlayCount { line: 2, .. })
        ));
    }

    #[test]
    fn age_bins() {
        assert_eq!(age_class(20), Some(0));
        assert_eq!(age_class(24), Some(0));
        assert_eq!(age_class(30), Some(1));
        assert_eq!(age_class(50), Some(2));
        assert_eq!(age_class(0), None);
    }

    #[test]
    fn parses_plays_and_profiles() {
        let dir = tempfile::tempdir().unwrap();
        let plays = dir.path().join("plays.tsv");
        let profile = dir.path().join("profile.tsv");
        fs::write(
            &plays,
            "u1\tmb-a\tArtist A\t10\nu1\tmb-b\tArtist B\t100\nu2\t\tNo Mbid\t5\nu2\tmb-a\tArtist A\t3\nu2\tmb-a\tArtist A\t4\n",
        )
        .unwrap();
        fs::write(&profile, "u1\tm\t20\tSweden\tFeb 1, 2007\nu2\tf\t\tGermany\tFeb 1, 2007\nu3\t\t50\tPeru\tx\n").unwrap();
        let (store, attrs) = parse_lastfm(&plays, &profile).unwrap();
        assert_eq!(store.user_count(), 3);
        assert_eq!(store.item_count(), 3);
        assert_eq!(store.len(), 4);
        assert!(store.ratings().iter().all(|r| (1.0..=5.0).contains(&r.value)));
        let u1: Vec<f64> = store.ratings().iter().filter(|r| r.user == 0).map(|r| r.value).collect();
        assert_eq!(u1.len(), 2);
        assert_eq!(attrs.row(0), &[Some(1), Some(0)]);
        assert_eq!(attrs.row(1), &[Some(0), None]);
        assert_eq!(attrs.row(2), &[None, Some(2)]);
    }

    #[test]
    fn non_positive_plays_in_file() {
        let dir = tempfile::tempdir().unwrap();
        let plays = dir.path().join("plays.tsv");
        let profile = dir.path().join("profile.tsv");
        fs::write(&plays, "u1\tmb-a\tA\t10\nu1\tmb-b\tB\t0\n").unwrap();
        fs::write(&profile, "u1\tm\t20\n").unwrap();
        assert!(matches!(
            parse_lastfm(&plays, &profile),
            Err(DataError::NonPositivePlayCount { line: 2, .. })
        ));
        assert!(matches!(
            parse_lastfm(&dir.path().join("x"), &profile),
            Err(DataError::MissingFile(_))
        ));
    }

    proptest! {
        #[test]
        fn normalization_is_monotone_and_in_range(counts in prop::collection::vec(1u64..1_000_000, 1..50)) {
            let r = log_normalize_plays(&counts).unwrap();
            for (i, a) in counts.iter().enumerate() {
                prop_assert!((1.0..=5.0).contains(&r[i]));
                for (j, b) in counts.iter().enumerate() {
                    if a < b {
                        prop_assert!(r[i] <= r[j]);
                    }
                }
            }
        }
    }
}
