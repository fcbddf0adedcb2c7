//! MovieLens-1M `::`-delimited files.
//!
//! `ratings.dat`: `UserID::MovieID::Rating::Timestamp`
//! `users.dat`:   `UserID::Gender::Age::Occupation::Zip-code`
//!
//! Attributes come out as `gender` (F=0, M=1), `age` (seven age-code classes)
//! and `occupation` (codes 0..=20).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use super::{AttributeTable, DataError, Rating, RatingStore, Split};

/// Age codes in class order.
pub const MOVIELENS_AGE_CODES: [u32; 7] = [1, 18, 25, 35, 45, 50, 56];
const OCCUPATIONS: usize = 21;

pub fn parse_movielens(ratings_path: &Path, users_path: &Path) -> Result<(RatingStore, AttributeTable), DataError> {
    let ratings_text = read(ratings_path)?;
    let users_text = read(users_path)?;

    let mut raw = Vec::new();
    for (i, line) in ratings_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("::").collect();
        let malformed = |reason: &str| DataError::MalformedLine {
            path: ratings_path.to_path_buf(),
            line: i + 1,
            reason: reason.to_string(),
        };
        if fields.len() != 4 {
            return Err(malformed("expected 4 `::`-separated fields"));
        }
        let user: u64 = fields[0].trim().parse().map_err(|_| malformed("bad user id"))?;
        let item: u64 = fields[1].trim().parse().map_err(|_| malformed("bad movie id"))?;
        let value: f64 = fields[2].trim().parse().map_err(|_| malformed("bad rating"))?;
        if !(1.0..=5.0).contains(&value) {
            return Err(malformed("rating outside [1, 5]"));
        }
        raw.push((i + 1, user, item, value));
    }
    if raw.is_empty() {
        return Err(DataError::MissingData(format!("{} has no ratings", ratings_path.display())));
    }

    let mut profiles = BTreeMap::new();
    for (i, line) in users_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("::").collect();
        let malformed = |reason: &str| DataError::MalformedLine {
            path: users_path.to_path_buf(),
            line: i + 1,
            reason: reason.to_string(),
        };
        if fields.len() != 5 {
            return Err(malformed("expected 5 `::`-separated fields"));
        }
        let user: u64 = fields[0].trim().parse().map_err(|_| malformed("bad user id"))?;
        let gender = match fields[1].trim() {
            "F" => 0,
            "M" => 1,
            _ => return Err(malformed("gender must be F or M")),
        };
        let age_code = fields[2].trim();
        let age = age_code
            .parse::<u32>()
            .ok()
            .and_then(|c| MOVIELENS_AGE_CODES.iter().position(|&a| a == c))
            .ok_or_else(|| DataError::UnknownAgeCode {
                path: users_path.to_path_buf(),
                line: i + 1,
                code: age_code.to_string(),
            })?;
        let occupation: usize = fields[3]
            .trim()
            .parse()
            .ok()
            .filter(|&o| o < OCCUPATIONS)
            .ok_or_else(|| malformed("occupation must be 0..=20"))?;
        if profiles.insert(user, [gender, age, occupation]).is_some() {
            return Err(malformed("duplicate user id"));
        }
    }

    let users: BTreeSet<u64> = raw.iter().map(|r| r.1).chain(profiles.keys().copied()).collect();
    let items: BTreeSet<u64> = raw.iter().map(|r| r.2).collect();
    let user_index: BTreeMap<u64, usize> = users.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let item_index: BTreeMap<u64, usize> = items.iter().enumerate().map(|(i, &v)| (v, i)).collect();

    let mut seen = BTreeSet::new();
    let mut ratings = Vec::with_capacity(raw.len());
    for (line, user, item, value) in raw {
        if !seen.insert((user, item)) {
            return Err(DataError::MalformedLine {
                path: ratings_path.to_path_buf(),
                line,
                reason: format!("duplicate rating for user {user}, movie {item}"),
            });
        }
        ratings.push(Rating {
            user: user_index[&user],
            item: item_index[&item],
            value,
            split: Split::Train,
        });
    }

    let store = RatingStore::new(
        users.iter().map(u64::to_string).collect(),
        items.iter().map(u64::to_string).collect(),
        ratings,
    )?;
    let values = users
        .iter()
        .map(|u| match profiles.get(u) {
            Some(p) => p.iter().map(|&c| Some(c)).collect(),
            None => vec![None; 3],
        })
        .collect();
    let attributes = AttributeTable::new(
        vec!["gender".into(), "age".into(), "occupation".into()],
        vec![2, MOVIELENS_AGE_CODES.len(), OCCUPATIONS],
        values,
    )?;
    Ok((store, attributes))
}

fn read(path: &Path) -> Result<String, DataError> {
    if !path.is_file() {
        return Err(DataError::MissingFile(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?)
}
