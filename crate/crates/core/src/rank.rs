//! Ranking of candidate groups by embedding-space dispersion.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::ScoredGroup;
use crate::embed::ReviewerEmbedding;
use crate::error::{Error, Result};
use crate::model::Dataset;

/// Sort direction for dispersion. Ascending puts the tightest groups first.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankOrder {
    #[default]
    Ascending,
    Descending,
}

impl fmt::Display for RankOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RankOrder::Ascending => "ascending",
            RankOrder::Descending => "descending",
        })
    }
}

impl FromStr for RankOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ascending" | "asc" => Ok(RankOrder::Ascending),
            "descending" | "desc" => Ok(RankOrder::Descending),
            _ => Err(Error::InvalidParams(format!("unknown rank order `{s}`"))),
        }
    }
}

/// Mean squared Euclidean distance of the vectors to their centroid.
///
/// Coordinates are taken relative to the first vector, which leaves the value
/// unchanged but makes identical vectors give exactly 0 and keeps large
/// common offsets from swamping the differences.
pub fn dispersion(vectors: &[&[f64]]) -> f64 {
    let Some(first) = vectors.first() else {
        return 0.0;
    };
    let n = vectors.len() as f64;
    let mut centroid = vec![0.0; first.len()];
    for v in vectors {
        for ((c, x), o) in centroid.iter_mut().zip(v.iter()).zip(first.iter()) {
            *c += x - o;
        }
    }
    centroid.iter_mut().for_each(|c| *c /= n);
    let total: f64 = vectors
        .iter()
        .map(|v| {
            v.iter()
                .zip(first.iter())
                .zip(&centroid)
                .map(|((x, o), c)| (x - o - c) * (x - o - c))
                .sum::<f64>()
        })
        .sum();
    total / n
}

/// Dispersion of a group's members; `ids` are reviewer ids.
pub fn group_dispersion<S: AsRef<str>>(ids: &[S], embedding: &ReviewerEmbedding) -> Result<f64> {
    let vectors = ids
        .iter()
        .map(|id| {
            embedding
                .get(id.as_ref())
                .ok_or_else(|| Error::MissingEmbedding(id.as_ref().to_owned()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(dispersion(&vectors))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedGroup {
    pub rank: usize,
    pub dispersion: f64,
    pub group: ScoredGroup,
}

fn compare(a: (f64, usize, usize), b: (f64, usize, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2))
}

/// Sorts by dispersion, breaking ties by larger size and then by group id.
/// Descending is the exact reverse of the ascending order.
pub fn rank_groups(
    groups: Vec<ScoredGroup>,
    dataset: &Dataset,
    embedding: &ReviewerEmbedding,
    order: RankOrder,
) -> Result<Vec<RankedGroup>> {
    let dispersions = groups
        .par_iter()
        .map(|g| {
            let ids: Vec<&str> = g.group.members.iter().map(|&r| dataset.reviewer_id(r)).collect();
            group_dispersion(&ids, embedding)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut items: Vec<(f64, ScoredGroup)> = dispersions.into_iter().zip(groups).collect();
    items.sort_by(|(da, a), (db, b)| compare((*da, a.group.size(), a.id), (*db, b.group.size(), b.id)));
    if order == RankOrder::Descending {
        items.reverse();
    }
    Ok(items
        .into_iter()
        .enumerate()
        .map(|(k, (dispersion, group))| RankedGroup {
            rank: k + 1,
            dispersion,
            group,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indicators::IndicatorVector;
    use crate::model::{CandidateGroup, Provenance, Review};

    #[test]
    fn dispersion_examples() {
        assert_eq!(dispersion(&[&[0.0], &[2.0]]), 1.0);
        assert_eq!(dispersion(&[&[1.5, 2.0], &[1.5, 2.0], &[1.5, 2.0]]), 0.0);
        assert_eq!(dispersion(&[]), 0.0);
    }

    fn setup(sizes: &[usize], positions: &[f64]) -> (Dataset, ReviewerEmbedding, Vec<ScoredGroup>) {
        let total: usize = sizes.iter().sum();
        let reviews: Vec<Review> = (0..total)
            .map(|k| Review {
                reviewer_id: format!("r{k:02}"),
                product_id: "p".into(),
                rating: 5,
                day: 0,
                text: String::new(),
            })
            .collect();
        let ds = Dataset::build(reviews, Default::default(), None).unwrap();
        let mut entries = Vec::new();
        let mut groups = Vec::new();
        let mut next = 0;
        for (gi, (&size, &spread)) in sizes.iter().zip(positions).enumerate() {
            let mut members = Vec::new();
            for m in 0..size {
                let id = format!("r{next:02}");
                entries.push((id.clone(), vec![spread * m as f64]));
                members.push(ds.reviewer_ix(&id).unwrap());
                next += 1;
            }
            let group = CandidateGroup::from_members(members.into_iter().collect(), &ds, Provenance::supplied());
            groups.push(ScoredGroup {
                id: gi + 1,
                group,
                indicators: IndicatorVector::default(),
            });
        }
        (ds, ReviewerEmbedding::new(1, entries).unwrap(), groups)
    }

    #[test]
    fn ascending_puts_tightest_first() {
        let (ds, emb, groups) = setup(&[2, 2, 2], &[0.1, 0.5, 0.0]);
        let ranked = rank_groups(groups, &ds, &emb, RankOrder::Ascending).unwrap();
        assert_eq!(ranked[0].group.id, 3);
        assert_eq!(ranked.iter().map(|r| r.rank).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn ties_prefer_larger_then_id() {
        let (ds, emb, groups) = setup(&[3, 5, 3], &[0.0, 0.0, 0.0]);
        let ranked = rank_groups(groups, &ds, &emb, RankOrder::Ascending).unwrap();
        assert_eq!(ranked.iter().map(|r| r.group.id).collect::<Vec<_>>(), vec![2, 1, 3]);
    }

    #[test]
    fn descending_reverses_exactly() {
        let (ds, emb, groups) = setup(&[3, 5, 3, 2], &[0.0, 0.0, 0.0, 1.0]);
        let asc = rank_groups(groups.clone(), &ds, &emb, RankOrder::Ascending).unwrap();
        let desc = rank_groups(groups, &ds, &emb, RankOrder::Descending).unwrap();
        let a: Vec<_> = asc.iter().map(|r| r.group.id).collect();
        let mut d: Vec<_> = desc.iter().map(|r| r.group.id).collect();
        d.reverse();
        assert_eq!(a, d);
    }

    #[test]
    fn missing_embedding_named() {
        let emb = ReviewerEmbedding::new(1, vec![("a".into(), vec![0.0])]).unwrap();
        match group_dispersion(&["a", "zz"], &emb) {
            Err(Error::MissingEmbedding(id)) => assert_eq!(id, "zz"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn order_parsing() {
        assert_eq!("desc".parse::<RankOrder>().unwrap(), RankOrder::Descending);
        assert_eq!(RankOrder::default().to_string(), "ascending");
        assert!("sideways".parse::<RankOrder>().is_err());
    }
}
