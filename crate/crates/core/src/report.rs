//! Text formats for groups, indicator breakdowns, rankings and metrics.
//!
//! Floats are written with Rust's shortest round-trip formatting, so the same
//! values always produce the same bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::detect::ScoredGroup;
use crate::error::{Error, Result};
use crate::eval::MetricReport;
use crate::indicators::collective_score;
use crate::model::{CandidateGroup, Dataset, Provenance};
use crate::rank::RankedGroup;

pub const GROUPS_HEADER: &str = "group_id\treviewers\tproducts\tcollective";
pub const INDICATORS_HEADER: &str = "group_id,rt,nt,pt,rv,rr,tw,collective,penalty,size,n_targets";
pub const RANKED_HEADER: &str = "rank,group_id,dispersion,size,n_targets,collective,frac_labeled_fraud";
pub const GROUP_SCORES_HEADER: &str = "group_id,gs,rcs,relevance";

fn check_id(id: &str) -> std::io::Result<&str> {
    if id.contains([',', '\t', '\n', '\r']) {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            format!("id `{id}` contains a separator character"),
        ));
    }
    Ok(id)
}

/// Tab-separated groups: comma-joined reviewer and product ids per group.
pub fn write_groups<W: Write>(groups: &[ScoredGroup], dataset: &Dataset, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{GROUPS_HEADER}")?;
    for g in groups {
        let reviewers = g
            .group
            .members
            .iter()
            .map(|&r| check_id(dataset.reviewer_id(r)))
            .collect::<std::io::Result<Vec<_>>>()?;
        let products = g
            .group
            .targets
            .iter()
            .map(|&p| check_id(dataset.product_id(p)))
            .collect::<std::io::Result<Vec<_>>>()?;
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            g.id,
            reviewers.join(","),
            products.join(","),
            g.indicators.collective
        )?;
    }
    Ok(())
}

/// Reads a groups file against `dataset`, recomputing indicators. An empty
/// products column derives targets from the members.
pub fn read_groups(path: &Path, dataset: &Dataset, window_days: f64) -> Result<Vec<ScoredGroup>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut groups = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line_no = k + 1;
        if k == 0 {
            if line.trim_end() != GROUPS_HEADER {
                return Err(Error::format(
                    path,
                    format!("line 1: expected header `{GROUPS_HEADER}`"),
                ));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 {
            return Err(Error::format(
                path,
                format!("line {line_no}: expected tab-separated columns"),
            ));
        }
        let id: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::format(path, format!("line {line_no}: bad group_id `{}`", fields[0])))?;
        let split = |s: &str| -> Vec<String> {
            s.split(',')
                .map(str::trim)
                .filter(|x| !x.is_empty())
                .map(String::from)
                .collect()
        };
        let members = dataset
            .reviewer_set(&split(fields[1]))
            .map_err(|e| Error::format(path, format!("line {line_no}: {e}")))?;
        let product_ids = fields.get(2).map(|s| split(s)).unwrap_or_default();
        let group = if product_ids.is_empty() {
            CandidateGroup::from_members(members, dataset, Provenance::supplied())
        } else {
            let targets = dataset
                .product_set(&product_ids)
                .map_err(|e| Error::format(path, format!("line {line_no}: {e}")))?;
            CandidateGroup::with_targets(members, targets, Provenance::supplied())
        };
        let indicators = collective_score(&group, dataset, window_days)
            .map_err(|e| Error::format(path, format!("line {line_no}: {e}")))?;
        groups.push(ScoredGroup { id, group, indicators });
    }
    Ok(groups)
}

pub fn write_indicators<W: Write>(groups: &[ScoredGroup], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{INDICATORS_HEADER}")?;
    for g in groups {
        let v = &g.indicators;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            g.id,
            v.rt,
            v.nt,
            v.pt,
            v.rv,
            v.rr,
            v.tw,
            v.collective,
            v.penalty,
            g.group.size(),
            g.group.targets.len()
        )?;
    }
    Ok(())
}

/// The fraud column is left empty when the dataset has no labels.
pub fn write_ranked<W: Write>(ranked: &[RankedGroup], dataset: &Dataset, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{RANKED_HEADER}")?;
    for r in ranked {
        let g = &r.group;
        let frac = crate::eval::group_relevance(g.group.members.as_slice(), dataset)
            .map(|f| f.to_string())
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.rank,
            g.id,
            r.dispersion,
            g.group.size(),
            g.group.targets.len(),
            g.indicators.collective,
            frac
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedRow {
    pub rank: usize,
    pub group_id: usize,
    pub dispersion: f64,
    pub size: usize,
    pub n_targets: usize,
    pub collective: f64,
    pub frac_labeled_fraud: Option<f64>,
}

pub fn read_ranked(path: &Path) -> Result<Vec<RankedRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let headers = rdr.headers().map_err(|e| Error::format(path, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>().join(",") != RANKED_HEADER {
        return Err(Error::format(
            path,
            format!("line 1: expected header `{RANKED_HEADER}`"),
        ));
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |col: &str| Error::format(path, format!("line {line}: bad {col}"));
        let field = |k: usize| record.get(k).unwrap_or("").trim();
        let frac = field(6);
        rows.push(RankedRow {
            rank: field(0).parse().map_err(|_| bad("rank"))?,
            group_id: field(1).parse().map_err(|_| bad("group_id"))?,
            dispersion: field(2).parse().map_err(|_| bad("dispersion"))?,
            size: field(3).parse().map_err(|_| bad("size"))?,
            n_targets: field(4).parse().map_err(|_| bad("n_targets"))?,
            collective: field(5).parse().map_err(|_| bad("collective"))?,
            frac_labeled_fraud: if frac.is_empty() {
                None
            } else {
                Some(frac.parse().map_err(|_| bad("frac_labeled_fraud"))?)
            },
        });
    }
    Ok(rows)
}

// Shortest round-trip form, switching to exponent notation for tiny values
// (p-values underflow towards 1e-300 and `{}` would print them in full).
fn real(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-4 {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

/// Flat `key=value` lines.
pub fn write_metrics<W: Write>(report: &MetricReport, mut out: W) -> std::io::Result<()> {
    writeln!(out, "groups={}", report.groups.len())?;
    writeln!(out, "gs_emd={}", real(report.gs_emd))?;
    writeln!(out, "rcs_emd={}", real(report.rcs_emd))?;
    for (k, v) in &report.ndcg {
        writeln!(out, "ndcg@{k}={}", real(*v))?;
    }
    for (feature, ks) in &report.ks {
        writeln!(out, "ks.{feature}.statistic={}", real(ks.statistic))?;
        writeln!(out, "ks.{feature}.p_value={}", real(ks.p_value))?;
        writeln!(out, "ks.{feature}.n_within={}", ks.n_within)?;
        writeln!(out, "ks.{feature}.n_random={}", ks.n_random)?;
    }
    Ok(())
}

pub fn write_group_scores<W: Write>(report: &MetricReport, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{GROUP_SCORES_HEADER}")?;
    for g in &report.groups {
        let rel = g.relevance.map(|r| r.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{}", g.group_id, g.gs, g.rcs, rel)?;
    }
    Ok(())
}

/// Creates `path` and runs `f` on a buffered writer.
pub fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Review;

    fn dataset() -> Dataset {
        let mut reviews = Vec::new();
        for r in ["a", "b", "c"] {
            for p in ["p1", "p2"] {
                reviews.push(Review {
                    reviewer_id: r.into(),
                    product_id: p.into(),
                    rating: 5,
                    day: 0,
                    text: String::new(),
                });
            }
        }
        let labels = [("a".to_string(), true)].into_iter().collect();
        Dataset::build(reviews, Default::default(), Some(&labels)).unwrap()
    }

    fn scored(d: &Dataset, id: usize, members: &[&str]) -> ScoredGroup {
        let group = CandidateGroup::from_members(d.reviewer_set(members).unwrap(), d, Provenance::supplied());
        let indicators = collective_score(&group, d, 30.0).unwrap();
        ScoredGroup { id, group, indicators }
    }

    #[test]
    fn groups_round_trip() {
        let d = dataset();
        let groups = vec![scored(&d, 1, &["a", "b", "c"]), scored(&d, 2, &["b", "c"])];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("groups.tsv");
        write_file(&path, |w| write_groups(&groups, &d, w)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("group_id\treviewers\tproducts\tcollective\n1\ta,b,c\tp1,p2\t"));
        let back = read_groups(&path, &d, 30.0).unwrap();
        assert_eq!(back.len(), 2);
        for (x, y) in back.iter().zip(&groups) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.group.members, y.group.members);
            assert_eq!(x.group.targets, y.group.targets);
            assert_eq!(x.indicators, y.indicators);
        }
    }

    #[test]
    fn unknown_reviewer_in_groups_file() {
        let d = dataset();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.tsv");
        std::fs::write(&path, format!("{GROUPS_HEADER}\n1\ta,zz\t\t0.5\n")).unwrap();
        let err = read_groups(&path, &d, 30.0).unwrap_err().to_string();
        assert!(err.contains("zz") && err.contains("line 2"), "{err}");
    }

    #[test]
    fn ranked_round_trip() {
        let d = dataset();
        let ranked = vec![
            RankedGroup {
                rank: 1,
                dispersion: 0.25,
                group: scored(&d, 2, &["a", "b"]),
            },
            RankedGroup {
                rank: 2,
                dispersion: 1.5,
                group: scored(&d, 1, &["b", "c"]),
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ranked.csv");
        write_file(&path, |w| write_ranked(&ranked, &d, w)).unwrap();
        let rows = read_ranked(&path).unwrap();
        assert_eq!(rows[0].group_id, 2);
        assert_eq!(rows[0].frac_labeled_fraud, Some(0.5));
        assert_eq!(rows[1].frac_labeled_fraud, Some(0.0));
        assert_eq!(rows[1].dispersion, 1.5);
        assert_eq!(rows[1].collective, ranked[1].group.indicators.collective);
    }

    #[test]
    fn separator_in_id_rejected() {
        let reviews = ["x,y", "z"]
            .iter()
            .map(|r| Review {
                reviewer_id: r.to_string(),
                product_id: "p".into(),
                rating: 5,
                day: 0,
                text: String::new(),
            })
            .collect();
        let d = Dataset::build(reviews, Default::default(), None).unwrap();
        let g = scored(&d, 1, &["x,y", "z"]);
        assert!(write_groups(&[g], &d, Vec::new()).is_err());
    }
}
