//! Candidate group extraction over the product-rating graph and its
//! successive line graphs.
//!
//! Each pass of the group detector:
//! 1. emits the attribute of every isolated vertex and removes the vertex;
//! 2. for every edge pair with `a_i ⊊ a_j`, either merges `a_j` into the
//!    merge set of `a_i` (when the members of `a_j` review similar products)
//!    or emits the difference `a_j \ a_i` when that subset is itself coherent;
//! 3. emits each non-empty merge set and deletes the edges it consumed;
//! 4. emits the reviewer union of every connected component with more than
//!    two vertices and removes the component;
//! 5. drops candidates whose collective score is at most `tau_spam`.
//!
//! The surviving graph is replaced by its line graph while it still has more
//! than one edge.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ProductRatingGraph;
use crate::indicators::{collective_score, IndicatorVector, DEFAULT_TIME_WINDOW_DAYS};
use crate::model::{CandidateGroup, Dataset, Provenance, ProvenanceKind, ReviewerIx, ReviewerSet};
use crate::sets::{intersect_slices, union_slices};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionParams {
    /// Maximum review-time gap, in days, for a co-review to form an edge.
    pub tau_t: f64,
    pub tau_spam: f64,
    pub js_merge_threshold: f64,
    pub max_iterations: usize,
    pub min_group_size: usize,
    /// T for the time-window indicator, in days.
    pub time_window_days: f64,
}

impl Default for DetectionParams {
    fn default() -> Self {
        DetectionParams {
            tau_t: 20.0,
            tau_spam: 0.4,
            js_merge_threshold: 0.5,
            max_iterations: 32,
            min_group_size: 2,
            time_window_days: DEFAULT_TIME_WINDOW_DAYS,
        }
    }
}

impl DetectionParams {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| x > 0.0 && x <= 1.0;
        if !(self.tau_t > 0.0) {
            return Err(Error::InvalidParams(format!(
                "tau_t must be positive, got {}",
                self.tau_t
            )));
        }
        if !in_unit(self.tau_spam) {
            return Err(Error::InvalidParams(format!(
                "tau_spam must be in (0, 1], got {}",
                self.tau_spam
            )));
        }
        if !in_unit(self.js_merge_threshold) {
            return Err(Error::InvalidParams(format!(
                "js_merge_threshold must be in (0, 1], got {}",
                self.js_merge_threshold
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParams("max_iterations must be at least 1".into()));
        }
        if self.min_group_size < 2 {
            return Err(Error::InvalidParams("min_group_size must be at least 2".into()));
        }
        if !(self.time_window_days > 0.0) {
            return Err(Error::InvalidParams("time_window_days must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredGroup {
    /// 1-based, in emission order.
    pub id: usize,
    pub group: CandidateGroup,
    pub indicators: IndicatorVector,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct IterationStats {
    pub level: usize,
    pub vertices: usize,
    pub edges: usize,
    pub isolated_groups: usize,
    pub merged_groups: usize,
    pub difference_groups: usize,
    pub component_groups: usize,
    /// Candidates with collective score at most `tau_spam`.
    pub filtered_out: usize,
    /// Candidates too small to score; dropped at the end.
    pub undersized: usize,
    /// Candidates whose member set was already seen.
    pub duplicates: usize,
    /// Subset tests performed in the edge-pair scan.
    pub pair_checks: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionResult {
    pub groups: Vec<ScoredGroup>,
    pub iterations_run: usize,
    pub iterations: Vec<IterationStats>,
    /// True when `max_iterations` stopped the loop with edges remaining.
    pub safeguard_fired: bool,
}

/// Keeps the groups whose collective score is strictly above `tau_spam`.
pub fn collective_filter(
    groups: Vec<CandidateGroup>,
    dataset: &Dataset,
    tau_spam: f64,
    window_days: f64,
) -> Result<Vec<(CandidateGroup, IndicatorVector)>> {
    let scored = groups
        .into_par_iter()
        .map(|g| collective_score(&g, dataset, window_days).map(|v| (g, v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(scored.into_iter().filter(|(_, v)| v.collective > tau_spam).collect())
}

/// |∩ P_m| / |∪ P_m| over the members' full product sets.
pub fn product_set_jaccard(dataset: &Dataset, members: &[ReviewerIx]) -> f64 {
    let Some((&first, rest)) = members.split_first() else {
        return 0.0;
    };
    let first = dataset.products_of(first);
    let (common, all) = rest.iter().fold((first.to_vec(), first.to_vec()), |(c, a), &r| {
        let p = dataset.products_of(r);
        (intersect_slices(&c, p), union_slices(&a, p))
    });
    if all.is_empty() {
        0.0
    } else {
        common.len() as f64 / all.len() as f64
    }
}

struct Detector<'a> {
    dataset: &'a Dataset,
    params: &'a DetectionParams,
    seen: HashSet<ReviewerSet>,
    jaccard_memo: HashMap<ReviewerSet, f64>,
    kept: Vec<(CandidateGroup, IndicatorVector)>,
}

impl<'a> Detector<'a> {
    fn jaccard(&mut self, set: &ReviewerSet) -> f64 {
        if let Some(&v) = self.jaccard_memo.get(set) {
            return v;
        }
        let v = product_set_jaccard(self.dataset, set);
        self.jaccard_memo.insert(set.clone(), v);
        v
    }

    /// Scores and filters one iteration's candidates, in emission order.
    fn admit(&mut self, candidates: Vec<(ReviewerSet, ProvenanceKind)>, iteration: usize, stats: &mut IterationStats) {
        let mut fresh = Vec::new();
        for (members, kind) in candidates {
            if !self.seen.insert(members.clone()) {
                stats.duplicates += 1;
                continue;
            }
            if members.len() < 2 {
                stats.undersized += 1;
                continue;
            }
            fresh.push(CandidateGroup::from_members(
                members,
                self.dataset,
                Provenance { kind, iteration },
            ));
        }
        let dataset = self.dataset;
        let window = self.params.time_window_days;
        let scored: Vec<(CandidateGroup, IndicatorVector)> = fresh
            .into_par_iter()
            .map(|g| {
                let v = collective_score(&g, dataset, window).expect("detected groups are valid");
                (g, v)
            })
            .collect();
        for (g, v) in scored {
            if v.collective > self.params.tau_spam {
                self.kept.push((g, v));
            } else {
                stats.filtered_out += 1;
            }
        }
    }

    /// One group-detector pass; returns the surviving graph.
    fn pass(&mut self, graph: &ProductRatingGraph, iteration: usize, stats: &mut IterationStats) -> ProductRatingGraph {
        let mut candidates: Vec<(ReviewerSet, ProvenanceKind)> = Vec::new();

        // 1. isolated vertices
        let degrees = graph.degrees();
        let mut keep_vertex: Vec<bool> = degrees.iter().map(|&d| d > 0).collect();
        for (v, vertex) in graph.vertices().iter().enumerate() {
            if degrees[v] == 0 {
                candidates.push((vertex.reviewers.clone(), ProvenanceKind::IsolatedNode));
                stats.isolated_groups += 1;
            }
        }

        // 2. proper-subset pairs, all against the iteration-start edge set
        let edges = graph.edges();
        let mut by_reviewer: HashMap<ReviewerIx, Vec<usize>> = HashMap::new();
        for (k, e) in edges.iter().enumerate() {
            for &r in &e.reviewers {
                by_reviewer.entry(r).or_default().push(k);
            }
        }
        let supersets: Vec<(Vec<usize>, u64)> = edges
            .par_iter()
            .enumerate()
            .map(|(i, ei)| {
                let anchor = ei
                    .reviewers
                    .iter()
                    .min_by_key(|r| by_reviewer[r].len())
                    .expect("edge attributes are non-empty");
                let mut checks = 0u64;
                let found = by_reviewer[anchor]
                    .iter()
                    .copied()
                    .filter(|&j| {
                        if j == i || edges[j].reviewers.len() <= ei.reviewers.len() {
                            return false;
                        }
                        checks += 1;
                        ei.reviewers.is_proper_subset(&edges[j].reviewers)
                    })
                    .collect();
                (found, checks)
            })
            .collect();
        stats.pair_checks = supersets.iter().map(|(_, c)| c).sum();

        let mut merge_sets: Vec<Option<ReviewerSet>> = vec![None; edges.len()];
        let mut consumed = vec![false; edges.len()];
        for (i, (js, _)) in supersets.iter().enumerate() {
            for &j in js {
                let aj = &edges[j].reviewers;
                if self.jaccard(aj) > self.params.js_merge_threshold {
                    merge_sets[i].get_or_insert_with(ReviewerSet::new).union_in_place(aj);
                    consumed[i] = true;
                    consumed[j] = true;
                } else {
                    let diff = aj.difference(&edges[i].reviewers);
                    if self.jaccard(&diff) > self.params.js_merge_threshold {
                        candidates.push((diff, ProvenanceKind::EdgeDifference));
                        stats.difference_groups += 1;
                    }
                }
            }
        }

        // 3. merge sets, then delete consumed edges and vertices they strand
        for set in merge_sets.into_iter().flatten() {
            candidates.push((set, ProvenanceKind::MergedEdgeSet));
            stats.merged_groups += 1;
        }
        let keep_edge: Vec<bool> = consumed.iter().map(|c| !c).collect();
        let mut remaining_degree = vec![0usize; graph.num_vertices()];
        for (k, e) in edges.iter().enumerate() {
            if keep_edge[k] {
                remaining_degree[e.u] += 1;
                remaining_degree[e.v] += 1;
            }
        }
        for v in 0..graph.num_vertices() {
            if remaining_degree[v] == 0 {
                keep_vertex[v] = false;
            }
        }
        let graph = graph.retain(&keep_vertex, &keep_edge);

        // 4. components with more than two vertices
        let mut in_large = vec![false; graph.num_vertices()];
        let components = graph.components();
        let mut component_of = vec![usize::MAX; graph.num_vertices()];
        let mut unions: Vec<ReviewerSet> = vec![ReviewerSet::new(); components.len()];
        for (c, vs) in components.iter().enumerate() {
            for &v in vs {
                component_of[v] = c;
            }
        }
        for e in graph.edges() {
            unions[component_of[e.u]].union_in_place(&e.reviewers);
        }
        for (c, vs) in components.iter().enumerate() {
            if vs.len() > 2 {
                vs.iter().for_each(|&v| in_large[v] = true);
                candidates.push((std::mem::take(&mut unions[c]), ProvenanceKind::ConnectedComponent));
                stats.component_groups += 1;
            }
        }
        let keep_vertex: Vec<bool> = in_large.iter().map(|x| !x).collect();
        let keep_edge = vec![true; graph.num_edges()];
        let graph = graph.retain(&keep_vertex, &keep_edge);

        // 5. score filter
        self.admit(candidates, iteration, stats);
        graph
    }
}

pub fn extract_groups(dataset: &Dataset, params: &DetectionParams) -> Result<DetectionResult> {
    params.validate()?;
    let mut detector = Detector {
        dataset,
        params,
        seen: HashSet::new(),
        jaccard_memo: HashMap::new(),
        kept: Vec::new(),
    };
    let mut graph = ProductRatingGraph::build(dataset, params.tau_t)?;
    let mut iterations = Vec::new();
    let mut safeguard_fired = false;
    loop {
        let iteration = iterations.len();
        let mut stats = IterationStats {
            level: graph.level(),
            vertices: graph.num_vertices(),
            edges: graph.num_edges(),
            ..Default::default()
        };
        let survivors = detector.pass(&graph, iteration, &mut stats);
        log::debug!("iteration {iteration}: {stats:?}");
        iterations.push(stats);
        if survivors.num_edges() <= 1 {
            break;
        }
        if iterations.len() >= params.max_iterations {
            safeguard_fired = true;
            log::warn!(
                "group extraction stopped by max_iterations = {} with {} edges left",
                params.max_iterations,
                survivors.num_edges()
            );
            break;
        }
        graph = survivors.line_graph()?;
    }

    let groups = detector
        .kept
        .into_iter()
        .filter(|(g, _)| g.size() >= params.min_group_size)
        .enumerate()
        .map(|(k, (group, indicators))| ScoredGroup {
            id: k + 1,
            group,
            indicators,
        })
        .collect();
    Ok(DetectionResult {
        groups,
        iterations_run: iterations.len(),
        iterations,
        safeguard_fired,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RatingScale, Review};

    fn ds(rows: &[(&str, &str, i32, i64)]) -> Dataset {
        Dataset::build(
            rows.iter()
                .map(|&(r, p, rating, day)| Review {
                    reviewer_id: r.into(),
                    product_id: p.into(),
                    rating,
                    day,
                    text: String::new(),
                })
                .collect(),
            RatingScale::default(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn coherent_triangle_yields_one_group() {
        let mut rows = vec![];
        for r in ["a", "b", "c"] {
            for p in ["p1", "p2", "p3"] {
                rows.push((r, p, 5, 10));
            }
        }
        let d = ds(&rows);
        let res = extract_groups(&d, &DetectionParams::default()).unwrap();
        assert_eq!(res.groups.len(), 1);
        assert_eq!(res.groups[0].group.members.len(), 3);
        assert_eq!(res.groups[0].group.provenance.kind, ProvenanceKind::ConnectedComponent);
        assert!(res.groups[0].indicators.collective > 0.4);
        assert_eq!(res.iterations_run, 1);
        assert!(!res.safeguard_fired);
    }

    #[test]
    fn filter_boundary_is_inclusive_removal() {
        let mut rows = vec![];
        for r in ["a", "b", "c"] {
            for p in ["p1", "p2", "p3"] {
                rows.push((r, p, 5, 10));
            }
        }
        let d = ds(&rows);
        let g = CandidateGroup::from_members(d.reviewer_set(&["a", "b", "c"]).unwrap(), &d, Provenance::supplied());
        let v = collective_score(&g, &d, 30.0).unwrap();
        assert!(collective_filter(vec![g.clone()], &d, v.collective, 30.0)
            .unwrap()
            .is_empty());
        assert_eq!(
            collective_filter(vec![g], &d, v.collective - 1e-9, 30.0).unwrap().len(),
            1
        );
        assert!(collective_filter(vec![], &d, 0.4, 30.0).unwrap().is_empty());
    }

    #[test]
    fn tau_spam_one_removes_everything() {
        let mut rows = vec![];
        for r in ["a", "b", "c"] {
            for p in ["p1", "p2", "p3"] {
                rows.push((r, p, 5, 10));
            }
        }
        let d = ds(&rows);
        let params = DetectionParams {
            tau_spam: 1.0,
            ..Default::default()
        };
        assert!(extract_groups(&d, &params).unwrap().groups.is_empty());
    }

    #[test]
    fn subset_edge_merges_into_superset() {
        // a,b,c co-review p1/p2 the same day; a,b also p3. Edge (p1,p3) = {a,b}
        // is a proper subset of (p1,p2) = {a,b,c}.
        let d = ds(&[
            ("a", "p1", 5, 0),
            ("a", "p2", 5, 0),
            ("a", "p3", 5, 0),
            ("b", "p1", 5, 0),
            ("b", "p2", 5, 0),
            ("b", "p3", 5, 0),
            ("c", "p1", 5, 0),
            ("c", "p2", 5, 0),
        ]);
        let res = extract_groups(&d, &DetectionParams::default()).unwrap();
        let stats = &res.iterations[0];
        assert_eq!(stats.merged_groups, 2);
        assert!(res
            .groups
            .iter()
            .any(|g| g.group.members.len() == 3 && g.group.provenance.kind == ProvenanceKind::MergedEdgeSet));
    }

    #[test]
    fn invalid_params_rejected() {
        let d = ds(&[("a", "p1", 5, 0)]);
        for params in [
            DetectionParams {
                tau_t: 0.0,
                ..Default::default()
            },
            DetectionParams {
                tau_spam: 0.0,
                ..Default::default()
            },
            DetectionParams {
                max_iterations: 0,
                ..Default::default()
            },
            DetectionParams {
                min_group_size: 1,
                ..Default::default()
            },
        ] {
            assert!(matches!(extract_groups(&d, &params), Err(Error::InvalidParams(_))));
        }
    }

    #[test]
    fn product_set_jaccard_values() {
        let d = ds(&[
            ("a", "p1", 5, 0),
            ("a", "p2", 5, 0),
            ("b", "p2", 5, 0),
            ("b", "p3", 5, 0),
        ]);
        let set = d.reviewer_set(&["a", "b"]).unwrap();
        assert!((product_set_jaccard(&d, &set) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(product_set_jaccard(&d, &d.reviewer_set(&["a"]).unwrap()), 1.0);
        assert_eq!(product_set_jaccard(&d, &[]), 0.0);
    }
}
