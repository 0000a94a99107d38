//! Pairwise collusive spamicity and the weighted reviewer-reviewer graph.
//!
//! For two reviewers who both reviewed product `p`, the per-product evidence
//! combines closeness in time, closeness in rating and review-text cosine,
//! scaled by how suspicious the product is (rarely reviewed products weigh
//! more). Summed over co-reviewed products, weighted by the product-set
//! Jaccard and squashed into (-1, 1), it becomes the edge weight of the
//! reviewer graph that the embedding walks over.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, ProductIx, RatingScale, ReviewerIx};
use crate::sets::{intersect_slices, jaccard};
use crate::text::{ReviewVectors, TextVectorizer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollusionParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Days.
    pub tau_t: f64,
    /// τ_r as a percentage of the rating span.
    pub tau_r_percent: f64,
    pub theta: f64,
}

impl Default for CollusionParams {
    fn default() -> Self {
        CollusionParams {
            alpha: 0.3,
            beta: 0.3,
            gamma: 0.4,
            tau_t: 20.0,
            tau_r_percent: 20.0,
            theta: 0.4,
        }
    }
}

impl CollusionParams {
    pub fn tau_r(&self, scale: RatingScale) -> f64 {
        scale.span() * self.tau_r_percent / 100.0
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(unit(self.alpha) && unit(self.beta) && unit(self.gamma)) {
            return Err(Error::InvalidParams("alpha, beta, gamma must lie in [0, 1]".into()));
        }
        if (self.alpha + self.beta + self.gamma - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!(
                "alpha + beta + gamma must be 1, got {}",
                self.alpha + self.beta + self.gamma
            )));
        }
        if !(self.gamma > self.alpha && self.gamma > self.beta) {
            return Err(Error::InvalidParams("gamma must exceed alpha and beta".into()));
        }
        if !(self.tau_t > 0.0 && self.tau_r_percent > 0.0) {
            return Err(Error::InvalidParams("tau_t and tau_r must be positive".into()));
        }
        if !unit(self.theta) {
            return Err(Error::InvalidParams("theta must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// s^p for a product with `reviews` reviews when the busiest product has
/// `max_reviews`.
pub fn suspicion(max_reviews: usize, reviews: usize, theta: f64) -> f64 {
    let delta = (max_reviews - reviews) as f64;
    2.0 / (1.0 + (-delta.powf(theta) + 2f64.powf(theta)).exp()) - 1.0
}

pub fn product_suspicion(dataset: &Dataset, product_id: &str, theta: f64) -> Result<f64> {
    let p = dataset
        .product_ix(product_id)
        .ok_or_else(|| Error::UnknownProduct(product_id.to_owned()))?;
    Ok(suspicion(
        dataset.max_product_reviews(),
        dataset.reviewers_of(p).len(),
        theta,
    ))
}

/// Φ from σ.
pub fn squash(sigma: f64) -> f64 {
    2.0 / (1.0 + (-sigma).exp()) - 1.0
}

/// Precomputed per-product suspicion and per-review text vectors.
pub struct CollusionScorer<'a> {
    dataset: &'a Dataset,
    params: CollusionParams,
    tau_r: f64,
    suspicion: Vec<f64>,
    texts: ReviewVectors,
}

impl<'a> CollusionScorer<'a> {
    pub fn new(dataset: &'a Dataset, params: &CollusionParams, vectorizer: &TextVectorizer) -> Result<Self> {
        params.validate()?;
        let max = dataset.max_product_reviews();
        let suspicion = dataset
            .products()
            .map(|p| suspicion(max, dataset.reviewers_of(p).len(), params.theta))
            .collect();
        Ok(CollusionScorer {
            dataset,
            params: params.clone(),
            tau_r: params.tau_r(dataset.rating_scale()),
            suspicion,
            texts: vectorizer.vectorize_dataset(dataset),
        })
    }

    pub fn dataset(&self) -> &Dataset {
        self.dataset
    }

    fn coll_at(&self, p: ProductIx, ki: usize, kj: usize) -> f64 {
        let (a, b) = (self.dataset.review(ki), self.dataset.review(kj));
        let dt = (a.day - b.day).abs() as f64;
        let dr = f64::from((a.rating - b.rating).abs());
        if dt > self.params.tau_t || dr >= self.tau_r {
            return 0.0;
        }
        let CollusionParams {
            alpha,
            beta,
            gamma,
            tau_t,
            ..
        } = self.params;
        self.suspicion[p.index()]
            * (alpha * (1.0 - dt / tau_t) + beta * (1.0 - dr / self.tau_r) + gamma * self.texts.cosine(ki, kj))
    }

    /// Coll(i, j, p).
    pub fn pair_collusion(&self, i: ReviewerIx, j: ReviewerIx, p: ProductIx) -> Result<f64> {
        match (self.dataset.review_position(i, p), self.dataset.review_position(j, p)) {
            (Some(ki), Some(kj)) => Ok(self.coll_at(p, ki, kj)),
            _ => Err(Error::NotCoReviewers(
                self.dataset.reviewer_id(i).to_owned(),
                self.dataset.reviewer_id(j).to_owned(),
                self.dataset.product_id(p).to_owned(),
            )),
        }
    }

    /// σ(i, j): summed evidence over co-reviewed products times the
    /// product-set Jaccard.
    pub fn sigma(&self, i: ReviewerIx, j: ReviewerIx) -> f64 {
        let (pi, pj) = (self.dataset.products_of(i), self.dataset.products_of(j));
        let shared = intersect_slices(pi, pj);
        if shared.is_empty() {
            return 0.0;
        }
        let total: f64 = shared
            .iter()
            .map(|&p| {
                let ki = self.dataset.review_position(i, p).expect("shared product");
                let kj = self.dataset.review_position(j, p).expect("shared product");
                self.coll_at(p, ki, kj)
            })
            .sum();
        total * jaccard(pi, pj)
    }

    /// Φ(i, j).
    pub fn pair_spamicity(&self, i: ReviewerIx, j: ReviewerIx) -> f64 {
        squash(self.sigma(i, j))
    }

    /// Reviewer graph with an edge for every co-reviewing pair whose Φ is
    /// positive. Pairs are enumerated through the product index.
    pub fn build_graph(&self) -> CollusionGraph {
        let ds = self.dataset;
        let edges: Vec<Vec<(u32, u32, f64)>> = (0..ds.num_reviewers() as u32)
            .into_par_iter()
            .map(|i| {
                let ri = ReviewerIx(i);
                let offset = ds.review_offset(ri);
                // products_of(ri) is ascending, so each pair's sum runs in
                // the same order as `sigma`.
                let mut acc: HashMap<u32, (f64, usize)> = HashMap::new();
                for (n, &p) in ds.products_of(ri).iter().enumerate() {
                    let ki = offset + n;
                    let reviewers = ds.reviewers_of(p);
                    let positions = ds.review_indices_of(p);
                    let start = reviewers.partition_point(|&r| r <= ri);
                    for (&rj, &kj) in reviewers[start..].iter().zip(&positions[start..]) {
                        let entry = acc.entry(rj.0).or_insert((0.0, 0));
                        entry.0 += self.coll_at(p, ki, kj as usize);
                        entry.1 += 1;
                    }
                }
                let ni = ds.products_of(ri).len();
                let mut out: Vec<(u32, u32, f64)> = acc
                    .into_iter()
                    .filter_map(|(j, (sum, shared))| {
                        let nj = ds.products_of(ReviewerIx(j)).len();
                        let js = shared as f64 / (ni + nj - shared) as f64;
                        let phi = squash(sum * js);
                        (phi > 0.0).then_some((i, j, phi))
                    })
                    .collect();
                out.sort_unstable_by_key(|&(_, j, _)| j);
                out
            })
            .collect();
        CollusionGraph::from_edges(ds.num_reviewers(), edges.into_iter().flatten().collect())
    }
}

/// Weighted undirected reviewer graph. Nodes are dataset reviewer indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CollusionGraph {
    num_nodes: usize,
    /// (i, j, weight) with i < j, sorted.
    edges: Vec<(u32, u32, f64)>,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    weights: Vec<f64>,
}

impl CollusionGraph {
    /// Panics on self-loops, out-of-range nodes or non-positive weights.
    pub fn from_edges(num_nodes: usize, mut edges: Vec<(u32, u32, f64)>) -> Self {
        for e in &mut edges {
            assert!(e.0 != e.1, "self-loop");
            assert!((e.0.max(e.1) as usize) < num_nodes, "node out of range");
            assert!(e.2 > 0.0 && e.2.is_finite(), "edge weights must be positive");
            if e.0 > e.1 {
                std::mem::swap(&mut e.0, &mut e.1);
            }
        }
        edges.sort_by_key(|&(i, j, _)| (i, j));
        edges.dedup_by_key(|&mut (i, j, _)| (i, j));
        let mut degree = vec![0usize; num_nodes + 1];
        for &(i, j, _) in &edges {
            degree[i as usize + 1] += 1;
            degree[j as usize + 1] += 1;
        }
        for k in 0..num_nodes {
            degree[k + 1] += degree[k];
        }
        let offsets = degree;
        let mut fill = offsets.clone();
        let mut neighbors = vec![0u32; 2 * edges.len()];
        let mut weights = vec![0f64; 2 * edges.len()];
        for &(i, j, w) in &edges {
            for (a, b) in [(i, j), (j, i)] {
                let slot = fill[a as usize];
                neighbors[slot] = b;
                weights[slot] = w;
                fill[a as usize] += 1;
            }
        }
        // Edges are sorted by (i, j), so each adjacency run is sorted except
        // that lower-numbered neighbors (added via (j, i)) come interleaved.
        for v in 0..num_nodes {
            let range = offsets[v]..offsets[v + 1];
            let mut pairs: Vec<(u32, f64)> = neighbors[range.clone()]
                .iter()
                .copied()
                .zip(weights[range.clone()].iter().copied())
                .collect();
            pairs.sort_unstable_by_key(|&(n, _)| n);
            for (k, (n, w)) in pairs.into_iter().enumerate() {
                neighbors[range.start + k] = n;
                weights[range.start + k] = w;
            }
        }
        CollusionGraph {
            num_nodes,
            edges,
            offsets,
            neighbors,
            weights,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(u32, u32, f64)] {
        &self.edges
    }

    /// Sorted neighbors of `v` and the matching weights.
    pub fn neighbors(&self, v: usize) -> (&[u32], &[f64]) {
        let r = self.offsets[v]..self.offsets[v + 1];
        (&self.neighbors[r.clone()], &self.weights[r])
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let (ns, ws) = self.neighbors(i);
        ns.binary_search(&(j as u32)).ok().map(|k| ws[k])
    }

    /// `i j weight` per edge with `i < j`; ids are dataset reviewer ids, whose
    /// index order is lexicographic.
    pub fn write_dump<W: Write>(&self, dataset: &Dataset, mut out: W) -> std::io::Result<()> {
        for &(i, j, w) in &self.edges {
            writeln!(
                out,
                "{} {} {}",
                dataset.reviewer_id(ReviewerIx(i)),
                dataset.reviewer_id(ReviewerIx(j)),
                w
            )?;
        }
        Ok(())
    }
}

pub fn build_collusion_graph(
    dataset: &Dataset,
    params: &CollusionParams,
    vectorizer: &TextVectorizer,
) -> Result<CollusionGraph> {
    Ok(CollusionScorer::new(dataset, params, vectorizer)?.build_graph())
}
