//! Quality metrics for detected groups and rankings, and the two-sample
//! coherence test.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::sigmoid;
use crate::model::{CandidateGroup, Dataset, ReviewerIx};
use crate::rank::RankedGroup;
use crate::text::ReviewVectors;

pub const DEFAULT_K_LIST: [usize; 5] = [10, 20, 30, 40, 50];

/// GS(g) = σ(|R(g)| − 2).
pub fn group_size_score(size: usize) -> f64 {
    sigmoid(size as f64 - 2.0)
}

/// Best per-target average cosine over all ordered member pairs, self-pairs
/// included. A member without a review of the target contributes 0.
pub fn review_content_similarity(group: &CandidateGroup, dataset: &Dataset, vectors: &ReviewVectors) -> f64 {
    let n = group.size() as f64;
    let mut best = 0.0f64;
    for &p in &group.targets {
        let reviews: Vec<usize> = group
            .members
            .iter()
            .filter_map(|&r| dataset.review_position(r, p))
            .collect();
        let mut total = 0.0;
        for (a, &i) in reviews.iter().enumerate() {
            total += vectors.cosine(i, i);
            for &j in &reviews[a + 1..] {
                total += 2.0 * vectors.cosine(i, j);
            }
        }
        best = best.max(total / (n * n));
    }
    best.min(1.0)
}

/// Earth mover's distance between the empirical distribution of `scores` and
/// a point mass at 0, which is the mean score.
pub fn cdf_emd(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(x) = scores.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::InvalidParams(format!("score {x} outside [0, 1]")));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

fn dcg(relevances: &[f64], k: usize) -> f64 {
    relevances
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, rel)| rel / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG@k with linear gain. An all-zero list scores 1.
pub fn ndcg_at_k(ranked_relevances: &[f64], k: usize) -> f64 {
    let mut ideal = ranked_relevances.to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg(&ideal, k);
    if idcg == 0.0 {
        return 1.0;
    }
    (dcg(ranked_relevances, k) / idcg).min(1.0)
}

/// Fraction of members labelled fraud; unlabelled members count as genuine.
pub fn group_relevance(members: &[ReviewerIx], dataset: &Dataset) -> Result<f64> {
    if !dataset.has_labels() {
        return Err(Error::NoLabels);
    }
    if members.is_empty() {
        return Ok(0.0);
    }
    let fraud = members.iter().filter(|&&r| dataset.label(r) == Some(true)).count();
    Ok(fraud as f64 / members.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoherenceFeature {
    /// Number of products both reviewers reviewed.
    CoReviewedCount,
    /// Mean absolute rating difference over co-reviewed products.
    RatingGap,
    /// Mean absolute day difference over co-reviewed products.
    TimeGap,
}

impl CoherenceFeature {
    pub const ALL: [CoherenceFeature; 3] = [Self::CoReviewedCount, Self::RatingGap, Self::TimeGap];

    /// Feature value for a pair, or `None` when the gap features have no
    /// co-reviewed product to measure.
    pub fn value(self, dataset: &Dataset, a: ReviewerIx, b: ReviewerIx) -> Option<f64> {
        let ra = dataset.reviews_of(a);
        let rb = dataset.reviews_of(b);
        let (mut i, mut j) = (0, 0);
        let (mut count, mut rating, mut time) = (0usize, 0.0, 0.0);
        while i < ra.len() && j < rb.len() {
            match ra[i].product.cmp(&rb[j].product) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    count += 1;
                    rating += f64::from((ra[i].rating - rb[j].rating).abs());
                    time += (ra[i].day - rb[j].day).abs() as f64;
                    i += 1;
                    j += 1;
                }
            }
        }
        match self {
            CoherenceFeature::CoReviewedCount => Some(count as f64),
            _ if count == 0 => None,
            CoherenceFeature::RatingGap => Some(rating / count as f64),
            CoherenceFeature::TimeGap => Some(time / count as f64),
        }
    }
}

impl fmt::Display for CoherenceFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoherenceFeature::CoReviewedCount => "co-reviewed-count",
            CoherenceFeature::RatingGap => "rating-gap",
            CoherenceFeature::TimeGap => "time-gap",
        })
    }
}

impl FromStr for CoherenceFeature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "coreviewedcount" => Ok(CoherenceFeature::CoReviewedCount),
            "ratinggap" => Ok(CoherenceFeature::RatingGap),
            "timegap" => Ok(CoherenceFeature::TimeGap),
            _ => Err(Error::InvalidParams(format!("unknown coherence feature `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_within: usize,
    pub n_random: usize,
}

/// Survival function of the Kolmogorov limiting distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // dual series converges fast for small arguments
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mut cdf = 0.0;
        for k in 1..=20 {
            let m = (2 * k - 1) as f64;
            cdf += (-m * m * pi2 / (8.0 * lambda * lambda)).exp();
        }
        cdf *= (2.0 * std::f64::consts::PI).sqrt() / lambda;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov statistic with its asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientPairs("both samples must be non-empty".into()));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let lambda = (n * m / (n + m)).sqrt() * d;
    Ok((d, kolmogorov_sf(lambda)))
}

/// Compares a pair feature over within-group member pairs against pairs
/// sampled at random. `CoReviewedCount` samples uniformly among all
/// reviewer pairs; the gap features are only defined for co-reviewing pairs,
/// so their reference pairs are drawn by picking a random review and a
/// random other reviewer of the same product.
pub fn coherence_ks_test(
    dataset: &Dataset,
    groups: &[CandidateGroup],
    feature: CoherenceFeature,
    n_random_pairs: usize,
    seed: u64,
) -> Result<KsResult> {
    if n_random_pairs < 100 {
        return Err(Error::InsufficientPairs(format!(
            "{n_random_pairs} random pairs requested, need at least 100"
        )));
    }
    let mut pairs = BTreeSet::new();
    for g in groups {
        let m = g.members.as_slice();
        for (k, &a) in m.iter().enumerate() {
            for &b in &m[k + 1..] {
                pairs.insert((a, b));
            }
        }
    }
    let within: Vec<f64> = pairs
        .into_iter()
        .filter_map(|(a, b)| feature.value(dataset, a, b))
        .collect();
    if within.is_empty() {
        return Err(Error::InsufficientPairs(
            "no within-group pair has a feature value".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random = Vec::with_capacity(n_random_pairs);
    match feature {
        CoherenceFeature::CoReviewedCount => {
            let n = dataset.num_reviewers() as u32;
            if n < 2 {
                return Err(Error::InsufficientPairs("fewer than two reviewers".into()));
            }
            while random.len() < n_random_pairs {
                let a = rng.random_range(0..n);
                let b = rng.random_range(0..n);
                if a != b {
                    random.push(
                        feature
                            .value(dataset, ReviewerIx(a), ReviewerIx(b))
                            .expect("count is always defined"),
                    );
                }
            }
        }
        _ => {
            if dataset.max_product_reviews() < 2 {
                return Err(Error::InsufficientPairs("no product has two reviewers".into()));
            }
            let total = dataset.num_reviews();
            while random.len() < n_random_pairs {
                let review = dataset.review(rng.random_range(0..total));
                let others = dataset.reviewers_of(review.product);
                if others.len() < 2 {
                    continue;
                }
                let b = others[rng.random_range(0..others.len())];
                if b != review.reviewer {
                    random.extend(feature.value(dataset, review.reviewer, b));
                }
            }
        }
    }
    let (statistic, p_value) = ks_two_sample(&within, &random)?;
    Ok(KsResult {
        statistic,
        p_value,
        n_within: within.len(),
        n_random: random.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupScores {
    pub group_id: usize,
    pub gs: f64,
    pub rcs: f64,
    pub relevance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub groups: Vec<GroupScores>,
    pub gs_emd: f64,
    pub rcs_emd: f64,
    /// `(k, NDCG@k)`, empty without labels.
    pub ndcg: Vec<(usize, f64)>,
    pub ks: Vec<(CoherenceFeature, KsResult)>,
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub k_list: Vec<usize>,
    pub ks_features: Vec<CoherenceFeature>,
    pub n_random_pairs: usize,
    pub seed: u64,
    /// Fail with `NoLabels` instead of skipping NDCG.
    pub require_labels: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            k_list: DEFAULT_K_LIST.to_vec(),
            ks_features: vec![CoherenceFeature::CoReviewedCount],
            n_random_pairs: 10_000,
            seed: 0,
            require_labels: false,
        }
    }
}

/// Scores a ranked list. A KS test that lacks pairs is skipped rather than
/// failing the whole report.
pub fn evaluate(
    ranked: &[RankedGroup],
    dataset: &Dataset,
    vectors: &ReviewVectors,
    options: &EvalOptions,
) -> Result<MetricReport> {
    if ranked.is_empty() {
        return Err(Error::EmptyInput);
    }
    if options.require_labels && !dataset.has_labels() {
        return Err(Error::NoLabels);
    }
    if options.k_list.contains(&0) {
        return Err(Error::InvalidParams("k must be at least 1".into()));
    }
    let groups: Vec<GroupScores> = ranked
        .par_iter()
        .map(|r| {
            let g = &r.group.group;
            GroupScores {
                group_id: r.group.id,
                gs: group_size_score(g.size()),
                rcs: review_content_similarity(g, dataset, vectors),
                relevance: group_relevance(g.members.as_slice(), dataset).ok(),
            }
        })
        .collect();
    let gs_emd = cdf_emd(&groups.iter().map(|g| g.gs).collect::<Vec<_>>())?;
    let rcs_emd = cdf_emd(&groups.iter().map(|g| g.rcs).collect::<Vec<_>>())?;
    let ndcg = if dataset.has_labels() {
        let rel: Vec<f64> = groups.iter().map(|g| g.relevance.unwrap_or(0.0)).collect();
        options.k_list.iter().map(|&k| (k, ndcg_at_k(&rel, k))).collect()
    } else {
        Vec::new()
    };
    let candidates: Vec<CandidateGroup> = ranked.iter().map(|r| r.group.group.clone()).collect();
    let mut ks = Vec::new();
    for &feature in &options.ks_features {
        match coherence_ks_test(dataset, &candidates, feature, options.n_random_pairs, options.seed) {
            Ok(result) => ks.push((feature, result)),
            Err(Error::InsufficientPairs(reason)) => log::warn!("skipping {feature} test: {reason}"),
            Err(e) => return Err(e),
        }
    }
    Ok(MetricReport {
        groups,
        gs_emd,
        rcs_emd,
        ndcg,
        ks,
    })
}
