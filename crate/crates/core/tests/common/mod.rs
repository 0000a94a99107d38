//! Independent reference implementations used by the integration tests.
//!
//! Everything here works directly on raw `Review` rows with ordered maps and
//! never touches the library's indexes, so agreement is meaningful.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use defrauder::{Dataset, RatingScale, Review};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn review(r: &str, p: &str, rating: i32, day: i64, text: &str) -> Review {
    Review {
        reviewer_id: r.into(),
        product_id: p.into(),
        rating,
        day,
        text: text.into(),
    }
}

pub fn dataset(reviews: Vec<Review>) -> Dataset {
    Dataset::build(reviews, RatingScale::default(), None).unwrap()
}

/// Small random corpus with no duplicate (reviewer, product) pairs.
pub fn random_reviews(
    seed: u64,
    n_reviewers: usize,
    n_products: usize,
    max_per_reviewer: usize,
    span: i64,
) -> Vec<Review> {
    const WORDS: [&str; 8] = ["good", "bad", "fast", "slow", "cheap", "great", "broken", "fine"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for r in 0..n_reviewers {
        let k = rng.random_range(1..=max_per_reviewer.min(n_products));
        let products = rand::seq::index::sample(&mut rng, n_products, k);
        for p in products {
            let words = rng.random_range(0..4);
            let text: Vec<&str> = (0..words).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
            out.push(review(
                &format!("r{r}"),
                &format!("p{p}"),
                rng.random_range(1..=5),
                rng.random_range(0..span),
                &text.join(" "),
            ));
        }
    }
    out
}

/// Random group over `reviews`: members drawn from the reviewers, targets
/// from products at least one member reviewed.
pub fn random_group(rng: &mut ChaCha8Rng, rows: &Rows) -> (Vec<String>, Vec<String>) {
    let reviewers: Vec<&String> = rows.products_of.keys().collect();
    let n = rng.random_range(2..=4.min(reviewers.len()));
    let mut members: Vec<String> = reviewers.choose_multiple(rng, n).map(|s| s.to_string()).collect();
    members.sort();
    let mut pool: Vec<String> = members
        .iter()
        .flat_map(|m| rows.products_of[m].iter().cloned())
        .collect();
    pool.sort();
    pool.dedup();
    let k = rng.random_range(1..=4.min(pool.len()));
    let mut targets: Vec<String> = pool.choose_multiple(rng, k).cloned().collect();
    targets.sort();
    (members, targets)
}

/// Raw lookup tables built from rows.
pub struct Rows {
    /// (reviewer, product) -> (rating, day, text)
    pub by_pair: BTreeMap<(String, String), (i32, i64, String)>,
    pub products_of: BTreeMap<String, BTreeSet<String>>,
    pub reviewers_of: BTreeMap<String, BTreeSet<String>>,
}

impl Rows {
    pub fn new(reviews: &[Review]) -> Self {
        let mut rows = Rows {
            by_pair: BTreeMap::new(),
            products_of: BTreeMap::new(),
            reviewers_of: BTreeMap::new(),
        };
        for r in reviews {
            rows.by_pair.insert(
                (r.reviewer_id.clone(), r.product_id.clone()),
                (r.rating, r.day, r.text.clone()),
            );
            rows.products_of
                .entry(r.reviewer_id.clone())
                .or_default()
                .insert(r.product_id.clone());
            rows.reviewers_of
                .entry(r.product_id.clone())
                .or_default()
                .insert(r.reviewer_id.clone());
        }
        rows
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn set_jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

fn pop_var(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
}

/// (rt, nt, pt, rv, rr, tw, penalty) transcribed from the indicator
/// definitions.
pub fn indicators(rows: &Rows, members: &[String], targets: &[String], t_window: f64) -> [f64; 7] {
    let nr = members.len() as f64;
    let np = targets.len() as f64;
    let l = logistic(nr + np - 3.0);
    let target_set: BTreeSet<String> = targets.iter().cloned().collect();
    let p = |m: &String| rows.products_of[m].clone();

    let mut covered = 0usize;
    for m in members {
        covered += p(m).intersection(&target_set).count();
    }
    let rt = covered as f64 / (nr * np) * l;

    let mut js = 0.0;
    let mut pairs = 0.0;
    for a in 0..members.len() {
        for b in a + 1..members.len() {
            js += set_jaccard(&p(&members[a]), &p(&members[b]));
            pairs += 1.0;
        }
    }
    let nt = js / pairs * l;

    let mut common = p(&members[0]);
    let mut all = p(&members[0]);
    for m in &members[1..] {
        common = common.intersection(&p(m)).cloned().collect();
        all = all.union(&p(m)).cloned().collect();
    }
    let pt = common.len() as f64 / all.len() as f64 * l;

    let mut var_sum = 0.0;
    let mut tw_sum = 0.0;
    let mut rr: f64 = 0.0;
    for t in targets {
        let mut ratings = Vec::new();
        let mut days = Vec::new();
        for m in members {
            if let Some((r, d, _)) = rows.by_pair.get(&(m.clone(), t.clone())) {
                ratings.push(f64::from(*r));
                days.push(*d as f64);
            }
        }
        var_sum += pop_var(&ratings);
        let sd = pop_var(&days).sqrt();
        tw_sum += if sd <= t_window { 1.0 - sd / t_window } else { 0.0 };
        rr = rr.max(ratings.len() as f64 / rows.reviewers_of[t].len() as f64);
    }
    let rv = 2.0 * l * (1.0 - logistic(var_sum / np));
    let tw = tw_sum / np * l;
    [rt, nt, pt, rv, rr, tw, l]
}

pub struct PhiParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau_t: f64,
    pub tau_r: f64,
    pub theta: f64,
}

impl Default for PhiParams {
    fn default() -> Self {
        PhiParams {
            alpha: 0.3,
            beta: 0.3,
            gamma: 0.4,
            tau_t: 20.0,
            tau_r: 0.8,
            theta: 0.4,
        }
    }
}

/// s^p for a product with `rev` reviews when the busiest has `max_rev`.
pub fn suspicion(max_rev: usize, rev: usize, theta: f64) -> f64 {
    let delta = (max_rev - rev) as f64;
    2.0 / (1.0 + (-delta.powf(theta) + 2f64.powf(theta)).exp()) - 1.0
}

/// Φ(i, j) evaluated over all products directly from rows. `cosine` maps a
/// pair of texts to their similarity.
pub fn phi(rows: &Rows, i: &str, j: &str, params: &PhiParams, cosine: &dyn Fn(&str, &str) -> f64) -> f64 {
    let max_rev = rows.reviewers_of.values().map(BTreeSet::len).max().unwrap_or(0);
    let pi = &rows.products_of[i];
    let pj = &rows.products_of[j];
    let mut sum = 0.0;
    for p in pi.intersection(pj) {
        let (ri, ti, ci) = &rows.by_pair[&(i.to_string(), p.clone())];
        let (rj, tj, cj) = &rows.by_pair[&(j.to_string(), p.clone())];
        let dt = (ti - tj).abs() as f64;
        let dr = f64::from((ri - rj).abs());
        if dt > params.tau_t || dr >= params.tau_r {
            continue;
        }
        let sp = suspicion(max_rev, rows.reviewers_of[p].len(), params.theta);
        sum += sp
            * (params.alpha * (1.0 - dt / params.tau_t)
                + params.beta * (1.0 - dr / params.tau_r)
                + params.gamma * cosine(ci, cj));
    }
    let sigma = sum * set_jaccard(pi, pj);
    2.0 / (1.0 + (-sigma).exp()) - 1.0
}

/// Attributed line graph by brute force over all edge pairs.
pub fn line_graph(edges: &[(usize, usize, BTreeSet<u32>)]) -> BTreeMap<(usize, usize), BTreeSet<u32>> {
    let mut out = BTreeMap::new();
    for a in 0..edges.len() {
        for b in a + 1..edges.len() {
            let (u1, v1, s1) = &edges[a];
            let (u2, v2, s2) = &edges[b];
            let adjacent = u1 == u2 || u1 == v2 || v1 == u2 || v1 == v2;
            let shared: BTreeSet<u32> = s1.intersection(s2).copied().collect();
            if adjacent && !shared.is_empty() {
                out.insert((a, b), shared);
            }
        }
    }
    out
}

/// Area between the empirical CDF of `scores` and the vertical axis,
/// integrated piecewise over the sorted sample.
pub fn emd_to_zero(scores: &[f64]) -> f64 {
    let mut xs = scores.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut area = 0.0;
    let mut prev = 0.0;
    for (k, x) in xs.iter().enumerate() {
        // 1 - F(t) = (n - k)/n on [prev, x)
        area += (x - prev) * (n - k as f64) / n;
        prev = *x;
    }
    area
}

/// Reads `VmHWM` (peak resident set) of this process in bytes.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}
