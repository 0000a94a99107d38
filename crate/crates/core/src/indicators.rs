//! Group-level fraud indicators.
//!
//! Six scores in [0, 1], each larger for more spam-like groups: review
//! tightness, neighbor tightness, product tightness, rating variance, product
//! reviewer ratio and time window. All but the reviewer ratio are scaled by
//! the logistic size penalty L(g). Their plain mean is the collective score
//! used to filter detection candidates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CandidateGroup, Dataset, ProductIx};
use crate::sets::{intersect_slices, jaccard, union_slices};

/// Default time threshold T for the time-window indicator, in days.
pub const DEFAULT_TIME_WINDOW_DAYS: f64 = 30.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IndicatorVector {
    pub rt: f64,
    pub nt: f64,
    pub pt: f64,
    pub rv: f64,
    pub rr: f64,
    pub tw: f64,
    pub collective: f64,
    pub penalty: f64,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check_size(group: &CandidateGroup) -> Result<()> {
    if group.members.len() < 2 || group.targets.is_empty() {
        return Err(Error::GroupTooSmall {
            members: group.members.len(),
            targets: group.targets.len(),
        });
    }
    Ok(())
}

/// L(g) = 1 / (1 + e^-(|R(g)| + |P(g)| - 3)).
pub fn penalty(group: &CandidateGroup) -> Result<f64> {
    check_size(group)?;
    Ok(penalty_for(group.members.len(), group.targets.len()))
}

pub fn penalty_for(members: usize, targets: usize) -> f64 {
    sigmoid(members as f64 + targets as f64 - 3.0)
}

/// Ratings or days of the members who reviewed `p`.
fn member_values(group: &CandidateGroup, dataset: &Dataset, p: ProductIx, value: impl Fn(i32, i64) -> f64) -> Vec<f64> {
    group
        .members
        .iter()
        .filter_map(|&r| dataset.review_by(r, p))
        .map(|rev| value(rev.rating, rev.day))
        .collect()
}

/// Population variance; 0 for fewer than two values.
fn population_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

pub fn review_tightness(group: &CandidateGroup, dataset: &Dataset) -> Result<f64> {
    check_size(group)?;
    let reviews: usize = group
        .members
        .iter()
        .map(|&r| intersect_slices(dataset.products_of(r), &group.targets).len())
        .sum();
    let ratio = reviews as f64 / (group.members.len() * group.targets.len()) as f64;
    Ok(ratio * penalty(group)?)
}

pub fn neighbor_tightness(group: &CandidateGroup, dataset: &Dataset) -> Result<f64> {
    check_size(group)?;
    let members = group.members.as_slice();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            total += jaccard(dataset.products_of(i), dataset.products_of(j));
            pairs += 1;
        }
    }
    Ok(total / pairs as f64 * penalty(group)?)
}

pub fn product_tightness(group: &CandidateGroup, dataset: &Dataset) -> Result<f64> {
    check_size(group)?;
    let mut members = group.members.iter();
    let first = dataset.products_of(*members.next().expect("checked size"));
    let (common, all) = members.fold((first.to_vec(), first.to_vec()), |(common, all), &r| {
        let p = dataset.products_of(r);
        (intersect_slices(&common, p), union_slices(&all, p))
    });
    Ok(common.len() as f64 / all.len() as f64 * penalty(group)?)
}

pub fn rating_variance(group: &CandidateGroup, dataset: &Dataset) -> Result<f64> {
    check_size(group)?;
    let mean_variance = group
        .targets
        .iter()
        .map(|&p| population_variance(&member_values(group, dataset, p, |rating, _| f64::from(rating))))
        .sum::<f64>()
        / group.targets.len() as f64;
    Ok(2.0 * penalty(group)? * (1.0 - sigmoid(mean_variance)))
}

/// Not penalized: the largest share of a target's reviewers that are members.
pub fn reviewer_ratio(group: &CandidateGroup, dataset: &Dataset) -> Result<f64> {
    check_size(group)?;
    Ok(group
        .targets
        .iter()
        .map(|&p| {
            let all = dataset.reviewers_of(p);
            intersect_slices(all, &group.members).len() as f64 / all.len() as f64
        })
        .fold(0.0, f64::max))
}

pub fn time_window(group: &CandidateGroup, dataset: &Dataset, window_days: f64) -> Result<f64> {
    check_size(group)?;
    if !(window_days > 0.0) {
        return Err(Error::InvalidParams(format!(
            "time window must be positive, got {window_days}"
        )));
    }
    let total: f64 = group
        .targets
        .iter()
        .map(|&p| {
            let sd = population_variance(&member_values(group, dataset, p, |_, day| day as f64)).sqrt();
            if sd <= window_days {
                1.0 - sd / window_days
            } else {
                0.0
            }
        })
        .sum();
    Ok(total / group.targets.len() as f64 * penalty(group)?)
}

/// All six indicators, their mean, and the penalty.
pub fn collective_score(group: &CandidateGroup, dataset: &Dataset, window_days: f64) -> Result<IndicatorVector> {
    check_size(group)?;
    group.validate(dataset)?;
    let rt = review_tightness(group, dataset)?;
    let nt = neighbor_tightness(group, dataset)?;
    let pt = product_tightness(group, dataset)?;
    let rv = rating_variance(group, dataset)?;
    let rr = reviewer_ratio(group, dataset)?;
    let tw = time_window(group, dataset, window_days)?;
    Ok(IndicatorVector {
        rt,
        nt,
        pt,
        rv,
        rr,
        tw,
        collective: (rt + nt + pt + rv + rr + tw) / 6.0,
        penalty: penalty(group)?,
    })
}
