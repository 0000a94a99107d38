//! Domain types: reviews, the indexed dataset, and candidate groups.
//!
//! Reviewer and product identifiers are opaque strings on the way in. The
//! dataset interns them into dense indices assigned in lexicographic id order,
//! so every derived structure has a canonical ordering independent of input
//! row order.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sets::SortedSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ReviewerIx(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProductIx(pub u32);

impl ReviewerIx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ProductIx {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

pub type ReviewerSet = SortedSet<ReviewerIx>;
pub type ProductSet = SortedSet<ProductIx>;

/// One review as it arrives from a corpus. `day` is days since the epoch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub reviewer_id: String,
    pub product_id: String,
    pub rating: i32,
    pub day: i64,
    #[serde(default)]
    pub text: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min: i32,
    pub max: i32,
}

impl Default for RatingScale {
    fn default() -> Self {
        RatingScale { min: 1, max: 5 }
    }
}

impl RatingScale {
    pub fn new(min: i32, max: i32) -> Result<Self> {
        if min >= max {
            return Err(Error::InvalidRatingScale { min, max });
        }
        Ok(RatingScale { min, max })
    }

    pub fn contains(&self, rating: i32) -> bool {
        (self.min..=self.max).contains(&rating)
    }

    pub fn span(&self) -> f64 {
        f64::from(self.max - self.min)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoredReview {
    pub reviewer: ReviewerIx,
    pub product: ProductIx,
    pub rating: i32,
    pub day: i64,
    pub text: String,
}

/// Immutable, indexed review store.
///
/// Reviews are kept sorted by (reviewer, product), so each reviewer's reviews
/// form a contiguous run and `products_of` is a sorted slice.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    reviewer_ids: Vec<String>,
    product_ids: Vec<String>,
    reviewer_lookup: HashMap<String, ReviewerIx>,
    product_lookup: HashMap<String, ProductIx>,
    reviews: Vec<StoredReview>,
    review_products: Vec<ProductIx>,
    reviewer_offsets: Vec<usize>,
    product_reviewers: Vec<Vec<ReviewerIx>>,
    product_reviews: Vec<Vec<u32>>,
    rating_scale: RatingScale,
    labels: Option<Vec<Option<bool>>>,
    duplicates_dropped: usize,
}

impl Dataset {
    /// Builds the indexed store. Duplicate (reviewer, product) pairs keep the
    /// earliest review (first in input order on equal days).
    pub fn build(
        reviews: Vec<Review>,
        rating_scale: RatingScale,
        labels: Option<&HashMap<String, bool>>,
    ) -> Result<Self> {
        if reviews.is_empty() {
            return Err(Error::EmptyInput);
        }
        RatingScale::new(rating_scale.min, rating_scale.max)?;
        for r in &reviews {
            if !rating_scale.contains(r.rating) {
                return Err(Error::RatingOutOfScale {
                    reviewer: r.reviewer_id.clone(),
                    product: r.product_id.clone(),
                    rating: r.rating,
                    min: rating_scale.min,
                    max: rating_scale.max,
                });
            }
        }

        let mut reviewer_ids: Vec<String> = reviews.iter().map(|r| r.reviewer_id.clone()).collect();
        reviewer_ids.sort_unstable();
        reviewer_ids.dedup();
        let mut product_ids: Vec<String> = reviews.iter().map(|r| r.product_id.clone()).collect();
        product_ids.sort_unstable();
        product_ids.dedup();
        let reviewer_lookup: HashMap<String, ReviewerIx> = reviewer_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), ReviewerIx(i as u32)))
            .collect();
        let product_lookup: HashMap<String, ProductIx> = product_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), ProductIx(i as u32)))
            .collect();

        let mut stored: Vec<(usize, StoredReview)> = reviews
            .into_iter()
            .enumerate()
            .map(|(pos, r)| {
                (
                    pos,
                    StoredReview {
                        reviewer: reviewer_lookup[&r.reviewer_id],
                        product: product_lookup[&r.product_id],
                        rating: r.rating,
                        day: r.day,
                        text: r.text,
                    },
                )
            })
            .collect();
        stored.sort_by_key(|(pos, r)| (r.reviewer, r.product, r.day, *pos));
        let before = stored.len();
        stored
            .dedup_by(|later, earlier| later.1.reviewer == earlier.1.reviewer && later.1.product == earlier.1.product);
        let duplicates_dropped = before - stored.len();
        if duplicates_dropped > 0 {
            log::warn!("dropped {duplicates_dropped} duplicate (reviewer, product) reviews, kept earliest");
        }
        let reviews: Vec<StoredReview> = stored.into_iter().map(|(_, r)| r).collect();

        let mut reviewer_offsets = vec![0usize; reviewer_ids.len() + 1];
        for r in &reviews {
            reviewer_offsets[r.reviewer.index() + 1] += 1;
        }
        for i in 0..reviewer_ids.len() {
            reviewer_offsets[i + 1] += reviewer_offsets[i];
        }
        let review_products = reviews.iter().map(|r| r.product).collect();

        let mut product_reviewers = vec![Vec::new(); product_ids.len()];
        let mut product_reviews = vec![Vec::new(); product_ids.len()];
        for (k, r) in reviews.iter().enumerate() {
            product_reviewers[r.product.index()].push(r.reviewer);
            product_reviews[r.product.index()].push(k as u32);
        }

        let labels = labels.map(|map| reviewer_ids.iter().map(|id| map.get(id).copied()).collect::<Vec<_>>());

        Ok(Dataset {
            reviewer_ids,
            product_ids,
            reviewer_lookup,
            product_lookup,
            reviews,
            review_products,
            reviewer_offsets,
            product_reviewers,
            product_reviews,
            rating_scale,
            labels,
            duplicates_dropped,
        })
    }

    /// Reconstructs the review list in canonical order.
    pub fn to_reviews(&self) -> Vec<Review> {
        self.reviews
            .iter()
            .map(|r| Review {
                reviewer_id: self.reviewer_id(r.reviewer).to_owned(),
                product_id: self.product_id(r.product).to_owned(),
                rating: r.rating,
                day: r.day,
                text: r.text.clone(),
            })
            .collect()
    }

    /// Labels keyed by reviewer id, if any were attached.
    pub fn label_map(&self) -> Option<HashMap<String, bool>> {
        self.labels.as_ref().map(|labels| {
            labels
                .iter()
                .enumerate()
                .filter_map(|(i, l)| l.map(|flag| (self.reviewer_ids[i].clone(), flag)))
                .collect()
        })
    }

    pub fn with_labels(mut self, labels: &HashMap<String, bool>) -> Self {
        self.labels = Some(self.reviewer_ids.iter().map(|id| labels.get(id).copied()).collect());
        self
    }

    pub fn num_reviews(&self) -> usize {
        self.reviews.len()
    }

    pub fn num_reviewers(&self) -> usize {
        self.reviewer_ids.len()
    }

    pub fn num_products(&self) -> usize {
        self.product_ids.len()
    }

    pub fn rating_scale(&self) -> RatingScale {
        self.rating_scale
    }

    pub fn duplicates_dropped(&self) -> usize {
        self.duplicates_dropped
    }

    pub fn reviews(&self) -> &[StoredReview] {
        &self.reviews
    }

    pub fn review(&self, k: usize) -> &StoredReview {
        &self.reviews[k]
    }

    pub fn reviewer_id(&self, r: ReviewerIx) -> &str {
        &self.reviewer_ids[r.index()]
    }

    pub fn product_id(&self, p: ProductIx) -> &str {
        &self.product_ids[p.index()]
    }

    pub fn reviewer_ix(&self, id: &str) -> Option<ReviewerIx> {
        self.reviewer_lookup.get(id).copied()
    }

    pub fn product_ix(&self, id: &str) -> Option<ProductIx> {
        self.product_lookup.get(id).copied()
    }

    pub fn reviewers(&self) -> impl ExactSizeIterator<Item = ReviewerIx> {
        (0..self.reviewer_ids.len() as u32).map(ReviewerIx)
    }

    pub fn products(&self) -> impl ExactSizeIterator<Item = ProductIx> {
        (0..self.product_ids.len() as u32).map(ProductIx)
    }

    /// P_i: the sorted products reviewed by `r`.
    pub fn products_of(&self, r: ReviewerIx) -> &[ProductIx] {
        let i = r.index();
        &self.review_products[self.reviewer_offsets[i]..self.reviewer_offsets[i + 1]]
    }

    /// Reviews written by `r`, sorted by product.
    pub fn reviews_of(&self, r: ReviewerIx) -> &[StoredReview] {
        let i = r.index();
        &self.reviews[self.reviewer_offsets[i]..self.reviewer_offsets[i + 1]]
    }

    /// Position of `r`'s first review in [`Dataset::reviews`].
    pub fn review_offset(&self, r: ReviewerIx) -> usize {
        self.reviewer_offsets[r.index()]
    }

    /// Rev(p): the sorted reviewers of `p`.
    pub fn reviewers_of(&self, p: ProductIx) -> &[ReviewerIx] {
        &self.product_reviewers[p.index()]
    }

    /// Review positions for `p`, aligned with [`Dataset::reviewers_of`].
    pub fn review_indices_of(&self, p: ProductIx) -> &[u32] {
        &self.product_reviews[p.index()]
    }

    pub fn review_position(&self, r: ReviewerIx, p: ProductIx) -> Option<usize> {
        let offset = self.reviewer_offsets[r.index()];
        self.products_of(r).binary_search(&p).ok().map(|k| offset + k)
    }

    pub fn review_by(&self, r: ReviewerIx, p: ProductIx) -> Option<&StoredReview> {
        self.review_position(r, p).map(|k| &self.reviews[k])
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }

    pub fn label(&self, r: ReviewerIx) -> Option<bool> {
        self.labels.as_ref().and_then(|l| l[r.index()])
    }

    pub fn max_product_reviews(&self) -> usize {
        self.product_reviewers.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn reviewer_set<S: AsRef<str>>(&self, ids: &[S]) -> Result<ReviewerSet> {
        ids.iter()
            .map(|id| {
                self.reviewer_ix(id.as_ref())
                    .ok_or_else(|| Error::UnknownReviewer(id.as_ref().to_owned()))
            })
            .collect::<Result<Vec<_>>>()
            .map(SortedSet::from_unsorted)
    }

    pub fn product_set<S: AsRef<str>>(&self, ids: &[S]) -> Result<ProductSet> {
        ids.iter()
            .map(|id| {
                self.product_ix(id.as_ref())
                    .ok_or_else(|| Error::UnknownProduct(id.as_ref().to_owned()))
            })
            .collect::<Result<Vec<_>>>()
            .map(SortedSet::from_unsorted)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProvenanceKind {
    IsolatedNode,
    MergedEdgeSet,
    EdgeDifference,
    ConnectedComponent,
    /// Group supplied from outside detection (groups file, ground truth).
    Supplied,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: ProvenanceKind,
    pub iteration: usize,
}

impl Provenance {
    pub fn supplied() -> Self {
        Provenance {
            kind: ProvenanceKind::Supplied,
            iteration: 0,
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}@{}", self.kind, self.iteration)
    }
}

/// R(g) and P(g) for one candidate group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateGroup {
    pub members: ReviewerSet,
    pub targets: ProductSet,
    pub provenance: Provenance,
}

impl CandidateGroup {
    /// Derives P(g) as the co-reviewed scope: products reviewed by at least two
    /// members. Falls back to the union of members' products when no product
    /// is shared.
    pub fn from_members(members: ReviewerSet, dataset: &Dataset, provenance: Provenance) -> Self {
        let targets = co_reviewed_scope(&members, dataset);
        CandidateGroup {
            members,
            targets,
            provenance,
        }
    }

    pub fn with_targets(members: ReviewerSet, targets: ProductSet, provenance: Provenance) -> Self {
        CandidateGroup {
            members,
            targets,
            provenance,
        }
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// Checks that members and targets index into `dataset` and that every
    /// target was reviewed by at least one member.
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        if let Some(r) = self.members.iter().find(|r| r.index() >= dataset.num_reviewers()) {
            return Err(Error::InvalidGroup(format!("reviewer index {} out of range", r.0)));
        }
        for &p in &self.targets {
            if p.index() >= dataset.num_products() {
                return Err(Error::InvalidGroup(format!("product index {} out of range", p.0)));
            }
            if !self
                .members
                .iter()
                .any(|&r| dataset.products_of(r).binary_search(&p).is_ok())
            {
                return Err(Error::InvalidGroup(format!(
                    "target {} not reviewed by any member",
                    dataset.product_id(p)
                )));
            }
        }
        Ok(())
    }
}

pub fn co_reviewed_scope(members: &ReviewerSet, dataset: &Dataset) -> ProductSet {
    let mut counts: HashMap<ProductIx, usize> = HashMap::new();
    for &r in members {
        for &p in dataset.products_of(r) {
            *counts.entry(p).or_default() += 1;
        }
    }
    let shared: Vec<ProductIx> = counts.iter().filter(|(_, &c)| c >= 2).map(|(&p, _)| p).collect();
    if shared.is_empty() {
        SortedSet::from_unsorted(counts.into_keys().collect())
    } else {
        SortedSet::from_unsorted(shared)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn review(r: &str, p: &str, rating: i32, day: i64) -> Review {
        Review {
            reviewer_id: r.into(),
            product_id: p.into(),
            rating,
            day,
            text: String::new(),
        }
    }

    #[test]
    fn indices_invert_reviews() {
        let ds = Dataset::build(
            vec![
                review("b", "p1", 5, 0),
                review("a", "p1", 4, 1),
                review("a", "p2", 3, 2),
            ],
            RatingScale::default(),
            None,
        )
        .unwrap();
        assert_eq!(ds.num_reviewers(), 2);
        assert_eq!(ds.num_products(), 2);
        let a = ds.reviewer_ix("a").unwrap();
        let b = ds.reviewer_ix("b").unwrap();
        let p1 = ds.product_ix("p1").unwrap();
        let p2 = ds.product_ix("p2").unwrap();
        assert_eq!(ds.products_of(a), &[p1, p2]);
        assert_eq!(ds.products_of(b), &[p1]);
        assert_eq!(ds.reviewers_of(p1), &[a, b]);
        assert_eq!(ds.reviewers_of(p2), &[a]);
        assert_eq!(ds.review_by(a, p2).unwrap().rating, 3);
    }

    #[test]
    fn duplicate_keeps_earliest() {
        let ds = Dataset::build(
            vec![
                review("a", "p1", 5, 10),
                review("a", "p1", 2, 3),
                review("a", "p1", 1, 7),
            ],
            RatingScale::default(),
            None,
        )
        .unwrap();
        assert_eq!(ds.num_reviews(), 1);
        assert_eq!(ds.duplicates_dropped(), 2);
        assert_eq!(ds.reviews()[0].day, 3);
        assert_eq!(ds.reviews()[0].rating, 2);
    }

    #[test]
    fn empty_and_out_of_scale_are_errors() {
        assert!(matches!(
            Dataset::build(vec![], RatingScale::default(), None),
            Err(Error::EmptyInput)
        ));
        assert!(matches!(
            Dataset::build(vec![review("a", "p", 6, 0)], RatingScale::default(), None),
            Err(Error::RatingOutOfScale { rating: 6, .. })
        ));
    }

    #[test]
    fn co_reviewed_scope_falls_back_to_union() {
        let ds = Dataset::build(
            vec![review("a", "p1", 5, 0), review("b", "p2", 5, 0)],
            RatingScale::default(),
            None,
        )
        .unwrap();
        let g = CandidateGroup::from_members(ds.reviewer_set(&["a", "b"]).unwrap(), &ds, Provenance::supplied());
        assert_eq!(g.targets.len(), 2);
    }

    fn arb_reviews() -> impl Strategy<Value = Vec<Review>> {
        prop::collection::vec((0u8..8, 0u8..6, 1i32..=5, 0i64..100), 1..60).prop_map(|rows| {
            rows.into_iter()
                .map(|(r, p, rating, day)| Review {
                    reviewer_id: format!("r{r}"),
                    product_id: format!("p{p}"),
                    rating,
                    day,
                    text: format!("t{day}"),
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn index_sizes_agree(reviews in arb_reviews()) {
            let ds = Dataset::build(reviews, RatingScale::default(), None).unwrap();
            let by_product: usize = ds.products().map(|p| ds.reviewers_of(p).len()).sum();
            let by_reviewer: usize = ds.reviewers().map(|r| ds.products_of(r).len()).sum();
            prop_assert_eq!(by_product, ds.num_reviews());
            prop_assert_eq!(by_reviewer, ds.num_reviews());
            prop_assert!(ds.products().all(|p| !ds.reviewers_of(p).is_empty()));
        }

        #[test]
        fn rebuild_from_reviews_is_identical(reviews in arb_reviews()) {
            let ds = Dataset::build(reviews, RatingScale::default(), None).unwrap();
            let again = Dataset::build(ds.to_reviews(), RatingScale::default(), None).unwrap();
            prop_assert_eq!(ds.reviews(), again.reviews());
            prop_assert_eq!(ds.num_reviewers(), again.num_reviewers());
            prop_assert_eq!(again.duplicates_dropped(), 0);
        }
    }
}
