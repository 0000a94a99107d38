//! Synthetic review corpora with planted collusive groups.
//!
//! Organic reviewers pick products, ratings and days uniformly; planted
//! groups review a shared set of targets within a tight time window, with
//! ratings near a group anchor and paraphrased copies of a seed text.
//! Generation is a pure function of the campaign spec.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CandidateGroup, Dataset, Provenance, RatingScale, Review};

pub const SPAN_DAYS: i64 = 365;
pub const MAX_ORGANIC_REVIEWS_PER_REVIEWER: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedGroupSpec {
    pub size: usize,
    pub n_targets: usize,
    #[serde(default)]
    pub time_spread_days: u32,
    #[serde(default)]
    pub rating_spread: u32,
    #[serde(default)]
    pub paraphrase_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    pub n_organic_reviewers: usize,
    pub n_products: usize,
    /// Total organic reviews. When absent each reviewer draws 1 to 5
    /// reviews from a truncated geometric distribution.
    #[serde(default)]
    pub n_organic_reviews: Option<usize>,
    #[serde(default)]
    pub planted: Vec<PlantedGroupSpec>,
    #[serde(default)]
    pub rating_scale: RatingScale,
    #[serde(default)]
    pub seed: u64,
    /// Day number of the first day of the simulated year.
    #[serde(default = "default_start_day")]
    pub start_day: i64,
}

fn default_start_day() -> i64 {
    // 2020-01-01
    18_262
}

impl CampaignSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: CampaignSpec = toml::from_str(s).map_err(|e| Error::SpecInvalid(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::SpecInvalid(m) => Error::SpecInvalid(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::SpecInvalid(m));
        if self.n_organic_reviewers == 0 || self.n_products == 0 {
            return bad("n_organic_reviewers and n_products must be at least 1".into());
        }
        if self.rating_scale.min >= self.rating_scale.max {
            return bad(format!(
                "rating scale [{}, {}] is empty",
                self.rating_scale.min, self.rating_scale.max
            ));
        }
        if let Some(n) = self.n_organic_reviews {
            let cap = self.n_organic_reviewers * MAX_ORGANIC_REVIEWS_PER_REVIEWER;
            if n < self.n_organic_reviewers || n > cap {
                return bad(format!(
                    "n_organic_reviews must lie in [{}, {cap}] so each reviewer writes 1 to {MAX_ORGANIC_REVIEWS_PER_REVIEWER}",
                    self.n_organic_reviewers
                ));
            }
        }
        let mut targets = 0;
        for (k, g) in self.planted.iter().enumerate() {
            if g.size < 2 || g.n_targets == 0 {
                return bad(format!(
                    "planted group {k}: size must be at least 2 and n_targets at least 1"
                ));
            }
            if g.n_targets > self.n_products {
                return bad(format!("planted group {k}: n_targets exceeds n_products"));
            }
            if !(0.0..=1.0).contains(&g.paraphrase_rate) {
                return bad(format!("planted group {k}: paraphrase_rate must be in [0, 1]"));
            }
            if i64::from(g.time_spread_days) >= SPAN_DAYS {
                return bad(format!("planted group {k}: time_spread_days must be below {SPAN_DAYS}"));
            }
            targets += g.n_targets;
        }
        if targets > self.n_products {
            log::info!(
                "planted groups share target products ({targets} targets, {} products)",
                self.n_products
            );
        }
        Ok(())
    }
}

/// A generated corpus with its planted groups.
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub dataset: Dataset,
    /// Planted groups, in spec order.
    pub truth: Vec<CandidateGroup>,
}

const TEMPLATES: [&str; 50] = {
    [
        "good product works as described",
        "great value fast shipping would buy again",
        "terrible quality broke after one week",
        "nice design but the battery is weak",
        "excellent service friendly staff",
        "the food was tasty and the price was fair",
        "poor packaging item arrived damaged",
        "amazing experience highly recommend to everyone",
        "average quality nothing special",
        "the room was clean and the bed was comfortable",
        "slow delivery but the product is good",
        "awful customer support never again",
        "solid build feels sturdy and reliable",
        "cheap material looks different from the photos",
        "lovely place great atmosphere",
        "the app crashes often and drains the battery",
        "perfect fit and very comfortable",
        "disappointing taste and small portions",
        "helpful staff quick check in",
        "fantastic sound quality for the price",
        "the screen is bright and sharp",
        "bad smell and dirty bathroom",
        "easy to use and simple to set up",
        "overpriced for what you get",
        "wonderful gift my family loved it",
        "instructions were confusing but it works",
        "friendly owner and cozy room",
        "stopped working after a month",
        "good coffee and quick service",
        "noisy neighbors and thin walls",
        "beautiful colors exactly like the picture",
        "the battery lasts all day",
        "rude waiter and cold food",
        "great game lots of fun",
        "too many ads in the app",
        "strong smell but effective cleaner",
        "nice view from the balcony",
        "fast charging and light weight",
        "the seller was honest and responsive",
        "broken zipper and loose threads",
        "fresh ingredients and generous portions",
        "update made the app slower",
        "quiet machine and easy to clean",
        "long wait but worth it",
        "small size but powerful motor",
        "the hotel was far from the center",
        "tasty dessert and sweet staff",
        "reliable product after months of use",
        "weak signal and poor range",
        "excellent quality and great price",
    ]
};

const SYNONYMS: [(&str, &[&str]); 24] = [
    ("good", &["fine", "decent", "nice"]),
    ("great", &["awesome", "superb", "excellent"]),
    ("product", &["item", "purchase"]),
    ("fast", &["quick", "speedy"]),
    ("quick", &["fast", "rapid"]),
    ("terrible", &["horrible", "dreadful"]),
    ("quality", &["build", "craftsmanship"]),
    ("nice", &["pleasant", "lovely"]),
    ("excellent", &["outstanding", "superb"]),
    ("service", &["support", "help"]),
    ("staff", &["team", "employees"]),
    ("tasty", &["delicious", "flavorful"]),
    ("price", &["cost", "rate"]),
    ("poor", &["bad", "weak"]),
    ("amazing", &["incredible", "stunning"]),
    ("recommend", &["suggest", "endorse"]),
    ("clean", &["spotless", "tidy"]),
    ("comfortable", &["cozy", "comfy"]),
    ("awful", &["terrible", "horrible"]),
    ("cheap", &["inexpensive", "budget"]),
    ("easy", &["simple", "effortless"]),
    ("works", &["functions", "performs"]),
    ("buy", &["purchase", "order"]),
    ("love", &["adore", "enjoy"]),
];

/// Replaces each word that has synonyms with one of them at probability `rate`.
pub fn paraphrase(text: &str, rate: f64, rng: &mut impl Rng) -> String {
    text.split(' ')
        .map(|w| match SYNONYMS.iter().find(|(k, _)| *k == w) {
            Some((_, alts)) if rng.random_bool(rate) => alts.choose(rng).expect("non-empty").to_string(),
            _ => w.to_string(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn organic_counts(spec: &CampaignSpec, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = spec.n_organic_reviewers;
    let cap = MAX_ORGANIC_REVIEWS_PER_REVIEWER.min(spec.n_products);
    match spec.n_organic_reviews {
        None => (0..n)
            .map(|_| {
                let mut c = 1;
                while c < cap && rng.random_bool(0.5) {
                    c += 1;
                }
                c
            })
            .collect(),
        Some(total) => {
            let total = total.min(n * cap);
            let mut counts = vec![1; n];
            let mut remaining = total - n;
            while remaining > 0 {
                let k = rng.random_range(0..n);
                // acceptance halves with each extra review
                if counts[k] < cap && rng.random_bool(0.5f64.powi(counts[k] as i32 - 1)) {
                    counts[k] += 1;
                    remaining -= 1;
                }
            }
            counts
        }
    }
}

pub fn generate(spec: &CampaignSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scale = spec.rating_scale;
    let width = spec.n_products.to_string().len().max(4);
    let product = |k: usize| format!("p{k:0width$}");
    let rwidth = spec.n_organic_reviewers.to_string().len().max(5);

    let mut reviews = Vec::new();
    for (u, count) in organic_counts(spec, &mut rng).into_iter().enumerate() {
        let reviewer = format!("u{u:0rwidth$}");
        let products = rand::seq::index::sample(&mut rng, spec.n_products, count);
        let mut products: Vec<usize> = products.into_iter().collect();
        products.sort_unstable();
        for p in products {
            let template = TEMPLATES.choose(&mut rng).expect("non-empty");
            reviews.push(Review {
                reviewer_id: reviewer.clone(),
                product_id: product(p),
                rating: rng.random_range(scale.min..=scale.max),
                day: spec.start_day + rng.random_range(0..SPAN_DAYS),
                text: paraphrase(template, 0.5, &mut rng),
            });
        }
    }

    // disjoint targets while the catalogue allows it
    let mut catalogue: Vec<usize> = (0..spec.n_products).collect();
    catalogue.shuffle(&mut rng);
    let mut next_target = 0;
    let mut members_by_group = Vec::new();
    let mut targets_by_group = Vec::new();
    for (g, planted) in spec.planted.iter().enumerate() {
        if next_target + planted.n_targets > catalogue.len() {
            catalogue.shuffle(&mut rng);
            next_target = 0;
        }
        let targets: Vec<usize> = catalogue[next_target..next_target + planted.n_targets].to_vec();
        next_target += planted.n_targets;
        let members: Vec<String> = (0..planted.size).map(|m| format!("s{g:03}_{m:02}")).collect();
        let seed_text = TEMPLATES.choose(&mut rng).expect("non-empty");
        let spread = i64::from(planted.time_spread_days);
        let anchor_rating = rng.random_range(scale.min..=scale.max);
        for &p in &targets {
            let anchor_day = spec.start_day + rng.random_range(0..SPAN_DAYS - spread);
            for m in &members {
                let delta = i64::from(planted.rating_spread);
                let rating = (i64::from(anchor_rating) + rng.random_range(-delta..=delta))
                    .clamp(i64::from(scale.min), i64::from(scale.max)) as i32;
                reviews.push(Review {
                    reviewer_id: m.clone(),
                    product_id: product(p),
                    rating,
                    day: anchor_day + rng.random_range(0..=spread),
                    text: paraphrase(seed_text, planted.paraphrase_rate, &mut rng),
                });
            }
        }
        members_by_group.push(members);
        targets_by_group.push(targets.into_iter().map(product).collect::<Vec<_>>());
    }

    let mut labels: HashMap<String, bool> = reviews.iter().map(|r| (r.reviewer_id.clone(), false)).collect();
    for m in members_by_group.iter().flatten() {
        labels.insert(m.clone(), true);
    }
    let dataset = Dataset::build(reviews, scale, Some(&labels))?;
    let truth = members_by_group
        .iter()
        .zip(&targets_by_group)
        .map(|(m, t)| {
            Ok(CandidateGroup::with_targets(
                dataset.reviewer_set(m)?,
                dataset.product_set(t)?,
                Provenance::supplied(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticCorpus { dataset, truth })
}

/// Member id sets of the planted groups.
pub fn truth_ids(corpus: &SyntheticCorpus) -> Vec<BTreeSet<String>> {
    corpus
        .truth
        .iter()
        .map(|g| {
            g.members
                .iter()
                .map(|&r| corpus.dataset.reviewer_id(r).to_owned())
                .collect()
        })
        .collect()
}
