//! C ABI over the defrauder library.
//!
//! Objects cross the boundary as opaque handles, each released with the
//! matching `df_*_free`. Every fallible call
//! returns a [`DfStatus`]; on failure the message is available from
//! [`df_last_error`] on the same thread until the next failing call.
//!
//! Calls are not synchronised. A handle may be shared between threads for
//! reading but must not be freed while in use.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use defrauder::collusion::{build_collusion_graph, CollusionParams};
use defrauder::detect::{extract_groups, DetectionParams, ScoredGroup};
use defrauder::embed::{embed_reviewers, EmbeddingParams};
use defrauder::eval::ndcg_at_k;
use defrauder::ingest::{load_labels, load_reviews, ReviewFormat};
use defrauder::rank::{rank_groups, RankOrder, RankedGroup};
use defrauder::text::TextVectorizer;
use defrauder::{Dataset, Error, RatingScale, Review};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DfStatus {
    Ok = 0,
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidArgument = 2,
    InvalidParams = 3,
    Io = 4,
    /// Malformed input rows or files.
    Parse = 5,
    EmptyInput = 6,
    /// Rating outside the declared scale, or an invalid scale.
    Rating = 7,
    Group = 8,
    Embedding = 9,
    IndexOutOfRange = 10,
    /// A panic was caught at the boundary. The handle involved should be freed.
    Internal = 99,
}

impl From<&Error> for DfStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::EmptyInput => DfStatus::EmptyInput,
            Error::RatingOutOfScale { .. } | Error::InvalidRatingScale { .. } => DfStatus::Rating,
            Error::Io { .. } => DfStatus::Io,
            Error::MalformedRow { .. }
            | Error::TooManyRejected { .. }
            | Error::ConflictingLabel(_)
            | Error::Format { .. } => DfStatus::Parse,
            Error::GroupTooSmall { .. }
            | Error::InvalidGroup(_)
            | Error::UnknownReviewer(_)
            | Error::UnknownProduct(_) => DfStatus::Group,
            Error::EmptyGraph | Error::MissingEmbedding(_) => DfStatus::Embedding,
            _ => DfStatus::InvalidParams,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: DfStatus, msg: impl Into<String>) -> DfStatus {
    set_error(msg);
    status
}

fn fail_with(e: Error) -> DfStatus {
    fail(DfStatus::from(&e), e.to_string())
}

/// Runs `f`, turning a panic into [`DfStatus::Internal`].
fn guard(f: impl FnOnce() -> DfStatus) -> DfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(DfStatus::Internal, format!("panic: {msg}"))
        }
    }
}

unsafe fn str_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, DfStatus> {
    if ptr.is_null() {
        return Err(fail(DfStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(DfStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

macro_rules! nonnull {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(DfStatus::NullPointer, concat!(stringify!($p), " is null"));
        })+
    };
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Message for the last failing call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn df_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn df_status_str(status: DfStatus) -> *const c_char {
    let s: &'static CStr = match status {
        DfStatus::Ok => c"ok",
        DfStatus::NullPointer => c"null pointer",
        DfStatus::InvalidArgument => c"invalid argument",
        DfStatus::InvalidParams => c"invalid parameters",
        DfStatus::Io => c"i/o error",
        DfStatus::Parse => c"parse error",
        DfStatus::EmptyInput => c"empty input",
        DfStatus::Rating => c"rating out of scale",
        DfStatus::Group => c"invalid group",
        DfStatus::Embedding => c"embedding error",
        DfStatus::IndexOutOfRange => c"index out of range",
        DfStatus::Internal => c"internal error",
    };
    s.as_ptr()
}

// ---- dataset ----

/// Indexed review corpus.
pub struct DfDataset {
    inner: Dataset,
    reviewer_ids: Vec<CString>,
}

impl DfDataset {
    fn new(inner: Dataset) -> Box<Self> {
        let reviewer_ids = inner
            .reviewers()
            .map(|r| CString::new(inner.reviewer_id(r)).unwrap_or_default())
            .collect();
        Box::new(DfDataset { inner, reviewer_ids })
    }
}

/// Loads a CSV or JSON-lines review file. `labels_path` may be null.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_dataset_load(
    reviews_path: *const c_char,
    labels_path: *const c_char,
    rating_min: i32,
    rating_max: i32,
    out: *mut *mut DfDataset,
) -> DfStatus {
    guard(|| {
        nonnull!(out);
        let path = tri!(str_arg(reviews_path, "reviews_path"));
        let labels = if labels_path.is_null() {
            None
        } else {
            match load_labels(Path::new(tri!(str_arg(labels_path, "labels_path")))) {
                Ok(l) => Some(l),
                Err(e) => return fail_with(e),
            }
        };
        let scale = match RatingScale::new(rating_min, rating_max) {
            Ok(s) => s,
            Err(e) => return fail_with(e),
        };
        let path = Path::new(path);
        match load_reviews(path, ReviewFormat::from_path(path), scale, labels.as_ref()) {
            Ok((ds, _)) => {
                *out = Box::into_raw(DfDataset::new(ds));
                DfStatus::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// Builds a dataset from parallel arrays of length `n`. `texts` may be null
/// (all texts empty), as may individual entries.
///
/// # Safety
/// Each non-null array must hold `n` elements; strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn df_dataset_from_arrays(
    n: usize,
    reviewer_ids: *const *const c_char,
    product_ids: *const *const c_char,
    ratings: *const i32,
    days: *const i64,
    texts: *const *const c_char,
    rating_min: i32,
    rating_max: i32,
    out: *mut *mut DfDataset,
) -> DfStatus {
    guard(|| {
        nonnull!(out, reviewer_ids, product_ids, ratings, days);
        let mut reviews = Vec::with_capacity(n);
        for k in 0..n {
            let text = if texts.is_null() || (*texts.add(k)).is_null() {
                String::new()
            } else {
                tri!(str_arg(*texts.add(k), "text")).to_owned()
            };
            reviews.push(Review {
                reviewer_id: tri!(str_arg(*reviewer_ids.add(k), "reviewer_id")).to_owned(),
                product_id: tri!(str_arg(*product_ids.add(k), "product_id")).to_owned(),
                rating: *ratings.add(k),
                day: *days.add(k),
                text,
            });
        }
        let scale = match RatingScale::new(rating_min, rating_max) {
            Ok(s) => s,
            Err(e) => return fail_with(e),
        };
        match Dataset::build(reviews, scale, None) {
            Ok(ds) => {
                *out = Box::into_raw(DfDataset::new(ds));
                DfStatus::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// # Safety
/// `ds` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn df_dataset_free(ds: *mut DfDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Review count after duplicate removal; 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn df_dataset_num_reviews(ds: *const DfDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.num_reviews())
}

/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn df_dataset_num_reviewers(ds: *const DfDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.num_reviewers())
}

/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn df_dataset_num_products(ds: *const DfDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.num_products())
}

// ---- detection ----

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DfDetectionParams {
    pub tau_t: f64,
    pub tau_spam: f64,
    pub js_merge_threshold: f64,
    pub max_iterations: usize,
    pub min_group_size: usize,
    pub time_window_days: f64,
}

impl From<DetectionParams> for DfDetectionParams {
    fn from(p: DetectionParams) -> Self {
        DfDetectionParams {
            tau_t: p.tau_t,
            tau_spam: p.tau_spam,
            js_merge_threshold: p.js_merge_threshold,
            max_iterations: p.max_iterations,
            min_group_size: p.min_group_size,
            time_window_days: p.time_window_days,
        }
    }
}

impl From<DfDetectionParams> for DetectionParams {
    fn from(p: DfDetectionParams) -> Self {
        DetectionParams {
            tau_t: p.tau_t,
            tau_spam: p.tau_spam,
            js_merge_threshold: p.js_merge_threshold,
            max_iterations: p.max_iterations,
            min_group_size: p.min_group_size,
            time_window_days: p.time_window_days,
        }
    }
}

#[no_mangle]
pub extern "C" fn df_detection_params_default() -> DfDetectionParams {
    DetectionParams::default().into()
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DfIndicators {
    pub rt: f64,
    pub nt: f64,
    pub pt: f64,
    pub rv: f64,
    pub rr: f64,
    pub tw: f64,
    pub collective: f64,
    pub penalty: f64,
}

/// Candidate groups that passed the score filter.
pub struct DfGroups {
    groups: Vec<ScoredGroup>,
    safeguard_fired: bool,
}

/// Runs group detection. `params` may be null for defaults.
///
/// # Safety
/// `ds` must be a live handle, `params` null or readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn df_detect(
    ds: *const DfDataset,
    params: *const DfDetectionParams,
    out: *mut *mut DfGroups,
) -> DfStatus {
    guard(|| {
        nonnull!(ds, out);
        let params = params.as_ref().map_or_else(DetectionParams::default, |p| (*p).into());
        match extract_groups(&(*ds).inner, &params) {
            Ok(result) => {
                *out = Box::into_raw(Box::new(DfGroups {
                    groups: result.groups,
                    safeguard_fired: result.safeguard_fired,
                }));
                DfStatus::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// # Safety
/// `groups` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn df_groups_free(groups: *mut DfGroups) {
    if !groups.is_null() {
        drop(Box::from_raw(groups));
    }
}

/// # Safety
/// `groups` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn df_groups_len(groups: *const DfGroups) -> usize {
    groups.as_ref().map_or(0, |g| g.groups.len())
}

/// Whether detection stopped at `max_iterations` with edges left.
///
/// # Safety
/// `groups` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn df_groups_safeguard_fired(groups: *const DfGroups) -> bool {
    groups.as_ref().is_some_and(|g| g.safeguard_fired)
}

unsafe fn group_at<'a>(groups: *const DfGroups, index: usize) -> Result<&'a ScoredGroup, DfStatus> {
    let groups = groups
        .as_ref()
        .ok_or_else(|| fail(DfStatus::NullPointer, "groups is null"))?;
    groups.groups.get(index).ok_or_else(|| {
        fail(
            DfStatus::IndexOutOfRange,
            format!("group index {index} out of range (len {})", groups.groups.len()),
        )
    })
}

/// Group id, member count, target count and indicators of group `index`.
/// Any output pointer may be null.
///
/// # Safety
/// `groups` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_group_info(
    groups: *const DfGroups,
    index: usize,
    id: *mut usize,
    size: *mut usize,
    n_targets: *mut usize,
    indicators: *mut DfIndicators,
) -> DfStatus {
    guard(|| {
        let g = tri!(group_at(groups, index));
        if !id.is_null() {
            *id = g.id;
        }
        if !size.is_null() {
            *size = g.group.members.len();
        }
        if !n_targets.is_null() {
            *n_targets = g.group.targets.len();
        }
        if !indicators.is_null() {
            let v = &g.indicators;
            *indicators = DfIndicators {
                rt: v.rt,
                nt: v.nt,
                pt: v.pt,
                rv: v.rv,
                rr: v.rr,
                tw: v.tw,
                collective: v.collective,
                penalty: v.penalty,
            };
        }
        DfStatus::Ok
    })
}

/// Id of member `member` of group `index`, sorted by dataset order. The
/// string is owned by `ds` and lives as long as it does.
///
/// # Safety
/// `ds` and `groups` must be live handles from the same detection run;
/// `out` must be writable.
#[no_mangle]
#[allow(clippy::needless_borrow)]
pub unsafe extern "C" fn df_group_member(
    ds: *const DfDataset,
    groups: *const DfGroups,
    index: usize,
    member: usize,
    out: *mut *const c_char,
) -> DfStatus {
    guard(|| {
        nonnull!(ds, out);
        let g = tri!(group_at(groups, index));
        let Some(r) = g.group.members.as_slice().get(member) else {
            return fail(DfStatus::IndexOutOfRange, format!("member {member} out of range"));
        };
        match (&(*ds).reviewer_ids).get(r.index()) {
            Some(s) => {
                *out = s.as_ptr();
                DfStatus::Ok
            }
            None => fail(DfStatus::InvalidArgument, "groups belong to a different dataset"),
        }
    })
}

// ---- ranking ----

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DfRankParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau_t: f64,
    pub tau_r_percent: f64,
    pub theta: f64,
    pub dim: usize,
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub window: usize,
    pub p: f64,
    pub q: f64,
    pub negative: usize,
    pub epochs: usize,
    pub learning_rate: f32,
    /// 1 is deterministic; 0 uses every core.
    pub threads: usize,
    /// Rank loose groups first instead of tight ones.
    pub descending: bool,
    pub seed: u64,
}

#[no_mangle]
pub extern "C" fn df_rank_params_default() -> DfRankParams {
    let c = CollusionParams::default();
    let e = EmbeddingParams::default();
    DfRankParams {
        alpha: c.alpha,
        beta: c.beta,
        gamma: c.gamma,
        tau_t: c.tau_t,
        tau_r_percent: c.tau_r_percent,
        theta: c.theta,
        dim: e.dim,
        walk_length: e.walk_length,
        walks_per_node: e.walks_per_node,
        window: e.window,
        p: e.p,
        q: e.q,
        negative: e.negative,
        epochs: e.epochs,
        learning_rate: e.learning_rate,
        threads: e.threads,
        descending: false,
        seed: 0,
    }
}

pub struct DfRanking {
    ranked: Vec<RankedGroup>,
    collusion_edges: usize,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DfRankedGroup {
    /// 1-based.
    pub rank: usize,
    pub group_id: usize,
    pub dispersion: f64,
    pub size: usize,
    pub collective: f64,
}

fn rank_impl(ds: &Dataset, groups: &DfGroups, p: &DfRankParams) -> Result<DfRanking, Error> {
    let collusion = CollusionParams {
        alpha: p.alpha,
        beta: p.beta,
        gamma: p.gamma,
        tau_t: p.tau_t,
        tau_r_percent: p.tau_r_percent,
        theta: p.theta,
    };
    collusion.validate()?;
    let threads = if p.threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        p.threads
    };
    let embedding = EmbeddingParams {
        dim: p.dim,
        walk_length: p.walk_length,
        walks_per_node: p.walks_per_node,
        window: p.window,
        p: p.p,
        q: p.q,
        negative: p.negative,
        epochs: p.epochs,
        learning_rate: p.learning_rate,
        threads,
    };
    embedding.validate()?;
    let order = if p.descending {
        RankOrder::Descending
    } else {
        RankOrder::Ascending
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?;
    pool.install(|| {
        let graph = build_collusion_graph(ds, &collusion, &TextVectorizer::default())?;
        let emb = embed_reviewers(&graph, ds, &embedding, p.seed)?;
        let ranked = rank_groups(groups.groups.clone(), ds, &emb, order)?;
        Ok(DfRanking {
            ranked,
            collusion_edges: graph.num_edges(),
        })
    })
}

/// Embeds reviewers and ranks `groups` by dispersion. `params` may be null
/// for defaults.
///
/// # Safety
/// `ds` and `groups` must be live handles from the same dataset; `params`
/// null or readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn df_rank(
    ds: *const DfDataset,
    groups: *const DfGroups,
    params: *const DfRankParams,
    out: *mut *mut DfRanking,
) -> DfStatus {
    guard(|| {
        nonnull!(ds, groups, out);
        let params = params.as_ref().copied().unwrap_or_else(|| df_rank_params_default());
        match rank_impl(&(*ds).inner, &*groups, &params) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(r));
                DfStatus::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// # Safety
/// `ranking` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn df_ranking_free(ranking: *mut DfRanking) {
    if !ranking.is_null() {
        drop(Box::from_raw(ranking));
    }
}

/// # Safety
/// `ranking` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn df_ranking_len(ranking: *const DfRanking) -> usize {
    ranking.as_ref().map_or(0, |r| r.ranked.len())
}

/// Number of positive-weight edges in the reviewer collusion graph.
///
/// # Safety
/// `ranking` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn df_ranking_collusion_edges(ranking: *const DfRanking) -> usize {
    ranking.as_ref().map_or(0, |r| r.collusion_edges)
}

/// Entry at position `index` (0-based; its `rank` field is `index + 1`).
///
/// # Safety
/// `ranking` must be a live handle and `out` writable.
#[no_mangle]
// the explicit borrow is required: implicit autoref through a raw pointer is denied
#[allow(clippy::needless_borrow)]
pub unsafe extern "C" fn df_ranking_get(ranking: *const DfRanking, index: usize, out: *mut DfRankedGroup) -> DfStatus {
    guard(|| {
        nonnull!(ranking, out);
        let Some(r) = (&(*ranking).ranked).get(index) else {
            return fail(DfStatus::IndexOutOfRange, format!("rank index {index} out of range"));
        };
        *out = DfRankedGroup {
            rank: r.rank,
            group_id: r.group.id,
            dispersion: r.dispersion,
            size: r.group.group.members.len(),
            collective: r.group.indicators.collective,
        };
        DfStatus::Ok
    })
}

// ---- metrics ----

/// NDCG@k of relevances listed in ranked order.
///
/// # Safety
/// `relevances` must hold `n` values (may be null when `n` is 0); `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_ndcg_at_k(relevances: *const f64, n: usize, k: usize, out: *mut f64) -> DfStatus {
    guard(|| {
        nonnull!(out);
        if relevances.is_null() && n > 0 {
            return fail(DfStatus::NullPointer, "relevances is null");
        }
        if k == 0 {
            return fail(DfStatus::InvalidParams, "k must be at least 1");
        }
        let rel = if n == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(relevances, n)
        };
        if rel.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return fail(DfStatus::InvalidParams, "relevances must be finite and non-negative");
        }
        *out = ndcg_at_k(rel, k);
        DfStatus::Ok
    })
}
