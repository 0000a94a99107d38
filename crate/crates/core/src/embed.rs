//! Node2Vec-style reviewer embeddings.
//!
//! Second-order biased random walks over the weighted collusion graph feed a
//! skip-gram model trained with negative sampling. Walks are generated from
//! per-walk seeded generators, so the corpus is the same for any thread
//! count. Training with `threads == 1` is fully deterministic; with more
//! threads the walks are split across workers that update shared parameters
//! without locking (relaxed atomics), which makes results run-dependent.
//!
//! Nodes without edges produce no training pairs and keep their random
//! initialization.

use std::cell::Cell;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU32, Ordering};

use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collusion::CollusionGraph;
use crate::error::{Error, Result};
use crate::model::{Dataset, ReviewerIx};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingParams {
    pub dim: usize,
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub window: usize,
    /// Return bias.
    pub p: f64,
    /// In-out bias.
    pub q: f64,
    pub negative: usize,
    pub epochs: usize,
    pub learning_rate: f32,
    /// Worker threads for training; 1 is deterministic.
    pub threads: usize,
}

impl Default for EmbeddingParams {
    fn default() -> Self {
        EmbeddingParams {
            dim: 64,
            walk_length: 80,
            walks_per_node: 10,
            window: 10,
            p: 1.0,
            q: 1.0,
            negative: 5,
            epochs: 1,
            learning_rate: 0.025,
            threads: 1,
        }
    }
}

impl EmbeddingParams {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.walk_length < 2 || self.walks_per_node == 0 || self.window == 0 || self.epochs == 0 {
            return Err(Error::InvalidParams(
                "dim, walks_per_node, window, epochs must be positive and walk_length at least 2".into(),
            ));
        }
        if !(self.p > 0.0 && self.q > 0.0) {
            return Err(Error::InvalidParams("walk biases p and q must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || self.threads == 0 {
            return Err(Error::InvalidParams(
                "learning_rate and threads must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Reviewer id → vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ReviewerEmbedding {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<f64>,
    lookup: HashMap<String, usize>,
}

impl ReviewerEmbedding {
    pub fn new(dim: usize, entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let mut ids = Vec::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity(entries.len() * dim);
        let mut lookup = HashMap::with_capacity(entries.len());
        for (id, v) in entries {
            if v.len() != dim {
                return Err(Error::InvalidParams(format!(
                    "vector for {id} has dimension {}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParams(format!("vector for {id} is not finite")));
            }
            if lookup.insert(id.clone(), ids.len()).is_some() {
                return Err(Error::InvalidParams(format!("duplicate embedding for {id}")));
            }
            ids.push(id);
            vectors.extend(v);
        }
        Ok(ReviewerEmbedding {
            dim,
            ids,
            vectors,
            lookup,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.lookup
            .get(id)
            .map(|&k| &self.vectors[k * self.dim..(k + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids
            .iter()
            .zip(self.vectors.chunks_exact(self.dim.max(1)))
            .map(|(id, v)| (id.as_str(), v))
    }

    /// Applies `f` to every vector.
    pub fn map_vectors(&self, f: impl FnMut(&mut [f64])) -> Self {
        let mut out = self.clone();
        out.vectors.chunks_exact_mut(self.dim.max(1)).for_each(f);
        out
    }

    /// Text dump: `n d`, then `id v1 .. vd` per line.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (id, v) in self.iter() {
            write!(out, "{id}")?;
            for x in v {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format(path, "empty embedding file"))?
            .map_err(|e| Error::io(path, e))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format(path, "header must be `n d`"))?;
        let [n, d] = dims[..] else {
            return Err(Error::format(path, "header must be `n d`"));
        };
        let mut entries = Vec::with_capacity(n);
        for (k, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let id = fields.next().expect("non-empty line").to_owned();
            let v = fields
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::format(path, format!("line {}: {e}", k + 2)))?;
            entries.push((id, v));
        }
        if entries.len() != n {
            return Err(Error::format(
                path,
                format!("header says {n} vectors, found {}", entries.len()),
            ));
        }
        Self::new(d, entries).map_err(|e| Error::format(path, e.to_string()))
    }
}

fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 over the combined words
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Walker<'a> {
    graph: &'a CollusionGraph,
    p: f64,
    q: f64,
    /// Cumulative weights per node, aligned with the adjacency lists.
    cumulative: Vec<f64>,
    offsets: Vec<usize>,
}

impl<'a> Walker<'a> {
    fn new(graph: &'a CollusionGraph, p: f64, q: f64) -> Self {
        let mut cumulative = Vec::new();
        let mut offsets = vec![0];
        for v in 0..graph.num_nodes() {
            let (_, ws) = graph.neighbors(v);
            let mut acc = 0.0;
            cumulative.extend(ws.iter().map(|w| {
                acc += w;
                acc
            }));
            offsets.push(cumulative.len());
        }
        Walker {
            graph,
            p,
            q,
            cumulative,
            offsets,
        }
    }

    fn first_order_step(&self, v: usize, rng: &mut ChaCha8Rng) -> usize {
        let cum = &self.cumulative[self.offsets[v]..self.offsets[v + 1]];
        let total = *cum.last().expect("node has neighbors");
        let x = rng.random::<f64>() * total;
        let k = cum.partition_point(|&c| c <= x).min(cum.len() - 1);
        self.graph.neighbors(v).0[k] as usize
    }

    fn biased_step(&self, prev: usize, v: usize, rng: &mut ChaCha8Rng, scratch: &mut Vec<f64>) -> usize {
        let (ns, ws) = self.graph.neighbors(v);
        let (prev_ns, _) = self.graph.neighbors(prev);
        scratch.clear();
        let mut acc = 0.0;
        for (&x, &w) in ns.iter().zip(ws) {
            let x = x as usize;
            let bias = if x == prev {
                1.0 / self.p
            } else if prev_ns.binary_search(&(x as u32)).is_ok() {
                1.0
            } else {
                1.0 / self.q
            };
            acc += w * bias;
            scratch.push(acc);
        }
        let u = rng.random::<f64>() * acc;
        let k = scratch.partition_point(|&c| c <= u).min(scratch.len() - 1);
        ns[k] as usize
    }

    fn walk(&self, start: usize, length: usize, rng: &mut ChaCha8Rng, out: &mut Vec<u32>) {
        out.clear();
        out.push(start as u32);
        if self.graph.degree(start) == 0 {
            return;
        }
        let unbiased = self.p == 1.0 && self.q == 1.0;
        let mut scratch = Vec::new();
        let mut prev = start;
        let mut cur = self.first_order_step(start, rng);
        out.push(cur as u32);
        while out.len() < length {
            let next = if unbiased {
                self.first_order_step(cur, rng)
            } else {
                self.biased_step(prev, cur, rng, &mut scratch)
            };
            prev = cur;
            cur = next;
            out.push(cur as u32);
        }
    }
}

/// Walk corpus: `walks_per_node` rounds, each visiting every non-isolated
/// node once in a seeded shuffled order.
pub fn generate_walks(graph: &CollusionGraph, params: &EmbeddingParams, seed: u64) -> Vec<Vec<u32>> {
    let walker = Walker::new(graph, params.p, params.q);
    let starts: Vec<usize> = (0..graph.num_nodes()).filter(|&v| graph.degree(v) > 0).collect();
    let mut walks = Vec::with_capacity(starts.len() * params.walks_per_node);
    for round in 0..params.walks_per_node {
        let mut order = starts.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, round as u64, u64::MAX)));
        let batch: Vec<Vec<u32>> = order
            .par_iter()
            .map(|&v| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, round as u64, v as u64));
                let mut w = Vec::with_capacity(params.walk_length);
                walker.walk(v, params.walk_length, &mut rng, &mut w);
                w
            })
            .collect();
        walks.extend(batch);
    }
    walks
}

/// Shared skip-gram parameters. Relaxed atomics let parallel workers update
/// without locks; on common targets they compile to plain loads and stores.
struct SharedMatrix(Vec<AtomicU32>);

impl SharedMatrix {
    fn new(values: impl Iterator<Item = f32>) -> Self {
        SharedMatrix(values.map(|x| AtomicU32::new(x.to_bits())).collect())
    }

    fn into_vec(self) -> Vec<f32> {
        self.0.into_iter().map(|x| f32::from_bits(x.into_inner())).collect()
    }
}

/// Row access to a `num_nodes × dim` parameter matrix through a shared
/// reference.
trait Rows {
    fn read_row(&self, start: usize, row: &mut [f32]);
    fn write_row(&self, start: usize, row: &[f32]);
}

impl Rows for SharedMatrix {
    fn read_row(&self, start: usize, row: &mut [f32]) {
        for (x, a) in row.iter_mut().zip(&self.0[start..]) {
            *x = f32::from_bits(a.load(Ordering::Relaxed));
        }
    }

    fn write_row(&self, start: usize, row: &[f32]) {
        for (&x, a) in row.iter().zip(&self.0[start..]) {
            a.store(x.to_bits(), Ordering::Relaxed);
        }
    }
}

/// Single-threaded storage: plain memory, so row copies vectorize.
impl Rows for [Cell<f32>] {
    fn read_row(&self, start: usize, row: &mut [f32]) {
        for (x, c) in row.iter_mut().zip(&self[start..]) {
            *x = c.get();
        }
    }

    fn write_row(&self, start: usize, row: &[f32]) {
        for (&x, c) in row.iter().zip(&self[start..]) {
            c.set(x);
        }
    }
}

const MAX_EXP: f32 = 6.0;
const SIGMOID_TABLE_SIZE: usize = 1000;

/// Logistic function tabulated on [-MAX_EXP, MAX_EXP], as in word2vec.
fn sigmoid_table() -> Vec<f32> {
    (0..SIGMOID_TABLE_SIZE)
        .map(|i| {
            let x = (i as f32 / SIGMOID_TABLE_SIZE as f32 * 2.0 - 1.0) * MAX_EXP;
            1.0 / (1.0 + (-x).exp())
        })
        .collect()
}

/// Draws nodes with probability proportional to count^0.75.
struct NegativeSampler(WeightedAliasIndex<f64>);

impl NegativeSampler {
    fn new(counts: &[u64]) -> Self {
        let weights = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        NegativeSampler(WeightedAliasIndex::new(weights).expect("some node occurs in a walk"))
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        self.0.sample(rng)
    }
}

/// Per-worker row buffers, so the arithmetic runs on plain slices.
struct Scratch {
    hidden: Vec<f32>,
    out: Vec<f32>,
    err: Vec<f32>,
}

impl Scratch {
    fn new(d: usize) -> Self {
        Scratch {
            hidden: vec![0.0; d],
            out: vec![0.0; d],
            err: vec![0.0; d],
        }
    }
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut lanes = [0.0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f32 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            lanes[k] += x[k] * y[k];
        }
    }
    lanes.iter().sum::<f32>() + tail
}

fn axpy(y: &mut [f32], a: f32, x: &[f32]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

struct Schedule {
    dim: usize,
    window: usize,
    negative: usize,
    start_lr: f32,
    total_tokens: f64,
    sampler: NegativeSampler,
    sigmoid: Vec<f32>,
}

struct Trainer<'a, M: Rows + ?Sized> {
    schedule: &'a Schedule,
    input: &'a M,
    output: &'a M,
}

impl Schedule {
    #[inline]
    fn sigmoid(&self, f: f32) -> f32 {
        if f >= MAX_EXP {
            1.0
        } else if f <= -MAX_EXP {
            0.0
        } else {
            let i = ((f + MAX_EXP) * (SIGMOID_TABLE_SIZE as f32 / MAX_EXP / 2.0)) as usize;
            self.sigmoid[i.min(SIGMOID_TABLE_SIZE - 1)]
        }
    }
}

impl<M: Rows + ?Sized> Trainer<'_, M> {
    fn train_walk(&self, walk: &[u32], processed_before: u64, rng: &mut ChaCha8Rng, s: &mut Scratch) {
        let sc = self.schedule;
        let d = sc.dim;
        let lr =
            (sc.start_lr * (1.0 - processed_before as f64 / (sc.total_tokens + 1.0)) as f32).max(sc.start_lr * 1e-4);
        for (pos, &center) in walk.iter().enumerate() {
            let shrink = rng.random_range(0..sc.window);
            let span = sc.window - shrink;
            let lo = pos.saturating_sub(span);
            let hi = (pos + span + 1).min(walk.len());
            for (cpos, &context) in walk.iter().enumerate().take(hi).skip(lo) {
                if cpos == pos {
                    continue;
                }
                let l1 = context as usize * d;
                self.input.read_row(l1, &mut s.hidden);
                s.err.fill(0.0);
                for k in 0..=sc.negative {
                    let (target, label) = if k == 0 {
                        (center as usize, 1.0f32)
                    } else {
                        let t = sc.sampler.sample(rng);
                        if t == center as usize {
                            continue;
                        }
                        (t, 0.0)
                    };
                    let l2 = target * d;
                    self.output.read_row(l2, &mut s.out);
                    let f = dot(&s.hidden, &s.out);
                    let g = (label - sc.sigmoid(f)) * lr;
                    axpy(&mut s.err, g, &s.out);
                    axpy(&mut s.out, g, &s.hidden);
                    self.output.write_row(l2, &s.out);
                }
                axpy(&mut s.hidden, 1.0, &s.err);
                self.input.write_row(l1, &s.hidden);
            }
        }
    }
}

/// Trains vectors for every node of `graph`, labelled with the dataset's
/// reviewer ids.
pub fn embed_reviewers(
    graph: &CollusionGraph,
    dataset: &Dataset,
    params: &EmbeddingParams,
    seed: u64,
) -> Result<ReviewerEmbedding> {
    params.validate()?;
    let n = graph.num_nodes();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    if n != dataset.num_reviewers() {
        return Err(Error::InvalidParams("collusion graph does not match dataset".into()));
    }
    let vectors = train(graph, params, seed);
    let entries = (0..n)
        .map(|v| {
            let id = dataset.reviewer_id(ReviewerIx(v as u32)).to_owned();
            (
                id,
                vectors[v * params.dim..(v + 1) * params.dim]
                    .iter()
                    .map(|&x| f64::from(x))
                    .collect(),
            )
        })
        .collect();
    ReviewerEmbedding::new(params.dim, entries)
}

/// Raw training: row-major `num_nodes × dim` input vectors.
pub fn train(graph: &CollusionGraph, params: &EmbeddingParams, seed: u64) -> Vec<f32> {
    let n = graph.num_nodes();
    let d = params.dim;
    let mut init_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, u64::MAX, 0));
    let mut input: Vec<f32> = (0..n * d)
        .map(|_| (init_rng.random::<f32>() - 0.5) / d as f32)
        .collect();
    let mut output = vec![0.0f32; n * d];

    let walks = generate_walks(graph, params, seed);
    if walks.iter().all(|w| w.len() < 2) {
        return input;
    }
    let mut counts = vec![0u64; n];
    walks.iter().flatten().for_each(|&v| counts[v as usize] += 1);
    let tokens_per_epoch: u64 = walks.iter().map(|w| w.len() as u64).sum();
    let schedule = Schedule {
        dim: d,
        window: params.window,
        negative: params.negative,
        start_lr: params.learning_rate,
        total_tokens: (tokens_per_epoch * params.epochs as u64) as f64,
        sampler: NegativeSampler::new(&counts),
        sigmoid: sigmoid_table(),
    };

    // token offset of each walk within an epoch, for learning-rate decay
    let mut starts = Vec::with_capacity(walks.len());
    let mut acc = 0u64;
    for w in &walks {
        starts.push(acc);
        acc += w.len() as u64;
    }

    if params.threads <= 1 {
        let trainer = Trainer {
            schedule: &schedule,
            input: Cell::from_mut(&mut input[..]).as_slice_of_cells(),
            output: Cell::from_mut(&mut output[..]).as_slice_of_cells(),
        };
        let mut scratch = Scratch::new(d);
        for epoch in 0..params.epochs {
            let base = epoch as u64 * tokens_per_epoch;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, epoch as u64, 1));
            for (w, &s) in walks.iter().zip(&starts) {
                trainer.train_walk(w, base + s, &mut rng, &mut scratch);
            }
        }
        return input;
    }

    let shared_in = SharedMatrix::new(input.into_iter());
    let shared_out = SharedMatrix::new(output.into_iter());
    let trainer = Trainer {
        schedule: &schedule,
        input: &shared_in,
        output: &shared_out,
    };
    let chunk = walks.len().div_ceil(params.threads).max(1);
    for epoch in 0..params.epochs {
        let base = epoch as u64 * tokens_per_epoch;
        walks
            .par_chunks(chunk)
            .zip(starts.par_chunks(chunk))
            .enumerate()
            .for_each(|(worker, (ws, ss))| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, epoch as u64, 2 + worker as u64));
                let mut scratch = Scratch::new(d);
                for (w, &s) in ws.iter().zip(ss) {
                    trainer.train_walk(w, base + s, &mut rng, &mut scratch);
                }
            });
    }
    shared_in.into_vec()
}
