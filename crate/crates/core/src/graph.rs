//! Attributed product-rating graph and its attributed line graph.
//!
//! Level 0 has one vertex per (product, rating) pair that received a review;
//! its attribute is the set of reviewers who gave that rating. An edge joins
//! two pairs on different products and carries the reviewers who reviewed
//! both with exactly those ratings, within `tau_t` days of each other.
//! Line graphs turn edges into vertices and join two of them when the
//! originating edges share an endpoint, carrying the intersection of the two
//! reviewer sets.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{Dataset, ProductIx, ReviewerIx, ReviewerSet};
use crate::sets::SortedSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VertexOrigin {
    ProductRating {
        product: ProductIx,
        rating: i32,
    },
    /// Edge `(u, v)` of the previous level's graph.
    Edge {
        u: u32,
        v: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vertex {
    pub origin: VertexOrigin,
    pub reviewers: ReviewerSet,
}

/// Undirected edge with `u < v`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub reviewers: ReviewerSet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProductRatingGraph {
    level: usize,
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
}

impl ProductRatingGraph {
    /// Assembles a graph from parts, sorting edges canonically. Panics on
    /// self-loops, out-of-range endpoints, duplicate edges or empty edge
    /// attributes.
    pub fn from_parts(level: usize, vertices: Vec<Vertex>, mut edges: Vec<Edge>) -> Self {
        for e in &mut edges {
            assert!(e.u != e.v, "self-loop on vertex {}", e.u);
            assert!(e.u.max(e.v) < vertices.len(), "edge endpoint out of range");
            assert!(!e.reviewers.is_empty(), "empty edge attribute");
            if e.u > e.v {
                std::mem::swap(&mut e.u, &mut e.v);
            }
        }
        edges.sort_by_key(|e| (e.u, e.v));
        assert!(
            edges.windows(2).all(|w| (w[0].u, w[0].v) != (w[1].u, w[1].v)),
            "duplicate edge"
        );
        ProductRatingGraph { level, vertices, edges }
    }

    pub fn build(dataset: &Dataset, tau_t: f64) -> Result<Self> {
        if !(tau_t > 0.0) {
            return Err(Error::InvalidParams(format!("tau_t must be positive, got {tau_t}")));
        }
        let mut attrs: BTreeMap<(ProductIx, i32), Vec<ReviewerIx>> = BTreeMap::new();
        for r in dataset.reviewers() {
            for rev in dataset.reviews_of(r) {
                attrs.entry((rev.product, rev.rating)).or_default().push(r);
            }
        }
        let mut index: HashMap<(ProductIx, i32), u32> = HashMap::with_capacity(attrs.len());
        let vertices: Vec<Vertex> = attrs
            .into_iter()
            .enumerate()
            .map(|(i, ((product, rating), reviewers))| {
                index.insert((product, rating), i as u32);
                Vertex {
                    origin: VertexOrigin::ProductRating { product, rating },
                    reviewers: SortedSet::from_sorted_unchecked(reviewers),
                }
            })
            .collect();

        // Reviewers are visited in increasing order, so every attribute list
        // comes out sorted.
        let mut edge_attrs: HashMap<(u32, u32), Vec<ReviewerIx>> = HashMap::new();
        let mut timeline: Vec<(i64, u32)> = Vec::new();
        for r in dataset.reviewers() {
            timeline.clear();
            timeline.extend(
                dataset
                    .reviews_of(r)
                    .iter()
                    .map(|rev| (rev.day, index[&(rev.product, rev.rating)])),
            );
            timeline.sort_unstable();
            for a in 0..timeline.len() {
                for b in a + 1..timeline.len() {
                    if (timeline[b].0 - timeline[a].0) as f64 > tau_t {
                        break;
                    }
                    let (x, y) = (timeline[a].1, timeline[b].1);
                    edge_attrs.entry((x.min(y), x.max(y))).or_default().push(r);
                }
            }
        }
        let edges = edge_attrs
            .into_iter()
            .map(|((u, v), reviewers)| Edge {
                u: u as usize,
                v: v as usize,
                reviewers: SortedSet::from_sorted_unchecked(reviewers),
            })
            .collect();
        Ok(Self::from_parts(0, vertices, edges))
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Incident edge indices per vertex, in edge order.
    pub fn incident_edges(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.vertices.len()];
        for (k, e) in self.edges.iter().enumerate() {
            inc[e.u].push(k);
            inc[e.v].push(k);
        }
        inc
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.vertices.len()];
        for e in &self.edges {
            deg[e.u] += 1;
            deg[e.v] += 1;
        }
        deg
    }

    /// Connected components as sorted vertex lists, ordered by smallest vertex.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut dsu = DisjointSets::new(self.vertices.len());
        for e in &self.edges {
            dsu.union(e.u, e.v);
        }
        let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut first: HashMap<usize, usize> = HashMap::new();
        for v in 0..self.vertices.len() {
            let root = dsu.find(v);
            let key = *first.entry(root).or_insert(v);
            by_root.entry(key).or_default().push(v);
        }
        by_root.into_values().collect()
    }

    /// Keeps the marked vertices and edges, renumbering vertices. Edges whose
    /// endpoints are dropped are dropped too.
    pub fn retain(&self, keep_vertex: &[bool], keep_edge: &[bool]) -> Self {
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        for (i, v) in self.vertices.iter().enumerate() {
            if keep_vertex[i] {
                remap[i] = vertices.len();
                vertices.push(v.clone());
            }
        }
        let edges = self
            .edges
            .iter()
            .enumerate()
            .filter(|(k, e)| keep_edge[*k] && keep_vertex[e.u] && keep_vertex[e.v])
            .map(|(_, e)| Edge {
                u: remap[e.u],
                v: remap[e.v],
                reviewers: e.reviewers.clone(),
            })
            .collect();
        ProductRatingGraph {
            level: self.level,
            vertices,
            edges,
        }
    }

    /// Attributed line graph: one vertex per edge; two vertices adjacent when
    /// their edges share an endpoint and the reviewer sets intersect.
    pub fn line_graph(&self) -> Result<Self> {
        if self.edges.is_empty() {
            return Err(Error::NoEdges);
        }
        let vertices = self
            .edges
            .iter()
            .map(|e| Vertex {
                origin: VertexOrigin::Edge {
                    u: e.u as u32,
                    v: e.v as u32,
                },
                reviewers: e.reviewers.clone(),
            })
            .collect();
        let mut edges = Vec::new();
        for incident in self.incident_edges() {
            for (a, &i) in incident.iter().enumerate() {
                for &j in &incident[a + 1..] {
                    let shared = self.edges[i].reviewers.intersection(&self.edges[j].reviewers);
                    if !shared.is_empty() {
                        edges.push(Edge {
                            u: i,
                            v: j,
                            reviewers: shared,
                        });
                    }
                }
            }
        }
        Ok(Self::from_parts(self.level + 1, vertices, edges))
    }

    pub fn vertex_label(&self, dataset: &Dataset, v: usize) -> String {
        match self.vertices[v].origin {
            VertexOrigin::ProductRating { product, rating } => {
                format!("{}@{}", dataset.product_id(product), rating)
            }
            VertexOrigin::Edge { .. } => format!("L{}#{}", self.level, v),
        }
    }

    /// Debug dump: `u;v;reviewer_id_list` per edge.
    pub fn write_dump<W: Write>(&self, dataset: &Dataset, mut out: W) -> std::io::Result<()> {
        for e in &self.edges {
            let ids: Vec<&str> = e.reviewers.iter().map(|&r| dataset.reviewer_id(r)).collect();
            writeln!(
                out,
                "{};{};{}",
                self.vertex_label(dataset, e.u),
                self.vertex_label(dataset, e.v),
                ids.join(",")
            )?;
        }
        Ok(())
    }
}

/// Union-find with path halving and union by size.
#[derive(Clone, Debug)]
pub struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    pub fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}
