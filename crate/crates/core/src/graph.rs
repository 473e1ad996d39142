//! Word-similarity graphs and Louvain community detection.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingTable;
use crate::lexicon::{Evidence, EvidenceKind, Lexicon, LexiconEntry, Status};

pub const GRAPH_SOURCE: &str = "graph-louvain";

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("vocabulary tokens missing from the embedding table: {}", .0.join(", "))]
    MissingTokens(Vec<String>),
    #[error("edge endpoint is not a node: {0}")]
    UnknownNode(String),
    #[error("invalid edge {0}-{1}: {2}")]
    InvalidEdge(String, String, String),
    #[error("graph has no nodes")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: String,
    pub v: String,
    pub weight: f64,
}

/// Undirected weighted graph over sorted, distinct tokens. Each edge is kept
/// once with `u < v`.
#[derive(Debug, Clone, PartialEq)]
pub struct WordGraph {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    /// `(u, v, w)` by node index, `u < v`, sorted.
    edges: Vec<(usize, usize, f64)>,
}

impl WordGraph {
    /// Builds a graph from arbitrary edges; duplicate pairs keep the last weight.
    pub fn from_edges<S: AsRef<str>>(
        nodes: &[S],
        edges: &[(S, S, f64)],
    ) -> Result<Self, GraphError> {
        let set: BTreeSet<String> = nodes.iter().map(|s| s.as_ref().to_string()).collect();
        let nodes: Vec<String> = set.into_iter().collect();
        let index: HashMap<String, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let mut pairs = BTreeMap::new();
        for (a, b, w) in edges {
            let (a, b) = (a.as_ref(), b.as_ref());
            let ia = *index.get(a).ok_or_else(|| GraphError::UnknownNode(a.into()))?;
            let ib = *index.get(b).ok_or_else(|| GraphError::UnknownNode(b.into()))?;
            let invalid = |why: &str| GraphError::InvalidEdge(a.into(), b.into(), why.into());
            if ia == ib {
                return Err(invalid("self-loop"));
            }
            if !(w.is_finite() && *w > 0.0) {
                return Err(invalid("weight must be finite and positive"));
            }
            pairs.insert((ia.min(ib), ia.max(ib)), *w);
        }
        let edges = pairs.into_iter().map(|((u, v), w)| (u, v, w)).collect();
        Ok(Self { nodes, index, edges })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_index(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.edges.iter().map(|&(u, v, weight)| Edge {
            u: self.nodes[u].clone(),
            v: self.nodes[v].clone(),
            weight,
        })
    }

    pub fn indexed_edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Writes `u TAB v TAB weight` lines.
    pub fn write_edge_list<W: Write>(&self, out: &mut W) -> io::Result<()> {
        for &(u, v, w) in &self.edges {
            writeln!(out, "{}\t{}\t{}", self.nodes[u], self.nodes[v], w)?;
        }
        Ok(())
    }

    fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(u, v, w) in &self.edges {
            adj[u].push((v, w));
            adj[v].push((u, w));
        }
        adj
    }
}

/// Exact pairwise graph: an edge joins two vocabulary tokens whose cosine
/// similarity is at least `threshold`.
pub fn build_graph<S: AsRef<str>>(
    table: &EmbeddingTable,
    vocab: &[S],
    threshold: f64,
) -> Result<WordGraph, GraphError> {
    let vocab: BTreeSet<&str> = vocab.iter().map(AsRef::as_ref).collect();
    let missing: Vec<String> = vocab
        .iter()
        .filter(|t| !table.contains(t))
        .map(|t| t.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(GraphError::MissingTokens(missing));
    }
    let nodes: Vec<&str> = vocab.into_iter().collect();
    let mut edges = Vec::new();
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            let w = table.similarity(nodes[i], nodes[j]).expect("checked present");
            if w >= threshold {
                edges.push((nodes[i], nodes[j], w));
            }
        }
    }
    WordGraph::from_edges(&nodes, &edges)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Community id per token. Ids are dense and numbered by the first
    /// member in token order.
    pub assignment: BTreeMap<String, usize>,
    pub modularity: f64,
}

impl Partition {
    pub fn community_count(&self) -> usize {
        self.assignment.values().collect::<BTreeSet<_>>().len()
    }

    pub fn communities(&self) -> BTreeMap<usize, Vec<String>> {
        let mut out: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for (t, &c) in &self.assignment {
            out.entry(c).or_default().push(t.clone());
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.assignment).expect("map serializes")
    }
}

/// Newman-Girvan modularity with resolution `gamma` of a node-indexed
/// community assignment. A graph without edges has modularity 0.
pub fn modularity(graph: &WordGraph, communities: &[usize], gamma: f64) -> f64 {
    let two_m: f64 = 2.0 * graph.edges.iter().map(|e| e.2).sum::<f64>();
    if two_m == 0.0 {
        return 0.0;
    }
    let k = communities.iter().max().map_or(0, |&c| c + 1);
    let mut inside = vec![0.0; k];
    let mut tot = vec![0.0; k];
    for &(u, v, w) in &graph.edges {
        tot[communities[u]] += w;
        tot[communities[v]] += w;
        if communities[u] == communities[v] {
            inside[communities[u]] += 2.0 * w;
        }
    }
    inside
        .iter()
        .zip(&tot)
        .map(|(i, t)| i / two_m - gamma * (t / two_m) * (t / two_m))
        .sum()
}

/// Modularity of a token-keyed partition, recomputed from scratch.
pub fn partition_modularity(graph: &WordGraph, partition: &Partition, gamma: f64) -> f64 {
    let comm: Vec<usize> = graph.nodes.iter().map(|n| partition.assignment[n]).collect();
    modularity(graph, &comm, gamma)
}

/// Working graph for one Louvain level; `self_w[i]` holds twice the internal
/// weight folded into node `i`.
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    self_w: Vec<f64>,
}

impl Level {
    fn degree(&self, i: usize) -> f64 {
        self.self_w[i] + self.adj[i].iter().map(|e| e.1).sum::<f64>()
    }
}

const GAIN_EPS: f64 = 1e-12;

/// Local moving phase. Returns the community of each level node and whether
/// any node moved.
fn move_nodes(level: &Level, gamma: f64, two_m: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
    let n = level.adj.len();
    let degree: Vec<f64> = (0..n).map(|i| level.degree(i)).collect();
    let mut comm: Vec<usize> = (0..n).collect();
    let mut tot = degree.clone();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut link = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut moved_any = false;
    loop {
        let mut moved = false;
        for &i in &order {
            let ki = degree[i];
            if ki == 0.0 {
                continue;
            }
            let own = comm[i];
            for &(j, w) in &level.adj[i] {
                let c = comm[j];
                if link[c] == 0.0 {
                    touched.push(c);
                }
                link[c] += w;
            }
            tot[own] -= ki;
            let gain = |c: usize, l: f64| l - gamma * tot[c] * ki / two_m;
            let mut best = own;
            let mut best_gain = gain(own, link[own]);
            for &c in &touched {
                let g = gain(c, link[c]);
                if g > best_gain + GAIN_EPS || (g >= best_gain - GAIN_EPS && c < best && best != own) {
                    best = c;
                    best_gain = g;
                }
            }
            tot[best] += ki;
            if best != own {
                comm[i] = best;
                moved = true;
                moved_any = true;
            }
            for &c in &touched {
                link[c] = 0.0;
            }
            touched.clear();
        }
        if !moved {
            break;
        }
    }
    (comm, moved_any)
}

/// Renumbers communities densely in order of first appearance.
fn relabel(comm: &mut [usize]) -> usize {
    let mut map = HashMap::new();
    for c in comm.iter_mut() {
        let next = map.len();
        *c = *map.entry(*c).or_insert(next);
    }
    map.len()
}

fn aggregate(level: &Level, comm: &[usize], k: usize) -> Level {
    let mut self_w = vec![0.0; k];
    let mut between: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
    for i in 0..level.adj.len() {
        let ci = comm[i];
        self_w[ci] += level.self_w[i];
        for &(j, w) in &level.adj[i] {
            let cj = comm[j];
            if ci == cj {
                self_w[ci] += w;
            } else {
                *between[ci].entry(cj).or_insert(0.0) += w;
            }
        }
    }
    Level {
        adj: between.into_iter().map(|m| m.into_iter().collect()).collect(),
        self_w,
    }
}

/// Two-phase Louvain: seeded local moving, then aggregation, repeated until
/// a level moves no node. Isolated nodes stay singletons.
pub fn louvain(graph: &WordGraph, seed: u64, resolution: f64) -> Partition {
    let n = graph.nodes.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let two_m: f64 = 2.0 * graph.edges.iter().map(|e| e.2).sum::<f64>();
    let mut membership: Vec<usize> = (0..n).collect();
    if two_m > 0.0 {
        let mut level = Level {
            adj: graph.adjacency(),
            self_w: vec![0.0; n],
        };
        loop {
            let (mut comm, moved) = move_nodes(&level, resolution, two_m, &mut rng);
            if !moved {
                break;
            }
            let k = relabel(&mut comm);
            for m in membership.iter_mut() {
                *m = comm[*m];
            }
            level = aggregate(&level, &comm, k);
        }
    }
    relabel(&mut membership);
    let singletons: Vec<usize> = (0..n).collect();
    let mut q = modularity(graph, &membership, resolution);
    if q < modularity(graph, &singletons, resolution) {
        membership = singletons;
        q = modularity(graph, &membership, resolution);
    }
    Partition {
        assignment: graph.nodes.iter().cloned().zip(membership).collect(),
        modularity: q,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedCommunity {
    pub community: usize,
    pub toxic_count: usize,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityReport {
    pub flagged: Vec<FlaggedCommunity>,
    /// Low-confidence candidates; advisory only.
    pub candidates: Vec<LexiconEntry>,
}

/// Communities holding at least one seed or accepted term, most toxic first.
/// Their members outside the lexicon become community-evidence candidates.
pub fn flag_communities(graph: &WordGraph, partition: &Partition, lexicon: &Lexicon) -> CommunityReport {
    let toxic = |t: &str| lexicon.get(t).is_some_and(LexiconEntry::is_active);
    let mut flagged: Vec<FlaggedCommunity> = partition
        .communities()
        .into_iter()
        .filter_map(|(community, members)| {
            let toxic_count = members.iter().filter(|m| toxic(m)).count();
            (toxic_count > 0).then_some(FlaggedCommunity {
                community,
                toxic_count,
                members,
            })
        })
        .collect();
    flagged.sort_by(|a, b| b.toxic_count.cmp(&a.toxic_count).then(a.community.cmp(&b.community)));

    let adj = graph.adjacency();
    let generation = lexicon.max_generation() + 1;
    let mut candidates = Vec::new();
    for fc in &flagged {
        let toxic_members: Vec<&String> = fc.members.iter().filter(|m| toxic(m)).collect();
        for m in fc.members.iter().filter(|m| !lexicon.contains(m)) {
            let i = graph.index[m.as_str()];
            let mut best: (&str, f64) = (toxic_members[0].as_str(), 0.0);
            for &(j, w) in &adj[i] {
                let nb = graph.nodes[j].as_str();
                if toxic(nb) && (w > best.1 || (w == best.1 && nb < best.0)) {
                    best = (nb, w);
                }
            }
            candidates.push(LexiconEntry {
                term: m.clone(),
                status: Status::Candidate,
                source: GRAPH_SOURCE.into(),
                generation,
                evidence: Some(Evidence {
                    seed: best.0.to_string(),
                    similarity: best.1,
                    via: EvidenceKind::Community,
                }),
            });
        }
    }
    CommunityReport { flagged, candidates }
}
