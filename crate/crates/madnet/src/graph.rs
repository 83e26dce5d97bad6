//! Fully-connected heterogeneous conversation graphs.
//!
//! Nodes are the `M` context utterances, the response slot (utterance node
//! `M`), and the `I` interlocutors. Six explicit relation types cover reply
//! and speaking structure; four latent types complete every remaining
//! utterance-utterance and utterance-interlocutor pair so that message
//! passing is never cut off by missing addressee labels. Interlocutor pairs
//! carry no edges.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::MpcInstance;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("no such pair class: {0}")]
    NoSuchPairClass(String),
    #[error("invalid override: {0}")]
    InvalidOverride(String),
    #[error("unknown edge type code {0}")]
    UnknownEdgeCode(u8),
}

/// The closed set of edge types. Codes are stable: they index per-edge-type
/// parameters and appear in checkpoints and graph dumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[repr(u8)]
pub enum EdgeType {
    Reply = 0,
    RepliedBy = 1,
    Speak = 2,
    SpokenBy = 3,
    Address = 4,
    AddressedBy = 5,
    LatentReply = 6,
    LatentRepliedBy = 7,
    LatentAddress = 8,
    LatentAddressedBy = 9,
}

impl EdgeType {
    pub const COUNT: usize = 10;

    pub const ALL: [EdgeType; Self::COUNT] = [
        EdgeType::Reply,
        EdgeType::RepliedBy,
        EdgeType::Speak,
        EdgeType::SpokenBy,
        EdgeType::Address,
        EdgeType::AddressedBy,
        EdgeType::LatentReply,
        EdgeType::LatentRepliedBy,
        EdgeType::LatentAddress,
        EdgeType::LatentAddressedBy,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<EdgeType, GraphError> {
        Self::ALL
            .get(code as usize)
            .copied()
            .ok_or(GraphError::UnknownEdgeCode(code))
    }

    pub fn is_latent(self) -> bool {
        self.code() >= 6
    }

    /// The type carried by the reversed pair.
    pub fn inverse(self) -> EdgeType {
        match self {
            EdgeType::Reply => EdgeType::RepliedBy,
            EdgeType::RepliedBy => EdgeType::Reply,
            EdgeType::Speak => EdgeType::SpokenBy,
            EdgeType::SpokenBy => EdgeType::Speak,
            EdgeType::Address => EdgeType::AddressedBy,
            EdgeType::AddressedBy => EdgeType::Address,
            EdgeType::LatentReply => EdgeType::LatentRepliedBy,
            EdgeType::LatentRepliedBy => EdgeType::LatentReply,
            EdgeType::LatentAddress => EdgeType::LatentAddressedBy,
            EdgeType::LatentAddressedBy => EdgeType::LatentAddress,
        }
    }
}

/// A node is an utterance (context index `0..M`, response at `M`) or an
/// interlocutor (speaking-order index).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRef {
    Utterance(usize),
    Interlocutor(usize),
}

/// Silver/assumed addressee overrides: utterance index -> reply target.
pub type Overrides = BTreeMap<usize, usize>;

#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    n_utt: usize,
    n_int: usize,
    /// Dense (n_utt + n_int)^2 matrix of edge codes; `NO_EDGE` where the
    /// pair class carries no edge.
    edges: Vec<u8>,
}

const NO_EDGE: u8 = u8::MAX;

impl HeteroGraph {
    /// Utterance node count, including the response node.
    pub fn n_utt(&self) -> usize {
        self.n_utt
    }

    pub fn n_int(&self) -> usize {
        self.n_int
    }

    pub fn node_count(&self) -> usize {
        self.n_utt + self.n_int
    }

    /// Flat node index: utterances first, then interlocutors.
    pub fn flat(&self, node: NodeRef) -> usize {
        match node {
            NodeRef::Utterance(u) => u,
            NodeRef::Interlocutor(i) => self.n_utt + i,
        }
    }

    pub fn is_utterance(&self, flat: usize) -> bool {
        flat < self.n_utt
    }

    pub fn edge_type(&self, p: NodeRef, q: NodeRef) -> Result<EdgeType, GraphError> {
        let (pi, qi) = (self.flat(p), self.flat(q));
        if pi >= self.node_count() || qi >= self.node_count() {
            return Err(GraphError::NoSuchPairClass(format!("{p:?} -> {q:?} out of range")));
        }
        match self.edges[pi * self.node_count() + qi] {
            NO_EDGE => Err(GraphError::NoSuchPairClass(format!("{p:?} -> {q:?}"))),
            code => EdgeType::from_code(code),
        }
    }

    /// Edge code by flat indices; `None` for pairs without edges.
    pub fn edge_code_flat(&self, p: usize, q: usize) -> Option<u8> {
        match self.edges[p * self.node_count() + q] {
            NO_EDGE => None,
            code => Some(code),
        }
    }

    /// All sources feeding flat node `q`, in ascending flat order.
    pub fn sources_into(&self, q: usize) -> impl Iterator<Item = (usize, EdgeType)> + '_ {
        let n = self.node_count();
        (0..n).filter_map(move |p| {
            self.edge_code_flat(p, q)
                .map(|code| (p, EdgeType::from_code(code).expect("stored codes are valid")))
        })
    }

    pub fn directed_edge_count(&self) -> usize {
        self.edges.iter().filter(|&&e| e != NO_EDGE).count()
    }

    /// Debug/fixture dump: `{"nodes": [...], "edges": [[p, q, code], ...]}`.
    pub fn to_json(&self) -> serde_json::Value {
        let nodes: Vec<String> = (0..self.n_utt)
            .map(|u| format!("utt:{u}"))
            .chain((0..self.n_int).map(|i| format!("int:{i}")))
            .collect();
        let mut edges = Vec::new();
        let n = self.node_count();
        for p in 0..n {
            for q in 0..n {
                if let Some(code) = self.edge_code_flat(p, q) {
                    edges.push(serde_json::json!([p, q, code]));
                }
            }
        }
        serde_json::json!({ "nodes": nodes, "edges": edges })
    }

    fn set(&mut self, p: usize, q: usize, ty: EdgeType) {
        let n = self.node_count();
        self.edges[p * n + q] = ty.code();
    }

    fn get_raw(&self, p: usize, q: usize) -> u8 {
        self.edges[p * self.node_count() + q]
    }
}

/// The graph that results from assuming utterance `i` replies to `j`.
#[derive(Debug, Clone)]
pub struct AssumedGraph {
    pub instance_id: String,
    pub i: usize,
    pub j: usize,
    pub graph: HeteroGraph,
}

/// Builds the fully-connected graph for an instance. `overrides` supplies
/// assumed/silver reply targets for unlabeled utterances; the response node
/// (`M`) always uses its own known reply target and speaker.
pub fn build_graph(inst: &MpcInstance, overrides: &Overrides) -> Result<HeteroGraph, GraphError> {
    let m = inst.m();
    let n_utt = m + 1;
    let n_int = inst.n_interlocutors;
    let n = n_utt + n_int;
    let mut g = HeteroGraph {
        n_utt,
        n_int,
        edges: vec![NO_EDGE; n * n],
    };

    for (&i, &j) in overrides {
        if i == 0 {
            return Err(GraphError::InvalidOverride(
                "utterance 0 cannot carry a reply override".into(),
            ));
        }
        if j >= i || i >= m {
            return Err(GraphError::InvalidOverride(format!(
                "override {i} -> {j} out of range (M = {m})"
            )));
        }
    }

    let speaker_of = |u: usize| -> usize {
        if u == m {
            inst.response.speaker
        } else {
            inst.utterances[u].speaker
        }
    };
    let effective_reply = |u: usize| -> Option<usize> {
        if u == m {
            inst.response.reply_to
        } else {
            overrides
                .get(&u)
                .copied()
                .or(inst.utterances[u].reply_to)
        }
    };

    // speaking structure, every utterance node including the response
    for u in 0..n_utt {
        let s = n_utt + speaker_of(u);
        g.set(s, u, EdgeType::Speak);
        g.set(u, s, EdgeType::SpokenBy);
    }

    // reply structure
    for u in 0..n_utt {
        if let Some(j) = effective_reply(u) {
            if j >= u.min(m) {
                return Err(GraphError::InvalidOverride(format!(
                    "instance {}: utterance {u} replies to {j}, which is not earlier",
                    inst.id
                )));
            }
            g.set(u, j, EdgeType::Reply);
            g.set(j, u, EdgeType::RepliedBy);
            let addressee = n_utt + speaker_of(j);
            // when the addressee is this utterance's own speaker (a
            // self-reply), the Speak/SpokenBy pair stays and the address
            // relation is dropped
            if g.get_raw(u, addressee) == NO_EDGE {
                g.set(u, addressee, EdgeType::Address);
                g.set(addressee, u, EdgeType::AddressedBy);
            } else {
                log::warn!(
                    "instance {}: utterance {u} addresses its own speaker; keeping speak/spoken-by",
                    inst.id
                );
            }
        }
    }

    // latent completion: utterance pairs, later -> earlier is latent-reply
    for later in 0..n_utt {
        for earlier in 0..later {
            if g.get_raw(later, earlier) == NO_EDGE {
                g.set(later, earlier, EdgeType::LatentReply);
            }
            if g.get_raw(earlier, later) == NO_EDGE {
                g.set(earlier, later, EdgeType::LatentRepliedBy);
            }
        }
    }
    // latent completion: utterance-interlocutor pairs
    for u in 0..n_utt {
        for i in 0..n_int {
            let s = n_utt + i;
            if g.get_raw(u, s) == NO_EDGE {
                g.set(u, s, EdgeType::LatentAddress);
            }
            if g.get_raw(s, u) == NO_EDGE {
                g.set(s, u, EdgeType::LatentAddressedBy);
            }
        }
    }

    Ok(g)
}

/// Builds the graph under the assumption that utterance `i` replies to `j`.
pub fn with_assumed_addressee(
    inst: &MpcInstance,
    i: usize,
    j: usize,
) -> Result<AssumedGraph, GraphError> {
    with_assumed_addressee_over(inst, i, j, &Overrides::new())
}

/// Like [`with_assumed_addressee`], with other unlabeled utterances held at
/// the supplied silver assignments.
pub fn with_assumed_addressee_over(
    inst: &MpcInstance,
    i: usize,
    j: usize,
    others: &Overrides,
) -> Result<AssumedGraph, GraphError> {
    if j >= i {
        return Err(GraphError::InvalidOverride(format!(
            "assumed addressee {j} must precede utterance {i}"
        )));
    }
    let mut overrides = others.clone();
    overrides.insert(i, j);
    let graph = build_graph(inst, &overrides)?;
    Ok(AssumedGraph {
        instance_id: inst.id.clone(),
        i,
        j,
        graph,
    })
}

/// Connected components of the context utterances under explicit reply links
/// only (the response node is not part of the context). Components are
/// returned sorted, each listing its utterance indices in ascending order.
pub fn fragments(inst: &MpcInstance) -> Vec<Vec<usize>> {
    let m = inst.m();
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = x;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for (i, u) in inst.utterances.iter().enumerate() {
        if let Some(j) = u.reply_to {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..m {
        let root = find(&mut parent, i);
        components.entry(root).or_default().push(i);
    }
    components.into_values().collect()
}
