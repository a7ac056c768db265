//! Weighted bipartite user-message retweet graph.
//!
//! Users sit on one side, messages on the other. An edge's weight counts the
//! retweet interactions between that user and message, plus one authorship
//! edge connecting each author to their own message. The built graph is
//! immutable and safe to share across threads.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::ingest::RetweetEvent;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("edge ({0}, {1}) violates bipartiteness or has zero weight")]
    InvalidEdge(NodeId, NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    User,
    Message,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    pub kind: NodeKind,
    pub id: String,
}

impl NodeId {
    pub fn user(id: impl Into<String>) -> Self {
        NodeId {
            kind: NodeKind::User,
            id: id.into(),
        }
    }

    pub fn message(id: impl Into<String>) -> Self {
        NodeId {
            kind: NodeKind::Message,
            id: id.into(),
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            NodeKind::User => write!(f, "user:{}", self.id),
            NodeKind::Message => write!(f, "message:{}", self.id),
        }
    }
}

/// Immutable weighted bipartite graph with interned node indices.
#[derive(Debug, Clone)]
pub struct BipartiteRetweetGraph {
    nodes: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    adjacency: Vec<Vec<(usize, u64)>>,
    weighted_degree: Vec<u64>,
    n_users: usize,
    n_messages: usize,
}

impl BipartiteRetweetGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn user_count(&self) -> usize {
        self.n_users
    }

    pub fn message_count(&self) -> usize {
        self.n_messages
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> &NodeId {
        &self.nodes[idx]
    }

    pub fn node_index(&self, node: &NodeId) -> Option<usize> {
        self.index.get(node).copied()
    }

    pub fn neighbors(&self, idx: usize) -> &[(usize, u64)] {
        &self.adjacency[idx]
    }

    pub fn weighted_degree(&self, idx: usize) -> u64 {
        self.weighted_degree[idx]
    }

    /// Every edge once, as (user, message, weight).
    pub fn edges(&self) -> impl Iterator<Item = (&NodeId, &NodeId, u64)> {
        self.nodes.iter().enumerate().flat_map(move |(u, node)| {
            let user_side = node.kind == NodeKind::User;
            self.adjacency[u]
                .iter()
                .filter(move |_| user_side)
                .map(move |&(v, w)| (&self.nodes[u], &self.nodes[v], w))
        })
    }

    fn sorted_edges(&self) -> Vec<(&NodeId, &NodeId, u64)> {
        let mut edges: Vec<_> = self.edges().collect();
        edges.sort();
        edges
    }

    /// Transition probabilities out of `node`, proportional to edge weights,
    /// sorted by neighbor id.
    pub fn transition_distribution(&self, node: &NodeId) -> Result<Vec<(NodeId, f64)>, GraphError> {
        let idx = self
            .node_index(node)
            .ok_or_else(|| GraphError::UnknownNode(node.clone()))?;
        let total = self.weighted_degree[idx] as f64;
        let mut out: Vec<(NodeId, f64)> = self.adjacency[idx]
            .iter()
            .map(|&(v, w)| (self.nodes[v].clone(), w as f64 / total))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }

    /// Edge list export, sorted for byte-stable output.
    pub fn to_edge_csv(&self) -> String {
        let mut csv = String::from("user_id,message_id,weight\n");
        for (user, message, weight) in self.sorted_edges() {
            csv.push_str(&format!("{},{},{}\n", user.id, message.id, weight));
        }
        csv
    }
}

/// Graphs are equal when they contain the same nodes and weighted edges,
/// regardless of construction order.
impl PartialEq for BipartiteRetweetGraph {
    fn eq(&self, other: &Self) -> bool {
        if self.node_count() != other.node_count() {
            return false;
        }
        let mut a: Vec<_> = self.nodes.clone();
        let mut b: Vec<_> = other.nodes.clone();
        a.sort();
        b.sort();
        a == b && self.sorted_edges() == other.sorted_edges()
    }
}

/// Build a graph directly from weighted user-message edges. Parallel edges
/// aggregate their weights.
pub fn from_weighted_edges<I>(edges: I) -> Result<BipartiteRetweetGraph, GraphError>
where
    I: IntoIterator<Item = (NodeId, NodeId, u64)>,
{
    let mut nodes: Vec<NodeId> = Vec::new();
    let mut index: HashMap<NodeId, usize> = HashMap::new();
    let mut weights: HashMap<(usize, usize), u64> = HashMap::new();
    for (user, message, weight) in edges {
        if user.kind != NodeKind::User || message.kind != NodeKind::Message || weight == 0 {
            return Err(GraphError::InvalidEdge(user, message));
        }
        let mut intern = |node: NodeId| -> usize {
            if let Some(&i) = index.get(&node) {
                return i;
            }
            let i = nodes.len();
            index.insert(node.clone(), i);
            nodes.push(node);
            i
        };
        let u = intern(user);
        let m = intern(message);
        *weights.entry((u, m)).or_insert(0) += weight;
    }
    Ok(assemble(nodes, index, weights))
}

fn assemble(
    nodes: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    weights: HashMap<(usize, usize), u64>,
) -> BipartiteRetweetGraph {
    let n = nodes.len();
    let mut adjacency: Vec<Vec<(usize, u64)>> = vec![Vec::new(); n];
    let mut sorted: Vec<((usize, usize), u64)> = weights.into_iter().collect();
    sorted.sort_unstable_by_key(|&(key, _)| key);
    for ((user, message), weight) in sorted {
        adjacency[user].push((message, weight));
        adjacency[message].push((user, weight));
    }
    let weighted_degree = adjacency
        .iter()
        .map(|nbrs| nbrs.iter().map(|&(_, w)| w).sum())
        .collect();
    let n_users = nodes.iter().filter(|n| n.kind == NodeKind::User).count();
    let n_messages = n - n_users;
    BipartiteRetweetGraph {
        nodes,
        index,
        adjacency,
        weighted_degree,
        n_users,
        n_messages,
    }
}

/// Build the bipartite graph from retweet events.
///
/// One user node per distinct retweeter and original author, one message node
/// per distinct original tweet. Each event adds 1 to its (retweeter, message)
/// edge; each message gets a weight-1 authorship edge on top of any retweet
/// count its author accumulated. An empty event list yields an empty graph.
pub fn build_bipartite(events: &[RetweetEvent]) -> BipartiteRetweetGraph {
    let mut nodes: Vec<NodeId> = Vec::new();
    let mut index: HashMap<NodeId, usize> = HashMap::new();
    let mut intern = |node: NodeId, nodes: &mut Vec<NodeId>| -> usize {
        if let Some(&i) = index.get(&node) {
            return i;
        }
        let i = nodes.len();
        index.insert(node.clone(), i);
        nodes.push(node);
        i
    };

    // (user index, message index) -> retweet count; authorship handled after.
    let mut retweet_counts: HashMap<(usize, usize), u64> = HashMap::new();
    let mut authorship: HashMap<usize, usize> = HashMap::new();

    for event in events {
        let retweeter = intern(NodeId::user(event.retweeter_id.clone()), &mut nodes);
        let author = intern(NodeId::user(event.original_user_id.clone()), &mut nodes);
        let message = intern(NodeId::message(event.original_tweet_id.clone()), &mut nodes);
        *retweet_counts.entry((retweeter, message)).or_insert(0) += 1;
        authorship.entry(message).or_insert(author);
    }

    let mut weights: HashMap<(usize, usize), u64> = retweet_counts;
    for (&message, &author) in &authorship {
        *weights.entry((author, message)).or_insert(0) += 1;
    }
    assemble(nodes, index, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::RetweetKind;

    pub(crate) fn event(retweeter: &str, author: &str, message: &str) -> RetweetEvent {
        RetweetEvent {
            retweeter_id: retweeter.to_string(),
            original_user_id: author.to_string(),
            original_tweet_id: message.to_string(),
            retweet_posted_at: 10,
            original_posted_at: 0,
            response_time: 10,
            kind: RetweetKind::Native,
        }
    }

    #[test]
    fn single_event_builds_three_nodes_and_two_edges() {
        let graph = build_bipartite(&[event("u", "v", "m")]);
        assert_eq!(graph.node_count(), 3);
        assert_eq!(graph.user_count(), 2);
        assert_eq!(graph.message_count(), 1);

        let mut edges: Vec<(String, String, u64)> = graph
            .edges()
            .map(|(a, b, w)| (a.id.clone(), b.id.clone(), w))
            .collect();
        edges.sort();
        assert_eq!(
            edges,
            vec![
                ("u".to_string(), "m".to_string(), 1),
                ("v".to_string(), "m".to_string(), 1)
            ]
        );
    }

    #[test]
    fn repeat_retweets_aggregate_weight() {
        let graph = build_bipartite(&[event("u", "v", "m"), event("u", "v", "m")]);
        let u = graph.node_index(&NodeId::user("u")).unwrap();
        assert_eq!(graph.weighted_degree(u), 2);
    }

    #[test]
    fn author_retweeting_own_message_stacks_on_authorship() {
        let graph = build_bipartite(&[event("v", "v", "m")]);
        let v = graph.node_index(&NodeId::user("v")).unwrap();
        assert_eq!(graph.weighted_degree(v), 2);
    }

    #[test]
    fn empty_event_list_is_a_valid_empty_graph() {
        let graph = build_bipartite(&[]);
        assert_eq!(graph.node_count(), 0);
    }

    #[test]
    fn transitions_normalize_edge_weights() {
        let events = vec![
            event("u", "v", "m1"),
            event("u", "v", "m2"),
            event("u", "v", "m2"),
            event("u", "v", "m2"),
        ];
        let graph = build_bipartite(&events);
        let dist = graph.transition_distribution(&NodeId::user("u")).unwrap();
        assert_eq!(dist.len(), 2);
        assert_eq!(dist[0], (NodeId::message("m1"), 0.25));
        assert_eq!(dist[1], (NodeId::message("m2"), 0.75));

        let single = graph.transition_distribution(&NodeId::message("m1")).unwrap();
        let total: f64 = single.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_node_is_an_error() {
        let graph = build_bipartite(&[event("u", "v", "m")]);
        assert_eq!(
            graph.transition_distribution(&NodeId::user("ghost")),
            Err(GraphError::UnknownNode(NodeId::user("ghost")))
        );
    }

    #[test]
    fn every_edge_is_user_to_message() {
        let events = vec![
            event("u1", "v", "m1"),
            event("u2", "v", "m1"),
            event("u1", "w", "m2"),
        ];
        let graph = build_bipartite(&events);
        for (a, b, _) in graph.edges() {
            assert_eq!(a.kind, NodeKind::User);
            assert_eq!(b.kind, NodeKind::Message);
        }
        // no isolated endpoints
        for idx in 0..graph.node_count() {
            assert!(graph.weighted_degree(idx) >= 1);
        }
    }

    #[test]
    fn construction_is_order_independent() {
        let events = vec![
            event("u1", "v", "m1"),
            event("u2", "v", "m1"),
            event("u1", "w", "m2"),
            event("u1", "v", "m1"),
        ];
        let mut reversed = events.clone();
        reversed.reverse();
        assert_eq!(build_bipartite(&events), build_bipartite(&reversed));
    }
}
