//! Two-step graph simplification run entirely through [`Network`] rounds:
//! a probe/ack spanning-tree protocol, then label flooding over the tree.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, Label, SimplestBipartiteGraph};
use crate::netsim::{Message, Network, Payload, TrafficReport};

/// How a sleeping node picks among several probers arriving in the same round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    /// Uniform choice from a per-node stream derived from the seed.
    Seeded(u64),
    /// Smallest sender id.
    LowestId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Sleeping,
    Activated,
}

#[derive(Debug, Clone)]
pub struct MstNodeState {
    pub status: Status,
    pub parent: Option<usize>,
    pub links: BTreeSet<usize>,
    neighbors: Vec<usize>,
    wants_probe: bool,
    rng: Option<ChaCha8Rng>,
}

impl MstNodeState {
    fn new(neighbors: Vec<usize>, tie_break: TieBreak, node: usize) -> Self {
        let rng = match tie_break {
            TieBreak::Seeded(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(node as u64);
                Some(rng)
            }
            TieBreak::LowestId => None,
        };
        MstNodeState {
            status: Status::Sleeping,
            parent: None,
            links: BTreeSet::new(),
            neighbors,
            wants_probe: false,
            rng,
        }
    }

    fn step(&mut self, inbox: &[Message], out: &mut crate::netsim::Outbox) {
        let probers: Vec<usize> = inbox
            .iter()
            .filter(|m| m.payload == Payload::Probe)
            .map(|m| m.from)
            .collect();
        match self.status {
            Status::Sleeping if probers.is_empty() => {}
            Status::Sleeping => {
                self.status = Status::Activated;
                let chosen = match self.rng.as_mut() {
                    Some(rng) => *probers.choose(rng).expect("nonempty"),
                    None => probers[0],
                };
                self.parent = Some(chosen);
                self.links.insert(chosen);
                out.send(chosen, Payload::Ack);
                for &p in probers.iter().filter(|&&p| p != chosen) {
                    out.send(p, Payload::Deny);
                }
                let targets: Vec<usize> =
                    self.neighbors.iter().copied().filter(|n| !probers.contains(n)).collect();
                out.broadcast(targets, Payload::Probe);
            }
            Status::Activated => {
                for msg in inbox {
                    match msg.payload {
                        Payload::Probe => out.send(msg.from, Payload::Deny),
                        Payload::Ack => {
                            self.links.insert(msg.from);
                        }
                        _ => {}
                    }
                }
                if self.wants_probe {
                    self.wants_probe = false;
                    out.broadcast(self.neighbors.clone(), Payload::Probe);
                }
            }
        }
    }
}

/// Spanning tree together with the traffic of the protocol that built it.
#[derive(Debug, Clone)]
pub struct MstOutcome {
    pub tree: Graph,
    pub states: Vec<MstNodeState>,
    pub traffic: TrafficReport,
}

/// Builds a spanning tree by probe/ack flooding from `root`.
pub fn build_mst(g: &Graph, root: usize, tie_break: TieBreak) -> Result<MstOutcome> {
    let l = g.node_count();
    if root >= l {
        return Err(Error::InvalidParameter(format!("root {root} out of range for {l} nodes")));
    }
    let mut states: Vec<MstNodeState> = (0..l)
        .map(|i| MstNodeState::new(g.neighbors(i).to_vec(), tie_break, i))
        .collect();
    states[root].status = Status::Activated;
    states[root].wants_probe = true;

    let mut net = Network::new(g.clone());
    loop {
        net.run_round(&mut states, |_, state, inbox, out| -> Result<()> {
            state.step(inbox, out);
            Ok(())
        })?;
        if net.pending_messages() == 0 {
            break;
        }
    }
    let unreached = states.iter().filter(|s| s.status == Status::Sleeping).count();
    if unreached > 0 {
        return Err(Error::Disconnected { unreached });
    }
    let mut tree = Graph::new(l)?;
    for (i, state) in states.iter().enumerate() {
        if let Some(p) = state.parent {
            tree.add_edge(i, p)?;
        }
    }
    Ok(MstOutcome { tree, states, traffic: net.traffic_report() })
}

#[derive(Debug, Clone)]
pub struct LabelNodeState {
    pub label: Option<Label>,
    pub labels_received: usize,
    neighbors: Vec<usize>,
    is_root: bool,
}

impl LabelNodeState {
    fn step(&mut self, inbox: &[Message], out: &mut crate::netsim::Outbox) {
        if self.is_root && self.label.is_none() {
            self.label = Some(Label::H);
            out.broadcast(self.neighbors.clone(), Payload::Label(Label::H));
            return;
        }
        let received: Vec<(usize, Label)> = inbox
            .iter()
            .filter_map(|m| match m.payload {
                Payload::Label(tag) => Some((m.from, tag)),
                _ => None,
            })
            .collect();
        self.labels_received += received.len();
        if self.label.is_some() || received.is_empty() {
            return;
        }
        let (from, tag) = received[0];
        let own = tag.opposite();
        self.label = Some(own);
        let targets: Vec<usize> = self.neighbors.iter().copied().filter(|&n| n != from).collect();
        out.broadcast(targets, Payload::Label(own));
    }
}

#[derive(Debug, Clone)]
pub struct BipartitionOutcome {
    pub sbg: SimplestBipartiteGraph,
    pub states: Vec<LabelNodeState>,
    pub traffic: TrafficReport,
}

/// Labels the tree by flooding from `root` (which takes `H`); each node takes
/// the opposite of the label it hears.
pub fn bipartition(tree: &Graph, root: usize) -> Result<BipartitionOutcome> {
    let l = tree.node_count();
    if root >= l {
        return Err(Error::InvalidParameter(format!("root {root} out of range for {l} nodes")));
    }
    let mut states: Vec<LabelNodeState> = (0..l)
        .map(|i| LabelNodeState {
            label: None,
            labels_received: 0,
            neighbors: tree.neighbors(i).to_vec(),
            is_root: i == root,
        })
        .collect();
    let mut net = Network::new(tree.clone());
    loop {
        net.run_round(&mut states, |_, state, inbox, out| -> Result<()> {
            state.step(inbox, out);
            Ok(())
        })?;
        if let Some((node, s)) = states.iter().enumerate().find(|(_, s)| s.labels_received > 1) {
            return Err(Error::MultipleLabels { node, count: s.labels_received });
        }
        if net.pending_messages() == 0 {
            break;
        }
    }
    let labels = states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.label.ok_or_else(|| {
                Error::InvalidBipartition(format!("node {i} never received a label"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sbg = SimplestBipartiteGraph::new(tree.clone(), labels)?;
    Ok(BipartitionOutcome { sbg, states, traffic: net.traffic_report() })
}

/// Spanning tree then labeling, both rooted at a node drawn from `seed`.
pub fn simplify(g: &Graph, seed: u64) -> Result<SimplestBipartiteGraph> {
    simplify_from(g, seeded_root(g.node_count(), seed), TieBreak::Seeded(seed))
}

/// Root that [`simplify`] picks for `l` nodes and `seed`.
pub fn seeded_root(l: usize, seed: u64) -> usize {
    ChaCha8Rng::seed_from_u64(seed).random_range(0..l.max(1))
}

pub fn simplify_from(g: &Graph, root: usize, tie_break: TieBreak) -> Result<SimplestBipartiteGraph> {
    let mst = build_mst(g, root, tie_break)?;
    Ok(bipartition(&mst.tree, root)?.sbg)
}
