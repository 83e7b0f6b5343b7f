//! Deterministic synchronous message passing.
//!
//! Each call to [`Network::run_round`] lets every node consume the inbox it
//! was handed at the previous barrier, update only its own state, and queue
//! messages for neighbors. Queued messages are validated against the topology
//! and delivered together at the end of the round, sorted by sender id.

use crate::error::ProtocolViolation;
use crate::graph::{Graph, Label};

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Probe,
    Ack,
    Deny,
    Label(Label),
    Vector(Vec<f64>),
}

/// Discriminant of [`Payload`], used to index traffic counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PayloadKind {
    Probe,
    Ack,
    Deny,
    Label,
    Vector,
}

impl PayloadKind {
    pub const ALL: [PayloadKind; 5] = [
        PayloadKind::Probe,
        PayloadKind::Ack,
        PayloadKind::Deny,
        PayloadKind::Label,
        PayloadKind::Vector,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

impl Payload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::Probe => PayloadKind::Probe,
            Payload::Ack => PayloadKind::Ack,
            Payload::Deny => PayloadKind::Deny,
            Payload::Label(_) => PayloadKind::Label,
            Payload::Vector(_) => PayloadKind::Vector,
        }
    }

    /// Number of real scalars carried. Control messages carry none.
    pub fn scalar_volume(&self) -> usize {
        match self {
            Payload::Vector(v) => v.len(),
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub from: usize,
    pub payload: Payload,
}

/// Per-kind counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KindCounts([usize; 5]);

impl KindCounts {
    pub fn get(&self, kind: PayloadKind) -> usize {
        self.0[kind.index()]
    }

    fn bump(&mut self, kind: PayloadKind, by: usize) {
        self.0[kind.index()] += by;
    }
}

/// Messages queued by one node during one round.
#[derive(Debug, Default)]
pub struct Outbox {
    sends: Vec<(usize, Payload)>,
    broadcasts: KindCounts,
}

impl Outbox {
    pub fn send(&mut self, to: usize, payload: Payload) {
        self.sends.push((to, payload));
    }

    /// One broadcast event: `payload` to every target. The event is counted
    /// even when `targets` is empty.
    pub fn broadcast<I>(&mut self, targets: I, payload: Payload)
    where
        I: IntoIterator<Item = usize>,
    {
        self.broadcasts.bump(payload.kind(), 1);
        for to in targets {
            self.sends.push((to, payload.clone()));
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeTraffic {
    pub messages_sent: usize,
    pub messages_received: usize,
    pub scalars_sent: usize,
    pub scalars_received: usize,
    pub sent_by_kind: KindCounts,
    pub received_by_kind: KindCounts,
    pub broadcasts_by_kind: KindCounts,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficReport {
    pub rounds: usize,
    pub per_node: Vec<NodeTraffic>,
    pub total_messages: usize,
    pub total_scalars: usize,
}

#[derive(Debug, Clone)]
pub struct Network {
    topology: Graph,
    inboxes: Vec<Vec<Message>>,
    round: usize,
    traffic: Vec<NodeTraffic>,
}

impl Network {
    pub fn new(topology: Graph) -> Self {
        let l = topology.node_count();
        Network {
            topology,
            inboxes: vec![Vec::new(); l],
            round: 0,
            traffic: vec![NodeTraffic::default(); l],
        }
    }

    pub fn topology(&self) -> &Graph {
        &self.topology
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn inbox(&self, node: usize) -> &[Message] {
        &self.inboxes[node]
    }

    /// Messages delivered at the last barrier and not yet consumed.
    pub fn pending_messages(&self) -> usize {
        self.inboxes.iter().map(Vec::len).sum()
    }

    /// Runs one synchronous round.
    ///
    /// `handler(node, state, inbox, outbox)` sees only its own state and inbox.
    /// If any node addresses a non-neighbor, nothing is delivered, the round
    /// counter does not advance, and the violation is returned.
    pub fn run_round<S, E, F>(&mut self, states: &mut [S], handler: F) -> Result<(), E>
    where
        F: Fn(usize, &mut S, &[Message], &mut Outbox) -> Result<(), E>,
        E: From<ProtocolViolation>,
    {
        let l = self.topology.node_count();
        assert_eq!(states.len(), l, "one state per node");
        let inboxes = std::mem::replace(&mut self.inboxes, vec![Vec::new(); l]);
        let mut outboxes: Vec<Outbox> = Vec::with_capacity(l);
        for (node, (state, inbox)) in states.iter_mut().zip(&inboxes).enumerate() {
            let mut outbox = Outbox::default();
            handler(node, state, inbox, &mut outbox)?;
            outboxes.push(outbox);
        }
        for (sender, outbox) in outboxes.iter().enumerate() {
            if let Some(&(recipient, _)) =
                outbox.sends.iter().find(|(to, _)| *to >= l || !self.topology.has_edge(sender, *to))
            {
                return Err(ProtocolViolation { sender, recipient, round: self.round }.into());
            }
        }
        // senders are visited in id order, so each inbox ends up sorted by sender
        for (sender, outbox) in outboxes.into_iter().enumerate() {
            for kind in PayloadKind::ALL {
                let n = outbox.broadcasts.get(kind);
                self.traffic[sender].broadcasts_by_kind.bump(kind, n);
            }
            for (to, payload) in outbox.sends {
                let kind = payload.kind();
                let volume = payload.scalar_volume();
                let tx = &mut self.traffic[sender];
                tx.messages_sent += 1;
                tx.scalars_sent += volume;
                tx.sent_by_kind.bump(kind, 1);
                let rx = &mut self.traffic[to];
                rx.messages_received += 1;
                rx.scalars_received += volume;
                rx.received_by_kind.bump(kind, 1);
                self.inboxes[to].push(Message { from: sender, payload });
            }
        }
        self.round += 1;
        Ok(())
    }

    /// Scalars delivered so far, summed over all recipients.
    pub fn total_scalars(&self) -> usize {
        self.traffic.iter().map(|t| t.scalars_received).sum()
    }

    pub fn traffic_report(&self) -> TrafficReport {
        TrafficReport {
            rounds: self.round,
            per_node: self.traffic.clone(),
            total_messages: self.traffic.iter().map(|t| t.messages_received).sum(),
            total_scalars: self.traffic.iter().map(|t| t.scalars_received).sum(),
        }
    }
}
