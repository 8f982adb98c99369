//! Time-varying client graph as a schedule of binary adjacency matrices.
//!
//! `entry(i, i) = 1` marks client `i` as active during the slot; an inactive
//! client has an all-zero row and column.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<u8>>", into = "Vec<Vec<u8>>")]
pub struct AdjacencyMatrix {
    n: usize,
    entries: Vec<u8>,
}

impl TryFrom<Vec<Vec<u8>>> for AdjacencyMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<u8>>) -> Result<Self> {
        AdjacencyMatrix::from_rows(&rows)
    }
}

impl From<AdjacencyMatrix> for Vec<Vec<u8>> {
    fn from(m: AdjacencyMatrix) -> Self {
        m.entries.chunks(m.n.max(1)).map(<[u8]>::to_vec).take(m.n).collect()
    }
}

impl AdjacencyMatrix {
    /// Square matrix from rows; entries are not validated beyond shape.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("adjacency matrix needs at least one client"));
        }
        let mut entries = Vec::with_capacity(n * n);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n {
                return Err(Error::shape(format!("adjacency row {i} has {} entries, expected {n}", r.len())));
            }
            entries.extend_from_slice(r);
        }
        Ok(Self { n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> u8 {
        self.entries[i * self.n + j]
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.entry(i, i) == 1
    }

    pub fn active_count(&self) -> usize {
        (0..self.n).filter(|&i| self.is_active(i)).count()
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| j != i && self.entry(i, j) == 1).collect()
    }

    /// `1 + |neighbors|` for active clients, 0 otherwise.
    pub fn scale_k(&self, i: usize) -> usize {
        if self.is_active(i) {
            1 + self.neighbors(i).len()
        } else {
            0
        }
    }

    /// Every structural problem with this matrix.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                let v = self.entry(i, j);
                if v > 1 {
                    out.push(Violation::NonBinary { row: i, col: j, value: v });
                }
                if j > i && v != self.entry(j, i) {
                    out.push(Violation::Asymmetric { row: i, col: j });
                }
            }
            if self.entry(i, i) == 0 && (0..self.n).any(|j| self.entry(i, j) != 0 || self.entry(j, i) != 0) {
                out.push(Violation::InactiveWithLinks { client: i });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slot {
    pub label: String,
    pub rounds: u32,
    pub adjacency: AdjacencyMatrix,
    /// Whether the clients keep training during this slot.
    #[serde(default)]
    pub mode: SlotMode,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotMode {
    #[default]
    Train,
    /// Models are frozen; every round only evaluates.
    Inference,
}

/// Client names, either given explicitly or as a plain count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClientList {
    Count(usize),
    Names(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySchedule {
    pub clients: ClientList,
    pub slots: Vec<Slot>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoSlots,
    NoClients,
    ClientCountMismatch { slot: usize, expected: usize, found: usize },
    ZeroRounds { slot: usize },
    NonBinary { row: usize, col: usize, value: u8 },
    Asymmetric { row: usize, col: usize },
    InactiveWithLinks { client: usize },
    /// Matrix-level violation tagged with its slot.
    InSlot { slot: usize, violation: Box<Violation> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoSlots => write!(f, "schedule has no slots"),
            Violation::NoClients => write!(f, "schedule has no clients"),
            Violation::ClientCountMismatch { slot, expected, found } => {
                write!(f, "slot {slot}: adjacency is {found}x{found} but the schedule has {expected} clients")
            }
            Violation::ZeroRounds { slot } => write!(f, "slot {slot}: rounds must be >= 1"),
            Violation::NonBinary { row, col, value } => write!(f, "entry ({row},{col}) = {value} is not 0/1"),
            Violation::Asymmetric { row, col } => write!(f, "entries ({row},{col}) and ({col},{row}) differ"),
            Violation::InactiveWithLinks { client } => {
                write!(f, "client {client} is inactive (diagonal 0) but has non-zero links")
            }
            Violation::InSlot { slot, violation } => write!(f, "slot {slot}: {violation}"),
        }
    }
}

/// Per-client view of one slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClientQuery {
    pub active: bool,
    pub neighbors: Vec<usize>,
    pub scale_k: usize,
}

impl TopologySchedule {
    pub fn client_count(&self) -> usize {
        match &self.clients {
            ClientList::Count(n) => *n,
            ClientList::Names(names) => names.len(),
        }
    }

    pub fn client_name(&self, i: usize) -> String {
        match &self.clients {
            ClientList::Names(names) if i < names.len() => names[i].clone(),
            _ => i.to_string(),
        }
    }

    /// Parses and validates a JSON schedule file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schedule: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("schedule: {e}")))?;
        validate_schedule(&schedule).map_err(|v| {
            Error::Config(format!(
                "schedule: {}",
                v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
            ))
        })?;
        Ok(schedule)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }

    pub fn query(&self, client: usize, slot: usize) -> Result<ClientQuery> {
        query(self, client, slot)
    }

    /// Largest `K` any client reaches in any slot.
    pub fn max_scale(&self) -> usize {
        self.slots
            .iter()
            .flat_map(|s| (0..s.adjacency.n()).map(move |i| s.adjacency.scale_k(i)))
            .max()
            .unwrap_or(0)
    }

    pub fn training_rounds(&self) -> u32 {
        self.slots.iter().filter(|s| s.mode == SlotMode::Train).map(|s| s.rounds).sum()
    }

    /// Rescales the training slots' rounds so they sum to `total`
    /// (largest-remainder apportionment, each slot keeps at least one round).
    pub fn with_training_rounds(&self, total: u32) -> Result<Self> {
        let train: Vec<usize> =
            (0..self.slots.len()).filter(|&i| self.slots[i].mode == SlotMode::Train).collect();
        if train.is_empty() || total < train.len() as u32 {
            return Err(Error::Config(format!(
                "cannot spread {total} training rounds over {} training slots",
                train.len()
            )));
        }
        let current = self.training_rounds() as f64;
        let quotas: Vec<f64> =
            train.iter().map(|&i| self.slots[i].rounds as f64 / current * total as f64).collect();
        let mut rounds: Vec<u32> = quotas.iter().map(|q| (q.floor() as u32).max(1)).collect();
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())));
        let mut assigned: u32 = rounds.iter().sum();
        let mut it = order.iter().cycle();
        while assigned < total {
            let &j = it.next().expect("non-empty");
            rounds[j] += 1;
            assigned += 1;
        }
        while assigned > total {
            let j = (0..rounds.len()).max_by_key(|&j| rounds[j]).expect("non-empty");
            rounds[j] -= 1;
            assigned -= 1;
        }
        let mut out = self.clone();
        for (&i, r) in train.iter().zip(rounds) {
            out.slots[i].rounds = r;
        }
        Ok(out)
    }
}

/// Collects every violation across the schedule; never panics.
pub fn validate_schedule(schedule: &TopologySchedule) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let n = schedule.client_count();
    if n == 0 {
        out.push(Violation::NoClients);
    }
    if schedule.slots.is_empty() {
        out.push(Violation::NoSlots);
    }
    for (s, slot) in schedule.slots.iter().enumerate() {
        if slot.rounds == 0 {
            out.push(Violation::ZeroRounds { slot: s });
        }
        if slot.adjacency.n() != n {
            out.push(Violation::ClientCountMismatch { slot: s, expected: n, found: slot.adjacency.n() });
        }
        out.extend(
            slot.adjacency
                .violations()
                .into_iter()
                .map(|v| Violation::InSlot { slot: s, violation: Box::new(v) }),
        );
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

pub fn query(schedule: &TopologySchedule, client: usize, slot: usize) -> Result<ClientQuery> {
    let s = schedule
        .slots
        .get(slot)
        .ok_or_else(|| Error::invalid(format!("slot {slot} out of range ({} slots)", schedule.slots.len())))?;
    if client >= s.adjacency.n() {
        return Err(Error::invalid(format!("client {client} out of range ({} clients)", s.adjacency.n())));
    }
    let m = &s.adjacency;
    let active = m.is_active(client);
    let neighbors = if active { m.neighbors(client) } else { Vec::new() };
    let scale_k = if active { 1 + neighbors.len() } else { 0 };
    Ok(ClientQuery { active, neighbors, scale_k })
}

/// The five-client scenario: clients A..E, first slot fully populated,
/// second slot with client D departed.
pub mod scenario {
    use super::*;

    pub const NAMES: [&str; 5] = ["A", "B", "C", "D", "E"];

    pub fn ts1() -> AdjacencyMatrix {
        AdjacencyMatrix::from_rows(&[
            [1, 1, 1, 0, 0],
            [1, 1, 1, 1, 0],
            [1, 1, 1, 1, 1],
            [0, 1, 1, 1, 0],
            [0, 0, 1, 0, 1],
        ])
        .expect("5x5")
    }

    pub fn ts2() -> AdjacencyMatrix {
        AdjacencyMatrix::from_rows(&[
            [1, 1, 1, 0, 0],
            [1, 1, 1, 0, 0],
            [1, 1, 1, 0, 1],
            [0, 0, 0, 0, 0],
            [0, 0, 1, 0, 1],
        ])
        .expect("5x5")
    }

    fn names() -> ClientList {
        ClientList::Names(NAMES.iter().map(|s| s.to_string()).collect())
    }

    /// Only the first slot, held for `rounds` rounds.
    pub fn fixed(rounds: u32) -> TopologySchedule {
        TopologySchedule {
            clients: names(),
            slots: vec![Slot { label: "TS1".into(), rounds, adjacency: ts1(), mode: SlotMode::Train }],
        }
    }

    /// First slot trained for `train_rounds`, then the second slot.
    pub fn two_slot(train_rounds: u32, second_rounds: u32, second_mode: SlotMode) -> TopologySchedule {
        TopologySchedule {
            clients: names(),
            slots: vec![
                Slot { label: "TS1".into(), rounds: train_rounds, adjacency: ts1(), mode: SlotMode::Train },
                Slot { label: "TS2".into(), rounds: second_rounds, adjacency: ts2(), mode: second_mode },
            ],
        }
    }
}
