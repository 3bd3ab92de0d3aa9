//! Fixed-topology multi-hop sensor network.
//!
//! Nodes never move once placed. Two nodes hear each other when their
//! distance is within the smaller of their two radio ranges, which keeps
//! every link symmetric. The base station is a vertex of the same graph,
//! linked to nodes by the same rule using its own range.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use rand::{Rng, RngCore};
use thiserror::Error;

use crate::error::ErrorKind;
use crate::protocol::Reading;

pub const DEFAULT_READING_PACKET_SIZE: u64 = 32;
pub const DEFAULT_QUERY_PACKET_SIZE: u64 = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("unknown node {0}")]
    UnknownNode(u32),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl NetError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            NetError::UnknownNode(_) => ErrorKind::UnknownNode,
            NetError::InvalidTopology(_) | NetError::Parse { .. } => ErrorKind::InvalidInput,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorNode {
    pub id: u32,
    pub position: Point,
    pub radio_range: f64,
    pub reading: i64,
}

fn in_range(a: Point, range_a: f64, b: Point, range_b: f64) -> bool {
    let reach = range_a.min(range_b);
    a.distance_sq(b) <= reach * reach
}

/// Immutable network layout. Adjacency is derived from positions at
/// construction and never stored independently of them.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: Vec<SensorNode>,
    base_pos: Point,
    base_range: f64,
    index: BTreeMap<u32, usize>,
    adjacency: Vec<Vec<usize>>,
    base_links: Vec<usize>,
}

impl Topology {
    pub fn new(
        mut nodes: Vec<SensorNode>,
        base_pos: Point,
        base_range: f64,
    ) -> Result<Self, NetError> {
        nodes.sort_by_key(|n| n.id);
        let finite = |v: f64| v.is_finite();
        if !(finite(base_pos.x) && finite(base_pos.y) && finite(base_range) && base_range >= 0.0) {
            return Err(NetError::InvalidTopology(
                "base position/range must be finite, range >= 0".into(),
            ));
        }
        let mut index = BTreeMap::new();
        for (i, node) in nodes.iter().enumerate() {
            if !(finite(node.position.x) && finite(node.position.y) && finite(node.radio_range))
                || node.radio_range < 0.0
            {
                return Err(NetError::InvalidTopology(format!(
                    "node {} has a non-finite or negative field",
                    node.id
                )));
            }
            if index.insert(node.id, i).is_some() {
                return Err(NetError::InvalidTopology(format!(
                    "duplicate node id {}",
                    node.id
                )));
            }
        }
        let adjacency = grid_adjacency(&nodes);
        let base_links = nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| in_range(base_pos, base_range, n.position, n.radio_range))
            .map(|(i, _)| i)
            .collect();
        Ok(Topology {
            nodes,
            base_pos,
            base_range,
            index,
            adjacency,
            base_links,
        })
    }

    /// Nodes sorted by id.
    pub fn nodes(&self) -> &[SensorNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn base_pos(&self) -> Point {
        self.base_pos
    }

    pub fn base_range(&self) -> f64 {
        self.base_range
    }

    pub fn node(&self, id: u32) -> Option<&SensorNode> {
        self.index.get(&id).map(|&i| &self.nodes[i])
    }

    /// Ids of nodes one hop from the base station.
    pub fn base_neighbors(&self) -> Vec<u32> {
        self.base_links.iter().map(|&i| self.nodes[i].id).collect()
    }

    fn neighbor_ids(&self, i: usize) -> impl Iterator<Item = u32> + '_ {
        self.adjacency[i].iter().map(move |&j| self.nodes[j].id)
    }

    /// Text form: a `base x y range` line, then `id x y range reading` per
    /// node. Floats are written in shortest round-trip form, so
    /// [`Topology::from_text`] reproduces the topology exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# kerbwsn topology v1\n");
        writeln!(
            out,
            "base {} {} {}",
            self.base_pos.x, self.base_pos.y, self.base_range
        )
        .unwrap();
        for n in &self.nodes {
            writeln!(
                out,
                "{} {} {} {} {}",
                n.id, n.position.x, n.position.y, n.radio_range, n.reading
            )
            .unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, NetError> {
        fn num<T: std::str::FromStr>(
            field: Option<&str>,
            line: usize,
            what: &str,
        ) -> Result<T, NetError> {
            field
                .ok_or_else(|| NetError::Parse {
                    line,
                    msg: format!("missing {what}"),
                })?
                .parse()
                .map_err(|_| NetError::Parse {
                    line,
                    msg: format!("bad {what}"),
                })
        }
        let mut base = None;
        let mut nodes = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut fields = content.split_whitespace();
            let first = fields.next().unwrap();
            if first == "base" {
                let x = num(fields.next(), line, "x")?;
                let y = num(fields.next(), line, "y")?;
                let range = num(fields.next(), line, "range")?;
                base = Some((Point { x, y }, range));
            } else {
                let id = num(Some(first), line, "node id")?;
                let x = num(fields.next(), line, "x")?;
                let y = num(fields.next(), line, "y")?;
                let radio_range = num(fields.next(), line, "range")?;
                // The reading column is optional for hand-written fixtures.
                let reading = match fields.next() {
                    Some(r) => num(Some(r), line, "reading")?,
                    None => 0,
                };
                nodes.push(SensorNode {
                    id,
                    position: Point { x, y },
                    radio_range,
                    reading,
                });
            }
            if fields.next().is_some() {
                return Err(NetError::Parse {
                    line,
                    msg: "too many fields".into(),
                });
            }
        }
        let (base_pos, base_range) = base.ok_or(NetError::Parse {
            line: 0,
            msg: "missing base line".into(),
        })?;
        Topology::new(nodes, base_pos, base_range)
    }
}

/// Neighbor lists via a uniform grid with cell side equal to the largest
/// radio range, so only the 3x3 block around a node needs checking.
fn grid_adjacency(nodes: &[SensorNode]) -> Vec<Vec<usize>> {
    let max_range = nodes.iter().map(|n| n.radio_range).fold(0.0_f64, f64::max);
    let cell = if max_range > 0.0 { max_range } else { 1.0 };
    let cell_of = |p: Point| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);

    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, n) in nodes.iter().enumerate() {
        grid.entry(cell_of(n.position)).or_default().push(i);
    }
    let mut adjacency = vec![Vec::new(); nodes.len()];
    for (i, n) in nodes.iter().enumerate() {
        let (cx, cy) = cell_of(n.position);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = grid.get(&(cx + dx, cy + dy)) else {
                    continue;
                };
                for &j in bucket {
                    if j != i
                        && in_range(
                            n.position,
                            n.radio_range,
                            nodes[j].position,
                            nodes[j].radio_range,
                        )
                    {
                        adjacency[i].push(j);
                    }
                }
            }
        }
        // indices follow id order, so this orders neighbors by id
        adjacency[i].sort_unstable();
    }
    adjacency
}

/// Places `n_nodes` uniformly in an `area` x `area` square with the base
/// station at the center. Every node and the base get radio range `range`.
pub fn build_topology<R: RngCore + ?Sized>(
    n_nodes: u32,
    area: f64,
    range: f64,
    rng: &mut R,
) -> Topology {
    let nodes = (0..n_nodes)
        .map(|id| {
            let x = rng.random::<f64>() * area;
            let y = rng.random::<f64>() * area;
            SensorNode {
                id,
                position: Point { x, y },
                radio_range: range,
                // milli-degrees Celsius
                reading: rng.random_range(15_000..=35_000),
            }
        })
        .collect();
    let center = Point {
        x: area / 2.0,
        y: area / 2.0,
    };
    Topology::new(nodes, center, range).expect("generated topology is well formed")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollectionRound {
    /// Readings that reached the base, by node id.
    pub delivered: Vec<Reading>,
    pub hop_counts: BTreeMap<u32, u32>,
    /// Next hop toward the base; `None` means the base itself.
    pub next_hop: BTreeMap<u32, Option<u32>>,
    pub disconnected: Vec<u32>,
    pub total_bytes: u64,
}

/// Many-to-one traffic: every node reachable from the base sends its reading
/// along a shortest hop path, one packet per hop.
///
/// Paths are fixed by a layered BFS from the base. Within a layer, frontier
/// nodes are expanded in id order, so each node's next hop is the
/// lowest-id neighbor in the previous layer.
pub fn many_to_one_round(topo: &Topology, reading_packet_size: u64) -> CollectionRound {
    let n = topo.nodes.len();
    let mut hops: Vec<Option<u32>> = vec![None; n];
    let mut next_hop = BTreeMap::new();
    let mut frontier: Vec<usize> = topo.base_links.clone();
    for &i in &frontier {
        hops[i] = Some(1);
        next_hop.insert(topo.nodes[i].id, None);
    }
    let mut depth = 1;
    while !frontier.is_empty() {
        depth += 1;
        let mut next = Vec::new();
        for &i in &frontier {
            for &j in &topo.adjacency[i] {
                if hops[j].is_none() {
                    hops[j] = Some(depth);
                    next_hop.insert(topo.nodes[j].id, Some(topo.nodes[i].id));
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        frontier = next;
    }

    let mut round = CollectionRound {
        delivered: Vec::new(),
        hop_counts: BTreeMap::new(),
        next_hop,
        disconnected: Vec::new(),
        total_bytes: 0,
    };
    for (node, hop) in topo.nodes.iter().zip(&hops) {
        match hop {
            Some(h) => {
                round.delivered.push(Reading {
                    node: node.id,
                    value: node.reading,
                });
                round.hop_counts.insert(node.id, *h);
                round.total_bytes += u64::from(*h) * reading_packet_size;
            }
            None => round.disconnected.push(node.id),
        }
    }
    round
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FloodResult {
    pub reached: BTreeSet<u32>,
    /// Forwarding transmissions by sensor nodes (the base's own broadcast
    /// is not counted).
    pub retransmissions: u64,
    /// Bytes on air, including the base's initial broadcast.
    pub total_bytes: u64,
}

/// One-to-many traffic: the base broadcasts a query and every node forwards
/// it exactly once, on first receipt.
pub fn one_to_many_flood(topo: &Topology, query_packet_size: u64) -> FloodResult {
    enum Sender {
        Base,
        Node(usize),
    }
    let mut received = vec![false; topo.nodes.len()];
    let mut air: VecDeque<Sender> = VecDeque::from([Sender::Base]);
    let mut transmissions = 0u64;
    let mut retransmissions = 0u64;
    while let Some(sender) = air.pop_front() {
        transmissions += 1;
        let hearers: &[usize] = match sender {
            Sender::Base => &topo.base_links,
            Sender::Node(i) => {
                retransmissions += 1;
                &topo.adjacency[i]
            }
        };
        for &j in hearers {
            if !received[j] {
                received[j] = true;
                air.push_back(Sender::Node(j));
            }
        }
    }
    let reached = topo
        .nodes
        .iter()
        .zip(&received)
        .filter(|(_, r)| **r)
        .map(|(n, _)| n.id)
        .collect();
    FloodResult {
        reached,
        retransmissions,
        total_bytes: transmissions * query_packet_size,
    }
}

/// Local traffic: the set of sensor nodes that hear a broadcast from
/// `node_id`. The base station is not included.
pub fn local_broadcast(topo: &Topology, node_id: u32) -> Result<BTreeSet<u32>, NetError> {
    let &i = topo
        .index
        .get(&node_id)
        .ok_or(NetError::UnknownNode(node_id))?;
    Ok(topo.neighbor_ids(i).collect())
}
