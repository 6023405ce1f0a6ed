//! Word/phone lattices with frame-aligned arcs.
//!
//! File grammar, utterances in lexicographic id order:
//!
//! ```text
//! LAT <id> <num_nodes> <num_arcs> <start_node> <end_node>
//! <from> <to> <symbol_id> <start_frame> <end_frame> <ac> <lm> [<posterior>]
//! ```
//!
//! `ac` and `lm` are natural-log scores. A lattice is valid when it is
//! acyclic, every node lies on a start→end path, every arc moves forward in
//! time, and all arcs entering or leaving a node agree on that node's frame,
//! so paths tile the utterance with abutting spans.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::featio::common::{fmt_real, write_atomic, Fields, LineReader};

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeArc {
    pub from: usize,
    pub to: usize,
    pub symbol_id: u32,
    pub start_frame: usize,
    pub end_frame: usize,
    /// Acoustic log-score of the span, natural log.
    pub acoustic_score: f64,
    /// Language-model log-score of the arc, natural log.
    pub lm_score: f64,
    /// Filled by posterior computation or lattice fusion; absent in raw
    /// decoder output.
    pub posterior: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    utterance_id: String,
    num_nodes: usize,
    start: usize,
    end: usize,
    arcs: Vec<LatticeArc>,
}

impl Lattice {
    pub fn new(
        utterance_id: impl Into<String>,
        num_nodes: usize,
        start: usize,
        end: usize,
        arcs: Vec<LatticeArc>,
    ) -> Result<Self> {
        let lat = Lattice {
            utterance_id: utterance_id.into(),
            num_nodes,
            start,
            end,
            arcs,
        };
        lat.validate()?;
        Ok(lat)
    }

    pub fn utterance_id(&self) -> &str {
        &self.utterance_id
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    pub fn arcs(&self) -> &[LatticeArc] {
        &self.arcs
    }

    /// Frame index one past the last frame any arc covers.
    pub fn num_frames(&self) -> usize {
        self.arcs.iter().map(|a| a.end_frame).max().unwrap_or(0)
    }

    /// Replaces every arc's posterior field.
    pub fn with_posteriors(&self, posteriors: &[f64]) -> Result<Lattice> {
        if posteriors.len() != self.arcs.len() {
            return Err(Error::Mismatch(format!(
                "lattice {}: {} posteriors for {} arcs",
                self.utterance_id,
                posteriors.len(),
                self.arcs.len()
            )));
        }
        let mut lat = self.clone();
        for (arc, &p) in lat.arcs.iter_mut().zip(posteriors) {
            arc.posterior = Some(p);
        }
        lat.validate()?;
        Ok(lat)
    }

    /// Nodes in a topological order of the arc relation.
    pub fn topo_order(&self) -> Result<Vec<usize>> {
        let mut in_degree = vec![0usize; self.num_nodes];
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); self.num_nodes];
        for arc in &self.arcs {
            in_degree[arc.to] += 1;
            out[arc.from].push(arc.to);
        }
        let mut queue: Vec<usize> = (0..self.num_nodes).filter(|&n| in_degree[n] == 0).collect();
        queue.sort_unstable();
        let mut order = Vec::with_capacity(self.num_nodes);
        let mut head = 0;
        while head < queue.len() {
            let n = queue[head];
            head += 1;
            order.push(n);
            for &m in &out[n] {
                in_degree[m] -= 1;
                if in_degree[m] == 0 {
                    queue.push(m);
                }
            }
        }
        if order.len() != self.num_nodes {
            return Err(self.err("cycle detected"));
        }
        Ok(order)
    }

    fn err(&self, message: impl std::fmt::Display) -> Error {
        Error::invalid("lattice", format!("utterance {}: {message}", self.utterance_id))
    }

    fn validate(&self) -> Result<()> {
        if self.num_nodes < 2 {
            return Err(self.err("needs at least a start and an end node"));
        }
        if self.start >= self.num_nodes || self.end >= self.num_nodes {
            return Err(self.err("start/end node out of range"));
        }
        if self.start == self.end {
            return Err(self.err("start and end node coincide"));
        }
        if self.arcs.is_empty() {
            return Err(self.err("no arcs"));
        }
        for (i, arc) in self.arcs.iter().enumerate() {
            if arc.from >= self.num_nodes || arc.to >= self.num_nodes {
                return Err(self.err(format!("arc {i} references a node out of range")));
            }
            if arc.end_frame <= arc.start_frame {
                return Err(self.err(format!(
                    "arc {i}: end_frame {} not after start_frame {}",
                    arc.end_frame, arc.start_frame
                )));
            }
            if !arc.acoustic_score.is_finite() || !arc.lm_score.is_finite() {
                return Err(self.err(format!("arc {i}: non-finite score")));
            }
            if let Some(p) = arc.posterior {
                if !p.is_finite() || p < 0.0 {
                    return Err(self.err(format!("arc {i}: bad posterior {p}")));
                }
            }
        }
        self.topo_order()?;

        // Every node must sit on some start→end path; this also rejects a
        // second entry or exit node.
        let forward = self.reachable_from(self.start, |arc| (arc.from, arc.to));
        let backward = self.reachable_from(self.end, |arc| (arc.to, arc.from));
        for node in 0..self.num_nodes {
            if !forward[node] || !backward[node] {
                return Err(self.err(format!("node {node} is not on any start-to-end path")));
            }
        }

        // Arcs meeting at a node must agree on its frame so that spans abut
        // along every path.
        let mut node_time: Vec<Option<usize>> = vec![None; self.num_nodes];
        let mut set_time = |node: usize, frame: usize, what: &str| -> Result<()> {
            match node_time[node] {
                None => {
                    node_time[node] = Some(frame);
                    Ok(())
                }
                Some(t) if t == frame => Ok(()),
                Some(t) => Err(Error::invalid(
                    "lattice",
                    format!(
                        "utterance {}: node {node} has conflicting frames {t} and {frame} ({what})",
                        self.utterance_id
                    ),
                )),
            }
        };
        for arc in &self.arcs {
            set_time(arc.from, arc.start_frame, "outgoing arcs must share the start frame")?;
            set_time(arc.to, arc.end_frame, "incoming arcs must share the end frame")?;
        }
        Ok(())
    }

    fn reachable_from(&self, origin: usize, dir: impl Fn(&LatticeArc) -> (usize, usize)) -> Vec<bool> {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.num_nodes];
        for arc in &self.arcs {
            let (from, to) = dir(arc);
            adj[from].push(to);
        }
        let mut seen = vec![false; self.num_nodes];
        let mut stack = vec![origin];
        seen[origin] = true;
        while let Some(n) = stack.pop() {
            for &m in &adj[n] {
                if !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        seen
    }
}

pub type LatticeSet = BTreeMap<String, Lattice>;

pub fn read_lattice_set(path: &Path) -> Result<LatticeSet> {
    let mut reader = LineReader::open(path)?;
    let mut set = LatticeSet::new();
    while let Some(line) = reader.next_line()? {
        let mut f = Fields::new(&reader, &line);
        f.expect_tag("LAT")?;
        let id = f.token("utterance id")?.to_string();
        let num_nodes = f.usize("num_nodes")?;
        let num_arcs = f.usize("num_arcs")?;
        let start = f.usize("start_node")?;
        let end = f.usize("end_node")?;
        f.expect_end()?;

        let mut arcs = Vec::with_capacity(num_arcs);
        for _ in 0..num_arcs {
            let row = reader.expect_line(&format!("arc of utterance {id}"))?;
            let mut f = Fields::new(&reader, &row);
            let arc = LatticeArc {
                from: f.usize("from node")?,
                to: f.usize("to node")?,
                symbol_id: f.u32("symbol_id")?,
                start_frame: f.usize("start_frame")?,
                end_frame: f.usize("end_frame")?,
                acoustic_score: f.finite_real("acoustic score")?,
                lm_score: f.finite_real("lm score")?,
                posterior: if f.remaining() > 0 {
                    Some(f.finite_real("posterior")?)
                } else {
                    None
                },
            };
            f.expect_end()?;
            arcs.push(arc);
        }
        let lat = Lattice::new(id.clone(), num_nodes, start, end, arcs)
            .map_err(|e| reader.err(e.to_string()))?;
        if set.insert(id.clone(), lat).is_some() {
            return Err(reader.err(format!("duplicate utterance {id}")));
        }
    }
    Ok(set)
}

pub fn write_lattice_set(set: &LatticeSet, path: &Path) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "# lattices; acoustic and lm scores: natural log")?;
        for (id, lat) in set {
            if id != lat.utterance_id() {
                return Err(Error::Mismatch(format!(
                    "lattice key {id:?} does not match utterance id {:?}",
                    lat.utterance_id()
                )));
            }
            writeln!(
                w,
                "LAT {} {} {} {} {}",
                id,
                lat.num_nodes(),
                lat.arcs().len(),
                lat.start(),
                lat.end()
            )?;
            for arc in lat.arcs() {
                let mut line = format!(
                    "{} {} {} {} {} {} {}",
                    arc.from,
                    arc.to,
                    arc.symbol_id,
                    arc.start_frame,
                    arc.end_frame,
                    fmt_real(arc.acoustic_score),
                    fmt_real(arc.lm_score)
                );
                if let Some(p) = arc.posterior {
                    line.push(' ');
                    line.push_str(&fmt_real(p));
                }
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    })
}
