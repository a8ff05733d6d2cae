//! Simple graphs with node attributes and O(1) dyad toggles.
//!
//! Adjacency is held twice: per-node sorted neighbor lists (for shared-partner
//! intersections) and a dense slot table mapping each ordered pair to its
//! position in a flat edge list (for O(1) membership tests and uniform edge
//! selection).

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};

/// A pair of distinct nodes. Undirected graphs store dyads with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Dyad {
    pub i: usize,
    pub j: usize,
}

impl Dyad {
    pub fn new(i: usize, j: usize) -> Self {
        Dyad { i, j }
    }

    /// Canonical undirected form with the smaller index first.
    pub fn undirected(i: usize, j: usize) -> Self {
        if i <= j {
            Dyad { i, j }
        } else {
            Dyad { i: j, j: i }
        }
    }
}

impl fmt::Display for Dyad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.i, self.j)
    }
}

/// One named per-node column.
#[derive(Debug, Clone, PartialEq)]
pub enum AttrColumn {
    Categorical(Vec<String>),
    Numeric(Vec<f64>),
}

impl AttrColumn {
    pub fn len(&self) -> usize {
        match self {
            AttrColumn::Categorical(v) => v.len(),
            AttrColumn::Numeric(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dense equality-class codes: two nodes share a code iff their values are
    /// exactly equal.
    pub fn codes(&self) -> Vec<u32> {
        match self {
            AttrColumn::Categorical(v) => {
                let mut seen: BTreeMap<&str, u32> = BTreeMap::new();
                v.iter()
                    .map(|s| {
                        let next = seen.len() as u32;
                        *seen.entry(s.as_str()).or_insert(next)
                    })
                    .collect()
            }
            AttrColumn::Numeric(v) => {
                let mut seen: BTreeMap<u64, u32> = BTreeMap::new();
                v.iter()
                    .map(|x| {
                        // +0.0 and -0.0 compare equal
                        let key = if *x == 0.0 { 0 } else { x.to_bits() };
                        let next = seen.len() as u32;
                        *seen.entry(key).or_insert(next)
                    })
                    .collect()
            }
        }
    }
}

/// Typed node attribute columns keyed by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeAttributes {
    n: usize,
    columns: BTreeMap<String, AttrColumn>,
}

impl NodeAttributes {
    pub fn new(n: usize) -> Self {
        NodeAttributes {
            n,
            columns: BTreeMap::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn insert(&mut self, name: impl Into<String>, column: AttrColumn) -> Result<()> {
        if column.len() != self.n {
            return Err(Error::InvalidGraph(format!(
                "attribute column has {} values for {} nodes",
                column.len(),
                self.n
            )));
        }
        self.columns.insert(name.into(), column);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&AttrColumn> {
        self.columns.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    /// Parse a CSV attribute table: a header row of column names followed by
    /// one row per node in index order. A column whose every value parses as
    /// a number is numeric; otherwise it is categorical.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if headers.is_empty() || headers.iter().any(String::is_empty) {
            return Err(Error::InputFormat {
                line: 1,
                msg: "attribute header must name every column".into(),
            });
        }
        let mut raw: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(Error::InputFormat {
                    line: row + 2,
                    msg: format!("expected {} fields, found {}", headers.len(), record.len()),
                });
            }
            for (col, field) in record.iter().enumerate() {
                raw[col].push(field.to_owned());
            }
        }
        let n = raw.first().map_or(0, Vec::len);
        let mut attrs = NodeAttributes::new(n);
        for (name, values) in headers.into_iter().zip(raw) {
            let numeric: Option<Vec<f64>> =
                values.iter().map(|v| v.parse::<f64>().ok()).collect();
            let column = match numeric {
                Some(v) if !v.is_empty() => AttrColumn::Numeric(v),
                _ => AttrColumn::Categorical(values),
            };
            attrs.insert(name, column)?;
        }
        Ok(attrs)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }
}

/// Simple graph on `n` nodes: no loops, no multi-edges.
#[derive(Clone)]
pub struct Graph {
    n: usize,
    directed: bool,
    // sorted out-neighbors (all neighbors when undirected)
    out_adj: Vec<Vec<u32>>,
    // sorted in-neighbors; empty when undirected
    in_adj: Vec<Vec<u32>>,
    // slot[i * n + j] = 1 + index into `edges`, 0 when absent
    slot: Vec<u32>,
    edges: Vec<(u32, u32)>,
    attributes: NodeAttributes,
}

impl Graph {
    pub fn empty(n: usize, directed: bool) -> Self {
        Graph {
            n,
            directed,
            out_adj: vec![Vec::new(); n],
            in_adj: if directed { vec![Vec::new(); n] } else { Vec::new() },
            slot: vec![0; n * n],
            edges: Vec::new(),
            attributes: NodeAttributes::new(n),
        }
    }

    /// Build a graph from 0-based dyads, rejecting loops, out-of-range
    /// endpoints and duplicates (after symmetrization when undirected).
    pub fn from_edge_list(
        n: usize,
        directed: bool,
        edges: &[Dyad],
        attributes: Option<NodeAttributes>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph must have at least one node".into()));
        }
        let mut g = Graph::empty(n, directed);
        if let Some(attrs) = attributes {
            if attrs.node_count() != n && !attrs.columns.is_empty() {
                return Err(Error::InvalidGraph(format!(
                    "attribute table has {} rows but graph has {} nodes",
                    attrs.node_count(),
                    n
                )));
            }
            g.attributes = NodeAttributes {
                n,
                columns: attrs.columns,
            };
        }
        for (k, d) in edges.iter().enumerate() {
            if d.i >= n || d.j >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge {} {} has an endpoint outside [0, {})",
                    k, d, n
                )));
            }
            if d.i == d.j {
                return Err(Error::InvalidGraph(format!("edge {} {} is a loop", k, d)));
            }
            let d = g.canonical(d.i, d.j);
            if g.has_edge(d.i, d.j) {
                return Err(Error::InvalidGraph(format!("edge {} {} is a duplicate", k, d)));
            }
            g.insert_edge(d.i, d.j);
        }
        Ok(g)
    }

    /// Read an edge-list file: one edge per line, two whitespace-separated
    /// 1-based node indices, `#` comment lines ignored.
    ///
    /// The node count is `n` when given, else the attribute row count, else
    /// the largest index seen.
    pub fn read_edge_list<R: BufRead>(
        reader: R,
        n: Option<usize>,
        directed: bool,
        attributes: Option<NodeAttributes>,
    ) -> Result<Self> {
        let mut dyads = Vec::new();
        let mut max_index = 0usize;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let mut endpoint = || -> Result<usize> {
                let tok = fields.next().ok_or_else(|| Error::InputFormat {
                    line: lineno + 1,
                    msg: "expected two node indices".into(),
                })?;
                let v: usize = tok.parse().map_err(|_| Error::InputFormat {
                    line: lineno + 1,
                    msg: format!("`{}` is not a node index", tok),
                })?;
                if v == 0 {
                    return Err(Error::InputFormat {
                        line: lineno + 1,
                        msg: "node indices are 1-based".into(),
                    });
                }
                Ok(v)
            };
            let a = endpoint()?;
            let b = endpoint()?;
            if fields.next().is_some() {
                return Err(Error::InputFormat {
                    line: lineno + 1,
                    msg: "expected exactly two fields".into(),
                });
            }
            max_index = max_index.max(a).max(b);
            dyads.push((lineno + 1, Dyad::new(a - 1, b - 1)));
        }
        let n = match (n, attributes.as_ref()) {
            (Some(n), _) => n,
            (None, Some(a)) if a.node_count() > 0 => a.node_count(),
            _ => max_index,
        };
        // report the offending line rather than the edge ordinal
        let mut g = Graph::from_edge_list(n, directed, &[], attributes)?;
        for (line, d) in dyads {
            if d.i >= n || d.j >= n {
                return Err(Error::InputFormat {
                    line,
                    msg: format!("node index {} exceeds node count {}", d.i.max(d.j) + 1, n),
                });
            }
            if d.i == d.j {
                return Err(Error::InputFormat {
                    line,
                    msg: "loops are not allowed".into(),
                });
            }
            let c = g.canonical(d.i, d.j);
            if g.has_edge(c.i, c.j) {
                return Err(Error::InputFormat {
                    line,
                    msg: format!("duplicate edge {} {}", d.i + 1, d.j + 1),
                });
            }
            g.insert_edge(c.i, c.j);
        }
        Ok(g)
    }

    pub fn read_edge_file(
        path: impl AsRef<Path>,
        n: Option<usize>,
        directed: bool,
        attributes: Option<NodeAttributes>,
    ) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_edge_list(std::io::BufReader::new(file), n, directed, attributes)
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_directed(&self) -> bool {
        self.directed
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Number of dyads: n(n-1)/2 undirected, n(n-1) directed.
    #[inline]
    pub fn dyad_count(&self) -> usize {
        let ordered = self.n * self.n.saturating_sub(1);
        if self.directed {
            ordered
        } else {
            ordered / 2
        }
    }

    pub fn attributes(&self) -> &NodeAttributes {
        &self.attributes
    }

    pub fn set_attributes(&mut self, attributes: NodeAttributes) -> Result<()> {
        if attributes.node_count() != self.n {
            return Err(Error::InvalidGraph(format!(
                "attribute table has {} rows but graph has {} nodes",
                attributes.node_count(),
                self.n
            )));
        }
        self.attributes = attributes;
        Ok(())
    }

    #[inline]
    pub fn canonical(&self, i: usize, j: usize) -> Dyad {
        if self.directed {
            Dyad::new(i, j)
        } else {
            Dyad::undirected(i, j)
        }
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.slot[i * self.n + j] != 0
    }

    /// Neighbors of `i` (out-neighbors when directed), sorted ascending.
    #[inline]
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.out_adj[i]
    }

    pub fn in_neighbors(&self, i: usize) -> &[u32] {
        if self.directed {
            &self.in_adj[i]
        } else {
            &self.out_adj[i]
        }
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.out_adj[i].len()
    }

    /// The `k`-th edge of the internal edge list. The order changes under
    /// toggles; use only for uniform selection.
    #[inline]
    pub fn edge_at(&self, k: usize) -> Dyad {
        let (i, j) = self.edges[k];
        Dyad::new(i as usize, j as usize)
    }

    pub fn edges(&self) -> impl Iterator<Item = Dyad> + '_ {
        self.edges
            .iter()
            .map(|&(i, j)| Dyad::new(i as usize, j as usize))
    }

    /// Edges in sorted order, independent of toggle history.
    pub fn sorted_edges(&self) -> Vec<Dyad> {
        let mut e: Vec<Dyad> = self.edges().collect();
        e.sort_unstable();
        e
    }

    /// Flip the presence of dyad `d`; returns the new state (true = edge).
    pub fn toggle(&mut self, d: Dyad) -> bool {
        assert!(d.i != d.j && d.i < self.n && d.j < self.n, "invalid dyad {}", d);
        let d = self.canonical(d.i, d.j);
        if self.has_edge(d.i, d.j) {
            self.remove_edge(d.i, d.j);
            false
        } else {
            self.insert_edge(d.i, d.j);
            true
        }
    }

    /// |N(i) ∩ N(j)|, the number of shared partners of the pair. Uses
    /// out-neighborhoods for directed graphs.
    pub fn shared_partner_count(&self, i: usize, j: usize) -> usize {
        let (a, b) = if self.out_adj[i].len() <= self.out_adj[j].len() {
            (i, j)
        } else {
            (j, i)
        };
        let row = b * self.n;
        self.out_adj[a]
            .iter()
            .filter(|&&k| self.slot[row + k as usize] != 0)
            .count()
    }

    fn insert_edge(&mut self, i: usize, j: usize) {
        self.edges.push((i as u32, j as u32));
        let id = self.edges.len() as u32;
        self.slot[i * self.n + j] = id;
        insert_sorted(&mut self.out_adj[i], j as u32);
        if self.directed {
            insert_sorted(&mut self.in_adj[j], i as u32);
        } else {
            self.slot[j * self.n + i] = id;
            insert_sorted(&mut self.out_adj[j], i as u32);
        }
    }

    fn remove_edge(&mut self, i: usize, j: usize) {
        let pos = (self.slot[i * self.n + j] - 1) as usize;
        self.edges.swap_remove(pos);
        if pos < self.edges.len() {
            let (a, b) = self.edges[pos];
            let (a, b) = (a as usize, b as usize);
            self.slot[a * self.n + b] = pos as u32 + 1;
            if !self.directed {
                self.slot[b * self.n + a] = pos as u32 + 1;
            }
        }
        self.slot[i * self.n + j] = 0;
        remove_sorted(&mut self.out_adj[i], j as u32);
        if self.directed {
            remove_sorted(&mut self.in_adj[j], i as u32);
        } else {
            self.slot[j * self.n + i] = 0;
            remove_sorted(&mut self.out_adj[j], i as u32);
        }
    }
}

fn insert_sorted(v: &mut Vec<u32>, x: u32) {
    if let Err(pos) = v.binary_search(&x) {
        v.insert(pos, x);
    }
}

fn remove_sorted(v: &mut Vec<u32>, x: u32) {
    if let Ok(pos) = v.binary_search(&x) {
        v.remove(pos);
    }
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.directed == other.directed
            && self.out_adj == other.out_adj
            && self.attributes == other.attributes
    }
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("n", &self.n)
            .field("directed", &self.directed)
            .field("edge_count", &self.edges.len())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete(n: usize) -> Graph {
        let mut e = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                e.push(Dyad::new(i, j));
            }
        }
        Graph::from_edge_list(n, false, &e, None).unwrap()
    }

    #[test]
    fn empty_graph_has_no_edges() {
        let g = Graph::from_edge_list(3, false, &[], None).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.dyad_count(), 3);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(Graph::from_edge_list(3, false, &[Dyad::new(0, 3)], None).is_err());
        assert!(Graph::from_edge_list(3, false, &[Dyad::new(1, 1)], None).is_err());
        let dup = [Dyad::new(0, 1), Dyad::new(1, 0)];
        assert!(Graph::from_edge_list(3, false, &dup, None).is_err());
        // the same pair in both directions is two distinct arcs when directed
        assert!(Graph::from_edge_list(3, true, &dup, None).is_ok());
    }

    #[test]
    fn toggle_updates_count_and_is_involution() {
        let mut g = Graph::empty(3, false);
        assert!(g.toggle(Dyad::new(0, 1)));
        assert_eq!(g.edge_count(), 1);
        assert!(g.has_edge(1, 0));
        let before = g.clone();
        g.toggle(Dyad::new(2, 1));
        g.toggle(Dyad::new(1, 2));
        assert_eq!(g, before);
    }

    #[test]
    fn shared_partners_small_graphs() {
        let k3 = complete(3);
        assert_eq!(k3.shared_partner_count(0, 1), 1);
        let k4 = complete(4);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(k4.shared_partner_count(i, j), 2);
                }
            }
        }
        assert_eq!(Graph::empty(5, false).shared_partner_count(0, 4), 0);
    }

    #[test]
    fn edge_file_parsing() {
        let text = "# comment\n1 2\n2 3\n\n3 1\n";
        let g = Graph::read_edge_list(text.as_bytes(), None, false, None).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 3);
        let err = Graph::read_edge_list("1 2\n2 1\n".as_bytes(), None, false, None).unwrap_err();
        assert!(matches!(err, Error::InputFormat { line: 2, .. }));
        let err = Graph::read_edge_list("1 x\n".as_bytes(), None, false, None).unwrap_err();
        assert!(matches!(err, Error::InputFormat { line: 1, .. }));
        let err = Graph::read_edge_list("1 5\n".as_bytes(), Some(4), false, None).unwrap_err();
        assert!(matches!(err, Error::InputFormat { line: 1, .. }));
    }

    #[test]
    fn attribute_columns_are_typed() {
        let csv = "grade,sex\n7,F\n8,M\n7,M\n";
        let a = NodeAttributes::from_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(a.node_count(), 3);
        assert!(matches!(a.get("grade"), Some(AttrColumn::Numeric(_))));
        assert!(matches!(a.get("sex"), Some(AttrColumn::Categorical(_))));
        assert_eq!(a.get("grade").unwrap().codes(), vec![0, 1, 0]);
        assert_eq!(a.get("sex").unwrap().codes(), vec![0, 1, 1]);
    }

    #[test]
    fn removal_keeps_slots_consistent() {
        let mut g = complete(5);
        g.toggle(Dyad::new(0, 1));
        g.toggle(Dyad::new(2, 4));
        for k in 0..g.edge_count() {
            let d = g.edge_at(k);
            assert!(g.has_edge(d.i, d.j));
        }
        assert_eq!(g.edge_count(), 8);
        let degree_sum: usize = (0..5).map(|i| g.degree(i)).sum();
        assert_eq!(degree_sum, 2 * g.edge_count());
    }
}
