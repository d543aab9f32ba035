//! Dynamical graphs and path-sum expressions.
//!
//! A Hamiltonian partitioned into blocks `V_1 ⊕ ... ⊕ V_k` defines a graph
//! whose edge `i -> j` carries `W_ji(t', t) = -i P_j H(t') P_i`.  The Green
//! function `G = (1_* - W)^{*-1}` then satisfies `U = 1 * G`, and each block
//! `G_ts` is a finite branched continued fraction over the simple cycles and
//! simple paths of the graph.

use std::collections::HashMap;
use std::sync::Arc;
use std::fmt::Write as _;

use crate::block::{Block, ZERO};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::star::{star_column, star_product, Column, TwoTimeFunction};
use crate::volterra::{resolvent, resolvent_column, ResolventMethod};
use crate::C64;

/// Edges whose peak norm is below this fraction of the largest Hamiltonian
/// entry are treated as structurally absent.
pub const ZERO_EDGE_THRESHOLD: f64 = 1e-14;

/// Graph sizes are limited by the bitmask used for vertex sets.
pub const MAX_VERTICES: usize = 64;

#[derive(Debug, Clone)]
pub struct DynamicalGraph {
    grid: TimeGrid,
    labels: Vec<String>,
    dims: Vec<usize>,
    /// `edges[to][from]`, shape `dims[to] x dims[from]`.
    edges: Vec<Vec<Option<TwoTimeFunction>>>,
}

impl DynamicalGraph {
    /// Graph with no edges.
    pub fn new(grid: TimeGrid, dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_VERTICES {
            return Err(Error::GraphTooLarge(format!(
                "{} vertices (supported: 1..={MAX_VERTICES})",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidPartition("empty vertex".into()));
        }
        let n = dims.len();
        Ok(Self {
            grid,
            labels: (0..n).map(|v| v.to_string()).collect(),
            dims,
            edges: vec![vec![None; n]; n],
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.dims.len() {
            return Err(Error::DimensionMismatch("one label per vertex".into()));
        }
        self.labels = labels;
        Ok(self)
    }

    /// Set the weight of edge `from -> to` (shape `d_to x d_from`).  A weight
    /// with no smooth and no delta part removes the edge.
    pub fn set_edge(&mut self, from: usize, to: usize, w: TwoTimeFunction) -> Result<()> {
        self.check_vertex(from)?;
        self.check_vertex(to)?;
        self.grid.check_same(w.grid())?;
        if w.rows() != self.dims[to] || w.cols() != self.dims[from] {
            return Err(Error::DimensionMismatch(format!(
                "edge {from} -> {to} must be {}x{}, got {}x{}",
                self.dims[to],
                self.dims[from],
                w.rows(),
                w.cols()
            )));
        }
        if w.has_delta() {
            return Err(Error::DeltaInKernel);
        }
        self.edges[to][from] = if w.has_smooth_part() { Some(w) } else { None };
        Ok(())
    }

    pub fn remove_edge(&mut self, from: usize, to: usize) {
        self.edges[to][from] = None;
    }

    /// Build from a sampled Hamiltonian `H(t)` (row-major `dim x dim`) and a
    /// partition of its indices.  Edge weights are `-i P_j H(t') P_i`, lifted.
    pub fn from_hamiltonian<F>(h: F, dim: usize, partition: &[Vec<usize>], grid: TimeGrid) -> Result<Self>
    where
        F: Fn(f64, &mut [C64]),
    {
        check_partition(partition, dim)?;
        let n = grid.len();
        let mut samples = vec![ZERO; n * dim * dim];
        for (i, t) in grid.times().into_iter().enumerate() {
            h(t, &mut samples[i * dim * dim..(i + 1) * dim * dim]);
        }
        if samples.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite("Hamiltonian samples".into()));
        }
        let global = samples.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        let mut g = DynamicalGraph::new(grid, partition.iter().map(|b| b.len()).collect())?;
        let minus_i = C64::new(0.0, -1.0);
        for (a, from) in partition.iter().enumerate() {
            for (b, to) in partition.iter().enumerate() {
                let (r, c) = (to.len(), from.len());
                let mut data = vec![ZERO; n * r * c];
                let mut peak: f64 = 0.0;
                for i in 0..n {
                    for (p, &row) in to.iter().enumerate() {
                        for (q, &col) in from.iter().enumerate() {
                            let v = samples[i * dim * dim + row * dim + col];
                            peak = peak.max(v.norm());
                            data[i * r * c + p * c + q] = minus_i * v;
                        }
                    }
                }
                if peak > 0.0 && peak >= ZERO_EDGE_THRESHOLD * global {
                    g.edges[b][a] = Some(TwoTimeFunction::from_one_time(grid, r, c, data)?);
                }
            }
        }
        Ok(g)
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v < self.dims.len() {
            Ok(())
        } else {
            Err(Error::UnknownVertex(v))
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn dim(&self, v: usize) -> usize {
        self.dims[v]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn edge(&self, from: usize, to: usize) -> Option<&TwoTimeFunction> {
        self.edges.get(to)?.get(from)?.as_ref()
    }

    pub fn has_self_loop(&self, v: usize) -> bool {
        self.edge(v, v).is_some()
    }

    /// All edges `(from, to)`, self-loops included, sorted.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        let mut out = Vec::new();
        for from in 0..n {
            for to in 0..n {
                if self.edges[to][from].is_some() {
                    out.push((from, to));
                }
            }
        }
        out
    }

    /// Vertex sets of the connected components (edge direction ignored).
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut comp = vec![usize::MAX; n];
        let mut out = Vec::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![];
            let mut stack = vec![start];
            comp[start] = id;
            while let Some(v) = stack.pop() {
                members.push(v);
                for u in 0..n {
                    if comp[u] == usize::MAX && (self.edges[u][v].is_some() || self.edges[v][u].is_some()) {
                        comp[u] = id;
                        stack.push(u);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// Copy with every edge touching a vertex of `drop` removed.
    pub fn without_vertices(&self, drop: &[usize]) -> Result<Self> {
        let mut g = self.clone();
        for &v in drop {
            self.check_vertex(v)?;
            for u in 0..self.len() {
                g.edges[u][v] = None;
                g.edges[v][u] = None;
            }
        }
        Ok(g)
    }

    fn all_mask(&self) -> u64 {
        if self.len() == 64 {
            u64::MAX
        } else {
            (1u64 << self.len()) - 1
        }
    }
}

fn check_partition(partition: &[Vec<usize>], dim: usize) -> Result<()> {
    let mut seen = vec![false; dim];
    for block in partition {
        if block.is_empty() {
            return Err(Error::InvalidPartition("empty block".into()));
        }
        for &i in block {
            if i >= dim {
                return Err(Error::InvalidPartition(format!("index {i} outside 0..{dim}")));
            }
            if seen[i] {
                return Err(Error::InvalidPartition(format!("index {i} appears twice")));
            }
            seen[i] = true;
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidPartition(format!("index {i} is not covered")));
    }
    Ok(())
}

pub type NodeId = usize;

/// One node of a path-sum expression.  Products are written left to right
/// in `*`-order, i.e. `Product([a, b, c]) = a * b * c`.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Zero { rows: usize, cols: usize },
    Identity(usize),
    Edge { from: usize, to: usize },
    Product(Vec<NodeId>),
    Sum(Vec<NodeId>),
    /// `(1_* - kernel)^{*-1}` attached to `vertex`; `avail` is the vertex
    /// set of the subgraph it lives on (0 when not tracked).
    Resolvent { vertex: usize, avail: u64, kernel: NodeId },
}

/// Shared-node expression tree for one or more Green function blocks
/// `G_{target, source}`.
#[derive(Debug, Clone)]
pub struct PathSumExpression {
    pub nodes: Vec<Node>,
    pub source: usize,
    /// `(target, root node)` pairs.
    pub roots: Vec<(usize, NodeId)>,
    /// False when a cycle or path length cap cut off part of the sum.
    pub complete: bool,
    /// Vertex elimination order, when built by elimination.
    pub order: Option<Vec<usize>>,
    shapes: Vec<(usize, usize)>,
}

impl PathSumExpression {
    pub fn root(&self) -> NodeId {
        self.roots[0].1
    }

    pub fn root_for(&self, target: usize) -> Option<NodeId> {
        self.roots.iter().find(|(t, _)| *t == target).map(|(_, r)| *r)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.shapes[id]
    }

    /// Largest number of nested resolvents along any branch.
    pub fn depth(&self) -> usize {
        let mut memo = vec![None; self.nodes.len()];
        self.roots
            .iter()
            .map(|&(_, r)| self.depth_of(r, &mut memo))
            .max()
            .unwrap_or(0)
    }

    fn depth_of(&self, id: NodeId, memo: &mut Vec<Option<usize>>) -> usize {
        if let Some(d) = memo[id] {
            return d;
        }
        let d = match &self.nodes[id] {
            Node::Zero { .. } | Node::Identity(_) | Node::Edge { .. } => 0,
            Node::Product(c) | Node::Sum(c) => c.iter().map(|&x| self.depth_of(x, memo)).max().unwrap_or(0),
            Node::Resolvent { kernel, .. } => 1 + self.depth_of(*kernel, memo),
        };
        memo[id] = Some(d);
        d
    }

    /// Number of distinct resolvent nodes (each one is a Volterra solve).
    pub fn resolvent_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Resolvent { .. })).count()
    }

    /// Every resolvent kernel is built from edge weights only, so it carries
    /// no delta part; checked structurally.
    pub fn kernels_delta_free(&self) -> bool {
        self.nodes.iter().all(|n| match n {
            Node::Resolvent { kernel, .. } => !self.contains_identity(*kernel),
            _ => true,
        })
    }

    fn contains_identity(&self, id: NodeId) -> bool {
        match &self.nodes[id] {
            Node::Identity(_) => true,
            Node::Sum(c) => c.iter().any(|&x| self.contains_identity(x)),
            Node::Product(c) => c.iter().all(|&x| self.contains_identity(x)),
            _ => false,
        }
    }

    /// S-expression dump of the root for `target` (or the first root).
    ///
    /// Grammar: `(edge FROM TO)`, `(id D)`, `(zero RxC)`, `(* A B ...)`,
    /// `(+ A B ...)`, `(res V A)`.  Shared nodes are repeated in full.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        self.dump_node(self.root(), &mut s);
        s
    }

    pub fn dump_node(&self, id: NodeId, out: &mut String) {
        match &self.nodes[id] {
            Node::Zero { rows, cols } => {
                let _ = write!(out, "(zero {rows}x{cols})");
            }
            Node::Identity(d) => {
                let _ = write!(out, "(id {d})");
            }
            Node::Edge { from, to } => {
                let _ = write!(out, "(edge {from} {to})");
            }
            Node::Product(c) | Node::Sum(c) => {
                out.push_str(if matches!(self.nodes[id], Node::Product(_)) { "(*" } else { "(+" });
                for &x in c {
                    out.push(' ');
                    self.dump_node(x, out);
                }
                out.push(')');
            }
            Node::Resolvent { vertex, kernel, .. } => {
                let _ = write!(out, "(res {vertex} ");
                self.dump_node(*kernel, out);
                out.push(')');
            }
        }
    }
}

struct Arena<'g> {
    g: &'g DynamicalGraph,
    nodes: Vec<Node>,
    shapes: Vec<(usize, usize)>,
    dedup: HashMap<Node, NodeId>,
}

impl std::hash::Hash for Node {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        std::mem::discriminant(self).hash(state);
        match self {
            Node::Zero { rows, cols } => (rows, cols).hash(state),
            Node::Identity(d) => d.hash(state),
            Node::Edge { from, to } => (from, to).hash(state),
            Node::Product(c) | Node::Sum(c) => c.hash(state),
            Node::Resolvent { vertex, avail, kernel } => (vertex, avail, kernel).hash(state),
        }
    }
}

impl Eq for Node {}

impl<'g> Arena<'g> {
    fn new(g: &'g DynamicalGraph) -> Self {
        Self {
            g,
            nodes: Vec::new(),
            shapes: Vec::new(),
            dedup: HashMap::new(),
        }
    }

    fn push(&mut self, node: Node, shape: (usize, usize)) -> NodeId {
        if let Some(&id) = self.dedup.get(&node) {
            return id;
        }
        let id = self.nodes.len();
        self.nodes.push(node.clone());
        self.shapes.push(shape);
        self.dedup.insert(node, id);
        id
    }

    fn zero(&mut self, rows: usize, cols: usize) -> NodeId {
        self.push(Node::Zero { rows, cols }, (rows, cols))
    }

    fn edge(&mut self, from: usize, to: usize) -> NodeId {
        let shape = (self.g.dim(to), self.g.dim(from));
        self.push(Node::Edge { from, to }, shape)
    }

    fn product(&mut self, factors: Vec<NodeId>) -> NodeId {
        if factors.len() == 1 {
            return factors[0];
        }
        let shape = (self.shapes[factors[0]].0, self.shapes[*factors.last().unwrap()].1);
        self.push(Node::Product(factors), shape)
    }

    fn sum(&mut self, terms: Vec<NodeId>, shape: (usize, usize)) -> NodeId {
        match terms.len() {
            0 => self.zero(shape.0, shape.1),
            1 => terms[0],
            _ => self.push(Node::Sum(terms), shape),
        }
    }

    fn resolvent(&mut self, vertex: usize, avail: u64, kernel: NodeId) -> NodeId {
        let d = self.g.dim(vertex);
        self.push(Node::Resolvent { vertex, avail, kernel }, (d, d))
    }
}

/// Options for [`green_function`].
#[derive(Debug, Clone, Default)]
pub struct GreenOptions {
    /// Longest simple cycle or path (in edges) to include; `None` for all.
    pub max_length: Option<usize>,
}

struct CycleBuilder<'g> {
    arena: Arena<'g>,
    memo: HashMap<(usize, u64), NodeId>,
    max_len: usize,
    complete: bool,
}

impl CycleBuilder<'_> {
    fn has_edge(&self, from: usize, to: usize) -> bool {
        self.arena.g.edge(from, to).is_some()
    }

    /// Simple cycles (`end == start`) or simple paths from `start` to `end`
    /// inside `avail`, as the vertex sequences after `start`; cycles omit the
    /// closing vertex.
    fn simple_walks(&mut self, start: usize, avail: u64, end: usize) -> Vec<Vec<usize>> {
        let n = self.arena.g.len();
        let mut out = Vec::new();
        let mut path = Vec::new();
        let mut visited = 1u64 << start;
        self.dfs(start, start, end, avail, &mut visited, &mut path, &mut out, n);
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        &mut self,
        start: usize,
        cur: usize,
        end: usize,
        avail: u64,
        visited: &mut u64,
        path: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
        n: usize,
    ) {
        for next in 0..n {
            if !self.has_edge(cur, next) || avail >> next & 1 == 0 {
                continue;
            }
            if next == end {
                // closing edge; walks never pass through `end`
                if path.len() + 1 > self.max_len {
                    self.complete = false;
                } else {
                    let mut p = path.clone();
                    if end != start {
                        p.push(next);
                    }
                    out.push(p);
                }
                continue;
            }
            if *visited >> next & 1 == 1 {
                continue;
            }
            if path.len() + 2 > self.max_len {
                self.complete = false;
                continue;
            }
            *visited |= 1 << next;
            path.push(next);
            self.dfs(start, next, end, avail, visited, path, out, n);
            path.pop();
            *visited &= !(1u64 << next);
        }
    }

    /// `G_v` on the subgraph induced by `avail`.
    fn resolvent(&mut self, v: usize, avail: u64) -> NodeId {
        if let Some(&id) = self.memo.get(&(v, avail)) {
            return id;
        }
        let d = self.arena.g.dim(v);
        let cycles = self.simple_walks(v, avail, v);
        let mut terms = Vec::with_capacity(cycles.len());
        for cyc in cycles {
            // v -> a1 -> ... -> ak -> v
            let mut factors = Vec::new();
            let last = *cyc.last().unwrap_or(&v);
            factors.push(self.arena.edge(last, v));
            let mut removed = 1u64 << v;
            let mut inner = Vec::new();
            for (idx, &a) in cyc.iter().enumerate() {
                let prev = if idx == 0 { v } else { cyc[idx - 1] };
                let sub = self.resolvent(a, avail & !removed);
                inner.push((sub, self.arena.edge(prev, a)));
                removed |= 1 << a;
            }
            for (sub, e) in inner.into_iter().rev() {
                factors.push(sub);
                factors.push(e);
            }
            terms.push(self.arena.product(factors));
        }
        let kernel = self.arena.sum(terms, (d, d));
        let id = self.arena.resolvent(v, avail, kernel);
        self.memo.insert((v, avail), id);
        id
    }

    /// `G_{t s}` on the subgraph `avail` (s, t in avail).
    fn green(&mut self, s: usize, t: usize, avail: u64) -> NodeId {
        if s == t {
            return self.resolvent(s, avail);
        }
        let shape = (self.arena.g.dim(t), self.arena.g.dim(s));
        let paths = self.simple_walks(s, avail, t);
        let mut terms = Vec::with_capacity(paths.len());
        for path in paths {
            // s = a0 -> a1 -> ... -> ak = t
            let mut removed = 0u64;
            let mut seq = Vec::new();
            let mut prev = s;
            let gs = self.resolvent(s, avail);
            removed |= 1 << s;
            for &a in &path {
                let e = self.arena.edge(prev, a);
                let ga = self.resolvent(a, avail & !removed);
                seq.push((e, ga));
                removed |= 1 << a;
                prev = a;
            }
            let mut factors = Vec::new();
            for (e, ga) in seq.into_iter().rev() {
                factors.push(ga);
                factors.push(e);
            }
            factors.push(gs);
            terms.push(self.arena.product(factors));
        }
        self.arena.sum(terms, shape)
    }
}

/// Path-sum expression for the Green function blocks `G_{t s}` with every
/// `t` in `targets`, built from the simple cycles and simple paths of `g`.
/// Sub-resolvents are shared between all blocks.
pub fn green_functions(
    g: &DynamicalGraph,
    source: usize,
    targets: &[usize],
    opts: &GreenOptions,
) -> Result<PathSumExpression> {
    g.check_vertex(source)?;
    for &t in targets {
        g.check_vertex(t)?;
    }
    let mut b = CycleBuilder {
        arena: Arena::new(g),
        memo: HashMap::new(),
        max_len: opts.max_length.unwrap_or(usize::MAX),
        complete: true,
    };
    let all = g.all_mask();
    let roots = targets.iter().map(|&t| (t, b.green(source, t, all))).collect();
    Ok(PathSumExpression {
        nodes: b.arena.nodes,
        shapes: b.arena.shapes,
        source,
        roots,
        complete: b.complete,
        order: None,
    })
}

/// Single-block convenience wrapper around [`green_functions`].
pub fn green_function(g: &DynamicalGraph, source: usize, target: usize) -> Result<PathSumExpression> {
    green_functions(g, source, &[target], &GreenOptions::default())
}

/// Green function block `G_{t s}` by eliminating every other vertex in the
/// given order.  Eliminating `v` dresses each pair of its neighbours with
/// `W_bv * (1_* - W_vv)^{*-1} * W_va`; the result does not depend on the
/// order, the cost does.
pub fn green_function_eliminated(
    g: &DynamicalGraph,
    source: usize,
    target: usize,
    order: &[usize],
) -> Result<PathSumExpression> {
    g.check_vertex(source)?;
    g.check_vertex(target)?;
    let n = g.len();
    let mut seen = vec![false; n];
    for &v in order {
        g.check_vertex(v)?;
        if seen[v] {
            return Err(Error::InvalidParameter(format!("vertex {v} repeated in elimination order")));
        }
        seen[v] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::InvalidParameter("elimination order must list every vertex".into()));
    }
    let mut a = Arena::new(g);
    // dressed weights w[to][from]
    let mut w: Vec<Vec<Option<NodeId>>> = vec![vec![None; n]; n];
    for (from, to) in g.edge_list() {
        w[to][from] = Some(a.edge(from, to));
    }
    let mut alive = vec![true; n];
    for &v in order.iter().filter(|&&v| v != source && v != target) {
        let dv = g.dim(v);
        let loop_v = match w[v][v] {
            Some(k) => k,
            None => a.zero(dv, dv),
        };
        let rv = a.resolvent(v, 0, loop_v);
        alive[v] = false;
        let ins: Vec<usize> = (0..n).filter(|&x| alive[x] && w[v][x].is_some()).collect();
        let outs: Vec<usize> = (0..n).filter(|&x| alive[x] && w[x][v].is_some()).collect();
        for &from in &ins {
            for &to in &outs {
                let p = a.product(vec![w[to][v].unwrap(), rv, w[v][from].unwrap()]);
                let shape = (g.dim(to), g.dim(from));
                w[to][from] = Some(match w[to][from] {
                    Some(old) => a.sum(vec![old, p], shape),
                    None => p,
                });
            }
        }
        for x in 0..n {
            w[v][x] = None;
            w[x][v] = None;
        }
    }
    let ds = g.dim(source);
    let root = if source == target {
        let k = w[source][source].unwrap_or_else(|| a.zero(ds, ds));
        a.resolvent(source, 0, k)
    } else {
        let dt = g.dim(target);
        let lt = w[target][target].unwrap_or_else(|| a.zero(dt, dt));
        let rt = a.resolvent(target, 0, lt);
        match (w[target][source], w[source][target]) {
            (None, _) => a.zero(dt, ds),
            (Some(ts), back) => {
                let mut terms = Vec::new();
                if let Some(l) = w[source][source] {
                    terms.push(l);
                }
                if let Some(st) = back {
                    terms.push(a.product(vec![st, rt, ts]));
                }
                let ks = a.sum(terms, (ds, ds));
                let gs = a.resolvent(source, 0, ks);
                a.product(vec![rt, ts, gs])
            }
        }
    };
    Ok(PathSumExpression {
        nodes: a.nodes,
        shapes: a.shapes,
        source,
        roots: vec![(target, root)],
        complete: true,
        order: Some(order.to_vec()),
    })
}

fn children(node: &Node) -> &[NodeId] {
    match node {
        Node::Product(c) | Node::Sum(c) => c,
        Node::Resolvent { kernel, .. } => std::slice::from_ref(kernel),
        _ => &[],
    }
}

/// Bottom-up evaluator.  Values are shared through `Arc` and dropped once
/// every parent reachable from the roots has consumed them, so only the
/// live frontier of dense two-time functions stays in memory.
pub struct Evaluator<'a> {
    g: &'a DynamicalGraph,
    expr: &'a PathSumExpression,
    method: ResolventMethod,
    full: Vec<Option<Arc<TwoTimeFunction>>>,
    cols: Vec<Option<Arc<Column>>>,
    remaining: Vec<usize>,
    /// Columns of product suffixes: paths to different targets share their
    /// tails, so each tail is applied once.
    suffixes: HashMap<Vec<NodeId>, Arc<Column>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(g: &'a DynamicalGraph, expr: &'a PathSumExpression, method: ResolventMethod) -> Self {
        let n = expr.nodes.len();
        let mut remaining = vec![0usize; n];
        let mut seen = vec![false; n];
        let mut stack: Vec<NodeId> = expr.roots.iter().map(|&(_, r)| r).collect();
        for &r in &stack {
            remaining[r] += 1;
        }
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut seen[id], true) {
                continue;
            }
            for &c in children(&expr.nodes[id]) {
                remaining[c] += 1;
                stack.push(c);
            }
        }
        Self {
            g,
            expr,
            method,
            full: vec![None; n],
            cols: vec![None; n],
            remaining,
            suffixes: HashMap::new(),
        }
    }

    /// One consumer of `id` is done with it.
    pub fn release(&mut self, id: NodeId) {
        self.remaining[id] = self.remaining[id].saturating_sub(1);
        if self.remaining[id] == 0 {
            self.full[id] = None;
            self.cols[id] = None;
        }
    }

    fn take_full(&mut self, id: NodeId) -> Result<Arc<TwoTimeFunction>> {
        let v = self.full(id)?;
        self.release(id);
        Ok(v)
    }

    fn take_column(&mut self, id: NodeId) -> Result<Arc<Column>> {
        let v = self.column(id)?;
        self.release(id);
        Ok(v)
    }

    /// Full two-time value of a node.
    pub fn full(&mut self, id: NodeId) -> Result<Arc<TwoTimeFunction>> {
        if let Some(f) = &self.full[id] {
            return Ok(f.clone());
        }
        let grid = *self.g.grid();
        let v = match &self.expr.nodes[id] {
            Node::Zero { rows, cols } => TwoTimeFunction::zero(grid, *rows, *cols),
            Node::Identity(d) => TwoTimeFunction::identity(grid, *d),
            Node::Edge { from, to } => self
                .g
                .edge(*from, *to)
                .cloned()
                .unwrap_or_else(|| TwoTimeFunction::zero(grid, self.g.dim(*to), self.g.dim(*from))),
            Node::Product(c) => {
                // right to left keeps lifted edge factors in the cheap kernels
                let mut acc = self.take_full(*c.last().unwrap())?;
                for &x in c[..c.len() - 1].iter().rev() {
                    let f = self.take_full(x)?;
                    acc = Arc::new(star_product(&f, &acc)?);
                }
                Arc::try_unwrap(acc).unwrap_or_else(|a| (*a).clone())
            }
            Node::Sum(c) => {
                let mut acc = (*self.take_full(c[0])?).clone();
                for &x in &c[1..] {
                    acc = acc.add(&*self.take_full(x)?)?;
                }
                acc
            }
            Node::Resolvent { kernel, .. } => {
                let k = self.take_full(*kernel)?;
                resolvent(&k, self.method)?
            }
        };
        let v = Arc::new(v);
        if self.remaining[id] > 1 {
            self.full[id] = Some(v.clone());
        }
        Ok(v)
    }

    /// First column `(., t_min)` of a node, avoiding full evaluation of the
    /// outermost resolvent and of the rightmost factor of each product.
    pub fn column(&mut self, id: NodeId) -> Result<Arc<Column>> {
        if let Some(c) = &self.cols[id] {
            return Ok(c.clone());
        }
        if let Some(f) = &self.full[id] {
            return Ok(Arc::new(f.column0()));
        }
        let v = match &self.expr.nodes[id] {
            Node::Product(c) => {
                let k = c.len();
                let cached = (1..k).find_map(|s| self.suffixes.get(&c[s..]).map(|v| (s, v.clone())));
                let (start, mut acc) = match cached {
                    Some((s, v)) => {
                        for &x in &c[s..] {
                            self.release(x);
                        }
                        (s, v)
                    }
                    None => (k - 1, self.take_column(c[k - 1])?),
                };
                for s in (0..start).rev() {
                    let f = self.take_full(c[s])?;
                    acc = Arc::new(star_column(&f, &acc)?);
                    if s > 0 {
                        self.suffixes.insert(c[s..].to_vec(), acc.clone());
                    }
                }
                Arc::try_unwrap(acc).unwrap_or_else(|a| (*a).clone())
            }
            Node::Sum(c) => {
                let mut acc = (*self.take_column(c[0])?).clone();
                for &x in &c[1..] {
                    acc = acc.add(&*self.take_column(x)?)?;
                }
                acc
            }
            Node::Resolvent { kernel, .. } => {
                let k = self.take_full(*kernel)?;
                resolvent_column(&k, self.method)?
            }
            _ => self.full(id)?.column0(),
        };
        let v = Arc::new(v);
        if self.remaining[id] > 1 {
            self.cols[id] = Some(v.clone());
        }
        Ok(v)
    }
}

/// Evaluate the first root of `expr` on the whole triangle.
pub fn evaluate(expr: &PathSumExpression, g: &DynamicalGraph, method: ResolventMethod) -> Result<TwoTimeFunction> {
    let v = Evaluator::new(g, expr, method).full(expr.root())?;
    Ok(Arc::try_unwrap(v).unwrap_or_else(|a| (*a).clone()))
}

/// `U_{target, source}(t_i, t_min) = ∫_{t_min}^{t_i} G_{target, source}(τ, t_min) dτ`.
pub fn propagator_block(
    g: &DynamicalGraph,
    source: usize,
    target: usize,
    method: ResolventMethod,
) -> Result<Column> {
    let expr = green_function(g, source, target)?;
    let mut ev = Evaluator::new(g, &expr, method);
    Ok(ev.column(expr.root())?.integrate())
}

/// Blocks `U_{t, source}` for every vertex `t`, sharing sub-resolvents.
pub fn propagator_column(
    g: &DynamicalGraph,
    source: usize,
    method: ResolventMethod,
    opts: &GreenOptions,
) -> Result<(Vec<Column>, PathSumExpression)> {
    let targets: Vec<usize> = (0..g.len()).collect();
    let expr = green_functions(g, source, &targets, opts)?;
    let mut ev = Evaluator::new(g, &expr, method);
    let mut out = Vec::with_capacity(targets.len());
    for &(_, r) in &expr.roots {
        out.push(ev.column(r)?.integrate());
        ev.release(r);
    }
    Ok((out, expr))
}

/// Full `U(t_i, t_min)` assembled block by block, one `D x D` matrix per node
/// (`D` the total dimension), in partition order.
pub fn propagator(g: &DynamicalGraph, method: ResolventMethod) -> Result<Vec<Block>> {
    let n = g.grid().len();
    let total = g.total_dim();
    let mut offs = vec![0; g.len()];
    for v in 1..g.len() {
        offs[v] = offs[v - 1] + g.dim(v - 1);
    }
    let mut out = vec![Block::zeros(total, total); n];
    for s in 0..g.len() {
        let (cols, _) = propagator_column(g, s, method, &GreenOptions::default())?;
        for (t, c) in cols.iter().enumerate() {
            for (i, u) in out.iter_mut().enumerate() {
                for r in 0..g.dim(t) {
                    for q in 0..g.dim(s) {
                        u.set(offs[t] + r, offs[s] + q, c.entry(i, r, q));
                    }
                }
            }
        }
    }
    Ok(out)
}
