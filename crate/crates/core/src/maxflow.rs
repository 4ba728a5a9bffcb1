//! Exact s-t minimum cut by Boykov–Kolmogorov augmenting paths.
//!
//! Two search trees grow from the source and the sink; when they touch, the
//! path is augmented and the trees are repaired by re-parenting orphans
//! instead of being rebuilt. Capacities are `f64`.

use std::collections::VecDeque;

/// Side of the cut a node ends up on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Source,
    Sink,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowEdge {
    pub from: usize,
    pub to: usize,
    pub capacity: f64,
    pub reverse_capacity: f64,
}

/// Graph with terminal links and undirected-pair edges.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowNetwork {
    /// `(source -> i, i -> sink)` capacity per node.
    terminals: Vec<(f64, f64)>,
    edges: Vec<FlowEdge>,
}

fn check_capacity(c: f64) {
    assert!(c >= 0.0 && c.is_finite(), "capacity must be finite and nonnegative, got {c}");
}

impl FlowNetwork {
    pub fn new(node_count: usize) -> Self {
        Self { terminals: vec![(0.0, 0.0); node_count], edges: Vec::new() }
    }

    pub fn node_count(&self) -> usize {
        self.terminals.len()
    }

    pub fn add_node(&mut self) -> usize {
        self.terminals.push((0.0, 0.0));
        self.terminals.len() - 1
    }

    /// Adds to the terminal capacities of `node`.
    ///
    /// # Panics
    /// On negative or non-finite capacities.
    pub fn add_terminal(&mut self, node: usize, source_cap: f64, sink_cap: f64) {
        check_capacity(source_cap);
        check_capacity(sink_cap);
        let t = &mut self.terminals[node];
        t.0 += source_cap;
        t.1 += sink_cap;
    }

    /// Adds an edge pair `from -> to` / `to -> from`.
    ///
    /// # Panics
    /// On self-loops, out-of-range nodes, or invalid capacities.
    pub fn add_edge(&mut self, from: usize, to: usize, capacity: f64, reverse_capacity: f64) {
        assert_ne!(from, to, "self-edge on node {from}");
        assert!(from < self.node_count() && to < self.node_count(), "edge node out of range");
        check_capacity(capacity);
        check_capacity(reverse_capacity);
        self.edges.push(FlowEdge { from, to, capacity, reverse_capacity });
    }

    pub fn terminals(&self) -> &[(f64, f64)] {
        &self.terminals
    }

    pub fn edges(&self) -> &[FlowEdge] {
        &self.edges
    }

    /// Capacity of the cut induced by `sides`: source links of sink-side
    /// nodes, sink links of source-side nodes, and edges from the source
    /// side to the sink side.
    pub fn cut_capacity(&self, sides: &[Side]) -> f64 {
        let mut total = 0.0;
        for (&(src, sink), side) in self.terminals.iter().zip(sides) {
            total += match side {
                Side::Source => sink,
                Side::Sink => src,
            };
        }
        for e in &self.edges {
            match (sides[e.from], sides[e.to]) {
                (Side::Source, Side::Sink) => total += e.capacity,
                (Side::Sink, Side::Source) => total += e.reverse_capacity,
                _ => {}
            }
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinCut {
    pub flow_value: f64,
    pub sides: Vec<Side>,
}

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Parent {
    Free,
    Terminal,
    Orphan,
    Arc(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tree {
    Source,
    Sink,
}

struct Arc {
    head: usize,
    next: usize,
    r_cap: f64,
}

struct Node {
    first: usize,
    parent: Parent,
    tree: Tree,
    active: bool,
    /// Residual terminal capacity: positive toward the source, negative
    /// toward the sink.
    tr_cap: f64,
    ts: u64,
    dist: u32,
}

struct Solver {
    nodes: Vec<Node>,
    arcs: Vec<Arc>,
    active: VecDeque<usize>,
    orphans: VecDeque<usize>,
    time: u64,
    flow: f64,
}

#[inline]
fn sister(a: usize) -> usize {
    a ^ 1
}

impl Solver {
    fn new(net: &FlowNetwork) -> Self {
        let mut flow = 0.0;
        let mut nodes: Vec<Node> = net
            .terminals
            .iter()
            .map(|&(src, sink)| {
                flow += src.min(sink);
                Node {
                    first: NONE,
                    parent: Parent::Free,
                    tree: Tree::Source,
                    active: false,
                    tr_cap: src - sink,
                    ts: 0,
                    dist: 0,
                }
            })
            .collect();
        let mut arcs = Vec::with_capacity(net.edges.len() * 2);
        for e in &net.edges {
            let a = arcs.len();
            arcs.push(Arc { head: e.to, next: nodes[e.from].first, r_cap: e.capacity });
            nodes[e.from].first = a;
            arcs.push(Arc { head: e.from, next: nodes[e.to].first, r_cap: e.reverse_capacity });
            nodes[e.to].first = a + 1;
        }
        let mut solver = Self { nodes, arcs, active: VecDeque::new(), orphans: VecDeque::new(), time: 0, flow };
        for i in 0..solver.nodes.len() {
            let tr = solver.nodes[i].tr_cap;
            if tr != 0.0 {
                let n = &mut solver.nodes[i];
                n.tree = if tr > 0.0 { Tree::Source } else { Tree::Sink };
                n.parent = Parent::Terminal;
                n.dist = 1;
                solver.set_active(i);
            }
        }
        solver
    }

    fn set_active(&mut self, i: usize) {
        if !self.nodes[i].active {
            self.nodes[i].active = true;
            self.active.push_back(i);
        }
    }

    fn next_active(&mut self) -> Option<usize> {
        while let Some(i) = self.active.pop_front() {
            self.nodes[i].active = false;
            if self.nodes[i].parent != Parent::Free {
                return Some(i);
            }
        }
        None
    }

    /// Grows the tree of `i` by one layer. Returns the source->sink arc if
    /// the trees meet.
    fn grow(&mut self, i: usize) -> Option<usize> {
        let tree = self.nodes[i].tree;
        let (ts, dist) = (self.nodes[i].ts, self.nodes[i].dist);
        let mut a = self.nodes[i].first;
        while a != NONE {
            let cap = match tree {
                Tree::Source => self.arcs[a].r_cap,
                Tree::Sink => self.arcs[sister(a)].r_cap,
            };
            if cap > 0.0 {
                let j = self.arcs[a].head;
                let nj = &mut self.nodes[j];
                if nj.parent == Parent::Free {
                    nj.tree = tree;
                    nj.parent = Parent::Arc(sister(a));
                    nj.ts = ts;
                    nj.dist = dist + 1;
                    self.set_active(j);
                } else if nj.tree != tree {
                    return Some(match tree {
                        Tree::Source => a,
                        Tree::Sink => sister(a),
                    });
                } else if nj.ts <= ts && nj.dist > dist {
                    nj.parent = Parent::Arc(sister(a));
                    nj.ts = ts;
                    nj.dist = dist + 1;
                }
            }
            a = self.arcs[a].next;
        }
        None
    }

    fn parent_arc(&self, i: usize) -> Option<usize> {
        match self.nodes[i].parent {
            Parent::Arc(a) => Some(a),
            _ => None,
        }
    }

    fn augment(&mut self, middle: usize) {
        let mut bottleneck = self.arcs[middle].r_cap;
        // source side: walk from the tail of `middle` to the root
        let mut i = self.arcs[sister(middle)].head;
        while let Some(a) = self.parent_arc(i) {
            bottleneck = bottleneck.min(self.arcs[sister(a)].r_cap);
            i = self.arcs[a].head;
        }
        bottleneck = bottleneck.min(self.nodes[i].tr_cap);
        let mut i = self.arcs[middle].head;
        while let Some(a) = self.parent_arc(i) {
            bottleneck = bottleneck.min(self.arcs[a].r_cap);
            i = self.arcs[a].head;
        }
        bottleneck = bottleneck.min(-self.nodes[i].tr_cap);

        self.arcs[sister(middle)].r_cap += bottleneck;
        self.arcs[middle].r_cap -= bottleneck;

        let mut i = self.arcs[sister(middle)].head;
        while let Some(a) = self.parent_arc(i) {
            self.arcs[a].r_cap += bottleneck;
            self.arcs[sister(a)].r_cap -= bottleneck;
            if self.arcs[sister(a)].r_cap <= 0.0 {
                self.arcs[sister(a)].r_cap = 0.0;
                self.make_orphan_front(i);
            }
            i = self.arcs[a].head;
        }
        self.nodes[i].tr_cap -= bottleneck;
        if self.nodes[i].tr_cap <= 0.0 {
            self.nodes[i].tr_cap = 0.0;
            self.make_orphan_front(i);
        }

        let mut i = self.arcs[middle].head;
        while let Some(a) = self.parent_arc(i) {
            self.arcs[sister(a)].r_cap += bottleneck;
            self.arcs[a].r_cap -= bottleneck;
            if self.arcs[a].r_cap <= 0.0 {
                self.arcs[a].r_cap = 0.0;
                self.make_orphan_front(i);
            }
            i = self.arcs[a].head;
        }
        self.nodes[i].tr_cap += bottleneck;
        if self.nodes[i].tr_cap >= 0.0 {
            self.nodes[i].tr_cap = 0.0;
            self.make_orphan_front(i);
        }

        self.flow += bottleneck;
    }

    fn make_orphan_front(&mut self, i: usize) {
        self.nodes[i].parent = Parent::Orphan;
        self.orphans.push_front(i);
    }

    fn make_orphan_back(&mut self, i: usize) {
        self.nodes[i].parent = Parent::Orphan;
        self.orphans.push_back(i);
    }

    /// Residual capacity of arc `a0` (out of an orphan) in the direction
    /// that would let its head act as the orphan's parent.
    fn parent_cap(&self, tree: Tree, a0: usize) -> f64 {
        match tree {
            Tree::Source => self.arcs[sister(a0)].r_cap,
            Tree::Sink => self.arcs[a0].r_cap,
        }
    }

    fn process_orphan(&mut self, i: usize) {
        let tree = self.nodes[i].tree;
        let mut best_arc = None;
        let mut best_dist = u32::MAX;

        let mut a0 = self.nodes[i].first;
        while a0 != NONE {
            if self.parent_cap(tree, a0) > 0.0 {
                let j0 = self.arcs[a0].head;
                if self.nodes[j0].tree == tree && self.nodes[j0].parent != Parent::Free {
                    // trace j0 back to a terminal, reusing marks from this round
                    let mut j = j0;
                    let mut d: u32 = 0;
                    let reaches_terminal = loop {
                        if self.nodes[j].ts == self.time {
                            d += self.nodes[j].dist;
                            break true;
                        }
                        d += 1;
                        match self.nodes[j].parent {
                            Parent::Terminal => {
                                self.nodes[j].ts = self.time;
                                self.nodes[j].dist = 1;
                                break true;
                            }
                            Parent::Orphan | Parent::Free => break false,
                            Parent::Arc(a) => j = self.arcs[a].head,
                        }
                    };
                    if reaches_terminal {
                        if d < best_dist {
                            best_arc = Some(a0);
                            best_dist = d;
                        }
                        let mut j = j0;
                        let mut d = d;
                        while self.nodes[j].ts != self.time {
                            self.nodes[j].ts = self.time;
                            self.nodes[j].dist = d;
                            d -= 1;
                            match self.nodes[j].parent {
                                Parent::Arc(a) => j = self.arcs[a].head,
                                _ => break,
                            }
                        }
                    }
                }
            }
            a0 = self.arcs[a0].next;
        }

        if let Some(a) = best_arc {
            let n = &mut self.nodes[i];
            n.parent = Parent::Arc(a);
            n.ts = self.time;
            n.dist = best_dist + 1;
            return;
        }

        self.nodes[i].parent = Parent::Free;
        let mut a0 = self.nodes[i].first;
        while a0 != NONE {
            let j = self.arcs[a0].head;
            if self.nodes[j].tree == tree && self.nodes[j].parent != Parent::Free {
                if self.parent_cap(tree, a0) > 0.0 {
                    self.set_active(j);
                }
                if let Parent::Arc(a) = self.nodes[j].parent {
                    if self.arcs[a].head == i {
                        self.make_orphan_back(j);
                    }
                }
            }
            a0 = self.arcs[a0].next;
        }
    }

    fn run(&mut self) {
        let mut current: Option<usize> = None;
        loop {
            let i = match current.take() {
                Some(i) => {
                    self.nodes[i].active = false;
                    if self.nodes[i].parent == Parent::Free {
                        self.next_active()
                    } else {
                        Some(i)
                    }
                }
                None => self.next_active(),
            };
            let Some(i) = i else { break };

            let meeting = self.grow(i);
            self.time += 1;
            if let Some(middle) = meeting {
                // keep `i` as the current node; it is not re-queued meanwhile
                self.nodes[i].active = true;
                current = Some(i);
                self.augment(middle);
                while let Some(o) = self.orphans.pop_front() {
                    self.process_orphan(o);
                }
            }
        }
    }

    fn sides(&self) -> Vec<Side> {
        self.nodes
            .iter()
            .map(|n| match (n.parent, n.tree) {
                (Parent::Free, _) => Side::Sink,
                (_, Tree::Source) => Side::Source,
                (_, Tree::Sink) => Side::Sink,
            })
            .collect()
    }
}

/// Maximum flow and a minimum cut. Nodes reachable from the source in the
/// final residual graph are on the source side.
pub fn min_cut(net: &FlowNetwork) -> MinCut {
    let mut solver = Solver::new(net);
    solver.run();
    MinCut { flow_value: solver.flow, sides: solver.sides() }
}
