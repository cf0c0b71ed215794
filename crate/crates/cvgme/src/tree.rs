//! Tree-graph machinery behind the criteria: enumeration of non-isomorphic
//! trees, center finding, reverse-level-order labeling, adjacency structure
//! validation and bipartite splits of the mode set.

use crate::error::{Error, Result};
use std::collections::{BTreeSet, HashMap};

/// Unlabeled tree on vertices `1..=order` (vertex ids are incidental).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    order: usize,
    edges: Vec<(usize, usize)>,
}

/// Center of a tree: the survivor of iterated leaf deletion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Center {
    Vertex(usize),
    Edge(usize, usize),
}

impl Tree {
    pub fn new(order: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidTree("order must be >= 2".into()));
        }
        if edges.len() != order - 1 {
            return Err(Error::InvalidTree(format!(
                "{} edges for order {order}, expected {}",
                edges.len(),
                order - 1
            )));
        }
        let mut norm: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u == 0 || v == 0 || u > order || v > order || u == v {
                return Err(Error::InvalidTree(format!("bad edge ({u},{v})")));
            }
            norm.push((u.min(v), u.max(v)));
        }
        norm.sort_unstable();
        norm.dedup();
        if norm.len() != order - 1 {
            return Err(Error::InvalidTree("duplicate edge".into()));
        }
        let t = Tree { order, edges: norm };
        if !t.is_connected() {
            return Err(Error::InvalidTree("not connected".into()));
        }
        Ok(t)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.order + 1];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }

    fn is_connected(&self) -> bool {
        let adj = self.adjacency_lists();
        let mut seen = vec![false; self.order + 1];
        let mut stack = vec![1];
        seen[1] = true;
        let mut count = 0;
        while let Some(u) = stack.pop() {
            count += 1;
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        count == self.order
    }

    /// Iterated leaf deletion down to a vertex or an edge.
    pub fn center(&self) -> Center {
        let adj = self.adjacency_lists();
        let mut degree: Vec<usize> = (0..=self.order).map(|v| adj[v].len()).collect();
        let mut alive = vec![true; self.order + 1];
        let mut remaining = self.order;
        let mut layer: Vec<usize> = (1..=self.order).filter(|&v| degree[v] <= 1).collect();
        while remaining > 2 {
            let mut next = Vec::new();
            for &leaf in &layer {
                alive[leaf] = false;
                remaining -= 1;
                for &w in &adj[leaf] {
                    if alive[w] {
                        degree[w] -= 1;
                        if degree[w] == 1 {
                            next.push(w);
                        }
                    }
                }
            }
            layer = next;
        }
        let survivors: Vec<usize> = (1..=self.order).filter(|&v| alive[v]).collect();
        match survivors[..] {
            [c] => Center::Vertex(c),
            [a, b] => Center::Edge(a.min(b), a.max(b)),
            _ => unreachable!("leaf deletion leaves one vertex or one edge"),
        }
    }

    /// AHU code of the subtree rooted at `root` looking away from `parent`.
    fn subtree_code(&self, adj: &[Vec<usize>], root: usize, parent: usize) -> Vec<u8> {
        let mut children: Vec<Vec<u8>> = adj[root]
            .iter()
            .filter(|&&c| c != parent)
            .map(|&c| self.subtree_code(adj, c, root))
            .collect();
        children.sort();
        let mut code = vec![b'('];
        for c in children {
            code.extend(c);
        }
        code.push(b')');
        code
    }

    fn subtree_size(&self, adj: &[Vec<usize>], root: usize, parent: usize) -> usize {
        1 + adj[root]
            .iter()
            .filter(|&&c| c != parent)
            .map(|&c| self.subtree_size(adj, c, root))
            .sum::<usize>()
    }

    /// Canonical code of the free tree: rooted at the center vertex, or the
    /// sorted pair of half-tree codes when the center is an edge.
    pub fn canonical_code(&self) -> Vec<u8> {
        let adj = self.adjacency_lists();
        match self.center() {
            Center::Vertex(c) => {
                let mut code = vec![b'V'];
                code.extend(self.subtree_code(&adj, c, 0));
                code
            }
            Center::Edge(a, b) => {
                let mut ca = self.subtree_code(&adj, a, b);
                let mut cb = self.subtree_code(&adj, b, a);
                if ca > cb {
                    std::mem::swap(&mut ca, &mut cb);
                }
                let mut code = vec![b'E'];
                code.extend(ca);
                code.extend(cb);
                code
            }
        }
    }
}

/// Supported range for [`enumerate_trees`].
pub const MIN_ENUM_ORDER: usize = 2;
pub const MAX_ENUM_ORDER: usize = 12;

/// One representative per isomorphism class, sorted by canonical code.
///
/// Built by attaching a leaf to every vertex of every tree one order below
/// and deduplicating on the canonical code.
pub fn enumerate_trees(order: usize) -> Result<Vec<Tree>> {
    if !(MIN_ENUM_ORDER..=MAX_ENUM_ORDER).contains(&order) {
        return Err(Error::UnsupportedOrder {
            order,
            min: MIN_ENUM_ORDER,
            max: MAX_ENUM_ORDER,
        });
    }
    let mut current = vec![Tree::new(2, &[(1, 2)]).expect("edge tree")];
    for k in 3..=order {
        let mut seen: HashMap<Vec<u8>, Tree> = HashMap::new();
        for t in &current {
            for attach in 1..=t.order() {
                let mut edges = t.edges().to_vec();
                edges.push((attach, k));
                let grown = Tree::new(k, &edges).expect("leaf attachment keeps a tree");
                seen.entry(grown.canonical_code()).or_insert(grown);
            }
        }
        let mut next: Vec<(Vec<u8>, Tree)> = seen.into_iter().collect();
        next.sort_by(|a, b| a.0.cmp(&b.0));
        current = next.into_iter().map(|(_, t)| t).collect();
    }
    Ok(current)
}

/// Tree with a labeling; the root carries label `N`.
///
/// Stored directly in label space: an edge `(i, j)` means the vertices
/// labeled `i` and `j` are adjacent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledTree {
    tree: Tree,
}

impl LabeledTree {
    /// Wraps label-space edges as a labeling (validity of the column
    /// structure is a separate check, `validate_labeling`).
    pub fn from_edges(order: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Ok(LabeledTree {
            tree: Tree::new(order, edges)?,
        })
    }

    pub fn order(&self) -> usize {
        self.tree.order()
    }

    pub fn root(&self) -> usize {
        self.tree.order()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        self.tree.edges()
    }

    /// Zero-one adjacency matrix in label order.
    pub fn adjacency(&self) -> AdjacencyMatrix {
        let n = self.order();
        let mut a = vec![vec![0u8; n]; n];
        for &(i, j) in self.edges() {
            a[i - 1][j - 1] = 1;
            a[j - 1][i - 1] = 1;
        }
        AdjacencyMatrix { entries: a }
    }

    /// Checks that every column segment `A[i+1.., i]` has exactly one nonzero,
    /// reporting the first failing 1-based column otherwise.
    pub fn validate_labeling(&self) -> std::result::Result<(), usize> {
        let a = self.adjacency();
        let n = self.order();
        for i in 1..n {
            let nonzeros = (i + 1..=n).filter(|&j| a.get(j, i) == 1).count();
            if nonzeros != 1 {
                return Err(i);
            }
        }
        Ok(())
    }

    /// For a validated labeling, the unique neighbor of `i` with a larger
    /// label (its parent); defined for `i = 1..N-1`.
    pub fn parent_of(&self, i: usize) -> Option<usize> {
        self.edges()
            .iter()
            .find(|&&(a, b)| a == i && b > i)
            .map(|&(_, b)| b)
            .or_else(|| {
                self.edges()
                    .iter()
                    .find(|&&(a, b)| b == i && a > i)
                    .map(|&(a, _)| a)
            })
    }

    /// Child-parent pairs `(i, parent(i))` for `i = 1..N-1`.
    ///
    /// Errors if the labeling does not validate.
    pub fn child_parent_edges(&self) -> Result<Vec<(usize, usize)>> {
        self.validate_labeling()
            .map_err(|column| Error::InvalidLabeling { column })?;
        Ok((1..self.order())
            .map(|i| (i, self.parent_of(i).expect("validated labeling has parents")))
            .collect())
    }

    pub fn underlying(&self) -> &Tree {
        &self.tree
    }
}

/// `N x N` zero-one symmetric adjacency matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    entries: Vec<Vec<u8>>,
}

impl AdjacencyMatrix {
    /// 1-based access.
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.entries[i - 1][j - 1]
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.entries
    }
}

/// Path `1 - 2 - ... - N` (the standard labeling of a linear tree).
pub fn standard_linear_label(order: usize) -> Result<LabeledTree> {
    let edges: Vec<(usize, usize)> = (1..order).map(|i| (i, i + 1)).collect();
    LabeledTree::from_edges(order, &edges)
}

/// Reverse-level-order labeling rooted at a center vertex.
///
/// `root_choice` must be the center vertex or an endpoint of the center edge;
/// `None` picks the default root: the center vertex, or for an edge center
/// the endpoint whose half after cutting the center edge is larger (ties by
/// half-tree code, then smaller vertex id). Children are visited largest
/// subtree first, ties by subtree code then smaller original id; labels
/// descend from `N` in visit order, so every vertex's parent carries a larger
/// label and the labeling always validates.
pub fn reverse_level_order_label(tree: &Tree, root_choice: Option<usize>) -> Result<LabeledTree> {
    let adj = tree.adjacency_lists();
    let center = tree.center();
    let admissible: Vec<usize> = match center {
        Center::Vertex(c) => vec![c],
        Center::Edge(a, b) => vec![a, b],
    };
    let root = match root_choice {
        Some(r) => {
            if !admissible.contains(&r) {
                return Err(Error::InvalidRoot { root: r });
            }
            r
        }
        None => match center {
            Center::Vertex(c) => c,
            Center::Edge(a, b) => {
                let size_a = tree.subtree_size(&adj, a, b);
                let size_b = tree.subtree_size(&adj, b, a);
                match size_a.cmp(&size_b) {
                    std::cmp::Ordering::Greater => a,
                    std::cmp::Ordering::Less => b,
                    std::cmp::Ordering::Equal => {
                        let code_a = tree.subtree_code(&adj, a, b);
                        let code_b = tree.subtree_code(&adj, b, a);
                        match code_a.cmp(&code_b) {
                            std::cmp::Ordering::Greater => a,
                            std::cmp::Ordering::Less => b,
                            std::cmp::Ordering::Equal => a.min(b),
                        }
                    }
                }
            }
        },
    };
    // BFS with sorted children; dequeue order assigns labels N, N-1, ...
    let n = tree.order();
    let mut label = vec![0usize; n + 1];
    let mut queue = std::collections::VecDeque::new();
    let mut next_label = n;
    queue.push_back((root, 0usize));
    while let Some((v, parent)) = queue.pop_front() {
        label[v] = next_label;
        next_label = next_label.saturating_sub(1);
        let mut children: Vec<usize> = adj[v].iter().copied().filter(|&c| c != parent).collect();
        children.sort_by(|&c1, &c2| {
            let s1 = tree.subtree_size(&adj, c1, v);
            let s2 = tree.subtree_size(&adj, c2, v);
            s2.cmp(&s1)
                .then_with(|| {
                    let k1 = tree.subtree_code(&adj, c1, v);
                    let k2 = tree.subtree_code(&adj, c2, v);
                    k2.cmp(&k1)
                })
                .then(c1.cmp(&c2))
        });
        for c in children {
            queue.push_back((c, v));
        }
    }
    let edges: Vec<(usize, usize)> = tree
        .edges()
        .iter()
        .map(|&(u, v)| (label[u], label[v]))
        .collect();
    let lt = LabeledTree::from_edges(n, &edges)?;
    lt.validate_labeling()
        .map_err(|column| Error::InvalidLabeling { column })?;
    Ok(lt)
}

/// Bipartite split of `{1..N}`; canonically, side I contains mode 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bipartition {
    side_i: Vec<usize>,
    side_j: Vec<usize>,
}

impl Bipartition {
    pub fn side_i(&self) -> &[usize] {
        &self.side_i
    }

    pub fn side_j(&self) -> &[usize] {
        &self.side_j
    }

    /// Bitmask of side I (bit `m-1` set for mode `m`).
    pub fn mask_i(&self) -> u32 {
        self.side_i.iter().fold(0, |m, &v| m | 1 << (v - 1))
    }

    /// Notation like `1|23` for small N, `{1,2}|{3,4}` beyond 9 modes.
    pub fn label(&self) -> String {
        let join = |side: &[usize]| {
            if self.side_i.len() + self.side_j.len() <= 9 {
                side.iter().map(|v| v.to_string()).collect::<String>()
            } else {
                side.iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            }
        };
        format!("{}|{}", join(&self.side_i), join(&self.side_j))
    }
}

/// Maximum mode count for [`bipartitions`] (the list grows as `2^{N-1}`).
pub const MAX_BIPARTITION_MODES: usize = 22;

/// All `2^{N-1} - 1` canonical bipartitions, side I sorted, lexicographic.
pub fn bipartitions(modes: usize) -> Result<Vec<Bipartition>> {
    if modes < 2 {
        return Err(Error::InvalidSplit("need at least 2 modes".into()));
    }
    if modes > MAX_BIPARTITION_MODES {
        return Err(Error::InvalidSplit(format!(
            "{modes} modes exceed the {MAX_BIPARTITION_MODES}-mode enumeration limit"
        )));
    }
    let mut sides: Vec<Vec<usize>> = Vec::with_capacity((1 << (modes - 1)) - 1);
    for mask in 0u32..(1 << (modes - 1)) {
        let mut side = vec![1usize];
        for b in 0..modes - 1 {
            if mask >> b & 1 == 1 {
                side.push(b + 2);
            }
        }
        if side.len() < modes {
            sides.push(side);
        }
    }
    sides.sort();
    Ok(sides
        .into_iter()
        .map(|side_i| {
            let in_i: BTreeSet<usize> = side_i.iter().copied().collect();
            let side_j = (1..=modes).filter(|m| !in_i.contains(m)).collect();
            Bipartition { side_i, side_j }
        })
        .collect())
}

/// Labeled trees used in the published tables, keyed `"3"`, `"4a"`..`"6f"`.
pub fn paper_tree(key: &str) -> Result<LabeledTree> {
    let (order, edges): (usize, &[(usize, usize)]) = match key {
        "3" => (3, &[(1, 2), (2, 3)]),
        "4a" => (4, &[(1, 2), (2, 3), (3, 4)]),
        "4b" => (4, &[(1, 4), (2, 4), (3, 4)]),
        "5a" => (5, &[(1, 2), (2, 3), (3, 4), (4, 5)]),
        "5b" => (5, &[(1, 5), (2, 5), (3, 5), (4, 5)]),
        "5c" => (5, &[(1, 2), (2, 5), (3, 5), (4, 5)]),
        "6a" => (6, &[(1, 2), (2, 3), (3, 4), (4, 5), (5, 6)]),
        "6b" => (6, &[(1, 6), (2, 6), (3, 6), (4, 6), (5, 6)]),
        "6c" => (6, &[(1, 3), (2, 5), (3, 6), (4, 6), (5, 6)]),
        "6d" => (6, &[(1, 4), (2, 4), (3, 5), (4, 6), (5, 6)]),
        "6e" => (6, &[(1, 5), (2, 5), (3, 6), (4, 6), (5, 6)]),
        "6f" => (6, &[(1, 4), (2, 4), (3, 4), (4, 6), (5, 6)]),
        _ => return Err(Error::UnknownFixture(key.into())),
    };
    LabeledTree::from_edges(order, edges)
}

/// Keys accepted by [`paper_tree`].
pub const PAPER_TREE_KEYS: [&str; 12] = [
    "3", "4a", "4b", "5a", "5b", "5c", "6a", "6b", "6c", "6d", "6e", "6f",
];

/// Parses `"1-2,2-3"` or newline-separated `"u v"` pairs into a labeled tree.
pub fn parse_edge_list(text: &str) -> Result<LabeledTree> {
    let mut edges = Vec::new();
    let mut maxv = 0usize;
    let seps: &[char] = &[',', '\n', ';'];
    for item in text.split(seps).map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item
            .split(|c: char| c == '-' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if parts.len() != 2 {
            return Err(Error::Parse(format!("bad edge {item:?}, expected 'u-v'")));
        }
        let u: usize = parts[0]
            .parse()
            .map_err(|_| Error::Parse(format!("bad vertex {:?}", parts[0])))?;
        let v: usize = parts[1]
            .parse()
            .map_err(|_| Error::Parse(format!("bad vertex {:?}", parts[1])))?;
        maxv = maxv.max(u).max(v);
        edges.push((u, v));
    }
    LabeledTree::from_edges(maxv, &edges)
}
