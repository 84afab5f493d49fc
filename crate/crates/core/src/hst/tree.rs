use std::collections::HashMap;

use crate::error::{invalid, Error, Result};

/// A rooted weighted tree. `w(v)` is the length of the edge from `v` up to
/// its parent, with `w(root) = 0`. Leaves are listed in canonical order: a
/// depth-first walk at construction time, then insertion order for leaves
/// added later.
#[derive(Debug, Clone, PartialEq)]
pub struct HstTree {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    weight: Vec<f64>,
    depth: Vec<usize>,
    n_leaves: Vec<usize>,
    labels: Vec<String>,
    leaves: Vec<usize>,
    leaf_index: Vec<Option<usize>>,
    root: usize,
    tau: f64,
}

impl HstTree {
    /// Builds a tree from `(parent, child, weight)` edges over string labels.
    pub fn from_edges(root: &str, edges: &[(String, String, f64)], tau: f64) -> Result<Self> {
        if !(tau >= 2.0 && tau.is_finite()) {
            return invalid(format!("τ must be at least 2 (got {tau})"));
        }
        let mut ids: HashMap<&str, usize> = HashMap::new();
        let mut labels = vec![root.to_string()];
        ids.insert(root, 0);
        for (p, c, _) in edges {
            for s in [p, c] {
                if !ids.contains_key(s.as_str()) {
                    ids.insert(s, labels.len());
                    labels.push(s.clone());
                }
            }
        }
        let n = labels.len();
        let mut parent = vec![None; n];
        let mut weight = vec![0.0; n];
        let mut children = vec![Vec::new(); n];
        for (p, c, w) in edges {
            let (pi, ci) = (ids[p.as_str()], ids[c.as_str()]);
            if ci == 0 {
                return invalid("the root cannot be a child");
            }
            if parent[ci].is_some() {
                return invalid(format!("vertex {c} has two parents"));
            }
            if !(*w > 0.0 && w.is_finite()) {
                return invalid(format!("edge {p}-{c} has non-positive weight {w}"));
            }
            parent[ci] = Some(pi);
            weight[ci] = *w;
            children[pi].push(ci);
        }
        if let Some(v) = (1..n).find(|&v| parent[v].is_none()) {
            return invalid(format!("vertex {} is not attached to the root", labels[v]));
        }
        let mut t = Self {
            parent,
            children,
            weight,
            depth: vec![0; n],
            n_leaves: vec![0; n],
            labels,
            leaves: Vec::new(),
            leaf_index: vec![None; n],
            root: 0,
            tau,
        };
        t.reindex()?;
        Ok(t)
    }

    /// Complete `branching`-ary tree of the given depth with `w = top/τ^{d−1}`
    /// at depth `d`.
    pub fn complete(branching: usize, height: usize, tau: f64, top: f64) -> Result<Self> {
        if branching == 0 || height == 0 {
            return invalid("complete tree needs positive branching and height");
        }
        let mut edges = Vec::new();
        let mut frontier = vec!["r".to_string()];
        for d in 1..=height {
            let w = top / tau.powi(d as i32 - 1);
            let mut next = Vec::new();
            for p in &frontier {
                for b in 0..branching {
                    let c = format!("{p}.{b}");
                    edges.push((p.clone(), c.clone(), w));
                    next.push(c);
                }
            }
            frontier = next;
        }
        Self::from_edges("r", &edges, tau)
    }

    /// Parses lines `edge <parent> <child> <weight>`, `root <id>` and
    /// `tau <value>`. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut root = None;
        let mut tau = None;
        let mut edges = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Parse(format!("line {}: cannot read `{line}`", no + 1));
            match tok[0] {
                "edge" if tok.len() == 4 => {
                    let w: f64 = tok[3].parse().map_err(|_| bad())?;
                    edges.push((tok[1].to_string(), tok[2].to_string(), w));
                }
                "root" if tok.len() == 2 => root = Some(tok[1].to_string()),
                "tau" if tok.len() == 2 => tau = Some(tok[1].parse::<f64>().map_err(|_| bad())?),
                _ => return Err(bad()),
            }
        }
        let root = root.ok_or_else(|| Error::Parse("missing `root` line".into()))?;
        Self::from_edges(&root, &edges, tau.unwrap_or(2.0))
    }

    /// Inverse of [`HstTree::parse`].
    pub fn to_text(&self) -> String {
        let mut s = format!("tau {}\nroot {}\n", self.tau, self.labels[self.root]);
        for v in self.preorder() {
            if let Some(p) = self.parent[v] {
                s.push_str(&format!("edge {} {} {}\n", self.labels[p], self.labels[v], self.weight[v]));
            }
        }
        s
    }

    fn preorder(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.len());
        let mut stack = vec![self.root];
        while let Some(u) = stack.pop() {
            order.push(u);
            stack.extend(self.children[u].iter().rev());
        }
        order
    }

    /// Recomputes depths, leaf counts and the canonical leaf order.
    fn reindex(&mut self) -> Result<()> {
        let order = self.preorder();
        if order.len() != self.len() {
            return invalid("edges contain a cycle");
        }
        for &u in &order {
            self.depth[u] = self.parent[u].map_or(0, |p| self.depth[p] + 1);
        }
        self.leaves = order.iter().copied().filter(|&u| u != self.root && self.children[u].is_empty()).collect();
        if self.leaves.is_empty() {
            return invalid("tree has no leaves");
        }
        self.leaf_index = vec![None; self.len()];
        for (i, &l) in self.leaves.iter().enumerate() {
            self.leaf_index[l] = Some(i);
        }
        self.n_leaves = vec![0; self.len()];
        for &u in order.iter().rev() {
            self.n_leaves[u] = if self.children[u].is_empty() {
                1
            } else {
                self.children[u].iter().map(|&c| self.n_leaves[c]).sum()
            };
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn weight(&self, v: usize) -> f64 {
        self.weight[v]
    }

    pub fn depth(&self, v: usize) -> usize {
        self.depth[v]
    }

    /// `N_v`, the number of leaves below `v`.
    pub fn n_leaves(&self, v: usize) -> usize {
        self.n_leaves[v]
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    pub fn find(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.leaf_index[v].is_some()
    }

    /// Leaves in canonical order.
    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    pub fn leaf_index(&self, v: usize) -> Option<usize> {
        self.leaf_index[v]
    }

    /// Depth of the deepest leaf.
    pub fn height(&self) -> usize {
        self.leaves.iter().map(|&l| self.depth[l]).max().unwrap_or(0)
    }

    /// `v, p(v), …, root`.
    pub fn path_to_root(&self, v: usize) -> Vec<usize> {
        let mut path = vec![v];
        let mut u = v;
        while let Some(p) = self.parent[u] {
            path.push(p);
            u = p;
        }
        path
    }

    pub fn is_ancestor(&self, a: usize, v: usize) -> bool {
        let mut u = v;
        loop {
            if u == a {
                return true;
            }
            match self.parent[u] {
                Some(p) => u = p,
                None => return false,
            }
        }
    }

    pub fn lca(&self, a: usize, b: usize) -> usize {
        let (mut a, mut b) = (a, b);
        while self.depth[a] > self.depth[b] {
            a = self.parent[a].expect("deeper vertex has a parent");
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b].expect("deeper vertex has a parent");
        }
        while a != b {
            a = self.parent[a].expect("non-root");
            b = self.parent[b].expect("non-root");
        }
        a
    }

    /// Weighted path length between two vertices.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let l = self.lca(a, b);
        let up = |mut v: usize| {
            let mut s = 0.0;
            while v != l {
                s += self.weight[v];
                v = self.parent[v].expect("below the lca");
            }
            s
        };
        up(a) + up(b)
    }

    /// Distance matrix over the leaves in canonical order.
    pub fn leaf_metric(&self) -> Vec<Vec<f64>> {
        let n = self.leaves.len();
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let v = self.distance(self.leaves[i], self.leaves[j]);
                d[i][j] = v;
                d[j][i] = v;
            }
        }
        d
    }

    /// Vertices grouped by depth, root first.
    pub fn levels(&self) -> Vec<Vec<usize>> {
        let mut lv = vec![Vec::new(); self.height() + 1];
        for v in self.preorder() {
            lv[self.depth[v]].push(v);
        }
        lv
    }

    pub fn has_equal_leaf_depth(&self) -> bool {
        let h = self.depth[self.leaves[0]];
        self.leaves.iter().all(|&l| self.depth[l] == h)
    }

    /// Checks τ-adicity (every weight an integer power of τ, dropping by
    /// exactly τ per level below the root's children) and equal leaf depth.
    pub fn validate(&self) -> Result<()> {
        if !self.has_equal_leaf_depth() {
            return invalid("leaves are not all at the same depth");
        }
        for v in 0..self.len() {
            let Some(p) = self.parent[v] else { continue };
            let e = self.weight[v].ln() / self.tau.ln();
            if (e - e.round()).abs() > 1e-9 {
                return invalid(format!("weight {} of {} is not a power of τ", self.weight[v], self.labels[v]));
            }
            if p != self.root {
                let want = self.weight[p] / self.tau;
                if (self.weight[v] - want).abs() > 1e-12 * want {
                    return invalid(format!("weight of {} is not w(parent)/τ", self.labels[v]));
                }
            }
        }
        Ok(())
    }

    /// Pads shallow leaves with unary chains whose weights keep dropping by
    /// τ, so that every leaf ends at the maximum depth. The old leaves become
    /// internal and the new chain ends inherit their labels with a `~` suffix
    /// per step. Each padded leaf moves by less than `w/(τ−1)` for its
    /// original edge weight `w`.
    pub fn normalized(&self) -> Result<Self> {
        let h = self.height();
        let mut edges = Vec::new();
        for v in self.preorder() {
            if let Some(p) = self.parent[v] {
                edges.push((self.labels[p].clone(), self.labels[v].clone(), self.weight[v]));
            }
        }
        for &l in &self.leaves {
            let (mut label, mut w) = (self.labels[l].clone(), self.weight[l]);
            for _ in self.depth[l]..h {
                let next = format!("{label}~");
                w /= self.tau;
                edges.push((label, next.clone(), w));
                label = next;
            }
        }
        Self::from_edges(&self.labels[self.root], &edges, self.tau)
    }

    /// Hangs a new chain below `at`, one vertex per weight, and returns the
    /// new vertex ids (the last one is the new leaf). Canonical order of the
    /// existing leaves is preserved. `at` must not be a leaf.
    pub fn add_path(&mut self, at: usize, weights: &[f64], label: &str) -> Result<Vec<usize>> {
        if at >= self.len() || (self.is_leaf(at) && at != self.root) {
            return invalid("add_path must start at an existing internal vertex");
        }
        if weights.is_empty() || weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return invalid("add_path needs positive weights");
        }
        let mut created = Vec::with_capacity(weights.len());
        let mut p = at;
        for (i, &w) in weights.iter().enumerate() {
            let v = self.len();
            self.parent.push(Some(p));
            self.children.push(Vec::new());
            self.children[p].push(v);
            self.weight.push(w);
            self.depth.push(self.depth[p] + 1);
            self.n_leaves.push(1);
            self.labels.push(if i + 1 == weights.len() { label.to_string() } else { format!("{label}@{}", i) });
            self.leaf_index.push(None);
            created.push(v);
            p = v;
        }
        let leaf = *created.last().expect("nonempty path");
        self.leaf_index[leaf] = Some(self.leaves.len());
        self.leaves.push(leaf);
        let mut u = at;
        loop {
            self.n_leaves[u] += 1;
            match self.parent[u] {
                Some(q) => u = q,
                None => break,
            }
        }
        Ok(created)
    }
}
