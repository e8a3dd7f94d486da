//! Dynamically extensible domain generalization hierarchies.
//!
//! A [`Dgh`] is an arena-backed tree that grows as values arrive. Every node
//! carries three aggregates over its subtree: the number of leaves, the
//! number of covered tuples, and the number of requests (RNC). Values are
//! inserted as leaf-first paths, e.g. `[Paris, France, EU]`.
//!
//! Hierarchies whose paths end at different top-level labels hang below a
//! synthetic root labelled [`ROOT_LABEL`]; with a single top-level label that
//! label is the root.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::rules::HierarchySeed;
use crate::value::AttributeValue;

/// Label of the synthetic root joining several top-level hierarchies.
pub const ROOT_LABEL: &str = "*";

/// Position of a node in its hierarchy's arena. Clones of a hierarchy keep ids.
pub type NodeId = usize;

const SENTINEL: NodeId = 0;

#[derive(Debug, Clone)]
struct Node {
    label: String,
    parent: Option<NodeId>,
    children: Vec<NodeId>,
    depth: u32,
    leaf_count: usize,
    coverage: u64,
    rnc: u64,
}

impl Node {
    fn new(label: &str, parent: Option<NodeId>, depth: u32) -> Self {
        Self {
            label: label.to_owned(),
            parent,
            children: Vec::new(),
            depth,
            leaf_count: 0,
            coverage: 0,
            rnc: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dgh {
    nodes: Vec<Node>,
    index: HashMap<String, NodeId>,
}

impl Default for Dgh {
    fn default() -> Self {
        Self::new()
    }
}

impl Dgh {
    pub fn new() -> Self {
        Self {
            nodes: vec![Node::new(ROOT_LABEL, None, 0)],
            index: HashMap::new(),
        }
    }

    pub fn from_seed(seed: &HierarchySeed) -> Result<Self> {
        let mut dgh = Self::new();
        dgh.merge_seed(seed)?;
        Ok(dgh)
    }

    /// Adds the structure of `seed` without touching any counter.
    pub fn merge_seed(&mut self, seed: &HierarchySeed) -> Result<()> {
        let mut paths = Vec::new();
        collect_leaf_paths(seed, &mut Vec::new(), &mut paths);
        // Applied to a scratch copy so a seed contradicting itself leaves no trace.
        let mut scratch = self.clone();
        for p in &paths {
            scratch.add_structure(p)?;
        }
        *self = scratch;
        Ok(())
    }

    /// Total number of leaves.
    pub fn leaf_count_total(&self) -> usize {
        self.nodes[SENTINEL].leaf_count
    }

    /// Requests recorded over the whole hierarchy.
    pub fn total_requests(&self) -> u64 {
        self.nodes[SENTINEL].rnc
    }

    pub fn is_empty(&self) -> bool {
        self.nodes[SENTINEL].children.is_empty()
    }

    /// Number of labelled nodes.
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn root_id(&self) -> Option<NodeId> {
        match self.nodes[SENTINEL].children.as_slice() {
            [] => None,
            [only] => Some(*only),
            _ => Some(SENTINEL),
        }
    }

    pub fn root(&self) -> Option<NodeRef<'_>> {
        self.root_id().map(|id| self.node(id))
    }

    pub fn node(&self, id: NodeId) -> NodeRef<'_> {
        assert!(id < self.nodes.len(), "node id {id} out of range");
        NodeRef { dgh: self, id }
    }

    pub fn id_of(&self, label: &str) -> Option<NodeId> {
        self.index.get(label).copied()
    }

    pub fn node_by_label(&self, label: &str) -> Option<NodeRef<'_>> {
        if label == ROOT_LABEL {
            return (self.root_id() == Some(SENTINEL)).then(|| self.node(SENTINEL));
        }
        self.id_of(label).map(|id| self.node(id))
    }

    /// All nodes of the visible tree, parents before children.
    pub fn iter(&self) -> impl Iterator<Item = NodeRef<'_>> {
        let mut order = Vec::with_capacity(self.nodes.len());
        if let Some(root) = self.root_id() {
            let mut stack = vec![root];
            while let Some(id) = stack.pop() {
                order.push(id);
                stack.extend(self.nodes[id].children.iter().rev());
            }
        }
        order.into_iter().map(move |id| self.node(id))
    }

    fn is_leaf_id(&self, id: NodeId) -> bool {
        id != SENTINEL && self.nodes[id].children.is_empty()
    }

    /// Checks `path` against the existing tree. Returns the position of the
    /// first label already present, if any.
    pub fn check_path(&self, path: &[String]) -> Result<Option<usize>> {
        if path.is_empty() {
            return Err(Error::InvalidTuple("empty hierarchy path".into()));
        }
        for (pos, label) in path.iter().enumerate() {
            if label.is_empty() || label == ROOT_LABEL {
                return Err(Error::conflict(label, "reserved or empty label"));
            }
            if path[..pos].contains(label) {
                return Err(Error::conflict(label, "label repeated within path"));
            }
        }
        let Some(first) = path.iter().position(|l| self.index.contains_key(l)) else {
            return Ok(None);
        };
        let first_id = self.index[&path[first]];
        if first == 0 && !self.is_leaf_id(first_id) {
            return Err(Error::conflict(
                &path[0],
                "value is an internal node of the hierarchy",
            ));
        }
        if first > 0 && self.is_leaf_id(first_id) {
            return Err(Error::conflict(
                &path[first],
                format!("existing leaf asserted as ancestor of `{}`", path[first - 1]),
            ));
        }
        // From the first known label upward the path must follow the tree exactly.
        let mut current = first_id;
        for pos in first..path.len() {
            let parent = self.nodes[current].parent.expect("labelled nodes have parents");
            match path.get(pos + 1) {
                Some(next) => {
                    if parent == SENTINEL || self.nodes[parent].label != *next {
                        return Err(Error::conflict(
                            &path[pos],
                            format!(
                                "path places it under `{next}`, hierarchy has `{}`",
                                self.nodes[parent].label
                            ),
                        ));
                    }
                    current = parent;
                }
                None => {
                    if parent != SENTINEL {
                        return Err(Error::conflict(
                            &path[pos],
                            format!(
                                "path ends here but hierarchy places it under `{}`",
                                self.nodes[parent].label
                            ),
                        ));
                    }
                }
            }
        }
        Ok(Some(first))
    }

    /// Adds any missing nodes of `path` without changing counters.
    /// Returns the leaf id and whether new nodes were created.
    pub fn add_structure(&mut self, path: &[String]) -> Result<(NodeId, bool)> {
        let first = self.check_path(path)?;
        let attach_pos = first.unwrap_or(path.len());
        if attach_pos == 0 {
            return Ok((self.index[&path[0]], false));
        }
        let attach = match first {
            Some(pos) => self.index[&path[pos]],
            None => SENTINEL,
        };
        let mut parent = attach;
        for label in path[..attach_pos].iter().rev() {
            let depth = self.nodes[parent].depth + 1;
            let id = self.nodes.len();
            let mut node = Node::new(label, Some(parent), depth);
            node.leaf_count = 1;
            self.nodes.push(node);
            self.nodes[parent].children.push(id);
            self.index.insert(label.clone(), id);
            parent = id;
        }
        let leaf = parent;
        let mut up = Some(attach);
        while let Some(id) = up {
            self.nodes[id].leaf_count += 1;
            up = self.nodes[id].parent;
        }
        Ok((leaf, true))
    }

    /// Inserts `path` and records one observation (coverage and request) of its leaf.
    pub fn insert_path(&mut self, path: &[String]) -> Result<NodeId> {
        let (leaf, _) = self.add_structure(path)?;
        self.observe(leaf);
        Ok(leaf)
    }

    /// Leaf-first path a categorical value denotes. A bare label resolves to
    /// the existing leaf of that name, or to a new top-level leaf.
    pub fn value_path<T>(&self, value: &AttributeValue<T>) -> Option<Vec<String>> {
        match value {
            AttributeValue::Numeric(_) => None,
            AttributeValue::CategoricalWithPath(path) => Some(path.clone()),
            AttributeValue::Categorical(label) => Some(match self.id_of(label) {
                Some(id) => self.labels_to_top(id),
                None => vec![label.clone()],
            }),
        }
    }

    /// The existing leaf a value denotes, if it is already in the hierarchy.
    pub fn resolve_value<T>(&self, value: &AttributeValue<T>) -> Result<NodeId> {
        let label = value
            .leaf_label()
            .ok_or_else(|| Error::InvalidTuple("numeric value for a hierarchy".into()))?;
        let id = self
            .id_of(label)
            .filter(|&id| self.is_leaf_id(id))
            .ok_or_else(|| Error::UnknownLeaf(label.to_owned()))?;
        if let AttributeValue::CategoricalWithPath(path) = value {
            self.check_path(path)?;
        }
        Ok(id)
    }

    pub fn add_value_structure<T>(&mut self, value: &AttributeValue<T>) -> Result<(NodeId, bool)> {
        let path = self
            .value_path(value)
            .ok_or_else(|| Error::InvalidTuple("numeric value for a hierarchy".into()))?;
        self.add_structure(&path)
    }

    pub fn insert_value<T>(&mut self, value: &AttributeValue<T>) -> Result<NodeId> {
        let (leaf, _) = self.add_value_structure(value)?;
        self.observe(leaf);
        Ok(leaf)
    }

    fn labels_to_top(&self, id: NodeId) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = Some(id);
        while let Some(c) = cur.filter(|&c| c != SENTINEL) {
            out.push(self.nodes[c].label.clone());
            cur = self.nodes[c].parent;
        }
        out
    }

    /// Records a covered tuple and a request on `leaf` and its ancestors.
    pub fn observe(&mut self, leaf: NodeId) {
        self.bump(leaf, 1, 1);
    }

    /// Records a covered tuple without counting a request.
    pub fn cover(&mut self, leaf: NodeId) {
        self.bump(leaf, 1, 0);
    }

    fn bump(&mut self, leaf: NodeId, coverage: u64, rnc: u64) {
        let mut cur = Some(leaf);
        while let Some(id) = cur {
            let node = &mut self.nodes[id];
            node.coverage += coverage;
            node.rnc += rnc;
            cur = node.parent;
        }
    }

    pub fn clear_rnc(&mut self) {
        self.nodes.iter_mut().for_each(|n| n.rnc = 0);
    }

    pub fn reset_coverage(&mut self) {
        self.nodes.iter_mut().for_each(|n| n.coverage = 0);
    }

    /// Deepest common ancestor of two nodes (the synthetic root if they share no label).
    pub fn lca(&self, mut a: NodeId, mut b: NodeId) -> NodeId {
        while self.nodes[a].depth > self.nodes[b].depth {
            a = self.nodes[a].parent.expect("deeper node has parent");
        }
        while self.nodes[b].depth > self.nodes[a].depth {
            b = self.nodes[b].parent.expect("deeper node has parent");
        }
        while a != b {
            a = self.nodes[a].parent.expect("non-root has parent");
            b = self.nodes[b].parent.expect("non-root has parent");
        }
        a
    }

    /// Deepest node whose subtree contains every given leaf.
    pub fn lowest_common_ancestor<'a, S: AsRef<str>>(
        &'a self,
        leaves: impl IntoIterator<Item = S>,
    ) -> Result<NodeRef<'a>> {
        let mut acc: Option<NodeId> = None;
        for label in leaves {
            let label = label.as_ref();
            let id = self
                .id_of(label)
                .filter(|&id| self.is_leaf_id(id))
                .ok_or_else(|| Error::UnknownLeaf(label.to_owned()))?;
            acc = Some(match acc {
                None => id,
                Some(prev) => self.lca(prev, id),
            });
        }
        let id = acc.ok_or_else(|| Error::Invariant("LCA of an empty leaf set".into()))?;
        Ok(self.node(id))
    }

    /// Labels of all leaves below `id`.
    pub fn leaves_under(&self, id: NodeId) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            if self.is_leaf_id(n) {
                out.insert(self.nodes[n].label.clone());
            } else {
                stack.extend(&self.nodes[n].children);
            }
        }
        out
    }

    pub fn is_ancestor_or_self(&self, ancestor: NodeId, mut node: NodeId) -> bool {
        loop {
            if node == ancestor {
                return true;
            }
            match self.nodes[node].parent {
                Some(p) => node = p,
                None => return false,
            }
        }
    }
}

fn collect_leaf_paths(seed: &HierarchySeed, above: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
    above.push(seed.label.clone());
    if seed.children.is_empty() {
        out.push(above.iter().rev().cloned().collect());
    } else {
        for child in &seed.children {
            collect_leaf_paths(child, above, out);
        }
    }
    above.pop();
}

/// Read-only view of one hierarchy node.
#[derive(Clone, Copy)]
pub struct NodeRef<'a> {
    dgh: &'a Dgh,
    id: NodeId,
}

impl<'a> NodeRef<'a> {
    fn raw(&self) -> &'a Node {
        &self.dgh.nodes[self.id]
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn label(&self) -> &'a str {
        &self.raw().label
    }

    /// Leaves in this subtree.
    pub fn leaf_count(&self) -> usize {
        self.raw().leaf_count
    }

    pub fn coverage_count(&self) -> u64 {
        self.raw().coverage
    }

    pub fn rnc(&self) -> u64 {
        self.raw().rnc
    }

    pub fn depth(&self) -> u32 {
        self.raw().depth
    }

    pub fn is_leaf(&self) -> bool {
        self.dgh.is_leaf_id(self.id)
    }

    pub fn is_root(&self) -> bool {
        self.dgh.root_id() == Some(self.id)
    }

    pub fn children(&self) -> impl Iterator<Item = NodeRef<'a>> + 'a {
        let dgh = self.dgh;
        self.raw().children.iter().map(move |&id| dgh.node(id))
    }

    /// Parent within the visible tree.
    pub fn parent(&self) -> Option<NodeRef<'a>> {
        if self.is_root() {
            return None;
        }
        self.raw().parent.map(|id| self.dgh.node(id))
    }

    pub fn leaves(&self) -> BTreeSet<String> {
        self.dgh.leaves_under(self.id)
    }

    pub fn hierarchy(&self) -> &'a Dgh {
        self.dgh
    }
}

impl std::fmt::Debug for NodeRef<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NodeRef")
            .field("label", &self.label())
            .field("leaf_count", &self.leaf_count())
            .field("coverage", &self.coverage_count())
            .field("rnc", &self.rnc())
            .finish()
    }
}
