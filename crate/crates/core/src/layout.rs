//! Tutor interface layouts: a tree of nested rows and columns whose leaves are
//! input fields and static labels.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of the implicit root container.
pub const ROOT_ID: &str = "root";

/// Schema number written into every layout document.
pub const LAYOUT_SCHEMA: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LayoutError {
    #[error("no layout node with id `{0}`")]
    NotFound(String),
    #[error("node `{0}` is not a row or column and cannot hold children")]
    NotContainer(String),
    #[error("field name `{0}` is already used in this layout")]
    NameConflict(String),
    #[error("node id `{0}` is already used in this layout")]
    DuplicateId(String),
    #[error("index {index} out of range for `{parent}` with {len} children")]
    IndexOutOfRange {
        parent: String,
        index: usize,
        len: usize,
    },
    #[error("the root container cannot be deleted or moved")]
    RootImmutable,
    #[error("cannot move `{node}` into its own subtree under `{target}`")]
    Cycle { node: String, target: String },
    #[error("malformed node `{id}`: {reason}")]
    Malformed { id: String, reason: String },
    #[error("unsupported layout schema {0}")]
    Schema(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Row,
    Column,
    Input,
    Label,
}

impl NodeKind {
    pub fn is_container(self) -> bool {
        matches!(self, NodeKind::Row | NodeKind::Column)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutNode {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<LayoutNode>,
}

impl LayoutNode {
    pub fn row(id: impl Into<String>, children: Vec<LayoutNode>) -> Self {
        Self::container(id, NodeKind::Row, children)
    }

    pub fn column(id: impl Into<String>, children: Vec<LayoutNode>) -> Self {
        Self::container(id, NodeKind::Column, children)
    }

    fn container(id: impl Into<String>, kind: NodeKind, children: Vec<LayoutNode>) -> Self {
        LayoutNode {
            id: id.into(),
            kind,
            name: None,
            text: None,
            children,
        }
    }

    /// An input leaf whose id and field name coincide.
    pub fn input(name: impl Into<String>) -> Self {
        let name = name.into();
        LayoutNode {
            id: name.clone(),
            kind: NodeKind::Input,
            name: Some(name),
            text: None,
            children: Vec::new(),
        }
    }

    pub fn label(id: impl Into<String>, text: impl Into<String>) -> Self {
        LayoutNode {
            id: id.into(),
            kind: NodeKind::Label,
            name: None,
            text: Some(text.into()),
            children: Vec::new(),
        }
    }

    /// Name under which this leaf appears in working memory: the field name for
    /// inputs and the node id for labels.
    pub fn field_name(&self) -> Option<&str> {
        match self.kind {
            NodeKind::Input => self.name.as_deref(),
            NodeKind::Label => Some(&self.id),
            _ => None,
        }
    }

    fn count(&self) -> usize {
        1 + self.children.iter().map(LayoutNode::count).sum::<usize>()
    }

    fn find(&self, id: &str) -> Option<&LayoutNode> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(id))
    }

    fn find_mut(&mut self, id: &str) -> Option<&mut LayoutNode> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter_mut().find_map(|c| c.find_mut(id))
    }

    fn walk<'a>(&'a self, parent: &'a str, out: &mut Vec<(&'a LayoutNode, &'a str)>) {
        out.push((self, parent));
        for c in &self.children {
            c.walk(&self.id, out);
        }
    }

    fn check_shape(&self) -> Result<(), LayoutError> {
        let bad = |reason: &str| {
            Err(LayoutError::Malformed {
                id: self.id.clone(),
                reason: reason.into(),
            })
        };
        if self.id.is_empty() {
            return bad("empty id");
        }
        match self.kind {
            NodeKind::Row | NodeKind::Column => {
                if self.name.is_some() || self.text.is_some() {
                    return bad("containers carry neither name nor text");
                }
            }
            NodeKind::Input => {
                if !self.children.is_empty() {
                    return bad("inputs are leaves");
                }
                match &self.name {
                    Some(n) if !n.is_empty() => {}
                    _ => return bad("inputs need a field name"),
                }
            }
            NodeKind::Label => {
                if !self.children.is_empty() {
                    return bad("labels are leaves");
                }
                if self.text.is_none() {
                    return bad("labels need text");
                }
            }
        }
        Ok(())
    }
}

/// One leaf of the layout as seen by working memory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldSlot {
    pub name: String,
    pub kind: NodeKind,
    pub parent: String,
    pub text: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutTree {
    pub schema: u32,
    pub version: u64,
    pub root: LayoutNode,
}

impl Default for LayoutTree {
    fn default() -> Self {
        Self::new()
    }
}

impl LayoutTree {
    pub fn new() -> Self {
        LayoutTree {
            schema: LAYOUT_SCHEMA,
            version: 0,
            root: LayoutNode::column(ROOT_ID, Vec::new()),
        }
    }

    /// Builds a tree whose root holds `children`, validating every invariant.
    pub fn with_children(children: Vec<LayoutNode>) -> Result<Self, LayoutError> {
        let tree = LayoutTree {
            schema: LAYOUT_SCHEMA,
            version: 0,
            root: LayoutNode::column(ROOT_ID, children),
        };
        tree.validate()?;
        Ok(tree)
    }

    pub fn from_json(doc: &str) -> Result<Self, LayoutDocError> {
        let tree: LayoutTree = serde_json::from_str(doc)?;
        tree.validate()?;
        Ok(tree)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes")
    }

    pub fn validate(&self) -> Result<(), LayoutError> {
        if self.schema != LAYOUT_SCHEMA {
            return Err(LayoutError::Schema(self.schema));
        }
        if self.root.id != ROOT_ID || !self.root.kind.is_container() {
            return Err(LayoutError::Malformed {
                id: self.root.id.clone(),
                reason: "root must be the `root` container".into(),
            });
        }
        let mut ids = BTreeSet::new();
        let mut names = BTreeSet::new();
        for (node, _) in self.nodes() {
            node.check_shape()?;
            if !ids.insert(node.id.as_str()) {
                return Err(LayoutError::DuplicateId(node.id.clone()));
            }
            if let Some(name) = node.field_name() {
                if !names.insert(name) {
                    return Err(LayoutError::NameConflict(name.to_owned()));
                }
            }
        }
        Ok(())
    }

    /// Every node with its parent id, in pre-order. The root's parent is itself.
    pub fn nodes(&self) -> Vec<(&LayoutNode, &str)> {
        let mut out = Vec::with_capacity(self.root.count());
        self.root.walk(ROOT_ID, &mut out);
        out
    }

    pub fn node_count(&self) -> usize {
        self.root.count()
    }

    pub fn find(&self, id: &str) -> Option<&LayoutNode> {
        self.root.find(id)
    }

    /// Input and label leaves in pre-order.
    pub fn fields(&self) -> Vec<FieldSlot> {
        self.nodes()
            .into_iter()
            .filter_map(|(node, parent)| {
                node.field_name().map(|name| FieldSlot {
                    name: name.to_owned(),
                    kind: node.kind,
                    parent: parent.to_owned(),
                    text: node.text.clone(),
                })
            })
            .collect()
    }

    /// Input field names in pre-order.
    pub fn input_names(&self) -> Vec<String> {
        self.fields()
            .into_iter()
            .filter(|f| f.kind == NodeKind::Input)
            .map(|f| f.name)
            .collect()
    }

    pub fn insert(
        &mut self,
        parent_id: &str,
        index: usize,
        node: LayoutNode,
    ) -> Result<(), LayoutError> {
        let mut candidate = self.clone();
        let parent = candidate
            .root
            .find_mut(parent_id)
            .ok_or_else(|| LayoutError::NotFound(parent_id.to_owned()))?;
        if !parent.kind.is_container() {
            return Err(LayoutError::NotContainer(parent_id.to_owned()));
        }
        if index > parent.children.len() {
            return Err(LayoutError::IndexOutOfRange {
                parent: parent_id.to_owned(),
                index,
                len: parent.children.len(),
            });
        }
        parent.children.insert(index, node);
        candidate.validate()?;
        candidate.version += 1;
        *self = candidate;
        Ok(())
    }

    /// Removes a node and its subtree, returning the removed subtree.
    pub fn delete(&mut self, node_id: &str) -> Result<LayoutNode, LayoutError> {
        if node_id == ROOT_ID {
            return Err(LayoutError::RootImmutable);
        }
        let parent_id = self
            .parent_of(node_id)
            .ok_or_else(|| LayoutError::NotFound(node_id.to_owned()))?;
        let parent = self.root.find_mut(&parent_id).expect("parent exists");
        let pos = parent
            .children
            .iter()
            .position(|c| c.id == node_id)
            .expect("child of parent");
        let removed = parent.children.remove(pos);
        self.version += 1;
        Ok(removed)
    }

    /// Moves a node under `new_parent_id` at `new_index`, where the index is
    /// interpreted after the node has been detached from its old parent.
    pub fn reorder(
        &mut self,
        node_id: &str,
        new_parent_id: &str,
        new_index: usize,
    ) -> Result<(), LayoutError> {
        if node_id == ROOT_ID {
            return Err(LayoutError::RootImmutable);
        }
        let node = self
            .find(node_id)
            .ok_or_else(|| LayoutError::NotFound(node_id.to_owned()))?;
        if node.find(new_parent_id).is_some() {
            return Err(LayoutError::Cycle {
                node: node_id.to_owned(),
                target: new_parent_id.to_owned(),
            });
        }
        let target = self
            .find(new_parent_id)
            .ok_or_else(|| LayoutError::NotFound(new_parent_id.to_owned()))?;
        if !target.kind.is_container() {
            return Err(LayoutError::NotContainer(new_parent_id.to_owned()));
        }
        let mut candidate = self.clone();
        let moved = candidate.delete(node_id)?;
        let target = candidate
            .root
            .find_mut(new_parent_id)
            .expect("target survives detach");
        if new_index > target.children.len() {
            return Err(LayoutError::IndexOutOfRange {
                parent: new_parent_id.to_owned(),
                index: new_index,
                len: target.children.len(),
            });
        }
        target.children.insert(new_index, moved);
        candidate.version = self.version + 1;
        *self = candidate;
        Ok(())
    }

    pub fn parent_of(&self, node_id: &str) -> Option<String> {
        self.nodes()
            .into_iter()
            .find(|(n, _)| n.id == node_id && n.id != ROOT_ID)
            .map(|(_, p)| p.to_owned())
    }

    /// `(child, parent)` pairs, one per edge, in pre-order.
    pub fn containment_relations(&self) -> Vec<(String, String)> {
        self.nodes()
            .into_iter()
            .skip(1)
            .map(|(n, p)| (n.id.clone(), p.to_owned()))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum LayoutDocError {
    #[error("layout document is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}
