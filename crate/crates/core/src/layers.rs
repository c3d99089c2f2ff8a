//! Layer tree with inherited visibility.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    /// Pure grouping node, e.g. the root.
    Group,
    Terrain,
    Buildings,
    Roads,
    Metro,
    Communities,
    AnalysisResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNode {
    pub id: String,
    pub name: String,
    pub kind: LayerKind,
    pub visible: bool,
    /// Optional scene object this node stands for (e.g. a single building).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default)]
    pub children: Vec<LayerNode>,
}

impl LayerNode {
    pub fn new(id: impl Into<String>, name: impl Into<String>, kind: LayerKind) -> Self {
        Self { id: id.into(), name: name.into(), kind, visible: true, target: None, children: Vec::new() }
    }

    pub fn with_children(mut self, children: Vec<LayerNode>) -> Self {
        self.children = children;
        self
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a LayerNode)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }

    pub fn find(&self, id: &str) -> Option<&LayerNode> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(id))
    }

    fn find_mut(&mut self, id: &str) -> Option<&mut LayerNode> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter_mut().find_map(|c| c.find_mut(id))
    }

    pub fn ids(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.walk(&mut |n| out.push(n.id.clone()));
        out
    }
}

/// Returns a copy of the tree with node `id`'s own flag set to `visible`.
pub fn set_layer_visibility(root: &LayerNode, id: &str, visible: bool) -> Result<LayerNode> {
    let mut out = root.clone();
    let node = out.find_mut(id).ok_or_else(|| Error::not_found("layer", id))?;
    node.visible = visible;
    Ok(out)
}

/// Effective visibility of every node: its own flag AND all ancestors' flags.
pub fn effective_visibility(root: &LayerNode) -> BTreeMap<String, bool> {
    fn go(node: &LayerNode, parent: bool, out: &mut BTreeMap<String, bool>) {
        let v = parent && node.visible;
        out.insert(node.id.clone(), v);
        for c in &node.children {
            go(c, v, out);
        }
    }
    let mut out = BTreeMap::new();
    go(root, true, &mut out);
    out
}
