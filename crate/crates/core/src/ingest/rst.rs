//! RST trees: parsing the bracketed `.dis` format, binarization and instance
//! extraction.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::name_map::{NameLookup, RelationNameMap};
use crate::error::{Error, Result};
use crate::types::{Framework, InstanceSource, RelationInstance, RelationKind, RelationTaxonomy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Nuclearity {
    Nucleus,
    Satellite,
    Root,
}

/// A node covering EDUs `span.0..=span.1` (1-based). `relation` is the
/// fine-grained relation holding between the node's children, `None` for
/// leaves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RstNode {
    pub span: (usize, usize),
    pub nuclearity: Nuclearity,
    pub relation: Option<String>,
    pub children: Vec<RstNode>,
}

impl RstNode {
    pub fn leaf(edu: usize, nuclearity: Nuclearity) -> Self {
        RstNode {
            span: (edu, edu),
            nuclearity,
            relation: None,
            children: Vec::new(),
        }
    }

    /// Internal node spanning its children.
    pub fn internal(nuclearity: Nuclearity, relation: Option<&str>, children: Vec<RstNode>) -> Self {
        let span = (
            children.first().map_or(0, |c| c.span.0),
            children.last().map_or(0, |c| c.span.1),
        );
        RstNode {
            span,
            nuclearity,
            relation: relation.map(str::to_string),
            children,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    fn label(&self) -> String {
        format!("span {}-{}", self.span.0, self.span.1)
    }

    /// Number of internal nodes in this subtree.
    pub fn internal_count(&self) -> usize {
        if self.is_leaf() {
            0
        } else {
            1 + self.children.iter().map(RstNode::internal_count).sum::<usize>()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RstTree {
    pub doc_id: String,
    pub root: RstNode,
    pub edus: Vec<String>,
}

impl RstTree {
    pub fn new(doc_id: impl Into<String>, root: RstNode, edus: Vec<String>) -> Result<Self> {
        let tree = RstTree {
            doc_id: doc_id.into(),
            root,
            edus,
        };
        tree.validate()?;
        Ok(tree)
    }

    /// Leaves match EDUs one-to-one, sibling spans are adjacent and the root
    /// covers every EDU.
    pub fn validate(&self) -> Result<()> {
        let n = self.edus.len();
        if n == 0 {
            return Err(Error::MalformedTree {
                node: self.doc_id.clone(),
                message: "tree has no EDUs".into(),
            });
        }
        if self.root.span != (1, n) {
            return Err(Error::MalformedTree {
                node: self.root.label(),
                message: format!("root must cover EDUs 1-{n}"),
            });
        }
        check_node(&self.root)
    }

    pub fn is_binary(&self) -> bool {
        fn go(n: &RstNode) -> bool {
            n.is_leaf() || (n.children.len() == 2 && n.children.iter().all(go))
        }
        go(&self.root)
    }

    pub fn span_text(&self, span: (usize, usize)) -> String {
        self.edus[span.0 - 1..span.1].join(" ")
    }
}

fn check_node(node: &RstNode) -> Result<()> {
    let bad = |message: String| Error::MalformedTree {
        node: node.label(),
        message,
    };
    if node.span.0 == 0 || node.span.0 > node.span.1 {
        return Err(bad("invalid EDU range".into()));
    }
    if node.is_leaf() {
        if node.span.0 != node.span.1 {
            return Err(bad("leaf must cover exactly one EDU".into()));
        }
        return Ok(());
    }
    if node.children.len() < 2 {
        return Err(bad(format!("internal node has {} child", node.children.len())));
    }
    let mut next = node.span.0;
    for child in &node.children {
        if child.span.0 != next {
            return Err(bad(format!("child {} is not adjacent to its left sibling", child.label())));
        }
        next = child.span.1 + 1;
    }
    if next != node.span.1 + 1 {
        return Err(bad("children do not cover the node span".into()));
    }
    node.children.iter().try_for_each(check_node)
}

/// Expands every n-ary node right-branching: children `c1 .. cn` become
/// `c1` and a new node over `c2 .. cn` carrying the same relation. The new
/// node is a nucleus if any of its children is. Binary trees are returned
/// unchanged.
pub fn binarize_rst_tree(tree: &RstTree) -> Result<RstTree> {
    tree.validate()?;
    Ok(RstTree {
        doc_id: tree.doc_id.clone(),
        root: binarize_node(tree.root.clone()),
        edus: tree.edus.clone(),
    })
}

fn binarize_node(mut node: RstNode) -> RstNode {
    if node.is_leaf() {
        return node;
    }
    let mut children: Vec<RstNode> = std::mem::take(&mut node.children)
        .into_iter()
        .map(binarize_node)
        .collect();
    while children.len() > 2 {
        let right = children.split_off(children.len() - 2);
        let nuclearity = if right.iter().any(|c| c.nuclearity == Nuclearity::Nucleus) {
            Nuclearity::Nucleus
        } else {
            Nuclearity::Satellite
        };
        children.push(RstNode::internal(nuclearity, node.relation.as_deref(), right));
    }
    node.children = children;
    node
}

/// One instance per internal node that carries a relation, in pre-order.
/// Relations the name map marks as outside the class inventory are skipped.
pub fn extract_rst_instances(
    tree: &RstTree,
    name_map: &RelationNameMap,
    taxonomy: &RelationTaxonomy,
) -> Result<Vec<RelationInstance>> {
    let mut out = Vec::new();
    let mut unknown = Vec::new();
    let mut stack = vec![&tree.root];
    while let Some(node) = stack.pop() {
        if node.is_leaf() {
            continue;
        }
        if node.children.len() != 2 {
            return Err(Error::MalformedTree {
                node: node.label(),
                message: format!("expected a binary tree, found {} children", node.children.len()),
            });
        }
        if let Some(rel) = &node.relation {
            match name_map.lookup(rel) {
                NameLookup::Unknown => unknown.push(rel.clone()),
                NameLookup::Excluded => {}
                NameLookup::Class(coarse) => {
                    let label = taxonomy.index_of(coarse).ok_or_else(|| {
                        Error::InvalidTaxonomy(format!("class {coarse:?} is not in taxonomy {}", taxonomy.framework_name))
                    })?;
                    out.push(RelationInstance {
                        arg1: tree.span_text(node.children[0].span),
                        arg2: tree.span_text(node.children[1].span),
                        label,
                        framework: Framework::Rst,
                        relation_kind: RelationKind::Na,
                        connective: None,
                        doc_id: tree.doc_id.clone(),
                        source: InstanceSource::Original,
                    });
                }
            }
        }
        stack.push(&node.children[1]);
        stack.push(&node.children[0]);
    }
    if !unknown.is_empty() {
        unknown.sort();
        unknown.dedup();
        return Err(Error::UnknownRelation(unknown));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String),
    Text(String),
    List(Vec<Sexp>),
}

fn tokenize_dis(src: &str) -> Result<Vec<Sexp>> {
    let err = |message: String| Error::MalformedTree {
        node: "<input>".into(),
        message,
    };
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    let mut rest = src;
    while let Some(c) = rest.chars().next() {
        if c.is_whitespace() {
            rest = &rest[c.len_utf8()..];
        } else if c == '(' {
            stack.push(Vec::new());
            rest = &rest[1..];
        } else if c == ')' {
            let list = stack.pop().expect("non-empty stack");
            let parent = stack.last_mut().ok_or_else(|| err("unbalanced ')'".into()))?;
            parent.push(Sexp::List(list));
            rest = &rest[1..];
        } else if let Some(after) = rest.strip_prefix("_!") {
            let end = after.find("_!").ok_or_else(|| err("unterminated _! text".into()))?;
            stack
                .last_mut()
                .expect("non-empty stack")
                .push(Sexp::Text(after[..end].to_string()));
            rest = &after[end + 2..];
        } else {
            let end = rest
                .find(|ch: char| ch.is_whitespace() || ch == '(' || ch == ')')
                .unwrap_or(rest.len());
            stack
                .last_mut()
                .expect("non-empty stack")
                .push(Sexp::Atom(rest[..end].to_string()));
            rest = &rest[end..];
        }
    }
    if stack.len() != 1 {
        return Err(err("unbalanced '('".into()));
    }
    Ok(stack.pop().expect("one frame"))
}

struct DisNode {
    nuclearity: Nuclearity,
    span: (usize, usize),
    rel2par: Option<String>,
    text: Option<String>,
    children: Vec<DisNode>,
}

fn parse_dis_node(items: &[Sexp]) -> Result<DisNode> {
    let head = match items.first() {
        Some(Sexp::Atom(a)) => a.as_str(),
        _ => {
            return Err(Error::MalformedTree {
                node: "<node>".into(),
                message: "node must start with Root, Nucleus or Satellite".into(),
            })
        }
    };
    let nuclearity = match head {
        "Root" => Nuclearity::Root,
        "Nucleus" => Nuclearity::Nucleus,
        "Satellite" => Nuclearity::Satellite,
        other => {
            return Err(Error::MalformedTree {
                node: other.into(),
                message: "unknown node type".into(),
            })
        }
    };
    let mut node = DisNode {
        nuclearity,
        span: (0, 0),
        rel2par: None,
        text: None,
        children: Vec::new(),
    };
    for item in &items[1..] {
        let Sexp::List(fields) = item else { continue };
        let key = match fields.first() {
            Some(Sexp::Atom(k)) => k.as_str(),
            _ => continue,
        };
        let atom = |i: usize| match fields.get(i) {
            Some(Sexp::Atom(a)) => Some(a.as_str()),
            _ => None,
        };
        let num = |i: usize| -> Result<usize> {
            atom(i).and_then(|a| a.parse().ok()).ok_or_else(|| Error::MalformedTree {
                node: head.into(),
                message: format!("bad {key} field"),
            })
        };
        match key {
            "span" => node.span = (num(1)?, num(2)?),
            "leaf" => {
                let i = num(1)?;
                node.span = (i, i);
            }
            "rel2par" => node.rel2par = atom(1).map(str::to_string),
            "text" => {
                let text = fields[1..]
                    .iter()
                    .map(|f| match f {
                        Sexp::Text(t) | Sexp::Atom(t) => t.as_str(),
                        Sexp::List(_) => "",
                    })
                    .collect::<Vec<_>>()
                    .join(" ");
                node.text = Some(text);
            }
            "Root" | "Nucleus" | "Satellite" => node.children.push(parse_dis_node(fields)?),
            _ => {}
        }
    }
    Ok(node)
}

fn clean_edu(text: &str) -> String {
    text.replace("<P>", " ").split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Relation between the children: a satellite's `rel2par`, otherwise the
/// nuclei's shared multinuclear relation. `span` is not a relation.
fn node_relation(children: &[DisNode]) -> Option<String> {
    let named = |c: &&DisNode| c.rel2par.as_deref().is_some_and(|r| r != "span");
    children
        .iter()
        .filter(|c| c.nuclearity == Nuclearity::Satellite)
        .find(named)
        .or_else(|| children.iter().find(named))
        .and_then(|c| c.rel2par.clone())
}

fn convert(node: DisNode, edus: &mut Vec<(usize, String)>) -> RstNode {
    if node.children.is_empty() {
        edus.push((node.span.0, clean_edu(node.text.as_deref().unwrap_or(""))));
        return RstNode::leaf(node.span.0, node.nuclearity);
    }
    let relation = node_relation(&node.children);
    let children = node.children.into_iter().map(|c| convert(c, edus)).collect();
    RstNode {
        span: node.span,
        nuclearity: node.nuclearity,
        relation,
        children,
    }
}

/// Parses one tree in the RST discourse treebank `.dis` format.
pub fn parse_dis(doc_id: &str, src: &str) -> Result<RstTree> {
    let top = tokenize_dis(src)?;
    let root = top
        .iter()
        .find_map(|s| match s {
            Sexp::List(items) if matches!(items.first(), Some(Sexp::Atom(a)) if a == "Root") => Some(items),
            _ => None,
        })
        .ok_or_else(|| Error::MalformedTree {
            node: doc_id.into(),
            message: "no Root node".into(),
        })?;
    let dis = parse_dis_node(root)?;
    let mut edus = Vec::new();
    let root = convert(dis, &mut edus);
    edus.sort_by_key(|(i, _)| *i);
    for (pos, (i, _)) in edus.iter().enumerate() {
        if *i != pos + 1 {
            return Err(Error::MalformedTree {
                node: doc_id.into(),
                message: format!("EDU {} missing or duplicated", pos + 1),
            });
        }
    }
    RstTree::new(doc_id, root, edus.into_iter().map(|(_, t)| t).collect()).map_err(|e| match e {
        Error::MalformedTree { node, message } => Error::MalformedTree {
            node: format!("{doc_id}: {node}"),
            message,
        },
        other => other,
    })
}

/// Document id from a file name: `wsj_0600.out.dis` → `wsj_0600`.
pub fn doc_id_from_path(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.split('.').next().unwrap_or(&name).to_string()
}

pub fn load_dis_file(path: &Path) -> Result<RstTree> {
    let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dis(&doc_id_from_path(path), &src)
}

/// Parses every `*.dis` file directly under `dir`, ordered by file name.
pub fn load_dis_dir(dir: &Path) -> Result<Vec<RstTree>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "dis"))
        .collect();
    paths.sort();
    paths.par_iter().map(|p| load_dis_file(p)).collect()
}
