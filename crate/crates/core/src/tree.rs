//! ID3 decision trees and the clauses read off their paths.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::data::Dataset;
use crate::kb::{Clause, KbError, KnowledgeBase, WeightedClause};

/// Gains closer than this are treated as tied.
const GAIN_TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeError {
    #[error("cannot build a tree from an empty dataset")]
    EmptyDataset,
    #[error("feature {0:?} repeats along the path")]
    RepeatedFeature(String),
    #[error(transparent)]
    Kb(#[from] KbError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub split_feature: Option<String>,
    pub children: BTreeMap<String, TreeNode>,
    pub n_total: usize,
    pub n_positive: usize,
    pub incoming_edge: Option<(String, String)>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn positive_ratio(&self) -> f64 {
        self.n_positive as f64 / self.n_total as f64
    }

    /// Number of nodes including this one.
    pub fn size(&self) -> usize {
        1 + self.children.values().map(TreeNode::size).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        self.children.values().map(|c| 1 + c.depth()).max().unwrap_or(0)
    }

    /// Calls `f(path, node)` for every node in preorder, children in value order.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&[(&'a str, &'a str)], &'a TreeNode)) {
        fn go<'a>(
            node: &'a TreeNode,
            path: &mut Vec<(&'a str, &'a str)>,
            f: &mut impl FnMut(&[(&'a str, &'a str)], &'a TreeNode),
        ) {
            f(path, node);
            for child in node.children.values() {
                let (feat, val) = child.incoming_edge.as_ref().expect("non-root node has an edge");
                path.push((feat, val));
                go(child, path, f);
                path.pop();
            }
        }
        go(self, &mut Vec::new(), f);
    }

    /// Indented dump, one node per line: `feature=value [n_pos/n_total]`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        self.visit(&mut |path, node| {
            let indent = "  ".repeat(path.len());
            let head = match path.last() {
                Some((f, v)) => format!("{f}={v}"),
                None => "root".to_string(),
            };
            out.push_str(&format!("{indent}{head} [{}/{}]\n", node.n_positive, node.n_total));
        });
        out
    }
}

impl fmt::Display for TreeNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dump())
    }
}

fn entropy(pos: usize, total: usize) -> f64 {
    if total == 0 || pos == 0 || pos == total {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    -(p * p.ln() + (1.0 - p) * (1.0 - p).ln())
}

/// Splits on the feature of maximal information gain. A node becomes a leaf
/// when it is pure or no unused feature takes two or more values on it.
/// A zero best gain does not stop the recursion: label interactions such as
/// parity only show up one level deeper.
pub fn build_id3(train: &Dataset) -> Result<TreeNode, TreeError> {
    if train.is_empty() {
        return Err(TreeError::EmptyDataset);
    }
    // features sorted by name so the first maximum is the lexicographic tie winner
    let mut order: Vec<usize> = (0..train.features().len()).collect();
    order.sort_by(|&a, &b| train.features()[a].cmp(&train.features()[b]));
    let rows: Vec<usize> = (0..train.len()).collect();
    Ok(grow(train, &rows, &order, &mut vec![false; order.len()], None))
}

fn grow(ds: &Dataset, rows: &[usize], order: &[usize], used: &mut [bool], edge: Option<(String, String)>) -> TreeNode {
    let inst = ds.instances();
    let n_total = rows.len();
    let n_positive = rows.iter().filter(|&&r| inst[r].label).count();
    let mut node = TreeNode {
        split_feature: None,
        children: BTreeMap::new(),
        n_total,
        n_positive,
        incoming_edge: edge,
    };
    if n_positive == 0 || n_positive == n_total {
        return node;
    }
    let base = entropy(n_positive, n_total);
    let mut best: Option<(usize, f64, BTreeMap<&str, Vec<usize>>)> = None;
    for &f in order {
        if used[f] {
            continue;
        }
        let mut parts: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for &r in rows {
            parts.entry(inst[r].values[f].as_str()).or_default().push(r);
        }
        if parts.len() < 2 {
            continue;
        }
        let remainder: f64 = parts
            .values()
            .map(|p| {
                let pos = p.iter().filter(|&&r| inst[r].label).count();
                p.len() as f64 / n_total as f64 * entropy(pos, p.len())
            })
            .sum();
        let gain = base - remainder;
        if best.as_ref().is_none_or(|(_, g, _)| gain > g + GAIN_TIE) {
            best = Some((f, gain, parts));
        }
    }
    let Some((f, _, parts)) = best else {
        return node;
    };
    let name = &ds.features()[f];
    node.split_feature = Some(name.clone());
    used[f] = true;
    for (value, part) in parts {
        let child = grow(ds, &part, order, used, Some((name.clone(), value.to_string())));
        node.children.insert(value.to_string(), child);
    }
    used[f] = false;
    node
}

/// `pos | !f1=v1 | ... | !fn=vn` for a path of feature-value pairs.
pub fn clause_from_path<F: AsRef<str>, V: AsRef<str>>(path: &[(F, V)]) -> Result<Clause, TreeError> {
    let mut seen = HashSet::new();
    for (f, _) in path {
        if !seen.insert(f.as_ref()) {
            return Err(TreeError::RepeatedFeature(f.as_ref().to_string()));
        }
    }
    Ok(Clause::rule(path.iter().map(|(f, v)| (f.as_ref(), v.as_ref())))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PathMode {
    /// One clause per root-to-leaf path.
    #[default]
    Leaves,
    /// One clause per root-to-node path, for every non-root node.
    AllNodes,
}

pub fn kb_from_tree(tree: &TreeNode, mode: PathMode) -> Result<KnowledgeBase, TreeError> {
    let mut clauses = Vec::new();
    let mut err = None;
    tree.visit(&mut |path, node| {
        let wanted = match mode {
            PathMode::Leaves => node.is_leaf(),
            PathMode::AllNodes => !path.is_empty(),
        };
        if !wanted || err.is_some() {
            return;
        }
        match clause_from_path(path).and_then(|c| Ok(WeightedClause::new(node.positive_ratio(), c)?)) {
            Ok(wc) => clauses.push(wc),
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(KnowledgeBase::from_clauses(clauses)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{parse_clause, parse_kb};

    fn example_strings() -> Dataset {
        Dataset::from_strings(&[
            ("0000", true),
            ("1111", true),
            ("1010", true),
            ("1100", true),
            ("0010", false),
            ("0100", false),
            ("1110", false),
            ("1000", false),
        ])
        .unwrap()
    }

    #[test]
    fn example_tree_shape() {
        let tree = build_id3(&example_strings()).unwrap();
        assert_eq!(tree.split_feature.as_deref(), Some("a4"));
        let left = &tree.children["0"];
        assert_eq!(left.split_feature.as_deref(), Some("a1"));
        assert!(tree.children["1"].is_leaf());
        assert_eq!(left.children["0"].split_feature.as_deref(), Some("a2"));
        assert!(left.children["0"].children["1"].is_leaf());
        assert_eq!(left.children["1"].split_feature.as_deref(), Some("a2"));
        // 1 root + 14 non-root nodes
        assert_eq!(tree.size(), 15);
        assert_eq!(tree.depth(), 4);
        assert_eq!(
            tree.dump().lines().take(4).collect::<Vec<_>>(),
            vec!["root [4/8]", "  a4=0 [3/7]", "    a1=0 [1/3]", "      a2=0 [1/2]"]
        );
    }

    #[test]
    fn example_tree_kb() {
        let tree = build_id3(&example_strings()).unwrap();
        let kb = kb_from_tree(&tree, PathMode::Leaves).unwrap();
        let expected = parse_kb(
            "0.0 pos | !a1=0 | !a2=0 | !a3=1 | !a4=0
             1.0 pos | !a1=0 | !a2=0 | !a3=0 | !a4=0
             0.0 pos | !a1=0 | !a2=1 | !a4=0
             1.0 pos | !a1=1 | !a2=0 | !a3=1 | !a4=0
             0.0 pos | !a1=1 | !a2=0 | !a3=0 | !a4=0
             0.0 pos | !a1=1 | !a2=1 | !a3=1 | !a4=0
             1.0 pos | !a1=1 | !a2=1 | !a3=0 | !a4=0
             1.0 pos | !a4=1",
        )
        .unwrap();
        assert_eq!(kb, expected);
        assert_eq!(kb_from_tree(&tree, PathMode::AllNodes).unwrap().len(), 14);
    }

    #[test]
    fn leaf_probabilities_match_recount() {
        let ds = example_strings();
        let tree = build_id3(&ds).unwrap();
        let kb = kb_from_tree(&tree, PathMode::AllNodes).unwrap();
        for wc in &kb {
            let pairs: Vec<(&str, &str)> = wc.clause.negated_pairs().collect();
            let matching: Vec<_> = ds
                .instances()
                .iter()
                .filter(|i| pairs.iter().all(|(f, v)| i.values[ds.feature_index(f).unwrap()] == *v))
                .collect();
            let pos = matching.iter().filter(|i| i.label).count();
            assert_eq!(wc.probability, pos as f64 / matching.len() as f64, "{}", wc.clause);
        }
    }

    #[test]
    fn paths_to_clauses() {
        let empty: [(&str, &str); 0] = [];
        assert_eq!(clause_from_path(&empty).unwrap(), parse_clause("pos").unwrap());
        assert_eq!(clause_from_path(&[("a4", "1")]).unwrap(), parse_clause("pos | !a4=1").unwrap());
        assert_eq!(
            clause_from_path(&[("a4", "0"), ("a1", "0"), ("a2", "0"), ("a3", "0")]).unwrap(),
            parse_clause("pos | !a1=0 | !a2=0 | !a3=0 | !a4=0").unwrap()
        );
        assert_eq!(
            clause_from_path(&[("a1", "0"), ("a1", "1")]),
            Err(TreeError::RepeatedFeature("a1".into()))
        );
    }

    #[test]
    fn degenerate_trees() {
        let pure = Dataset::from_strings(&[("0", true), ("1", false)]).unwrap();
        let tree = build_id3(&pure).unwrap();
        assert_eq!(tree.depth(), 1);
        assert!(tree.children.values().all(|c| c.n_positive == 0 || c.n_positive == c.n_total));

        let same = Dataset::from_strings(&[("01", true), ("01", true)]).unwrap();
        let leaf = build_id3(&same).unwrap();
        assert!(leaf.is_leaf());
        assert_eq!((leaf.n_positive, leaf.n_total), (2, 2));

        let noisy = Dataset::from_strings(&[("0", true), ("0", true), ("0", true), ("0", false)]).unwrap();
        let kb = kb_from_tree(&build_id3(&noisy).unwrap(), PathMode::Leaves).unwrap();
        assert_eq!(kb, parse_kb("0.75 pos").unwrap());

        let empty = Dataset::new(vec!["a1".into()], vec![]).unwrap();
        assert_eq!(build_id3(&empty), Err(TreeError::EmptyDataset));
    }

    #[test]
    fn deterministic() {
        let ds = example_strings();
        assert_eq!(build_id3(&ds).unwrap(), build_id3(&ds).unwrap());
    }
}
