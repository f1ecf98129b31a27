//! Typed rooted trees for the perturbation series.
//!
//! A tree with `j` inner vertices of arity `p` contributes to `φ_j`. Leaves
//! carry one of three types: noise (`ξ`, propagated from its own space-time
//! point by `S`), position data (`f`, propagated from time 0 by `C`) and
//! velocity data (`g`, propagated by `S`). An inner vertex multiplies its
//! children pointwise in space-time and propagates the product with `−S∗`.
//!
//! Children are unordered: a tree is stored with its children sorted, and
//! the weight `Π_v p!/Π_α n_α!` (`n_α` = number of identical children of
//! class α at vertex v) counts the ordered arrangements it stands for.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::duhamel::{self, SpaceTimeField, TimeGrid};
use crate::error::{Error, Result};
use crate::kernels::DispersionTable;
use crate::lattice::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LeafKind {
    Xi,
    F,
    G,
}

impl LeafKind {
    pub const ALL: [LeafKind; 3] = [LeafKind::Xi, LeafKind::F, LeafKind::G];

    pub fn symbol(self) -> &'static str {
        match self {
            LeafKind::Xi => "ξ",
            LeafKind::F => "f",
            LeafKind::G => "g",
        }
    }
}

/// Rooted tree; the derived order is the total order used for canonical sorting.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TreeNode {
    Leaf(LeafKind),
    Inner(Vec<TreeNode>),
}

impl TreeNode {
    pub fn leaf(kind: LeafKind) -> Self {
        TreeNode::Leaf(kind)
    }

    /// Inner vertex over the given children, canonicalized.
    pub fn inner(children: Vec<TreeNode>) -> Self {
        TreeNode::Inner(children).canonical()
    }

    /// Same tree with every child list sorted.
    pub fn canonical(&self) -> Self {
        match self {
            TreeNode::Leaf(k) => TreeNode::Leaf(*k),
            TreeNode::Inner(children) => {
                let mut c: Vec<TreeNode> = children.iter().map(TreeNode::canonical).collect();
                c.sort();
                TreeNode::Inner(c)
            }
        }
    }

    pub fn is_canonical(&self) -> bool {
        match self {
            TreeNode::Leaf(_) => true,
            TreeNode::Inner(c) => c.windows(2).all(|w| w[0] <= w[1]) && c.iter().all(TreeNode::is_canonical),
        }
    }

    pub fn inner_count(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 0,
            TreeNode::Inner(c) => 1 + c.iter().map(TreeNode::inner_count).sum::<usize>(),
        }
    }

    pub fn leaf_count(&self, kind: LeafKind) -> usize {
        match self {
            TreeNode::Leaf(k) => usize::from(*k == kind),
            TreeNode::Inner(c) => c.iter().map(|t| t.leaf_count(kind)).sum(),
        }
    }

    /// Every inner vertex has exactly `power` children.
    pub fn has_arity(&self, power: u32) -> bool {
        match self {
            TreeNode::Leaf(_) => true,
            TreeNode::Inner(c) => c.len() == power as usize && c.iter().all(|t| t.has_arity(power)),
        }
    }

    /// Symmetry weight `Π_v p!/Π_α n_α!` of a canonical tree.
    pub fn symmetry_weight(&self) -> Option<u64> {
        match self {
            TreeNode::Leaf(_) => Some(1),
            TreeNode::Inner(children) => {
                let mut weight = class_multinomial(children)?;
                for c in children {
                    weight = weight.checked_mul(c.symmetry_weight()?)?;
                }
                Some(weight)
            }
        }
    }

    /// Product of vertex degrees, counting the edge to the root marker.
    ///
    /// This is the alternative multiplicity `M(T)`; it is *not* the weight
    /// under which the tree sum reproduces the series and is kept as a diagnostic.
    pub fn degree_product(&self) -> u64 {
        fn walk(node: &TreeNode) -> u64 {
            match node {
                TreeNode::Leaf(_) => 1,
                TreeNode::Inner(c) => (c.len() as u64 + 1) * c.iter().map(walk).product::<u64>(),
            }
        }
        walk(self)
    }

    /// Compact bracket encoding, e.g. `[ξ,ξ,[f,g,ξ]]`.
    pub fn encode(&self) -> String {
        match self {
            TreeNode::Leaf(k) => k.symbol().to_string(),
            TreeNode::Inner(c) => {
                let parts: Vec<String> = c.iter().map(TreeNode::encode).collect();
                format!("[{}]", parts.join(","))
            }
        }
    }
}

/// `n!/Π_α n_α!` over runs of equal children in a sorted list.
fn class_multinomial(sorted: &[TreeNode]) -> Option<u64> {
    let mut result: u64 = 1;
    let mut seen: u64 = 0;
    let mut run: u64 = 0;
    for (i, child) in sorted.iter().enumerate() {
        run = if i > 0 && sorted[i - 1] == *child { run + 1 } else { 1 };
        seen += 1;
        // result *= seen / run, exactly
        result = result.checked_mul(seen)? / run;
    }
    Some(result)
}

/// A canonical tree with its symmetry weight.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WeightedTree {
    pub tree: TreeNode,
    pub weight: u64,
}

impl WeightedTree {
    pub fn new(tree: TreeNode) -> Option<Self> {
        let tree = tree.canonical();
        let weight = tree.symmetry_weight()?;
        Some(Self { tree, weight })
    }
}

/// All canonical trees with `order` inner vertices of arity `power`, sorted.
///
/// Order 0 gives the three bare leaves.
pub fn enumerate_trees(power: u32, order: usize) -> Result<Vec<WeightedTree>> {
    if power < 1 {
        return Err(Error::InvalidParameter { name: "power", reason: "must be at least 1".into() });
    }
    let overflow = || Error::CoefficientOverflow { power, order };
    let mut levels: Vec<Vec<WeightedTree>> =
        vec![LeafKind::ALL.iter().map(|&k| WeightedTree { tree: TreeNode::Leaf(k), weight: 1 }).collect()];
    for m in 1..=order {
        let mut pool: Vec<(usize, &WeightedTree)> =
            levels.iter().enumerate().flat_map(|(i, l)| l.iter().map(move |t| (i, t))).collect();
        pool.sort_by(|a, b| a.1.tree.cmp(&b.1.tree));
        let mut picks = Vec::with_capacity(power as usize);
        let mut out = Vec::new();
        choose_children(&pool, 0, power as usize, m - 1, &mut picks, &mut out);
        let mut level = Vec::with_capacity(out.len());
        for picked in out {
            let children: Vec<TreeNode> = picked.iter().map(|&i| pool[i].1.tree.clone()).collect();
            let mut weight = class_multinomial(&children).ok_or_else(overflow)?;
            for &i in &picked {
                weight = weight.checked_mul(pool[i].1.weight).ok_or_else(overflow)?;
            }
            level.push(WeightedTree { tree: TreeNode::Inner(children), weight });
        }
        level.sort();
        levels.push(level);
    }
    Ok(levels.swap_remove(order))
}

// Nondecreasing pool indices whose inner counts add up to `need`.
fn choose_children(
    pool: &[(usize, &WeightedTree)],
    start: usize,
    slots: usize,
    need: usize,
    picks: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if slots == 0 {
        if need == 0 {
            out.push(picks.clone());
        }
        return;
    }
    for i in start..pool.len() {
        let inner = pool[i].0;
        if inner > need {
            continue;
        }
        picks.push(i);
        choose_children(pool, i, slots - 1, need - inner, picks, out);
        picks.pop();
    }
}

/// Evaluates trees on fixed data, caching leaf and subtree values.
pub struct TreeEvaluator<'a> {
    table: &'a DispersionTable,
    leaves: [SpaceTimeField; 3],
    cache: BTreeMap<TreeNode, SpaceTimeField>,
}

impl<'a> TreeEvaluator<'a> {
    pub fn new(f: &Field, g: &Field, xi: &SpaceTimeField, table: &'a DispersionTable, grid: &TimeGrid) -> Result<Self> {
        if xi.grid() != grid {
            return Err(Error::GridMismatch);
        }
        let zero = Field::zeros(*f.spec());
        let noise = duhamel::source_convolve(xi, table)?;
        let position = duhamel::homogeneous_solution(f, &zero, table, grid)?;
        let velocity = duhamel::homogeneous_solution(&zero, g, table, grid)?;
        noise.check_compatible(&position)?;
        Ok(Self { table, leaves: [noise, position, velocity], cache: BTreeMap::new() })
    }

    /// Unweighted value of a canonical tree (signs included).
    pub fn value(&mut self, tree: &TreeNode) -> Result<SpaceTimeField> {
        match tree {
            TreeNode::Leaf(kind) => Ok(self.leaves[*kind as usize].clone()),
            TreeNode::Inner(children) => {
                if let Some(v) = self.cache.get(tree) {
                    return Ok(v.clone());
                }
                let mut product = self.value(&children[0])?;
                for c in &children[1..] {
                    product.mul_assign(&self.value(c)?);
                }
                let v = duhamel::source_convolve(&product, self.table)?.scaled(-1.0);
                self.cache.insert(tree.clone(), v.clone());
                Ok(v)
            }
        }
    }

    pub fn weighted_value(&mut self, wt: &WeightedTree) -> Result<SpaceTimeField> {
        Ok(self.value(&wt.tree)?.scaled(wt.weight as f64))
    }
}

/// Feynman-rule value of one weighted tree.
pub fn evaluate_tree(
    wt: &WeightedTree,
    f: &Field,
    g: &Field,
    xi: &SpaceTimeField,
    table: &DispersionTable,
    grid: &TimeGrid,
) -> Result<SpaceTimeField> {
    TreeEvaluator::new(f, g, xi, table, grid)?.weighted_value(wt)
}

/// Sum of all weighted trees with `order` inner vertices; equals `φ_order`.
pub fn tree_sum(
    power: u32,
    order: usize,
    f: &Field,
    g: &Field,
    xi: &SpaceTimeField,
    table: &DispersionTable,
    grid: &TimeGrid,
) -> Result<SpaceTimeField> {
    let trees = enumerate_trees(power, order)?;
    let mut eval = TreeEvaluator::new(f, g, xi, table, grid)?;
    let mut total = SpaceTimeField::zeros(*f.spec(), *grid);
    for wt in &trees {
        total.add_scaled(wt.weight as f64, &eval.value(&wt.tree)?);
    }
    Ok(total)
}

/// Graphviz rendering: root `x` as a point, inner vertices as filled dots,
/// `ξ` leaves as diamonds, `f` leaves as circles, `g` leaves as double circles.
pub fn render_dot(wt: &WeightedTree) -> String {
    let mut out = String::new();
    out.push_str("digraph tree {\n");
    out.push_str("  rankdir=LR;\n");
    let _ = writeln!(out, "  graph [label=\"{} (weight {})\"];", wt.tree.encode(), wt.weight);
    out.push_str("  n0 [shape=point, label=\"x\", xlabel=\"x\", width=0.08];\n");
    let mut next = 1;
    emit_node(&wt.tree, 0, &mut next, &mut out);
    out.push_str("}\n");
    out
}

fn emit_node(node: &TreeNode, parent: usize, next: &mut usize, out: &mut String) {
    let id = *next;
    *next += 1;
    match node {
        TreeNode::Leaf(kind) => {
            let shape = match kind {
                LeafKind::Xi => "diamond",
                LeafKind::F => "circle",
                LeafKind::G => "doublecircle",
            };
            let _ = writeln!(out, "  n{id} [shape={shape}, label=\"{}\"];", kind.symbol());
        }
        TreeNode::Inner(_) => {
            let _ = writeln!(
                out,
                "  n{id} [shape=circle, style=filled, fillcolor=black, label=\"\", width=0.15];"
            );
        }
    }
    let _ = writeln!(out, "  n{parent} -> n{id};");
    if let TreeNode::Inner(children) = node {
        for c in children {
            emit_node(c, id, next, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    use LeafKind::*;

    fn leaf(k: LeafKind) -> TreeNode {
        TreeNode::leaf(k)
    }

    #[test]
    fn order_zero_is_three_leaves() {
        let trees = enumerate_trees(3, 0).unwrap();
        assert_eq!(trees.iter().map(|t| t.tree.clone()).collect::<Vec<_>>(), vec![leaf(Xi), leaf(F), leaf(G)]);
        assert!(trees.iter().all(|t| t.weight == 1));
    }

    #[test]
    fn cubic_order_one() {
        let trees = enumerate_trees(3, 1).unwrap();
        assert_eq!(trees.len(), 10);
        assert_eq!(trees.iter().map(|t| t.weight).sum::<u64>(), 27);
        let fxx = TreeNode::inner(vec![leaf(F), leaf(Xi), leaf(Xi)]);
        assert_eq!(trees.iter().find(|t| t.tree == fxx).unwrap().weight, 3);
        let mixed = TreeNode::inner(vec![leaf(G), leaf(F), leaf(Xi)]);
        assert_eq!(trees.iter().find(|t| t.tree == mixed).unwrap().weight, 6);
    }

    #[test]
    fn nested_example_weight() {
        let inner = TreeNode::inner(vec![leaf(Xi), leaf(Xi), leaf(Xi)]);
        let nested = TreeNode::inner(vec![inner, leaf(Xi), leaf(Xi)]);
        let trees = enumerate_trees(3, 2).unwrap();
        assert_eq!(trees.len(), 60);
        assert_eq!(trees.iter().find(|t| t.tree == nested).unwrap().weight, 3);
        assert_eq!(enumerate_trees(3, 3).unwrap().len(), 525);
    }

    // All ordered (plane) trees with `m` inner vertices.
    fn plane_trees(p: usize, m: usize) -> Vec<TreeNode> {
        if m == 0 {
            return LeafKind::ALL.iter().map(|&k| leaf(k)).collect();
        }
        let mut out = Vec::new();
        fn rec(p: usize, slots: usize, need: usize, acc: &mut Vec<TreeNode>, out: &mut Vec<TreeNode>) {
            if slots == 0 {
                if need == 0 {
                    out.push(TreeNode::Inner(acc.clone()));
                }
                return;
            }
            for k in 0..=need {
                for t in plane_trees(p, k) {
                    acc.push(t);
                    rec(p, slots - 1, need - k, acc, out);
                    acc.pop();
                }
            }
        }
        rec(p, p, m - 1, &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn weights_count_ordered_preimages() {
        for (p, m) in [(2, 1), (2, 2), (2, 3), (3, 1), (3, 2), (4, 1), (1, 3)] {
            let mut counts: HashMap<TreeNode, u64> = HashMap::new();
            for t in plane_trees(p, m) {
                *counts.entry(t.canonical()).or_default() += 1;
            }
            let trees = enumerate_trees(p as u32, m).unwrap();
            assert_eq!(trees.len(), counts.len(), "p={p} m={m}");
            for wt in trees {
                assert_eq!(counts[&wt.tree], wt.weight, "{}", wt.tree.encode());
                assert!(wt.tree.is_canonical());
                assert!(wt.tree.has_arity(p as u32));
                assert_eq!(wt.tree.inner_count(), m);
            }
        }
    }

    #[test]
    fn weight_sums_follow_generating_map() {
        // total weight at order j is [z^j] U with U = 3 + z U^p
        for p in 1..=3u32 {
            let depth = 5;
            let mut u = vec![3u64; 1];
            for _ in 0..=depth {
                let mut power = vec![1u64];
                for _ in 0..p {
                    let mut next = vec![0u64; (power.len() + u.len() - 1).min(depth + 1)];
                    for (i, a) in power.iter().enumerate() {
                        for (j, b) in u.iter().enumerate() {
                            if i + j <= depth {
                                next[i + j] += a * b;
                            }
                        }
                    }
                    power = next;
                }
                let mut nu = vec![3u64];
                nu.extend(power.iter().take(depth));
                u = nu;
            }
            for (j, &expected) in u.iter().enumerate().take(5) {
                let total: u64 = enumerate_trees(p, j).unwrap().iter().map(|t| t.weight).sum();
                assert_eq!(total, expected, "p={p} j={j}");
            }
        }
    }

    #[test]
    fn degree_product_is_diagnostic() {
        let a1 = TreeNode::inner(vec![leaf(Xi), leaf(Xi), leaf(Xi)]);
        assert_eq!(a1.degree_product(), 4);
        assert_eq!(WeightedTree::new(a1).unwrap().weight, 1);
    }

    #[test]
    fn dot_for_bare_leaf() {
        let dot = render_dot(&WeightedTree::new(leaf(F)).unwrap());
        assert_eq!(dot.matches(" [shape=").count(), 2);
        assert!(dot.contains("shape=circle, label=\"f\""));
        assert!(dot.contains("n0 -> n1;"));
    }

    #[test]
    fn dot_for_worked_examples() {
        let a1 = WeightedTree::new(TreeNode::inner(vec![leaf(Xi), leaf(Xi), leaf(Xi)])).unwrap();
        let dot = render_dot(&a1);
        assert_eq!(dot.matches(" [shape=").count(), 5);
        assert_eq!(dot.matches("shape=diamond").count(), 3);
        assert!(dot.starts_with("digraph"));

        let a5 = WeightedTree::new(TreeNode::inner(vec![a1.tree.clone(), leaf(Xi), leaf(Xi)])).unwrap();
        let dot = render_dot(&a5);
        assert_eq!(dot.matches(" [shape=").count(), 8);
        assert_eq!(dot.matches("shape=diamond").count(), 5);
        assert_eq!(dot.matches("fillcolor=black").count(), 2);
        assert_eq!(dot.matches("->").count(), 7);
        assert!(dot.contains("weight 3"));

        let g = render_dot(&WeightedTree::new(TreeNode::inner(vec![leaf(G), leaf(Xi), leaf(F)])).unwrap());
        assert!(g.contains("shape=doublecircle"));
    }

    fn arb_tree() -> impl Strategy<Value = TreeNode> {
        let leaf = prop_oneof![Just(leaf(Xi)), Just(leaf(F)), Just(leaf(G))];
        leaf.prop_recursive(3, 40, 3, |inner| proptest::collection::vec(inner, 3).prop_map(TreeNode::Inner))
    }

    proptest! {
        #[test]
        fn canonicalization_is_idempotent(t in arb_tree(), rot in 0usize..3) {
            let c = t.canonical();
            prop_assert_eq!(c.canonical(), c.clone());
            prop_assert!(c.is_canonical());
            // rotating the root's children yields an isomorphic tree
            let rotated = match &t {
                TreeNode::Inner(ch) => {
                    let mut ch = ch.clone();
                    ch.rotate_left(rot);
                    TreeNode::Inner(ch)
                }
                leaf => leaf.clone(),
            };
            prop_assert_eq!(rotated.canonical(), c);
        }
    }
}
