//! Unlabeled rooted tree enumeration, canonical forms, and automorphism
//! counts.
//!
//! Trees are represented by canonical level sequences: DFS preorder depths
//! with the root at depth 0, children ordered by descending canonical subtree
//! sequence, which makes the sequence the lexicographically largest over all
//! DFS orderings. Enumeration follows the Beyer–Hershberger successor rule,
//! which visits every canonical sequence exactly once in decreasing
//! lexicographic order, from the path down to the star.

use num_bigint::BigUint;
use num_traits::One;

use crate::{Error, Result};

/// Enumeration guard: catalogs above this edge count are refused.
pub const MAX_TREE_EDGES: usize = 22;

/// An unlabeled rooted tree in canonical form, with cached metadata.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RootedTree {
    pub level_seq: Vec<u8>,
    pub k_edges: usize,
    pub aut: BigUint,
    pub max_deg: usize,
}

impl RootedTree {
    /// Builds from any valid level sequence, canonicalizing it.
    pub fn from_level_seq(seq: &[u8]) -> Result<Self> {
        validate_level_seq(seq)?;
        let children = children_from_seq(seq);
        Ok(Self::from_children(&children))
    }

    /// Builds from a parent array with exactly one root (`None` entry).
    pub fn from_parent_array(parents: &[Option<usize>]) -> Result<Self> {
        let n = parents.len();
        if n == 0 {
            return Err(Error::invalid("empty parent array"));
        }
        let mut root = None;
        let mut children = vec![Vec::new(); n];
        for (v, &p) in parents.iter().enumerate() {
            match p {
                None => {
                    if root.replace(v).is_some() {
                        return Err(Error::invalid("multiple roots in parent array"));
                    }
                }
                Some(p) => {
                    if p >= n || p == v {
                        return Err(Error::invalid(format!("bad parent {p} for vertex {v}")));
                    }
                    children[p].push(v);
                }
            }
        }
        let root = root.ok_or_else(|| Error::invalid("no root in parent array"))?;
        // Reachability doubles as the acyclicity check.
        let mut seen = vec![false; n];
        let mut stack = vec![root];
        let mut count = 0;
        while let Some(v) = stack.pop() {
            if seen[v] {
                return Err(Error::invalid("parent array contains a cycle"));
            }
            seen[v] = true;
            count += 1;
            stack.extend(children[v].iter().copied());
        }
        if count != n {
            return Err(Error::invalid("parent array is disconnected"));
        }
        if root != 0 {
            // Rotate so the recursion below can assume root 0.
            let mut relabeled = vec![Vec::new(); n];
            let map = |v: usize| if v == root { 0 } else if v == 0 { root } else { v };
            for v in 0..n {
                relabeled[map(v)] = children[v].iter().map(|&c| map(c)).collect();
            }
            return Ok(Self::from_children(&relabeled));
        }
        Ok(Self::from_children(&children))
    }

    fn from_children(children: &[Vec<usize>]) -> Self {
        let (level_seq, aut) = canon_aut(children, 0);
        let max_deg = max_degree_of_children(children);
        let k_edges = level_seq.len() - 1;
        Self { level_seq, k_edges, aut, max_deg }
    }

    pub fn single_vertex() -> Self {
        Self { level_seq: vec![0], k_edges: 0, aut: BigUint::one(), max_deg: 0 }
    }

    pub fn n_vertices(&self) -> usize {
        self.level_seq.len()
    }

    /// Parent of each vertex in level-sequence (preorder) indexing; entry 0 is
    /// the root and maps to itself. Tree edges are (parents[i], i) for i ≥ 1.
    pub fn parents(&self) -> Vec<usize> {
        parents_from_seq(&self.level_seq)
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        children_from_seq(&self.level_seq)
    }

    pub fn subtree_sizes(&self) -> Vec<usize> {
        let n = self.n_vertices();
        let parents = self.parents();
        let mut sizes = vec![1usize; n];
        for v in (1..n).rev() {
            sizes[parents[v]] += sizes[v];
        }
        sizes
    }

    /// Returns the tree with one extra leaf attached at preorder vertex
    /// `attach`.
    pub fn add_leaf(&self, attach: usize) -> Result<Self> {
        let n = self.n_vertices();
        if attach >= n {
            return Err(Error::invalid(format!("attachment point {attach} out of range")));
        }
        let parents = self.parents();
        let mut parent_opt: Vec<Option<usize>> =
            (0..n).map(|v| if v == 0 { None } else { Some(parents[v]) }).collect();
        parent_opt.push(Some(attach));
        Self::from_parent_array(&parent_opt)
    }
}

fn validate_level_seq(seq: &[u8]) -> Result<()> {
    if seq.is_empty() {
        return Err(Error::invalid("empty level sequence"));
    }
    if seq[0] != 0 {
        return Err(Error::invalid("level sequence must start at depth 0"));
    }
    for i in 1..seq.len() {
        if seq[i] == 0 || seq[i] > seq[i - 1] + 1 {
            return Err(Error::invalid(format!(
                "level sequence invalid at position {i}: depth {} after {}",
                seq[i],
                seq[i - 1]
            )));
        }
    }
    Ok(())
}

fn parents_from_seq(seq: &[u8]) -> Vec<usize> {
    let mut parents = vec![0usize; seq.len()];
    // Stack of the current root-to-leaf path, indexed by depth.
    let mut path = vec![0usize; 1];
    for (i, &d) in seq.iter().enumerate().skip(1) {
        let d = d as usize;
        path.truncate(d);
        parents[i] = path[d - 1];
        path.push(i);
    }
    parents
}

fn children_from_seq(seq: &[u8]) -> Vec<Vec<usize>> {
    let parents = parents_from_seq(seq);
    let mut children = vec![Vec::new(); seq.len()];
    for (v, &p) in parents.iter().enumerate().skip(1) {
        children[p].push(v);
    }
    children
}

fn max_degree_of_children(children: &[Vec<usize>]) -> usize {
    children
        .iter()
        .enumerate()
        .map(|(v, c)| c.len() + usize::from(v != 0))
        .max()
        .unwrap_or(0)
}

pub fn factorial(n: usize) -> BigUint {
    let mut out = BigUint::one();
    for i in 2..=n {
        out *= BigUint::from(i);
    }
    out
}

/// Canonical subtree sequence and rooted automorphism count of `v`, by
/// recursive descent: children are grouped by canonical form; each group of
/// multiplicity m contributes the product of its members' counts times m!.
fn canon_aut(children: &[Vec<usize>], v: usize) -> (Vec<u8>, BigUint) {
    let mut subs: Vec<(Vec<u8>, BigUint)> =
        children[v].iter().map(|&c| canon_aut(children, c)).collect();
    subs.sort_by(|x, y| y.0.cmp(&x.0));
    let mut seq = Vec::with_capacity(1 + subs.iter().map(|s| s.0.len()).sum::<usize>());
    seq.push(0u8);
    let mut aut = BigUint::one();
    let mut i = 0;
    while i < subs.len() {
        let mut j = i;
        while j < subs.len() && subs[j].0 == subs[i].0 {
            j += 1;
        }
        for sub in &subs[i..j] {
            aut *= &sub.1;
            seq.extend(sub.0.iter().map(|&d| d + 1));
        }
        aut *= factorial(j - i);
        i = j;
    }
    (seq, aut)
}

/// Rooted automorphism count, recomputed from the canonical sequence.
pub fn aut_count(tree: &RootedTree) -> BigUint {
    canon_aut(&tree.children(), 0).1
}

/// Iterator over canonical level sequences with a fixed edge count, in
/// decreasing lexicographic order (path first, star last).
pub struct LevelSeqIter {
    current: Option<Vec<u8>>,
}

impl LevelSeqIter {
    pub fn new(k_edges: usize) -> Result<Self> {
        if k_edges > MAX_TREE_EDGES {
            return Err(Error::capacity(format!(
                "tree enumeration limited to {MAX_TREE_EDGES} edges, got {k_edges}"
            )));
        }
        Ok(Self { current: Some((0..=k_edges as u8).collect()) })
    }
}

impl Iterator for LevelSeqIter {
    type Item = Vec<u8>;

    fn next(&mut self) -> Option<Vec<u8>> {
        let seq = self.current.take()?;
        self.current = successor(&seq);
        Some(seq)
    }
}

/// Beyer–Hershberger successor: find the rightmost vertex p deeper than 1,
/// let q be its parent, and repeat the segment starting at q to the end.
fn successor(seq: &[u8]) -> Option<Vec<u8>> {
    let p = seq.iter().rposition(|&d| d >= 2)?;
    let q = seq[..p].iter().rposition(|&d| d == seq[p] - 1).expect("parent exists");
    let mut next = seq.to_vec();
    for i in p..next.len() {
        next[i] = next[i - (p - q)];
    }
    Some(next)
}

/// All rooted trees with the given edge count, one per isomorphism class.
pub fn enumerate_rooted_trees(k_edges: usize) -> Result<Vec<RootedTree>> {
    let iter = LevelSeqIter::new(k_edges)?;
    let mut out = Vec::new();
    for seq in iter {
        let children = children_from_seq(&seq);
        let (canon, aut) = canon_aut(&children, 0);
        debug_assert_eq!(canon, seq, "successor rule left canonical form");
        let max_deg = max_degree_of_children(&children);
        out.push(RootedTree { level_seq: seq, k_edges, aut, max_deg });
    }
    Ok(out)
}

/// Number of rooted-tree isomorphism classes with `k_edges` edges; runs the
/// successor loop without building trees.
pub fn count_rooted_trees(k_edges: usize) -> Result<u64> {
    Ok(LevelSeqIter::new(k_edges)?.count() as u64)
}

/// The filtered bulb catalog: all trees with `k` edges, automorphism count at
/// most `r_max`, and maximum degree at most `d_max` (`None` = unbounded).
#[derive(Debug, Clone, PartialEq)]
pub struct BulbCatalog {
    pub trees: Vec<RootedTree>,
    pub k: usize,
    pub r_max: Option<BigUint>,
    pub d_max: Option<usize>,
    /// |J(K,∞,∞)|, |J(K,R,∞)|, |J(K,∞,D)|.
    pub unfiltered_count: usize,
    pub r_only_count: usize,
    pub d_only_count: usize,
    /// Set when the filters removed everything.
    pub empty_warning: bool,
}

pub fn build_catalog(
    k: usize,
    r_max: Option<BigUint>,
    d_max: Option<usize>,
) -> Result<BulbCatalog> {
    let all = enumerate_rooted_trees(k)?;
    let unfiltered_count = all.len();
    let pass_r = |t: &RootedTree| r_max.as_ref().is_none_or(|r| t.aut <= *r);
    let pass_d = |t: &RootedTree| d_max.is_none_or(|d| t.max_deg <= d);
    let r_only_count = all.iter().filter(|t| pass_r(t)).count();
    let d_only_count = all.iter().filter(|t| pass_d(t)).count();
    let mut trees: Vec<RootedTree> = all.into_iter().filter(|t| pass_r(t) && pass_d(t)).collect();
    trees.sort_by(|x, y| x.level_seq.cmp(&y.level_seq));
    let empty_warning = trees.is_empty();
    Ok(BulbCatalog {
        trees,
        k,
        r_max,
        d_max,
        unfiltered_count,
        r_only_count,
        d_only_count,
        empty_warning,
    })
}

/// Natural log of an arbitrary-precision count, via its leading digits.
pub fn ln_biguint(x: &BigUint) -> f64 {
    let digits = x.to_string();
    let lead: f64 = digits[..digits.len().min(15)].parse().unwrap();
    lead.ln() + (digits.len().saturating_sub(15)) as f64 * std::f64::consts::LN_10
}

impl BulbCatalog {
    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    /// Natural logs of the automorphism counts, for diagnostics.
    pub fn log_aut_values(&self) -> Vec<f64> {
        self.trees.iter().map(|t| ln_biguint(&t.aut)).collect()
    }

    /// Serializes as a `K R D count` header plus one level sequence per line.
    pub fn to_text(&self) -> String {
        let r = self.r_max.as_ref().map_or("inf".to_string(), |r| r.to_string());
        let d = self.d_max.map_or("inf".to_string(), |d| d.to_string());
        let mut out = format!("{} {} {} {}\n", self.k, r, d, self.trees.len());
        for t in &self.trees {
            let line: Vec<String> = t.level_seq.iter().map(|d| d.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::parse("empty catalog"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse("catalog header must be `K R D count`"));
        }
        let k: usize =
            fields[0].parse().map_err(|_| Error::parse("bad K in catalog header"))?;
        let r_max = match fields[1] {
            "inf" => None,
            s => Some(s.parse::<BigUint>().map_err(|_| Error::parse("bad R in catalog header"))?),
        };
        let d_max = match fields[2] {
            "inf" => None,
            s => Some(s.parse::<usize>().map_err(|_| Error::parse("bad D in catalog header"))?),
        };
        let count: usize =
            fields[3].parse().map_err(|_| Error::parse("bad count in catalog header"))?;
        let mut trees = Vec::with_capacity(count);
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let seq: Vec<u8> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::parse(format!("bad depth {t:?}"))))
                .collect::<Result<_>>()?;
            let tree = RootedTree::from_level_seq(&seq)?;
            if tree.level_seq != seq {
                return Err(Error::parse("catalog contains a non-canonical sequence"));
            }
            if tree.k_edges != k {
                return Err(Error::parse("catalog tree has wrong edge count"));
            }
            trees.push(tree);
        }
        if trees.len() != count {
            return Err(Error::parse(format!(
                "catalog declares {count} trees but contains {}",
                trees.len()
            )));
        }
        if !trees.windows(2).all(|w| w[0].level_seq < w[1].level_seq) {
            return Err(Error::parse("catalog not strictly sorted"));
        }
        let rebuilt = build_catalog(k, r_max, d_max)?;
        if rebuilt.trees != trees {
            return Err(Error::parse("catalog content disagrees with its header filters"));
        }
        Ok(rebuilt)
    }
}
