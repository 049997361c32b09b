//! Brute-force reference implementations for cross-checking the generator,
//! the automorphism counter, and the counting kernels.
//!
//! Everything here trades speed for obviousness: embeddings come from a full
//! odometer scan, automorphisms from permutation search, and the shape census
//! from deduplicating all increasing parent arrays. None of it shares logic
//! with the production paths it validates.

use num_bigint::BigUint;
use num_traits::One;
use std::collections::HashSet;

use crate::counting::{Coloring, EdgeWeights};
use crate::treegen::RootedTree;
use crate::{Accumulator, Error, Result, Scalar};

/// Size caps for the exponential searches.
#[derive(Debug, Clone, Copy)]
pub struct OracleBudget {
    /// Host vertices allowed in the embedding scan.
    pub max_n: usize,
    /// Tree vertices allowed in the embedding scan.
    pub max_tree_vertices: usize,
    /// Vertices allowed in permutation and census searches.
    pub max_perm_vertices: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget { max_n: 12, max_tree_vertices: 8, max_perm_vertices: 10 }
    }
}

/// Embedding sum rooted at `root` by scanning every injective assignment of
/// tree vertices to hosts. With a coloring, only rainbow images count. In
/// subgraph mode the sum is divided by the brute-force automorphism count.
pub fn brute_embeddings<T: Scalar, W: EdgeWeights<T>>(
    root: usize,
    tree: &RootedTree,
    weights: &W,
    coloring: Option<&Coloring>,
    budget: &OracleBudget,
    subgraph_mode: bool,
) -> Result<T> {
    let v = tree.n_vertices();
    let n = weights.n();
    if v > budget.max_tree_vertices {
        return Err(Error::capacity(format!(
            "oracle embedding scan capped at {} tree vertices",
            budget.max_tree_vertices
        )));
    }
    if n > budget.max_n {
        return Err(Error::capacity(format!(
            "oracle embedding scan capped at {} hosts",
            budget.max_n
        )));
    }
    if root >= n {
        return Err(Error::invalid("root out of range"));
    }
    if let Some(c) = coloring {
        if c.colors.len() != n {
            return Err(Error::invalid("coloring length does not match host count"));
        }
    }

    let parents = tree.parents();
    let mut assign = vec![0usize; v];
    assign[0] = root;
    let mut acc = Accumulator::new();

    // Odometer over all (not just injective) assignments of positions 1..v.
    let slots = v - 1;
    if slots == 0 {
        if is_valid_image(&assign, coloring) {
            acc.add(T::one());
        }
    } else {
        let mut digits = vec![0usize; slots];
        'scan: loop {
            for (i, &d) in digits.iter().enumerate() {
                assign[i + 1] = d;
            }
            if is_valid_image(&assign, coloring) {
                let mut prod = T::one();
                for i in 1..v {
                    prod = prod * weights.weight(assign[parents[i]], assign[i]);
                }
                acc.add(prod);
            }
            let mut pos = slots - 1;
            loop {
                digits[pos] += 1;
                if digits[pos] < n {
                    break;
                }
                digits[pos] = 0;
                if pos == 0 {
                    break 'scan;
                }
                pos -= 1;
            }
        }
    }

    let total = acc.value();
    if subgraph_mode {
        let aut = brute_aut(tree, budget)?;
        let aut_f = aut.to_string().parse::<f64>().map_err(|_| {
            Error::capacity("automorphism count does not fit in f64".to_string())
        })?;
        Ok(total / T::from_f64(aut_f))
    } else {
        Ok(total)
    }
}

fn is_valid_image(assign: &[usize], coloring: Option<&Coloring>) -> bool {
    let mut used = 0u64;
    for &h in assign {
        if used & (1 << h) != 0 {
            return false;
        }
        used |= 1 << h;
    }
    if let Some(c) = coloring {
        let mut seen = 0u64;
        for &h in assign {
            let bit = 1u64 << c.colors[h];
            if seen & bit != 0 {
                return false;
            }
            seen |= bit;
        }
    }
    true
}

/// Root-fixing automorphism count by checking every permutation of the
/// non-root vertices for parent-relation preservation.
pub fn brute_aut(tree: &RootedTree, budget: &OracleBudget) -> Result<BigUint> {
    let v = tree.n_vertices();
    if v > budget.max_perm_vertices {
        return Err(Error::capacity(format!(
            "oracle automorphism search capped at {} vertices",
            budget.max_perm_vertices
        )));
    }
    if v <= 1 {
        return Ok(BigUint::one());
    }
    let parents = tree.parents();
    let mut perm: Vec<usize> = (0..v).collect();
    let mut count = 0u64;
    permute_tail(&mut perm, 1, &mut |p| {
        if (1..v).all(|i| parents[p[i]] == p[parents[i]]) {
            count += 1;
        }
    });
    Ok(BigUint::from(count))
}

fn permute_tail(perm: &mut Vec<usize>, from: usize, visit: &mut impl FnMut(&[usize])) {
    if from + 1 >= perm.len() {
        visit(perm);
        return;
    }
    for i in from..perm.len() {
        perm.swap(from, i);
        permute_tail(perm, from + 1, visit);
        perm.swap(from, i);
    }
}

/// Rooted isomorphism by searching for a root-fixing, parent-preserving
/// bijection.
pub fn brute_is_isomorphic(
    a: &RootedTree,
    b: &RootedTree,
    budget: &OracleBudget,
) -> Result<bool> {
    let v = a.n_vertices();
    if v > budget.max_perm_vertices {
        return Err(Error::capacity(format!(
            "oracle isomorphism search capped at {} vertices",
            budget.max_perm_vertices
        )));
    }
    if b.n_vertices() != v {
        return Ok(false);
    }
    if v <= 1 {
        return Ok(true);
    }
    let pa = a.parents();
    let pb = b.parents();
    let mut perm: Vec<usize> = (0..v).collect();
    let mut found = false;
    permute_tail(&mut perm, 1, &mut |p| {
        if !found && (1..v).all(|i| pb[p[i]] == p[pa[i]]) {
            found = true;
        }
    });
    Ok(found)
}

/// Canonical parenthesis encoding of a rooted tree given by a parent array
/// with `parents[root] == root`; children encodings are sorted before
/// concatenation, so two arrays encode equal iff the rooted trees are
/// isomorphic.
pub fn ahu_string(parents: &[usize]) -> Result<String> {
    let v = parents.len();
    let roots: Vec<usize> = (0..v).filter(|&i| parents[i] == i).collect();
    if roots.len() != 1 {
        return Err(Error::invalid("parent array must have exactly one root"));
    }
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); v];
    for i in 0..v {
        if i != roots[0] {
            if parents[i] >= v {
                return Err(Error::invalid("parent index out of range"));
            }
            children[parents[i]].push(i);
        }
    }
    let mut visited = vec![false; v];
    let s = encode(roots[0], &children, &mut visited)?;
    if visited.iter().any(|&f| !f) {
        return Err(Error::invalid("parent array is not connected"));
    }
    Ok(s)
}

fn encode(x: usize, children: &[Vec<usize>], visited: &mut [bool]) -> Result<String> {
    if visited[x] {
        return Err(Error::invalid("parent array contains a cycle"));
    }
    visited[x] = true;
    let mut parts: Vec<String> = children[x]
        .iter()
        .map(|&c| encode(c, children, visited))
        .collect::<Result<_>>()?;
    parts.sort();
    Ok(format!("({})", parts.concat()))
}

/// Number of rooted trees on `v` vertices up to isomorphism, from scratch:
/// every shape admits a labeling with parents earlier than children, so all
/// (v-1)! increasing parent arrays are generated and deduplicated by their
/// canonical encodings.
pub fn brute_rooted_tree_census(v: usize, budget: &OracleBudget) -> Result<u64> {
    if v == 0 {
        return Err(Error::invalid("census needs at least one vertex"));
    }
    if v > budget.max_perm_vertices {
        return Err(Error::capacity(format!(
            "oracle census capped at {} vertices",
            budget.max_perm_vertices
        )));
    }
    let mut parents = vec![0usize; v];
    let mut shapes: HashSet<String> = HashSet::new();
    census_scan(1, &mut parents, &mut shapes)?;
    Ok(shapes.len() as u64)
}

fn census_scan(
    pos: usize,
    parents: &mut Vec<usize>,
    shapes: &mut HashSet<String>,
) -> Result<()> {
    if pos == parents.len() {
        shapes.insert(ahu_string(parents)?);
        return Ok(());
    }
    for p in 0..pos {
        parents[pos] = p;
        census_scan(pos + 1, parents, shapes)?;
    }
    Ok(())
}
