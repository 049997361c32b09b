//! Signed subgraph counting: centered edge weights, exact embedding sums,
//! the colorful dynamic program, and the pairwise similarity score matrix.
//!
//! The score between vertex i of one graph and vertex j of the other is a
//! weighted inner product of signed chandelier counts rooted at i and j.
//! Exact counts enumerate injective embeddings and are kept for small cases;
//! production scoring estimates them with random colorings, where a count
//! restricted to rainbow images is unbiased after dividing by the probability
//! that a fixed image is rainbow.

use num_traits::ToPrimitive;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::io::{BufWriter, Read as IoRead, Write as IoWrite};
use std::path::Path;

use crate::chandelier::ChandelierFamily;
use crate::model::{streams, stream_rng, DerivedParams, Graph};
use crate::treegen::{ln_biguint, RootedTree};
use crate::{Accumulator, Error, Result, Scalar};

/// Symmetric edge weights on a host vertex set; the diagonal is never read.
pub trait EdgeWeights<T: Scalar>: Sync {
    fn n(&self) -> usize;
    fn weight(&self, u: usize, v: usize) -> T;
}

/// Adjacency entries centered by community pair: A_uv minus p for same-label
/// pairs and minus q for cross-label pairs, with a zero diagonal.
pub struct CenteredMatrix<'a, T: Scalar> {
    graph: &'a Graph,
    labels: &'a [i8],
    p_rate: T,
    q_rate: T,
}

impl<'a, T: Scalar> CenteredMatrix<'a, T> {
    pub fn new(graph: &'a Graph, labels: &'a [i8], p_rate: T, q_rate: T) -> Result<Self> {
        if labels.len() != graph.n() {
            return Err(Error::invalid("label vector length does not match graph"));
        }
        if labels.iter().any(|&l| l != 1 && l != -1) {
            return Err(Error::invalid("labels must be +1 or -1"));
        }
        for (name, r) in [("p", p_rate), ("q", q_rate)] {
            if r < T::zero() || r > T::one() {
                return Err(Error::invalid(format!("centering rate {name} outside [0, 1]")));
            }
        }
        Ok(CenteredMatrix { graph, labels, p_rate, q_rate })
    }
}

impl<T: Scalar> EdgeWeights<T> for CenteredMatrix<'_, T> {
    fn n(&self) -> usize {
        self.graph.n()
    }

    #[inline]
    fn weight(&self, u: usize, v: usize) -> T {
        if u == v {
            return T::zero();
        }
        let present = if self.graph.has_edge(u, v) { T::one() } else { T::zero() };
        let mean = if self.labels[u] == self.labels[v] { self.p_rate } else { self.q_rate };
        present - mean
    }
}

/// Dense symmetric weight buffer; the fast path for repeated DP passes.
pub struct DenseWeights<T> {
    n: usize,
    w: Vec<T>,
}

impl<T: Scalar> DenseWeights<T> {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut w = vec![T::zero(); n * n];
        for u in 0..n {
            for v in 0..n {
                w[u * n + v] = f(u, v);
            }
        }
        DenseWeights { n, w }
    }

    pub fn materialize<W: EdgeWeights<T>>(src: &W) -> Self {
        Self::from_fn(src.n(), |u, v| src.weight(u, v))
    }

    pub fn set(&mut self, u: usize, v: usize, val: T) {
        self.w[u * self.n + v] = val;
    }

    /// Symmetric weights with independent uniform entries in [-1, 1) and a
    /// zero diagonal; cross-check aid.
    pub fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut out = Self::from_fn(n, |_, _| T::zero());
        for u in 0..n {
            for v in (u + 1)..n {
                let x = T::from_f64(rng.gen_range(-1.0..1.0));
                out.set(u, v, x);
                out.set(v, u, x);
            }
        }
        out
    }
}

impl<T: Scalar> EdgeWeights<T> for DenseWeights<T> {
    fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn weight(&self, u: usize, v: usize) -> T {
        self.w[u * self.n + v]
    }
}

/// A host-vertex coloring with colors in 0..n_colors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coloring {
    pub colors: Vec<u8>,
    pub n_colors: usize,
}

impl Coloring {
    pub fn new(colors: Vec<u8>, n_colors: usize) -> Result<Self> {
        if n_colors == 0 || n_colors > 32 {
            return Err(Error::invalid("color count must be in 1..=32"));
        }
        if colors.iter().any(|&c| c as usize >= n_colors) {
            return Err(Error::invalid("color index out of range"));
        }
        Ok(Coloring { colors, n_colors })
    }

    /// Independent uniform colors for each host vertex.
    pub fn random(n: usize, n_colors: usize, rng: &mut ChaCha8Rng) -> Self {
        let colors = (0..n).map(|_| rng.gen_range(0..n_colors) as u8).collect();
        Coloring { colors, n_colors }
    }
}

/// Probability that a fixed set of `n_colors` vertices is rainbow under
/// uniform coloring with `n_colors` colors: n_colors! / n_colors^n_colors.
pub fn colorful_probability(n_colors: usize) -> f64 {
    (1..=n_colors).map(|i| i as f64 / n_colors as f64).product()
}

/// Default repetition count t = ceil(1 / colorful_probability).
pub fn default_repetitions(n_colors: usize) -> usize {
    (1.0 / colorful_probability(n_colors)).ceil() as usize
}

const EXACT_MAX_TREE: usize = 8;
const EXACT_MAX_HOSTS: usize = 64;

fn dp_guard(v: usize) -> Result<()> {
    let mut pow = 1u64;
    for _ in 0..v {
        pow = pow.saturating_mul(3);
    }
    if pow > 1 << 26 {
        return Err(Error::capacity(format!(
            "colorful DP needs 3^{v} mask states, above the 2^26 budget"
        )));
    }
    Ok(())
}

fn aut_as<T: Scalar>(tree: &RootedTree) -> T {
    T::from_f64(tree.aut.to_f64().unwrap_or(f64::INFINITY))
}

/// Signed subgraph count rooted at each host: injective embedding sum over
/// tree edges' weights, divided by the automorphism count.
pub fn exact_signed_counts<T: Scalar, W: EdgeWeights<T>>(
    tree: &RootedTree,
    weights: &W,
) -> Result<Vec<T>> {
    let v = tree.n_vertices();
    let n = weights.n();
    if v > EXACT_MAX_TREE {
        return Err(Error::capacity(format!(
            "exact count limited to trees with {EXACT_MAX_TREE} vertices, got {v}"
        )));
    }
    if n > EXACT_MAX_HOSTS {
        return Err(Error::capacity(format!(
            "exact count limited to {EXACT_MAX_HOSTS} hosts, got {n}"
        )));
    }
    let parents = tree.parents();
    let inv_aut = T::one() / aut_as::<T>(tree);
    let mut out = Vec::with_capacity(n);
    let mut assign = vec![0usize; v];
    for root in 0..n {
        assign[0] = root;
        let mut acc = Accumulator::new();
        embed(1, 1u64 << root, T::one(), &parents, weights, &mut assign, &mut acc);
        out.push(acc.value() * inv_aut);
    }
    Ok(out)
}

fn embed<T: Scalar, W: EdgeWeights<T>>(
    pos: usize,
    used: u64,
    prod: T,
    parents: &[usize],
    weights: &W,
    assign: &mut [usize],
    acc: &mut Accumulator<T>,
) {
    if pos == parents.len() {
        acc.add(prod);
        return;
    }
    let from = assign[parents[pos]];
    for host in 0..weights.n() {
        if used & (1 << host) != 0 {
            continue;
        }
        let w = weights.weight(from, host);
        if w == T::zero() {
            continue;
        }
        assign[pos] = host;
        embed(pos + 1, used | (1 << host), prod * w, parents, weights, assign, acc);
    }
}

/// Exact count for a single root; see [`exact_signed_counts`].
pub fn exact_signed_count<T: Scalar, W: EdgeWeights<T>>(
    root: usize,
    tree: &RootedTree,
    weights: &W,
) -> Result<T> {
    let all = exact_signed_counts(tree, weights)?;
    all.get(root).copied().ok_or_else(|| Error::invalid("root out of range"))
}

/// Rainbow-restricted signed counts for every root at once.
///
/// Dynamic program over (tree vertex, host, color mask) run bottom-up, with
/// masks limited to popcount equal to the subtree size. A child is folded in
/// by one weighted mat-vec over hosts followed by a disjoint-mask product.
pub fn colorful_signed_counts<T: Scalar, W: EdgeWeights<T>>(
    tree: &RootedTree,
    weights: &W,
    coloring: &Coloring,
) -> Result<Vec<T>> {
    let v = tree.n_vertices();
    let n = weights.n();
    if coloring.colors.len() != n {
        return Err(Error::invalid("coloring length does not match host count"));
    }
    if coloring.n_colors != v {
        return Err(Error::invalid(format!(
            "coloring uses {} colors but the tree has {v} vertices",
            coloring.n_colors
        )));
    }
    dp_guard(v)?;

    let children = tree.children();
    let sizes = tree.subtree_sizes();
    let masks = MaskTables::new(v);

    // Per-vertex tables in mask-major layout: value at [rank * n + host].
    let mut tables: Vec<Option<Vec<T>>> = vec![None; v];
    for x in (0..v).rev() {
        let mut cur = base_table(v, n, coloring);
        let mut cur_size = 1usize;
        for &c in &children[x] {
            let child = tables[c].take().expect("post-order fills children first");
            let child_size = sizes[c];
            let cc = child_matvec(&child, child_size, n, weights, &masks);
            cur = merge_disjoint(&cur, cur_size, &cc, child_size, n, &masks);
            cur_size += child_size;
        }
        debug_assert_eq!(cur_size, sizes[x]);
        tables[x] = Some(cur);
    }

    let root = tables[0].take().expect("root table present");
    debug_assert_eq!(root.len(), n);
    let inv_aut = T::one() / aut_as::<T>(tree);
    Ok(root.iter().map(|&x| x * inv_aut).collect())
}

/// Rainbow-restricted count for a single root; see [`colorful_signed_counts`].
pub fn colorful_signed_count<T: Scalar, W: EdgeWeights<T>>(
    root: usize,
    tree: &RootedTree,
    weights: &W,
    coloring: &Coloring,
) -> Result<T> {
    let all = colorful_signed_counts(tree, weights, coloring)?;
    all.get(root).copied().ok_or_else(|| Error::invalid("root out of range"))
}

struct MaskTables {
    by_size: Vec<Vec<u32>>,
    rank_of: Vec<u32>,
}

impl MaskTables {
    fn new(v: usize) -> Self {
        let mut by_size: Vec<Vec<u32>> = vec![Vec::new(); v + 1];
        let mut rank_of = vec![0u32; 1 << v];
        for mask in 0u32..(1u32 << v) {
            let s = mask.count_ones() as usize;
            rank_of[mask as usize] = by_size[s].len() as u32;
            by_size[s].push(mask);
        }
        MaskTables { by_size, rank_of }
    }
}

fn base_table<T: Scalar>(v: usize, n: usize, coloring: &Coloring) -> Vec<T> {
    // Size-1 masks enumerate in color order, so rank(1 << c) == c.
    let mut base = vec![T::zero(); v * n];
    for (u, &c) in coloring.colors.iter().enumerate() {
        base[c as usize * n + u] = T::one();
    }
    base
}

fn child_matvec<T: Scalar, W: EdgeWeights<T>>(
    child: &[T],
    child_size: usize,
    n: usize,
    weights: &W,
    masks: &MaskTables,
) -> Vec<T> {
    let nm = masks.by_size[child_size].len();
    let mut cc = vec![T::zero(); nm * n];
    for m_idx in 0..nm {
        let col = &child[m_idx * n..(m_idx + 1) * n];
        let out = &mut cc[m_idx * n..(m_idx + 1) * n];
        for (w, &val) in col.iter().enumerate() {
            if val == T::zero() {
                continue;
            }
            for (u, slot) in out.iter_mut().enumerate() {
                *slot += weights.weight(w, u) * val;
            }
        }
    }
    cc
}

fn merge_disjoint<T: Scalar>(
    cur: &[T],
    cur_size: usize,
    child: &[T],
    child_size: usize,
    n: usize,
    masks: &MaskTables,
) -> Vec<T> {
    let new_size = cur_size + child_size;
    let mut out = vec![T::zero(); masks.by_size[new_size].len() * n];
    for (a_idx, &ma) in masks.by_size[cur_size].iter().enumerate() {
        let a = &cur[a_idx * n..(a_idx + 1) * n];
        for (b_idx, &mb) in masks.by_size[child_size].iter().enumerate() {
            if ma & mb != 0 {
                continue;
            }
            let t_idx = masks.rank_of[(ma | mb) as usize] as usize;
            let b = &child[b_idx * n..(b_idx + 1) * n];
            let dst = &mut out[t_idx * n..(t_idx + 1) * n];
            for u in 0..n {
                dst[u] += a[u] * b[u];
            }
        }
    }
    out
}

/// Score matrix metadata persisted alongside the entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreMeta {
    pub preset: String,
    pub mode: String,
    pub centering: String,
    pub t: usize,
    pub seed: u64,
}

/// Pairwise similarity scores, row-major with rows indexing the first graph.
#[derive(Debug, Clone)]
pub struct ScoreMatrix<T> {
    pub n: usize,
    pub scores: Vec<T>,
    pub meta: ScoreMeta,
}

impl<T: Scalar> ScoreMatrix<T> {
    pub fn get(&self, i: usize, j: usize) -> T {
        self.scores[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.scores[i * self.n..(i + 1) * self.n]
    }

    /// Writes a short text header terminated by `end`, then row-major
    /// little-endian f64 entries.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "n {}", self.n)?;
        writeln!(w, "preset {}", self.meta.preset)?;
        writeln!(w, "mode {}", self.meta.mode)?;
        writeln!(w, "centering {}", self.meta.centering)?;
        writeln!(w, "t {}", self.meta.t)?;
        writeln!(w, "seed {}", self.meta.seed)?;
        writeln!(w, "end")?;
        for &x in &self.scores {
            w.write_all(&x.to_f64().to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }
}

impl ScoreMatrix<f64> {
    pub fn load(path: &Path) -> Result<Self> {
        let mut raw = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut raw)?;
        let mut meta = ScoreMeta {
            preset: String::new(),
            mode: String::new(),
            centering: String::new(),
            t: 0,
            seed: 0,
        };
        let mut n: Option<usize> = None;
        let mut offset = 0usize;
        loop {
            let rest = &raw[offset..];
            let eol = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| Error::parse("score header missing end marker"))?;
            let line = std::str::from_utf8(&rest[..eol])
                .map_err(|_| Error::parse("score header is not utf-8"))?;
            offset += eol + 1;
            if line == "end" {
                break;
            }
            let (key, value) = line
                .split_once(' ')
                .ok_or_else(|| Error::parse(format!("malformed header line {line:?}")))?;
            match key {
                "n" => {
                    n = Some(
                        value.parse().map_err(|_| Error::parse("bad n in score header"))?,
                    )
                }
                "preset" => meta.preset = value.to_string(),
                "mode" => meta.mode = value.to_string(),
                "centering" => meta.centering = value.to_string(),
                "t" => {
                    meta.t =
                        value.parse().map_err(|_| Error::parse("bad t in score header"))?
                }
                "seed" => {
                    meta.seed =
                        value.parse().map_err(|_| Error::parse("bad seed in score header"))?
                }
                other => return Err(Error::parse(format!("unknown header key {other:?}"))),
            }
        }
        let n = n.ok_or_else(|| Error::parse("score header missing n"))?;
        let body = &raw[offset..];
        if body.len() != n * n * 8 {
            return Err(Error::parse(format!(
                "score body has {} bytes, expected {}",
                body.len(),
                n * n * 8
            )));
        }
        let scores = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(ScoreMatrix { n, scores, meta })
    }
}

/// Per-entry compensated accumulation buffer.
struct VecAccum<T> {
    sum: Vec<T>,
    comp: Vec<T>,
}

impl<T: Scalar> VecAccum<T> {
    fn new(len: usize) -> Self {
        VecAccum { sum: vec![T::zero(); len], comp: vec![T::zero(); len] }
    }

    #[inline]
    fn add(&mut self, idx: usize, x: T) {
        let s = self.sum[idx];
        let t = s + x;
        self.comp[idx] += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        self.sum[idx] = t;
    }

    fn into_values(self) -> Vec<T> {
        self.sum.into_iter().zip(self.comp).map(|(s, c)| s + c).collect()
    }
}

fn accumulate_outer<T: Scalar>(
    acc: &mut VecAccum<T>,
    aut: T,
    wa: &[T],
    wb: &[T],
    n: usize,
) {
    let chunk = n.max(1);
    acc.sum
        .par_chunks_mut(chunk)
        .zip(acc.comp.par_chunks_mut(chunk))
        .enumerate()
        .for_each(|(i, (sum_row, comp_row))| {
            let scale = aut * wa[i];
            for j in 0..n {
                let x = scale * wb[j];
                let s = sum_row[j];
                let t = s + x;
                comp_row[j] += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
                sum_row[j] = t;
            }
        });
}

fn family_desc(family: &ChandelierFamily) -> String {
    format!("K{}L{}M{}", family.bulbs.k, family.l, family.m)
}

/// Exact score matrix: sum over family members of aut(H) times the outer
/// product of rooted counts in the two graphs. Small cases only.
pub fn score_matrix_exact<T: Scalar, W: EdgeWeights<T>>(
    ma: &W,
    mb: &W,
    family: &ChandelierFamily,
) -> Result<ScoreMatrix<T>> {
    let n = ma.n();
    if mb.n() != n {
        return Err(Error::invalid("score requires equal host counts"));
    }
    let mut acc = VecAccum::new(n * n);
    for member in family.members() {
        let wa = exact_signed_counts(&member.as_tree, ma)?;
        let wb = exact_signed_counts(&member.as_tree, mb)?;
        let aut = T::from_f64(member.aut.to_f64().unwrap_or(f64::INFINITY));
        accumulate_outer(&mut acc, aut, &wa, &wb, n);
    }
    Ok(ScoreMatrix {
        n,
        scores: acc.into_values(),
        meta: ScoreMeta {
            preset: family_desc(family),
            mode: "exact".to_string(),
            centering: "unspecified".to_string(),
            t: 0,
            seed: 0,
        },
    })
}

/// Unbiased colored score matrix.
///
/// Draws two independent banks of t colorings (one per graph), sums rainbow
/// counts over each bank, combines them through the family outer product, and
/// rescales by 1/(r t)^2 where r is the rainbow probability. Output is
/// deterministic for a fixed seed regardless of thread count: colorings are
/// pre-drawn and reductions keep a fixed order.
pub fn score_matrix_colored<T: Scalar, W: EdgeWeights<T>>(
    ma: &W,
    mb: &W,
    family: &ChandelierFamily,
    t: usize,
    seed: u64,
) -> Result<ScoreMatrix<T>> {
    let n = ma.n();
    if mb.n() != n {
        return Err(Error::invalid("score requires equal host counts"));
    }
    if t == 0 {
        return Err(Error::invalid("repetition count t must be positive"));
    }
    let v = family.n_non_root() + 1;
    dp_guard(v)?;
    let r = colorful_probability(v);

    let mut rng_a = stream_rng(seed, streams::USER_BASE);
    let mut rng_b = stream_rng(seed, streams::USER_BASE + 1);
    let bank_a: Vec<Coloring> = (0..t).map(|_| Coloring::random(n, v, &mut rng_a)).collect();
    let bank_b: Vec<Coloring> = (0..t).map(|_| Coloring::random(n, v, &mut rng_b)).collect();

    let mut acc = VecAccum::new(n * n);
    for member in family.members() {
        let sig_a = bank_signature(&member.as_tree, ma, &bank_a, n)?;
        let sig_b = bank_signature(&member.as_tree, mb, &bank_b, n)?;
        let aut = T::from_f64(member.aut.to_f64().unwrap_or(f64::INFINITY));
        accumulate_outer(&mut acc, aut, &sig_a, &sig_b, n);
    }
    let scale = T::from_f64(1.0) / (T::from_f64(r * r) * T::from_usize(t * t));
    let scores = acc.into_values().into_iter().map(|x| x * scale).collect();
    Ok(ScoreMatrix {
        n,
        scores,
        meta: ScoreMeta {
            preset: family_desc(family),
            mode: "colored".to_string(),
            centering: "unspecified".to_string(),
            t,
            seed,
        },
    })
}

/// Sum of rainbow counts over a coloring bank, one entry per root.
fn bank_signature<T: Scalar, W: EdgeWeights<T>>(
    tree: &RootedTree,
    weights: &W,
    bank: &[Coloring],
    n: usize,
) -> Result<Vec<T>> {
    let per_coloring: Vec<Vec<T>> = bank
        .par_iter()
        .map(|col| colorful_signed_counts(tree, weights, col))
        .collect::<Result<_>>()?;
    let mut acc = VecAccum::new(n);
    for counts in &per_coloring {
        for (i, &x) in counts.iter().enumerate() {
            acc.add(i, x);
        }
    }
    Ok(acc.into_values())
}

/// Natural log of the score scale mu = |T| (n rho sigma_eff^2)^N used for
/// thresholding; minus infinity when the correlation vanishes.
pub fn ln_mu(family: &ChandelierFamily, derived: &DerivedParams, n: usize) -> f64 {
    if derived.rho <= 0.0 || derived.sigma_eff_sq <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let edges = family.n_non_root() as f64;
    ln_biguint(&family.family_size)
        + edges * ((n as f64).ln() + derived.rho.ln() + derived.sigma_eff_sq.ln())
}

/// The score scale itself; may round to zero or infinity at extreme sizes.
pub fn mu_score(family: &ChandelierFamily, derived: &DerivedParams, n: usize) -> f64 {
    ln_mu(family, derived, n).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chandelier::{build_family, Preset};
    use crate::model::{generate_csbm, ModelParams};
    use crate::treegen::build_catalog;
    use crate::Real;

    fn path_tree(edges: usize) -> RootedTree {
        let seq: Vec<u8> = (0..=edges as u8).collect();
        RootedTree::from_level_seq(&seq).unwrap()
    }

    fn star_tree(edges: usize) -> RootedTree {
        let mut seq = vec![0u8];
        seq.extend(std::iter::repeat(1).take(edges));
        RootedTree::from_level_seq(&seq).unwrap()
    }

    fn random_dense(n: usize, seed: u64) -> DenseWeights<Real> {
        let mut rng = stream_rng(seed, streams::USER_BASE + 7);
        DenseWeights::random_symmetric(n, &mut rng)
    }

    #[test]
    fn single_edge_count_is_row_sum() {
        let n = 6;
        let w = random_dense(n, 1);
        let counts = exact_signed_counts(&path_tree(1), &w).unwrap();
        for i in 0..n {
            let row: f64 = (0..n).map(|j| w.weight(i, j)).sum();
            assert!((counts[i] - row).abs() < 1e-12);
        }
    }

    #[test]
    fn all_ones_counts_match_combinatorics() {
        let n = 9;
        let ones = DenseWeights::from_fn(n, |_, _| 1.0);
        let path = exact_signed_counts(&path_tree(2), &ones).unwrap();
        let star = exact_signed_counts(&star_tree(2), &ones).unwrap();
        let nn = n as f64;
        for i in 0..n {
            assert!((path[i] - (nn - 1.0) * (nn - 2.0)).abs() < 1e-9);
            assert!((star[i] - (nn - 1.0) * (nn - 2.0) / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn monochrome_coloring_counts_nothing() {
        let n = 5;
        let w = random_dense(n, 2);
        let coloring = Coloring::new(vec![0; n], 3).unwrap();
        let counts = colorful_signed_counts(&path_tree(2), &w, &coloring).unwrap();
        assert!(counts.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn distinct_colors_recover_exact_counts() {
        for tree in [path_tree(3), star_tree(3), RootedTree::from_level_seq(&[0, 1, 2, 1]).unwrap()]
        {
            let v = tree.n_vertices();
            let w = random_dense(v, 3);
            let coloring = Coloring::new((0..v as u8).collect(), v).unwrap();
            let exact = exact_signed_counts(&tree, &w).unwrap();
            let colored = colorful_signed_counts(&tree, &w, &coloring).unwrap();
            for (a, b) in exact.iter().zip(&colored) {
                assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn dp_matches_brute_rainbow_sum() {
        let n = 7;
        let w = random_dense(n, 4);
        let tree = RootedTree::from_level_seq(&[0, 1, 2, 2, 1]).unwrap();
        let mut rng = stream_rng(11, streams::USER_BASE + 9);
        for _ in 0..5 {
            let coloring = Coloring::random(n, tree.n_vertices(), &mut rng);
            let dp = colorful_signed_counts(&tree, &w, &coloring).unwrap();
            for root in 0..n {
                let brute = crate::oracle::brute_embeddings(
                    root,
                    &tree,
                    &w,
                    Some(&coloring),
                    &crate::oracle::OracleBudget::default(),
                    true,
                )
                .unwrap();
                assert!(
                    (dp[root] - brute).abs() <= 1e-9 * (1.0 + brute.abs()),
                    "root {root}: {} vs {brute}",
                    dp[root]
                );
            }
        }
    }

    #[test]
    fn centered_matrix_entries() {
        let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
        let labels = vec![1i8, 1, -1];
        let m = CenteredMatrix::new(&g, &labels, 0.7f64, 0.2).unwrap();
        assert!((m.weight(0, 1) - 0.3).abs() < 1e-15);
        assert!((m.weight(1, 0) - 0.3).abs() < 1e-15);
        assert!((m.weight(0, 2) + 0.2).abs() < 1e-15);
        assert!((m.weight(1, 2) + 0.2).abs() < 1e-15);
        assert_eq!(m.weight(2, 2), 0.0);

        let flipped: Vec<i8> = labels.iter().map(|&l| -l).collect();
        let mf = CenteredMatrix::new(&g, &flipped, 0.7, 0.2).unwrap();
        for u in 0..3 {
            for v in 0..3 {
                assert_eq!(m.weight(u, v), mf.weight(u, v));
            }
        }

        assert!(CenteredMatrix::<Real>::new(&g, &[1, 0, 1], 0.5, 0.1).is_err());
        assert!(CenteredMatrix::<Real>::new(&g, &[1, 1], 0.5, 0.1).is_err());
        assert!(CenteredMatrix::new(&g, &labels, 1.5, 0.1).is_err());
    }

    #[test]
    fn exact_score_transposes_under_swap() {
        let family = build_family(build_catalog(2, None, None).unwrap(), 1, 1).unwrap();
        let n = 8;
        let wa = random_dense(n, 5);
        let wb = random_dense(n, 6);
        let ab = score_matrix_exact(&wa, &wb, &family).unwrap();
        let ba = score_matrix_exact(&wb, &wa, &family).unwrap();
        for i in 0..n {
            for j in 0..n {
                let d = (ab.get(i, j) - ba.get(j, i)).abs();
                assert!(d <= 1e-9 * (1.0 + ab.get(i, j).abs()));
            }
        }
    }

    #[test]
    fn zero_weights_score_zero() {
        let family = Preset::Tiny.build().unwrap();
        let z = DenseWeights::from_fn(5, |_, _| 0.0);
        let m = score_matrix_colored(&z, &z, &family, 2, 9).unwrap();
        assert!(m.scores.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn colored_score_deterministic_across_thread_counts() {
        let family = Preset::Tiny.build().unwrap();
        let wa = random_dense(12, 8);
        let wb = random_dense(12, 9);
        let a = score_matrix_colored(&wa, &wb, &family, 3, 42).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| score_matrix_colored(&wa, &wb, &family, 3, 42).unwrap());
        assert_eq!(a.scores, b.scores);
    }

    #[test]
    fn rainbow_probability_and_default_t() {
        let r = colorful_probability(7);
        assert!((r - 5040.0 / 823543.0).abs() < 1e-15);
        assert_eq!(default_repetitions(7), 164);
        assert_eq!(default_repetitions(2), 2);
    }

    #[test]
    fn score_round_trip_via_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.bin");
        let family = Preset::Tiny.build().unwrap();
        let w = random_dense(6, 10);
        let mut m = score_matrix_colored(&w, &w, &family, 2, 3).unwrap();
        m.meta.preset = "tiny".to_string();
        m.meta.centering = "oracle".to_string();
        m.save(&path).unwrap();
        let back = ScoreMatrix::load(&path).unwrap();
        assert_eq!(back.n, m.n);
        assert_eq!(back.meta, m.meta);
        for (a, b) in m.scores.iter().zip(&back.scores) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn ln_mu_matches_regrouped_form() {
        let params = ModelParams::new(300, 25.0, 5.0, 0.9, 7).unwrap();
        let derived = params.derive();
        let family = Preset::Tiny.build().unwrap();
        let n_edges = family.n_non_root() as f64;
        let direct = ln_mu(&family, &derived, 300);
        let regrouped = ln_biguint(&family.family_size)
            + n_edges * (300f64).ln()
            + n_edges * derived.rho.ln()
            + 2.0 * n_edges * derived.sigma_eff_sq.sqrt().ln();
        assert!((direct - regrouped).abs() < 1e-12, "{direct} vs {regrouped}");
        assert!(mu_score(&family, &derived, 300).is_finite());
    }

    #[test]
    fn dp_guard_rejects_oversized_trees() {
        let catalog = build_catalog(5, None, None).unwrap();
        let family = build_family(catalog, 4, 1).unwrap();
        // N = 24 vertices plus root blows the mask budget.
        let w = DenseWeights::from_fn(4, |_, _| 1.0);
        let err = score_matrix_colored(&w, &w, &family, 1, 0).unwrap_err();
        assert!(matches!(err, Error::Capacity(_)));
    }

    #[test]
    fn centered_instance_weights_are_bounded() {
        let params = ModelParams::new(80, 6.0, 2.0, 0.8, 5).unwrap();
        let inst = generate_csbm(&params).unwrap();
        let d = params.derive();
        let m =
            CenteredMatrix::new(&inst.g1, &inst.sigma_star, d.ps, d.qs).unwrap();
        for u in 0..10 {
            for v in 0..10 {
                let w: f64 = m.weight(u, v);
                assert!(w.abs() <= 1.0);
                if u == v {
                    assert_eq!(w, 0.0);
                }
            }
        }
    }
}
