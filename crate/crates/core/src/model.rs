//! Correlated SBM instance generation and derived scalars.
//!
//! An instance is drawn in stages: independent ±1 community labels, a parent
//! graph with edge probability `p` inside communities and `q` across, two
//! independent `s`-subsamples of the parent, and a uniform relabeling of the
//! second subsample. Each stage reads its own ChaCha substream so components
//! can be reproduced independently.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// Substream roles for the seeded generator.
pub mod streams {
    pub const LABELS: u64 = 0;
    pub const PARENT: u64 = 1;
    pub const SUBSAMPLE_1: u64 = 2;
    pub const SUBSAMPLE_2: u64 = 3;
    pub const PERMUTATION: u64 = 4;
    /// First stream index free for downstream consumers (colorings, spectral
    /// starts, hold-out splits).
    pub const USER_BASE: u64 = 8;
}

/// Deterministic RNG for one (seed, role) pair.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Model parameters (n, a, b, s) plus the instance seed.
///
/// Edge probabilities are `p = a·ln(n)/n` and `q = b·ln(n)/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub s: f64,
    pub seed: u64,
}

impl ModelParams {
    pub fn new(n: usize, a: f64, b: f64, s: f64, seed: u64) -> Result<Self> {
        let params = Self { n, a, b, s, seed };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::invalid(format!("n = {} must be at least 4", self.n)));
        }
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(Error::invalid(format!("a = {} must be positive", self.a)));
        }
        if !(self.b > 0.0) || !self.b.is_finite() {
            return Err(Error::invalid(format!("b = {} must be positive", self.b)));
        }
        if !(0.0..=1.0).contains(&self.s) {
            return Err(Error::invalid(format!("s = {} must lie in [0, 1]", self.s)));
        }
        if self.p() > 1.0 || self.q() > 1.0 {
            return Err(Error::invalid(format!(
                "edge probabilities p = {:.4}, q = {:.4} exceed 1; n too small for a = {}, b = {}",
                self.p(),
                self.q(),
                self.a,
                self.b
            )));
        }
        Ok(())
    }

    /// In-community parent edge probability a·ln(n)/n.
    pub fn p(&self) -> f64 {
        self.a * (self.n as f64).ln() / self.n as f64
    }

    /// Cross-community parent edge probability b·ln(n)/n.
    pub fn q(&self) -> f64 {
        self.b * (self.n as f64).ln() / self.n as f64
    }

    pub fn derive(&self) -> DerivedParams {
        let p = self.p();
        let q = self.q();
        let s = self.s;
        let ps = s * p;
        let qs = s * q;
        let rho_plus = edge_correlation(s, p);
        let rho_minus = edge_correlation(s, q);
        let sigma_plus_sq = ps * (1.0 - ps);
        let sigma_minus_sq = qs * (1.0 - qs);
        DerivedParams {
            p,
            q,
            ps,
            qs,
            rho_plus,
            rho_minus,
            rho: 0.5 * (rho_plus + rho_minus),
            sigma_plus_sq,
            sigma_minus_sq,
            sigma_eff_sq: 0.5 * (sigma_plus_sq + sigma_minus_sq),
            d_plus: d_plus(self.a, self.b),
            delta: (ps - qs).abs(),
        }
    }
}

/// Correlation of one edge indicator across the two subsamples:
/// `s(1−rate)/(1−rate·s)`.
pub fn edge_correlation(s: f64, rate: f64) -> f64 {
    if rate * s >= 1.0 {
        return 1.0;
    }
    s * (1.0 - rate) / (1.0 - rate * s)
}

/// Chernoff–Hellinger divergence `(√a − √b)²/2`.
pub fn d_plus(a: f64, b: f64) -> f64 {
    let d = a.sqrt() - b.sqrt();
    0.5 * d * d
}

/// Scalars derived from [`ModelParams`]; `ps`/`qs` are the marginal edge
/// rates of each subsampled graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub p: f64,
    pub q: f64,
    pub ps: f64,
    pub qs: f64,
    pub rho_plus: f64,
    pub rho_minus: f64,
    pub rho: f64,
    pub sigma_plus_sq: f64,
    pub sigma_minus_sq: f64,
    pub sigma_eff_sq: f64,
    pub d_plus: f64,
    pub delta: f64,
}

/// Simple undirected graph: row bitsets for O(1) edge queries plus sorted
/// neighbor lists for O(deg) scans.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    words: usize,
    bits: Vec<u64>,
    adj: Vec<Vec<u32>>,
    m: usize,
}

impl Graph {
    pub fn new(n: usize) -> Self {
        let words = n.div_ceil(64);
        Self { n, words, bits: vec![0; n * words], adj: vec![Vec::new(); n], m: 0 }
    }

    /// Builds from an edge list; rejects self-loops, out-of-range endpoints,
    /// and duplicates.
    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Result<Self> {
        let mut g = Self::new(n);
        for &(u, v) in edges {
            if u == v {
                return Err(Error::parse(format!("self-loop at vertex {u}")));
            }
            if u as usize >= n || v as usize >= n {
                return Err(Error::parse(format!("edge ({u}, {v}) out of range for n = {n}")));
            }
            if g.has_edge(u as usize, v as usize) {
                return Err(Error::parse(format!("duplicate edge ({u}, {v})")));
            }
            g.insert_edge(u as usize, v as usize);
        }
        for list in &mut g.adj {
            list.sort_unstable();
        }
        Ok(g)
    }

    fn insert_edge(&mut self, u: usize, v: usize) {
        self.bits[u * self.words + v / 64] |= 1 << (v % 64);
        self.bits[v * self.words + u / 64] |= 1 << (u % 64);
        self.adj[u].push(v as u32);
        self.adj[v].push(u as u32);
        self.m += 1;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.bits[u * self.words + v / 64] >> (v % 64) & 1 == 1
    }

    #[inline]
    pub fn neighbors(&self, u: usize) -> &[u32] {
        &self.adj[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adj[u].len()
    }

    /// Edges as (u, v) with u < v, ascending.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.m);
        for u in 0..self.n {
            for &v in &self.adj[u] {
                if (u as u32) < v {
                    out.push((u as u32, v));
                }
            }
        }
        out
    }
}

/// A correlated pair of graphs with its ground truth.
///
/// `pi_star[i]` is the G2 id of G1 vertex i; `sigma_star` is indexed by G1
/// ids. `balanced` records whether ||V⁺| − n/2| ≤ n^{3/4} held at generation
/// (violations are flagged, not rejected).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatedInstance {
    pub params: ModelParams,
    pub g1: Graph,
    pub g2: Graph,
    pub sigma_star: Vec<i8>,
    pub pi_star: Vec<u32>,
    pub balanced: bool,
}

impl CorrelatedInstance {
    pub fn n(&self) -> usize {
        self.params.n
    }

    /// Ground-truth labels under G2's vertex ids: σ*∘π*⁻¹.
    pub fn sigma_star_g2(&self) -> Vec<i8> {
        let mut out = vec![0i8; self.n()];
        for (i, &j) in self.pi_star.iter().enumerate() {
            out[j as usize] = self.sigma_star[i];
        }
        out
    }

    pub fn pi_star_inverse(&self) -> Vec<u32> {
        let mut inv = vec![0u32; self.n()];
        for (i, &j) in self.pi_star.iter().enumerate() {
            inv[j as usize] = i as u32;
        }
        inv
    }
}

pub fn balanced_communities(sigma: &[i8]) -> bool {
    let n = sigma.len();
    let plus = sigma.iter().filter(|&&x| x > 0).count() as f64;
    (plus - n as f64 / 2.0).abs() <= (n as f64).powf(0.75)
}

/// Draws a correlated instance; deterministic given `params.seed`.
pub fn generate_csbm(params: &ModelParams) -> Result<CorrelatedInstance> {
    params.validate()?;
    let n = params.n;
    let p = params.p();
    let q = params.q();
    let s = params.s;

    let mut label_rng = stream_rng(params.seed, streams::LABELS);
    let sigma_star: Vec<i8> =
        (0..n).map(|_| if label_rng.gen::<bool>() { 1 } else { -1 }).collect();

    // Parent edges streamed row by row; the parent itself is never stored.
    let mut parent_rng = stream_rng(params.seed, streams::PARENT);
    let mut sub1_rng = stream_rng(params.seed, streams::SUBSAMPLE_1);
    let mut sub2_rng = stream_rng(params.seed, streams::SUBSAMPLE_2);
    let mut g1 = Graph::new(n);
    let mut e2_parent_ids: Vec<(u32, u32)> = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let rate = if sigma_star[u] == sigma_star[v] { p } else { q };
            if parent_rng.gen::<f64>() < rate {
                if sub1_rng.gen::<f64>() < s {
                    g1.insert_edge(u, v);
                }
                if sub2_rng.gen::<f64>() < s {
                    e2_parent_ids.push((u as u32, v as u32));
                }
            }
        }
    }
    for list in &mut g1.adj {
        list.sort_unstable();
    }

    let mut pi_star: Vec<u32> = (0..n as u32).collect();
    let mut perm_rng = stream_rng(params.seed, streams::PERMUTATION);
    // Fisher–Yates, high to low, so the sequence of draws is index-stable.
    for i in (1..n).rev() {
        let j = perm_rng.gen_range(0..=i);
        pi_star.swap(i, j);
    }

    let mut g2 = Graph::new(n);
    for &(u, v) in &e2_parent_ids {
        g2.insert_edge(pi_star[u as usize] as usize, pi_star[v as usize] as usize);
    }
    for list in &mut g2.adj {
        list.sort_unstable();
    }

    let balanced = balanced_communities(&sigma_star);
    Ok(CorrelatedInstance { params: *params, g1, g2, sigma_star, pi_star, balanced })
}

/// `h(x) = x·ln(x) − x + 1`, strictly increasing on (1, ∞) with h(1) = 0.
pub fn h<T: Scalar>(x: T) -> T {
    x * x.ln() - x + T::one()
}

/// Inverse of [`h`] on [1, ∞): the unique x ≥ 1 with h(x) = target.
///
/// Bisection to machine-level bracket width; for `f64` the round trip
/// `h(solve_h(t))` lands within 1e−12 of `t` at moderate targets.
pub fn solve_h<T: Scalar>(target: T) -> Result<T> {
    if !(target >= T::zero()) {
        return Err(Error::invalid(format!("solve_h target {target} must be nonnegative")));
    }
    if target == T::zero() {
        return Ok(T::one());
    }
    let mut lo = T::one();
    let mut hi = T::from_f64(2.0);
    while h(hi) < target {
        hi = hi * T::from_f64(2.0);
        if !hi.is_finite() {
            return Err(Error::invalid(format!("solve_h target {target} out of range")));
        }
    }
    for _ in 0..500 {
        let mid = (lo + hi) * T::from_f64(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) * T::from_f64(0.5))
}

#[derive(Serialize, Deserialize)]
struct MetaFile {
    params: ModelParams,
    derived: DerivedParams,
    balanced: bool,
}

/// Writes the on-disk bundle: `meta.json`, `g1.edges`, `g2.edges`,
/// `sigma.txt`, `pi.txt`.
pub fn save_instance(inst: &CorrelatedInstance, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = MetaFile {
        params: inst.params,
        derived: inst.params.derive(),
        balanced: inst.balanced,
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    write_edge_file(&dir.join("g1.edges"), &inst.g1)?;
    write_edge_file(&dir.join("g2.edges"), &inst.g2)?;

    let mut sigma = String::with_capacity(inst.n() * 3);
    for &x in &inst.sigma_star {
        sigma.push_str(if x > 0 { "1\n" } else { "-1\n" });
    }
    fs::write(dir.join("sigma.txt"), sigma)?;

    let mut pi = String::with_capacity(inst.n() * 6);
    for &j in &inst.pi_star {
        pi.push_str(&j.to_string());
        pi.push('\n');
    }
    fs::write(dir.join("pi.txt"), pi)?;
    Ok(())
}

fn write_edge_file(path: &Path, g: &Graph) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{} {}", g.n(), g.edge_count())?;
    for (u, v) in g.edges() {
        writeln!(w, "{u} {v}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a graph from the `n m` / `u v` text format.
pub fn load_graph(path: &Path) -> Result<Graph> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse("empty edge file"))??;
    let mut it = header.split_whitespace();
    let n: usize = parse_field(it.next(), "vertex count")?;
    let m: usize = parse_field(it.next(), "edge count")?;
    let mut edges = Vec::with_capacity(m);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let u: u32 = parse_field(it.next(), "edge endpoint")?;
        let v: u32 = parse_field(it.next(), "edge endpoint")?;
        if u >= v {
            return Err(Error::parse(format!("edge ({u}, {v}) not in u < v form")));
        }
        edges.push((u, v));
    }
    if edges.len() != m {
        return Err(Error::parse(format!(
            "edge file declares {m} edges but contains {}",
            edges.len()
        )));
    }
    Graph::from_edges(n, &edges)
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, what: &str) -> Result<T> {
    field
        .ok_or_else(|| Error::parse(format!("missing {what}")))?
        .parse()
        .map_err(|_| Error::parse(format!("unparseable {what}")))
}

/// Reads a bundle written by [`save_instance`], validating every invariant.
pub fn load_instance(dir: &Path) -> Result<CorrelatedInstance> {
    let meta: MetaFile = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    meta.params.validate()?;
    let n = meta.params.n;
    let g1 = load_graph(&dir.join("g1.edges"))?;
    let g2 = load_graph(&dir.join("g2.edges"))?;
    if g1.n() != n || g2.n() != n {
        return Err(Error::parse("graph sizes disagree with meta.json"));
    }

    let mut sigma_star = Vec::with_capacity(n);
    for line in fs::read_to_string(dir.join("sigma.txt"))?.lines() {
        match line.trim() {
            "1" | "+1" => sigma_star.push(1i8),
            "-1" => sigma_star.push(-1i8),
            other => return Err(Error::parse(format!("bad sigma entry {other:?}"))),
        }
    }
    if sigma_star.len() != n {
        return Err(Error::parse("sigma.txt length disagrees with n"));
    }

    let mut pi_star = Vec::with_capacity(n);
    for line in fs::read_to_string(dir.join("pi.txt"))?.lines() {
        let j: u32 = line
            .trim()
            .parse()
            .map_err(|_| Error::parse(format!("bad pi entry {line:?}")))?;
        if j as usize >= n {
            return Err(Error::parse(format!("pi entry {j} out of range")));
        }
        pi_star.push(j);
    }
    if pi_star.len() != n || pi_star.iter().collect::<BTreeSet<_>>().len() != n {
        return Err(Error::parse("pi.txt is not a permutation of 0..n"));
    }

    let balanced = meta.balanced;
    Ok(CorrelatedInstance { params: meta.params, g1, g2, sigma_star, pi_star, balanced })
}
