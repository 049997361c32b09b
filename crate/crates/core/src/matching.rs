//! Vertex matching: thresholded score-matrix matching, seeded local
//! boosting by common-neighbor counts, and the end-to-end pipeline from a
//! correlated instance to a matching with optional union-graph recovery.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::chandelier::Preset;
use crate::community::{
    recover_almost_exact, recover_exact_on_union, LabelEstimate,
};
use crate::counting::{
    default_repetitions, ln_mu, score_matrix_colored, CenteredMatrix, DenseWeights,
    ScoreMatrix,
};
use crate::model::{solve_h, CorrelatedInstance, Graph, ModelParams};
use crate::{Error, Real, Result, Scalar};

/// An injective partial map from first-graph to second-graph vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialMatching {
    map: Vec<Option<u32>>,
    target_used: Vec<bool>,
    /// Score threshold that produced this matching, when applicable.
    pub tau: Option<f64>,
    /// Threshold prefactor c in tau = c mu, when applicable.
    pub c: Option<f64>,
}

impl PartialMatching {
    pub fn new(n: usize) -> Self {
        PartialMatching {
            map: vec![None; n],
            target_used: vec![false; n],
            tau: None,
            c: None,
        }
    }

    pub fn from_pairs(n: usize, pairs: &[(u32, u32)]) -> Result<Self> {
        let mut m = Self::new(n);
        for &(i, j) in pairs {
            m.insert(i, j)?;
        }
        Ok(m)
    }

    pub fn insert(&mut self, i: u32, j: u32) -> Result<()> {
        let n = self.map.len();
        if i as usize >= n || j as usize >= n {
            return Err(Error::invalid("matched pair out of range"));
        }
        if self.map[i as usize].is_some() {
            return Err(Error::invalid(format!("source {i} already matched")));
        }
        if self.target_used[j as usize] {
            return Err(Error::invalid(format!("target {j} already matched")));
        }
        self.map[i as usize] = Some(j);
        self.target_used[j as usize] = true;
        Ok(())
    }

    pub fn get(&self, i: usize) -> Option<u32> {
        self.map[i]
    }

    pub fn n(&self) -> usize {
        self.map.len()
    }

    pub fn matched_count(&self) -> usize {
        self.map.iter().filter(|x| x.is_some()).count()
    }

    pub fn is_full(&self) -> bool {
        self.map.iter().all(|x| x.is_some())
    }

    pub fn is_target_used(&self, j: usize) -> bool {
        self.target_used[j]
    }

    pub fn pairs(&self) -> Vec<(u32, u32)> {
        self.map
            .iter()
            .enumerate()
            .filter_map(|(i, j)| j.map(|j| (i as u32, j)))
            .collect()
    }

    /// The underlying permutation; None unless every vertex is matched.
    pub fn as_permutation(&self) -> Option<Vec<u32>> {
        self.map.iter().copied().collect()
    }

    /// Writes one `i j` line per matched pair, in source order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        for (i, j) in self.pairs() {
            writeln!(w, "{i} {j}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path, n: usize) -> Result<Self> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut pairs = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let i = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::parse(format!("bad matching line {line:?}")))?;
            let j = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::parse(format!("bad matching line {line:?}")))?;
            if it.next().is_some() {
                return Err(Error::parse(format!("bad matching line {line:?}")));
            }
            pairs.push((i, j));
        }
        Self::from_pairs(n, &pairs)
    }
}

/// Match quality against the planted permutation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchMetrics {
    pub matched_fraction: f64,
    /// Fraction of matched pairs that agree with the planted permutation;
    /// vacuously 1 when nothing is matched.
    pub correct_fraction: f64,
    pub exact: bool,
}

/// Keeps (i, j) iff j is the only entry at or above tau in row i and i is
/// the only claimant of j; colliding claimants are all dropped.
pub fn threshold_match<T: Scalar>(scores: &ScoreMatrix<T>, tau: T) -> PartialMatching {
    let n = scores.n;
    let mut candidate: Vec<Option<u32>> = vec![None; n];
    for i in 0..n {
        let row = scores.row(i);
        let mut hit = None;
        for (j, &x) in row.iter().enumerate() {
            if x >= tau {
                if hit.is_some() {
                    hit = None;
                    break;
                }
                hit = Some(j as u32);
            }
        }
        candidate[i] = hit;
    }
    let mut claims = vec![0u32; n];
    for j in candidate.iter().flatten() {
        claims[*j as usize] += 1;
    }
    let mut out = PartialMatching::new(n);
    for (i, j) in candidate.iter().enumerate() {
        if let Some(j) = j {
            if claims[*j as usize] == 1 {
                out.insert(i as u32, *j).expect("claims filter keeps this injective");
            }
        }
    }
    out.tau = Some(tau.to_f64());
    out
}

pub fn evaluate(matching: &PartialMatching, pi_star: &[u32]) -> Result<MatchMetrics> {
    let n = matching.n();
    if pi_star.len() != n {
        return Err(Error::invalid("permutation length does not match matching"));
    }
    let pairs = matching.pairs();
    let matched = pairs.len();
    let correct = pairs.iter().filter(|&&(i, j)| pi_star[i as usize] == j).count();
    let correct_fraction = if matched == 0 { 1.0 } else { correct as f64 / matched as f64 };
    Ok(MatchMetrics {
        matched_fraction: matched as f64 / n as f64,
        correct_fraction,
        exact: matched == n && correct == matched,
    })
}

/// Boost outcome bookkeeping.
#[derive(Debug, Clone, Copy)]
pub struct BoostReport {
    pub gamma: f64,
    pub threshold: f64,
    /// Pairs added beyond the seeds.
    pub added: usize,
    pub complete: bool,
}

/// The boost acceptance threshold: gamma solves
/// h(gamma) = 3 ln n / ((n-2) p q s^2) with h(x) = x ln x - x + 1, and the
/// count cutoff is gamma ((p^2+q^2)/2) s^2 (n + 2 n^{3/4}).
pub fn boost_threshold(params: &ModelParams) -> Result<(f64, f64)> {
    let n = params.n as f64;
    let (p, q, s) = (params.p(), params.q(), params.s);
    let denom = (n - 2.0) * p * q * s * s;
    if denom <= 0.0 {
        return Err(Error::invalid(
            "boost threshold needs positive edge rates and subsampling",
        ));
    }
    let target = 3.0 * n.ln() / denom;
    let gamma: f64 = solve_h(target)?;
    let threshold = gamma * (p * p + q * q) / 2.0 * s * s * (n + 2.0 * n.powf(0.75));
    Ok((gamma, threshold))
}

/// Grows a seed matching by repeatedly matching pairs whose matched common
/// neighbors reach the boost threshold, in first-qualified order.
///
/// A dense count table tracks, for every (i, j), how many matched pairs
/// (u, v) have u adjacent to i and v adjacent to j; each accepted pair bumps
/// its neighbor-pair counts, and pairs crossing the cutoff join a FIFO queue.
/// Seeds are never modified. If the queue drains early the result stays
/// partial and the report says so.
pub fn seeded_boost(
    g1: &Graph,
    g2: &Graph,
    seeds: &PartialMatching,
    params: &ModelParams,
) -> Result<(PartialMatching, BoostReport)> {
    let n = g1.n();
    if g2.n() != n || seeds.n() != n || params.n != n {
        return Err(Error::invalid("boost inputs disagree on vertex count"));
    }
    let (gamma, threshold) = boost_threshold(params)?;
    let cutoff = threshold.ceil().max(1.0) as u32;

    let mut matching = seeds.clone();
    let mut counts = vec![0u32; n * n];
    for (u, v) in seeds.pairs() {
        for &i in g1.neighbors(u as usize) {
            let base = i as usize * n;
            for &j in g2.neighbors(v as usize) {
                counts[base + j as usize] += 1;
            }
        }
    }

    let mut queue: VecDeque<(u32, u32)> = VecDeque::new();
    for i in 0..n {
        if matching.get(i).is_some() {
            continue;
        }
        for j in 0..n {
            if !matching.is_target_used(j) && counts[i * n + j] >= cutoff {
                queue.push_back((i as u32, j as u32));
            }
        }
    }

    let mut added = 0usize;
    while let Some((i, j)) = queue.pop_front() {
        if matching.get(i as usize).is_some() || matching.is_target_used(j as usize) {
            continue;
        }
        matching.insert(i, j)?;
        added += 1;
        for &ni in g1.neighbors(i as usize) {
            if matching.get(ni as usize).is_some() {
                continue;
            }
            let base = ni as usize * n;
            for &nj in g2.neighbors(j as usize) {
                let idx = base + nj as usize;
                counts[idx] += 1;
                if counts[idx] == cutoff && !matching.is_target_used(nj as usize) {
                    queue.push_back((ni, nj));
                }
            }
        }
    }

    let complete = matching.is_full();
    Ok((matching, BoostReport { gamma, threshold, added, complete }))
}

/// Pipeline knobs; defaults follow the recommended operating point.
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub preset: Preset,
    /// Use planted labels for centering instead of spectral estimates.
    pub oracle_labels: bool,
    /// Threshold prefactor: tau = c mu.
    pub c: f64,
    /// Coloring repetitions; defaults to ceil(1/r) for the preset.
    pub t: Option<usize>,
    /// When set, tau comes from this empirical score quantile instead.
    pub tau_quantile: Option<f64>,
    pub boost: bool,
    pub union_recovery: bool,
    pub eps: f64,
    pub seed: u64,
}

impl PipelineOptions {
    pub fn new(preset: Preset) -> Self {
        PipelineOptions {
            preset,
            oracle_labels: false,
            c: 0.5,
            t: None,
            tau_quantile: None,
            boost: true,
            union_recovery: false,
            eps: 0.25,
            seed: 0,
        }
    }
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub scores: ScoreMatrix<Real>,
    pub tau: f64,
    pub ln_mu: f64,
    pub matching: PartialMatching,
    pub metrics: MatchMetrics,
    pub boost: Option<BoostReport>,
    pub labels_g1: LabelEstimate,
    pub labels_g2: LabelEstimate,
    /// Union-graph recovery result; present only when requested and the
    /// matching came out full.
    pub union_labels: Option<LabelEstimate>,
}

fn oracle_estimate(labels: Vec<i8>, eps: f64) -> LabelEstimate {
    LabelEstimate { labels, m_parts: 0, eps, degenerate: false, converged: true }
}

/// Scores, matches, optionally boosts, and optionally recovers communities
/// on the union graph of one correlated instance.
pub fn full_pipeline(
    inst: &CorrelatedInstance,
    opts: &PipelineOptions,
) -> Result<PipelineOutput> {
    let params = &inst.params;
    let n = inst.n();
    let derived = params.derive();

    let (labels_g1, labels_g2) = if opts.oracle_labels {
        (
            oracle_estimate(inst.sigma_star.clone(), opts.eps),
            oracle_estimate(inst.sigma_star_g2(), opts.eps),
        )
    } else {
        (
            recover_almost_exact(&inst.g1, params.a, params.b, opts.eps, opts.seed),
            recover_almost_exact(&inst.g2, params.a, params.b, opts.eps, opts.seed + 1),
        )
    };

    let family = opts.preset.build()?;
    let t = opts.t.unwrap_or_else(|| default_repetitions(family.n_non_root() + 1));
    let ca = CenteredMatrix::new(&inst.g1, &labels_g1.labels, derived.ps, derived.qs)?;
    let cb = CenteredMatrix::new(&inst.g2, &labels_g2.labels, derived.ps, derived.qs)?;
    let da = DenseWeights::materialize(&ca);
    let db = DenseWeights::materialize(&cb);
    let mut scores = score_matrix_colored(&da, &db, &family, t, opts.seed)?;
    scores.meta.preset = opts.preset.name().to_string();
    scores.meta.centering =
        if opts.oracle_labels { "oracle" } else { "estimated" }.to_string();

    let lm = ln_mu(&family, &derived, n);
    let tau = match opts.tau_quantile {
        Some(qt) => {
            if !(0.0..1.0).contains(&qt) {
                return Err(Error::invalid("tau quantile must lie in [0, 1)"));
            }
            let mut sorted = scores.scores.clone();
            sorted.sort_by(f64::total_cmp);
            sorted[((sorted.len() - 1) as f64 * qt).round() as usize]
        }
        None => (opts.c.ln() + lm).exp(),
    };

    let mut matching = threshold_match(&scores, tau);
    matching.c = Some(opts.c);
    let boost = if opts.boost {
        let (grown, report) = seeded_boost(&inst.g1, &inst.g2, &matching, params)?;
        matching = grown;
        Some(report)
    } else {
        None
    };
    let metrics = evaluate(&matching, &inst.pi_star)?;

    let union_labels = match (opts.union_recovery, matching.as_permutation()) {
        (true, Some(perm)) => {
            Some(recover_exact_on_union(inst, &perm, opts.eps, opts.seed)?)
        }
        _ => None,
    };

    Ok(PipelineOutput {
        scores,
        tau,
        ln_mu: lm,
        matching,
        metrics,
        boost,
        labels_g1,
        labels_g2,
        union_labels,
    })
}
