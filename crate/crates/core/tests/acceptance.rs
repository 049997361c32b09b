//! Acceptance gate for the whole pipeline: thirteen end-to-end checks, each
//! printing one [PASS]/[FAIL] line before asserting, so a full run doubles as
//! a checklist. Everything is seeded; reruns produce identical verdicts.

use std::collections::BTreeSet;
use std::time::Instant;

use num_bigint::BigUint;
use rand::Rng;

use csbm_core::chandelier::{build_family, Preset};
use csbm_core::community::{
    label_error_fraction, recover_almost_exact, recover_exact_on_union, recovery_diagnostics,
};
use csbm_core::counting::{
    colorful_probability, colorful_signed_count, exact_signed_count, CenteredMatrix, Coloring,
    DenseWeights, EdgeWeights,
};
use csbm_core::harness::{run_sweep, LabelMode, SweepSpec};
use csbm_core::matching::{boost_threshold, full_pipeline, PartialMatching, PipelineOptions};
use csbm_core::matching::seeded_boost;
use csbm_core::model::{generate_csbm, h, stream_rng, streams, ModelParams};
use csbm_core::oracle::{brute_aut, brute_embeddings, brute_rooted_tree_census, OracleBudget};
use csbm_core::treegen::{
    aut_count, build_catalog, count_rooted_trees, enumerate_rooted_trees, RootedTree,
};

fn verdict(name: &str, pass: bool, detail: &str) -> bool {
    println!("{} {name}: {detail}", if pass { "[PASS]" } else { "[FAIL]" });
    pass
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() as f64 * q).ceil() as usize).max(1) - 1;
    sorted[idx.min(sorted.len() - 1)]
}

/// P(Binomial(m, 1/2) >= k), exact.
fn sign_test_p(m: usize, k: usize) -> f64 {
    if m == 0 {
        return 1.0;
    }
    let mut coeff = 1.0f64;
    let mut tail = 0.0f64;
    for j in 0..=m {
        if j >= k {
            tail += coeff;
        }
        coeff = coeff * (m - j) as f64 / (j + 1) as f64;
    }
    tail / 2f64.powi(m as i32)
}

#[test]
fn a01_tree_census_matches_oracle() {
    let t0 = Instant::now();
    let budget = OracleBudget { max_n: 12, max_tree_vertices: 8, max_perm_vertices: 10 };
    let mut counts = Vec::new();
    let mut agree = true;
    for v in 1..=10usize {
        let slow = brute_rooted_tree_census(v, &budget).unwrap();
        let fast = count_rooted_trees(v - 1).unwrap();
        agree &= slow == fast;
        counts.push(slow);
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = agree && secs < 10.0;
    let detail = format!("counts {counts:?}, {secs:.1}s");
    assert!(verdict("a01 census 1..=10 vertices vs oracle", pass, &detail));
}

#[test]
fn a02_rooted_tree_growth_ratio() {
    let t0 = Instant::now();
    let counts: Vec<u64> = (10..=18).map(|k| count_rooted_trees(k).unwrap()).collect();
    let ratios: Vec<f64> =
        counts.windows(2).map(|w| w[1] as f64 / w[0] as f64).collect();
    let in_band = ratios.iter().all(|r| (2.5..=3.0).contains(r));
    let secs = t0.elapsed().as_secs_f64();
    let pass = in_band && secs < 60.0;
    let detail = format!(
        "ratios {:?}, {secs:.1}s",
        ratios.iter().map(|r| (r * 1000.0).round() / 1000.0).collect::<Vec<_>>()
    );
    assert!(verdict("a02 growth ratio in [2.5, 3.0]", pass, &detail));
}

#[test]
fn a03_automorphism_counts_agree() {
    let budget = OracleBudget::default();
    let mut trees_checked = 0usize;
    let mut agree = true;
    for k in 0..=8usize {
        for tree in enumerate_rooted_trees(k).unwrap() {
            agree &= aut_count(&tree) == brute_aut(&tree, &budget).unwrap();
            trees_checked += 1;
        }
    }

    // Product rule over random members of a 1140-member family.
    let family = build_family(build_catalog(5, None, None).unwrap(), 3, 2).unwrap();
    let n_bulbs = family.bulbs.len();
    let mut rng = stream_rng(3, streams::USER_BASE + 20);
    let mut members_checked = 0usize;
    let mut product_rule = true;
    while members_checked < 100 {
        let mut ids = BTreeSet::new();
        while ids.len() < 3 {
            ids.insert(rng.gen_range(0..n_bulbs));
        }
        let ids: Vec<usize> = ids.into_iter().collect();
        let c = family.assemble(&ids).unwrap();
        product_rule &= c.aut == aut_count(&c.as_tree);
        members_checked += 1;
    }

    let pass = agree && product_rule;
    let detail = format!("{trees_checked} trees exhaustive, {members_checked} members");
    assert!(verdict("a03 aut counts vs oracle + product rule", pass, &detail));
}

#[test]
fn a04_leaf_attachment_aut_bounds() {
    let pools: Vec<Vec<RootedTree>> =
        (1..=11).map(|k| enumerate_rooted_trees(k).unwrap()).collect();
    let mut rng = stream_rng(4, streams::USER_BASE + 20);
    let mut violations = 0usize;
    for _ in 0..1000 {
        let pool = &pools[rng.gen_range(0..pools.len())];
        let t = &pool[rng.gen_range(0..pool.len())];
        let v = t.n_vertices();
        let t2 = t.add_leaf(rng.gen_range(0..v)).unwrap();
        let a1 = aut_count(t);
        let a2 = aut_count(&t2);
        // a1 / (v - 1) <= a2 <= a1 * v, compared multiplied out.
        if a1 > &a2 * BigUint::from(v - 1) || a2 > &a1 * BigUint::from(v) {
            violations += 1;
        }
    }

    // Star tightness: both bounds are equalities for a 5-leaf star.
    let star = RootedTree::from_level_seq(&[0, 1, 1, 1, 1, 1]).unwrap();
    let at_center = star.add_leaf(0).unwrap();
    let at_leaf = star.add_leaf(1).unwrap();
    let hi_tight = aut_count(&at_center) == aut_count(&star) * BigUint::from(6u32);
    let lo_tight = aut_count(&at_leaf) * BigUint::from(5u32) == aut_count(&star);

    let pass = violations == 0 && hi_tight && lo_tight;
    let detail = format!("{violations}/1000 violations, star equalities {hi_tight}/{lo_tight}");
    assert!(verdict("a04 leaf-attachment aut bounds", pass, &detail));
}

#[test]
fn a05_colored_dp_matches_oracle() {
    let t0 = Instant::now();
    let budget = OracleBudget::default();
    let pools: Vec<Vec<RootedTree>> =
        (1..=6).map(|k| enumerate_rooted_trees(k).unwrap()).collect();
    let mut rng = stream_rng(5, streams::USER_BASE + 20);
    let mut worst = 0.0f64;
    let mut bad = 0usize;
    for _ in 0..500 {
        let k = rng.gen_range(1..=6);
        let pool = &pools[k - 1];
        let tree = &pool[rng.gen_range(0..pool.len())];
        let v = k + 1;
        let n = rng.gen_range(v..=10);
        let w = DenseWeights::<f64>::random_symmetric(n, &mut rng);
        let coloring = Coloring::random(n, v, &mut rng);
        let root = rng.gen_range(0..n);
        let slow: f64 =
            brute_embeddings(root, tree, &w, Some(&coloring), &budget, true).unwrap();
        let fast: f64 = colorful_signed_count(root, tree, &w, &coloring).unwrap();
        let rel = (fast - slow).abs() / slow.abs().max(1.0);
        worst = worst.max(rel);
        if rel > 1e-9 {
            bad += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = bad == 0 && secs < 120.0;
    let detail = format!("500 fuzz cases, worst rel err {worst:.2e}, {secs:.1}s");
    assert!(verdict("a05 colored dp vs oracle", pass, &detail));
}

#[test]
fn a06_colored_estimator_is_unbiased() {
    let trees = enumerate_rooted_trees(4).unwrap();
    let r = colorful_probability(5);
    let reps = 10_000usize;
    let mut within = 0usize;
    let mut zs = Vec::new();
    for instance in 0..20u64 {
        let mut rng = stream_rng(600 + instance, streams::USER_BASE + 20);
        let tree = &trees[rng.gen_range(0..trees.len())];
        let n = 8;
        let w = DenseWeights::<f64>::random_symmetric(n, &mut rng);
        let exact: f64 = exact_signed_count(0, tree, &w).unwrap();
        let mut sum = 0.0f64;
        let mut sum_sq = 0.0f64;
        for _ in 0..reps {
            let coloring = Coloring::random(n, 5, &mut rng);
            let x: f64 = colorful_signed_count(0, tree, &w, &coloring).unwrap();
            let scaled = x / r;
            sum += scaled;
            sum_sq += scaled * scaled;
        }
        let mean = sum / reps as f64;
        let var = (sum_sq / reps as f64 - mean * mean).max(0.0);
        let se = (var / reps as f64).sqrt();
        let z = if se > 0.0 { (mean - exact) / se } else { 0.0 };
        zs.push((z * 100.0).round() / 100.0);
        if z.abs() <= 3.0 {
            within += 1;
        }
    }
    let pass = within >= 19;
    let detail = format!("{within}/20 within 3 se, z {zs:?}");
    assert!(verdict("a06 colored estimator unbiased", pass, &detail));
}

#[test]
fn a07_edge_cross_moments() {
    let params = ModelParams::new(2000, 40.0, 10.0, 0.9, 0).unwrap();
    let d = params.derive();
    let targets = [
        (d.p, d.rho_plus * d.sigma_plus_sq),
        (d.q, d.rho_minus * d.sigma_minus_sq),
    ];
    let mut good_seeds = 0usize;
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let mut rng = stream_rng(700 + seed, streams::USER_BASE + 21);
        let mut seed_ok = true;
        for &(rate, target) in &targets {
            let marginal = rate * params.s;
            let mut acc = 0.0f64;
            for _ in 0..1_000_000 {
                let parent = rng.gen_bool(rate);
                let ea = parent && rng.gen_bool(params.s);
                let eb = parent && rng.gen_bool(params.s);
                acc += (ea as u8 as f64 - marginal) * (eb as u8 as f64 - marginal);
            }
            let rel = (acc / 1e6 - target).abs() / target;
            worst = worst.max(rel);
            seed_ok &= rel <= 0.05;
        }
        if seed_ok {
            good_seeds += 1;
        }
    }
    let pass = good_seeds >= 9;
    let detail = format!("{good_seeds}/10 seeds within 5%, worst rel {worst:.4}");
    assert!(verdict("a07 cross moments vs rho sigma^2", pass, &detail));
}

#[test]
fn a08_mislabeled_centering_bias() {
    // s = 1, so the marginal and parent rates coincide and the bias from one
    // flipped endpoint is exactly +-(p - q).
    let params = ModelParams::new(3000, 10.0, 3.0, 1.0, 808).unwrap();
    let inst = generate_csbm(&params).unwrap();
    let d = params.derive();
    let n = params.n;
    let flipped: Vec<bool> = (0..n).map(|v| v % 6 == 0).collect();
    let mut labels = inst.sigma_star.clone();
    for v in 0..n {
        if flipped[v] {
            labels[v] = -labels[v];
        }
    }
    let m = CenteredMatrix::new(&inst.g1, &labels, d.ps, d.qs).unwrap();

    // Affected entries pair one flipped endpoint with one clean endpoint.
    let mut stats = [(0.0f64, 0.0f64, 0usize); 2];
    for u in 0..n {
        if !flipped[u] {
            continue;
        }
        for v in 0..n {
            if v == u || flipped[v] {
                continue;
            }
            let x: f64 = m.weight(u, v);
            let slot = usize::from(inst.sigma_star[u] != inst.sigma_star[v]);
            stats[slot].0 += x;
            stats[slot].1 += x * x;
            stats[slot].2 += 1;
        }
    }
    let total: usize = stats.iter().map(|s| s.2).sum();
    let mut pass = total >= 1_000_000;
    let mut detail = format!("{total} entries");
    for (slot, expect) in [(0usize, d.p - d.q), (1usize, d.q - d.p)] {
        let (sum, sum_sq, cnt) = stats[slot];
        let mean = sum / cnt as f64;
        let var = (sum_sq / cnt as f64 - mean * mean).max(0.0);
        let z = (mean - expect) / (var / cnt as f64).sqrt();
        pass &= z.abs() <= 3.0;
        detail += &format!(", mean {mean:.5} vs {expect:.5} (z {z:.2})");
    }
    assert!(verdict("a08 mislabeled centering bias", pass, &detail));
}

#[test]
fn a09_score_separation_tiny() {
    let mut separated = 0usize;
    let mut matched_well = 0usize;
    let mut max_secs = 0.0f64;
    let mut notes = Vec::new();
    for seed in 0..10u64 {
        let t0 = Instant::now();
        let params = ModelParams::new(300, 25.0, 5.0, 0.95, 900 + seed).unwrap();
        let inst = generate_csbm(&params).unwrap();
        let mut opts = PipelineOptions::new(Preset::Tiny);
        opts.oracle_labels = true;
        opts.boost = false;
        opts.c = 0.5;
        opts.seed = 900 + seed;
        let out = full_pipeline(&inst, &opts).unwrap();

        let n = params.n;
        let mut true_scores = Vec::with_capacity(n);
        let mut fake_scores = Vec::with_capacity(n * n - n);
        for i in 0..n {
            let pi_i = inst.pi_star[i] as usize;
            for j in 0..n {
                let x = out.scores.get(i, j);
                if j == pi_i {
                    true_scores.push(x);
                } else {
                    fake_scores.push(x);
                }
            }
        }
        let med = median(&mut true_scores);
        fake_scores.sort_by(f64::total_cmp);
        let q99 = percentile(&fake_scores, 0.99);
        let sep = med > q99;
        separated += sep as usize;

        let ok = out.metrics.correct_fraction == 1.0 && out.metrics.matched_fraction >= 0.7;
        matched_well += ok as usize;
        max_secs = max_secs.max(t0.elapsed().as_secs_f64());
        notes.push(format!(
            "s{seed}:{}{} mf={:.2}",
            if sep { "S" } else { "-" },
            if ok { "M" } else { "-" },
            out.metrics.matched_fraction
        ));
    }
    let pass = separated >= 8 && matched_well >= 8 && max_secs < 600.0;
    let detail = format!(
        "median>q99 in {separated}/10, match ok in {matched_well}/10, \
         max {max_secs:.0}s/seed [{}]",
        notes.join(" ")
    );
    assert!(verdict("a09 tiny-preset score separation", pass, &detail));
}

#[test]
fn a10_seeded_boost_exact_recovery() {
    let mut exact = 0usize;
    let mut max_secs = 0.0f64;
    let mut gamma_ok = true;
    for seed in 0..20u64 {
        let t0 = Instant::now();
        let params = ModelParams::new(2000, 40.0, 10.0, 0.9, 1000 + seed).unwrap();
        let inst = generate_csbm(&params).unwrap();
        let n = params.n;

        let (gamma, _) = boost_threshold(&params).unwrap();
        let target = 3.0 * (n as f64).ln()
            / ((n as f64 - 2.0) * params.p() * params.q() * params.s * params.s);
        gamma_ok &= (h(gamma) - target).abs() <= 1e-10;

        // Seed with a uniform 95% subset of the true pairs.
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = stream_rng(1000 + seed, streams::USER_BASE + 21);
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let keep = n * 95 / 100;
        let pairs: Vec<(u32, u32)> =
            order[..keep].iter().map(|&i| (i as u32, inst.pi_star[i])).collect();
        let seeds = PartialMatching::from_pairs(n, &pairs).unwrap();

        let (grown, _report) = seeded_boost(&inst.g1, &inst.g2, &seeds, &params).unwrap();
        if grown.as_permutation().as_deref() == Some(&inst.pi_star[..]) {
            exact += 1;
        }
        max_secs = max_secs.max(t0.elapsed().as_secs_f64());
    }
    let pass = exact >= 18 && gamma_ok && max_secs < 60.0;
    let detail =
        format!("exact in {exact}/20 seeds, gamma round-trip {gamma_ok}, max {max_secs:.1}s/seed");
    assert!(verdict("a10 seeded boost to exact matching", pass, &detail));
}

#[test]
fn a11_community_recovery_regimes() {
    // Strong signal: exact recovery expected.
    let mut exact = 0usize;
    for seed in 0..10u64 {
        let params = ModelParams::new(4000, 30.0, 5.0, 1.0, 1100 + seed).unwrap();
        let inst = generate_csbm(&params).unwrap();
        let est = recover_almost_exact(&inst.g1, params.a, params.b, 0.25, 1100 + seed);
        if label_error_fraction(&est.labels, &inst.sigma_star) == 0.0 {
            exact += 1;
        }
    }

    // Weak signal: errors concentrate on the low-margin set.
    let mut concentrated = 0usize;
    let mut fracs = Vec::new();
    for seed in 0..10u64 {
        let params = ModelParams::new(4000, 9.0, 4.0, 1.0, 1150 + seed).unwrap();
        let inst = generate_csbm(&params).unwrap();
        let est = recover_almost_exact(&inst.g1, params.a, params.b, 0.1, 1150 + seed);
        let diag =
            recovery_diagnostics(&inst.g1, &est.labels, &inst.sigma_star, params.a, params.b, 0.1)
                .unwrap();
        let frac = if diag.errors_total == 0 {
            1.0
        } else {
            diag.errors_in_bad as f64 / diag.errors_total as f64
        };
        fracs.push((frac * 100.0).round() / 100.0);
        if frac >= 0.8 {
            concentrated += 1;
        }
    }
    let pass = exact >= 8 && concentrated >= 8;
    let detail = format!(
        "exact in {exact}/10 strong seeds, error concentration {concentrated}/10 weak seeds {fracs:?}"
    );
    assert!(verdict("a11 community recovery regimes", pass, &detail));
}

#[test]
fn a12_union_graph_gain() {
    let mut singles = Vec::new();
    let mut unions = Vec::new();
    for seed in 0..20u64 {
        let params = ModelParams::new(4000, 8.58953, 2.0, 0.8, 1200 + seed).unwrap();
        let inst = generate_csbm(&params).unwrap();
        let single = recover_almost_exact(&inst.g1, params.a, params.b, 0.25, 1200 + seed);
        let union = recover_exact_on_union(&inst, &inst.pi_star, 0.25, 1200 + seed).unwrap();
        singles.push(label_error_fraction(&single.labels, &inst.sigma_star));
        unions.push(label_error_fraction(&union.labels, &inst.sigma_star));
    }
    let mean_s: f64 = singles.iter().sum::<f64>() / singles.len() as f64;
    let mean_u: f64 = unions.iter().sum::<f64>() / unions.len() as f64;
    let wins = unions.iter().zip(&singles).filter(|(u, s)| u < s).count();
    let losses = unions.iter().zip(&singles).filter(|(u, s)| u > s).count();
    let p = sign_test_p(wins + losses, wins);
    let pass = mean_u < mean_s && p < 0.05;
    let detail = format!(
        "mean err union {mean_u:.5} vs single {mean_s:.5}, wins {wins}, losses {losses}, sign test p {p:.4}"
    );
    assert!(verdict("a12 union-graph recovery gain", pass, &detail));
}

#[test]
fn a13_sweep_determinism() {
    let spec = SweepSpec {
        n: vec![80],
        a: vec![10.0],
        b: vec![3.0],
        s: vec![0.9],
        trials: 2,
        preset: Preset::Tiny,
        modes: vec![LabelMode::Oracle, LabelMode::Estimated],
        c: 0.5,
        t: Some(4),
        eps: 0.25,
        seed: 33,
    };
    let mut first = Vec::new();
    run_sweep(&spec, &mut first).unwrap();
    let mut second = Vec::new();
    run_sweep(&spec, &mut second).unwrap();
    let rows = first.iter().filter(|&&b| b == b'\n').count();
    let pass = first == second && rows == 5;
    let detail = format!("{} bytes, {rows} lines, identical {}", first.len(), first == second);
    assert!(verdict("a13 sweep rerun byte-identical", pass, &detail));
}
