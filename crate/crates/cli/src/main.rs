//! Command line front end for the correlated SBM matching toolkit.
//!
//! Subcommands cover instance generation, tree and family inspection,
//! community recovery, scoring, matching with optional boosting, parameter
//! sweeps, and self-check suites. Exit codes: 0 on success, 2 on validation
//! or verification failures, 3 when a request exceeds a capacity guard.

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::PathBuf;

use csbm_core::chandelier::{build_family, Preset};
use csbm_core::community::{recover_almost_exact, spectral_partition};
use csbm_core::counting::{
    default_repetitions, ln_mu, score_matrix_colored, score_matrix_exact, CenteredMatrix,
    DenseWeights, ScoreMatrix,
};
use csbm_core::harness::{parse_config, run_sweep, theory_curves, verify_suite, SweepSpec};
use csbm_core::matching::{
    boost_threshold, evaluate, seeded_boost, threshold_match, PartialMatching,
};
use csbm_core::model::{
    generate_csbm, load_graph, load_instance, save_instance, ModelParams,
};
use csbm_core::treegen::{build_catalog, count_rooted_trees, ln_biguint, BulbCatalog};
use csbm_core::{Error, Real};

#[derive(Parser)]
#[command(
    name = "csbm",
    version,
    about = "Graph matching and community recovery on correlated SBMs",
    long_about = "Graph matching and community recovery on correlated \
                  stochastic block models via signed chandelier counts.\n\
                  Thread count follows RAYON_NUM_THREADS; results are \
                  deterministic for a fixed seed regardless of it."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a correlated instance bundle.
    Gen(GenArgs),
    /// Rooted tree catalog tools.
    Trees {
        #[command(subcommand)]
        cmd: TreesCmd,
    },
    /// Chandelier family tools.
    Family {
        #[command(subcommand)]
        cmd: FamilyCmd,
    },
    /// Recover communities of a single graph.
    Communities(CommunitiesArgs),
    /// Compute the pairwise score matrix of an instance.
    Score(ScoreArgs),
    /// Matching from scores, and boosting from seeds.
    Match {
        #[command(subcommand)]
        cmd: MatchCmd,
    },
    /// Run a parameter sweep from a config file.
    Sweep(SweepArgs),
    /// Emit phase-boundary curves for plotting.
    Curves(CurvesArgs),
    /// Run self-check suites against brute-force references.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    a: f64,
    #[arg(long)]
    b: f64,
    #[arg(long)]
    s: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the bundle.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum TreesCmd {
    /// Enumerate rooted trees with K edges under optional filters.
    Enum(TreesEnumArgs),
}

#[derive(Args)]
struct TreesEnumArgs {
    #[arg(long)]
    edges: usize,
    /// Keep trees with automorphism count at most this bound.
    #[arg(long)]
    max_aut: Option<u64>,
    /// Keep trees with maximum degree at most this bound.
    #[arg(long)]
    max_deg: Option<usize>,
    /// Print the count only.
    #[arg(long, default_value_t = false)]
    count_only: bool,
    /// Write the catalog here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum FamilyCmd {
    /// Describe a chandelier family: size, shape, and DP feasibility.
    Describe(FamilyDescribeArgs),
}

#[derive(Args)]
struct FamilyDescribeArgs {
    /// Use a named preset instead of explicit K/L/M.
    #[arg(long, conflicts_with_all = ["k", "l", "m"])]
    preset: Option<String>,
    #[arg(long, requires = "l", requires = "m")]
    k: Option<usize>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    max_aut: Option<u64>,
    #[arg(long)]
    max_deg: Option<usize>,
    /// Host size used for the DP cost estimate.
    #[arg(long, default_value_t = 1000)]
    n: usize,
}

#[derive(Args)]
struct CommunitiesArgs {
    /// Graph file in `n m` edge-list format.
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    a: f64,
    #[arg(long)]
    b: f64,
    #[arg(long, default_value_t = 0.25)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the plain spectral split without hold-out refinement.
    #[arg(long, default_value_t = false)]
    spectral_only: bool,
    /// Write one label per line here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Instance bundle directory.
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "tiny")]
    preset: String,
    /// exact or colored.
    #[arg(long, default_value = "colored")]
    mode: String,
    /// Coloring repetitions; defaults to ceil(1/r).
    #[arg(long)]
    t: Option<usize>,
    /// oracle or estimated centering labels.
    #[arg(long, default_value = "estimated")]
    centering: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum MatchCmd {
    /// Threshold-match a score matrix, optionally boosting the result.
    Run(MatchRunArgs),
    /// Boost an existing seed matching by common-neighbor counts.
    Boost(MatchBoostArgs),
}

#[derive(Args)]
struct MatchRunArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Reuse a score matrix produced by `score`; computed here when omitted.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Preset for computing scores (ignored with --scores).
    #[arg(long, default_value = "tiny")]
    preset: String,
    /// Center with planted labels instead of spectral estimates.
    #[arg(long, default_value_t = false)]
    oracle_labels: bool,
    /// Coloring repetitions; defaults to ceil(1/r).
    #[arg(long)]
    t: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Threshold prefactor: tau = c mu.
    #[arg(long, default_value_t = 0.5)]
    c: f64,
    /// Use this empirical score quantile for tau instead of c mu.
    #[arg(long)]
    tau_quantile: Option<f64>,
    #[arg(long, default_value_t = false)]
    boost: bool,
    /// Directory receiving matching.txt and metrics.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MatchBoostArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Seed matching file with `i j` lines.
    #[arg(long = "seed-matching")]
    seeds: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep spec file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inline overrides of spec keys, e.g. --set n=60,80 --set trials=3.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CurvesArgs {
    /// Comma-separated a values.
    #[arg(long)]
    a: String,
    /// Comma-separated b values.
    #[arg(long)]
    b: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// trees, counting, moments, or all.
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = match err.downcast_ref::<Error>() {
                Some(Error::Capacity(_)) => 3,
                _ => 2,
            };
            std::process::exit(code);
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Gen(args) => cmd_gen(args),
        Cmd::Trees { cmd: TreesCmd::Enum(args) } => cmd_trees_enum(args),
        Cmd::Family { cmd: FamilyCmd::Describe(args) } => cmd_family_describe(args),
        Cmd::Communities(args) => cmd_communities(args),
        Cmd::Score(args) => cmd_score(args),
        Cmd::Match { cmd: MatchCmd::Run(args) } => cmd_match_run(args),
        Cmd::Match { cmd: MatchCmd::Boost(args) } => cmd_match_boost(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::Curves(args) => cmd_curves(args),
        Cmd::Verify(args) => cmd_verify(args),
    }
}

fn cmd_gen(args: GenArgs) -> anyhow::Result<()> {
    let params = ModelParams::new(args.n, args.a, args.b, args.s, args.seed)?;
    let inst = generate_csbm(&params)?;
    save_instance(&inst, &args.out)
        .with_context(|| format!("writing bundle to {}", args.out.display()))?;
    println!(
        "wrote instance n={} |E1|={} |E2|={} balanced={} to {}",
        inst.n(),
        inst.g1.edge_count(),
        inst.g2.edge_count(),
        inst.balanced,
        args.out.display()
    );
    Ok(())
}

fn cmd_trees_enum(args: TreesEnumArgs) -> anyhow::Result<()> {
    if args.count_only && args.max_aut.is_none() && args.max_deg.is_none() {
        println!("{}", count_rooted_trees(args.edges)?);
        return Ok(());
    }
    let catalog = build_catalog(
        args.edges,
        args.max_aut.map(num_bigint::BigUint::from),
        args.max_deg,
    )?;
    if catalog.empty_warning {
        eprintln!(
            "warning: filters removed every tree ({} unfiltered, {} pass the \
             aut bound alone, {} pass the degree bound alone)",
            catalog.unfiltered_count, catalog.r_only_count, catalog.d_only_count
        );
    }
    if args.count_only {
        println!("{}", catalog.len());
        return Ok(());
    }
    let text = catalog.to_text();
    match args.out {
        Some(path) => std::fs::write(&path, text)
            .with_context(|| format!("writing catalog to {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_family_describe(args: FamilyDescribeArgs) -> anyhow::Result<()> {
    let (catalog, l, m): (BulbCatalog, usize, usize) = match (&args.preset, args.k) {
        (Some(name), _) => {
            let preset = Preset::parse(name)?;
            let (k, l, m) = preset.klm();
            (build_catalog(k, None, None)?, l, m)
        }
        (None, Some(k)) => {
            let l = args.l.ok_or_else(|| anyhow!("--l is required with --k"))?;
            let m = args.m.ok_or_else(|| anyhow!("--m is required with --k"))?;
            (
                build_catalog(k, args.max_aut.map(num_bigint::BigUint::from), args.max_deg)?,
                l,
                m,
            )
        }
        (None, None) => return Err(anyhow!("give either --preset or --k/--l/--m")),
    };
    if catalog.empty_warning {
        eprintln!(
            "warning: filters removed every tree ({} unfiltered, {} pass the \
             aut bound alone, {} pass the degree bound alone)",
            catalog.unfiltered_count, catalog.r_only_count, catalog.d_only_count
        );
    }
    let family = build_family(catalog, l, m)?;
    let n_edges = family.n_non_root();
    println!("bulb edges K      : {}", family.bulbs.k);
    println!("branches L        : {}", family.l);
    println!("wire length M     : {}", family.m);
    println!("catalog size |J|  : {}", family.bulbs.len());
    println!("family size |T|   : {}", family.family_size);
    println!("member edges N    : {n_edges}");
    println!("ln family size    : {:.4}", ln_biguint(&family.family_size));
    let mask_states = 3f64.powi(n_edges as i32 + 1);
    println!(
        "mask guard        : 3^{} = {:.3e} (budget 2^26 = {:.3e}) -> {}",
        n_edges + 1,
        mask_states,
        (1u64 << 26) as f64,
        if mask_states <= (1u64 << 26) as f64 { "ok" } else { "exceeded" }
    );
    println!(
        "DP cost at n={}   : about {:.3e} operations",
        args.n,
        family.dp_cost_estimate(args.n)
    );
    Ok(())
}

fn cmd_communities(args: CommunitiesArgs) -> anyhow::Result<()> {
    let graph = load_graph(&args.graph)
        .with_context(|| format!("loading graph {}", args.graph.display()))?;
    let est = if args.spectral_only {
        spectral_partition(&graph, args.seed)
    } else {
        recover_almost_exact(&graph, args.a, args.b, args.eps, args.seed)
    };
    let plus = est.labels.iter().filter(|&&l| l > 0).count();
    println!(
        "n={} plus={} minus={} parts={} degenerate={} converged={}",
        graph.n(),
        plus,
        graph.n() - plus,
        est.m_parts,
        est.degenerate,
        est.converged
    );
    if let Some(path) = args.out {
        let mut text = String::new();
        for l in &est.labels {
            text.push_str(if *l > 0 { "1\n" } else { "-1\n" });
        }
        std::fs::write(&path, text)
            .with_context(|| format!("writing labels to {}", path.display()))?;
    }
    Ok(())
}

fn centering_labels(
    inst: &csbm_core::model::CorrelatedInstance,
    centering: &str,
    seed: u64,
) -> anyhow::Result<(Vec<i8>, Vec<i8>)> {
    match centering {
        "oracle" => Ok((inst.sigma_star.clone(), inst.sigma_star_g2())),
        "estimated" => {
            let a = inst.params.a;
            let b = inst.params.b;
            let e1 = recover_almost_exact(&inst.g1, a, b, 0.25, seed);
            let e2 = recover_almost_exact(&inst.g2, a, b, 0.25, seed + 1);
            Ok((e1.labels, e2.labels))
        }
        other => Err(anyhow!("unknown centering {other:?} (expected oracle or estimated)")),
    }
}

fn cmd_score(args: ScoreArgs) -> anyhow::Result<()> {
    let inst = load_instance(&args.instance)
        .with_context(|| format!("loading instance {}", args.instance.display()))?;
    let preset = Preset::parse(&args.preset)?;
    let family = preset.build()?;
    let derived = inst.params.derive();
    let (labels1, labels2) = centering_labels(&inst, &args.centering, args.seed)?;
    let ca = CenteredMatrix::new(&inst.g1, &labels1, derived.ps, derived.qs)?;
    let cb = CenteredMatrix::new(&inst.g2, &labels2, derived.ps, derived.qs)?;
    let mut scores: ScoreMatrix<Real> = match args.mode.as_str() {
        "exact" => score_matrix_exact(&ca, &cb, &family)?,
        "colored" => {
            let t = args.t.unwrap_or_else(|| default_repetitions(family.n_non_root() + 1));
            let da = DenseWeights::materialize(&ca);
            let db = DenseWeights::materialize(&cb);
            score_matrix_colored(&da, &db, &family, t, args.seed)?
        }
        other => return Err(anyhow!("unknown mode {other:?} (expected exact or colored)")),
    };
    scores.meta.preset = preset.name().to_string();
    scores.meta.centering = args.centering.clone();
    scores.save(&args.out)
        .with_context(|| format!("writing scores to {}", args.out.display()))?;
    println!(
        "wrote {}x{} scores (mode={} t={} ln_mu={:.4}) to {}",
        scores.n,
        scores.n,
        scores.meta.mode,
        scores.meta.t,
        ln_mu(&family, &derived, inst.n()),
        args.out.display()
    );
    Ok(())
}

fn cmd_match_run(args: MatchRunArgs) -> anyhow::Result<()> {
    let inst = load_instance(&args.instance)
        .with_context(|| format!("loading instance {}", args.instance.display()))?;
    let (scores, family) = match &args.scores {
        Some(path) => {
            let scores = ScoreMatrix::load(path)
                .with_context(|| format!("loading scores {}", path.display()))?;
            if scores.n != inst.n() {
                return Err(anyhow!("score matrix is {}x{} but instance has n={}",
                    scores.n, scores.n, inst.n()));
            }
            let preset = Preset::parse(&scores.meta.preset)
                .context("score file does not name a known preset")?;
            (scores, preset.build()?)
        }
        None => {
            let preset = Preset::parse(&args.preset)?;
            let family = preset.build()?;
            let derived = inst.params.derive();
            let centering = if args.oracle_labels { "oracle" } else { "estimated" };
            let (labels1, labels2) = centering_labels(&inst, centering, args.seed)?;
            let ca = CenteredMatrix::new(&inst.g1, &labels1, derived.ps, derived.qs)?;
            let cb = CenteredMatrix::new(&inst.g2, &labels2, derived.ps, derived.qs)?;
            let t = args
                .t
                .unwrap_or_else(|| default_repetitions(family.n_non_root() + 1));
            let da = DenseWeights::materialize(&ca);
            let db = DenseWeights::materialize(&cb);
            let mut scores = score_matrix_colored(&da, &db, &family, t, args.seed)?;
            scores.meta.preset = preset.name().to_string();
            scores.meta.centering = centering.to_string();
            (scores, family)
        }
    };
    let tau = match args.tau_quantile {
        Some(qt) => {
            if !(0.0..1.0).contains(&qt) {
                return Err(Error::invalid("tau quantile must lie in [0, 1)").into());
            }
            let mut sorted = scores.scores.clone();
            sorted.sort_by(f64::total_cmp);
            sorted[((sorted.len() - 1) as f64 * qt).round() as usize]
        }
        None => {
            let lm = ln_mu(&family, &inst.params.derive(), inst.n());
            (args.c.ln() + lm).exp()
        }
    };
    let mut matching = threshold_match(&scores, tau);
    matching.c = Some(args.c);
    println!("tau={tau:.6e} matched={} of {}", matching.matched_count(), inst.n());
    let mut boost_report = None;
    if args.boost {
        let (grown, report) = seeded_boost(&inst.g1, &inst.g2, &matching, &inst.params)?;
        matching = grown;
        println!(
            "boost: gamma={:.4} threshold={:.2} added={} complete={}",
            report.gamma, report.threshold, report.added, report.complete
        );
        boost_report = Some(report);
    }
    let metrics = evaluate(&matching, &inst.pi_star)?;
    println!(
        "matched_fraction={:.4} correct_fraction={:.4} exact={}",
        metrics.matched_fraction, metrics.correct_fraction, metrics.exact
    );
    if let Some(dir) = args.out {
        std::fs::create_dir_all(&dir)
            .with_context(|| format!("creating {}", dir.display()))?;
        matching
            .save(&dir.join("matching.txt"))
            .with_context(|| format!("writing matching under {}", dir.display()))?;
        let mut doc = serde_json::json!({
            "tau": tau,
            "c": args.c,
            "matched": matching.matched_count(),
            "matched_fraction": metrics.matched_fraction,
            "correct_fraction": metrics.correct_fraction,
            "exact": metrics.exact,
        });
        if let Some(r) = &boost_report {
            doc["boost"] = serde_json::json!({
                "gamma": r.gamma,
                "threshold": r.threshold,
                "added": r.added,
                "complete": r.complete,
            });
        }
        std::fs::write(
            dir.join("metrics.json"),
            format!("{:#}\n", doc),
        )
        .with_context(|| format!("writing metrics under {}", dir.display()))?;
    }
    Ok(())
}

fn cmd_match_boost(args: MatchBoostArgs) -> anyhow::Result<()> {
    let inst = load_instance(&args.instance)
        .with_context(|| format!("loading instance {}", args.instance.display()))?;
    let seeds = PartialMatching::load(&args.seeds, inst.n())
        .with_context(|| format!("loading seeds {}", args.seeds.display()))?;
    let (gamma, threshold) = boost_threshold(&inst.params)?;
    println!("gamma={gamma:.4} threshold={threshold:.2}");
    let (grown, report) = seeded_boost(&inst.g1, &inst.g2, &seeds, &inst.params)?;
    println!(
        "seeds={} added={} total={} complete={}",
        seeds.matched_count(),
        report.added,
        grown.matched_count(),
        report.complete
    );
    let metrics = evaluate(&grown, &inst.pi_star)?;
    println!(
        "matched_fraction={:.4} correct_fraction={:.4} exact={}",
        metrics.matched_fraction, metrics.correct_fraction, metrics.exact
    );
    if let Some(path) = args.out {
        grown.save(&path)
            .with_context(|| format!("writing matching to {}", path.display()))?;
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            parse_config(&text)?
        }
        None => SweepSpec::default(),
    };
    for assignment in &args.set {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {assignment:?}"))?;
        spec.apply(key.trim(), value.trim())?;
    }
    spec.validate()?;
    match &args.out {
        Some(path) => {
            let mut file = std::io::BufWriter::new(
                std::fs::File::create(path)
                    .with_context(|| format!("creating {}", path.display()))?,
            );
            run_sweep(&spec, &mut file)?;
            file.flush()?;
            eprintln!("wrote sweep to {}", path.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            run_sweep(&spec, &mut lock)?;
        }
    }
    Ok(())
}

fn parse_f64_list(text: &str) -> anyhow::Result<Vec<f64>> {
    text.split(',')
        .map(|tok| {
            tok.trim()
                .parse()
                .map_err(|_| anyhow!("bad numeric value {tok:?}"))
        })
        .collect()
}

fn cmd_curves(args: CurvesArgs) -> anyhow::Result<()> {
    let a = parse_f64_list(&args.a)?;
    let b = parse_f64_list(&args.b)?;
    let csv = theory_curves(&a, &b);
    match args.out {
        Some(path) => std::fs::write(&path, csv)
            .with_context(|| format!("writing curves to {}", path.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> anyhow::Result<()> {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let ok = verify_suite(&args.suite, args.seed, &mut lock)?;
    if !ok {
        return Err(Error::invalid("verification failed").into());
    }
    Ok(())
}
