//! Command-line surface for reproducible ranking experiments.
//!
//! Every command derives all randomness from a single `--seed` and writes a
//! run manifest (resolved config plus input digests) next to its primary
//! output, so any run can be reproduced bit-identically.

mod manifest;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use vbpr::checkpoint::{self, CheckpointMeta};
use vbpr::dataset::{filter_min_feedback, load_feedback, split_leave_one_out, InteractionSet};
use vbpr::evaluator::{evaluate, evaluate_sampled, EvalReport, ModelScorer, PopularityScorer, RandomScorer};
use vbpr::features::{load_features, FeatureStore, ItemFeatures};
use vbpr::models::{project_features, PopularityTable, VbprParams};
use vbpr::synthgen::{self, SynthConfig};
use vbpr::trainer::{train, Loss, TrainConfig};

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "vbpr", version, about = "Pairwise personalized ranking with visual factors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint, training log, and manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint or a non-learned baseline.
    Evaluate(EvalArgs),
    /// Export per-item visual-space positions from a trained checkpoint.
    ExportEmbeddings(ExportArgs),
    /// Generate a synthetic corpus with planted preference structure.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Model {
    /// Visual-aware pairwise MF.
    Vbpr,
    /// Pairwise MF with the logistic loss.
    BprMf,
    /// Pairwise MF with the hinge loss.
    MmMf,
}

impl Model {
    fn as_str(self) -> &'static str {
        match self {
            Model::Vbpr => "vbpr",
            Model::BprMf => "bpr-mf",
            Model::MmMf => "mm-mf",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Baseline {
    Rand,
    Mp,
}

#[derive(Args)]
struct TrainArgs {
    /// Feedback file: one `user<TAB>item` pair per line.
    #[arg(long)]
    feedback: PathBuf,

    /// Feature file (sparse TSV or dense CSV); required for `vbpr`.
    #[arg(long)]
    features: Option<PathBuf>,

    /// Feature dimension F; inferred from the feature file when omitted.
    #[arg(long)]
    feature_dim: Option<usize>,

    #[arg(long, value_enum)]
    model: Model,

    /// Total factor count; `vbpr` splits it fifty-fifty between latent and
    /// visual dimensions (odd totals give the latent side the extra one).
    #[arg(long, default_value_t = 20)]
    factors: usize,

    /// Explicit latent dimension K (overrides --factors).
    #[arg(long)]
    latent_dims: Option<usize>,

    /// Explicit visual dimension D (overrides --factors; `vbpr` only).
    #[arg(long)]
    visual_dims: Option<usize>,

    #[arg(long, default_value_t = 0.005)]
    lr: f64,

    #[arg(long, default_value_t = 0.1)]
    lambda_theta: f64,

    /// Visual-bias regularizer; defaults to --lambda-theta.
    #[arg(long)]
    lambda_beta: Option<f64>,

    /// Embedding regularizer.
    #[arg(long, default_value_t = 0.0)]
    lambda_e: f64,

    #[arg(long, default_value_t = 100)]
    epochs: usize,

    /// Epochs between validation evaluations.
    #[arg(long, default_value_t = 1)]
    eval_every: usize,

    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Drop users with fewer positives than this before splitting.
    #[arg(long, default_value_t = 5)]
    min_user_feedback: usize,

    /// L2-normalize feature vectors after loading.
    #[arg(long, default_value_t = false)]
    normalize_features: bool,

    /// Sweep lambda_theta over {0.1, 1, 10} and keep the best validation
    /// AUC.
    #[arg(long, default_value_t = false)]
    grid: bool,

    /// Checkpoint output path; the log and manifest are written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    feedback: PathBuf,

    #[arg(long)]
    features: Option<PathBuf>,

    /// Trained checkpoint to score with (exclusive with --baseline).
    #[arg(long, conflicts_with = "baseline")]
    checkpoint: Option<PathBuf>,

    /// Non-learned baseline scorer.
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,

    /// Split/scorer seed; defaults to the checkpoint's stored seed (42 for
    /// baselines). Must match training for a meaningful test split.
    #[arg(long)]
    seed: Option<u64>,

    #[arg(long, default_value_t = 5)]
    min_user_feedback: usize,

    /// An item is cold when it has fewer training positives than this.
    #[arg(long, default_value_t = 5)]
    cold_threshold: usize,

    #[arg(long, default_value_t = false)]
    normalize_features: bool,

    /// Worker threads for per-user evaluation (results are thread-count
    /// invariant).
    #[arg(long, default_value_t = 1)]
    threads: usize,

    /// Estimate AUC against this many sampled candidates per user instead
    /// of the full item pool (for very large corpora; default is exact).
    #[arg(long)]
    sample_candidates: Option<usize>,

    /// Report JSON output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Also write per-user AUC rows as CSV.
    #[arg(long)]
    per_user: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    checkpoint: PathBuf,

    #[arg(long)]
    features: PathBuf,

    /// When given, export rows for this corpus's items (missing features
    /// become zero rows); otherwise export every item in the feature file.
    #[arg(long)]
    feedback: Option<PathBuf>,

    #[arg(long, default_value_t = false)]
    normalize_features: bool,

    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    users: usize,
    #[arg(long, default_value_t = 500)]
    items: usize,
    #[arg(long, default_value_t = 64)]
    feature_dim: usize,
    #[arg(long, default_value_t = 4)]
    true_latent_dim: usize,
    #[arg(long, default_value_t = 4)]
    true_visual_dim: usize,
    #[arg(long, default_value_t = 0.7)]
    visual_weight: f64,
    #[arg(long, default_value_t = 8)]
    feedback_per_user: usize,
    #[arg(long, default_value_t = 0.5)]
    cold_fraction: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    feature_density: f64,
    #[arg(long, default_value_t = 0.0)]
    feature_noise: f64,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 0.08)]
    cold_exposure: f64,
    #[arg(long, default_value_t = 4.0)]
    affinity_gain: f64,
    #[arg(long)]
    out_feedback: PathBuf,
    #[arg(long)]
    out_features: PathBuf,
    /// Sidecar JSON with the planted ground truth.
    #[arg(long)]
    out_truth: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::ExportEmbeddings(args) => cmd_export_embeddings(args),
        Command::Synth(args) => cmd_synth(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

/// Infer F from a feature file: dense rows give their width, sparse rows
/// their maximum coordinate plus one.
fn infer_feature_dim(path: &Path) -> Result<usize> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("failed to read {}", path.display()))?;
    let mut dim = 0usize;
    for line in text.lines() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() >= 2 && fields[1].contains(':') {
            for token in &fields[1..] {
                if let Some((c, _)) = token.split_once(':') {
                    if let Ok(c) = c.parse::<usize>() {
                        dim = dim.max(c + 1);
                    }
                }
            }
        } else if fields.len() == 1 && line.contains(',') {
            dim = dim.max(line.split(',').count() - 1);
        }
    }
    if dim == 0 {
        bail!(
            "cannot infer feature dimension from {}; pass --feature-dim",
            path.display()
        );
    }
    Ok(dim)
}

fn load_feature_store(
    path: &Path,
    dim: Option<usize>,
    normalize: bool,
) -> Result<FeatureStore> {
    let dim = match dim {
        Some(d) => d,
        None => infer_feature_dim(path)?,
    };
    let mut store = load_features(path, dim)?;
    if normalize {
        store.l2_normalize_all();
    }
    Ok(store)
}

fn prepare_corpus(
    feedback: &Path,
    min_user_feedback: usize,
    seed: u64,
) -> Result<(InteractionSet, vbpr::dataset::SplitAssignment)> {
    let raw = load_feedback(feedback)?;
    let data = filter_min_feedback(&raw, min_user_feedback)?;
    let split = split_leave_one_out(&data, seed)?;
    Ok((data, split))
}

fn bind_features(
    store: &FeatureStore,
    data: &InteractionSet,
) -> ItemFeatures {
    let bound = store.bind(data);
    if bound.missing_count() > 0 {
        eprintln!(
            "warning: {} of {} items have no feature vector (treated as zero)",
            bound.missing_count(),
            data.item_count()
        );
    }
    bound
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    if args.model == Model::Vbpr && args.features.is_none() {
        bail!("--features is required for model vbpr");
    }

    let (data, split) = prepare_corpus(&args.feedback, args.min_user_feedback, args.seed)?;

    let store = match &args.features {
        Some(path) => Some(load_feature_store(
            path,
            args.feature_dim,
            args.normalize_features,
        )?),
        None => None,
    };
    let bound = store.as_ref().map(|s| bind_features(s, &data));

    // dimension resolution: fifty-fifty for the visual model, all-latent
    // otherwise
    let (default_k, default_d) = match args.model {
        Model::Vbpr => (args.factors - args.factors / 2, args.factors / 2),
        Model::BprMf | Model::MmMf => (args.factors, 0),
    };
    let latent = args.latent_dims.unwrap_or(default_k);
    let visual = match args.model {
        Model::Vbpr => args.visual_dims.unwrap_or(default_d),
        Model::BprMf | Model::MmMf => args.visual_dims.unwrap_or(0),
    };

    let mut cfg = TrainConfig::new(latent, visual);
    cfg.learning_rate = args.lr;
    cfg.lambda_theta = args.lambda_theta;
    cfg.lambda_beta = args.lambda_beta.unwrap_or(args.lambda_theta);
    cfg.lambda_embed = args.lambda_e;
    cfg.epochs = args.epochs;
    cfg.eval_every = args.eval_every;
    cfg.seed = args.seed;
    cfg.loss = match args.model {
        Model::MmMf => Loss::Hinge,
        _ => Loss::BprSigmoid,
    };

    let features = bound.as_ref().filter(|_| cfg.visual_dim > 0);
    let (params, log, chosen_lambda) = if args.grid {
        let explicit_beta = args.lambda_beta;
        let mut best: Option<(f64, f64, VbprParams, vbpr::trainer::TrainLog)> = None;
        for lambda in [0.1, 1.0, 10.0] {
            let mut sweep_cfg = cfg.clone();
            sweep_cfg.lambda_theta = lambda;
            sweep_cfg.lambda_beta = explicit_beta.unwrap_or(lambda);
            let (params, log) = train(&data, &split, features, &sweep_cfg)?;
            eprintln!(
                "grid: lambda_theta={lambda} best val auc {:.4} (epoch {})",
                log.best_val_auc, log.best_epoch
            );
            if best
                .as_ref()
                .is_none_or(|(b, _, _, _)| log.best_val_auc > *b)
            {
                best = Some((log.best_val_auc, lambda, params, log));
            }
        }
        let (_, lambda, params, log) = best.expect("grid is nonempty");
        cfg.lambda_theta = lambda;
        cfg.lambda_beta = explicit_beta.unwrap_or(lambda);
        (params, log, Some(lambda))
    } else {
        let (params, log) = train(&data, &split, features, &cfg)?;
        (params, log, None)
    };

    let meta = CheckpointMeta {
        users: data.user_count(),
        items: data.item_count(),
        latent_dim: params.latent_dim(),
        visual_dim: params.visual_dim(),
        feature_dim: params.feature_dim(),
        seed: args.seed,
        epoch: log.best_epoch,
        loss: cfg.loss,
        normalized_features: args.normalize_features,
    };
    checkpoint::save(&args.out, &meta, &params)?;

    let log_path = args.out.with_extension("log.csv");
    log.write_csv(BufWriter::new(File::create(&log_path).with_context(
        || format!("failed to create {}", log_path.display()),
    )?))?;

    let mut manifest = RunManifest::new("train", args.seed);
    manifest.digest_input("feedback", &args.feedback)?;
    if let Some(path) = &args.features {
        manifest.digest_input("features", path)?;
    }
    manifest.config(serde_json::json!({
        "model": args.model.as_str(),
        "train": &cfg,
        "min_user_feedback": args.min_user_feedback,
        "normalize_features": args.normalize_features,
        "grid": args.grid,
        "grid_selected_lambda_theta": chosen_lambda,
        "out": args.out.display().to_string(),
    }));
    manifest.write(&args.out.with_extension("manifest.json"))?;

    println!(
        "trained {}: best epoch {} (val auc {:.4}); checkpoint {}",
        args.model.as_str(),
        log.best_epoch,
        log.best_val_auc,
        args.out.display()
    );
    Ok(())
}

fn write_report(report: &EvalReport, out: Option<&Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    match out {
        Some(path) => {
            std::fs::write(path, json.as_bytes())
                .with_context(|| format!("failed to write {}", path.display()))?;
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn write_per_user_csv(
    report: &EvalReport,
    data: &InteractionSet,
    path: &Path,
) -> Result<()> {
    let mut out = BufWriter::new(
        File::create(path).with_context(|| format!("failed to create {}", path.display()))?,
    );
    writeln!(out, "user_index,user_id,auc,pairs")?;
    for &(u, auc, pairs) in &report.per_user {
        writeln!(out, "{u},{},{auc},{pairs}", data.user_id(u))?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_evaluate(args: EvalArgs) -> Result<()> {
    let loaded = match &args.checkpoint {
        Some(path) => Some(checkpoint::load(path)?),
        None => None,
    };
    if loaded.is_none() && args.baseline.is_none() {
        bail!("pass either --checkpoint or --baseline");
    }

    let seed = args
        .seed
        .or(loaded.as_ref().map(|(m, _)| m.seed))
        .unwrap_or(42);
    let (data, split) = prepare_corpus(&args.feedback, args.min_user_feedback, seed)?;

    // features are needed only for a visual checkpoint
    let bound = if let Some((meta, _)) = &loaded {
        if meta.visual_dim > 0 {
            let path = args
                .features
                .as_ref()
                .ok_or_else(|| anyhow!("--features is required for a visual checkpoint"))?;
            let normalize = args.normalize_features || meta.normalized_features;
            // loading at the checkpoint's dimension rejects any file whose
            // coordinates or row widths disagree with it
            let store = load_feature_store(path, Some(meta.feature_dim), normalize)
                .with_context(|| {
                    format!(
                        "feature file does not match the checkpoint's dimension {}",
                        meta.feature_dim
                    )
                })?;
            Some(bind_features(&store, &data))
        } else {
            None
        }
    } else {
        None
    };

    if let Some((meta, _)) = &loaded {
        if meta.users != data.user_count() || meta.items != data.item_count() {
            bail!(
                "corpus mismatch: checkpoint was trained on {} users x {} items, \
                 feedback yields {} x {} (same file, filter, and seed required)",
                meta.users,
                meta.items,
                data.user_count(),
                data.item_count()
            );
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.max(1))
        .build()
        .context("failed to build thread pool")?;

    let run_eval = |scorer: &dyn vbpr::Scorer| match args.sample_candidates {
        Some(n) => evaluate_sampled(scorer, &data, &split, args.cold_threshold, n, seed),
        None => evaluate(scorer, &data, &split, args.cold_threshold),
    };
    let report = pool.install(|| -> Result<EvalReport> {
        Ok(match (&loaded, args.baseline) {
            (Some((_, params)), _) => run_eval(&ModelScorer::new(params, bound.as_ref())),
            (None, Some(Baseline::Mp)) => {
                let table = PopularityTable::from_split(&split, data.item_count());
                run_eval(&PopularityScorer(table))
            }
            (None, Some(Baseline::Rand)) => run_eval(&RandomScorer(seed)),
            (None, None) => unreachable!("validated above"),
        })
    })?;

    write_report(&report, args.out.as_deref())?;
    if let Some(path) = &args.per_user {
        write_per_user_csv(&report, &data, path)?;
    }

    if let Some(out) = &args.out {
        let mut manifest = RunManifest::new("evaluate", seed);
        manifest.digest_input("feedback", &args.feedback)?;
        if let Some(path) = &args.features {
            manifest.digest_input("features", path)?;
        }
        if let Some(path) = &args.checkpoint {
            manifest.digest_input("checkpoint", path)?;
        }
        manifest.config(serde_json::json!({
            "baseline": args.baseline.map(|b| match b {
                Baseline::Rand => "rand",
                Baseline::Mp => "mp",
            }),
            "min_user_feedback": args.min_user_feedback,
            "cold_threshold": args.cold_threshold,
            "threads": args.threads,
            "out": out.display().to_string(),
        }));
        manifest.write(&out.with_extension("manifest.json"))?;
    }
    Ok(())
}

fn cmd_export_embeddings(args: ExportArgs) -> Result<()> {
    let (meta, params) = checkpoint::load(&args.checkpoint)?;
    if meta.visual_dim == 0 {
        bail!("checkpoint has no visual dimensions; nothing to export");
    }
    let normalize = args.normalize_features || meta.normalized_features;
    let store = load_feature_store(&args.features, Some(meta.feature_dim), normalize)?;

    let mut out = BufWriter::new(
        File::create(&args.out)
            .with_context(|| format!("failed to create {}", args.out.display()))?,
    );
    let mut missing = 0usize;
    let mut write_row = |id: &str, theta: &[f64]| -> Result<()> {
        write!(out, "{id}")?;
        for v in theta {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
        Ok(())
    };

    match &args.feedback {
        Some(path) => {
            let data = load_feedback(path)?;
            for i in 0..data.item_count() {
                let id = data.item_id(i);
                match store.get(id) {
                    Some(f) => {
                        let theta = project_features(&params, f)?;
                        write_row(id, &theta)?;
                    }
                    None => {
                        missing += 1;
                        write_row(id, &vec![0.0; meta.visual_dim])?;
                    }
                }
            }
        }
        None => {
            for id in store.sorted_ids() {
                let theta = project_features(&params, store.get(id).unwrap())?;
                write_row(id, &theta)?;
            }
        }
    }
    if missing > 0 {
        eprintln!("warning: {missing} items had no feature vector; wrote zero rows");
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        users: args.users,
        items: args.items,
        feature_dim: args.feature_dim,
        true_latent_dim: args.true_latent_dim,
        true_visual_dim: args.true_visual_dim,
        visual_weight: args.visual_weight,
        feedback_per_user: args.feedback_per_user,
        cold_fraction: args.cold_fraction,
        seed: args.seed,
        feature_density: args.feature_density,
        feature_noise: args.feature_noise,
        temperature: args.temperature,
        cold_exposure: args.cold_exposure,
        affinity_gain: args.affinity_gain,
    };
    let out = synthgen::generate(&cfg)?;
    vbpr::dataset::write_feedback(&args.out_feedback, &out.interactions)
        .with_context(|| format!("failed to write {}", args.out_feedback.display()))?;
    vbpr::features::write_features(&args.out_features, &out.features)
        .with_context(|| format!("failed to write {}", args.out_features.display()))?;
    if let Some(path) = &args.out_truth {
        let json = serde_json::to_string(&out.truth).expect("truth serializes");
        std::fs::write(path, json).with_context(|| format!("failed to write {}", path.display()))?;
    }

    let mut manifest = RunManifest::new("synth", args.seed);
    manifest.config(serde_json::to_value(&cfg).expect("config serializes"));
    manifest.write(&args.out_feedback.with_extension("manifest.json"))?;

    println!(
        "generated {} users x {} items ({} positives) -> {}, {}",
        out.interactions.user_count(),
        out.interactions.item_count(),
        out.interactions.feedback_count(),
        args.out_feedback.display(),
        args.out_features.display()
    );
    Ok(())
}
