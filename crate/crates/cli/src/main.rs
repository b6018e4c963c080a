mod config;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use case_encoder::article_corpus::{expand_branches, load_article_specs, save_article_specs};
use case_encoder::cases::{load_cases, load_queries, write_jsonl, CaseDocument};
use case_encoder::encoder::{load_checkpoint, save_checkpoint, Checkpoint, EmbeddingBatch, Encoder, Vocab};
use case_encoder::pipeline::{build_vocab, facts_inputs, lexical_view};
use case_encoder::relevance::WeightTable;
use case_encoder::retrieval::{
    encode_candidates, evaluate, export_embeddings, load_run, rank_all, save_run, EvalOptions, Projection, QrelSet,
};
use case_encoder::sampler::{write_manifests, BatchSampler};
use case_encoder::synth::{generate, BranchLabel};
use case_encoder::trainer::{train, TrainState, TrainingData};
use clap::{Parser, Subcommand, ValueEnum};

use config::{apply_seed, CliConfig, LexicalArgs, Preset, SamplingArgs, SynthArgs, TrainArgs};

#[derive(Debug, Parser)]
#[command(
    name = "case-encoder",
    version = concat!(env!("CARGO_PKG_VERSION"), " (", env!("CARGO_PKG_NAME"), ")"),
    about = "Legal case encoder: statute-branch weighting, contrastive pre-training and retrieval evaluation"
)]
struct Cli {
    /// TOML configuration file; command-line flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base settings that the config file and flags refine.
    #[arg(long, global = true, value_enum, default_value_t = Preset::Reference)]
    preset: Preset,
    /// Seed for every random stream [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Generate a synthetic statute and case corpus with known branch labels.
    GenCorpus {
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Expand structured articles into their unambiguous branches (JSON lines).
    ExpandArticles {
        #[arg(long)]
        articles: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        lexical: LexicalArgs,
    },
    /// Compute similarity profiles and the pairwise relevance-weight table.
    Weights {
        #[arg(long)]
        articles: PathBuf,
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        lexical: LexicalArgs,
    },
    /// Write the batch manifests (cases, classes, weights) of training epochs.
    Sample {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Epochs to lay out
        #[arg(long, default_value_t = 1)]
        epochs: usize,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
    /// Pre-train the encoder with the joint MLM + contrastive objective.
    Pretrain {
        #[arg(long)]
        articles: PathBuf,
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Continue from a training-state checkpoint
        #[arg(long)]
        resume: Option<PathBuf>,
        #[command(flatten)]
        lexical: LexicalArgs,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Write case embeddings (candidate text) as CSV.
    Encode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank the candidate pool for every query by cosine similarity (TSV run).
    Rank {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a run against graded qrels (NDCG@k, JSON).
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Cut-offs
        #[arg(long, value_delimiter = ',', default_value = "10,20,30")]
        k: Vec<usize>,
        /// Leave queries with no relevant candidate out of the means
        #[arg(long, default_value_t = false)]
        skip_unjudged: bool,
    },
    /// Export case embeddings, optionally projected to 2-D.
    ExportEmbeddings {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Label file from gen-corpus; defaults to each case's article set
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ProjectionArg::None)]
        projection: ProjectionArg,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProjectionArg {
    None,
    Pca2d,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = CliConfig::load(cli.config.as_deref(), CliConfig::preset(cli.preset))?;
    apply_seed(&mut cfg, cli.seed);
    match cli.command {
        Command::GenCorpus { out_dir, synth } => {
            synth.apply(&mut cfg);
            gen_corpus(&cfg, &out_dir)
        }
        Command::ExpandArticles { articles, out, lexical } => {
            lexical.apply(&mut cfg);
            expand_articles(&cfg, &articles, &out)
        }
        Command::Weights {
            articles,
            cases,
            out_dir,
            lexical,
        } => {
            lexical.apply(&mut cfg);
            weights(&cfg, &articles, &cases, &out_dir)
        }
        Command::Sample {
            weights,
            out_dir,
            epochs,
            sampling,
        } => {
            sampling.apply(&mut cfg);
            sample(&cfg, &weights, &out_dir, epochs)
        }
        Command::Pretrain {
            articles,
            cases,
            out_dir,
            resume,
            lexical,
            sampling,
            train,
        } => {
            lexical.apply(&mut cfg);
            sampling.apply(&mut cfg);
            train.apply(&mut cfg);
            pretrain(&mut cfg, &articles, &cases, &out_dir, resume.as_deref())
        }
        Command::Encode { model, cases, out } => encode(&model, &cases, &out),
        Command::Rank {
            model,
            cases,
            queries,
            out,
        } => rank(&model, &cases, &queries, &out),
        Command::Evaluate {
            run,
            qrels,
            out,
            k,
            skip_unjudged,
        } => evaluate_run(&run, &qrels, &out, &k, skip_unjudged),
        Command::ExportEmbeddings {
            model,
            cases,
            out,
            labels,
            projection,
        } => export(&model, &cases, &out, labels.as_deref(), projection),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn gen_corpus(cfg: &CliConfig, out_dir: &Path) -> Result<()> {
    let corpus = generate(&cfg.synth)?;
    create_dir(out_dir)?;
    save_article_specs(&out_dir.join("articles.json"), &corpus.articles)?;
    write_jsonl(&out_dir.join("cases.jsonl"), &corpus.cases)?;
    write_jsonl(&out_dir.join("queries.jsonl"), &corpus.queries)?;
    corpus.qrels.save(&out_dir.join("qrels.tsv"))?;
    let labels: Vec<&BranchLabel> = corpus.case_labels.iter().chain(&corpus.query_labels).collect();
    write_jsonl(&out_dir.join("labels.jsonl"), &labels)?;
    cfg.echo(out_dir)?;
    log::info!(
        "wrote {} articles, {} cases, {} queries to {}",
        corpus.articles.len(),
        corpus.cases.len(),
        corpus.queries.len(),
        out_dir.display()
    );
    Ok(())
}

fn expand_articles(cfg: &CliConfig, articles: &Path, out: &Path) -> Result<()> {
    let specs = load_article_specs(articles)?;
    let mut rows = Vec::new();
    for spec in &specs {
        let branches = expand_branches(spec, &cfg.tokenizer)?;
        log::info!("{}: {} branches", spec.article_id, branches.len());
        rows.extend(branches);
    }
    write_jsonl(out, &rows)?;
    Ok(())
}

fn weights(cfg: &CliConfig, articles: &Path, cases: &Path, out_dir: &Path) -> Result<()> {
    let specs = load_article_specs(articles)?;
    let cases = load_cases(cases)?;
    let view = lexical_view(&specs, &cases, &cfg.tokenizer, cfg.bm25)?;
    create_dir(out_dir)?;
    view.weights.save_csv(&out_dir.join("weights.csv"))?;
    write_jsonl(&out_dir.join("profiles.jsonl"), &view.profiles)?;
    cfg.echo(out_dir)?;
    log::info!(
        "{} cases scored against {} branches",
        cases.len(),
        view.corpus.total_branches()
    );
    Ok(())
}

fn sample(cfg: &CliConfig, weights: &Path, out_dir: &Path, epochs: usize) -> Result<()> {
    let table = WeightTable::load_csv(weights)?;
    let sampler = BatchSampler::new(
        &table,
        cfg.train.sampler,
        cfg.train.bcl.w_t,
        cfg.train.batch_size,
        cfg.train.seed,
    )?;
    let mut manifests = Vec::new();
    for epoch in 0..epochs {
        for index in 0..sampler.batches_per_epoch() {
            let batch = sampler.batch(epoch, index)?;
            manifests.push(sampler.manifest(epoch, index, &batch));
        }
    }
    create_dir(out_dir)?;
    write_manifests(&out_dir.join("manifests.jsonl"), &manifests)?;
    cfg.echo(out_dir)?;
    log::info!("{} batches over {epochs} epoch(s)", manifests.len());
    Ok(())
}

fn pretrain(cfg: &mut CliConfig, articles: &Path, cases: &Path, out_dir: &Path, resume: Option<&Path>) -> Result<()> {
    let specs = load_article_specs(articles)?;
    let cases = load_cases(cases)?;
    let view = lexical_view(&specs, &cases, &cfg.tokenizer, cfg.bm25)?;
    let vocab = build_vocab(&specs, &cases, &cfg.tokenizer);
    cfg.encoder.vocab_size = vocab.len();

    let state = match resume {
        Some(path) => {
            let state = TrainState::load(path)?;
            if state.encoder.config() != &cfg.encoder {
                bail!("{} was trained with a different encoder configuration", path.display());
            }
            log::info!("resuming from step {}", state.step);
            state
        }
        None => TrainState::fresh(Encoder::new(cfg.encoder.clone())?),
    };

    create_dir(out_dir)?;
    let ckpt_dir = out_dir.join("checkpoints");
    if cfg.train.checkpoint_every > 0 {
        create_dir(&ckpt_dir)?;
    }
    cfg.echo(out_dir)?;
    vocab.save(&out_dir.join("vocab.tsv"))?;

    let data = TrainingData {
        facts: facts_inputs(&cases, &vocab, &cfg.tokenizer),
        table: &view.weights,
    };
    let (state, log) = train(&cfg.train, &data, state, Some(&ckpt_dir))?;
    save_checkpoint(&out_dir.join("model.ckpt"), &Checkpoint::from_encoder(&state.encoder))?;
    log.save(&out_dir.join("train_log.jsonl"))?;
    if let (Some(first), Some(last)) = (log.steps.first(), log.steps.last()) {
        log::info!(
            "steps {}..={}: total loss {:.4} -> {:.4}",
            first.step,
            last.step,
            first.total_loss,
            last.total_loss
        );
    }
    Ok(())
}

struct Model {
    cfg: CliConfig,
    vocab: Vocab,
    encoder: Encoder,
}

fn load_model(dir: &Path) -> Result<Model> {
    let cfg = CliConfig::load(Some(&dir.join("config.toml")), CliConfig::default())?;
    let vocab = Vocab::load(&dir.join("vocab.tsv"))?;
    let encoder = load_checkpoint(&dir.join("model.ckpt"))?.to_encoder()?;
    if encoder.config().vocab_size != vocab.len() {
        bail!("vocabulary and checkpoint in {} disagree", dir.display());
    }
    Ok(Model { cfg, vocab, encoder })
}

fn case_embeddings(model: &Model, cases: &[CaseDocument]) -> Result<EmbeddingBatch> {
    Ok(encode_candidates(&model.encoder, cases, &model.vocab, &model.cfg.tokenizer)?)
}

fn article_labels(cases: &[CaseDocument]) -> Vec<String> {
    cases
        .iter()
        .map(|c| c.articles.iter().cloned().collect::<Vec<_>>().join("|"))
        .collect()
}

fn encode(model: &Path, cases: &Path, out: &Path) -> Result<()> {
    let model = load_model(model)?;
    let cases = load_cases(cases)?;
    let emb = case_embeddings(&model, &cases)?;
    export_embeddings(&emb, &article_labels(&cases), Projection::None)?.save_csv(out)?;
    Ok(())
}

fn rank(model: &Path, cases: &Path, queries: &Path, out: &Path) -> Result<()> {
    let model = load_model(model)?;
    let cases = load_cases(cases)?;
    let queries = load_queries(queries)?;
    let runs = rank_all(&queries, &cases, &model.encoder, &model.vocab, &model.cfg.tokenizer)?;
    save_run(out, &runs)?;
    log::info!("ranked {} candidates for {} queries", cases.len(), queries.len());
    Ok(())
}

fn evaluate_run(run: &Path, qrels: &Path, out: &Path, ks: &[usize], skip_unjudged: bool) -> Result<()> {
    let runs = load_run(run)?;
    let qrels = QrelSet::load(qrels)?;
    let metrics = evaluate(&runs, &qrels, ks, EvalOptions { skip_unjudged })?;
    metrics.save(out)?;
    for (k, v) in &metrics.mean {
        log::info!("{k} = {v:.4}");
    }
    Ok(())
}

fn export(model: &Path, cases: &Path, out: &Path, labels: Option<&Path>, projection: ProjectionArg) -> Result<()> {
    let model = load_model(model)?;
    let cases = load_cases(cases)?;
    let labels = match labels {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut by_id = BTreeMap::new();
            for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let l: BranchLabel =
                    serde_json::from_str(line).with_context(|| format!("{}:{}", path.display(), n + 1))?;
                by_id.insert(l.id.clone(), l.label.to_string());
            }
            cases
                .iter()
                .map(|c| {
                    by_id
                        .get(&c.case_id)
                        .cloned()
                        .with_context(|| format!("no label for case `{}`", c.case_id))
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => article_labels(&cases),
    };
    let projection = match projection {
        ProjectionArg::None => Projection::None,
        ProjectionArg::Pca2d => Projection::Pca2d,
    };
    let emb = case_embeddings(&model, &cases)?;
    let export = export_embeddings(&emb, &labels, projection)?;
    let mut w = BufWriter::new(fs::File::create(out)?);
    export.write_csv(&mut w)?;
    w.flush()?;
    if let Some(ev) = export.explained_variance {
        log::info!("explained variance of the 2-D projection: {ev:.4}");
    }
    Ok(())
}
