use std::fmt::Display;
use std::path::Path;

use anyhow::{Context, Result};
use case_encoder::bcl::BclHyperParams;
use case_encoder::encoder::EncoderConfig;
use case_encoder::lexical::{Bm25Params, TokenizerConfig, TokenizerMode};
use case_encoder::pipeline::PipelineConfig;
use case_encoder::sampler::SamplerConfig;
use case_encoder::synth::SynthSpec;
use case_encoder::trainer::TrainConfig;
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

/// Everything a config file may set. Missing keys fall back to built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub tokenizer: TokenizerConfig,
    pub bm25: Bm25Params,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub synth: SynthSpec,
}

impl CliConfig {
    /// Layer a config file over `base`; keys absent from the file keep their base value.
    pub fn load(path: Option<&Path>, base: Self) -> Result<Self> {
        let Some(path) = path else {
            return Ok(base);
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let mut merged = toml::Table::try_from(&base)?;
        merge(&mut merged, file);
        toml::Value::Table(merged)
            .try_into()
            .with_context(|| format!("invalid configuration in {}", path.display()))
    }

    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Reference => Self::default(),
            Preset::Toy => {
                let toy = PipelineConfig::toy();
                Self {
                    tokenizer: toy.tokenizer,
                    bm25: toy.bm25,
                    encoder: toy.encoder,
                    train: toy.train,
                    synth: SynthSpec::default(),
                }
            }
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Echo the effective configuration next to a command's outputs.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join("config.toml"), self.to_toml()?)?;
        Ok(())
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Full-size settings: lambda = e*1e-6, summed MLM loss, 64-wide encoder.
    #[default]
    Reference,
    /// Small encoder, lambda = 1 and mean MLM loss, for synthetic corpora.
    Toy,
}

fn d<T: Display>(what: &str, v: T) -> String {
    format!("{what} [default: {v}]")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TokenizerArg {
    Whitespace,
    CharUnigram,
}

impl From<TokenizerArg> for TokenizerMode {
    fn from(t: TokenizerArg) -> Self {
        match t {
            TokenizerArg::Whitespace => TokenizerMode::Whitespace,
            TokenizerArg::CharUnigram => TokenizerMode::CharUnigram,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct LexicalArgs {
    #[arg(long, value_enum, help = d("Tokenizer", "char-unigram"))]
    pub tokenizer: Option<TokenizerArg>,
    #[arg(long, help = d("BM25 term-frequency saturation k1", Bm25Params::default().k1))]
    pub k1: Option<f64>,
    #[arg(long, help = d("BM25 length normalisation b", Bm25Params::default().b))]
    pub b: Option<f64>,
}

impl LexicalArgs {
    pub fn apply(&self, cfg: &mut CliConfig) {
        if let Some(t) = self.tokenizer {
            cfg.tokenizer.mode = t.into();
        }
        set(&mut cfg.bm25.k1, self.k1);
        set(&mut cfg.bm25.b, self.b);
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SamplingArgs {
    #[arg(long, help = d("Minimum weight for a positive", SamplerConfig::default().w_pos))]
    pub w_pos: Option<f64>,
    #[arg(long, help = d("Class-merge threshold W_T", BclHyperParams::default().w_t))]
    pub w_t: Option<f64>,
    #[arg(long, help = d("Quadruples per batch", TrainConfig::default().batch_size))]
    pub batch_size: Option<usize>,
}

impl SamplingArgs {
    pub fn apply(&self, cfg: &mut CliConfig) {
        set(&mut cfg.train.sampler.w_pos, self.w_pos);
        set(&mut cfg.train.bcl.w_t, self.w_t);
        set(&mut cfg.train.batch_size, self.batch_size);
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    #[arg(long, help = d("Scale factor gamma", BclHyperParams::default().gamma))]
    pub gamma: Option<f64>,
    #[arg(long, help = d("Positive optimum O_p", BclHyperParams::default().o_p))]
    pub o_p: Option<f64>,
    #[arg(long, help = d("Negative optimum O_n", BclHyperParams::default().o_n))]
    pub o_n: Option<f64>,
    #[arg(long, help = d("Positive margin Delta_p", BclHyperParams::default().delta_p))]
    pub delta_p: Option<f64>,
    #[arg(long, help = d("Negative margin Delta_n", BclHyperParams::default().delta_n))]
    pub delta_n: Option<f64>,
    #[arg(long, help = d("Weight of the contrastive loss", BclHyperParams::default().lambda))]
    pub lambda: Option<f64>,
    #[arg(long, help = d("Learning rate", TrainConfig::default().learning_rate))]
    pub lr: Option<f64>,
    #[arg(long, help = d("Training steps", TrainConfig::default().steps))]
    pub steps: Option<usize>,
    #[arg(long, help = d("Global gradient-norm clip (0 disables)", TrainConfig::default().grad_clip))]
    pub grad_clip: Option<f64>,
    #[arg(long, help = d("MLM masking rate", TrainConfig::default().masking.rate))]
    pub mask_rate: Option<f64>,
    #[arg(long, help = d("Write a resumable state every N steps (0 disables)", 0))]
    pub checkpoint_every: Option<usize>,
    #[arg(long, help = d("Hidden size", EncoderConfig::default().hidden))]
    pub hidden: Option<usize>,
    #[arg(long, help = d("Transformer layers", EncoderConfig::default().layers))]
    pub layers: Option<usize>,
    #[arg(long, help = d("Attention heads", EncoderConfig::default().heads))]
    pub heads: Option<usize>,
    #[arg(long, help = d("Feed-forward size", EncoderConfig::default().ffn))]
    pub ffn: Option<usize>,
    #[arg(long, help = d("Maximum sequence length", EncoderConfig::default().max_len))]
    pub max_len: Option<usize>,
}

impl TrainArgs {
    pub fn apply(&self, cfg: &mut CliConfig) {
        let bcl = &mut cfg.train.bcl;
        set(&mut bcl.gamma, self.gamma);
        set(&mut bcl.o_p, self.o_p);
        set(&mut bcl.o_n, self.o_n);
        set(&mut bcl.delta_p, self.delta_p);
        set(&mut bcl.delta_n, self.delta_n);
        set(&mut bcl.lambda, self.lambda);
        set(&mut cfg.train.learning_rate, self.lr);
        set(&mut cfg.train.steps, self.steps);
        set(&mut cfg.train.grad_clip, self.grad_clip);
        set(&mut cfg.train.masking.rate, self.mask_rate);
        set(&mut cfg.train.checkpoint_every, self.checkpoint_every);
        let enc = &mut cfg.encoder;
        set(&mut enc.hidden, self.hidden);
        set(&mut enc.layers, self.layers);
        set(&mut enc.heads, self.heads);
        set(&mut enc.ffn, self.ffn);
        set(&mut enc.max_len, self.max_len);
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SynthArgs {
    #[arg(long, help = d("Articles", SynthSpec::default().articles))]
    pub articles: Option<usize>,
    #[arg(long, help = d("Branches per article", SynthSpec::default().branches_per_article))]
    pub branches_per_article: Option<usize>,
    #[arg(long, help = d("Keywords per branch", SynthSpec::default().keywords_per_branch))]
    pub keywords_per_branch: Option<usize>,
    #[arg(long, help = d("Vocabulary size", SynthSpec::default().vocab_size))]
    pub vocab_size: Option<usize>,
    #[arg(long, help = d("Cases per branch", SynthSpec::default().cases_per_branch))]
    pub cases_per_branch: Option<usize>,
    #[arg(long, help = d("Held-out queries per branch", SynthSpec::default().queries_per_branch))]
    pub queries_per_branch: Option<usize>,
    #[arg(long, help = d("Share of off-branch holding tokens", SynthSpec::default().noise_rate))]
    pub noise_rate: Option<f64>,
}

impl SynthArgs {
    pub fn apply(&self, cfg: &mut CliConfig) {
        let s = &mut cfg.synth;
        set(&mut s.articles, self.articles);
        set(&mut s.branches_per_article, self.branches_per_article);
        set(&mut s.keywords_per_branch, self.keywords_per_branch);
        set(&mut s.vocab_size, self.vocab_size);
        set(&mut s.cases_per_branch, self.cases_per_branch);
        set(&mut s.queries_per_branch, self.queries_per_branch);
        set(&mut s.noise_rate, self.noise_rate);
    }
}

/// `--seed` drives every random stream: synthesis, initialization, sampling and masking.
pub fn apply_seed(cfg: &mut CliConfig, seed: Option<u64>) {
    if let Some(seed) = seed {
        cfg.synth.seed = seed;
        cfg.encoder.seed = seed;
        cfg.train.seed = seed;
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}
