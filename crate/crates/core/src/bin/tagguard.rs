use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use tagguard::attacks::generate;
use tagguard::classifiers::{self, classify_corpus, ClassifierKind, TrainConfig, TrainedModel};
use tagguard::config::CliConfig;
use tagguard::corpus::{build_vocabulary, Corpus, Folksonomy, Label};
use tagguard::evaluation::{derive_seed, evaluate, repetition_seeds, stream, Countermeasure, EvaluationReport};
use tagguard::recommender::{deterministic_embeddings, Profiles, Recommendation};
use tagguard::report::{self, sha256_hex, to_json_pretty, Manifest, REPORT_FILE};
use tagguard::{Error, Result};

#[derive(Parser)]
#[command(name = "tagguard", version, about = "Profile-injection attacks and countermeasures for tag-based recommenders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides the top-level `seed` key.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Print dataset statistics as JSON.
    Stats { dataset: PathBuf },
    /// Write the seeded synthetic desk corpus.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Generate a bogus folksonomy batch.
    AttackGen {
        #[command(flatten)]
        common: Common,
    },
    /// Train a classifier on the dataset plus a generated training batch.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        classifier: ClassifierKind,
    },
    /// Compute top-k lists, optionally after injecting a batch and filtering with a model.
    Recommend {
        #[command(flatten)]
        common: Common,
        /// Bogus batch written by `attack-gen`.
        #[arg(long)]
        batch: Option<PathBuf>,
        /// Model written by `train`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run the full attack and countermeasure evaluation.
    Evaluate {
        #[command(flatten)]
        common: Common,
    },
    /// Turn a report.json into plot-data CSVs.
    Report {
        report: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Ctx {
    cfg: CliConfig,
    out: PathBuf,
    manifest: Manifest,
}

impl Ctx {
    fn new(command: &str, common: &Common) -> Result<Ctx> {
        let mut cfg = match &common.config {
            Some(p) => CliConfig::load(p)?,
            None => CliConfig::default(),
        };
        if let Some(s) = common.seed {
            cfg.seed = s;
        }
        let out = common
            .out
            .clone()
            .or_else(|| cfg.output.dir.clone())
            .ok_or_else(|| Error::Config("output.dir: no output directory; pass --out".into()))?;
        let mut manifest = Manifest::new(command, cfg.to_toml());
        manifest.seeds.insert("master".into(), cfg.seed);
        Ok(Ctx { cfg, out, manifest })
    }

    fn corpus(&mut self) -> Result<Corpus> {
        let c = self.cfg.corpus()?;
        self.manifest
            .inputs
            .insert("corpus".into(), sha256_hex(c.to_dataset_string().as_bytes()));
        info!("corpus: {} folksonomies, {} users", c.len(), c.user_count());
        Ok(c)
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        self.manifest.write_artifact(&self.out, name, contents)
    }

    fn finish(self) -> Result<()> {
        self.manifest.write(&self.out)?;
        println!("{}", self.out.display());
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn cmd_stats(dataset: &Path) -> Result<()> {
    let c = Corpus::load(dataset)?;
    print!("{}", to_json_pretty(&c.stats())?);
    Ok(())
}

fn cmd_synth(common: &Common) -> Result<()> {
    let mut ctx = Ctx::new("synth", common)?;
    let c = tagguard::synth::desk_corpus(&ctx.cfg.synth)?;
    ctx.manifest.seeds.insert("synth".into(), ctx.cfg.synth.seed);
    ctx.write("corpus.tsv", c.to_dataset_string().as_bytes())?;
    ctx.finish()
}

fn cmd_attack_gen(common: &Common) -> Result<()> {
    let mut ctx = Ctx::new("attack-gen", common)?;
    let corpus = ctx.corpus()?;
    let a = &ctx.cfg.attack;
    let seed = derive_seed(ctx.cfg.seed, stream::ATTACK, 0);
    let spec = a.spec(a.kind, a.ratio, seed);
    let batch = generate(&corpus, &spec)?;
    ctx.manifest.seeds.insert("attack".into(), seed);
    let sidecar = serde_json::json!({
        "kind": spec.kind,
        "ratio": spec.injection_ratio,
        "seed": seed,
        "folksonomies": batch.folksonomies.len(),
        "popular_tag_pool": spec.popular_tag_pool,
        "popular_resource_pool": spec.popular_resource_pool,
        "max_size": spec.max_size,
        "bogus_resource": batch.bogus_resource,
        "target_resource": batch.target_resource,
    });
    let batch_corpus = Corpus::new(batch.folksonomies)?;
    ctx.write("batch.tsv", batch_corpus.to_dataset_string().as_bytes())?;
    ctx.write("batch.json", to_json_pretty(&sidecar)?.as_bytes())?;
    ctx.finish()
}

fn cmd_train(common: &Common, kind: ClassifierKind) -> Result<()> {
    let mut ctx = Ctx::new("train", common)?;
    let corpus = ctx.corpus()?;
    let vocabulary = build_vocabulary(&corpus)?;
    let a = &ctx.cfg.attack;
    let batch_seed = derive_seed(ctx.cfg.seed, stream::TRAIN_BATCH, 0);
    let mut spec = a.spec(a.kind, ctx.cfg.run.training_ratio, batch_seed);
    spec.fake_user_prefix = "train-".into();
    let batch = generate(&corpus, &spec)?;
    let data: Vec<&Folksonomy> = corpus.folksonomies().iter().chain(&batch.folksonomies).collect();
    let model_seed = derive_seed(ctx.cfg.seed, stream::FOLD_MODEL, 0);
    let tc = TrainConfig {
        seed: model_seed,
        ..ctx.cfg.train.clone()
    };
    info!("training {kind} on {} folksonomies", data.len());
    let model = classifiers::train(kind, &data, &vocabulary, &tc)?;
    ctx.manifest.seeds.insert("training_batch".into(), batch_seed);
    ctx.manifest.seeds.insert("model".into(), model_seed);
    ctx.manifest
        .inputs
        .insert("vocabulary_fingerprint".into(), vocabulary.fingerprint_hex());
    let json = model.to_json(&vocabulary)?;
    ctx.write("model.json", json.as_bytes())?;
    ctx.finish()
}

fn cmd_recommend(common: &Common, batch: Option<&Path>, model: Option<&Path>) -> Result<()> {
    let mut ctx = Ctx::new("recommend", common)?;
    let base = ctx.corpus()?;
    let vocabulary = build_vocabulary(&base)?;
    let embeddings = match ctx.cfg.embeddings()? {
        Some(e) => e,
        None => {
            let seed = derive_seed(ctx.cfg.seed, stream::EMBEDDING, 0);
            ctx.manifest.seeds.insert("embedding".into(), seed);
            deterministic_embeddings(&vocabulary, ctx.cfg.run.embedding_dim, seed)?
        }
    };
    let mut merged = base.clone();
    if let Some(p) = batch {
        ctx.manifest.inputs.insert("batch".into(), sha256_hex(&read_file(p)?));
        let bogus = Corpus::load(p)?;
        let fs: Vec<Folksonomy> = base
            .folksonomies()
            .iter()
            .cloned()
            .chain(bogus.into_folksonomies().into_iter().map(|f| f.with_label(Label::Bogus)))
            .collect();
        merged = Corpus::new(fs)?;
    }
    if let Some(p) = model {
        let text = read_file(p)?;
        ctx.manifest.inputs.insert("model".into(), sha256_hex(&text));
        let text = String::from_utf8(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        let m = TrainedModel::from_json(&text, &vocabulary)?;
        merged = classify_corpus(&m, &merged, &vocabulary)?.0;
    }
    let profiles = Profiles::build(&merged, &embeddings);
    let lists: BTreeMap<String, Vec<Recommendation>> = profiles
        .recommend(base.users(), ctx.cfg.run.k)
        .into_iter()
        .map(|(u, l)| (u, l.items))
        .collect();
    ctx.write("topk.json", to_json_pretty(&lists)?.as_bytes())?;
    ctx.finish()
}

fn write_report(ctx: &mut Ctx, report: &EvaluationReport) -> Result<()> {
    ctx.write(REPORT_FILE, to_json_pretty(report)?.as_bytes())?;
    let hashes = report::write_figure_csvs(report, &ctx.out)?;
    ctx.manifest.artifacts.extend(hashes);
    Ok(())
}

fn cmd_evaluate(common: &Common) -> Result<()> {
    let mut ctx = Ctx::new("evaluate", common)?;
    let corpus = ctx.corpus()?;
    let embeddings = ctx.cfg.embeddings()?;
    let cfg = &ctx.cfg;
    let run = cfg.run_config(cfg.run.attacks[0], Countermeasure::None);
    for (i, s) in repetition_seeds(&run).into_iter().enumerate() {
        ctx.manifest.seeds.insert(format!("repetition_{i}"), s);
    }
    let report = evaluate(&corpus, &run, &cfg.run.attacks, &cfg.run.classifiers, embeddings.as_ref())?;
    write_report(&mut ctx, &report)?;
    ctx.finish()
}

fn cmd_report(path: &Path, out: Option<&Path>) -> Result<()> {
    let text = read_file(path)?;
    let report: EvaluationReport = serde_json::from_slice(&text)?;
    let out = out.or(path.parent()).unwrap_or(Path::new("."));
    let mut manifest = Manifest::new("report", String::new());
    manifest.inputs.insert(REPORT_FILE.into(), sha256_hex(&text));
    manifest.artifacts = report::write_figure_csvs(&report, out)?;
    manifest.write(out)?;
    println!("{}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Stats { dataset } => cmd_stats(&dataset),
        Command::Synth { common } => cmd_synth(&common),
        Command::AttackGen { common } => cmd_attack_gen(&common),
        Command::Train { common, classifier } => cmd_train(&common, classifier),
        Command::Recommend { common, batch, model } => cmd_recommend(&common, batch.as_deref(), model.as_deref()),
        Command::Evaluate { common } => cmd_evaluate(&common),
        Command::Report { report, out } => cmd_report(&report, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TAGGUARD_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
