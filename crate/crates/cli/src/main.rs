use std::path::PathBuf;
use std::process::ExitCode;

use actionvec::datamodel::EncodingKind;
use actionvec::pipeline::{FeatureSpec, Pipeline, RunConfig};
use actionvec::synth::{generate, Pool5Shape, SynthSpec};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "actionvec", version, about = "Encode video descriptors and classify them with linear SVMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset (DESC1 files plus manifest).
    Synth(SynthArgs),
    /// Fit one PCA per layer on training descriptors.
    FitPca(RunArgs),
    /// Fit k-means codebooks for VLAD features.
    FitKmeans(RunArgs),
    /// Fit diagonal GMMs for Fisher vector features.
    FitGmm(RunArgs),
    /// Encode every video of the split.
    Encode(RunArgs),
    /// Concatenate per-feature encodings.
    Fuse(RunArgs),
    /// Train one-vs-all SVMs on the fused training encodings.
    Train(RunArgs),
    /// Score the test split and write report.json / report.txt.
    Evaluate(RunArgs),
    /// Run every stage over every selected split.
    RunAll(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Manifest path; overrides the config.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    vlad_k: Option<usize>,
    #[arg(long)]
    fv_k: Option<usize>,
    #[arg(long)]
    pca_dim: Option<usize>,
    #[arg(long)]
    c_param: Option<f64>,
    /// Restrict to features with this encoder.
    #[arg(long)]
    encoder: Option<EncodingKind>,
    /// Restrict to features over this layer.
    #[arg(long)]
    layer: Option<String>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Destination directory.
    #[arg(long)]
    out: PathBuf,
    /// Full spec as JSON; the individual flags below are ignored when given.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 20)]
    videos: usize,
    #[arg(long, default_value_t = 30)]
    frames: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 2)]
    modes: usize,
    #[arg(long, default_value_t = 10.0)]
    separation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    splits: usize,
    #[arg(long)]
    pool5_side: Option<usize>,
    #[arg(long, default_value_t = 512)]
    pool5_channels: usize,
    #[arg(long)]
    fc_dim: Option<usize>,
    #[arg(long)]
    softmax_classes: Option<usize>,
}

impl RunArgs {
    fn build(&self) -> Result<Pipeline> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => {
                let (Some(manifest), Some(out)) = (&self.manifest, &self.out) else {
                    bail!("either --config or both --manifest and --out are required");
                };
                let (Some(encoder), Some(layer)) = (self.encoder, &self.layer) else {
                    bail!("without --config, --encoder and --layer select the feature");
                };
                RunConfig::new(manifest, out, vec![FeatureSpec::new(encoder, layer.clone())])
            }
        };
        if let Some(m) = &self.manifest {
            cfg.manifest = m.clone();
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if self.split.is_some() {
            cfg.split = self.split.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = self.alpha {
            cfg.encoder.alpha = v;
        }
        if let Some(v) = self.vlad_k {
            cfg.encoder.vlad_k = v;
        }
        if let Some(v) = self.fv_k {
            cfg.encoder.fv_k = v;
        }
        if let Some(v) = self.pca_dim {
            cfg.encoder.pca_dim = v;
        }
        if let Some(v) = self.c_param {
            cfg.c_param = v;
        }
        if self.config.is_some() && (self.encoder.is_some() || self.layer.is_some()) {
            cfg.features.retain(|f| {
                self.encoder.is_none_or(|e| e == f.encoder) && self.layer.as_ref().is_none_or(|l| *l == f.layer)
            });
            if cfg.features.is_empty() {
                match (self.encoder, &self.layer) {
                    (Some(e), Some(l)) => cfg.features.push(FeatureSpec::new(e, l.clone())),
                    _ => bail!("--encoder/--layer match no feature in the config"),
                }
            }
        }
        Ok(Pipeline::new(cfg)?)
    }
}

fn synth(args: &SynthArgs) -> Result<()> {
    let spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => {
            let mut s = SynthSpec::new(
                args.classes,
                args.videos,
                args.frames,
                args.dim,
                args.modes,
                args.separation,
                args.seed,
            );
            s.splits = args.splits;
            s.pool5 = args.pool5_side.map(|side| Pool5Shape {
                side,
                channels: args.pool5_channels,
            });
            s.fc_dim = args.fc_dim;
            s.softmax_classes = args.softmax_classes;
            s
        }
    };
    let ds = generate(&spec, &args.out)?;
    println!(
        "wrote {} videos in {} classes to {}",
        ds.videos.len(),
        ds.classes.len(),
        args.out.join("manifest.json").display()
    );
    Ok(())
}

fn per_split(args: &RunArgs, stage: &str, f: impl Fn(&Pipeline, &str) -> Result<String>) -> Result<()> {
    let p = args.build()?;
    for split in p.splits() {
        let msg = f(&p, &split).with_context(|| format!("{stage} on split `{split}`"))?;
        println!("{split}: {msg}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let layer_of = |a: &RunArgs| a.layer.clone();
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::FitPca(a) => per_split(a, "fit-pca", |p, s| {
            Ok(format!("{} PCA model(s)", p.fit_pca(s, layer_of(a).as_deref())?.len()))
        }),
        Command::FitKmeans(a) => per_split(a, "fit-kmeans", |p, s| {
            Ok(format!("{} codebook(s)", p.fit_kmeans(s, layer_of(a).as_deref())?.len()))
        }),
        Command::FitGmm(a) => per_split(a, "fit-gmm", |p, s| {
            Ok(format!("{} GMM(s)", p.fit_gmm(s, layer_of(a).as_deref())?.len()))
        }),
        Command::Encode(a) => per_split(a, "encode", |p, s| Ok(format!("{} encodings", p.encode(s)?))),
        Command::Fuse(a) => per_split(a, "fuse", |p, s| Ok(format!("{} fused encodings", p.fuse(s)?))),
        Command::Train(a) => per_split(a, "train", |p, s| Ok(format!("wrote {}", p.train(s)?.display()))),
        Command::Evaluate(a) => per_split(a, "evaluate", |p, s| {
            Ok(format!("accuracy {:.4}", p.evaluate(s)?.accuracy))
        }),
        Command::RunAll(a) => {
            let summary = a.build()?.run_all()?;
            for s in &summary.splits {
                println!("{}: accuracy {:.4}", s.split, s.accuracy);
            }
            println!("mean accuracy {:.4}", summary.mean_accuracy);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Library errors already embed their cause; skip repeats.
            let mut msg = String::new();
            for cause in e.chain().map(ToString::to_string) {
                if !msg.contains(&cause) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&cause);
                }
            }
            eprintln!("error: {}", msg.replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
