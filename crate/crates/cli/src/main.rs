mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use occface::fitter::AttentionMode;
use occface::label_raster::MergeMode;
use occface::morphable::SyntheticModelSpec;
use occface::synthgen::OccluderKind;

use commands::{FitOverrides, MergeSource, ModelChoice};
use error::CliResult;

#[derive(Parser)]
#[command(name = "occface", version, about = "Occlusion-robust 3D face fitting pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Complete a parsing map with landmark-derived facial regions.
    Merge {
        #[arg(long)]
        m_alpha: PathBuf,
        #[arg(long, required_unless_present = "m_beta", conflicts_with = "m_beta")]
        landmarks: Option<PathBuf>,
        /// Use a ready label map instead of rasterizing landmarks.
        #[arg(long)]
        m_beta: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Apply the merge literally: the skin pass never reaches the output.
        #[arg(long)]
        literal: bool,
    },
    /// Fit the morphable model to an image as described by a JSON config.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured iteration count.
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long, value_enum)]
        attention: Option<Attention>,
    },
    /// Compare a fitted mesh with ground truth and write metrics.json.
    Eval {
        #[arg(long)]
        mesh: PathBuf,
        /// A scene truth.json or an OBJ mesh.
        #[arg(long)]
        truth: PathBuf,
        /// Fit report to take final losses from (default: next to the mesh).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Output path (default: metrics.json next to the mesh).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate synthetic scenes.
    Synth {
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long, value_enum, default_value_t = Occluder::Disc)]
        kind: Occluder,
        #[arg(long, default_value_t = 0.2)]
        fraction: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Build or export a synthetic morphable model.
    #[command(subcommand)]
    Model(ModelCommand),
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Write a synthetic model as JSON.
    Generate {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the mean face as an OBJ mesh.
    Export {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SpecArgs {
    #[arg(long, default_value_t = 0)]
    model_seed: u64,
    #[arg(long, default_value_t = 2000)]
    vertices: usize,
    #[arg(long, default_value_t = 16)]
    n_alpha: usize,
    #[arg(long, default_value_t = 16)]
    n_beta: usize,
}

impl SpecArgs {
    fn spec(&self) -> SyntheticModelSpec {
        SyntheticModelSpec {
            seed: self.model_seed,
            n_vertices: self.vertices,
            n_alpha: self.n_alpha,
            n_beta: self.n_beta,
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Model JSON file; when absent a synthetic model is built.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    spec: SpecArgs,
}

impl ModelArgs {
    fn choice(&self) -> ModelChoice {
        match &self.model {
            Some(p) => ModelChoice::File(p.clone()),
            None => ModelChoice::Synthetic(self.spec.spec()),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Occluder {
    None,
    Bar,
    Disc,
    HandSilhouette,
}

impl From<Occluder> for OccluderKind {
    fn from(o: Occluder) -> Self {
        match o {
            Occluder::None => OccluderKind::None,
            Occluder::Bar => OccluderKind::Bar,
            Occluder::Disc => OccluderKind::Disc,
            Occluder::HandSilhouette => OccluderKind::HandSilhouette,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Attention {
    Occlusion,
    Uniform,
}

impl From<Attention> for AttentionMode {
    fn from(a: Attention) -> Self {
        match a {
            Attention::Occlusion => AttentionMode::Occlusion,
            Attention::Uniform => AttentionMode::Uniform,
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Merge {
            m_alpha,
            landmarks,
            m_beta,
            out,
            literal,
        } => {
            let source = match (&landmarks, &m_beta) {
                (Some(l), _) => MergeSource::Landmarks(l),
                (None, Some(m)) => MergeSource::Map(m),
                (None, None) => unreachable!("clap requires one source"),
            };
            let mode = if literal { MergeMode::Literal } else { MergeMode::RetainSkinPass };
            commands::merge(&m_alpha, source, &out, mode)
        }
        Command::Fit {
            config,
            iters,
            attention,
        } => commands::fit(
            &config,
            FitOverrides {
                iters,
                attention: attention.map(Into::into),
            },
        )
        .map(drop),
        Command::Eval {
            mesh,
            truth,
            report,
            out,
        } => commands::eval(&mesh, &truth, report.as_deref(), out.as_deref()).map(drop),
        Command::Synth {
            seeds,
            kind,
            fraction,
            out,
            model,
        } => commands::synth(&model.choice(), &seeds, kind.into(), fraction, &out).map(drop),
        Command::Model(ModelCommand::Generate { spec, out }) => commands::model_generate(&spec.spec(), &out),
        Command::Model(ModelCommand::Export { model, out }) => commands::model_export(&model.choice(), &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Messages already embed their sources.
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
