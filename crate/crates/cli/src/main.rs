use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vqlens_cli::commands::{self, CorpusKind, SweepAxis};
use vqlens_cli::error::EXIT_INVALID_CONFIG;
use vqlens_cli::serve::{serve_study, ServeOptions};
use vqlens_cli::{CliError, RunConfig};
use vqlens_study::StudyConfig;

#[derive(Parser)]
#[command(name = "vqlens", version, about = "HOG bag-of-words pipeline, descriptor inversion and study tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by the pipeline commands. Precedence: defaults, then
/// `--config`, then `--set`, then the dedicated flags.
#[derive(Args)]
struct Common {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Codebook size.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    /// Class-folder image corpus.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Directory holding codebooks and inverters.
    #[arg(long)]
    artifacts: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        for s in &self.set {
            cfg.apply_override(s)?;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.k {
            cfg.pipeline.kmeans.k = v;
        }
        if let Some(v) = self.patch_size {
            cfg.pipeline.grid.patch_size = v;
        }
        if let Some(v) = self.stride {
            cfg.pipeline.grid.stride = v;
        }
        if let Some(v) = &self.dataset {
            cfg.dataset = Some(v.clone());
        }
        if let Some(v) = &self.artifacts {
            cfg.artifacts = v.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Cluster dataset descriptors into a k-word codebook.
    BuildCodebook {
        #[command(flatten)]
        common: Common,
        /// Output file [default: <artifacts>/codebook-<k>.bin].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the descriptor-to-patch inverter on dataset windows.
    TrainInverter {
        #[command(flatten)]
        common: Common,
        /// Output file [default: <artifacts>/inverter.bin].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reconstruct one image from its descriptors.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// Inverter file [default: <artifacts>/inverter.bin].
        #[arg(long)]
        inverter: Option<PathBuf>,
        /// Quantize through this codebook first.
        #[arg(long)]
        codebook: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct inputs across patch sizes, strides or codebook sizes.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// patch, stride or codebook.
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        /// Image file or directory of images; repeatable.
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split-based classification experiment.
    RunExperiment {
        #[command(flatten)]
        common: Common,
        /// Permute training labels (chance-level control).
        #[arg(long)]
        shuffle_labels: bool,
        #[arg(long)]
        splits: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render study stimuli under every condition.
    ExportStudy {
        #[command(flatten)]
        common: Common,
        /// Images to export, each under all six conditions.
        #[arg(long)]
        images: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the recognition study over HTTP.
    ServeStudy {
        #[arg(long, env = "VQLENS_LISTEN", default_value = "127.0.0.1:8080")]
        listen: String,
        #[arg(long, env = "VQLENS_STIMULI")]
        stimuli: PathBuf,
        #[arg(long, env = "VQLENS_LOG_DIR")]
        log_dir: PathBuf,
        /// Front-end files served at the root.
        #[arg(long, env = "VQLENS_STATIC_DIR")]
        static_dir: Option<PathBuf>,
        /// Fixes session tokens and trial orders (testing only).
        #[arg(long, env = "VQLENS_STUDY_SEED")]
        seed: Option<u64>,
    },
    /// Write a generated class-folder corpus.
    GenCorpus {
        /// textures or scenes.
        #[arg(long)]
        kind: CorpusKind,
        /// Images per class (textures) or in total (scenes).
        #[arg(long, default_value_t = 40)]
        count: usize,
        #[arg(long, default_value_t = 96)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::BuildCodebook { common, out } => {
            let s = commands::build_codebook(&common.resolve()?, out.as_deref())?;
            println!(
                "codebook k={} from {} descriptors, objective {:.6} -> {}",
                s.k,
                s.descriptors,
                s.objective,
                s.path.display()
            );
        }
        Command::TrainInverter { common, out } => {
            let s = commands::train_inverter(&common.resolve()?, out.as_deref())?;
            println!(
                "inverter lambda={} residual={:.2e} pairs={}+{} -> {}",
                s.lambda,
                s.relative_residual,
                s.train_pairs,
                s.holdout_pairs,
                s.path.display()
            );
        }
        Command::Reconstruct {
            common,
            input,
            inverter,
            codebook,
            out,
        } => {
            let cfg = common.resolve()?;
            let m = commands::reconstruct_image(&cfg, &input, inverter.as_deref(), codebook.as_deref(), &out)?;
            println!("mse {:.6}  high_freq_energy {:.6}", m.mse, m.high_freq_energy);
        }
        Command::Sweep {
            common,
            axis,
            values,
            input,
            out,
        } => {
            let rows = commands::sweep(&common.resolve()?, axis, &values, &input, &out)?;
            println!("{axis:>8}  {:>10}  {:>16}", "mse", "high_freq_energy");
            for r in rows {
                println!("{:>8}  {:>10.6}  {:>16.6}", r.value, r.mse, r.high_freq_energy);
            }
        }
        Command::RunExperiment {
            common,
            shuffle_labels,
            splits,
            out,
        } => {
            let mut cfg = common.resolve()?;
            if shuffle_labels {
                cfg.pipeline.experiment.shuffle_labels = true;
            }
            if let Some(n) = splits {
                cfg.pipeline.experiment.splits = n;
            }
            let report = commands::run_experiment(&cfg, &out, |r| {
                eprintln!("split {}: rate {:.4} (C = {})", r.split, r.rate, r.cost);
            })?;
            print!("{}", report.table());
        }
        Command::ExportStudy { common, images, out } => {
            let mut cfg = common.resolve()?;
            if let Some(n) = images {
                cfg.export_images = n;
            }
            let s = commands::export_study(&cfg, &out)?;
            println!(
                "{} images, {} stimuli, {} examples -> {}",
                s.images,
                s.stimuli.len(),
                s.examples.len(),
                out.display()
            );
        }
        Command::ServeStudy {
            listen,
            stimuli,
            log_dir,
            static_dir,
            seed,
        } => serve_study(ServeOptions {
            listen,
            study: StudyConfig {
                stimulus_dir: stimuli,
                log_dir,
                seed,
            },
            static_dir,
        })?,
        Command::GenCorpus {
            kind,
            count,
            size,
            seed,
            out,
        } => {
            let n = commands::gen_corpus(kind, count, size, seed, &out)?;
            println!("{n} images -> {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage {
                ExitCode::from(EXIT_INVALID_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
