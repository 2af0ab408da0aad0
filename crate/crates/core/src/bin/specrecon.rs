use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use specrecon::io::{self, RunConfig};
use specrecon::recon::Algorithm;
use specrecon::Result;

#[derive(Parser)]
#[command(name = "specrecon", version, about = "Reference-free spectral CT reconstruction on simulated fan-beam data")]
struct Cli {
    /// JSON run config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write per-bin sinograms, ground truth and a manifest.
    Simulate,
    /// Reconstruct a simulation with one algorithm.
    Reconstruct {
        /// sirt, tvm, n2n-post or s2s (overrides `recon.algorithm`).
        #[arg(long)]
        algorithm: Option<String>,
        /// Directory holding the simulation; defaults to the output directory.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Score every reconstruction in the output directory against ground truth.
    Metrics {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Render one raw image to an 8-bit PNG.
    ExportPng {
        /// Raw `.f32` image with its sidecar.
        #[arg(long)]
        image: PathBuf,
        /// Display window `LO,HI`; the image range when omitted.
        #[arg(long, value_parser = parse_window, allow_hyphen_values = true)]
        window: Option<(f64, f64)>,
        /// Output PNG; defaults to the image path with a `.png` extension.
        #[arg(long)]
        png: Option<PathBuf>,
    },
    /// Run s2s, s2s without the spectral prior, and n2n post-processing.
    Ablate {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Print the JSON schema of the run config.
    Schema,
    /// Print the effective config after overrides.
    ShowConfig,
}

fn parse_window(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok((p(lo)?, p(hi)?))
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut c = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        c.seed = seed;
    }
    if let Some(out) = &cli.out {
        c.output_dir = out.clone();
    }
    Ok(c)
}

fn input_dir(input: &Option<PathBuf>, config: &RunConfig) -> PathBuf {
    input.clone().unwrap_or_else(|| config.output_dir.clone())
}

fn print_reports(reports: &[specrecon::metrics::MetricReport]) {
    for r in reports {
        let psnr = r.mean_psnr().map_or("n/a".to_string(), |p| format!("{p:.3} dB"));
        println!("{:<14} mean PSNR {psnr}", r.method);
    }
}

/// Print long output; a closed pipe (`| head`) is not an error.
fn emit(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Schema => {
            emit(&serde_json::to_string_pretty(&io::config_schema()).expect("schema serializes"));
        }
        Command::ShowConfig => emit(&load_config(cli)?.to_pretty_json()),
        Command::Simulate => {
            let c = load_config(cli)?;
            let m = io::cmd_simulate(&c, &c.output_dir)?;
            println!("wrote {} files to {} (config {})", m.files.len(), c.output_dir.display(), &m.config_hash[..12]);
        }
        Command::Reconstruct { algorithm, input } => {
            let mut c = load_config(cli)?;
            if let Some(a) = algorithm {
                c.recon.algorithm = a.parse::<Algorithm>()?;
            }
            let input = input_dir(input, &c);
            let rec = io::cmd_reconstruct(&c, &input, &c.output_dir)?;
            let finals: Vec<String> = rec.residuals.iter().map(|h| format!("{:.4e}", h.last().copied().unwrap_or(f64::NAN))).collect();
            println!("{}: final residuals [{}]", rec.algorithm, finals.join(", "));
        }
        Command::Metrics { input } => {
            let c = load_config(cli)?;
            let reports = io::cmd_metrics(&c, &input_dir(input, &c), &c.output_dir)?;
            print_reports(&reports);
        }
        Command::ExportPng { image, window, png } => {
            let png = png.clone().unwrap_or_else(|| image.with_extension("png"));
            let (lo, hi) = io::cmd_export_png(image, *window, &png)?;
            println!("wrote {} with window [{lo}, {hi}]", png.display());
        }
        Command::Ablate { input } => {
            let c = load_config(cli)?;
            let reports = io::cmd_ablate(&c, &input_dir(input, &c), &c.output_dir)?;
            print_reports(&reports);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
