//! Batch front door: phantom generation, per-site posterior sampling,
//! summaries, MAP baseline and change maps.
//!
//! Exit codes: 0 ok, 2 usage/config, 3 data/format, 4 numeric failure.
//! `BIFS_THREADS` caps the worker pool.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bifs_core::error::{BifsError, Result};
use bifs_core::fourier::forward_fft;
use bifs_core::grid::ImageGrid;
use bifs_core::io;
use bifs_core::likelihood::estimate_sigma;
use bifs_core::phantom::{add_disk, add_noise, make_phantom, DiskSpec, PhantomKind};
use bifs_core::posterior::{change_probability_map, map_estimate, summarize, DEFAULT_BLOCK_ROWS};
use bifs_core::sampler::{acceptance_map, adapt_proposals, run_field_with_xi, ChainField};

use config::{parse_dc_mode, parse_f64, parse_patch, RunConfig};

#[derive(Parser)]
#[command(
    name = "bifs",
    version,
    about = "Fourier-space Bayesian image analysis: posterior sampling, summaries and change maps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic truth/noisy image pair
    Phantom(PhantomArgs),
    /// Sample the per-site Fourier posterior of a noisy image
    Sample(SampleArgs),
    /// Posterior mean and quantile maps from a chain file
    Summarize(SummarizeArgs),
    /// Change-probability map between two chain files
    Changemap(ChangemapArgs),
    /// MAP point-estimate baseline reconstruction
    Mapest(MapestArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    SmoothBlobs,
    Flat,
}

#[derive(Args)]
struct PhantomArgs {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Square dimension (rows = cols)
    #[arg(long, conflicts_with_all = ["rows", "cols"])]
    size: Option<usize>,
    #[arg(long, requires = "cols")]
    rows: Option<usize>,
    #[arg(long, requires = "rows")]
    cols: Option<usize>,
    #[arg(long, value_enum, default_value = "smooth-blobs")]
    kind: KindArg,
    /// Lesion disk "row,col,radius,delta" with an absolute delta; repeatable
    #[arg(long = "disk")]
    disks: Vec<String>,
    /// Lesion disk "row,col,radius,frac" with delta = frac * current image max; repeatable
    #[arg(long = "disk-frac")]
    disk_fracs: Vec<String>,
    /// Image-space noise standard deviation
    #[arg(long)]
    noise: Option<f64>,
    /// Noise standard deviation as a fraction of the image max
    #[arg(long, conflicts_with = "noise")]
    noise_frac: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Flags shared by the model-driven subcommands; each overrides the matching
/// config-file key.
#[derive(Args)]
struct ModelArgs {
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    /// fix_observed or explicit:<sigma>
    #[arg(long = "dc-mode")]
    dc_mode: Option<String>,
    /// Fourier-space noise scale (per Cartesian component)
    #[arg(long = "noise-sigma")]
    noise_sigma: Option<f64>,
    /// Flat patch "x,y,w,h" to estimate the noise scale from
    #[arg(long = "noise-patch")]
    noise_patch: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ModelArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.d {
            cfg.d = v;
        }
        if let Some(v) = self.c {
            cfg.c = v;
        }
        if let Some(s) = &self.dc_mode {
            cfg.dc_mode = parse_dc_mode(s)?;
        }
        if let Some(v) = self.noise_sigma {
            cfg.noise_sigma = Some(v);
            cfg.noise_patch = None;
        }
        if let Some(s) = &self.noise_patch {
            cfg.noise_patch = Some(parse_patch(s)?);
            cfg.noise_sigma = None;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SampleArgs {
    /// Noisy input image (.grd, .png or .pgm)
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long = "total-iters")]
    total_iters: Option<usize>,
    #[arg(long = "burn-in")]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// Constant proposal scale
    #[arg(long)]
    xi: Option<f64>,
    /// Proposal-scale parameter function "lambda,d"
    #[arg(long = "xi-fn", conflicts_with = "xi")]
    xi_fn: Option<String>,
    /// Tune per-site proposal scales with pilot chains before sampling
    #[arg(long)]
    adapt: bool,
    #[arg(long = "adapt-target")]
    adapt_target: Option<f64>,
    #[arg(long = "adapt-iters")]
    adapt_iters: Option<usize>,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Chain container produced by `bifs sample`
    #[arg(long)]
    chain: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated quantile levels
    #[arg(long)]
    levels: Option<String>,
    /// Row-block height for the quantile pass
    #[arg(long = "block-rows", default_value_t = DEFAULT_BLOCK_ROWS)]
    block_rows: usize,
    /// Truth grid; when given, reconstruction MSEs are logged
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Noisy grid for the MSE comparison baseline
    #[arg(long)]
    noisy: Option<PathBuf>,
}

#[derive(Args)]
struct ChangemapArgs {
    /// Chain container of the first (earlier) image
    #[arg(long = "chain-a")]
    chain_a: PathBuf,
    /// Chain container of the second (later) image
    #[arg(long = "chain-b")]
    chain_b: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Allow both chains to carry the same RNG seed
    #[arg(long = "allow-same-seed")]
    allow_same_seed: bool,
}

#[derive(Args)]
struct MapestArgs {
    /// Noisy input image (.grd, .png or .pgm)
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
}

fn main() {
    let cli = Cli::parse();
    let result = setup_threads().and_then(|_| match cli.command {
        Command::Phantom(args) => cmd_phantom(args),
        Command::Sample(args) => cmd_sample(args),
        Command::Summarize(args) => cmd_summarize(args),
        Command::Changemap(args) => cmd_changemap(args),
        Command::Mapest(args) => cmd_mapest(args),
    });
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}

fn exit_code(e: &BifsError) -> i32 {
    match e {
        BifsError::Config(_) => 2,
        BifsError::Data(_) | BifsError::Format(_) | BifsError::Io(_) => 3,
        BifsError::Numeric(_) => 4,
        BifsError::Site { source, .. } => exit_code(source),
    }
}

fn setup_threads() -> Result<()> {
    if let Ok(raw) = std::env::var("BIFS_THREADS") {
        let n: usize = raw
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| BifsError::Config(format!("BIFS_THREADS must be a positive integer, got {raw:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| BifsError::Config(format!("worker pool setup failed: {e}")))?;
    }
    Ok(())
}

fn load_image(path: &Path) -> Result<ImageGrid> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("grd") => io::read_grid(path),
        _ => io::read_image_gray(path),
    }
}

fn resolve_sigma(cfg: &RunConfig, image: &ImageGrid) -> Result<f64> {
    if let Some(sigma) = cfg.noise_sigma {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(BifsError::Config(format!("noise_sigma must be positive, got {sigma}")));
        }
        return Ok(sigma);
    }
    if let Some(patch) = &cfg.noise_patch {
        return estimate_sigma(image, patch);
    }
    Err(BifsError::Config(
        "noise scale unresolvable: set noise_sigma or noise_patch".into(),
    ))
}

fn write_outputs(dir: &Path, name: &str, grid: &ImageGrid) -> Result<()> {
    io::write_grid(&dir.join(format!("{name}.grd")), grid)?;
    io::write_png16(&dir.join(format!("{name}.png")), grid)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn parse_disk(raw: &str, fractional: bool) -> Result<(f64, f64, f64, f64, bool)> {
    let parts: Vec<&str> = raw.split(',').collect();
    if parts.len() != 4 {
        return Err(BifsError::Config(format!(
            "disk spec must be row,col,radius,{} — got {raw:?}",
            if fractional { "frac" } else { "delta" }
        )));
    }
    Ok((
        parse_f64("disk", parts[0].trim())?,
        parse_f64("disk", parts[1].trim())?,
        parse_f64("disk", parts[2].trim())?,
        parse_f64("disk", parts[3].trim())?,
        fractional,
    ))
}

fn cmd_phantom(args: PhantomArgs) -> Result<()> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let (rows, cols) = match (args.size, args.rows, args.cols) {
        (Some(n), _, _) => (n, n),
        (None, Some(r), Some(c)) => (r, c),
        (None, None, None) => (64, 64),
        _ => unreachable!("clap enforces rows/cols pairing"),
    };
    let kind = match args.kind {
        KindArg::SmoothBlobs => PhantomKind::SmoothBlobs,
        KindArg::Flat => PhantomKind::Flat,
    };

    let mut specs: Vec<(f64, f64, f64, f64, bool)> = Vec::new();
    for raw in &args.disks {
        specs.push(parse_disk(raw, false)?);
    }
    for raw in &args.disk_fracs {
        specs.push(parse_disk(raw, true)?);
    }

    let mut truth = make_phantom(rows, cols, kind)?;
    let mut resolved_disks = Vec::new();
    for (row, col, radius, amount, fractional) in specs {
        let delta = if fractional {
            let (_, max) = truth.min_max();
            amount * max
        } else {
            amount
        };
        let disk = DiskSpec {
            center_row: row,
            center_col: col,
            radius,
            delta,
        };
        truth = add_disk(&truth, &disk)?;
        resolved_disks.push(disk);
    }

    let (_, max_after) = truth.min_max();
    let sigma_noise = match (args.noise, args.noise_frac, cfg.noise_sigma) {
        (Some(v), _, _) => v,
        (None, Some(f), _) => f * max_after,
        (None, None, Some(v)) => v,
        (None, None, None) => {
            return Err(BifsError::Config(
                "phantom needs a noise level: --noise, --noise-frac or config noise_sigma".into(),
            ))
        }
    };
    let noisy = add_noise(&truth, sigma_noise, cfg.seed)?;

    std::fs::create_dir_all(&args.out)?;
    write_outputs(&args.out, "truth", &truth)?;
    write_outputs(&args.out, "noisy", &noisy)?;

    let mut meta = String::new();
    let _ = writeln!(meta, "rows={rows}");
    let _ = writeln!(meta, "cols={cols}");
    let _ = writeln!(
        meta,
        "kind={}",
        match kind {
            PhantomKind::SmoothBlobs => "smooth_blobs",
            PhantomKind::Flat => "flat",
        }
    );
    for d in &resolved_disks {
        let _ = writeln!(
            meta,
            "disk={},{},{},{}",
            d.center_row, d.center_col, d.radius, d.delta
        );
    }
    let _ = writeln!(meta, "sigma_noise={sigma_noise}");
    let _ = writeln!(meta, "seed={}", cfg.seed);
    let _ = writeln!(meta, "truth_max={max_after}");
    write_text(&args.out.join("phantom_meta.txt"), &meta)?;
    write_text(&args.out.join("config_used.txt"), &meta)?;
    println!(
        "phantom: wrote truth/noisy {}x{} (sigma_noise={sigma_noise}) to {}",
        rows,
        cols,
        args.out.display()
    );
    Ok(())
}

fn grand_mean_rate(field: &ChainField) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for chain in &field.chains {
        if !chain.fixed {
            total += chain.accept_count as f64 / chain.propose_count as f64;
            n += 1;
        }
    }
    total / n.max(1) as f64
}

fn cmd_sample(args: SampleArgs) -> Result<()> {
    let start = Instant::now();
    let mut cfg = args.model.resolve()?;
    if let Some(v) = args.total_iters {
        cfg.total_iters = v;
    }
    if let Some(v) = args.burn_in {
        cfg.burn_in = v;
    }
    if let Some(v) = args.thin {
        cfg.thin = v;
    }
    if let Some(v) = args.xi {
        cfg.xi = Some(v);
        cfg.xi_fn = None;
    }
    if let Some(s) = &args.xi_fn {
        cfg.xi_fn = Some(config::parse_pair("xi_fn", s)?);
        cfg.xi = None;
    }
    if args.adapt {
        cfg.adapt = true;
    }
    if let Some(v) = args.adapt_target {
        cfg.adapt_target = v;
    }
    if let Some(v) = args.adapt_iters {
        cfg.adapt_iters = v;
    }
    cfg.validate()?;

    let image = load_image(&args.image)?;
    let sigma = resolve_sigma(&cfg, &image)?;
    let priors = cfg.prior_field()?;
    let sampler_cfg = cfg.sampler_config()?;
    let observed = forward_fft(&image)?;

    let mut log = String::new();
    let xi_map = if cfg.adapt {
        let outcome = adapt_proposals(&observed, &priors, sigma, &sampler_cfg)?;
        for r in &outcome.rounds {
            let _ = writeln!(
                log,
                "adapt_round_{}: mean_rate={:.4} min_rate={:.4} max_rate={:.4} frac_in_band={:.4}",
                r.round, r.mean_rate, r.min_rate, r.max_rate, r.frac_in_band
            );
        }
        let _ = writeln!(log, "adapt_converged={}", outcome.converged);
        if !outcome.converged {
            eprintln!("warning: proposal adaptation did not converge; using the best round's scales");
        }
        Some(outcome.xi)
    } else {
        None
    };

    let field = run_field_with_xi(&observed, &priors, sigma, &sampler_cfg, xi_map.as_deref())?;
    io::write_chain_field(&args.out.join("chain.chn"), {
        std::fs::create_dir_all(&args.out)?;
        &field
    })?;
    let rates = acceptance_map(&field)?;
    write_outputs(&args.out, "acceptance", &rates)?;

    let grand = grand_mean_rate(&field);
    let _ = writeln!(log, "grand_mean_acceptance={grand:.6}");
    let _ = writeln!(log, "retained_per_site={}", field.retained_len());
    let _ = writeln!(log, "wall_seconds={:.3}", start.elapsed().as_secs_f64());
    write_text(&args.out.join("run_log.txt"), &log)?;
    write_text(&args.out.join("config_used.txt"), &cfg.echo(Some(sigma)))?;
    println!(
        "sample: {} sites, grand mean acceptance {grand:.3}, chain written to {}",
        field.chains.len(),
        args.out.join("chain.chn").display()
    );
    Ok(())
}

fn cmd_summarize(args: SummarizeArgs) -> Result<()> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    if let Some(raw) = &args.levels {
        cfg.levels = config::parse_levels("levels", raw)?;
    }
    let field = io::read_chain_field(&args.chain)?;
    let summary = summarize(&field, &cfg.levels, args.block_rows)?;

    std::fs::create_dir_all(&args.out)?;
    write_outputs(&args.out, "mean", &summary.mean)?;
    for (level, grid) in &summary.quantiles {
        write_outputs(&args.out, &format!("quantile_{level}"), grid)?;
    }

    let mut log = String::new();
    let _ = writeln!(log, "sample_count={}", summary.sample_count);
    if let Some(truth_path) = &args.truth {
        let truth = io::read_grid(truth_path)?;
        let mse_mean = summary.mean.mse(&truth)?;
        let _ = writeln!(log, "mse_mean_vs_truth={mse_mean:.9e}");
        if let Some(noisy_path) = &args.noisy {
            let noisy = io::read_grid(noisy_path)?;
            let mse_noisy = noisy.mse(&truth)?;
            let _ = writeln!(log, "mse_noisy_vs_truth={mse_noisy:.9e}");
            let _ = writeln!(log, "mse_ratio={:.6}", mse_mean / mse_noisy);
        }
    }
    write_text(&args.out.join("summary_log.txt"), &log)?;
    write_text(&args.out.join("config_used.txt"), &cfg.echo(None))?;
    println!(
        "summarize: mean plus {} quantile maps written to {}",
        summary.quantiles.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_changemap(args: ChangemapArgs) -> Result<()> {
    let field_a = io::read_chain_field(&args.chain_a)?;
    let field_b = io::read_chain_field(&args.chain_b)?;
    if field_a.seed == field_b.seed && !args.allow_same_seed {
        return Err(BifsError::Config(format!(
            "both chains carry seed {}; correlated chains bias the change map (pass --allow-same-seed to override)",
            field_a.seed
        )));
    }
    if field_a.retained_len() != field_b.retained_len() {
        eprintln!(
            "warning: retained counts differ ({} vs {}); truncating to the shorter chain",
            field_a.retained_len(),
            field_b.retained_len()
        );
    }
    let map = change_probability_map(&field_a, &field_b)?;
    std::fs::create_dir_all(&args.out)?;
    write_outputs(&args.out, "lambda", &map.values)?;
    let mut echo = String::new();
    let _ = writeln!(echo, "chain_a={}", args.chain_a.display());
    let _ = writeln!(echo, "chain_b={}", args.chain_b.display());
    let _ = writeln!(echo, "seed_a={}", field_a.seed);
    let _ = writeln!(echo, "seed_b={}", field_b.seed);
    let _ = writeln!(echo, "allow_same_seed={}", args.allow_same_seed);
    let _ = writeln!(echo, "sample_count={}", map.sample_count);
    write_text(&args.out.join("config_used.txt"), &echo)?;
    println!(
        "changemap: {} paired states, map written to {}",
        map.sample_count,
        args.out.display()
    );
    Ok(())
}

fn cmd_mapest(args: MapestArgs) -> Result<()> {
    let cfg = args.model.resolve()?;
    cfg.validate()?;
    let image = load_image(&args.image)?;
    let sigma = resolve_sigma(&cfg, &image)?;
    let priors = cfg.prior_field()?;
    let observed = forward_fft(&image)?;
    let outcome = map_estimate(&observed, &priors, sigma)?;
    std::fs::create_dir_all(&args.out)?;
    write_outputs(&args.out, "map", &outcome.image)?;
    let mut log = String::new();
    let _ = writeln!(log, "flagged_sites={}", outcome.flagged_sites);
    write_text(&args.out.join("mapest_log.txt"), &log)?;
    write_text(&args.out.join("config_used.txt"), &cfg.echo(Some(sigma)))?;
    println!(
        "mapest: reconstruction written to {} ({} flagged sites)",
        args.out.display(),
        outcome.flagged_sites
    );
    Ok(())
}
