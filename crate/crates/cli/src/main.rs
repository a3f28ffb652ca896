//! `cwl`: batch front end for the workload-classification pipeline.
//!
//! Subcommands cover the full path from synthetic data to reports:
//! `generate` writes session directories, `preprocess` turns them into
//! feature windows, `train-eval` runs the cascade and baseline experiment,
//! `study` scores questionnaires and summarizes hemodynamics, and
//! `dump-scalograms` renders detector inputs for inspection.
//!
//! Settings merge with precedence command line > `--config` file > built-in
//! defaults. The config file is plain `key=value` lines (`#` comments);
//! unknown keys are rejected. Every random stream derives from the single
//! root `--seed`, so one number reproduces a whole run: subject `i` uses
//! `derive_seed(seed, "synth/subject/i")` and the experiment seeds its
//! internal streams under `cascade/...` tags.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 1 runtime
//! failure. Failures print one `ERROR <code>: <message>` line to stderr.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use cwl_core::cascade::{run_experiment, write_reports, ExperimentConfig, ModelSelection};
use cwl_core::cwt::{render_image, write_pgm, CwtConfig, CwtPlan};
use cwl_core::features::{
    preprocess_recording, read_features_csv, write_features_csv, FeatureWindow, PreprocessConfig,
    WindowSpec,
};
use cwl_core::signals::load_recording;
use cwl_core::study::{
    average_epoch_averages, epoch_average, read_surgtlx_csv, task_summary_stats,
    write_hemo_summary_csv, write_surgtlx_scores_csv,
};
use cwl_core::synth::{generate_session, subject_config, write_session, SynthConfig};

#[derive(Parser)]
#[command(name = "cwl", version, about = "Multimodal cognitive-workload pipeline")]
struct Cli {
    /// key=value settings file applied beneath command-line flags
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Root seed; every random stream in the run derives from it
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write seeded synthetic session directories
    Generate {
        /// Number of subjects to synthesize
        #[arg(long, value_name = "N")]
        subjects: Option<usize>,
    },
    /// Impute, filter, resample, z-score and window every session
    Preprocess {
        /// Directory holding session subdirectories
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
    },
    /// Train the cascade and requested baselines, then write reports
    TrainEval {
        /// Directory holding features.csv files (per subject or flat)
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        /// Number of repeated stratified splits
        #[arg(long, value_name = "N")]
        repeats: Option<usize>,
        /// Comma list drawn from cnn1d, elm, melm
        #[arg(long, value_name = "LIST")]
        models: Option<String>,
    },
    /// Score SURG-TLX responses and summarize hemodynamic epochs
    Study {
        /// Directory holding session subdirectories
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        /// Questionnaire CSV (default: <data>/surgtlx.csv)
        #[arg(long, value_name = "PATH")]
        surgtlx: Option<PathBuf>,
    },
    /// Render the first feature windows' scalograms as PGM images
    DumpScalograms {
        /// Directory holding features.csv files (per subject or flat)
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        /// How many windows to render
        #[arg(long, value_name = "N")]
        count: Option<usize>,
    },
}

enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            // {:#} renders the whole context chain on one line
            CliError::Runtime(e) => format!("{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Merged settings; every field has a built-in default, may be set by a
/// `--config` file key of the same name, and is overridden by its flag.
struct RunConfig {
    seed: u64,
    out: PathBuf,
    data: PathBuf,
    subjects: usize,
    session_s: f64,
    task_s: f64,
    rest_s: f64,
    window_samples: usize,
    stride_samples: usize,
    repeats: usize,
    train_frac: f64,
    models: ModelSelection,
    image_size: usize,
    pretrain_images: usize,
    pretrain_epochs: usize,
    freeze_k: usize,
    finetune_epochs: usize,
    stage2_epochs: usize,
    lr: f64,
    batch_size: usize,
    elm_hidden: usize,
    melm_hidden: usize,
    melm_dims: Vec<usize>,
    ridge: f64,
    cwt_scales: usize,
    cwt_fmin: f64,
    cwt_fmax: f64,
    cwt_omega0: f64,
    pre_s: f64,
    post_s: f64,
    surgtlx: Option<PathBuf>,
    count: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        let exp = ExperimentConfig::default();
        let win = WindowSpec::default();
        Self {
            seed: exp.seed,
            out: PathBuf::from("out"),
            data: PathBuf::from("out"),
            subjects: 5,
            session_s: synth.session_length_s,
            task_s: synth.task_block_s,
            rest_s: synth.rest_block_s,
            window_samples: win.window_samples,
            stride_samples: win.stride_samples,
            repeats: exp.repeats,
            train_frac: exp.train_frac,
            models: exp.models,
            image_size: exp.image_size,
            pretrain_images: exp.pretrain_images,
            pretrain_epochs: exp.pretrain_epochs,
            freeze_k: exp.freeze_k,
            finetune_epochs: exp.finetune_epochs,
            stage2_epochs: exp.stage2_epochs,
            lr: exp.lr,
            batch_size: exp.batch_size,
            elm_hidden: exp.elm_hidden,
            melm_hidden: exp.melm_hidden,
            melm_dims: exp.melm_dims,
            ridge: exp.ridge,
            cwt_scales: exp.cwt.n_scales,
            cwt_fmin: exp.cwt.freq_min_hz,
            cwt_fmax: exp.cwt.freq_max_hz,
            cwt_omega0: exp.cwt.omega0,
            pre_s: 5.0,
            post_s: 30.0,
            surgtlx: None,
            count: 16,
        }
    }
}

impl RunConfig {
    /// Apply one config-file entry. Unknown keys and unparsable values are
    /// hard usage errors.
    fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
            value
                .parse()
                .map_err(|_| usage(format!("config key '{key}': cannot parse value '{value}'")))
        }
        match key {
            "seed" => self.seed = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "data" => self.data = PathBuf::from(value),
            "subjects" => self.subjects = parse(key, value)?,
            "session_s" => self.session_s = parse(key, value)?,
            "task_s" => self.task_s = parse(key, value)?,
            "rest_s" => self.rest_s = parse(key, value)?,
            "window_samples" => self.window_samples = parse(key, value)?,
            "stride_samples" => self.stride_samples = parse(key, value)?,
            "repeats" => self.repeats = parse(key, value)?,
            "train_frac" => self.train_frac = parse(key, value)?,
            "models" => self.models = parse_models(value)?,
            "image_size" => self.image_size = parse(key, value)?,
            "pretrain_images" => self.pretrain_images = parse(key, value)?,
            "pretrain_epochs" => self.pretrain_epochs = parse(key, value)?,
            "freeze_k" => self.freeze_k = parse(key, value)?,
            "finetune_epochs" => self.finetune_epochs = parse(key, value)?,
            "stage2_epochs" => self.stage2_epochs = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "elm_hidden" => self.elm_hidden = parse(key, value)?,
            "melm_hidden" => self.melm_hidden = parse(key, value)?,
            "melm_dims" => {
                self.melm_dims = value
                    .split(',')
                    .map(|d| parse::<usize>(key, d.trim()))
                    .collect::<Result<_, _>>()?
            }
            "ridge" => self.ridge = parse(key, value)?,
            "cwt_scales" => self.cwt_scales = parse(key, value)?,
            "cwt_fmin" => self.cwt_fmin = parse(key, value)?,
            "cwt_fmax" => self.cwt_fmax = parse(key, value)?,
            "cwt_omega0" => self.cwt_omega0 = parse(key, value)?,
            "pre_s" => self.pre_s = parse(key, value)?,
            "post_s" => self.post_s = parse(key, value)?,
            "surgtlx" => self.surgtlx = Some(PathBuf::from(value)),
            "count" => self.count = parse(key, value)?,
            _ => return Err(usage(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            seed: self.seed,
            repeats: self.repeats,
            train_frac: self.train_frac,
            cwt: self.cwt_config(),
            image_size: self.image_size,
            pretrain_images: self.pretrain_images,
            pretrain_epochs: self.pretrain_epochs,
            freeze_k: self.freeze_k,
            finetune_epochs: self.finetune_epochs,
            stage2_epochs: self.stage2_epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            elm_hidden: self.elm_hidden,
            melm_hidden: self.melm_hidden,
            melm_dims: self.melm_dims.clone(),
            ridge: self.ridge,
            models: self.models,
            ..ExperimentConfig::default()
        }
    }

    fn cwt_config(&self) -> CwtConfig {
        CwtConfig {
            n_scales: self.cwt_scales,
            freq_min_hz: self.cwt_fmin,
            freq_max_hz: self.cwt_fmax,
            omega0: self.cwt_omega0,
        }
    }
}

fn parse_models(s: &str) -> Result<ModelSelection, CliError> {
    ModelSelection::parse(s).map_err(|e| usage(e.to_string()))
}

fn load_config_file(path: &Path, cfg: &mut RunConfig) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("config file {}: {e}", path.display())))?;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config file line {}: missing '='", i + 1)))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("ERROR 2: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ERROR {}: {}", e.code(), e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        load_config_file(path, &mut cfg)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    match cli.command {
        Command::Generate { subjects } => {
            if let Some(n) = subjects {
                cfg.subjects = n;
            }
            cmd_generate(&cfg)
        }
        Command::Preprocess { data } => {
            if let Some(d) = data {
                cfg.data = d;
            }
            cmd_preprocess(&cfg)
        }
        Command::TrainEval { data, repeats, models } => {
            if let Some(d) = data {
                cfg.data = d;
            }
            if let Some(r) = repeats {
                cfg.repeats = r;
            }
            if let Some(m) = models {
                cfg.models = parse_models(&m)?;
            }
            cmd_train_eval(&cfg)
        }
        Command::Study { data, surgtlx } => {
            if let Some(d) = data {
                cfg.data = d;
            }
            if let Some(s) = surgtlx {
                cfg.surgtlx = Some(s);
            }
            cmd_study(&cfg)
        }
        Command::DumpScalograms { data, count } => {
            if let Some(d) = data {
                cfg.data = d;
            }
            if let Some(c) = count {
                cfg.count = c;
            }
            cmd_dump_scalograms(&cfg)
        }
    }
}

fn cmd_generate(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.subjects == 0 {
        return Err(usage("--subjects must be >= 1"));
    }
    let base = SynthConfig {
        session_length_s: cfg.session_s,
        task_block_s: cfg.task_s,
        rest_block_s: cfg.rest_s,
        ..SynthConfig::default()
    };
    for i in 0..cfg.subjects {
        let sc = subject_config(&base, cfg.seed, i);
        let dir = cfg.out.join(&sc.subject_id);
        let (rec, gt) = generate_session(&sc)
            .with_context(|| format!("subject {i} ({})", sc.subject_id))?;
        write_session(&dir, &rec, &gt)
            .with_context(|| format!("subject {i} ({})", sc.subject_id))?;
        println!("wrote {}", dir.display());
    }
    println!("generated {} sessions under {}", cfg.subjects, cfg.out.display());
    Ok(())
}

/// Session subdirectories of `data`, sorted by name for a stable order.
fn discover_sessions(data: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(data)
        .with_context(|| format!("reading {}", data.display()))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let path = entry.with_context(|| format!("reading {}", data.display()))?.path();
        if path.is_dir() && path.join("manifest.txt").is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "no session directories (containing manifest.txt) under {}",
            data.display()
        )));
    }
    Ok(dirs)
}

fn cmd_preprocess(cfg: &RunConfig) -> Result<(), CliError> {
    let pp = PreprocessConfig {
        window: WindowSpec {
            window_samples: cfg.window_samples,
            stride_samples: cfg.stride_samples,
            ..WindowSpec::default()
        },
        ..PreprocessConfig::default()
    };
    for dir in discover_sessions(&cfg.data)? {
        let name = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let rec = load_recording(&dir).with_context(|| format!("session {name}"))?;
        let windows =
            preprocess_recording(&rec, &pp).with_context(|| format!("session {name}"))?;
        let out_dir = cfg.out.join(&name);
        std::fs::create_dir_all(&out_dir)
            .with_context(|| format!("creating {}", out_dir.display()))?;
        let path = out_dir.join("features.csv");
        write_features_csv(&path, &windows)
            .with_context(|| format!("writing {}", path.display()))?;
        println!(
            "{name}: impute -> highpass({} Hz, order {}) -> resample({}/{} Hz) -> zscore -> \
             segment({}x{} stride) -> {} windows",
            pp.highpass_cutoff_hz,
            pp.highpass_order,
            pp.neuro_fs_out,
            pp.pupil_fs_out,
            pp.window.window_samples,
            pp.window.stride_samples,
            windows.len()
        );
    }
    Ok(())
}

/// Load `data/features.csv` if present, else every `data/*/features.csv`
/// in sorted order, concatenated.
fn load_features(data: &Path) -> Result<Vec<FeatureWindow>, CliError> {
    let flat = data.join("features.csv");
    if flat.is_file() {
        return Ok(read_features_csv(&flat).with_context(|| flat.display().to_string())?);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(data)
        .with_context(|| format!("reading {}", data.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path().join("features.csv"))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "no features.csv under {} (run preprocess first)",
            data.display()
        )));
    }
    let mut windows = Vec::new();
    for f in files {
        windows.extend(read_features_csv(&f).with_context(|| f.display().to_string())?);
    }
    Ok(windows)
}

fn cmd_train_eval(cfg: &RunConfig) -> Result<(), CliError> {
    let windows = load_features(&cfg.data)?;
    let exp = cfg.experiment_config();
    exp.validate().map_err(|e| usage(e.to_string()))?;
    println!(
        "training on {} windows ({} repeats, seed {})",
        windows.len(),
        exp.repeats,
        exp.seed
    );
    let report = run_experiment(&windows, &exp).context("experiment")?;
    std::fs::create_dir_all(&cfg.out)
        .with_context(|| format!("creating {}", cfg.out.display()))?;
    write_reports(&cfg.out, &report).context("writing reports")?;
    let mut files = String::from("report.csv, loss_history.csv, summary.txt");
    if report.final_model.is_some() {
        files.push_str(", confusion_train.csv, confusion_test.csv");
    }
    println!("wrote {files} under {}", cfg.out.display());
    Ok(())
}

fn cmd_study(cfg: &RunConfig) -> Result<(), CliError> {
    let surgtlx = cfg.surgtlx.clone().unwrap_or_else(|| cfg.data.join("surgtlx.csv"));
    let rows = read_surgtlx_csv(&surgtlx).context("surgtlx")?;
    std::fs::create_dir_all(&cfg.out)
        .with_context(|| format!("creating {}", cfg.out.display()))?;
    let scores_path = cfg.out.join("surgtlx_scores.csv");
    write_surgtlx_scores_csv(&scores_path, &rows).context("surgtlx scores")?;
    println!("scored {} questionnaire rows -> {}", rows.len(), scores_path.display());

    let mut epochs = Vec::new();
    for dir in discover_sessions(&cfg.data)? {
        let name = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let rec = load_recording(&dir).with_context(|| format!("session {name}"))?;
        let ea = epoch_average(&rec, cfg.pre_s, cfg.post_s)
            .with_context(|| format!("session {name}"))?;
        epochs.push(ea);
    }
    let pooled = average_epoch_averages(&epochs).context("averaging epochs")?;
    let stats = task_summary_stats(&pooled);
    let hemo_path = cfg.out.join("hemo_summary.csv");
    write_hemo_summary_csv(&hemo_path, &stats).context("hemo summary")?;
    println!(
        "averaged {} sessions ({}s pre / {}s post) -> {}",
        epochs.len(),
        cfg.pre_s,
        cfg.post_s,
        hemo_path.display()
    );
    Ok(())
}

fn cmd_dump_scalograms(cfg: &RunConfig) -> Result<(), CliError> {
    let windows = load_features(&cfg.data)?;
    let plan = CwtPlan::new(500.0, &cfg.cwt_config()).map_err(|e| usage(e.to_string()))?;
    std::fs::create_dir_all(&cfg.out)
        .with_context(|| format!("creating {}", cfg.out.display()))?;
    let n = cfg.count.min(windows.len());
    for w in &windows[..n] {
        let s = plan.transform(&w.vector).context("transform")?;
        let image = render_image(&s, cfg.image_size, cfg.image_size);
        let mut name = String::new();
        let t_ms = (w.t_start_s * 1000.0).round() as u64;
        let _ = write!(name, "{}_{}_{}.pgm", w.subject_id, t_ms, w.task_label.as_str());
        let path = cfg.out.join(name);
        write_pgm(&path, &image).with_context(|| path.display().to_string())?;
    }
    println!("wrote {n} scalograms under {}", cfg.out.display());
    Ok(())
}
