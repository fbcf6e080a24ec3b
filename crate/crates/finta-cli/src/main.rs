//! Command-line toolchain for streamline filtering: phantom generation,
//! autoencoder training, ROC thresholding, latent-space filtering and
//! bundling, baseline filters, evaluation, interpolation, latent export and
//! the scaling benchmark. Every run writes a manifest that `finta rerun`
//! replays to byte-identical outputs.

mod decisions;
mod manifest;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use finta::baseline::{pipeline, MaskMode, Stage};
use finta::error::{Error, Result};
use finta::io;
use finta::latent::{
    classify, export_latents, filter, interpolate, select_threshold, LatentRow,
    ReferenceProvenance, ReferenceSet, Threshold, Verdict,
};
use finta::metrics::evaluate;
use finta::nn::adam::DecayMode;
use finta::nn::train::{train, TrainConfig, PRNG_NAME};
use finta::nn::{AutoencoderModel, LatentVector, ModelConfig, Normalization};
use finta::phantom::{generate, split, PhantomConfig};
use finta::streamline::Tractogram;

use decisions::{read_decisions, write_decisions};
use manifest::{records, RunManifest, MANIFEST_VERSION};

#[derive(Parser)]
#[command(name = "finta", version, about = "Tractography filtering with a streamline autoencoder")]
struct Cli {
    /// Worker threads (falls back to FINTA_THREADS, then all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", content = "args", rename_all = "kebab-case")]
enum Command {
    /// Generate a labeled synthetic phantom with a matching mask volume
    Phantom(PhantomArgs),
    /// Resample, align, split and train the autoencoder
    Train(TrainArgs),
    /// Build the reference latents and select the ROC-optimal threshold
    Threshold(ThresholdArgs),
    /// Filter a tractogram against a reference and threshold
    Filter(FilterArgs),
    /// Multi-class nearest-neighbor bundling
    Bundle(BundleArgs),
    /// Run the anatomy-style baseline filter pipeline
    Baseline(BaselineArgs),
    /// Score decisions against truth labels
    Evaluate(EvaluateArgs),
    /// Decode a latent-space interpolation between two streamlines
    Interpolate(InterpolateArgs),
    /// Dump per-streamline latent vectors as CSV
    ExportLatents(ExportLatentsArgs),
    /// Measure filtering wall time versus streamline count
    Bench(BenchArgs),
    /// Re-run a recorded manifest
    Rerun(RerunArgs),
}

#[derive(Args, Serialize, Deserialize, Clone)]
struct PhantomArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 7)]
    bundles: usize,
    #[arg(long, default_value_t = 1119)]
    per_bundle: usize,
    #[arg(long, default_value_t = 0.79)]
    implausible_fraction: f64,
    #[arg(long, default_value_t = 0.5)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 192.0)]
    field_of_view: f64,
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args, Serialize, Deserialize, Clone)]
struct TrainArgs {
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 6.68e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0.13)]
    weight_decay: f64,
    #[arg(long, default_value_t = 32)]
    latent: usize,
    #[arg(long, default_value_t = 256)]
    points: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 5)]
    patience: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    /// Fraction of the training pool held out for early stopping
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    /// Weight decay coupling: decoupled (applied to parameters) or coupled
    /// (added to the gradient)
    #[arg(long, default_value = "decoupled")]
    decay_mode: String,
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args, Serialize, Deserialize, Clone)]
struct ThresholdArgs {
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Split seed; must match the one used for training
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long, default_value = "plausible")]
    positive_label: String,
    /// Override the selected threshold with a fixed value
    #[arg(long)]
    fixed_value: Option<f64>,
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args, Serialize, Deserialize, Clone)]
struct FilterArgs {
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    threshold: PathBuf,
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args, Serialize, Deserialize, Clone)]
struct BundleArgs {
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Latent dump whose labels span the bundle classes
    #[arg(long)]
    reference: PathBuf,
    /// Optional rejection threshold file
    #[arg(long)]
    threshold: Option<PathBuf>,
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args, Serialize, Deserialize, Clone)]
struct BaselineArgs {
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Comma-separated stages: length[:MIN:MAX], loop[:MAXDEG], csf, atlas
    #[arg(long, default_value = "length,loop,csf,atlas")]
    stages: String,
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args, Serialize, Deserialize, Clone)]
struct EvaluateArgs {
    #[arg(long)]
    decisions: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value = "plausible")]
    positive_label: String,
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args, Serialize, Deserialize, Clone)]
struct InterpolateArgs {
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    index_a: usize,
    #[arg(long)]
    index_b: usize,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args, Serialize, Deserialize, Clone)]
struct ExportLatentsArgs {
    #[arg(long)]
    tracks: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Which sidecar column feeds the dump's label field: label or group
    #[arg(long, default_value = "label")]
    label_source: String,
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args, Serialize, Deserialize, Clone)]
struct BenchArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    threshold: PathBuf,
    #[arg(long, default_value = "5000,10000,25000,50000,100000")]
    sizes: String,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// Extend the size ladder to 200k/600k/1M streamlines
    #[arg(long, default_value_t = false)]
    full: bool,
    #[arg(long, default_value_t = 4242)]
    phantom_seed: u64,
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args, Serialize, Deserialize, Clone)]
struct RerunArgs {
    manifest: PathBuf,
}

struct Outcome {
    subcommand: &'static str,
    params: Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    manifest_path: PathBuf,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            let first = e.to_string().lines().next().unwrap_or("bad arguments").to_string();
            eprintln!("error: invalid-arguments: {first}");
            std::process::exit(1);
        }
    };
    let threads = cli
        .threads
        .or_else(|| std::env::var("FINTA_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: invalid-config: cannot size thread pool: {e}");
            std::process::exit(1);
        }
    }

    match std::panic::catch_unwind(|| run(&cli.command)) {
        Ok(Ok(())) => {}
        Ok(Err(e)) => {
            eprintln!("error: {}: {e}", error_kind(&e));
            std::process::exit(1);
        }
        Err(_) => {
            eprintln!("error: internal: invariant violated, see panic output above");
            std::process::exit(2);
        }
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Io(io_err) if io_err.kind() == std::io::ErrorKind::NotFound => "file-not-found",
        Error::Io(_) => "io-error",
        Error::InvalidStreamline(_) => "invalid-streamline",
        Error::ShapeMismatch(_) => "shape-mismatch",
        Error::InvalidConfig(_) => "invalid-config",
        Error::StratificationImpossible(_) => "stratification-impossible",
        Error::EmptyBatch => "empty-batch",
        Error::TrainingDiverged { .. } => "training-diverged",
        Error::InvalidLatent(_) => "invalid-latent",
        Error::EmptyReference => "empty-reference",
        Error::DegenerateRoc(_) => "degenerate-roc",
        Error::DegenerateGroups(_) => "degenerate-groups",
        Error::CorruptFile { .. } => "corrupt-file",
        Error::UnsupportedVersion { .. } => "unsupported-version",
    }
}

fn run(command: &Command) -> Result<()> {
    let started = Instant::now();
    let outcome = match command {
        Command::Phantom(a) => run_phantom(a)?,
        Command::Train(a) => run_train(a)?,
        Command::Threshold(a) => run_threshold(a)?,
        Command::Filter(a) => run_filter(a)?,
        Command::Bundle(a) => run_bundle(a)?,
        Command::Baseline(a) => run_baseline(a)?,
        Command::Evaluate(a) => run_evaluate(a)?,
        Command::Interpolate(a) => run_interpolate(a)?,
        Command::ExportLatents(a) => run_export_latents(a)?,
        Command::Bench(a) => run_bench(a)?,
        Command::Rerun(a) => {
            let recorded = RunManifest::read(&a.manifest)?;
            let command: Command = serde_json::from_value(serde_json::json!({
                "name": recorded.subcommand,
                "args": recorded.params,
            }))
            .map_err(|e| Error::CorruptFile {
                offset: 0,
                message: format!("manifest does not describe a runnable command: {e}"),
            })?;
            return run(&command);
        }
    };

    let input_paths: Vec<&Path> = outcome.inputs.iter().map(|p| p.as_path()).collect();
    let output_paths: Vec<&Path> = outcome.outputs.iter().map(|p| p.as_path()).collect();
    let manifest = RunManifest {
        manifest_version: MANIFEST_VERSION,
        subcommand: outcome.subcommand.to_string(),
        params: outcome.params,
        threads: rayon::current_num_threads(),
        prng: PRNG_NAME.to_string(),
        inputs: records(&input_paths)?,
        outputs: records(&output_paths)?,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    manifest.write(&outcome.manifest_path)?;
    println!("wrote {}", outcome.manifest_path.display());
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    prefix.with_file_name(name)
}

fn load_tracks(path: &Path) -> Result<Tractogram> {
    let outcome = io::read_tracks(path)?;
    for w in &outcome.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok(outcome.tractogram)
}

fn load_labeled(tracks: &Path, labels: &Path) -> Result<Tractogram> {
    let t = load_tracks(tracks)?;
    let sidecar = io::read_labels(labels)?;
    sidecar.apply(&t)
}

/// Resample to the model's vertex count and align with the model's anchor.
fn prepare(t: &Tractogram, model: &AutoencoderModel<f32>) -> Result<Tractogram> {
    Ok(t.resample(model.config.input_points)?.align_endpoints(&model.norm.anchor))
}

fn reference_from_rows(rows: &[LatentRow], model_id: String, source: String) -> Result<ReferenceSet> {
    let latents: Vec<LatentVector> =
        rows.iter().map(|r| LatentVector { values: r.values.clone() }).collect();
    let labels: Vec<String> = rows
        .iter()
        .map(|r| {
            r.label.clone().ok_or_else(|| {
                Error::InvalidConfig(format!("reference row {} carries no label", r.id))
            })
        })
        .collect::<Result<_>>()?;
    ReferenceSet::build(&latents, &labels, ReferenceProvenance { model_id, source })
}

fn run_phantom(a: &PhantomArgs) -> Result<Outcome> {
    let config = PhantomConfig {
        seed: a.seed,
        n_bundles: a.bundles,
        streamlines_per_bundle: a.per_bundle,
        implausible_fraction: a.implausible_fraction,
        noise_sigma_mm: a.noise_sigma,
        field_of_view_mm: a.field_of_view,
        ..PhantomConfig::default()
    };
    let out = generate(&config)?;
    let tracks = with_suffix(&a.out_prefix, ".tck");
    let labels = with_suffix(&a.out_prefix, ".labels.json");
    let mask = with_suffix(&a.out_prefix, ".mask");
    io::write_tracks(&out.tractogram, &tracks)?;
    io::write_labels(
        &io::LabelSidecar::from_tractogram(&out.tractogram).expect("phantom is labeled"),
        &labels,
    )?;
    io::write_mask(&out.mask, &mask)?;
    println!(
        "phantom: {} streamlines ({} plausible, {} implausible)",
        out.tractogram.len(),
        out.provenance.plausible_count,
        out.provenance.implausible_count
    );
    Ok(Outcome {
        subcommand: "phantom",
        params: serde_json::to_value(a).unwrap(),
        inputs: vec![],
        outputs: vec![tracks, labels, mask],
        manifest_path: with_suffix(&a.out_prefix, ".manifest.json"),
    })
}

fn run_train(a: &TrainArgs) -> Result<Outcome> {
    let decay_mode = match a.decay_mode.as_str() {
        "decoupled" => DecayMode::Decoupled,
        "coupled" => DecayMode::Coupled,
        other => {
            return Err(Error::InvalidConfig(format!(
                "decay mode must be decoupled or coupled, got {other:?}"
            )))
        }
    };
    let labeled = load_labeled(&a.tracks, &a.labels)?;
    let resampled = labeled.resample(a.points)?;
    let (pool, _test) = split(&resampled, a.train_fraction, a.seed)?;
    let (train_part, val_part) = split(&pool, 1.0 - a.val_fraction, a.seed.wrapping_add(1))?;
    // anchor: centroid of the training pool's first endpoints, in as-read
    // orientation; alignment happens after resampling
    let anchor = train_part.first_endpoint_centroid();
    let train_aligned = train_part.align_endpoints(&anchor);
    let val_aligned = val_part.align_endpoints(&anchor);

    let model_config = ModelConfig {
        input_points: a.points,
        latent_dim: a.latent,
        seed: a.seed,
        ..ModelConfig::default()
    };
    let mut model = AutoencoderModel::<f32>::init(model_config)?;
    model.norm = Normalization::fit(&train_aligned.streamlines, anchor);

    let train_config = TrainConfig {
        learning_rate: a.lr,
        weight_decay: a.weight_decay,
        batch_size: a.batch_size,
        max_epochs: a.epochs,
        patience: a.patience,
        seed: a.seed,
        decay_mode,
    };
    let (model, report) =
        train(model, &train_aligned.streamlines, &val_aligned.streamlines, &train_config)?;
    for e in &report.epochs {
        println!("epoch {:3}: train {:.6e}  val {:.6e}", e.epoch, e.train_loss, e.val_loss);
    }

    let model_path = with_suffix(&a.out_prefix, ".model.fnta");
    let report_path = with_suffix(&a.out_prefix, ".train_report.json");
    io::write_model(&model, &model_path)?;
    std::fs::write(&report_path, serde_json::to_string_pretty(&report).unwrap())?;
    Ok(Outcome {
        subcommand: "train",
        params: serde_json::to_value(a).unwrap(),
        inputs: vec![a.tracks.clone(), a.labels.clone()],
        outputs: vec![model_path, report_path],
        manifest_path: with_suffix(&a.out_prefix, ".manifest.json"),
    })
}

fn run_threshold(a: &ThresholdArgs) -> Result<Outcome> {
    let model = io::read_model(&a.model)?;
    let labeled = load_labeled(&a.tracks, &a.labels)?;
    let resampled = labeled.resample(model.config.input_points)?;
    let (pool, _test) = split(&resampled, a.train_fraction, a.seed)?;
    let pool = pool.align_endpoints(&model.norm.anchor);
    let labels = pool.labels.as_ref().expect("split keeps labels");
    let pos_idx: Vec<usize> =
        (0..pool.len()).filter(|&i| labels[i] == a.positive_label).collect();
    let neg_idx: Vec<usize> =
        (0..pool.len()).filter(|&i| labels[i] != a.positive_label).collect();
    if pos_idx.is_empty() || neg_idx.is_empty() {
        return Err(Error::DegenerateRoc(format!(
            "training pool has {} positives and {} negatives for label {:?}",
            pos_idx.len(),
            neg_idx.len(),
            a.positive_label
        )));
    }

    let pos = pool.select(&pos_idx);
    let pos_latents = model.encode_batch(&pos.streamlines)?;
    let reference = ReferenceSet::build(
        &pos_latents,
        &vec![a.positive_label.clone(); pos_latents.len()],
        ReferenceProvenance {
            model_id: model.id(),
            source: format!("{} train-split positives", a.tracks.display()),
        },
    )?;
    // positives score against the reference leave-one-out, negatives
    // against the full reference
    let pos_d: Vec<f64> = pos_latents
        .iter()
        .enumerate()
        .map(|(i, z)| reference.nearest_excluding(z, i).map(|(_, d, _)| d))
        .collect::<Result<_>>()?;
    let neg = pool.select(&neg_idx);
    let neg_latents = model.encode_batch(&neg.streamlines)?;
    let neg_d: Vec<f64> = neg_latents
        .iter()
        .map(|z| reference.nearest(z).map(|(_, d, _)| d))
        .collect::<Result<_>>()?;
    let mut threshold = select_threshold(&pos_d, &neg_d)?;
    if let Some(v) = a.fixed_value {
        if !(v > 0.0) {
            return Err(Error::InvalidConfig(format!("fixed threshold must be positive, got {v}")));
        }
        threshold.value = v;
        threshold.criterion = "fixed override".into();
    }
    println!("threshold: {:.6} over {} candidates", threshold.value, threshold.curve.len());

    let reference_path = with_suffix(&a.out_prefix, ".reference.csv");
    let rows: Vec<LatentRow> = pos_latents
        .iter()
        .enumerate()
        .map(|(i, z)| LatentRow {
            id: i,
            label: Some(a.positive_label.clone()),
            values: z.values.clone(),
        })
        .collect();
    io::write_latents(&rows, &reference_path)?;
    let threshold_path = with_suffix(&a.out_prefix, ".threshold.json");
    std::fs::write(&threshold_path, serde_json::to_string_pretty(&threshold).unwrap())?;
    let roc_path = with_suffix(&a.out_prefix, ".roc.csv");
    let mut roc = String::from("threshold,tpr,fpr\n");
    for p in &threshold.curve {
        roc.push_str(&format!("{:.16e},{:.6},{:.6}\n", p.threshold, p.tpr, p.fpr));
    }
    std::fs::write(&roc_path, roc)?;
    Ok(Outcome {
        subcommand: "threshold",
        params: serde_json::to_value(a).unwrap(),
        inputs: vec![a.tracks.clone(), a.labels.clone(), a.model.clone()],
        outputs: vec![reference_path, threshold_path, roc_path],
        manifest_path: with_suffix(&a.out_prefix, ".manifest.json"),
    })
}

fn read_threshold(path: &Path) -> Result<Threshold> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::CorruptFile {
        offset: e.column() as u64,
        message: format!("bad threshold file: {e}"),
    })
}

fn run_filter(a: &FilterArgs) -> Result<Outcome> {
    let model = io::read_model(&a.model)?;
    let raw = load_tracks(&a.tracks)?;
    let prepared = prepare(&raw, &model)?;
    let reference = reference_from_rows(
        &io::read_latents(&a.reference)?,
        model.id(),
        a.reference.display().to_string(),
    )?;
    let threshold = read_threshold(&a.threshold)?;
    let decisions = filter(&model, &reference, &prepared, &threshold)?;

    let pos_idx: Vec<usize> = decisions
        .iter()
        .filter(|d| d.verdict == Verdict::Positive)
        .map(|d| d.index)
        .collect();
    let neg_idx: Vec<usize> = decisions
        .iter()
        .filter(|d| d.verdict == Verdict::Negative)
        .map(|d| d.index)
        .collect();
    println!("filter: {} positive, {} negative", pos_idx.len(), neg_idx.len());

    let positives_path = with_suffix(&a.out_prefix, ".positives.tck");
    let negatives_path = with_suffix(&a.out_prefix, ".negatives.tck");
    let decisions_path = with_suffix(&a.out_prefix, ".decisions.csv");
    io::write_tracks(&raw.select(&pos_idx), &positives_path)?;
    io::write_tracks(&raw.select(&neg_idx), &negatives_path)?;
    write_decisions(&decisions, &decisions_path)?;
    Ok(Outcome {
        subcommand: "filter",
        params: serde_json::to_value(a).unwrap(),
        inputs: vec![
            a.tracks.clone(),
            a.model.clone(),
            a.reference.clone(),
            a.threshold.clone(),
        ],
        outputs: vec![positives_path, negatives_path, decisions_path],
        manifest_path: with_suffix(&a.out_prefix, ".manifest.json"),
    })
}

fn run_bundle(a: &BundleArgs) -> Result<Outcome> {
    let model = io::read_model(&a.model)?;
    let raw = load_tracks(&a.tracks)?;
    let prepared = prepare(&raw, &model)?;
    let reference = reference_from_rows(
        &io::read_latents(&a.reference)?,
        model.id(),
        a.reference.display().to_string(),
    )?;
    let threshold = a.threshold.as_ref().map(|p| read_threshold(p)).transpose()?;
    let decisions = classify(&model, &reference, &prepared, threshold.as_ref())?;
    let decisions_path = with_suffix(&a.out_prefix, ".decisions.csv");
    write_decisions(&decisions, &decisions_path)?;
    let mut inputs = vec![a.tracks.clone(), a.model.clone(), a.reference.clone()];
    if let Some(t) = &a.threshold {
        inputs.push(t.clone());
    }
    Ok(Outcome {
        subcommand: "bundle",
        params: serde_json::to_value(a).unwrap(),
        inputs,
        outputs: vec![decisions_path],
        manifest_path: with_suffix(&a.out_prefix, ".manifest.json"),
    })
}

fn parse_stages(list: &str) -> Result<Vec<Stage>> {
    let mut stages = Vec::new();
    for item in list.split(',') {
        let parts: Vec<&str> = item.split(':').collect();
        let bad = || Error::InvalidConfig(format!("bad stage spec {item:?}"));
        let stage = match parts[0] {
            "length" => match parts.len() {
                1 => Stage::Length {
                    min_mm: finta::baseline::DEFAULT_MIN_LENGTH_MM,
                    max_mm: finta::baseline::DEFAULT_MAX_LENGTH_MM,
                },
                3 => Stage::Length {
                    min_mm: parts[1].parse().map_err(|_| bad())?,
                    max_mm: parts[2].parse().map_err(|_| bad())?,
                },
                _ => return Err(bad()),
            },
            "loop" => match parts.len() {
                1 => Stage::Loop { max_winding_deg: finta::baseline::DEFAULT_MAX_WINDING_DEG },
                2 => Stage::Loop { max_winding_deg: parts[1].parse().map_err(|_| bad())? },
                _ => return Err(bad()),
            },
            "csf" => Stage::Mask { mode: MaskMode::RejectCsfEndpoint },
            "atlas" => Stage::Mask { mode: MaskMode::RequireAtlasEndpoint },
            _ => return Err(bad()),
        };
        stages.push(stage);
    }
    Ok(stages)
}

fn run_baseline(a: &BaselineArgs) -> Result<Outcome> {
    let t = load_tracks(&a.tracks)?;
    let stages = parse_stages(&a.stages)?;
    let mask = a.mask.as_ref().map(|p| io::read_mask(p)).transpose()?;
    let outcome = pipeline(&t, &stages, mask.as_ref())?;

    let verdicts_path = with_suffix(&a.out_prefix, ".baseline.csv");
    let mut csv = String::from("index,verdict,rejected_by\n");
    for i in 0..t.len() {
        let rejected = outcome.rejected_by[i]
            .map(|s| outcome.stages[s].name.clone())
            .unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{}\n",
            i,
            if outcome.verdicts[i] { "positive" } else { "negative" },
            rejected
        ));
    }
    std::fs::write(&verdicts_path, csv)?;
    let report_path = with_suffix(&a.out_prefix, ".stages.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&outcome.stages).unwrap())?;
    for s in &outcome.stages {
        println!("stage {}: {} -> {}", s.name, s.input_count, s.positive_count);
    }
    let mut inputs = vec![a.tracks.clone()];
    if let Some(m) = &a.mask {
        inputs.push(m.clone());
    }
    Ok(Outcome {
        subcommand: "baseline",
        params: serde_json::to_value(a).unwrap(),
        inputs,
        outputs: vec![verdicts_path, report_path],
        manifest_path: with_suffix(&a.out_prefix, ".manifest.json"),
    })
}

fn run_evaluate(a: &EvaluateArgs) -> Result<Outcome> {
    let decisions = read_decisions(&a.decisions)?;
    let sidecar = io::read_labels(&a.labels)?;
    let n = decisions.len();
    let mut pred = vec![false; n];
    for d in &decisions {
        if d.index >= n {
            return Err(Error::ShapeMismatch(format!(
                "decision index {} out of range for {} rows",
                d.index, n
            )));
        }
        pred[d.index] = d.verdict == Verdict::Positive;
    }
    let mut truth = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for i in 0..n {
        let entry = sidecar.entries.get(&(i as u64)).ok_or_else(|| {
            Error::ShapeMismatch(format!("label sidecar missing entry for streamline {i}"))
        })?;
        let is_pos = entry.label == a.positive_label;
        truth.push(is_pos);
        groups.push(if is_pos { entry.group_id.clone().filter(|g| !g.is_empty()) } else { None });
    }
    let report = evaluate(&pred, &truth, &groups)?;
    println!(
        "accuracy {:.4}  sensitivity {:.4}  precision {:.4}  f1 {:.4}  vgw {:.4}  sr {:.4}",
        report.macro_measures.accuracy,
        report.macro_measures.sensitivity,
        report.macro_measures.precision,
        report.macro_measures.f1,
        report.vgw_rate,
        report.success_rate
    );
    let text_path = with_suffix(&a.out_prefix, ".report.txt");
    let csv_path = with_suffix(&a.out_prefix, ".report.csv");
    io::report::write_eval_report(&report, &text_path, &csv_path)?;
    Ok(Outcome {
        subcommand: "evaluate",
        params: serde_json::to_value(a).unwrap(),
        inputs: vec![a.decisions.clone(), a.labels.clone()],
        outputs: vec![text_path, csv_path],
        manifest_path: with_suffix(&a.out_prefix, ".manifest.json"),
    })
}

fn run_interpolate(a: &InterpolateArgs) -> Result<Outcome> {
    let model = io::read_model(&a.model)?;
    let raw = load_tracks(&a.tracks)?;
    if a.index_a >= raw.len() || a.index_b >= raw.len() {
        return Err(Error::InvalidConfig(format!(
            "indices {}/{} out of range for {} streamlines",
            a.index_a,
            a.index_b,
            raw.len()
        )));
    }
    let prepared = prepare(&raw, &model)?;
    let z_a = model.encode(&prepared.streamlines[a.index_a])?;
    let z_b = model.encode(&prepared.streamlines[a.index_b])?;
    let interpolated = interpolate(&model, &z_a, &z_b, a.steps)?;
    let out_path = with_suffix(&a.out_prefix, ".interpolated.tck");
    io::write_tracks(&Tractogram::new(interpolated), &out_path)?;
    Ok(Outcome {
        subcommand: "interpolate",
        params: serde_json::to_value(a).unwrap(),
        inputs: vec![a.tracks.clone(), a.model.clone()],
        outputs: vec![out_path],
        manifest_path: with_suffix(&a.out_prefix, ".manifest.json"),
    })
}

fn run_export_latents(a: &ExportLatentsArgs) -> Result<Outcome> {
    let model = io::read_model(&a.model)?;
    let use_groups = match a.label_source.as_str() {
        "label" => false,
        "group" => true,
        other => {
            return Err(Error::InvalidConfig(format!(
                "label source must be label or group, got {other:?}"
            )))
        }
    };
    let raw = match &a.labels {
        Some(labels) => load_labeled(&a.tracks, labels)?,
        None => load_tracks(&a.tracks)?,
    };
    let prepared = prepare(&raw, &model)?;
    let rows = export_latents(&model, &prepared, use_groups)?;
    let out_path = with_suffix(&a.out_prefix, ".latents.csv");
    io::write_latents(&rows, &out_path)?;
    let mut inputs = vec![a.tracks.clone(), a.model.clone()];
    if let Some(l) = &a.labels {
        inputs.push(l.clone());
    }
    Ok(Outcome {
        subcommand: "export-latents",
        params: serde_json::to_value(a).unwrap(),
        inputs,
        outputs: vec![out_path],
        manifest_path: with_suffix(&a.out_prefix, ".manifest.json"),
    })
}

fn run_bench(a: &BenchArgs) -> Result<Outcome> {
    let model = io::read_model(&a.model)?;
    let reference = reference_from_rows(
        &io::read_latents(&a.reference)?,
        model.id(),
        a.reference.display().to_string(),
    )?;
    let threshold = read_threshold(&a.threshold)?;
    let mut sizes: Vec<usize> = a
        .sizes
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad size {s:?}")))
        })
        .collect::<Result<_>>()?;
    if a.full {
        sizes.extend([200_000, 600_000, 1_000_000]);
    }
    sizes.sort_unstable();
    sizes.dedup();
    let max = *sizes.last().ok_or_else(|| Error::InvalidConfig("no sizes".into()))?;

    // synthesize one phantom large enough for every size, prepared outside
    // the timed region
    let bundles = 7usize;
    let per_bundle = (max as f64 * 0.21 / bundles as f64).ceil() as usize + 1;
    let phantom = generate(&PhantomConfig {
        seed: a.phantom_seed,
        streamlines_per_bundle: per_bundle,
        ..PhantomConfig::default()
    })?;
    let prepared = prepare(&phantom.tractogram, &model)?;
    let total = prepared.len();
    if total < max {
        return Err(Error::InvalidConfig(format!(
            "synthesized {total} streamlines, need {max}"
        )));
    }
    // deterministic class interleaving: plausibles sit at the front of the
    // phantom, so alternate head and tail picks
    let mixed: Vec<usize> = (0..total)
        .map(|j| if j % 2 == 0 { j / 2 } else { total - 1 - j / 2 })
        .collect();
    let inputs: Vec<Tractogram> =
        sizes.iter().map(|&n| prepared.select(&mixed[..n])).collect();

    let result = finta::bench::run_scaling(&model, &reference, &threshold, &inputs, a.reps)?;
    for p in &result.points {
        println!("{:>8} streamlines: {:.3} s (std {:.3})", p.count, p.mean_s, p.std_s);
    }
    println!(
        "fit: {:.3e} s/streamline + {:.3e} s, R^2 {:.4}",
        result.slope, result.intercept, result.r_squared
    );
    if !result.noisy_sizes.is_empty() {
        eprintln!("warning: noisy timings at sizes {:?}", result.noisy_sizes);
    }
    let csv_path = with_suffix(&a.out_prefix, ".bench.csv");
    let svg_path = with_suffix(&a.out_prefix, ".bench.svg");
    io::report::write_bench_csv(&result, &csv_path)?;
    io::report::write_bench_svg(&result, &svg_path)?;
    Ok(Outcome {
        subcommand: "bench",
        params: serde_json::to_value(a).unwrap(),
        inputs: vec![a.model.clone(), a.reference.clone(), a.threshold.clone()],
        outputs: vec![csv_path, svg_path],
        manifest_path: with_suffix(&a.out_prefix, ".manifest.json"),
    })
}
