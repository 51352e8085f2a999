//! `kinetext` — command-line front end for the dataset generator.
//!
//! Subcommands: `generate` (render videos + captions + paraphrases),
//! `verify` (re-check a manifest), `stats` (caption analytics), `probe`
//! (train/evaluate the motion-text probe), `preview` (animated GIF of one
//! video). Every numeric knob from the config file is also a flag; flags
//! take precedence over the config file, which takes precedence over
//! defaults. `KINETEXT_ENDPOINT_URL` and `KINETEXT_API_KEY` override the
//! paraphrase endpoint settings from the environment.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use kinetext::analytics::{noun_uniqueness, pos_profile, TagLexicon};
use kinetext::compositor::BackgroundMode;
use kinetext::config::{ApiShape, PipelineConfig};
use kinetext::error::{Error, Result};
use kinetext::pipeline::{self, frame_file_name, ClipSource, Manifest};
use kinetext::probe::{
    evaluate_retrieval, load_examples, masked_direction_accuracy, train_probe,
    ProbeHyperparams,
};
use kinetext::sprite::{SpriteSet, PROCEDURAL_NAMES};

#[derive(Parser)]
#[command(name = "kinetext", version, about = "Synthetic motion-caption dataset generator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)] // one instance lives for the whole run
enum Command {
    /// Generate videos with template captions and optional paraphrases
    Generate(GenerateArgs),
    /// Re-check an existing manifest against its frames and captions
    Verify(VerifyArgs),
    /// Caption statistics: part-of-speech profile and noun-set uniqueness
    Stats(StatsArgs),
    /// Train the motion-text probe on a manifest and report metrics
    Probe(ProbeArgs),
    /// Render one video's frames into an animated GIF
    Preview(PreviewArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory (frames + manifest.jsonl)
    #[arg(long)]
    out: PathBuf,
    /// Number of videos to generate
    #[arg(long)]
    count: usize,
    /// TOML config file; flags below override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Background mode: black, static_frame, or video
    #[arg(long, default_value = "black")]
    background: String,
    /// Directory of background clips (required for static_frame/video)
    #[arg(long)]
    clips: Option<PathBuf>,
    /// Directory of sprite images (default: built-in procedural set)
    #[arg(long)]
    sprites: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

/// Flag overrides for every config-file knob.
#[derive(Args)]
struct Overrides {
    // Generation geometry and sampling.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    frame_width: Option<u32>,
    #[arg(long)]
    frame_height: Option<u32>,
    #[arg(long)]
    num_frames: Option<usize>,
    #[arg(long)]
    num_keyframes: Option<usize>,
    #[arg(long)]
    min_obj_side: Option<u32>,
    #[arg(long)]
    max_obj_side: Option<u32>,
    #[arg(long)]
    delta_max: Option<f64>,
    #[arg(long)]
    theta_range: Option<f64>,
    // Caption thresholds.
    #[arg(long)]
    size_small_max: Option<f64>,
    #[arg(long)]
    size_big_min: Option<f64>,
    #[arg(long)]
    speed_slow_max: Option<f64>,
    #[arg(long)]
    speed_quick_min: Option<f64>,
    #[arg(long)]
    dist_little_max: Option<f64>,
    #[arg(long)]
    dist_lot_min: Option<f64>,
    #[arg(long)]
    rot_slight_max: Option<f64>,
    #[arg(long)]
    rot_signif_min: Option<f64>,
    #[arg(long)]
    diag_band_low: Option<f64>,
    #[arg(long)]
    diag_band_high: Option<f64>,
    // Run knobs.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    max_failure_rate: Option<f64>,
    // Paraphrase stage. Boolean overrides take explicit values
    // (e.g. --paraphrase true) so the config file can also enable them.
    #[arg(long)]
    paraphrase: Option<bool>,
    #[arg(long)]
    offline: Option<bool>,
    #[arg(long)]
    strict: Option<bool>,
    #[arg(long)]
    endpoint_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// API body shape: chat or completion
    #[arg(long)]
    api_shape: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    retry_max: Option<u32>,
    #[arg(long)]
    retry_base_ms: Option<u64>,
    #[arg(long)]
    concurrency: Option<usize>,
    /// Direction lexicon TOML for screening (default: built-in)
    #[arg(long)]
    lexicon_path: Option<String>,
}

impl Overrides {
    fn apply(&self, cfg: &mut PipelineConfig) -> Result<()> {
        macro_rules! set {
            ($($field:expr => $opt:expr),* $(,)?) => {
                $(if let Some(v) = $opt.clone() { $field = v; })*
            };
        }
        set! {
            cfg.gen.rng_seed => self.seed,
            cfg.gen.frame_width => self.frame_width,
            cfg.gen.frame_height => self.frame_height,
            cfg.gen.num_frames => self.num_frames,
            cfg.gen.num_keyframes => self.num_keyframes,
            cfg.gen.min_obj_side => self.min_obj_side,
            cfg.gen.max_obj_side => self.max_obj_side,
            cfg.gen.delta_max => self.delta_max,
            cfg.gen.theta_range => self.theta_range,
            cfg.thresholds.size_small_max => self.size_small_max,
            cfg.thresholds.size_big_min => self.size_big_min,
            cfg.thresholds.speed_slow_max => self.speed_slow_max,
            cfg.thresholds.speed_quick_min => self.speed_quick_min,
            cfg.thresholds.dist_little_max => self.dist_little_max,
            cfg.thresholds.dist_lot_min => self.dist_lot_min,
            cfg.thresholds.rot_slight_max => self.rot_slight_max,
            cfg.thresholds.rot_signif_min => self.rot_signif_min,
            cfg.thresholds.diag_band.0 => self.diag_band_low,
            cfg.thresholds.diag_band.1 => self.diag_band_high,
            cfg.run.workers => self.workers,
            cfg.run.max_failure_rate => self.max_failure_rate,
            cfg.paraphrase.enabled => self.paraphrase,
            cfg.paraphrase.offline => self.offline,
            cfg.paraphrase.strict => self.strict,
            cfg.paraphrase.endpoint_url => self.endpoint_url,
            cfg.paraphrase.model => self.model,
            cfg.paraphrase.temperature => self.temperature,
            cfg.paraphrase.max_tokens => self.max_tokens,
            cfg.paraphrase.retry_max => self.retry_max,
            cfg.paraphrase.retry_base_ms => self.retry_base_ms,
            cfg.paraphrase.concurrency => self.concurrency,
        }
        if let Some(shape) = &self.api_shape {
            cfg.paraphrase.api_shape = match shape.as_str() {
                "chat" => ApiShape::Chat,
                "completion" => ApiShape::Completion,
                other => {
                    return Err(Error::Config(format!(
                        "unknown api shape '{other}' (expected chat or completion)"
                    )))
                }
            };
        }
        if self.lexicon_path.is_some() {
            cfg.paraphrase.lexicon_path = self.lexicon_path.clone();
        }
        Ok(())
    }
}

#[derive(Args)]
struct VerifyArgs {
    /// Manifest to check
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    /// Manifest whose template captions to analyze
    #[arg(long, conflicts_with = "captions", required_unless_present = "captions")]
    manifest: Option<PathBuf>,
    /// Plain text file, one caption per line
    #[arg(long)]
    captions: Option<PathBuf>,
    /// Extra word-tag entries (TOML) merged over the built-in lexicon
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Emit the report as JSON instead of text
    #[arg(long)]
    json: bool,
    /// Write the report here as well as stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProbeArgs {
    /// Manifest to train on (frames must be present)
    #[arg(long)]
    manifest: PathBuf,
    /// Loss-curve CSV path (default: probe_losses.csv next to the manifest)
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    /// Write the metrics report here as well as stdout
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    text_embed_dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    mask_fraction: Option<f64>,
    #[arg(long)]
    tau_init: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PreviewArgs {
    /// Manifest the video belongs to
    #[arg(long)]
    manifest: PathBuf,
    /// Video id (e.g. 00003) or bare index
    #[arg(long)]
    video: String,
    /// Output GIF path (default: <video_id>.gif)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Playback speed in frames per second
    #[arg(long, default_value_t = 8)]
    fps: u32,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(args) => generate(args),
        Command::Verify(args) => verify(args),
        Command::Stats(args) => stats(args),
        Command::Probe(args) => probe(args),
        Command::Preview(args) => preview(args),
    }
}

fn generate(args: GenerateArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    cfg.paraphrase = cfg.paraphrase.clone().with_env_overrides();
    args.overrides.apply(&mut cfg)?;

    let background = BackgroundMode::from_str(&args.background)?;
    let sprites = match &args.sprites {
        Some(dir) => SpriteSet::load_dir(dir)?,
        None => SpriteSet::procedural(PROCEDURAL_NAMES.len()),
    };
    let clips = match &args.clips {
        Some(dir) => Some(ClipSource::load_dir(dir)?),
        None => None,
    };

    let manifest = pipeline::generate_dataset(
        &cfg,
        &sprites,
        background,
        clips.as_ref(),
        args.count,
        &args.out,
    )?;

    let failures = pipeline::load_failures(&args.out)?;
    println!(
        "wrote {} records to {} ({} failures)",
        manifest.records.len(),
        args.out.join("manifest.jsonl").display(),
        failures.len()
    );
    Ok(())
}

fn verify(args: VerifyArgs) -> Result<()> {
    let report = pipeline::verify_manifest(&args.manifest)?;
    println!("{}", report.render_text());
    if report.all_passed() {
        Ok(())
    } else {
        Err(Error::Asset(format!(
            "{} of {} records failed verification",
            report.total - report.passed,
            report.total
        )))
    }
}

fn stats(args: StatsArgs) -> Result<()> {
    let mut lexicon = TagLexicon::extended();
    if let Some(path) = &args.lexicon {
        lexicon.load_extensions(path)?;
    }

    let captions: Vec<String> = if let Some(path) = &args.manifest {
        let manifest = Manifest::load(path)?;
        for record in &manifest.records {
            lexicon.register_object(&record.motion_spec.object_name);
        }
        manifest.records.iter().map(|r| r.template_caption.clone()).collect()
    } else {
        let path = args.captions.as_ref().expect("clap enforces one input");
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect()
    };

    let profile = pos_profile(&captions, &lexicon)?;
    let uniqueness = noun_uniqueness(&captions, &lexicon)?;

    let report = if args.json {
        let value = serde_json::json!({
            "captions": profile.captions,
            "pos_profile": {
                "nouns": profile.nouns,
                "adjectives": profile.adjectives,
                "verbs": profile.verbs,
                "adverbs": profile.adverbs,
                "adpositions": profile.adpositions,
                "other": profile.other,
            },
            "noun_set_uniqueness": uniqueness,
        });
        serde_json::to_string_pretty(&value).expect("json report serializes")
    } else {
        format!(
            "captions analyzed: {}\n\
             average per caption:\n\
             \x20 nouns        {:>6.3}\n\
             \x20 adjectives   {:>6.3}\n\
             \x20 verbs        {:>6.3}\n\
             \x20 adverbs      {:>6.3}\n\
             \x20 adpositions  {:>6.3}\n\
             \x20 other        {:>6.3}\n\
             noun-set uniqueness: {:.4}",
            profile.captions,
            profile.nouns,
            profile.adjectives,
            profile.verbs,
            profile.adverbs,
            profile.adpositions,
            profile.other,
            uniqueness
        )
    };

    println!("{report}");
    if let Some(path) = &args.out {
        fs::write(path, format!("{report}\n")).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn probe(args: ProbeArgs) -> Result<()> {
    let mut hp = ProbeHyperparams::default();
    macro_rules! set {
        ($($field:ident),* $(,)?) => {
            $(if let Some(v) = args.$field { hp.$field = v; })*
        };
    }
    set!(
        embed_dim, hidden_dim, text_embed_dim, epochs, batch_size, learning_rate,
        clip_norm, mask_fraction, tau_init, seed
    );

    let examples = load_examples(&args.manifest)?;
    println!("training probe on {} video-caption pairs...", examples.len());
    let (model, metrics) = train_probe(&examples, &hp)?;

    let csv_path = args.loss_csv.unwrap_or_else(|| {
        args.manifest.parent().unwrap_or(Path::new(".")).join("probe_losses.csv")
    });
    let mut csv = String::from("epoch,total,contrastive,matching,mlm\n");
    for e in &metrics.epoch_losses {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            e.epoch, e.total, e.contrastive, e.matching, e.mlm
        ));
    }
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;

    let retrieval = evaluate_retrieval(&model, &examples);
    let sighted = masked_direction_accuracy(&model, &examples, false);
    let blind = masked_direction_accuracy(&model, &examples, true);

    let mut report = String::new();
    report.push_str(&format!(
        "probe metrics (in-sample, {} examples, vocabulary {} words)\n",
        examples.len(),
        model.vocab().len()
    ));
    if let (Some(first), Some(last)) = (metrics.first_loss(), metrics.last_loss()) {
        report.push_str(&format!(
            "loss: {first:.4} -> {last:.4} over {} epochs\n",
            metrics.epoch_losses.len()
        ));
    }
    report.push_str(&format!("temperature after training: {:.4}\n", model.tau()));
    report.push_str(&format!(
        "caption retrieval from video ({} candidates): recall@1 {:.4}, recall@5 {:.4}, recall@10 {:.4}\n",
        retrieval.candidates, retrieval.r1, retrieval.r5, retrieval.r10
    ));
    report.push_str(&format!(
        "masked direction-word recovery: video-conditioned {sighted:.4}, video-blind {blind:.4}\n"
    ));
    for warning in &metrics.warnings {
        report.push_str(&format!("warning: {warning}\n"));
    }
    report.push_str(&format!("loss curve written to {}", csv_path.display()));

    println!("{report}");
    if let Some(path) = &args.report {
        fs::write(path, format!("{report}\n")).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn preview(args: PreviewArgs) -> Result<()> {
    use image::codecs::gif::{GifEncoder, Repeat};
    use image::{Delay, Frame};

    if args.fps == 0 {
        return Err(Error::Config("fps must be >= 1".into()));
    }
    let manifest = Manifest::load(&args.manifest)?;
    let record = manifest
        .records
        .iter()
        .find(|r| r.video_id == args.video)
        .or_else(|| {
            args.video
                .parse::<usize>()
                .ok()
                .and_then(|idx| manifest.records.get(idx))
        })
        .ok_or_else(|| {
            Error::Argument(format!("video '{}' not found in the manifest", args.video))
        })?;

    let base = args.manifest.parent().unwrap_or(Path::new("."));
    let frames_dir = base.join(&record.frames_path);
    let out = args.out.unwrap_or_else(|| PathBuf::from(format!("{}.gif", record.video_id)));

    let file = File::create(&out).map_err(|e| Error::io(&out, e))?;
    let mut writer = BufWriter::new(file);
    {
        let mut encoder = GifEncoder::new_with_speed(&mut writer, 10);
        encoder
            .set_repeat(Repeat::Infinite)
            .map_err(|e| Error::Asset(format!("gif encoding failed: {e}")))?;
        let delay = Delay::from_numer_denom_ms(1000 / args.fps, 1);
        for i in 0..manifest.header.gen.num_frames {
            let path = frames_dir.join(frame_file_name(i));
            let img = image::open(&path)
                .map_err(|e| Error::Asset(format!("cannot read {}: {e}", path.display())))?
                .to_rgba8();
            encoder
                .encode_frame(Frame::from_parts(img, 0, 0, delay))
                .map_err(|e| Error::Asset(format!("gif encoding failed: {e}")))?;
        }
    }
    writer.flush().map_err(|e| Error::io(&out, e))?;

    println!(
        "wrote {} ({} frames at {} fps) — caption: {}",
        out.display(),
        manifest.header.gen.num_frames,
        args.fps,
        record.template_caption
    );
    Ok(())
}
