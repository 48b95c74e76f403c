use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crackscope::augment::expand_dataset;
use crackscope::classify::cnn::Shape;
use crackscope::classify::head::{calibrate_backbone, desk_backbone, extract_features};
use crackscope::classify::{
    activation_heatmap, load_cnn, mlp_train, overlay_heatmap, predict_dataset, train_head, write_cnn,
    AdtClassifier, ChannelAggregate, CnnGraph, CnnHeadClassifier, InputEncoding, MlpClassifier, MlpModel,
    PredictionsTable, TileClassifier, TrainConfig,
};
use crackscope::config::RunConfig;
use crackscope::crackstats::{series_stats, write_sequence, SequenceManifest, SeriesTable};
use crackscope::dataset::{self, DatasetManifest, Label, TileRef, TileResolver};
use crackscope::metrics::{confusion, report, roc};
use crackscope::micromech::{fit_constant_acw, fit_trilinear, theory_outputs};
use crackscope::raster::{image_read, image_write, tile};
use crackscope::synthgen::{gen_sequence, gen_tiles, SpecimenSpec, TileSpec};
use crackscope::{ErrorClass, Seed};

#[derive(Parser)]
#[command(name = "crackscope", version, about = "Crack detection and crack-pattern statistics for SHCC specimen images")]
struct Cli {
    /// key=value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key (repeatable), e.g. --set trace.k=1.5
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Sliding-window / tile size in pixels
    #[arg(long, global = true)]
    window: Option<usize>,
    #[arg(long, global = true, value_enum)]
    classifier: Option<ClassifierKind>,
    /// Output file or directory; stdout when omitted and the command allows it
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread cap
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ClassifierKind {
    Adt,
    SfnnBnw,
    SfnnRgb,
    CnnHead,
}

#[derive(Subcommand)]
enum Command {
    /// Cut an image into window-sized tiles
    Tile { image: PathBuf },
    /// Label the tiles of an image and emit a manifest
    Annotate {
        image: PathBuf,
        /// Row-major P/N labels, inline (e.g. PNNP) or a file of labels
        #[arg(long)]
        labels: String,
    },
    /// Add modified copies of eligible tiles
    Augment {
        manifest: PathBuf,
        #[arg(long)]
        n_p: Option<usize>,
        #[arg(long)]
        n_n: Option<usize>,
        /// File listing eligible record indices; all records when omitted
        #[arg(long)]
        center: Option<PathBuf>,
    },
    /// Stratified train/val/test split
    Split { manifest: PathBuf },
    /// Train a two-hidden-layer perceptron on raw pixels
    TrainSfnn(TrainArgs),
    /// Train a perceptron head on frozen backbone features
    TrainHead {
        #[command(flatten)]
        data: TrainArgs,
        /// Directory with backbone.json and backbone.csw; a seeded desk backbone when omitted
        #[arg(long)]
        backbone: Option<PathBuf>,
    },
    /// Classify every tile of a manifest
    Predict {
        manifest: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Confusion-matrix metrics for a predictions table
    Eval {
        manifest: PathBuf,
        predictions: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// ROC curve and AUC for a predictions table
    Roc { manifest: PathBuf, predictions: PathBuf },
    /// Crack number, width and density for a frame sequence
    Stats {
        /// Directory holding sequence.json and frames
        sequence: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Fit the trilinear crack-density and constant crack-width models
    Fit { series: PathBuf },
    /// Micromechanical crack spacing and maximum crack density
    Theory,
    /// Generate synthetic data
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Activation heatmap of a tile through a CNN backbone
    Heatmap {
        tile: PathBuf,
        /// Directory with backbone.json and backbone.csw
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "mean")]
        aggregate: String,
        #[arg(long, default_value_t = 0.5)]
        opacity: f64,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: PathBuf,
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Labeled crack / plain tiles with a manifest
    Tiles,
    /// A strain-stepped frame sequence with ground truth
    Sequence,
    /// An uncalibrated desk backbone
    Backbone {
        #[arg(long, default_value_t = 1)]
        channels: usize,
    },
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    match err.downcast_ref::<crackscope::Error>().map(|e| e.class()) {
        Some(ErrorClass::Usage) => 1,
        Some(ErrorClass::Numeric) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::from(exit_code(&e))
        }
    }
}

struct Ctx {
    cfg: RunConfig,
    out: Option<PathBuf>,
    classifier: ClassifierKind,
}

impl Ctx {
    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(p) => write_file(p, text.as_bytes()),
            None => {
                std::io::stdout().write_all(text.as_bytes())?;
                Ok(())
            }
        }
    }

    fn out_dir(&self) -> Result<&Path> {
        let dir = self.out.as_deref().ok_or_else(|| usage("this command needs --out <dir>"))?;
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::read(p)?,
        None => RunConfig::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = cli.seed {
        cfg.set("seed", s)?;
    }
    if let Some(w) = cli.window {
        cfg.set("window", w)?;
    }
    if let Some(j) = cli.jobs.or(cfg.get("jobs")?) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .map_err(|e| anyhow!("thread pool: {e}"))?;
    }
    let classifier = match (cli.classifier, cfg.raw("classifier")) {
        (Some(c), _) => c,
        (None, Some(s)) => ClassifierKind::from_str(s, true).map_err(|_| usage(format!("unknown classifier {s:?}")))?,
        (None, None) => ClassifierKind::Adt,
    };
    let ctx = Ctx {
        cfg,
        out: cli.out,
        classifier,
    };

    match cli.command {
        Command::Tile { image } => cmd_tile(&ctx, &image),
        Command::Annotate { image, labels } => cmd_annotate(&ctx, &image, &labels),
        Command::Augment {
            manifest,
            n_p,
            n_n,
            center,
        } => cmd_augment(&ctx, &manifest, n_p, n_n, center.as_deref()),
        Command::Split { manifest } => cmd_split(&ctx, &manifest),
        Command::TrainSfnn(a) => cmd_train_sfnn(&ctx, &a),
        Command::TrainHead { data, backbone } => cmd_train_head(&ctx, &data, backbone.as_deref()),
        Command::Predict { manifest, model } => cmd_predict(&ctx, &manifest, model.as_deref()),
        Command::Eval {
            manifest,
            predictions,
            json,
        } => cmd_eval(&ctx, &manifest, &predictions, json),
        Command::Roc { manifest, predictions } => cmd_roc(&ctx, &manifest, &predictions),
        Command::Stats { sequence, model } => cmd_stats(&ctx, &sequence, model.as_deref()),
        Command::Fit { series } => cmd_fit(&ctx, &series),
        Command::Theory => ctx.emit(&theory_outputs(&ctx.cfg.micromech()?)?.to_text()),
        Command::Synth(s) => cmd_synth(&ctx, s),
        Command::Heatmap {
            tile,
            model,
            aggregate,
            opacity,
        } => cmd_heatmap(&ctx, &tile, &model, &aggregate, opacity),
    }
}

/// Read a manifest with its tile paths made absolute, so derived manifests
/// written elsewhere still resolve.
fn read_manifest(path: &Path) -> Result<(DatasetManifest, TileResolver)> {
    let mut m = DatasetManifest::read(path)?;
    let base = std::path::absolute(path)?
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    for r in &mut m.records {
        match &mut r.tile {
            TileRef::File(p) | TileRef::Region { image: p, .. } if p.is_relative() => *p = base.join(&*p),
            _ => {}
        }
    }
    Ok((m, TileResolver::new()))
}

fn cmd_tile(ctx: &Ctx, image: &Path) -> Result<()> {
    let raster = image_read(image)?;
    let grid = tile(&raster, ctx.cfg.window()?)?;
    let dir = ctx.out_dir()?;
    let ext = if raster.channels() == 1 { "pgm" } else { "ppm" };
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            image_write(&grid.extract(&raster, r, c)?, dir.join(format!("tile_r{r:03}_c{c:03}.{ext}")))?;
        }
    }
    println!("{} rows x {} cols", grid.rows, grid.cols);
    Ok(())
}

fn parse_labels(spec: &str) -> Result<Vec<Label>> {
    let text = if Path::new(spec).is_file() {
        std::fs::read_to_string(spec)?
    } else {
        spec.to_string()
    };
    text.chars()
        .filter(|c| !c.is_whitespace() && *c != ',')
        .map(|c| Ok(c.to_string().parse::<Label>()?))
        .collect()
}

fn cmd_annotate(ctx: &Ctx, image: &Path, labels: &str) -> Result<()> {
    let raster = image_read(image)?;
    let window = ctx.cfg.window()?;
    let grid = tile(&raster, window)?;
    let tiles = (0..grid.rows)
        .flat_map(|row| {
            (0..grid.cols).map(move |col| TileRef::Region {
                image: image.to_path_buf(),
                row,
                col,
            })
        })
        .collect();
    let source = image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let m = dataset::annotate(window, tiles, &parse_labels(labels)?, &source)?;
    ctx.emit(&m.to_text()?)
}

fn cmd_augment(ctx: &Ctx, path: &Path, n_p: Option<usize>, n_n: Option<usize>, center: Option<&Path>) -> Result<()> {
    let (m, resolver) = read_manifest(path)?;
    let n_p = n_p.or(ctx.cfg.get("augment.n_p")?).unwrap_or(0);
    let n_n = n_n.or(ctx.cfg.get("augment.n_n")?).unwrap_or(0);
    let eligible: Option<Vec<usize>> = center
        .map(|p| -> Result<Vec<usize>> {
            std::fs::read_to_string(p)?
                .split_whitespace()
                .map(|t| t.parse().with_context(|| format!("bad record index {t:?}")))
                .collect()
        })
        .transpose()?;
    let pred = |i: usize, _: &dataset::SegmentRecord| eligible.as_ref().is_none_or(|e| e.contains(&i));
    let mut out = expand_dataset(&m, n_p, n_n, pred, &resolver, ctx.cfg.seed()?)?;
    let target = std::path::absolute(ctx.out.as_deref().ok_or_else(|| usage("augment needs --out <manifest>"))?)?;
    let stem = target.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "augmented".into());
    let tiles_dir = target.with_file_name(format!("{stem}_tiles"));
    out.materialize(&tiles_dir)?;
    out.write(&target)?;
    Ok(())
}

fn cmd_split(ctx: &Ctx, path: &Path) -> Result<()> {
    let (m, _) = read_manifest(path)?;
    let s = dataset::split(&m, &ctx.cfg.split_spec()?)?;
    let dir = ctx.out_dir()?;
    s.train.write(dir.join("train.manifest"))?;
    s.val.write(dir.join("val.manifest"))?;
    s.test.write(dir.join("test.manifest"))?;
    println!("train {} val {} test {}", s.train.len(), s.val.len(), s.test.len());
    Ok(())
}

fn first_tile_channels(m: &DatasetManifest, r: &TileResolver) -> Result<usize> {
    if m.is_empty() {
        bail!(crackscope::Error::Dataset("empty manifest".into()));
    }
    Ok(r.load_record(m, 0)?.channels())
}

fn cmd_train_sfnn(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let (train, resolver) = read_manifest(&a.train)?;
    let (val, vres) = read_manifest(&a.val)?;
    let val = into_memory(val, &vres)?;
    let enc = match ctx.classifier {
        ClassifierKind::SfnnRgb => InputEncoding::Rgb,
        ClassifierKind::SfnnBnw | ClassifierKind::Adt => InputEncoding::Gray,
        ClassifierKind::CnnHead => return Err(usage("train-sfnn trains sfnn-bnw or sfnn-rgb")),
    };
    let template = MlpModel::sfnn(train.window * train.window * enc.channels(), enc)?;
    let cfg = ctx.cfg.train_config()?;
    let (model, trace) = mlp_train(&train, &val, &cfg, &template, &resolver)?;
    let out = ctx.out.as_deref().ok_or_else(|| usage("train-sfnn needs --out <model.csm>"))?;
    write_file(out, &model.to_bytes())?;
    write_file(&out.with_extension("trace.csv"), trace.to_csv().as_bytes())?;
    if let Some(a) = trace.val_accuracy.iter().cloned().reduce(f64::max) {
        println!("best val accuracy {a}");
    }
    Ok(())
}

/// Load every tile of `m` so it no longer depends on its resolver.
fn into_memory(mut m: DatasetManifest, resolver: &TileResolver) -> Result<DatasetManifest> {
    for i in 0..m.len() {
        let r = resolver.load_record(&m, i)?;
        m.records[i].tile = TileRef::Memory(Arc::new(r));
    }
    Ok(m)
}

fn cmd_train_head(ctx: &Ctx, a: &TrainArgs, backbone: Option<&Path>) -> Result<()> {
    let (train, tres) = read_manifest(&a.train)?;
    let (val, vres) = read_manifest(&a.val)?;
    let mut graph = match backbone {
        Some(dir) => load_backbone(dir)?,
        None => {
            let c = first_tile_channels(&train, &tres)?;
            desk_backbone(Shape::new(c, train.window, train.window), ctx.cfg.seed()?.derive(7))?
        }
    };
    let tiles = (0..train.len()).map(|i| tres.load_record(&train, i)).collect::<crackscope::Result<Vec<_>>>()?;
    if backbone.is_none() {
        calibrate_backbone(&mut graph, &tiles)?;
    }
    let ftr = extract_features(&graph, &train, &tres)?;
    let fva = extract_features(&graph, &val, &vres)?;
    let cfg = ctx.cfg.train_config_from(TrainConfig::for_features())?;
    let (head, trace) = train_head(&ftr, Some(&fva), &cfg)?;
    let dir = ctx.out_dir()?;
    CnnHeadClassifier::new(graph, head)?.save(dir)?;
    write_file(&dir.join("trace.csv"), trace.to_csv().as_bytes())?;
    if let Some(a) = trace.val_accuracy.iter().cloned().reduce(f64::max) {
        println!("best val accuracy {a}");
    }
    Ok(())
}

fn load_backbone(dir: &Path) -> Result<CnnGraph> {
    Ok(load_cnn(dir.join("backbone.csw"), dir.join("backbone.json"))?)
}

fn load_classifier(ctx: &Ctx, model: Option<&Path>) -> Result<Box<dyn TileClassifier>> {
    let need = || model.ok_or_else(|| usage("this classifier needs --model"));
    Ok(match ctx.classifier {
        ClassifierKind::Adt => Box::new(AdtClassifier {
            min_dark_pixels: ctx.cfg.get_or("adt.min_dark_pixels", AdtClassifier::default().min_dark_pixels)?,
        }),
        ClassifierKind::SfnnBnw | ClassifierKind::SfnnRgb => {
            let mut c = MlpClassifier::new(MlpModel::load(need()?)?);
            c.pixel_scale = ctx.cfg.get_or("train.pixel_scale", c.pixel_scale)?;
            Box::new(c)
        }
        ClassifierKind::CnnHead => Box::new(CnnHeadClassifier::load(need()?)?),
    })
}

fn cmd_predict(ctx: &Ctx, path: &Path, model: Option<&Path>) -> Result<()> {
    let (m, resolver) = read_manifest(path)?;
    let clf = load_classifier(ctx, model)?;
    ctx.emit(&predict_dataset(clf.as_ref(), &m, &resolver)?.to_tsv())
}

fn truth_and_predictions(manifest: &Path, predictions: &Path) -> Result<(Vec<Label>, PredictionsTable)> {
    let (m, _) = read_manifest(manifest)?;
    let p = PredictionsTable::read(predictions)?;
    let truth = p
        .rows
        .iter()
        .map(|r| {
            m.records
                .get(r.record_index)
                .map(|rec| rec.label)
                .ok_or_else(|| anyhow!(crackscope::Error::Dataset(format!("record {} not in manifest", r.record_index))))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((truth, p))
}

fn cmd_eval(ctx: &Ctx, manifest: &Path, predictions: &Path, json: bool) -> Result<()> {
    let (truth, p) = truth_and_predictions(manifest, predictions)?;
    let r = report(&confusion(&p.labels(), &truth)?);
    if json {
        ctx.emit(&(serde_json::to_string_pretty(&r)? + "\n"))
    } else {
        ctx.emit(&r.to_text())
    }
}

fn cmd_roc(ctx: &Ctx, manifest: &Path, predictions: &Path) -> Result<()> {
    let (truth, p) = truth_and_predictions(manifest, predictions)?;
    ctx.emit(&roc(&p.scores(), &truth)?.to_csv())
}

fn cmd_stats(ctx: &Ctx, dir: &Path, model: Option<&Path>) -> Result<()> {
    let seq = SequenceManifest::read(dir)?;
    let frames = seq.load_frames(dir)?;
    let clf = load_classifier(ctx, model)?;
    let table = series_stats(&frames, &clf.as_ref(), &ctx.cfg.stats_params()?)?;
    ctx.emit(&table.to_csv())?;
    if let Some(out) = &ctx.out {
        write_file(&out.with_extension("patterns.json"), table.pattern_json()?.as_bytes())?;
    }
    Ok(())
}

fn cmd_fit(ctx: &Ctx, series: &Path) -> Result<()> {
    let table = SeriesTable::read_csv(series)?;
    let cd: Vec<(f64, f64)> = table.rows.iter().map(|r| (r.strain, r.cd_per_m)).collect();
    let mut doc = serde_json::json!({ "trilinear": fit_trilinear(&cd)? });
    if let Some(window) = ctx.cfg.acw_window()? {
        let acw: Vec<(f64, f64)> = table.rows.iter().filter_map(|r| r.acw_um.map(|a| (r.strain, a))).collect();
        doc["constant_acw"] = serde_json::to_value(fit_constant_acw(&acw, window)?)?;
    }
    ctx.emit(&(serde_json::to_string_pretty(&doc)? + "\n"))
}

fn cmd_synth(ctx: &Ctx, cmd: SynthCommand) -> Result<()> {
    let cfg = &ctx.cfg;
    let dir = ctx.out_dir()?;
    match cmd {
        SynthCommand::Tiles => {
            let d = TileSpec::default();
            let spec = TileSpec {
                size: cfg.get_or("synth.tile_size", d.size)?,
                background_noise_std: cfg.get_or("synth.noise_std", d.background_noise_std)?,
                speckle_density: cfg.get_or("synth.speckle_density", d.speckle_density)?,
                ..d
            };
            let count = cfg.get_or("synth.count_per_class", 1000usize)?;
            let (mut m, truth) = gen_tiles(&spec, count, cfg.seed()?)?;
            m.materialize(dir.join("tiles"))?;
            for r in &mut m.records {
                if let TileRef::File(p) = &r.tile {
                    r.tile = TileRef::File(p.strip_prefix(dir).unwrap_or(p).to_path_buf());
                }
            }
            m.write(dir.join("tiles.manifest"))?;
            write_file(&dir.join("truth.json"), serde_json::to_string(&truth)?.as_bytes())?;
        }
        SynthCommand::Sequence => {
            let d = SpecimenSpec::default();
            let spec = SpecimenSpec {
                window: cfg.get_or("window", d.window)?,
                background_noise_std: cfg.get_or("synth.noise_std", d.background_noise_std)?,
                speckle_density: cfg.get_or("synth.speckle_density", d.speckle_density)?,
                mottling: cfg.get_or("synth.mottling", d.mottling)?,
                seed: cfg.get::<u64>("seed")?.map(Seed).unwrap_or(d.seed),
                ..d
            };
            let seq = gen_sequence(&spec)?;
            write_sequence(dir, &seq.frames, &seq.meta)?;
            write_file(&dir.join("truth.json"), seq.truth.to_json()?.as_bytes())?;
        }
        SynthCommand::Backbone { channels } => {
            let w = cfg.window()?;
            let g = desk_backbone(Shape::new(channels, w, w), cfg.seed()?.derive(7))?;
            write_cnn(&g, dir.join("backbone.csw"), dir.join("backbone.json"))?;
        }
    }
    Ok(())
}

fn cmd_heatmap(ctx: &Ctx, tile: &Path, model: &Path, aggregate: &str, opacity: f64) -> Result<()> {
    let agg = match aggregate {
        "mean" => ChannelAggregate::Mean,
        "max" => ChannelAggregate::Max,
        other => return Err(usage(format!("--aggregate expects mean|max, got {other:?}"))),
    };
    let graph = load_backbone(model)?;
    let raster = image_read(tile)?;
    let heat = activation_heatmap(&graph, &raster, agg)?;
    let dir = ctx.out_dir()?;
    image_write(&heat, dir.join("heatmap.pgm"))?;
    image_write(&overlay_heatmap(&raster, &heat, opacity)?, dir.join("overlay.ppm"))?;
    Ok(())
}
