//! Command-line surface: dataset generation, texture calibration, the
//! detection pipeline, fusion, and evaluation.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use spy::config::PipelineConfig;
use spy::domain::{BoundingBox, ComponentClass, Detection, NormalizedBox, ShapeClass};
use spy::eval::{evaluate, EvalClass, EvalFrame};
use spy::fusion::fuse;
use spy::labelfile::{
    pair_stems, read_detections, read_labels, stems_with_extension, write_detections,
    DetectionRecord,
};
use spy::preprocess;
use spy::raster::{ColorSpace, ImageBuffer};
use spy::scorers::{calibrate_texture_lut, BinRule};
use spy::shapedetect::{batch_sd_overlap, OverlapInput};
use spy::shapegen::{
    ensure_dataset_dirs, generate_frame, write_frame, AugmentConfig, DatasetManifest, GenConfig,
};
use spy::syc::Classifier;

#[derive(Parser)]
#[command(
    name = "spy",
    version,
    about = "Context-based spacecraft component detection pipeline"
)]
pub struct Cli {
    /// Pipeline config file (TOML); defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Worker threads for batch stages (default: one per core).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    /// Seed for generation commands.
    #[arg(long, global = true, value_name = "S")]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic primitive-shape dataset.
    Shapegen(ShapegenArgs),
    /// Calibrate the texture lookup table from component-labeled images.
    CalibrateTexture(CalibrateArgs),
    /// Detect and classify components over a directory of images.
    Run(RunArgs),
    /// Fuse detections from an external detector with this pipeline's.
    Fuse(FuseArgs),
    /// Evaluate detection files against ground-truth labels.
    Eval(EvalArgs),
}

#[derive(Args)]
pub struct ShapegenArgs {
    /// Output dataset directory (images/, labels/, manifest.json).
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Total number of frames; single-shape frames cycle through the four
    /// shape classes.
    #[arg(long, value_name = "N")]
    pub count: u64,
    /// Square frame edge in pixels.
    #[arg(long, default_value_t = 640, value_name = "PX")]
    pub frame_size: u32,
    /// Draw 2-6 shapes per frame instead of one.
    #[arg(long)]
    pub collage: bool,
    /// Apply rotation, shear, blur, and noise augmentation.
    #[arg(long)]
    pub augment: bool,
    /// Minimum |fill - background| intensity separation.
    #[arg(long, default_value_t = 30, value_name = "LEVELS")]
    pub contrast_margin: u8,
    /// Largest IoU allowed between collage boxes.
    #[arg(long, default_value_t = 0.0, value_name = "IOU")]
    pub max_iou: f64,
}

#[derive(Args)]
pub struct CalibrateArgs {
    /// Directory of PNG images.
    #[arg(long, value_name = "DIR")]
    pub images: PathBuf,
    /// Directory of component label files (same stems as the images).
    #[arg(long, value_name = "DIR")]
    pub labels: PathBuf,
    /// Where to write the calibrated table (JSON).
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Histogram binning rule.
    #[arg(long, value_enum, default_value_t = BinRuleArg::Count)]
    pub bin_rule: BinRuleArg,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum BinRuleArg {
    /// Freedman-Diaconis read as a bin count.
    Count,
    /// Freedman-Diaconis read as a bin width.
    Width,
}

impl From<BinRuleArg> for BinRule {
    fn from(v: BinRuleArg) -> BinRule {
        match v {
            BinRuleArg::Count => BinRule::Count,
            BinRuleArg::Width => BinRule::Width,
        }
    }
}

#[derive(Args)]
pub struct RunArgs {
    /// Directory of PNG images to process.
    #[arg(long, value_name = "DIR")]
    pub images: PathBuf,
    /// Output directory for component detection files.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Also write PNGs with the classified boxes drawn.
    #[arg(long, value_name = "DIR")]
    pub overlay: Option<PathBuf>,
}

#[derive(Args)]
pub struct FuseArgs {
    /// Detection files from the external (data-driven) detector.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Detection files from this pipeline.
    #[arg(long, value_name = "DIR")]
    pub context: PathBuf,
    /// Output directory for fused detection files.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Frame width the normalized boxes refer to.
    #[arg(long, default_value_t = 640, value_name = "PX")]
    pub width: u32,
    /// Frame height the normalized boxes refer to.
    #[arg(long, default_value_t = 640, value_name = "PX")]
    pub height: u32,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Detection files to score.
    #[arg(long, value_name = "DIR")]
    pub dets: PathBuf,
    /// Ground-truth label files.
    #[arg(long, value_name = "DIR")]
    pub labels: PathBuf,
    /// Image directory for per-frame dimensions; otherwise --frame-size
    /// applies to every frame.
    #[arg(long, value_name = "DIR")]
    pub images: Option<PathBuf>,
    /// Square frame edge assumed when --images is not given.
    #[arg(long, default_value_t = 640, value_name = "PX")]
    pub frame_size: u32,
    /// Which class set the files use.
    #[arg(long, value_enum, default_value_t = ClassSet::Component)]
    pub classes: ClassSet,
    /// IoU threshold for a true positive.
    #[arg(long, default_value_t = 0.5, value_name = "IOU")]
    pub iou_threshold: f64,
    /// Shape detection files; adds the shape-detector overlap summary.
    #[arg(long, value_name = "DIR")]
    pub shape_dets: Option<PathBuf>,
    /// Also write the report as JSON.
    #[arg(long, value_name = "PATH")]
    pub json: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ClassSet {
    /// antenna, body, solar, thruster (misclassifications also reported
    /// with body excluded).
    Component,
    /// circle, rectangle, triangle, ring.
    Shape,
}

pub fn execute(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .context("building worker pool")?;
    let config = cli.config;
    let seed = cli.seed;
    pool.install(|| match cli.command {
        Command::Shapegen(args) => cmd_shapegen(args, seed),
        Command::CalibrateTexture(args) => cmd_calibrate(args),
        Command::Run(args) => cmd_run(args, config.as_deref()),
        Command::Fuse(args) => cmd_fuse(args, config.as_deref()),
        Command::Eval(args) => cmd_eval(args),
    })
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => Ok(PipelineConfig::load(p)?),
        None => Ok(PipelineConfig::default()),
    }
}

fn cmd_shapegen(args: ShapegenArgs, seed: Option<u64>) -> Result<()> {
    let cfg = GenConfig {
        frame_size: args.frame_size,
        frames: args.count,
        collage: args.collage,
        max_collage_iou: args.max_iou,
        contrast_margin: args.contrast_margin,
        seed: seed.unwrap_or(0),
        augment: args.augment.then(AugmentConfig::default),
        ..GenConfig::default()
    };
    cfg.validate()?;
    ensure_dataset_dirs(&args.out)?;

    let mut manifest = DatasetManifest::new(&cfg);
    // Frames carry their own RNG stream, so generation parallelizes freely;
    // chunking keeps memory flat on large runs.
    let indices: Vec<u64> = (0..args.count).collect();
    for chunk in indices.chunks(64) {
        let frames = chunk
            .par_iter()
            .map(|&i| Ok((i, generate_frame(&cfg, i)?)))
            .collect::<spy::Result<Vec<_>>>()?;
        for (i, frame) in &frames {
            write_frame(&args.out, *i, frame)?;
            manifest.tally(&frame.annotations);
        }
    }
    manifest.save_json(&args.out.join("manifest.json"))?;

    let summary: Vec<String> = manifest
        .boxes_per_class
        .iter()
        .map(|(name, n)| format!("{name} {n}"))
        .collect();
    println!(
        "wrote {} frames to {} ({})",
        args.count,
        args.out.display(),
        summary.join(", ")
    );
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<()> {
    let pairs = pair_stems(&args.images, "png", &args.labels, "txt")?;
    if pairs.is_empty() {
        bail!(
            "no image/label pairs under {} and {}",
            args.images.display(),
            args.labels.display()
        );
    }
    let per_image: Vec<Vec<(ImageBuffer, ComponentClass)>> = pairs
        .par_iter()
        .map(|(stem, img_path, lbl_path)| {
            let img = ImageBuffer::load_png(img_path)?;
            let mut crops = Vec::new();
            for nbox in read_labels(lbl_path)? {
                let class = ComponentClass::from_class_id(nbox.class_id).ok_or_else(|| {
                    spy::Error::MalformedAnnotation(format!(
                        "{stem}: class id {} is not a component class",
                        nbox.class_id
                    ))
                })?;
                let bbox = nbox.to_pixel(img.width(), img.height())?;
                let gray = match img.color_space() {
                    ColorSpace::Grayscale => img.crop(&bbox)?,
                    _ => img.crop(&bbox)?.convert(ColorSpace::Grayscale)?,
                };
                crops.push((gray, class));
            }
            Ok(crops)
        })
        .collect::<spy::Result<_>>()?;

    let samples: Vec<(ImageBuffer, ComponentClass)> = per_image.into_iter().flatten().collect();
    let mut counts = [0u32; 4];
    for (_, class) in &samples {
        if let Some(i) = ComponentClass::TEXTURED.iter().position(|c| c == class) {
            counts[i] += 1;
        }
    }
    let lut = calibrate_texture_lut(&samples, args.bin_rule.into())?;
    lut.save_json(&args.out)?;
    let summary: Vec<String> = ComponentClass::TEXTURED
        .iter()
        .zip(counts)
        .map(|(c, n)| format!("{c} {n}"))
        .collect();
    println!(
        "calibrated texture table from {} crops ({}) -> {}",
        samples.len(),
        summary.join(", "),
        args.out.display()
    );
    Ok(())
}

/// Per-class overlay colors (RGB).
fn class_color(class: ComponentClass) -> [u8; 3] {
    match class {
        ComponentClass::Antenna => [0, 255, 255],
        ComponentClass::Body => [255, 255, 0],
        ComponentClass::Solar => [0, 64, 255],
        ComponentClass::Thruster => [255, 128, 0],
        ComponentClass::WhiteRadiator => [255, 255, 255],
        ComponentClass::Unknown => [255, 0, 0],
    }
}

fn draw_box(img: &mut ImageBuffer, bbox: &BoundingBox, color: [u8; 3]) {
    let (w, h) = (img.width(), img.height());
    let x1 = bbox.x_max().min(w);
    let y1 = bbox.y_max().min(h);
    for t in 0..2u32 {
        for x in bbox.x_min()..x1 {
            if bbox.y_min() + t < h {
                img.set_pixel(x, bbox.y_min() + t, &color);
            }
            if y1 > t + 1 {
                img.set_pixel(x, y1 - 1 - t, &color);
            }
        }
        for y in bbox.y_min()..y1 {
            if bbox.x_min() + t < w {
                img.set_pixel(bbox.x_min() + t, y, &color);
            }
            if x1 > t + 1 {
                img.set_pixel(x1 - 1 - t, y, &color);
            }
        }
    }
}

fn process_image(
    stem: &str,
    path: &Path,
    cfg: &PipelineConfig,
    provider: &(dyn spy::shapedetect::ShapeDetectionProvider + Send + Sync),
    classifier: &Classifier<'_>,
    args: &RunArgs,
) -> Result<usize> {
    let img = ImageBuffer::load_png(path)?;
    let (roi, processed) = preprocess::apply(&img, &cfg.preprocess)?;
    let shape_dets = provider.detect(stem, &processed)?;
    let components = classifier.classify_detections(&processed, &shape_dets)?;

    // Report boxes in original frame coordinates.
    let (dx, dy) = roi.map_or((0, 0), |b| (b.x_min(), b.y_min()));
    let mut records = Vec::with_capacity(components.len());
    let mut placed = Vec::with_capacity(components.len());
    for d in &components {
        let bbox = BoundingBox::new(
            d.bbox.x_min() + dx,
            d.bbox.y_min() + dy,
            d.bbox.x_max() + dx,
            d.bbox.y_max() + dy,
        )
        .expect("shifting preserves box validity");
        records.push(DetectionRecord {
            nbox: NormalizedBox::from_pixel(&bbox, img.width(), img.height(), d.label.class_id()),
            confidence: d.confidence,
        });
        placed.push((bbox, d.label));
    }
    write_detections(&args.out.join(format!("{stem}.txt")), &records)?;

    if let Some(overlay_dir) = &args.overlay {
        let mut canvas = match img.color_space() {
            ColorSpace::Grayscale => img.gray_to_rgb()?,
            ColorSpace::Rgb => img,
            _ => img.convert(ColorSpace::Rgb)?,
        };
        for (bbox, label) in &placed {
            draw_box(&mut canvas, bbox, class_color(*label));
        }
        canvas.save_png(&overlay_dir.join(format!("{stem}.png")))?;
    }
    Ok(records.len())
}

fn cmd_run(args: RunArgs, config: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    // Fail fast on anything the pipeline needs before touching images.
    let lut = cfg.load_lut()?;
    let provider = cfg.build_provider()?;
    let classifier = Classifier::new(&cfg.colors, &lut, cfg.syc.clone())?;

    let stems = stems_with_extension(&args.images, "png")?;
    if stems.is_empty() {
        eprintln!("warning: no PNG images under {}", args.images.display());
        return Ok(());
    }
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    if let Some(dir) = &args.overlay {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }

    let results: Vec<(String, Result<usize>)> = stems
        .par_iter()
        .map(|stem| {
            let path = args.images.join(format!("{stem}.png"));
            let r = process_image(stem, &path, &cfg, provider.as_ref(), &classifier, &args);
            (stem.clone(), r)
        })
        .collect();

    let mut detections = 0usize;
    let mut failures = 0usize;
    for (stem, result) in &results {
        match result {
            Ok(n) => detections += n,
            Err(e) => {
                failures += 1;
                eprintln!("{stem}: {e:#}");
            }
        }
    }
    println!(
        "processed {} images, wrote {} detections to {}",
        results.len() - failures,
        detections,
        args.out.display()
    );
    if failures > 0 {
        bail!("{failures} of {} images failed", results.len());
    }
    Ok(())
}

fn component_detections(
    path: &Path,
    width: u32,
    height: u32,
) -> Result<Vec<Detection<ComponentClass>>> {
    read_detections(path)?
        .iter()
        .map(|r| {
            let class = ComponentClass::from_class_id(r.nbox.class_id).ok_or_else(|| {
                spy::Error::MalformedAnnotation(format!(
                    "{}: class id {} is not a component class",
                    path.display(),
                    r.nbox.class_id
                ))
            })?;
            Ok(Detection::new(
                r.nbox.to_pixel(width, height)?,
                class,
                r.confidence,
            )?)
        })
        .collect()
}

fn cmd_fuse(args: FuseArgs, config: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let pairs = pair_stems(&args.data, "txt", &args.context, "txt")?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let counts: Vec<usize> = pairs
        .par_iter()
        .map(|(stem, data_path, context_path)| -> Result<usize> {
            let data = component_detections(data_path, args.width, args.height)?;
            let context = component_detections(context_path, args.width, args.height)?;
            let fused = fuse(&data, &context, &cfg.fusion)?;
            let records: Vec<DetectionRecord> = fused
                .iter()
                .map(|d| DetectionRecord {
                    nbox: NormalizedBox::from_pixel(
                        &d.bbox,
                        args.width,
                        args.height,
                        d.label.class_id(),
                    ),
                    confidence: d.confidence,
                })
                .collect();
            write_detections(&args.out.join(format!("{stem}.txt")), &records)?;
            Ok(records.len())
        })
        .collect::<Result<_>>()?;

    println!(
        "fused {} frames ({} boxes) into {}",
        pairs.len(),
        counts.iter().sum::<usize>(),
        args.out.display()
    );
    Ok(())
}

fn frame_dims(images: Option<&Path>, stem: &str, fallback: u32) -> Result<(u32, u32)> {
    match images {
        Some(dir) => {
            let img = ImageBuffer::load_png(&dir.join(format!("{stem}.png")))?;
            Ok((img.width(), img.height()))
        }
        None => Ok((fallback, fallback)),
    }
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let pairs = pair_stems(&args.labels, "txt", &args.dets, "txt")?;
    let frames: Vec<EvalFrame> = pairs
        .par_iter()
        .map(|(stem, label_path, det_path)| -> Result<EvalFrame> {
            let (w, h) = frame_dims(args.images.as_deref(), stem, args.frame_size)?;
            let gts = read_labels(label_path)?
                .iter()
                .map(|b| Ok((b.class_id, b.to_pixel(w, h)?)))
                .collect::<spy::Result<Vec<_>>>()?;
            let dets = read_detections(det_path)?
                .iter()
                .map(|r| Ok(Detection::new(r.nbox.to_pixel(w, h)?, r.nbox.class_id, r.confidence)?))
                .collect::<spy::Result<Vec<_>>>()?;
            Ok(EvalFrame {
                stem: stem.clone(),
                dets,
                gts,
            })
        })
        .collect::<Result<_>>()?;

    let (classes, exclude) = match args.classes {
        ClassSet::Component => (
            ComponentClass::TEXTURED
                .iter()
                .map(|c| EvalClass::new(c.class_id(), c.name()))
                .collect::<Vec<_>>(),
            Some(ComponentClass::Body.class_id()),
        ),
        ClassSet::Shape => (
            ShapeClass::ALL
                .iter()
                .map(|s| EvalClass::new(s.class_id(), s.name()))
                .collect(),
            None,
        ),
    };
    let mut report = evaluate(&frames, &classes, args.iou_threshold, exclude);

    if let Some(shape_dir) = &args.shape_dets {
        let shape_pairs = pair_stems(&args.labels, "txt", shape_dir, "txt")?;
        let items: Vec<OverlapInput> = shape_pairs
            .par_iter()
            .map(|(stem, label_path, det_path)| -> Result<OverlapInput> {
                let (w, h) = frame_dims(args.images.as_deref(), stem, args.frame_size)?;
                let gts = read_labels(label_path)?
                    .iter()
                    .map(|b| b.to_pixel(w, h))
                    .collect::<spy::Result<Vec<_>>>()?;
                let preds = read_detections(det_path)?
                    .iter()
                    .map(|r| r.nbox.to_pixel(w, h))
                    .collect::<spy::Result<Vec<_>>>()?;
                Ok(OverlapInput {
                    stem: stem.clone(),
                    gts,
                    preds,
                    width: w,
                    height: h,
                })
            })
            .collect::<Result<_>>()?;
        report.sd_overlap_mean = Some(batch_sd_overlap(&items).mean);
    }

    print!("{}", report.render_table());
    if let Some(path) = &args.json {
        let mut json = serde_json::to_string_pretty(&report)?;
        json.push('\n');
        std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
