use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::cli::stage::{read_stamp, record_in_manifest, run_stage, write_atomic, StageStatus};
use crate::cli::{
    AugmentArgs, Cli, Command, EvaluateArgs, FuseArgs, InferArgs, PreprocessArgs, SegmenterKind, SplitArgs, TrainArgs,
    DATA_ROOT_ENV,
};
use crate::dataset::augment::build_training_set;
use crate::dataset::layout::{find_mask, images_dir, list_images, load_manifest, masks_dir};
use crate::dataset::{split, LesionClass, SplitManifest, SplitRatios};
use crate::error::{Error, IoContext, Result};
use crate::fusion::{fuse, render_overlay, ColorMap};
use crate::imaging::io::{read_mask, read_rgb, write_image, write_mask};
use crate::imaging::{crop_fundus, CropParams};
use crate::metrics::{
    evaluate_checkpoint, evaluate_class, markdown_table, AntiOracleSegmenter, EvalOptions, Evaluation, MetricReport,
    OracleSegmenter, Segmenter, SummaryReport,
};
use crate::model::{binarize, build_model, images_to_batch, load_checkpoint, save_checkpoint, CheckpointMeta, ProbabilityMap};
use crate::training::{train_on_manifest, ManifestSamples, TrainConfig, TrainOutputs};

/// Rows of the exported ROC curve; the AUC always uses every point.
const ROC_CSV_POINTS: usize = 10_000;

struct Ctx<'a> {
    out: &'a Path,
    force: bool,
}

impl Ctx<'_> {
    fn stage(&self, key: &str, dir: &Path, stamp: Value, body: impl FnOnce(&Path) -> Result<()>) -> Result<StageStatus> {
        let status = run_stage(dir, &stamp, self.force, body)?;
        record_in_manifest(self.out, key, &stamp)?;
        if status == StageStatus::Skipped {
            println!("{key}: up to date");
        }
        Ok(status)
    }

    fn split_dir(&self, lesion: LesionClass) -> PathBuf {
        self.out.join("splits").join(lesion.as_str())
    }

    fn augmented_dir(&self, lesion: LesionClass) -> PathBuf {
        self.out.join("augmented").join(lesion.as_str())
    }

    fn model_dir(&self, lesion: LesionClass) -> PathBuf {
        self.out.join("models").join(lesion.as_str())
    }

    fn eval_dir(&self, lesion: LesionClass) -> PathBuf {
        self.out.join("eval").join(lesion.as_str())
    }

    fn predictions_dir(&self) -> PathBuf {
        self.out.join("predictions")
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    std::fs::create_dir_all(&cli.out).with_path(&cli.out)?;
    let ctx = Ctx {
        out: &cli.out,
        force: cli.force,
    };
    match &cli.command {
        Command::Preprocess(a) => preprocess(&ctx, a),
        Command::Split(a) => split_cmd(&ctx, a),
        Command::Augment(a) => augment(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::Infer(a) => infer(&ctx, a),
        Command::Fuse(a) => fuse_cmd(&ctx, a),
        Command::Report => report(&ctx),
    }
}

/// `--root`, then the environment override, then `fallback`.
fn resolve_root(flag: Option<&PathBuf>, fallback: Option<PathBuf>) -> Result<PathBuf> {
    if let Some(p) = flag {
        return Ok(p.clone());
    }
    if let Some(p) = std::env::var_os(DATA_ROOT_ENV).filter(|v| !v.is_empty()) {
        return Ok(PathBuf::from(p));
    }
    fallback.ok_or_else(|| Error::Config(format!("no dataset root: pass --root or set {DATA_ROOT_ENV}")))
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn preprocess(ctx: &Ctx, a: &PreprocessArgs) -> Result<()> {
    let root = resolve_root(a.root.as_ref(), None)?;
    let params = CropParams {
        background_threshold: a.crop_threshold,
        margin: a.crop_margin,
    };
    let dir = ctx.out.join("preprocessed");
    let stamp = json!({"command": "preprocess", "root": path_str(&root), "crop": params});
    ctx.stage("preprocess", &dir, stamp, |dir| {
        let mut crops = Vec::new();
        for (stem, path) in list_images(&images_dir(&root))? {
            let img = read_rgb(&path)?;
            let outcome = crop_fundus(&img, &params);
            if outcome.no_foreground {
                log::warn!("{stem}: no pixel above the crop threshold; kept the full frame");
            }
            write_image(&images_dir(dir).join(format!("{stem}.png")), &outcome.image)?;
            for lesion in LesionClass::ALL {
                let Some(mask_path) = find_mask(&root, lesion, &stem) else {
                    continue;
                };
                let mask = read_mask(&mask_path)?;
                if mask.dims() != img.dims() {
                    return Err(Error::Contract(format!(
                        "{}: mask is {:?}, image is {:?}",
                        mask_path.display(),
                        mask.dims(),
                        img.dims()
                    )));
                }
                write_mask(
                    &masks_dir(dir, lesion).join(format!("{stem}.png")),
                    &mask.sub_image(&outcome.rect)?,
                )?;
            }
            crops.push(json!({"id": stem, "rect": outcome.rect, "no_foreground": outcome.no_foreground}));
        }
        if crops.is_empty() {
            return Err(Error::Config(format!("no images under {}", images_dir(&root).display())));
        }
        println!("preprocess: cropped {} images", crops.len());
        write_atomic(&dir.join("crops.json"), (serde_json::to_string_pretty(&crops)? + "\n").as_bytes())
    })?;
    Ok(())
}

fn split_cmd(ctx: &Ctx, a: &SplitArgs) -> Result<()> {
    let preprocessed = ctx.out.join("preprocessed");
    let root = resolve_root(a.root.as_ref(), preprocessed.is_dir().then_some(preprocessed))?;
    let ratios = SplitRatios {
        train: a.ratios[0],
        validation: a.ratios[1],
        test: a.ratios[2],
    };
    for &lesion in &a.lesion.lesion.0 {
        let stamp = json!({
            "command": "split",
            "lesion": lesion,
            "root": path_str(&root),
            "seed": a.seed,
            "ratios": a.ratios,
            "input": read_stamp(&root),
        });
        ctx.stage(&format!("split/{lesion}"), &ctx.split_dir(lesion), stamp, |dir| {
            let loaded = load_manifest(&root, lesion)?;
            let manifest = split(&loaded.records, ratios, a.seed)?;
            let (tr, va, te) = manifest.counts();
            println!("split {lesion}: train {tr}, validation {va}, test {te}");
            manifest.write(&dir.join("manifest.tsv"))
        })?;
    }
    Ok(())
}

fn read_split(ctx: &Ctx, lesion: LesionClass) -> Result<(SplitManifest, Option<Value>)> {
    let dir = ctx.split_dir(lesion);
    let stamp = read_stamp(&dir).ok_or_else(|| Error::Config(format!("no {lesion} split in the run; run `split` first")))?;
    Ok((SplitManifest::read(&dir.join("manifest.tsv"))?, Some(stamp)))
}

fn augment(ctx: &Ctx, a: &AugmentArgs) -> Result<()> {
    for &lesion in &a.lesion.lesion.0 {
        let (manifest, input) = read_split(ctx, lesion)?;
        let stamp = json!({"command": "augment", "lesion": lesion, "per_image": a.per_image, "input": input});
        ctx.stage(&format!("augment/{lesion}"), &ctx.augmented_dir(lesion), stamp, |dir| {
            let extended = build_training_set(&manifest, a.per_image, dir)?;
            println!(
                "augment {lesion}: {} augmented, {} training records",
                extended.augmented_count(),
                extended.train.len()
            );
            extended.write(&dir.join("manifest.tsv"))
        })?;
    }
    Ok(())
}

/// The augmented manifest when present, else the plain split.
fn training_manifest(ctx: &Ctx, lesion: LesionClass) -> Result<(SplitManifest, Option<Value>)> {
    let aug = ctx.augmented_dir(lesion);
    if let Some(stamp) = read_stamp(&aug) {
        return Ok((SplitManifest::read(&aug.join("manifest.tsv"))?, Some(stamp)));
    }
    log::warn!("no augmented {lesion} set; training on the plain split");
    read_split(ctx, lesion)
}

fn load_config(path: Option<&PathBuf>) -> Result<TrainConfig> {
    match path {
        Some(p) => TrainConfig::load(p),
        None => Ok(TrainConfig::default()),
    }
}

fn train_cmd(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_ref())?;
    if let Some(e) = a.epochs {
        cfg.max_epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    // classes train one after another
    for &lesion in &a.lesion.lesion.0 {
        let (manifest, input) = training_manifest(ctx, lesion)?;
        let stamp = json!({"command": "train", "lesion": lesion, "config": cfg, "input": input});
        ctx.stage(&format!("train/{lesion}"), &ctx.model_dir(lesion), stamp, |dir| {
            let model = build_model(&cfg.model_config())?;
            let outputs = TrainOutputs {
                checkpoint: Some(dir.join("model.ckpt")),
                log_jsonl: Some(dir.join("epoch_log.jsonl")),
                loss_curve_png: Some(dir.join("loss_curve.png")),
                lesion: Some(lesion),
            };
            let outcome = train_on_manifest(model, &manifest, &cfg, &outputs)?;
            let ckpt = dir.join("model.ckpt");
            if !ckpt.exists() {
                // no epoch improved (or none ran); keep the returned parameters
                let meta = CheckpointMeta {
                    epoch: None,
                    val_loss: None,
                    lesion: Some(lesion.to_string()),
                };
                save_checkpoint(&ckpt, &outcome.model, &cfg.preprocess(), &meta)?;
            }
            write_atomic(&dir.join("config.toml"), cfg.to_toml_string().as_bytes())?;
            let summary = json!({
                "lesion": lesion,
                "epochs_run": outcome.log.len(),
                "best_epoch": outcome.best_epoch(),
                "best_val_loss": outcome.best_epoch().map(|_| outcome.early_stop.best_val_loss),
                "stopped_early": outcome.stopped_early,
            });
            write_atomic(&dir.join("summary.json"), (serde_json::to_string_pretty(&summary)? + "\n").as_bytes())?;
            println!(
                "train {lesion}: {} epochs, best epoch {:?}",
                outcome.log.len(),
                outcome.best_epoch()
            );
            Ok(())
        })?;
    }
    Ok(())
}

fn write_evaluation(dir: &Path, eval: &Evaluation) -> Result<()> {
    write_atomic(&dir.join("report.json"), eval.report.to_json().as_bytes())?;
    if let Some(roc) = &eval.roc {
        write_atomic(&dir.join("roc.csv"), roc.downsampled(ROC_CSV_POINTS).to_csv().as_bytes())?;
    }
    let mut tsv = String::from("id\ttp\ttn\tfp\tfn\n");
    for (id, c) in &eval.per_image {
        writeln!(tsv, "{id}\t{}\t{}\t{}\t{}", c.tp, c.tn, c.fp, c.fn_).expect("string write");
    }
    write_atomic(&dir.join("per_image.tsv"), tsv.as_bytes())
}

fn evaluate(ctx: &Ctx, a: &EvaluateArgs) -> Result<()> {
    let kind = if a.oracle { SegmenterKind::Oracle } else { a.segmenter };
    let requested = a.config.as_ref().map(|p| TrainConfig::load(p)).transpose()?;
    let opts = EvalOptions {
        threshold: a.threshold,
        aggregation: a.aggregation.into(),
    };
    for &lesion in &a.lesion.lesion.0 {
        let (manifest, split_stamp) = read_split(ctx, lesion)?;
        let model_stamp = match kind {
            SegmenterKind::Model => Some(
                read_stamp(&ctx.model_dir(lesion))
                    .ok_or_else(|| Error::Config(format!("no trained {lesion} model in the run; run `train` first")))?,
            ),
            _ => None,
        };
        let stamp = json!({
            "command": "evaluate",
            "lesion": lesion,
            "segmenter": format!("{kind:?}"),
            "threshold": a.threshold,
            "aggregation": opts.aggregation,
            "requested_preprocess": requested.as_ref().map(|c| c.preprocess()),
            "split": split_stamp,
            "model": model_stamp,
        });
        ctx.stage(&format!("evaluate/{lesion}"), &ctx.eval_dir(lesion), stamp, |dir| {
            let eval = match kind {
                SegmenterKind::Model => {
                    let ckpt = load_checkpoint(&ctx.model_dir(lesion).join("model.ckpt"))?;
                    let req = requested.as_ref().map(|c| c.preprocess());
                    evaluate_checkpoint(&ckpt, &manifest.test, lesion, req.as_ref(), &opts)?
                }
                _ => {
                    let pre = requested.as_ref().map(|c| c.preprocess()).unwrap_or_default();
                    let samples = ManifestSamples::new(&manifest.test, pre);
                    let seg: &dyn Segmenter = if kind == SegmenterKind::Oracle {
                        &OracleSegmenter
                    } else {
                        &AntiOracleSegmenter
                    };
                    evaluate_class(seg, &samples, lesion, &opts)?
                }
            };
            let r = &eval.report;
            println!(
                "evaluate {lesion}: accuracy {:.5}, iou {:.5}, f1 {:.5}, auc {}",
                r.accuracy,
                r.iou,
                r.f1,
                r.auc.map_or("n/a".to_string(), |v| format!("{v:.5}"))
            );
            write_evaluation(dir, &eval)
        })?;
    }
    Ok(())
}

fn input_images(input: &Path) -> Result<BTreeMap<String, PathBuf>> {
    if input.is_dir() {
        return list_images(input);
    }
    let stem = input
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Config(format!("{} is not an image path", input.display())))?;
    if !input.is_file() {
        return Err(Error::io(
            input,
            std::io::Error::new(std::io::ErrorKind::NotFound, "input image not found"),
        ));
    }
    Ok(BTreeMap::from([(stem.to_string(), input.to_path_buf())]))
}

fn infer(ctx: &Ctx, a: &InferArgs) -> Result<()> {
    let images = input_images(&a.input)?;
    if images.is_empty() {
        return Err(Error::Config(format!("no images found at {}", a.input.display())));
    }
    let crop = (!a.no_crop).then_some(CropParams {
        background_threshold: a.crop_threshold,
        margin: 0,
    });
    for &lesion in &a.lesion.lesion.0 {
        let model_dir = ctx.model_dir(lesion);
        let model_stamp =
            read_stamp(&model_dir).ok_or_else(|| Error::Config(format!("no trained {lesion} model in the run")))?;
        let stamp = json!({
            "command": "infer",
            "lesion": lesion,
            "input": path_str(&a.input),
            "threshold": a.threshold,
            "crop": crop,
            "model": model_stamp,
        });
        let dir = ctx.predictions_dir().join(lesion.as_str());
        ctx.stage(&format!("infer/{lesion}"), &dir, stamp, |dir| {
            let ckpt = load_checkpoint(&model_dir.join("model.ckpt"))?;
            for (stem, path) in &images {
                let mut img = read_rgb(path)?;
                if let Some(params) = &crop {
                    img = crop_fundus(&img, params).image;
                }
                let (input, _) = ckpt.preprocess.apply(&img, None)?;
                let out = ckpt.model.forward(&images_to_batch(&[&input])?)?;
                let probs: ProbabilityMap = ProbabilityMap::from_batch(&out)?.remove(0);
                write_mask(&dir.join(format!("{stem}.png")), &binarize(&probs, a.threshold)?)?;
                write_image(&dir.join("prob").join(format!("{stem}.png")), &probs.to_heatmap())?;
                write_image(&dir.join("input").join(format!("{stem}.png")), &input)?;
            }
            println!("infer {lesion}: {} images", images.len());
            Ok(())
        })?;
    }
    Ok(())
}

fn fuse_cmd(ctx: &Ctx, a: &FuseArgs) -> Result<()> {
    let masks_root = a.masks.clone().unwrap_or_else(|| ctx.predictions_dir());
    let cmap = ColorMap {
        priority: a.priority,
        ..ColorMap::default()
    };
    cmap.validate()?;
    let classes: Vec<LesionClass> = LesionClass::ALL
        .into_iter()
        .filter(|l| masks_root.join(l.as_str()).is_dir())
        .collect();
    if classes.is_empty() {
        return Err(Error::Config(format!(
            "no <LESION>/ mask directories under {}",
            masks_root.display()
        )));
    }
    let mut per_class: BTreeMap<LesionClass, BTreeMap<String, PathBuf>> = BTreeMap::new();
    for &l in &classes {
        per_class.insert(l, list_images(&masks_root.join(l.as_str()))?);
    }
    let stems: std::collections::BTreeSet<String> = per_class.values().flat_map(|m| m.keys().cloned()).collect();
    let bases = a.base.as_ref().map(|b| list_images(b)).transpose()?;
    let stamp = json!({
        "command": "fuse",
        "masks": path_str(&masks_root),
        "base": a.base.as_ref().map(|b| path_str(b)),
        "alpha": a.alpha,
        "priority": a.priority,
        "inputs": classes.iter().map(|l| read_stamp(&masks_root.join(l.as_str()))).collect::<Vec<_>>(),
    });
    ctx.stage("fuse", &ctx.out.join("fused"), stamp, |dir| {
        let mut overlays = 0;
        for stem in &stems {
            let mut masks = BTreeMap::new();
            for (&l, files) in &per_class {
                if let Some(p) = files.get(stem) {
                    masks.insert(l, read_mask(p)?);
                }
            }
            let comp = fuse(&masks)?;
            comp.write_png(&dir.join(format!("{stem}_labels.png")))?;
            let base_path = match &bases {
                Some(b) => b.get(stem).cloned(),
                None => classes
                    .iter()
                    .map(|l| masks_root.join(l.as_str()).join("input").join(format!("{stem}.png")))
                    .find(|p| p.is_file()),
            };
            if let Some(bp) = base_path {
                let overlay = render_overlay(&read_rgb(&bp)?, &comp, &cmap, a.alpha)?;
                write_image(&dir.join(format!("{stem}_overlay.png")), &overlay)?;
                overlays += 1;
            }
        }
        println!("fuse: {} composites, {overlays} overlays", stems.len());
        Ok(())
    })?;
    Ok(())
}

fn report(ctx: &Ctx) -> Result<()> {
    let mut reports: Vec<MetricReport> = Vec::new();
    let mut inputs = Vec::new();
    for lesion in LesionClass::ALL {
        let path = ctx.eval_dir(lesion).join("report.json");
        if path.is_file() {
            reports.push(MetricReport::read_json(&path)?);
            inputs.push(read_stamp(&ctx.eval_dir(lesion)));
        }
    }
    if reports.is_empty() {
        return Err(Error::Config("no evaluation reports in the run; run `evaluate` first".into()));
    }
    let stamp = json!({"command": "report", "inputs": inputs});
    ctx.stage("report", &ctx.out.join("report"), stamp, |dir| {
        let table = markdown_table(&reports);
        write_atomic(&dir.join("summary.json"), SummaryReport::new(reports.clone()).to_json().as_bytes())?;
        write_atomic(&dir.join("table.md"), table.as_bytes())?;
        print!("{table}");
        Ok(())
    })?;
    Ok(())
}
