use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use obsum::metrics::evaluate;
use obsum::pipeline::synth::{generate_synthetic_scene, SceneSpec};
use obsum::pipeline::{simulate_coarse, stepwise_report, Segmentation};
use obsum::preprocess::ingest_segmentation;
use obsum::raster::read_raster;
use obsum::residual::residual_diagnostics;
use obsum::{fuse, FusionConfig, FusionInputs, Raster, RasterDescriptor, ScaleFactor};

use crate::output::Outputs;
use crate::quicklook::composite;
use crate::{
    Command, DiagnoseArgs, EvaluateArgs, Format, FuseArgs, FusionFlags, QuicklookArgs,
    SimulateArgs, SynthArgs,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Fuse(a) => cmd_fuse(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Quicklook(a) => cmd_quicklook(a),
        Command::Diagnose(a) => cmd_diagnose(a),
    }
}

fn read(path: &Path, what: &str) -> Result<Raster> {
    read_raster(path).with_context(|| format!("cannot read {what} {}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create directory {}", dir.display()))
}

/// `dir/stem_suffix.ext`, next to `out`.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    let ext = out
        .extension()
        .map_or("hdr".into(), |e| e.to_string_lossy());
    out.with_file_name(format!("{stem}_{suffix}.{ext}"))
}

fn report_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn build_config(flags: &FusionFlags) -> Result<FusionConfig> {
    let mut cfg = match (&flags.config, flags.scale) {
        (Some(path), _) => FusionConfig::from_file(path)?,
        (None, Some(s)) => FusionConfig::new(ScaleFactor::new(s)?),
        (None, None) => bail!("either --config or --scale is required"),
    };
    if let Some(s) = flags.scale {
        cfg.scale = ScaleFactor::new(s)?;
    }
    if let Some(v) = flags.classes {
        cfg.n_classes = v;
    }
    if let Some(v) = flags.window {
        cfg.window = v;
    }
    if let Some(v) = flags.sim_window {
        cfg.sim_window = v;
    }
    if let Some(v) = flags.n_similar {
        cfg.n_similar = v;
    }
    if let Some(v) = flags.or_percent {
        cfg.or_percent = v;
    }
    if let Some(v) = flags.seed {
        cfg.kmeans_seed = v;
    }
    if let Some(path) = &flags.segmentation {
        cfg.segmentation = Segmentation::External { path: path.clone() };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_fuse(args: FuseArgs) -> Result<()> {
    let mut cfg = build_config(&args.fusion)?;
    cfg.emit_intermediates |= args.emit_intermediates;
    let fine = read(&args.fine, "fine image")?;
    let coarse = read(&args.coarse, "coarse image")?;

    let start = Instant::now();
    let out = fuse(&FusionInputs::new(&fine, &coarse), &cfg)?;
    for (stage, t) in &out.timings {
        println!("{:<36} {:>8.2} s", stage.to_string(), t.as_secs_f64());
    }
    println!("{:<36} {:>8.2} s", "total", start.elapsed().as_secs_f64());

    let mut outputs = Outputs::default();
    outputs.raster(&out.obsum, &args.out)?;
    if let Some(inter) = &out.intermediates {
        outputs.raster(&inter.olu, &sibling(&args.out, "olu"))?;
        outputs.raster(&inter.olrc, &sibling(&args.out, "olrc"))?;
        let mut labels: Vec<f32> = inter.classes.labels().iter().map(|&c| c as f32).collect();
        labels.extend(inter.objects.labels().iter().map(|&o| o as f32));
        let labels = Raster::new(
            RasterDescriptor {
                bands: 2,
                nodata: None,
                ..fine.descriptor().clone()
            },
            labels,
        )?;
        outputs.raster(&labels, &sibling(&args.out, "labels"))?;
    }
    report_written(&outputs.commit());
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let fine = read(&args.fine, "fine image")?;
    let mask = args.mask.as_deref().map(|p| read(p, "mask")).transpose()?;
    let coarse = simulate_coarse(&fine, ScaleFactor::new(args.scale)?, mask.as_ref())?;
    let mut outputs = Outputs::default();
    outputs.raster(&coarse, &args.out)?;
    println!(
        "{}x{} -> {}x{}",
        fine.width(),
        fine.height(),
        coarse.width(),
        coarse.height()
    );
    report_written(&outputs.commit());
    Ok(())
}

fn emit(text: String, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            let mut outputs = Outputs::default();
            outputs.bytes(path, text.as_bytes())?;
            report_written(&outputs.commit());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let pred = read(&args.pred, "prediction")?;
    let reference = read(&args.reference, "reference")?;
    let report = evaluate(&pred, &reference)?;
    let text = match args.format {
        Format::Table => report.to_text(),
        Format::Csv => report.to_csv(),
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
    };
    emit(text, args.out.as_deref())
}

fn scene_spec(args: &SynthArgs) -> Result<SceneSpec> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            SceneSpec::from_toml_str(&text)
                .with_context(|| format!("invalid scene spec {}", path.display()))?
        }
        None => SceneSpec::default(),
    };
    let set = |dst: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut spec.width, args.width);
    set(&mut spec.height, args.height);
    set(&mut spec.scale, args.scale);
    set(&mut spec.bands, args.bands);
    set(&mut spec.n_classes, args.classes);
    set(&mut spec.n_objects, args.objects);
    if let Some(v) = args.noise {
        spec.noise = v;
    }
    if let Some(v) = args.cloud {
        spec.cloud_fraction = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    Ok(spec)
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let spec = scene_spec(&args)?;
    let scene = generate_synthetic_scene(&spec)?;
    ensure_dir(&args.out)?;
    let mut outputs = Outputs::default();
    let dir = &args.out;
    outputs.raster(&scene.fine_tb, &dir.join("fine_tb.hdr"))?;
    outputs.raster(&scene.fine_tp, &dir.join("fine_tp.hdr"))?;
    outputs.raster(&scene.coarse_tp, &dir.join("coarse_tp.hdr"))?;
    outputs.raster(&scene.classes.to_raster(), &dir.join("classes.hdr"))?;
    outputs.raster(&scene.objects.to_raster(), &dir.join("objects.hdr"))?;
    if let Some(mask) = &scene.mask {
        outputs.raster(mask, &dir.join("mask.hdr"))?;
    }
    println!(
        "{}x{}x{} scene, scale {}, {} objects, {} classes",
        spec.width,
        spec.height,
        spec.bands,
        spec.scale,
        scene.objects.object_count(),
        spec.n_classes
    );
    if args.stepwise {
        let report = stepwise_report(&scene, &FusionConfig::new(ScaleFactor::new(spec.scale)?))?;
        match args.format {
            Format::Table => print!("{}", report.to_text()),
            Format::Csv => print!("{}", report.to_csv()),
            Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        }
    }
    report_written(&outputs.commit());
    Ok(())
}

fn cmd_quicklook(args: QuicklookArgs) -> Result<()> {
    let raster = read(&args.input, "raster")?;
    let rgb = composite(&raster, &args.bands)?;
    let (w, h) = (raster.width() as u32, raster.height() as u32);
    let img = image::RgbImage::from_raw(w, h, rgb).context("composite buffer size")?;
    let mut outputs = Outputs::default();
    outputs.with_temp(&args.out, |tmp| {
        img.save_with_format(tmp, image::ImageFormat::Png)
            .with_context(|| format!("cannot write {}", args.out.display()))
    })?;
    report_written(&outputs.commit());
    Ok(())
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<()> {
    let olu = read(&args.olu, "OL-U prediction")?;
    let olrc = read(&args.olrc, "OL-RC prediction")?;
    let obsum = read(&args.obsum, "OBSUM prediction")?;
    let reference = read(&args.reference, "reference")?;
    let coarse = read(&args.coarse, "coarse image")?;
    let labels = read(&args.objects, "object labels")?;
    let objects = ingest_segmentation(&labels, &olu)?;
    let s = ScaleFactor::new(args.scale)?;
    let (maps, report) =
        residual_diagnostics(&olu, &olrc, &obsum, &reference, &coarse, &objects, s)?;

    let mut outputs = Outputs::default();
    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        let ori = Raster::new(
            RasterDescriptor::new(maps.ori.width, maps.ori.height, 1),
            maps.ori.values.iter().map(|&v| v as f32).collect(),
        )?;
        for (name, map) in [
            ("coarse_residuals", &maps.coarse_residuals),
            ("fine_residuals", &maps.fine_residuals),
            ("actual_residuals", &maps.actual_residuals),
            ("object_residuals", &maps.object_residuals),
            ("or_minus_fr", &maps.or_minus_fr),
            ("ori", &ori),
            ("olr", &maps.olr),
            ("olr_plr", &maps.olr_plr),
        ] {
            outputs.raster(map, &dir.join(format!("{name}.hdr")))?;
        }
    }
    match args.format {
        Format::Table => print!("{}", report.to_text()),
        Format::Csv => print!("{}", report.correlations_csv()),
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    report_written(&outputs.commit());
    Ok(())
}
