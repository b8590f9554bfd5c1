use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use relight_core::imaging::{decode_image, read_flow, ColorSpace};
use relight_core::metrics::{fidelity_metrics, temporal_metrics, MetricReport};
use relight_core::pipeline::AnalyticRelighter;
use relight_core::scenario::{gen_scenario, ScenarioSpec};
use relight_core::sh::{project_envmap_seeded, EnvMap};
use relight_core::temporal::{relight_video, BlendWeights, FlowParams, FlowSource, LightingTimeline};
use relight_core::{FlowField, ImageBuffer, Mask, Warning};

use crate::args::{EvalArgs, ImageArgs, LightingFlags, ProjectArgs, ReportFormat, ScenarioArgs, ServeArgs, VideoArgs};
use crate::error::{CliError, CliResult, ErrorKind};
use crate::manifest::{list_files, read_bytes, read_coeffs, read_lighting, to_json, write_bytes, write_scenario, LightingFile, VideoManifest};
use crate::render::{decode_color, decode_mask, decode_normal_map, encode_output, relight_image, ImageAssets, RelightSettings, SequenceAssets};
use crate::service::{self, ServiceConfig};

pub const DEFAULT_PROJECTION_SAMPLES: usize = 200_000;

fn required<'a, T>(value: &'a Option<T>, flag: &str) -> CliResult<&'a T> {
    value.as_ref().ok_or_else(|| CliError::missing_flag(flag))
}

fn report_warnings(warnings: &[Warning], frame: Option<usize>) {
    for w in warnings {
        match frame {
            Some(t) => tracing::warn!("frame {t}: {w}"),
            None => tracing::warn!("{w}"),
        }
    }
}

fn settings(flags: &LightingFlags, coeffs: Option<relight_core::ShCoefficients>) -> RelightSettings {
    RelightSettings {
        coeffs,
        harmonize_strength: flags.harmonize_strength,
        refine_radius: flags.refine_radius,
        convolve: !flags.no_convolve,
        use_background: true,
    }
}

pub fn image(args: &ImageArgs) -> CliResult<()> {
    let input = required(&args.input, "--input")?;
    let normals = required(&args.normals, "--normals")?;
    let mask = required(&args.mask, "--mask")?;
    let out = required(&args.out, "--out")?;
    if args.sh.is_none() && args.background.is_none() {
        return Err(CliError::usage("missing required flag --sh (or --background for harmonization only)"));
    }
    if args.report.is_some() && args.reference.is_none() {
        return Err(CliError::usage("--report needs --reference"));
    }

    let coeffs = args.sh.as_deref().map(|p| read_coeffs(p, "--sh")).transpose()?;
    let background = args.background.as_deref().map(|p| read_bytes(p, "--background")).transpose()?;
    let assets = ImageAssets::decode(
        &read_bytes(input, "--input")?,
        &read_bytes(normals, "--normals")?,
        &read_bytes(mask, "--mask")?,
        background.as_deref(),
        args.lighting.flip_normal_y,
    )?;
    let relit = relight_image(&assets, &settings(&args.lighting, coeffs))?;
    report_warnings(&relit.warnings, None);
    let bytes = encode_output(&relit.value);
    write_bytes(out, &bytes)?;

    if let (Some(report), Some(reference)) = (&args.report, &args.reference) {
        let reference = decode_color(&read_bytes(reference, "--reference")?, "reference")?;
        // Score what was written, after quantization.
        let written = decode_color(&bytes, "output")?;
        let r = fidelity_metrics(&[written], &[reference], Some(&[assets.mask]))?;
        write_bytes(report, to_json(&r).as_bytes())?;
    }
    Ok(())
}

fn resolve(base: &Path, rel: &Path) -> PathBuf {
    if rel.is_absolute() {
        rel.to_path_buf()
    } else {
        base.join(rel)
    }
}

fn read_flows(dir: &Path, flag: &str) -> CliResult<Vec<FlowField>> {
    list_files(dir, "flo", flag)?
        .iter()
        .map(|p| read_flow(&read_bytes(p, flag)?).map_err(|e| CliError::from(e).context(p.display())))
        .collect()
}

pub fn video(args: &VideoArgs) -> CliResult<()> {
    let manifest_path = required(&args.manifest, "--manifest")?;
    let out_dir = required(&args.out_dir, "--out-dir")?;
    let manifest = VideoManifest::read(manifest_path)?;
    if manifest.frames.is_empty() {
        return Err(CliError::parameter("manifest lists no frames"));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let flip = args.lighting.flip_normal_y;

    let mut seq = SequenceAssets {
        frames: Vec::new(),
        normals: Vec::new(),
        masks: Vec::new(),
        backgrounds: None,
    };
    let with_backgrounds = manifest.frames.iter().filter(|f| f.background.is_some()).count();
    if with_backgrounds != 0 && with_backgrounds != manifest.frames.len() {
        return Err(CliError::new(
            ErrorKind::Dimension,
            format!("{with_backgrounds} of {} frames list a background", manifest.frames.len()),
        ));
    }
    let mut backgrounds = Vec::new();
    for (t, f) in manifest.frames.iter().enumerate() {
        let read = |rel: &Path, what: &str| read_bytes(&resolve(base, rel), &format!("frame {t} {what}"));
        seq.frames.push(decode_color(&read(&f.image, "image")?, &format!("frame {t} image"))?);
        seq.normals.push(decode_normal_map(&read(&f.normals, "normals")?, flip, &format!("frame {t} normals"))?);
        seq.masks.push(decode_mask(&read(&f.mask, "mask")?, &format!("frame {t} mask"))?);
        if let Some(bg) = &f.background {
            backgrounds.push(decode_color(&read(bg, "background")?, &format!("frame {t} background"))?);
        }
    }
    if with_backgrounds > 0 {
        seq.backgrounds = Some(backgrounds);
    }
    seq.check_sizes()?;

    let lighting = match read_lighting(&resolve(base, &manifest.lighting))? {
        LightingFile::Static(c) => LightingTimeline::Static(c),
        LightingFile::PerFrame(v) => {
            if v.len() != seq.len() {
                return Err(CliError::new(
                    ErrorKind::Dimension,
                    format!("lighting timeline has {} entries for {} frames", v.len(), seq.len()),
                ));
            }
            LightingTimeline::PerFrame(v)
        }
    };
    let weights = if args.no_temporal {
        BlendWeights::DISABLED
    } else {
        BlendWeights {
            spatial_w: args.spatial_w,
            temporal_w: args.temporal_w,
        }
    };
    weights.validate()?;
    let mut job = seq.job(seq.len(), lighting, &settings(&args.lighting, None), weights);
    if let Some(dir) = &args.flow_dir {
        job.flow = FlowSource::Precomputed(read_flows(dir, "--flow-dir")?);
    } else {
        job.flow = FlowSource::Internal(FlowParams::default());
    }
    let out = relight_video(&job, &AnalyticRelighter)?;
    for (t, w) in &out.warnings {
        report_warnings(std::slice::from_ref(w), Some(*t));
    }
    for (t, frame) in out.frames.iter().enumerate() {
        write_bytes(&out_dir.join(format!("{t:04}.png")), &encode_output(frame))?;
    }
    Ok(())
}

fn read_frames(dir: &Path, flag: &str, colorspace: ColorSpace) -> CliResult<Vec<ImageBuffer>> {
    list_files(dir, "png", flag)?
        .iter()
        .map(|p| {
            decode_image(&read_bytes(p, flag)?, colorspace).map_err(|e| CliError::from(e).context(p.display()))
        })
        .collect()
}

pub fn eval_report(args: &EvalArgs) -> CliResult<MetricReport> {
    let results_dir = required(&args.results, "--results")?;
    if args.foreground_only && args.mask_dir.is_none() {
        return Err(CliError::usage("--foreground-only needs --mask-dir"));
    }
    if args.reference.is_none() && args.source.is_none() {
        return Err(CliError::usage("missing required flag --source (or --reference)"));
    }
    // Without conversion the stored sRGB code values are used directly.
    let colorspace = if args.srgb { ColorSpace::Linear } else { ColorSpace::Srgb };
    let results = read_frames(results_dir, "--results", colorspace)?;
    let masks = args
        .mask_dir
        .as_deref()
        .map(|d| -> CliResult<Vec<Mask>> {
            Ok(read_frames(d, "--mask-dir", ColorSpace::Linear)?.iter().map(Mask::from_image).collect())
        })
        .transpose()?;

    let mut report: Option<MetricReport> = None;
    if let Some(dir) = &args.reference {
        let references = read_frames(dir, "--reference", colorspace)?;
        report = Some(fidelity_metrics(&results, &references, masks.as_deref())?);
    }
    if let Some(dir) = &args.source {
        let source = read_frames(dir, "--source", colorspace)?;
        if source.len() != results.len() {
            return Err(relight_core::Error::FrameCount {
                asset: "source frames".into(),
                expected: results.len(),
                actual: source.len(),
            }
            .into());
        }
        if results.len() >= 2 {
            let flows = args.flows.as_deref().map(|d| read_flows(d, "--flows")).transpose()?;
            let temporal_masks = masks.as_deref().filter(|_| args.foreground_only);
            let t = temporal_metrics(&results, &source, flows.as_deref(), temporal_masks)?;
            report = Some(match report {
                Some(r) => r.merge(t)?,
                None => t,
            });
        } else if report.is_none() {
            return Err(CliError::parameter("temporal metrics need at least two frames"));
        }
    }
    let mut report = report.expect("at least one metric family ran");
    report.foreground_only = args.foreground_only;
    Ok(report)
}

pub fn eval(args: &EvalArgs) -> CliResult<()> {
    let report = eval_report(args)?;
    let text = match args.report {
        ReportFormat::Json => to_json(&report),
        ReportFormat::Csv => report.to_csv(),
    };
    match &args.out {
        Some(path) => write_bytes(path, text.as_bytes()),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::new(ErrorKind::Internal, format!("cannot write report: {e}"))),
    }
}

fn parse_res(res: &str) -> CliResult<(usize, usize)> {
    let bad = || CliError::parameter(format!("--res must look like 256x256, got {res:?}"));
    let (w, h) = res.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((w.trim().parse().map_err(|_| bad())?, h.trim().parse().map_err(|_| bad())?))
}

pub fn gen_scenario_cmd(args: &ScenarioArgs) -> CliResult<()> {
    let scenario = *required(&args.scenario, "--scenario")?;
    let out_dir = required(&args.out_dir, "--out-dir")?;
    let (w, h) = parse_res(&args.res)?;
    let mut spec = ScenarioSpec::preset(scenario, args.frames, w, h, args.seed)?;
    if let Some(noise) = args.normal_noise {
        spec.normal_noise = noise;
        spec.validate()?;
    }
    let seq = gen_scenario(&spec)?;
    write_scenario(&seq, out_dir)?;
    Ok(())
}

pub fn sh_project(args: &ProjectArgs) -> CliResult<()> {
    let env_path = required(&args.env, "--env")?;
    let out = required(&args.out, "--out")?;
    let img = decode_color(&read_bytes(env_path, "--env")?, "environment map")?;
    let env = EnvMap::new(img)?;
    let coeffs = project_envmap_seeded(&env, args.bands, args.samples, args.seed)?;
    write_bytes(out, format!("{}\n", coeffs.to_json_string()).as_bytes())
}

pub fn serve(args: &ServeArgs) -> CliResult<()> {
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| CliError::parameter(format!("bad listen address: {e}")))?;
    let config = ServiceConfig {
        max_pixels: args.max_pixels,
        workers: args.workers.unwrap_or_else(default_workers),
        ui_dir: args.ui_dir.clone(),
    };
    if config.workers == 0 {
        return Err(CliError::parameter("--workers must be at least 1"));
    }
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| CliError::new(ErrorKind::Internal, format!("cannot start runtime: {e}")))?;
    runtime
        .block_on(service::serve(addr, config))
        .map_err(|e| CliError::new(ErrorKind::Internal, format!("service failed: {e}")))
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
