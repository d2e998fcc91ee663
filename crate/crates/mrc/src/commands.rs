use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mrc_core::codec::{CodecConfig, CodecId, ErrorBoundPolicy, LosslessPass, DEFAULT_ALPHA, DEFAULT_BETA};
use mrc_core::layout::Arrangement;
use mrc_core::metrics::{self, RateDistortionPoint, SweepOptions};
use mrc_core::pipeline::{compress_level, decompress_level, postprocess_blocksize, LevelCodec, PadMode, PostOptions};
use mrc_core::postprocess::{extract_samples, plan_sampling, select_intensity, IntensityFamily, MAX_SAMPLING_RATE};
use mrc_core::roi::{build_adaptive, reconstruct_uniform, select_roi, uniform_dataset, Level, MultiResDataset, RoiConfig};
use mrc_core::uncertainty::{fit_model, probability_field, sample_errors, ErrorModel};
use rayon::prelude::*;
use serde_json::json;

use crate::container::{full_roi, Container, LevelRecord, PostHeader, SampleRegion, MAGIC};
use crate::error::{usage, Error, Result};
use crate::raw::{self, parse_dims, Dtype};

#[derive(Debug, Parser)]
#[command(name = "mrc", version, about = "Multi-resolution error-bounded compression of 3D scalar fields")]
pub struct Cli {
    /// Seed for sampled regions.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a raw volume into a two-level ROI dataset (uncompressed container).
    Roi(RoiArgs),
    /// Compress a container or a raw volume.
    Compress(CompressArgs),
    /// Decompress a container to a raw volume or an uncompressed container.
    Decompress(DecompressArgs),
    /// Isosurface crossing probabilities of the decompressed field.
    Uncertainty(UncertaintyArgs),
    /// PSNR, SSIM and compression ratio of a reconstruction.
    Eval(EvalArgs),
    /// Rate-distortion sweep over error bounds (JSON lines, optional CSV).
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CodecArg {
    Interp,
    Block,
}

impl CodecArg {
    fn id(self) -> CodecId {
        match self {
            CodecArg::Interp => CodecId::Interp,
            CodecArg::Block => CodecId::BlockLorenzo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PostArg {
    Sz,
    Zfp,
    Off,
}

impl PostArg {
    fn family(self) -> Option<IntensityFamily> {
        match self {
            PostArg::Sz => Some(IntensityFamily::SzLike),
            PostArg::Zfp => Some(IntensityFamily::ZfpLike),
            PostArg::Off => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PadArg {
    Auto,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArrangementArg {
    Linear,
    Stacked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LosslessArg {
    None,
    Deflate,
}

impl LosslessArg {
    fn pass(self) -> LosslessPass {
        match self {
            LosslessArg::None => LosslessPass::Identity,
            LosslessArg::Deflate => LosslessPass::Deflate(6),
        }
    }
}

#[derive(Debug, Args)]
pub struct RawInput {
    #[arg(long)]
    pub input: PathBuf,
    /// `NXxNYxNZ`, x fastest.
    #[arg(long, value_parser = parse_dims)]
    pub dims: Option<[usize; 3]>,
    #[arg(long, value_enum, default_value_t = Dtype::F64)]
    pub dtype: Dtype,
}

#[derive(Debug, Args)]
pub struct RoiArgs {
    #[command(flatten)]
    pub raw: RawInput,
    #[arg(long, default_value_t = 16)]
    pub block: usize,
    /// Share of blocks kept at full resolution.
    #[arg(long)]
    pub percent: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    /// Container, or a raw volume when `--dims` is given.
    #[command(flatten)]
    pub raw: RawInput,
    /// Unit block edge used to tile a raw volume.
    #[arg(long, default_value_t = 16)]
    pub block: usize,
    #[arg(long, value_enum, default_value_t = CodecArg::Interp)]
    pub codec: CodecArg,
    #[arg(long)]
    pub eb: f64,
    #[arg(long)]
    pub adaptive_eb: bool,
    #[arg(long, requires = "adaptive_eb", default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, requires = "adaptive_eb", default_value_t = DEFAULT_BETA)]
    pub beta: f64,
    #[arg(long, value_enum, default_value_t = PadArg::Auto)]
    pub pad: PadArg,
    #[arg(long, value_enum, default_value_t = ArrangementArg::Linear)]
    pub arrangement: ArrangementArg,
    #[arg(long, default_value_t = MAX_SAMPLING_RATE)]
    pub sample_rate: f64,
    #[arg(long, value_enum, default_value_t = PostArg::Off)]
    pub post: PostArg,
    /// Store sampled original regions even without post-processing.
    #[arg(long)]
    pub keep_samples: bool,
    #[arg(long, value_enum, default_value_t = LosslessArg::None)]
    pub lossless: LosslessArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecompressArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Write the full-resolution volume instead of an uncompressed container.
    #[arg(long)]
    pub uniform: bool,
    /// Output scalar type; defaults to the container's.
    #[arg(long, value_enum)]
    pub dtype: Option<Dtype>,
    /// Skip the recorded boundary post-processing.
    #[arg(long)]
    pub no_post: bool,
}

#[derive(Debug, Args)]
pub struct UncertaintyArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Full-resolution original; otherwise the stored sample regions are used.
    #[arg(long)]
    pub orig: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub dtype: Option<Dtype>,
    #[arg(long)]
    pub isovalue: f64,
    /// Sample window half-width as a fraction of the value range.
    #[arg(long, default_value_t = 0.05)]
    pub window: f64,
    /// Use this error variance instead of fitting one.
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long, requires = "sigma2", default_value_t = 0.0)]
    pub mu: f64,
    /// Probability field as raw f64; a JSON sidecar goes to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub orig: PathBuf,
    #[arg(long)]
    pub recon: PathBuf,
    #[arg(long, value_parser = parse_dims)]
    pub dims: [usize; 3],
    #[arg(long, value_enum, default_value_t = Dtype::F64)]
    pub dtype: Dtype,
    /// Compressed file, for the compression ratio.
    #[arg(long)]
    pub compressed: Option<PathBuf>,
    /// JSON report; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub raw: RawInput,
    #[arg(long, value_enum, default_value_t = CodecArg::Interp)]
    pub codec: CodecArg,
    #[arg(long, value_delimiter = ',', required = true)]
    pub eb: Vec<f64>,
    #[arg(long)]
    pub adaptive_eb: bool,
    #[arg(long, value_enum, default_value_t = PostArg::Off)]
    pub post: PostArg,
    #[arg(long, value_enum, default_value_t = LosslessArg::None)]
    pub lossless: LosslessArg,
    /// Tile into unit blocks of this edge and compress per level.
    #[arg(long)]
    pub block: Option<usize>,
    /// With `--block`, build a two-level ROI dataset first.
    #[arg(long, requires = "block")]
    pub percent: Option<f64>,
    #[arg(long, value_enum, default_value_t = ArrangementArg::Linear)]
    pub arrangement: ArrangementArg,
    #[arg(long, value_enum, default_value_t = PadArg::Auto)]
    pub pad: PadArg,
    /// JSON lines, one point per error bound.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// Thread count from `MRC_THREADS`, if set.
pub fn thread_limit() -> Result<Option<usize>> {
    match std::env::var("MRC_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => usage!("MRC_THREADS must be a positive integer, got {s:?}"),
        },
        Err(_) => Ok(None),
    }
}

/// Runs a parsed command on a pool sized by `MRC_THREADS`.
pub fn run(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_limit()? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    let seed = cli.seed;
    pool.install(|| match cli.command {
        Command::Roi(a) => cmd_roi(&a),
        Command::Compress(a) => cmd_compress(&a, seed),
        Command::Decompress(a) => cmd_decompress(&a),
        Command::Uncertainty(a) => cmd_uncertainty(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a, seed),
    })
}

fn require_dims(raw: &RawInput) -> Result<[usize; 3]> {
    match raw.dims {
        Some(d) => Ok(d),
        None => usage!("--dims is required for raw input"),
    }
}

fn read_container(path: &Path) -> Result<Container> {
    Container::decode(&raw::read_file(path)?)
}

fn densities(ds: &MultiResDataset) -> String {
    ds.densities()
        .iter()
        .enumerate()
        .map(|(l, d)| format!("level {l}: {:.2}%", d * 100.0))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn cmd_roi(a: &RoiArgs) -> Result<()> {
    let dims = require_dims(&a.raw)?;
    let v = raw::read_volume(&a.raw.input, dims, a.raw.dtype)?;
    let cfg = RoiConfig::new(a.block, a.percent)?;
    let mask = select_roi(&v, &cfg)?;
    let ds = build_adaptive(&v, &mask, &cfg)?;
    let roi = ds.roi().cloned().expect("adaptive datasets carry their ROI");
    let c = Container::uncompressed(&ds, a.raw.dtype.width() as u8, roi)?;
    raw::write_atomic(&a.out, &c.encode())?;
    println!(
        "{} of {} blocks selected; densities by block count: {}",
        mask.count(),
        mask.bits().len(),
        densities(&ds)
    );
    Ok(())
}

fn load_dataset(raw_in: &RawInput, block: usize) -> Result<(MultiResDataset, Container)> {
    if raw_in.dims.is_some() {
        let v = raw::read_volume(&raw_in.input, require_dims(raw_in)?, raw_in.dtype)?;
        let ds = uniform_dataset(&v, block)?;
        let roi = full_roi(v.dims(), block)?;
        let c = Container::uncompressed(&ds, raw_in.dtype.width() as u8, roi)?;
        return Ok((ds, c));
    }
    let bytes = raw::read_file(&raw_in.input)?;
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        usage!("{} is not a container; pass --dims for raw input", raw_in.input.display());
    }
    let c = Container::decode(&bytes)?;
    let ds = c.to_dataset(false)?;
    Ok((ds, c))
}

struct LevelJob<'a> {
    lc: LevelCodec,
    post: Option<IntensityFamily>,
    keep_samples: bool,
    rate: f64,
    seed: u64,
    level: &'a Level,
}

fn compress_one(job: &LevelJob, index: usize) -> Result<(LevelRecord, String)> {
    let l = job.level;
    let blob = compress_level(l, &job.lc)?;
    let mut record = LevelRecord {
        dims: l.dims,
        unit: l.unit,
        coords: l.blocks.iter().map(|b| b.coord()).collect(),
        blob,
        post: PostHeader::OFF,
        samples: Vec::new(),
    };
    let padded = record.blob.header.layout.as_ref().is_some_and(|x| x.padded);
    let mut log = format!(
        "level {index}: {} blocks of {}^3, padding {}",
        l.blocks.len(),
        l.unit,
        if padded { "applied" } else { "skipped" }
    );
    if l.blocks.is_empty() || (job.post.is_none() && !job.keep_samples) {
        return Ok((record, log));
    }
    let eb = job.lc.codec.policy.eb;
    let bs = postprocess_blocksize(job.lc.codec.codec, l.unit);
    let dec = decompress_level(&record.blob, l.dims, l.unit, l.blocks.len())?;
    let (ov, covered) = l.to_volume(0.0)?;
    let (dv, _) = dec.to_volume(0.0)?;
    let seed = job.seed.wrapping_add(index as u64);
    let plan = match plan_sampling(ov.dims(), bs, 2, job.rate, seed, Some(&covered)) {
        Ok(p) => p,
        Err(mrc_core::Error::Sampling(msg)) => {
            log.push_str(&format!(", not sampled ({msg})"));
            return Ok((record, log));
        }
        Err(e) => return Err(e.into()),
    };
    let samples = extract_samples(&plan, &ov, &dv, Some(&covered))?;
    log.push_str(&format!(", {} regions sampled ({:.2}%)", samples.len(), plan.achieved_rate * 100.0));
    if let Some(family) = job.post {
        let cfg = select_intensity(&samples, eb, bs, family)?;
        record.post = PostHeader {
            family: Some(family),
            a: cfg.chosen,
        };
        log.push_str(&format!(", post a = {:?}", cfg.chosen));
    }
    record.samples = samples
        .into_iter()
        .map(|s| SampleRegion {
            region: s.region,
            orig: s.orig.into_values(),
        })
        .collect();
    Ok((record, log))
}

fn policy(eb: f64, adaptive: bool, alpha: f64, beta: f64) -> Result<ErrorBoundPolicy> {
    let p = if adaptive {
        ErrorBoundPolicy {
            alpha,
            beta,
            ..ErrorBoundPolicy::adaptive(eb)
        }
    } else {
        ErrorBoundPolicy::uniform(eb)
    };
    p.validate()?;
    Ok(p)
}

pub fn cmd_compress(a: &CompressArgs, seed: u64) -> Result<()> {
    if !(a.sample_rate > 0.0 && a.sample_rate <= MAX_SAMPLING_RATE) {
        usage!("--sample-rate must be in (0, {MAX_SAMPLING_RATE}]");
    }
    let pol = policy(a.eb, a.adaptive_eb, a.alpha, a.beta)?;
    let (ds, input) = load_dataset(&a.raw, a.block)?;
    let lc = LevelCodec {
        codec: CodecConfig::new(a.codec.id(), pol).with_lossless(a.lossless.pass()),
        arrangement: match a.arrangement {
            ArrangementArg::Linear => Arrangement::Linear,
            ArrangementArg::Stacked => Arrangement::Stacked,
        },
        pad: match a.pad {
            PadArg::Auto => PadMode::Auto,
            PadArg::Off => PadMode::Off,
        },
    };
    let results = ds
        .levels()
        .par_iter()
        .enumerate()
        .map(|(i, level)| {
            let job = LevelJob {
                lc,
                post: a.post.family(),
                keep_samples: a.keep_samples,
                rate: a.sample_rate,
                seed,
                level,
            };
            compress_one(&job, i)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut levels = Vec::with_capacity(results.len());
    for (record, log) in results {
        eprintln!("{log}");
        levels.push(record);
    }
    let out = Container {
        scalar_width: input.scalar_width,
        roi: input.roi,
        levels,
    };
    let bytes = out.encode();
    raw::write_atomic(&a.out, &bytes)?;
    let original = ds.domain().iter().product::<usize>() * usize::from(out.scalar_width);
    println!("compression ratio: {:.4}", metrics::compression_ratio(original, bytes.len())?);
    Ok(())
}

pub fn cmd_decompress(a: &DecompressArgs) -> Result<()> {
    let c = read_container(&a.input)?;
    let ds = c.to_dataset(!a.no_post)?;
    let dtype = match a.dtype {
        Some(d) => d,
        None => Dtype::from_width(c.scalar_width)?,
    };
    let bytes = if a.uniform {
        raw::encode_values(reconstruct_uniform(&ds)?.values(), dtype)
    } else {
        Container::uncompressed(&ds, dtype.width() as u8, c.roi.clone())?.encode()
    };
    raw::write_atomic(&a.out, &bytes)?;
    println!("decompressed {} levels, domain {:?}", ds.levels().len(), ds.domain());
    Ok(())
}

/// Errors and original values over the covered core cells of every stored
/// sample region.
fn stored_sample_errors(c: &Container) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut errors = Vec::new();
    let mut values = Vec::new();
    for l in c.levels.iter().filter(|l| !l.samples.is_empty()) {
        let dec = crate::container::decode_level(l, true)?;
        let (dv, covered) = dec.to_volume(0.0)?;
        for s in &l.samples {
            let r = s.region;
            for z in 0..r.core[2] {
                for y in 0..r.core[1] {
                    for x in 0..r.core[0] {
                        let g = dv.index(r.origin[0] + x, r.origin[1] + y, r.origin[2] + z);
                        if covered[g] {
                            let o = s.orig[x + r.size[0] * (y + r.size[1] * z)];
                            errors.push(dv.values()[g] - o);
                            values.push(o);
                        }
                    }
                }
            }
        }
    }
    Ok((errors, values))
}

pub fn cmd_uncertainty(a: &UncertaintyArgs) -> Result<()> {
    let c = read_container(&a.input)?;
    let ds = c.to_dataset(true)?;
    let recon = reconstruct_uniform(&ds)?;
    let (model, source) = if let Some(sigma2) = a.sigma2 {
        (ErrorModel::new(a.mu, sigma2, a.isovalue)?, "given")
    } else if let Some(orig) = &a.orig {
        let dtype = match a.dtype {
            Some(d) => d,
            None => Dtype::from_width(c.scalar_width)?,
        };
        let ov = raw::read_volume(orig, recon.dims(), dtype)?;
        let errors = sample_errors(ov.values(), recon.values())?;
        (fit_model(&errors, ov.values(), a.isovalue, a.window)?, "original")
    } else {
        let (errors, values) = stored_sample_errors(&c)?;
        if errors.len() < 2 {
            usage!("container holds no sample regions; pass --orig or --sigma2");
        }
        (fit_model(&errors, &values, a.isovalue, a.window)?, "samples")
    };
    if model.fallback {
        eprintln!("warning: no window held two samples; fitted on all {} samples", model.n_samples);
    }
    let field = probability_field(&recon, &model)?;
    raw::write_atomic(&a.out, &raw::encode_values(&field.p, Dtype::F64))?;
    let sidecar = json!({
        "dims": field.dims,
        "dtype": "f64",
        "source": source,
        "model": model,
    });
    let mut side = a.out.clone().into_os_string();
    side.push(".json");
    raw::write_atomic(Path::new(&side), serde_json::to_string_pretty(&sidecar)?.as_bytes())?;
    println!("mu {:.6e}, sigma2 {:.6e}, {} cells", model.mu, model.sigma2, field.p.len());
    Ok(())
}

fn float_or_inf(x: f64) -> serde_json::Value {
    if x.is_infinite() {
        json!(if x > 0.0 { "inf" } else { "-inf" })
    } else {
        json!(x)
    }
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let o = raw::read_volume(&a.orig, a.dims, a.dtype)?;
    let r = raw::read_volume(&a.recon, a.dims, a.dtype)?;
    let psnr = metrics::psnr(o.values(), r.values())?;
    let ssim = if a.dims.iter().all(|&d| d >= metrics::SSIM_WINDOW) {
        Some(metrics::ssim(&o, &r)?)
    } else {
        None
    };
    let original_bytes = o.len() * a.dtype.width();
    let cr = match &a.compressed {
        Some(p) => {
            let n = std::fs::metadata(p).map_err(|e| Error::io(p, e))?.len() as usize;
            Some(metrics::compression_ratio(original_bytes, n)?)
        }
        None => None,
    };
    let report = json!({
        "psnr": float_or_inf(psnr),
        "ssim": ssim,
        "mse": metrics::mse(o.values(), r.values())?,
        "max_error": metrics::max_abs_error(o.values(), r.values())?,
        "original_bytes": original_bytes,
        "cr": cr,
    });
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match &a.out {
        Some(p) => raw::write_atomic(p, text.as_bytes())?,
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::io("stdout", e))?,
    }
    Ok(())
}

fn csv_line(p: &RateDistortionPoint) -> String {
    format!(
        "{},{},{},{},{},{},{},{}\n",
        p.eb, p.original_bytes, p.compressed_bytes, p.cr, p.bit_rate, p.psnr, p.ssim, p.max_error
    )
}

pub fn cmd_sweep(a: &SweepArgs, seed: u64) -> Result<()> {
    let dims = require_dims(&a.raw)?;
    let v = raw::read_volume(&a.raw.input, dims, a.raw.dtype)?;
    let mut opts = SweepOptions::new(a.codec.id());
    opts.adaptive = a.adaptive_eb;
    opts.lossless = a.lossless.pass();
    opts.post = a.post.family().map(|f| PostOptions::new(f, seed));
    opts.scalar_bytes = a.raw.dtype.width();
    let points = match a.block {
        None => {
            if a.codec == CodecArg::Interp && opts.post.is_some() {
                usage!("post-processing a plain interp volume needs --block");
            }
            a.eb.par_iter()
                .map(|&eb| metrics::rd_sweep(&v, &opts, &[eb]))
                .collect::<mrc_core::Result<Vec<_>>>()?
        }
        Some(b) => {
            let ds = match a.percent {
                Some(pct) => {
                    let cfg = RoiConfig::new(b, pct)?;
                    build_adaptive(&v, &select_roi(&v, &cfg)?, &cfg)?
                }
                None => uniform_dataset(&v, b)?,
            };
            let mut lc = LevelCodec::new(CodecConfig::new(a.codec.id(), ErrorBoundPolicy::uniform(1.0)));
            lc.arrangement = match a.arrangement {
                ArrangementArg::Linear => Arrangement::Linear,
                ArrangementArg::Stacked => Arrangement::Stacked,
            };
            lc.pad = match a.pad {
                PadArg::Auto => PadMode::Auto,
                PadArg::Off => PadMode::Off,
            };
            opts.level = Some(lc);
            a.eb.par_iter()
                .map(|&eb| metrics::rd_sweep_dataset(&ds, &v, &opts, &[eb]))
                .collect::<mrc_core::Result<Vec<_>>>()?
        }
    };
    let points: Vec<RateDistortionPoint> = points.into_iter().flatten().collect();
    let mut jsonl = String::new();
    for p in &points {
        jsonl.push_str(&serde_json::to_string(p)?);
        jsonl.push('\n');
    }
    raw::write_atomic(&a.out, jsonl.as_bytes())?;
    if let Some(csv) = &a.csv {
        let mut text = String::from("eb,original_bytes,compressed_bytes,cr,bit_rate,psnr,ssim,max_error\n");
        text.extend(points.iter().map(csv_line));
        raw::write_atomic(csv, text.as_bytes())?;
    }
    for w in points.windows(2) {
        if w[1].eb > w[0].eb && w[1].cr < w[0].cr {
            eprintln!("note: compression ratio dropped from eb {} to eb {}", w[0].eb, w[1].eb);
        }
    }
    println!("{} points written", points.len());
    Ok(())
}
