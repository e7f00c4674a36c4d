//! The `fit`, `purify`, `analyze` and `bench` commands.
//!
//! Every command writes its artifacts under `cfg.out`, then `manifest.json`
//! (deterministic: resolved config, per-file outputs and metrics) and
//! `timing.csv` (wall-clock seconds, which naturally vary between runs).

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{Method, RunConfig};
use super::svg::histogram_svg;
use crate::baselines::{qtt_gd_reconstruct, tt_gd_reconstruct};
use crate::error::{Result, TnpError};
use crate::image::ImageGrid;
use crate::io::{quantize_8bit, read_png, write_atomic, write_png};
use crate::metrics::{
    downsample_distribution_sweep, gen_noise, perturb, Downsampler, MetricReport, NoiseSpec, PairRole,
};
use crate::putt::{FitTrace, LevelTrace};
use crate::rng::derive_seed;
use crate::tnp::{putt_reconstruct, tnp_purify, PurifyTrace};

pub const TOOL: &str = "tnp";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Fit,
    Purify,
    Analyze,
    Bench,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodMetrics {
    pub method: &'static str,
    pub metrics: Vec<MetricReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileRecord {
    /// Input path as given, or the noise kind for `analyze`.
    pub input: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair: Option<String>,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// File names relative to the output directory.
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub metrics: Vec<MetricReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub methods: Vec<MethodMetrics>,
    /// `purify` only: whether a clean reference was available, i.e. whether
    /// the ADV and REC groups are present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<bool>,
}

impl FileRecord {
    fn new(input: String, pair: Option<String>) -> Self {
        Self {
            input,
            pair,
            ok: true,
            error: None,
            outputs: Vec::new(),
            metrics: Vec::new(),
            methods: Vec::new(),
            reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Command,
    pub seed: u64,
    pub config: RunConfig,
    pub files: Vec<FileRecord>,
    /// Run-level outputs (tables), relative to the output directory.
    pub outputs: Vec<String>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub file: String,
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub manifest: RunManifest,
    pub timings: Vec<Timing>,
}

impl Outcome {
    /// True iff every input was processed without error.
    pub fn success(&self) -> bool {
        self.manifest.failures == 0
    }
}

/// Runs `command` with an already resolved configuration.
pub fn run(command: Command, cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    check_stems(cfg)?;
    if !cfg.pairs.is_empty() && !matches!(command, Command::Purify | Command::Bench) {
        return Err(TnpError::Config("pairs are only used by purify and bench".into()));
    }
    std::fs::create_dir_all(&cfg.out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| TnpError::Config(e.to_string()))?;
    let (files, outputs, timings) = pool.install(|| match command {
        Command::Fit => per_input(cfg, fit_one),
        Command::Purify => per_input(cfg, purify_one),
        Command::Analyze => analyze(cfg),
        Command::Bench => bench(cfg),
    })?;
    let failures = files.iter().filter(|f| !f.ok).count();
    let manifest = RunManifest {
        tool: TOOL,
        version: VERSION,
        command,
        seed: cfg.seed,
        config: cfg.clone(),
        files,
        outputs,
        failures,
    };
    let mut json = serde_json::to_string_pretty(&manifest).map_err(|e| TnpError::Codec(e.to_string()))?;
    json.push('\n');
    write_atomic(&cfg.out.join("manifest.json"), json.as_bytes())?;
    write_csv(&cfg.out.join("timing.csv"), &timings)?;
    Ok(Outcome { manifest, timings })
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<Outcome> {
    run(Command::Fit, cfg)
}

pub fn cmd_purify(cfg: &RunConfig) -> Result<Outcome> {
    run(Command::Purify, cfg)
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<Outcome> {
    run(Command::Analyze, cfg)
}

pub fn cmd_bench(cfg: &RunConfig) -> Result<Outcome> {
    run(Command::Bench, cfg)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

fn check_stems(cfg: &RunConfig) -> Result<()> {
    let mut seen = HashSet::new();
    for p in &cfg.inputs {
        if !seen.insert(stem(p)) {
            return Err(TnpError::Config(format!(
                "two inputs share the file stem `{}`; outputs would collide",
                stem(p)
            )));
        }
    }
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| TnpError::Codec(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| TnpError::Codec(e.to_string()))?;
    write_atomic(path, &bytes)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value).map_err(|e| TnpError::Codec(e.to_string()))?;
    json.push('\n');
    write_atomic(path, json.as_bytes())
}

type Job = fn(&RunConfig, usize, &mut FileRecord, &mut Vec<Timing>) -> Result<()>;

type Collected = (Vec<FileRecord>, Vec<String>, Vec<Timing>);

/// Runs `job` on every input in parallel; errors are recorded per file.
fn per_input(cfg: &RunConfig, job: Job) -> Result<Collected> {
    let results: Vec<(FileRecord, Vec<Timing>)> = (0..cfg.inputs.len())
        .into_par_iter()
        .map(|i| {
            let pair = cfg.pairs.get(i).map(|p| p.display().to_string());
            let mut rec = FileRecord::new(cfg.inputs[i].display().to_string(), pair);
            let mut timings = Vec::new();
            if let Err(e) = job(cfg, i, &mut rec, &mut timings) {
                rec.ok = false;
                rec.error = Some(e.to_string());
            }
            (rec, timings)
        })
        .collect();
    let mut files = Vec::with_capacity(results.len());
    let mut timings = Vec::new();
    for (f, t) in results {
        files.push(f);
        timings.extend(t);
    }
    Ok((files, Vec::new(), timings))
}

#[derive(Serialize)]
struct TraceRow {
    stage: String,
    resolution: usize,
    iteration: usize,
    loss: f64,
}

fn level_of(levels: &[LevelTrace], t: usize) -> usize {
    levels
        .iter()
        .find(|l| t >= l.first_iter && t < l.first_iter + l.iterations)
        .or(levels.last())
        .map_or(0, |l| l.resolution)
}

fn fit_rows(stage: &str, trace: &FitTrace) -> Vec<TraceRow> {
    trace
        .losses
        .iter()
        .enumerate()
        .map(|(i, &loss)| TraceRow {
            stage: stage.into(),
            resolution: level_of(&trace.levels, i + 1),
            iteration: i + 1,
            loss,
        })
        .collect()
}

fn purify_rows(trace: &PurifyTrace) -> Vec<TraceRow> {
    let mut rows = fit_rows("fit", &trace.fit);
    for s in &trace.stages {
        rows.extend(s.losses.iter().enumerate().map(|(i, &loss)| TraceRow {
            stage: "adversarial".into(),
            resolution: s.resolution,
            iteration: i + 1,
            loss,
        }));
    }
    rows
}

fn level_timings<'a>(file: &str, prefix: &str, levels: &'a [LevelTrace]) -> impl Iterator<Item = Timing> + 'a {
    let file = file.to_string();
    let prefix = prefix.to_string();
    levels.iter().map(move |l| Timing {
        file: file.clone(),
        stage: format!("{prefix}-level-{}", l.resolution),
        seconds: l.seconds,
    })
}

fn fit_one(cfg: &RunConfig, i: usize, rec: &mut FileRecord, timings: &mut Vec<Timing>) -> Result<()> {
    let input = &cfg.inputs[i];
    let name = stem(input);
    let img = read_png(input)?;
    let start = Instant::now();
    let (out, _, trace) = putt_reconstruct(&img, &cfg.fit)?;
    timings.push(Timing {
        file: rec.input.clone(),
        stage: "fit".into(),
        seconds: start.elapsed().as_secs_f64(),
    });
    timings.extend(level_timings(&rec.input, "fit", &trace.levels));
    let out = quantize_8bit(&out);
    let png = format!("{name}.png");
    write_png(&cfg.out.join(&png), &out)?;
    rec.metrics = vec![MetricReport::compute(PairRole::Cln, &img, &out)?];
    let metrics = format!("{name}.metrics.json");
    write_json(&cfg.out.join(&metrics), &rec.metrics)?;
    let trace_csv = format!("{name}.trace.csv");
    write_csv(&cfg.out.join(&trace_csv), &fit_rows("fit", &trace))?;
    rec.outputs = vec![png, metrics, trace_csv];
    Ok(())
}

fn purify_timed(
    cfg: &RunConfig,
    img: &ImageGrid,
    file: &str,
    timings: &mut Vec<Timing>,
) -> Result<(ImageGrid, PurifyTrace)> {
    let start = Instant::now();
    let p = tnp_purify(img, &cfg.purify)?;
    timings.push(Timing {
        file: file.into(),
        stage: "purify".into(),
        seconds: start.elapsed().as_secs_f64(),
    });
    timings.push(Timing {
        file: file.into(),
        stage: "purify-fit".into(),
        seconds: p.trace.fit_seconds,
    });
    for s in &p.trace.stages {
        timings.push(Timing {
            file: file.into(),
            stage: format!("purify-stage-{}", s.resolution),
            seconds: s.seconds,
        });
    }
    Ok((quantize_8bit(&p.image), p.trace))
}

fn purify_one(cfg: &RunConfig, i: usize, rec: &mut FileRecord, timings: &mut Vec<Timing>) -> Result<()> {
    let input = &cfg.inputs[i];
    let name = stem(input);
    let img = read_png(input)?;
    let (out, trace) = purify_timed(cfg, &img, &rec.input, timings)?;
    let png = format!("{name}.png");
    write_png(&cfg.out.join(&png), &out)?;
    let trace_csv = format!("{name}.trace.csv");
    write_csv(&cfg.out.join(&trace_csv), &purify_rows(&trace))?;
    let mut outputs = vec![png, trace_csv];
    match cfg.pairs.get(i) {
        Some(clean_path) => {
            let clean = read_png(clean_path)?;
            let (clean_out, _) = purify_timed(cfg, &clean, &clean_path.display().to_string(), timings)?;
            let clean_png = format!("{name}.clean.png");
            write_png(&cfg.out.join(&clean_png), &clean_out)?;
            outputs.push(clean_png);
            rec.metrics = vec![
                MetricReport::compute(PairRole::Cln, &clean, &clean_out)?,
                MetricReport::compute(PairRole::Adv, &img, &out)?,
                MetricReport::compute(PairRole::Rec, &clean_out, &out)?,
            ];
            rec.reference = Some(true);
        }
        None => {
            rec.metrics = vec![MetricReport::compute(PairRole::Cln, &img, &out)?];
            rec.reference = Some(false);
        }
    }
    let metrics = format!("{name}.metrics.json");
    write_json(&cfg.out.join(&metrics), &rec.metrics)?;
    outputs.push(metrics);
    rec.outputs = outputs;
    Ok(())
}

#[derive(Serialize)]
struct KlRow {
    kind: &'static str,
    method: &'static str,
    level: usize,
    samples: usize,
    mean: f64,
    std: f64,
    kl: f64,
}

fn analyze(cfg: &RunConfig) -> Result<Collected> {
    let a = &cfg.analyze;
    let results: Vec<(FileRecord, Vec<KlRow>, Vec<Timing>)> = a
        .kinds
        .par_iter()
        .map(|&kind| {
            let mut rec = FileRecord::new(kind.as_str().into(), None);
            let mut rows = Vec::new();
            let mut timings = Vec::new();
            let mut job = || -> Result<()> {
                let start = Instant::now();
                let spec = NoiseSpec {
                    kind,
                    match_snr: a.match_snr,
                    eps: a.eps,
                    seed: cfg.seed,
                };
                let field = gen_noise(&spec, a.size, a.size, 1)?;
                for method in [Downsampler::AvgPool, Downsampler::Stride] {
                    for s in downsample_distribution_sweep(&field, a.levels, method, a.bins)? {
                        if a.histograms {
                            let file = format!("hist_{}_{}_L{}.svg", kind.as_str(), method.as_str(), s.level);
                            let title = format!(
                                "{} / {} / level {}: KL {:.4}",
                                kind.as_str(),
                                method.as_str(),
                                s.level,
                                s.kl
                            );
                            write_atomic(&cfg.out.join(&file), histogram_svg(&s.histogram, &title).as_bytes())?;
                            rec.outputs.push(file);
                        }
                        rows.push(KlRow {
                            kind: kind.as_str(),
                            method: method.as_str(),
                            level: s.level,
                            samples: s.samples,
                            mean: s.histogram.mean,
                            std: s.histogram.std,
                            kl: s.kl,
                        });
                    }
                }
                timings.push(Timing {
                    file: kind.as_str().into(),
                    stage: "analyze".into(),
                    seconds: start.elapsed().as_secs_f64(),
                });
                Ok(())
            };
            if let Err(e) = job() {
                rec.ok = false;
                rec.error = Some(e.to_string());
            }
            (rec, rows, timings)
        })
        .collect();
    let mut files = Vec::new();
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for (f, r, t) in results {
        files.push(f);
        rows.extend(r);
        timings.extend(t);
    }
    write_csv(&cfg.out.join("kl.csv"), &rows)?;
    Ok((files, vec!["kl.csv".into()], timings))
}

/// Reconstruction of `img` by `method` at the input's size, clamped.
pub fn reconstruct(method: Method, img: &ImageGrid, cfg: &RunConfig) -> Result<ImageGrid> {
    Ok(match method {
        Method::TtGd => tt_gd_reconstruct(img, &cfg.fit)?.0,
        Method::QttGd => qtt_gd_reconstruct(img, &cfg.fit)?.0,
        Method::Putt => putt_reconstruct(img, &cfg.fit)?.0,
        Method::Tnp => tnp_purify(img, &cfg.purify)?.image,
    })
}

/// Perturbed counterpart of the `index`-th clean input.
pub fn bench_perturbed(cfg: &RunConfig, index: usize, clean: &ImageGrid) -> Result<ImageGrid> {
    let spec = NoiseSpec {
        kind: cfg.bench.noise,
        match_snr: cfg.bench.match_snr,
        eps: cfg.bench.eps,
        seed: derive_seed(cfg.seed, index as u64),
    };
    let noise = gen_noise(&spec, clean.height(), clean.width(), clean.channels())?;
    perturb(clean, &noise)
}

/// The CLN, ADV and REC reports for one method on one pair.
pub fn bench_pair(method: Method, clean: &ImageGrid, adv: &ImageGrid, cfg: &RunConfig) -> Result<Vec<MetricReport>> {
    let rc = reconstruct(method, clean, cfg)?;
    let ra = reconstruct(method, adv, cfg)?;
    Ok(vec![
        MetricReport::compute(PairRole::Cln, clean, &rc)?,
        MetricReport::compute(PairRole::Adv, adv, &ra)?,
        MetricReport::compute(PairRole::Rec, &rc, &ra)?,
    ])
}

#[derive(Serialize)]
struct BenchRow {
    image: String,
    method: &'static str,
    cln_nrmse: f64,
    cln_ssim: f64,
    cln_psnr: f64,
    adv_nrmse: f64,
    adv_ssim: f64,
    adv_psnr: f64,
    rec_nrmse: f64,
    rec_ssim: f64,
    rec_psnr: f64,
}

impl BenchRow {
    fn new(image: String, method: &'static str, m: &[MetricReport]) -> Self {
        Self {
            image,
            method,
            cln_nrmse: m[0].nrmse,
            cln_ssim: m[0].ssim,
            cln_psnr: m[0].psnr,
            adv_nrmse: m[1].nrmse,
            adv_ssim: m[1].ssim,
            adv_psnr: m[1].psnr,
            rec_nrmse: m[2].nrmse,
            rec_ssim: m[2].ssim,
            rec_psnr: m[2].psnr,
        }
    }
}

fn bench_one(cfg: &RunConfig, i: usize, rec: &mut FileRecord, timings: &mut Vec<Timing>) -> Result<()> {
    let clean = read_png(&cfg.inputs[i])?;
    let adv = match cfg.pairs.get(i) {
        Some(p) => {
            let adv = read_png(p)?;
            clean.check_same_shape(&adv)?;
            adv
        }
        None => bench_perturbed(cfg, i, &clean)?,
    };
    for &method in &cfg.bench.methods {
        let start = Instant::now();
        let metrics = bench_pair(method, &clean, &adv, cfg)?;
        timings.push(Timing {
            file: rec.input.clone(),
            stage: method.label().into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        rec.methods.push(MethodMetrics {
            method: method.label(),
            metrics,
        });
    }
    Ok(())
}

fn bench(cfg: &RunConfig) -> Result<Collected> {
    let (files, _, timings) = per_input(cfg, bench_one)?;
    let mut per_image = Vec::new();
    let mut sums: BTreeMap<usize, (usize, [f64; 9])> = BTreeMap::new();
    for f in files.iter().filter(|f| f.ok) {
        for m in &f.methods {
            per_image.push(BenchRow::new(f.input.clone(), m.method, &m.metrics));
            let pos = cfg
                .bench
                .methods
                .iter()
                .position(|x| x.label() == m.method)
                .expect("configured");
            let entry = sums.entry(pos).or_insert((0, [0.0; 9]));
            entry.0 += 1;
            for (k, r) in m.metrics.iter().enumerate() {
                entry.1[3 * k] += r.nrmse;
                entry.1[3 * k + 1] += r.ssim;
                entry.1[3 * k + 2] += r.psnr;
            }
        }
    }
    let table: Vec<BenchRow> = sums
        .into_iter()
        .map(|(pos, (n, s))| {
            let mean: Vec<f64> = s.iter().map(|v| v / n as f64).collect();
            let as_reports: Vec<MetricReport> = [PairRole::Cln, PairRole::Adv, PairRole::Rec]
                .iter()
                .enumerate()
                .map(|(k, &role)| MetricReport {
                    role,
                    nrmse: mean[3 * k],
                    ssim: mean[3 * k + 1],
                    psnr: mean[3 * k + 2],
                })
                .collect();
            BenchRow::new(format!("mean of {n}"), cfg.bench.methods[pos].label(), &as_reports)
        })
        .collect();
    write_csv(&cfg.out.join("bench.csv"), &table)?;
    write_csv(&cfg.out.join("bench_images.csv"), &per_image)?;
    Ok((files, vec!["bench.csv".into(), "bench_images.csv".into()], timings))
}

pub fn manifest_path(cfg: &RunConfig) -> PathBuf {
    cfg.out.join("manifest.json")
}
