use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::dataio::{read_dataset, synth_dataset, Dataset, SynthConfig, VideoRecord};
use crate::diffcore::Tape;
use crate::error::{Error, Result};
use crate::gnn::{load_checkpoint, save_checkpoint, ModelParams};
use crate::metrics::{evaluate_video, EvalReport, VideoEval};
use crate::summarize::{make_summary, upsample_scores, SummaryExport};
use crate::tgraph::{build_graph, Direction};
use crate::train::{cross_validate, evaluate_model, make_splits, predict_logits, split_records, CrossValSummary, Split};

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

/// Runs `f` on a dedicated one-thread pool, so nothing inside fans out.
pub fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| Error::config("dataset", "no dataset manifest given (use --dataset)"))?;
    read_dataset(path)
}

pub fn split_dir(out_dir: &Path, split: usize) -> PathBuf {
    out_dir.join(format!("split_{}", split + 1))
}

/// One row per split plus a `MEAN` row.
fn split_table(reports: &[&EvalReport], summary: &CrossValSummary) -> String {
    let mut out = String::from("split,tau,rho,f1\n");
    for (i, r) in reports.iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{}", i + 1, fmt_opt(r.tau_mean), fmt_opt(r.rho_mean), fmt_opt(r.f1_aggregate));
    }
    let _ = writeln!(out, "MEAN,{},{},{}", fmt_opt(summary.tau), fmt_opt(summary.rho), fmt_opt(summary.f1));
    out
}

/// Writes a synthetic dataset manifest (and its binary) to `output`.
pub fn cmd_synth(output: &Path, videos: usize, frames: (usize, usize), seed: u64, synth: &SynthConfig) -> Result<Dataset> {
    let data = synth_dataset(videos, frames, seed, synth)?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    crate::dataio::write_dataset(&data, output)?;
    Ok(data)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitRecord {
    pub split: usize,
    pub best_epoch: usize,
    pub report: EvalReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub dataset: String,
    pub summary: CrossValSummary,
    pub splits: Vec<SplitRecord>,
}

/// Trains every split and writes, under `out_dir`: `splits.json`, and per
/// split `split_<i>/model.{json,bin}`, `history.csv` and `eval.csv`; then
/// `train_report.{json,csv}` over all splits.
pub fn cmd_train(cfg: &RunConfig, dataset: &Dataset) -> Result<TrainReport> {
    let splits = make_splits(&dataset.ids(), cfg.splits, cfg.train.seed)?;
    write_file(&cfg.out_dir.join("splits.json"), &serde_json::to_string_pretty(&splits)?)?;
    let f1_mode = cfg.f1_mode_for(&dataset.name);
    let results = cross_validate(dataset, &splits, &cfg.train, cfg.correlation_mode, f1_mode)?;
    let mut records = Vec::with_capacity(results.len());
    for r in results {
        let dir = split_dir(&cfg.out_dir, r.split);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        save_checkpoint(&r.outcome.params, &dir.join("model.json"), cfg.checkpoint_dtype)?;
        write_file(&dir.join("history.csv"), &r.outcome.history_csv())?;
        write_file(&dir.join("eval.csv"), &r.report.to_csv())?;
        records.push(SplitRecord {
            split: r.split + 1,
            best_epoch: r.outcome.best_epoch,
            report: r.report,
        });
    }
    let summary = CrossValSummary::from_reports(records.iter().map(|r| &r.report));
    let report = TrainReport {
        dataset: dataset.name.clone(),
        summary,
        splits: records,
    };
    let reports: Vec<&EvalReport> = report.splits.iter().map(|s| &s.report).collect();
    write_file(&cfg.out_dir.join("train_report.csv"), &split_table(&reports, &report.summary))?;
    write_file(&cfg.out_dir.join("train_report.json"), &serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

/// Where per-frame predictions come from during evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PredictionSource {
    /// Trained per-split checkpoints.
    Model,
    /// The ground-truth scores themselves (upper bound).
    Gt,
    /// Uniform random scores (chance level).
    Random,
}

impl PredictionSource {
    pub fn name(self) -> &'static str {
        match self {
            PredictionSource::Model => "model",
            PredictionSource::Gt => "gt",
            PredictionSource::Random => "random",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub source: PredictionSource,
    pub dataset: String,
    pub summary: CrossValSummary,
    pub splits: Vec<EvalReport>,
}

fn uniform_scores(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen::<f64>()).collect()
}

/// Scores the validation videos of each split. Model checkpoints and the
/// split file are read from `run_dir`; the other sources regenerate the
/// splits from the seed. Random scores for split `i` are drawn from
/// `seed + i`, one stream per video in split order.
pub fn cmd_eval(cfg: &RunConfig, dataset: &Dataset, source: PredictionSource, run_dir: &Path) -> Result<EvalOutcome> {
    let f1_mode = cfg.f1_mode_for(&dataset.name);
    let splits: Vec<Split> = match source {
        PredictionSource::Model => {
            let path = run_dir.join("splits.json");
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            serde_json::from_str(&text)?
        }
        _ => make_splits(&dataset.ids(), cfg.splits, cfg.train.seed)?,
    };
    let mut reports = Vec::with_capacity(splits.len());
    for (i, split) in splits.iter().enumerate() {
        let val = split_records(dataset, &split.val_video_ids)?;
        let report = match source {
            PredictionSource::Model => {
                let params = load_checkpoint(&split_dir(run_dir, i).join("model.json"))?;
                evaluate_model(&params, &val, cfg.correlation_mode, f1_mode, &cfg.train)?
            }
            PredictionSource::Gt | PredictionSource::Random => {
                let videos = val
                    .par_iter()
                    .enumerate()
                    .map(|(j, rec)| {
                        let pred = if source == PredictionSource::Gt {
                            rec.gtscore.clone()
                        } else {
                            let seed = cfg.train.seed.wrapping_add(i as u64).wrapping_mul(1_000_003).wrapping_add(j as u64);
                            uniform_scores(rec.n_sampled(), seed)
                        };
                        evaluate_video(rec, &pred, &pred, cfg.correlation_mode, f1_mode, &cfg.train.summary)
                    })
                    .collect::<Result<Vec<_>>>()?;
                EvalReport::from_videos(videos, cfg.correlation_mode, f1_mode)
            }
        };
        reports.push(report);
    }
    let summary = CrossValSummary::from_reports(&reports);
    let outcome = EvalOutcome {
        source,
        dataset: dataset.name.clone(),
        summary,
        splits: reports,
    };
    let stem = format!("eval_{}", source.name());
    let refs: Vec<&EvalReport> = outcome.splits.iter().collect();
    write_file(&cfg.out_dir.join(format!("{stem}.csv")), &split_table(&refs, &outcome.summary))?;
    write_file(&cfg.out_dir.join(format!("{stem}.json")), &serde_json::to_string_pretty(&outcome)?)?;
    Ok(outcome)
}

/// A result row laid out like the paper's comparison table.
pub fn table_row(method: &str, dataset: &str, s: &CrossValSummary) -> String {
    let cell = |v: Option<f64>, p: usize| v.map_or_else(|| "-".to_string(), |x| format!("{x:.p$}"));
    format!(
        "{:<12} {:<12} {:>7} {:>7} {:>7}\n{:<12} {:<12} {:>7} {:>7} {:>7}",
        "method",
        "dataset",
        "F1",
        "tau",
        "rho",
        method,
        dataset,
        cell(s.f1, 2),
        cell(s.tau, 3),
        cell(s.rho, 3)
    )
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SummarizeReport {
    pub summary: SummaryExport,
    pub ground_truth: SummaryExport,
    pub scores: VideoEval,
}

/// Scores one video with a checkpoint and writes `summary_<id>.json` plus a
/// per-original-frame `summary_<id>.csv`
/// (`frame,score,selected,gt_score,gt_selected`).
pub fn cmd_summarize(cfg: &RunConfig, dataset: &Dataset, checkpoint: &Path, video_id: &str) -> Result<SummarizeReport> {
    let rec = dataset
        .get(video_id)
        .ok_or_else(|| Error::config("video", format!("no video `{video_id}` in dataset `{}`", dataset.name)))?;
    let params = load_checkpoint(checkpoint)?;
    let logits = predict_logits(&params, rec)?;
    let probs: Vec<f64> = logits.iter().map(|&z| 1.0 / (1.0 + (-z).exp())).collect();
    let f1_mode = cfg.f1_mode_for(&dataset.name);
    let scores = evaluate_video(rec, &logits, &probs, cfg.correlation_mode, f1_mode, &cfg.train.summary)?;
    let pred = make_summary(rec, &probs, &cfg.train.summary)?;
    let gt = make_summary(rec, &rec.gtscore, &cfg.train.summary)?;

    let n = rec.n_frames_original;
    let up_pred = upsample_scores(&probs, &rec.picks, n)?;
    let up_gt = upsample_scores(&rec.gtscore, &rec.picks, n)?;
    let mut csv = String::from("frame,score,selected,gt_score,gt_selected\n");
    for f in 0..n {
        let _ = writeln!(csv, "{f},{},{},{},{}", up_pred[f], pred.mask[f] as u8, up_gt[f], gt.mask[f] as u8);
    }
    let report = SummarizeReport {
        summary: SummaryExport::new(video_id, &pred, &rec.segments),
        ground_truth: SummaryExport::new(video_id, &gt, &rec.segments),
        scores,
    };
    write_file(&cfg.out_dir.join(format!("summary_{video_id}.csv")), &csv)?;
    write_file(&cfg.out_dir.join(format!("summary_{video_id}.json")), &serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub window: i64,
    pub learning_rate: f64,
    /// Split-level validation tau of every run (splits x repeats).
    pub taus: Vec<f64>,
    pub tau_mean: Option<f64>,
    /// Sample standard deviation; undefined for fewer than two runs.
    pub tau_std: Option<f64>,
}

impl SweepCell {
    fn new(window: i64, learning_rate: f64, taus: Vec<f64>) -> Self {
        let n = taus.len() as f64;
        let mean = (!taus.is_empty()).then(|| taus.iter().sum::<f64>() / n);
        let std = mean
            .filter(|_| taus.len() > 1)
            .map(|m| (taus.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        SweepCell {
            window,
            learning_rate,
            taus,
            tau_mean: mean,
            tau_std: std,
        }
    }
}

pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from("window,learning_rate,runs,tau_mean,tau_std\n");
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            c.window,
            c.learning_rate,
            c.taus.len(),
            fmt_opt(c.tau_mean),
            fmt_opt(c.tau_std)
        );
    }
    out
}

/// Cross-validates every (window, learning rate) pair `repeats` times on
/// the same splits. Repeat `r` trains split `i` with seed
/// `seed + r * splits + i`. Cells run in parallel and are reported in grid
/// order (windows outer, rates inner).
pub fn cmd_sweep(cfg: &RunConfig, dataset: &Dataset) -> Result<Vec<SweepCell>> {
    let splits = make_splits(&dataset.ids(), cfg.splits, cfg.train.seed)?;
    let f1_mode = cfg.f1_mode_for(&dataset.name);
    let grid: Vec<(i64, f64)> = cfg
        .sweep
        .windows
        .iter()
        .flat_map(|&t| cfg.sweep.learning_rates.iter().map(move |&lr| (t, lr)))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|c| (0..cfg.sweep.repeats).map(move |r| (c, r))).collect();
    let taus = jobs
        .par_iter()
        .map(|&(c, r)| {
            let (window, lr) = grid[c];
            let mut train = cfg.train.clone();
            train.model.window = window;
            train.learning_rate = lr;
            train.seed = cfg.train.seed.wrapping_add((r * cfg.splits) as u64);
            let results = cross_validate(dataset, &splits, &train, cfg.correlation_mode, f1_mode)?;
            log::info!("sweep T={window} lr={lr} repeat {}: done", r + 1);
            Ok(results.iter().filter_map(|s| s.report.tau_mean).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<SweepCell> = grid
        .iter()
        .enumerate()
        .map(|(c, &(t, lr))| {
            let all: Vec<f64> = jobs
                .iter()
                .zip(&taus)
                .filter(|((jc, _), _)| *jc == c)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            SweepCell::new(t, lr, all)
        })
        .collect();
    write_file(&cfg.out_dir.join("sweep.csv"), &sweep_csv(&cells))?;
    write_file(&cfg.out_dir.join("sweep.json"), &serde_json::to_string_pretty(&cells)?)?;
    Ok(cells)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub parameters: usize,
    /// Parameter memory at 4 bytes per value, in MB (1e6 bytes).
    pub parameter_mb: f64,
    pub videos: usize,
    pub frames_mean: f64,
    /// Graph construction plus forward pass, averaged over runs and videos.
    pub inference_ms_mean: f64,
    /// Largest forward-pass working set (all recorded tape values, features
    /// included), in MB.
    pub peak_tape_mb: f64,
}

/// Times inference with dropout off: `repeats` timed runs per video after
/// one warm-up run. Call inside [`single_threaded`] for comparable numbers.
pub fn profile_model(params: &ModelParams, records: &[&VideoRecord], repeats: usize) -> Result<ProfileReport> {
    if records.is_empty() || repeats == 0 {
        return Err(Error::Contract("profiling needs at least one video and one repeat".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut total_ms = 0.0;
    let mut peak = 0usize;
    for rec in records {
        for run in 0..=repeats {
            let start = Instant::now();
            let graph = build_graph(rec.n_sampled(), params.config().window, None)?;
            let mut tape = Tape::new();
            let x = tape.constant(rec.features.clone());
            let z = params.forward_streams(&mut tape, x, &graph, &Direction::ALL, false, &mut rng)?;
            std::hint::black_box(tape.value(z));
            let elapsed = start.elapsed().as_secs_f64() * 1e3;
            if run > 0 {
                total_ms += elapsed;
            }
            peak = peak.max(tape.allocated_bytes());
        }
    }
    Ok(ProfileReport {
        parameters: params.num_values(),
        parameter_mb: params.memory_bytes(4) as f64 / 1e6,
        videos: records.len(),
        frames_mean: records.iter().map(|r| r.n_sampled()).sum::<usize>() as f64 / records.len() as f64,
        inference_ms_mean: total_ms / (repeats * records.len()) as f64,
        peak_tape_mb: peak as f64 / 1e6,
    })
}

/// Profiles a checkpoint (or a fresh model from the config) single-threaded
/// on the first split's validation videos, or on one synthetic video of
/// `frames` frames when no dataset is given. Writes `profile.json`.
pub fn cmd_profile(
    cfg: &RunConfig,
    dataset: Option<&Dataset>,
    checkpoint: Option<&Path>,
    frames: usize,
    repeats: usize,
) -> Result<ProfileReport> {
    let params = match checkpoint {
        Some(p) => load_checkpoint(p)?,
        None => ModelParams::init(&cfg.train.model, &mut ChaCha8Rng::seed_from_u64(cfg.train.seed))?,
    };
    let synthetic;
    let records: Vec<&VideoRecord> = match dataset {
        Some(d) => {
            let split = make_splits(&d.ids(), cfg.splits, cfg.train.seed)?.remove(0);
            split_records(d, &split.val_video_ids)?
        }
        None => {
            let synth = SynthConfig {
                feature_dim: params.config().input_dim,
                ..SynthConfig::default()
            };
            synthetic = synth_dataset(1, (frames, frames), cfg.train.seed, &synth)?;
            synthetic.videos.iter().collect()
        }
    };
    let report = single_threaded(|| profile_model(&params, &records, repeats))??;
    write_file(&cfg.out_dir.join("profile.json"), &serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_cell_statistics() {
        let c = SweepCell::new(5, 0.002, vec![0.1, 0.3]);
        assert!((c.tau_mean.unwrap() - 0.2).abs() < 1e-15);
        assert!((c.tau_std.unwrap() - 0.02f64.sqrt()).abs() < 1e-15);
        let one = SweepCell::new(5, 0.002, vec![0.4]);
        assert_eq!((one.tau_mean, one.tau_std), (Some(0.4), None));
        let csv = sweep_csv(&[one]);
        assert_eq!(csv, "window,learning_rate,runs,tau_mean,tau_std\n5,0.002,1,0.400000,\n");
    }

    #[test]
    fn table_row_layout() {
        let s = CrossValSummary {
            splits: 5,
            tau: Some(0.3),
            rho: None,
            f1: Some(58.2),
        };
        let row = table_row("model", "tvsum", &s);
        let last = row.lines().nth(1).unwrap();
        assert!(last.contains("58.20") && last.contains("0.300") && last.trim_end().ends_with('-'));
    }
}
