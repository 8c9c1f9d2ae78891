//! The four commands: operate, ablate, sweep, metrics.
//!
//! File writes are atomic (write to a temp sibling, then rename), all
//! randomness flows from config seeds, and independent runs fan out
//! over a thread pool capped by `PHYSATTN_THREADS`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use physattn_core::{
    ablation_priors, adjacent_similarity, derive_params, first_order_variation, parallel_map,
    run_physics_operator, storytelling_quality, sweep_alpha, temporal_regularity, validate_pair,
    Error as CoreError, FeatureSequence, MaskSequence, MetricReport, PriorKind, RngHandle,
    RunRecord, StoryScenario,
};

use crate::config::ExperimentConfig;
use crate::csvio;
use crate::svg;
use crate::{CliError, CliResult};

/// Thread cap: `PHYSATTN_THREADS`, else the machine's parallelism.
pub fn thread_cap() -> usize {
    std::env::var("PHYSATTN_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

fn io_err(context: &str, e: std::io::Error) -> CliError {
    CliError::Io(format!("{context}: {e}"))
}

/// Write-temp-then-rename so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| io_err(&format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(&format!("renaming to {}", path.display()), e))
}

fn is_binary_container(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()) == Some("bin")
}

pub fn read_features(path: &Path) -> CliResult<FeatureSequence> {
    if is_binary_container(path) {
        let bytes = fs::read(path).map_err(|e| io_err(&format!("reading {}", path.display()), e))?;
        FeatureSequence::from_binary(&bytes)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    } else {
        let text = fs::read_to_string(path)
            .map_err(|e| io_err(&format!("reading {}", path.display()), e))?;
        FeatureSequence::from_json_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

pub fn read_masks(path: &Path) -> CliResult<MaskSequence> {
    if is_binary_container(path) {
        let bytes = fs::read(path).map_err(|e| io_err(&format!("reading {}", path.display()), e))?;
        MaskSequence::from_binary(&bytes)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    } else {
        let text = fs::read_to_string(path)
            .map_err(|e| io_err(&format!("reading {}", path.display()), e))?;
        MaskSequence::from_json_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

fn core_err(e: CoreError) -> CliError {
    match e {
        CoreError::NumericOverflow { .. } => CliError::Divergence(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

#[derive(Debug)]
pub struct OperateOutcome {
    pub output_path: PathBuf,
    pub energy_before: f64,
    pub energy_after: f64,
}

/// Runs the physics operator on file data and writes the smoothed
/// sequence next to a before/after energy report on stdout.
pub fn operate(
    features_path: &Path,
    masks_path: &Path,
    config: &ExperimentConfig,
    out_dir: &Path,
) -> CliResult<OperateOutcome> {
    let features = read_features(features_path)?;
    let masks = read_masks(masks_path)?;
    validate_pair(&features, &masks).map_err(core_err)?;

    let params = derive_params(config.alpha, config.constants).map_err(core_err)?;
    let spec = config.prior.resolve(&params, &config.schedule);
    let energy_before = features.temporal_energy();

    let mut rng = RngHandle::new(config.seeds[0], "operate");
    let rng_opt = params.noise_enabled().then_some(&mut rng);
    let smoothed = run_physics_operator(
        features,
        &masks,
        &spec,
        &params,
        &config.schedule,
        rng_opt,
    )
    .map_err(core_err)?;
    let energy_after = smoothed.temporal_energy();

    fs::create_dir_all(out_dir).map_err(|e| io_err("creating output directory", e))?;
    let (file_name, bytes) = if is_binary_container(features_path) {
        ("s_phys.bin", smoothed.to_binary())
    } else {
        ("s_phys.json", smoothed.to_json_string().into_bytes())
    };
    let output_path = out_dir.join(file_name);
    write_atomic(&output_path, &bytes)?;
    Ok(OperateOutcome {
        output_path,
        energy_before,
        energy_after,
    })
}

#[derive(Debug, Serialize)]
struct PriorAggregate {
    prior: &'static str,
    runs: usize,
    diverged: usize,
    mean_r: f64,
    mean_d: f64,
    mean_s: f64,
    mean_adjacent_cosine: f64,
}

#[derive(Debug, Serialize)]
struct AblationSummary<'a> {
    config: &'a ExperimentConfig,
    priors: Vec<PriorAggregate>,
}

#[derive(Debug)]
pub struct EmittedFiles {
    pub csv_path: PathBuf,
    pub svg_path: PathBuf,
    pub summary_path: PathBuf,
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

fn run_per_seed<F>(config: &ExperimentConfig, runner: F) -> CliResult<Vec<Vec<RunRecord>>>
where
    F: Fn(StoryScenario) -> Result<Vec<RunRecord>, CoreError> + Sync,
{
    let results = parallel_map(&config.seeds, thread_cap(), |&seed| {
        StoryScenario::from_params(&config.scenario, seed).and_then(&runner)
    });
    results
        .into_iter()
        .map(|r| r.map_err(core_err))
        .collect::<CliResult<Vec<_>>>()
}

/// One run per Table-row prior per seed; divergence lands in the CSV
/// status column instead of aborting the sweep.
pub fn ablate(config: &ExperimentConfig, out_dir: &Path) -> CliResult<EmittedFiles> {
    let params = derive_params(config.alpha, config.constants).map_err(core_err)?;
    let per_seed = run_per_seed(config, |scenario| {
        ablation_priors(
            &scenario,
            &params,
            &config.schedule,
            config.steps,
            &config.metrics,
        )
    })?;

    let mut rows = Vec::new();
    for records in &per_seed {
        for record in records {
            let mut fields = csvio::record_fields(record);
            fields.push(match record.diverged_at {
                None => "ok".to_string(),
                Some(step) => format!("diverged@{step}"),
            });
            rows.push(fields);
        }
    }
    let mut header: Vec<&str> = csvio::REPORT_HEADER.to_vec();
    header.push("status");

    let kinds = PriorKind::ALL;
    let mut aggregates = Vec::with_capacity(kinds.len());
    for (i, kind) in kinds.iter().enumerate() {
        let completed: Vec<&RunRecord> = per_seed
            .iter()
            .map(|records| &records[i])
            .filter(|r| r.diverged_at.is_none())
            .collect();
        let diverged = per_seed.len() - completed.len();
        aggregates.push(PriorAggregate {
            prior: kind.name(),
            runs: per_seed.len(),
            diverged,
            mean_r: mean(&completed.iter().map(|r| r.final_report.r).collect::<Vec<_>>()),
            mean_d: mean(&completed.iter().map(|r| r.final_report.d).collect::<Vec<_>>()),
            mean_s: mean(&completed.iter().map(|r| r.final_report.s).collect::<Vec<_>>()),
            mean_adjacent_cosine: mean(
                &completed
                    .iter()
                    .map(|r| r.final_report.adjacent_cosine)
                    .collect::<Vec<_>>(),
            ),
        });
    }

    fs::create_dir_all(out_dir).map_err(|e| io_err("creating output directory", e))?;
    let csv_path = out_dir.join("ablation.csv");
    write_atomic(&csv_path, csvio::document(&header, &rows).as_bytes())?;

    let labels: Vec<String> = kinds.iter().map(|k| k.name().to_string()).collect();
    let mean_r: Vec<f64> = aggregates.iter().map(|a| a.mean_r).collect();
    let mean_s: Vec<f64> = aggregates.iter().map(|a| a.mean_s).collect();
    let svg_path = out_dir.join("ablation.svg");
    write_atomic(
        &svg_path,
        svg::double_bar_chart(
            (
                "mean temporal regularity R (lower is better)",
                "mean storytelling quality S (higher is better)",
            ),
            &labels,
            &mean_r,
            &mean_s,
        )
        .as_bytes(),
    )?;

    let summary = AblationSummary {
        config,
        priors: aggregates,
    };
    let summary_path = out_dir.join("ablation_summary.json");
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::Io(format!("summary serialization: {e}")))?;
    write_atomic(&summary_path, text.as_bytes())?;

    Ok(EmittedFiles {
        csv_path,
        svg_path,
        summary_path,
    })
}

#[derive(Debug, Serialize)]
struct SweepPoint {
    alpha: f64,
    runs: usize,
    diverged: usize,
    mean_r: f64,
    mean_d: f64,
    mean_s: f64,
    mean_background_change: f64,
}

#[derive(Debug, Serialize)]
struct SweepSummary<'a> {
    config: &'a ExperimentConfig,
    points: Vec<SweepPoint>,
}

/// One run per alpha per seed plus a normalized trade-off plot.
pub fn sweep(config: &ExperimentConfig, out_dir: &Path) -> CliResult<EmittedFiles> {
    if config.alphas.is_empty() {
        return Err(CliError::Config("alpha grid is empty".into()));
    }
    let per_seed = run_per_seed(config, |scenario| {
        sweep_alpha(
            &scenario,
            &config.alphas,
            config.constants,
            &config.prior,
            &config.schedule,
            config.steps,
            &config.metrics,
        )
    })?;

    let mut rows = Vec::new();
    for records in &per_seed {
        for record in records {
            rows.push(csvio::record_fields(record));
        }
    }

    let mut points = Vec::with_capacity(config.alphas.len());
    for (i, &alpha) in config.alphas.iter().enumerate() {
        let arm: Vec<&RunRecord> = per_seed.iter().map(|records| &records[i]).collect();
        let completed: Vec<&&RunRecord> =
            arm.iter().filter(|r| r.diverged_at.is_none()).collect();
        points.push(SweepPoint {
            alpha,
            runs: arm.len(),
            diverged: arm.len() - completed.len(),
            mean_r: mean(&completed.iter().map(|r| r.final_report.r).collect::<Vec<_>>()),
            mean_d: mean(&completed.iter().map(|r| r.final_report.d).collect::<Vec<_>>()),
            mean_s: mean(&completed.iter().map(|r| r.final_report.s).collect::<Vec<_>>()),
            mean_background_change: mean(
                &completed
                    .iter()
                    .map(|r| r.mean_background_change)
                    .collect::<Vec<_>>(),
            ),
        });
    }

    fs::create_dir_all(out_dir).map_err(|e| io_err("creating output directory", e))?;
    let csv_path = out_dir.join("sweep.csv");
    write_atomic(
        &csv_path,
        csvio::document(&csvio::REPORT_HEADER, &rows).as_bytes(),
    )?;

    let series = vec![
        (
            "R (coherence penalty)".to_string(),
            points.iter().map(|p| p.mean_r).collect::<Vec<_>>(),
        ),
        (
            "D (dynamism)".to_string(),
            points.iter().map(|p| p.mean_d).collect::<Vec<_>>(),
        ),
        (
            "S (storytelling quality)".to_string(),
            points.iter().map(|p| p.mean_s).collect::<Vec<_>>(),
        ),
    ];
    let svg_path = out_dir.join("sweep.svg");
    write_atomic(
        &svg_path,
        svg::line_plot(
            "trade-off controller sweep",
            "alpha",
            &config.alphas,
            &series,
        )
        .as_bytes(),
    )?;

    let summary = SweepSummary { config, points };
    let summary_path = out_dir.join("sweep_summary.json");
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::Io(format!("summary serialization: {e}")))?;
    write_atomic(&summary_path, text.as_bytes())?;

    Ok(EmittedFiles {
        csv_path,
        svg_path,
        summary_path,
    })
}

/// Scores a feature file; T >= 3 required. The adjacent cosine needs
/// nonzero frame norms: with `strict_cosine` a zero-norm frame is a
/// domain error, otherwise the cosine reports as NaN (JSON null).
pub fn metrics_report(
    features_path: &Path,
    config: &ExperimentConfig,
    strict_cosine: bool,
) -> CliResult<MetricReport> {
    let features = read_features(features_path)?;
    let r = temporal_regularity(&features).map_err(core_err)?;
    let d = first_order_variation(&features).map_err(core_err)?;
    let (r_hat, d_hat, s) = storytelling_quality(r, d, &config.metrics).map_err(core_err)?;
    let adjacent_cosine = match adjacent_similarity(&features) {
        Ok(c) => c,
        Err(e) if strict_cosine => return Err(core_err(e)),
        Err(_) => f64::NAN,
    };
    Ok(MetricReport {
        t: features.frames(),
        r,
        d,
        r_hat,
        d_hat,
        s,
        adjacent_cosine,
    })
}

/// The metric report as the standard CSV document.
pub fn metrics_csv(
    features_path: &Path,
    config: &ExperimentConfig,
    strict_cosine: bool,
) -> CliResult<String> {
    let report = metrics_report(features_path, config, strict_cosine)?;
    let run_id = features_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("metrics")
        .to_string();
    let row = csvio::report_fields(
        &run_id,
        config.alpha,
        config.prior.kind.name(),
        &report,
        config.seeds[0],
    );
    Ok(csvio::document(&csvio::REPORT_HEADER, &[row]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_cap_is_at_least_one() {
        assert!(thread_cap() >= 1);
    }

    #[test]
    fn binary_detection_is_extension_based() {
        assert!(is_binary_container(Path::new("x/features.bin")));
        assert!(!is_binary_container(Path::new("x/features.json")));
    }
}
