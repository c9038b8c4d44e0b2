use std::fs;
use std::path::Path;

use lagrisk_core::analytics::{lag_sweep_named, scatter_series, PccTable};
use lagrisk_core::ingest::{
    case_series_to_csv, grid_series_to_json, load_case_series, load_grid_series, load_region_mask, region_mask_to_json,
    GapFill, RasterFormat, RegionBundle,
};
use lagrisk_core::labels::{training_sample, LabelProtocol};
use lagrisk_core::lstm::{
    backward, compare_with_finite_differences, train, FeatureMatrix, LstmModel, SampleSet, TargetMatrix, TrainConfig,
};
use lagrisk_core::risk::{
    evaluate_scenario, export_risk_map, ExportFormat, GridSpec, RiskThresholds, Scenario, ScenarioSpec,
};
use lagrisk_core::synth::{demo_region, monotone_model};
use lagrisk_core::Error;
use lagrisk_service::{AppState, ServiceConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{CliError, Command, GapFillArg, MapFormat};

type CliResult = Result<(), CliError>;

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::format(path.display(), e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::format(dir.display(), e))?;
    }
    fs::write(path, contents).map_err(|e| Error::format(path.display(), e))
}

pub fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::Ingest {
            rasters,
            cases,
            mask,
            window_days,
            anchor,
            gap_fill,
            out,
        } => {
            let r = load_grid_series(&rasters, RasterFormat::Json)?;
            let c = load_case_series(&cases)?;
            let m = load_region_mask(&mask)?;
            let fill = match gap_fill {
                GapFillArg::None => GapFill::None,
                GapFillArg::Linear => GapFill::Linear,
            };
            let bundle = RegionBundle::build(&r, &c, &m, window_days, anchor, fill)?;
            write(&out, bundle.to_json())?;
            let (lo, hi) = bundle.pair.common_range;
            println!(
                "region {}: {} raster frames, {} case days, buckets {lo}..={hi} of {} days from {} ({} gaps)",
                bundle.region,
                r.len(),
                c.len(),
                window_days,
                bundle.anchor,
                bundle.pair.gaps().len()
            );
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Correlate {
            bundle,
            pcc_table,
            max_delay,
            min_overlap,
            window_days,
            out_dir,
        } => match (bundle, pcc_table) {
            (Some(b), None) => correlate_bundle(&b, max_delay, min_overlap, out_dir.as_deref()),
            (None, Some(t)) => correlate_table(&t, window_days, out_dir.as_deref()),
            _ => Err(CliError::Usage("give exactly one of --bundle and --pcc-table".into())),
        },
        Command::Labels {
            bundle,
            lead,
            horizon,
            source_label,
            out_samples,
            out_features,
        } => {
            let b = RegionBundle::from_json(&read(&bundle)?)?;
            let protocol = LabelProtocol {
                lead_buckets: lead,
                horizon_buckets: horizon,
                ..Default::default()
            };
            let sample = training_sample(&b.pair, &source_label, &protocol)?;
            write(
                &out_features,
                serde_json::to_string(&sample.0).expect("features serialize"),
            )?;
            println!(
                "{} steps, lead {lead} buckets, horizon {horizon} buckets",
                sample.0.n_steps()
            );
            write(&out_samples, SampleSet::from_samples(&[sample]).to_json())?;
            Ok(())
        }
        Command::Train {
            samples,
            config,
            hidden,
            learning_rate,
            epochs,
            gradient_clip,
            seed,
            model_out,
            loss_out,
        } => {
            let data = SampleSet::from_json(&read(&samples)?)?.into_samples();
            let mut cfg = match config {
                Some(p) => serde_json::from_str::<TrainConfig>(&read(&p)?).map_err(Error::from)?,
                None => TrainConfig::default(),
            };
            cfg.learning_rate = learning_rate.unwrap_or(cfg.learning_rate);
            cfg.epochs = epochs.unwrap_or(cfg.epochs);
            cfg.gradient_clip = gradient_clip.or(cfg.gradient_clip);
            cfg.seed = seed.unwrap_or(cfg.seed);
            let (x0, y0) = data
                .first()
                .ok_or_else(|| Error::Empty("sample set has no samples".into()))?;
            let init = LstmModel::init(x0.n_sources(), hidden, y0.p(), cfg.seed)?;
            let (model, record) = train(&init, &data, &cfg)?;
            write(&model_out, model.to_json())?;
            write(&loss_out, record.to_csv())?;
            println!(
                "{} samples, {} epochs: loss {:.6} -> {:.6}",
                data.len(),
                cfg.epochs,
                record.initial().unwrap_or(f64::NAN),
                record.last().unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Command::Riskmap {
            model,
            features,
            grid,
            start_date,
            step_days,
            scenario,
            t,
            format,
            low,
            medium,
            out_dir,
        } => {
            let model = LstmModel::from_json(&read(&model)?)?;
            let baseline: FeatureMatrix = serde_json::from_str(&read(&features)?).map_err(Error::from)?;
            let grid = match grid {
                Some(p) => serde_json::from_str::<GridSpec>(&read(&p)?).map_err(Error::from)?,
                None => GridSpec::strip(model.n_out(), start_date, step_days),
            };
            let spec = match scenario {
                Some(p) => ScenarioSpec::from_json(&read(&p)?)?,
                None => ScenarioSpec::default(),
            };
            let thresholds = RiskThresholds::new(low, medium)?;
            let outcome = evaluate_scenario(&model, &Scenario { baseline, spec }, &grid, thresholds)?;
            let steps: Vec<usize> = match t {
                Some(t) if t >= outcome.maps.len() => {
                    return Err(Error::OutOfRange(format!("timestep {t} outside 0..{}", outcome.maps.len())).into())
                }
                Some(t) => vec![t],
                None => (0..outcome.maps.len()).collect(),
            };
            let (fmt, ext) = match format {
                MapFormat::Json => (ExportFormat::Json, "json"),
                MapFormat::Pgm => (ExportFormat::Pgm, "pgm"),
            };
            for &s in &steps {
                write(
                    &out_dir.join(format!("risk_t{s:03}.{ext}")),
                    export_risk_map(&outcome.maps[s], fmt),
                )?;
            }
            let mut traj = String::from("step,date,mean_risk\n");
            for (s, m) in outcome.maps.iter().enumerate() {
                traj.push_str(&format!("{s},{},{}\n", m.timestamp, outcome.mean_risk[s]));
            }
            write(&out_dir.join("trajectory.csv"), traj)?;
            println!("{} map(s) written to {}", steps.len(), out_dir.display());
            for &s in &steps {
                println!(
                    "  t={s} {} mean risk {:.4}",
                    outcome.maps[s].timestamp, outcome.mean_risk[s]
                );
            }
            Ok(())
        }
        Command::Gradcheck {
            n_in,
            hidden,
            n_out,
            steps,
            seed,
            epsilon,
            tolerance,
            corrupt_gradient,
        } => {
            if !(epsilon > 0.0 && epsilon.is_finite()) {
                return Err(CliError::Usage(format!("--epsilon must be positive, got {epsilon}")));
            }
            if n_in == 0 || hidden == 0 || n_out == 0 || steps == 0 {
                return Err(CliError::Usage("dimensions and --steps must be at least 1".into()));
            }
            let model = LstmModel::init(n_in, hidden, n_out, seed)?;
            let x = FeatureMatrix::unlabeled(uniform_rows(seed, n_in, steps))?;
            let y = TargetMatrix::from_rows(uniform_rows(seed.wrapping_add(1), n_out, steps))?;
            let mut grads = backward(&model, &x, &y)?.grads;
            if corrupt_gradient {
                // double the largest-magnitude entry of the forget-gate weights
                let g = grads.tensor_mut("w_f").expect("tensor exists");
                let idx = (0..g.len())
                    .max_by(|&a, &b| g[a].abs().total_cmp(&g[b].abs()))
                    .unwrap_or(0);
                g[idx] *= 2.0;
            }
            let report = compare_with_finite_differences(&model, &x, &y, epsilon, &grads)?;
            println!(
                "max relative error {:.3e} over {} parameters (worst: {}[{}]), epsilon {epsilon:e}",
                report.max_relative_error, report.checked, report.worst_tensor, report.worst_index
            );
            if report.max_relative_error < tolerance {
                println!("PASS (tolerance {tolerance:e})");
                Ok(())
            } else {
                Err(CliError::CheckFailed(format!(
                    "gradient check failed: {:.3e} >= tolerance {tolerance:e}",
                    report.max_relative_error
                )))
            }
        }
        Command::Serve {
            listen,
            data_dir,
            max_upload_bytes,
            low,
            medium,
        } => {
            let config = ServiceConfig {
                data_dir,
                max_upload_bytes,
                thresholds: RiskThresholds::new(low, medium)?,
            };
            let state = AppState::new(config).map_err(CliError::Usage)?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Usage(format!("runtime: {e}")))?;
            rt.block_on(async move {
                let listener = lagrisk_service::bind(listen)
                    .await
                    .map_err(|e| CliError::Usage(format!("cannot listen on {listen}: {e}")))?;
                let addr = listener.local_addr().map_err(|e| CliError::Usage(e.to_string()))?;
                println!("listening on http://{addr}");
                let shutdown = async {
                    let _ = tokio::signal::ctrl_c().await;
                    println!("shutting down");
                };
                lagrisk_service::serve(listener, state, shutdown)
                    .await
                    .map_err(|e| CliError::Engine(Error::Io(e)))
            })
        }
        Command::Synth {
            out_dir,
            region,
            start,
            days,
            lag,
            seed,
        } => {
            let demo = demo_region(&region, start, days, lag, 5, seed)?;
            write(&out_dir.join("rasters.json"), grid_series_to_json(&demo.rasters))?;
            write(&out_dir.join("cases.csv"), case_series_to_csv(&demo.cases))?;
            write(&out_dir.join("mask.json"), region_mask_to_json(&demo.mask))?;
            let model = monotone_model(2, 1, 4)?;
            write(&out_dir.join("monotone_model.json"), model.to_json())?;
            let baseline = FeatureMatrix::from_rows(
                vec!["no2".into(), "mobility".into()],
                vec![
                    (0..12).map(|t| 1.0 + 0.3 * (t as f64 * 0.7).sin()).collect(),
                    (0..12).map(|t| 1.0 - 0.04 * t as f64).collect(),
                ],
            )?;
            write(
                &out_dir.join("baseline.json"),
                serde_json::to_string(&baseline).expect("features serialize"),
            )?;
            let grid = GridSpec {
                rows: 2,
                cols: 2,
                bbox: demo.rasters.bbox(),
                resolution: lagrisk_core::risk::Resolution::Micro,
                start_date: start,
                step_days: 5,
            };
            write(
                &out_dir.join("grid.json"),
                serde_json::to_string_pretty(&grid).expect("grid serializes"),
            )?;
            println!(
                "wrote demo dataset for `{region}` ({days} days, lag {lag} buckets) to {}",
                out_dir.display()
            );
            Ok(())
        }
    }
}

fn correlate_bundle(path: &Path, max_delay: usize, min_overlap: usize, out_dir: Option<&Path>) -> CliResult {
    let bundle = RegionBundle::from_json(&read(path)?)?;
    let report = lag_sweep_named(&bundle.pair, max_delay, min_overlap, &bundle.region)?;
    print!("{}", report.format_table());
    if let Some(dir) = out_dir {
        write(&dir.join("report.json"), report.to_json())?;
        for e in &report.entries {
            let s = scatter_series(&bundle.pair, e.delay_units, report.min_overlap)?;
            write(&dir.join(format!("scatter_delay_{:02}.csv", e.delay_units)), s.to_csv())?;
        }
        println!(
            "wrote report and {} scatter files to {}",
            report.entries.len(),
            dir.display()
        );
    }
    Ok(())
}

/// Table mode: CSV `delay,<region>,...`, one PCC per region per delay.
fn correlate_table(path: &Path, window_days: usize, out_dir: Option<&Path>) -> CliResult {
    let table = PccTable::parse(&read(path)?, &path.display().to_string())?;
    let summary = table.best_delays(window_days)?;
    for b in &summary {
        println!(
            "{}: best delay {} units = {} days (PCC {:.4})",
            b.region, b.best_delay_units, b.best_delay_days, b.best_pcc
        );
    }
    if let Some(dir) = out_dir {
        let doc = serde_json::json!({ "window_days": window_days, "regions": summary });
        write(
            &dir.join("best_delays.json"),
            serde_json::to_string_pretty(&doc).expect("json"),
        )?;
    }
    Ok(())
}

/// Values in `[-1, 1)` from a seeded ChaCha stream.
fn uniform_rows(seed: u64, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}
