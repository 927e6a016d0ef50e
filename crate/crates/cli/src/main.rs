//! Command-line front end: tracking over MOT-format files, scenario
//! simulation, evaluation, occlusion-map loss checks, and a built-in
//! self-test.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or configuration
//! errors.

use std::path::{Path, PathBuf};
use std::str::FromStr as _;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dualtrack::association::{AssociationParams, Stage2Embedding, Tracker};
use dualtrack::config::RunConfig;
use dualtrack::io;
use dualtrack::metrics::{accumulate, stratify_by_visibility, EvalFrame, HypBox, VisibilityBand};
use dualtrack::occlusion::occlusion_loss;
use dualtrack::simulator::{adversarial_crossing, generate, Scenario};
use dualtrack::Error;

#[derive(Parser)]
#[command(name = "dualtrack", version, about = "Occlusion-aware multi-object tracking engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the tracker over a MOT detection file.
    Track {
        /// Detection file (frame,id,left,top,w,h,conf[,x,y,z[,score]]).
        #[arg(long)]
        dets: PathBuf,
        /// Binary embedding sidecar; without it a fixed unit embedding is
        /// used and association degrades to motion + IOU.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// key = value configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output results file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Materialize a scenario into MOT-format files.
    Simulate {
        /// Scenario file (TOML).
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dets: PathBuf,
        #[arg(long)]
        out_gt: PathBuf,
        /// Also write the embedding sidecar.
        #[arg(long)]
        out_embeddings: Option<PathBuf>,
    },
    /// Score a results file against ground truth.
    Evaluate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        results: PathBuf,
        /// Visibility bands like "0:0.5,0.5:1" for stratified errors.
        #[arg(long)]
        bands: Option<String>,
        /// IOU matching threshold.
        #[arg(long, default_value_t = 0.5)]
        iou_threshold: f64,
        /// Emit machine-readable JSON instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// L1 loss between two serialized occlusion maps at ground-truth
    /// positive cells.
    Occmap {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
    },
    /// Run the crossing gauntlet end to end and print the acceptance deltas.
    Selftest,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn read_to_string(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Track {
            dets,
            embeddings,
            config,
            out,
        } => {
            let cfg = match config {
                Some(path) => RunConfig::from_str(&read_to_string(&path)?)?,
                None => RunConfig::default(),
            };
            let sidecar = match embeddings {
                Some(path) => {
                    let bytes = std::fs::read(&path)
                        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
                    Some(io::EmbeddingSidecar::from_bytes(&bytes)?)
                }
                None => None,
            };
            let text = read_to_string(&dets)?;
            let frames =
                io::parse_detections(&text, sidecar.as_ref(), &cfg.detection_parse_options())?;
            let histories = Tracker::track_sequence(&frames, cfg.association_params())?;
            std::fs::write(&out, io::write_results(&histories))?;
            eprintln!(
                "tracked {} frame(s), {} confirmed track(s) -> {}",
                frames.len(),
                histories.len(),
                out.display()
            );
            Ok(())
        }
        Command::Simulate {
            scenario,
            seed,
            out_dets,
            out_gt,
            out_embeddings,
        } => {
            let mut sc = Scenario::from_toml_str(&read_to_string(&scenario)?)?;
            if let Some(seed) = seed {
                sc.seed = seed;
            }
            let (obs, gt) = generate(&sc)?;
            std::fs::write(&out_dets, io::write_detections(&obs))?;
            std::fs::write(&out_gt, io::write_ground_truth(&gt))?;
            if let Some(path) = out_embeddings {
                let sidecar = io::EmbeddingSidecar::from_observations(&obs)?;
                std::fs::write(&path, sidecar.to_bytes())?;
            }
            eprintln!(
                "simulated {} frame(s), {} agent(s)",
                sc.duration,
                sc.agents.len()
            );
            Ok(())
        }
        Command::Evaluate {
            gt,
            results,
            bands,
            iou_threshold,
            json,
        } => {
            let gt_frames = io::parse_ground_truth(&read_to_string(&gt)?)?;
            let hyp = io::parse_results(&read_to_string(&results)?)?;
            let frames = io::join_eval_frames(&gt_frames, &hyp)?;
            let report = accumulate(&frames, iou_threshold)?;
            let band_reports = match &bands {
                Some(spec) => {
                    let parsed = parse_bands(spec)?;
                    Some(stratify_by_visibility(&frames, &parsed, iou_threshold)?)
                }
                None => None,
            };
            if json {
                print_json(&report, band_reports.as_deref());
            } else {
                print_table(&report, band_reports.as_deref());
            }
            Ok(())
        }
        Command::Occmap { gt, pred } => {
            let gt_map = io::read_occlusion_map(&read_to_string(&gt)?)?;
            let pred_map = io::read_occlusion_map(&read_to_string(&pred)?)?;
            let n = gt_map.positive_count();
            let loss = occlusion_loss(&gt_map, &pred_map, n)?;
            println!("positive_cells = {n}");
            println!("l1_loss = {loss}");
            Ok(())
        }
        Command::Selftest => selftest(),
    }
}

fn parse_bands(spec: &str) -> Result<Vec<VisibilityBand>, Error> {
    spec.split(',')
        .map(|part| {
            let (lo, hi) = part
                .split_once(':')
                .ok_or_else(|| Error::InvalidInput(format!("band '{part}' is not lo:hi")))?;
            let lo: f64 = lo
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("band bound '{lo}' is not a number")))?;
            let hi: f64 = hi
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("band bound '{hi}' is not a number")))?;
            Ok(VisibilityBand { lo, hi })
        })
        .collect()
}

fn print_table(report: &dualtrack::metrics::EvalReport, bands: Option<&[dualtrack::metrics::BandReport]>) {
    println!("metric        value");
    println!("MOTA          {:.4}", report.mota);
    println!("IDF1          {:.4}", report.idf1);
    println!("IDs           {}", report.id_switches);
    println!("FP            {}", report.false_positives);
    println!("FN            {}", report.false_negatives);
    println!("GT boxes      {}", report.gt_total);
    println!("Hyp boxes     {}", report.hyp_total);
    if let Some(bands) = bands {
        println!();
        println!("visibility    FN    IDs   GT");
        for b in bands {
            println!(
                "[{:.2},{:.2})   {:<5} {:<5} {}",
                b.band.lo, b.band.hi, b.false_negatives, b.id_switches, b.gt_boxes
            );
        }
    }
}

fn print_json(report: &dualtrack::metrics::EvalReport, bands: Option<&[dualtrack::metrics::BandReport]>) {
    let bands_json: Vec<serde_json::Value> = bands
        .unwrap_or(&[])
        .iter()
        .map(|b| {
            serde_json::json!({
                "lo": b.band.lo,
                "hi": b.band.hi,
                "false_negatives": b.false_negatives,
                "id_switches": b.id_switches,
                "gt_boxes": b.gt_boxes,
            })
        })
        .collect();
    let value = serde_json::json!({
        "mota": report.mota,
        "idf1": report.idf1,
        "id_switches": report.id_switches,
        "false_positives": report.false_positives,
        "false_negatives": report.false_negatives,
        "gt_total": report.gt_total,
        "hyp_total": report.hyp_total,
        "bands": bands_json,
    });
    println!("{}", serde_json::to_string_pretty(&value).unwrap());
}

/// Runs the crossing scenario through the default engine and the
/// short-term-only ablation, printing both scores.
fn selftest() -> Result<(), Error> {
    let scenario = adversarial_crossing();
    let score = |params: AssociationParams| -> Result<dualtrack::metrics::EvalReport, Error> {
        let (obs, gt) = generate(&scenario)?;
        let histories = Tracker::track_sequence(&obs, params)?;
        let mut eval: Vec<EvalFrame> = gt;
        for (id, history) in &histories {
            for (frame, bbox) in history {
                eval[(*frame - 1) as usize].hyp.push(HypBox {
                    id: *id,
                    bbox: *bbox,
                });
            }
        }
        accumulate(&eval, 0.5)
    };

    let default_report = score(AssociationParams::default())?;
    let ablated_report = score(AssociationParams {
        stage2_embedding: Stage2Embedding::Short,
        ..Default::default()
    })?;

    println!("crossing gauntlet");
    println!(
        "  dual-embedding engine : IDs={} IDF1={:.4} MOTA={:.4}",
        default_report.id_switches, default_report.idf1, default_report.mota
    );
    println!(
        "  short-term-only       : IDs={} IDF1={:.4} MOTA={:.4}",
        ablated_report.id_switches, ablated_report.idf1, ablated_report.mota
    );
    let ok = default_report.id_switches == 0
        && default_report.idf1 == 1.0
        && ablated_report.id_switches >= 1;
    println!(
        "  delta                 : IDs +{}, IDF1 {:+.4}",
        ablated_report.id_switches - default_report.id_switches,
        ablated_report.idf1 - default_report.idf1
    );
    if ok {
        println!("selftest: PASS");
        Ok(())
    } else {
        Err(Error::InvalidInput(
            "selftest expectations not met (see scores above)".into(),
        ))
    }
}
