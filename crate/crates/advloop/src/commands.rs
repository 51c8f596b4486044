//! The experiment pipeline behind each CLI subcommand. Every command is a
//! plain function over a resolved [`Config`] and an output directory, so the
//! acceptance suite can drive the exact code paths the binary runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use advloop_core::attack::{AttackConfig, AttackKind};
use advloop_core::closed_loop::{
    run_episode, CloudPipeline, EpisodeError, EpisodeLog, EpisodeParams, LoopConfig,
};
use advloop_core::codec::{
    decode_checkpoint, decode_frame_payload, encode_checkpoint, encode_command_payload,
    encode_frame_payload,
};
use advloop_core::control::ControlCommand;
use advloop_core::metrics::{compliance, evaluate_frame, ComplianceReport, EvalSummary};
use advloop_core::netchan::{MsgType, NetworkCondition, WireMessage};
use advloop_core::perception::{train, ModelParams};
use advloop_core::render::{gen_frame, render_frame, Frame};
use advloop_core::rng::{self, derive_seed};
use advloop_core::scene::{fixed_objects, step_kinematics, Scene, VehicleState};

use crate::config::Config;
use crate::dataset::{self, Split};
use crate::logio::{self, MetricsRow};
use crate::svg;
use crate::tcp::{Transport, TransportEvent};
use crate::CliError;

pub fn checkpoint_path(out: &Path) -> PathBuf {
    out.join("model.adnn")
}

fn write_resolved_config(cfg: &Config, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.resolved.txt"), cfg.to_text())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

/// Renders the labeled dataset into `out/dataset/`: one `.adim` image and
/// one `.txt` label file per frame plus the manifest and split lists.
pub fn cmd_gen_data(cfg: &Config, out: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let track = cfg.track()?;
    let render = cfg.render_params();
    if cfg.data_n < 10 {
        return Err(CliError::Config(format!("data.n = {} < 10", cfg.data_n)));
    }
    let dir = dataset::dataset_dir(out);
    fs::create_dir_all(&dir)?;
    write_resolved_config(cfg, out)?;

    // each frame derives its own RNG streams, so generation parallelizes
    // without affecting determinism
    let results: Vec<Result<(), CliError>> = (0..cfg.data_n)
        .into_par_iter()
        .map(|i| {
            let frame = gen_frame(&track, cfg.data_seed, i as u64, &render)
                .map_err(|e| CliError::Other(format!("frame {i}: {e}")))?;
            dataset::write_frame(&dir, i, &frame)
        })
        .collect();
    for r in results {
        r?;
    }
    dataset::write_manifest(&dir, cfg.data_n, cfg.train_fraction, cfg.data_seed)?;
    println!(
        "gen-data: wrote {} frames to {} in {:.1?}",
        cfg.data_n,
        dir.display(),
        started.elapsed()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// Trains the detector on the dataset's train split and writes the ADNN
/// checkpoint plus the per-epoch loss curve.
pub fn cmd_train(cfg: &Config, out: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let dir = dataset::dataset_dir(out);
    let train_set = dataset::load_split(&dir, Split::Train)?;
    println!("train: {} frames loaded from {}", train_set.len(), dir.display());

    let (theta, curve) = train(
        cfg.detector_config(),
        &train_set,
        &cfg.train_config(),
        &cfg.loss_weights(),
    )
    .map_err(|e| CliError::Other(format!("training failed: {e}")))?;

    fs::create_dir_all(out)?;
    fs::write(checkpoint_path(out), encode_checkpoint(&theta))?;
    logio::write_loss_curve(&out.join("train_loss.csv"), &curve)?;
    write_resolved_config(cfg, out)?;
    println!(
        "train: {} epochs in {:.1?}, final loss {:.4}, checkpoint {}",
        curve.len(),
        started.elapsed(),
        curve.last().copied().unwrap_or(f64::NAN),
        checkpoint_path(out).display()
    );
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))?;
    let theta =
        decode_checkpoint(&bytes).map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))?;
    if !theta.all_finite() {
        return Err(CliError::Checkpoint(format!(
            "{}: non-finite parameters",
            path.display()
        )));
    }
    Ok(theta)
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

/// One named attack setting of the eval grid.
pub struct EvalScenario {
    pub name: String,
    pub attack: AttackConfig,
}

/// The paper-default grid: clean plus FGSM/PGD at each epsilon.
pub fn eval_grid(cfg: &Config) -> Vec<EvalScenario> {
    let base = cfg.attack_config();
    let mut grid = vec![EvalScenario {
        name: "clean".into(),
        attack: AttackConfig {
            kind: AttackKind::None,
            ..base
        },
    }];
    for kind in [AttackKind::Fgsm, AttackKind::Pgd] {
        for &eps in &cfg.eval_epsilons {
            grid.push(EvalScenario {
                name: format!("{}-{}", kind.name(), trim_float(eps)),
                attack: AttackConfig {
                    kind,
                    epsilon: eps,
                    ..base
                },
            });
        }
    }
    grid
}

/// Shortest display form of a scenario parameter ("0.02", "100", "2").
fn trim_float(v: f64) -> String {
    format!("{v}")
}

/// Evaluates one attack setting over a dataset in parallel; summaries merge
/// in frame order so the totals are reproducible.
pub fn evaluate_parallel(
    theta: &ModelParams,
    frames: &[Frame],
    attack: &AttackConfig,
    cfg: &Config,
) -> Result<EvalSummary, CliError> {
    if frames.is_empty() {
        return Err(CliError::MissingInput("empty evaluation dataset".into()));
    }
    let weights = cfg.loss_weights();
    let point = cfg.eval_point();
    let partials: Vec<_> = frames
        .par_iter()
        .enumerate()
        .map(|(i, frame)| evaluate_frame(theta, frame, i as u64, attack, &weights, &point))
        .collect();
    let mut total = EvalSummary::default();
    for p in partials {
        total.merge(&p.map_err(|e| CliError::Other(format!("eval failed: {e}")))?);
    }
    Ok(total)
}

/// Runs the clean + FGSM/PGD x epsilon grid over the test split, writing
/// `eval/metrics.csv` and one confusion CSV per setting.
pub fn cmd_eval(cfg: &Config, out: &Path, checkpoint: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let theta = load_checkpoint(checkpoint)?;
    let test_set = dataset::load_split(&dataset::dataset_dir(out), Split::Test)?;
    let eval_dir = out.join("eval");
    fs::create_dir_all(&eval_dir)?;

    let mut rows = Vec::new();
    for scenario in eval_grid(cfg) {
        let summary = evaluate_parallel(&theta, &test_set, &scenario.attack, cfg)?;
        println!(
            "eval {:>12}: P = {:.3}  R = {:.3}  mean loss {:.3}",
            scenario.name,
            summary.precision(),
            summary.recall(),
            summary.mean_loss()
        );
        logio::write_confusion_csv(
            &eval_dir.join(format!("confusion_{}.csv", scenario.name)),
            &summary.confusion,
        )?;
        rows.push(MetricsRow {
            scenario: "eval".into(),
            attack: scenario.attack.kind.name().into(),
            epsilon: Some(if scenario.attack.kind == AttackKind::None {
                0.0
            } else {
                scenario.attack.epsilon
            }),
            delay_ms: Some(0.0),
            loss_pct: Some(0.0),
            precision: Some(summary.precision()),
            recall: Some(summary.recall()),
            ..MetricsRow::default()
        });
    }
    logio::write_metrics_csv(&eval_dir.join("metrics.csv"), &rows)?;
    println!("eval: {} rows in {:.1?}", rows.len(), started.elapsed());
    Ok(())
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

/// One named impairment setting of the closed-loop grid.
pub struct RunScenario {
    pub name: String,
    pub delay_ms: f64,
    pub loss_prob: f64,
}

/// Baseline plus the delay and loss ladders (7 episodes by default).
pub fn run_grid(cfg: &Config) -> Vec<RunScenario> {
    let mut grid = vec![RunScenario {
        name: "baseline".into(),
        delay_ms: 0.0,
        loss_prob: 0.0,
    }];
    for &d in &cfg.eval_delays_ms {
        grid.push(RunScenario {
            name: format!("delay-{}", trim_float(d)),
            delay_ms: d,
            loss_prob: 0.0,
        });
    }
    for &p in &cfg.eval_loss_probs {
        grid.push(RunScenario {
            name: format!("loss-{}", trim_float(p * 100.0)),
            delay_ms: 0.0,
            loss_prob: p,
        });
    }
    grid
}

/// Episode parameters for one impairment setting. The configured delay and
/// loss apply symmetrically to the uplink and downlink, each direction with
/// its own seeded stream.
pub fn episode_params(cfg: &Config, delay_ms: f64, loss_prob: f64) -> EpisodeParams {
    let cond = |base: &NetworkCondition| NetworkCondition {
        delay_ms,
        jitter_ms: 0.0,
        loss_prob,
        seed: base.seed,
    };
    EpisodeParams {
        loop_cfg: LoopConfig {
            tick_dt: cfg.tick_dt,
            frame_period: cfg.frame_period,
            episode_duration: cfg.duration_s,
            uplink: cond(&cfg.uplink),
            downlink: cond(&cfg.downlink),
            attack: cfg.attack_config(),
            seed: cfg.loop_seed,
            scenario: None,
        },
        control: cfg.control_config(),
        render: cfg.render_params(),
        weights: cfg.loss_weights(),
        conf_threshold: cfg.eval_conf,
        nms_iou: cfg.eval_nms_iou,
        stop_zone_radius_m: cfg.stop_zone_m,
    }
}

pub struct EpisodeOutcome {
    pub name: String,
    pub log: EpisodeLog,
    pub report: ComplianceReport,
}

/// Runs one simulated episode and scores compliance.
pub fn run_one_episode(
    cfg: &Config,
    scenario: &RunScenario,
    theta: &ModelParams,
) -> Result<EpisodeOutcome, CliError> {
    let track = cfg.track()?;
    let mut params = episode_params(cfg, scenario.delay_ms, scenario.loss_prob);
    if cfg.scenario_enabled {
        params.loop_cfg.scenario = cfg.scenario();
    }
    let log = match run_episode(&track, theta, &params) {
        Ok(log) => log,
        Err(EpisodeError::NonFiniteState(partial)) => {
            eprintln!("episode {}: aborted on non-finite state", scenario.name);
            *partial
        }
        Err(e) => return Err(CliError::Other(format!("episode {} failed: {e}", scenario.name))),
    };
    let report = compliance(&log, &track, &cfg.compliance_params());
    Ok(EpisodeOutcome {
        name: scenario.name.clone(),
        log,
        report,
    })
}

fn write_episode(out_dir: &Path, outcome: &EpisodeOutcome) -> Result<(), CliError> {
    let dir = out_dir.join(&outcome.name);
    fs::create_dir_all(&dir)?;
    logio::write_ticks_csv(&dir.join("ticks.csv"), &outcome.log)?;
    logio::write_frames_csv(&dir.join("frames.csv"), &outcome.log)?;
    logio::write_events_jsonl(&dir.join("events.jsonl"), &outcome.log)?;
    Ok(())
}

/// Runs the impairment grid, writing per-episode logs under `out/run/` and
/// the compliance rows into `out/run/metrics.csv`.
pub fn cmd_run(cfg: &Config, out: &Path, checkpoint: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let theta = load_checkpoint(checkpoint)?;
    let run_dir = out.join("run");
    fs::create_dir_all(&run_dir)?;

    let mut rows = Vec::new();
    for scenario in run_grid(cfg) {
        let outcome = run_one_episode(cfg, &scenario, &theta)?;
        println!("run {:>10}: {}", outcome.name, outcome.report.summary_line());
        write_episode(&run_dir, &outcome)?;
        rows.push(MetricsRow {
            scenario: outcome.name.clone(),
            attack: cfg.attack_kind.name().into(),
            epsilon: None,
            delay_ms: Some(scenario.delay_ms),
            loss_pct: Some(scenario.loss_prob * 100.0),
            precision: None,
            recall: None,
            lat_rms: Some(outcome.report.lateral_rms_m),
            lap_completed: Some(outcome.report.lap_completed),
            stops: [
                Some(outcome.report.stops[0].passed),
                Some(outcome.report.stops[1].passed),
                Some(outcome.report.stops[2].passed),
            ],
        });
    }
    logio::write_metrics_csv(&run_dir.join("metrics.csv"), &rows)?;
    println!("run: {} episodes in {:.1?}", rows.len(), started.elapsed());
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

/// Builds the SVG plots and the plain-text compliance table from the eval
/// and run outputs. Inputs are checked before anything is written, so a
/// missing directory never leaves partial plots behind.
pub fn cmd_report(cfg: &Config, out: &Path) -> Result<(), CliError> {
    let eval_metrics = logio::read_metrics_csv(&out.join("eval").join("metrics.csv"))?;
    let run_metrics = logio::read_metrics_csv(&out.join("run").join("metrics.csv"))?;
    let track = cfg.track()?;

    // trajectories must exist for every run row before we emit anything
    let mut trajectories = Vec::new();
    for row in &run_metrics {
        let path = out.join("run").join(&row.scenario).join("ticks.csv");
        trajectories.push((row.scenario.clone(), logio::read_trajectory(&path)?));
    }
    let confusions: Vec<(String, _)> = ["clean", "fgsm", "pgd"]
        .iter()
        .filter_map(|kind| {
            let name = match *kind {
                "clean" => "clean".to_string(),
                other => format!("{other}-{}", trim_float(cfg.attack_epsilon)),
            };
            let path = out.join("eval").join(format!("confusion_{name}.csv"));
            path.exists().then(|| (name.clone(), logio::read_confusion_csv(&path)))
        })
        .collect();

    let report_dir = out.join("report");
    fs::create_dir_all(&report_dir)?;

    // precision/recall vs epsilon (clean point shared at eps = 0)
    let series_for = |attack: &str, field: fn(&MetricsRow) -> Option<f64>| -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = eval_metrics
            .iter()
            .filter(|r| r.attack == attack || r.attack == "none")
            .filter_map(|r| Some((r.epsilon?, field(r)?)))
            .collect();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        pts
    };
    let pr_svg = svg::line_chart(
        "Detection under adversarial perturbation",
        "epsilon (L-inf budget)",
        "precision / recall",
        &[
            svg::Series {
                label: "FGSM precision".into(),
                color: "#d95f02".into(),
                dash: String::new(),
                points: series_for("fgsm", |r| r.precision),
            },
            svg::Series {
                label: "FGSM recall".into(),
                color: "#d95f02".into(),
                dash: "5 3".into(),
                points: series_for("fgsm", |r| r.recall),
            },
            svg::Series {
                label: "PGD precision".into(),
                color: "#7570b3".into(),
                dash: String::new(),
                points: series_for("pgd", |r| r.precision),
            },
            svg::Series {
                label: "PGD recall".into(),
                color: "#7570b3".into(),
                dash: "5 3".into(),
                points: series_for("pgd", |r| r.recall),
            },
        ],
        (0.0, 1.0),
    );
    fs::write(report_dir.join("pr_vs_epsilon.svg"), pr_svg)?;

    // trajectory overlay
    let style = |name: &str| -> (String, String) {
        if name == "baseline" {
            ("#1b9e77".into(), String::new())
        } else if name.starts_with("delay") {
            let dash = match name {
                "delay-100" => "",
                "delay-150" => "7 4",
                _ => "3 3",
            };
            ("#d95f02".into(), dash.into())
        } else {
            let dash = match name {
                "loss-0.5" => "",
                "loss-2" => "7 4",
                _ => "3 3",
            };
            ("#2b6cb0".into(), dash.into())
        }
    };
    let paths = trajectories
        .iter()
        .map(|(name, pts)| {
            let (color, dash) = style(name);
            svg::Series {
                label: name.clone(),
                color,
                dash,
                points: pts.clone(),
            }
        })
        .collect();
    let traj_svg = svg::trajectory_plot(&svg::TrajectoryPlot {
        title: "Vehicle trajectories under network impairment".into(),
        centerline: track.centerline().iter().map(|p| (p.x, p.y)).collect(),
        lane_width: track.lane_width,
        stop_points: track
            .stop_lines
            .iter()
            .map(|sl| (sl.pose.pos.x, sl.pose.pos.y))
            .collect(),
        paths,
    });
    fs::write(report_dir.join("trajectories.svg"), traj_svg)?;

    // confusion heatmaps
    for (name, cm) in confusions {
        let cm = cm?;
        let svg_text = svg::confusion_heatmap(
            &format!("Confusion ({name})"),
            &advloop_core::metrics::ConfusionMatrix::class_names(),
            &cm.counts,
        );
        fs::write(report_dir.join(format!("confusion_{name}.svg")), svg_text)?;
    }

    // compliance table
    let mut table = String::from(
        "Traffic rule compliance under network impairment\n\
         scenario      stop1  stop2  stop3  lat_rms_m  lap\n",
    );
    for r in &run_metrics {
        let cell = |s: &Option<bool>| match s {
            Some(true) => "ok",
            Some(false) => "MISS",
            None => "-",
        };
        table.push_str(&format!(
            "{:<13} {:<6} {:<6} {:<6} {:<10} {}\n",
            r.scenario,
            cell(&r.stops[0]),
            cell(&r.stops[1]),
            cell(&r.stops[2]),
            r.lat_rms.map(|v| format!("{v:.4}")).unwrap_or_default(),
            r.lap_completed.map(|v| if v { "yes" } else { "NO" }).unwrap_or("-"),
        ));
    }
    fs::write(report_dir.join("compliance.txt"), &table)?;
    print!("{table}");
    println!("report: wrote plots to {}", report_dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// serve / drive (TCP mode)
// ---------------------------------------------------------------------------

/// Cloud process: accepts one vehicle connection and runs the perception-
/// control pipeline on every arriving frame until the link drops.
pub fn cmd_serve(cfg: &Config, bind: &str, checkpoint: &Path) -> Result<(), CliError> {
    let theta = load_checkpoint(checkpoint)?;
    let egress = impairment_or_none(&cfg.downlink);
    println!("serve: listening on {bind}");
    let transport = Transport::serve(bind, egress).map_err(|e| CliError::Transport(format!("{e}")))?;
    println!("serve: vehicle connected");

    let mut pipeline = CloudPipeline::new(
        theta,
        cfg.loss_weights(),
        cfg.attack_config(),
        cfg.control_config(),
        cfg.render_params().palette,
        cfg.eval_conf,
        cfg.eval_nms_iou,
        cfg.frame_period,
    );
    let started = Instant::now();
    let mut processed = 0u64;
    loop {
        match transport.recv_timeout(Duration::from_secs(5)) {
            Some(TransportEvent::Message(msg)) if msg.msg_type == MsgType::Frame => {
                let (image, labels) = decode_frame_payload(&msg.payload)
                    .map_err(|e| CliError::Transport(format!("bad frame payload: {e}")))?;
                let out = pipeline
                    .process_frame(&image, &labels, msg.seq, msg.timestamp_us)
                    .map_err(|e| CliError::Other(format!("inference failed: {e}")))?;
                if let Some(out) = out {
                    let reply = WireMessage {
                        msg_type: MsgType::Command,
                        seq: msg.seq,
                        timestamp_us: started.elapsed().as_micros() as u64,
                        payload: encode_command_payload(&out.command),
                    };
                    if transport.send(reply).is_err() {
                        break;
                    }
                    processed += 1;
                }
            }
            Some(TransportEvent::Message(_)) => {}
            Some(TransportEvent::LinkDown(why)) => {
                println!("serve: link down ({why}) after {processed} frames");
                break;
            }
            None => {
                println!("serve: idle timeout, closing");
                break;
            }
        }
    }
    Ok(())
}

fn impairment_or_none(cond: &NetworkCondition) -> Option<NetworkCondition> {
    if cond.delay_ms > 0.0 || cond.loss_prob > 0.0 {
        Some(*cond)
    } else {
        None
    }
}

/// Vehicle process: streams frames to the cloud at the configured rate,
/// applies returned commands (hold-last), and writes the episode logs under
/// `out/drive/`.
pub fn cmd_drive(cfg: &Config, connect: &str, out: &Path) -> Result<(), CliError> {
    let track = cfg.track()?;
    let render = cfg.render_params();
    let egress = impairment_or_none(&cfg.uplink);
    let transport =
        Transport::connect(connect, egress).map_err(|e| CliError::Transport(format!("{e}")))?;
    println!("drive: connected to {connect}");

    let objects_red = fixed_objects(&track, true);
    let objects_green = fixed_objects(&track, false);
    let start_pose = track.pose_at(0.0);
    let mut state = VehicleState::new(start_pose.pos.x, start_pose.pos.y, start_pose.heading);
    let mut applied = ControlCommand::halt();
    let mut log = EpisodeLog {
        ticks: Vec::new(),
        frames: Vec::new(),
        events: Vec::new(),
        completed: true,
    };

    let tick_dt = cfg.tick_dt;
    let frame_ticks = (cfg.frame_period / tick_dt).round() as u64;
    let n_ticks = (cfg.duration_s / tick_dt).round() as u64;
    let t0 = Instant::now();
    let mut seq = 0u32;
    let mut link_up = true;

    for tick in 0..n_ticks {
        let now_us = (tick as f64 * tick_dt * 1e6) as u64;
        let t_s = now_us as f64 / 1e6;

        if link_up && tick % frame_ticks == 0 {
            seq += 1;
            let scene = Scene {
                objects: if track.traffic_light.is_red_at(t_s) {
                    objects_red.clone()
                } else {
                    objects_green.clone()
                },
                camera: state,
            };
            let noise_seed = derive_seed(cfg.loop_seed, rng::stream::RENDER_NOISE, seq as u64);
            let (img, labels) = render_frame(&scene, &state, &track, &render, noise_seed);
            let msg = WireMessage {
                msg_type: MsgType::Frame,
                seq,
                timestamp_us: now_us,
                payload: encode_frame_payload(&img, &labels),
            };
            if transport.send(msg).is_err() {
                link_up = false;
            }
            log.frames.push(advloop_core::closed_loop::FrameRecord {
                seq,
                t_send_us: now_us,
                t_arrive_us: None,
                dropped: false,
                attacked: false,
                n_detections: None,
                loss_total: None,
            });
        }

        let mut received = Vec::new();
        while let Some(event) = transport.try_recv() {
            match event {
                TransportEvent::Message(m) if m.msg_type == MsgType::Command => {
                    if let Ok((v, omega)) = advloop_core::codec::decode_command_payload(&m.payload) {
                        received.push(ControlCommand { v, omega, seq: m.seq });
                    }
                }
                TransportEvent::Message(_) => {}
                TransportEvent::LinkDown(why) => {
                    println!("drive: link down ({why}); holding last command");
                    log.events.push(advloop_core::closed_loop::EventRecord {
                        t_us: now_us,
                        kind: advloop_core::closed_loop::EventKind::LinkDown,
                    });
                    link_up = false;
                }
            }
        }
        if let Some(best) = advloop_core::closed_loop::stale_command_filter(&received, applied.seq) {
            applied = best;
        }

        let cmd_age_ms = if applied.seq == 0 {
            0.0
        } else {
            (now_us.saturating_sub((applied.seq as u64 - 1) * frame_ticks * (tick_dt * 1e6) as u64))
                as f64
                / 1000.0
        };
        log.ticks.push(advloop_core::closed_loop::TickRecord {
            t_us: now_us,
            state,
            cmd: applied,
            cmd_age_ms,
        });
        state = step_kinematics(&state, &applied, tick_dt)
            .map_err(|e| CliError::Other(format!("kinematics failed: {e}")))?;

        // wall-clock pacing
        let target = Duration::from_micros(((tick + 1) as f64 * tick_dt * 1e6) as u64);
        let elapsed = t0.elapsed();
        if target > elapsed {
            std::thread::sleep(target - elapsed);
        }
    }

    let dir = out.join("drive");
    fs::create_dir_all(&dir)?;
    logio::write_ticks_csv(&dir.join("ticks.csv"), &log)?;
    logio::write_frames_csv(&dir.join("frames.csv"), &log)?;
    logio::write_events_jsonl(&dir.join("events.jsonl"), &log)?;
    let report = compliance(&log, &track, &cfg.compliance_params());
    println!("drive: {}", report.summary_line());
    println!("drive: logs written to {}", dir.display());
    Ok(())
}
