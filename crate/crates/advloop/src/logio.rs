//! CSV and JSONL writers/readers for episode logs, metrics tables, training
//! curves, and confusion matrices. All float formatting is fixed so outputs
//! are byte-reproducible.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use advloop_core::closed_loop::{EpisodeLog, EventKind};
use advloop_core::metrics::ConfusionMatrix;

use crate::CliError;

pub const TICKS_HEADER: &str = "time,x,y,heading,v_applied,omega_applied,cmd_seq,cmd_age_ms";
pub const FRAMES_HEADER: &str = "seq,t_send,t_arrive,dropped,attacked,n_detections,loss_total";
pub const METRICS_HEADER: &str =
    "scenario,attack,epsilon,delay_ms,loss_pct,precision,recall,lat_rms,lap_completed,stop1,stop2,stop3";

pub fn write_ticks_csv(path: &Path, log: &EpisodeLog) -> Result<(), CliError> {
    let mut s = String::with_capacity(log.ticks.len() * 80);
    s.push_str(TICKS_HEADER);
    s.push('\n');
    for t in &log.ticks {
        let _ = writeln!(
            s,
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.3}",
            t.t_us as f64 / 1e6,
            t.state.x,
            t.state.y,
            t.state.heading,
            t.cmd.v,
            t.cmd.omega,
            t.cmd.seq,
            t.cmd_age_ms
        );
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn write_frames_csv(path: &Path, log: &EpisodeLog) -> Result<(), CliError> {
    let mut s = String::with_capacity(log.frames.len() * 64);
    s.push_str(FRAMES_HEADER);
    s.push('\n');
    for f in &log.frames {
        let t_arrive = f
            .t_arrive_us
            .map(|v| format!("{:.6}", v as f64 / 1e6))
            .unwrap_or_default();
        let n_det = f.n_detections.map(|v| v.to_string()).unwrap_or_default();
        let loss = f.loss_total.map(|v| format!("{v:.6}")).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{:.6},{},{},{},{},{}",
            f.seq,
            f.t_send_us as f64 / 1e6,
            t_arrive,
            f.dropped,
            f.attacked,
            n_det,
            loss
        );
    }
    fs::write(path, s)?;
    Ok(())
}

/// One JSON object per line; keys: `t` (seconds) and `event`, plus
/// event-specific fields.
pub fn write_events_jsonl(path: &Path, log: &EpisodeLog) -> Result<(), CliError> {
    let mut s = String::new();
    for e in &log.events {
        let t = e.t_us as f64 / 1e6;
        let line = match &e.kind {
            EventKind::StopZoneEntered { stop } => {
                format!("{{\"t\":{t:.6},\"event\":\"stop_zone_entered\",\"stop\":{stop}}}")
            }
            EventKind::StopZoneExited { stop } => {
                format!("{{\"t\":{t:.6},\"event\":\"stop_zone_exited\",\"stop\":{stop}}}")
            }
            EventKind::ModeChanged { mode, frame_seq } => format!(
                "{{\"t\":{t:.6},\"event\":\"mode_changed\",\"mode\":\"{mode:?}\",\"frame_seq\":{frame_seq}}}"
            ),
            EventKind::ScenarioStage { stage, note } => format!(
                "{{\"t\":{t:.6},\"event\":\"scenario_stage\",\"stage\":\"{}\",\"note\":\"{}\"}}",
                stage.name(),
                note.replace('"', "'")
            ),
            EventKind::LinkDown => format!("{{\"t\":{t:.6},\"event\":\"link_down\"}}"),
            EventKind::Aborted { reason } => format!(
                "{{\"t\":{t:.6},\"event\":\"aborted\",\"reason\":\"{}\"}}",
                reason.replace('"', "'")
            ),
        };
        s.push_str(&line);
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn write_loss_curve(path: &Path, curve: &[f64]) -> Result<(), CliError> {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in curve.iter().enumerate() {
        let _ = writeln!(s, "{i},{l:.6}");
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn write_confusion_csv(path: &Path, cm: &ConfusionMatrix) -> Result<(), CliError> {
    let names = ConfusionMatrix::class_names();
    let mut s = String::from("gt_class");
    for n in names {
        let _ = write!(s, ",{n}");
    }
    s.push('\n');
    for (r, name) in names.iter().enumerate() {
        let _ = write!(s, "{name}");
        for c in 0..names.len() {
            let _ = write!(s, ",{}", cm.counts[r][c]);
        }
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_confusion_csv(path: &Path) -> Result<ConfusionMatrix, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::MissingInput(format!("{}: {e}", path.display())))?;
    let mut cm = ConfusionMatrix::default();
    for (r, line) in text.lines().skip(1).enumerate() {
        for (c, cell) in line.split(',').skip(1).enumerate() {
            cm.counts[r][c] = cell
                .trim()
                .parse()
                .map_err(|_| CliError::MissingInput(format!("{}: bad count {cell:?}", path.display())))?;
        }
    }
    Ok(cm)
}

/// One row of the metrics table; empty strings stand for not-applicable
/// cells (eval rows have no driving columns, run rows no detection columns).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsRow {
    pub scenario: String,
    pub attack: String,
    pub epsilon: Option<f64>,
    pub delay_ms: Option<f64>,
    pub loss_pct: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub lat_rms: Option<f64>,
    pub lap_completed: Option<bool>,
    pub stops: [Option<bool>; 3],
}

fn opt_num(v: &Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn opt_bool(v: &Option<bool>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_pass(v: &Option<bool>) -> String {
    v.map(|x| if x { "pass" } else { "fail" }.to_string())
        .unwrap_or_default()
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<(), CliError> {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario,
            r.attack,
            opt_num(&r.epsilon),
            opt_num(&r.delay_ms),
            opt_num(&r.loss_pct),
            opt_num(&r.precision),
            opt_num(&r.recall),
            opt_num(&r.lat_rms),
            opt_bool(&r.lap_completed),
            opt_pass(&r.stops[0]),
            opt_pass(&r.stops[1]),
            opt_pass(&r.stops[2]),
        );
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::MissingInput(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    let parse_num = |v: &str| -> Option<f64> {
        if v.is_empty() {
            None
        } else {
            v.parse().ok()
        }
    };
    for line in text.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 12 {
            return Err(CliError::MissingInput(format!(
                "{}: expected 12 columns, got {}",
                path.display(),
                cells.len()
            )));
        }
        let parse_pass = |v: &str| -> Option<bool> {
            match v {
                "pass" => Some(true),
                "fail" => Some(false),
                _ => None,
            }
        };
        rows.push(MetricsRow {
            scenario: cells[0].to_string(),
            attack: cells[1].to_string(),
            epsilon: parse_num(cells[2]),
            delay_ms: parse_num(cells[3]),
            loss_pct: parse_num(cells[4]),
            precision: parse_num(cells[5]),
            recall: parse_num(cells[6]),
            lat_rms: parse_num(cells[7]),
            lap_completed: match cells[8] {
                "true" => Some(true),
                "false" => Some(false),
                _ => None,
            },
            stops: [
                parse_pass(cells[9]),
                parse_pass(cells[10]),
                parse_pass(cells[11]),
            ],
        });
    }
    Ok(rows)
}

/// Reads back the `(x, y)` trajectory from a ticks.csv.
pub fn read_trajectory(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::MissingInput(format!("{}: {e}", path.display())))?;
    let mut pts = Vec::new();
    for line in text.lines().skip(1) {
        let mut it = line.split(',');
        let _t = it.next();
        let x: f64 = it
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::MissingInput(format!("{}: bad row", path.display())))?;
        let y: f64 = it
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::MissingInput(format!("{}: bad row", path.display())))?;
        pts.push((x, y));
    }
    Ok(pts)
}
