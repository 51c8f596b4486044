//! Experiment configuration: a plain-text `section.key = value` format with
//! every default documented in one place. Unknown keys are rejected so a
//! config file fully determines a run.

use std::fmt::Write as _;
use std::path::Path;

use advloop_core::attack::{AttackConfig, AttackKind};
use advloop_core::control::{ControlConfig, PidGains};
use advloop_core::metrics::{ComplianceParams, EvalPoint};
use advloop_core::netchan::{AdversaryScenario, NetworkCondition, ScenarioStage, StageKind};
use advloop_core::perception::{DetectorConfig, LossWeights, TrainConfig};
use advloop_core::render::RenderParams;
use advloop_core::rng::derive_seed;
use advloop_core::scene::{rect_track, RectTrackParams, SceneError, TrackSpec};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    Simulated,
    Tcp,
}

/// The full experiment configuration. Field defaults are the documented
/// defaults of the testbed; see `Config::to_text` for the canonical listing.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    // scene.*
    pub track_preset: String,
    pub rect_width: f64,
    pub rect_height: f64,
    pub fillet: f64,
    pub lane_width: f64,
    pub track_points: Vec<(f64, f64)>,
    pub stop_s: Vec<f64>,
    pub light_s: f64,
    pub light_red_s: f64,
    pub light_green_s: f64,
    pub light_phase_s: f64,
    // render.*
    pub render_width: usize,
    pub render_height: usize,
    pub fov_deg: f64,
    pub horizon_row: usize,
    pub camera_height_m: f64,
    pub noise_sigma: f64,
    pub min_apparent_px: usize,
    pub view_distance_m: f64,
    // data.*
    pub data_n: usize,
    pub train_fraction: f64,
    pub data_seed: u64,
    // model.*
    pub grid: usize,
    pub conv1: usize,
    pub conv2: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub model_seed: u64,
    pub lambda_box: f64,
    pub lambda_cls: f64,
    pub lambda_dfl: f64,
    // attack.*
    pub attack_kind: AttackKind,
    pub attack_epsilon: f64,
    pub attack_alpha: f64,
    pub attack_iterations: usize,
    pub attack_random_start: bool,
    pub attack_seed: u64,
    // net.uplink.* / net.downlink.*
    pub uplink: NetworkCondition,
    pub downlink: NetworkCondition,
    // control.*
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub integral_limit: f64,
    pub v_cruise: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub stop_conf: f64,
    pub near_box_height: f64,
    pub stop_duration_s: f64,
    pub stop_cooldown_s: f64,
    pub rearm_clear_s: f64,
    pub lane_tol: f64,
    pub lane_min_pixels: usize,
    // loop.*
    pub tick_dt: f64,
    pub frame_period: f64,
    pub duration_s: f64,
    pub transport: TransportKind,
    pub loop_seed: u64,
    // scenario.*
    pub scenario_enabled: bool,
    pub scenario_recon_at_s: f64,
    pub scenario_discovery_at_s: f64,
    pub scenario_impact_at_s: f64,
    // eval.*
    pub eval_conf: f64,
    pub eval_nms_iou: f64,
    pub eval_iou: f64,
    pub eval_epsilons: Vec<f64>,
    pub eval_delays_ms: Vec<f64>,
    pub eval_loss_probs: Vec<f64>,
    pub stop_zone_m: f64,
    pub stop_speed: f64,
    pub stop_dwell_s: f64,
    pub lat_rms_gate: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            track_preset: "rect-3x2".into(),
            rect_width: 3.0,
            rect_height: 2.0,
            fillet: 0.1,
            lane_width: 0.2,
            track_points: Vec::new(),
            stop_s: Vec::new(),
            light_s: 0.0,
            light_red_s: 4.0,
            light_green_s: 8.0,
            light_phase_s: 0.0,
            render_width: 64,
            render_height: 64,
            fov_deg: 80.0,
            horizon_row: 10,
            camera_height_m: 0.30,
            noise_sigma: 0.02,
            min_apparent_px: 3,
            view_distance_m: 3.0,
            data_n: 2400,
            train_fraction: 0.7,
            data_seed: 42,
            grid: 4,
            conv1: 8,
            conv2: 16,
            epochs: 150,
            learning_rate: 0.01,
            batch_size: 32,
            momentum: 0.9,
            model_seed: 7,
            lambda_box: 7.5,
            lambda_cls: 0.5,
            lambda_dfl: 0.0,
            attack_kind: AttackKind::None,
            attack_epsilon: 0.02,
            attack_alpha: 0.01,
            attack_iterations: 10,
            attack_random_start: false,
            attack_seed: 99,
            uplink: NetworkCondition::ideal(1001),
            downlink: NetworkCondition::ideal(1002),
            kp: 5.0,
            ki: 0.0,
            kd: 0.4,
            integral_limit: 1.0,
            v_cruise: 0.3,
            v_max: 0.5,
            omega_max: 4.0,
            stop_conf: 0.5,
            near_box_height: 0.25,
            stop_duration_s: 2.0,
            stop_cooldown_s: 10.0,
            rearm_clear_s: 1.0,
            lane_tol: 0.15,
            lane_min_pixels: 10,
            tick_dt: 0.01,
            frame_period: 0.05,
            duration_s: 120.0,
            transport: TransportKind::Simulated,
            loop_seed: 5,
            scenario_enabled: false,
            scenario_recon_at_s: 5.0,
            scenario_discovery_at_s: 10.0,
            scenario_impact_at_s: 20.0,
            eval_conf: 0.25,
            eval_nms_iou: 0.5,
            eval_iou: 0.5,
            eval_epsilons: vec![0.01, 0.02, 0.04],
            eval_delays_ms: vec![100.0, 150.0, 250.0],
            eval_loss_probs: vec![0.005, 0.02, 0.05],
            stop_zone_m: 0.15,
            stop_speed: 0.02,
            stop_dwell_s: 1.0,
            lat_rms_gate: 0.05,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| ConfigError(format!("bad value for {key}: {value:?}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value
        .split(',')
        .map(|v| parse::<f64>(key, v))
        .collect::<Result<Vec<_>, _>>()
}

fn parse_points(key: &str, value: &str) -> Result<Vec<(f64, f64)>, ConfigError> {
    value
        .split(';')
        .map(|pair| {
            let mut it = pair.split(',');
            let x = it
                .next()
                .ok_or_else(|| ConfigError(format!("bad point in {key}")))?;
            let y = it
                .next()
                .ok_or_else(|| ConfigError(format!("bad point in {key}")))?;
            Ok((parse::<f64>(key, x)?, parse::<f64>(key, y)?))
        })
        .collect()
}

impl Config {
    pub fn parse_text(text: &str) -> Result<Config, ConfigError> {
        let mut cfg = Config::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError(format!("line {}: expected key = value", lineno + 1)));
            };
            cfg.apply(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Config::parse_text(&text)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "scene.track" => self.track_preset = value.to_string(),
            "scene.rect_width" => self.rect_width = parse(key, value)?,
            "scene.rect_height" => self.rect_height = parse(key, value)?,
            "scene.fillet" => self.fillet = parse(key, value)?,
            "scene.lane_width" => self.lane_width = parse(key, value)?,
            "scene.points" => self.track_points = parse_points(key, value)?,
            "scene.stop_s" => self.stop_s = parse_list(key, value)?,
            "scene.light_s" => self.light_s = parse(key, value)?,
            "scene.light_red_s" => self.light_red_s = parse(key, value)?,
            "scene.light_green_s" => self.light_green_s = parse(key, value)?,
            "scene.light_phase_s" => self.light_phase_s = parse(key, value)?,
            "render.width" => self.render_width = parse(key, value)?,
            "render.height" => self.render_height = parse(key, value)?,
            "render.fov_deg" => self.fov_deg = parse(key, value)?,
            "render.horizon_row" => self.horizon_row = parse(key, value)?,
            "render.camera_height_m" => self.camera_height_m = parse(key, value)?,
            "render.noise_sigma" => self.noise_sigma = parse(key, value)?,
            "render.min_apparent_px" => self.min_apparent_px = parse(key, value)?,
            "render.view_distance_m" => self.view_distance_m = parse(key, value)?,
            "data.n" => self.data_n = parse(key, value)?,
            "data.train_fraction" => self.train_fraction = parse(key, value)?,
            "data.seed" => self.data_seed = parse(key, value)?,
            "model.grid" => self.grid = parse(key, value)?,
            "model.conv1" => self.conv1 = parse(key, value)?,
            "model.conv2" => self.conv2 = parse(key, value)?,
            "model.epochs" => self.epochs = parse(key, value)?,
            "model.lr" => self.learning_rate = parse(key, value)?,
            "model.batch" => self.batch_size = parse(key, value)?,
            "model.momentum" => self.momentum = parse(key, value)?,
            "model.seed" => self.model_seed = parse(key, value)?,
            "model.lambda_box" => self.lambda_box = parse(key, value)?,
            "model.lambda_cls" => self.lambda_cls = parse(key, value)?,
            "model.lambda_dfl" => self.lambda_dfl = parse(key, value)?,
            "attack.kind" => {
                self.attack_kind = match value {
                    "none" => AttackKind::None,
                    "fgsm" => AttackKind::Fgsm,
                    "pgd" => AttackKind::Pgd,
                    other => return Err(ConfigError(format!("unknown attack.kind {other:?}"))),
                }
            }
            "attack.epsilon" => self.attack_epsilon = parse(key, value)?,
            "attack.alpha" => self.attack_alpha = parse(key, value)?,
            "attack.iterations" => self.attack_iterations = parse(key, value)?,
            "attack.random_start" => self.attack_random_start = parse(key, value)?,
            "attack.seed" => self.attack_seed = parse(key, value)?,
            "net.uplink.delay_ms" => self.uplink.delay_ms = parse(key, value)?,
            "net.uplink.jitter_ms" => self.uplink.jitter_ms = parse(key, value)?,
            "net.uplink.loss_prob" => self.uplink.loss_prob = parse(key, value)?,
            "net.uplink.seed" => self.uplink.seed = parse(key, value)?,
            "net.downlink.delay_ms" => self.downlink.delay_ms = parse(key, value)?,
            "net.downlink.jitter_ms" => self.downlink.jitter_ms = parse(key, value)?,
            "net.downlink.loss_prob" => self.downlink.loss_prob = parse(key, value)?,
            "net.downlink.seed" => self.downlink.seed = parse(key, value)?,
            "control.kp" => self.kp = parse(key, value)?,
            "control.ki" => self.ki = parse(key, value)?,
            "control.kd" => self.kd = parse(key, value)?,
            "control.integral_limit" => self.integral_limit = parse(key, value)?,
            "control.v_cruise" => self.v_cruise = parse(key, value)?,
            "control.v_max" => self.v_max = parse(key, value)?,
            "control.omega_max" => self.omega_max = parse(key, value)?,
            "control.stop_conf" => self.stop_conf = parse(key, value)?,
            "control.near_box_height" => self.near_box_height = parse(key, value)?,
            "control.stop_duration_s" => self.stop_duration_s = parse(key, value)?,
            "control.stop_cooldown_s" => self.stop_cooldown_s = parse(key, value)?,
            "control.rearm_clear_s" => self.rearm_clear_s = parse(key, value)?,
            "control.lane_tol" => self.lane_tol = parse(key, value)?,
            "control.lane_min_pixels" => self.lane_min_pixels = parse(key, value)?,
            "loop.tick_dt" => self.tick_dt = parse(key, value)?,
            "loop.frame_period" => self.frame_period = parse(key, value)?,
            "loop.duration_s" => self.duration_s = parse(key, value)?,
            "loop.transport" => {
                self.transport = match value {
                    "simulated" => TransportKind::Simulated,
                    "tcp" => TransportKind::Tcp,
                    other => return Err(ConfigError(format!("unknown loop.transport {other:?}"))),
                }
            }
            "loop.seed" => self.loop_seed = parse(key, value)?,
            "scenario.enabled" => self.scenario_enabled = parse(key, value)?,
            "scenario.recon_at_s" => self.scenario_recon_at_s = parse(key, value)?,
            "scenario.discovery_at_s" => self.scenario_discovery_at_s = parse(key, value)?,
            "scenario.impact_at_s" => self.scenario_impact_at_s = parse(key, value)?,
            "eval.conf" => self.eval_conf = parse(key, value)?,
            "eval.nms_iou" => self.eval_nms_iou = parse(key, value)?,
            "eval.iou" => self.eval_iou = parse(key, value)?,
            "eval.epsilons" => self.eval_epsilons = parse_list(key, value)?,
            "eval.delays_ms" => self.eval_delays_ms = parse_list(key, value)?,
            "eval.loss_probs" => self.eval_loss_probs = parse_list(key, value)?,
            "eval.stop_zone_m" => self.stop_zone_m = parse(key, value)?,
            "eval.stop_speed" => self.stop_speed = parse(key, value)?,
            "eval.stop_dwell_s" => self.stop_dwell_s = parse(key, value)?,
            "eval.lat_rms_gate" => self.lat_rms_gate = parse(key, value)?,
            unknown => return Err(ConfigError(format!("unknown key {unknown:?}"))),
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.track_preset != "rect-3x2" && self.track_preset != "explicit" {
            return Err(ConfigError(format!(
                "scene.track must be \"rect-3x2\" or \"explicit\", got {:?}",
                self.track_preset
            )));
        }
        if self.track_preset == "explicit" && (self.track_points.len() < 3 || self.stop_s.len() != 3) {
            return Err(ConfigError(
                "explicit track needs scene.points (>= 3) and exactly 3 scene.stop_s".into(),
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(ConfigError(format!(
                "data.train_fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        self.uplink
            .validate()
            .map_err(|e| ConfigError(format!("net.uplink: {e}")))?;
        self.downlink
            .validate()
            .map_err(|e| ConfigError(format!("net.downlink: {e}")))?;
        Ok(())
    }

    /// Replaces every seed with one derived from a single master seed
    /// (the `--seed` CLI override).
    pub fn override_master_seed(&mut self, master: u64) {
        self.data_seed = derive_seed(master, 0x10, 0);
        self.model_seed = derive_seed(master, 0x11, 0);
        self.attack_seed = derive_seed(master, 0x12, 0);
        self.uplink.seed = derive_seed(master, 0x13, 0);
        self.downlink.seed = derive_seed(master, 0x14, 0);
        self.loop_seed = derive_seed(master, 0x15, 0);
    }

    /// Canonical text form: every key, fixed order. Writing this next to the
    /// outputs makes a run reproducible from its artifacts alone.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("scene.track", self.track_preset.clone());
        kv("scene.rect_width", format!("{}", self.rect_width));
        kv("scene.rect_height", format!("{}", self.rect_height));
        kv("scene.fillet", format!("{}", self.fillet));
        kv("scene.lane_width", format!("{}", self.lane_width));
        if !self.track_points.is_empty() {
            kv(
                "scene.points",
                self.track_points
                    .iter()
                    .map(|(x, y)| format!("{x},{y}"))
                    .collect::<Vec<_>>()
                    .join(";"),
            );
            kv(
                "scene.stop_s",
                self.stop_s.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(","),
            );
            kv("scene.light_s", format!("{}", self.light_s));
        }
        kv("scene.light_red_s", format!("{}", self.light_red_s));
        kv("scene.light_green_s", format!("{}", self.light_green_s));
        kv("scene.light_phase_s", format!("{}", self.light_phase_s));
        kv("render.width", format!("{}", self.render_width));
        kv("render.height", format!("{}", self.render_height));
        kv("render.fov_deg", format!("{}", self.fov_deg));
        kv("render.horizon_row", format!("{}", self.horizon_row));
        kv("render.camera_height_m", format!("{}", self.camera_height_m));
        kv("render.noise_sigma", format!("{}", self.noise_sigma));
        kv("render.min_apparent_px", format!("{}", self.min_apparent_px));
        kv("render.view_distance_m", format!("{}", self.view_distance_m));
        kv("data.n", format!("{}", self.data_n));
        kv("data.train_fraction", format!("{}", self.train_fraction));
        kv("data.seed", format!("{}", self.data_seed));
        kv("model.grid", format!("{}", self.grid));
        kv("model.conv1", format!("{}", self.conv1));
        kv("model.conv2", format!("{}", self.conv2));
        kv("model.epochs", format!("{}", self.epochs));
        kv("model.lr", format!("{}", self.learning_rate));
        kv("model.batch", format!("{}", self.batch_size));
        kv("model.momentum", format!("{}", self.momentum));
        kv("model.seed", format!("{}", self.model_seed));
        kv("model.lambda_box", format!("{}", self.lambda_box));
        kv("model.lambda_cls", format!("{}", self.lambda_cls));
        kv("model.lambda_dfl", format!("{}", self.lambda_dfl));
        kv("attack.kind", self.attack_kind.name().to_string());
        kv("attack.epsilon", format!("{}", self.attack_epsilon));
        kv("attack.alpha", format!("{}", self.attack_alpha));
        kv("attack.iterations", format!("{}", self.attack_iterations));
        kv("attack.random_start", format!("{}", self.attack_random_start));
        kv("attack.seed", format!("{}", self.attack_seed));
        kv("net.uplink.delay_ms", format!("{}", self.uplink.delay_ms));
        kv("net.uplink.jitter_ms", format!("{}", self.uplink.jitter_ms));
        kv("net.uplink.loss_prob", format!("{}", self.uplink.loss_prob));
        kv("net.uplink.seed", format!("{}", self.uplink.seed));
        kv("net.downlink.delay_ms", format!("{}", self.downlink.delay_ms));
        kv("net.downlink.jitter_ms", format!("{}", self.downlink.jitter_ms));
        kv("net.downlink.loss_prob", format!("{}", self.downlink.loss_prob));
        kv("net.downlink.seed", format!("{}", self.downlink.seed));
        kv("control.kp", format!("{}", self.kp));
        kv("control.ki", format!("{}", self.ki));
        kv("control.kd", format!("{}", self.kd));
        kv("control.integral_limit", format!("{}", self.integral_limit));
        kv("control.v_cruise", format!("{}", self.v_cruise));
        kv("control.v_max", format!("{}", self.v_max));
        kv("control.omega_max", format!("{}", self.omega_max));
        kv("control.stop_conf", format!("{}", self.stop_conf));
        kv("control.near_box_height", format!("{}", self.near_box_height));
        kv("control.stop_duration_s", format!("{}", self.stop_duration_s));
        kv("control.stop_cooldown_s", format!("{}", self.stop_cooldown_s));
        kv("control.rearm_clear_s", format!("{}", self.rearm_clear_s));
        kv("control.lane_tol", format!("{}", self.lane_tol));
        kv("control.lane_min_pixels", format!("{}", self.lane_min_pixels));
        kv("loop.tick_dt", format!("{}", self.tick_dt));
        kv("loop.frame_period", format!("{}", self.frame_period));
        kv("loop.duration_s", format!("{}", self.duration_s));
        kv(
            "loop.transport",
            match self.transport {
                TransportKind::Simulated => "simulated".into(),
                TransportKind::Tcp => "tcp".into(),
            },
        );
        kv("loop.seed", format!("{}", self.loop_seed));
        kv("scenario.enabled", format!("{}", self.scenario_enabled));
        kv("scenario.recon_at_s", format!("{}", self.scenario_recon_at_s));
        kv("scenario.discovery_at_s", format!("{}", self.scenario_discovery_at_s));
        kv("scenario.impact_at_s", format!("{}", self.scenario_impact_at_s));
        kv("eval.conf", format!("{}", self.eval_conf));
        kv("eval.nms_iou", format!("{}", self.eval_nms_iou));
        kv("eval.iou", format!("{}", self.eval_iou));
        kv(
            "eval.epsilons",
            self.eval_epsilons.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(","),
        );
        kv(
            "eval.delays_ms",
            self.eval_delays_ms.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(","),
        );
        kv(
            "eval.loss_probs",
            self.eval_loss_probs.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(","),
        );
        kv("eval.stop_zone_m", format!("{}", self.stop_zone_m));
        kv("eval.stop_speed", format!("{}", self.stop_speed));
        kv("eval.stop_dwell_s", format!("{}", self.stop_dwell_s));
        kv("eval.lat_rms_gate", format!("{}", self.lat_rms_gate));
        s
    }

    // ---- constructors for the core types ----

    pub fn track(&self) -> Result<TrackSpec, SceneError> {
        if self.track_preset == "explicit" {
            let points = self
                .track_points
                .iter()
                .map(|&(x, y)| advloop_core::geom::Vec2::new(x, y))
                .collect();
            TrackSpec::new(
                points,
                self.lane_width,
                &self.stop_s,
                self.light_s,
                self.light_red_s,
                self.light_green_s,
                self.light_phase_s,
            )
        } else {
            rect_track(RectTrackParams {
                width: self.rect_width,
                height: self.rect_height,
                fillet: self.fillet,
                lane_width: self.lane_width,
                light_red_s: self.light_red_s,
                light_green_s: self.light_green_s,
                light_phase_s: self.light_phase_s,
            })
        }
    }

    pub fn render_params(&self) -> RenderParams {
        RenderParams {
            width: self.render_width,
            height: self.render_height,
            camera_fov: self.fov_deg.to_radians(),
            horizon_row: self.horizon_row,
            camera_height_m: self.camera_height_m,
            noise_sigma: self.noise_sigma,
            min_apparent_px: self.min_apparent_px,
            view_distance_m: self.view_distance_m,
            ..RenderParams::default()
        }
    }

    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            image_size: self.render_width,
            grid: self.grid,
            conv1_out: self.conv1,
            conv2_out: self.conv2,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            momentum: self.momentum,
            seed: self.model_seed,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda_box: self.lambda_box,
            lambda_cls: self.lambda_cls,
            lambda_dfl: self.lambda_dfl,
        }
    }

    pub fn attack_config(&self) -> AttackConfig {
        AttackConfig {
            kind: self.attack_kind,
            epsilon: self.attack_epsilon,
            step_size: self.attack_alpha,
            iterations: self.attack_iterations,
            random_start: self.attack_random_start,
            seed: self.attack_seed,
        }
    }

    pub fn control_config(&self) -> ControlConfig {
        ControlConfig {
            gains: PidGains {
                kp: self.kp,
                ki: self.ki,
                kd: self.kd,
                integral_limit: self.integral_limit,
            },
            v_cruise: self.v_cruise,
            v_max: self.v_max,
            omega_max: self.omega_max,
            stop_conf: self.stop_conf,
            near_box_height: self.near_box_height,
            stop_duration_s: self.stop_duration_s,
            stop_cooldown_s: self.stop_cooldown_s,
            rearm_clear_s: self.rearm_clear_s,
            lane_channel_tol: self.lane_tol,
            lane_min_pixels: self.lane_min_pixels,
        }
    }

    pub fn eval_point(&self) -> EvalPoint {
        EvalPoint {
            conf_threshold: self.eval_conf,
            nms_iou: self.eval_nms_iou,
            iou_threshold: self.eval_iou,
        }
    }

    pub fn compliance_params(&self) -> ComplianceParams {
        ComplianceParams {
            zone_radius_m: self.stop_zone_m,
            speed_threshold: self.stop_speed,
            min_dwell_s: self.stop_dwell_s,
        }
    }

    pub fn scenario(&self) -> Option<AdversaryScenario> {
        if !self.scenario_enabled {
            return None;
        }
        Some(AdversaryScenario {
            stages: vec![
                ScenarioStage {
                    kind: StageKind::Reconnaissance,
                    at_s: self.scenario_recon_at_s,
                    note: "host and port sweep of the cloud endpoint (log only)".into(),
                },
                ScenarioStage {
                    kind: StageKind::Discovery,
                    at_s: self.scenario_discovery_at_s,
                    note: "stream inspection of the vehicle-cloud link (log only)".into(),
                },
                ScenarioStage {
                    kind: StageKind::Impact,
                    at_s: self.scenario_impact_at_s,
                    note: "impairment injected into the vehicle-cloud channel".into(),
                },
            ],
            impact_condition: NetworkCondition {
                delay_ms: self.uplink.delay_ms,
                jitter_ms: self.uplink.jitter_ms,
                loss_prob: self.uplink.loss_prob,
                seed: self.uplink.seed,
            },
        })
    }
}
