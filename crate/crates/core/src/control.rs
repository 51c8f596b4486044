//! Cloud-side decision making: pixel-based lane deviation, PID steering,
//! and traffic-rule logic producing `(v, omega)` commands.

use crate::math;
use crate::perception::Detection;
use crate::render::{ImageTensor, Palette};
use crate::scene::{LightState, ObjectKind};

/// Velocity command executed by the vehicle. `seq` echoes the frame that
/// triggered it so stale commands can be discarded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCommand {
    pub v: f64,
    pub omega: f64,
    pub seq: u32,
}

impl ControlCommand {
    pub const fn halt() -> Self {
        ControlCommand {
            v: 0.0,
            omega: 0.0,
            seq: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Anti-windup clamp on the accumulated integral.
    pub integral_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        PidGains {
            kp: 5.0,
            ki: 0.0,
            kd: 0.4,
            integral_limit: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    pub integral: f64,
    pub prev_error: f64,
    pub initialized: bool,
}

/// One PID update. The derivative term is zero on the first call; the
/// integral is clamped to `integral_limit`.
pub fn pid_step(gains: &PidGains, state: &PidState, error: f64, dt: f64) -> (f64, PidState) {
    let integral = (state.integral + error * dt).clamp(-gains.integral_limit, gains.integral_limit);
    let derivative = if state.initialized {
        (error - state.prev_error) / dt
    } else {
        0.0
    };
    let u = gains.kp * error + gains.ki * integral + gains.kd * derivative;
    (
        u,
        PidState {
            integral,
            prev_error: error,
            initialized: true,
        },
    )
}

/// Lane estimate from a frame: a normalized offset, or no usable marking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LaneEstimate {
    /// `(marking centroid column - image center) / (width / 2)`, in `[-1, 1]`.
    Offset(f64),
    NoLane,
}

/// Classifies lower-half pixels as lane marking by palette proximity and
/// returns the normalized centroid offset. Positive = markings right of
/// center, i.e. the vehicle sits left of the lane.
pub fn estimate_lane_deviation(
    image: &ImageTensor,
    lane_color: [f64; 3],
    channel_tol: f64,
    min_pixels: usize,
) -> LaneEstimate {
    let (h, w) = (image.height, image.width);
    let mut count = 0usize;
    let mut col_sum = 0.0f64;
    for row in h / 2..h {
        for col in 0..w {
            let px = image.pixel(row, col);
            let close = (0..3).all(|c| (px[c] - lane_color[c]).abs() < channel_tol);
            if close {
                count += 1;
                col_sum += col as f64;
            }
        }
    }
    if count < min_pixels {
        return LaneEstimate::NoLane;
    }
    let center = w as f64 / 2.0;
    let centroid = col_sum / count as f64;
    LaneEstimate::Offset(((centroid - center) / center).clamp(-1.0, 1.0))
}

/// Looks inside a detection box for lamp-colored pixels to tell a red from
/// a green traffic light. Returns `None` when neither lamp color is found.
pub fn classify_light_color(
    image: &ImageTensor,
    det_box: &crate::bbox::BBox,
    palette: &Palette,
) -> LightState {
    let (l, t, r, b) = det_box.corners();
    let w = image.width as f64;
    let h = image.height as f64;
    let col0 = math::floor(l * w).max(0.0) as usize;
    let col1 = math::ceil(r * w).min(w) as usize;
    let row0 = math::floor(t * h).max(0.0) as usize;
    let row1 = math::ceil(b * h).min(h) as usize;
    let tol = 0.15;
    let mut red = 0usize;
    let mut green = 0usize;
    for row in row0..row1 {
        for col in col0..col1 {
            let px = image.pixel(row, col);
            if (0..3).all(|c| (px[c] - palette.lamp_red[c]).abs() < tol) {
                red += 1;
            } else if (0..3).all(|c| (px[c] - palette.lamp_green[c]).abs() < tol) {
                green += 1;
            }
        }
    }
    if red == 0 && green == 0 {
        LightState::None
    } else if red >= green {
        LightState::Red
    } else {
        LightState::Green
    }
}

/// A detection annotated with the perceived lamp color (always
/// `LightState::None` for classes other than traffic lights).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perceived {
    pub det: Detection,
    pub light: LightState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriveMode {
    Cruise,
    Stopping,
    WaitingLight,
}

/// Traffic-rule state machine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleState {
    pub mode: DriveMode,
    /// Seconds remaining in the current stop.
    pub stop_timer: f64,
    /// Seconds remaining until stop signs may trigger again.
    pub cooldown: f64,
    /// Continuous seconds without a near stop-sign detection; once this
    /// exceeds the re-arm threshold the sign has been passed and the
    /// cooldown clears early.
    pub sign_absent_s: f64,
}

impl Default for RuleState {
    fn default() -> Self {
        RuleState {
            mode: DriveMode::Cruise,
            stop_timer: 0.0,
            cooldown: 0.0,
            sign_absent_s: 0.0,
        }
    }
}

/// Full controller state carried between frames.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlState {
    pub rule: RuleState,
    pub pid: PidState,
    pub last_omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlConfig {
    pub gains: PidGains,
    pub v_cruise: f64,
    pub v_max: f64,
    pub omega_max: f64,
    /// Minimum confidence for rule-relevant detections.
    pub stop_conf: f64,
    /// Normalized box height above which an object counts as near.
    pub near_box_height: f64,
    pub stop_duration_s: f64,
    pub stop_cooldown_s: f64,
    /// Continuous sign absence that clears the cooldown early (sign passed).
    pub rearm_clear_s: f64,
    pub lane_channel_tol: f64,
    pub lane_min_pixels: usize,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            gains: PidGains::default(),
            v_cruise: 0.3,
            v_max: 0.5,
            omega_max: 4.0,
            stop_conf: 0.5,
            near_box_height: 0.25,
            stop_duration_s: 2.0,
            stop_cooldown_s: 10.0,
            rearm_clear_s: 1.0,
            lane_channel_tol: 0.15,
            lane_min_pixels: 10,
        }
    }
}

fn is_near(cfg: &ControlConfig, p: &Perceived, kind: ObjectKind) -> bool {
    p.det.class == kind && p.det.confidence >= cfg.stop_conf && p.det.bbox.h >= cfg.near_box_height
}

/// One decision step. Stop-sign handling takes precedence over the light;
/// otherwise the vehicle cruises under PID steering, holding the previous
/// turn rate at half speed when no lane marking is visible.
pub fn decide(
    cfg: &ControlConfig,
    perceived: &[Perceived],
    deviation: LaneEstimate,
    state: &ControlState,
    dt: f64,
) -> (ControlCommand, ControlState) {
    let mut next = *state;

    let sign_near = perceived.iter().any(|p| is_near(cfg, p, ObjectKind::StopSign));
    let red_near = perceived
        .iter()
        .any(|p| is_near(cfg, p, ObjectKind::TrafficLight) && p.light == LightState::Red);

    // cooldown bookkeeping
    if sign_near {
        next.rule.sign_absent_s = 0.0;
    } else {
        next.rule.sign_absent_s += dt;
    }
    next.rule.cooldown = (next.rule.cooldown - dt).max(0.0);
    if next.rule.cooldown > 0.0 && next.rule.sign_absent_s >= cfg.rearm_clear_s {
        next.rule.cooldown = 0.0;
    }

    if next.rule.mode == DriveMode::Stopping {
        next.rule.stop_timer = (next.rule.stop_timer - dt).max(0.0);
        if next.rule.stop_timer <= 0.0 {
            next.rule.mode = DriveMode::Cruise;
            next.rule.cooldown = cfg.stop_cooldown_s;
            next.rule.sign_absent_s = 0.0;
        } else {
            return (halted(state), next);
        }
    }

    if sign_near && next.rule.cooldown <= 0.0 && next.rule.mode != DriveMode::Stopping {
        next.rule.mode = DriveMode::Stopping;
        next.rule.stop_timer = cfg.stop_duration_s;
        return (halted(state), next);
    }

    if red_near {
        next.rule.mode = DriveMode::WaitingLight;
        return (halted(state), next);
    }

    next.rule.mode = DriveMode::Cruise;
    let (v, omega) = match deviation {
        LaneEstimate::Offset(dev) => {
            let (u, pid) = pid_step(&cfg.gains, &state.pid, dev, dt);
            next.pid = pid;
            let omega = (-u).clamp(-cfg.omega_max, cfg.omega_max);
            next.last_omega = omega;
            (cfg.v_cruise, omega)
        }
        LaneEstimate::NoLane => (cfg.v_cruise / 2.0, state.last_omega),
    };
    (
        ControlCommand {
            v: v.clamp(-cfg.v_max, cfg.v_max),
            omega,
            seq: 0,
        },
        next,
    )
}

fn halted(_state: &ControlState) -> ControlCommand {
    ControlCommand {
        v: 0.0,
        omega: 0.0,
        seq: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::BBox;

    #[test]
    fn pid_pure_proportional() {
        let gains = PidGains {
            kp: 1.0,
            ki: 0.0,
            kd: 0.0,
            integral_limit: 1.0,
        };
        let (u, _) = pid_step(&gains, &PidState::default(), 0.2, 0.1);
        assert!((u - 0.2).abs() < 1e-15);
    }

    #[test]
    fn pid_integration_by_hand() {
        let gains = PidGains {
            kp: 0.0,
            ki: 1.0,
            kd: 0.0,
            integral_limit: 1.0,
        };
        let mut st = PidState::default();
        let mut outs = alloc::vec::Vec::new();
        for _ in 0..3 {
            let (u, next) = pid_step(&gains, &st, 0.5, 0.1);
            outs.push(u);
            st = next;
        }
        assert!((outs[0] - 0.05).abs() < 1e-12);
        assert!((outs[1] - 0.10).abs() < 1e-12);
        assert!((outs[2] - 0.15).abs() < 1e-12);
    }

    #[test]
    fn pid_derivative_quotient_and_first_call() {
        let gains = PidGains {
            kp: 0.0,
            ki: 0.0,
            kd: 1.0,
            integral_limit: 1.0,
        };
        let (u0, st) = pid_step(&gains, &PidState::default(), 0.0, 0.1);
        assert_eq!(u0, 0.0); // derivative suppressed on first call
        let (u1, _) = pid_step(&gains, &st, 0.2, 0.1);
        assert!((u1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pid_integral_clamps() {
        let gains = PidGains {
            kp: 0.0,
            ki: 1.0,
            kd: 0.0,
            integral_limit: 0.2,
        };
        let mut st = PidState::default();
        for _ in 0..100 {
            let (_, next) = pid_step(&gains, &st, 1.0, 0.1);
            st = next;
        }
        assert!((st.integral - 0.2).abs() < 1e-12);
    }

    fn near_det(kind: ObjectKind, conf: f64, h: f64) -> Perceived {
        Perceived {
            det: Detection {
                bbox: BBox::new(0.5, 0.6, 0.2, h),
                class: kind,
                confidence: conf,
            },
            light: LightState::None,
        }
    }

    #[test]
    fn cruise_straight_with_no_detections() {
        let cfg = ControlConfig::default();
        let (cmd, _) = decide(&cfg, &[], LaneEstimate::Offset(0.0), &ControlState::default(), 0.05);
        assert!((cmd.v - cfg.v_cruise).abs() < 1e-12);
        assert!(cmd.omega.abs() < 1e-12);
    }

    #[test]
    fn stop_sign_trigger_and_cooldown_hold() {
        let cfg = ControlConfig::default();
        let sign = near_det(ObjectKind::StopSign, 0.9, 0.3);
        let dev = LaneEstimate::Offset(0.0);
        let mut st = ControlState::default();
        let dt = 0.05;

        // trigger
        let (cmd, next) = decide(&cfg, &[sign], dev, &st, dt);
        assert_eq!(cmd.v, 0.0);
        assert_eq!(next.rule.mode, DriveMode::Stopping);
        st = next;

        // stays stopped for the full stop duration with the sign in view
        let mut stopped_ticks = 0;
        loop {
            let (cmd, next) = decide(&cfg, &[sign], dev, &st, dt);
            st = next;
            if st.rule.mode != DriveMode::Stopping {
                break;
            }
            assert_eq!(cmd.v, 0.0);
            stopped_ticks += 1;
            assert!(stopped_ticks < 100, "never exited stopping");
        }
        let stopped_s = stopped_ticks as f64 * dt;
        assert!((stopped_s - cfg.stop_duration_s).abs() <= 2.0 * dt + 1e-9);

        // the same (continuously visible) sign must not re-trigger within
        // the cooldown window
        let mut t = 0.0;
        while t < cfg.stop_cooldown_s - dt {
            let (cmd, next) = decide(&cfg, &[sign], dev, &st, dt);
            st = next;
            t += dt;
            assert_ne!(st.rule.mode, DriveMode::Stopping, "re-triggered at t = {t}");
            assert!((cmd.v - cfg.v_cruise).abs() < 1e-12);
        }
    }

    #[test]
    fn cooldown_rearms_after_sign_passes() {
        let cfg = ControlConfig::default();
        let sign = near_det(ObjectKind::StopSign, 0.9, 0.3);
        let dev = LaneEstimate::Offset(0.0);
        let dt = 0.05;
        let mut st = ControlState::default();
        // complete one full stop
        let (_, next) = decide(&cfg, &[sign], dev, &st, dt);
        st = next;
        for _ in 0..((cfg.stop_duration_s / dt) as usize + 2) {
            let (_, next) = decide(&cfg, &[sign], dev, &st, dt);
            st = next;
        }
        assert!(st.rule.cooldown > 0.0);
        // sign leaves view; after the re-arm window a new sign triggers again
        for _ in 0..((cfg.rearm_clear_s / dt) as usize + 1) {
            let (_, next) = decide(&cfg, &[], dev, &st, dt);
            st = next;
        }
        let (cmd, next) = decide(&cfg, &[sign], dev, &st, dt);
        assert_eq!(next.rule.mode, DriveMode::Stopping);
        assert_eq!(cmd.v, 0.0);
    }

    #[test]
    fn red_light_holds_until_green() {
        let cfg = ControlConfig::default();
        let mut red = near_det(ObjectKind::TrafficLight, 0.9, 0.3);
        red.light = LightState::Red;
        let dev = LaneEstimate::Offset(0.0);
        let mut st = ControlState::default();
        for _ in 0..40 {
            let (cmd, next) = decide(&cfg, &[red], dev, &st, 0.05);
            st = next;
            assert_eq!(cmd.v, 0.0);
            assert_eq!(st.rule.mode, DriveMode::WaitingLight);
        }
        let mut green = red;
        green.light = LightState::Green;
        let (cmd, next) = decide(&cfg, &[green], dev, &st, 0.05);
        assert!((cmd.v - cfg.v_cruise).abs() < 1e-12);
        assert_eq!(next.rule.mode, DriveMode::Cruise);
    }

    #[test]
    fn no_lane_fallback_holds_omega_at_half_speed() {
        let cfg = ControlConfig::default();
        let mut st = ControlState::default();
        let (_, next) = decide(&cfg, &[], LaneEstimate::Offset(0.4), &st, 0.05);
        st = next;
        let held = st.last_omega;
        assert!(held != 0.0);
        let (cmd, _) = decide(&cfg, &[], LaneEstimate::NoLane, &st, 0.05);
        assert_eq!(cmd.omega, held);
        assert!((cmd.v - cfg.v_cruise / 2.0).abs() < 1e-12);
    }

    #[test]
    fn commands_respect_limits() {
        let cfg = ControlConfig::default();
        let (cmd, _) = decide(
            &cfg,
            &[],
            LaneEstimate::Offset(1.0),
            &ControlState::default(),
            1e-3,
        );
        assert!(cmd.v.abs() <= cfg.v_max + 1e-12);
        assert!(cmd.omega.abs() <= cfg.omega_max + 1e-12);
    }
}
