//! Track geometry, scene objects, and vehicle kinematics.
//!
//! The world is a closed polyline centerline with a fixed lane width, three
//! stop lines, one traffic light, and a handful of rendered objects. The
//! vehicle is a unicycle integrated with explicit Euler at a fixed step.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::control::ControlCommand;
use crate::geom::{normalize_angle, Pose2, Vec2, PI};
use crate::math;
use crate::rng::{self, stream_rng};

/// Default lookahead window for [`nearest_stop_zone`], meters of arc.
pub const DEFAULT_STOP_LOOKAHEAD_M: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub enum SceneError {
    NonFinite(String),
    InvalidTrack(String),
    /// Collision-free object placement failed after bounded retries.
    PlacementFailed { attempts: u32 },
}

impl core::fmt::Display for SceneError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SceneError::NonFinite(what) => write!(f, "non-finite input: {what}"),
            SceneError::InvalidTrack(why) => write!(f, "invalid track: {why}"),
            SceneError::PlacementFailed { attempts } => {
                write!(f, "object placement failed after {attempts} attempts")
            }
        }
    }
}

impl core::error::Error for SceneError {}

/// Vehicle pose plus simulation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Radians in `(-pi, pi]`, normalized after every update.
    pub heading: f64,
    pub time: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
            time: 0.0,
        }
    }

    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.x, self.y, self.heading)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.heading.is_finite() && self.time.is_finite()
    }
}

/// Object classes; matches the detector's class list exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectKind {
    Vehicle,
    StopSign,
    TrafficLight,
    Intersection,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 4] = [
        ObjectKind::Vehicle,
        ObjectKind::StopSign,
        ObjectKind::TrafficLight,
        ObjectKind::Intersection,
    ];

    pub fn class_id(self) -> usize {
        match self {
            ObjectKind::Vehicle => 0,
            ObjectKind::StopSign => 1,
            ObjectKind::TrafficLight => 2,
            ObjectKind::Intersection => 3,
        }
    }

    pub fn from_class_id(id: usize) -> Option<ObjectKind> {
        ObjectKind::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectKind::Vehicle => "vehicle",
            ObjectKind::StopSign => "stop_sign",
            ObjectKind::TrafficLight => "traffic_light",
            ObjectKind::Intersection => "intersection",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LightState {
    Red,
    Green,
    /// Only valid for kinds other than `TrafficLight`.
    None,
}

/// A rendered world object. Standing objects are billboards anchored at
/// ground level; ground decals (the intersection bands) lie flat on the road.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneObject {
    pub kind: ObjectKind,
    pub pose: Pose2,
    /// Physical width, meters.
    pub width_m: f64,
    /// Physical height for standing objects; ground-plane depth for decals.
    pub height_m: f64,
    pub is_ground_decal: bool,
    pub light_state: LightState,
}

/// A stop line: an arc-length position plus the centerline pose there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopLine {
    pub s: f64,
    pub pose: Pose2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficLightSpec {
    pub s: f64,
    pub pose: Pose2,
    pub red_duration: f64,
    pub green_duration: f64,
    /// Cycle offset at t = 0: the cycle starts `phase` seconds in.
    pub phase: f64,
}

impl TrafficLightSpec {
    pub fn is_red_at(&self, t: f64) -> bool {
        let cycle = self.red_duration + self.green_duration;
        math::rem_euclid(t + self.phase, cycle) < self.red_duration
    }
}

/// Closed track: centerline polyline, lane width, stop lines, traffic light.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSpec {
    centerline: Vec<Vec2>,
    /// cum_s[i] = arc length at vertex i; cum_s[n] = lap length.
    cum_s: Vec<f64>,
    pub lane_width: f64,
    pub stop_lines: Vec<StopLine>,
    pub traffic_light: TrafficLightSpec,
    lap_length: f64,
}

/// Result of projecting a point onto the centerline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackProjection {
    /// Arc-length position in `[0, lap_length)`.
    pub s: f64,
    /// Signed perpendicular distance; positive = left of travel direction.
    pub lateral: f64,
    pub segment: usize,
}

impl TrackSpec {
    /// Builds a track from a closed polyline (last vertex connects back to
    /// the first), stop-line arc positions, and a traffic light spec.
    pub fn new(
        centerline: Vec<Vec2>,
        lane_width: f64,
        stop_s: &[f64],
        light_s: f64,
        red_duration: f64,
        green_duration: f64,
        light_phase: f64,
    ) -> Result<TrackSpec, SceneError> {
        if centerline.len() < 3 {
            return Err(SceneError::InvalidTrack(String::from(
                "centerline needs at least 3 vertices",
            )));
        }
        if !(lane_width > 0.0) {
            return Err(SceneError::InvalidTrack(String::from("lane_width must be > 0")));
        }
        if stop_s.len() != 3 {
            return Err(SceneError::InvalidTrack(format!(
                "expected exactly 3 stop lines, got {}",
                stop_s.len()
            )));
        }
        for p in &centerline {
            if !p.is_finite() {
                return Err(SceneError::NonFinite(String::from("centerline vertex")));
            }
        }
        let n = centerline.len();
        let mut cum_s = Vec::with_capacity(n + 1);
        cum_s.push(0.0);
        for i in 0..n {
            let a = centerline[i];
            let b = centerline[(i + 1) % n];
            let len = (b - a).norm();
            if len <= 1e-9 {
                return Err(SceneError::InvalidTrack(String::from("degenerate segment")));
            }
            cum_s.push(cum_s[i] + len);
        }
        let lap_length = cum_s[n];
        if self_intersects(&centerline) {
            return Err(SceneError::InvalidTrack(String::from("centerline self-intersects")));
        }

        let mut track = TrackSpec {
            centerline,
            cum_s,
            lane_width,
            stop_lines: Vec::new(),
            traffic_light: TrafficLightSpec {
                s: 0.0,
                pose: Pose2::new(0.0, 0.0, 0.0),
                red_duration,
                green_duration,
                phase: light_phase,
            },
            lap_length,
        };
        track.stop_lines = stop_s
            .iter()
            .map(|&s| {
                let s = math::rem_euclid(s, lap_length);
                StopLine {
                    s,
                    pose: track.pose_at(s),
                }
            })
            .collect();
        let ls = math::rem_euclid(light_s, lap_length);
        track.traffic_light.s = ls;
        track.traffic_light.pose = track.pose_at(ls);
        Ok(track)
    }

    pub fn lap_length(&self) -> f64 {
        self.lap_length
    }

    pub fn centerline(&self) -> &[Vec2] {
        &self.centerline
    }

    /// Centerline point at arc position `s` (wrapped).
    pub fn point_at(&self, s: f64) -> Vec2 {
        let (seg, t) = self.locate(s);
        let a = self.centerline[seg];
        let b = self.centerline[(seg + 1) % self.centerline.len()];
        a + (b - a) * t
    }

    /// Centerline pose (point + travel direction) at arc position `s`.
    pub fn pose_at(&self, s: f64) -> Pose2 {
        let (seg, t) = self.locate(s);
        let a = self.centerline[seg];
        let b = self.centerline[(seg + 1) % self.centerline.len()];
        let dir = b - a;
        Pose2 {
            pos: a + dir * t,
            heading: math::atan2(dir.y, dir.x),
        }
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let s = math::rem_euclid(s, self.lap_length);
        // binary search over cumulative lengths
        let mut lo = 0usize;
        let mut hi = self.centerline.len();
        while lo + 1 < hi {
            let mid = (lo + hi) / 2;
            if self.cum_s[mid] <= s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let seg_len = self.cum_s[lo + 1] - self.cum_s[lo];
        (lo, (s - self.cum_s[lo]) / seg_len)
    }

    /// Projects a world point onto the centerline. Ties between segments
    /// (corner vertices) go to the lower segment index.
    pub fn project(&self, p: Vec2) -> TrackProjection {
        let n = self.centerline.len();
        let mut best = (f64::INFINITY, 0usize, 0.0f64);
        for i in 0..n {
            let a = self.centerline[i];
            let b = self.centerline[(i + 1) % n];
            let ab = b - a;
            let len2 = ab.dot(ab);
            let t = (p - a).dot(ab).clamp(0.0, len2) / len2;
            let q = a + ab * t;
            let d2 = (p - q).dot(p - q);
            if d2 < best.0 - 1e-15 {
                best = (d2, i, t);
            }
        }
        let (_, seg, t) = best;
        let a = self.centerline[seg];
        let b = self.centerline[(seg + 1) % n];
        let ab = b - a;
        let q = a + ab * t;
        let dir = ab.normalized();
        let lateral = dir.cross(p - q);
        TrackProjection {
            s: math::rem_euclid(self.cum_s[seg] + t * (self.cum_s[seg + 1] - self.cum_s[seg]), self.lap_length),
            lateral,
            segment: seg,
        }
    }

    /// Forward arc distance from `from_s` to `to_s` (wrapped into `[0, lap)`).
    pub fn forward_distance(&self, from_s: f64, to_s: f64) -> f64 {
        math::rem_euclid(to_s - from_s, self.lap_length)
    }
}

/// Rectangular-loop preset with filleted corners.
///
/// Counter-clockwise travel; `s = 0` at the middle of the bottom edge.
/// Stop lines sit just before the corner arcs of the first three corners
/// encountered from the start; the traffic light guards the fourth.
#[derive(Debug, Clone, Copy)]
pub struct RectTrackParams {
    pub width: f64,
    pub height: f64,
    pub fillet: f64,
    pub lane_width: f64,
    pub light_red_s: f64,
    pub light_green_s: f64,
    pub light_phase_s: f64,
}

impl Default for RectTrackParams {
    fn default() -> Self {
        RectTrackParams {
            width: 3.0,
            height: 2.0,
            fillet: 0.1,
            lane_width: 0.2,
            light_red_s: 4.0,
            light_green_s: 8.0,
            light_phase_s: 0.0,
        }
    }
}

/// Arc segments per 90-degree fillet.
const FILLET_STEPS: usize = 6;
/// Stop lines sit this far before the corner arc begins.
const STOP_SETBACK_M: f64 = 0.05;

pub fn rect_track(p: RectTrackParams) -> Result<TrackSpec, SceneError> {
    let (w, h, f) = (p.width, p.height, p.fillet);
    if !(f > 0.0 && w > 4.0 * f && h > 4.0 * f) {
        return Err(SceneError::InvalidTrack(String::from(
            "rect track needs width, height > 4 * fillet",
        )));
    }
    let mut pts: Vec<Vec2> = Vec::new();
    let mut corner_entry_s = [0.0f64; 4]; // arc position where each corner arc begins
    let mut s_acc = 0.0;
    let push = |pts: &mut Vec<Vec2>, s_acc: &mut f64, q: Vec2| {
        if let Some(&last) = pts.last() {
            *s_acc += (q - last).norm();
        }
        pts.push(q);
    };

    // start mid-bottom, heading +x
    push(&mut pts, &mut s_acc, Vec2::new(w / 2.0, 0.0));
    // corner arc centers and entry angles, CCW order
    let corners = [
        (Vec2::new(w - f, f), -PI / 2.0),
        (Vec2::new(w - f, h - f), 0.0),
        (Vec2::new(f, h - f), PI / 2.0),
        (Vec2::new(f, f), PI),
    ];
    for (i, (c, a0)) in corners.iter().enumerate() {
        // straight run ends where the arc begins
        let entry = *c + Vec2::new(math::cos(*a0), math::sin(*a0)) * f;
        push(&mut pts, &mut s_acc, entry);
        corner_entry_s[i] = s_acc;
        for k in 1..=FILLET_STEPS {
            let a = a0 + (PI / 2.0) * (k as f64 / FILLET_STEPS as f64);
            push(&mut pts, &mut s_acc, *c + Vec2::new(math::cos(a), math::sin(a)) * f);
        }
    }

    let stop_s = [
        corner_entry_s[0] - STOP_SETBACK_M,
        corner_entry_s[1] - STOP_SETBACK_M,
        corner_entry_s[2] - STOP_SETBACK_M,
    ];
    let light_s = corner_entry_s[3] - STOP_SETBACK_M;
    TrackSpec::new(
        pts,
        p.lane_width,
        &stop_s,
        light_s,
        p.light_red_s,
        p.light_green_s,
        p.light_phase_s,
    )
}

/// Unicycle step: explicit Euler, position updated with the pre-update
/// heading, then heading advanced and normalized.
pub fn step_kinematics(
    state: &VehicleState,
    cmd: &ControlCommand,
    dt: f64,
) -> Result<VehicleState, SceneError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(SceneError::NonFinite(format!("dt = {dt}")));
    }
    if !cmd.v.is_finite() || !cmd.omega.is_finite() {
        return Err(SceneError::NonFinite(format!("command v={} omega={}", cmd.v, cmd.omega)));
    }
    if !state.is_finite() {
        return Err(SceneError::NonFinite(String::from("vehicle state")));
    }
    Ok(VehicleState {
        x: state.x + cmd.v * math::cos(state.heading) * dt,
        y: state.y + cmd.v * math::sin(state.heading) * dt,
        heading: normalize_angle(state.heading + cmd.omega * dt),
        time: state.time + dt,
    })
}

/// Signed perpendicular distance to the nearest centerline segment;
/// positive = left of the direction of travel.
pub fn lateral_deviation(state: &VehicleState, track: &TrackSpec) -> f64 {
    track.project(Vec2::new(state.x, state.y)).lateral
}

/// Next upcoming stop line within `lookahead_m` of forward arc distance.
/// Returns the 1-based stop number (matching "Stop 1..3" reporting) and the
/// distance along the track.
pub fn nearest_stop_zone(
    state: &VehicleState,
    track: &TrackSpec,
    lookahead_m: f64,
) -> Option<(usize, f64)> {
    let s_v = track.project(Vec2::new(state.x, state.y)).s;
    track
        .stop_lines
        .iter()
        .enumerate()
        .map(|(i, sl)| (i + 1, track.forward_distance(s_v, sl.s)))
        .filter(|&(_, d)| d <= lookahead_m)
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
}

// Physical object dimensions, meters. Desk scale: the world is a 3 m x 2 m
// tabletop loop, so everything is roughly Duckietown sized.
pub const VEHICLE_W_M: f64 = 0.16;
pub const VEHICLE_H_M: f64 = 0.10;
pub const STOP_SIGN_W_M: f64 = 0.09;
pub const STOP_SIGN_H_M: f64 = 0.14;
pub const LIGHT_W_M: f64 = 0.06;
pub const LIGHT_H_M: f64 = 0.16;
pub const BAND_DEPTH_M: f64 = 0.12;
/// Roadside objects stand this far right of the lane edge.
pub const ROADSIDE_OFFSET_M: f64 = 0.06;
/// Signs and the light stand this far past their line along the track, so
/// they stay inside the camera's field of view on the final approach.
pub const SIGN_AHEAD_M: f64 = 0.18;

/// The fixed furniture of the track: one intersection band per stop line and
/// at the light, stop signs beside the first three, the light at the fourth.
pub fn fixed_objects(track: &TrackSpec, light_red: bool) -> Vec<SceneObject> {
    let mut objects = Vec::new();
    let side = track.lane_width / 2.0 + ROADSIDE_OFFSET_M;
    for sl in &track.stop_lines {
        let ahead = sl.pose.forward() * SIGN_AHEAD_M;
        let right = sl.pose.forward().perp_left() * -side;
        objects.push(SceneObject {
            kind: ObjectKind::StopSign,
            pose: Pose2 {
                pos: sl.pose.pos + ahead + right,
                heading: sl.pose.heading,
            },
            width_m: STOP_SIGN_W_M,
            height_m: STOP_SIGN_H_M,
            is_ground_decal: false,
            light_state: LightState::None,
        });
        objects.push(band_at(sl.pose, track.lane_width));
    }
    let lp = track.traffic_light.pose;
    let ahead = lp.forward() * SIGN_AHEAD_M;
    let right = lp.forward().perp_left() * -side;
    objects.push(SceneObject {
        kind: ObjectKind::TrafficLight,
        pose: Pose2 {
            pos: lp.pos + ahead + right,
            heading: lp.heading,
        },
        width_m: LIGHT_W_M,
        height_m: LIGHT_H_M,
        is_ground_decal: false,
        light_state: if light_red { LightState::Red } else { LightState::Green },
    });
    objects.push(band_at(lp, track.lane_width));
    objects
}

fn band_at(pose: Pose2, lane_width: f64) -> SceneObject {
    SceneObject {
        kind: ObjectKind::Intersection,
        pose,
        width_m: lane_width,
        height_m: BAND_DEPTH_M,
        is_ground_decal: true,
        light_state: LightState::None,
    }
}

/// A sampled world: objects plus the camera viewpoint the frame is rendered
/// from.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    pub camera: VehicleState,
}

const PLACEMENT_ATTEMPTS: u32 = 100;
const MIN_OBJECT_SPACING_M: f64 = 0.22;
const MIN_CAMERA_CLEARANCE_M: f64 = 0.25;

/// Deterministic scene draw for dataset generation: fixed track furniture,
/// a random red/green light, 0-3 collision-free vehicles, and a random
/// viewpoint on the track.
///
/// Half of the viewpoints are drawn uniformly along the lap; the other half
/// sit on an approach to one of the corner intersections, so the fixed
/// signs, lights and painted bands appear at useful scales often enough for
/// training.
pub fn sample_scene(rng_seed: u64, track: &TrackSpec) -> Result<Scene, SceneError> {
    let mut rng = stream_rng(rng_seed, rng::stream::SCENE, 0);

    let approach: bool = rng.gen_bool(0.5);
    let s: f64 = if approach {
        let anchor = rng.gen_range(0..=track.stop_lines.len());
        let anchor_s = if anchor < track.stop_lines.len() {
            track.stop_lines[anchor].s
        } else {
            track.traffic_light.s
        };
        anchor_s - rng.gen_range(0.15..1.3)
    } else {
        rng.gen_range(0.0..track.lap_length())
    };
    let lateral: f64 = rng.gen_range(-0.06..0.06);
    let dheading: f64 = rng.gen_range(-0.2..0.2);
    let pose = track.pose_at(s);
    let pos = pose.pos + pose.forward().perp_left() * lateral;
    let camera = VehicleState::new(pos.x, pos.y, pose.heading + dheading);
    let camera_s = track.project(pos).s;

    let light_red: bool = rng.gen_bool(0.5);
    let mut objects = fixed_objects(track, light_red);

    // vehicles are parked relative to the camera's view so most draws are
    // actually visible in the frame
    let n_vehicles: usize = rng.gen_range(0..=3);
    for _ in 0..n_vehicles {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let vs: f64 = camera_s + rng.gen_range(0.3..1.4);
            let vlat: f64 = rng.gen_range(-0.3..0.3);
            let vheading: f64 = rng.gen_range(-PI..PI);
            let vpose = track.pose_at(vs);
            let vpos = vpose.pos + vpose.forward().perp_left() * vlat;
            let clear_of_cam = (vpos - Vec2::new(camera.x, camera.y)).norm() >= MIN_CAMERA_CLEARANCE_M;
            let clear_of_objs = objects
                .iter()
                .filter(|o| !o.is_ground_decal)
                .all(|o| (vpos - o.pose.pos).norm() >= MIN_OBJECT_SPACING_M);
            if clear_of_cam && clear_of_objs {
                objects.push(SceneObject {
                    kind: ObjectKind::Vehicle,
                    pose: Pose2 {
                        pos: vpos,
                        heading: vheading,
                    },
                    width_m: VEHICLE_W_M,
                    height_m: VEHICLE_H_M,
                    is_ground_decal: false,
                    light_state: LightState::None,
                });
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(SceneError::PlacementFailed {
                attempts: PLACEMENT_ATTEMPTS,
            });
        }
    }
    Ok(Scene { objects, camera })
}

fn self_intersects(pts: &[Vec2]) -> bool {
    let n = pts.len();
    let seg = |i: usize| (pts[i], pts[(i + 1) % n]);
    for i in 0..n {
        for j in (i + 1)..n {
            // skip adjacent segments (shared vertex)
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (a, b) = seg(i);
            let (c, d) = seg(j);
            if segments_cross(a, b, c, d) {
                return true;
            }
        }
    }
    false
}

fn segments_cross(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let orient = |p: Vec2, q: Vec2, r: Vec2| (q - p).cross(r - p);
    let d1 = orient(a, b, c);
    let d2 = orient(a, b, d);
    let d3 = orient(c, d, a);
    let d4 = orient(c, d, b);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmd(v: f64, omega: f64) -> ControlCommand {
        ControlCommand { v, omega, seq: 0 }
    }

    #[test]
    fn kinematics_straight_line() {
        let s = VehicleState::new(0.0, 0.0, 0.0);
        let s2 = step_kinematics(&s, &cmd(1.0, 0.0), 0.1).unwrap();
        assert!((s2.x - 0.1).abs() < 1e-15);
        assert!(s2.y.abs() < 1e-15);
        assert!(s2.heading.abs() < 1e-15);
        assert!((s2.time - 0.1).abs() < 1e-15);
    }

    #[test]
    fn kinematics_pure_rotation() {
        let s = VehicleState::new(0.0, 0.0, 0.0);
        let s2 = step_kinematics(&s, &cmd(0.0, 1.0), 0.1).unwrap();
        assert!(s2.x.abs() < 1e-15 && s2.y.abs() < 1e-15);
        assert!((s2.heading - 0.1).abs() < 1e-15);
    }

    #[test]
    fn kinematics_axis_aligned_heading() {
        let s = VehicleState::new(0.0, 0.0, PI / 2.0);
        let s2 = step_kinematics(&s, &cmd(1.0, 0.0), 0.1).unwrap();
        assert!(s2.x.abs() < 1e-15);
        assert!((s2.y - 0.1).abs() < 1e-12);
        assert!((s2.heading - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn kinematics_zero_command_is_identity() {
        let s = VehicleState::new(1.5, -2.0, 0.7);
        let s2 = step_kinematics(&s, &cmd(0.0, 0.0), 0.01).unwrap();
        assert_eq!((s2.x, s2.y, s2.heading), (s.x, s.y, s.heading));
    }

    #[test]
    fn kinematics_rejects_non_finite() {
        let s = VehicleState::new(0.0, 0.0, 0.0);
        assert!(step_kinematics(&s, &cmd(f64::NAN, 0.0), 0.1).is_err());
        assert!(step_kinematics(&s, &cmd(0.0, f64::INFINITY), 0.1).is_err());
        assert!(step_kinematics(&s, &cmd(0.0, 0.0), 0.0).is_err());
    }

    fn square_track() -> TrackSpec {
        // plain unit-ish square, no preset: vertices only
        TrackSpec::new(
            alloc::vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(2.0, 0.0),
                Vec2::new(2.0, 2.0),
                Vec2::new(0.0, 2.0),
            ],
            0.2,
            &[0.5, 2.5, 4.5],
            6.5,
            4.0,
            8.0,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn lateral_deviation_on_and_off_centerline() {
        let track = square_track();
        let on = VehicleState::new(1.0, 0.0, 0.0);
        assert!(lateral_deviation(&on, &track).abs() < 1e-12);
        // traveling +x along bottom edge, left is +y
        let left = VehicleState::new(1.0, 0.05, 0.0);
        assert!((lateral_deviation(&left, &track) - 0.05).abs() < 1e-12);
        let right = VehicleState::new(1.0, -0.05, 0.0);
        assert!((lateral_deviation(&right, &track) + 0.05).abs() < 1e-12);
    }

    #[test]
    fn corner_tie_breaks_to_lower_segment() {
        let track = square_track();
        // equidistant to segment 0 (bottom) and segment 3 (left)
        let p = VehicleState::new(0.05, 0.05, 0.0);
        let proj = track.project(Vec2::new(p.x, p.y));
        assert_eq!(proj.segment, 0);
        assert!((proj.lateral - 0.05).abs() < 1e-12);
    }

    #[test]
    fn stop_zone_lookup() {
        let track = square_track();
        // stop 1 at s = 0.5 on the bottom edge
        let before = VehicleState::new(0.2, 0.0, 0.0);
        let hit = nearest_stop_zone(&before, &track, 1.0).unwrap();
        assert_eq!(hit.0, 1);
        assert!((hit.1 - 0.3).abs() < 1e-12);

        // 2.0 m of arc before stop 1 (wrapping backwards around the loop)
        let far_pose = track.pose_at(0.5 - 2.0 + 8.0);
        let far = VehicleState::new(far_pose.pos.x, far_pose.pos.y, far_pose.heading);
        let miss = nearest_stop_zone(&far, &track, 1.0);
        assert!(miss.is_none());

        let on2 = track.stop_lines[1].pose.pos;
        let exact = nearest_stop_zone(&VehicleState::new(on2.x, on2.y, 0.0), &track, 1.0).unwrap();
        assert_eq!(exact.0, 2);
        assert!(exact.1.abs() < 1e-9);
    }

    #[test]
    fn rect_preset_shape() {
        let track = rect_track(RectTrackParams::default()).unwrap();
        assert_eq!(track.stop_lines.len(), 3);
        // perimeter of 3x2 with r=0.1 fillets
        // fillet arcs are discretized as chords, so allow a small deficit
        let expected = 2.0 * (3.0 + 2.0) - 8.0 * 0.1 + 2.0 * PI * 0.1;
        assert!((track.lap_length() - expected).abs() < 5e-3, "lap {}", track.lap_length());
        // s = 0 is mid-bottom heading +x
        let p0 = track.pose_at(0.0);
        assert!((p0.pos.x - 1.5).abs() < 1e-9 && p0.pos.y.abs() < 1e-9);
        assert!(p0.heading.abs() < 1e-9);
    }

    #[test]
    fn rejects_self_intersecting_track() {
        let bow_tie = TrackSpec::new(
            alloc::vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(2.0, 2.0),
                Vec2::new(2.0, 0.0),
                Vec2::new(0.0, 2.0),
            ],
            0.2,
            &[0.1, 0.2, 0.3],
            0.4,
            4.0,
            8.0,
            0.0,
        );
        assert!(matches!(bow_tie, Err(SceneError::InvalidTrack(_))));
    }

    #[test]
    fn scene_sampling_is_deterministic() {
        let track = rect_track(RectTrackParams::default()).unwrap();
        let a = sample_scene(123, &track).unwrap();
        let b = sample_scene(123, &track).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scene_sampling_varies_with_seed() {
        let track = rect_track(RectTrackParams::default()).unwrap();
        let mut counts = std::collections::BTreeSet::new();
        for seed in 0..16u64 {
            counts.insert(sample_scene(seed, &track).unwrap().objects.len());
        }
        assert!(counts.len() > 1, "vehicle counts never varied across seeds");
    }

    #[test]
    fn light_cycle_phase() {
        let track = rect_track(RectTrackParams::default()).unwrap();
        let l = &track.traffic_light;
        assert!(l.is_red_at(0.0));
        assert!(l.is_red_at(3.9));
        assert!(!l.is_red_at(4.1));
        assert!(!l.is_red_at(11.9));
        assert!(l.is_red_at(12.1));
    }
}
