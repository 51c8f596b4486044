//! Deterministic synthetic front-camera renderer.
//!
//! Frames are stylized: flat-colored sky/ground, the road painted by walking
//! the centerline ahead of the camera, lane markings as two converging
//! bands, and every object drawn as a flat axis-aligned rectangle whose
//! on-screen size scales inversely with distance. Labels are constructed
//! from exactly the integer pixel rectangles that get drawn, so ground truth
//! is perfect by construction.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::bbox::BBox;
use crate::geom::Vec2;
use crate::math;
use crate::rng::{self, stream_rng};
use crate::scene::{sample_scene, LightState, ObjectKind, Scene, SceneError, SceneObject, TrackSpec, VehicleState};

/// H x W x 3 image, floats in `[0, 1]`, row-major, channel-last.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl ImageTensor {
    pub fn zeros(height: usize, width: usize) -> Self {
        ImageTensor {
            height,
            width,
            data: vec![0.0; height * width * 3],
        }
    }

    #[inline]
    pub fn idx(&self, row: usize, col: usize, c: usize) -> usize {
        (row * self.width + col) * 3 + c
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let i = self.idx(row, col, 0);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, row: usize, col: usize, color: [f64; 3]) {
        let i = self.idx(row, col, 0);
        self.data[i] = color[0];
        self.data[i + 1] = color[1];
        self.data[i + 2] = color[2];
    }

    pub fn fill_rect(&mut self, row0: usize, row1: usize, col0: usize, col1: usize, color: [f64; 3]) {
        for row in row0..row1.min(self.height) {
            for col in col0..col1.min(self.width) {
                self.set_pixel(row, col, color);
            }
        }
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|&v| (0.0..=1.0).contains(&v) && v.is_finite())
    }
}

/// Ground-truth boxes and classes for one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelSet {
    pub boxes: Vec<BBox>,
    pub classes: Vec<ObjectKind>,
}

impl LabelSet {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn is_valid(&self) -> bool {
        self.boxes.len() == self.classes.len()
            && self.boxes.iter().all(|b| {
                b.w > 0.0
                    && b.h > 0.0
                    && (0.0..=1.0).contains(&b.cx)
                    && (0.0..=1.0).contains(&b.cy)
                    && b.w <= 1.0
                    && b.h <= 1.0
            })
    }
}

/// Fixed colors per object kind plus world furniture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Palette {
    pub sky: [f64; 3],
    pub ground: [f64; 3],
    pub road: [f64; 3],
    pub lane_marking: [f64; 3],
    pub vehicle: [f64; 3],
    pub stop_sign: [f64; 3],
    pub light_body: [f64; 3],
    pub lamp_red: [f64; 3],
    pub lamp_green: [f64; 3],
    pub intersection: [f64; 3],
}

impl Default for Palette {
    fn default() -> Self {
        Palette {
            sky: [0.55, 0.70, 0.95],
            ground: [0.15, 0.45, 0.15],
            road: [0.25, 0.25, 0.25],
            lane_marking: [0.95, 0.95, 0.30],
            vehicle: [0.15, 0.30, 0.90],
            stop_sign: [0.90, 0.10, 0.10],
            light_body: [0.55, 0.40, 0.10],
            lamp_red: [1.00, 0.05, 0.05],
            lamp_green: [0.05, 1.00, 0.05],
            intersection: [0.85, 0.85, 0.90],
        }
    }
}

impl Palette {
    pub fn body_color(&self, kind: ObjectKind) -> [f64; 3] {
        match kind {
            ObjectKind::Vehicle => self.vehicle,
            ObjectKind::StopSign => self.stop_sign,
            ObjectKind::TrafficLight => self.light_body,
            ObjectKind::Intersection => self.intersection,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderParams {
    pub width: usize,
    pub height: usize,
    /// Full horizontal field of view, radians.
    pub camera_fov: f64,
    pub horizon_row: usize,
    /// Camera height above the ground plane, meters.
    pub camera_height_m: f64,
    /// Per-pixel Gaussian noise std; 0 disables the noise pass entirely.
    pub noise_sigma: f64,
    /// Objects smaller than this many pixels on either axis after clipping
    /// are dropped from both the image and the labels.
    pub min_apparent_px: usize,
    /// How far ahead along the track the road is painted, meters of arc.
    pub view_distance_m: f64,
    pub palette: Palette,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams {
            width: 64,
            height: 64,
            camera_fov: 80.0 * core::f64::consts::PI / 180.0,
            horizon_row: 10,
            camera_height_m: 0.30,
            noise_sigma: 0.02,
            min_apparent_px: 3,
            view_distance_m: 3.0,
            palette: Palette::default(),
        }
    }
}

impl RenderParams {
    pub fn focal_px(&self) -> f64 {
        (self.width as f64 / 2.0) / math::tan(self.camera_fov / 2.0)
    }
}

const NEAR_CLIP_M: f64 = 0.03;
const ROAD_ARC_STEP_M: f64 = 0.002;
const MARKING_HALF_WIDTH_M: f64 = 0.0125;

/// Renders one frame and its exact labels. Objects fully behind the camera
/// (or below the minimum apparent size) are excluded from both.
pub fn render_frame(
    scene: &Scene,
    state: &VehicleState,
    track: &TrackSpec,
    params: &RenderParams,
    rng_seed: u64,
) -> (ImageTensor, LabelSet) {
    let mut img = ImageTensor::zeros(params.height, params.width);
    let pal = &params.palette;
    let focal = params.focal_px();
    let pose = state.pose();
    let cx_px = params.width as f64 / 2.0;

    // sky and ground
    img.fill_rect(0, params.horizon_row, 0, params.width, pal.sky);
    img.fill_rect(params.horizon_row, params.height, 0, params.width, pal.ground);

    // project a ground point in camera-local coordinates (x fwd, y left)
    let project_ground = |local: Vec2| -> Option<(f64, f64)> {
        if local.x < NEAR_CLIP_M {
            return None;
        }
        let row = params.horizon_row as f64 + focal * params.camera_height_m / local.x;
        let col = cx_px - focal * local.y / local.x;
        Some((row, col))
    };

    // road surface and lane markings, far to near so near spans overdraw
    let s0 = track.project(pose.pos).s;
    let steps = (params.view_distance_m / ROAD_ARC_STEP_M) as i64;
    let half_lane = track.lane_width / 2.0;
    for k in (-(0.3 / ROAD_ARC_STEP_M) as i64..=steps).rev() {
        let s = s0 + k as f64 * ROAD_ARC_STEP_M;
        let cpose = track.pose_at(s);
        let left_w = cpose.pos + cpose.forward().perp_left() * half_lane;
        let right_w = cpose.pos + cpose.forward().perp_left() * (-half_lane);
        let (Some((rl, cl)), Some((rr, cr))) = (
            project_ground(pose.world_to_local(left_w)),
            project_ground(pose.world_to_local(right_w)),
        ) else {
            continue;
        };
        draw_segment(&mut img, rl, cl, rr, cr, pal.road);
        // markings on both edges, thickness scaled with distance
        let fwd = pose.world_to_local(cpose.pos).x.max(NEAR_CLIP_M);
        let half_mark = (focal * MARKING_HALF_WIDTH_M / fwd).max(0.5);
        draw_segment(&mut img, rl, cl - half_mark, rl, cl + half_mark, pal.lane_marking);
        draw_segment(&mut img, rr, cr - half_mark, rr, cr + half_mark, pal.lane_marking);
    }

    // objects: compute integer screen rects, draw far-to-near, label all drawn
    struct Drawn {
        obj_index: usize,
        fwd: f64,
        rect: (usize, usize, usize, usize), // row0, row1, col0, col1 (exclusive)
    }
    let mut drawn: Vec<Drawn> = Vec::new();
    for (i, obj) in scene.objects.iter().enumerate() {
        if let Some((fwd, rect)) = object_rect(obj, &pose, params, focal, cx_px) {
            drawn.push(Drawn {
                obj_index: i,
                fwd,
                rect,
            });
        }
    }
    drawn.sort_by(|a, b| b.fwd.partial_cmp(&a.fwd).unwrap());
    for d in &drawn {
        let obj = &scene.objects[d.obj_index];
        let (r0, r1, c0, c1) = d.rect;
        img.fill_rect(r0, r1, c0, c1, pal.body_color(obj.kind));
        if obj.kind == ObjectKind::TrafficLight {
            draw_lamp(&mut img, d.rect, obj.light_state, pal);
        }
    }

    // labels in scene order, normalized from the exact drawn rects
    let mut labels = LabelSet::default();
    let mut order: Vec<usize> = (0..drawn.len()).collect();
    order.sort_by_key(|&k| drawn[k].obj_index);
    for k in order {
        let d = &drawn[k];
        let (r0, r1, c0, c1) = d.rect;
        let w = params.width as f64;
        let h = params.height as f64;
        labels.boxes.push(BBox::new(
            (c0 + c1) as f64 / (2.0 * w),
            (r0 + r1) as f64 / (2.0 * h),
            (c1 - c0) as f64 / w,
            (r1 - r0) as f64 / h,
        ));
        labels.classes.push(scene.objects[d.obj_index].kind);
    }

    // seeded additive Gaussian noise, then clamp
    if params.noise_sigma > 0.0 {
        let mut rng = stream_rng(rng_seed, rng::stream::RENDER_NOISE, 0);
        let normal = Normal::new(0.0, params.noise_sigma).unwrap();
        for v in img.data.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    for v in img.data.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }

    (img, labels)
}

/// Integer screen rectangle for an object, or `None` when the object is
/// behind the camera, fully off-screen, or below the minimum apparent size.
fn object_rect(
    obj: &SceneObject,
    camera: &crate::geom::Pose2,
    params: &RenderParams,
    focal: f64,
    cx_px: f64,
) -> Option<(f64, (usize, usize, usize, usize))> {
    let (left, top, right, bottom, fwd);
    if obj.is_ground_decal {
        // bbox of the four projected ground corners
        let dir = obj.pose.forward();
        let perp = dir.perp_left();
        let hw = obj.width_m / 2.0;
        let hd = obj.height_m / 2.0;
        let mut lo_c = f64::INFINITY;
        let mut hi_c = f64::NEG_INFINITY;
        let mut lo_r = f64::INFINITY;
        let mut hi_r = f64::NEG_INFINITY;
        let mut min_fwd = f64::INFINITY;
        for (su, sv) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
            let corner = obj.pose.pos + perp * (su * hw) + dir * (sv * hd);
            let local = camera.world_to_local(corner);
            if local.x < NEAR_CLIP_M {
                return None;
            }
            min_fwd = min_fwd.min(local.x);
            let row = params.horizon_row as f64 + focal * params.camera_height_m / local.x;
            let col = cx_px - focal * local.y / local.x;
            lo_c = lo_c.min(col);
            hi_c = hi_c.max(col);
            lo_r = lo_r.min(row);
            hi_r = hi_r.max(row);
        }
        (left, top, right, bottom, fwd) = (lo_c, lo_r, hi_c, hi_r, min_fwd);
    } else {
        let local = camera.world_to_local(obj.pose.pos);
        if local.x < NEAR_CLIP_M {
            return None;
        }
        let col = cx_px - focal * local.y / local.x;
        let w_px = focal * obj.width_m / local.x;
        let bottom_row = params.horizon_row as f64 + focal * params.camera_height_m / local.x;
        let h_px = focal * obj.height_m / local.x;
        (left, top, right, bottom, fwd) = (
            col - w_px / 2.0,
            bottom_row - h_px,
            col + w_px / 2.0,
            bottom_row,
            local.x,
        );
    }

    let c0 = math::round(left).max(0.0) as usize;
    let c1 = (math::round(right).max(0.0) as usize).min(params.width);
    let r0 = math::round(top).max(0.0) as usize;
    let r1 = (math::round(bottom).max(0.0) as usize).min(params.height);
    if c1 <= c0 || r1 <= r0 {
        return None;
    }
    if (c1 - c0) < params.min_apparent_px || (r1 - r0) < params.min_apparent_px {
        return None;
    }
    Some((fwd, (r0, r1, c0, c1)))
}

fn draw_lamp(img: &mut ImageTensor, rect: (usize, usize, usize, usize), state: LightState, pal: &Palette) {
    let (r0, r1, c0, c1) = rect;
    let color = match state {
        LightState::Red => pal.lamp_red,
        LightState::Green => pal.lamp_green,
        LightState::None => return,
    };
    let h = r1 - r0;
    let w = c1 - c0;
    // lamp occupies the top third of the body, inset horizontally
    let lr1 = r0 + (h / 3).max(1);
    let inset = w / 5;
    img.fill_rect(r0, lr1, c0 + inset, c1 - inset, color);
}

/// Paints pixels along the straight segment between two fractional screen
/// points (used for road spans and marking dashes).
fn draw_segment(img: &mut ImageTensor, r0: f64, c0: f64, r1: f64, c1: f64, color: [f64; 3]) {
    let steps = math::ceil((r1 - r0).abs().max((c1 - c0).abs())) as usize + 1;
    for k in 0..steps {
        let t = k as f64 / steps.max(1) as f64;
        let r = r0 + (r1 - r0) * t;
        let c = c0 + (c1 - c0) * t;
        if r < 0.0 || c < 0.0 {
            continue;
        }
        let (ri, ci) = (r as usize, c as usize);
        if ri < img.height && ci < img.width {
            img.set_pixel(ri, ci, color);
        }
    }
}

/// One labeled frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub image: ImageTensor,
    pub labels: LabelSet,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RenderError {
    BadArgs(String),
    Scene(SceneError),
}

impl core::fmt::Display for RenderError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            RenderError::BadArgs(why) => write!(f, "bad dataset arguments: {why}"),
            RenderError::Scene(e) => write!(f, "scene error: {e}"),
        }
    }
}

impl core::error::Error for RenderError {}

impl From<SceneError> for RenderError {
    fn from(e: SceneError) -> Self {
        RenderError::Scene(e)
    }
}

/// Generates `n` labeled frames from seeded scenes and splits them into
/// train/test by a seeded shuffle. Each frame's RNG streams derive
/// independently from `(seed, frame index)`.
pub fn gen_dataset(
    track: &TrackSpec,
    n: usize,
    train_fraction: f64,
    seed: u64,
    params: &RenderParams,
) -> Result<(Vec<Frame>, Vec<Frame>), RenderError> {
    if n < 10 {
        return Err(RenderError::BadArgs(alloc::format!("n = {n} < 10")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(RenderError::BadArgs(alloc::format!(
            "train_fraction = {train_fraction} outside (0, 1)"
        )));
    }
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        frames.push(gen_frame(track, seed, i as u64, params)?);
    }
    let (train_idx, test_idx) = split_indices(n, train_fraction, seed);
    let train = train_idx.iter().map(|&i| frames[i].clone()).collect();
    let test = test_idx.iter().map(|&i| frames[i].clone()).collect();
    Ok((train, test))
}

/// Seeded shuffle split of `0..n` into train/test index lists. The same
/// split backs both the in-memory dataset and the on-disk dataset layout.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(seed, rng::stream::DATASET_SPLIT, 0);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let train_count = (math::round(n as f64 * train_fraction) as usize).clamp(1, n - 1);
    let test = order.split_off(train_count);
    (order, test)
}

/// Renders the `index`-th dataset frame for `seed` (scene and noise streams
/// both derive from the pair, so frames can be generated independently).
pub fn gen_frame(track: &TrackSpec, seed: u64, index: u64, params: &RenderParams) -> Result<Frame, RenderError> {
    let scene_seed = rng::derive_seed(seed, rng::stream::SCENE, index);
    let noise_seed = rng::derive_seed(seed, rng::stream::RENDER_NOISE, index);
    let scene = sample_scene(scene_seed, track)?;
    let (image, labels) = render_frame(&scene, &scene.camera, track, params, noise_seed);
    Ok(Frame { image, labels })
}
