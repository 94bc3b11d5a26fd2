//! Deterministic flat-shaded software rasterizer.
//!
//! Scenes are axis-aligned boxes on the stud grid: the baseplate, every
//! placed brick, and optionally a held brick and a gripper volume. Each
//! box becomes 12 triangles, z-buffered with pixel-center sampling and a
//! top-left fill rule, one sample per pixel. Identical inputs produce
//! byte-identical images; the id buffer tags each pixel with the entity
//! in front (0 = background and baseplate).

use serde::{Deserialize, Serialize};

use crate::grid::{Brick, Structure, Workspace, BASEPLATE};
use crate::img::{IdImage, Mask, RgbImage};

/// Id of a brick being placed this step (drawn hovering above its pose).
pub const HELD_ID: u16 = 0xFFFE;
/// Id of the gripper volume.
pub const GRIPPER_ID: u16 = 0xFFFF;

const BACKGROUND: [u8; 3] = [24, 26, 30];
const BASEPLATE_COLOR: [u8; 3] = [168, 168, 168];
const GRIPPER_COLOR: [u8; 3] = [72, 76, 86];
/// View-space near plane; geometry closer than this is dropped. Cameras
/// are assumed to sit outside the scene bounds.
const NEAR: f64 = 0.01;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RenderError {
    #[error("degenerate camera: {0}")]
    DegenerateCamera(String),
    #[error("entity {0} is not part of the rendered scene")]
    UnknownEntity(i64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    #[serde(default = "default_up")]
    pub up: [f64; 3],
    #[serde(default = "default_fov")]
    pub fov_y_deg: f64,
    #[serde(default = "default_side")]
    pub width: usize,
    #[serde(default = "default_side")]
    pub height: usize,
}

fn default_up() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

fn default_fov() -> f64 {
    40.0
}

fn default_side() -> usize {
    256
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

impl Camera {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.width == 0 || self.height == 0 {
            return Err(RenderError::DegenerateCamera("zero resolution".into()));
        }
        if !(self.fov_y_deg > 0.0 && self.fov_y_deg < 180.0) {
            return Err(RenderError::DegenerateCamera("field of view out of (0, 180)".into()));
        }
        let fwd = sub(self.look_at, self.position);
        if norm(fwd) < 1e-9 {
            return Err(RenderError::DegenerateCamera("position equals look_at".into()));
        }
        if norm(cross(fwd, self.up)) < 1e-9 * norm(fwd) * norm(self.up).max(1e-30) {
            return Err(RenderError::DegenerateCamera("up parallel to view direction".into()));
        }
        Ok(())
    }
}

/// Oblique view of the whole baseplate: 35 deg elevation, 30 deg
/// azimuth, 40 deg vertical field of view, target the plate center.
pub fn default_workspace_camera(ws: &Workspace) -> Camera {
    let center = [ws.width as f64 / 2.0, ws.depth as f64 / 2.0, 0.0];
    let half_diag = (center[0] * center[0] + center[1] * center[1]).sqrt();
    let fov = default_fov();
    let dist = half_diag / (fov / 2.0).to_radians().tan() * 1.2;
    place_camera(center, dist, 30.0, 35.0, fov)
}

fn place_camera(center: [f64; 3], dist: f64, azim_deg: f64, elev_deg: f64, fov: f64) -> Camera {
    let az = azim_deg.to_radians();
    let el = elev_deg.to_radians();
    let dir = [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()];
    Camera {
        position: [
            center[0] + dist * dir[0],
            center[1] + dist * dir[1],
            center[2] + dist * dir[2],
        ],
        look_at: center,
        up: default_up(),
        fov_y_deg: fov,
        width: default_side(),
        height: default_side(),
    }
}

/// Camera jitter for synthetic observations: view-sphere angle offsets
/// plus a focal-length scale (> 1 zooms in).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    #[serde(default)]
    pub azimuth_deg: f64,
    #[serde(default)]
    pub elevation_deg: f64,
    #[serde(default = "unit_scale")]
    pub focal_scale: f64,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        PerturbSpec { azimuth_deg: 0.0, elevation_deg: 0.0, focal_scale: 1.0 }
    }
}

fn unit_scale() -> f64 {
    1.0
}

/// Orbit the camera about its look-at point and rescale the focal
/// length; distance to the target is preserved.
pub fn perturb_camera(cam: &Camera, p: &PerturbSpec) -> Camera {
    let off = sub(cam.position, cam.look_at);
    let r = norm(off);
    let azim = off[1].atan2(off[0]) + p.azimuth_deg.to_radians();
    let elev = (off[2] / r).asin() + p.elevation_deg.to_radians();
    let half = (cam.fov_y_deg / 2.0).to_radians();
    let fov = 2.0 * (half.tan() / p.focal_scale).atan().to_degrees();
    let mut out = place_camera(cam.look_at, r, azim.to_degrees(), elev.to_degrees(), fov);
    out.width = cam.width;
    out.height = cam.height;
    out.up = cam.up;
    out
}

pub struct RenderOutput {
    pub rgb: RgbImage,
    pub id_buffer: IdImage,
    /// View-space distance along the camera axis; infinity at background.
    pub depth: Vec<f64>,
}

struct Box3 {
    min: [f64; 3],
    max: [f64; 3],
    color: [u8; 3],
    id: u16,
}

fn brick_box(s: &Structure, b: &Brick, color: [u8; 3], id: u16) -> Box3 {
    let (w, d) = s.footprint(b);
    let h = s.brick_type(b).height as i32;
    Box3 {
        min: [b.pos[0] as f64, b.pos[1] as f64, b.pos[2] as f64],
        max: [(b.pos[0] + w) as f64, (b.pos[1] + d) as f64, (b.pos[2] + h) as f64],
        color,
        id,
    }
}

/// Brightness is a fixed factor per outward face normal: lit from above
/// with axis-dependent side tones.
fn face_brightness(axis: usize, positive: bool) -> f64 {
    match (axis, positive) {
        (2, true) => 1.0,
        (2, false) => 0.30,
        (0, true) => 0.80,
        (0, false) => 0.55,
        (1, true) => 0.62,
        (1, false) => 0.48,
        _ => unreachable!(),
    }
}

fn shade(color: [u8; 3], factor: f64) -> [u8; 3] {
    let f = |c: u8| ((c as f64 * factor).round()).clamp(0.0, 255.0) as u8;
    [f(color[0]), f(color[1]), f(color[2])]
}

struct Raster<'a> {
    cam_right: [f64; 3],
    cam_up: [f64; 3],
    cam_fwd: [f64; 3],
    cam_pos: [f64; 3],
    focal: f64,
    aspect: f64,
    w: usize,
    h: usize,
    out: &'a mut RenderOutput,
}

impl Raster<'_> {
    /// World point to (pixel x, pixel y, view depth).
    fn project(&self, p: [f64; 3]) -> ([f64; 2], f64) {
        let q = sub(p, self.cam_pos);
        let v = [dot(q, self.cam_right), dot(q, self.cam_up), dot(q, self.cam_fwd)];
        let x_ndc = self.focal * v[0] / v[2] / self.aspect;
        let y_ndc = self.focal * v[1] / v[2];
        ([(x_ndc + 1.0) * 0.5 * self.w as f64, (1.0 - y_ndc) * 0.5 * self.h as f64], v[2])
    }

    fn triangle(&mut self, world: [[f64; 3]; 3], color: [u8; 3], id: u16) {
        let (mut p, mut z) = ([[0.0f64; 2]; 3], [0.0f64; 3]);
        for i in 0..3 {
            let (pt, depth) = self.project(world[i]);
            if depth <= NEAR {
                return;
            }
            p[i] = pt;
            z[i] = depth;
        }
        let e = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
            (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        };
        // Evaluate every edge with its lexicographically smaller endpoint
        // first so that the two triangles sharing an edge compute
        // bit-identical (negated) values: no double-painted or missed
        // pixels along shared diagonals.
        let e_canon = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
            if (a[0], a[1]) <= (b[0], b[1]) {
                e(a, b, c)
            } else {
                -e(b, a, c)
            }
        };
        let mut area2 = e(p[0], p[1], p[2]);
        if area2 == 0.0 {
            return;
        }
        if area2 < 0.0 {
            p.swap(1, 2);
            z.swap(1, 2);
            area2 = -area2;
        }
        // Boundary pixels belong to top edges (horizontal, running +x)
        // and left edges (running -y), so shared edges paint once.
        let top_left = |a: [f64; 2], b: [f64; 2]| {
            let dx = b[0] - a[0];
            let dy = b[1] - a[1];
            (dy == 0.0 && dx > 0.0) || dy < 0.0
        };
        let tl = [top_left(p[1], p[2]), top_left(p[2], p[0]), top_left(p[0], p[1])];

        let min_x = p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min);
        let max_x = p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max);
        let min_y = p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min);
        let max_y = p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max);
        let x0 = (min_x - 0.5).floor().max(0.0) as usize;
        let x1 = ((max_x - 0.5).ceil() as i64).min(self.w as i64 - 1).max(-1);
        let y0 = (min_y - 0.5).floor().max(0.0) as usize;
        let y1 = ((max_y - 0.5).ceil() as i64).min(self.h as i64 - 1).max(-1);
        if x1 < 0 || y1 < 0 {
            return;
        }

        for py in y0..=(y1 as usize) {
            for px in x0..=(x1 as usize) {
                let c = [px as f64 + 0.5, py as f64 + 0.5];
                let w0 = e_canon(p[1], p[2], c);
                let w1 = e_canon(p[2], p[0], c);
                let w2 = e_canon(p[0], p[1], c);
                let inside = (w0 > 0.0 || (w0 == 0.0 && tl[0]))
                    && (w1 > 0.0 || (w1 == 0.0 && tl[1]))
                    && (w2 > 0.0 || (w2 == 0.0 && tl[2]));
                if !inside {
                    continue;
                }
                // Perspective-correct depth: 1/z is affine in screen space.
                let l = [w0 / area2, w1 / area2, w2 / area2];
                let inv_z = l[0] / z[0] + l[1] / z[1] + l[2] / z[2];
                let depth = 1.0 / inv_z;
                let idx = py * self.w + px;
                if depth < self.out.depth[idx] {
                    self.out.depth[idx] = depth;
                    self.out.rgb.data[idx] = color;
                    self.out.id_buffer.data[idx] = id;
                }
            }
        }
    }

    fn draw_box(&mut self, bx: &Box3) {
        let (mn, mx) = (bx.min, bx.max);
        let corner = |i: usize| {
            [
                if i & 1 == 0 { mn[0] } else { mx[0] },
                if i & 2 == 0 { mn[1] } else { mx[1] },
                if i & 4 == 0 { mn[2] } else { mx[2] },
            ]
        };
        // (axis, positive side, four corner indices of that face).
        const FACES: [(usize, bool, [usize; 4]); 6] = [
            (0, false, [0, 2, 6, 4]),
            (0, true, [1, 3, 7, 5]),
            (1, false, [0, 1, 5, 4]),
            (1, true, [2, 3, 7, 6]),
            (2, false, [0, 1, 3, 2]),
            (2, true, [4, 5, 7, 6]),
        ];
        for (axis, positive, ids) in FACES {
            let c = shade(bx.color, face_brightness(axis, positive));
            let v = [corner(ids[0]), corner(ids[1]), corner(ids[2]), corner(ids[3])];
            self.triangle([v[0], v[1], v[2]], c, bx.id);
            self.triangle([v[0], v[2], v[3]], c, bx.id);
        }
    }
}

/// Render the structure plus optional held brick and gripper volume.
pub fn render_scene(
    structure: &Structure,
    camera: &Camera,
    held: Option<&Brick>,
    gripper: Option<([f64; 3], [f64; 3])>,
) -> Result<RenderOutput, RenderError> {
    camera.validate()?;
    let (w, h) = (camera.width, camera.height);
    let mut out = RenderOutput {
        rgb: RgbImage::new(w, h),
        id_buffer: IdImage::new(w, h),
        depth: vec![f64::INFINITY; w * h],
    };
    for px in out.rgb.data.iter_mut() {
        *px = BACKGROUND;
    }

    let fwd = normalize(sub(camera.look_at, camera.position));
    let right = normalize(cross(fwd, camera.up));
    let up = cross(right, fwd);
    let mut r = Raster {
        cam_right: right,
        cam_up: up,
        cam_fwd: fwd,
        cam_pos: camera.position,
        focal: 1.0 / (camera.fov_y_deg / 2.0).to_radians().tan(),
        aspect: w as f64 / h as f64,
        w,
        h,
        out: &mut out,
    };

    let ws = structure.workspace;
    r.draw_box(&Box3 {
        min: [0.0, 0.0, -0.2],
        max: [ws.width as f64, ws.depth as f64, 0.0],
        color: BASEPLATE_COLOR,
        id: 0,
    });
    for (i, b) in structure.bricks().iter().enumerate() {
        let color = structure.brick_type(b).color;
        r.draw_box(&brick_box(structure, b, color, (i + 1) as u16));
    }
    if let Some(b) = held {
        let color = structure.brick_type(b).color;
        r.draw_box(&brick_box(structure, b, color, HELD_ID));
    }
    if let Some((mn, mx)) = gripper {
        r.draw_box(&Box3 { min: mn, max: mx, color: GRIPPER_COLOR, id: GRIPPER_ID });
    }
    Ok(out)
}

/// Per-step masks pulled from the id buffer.
pub struct StepMasks {
    /// Union of all placed bricks.
    pub m_str: Mask,
    /// The step's reference brick (empty for a baseplate reference).
    pub m_ref: Mask,
    /// The held target brick.
    pub m_tgt: Mask,
    /// The gripper volume.
    pub m_grip: Mask,
}

/// Split the id buffer into the step's masks. `ref_index` is a placed
/// brick index or the baseplate sentinel; bricks are ids `1..=n_bricks`.
pub fn extract_masks(
    out: &RenderOutput,
    n_bricks: usize,
    ref_index: i64,
) -> Result<StepMasks, RenderError> {
    if ref_index != BASEPLATE && !(0..n_bricks as i64).contains(&ref_index) {
        return Err(RenderError::UnknownEntity(ref_index));
    }
    let ids = &out.id_buffer;
    let mut m_str = Mask::new(ids.w, ids.h);
    for (m, &id) in m_str.data.iter_mut().zip(&ids.data) {
        *m = id >= 1 && (id as usize) <= n_bricks;
    }
    let m_ref = if ref_index == BASEPLATE {
        Mask::new(ids.w, ids.h)
    } else {
        ids.mask_of((ref_index + 1) as u16)
    };
    Ok(StepMasks { m_str, m_ref, m_tgt: ids.mask_of(HELD_ID), m_grip: ids.mask_of(GRIPPER_ID) })
}
