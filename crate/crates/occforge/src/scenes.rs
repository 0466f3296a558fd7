//! Procedural driving-style scenes: a voxel label grid, rendered camera
//! frames (color + depth), and the labeled point cloud of occupied voxel
//! centers. Generation is fully determined by a seed.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Point3, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::Preset;
use crate::geometry::{
    read_svox_from, write_svox_to, CameraModel, LabelGrid, PointCloud, IGNORE_LABEL,
};
use crate::{Error, Result};

pub const NUM_CLASSES: usize = 8;

pub const CLASS_NAMES: [&str; NUM_CLASSES] =
    ["free", "road", "building", "car", "person", "pole", "vegetation", "rare-vehicle"];

/// RGB in [0,1] per class; index 0 (free space) is never rendered.
pub const PALETTE: [[f64; 3]; NUM_CLASSES] = [
    [0.00, 0.00, 0.00],
    [0.35, 0.35, 0.38],
    [0.70, 0.45, 0.30],
    [0.20, 0.35, 0.80],
    [0.90, 0.30, 0.30],
    [0.85, 0.85, 0.20],
    [0.20, 0.65, 0.25],
    [0.75, 0.25, 0.75],
];

pub const SKY_COLOR: [f64; 3] = [0.53, 0.81, 0.92];

#[derive(Clone, Debug)]
pub struct SceneOptions {
    pub frames: usize,
    /// Gaussian sigma added to rendered depth (meters); 0 = clean.
    pub depth_noise: f64,
    /// Ground plane only, no walls or objects.
    pub plane_only: bool,
}

impl Default for SceneOptions {
    fn default() -> Self {
        SceneOptions { frames: 1, depth_noise: 0.0, plane_only: false }
    }
}

/// One rendered camera frame.
#[derive(Clone, Debug)]
pub struct Frame {
    pub cam: CameraModel,
    /// `[3, H, W]` RGB, row-major.
    pub image: Vec<f64>,
    /// `[H, W]` camera-frame depth in meters; 0 where the ray misses.
    pub depth: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub grid: LabelGrid,
    /// Chronological; the last frame is the current one.
    pub frames: Vec<Frame>,
    /// Occupied voxel centers with their class labels.
    pub cloud: PointCloud,
}

impl SyntheticScene {
    pub fn current_frame(&self) -> &Frame {
        self.frames.last().expect("scene has at least one frame")
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; one sample per call keeps the draw order obvious.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// World frame: +x forward, +y left, +z up. Camera frame: +x right,
/// +y down, +z forward. Base rotation maps one onto the other.
pub fn rig_extrinsics(center: Point3<f64>, yaw: f64) -> Matrix4<f64> {
    let base = Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0);
    let (s, c) = yaw.sin_cos();
    let rz = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    let r = base * rz.transpose();
    let t = -r * center.coords;
    let mut ext = Matrix4::identity();
    ext.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    ext.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
    ext
}

fn populate_grid(grid: &mut LabelGrid, rng: &mut ChaCha8Rng, plane_only: bool) {
    let [dx, dy, dz] = grid.spec.dims;
    for x in 0..dx {
        for y in 0..dy {
            grid.set([x, y, 0], 1);
        }
    }
    if plane_only {
        return;
    }
    let walls = rng.gen_range(1..=3usize);
    for _ in 0..walls {
        let x = rng.gen_range(dx / 2..dx);
        let y0 = rng.gen_range(0..dy - 1);
        let y1 = rng.gen_range(y0 + 1..dy);
        let h = rng.gen_range(1..dz.max(2));
        for y in y0..=y1 {
            for z in 1..=h {
                grid.set([x, y, z], 2);
            }
        }
    }
    let objects = rng.gen_range(1..=4usize);
    for _ in 0..objects {
        let x = rng.gen_range(dx / 4..dx / 2 + 1);
        let y = rng.gen_range(dy / 3..2 * dy / 3);
        let roll: f64 = rng.gen();
        let place = |grid: &mut LabelGrid, idx: [usize; 3], label: u8| {
            if grid.spec.contains_index(idx) && grid.get(idx) == 0 {
                grid.set(idx, label);
            }
        };
        if roll < 0.35 {
            place(grid, [x, y, 1], 3);
            place(grid, [x + 1, y, 1], 3);
        } else if roll < 0.60 {
            place(grid, [x, y, 1], 4);
            place(grid, [x, y, 2], 4);
        } else if roll < 0.80 {
            for z in 1..dz.min(4) {
                place(grid, [x, y, z], 5);
            }
        } else if roll < 0.98 {
            place(grid, [x, y, 1], 6);
            place(grid, [x, y.min(dy - 2) + 1, 1], 6);
            place(grid, [x, y, 2], 6);
        } else {
            // Deliberately rare class: same footprint as a car.
            place(grid, [x, y, 1], 7);
            place(grid, [x + 1, y, 1], 7);
        }
    }
}

/// Walk the grid along a ray (exact voxel boundary stepping) and return the
/// ray parameter at entry into the first occupied voxel plus that voxel.
pub fn ray_march(
    grid: &LabelGrid,
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
) -> Option<(f64, [usize; 3])> {
    let spec = &grid.spec;
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        let min = spec.origin[a];
        let max = spec.origin[a] + spec.dims[a] as f64 * spec.resolution;
        if dir[a].abs() < 1e-15 {
            if origin[a] < min || origin[a] >= max {
                return None;
            }
        } else {
            let ta = (min - origin[a]) / dir[a];
            let tb = (max - origin[a]) / dir[a];
            let (lo, hi) = if ta < tb { (ta, tb) } else { (tb, ta) };
            t0 = t0.max(lo);
            t1 = t1.min(hi);
        }
    }
    if t0 > t1 {
        return None;
    }
    let p = origin + dir * (t0 + 1e-9);
    let mut idx = spec.voxel_index(&p)?;
    let mut step = [0isize; 3];
    let mut t_next = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for a in 0..3 {
        if dir[a] > 1e-15 {
            step[a] = 1;
            let bound = spec.origin[a] + (idx[a] as f64 + 1.0) * spec.resolution;
            t_next[a] = (bound - origin[a]) / dir[a];
            t_delta[a] = spec.resolution / dir[a];
        } else if dir[a] < -1e-15 {
            step[a] = -1;
            let bound = spec.origin[a] + idx[a] as f64 * spec.resolution;
            t_next[a] = (bound - origin[a]) / dir[a];
            t_delta[a] = spec.resolution / -dir[a];
        }
    }
    let mut entry = t0;
    loop {
        if grid.occupied(idx) {
            return Some((entry, idx));
        }
        let a = if t_next[0] <= t_next[1] && t_next[0] <= t_next[2] {
            0
        } else if t_next[1] <= t_next[2] {
            1
        } else {
            2
        };
        entry = t_next[a];
        t_next[a] += t_delta[a];
        let ni = idx[a] as isize + step[a];
        if ni < 0 || ni as usize >= spec.dims[a] {
            return None;
        }
        idx[a] = ni as usize;
    }
}

/// Render color and depth for one camera. Depth is the camera-frame z at
/// entry into the hit voxel, nudged forward by 1e-6 so unprojecting a depth
/// pixel lands inside the voxel it hit.
pub fn render_frame(
    grid: &LabelGrid,
    cam: &CameraModel,
    noise: &mut ChaCha8Rng,
    color_noise: f64,
) -> (Vec<f64>, Vec<f64>) {
    let (h, w) = (cam.height, cam.width);
    let mut image = vec![0.0; 3 * h * w];
    let mut depth = vec![0.0; h * w];
    let center = cam.center();
    for v in 0..h {
        for u in 0..w {
            // dir has unit camera-frame z, so the ray parameter equals depth.
            let dir = cam.pixel_ray(u as f64, v as f64);
            let color = match ray_march(grid, &center, &dir) {
                Some((t, idx)) => {
                    depth[v * w + u] = t + 1e-6;
                    PALETTE[grid.get(idx) as usize]
                }
                None => SKY_COLOR,
            };
            for c in 0..3 {
                image[(c * h + v) * w + u] = color[c] + color_noise * gauss(noise);
            }
        }
    }
    (image, depth)
}

/// Z-buffered projection of a labeled cloud to per-pixel labels
/// (255 where no point lands).
pub fn project_labels_to_image(cloud: &PointCloud, cam: &CameraModel) -> Vec<u8> {
    let labels = cloud.labels.as_ref().expect("cloud must be labeled");
    let mut out = vec![IGNORE_LABEL; cam.height * cam.width];
    let mut zbuf = vec![f64::INFINITY; cam.height * cam.width];
    for (i, p) in cloud.points.iter().enumerate() {
        let pr = crate::geometry::project_point(p, cam);
        if !pr.valid {
            continue;
        }
        let (u, v) = (pr.u.round() as usize, pr.v.round() as usize);
        let pix = v * cam.width + u;
        if pr.depth < zbuf[pix] {
            zbuf[pix] = pr.depth;
            out[pix] = labels[i];
        }
    }
    out
}

pub fn generate_scene(seed: u64, preset: Preset, opts: &SceneOptions) -> Result<SyntheticScene> {
    if opts.frames == 0 {
        return Err(Error::InvalidArg("scene needs at least one frame".into()));
    }
    let spec = preset.grid();
    let (h, w) = preset.image_hw();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grid = LabelGrid::empty(spec);
    populate_grid(&mut grid, &mut rng, opts.plane_only);

    let res = spec.resolution;
    let fx = 0.9 * w as f64;
    let (cx, cy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
    // Ego pose: just above the road surface, ahead of the grid's near edge,
    // driving forward (+x). Oldest frame first.
    let base_x = spec.origin[0] + 0.3 * res;
    let cam_z = spec.origin[2] + 1.1 * res + 0.1 * res * rng.gen::<f64>();
    let step = 0.4 * res;
    let mut frames = Vec::with_capacity(opts.frames);
    for i in 0..opts.frames {
        let x = base_x + step * i as f64;
        let y = 0.1 * res * (rng.gen::<f64>() - 0.5);
        let yaw = 0.04 * (rng.gen::<f64>() - 0.5);
        let ext = rig_extrinsics(Point3::new(x, y, cam_z), yaw);
        let cam = CameraModel::new(fx, fx, cx, cy, (h, w), ext)?;
        let (image, mut depth) = render_frame(&grid, &cam, &mut rng, 0.02);
        if opts.depth_noise > 0.0 {
            for d in depth.iter_mut() {
                if *d > 0.0 {
                    *d = (*d + opts.depth_noise * gauss(&mut rng)).max(1e-3);
                }
            }
        }
        frames.push(Frame { cam, image, depth });
    }

    let mut points = Vec::new();
    let mut labels = Vec::new();
    for lin in 0..spec.num_voxels() {
        let l = grid.labels[lin];
        if l != 0 && l != IGNORE_LABEL {
            points.push(spec.centroid(spec.from_linear(lin)));
            labels.push(l);
        }
    }
    if points.is_empty() {
        return Err(Error::DegenerateScene);
    }
    Ok(SyntheticScene { grid, frames, cloud: PointCloud::labeled(points, labels) })
}

pub const SCENE_MAGIC: [u8; 4] = *b"OCSN";
pub const SCENE_VERSION: u32 = 1;

/// Scene file (little-endian): magic "OCSN", version u32, embedded voxel
/// grid block, frame count u32, image height u32, width u32, then per frame
/// the 3x3 intrinsics row-major (9 f64), the 4x4 world-to-camera extrinsics
/// row-major (16 f64), the `[3,H,W]` image (f64) and `[H,W]` depth (f64);
/// finally the labeled cloud: point count u32, has-labels u8, xyz f64
/// triples, then one u8 label per point if labeled.
pub fn write_scene_to(scene: &SyntheticScene, w: &mut impl Write) -> Result<()> {
    w.write_all(&SCENE_MAGIC)?;
    w.write_all(&SCENE_VERSION.to_le_bytes())?;
    write_svox_to(&scene.grid, w)?;
    let f0 = scene.current_frame();
    w.write_all(&(scene.frames.len() as u32).to_le_bytes())?;
    w.write_all(&(f0.cam.height as u32).to_le_bytes())?;
    w.write_all(&(f0.cam.width as u32).to_le_bytes())?;
    for f in &scene.frames {
        let k = [f.cam.fx, 0.0, f.cam.cx, 0.0, f.cam.fy, f.cam.cy, 0.0, 0.0, 1.0];
        for v in k {
            w.write_all(&v.to_le_bytes())?;
        }
        let ext = f.cam.extrinsics();
        for r in 0..4 {
            for c in 0..4 {
                w.write_all(&ext[(r, c)].to_le_bytes())?;
            }
        }
        for &v in &f.image {
            w.write_all(&v.to_le_bytes())?;
        }
        for &v in &f.depth {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.write_all(&(scene.cloud.len() as u32).to_le_bytes())?;
    w.write_all(&[scene.cloud.labels.is_some() as u8])?;
    for p in &scene.cloud.points {
        for a in 0..3 {
            w.write_all(&p[a].to_le_bytes())?;
        }
    }
    if let Some(labels) = &scene.cloud.labels {
        w.write_all(labels)?;
    }
    Ok(())
}

pub fn read_scene_from(r: &mut impl Read) -> Result<SyntheticScene> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Truncated("scene magic"))?;
    if magic != SCENE_MAGIC {
        return Err(Error::BadMagic { expected: SCENE_MAGIC, found: magic });
    }
    let version = read_u32(r, "scene version")?;
    if version != SCENE_VERSION {
        return Err(Error::BadVersion(version));
    }
    let grid = read_svox_from(r)?;
    let nframes = read_u32(r, "scene frame count")? as usize;
    let h = read_u32(r, "scene image height")? as usize;
    let w = read_u32(r, "scene image width")? as usize;
    let mut frames = Vec::with_capacity(nframes);
    for _ in 0..nframes {
        let mut k = [0.0f64; 9];
        for v in &mut k {
            *v = read_f64(r, "scene intrinsics")?;
        }
        let mut ext = Matrix4::identity();
        for row in 0..4 {
            for col in 0..4 {
                ext[(row, col)] = read_f64(r, "scene extrinsics")?;
            }
        }
        let cam = CameraModel::new(k[0], k[4], k[2], k[5], (h, w), ext)?;
        let mut image = vec![0.0; 3 * h * w];
        for v in &mut image {
            *v = read_f64(r, "scene image")?;
        }
        let mut depth = vec![0.0; h * w];
        for v in &mut depth {
            *v = read_f64(r, "scene depth")?;
        }
        frames.push(Frame { cam, image, depth });
    }
    if frames.is_empty() {
        return Err(Error::Truncated("scene frames"));
    }
    let npoints = read_u32(r, "scene point count")? as usize;
    let mut has_labels = [0u8; 1];
    r.read_exact(&mut has_labels).map_err(|_| Error::Truncated("scene label flag"))?;
    let mut points = Vec::with_capacity(npoints);
    for _ in 0..npoints {
        let x = read_f64(r, "scene points")?;
        let y = read_f64(r, "scene points")?;
        let z = read_f64(r, "scene points")?;
        points.push(Point3::new(x, y, z));
    }
    let labels = if has_labels[0] != 0 {
        let mut ls = vec![0u8; npoints];
        r.read_exact(&mut ls).map_err(|_| Error::Truncated("scene point labels"))?;
        Some(ls)
    } else {
        None
    };
    Ok(SyntheticScene { grid, frames, cloud: PointCloud { points, labels } })
}

pub fn write_scene(scene: &SyntheticScene, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    write_scene_to(scene, &mut f)
}

pub fn read_scene(path: &Path) -> Result<SyntheticScene> {
    let mut f = std::fs::File::open(path)?;
    read_scene_from(&mut f)
}

fn read_u32(r: &mut impl Read, what: &'static str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Truncated(what))?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read, what: &'static str) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| Error::Truncated(what))?;
    Ok(f64::from_le_bytes(b))
}
