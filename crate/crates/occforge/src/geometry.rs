//! Pinhole-camera and voxel-grid geometry: unprojection, voxelization, and
//! reprojection of voxel centroids to normalized image reference points.
//!
//! All operations are pure functions over f64 world coordinates (meters).

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Point3, Vector3, Vector4};

use crate::{Error, Result};

pub const IGNORE_LABEL: u8 = 255;

/// Pinhole camera: intrinsics in pixels, rigid world-to-camera extrinsics,
/// image size (H, W). Camera frame: +z forward, +x right, +y down.
#[derive(Clone, Debug)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub height: usize,
    pub width: usize,
    extrinsics: Matrix4<f64>,
    inv_extrinsics: Matrix4<f64>,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        (height, width): (usize, usize),
        extrinsics: Matrix4<f64>,
    ) -> Result<Self> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::InvalidArg(format!("focal lengths must be positive: fx={}, fy={}", fx, fy)));
        }
        let r = extrinsics.fixed_view::<3, 3>(0, 0).into_owned();
        let gram = r.transpose() * r;
        let dev = (gram - Matrix3::identity()).abs().max();
        if dev > 1e-9 {
            return Err(Error::InvalidArg(format!("rotation block not orthonormal (deviation {})", dev)));
        }
        if (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArg("rotation block must have determinant +1".into()));
        }
        let inv_extrinsics = extrinsics
            .try_inverse()
            .ok_or_else(|| Error::InvalidArg("extrinsics not invertible".into()))?;
        Ok(CameraModel { fx, fy, cx, cy, height, width, extrinsics, inv_extrinsics })
    }

    /// Camera coinciding with the world frame (+z forward).
    pub fn identity(fx: f64, fy: f64, cx: f64, cy: f64, hw: (usize, usize)) -> Result<Self> {
        Self::new(fx, fy, cx, cy, hw, Matrix4::identity())
    }

    pub fn extrinsics(&self) -> &Matrix4<f64> {
        &self.extrinsics
    }

    pub fn world_to_cam(&self, p: &Point3<f64>) -> Point3<f64> {
        let v = self.extrinsics * Vector4::new(p.x, p.y, p.z, 1.0);
        Point3::new(v.x, v.y, v.z)
    }

    pub fn cam_to_world(&self, p: &Point3<f64>) -> Point3<f64> {
        let v = self.inv_extrinsics * Vector4::new(p.x, p.y, p.z, 1.0);
        Point3::new(v.x, v.y, v.z)
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Point3<f64> {
        self.cam_to_world(&Point3::origin())
    }

    /// World-space direction of the ray through pixel (u, v).
    pub fn pixel_ray(&self, u: f64, v: f64) -> Vector3<f64> {
        let dir_cam = Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        let r = self.inv_extrinsics.fixed_view::<3, 3>(0, 0);
        r * dir_cam
    }
}

/// Projection of one world point into the image.
#[derive(Clone, Copy, Debug)]
pub struct Projection {
    /// Pixel coordinates (u along width, v along height).
    pub u: f64,
    pub v: f64,
    /// Camera-frame depth.
    pub depth: f64,
    /// True iff depth > 0 and (u, v) lies inside the image.
    pub valid: bool,
    /// (u, v) normalized to [0,1]^2; meaningful only when valid.
    pub norm: [f64; 2],
}

#[derive(Clone, Debug, Default)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    pub labels: Option<Vec<u8>>,
}

impl PointCloud {
    pub fn labeled(points: Vec<Point3<f64>>, labels: Vec<u8>) -> Self {
        assert_eq!(points.len(), labels.len(), "labels must align 1:1 with points");
        PointCloud { points, labels: Some(labels) }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Axis-aligned voxel grid: minimum corner `origin`, cubic voxels of edge
/// `resolution`, `dims` voxel counts per axis.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VoxelGridSpec {
    pub origin: [f64; 3],
    pub resolution: f64,
    pub dims: [usize; 3],
}

impl VoxelGridSpec {
    pub fn new(origin: [f64; 3], resolution: f64, dims: [usize; 3]) -> Self {
        assert!(resolution > 0.0, "voxel resolution must be positive");
        assert!(dims.iter().all(|&d| d >= 1), "all grid dims must be >= 1");
        VoxelGridSpec { origin, resolution, dims }
    }

    pub fn num_voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Half-open binning: floor((p - origin)/resolution), None outside.
    pub fn voxel_index(&self, p: &Point3<f64>) -> Option<[usize; 3]> {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let t = (p[a] - self.origin[a]) / self.resolution;
            if t < 0.0 || t >= self.dims[a] as f64 {
                return None;
            }
            idx[a] = t as usize;
        }
        Some(idx)
    }

    /// Voxel center: origin + (index + 0.5) * resolution per axis.
    pub fn centroid(&self, idx: [usize; 3]) -> Point3<f64> {
        Point3::new(
            self.origin[0] + (idx[0] as f64 + 0.5) * self.resolution,
            self.origin[1] + (idx[1] as f64 + 0.5) * self.resolution,
            self.origin[2] + (idx[2] as f64 + 0.5) * self.resolution,
        )
    }

    /// Linear id with z fastest (matches the `[x,y,z,d]` feature layout).
    pub fn linear(&self, idx: [usize; 3]) -> usize {
        (idx[0] * self.dims[1] + idx[1]) * self.dims[2] + idx[2]
    }

    pub fn from_linear(&self, lin: usize) -> [usize; 3] {
        let z = lin % self.dims[2];
        let y = (lin / self.dims[2]) % self.dims[1];
        let x = lin / (self.dims[1] * self.dims[2]);
        [x, y, z]
    }

    pub fn contains_index(&self, idx: [usize; 3]) -> bool {
        idx[0] < self.dims[0] && idx[1] < self.dims[1] && idx[2] < self.dims[2]
    }
}

/// Unproject sampled pixels with positive depth into world points.
/// `depth` is row-major `[H, W]` in meters; zero-depth pixels are skipped.
pub fn unproject_depth(depth: &[f64], cam: &CameraModel, stride: usize) -> PointCloud {
    assert!(stride >= 1, "stride must be >= 1");
    assert_eq!(depth.len(), cam.height * cam.width, "depth size mismatch");
    let mut points = Vec::new();
    for v in (0..cam.height).step_by(stride) {
        for u in (0..cam.width).step_by(stride) {
            let z = depth[v * cam.width + u];
            if z <= 0.0 {
                continue;
            }
            let pc = Point3::new(
                z * (u as f64 - cam.cx) / cam.fx,
                z * (v as f64 - cam.cy) / cam.fy,
                z,
            );
            points.push(cam.cam_to_world(&pc));
        }
    }
    PointCloud { points, labels: None }
}

pub fn project_point(p: &Point3<f64>, cam: &CameraModel) -> Projection {
    let pc = cam.world_to_cam(p);
    if pc.z <= 0.0 {
        return Projection { u: 0.0, v: 0.0, depth: pc.z, valid: false, norm: [0.0, 0.0] };
    }
    let u = cam.fx * pc.x / pc.z + cam.cx;
    let v = cam.fy * pc.y / pc.z + cam.cy;
    let inside = u >= 0.0 && u <= (cam.width - 1) as f64 && v >= 0.0 && v <= (cam.height - 1) as f64;
    let norm = if inside {
        [u / (cam.width - 1) as f64, v / (cam.height - 1) as f64]
    } else {
        [0.0, 0.0]
    };
    Projection { u, v, depth: pc.z, valid: inside, norm }
}

pub fn project_points(cloud: &PointCloud, cam: &CameraModel) -> Vec<Projection> {
    cloud.points.iter().map(|p| project_point(p, cam)).collect()
}

/// Dense boolean occupancy (z-fastest linear layout) with an optional
/// per-voxel majority label, ties broken toward the lowest class id.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    pub spec: VoxelGridSpec,
    pub occupied: Vec<bool>,
    pub labels: Option<Vec<u8>>,
}

impl OccupancyGrid {
    pub fn occupied_indices(&self) -> Vec<usize> {
        (0..self.occupied.len()).filter(|&i| self.occupied[i]).collect()
    }
}

pub fn voxelize(cloud: &PointCloud, spec: &VoxelGridSpec) -> OccupancyGrid {
    let n = spec.num_voxels();
    let mut occupied = vec![false; n];
    let mut counts: Option<Vec<std::collections::BTreeMap<u8, usize>>> =
        cloud.labels.as_ref().map(|_| vec![std::collections::BTreeMap::new(); n]);
    for (i, p) in cloud.points.iter().enumerate() {
        let Some(idx) = spec.voxel_index(p) else { continue };
        let lin = spec.linear(idx);
        occupied[lin] = true;
        if let (Some(counts), Some(labels)) = (counts.as_mut(), cloud.labels.as_ref()) {
            *counts[lin].entry(labels[i]).or_insert(0) += 1;
        }
    }
    let labels = counts.map(|counts| {
        counts
            .iter()
            .enumerate()
            .map(|(lin, c)| {
                if !occupied[lin] || c.is_empty() {
                    return IGNORE_LABEL;
                }
                // Majority class; BTreeMap iteration order makes ties
                // resolve toward the lowest class id.
                let mut best = (0usize, IGNORE_LABEL);
                for (&label, &count) in c {
                    if count > best.0 {
                        best = (count, label);
                    }
                }
                best.1
            })
            .collect()
    });
    OccupancyGrid { spec: *spec, occupied, labels }
}

/// Project voxel centroids to normalized image reference points.
/// `indices` are linear voxel ids; out-of-bounds ids are an error.
pub fn voxel_refpoints(
    spec: &VoxelGridSpec,
    indices: &[usize],
    cam: &CameraModel,
) -> Result<Vec<Projection>> {
    let n = spec.num_voxels();
    let mut out = Vec::with_capacity(indices.len());
    for &lin in indices {
        if lin >= n {
            let over = [lin, 0, 0];
            return Err(Error::IndexOutOfBounds(over, spec.dims));
        }
        out.push(project_point(&spec.centroid(spec.from_linear(lin)), cam));
    }
    Ok(out)
}

/// Semantic labels over a full voxel grid (0 = free, 255 = ignore).
#[derive(Clone, Debug, PartialEq)]
pub struct LabelGrid {
    pub spec: VoxelGridSpec,
    /// z-fastest linear layout, one u8 class per voxel.
    pub labels: Vec<u8>,
}

impl LabelGrid {
    pub fn empty(spec: VoxelGridSpec) -> Self {
        let n = spec.num_voxels();
        LabelGrid { spec, labels: vec![0; n] }
    }

    pub fn get(&self, idx: [usize; 3]) -> u8 {
        self.labels[self.spec.linear(idx)]
    }

    pub fn set(&mut self, idx: [usize; 3], label: u8) {
        let lin = self.spec.linear(idx);
        self.labels[lin] = label;
    }

    pub fn occupied(&self, idx: [usize; 3]) -> bool {
        let l = self.get(idx);
        l != 0 && l != IGNORE_LABEL
    }
}

pub const SVOX_MAGIC: [u8; 4] = *b"SVOX";
pub const SVOX_VERSION: u32 = 1;

/// Voxel grid file: magic "SVOX", version u32, dims u32 x 3, resolution f64,
/// origin f64 x 3, u8 class payload (255 = unlabeled), row-major x-fastest.
/// Little-endian throughout.
pub fn write_svox_to(grid: &LabelGrid, w: &mut impl Write) -> Result<()> {
    w.write_all(&SVOX_MAGIC)?;
    w.write_all(&SVOX_VERSION.to_le_bytes())?;
    for &d in &grid.spec.dims {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    w.write_all(&grid.spec.resolution.to_le_bytes())?;
    for &o in &grid.spec.origin {
        w.write_all(&o.to_le_bytes())?;
    }
    // File payload is x-fastest; in-memory layout is z-fastest.
    let [dx, dy, dz] = grid.spec.dims;
    let mut payload = Vec::with_capacity(grid.labels.len());
    for z in 0..dz {
        for y in 0..dy {
            for x in 0..dx {
                payload.push(grid.labels[grid.spec.linear([x, y, z])]);
            }
        }
    }
    w.write_all(&payload)?;
    Ok(())
}

pub fn read_svox_from(r: &mut impl Read) -> Result<LabelGrid> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Truncated("svox magic"))?;
    if magic != SVOX_MAGIC {
        return Err(Error::BadMagic { expected: SVOX_MAGIC, found: magic });
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(|_| Error::Truncated("svox version"))?;
    let version = u32::from_le_bytes(b4);
    if version != SVOX_VERSION {
        return Err(Error::BadVersion(version));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        r.read_exact(&mut b4).map_err(|_| Error::Truncated("svox dims"))?;
        *d = u32::from_le_bytes(b4) as usize;
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8).map_err(|_| Error::Truncated("svox resolution"))?;
    let resolution = f64::from_le_bytes(b8);
    let mut origin = [0.0f64; 3];
    for o in &mut origin {
        r.read_exact(&mut b8).map_err(|_| Error::Truncated("svox origin"))?;
        *o = f64::from_le_bytes(b8);
    }
    let spec = VoxelGridSpec::new(origin, resolution, dims);
    let mut payload = vec![0u8; spec.num_voxels()];
    r.read_exact(&mut payload).map_err(|_| Error::Truncated("svox payload"))?;
    let mut labels = vec![0u8; spec.num_voxels()];
    let [dx, dy, dz] = dims;
    let mut i = 0;
    for z in 0..dz {
        for y in 0..dy {
            for x in 0..dx {
                labels[spec.linear([x, y, z])] = payload[i];
                i += 1;
            }
        }
    }
    Ok(LabelGrid { spec, labels })
}

pub fn write_svox(grid: &LabelGrid, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    write_svox_to(grid, &mut f)
}

pub fn read_svox(path: &Path) -> Result<LabelGrid> {
    let mut f = std::fs::File::open(path)?;
    read_svox_from(&mut f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_cam() -> CameraModel {
        CameraModel::identity(40.0, 40.0, 19.5, 19.5, (40, 40)).unwrap()
    }

    #[test]
    fn principal_ray_unprojects_on_axis() {
        let cam = test_cam();
        let mut depth = vec![0.0; 40 * 40];
        // pixel at (cx, cy) is not on the integer grid for cx=19.5; use an
        // explicit camera with integer principal point instead.
        let cam2 = CameraModel::identity(40.0, 40.0, 20.0, 20.0, (40, 40)).unwrap();
        depth[20 * 40 + 20] = 5.0;
        let cloud = unproject_depth(&depth, &cam2, 1);
        assert_eq!(cloud.len(), 1);
        let p = cloud.points[0];
        assert!(p.x.abs() < 1e-12 && p.y.abs() < 1e-12 && (p.z - 5.0).abs() < 1e-12);
        let _ = cam;
    }

    #[test]
    fn all_zero_depth_gives_empty_cloud() {
        let cam = test_cam();
        let cloud = unproject_depth(&vec![0.0; 40 * 40], &cam, 1);
        assert!(cloud.is_empty());
    }

    #[test]
    fn principal_ray_projects_to_center() {
        let cam = CameraModel::identity(40.0, 40.0, 20.0, 20.0, (40, 40)).unwrap();
        let pr = project_point(&Point3::new(0.0, 0.0, 5.0), &cam);
        assert!(pr.valid);
        assert!((pr.u - 20.0).abs() < 1e-12 && (pr.v - 20.0).abs() < 1e-12);
        assert!((pr.depth - 5.0).abs() < 1e-12);
    }

    #[test]
    fn behind_camera_is_invalid() {
        let cam = test_cam();
        assert!(!project_point(&Point3::new(0.0, 0.0, -1.0), &cam).valid);
    }

    #[test]
    fn unproject_project_round_trip() {
        let cam = test_cam();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let u = rng.gen_range(0..40usize);
            let v = rng.gen_range(0..40usize);
            let z = rng.gen_range(0.5..30.0);
            let mut depth = vec![0.0; 40 * 40];
            depth[v * 40 + u] = z;
            let cloud = unproject_depth(&depth, &cam, 1);
            assert_eq!(cloud.len(), 1);
            let pr = project_point(&cloud.points[0], &cam);
            assert!((pr.u - u as f64).abs() < 1e-9, "u {} -> {}", u, pr.u);
            assert!((pr.v - v as f64).abs() < 1e-9);
            assert!((pr.depth - z).abs() < 1e-9);
        }
    }

    #[test]
    fn projection_matches_matrix_oracle() {
        // Rotated + translated camera, compared to a brute-force K [R|t] multiply.
        let angle = 0.3f64;
        let mut ext = Matrix4::identity();
        let (s, c) = angle.sin_cos();
        ext[(0, 0)] = c;
        ext[(0, 2)] = s;
        ext[(2, 0)] = -s;
        ext[(2, 2)] = c;
        ext[(0, 3)] = 0.7;
        ext[(1, 3)] = -0.2;
        ext[(2, 3)] = 1.1;
        let cam = CameraModel::new(35.0, 42.0, 20.0, 16.0, (32, 48), ext).unwrap();
        let k = Matrix3::new(35.0, 0.0, 20.0, 0.0, 42.0, 16.0, 0.0, 0.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let p = Point3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..10.0));
            let pr = project_point(&p, &cam);
            let hc = ext * Vector4::new(p.x, p.y, p.z, 1.0);
            let uvw = k * Vector3::new(hc.x, hc.y, hc.z);
            if hc.z <= 0.0 {
                assert!(!pr.valid);
                continue;
            }
            let (u, v) = (uvw.x / uvw.z, uvw.y / uvw.z);
            // fx*x/z + cx vs (fx*x + cx*z)/z differ only in rounding.
            assert!((pr.u - u).abs() < 1e-9 * u.abs().max(1.0), "u {} vs oracle {}", pr.u, u);
            assert!((pr.v - v).abs() < 1e-9 * v.abs().max(1.0));
            assert_eq!(pr.depth, hc.z);
            let inside = u >= 0.0 && u <= 47.0 && v >= 0.0 && v <= 31.0;
            assert_eq!(pr.valid, inside);
        }
    }

    #[test]
    fn voxelize_kitti_example() {
        let spec = crate::config::Preset::Kitti.grid();
        let idx = spec.voxel_index(&Point3::new(0.1, 0.0, 0.0)).unwrap();
        assert_eq!(idx, [0, 128, 10]);
    }

    #[test]
    fn voxelize_origin_boundary() {
        let spec = VoxelGridSpec::new([0.0, -25.6, -2.0], 0.2, [256, 256, 32]);
        let idx = spec.voxel_index(&Point3::new(0.0, -25.6, -2.0)).unwrap();
        assert_eq!(idx, [0, 0, 0]);
    }

    #[test]
    fn voxelize_matches_brute_force() {
        let spec = VoxelGridSpec::new([0.0, -3.0, -1.0], 0.5, [8, 12, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let points: Vec<Point3<f64>> = (0..500)
            .map(|_| {
                Point3::new(rng.gen_range(-1.0..5.0), rng.gen_range(-4.0..4.0), rng.gen_range(-2.0..2.0))
            })
            .collect();
        let labels: Vec<u8> = (0..500).map(|_| rng.gen_range(0..5u8)).collect();
        let cloud = PointCloud::labeled(points, labels);
        let got = voxelize(&cloud, &spec);
        let want = crate::reference::brute_force_voxelize(&cloud, &spec);
        assert_eq!(got.occupied, want.occupied);
        assert_eq!(got.labels, want.labels);
    }

    proptest! {
        #[test]
        fn voxelize_is_permutation_invariant(perm_seed in 0u64..1000) {
            let spec = VoxelGridSpec::new([0.0, 0.0, 0.0], 0.5, [4, 4, 4]);
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let points: Vec<Point3<f64>> = (0..60)
                .map(|_| Point3::new(rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0)))
                .collect();
            let labels: Vec<u8> = (0..60).map(|_| rng.gen_range(0..3u8)).collect();
            let base = voxelize(&PointCloud::labeled(points.clone(), labels.clone()), &spec);

            let mut order: Vec<usize> = (0..points.len()).collect();
            use rand::seq::SliceRandom;
            let mut prng = ChaCha8Rng::seed_from_u64(perm_seed);
            order.shuffle(&mut prng);
            let pp: Vec<_> = order.iter().map(|&i| points[i]).collect();
            let pl: Vec<_> = order.iter().map(|&i| labels[i]).collect();
            let shuffled = voxelize(&PointCloud::labeled(pp, pl), &spec);
            prop_assert_eq!(base.occupied, shuffled.occupied);
            prop_assert_eq!(base.labels, shuffled.labels);
        }
    }

    #[test]
    fn refpoint_centroid_formula() {
        let spec = crate::config::Preset::Kitti.grid();
        let c = spec.centroid([0, 128, 10]);
        assert!((c.x - 0.1).abs() < 1e-12);
        assert!((c.y - 0.1).abs() < 1e-12);
        assert!((c.z - 0.1).abs() < 1e-12);
    }

    #[test]
    fn refpoints_behind_camera_masked() {
        let spec = VoxelGridSpec::new([-4.0, -2.0, -2.0], 1.0, [4, 4, 4]);
        let cam = test_cam();
        // all centroids have x in [-3.5, -0.5]; camera looks along +z so
        // voxels with negative z centroid are behind it.
        let refs = voxel_refpoints(&spec, &[spec.linear([0, 0, 0])], &cam).unwrap();
        assert!(!refs[0].valid);
    }

    #[test]
    fn refpoints_out_of_bounds_error() {
        let spec = VoxelGridSpec::new([0.0, 0.0, 0.0], 1.0, [2, 2, 2]);
        let cam = test_cam();
        assert!(voxel_refpoints(&spec, &[8], &cam).is_err());
    }

    #[test]
    fn valid_refpoints_are_normalized() {
        let spec = VoxelGridSpec::new([-2.0, -2.0, 1.0], 0.5, [8, 8, 8]);
        let cam = test_cam();
        let all: Vec<usize> = (0..spec.num_voxels()).collect();
        let refs = voxel_refpoints(&spec, &all, &cam).unwrap();
        assert!(refs.iter().any(|r| r.valid));
        for r in refs.iter().filter(|r| r.valid) {
            assert!(r.norm[0] >= 0.0 && r.norm[0] <= 1.0);
            assert!(r.norm[1] >= 0.0 && r.norm[1] <= 1.0);
        }
    }

    #[test]
    fn svox_round_trip_bitwise() {
        let spec = VoxelGridSpec::new([0.0, -6.4, -1.6], 0.4, [4, 3, 2]);
        let mut grid = LabelGrid::empty(spec);
        for (i, l) in grid.labels.iter_mut().enumerate() {
            *l = (i % 7) as u8;
        }
        let mut buf = Vec::new();
        write_svox_to(&grid, &mut buf).unwrap();
        let back = read_svox_from(&mut buf.as_slice()).unwrap();
        assert_eq!(grid, back);
        let mut buf2 = Vec::new();
        write_svox_to(&back, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn svox_error_kinds() {
        let grid = LabelGrid::empty(VoxelGridSpec::new([0.0; 3], 1.0, [2, 2, 2]));
        let mut buf = Vec::new();
        write_svox_to(&grid, &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[1] = b'?';
        assert!(matches!(read_svox_from(&mut bad.as_slice()), Err(Error::BadMagic { .. })));
        let mut badver = buf.clone();
        badver[4] = 9;
        assert!(matches!(read_svox_from(&mut badver.as_slice()), Err(Error::BadVersion(_))));
        let cut = &buf[..buf.len() - 1];
        assert!(matches!(read_svox_from(&mut &cut[..]), Err(Error::Truncated(_))));
    }
}
