//! Monocular (student) and privileged temporal (teacher) branches:
//! backbone feature extraction, depth-based voxel query generation,
//! mask-token fill, 3D completion via attention, and decoding heads.

use nalgebra::Matrix4;

use crate::attention::{
    cross_view_transform, deformable_image_attention, deformable_self_attention,
    image_conditioned_cross_attention, temporal_image_attention, DeformableCfg,
};
use crate::autodiff::{conv2d, fill_volume, Init, ParamBinder, Tensor};
use crate::config::{ArchConfig, BranchConfig};
use crate::geometry::{unproject_depth, voxel_refpoints, voxelize, CameraModel, VoxelGridSpec};
use crate::scenes::SyntheticScene;
use crate::{Error, Result};

/// 2D backbone output: `[d, h, w]` at `stride` below the input image.
pub struct FeatureMap2D {
    pub tensor: Tensor,
    pub stride: usize,
}

/// Depth-based voxel proposals: unique linear voxel ids plus one learned
/// feature row per proposal.
pub struct QuerySet {
    pub indices: Vec<usize>,
    /// `[n, d]`, every row the shared query embedding.
    pub features: Tensor,
}

/// One input frame: camera plus raw image and depth buffers.
#[derive(Clone)]
pub struct FrameInput {
    pub cam: CameraModel,
    /// `[3, H, W]`.
    pub image: Vec<f64>,
    /// `[H, W]`.
    pub depth: Vec<f64>,
}

/// Everything a branch needs from a scene; frames chronological, last = now.
#[derive(Clone)]
pub struct SceneInput {
    pub frames: Vec<FrameInput>,
    pub spec: VoxelGridSpec,
    pub image_hw: (usize, usize),
}

impl From<&SyntheticScene> for SceneInput {
    fn from(s: &SyntheticScene) -> Self {
        let frames = s
            .frames
            .iter()
            .map(|f| FrameInput { cam: f.cam.clone(), image: f.image.clone(), depth: f.depth.clone() })
            .collect();
        let f0 = s.current_frame();
        SceneInput { frames, spec: s.grid.spec, image_hw: (f0.cam.height, f0.cam.width) }
    }
}

pub struct StudentOutput {
    /// F after image conditioning, `[x, y, z, d]` — the distillation target
    /// surface on the student side.
    pub conditioned: Tensor,
    /// After self-attention completion, before conditioning.
    pub refined: Tensor,
    /// Straight from the mask-token fill.
    pub initial: Tensor,
    /// `[X, Y, Z, C]` upsampled class logits.
    pub voxel_logits: Tensor,
    /// `[C, h, w]` auxiliary 2D head output, when enabled.
    pub sem2d: Option<Tensor>,
    pub queries: QuerySet,
}

pub struct TeacherOutput {
    /// `[x, y, z, d]` conditioned teacher volume (distillation source).
    pub conditioned: Tensor,
    pub voxel_logits: Tensor,
    pub sem2d: Option<Tensor>,
}

/// Strided conv stack: two stride-2 stages then one stride-1 projection,
/// tanh between stages, `width` multiplying the hidden channel count.
pub fn extract_features(
    binder: &mut ParamBinder,
    prefix: &str,
    image: &Tensor,
    d: usize,
    width: usize,
) -> Result<FeatureMap2D> {
    let shape = image.shape();
    let (h, w) = (shape[1], shape[2]);
    if h % 4 != 0 || w % 4 != 0 {
        return Err(Error::Shape(format!("image {h}x{w} not divisible by backbone stride 4")));
    }
    let hidden = d * width;
    let conv = |binder: &mut ParamBinder, name: &str, x: &Tensor, cin: usize, cout: usize, stride: usize| {
        let wgt = binder.get(
            &format!("{prefix}/{name}_w"),
            &[cout, cin, 3, 3],
            Init::Kaiming { fan_in: cin * 9 },
        );
        let b = binder.get(&format!("{prefix}/{name}_b"), &[cout], Init::Zeros);
        conv2d(x, &wgt, &b, stride, 1)
    };
    let x = conv(binder, "conv1", image, 3, hidden, 2).tanh();
    let x = conv(binder, "conv2", &x, hidden, hidden, 2).tanh();
    let out = conv(binder, "conv3", &x, hidden, d, 1);
    Ok(FeatureMap2D { tensor: out, stride: 4 })
}

/// 3x3x3 occupancy corrector logits, computed off-tape. Identity-initialized
/// (center weight 8, bias -4) so at init `sigmoid(logit) > 0.5` exactly
/// reproduces the raw voxelized occupancy.
fn corrector_logits(occ: &[f64], dims: [usize; 3], weight: &[f64], bias: f64) -> Vec<f64> {
    let [dx, dy, dz] = dims;
    let at = |x: isize, y: isize, z: isize| -> f64 {
        if x < 0 || y < 0 || z < 0 || x >= dx as isize || y >= dy as isize || z >= dz as isize {
            0.0
        } else {
            occ[(x as usize * dy + y as usize) * dz + z as usize]
        }
    };
    let mut out = vec![0.0; occ.len()];
    for x in 0..dx as isize {
        for y in 0..dy as isize {
            for z in 0..dz as isize {
                let mut acc = bias;
                for (wi, (ox, oy, oz)) in (0..27)
                    .map(|i| (i / 9 as isize - 1, (i / 3) % 3 - 1, i % 3 - 1))
                    .enumerate()
                {
                    acc += weight[wi] * at(x + ox, y + oy, z + oz);
                }
                out[(x as usize * dy + y as usize) * dz + z as usize] = acc;
            }
        }
    }
    out
}

/// Unproject the depth map, voxelize, run the occupancy corrector, and keep
/// voxels whose corrected keep-probability exceeds 0.5. Kept voxels share
/// one learned query embedding row.
pub fn generate_depth_queries(
    binder: &mut ParamBinder,
    depth: &[f64],
    cam: &CameraModel,
    spec: &VoxelGridSpec,
    d: usize,
) -> Result<QuerySet> {
    let cloud = unproject_depth(depth, cam, 1);
    let occ_grid = voxelize(&cloud, spec);
    let occ: Vec<f64> = occ_grid.occupied.iter().map(|&o| o as usize as f64).collect();

    let mut ident = vec![0.0; 27];
    ident[13] = 8.0;
    let wgt = binder.get_raw("corrector/w", &[3, 3, 3], Init::Data(ident));
    let bias = binder.get_raw("corrector/b", &[1], Init::Data(vec![-4.0]));
    let logits = corrector_logits(&occ, spec.dims, &wgt.data, bias.data[0]);
    let indices: Vec<usize> = (0..logits.len())
        .filter(|&i| 1.0 / (1.0 + (-logits[i]).exp()) > 0.5)
        .collect();
    if indices.is_empty() {
        return Err(Error::DegenerateScene);
    }

    let embed = binder.get("query_embed", &[d], Init::Kaiming { fan_in: d });
    let tape = embed.tape().clone();
    let ones = tape.constant(vec![1.0; indices.len()], &[indices.len(), 1]);
    let features = ones.matmul(&embed.reshape(&[1, d]));
    Ok(QuerySet { indices, features })
}

/// Scatter visible features into a dense `[x, y, z, d]` volume, every other
/// voxel holding the shared learned mask token.
pub fn fill_mask_tokens(
    binder: &mut ParamBinder,
    features: &Tensor,
    indices: &[usize],
    spec: &VoxelGridSpec,
) -> Result<Tensor> {
    let d = features.shape()[1];
    let token = binder.get("mask_token", &[d], Init::Kaiming { fan_in: d });
    let flat = fill_volume(features, &token, indices, spec.num_voxels())?;
    Ok(flat.reshape(&[spec.dims[0], spec.dims[1], spec.dims[2], d]))
}

/// Nearest-neighbor upsample then per-voxel linear map d -> C.
pub fn decode_semantic_voxels(
    binder: &mut ParamBinder,
    prefix: &str,
    volume: &Tensor,
    num_classes: usize,
    factor: usize,
) -> Tensor {
    let up = crate::autodiff::upsample_nn3(volume, factor);
    let s = up.shape().to_vec();
    let (vx, vy, vz, d) = (s[0], s[1], s[2], s[3]);
    let w = binder.get(&format!("{prefix}/w"), &[d, num_classes], Init::Kaiming { fan_in: d });
    // Non-zero bias init: voxels that attend to nothing decode to exactly
    // the bias, and an all-zero bias would leave their class logits fully
    // tied (a discontinuity for argmax-based terms).
    let b = binder.get(&format!("{prefix}/b"), &[num_classes], Init::Kaiming { fan_in: d });
    up.reshape(&[vx * vy * vz, d]).matmul(&w).add_row(&b).reshape(&[vx, vy, vz, num_classes])
}

/// Two 3x3 convolutions with tanh plus a pointwise head to class logits,
/// preserving spatial dims.
pub fn decode_semantics_2d(
    binder: &mut ParamBinder,
    prefix: &str,
    fmap: &FeatureMap2D,
    num_classes: usize,
) -> Tensor {
    let d = fmap.tensor.shape()[0];
    let conv = |binder: &mut ParamBinder, name: &str, x: &Tensor, cin: usize, cout: usize, k: usize, pad: usize| {
        let wgt = binder.get(
            &format!("{prefix}/{name}_w"),
            &[cout, cin, k, k],
            Init::Kaiming { fan_in: cin * k * k },
        );
        let b = binder.get(&format!("{prefix}/{name}_b"), &[cout], Init::Zeros);
        conv2d(x, &wgt, &b, 1, pad)
    };
    let x = conv(binder, "conv1", &fmap.tensor, d, d, 3, 1).tanh();
    let x = conv(binder, "conv2", &x, d, d, 3, 1).tanh();
    conv(binder, "head", &x, d, num_classes, 1, 0)
}

/// Camera with intrinsics rescaled to a stride-reduced image, for projecting
/// labels at feature resolution.
pub fn scaled_camera(cam: &CameraModel, stride: usize) -> Result<CameraModel> {
    let s = stride as f64;
    CameraModel::new(
        cam.fx / s,
        cam.fy / s,
        cam.cx / s,
        cam.cy / s,
        (cam.height / stride, cam.width / stride),
        *cam.extrinsics(),
    )
}

fn all_voxel_refs(
    spec: &VoxelGridSpec,
    cam: &CameraModel,
) -> Result<Vec<([f64; 2], bool)>> {
    let all: Vec<usize> = (0..spec.num_voxels()).collect();
    Ok(voxel_refpoints(spec, &all, cam)?
        .into_iter()
        .map(|p| (p.norm, p.valid))
        .collect())
}

fn query_refs(
    spec: &VoxelGridSpec,
    indices: &[usize],
    cam: &CameraModel,
) -> Result<Vec<([f64; 2], bool)>> {
    Ok(voxel_refpoints(spec, indices, cam)?
        .into_iter()
        .map(|p| (p.norm, p.valid))
        .collect())
}

pub fn run_student(
    binder: &mut ParamBinder,
    scene: &SceneInput,
    arch: &ArchConfig,
    cfg: &BranchConfig,
) -> Result<StudentOutput> {
    cfg.validate()?;
    let tape = binder.tape().clone();
    let frame = scene.frames.last().ok_or(Error::Truncated("scene frames"))?.clone();
    let d = arch.feat_dim;

    let image = tape.constant(frame.image.clone(), &[3, scene.image_hw.0, scene.image_hw.1]);
    let fmap = extract_features(binder, "backbone", &image, d, cfg.width)?;

    let queries = generate_depth_queries(binder, &frame.depth, &frame.cam, &scene.spec, d)?;
    let refs = query_refs(&scene.spec, &queries.indices, &frame.cam)?;
    let dca_cfg = DeformableCfg::new(d, arch.heads, arch.points, false);
    let visible = deformable_image_attention(binder, "dca", dca_cfg, &queries.features, &fmap.tensor, &refs);

    let initial = fill_mask_tokens(binder, &visible, &queries.indices, &scene.spec)?;
    let res_cfg = DeformableCfg::new(d, arch.heads, arch.points, true);
    let refined = deformable_self_attention(binder, "dsa", res_cfg, &initial);

    let conditioned = if cfg.icca {
        let s = refined.shape().to_vec();
        let n = s[0] * s[1] * s[2];
        let flat = refined.reshape(&[n, d]);
        let refs_all = all_voxel_refs(&scene.spec, &frame.cam)?;
        image_conditioned_cross_attention(binder, "icca", res_cfg, &flat, &fmap.tensor, &refs_all)
            .reshape(&s)
    } else {
        refined.clone()
    };

    let voxel_logits =
        decode_semantic_voxels(binder, "head3d", &conditioned, arch.num_classes, arch.upsample);
    let sem2d = if cfg.aux_loss {
        Some(decode_semantics_2d(binder, "head2d", &fmap, arch.num_classes))
    } else {
        None
    };
    Ok(StudentOutput { conditioned, refined, initial, voxel_logits, sem2d, queries })
}

pub fn run_teacher(
    binder: &mut ParamBinder,
    scene: &SceneInput,
    arch: &ArchConfig,
    cfg: &BranchConfig,
) -> Result<TeacherOutput> {
    cfg.validate()?;
    if scene.frames.len() < cfg.frames {
        return Err(Error::InvalidArg(format!(
            "teacher wants {} frames but the scene provides {}",
            cfg.frames,
            scene.frames.len()
        )));
    }
    let tape = binder.tape().clone();
    let d = arch.feat_dim;
    let frames = &scene.frames[scene.frames.len() - cfg.frames..];
    let current = frames.last().unwrap();

    let mut fmaps = Vec::with_capacity(frames.len());
    for f in frames {
        let image = tape.constant(f.image.clone(), &[3, scene.image_hw.0, scene.image_hw.1]);
        fmaps.push(extract_features(binder, "backbone", &image, d, cfg.width)?);
    }
    let (fh, fw) = (fmaps[0].tensor.shape()[1], fmaps[0].tensor.shape()[2]);
    let fmap_tensors: Vec<Tensor> = if cfg.cvt {
        let flat: Vec<Tensor> = fmaps.iter().map(|f| f.tensor.chw_to_nc()).collect();
        cross_view_transform(binder, "cvt", d, true, &flat)?
            .into_iter()
            .map(|t| t.nc_to_chw(fh, fw))
            .collect()
    } else {
        fmaps.iter().map(|f| f.tensor.clone()).collect()
    };

    let queries = generate_depth_queries(binder, &current.depth, &current.cam, &scene.spec, d)?;
    let dca_cfg = DeformableCfg::new(d, arch.heads, arch.points, false);
    let mut per_frame = Vec::with_capacity(frames.len());
    for (f, fm) in frames.iter().zip(&fmap_tensors) {
        per_frame.push((fm, query_refs(&scene.spec, &queries.indices, &f.cam)?));
    }
    let visible = temporal_image_attention(binder, "dca", dca_cfg, &queries.features, &per_frame)?;

    let initial = fill_mask_tokens(binder, &visible, &queries.indices, &scene.spec)?;
    let res_cfg = DeformableCfg::new(d, arch.heads, arch.points, true);
    let refined = deformable_self_attention(binder, "dsa", res_cfg, &initial);

    let conditioned = if cfg.icca {
        let s = refined.shape().to_vec();
        let n = s[0] * s[1] * s[2];
        let flat = refined.reshape(&[n, d]);
        let refs_all = all_voxel_refs(&scene.spec, &current.cam)?;
        let current_fmap = fmap_tensors.last().unwrap();
        image_conditioned_cross_attention(binder, "icca", res_cfg, &flat, current_fmap, &refs_all)
            .reshape(&s)
    } else {
        refined
    };

    let voxel_logits =
        decode_semantic_voxels(binder, "head3d", &conditioned, arch.num_classes, arch.upsample);
    let sem2d = if cfg.aux_loss {
        let current_fmap = FeatureMap2D { tensor: fmap_tensors.last().unwrap().clone(), stride: 4 };
        Some(decode_semantics_2d(binder, "head2d", &current_fmap, arch.num_classes))
    } else {
        None
    };
    Ok(TeacherOutput { conditioned, voxel_logits, sem2d })
}

/// Per-voxel argmax labels from `[.., C]` logits, ties toward the lowest
/// class id.
pub fn argmax_labels(logits: &[f64], c: usize) -> Vec<u8> {
    logits
        .chunks_exact(c)
        .map(|row| {
            let mut best = 0usize;
            for j in 1..c {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best as u8
        })
        .collect()
}

/// A camera whose extrinsics are the identity rotation (world == camera).
pub fn identity_pose() -> Matrix4<f64> {
    Matrix4::identity()
}
