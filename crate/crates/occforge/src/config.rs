//! Presets, branch toggles, loss weights, and the resolved run configuration.

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::geometry::VoxelGridSpec;
use crate::{Error, Result};

/// Scene/grid scale. `kitti` keeps the full benchmark geometry constants;
/// `toy` and `micro` are desk-scale shrinks of the same layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Micro,
    Toy,
    Kitti,
}

impl Preset {
    pub fn grid(self) -> VoxelGridSpec {
        match self {
            // Scene extents: micro and toy both cover 12.8 x 12.8 m in front
            // of the ego position; kitti is the benchmark grid.
            Preset::Micro => VoxelGridSpec::new([0.0, -6.4, -1.6], 1.6, [8, 8, 4]),
            Preset::Toy => VoxelGridSpec::new([0.0, -6.4, -1.6], 0.4, [32, 32, 8]),
            Preset::Kitti => VoxelGridSpec::new([0.0, -25.6, -2.0], 0.2, [256, 256, 32]),
        }
    }

    /// Rendered image size (H, W); divisible by the backbone stride.
    pub fn image_hw(self) -> (usize, usize) {
        match self {
            Preset::Micro => (16, 16),
            Preset::Toy => (48, 48),
            Preset::Kitti => (64, 208),
        }
    }

    /// Feature channel dim `d` (divisible by the head count).
    pub fn feat_dim(self) -> usize {
        match self {
            Preset::Micro => 8,
            Preset::Toy | Preset::Kitti => 32,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Micro => "micro",
            Preset::Toy => "toy",
            Preset::Kitti => "kitti",
        }
    }
}

/// Architecture constants shared by both branches.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArchConfig {
    pub feat_dim: usize,
    pub heads: usize,
    /// Sample points per head in deformable attention.
    pub points: usize,
    pub num_classes: usize,
    pub backbone_stride: usize,
    /// Integer upsampling factor from the feature volume to the output grid.
    pub upsample: usize,
}

impl ArchConfig {
    pub fn for_preset(preset: Preset) -> Self {
        ArchConfig {
            feat_dim: preset.feat_dim(),
            heads: 2,
            points: 4,
            num_classes: crate::scenes::NUM_CLASSES,
            backbone_stride: 4,
            upsample: 1,
        }
    }
}

/// Per-branch capacity and component toggles.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BranchConfig {
    /// Backbone width multiplier (student 1, teacher >= 2).
    pub width: usize,
    /// Temporal frame count (student always 1).
    pub frames: usize,
    pub aux_loss: bool,
    pub icca: bool,
    pub distill: bool,
    pub cvt: bool,
}

impl BranchConfig {
    pub fn student() -> Self {
        BranchConfig { width: 1, frames: 1, aux_loss: true, icca: true, distill: false, cvt: false }
    }

    pub fn teacher() -> Self {
        BranchConfig { width: 2, frames: 2, aux_loss: true, icca: true, distill: false, cvt: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::InvalidArg("frame count must be >= 1".into()));
        }
        if self.width == 0 {
            return Err(Error::InvalidArg("width multiplier must be >= 1".into()));
        }
        Ok(())
    }
}

/// Loss weights. Defaults match the published hyper-parameters
/// (4.0, 3.0, 2.0, 1.0, 0.5).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LossWeights {
    pub sem: f64,
    pub distill: f64,
    pub ssc: f64,
    pub scal_sem: f64,
    pub scal_geo: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { sem: 4.0, distill: 3.0, ssc: 2.0, scal_sem: 1.0, scal_geo: 0.5 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("lambda1 (sem)", self.sem),
            ("lambda2 (distill)", self.distill),
            ("lambda3 (ssc)", self.ssc),
            ("lambda4 (scal_sem)", self.scal_sem),
            ("lambda5 (scal_geo)", self.scal_geo),
        ] {
            if !(w >= 0.0) {
                return Err(Error::InvalidArg(format!("{} must be nonnegative, got {}", name, w)));
            }
        }
        Ok(())
    }
}

/// Fully resolved run configuration; serialized next to every run's outputs
/// so any run is reproducible from the file alone.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub preset: Preset,
    pub branch: BranchConfig,
    pub teacher_branch: BranchConfig,
    pub weights: LossWeights,
    pub epochs: usize,
    pub lr: f64,
    pub depth_noise: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            preset: Preset::Toy,
            branch: BranchConfig::student(),
            teacher_branch: BranchConfig::teacher(),
            weights: LossWeights::default(),
            epochs: 10,
            lr: 1e-2,
            depth_noise: 0.0,
        }
    }
}
