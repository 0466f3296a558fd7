//! Voxel-grid scoring (per-class IoU, semantic mIoU, occupancy IoU) and
//! ASCII PLY export of labeled grids.

use std::io::Write;
use std::path::Path;

use crate::geometry::IGNORE_LABEL;
use crate::Result;

/// C x C counts over evaluated voxels, `counts[gt][pred]`, plus how many
/// voxels were skipped as ignore.
#[derive(Clone, Debug)]
pub struct ConfusionMatrix {
    pub num_classes: usize,
    pub counts: Vec<usize>,
    pub ignored: usize,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        ConfusionMatrix { num_classes, counts: vec![0; num_classes * num_classes], ignored: 0 }
    }

    pub fn add(&mut self, gt: &[u8], pred: &[u8]) {
        assert_eq!(gt.len(), pred.len(), "gt/pred length mismatch");
        for (&g, &p) in gt.iter().zip(pred) {
            if g == IGNORE_LABEL {
                self.ignored += 1;
                continue;
            }
            let (g, p) = (g as usize, p as usize);
            assert!(g < self.num_classes && p < self.num_classes, "label out of range");
            self.counts[g * self.num_classes + p] += 1;
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    fn tp(&self, c: usize) -> usize {
        self.counts[c * self.num_classes + c]
    }

    fn gt_count(&self, c: usize) -> usize {
        (0..self.num_classes).map(|p| self.counts[c * self.num_classes + p]).sum()
    }

    fn pred_count(&self, c: usize) -> usize {
        (0..self.num_classes).map(|g| self.counts[g * self.num_classes + c]).sum()
    }

    /// IoU per class; `None` where the class appears in neither gt nor
    /// prediction.
    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        (0..self.num_classes)
            .map(|c| {
                let (tp, g, p) = (self.tp(c), self.gt_count(c), self.pred_count(c));
                let union = g + p - tp;
                if union == 0 {
                    None
                } else {
                    Some(tp as f64 / union as f64)
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct IouReport {
    /// Per semantic class (index = class id); absent classes are `None`.
    pub per_class: Vec<Option<f64>>,
    /// Mean over present semantic classes, class 0 (free) excluded.
    pub miou: f64,
    /// IoU of the binary occupied/free split.
    pub occupancy_iou: f64,
}

/// Score predicted voxel labels against ground truth (255 = ignore).
/// Classes in neither gt nor prediction are excluded from the mean; the
/// free class is excluded from mIoU and scored via `occupancy_iou`.
pub fn compute_miou(pred: &[u8], gt: &[u8], num_classes: usize) -> IouReport {
    let mut cm = ConfusionMatrix::new(num_classes);
    cm.add(gt, pred);
    let per_class = cm.per_class_iou();
    let semantic: Vec<f64> = per_class.iter().skip(1).filter_map(|x| *x).collect();
    let miou = if semantic.is_empty() {
        0.0
    } else {
        semantic.iter().sum::<f64>() / semantic.len() as f64
    };

    let mut bin = ConfusionMatrix::new(2);
    let to_bin = |labels: &[u8]| -> Vec<u8> {
        labels.iter().map(|&l| if l == IGNORE_LABEL { l } else { (l != 0) as u8 }).collect()
    };
    bin.add(&to_bin(gt), &to_bin(pred));
    let occupancy_iou = bin.per_class_iou()[1].unwrap_or(0.0);
    IouReport { per_class, miou, occupancy_iou }
}

/// Write occupied voxels of a labeled grid as an ASCII PLY mesh: one cube
/// (8 vertices, 12 triangles) per occupied voxel, colored by the palette.
pub fn export_ply(
    grid: &crate::geometry::LabelGrid,
    palette: &[[f64; 3]],
    path: &Path,
) -> Result<()> {
    let spec = &grid.spec;
    let occupied: Vec<usize> = (0..spec.num_voxels())
        .filter(|&lin| {
            let l = grid.labels[lin];
            l != 0 && l != IGNORE_LABEL
        })
        .collect();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "ply")?;
    writeln!(f, "format ascii 1.0")?;
    writeln!(f, "element vertex {}", occupied.len() * 8)?;
    writeln!(f, "property float x")?;
    writeln!(f, "property float y")?;
    writeln!(f, "property float z")?;
    writeln!(f, "property uchar red")?;
    writeln!(f, "property uchar green")?;
    writeln!(f, "property uchar blue")?;
    writeln!(f, "element face {}", occupied.len() * 12)?;
    writeln!(f, "property list uchar int vertex_indices")?;
    writeln!(f, "end_header")?;
    for &lin in &occupied {
        let idx = spec.from_linear(lin);
        let color = palette[grid.labels[lin] as usize];
        let rgb: Vec<u8> = color.iter().map(|&c| (c * 255.0).round() as u8).collect();
        for corner in 0..8usize {
            let p: Vec<f64> = (0..3)
                .map(|a| spec.origin[a] + (idx[a] + ((corner >> a) & 1)) as f64 * spec.resolution)
                .collect();
            writeln!(f, "{} {} {} {} {} {}", p[0], p[1], p[2], rgb[0], rgb[1], rgb[2])?;
        }
    }
    // Each cube face as two triangles over the local corner ids
    // (bit 0 = x, bit 1 = y, bit 2 = z).
    const FACES: [[usize; 4]; 6] = [
        [0, 2, 6, 4],
        [1, 5, 7, 3],
        [0, 4, 5, 1],
        [2, 3, 7, 6],
        [0, 1, 3, 2],
        [4, 6, 7, 5],
    ];
    for (vi, _) in occupied.iter().enumerate() {
        let base = vi * 8;
        for quad in FACES {
            writeln!(f, "3 {} {} {}", base + quad[0], base + quad[1], base + quad[2])?;
            writeln!(f, "3 {} {} {}", base + quad[0], base + quad[2], base + quad[3])?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{LabelGrid, VoxelGridSpec};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_prediction_scores_one() {
        let gt = vec![0u8, 1, 2, 3, 1, 0, 2];
        let r = compute_miou(&gt, &gt, 4);
        assert_eq!(r.miou, 1.0);
        assert_eq!(r.occupancy_iou, 1.0);
        for c in [1usize, 2, 3] {
            assert_eq!(r.per_class[c], Some(1.0));
        }
    }

    #[test]
    fn all_free_prediction_zeroes_occupied_classes() {
        let gt = vec![1u8, 2, 0, 1];
        let pred = vec![0u8; 4];
        let r = compute_miou(&pred, &gt, 3);
        assert_eq!(r.per_class[1], Some(0.0));
        assert_eq!(r.per_class[2], Some(0.0));
        assert_eq!(r.miou, 0.0);
        assert_eq!(r.occupancy_iou, 0.0);
    }

    #[test]
    fn hand_counted_example() {
        let gt = vec![1u8, 1, 2, IGNORE_LABEL];
        let pred = vec![1u8, 2, 2, 2];
        let r = compute_miou(&pred, &gt, 3);
        assert_eq!(r.per_class[1], Some(0.5));
        assert_eq!(r.per_class[2], Some(0.5));
        assert!((r.miou - 0.5).abs() < 1e-12);
    }

    #[test]
    fn confusion_conserves_labeled_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gt: Vec<u8> = (0..200)
            .map(|_| if rng.gen_bool(0.1) { IGNORE_LABEL } else { rng.gen_range(0..5u8) })
            .collect();
        let pred: Vec<u8> = (0..200).map(|_| rng.gen_range(0..5u8)).collect();
        let mut cm = ConfusionMatrix::new(5);
        cm.add(&gt, &pred);
        let labeled = gt.iter().filter(|&&g| g != IGNORE_LABEL).count();
        assert_eq!(cm.total(), labeled);
        assert_eq!(cm.ignored, 200 - labeled);
    }

    #[test]
    fn miou_invariant_under_relabeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gt: Vec<u8> = (0..100).map(|_| rng.gen_range(0..4u8)).collect();
        let pred: Vec<u8> = (0..100).map(|_| rng.gen_range(0..4u8)).collect();
        let base = compute_miou(&pred, &gt, 4);
        // Permute only the occupied classes so the free/occupied split is
        // preserved.
        let perm = [0u8, 3, 1, 2];
        let map = |v: &[u8]| -> Vec<u8> { v.iter().map(|&l| perm[l as usize]).collect() };
        let permuted = compute_miou(&map(&pred), &map(&gt), 4);
        assert!((base.miou - permuted.miou).abs() < 1e-12);
        assert!((base.occupancy_iou - permuted.occupancy_iou).abs() < 1e-12);
    }

    #[test]
    fn absent_class_excluded_from_mean() {
        // Class 3 in neither gt nor pred: mean over classes 1 and 2 only.
        let gt = vec![1u8, 1, 2, 2];
        let pred = vec![1u8, 1, 2, 1];
        let r = compute_miou(&pred, &gt, 4);
        assert_eq!(r.per_class[3], None);
        let want = (1.0 / 1.5 + 0.5) / 2.0;
        assert!((r.miou - want).abs() < 1e-12);
    }

    #[test]
    fn ply_counts_match_occupancy() {
        let dir = tempfile::tempdir().unwrap();
        let spec = VoxelGridSpec::new([0.0; 3], 0.5, [3, 3, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut grid = LabelGrid::empty(spec);
        for l in grid.labels.iter_mut() {
            *l = if rng.gen_bool(0.4) { rng.gen_range(1..8u8) } else { 0 };
        }
        let occ = grid.labels.iter().filter(|&&l| l != 0).count();
        let path = dir.path().join("grid.ply");
        export_ply(&grid, &crate::scenes::PALETTE, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains(&format!("element vertex {}", occ * 8)));
        assert!(text.contains(&format!("element face {}", occ * 12)));
        let body: Vec<&str> = text.lines().skip_while(|l| *l != "end_header").skip(1).collect();
        assert_eq!(body.len(), occ * 8 + occ * 12);

        // Empty grid: header-only file.
        let empty = LabelGrid::empty(spec);
        let path2 = dir.path().join("empty.ply");
        export_ply(&empty, &crate::scenes::PALETTE, &path2).unwrap();
        let text2 = std::fs::read_to_string(&path2).unwrap();
        assert!(text2.contains("element vertex 0"));
        assert_eq!(text2.lines().skip_while(|l| *l != "end_header").skip(1).count(), 0);
    }
}
