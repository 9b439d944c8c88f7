//! Sphere against axis-aligned voxel contact queries.

use crate::voxel::VoxelGrid;

/// The deepest sphere/voxel overlap found by [`sphere_voxel_contact`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub voxel: [usize; 3],
    /// `radius - distance` for centres outside the voxel, `radius + depth` for
    /// centres inside it.
    pub depth: f64,
    /// Unit normal along the axis of minimal penetration, pointing out of the voxel.
    pub normal: [f64; 3],
    /// Translation along `normal` that separates the sphere from the voxel on that axis.
    pub separation: f64,
}

/// Depth of a sphere/box overlap, or `None` when the closest point on the box
/// is at least `radius` from the centre.
pub(crate) fn overlap_depth(center: [f64; 3], radius: f64, lo: [f64; 3], hi: [f64; 3]) -> Option<f64> {
    let mut dist2 = 0.0;
    let mut inside = f64::INFINITY;
    for k in 0..3 {
        let c = center[k];
        if c < lo[k] {
            dist2 += (lo[k] - c) * (lo[k] - c);
        } else if c > hi[k] {
            dist2 += (c - hi[k]) * (c - hi[k]);
        } else {
            inside = inside.min((c - lo[k]).min(hi[k] - c));
        }
    }
    if dist2 >= radius * radius {
        return None;
    }
    if dist2 > 0.0 {
        Some(radius - dist2.sqrt())
    } else {
        Some(radius + inside)
    }
}

/// Axis of minimal penetration between the sphere's bounding box and the voxel.
/// Ties go to the lowest axis.
pub(crate) fn min_penetration_axis(center: [f64; 3], radius: f64, lo: [f64; 3], hi: [f64; 3]) -> ([f64; 3], f64) {
    let mut best_axis = 0;
    let mut best_sign = 1.0;
    let mut best_pen = f64::INFINITY;
    for k in 0..3 {
        let toward_lo = center[k] + radius - lo[k];
        let toward_hi = hi[k] - (center[k] - radius);
        let (pen, sign) = if toward_lo < toward_hi {
            (toward_lo, -1.0)
        } else if toward_hi < toward_lo {
            (toward_hi, 1.0)
        } else if center[k] < 0.5 * (lo[k] + hi[k]) {
            (toward_lo, -1.0)
        } else {
            (toward_hi, 1.0)
        };
        if pen < best_pen {
            best_axis = k;
            best_sign = sign;
            best_pen = pen;
        }
    }
    let mut normal = [0.0; 3];
    normal[best_axis] = best_sign;
    (normal, best_pen)
}

/// Finds the occupied voxel the sphere penetrates most deeply.
///
/// `origin` is the world position of the grid's `(0, 0, 0)` corner. Only the
/// voxels under the sphere's bounding box are examined. Equal depths resolve to
/// the lowest `(x, y, z)` index.
pub fn sphere_voxel_contact(center: [f64; 3], radius: f64, grid: &VoxelGrid, origin: [f64; 3]) -> Option<Contact> {
    let s = grid.voxel_size();
    let local = [center[0] - origin[0], center[1] - origin[1], center[2] - origin[2]];
    let limits = [grid.width(), grid.length(), grid.max_height() as usize];
    let mut range = [(0usize, 0usize); 3];
    for k in 0..3 {
        let lo = ((local[k] - radius) / s).floor();
        let hi = ((local[k] + radius) / s).floor();
        if hi < 0.0 || lo >= limits[k] as f64 {
            return None;
        }
        range[k] = (lo.max(0.0) as usize, (hi as usize).min(limits[k] - 1));
    }

    let mut best: Option<(f64, [usize; 3])> = None;
    for x in range[0].0..=range[0].1 {
        for y in range[1].0..=range[1].1 {
            let top = grid.height(x, y) as usize;
            if top == 0 || range[2].0 >= top {
                continue;
            }
            for z in range[2].0..=range[2].1.min(top - 1) {
                let (lo, hi) = voxel_bounds([x, y, z], s, origin);
                if let Some(depth) = overlap_depth(center, radius, lo, hi) {
                    if best.is_none_or(|(d, _)| depth > d) {
                        best = Some((depth, [x, y, z]));
                    }
                }
            }
        }
    }

    best.map(|(depth, voxel)| {
        let (lo, hi) = voxel_bounds(voxel, s, origin);
        let (normal, separation) = min_penetration_axis(center, radius, lo, hi);
        Contact {
            voxel,
            depth,
            normal,
            separation,
        }
    })
}

pub(crate) fn voxel_bounds(voxel: [usize; 3], size: f64, origin: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let lo = [
        origin[0] + voxel[0] as f64 * size,
        origin[1] + voxel[1] as f64 * size,
        origin[2] + voxel[2] as f64 * size,
    ];
    (lo, [lo[0] + size, lo[1] + size, lo[2] + size])
}
