//! Frame-to-frame mask propagation.
//!
//! A stand-in for a learned video segmenter with the same contract: per
//! entity, find the integer translation that best explains the masked
//! patch between frames (normalized cross-correlation over a ±16 px
//! window), then rebuild the mask by color-similarity flood fill seeded
//! at the translated centroid. Entities whose correlation peak falls
//! below 0.5 are reported lost with an empty mask.

use crate::img::{GrayImage, Mask, RgbImage};

const SEARCH_RADIUS: i64 = 16;
const PEAK_THRESHOLD: f64 = 0.5;
/// Ring width added around each mask before correlating. A flat-colored
/// entity has no internal texture; its silhouette against the
/// surroundings is what localizes it.
const PATCH_DILATION: i64 = 2;
/// Manhattan RGB distance accepted by the flood fill. Wide enough to
/// span one entity's differently shaded faces, narrow enough to stop at
/// other entities and the baseplate. Same-colored touching entities
/// cannot be separated by this stand-in.
const COLOR_TOL: i64 = 120;

#[derive(Debug, Clone)]
pub struct TrackedMask {
    pub mask: Mask,
    pub lost: bool,
    /// Estimated integer translation, when not lost.
    pub shift: Option<(i64, i64)>,
}

fn lost(w: usize, h: usize) -> TrackedMask {
    TrackedMask { mask: Mask::new(w, h), lost: true, shift: None }
}

fn dilate(mask: &Mask, r: i64) -> Mask {
    let mut out = Mask::new(mask.w, mask.h);
    for y in 0..mask.h {
        for x in 0..mask.w {
            if !mask.get(x, y) {
                continue;
            }
            for dy in -r..=r {
                for dx in -r..=r {
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    if nx >= 0 && ny >= 0 && (nx as usize) < mask.w && (ny as usize) < mask.h {
                        out.set(nx as usize, ny as usize, true);
                    }
                }
            }
        }
    }
    out
}

/// Correlation of the masked patch against the next frame under an
/// integer shift. Pixels leaving the frame are dropped; `None` when
/// fewer than half remain or either side is flat.
fn ncc_at(
    pix: &[(usize, usize)],
    prev: &GrayImage,
    next: &GrayImage,
    dx: i64,
    dy: i64,
) -> Option<f64> {
    let mut pairs = Vec::with_capacity(pix.len());
    for &(x, y) in pix {
        let nx = x as i64 + dx;
        let ny = y as i64 + dy;
        if nx >= 0 && ny >= 0 && (nx as usize) < next.w && (ny as usize) < next.h {
            pairs.push((prev.get(x, y), next.get(nx as usize, ny as usize)));
        }
    }
    if pairs.len() * 2 < pix.len() {
        return None;
    }
    let n = pairs.len() as f64;
    let ma = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mb = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for (a, b) in pairs {
        ab += (a - ma) * (b - mb);
        aa += (a - ma) * (a - ma);
        bb += (b - mb) * (b - mb);
    }
    if aa <= 1e-12 || bb <= 1e-12 {
        return None;
    }
    Some(ab / (aa.sqrt() * bb.sqrt()))
}

fn flood_fill(frame: &RgbImage, seed: (usize, usize)) -> Mask {
    let mut mask = Mask::new(frame.w, frame.h);
    let seed_color = frame.get(seed.0, seed.1);
    let close = |c: [u8; 3]| {
        let d = (c[0] as i64 - seed_color[0] as i64).abs()
            + (c[1] as i64 - seed_color[1] as i64).abs()
            + (c[2] as i64 - seed_color[2] as i64).abs();
        d <= COLOR_TOL
    };
    let mut queue = vec![seed];
    mask.set(seed.0, seed.1, true);
    while let Some((x, y)) = queue.pop() {
        let neighbors = [
            (x.wrapping_sub(1), y),
            (x + 1, y),
            (x, y.wrapping_sub(1)),
            (x, y + 1),
        ];
        for (nx, ny) in neighbors {
            if nx < frame.w && ny < frame.h && !mask.get(nx, ny) && close(frame.get(nx, ny)) {
                mask.set(nx, ny, true);
                queue.push((nx, ny));
            }
        }
    }
    mask
}

/// Propagate each entity mask from `prev_frame` into `next_frame`.
pub fn track_masks(
    prev_masks: &[Mask],
    prev_frame: &RgbImage,
    next_frame: &RgbImage,
) -> Vec<TrackedMask> {
    assert_eq!((prev_frame.w, prev_frame.h), (next_frame.w, next_frame.h));
    let prev_l = prev_frame.luma();
    let next_l = next_frame.luma();
    let (w, h) = (prev_frame.w, prev_frame.h);

    prev_masks
        .iter()
        .map(|mask| {
            assert_eq!((mask.w, mask.h), (w, h));
            let Some(centroid) = mask.centroid() else {
                return lost(w, h);
            };
            let region = dilate(mask, PATCH_DILATION);
            let pix: Vec<(usize, usize)> = (0..h)
                .flat_map(|y| (0..w).map(move |x| (x, y)))
                .filter(|&(x, y)| region.get(x, y))
                .collect();

            let mut best: Option<((i64, i64), f64)> = None;
            for dy in -SEARCH_RADIUS..=SEARCH_RADIUS {
                for dx in -SEARCH_RADIUS..=SEARCH_RADIUS {
                    if let Some(score) = ncc_at(&pix, &prev_l, &next_l, dx, dy) {
                        let better = match best {
                            None => true,
                            Some((_, s)) => score > s,
                        };
                        if better {
                            best = Some(((dx, dy), score));
                        }
                    }
                }
            }
            let Some(((dx, dy), peak)) = best else {
                return lost(w, h);
            };
            if peak < PEAK_THRESHOLD {
                return lost(w, h);
            }
            let sx = centroid.0.round() as i64 + dx;
            let sy = centroid.1.round() as i64 + dy;
            if sx < 0 || sy < 0 || sx as usize >= w || sy as usize >= h {
                return lost(w, h);
            }
            TrackedMask {
                mask: flood_fill(next_frame, (sx as usize, sy as usize)),
                lost: false,
                shift: Some((dx, dy)),
            }
        })
        .collect()
}
