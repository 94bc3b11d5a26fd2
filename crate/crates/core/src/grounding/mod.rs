//! Assembly intent grounding: align the rendered structure mask to its
//! observed counterpart with an affine ECC registration, project the
//! step's entity masks through the recovered warp, and dim everything
//! outside them to produce the situated-manual image.

mod ecc;
mod overlay;
mod track;

pub use ecc::{ecc_align, rho, rho_gradient, AlignmentResult};
pub use overlay::{distance_transform, overlay_dimming};
pub use track::{track_masks, TrackedMask};

use crate::img::{GrayImage, Mask, RgbImage};
use crate::render::StepMasks;

/// Default correlation floor below which grounding is rejected.
pub const DEFAULT_RHO_THRESHOLD: f64 = 0.8;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GroundingError {
    #[error("degenerate input: zero intensity variance")]
    DegenerateInput,
    #[error("alignment diverged")]
    Diverged,
    #[error("warp is not invertible")]
    NonInvertibleWarp,
    #[error("empty mask")]
    EmptyMask,
    #[error("image dimensions do not match")]
    DimensionMismatch,
    #[error("grounding failed: correlation {rho:.4} below threshold {threshold:.4}")]
    GroundingFailed { rho: f64, threshold: f64 },
}

/// 2x3 affine matrix mapping template pixel coordinates to image
/// coordinates: `(x, y) -> (m00 x + m01 y + m02, m10 x + m11 y + m12)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    pub m: [[f64; 3]; 2],
}

impl AffineTransform {
    pub fn identity() -> Self {
        AffineTransform { m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]] }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        AffineTransform { m: [[1.0, 0.0, tx], [0.0, 1.0, ty]] }
    }

    /// Row-major `[a, b, tx, c, d, ty]`.
    pub fn from_params(p: [f64; 6]) -> Self {
        AffineTransform { m: [[p[0], p[1], p[2]], [p[3], p[4], p[5]]] }
    }

    pub fn params(&self) -> [f64; 6] {
        let m = self.m;
        [m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2]]
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.m[0][0] * x + self.m[0][1] * y + self.m[0][2],
            self.m[1][0] * x + self.m[1][1] * y + self.m[1][2],
        )
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn invert(&self) -> Result<AffineTransform, GroundingError> {
        let d = self.det();
        if d.abs() <= 1e-8 {
            return Err(GroundingError::NonInvertibleWarp);
        }
        let [[a, b, tx], [c, e, ty]] = self.m;
        Ok(AffineTransform {
            m: [
                [e / d, -b / d, (b * ty - e * tx) / d],
                [-c / d, a / d, (c * tx - a * ty) / d],
            ],
        })
    }

    /// `self` applied after `inner`: `(self ∘ inner)(x) = self(inner(x))`.
    pub fn compose(&self, inner: &AffineTransform) -> AffineTransform {
        let a = self.m;
        let b = inner.m;
        let mut out = [[0.0; 3]; 2];
        for (r, row) in out.iter_mut().enumerate() {
            for c in 0..2 {
                row[c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
            row[2] = a[r][0] * b[0][2] + a[r][1] * b[1][2] + a[r][2];
        }
        AffineTransform { m: out }
    }

    /// Largest absolute entry of `self - identity`.
    pub fn deviation_from_identity(&self) -> f64 {
        let i = AffineTransform::identity();
        self.params()
            .iter()
            .zip(i.params())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Binary mask as a float image with set pixels at 255.
pub fn mask_to_gray(mask: &Mask) -> GrayImage {
    GrayImage {
        w: mask.w,
        h: mask.h,
        data: mask.data.iter().map(|&b| if b { 255.0 } else { 0.0 }).collect(),
    }
}

/// Identity linear part, translation = observed centroid − template
/// centroid. The coarse alignment that seeds the ECC iteration.
pub fn centroid_init(template: &Mask, observed: &Mask) -> Result<AffineTransform, GroundingError> {
    let (tc, oc) = match (template.centroid(), observed.centroid()) {
        (Some(t), Some(o)) => (t, o),
        _ => return Err(GroundingError::EmptyMask),
    };
    Ok(AffineTransform::translation(oc.0 - tc.0, oc.1 - tc.1))
}

/// Inverse-mapped nearest-neighbor resampling of a binary mask.
pub fn warp_mask(mask: &Mask, h: &AffineTransform) -> Result<Mask, GroundingError> {
    let inv = h.invert()?;
    let mut out = Mask::new(mask.w, mask.h);
    for y in 0..mask.h {
        for x in 0..mask.w {
            let (sx, sy) = inv.apply(x as f64, y as f64);
            let (ix, iy) = (sx.round() as i64, sy.round() as i64);
            if ix >= 0 && iy >= 0 && (ix as usize) < mask.w && (iy as usize) < mask.h {
                out.set(x, y, mask.get(ix as usize, iy as usize));
            }
        }
    }
    Ok(out)
}

/// The intent-augmented observation plus everything used to build it.
pub struct SituatedManual {
    pub image: RgbImage,
    pub m_ref: Mask,
    pub m_tgt: Mask,
    pub m_grip: Mask,
    pub h: AffineTransform,
    pub alignment: AlignmentResult,
}

/// Full grounding pipeline for one step: register the rendered structure
/// mask onto the observed one, project the step masks through the
/// recovered warp, and dim the observation outside their union.
pub fn ground_step(
    reference: &StepMasks,
    observation: &RgbImage,
    observed_structure: &Mask,
    rho_threshold: f64,
) -> Result<SituatedManual, GroundingError> {
    if observation.w != observed_structure.w || observation.h != observed_structure.h {
        return Err(GroundingError::DimensionMismatch);
    }
    let init = centroid_init(&reference.m_str, observed_structure)?;
    let alignment = ecc_align(
        &mask_to_gray(&reference.m_str),
        &mask_to_gray(observed_structure),
        &init,
    )?;
    if alignment.rho < rho_threshold {
        return Err(GroundingError::GroundingFailed { rho: alignment.rho, threshold: rho_threshold });
    }
    let m_ref = warp_mask(&reference.m_ref, &alignment.h)?;
    let m_tgt = warp_mask(&reference.m_tgt, &alignment.h)?;
    let m_grip = warp_mask(&reference.m_grip, &alignment.h)?;
    let image = overlay_dimming(observation, &[&m_ref, &m_tgt, &m_grip])?;
    Ok(SituatedManual { image, m_ref, m_tgt, m_grip, h: alignment.h, alignment })
}
