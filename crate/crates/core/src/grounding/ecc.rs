//! Enhanced-correlation-coefficient registration, forward-additive, over
//! the 6 affine parameters, wrapped in a 3-level image pyramid.
//!
//! The score is the zero-mean normalized inner product between the fixed
//! template and the observed image resampled at warped template
//! coordinates. Resampling uses a C1 bicubic surface so the score is
//! differentiable in the warp parameters and the analytic gradient is the
//! exact derivative of the computed score. Samples falling outside the
//! observed image read as 0, so the score is defined everywhere; both
//! inputs are pre-smoothed per level so binary masks expose usable
//! gradients.

use super::{AffineTransform, GroundingError};
use crate::img::{downsample2, gaussian_blur, GrayImage};

pub const PYRAMID_LEVELS: usize = 3;
pub const MAX_ITERATIONS_PER_LEVEL: usize = 200;
/// Accepted-improvement size that counts as converged.
pub const RHO_EPS: f64 = 1e-6;
const SMOOTH_SIGMA: f64 = 1.0;
const MAX_BAD_ITERATIONS: usize = 5;
/// Step dampings tried when the full update lowers the score.
const DAMPINGS: [f64; 4] = [1.0, 0.5, 0.25, 0.125];
/// Smallest image side still processed as a pyramid level.
const MIN_LEVEL_SIDE: usize = 16;

#[derive(Debug, Clone)]
pub struct AlignmentResult {
    pub h: AffineTransform,
    /// Correlation of the final warp on the finest level.
    pub rho: f64,
    /// Total iterations over all pyramid levels.
    pub iterations: usize,
    pub converged: bool,
    /// Score after every accepted iteration (all levels, in order).
    pub rho_trace: Vec<f64>,
}

struct Level {
    tbar: Vec<f64>,
    t_norm: f64,
    coords: Vec<(f64, f64)>,
    obs: GrayImage,
}

fn variance(img: &GrayImage) -> f64 {
    let m = img.mean();
    img.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / img.data.len().max(1) as f64
}

impl Level {
    fn build(template: &GrayImage, observed: &GrayImage) -> Result<Level, GroundingError> {
        let t = gaussian_blur(template, SMOOTH_SIGMA);
        let obs = gaussian_blur(observed, SMOOTH_SIGMA);
        let t_mean = t.mean();
        let tbar: Vec<f64> = t.data.iter().map(|v| v - t_mean).collect();
        let t_norm = tbar.iter().map(|v| v * v).sum::<f64>().sqrt();
        if t_norm <= 1e-12 {
            return Err(GroundingError::DegenerateInput);
        }
        let mut coords = Vec::with_capacity(t.data.len());
        for y in 0..t.h {
            for x in 0..t.w {
                coords.push((x as f64, y as f64));
            }
        }
        Ok(Level { tbar, t_norm, coords, obs })
    }

    /// Warped observed samples, zero value outside the frame.
    fn sample(&self, p: &[f64; 6]) -> Vec<f64> {
        self.coords
            .iter()
            .map(|&(x, y)| {
                let wx = p[0] * x + p[1] * y + p[2];
                let wy = p[3] * x + p[4] * y + p[5];
                self.obs.sample_bicubic_with_grad(wx, wy).map_or(0.0, |(v, _, _)| v)
            })
            .collect()
    }

    /// Warped observed samples with the image gradient at the sample
    /// point; zero everywhere outside the frame.
    fn sample_with_grad(&self, p: &[f64; 6]) -> Vec<(f64, f64, f64)> {
        self.coords
            .iter()
            .map(|&(x, y)| {
                let wx = p[0] * x + p[1] * y + p[2];
                let wy = p[3] * x + p[4] * y + p[5];
                self.obs.sample_bicubic_with_grad(wx, wy).unwrap_or((0.0, 0.0, 0.0))
            })
            .collect()
    }

    /// Correlation at warp `p`; `None` when the warped samples are flat.
    fn rho_at(&self, p: &[f64; 6]) -> Option<f64> {
        let g = self.sample(p);
        let n = g.len() as f64;
        let g_mean = g.iter().sum::<f64>() / n;
        let mut dot_tg = 0.0;
        let mut g_sq = 0.0;
        for (t, gv) in self.tbar.iter().zip(&g) {
            let gb = gv - g_mean;
            dot_tg += t * gb;
            g_sq += gb * gb;
        }
        let g_norm = g_sq.sqrt();
        (g_norm > 1e-12).then(|| dot_tg / (self.t_norm * g_norm))
    }

    /// One forward-additive ECC update at `p`, or `None` when the normal
    /// system is singular or the scale factor is undefined.
    fn update_step(&self, p: &[f64; 6]) -> Option<[f64; 6]> {
        let n = self.coords.len() as f64;
        let samples = self.sample_with_grad(p);
        let g_mean = samples.iter().map(|s| s.0).sum::<f64>() / n;

        // Raw accumulators over all pixels; zero-meaned forms follow.
        let mut sum_rows = [0.0f64; 6];
        let mut gtg = [[0.0f64; 6]; 6];
        let mut gt_t = [0.0f64; 6];
        let mut gt_g = [0.0f64; 6];
        let mut tg = 0.0;
        let mut gg = 0.0;
        for (i, &(x, y)) in self.coords.iter().enumerate() {
            let (gv, ix, iy) = samples[i];
            let row = [ix * x, ix * y, ix, iy * x, iy * y, iy];
            let tb = self.tbar[i];
            let gb = gv - g_mean;
            tg += tb * gb;
            gg += gb * gb;
            for a in 0..6 {
                sum_rows[a] += row[a];
                gt_t[a] += row[a] * tb;
                gt_g[a] += row[a] * gb;
                for b in a..6 {
                    gtg[a][b] += row[a] * row[b];
                }
            }
        }
        // tbar and gbar are zero-mean, so Ḡᵀt̄ = Gᵀt̄ and Ḡᵀḡ = Gᵀḡ;
        // only the Gram matrix needs the mean-row correction.
        let mut m = [[0.0f64; 6]; 6];
        for a in 0..6 {
            for b in a..6 {
                let v = gtg[a][b] - sum_rows[a] * sum_rows[b] / n;
                m[a][b] = v;
                m[b][a] = v;
            }
        }

        let vt = solve6(m, gt_t)?;
        let vg = solve6(m, gt_g)?;
        let g_p_g: f64 = gt_g.iter().zip(&vg).map(|(a, b)| a * b).sum();
        let t_p_g: f64 = gt_t.iter().zip(&vg).map(|(a, b)| a * b).sum();
        let lambda_den = tg - t_p_g;
        if lambda_den <= 1e-12 {
            return None;
        }
        let lambda = (gg - g_p_g) / lambda_den;
        let mut dp = [0.0f64; 6];
        for a in 0..6 {
            dp[a] = lambda * vt[a] - vg[a];
        }
        Some(dp)
    }
}

/// Gaussian elimination with partial pivoting on the 6x6 normal system.
fn solve6(mut m: [[f64; 6]; 6], mut b: [f64; 6]) -> Option<[f64; 6]> {
    let scale = m
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1e-300);
    for col in 0..6 {
        let piv = (col..6).max_by(|&a, &b_| m[a][col].abs().partial_cmp(&m[b_][col].abs()).unwrap())?;
        if m[piv][col].abs() < 1e-12 * scale {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..6 {
            let f = m[r][col] / m[col][col];
            for c in col..6 {
                m[r][c] -= f * m[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0f64; 6];
    for col in (0..6).rev() {
        let mut acc = b[col];
        for c in col + 1..6 {
            acc -= m[col][c] * x[c];
        }
        x[col] = acc / m[col][col];
    }
    Some(x)
}

struct LevelOutcome {
    p: [f64; 6],
    rho: f64,
    iterations: usize,
    converged: bool,
}

fn iterate_level(
    level: &Level,
    p_init: [f64; 6],
    trace: &mut Vec<f64>,
) -> Result<LevelOutcome, GroundingError> {
    let mut p = p_init;
    let mut rho_cur = level.rho_at(&p).ok_or(GroundingError::DegenerateInput)?;
    trace.push(rho_cur);
    let rho_init = rho_cur;
    let mut bad = 0usize;
    let mut iterations = 0usize;
    let mut converged = false;

    while iterations < MAX_ITERATIONS_PER_LEVEL {
        iterations += 1;
        let step = level.update_step(&p);
        let mut accepted = None;
        if let Some(dp) = step {
            for damp in DAMPINGS {
                let mut cand = p;
                for a in 0..6 {
                    cand[a] += damp * dp[a];
                }
                if let Some(r) = level.rho_at(&cand) {
                    if r > rho_cur {
                        accepted = Some((cand, r));
                        break;
                    }
                }
            }
        }
        match accepted {
            Some((cand, r)) => {
                let gain = r - rho_cur;
                p = cand;
                rho_cur = r;
                trace.push(rho_cur);
                bad = 0;
                if gain < RHO_EPS {
                    converged = true;
                    break;
                }
            }
            None => {
                bad += 1;
                if bad >= MAX_BAD_ITERATIONS {
                    if rho_cur < rho_init {
                        return Err(GroundingError::Diverged);
                    }
                    // Plateaued at or above where the level started: no
                    // step improves the score any further.
                    converged = true;
                    break;
                }
            }
        }
    }
    Ok(LevelOutcome { p, rho: rho_cur, iterations, converged })
}

/// Register `template` onto `observed`, starting from `init` (given in
/// finest-level pixel coordinates).
pub fn ecc_align(
    template: &GrayImage,
    observed: &GrayImage,
    init: &AffineTransform,
) -> Result<AlignmentResult, GroundingError> {
    if template.w != observed.w || template.h != observed.h {
        return Err(GroundingError::DimensionMismatch);
    }
    if variance(template) <= 1e-12 || variance(observed) <= 1e-12 {
        return Err(GroundingError::DegenerateInput);
    }

    // Raw pyramids, finest first; levels below the side floor are skipped.
    let mut t_lv = vec![template.clone()];
    let mut o_lv = vec![observed.clone()];
    for _ in 1..PYRAMID_LEVELS {
        let t = downsample2(t_lv.last().unwrap());
        let o = downsample2(o_lv.last().unwrap());
        if t.w < MIN_LEVEL_SIDE || t.h < MIN_LEVEL_SIDE {
            break;
        }
        t_lv.push(t);
        o_lv.push(o);
    }
    let n_levels = t_lv.len();

    let mut p = init.params();
    let coarse_scale = (1 << (n_levels - 1)) as f64;
    p[2] /= coarse_scale;
    p[5] /= coarse_scale;

    let mut iterations = 0;
    let mut trace = Vec::new();
    let mut rho_final = -1.0;
    let mut converged = false;
    for lvl in (0..n_levels).rev() {
        let level = Level::build(&t_lv[lvl], &o_lv[lvl])?;
        let out = iterate_level(&level, p, &mut trace)?;
        p = out.p;
        iterations += out.iterations;
        rho_final = out.rho;
        converged = out.converged;
        if lvl > 0 {
            p[2] *= 2.0;
            p[5] *= 2.0;
        }
    }

    let h = AffineTransform::from_params(p);
    if h.det().abs() <= 1e-8 {
        return Err(GroundingError::NonInvertibleWarp);
    }
    Ok(AlignmentResult { h, rho: rho_final, iterations, converged, rho_trace: trace })
}

/// Correlation of `template` against `observed` warped by `h`, on the
/// images exactly as given (no smoothing, no pyramid).
pub fn rho(
    template: &GrayImage,
    observed: &GrayImage,
    h: &AffineTransform,
) -> Result<f64, GroundingError> {
    let level = level_raw(template, observed)?;
    level.rho_at(&h.params()).ok_or(GroundingError::DegenerateInput)
}

/// Analytic gradient of [`rho`] with respect to the six warp parameters.
pub fn rho_gradient(
    template: &GrayImage,
    observed: &GrayImage,
    h: &AffineTransform,
) -> Result<[f64; 6], GroundingError> {
    let level = level_raw(template, observed)?;
    let p = h.params();
    let n = level.coords.len() as f64;
    let samples = level.sample_with_grad(&p);
    let g_mean = samples.iter().map(|s| s.0).sum::<f64>() / n;

    let mut gt_t = [0.0f64; 6];
    let mut gt_g = [0.0f64; 6];
    let mut tg = 0.0;
    let mut gg = 0.0;
    for (i, &(x, y)) in level.coords.iter().enumerate() {
        let (gv, ix, iy) = samples[i];
        let row = [ix * x, ix * y, ix, iy * x, iy * y, iy];
        let tb = level.tbar[i];
        let gb = gv - g_mean;
        tg += tb * gb;
        gg += gb * gb;
        for a in 0..6 {
            gt_t[a] += row[a] * tb;
            gt_g[a] += row[a] * gb;
        }
    }
    let g_norm = gg.sqrt();
    if g_norm <= 1e-12 {
        return Err(GroundingError::DegenerateInput);
    }
    // d rho / dp = (Ḡᵀt̄) / (‖t̄‖ ‖ḡ‖) − (t̄ᵀḡ) (Ḡᵀḡ) / (‖t̄‖ ‖ḡ‖³).
    // Row means cancel against t̄/ḡ being zero-mean except in Ḡᵀḡ and
    // Ḡᵀt̄, which equal the raw products for the same reason.
    let mut out = [0.0f64; 6];
    for a in 0..6 {
        out[a] = gt_t[a] / (level.t_norm * g_norm) - tg * gt_g[a] / (level.t_norm * g_norm.powi(3));
    }
    Ok(out)
}

fn level_raw(template: &GrayImage, observed: &GrayImage) -> Result<Level, GroundingError> {
    if template.w != observed.w || template.h != observed.h {
        return Err(GroundingError::DimensionMismatch);
    }
    let t_mean = template.mean();
    let tbar: Vec<f64> = template.data.iter().map(|v| v - t_mean).collect();
    let t_norm = tbar.iter().map(|v| v * v).sum::<f64>().sqrt();
    if t_norm <= 1e-12 {
        return Err(GroundingError::DegenerateInput);
    }
    let mut coords = Vec::with_capacity(template.data.len());
    for y in 0..template.h {
        for x in 0..template.w {
            coords.push((x as f64, y as f64));
        }
    }
    Ok(Level { tbar, t_norm, coords, obs: observed.clone() })
}
