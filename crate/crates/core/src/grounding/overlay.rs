//! Background dimming for the situated manual.
//!
//! Pixels inside the task-relevant masks keep their intensity; outside,
//! intensity falls linearly to 25% over a 10-pixel band measured by
//! exact Euclidean distance to the mask union.

use super::GroundingError;
use crate::img::{Mask, RgbImage};

/// Stand-in for "infinitely far": larger than any real squared pixel
/// distance but safely below float overflow in the envelope arithmetic.
const FAR: f64 = 1e12;

/// Squared-distance lower envelope (one dimension): for every q,
/// `min_p (q - p)^2 + f[p]`.
fn dt1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let sq = |i: usize| (i * i) as f64;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + sq(q)) - (f[p] + sq(p))) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        d[q] = dq * dq + f[p];
    }
}

/// Exact Euclidean distance (pixels) from every pixel to the nearest set
/// pixel of `mask`; set pixels get 0. An empty mask yields `sqrt(FAR)`-
/// scale values everywhere, far beyond any dimming band.
pub fn distance_transform(mask: &Mask) -> Vec<f64> {
    let (w, h) = (mask.w, mask.h);
    let mut g = vec![0.0f64; w * h];
    for (gv, &m) in g.iter_mut().zip(&mask.data) {
        *gv = if m { 0.0 } else { FAR };
    }
    let longest = w.max(h);
    let mut f = vec![0.0f64; longest];
    let mut d = vec![0.0f64; longest];
    let mut v = vec![0usize; longest];
    let mut z = vec![0.0f64; longest + 1];

    // Columns first, then rows; the two 1D passes compose into the exact
    // 2D squared distance.
    for x in 0..w {
        for y in 0..h {
            f[y] = g[y * w + x];
        }
        dt1d(&f[..h], &mut d[..h], &mut v[..h], &mut z[..h + 1]);
        for y in 0..h {
            g[y * w + x] = d[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&g[y * w..y * w + w]);
        dt1d(&f[..w], &mut d[..w], &mut v[..w], &mut z[..w + 1]);
        g[y * w..y * w + w].copy_from_slice(&d[..w]);
    }
    for gv in g.iter_mut() {
        *gv = gv.sqrt();
    }
    g
}

/// Attenuation as a function of distance to the mask union: full
/// intensity inside, linear ramp to 25% across ten pixels, 25% beyond.
pub fn attenuation(d: f64) -> f64 {
    if d == 0.0 {
        1.0
    } else if d <= 10.0 {
        0.25 + 0.75 * (1.0 - d / 10.0)
    } else {
        0.25
    }
}

/// Dim `observation` outside the union of `masks`.
pub fn overlay_dimming(
    observation: &RgbImage,
    masks: &[&Mask],
) -> Result<RgbImage, GroundingError> {
    let mut union = Mask::new(observation.w, observation.h);
    for m in masks {
        if m.w != observation.w || m.h != observation.h {
            return Err(GroundingError::DimensionMismatch);
        }
        union.union_with(m);
    }
    let dist = distance_transform(&union);
    let mut out = observation.clone();
    for (px, &d) in out.data.iter_mut().zip(&dist) {
        let a = attenuation(d);
        for c in px.iter_mut() {
            *c = (*c as f64 * a).round() as u8;
        }
    }
    Ok(out)
}
