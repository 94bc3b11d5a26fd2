//! Image containers and binary PPM/PGM input/output.
//!
//! Coordinates are `(x, y)` with `y` growing downward, row-major storage.
//! Float grayscale images are used by the registration code; RGB, binary
//! mask, and 16-bit id images round-trip through Netpbm files
//! byte-deterministically.

use std::io::{self, Read, Write};

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("bad image file: {0}")]
    Format(String),
    #[error("image dimensions do not match: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub w: usize,
    pub h: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn new(w: usize, h: usize) -> Self {
        GrayImage { w, h, data: vec![0.0; w * h] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.w + x] = v;
    }

    /// Bilinear sample at a continuous position; pixel centers sit at
    /// integer coordinates. `None` outside `[0, w-1] x [0, h-1]`.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        if !(0.0..=(self.w - 1) as f64).contains(&x) || !(0.0..=(self.h - 1) as f64).contains(&y) {
            return None;
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.w - 1);
        let y1 = (y0 + 1).min(self.h - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bot = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        Some(top * (1.0 - fy) + bot * fy)
    }

    /// Catmull-Rom bicubic sample together with its exact spatial
    /// gradient `(value, d/dx, d/dy)`. The surface interpolates pixel
    /// centers and is C1 across cell boundaries, which registration
    /// relies on when it differentiates the score; stencil taps past the
    /// frame clamp to the border. Domain matches [`Self::sample_bilinear`].
    pub fn sample_bicubic_with_grad(&self, x: f64, y: f64) -> Option<(f64, f64, f64)> {
        if !(0.0..=(self.w - 1) as f64).contains(&x) || !(0.0..=(self.h - 1) as f64).contains(&y) {
            return None;
        }
        let x0 = x.floor() as isize;
        let y0 = y.floor() as isize;
        let (wx, dwx) = catmull_rom(x - x0 as f64);
        let (wy, dwy) = catmull_rom(y - y0 as f64);
        let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
        for j in 0..4 {
            let yy = (y0 - 1 + j as isize).clamp(0, self.h as isize - 1) as usize;
            for i in 0..4 {
                let xx = (x0 - 1 + i as isize).clamp(0, self.w as isize - 1) as usize;
                let s = self.get(xx, yy);
                v += wx[i] * wy[j] * s;
                gx += dwx[i] * wy[j] * s;
                gy += wx[i] * dwy[j] * s;
            }
        }
        Some((v, gx, gy))
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Catmull-Rom weights and their derivatives at fractional offset `t`.
/// Weights sum to 1 and derivative weights to 0 for every `t`, so
/// constant shifts of the image pass through sampling unchanged.
fn catmull_rom(t: f64) -> ([f64; 4], [f64; 4]) {
    let t2 = t * t;
    let t3 = t2 * t;
    let w = [
        -0.5 * t + t2 - 0.5 * t3,
        1.0 - 2.5 * t2 + 1.5 * t3,
        0.5 * t + 2.0 * t2 - 1.5 * t3,
        -0.5 * t2 + 0.5 * t3,
    ];
    let dw = [
        -0.5 + 2.0 * t - 1.5 * t2,
        -5.0 * t + 4.5 * t2,
        0.5 + 4.0 * t - 4.5 * t2,
        -t + 1.5 * t2,
    ];
    (w, dw)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub w: usize,
    pub h: usize,
    pub data: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(w: usize, h: usize) -> Self {
        RgbImage { w, h, data: vec![[0; 3]; w * h] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.data[y * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: [u8; 3]) {
        self.data[y * self.w + x] = v;
    }

    /// Rec. 601 luma as float grayscale in `[0, 255]`.
    pub fn luma(&self) -> GrayImage {
        let data = self
            .data
            .iter()
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect();
        GrayImage { w: self.w, h: self.h, data }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub w: usize,
    pub h: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(w: usize, h: usize) -> Self {
        Mask { w, h, data: vec![false; w * h] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.w + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Mean of set pixel coordinates, `None` for an empty mask.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut n = 0usize;
        for y in 0..self.h {
            for x in 0..self.w {
                if self.get(x, y) {
                    sx += x as f64;
                    sy += y as f64;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    /// Intersection-over-union; 1.0 when both masks are empty.
    pub fn iou(&self, other: &Mask) -> f64 {
        assert_eq!((self.w, self.h), (other.w, other.h));
        let mut inter = 0usize;
        let mut union = 0usize;
        for (a, b) in self.data.iter().zip(&other.data) {
            if *a && *b {
                inter += 1;
            }
            if *a || *b {
                union += 1;
            }
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn union_with(&mut self, other: &Mask) {
        assert_eq!((self.w, self.h), (other.w, other.h));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a |= *b;
        }
    }
}

/// Per-pixel 16-bit entity ids (0 is background).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdImage {
    pub w: usize,
    pub h: usize,
    pub data: Vec<u16>,
}

impl IdImage {
    pub fn new(w: usize, h: usize) -> Self {
        IdImage { w, h, data: vec![0; w * h] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u16) {
        self.data[y * self.w + x] = v;
    }

    pub fn mask_of(&self, id: u16) -> Mask {
        Mask { w: self.w, h: self.h, data: self.data.iter().map(|&v| v == id).collect() }
    }
}

// ---------------------------------------------------------------------------
// Filtering
// ---------------------------------------------------------------------------

/// Separable Gaussian blur with replicate borders. `sigma <= 0` is a copy.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    for i in -radius..=radius {
        kernel.push((-((i * i) as f64) / (2.0 * sigma * sigma)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for k in kernel.iter_mut() {
        *k /= norm;
    }

    let w = img.w as i64;
    let h = img.h as i64;
    let mut tmp = GrayImage::new(img.w, img.h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                let sx = (x + ki as i64 - radius).clamp(0, w - 1);
                acc += k * img.get(sx as usize, y as usize);
            }
            tmp.set(x as usize, y as usize, acc);
        }
    }
    let mut out = GrayImage::new(img.w, img.h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                let sy = (y + ki as i64 - radius).clamp(0, h - 1);
                acc += k * tmp.get(x as usize, sy as usize);
            }
            out.set(x as usize, y as usize, acc);
        }
    }
    out
}

/// Halve each dimension with a 2x2 box filter (trailing odd row/column
/// is dropped). Dimensions never go below 1.
pub fn downsample2(img: &GrayImage) -> GrayImage {
    let w = (img.w / 2).max(1);
    let h = (img.h / 2).max(1);
    let mut out = GrayImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let x0 = (2 * x).min(img.w - 1);
            let y0 = (2 * y).min(img.h - 1);
            let x1 = (2 * x + 1).min(img.w - 1);
            let y1 = (2 * y + 1).min(img.h - 1);
            let v = (img.get(x0, y0) + img.get(x1, y0) + img.get(x0, y1) + img.get(x1, y1)) / 4.0;
            out.set(x, y, v);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Netpbm IO
// ---------------------------------------------------------------------------

pub fn write_ppm<W: Write>(img: &RgbImage, mut out: W) -> Result<(), ImageError> {
    write!(out, "P6\n{} {}\n255\n", img.w, img.h)?;
    let mut bytes = Vec::with_capacity(img.data.len() * 3);
    for p in &img.data {
        bytes.extend_from_slice(p);
    }
    out.write_all(&bytes)?;
    Ok(())
}

/// Mask as 8-bit PGM: set pixels are 255, clear pixels 0.
pub fn write_pgm_mask<W: Write>(mask: &Mask, mut out: W) -> Result<(), ImageError> {
    write!(out, "P5\n{} {}\n255\n", mask.w, mask.h)?;
    let bytes: Vec<u8> = mask.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
    out.write_all(&bytes)?;
    Ok(())
}

/// Id buffer as 16-bit big-endian PGM.
pub fn write_pgm_ids<W: Write>(ids: &IdImage, mut out: W) -> Result<(), ImageError> {
    write!(out, "P5\n{} {}\n65535\n", ids.w, ids.h)?;
    let mut bytes = Vec::with_capacity(ids.data.len() * 2);
    for v in &ids.data {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    out.write_all(&bytes)?;
    Ok(())
}

struct PnmHeader {
    magic: [u8; 2],
    w: usize,
    h: usize,
    maxval: u32,
    body: Vec<u8>,
}

fn parse_pnm(bytes: &[u8]) -> Result<PnmHeader, ImageError> {
    if bytes.len() < 2 {
        return Err(ImageError::Format("truncated header".into()));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2usize;
    let mut fields = [0u64; 3];
    for field in fields.iter_mut() {
        // Skip whitespace and '#' comments between header tokens.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err(ImageError::Format("truncated header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if pos == start {
            return Err(ImageError::Format("expected header integer".into()));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).unwrap();
        *field = text.parse().map_err(|_| ImageError::Format("bad header integer".into()))?;
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(ImageError::Format("missing raster separator".into())),
    }
    Ok(PnmHeader {
        magic,
        w: fields[0] as usize,
        h: fields[1] as usize,
        maxval: fields[2] as u32,
        body: bytes[pos..].to_vec(),
    })
}

pub fn read_ppm<R: Read>(mut input: R) -> Result<RgbImage, ImageError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let hdr = parse_pnm(&bytes)?;
    if hdr.magic != *b"P6" || hdr.maxval != 255 {
        return Err(ImageError::Format("expected binary 8-bit PPM".into()));
    }
    let need = hdr.w * hdr.h * 3;
    if hdr.body.len() < need {
        return Err(ImageError::Format("truncated raster".into()));
    }
    let data = hdr.body[..need].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok(RgbImage { w: hdr.w, h: hdr.h, data })
}

pub fn read_pgm_mask<R: Read>(mut input: R) -> Result<Mask, ImageError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let hdr = parse_pnm(&bytes)?;
    if hdr.magic != *b"P5" || hdr.maxval != 255 {
        return Err(ImageError::Format("expected binary 8-bit PGM".into()));
    }
    let need = hdr.w * hdr.h;
    if hdr.body.len() < need {
        return Err(ImageError::Format("truncated raster".into()));
    }
    let data = hdr.body[..need].iter().map(|&b| b >= 128).collect();
    Ok(Mask { w: hdr.w, h: hdr.h, data })
}

pub fn read_pgm_ids<R: Read>(mut input: R) -> Result<IdImage, ImageError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let hdr = parse_pnm(&bytes)?;
    if hdr.magic != *b"P5" || hdr.maxval != 65535 {
        return Err(ImageError::Format("expected binary 16-bit PGM".into()));
    }
    let need = hdr.w * hdr.h * 2;
    if hdr.body.len() < need {
        return Err(ImageError::Format("truncated raster".into()));
    }
    let data = hdr.body[..need].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok(IdImage { w: hdr.w, h: hdr.h, data })
}
