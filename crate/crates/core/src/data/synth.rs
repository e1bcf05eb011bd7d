//! Procedural 16-class corpus. Each foreground class has its own parametric
//! motif and colour; all classes share the soil background, and the
//! negative class is background only.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{GenParams, Manifest, Sample, SampleSource};
use super::taxonomy::{ClassTaxonomy, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::imageops::ImageTensor;
use crate::seed;

/// Per-sample nuisance ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationRanges {
    pub brightness: (f64, f64),
    pub shadow: (f64, f64),
    pub blur_radius: (u32, u32),
    pub rotation_deg: (f64, f64),
    /// Motif radius as a fraction of half the short image side.
    pub scale: (f64, f64),
}

impl Default for VariationRanges {
    fn default() -> Self {
        Self {
            brightness: (0.8, 1.2),
            shadow: (0.0, 0.4),
            blur_radius: (0, 1),
            rotation_deg: (-180.0, 180.0),
            scale: (0.6, 0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub counts: Vec<usize>,
    pub width: usize,
    pub height: usize,
    pub variation: VariationRanges,
}

impl CorpusSpec {
    pub fn uniform(per_class: usize, width: usize, height: usize) -> Self {
        Self {
            counts: vec![per_class; NUM_CLASSES],
            width,
            height,
            variation: VariationRanges::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts.len() != NUM_CLASSES || self.counts.iter().any(|&c| c == 0) {
            return Err(Error::InvalidArgument(format!(
                "corpus needs {NUM_CLASSES} positive class counts, got {:?}",
                self.counts
            )));
        }
        if self.width < 32 || self.height < 32 {
            return Err(Error::InvalidArgument(format!(
                "corpus image size must be at least 32x32, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Builds a manifest of generator-backed samples. Pixels are rendered on
/// demand with [`render_generated`].
pub fn generate_synthetic_corpus(spec: &CorpusSpec, seed: u64) -> Result<Manifest> {
    spec.validate()?;
    let mut samples = Vec::with_capacity(spec.counts.iter().sum());
    for (class_id, &count) in spec.counts.iter().enumerate() {
        for i in 0..count {
            samples.push(Sample {
                source: SampleSource::Generated(GenParams {
                    seed: seed::derive(seed, &[class_id as u64, i as u64]),
                    width: spec.width,
                    height: spec.height,
                    variation: spec.variation,
                }),
                class_id,
                width: spec.width,
                height: spec.height,
            });
        }
    }
    Manifest::new(ClassTaxonomy::aiweeds(), samples)
}

#[derive(Debug, Clone)]
pub struct RenderedSample {
    pub image: ImageTensor,
    /// Number of pixels written by the foreground motif.
    pub foreground_pixels: usize,
}

/// Where and how a motif is drawn on a canvas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotifPlacement {
    pub cx: f64,
    pub cy: f64,
    pub radius_px: f64,
    pub rotation_deg: f64,
    /// Additive per-channel colour offset.
    pub tint: [f64; 3],
}

pub fn render_generated(class_id: usize, gen: &GenParams) -> Result<RenderedSample> {
    if class_id >= NUM_CLASSES {
        return Err(Error::Taxonomy(format!("class id {class_id} out of range")));
    }
    let taxonomy = ClassTaxonomy::aiweeds();
    let mut rng = seed::rng(gen.seed);
    let v = &gen.variation;
    let (w, h) = (gen.width, gen.height);
    let mut img = render_background(w, h, &mut rng);
    let mut fg = 0;
    if class_id != taxonomy.negative_class_id() {
        let half = w.min(h) as f64 / 2.0;
        let placement = MotifPlacement {
            cx: w as f64 / 2.0 + rng.gen_range(-0.15..=0.15) * w as f64,
            cy: h as f64 / 2.0 + rng.gen_range(-0.1..=0.1) * h as f64,
            radius_px: half * uniform(&mut rng, v.scale),
            rotation_deg: uniform(&mut rng, v.rotation_deg),
            tint: [
                rng.gen_range(-15.0..=15.0),
                rng.gen_range(-15.0..=15.0),
                rng.gen_range(-15.0..=15.0),
            ],
        };
        fg = render_motif(&mut img, class_id, &placement);
    }
    let brightness = uniform(&mut rng, v.brightness);
    let shadow = uniform(&mut rng, v.shadow);
    let shadow_dir = rng.gen_range(0.0..TAU);
    apply_lighting(&mut img, brightness, shadow, shadow_dir);
    let radius = if v.blur_radius.0 == v.blur_radius.1 {
        v.blur_radius.0
    } else {
        rng.gen_range(v.blur_radius.0..=v.blur_radius.1)
    };
    box_blur(&mut img, radius as usize, radius as usize);
    Ok(RenderedSample {
        image: img,
        foreground_pixels: fg,
    })
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Soil texture with pebbles and, half of the time, the dark band of an
/// adjacent crop row along the top or bottom edge.
pub fn render_background(width: usize, height: usize, rng: &mut ChaCha8Rng) -> ImageTensor {
    let base = [
        rng.gen_range(95.0..150.0),
        rng.gen_range(65.0..105.0),
        rng.gen_range(35.0..70.0),
    ];
    let coarse = ValueNoise::new(rng, 9, 6);
    let fine = ValueNoise::new(rng, 33, 20);
    let mut img = ImageTensor::from_fn(width, height, |x, y| {
        let u = x as f64 / width as f64;
        let v = y as f64 / height as f64;
        let n = 0.75 + 0.35 * coarse.sample(u, v) + 0.2 * fine.sample(u, v);
        [
            to_u8(base[0] * n),
            to_u8(base[1] * n),
            to_u8(base[2] * n),
        ]
    });
    let pebbles = rng.gen_range(4..14);
    for _ in 0..pebbles {
        let cx = rng.gen_range(0.0..width as f64);
        let cy = rng.gen_range(0.0..height as f64);
        let r = rng.gen_range(1.5..(width.min(height) as f64 * 0.03).max(2.0));
        let g = rng.gen_range(110.0..170.0);
        fill_disk(&mut img, cx, cy, r, [g, g * 0.95, g * 0.9]);
    }
    if rng.gen_bool(0.5) {
        let band = (height as f64 * rng.gen_range(0.05..0.12)) as usize;
        let top = rng.gen_bool(0.5);
        for y in 0..band.min(height) {
            let yy = if top { y } else { height - 1 - y };
            for x in 0..width {
                let p = img.pixel(x, yy);
                img.set_pixel(x, yy, [p[0] / 3 + 10, p[1] / 3 + 25, p[2] / 3 + 5]);
            }
        }
    }
    img
}

fn fill_disk(img: &mut ImageTensor, cx: f64, cy: f64, r: f64, rgb: [f64; 3]) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x0 = ((cx - r).floor() as i64).max(0);
    let x1 = ((cx + r).ceil() as i64).min(w - 1);
    let y0 = ((cy - r).floor() as i64).max(0);
    let y1 = ((cy + r).ceil() as i64).min(h - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            if dx * dx + dy * dy <= r * r {
                img.set_pixel(x as usize, y as usize, rgb.map(to_u8));
            }
        }
    }
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

struct ValueNoise {
    grid: Vec<f64>,
    gw: usize,
    gh: usize,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, gw: usize, gh: usize) -> Self {
        let grid = (0..gw * gh).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Self { grid, gw, gh }
    }

    fn sample(&self, u: f64, v: f64) -> f64 {
        let x = u * (self.gw - 1) as f64;
        let y = v * (self.gh - 1) as f64;
        let x0 = (x.floor() as usize).min(self.gw - 2);
        let y0 = (y.floor() as usize).min(self.gh - 2);
        let fx = smooth(x - x0 as f64);
        let fy = smooth(y - y0 as f64);
        let g = |i: usize, j: usize| self.grid[j * self.gw + i];
        let top = g(x0, y0) * (1.0 - fx) + g(x0 + 1, y0) * fx;
        let bot = g(x0, y0 + 1) * (1.0 - fx) + g(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bot * fy
    }
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Base colour per class id.
const PALETTE: [[f64; 3]; NUM_CLASSES] = [
    [200.0, 40.0, 40.0],
    [230.0, 200.0, 40.0],
    [150.0, 60.0, 200.0],
    [40.0, 170.0, 60.0],
    [40.0, 190.0, 200.0],
    [250.0, 140.0, 20.0],
    [110.0, 150.0, 240.0],
    [240.0, 110.0, 180.0],
    [0.0, 0.0, 0.0],
    [150.0, 220.0, 30.0],
    [20.0, 80.0, 30.0],
    [235.0, 235.0, 220.0],
    [30.0, 50.0, 170.0],
    [80.0, 220.0, 150.0],
    [120.0, 20.0, 50.0],
    [0.0, 110.0, 110.0],
];

/// Draws the class motif onto `img` and returns the number of pixels it
/// covered. The negative class draws nothing.
pub fn render_motif(img: &mut ImageTensor, class_id: usize, p: &MotifPlacement) -> usize {
    if class_id >= NUM_CLASSES || class_id == ClassTaxonomy::aiweeds().negative_class_id() || p.radius_px <= 0.0 {
        return 0;
    }
    let (w, h) = (img.width() as i64, img.height() as i64);
    let r = p.radius_px;
    let x0 = ((p.cx - r).floor() as i64).max(0);
    let x1 = ((p.cx + r).ceil() as i64).min(w - 1);
    let y0 = ((p.cy - r).floor() as i64).max(0);
    let y1 = ((p.cy + r).ceil() as i64).min(h - 1);
    let (s, c) = (-p.rotation_deg).to_radians().sin_cos();
    let color = [0, 1, 2].map(|i| PALETTE[class_id][i] + p.tint[i]);
    let mut count = 0;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = (x as f64 + 0.5 - p.cx) / r;
            let dy = (y as f64 + 0.5 - p.cy) / r;
            let u = c * dx - s * dy;
            let v = s * dx + c * dy;
            if let Some(shade) = motif_shade(class_id, u, v) {
                img.set_pixel(x as usize, y as usize, color.map(|ch| to_u8(ch * shade)));
                count += 1;
            }
        }
    }
    count
}

/// Shape membership in unit-radius local coordinates, returning a shading
/// factor for covered points.
fn motif_shade(class_id: usize, u: f64, v: f64) -> Option<f64> {
    let r = (u * u + v * v).sqrt();
    if r > 1.0 {
        return None;
    }
    let theta = v.atan2(u);
    let edge = 1.0 - 0.3 * r;
    let hit = match class_id {
        // parallel bars
        0 => ((u + 1.0) * 3.5).fract() < 0.5,
        // grass blades fanning up from the bottom
        1 => (0..9).any(|i| {
            let t = i as f64 / 8.0 - 0.5;
            seg_dist(u, v, (t * 0.4, 0.95), (t * 1.6, -0.85)) < 0.045
        }),
        // spiky star
        2 => {
            let k = ((theta / TAU * 8.0).rem_euclid(1.0) - 0.5).abs() * 2.0;
            r < 0.3 + 0.7 * (1.0 - k).powi(3)
        }
        // blob cluster
        3 => [(-0.35, -0.3, 0.45), (0.35, -0.25, 0.4), (0.0, 0.4, 0.5), (0.5, 0.45, 0.3)]
            .iter()
            .any(|&(bx, by, br)| (u - bx).powi(2) + (v - by).powi(2) < br * br),
        // concentric rings
        4 => (r * 4.5).fract() < 0.5,
        // petal rosette
        5 => r < 0.2 || r < (0.5 + 0.5 * (6.0 * theta).cos()).sqrt() * 0.95,
        // flax stems with seed heads
        6 => (0..5).any(|i| {
            let sx = -0.6 + 0.3 * i as f64;
            ((u - sx).abs() < 0.035 && v > -0.75) || (u - sx).powi(2) + (v + 0.8).powi(2) < 0.012
        }),
        // checkerboard disk
        7 => ((u * 3.0 + 10.0).floor() as i64 + (v * 3.0 + 10.0).floor() as i64) % 2 == 0,
        // triangle trio
        9 => [(0.0, -0.45), (-0.45, 0.35), (0.45, 0.35)]
            .iter()
            .any(|&(tx, ty)| in_triangle(u - tx, v - ty, 0.45)),
        // four broad ovals
        10 => (0..4).any(|k| {
            let a = k as f64 * PI / 2.0;
            let (sa, ca) = a.sin_cos();
            let lu = ca * u + sa * v;
            let lv = -sa * u + ca * v;
            (lu / 0.3).powi(2) + ((lv - 0.5) / 0.48).powi(2) < 1.0
        }),
        // spiral
        11 => ((theta / TAU) + r * 2.5).rem_euclid(1.0) < 0.4,
        // plus sign
        12 => (u.abs() < 0.25 && v.abs() < 0.95) || (v.abs() < 0.25 && u.abs() < 0.95),
        // five-lobed leaf
        13 => r < 0.55 + 0.4 * (2.5 * theta).cos().abs(),
        // dot grid
        14 => {
            let gu = (u / 0.4).round() * 0.4;
            let gv = (v / 0.4).round() * 0.4;
            (u - gu).powi(2) + (v - gv).powi(2) < 0.14 * 0.14
        }
        // crescent
        15 => r < 0.9 && (u - 0.35).powi(2) + v * v > 0.49,
        _ => false,
    };
    hit.then_some(edge)
}

fn seg_dist(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let t = (((px - a.0) * dx + (py - a.1) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    ((px - a.0 - t * dx).powi(2) + (py - a.1 - t * dy).powi(2)).sqrt()
}

fn in_triangle(u: f64, v: f64, size: f64) -> bool {
    // upward equilateral triangle centred at the origin
    let h = size * 3f64.sqrt() / 2.0;
    v < h / 2.0 && v > -h / 2.0 && u.abs() < (v + h / 2.0) / h * size
}

/// Multiplicative brightness plus a linear shadow ramp along `dir`.
pub(crate) fn apply_lighting(img: &mut ImageTensor, brightness: f64, shadow: f64, dir: f64) {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let (sd, cd) = dir.sin_cos();
    let width = img.width();
    for (i, px) in img.data_mut().chunks_exact_mut(3).enumerate() {
        let x = (i % width) as f64 / w - 0.5;
        let y = (i / width) as f64 / h - 0.5;
        let t = (x * cd + y * sd + 0.5).clamp(0.0, 1.0);
        let k = brightness * (1.0 - shadow * t);
        for ch in px.iter_mut() {
            *ch = to_u8(*ch as f64 * k);
        }
    }
}

/// Separable box blur with horizontal radius `rx` and vertical radius `ry`.
pub(crate) fn box_blur(img: &mut ImageTensor, rx: usize, ry: usize) {
    if rx == 0 && ry == 0 {
        return;
    }
    let (w, h) = (img.width(), img.height());
    let mut buf: Vec<f32> = img.data().iter().map(|&v| v as f32).collect();
    let mut tmp = buf.clone();
    if rx > 0 {
        for y in 0..h {
            for x in 0..w {
                let lo = x.saturating_sub(rx);
                let hi = (x + rx).min(w - 1);
                for c in 0..3 {
                    let s: f32 = (lo..=hi).map(|xx| buf[(y * w + xx) * 3 + c]).sum();
                    tmp[(y * w + x) * 3 + c] = s / (hi - lo + 1) as f32;
                }
            }
        }
        std::mem::swap(&mut buf, &mut tmp);
    }
    if ry > 0 {
        for y in 0..h {
            let lo = y.saturating_sub(ry);
            let hi = (y + ry).min(h - 1);
            for x in 0..w {
                for c in 0..3 {
                    let s: f32 = (lo..=hi).map(|yy| buf[(yy * w + x) * 3 + c]).sum();
                    tmp[(y * w + x) * 3 + c] = s / (hi - lo + 1) as f32;
                }
            }
        }
        std::mem::swap(&mut buf, &mut tmp);
    }
    for (d, s) in img.data_mut().iter_mut().zip(&buf) {
        *d = s.round().clamp(0.0, 255.0) as u8;
    }
}
