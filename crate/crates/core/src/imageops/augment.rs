use rand::Rng;
use serde::{Deserialize, Serialize};

use super::warp::{quad_homography, warp_inverse, Homography};
use super::ImageTensor;
use crate::error::{Error, Result};
use crate::seed;

/// Randomized augmentation ranges. Each `(lo, hi)` pair is sampled
/// uniformly; a pair with `lo == hi` is deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPolicy {
    pub rotation_deg: (f64, f64),
    pub scale_x: (f64, f64),
    pub scale_y: (f64, f64),
    pub channel_shift: (f64, f64),
    pub pixel_shift: (f64, f64),
    pub intensity_scale: (f64, f64),
    /// Maximum corner displacement as a fraction of `min(H, W)`.
    pub perspective_jitter: f64,
    pub flip_prob: f64,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        Self {
            rotation_deg: (-360.0, 360.0),
            scale_x: (0.5, 1.0),
            scale_y: (0.5, 1.0),
            channel_shift: (-25.0, 25.0),
            pixel_shift: (-25.0, 25.0),
            intensity_scale: (0.75, 1.25),
            perspective_jitter: 0.1,
            flip_prob: 0.5,
        }
    }
}

impl AugmentationPolicy {
    pub fn identity() -> Self {
        Self {
            rotation_deg: (0.0, 0.0),
            scale_x: (1.0, 1.0),
            scale_y: (1.0, 1.0),
            channel_shift: (0.0, 0.0),
            pixel_shift: (0.0, 0.0),
            intensity_scale: (1.0, 1.0),
            perspective_jitter: 0.0,
            flip_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, (lo, hi): (f64, f64), min: f64, max: f64| {
            if !(lo.is_finite() && hi.is_finite() && min <= lo && lo <= hi && hi <= max) {
                Err(Error::InvalidArgument(format!(
                    "{name} range ({lo}, {hi}) must be ordered and within [{min}, {max}]"
                )))
            } else {
                Ok(())
            }
        };
        check("rotation_deg", self.rotation_deg, -360.0, 360.0)?;
        check("scale_x", self.scale_x, 0.5, 1.0)?;
        check("scale_y", self.scale_y, 0.5, 1.0)?;
        check("channel_shift", self.channel_shift, -25.0, 25.0)?;
        check("pixel_shift", self.pixel_shift, -25.0, 25.0)?;
        check("intensity_scale", self.intensity_scale, 0.75, 1.25)?;
        check("perspective_jitter", (self.perspective_jitter, self.perspective_jitter), 0.0, 0.25)?;
        check("flip_prob", (self.flip_prob, self.flip_prob), 0.0, 1.0)?;
        Ok(())
    }

    /// Draws one concrete parameter set. Draw order is fixed, so the result
    /// depends only on the policy values and the seed.
    pub fn draw(&self, width: usize, height: usize, rng_seed: u64) -> AugmentDraw {
        let mut rng = seed::rng(rng_seed);
        let mut uniform = |(lo, hi): (f64, f64)| if lo == hi { lo } else { rng.gen_range(lo..=hi) };
        let flip_u = uniform((0.0, 1.0));
        let rotation_deg = uniform(self.rotation_deg);
        let scale_x = uniform(self.scale_x);
        let scale_y = uniform(self.scale_y);
        let reach = self.perspective_jitter * width.min(height) as f64;
        let mut corner_offsets = [(0.0, 0.0); 4];
        for c in corner_offsets.iter_mut() {
            *c = (uniform((-reach, reach)), uniform((-reach, reach)));
        }
        let mut channel_shift = [0i32; 3];
        for c in channel_shift.iter_mut() {
            *c = int_in(uniform(self.channel_shift), self.channel_shift);
        }
        let pixel_shift = int_in(uniform(self.pixel_shift), self.pixel_shift);
        let intensity_scale = uniform(self.intensity_scale);
        AugmentDraw {
            flip: flip_u < self.flip_prob,
            rotation_deg,
            scale_x,
            scale_y,
            corner_offsets,
            channel_shift,
            pixel_shift,
            intensity_scale,
        }
    }
}

fn int_in(v: f64, (lo, hi): (f64, f64)) -> i32 {
    (v.round()).clamp(lo.ceil(), hi.floor()) as i32
}

/// One realized augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub flip: bool,
    pub rotation_deg: f64,
    pub scale_x: f64,
    pub scale_y: f64,
    pub corner_offsets: [(f64, f64); 4],
    pub channel_shift: [i32; 3],
    pub pixel_shift: i32,
    pub intensity_scale: f64,
}

impl AugmentDraw {
    /// Forward geometric map: flip, then rotation, anisotropic scale and
    /// perspective, all about the image centre.
    pub fn geometry(&self, width: usize, height: usize) -> Result<Homography> {
        let (w, h) = (width as f64, height as f64);
        let (cx, cy) = (w / 2.0, h / 2.0);
        let mut m = Homography::IDENTITY;
        if self.flip {
            m = Homography([-1.0, 0.0, w, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        }
        if self.rotation_deg != 0.0 {
            m = Homography::rotation_deg(self.rotation_deg).about(cx, cy).after(&m);
        }
        if self.scale_x != 1.0 || self.scale_y != 1.0 {
            m = Homography::scale(self.scale_x, self.scale_y).about(cx, cy).after(&m);
        }
        if self.corner_offsets.iter().any(|&(dx, dy)| dx != 0.0 || dy != 0.0) {
            m = quad_homography(width, height, &self.corner_offsets)?.after(&m);
        }
        Ok(m)
    }

    pub fn apply(&self, img: &ImageTensor) -> Result<ImageTensor> {
        let forward = self.geometry(img.width(), img.height())?;
        let mut out = if forward.is_identity() {
            img.clone()
        } else {
            let inverse = forward
                .inverse()
                .ok_or_else(|| Error::InvalidArgument("singular augmentation transform".into()))?;
            warp_inverse(img, &inverse)
        };
        self.apply_photometric(&mut out);
        Ok(out)
    }

    /// Per-channel shift, then global shift, then intensity scaling with
    /// flooring; each stage clamps to [0, 255].
    fn apply_photometric(&self, img: &mut ImageTensor) {
        if self.channel_shift == [0; 3] && self.pixel_shift == 0 && self.intensity_scale == 1.0 {
            return;
        }
        let mut lut = [[0u8; 256]; 3];
        for (c, table) in lut.iter_mut().enumerate() {
            for (v, slot) in table.iter_mut().enumerate() {
                let a = (v as i32 + self.channel_shift[c]).clamp(0, 255);
                let b = (a + self.pixel_shift).clamp(0, 255);
                *slot = (b as f64 * self.intensity_scale).floor().clamp(0.0, 255.0) as u8;
            }
        }
        for px in img.data_mut().chunks_exact_mut(3) {
            for c in 0..3 {
                px[c] = lut[c][px[c] as usize];
            }
        }
    }
}

/// Applies a random draw of `policy` seeded by `rng_seed`.
pub fn augment(img: &ImageTensor, policy: &AugmentationPolicy, rng_seed: u64) -> Result<ImageTensor> {
    policy.validate()?;
    policy.draw(img.width(), img.height(), rng_seed).apply(img)
}
