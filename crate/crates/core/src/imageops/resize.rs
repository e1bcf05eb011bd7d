use super::ImageTensor;
use crate::error::{Error, Result};

pub const MODEL_INPUT_WIDTH: usize = 384;
pub const MODEL_INPUT_HEIGHT: usize = 224;

/// Bilinear resize to the model input raster (384 wide, 224 high).
pub fn resize(img: &ImageTensor) -> ImageTensor {
    resize_to(img, MODEL_INPUT_WIDTH, MODEL_INPUT_HEIGHT).expect("non-zero target")
}

/// Bilinear resize with half-pixel centres and edge clamping.
pub fn resize_to(img: &ImageTensor, target_w: usize, target_h: usize) -> Result<ImageTensor> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize target must be non-zero, got {target_w}x{target_h}"
        )));
    }
    if target_w == img.width() && target_h == img.height() {
        return Ok(img.clone());
    }
    let (sw, sh) = (img.width(), img.height());
    let sx = sw as f32 / target_w as f32;
    let sy = sh as f32 / target_h as f32;
    let src = img.data();

    let xs: Vec<(usize, usize, f32)> = (0..target_w)
        .map(|x| axis_tap((x as f32 + 0.5) * sx - 0.5, sw))
        .collect();
    let mut out = vec![0u8; target_w * target_h * 3];
    for y in 0..target_h {
        let (y0, y1, fy) = axis_tap((y as f32 + 0.5) * sy - 0.5, sh);
        let row0 = &src[y0 * sw * 3..(y0 + 1) * sw * 3];
        let row1 = &src[y1 * sw * 3..(y1 + 1) * sw * 3];
        let dst = &mut out[y * target_w * 3..(y + 1) * target_w * 3];
        for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
            for c in 0..3 {
                let top = row0[x0 * 3 + c] as f32 * (1.0 - fx) + row0[x1 * 3 + c] as f32 * fx;
                let bot = row1[x0 * 3 + c] as f32 * (1.0 - fx) + row1[x1 * 3 + c] as f32 * fx;
                let v = top * (1.0 - fy) + bot * fy;
                dst[x * 3 + c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    ImageTensor::new(target_w, target_h, out)
}

fn axis_tap(pos: f32, len: usize) -> (usize, usize, f32) {
    let pos = pos.clamp(0.0, (len - 1) as f32);
    let i0 = pos.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, pos - i0 as f32)
}
