use super::ImageTensor;
use crate::error::{Error, Result};

/// Row-major 3x3 projective transform acting on continuous pixel
/// coordinates, where pixel `(x, y)` has its centre at `(x + 0.5, y + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub [f64; 9]);

impl Homography {
    pub const IDENTITY: Homography = Homography([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);

    pub fn translation(tx: f64, ty: f64) -> Self {
        Homography([1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0])
    }

    pub fn scale(sx: f64, sy: f64) -> Self {
        Homography([sx, 0.0, 0.0, 0.0, sy, 0.0, 0.0, 0.0, 1.0])
    }

    pub fn rotation_deg(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        Homography([c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0])
    }

    /// `self` applied after `first`.
    pub fn after(&self, first: &Homography) -> Homography {
        let a = &self.0;
        let b = &first.0;
        let mut m = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                m[r * 3 + c] = (0..3).map(|k| a[r * 3 + k] * b[k * 3 + c]).sum();
            }
        }
        Homography(m)
    }

    /// Conjugates a transform so that it acts about `(cx, cy)`.
    pub fn about(&self, cx: f64, cy: f64) -> Homography {
        Homography::translation(cx, cy)
            .after(self)
            .after(&Homography::translation(-cx, -cy))
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.0;
        let w = m[6] * x + m[7] * y + m[8];
        ((m[0] * x + m[1] * y + m[2]) / w, (m[3] * x + m[4] * y + m[5]) / w)
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
            + m[2] * (m[3] * m[7] - m[4] * m[6])
    }

    pub fn inverse(&self) -> Option<Homography> {
        let m = &self.0;
        let det = self.determinant();
        if det.abs() < 1e-12 || !det.is_finite() {
            return None;
        }
        let inv = [
            m[4] * m[8] - m[5] * m[7],
            m[2] * m[7] - m[1] * m[8],
            m[1] * m[5] - m[2] * m[4],
            m[5] * m[6] - m[3] * m[8],
            m[0] * m[8] - m[2] * m[6],
            m[2] * m[3] - m[0] * m[5],
            m[3] * m[7] - m[4] * m[6],
            m[1] * m[6] - m[0] * m[7],
            m[0] * m[4] - m[1] * m[3],
        ];
        Some(Homography(inv.map(|v| v / det)))
    }

    pub fn is_identity(&self) -> bool {
        *self == Homography::IDENTITY
    }

    /// Divides through by the bottom-right entry.
    pub fn normalized(&self) -> Homography {
        let k = self.0[8];
        Homography(self.0.map(|v| v / k))
    }
}

/// Closed-form projective map of the unit square onto a quad given as
/// corners in order top-left, top-right, bottom-right, bottom-left.
fn square_to_quad(q: &[(f64, f64); 4]) -> Homography {
    let [(x0, y0), (x1, y1), (x2, y2), (x3, y3)] = *q;
    let dx3 = x0 - x1 + x2 - x3;
    let dy3 = y0 - y1 + y2 - y3;
    if dx3.abs() < 1e-12 && dy3.abs() < 1e-12 {
        return Homography([x1 - x0, x3 - x0, x0, y1 - y0, y3 - y0, y0, 0.0, 0.0, 1.0]);
    }
    let dx1 = x1 - x2;
    let dx2 = x3 - x2;
    let dy1 = y1 - y2;
    let dy2 = y3 - y2;
    let den = dx1 * dy2 - dx2 * dy1;
    let g = (dx3 * dy2 - dx2 * dy3) / den;
    let h = (dx1 * dy3 - dx3 * dy1) / den;
    Homography([
        x1 - x0 + g * x1,
        x3 - x0 + h * x3,
        x0,
        y1 - y0 + g * y1,
        y3 - y0 + h * y3,
        y0,
        g,
        h,
        1.0,
    ])
}

fn check_convex(q: &[(f64, f64); 4]) -> Result<()> {
    let mut sign = 0.0f64;
    for i in 0..4 {
        let (ax, ay) = q[i];
        let (bx, by) = q[(i + 1) % 4];
        let (cx, cy) = q[(i + 2) % 4];
        let cross = (bx - ax) * (cy - by) - (by - ay) * (cx - bx);
        if cross.abs() < 1e-9 || !cross.is_finite() {
            return Err(Error::InvalidArgument(format!("degenerate quad: corner {} is collinear", (i + 1) % 4)));
        }
        if sign == 0.0 {
            sign = cross.signum();
        } else if cross.signum() != sign {
            return Err(Error::InvalidArgument(
                "degenerate quad: corners are self-intersecting or concave".into(),
            ));
        }
    }
    Ok(())
}

/// Homography taking the `width` x `height` image rectangle onto the
/// rectangle with each corner displaced by `offsets` (same corner order as
/// the rectangle: TL, TR, BR, BL).
pub fn quad_homography(width: usize, height: usize, offsets: &[(f64, f64); 4]) -> Result<Homography> {
    let (w, h) = (width as f64, height as f64);
    let rect = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)];
    let mut quad = rect;
    for (corner, (dx, dy)) in quad.iter_mut().zip(offsets) {
        corner.0 += dx;
        corner.1 += dy;
    }
    check_convex(&quad)?;
    let unit_to_quad = square_to_quad(&quad);
    Ok(unit_to_quad.after(&Homography::scale(1.0 / w, 1.0 / h)))
}

/// Projective warp whose forward map sends the image corners to the
/// jittered corners. Samples outside the source replicate the edge.
pub fn perspective_warp(img: &ImageTensor, corner_offsets: &[(f64, f64); 4]) -> Result<ImageTensor> {
    let forward = quad_homography(img.width(), img.height(), corner_offsets)?;
    if corner_offsets.iter().all(|&(dx, dy)| dx == 0.0 && dy == 0.0) {
        return Ok(img.clone());
    }
    let inverse = forward
        .inverse()
        .ok_or_else(|| Error::InvalidArgument("singular perspective transform".into()))?;
    Ok(warp_inverse(img, &inverse))
}

/// Resamples `img` so that output pixel centre `q` reads source position
/// `inverse(q)`, bilinear with edge replication.
pub(crate) fn warp_inverse(img: &ImageTensor, inverse: &Homography) -> ImageTensor {
    let (w, h) = (img.width(), img.height());
    let src = img.data();
    let max_x = (w - 1) as f64;
    let max_y = (h - 1) as f64;
    let mut out = vec![0u8; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = inverse.apply(x as f64 + 0.5, y as f64 + 0.5);
            let sx = if sx.is_finite() { (sx - 0.5).clamp(0.0, max_x) } else { 0.0 };
            let sy = if sy.is_finite() { (sy - 0.5).clamp(0.0, max_y) } else { 0.0 };
            let x0 = sx.floor() as usize;
            let y0 = sy.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let fx = sx - x0 as f64;
            let fy = sy - y0 as f64;
            let o = (y * w + x) * 3;
            for c in 0..3 {
                let p = |xx: usize, yy: usize| src[(yy * w + xx) * 3 + c] as f64;
                let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
                let bot = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
                out[o + c] = (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    ImageTensor::new(w, h, out).expect("same dimensions as source")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{SMatrix, SVector};

    fn gradient_image(w: usize, h: usize) -> ImageTensor {
        ImageTensor::from_fn(w, h, |x, y| [(x * 7 % 256) as u8, (y * 11 % 256) as u8, ((x + y) % 256) as u8])
    }

    /// Direct 8-unknown DLT solve for the map rect -> quad.
    fn dlt_oracle(src: &[(f64, f64); 4], dst: &[(f64, f64); 4]) -> [f64; 9] {
        let mut a = SMatrix::<f64, 8, 8>::zeros();
        let mut b = SVector::<f64, 8>::zeros();
        for i in 0..4 {
            let (x, y) = src[i];
            let (u, v) = dst[i];
            let r = 2 * i;
            a.row_mut(r).copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
            a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
            b[r] = u;
            b[r + 1] = v;
        }
        let sol = a.lu().solve(&b).expect("non-singular system");
        let mut h = [1.0; 9];
        h[..8].copy_from_slice(sol.as_slice());
        h
    }

    #[test]
    fn homography_matches_linear_solve() {
        let offsets = [(3.5, -2.0), (-6.0, 4.25), (2.0, 7.5), (-1.0, -5.0)];
        let (w, h) = (96usize, 64usize);
        let got = quad_homography(w, h, &offsets).unwrap().normalized();
        let src = [(0.0, 0.0), (w as f64, 0.0), (w as f64, h as f64), (0.0, h as f64)];
        let mut dst = src;
        for (d, o) in dst.iter_mut().zip(&offsets) {
            d.0 += o.0;
            d.1 += o.1;
        }
        let want = dlt_oracle(&src, &dst);
        for (g, w) in got.0.iter().zip(want.iter()) {
            assert!((g - w).abs() < 1e-9, "{got:?} vs {want:?}");
        }
        for (s, d) in src.iter().zip(&dst) {
            let (x, y) = got.apply(s.0, s.1);
            assert!((x - d.0).abs() < 1e-9 && (y - d.1).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_offsets_identity() {
        let img = gradient_image(40, 30);
        assert_eq!(perspective_warp(&img, &[(0.0, 0.0); 4]).unwrap(), img);
    }

    #[test]
    fn translation_offsets_shift_with_replicated_border() {
        let img = gradient_image(40, 30);
        let d = 3.0;
        let out = perspective_warp(&img, &[(d, d); 4]).unwrap();
        for y in 0..30 {
            for x in 0..40 {
                let sx = (x as i64 - 3).max(0) as usize;
                let sy = (y as i64 - 3).max(0) as usize;
                assert_eq!(out.pixel(x, y), img.pixel(sx, sy), "at {x},{y}");
            }
        }
    }

    #[test]
    fn self_intersecting_quad_rejected() {
        let img = gradient_image(20, 20);
        // swap the two right-hand corners
        let bowtie = [(0.0, 0.0), (0.0, 20.0), (0.0, -20.0), (0.0, 0.0)];
        assert!(perspective_warp(&img, &bowtie).is_err());
        let collapsed = [(0.0, 0.0), (-20.0, 0.0), (0.0, 0.0), (0.0, 0.0)];
        assert!(perspective_warp(&img, &collapsed).is_err());
    }

    #[test]
    fn inverse_round_trips() {
        let hm = quad_homography(50, 40, &[(1.0, 2.0), (-3.0, 1.0), (2.0, -2.0), (0.5, 0.5)]).unwrap();
        let inv = hm.inverse().unwrap();
        let (x, y) = inv.apply(hm.apply(13.0, 17.0).0, hm.apply(13.0, 17.0).1);
        assert!((x - 13.0).abs() < 1e-9 && (y - 17.0).abs() < 1e-9);
    }
}
