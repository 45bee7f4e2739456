//! Pixel-level primitives shared by the segmenter and the classifier
//! preprocessing path: grayscale conversion, binarization, square padding,
//! bilinear resize and cropping. Everything here works on plain in-memory
//! buffers; file I/O lives in `pipeline`.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("crop box {x},{y} {w}x{h} exceeds image bounds {iw}x{ih}")]
    OutOfBounds {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        iw: usize,
        ih: usize,
    },
    #[error("buffer length {got} does not match {expect} for {w}x{h}")]
    BadBuffer { got: usize, expect: usize, w: usize, h: usize },
}

/// 8-bit RGB image, row-major, channel-interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        let expect = width * height * 3;
        if data.len() != expect || width == 0 || height == 0 {
            return Err(ImageError::BadBuffer { got: data.len(), expect, w: width, h: height });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// 8-bit single-channel image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        let expect = width * height;
        if data.len() != expect || width == 0 || height == 0 {
            return Err(ImageError::BadBuffer { got: data.len(), expect, w: width, h: height });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }
}

/// One boolean per pixel; `true` is foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BinaryImage {
    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Axis-aligned rectangle: `x`,`y` top-left corner, `w`x`h` extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BBox {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    /// True when `inner` lies strictly inside `self` (no shared edges).
    pub fn strictly_contains(&self, inner: &BBox) -> bool {
        inner.x > self.x
            && inner.y > self.y
            && inner.x + inner.w < self.x + self.w
            && inner.y + inner.h < self.y + self.h
    }

    pub fn intersection_area(&self, other: &BBox) -> usize {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = (self.x + self.w).min(other.x + other.w);
        let y1 = (self.y + self.h).min(other.y + other.h);
        if x1 > x0 && y1 > y0 {
            (x1 - x0) * (y1 - y0)
        } else {
            0
        }
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other) as f64;
        let union = (self.area() + other.area()) as f64 - inter;
        if union == 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Threshold selection for [`threshold_binary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Threshold {
    Fixed(u8),
    /// Otsu's criterion: maximize between-class variance, ties broken by the
    /// lowest threshold.
    Auto,
}

/// ITU-R BT.601 luminance: round(0.299 R + 0.587 G + 0.114 B).
pub fn to_grayscale(img: &ColorImage) -> GrayImage {
    let mut data = Vec::with_capacity(img.width * img.height);
    for px in img.data.chunks_exact(3) {
        let y = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
        data.push(y.round().clamp(0.0, 255.0) as u8);
    }
    GrayImage { width: img.width, height: img.height, data }
}

/// Otsu's threshold over the gray histogram. Returns the threshold t such
/// that pixels > t are one class; ties resolve to the lowest t.
pub fn otsu_threshold(img: &GrayImage) -> u8 {
    let mut hist = [0u64; 256];
    for &p in &img.data {
        hist[p as usize] += 1;
    }
    let total = img.data.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(v, &c)| v as f64 * c as f64).sum();

    let mut best_t = 0u8;
    let mut best_var = -1.0f64;
    let mut w0 = 0.0f64; // weight of class <= t
    let mut sum0 = 0.0f64;
    for t in 0..256usize {
        w0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let var = w0 * w1 * (m0 - m1) * (m0 - m1);
        if var > best_var {
            best_var = var;
            best_t = t as u8;
        }
    }
    best_t
}

/// Binarize: foreground = (pixel > thresh) XOR invert.
pub fn threshold_binary(img: &GrayImage, thresh: Threshold, invert: bool) -> BinaryImage {
    let t = match thresh {
        Threshold::Fixed(v) => v,
        Threshold::Auto => otsu_threshold(img),
    };
    let data = img.data.iter().map(|&p| (p > t) ^ invert).collect();
    BinaryImage { width: img.width, height: img.height, data }
}

/// Pad to a square canvas of side max(w, h), original at the top-left,
/// remaining pixels set to `fill`.
pub fn pad_to_square_gray(img: &GrayImage, fill: u8) -> GrayImage {
    let side = img.width.max(img.height);
    if img.width == img.height {
        return img.clone();
    }
    let mut out = GrayImage::filled(side, side, fill);
    for y in 0..img.height {
        let src = y * img.width..(y + 1) * img.width;
        let dst = y * side..y * side + img.width;
        out.data[dst].copy_from_slice(&img.data[src]);
    }
    out
}

pub fn pad_to_square_color(img: &ColorImage, fill: [u8; 3]) -> ColorImage {
    let side = img.width.max(img.height);
    if img.width == img.height {
        return img.clone();
    }
    let mut out = ColorImage::filled(side, side, fill);
    for y in 0..img.height {
        let src = y * img.width * 3..(y + 1) * img.width * 3;
        let dst = y * side * 3..(y * side + img.width) * 3;
        out.data[dst].copy_from_slice(&img.data[src]);
    }
    out
}

/// Bilinear resize with half-pixel-center mapping
/// `src = (dst + 0.5) * scale - 0.5`, edge-clamped, rounded half-up to 8 bit.
pub fn resize_bilinear_gray(img: &GrayImage, target_w: usize, target_h: usize) -> GrayImage {
    assert!(target_w >= 1 && target_h >= 1);
    if target_w == img.width && target_h == img.height {
        return img.clone();
    }
    let mut out = GrayImage::filled(target_w, target_h, 0);
    let sample = |x: isize, y: isize| -> f64 {
        let xc = x.clamp(0, img.width as isize - 1) as usize;
        let yc = y.clamp(0, img.height as isize - 1) as usize;
        img.get(xc, yc) as f64
    };
    resize_plane(img.width, img.height, target_w, target_h, |dx, dy, v| {
        out.set(dx, dy, v);
    }, sample);
    out
}

pub fn resize_bilinear_color(img: &ColorImage, target_w: usize, target_h: usize) -> ColorImage {
    assert!(target_w >= 1 && target_h >= 1);
    if target_w == img.width && target_h == img.height {
        return img.clone();
    }
    let mut out = ColorImage::filled(target_w, target_h, [0, 0, 0]);
    for c in 0..3 {
        let sample = |x: isize, y: isize| -> f64 {
            let xc = x.clamp(0, img.width as isize - 1) as usize;
            let yc = y.clamp(0, img.height as isize - 1) as usize;
            img.data[(yc * img.width + xc) * 3 + c] as f64
        };
        resize_plane(img.width, img.height, target_w, target_h, |dx, dy, v| {
            out.data[(dy * target_w + dx) * 3 + c] = v;
        }, sample);
    }
    out
}

fn resize_plane<S, W>(src_w: usize, src_h: usize, dst_w: usize, dst_h: usize, mut write: W, sample: S)
where
    S: Fn(isize, isize) -> f64,
    W: FnMut(usize, usize, u8),
{
    let sx = src_w as f64 / dst_w as f64;
    let sy = src_h as f64 / dst_h as f64;
    for dy in 0..dst_h {
        let fy = (dy as f64 + 0.5) * sy - 0.5;
        let y0 = fy.floor() as isize;
        let wy = fy - y0 as f64;
        for dx in 0..dst_w {
            let fx = (dx as f64 + 0.5) * sx - 0.5;
            let x0 = fx.floor() as isize;
            let wx = fx - x0 as f64;
            let v = sample(x0, y0) * (1.0 - wx) * (1.0 - wy)
                + sample(x0 + 1, y0) * wx * (1.0 - wy)
                + sample(x0, y0 + 1) * (1.0 - wx) * wy
                + sample(x0 + 1, y0 + 1) * wx * wy;
            write(dx, dy, (v + 0.5).floor().clamp(0.0, 255.0) as u8);
        }
    }
}

pub fn crop_gray(img: &GrayImage, bbox: &BBox) -> Result<GrayImage, ImageError> {
    if bbox.w == 0 || bbox.h == 0 || bbox.x + bbox.w > img.width || bbox.y + bbox.h > img.height {
        return Err(ImageError::OutOfBounds {
            x: bbox.x,
            y: bbox.y,
            w: bbox.w,
            h: bbox.h,
            iw: img.width,
            ih: img.height,
        });
    }
    let mut data = Vec::with_capacity(bbox.w * bbox.h);
    for y in bbox.y..bbox.y + bbox.h {
        let start = y * img.width + bbox.x;
        data.extend_from_slice(&img.data[start..start + bbox.w]);
    }
    Ok(GrayImage { width: bbox.w, height: bbox.h, data })
}

pub fn crop_color(img: &ColorImage, bbox: &BBox) -> Result<ColorImage, ImageError> {
    if bbox.w == 0 || bbox.h == 0 || bbox.x + bbox.w > img.width || bbox.y + bbox.h > img.height {
        return Err(ImageError::OutOfBounds {
            x: bbox.x,
            y: bbox.y,
            w: bbox.w,
            h: bbox.h,
            iw: img.width,
            ih: img.height,
        });
    }
    let mut data = Vec::with_capacity(bbox.w * bbox.h * 3);
    for y in bbox.y..bbox.y + bbox.h {
        let start = (y * img.width + bbox.x) * 3;
        data.extend_from_slice(&img.data[start..start + bbox.w * 3]);
    }
    Ok(ColorImage { width: bbox.w, height: bbox.h, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grayscale_white_black_and_red() {
        let white = ColorImage::new(1, 1, vec![255, 255, 255]).unwrap();
        assert_eq!(to_grayscale(&white).data, vec![255]);
        let black = ColorImage::new(1, 1, vec![0, 0, 0]).unwrap();
        assert_eq!(to_grayscale(&black).data, vec![0]);
        // round(0.299 * 255) = round(76.245) = 76
        let red = ColorImage::new(1, 1, vec![255, 0, 0]).unwrap();
        assert_eq!(to_grayscale(&red).data, vec![76]);
    }

    #[test]
    fn grayscale_idempotent_on_gray_content() {
        let g = GrayImage::new(2, 2, vec![10, 20, 30, 40]).unwrap();
        let mut rgb = Vec::new();
        for &v in &g.data {
            rgb.extend_from_slice(&[v, v, v]);
        }
        let c = ColorImage::new(2, 2, rgb).unwrap();
        assert_eq!(to_grayscale(&c), g);
    }

    #[test]
    fn threshold_fixed() {
        let img = GrayImage::filled(4, 4, 0);
        let b = threshold_binary(&img, Threshold::Fixed(128), false);
        assert_eq!(b.foreground_count(), 0);

        let img = GrayImage::new(2, 1, vec![0, 255]).unwrap();
        let b = threshold_binary(&img, Threshold::Fixed(128), true);
        assert!(b.get(0, 0));
        assert!(!b.get(1, 0));
    }

    #[test]
    fn threshold_partitions_exactly() {
        let img = GrayImage::new(4, 2, vec![0, 50, 100, 150, 200, 250, 128, 129]).unwrap();
        let b = threshold_binary(&img, Threshold::Fixed(128), false);
        let fg = b.foreground_count();
        let bg = b.data.iter().filter(|&&v| !v).count();
        assert_eq!(fg + bg, 8);
    }

    // Exhaustive Otsu oracle: scan all 256 thresholds, recompute
    // between-class variance from scratch.
    fn otsu_oracle(img: &GrayImage) -> u8 {
        let mut best = (0u8, -1.0f64);
        for t in 0..256usize {
            let (mut n0, mut s0, mut n1, mut s1) = (0.0, 0.0, 0.0, 0.0);
            for &p in &img.data {
                if (p as usize) <= t {
                    n0 += 1.0;
                    s0 += p as f64;
                } else {
                    n1 += 1.0;
                    s1 += p as f64;
                }
            }
            if n0 == 0.0 || n1 == 0.0 {
                continue;
            }
            let d = s0 / n0 - s1 / n1;
            let var = n0 * n1 * d * d;
            if var > best.1 {
                best = (t as u8, var);
            }
        }
        best.0
    }

    #[test]
    fn otsu_bimodal_matches_oracle() {
        let mut data = vec![10u8; 50];
        data.extend(vec![200u8; 50]);
        let img = GrayImage::new(10, 10, data).unwrap();
        let t = otsu_threshold(&img);
        assert_eq!(t, otsu_oracle(&img));
        assert!((10..200).contains(&t));
        let b = threshold_binary(&img, Threshold::Auto, false);
        // classes separated exactly
        for (i, &p) in img.data.iter().enumerate() {
            assert_eq!(b.data[i], p == 200);
        }
    }

    #[test]
    fn otsu_matches_oracle_on_random_images() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let data: Vec<u8> = (0..64).map(|_| rng.gen()).collect();
            let img = GrayImage::new(8, 8, data).unwrap();
            assert_eq!(otsu_threshold(&img), otsu_oracle(&img));
        }
    }

    #[test]
    fn pad_to_square_places_top_left() {
        let img = GrayImage::filled(100, 50, 9);
        let p = pad_to_square_gray(&img, 0);
        assert_eq!((p.width, p.height), (100, 100));
        for y in 0..100 {
            for x in 0..100 {
                assert_eq!(p.get(x, y), if y < 50 { 9 } else { 0 });
            }
        }
    }

    #[test]
    fn pad_square_identity_and_2x1() {
        let img = GrayImage::filled(3, 3, 5);
        assert_eq!(pad_to_square_gray(&img, 0), img);

        let img = GrayImage::new(2, 1, vec![7, 9]).unwrap();
        let p = pad_to_square_gray(&img, 0);
        assert_eq!(p.data, vec![7, 9, 0, 0]);
    }

    #[test]
    fn pad_then_crop_roundtrip() {
        let img = GrayImage::new(3, 2, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let p = pad_to_square_gray(&img, 255);
        let back = crop_gray(&p, &BBox::new(0, 0, 3, 2)).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = GrayImage::new(3, 2, vec![1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(resize_bilinear_gray(&img, 3, 2), img);

        let img = GrayImage::filled(5, 7, 42);
        let r = resize_bilinear_gray(&img, 13, 3);
        assert!(r.data.iter().all(|&v| v == 42));
    }

    #[test]
    fn resize_2x2_to_1x1_averages() {
        let img = GrayImage::new(2, 2, vec![0, 100, 200, 100]).unwrap();
        let r = resize_bilinear_gray(&img, 1, 1);
        assert_eq!(r.data, vec![100]);
    }

    #[test]
    fn resize_bounded_by_min_max() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let data: Vec<u8> = (0..48).map(|_| rng.gen()).collect();
        let img = GrayImage::new(8, 6, data).unwrap();
        let lo = *img.data.iter().min().unwrap();
        let hi = *img.data.iter().max().unwrap();
        for (tw, th) in [(3, 3), (16, 12), (1, 1), (20, 2)] {
            let r = resize_bilinear_gray(&img, tw, th);
            assert!(r.data.iter().all(|&v| v >= lo && v <= hi));
        }
    }

    #[test]
    fn crop_cases() {
        let img = GrayImage::new(3, 2, vec![1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(crop_gray(&img, &BBox::new(0, 0, 3, 2)).unwrap(), img);
        assert_eq!(crop_gray(&img, &BBox::new(0, 0, 1, 1)).unwrap().data, vec![1]);
        assert!(matches!(
            crop_gray(&img, &BBox::new(1, 0, 3, 2)),
            Err(ImageError::OutOfBounds { .. })
        ));
    }
}
