//! Deterministic pixel operations: inverted gray conversion, HSV channel
//! splitting, grayscale morphology and contour extraction on the VS image.

use crate::error::{Error, Result};
use crate::model::{BoundingBox, Contour};
use std::path::Path;

/// 8-bit RGB raster image.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    /// Interleaved RGB, row-major.
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32) -> RgbImage {
        RgbImage {
            width,
            height,
            data: vec![0; (width * height * 3) as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> (u8, u8, u8) {
        let i = ((y * self.width + x) * 3) as usize;
        (self.data[i], self.data[i + 1], self.data[i + 2])
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, rgb: (u8, u8, u8)) {
        let i = ((y * self.width + x) * 3) as usize;
        self.data[i] = rgb.0;
        self.data[i + 1] = rgb.1;
        self.data[i + 2] = rgb.2;
    }

    pub fn load_png(path: &Path) -> Result<RgbImage> {
        let img = image::open(path)?.to_rgb8();
        Ok(RgbImage {
            width: img.width(),
            height: img.height(),
            data: img.into_raw(),
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let img: image::RgbImage =
            image::ImageBuffer::from_raw(self.width, self.height, self.data.clone())
                .expect("buffer size matches dimensions");
        img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }
}

/// Single-channel 8-bit image.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32) -> GrayImage {
        GrayImage {
            width,
            height,
            data: vec![0; (width * height) as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, v: u8) {
        self.data[(y * self.width + x) as usize] = v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelTag {
    Saturation,
    Value,
    Vs,
}

/// Single scalar channel extracted from a color image.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
    pub tag: ChannelTag,
}

impl ChannelImage {
    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[(y * self.width + x) as usize]
    }
}

/// Inverted standard luma: Y = round(255 - (0.299 R + 0.587 G + 0.114 B)).
///
/// Chalky (opaque) parts come out bright, translucent body dark.
pub fn to_inverted_gray(img: &RgbImage) -> GrayImage {
    let mut out = GrayImage::new(img.width, img.height);
    for (i, px) in img.data.chunks_exact(3).enumerate() {
        let luma = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
        out.data[i] = (255.0 - luma).round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// Saturation and value channels of the HSV conversion, scaled to 0-255.
pub fn split_hsv(img: &RgbImage) -> (ChannelImage, ChannelImage) {
    let n = (img.width * img.height) as usize;
    let mut s = vec![0u8; n];
    let mut v = vec![0u8; n];
    for (i, px) in img.data.chunks_exact(3).enumerate() {
        let max = px[0].max(px[1]).max(px[2]);
        let min = px[0].min(px[1]).min(px[2]);
        v[i] = max;
        s[i] = if max == 0 {
            0
        } else {
            (255.0 * (max - min) as f64 / max as f64).round() as u8
        };
    }
    (
        ChannelImage {
            width: img.width,
            height: img.height,
            data: s,
            tag: ChannelTag::Saturation,
        },
        ChannelImage {
            width: img.width,
            height: img.height,
            data: v,
            tag: ChannelTag::Value,
        },
    )
}

/// Hue of one RGB pixel in degrees [0, 360); 0 when the pixel is gray.
pub fn pixel_hue(r: u8, g: u8, b: u8) -> f64 {
    let max = r.max(g).max(b) as f64;
    let min = r.min(g).min(b) as f64;
    let d = max - min;
    if d == 0.0 {
        return 0.0;
    }
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let h = if max == r {
        60.0 * (g - b) / d
    } else if max == g {
        60.0 * (2.0 + (b - r) / d)
    } else {
        60.0 * (4.0 + (r - g) / d)
    };
    if h < 0.0 {
        h + 360.0
    } else {
        h
    }
}

/// Min/max filter over a square window, edge pixels replicated.
fn morph_filter(data: &[u8], width: u32, height: u32, radius: u32, take_min: bool) -> Vec<u8> {
    assert!(radius >= 1);
    let (w, h, r) = (width as i64, height as i64, radius as i64);
    let mut out = vec![0u8; data.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = if take_min { u8::MAX } else { u8::MIN };
            for dy in -r..=r {
                let sy = (y + dy).clamp(0, h - 1);
                for dx in -r..=r {
                    let sx = (x + dx).clamp(0, w - 1);
                    let v = data[(sy * w + sx) as usize];
                    acc = if take_min { acc.min(v) } else { acc.max(v) };
                }
            }
            out[(y * w + x) as usize] = acc;
        }
    }
    out
}

macro_rules! impl_morph {
    ($ty:ty) => {
        impl $ty {
            /// Grayscale erosion with a square element of the given radius.
            pub fn erode(&self, radius: u32) -> Self {
                Self {
                    data: morph_filter(&self.data, self.width, self.height, radius, true),
                    ..self.clone()
                }
            }

            /// Grayscale dilation, dual of [`Self::erode`].
            pub fn dilate(&self, radius: u32) -> Self {
                Self {
                    data: morph_filter(&self.data, self.width, self.height, radius, false),
                    ..self.clone()
                }
            }

            /// Opening: erosion followed by dilation.
            pub fn morph_open(&self, radius: u32) -> Self {
                self.erode(radius).dilate(radius)
            }
        }
    };
}

impl_morph!(GrayImage);
impl_morph!(ChannelImage);

/// Per-pixel max of the eroded saturation channel and the value channel.
pub fn vs_image(s: &ChannelImage, v: &ChannelImage, kernel_radius: u32) -> Result<ChannelImage> {
    if s.width != v.width || s.height != v.height {
        return Err(Error::DimensionMismatch(s.width, s.height, v.width, v.height));
    }
    let eroded = s.erode(kernel_radius);
    let data = eroded
        .data
        .iter()
        .zip(&v.data)
        .map(|(&a, &b)| a.max(b))
        .collect();
    Ok(ChannelImage {
        width: s.width,
        height: s.height,
        data,
        tag: ChannelTag::Vs,
    })
}

/// Binarize, open, and trace the outer boundary of every 8-connected
/// foreground component; components smaller than `min_area` are dropped.
///
/// Interior holes (e.g. lesion artifacts) are filled, so a contour's area
/// is the full region enclosed by its outer boundary.
pub fn extract_contours(
    img: &ChannelImage,
    binarize_threshold: u8,
    kernel_radius: u32,
    min_area: u64,
) -> Vec<Contour> {
    let (w, h) = (img.width as usize, img.height as usize);
    let mut binary = vec![0u8; w * h];
    for (i, &v) in img.data.iter().enumerate() {
        binary[i] = if v > binarize_threshold { 255 } else { 0 };
    }
    let opened = morph_filter(
        &morph_filter(&binary, img.width, img.height, kernel_radius, true),
        img.width,
        img.height,
        kernel_radius,
        false,
    );

    let mut labels = vec![0u32; w * h];
    let mut contours = Vec::new();
    let mut next_label = 1u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if opened[start] == 0 || labels[start] != 0 {
            continue;
        }
        // flood this 8-connected component
        let label = next_label;
        next_label += 1;
        labels[start] = label;
        stack.push(start);
        let mut pixels: Vec<(u32, u32)> = Vec::new();
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            pixels.push((x as u32, y as u32));
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if opened[j] != 0 && labels[j] == 0 {
                        labels[j] = label;
                        stack.push(j);
                    }
                }
            }
        }
        if let Some(c) = contour_from_component(&pixels, w, &labels, label) {
            if c.area >= min_area {
                contours.push(c);
            }
        }
    }
    // deterministic order: top-left of bbox
    contours.sort_by(|a, b| {
        a.bbox
            .sort_key()
            .cmp(&b.bbox.sort_key())
            .then_with(|| a.area.cmp(&b.area))
    });
    contours
}

/// Builds a [`Contour`] from one labeled component: fills interior holes,
/// traces the outer boundary and computes mask statistics.
fn contour_from_component(
    pixels: &[(u32, u32)],
    img_w: usize,
    labels: &[u32],
    label: u32,
) -> Option<Contour> {
    let min_x = pixels.iter().map(|p| p.0).min()? as usize;
    let max_x = pixels.iter().map(|p| p.0).max()? as usize;
    let min_y = pixels.iter().map(|p| p.1).min()? as usize;
    let max_y = pixels.iter().map(|p| p.1).max()? as usize;
    let (bw, bh) = (max_x - min_x + 1, max_y - min_y + 1);

    // local mask; fill holes by flood-filling the complement from the border
    let mut mask = vec![false; bw * bh];
    for &(x, y) in pixels {
        mask[(y as usize - min_y) * bw + (x as usize - min_x)] = true;
    }
    let mut outside = vec![false; bw * bh];
    let mut stack = Vec::new();
    for by in 0..bh {
        for bx in 0..bw {
            if (bx == 0 || by == 0 || bx == bw - 1 || by == bh - 1) && !mask[by * bw + bx] {
                if !outside[by * bw + bx] {
                    outside[by * bw + bx] = true;
                    stack.push((bx, by));
                }
            }
        }
    }
    while let Some((bx, by)) = stack.pop() {
        let neighbors = [
            (bx.wrapping_sub(1), by),
            (bx + 1, by),
            (bx, by.wrapping_sub(1)),
            (bx, by + 1),
        ];
        for (nx, ny) in neighbors {
            if nx < bw && ny < bh && !mask[ny * bw + nx] && !outside[ny * bw + nx] {
                outside[ny * bw + nx] = true;
                stack.push((nx, ny));
            }
        }
    }
    let filled: Vec<bool> = mask
        .iter()
        .zip(&outside)
        .map(|(&m, &o)| m || !o)
        .collect();
    // only keep fill that belongs to this component's holes, not to other blobs
    let filled: Vec<bool> = filled
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            if !f {
                return false;
            }
            let (bx, by) = (i % bw, i / bw);
            let gi = (by + min_y) * img_w + (bx + min_x);
            let l = labels[gi];
            l == label || l == 0
        })
        .collect();

    build_contour_from_mask(&filled, bw, bh, min_x as u32, min_y as u32)
}

/// Builds a contour from a hole-free local boolean mask at the given offset.
pub(crate) fn build_contour_from_mask(
    filled: &[bool],
    bw: usize,
    bh: usize,
    off_x: u32,
    off_y: u32,
) -> Option<Contour> {
    let mut runs = Vec::new();
    let mut area = 0u64;
    let (mut sx, mut sy) = (0.0f64, 0.0f64);
    let mut tight: Option<(usize, usize, usize, usize)> = None;
    for by in 0..bh {
        let mut bx = 0;
        while bx < bw {
            if filled[by * bw + bx] {
                let start = bx;
                while bx < bw && filled[by * bw + bx] {
                    bx += 1;
                }
                let end = bx - 1;
                runs.push((off_y + by as u32, off_x + start as u32, off_x + end as u32));
                let len = (end - start + 1) as u64;
                area += len;
                sy += by as f64 * len as f64;
                sx += (start..=end).map(|x| x as f64).sum::<f64>();
                tight = Some(match tight {
                    None => (start, by, end, by),
                    Some((x0, y0, x1, y1)) => (x0.min(start), y0.min(by), x1.max(end), y1.max(by)),
                });
            } else {
                bx += 1;
            }
        }
    }
    let (tx0, ty0, tx1, ty1) = tight?;
    let n = area as f64;
    let (cx, cy) = (sx / n + off_x as f64, sy / n + off_y as f64);

    // second central moments for the major-axis length
    let (lcx, lcy) = (cx - off_x as f64, cy - off_y as f64);
    let (mut mu20, mut mu02, mut mu11) = (0.0f64, 0.0f64, 0.0f64);
    for &(y, x0, x1) in &runs {
        let dy = (y - off_y) as f64 - lcy;
        for x in x0..=x1 {
            let dx = (x - off_x) as f64 - lcx;
            mu20 += dx * dx;
            mu02 += dy * dy;
            mu11 += dx * dy;
        }
    }
    mu20 /= n;
    mu02 /= n;
    mu11 /= n;
    let common = ((mu20 - mu02).powi(2) + 4.0 * mu11 * mu11).sqrt();
    let lambda_max = (mu20 + mu02 + common) / 2.0;
    let major_axis = 4.0 * lambda_max.max(0.0).sqrt();

    let boundary = trace_boundary(filled, bw, bh, off_x, off_y);
    Some(Contour {
        boundary,
        runs,
        area,
        centroid: (cx, cy),
        major_axis,
        bbox: BoundingBox::new(
            (tx0 as u32 + off_x) as f64,
            (ty0 as u32 + off_y) as f64,
            (tx1 - tx0 + 1) as f64,
            (ty1 - ty0 + 1) as f64,
        ),
    })
}

/// Moore-neighbor boundary tracing, clockwise, with Jacob's stopping rule.
fn trace_boundary(mask: &[bool], bw: usize, bh: usize, off_x: u32, off_y: u32) -> Vec<(u32, u32)> {
    let at = |x: i64, y: i64| -> bool {
        x >= 0 && y >= 0 && (x as usize) < bw && (y as usize) < bh && mask[y as usize * bw + x as usize]
    };
    // topmost-leftmost foreground pixel
    let mut start = None;
    'scan: for y in 0..bh {
        for x in 0..bw {
            if mask[y * bw + x] {
                start = Some((x as i64, y as i64));
                break 'scan;
            }
        }
    }
    let Some(start) = start else {
        return Vec::new();
    };
    // clockwise Moore neighborhood starting west
    const NBR: [(i64, i64); 8] = [
        (-1, 0),
        (-1, -1),
        (0, -1),
        (1, -1),
        (1, 0),
        (1, 1),
        (0, 1),
        (-1, 1),
    ];
    let mut boundary = vec![(start.0 as u32 + off_x, start.1 as u32 + off_y)];
    if mask.iter().filter(|&&m| m).count() == 1 {
        return boundary;
    }
    let mut current = start;
    let mut backtrack_dir = 0usize; // came from the west
    let mut first_move: Option<(i64, i64, usize)> = None;
    loop {
        let mut found = None;
        for k in 1..=8 {
            let dir = (backtrack_dir + k) % 8;
            let (dx, dy) = NBR[dir];
            let (nx, ny) = (current.0 + dx, current.1 + dy);
            if at(nx, ny) {
                found = Some((nx, ny, dir));
                break;
            }
        }
        let Some((nx, ny, dir)) = found else {
            break; // isolated pixel
        };
        if (nx, ny) == start {
            match first_move {
                Some((fx, fy, fdir)) if current == (fx, fy) || dir == fdir => break,
                Some(_) => {}
                None => {}
            }
        }
        if first_move.is_none() {
            first_move = Some((nx, ny, dir));
        } else if (nx, ny) == start && boundary.len() > 2 {
            break;
        }
        boundary.push((nx as u32 + off_x, ny as u32 + off_y));
        current = (nx, ny);
        // new backtrack: opposite of arrival, biased to re-scan from behind
        backtrack_dir = (dir + 5) % 8;
        if boundary.len() > 4 * bw * bh {
            break; // safety bound
        }
    }
    boundary
}

/// Pixel count of the filled region (interior + boundary).
pub fn contour_area(c: &Contour) -> u64 {
    c.area
}

/// Major-axis length of the moment-fit ellipse of the filled mask.
pub fn major_axis_length(c: &Contour) -> f64 {
    c.major_axis
}
