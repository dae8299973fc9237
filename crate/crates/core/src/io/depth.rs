use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Pinhole camera model. Depth samples are multiplied by `depth_scale` to
/// obtain meters (or scene units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinholeIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub depth_scale: f64,
}

impl PinholeIntrinsics {
    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.depth_scale > 0.0
            && self.cx.is_finite()
            && self.cy.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid intrinsics {self:?}")))
        }
    }

    /// Direction `((u − cx)/fx, (v − cy)/fy, 1)` of the ray through pixel `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Row-major 16-bit depth samples; 0 marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
}

impl DepthImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        DepthImage {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u16 {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, d: u16) {
        self.data[v * self.width + u] = d;
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&d| d > 0).count()
    }
}

/// Row-major per-pixel selection mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn full(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    /// Fraction of selected pixels that also carry a valid depth sample.
    pub fn visibility_ratio(&self, img: &DepthImage) -> f64 {
        let selected = self.data.iter().filter(|&&m| m).count();
        if selected == 0 {
            return 0.0;
        }
        let visible = self
            .data
            .iter()
            .zip(&img.data)
            .filter(|(&m, &d)| m && d > 0)
            .count();
        visible as f64 / selected as f64
    }
}

/// Back-projects every valid (and masked-in) pixel:
/// `z = d·depth_scale, x = (u − cx)·z/fx, y = (v − cy)·z/fy`.
pub fn depth_to_pointcloud(
    img: &DepthImage,
    k: &PinholeIntrinsics,
    mask: Option<&Mask>,
) -> Result<PointCloud> {
    if img.data.len() != img.width * img.height {
        return Err(Error::DimensionMismatch(format!(
            "depth buffer has {} samples for {}x{}",
            img.data.len(),
            img.width,
            img.height
        )));
    }
    if let Some(m) = mask {
        if m.width != img.width || m.height != img.height {
            return Err(Error::DimensionMismatch(format!(
                "mask {}x{} vs depth {}x{}",
                m.width, m.height, img.width, img.height
            )));
        }
    }
    let mut points = Vec::new();
    for v in 0..img.height {
        for u in 0..img.width {
            let idx = v * img.width + u;
            if mask.is_some_and(|m| !m.data[idx]) {
                continue;
            }
            let d = img.data[idx];
            if d == 0 {
                continue;
            }
            let z = d as f64 * k.depth_scale;
            points.push(k.ray(u as f64, v as f64) * z);
        }
    }
    Ok(PointCloud::new(points))
}

fn png_err(e: impl std::fmt::Display) -> Error {
    Error::Png(e.to_string())
}

fn write_gray_png(path: &Path, width: usize, height: usize, depth: png::BitDepth, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(depth);
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(bytes).map_err(png_err)?;
    writer.finish().map_err(png_err)
}

fn read_gray_png(path: &Path) -> Result<(usize, usize, png::BitDepth, Vec<u8>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder.read_info().map_err(png_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Png("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::UnsupportedFormat(format!(
            "{}: expected a grayscale PNG, found {:?}",
            path.display(),
            info.color_type
        )));
    }
    buf.truncate(info.buffer_size());
    Ok((info.width as usize, info.height as usize, info.bit_depth, buf))
}

pub fn write_depth_png(img: &DepthImage, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = img.data.iter().flat_map(|d| d.to_be_bytes()).collect();
    write_gray_png(path.as_ref(), img.width, img.height, png::BitDepth::Sixteen, &bytes)
}

pub fn read_depth_png(path: impl AsRef<Path>) -> Result<DepthImage> {
    let path = path.as_ref();
    let (width, height, depth, buf) = read_gray_png(path)?;
    if depth != png::BitDepth::Sixteen {
        return Err(Error::UnsupportedFormat(format!(
            "{}: depth PNG must be 16-bit, found {depth:?}",
            path.display()
        )));
    }
    let data = buf.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok(DepthImage { width, height, data })
}

/// 8-bit grayscale PNG, nonzero pixels selected.
pub fn write_mask_png(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = mask.data.iter().map(|&m| if m { 255 } else { 0 }).collect();
    write_gray_png(path.as_ref(), mask.width, mask.height, png::BitDepth::Eight, &bytes)
}

pub fn read_mask_png(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let (width, height, depth, buf) = read_gray_png(path)?;
    let data = match depth {
        png::BitDepth::Eight => buf.iter().map(|&b| b != 0).collect(),
        png::BitDepth::Sixteen => buf.chunks_exact(2).map(|c| c[0] != 0 || c[1] != 0).collect(),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: mask PNG bit depth {other:?}",
                path.display()
            )))
        }
    };
    Ok(Mask { width, height, data })
}

pub fn write_intrinsics(k: &PinholeIntrinsics, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(k)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_intrinsics(path: impl AsRef<Path>) -> Result<PinholeIntrinsics> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let k: PinholeIntrinsics = serde_json::from_str(&text)?;
    k.validate()?;
    Ok(k)
}
