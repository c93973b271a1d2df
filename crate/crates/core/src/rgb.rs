//! Pseudo-RGB rendering of spectral frames and grayscale previews.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::cube::SpectralCube;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Band centers (nm) for the R, G and B planes.
pub const RGB_CENTERS_NM: [f64; 3] = [610.0, 550.0, 465.0];
/// Gaussian width (nm) of each band.
pub const RGB_WIDTH_NM: f64 = 25.0;

fn band_weights(wavelengths: &[f64], center: f64) -> Vec<f64> {
    let raw: Vec<f64> = wavelengths
        .iter()
        .map(|&l| (-(l - center).powi(2) / (2.0 * RGB_WIDTH_NM * RGB_WIDTH_NM)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|w| w / total).collect()
    } else {
        // all bands far from the center: fall back to the nearest channel
        let nearest = wavelengths
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - center).abs().total_cmp(&(b.1 - center).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        (0..wavelengths.len())
            .map(|i| if i == nearest { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Min-max scales a plane to 8 bits. A flat plane keeps its absolute level.
fn quantize_plane(plane: &[f64]) -> Vec<u8> {
    let lo = plane.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = plane.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        plane
            .iter()
            .map(|&v| ((v - lo) / (hi - lo) * 255.0).round() as u8)
            .collect()
    } else {
        plane
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}

pub fn render_pseudo_rgb<F: Scalar>(cube: &SpectralCube<F>, frame: usize) -> Result<RgbImage> {
    let (t, h, w, c) = cube.dims();
    if frame >= t {
        return Err(Error::InvalidArgument(format!(
            "frame {frame} out of range for {t} frames"
        )));
    }
    if c < 3 {
        return Err(Error::InvalidArgument(format!(
            "pseudo-RGB needs at least 3 bands, cube has {c}"
        )));
    }
    let data = cube.frame(frame);
    let planes: Vec<Vec<u8>> = RGB_CENTERS_NM
        .iter()
        .map(|&center| {
            let weights = band_weights(cube.wavelengths(), center);
            let plane: Vec<f64> = data
                .chunks_exact(c)
                .map(|px| px.iter().zip(&weights).map(|(v, w)| v.as_f64() * w).sum())
                .collect();
            quantize_plane(&plane)
        })
        .collect();
    let mut img = RgbImage::new(w as u32, h as u32);
    for (i, px) in img.pixels_mut().enumerate() {
        *px = Rgb([planes[0][i], planes[1][i], planes[2][i]]);
    }
    Ok(img)
}

pub fn export_pseudo_rgb<F: Scalar>(
    cube: &SpectralCube<F>,
    frame: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    render_pseudo_rgb(cube, frame)?
        .save(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Min-max scaled grayscale rendering of a row-major `height x width` plane.
pub fn render_gray<F: Scalar>(plane: &[F], height: usize, width: usize) -> GrayImage {
    let values: Vec<f64> = plane.iter().map(|v| v.as_f64()).collect();
    let q = quantize_plane(&values);
    let mut img = GrayImage::new(width as u32, height as u32);
    for (i, px) in img.pixels_mut().enumerate() {
        *px = Luma([q[i]]);
    }
    img
}

pub fn save_image(img: &image::DynamicImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}
