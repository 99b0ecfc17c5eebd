//! Grayscale heatmaps of grid CSVs.

use holoweb::export::read_grid_csv;
use holoweb::stability::THETA_MIN;
use holoweb::{Error, Result};
use image::{GrayImage, Luma};

/// Stencil values below this map to near black even when the whole grid is
/// quiet.
pub const BRIGHT_FLOOR: f64 = 10.0 * THETA_MIN;

/// Stencil magnitude per node, one pixel per node, real axis of `λ₁` to the
/// right and imaginary axis up. Values are scaled linearly and clamped at the
/// 99th percentile. For two parameters the slice through the middle of the
/// second parameter's axes is drawn.
pub fn render_grid(csv: &str) -> Result<GrayImage> {
    let table = read_grid_csv(csv)?;
    if table.coords[0].len() < 2 {
        return Err(Error::Parse("grid needs at least two axes".into()));
    }
    let extent = |a: usize| table.coords.iter().map(|c| c[a]).max().unwrap() + 1;
    let (w, h) = (extent(0), extent(1));
    let slice: Vec<usize> = (2..table.coords[0].len()).map(|a| extent(a) / 2).collect();
    let rows: Vec<usize> = (0..table.coords.len()).filter(|&i| table.coords[i][2..] == slice[..]).collect();
    let mut values: Vec<f64> = rows.iter().filter_map(|&i| table.stencil[i]).filter(|v| v.is_finite()).collect();
    values.sort_by(f64::total_cmp);
    let p99 = values.get(((values.len() as f64 * 0.99).ceil() as usize).saturating_sub(1)).copied().unwrap_or(0.0);
    let scale = p99.max(BRIGHT_FLOOR);
    let mut img = GrayImage::new(w as u32, h as u32);
    for i in rows {
        let v = table.stencil[i].filter(|v| v.is_finite()).unwrap_or(0.0);
        let level = (255.0 * (v / scale).clamp(0.0, 1.0)).round() as u8;
        let (x, y) = (table.coords[i][0], table.coords[i][1]);
        img.put_pixel(x as u32, (h - 1 - y) as u32, Luma([level]));
    }
    Ok(img)
}

pub fn png_bytes(img: &GrayImage) -> Result<Vec<u8>> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    Ok(buf.into_inner())
}
