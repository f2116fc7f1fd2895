//! PNG / binary PPM ingestion, bilinear resizing and dataset export.

use std::path::Path;

use image::{ColorType, ImageFormat, Rgb, RgbImage};

use crate::data::manifest::{DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::par;
use crate::routing::StereoSample;
use crate::tensor::{Shape, Tensor};

/// Read an RGB image as a `(1, h, w, 3)` tensor with values in `[0, 1]`.
pub fn read_rgb(path: &Path) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| Error::ingestion(path, e))?;
    match img.color() {
        ColorType::Rgb8 | ColorType::Rgb16 | ColorType::Rgb32F => {}
        other => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("expected a 3-channel RGB image, found {other:?}"),
            })
        }
    }
    let rgb = img.to_rgb32f();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(|v| f64::from(v).clamp(0.0, 1.0)).collect();
    Tensor::from_vec(Shape::image(h as usize, w as usize, 3)?, data)
}

fn to_rgb8(t: &Tensor) -> Result<RgbImage> {
    let s = t.shape();
    if s.batch != 1 || s.channels != 3 {
        return Err(Error::Shape(format!("cannot save {s} as an RGB image")));
    }
    let mut img = RgbImage::new(s.width as u32, s.height as u32);
    for y in 0..s.height {
        for x in 0..s.width {
            let px = |c| (t.at(0, y, x, c).clamp(0.0, 1.0) * 255.0).round() as u8;
            img.put_pixel(x as u32, y as u32, Rgb([px(0), px(1), px(2)]));
        }
    }
    Ok(img)
}

/// Save as PNG, or binary PPM when the extension is `.ppm`.
pub fn write_rgb(path: &Path, t: &Tensor) -> Result<()> {
    let img = to_rgb8(t)?;
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("ppm") => ImageFormat::Pnm,
        _ => ImageFormat::Png,
    };
    img.save_with_format(path, format).map_err(|e| Error::output(path, e))
}

/// Bilinear resampling with corner alignment: output corners sample the
/// input corners exactly, so a same-size resize is the identity.
pub fn resize_bilinear(t: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let s = t.shape();
    let out = Shape::new(s.batch, height, width, s.channels)?;
    if (height, width) == (s.height, s.width) {
        return Ok(t.clone());
    }
    let coord = |i: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        if n_out == 1 || n_in == 1 {
            return (0, 0, 0.0);
        }
        let pos = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let lo = (pos.floor() as usize).min(n_in - 1);
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, pos - lo as f64)
    };
    let mut data = Vec::with_capacity(out.len());
    for b in 0..s.batch {
        for y in 0..height {
            let (y0, y1, fy) = coord(y, height, s.height);
            for x in 0..width {
                let (x0, x1, fx) = coord(x, width, s.width);
                for c in 0..s.channels {
                    let top = t.at(b, y0, x0, c) * (1.0 - fx) + t.at(b, y0, x1, c) * fx;
                    let bottom = t.at(b, y1, x0, c) * (1.0 - fx) + t.at(b, y1, x1, c) * fx;
                    data.push(top * (1.0 - fy) + bottom * fy);
                }
            }
        }
    }
    Tensor::from_vec(out, data)
}

/// Read every pair of a manifest and resize both eyes to `height × width`.
pub fn load_and_resize(manifest: &DatasetManifest, height: usize, width: usize) -> Result<Vec<StereoSample>> {
    let loaded = par::map(&manifest.entries, |e: &ManifestEntry| -> Result<StereoSample> {
        let left = resize_bilinear(&read_rgb(&manifest.resolve(&e.left))?, height, width)?;
        let right = resize_bilinear(&read_rgb(&manifest.resolve(&e.right))?, height, width)?;
        let mut s = StereoSample::new(e.pair_id.clone(), left, right, e.label)?;
        if let Some(src) = &e.source {
            s.source = src.clone();
        }
        Ok(s)
    });
    loaded.into_iter().collect()
}

/// Write samples as `images/<pair>_{left,right}.<ext>` under `dir` plus a
/// `manifest.toml` describing them. Returns the manifest.
pub fn write_dataset(samples: &[StereoSample], classes: &[String], dir: &Path, ext: &str) -> Result<DatasetManifest> {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::output(&images, e))?;
    let mut manifest = DatasetManifest::new(classes.to_vec(), dir);
    for s in samples {
        let safe: String = s
            .pair_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        let left = Path::new("images").join(format!("{safe}_left.{ext}"));
        let right = Path::new("images").join(format!("{safe}_right.{ext}"));
        write_rgb(&dir.join(&left), &s.left_eye)?;
        write_rgb(&dir.join(&right), &s.right_eye)?;
        manifest.entries.push(ManifestEntry {
            pair_id: s.pair_id.clone(),
            left,
            right,
            label: s.label,
            source: (s.source != s.pair_id).then(|| s.source.clone()),
        });
    }
    manifest.save(&dir.join("manifest.toml"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn same_size_resize_is_identity() {
        let t = Tensor::gaussian(Shape::new(1, 5, 7, 3).unwrap(), 1.0, &mut Rng::new(1)).unwrap();
        assert_eq!(resize_bilinear(&t, 5, 7).unwrap(), t);
    }

    #[test]
    fn upsized_checkerboard_keeps_corners() {
        let t = Tensor::from_vec(Shape::new(1, 2, 2, 1).unwrap(), vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let up = resize_bilinear(&t, 4, 4).unwrap();
        assert_eq!(up.at(0, 0, 0, 0), 0.0);
        assert_eq!(up.at(0, 0, 3, 0), 1.0);
        assert_eq!(up.at(0, 3, 0, 0), 1.0);
        assert_eq!(up.at(0, 3, 3, 0), 0.0);
        assert!(up.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn png_and_ppm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let vals: Vec<f64> = (0..4 * 3 * 3).map(|i| (i * 7 % 256) as f64 / 255.0).collect();
        let t = Tensor::from_vec(Shape::new(1, 4, 3, 3).unwrap(), vals).unwrap();
        for name in ["x.png", "x.ppm"] {
            let p = dir.path().join(name);
            write_rgb(&p, &t).unwrap();
            let back = read_rgb(&p).unwrap();
            for (a, b) in back.data().iter().zip(t.data()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn grayscale_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.png");
        image::GrayImage::new(3, 3).save(&p).unwrap();
        assert!(matches!(read_rgb(&p), Err(Error::Format { .. })));
        assert!(matches!(read_rgb(&dir.path().join("nope.png")), Err(Error::Ingestion { .. })));
    }
}
