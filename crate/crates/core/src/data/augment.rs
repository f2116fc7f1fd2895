//! Stereo-consistent augmentation.
//!
//! Every transform draws its random parameters once per pair and applies them
//! to both eyes, so the pair stays geometrically consistent. The noise field
//! is also shared between the eyes.

use serde::{Deserialize, Serialize};

use crate::data::image_io::resize_bilinear;
use crate::error::{Error, Result};
use crate::par;
use crate::rng::{tag_of, Rng};
use crate::routing::StereoSample;
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub horizontal_reflect: bool,
    pub vertical_reflect: bool,
    /// Shrink by `rescale_factors[0]` then restore the size.
    pub down_up: bool,
    /// Enlarge by `rescale_factors[1]` then restore the size.
    pub up_down: bool,
    pub rescale_factors: [f64; 2],
    pub noise: bool,
    pub noise_stddev: f64,
    pub rotation: bool,
    pub rotation_max_degrees: f64,
    pub translation: bool,
    pub translation_max_pixels: usize,
    /// Mirroring a stereo rig exchanges the cameras; when set, the
    /// horizontal reflection also swaps the eye roles.
    pub reflect_swaps_eyes: bool,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            horizontal_reflect: true,
            vertical_reflect: true,
            down_up: true,
            up_down: true,
            rescale_factors: [0.5, 2.0],
            noise: true,
            noise_stddev: 0.02,
            rotation: true,
            rotation_max_degrees: 3.0,
            translation: true,
            translation_max_pixels: 4,
            reflect_swaps_eyes: false,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// Every transform disabled.
    pub fn none() -> Self {
        Self {
            horizontal_reflect: false,
            vertical_reflect: false,
            down_up: false,
            up_down: false,
            noise: false,
            rotation: false,
            translation: false,
            ..Self::default()
        }
    }

    pub fn enabled_count(&self) -> usize {
        [
            self.horizontal_reflect,
            self.vertical_reflect,
            self.down_up,
            self.up_down,
            self.noise,
            self.rotation,
            self.translation,
        ]
        .iter()
        .filter(|&&on| on)
        .count()
    }

    /// Magnitude limits for an image of the given width.
    pub fn validate(&self, width: usize) -> Result<()> {
        let [down, up] = self.rescale_factors;
        if !(down > 0.0 && down < 1.0) {
            return Err(Error::Config(format!("down-up factor must be in (0, 1), got {down}")));
        }
        if !(up > 1.0 && up.is_finite()) {
            return Err(Error::Config(format!("up-down factor must be > 1, got {up}")));
        }
        if !(self.noise_stddev >= 0.0 && self.noise_stddev.is_finite()) {
            return Err(Error::Config(format!("noise_stddev must be >= 0, got {}", self.noise_stddev)));
        }
        if !(0.0..10.0).contains(&self.rotation_max_degrees) {
            return Err(Error::Config(format!(
                "rotation_max_degrees must be in [0, 10), got {}",
                self.rotation_max_degrees
            )));
        }
        if self.translation && 10 * self.translation_max_pixels >= width {
            return Err(Error::Config(format!(
                "translation of {} px is not below 10% of width {width}",
                self.translation_max_pixels
            )));
        }
        Ok(())
    }
}

pub fn reflect_horizontal(t: &Tensor) -> Result<Tensor> {
    let s = t.shape();
    let mut data = Vec::with_capacity(s.len());
    for b in 0..s.batch {
        for y in 0..s.height {
            for x in (0..s.width).rev() {
                let o = t.offset(b, y, x, 0);
                data.extend_from_slice(&t.data()[o..o + s.channels]);
            }
        }
    }
    Tensor::from_vec(s, data)
}

pub fn reflect_vertical(t: &Tensor) -> Result<Tensor> {
    let s = t.shape();
    let row = s.width * s.channels;
    let mut data = Vec::with_capacity(s.len());
    for b in 0..s.batch {
        for y in (0..s.height).rev() {
            let o = t.offset(b, y, 0, 0);
            data.extend_from_slice(&t.data()[o..o + row]);
        }
    }
    Tensor::from_vec(s, data)
}

fn rescale_round_trip(t: &Tensor, factor: f64) -> Result<Tensor> {
    let s = t.shape();
    let h = ((s.height as f64 * factor).round() as usize).max(1);
    let w = ((s.width as f64 * factor).round() as usize).max(1);
    resize_bilinear(&resize_bilinear(t, h, w)?, s.height, s.width)
}

/// Shift by `(dx, dy)` pixels, zero-filling uncovered pixels.
pub fn translate(t: &Tensor, dx: isize, dy: isize) -> Result<Tensor> {
    let s = t.shape();
    let mut out = vec![0.0; s.len()];
    for b in 0..s.batch {
        for y in 0..s.height {
            let sy = y as isize - dy;
            if sy < 0 || sy >= s.height as isize {
                continue;
            }
            for x in 0..s.width {
                let sx = x as isize - dx;
                if sx < 0 || sx >= s.width as isize {
                    continue;
                }
                let src = t.offset(b, sy as usize, sx as usize, 0);
                let dst = t.offset(b, y, x, 0);
                out[dst..dst + s.channels].copy_from_slice(&t.data()[src..src + s.channels]);
            }
        }
    }
    Tensor::from_vec(s, out)
}

/// Rotate about the image centre with bilinear sampling; samples falling
/// outside the source read as zero.
pub fn rotate(t: &Tensor, degrees: f64) -> Result<Tensor> {
    if degrees == 0.0 {
        return Ok(t.clone());
    }
    let s = t.shape();
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cy = (s.height as f64 - 1.0) / 2.0;
    let cx = (s.width as f64 - 1.0) / 2.0;
    let sample = |b: usize, y: isize, x: isize, c: usize| -> f64 {
        if y < 0 || x < 0 || y >= s.height as isize || x >= s.width as isize {
            0.0
        } else {
            t.at(b, y as usize, x as usize, c)
        }
    };
    let mut data = Vec::with_capacity(s.len());
    for b in 0..s.batch {
        for y in 0..s.height {
            for x in 0..s.width {
                let (ry, rx) = (y as f64 - cy, x as f64 - cx);
                // inverse map: source position that lands on (y, x)
                let sy = cos * ry - sin * rx + cy;
                let sx = sin * ry + cos * rx + cx;
                let (y0, x0) = (sy.floor(), sx.floor());
                let (fy, fx) = (sy - y0, sx - x0);
                let (y0, x0) = (y0 as isize, x0 as isize);
                for c in 0..s.channels {
                    let top = sample(b, y0, x0, c) * (1.0 - fx) + sample(b, y0, x0 + 1, c) * fx;
                    let bottom = sample(b, y0 + 1, x0, c) * (1.0 - fx) + sample(b, y0 + 1, x0 + 1, c) * fx;
                    data.push(top * (1.0 - fy) + bottom * fy);
                }
            }
        }
    }
    Tensor::from_vec(s, data)
}

fn add_noise(t: &Tensor, noise: &[f64]) -> Result<Tensor> {
    let data = t.data().iter().zip(noise).map(|(v, n)| (v + n).clamp(0.0, 1.0)).collect();
    Tensor::from_vec(t.shape(), data)
}

/// The original pair followed by one variant per enabled transform, in the
/// order: horizontal reflection, vertical reflection, down-up rescale,
/// up-down rescale, noise, rotation, translation. Variant ids are
/// `<pair_id>+<transform>` and keep the original's `source`.
pub fn augment(sample: &StereoSample, cfg: &AugmentConfig) -> Result<Vec<StereoSample>> {
    let shape: Shape = sample.left_eye.shape();
    cfg.validate(shape.width)?;
    let mut rng = Rng::derived(cfg.seed, tag_of(&sample.pair_id));
    let mut out = vec![sample.clone()];
    let mut push = |name: &str, left: Tensor, right: Tensor| {
        out.push(StereoSample {
            pair_id: format!("{}+{name}", sample.pair_id),
            source: sample.source.clone(),
            left_eye: left,
            right_eye: right,
            label: sample.label,
        });
    };
    let both = |f: &dyn Fn(&Tensor) -> Result<Tensor>| -> Result<(Tensor, Tensor)> {
        Ok((f(&sample.left_eye)?, f(&sample.right_eye)?))
    };

    if cfg.horizontal_reflect {
        let (l, r) = both(&reflect_horizontal)?;
        if cfg.reflect_swaps_eyes {
            push("hflip", r, l);
        } else {
            push("hflip", l, r);
        }
    }
    if cfg.vertical_reflect {
        let (l, r) = both(&reflect_vertical)?;
        push("vflip", l, r);
    }
    if cfg.down_up {
        let f = cfg.rescale_factors[0];
        let (l, r) = both(&|t| rescale_round_trip(t, f))?;
        push("downup", l, r);
    }
    if cfg.up_down {
        let f = cfg.rescale_factors[1];
        let (l, r) = both(&|t| rescale_round_trip(t, f))?;
        push("updown", l, r);
    }
    if cfg.noise {
        let field: Vec<f64> = (0..shape.len()).map(|_| cfg.noise_stddev * rng.normal()).collect();
        let (l, r) = both(&|t| add_noise(t, &field))?;
        push("noise", l, r);
    }
    if cfg.rotation {
        let m = cfg.rotation_max_degrees;
        let angle = rng.uniform_in(-m, m);
        let (l, r) = both(&|t| rotate(t, angle))?;
        push("rotate", l, r);
    }
    if cfg.translation {
        let m = cfg.translation_max_pixels as isize;
        let mut draw = || rng.below(2 * m as usize + 1) as isize - m;
        let (dx, dy) = (draw(), draw());
        let (l, r) = both(&|t| translate(t, dx, dy))?;
        push("translate", l, r);
    }
    Ok(out)
}

/// Augment a whole dataset. Each pair's randomness is derived from its id, so
/// the result does not depend on processing order.
pub fn augment_all(samples: &[StereoSample], cfg: &AugmentConfig) -> Result<Vec<StereoSample>> {
    let per = par::map(samples, |s| augment(s, cfg));
    let mut out = Vec::with_capacity(samples.len() * (1 + cfg.enabled_count()));
    for v in per {
        out.extend(v?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(seed: u64) -> StereoSample {
        let mut rng = Rng::new(seed);
        let s = Shape::new(1, 8, 48, 3).unwrap();
        let left = Tensor::from_vec(s, (0..s.len()).map(|_| rng.uniform()).collect()).unwrap();
        let right = Tensor::from_vec(s, (0..s.len()).map(|_| rng.uniform()).collect()).unwrap();
        StereoSample::new("p0", left, right, 1).unwrap()
    }

    #[test]
    fn reflections_are_involutions() {
        let s = sample(1);
        let h = reflect_horizontal(&s.left_eye).unwrap();
        assert_ne!(h, s.left_eye);
        assert_eq!(reflect_horizontal(&h).unwrap(), s.left_eye);
        assert_eq!(reflect_vertical(&reflect_vertical(&s.left_eye).unwrap()).unwrap(), s.left_eye);
    }

    #[test]
    fn identity_settings_reproduce_original() {
        let s = sample(2);
        let cfg = AugmentConfig {
            horizontal_reflect: false,
            vertical_reflect: false,
            down_up: false,
            up_down: false,
            noise_stddev: 0.0,
            rotation_max_degrees: 0.0,
            translation_max_pixels: 0,
            ..AugmentConfig::default()
        };
        let out = augment(&s, &cfg).unwrap();
        assert_eq!(out.len(), 4);
        for v in &out[1..] {
            assert_eq!(v.left_eye, s.left_eye, "{}", v.pair_id);
            assert_eq!(v.right_eye, s.right_eye, "{}", v.pair_id);
            assert_eq!(v.source, "p0");
        }
    }

    #[test]
    fn one_variant_per_transform_and_deterministic() {
        let s = sample(3);
        let cfg = AugmentConfig { seed: 5, ..AugmentConfig::default() };
        let a = augment(&s, &cfg).unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!(a, augment(&s, &cfg).unwrap());
        let ids: Vec<_> = a.iter().map(|v| v.pair_id.as_str()).collect();
        assert_eq!(
            ids,
            ["p0", "p0+hflip", "p0+vflip", "p0+downup", "p0+updown", "p0+noise", "p0+rotate", "p0+translate"]
        );
    }

    #[test]
    fn both_eyes_share_parameters() {
        // identical eyes must stay identical under every transform
        let mut s = sample(4);
        s.right_eye = s.left_eye.clone();
        for v in augment(&s, &AugmentConfig { seed: 9, ..AugmentConfig::default() }).unwrap() {
            assert_eq!(v.left_eye, v.right_eye, "{}", v.pair_id);
        }
    }

    #[test]
    fn swap_option_exchanges_eyes() {
        let s = sample(5);
        let cfg = AugmentConfig { reflect_swaps_eyes: true, ..AugmentConfig::none() };
        let cfg = AugmentConfig { horizontal_reflect: true, ..cfg };
        let out = augment(&s, &cfg).unwrap();
        assert_eq!(out[1].left_eye, reflect_horizontal(&s.right_eye).unwrap());
    }

    #[test]
    fn magnitude_limits() {
        let s = sample(6);
        let big_rotation = AugmentConfig { rotation_max_degrees: 15.0, ..AugmentConfig::default() };
        assert!(augment(&s, &big_rotation).is_err());
        assert!(augment(&s, &AugmentConfig::default()).is_ok());
        let big_shift = AugmentConfig { translation_max_pixels: 5, ..AugmentConfig::default() };
        assert!(augment(&s, &big_shift).is_err(), "5 px is over 10% of 48");
        let bad_factor = AugmentConfig { rescale_factors: [1.5, 2.0], ..AugmentConfig::default() };
        assert!(augment(&s, &bad_factor).is_err());
    }

    #[test]
    fn translate_and_rotate_identity() {
        let s = sample(7);
        assert_eq!(translate(&s.left_eye, 0, 0).unwrap(), s.left_eye);
        assert_eq!(rotate(&s.left_eye, 0.0).unwrap(), s.left_eye);
        let shifted = translate(&s.left_eye, 1, 0).unwrap();
        assert_eq!(shifted.at(0, 0, 0, 0), 0.0);
        assert_eq!(shifted.at(0, 0, 1, 0), s.left_eye.at(0, 0, 0, 0));
    }
}
