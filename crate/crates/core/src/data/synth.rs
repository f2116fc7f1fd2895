//! Synthetic stereo scenes for laptop-scale experiments.
//!
//! Class 0 ("buildings") scenes hold a skyline of axis-aligned facades
//! covered by regular window grids; class 1 ("others") scenes hold soft
//! elliptical blobs spread over both halves of the image. With probability `confusion` a scene also receives a distractor
//! from the other class (a windowless slab, or a blob in front of a
//! building). Every object sits at a random depth; the right-eye view renders
//! it shifted left by a disparity between `min_disparity` and
//! `max_disparity` of the image width (nearer objects shift more). The
//! background is at infinity and does not shift.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::routing::StereoSample;
use crate::tensor::{Shape, Tensor};

pub const CLASS_NAMES: [&str; 2] = ["buildings", "others"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    /// Disparity range as fractions of the width.
    pub min_disparity: f64,
    pub max_disparity: f64,
    /// Probability of adding an other-class distractor to a scene.
    pub confusion: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { height: 32, width: 64, min_disparity: 0.01, max_disparity: 0.05, confusion: 0.35 }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < 8 || self.width < 8 {
            return Err(Error::Config("synthetic images must be at least 8x8".into()));
        }
        let d_ok = 0.0 <= self.min_disparity && self.min_disparity <= self.max_disparity && self.max_disparity < 0.5;
        if !d_ok {
            return Err(Error::Config(format!(
                "disparity range [{}, {}] is invalid",
                self.min_disparity, self.max_disparity
            )));
        }
        if !(0.0..=1.0).contains(&self.confusion) {
            return Err(Error::Config(format!("confusion must be in [0, 1], got {}", self.confusion)));
        }
        Ok(())
    }
}

type Rgb = [f64; 3];

#[derive(Debug, Clone)]
enum Shape2d {
    Facade {
        x0: f64,
        x1: f64,
        top: f64,
        bottom: f64,
        color: Rgb,
        /// `(pitch_x, pitch_y, size, color)` of the window grid.
        windows: Option<(f64, f64, f64, Rgb)>,
    },
    Blob {
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
        color: Rgb,
    },
}

#[derive(Debug, Clone)]
struct Object {
    depth: f64,
    shape: Shape2d,
}

struct Scene {
    sky: Rgb,
    ground: Rgb,
    horizon: f64,
    objects: Vec<Object>,
}

/// Fraction of the unit pixel `[p, p + 1)` covered by `[lo, hi)`.
fn coverage(p: usize, lo: f64, hi: f64) -> f64 {
    let p = p as f64;
    (hi.min(p + 1.0) - lo.max(p)).clamp(0.0, 1.0)
}

struct Canvas {
    h: usize,
    w: usize,
    px: Vec<f64>,
}

impl Canvas {
    fn blend(&mut self, y: usize, x: usize, color: Rgb, alpha: f64) {
        if alpha <= 0.0 {
            return;
        }
        let o = (y * self.w + x) * 3;
        for (c, v) in color.iter().enumerate() {
            self.px[o + c] = self.px[o + c] * (1.0 - alpha) + v * alpha;
        }
    }

    fn rect(&mut self, x0: f64, x1: f64, y0: f64, y1: f64, color: Rgb) {
        let xs = (x0.floor().max(0.0) as usize)..(x1.ceil().min(self.w as f64).max(0.0) as usize);
        let ys = (y0.floor().max(0.0) as usize)..(y1.ceil().min(self.h as f64).max(0.0) as usize);
        for y in ys {
            let cy = coverage(y, y0, y1);
            for x in xs.clone() {
                self.blend(y, x, color, cy * coverage(x, x0, x1));
            }
        }
    }

    fn blob(&mut self, cx: f64, cy: f64, rx: f64, ry: f64, color: Rgb) {
        for y in 0..self.h {
            for x in 0..self.w {
                let dx = (x as f64 + 0.5 - cx) / rx;
                let dy = (y as f64 + 0.5 - cy) / ry;
                let r2 = dx * dx + dy * dy;
                if r2 < 4.0 {
                    self.blend(y, x, color, (1.5 * (1.0 - r2)).clamp(0.0, 1.0));
                }
            }
        }
    }
}

fn render(scene: &Scene, h: usize, w: usize, shift_per_depth: impl Fn(f64) -> f64) -> Result<Tensor> {
    let mut canvas = Canvas { h, w, px: vec![0.0; h * w * 3] };
    let horizon = scene.horizon * h as f64;
    for y in 0..h {
        let t = y as f64 / (h - 1) as f64;
        for x in 0..w {
            let color = if (y as f64) < horizon { scene.sky.map(|c| c * (0.85 + 0.15 * t)) } else { scene.ground };
            canvas.blend(y, x, color, 1.0);
        }
    }
    for obj in &scene.objects {
        let dx = shift_per_depth(obj.depth);
        match &obj.shape {
            Shape2d::Facade { x0, x1, top, bottom, color, windows } => {
                let (x0, x1) = (x0 - dx, x1 - dx);
                canvas.rect(x0, x1, *top, *bottom, *color);
                if let Some((px, py, size, wc)) = windows {
                    let mut wy = top + py * 0.5;
                    while wy + size < *bottom - 1.0 {
                        let mut wx = x0 + px * 0.5;
                        while wx + size < x1 - 0.5 {
                            canvas.rect(wx, wx + size, wy, wy + size, *wc);
                            wx += px;
                        }
                        wy += py;
                    }
                }
            }
            Shape2d::Blob { cx, cy, rx, ry, color } => canvas.blob(cx - dx, *cy, *rx, *ry, *color),
        }
    }
    let px = canvas.px.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Tensor::from_vec(Shape::image(h, w, 3)?, px)
}

fn muted(rng: &mut Rng) -> Rgb {
    let base = rng.uniform_in(0.3, 0.7);
    [0, 1, 2].map(|_| (base + rng.uniform_in(-0.08, 0.08)).clamp(0.0, 1.0))
}

fn vivid(rng: &mut Rng) -> Rgb {
    [0, 1, 2].map(|_| rng.uniform_in(0.1, 0.95))
}

fn facade(rng: &mut Rng, x0: f64, fw: f64, h: f64, horizon: f64, with_windows: bool) -> Shape2d {
    let bottom = (horizon + rng.uniform_in(0.0, 0.1)) * h;
    let top = bottom - rng.uniform_in(0.4, 0.85) * h;
    let color = muted(rng);
    let windows = with_windows.then(|| {
        let lit = rng.uniform() < 0.5;
        let wc = if lit { [0.95, 0.9, rng.uniform_in(0.4, 0.7)] } else { color.map(|c| c * 0.35) };
        (rng.uniform_in(3.0, 4.5), rng.uniform_in(3.0, 4.5), rng.uniform_in(1.2, 2.0), wc)
    });
    Shape2d::Facade { x0, x1: x0 + fw, top: top.max(-2.0), bottom, color, windows }
}

/// A blob centred in the horizontal band `[lo, hi)` (fractions of the width).
fn blob(rng: &mut Rng, h: f64, w: f64, lo: f64, hi: f64) -> Shape2d {
    Shape2d::Blob {
        cx: rng.uniform_in(lo, hi) * w,
        cy: rng.uniform_in(0.2, 0.9) * h,
        rx: rng.uniform_in(0.06, 0.18) * w,
        ry: rng.uniform_in(0.12, 0.35) * h,
        color: vivid(rng),
    }
}

fn scene(class: usize, cfg: &SynthConfig, rng: &mut Rng) -> Scene {
    let (h, w) = (cfg.height as f64, cfg.width as f64);
    let sky = [rng.uniform_in(0.55, 0.75), rng.uniform_in(0.65, 0.85), rng.uniform_in(0.8, 1.0)];
    let ground = muted(rng).map(|c| c * 0.7);
    let horizon = rng.uniform_in(0.6, 0.85);
    let mut objects = Vec::new();
    let mut add = |shape, rng: &mut Rng| objects.push(Object { depth: rng.uniform(), shape });
    if class == 0 {
        // a skyline of facades spanning the width
        let mut x = rng.uniform_in(-0.1, 0.1) * w;
        while x < w {
            let fw = rng.uniform_in(0.15, 0.35) * w;
            let s = facade(rng, x, fw, h, horizon, true);
            add(s, rng);
            x += fw + rng.uniform_in(0.0, 0.15) * w;
        }
        if rng.uniform() < cfg.confusion {
            let s = blob(rng, h, w, 0.05, 0.95);
            add(s, rng);
        }
    } else {
        // blobs alternate between the two halves
        for i in 0..2 + rng.below(4) {
            let lo = if i % 2 == 0 { 0.0 } else { 0.5 };
            let s = blob(rng, h, w, lo + 0.05, lo + 0.45);
            add(s, rng);
        }
        if rng.uniform() < cfg.confusion {
            let fw = rng.uniform_in(0.15, 0.35) * w;
            let x0 = rng.uniform_in(-0.05 * w, 0.95 * w - fw);
            let s = facade(rng, x0, fw, h, horizon, false);
            add(s, rng);
        }
    }
    // painter's order: far objects first
    objects.sort_by(|a, b| a.depth.total_cmp(&b.depth));
    Scene { sky, ground, horizon, objects }
}

/// `n_pairs` labelled stereo pairs of class `class` (0 or 1), ids
/// `<b|o><index>`.
pub fn synthesize_stereo(n_pairs: usize, class: usize, rng: &mut Rng, cfg: &SynthConfig) -> Result<Vec<StereoSample>> {
    cfg.validate()?;
    if n_pairs == 0 {
        return Err(Error::Parameter("need at least one pair".into()));
    }
    if class > 1 {
        return Err(Error::Parameter(format!("class {class} is not 0 or 1")));
    }
    let prefix = if class == 0 { 'b' } else { 'o' };
    let w = cfg.width as f64;
    (0..n_pairs)
        .map(|i| {
            let sc = scene(class, cfg, rng);
            let left = render(&sc, cfg.height, cfg.width, |_| 0.0)?;
            let right = render(&sc, cfg.height, cfg.width, |depth| {
                w * (cfg.min_disparity + (cfg.max_disparity - cfg.min_disparity) * depth)
            })?;
            StereoSample::new(format!("{prefix}{i:03}"), left, right, class)
        })
        .collect()
}

/// `pairs_per_class` pairs of each class, class 0 first. Each class draws
/// from its own stream derived from `seed`.
pub fn synthesize_dataset(pairs_per_class: usize, cfg: &SynthConfig, seed: u64) -> Result<Vec<StereoSample>> {
    let mut out = synthesize_stereo(pairs_per_class, 0, &mut Rng::derived(seed, 0), cfg)?;
    out.extend(synthesize_stereo(pairs_per_class, 1, &mut Rng::derived(seed, 1), cfg)?);
    Ok(out)
}
