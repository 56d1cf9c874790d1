use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::linops::{fft2_in_place, signed_bin, Image};

use super::PipelineError;

/// Synthetic test-image families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhantomKind {
    /// Bright anti-aliased line segments on a dark background.
    Rods,
    /// Piecewise-constant polygonal regions (a Voronoi partition).
    Crystals,
    /// Band-limited noise.
    Texture,
}

impl FromStr for PhantomKind {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rods" => Ok(Self::Rods),
            "crystals" => Ok(Self::Crystals),
            "texture" => Ok(Self::Texture),
            other => Err(PipelineError::Config(format!(
                "unknown phantom kind {other:?} (expected rods, crystals or texture)"
            ))),
        }
    }
}

impl fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rods => "rods",
            Self::Crystals => "crystals",
            Self::Texture => "texture",
        })
    }
}

/// Cutoff of the texture phantom, in cycles per pixel.
pub const TEXTURE_CUTOFF: f64 = 0.125;

/// Square `size x size` phantom with values in `[0, 1]`; `size` must be a
/// positive multiple of 8.
pub fn make_phantom(kind: PhantomKind, size: usize, seed: u64) -> Result<Image, PipelineError> {
    if size == 0 || size % 8 != 0 {
        return Err(PipelineError::Config(format!("phantom size {size} is not a positive multiple of 8")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match kind {
        PhantomKind::Rods => rods(size, &mut rng),
        PhantomKind::Crystals => crystals(size, &mut rng),
        PhantomKind::Texture => normalize(&bandlimited_noise(size, TEXTURE_CUTOFF, &mut rng), 0.1, 0.9),
    })
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

struct Rod {
    a: (f64, f64),
    b: (f64, f64),
    half_width: f64,
    level: f64,
}

fn rods(size: usize, rng: &mut ChaCha8Rng) -> Image {
    const BACKGROUND: f64 = 0.1;
    let s = size as f64;
    let count = (size * size / 512).max(2);
    let rods: Vec<Rod> = (0..count)
        .map(|_| {
            let c = (rng.random_range(0.0..s), rng.random_range(0.0..s));
            let len = rng.random_range(s / 8.0..s / 3.0).max(3.0);
            let theta = rng.random_range(0.0..std::f64::consts::PI);
            let (dx, dy) = (0.5 * len * theta.cos(), 0.5 * len * theta.sin());
            Rod {
                a: (c.0 - dx, c.1 - dy),
                b: (c.0 + dx, c.1 + dy),
                half_width: rng.random_range(1.0..2.5),
                level: rng.random_range(0.6..0.95),
            }
        })
        .collect();
    Image::from_fn((size, size), |i, j| {
        let p = (i as f64 + 0.5, j as f64 + 0.5);
        rods.iter().fold(BACKGROUND, |acc, r| {
            // Coverage ramps linearly over one pixel across the rod edge.
            let cover = (r.half_width + 0.5 - segment_distance(p, r.a, r.b)).clamp(0.0, 1.0);
            acc.max(BACKGROUND + (r.level - BACKGROUND) * cover)
        })
    })
}

const MIN_REGION: usize = 16;

fn crystals(size: usize, rng: &mut ChaCha8Rng) -> Image {
    let s = size as f64;
    let min_dist = (s / 5.0).max(5.0);
    loop {
        let mut seeds: Vec<(f64, f64)> = Vec::new();
        for _ in 0..400 {
            let p = (rng.random_range(0.0..s), rng.random_range(0.0..s));
            if seeds.iter().all(|q| (p.0 - q.0).hypot(p.1 - q.1) >= min_dist) {
                seeds.push(p);
            }
        }
        if seeds.len() < 2 {
            continue;
        }
        let k = seeds.len();
        let mut levels: Vec<f64> = (0..k).map(|i| 0.15 + 0.7 * i as f64 / (k - 1) as f64).collect();
        levels.shuffle(rng);
        let mut label = vec![0usize; size * size];
        let mut counts = vec![0usize; k];
        for i in 0..size {
            for j in 0..size {
                let p = (i as f64 + 0.5, j as f64 + 0.5);
                let nearest = (0..k)
                    .min_by(|&a, &b| {
                        let da = (p.0 - seeds[a].0).hypot(p.1 - seeds[a].1);
                        let db = (p.0 - seeds[b].0).hypot(p.1 - seeds[b].1);
                        da.total_cmp(&db)
                    })
                    .expect("at least two seeds");
                label[i * size + j] = nearest;
                counts[nearest] += 1;
            }
        }
        if counts.iter().all(|&c| c >= MIN_REGION) {
            return Image::from_fn((size, size), |i, j| levels[label[i * size + j]]);
        }
    }
}

/// White Gaussian noise restricted to radial frequencies at most `cutoff`
/// cycles per pixel; zero mean, not rescaled.
pub fn bandlimited_noise<G: Rng + ?Sized>(size: usize, cutoff: f64, rng: &mut G) -> Image {
    let n = size;
    let mut buf: Vec<Complex64> =
        (0..n * n).map(|_| Complex64::new(rng.sample(rand_distr::StandardNormal), 0.0)).collect();
    fft2_in_place(&mut buf, n, n, FftDirection::Forward);
    let limit = cutoff * n as f64;
    for i in 0..n {
        let fi = signed_bin(i, n);
        for j in 0..n {
            let fj = signed_bin(j, n);
            if (fi * fi + fj * fj).sqrt() > limit || (i == 0 && j == 0) {
                buf[i * n + j] = Complex64::new(0.0, 0.0);
            }
        }
    }
    fft2_in_place(&mut buf, n, n, FftDirection::Inverse);
    let scale = 1.0 / (n * n) as f64;
    Image::from_fn((n, n), |i, j| buf[i * n + j].re * scale)
}

/// Affine rescale of `img` onto `[lo, hi]`; constant images map to the midpoint.
pub fn normalize(img: &Image, lo: f64, hi: f64) -> Image {
    let (min, max) = (img.min(), img.max());
    if max > min {
        img.map(|v| lo + (hi - lo) * (v - min) / (max - min))
    } else {
        Image::constant(img.shape(), 0.5 * (lo + hi))
    }
}
