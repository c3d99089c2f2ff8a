//! Random fixtures shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use urbanlens_core::{Aabb, GeoPoint, Polygon};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Star-shaped (generally non-convex) counter-clockwise polygon around `c`.
pub fn star_polygon(rng: &mut impl Rng, c: GeoPoint, r_min: f64, r_max: f64, n: usize) -> Polygon {
    // One jittered vertex per angular sector keeps every gap below a half turn.
    let sector = TAU / n as f64;
    let phase = rng.gen_range(0.0..TAU);
    let angles: Vec<f64> = (0..n).map(|i| phase + sector * (i as f64 + rng.gen_range(0.1..0.9))).collect();
    let ring = angles
        .iter()
        .map(|&a| {
            let r = rng.gen_range(r_min..r_max);
            GeoPoint::xy(c.x + r * a.cos(), c.y + r * a.sin())
        })
        .collect();
    Polygon::new(ring).expect("star polygon around its center is simple")
}

/// Convex polygon: `n` sorted angles on one circle.
pub fn convex_polygon(rng: &mut impl Rng, c: GeoPoint, r: f64, n: usize) -> Polygon {
    let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..TAU)).collect();
    angles.sort_by(f64::total_cmp);
    Polygon::new(angles.iter().map(|a| GeoPoint::xy(c.x + r * a.cos(), c.y + r * a.sin())).collect()).unwrap()
}

pub fn random_boxes(rng: &mut impl Rng, n: usize, extent: f64, max_side: f64) -> Vec<(usize, Aabb)> {
    (0..n)
        .map(|i| {
            let (x, y) = (rng.gen_range(0.0..extent), rng.gen_range(0.0..extent));
            let (w, h) = (rng.gen_range(0.0..max_side), rng.gen_range(0.0..max_side));
            (i, Aabb::new(x, y, x + w, y + h).unwrap())
        })
        .collect()
}

pub fn random_window(rng: &mut impl Rng, extent: f64, max_side: f64) -> Aabb {
    let (x, y) = (rng.gen_range(-max_side..extent), rng.gen_range(-max_side..extent));
    Aabb::new(x, y, x + rng.gen_range(0.0..max_side), y + rng.gen_range(0.0..max_side)).unwrap()
}
