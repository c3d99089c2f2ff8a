//! Population density, composition and areal population estimates.

use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::geometry::{point_in_polygon, GeoPoint, Polygon};

/// Samples drawn per community when estimating overlap fractions.
pub const SAMPLES_PER_COMMUNITY: usize = 20_000;
pub const DEFAULT_SEED: u64 = 0x5eed_c0de;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bin {
    pub label: String,
    pub count: u64,
}

impl Bin {
    pub fn new(label: impl Into<String>, count: u64) -> Self {
        Self { label: label.into(), count }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityRecord {
    pub id: String,
    pub name: String,
    pub boundary: Polygon,
    pub population: u64,
    #[serde(default)]
    pub age_bins: Vec<Bin>,
    #[serde(default)]
    pub education_bins: Vec<Bin>,
}

impl CommunityRecord {
    /// Structural checks only. Bin totals are checked by [`composition`] so a
    /// single inconsistent census row does not prevent loading a scene.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.id.is_empty() {
            out.push(Violation::new("community:", "id non-empty", ""));
        }
        out
    }

    pub fn bins(&self, dimension: Dimension) -> &[Bin] {
        match dimension {
            Dimension::Age => &self.age_bins,
            Dimension::Education => &self.education_bins,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Age,
    Education,
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "age" => Ok(Dimension::Age),
            "education" => Ok(Dimension::Education),
            _ => Err(Error::InvalidArgument(format!("unknown dimension `{s}` (expected age or education)"))),
        }
    }
}

/// People per square kilometer.
pub fn population_density(r: &CommunityRecord) -> Result<f64> {
    let area = r.boundary.area();
    if area.is_nan() || area <= 0.0 {
        return Err(Error::InvalidGeometry(format!("community {} has zero area", r.id)));
    }
    Ok(r.population as f64 / (area / 1e6))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Share {
    pub label: String,
    pub fraction: f64,
}

pub fn composition(r: &CommunityRecord, dimension: Dimension) -> Result<Vec<Share>> {
    if r.population == 0 {
        return Err(Error::EmptyPopulation(r.id.clone()));
    }
    let bins = r.bins(dimension);
    let total: u64 = bins.iter().map(|b| b.count).sum();
    if total != r.population {
        return Err(Error::InconsistentRecord {
            id: r.id.clone(),
            detail: format!("{dimension:?} bins sum to {total}, population is {}", r.population).to_lowercase(),
        });
    }
    let pop = r.population as f64;
    Ok(bins.iter().map(|b| Share { label: b.label.clone(), fraction: b.count as f64 / pop }).collect())
}

/// Uniform sample points inside each community boundary, drawn once and
/// reused by every query so that nested queries give nested counts.
#[derive(Debug, Clone)]
pub struct PopulationSampler {
    communities: Vec<SampledCommunity>,
}

#[derive(Debug, Clone)]
struct SampledCommunity {
    population: u64,
    bbox: crate::geometry::Aabb,
    points: Vec<GeoPoint>,
}

impl PopulationSampler {
    pub fn new(records: &[CommunityRecord]) -> Self {
        Self::with_seed(records, DEFAULT_SEED, SAMPLES_PER_COMMUNITY)
    }

    pub fn with_seed(records: &[CommunityRecord], seed: u64, samples: usize) -> Self {
        let communities = records
            .par_iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(community_seed(seed, &r.id));
                SampledCommunity {
                    population: r.population,
                    bbox: r.boundary.bbox(),
                    points: sample_polygon(&r.boundary, samples, &mut rng),
                }
            })
            .collect();
        Self { communities }
    }

    /// Uniform-density estimate of the people living inside `query`.
    pub fn population_in_area(&self, query: &Polygon) -> f64 {
        let qbox = query.bbox();
        self.communities
            .par_iter()
            .filter(|c| c.population > 0 && c.bbox.intersects(&qbox) && !c.points.is_empty())
            .map(|c| {
                let inside = c.points.iter().filter(|p| qbox.contains_point(p) && point_in_polygon(p, query)).count();
                c.population as f64 * inside as f64 / c.points.len() as f64
            })
            .collect::<Vec<_>>()
            .into_iter()
            .sum()
    }
}

/// One-shot convenience wrapper around [`PopulationSampler`].
pub fn population_in_area(records: &[CommunityRecord], query: &Polygon) -> f64 {
    PopulationSampler::new(records).population_in_area(query)
}

/// Per-community seed: FNV-1a of the id mixed into the global seed.
fn community_seed(seed: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    seed ^ h
}

/// Rejection sampling inside the polygon's bounding box.
pub(crate) fn sample_polygon(p: &Polygon, n: usize, rng: &mut impl Rng) -> Vec<GeoPoint> {
    let b = p.bbox();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let pt = GeoPoint::xy(rng.gen_range(b.min_x..=b.max_x), rng.gen_range(b.min_y..=b.max_y));
        if point_in_polygon(&pt, p) {
            out.push(pt);
        }
    }
    out
}
