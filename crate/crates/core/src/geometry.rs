//! Random node placement on a planar disk and pairwise distances.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A planar position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// N node positions on a disk of radius `radius` centred at the origin, plus the
/// seed they were drawn from. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRecord", into = "NetworkRecord")]
pub struct NetworkInstance {
    positions: Vec<Point>,
    radius: f64,
    seed: u64,
}

/// On-disk form: `{n, radius, seed, positions: [[x, y], ...]}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkRecord {
    n: usize,
    radius: f64,
    seed: u64,
    positions: Vec<Point>,
}

impl TryFrom<NetworkRecord> for NetworkInstance {
    type Error = Error;

    fn try_from(rec: NetworkRecord) -> Result<Self> {
        if rec.n != rec.positions.len() {
            return Err(Error::invalid(format!(
                "record declares n = {} but lists {} positions",
                rec.n,
                rec.positions.len()
            )));
        }
        NetworkInstance::from_positions(rec.positions, rec.radius, rec.seed)
    }
}

impl From<NetworkInstance> for NetworkRecord {
    fn from(net: NetworkInstance) -> Self {
        NetworkRecord {
            n: net.positions.len(),
            radius: net.radius,
            seed: net.seed,
            positions: net.positions,
        }
    }
}

/// Places `n` nodes independently and uniformly over the disk of the given radius.
///
/// The radial coordinate is drawn as `radius * sqrt(U)` and the angle uniformly, so the
/// density is proportional to area. The same `(n, radius, seed)` always yields
/// bit-identical coordinates.
pub fn place_nodes(n: usize, radius: f64, seed: u64) -> Result<NetworkInstance> {
    validate_shape(n, radius)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = (0..n)
        .map(|_| {
            let rho = radius * rng.random::<f64>().sqrt();
            let phi = TAU * rng.random::<f64>();
            // Rounding in cos/sin can push |z| a hair past the radius.
            let (s, c) = phi.sin_cos();
            clamp_to_disk(Point::new(rho * c, rho * s), radius)
        })
        .collect();
    Ok(NetworkInstance {
        positions,
        radius,
        seed,
    })
}

fn clamp_to_disk(mut p: Point, radius: f64) -> Point {
    while p.norm() > radius {
        p = Point::new(p.x * (1.0 - f64::EPSILON), p.y * (1.0 - f64::EPSILON));
    }
    p
}

fn validate_shape(n: usize, radius: f64) -> Result<()> {
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 nodes, got {n}")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!(
            "disk radius must be positive and finite, got {radius}"
        )));
    }
    Ok(())
}

impl NetworkInstance {
    /// Builds an instance from explicit positions, e.g. a replayed record or a hand-made
    /// test layout. Every position must lie inside the disk.
    pub fn from_positions(positions: Vec<Point>, radius: f64, seed: u64) -> Result<Self> {
        validate_shape(positions.len(), radius)?;
        if let Some((i, p)) = positions
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.x.is_finite() && p.y.is_finite()) || p.norm() > radius)
        {
            return Err(Error::invalid(format!(
                "node {i} at ({}, {}) lies outside the disk of radius {radius}",
                p.x, p.y
            )));
        }
        Ok(NetworkInstance {
            positions,
            radius,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn position(&self, i: usize) -> Result<Point> {
        self.positions
            .get(i)
            .copied()
            .ok_or(Error::IndexOutOfRange {
                index: i,
                n: self.len(),
            })
    }

    /// Euclidean distance between nodes `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> Result<f64> {
        Ok(self.position(i)?.distance(self.position(j)?))
    }

    /// Copy with every coordinate (and the radius) multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::invalid(format!(
                "scale factor must be positive, got {factor}"
            )));
        }
        Ok(NetworkInstance {
            positions: self
                .positions
                .iter()
                .map(|p| Point::new(p.x * factor, p.y * factor))
                .collect(),
            radius: self.radius * factor,
            seed: self.seed,
        })
    }
}

/// Dense row-major N×N table of pairwise distances.
///
/// Internal cache for the simulation kernel. Entries are produced by
/// [`Point::distance`], so they agree bit-for-bit with [`NetworkInstance::distance`].
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(net: &NetworkInstance) -> Self {
        let n = net.len();
        let pos = net.positions();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = pos[i].distance(pos[j]);
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        DistanceMatrix { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}
