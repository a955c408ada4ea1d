//! Per-slot election of the simultaneous transmitter set.
//!
//! Three schemes are modelled:
//!
//! * **ALOHA**: every node transmits independently with probability `p`.
//! * **Node coloring**: nodes are drawn uniformly at random from a candidate pool; each pick
//!   joins the set and evicts every remaining candidate closer than the exclusion distance
//!   `d`. The result is a maximal hard-core set.
//! * **CSMA**: same random admission order, but a candidate is evicted once the *cumulative*
//!   power it senses from the nodes admitted so far reaches the carrier-sense threshold
//!   `theta`. Admitted nodes never re-check. Under Rayleigh fading the sensed power uses the
//!   slot's own fading factors `F_{ij}`.
//!
//! Every slot is an independent election.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSpec, FadingField, GainMatrix};
use crate::error::{Error, Result};
use crate::geometry::{DistanceMatrix, NetworkInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Aloha,
    Coloring,
    Csma,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Aloha, Scheme::Coloring, Scheme::Csma];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Aloha => "aloha",
            Scheme::Coloring => "coloring",
            Scheme::Csma => "csma",
        }
    }

    /// Name of the scheme's tuning parameter (`p`, `d` or `theta`).
    pub fn parameter_name(self) -> &'static str {
        match self {
            Scheme::Aloha => "p",
            Scheme::Coloring => "d",
            Scheme::Csma => "theta",
        }
    }

    pub fn with_parameter(self, value: f64) -> Result<MacSpec> {
        let spec = match self {
            Scheme::Aloha => MacSpec::Aloha { p: value },
            Scheme::Coloring => MacSpec::Coloring { d: value },
            Scheme::Csma => MacSpec::Csma { theta: value },
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aloha" => Ok(Scheme::Aloha),
            "coloring" | "colouring" | "tdma" => Ok(Scheme::Coloring),
            "csma" => Ok(Scheme::Csma),
            other => Err(Error::invalid(format!(
                "unknown scheme {other:?} (expected aloha, coloring or csma)"
            ))),
        }
    }
}

/// A medium access scheme together with its tuning parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum MacSpec {
    Aloha { p: f64 },
    Coloring { d: f64 },
    Csma { theta: f64 },
}

impl MacSpec {
    pub fn scheme(&self) -> Scheme {
        match self {
            MacSpec::Aloha { .. } => Scheme::Aloha,
            MacSpec::Coloring { .. } => Scheme::Coloring,
            MacSpec::Csma { .. } => Scheme::Csma,
        }
    }

    pub fn parameter(&self) -> f64 {
        match *self {
            MacSpec::Aloha { p } => p,
            MacSpec::Coloring { d } => d,
            MacSpec::Csma { theta } => theta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MacSpec::Aloha { p } if !(0.0..=1.0).contains(&p) => Err(Error::invalid(format!(
                "ALOHA access probability must lie in [0, 1], got {p}"
            ))),
            MacSpec::Coloring { d } if !(d > 0.0) || d.is_nan() => Err(Error::invalid(format!(
                "exclusion distance must be positive, got {d}"
            ))),
            MacSpec::Csma { theta } if !(theta > 0.0) || theta.is_nan() => Err(Error::invalid(
                format!("carrier-sense threshold must be positive, got {theta}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Nodes transmitting in one slot, in order of admission.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransmitterSet {
    pub slot: u64,
    pub members: Vec<usize>,
}

impl TransmitterSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Reusable election state for one network. Holds scratch buffers so the slot loop does
/// not allocate.
pub struct Elector<'a> {
    mac: MacSpec,
    distances: &'a DistanceMatrix,
    gains: Option<&'a GainMatrix>,
    candidates: Vec<usize>,
    sensed: Vec<f64>,
    set: TransmitterSet,
}

impl<'a> Elector<'a> {
    /// `gains` is only read by CSMA, which requires it.
    pub fn new(
        mac: MacSpec,
        distances: &'a DistanceMatrix,
        gains: Option<&'a GainMatrix>,
    ) -> Result<Self> {
        mac.validate()?;
        let n = distances.len();
        match gains {
            Some(g) if g.len() != n => {
                return Err(Error::invalid("distance and gain tables disagree on N"))
            }
            None if mac.scheme() == Scheme::Csma => {
                return Err(Error::invalid("CSMA election needs the gain table"))
            }
            _ => {}
        }
        Ok(Elector {
            mac,
            distances,
            gains,
            candidates: Vec::with_capacity(n),
            sensed: vec![0.0; n],
            set: TransmitterSet::default(),
        })
    }

    /// Elects the transmitter set for `slot`.
    ///
    /// `mac_rng` drives the access decisions. CSMA additionally draws fading rows from
    /// `fading_rng` into `field` as nodes are admitted; the other schemes leave both untouched.
    pub fn elect<R1, R2>(
        &mut self,
        slot: u64,
        field: &mut FadingField,
        mac_rng: &mut R1,
        fading_rng: &mut R2,
    ) -> &TransmitterSet
    where
        R1: Rng + ?Sized,
        R2: Rng + ?Sized,
    {
        self.set.slot = slot;
        self.set.members.clear();
        let n = self.distances.len();
        match self.mac {
            MacSpec::Aloha { p } => aloha_into(n, p, mac_rng, &mut self.set.members),
            MacSpec::Coloring { d } => coloring_into(
                self.distances,
                d,
                mac_rng,
                &mut self.candidates,
                &mut self.set.members,
            ),
            MacSpec::Csma { theta } => csma_into(
                self.gains.expect("checked in Elector::new"),
                theta,
                field,
                mac_rng,
                fading_rng,
                &mut self.candidates,
                &mut self.sensed,
                &mut self.set.members,
            ),
        }
        &self.set
    }
}

fn aloha_into<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R, out: &mut Vec<usize>) {
    // One uniform per node regardless of p, so runs at different p share draws.
    for i in 0..n {
        if rng.random::<f64>() < p {
            out.push(i);
        }
    }
}

fn coloring_into<R: Rng + ?Sized>(
    distances: &DistanceMatrix,
    d: f64,
    rng: &mut R,
    candidates: &mut Vec<usize>,
    out: &mut Vec<usize>,
) {
    candidates.clear();
    candidates.extend(0..distances.len());
    while !candidates.is_empty() {
        let i = candidates.swap_remove(rng.random_range(0..candidates.len()));
        out.push(i);
        let row = distances.row(i);
        candidates.retain(|&j| row[j] >= d);
    }
}

#[allow(clippy::too_many_arguments)]
fn csma_into<R1, R2>(
    gains: &GainMatrix,
    theta: f64,
    field: &mut FadingField,
    rng: &mut R1,
    fading_rng: &mut R2,
    candidates: &mut Vec<usize>,
    sensed: &mut [f64],
    out: &mut Vec<usize>,
) where
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    candidates.clear();
    candidates.extend(0..gains.len());
    sensed.fill(0.0);
    while !candidates.is_empty() {
        let i = candidates.swap_remove(rng.random_range(0..candidates.len()));
        out.push(i);
        field.add_transmitter(i, fading_rng);
        let g = gains.row(i);
        match field.row(i) {
            None => candidates.retain(|&j| {
                sensed[j] += g[j];
                sensed[j] < theta
            }),
            Some(fade) => candidates.retain(|&j| {
                sensed[j] += fade[j] * g[j];
                sensed[j] < theta
            }),
        }
    }
}

/// ALOHA election: each of `n` nodes joins independently with probability `p`.
pub fn elect_aloha<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<TransmitterSet> {
    MacSpec::Aloha { p }.validate()?;
    let mut members = Vec::new();
    aloha_into(n, p, rng, &mut members);
    Ok(TransmitterSet { slot: 0, members })
}

/// Node-coloring election with exclusion distance `d`.
pub fn elect_coloring<R: Rng + ?Sized>(
    net: &NetworkInstance,
    d: f64,
    rng: &mut R,
) -> Result<TransmitterSet> {
    MacSpec::Coloring { d }.validate()?;
    let mut members = Vec::new();
    coloring_into(
        &DistanceMatrix::new(net),
        d,
        rng,
        &mut Vec::new(),
        &mut members,
    );
    Ok(TransmitterSet { slot: 0, members })
}

/// CSMA election with carrier-sense threshold `theta`. Under Rayleigh fading, sensing
/// factors are drawn into `field` from `fading_rng` and stay valid for reception in the
/// same slot.
pub fn elect_csma<R1, R2>(
    net: &NetworkInstance,
    spec: &ChannelSpec,
    theta: f64,
    field: &mut FadingField,
    mac_rng: &mut R1,
    fading_rng: &mut R2,
) -> Result<TransmitterSet>
where
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    MacSpec::Csma { theta }.validate()?;
    let gains = GainMatrix::new(&DistanceMatrix::new(net), spec.alpha())?;
    let mut members = Vec::new();
    csma_into(
        &gains,
        theta,
        field,
        mac_rng,
        fading_rng,
        &mut Vec::new(),
        &mut vec![0.0; net.len()],
        &mut members,
    );
    Ok(TransmitterSet { slot: 0, members })
}
