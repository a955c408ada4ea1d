//! Path gains, per-slot fading, interference sums and the SIR reception test.
//!
//! Gains follow `F * |z_i - z_j|^(-alpha)` with unit transmit power. Background noise
//! is taken as zero, so a receiver with no interference always decodes.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DistanceMatrix, NetworkInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fading {
    /// `F = 1` on every link.
    None,
    /// `F ~ Exp(1)`, drawn independently per ordered pair and per slot.
    Rayleigh,
}

impl fmt::Display for Fading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fading::None => "none",
            Fading::Rayleigh => "rayleigh",
        })
    }
}

impl FromStr for Fading {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "no" | "nofading" => Ok(Fading::None),
            "rayleigh" => Ok(Fading::Rayleigh),
            other => Err(Error::invalid(format!(
                "unknown fading mode {other:?} (expected \"none\" or \"rayleigh\")"
            ))),
        }
    }
}

/// Channel model: fading mode, attenuation exponent `alpha > 2` and SIR threshold `k > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChannelSpec")]
pub struct ChannelSpec {
    fading: Fading,
    alpha: f64,
    k_threshold: f64,
}

#[derive(Deserialize)]
struct RawChannelSpec {
    fading: Fading,
    alpha: f64,
    k_threshold: f64,
}

impl TryFrom<RawChannelSpec> for ChannelSpec {
    type Error = Error;

    fn try_from(raw: RawChannelSpec) -> Result<Self> {
        ChannelSpec::new(raw.fading, raw.alpha, raw.k_threshold)
    }
}

impl ChannelSpec {
    pub fn new(fading: Fading, alpha: f64, k_threshold: f64) -> Result<Self> {
        if !(alpha > 2.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!(
                "attenuation exponent must exceed 2, got {alpha}"
            )));
        }
        if !(k_threshold > 0.0 && k_threshold.is_finite()) {
            return Err(Error::invalid(format!(
                "SIR threshold must be positive, got {k_threshold}"
            )));
        }
        Ok(ChannelSpec {
            fading,
            alpha,
            k_threshold,
        })
    }

    pub fn fading(&self) -> Fading {
        self.fading
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn k_threshold(&self) -> f64 {
        self.k_threshold
    }
}

/// Deterministic part of the gain at distance `d`.
#[inline]
pub fn path_gain(d: f64, alpha: f64) -> f64 {
    d.powf(-alpha)
}

/// Dense N×N table of `|z_i - z_j|^(-alpha)`; the diagonal is zero.
///
/// Building it is where coincident nodes are caught.
#[derive(Debug, Clone)]
pub struct GainMatrix {
    n: usize,
    data: Vec<f64>,
}

impl GainMatrix {
    pub fn new(distances: &DistanceMatrix, alpha: f64) -> Result<Self> {
        let n = distances.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let g = path_gain(distances.get(i, j), alpha);
                if !g.is_finite() {
                    return Err(Error::DegenerateGeometry { i, j });
                }
                data[i * n + j] = g;
                data[j * n + i] = g;
            }
        }
        Ok(GainMatrix { n, data })
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

const NO_ROW: u32 = u32::MAX;

/// Fading factors `F_{ij}` for one slot.
///
/// Factors are drawn a transmitter at a time: adding transmitter `i` draws the whole row
/// `F_{i0} .. F_{i,N-1}`, i.e. one factor for every receiver that could hear it. Pairs are
/// directional, so `F_{ij}` and `F_{ji}` are independent. Under [`Fading::None`] every factor
/// is exactly 1 and no randomness is consumed.
#[derive(Debug, Clone)]
pub struct FadingField {
    fading: Fading,
    n: usize,
    row_of: Vec<u32>,
    rows: Vec<f64>,
    drawn: Vec<usize>,
}

impl FadingField {
    pub fn new(fading: Fading, n: usize) -> Self {
        FadingField {
            fading,
            n,
            row_of: match fading {
                Fading::None => Vec::new(),
                Fading::Rayleigh => vec![NO_ROW; n],
            },
            rows: Vec::new(),
            drawn: Vec::new(),
        }
    }

    pub fn fading(&self) -> Fading {
        self.fading
    }

    /// Forgets all factors, keeping the allocations for the next slot.
    pub fn clear(&mut self) {
        for &i in &self.drawn {
            self.row_of[i] = NO_ROW;
        }
        self.drawn.clear();
        self.rows.clear();
    }

    /// Draws the factors from transmitter `i` to every node. Redrawing an existing row is a no-op.
    pub fn add_transmitter<R: Rng + ?Sized>(&mut self, i: usize, rng: &mut R) {
        if self.fading == Fading::None || self.row_of[i] != NO_ROW {
            return;
        }
        self.row_of[i] = self.drawn.len() as u32;
        self.drawn.push(i);
        self.rows
            .extend((0..self.n).map(|_| rng.sample::<f64, _>(Exp1)));
    }

    /// Row of factors out of transmitter `i`, or `None` when every factor is 1
    /// ([`Fading::None`]) or the row has not been drawn.
    #[inline]
    pub fn row(&self, i: usize) -> Option<&[f64]> {
        match self.fading {
            Fading::None => None,
            Fading::Rayleigh => {
                let r = *self.row_of.get(i)?;
                (r != NO_ROW).then(|| &self.rows[r as usize * self.n..(r as usize + 1) * self.n])
            }
        }
    }

    /// `F_{ij}`, if it was drawn this slot.
    pub fn factor(&self, i: usize, j: usize) -> Option<f64> {
        if j >= self.n || i >= self.n {
            return None;
        }
        match self.fading {
            Fading::None => Some(1.0),
            Fading::Rayleigh => self.row(i).map(|row| row[j]),
        }
    }
}

/// Draws a slot's fading field covering every ordered pair `(i, j)` with `i` in `transmitters`.
pub fn draw_fading<R: Rng + ?Sized>(
    spec: &ChannelSpec,
    n: usize,
    transmitters: &[usize],
    rng: &mut R,
) -> FadingField {
    let mut field = FadingField::new(spec.fading(), n);
    for &i in transmitters {
        field.add_transmitter(i, rng);
    }
    field
}

fn check_index(net: &NetworkInstance, i: usize) -> Result<()> {
    if i < net.len() {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange {
            index: i,
            n: net.len(),
        })
    }
}

fn faded_gain(
    net: &NetworkInstance,
    spec: &ChannelSpec,
    field: &FadingField,
    from: usize,
    to: usize,
) -> Result<f64> {
    let d = net.distance(from, to)?;
    if d == 0.0 {
        return Err(Error::DegenerateGeometry { i: from, j: to });
    }
    let f = field
        .factor(from, to)
        .ok_or_else(|| Error::invalid(format!("no fading factor drawn for link {from} -> {to}")))?;
    let g = f * path_gain(d, spec.alpha());
    if !g.is_finite() {
        return Err(Error::DegenerateGeometry { i: from, j: to });
    }
    Ok(g)
}

/// Total interference at `receiver` from every member of `transmitters` other than `excluding`.
///
/// Summed in the order of `transmitters`; the receiver itself is never counted as its own
/// interferer.
pub fn interference(
    net: &NetworkInstance,
    spec: &ChannelSpec,
    field: &FadingField,
    transmitters: &[usize],
    receiver: usize,
    excluding: usize,
) -> Result<f64> {
    check_index(net, receiver)?;
    if !transmitters.contains(&excluding) {
        return Err(Error::invalid(format!(
            "node {excluding} is not in the transmitter set"
        )));
    }
    let mut total = 0.0;
    for &k in transmitters {
        if k == excluding || k == receiver {
            continue;
        }
        total += faded_gain(net, spec, field, k, receiver)?;
    }
    Ok(total)
}

/// Whether `receiver` decodes `transmitter` this slot: `signal / interference >= K`,
/// with zero interference counting as success.
pub fn success(
    net: &NetworkInstance,
    spec: &ChannelSpec,
    field: &FadingField,
    transmitters: &[usize],
    transmitter: usize,
    receiver: usize,
) -> Result<bool> {
    check_index(net, transmitter)?;
    check_index(net, receiver)?;
    if transmitter == receiver {
        return Err(Error::invalid("a node cannot transmit to itself"));
    }
    if transmitters.contains(&receiver) {
        return Err(Error::invalid(format!(
            "receiver {receiver} is transmitting (half-duplex)"
        )));
    }
    let signal = faded_gain(net, spec, field, transmitter, receiver)?;
    let noise = interference(net, spec, field, transmitters, receiver, transmitter)?;
    Ok(sir_ok(signal, noise, spec.k_threshold()))
}

#[inline]
pub(crate) fn sir_ok(signal: f64, interference: f64, k: f64) -> bool {
    interference <= 0.0 || signal / interference >= k
}
