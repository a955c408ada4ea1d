//! Slot loop: elect, fade, count attempts and successes over `T` slots.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{sir_ok, ChannelSpec, FadingField, GainMatrix};
use crate::error::{Error, Result};
use crate::geometry::{DistanceMatrix, NetworkInstance};
use crate::mac::{Elector, MacSpec, Scheme, TransmitterSet};

/// Slots per run used in the original experiments.
pub const DEFAULT_SLOTS: u64 = 25_000;

/// Fast-path SIR decisions closer than this (relative) to the threshold are recomputed by
/// direct summation so the kernel agrees exactly with [`crate::channel::success`].
const TIE_BAND: f64 = 1e-9;

/// Distance and gain caches for one network under one attenuation exponent.
#[derive(Debug, Clone)]
pub struct Topology {
    net: NetworkInstance,
    distances: DistanceMatrix,
    gains: GainMatrix,
}

impl Topology {
    /// Fails with [`Error::DegenerateGeometry`] if two distinct nodes coincide.
    pub fn new(net: NetworkInstance, alpha: f64) -> Result<Self> {
        let distances = DistanceMatrix::new(&net);
        let gains = GainMatrix::new(&distances, alpha)?;
        Ok(Topology {
            net,
            distances,
            gains,
        })
    }

    pub fn network(&self) -> &NetworkInstance {
        &self.net
    }

    pub fn distances(&self) -> &DistanceMatrix {
        &self.distances
    }

    pub fn gains(&self) -> &GainMatrix {
        &self.gains
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }
}

/// Per-link counters accumulated over a run.
///
/// `attempts[i][j]` counts slots where `i` transmitted while `j` was silent; a slot in which
/// both transmit is not an attempt on either direction. Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LinkStatsRecord")]
pub struct LinkStats {
    n: usize,
    t_slots: u64,
    attempts: Vec<u64>,
    successes: Vec<u64>,
    active_slots: Vec<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkStatsRecord {
    n: usize,
    t_slots: u64,
    attempts: Vec<u64>,
    successes: Vec<u64>,
    active_slots: Vec<u64>,
}

impl TryFrom<LinkStatsRecord> for LinkStats {
    type Error = Error;

    fn try_from(r: LinkStatsRecord) -> Result<Self> {
        LinkStats::from_counts(r.n, r.t_slots, r.attempts, r.successes, r.active_slots)
    }
}

impl LinkStats {
    pub fn new(n: usize) -> Self {
        LinkStats {
            n,
            t_slots: 0,
            attempts: vec![0; n * n],
            successes: vec![0; n * n],
            active_slots: vec![0; n],
        }
    }

    /// Builds from explicit row-major counters, checking the invariants.
    pub fn from_counts(
        n: usize,
        t_slots: u64,
        attempts: Vec<u64>,
        successes: Vec<u64>,
        active_slots: Vec<u64>,
    ) -> Result<Self> {
        let stats = LinkStats {
            n,
            t_slots,
            attempts,
            successes,
            active_slots,
        };
        stats.validate()?;
        Ok(stats)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn total_slots(&self) -> u64 {
        self.t_slots
    }

    pub fn attempts(&self, i: usize, j: usize) -> u64 {
        self.attempts[i * self.n + j]
    }

    pub fn successes(&self, i: usize, j: usize) -> u64 {
        self.successes[i * self.n + j]
    }

    pub fn active_slots(&self) -> &[u64] {
        &self.active_slots
    }

    /// Checks the counter invariants: shapes match, the diagonal is empty,
    /// `successes <= attempts <= active_slots[i] <= total_slots`.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if self.attempts.len() != n * n
            || self.successes.len() != n * n
            || self.active_slots.len() != n
        {
            return Err(Error::invalid(format!(
                "link statistics shapes do not match n = {n}"
            )));
        }
        for i in 0..n {
            if self.active_slots[i] > self.t_slots {
                return Err(Error::invalid(format!(
                    "node {i} active in {} of {} slots",
                    self.active_slots[i], self.t_slots
                )));
            }
            for j in 0..n {
                let (a, s) = (self.attempts(i, j), self.successes(i, j));
                if i == j && (a != 0 || s != 0) {
                    return Err(Error::invalid(format!("self-link counters on node {i}")));
                }
                if s > a || a > self.active_slots[i] {
                    return Err(Error::invalid(format!(
                        "inconsistent counters on link {i} -> {j}: {s} successes, {a} attempts, {} active slots",
                        self.active_slots[i]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Fraction of slots each node transmitted in.
pub fn activity_rate(stats: &LinkStats) -> Vec<f64> {
    let t = stats.t_slots as f64;
    stats
        .active_slots
        .iter()
        .map(|&a| if t > 0.0 { a as f64 / t } else { 0.0 })
        .collect()
}

/// Runs `t_slots` slots on a freshly built [`Topology`]. See [`run_slots_on`].
pub fn run_slots<R: Rng>(
    net: &NetworkInstance,
    spec: &ChannelSpec,
    mac: &MacSpec,
    t_slots: u64,
    rng: &mut R,
) -> Result<LinkStats> {
    let topo = Topology::new(net.clone(), spec.alpha())?;
    run_slots_on(&topo, spec, mac, t_slots, rng, |_| {})
}

/// Simulates `t_slots` independent slots and returns the link counters.
///
/// Two child streams are split off `rng`: one for medium access and one for fading. The
/// access stream therefore yields the same ALOHA and coloring elections whatever the fading
/// mode. `observer` sees every elected set.
pub fn run_slots_on<R, F>(
    topo: &Topology,
    spec: &ChannelSpec,
    mac: &MacSpec,
    t_slots: u64,
    rng: &mut R,
    mut observer: F,
) -> Result<LinkStats>
where
    R: Rng,
    F: FnMut(&TransmitterSet),
{
    if t_slots == 0 {
        return Err(Error::invalid("need at least one slot"));
    }
    let n = topo.len();
    let gains = topo.gains();
    let k = spec.k_threshold();

    let mut mac_rng = ChaCha8Rng::from_rng(rng);
    let mut fading_rng = ChaCha8Rng::from_rng(rng);
    let mut elector = Elector::new(
        *mac,
        topo.distances(),
        (mac.scheme() == Scheme::Csma).then_some(gains),
    )?;
    let mut field = FadingField::new(spec.fading(), n);

    let mut stats = LinkStats::new(n);
    stats.t_slots = t_slots;
    let mut transmitting = vec![false; n];
    let mut total_power = vec![0.0f64; n];

    for slot in 0..t_slots {
        field.clear();
        let set = elector.elect(slot, &mut field, &mut mac_rng, &mut fading_rng);
        observer(set);
        let members = &set.members;
        for &i in members {
            field.add_transmitter(i, &mut fading_rng);
            transmitting[i] = true;
            stats.active_slots[i] += 1;
        }

        // Received power from the whole set at every node; each link then subtracts its own
        // signal to get its interference.
        total_power.fill(0.0);
        for &tx in members {
            let g = gains.row(tx);
            match field.row(tx) {
                None => total_power.iter_mut().zip(g).for_each(|(p, g)| *p += g),
                Some(f) => total_power
                    .iter_mut()
                    .zip(g.iter().zip(f))
                    .for_each(|(p, (g, f))| *p += g * f),
            }
        }

        for &tx in members {
            let g = gains.row(tx);
            let fade = field.row(tx);
            let attempts = &mut stats.attempts[tx * n..(tx + 1) * n];
            let successes = &mut stats.successes[tx * n..(tx + 1) * n];
            for rx in 0..n {
                if transmitting[rx] {
                    continue;
                }
                attempts[rx] += 1;
                let signal = match fade {
                    None => g[rx],
                    Some(f) => g[rx] * f[rx],
                };
                let rest = total_power[rx] - signal;
                let margin = signal - k * rest;
                let ok = if margin.abs() <= TIE_BAND * (signal + k * total_power[rx]) {
                    sir_ok(
                        signal,
                        exact_interference(gains, &field, members, tx, rx),
                        k,
                    )
                } else {
                    margin >= 0.0
                };
                if ok {
                    successes[rx] += 1;
                }
            }
        }

        for &i in members {
            transmitting[i] = false;
        }
    }

    debug_assert!(stats.validate().is_ok());
    Ok(stats)
}

fn exact_interference(
    gains: &GainMatrix,
    field: &FadingField,
    members: &[usize],
    tx: usize,
    rx: usize,
) -> f64 {
    let mut total = 0.0;
    for &k in members {
        if k == tx || k == rx {
            continue;
        }
        let f = field.factor(k, rx).unwrap_or(1.0);
        total += f * gains.get(k, rx);
    }
    total
}

/// Convenience: a run seeded from a single `u64`.
pub fn run_slots_seeded(
    net: &NetworkInstance,
    spec: &ChannelSpec,
    mac: &MacSpec,
    t_slots: u64,
    seed: u64,
) -> Result<LinkStats> {
    run_slots(
        net,
        spec,
        mac,
        t_slots,
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
}
