//! Multi-sample Monte Carlo sweeps over a scheme's tuning parameter, scheme comparison and
//! the `c2 * sqrt(N / ln N)` scaling fit.
//!
//! Random streams are derived from `(master_seed, purpose, a, b)` by packing the four words
//! into a ChaCha key, so distinct cells never share a stream. Network instances depend only
//! on the sample index and are shared by every grid point of a sweep.

use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::{CapacityReport, CapacitySummary};
use crate::channel::ChannelSpec;
use crate::error::{Error, Result};
use crate::geometry::place_nodes;
use crate::mac::{MacSpec, Scheme, TransmitterSet};
use crate::simulator::{run_slots_on, LinkStats, Topology};

/// Extra placements tried after a degenerate one before giving up.
pub const MAX_REDRAWS: u64 = 3;

/// Default number of grid points.
pub const DEFAULT_GRID_POINTS: usize = 16;

const PURPOSE_INSTANCE: u64 = 1;
const PURPOSE_SLOTS: u64 = 2;

/// Independent ChaCha stream keyed by four words.
pub fn derive_stream(master_seed: u64, purpose: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, word) in key.chunks_exact_mut(8).zip([master_seed, purpose, a, b]) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Placement seed for `sample`; `redraw` counts retries after degenerate placements.
pub fn instance_seed(master_seed: u64, sample: u64, redraw: u64) -> u64 {
    derive_stream(master_seed, PURPOSE_INSTANCE, sample, redraw).next_u64()
}

/// Stream driving the slot loop of one `(grid point, sample)` cell.
pub fn cell_stream(master_seed: u64, grid_index: u64, sample: u64) -> ChaCha8Rng {
    derive_stream(master_seed, PURPOSE_SLOTS, grid_index, sample)
}

/// Places the network for `sample` and builds its caches, redrawing (with a warning) when
/// two nodes coincide.
pub fn sample_topology(
    n_nodes: usize,
    radius: f64,
    alpha: f64,
    master_seed: u64,
    sample: u64,
) -> Result<Topology> {
    let mut last = None;
    for redraw in 0..=MAX_REDRAWS {
        let net = place_nodes(n_nodes, radius, instance_seed(master_seed, sample, redraw))?;
        match Topology::new(net, alpha) {
            Ok(topo) => return Ok(topo),
            Err(e @ Error::DegenerateGeometry { .. }) => {
                log::warn!("sample {sample}: {e}; redrawing placement");
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// One simulation cell: the run's counters and the capacity derived from them.
pub fn run_cell<F: FnMut(&TransmitterSet)>(
    topo: &Topology,
    channel: &ChannelSpec,
    mac: &MacSpec,
    t_slots: u64,
    master_seed: u64,
    grid_index: u64,
    sample: u64,
    observer: F,
) -> Result<(LinkStats, CapacityReport)> {
    let mut rng = cell_stream(master_seed, grid_index, sample);
    let stats = run_slots_on(topo, channel, mac, t_slots, &mut rng, observer)?;
    let report = CapacityReport::from_stats(&stats);
    Ok((stats, report))
}

/// `points` values evenly spaced over `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (points - 1) as f64;
            (0..points)
                .map(|i| {
                    if i + 1 == points {
                        hi
                    } else {
                        lo + step * i as f64
                    }
                })
                .collect()
        }
    }
}

/// `points` values evenly spaced in log scale over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    linear_grid(lo.ln(), hi.ln(), points)
        .into_iter()
        .enumerate()
        .map(|(i, x)| match i {
            0 => lo,
            _ if i + 1 == points => hi,
            _ => x.exp(),
        })
        .collect()
}

/// Default search grid for a scheme: linear in `p` and `d`, logarithmic in `theta`.
///
/// Distances scale with the disk radius and thresholds with `radius^-alpha`, so the defaults
/// cover the same physical range for any normalization. The `d` and `theta` ranges run from
/// dense packings to a single transmitter per slot.
pub fn default_grid(scheme: Scheme, radius: f64, alpha: f64, points: usize) -> Vec<f64> {
    match scheme {
        Scheme::Aloha => linear_grid(0.01, 0.2, points),
        Scheme::Coloring => linear_grid(0.05 * radius, 0.8 * radius, points),
        Scheme::Csma => {
            let unit = radius.powf(-alpha);
            log_grid(1e-1 * unit, 1e7 * unit, points)
        }
    }
}

/// A parameter sweep for one scheme at one `(N, channel)` point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub scheme: Scheme,
    pub grid: Vec<f64>,
    pub n_nodes: usize,
    pub radius: f64,
    pub channel: ChannelSpec,
    pub samples: u64,
    pub t_slots: u64,
    pub master_seed: u64,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::invalid("parameter grid is empty"));
        }
        if let Some(w) = self.grid.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(Error::invalid(format!(
                "parameter grid must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        for &x in &self.grid {
            self.scheme.with_parameter(x)?;
        }
        if self.samples == 0 {
            return Err(Error::invalid("need at least one sample"));
        }
        if self.t_slots == 0 {
            return Err(Error::invalid("need at least one slot"));
        }
        if self.n_nodes < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 nodes, got {}",
                self.n_nodes
            )));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::invalid(format!(
                "disk radius must be positive, got {}",
                self.radius
            )));
        }
        Ok(())
    }
}

/// Aggregate over the samples of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub parameter: f64,
    pub mean_zeta: f64,
    /// Standard error of `mean_zeta` (sample standard deviation over `sqrt(samples)`).
    pub se_zeta: f64,
    pub disconnect_frac: f64,
    pub mean_sum_omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub plan: SweepPlan,
    pub points: Vec<GridPoint>,
    /// Grid value with the largest mean throughput; ties go to the smaller value.
    pub best_parameter: f64,
    pub best_zeta: f64,
}

impl SweepResult {
    pub fn best(&self) -> &GridPoint {
        self.points
            .iter()
            .find(|p| p.parameter == self.best_parameter)
            .expect("argmax is a grid point")
    }
}

/// Runs every `(grid point, sample)` cell in parallel and reduces in index order, so the
/// result is bit-identical for a given plan whatever the thread count.
pub fn run_sweep(plan: &SweepPlan) -> Result<SweepResult> {
    plan.validate()?;
    let topologies = (0..plan.samples)
        .into_par_iter()
        .map(|s| {
            sample_topology(
                plan.n_nodes,
                plan.radius,
                plan.channel.alpha(),
                plan.master_seed,
                s,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let samples = plan.samples as usize;
    let cells = plan
        .grid
        .par_iter()
        .enumerate()
        .flat_map_iter(|(g, &x)| (0..samples).map(move |s| (g, s, x)))
        .map(|(g, s, x)| {
            let mac = plan.scheme.with_parameter(x)?;
            let (_, report) = run_cell(
                &topologies[s],
                &plan.channel,
                &mac,
                plan.t_slots,
                plan.master_seed,
                g as u64,
                s as u64,
                |_| {},
            )?;
            log::debug!(
                "{} {}={x} sample {s}: zeta={}",
                plan.scheme,
                plan.scheme.parameter_name(),
                report.zeta
            );
            Ok(report.summary())
        })
        .collect::<Result<Vec<CapacitySummary>>>()?;

    let points: Vec<GridPoint> = plan
        .grid
        .iter()
        .zip(cells.chunks(samples))
        .map(|(&parameter, chunk)| aggregate(parameter, chunk))
        .collect();
    log::info!(
        "{} sweep at N={} done ({} grid points x {} samples)",
        plan.scheme,
        plan.n_nodes,
        plan.grid.len(),
        plan.samples
    );

    let best = argmax(&points);
    Ok(SweepResult {
        plan: plan.clone(),
        best_parameter: points[best].parameter,
        best_zeta: points[best].mean_zeta,
        points,
    })
}

fn aggregate(parameter: f64, cells: &[CapacitySummary]) -> GridPoint {
    let k = cells.len() as f64;
    let mean = cells.iter().map(|c| c.zeta).sum::<f64>() / k;
    let se = if cells.len() > 1 {
        let var = cells.iter().map(|c| (c.zeta - mean).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    } else {
        0.0
    };
    GridPoint {
        parameter,
        mean_zeta: mean,
        se_zeta: se,
        disconnect_frac: cells.iter().filter(|c| !c.connected).count() as f64 / k,
        mean_sum_omega: cells.iter().map(|c| c.sum_omega).sum::<f64>() / k,
    }
}

fn argmax(points: &[GridPoint]) -> usize {
    let mut best = 0;
    for (i, p) in points.iter().enumerate() {
        if p.mean_zeta > points[best].mean_zeta {
            best = i;
        }
    }
    best
}

/// CSV row; the column order is part of the output format.
#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    scheme: &'a str,
    n: usize,
    k_threshold: f64,
    alpha: f64,
    fading: String,
    parameter: f64,
    mean_zeta: f64,
    se_zeta: f64,
    disconnect_frac: f64,
    mean_sum_omega: f64,
    samples: u64,
    t_slots: u64,
    master_seed: u64,
}

pub const CSV_HEADER: &str = "scheme,n,k_threshold,alpha,fading,parameter,mean_zeta,se_zeta,disconnect_frac,mean_sum_omega,samples,t_slots,master_seed";

/// Writes one CSV row per grid point of every result, preceded by the header.
pub fn write_csv<W: Write>(results: &[&SweepResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut wrote_any = false;
    for r in results {
        let plan = &r.plan;
        for p in &r.points {
            w.serialize(CsvRow {
                scheme: plan.scheme.name(),
                n: plan.n_nodes,
                k_threshold: plan.channel.k_threshold(),
                alpha: plan.channel.alpha(),
                fading: plan.channel.fading().to_string(),
                parameter: p.parameter,
                mean_zeta: p.mean_zeta,
                se_zeta: p.se_zeta,
                disconnect_frac: p.disconnect_frac,
                mean_sum_omega: p.mean_sum_omega,
                samples: plan.samples,
                t_slots: plan.t_slots,
                master_seed: plan.master_seed,
            })?;
            wrote_any = true;
        }
    }
    if !wrote_any {
        w.write_record(CSV_HEADER.split(','))?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Least-squares fit of `zeta = c2 * sqrt(N / ln N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub c2: f64,
    /// Root-mean-square of `(zeta - fit) / zeta` over the points.
    pub rms_relative_residual: f64,
}

pub fn scaling_regressor(n: usize) -> f64 {
    let n = n as f64;
    (n / n.ln()).sqrt()
}

pub fn fit_scaling(points: &[(usize, f64)]) -> Result<ScalingFit> {
    let mut ns: Vec<usize> = points.iter().map(|p| p.0).collect();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < 2 {
        return Err(Error::invalid(
            "scaling fit needs at least two points with distinct N",
        ));
    }
    if let Some(&(n, z)) = points.iter().find(|&&(n, z)| n < 2 || !(z > 0.0)) {
        return Err(Error::invalid(format!(
            "scaling fit needs N >= 2 and positive throughput, got N = {n}, zeta = {z}"
        )));
    }
    let (sxy, sxx) = points.iter().fold((0.0, 0.0), |(sxy, sxx), &(n, z)| {
        let x = scaling_regressor(n);
        (sxy + x * z, sxx + x * x)
    });
    let c2 = sxy / sxx;
    let msr = points
        .iter()
        .map(|&(n, z)| ((z - c2 * scaling_regressor(n)) / z).powi(2))
        .sum::<f64>()
        / points.len() as f64;
    Ok(ScalingFit {
        c2,
        rms_relative_residual: msr.sqrt(),
    })
}

/// Best operating point of one scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeOptimum {
    pub scheme: Scheme,
    pub parameter: f64,
    pub zeta: f64,
    pub se_zeta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub n_nodes: usize,
    pub channel: ChannelSpec,
    pub optima: Vec<SchemeOptimum>,
    pub aloha_over_coloring: f64,
    pub csma_over_coloring: f64,
    pub aloha_over_csma: f64,
}

impl Comparison {
    pub fn optimum(&self, scheme: Scheme) -> &SchemeOptimum {
        self.optima
            .iter()
            .find(|o| o.scheme == scheme)
            .expect("every scheme is present")
    }
}

/// Sweeps all three schemes (one plan each, same `N` and channel) and compares their optima.
pub fn compare_schemes(plans: &[SweepPlan]) -> Result<(Comparison, Vec<SweepResult>)> {
    let results = plans.iter().map(run_sweep).collect::<Result<Vec<_>>>()?;
    let comparison = compare_results(&results)?;
    Ok((comparison, results))
}

/// Builds the comparison record from already-run sweeps.
pub fn compare_results(results: &[SweepResult]) -> Result<Comparison> {
    let first = results
        .first()
        .ok_or_else(|| Error::invalid("no sweeps to compare"))?;
    for r in results {
        if r.plan.n_nodes != first.plan.n_nodes || r.plan.channel != first.plan.channel {
            return Err(Error::invalid(
                "schemes must be compared at the same N and channel",
            ));
        }
    }
    let mut optima = Vec::with_capacity(3);
    for scheme in Scheme::ALL {
        let mut matching = results.iter().filter(|r| r.plan.scheme == scheme);
        let r = matching
            .next()
            .ok_or_else(|| Error::invalid(format!("no {scheme} sweep to compare")))?;
        if matching.next().is_some() {
            return Err(Error::invalid(format!("more than one {scheme} sweep")));
        }
        optima.push(SchemeOptimum {
            scheme,
            parameter: r.best_parameter,
            zeta: r.best_zeta,
            se_zeta: r.best().se_zeta,
        });
    }
    let (aloha, coloring, csma) = (optima[0].zeta, optima[1].zeta, optima[2].zeta);
    Ok(Comparison {
        n_nodes: first.plan.n_nodes,
        channel: first.plan.channel,
        aloha_over_coloring: aloha / coloring,
        csma_over_coloring: csma / coloring,
        aloha_over_csma: aloha / csma,
        optima,
    })
}
