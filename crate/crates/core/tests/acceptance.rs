//! End-to-end acceptance checks. Runs as a plain binary (`cargo test --test acceptance`),
//! prints one line per criterion and exits non-zero if any fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command as Process;
use std::time::Instant;

use mhcap::capacity::{min_transmissions, CapacityReport, Matrix};
use mhcap::channel::{draw_fading, success, ChannelSpec, Fading};
use mhcap::geometry::{place_nodes, DistanceMatrix, NetworkInstance, Point};
use mhcap::mac::{elect_aloha, elect_coloring, elect_csma, MacSpec, Scheme};
use mhcap::simulator::{run_slots_on, LinkStats, Topology};
use mhcap::sweep::{
    compare_results, default_grid, fit_scaling, linear_grid, log_grid, run_sweep, SweepPlan,
    SweepResult, DEFAULT_GRID_POINTS,
};
use mhcap::{FadingField, TransmitterSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn channel(fading: Fading) -> ChannelSpec {
    ChannelSpec::new(fading, 4.0, 20.0).unwrap()
}

fn sweep(
    scheme: Scheme,
    grid: Vec<f64>,
    n: usize,
    fading: Fading,
    samples: u64,
    t: u64,
) -> SweepResult {
    run_sweep(&SweepPlan {
        scheme,
        grid,
        n_nodes: n,
        radius: 1.0,
        channel: channel(fading),
        samples,
        t_slots: t,
        master_seed: 2024,
    })
    .unwrap()
}

fn c1_aloha_optimum() -> Outcome {
    let r = sweep(
        Scheme::Aloha,
        linear_grid(0.01, 0.2, 16),
        400,
        Fading::None,
        20,
        2000,
    );
    let centre = 0.25 / 400f64.ln();
    let (lo, hi) = (0.7 * centre, 1.3 * centre);
    check(
        (lo..=hi).contains(&r.best_parameter),
        format!(
            "p* = {:.4} (zeta {:.4}), band [{lo:.4}, {hi:.4}]",
            r.best_parameter, r.best_zeta
        ),
    )
}

fn c2_scaling_fit() -> Outcome {
    let mut points = Vec::new();
    for n in [200, 400, 800] {
        let r = sweep(
            Scheme::Aloha,
            linear_grid(0.02, 0.07, 11),
            n,
            Fading::None,
            6,
            2000,
        );
        points.push((n, r.best_zeta));
    }
    let fit = fit_scaling(&points).map_err(|e| e.to_string())?;
    check(
        (0.05..=0.09).contains(&fit.c2) && fit.rms_relative_residual < 0.15,
        format!(
            "c2 = {:.4}, rms relative residual = {:.3}, optima {points:?}",
            fit.c2, fit.rms_relative_residual
        ),
    )
}

struct Optima {
    aloha: SweepResult,
    coloring: SweepResult,
    csma: SweepResult,
}

fn n500(fading: Fading, with_csma: bool) -> (SweepResult, SweepResult, Option<SweepResult>) {
    let aloha = sweep(
        Scheme::Aloha,
        linear_grid(0.02, 0.06, 9),
        500,
        fading,
        8,
        3000,
    );
    let coloring = sweep(
        Scheme::Coloring,
        linear_grid(0.25, 0.55, 13),
        500,
        fading,
        6,
        3000,
    );
    let csma = with_csma.then(|| {
        sweep(
            Scheme::Csma,
            log_grid(10.0, 1000.0, 11),
            500,
            fading,
            6,
            3000,
        )
    });
    (aloha, coloring, csma)
}

fn c3_scheme_ratios(plain: &Optima) -> Outcome {
    let cmp = compare_results(&[
        plain.aloha.clone(),
        plain.coloring.clone(),
        plain.csma.clone(),
    ])
    .map_err(|e| e.to_string())?;
    let (a, c) = (cmp.aloha_over_coloring, cmp.csma_over_coloring);
    check(
        (0.30..=0.95).contains(&a) && (0.80..=1.05).contains(&c),
        format!(
            "aloha/coloring = {a:.3} (want [0.30, 0.95]), csma/coloring = {c:.3} (want [0.80, 1.05]); \
             zeta* = {:.3} / {:.3} / {:.3}",
            plain.aloha.best_zeta, plain.coloring.best_zeta, plain.csma.best_zeta
        ),
    )
}

fn c4_fading_degradation(plain: &Optima, faded: &(SweepResult, SweepResult)) -> Outcome {
    let (aloha, coloring) = faded;
    let drop_aloha = 1.0 - aloha.best_zeta / plain.aloha.best_zeta;
    let drop_coloring = 1.0 - coloring.best_zeta / plain.coloring.best_zeta;
    check(
        (0.05..=0.35).contains(&drop_aloha) && drop_coloring > drop_aloha,
        format!(
            "aloha drop {:.1}% (want 5-35%), coloring drop {:.1}% (want > aloha)",
            100.0 * drop_aloha,
            100.0 * drop_coloring
        ),
    )
}

/// The tuned parameter under Rayleigh fading stays within one step of the default grid of the
/// no-fading one.
fn fading_insensitive_tuning(plain: &Optima, faded: &(SweepResult, SweepResult)) -> Outcome {
    let shift = |a: &SweepResult, b: &SweepResult| {
        let grid = default_grid(a.plan.scheme, 1.0, 4.0, DEFAULT_GRID_POINTS);
        let step = grid[1] - grid[0];
        (
            (a.best_parameter - b.best_parameter).abs() / step,
            a.best_parameter,
            b.best_parameter,
        )
    };
    let (sa, pa, fa) = shift(&plain.aloha, &faded.0);
    let (sc, pc, fc) = shift(&plain.coloring, &faded.1);
    check(
        sa <= 1.0 + 1e-9 && sc <= 1.0 + 1e-9,
        format!("aloha p* {pa:.4} -> {fa:.4} ({sa:.2} steps), coloring d* {pc:.4} -> {fc:.4} ({sc:.2} steps)"),
    )
}

fn c5_single_interferer() -> Outcome {
    let combos = [
        (1.0, 2.0, 20.0, 4.0),
        (1.0, 1.0, 1.0, 3.0),
        (1.0, 3.0, 10.0, 2.5),
        (0.5, 1.0, 5.0, 4.0),
        (1.0, 1.5, 2.0, 3.0),
        (2.0, 1.0, 0.5, 4.0),
    ];
    let slots = 100_000;
    let mut report = Vec::new();
    let mut ok = true;
    for (i, &(d1, d2, k, alpha)) in combos.iter().enumerate() {
        // receiver at the origin, wanted sender on the +x axis, interferer on the -x axis
        let net = NetworkInstance::from_positions(
            vec![
                Point::new(0.0, 0.0),
                Point::new(d1, 0.0),
                Point::new(-d2, 0.0),
            ],
            d1.max(d2),
            0,
        )
        .unwrap();
        let spec = ChannelSpec::new(Fading::Rayleigh, alpha, k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(500 + i as u64);
        let hits = (0..slots)
            .filter(|_| {
                let field = draw_fading(&spec, 3, &[1, 2], &mut rng);
                success(&net, &spec, &field, &[1, 2], 1, 0).unwrap()
            })
            .count();
        let expected = 1.0 / (1.0 + k * (d1 / d2).powf(alpha));
        let freq = hits as f64 / slots as f64;
        let sigma = (expected * (1.0 - expected) / slots as f64).sqrt();
        let z = (freq - expected) / sigma;
        ok &= z.abs() <= 3.0;
        report.push(format!("{expected:.4}:{freq:.4}"));
    }
    check(ok, format!("expected:observed {}", report.join(" ")))
}

fn c6_shortest_paths() -> Outcome {
    fn fixpoint(t: &Matrix) -> Matrix {
        let n = t.len();
        let mut m = t.clone();
        for i in 0..n {
            m.set(i, i, 0.0);
        }
        loop {
            let mut changed = false;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let via = m.get(i, k) + t.get(k, j);
                        if via < m.get(i, j) {
                            m.set(i, j, via);
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                return m;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..=64);
        let inf_rate = rng.random_range(0.0..0.8);
        let mut t = Matrix::filled(n, 0.0);
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let v = if rng.random::<f64>() < inf_rate {
                    f64::INFINITY
                } else {
                    1.0 / rng.random_range(0.01..1.0)
                };
                t.set(i, j, v);
            }
        }
        if min_transmissions(&t).as_slice() != fixpoint(&t).as_slice() {
            mismatches += 1;
        }
    }

    let stats = LinkStats::from_counts(2, 4, vec![0, 2, 2, 0], vec![0, 1, 1, 0], vec![2, 2])
        .map_err(|e| e.to_string())?;
    let zeta = CapacityReport::from_stats(&stats).zeta;
    check(
        mismatches == 0 && zeta == 0.5,
        format!("{mismatches}/200 shortest-path mismatches; two-node zeta = {zeta:?}"),
    )
}

fn c7_mac_invariants() -> Outcome {
    let sets = 1000;
    let n = 150;
    let net = place_nodes(n, 1.0, 70).unwrap();
    let dist = DistanceMatrix::new(&net);
    let spec = channel(Fading::None);
    let gain = |i: usize, j: usize| dist.get(i, j).powf(-spec.alpha());
    let mut failures: Vec<String> = Vec::new();

    let d = 0.2;
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    for _ in 0..sets {
        let s = elect_coloring(&net, d, &mut rng).unwrap().members;
        let spaced = s
            .iter()
            .all(|&a| s.iter().all(|&b| a == b || dist.get(a, b) >= d));
        let maximal = (0..n)
            .filter(|j| !s.contains(j))
            .all(|j| s.iter().any(|&a| dist.get(a, j) < d));
        if !(spaced && maximal) {
            failures.push("coloring spacing/maximality".into());
            break;
        }
    }

    let theta = 50.0;
    let mut field = FadingField::new(Fading::None, n);
    let mut frng = ChaCha8Rng::seed_from_u64(72);
    let mut rng = ChaCha8Rng::seed_from_u64(73);
    for _ in 0..sets {
        let s = elect_csma(&net, &spec, theta, &mut field, &mut rng, &mut frng)
            .unwrap()
            .members;
        let prefix =
            (0..s.len()).all(|k| s[..k].iter().map(|&a| gain(a, s[k])).sum::<f64>() < theta);
        let maximal = (0..n)
            .filter(|j| !s.contains(j))
            .all(|j| s.iter().map(|&a| gain(a, j)).sum::<f64>() >= theta);
        if !(prefix && maximal) {
            failures.push("csma admission prefix/maximality".into());
            break;
        }
    }

    let (big, p) = (10_000, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(74);
    let sizes: Vec<f64> = (0..sets)
        .map(|_| elect_aloha(big, p, &mut rng).unwrap().len() as f64)
        .collect();
    let mu = big as f64 * p;
    let var = mu * (1.0 - p);
    let mean = sizes.iter().sum::<f64>() / sets as f64;
    let sample_var = sizes.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (sets as f64 - 1.0);
    let within = sizes.iter().all(|x| (x - mu).abs() <= 5.0 * var.sqrt());
    if !((mean - mu).abs() <= 4.0 * (var / sets as f64).sqrt()
        && (0.85..=1.15).contains(&(sample_var / var))
        && within)
    {
        failures.push(format!(
            "aloha |S| mean {mean:.1} var {sample_var:.1} (binomial {mu} / {var})"
        ));
    }

    // shared streams: every grid value sees the same seeds
    let mean_size = |elect: &mut dyn FnMut(&mut ChaCha8Rng, &mut ChaCha8Rng) -> usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(75);
        let mut frng = ChaCha8Rng::seed_from_u64(76);
        (0..sets).map(|_| elect(&mut rng, &mut frng)).sum::<usize>() as f64 / sets as f64
    };
    let by_d: Vec<f64> = [0.05, 0.1, 0.2, 0.4, 0.8]
        .iter()
        .map(|&d| mean_size(&mut |rng, _| elect_coloring(&net, d, rng).unwrap().len()))
        .collect();
    let by_theta: Vec<f64> = [1.0, 10.0, 100.0, 1e3, 1e4]
        .iter()
        .map(|&theta| {
            mean_size(&mut |rng, frng| {
                elect_csma(&net, &spec, theta, &mut field, rng, frng)
                    .unwrap()
                    .len()
            })
        })
        .collect();
    if !by_d.windows(2).all(|w| w[0] > w[1]) {
        failures.push(format!("mean |S| not decreasing in d: {by_d:?}"));
    }
    if !by_theta.windows(2).all(|w| w[0] < w[1]) {
        failures.push(format!("mean |S| not increasing in theta: {by_theta:?}"));
    }

    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{sets} sets per scheme; mean |S| by d {by_d:?}, by theta {by_theta:?}")
        } else {
            failures.join("; ")
        },
    )
}

/// Elected sets of a run and, per slot, the delivered `(tx, rx)` pairs.
type Patterns = (Vec<Vec<usize>>, Vec<Vec<(usize, usize)>>);

fn success_patterns(net: &NetworkInstance, mac: &MacSpec, slots: u64) -> Patterns {
    let spec = channel(Fading::None);
    let topo = Topology::new(net.clone(), spec.alpha()).unwrap();
    let field = FadingField::new(Fading::None, net.len());
    let mut sets = Vec::new();
    run_slots_on(
        &topo,
        &spec,
        mac,
        slots,
        &mut ChaCha8Rng::seed_from_u64(80),
        |s: &TransmitterSet| sets.push(s.members.clone()),
    )
    .unwrap();
    let patterns = sets
        .iter()
        .map(|s| {
            let mut delivered = Vec::new();
            for &i in s {
                for j in (0..net.len()).filter(|j| !s.contains(j)) {
                    if success(net, &spec, &field, s, i, j).unwrap() {
                        delivered.push((i, j));
                    }
                }
            }
            delivered
        })
        .collect();
    (sets, patterns)
}

fn c8_scale_invariance() -> Outcome {
    let net = place_nodes(40, 1.0, 81).unwrap();
    let alpha = 4.0;
    let macs = |c: f64| {
        [
            MacSpec::Aloha { p: 0.15 },
            MacSpec::Coloring { d: 0.3 * c },
            MacSpec::Csma {
                theta: 30.0 * c.powf(-alpha),
            },
        ]
    };
    let slots = 500;
    let base: Vec<_> = macs(1.0)
        .iter()
        .map(|m| success_patterns(&net, m, slots))
        .collect();
    let mut delivered = 0;
    for c in [0.5, 2.0, 10.0] {
        let scaled = net.scaled(c).unwrap();
        for (mac, reference) in macs(c).iter().zip(&base) {
            let run = success_patterns(&scaled, mac, slots);
            if &run != reference {
                return Err(format!("{} pattern differs at scale {c}", mac.scheme()));
            }
            delivered += run.1.iter().map(Vec::len).sum::<usize>();
        }
    }
    Ok(format!(
        "3 schemes x 3 scales x {slots} slots identical ({delivered} deliveries compared)"
    ))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Process::new(env!("CARGO_BIN_EXE_mhcap"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn c9_replay() -> Outcome {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();
    let without_timestamp = |path: &Path| -> Result<Value, String> {
        let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
        let mut v: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        v.as_object_mut()
            .ok_or("not an object")?
            .remove("generated_at");
        Ok(v)
    };
    let runs: [&[&str]; 2] = [
        &[
            "sweep",
            "--scheme",
            "csma",
            "--n",
            "40",
            "--grid-points",
            "5",
            "--samples",
            "4",
            "--slots",
            "500",
            "--fading",
            "rayleigh",
            "--seed",
            "90",
        ],
        &[
            "compare",
            "--n",
            "30",
            "--samples",
            "3",
            "--slots",
            "400",
            "--seed",
            "91",
            "--grid-aloha",
            "0.05,0.1",
            "--grid-coloring",
            "0.3,0.5",
            "--grid-csma",
            "10,100",
        ],
    ];
    for (i, args) in runs.iter().enumerate() {
        let (json1, csv1, json2, csv2) = (
            p(&format!("{i}a.json")),
            p(&format!("{i}a.csv")),
            p(&format!("{i}b.json")),
            p(&format!("{i}b.csv")),
        );
        let mut first: Vec<&str> = args.to_vec();
        first.extend(["--out", &json1, "--csv", &csv1]);
        run_cli(&first)?;
        run_cli(&[args[0], "--config", &json1, "--out", &json2, "--csv", &csv2])?;
        let same_csv = fs::read(&csv1).map_err(|e| e.to_string())?
            == fs::read(&csv2).map_err(|e| e.to_string())?;
        let same_json =
            without_timestamp(Path::new(&json1))? == without_timestamp(Path::new(&json2))?;
        if !(same_csv && same_json) {
            return Err(format!(
                "{} replay differs (csv same: {same_csv}, json same: {same_json})",
                args[0]
            ));
        }
    }
    Ok("sweep and compare outputs replayed from their embedded config are identical".into())
}

fn main() {
    let mut failed = 0;
    let mut report = |label: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(&mut *f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {label}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {label}: {detail} ({secs:.1}s)");
            }
        }
    };

    report("C1 ALOHA optimum location", &mut c1_aloha_optimum);
    report("C2 scaling fit", &mut c2_scaling_fit);
    let mut plain = None;
    report("C3 scheme ratios without fading", &mut || {
        let (aloha, coloring, csma) = n500(Fading::None, true);
        let optima = Optima {
            aloha,
            coloring,
            csma: csma.unwrap(),
        };
        let outcome = c3_scheme_ratios(&optima);
        plain = Some(optima);
        outcome
    });
    let mut faded = None;
    report("C4 fading degradation", &mut || match &plain {
        Some(p) => {
            let (aloha, coloring, _) = n500(Fading::Rayleigh, false);
            c4_fading_degradation(p, faded.insert((aloha, coloring)))
        }
        None => Err("no-fading sweeps unavailable".into()),
    });
    report(
        "C4b fading-insensitive tuning",
        &mut || match plain.as_ref().zip(faded.as_ref()) {
            Some((p, f)) => fading_insensitive_tuning(p, f),
            None => Err("no-fading sweeps unavailable".into()),
        },
    );
    report(
        "C5 single-interferer Rayleigh oracle",
        &mut c5_single_interferer,
    );
    report("C6 shortest paths and throughput", &mut c6_shortest_paths);
    report("C7 MAC invariants", &mut c7_mac_invariants);
    report("C8 scale invariance", &mut c8_scale_invariance);
    report("C9 replay from embedded config", &mut c9_replay);

    if failed > 0 {
        println!("{failed} acceptance checks failed");
        std::process::exit(1);
    }
    println!("all acceptance checks passed");
}
