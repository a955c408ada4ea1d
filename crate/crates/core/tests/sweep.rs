use mhcap::channel::{ChannelSpec, Fading};
use mhcap::mac::Scheme;
use mhcap::sweep::{
    compare_results, fit_scaling, linear_grid, log_grid, run_sweep, scaling_regressor, write_csv,
    SweepPlan, CSV_HEADER,
};

fn plan(scheme: Scheme, grid: Vec<f64>, n: usize, samples: u64, t: u64) -> SweepPlan {
    SweepPlan {
        scheme,
        grid,
        n_nodes: n,
        radius: 1.0,
        channel: ChannelSpec::new(Fading::None, 4.0, 20.0).unwrap(),
        samples,
        t_slots: t,
        master_seed: 11,
    }
}

#[test]
fn silent_and_saturated_aloha_have_zero_throughput() {
    let r = run_sweep(&plan(Scheme::Aloha, vec![0.0, 1.0], 5, 3, 200)).unwrap();
    for p in &r.points {
        assert_eq!(p.mean_zeta, 0.0);
        assert_eq!(p.disconnect_frac, 1.0);
    }
    assert_eq!(r.best_parameter, 0.0);
}

#[test]
fn sweeps_are_reproducible() {
    let p = plan(Scheme::Csma, log_grid(1.0, 1e3, 4), 30, 3, 200);
    assert_eq!(run_sweep(&p).unwrap(), run_sweep(&p).unwrap());
    let mut other = p.clone();
    other.master_seed += 1;
    assert_ne!(
        run_sweep(&p).unwrap().points,
        run_sweep(&other).unwrap().points
    );
}

#[test]
fn standard_error_shrinks_with_samples() {
    let few = run_sweep(&plan(Scheme::Aloha, vec![0.1], 15, 8, 2000)).unwrap();
    let many = run_sweep(&plan(Scheme::Aloha, vec![0.1], 15, 32, 2000)).unwrap();
    let ratio = many.points[0].se_zeta / few.points[0].se_zeta;
    assert!((0.25..=0.9).contains(&ratio), "ratio {ratio}");
}

#[test]
fn scaling_fit_recovers_exact_constant() {
    let points: Vec<(usize, f64)> = [100, 300, 1000]
        .iter()
        .map(|&n| (n, 0.5 * scaling_regressor(n)))
        .collect();
    let fit = fit_scaling(&points).unwrap();
    assert!((fit.c2 - 0.5).abs() < 1e-12);
    assert!(fit.rms_relative_residual < 1e-12);

    assert!(fit_scaling(&[(100, 1.0)]).is_err());
    assert!(fit_scaling(&[(100, 1.0), (100, 2.0)]).is_err());
    assert!(fit_scaling(&[(100, 1.0), (200, 0.0)]).is_err());
    assert!(fit_scaling(&[(1, 1.0), (200, 1.0)]).is_err());
}

#[test]
fn comparison_needs_matching_sweeps() {
    let a = run_sweep(&plan(Scheme::Aloha, vec![0.05], 10, 2, 100)).unwrap();
    let c = run_sweep(&plan(Scheme::Coloring, vec![0.5], 10, 2, 100)).unwrap();
    let s = run_sweep(&plan(Scheme::Csma, vec![10.0], 10, 2, 100)).unwrap();
    let cmp = compare_results(&[a.clone(), c.clone(), s.clone()]).unwrap();
    assert_eq!(cmp.optimum(Scheme::Coloring).parameter, 0.5);
    assert!(compare_results(&[a.clone(), c.clone()]).is_err());
    assert!(compare_results(&[a.clone(), a.clone(), s.clone()]).is_err());
    let bigger = run_sweep(&plan(Scheme::Csma, vec![10.0], 12, 2, 100)).unwrap();
    assert!(compare_results(&[a, c, bigger]).is_err());
}

#[test]
fn csv_has_one_row_per_grid_point() {
    let r = run_sweep(&plan(Scheme::Aloha, linear_grid(0.05, 0.15, 3), 8, 2, 100)).unwrap();
    let mut buf = Vec::new();
    write_csv(&[&r], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 4);
    assert!(
        lines[1].starts_with("aloha,8,20.0,4.0,none,0.05,"),
        "{}",
        lines[1]
    );
}
