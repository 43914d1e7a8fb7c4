// temporary tuning probe, removed before release
use overlasso::asymptotics::{run_asymptotic_study, AsymptoticConfig, DesignCovariance};
use overlasso::experiments::{
    run_overlap_study, run_sample_size_study, ExperimentConfig, ExperimentKind,
};
use overlasso::instance::{generate_instance_with, Normalization};
use overlasso::norm::structured_sparsity;
use overlasso::theory::{compute_constants, estimate_kappa, verify_theorem1, LambdaVariant};
use overlasso::GroupCollection;

#[test]
#[ignore]
fn probe_theorem1_desk() {
    let t0 = std::time::Instant::now();
    let gc = GroupCollection::contiguous(64, 8, 2).unwrap();
    println!("M = {}, overlap = {}", gc.group_count(), gc.overlap_degree());
    for k_active in [1usize, 2, 3] {
        let inst =
            generate_instance_with(&gc, 128, k_active, 0.1, 2024, Normalization::ColumnUnitDiag)
                .unwrap();
        let sp = structured_sparsity(inst.beta0().unwrap(), &gc, 1e-8).unwrap();
        let s = sp.group_count.max(1);
        let c = compute_constants(&inst, &gc, 9.0, 0.1, s).unwrap();
        let est = estimate_kappa(&inst, &gc, s, 600, 7).unwrap();
        println!(
            "k={} s={} lambda={:.4} q={:.3} nominal={:.4} kappa_hat={:.4} kappa_suff={:.4}",
            k_active,
            s,
            c.lambda_theorem,
            c.q,
            c.nominal_rate(LambdaVariant::Theorem),
            est.kappa_hat,
            est.kappa_sufficient
        );
        for variant in [LambdaVariant::Theorem, LambdaVariant::Alternate] {
            let rep = verify_theorem1(&inst, &gc, &c, est.kappa_hat, variant, 200, 99).unwrap();
            println!(
                "  {:?}: hold={:.3} (pred {:.3}, est {:.3}) nominal={:.3} excl={} pred_rhs={:.3} est_rhs={:.3}",
                variant,
                rep.empirical_hold_rate,
                rep.prediction_hold_rate,
                rep.estimation_hold_rate,
                rep.nominal_rate,
                rep.excluded,
                rep.prediction_rhs,
                rep.estimation_rhs
            );
            let mean_pred: f64 = rep
                .outcomes
                .iter()
                .filter(|o| o.converged)
                .map(|o| o.prediction_lhs)
                .sum::<f64>()
                / 200.0;
            let max_pred: f64 = rep
                .outcomes
                .iter()
                .filter(|o| o.converged)
                .map(|o| o.prediction_lhs)
                .fold(0.0, f64::max);
            let max_est: f64 = rep
                .outcomes
                .iter()
                .filter(|o| o.converged)
                .map(|o| o.estimation_lhs)
                .fold(0.0, f64::max);
            println!(
                "  mean_pred_lhs={:.4} max_pred_lhs={:.4} max_est_lhs={:.4}",
                mean_pred, max_pred, max_est
            );
        }
    }
    println!("elapsed: {:.1?}", t0.elapsed());
}

#[test]
#[ignore]
fn probe_overlap_study() {
    let t0 = std::time::Instant::now();
    let config = ExperimentConfig::new(ExperimentKind::OverlapStudy, 0.25, 20, 42);
    let res = run_overlap_study(&config).unwrap();
    for c in &res.cells {
        println!(
            "overlap={} k={} support={} overlap: {:.4} ± {:.4} | lasso: {:.4} ± {:.4} ({:.1}s)",
            c.x_value,
            c.k_active,
            c.realized_support,
            c.overlap_mean,
            c.overlap_se,
            c.lasso_mean,
            c.lasso_se,
            c.runtime_secs
        );
    }
    let base = &res.cells[0];
    for o in [2usize, 3, 4] {
        let c = &res.cells[o - 1];
        let se = (c.overlap_se.powi(2) + base.overlap_se.powi(2)).sqrt();
        println!(
            "7a overlap {}: diff {:.4} vs se {:.4} -> {}",
            o,
            c.overlap_mean - base.overlap_mean,
            se,
            c.overlap_mean - base.overlap_mean >= se
        );
    }
    let c5 = &res.cells[4];
    let se5 = (c5.overlap_se.powi(2) + base.overlap_se.powi(2)).sqrt();
    println!(
        "7b overlap5: |diff| {:.4} vs 2se {:.4} -> {}",
        (c5.overlap_mean - base.overlap_mean).abs(),
        2.0 * se5,
        (c5.overlap_mean - base.overlap_mean).abs() <= 2.0 * se5
    );
    println!("elapsed: {:.1?}", t0.elapsed());
}

#[test]
#[ignore]
fn probe_sample_size_study() {
    let t0 = std::time::Instant::now();
    let config = ExperimentConfig::new(ExperimentKind::SampleSizeStudy, 0.25, 20, 42);
    let res = run_sample_size_study(&config).unwrap();
    for c in &res.cells {
        println!(
            "n={} k={} overlap: {:.4} ± {:.4} | lasso: {:.4} ± {:.4} ({:.1}s)",
            c.x_value, c.k_active, c.overlap_mean, c.overlap_se, c.lasso_mean, c.lasso_se, c.runtime_secs
        );
    }
    let last = res.cells.last().unwrap();
    let first_within = |extract: fn(&overlasso::experiments::CellResult) -> f64, limit: f64| {
        res.cells.iter().position(|c| extract(c) <= 1.1 * limit)
    };
    let p_o = first_within(|c| c.overlap_mean, last.overlap_mean);
    let p_l = first_within(|c| c.lasso_mean, last.lasso_mean);
    println!("7c plateau: overlap at {:?}, lasso at {:?}", p_o, p_l);
    println!("elapsed: {:.1?}", t0.elapsed());
}

#[test]
#[ignore]
fn probe_asymptotics() {
    let t0 = std::time::Instant::now();
    let gc = GroupCollection::new(
        10,
        vec![
            vec![0, 1],
            vec![2, 3],
            vec![4, 5],
            vec![6, 7],
            vec![8, 9],
        ],
    )
    .unwrap();
    let beta0 = nalgebra::DVector::from_fn(10, |i, _| if i < 4 { 1.0 } else { 0.0 });
    let config = AsymptoticConfig {
        n_grid: vec![250, 1000, 4000],
        gamma: 1.0,
        lambda_scale: 1.0,
        lambda_exponent: 0.7,
        trials: 300,
        seed: 31,
        sigma: 1.0,
        design: DesignCovariance::Identity,
    };
    let report = run_asymptotic_study(&gc, &beta0, &config).unwrap();
    for c in &report.cells {
        println!(
            "n={} recovery={:.3} fp={:.3} frob={:.4} excl={}",
            c.n, c.support_recovery_rate, c.false_positive_rate, c.frobenius_rel_error, c.excluded
        );
    }
    // wrong-group configuration
    let beta_bad = nalgebra::DVector::from_fn(10, |i, _| if i < 3 { 1.0 } else { 0.0 });
    let config_bad = AsymptoticConfig {
        n_grid: vec![1000],
        trials: 300,
        ..config
    };
    let rep = run_asymptotic_study(&gc, &beta_bad, &config_bad).unwrap();
    println!(
        "wrong-group fp rate: {:.3}",
        rep.cells[0].false_positive_rate
    );
    println!("elapsed: {:.1?}", t0.elapsed());
}

#[test]
#[ignore]
fn probe_overlap_full_scale() {
    let t0 = std::time::Instant::now();
    let mut config = ExperimentConfig::new(ExperimentKind::OverlapStudy, 1.0, 20, 42);
    config.grid_size = 40;
    let res = run_overlap_study(&config).unwrap();
    for c in &res.cells {
        println!(
            "overlap={} k={} support={} overlap: {:.4} ± {:.4} | lasso: {:.4} ± {:.4} ({:.0}s)",
            c.x_value, c.k_active, c.realized_support, c.overlap_mean, c.overlap_se,
            c.lasso_mean, c.lasso_se, c.runtime_secs
        );
    }
    let base = &res.cells[0];
    for o in [2usize, 3, 4, 5] {
        let c = &res.cells[o - 1];
        let se = (c.overlap_se.powi(2) + base.overlap_se.powi(2)).sqrt();
        println!(
            "o={}: diff {:.4} vs se {:.4} (1se test {}, within-2se test {})",
            o,
            c.overlap_mean - base.overlap_mean,
            se,
            c.overlap_mean - base.overlap_mean >= se,
            (c.overlap_mean - base.overlap_mean).abs() <= 2.0 * se
        );
    }
    println!("elapsed: {:.1?}", t0.elapsed());
}
