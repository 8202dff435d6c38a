//! Acceptance suite: one test per contract criterion, each printing a
//! PASS/FAIL line. Timed criteria lock a shared mutex so wall-clock budgets
//! are measured without cross-test contention.

use std::process::Command;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use synthreg_core::disclosure::{birthyear_concordance, summarize_concordance, Pairing};
use synthreg_core::flows::{self, GrossVariable, ShareVariable};
use synthreg_core::gmm::{self, build_design};
use synthreg_core::pmse::{self, PropensityModel};
use synthreg_core::register::{EntityHistory, Register, SourceLabel, YearRange};
use synthreg_core::seed::derive_rng;
use synthreg_core::sim::{simulate_dynamic_panel, simulate_register, SimConfig};
use synthreg_core::stats;
use synthreg_core::synth::synthesize_register;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL
        .lock()
        .unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn pass(number: u32, name: &str) {
    println!("ACCEPTANCE {number:02} ({name}): PASS");
}

fn desk_scale_config(seed: u64) -> SimConfig {
    SimConfig {
        n_industries: 5,
        entities_per_industry: 2000,
        window: YearRange::new(1991, 2015).unwrap(),
        seed,
        ..SimConfig::default()
    }
}

#[test]
fn acceptance_01_count_preservation() {
    let _guard = serial();
    let conf = simulate_register(&desk_scale_config(20240901)).unwrap();
    let started = Instant::now();
    let (syn, report) = synthesize_register(&conf, 20240901);
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(10),
        "synthesis took {elapsed:?}, budget is 10 s"
    );
    assert!(report
        .industries
        .iter()
        .all(|r| r.status.as_str() == "synthesized"));
    let conf_groups = conf.by_industry();
    let syn_groups = syn.by_industry();
    assert_eq!(conf_groups.len(), syn_groups.len());
    for (industry, conf_entities) in &conf_groups {
        let syn_entities = &syn_groups[industry];
        assert_eq!(
            conf_entities.len(),
            syn_entities.len(),
            "industry {industry}: entity count not preserved"
        );
    }
    pass(1, "per-industry entity counts preserved exactly");
}

#[test]
fn acceptance_02_positivity() {
    let _guard = serial();
    for seed in 0..20u64 {
        let cfg = SimConfig {
            n_industries: 3,
            entities_per_industry: 700,
            window: YearRange::new(1995, 2014).unwrap(),
            seed: 1000 + seed,
            ..SimConfig::default()
        };
        let conf = simulate_register(&cfg).unwrap();
        let (syn, _) = synthesize_register(&conf, 2000 + seed);
        for e in &syn.entities {
            assert!(
                e.employment.iter().all(|v| *v > 0.0 && v.is_finite()),
                "seed {seed}: non-positive synthetic employment"
            );
            assert!(
                e.payroll.iter().all(|v| *v > 0.0 && v.is_finite()),
                "seed {seed}: non-positive synthetic payroll"
            );
        }
    }
    pass(2, "positivity across 20 seeded synthesis runs");
}

#[test]
fn acceptance_03_pmse_degeneracy() {
    let _guard = serial();
    let cfg = SimConfig {
        n_industries: 2,
        entities_per_industry: 400,
        window: YearRange::new(2000, 2011).unwrap(),
        seed: 7,
        ..SimConfig::default()
    };
    let conf = simulate_register(&cfg).unwrap();
    let panel = pmse::build_combined(&conf, &conf).unwrap();
    let fit = pmse::fit_propensity(&panel, &PropensityModel::intercept_only()).unwrap();
    let c = panel.c();
    for p in &fit.logit.fitted {
        assert!(
            (p - c).abs() < 1e-10,
            "intercept-only p-hat {p} differs from c {c}"
        );
    }
    let value = pmse::pmse(&fit.logit.fitted, c).unwrap();
    assert!(value < 1e-10, "pMSE for an exact copy is {value}");
    pass(3, "exact-copy pMSE < 1e-10 with p-hat identically c");
}

#[test]
fn acceptance_04_pmse_null_calibration() {
    let _guard = serial();
    let started = Instant::now();
    let cfg = SimConfig {
        n_industries: 3,
        entities_per_industry: 150,
        window: YearRange::new(2000, 2011).unwrap(),
        entry_rate: 0.5,
        exit_hazard: 0.1,
        seed: 11,
        ..SimConfig::default()
    };
    let register = simulate_register(&cfg).unwrap();
    let rows = register.to_long().unwrap();
    let model = PropensityModel::default();
    let mut rng = derive_rng(404, "acceptance", "null-calibration");
    let mut ratios = Vec::new();
    let mut standardized = Vec::new();
    for _ in 0..200 {
        // Random half-split of the combined long rows; both halves share the
        // data-generating process, so the null holds by construction.
        let mut labelled = rows.clone();
        let mut indices: Vec<usize> = (0..labelled.len()).collect();
        use rand::seq::SliceRandom;
        indices.shuffle(&mut rng);
        for (rank, idx) in indices.iter().enumerate() {
            labelled[*idx].source = if rank % 2 == 0 {
                SourceLabel::Synthetic
            } else {
                SourceLabel::Original
            };
        }
        let panel = pmse::CombinedPanel::from_rows(labelled).unwrap();
        let fit = pmse::fit_propensity(&panel, &model).unwrap();
        // The null-moment formula E = (k-1)(1-c)^2 c/N describes synthetic
        // data drawn from a model fitted on the original, where parameter
        // reuse shrinks the expected pMSE by (1-c). Independently labelled
        // halves instead satisfy E[pMSE] = m c(1-c)/N for m fitted predictor
        // columns, so the configured k must solve (k-1)(1-c) = m; at the
        // c = 1/2 of an even split, k = 2m + 1.
        let k = 2 * fit.predictor_columns + 1;
        let report = pmse::pmse_report(&fit, &panel, k).unwrap();
        ratios.push(report.ratio);
        standardized.push(report.standardized);
    }
    let mean_ratio = stats::mean(&ratios);
    let mean_std = stats::mean(&standardized);
    assert!(
        (0.8..=1.25).contains(&mean_ratio),
        "mean pMSE ratio {mean_ratio} outside [0.8, 1.25]"
    );
    assert!(
        (-0.5..=0.5).contains(&mean_std),
        "mean standardized pMSE {mean_std} outside [-0.5, 0.5]"
    );
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(180),
        "null calibration took {elapsed:?}, budget 3 min"
    );
    pass(4, "null-split pMSE ratio and standardized pMSE calibrated");
}

#[test]
fn acceptance_05_null_moment_arithmetic_and_reported_consistency() {
    let (e_null, sd_null) = pmse::pmse_null_moments(2, 0.5, 1000).unwrap();
    assert!((e_null - 1.25e-4).abs() < 1e-12);
    assert!((sd_null - 2f64.sqrt() * 0.25 * 0.5 / 1000.0).abs() < 1e-12);

    // Published pMSE summaries: (sector, pmse, ratio, standardized, combined N).
    // Back-solve the predictor count and synthetic share they imply and check
    // the three reported numbers cohere through the null-moment formulas.
    let reported = [
        ("manufacturing", 0.0041, 656.88, 4908.17, 2_243_011usize),
        ("private", 0.0121, 10957.61, 135525.77, 34_638_723usize),
        ("universe", 0.0013, 725.21, 2896.85, 2_121_956usize),
    ];
    for (sector, pmse_value, ratio, standardized, n) in reported {
        let e_implied: f64 = pmse_value / ratio;
        let sd_implied: f64 = (pmse_value - e_implied) / standardized;
        // sd/e = sqrt(2 / (k - 1)) pins k - 1.
        let k_minus_1 = 2.0 / (sd_implied / e_implied).powi(2);
        let k_rounded = k_minus_1.round();
        assert!(
            (k_minus_1 - k_rounded).abs() < 0.05,
            "{sector}: implied k-1 = {k_minus_1} is not near an integer"
        );
        // e = (k-1)(1-c)^2 c / N pins c on the branch above 1/3.
        let target = e_implied * n as f64 / k_rounded;
        let f = |c: f64| (1.0 - c) * (1.0 - c) * c;
        let (mut lo, mut hi) = (1.0 / 3.0, 1.0 - 1e-9);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let c = 0.5 * (lo + hi);
        assert!(c > 0.0 && c < 1.0, "{sector}: back-solved c = {c}");
        let (e_check, sd_check) = pmse::pmse_null_moments(k_rounded as usize + 1, c, n).unwrap();
        let pmse_back = ratio * e_check;
        assert!(
            (pmse_back - pmse_value).abs() / pmse_value < 0.005,
            "{sector}: ratio x e_null = {pmse_back} vs reported pMSE {pmse_value}"
        );
        let std_back = (pmse_value - e_check) / sd_check;
        assert!(
            (std_back - standardized).abs() / standardized < 0.005,
            "{sector}: recomputed standardized {std_back} vs reported {standardized}"
        );
        println!(
            "  {sector}: back-solved k = {}, c = {c:.4} reproduce the reported values",
            k_rounded as usize + 1
        );
    }
    pass(
        5,
        "null-moment formulas exact and reported pMSE values internally consistent",
    );
}

#[test]
fn acceptance_06_dhs_identity() {
    let _guard = serial();
    // Corpus: hand-built integers, an integer-rounded simulated register, and
    // a continuous simulated register.
    let window = YearRange::new(2000, 2004).unwrap();
    let hand = Register::from_entities(
        vec![
            EntityHistory::new(
                "a",
                "1100",
                YearRange::new(2000, 2003).unwrap(),
                vec![10.0, 12.0, 9.0, 9.0],
                vec![300.0; 4],
            ),
            EntityHistory::new(
                "b",
                "1100",
                YearRange::new(2001, 2004).unwrap(),
                vec![4.0, 4.0, 7.0, 2.0],
                vec![120.0; 4],
            ),
            EntityHistory::new(
                "c",
                "1200",
                YearRange::new(2000, 2001).unwrap(),
                vec![55.0, 44.0],
                vec![990.0; 2],
            ),
        ],
        window,
    );
    let sim = simulate_register(&SimConfig {
        n_industries: 2,
        entities_per_industry: 500,
        window: YearRange::new(1998, 2009).unwrap(),
        seed: 3,
        ..SimConfig::default()
    })
    .unwrap();
    let mut rounded = sim.clone();
    for e in &mut rounded.entities {
        for v in &mut e.employment {
            *v = v.round().max(1.0);
        }
    }

    for (label, register, integer_valued) in [
        ("hand-built", &hand, true),
        ("rounded-sim", &rounded, true),
        ("sim", &sim, false),
    ] {
        let gross = flows::gross_series(register, GrossVariable::Employment);
        let jf = flows::job_flow_rates(register).unwrap();
        for (year, gains) in jf.gains.iter() {
            let losses = jf.losses.get(year).unwrap();
            let net = gross.get(year).unwrap() - gross.get(year - 1).unwrap();
            if integer_valued {
                // Integer sums are exact in f64: the identity holds with
                // equality, not within a tolerance.
                assert_eq!(gains - losses, net, "{label} year {year}");
            } else {
                assert!(
                    (gains - losses - net).abs() <= 1e-9 * net.abs().max(1.0),
                    "{label} year {year}: {} vs {net}",
                    gains - losses
                );
            }
            let d = jf.denominator.get(year).unwrap();
            if d > 0.0 {
                let via_rates =
                    (jf.creation.get(year).unwrap() - jf.destruction.get(year).unwrap()) * d;
                assert!(
                    (via_rates - net).abs() <= 1e-9 * d.max(1.0),
                    "{label} year {year}: rate identity off by {}",
                    via_rates - net
                );
            }
        }
    }
    pass(
        6,
        "DHS identity exact on integer corpus, rate form within 1e-9",
    );
}

#[test]
fn acceptance_07_share_normalization() {
    let _guard = serial();
    let conf = simulate_register(&SimConfig {
        n_industries: 4,
        entities_per_industry: 600,
        window: YearRange::new(1995, 2010).unwrap(),
        seed: 17,
        ..SimConfig::default()
    })
    .unwrap();
    let (syn, _) = synthesize_register(&conf, 18);
    for register in [&conf, &syn] {
        for variable in [
            ShareVariable::Entities,
            ShareVariable::Employment,
            ShareVariable::Payroll,
        ] {
            let total: f64 = flows::share_statistic(register, variable, 2)
                .unwrap()
                .iter()
                .map(|c| c.share)
                .sum();
            assert!(
                (total - 1.0).abs() <= 1e-9,
                "{} shares sum to {total}",
                variable.as_str()
            );
        }
    }
    pass(
        7,
        "share tables normalize to 1 within 1e-9 for all variables",
    );
}

#[test]
fn acceptance_08_gmm_recovery_and_nickell_ordering() {
    let _guard = serial();
    let started = Instant::now();
    let (theta, eta) = (0.5, 0.4);
    let mut sys_theta_err = Vec::new();
    let mut sys_eta_err = Vec::new();
    let mut ols_theta_err = Vec::new();
    for rep in 0..50u64 {
        let register = simulate_dynamic_panel(theta, eta, 2000, 10, 9_000 + rep).unwrap();
        let design = build_design(&register).unwrap();
        let sys = gmm::system_gmm_fit(&design, 4).unwrap();
        sys_theta_err.push((sys.report().theta.value - theta).abs());
        sys_eta_err.push((sys.report().eta.value - eta).abs());
        let ols = gmm::ols_fit(&design).unwrap();
        ols_theta_err.push((ols.theta.value - theta).abs());
    }
    let sys_theta = stats::mean(&sys_theta_err);
    let sys_eta = stats::mean(&sys_eta_err);
    let ols_theta = stats::mean(&ols_theta_err);
    assert!(
        sys_theta < 0.05,
        "system GMM mean |theta error| {sys_theta}"
    );
    assert!(sys_eta < 0.05, "system GMM mean |eta error| {sys_eta}");
    assert!(
        ols_theta > sys_theta,
        "OLS mean |theta error| {ols_theta} not larger than system GMM {sys_theta}"
    );
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(300),
        "recovery study took {elapsed:?}, budget 5 min"
    );
    println!(
        "  mean |theta error|: system GMM {sys_theta:.4}, OLS {ols_theta:.4}; mean |eta error| {sys_eta:.4}"
    );
    pass(
        8,
        "system GMM recovers (theta, eta) within 0.05 and beats OLS",
    );
}

#[test]
fn acceptance_09_sargan_size_and_m2_null() {
    let _guard = serial();
    let mut rejections = 0usize;
    let mut m2_values = Vec::new();
    let reps = 200u64;
    for rep in 0..reps {
        let register = simulate_dynamic_panel(0.5, 0.4, 400, 8, 40_000 + rep).unwrap();
        let design = build_design(&register).unwrap();
        let fit = gmm::system_gmm_fit(&design, 3).unwrap();
        let sargan = gmm::sargan_test(&fit);
        assert!(!sargan.exactly_identified);
        if sargan.p_value < 0.05 {
            rejections += 1;
        }
        m2_values.push(gmm::m2_test(&fit).unwrap());
    }
    let rate = rejections as f64 / reps as f64;
    assert!(
        (0.01..=0.12).contains(&rate),
        "Sargan 5%-level rejection rate {rate} outside [0.01, 0.12]"
    );
    // A valid z-statistic has E|z| near 0.8; the calibration requirement is
    // that its mean sits at zero.
    let mean_m2 = stats::mean(&m2_values);
    assert!(mean_m2.abs() < 0.3, "mean m2 under white noise {mean_m2}");
    println!("  Sargan rejection rate {rate:.3}, mean m2 {mean_m2:.3}");
    pass(
        9,
        "Sargan size in [1%, 12%] and m2 centered under white noise",
    );
}

#[test]
fn acceptance_10_elasticity_arithmetic() {
    let value = gmm::long_run_elasticity(0.2031, 0.7847).unwrap();
    assert!((value - 0.98469).abs() < 1e-5, "eta* = {value}");
    pass(10, "long-run elasticity arithmetic");
}

#[test]
fn acceptance_11_disclosure_spike_and_uniform_baseline() {
    let _guard = serial();
    // Left-censored register: concordance spikes in the first window year.
    let cfg = SimConfig {
        n_industries: 2,
        entities_per_industry: 800,
        window: YearRange::new(1996, 2015).unwrap(),
        entry_rate: 0.75,
        exit_hazard: 0.05,
        seed: 23,
        ..SimConfig::default()
    };
    let conf = simulate_register(&cfg).unwrap();
    let (syn, _) = synthesize_register(&conf, 24);
    let summary =
        summarize_concordance(&birthyear_concordance(&conf, &syn, Pairing::ByRank).unwrap());
    let first = summary
        .iter()
        .find(|s| s.year == 1996)
        .expect("first-year row");
    let later: Vec<f64> = summary
        .iter()
        .filter(|s| s.year > 1996)
        .map(|s| s.mean)
        .collect();
    let later_mean = stats::mean(&later);
    assert!(
        first.mean >= 3.0 * later_mean,
        "first-year concordance {} vs later mean {later_mean}",
        first.mean
    );

    // Independent uniform synthetic birth years: mean concordance is 1/Y.
    let window = YearRange::new(2000, 2014).unwrap();
    let y = window.len() as f64;
    let mut means = Vec::new();
    for rep in 0..30u64 {
        let base = simulate_register(&SimConfig {
            n_industries: 2,
            entities_per_industry: 400,
            window,
            entry_rate: 0.5,
            seed: 300 + rep,
            ..SimConfig::default()
        })
        .unwrap();
        let mut rng = derive_rng(600 + rep, "acceptance", "uniform-births");
        let syn_entities: Vec<EntityHistory> = base
            .entities
            .iter()
            .enumerate()
            .map(|(i, c)| {
                use rand::Rng;
                let first = window.first() + (rng.random::<f64>() * y).floor() as i32;
                let first = first.min(window.last());
                EntityHistory::new(
                    format!("s{i}"),
                    c.industry.clone(),
                    YearRange::new(first, window.last()).unwrap(),
                    vec![1.0; (window.last() - first) as usize + 1],
                    vec![30.0; (window.last() - first) as usize + 1],
                )
            })
            .collect();
        let uniform_syn = Register::from_entities(syn_entities, window);
        let table = birthyear_concordance(&base, &uniform_syn, Pairing::ByRank).unwrap();
        let summary = summarize_concordance(&table);
        means.push(summary.iter().map(|s| s.mean).sum::<f64>() / summary.len() as f64);
    }
    let grand = stats::mean(&means);
    let se = stats::sample_sd(&means) / (means.len() as f64).sqrt();
    assert!(
        (grand - 1.0 / y).abs() <= 3.0 * se.max(1e-6),
        "uniform-baseline concordance {grand} vs 1/Y {} (3 se = {})",
        1.0 / y,
        3.0 * se
    );
    println!("  first-year spike {:.3} vs later mean {later_mean:.3}; uniform baseline {grand:.4} ~ 1/Y {:.4}", first.mean, 1.0 / y);
    pass(11, "left-censor concordance spike and uniform 1/Y baseline");
}

#[test]
fn acceptance_12_end_to_end_determinism_and_runtime() {
    let _guard = serial();
    let started = Instant::now();
    let bin = env!("CARGO_BIN_EXE_synthreg");
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("pipeline.toml");
    std::fs::write(
        &config_path,
        r#"
seed = 77

[sim]
n_industries = 5
entities_per_industry = 2000
first_year = 1991
last_year = 2015
"#,
    )
    .unwrap();

    let run_tree = |out: &std::path::Path| {
        for sub in ["simulate", "synthesize", "evaluate", "panel", "disclosure"] {
            let status = Command::new(bin)
                .arg(sub)
                .arg("--config")
                .arg(&config_path)
                .arg("--out")
                .arg(out)
                .status()
                .expect("spawn synthreg");
            assert!(status.success(), "{sub} exited with {status}");
        }
    };
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run_tree(&out_a);
    run_tree(&out_b);

    let mut names: Vec<String> = std::fs::read_dir(&out_a)
        .unwrap()
        .map(|entry| entry.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(
        names.len() >= 19,
        "expected the full output tree, got {names:?}"
    );
    for name in &names {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identically-seeded runs");
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(300),
        "two full pipeline runs took {elapsed:?}, budget 5 min for one"
    );
    println!(
        "  {} output files byte-identical; two runs in {elapsed:?}",
        names.len()
    );
    pass(12, "end-to-end determinism and desk-scale runtime");
}
