//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `--nocapture` to see them). Every tolerance is
//! pinned here, not configurable.

use std::path::PathBuf;
use std::time::Instant;

use cdnn_core::data::{
    load_digits_csv, normalize, split_deterministic, DigitsDataset, SplitDataset, TRAIN_SIZE,
};
use cdnn_core::diagnostics::{
    hessian_brute_force, hessian_spectrum_closed_form, verify_condition_bound,
};
use cdnn_core::gradcheck::{run_grad_checks, GradCheckConfig, DEFAULT_SHAPES};
use cdnn_core::layers::param_count;
use cdnn_core::linalg::Mat;
use cdnn_core::regularization::shannon_dropout;
use cdnn_core::rng::Rng;
use cdnn_core::spectral::{dft_real, fft_real};
use cdnn_core::training::{run_experiment, table_architectures, train_model, TrainingConfig};

fn canonical_split() -> SplitDataset {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/digits.csv");
    let mut ds: DigitsDataset = load_digits_csv(&path).expect("canonical dataset present");
    ds.features = normalize(&ds.features);
    split_deterministic(&ds, TRAIN_SIZE, 0).expect("split")
}

fn report(criterion: &str, passed: bool, detail: &str) {
    println!(
        "[{}] criterion {criterion}: {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {criterion} failed: {detail}");
}

// 1. All analytic gradients match central finite differences to rel 1e-4
//    over >= 3 layer shapes x >= 20 coordinates, in < 10 s.
#[test]
fn criterion_1_gradient_verification() {
    let start = Instant::now();
    let cfg = GradCheckConfig::default();
    assert!(cfg.tolerance == 1e-4 && cfg.coords_per_target >= 20);
    assert!(DEFAULT_SHAPES.len() >= 3);
    let result = run_grad_checks(&DEFAULT_SHAPES, &cfg).expect("suite runs");
    let elapsed = start.elapsed().as_secs_f64();
    let worst = result
        .entries
        .iter()
        .map(|e| e.max_rel_error)
        .fold(0.0f64, f64::max);
    report(
        "1",
        result.passed && elapsed < 10.0,
        &format!(
            "{} gradient checks, max rel error {worst:.2e} (< 1e-4), {elapsed:.2}s",
            result.entries.len()
        ),
    );
}

// 2. Closed-form eigenvalues match the brute-force Hessian (explicit
//    circulant construction, checked circulant to 1e-12, cross-checked by
//    second-order finite differences to 1e-4 inside the constructor) to
//    rel 1e-8 for B in {2,3,4,8} x 10 trials, in < 5 s.
#[test]
fn criterion_2_closed_form_matches_brute_force() {
    let start = Instant::now();
    let mut rng = Rng::from_seed(271);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for b in [2usize, 3, 4, 8] {
        for _ in 0..10 {
            let x: Vec<f64> = (0..b).map(|_| rng.normal()).collect();
            let c: Vec<f64> = (0..b).map(|_| rng.normal()).collect();
            let t: Vec<f64> = (0..b).map(|_| rng.normal()).collect();
            let (_, brute) = hessian_brute_force(&c, &x, &t).expect("brute force");
            let batch = Mat::from_vec(1, b, x).expect("batch");
            let closed = hessian_spectrum_closed_form(&batch, b).expect("closed form");
            for (a, w) in closed.eigenvalues.iter().zip(&brute) {
                worst = worst.max((a - w).abs() / w.abs().max(1e-12));
            }
            cases += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "2",
        worst <= 1e-8 && elapsed < 5.0,
        &format!("{cases} cases, max rel deviation {worst:.2e} (<= 1e-8), {elapsed:.2}s"),
    );
}

// 3. Empirical kappa <= 1 + 5 sqrt(B/N) for B=4, N in {100, 1000, 10000},
//    in >= 95% of 100 trials; population mode gives kappa = 1 exactly;
//    < 30 s.
#[test]
fn criterion_3_condition_number_bound() {
    let start = Instant::now();
    let mut ok = true;
    let mut details = Vec::new();
    for n in [100usize, 1000, 10_000] {
        let entry = verify_condition_bound(4, n, 100, 314, false).expect("bound check");
        ok &= entry.fraction_within >= 0.95;
        details.push(format!("N={n}: {:.0}%", entry.fraction_within * 100.0));
    }
    let population = verify_condition_bound(4, 1000, 20, 314, true).expect("population");
    ok &= population.kappas.iter().all(|&k| k == 1.0);
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "3",
        ok && elapsed < 30.0,
        &format!(
            "within-bound fractions [{}] (>= 95%), population kappa = 1 exactly, {elapsed:.2}s",
            details.join(", ")
        ),
    );
}

// 4. Exact parameter counts: 8970 / 2380 / 1296.
#[test]
fn criterion_4_parameter_counts() {
    let counts: Vec<usize> = table_architectures().iter().map(param_count).collect();
    report(
        "4",
        counts == vec![8970, 2380, 1296],
        &format!("parameter counts {counts:?} == [8970, 2380, 1296]"),
    );
}

// 5. Benchmark reproduction at reference settings (3 models x 3 seeds x 25
//    epochs, <= 10 min): seed-mean test accuracy dense >= 97.0%,
//    cd-b4 >= 96.5%, cd-b8 >= 94.0%.
// 6. Conditioning: mean dense kappa / mean cd-b4 kappa >= 50 and strict
//    ordering dense > cd-b4 > cd-b8.
#[test]
fn criteria_5_and_6_benchmark_reproduction_and_conditioning() {
    let start = Instant::now();
    let split = canonical_split();
    let cfg = TrainingConfig::default();
    assert_eq!(cfg.seeds, vec![0, 1, 2]);
    assert_eq!(cfg.epochs, 25);
    let (summary, _) = run_experiment(&split, &cfg).expect("experiment");
    let elapsed = start.elapsed().as_secs_f64();

    let get = |name: &str| {
        summary
            .models
            .iter()
            .find(|m| m.model == name)
            .unwrap_or_else(|| panic!("{name} missing"))
    };
    let dense = get("dense");
    let cd4 = get("cd-b4");
    let cd8 = get("cd-b8");

    let acc_ok = dense.accuracy_mean >= 0.97
        && cd4.accuracy_mean >= 0.965
        && cd8.accuracy_mean >= 0.94
        && elapsed < 600.0;
    report(
        "5",
        acc_ok,
        &format!(
            "seed-mean accuracy dense {:.2}% (>= 97), cd-b4 {:.2}% (>= 96.5), cd-b8 {:.2}% (>= 94), {elapsed:.1}s",
            100.0 * dense.accuracy_mean,
            100.0 * cd4.accuracy_mean,
            100.0 * cd8.accuracy_mean
        ),
    );

    let (kd, k4, k8) = (dense.mean_kappa, cd4.mean_kappa, cd8.mean_kappa);
    let cond_ok = match (kd, k4, k8) {
        (Some(kd), Some(k4), Some(k8)) => kd / k4 >= 50.0 && kd > k4 && k4 > k8,
        _ => false,
    };
    report(
        "6",
        cond_ok,
        &format!(
            "mean kappa dense {} / cd-b4 {} = ratio {} (>= 50), ordering dense > cd-b4 > cd-b8: {}",
            kd.map(|k| format!("{k:.3e}")).unwrap_or("inf".into()),
            k4.map(|k| format!("{k:.3e}")).unwrap_or("inf".into()),
            match (kd, k4) {
                (Some(a), Some(b)) => format!("{:.1}", a / b),
                _ => "inf".into(),
            },
            cond_ok
        ),
    );
}

// 7. FFT agrees with the direct DFT to 1e-10 relative, and the Parseval
//    identity holds to 1e-10 on 1000 random vectors across B in 1..=16.
#[test]
fn criterion_7_spectral_core_exactness() {
    let mut rng = Rng::from_seed(777);
    let mut worst_fft: f64 = 0.0;
    let mut worst_parseval: f64 = 0.0;
    for trial in 0..1000 {
        let b = 1 + (trial % 16);
        let x: Vec<f64> = (0..b).map(|_| rng.normal()).collect();
        let fast = fft_real(&x).expect("fft");
        let slow = dft_real(&x).expect("dft");
        let scale = slow.iter().map(|v| v.abs()).fold(1e-30, f64::max);
        for (a, d) in fast.iter().zip(&slow) {
            worst_fft = worst_fft.max((*a - *d).abs() / scale);
        }
        let lhs: f64 = fast.iter().map(|v| v.abs_sq()).sum();
        let rhs: f64 = b as f64 * x.iter().map(|v| v * v).sum::<f64>();
        worst_parseval = worst_parseval.max((lhs - rhs).abs() / rhs.abs().max(1.0));
    }
    report(
        "7",
        worst_fft <= 1e-10 && worst_parseval <= 1e-10,
        &format!(
            "1000 vectors, B in 1..=16: fft-vs-dft max rel {worst_fft:.2e}, Parseval max rel {worst_parseval:.2e} (<= 1e-10)"
        ),
    );
}

// 8. Dropout statistics at the default rate over 1e6 draws: empirical drop
//    rate within +-5e-4 of 0.0118, expectation preserved within 4 SE.
#[test]
fn criterion_8_dropout_statistics() {
    let n = 1_000_000usize;
    let rate = 0.0118;
    let x = Mat::from_vec(1000, 1000, vec![1.0; n]).expect("ones");
    let (scaled, mask) =
        shannon_dropout(&x, rate, &mut Rng::from_seed(8_888), true).expect("dropout");
    let dropped = mask.data().iter().filter(|&&m| m == 0.0).count();
    let frac = dropped as f64 / n as f64;
    let mean: f64 = scaled.data().iter().sum::<f64>() / n as f64;
    let se = (rate / (1.0 - rate) / n as f64).sqrt();
    let ok = (frac - rate).abs() <= 5e-4 && (mean - 1.0).abs() <= 4.0 * se;
    report(
        "8",
        ok,
        &format!(
            "drop rate {frac:.5} (0.0118 +- 0.0005), mean {mean:.6} within 4 SE ({:.1} SE)",
            (mean - 1.0).abs() / se
        ),
    );
}

// 9. Determinism: identical config + seed produce bit-identical run records
//    (wall-clock excluded), verified by a double run.
#[test]
fn criterion_9_determinism() {
    let split = canonical_split();
    let cfg = TrainingConfig {
        epochs: 5,
        ..TrainingConfig::default()
    };
    let spec = &table_architectures()[1]; // cd-b4 exercises the FFT path
    let (a, _) = train_model(spec, &split, &cfg, 0).expect("run A");
    let (b, _) = train_model(spec, &split, &cfg, 0).expect("run B");
    let ja = a.to_json_deterministic().expect("json A");
    let jb = b.to_json_deterministic().expect("json B");
    report(
        "9",
        ja == jb,
        &format!(
            "double run of {} epochs produced byte-identical records ({} bytes)",
            cfg.epochs,
            ja.len()
        ),
    );
}
