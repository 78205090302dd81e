//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! (run with `cargo test -p kloosterlab --test acceptance -- --nocapture`).
//! The experiments are driven through the checked-in configs so the suite
//! exercises exactly what the CLI runs.

use kloosterlab::config::load_config;
use kloosterlab::experiments::{run_experiment, RunArtifacts};
use kloosterlab_core::report::Table;
use std::path::PathBuf;
use std::time::Instant;

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../configs/{name}.toml"))
}

fn run_config(name: &str) -> RunArtifacts {
    let cfg = load_config(&config_path(name)).expect("config parses");
    run_experiment(&cfg, false).expect("experiment runs")
}

fn table<'a>(run: &'a RunArtifacts, name: &str) -> &'a Table {
    &run
        .tables
        .iter()
        .find(|(n, _)| n == name)
        .unwrap_or_else(|| panic!("table {name} missing"))
        .1
}

fn column(t: &Table, name: &str) -> Vec<f64> {
    let idx = t
        .columns
        .iter()
        .position(|c| c == name)
        .unwrap_or_else(|| panic!("column {name} missing"));
    t.rows.iter().map(|r| r[idx].parse().unwrap()).collect()
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn median_of(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn report(criterion: &str, elapsed: std::time::Duration, detail: &str) {
    println!("criterion {criterion}: PASS ({elapsed:.1?}) — {detail}");
}

#[test]
fn criterion_01_explicit_kloosterman_evaluation() {
    let t0 = Instant::now();
    let run = run_config("kloosterman-audit");
    assert!(
        run.hard_failures.is_empty(),
        "hard failures: {:?}",
        run.hard_failures
    );
    let tab = table(&run, "explicit");
    let errs = column(tab, "abs_err");
    let tols = column(tab, "tol");
    assert_eq!(tab.rows.len(), 4 * 3 * 500, "500 samples per modulus");
    let mut worst = 0.0f64;
    for (e, t) in errs.iter().zip(&tols) {
        assert!(e <= t, "explicit evaluation outside tolerance");
        worst = worst.max(e / t);
    }
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 30, "runtime budget 30 s exceeded: {elapsed:?}");
    report(
        "1 (Lemma-16 explicit evaluation)",
        elapsed,
        &format!("{} comparisons, worst err/tol = {worst:.2e}", tab.rows.len()),
    );
}

#[test]
fn criterion_02_gauss_sign_equality() {
    let t0 = Instant::now();
    // direct quadratic Gauss sums against p^{s/2} τ(A, p^s)
    use kloosterlab_core::arith::{gauss_sign, unit_root, PrimePowerModulus};
    use num_complex::Complex64;
    let mut count = 0;
    let mut worst = 0.0f64;
    for p in [5u64, 7, 11, 13] {
        for s in 1..=4u32 {
            let q = PrimePowerModulus::new(p, s).unwrap();
            for a in 1..p {
                let mut sum = Complex64::new(0.0, 0.0);
                for x in 0..q.q {
                    let arg =
                        (a as i128 * (x as i128 * x as i128 % q.q as i128) % q.q as i128) as i64;
                    sum += unit_root(arg, q.q);
                }
                let expect = (q.q as f64).sqrt() * gauss_sign(a as i64, &q).unwrap();
                let residual = (sum - expect).norm();
                assert!(
                    residual < 1e-9 * (q.q as f64).sqrt().max(1.0),
                    "Gauss sign off at p={p}, s={s}, A={a}: {residual:e}"
                );
                worst = worst.max(residual);
                count += 1;
            }
        }
    }
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 10, "runtime budget 10 s exceeded: {elapsed:?}");
    report(
        "2 (Gauss-sum signs)",
        elapsed,
        &format!("{count} moduli-A pairs, worst residual {worst:.2e}"),
    );
}

#[test]
fn criterion_03_decomposition_and_reduction() {
    let t0 = Instant::now();
    let run = run_config("sigma-audit");
    assert!(
        run.hard_failures.is_empty(),
        "hard failures: {:?}",
        run.hard_failures
    );
    let decom = table(&run, "decomposition");
    assert_eq!(decom.rows.len(), 200, "200 decomposition draws");
    let res = column(decom, "residual");
    let tol = column(decom, "tol");
    let worst = res
        .iter()
        .zip(&tol)
        .map(|(r, t)| r / t)
        .fold(0.0f64, f64::max);
    let reduc = table(&run, "reduction");
    assert!(!reduc.rows.is_empty());
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 120, "runtime budget 2 min exceeded: {elapsed:?}");
    report(
        "3 (decomposition + reduction identities)",
        elapsed,
        &format!(
            "200 decompositions (worst residual/tol {worst:.2e}), {} reductions",
            reduc.rows.len()
        ),
    );
}

#[test]
fn criterion_04_hensel_censuses() {
    let t0 = Instant::now();
    let run = run_config("census-sweep");
    assert!(
        run.hard_failures.is_empty(),
        "hard failures: {:?}",
        run.hard_failures
    );
    let hensel = table(&run, "hensel");
    assert_eq!(hensel.rows.len(), 100, "100 invariance draws");
    let status_idx = hensel.columns.iter().position(|c| c == "status").unwrap();
    let invariant = hensel
        .rows
        .iter()
        .filter(|r| r[status_idx] == "invariant")
        .count();
    assert!(
        hensel.rows.iter().all(|r| r[status_idx] != "violated"),
        "count invariance must hold wherever hypotheses hold"
    );
    let singular = table(&run, "singular");
    assert!(!singular.rows.is_empty(), "singular censuses ran");
    let bounds = table(&run, "bounds");
    let ratios = column(bounds, "ratio");
    let worst = max_of(&ratios);
    assert!(
        worst < 10.0,
        "singular-count constant {worst} reached the failure threshold 10"
    );
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 300, "runtime budget 5 min exceeded: {elapsed:?}");
    report(
        "4 (Hensel and singular censuses)",
        elapsed,
        &format!(
            "{invariant}/100 invariance draws met hypotheses (all invariant), {} singular censuses with unique lifting, bound constant {worst:.3}",
            singular.rows.len()
        ),
    );
}

#[test]
fn criterion_05_weil_bound() {
    let t0 = Instant::now();
    use kloosterlab_core::expsum::weil_report;
    use kloosterlab_core::rng::Rng;
    let mut rng = Rng::seed_from(505);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let c = rng.range_u64(1, 5000);
        let m = rng.range_i64(-5000, 5000);
        let n = rng.range_i64(-5000, 5000);
        let rep = weil_report(m, n, c);
        assert!(
            rep.lhs <= rep.rhs + 1e-7,
            "Weil bound violated at ({m},{n},{c})"
        );
        worst = worst.max(rep.ratio());
    }
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 30, "runtime budget 30 s exceeded: {elapsed:?}");
    report(
        "5 (Weil bound, 10^4 triples)",
        elapsed,
        &format!("zero violations, max |S|/bound = {worst:.4}"),
    );
}

#[test]
fn criterion_06_jutila_l2() {
    let t0 = Instant::now();
    let run = run_config("jutila");
    assert!(
        run.hard_failures.is_empty(),
        "hard failures: {:?}",
        run.hard_failures
    );
    let tab = table(&run, "jutila");
    assert_eq!(tab.rows.len(), 9, "Q in {{20,50,100}} x three deltas");
    let ratios = column(tab, "ratio");
    let worst = max_of(&ratios);
    assert!(worst <= 1.0, "L² error above the (log Q)² bound: {worst}");
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 60, "runtime budget 1 min exceeded: {elapsed:?}");
    report(
        "6 (Jutila exact L² error)",
        elapsed,
        &format!("9 (Q, δ) pairs, max error/bound = {worst:.4}"),
    );
}

#[test]
fn criterion_07_voronoi_residuals() {
    let t0 = Instant::now();
    let run = run_config("voronoi");
    assert!(
        run.hard_failures.is_empty(),
        "hard failures: {:?}",
        run.hard_failures
    );
    let tab = table(&run, "voronoi");
    let residuals = column(tab, "residual");
    let worst = max_of(&residuals);
    assert!(worst < 1e-5, "Voronoi residual {worst:e} at threshold 1e-5");
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 120, "runtime budget 2 min exceeded: {elapsed:?}");
    report(
        "7 (Voronoi summation residuals)",
        elapsed,
        &format!("{} identities, worst residual {worst:.2e}", tab.rows.len()),
    );
}

#[test]
fn criterion_08_diagonal_closed_form() {
    let t0 = Instant::now();
    let run = run_config("diagonal");
    assert!(
        run.hard_failures.is_empty(),
        "hard failures: {:?}",
        run.hard_failures
    );
    let tab = table(&run, "diagonal");
    assert_eq!(tab.rows.len(), 40, "20 admissible q, both form pairs");
    let devs = column(tab, "dev_paper");
    let tols = column(tab, "tol_spec");
    for (d, t) in devs.iter().zip(&tols) {
        assert!(d < t, "deviation {d} above the stated tolerance {t}");
    }
    let exact = column(tab, "dev_exact");
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 300, "runtime budget 5 min exceeded: {elapsed:?}");
    report(
        "8 (diagonal closed form)",
        elapsed,
        &format!(
            "40 comparisons within tolerance; exact-residue form deviates at most {:.2e}",
            max_of(&exact)
        ),
    );
}

#[test]
fn criterion_09_moment_trend() {
    let t0 = Instant::now();
    let run = run_config("moment");
    assert!(
        run.hard_failures.is_empty(),
        "hard failures (realness / oracle): {:?}",
        run.hard_failures
    );
    let tab = table(&run, "moment");
    let oracle = table(&run, "moment_oracle");
    assert!(
        !oracle.rows.is_empty(),
        "naive double-sum oracle must run at small q"
    );
    let qs = column(tab, "q");
    let ratios = column(tab, "ratio");
    let imres = column(tab, "max_im_residual");
    assert!(max_of(&imres) < 1e-6, "imaginary residue above 1e-6");
    // the criterion set: prime q in {101, 151, 211, 307, 401}
    let mut pairs: Vec<(u64, f64)> = qs
        .iter()
        .zip(&ratios)
        .map(|(&q, &r)| (q as u64, r))
        .filter(|(q, _)| [101, 151, 211, 307, 401].contains(q))
        .collect();
    pairs.sort_by_key(|&(q, _)| q);
    assert_eq!(pairs.len(), 5);
    for &(q, r) in &pairs {
        assert!(r.is_finite(), "ratio at q={q} not finite");
    }
    let devs: Vec<f64> = pairs.iter().map(|&(_, r)| (r - 1.0).abs()).collect();
    let lower = median_of(&devs[..2]);
    let upper = median_of(&devs[3..]);
    assert!(
        upper <= lower,
        "moment trend violated: median |ratio-1| {upper:.4} (upper half) > {lower:.4} (lower half)"
    );
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 1200, "runtime budget 20 min exceeded: {elapsed:?}");
    report(
        "9 (moment trend over primitive characters)",
        elapsed,
        &format!(
            "ratios {:?}, |ratio-1| medians: lower {lower:.4}, upper {upper:.4}; oracle rows {}",
            pairs.iter().map(|&(_, r)| (r * 1e4).round() / 1e4).collect::<Vec<_>>(),
            oracle.rows.len()
        ),
    );
}

#[test]
fn criterion_10_theorem5_calibration() {
    let t0 = Instant::now();
    let run = run_config("theorem5-sweep");
    assert!(
        run.hard_failures.is_empty(),
        "hard failures: {:?}",
        run.hard_failures
    );
    let t5 = table(&run, "theorem5");
    assert_eq!(t5.rows.len(), 200, "200 short-sum draws");
    let worst = max_of(&column(t5, "ratio"));
    assert!(worst < 50.0, "Theorem-5 ratio {worst} at the threshold 50");
    let weyl = table(&run, "weyl");
    let audit_idx = weyl.columns.iter().position(|c| c == "audit").unwrap();
    let ratio_idx = weyl.columns.iter().position(|c| c == "ratio").unwrap();
    let mut worst_diff = 0.0f64;
    let mut worst_comp = 0.0f64;
    for row in &weyl.rows {
        let r: f64 = row[ratio_idx].parse().unwrap();
        match row[audit_idx].as_str() {
            "differencing" => worst_diff = worst_diff.max(r),
            "completion" => worst_comp = worst_comp.max(r),
            _ => {}
        }
    }
    assert!(worst_diff < 20.0, "differencing ratio {worst_diff} at 20");
    assert!(worst_comp < 20.0, "completion ratio {worst_comp} at 20");
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 600, "runtime budget 10 min exceeded: {elapsed:?}");
    report(
        "10 (Theorem-5 / differencing calibration)",
        elapsed,
        &format!(
            "200 draws, max short-sum ratio {worst:.3e}; differencing {worst_diff:.2e}, completion {worst_comp:.3}"
        ),
    );
}

#[test]
fn criterion_11_determinism() {
    let t0 = Instant::now();
    let mut checked = 0;
    for (name, quick) in [
        ("jutila", false),
        ("sigma-audit", true),
        ("theorem5-sweep", true),
        ("moment", true),
    ] {
        let cfg = load_config(&config_path(name)).unwrap();
        let a = run_experiment(&cfg, quick).unwrap();
        let b = run_experiment(&cfg, quick).unwrap();
        assert_eq!(a.tables.len(), b.tables.len());
        for ((na, ta), (nb, tb)) in a.tables.iter().zip(&b.tables) {
            assert_eq!(na, nb);
            assert_eq!(
                ta.to_csv(),
                tb.to_csv(),
                "CSV bytes differ between reruns of {name}/{na}"
            );
            assert_eq!(ta.to_jsonl(), tb.to_jsonl());
            checked += 1;
        }
    }
    report(
        "11 (byte-identical artifacts under fixed seed)",
        t0.elapsed(),
        &format!("{checked} tables compared across reruns"),
    );
}
