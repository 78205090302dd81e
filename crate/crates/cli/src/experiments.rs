//! Experiment runners: each turns a declarative config into report tables,
//! a summary, and a list of hard-invariant failures. Exact identities and
//! equality audits are hard; bound-ratio calibrations only ever report.

use crate::config::{ExperimentConfig, ExperimentSpec};
use crate::pool::parallel_map;
use kloosterlab_core::arith::{
    gcd_i, reduce_mod, InverseTable, PrimePowerModulus, SqrtBranch,
};
use kloosterlab_core::characters::enumerate_characters;
use kloosterlab_core::congruence::{
    hensel_audit, singular_bound_report, singular_census,
    HenselInstance, PhaseParams,
};
use kloosterlab_core::expsum::{
    bhat_product_form, bhat_sum, decomposition_audit, kloosterman_explicit,
    kloosterman_family, kloosterman_with, reduction_audit, sigma_eps, sigma_full, weil_report,
    weyl_completion_audit, BranchKind, ShortSumSpec, A0,
};
use kloosterlab_core::hecke::{load_or_compute, Newform};
use kloosterlab_core::kernels::{
    jutila_approximation, jutila_mass, voronoi_residual, CircleApprox, SmoothWindow, WeightTable,
    WeightW,
};
use kloosterlab_core::moments::{
    central_product, diagonal_report, l_values, moment_experiment, shifted_average_report,
    shifted_convolution, shifted_convolution_avg, shifted_individual_report,
};
use kloosterlab_core::report::{fmt_f64, Table};
use kloosterlab_core::rng::Rng;
use num_complex::Complex64;

pub struct RunArtifacts {
    pub name: String,
    pub tables: Vec<(String, Table)>,
    pub summary: Vec<(String, String)>,
    pub hard_failures: Vec<String>,
}

pub fn run_experiment(cfg: &ExperimentConfig, quick: bool) -> Result<RunArtifacts, String> {
    let mut spec = cfg.experiment.clone();
    if quick {
        spec.shrink();
    }
    let mut rng = Rng::seed_from(cfg.seed);
    let eps = cfg.eps_power;
    let out = match &spec {
        ExperimentSpec::KloostermanAudit {
            primes,
            exponents,
            samples,
            weil_samples,
            weil_c_max,
        } => run_kloosterman_audit(primes, exponents, *samples, *weil_samples, *weil_c_max, &mut rng),
        ExperimentSpec::SigmaAudit {
            primes,
            exponents,
            draws,
        } => run_sigma_audit(primes, exponents, *draws, &mut rng),
        ExperimentSpec::Theorem5Sweep { draws, weyl_draws } => {
            run_theorem5(*draws, *weyl_draws, eps, &mut rng)
        }
        ExperimentSpec::CensusSweep {
            primes,
            s_max,
            hensel_draws,
            bound_draws,
        } => run_census(primes, *s_max, *hensel_draws, *bound_draws, &mut rng),
        ExperimentSpec::Jutila {
            q_values,
            delta_exponents,
        } => run_jutila(q_values, delta_exponents, eps),
        ExperimentSpec::Voronoi {
            weights,
            c_max,
            n_values,
            table_n_max,
        } => run_voronoi(weights, *c_max, n_values, *table_n_max, &mut rng),
        ExperimentSpec::Diagonal {
            q_values,
            weight1,
            weight2,
            table_n_max,
        } => run_diagonal(q_values, *weight1, *weight2, *table_n_max),
        ExperimentSpec::Moment {
            q_values,
            weight1,
            weight2,
            table_n_max,
            oracle_q_max,
        } => run_moment(q_values, *weight1, *weight2, *table_n_max, *oracle_q_max),
        ExperimentSpec::ShiftedConvolution { draws, table_n_max } => {
            run_shifted(*draws, *table_n_max, eps, &mut rng)
        }
    }?;
    Ok(RunArtifacts {
        name: spec.name().to_string(),
        tables: out.0,
        summary: out.1,
        hard_failures: out.2,
    })
}

type Pieces = (
    Vec<(String, Table)>,
    Vec<(String, String)>,
    Vec<String>,
);

fn ratio_stats(name: &str, ratios: &[f64], summary: &mut Vec<(String, String)>) {
    if ratios.is_empty() {
        return;
    }
    let mut sorted = ratios.to_vec();
    sorted.sort_by(f64::total_cmp);
    let max = sorted[sorted.len() - 1];
    let median = sorted[sorted.len() / 2];
    summary.push((format!("{name}.max_ratio"), fmt_f64(max)));
    summary.push((format!("{name}.median_ratio"), fmt_f64(median)));
    summary.push((format!("{name}.count"), sorted.len().to_string()));
}

// ---- kloosterman-audit ------------------------------------------------------

fn run_kloosterman_audit(
    primes: &[u64],
    exponents: &[u32],
    samples: u64,
    weil_samples: u64,
    weil_c_max: u64,
    rng: &mut Rng,
) -> Result<Pieces, String> {
    let mut hard = Vec::new();

    let mut explicit = Table::new(&["p", "s", "m", "n", "direct", "explicit", "abs_err", "tol"]);
    for &p in primes {
        let branch = SqrtBranch::default_for(p);
        for &s in exponents {
            if s < 2 {
                continue;
            }
            let q = PrimePowerModulus::new(p, s).map_err(|e| e.to_string())?;
            let inv = InverseTable::build(q.q);
            let tol = 1e-8 * (p as f64).powf(s as f64 / 2.0);
            for _ in 0..samples {
                let mut m = rng.range_i64(1, q.q as i64 - 1);
                while reduce_mod(m, p) == 0 {
                    m = rng.range_i64(1, q.q as i64 - 1);
                }
                let n = rng.range_i64(-(q.q as i64), q.q as i64);
                let direct = kloosterman_with(m, n, q.q, &inv);
                let fast = kloosterman_explicit(m, n, &q, &branch).map_err(|e| e.to_string())?;
                let err = (direct - fast).abs();
                if err > tol {
                    hard.push(format!(
                        "explicit evaluation off at p={p}, s={s}, m={m}, n={n}: {err:e}"
                    ));
                }
                explicit.push(vec![
                    p.to_string(),
                    s.to_string(),
                    m.to_string(),
                    n.to_string(),
                    fmt_f64(direct),
                    fmt_f64(fast),
                    fmt_f64(err),
                    fmt_f64(tol),
                ]);
            }
        }
    }

    let mut gauss = Table::new(&["p", "s", "a", "residual", "tol"]);
    for &p in primes {
        for &s in exponents {
            let q = PrimePowerModulus::new(p, s).map_err(|e| e.to_string())?;
            for a in 1..p {
                let mut sum = Complex64::new(0.0, 0.0);
                for x in 0..q.q {
                    let arg = (a as i128 * (x as i128 * x as i128 % q.q as i128) % q.q as i128)
                        as i64;
                    sum += kloosterlab_core::arith::unit_root(arg, q.q);
                }
                let expect = (q.q as f64).sqrt()
                    * kloosterlab_core::arith::gauss_sign(a as i64, &q).map_err(|e| e.to_string())?;
                let residual = (sum - expect).norm();
                let tol = 1e-9 * (q.q as f64).sqrt().max(1.0);
                if residual > tol {
                    hard.push(format!("Gauss sign off at p={p}, s={s}, A={a}: {residual:e}"));
                }
                gauss.push(vec![
                    p.to_string(),
                    s.to_string(),
                    a.to_string(),
                    fmt_f64(residual),
                    fmt_f64(tol),
                ]);
            }
        }
    }

    let mut weil = Table::new(&["m", "n", "c", "lhs", "rhs", "ratio"]);
    let mut weil_ratios = Vec::new();
    for _ in 0..weil_samples {
        let c = rng.range_u64(1, weil_c_max);
        let m = rng.range_i64(-(weil_c_max as i64), weil_c_max as i64);
        let n = rng.range_i64(-(weil_c_max as i64), weil_c_max as i64);
        let rep = weil_report(m, n, c);
        let ratio = rep.ratio();
        if rep.lhs > rep.rhs + 1e-7 {
            hard.push(format!("Weil bound violated at ({m},{n},{c})"));
        }
        weil_ratios.push(ratio);
        weil.push(vec![
            m.to_string(),
            n.to_string(),
            c.to_string(),
            fmt_f64(rep.lhs),
            fmt_f64(rep.rhs),
            fmt_f64(ratio),
        ]);
    }

    let mut summary = Vec::new();
    summary.push(("explicit.rows".into(), explicit.rows.len().to_string()));
    summary.push(("gauss.rows".into(), gauss.rows.len().to_string()));
    ratio_stats("weil", &weil_ratios, &mut summary);
    Ok((
        vec![
            ("explicit".into(), explicit),
            ("gauss".into(), gauss),
            ("weil".into(), weil),
        ],
        summary,
        hard,
    ))
}

// ---- sigma-audit -------------------------------------------------------------

fn run_sigma_audit(
    primes: &[u64],
    exponents: &[u32],
    draws: u64,
    rng: &mut Rng,
) -> Result<Pieces, String> {
    let mut hard = Vec::new();
    let mut decom = Table::new(&["p", "s", "n1", "n2", "a", "k", "residual", "tol"]);
    let mut reduc = Table::new(&["p", "s", "nu", "A", "B", "a", "k", "residual", "tol"]);
    let mut eps_id = Table::new(&["p", "s", "n1", "n2", "a", "k", "residual", "tol"]);

    for i in 0..draws {
        let p = *rng.choose(primes);
        let s = *rng.choose(exponents);
        let q = PrimePowerModulus::new(p, s).map_err(|e| e.to_string())?;
        let branch = if i % 2 == 0 {
            BranchKind::Default
        } else {
            BranchKind::Flipped
        }
        .branch_for(p);
        // draw n1, n2 units with n1 n2 a square mod p
        let (n1, n2) = loop {
            let n1 = rng.range_i64(1, q.q as i64 - 1);
            let n2 = rng.range_i64(1, q.q as i64 - 1);
            if reduce_mod(n1, p) == 0 || reduce_mod(n2, p) == 0 {
                continue;
            }
            if kloosterlab_core::arith::kronecker_symbol(
                (reduce_mod(n1, p) * reduce_mod(n2, p)) as i64,
                p,
            )
            .unwrap()
                == 1
            {
                break (n1, n2);
            }
        };
        let a = rng.range_i64(0, q.q as i64 - 1);
        let k = rng.range_i64(0, q.q as i64 - 1);
        let u = reduce_mod(n1, q.q);

        let rep = decomposition_audit(n1, n2, a, k, &q, u, &branch).map_err(|e| e.to_string())?;
        if rep.lhs > rep.rhs {
            hard.push(format!(
                "decomposition residual {} above {} at p={p}, s={s}, n1={n1}, n2={n2}, a={a}, k={k}",
                rep.lhs, rep.rhs
            ));
        }
        decom.push(vec![
            p.to_string(),
            s.to_string(),
            n1.to_string(),
            n2.to_string(),
            a.to_string(),
            k.to_string(),
            fmt_f64(rep.lhs),
            fmt_f64(rep.rhs),
        ]);

        // ε-identity: Σ_{ε in A0} Σ^ε = Σ(full)
        let mut total = Complex64::new(0.0, 0.0);
        for eps in A0 {
            total += sigma_eps(eps, n1, n2, a, k, &q, &branch).map_err(|e| e.to_string())?;
        }
        let full = sigma_full(n1, n2, a, k, q.q).map_err(|e| e.to_string())?;
        let residual = (total - full).norm();
        let tol = 1e-6 * (q.q as f64).powf(2.5);
        if residual > tol {
            hard.push(format!("ε-identity residual {residual} at p={p}, s={s}"));
        }
        eps_id.push(vec![
            p.to_string(),
            s.to_string(),
            n1.to_string(),
            n2.to_string(),
            a.to_string(),
            k.to_string(),
            fmt_f64(residual),
            fmt_f64(tol),
        ]);

        // reduction formula with a planted p^ν || A, B and p^ν | k
        if s >= 2 {
            let nu = rng.range_u64(1, s as u64 - 1).max(1) as u32;
            let pv = p.pow(nu) as i64;
            let mut a0 = rng.range_i64(1, p as i64 - 1);
            let mut b0 = rng.range_i64(1, p as i64 - 1);
            if reduce_mod(a0, p) == 0 {
                a0 = 1;
            }
            if reduce_mod(b0, p) == 0 {
                b0 = 1;
            }
            let k0 = rng.range_i64(0, (q.q / p.pow(nu)) as i64 - 1);
            let rep =
                reduction_audit(pv * a0, pv * b0, a, pv * k0, &q, u, &branch).map_err(|e| e.to_string())?;
            if rep.lhs > rep.rhs {
                hard.push(format!(
                    "reduction residual {} above {} at p={p}, s={s}, nu={nu}",
                    rep.lhs, rep.rhs
                ));
            }
            reduc.push(vec![
                p.to_string(),
                s.to_string(),
                nu.to_string(),
                (pv * a0).to_string(),
                (pv * b0).to_string(),
                a.to_string(),
                (pv * k0).to_string(),
                fmt_f64(rep.lhs),
                fmt_f64(rep.rhs),
            ]);
        }
    }

    let summary = vec![
        ("decomposition.rows".to_string(), decom.rows.len().to_string()),
        ("reduction.rows".to_string(), reduc.rows.len().to_string()),
        ("eps_identity.rows".to_string(), eps_id.rows.len().to_string()),
    ];
    Ok((
        vec![
            ("decomposition".into(), decom),
            ("reduction".into(), reduc),
            ("eps_identity".into(), eps_id),
        ],
        summary,
        hard,
    ))
}

// ---- theorem5-sweep -----------------------------------------------------------

const T5_PRIMES: [u64; 12] = [5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43];

fn draw_factorable_r(rng: &mut Rng) -> (u64, u64) {
    // r a product of 2-3 prime powers ≤ 1e5; s a divisor with full 2,3-part
    // (vacuous here: all primes > 3)
    loop {
        let parts = rng.range_u64(2, 3);
        let mut ps = Vec::new();
        while ps.len() < parts as usize {
            let p = *rng.choose(&T5_PRIMES);
            if !ps.contains(&p) {
                ps.push(p);
            }
        }
        let mut r: u64 = 1;
        let mut factors = Vec::new();
        let mut ok = true;
        for &p in &ps {
            let e = rng.range_u64(1, 2) as u32;
            let pe = p.pow(e);
            if r.checked_mul(pe).map(|v| v <= 100_000) == Some(true) {
                r *= pe;
                factors.push((p, e));
            } else {
                ok = false;
                break;
            }
        }
        if !ok || r < 100 {
            continue;
        }
        // s: a divisor supported on one of the factors
        let &(p, e) = rng.choose(&factors);
        let se = rng.range_u64(1, e as u64) as u32;
        return (r, p.pow(se));
    }
}

fn run_theorem5(draws: u64, weyl_draws: u64, eps: f64, rng: &mut Rng) -> Result<Pieces, String> {
    let mut hard = Vec::new();
    let mut t5 = Table::new(&["r", "s", "M", "A", "n1", "n2", "sigma", "lhs", "rhs", "ratio"]);

    let specs: Vec<ShortSumSpec> = (0..draws)
        .map(|_| {
            let (r, s) = draw_factorable_r(rng);
            let m_len = ((r as f64).sqrt() * (0.7 + 0.7 * rng.f64())).max(2.0);
            ShortSumSpec {
                a_offset: rng.range_u64(0, r) as f64,
                m_len,
                r,
                q: r,
                n1: rng.range_i64(1, r as i64),
                n2: rng.range_i64(1, r as i64),
                s,
            }
        })
        .collect();
    let reports = parallel_map(specs.len(), |i| {
        kloosterlab_core::expsum::theorem5_bound(&specs[i], eps).map_err(|e| e.to_string())
    });
    let mut t5_ratios = Vec::new();
    for rep in reports {
        let rep = rep?;
        let get = |k: &str| {
            rep.params
                .iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.clone())
                .unwrap_or_default()
        };
        t5_ratios.push(rep.ratio());
        t5.push(vec![
            get("r"),
            get("s"),
            get("M"),
            get("A"),
            get("n1"),
            get("n2"),
            get("sigma"),
            fmt_f64(rep.lhs),
            fmt_f64(rep.rhs),
            fmt_f64(rep.ratio()),
        ]);
    }

    // differencing / completion / combined audits on Kloosterman instances
    let mut weyl = Table::new(&["r1", "r2", "H", "M", "audit", "lhs", "rhs", "ratio"]);
    let mut bhat = Table::new(&["r1", "r2", "h", "H", "k", "residual", "tol"]);
    let mut diff_ratios = Vec::new();
    let mut comp_ratios = Vec::new();
    let mut comb_ratios = Vec::new();
    let weyl_cases: [(u64, u64, u64); 4] = [(25, 2, 5), (49, 2, 7), (175, 1, 5), (121, 2, 11)];
    for d in 0..weyl_draws {
        let (r1, r2, big_h) = weyl_cases[(d % 4) as usize];
        // resample until the family is not identically zero (non-square
        // n1 n2 at the sharp prime kills every table entry)
        let (n1, n2, fam) = loop {
            let n1 = rng.range_i64(1, r1 as i64 * r2 as i64);
            let n2 = rng.range_i64(1, r1 as i64 * r2 as i64);
            let fam = kloosterman_family(n1, n2, r1, r2, big_h, BranchKind::Default)
                .map_err(|e| e.to_string())?;
            let live = fam
                .inst
                .b1
                .iter()
                .any(|t| t.iter().any(|z| z.norm_sqr() > 0.0));
            if live {
                break (n1, n2, fam);
            }
        };
        let m_len = ((r1 * r2) as f64 * (0.3 + 0.4 * rng.f64())) as u64;
        let a_off = rng.range_i64(0, (r1 * r2) as i64);
        let audit = weyl_completion_audit(&fam.inst, big_h, m_len.max(4 * big_h * r2), a_off)
            .map_err(|e| e.to_string())?;
        for (label, rep, ratios) in [
            ("differencing", &audit.differencing, &mut diff_ratios),
            ("completion", &audit.completion, &mut comp_ratios),
            ("combined", &audit.combined, &mut comb_ratios),
        ] {
            let ratio = rep.ratio();
            ratios.push(ratio);
            if label == "completion" && rep.lhs > rep.rhs * (1.0 + 1e-9) + 1e-9 {
                hard.push(format!(
                    "completion inequality violated at r1={r1}, r2={r2}, H={big_h}"
                ));
            }
            weyl.push(vec![
                r1.to_string(),
                r2.to_string(),
                big_h.to_string(),
                m_len.to_string(),
                label.to_string(),
                fmt_f64(rep.lhs),
                fmt_f64(rep.rhs),
                fmt_f64(ratio),
            ]);
        }
        // decompBhat product identity
        let h = rng.range_i64(1, 3);
        let k = rng.range_i64(0, r1 as i64 - 1);
        let direct = bhat_sum(&fam.inst.b1, h, big_h, r1, r2, k);
        let product = bhat_product_form(n1, n2, r1, r2, h, big_h, k, BranchKind::Default)
            .map_err(|e| e.to_string())?;
        let residual = (direct - product).norm();
        let tol = 1e-6 * (1.0 + direct.norm());
        if residual > tol {
            hard.push(format!("bhat product identity off at r1={r1}, h={h}, k={k}"));
        }
        bhat.push(vec![
            r1.to_string(),
            r2.to_string(),
            h.to_string(),
            big_h.to_string(),
            k.to_string(),
            fmt_f64(residual),
            fmt_f64(tol),
        ]);
    }

    let mut summary = Vec::new();
    ratio_stats("theorem5", &t5_ratios, &mut summary);
    ratio_stats("differencing", &diff_ratios, &mut summary);
    ratio_stats("completion", &comp_ratios, &mut summary);
    ratio_stats("combined", &comb_ratios, &mut summary);
    Ok((
        vec![
            ("theorem5".into(), t5),
            ("weyl".into(), weyl),
            ("bhat".into(), bhat),
        ],
        summary,
        hard,
    ))
}

// ---- census-sweep --------------------------------------------------------------

fn run_census(
    primes: &[u64],
    s_max: u32,
    hensel_draws: u64,
    bound_draws: u64,
    rng: &mut Rng,
) -> Result<Pieces, String> {
    let mut hard = Vec::new();
    let mut hensel = Table::new(&["instance", "p", "s", "kappa_base", "count", "levels", "status"]);
    let mut singular = Table::new(&["p", "s", "A", "B", "a", "omega", "t_size", "status"]);
    let mut bounds = Table::new(&["p", "s", "kappa", "A", "B", "a", "k", "via", "count", "bound", "ratio"]);
    let mut coverage = Table::new(&["p", "s", "A", "B", "a", "status"]);

    // Hensel count-invariance
    for i in 0..hensel_draws {
        let p = *rng.choose(primes);
        let s = s_max.min(if p >= 11 { 4 } else { s_max });
        let q = PrimePowerModulus::new(p, s).map_err(|e| e.to_string())?;
        let branch = SqrtBranch::default_for(p);
        let inst = match i % 3 {
            0 => HenselInstance::SquarePoly {
                c: rng.range_i64(1, p as i64 - 1),
            },
            1 => HenselInstance::UnitSqrtPhase {
                a0_coef: rng.range_i64(1, p as i64 - 1),
                alpha: 1,
                a0: rng.range_i64(1, p as i64 - 1),
                k0: rng.range_i64(1, p as i64 - 1),
                u: 1,
            },
            _ => HenselInstance::GPhaseNonsingular {
                params: PhaseParams {
                    a_coef: rng.range_i64(1, p as i64 - 1),
                    b_coef: rng.range_i64(1, p as i64 - 1),
                    a: rng.range_i64(1, p as i64 - 1),
                    k: rng.range_i64(0, p as i64 - 1),
                    u: 1,
                    q,
                },
            },
        };
        let label = match inst {
            HenselInstance::SquarePoly { .. } => "square-poly",
            HenselInstance::UnitSqrtPhase { .. } => "unit-sqrt-phase",
            HenselInstance::GPhaseNonsingular { .. } => "g-nonsingular",
        };
        match hensel_audit(&inst, &q, 1, &branch) {
            Ok(audits) => {
                hensel.push(vec![
                    label.to_string(),
                    p.to_string(),
                    s.to_string(),
                    "1".to_string(),
                    audits[0].count.to_string(),
                    audits.len().to_string(),
                    "invariant".to_string(),
                ]);
            }
            Err(kloosterlab_core::Error::HypothesesNotMet(_)) => {
                hensel.push(vec![
                    label.to_string(),
                    p.to_string(),
                    s.to_string(),
                    "1".to_string(),
                    "-".to_string(),
                    "0".to_string(),
                    "hypotheses-not-met".to_string(),
                ]);
            }
            Err(e) => {
                hard.push(format!("Hensel invariance failed: {e}"));
                hensel.push(vec![
                    label.to_string(),
                    p.to_string(),
                    s.to_string(),
                    "1".to_string(),
                    "-".to_string(),
                    "0".to_string(),
                    "violated".to_string(),
                ]);
            }
        }
    }

    // singular censuses with unique lifting, k_i and T checks, bound sweeps
    let mut bound_ratios = Vec::new();
    for &p in primes {
        for s in 2..=s_max {
            if (p.pow(s)) > 2_000_000 {
                continue;
            }
            let q = PrimePowerModulus::new(p, s).map_err(|e| e.to_string())?;
            let branch = SqrtBranch::default_for(p);
            for _ in 0..bound_draws {
                let a_coef = rng.range_i64(1, p as i64 - 1);
                let b_coef = rng.range_i64(1, p as i64 - 1);
                let a = rng.range_i64(1, p as i64 - 1);
                let census = match singular_census(a_coef, b_coef, a, 1, &q, &branch) {
                    Ok(c) => {
                        singular.push(vec![
                            p.to_string(),
                            s.to_string(),
                            a_coef.to_string(),
                            b_coef.to_string(),
                            a.to_string(),
                            c.omega.to_string(),
                            c.set_t.len().to_string(),
                            "ok".to_string(),
                        ]);
                        c
                    }
                    Err(e) => {
                        hard.push(format!(
                            "singular census failed at p={p}, s={s}, A={a_coef}, B={b_coef}, a={a}: {e}"
                        ));
                        continue;
                    }
                };
                // T-coverage: k ≡ k_i mod p^λ implies k²a ∈ T mod p^λ
                let mut covered = true;
                let sweep = q.q.min(700);
                'k: for k in 0..sweep as i64 {
                    for lambda in 1..=s {
                        let pl = p.pow(lambda);
                        if census
                            .special_values
                            .iter()
                            .any(|&ki| reduce_mod(k, pl) == ki % pl)
                        {
                            let k2a = reduce_mod(
                                ((reduce_mod(k, q.q) as i128 * reduce_mod(k, q.q) as i128
                                    % q.q as i128)
                                    * reduce_mod(a, q.q) as i128) as i64,
                                q.q,
                            );
                            if !census.set_t.iter().any(|&t| k2a % pl == t % pl) {
                                covered = false;
                                break 'k;
                            }
                        }
                    }
                }
                if !covered {
                    hard.push(format!("T coverage failed at p={p}, s={s}, A={a_coef}, B={b_coef}, a={a}"));
                }
                coverage.push(vec![
                    p.to_string(),
                    s.to_string(),
                    a_coef.to_string(),
                    b_coef.to_string(),
                    a.to_string(),
                    if covered { "covered" } else { "violated" }.to_string(),
                ]);
                // singular-count bounds over random k and all levels
                for _ in 0..4 {
                    let k = rng.range_i64(0, q.q as i64 - 1);
                    for kappa in 1..=s {
                        let params = PhaseParams {
                            a_coef,
                            b_coef,
                            a,
                            k,
                            u: 1,
                            q,
                        };
                        for use_t in [false, true] {
                            let rep = singular_bound_report(&params, kappa, &census, use_t, &branch)
                                .map_err(|e| e.to_string())?;
                            bound_ratios.push(rep.ratio());
                            bounds.push(vec![
                                p.to_string(),
                                s.to_string(),
                                kappa.to_string(),
                                a_coef.to_string(),
                                b_coef.to_string(),
                                a.to_string(),
                                k.to_string(),
                                if use_t { "setT" } else { "ki" }.to_string(),
                                fmt_f64(rep.lhs),
                                fmt_f64(rep.rhs),
                                fmt_f64(rep.ratio()),
                            ]);
                        }
                    }
                }
            }
        }
    }

    let mut summary = Vec::new();
    ratio_stats("singular_bounds", &bound_ratios, &mut summary);
    summary.push(("hensel.rows".into(), hensel.rows.len().to_string()));
    Ok((
        vec![
            ("hensel".into(), hensel),
            ("singular".into(), singular),
            ("bounds".into(), bounds),
            ("coverage".into(), coverage),
        ],
        summary,
        hard,
    ))
}

// ---- jutila ---------------------------------------------------------------------

fn run_jutila(q_values: &[f64], delta_exponents: &[f64], eps: f64) -> Result<Pieces, String> {
    let mut hard = Vec::new();
    let mut table = Table::new(&["Q", "delta", "lambda", "l2_error", "bound", "ratio", "mass_err"]);
    let mut ratios = Vec::new();
    for &q in q_values {
        for &e in delta_exponents {
            let delta = q.powf(-e);
            let ca = CircleApprox::flat(q, delta);
            let mass = jutila_mass(&ca).map_err(|e| e.to_string())?;
            let mass_err = (mass - 1.0).abs();
            if mass_err > 1e-9 {
                hard.push(format!("Ĩ mass deviates at Q={q}, δ={delta}: {mass_err:e}"));
            }
            let (l2, bound) = jutila_approximation(&ca, eps).map_err(|e| e.to_string())?;
            let ratio = l2 / bound;
            ratios.push(ratio);
            table.push(vec![
                fmt_f64(q),
                fmt_f64(delta),
                fmt_f64(ca.lambda()),
                fmt_f64(l2),
                fmt_f64(bound),
                fmt_f64(ratio),
                fmt_f64(mass_err),
            ]);
        }
    }
    let mut summary = Vec::new();
    ratio_stats("jutila", &ratios, &mut summary);
    Ok((vec![("jutila".into(), table)], summary, hard))
}

// ---- voronoi ---------------------------------------------------------------------

fn run_voronoi(
    weights: &[u32],
    c_max: u64,
    n_values: &[f64],
    table_n_max: usize,
    rng: &mut Rng,
) -> Result<Pieces, String> {
    let mut hard = Vec::new();
    let mut table = Table::new(&["weight", "c", "b", "N", "residual", "tol"]);
    let window = SmoothWindow::standard();
    for &w in weights {
        let form = load_or_compute(w, table_n_max).map_err(|e| e.to_string())?;
        for c in 1..=c_max {
            let mut bs = vec![1i64];
            if c > 2 {
                let mut b = rng.range_i64(1, c as i64 - 1);
                while gcd_i(b, c) != 1 {
                    b = rng.range_i64(1, c as i64 - 1);
                }
                if b != 1 {
                    bs.push(b);
                }
            }
            for b in bs {
                for &n in n_values {
                    let residual =
                        voronoi_residual(&form, b, c, &window, n).map_err(|e| e.to_string())?;
                    if residual > 1e-5 {
                        hard.push(format!(
                            "Voronoi residual {residual:e} at weight={w}, c={c}, b={b}, N={n}"
                        ));
                    }
                    table.push(vec![
                        w.to_string(),
                        c.to_string(),
                        b.to_string(),
                        fmt_f64(n),
                        fmt_f64(residual),
                        fmt_f64(1e-5),
                    ]);
                }
            }
        }
    }
    let summary = vec![("voronoi.rows".to_string(), table.rows.len().to_string())];
    Ok((vec![("voronoi".into(), table)], summary, hard))
}

// ---- diagonal ---------------------------------------------------------------------

fn run_diagonal(
    q_values: &[u64],
    weight1: u32,
    weight2: u32,
    table_n_max: usize,
) -> Result<Pieces, String> {
    let mut hard = Vec::new();
    let mut table = Table::new(&[
        "q",
        "case",
        "direct",
        "closed_paper",
        "closed_exact",
        "dev_paper",
        "dev_exact",
        "tol_spec",
    ]);
    let f1 = load_or_compute(weight1, table_n_max).map_err(|e| e.to_string())?;
    let f2 = load_or_compute(weight2, table_n_max).map_err(|e| e.to_string())?;
    let cases: Vec<(&Newform, &Newform, &str)> =
        vec![(&f1, &f1, "equal"), (&f1, &f2, "distinct")];
    for (fa, fb, label) in cases {
        let w = WeightW::new(fa.weight, fb.weight);
        let wt = WeightTable::build(&w);
        let lv = l_values(fa, fb).map_err(|e| e.to_string())?;
        for &q in q_values {
            if q % 4 == 2 {
                continue;
            }
            let rep = diagonal_report(fa, fb, q, &wt, &lv).map_err(|e| e.to_string())?;
            let tol = 5.0 * (q as f64).powf(-0.5) * (q as f64).ln().powi(2);
            if rep.rel_dev_paper > tol {
                hard.push(format!(
                    "diagonal deviation {} above {tol} at q={q} ({label})",
                    rep.rel_dev_paper
                ));
            }
            table.push(vec![
                q.to_string(),
                label.to_string(),
                fmt_f64(rep.direct),
                fmt_f64(rep.closed_paper),
                fmt_f64(rep.closed_exact),
                fmt_f64(rep.rel_dev_paper),
                fmt_f64(rep.rel_dev_exact),
                fmt_f64(tol),
            ]);
        }
    }
    let summary = vec![("diagonal.rows".to_string(), table.rows.len().to_string())];
    Ok((vec![("diagonal".into(), table)], summary, hard))
}

// ---- moment -----------------------------------------------------------------------

fn run_moment(
    q_values: &[u64],
    weight1: u32,
    weight2: u32,
    table_n_max: usize,
    oracle_q_max: u64,
) -> Result<Pieces, String> {
    let mut hard = Vec::new();
    let mut table = Table::new(&[
        "q",
        "psi",
        "empirical",
        "main_term",
        "ratio",
        "main_term_exact",
        "ratio_exact",
        "max_im_residual",
        "x_cut",
    ]);
    let mut oracle = Table::new(&["q", "chi_index", "profile", "direct", "abs_err", "tol"]);
    let f1 = load_or_compute(weight1, table_n_max).map_err(|e| e.to_string())?;
    let f2 = if weight2 == weight1 {
        None
    } else {
        Some(load_or_compute(weight2, table_n_max).map_err(|e| e.to_string())?)
    };
    let fb: &Newform = f2.as_ref().unwrap_or(&f1);
    let w = WeightW::new(f1.weight, fb.weight);
    let wt = WeightTable::build(&w);
    let lv = l_values(&f1, fb).map_err(|e| e.to_string())?;

    let results = parallel_map(q_values.len(), |i| {
        moment_experiment(&f1, fb, q_values[i], &wt, &lv).map_err(|e| e.to_string())
    });
    for res in results {
        let r = res?;
        if r.max_im_residual > 1e-6 {
            hard.push(format!(
                "central values not real at q={}: residual {:e}",
                r.q, r.max_im_residual
            ));
        }
        if !r.ratio.is_finite() {
            hard.push(format!("non-finite ratio at q={}", r.q));
        }
        // oracle: per-character naive double sums
        if r.q <= oracle_q_max {
            let chars = enumerate_characters(r.q).map_err(|e| e.to_string())?;
            for (idx, chi) in chars.iter().filter(|c| c.is_primitive()).enumerate() {
                let direct = central_product(&f1, fb, chi, &wt).map_err(|e| e.to_string())?;
                let err = (direct.re - r.per_character[idx]).abs();
                let tol = 1e-6 * (1.0 + direct.re.abs());
                if err > tol {
                    hard.push(format!(
                        "moment oracle mismatch at q={}, character {idx}: {err:e}",
                        r.q
                    ));
                }
                oracle.push(vec![
                    r.q.to_string(),
                    idx.to_string(),
                    fmt_f64(r.per_character[idx]),
                    fmt_f64(direct.re),
                    fmt_f64(err),
                    fmt_f64(tol),
                ]);
            }
        }
        table.push(vec![
            r.q.to_string(),
            r.psi.to_string(),
            fmt_f64(r.empirical),
            fmt_f64(r.main_term),
            fmt_f64(r.ratio),
            fmt_f64(r.main_term_exact),
            fmt_f64(r.ratio_exact),
            fmt_f64(r.max_im_residual),
            fmt_f64(r.x_cut),
        ]);
    }
    let summary = vec![
        ("moment.rows".to_string(), table.rows.len().to_string()),
        ("oracle.rows".to_string(), oracle.rows.len().to_string()),
    ];
    Ok((
        vec![("moment".into(), table), ("moment_oracle".into(), oracle)],
        summary,
        hard,
    ))
}

// ---- shifted convolution -------------------------------------------------------------

fn run_shifted(draws: u64, table_n_max: usize, eps: f64, rng: &mut Rng) -> Result<Pieces, String> {
    let hard = Vec::new();
    let mut indiv = Table::new(&["l1", "l2", "h", "N", "M", "value", "rhs", "ratio"]);
    let mut avg = Table::new(&["l1", "l2", "d", "N", "M", "value", "rhs", "ratio"]);
    let f1 = load_or_compute(12, table_n_max).map_err(|e| e.to_string())?;
    let f2 = load_or_compute(16, table_n_max).map_err(|e| e.to_string())?;
    let v = SmoothWindow::standard();
    let mut iratios = Vec::new();
    let mut aratios = Vec::new();
    for _ in 0..draws {
        let l1 = rng.range_u64(1, 3);
        let l2 = rng.range_u64(1, 3);
        let n_scale = (table_n_max as f64 / 2.2 * (0.3 + 0.7 * rng.f64())).max(5_000.0);
        let m_scale = n_scale / (20.0 + 30.0 * rng.f64());
        let h = rng.range_i64(1, (n_scale / 2.0) as i64);
        let value = shifted_convolution(&f1, &f2, l1, l2, h, n_scale, m_scale, &v, &v)
            .map_err(|e| e.to_string())?;
        let rep = shifted_individual_report(value, n_scale, m_scale, h, eps);
        iratios.push(rep.ratio());
        indiv.push(vec![
            l1.to_string(),
            l2.to_string(),
            h.to_string(),
            fmt_f64(n_scale),
            fmt_f64(m_scale),
            fmt_f64(value),
            fmt_f64(rep.rhs),
            fmt_f64(rep.ratio()),
        ]);

        let d = rng.range_u64(97, 997);
        let value = shifted_convolution_avg(&f1, &f2, l1, l2, d, n_scale, m_scale, &v, &v)
            .map_err(|e| e.to_string())?;
        let rep = shifted_average_report(value, n_scale, m_scale, d, eps);
        aratios.push(rep.ratio());
        avg.push(vec![
            l1.to_string(),
            l2.to_string(),
            d.to_string(),
            fmt_f64(n_scale),
            fmt_f64(m_scale),
            fmt_f64(value),
            fmt_f64(rep.rhs),
            fmt_f64(rep.ratio()),
        ]);
    }
    let mut summary = Vec::new();
    ratio_stats("individual", &iratios, &mut summary);
    ratio_stats("averaged", &aratios, &mut summary);
    Ok((
        vec![("individual".into(), indiv), ("averaged".into(), avg)],
        summary,
        hard,
    ))
}
