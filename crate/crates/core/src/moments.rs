//! The moment experiment: central-value products through the approximate
//! functional equation, the sum over primitive characters, the diagonal
//! term with its explicit closed form, the Theorem-1-shaped main term, and
//! direct shifted convolution sums with their bound reports.

use crate::arith::{euler_phi, gcd, Factorization};
use crate::characters::{psi_count, CharacterGroup, DirichletCharacter};
use crate::hecke::Newform;
use crate::kernels::{ln_gamma, SmoothWindow, WeightTable};
use crate::report::BoundReport;
use crate::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

pub fn zeta2() -> f64 {
    PI * PI / 6.0
}

/// ζ'(2) = -Σ ln n / n², by Euler-Maclaurin with two correction terms.
pub fn zeta_prime_2() -> f64 {
    let n_cut = 200_000u64;
    let mut sum = 0.0f64;
    for n in 2..n_cut {
        let x = n as f64;
        sum += x.ln() / (x * x);
    }
    let x = n_cut as f64;
    let tail = (x.ln() + 1.0) / x; // ∫_N^∞ ln t / t² dt
    let f_n = x.ln() / (x * x);
    let fp_n = (1.0 - 2.0 * x.ln()) / (x * x * x);
    -(sum + tail + 0.5 * f_n - fp_n / 12.0)
}

/// Γ'(n)/Γ(n) = H_{n-1} - γ for positive integers.
pub fn digamma_int(n: u32) -> f64 {
    let mut h = 0.0;
    for k in 1..n {
        h += 1.0 / k as f64;
    }
    h - EULER_GAMMA
}

/// Deterministic pairwise summation: the reduction order is a fixed binary
/// tree, independent of any parallel partitioning upstream.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

// ---- local Euler factors P and Q -------------------------------------------

/// The finite Euler products over p | q removed from the Rankin-Selberg
/// series, with their logarithmic derivatives at s = 1.
#[derive(Clone, Debug)]
pub struct LocalFactors {
    pub p_at_1: f64,
    pub p_logderiv_at_1: f64,
    pub q_at_1: f64,
    pub q_logderiv_at_1: f64,
    primes: Vec<u64>,
    l1p: Vec<(f64, f64)>,  // (λ1(p), λ1(p²))
    l2p: Vec<(f64, f64)>,
}

fn local_p_factor(s: Complex64, p: f64, l1sq: f64) -> Complex64 {
    let ps = (-s * p.ln()).exp();
    let num = 1.0 - l1sq * ps + l1sq * ps * ps - ps * ps * ps;
    let den = 1.0 - ps * ps;
    num / den
}

fn local_q_factor(s: Complex64, p: f64, l1: f64, l2: f64, l1sq: f64, l2sq: f64) -> Complex64 {
    let ps = (-s * p.ln()).exp();
    let num = 1.0 - l1 * l2 * ps + (l1sq + l2sq) * ps * ps - l1 * l2 * ps * ps * ps
        + ps * ps * ps * ps;
    let den = 1.0 - ps * ps;
    num / den
}

impl LocalFactors {
    pub fn p_eval(&self, s: Complex64) -> Complex64 {
        self.primes
            .iter()
            .zip(&self.l1p)
            .map(|(&p, &(_, l1sq))| local_p_factor(s, p as f64, l1sq))
            .product()
    }

    pub fn q_eval(&self, s: Complex64) -> Complex64 {
        self.primes
            .iter()
            .zip(self.l1p.iter().zip(&self.l2p))
            .map(|(&p, (&(l1, l1sq), &(l2, l2sq)))| {
                local_q_factor(s, p as f64, l1, l2, l1sq, l2sq)
            })
            .product()
    }
}

/// P(s), Q(s) at s = 1 with log-derivatives, from the eigenvalues at p | q.
pub fn local_factors(f1: &Newform, f2: &Newform, q: u64) -> Result<LocalFactors> {
    let fac = Factorization::of(q)?;
    let mut primes = Vec::new();
    let mut l1p = Vec::new();
    let mut l2p = Vec::new();
    for &(p, _) in &fac.factors {
        primes.push(p);
        l1p.push((f1.lambda(p)?, f1.lambda(p * p)?));
        l2p.push((f2.lambda(p)?, f2.lambda(p * p)?));
    }
    let mut out = LocalFactors {
        p_at_1: 0.0,
        p_logderiv_at_1: 0.0,
        q_at_1: 0.0,
        q_logderiv_at_1: 0.0,
        primes,
        l1p,
        l2p,
    };
    let one = Complex64::new(1.0, 0.0);
    out.p_at_1 = out.p_eval(one).re;
    out.q_at_1 = out.q_eval(one).re;
    // analytic log-derivative, factor by factor
    let mut pd = 0.0;
    let mut qd = 0.0;
    for (i, &p) in out.primes.iter().enumerate() {
        let pf = p as f64;
        let lnp = pf.ln();
        let (l1, l1sq) = out.l1p[i];
        let (l2, l2sq) = out.l2p[i];
        let x = 1.0 / pf; // p^{-1}
        // numerator and denominator of the P factor with d/ds p^{-ks} = -k ln p p^{-ks}
        let n_v = 1.0 - l1sq * x + l1sq * x * x - x * x * x;
        let n_d = lnp * (l1sq * x - 2.0 * l1sq * x * x + 3.0 * x * x * x);
        let d_v = 1.0 - x * x;
        let d_d = lnp * 2.0 * x * x;
        pd += n_d / n_v - d_d / d_v;
        let qn_v = 1.0 - l1 * l2 * x + (l1sq + l2sq) * x * x - l1 * l2 * x * x * x
            + x * x * x * x;
        let qn_d = lnp
            * (l1 * l2 * x - 2.0 * (l1sq + l2sq) * x * x + 3.0 * l1 * l2 * x * x * x
                - 4.0 * x * x * x * x);
        qd += qn_d / qn_v - d_d / d_v;
    }
    out.p_logderiv_at_1 = pd;
    out.q_logderiv_at_1 = qd;
    Ok(out)
}

// ---- L-values at 1 through the functional equation --------------------------

/// The archimedean factor of a self-dual L-function, as a sum of
/// Γ_R(s + a) = π^{-(s+a)/2} Γ((s+a)/2) and Γ_C(s + b) = 2 (2π)^{-(s+b)} Γ(s + b)
/// pieces.
#[derive(Clone, Debug)]
struct GammaFactor {
    gamma_r_shifts: Vec<f64>,
    gamma_c_shifts: Vec<f64>,
}

impl GammaFactor {
    fn sym_square(kappa: u32) -> Self {
        GammaFactor {
            gamma_r_shifts: vec![1.0],
            gamma_c_shifts: vec![kappa as f64 - 1.0],
        }
    }

    fn rankin_selberg(kappa1: u32, kappa2: u32) -> Self {
        GammaFactor {
            gamma_r_shifts: vec![],
            gamma_c_shifts: vec![
                (kappa1 + kappa2) as f64 / 2.0 - 1.0,
                (kappa1 as f64 - kappa2 as f64).abs() / 2.0,
            ],
        }
    }

    fn ln_eval(&self, s: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &a in &self.gamma_r_shifts {
            let z = s + a;
            acc += -0.5 * z * PI.ln() + ln_gamma(0.5 * z);
        }
        for &b in &self.gamma_c_shifts {
            let z = s + b;
            acc += 2.0f64.ln() - z * (2.0 * PI).ln() + ln_gamma(z);
        }
        acc
    }
}

/// Quadrature nodes for V(y) = (1/2πi) ∫ (γ(base + w)/γ(s0)) y^{-w} dw/w
/// on Re w = c, reusable across y.
struct MellinKernel {
    c: f64,
    /// (t, combined weight · γ-ratio / (c + it))
    nodes: Vec<(f64, Complex64)>,
}

impl MellinKernel {
    fn build(gf: &GammaFactor, base: f64, s0_norm: f64, c: f64, t_max: f64) -> Self {
        let ln_norm = gf.ln_eval(Complex64::new(s0_norm, 0.0));
        let panel = 0.1f64;
        let panels = (t_max / panel).ceil() as usize;
        let (xs, ws) = super_gl16();
        let mut nodes = Vec::with_capacity(panels * 16);
        for p in 0..panels {
            let lo = p as f64 * panel;
            let mid = lo + 0.5 * panel;
            for (x, w) in xs.iter().zip(ws) {
                let t = mid + 0.5 * panel * x;
                let s = Complex64::new(c, t);
                let ratio = (gf.ln_eval(Complex64::new(base, 0.0) + s) - ln_norm).exp();
                nodes.push((t, ratio / s * *w * 0.5 * panel));
            }
        }
        MellinKernel { c, nodes }
    }

    /// V(y)/γ(s0) with conjugate symmetry folded in: (1/π) Re Σ ...
    fn eval(&self, y: f64) -> f64 {
        let ln_y = y.ln();
        let mut acc = Complex64::new(0.0, 0.0);
        for &(t, w) in &self.nodes {
            // y^{-(c+it)} = e^{-c ln y} e^{-i t ln y}
            let phase = Complex64::new(0.0, -t * ln_y).exp();
            acc += w * phase;
        }
        (acc * (-self.c * ln_y).exp()).re / PI
    }
}

fn super_gl16() -> &'static ([f64; 16], [f64; 16]) {
    crate::kernels::gl16()
}

/// L(s0) for a self-dual L-function with functional equation s -> 1 - s,
/// sign +1, conductor 1: the balanced approximate functional equation
///   L(s0) γ(s0) = Σ c_n n^{-s0} V1(n/x) + Σ c_n n^{s0-1} V2(n x).
fn afe_l_value(gf: &GammaFactor, coeffs: &dyn Fn(u64) -> Result<f64>, s0: f64, x: f64) -> Result<f64> {
    let c = 1.5;
    let t_max = 40.0;
    let k1 = MellinKernel::build(gf, s0, s0, c, t_max);
    let k2 = MellinKernel::build(gf, 1.0 - s0, s0, c, t_max);
    let mut total = 0.0f64;
    let mut quiet = 0u32;
    let mut n = 1u64;
    loop {
        let nf = n as f64;
        let t1 = coeffs(n)? * nf.powf(-s0) * k1.eval(nf / x);
        let t2 = coeffs(n)? * nf.powf(s0 - 1.0) * k2.eval(nf * x);
        total += t1 + t2;
        if t1.abs() + t2.abs() < 1e-15 * (1.0 + total.abs()) {
            quiet += 1;
            if quiet >= 10 {
                break;
            }
        } else {
            quiet = 0;
        }
        n += 1;
        if n > 100_000 {
            return Err(Error::Unsupported(
                "functional-equation sum did not converge".into(),
            ));
        }
    }
    Ok(total)
}

/// Dirichlet coefficients of L(s, sym² f) = ζ(2s) Σ λ(n²) n^{-s}.
fn sym_square_coeff(f: &Newform, m: u64) -> Result<f64> {
    let mut total = 0.0;
    let mut d = 1u64;
    while d * d <= m {
        if m % (d * d) == 0 {
            let e = m / (d * d);
            total += f.lambda_mult(e * e)?;
        }
        d += 1;
    }
    Ok(total)
}

/// Dirichlet coefficients of L(s, f1 × f2) = ζ(2s) Σ λ1(n) λ2(n) n^{-s}.
fn rankin_coeff(f1: &Newform, f2: &Newform, m: u64) -> Result<f64> {
    let mut total = 0.0;
    let mut d = 1u64;
    while d * d <= m {
        if m % (d * d) == 0 {
            let e = m / (d * d);
            total += f1.lambda_mult(e)? * f2.lambda_mult(e)?;
        }
        d += 1;
    }
    Ok(total)
}

/// L(1, sym² f) with its logarithmic derivative at 1, plus (for f1 ≠ f2)
/// L(1, f1 × f2) with its logarithmic derivative. Values come from the
/// balanced functional equation; two balance points x ∈ {1, 2} act as the
/// two smoothing kernels and must agree.
#[derive(Clone, Debug)]
pub struct LValues {
    pub sym2: f64,
    pub sym2_logderiv: f64,
    pub rankin: Option<f64>,
    pub rankin_logderiv: Option<f64>,
}

fn afe_with_check(gf: &GammaFactor, coeffs: &dyn Fn(u64) -> Result<f64>, s0: f64) -> Result<f64> {
    let a = afe_l_value(gf, coeffs, s0, 1.0)?;
    let b = afe_l_value(gf, coeffs, s0, 2.0)?;
    if (a - b).abs() > 1e-4 * (1.0 + a.abs()) {
        return Err(Error::Domain(format!(
            "balance points disagree at s0 = {s0}: {a} vs {b}"
        )));
    }
    Ok(a)
}

fn logderiv_at_1(gf: &GammaFactor, coeffs: &dyn Fn(u64) -> Result<f64>) -> Result<f64> {
    let h = 0.02f64;
    let lp = |s0: f64| -> Result<f64> { Ok(afe_l_value(gf, coeffs, s0, 1.0)?.ln()) };
    Ok((8.0 * (lp(1.0 + h)? - lp(1.0 - h)?) - (lp(1.0 + 2.0 * h)? - lp(1.0 - 2.0 * h)?))
        / (12.0 * h))
}

pub fn l_values(f1: &Newform, f2: &Newform) -> Result<LValues> {
    let gf_sym = GammaFactor::sym_square(f1.weight);
    let sym_coeffs = |m: u64| sym_square_coeff(f1, m);
    let sym2 = afe_with_check(&gf_sym, &sym_coeffs, 1.0)?;
    if sym2 <= 0.0 {
        return Err(Error::Domain(format!("L(1, sym²) = {sym2} not positive")));
    }
    let sym2_logderiv = logderiv_at_1(&gf_sym, &sym_coeffs)?;
    let (rankin, rankin_logderiv) = if f1.weight == f2.weight {
        (None, None)
    } else {
        let gf_rs = GammaFactor::rankin_selberg(f1.weight, f2.weight);
        let rs_coeffs = |m: u64| rankin_coeff(f1, f2, m);
        let v = afe_with_check(&gf_rs, &rs_coeffs, 1.0)?;
        if v <= 0.0 {
            return Err(Error::Domain(format!("L(1, f1×f2) = {v} not positive")));
        }
        (Some(v), Some(logderiv_at_1(&gf_rs, &rs_coeffs)?))
    };
    Ok(LValues {
        sym2,
        sym2_logderiv,
        rankin,
        rankin_logderiv,
    })
}

/// Coarse oracle for L(1, sym² f): ζ(2) Σ λ(n²)/n g(n/Y) with a Gaussian
/// or quartic-exponential cutoff; converges like Y^{-1/2} up to constants.
pub fn l_sym2_smoothed(f: &Newform, y_scale: f64, quartic: bool) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 1u64;
    loop {
        let t = n as f64 / y_scale;
        let g = if quartic { (-t.powi(4)).exp() } else { (-t * t).exp() };
        if g < 1e-16 {
            break;
        }
        total += f.lambda_mult(n * n)? / n as f64 * g;
        n += 1;
    }
    Ok(zeta2() * total)
}

/// The q-independent constant of the diagonal main term:
/// c = γ - ½ log 2π + Γ'(κ1/2)/Γ(κ1/2) + L'(1,sym²f1)/L(1,sym²f1) - 2ζ'(2)/ζ(2).
pub fn constant_c(f1: &Newform, lv: &LValues) -> f64 {
    EULER_GAMMA - 0.5 * (2.0 * PI).ln() + digamma_int(f1.weight / 2) + lv.sym2_logderiv
        - 2.0 * zeta_prime_2() / zeta2()
}

// ---- the diagonal term -------------------------------------------------------

/// Direct and closed-form values of the diagonal term Δ(q), with relative
/// deviations for both the literature closed form and the exact residue.
#[derive(Clone, Debug)]
pub struct DiagonalReport {
    pub q: u64,
    pub direct: f64,
    /// 2ψ(q) (P(1) L(1,sym²)/ζ(2)) (log q + c + P'(1)/P(1)), or the Q-form.
    pub closed_paper: f64,
    /// Same with the Euler factors of ζ^{(q)}(1+2s) kept: a φ(q)/q factor,
    /// a Σ_{p|q} log p/(p-1) shift, and -log 2π in place of -½ log 2π.
    pub closed_exact: f64,
    pub rel_dev_paper: f64,
    pub rel_dev_exact: f64,
}

/// Δ(q) = 2 ψ(q) Σ_{(n,q)=1} λ1(n) λ2(n) n^{-1} W(n²/q²) by direct summation.
pub fn diagonal_term(f1: &Newform, f2: &Newform, q: u64, table: &WeightTable) -> Result<f64> {
    let psi = psi_count(q)? as f64;
    let n_hi = ((q as f64) * crate::kernels::WEIGHT_TABLE_X_MAX.sqrt()).ceil() as u64;
    if n_hi as usize > f1.n_max.min(f2.n_max) {
        return Err(Error::TableExhausted(format!("diagonal needs λ up to {n_hi}")));
    }
    let mut sum = 0.0;
    for n in 1..=n_hi {
        if gcd(n, q) != 1 {
            continue;
        }
        let x = (n as f64 / q as f64).powi(2);
        let w = table.eval(x);
        if w != 0.0 {
            sum += f1.lambda(n)? * f2.lambda(n)? / n as f64 * w;
        }
    }
    Ok(2.0 * psi * sum)
}

/// Both closed forms of the diagonal next to its direct value.
pub fn diagonal_report(
    f1: &Newform,
    f2: &Newform,
    q: u64,
    table: &WeightTable,
    lv: &LValues,
) -> Result<DiagonalReport> {
    let direct = diagonal_term(f1, f2, q, table)?;
    let psi = psi_count(q)? as f64;
    let lf = local_factors(f1, f2, q)?;
    let fac = Factorization::of(q)?;
    let (closed_paper, closed_exact) = if f1.weight == f2.weight {
        let c = constant_c(f1, lv);
        let base = psi * lf.p_at_1 * lv.sym2 / zeta2();
        let paper = 2.0 * base * ((q as f64).ln() + c + lf.p_logderiv_at_1);
        // exact residue of the shifted contour: the removed Euler factors of
        // ζ^{(q)}(1+2s) contribute φ(q)/q and Σ log p/(p-1); both Γ-factors
        // contribute, so the archimedean constant carries -log 2π.
        let phi_ratio = euler_phi(q) as f64 / q as f64;
        let log_shift: f64 = fac
            .factors
            .iter()
            .map(|&(p, _)| (p as f64).ln() / (p as f64 - 1.0))
            .sum();
        let c_exact = EULER_GAMMA + digamma_int(f1.weight / 2) - (2.0 * PI).ln()
            + lv.sym2_logderiv
            - 2.0 * zeta_prime_2() / zeta2();
        let exact = 2.0
            * base
            * phi_ratio
            * ((q as f64).ln() + c_exact + lf.p_logderiv_at_1 + log_shift);
        (paper, exact)
    } else {
        let rankin = lv
            .rankin
            .ok_or_else(|| Error::Domain("Rankin value required for f1 ≠ f2".into()))?;
        let v = 2.0 * psi * lf.q_at_1 * rankin / zeta2();
        (v, v)
    };
    Ok(DiagonalReport {
        q,
        direct,
        closed_paper,
        closed_exact,
        rel_dev_paper: (direct - closed_paper).abs() / closed_paper.abs(),
        rel_dev_exact: (direct - closed_exact).abs() / closed_exact.abs(),
    })
}

// ---- central products and the moment ----------------------------------------

fn require_admissible_pair(f1: &Newform, f2: &Newform) -> Result<()> {
    if (f1.weight as i64 - f2.weight as i64).rem_euclid(4) != 0 {
        return Err(Error::Domain(format!(
            "κ1 = {} and κ2 = {} must agree mod 4 (otherwise the central product vanishes by root number)",
            f1.weight, f2.weight
        )));
    }
    Ok(())
}

/// L(1/2, f1 ⊗ χ) conj(L(1/2, f2 ⊗ χ)) via the balanced double sum
/// Σ (λ1(m)λ2(n) + λ2(m)λ1(n)) χ(m) χ̄(n) (nm)^{-1/2} W(nm/q²),
/// by the naive hyperbola loop: the oracle for small q.
pub fn central_product(
    f1: &Newform,
    f2: &Newform,
    chi: &DirichletCharacter,
    table: &WeightTable,
) -> Result<Complex64> {
    require_admissible_pair(f1, f2)?;
    if !chi.is_primitive() {
        return Err(Error::Domain("central product needs a primitive character".into()));
    }
    let q = chi.group.q;
    let cutoff = crate::kernels::WEIGHT_TABLE_X_MAX * (q as f64) * (q as f64);
    let n_hi = cutoff.floor() as u64;
    if n_hi as usize > f1.n_max.min(f2.n_max) {
        return Err(Error::TableExhausted(format!(
            "central product at q = {q} needs tables to {n_hi}"
        )));
    }
    let q2 = (q as f64) * (q as f64);
    let mut total = Complex64::new(0.0, 0.0);
    for n in 1..=n_hi {
        if gcd(n, q) != 1 {
            continue;
        }
        let chi_n_bar = chi.eval(n as i64).conj();
        let m_hi = (cutoff / n as f64).floor() as u64;
        for m in 1..=m_hi {
            if gcd(m, q) != 1 {
                continue;
            }
            let w = table.eval((n as f64 * m as f64) / q2);
            if w == 0.0 {
                continue;
            }
            let coeff = f1.lambda(m)? * f2.lambda(n)? + f2.lambda(m)? * f1.lambda(n)?;
            total += coeff * w / (n as f64 * m as f64).sqrt() * chi.eval(m as i64) * chi_n_bar;
        }
    }
    let im_scale = 1.0 + total.re.abs();
    if total.im.abs() > 1e-6 * im_scale {
        return Err(Error::Domain(format!(
            "central product not real: {total} (root number should be 1)"
        )));
    }
    Ok(total)
}

/// Result of the second-moment experiment at one modulus.
#[derive(Clone, Debug)]
pub struct MomentResult {
    pub q: u64,
    pub psi: i64,
    /// Σ over primitive χ of the central products.
    pub empirical: f64,
    /// (2/ζ(2)) ψ(q) M(f1, f2, q).
    pub main_term: f64,
    pub ratio: f64,
    /// One real central value per primitive character.
    pub per_character: Vec<f64>,
    /// Largest |Im|/(1+|Re|) seen across characters.
    pub max_im_residual: f64,
    /// Hyperbola cutoff actually used (in units of q²).
    pub x_cut: f64,
    /// Main term with the exact residue constants; see `main_term_exact`.
    pub main_term_exact: f64,
    pub ratio_exact: f64,
}

/// The residue-class profile G(u) = Σ_{m ≡ u n (q)} coeff(m, n): the double
/// sum collapses to a single pass since χ(m) χ̄(n) = χ(m n̄ mod q).
/// Per-character values are then φ(q)-length linear combinations, exactly
/// equal to the naive double sum.
fn residue_profile(
    f1: &Newform,
    f2: &Newform,
    q: u64,
    table: &WeightTable,
    x_cut: f64,
) -> Result<Vec<f64>> {
    let q2 = (q as f64) * (q as f64);
    let cutoff = (x_cut * q2).floor() as u64;
    if cutoff as usize > f1.n_max.min(f2.n_max) {
        return Err(Error::TableExhausted(format!(
            "moment at q = {q} needs tables to {cutoff}"
        )));
    }
    let inv = crate::arith::InverseTable::build(q);
    let mut profile = vec![0.0f64; q as usize];
    for n in 1..=cutoff {
        if gcd(n, q) != 1 {
            continue;
        }
        let n_inv = inv.get(n % q).expect("unit");
        let m_hi = cutoff / n;
        let l2n = f2.lambda(n)?;
        let l1n = f1.lambda(n)?;
        let inv_sqrt_n = (n as f64).sqrt().recip();
        for m in 1..=m_hi {
            if gcd(m, q) != 1 {
                continue;
            }
            let w = table.eval((n as f64 * m as f64) / q2);
            if w == 0.0 {
                continue;
            }
            let coeff = f1.lambda(m)? * l2n + f2.lambda(m)? * l1n;
            let u = (m % q) as u128 * n_inv as u128 % q as u128;
            profile[u as usize] += coeff * w * inv_sqrt_n / (m as f64).sqrt();
        }
    }
    Ok(profile)
}

/// The Theorem-1-shaped main term M(f1, f2, q).
pub fn main_term(f1: &Newform, f2: &Newform, q: u64, lv: &LValues) -> Result<f64> {
    let lf = local_factors(f1, f2, q)?;
    if f1.weight == f2.weight {
        let c = constant_c(f1, lv);
        Ok(lf.p_at_1 * lv.sym2 * ((q as f64).ln() + c + lf.p_logderiv_at_1))
    } else {
        let rankin = lv
            .rankin
            .ok_or_else(|| Error::Domain("Rankin value required".into()))?;
        Ok(lf.q_at_1 * rankin)
    }
}

/// The same main term with the exact residue constants (the Euler factors
/// of ζ^{(q)}(1+2s) kept and both Γ-factors counted); agrees with the
/// brute-force diagonal at the q^{-1/2} scale.
pub fn main_term_exact(f1: &Newform, f2: &Newform, q: u64, lv: &LValues) -> Result<f64> {
    let lf = local_factors(f1, f2, q)?;
    if f1.weight == f2.weight {
        let fac = Factorization::of(q)?;
        let phi_ratio = euler_phi(q) as f64 / q as f64;
        let log_shift: f64 = fac
            .factors
            .iter()
            .map(|&(p, _)| (p as f64).ln() / (p as f64 - 1.0))
            .sum();
        let c_exact = EULER_GAMMA + digamma_int(f1.weight / 2) - (2.0 * PI).ln()
            + lv.sym2_logderiv
            - 2.0 * zeta_prime_2() / zeta2();
        Ok(phi_ratio
            * lf.p_at_1
            * lv.sym2
            * ((q as f64).ln() + c_exact + lf.p_logderiv_at_1 + log_shift))
    } else {
        main_term(f1, f2, q, lv)
    }
}

/// The full experiment at one modulus: empirical character sum against the
/// main term. The per-character evaluator is exact (a reordering of the
/// naive double sum), cross-checked against `central_product` in tests.
pub fn moment_experiment(
    f1: &Newform,
    f2: &Newform,
    q: u64,
    table: &WeightTable,
    lv: &LValues,
) -> Result<MomentResult> {
    require_admissible_pair(f1, f2)?;
    if q % 4 == 2 {
        return Err(Error::Domain(format!(
            "q = {q} ≡ 2 mod 4 is inadmissible (no primitive characters)"
        )));
    }
    if q > 700 {
        return Err(Error::Unsupported(format!("q = {q} beyond desk scale 700")));
    }
    let n_max = f1.n_max.min(f2.n_max) as f64;
    let x_cut = crate::kernels::WEIGHT_TABLE_X_MAX.min(n_max / ((q as f64) * (q as f64)));
    if x_cut < 6.0 {
        return Err(Error::TableExhausted(format!(
            "tables support hyperbola cutoff {x_cut:.2} q² < 6 q² at q = {q}"
        )));
    }
    let profile = residue_profile(f1, f2, q, table, x_cut)?;
    let group = CharacterGroup::new(q)?;
    // dlog weights per unit: χ(u) = e(Σ e_i w_i(u) / L)
    let modl = group.value_order;
    let orders = group.generator_orders().to_vec();
    let mut units: Vec<(usize, Vec<u64>)> = Vec::new();
    for u in 0..q {
        if profile[u as usize] == 0.0 && (gcd(u, q) != 1 || q == 1) && q != 1 {
            continue;
        }
        if q > 1 && gcd(u, q) != 1 {
            continue;
        }
        let dl = group.dlog(u as i64).expect("unit");
        let w: Vec<u64> = dl
            .iter()
            .zip(&orders)
            .map(|(&d, &o)| d % o * (modl / o) % modl)
            .collect();
        units.push((u as usize, w));
    }
    let roots: Vec<Complex64> = (0..modl)
        .map(|k| crate::arith::unit_root(k as i64, modl))
        .collect();
    let chars = crate::characters::enumerate_characters(q)?;
    let mut per_character = Vec::new();
    let mut max_im = 0.0f64;
    for chi in chars.iter().filter(|c| c.is_primitive()) {
        let mut val = Complex64::new(0.0, 0.0);
        for (u, w) in &units {
            let mut k = 0u64;
            for (&e, &wi) in chi.exponents.iter().zip(w) {
                k += e % modl * wi % modl;
                k %= modl;
            }
            val += profile[*u] * roots[k as usize];
        }
        let residual = val.im.abs() / (1.0 + val.re.abs());
        max_im = max_im.max(residual);
        per_character.push(val.re);
    }
    let psi = psi_count(q)?;
    debug_assert_eq!(psi as usize, per_character.len());
    let empirical = pairwise_sum(&per_character);
    let mt = 2.0 / zeta2() * psi as f64 * main_term(f1, f2, q, lv)?;
    let mt_exact = 2.0 / zeta2() * psi as f64 * main_term_exact(f1, f2, q, lv)?;
    Ok(MomentResult {
        q,
        psi,
        empirical,
        main_term: mt,
        ratio: empirical / mt,
        per_character,
        max_im_residual: max_im,
        x_cut,
        main_term_exact: mt_exact,
        ratio_exact: empirical / mt_exact,
    })
}

// ---- shifted convolution sums -------------------------------------------------

/// D(ℓ1, ℓ2, h, N, M) = Σ_{ℓ1 n - ℓ2 m = h} λ1(m) λ2(n) V1(ℓ2 m/M) V2(ℓ1 n/N),
/// exactly from the coefficient tables.
pub fn shifted_convolution(
    f1: &Newform,
    f2: &Newform,
    l1: u64,
    l2: u64,
    h: i64,
    n_scale: f64,
    m_scale: f64,
    v1: &SmoothWindow,
    v2: &SmoothWindow,
) -> Result<f64> {
    let n_lo = ((v2.lo * n_scale) / l1 as f64).floor() as i64;
    let n_hi = ((v2.hi * n_scale) / l1 as f64).ceil() as i64;
    if n_hi <= 0 {
        return Ok(0.0);
    }
    if n_hi as usize > f2.n_max {
        return Err(Error::TableExhausted(format!("need λ2 up to {n_hi}")));
    }
    let mut total = 0.0;
    for n in n_lo.max(1)..=n_hi {
        let ln_val = l1 as i64 * n;
        let rem = ln_val - h;
        if rem <= 0 || rem % l2 as i64 != 0 {
            continue;
        }
        let m = rem / l2 as i64;
        let w1 = v1.value(rem as f64 / m_scale);
        if w1 == 0.0 {
            continue;
        }
        let w2 = v2.value(ln_val as f64 / n_scale);
        if w2 == 0.0 {
            continue;
        }
        if m as usize > f1.n_max {
            return Err(Error::TableExhausted(format!("need λ1 up to {m}")));
        }
        total += f1.lambda(m as u64)? * f2.lambda(n as u64)? * w1 * w2;
    }
    Ok(total)
}

/// S(ℓ1, ℓ2, d, N, M) = Σ_r D(ℓ1, ℓ2, r d, N, M).
pub fn shifted_convolution_avg(
    f1: &Newform,
    f2: &Newform,
    l1: u64,
    l2: u64,
    d: u64,
    n_scale: f64,
    m_scale: f64,
    v1: &SmoothWindow,
    v2: &SmoothWindow,
) -> Result<f64> {
    let r_hi = ((v2.hi * n_scale) / d as f64).ceil() as i64 + 1;
    let mut total = 0.0;
    for r in 1..=r_hi {
        total += shifted_convolution(f1, f2, l1, l2, r * d as i64, n_scale, m_scale, v1, v2)?;
    }
    Ok(total)
}

/// θ = 7/64: the current admissible Ramanujan-Petersson exponent.
pub const THETA: f64 = 7.0 / 64.0;

/// |D| against (N+M)^{1/2+θ} with the (log(N+M))^eps_power proxy.
pub fn shifted_individual_report(
    value: f64,
    n_scale: f64,
    m_scale: f64,
    h: i64,
    eps_power: f64,
) -> BoundReport {
    let nm = n_scale + m_scale;
    let rhs = nm.powf(0.5 + THETA) * nm.ln().powf(eps_power);
    BoundReport::new(value.abs(), rhs)
        .with("N", n_scale)
        .with("M", m_scale)
        .with("h", h)
}

/// |S| against the four-term averaged bound
/// N/d^{1/2} + N^{5/4}M^{1/4}/d + N^{3/4}M^{1/4}/d^{1/4} + N M^{1/2}/d^{3/4}.
pub fn shifted_average_report(
    value: f64,
    n_scale: f64,
    m_scale: f64,
    d: u64,
    eps_power: f64,
) -> BoundReport {
    let n = n_scale;
    let m = m_scale;
    let df = d as f64;
    let shape = n / df.sqrt() + n.powf(1.25) * m.powf(0.25) / df
        + n.powf(0.75) * m.powf(0.25) / df.powf(0.25)
        + n * m.sqrt() / df.powf(0.75);
    let rhs = shape * (df * n).ln().powf(eps_power);
    BoundReport::new(value.abs(), rhs)
        .with("N", n_scale)
        .with("M", m_scale)
        .with("d", d)
}
