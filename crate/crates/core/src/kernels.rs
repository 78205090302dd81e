//! Numeric analytic kernels: Bessel J, the approximate-functional-equation
//! weight W, Hankel transforms of compactly supported windows, a Voronoi
//! summation residual, and the circle-method approximation with its exact
//! piecewise L² error.

use crate::arith::{euler_phi, gcd, gcd_i, mod_inverse, unit_root};
use crate::hecke::Newform;
use crate::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

// ---- complex log-gamma (Lanczos) ------------------------------------------

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// log Γ(z) for Re z > 0 (sufficient here: every contour stays right of 0).
pub fn ln_gamma(z: Complex64) -> Complex64 {
    debug_assert!(z.re > 0.0, "ln_gamma needs Re z > 0, got {z}");
    let mut acc = Complex64::new(LANCZOS[0], 0.0);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (z + (i as f64 - 1.0));
    }
    let t = z + LANCZOS_G - 0.5;
    0.5 * (2.0 * PI).ln() + (z - 0.5) * t.ln() - t + acc.ln()
}

// ---- Gauss-Legendre panels -------------------------------------------------

/// 16-point Gauss-Legendre nodes and weights on [-1, 1], by Newton on P_16.
pub(crate) fn gl16() -> &'static ([f64; 16], [f64; 16]) {
    use std::sync::OnceLock;
    static CACHE: OnceLock<([f64; 16], [f64; 16])> = OnceLock::new();
    CACHE.get_or_init(|| {
        let n = 16usize;
        let mut xs = [0.0f64; 16];
        let mut ws = [0.0f64; 16];
        for i in 0..n {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..60 {
                let (mut p0, mut p1) = (1.0f64, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (mut p0, mut p1) = (1.0f64, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            xs[n - 1 - i] = x;
            ws[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (xs, ws)
    })
}

/// ∫_a^b f, Gauss-Legendre 16 on `panels` equal panels.
pub fn integrate_panels<F: Fn(f64) -> f64>(a: f64, b: f64, panels: usize, f: F) -> f64 {
    let (xs, ws) = gl16();
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let mut acc = 0.0;
        for (x, w) in xs.iter().zip(ws) {
            acc += w * f(mid + 0.5 * h * x);
        }
        total += acc * 0.5 * h;
    }
    total
}

fn integrate_panels_c<F: Fn(f64) -> Complex64>(a: f64, b: f64, panels: usize, f: F) -> Complex64 {
    let (xs, ws) = gl16();
    let h = (b - a) / panels as f64;
    let mut total = Complex64::new(0.0, 0.0);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let mut acc = Complex64::new(0.0, 0.0);
        for (x, w) in xs.iter().zip(ws) {
            acc += *w * f(mid + 0.5 * h * x);
        }
        total += acc * 0.5 * h;
    }
    total
}

// ---- Bessel J of integer order ---------------------------------------------

/// J_ν(x) for integer ν ≥ 0 and x ≥ 0. Three regimes: ascending series for
/// small x (no catastrophic cancellation there), the cosine integral with a
/// spectrally convergent trapezoid rule in the middle, and the Hankel
/// asymptotic expansion truncated at its smallest term for large x.
pub fn bessel_j(nu: u32, x: f64) -> f64 {
    assert!(x >= 0.0, "bessel_j needs x ≥ 0");
    let nf = nu as f64;
    if x == 0.0 {
        return if nu == 0 { 1.0 } else { 0.0 };
    }
    if x <= nf.max(12.0) {
        bessel_series(nu, x)
    } else if x >= (nf * nf).max(30.0) {
        bessel_asymptotic(nu, x)
    } else {
        bessel_integral(nu, x)
    }
}

fn bessel_series(nu: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    // first term in log space to survive large ν
    let ln_t0 = nu as f64 * half.ln() - ln_gamma(Complex64::new(nu as f64 + 1.0, 0.0)).re;
    let t0 = ln_t0.exp();
    let mut term = t0;
    let mut sum = term;
    let x2 = half * half;
    for k in 1..500 {
        term *= -x2 / (k as f64 * (nu as f64 + k as f64));
        sum += term;
        if term.abs() < 1e-18 * sum.abs() + 1e-300 {
            break;
        }
    }
    sum
}

fn bessel_integral(nu: u32, x: f64) -> f64 {
    // J_ν(x) = (1/π) ∫_0^π cos(νθ - x sin θ) dθ; trapezoid error decays
    // like J_{2N-ν}(x), negligible once N comfortably exceeds x + ν.
    let n = 48 + (2.0 * x) as usize + 2 * nu as usize;
    let h = PI / n as f64;
    let f = |theta: f64| (nu as f64 * theta - x * theta.sin()).cos();
    let mut sum = 0.5 * (f(0.0) + f(PI));
    for i in 1..n {
        sum += f(i as f64 * h);
    }
    sum * h / PI
}

fn bessel_asymptotic(nu: u32, x: f64) -> f64 {
    let mu = 4.0 * (nu as f64) * (nu as f64);
    let omega = x - 0.5 * nu as f64 * PI - 0.25 * PI;
    // a_j/x^j with a_j = Π_{i≤j} (μ - (2i-1)²) / (j! 8^j)
    let mut terms = vec![1.0f64];
    let mut t = 1.0f64;
    for j in 0..24 {
        let num = mu - (2 * j + 1) as f64 * (2 * j + 1) as f64;
        t *= num / (8.0 * (j as f64 + 1.0) * x);
        if t.abs() > terms.last().unwrap().abs() && j > 2 {
            break; // asymptotic series started diverging
        }
        terms.push(t);
    }
    let mut p = 0.0;
    let mut q = 0.0;
    for (j, &t) in terms.iter().enumerate() {
        let signed = if (j / 2) % 2 == 0 { t } else { -t };
        if j % 2 == 0 {
            p += signed;
        } else {
            q += signed;
        }
    }
    (2.0 / (PI * x)).sqrt() * (p * omega.cos() - q * omega.sin())
}

// ---- the AFE weight W ------------------------------------------------------

/// The weight of the approximate functional equation:
/// W(x) = (1/2πi) ∫ Γ(κ1/2+s)Γ(κ2/2+s) / ((2π)^{2s} Γ(κ1/2)Γ(κ2/2)) x^{-s} ds/s.
#[derive(Clone, Debug)]
pub struct WeightW {
    pub kappa1: u32,
    pub kappa2: u32,
    /// Contour abscissa; the value is abscissa-independent.
    pub sigma: f64,
    /// Initial truncation height; doubled automatically until stable.
    pub t_mellin: f64,
}

impl WeightW {
    pub fn new(kappa1: u32, kappa2: u32) -> Self {
        WeightW {
            kappa1,
            kappa2,
            sigma: 2.0,
            t_mellin: 40.0,
        }
    }

    fn g_factor(&self, s: Complex64) -> Complex64 {
        let k1 = self.kappa1 as f64 / 2.0;
        let k2 = self.kappa2 as f64 / 2.0;
        (ln_gamma(Complex64::new(k1, 0.0) + s) + ln_gamma(Complex64::new(k2, 0.0) + s)
            - ln_gamma(Complex64::new(k1, 0.0))
            - ln_gamma(Complex64::new(k2, 0.0))
            - 2.0 * s * (2.0 * PI).ln())
        .exp()
    }

    fn quad(&self, x: f64, t_max: f64, sigma: f64, with_inv_s: bool, power_shift: f64) -> f64 {
        let freq = x.ln().abs() + 1.0;
        let panel_len = (0.5f64).min(2.0 / freq);
        let panels = (t_max / panel_len).ceil() as usize;
        let val = integrate_panels_c(0.0, t_max, panels, |t| {
            let s = Complex64::new(sigma, t);
            let mut f = self.g_factor(s) * (-(s + power_shift) * x.ln()).exp();
            if with_inv_s {
                f /= s;
            }
            f
        });
        val.re / PI
    }

    /// Below this x the contour is moved left of the pole at s = 0, picking
    /// up residue 1 and killing the x^{-σ} cancellation.
    const SMALL_X: f64 = 0.01;
    /// Below this x the left-contour correction is under 1e-18 of the value.
    const TINY_X: f64 = 1e-4;

    /// W(x) by contour quadrature, with automatic height increase until the
    /// value is stable to 1e-10.
    pub fn eval(&self, x: f64) -> f64 {
        assert!(x > 0.0);
        if x < Self::TINY_X {
            return 1.0;
        }
        let (sigma, base) = if x < Self::SMALL_X {
            (-0.5, 1.0)
        } else {
            (self.sigma, 0.0)
        };
        let mut t = self.t_mellin;
        let mut v = self.quad(x, t, sigma, true, 0.0);
        for _ in 0..4 {
            let v2 = self.quad(x, 2.0 * t, sigma, true, 0.0);
            if (v2 - v).abs() < 1e-10 * (1.0 + v2.abs()) {
                return base + v2;
            }
            t *= 2.0;
            v = v2;
        }
        base + v
    }

    /// W'(x) = -(1/2πi) ∫ G(s) x^{-s-1} ds; the integrand has no pole at
    /// s = 0, so the left shift needs no residue.
    pub fn eval_deriv(&self, x: f64) -> f64 {
        if x < Self::TINY_X {
            return 0.0;
        }
        let sigma = if x < Self::SMALL_X { -0.5 } else { self.sigma };
        -self.quad(x, 2.0 * self.t_mellin, sigma, false, 1.0)
    }
}

/// Spec-level operation: one W(x) evaluation.
pub fn weight_w(w: &WeightW, x: f64) -> f64 {
    w.eval(x)
}

/// Dense Hermite-interpolated table of W on a geometric grid, for the hot
/// loops of the moment experiment. Below the grid W = 1 to far beyond
/// double precision; above it W is below 1e-19.
pub struct WeightTable {
    ln_lo: f64,
    step: f64,
    /// (W, dW/dlnx) at each grid point
    vals: Vec<(f64, f64)>,
}

pub const WEIGHT_TABLE_X_MAX: f64 = 12.0;

impl WeightTable {
    pub fn build(w: &WeightW) -> Self {
        let ln_lo = WeightW::TINY_X.ln();
        let ln_hi = WEIGHT_TABLE_X_MAX.ln();
        let step = 0.01;
        let n = ((ln_hi - ln_lo) / step).ceil() as usize + 2;
        let vals = (0..n)
            .map(|i| {
                let x = (ln_lo + i as f64 * step).exp();
                (w.eval(x), x * w.eval_deriv(x))
            })
            .collect();
        WeightTable { ln_lo, step, vals }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        let lx = x.ln();
        if lx <= self.ln_lo {
            return 1.0;
        }
        let pos = (lx - self.ln_lo) / self.step;
        let i = pos.floor() as usize;
        if i + 1 >= self.vals.len() {
            return 0.0;
        }
        let t = pos - i as f64;
        let (v0, d0) = self.vals[i];
        let (v1, d1) = self.vals[i + 1];
        let d0 = d0 * self.step;
        let d1 = d1 * self.step;
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * v0
            + (t3 - 2.0 * t2 + t) * d0
            + (-2.0 * t3 + 3.0 * t2) * v1
            + (t3 - t2) * d1
    }
}

// ---- smooth windows --------------------------------------------------------

/// Polynomial bump c (x-lo)^4 (hi-x)^4 on [lo, hi], normalized to 1 at the
/// midpoint; C³ at the endpoints with analytic derivatives.
#[derive(Clone, Copy, Debug)]
pub struct SmoothWindow {
    pub lo: f64,
    pub hi: f64,
    norm: f64,
}

impl SmoothWindow {
    pub fn bump(lo: f64, hi: f64) -> Self {
        let half = 0.5 * (hi - lo);
        SmoothWindow {
            lo,
            hi,
            norm: half.powi(8).recip(),
        }
    }

    /// The standard window on [1, 2].
    pub fn standard() -> Self {
        Self::bump(1.0, 2.0)
    }

    pub fn value(&self, x: f64) -> f64 {
        if x <= self.lo || x >= self.hi {
            return 0.0;
        }
        self.norm * (x - self.lo).powi(4) * (self.hi - x).powi(4)
    }

    pub fn d1(&self, x: f64) -> f64 {
        if x <= self.lo || x >= self.hi {
            return 0.0;
        }
        let a = x - self.lo;
        let b = self.hi - x;
        self.norm * (4.0 * a.powi(3) * b.powi(4) - 4.0 * a.powi(4) * b.powi(3))
    }

    pub fn d2(&self, x: f64) -> f64 {
        if x <= self.lo || x >= self.hi {
            return 0.0;
        }
        let a = x - self.lo;
        let b = self.hi - x;
        self.norm
            * (12.0 * a.powi(2) * b.powi(4) - 32.0 * a.powi(3) * b.powi(3)
                + 12.0 * a.powi(4) * b.powi(2))
    }
}

// ---- Hankel transform ------------------------------------------------------

/// V̊(y) = 2π i^κ ∫ V(x) J_{κ-1}(4π √(xy)) dx over the window support.
pub fn hankel_transform(v: &SmoothWindow, kappa: u32, y: f64) -> Complex64 {
    let phase_span = 4.0 * PI * (v.hi.sqrt() - v.lo.sqrt()) * y.max(0.0).sqrt();
    let panels = 8 + (phase_span / 2.5) as usize;
    let integral = integrate_panels(v.lo, v.hi, panels, |x| {
        v.value(x) * bessel_j(kappa - 1, 4.0 * PI * (x * y).sqrt())
    });
    let i_pow = match kappa % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    };
    2.0 * PI * i_pow * integral
}

/// Twice-integrated-by-parts decay bound: |V̊(y)| ≤ C_V / y with
/// C_V = (2π)^{-1} ∫ |∂²(V(x) x^{-(κ-1)/2})| x^{(κ+1)/2} dx, using |J| ≤ 1.
pub fn hankel_decay_bound(v: &SmoothWindow, kappa: u32) -> f64 {
    let e = -((kappa as f64 - 1.0) / 2.0);
    let integrand = |x: f64| {
        let f2 = v.d2(x) * x.powf(e)
            + 2.0 * v.d1(x) * e * x.powf(e - 1.0)
            + v.value(x) * e * (e - 1.0) * x.powf(e - 2.0);
        f2.abs() * x.powf((kappa as f64 + 1.0) / 2.0)
    };
    integrate_panels(v.lo, v.hi, 64, integrand) / (2.0 * PI)
}

// ---- Voronoi residual ------------------------------------------------------

/// |LHS - RHS| of the Voronoi identity
/// Σ λ(n) e(bn/c) V(n/N) = (N/c) Σ λ(n) e(-b̄n/c) V̊(n/(c²/N)).
pub fn voronoi_residual(
    f: &Newform,
    b: i64,
    c: u64,
    v: &SmoothWindow,
    n_scale: f64,
) -> Result<f64> {
    if c == 0 || gcd_i(b, c) != 1 {
        return Err(Error::Domain(format!("need gcd({b}, {c}) = 1")));
    }
    let mut lhs = Complex64::new(0.0, 0.0);
    let n_hi = (v.hi * n_scale).ceil() as u64;
    if n_hi as usize > f.n_max {
        return Err(Error::TableExhausted(format!("need λ up to {n_hi}")));
    }
    for n in 1..=n_hi {
        let w = v.value(n as f64 / n_scale);
        if w != 0.0 {
            lhs += f.lambda(n)? * w * unit_root(b * n as i64, c);
        }
    }
    let b_inv = if c == 1 { 0 } else { mod_inverse(b, c)? as i64 };
    let scale = c as f64 * c as f64 / n_scale;
    let mut rhs = Complex64::new(0.0, 0.0);
    let mut quiet = 0u32;
    let mut n = 1u64;
    loop {
        let y = n as f64 / scale;
        let ring = hankel_transform(v, f.weight, y);
        if n as usize > f.n_max {
            return Err(Error::TableExhausted(format!(
                "Voronoi dual sum needs λ({n})"
            )));
        }
        rhs += f.lambda(n)? * ring * unit_root(-b_inv * n as i64, c);
        if ring.norm() < 1e-10 {
            quiet += 1;
            if quiet >= 12 {
                break;
            }
        } else {
            quiet = 0;
        }
        n += 1;
        if n > 200_000 {
            return Err(Error::Unsupported("Voronoi dual sum did not decay".into()));
        }
    }
    rhs *= n_scale / c as f64;
    Ok((lhs - rhs).norm())
}

// ---- Jutila's circle-method approximation ----------------------------------

/// Weighted Farey-arc approximation of the constant function 1 on R/Z.
#[derive(Clone, Debug)]
pub struct CircleApprox {
    /// Scale Q: moduli live in [Q, 2Q].
    pub q_scale: f64,
    /// Half-width δ with Q^{-2} ≤ δ ≤ Q^{-1}.
    pub delta: f64,
    /// (modulus, weight) pairs, weights in [0, 1].
    pub weights: Vec<(u64, f64)>,
}

impl CircleApprox {
    /// w ≡ 1 on all integers in [Q, 2Q].
    pub fn flat(q_scale: f64, delta: f64) -> Self {
        let lo = q_scale.ceil() as u64;
        let hi = (2.0 * q_scale).floor() as u64;
        CircleApprox {
            q_scale,
            delta,
            weights: (lo..=hi).map(|c| (c, 1.0)).collect(),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.weights
            .iter()
            .map(|&(c, w)| w * euler_phi(c) as f64)
            .sum()
    }

    fn validate(&self) -> Result<f64> {
        let q = self.q_scale;
        if !(self.delta >= q.powi(-2) * 0.999 && self.delta <= q.recip() * 1.001) {
            return Err(Error::Domain(format!(
                "δ = {} outside [Q^-2, Q^-1] for Q = {q}",
                self.delta
            )));
        }
        for &(c, w) in &self.weights {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::Domain("weights must lie in [0, 1]".into()));
            }
            if w > 0.0 && ((c as f64) < q || (c as f64) > 2.0 * q) {
                return Err(Error::Domain(format!("modulus {c} outside [Q, 2Q]")));
            }
        }
        let lambda = self.lambda();
        if lambda <= 0.0 {
            return Err(Error::Domain("Λ = Σ w(c) φ(c) must be positive".into()));
        }
        Ok(lambda)
    }

    /// The level sequence of Ĩ as a sorted list of breakpoints on [0, 1]:
    /// returns (positions, level deltas in units of w/(2δΛ)).
    fn events(&self) -> Vec<(f64, f64)> {
        let mut ev: Vec<(f64, f64)> = Vec::new();
        for &(c, w) in &self.weights {
            if w == 0.0 {
                continue;
            }
            for d in 0..c {
                if gcd(d, c) != 1 && c != 1 {
                    continue;
                }
                let center = d as f64 / c as f64;
                let mut lo = center - self.delta;
                let mut hi = center + self.delta;
                // wrap around R/Z
                if lo < 0.0 {
                    ev.push((lo + 1.0, w));
                    ev.push((1.0, -w));
                    lo = 0.0;
                }
                if hi > 1.0 {
                    ev.push((0.0, w));
                    ev.push((hi - 1.0, -w));
                    hi = 1.0;
                }
                ev.push((lo, w));
                ev.push((hi, -w));
            }
        }
        ev.sort_by(|a, b| a.0.total_cmp(&b.0));
        ev
    }
}

/// Exact piecewise integration of (1 - Ĩ)² and of Ĩ over [0, 1].
fn sweep(ca: &CircleApprox) -> Result<(f64, f64)> {
    let lambda = ca.validate()?;
    let scale = 1.0 / (2.0 * ca.delta * lambda);
    let events = ca.events();
    let mut l2 = 0.0f64;
    let mut mass = 0.0f64;
    let mut level = 0.0f64;
    let mut pos = 0.0f64;
    let mut i = 0usize;
    while i < events.len() {
        let (x, _) = events[i];
        let len = x - pos;
        if len > 0.0 {
            let v = level * scale;
            l2 += (1.0 - v) * (1.0 - v) * len;
            mass += v * len;
        }
        // apply all deltas at identical positions at once
        while i < events.len() && events[i].0 == x {
            level += events[i].1;
            i += 1;
        }
        pos = x;
    }
    if pos < 1.0 {
        let v = level * scale;
        l2 += (1.0 - v) * (1.0 - v) * (1.0 - pos);
        mass += v * (1.0 - pos);
    }
    Ok((l2, mass))
}

/// (∫ (1-Ĩ)², bound Q² (log Q)^eps_power / (δ Λ²)): the L² error by exact
/// interval sweeping, next to the lemma-shaped bound.
pub fn jutila_approximation(ca: &CircleApprox, eps_power: f64) -> Result<(f64, f64)> {
    let (l2, _) = sweep(ca)?;
    let lambda = ca.lambda();
    let q = ca.q_scale;
    let bound = q.ln().powf(eps_power) * q * q / (ca.delta * lambda * lambda);
    Ok((l2, bound))
}

/// ∫_0^1 Ĩ(α) dα; equal to 1 by construction, checked exactly in tests.
pub fn jutila_mass(ca: &CircleApprox) -> Result<f64> {
    Ok(sweep(ca)?.1)
}
