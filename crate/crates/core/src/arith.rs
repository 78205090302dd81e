//! Exact integer and modular arithmetic: factorization, inverses, Jacobi
//! symbols, the canonical p-adic square-root branch, and Gauss-sum signs.

use crate::{Error, Result};
use num_complex::Complex64;

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

pub fn gcd_i(a: i64, b: u64) -> u64 {
    gcd(a.unsigned_abs(), b)
}

/// Reduce a signed integer into `[0, m)`.
pub fn reduce_mod(x: i64, m: u64) -> u64 {
    debug_assert!(m > 0 && m <= i64::MAX as u64);
    let r = x % m as i64;
    if r < 0 {
        (r + m as i64) as u64
    } else {
        r as u64
    }
}

pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn add_mod(a: u64, b: u64, m: u64) -> u64 {
    let s = a as u128 + b as u128;
    (s % m as u128) as u64
}

pub fn sub_mod(a: u64, b: u64, m: u64) -> u64 {
    add_mod(a, m - b % m, m)
}

pub fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Modular inverse of `a` modulo `m`, defined when `gcd(a, m) = 1`.
pub fn mod_inverse(a: i64, m: u64) -> Result<u64> {
    let a = reduce_mod(a, m);
    if m == 1 {
        return Ok(0);
    }
    let (mut r0, mut r1) = (m as i128, a as i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 != 1 {
        return Err(Error::Domain(format!(
            "{a} is not invertible modulo {m} (gcd = {r0})"
        )));
    }
    let mut t = t0 % m as i128;
    if t < 0 {
        t += m as i128;
    }
    Ok(t as u64)
}

/// Deterministic Miller-Rabin, valid for all u64.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let d = n - 1;
    let r = d.trailing_zeros();
    let d = d >> r;
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..r - 1 {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn pollard_rho(n: u64, seed: u64) -> u64 {
    // Brent's cycle variant; n odd composite.
    let mut x = seed % n;
    let mut y = x;
    let c = 1 + seed % (n - 1);
    let mut d = 1u64;
    let f = |v: u64| add_mod(mul_mod(v, v, n), c, n);
    while d == 1 {
        x = f(x);
        y = f(f(y));
        d = gcd(x.abs_diff(y), n);
    }
    d
}

fn factor_into(n: u64, out: &mut Vec<u64>) {
    if n == 1 {
        return;
    }
    if is_prime(n) {
        out.push(n);
        return;
    }
    let mut seed = 2u64;
    loop {
        let d = pollard_rho(n, seed);
        if d != n && d != 1 {
            factor_into(d, out);
            factor_into(n / d, out);
            return;
        }
        seed += 1;
    }
}

/// Canonical factorization of a positive integer with the derived
/// quantities used throughout: squarefree kernel, square part, prime
/// count, valuations, and the divisor supported on another's primes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Factorization {
    pub value: u64,
    /// `(prime, exponent)` pairs with strictly increasing primes.
    pub factors: Vec<(u64, u32)>,
}

impl Factorization {
    pub fn of(n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("factorize(0) undefined".into()));
        }
        if n > i64::MAX as u64 {
            return Err(Error::Unsupported(format!("{n} exceeds 2^63")));
        }
        let mut m = n;
        let mut factors: Vec<(u64, u32)> = Vec::new();
        for p in [2u64, 3, 5, 7, 11, 13] {
            if m % p == 0 {
                let mut e = 0;
                while m % p == 0 {
                    m /= p;
                    e += 1;
                }
                factors.push((p, e));
            }
        }
        let mut d = 17u64;
        while d * d <= m && d < 100_000 {
            if m % d == 0 {
                let mut e = 0;
                while m % d == 0 {
                    m /= d;
                    e += 1;
                }
                factors.push((d, e));
            }
            d += 2;
        }
        if m > 1 {
            let mut rest = Vec::new();
            factor_into(m, &mut rest);
            rest.sort_unstable();
            let mut i = 0;
            while i < rest.len() {
                let p = rest[i];
                let mut e = 0;
                while i < rest.len() && rest[i] == p {
                    e += 1;
                    i += 1;
                }
                factors.push((p, e));
            }
        }
        factors.sort_unstable();
        Ok(Factorization { value: n, factors })
    }

    /// Squarefree kernel rad(n).
    pub fn rad(&self) -> u64 {
        self.factors.iter().map(|&(p, _)| p).product()
    }

    /// Largest integer whose square divides n.
    pub fn square_part(&self) -> u64 {
        self.factors
            .iter()
            .map(|&(p, e)| p.pow(e / 2))
            .product()
    }

    /// Number of distinct prime factors.
    pub fn omega(&self) -> u32 {
        self.factors.len() as u32
    }

    pub fn ord_p(&self, p: u64) -> u32 {
        self.factors
            .iter()
            .find(|&&(q, _)| q == p)
            .map_or(0, |&(_, e)| e)
    }

    /// `(n, m^∞)`: the largest divisor of n supported on the primes of m.
    pub fn part_supported_on(&self, m: u64) -> u64 {
        self.factors
            .iter()
            .filter(|&&(p, _)| m % p == 0)
            .map(|&(p, e)| p.pow(e))
            .product()
    }

    pub fn is_cube_free(&self) -> bool {
        self.factors.iter().all(|&(_, e)| e <= 2)
    }

    pub fn divisors(&self) -> Vec<u64> {
        let mut divs = vec![1u64];
        for &(p, e) in &self.factors {
            let prev = divs.clone();
            let mut pe = 1u64;
            for _ in 0..e {
                pe *= p;
                divs.extend(prev.iter().map(|d| d * pe));
            }
        }
        divs.sort_unstable();
        divs
    }

    pub fn euler_phi(&self) -> u64 {
        self.factors
            .iter()
            .map(|&(p, e)| p.pow(e - 1) * (p - 1))
            .product()
    }

    pub fn mobius(&self) -> i64 {
        if self.factors.iter().any(|&(_, e)| e > 1) {
            0
        } else if self.factors.len() % 2 == 0 {
            1
        } else {
            -1
        }
    }
}

pub fn euler_phi(n: u64) -> u64 {
    Factorization::of(n).expect("phi argument").euler_phi()
}

pub fn divisor_count(n: u64) -> u64 {
    Factorization::of(n)
        .expect("divisor_count argument")
        .factors
        .iter()
        .map(|&(_, e)| (e + 1) as u64)
        .product()
}

pub fn mobius(n: u64) -> i64 {
    Factorization::of(n).expect("mobius argument").mobius()
}

/// `(n, m^∞)` without a precomputed factorization.
pub fn part_supported_on(mut n: u64, m: u64) -> u64 {
    let mut out = 1u64;
    let mut g = gcd(n, m);
    while g > 1 {
        // peel off the primes of m one gcd at a time
        let mut piece = 1u64;
        loop {
            let h = gcd(n, g);
            if h == 1 {
                break;
            }
            n /= h;
            piece *= h;
        }
        out *= piece;
        g = gcd(n, g);
    }
    out
}

/// Jacobi symbol (a/n) for odd positive n.
pub fn kronecker_symbol(a: i64, n: u64) -> Result<i64> {
    if n == 0 || n % 2 == 0 {
        return Err(Error::Domain(format!("Jacobi symbol needs odd n, got {n}")));
    }
    let mut a = reduce_mod(a, n);
    let mut n = n;
    let mut sign = 1i64;
    while a != 0 {
        while a % 2 == 0 {
            a /= 2;
            if matches!(n % 8, 3 | 5) {
                sign = -sign;
            }
        }
        std::mem::swap(&mut a, &mut n);
        if a % 4 == 3 && n % 4 == 3 {
            sign = -sign;
        }
        a %= n;
    }
    if n == 1 {
        Ok(sign)
    } else {
        Ok(0)
    }
}

/// An odd prime power q = p^s.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrimePowerModulus {
    pub p: u64,
    pub s: u32,
    pub q: u64,
}

impl PrimePowerModulus {
    pub fn new(p: u64, s: u32) -> Result<Self> {
        if p == 2 || !is_prime(p) {
            return Err(Error::Domain(format!("{p} is not an odd prime")));
        }
        if s == 0 {
            return Err(Error::Domain("exponent must be at least 1".into()));
        }
        let mut q: u64 = 1;
        for _ in 0..s {
            q = q
                .checked_mul(p)
                .ok_or_else(|| Error::Unsupported(format!("{p}^{s} overflows u64")))?;
        }
        if q > i64::MAX as u64 {
            return Err(Error::Unsupported(format!("{p}^{s} exceeds 2^63")));
        }
        Ok(PrimePowerModulus { p, s, q })
    }

    /// Same prime, lower exponent.
    pub fn truncate(&self, t: u32) -> Self {
        assert!(t >= 1 && t <= self.s);
        PrimePowerModulus {
            p: self.p,
            s: t,
            q: self.p.pow(t),
        }
    }
}

/// A branch of the square root modulo p: one chosen root for every nonzero
/// quadratic residue. The level-1 choice pins down the whole p-adic tower.
#[derive(Clone, Debug)]
pub struct SqrtBranch {
    pub p: u64,
    /// `choice[r]` is the chosen root of r, or 0 when r is not a unit square.
    choice: Vec<u64>,
}

impl SqrtBranch {
    /// Default branch: the root in `[1, (p-1)/2]`.
    pub fn default_for(p: u64) -> Self {
        let mut choice = vec![0u64; p as usize];
        for u in 1..=(p - 1) / 2 {
            choice[mul_mod(u, u, p) as usize] = u;
        }
        SqrtBranch { p, choice }
    }

    /// The opposite branch (root in `[(p+1)/2, p-1]`); used to confirm that
    /// branch-symmetric quantities do not depend on the choice.
    pub fn flipped_for(p: u64) -> Self {
        let mut b = Self::default_for(p);
        for r in b.choice.iter_mut() {
            if *r != 0 {
                *r = p - *r;
            }
        }
        b
    }

    pub fn choice(&self, r: u64) -> Option<u64> {
        let c = self.choice[(r % self.p) as usize];
        (c != 0).then_some(c)
    }

    pub fn is_square_unit(&self, r: u64) -> bool {
        self.choice[(r % self.p) as usize] != 0
    }
}

/// The branch square root `x_{1/2}` modulo p^s: the unique root congruent
/// to the level-1 choice. Requires x to be a unit square.
pub fn padic_sqrt(x: u64, q: &PrimePowerModulus, branch: &SqrtBranch) -> Result<u64> {
    assert_eq!(branch.p, q.p, "branch prime must match modulus");
    let p = q.p;
    let x = x % q.q;
    if x % p == 0 {
        return Err(Error::Domain(format!("{x} is not a unit modulo {p}")));
    }
    let base = branch
        .choice(x % p)
        .ok_or_else(|| Error::Domain(format!("{} is not a square modulo {p}", x % p)))?;
    // Newton lifting u -> u - (u^2 - x)/(2u), doubling the precision level.
    let mut level = 1u32;
    let mut modulus = p;
    let mut u = base;
    while level < q.s {
        let next = (2 * level).min(q.s);
        let m = q.p.pow(next);
        let u2 = mul_mod(u, u, m);
        let diff = sub_mod(u2, x % m, m);
        let inv2u = mod_inverse((2 * u % m) as i64, m)?;
        u = sub_mod(u, mul_mod(diff, inv2u, m), m);
        level = next;
        modulus = m;
    }
    debug_assert_eq!(mul_mod(u, u, modulus), x % modulus);
    debug_assert_eq!(u % p, base);
    Ok(u)
}

/// Sign τ(A, p^s) of the quadratic Gauss sum: Σ_{x mod p^s} e(Ax²/p^s)
/// equals p^{s/2} τ(A, p^s) for odd p and gcd(A, p) = 1.
pub fn gauss_sign(a: i64, q: &PrimePowerModulus) -> Result<Complex64> {
    if reduce_mod(a, q.p) == 0 {
        return Err(Error::Domain(format!("gauss_sign needs gcd(A, {}) = 1", q.p)));
    }
    if q.s % 2 == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let legendre = kronecker_symbol(a, q.p)? as f64;
    if q.p % 4 == 1 {
        Ok(Complex64::new(legendre, 0.0))
    } else {
        Ok(Complex64::new(0.0, legendre))
    }
}

/// e(num/den) with exact reduction of the fraction mod 1.
pub fn unit_root(num: i64, den: u64) -> Complex64 {
    let r = reduce_mod(num, den);
    let theta = 2.0 * std::f64::consts::PI * (r as f64) / (den as f64);
    Complex64::new(theta.cos(), theta.sin())
}

/// e(x) for real x, computed from the reduced fractional part.
pub fn unit_root_f(x: f64) -> Complex64 {
    let theta = 2.0 * std::f64::consts::PI * x.fract();
    Complex64::new(theta.cos(), theta.sin())
}

/// Table of modular inverses for all units modulo c.
pub struct InverseTable {
    pub c: u64,
    inv: Vec<u64>,
}

impl InverseTable {
    pub fn build(c: u64) -> Self {
        let mut inv = vec![0u64; c as usize];
        if c == 1 {
            return InverseTable { c, inv };
        }
        inv[1] = 1;
        for x in 2..c {
            if gcd(x, c) == 1 {
                inv[x as usize] = mod_inverse(x as i64, c).expect("unit");
            }
        }
        InverseTable { c, inv }
    }

    /// Inverse of x, or None when x is not a unit.
    pub fn get(&self, x: u64) -> Option<u64> {
        if self.c == 1 {
            return Some(0);
        }
        let v = self.inv[(x % self.c) as usize];
        (v != 0).then_some(v)
    }
}
