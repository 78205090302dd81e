//! Exact convolution of integer sequences via number-theoretic transforms
//! modulo several 62-bit primes, recombined by CRT into big integers.
//!
//! This backs the power-series products that generate Hecke eigenform
//! coefficient tables, where coefficients overflow any fixed-width integer.

use crate::arith::{is_prime, mul_mod, pow_mod, Factorization};
use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use std::sync::OnceLock;

const MAX_LOG2: u32 = 24;

#[derive(Clone, Copy, Debug)]
pub struct NttPrime {
    pub p: u64,
    /// Generator of the 2^MAX_LOG2 subgroup.
    pub root: u64,
}

fn find_primes(count: usize) -> Vec<NttPrime> {
    // p = c·2^24 + 1 just below 2^62, scanning c downward deterministically
    let mut out = Vec::new();
    let mut c = (1u64 << (62 - MAX_LOG2)) - 1;
    while out.len() < count {
        let p = (c << MAX_LOG2) + 1;
        if is_prime(p) {
            let fac = Factorization::of(p - 1).expect("p-1 factorization");
            let mut g = 2u64;
            loop {
                if fac
                    .factors
                    .iter()
                    .all(|&(f, _)| pow_mod(g, (p - 1) / f, p) != 1)
                {
                    break;
                }
                g += 1;
            }
            let root = pow_mod(g, (p - 1) >> MAX_LOG2, p);
            out.push(NttPrime { p, root });
        }
        c -= 1;
    }
    out
}

fn primes() -> &'static [NttPrime] {
    static PRIMES: OnceLock<Vec<NttPrime>> = OnceLock::new();
    PRIMES.get_or_init(|| find_primes(8))
}

fn ntt_in_place(a: &mut [u64], p: u64, root_of_len: u64) {
    let n = a.len();
    debug_assert!(n.is_power_of_two());
    // bit reversal
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            a.swap(i, j);
        }
    }
    let mut len = 2usize;
    while len <= n {
        let w_len = pow_mod(root_of_len, (n / len) as u64, p);
        for start in (0..n).step_by(len) {
            let mut w = 1u64;
            for k in 0..len / 2 {
                let u = a[start + k];
                let v = mul_mod(a[start + k + len / 2], w, p);
                a[start + k] = if u + v >= p { u + v - p } else { u + v };
                a[start + k + len / 2] = if u >= v { u - v } else { u + p - v };
                w = mul_mod(w, w_len, p);
            }
        }
        len <<= 1;
    }
}

/// Convolution of `a` and `b` modulo one NTT prime, truncated to `out_len`.
/// The transform length covers the full product so nothing wraps around.
fn convolve_mod(a: &[u64], b: &[u64], out_len: usize, np: &NttPrime) -> Vec<u64> {
    let full = a.len() + b.len() - 1;
    let n = full.next_power_of_two().max(2);
    assert!(n <= 1 << MAX_LOG2, "convolution length {n} exceeds NTT capacity");
    let p = np.p;
    let root = pow_mod(np.root, 1 << (MAX_LOG2 - n.trailing_zeros()), p);
    let mut fa = vec![0u64; n];
    let mut fb = vec![0u64; n];
    for (i, &x) in a.iter().enumerate() {
        fa[i] = x % p;
    }
    for (i, &x) in b.iter().enumerate() {
        fb[i] = x % p;
    }
    ntt_in_place(&mut fa, p, root);
    ntt_in_place(&mut fb, p, root);
    for i in 0..n {
        fa[i] = mul_mod(fa[i], fb[i], p);
    }
    let root_inv = pow_mod(root, p - 2, p);
    ntt_in_place(&mut fa, p, root_inv);
    let n_inv = pow_mod(n as u64, p - 2, p);
    fa.truncate(full.min(out_len));
    for x in fa.iter_mut() {
        *x = mul_mod(*x, n_inv, p);
    }
    fa
}

fn bigint_mod_u64(x: &BigInt, p: u64) -> u64 {
    let mag = x.magnitude();
    let mut r = 0u64;
    let base = (1u128 << 64) % p as u128;
    for limb in mag.iter_u64_digits().rev() {
        r = ((r as u128 * base + (limb % p) as u128) % p as u128) as u64;
    }
    if x.is_negative() && r != 0 {
        p - r
    } else {
        r
    }
}

fn max_bits(v: &[BigInt]) -> u64 {
    v.iter().map(|x| x.bits()).max().unwrap_or(0)
}

/// Truncated product of two integer power series (index = exponent),
/// exact via multi-prime NTT and CRT reconstruction.
pub fn series_mul(a: &[BigInt], b: &[BigInt], out_len: usize) -> Vec<BigInt> {
    if a.is_empty() || b.is_empty() || out_len == 0 {
        return Vec::new();
    }
    let a = &a[..a.len().min(out_len)];
    let b = &b[..b.len().min(out_len)];
    if a.len().min(b.len()) <= 64 {
        return series_mul_naive(a, b, out_len);
    }
    let len = (a.len() + b.len() - 1).min(out_len);
    // bound: |coef| ≤ len · max|a| · max|b|
    let need_bits = max_bits(a) + max_bits(b) + 64 - (len as u64).leading_zeros() as u64 + 2;
    let all = primes();
    let mut chosen = Vec::new();
    let mut have: u64 = 0;
    for np in all {
        if have >= need_bits {
            break;
        }
        chosen.push(*np);
        have += 61;
    }
    assert!(have >= need_bits, "coefficients too large for prime pool");

    let residues: Vec<Vec<u64>> = chosen
        .iter()
        .map(|np| {
            let ra: Vec<u64> = a.iter().map(|x| bigint_mod_u64(x, np.p)).collect();
            let rb: Vec<u64> = b.iter().map(|x| bigint_mod_u64(x, np.p)).collect();
            convolve_mod(&ra, &rb, out_len, np)
        })
        .collect();

    // CRT: lift residue vectors into balanced BigInt representatives
    let mut modulus = BigInt::from(1u64);
    let mut out = vec![BigInt::zero(); len];
    for (k, np) in chosen.iter().enumerate() {
        let p = BigInt::from(np.p);
        if k == 0 {
            for (x, &r) in out.iter_mut().zip(&residues[0]) {
                *x = BigInt::from(r);
            }
        } else {
            let m_mod_p = bigint_mod_u64(&modulus, np.p);
            let m_inv = pow_mod(m_mod_p, np.p - 2, np.p);
            for (x, &r) in out.iter_mut().zip(&residues[k]) {
                let cur = bigint_mod_u64(x, np.p);
                let t = mul_mod(if r >= cur { r - cur } else { np.p - cur + r }, m_inv, np.p);
                *x += &modulus * BigInt::from(t);
            }
        }
        modulus *= p;
    }
    let half = &modulus >> 1;
    for x in out.iter_mut() {
        if &*x > &half {
            *x -= &modulus;
        }
    }
    out
}

fn series_mul_naive(a: &[BigInt], b: &[BigInt], out_len: usize) -> Vec<BigInt> {
    let len = (a.len() + b.len() - 1).min(out_len);
    let mut out = vec![BigInt::zero(); len];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            if i + j >= len {
                break;
            }
            out[i + j] += x * y;
        }
    }
    out
}
