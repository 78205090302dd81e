//! Fourier coefficients and normalized Hecke eigenvalues of the level-1
//! holomorphic eigenforms of one-dimensional weight (κ ∈ {12, 16, 18, 20,
//! 22, 26}), generated exactly from the discriminant form and Eisenstein
//! series, with a checksummed on-disk coefficient cache.

use crate::arith::{gcd, mobius, Factorization};
use crate::ntt::series_mul;
use crate::{Error, Result};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{Signed, ToPrimitive, Zero};
use std::io::{Read, Write};
use std::path::PathBuf;

pub const SUPPORTED_WEIGHTS: [u32; 6] = [12, 16, 18, 20, 22, 26];
pub const MAX_TABLE: usize = 1_000_000;

/// A level-1 holomorphic Hecke eigenform: exact integer coefficients a(n)
/// and normalized eigenvalues λ(n) = a(n)/n^{(κ-1)/2}.
#[derive(Debug)]
pub struct Newform {
    pub weight: u32,
    pub n_max: usize,
    /// a(n) at index n; index 0 unused.
    pub coeffs: Vec<BigInt>,
    /// λ(n) at index n; index 0 unused.
    pub lambda: Vec<f64>,
}

/// Top-bits conversion: relative error below 2^-52 even for huge values.
pub fn big_to_f64(x: &BigInt) -> f64 {
    let bits = x.bits();
    if bits == 0 {
        return 0.0;
    }
    if bits <= 63 {
        x.to_i64().unwrap() as f64
    } else {
        let shift = bits - 63;
        let top = (x.magnitude() >> shift).to_u64().unwrap() as f64;
        let top = if x.is_negative() { -top } else { top };
        top * 2f64.powi(shift as i32)
    }
}

fn normalization(n: u64, weight: u32) -> f64 {
    let half = ((weight - 2) / 2) as i32;
    (n as f64).powi(half) * (n as f64).sqrt()
}

/// ∏_{n≥1} (1 - q^n) to `len` terms via the pentagonal number theorem.
fn pentagonal_series(len: usize) -> Vec<BigInt> {
    let mut out = vec![BigInt::zero(); len];
    out[0] = BigInt::from(1);
    let mut k = 1i64;
    loop {
        let e1 = k * (3 * k - 1) / 2;
        let e2 = k * (3 * k + 1) / 2;
        if e1 as usize >= len && e2 as usize >= len {
            break;
        }
        let sign = if k % 2 == 0 { 1 } else { -1 };
        for e in [e1, e2] {
            if (e as usize) < len {
                out[e as usize] = BigInt::from(sign);
            }
        }
        k += 1;
    }
    out
}

fn sigma_pow_series(power: u32, len: usize) -> Vec<i128> {
    let mut out = vec![0i128; len];
    for d in 1..len as u64 {
        let dk = (d as i128).pow(power);
        let mut m = d as usize;
        while m < len {
            out[m] += dk;
            m += d as usize;
        }
    }
    out
}

/// Normalized Eisenstein series E_k for k in {4, 6}, exact coefficients.
fn eisenstein(k: u32, len: usize) -> Vec<BigInt> {
    let (power, scale) = match k {
        4 => (3u32, 240i128),
        6 => (5u32, -504i128),
        _ => unreachable!(),
    };
    let sigma = sigma_pow_series(power, len);
    let mut out: Vec<BigInt> = sigma.iter().map(|&s| BigInt::from(scale * s)).collect();
    out[0] = BigInt::from(1);
    out
}

/// Coefficients of Δ = q ∏ (1-q^n)^24 up to n ≤ n_max.
fn discriminant_coeffs(n_max: usize) -> Vec<BigInt> {
    let eta = pentagonal_series(n_max);
    let eta2 = series_mul(&eta, &eta, n_max);
    let eta4 = series_mul(&eta2, &eta2, n_max);
    let eta8 = series_mul(&eta4, &eta4, n_max);
    let eta16 = series_mul(&eta8, &eta8, n_max);
    let eta24 = series_mul(&eta16, &eta8, n_max);
    let mut coeffs = vec![BigInt::zero(); n_max + 1];
    for (i, c) in eta24.into_iter().enumerate() {
        coeffs[i + 1] = c;
    }
    coeffs
}

fn build_coeffs(weight: u32, n_max: usize) -> Result<Vec<BigInt>> {
    if !SUPPORTED_WEIGHTS.contains(&weight) {
        return Err(Error::Unsupported(format!(
            "weight {weight} is not a one-dimensional level-1 space; supported: {SUPPORTED_WEIGHTS:?}"
        )));
    }
    if n_max == 0 || n_max > MAX_TABLE {
        return Err(Error::Unsupported(format!(
            "coefficient table length {n_max} outside 1..={MAX_TABLE}"
        )));
    }
    let delta = discriminant_coeffs(n_max);
    let mut coeffs = match weight {
        12 => delta,
        16 => series_mul(&delta, &eisenstein(4, n_max + 1), n_max + 1),
        18 => series_mul(&delta, &eisenstein(6, n_max + 1), n_max + 1),
        20 => {
            let g16 = series_mul(&delta, &eisenstein(4, n_max + 1), n_max + 1);
            series_mul(&g16, &eisenstein(4, n_max + 1), n_max + 1)
        }
        22 => {
            let g16 = series_mul(&delta, &eisenstein(4, n_max + 1), n_max + 1);
            series_mul(&g16, &eisenstein(6, n_max + 1), n_max + 1)
        }
        26 => {
            let g16 = series_mul(&delta, &eisenstein(4, n_max + 1), n_max + 1);
            let g20 = series_mul(&g16, &eisenstein(4, n_max + 1), n_max + 1);
            series_mul(&g20, &eisenstein(6, n_max + 1), n_max + 1)
        }
        _ => unreachable!(),
    };
    coeffs.resize(n_max + 1, BigInt::zero());
    Ok(coeffs)
}

/// Exact coefficient table for the given weight, no cache involved.
pub fn compute_coefficients(weight: u32, n_max: usize) -> Result<Newform> {
    let coeffs = build_coeffs(weight, n_max)?;
    Ok(Newform::from_coeffs(weight, coeffs))
}

impl Newform {
    fn from_coeffs(weight: u32, coeffs: Vec<BigInt>) -> Self {
        let n_max = coeffs.len() - 1;
        let mut lambda = vec![0.0f64; n_max + 1];
        for n in 1..=n_max {
            lambda[n] = big_to_f64(&coeffs[n]) / normalization(n as u64, weight);
        }
        Newform {
            weight,
            n_max,
            coeffs,
            lambda,
        }
    }

    pub fn lambda(&self, n: u64) -> Result<f64> {
        if n == 0 || n as usize > self.n_max {
            return Err(Error::TableExhausted(format!(
                "λ({n}) beyond table (n_max = {})",
                self.n_max
            )));
        }
        Ok(self.lambda[n as usize])
    }

    /// λ(n) for n possibly beyond the table, through multiplicativity and
    /// the Hecke recursion at prime powers. Needs λ(p) for every p | n.
    pub fn lambda_mult(&self, n: u64) -> Result<f64> {
        if n != 0 && n as usize <= self.n_max {
            return self.lambda(n);
        }
        let fac = Factorization::of(n)?;
        let mut out = 1.0f64;
        for &(p, e) in &fac.factors {
            let lp = self.lambda(p)?;
            let mut prev = 1.0f64;
            let mut cur = lp;
            for _ in 1..e {
                let next = lp * cur - prev;
                prev = cur;
                cur = next;
            }
            out *= cur;
        }
        Ok(out)
    }

    /// Hecke relation Σ_{d | (n,m)} μ(d) λ(n/d) λ(m/d); checked against
    /// λ(nm) from the table before being returned.
    pub fn hecke_composition(&self, n: u64, m: u64) -> Result<f64> {
        let nm = n
            .checked_mul(m)
            .ok_or_else(|| Error::TableExhausted("nm overflows".to_string()))?;
        let direct = self.lambda(nm)?;
        let g = Factorization::of(gcd(n, m))?;
        let mut sum = 0.0;
        for d in g.divisors() {
            let mu = mobius(d);
            if mu != 0 {
                sum += mu as f64 * self.lambda(n / d)? * self.lambda(m / d)?;
            }
        }
        let scale = 1.0 + direct.abs();
        if (sum - direct).abs() > 1e-9 * scale {
            return Err(Error::Domain(format!(
                "Hecke relation violated at (n, m) = ({n}, {m}): {sum} vs {direct}"
            )));
        }
        Ok(sum)
    }

    /// (Σ_{n≤x} |λ(n)|², Σ_{n≤x} λ(n) e(αn)): the Rankin-Selberg mass and
    /// the Wilton twisted sum, both by direct summation.
    pub fn eigenvalue_statistics(&self, x: u64, alpha: f64) -> Result<(f64, Complex64)> {
        if x as usize > self.n_max {
            return Err(Error::TableExhausted(format!("x = {x} beyond table")));
        }
        let mut rankin = 0.0;
        let mut wilton = Complex64::new(0.0, 0.0);
        for n in 1..=x {
            let l = self.lambda[n as usize];
            rankin += l * l;
            wilton += l * crate::arith::unit_root_f(alpha * n as f64);
        }
        Ok((rankin, wilton))
    }
}

// ---- on-disk cache -------------------------------------------------------

const CACHE_MAGIC: &[u8; 4] = b"KLCF";
const CACHE_VERSION: u32 = 1;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn write_varint(out: &mut Vec<u8>, x: &BigInt) {
    // zigzag then little-endian base-128
    let mut z = if x.is_negative() {
        (((-x) - 1u32) << 1u32).magnitude() + 1u32
    } else {
        (x << 1u32).magnitude().clone()
    };
    let mask = num_bigint::BigUint::from(0x7fu32);
    loop {
        let byte = (&z & &mask).to_u8().unwrap();
        z >>= 7u32;
        if z.is_zero() {
            out.push(byte);
            break;
        }
        out.push(byte | 0x80);
    }
}

fn read_varint(bytes: &[u8], pos: &mut usize) -> Option<BigInt> {
    let mut z = num_bigint::BigUint::zero();
    let mut shift = 0u32;
    loop {
        let b = *bytes.get(*pos)?;
        *pos += 1;
        z |= num_bigint::BigUint::from((b & 0x7f) as u32) << shift;
        if b & 0x80 == 0 {
            break;
        }
        shift += 7;
    }
    let half = BigInt::from(&z >> 1u32);
    Some(if &z & num_bigint::BigUint::from(1u32) == num_bigint::BigUint::from(1u32) {
        -half - 1
    } else {
        half
    })
}

fn cache_dir() -> PathBuf {
    std::env::var_os("KLOOSTERLAB_CACHE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("kloosterlab-coeffs"))
}

fn cache_path(weight: u32, n_max: usize) -> PathBuf {
    cache_dir().join(format!("newform-w{weight}-n{n_max}.bin"))
}

fn save_cache(weight: u32, n_max: usize, coeffs: &[BigInt]) -> Result<()> {
    let mut body = Vec::new();
    for c in &coeffs[1..] {
        write_varint(&mut body, c);
    }
    let mut file = Vec::new();
    file.extend_from_slice(CACHE_MAGIC);
    file.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    file.extend_from_slice(&weight.to_le_bytes());
    file.extend_from_slice(&(n_max as u64).to_le_bytes());
    file.extend_from_slice(&(body.len() as u64).to_le_bytes());
    file.extend_from_slice(&fnv1a(&body).to_le_bytes());
    file.extend_from_slice(&body);
    std::fs::create_dir_all(cache_dir())?;
    let tmp = cache_path(weight, n_max).with_extension("tmp");
    std::fs::File::create(&tmp)?.write_all(&file)?;
    std::fs::rename(tmp, cache_path(weight, n_max))?;
    Ok(())
}

fn load_cache(weight: u32, n_max: usize) -> Option<Vec<BigInt>> {
    let mut bytes = Vec::new();
    std::fs::File::open(cache_path(weight, n_max))
        .ok()?
        .read_to_end(&mut bytes)
        .ok()?;
    if bytes.len() < 36 || &bytes[0..4] != CACHE_MAGIC {
        return None;
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let n = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body_len = u64::from_le_bytes(bytes[20..28].try_into().unwrap()) as usize;
    let checksum = u64::from_le_bytes(bytes[28..36].try_into().unwrap());
    if version != CACHE_VERSION || w != weight || n != n_max || bytes.len() != 36 + body_len {
        return None;
    }
    let body = &bytes[36..];
    if fnv1a(body) != checksum {
        return None;
    }
    let mut coeffs = Vec::with_capacity(n_max + 1);
    coeffs.push(BigInt::zero());
    let mut pos = 0usize;
    for _ in 0..n_max {
        coeffs.push(read_varint(body, &mut pos)?);
    }
    (pos == body.len()).then_some(coeffs)
}

/// Cached coefficient table: loads from disk when the header and checksum
/// validate, otherwise recomputes and rewrites the file.
pub fn load_or_compute(weight: u32, n_max: usize) -> Result<Newform> {
    if let Some(coeffs) = load_cache(weight, n_max) {
        return Ok(Newform::from_coeffs(weight, coeffs));
    }
    let coeffs = build_coeffs(weight, n_max)?;
    save_cache(weight, n_max, &coeffs)?;
    Ok(Newform::from_coeffs(weight, coeffs))
}

/// Divisor-count sieve d(1..=n_max), for Deligne-bound sweeps.
pub fn divisor_count_sieve(n_max: usize) -> Vec<u32> {
    let mut d = vec![0u32; n_max + 1];
    for i in 1..=n_max {
        let mut m = i;
        while m <= n_max {
            d[m] += 1;
            m += i;
        }
    }
    d
}
