//! Dirichlet characters mod q: CRT structure of the unit group, enumeration
//! with conductors, primitivity, and the orthogonality identity that powers
//! the moment computation.
//!
//! Character values are carried as exponents of a fixed root of unity of
//! order `lcm` of the generator orders; they only become floating complex
//! numbers at evaluation time, so orthogonality checks stay exact.

use crate::arith::{
    euler_phi, gcd, mobius, mul_mod, pow_mod, reduce_mod, unit_root, Factorization,
};
use crate::{Error, Result};
use num_complex::Complex64;
use std::sync::Arc;

#[derive(Clone, Debug)]
struct Component {
    /// Prime power p^a dividing q.
    pe: u64,
    p: u64,
    a: u32,
    /// (generator, order) pairs; one for odd p or p^a = 4, two for 2^a ≥ 8.
    gens: Vec<(u64, u64)>,
    /// Discrete log of each unit, encoded mixed-radix over `gens`.
    dlog: Vec<u64>,
}

const NO_DLOG: u64 = u64::MAX;

impl Component {
    fn build(p: u64, a: u32) -> Self {
        let pe = p.pow(a);
        let mut gens = Vec::new();
        if p == 2 {
            if a == 2 {
                gens.push((3, 2));
            } else if a >= 3 {
                gens.push((pe - 1, 2));
                gens.push((5, 1 << (a - 2)));
            }
        } else {
            let g = primitive_root_mod_pe(p, a);
            gens.push((g, euler_phi(pe)));
        }
        let mut dlog = vec![NO_DLOG; pe as usize];
        match gens.len() {
            0 => {
                if pe == 1 {
                    dlog = vec![0];
                } else {
                    dlog[1] = 0; // pe = 2
                }
            }
            1 => {
                let (g, ord) = gens[0];
                let mut x = 1u64;
                for k in 0..ord {
                    dlog[x as usize] = k;
                    x = mul_mod(x, g, pe);
                }
            }
            2 => {
                let (g0, ord0) = gens[0];
                let (g1, ord1) = gens[1];
                let mut y = 1u64;
                for e0 in 0..ord0 {
                    let mut x = y;
                    for e1 in 0..ord1 {
                        dlog[x as usize] = e0 + ord0 * e1;
                        x = mul_mod(x, g1, pe);
                    }
                    y = mul_mod(y, g0, pe);
                }
            }
            _ => unreachable!(),
        }
        Component { pe, p, a, gens, dlog }
    }

    fn exponents_of(&self, x: u64) -> Option<Vec<u64>> {
        let d = self.dlog[(x % self.pe) as usize];
        if d == NO_DLOG {
            return None;
        }
        let mut d = d;
        let mut out = Vec::with_capacity(self.gens.len());
        for &(_, ord) in &self.gens {
            out.push(d % ord);
            d /= ord;
        }
        Some(out)
    }

    /// Conductor of the local character with the given generator exponents.
    fn local_conductor(&self, exps: &[u64]) -> u64 {
        if self.gens.is_empty() {
            return 1;
        }
        if self.p != 2 {
            let (_, ord) = self.gens[0];
            let e = exps[0];
            if e == 0 {
                return 1;
            }
            let t = ord / gcd(ord, e); // character order
            let mut j = 0;
            let mut t_odd = t;
            while t_odd % self.p == 0 {
                t_odd /= self.p;
                j += 1;
            }
            self.p.pow(j + 1)
        } else if self.a == 2 {
            if exps[0] == 0 {
                1
            } else {
                4
            }
        } else {
            let (_, ord1) = self.gens[1];
            let e = exps[1];
            if e == 0 {
                if exps[0] == 0 {
                    1
                } else {
                    4
                }
            } else {
                let t = ord1 / gcd(ord1, e); // a power of two >= 2
                4 * t
            }
        }
    }
}

fn primitive_root_mod_pe(p: u64, a: u32) -> u64 {
    let phi_p = p - 1;
    let fac = Factorization::of(phi_p).expect("p-1");
    let mut g = 2u64;
    loop {
        let ok = fac
            .factors
            .iter()
            .all(|&(f, _)| pow_mod(g, phi_p / f, p) != 1);
        if ok {
            break;
        }
        g += 1;
    }
    if a == 1 {
        return g;
    }
    // lift: g works mod p^a unless g^{p-1} ≡ 1 mod p², in which case g+p does
    let p2 = p * p;
    if pow_mod(g % p2, p - 1, p2) == 1 {
        g += p;
    }
    g
}

/// The group of Dirichlet characters mod q, with CRT components and the
/// discrete-log tables needed for fast evaluation.
#[derive(Clone, Debug)]
pub struct CharacterGroup {
    pub q: u64,
    pub phi: u64,
    components: Vec<Component>,
    /// Orders of all generators, flattened across components.
    orders: Vec<u64>,
    /// lcm of the generator orders: values live in the ζ_lcm cyclotomic.
    pub value_order: u64,
}

impl CharacterGroup {
    pub fn new(q: u64) -> Result<Arc<Self>> {
        if q == 0 {
            return Err(Error::Domain("modulus must be positive".into()));
        }
        let fac = Factorization::of(q)?;
        let components: Vec<Component> = fac
            .factors
            .iter()
            .map(|&(p, a)| Component::build(p, a))
            .collect();
        let orders: Vec<u64> = components
            .iter()
            .flat_map(|c| c.gens.iter().map(|&(_, o)| o))
            .collect();
        let mut value_order = 1u64;
        for &o in &orders {
            value_order = value_order / gcd(value_order, o) * o;
        }
        Ok(Arc::new(CharacterGroup {
            q,
            phi: fac.euler_phi(),
            components,
            orders,
            value_order,
        }))
    }

    /// Flattened generator exponents of a unit, or None off the units.
    pub fn dlog(&self, n: i64) -> Option<Vec<u64>> {
        let x = reduce_mod(n, self.q.max(1));
        if self.q > 1 && gcd(x, self.q) != 1 {
            return None;
        }
        let mut out = Vec::with_capacity(self.orders.len());
        for c in &self.components {
            out.extend(c.exponents_of(x % c.pe.max(1))?);
        }
        Some(out)
    }

    pub fn generator_orders(&self) -> &[u64] {
        &self.orders
    }
}

/// A Dirichlet character mod q, stored as one exponent per group generator.
#[derive(Clone, Debug)]
pub struct DirichletCharacter {
    pub group: Arc<CharacterGroup>,
    pub exponents: Vec<u64>,
    pub conductor: u64,
}

impl DirichletCharacter {
    pub fn is_primitive(&self) -> bool {
        self.conductor == self.group.q
    }

    pub fn is_trivial(&self) -> bool {
        self.exponents.iter().all(|&e| e == 0)
    }

    pub fn conjugate(&self) -> Self {
        let exps = self
            .exponents
            .iter()
            .zip(self.group.generator_orders())
            .map(|(&e, &o)| if e == 0 { 0 } else { o - e })
            .collect();
        DirichletCharacter {
            group: self.group.clone(),
            exponents: exps,
            conductor: self.conductor,
        }
    }

    /// χ(n) as an exact root of unity: numerator k with value e(k / L),
    /// L = `group.value_order`. None when gcd(n, q) > 1.
    pub fn eval_exponent(&self, n: i64) -> Option<u64> {
        let dl = self.group.dlog(n)?;
        let modl = self.group.value_order;
        let mut k = 0u64;
        for ((&e, &d), &o) in self
            .exponents
            .iter()
            .zip(dl.iter())
            .zip(self.group.generator_orders())
        {
            k = (k + mul_mod(e % o, d, o) * (modl / o)) % modl;
        }
        Some(k)
    }

    pub fn eval(&self, n: i64) -> Complex64 {
        match self.eval_exponent(n) {
            None => Complex64::new(0.0, 0.0),
            Some(k) => unit_root(k as i64, self.group.value_order),
        }
    }

    pub fn order(&self) -> u64 {
        let mut ord = 1u64;
        for (&e, &o) in self.exponents.iter().zip(self.group.generator_orders()) {
            let t = o / gcd(o, e);
            ord = ord / gcd(ord, t) * t;
        }
        ord
    }
}

/// Multiplicative evaluation shared by hot loops: χ(n) = e(k(n)/L).
pub fn char_eval(chi: &DirichletCharacter, n: i64) -> Complex64 {
    chi.eval(n)
}

/// All φ(q) characters mod q, conductors computed, primitive ones flagged
/// via [`DirichletCharacter::is_primitive`]. Works for every q ≥ 1, in
/// particular q ≡ 2 (mod 4) where the primitive set is empty.
pub fn enumerate_characters(q: u64) -> Result<Vec<DirichletCharacter>> {
    let group = CharacterGroup::new(q)?;
    let orders = group.generator_orders().to_vec();
    let total = group.phi;
    let mut out = Vec::with_capacity(total as usize);
    let mut exps = vec![0u64; orders.len()];
    loop {
        // conductor = product of local conductors over components
        let mut conductor = 1u64;
        let mut idx = 0;
        for c in &group.components {
            let ngen = c.gens.len();
            conductor *= c.local_conductor(&exps[idx..idx + ngen]);
            idx += ngen;
        }
        out.push(DirichletCharacter {
            group: group.clone(),
            exponents: exps.clone(),
            conductor,
        });
        // mixed-radix increment
        let mut i = 0;
        loop {
            if i == orders.len() {
                debug_assert_eq!(out.len() as u64, total);
                return Ok(out);
            }
            exps[i] += 1;
            if exps[i] < orders[i] {
                break;
            }
            exps[i] = 0;
            i += 1;
        }
    }
}

/// ψ(q) = Σ_{d|q} φ(d) μ(q/d): the number of primitive characters mod q.
pub fn psi_count(q: u64) -> Result<i64> {
    let fac = Factorization::of(q)?;
    let mut total = 0i64;
    for d in fac.divisors() {
        let m = mobius(q / d);
        if m != 0 {
            total += m * euler_phi(d) as i64;
        }
    }
    Ok(total)
}

/// Σ*_{χ mod q} χ(n) for gcd(n, q) = 1, computed both by direct summation
/// over the primitive characters and by Σ_{d | (n-1, q)} φ(d) μ(q/d).
/// The two routes must agree; disagreement is an implementation bug.
pub fn orthogonality_sum(q: u64, n: i64) -> Result<i64> {
    if gcd(reduce_mod(n, q.max(1)), q) != 1 && q > 1 {
        return Err(Error::Domain(format!("gcd({n}, {q}) > 1")));
    }
    let fac = Factorization::of(q)?;
    let g = gcd(reduce_mod(n - 1, q.max(1)), q);
    let mut rhs = 0i64;
    for d in fac.divisors() {
        if g % d == 0 {
            let m = mobius(q / d);
            if m != 0 {
                rhs += m * euler_phi(d) as i64;
            }
        }
    }
    let mut lhs = Complex64::new(0.0, 0.0);
    for chi in enumerate_characters(q)? {
        if chi.is_primitive() {
            lhs += chi.eval(n);
        }
    }
    let diff = (lhs - Complex64::new(rhs as f64, 0.0)).norm();
    if diff > 1e-6 {
        return Err(Error::Domain(format!(
            "orthogonality self-test failed at q={q}, n={n}: direct {lhs} vs divisor sum {rhs}"
        )));
    }
    Ok(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerate_counts_and_primitivity() {
        let chars = enumerate_characters(4).unwrap();
        assert_eq!(chars.len(), 2);
        assert_eq!(chars.iter().filter(|c| c.is_primitive()).count(), 1);

        let chars = enumerate_characters(1).unwrap();
        assert_eq!(chars.len(), 1);
        assert!(chars[0].is_primitive());

        let chars = enumerate_characters(9).unwrap();
        assert_eq!(chars.len(), 6);
        assert_eq!(chars.iter().filter(|c| c.is_primitive()).count(), 4);
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi_count(2).unwrap(), 0);
        assert_eq!(psi_count(4).unwrap(), 1);
        assert_eq!(psi_count(101).unwrap(), 99);
    }

    #[test]
    fn psi_matches_enumeration() {
        for q in 1..=500u64 {
            let count = enumerate_characters(q)
                .unwrap()
                .iter()
                .filter(|c| c.is_primitive())
                .count() as i64;
            assert_eq!(count, psi_count(q).unwrap(), "q={q}");
            if q % 4 == 2 {
                assert_eq!(count, 0, "q={q} ≡ 2 mod 4 must have no primitive characters");
            }
        }
    }

    #[test]
    fn eval_examples() {
        let chars = enumerate_characters(5).unwrap();
        let trivial = chars.iter().find(|c| c.is_trivial()).unwrap();
        assert_eq!(trivial.eval(3), Complex64::new(1.0, 0.0));
        assert_eq!(trivial.eval(5), Complex64::new(0.0, 0.0));

        let chars = enumerate_characters(4).unwrap();
        let prim = chars.iter().find(|c| c.is_primitive()).unwrap();
        assert!((prim.eval(3) - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn multiplicative_and_periodic() {
        for q in [5u64, 12, 36, 49, 40] {
            for chi in enumerate_characters(q).unwrap() {
                for a in 1..(2 * q).min(60) as i64 {
                    for b in 1..q.min(25) as i64 {
                        let lhs = chi.eval(a * b);
                        let rhs = chi.eval(a) * chi.eval(b);
                        assert!((lhs - rhs).norm() < 1e-10, "q={q} a={a} b={b}");
                    }
                    let period = chi.eval(a + q as i64);
                    assert!((period - chi.eval(a)).norm() < 1e-12);
                    let m = chi.eval(a).norm();
                    assert!((m - 1.0).abs() < 1e-12 || m < 1e-12);
                }
            }
        }
    }

    #[test]
    fn full_orthogonality_all_q() {
        // Σ_{χ mod q} χ(n) = φ(q)·[n ≡ 1 mod q], exact via discrete logs.
        for q in 1..=200u64 {
            let group = CharacterGroup::new(q).unwrap();
            for n in 1..=q as i64 {
                if q > 1 && gcd(reduce_mod(n, q), q) != 1 {
                    continue;
                }
                let dl = group.dlog(n).unwrap();
                let expect = if dl.iter().all(|&d| d == 0) {
                    group.phi as f64
                } else {
                    0.0
                };
                let mut sum = Complex64::new(0.0, 0.0);
                for chi in enumerate_characters(q).unwrap() {
                    sum += chi.eval(n);
                }
                assert!(
                    (sum - Complex64::new(expect, 0.0)).norm() < 1e-7 * (1.0 + group.phi as f64),
                    "q={q}, n={n}: {sum} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn orthogonality_sum_examples() {
        assert_eq!(orthogonality_sum(8, 1).unwrap(), 2); // ψ(8)
        assert_eq!(orthogonality_sum(5, 2).unwrap(), -1);
        assert_eq!(orthogonality_sum(9, 4).unwrap(), -2);
    }

    #[test]
    fn conductor_matches_minimal_period() {
        // χ factors through (Z/d)^* iff χ(n) = 1 whenever n ≡ 1 (mod d)
        // and gcd(n, q) = 1; the conductor is the least such divisor d.
        for q in 1..=200u64 {
            let fac = Factorization::of(q).unwrap();
            let divisors = fac.divisors();
            for chi in enumerate_characters(q).unwrap() {
                let mut minimal = q;
                'div: for &d in &divisors {
                    let mut n = 1 + d as i64;
                    while n <= q as i64 {
                        if gcd(reduce_mod(n, q), q) == 1
                            && (chi.eval(n) - Complex64::new(1.0, 0.0)).norm() > 1e-9
                        {
                            continue 'div;
                        }
                        n += d as i64;
                    }
                    minimal = d;
                    break;
                }
                assert_eq!(chi.conductor, minimal, "q={q}, exps={:?}", chi.exponents);
            }
        }
    }
}
