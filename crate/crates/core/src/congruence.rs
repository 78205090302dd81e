//! Brute-force censuses of the congruence solution counts behind the
//! p-adic stationary phase analysis: the phases g, g1, g2, Hensel
//! count-invariance, nonsingular and singular solution counting, the
//! special values k_i, and the finite set T.
//!
//! All counting here is exhaustive over m mod p^κ. The lemmas being audited
//! are the shortcut; the census must stay independent of them.

use crate::arith::{
    mod_inverse, mul_mod, padic_sqrt, reduce_mod, InverseTable, PrimePowerModulus, SqrtBranch,
};
use crate::expsum::SqrtTable;
use crate::report::BoundReport;
use crate::{Error, Result};

pub const CENSUS_CAP: u64 = 10_000_000;

/// The tuple (A, B, a, k, u, p^s) parameterizing the phases.
#[derive(Clone, Debug)]
pub struct PhaseParams {
    pub a_coef: i64,
    pub b_coef: i64,
    pub a: i64,
    pub k: i64,
    pub u: u64,
    pub q: PrimePowerModulus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseFn {
    G,
    G1,
    G2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CensusClass {
    All,
    /// g1(m) not ≡ 0 mod p
    Nonsingular,
    /// g1(m) ≡ 0 mod p
    Singular,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolutionCensus {
    pub kappa: u32,
    pub count: u64,
    pub classification: CensusClass,
}

/// Evaluates g, g1, g2 modulo p^s on the admissible set
/// {m : p ∤ m(m+a), mu and (m+a)u unit squares}.
pub struct PhaseEvaluator {
    pub q: PrimePowerModulus,
    u: u64,
    a_red: u64,
    a_c: u64,
    b_c: u64,
    inv2: u64,
    inv4: u64,
    sqrt: SqrtTable,
    inv: InverseTable,
}

impl PhaseEvaluator {
    pub fn new(params: &PhaseParams, branch: &SqrtBranch) -> Result<Self> {
        let q = params.q;
        if q.p <= 3 {
            return Err(Error::Domain("phases need p > 3".into()));
        }
        if q.q > CENSUS_CAP {
            return Err(Error::Unsupported(format!("{} above census cap", q.q)));
        }
        let u = params.u % q.q;
        if u % q.p == 0 {
            return Err(Error::Domain("u must be a unit".into()));
        }
        Ok(PhaseEvaluator {
            q,
            u,
            a_red: reduce_mod(params.a, q.q),
            a_c: reduce_mod(params.a_coef, q.q),
            b_c: reduce_mod(params.b_coef, q.q),
            inv2: mod_inverse(2, q.q)?,
            inv4: mod_inverse(4, q.q)?,
            sqrt: SqrtTable::build(&q, branch),
            inv: InverseTable::build(q.q),
        })
    }

    fn roots(&self, m: u64) -> Option<(u64, u64)> {
        let q = self.q.q;
        let p = self.q.p;
        let ma = (m + self.a_red) % q;
        if m % p == 0 || ma % p == 0 {
            return None;
        }
        let x0 = self.sqrt.get(mul_mod(m, self.u, q))?;
        let x1 = self.sqrt.get(mul_mod(ma, self.u, q))?;
        Some((x0, x1))
    }

    pub fn in_domain(&self, m: u64) -> bool {
        self.roots(m).is_some()
    }

    /// g(m) = A u inv(x1) - B u inv(x0), x1 = ((m+a)u)_{1/2}, x0 = (mu)_{1/2}.
    pub fn g(&self, m: u64) -> Option<u64> {
        let (x0, x1) = self.roots(m)?;
        let q = self.q.q;
        let t1 = mul_mod(mul_mod(self.a_c, self.u, q), self.inv.get(x1)?, q);
        let t0 = mul_mod(mul_mod(self.b_c, self.u, q), self.inv.get(x0)?, q);
        Some((t1 + q - t0) % q)
    }

    /// g1(m) = -inv(2) A u² inv(x1)³ + inv(2) B u² inv(x0)³.
    pub fn g1(&self, m: u64) -> Option<u64> {
        let (x0, x1) = self.roots(m)?;
        let q = self.q.q;
        let u2 = mul_mod(self.u, self.u, q);
        let c1 = self.inv.get(x1)?;
        let c0 = self.inv.get(x0)?;
        let c1_3 = mul_mod(mul_mod(c1, c1, q), c1, q);
        let c0_3 = mul_mod(mul_mod(c0, c0, q), c0, q);
        let t1 = mul_mod(mul_mod(self.inv2, mul_mod(self.a_c, u2, q), q), c1_3, q);
        let t0 = mul_mod(mul_mod(self.inv2, mul_mod(self.b_c, u2, q), q), c0_3, q);
        Some((t0 + q - t1) % q)
    }

    /// g2(m) = 3 inv(4) A u³ inv(x1)⁵ - 3 inv(4) B u³ inv(x0)⁵.
    pub fn g2(&self, m: u64) -> Option<u64> {
        let (x0, x1) = self.roots(m)?;
        let q = self.q.q;
        let u3 = mul_mod(mul_mod(self.u, self.u, q), self.u, q);
        let c1 = self.inv.get(x1)?;
        let c0 = self.inv.get(x0)?;
        let pow5 = |c: u64| {
            let c2 = mul_mod(c, c, q);
            mul_mod(mul_mod(c2, c2, q), c, q)
        };
        let coef = mul_mod(3 % q, self.inv4, q);
        let t1 = mul_mod(mul_mod(coef, mul_mod(self.a_c, u3, q), q), pow5(c1), q);
        let t0 = mul_mod(mul_mod(coef, mul_mod(self.b_c, u3, q), q), pow5(c0), q);
        Some((t1 + q - t0) % q)
    }

    pub fn eval(&self, m: u64, which: PhaseFn) -> Option<u64> {
        match which {
            PhaseFn::G => self.g(m),
            PhaseFn::G1 => self.g1(m),
            PhaseFn::G2 => self.g2(m),
        }
    }
}

/// One phase value, or a domain error off the admissible set.
pub fn phase_eval(
    params: &PhaseParams,
    m: u64,
    which: PhaseFn,
    branch: &SqrtBranch,
) -> Result<u64> {
    let ev = PhaseEvaluator::new(params, branch)?;
    ev.eval(m, which).ok_or_else(|| {
        Error::Domain(format!(
            "m = {m} violates the square-class conditions mod {}",
            params.q.p
        ))
    })
}

/// Exhaustive census of m mod p^κ with g(m) ≡ target (mod p^κ), optionally
/// filtered by the singularity of g1 mod p.
pub fn count_solutions(
    params: &PhaseParams,
    kappa: u32,
    target: u64,
    class: CensusClass,
    branch: &SqrtBranch,
) -> Result<SolutionCensus> {
    if kappa == 0 || kappa > params.q.s {
        return Err(Error::Domain(format!("need 1 ≤ κ ≤ s, got {kappa}")));
    }
    let ev = PhaseEvaluator::new(params, branch)?;
    let pk = params.q.p.pow(kappa);
    let mut count = 0u64;
    for m in 0..pk {
        let Some(g) = ev.g(m) else { continue };
        if g % pk != target % pk {
            continue;
        }
        let singular = ev.g1(m).expect("same domain as g") % params.q.p == 0;
        let keep = match class {
            CensusClass::All => true,
            CensusClass::Nonsingular => !singular,
            CensusClass::Singular => singular,
        };
        if keep {
            count += 1;
        }
    }
    Ok(SolutionCensus {
        kappa,
        count,
        classification: class,
    })
}

// ---- Hensel count-invariance audits ----------------------------------------

/// The census targets whose level-invariance is audited.
pub enum HenselInstance {
    /// f(m) = m² - c on all of Z/p^μ.
    SquarePoly { c: i64 },
    /// The unit-census phase f(x) = A0 (inv(1 + p^α a0 u inv(x)²)^{1/2} - 1)/p^α - k0 inv(u) x.
    UnitSqrtPhase {
        a0_coef: i64,
        alpha: u32,
        a0: i64,
        k0: i64,
        u: u64,
    },
    /// g(m) ≡ k with the nonsingular filter.
    GPhaseNonsingular { params: PhaseParams },
}

fn unit_sqrt_phase_value(
    a0_coef: i64,
    alpha: u32,
    a0: i64,
    k0: i64,
    u: u64,
    x: u64,
    q: &PrimePowerModulus,
    branch: &SqrtBranch,
) -> Result<Option<u64>> {
    if x % q.p == 0 {
        return Ok(None);
    }
    let qq = q.q;
    let pa = q.p.pow(alpha);
    let xb = mod_inverse(x as i64, qq)?;
    let arg = (1 + mul_mod(
        mul_mod(mul_mod(reduce_mod(a0, qq), u % qq, qq), pa % qq, qq),
        mul_mod(xb, xb, qq),
        qq,
    )) % qq;
    let w = padic_sqrt(mod_inverse(arg as i64, qq)?, q, branch)?;
    // w ≡ 1 mod p^α, so the quotient is exact
    let diff = (w + qq - 1) % qq;
    debug_assert_eq!(diff % pa, 0);
    let quot = diff / pa;
    let ub = mod_inverse(u as i64, qq)?;
    let f = (mul_mod(reduce_mod(a0_coef, qq), quot, qq) + qq
        - mul_mod(mul_mod(reduce_mod(k0, qq), ub, qq), x % qq, qq))
        % qq;
    Ok(Some(f))
}

/// The instance with its tables built once; census loops reuse it.
enum PreparedInstance<'a> {
    SquarePoly {
        c: i64,
    },
    UnitSqrtPhase {
        a0_coef: i64,
        alpha: u32,
        a0: i64,
        k0: i64,
        u: u64,
        branch: &'a SqrtBranch,
    },
    GPhaseNonsingular {
        ev: PhaseEvaluator,
        k: i64,
    },
}

fn prepare_instance<'a>(
    inst: &HenselInstance,
    branch: &'a SqrtBranch,
) -> Result<PreparedInstance<'a>> {
    Ok(match inst {
        HenselInstance::SquarePoly { c } => PreparedInstance::SquarePoly { c: *c },
        HenselInstance::UnitSqrtPhase {
            a0_coef,
            alpha,
            a0,
            k0,
            u,
        } => PreparedInstance::UnitSqrtPhase {
            a0_coef: *a0_coef,
            alpha: *alpha,
            a0: *a0,
            k0: *k0,
            u: *u,
            branch,
        },
        HenselInstance::GPhaseNonsingular { params } => PreparedInstance::GPhaseNonsingular {
            ev: PhaseEvaluator::new(params, branch)?,
            k: params.k,
        },
    })
}

impl PreparedInstance<'_> {
    /// f(m) mod p^s, None off the domain.
    fn value(&self, q: &PrimePowerModulus, m: u64) -> Result<Option<u64>> {
        Ok(match self {
            PreparedInstance::SquarePoly { c } => {
                Some((mul_mod(m % q.q, m % q.q, q.q) + q.q - reduce_mod(*c, q.q)) % q.q)
            }
            PreparedInstance::UnitSqrtPhase {
                a0_coef,
                alpha,
                a0,
                k0,
                u,
                branch,
            } => unit_sqrt_phase_value(*a0_coef, *alpha, *a0, *k0, *u, m, q, branch)?,
            PreparedInstance::GPhaseNonsingular { ev, k } => ev
                .g(m % q.q)
                .map(|g| (g + q.q - reduce_mod(*k, q.q)) % q.q),
        })
    }

    /// The nonsingular filter, where the instance has one.
    fn admits(&self, q: &PrimePowerModulus, m: u64) -> bool {
        match self {
            PreparedInstance::GPhaseNonsingular { ev, .. } => {
                ev.g1(m % q.q).map(|x| x % q.p) != Some(0)
            }
            _ => true,
        }
    }
}

fn instance_level_cap(inst: &HenselInstance, q: &PrimePowerModulus) -> u32 {
    match inst {
        // the division by p^α leaves the phase well-defined mod p^{s-α}
        HenselInstance::UnitSqrtPhase { alpha, .. } => q.s - alpha,
        _ => q.s,
    }
}

fn instance_count(prep: &PreparedInstance, q: &PrimePowerModulus, mu: u32) -> Result<u64> {
    let pm = q.p.pow(mu);
    let mut count = 0u64;
    for m in 0..pm {
        let Some(v) = prep.value(q, m)? else {
            continue;
        };
        if v % pm != 0 || !prep.admits(q, m) {
            continue;
        }
        count += 1;
    }
    Ok(count)
}

/// Verifies K(p^μ) = K(p^κ_base) for κ_base ≤ μ ≤ s by exhaustive counting.
/// The unit-derivative hypothesis is itself checked by brute force first;
/// failure reports "hypotheses not met" rather than a bug.
pub fn hensel_audit(
    inst: &HenselInstance,
    q: &PrimePowerModulus,
    kappa_base: u32,
    branch: &SqrtBranch,
) -> Result<Vec<SolutionCensus>> {
    let top = instance_level_cap(inst, q);
    if kappa_base == 0 || kappa_base > top {
        return Err(Error::Domain(format!(
            "need 1 ≤ κ_base ≤ {top}, got {kappa_base}"
        )));
    }
    let prep = prepare_instance(inst, branch)?;
    check_unit_derivative(inst, &prep, q, kappa_base)?;
    let base = instance_count(&prep, q, kappa_base)?;
    let mut out = Vec::new();
    for mu in kappa_base..=top {
        let count = instance_count(&prep, q, mu)?;
        if count != base {
            return Err(Error::Domain(format!(
                "count invariance violated: K(p^{mu}) = {count} differs from K(p^{kappa_base}) = {base}"
            )));
        }
        out.push(SolutionCensus {
            kappa: mu,
            count,
            classification: CensusClass::All,
        });
    }
    Ok(out)
}

/// Brute-force derivative check: on each base-level solution, the finite
/// difference (f(m + p^κ) - f(m))/p^κ must be a unit mod p.
fn check_unit_derivative(
    inst: &HenselInstance,
    prep: &PreparedInstance,
    q: &PrimePowerModulus,
    kappa: u32,
) -> Result<()> {
    let top = instance_level_cap(inst, q);
    if kappa + 1 > top {
        return Ok(()); // nothing to lift; invariance is vacuous
    }
    let pk = q.p.pow(kappa);
    let pk1 = q.p.pow(kappa + 1);
    for m in 0..pk {
        let Some(v) = prep.value(q, m)? else {
            continue;
        };
        if v % pk != 0 || !prep.admits(q, m) {
            continue;
        }
        let f0 = prep.value(q, m)?.expect("domain stable");
        let f1 = prep.value(q, m + pk)?.expect("domain stable at m + p^k");
        let diff = (f1 % pk1 + pk1 - f0 % pk1) % pk1;
        debug_assert_eq!(diff % pk, 0);
        if (diff / pk) % q.p == 0 {
            return Err(Error::HypothesesNotMet(format!(
                "derivative vanishes mod {} at base solution m = {m}",
                q.p
            )));
        }
    }
    Ok(())
}

// ---- singular census: roots of g1, special values k_i, and the set T ------

#[derive(Clone, Debug)]
pub struct SingularCensus {
    /// Roots m_i of g1 ≡ 0 mod p^s in the admissible set.
    pub roots: Vec<u64>,
    /// k_i = g(m_i, A, B, a) mod p^s.
    pub special_values: Vec<u64>,
    /// The set T: candidate values of k² a modulo powers of p.
    pub set_t: Vec<u64>,
    /// ω: the number of level-1 roots.
    pub omega: usize,
}

fn g1_roots_at_level(ev: &PhaseEvaluator, kappa: u32) -> Vec<u64> {
    let pk = ev.q.p.pow(kappa);
    (0..pk)
        .filter(|&m| ev.g1(m).map(|v| v % pk == 0).unwrap_or(false))
        .collect()
}

/// Finds the singular roots of g1 and verifies they lift uniquely from
/// level 1; computes k_i and builds T by the four-congruence recipe with
/// coset representatives v1 (smallest square) and v2 (smallest non-square).
pub fn singular_census(
    a_coef: i64,
    b_coef: i64,
    a: i64,
    u: u64,
    q: &PrimePowerModulus,
    branch: &SqrtBranch,
) -> Result<SingularCensus> {
    if reduce_mod(a, q.p) == 0 {
        return Err(Error::Domain("singular census needs p not dividing a".into()));
    }
    if reduce_mod(a_coef, q.p) == 0 && reduce_mod(b_coef, q.p) == 0 {
        return Err(Error::Domain("need p not dividing A or B".into()));
    }
    let params = PhaseParams {
        a_coef,
        b_coef,
        a,
        k: 0,
        u,
        q: *q,
    };
    let ev = PhaseEvaluator::new(&params, branch)?;
    let base = g1_roots_at_level(&ev, 1);
    let omega = base.len();
    // unique level-by-level lifting, checked exactly at every level
    let mut prev = base.clone();
    for kappa in 2..=q.s {
        let cur = g1_roots_at_level(&ev, kappa);
        if cur.len() != omega {
            return Err(Error::Domain(format!(
                "singular root count changed at level {kappa}: {} vs omega = {omega}",
                cur.len()
            )));
        }
        let pk_prev = q.p.pow(kappa - 1);
        let mut reduced: Vec<u64> = cur.iter().map(|&m| m % pk_prev).collect();
        reduced.sort_unstable();
        let mut prev_sorted = prev.clone();
        prev_sorted.sort_unstable();
        if reduced != prev_sorted {
            return Err(Error::Domain(format!(
                "roots at level {kappa} do not reduce to the level-{} roots",
                kappa - 1
            )));
        }
        prev = cur;
    }
    let roots = prev;
    let mut special_values = Vec::with_capacity(roots.len());
    for &m in &roots {
        let ki = ev.g(m).expect("root is in domain");
        if ki % q.p == 0 {
            return Err(Error::Domain(format!("k_i ≡ 0 mod p at root m = {m}")));
        }
        let g2 = ev.g2(m).expect("root is in domain");
        if g2 % q.p == 0 {
            return Err(Error::Domain(format!("g2 ≡ 0 mod p at root m = {m}")));
        }
        special_values.push(ki);
    }

    // T from the four congruences g1(x, A, ±B, v_j) ≡ 0 mod p^s
    let v1 = 1u64;
    let mut v2 = 2u64;
    while branch.is_square_unit(v2) {
        v2 += 1;
    }
    // T collects (k^{ε,v_j})² v_j: squaring k_i = ε1 k^{ε,v_j} ((a v̄_j)_{1/2})^{-1}
    // gives k_i² a ≡ (k^{ε,v_j})² v_j, confirmed by the exhaustive sweep below.
    let mut set_t = Vec::new();
    for vj in [v1, v2] {
        for eps in [1i64, -1] {
            let sub = PhaseParams {
                a_coef,
                b_coef: eps * b_coef,
                a: vj as i64,
                k: 0,
                u,
                q: *q,
            };
            let sub_ev = PhaseEvaluator::new(&sub, branch)?;
            for x in 0..q.q {
                if sub_ev.g1(x).map(|v| v == 0).unwrap_or(false) {
                    let kv = sub_ev.g(x).expect("in domain");
                    let t = mul_mod(mul_mod(kv, kv, q.q), vj % q.q, q.q);
                    if !set_t.contains(&t) {
                        set_t.push(t);
                    }
                }
            }
        }
    }
    set_t.sort_unstable();
    Ok(SingularCensus {
        roots,
        special_values,
        set_t,
        omega,
    })
}

/// rho(k) = max_i ord_p(k - k_i), capped at s; 0 on an empty root set.
pub fn rho(k: i64, special_values: &[u64], q: &PrimePowerModulus) -> u32 {
    special_values
        .iter()
        .map(|&ki| {
            let mut d = (reduce_mod(k, q.q) + q.q - ki % q.q) % q.q;
            if d == 0 {
                return q.s;
            }
            let mut ord = 0;
            while d % q.p == 0 {
                d /= q.p;
                ord += 1;
            }
            ord
        })
        .max()
        .unwrap_or(0)
}

/// Singular-count report against p^{floor(min(rho, kappa)/2)} where rho
/// comes either from the special values k_i or from the set T at k²a.
pub fn singular_bound_report(
    params: &PhaseParams,
    kappa: u32,
    census: &SingularCensus,
    use_t: bool,
    branch: &SqrtBranch,
) -> Result<BoundReport> {
    let q = params.q;
    let count = count_solutions(
        params,
        kappa,
        reduce_mod(params.k, q.p.pow(kappa)),
        CensusClass::Singular,
        branch,
    )?
    .count;
    let r = if use_t {
        let kr = reduce_mod(params.k, q.q) as i128;
        let k2a = (kr * kr % q.q as i128) * reduce_mod(params.a, q.q) as i128 % q.q as i128;
        rho(k2a as i64, &census.set_t, &q)
    } else {
        rho(params.k, &census.special_values, &q)
    };
    let bound = (q.p as f64).powi((r.min(kappa) / 2) as i32);
    Ok(BoundReport::new(count as f64, bound)
        .with("p", q.p)
        .with("s", q.s)
        .with("kappa", kappa)
        .with("k", params.k)
        .with("rho", r)
        .with("via", if use_t { "setT" } else { "ki" }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pp(p: u64, s: u32) -> PrimePowerModulus {
        PrimePowerModulus::new(p, s).unwrap()
    }

    #[test]
    fn phase_zero_when_terms_cancel() {
        let q = pp(7, 3);
        let b = SqrtBranch::default_for(7);
        let params = PhaseParams {
            a_coef: 3,
            b_coef: 3,
            a: 0,
            k: 0,
            u: 1,
            q,
        };
        let ev = PhaseEvaluator::new(&params, &b).unwrap();
        for m in 0..q.q {
            if let Some(g) = ev.g(m) {
                assert_eq!(g, 0, "A = B, a = 0 must make g vanish at m = {m}");
            }
        }
    }

    #[test]
    fn phase_matches_direct_sqrt_evaluation() {
        let q = pp(7, 3);
        for branch in [SqrtBranch::default_for(7), SqrtBranch::flipped_for(7)] {
            let params = PhaseParams {
                a_coef: 1,
                b_coef: 2,
                a: 1,
                k: 0,
                u: 1,
                q,
            };
            let m = 1u64;
            let got = phase_eval(&params, m, PhaseFn::G, &branch).unwrap();
            let x1 = padic_sqrt((m + 1) % q.q, &q, &branch).unwrap();
            let x0 = padic_sqrt(m, &q, &branch).unwrap();
            let expect = (mod_inverse(x1 as i64, q.q).unwrap()
                + 2 * (q.q - mod_inverse(x0 as i64, q.q).unwrap()))
                % q.q;
            assert_eq!(got, expect % q.q);
        }
        // the two branches produce negated phases
        let params = PhaseParams {
            a_coef: 1,
            b_coef: 2,
            a: 1,
            k: 0,
            u: 1,
            q,
        };
        let d = phase_eval(&params, 1, PhaseFn::G, &SqrtBranch::default_for(7)).unwrap();
        let f = phase_eval(&params, 1, PhaseFn::G, &SqrtBranch::flipped_for(7)).unwrap();
        assert_eq!((d + f) % q.q, 0);
    }

    #[test]
    fn phase_expansion_identity() {
        // g(m + p^k t) - g(m) - g1(m) p^k t - inv(2) g2(m) p^{2k} t² ≡ 0 mod p^{3k}
        let q = pp(7, 3);
        let b = SqrtBranch::default_for(7);
        let params = PhaseParams {
            a_coef: 2,
            b_coef: 5,
            a: 3,
            k: 0,
            u: 1,
            q,
        };
        let ev = PhaseEvaluator::new(&params, &b).unwrap();
        let kappa = 1u32;
        let pk = q.p.pow(kappa);
        let p3k = q.p.pow(3 * kappa);
        let inv2 = mod_inverse(2, q.q).unwrap();
        for m in 0..q.q {
            let Some(g0) = ev.g(m) else { continue };
            let g1 = ev.g1(m).unwrap();
            let g2 = ev.g2(m).unwrap();
            for t in 0..q.p {
                let m1 = (m + pk * t) % q.q;
                let gt = ev.g(m1).expect("shift stays in domain");
                let lin = mul_mod(g1, pk * t % q.q, q.q);
                let quad = mul_mod(
                    mul_mod(inv2, g2, q.q),
                    mul_mod(pk * pk % q.q, t * t % q.q, q.q),
                    q.q,
                );
                let diff = (gt + 2 * q.q - g0 - lin) % q.q;
                let diff = (diff + q.q - quad) % q.q;
                assert_eq!(diff % p3k, 0, "m = {m}, t = {t}");
            }
        }
    }

    #[test]
    fn census_additivity() {
        let q = pp(5, 3);
        let b = SqrtBranch::default_for(5);
        let params = PhaseParams {
            a_coef: 2,
            b_coef: 3,
            a: 1,
            k: 2,
            u: 1,
            q,
        };
        for kappa in 1..=3 {
            let target = reduce_mod(params.k, q.p.pow(kappa));
            let all = count_solutions(&params, kappa, target, CensusClass::All, &b).unwrap();
            let non =
                count_solutions(&params, kappa, target, CensusClass::Nonsingular, &b).unwrap();
            let sing = count_solutions(&params, kappa, target, CensusClass::Singular, &b).unwrap();
            assert_eq!(all.count, non.count + sing.count);
        }
    }

    #[test]
    fn level_one_solution_cap() {
        // p not dividing a: at most four solutions mod p;
        // p | a with A not ≡ B: at most one
        let b = SqrtBranch::default_for(7);
        let q = pp(7, 1);
        for a_coef in 1..5i64 {
            for b_coef in 1..5i64 {
                for a in 1..7i64 {
                    for k in 0..7i64 {
                        let params = PhaseParams {
                            a_coef,
                            b_coef,
                            a,
                            k,
                            u: 1,
                            q,
                        };
                        let c =
                            count_solutions(&params, 1, reduce_mod(k, 7), CensusClass::All, &b)
                                .unwrap();
                        assert!(c.count <= 4, "A={a_coef} B={b_coef} a={a} k={k}: {}", c.count);
                    }
                }
            }
        }
        let q73 = pp(7, 3);
        for k in 1..7i64 {
            let params = PhaseParams {
                a_coef: 1,
                b_coef: 2,
                a: 7,
                k,
                u: 1,
                q: q73,
            };
            let c = count_solutions(&params, 1, reduce_mod(k, 7), CensusClass::All, &b).unwrap();
            assert!(c.count <= 1, "p | a, A not ≡ B: k={k} gave {}", c.count);
        }
    }

    #[test]
    fn hensel_square_poly() {
        let q = pp(7, 4);
        let b = SqrtBranch::default_for(7);
        let audits = hensel_audit(&HenselInstance::SquarePoly { c: 1 }, &q, 1, &b).unwrap();
        assert_eq!(audits.len(), 4);
        for a in &audits {
            assert_eq!(a.count, 2, "m² ≡ 1 has exactly two unit roots at every level");
        }
        // singular example: m² ≡ 0 has non-unit derivative at its root
        let err = hensel_audit(&HenselInstance::SquarePoly { c: 0 }, &q, 1, &b).unwrap_err();
        assert!(matches!(err, Error::HypothesesNotMet(_)));
    }

    #[test]
    fn hensel_unit_sqrt_phase() {
        let q = pp(7, 4);
        let b = SqrtBranch::default_for(7);
        let inst = HenselInstance::UnitSqrtPhase {
            a0_coef: 2,
            alpha: 1,
            a0: 3,
            k0: 1,
            u: 1,
        };
        let audits = hensel_audit(&inst, &q, 1, &b).unwrap();
        assert!(!audits.is_empty());
        let base = audits[0].count;
        assert!(audits.iter().all(|a| a.count == base));
    }

    #[test]
    fn hensel_g_phase_nonsingular() {
        let q = pp(5, 4);
        let b = SqrtBranch::default_for(5);
        let params = PhaseParams {
            a_coef: 1,
            b_coef: 3,
            a: 2,
            k: 1,
            u: 1,
            q,
        };
        let audits =
            hensel_audit(&HenselInstance::GPhaseNonsingular { params }, &q, 1, &b).unwrap();
        let base = audits[0].count;
        assert!(audits.iter().all(|a| a.count == base));
    }

    #[test]
    fn singular_census_small() {
        let q = pp(5, 3);
        let b = SqrtBranch::default_for(5);
        let census = singular_census(1, 2, 1, 1, &q, &b).unwrap();
        assert!(census.omega <= 3, "cubic congruence admits at most 3 roots");
        assert_eq!(census.roots.len(), census.omega);
        for &ki in &census.special_values {
            assert_ne!(ki % 5, 0, "k_i must be a unit");
        }
        assert!(census.set_t.len() <= 12);
        for &t in &census.set_t {
            assert_ne!(t % 5, 0, "T avoids multiples of p");
        }
    }

    #[test]
    fn singular_census_branch_invariant() {
        let q = pp(5, 3);
        let d = singular_census(1, 2, 1, 1, &q, &SqrtBranch::default_for(5)).unwrap();
        let f = singular_census(1, 2, 1, 1, &q, &SqrtBranch::flipped_for(5)).unwrap();
        assert_eq!(d.omega, f.omega);
        assert_eq!(d.set_t, f.set_t, "T is built from squared values");
        // special values negate under the branch flip
        let mut neg: Vec<u64> = d.special_values.iter().map(|&k| (q.q - k) % q.q).collect();
        neg.sort_unstable();
        let mut fv = f.special_values.clone();
        fv.sort_unstable();
        assert_eq!(neg, fv);
    }

    #[test]
    fn set_t_covers_special_values() {
        // k ≡ k_i mod p^λ implies k²a ≡ t mod p^λ for some t in T, swept exactly
        let q = pp(5, 3);
        let b = SqrtBranch::default_for(5);
        for a in [1i64, 2, 3, 4, 6, 7] {
            let census = match singular_census(1, 2, a, 1, &q, &b) {
                Ok(c) => c,
                Err(_) => continue,
            };
            for k in 0..q.q as i64 {
                for lambda in 1..=q.s {
                    let pl = q.p.pow(lambda);
                    let matches_some_ki = census
                        .special_values
                        .iter()
                        .any(|&ki| reduce_mod(k, pl) == ki % pl);
                    if !matches_some_ki {
                        continue;
                    }
                    let k2a = reduce_mod(k * k % q.q as i64 * a, q.q);
                    let covered = census.set_t.iter().any(|&t| k2a % pl == t % pl);
                    assert!(covered, "a={a} k={k} lambda={lambda}: k²a not covered by T");
                }
            }
        }
    }

    #[test]
    fn singular_bound_reports() {
        let q = pp(5, 4);
        let b = SqrtBranch::default_for(5);
        let census = singular_census(1, 2, 1, 1, &q, &b).unwrap();
        for k in 0..q.q as i64 {
            for kappa in 1..=q.s {
                let params = PhaseParams {
                    a_coef: 1,
                    b_coef: 2,
                    a: 1,
                    k,
                    u: 1,
                    q,
                };
                let rep = singular_bound_report(&params, kappa, &census, false, &b).unwrap();
                assert!(
                    rep.lhs <= 10.0 * rep.rhs,
                    "singular count shape violated at k={k}, kappa={kappa}: {} vs {}",
                    rep.lhs,
                    rep.rhs
                );
                let rep_t = singular_bound_report(&params, kappa, &census, true, &b).unwrap();
                assert!(
                    rep_t.lhs <= 10.0 * rep_t.rhs,
                    "T-variant shape at k={k}, kappa={kappa}"
                );
            }
        }
    }
}
