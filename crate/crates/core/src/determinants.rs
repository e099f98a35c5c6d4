//! Closed-form determinants, spanning-tree counts and asymptotic complexities,
//! evaluated in the log domain.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Result, SgError};
use crate::gasket::dim;

pub type Exponent = Ratio<i128>;

/// One factor `base^exponent` of a [`LogValue`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Factor {
    pub base: String,
    pub log_base: f64,
    /// Exponent as `numerator/denominator`.
    pub exponent: String,
    #[serde(skip)]
    pub exact: Exponent,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogValue {
    pub log_magnitude: f64,
    pub exact_factors: Vec<Factor>,
}

/// Accumulates factors by base name.
#[derive(Default)]
struct FactorSet {
    map: BTreeMap<String, (f64, Exponent)>,
    order: Vec<String>,
}

impl FactorSet {
    fn add(&mut self, base: &str, log_base: f64, e: Exponent) {
        if e.is_zero() {
            return;
        }
        match self.map.get_mut(base) {
            Some(v) => v.1 += e,
            None => {
                self.order.push(base.to_string());
                self.map.insert(base.to_string(), (log_base, e));
            }
        }
    }

    fn prime(&mut self, p: u32, e: Exponent) {
        self.add(&p.to_string(), (p as f64).ln(), e);
    }

    fn finish(self) -> LogValue {
        let mut factors = Vec::new();
        let mut log = 0.0;
        for name in self.order {
            let (lb, e) = self.map[&name];
            if e.is_zero() {
                continue;
            }
            log += lb * ratio_f64(e);
            factors.push(Factor {
                base: name,
                log_base: lb,
                exponent: e.to_string(),
                exact: e,
            });
        }
        LogValue {
            log_magnitude: log,
            exact_factors: factors,
        }
    }
}

fn ratio_f64(e: Exponent) -> f64 {
    *e.numer() as f64 / *e.denom() as f64
}

fn r(n: i128, d: i128) -> Exponent {
    Ratio::new(n, d)
}

fn p3(n: i64) -> Exponent {
    if n >= 0 {
        Ratio::from_integer(3i128.pow(n as u32))
    } else {
        Ratio::new(1, 3i128.pow((-n) as u32))
    }
}

impl LogValue {
    /// Exact integer value when every base is a prime and every exponent a nonnegative integer.
    pub fn to_bigint(&self) -> Option<BigInt> {
        let mut v = BigInt::one();
        for f in &self.exact_factors {
            let p: u32 = f.base.parse().ok()?;
            if !f.exact.is_integer() || f.exact.is_negative() {
                return None;
            }
            v *= BigInt::from(p).pow(f.exact.to_integer().to_u32()?);
        }
        Some(v)
    }

    /// Log-sum of the exact factors.
    pub fn factor_log_sum(&self) -> f64 {
        self.exact_factors.iter().map(|f| f.log_base * ratio_f64(f.exact)).sum()
    }

    pub fn value(&self) -> f64 {
        self.log_magnitude.exp()
    }
}

/// Largest level accepted by the closed forms; keeps every exponent exact in `i128`.
pub const MAX_CLOSED_FORM_LEVEL: usize = 40;

fn check_level(level: usize) -> Result<()> {
    if level > MAX_CLOSED_FORM_LEVEL {
        return Err(SgError::LevelTooLarge {
            level,
            max: MAX_CLOSED_FORM_LEVEL,
        });
    }
    Ok(())
}

fn add_psi(fs: &mut FactorSet, level: usize, sign: i128) {
    let n = level as i64;
    fs.prime(2, (p3(n + 1) - r(1, 1)) * sign);
    fs.prime(3, r(-(n as i128 + 1), 1) * sign);
}

/// `ψ(G_N) = Π deg / Σ deg = 2^{3^{N+1}-1} / 3^{N+1}`.
pub fn psi_weight(level: usize) -> Result<LogValue> {
    check_level(level)?;
    let mut fs = FactorSet::default();
    add_psi(&mut fs, level, 1);
    Ok(fs.finish())
}

/// Number of spanning trees of `G_N`.
pub fn tree_count_closed_form(level: usize) -> Result<LogValue> {
    check_level(level)?;
    let n = level as i128;
    let t = p3(level as i64);
    let mut fs = FactorSet::default();
    fs.prime(2, (t - r(1, 1)) / r(2, 1));
    fs.prime(3, t * r(3, 4) + r(n, 2) + r(1, 4));
    fs.prime(5, t / r(4, 1) - r(n, 2) - r(1, 4));
    Ok(fs.finish())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum HKind {
    /// `H(0) = 26.5`
    H,
    /// `H̃(0) = 302.5`
    HTilde,
    /// `Ĥ(0) = 86.5`
    HHat,
}

impl HKind {
    pub fn initial(self) -> f64 {
        match self {
            HKind::H => 26.5,
            HKind::HTilde => 302.5,
            HKind::HHat => 86.5,
        }
    }

    fn name(self) -> &'static str {
        match self {
            HKind::H => "H",
            HKind::HTilde => "H~",
            HKind::HHat => "H^",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RecurrenceState {
    pub kind: HKind,
    pub k: usize,
    pub log_h: f64,
    pub log_h_plus_half: f64,
    pub log_h_plus_five_halves: f64,
    /// `H(k)` itself while it fits in a double.
    pub h: Option<f64>,
}

pub const MAX_RECURRENCE_K: usize = 64;

/// States `k = 0..=up_to_k` of `H(k) = H(k-1)² - 15/4`.
pub fn recurrence(kind: HKind, up_to_k: usize) -> Result<Vec<RecurrenceState>> {
    if up_to_k > MAX_RECURRENCE_K {
        return Err(SgError::Argument(format!("k ≤ {MAX_RECURRENCE_K} required")));
    }
    let mut out = Vec::with_capacity(up_to_k + 1);
    let mut l = kind.initial().ln();
    let mut h = Some(kind.initial());
    for k in 0..=up_to_k {
        if k > 0 {
            l = 2.0 * l + (-3.75 * (-2.0 * l).exp()).ln_1p();
            h = h.map(|x| x * x - 3.75).filter(|x| x.is_finite());
        }
        out.push(RecurrenceState {
            kind,
            k,
            log_h: l,
            log_h_plus_half: l + (0.5 * (-l).exp()).ln_1p(),
            log_h_plus_five_halves: l + (2.5 * (-l).exp()).ln_1p(),
            h,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetCase {
    HalfHalf,
    HalfZero,
    ZeroHalf,
}

impl DetCase {
    pub fn h_kind(self) -> HKind {
        match self {
            DetCase::HalfHalf => HKind::H,
            DetCase::HalfZero => HKind::HTilde,
            DetCase::ZeroHalf => HKind::HHat,
        }
    }
}

/// Smallest level at which each closed form equals the spectral product.
pub fn min_valid_level(case: DetCase) -> usize {
    match case {
        DetCase::HalfHalf | DetCase::HalfZero | DetCase::ZeroHalf => 1,
    }
}

/// `(3^e + c) / 2` when `e ≥ 0` and the value is a positive integer, else 0.
fn table_mult(e: i64, c: i128) -> Exponent {
    if e < 0 {
        return Exponent::zero();
    }
    let v = 3i128.pow(e as u32) + c;
    if v > 0 && v % 2 == 0 {
        Ratio::from_integer(v / 2)
    } else {
        Exponent::zero()
    }
}

/// `det ℒ_N` for the three nonzero half-integer flux pairs, assembled from the
/// eigenvalue tables: isolated eigenvalues contribute their prime powers, each
/// preimage series contributes the product of its points via the root relations
/// of the quadratics. Levels below [`min_valid_level`] are refused unless
/// `allow_small_n` is set.
pub fn det_closed_form(case: DetCase, level: usize, allow_small_n: bool) -> Result<LogValue> {
    if level == 0 {
        return Err(SgError::Argument("closed-form determinants need N ≥ 1".into()));
    }
    if level < min_valid_level(case) && !allow_small_n {
        return Err(SgError::Argument(format!(
            "closed form for {case:?} does not hold below N = {}",
            min_valid_level(case)
        )));
    }
    check_level(level)?;
    let n = level as i64;
    let mut fs = FactorSet::default();
    // (prime powers of an eigenvalue or of a product of preimages, multiplicity)
    let mut isolated: Vec<(&[(u32, i128)], Exponent)> = Vec::new();
    let (shift, scale_log2) = match case {
        DetCase::HalfHalf => {
            isolated.push((&[(2, -1)], table_mult(n, 3)));
            isolated.push((&[(3, 1), (2, -2)], table_mult(n - 1, -1)));
            isolated.push((&[(5, 1), (2, -2)], table_mult(n - 1, 3)));
            isolated.push((&[(2, 1)], Exponent::one()));
            // one preimage under R(1/2,1/2,·) after k under R(0,0,·): scale (a2 b2)^{2^k} = 16^{2^k}
            (2, 4)
        }
        DetCase::HalfZero => {
            isolated.push((&[(2, -1)], table_mult(n, 3)));
            isolated.push((&[(5, 1), (2, -2)], table_mult(n - 1, -1)));
            isolated.push((&[(7, 1), (2, -2)], table_mult(n - 1, 3)));
            // R(1/2,0,·)^{-1}(3/4) and (5/4): root products 15/16 and 17/16
            isolated.push((&[(3, 1), (5, 1), (2, -4)], table_mult(n - 2, -1)));
            isolated.push((&[(17, 1), (2, -4)], table_mult(n - 2, 3)));
            // two extra preimages: scale (q2² a2 b2)^{2^k} = 256^{2^k}
            (3, 8)
        }
        DetCase::ZeroHalf => {
            isolated.push((&[(2, -2)], table_mult(n - 1, 3)));
            isolated.push((&[(3, 1), (2, -2)], table_mult(n - 1, -1)));
            isolated.push((&[(3, 1), (2, -1)], table_mult(n, 3)));
            // R(0,1/2,·)^{-1}(3/4) and (5/4): root products 7/16 and 9/16
            isolated.push((&[(7, 1), (2, -4)], table_mult(n - 2, -1)));
            isolated.push((&[(3, 2), (2, -4)], table_mult(n - 2, 3)));
            (3, 8)
        }
    };
    for (primes, m) in isolated {
        for &(p, e) in primes {
            fs.prime(p, m * e);
        }
    }
    let kind = case.h_kind();
    let last = n - shift;
    if last >= 0 {
        for s in recurrence(kind, last as usize)? {
            let k = s.k as i64;
            let m_half = table_mult(n - k - shift, 3);
            let m_five = table_mult(n - k - shift, -1);
            fs.add(&format!("{}({})+1/2", kind.name(), k), s.log_h_plus_half, m_half);
            fs.add(&format!("{}({})+5/2", kind.name(), k), s.log_h_plus_five_halves, m_five);
            let two_k = 1i128 << k;
            fs.prime(2, -(m_half + m_five) * (scale_log2 * two_k));
        }
    }
    Ok(fs.finish())
}

/// `ψ(G_N) det ℒ_N`, the normalised determinant.
pub fn normalized_det(case: DetCase, level: usize, allow_small_n: bool) -> Result<LogValue> {
    let d = det_closed_form(case, level, allow_small_n)?;
    let mut fs = FactorSet::default();
    add_psi(&mut fs, level, 1);
    for f in d.exact_factors {
        fs.add(&f.base, f.log_base, f.exact);
    }
    Ok(fs.finish())
}

/// `Π_{z ∈ P^{-1}(R^{-n}(α))} z` for `P = a2x² + a1x + a0`, `R = b2x² + b1x`.
pub fn lemma_product(p: [f64; 3], rr: [f64; 2], n: u32, alpha: f64) -> f64 {
    let [a2, _a1, a0] = p;
    let [b2, b1] = rr;
    let h0 = a0 * b2 + b1 / 2.0;
    lemma_closed(a2 * b2, b2, b1, h0, n, alpha)
}

/// `Π_{z ∈ Q^{-1}(P^{-1}(R^{-n}(α)))} z` with `Q = q2x² + q1x + q0`.
pub fn lemma_product_tilde(q: [f64; 3], p: [f64; 3], rr: [f64; 2], n: u32, alpha: f64) -> f64 {
    let [q2, _q1, q0] = q;
    let [a2, a1, a0] = p;
    let [b2, b1] = rr;
    let h0 = a2 * b2 * (q0 * q0 + q0 * a1 / a2 + a0 / a2) + b1 / 2.0;
    lemma_closed(q2 * q2 * a2 * b2, b2, b1, h0, n, alpha)
}

fn lemma_closed(scale: f64, b2: f64, b1: f64, h0: f64, n: u32, alpha: f64) -> f64 {
    let mut h = h0;
    for _ in 0..n {
        h = h * h + b1 * (2.0 - b1) / 4.0;
    }
    let s = scale.powi(2i32.pow(n));
    -b2 / s * alpha + (h - b1 / 2.0) / s
}

/// `Π_{z ∈ R^{-n}(α)} z = -α / b2^{2^n - 1}` for `R = b2x² + b1x` and `n ≥ 1`; `α` at `n = 0`.
pub fn preimage_product(rr: [f64; 2], n: u32, alpha: f64) -> f64 {
    if n == 0 {
        return alpha;
    }
    -alpha / rr[0].powi(2i32.pow(n) - 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComplexityCase {
    ZeroZero,
    HalfHalf,
    HalfZero,
    ZeroHalf,
}

/// Asymptotic complexity `lim log(ψ det') / |V_N|` with the series cut at `k = terms`.
/// Every series term is positive, so the truncation is a lower bound.
pub fn complexity(case: ComplexityCase, terms: usize) -> Result<f64> {
    let (l2, l3, l5, l7, l17) = (2f64.ln(), 3f64.ln(), 5f64.ln(), 7f64.ln(), 17f64.ln());
    let (head, weight, kind) = match case {
        ComplexityCase::ZeroZero => return Ok(l2 / 3.0 + l3 / 2.0 + l5 / 6.0),
        ComplexityCase::HalfHalf => (l2 / 3.0 + l3 / 9.0 + l5 / 9.0, 2.0 / 9.0, HKind::H),
        ComplexityCase::HalfZero => (
            13.0 / 27.0 * l2 + l3 / 27.0 + 5.0 / 27.0 * l5 + l7 / 9.0 + l17 / 27.0,
            2.0 / 27.0,
            HKind::HTilde,
        ),
        ComplexityCase::ZeroHalf => (13.0 / 27.0 * l2 + 14.0 / 27.0 * l3 + l7 / 27.0, 2.0 / 27.0, HKind::HHat),
    };
    let mut sum = 0.0;
    for s in recurrence(kind, terms)? {
        let w = (2.0f64 / 3.0).powi(s.k as i32) / 2f64.powi(s.k as i32 + 1);
        sum += w * (s.log_h_plus_half + s.log_h_plus_five_halves);
    }
    Ok(head + weight / 3.0 * sum)
}

/// `complexity(case, 40) - complexity(ZeroZero, 40)`.
pub fn loop_entropy(case: ComplexityCase) -> Result<f64> {
    if case == ComplexityCase::ZeroZero {
        return Err(SgError::Argument("loop entropy needs a nonzero flux".into()));
    }
    Ok(complexity(case, 40)? - complexity(ComplexityCase::ZeroZero, 40)?)
}

/// `log(ψ(G_N) det' ℒ_N) / dim_N` at finite `N`, from a log determinant.
pub fn finite_complexity(level: usize, log_det: f64) -> Result<f64> {
    Ok((psi_weight(level)?.log_magnitude + log_det) / dim(level) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn psi_values() {
        assert!((psi_weight(0).unwrap().value() - 4.0 / 3.0).abs() < 1e-14);
        assert!((psi_weight(1).unwrap().value() - 256.0 / 9.0).abs() < 1e-12);
        let p2 = psi_weight(2).unwrap();
        assert!((p2.log_magnitude - (2f64.powi(26) / 27.0).ln()).abs() < 1e-12);
        // product of degrees over their sum at level 1: 2³4³ / 18
        assert!((psi_weight(1).unwrap().value() - 512.0 / 18.0).abs() < 1e-12);
    }

    #[test]
    fn tree_counts_small() {
        assert_eq!(tree_count_closed_form(0).unwrap().to_bigint().unwrap(), BigInt::from(3));
        assert_eq!(
            tree_count_closed_form(1).unwrap().to_bigint().unwrap(),
            BigInt::from(54)
        );
        for n in 0..8 {
            let t = tree_count_closed_form(n).unwrap();
            assert!((t.factor_log_sum() - t.log_magnitude).abs() <= 1e-12 * t.log_magnitude.abs());
            assert!(t.to_bigint().is_some());
        }
    }

    #[test]
    fn recurrence_values() {
        let s = recurrence(HKind::H, 9).unwrap();
        assert!((s[1].h.unwrap() - 698.5).abs() < 1e-9);
        assert!((s[1].log_h - 698.5f64.ln()).abs() < 1e-14);
        assert_eq!(recurrence(HKind::HTilde, 0).unwrap()[0].h, Some(302.5));
        for w in s.windows(2) {
            assert!(w[1].log_h > w[0].log_h);
        }
        assert!(recurrence(HKind::H, 65).is_err());
    }

    fn roots(c: [f64; 3], v: Complex64) -> [Complex64; 2] {
        let (a, b, cc) = (c[0], c[1], c[2] - v);
        let d = (Complex64::from(b * b) - 4.0 * a * cc).sqrt();
        [(-b + d) / (2.0 * a), (-b - d) / (2.0 * a)]
    }

    fn brute(chain: &[[f64; 3]], n: u32, rr: [f64; 2], alpha: f64) -> f64 {
        let mut vals = vec![Complex64::from(alpha)];
        for _ in 0..n {
            vals = vals.iter().flat_map(|&v| roots([rr[0], rr[1], 0.0], v)).collect();
        }
        for &c in chain {
            vals = vals.iter().flat_map(|&v| roots(c, v)).collect();
        }
        let p: Complex64 = vals.iter().product();
        assert!(p.im.abs() < 1e-8 * p.norm().max(1.0));
        p.re
    }

    #[test]
    fn lemma_products_match_root_enumeration() {
        assert_eq!(lemma_product([1.0, 0.0, 0.0], [1.0, 0.0], 0, 0.7), -0.7);
        let r00 = [-4.0, 5.0];
        let phh = [-4.0, 11.0, -6.0];
        let phz = [-4.0, 9.0, -3.0];
        for n in 0..=4 {
            for &alpha in &[0.75, 1.25, -0.4] {
                let want = brute(&[phh], n, r00, alpha);
                let got = lemma_product(phh, r00, n, alpha);
                assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "n={n} {got} {want}");
                let want = brute(&[phh, phz], n, r00, alpha);
                let got = lemma_product_tilde(phz, phh, r00, n, alpha);
                assert!(
                    (got - want).abs() <= 1e-9 * want.abs().max(1.0),
                    "tilde n={n} {got} {want}"
                );
                let want = brute(&[], n, r00, alpha);
                assert!((preimage_product(r00, n, alpha) - want).abs() <= 1e-9 * want.abs().max(1.0));
            }
        }
        for &(a2, a0) in &[(2.0, 3.0), (-1.5, 0.25)] {
            let got = lemma_product([a2, 0.7, a0], r00, 0, 0.9);
            assert!((got - (a0 - 0.9) / a2).abs() < 1e-14);
        }
    }

    #[test]
    fn seeds_follow_from_the_lemma() {
        let r00 = [-4.0, 5.0];
        let phh = [-4.0, 11.0, -6.0];
        // n = 0 constant terms give H(0) - b1/2 over the scale
        let c0 = lemma_product(phh, r00, 0, 0.0);
        assert!((c0 * 16.0 + 2.5 - 26.5).abs() < 1e-12);
        let c0 = lemma_product_tilde([-4.0, 9.0, -3.0], phh, r00, 0, 0.0);
        assert!((c0 * 256.0 + 2.5 - 302.5).abs() < 1e-9);
        let c0 = lemma_product_tilde([-4.0, 7.0, -1.0], phh, r00, 0, 0.0);
        assert!((c0 * 256.0 + 2.5 - 86.5).abs() < 1e-9);
    }

    #[test]
    fn complexity_constants() {
        let z = complexity(ComplexityCase::ZeroZero, 40).unwrap();
        assert!((z - 1.04859).abs() < 1e-5);
        for (c, want) in [
            (ComplexityCase::HalfHalf, 1.26388),
            (ComplexityCase::HalfZero, 1.41685),
            (ComplexityCase::ZeroHalf, 1.30625),
        ] {
            let v = complexity(c, 40).unwrap();
            assert!((v - want).abs() < 1e-5, "{c:?}: {v}");
            let mut prev = 0.0;
            for k in 0..=40 {
                let x = complexity(c, k).unwrap();
                assert!(x >= prev);
                prev = x;
            }
        }
        assert!((loop_entropy(ComplexityCase::HalfHalf).unwrap() - 0.21529).abs() < 2e-5);
        assert!(loop_entropy(ComplexityCase::ZeroZero).is_err());
    }
}
