//! Closed-form spectra for half-integer fluxes and forward verification of
//! spectral decimation against the dense eigensolver.

use rayon::prelude::*;
use serde::Serialize;

use crate::decimation::{
    classify, decimation_kit, exceptional_set, is_half_integer, multiplicity_transfer, ClassificationTag, HALF_TOL,
};
use crate::error::{Result, SgError};
use crate::gasket::{build_gasket, dim, pow3, GasketGraph};
use crate::gauge::{build_connection, FluxPair};
use crate::operator::{assemble, spectrum, Spectrum, SpectrumEntry, DEFAULT_CLUSTER_TOL};
use crate::scalar::circ_dist;

/// The four quadratics `R(α, β, ·)` with `α, β ∈ {0, 1/2}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum QuadMap {
    ZeroZero,
    HalfHalf,
    HalfZero,
    ZeroHalf,
}

impl QuadMap {
    /// Coefficients `(a, b, c)` of `aλ² + bλ + c`.
    fn coeffs(self) -> (f64, f64, f64) {
        match self {
            QuadMap::ZeroZero => (-4.0, 5.0, 0.0),
            QuadMap::HalfHalf => (-4.0, 11.0, -6.0),
            QuadMap::HalfZero => (-4.0, 9.0, -3.0),
            QuadMap::ZeroHalf => (-4.0, 7.0, -1.0),
        }
    }

    pub fn eval(self, lambda: f64) -> f64 {
        let (a, b, c) = self.coeffs();
        (a * lambda + b) * lambda + c
    }

    pub fn from_flux(flux: FluxPair<f64>) -> Result<QuadMap> {
        let h = |x: f64| circ_dist(x, 0.5) <= HALF_TOL;
        let z = |x: f64| circ_dist(x, 0.0) <= HALF_TOL;
        match (flux.alpha, flux.beta) {
            (a, b) if z(a) && z(b) => Ok(QuadMap::ZeroZero),
            (a, b) if h(a) && h(b) => Ok(QuadMap::HalfHalf),
            (a, b) if h(a) && z(b) => Ok(QuadMap::HalfZero),
            (a, b) if z(a) && h(b) => Ok(QuadMap::ZeroHalf),
            _ => Err(SgError::Argument(format!(
                "closed forms need fluxes in {{0, 1/2}}, got ({}, {}); use decimation_verify",
                flux.alpha, flux.beta
            ))),
        }
    }
}

/// The two real solutions of `R(λ) = value`, ascending.
pub fn quadratic_preimages(map: QuadMap, value: f64) -> Result<[f64; 2]> {
    let (a, b, c) = map.coeffs();
    let c = c - value;
    let mut disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        if disc >= -1e-12 {
            disc = 0.0;
        } else {
            return Err(SgError::NonRealPreimage(disc));
        }
    }
    let sq = disc.sqrt();
    // numerically stable pair
    let q = -0.5 * (b + b.signum() * sq);
    let (r1, r2) = if q == 0.0 {
        (-b / (2.0 * a), -b / (2.0 * a))
    } else {
        (q / a, c / q)
    };
    Ok(if r1 <= r2 { [r1, r2] } else { [r2, r1] })
}

/// `k`-fold `R(0,0,·)` preimages of `anchor`, then one preimage under each map
/// of `prefix_chain` in order. `k = 0` is the anchor itself.
#[derive(Clone, Debug, Serialize)]
pub struct SeriesSpec {
    pub anchor: f64,
    pub prefix_chain: Vec<QuadMap>,
    pub depth: usize,
    pub multiplicity: usize,
}

const MAX_SERIES_DEPTH: usize = 20;

impl SeriesSpec {
    pub fn realize(&self) -> Result<Vec<f64>> {
        if self.depth + self.prefix_chain.len() > MAX_SERIES_DEPTH {
            return Err(SgError::ResourceLimit(format!(
                "series depth {} exceeds {MAX_SERIES_DEPTH}",
                self.depth + self.prefix_chain.len()
            )));
        }
        let mut vals = vec![self.anchor];
        let chain = std::iter::repeat_n(QuadMap::ZeroZero, self.depth).chain(self.prefix_chain.iter().copied());
        for map in chain {
            let mut next = Vec::with_capacity(2 * vals.len());
            for v in vals {
                next.extend(quadratic_preimages(map, v)?);
            }
            vals = next;
        }
        Ok(vals)
    }
}

/// `(3^e + c) / 2` when `e ≥ 0` and the value is a positive integer.
fn tab_mult(e: i64, c: i64) -> Option<usize> {
    if e < 0 {
        return None;
    }
    let v = 3i64.pow(e as u32) + c;
    (v > 0 && v % 2 == 0).then_some((v / 2) as usize)
}

/// Fixed values and series for one of the four half-integer flux pairs at level `n`.
pub fn closed_form_table(map: QuadMap, n: usize) -> (Vec<(f64, usize)>, Vec<SeriesSpec>) {
    let n = n as i64;
    let mut fixed: Vec<(f64, Option<usize>)> = Vec::new();
    let mut series = Vec::new();
    let mut push_series = |anchor: f64, chain: &[QuadMap], k_max: i64, shift: i64, c: i64| {
        for k in 0..=k_max {
            if let Some(m) = tab_mult(n - k - shift, c) {
                series.push(SeriesSpec {
                    anchor,
                    prefix_chain: chain.to_vec(),
                    depth: k as usize,
                    multiplicity: m,
                });
            }
        }
    };
    use QuadMap::*;
    match map {
        ZeroZero => {
            fixed.push((0.0, Some(1)));
            fixed.push((1.5, tab_mult(n, 3)));
            push_series(0.75, &[], n - 1, 1, 3);
            push_series(1.25, &[], n - 2, 1, -1);
        }
        HalfHalf => {
            fixed.push((0.5, tab_mult(n, 3)));
            fixed.push((0.75, tab_mult(n - 1, -1)));
            fixed.push((1.25, tab_mult(n - 1, 3)));
            fixed.push((2.0, Some(1)));
            push_series(0.75, &[HalfHalf], n - 2, 2, 3);
            push_series(1.25, &[HalfHalf], n - 3, 2, -1);
        }
        HalfZero | ZeroHalf => {
            if map == HalfZero {
                fixed.push((0.5, tab_mult(n, 3)));
                fixed.push((1.0, Some(1)));
                fixed.push((1.25, tab_mult(n - 1, -1)));
                fixed.push((1.75, tab_mult(n - 1, 3)));
            } else {
                fixed.push((0.25, tab_mult(n - 1, 3)));
                fixed.push((0.75, tab_mult(n - 1, -1)));
                fixed.push((1.0, Some(1)));
                fixed.push((1.5, tab_mult(n, 3)));
            }
            push_series(0.75, &[map], 0, 2, -1);
            push_series(1.25, &[map], 0, 2, 3);
            push_series(0.75, &[HalfHalf, map], n - 3, 3, 3);
            push_series(1.25, &[HalfHalf, map], n - 4, 3, -1);
        }
    }
    let fixed = fixed.into_iter().filter_map(|(v, m)| m.map(|m| (v, m))).collect();
    (fixed, series)
}

/// Spectrum of `ℒ_N^{(α,β)}` for `α, β ∈ {0, 1/2}` from the closed-form tables.
pub fn spectrum_closed_form(flux: FluxPair<f64>, level: usize) -> Result<Spectrum> {
    let map = QuadMap::from_flux(flux)?;
    let (fixed, series) = closed_form_table(map, level);
    let mut vals: Vec<(f64, usize)> = fixed;
    for s in &series {
        for v in s.realize()? {
            vals.push((v, s.multiplicity));
        }
    }
    vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut pairs: Vec<SpectrumEntry> = Vec::new();
    for (v, m) in vals {
        match pairs.last_mut() {
            Some(p) if (v - p.eigenvalue).abs() < 1e-10 => p.multiplicity += m,
            _ => pairs.push(SpectrumEntry {
                eigenvalue: v,
                multiplicity: m,
            }),
        }
    }
    Ok(Spectrum { pairs })
}

/// Total multiplicity of the closed-form table without realising any series.
pub fn closed_form_total(map: QuadMap, level: usize) -> usize {
    let (fixed, series) = closed_form_table(map, level);
    fixed.iter().map(|f| f.1).sum::<usize>()
        + series
            .iter()
            .map(|s| s.multiplicity << (s.depth + s.prefix_chain.len()))
            .sum::<usize>()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Recorded but not asserted.
    Informational,
}

/// Check (a): a non-exceptional eigenvalue and its image one level down.
#[derive(Clone, Debug, Serialize)]
pub struct RegularCheck {
    pub lambda: f64,
    pub multiplicity: usize,
    pub r: f64,
    pub alpha_down: f64,
    pub beta_down: f64,
    pub reduced_multiplicity: usize,
    pub status: CheckStatus,
}

/// Checks (b) and (c): a value of the exceptional set or an `S_3` value.
#[derive(Clone, Debug, Serialize)]
pub struct ExceptionalCheck {
    pub lambda: f64,
    pub multiplicity: usize,
    pub tag: ClassificationTag,
    pub root_mult: usize,
    pub predicted: Option<usize>,
    pub note: String,
    pub status: CheckStatus,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub flux: FluxPair<f64>,
    pub level: usize,
    pub tol: f64,
    pub regular: Vec<RegularCheck>,
    pub exceptional: Vec<ExceptionalCheck>,
    pub s3: Option<ExceptionalCheck>,
    pub failures: usize,
    pub all_pass: bool,
}

fn level_spectrum(g: &GasketGraph, flux: FluxPair<f64>) -> Result<Spectrum> {
    let c = build_connection(g, flux)?;
    spectrum(&assemble(g, &c)?, DEFAULT_CLUSTER_TOL)
}

/// `S_3` value for the flux, if any: `3/2` for `α = 0`, `1/2` for `α = 1/2`.
pub fn s3_value(flux: FluxPair<f64>) -> Option<f64> {
    if circ_dist(flux.alpha, 0.0) <= HALF_TOL {
        Some(1.5)
    } else if circ_dist(flux.alpha, 0.5) <= HALF_TOL {
        Some(0.5)
    } else {
        None
    }
}

/// Forward verification of decimation for `ℒ_N^{(α,β)}` against dense spectra.
pub fn decimation_verify(flux: FluxPair<f64>, level: usize, tol: f64) -> Result<VerificationReport> {
    if level == 0 {
        return Err(SgError::NoPreviousLevel);
    }
    let g = build_gasket(level)?;
    let coarse = build_gasket(level - 1)?;
    let spec = level_spectrum(&g, flux)?;
    let exc = exceptional_set(flux);
    let near_exc = |x: f64| exc.iter().any(|&e| (e - x).abs() <= tol.max(DEFAULT_CLUSTER_TOL));
    let s3 = s3_value(flux);

    let regular: Vec<RegularCheck> = spec
        .pairs
        .par_iter()
        .filter(|p| !near_exc(p.eigenvalue) && s3.is_none_or(|s| (s - p.eigenvalue).abs() > tol))
        .map(|p| -> Result<RegularCheck> {
            let k = decimation_kit(flux, p.eigenvalue);
            let r =
                k.r.ok_or_else(|| SgError::Internal("R undefined off the exceptional set".into()))?;
            let red = level_spectrum(&coarse, FluxPair::new(k.alpha_down, k.beta_down))?;
            let rm = red.multiplicity_of(r, tol);
            let status = if rm == p.multiplicity {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            };
            Ok(RegularCheck {
                lambda: p.eigenvalue,
                multiplicity: p.multiplicity,
                r,
                alpha_down: k.alpha_down,
                beta_down: k.beta_down,
                reduced_multiplicity: rm,
                status,
            })
        })
        .collect::<Result<_>>()?;

    let s3_check = s3.map(|s| {
        let m = spec.multiplicity_of(s, tol.max(DEFAULT_CLUSTER_TOL));
        let want = (pow3(level) + 3) / 2;
        ExceptionalCheck {
            lambda: s,
            multiplicity: m,
            tag: classify(flux, s, 1e-9).tag,
            root_mult: 0,
            predicted: Some(want),
            note: "S_3 value".into(),
            status: if m == want {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
        }
    });

    let mut exceptional = Vec::new();
    for &e in &exc {
        if s3.is_some_and(|s| (s - e).abs() <= 1e-9) {
            continue;
        }
        let m = spec.multiplicity_of(e, tol.max(DEFAULT_CLUSTER_TOL));
        let cl = classify(flux, e, 1e-9);
        let mut check = ExceptionalCheck {
            lambda: e,
            multiplicity: m,
            tag: cl.tag,
            root_mult: cl.root_mult,
            predicted: None,
            note: String::new(),
            status: CheckStatus::Informational,
        };
        match cl.tag {
            ClassificationTag::Indeterminate => check.note = "classification indeterminate".into(),
            ClassificationTag::DDoubleZero { exceptional: true } => {
                check.note = "double zero at an exceptional flux".into()
            }
            tag => {
                let k = decimation_kit(flux, e);
                let mult_l = match k.r {
                    Some(r) => {
                        level_spectrum(&coarse, FluxPair::new(k.alpha_down, k.beta_down))?.multiplicity_of(r, tol)
                    }
                    None => 0,
                };
                match multiplicity_transfer(tag, mult_l, level, cl.root_mult) {
                    Ok(p) => {
                        check.predicted = Some(p);
                        check.status = if p == m { CheckStatus::Pass } else { CheckStatus::Fail };
                    }
                    Err(err) => check.note = format!("no prediction: {err}"),
                }
            }
        }
        exceptional.push(check);
    }

    let failures = regular.iter().filter(|c| c.status == CheckStatus::Fail).count()
        + exceptional.iter().filter(|c| c.status == CheckStatus::Fail).count()
        + s3_check.iter().filter(|c| c.status == CheckStatus::Fail).count();
    Ok(VerificationReport {
        flux,
        level,
        tol,
        regular,
        exceptional,
        s3: s3_check,
        failures,
        all_pass: failures == 0,
    })
}

/// True when the flux lies in `{0, 1/2}²`.
pub fn has_closed_form(flux: FluxPair<f64>) -> bool {
    is_half_integer(flux.alpha) && is_half_integer(flux.beta)
}

/// `dim_N`, re-exported for callers checking mass conservation.
pub fn dimension(level: usize) -> usize {
    dim(level)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries(s: &Spectrum) -> Vec<(f64, usize)> {
        s.pairs.iter().map(|p| (p.eigenvalue, p.multiplicity)).collect()
    }

    fn same(s: &Spectrum, want: &[(f64, usize)]) -> bool {
        let got = entries(s);
        got.len() == want.len()
            && got
                .iter()
                .zip(want)
                .all(|(g, w)| (g.0 - w.0).abs() < 1e-12 && g.1 == w.1)
    }

    #[test]
    fn preimages() {
        let s13 = 13f64.sqrt();
        let p = quadratic_preimages(QuadMap::ZeroZero, 0.75).unwrap();
        assert!((p[0] - (5.0 - s13) / 8.0).abs() < 1e-15 && (p[1] - (5.0 + s13) / 8.0).abs() < 1e-15);
        assert_eq!(quadratic_preimages(QuadMap::ZeroZero, 0.0).unwrap(), [0.0, 1.25]);
        assert_eq!(quadratic_preimages(QuadMap::HalfHalf, 0.0).unwrap(), [0.75, 2.0]);
        assert!(matches!(
            quadratic_preimages(QuadMap::ZeroZero, 2.0),
            Err(SgError::NonRealPreimage(_))
        ));
        for map in [
            QuadMap::ZeroZero,
            QuadMap::HalfHalf,
            QuadMap::HalfZero,
            QuadMap::ZeroHalf,
        ] {
            for &v in &[-3.0, 0.3, 1.0] {
                for x in quadratic_preimages(map, v).unwrap() {
                    assert!((map.eval(x) - v).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn level_one_tables() {
        let s = spectrum_closed_form(FluxPair::new(0.5, 0.5), 1).unwrap();
        assert!(same(&s, &[(0.5, 3), (1.25, 2), (2.0, 1)]));
        let s = spectrum_closed_form(FluxPair::new(0.5, 0.0), 1).unwrap();
        assert!(same(&s, &[(0.5, 3), (1.0, 1), (1.75, 2)]));
        let s = spectrum_closed_form(FluxPair::new(0.0, 0.5), 1).unwrap();
        assert!(same(&s, &[(0.25, 2), (1.0, 1), (1.5, 3)]));
    }

    #[test]
    fn zero_flux_level_two() {
        let s13 = 13f64.sqrt();
        let s = spectrum_closed_form(FluxPair::new(0.0, 0.0), 2).unwrap();
        let want = [
            (0.0, 1),
            ((5.0 - s13) / 8.0, 2),
            (0.75, 3),
            (1.25, 1),
            (1.5, 6),
            ((5.0 + s13) / 8.0, 2),
        ];
        let mut want = want.to_vec();
        want.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        assert!(same(&s, &want), "{:?}", entries(&s));
        assert_eq!(s.total_multiplicity(), 15);
    }

    #[test]
    fn mass_conservation() {
        for map in [
            QuadMap::ZeroZero,
            QuadMap::HalfHalf,
            QuadMap::HalfZero,
            QuadMap::ZeroHalf,
        ] {
            for n in 0..=8 {
                if n == 0 && map != QuadMap::ZeroZero {
                    continue;
                }
                assert_eq!(closed_form_total(map, n), dim(n), "{map:?} N={n}");
            }
        }
    }

    #[test]
    fn non_dyadic_flux_rejected() {
        assert!(matches!(
            spectrum_closed_form(FluxPair::new(0.3, 0.0), 2),
            Err(SgError::Argument(_))
        ));
    }

    #[test]
    fn verify_generic_flux() {
        let r = decimation_verify(FluxPair::new(0.3, 0.3), 2, 1e-7).unwrap();
        assert!(r.regular.iter().all(|c| c.status == CheckStatus::Pass));
        assert!(r.s3.is_none());
        let r = decimation_verify(FluxPair::new(0.0, 0.37), 2, 1e-7).unwrap();
        let s3 = r.s3.unwrap();
        assert_eq!((s3.lambda, s3.multiplicity), (1.5, 6));
    }
}
