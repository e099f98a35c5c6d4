//! Scalar decimation functions `A`, `𝒟`, `Ψ`, `θ`, `R`, `φ`, the flux maps,
//! the exceptional set and the classification of exceptional points.

use num_complex::Complex;
use serde::Serialize;

use crate::error::{Result, SgError};
use crate::gasket::{dim, pow3};
use crate::gauge::FluxPair;
use crate::scalar::{circ_dist, Real};

/// Tolerance for recognising a flux as exactly 0 or 1/2.
pub const HALF_TOL: f64 = 1e-12;

fn tau<T: Real>() -> T {
    T::TAU()
}

pub fn a_fn<T: Real>(alpha: T, beta: T, lambda: T) -> T {
    let ca = (tau::<T>() * alpha).cos();
    let cab = (tau::<T>() * (alpha + beta)).cos();
    T::lit(16.0) * lambda * lambda - (T::lit(32.0) + T::lit(4.0) * ca) * lambda + T::lit(15.0) + T::lit(4.0) * ca + cab
}

pub fn d_fn<T: Real>(beta: T, lambda: T) -> T {
    let l = lambda;
    -l * l * l + T::lit(3.0) * l * l - T::lit(45.0 / 16.0) * l + T::lit(13.0 / 16.0)
        - (tau::<T>() * beta).cos() / T::lit(32.0)
}

fn cis<T: Real>(turns: T) -> Complex<T> {
    Complex::from_polar(T::one(), tau::<T>() * turns)
}

/// Coefficients `(c1, c0)` with `Ψ = u² - 1/16 + u·c1/4 + c0/16`, `u = 1 - λ`.
fn psi_coeffs<T: Real>(alpha: T, beta: T) -> (Complex<T>, Complex<T>) {
    let two = T::lit(2.0);
    let c1 = cis(-alpha).scale(two) + cis(-(two * alpha + beta));
    let c0 = cis(-two * alpha) + cis(-(alpha + beta)).scale(two);
    (c1, c0)
}

pub fn psi<T: Real>(alpha: T, beta: T, lambda: T) -> Complex<T> {
    let (c1, c0) = psi_coeffs(alpha, beta);
    let u = T::one() - lambda;
    Complex::new(u * u - T::lit(1.0 / 16.0), T::zero()) + c1.scale(u / T::lit(4.0)) + c0.scale(T::lit(1.0 / 16.0))
}

/// `d/dλ |Ψ(λ)|²`.
pub fn d_abs_psi_sq<T: Real>(alpha: T, beta: T, lambda: T) -> T {
    let (c1, _) = psi_coeffs(alpha, beta);
    let u = T::one() - lambda;
    let dpsi = -(Complex::new(T::lit(2.0) * u, T::zero()) + c1.scale(T::lit(0.25)));
    T::lit(2.0) * (psi(alpha, beta, lambda).conj() * dpsi).re
}

pub fn is_half_integer<T: Real>(x: T) -> bool {
    let tol = T::lit(HALF_TOL);
    circ_dist(x, T::zero()) <= tol || circ_dist(x, T::lit(0.5)) <= tol
}

fn is_zero_flux<T: Real>(x: T) -> bool {
    circ_dist(x, T::zero()) <= T::lit(HALF_TOL)
}

/// Both fluxes in `{0, 1/2}`: `Ψ` is real for real `λ`.
pub fn is_real_regime<T: Real>(flux: FluxPair<T>) -> bool {
    is_half_integer(flux.alpha) && is_half_integer(flux.beta)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FluxCase {
    /// Both fluxes in `{0, 1/2}`.
    I,
    /// Exactly one flux in `{0, 1/2}`.
    II,
    /// Neither, and `3α + β ≡ 1/2 (mod 1)`.
    III,
    IV,
}

pub fn flux_case<T: Real>(flux: FluxPair<T>) -> FluxCase {
    match (is_half_integer(flux.alpha), is_half_integer(flux.beta)) {
        (true, true) => FluxCase::I,
        (true, false) | (false, true) => FluxCase::II,
        _ => {
            let s = T::lit(3.0) * flux.alpha + flux.beta;
            if circ_dist(s, T::lit(0.5)) <= T::lit(HALF_TOL) {
                FluxCase::III
            } else {
                FluxCase::IV
            }
        }
    }
}

/// Which square root of `|Ψ|²` the decimation uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Branch {
    /// `|Ψ|` with the phase `θ` moved into the reduced connection.
    Polar,
    /// Signed real `Ψ` and no twist; only meaningful when `Ψ` is real.
    Signed,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DecimationStep<T> {
    pub flux: FluxPair<T>,
    pub lambda: T,
    pub a: T,
    pub d: T,
    pub psi_re: T,
    pub psi_im: T,
    pub abs_psi: T,
    /// `arg Ψ / 2π` in `[0, 1)`.
    pub theta: T,
    /// Twist applied to the reduced connection: `θ` on the polar branch, 0 on the signed one.
    pub twist: T,
    pub branch: Branch,
    pub r: Option<T>,
    pub phi: Option<T>,
    pub alpha_down: T,
    pub beta_down: T,
}

/// Signed-branch quadratics for the four half-integer flux pairs.
fn r_closed<T: Real>(alpha: T, beta: T, l: T) -> T {
    let four = T::lit(4.0);
    match (is_zero_flux(alpha), is_zero_flux(beta)) {
        (true, true) => l * (T::lit(5.0) - four * l),
        (false, false) => -(l - T::lit(2.0)) * (four * l - T::lit(3.0)),
        (false, true) => -four * l * l + T::lit(9.0) * l - T::lit(3.0),
        (true, false) => -four * l * l + T::lit(7.0) * l - T::one(),
    }
}

/// Decimation quantities on the signed branch in the real regime and on the
/// polar branch otherwise.
pub fn decimation_kit<T: Real>(flux: FluxPair<T>, lambda: T) -> DecimationStep<T> {
    let branch = if is_real_regime(flux) {
        Branch::Signed
    } else {
        Branch::Polar
    };
    decimation_kit_with(flux, lambda, branch)
}

pub fn decimation_kit_with<T: Real>(flux: FluxPair<T>, lambda: T, branch: Branch) -> DecimationStep<T> {
    let FluxPair { alpha, beta } = flux;
    let a = a_fn(alpha, beta, lambda);
    let d = d_fn(beta, lambda);
    let p = psi(alpha, beta, lambda);
    let abs_psi = p.norm();
    let theta = (p.im.atan2(p.re) / tau::<T>()).frac1();
    let sixteen = T::lit(16.0);
    let numer = a - T::lit(64.0) * d * (T::one() - lambda);
    let (r, phi, twist) = match branch {
        Branch::Polar => {
            let r = (abs_psi != T::zero()).then(|| T::one() + numer / (sixteen * abs_psi));
            let phi = (d != T::zero()).then(|| abs_psi / (T::lit(4.0) * d));
            (r, phi, theta)
        }
        Branch::Signed => {
            let r = if is_real_regime(flux) {
                Some(r_closed(alpha, beta, lambda))
            } else {
                (p.re != T::zero()).then(|| T::one() + numer / (sixteen * p.re))
            };
            let phi = (d != T::zero()).then(|| p.re / (T::lit(4.0) * d));
            (r, phi, T::zero())
        }
    };
    let three = T::lit(3.0);
    DecimationStep {
        flux,
        lambda,
        a,
        d,
        psi_re: p.re,
        psi_im: p.im,
        abs_psi,
        theta,
        twist,
        branch,
        r,
        phi,
        alpha_down: (three * alpha + beta + three * twist).frac1(),
        beta_down: (three * beta + alpha - three * twist).frac1(),
    }
}

/// One step of `𝒰 = (α↓, β↓, R)`; `None` when `R` is undefined (`Ψ = 0`).
pub fn apply_u<T: Real>(alpha: T, beta: T, lambda: T) -> Option<(T, T, T)> {
    let k = decimation_kit(FluxPair::new(alpha, beta), lambda);
    k.r.map(|r| (k.alpha_down, k.beta_down, r))
}

/// One step of `𝒰₂ = (4α mod 1, R(α, α, ·))`.
pub fn apply_u2<T: Real>(alpha: T, lambda: T) -> Option<(T, T)> {
    let k = decimation_kit(FluxPair::new(alpha, alpha), lambda);
    k.r.map(|r| ((T::lit(4.0) * alpha).frac1(), r))
}

fn merge_tol<T: Real>() -> T {
    T::lit(1e-9).max(T::epsilon().sqrt() * T::lit(4.0))
}

/// Zeros of `𝒟(β, ·)`, ascending, with multiplicities.
pub fn zeros_of_d<T: Real>(beta: T) -> Vec<(T, usize)> {
    // 𝒟 = -(η³ - 3η/16 + cos(2πβ)/32), η = λ - 1; trigonometric roots.
    let c = (tau::<T>() * beta).cos();
    let base = (-c).max(-T::one()).min(T::one()).acos();
    let half = T::lit(0.5);
    let mut roots: Vec<T> = (0..3)
        .map(|k| {
            let ang = (base - tau::<T>() * T::from_usize(k).unwrap()) / T::lit(3.0);
            T::one() + half * ang.cos()
        })
        .collect();
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<(T, usize)> = Vec::new();
    for r in roots {
        match out.last_mut() {
            Some((v, m)) if (r - *v).abs() < merge_tol::<T>() => {
                *v = (*v * T::from_usize(*m).unwrap() + r) / T::from_usize(*m + 1).unwrap();
                *m += 1;
            }
            _ => out.push((r, 1)),
        }
    }
    out
}

/// Real zeros of `Ψ(α, β, ·)`, ascending.
pub fn psi_real_zeros<T: Real>(flux: FluxPair<T>) -> Vec<T> {
    let FluxPair { alpha, beta } = flux;
    let l = T::lit;
    match flux_case(flux) {
        FluxCase::I => match (is_zero_flux(alpha), is_zero_flux(beta)) {
            (true, true) => vec![l(1.25), l(1.5)],
            (true, false) => vec![l(0.75), l(1.5)],
            (false, true) => vec![l(0.5), l(1.25)],
            (false, false) => vec![l(0.5), l(0.75)],
        },
        FluxCase::II => {
            if is_half_integer(alpha) {
                vec![if is_zero_flux(alpha) { l(1.5) } else { l(0.5) }]
            } else {
                vec![if is_zero_flux(beta) { l(1.25) } else { l(0.75) }]
            }
        }
        FluxCase::III => vec![T::one() + (tau::<T>() * alpha).cos() / l(2.0)],
        FluxCase::IV => Vec::new(),
    }
}

/// `{λ : 𝒟(β, λ) = 0 or Ψ(α, β, λ) = 0}`, ascending, deduplicated at 1e-10.
pub fn exceptional_set<T: Real>(flux: FluxPair<T>) -> Vec<T> {
    let mut v: Vec<T> = zeros_of_d(flux.beta).into_iter().map(|(r, _)| r).collect();
    v.extend(psi_real_zeros(flux));
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tol = T::lit(1e-10).max(merge_tol::<T>());
    v.dedup_by(|a, b| (*a - *b).abs() < tol);
    v
}

/// `8(λ-1)(1 - 2(λ² - 2λ(3-λ) + 45/16))`; equals `cos 2πα` exactly when a
/// zero `λ` of `𝒟` is a multiple zero of `A(λ) - A(x) + 64𝒟(x)(1-x)`.
pub fn multiple_zero_lhs<T: Real>(lambda: T) -> T {
    let l = lambda;
    T::lit(8.0)
        * (l - T::one())
        * (T::one() - T::lit(2.0) * (l * l - T::lit(2.0) * l * (T::lit(3.0) - l) + T::lit(45.0 / 16.0)))
}

pub fn h_multiple_zero_criterion(flux: FluxPair<f64>, lambda: f64) -> Result<bool> {
    let d = d_fn(flux.beta, lambda);
    if d.abs() > 1e-10 {
        return Err(SgError::Argument(format!("𝒟(β, {lambda}) = {d:e} is not zero")));
    }
    Ok((multiple_zero_lhs(lambda) - (std::f64::consts::TAU * flux.alpha).cos()).abs() <= 1e-9)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ClassificationTag {
    /// `𝒟 ≠ 0`, `Ψ ≠ 0`: multiplicity carried over from `R(λ)`.
    Regular,
    /// `φ(λ) = 0`, `𝒟 ≠ 0`: multiplicity `dim_{N-1}`.
    PhiZero,
    /// Simple zero of `𝒟`, limit zero: eigenfunctions vanish on `V_{N-1}`.
    DZeroVanishing,
    /// Simple zero of both `𝒟` and `Ψ`.
    DNotSingular,
    /// Simple zero of `𝒟`, nonzero limit.
    DZeroMixed,
    /// Real zero of `Ψ` off the zeros of `𝒟` in the generic line case.
    PsiZeroEscape,
    /// Double zero of `𝒟` that is also a zero of `Ψ`.
    DDoubleZero {
        exceptional: bool,
    },
    Indeterminate,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Classification {
    pub tag: ClassificationTag,
    /// Multiplicity of `λ` as a zero of `𝒟` (0 when `𝒟(λ) ≠ 0`).
    pub root_mult: usize,
    pub d_abs_psi_sq: f64,
    pub lemma_predicate: Option<bool>,
    /// One-sided limit estimate used when both table criteria hold.
    pub limit: Option<f64>,
}

fn is_flux(x: f64, v: f64) -> bool {
    circ_dist(x, v) <= HALF_TOL
}

/// Classify `λ` for the given fluxes. `tol` decides when `𝒟` or `Ψ` vanish.
pub fn classify(flux: FluxPair<f64>, lambda: f64, tol: f64) -> Classification {
    let FluxPair { alpha, beta } = flux;
    let d = d_fn(beta, lambda);
    let p = psi(alpha, beta, lambda).norm();
    let dz = d.abs() <= tol;
    let pz = p <= tol;
    let root_mult = if dz {
        zeros_of_d(beta)
            .into_iter()
            .min_by(|a, b| (a.0 - lambda).abs().partial_cmp(&(b.0 - lambda).abs()).unwrap())
            .map(|(_, m)| m)
            .unwrap_or(1)
    } else {
        0
    };
    let dpsi = d_abs_psi_sq(alpha, beta, lambda);
    let mut out = Classification {
        tag: ClassificationTag::Regular,
        root_mult,
        d_abs_psi_sq: dpsi,
        lemma_predicate: None,
        limit: None,
    };
    let case = flux_case(flux);
    out.tag = match (dz, pz) {
        (false, false) => ClassificationTag::Regular,
        (false, true) => {
            if case == FluxCase::III {
                ClassificationTag::PsiZeroEscape
            } else {
                ClassificationTag::PhiZero
            }
        }
        (true, true) => {
            if case == FluxCase::III || case == FluxCase::IV {
                ClassificationTag::Indeterminate
            } else if root_mult >= 2 {
                let exceptional = (is_flux(beta, 0.0) && (is_flux(alpha, 1.0 / 6.0) || is_flux(alpha, 5.0 / 6.0)))
                    || (is_flux(beta, 0.5) && (is_flux(alpha, 1.0 / 3.0) || is_flux(alpha, 2.0 / 3.0)));
                ClassificationTag::DDoubleZero { exceptional }
            } else {
                ClassificationTag::DNotSingular
            }
        }
        (true, false) => {
            let c1 = dpsi.abs() <= 1e-9;
            let c2 = (multiple_zero_lhs(lambda) - (std::f64::consts::TAU * alpha).cos()).abs() <= 1e-9;
            out.lemma_predicate = Some(c2);
            match (c1, c2) {
                (false, false) => ClassificationTag::DZeroVanishing,
                (true, false) | (false, true) => ClassificationTag::DZeroMixed,
                (true, true) => {
                    let (tag, lim) = limit_tag(flux, lambda);
                    out.limit = lim;
                    tag
                }
            }
        }
    };
    out
}

/// Numerical one-sided limits of `𝒟(x)(λ-x) / (|Ψ(x)|(R(λ) - R(x)))`.
fn limit_tag(flux: FluxPair<f64>, lambda: f64) -> (ClassificationTag, Option<f64>) {
    let r_at = |x: f64| decimation_kit(flux, x).r;
    let Some(r0) = r_at(lambda) else {
        return (ClassificationTag::Indeterminate, None);
    };
    let g = |x: f64| -> Option<f64> {
        let k = decimation_kit(flux, x);
        let dr = r0 - k.r?;
        Some(k.d * (lambda - x) / (k.abs_psi * dr))
    };
    let mut mags = Vec::new();
    for h in [1e-4, 1e-5, 1e-6] {
        match (g(lambda - h), g(lambda + h)) {
            (Some(a), Some(b)) => mags.push(0.5 * (a.abs() + b.abs())),
            _ => return (ClassificationTag::Indeterminate, None),
        }
    }
    let last = mags[2];
    if mags.iter().all(|&m| m < 1e-12) {
        return (ClassificationTag::DZeroVanishing, Some(0.0));
    }
    let r1 = mags[1] / mags[0];
    let r2 = mags[2] / mags[1];
    if r1 < 0.2 && r2 < 0.2 {
        (ClassificationTag::DZeroVanishing, Some(last))
    } else if (0.5..2.0).contains(&r1) && (0.5..2.0).contains(&r2) {
        (ClassificationTag::DZeroMixed, Some(last))
    } else {
        (ClassificationTag::Indeterminate, Some(last))
    }
}

/// Multiplicity at level `N` predicted from the tag, `mult_L = mult(ℒ_{N-1}, R(λ))`
/// and the multiplicity of `λ` as a zero of `𝒟`.
pub fn multiplicity_transfer(tag: ClassificationTag, mult_l: usize, level: usize, root_mult: usize) -> Result<usize> {
    if level == 0 {
        return Err(SgError::NoPreviousLevel);
    }
    let dim_prev = dim(level - 1) as i64;
    let d_mult = (pow3(level - 1) * root_mult) as i64;
    let ml = mult_l as i64;
    let v = match tag {
        ClassificationTag::Regular => ml,
        ClassificationTag::PhiZero => dim_prev,
        ClassificationTag::DZeroVanishing => d_mult - dim_prev + ml,
        ClassificationTag::DNotSingular => d_mult + ml,
        ClassificationTag::DZeroMixed => d_mult - dim_prev + 2 * ml,
        ClassificationTag::PsiZeroEscape => 0,
        ClassificationTag::DDoubleZero { exceptional: false } => d_mult - dim_prev + ml,
        ClassificationTag::DDoubleZero { exceptional: true } => d_mult - dim_prev + 2 * ml,
        ClassificationTag::Indeterminate => return Err(SgError::Indeterminate),
    };
    if v < 0 {
        return Err(SgError::Inconsistent(v));
    }
    Ok(v as usize)
}
