//! Escape-time rendering of the filled Julia sets of `𝒰` (fluxes and `λ`)
//! and `𝒰₂ = (4α, R(α, α, ·))`.
//!
//! The step uses `|Ψ|` with the phase `θ` carried by the fluxes, written out in
//! real arithmetic so that rasters are reproducible to the last bit.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, SgError};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MapKind {
    U,
    U2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMode {
    /// `β = α` at the start of every orbit.
    Diagonal,
    Fixed(f64),
}

/// What to do when `Ψ = 0` stops an orbit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PsiZeroPolicy {
    /// Count the cell as escaped, as a division by zero does in floating point.
    #[default]
    Escape,
    Retain,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RasterConfig {
    pub grid_alpha: usize,
    pub grid_lambda: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub threshold: f64,
    pub max_iters: usize,
    pub map: MapKind,
    pub beta_mode: BetaMode,
    pub psi_zero: PsiZeroPolicy,
}

impl Default for RasterConfig {
    fn default() -> Self {
        RasterConfig {
            grid_alpha: 301,
            grid_lambda: 301,
            lambda_min: 0.0,
            lambda_max: 2.0,
            threshold: 10.0,
            max_iters: 20,
            map: MapKind::U,
            beta_mode: BetaMode::Diagonal,
            psi_zero: PsiZeroPolicy::Escape,
        }
    }
}

impl RasterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_alpha < 2 || self.grid_lambda < 2 {
            return Err(SgError::Argument("grid sizes must be at least 2".into()));
        }
        if self.threshold.is_nan() || self.threshold <= 0.0 {
            return Err(SgError::Argument("threshold must be positive".into()));
        }
        if self.max_iters < 1 {
            return Err(SgError::Argument("max_iters must be at least 1".into()));
        }
        if self.lambda_max.is_nan() || self.lambda_min.is_nan() || self.lambda_max <= self.lambda_min {
            return Err(SgError::Argument("lambda_max must exceed lambda_min".into()));
        }
        Ok(())
    }

    pub fn alpha_at(&self, i: usize) -> f64 {
        grid_point(0.0, 1.0, self.grid_alpha, i)
    }

    pub fn lambda_at(&self, j: usize) -> f64 {
        grid_point(self.lambda_min, self.lambda_max, self.grid_lambda, j)
    }
}

/// `k`-th of `n` equally spaced points on `[lo, hi]`, endpoints exact.
pub fn grid_point(lo: f64, hi: f64, n: usize, k: usize) -> f64 {
    if k + 1 == n {
        hi
    } else {
        lo + (k as f64 * (hi - lo)) / (n - 1) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RasterCell {
    pub retained: bool,
    /// Index of the first iterate with `|λ| ≥ threshold`.
    pub escape_iter: Option<u32>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Raster {
    pub config: RasterConfig,
    /// `cells[j * grid_alpha + i]` is the cell at `(α_i, λ_j)`, `λ` ascending.
    pub cells: Vec<RasterCell>,
    /// Orbits stopped by `Ψ = 0`.
    pub psi_zero_hits: usize,
}

impl Raster {
    pub fn cell(&self, i: usize, j: usize) -> RasterCell {
        self.cells[j * self.config.grid_alpha + i]
    }

    pub fn retained_count(&self) -> usize {
        self.cells.iter().filter(|c| c.retained).count()
    }
}

/// One polar step of `𝒰` from `(α, β, λ)`; `None` when `Ψ = 0`.
pub fn polar_step<T: Real>(al: T, be: T, l: T) -> Option<(T, T, T)> {
    let tau = T::TAU();
    let x = (tau * al).cos();
    let xs = (tau * al).sin();
    let y = (tau * be).cos();
    let ys = (tau * be).sin();
    let lit = T::lit;
    let cosaplusb = x * y - xs * ys;
    let cosa2plusb = (x * x - xs * xs) * y - lit(2.0) * xs * x * ys;
    let sinaplusb = xs * y + x * ys;
    let sina2plusb = lit(2.0) * xs * x * y + ys * (x * x - xs * xs);
    let a = lit(16.0) * (l * l) - (lit(32.0) + lit(4.0) * x) * l + lit(15.0) + lit(4.0) * x + cosaplusb;
    let d = -(l * l * l) + lit(3.0) * (l * l) - lit(45.0) / lit(16.0) * l + lit(13.0) / lit(16.0) - y / lit(32.0);
    let u = T::one() - l;
    let re = u * u - T::one() / lit(16.0)
        + u / lit(4.0) * (lit(2.0) * x + cosa2plusb)
        + T::one() / lit(16.0) * (x * x - xs * xs + lit(2.0) * cosaplusb);
    let im = -u / lit(4.0) * (lit(2.0) * xs + sina2plusb)
        - (T::one() / lit(16.0)) * (lit(2.0) * x * xs + lit(2.0) * sinaplusb);
    let norm = (re * re + im * im).sqrt();
    if norm == T::zero() {
        return None;
    }
    let theta = im.atan2(re);
    let r = T::one() + (a - lit(64.0) * d * u) / (lit(16.0) * norm);
    let shift = lit(3.0) * theta / lit(2.0) / T::PI();
    Some((
        (lit(3.0) * al + be + shift).frac1(),
        (lit(3.0) * be + al - shift).frac1(),
        r,
    ))
}

/// One step of `𝒰₂` with `R` on the polar branch; `None` when `Ψ = 0`.
pub fn polar_step_u2<T: Real>(al: T, l: T) -> Option<(T, T)> {
    let (_, _, r) = polar_step(al, al, l)?;
    Some(((T::lit(4.0) * al).frac1(), r))
}

fn orbit<T: Real>(cfg: &RasterConfig, alpha: f64, lambda: f64) -> (RasterCell, bool) {
    let th = T::lit(cfg.threshold);
    let mut al = T::lit(alpha);
    let mut be = match (cfg.map, cfg.beta_mode) {
        (MapKind::U, BetaMode::Fixed(b)) => T::lit(b),
        _ => al,
    };
    let mut l = T::lit(lambda);
    let mut count = 0usize;
    loop {
        // NaN escapes, as in the reference loop
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(l.abs() < th) {
            return (
                RasterCell {
                    retained: false,
                    escape_iter: Some(count as u32),
                },
                false,
            );
        }
        count += 1;
        if count == cfg.max_iters {
            return (
                RasterCell {
                    retained: true,
                    escape_iter: None,
                },
                false,
            );
        }
        let next = match cfg.map {
            MapKind::U => polar_step(al, be, l),
            MapKind::U2 => polar_step_u2(al, l).map(|(a, r)| (a, a, r)),
        };
        match next {
            Some((a, b, r)) => {
                al = a;
                be = b;
                l = r;
            }
            None => {
                let cell = match cfg.psi_zero {
                    PsiZeroPolicy::Escape => RasterCell {
                        retained: false,
                        escape_iter: Some(count as u32),
                    },
                    PsiZeroPolicy::Retain => RasterCell {
                        retained: true,
                        escape_iter: None,
                    },
                };
                return (cell, true);
            }
        }
    }
}

pub fn render(cfg: &RasterConfig) -> Result<Raster> {
    render_with::<f64>(cfg)
}

/// Renders with scalar type `T`; the result does not depend on the thread count.
pub fn render_with<T: Real>(cfg: &RasterConfig) -> Result<Raster> {
    cfg.validate()?;
    let rows: Vec<(Vec<RasterCell>, usize)> = (0..cfg.grid_lambda)
        .into_par_iter()
        .map(|j| {
            let lambda = cfg.lambda_at(j);
            let mut hits = 0;
            let row = (0..cfg.grid_alpha)
                .map(|i| {
                    let (c, hit) = orbit::<T>(cfg, cfg.alpha_at(i), lambda);
                    hits += hit as usize;
                    c
                })
                .collect();
            (row, hits)
        })
        .collect();
    let psi_zero_hits = rows.iter().map(|r| r.1).sum();
    if psi_zero_hits > 0 {
        log::debug!("{psi_zero_hits} orbits stopped at Ψ = 0");
    }
    let cells = rows.into_iter().flat_map(|r| r.0).collect();
    Ok(Raster {
        config: *cfg,
        cells,
        psi_zero_hits,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RasterFormat {
    Pgm,
    Csv,
}

impl RasterFormat {
    pub fn from_path(path: &Path) -> Option<RasterFormat> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "pgm" => Some(RasterFormat::Pgm),
            "csv" => Some(RasterFormat::Csv),
            _ => None,
        }
    }
}

/// Binary PGM, black = retained, first image row = `λ_max`.
pub fn pgm_bytes(r: &Raster) -> Vec<u8> {
    let (w, h) = (r.config.grid_alpha, r.config.grid_lambda);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for j in (0..h).rev() {
        for i in 0..w {
            out.push(if r.cell(i, j).retained { 0 } else { 255 });
        }
    }
    out
}

/// CSV rows in image order (first row `λ_max`).
pub fn csv_string(r: &Raster) -> String {
    let mut s = String::from("alpha,lambda,retained,escape_iter\n");
    for j in (0..r.config.grid_lambda).rev() {
        let lambda = r.config.lambda_at(j);
        for i in 0..r.config.grid_alpha {
            let c = r.cell(i, j);
            let esc = c.escape_iter.map(|e| e.to_string()).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.config.alpha_at(i),
                lambda,
                c.retained as u8,
                esc
            ));
        }
    }
    s
}

pub fn write_raster(r: &Raster, format: RasterFormat, path: &Path) -> Result<()> {
    let bytes = match format {
        RasterFormat::Pgm => pgm_bytes(r),
        RasterFormat::Csv => csv_string(r).into_bytes(),
    };
    let io = |e: std::io::Error| SgError::Io(format!("{}: {e}", path.display()));
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&bytes).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decimation::{decimation_kit_with, Branch};
    use crate::gauge::FluxPair;
    use crate::scalar::circ_dist;

    #[test]
    fn step_agrees_with_complex_kit() {
        let mut s = 0.123f64;
        for _ in 0..200 {
            s = (s * 7.31 + 0.377).fract();
            let a = s;
            s = (s * 5.17 + 0.211).fract();
            let b = s;
            s = (s * 3.91 + 0.613).fract();
            let l = -1.0 + 3.0 * s;
            let k = decimation_kit_with(FluxPair::new(a, b), l, Branch::Polar);
            let (a2, b2, r) = polar_step(a, b, l).unwrap();
            assert!((r - k.r.unwrap()).abs() < 1e-9 * r.abs().max(1.0));
            assert!(circ_dist(a2, k.alpha_down) < 1e-9 && circ_dist(b2, k.beta_down) < 1e-9);
        }
    }

    fn point(cfg: &RasterConfig, alpha: f64, lambda: f64) -> RasterCell {
        orbit::<f64>(cfg, alpha, lambda).0
    }

    #[test]
    fn sample_points() {
        let cfg = RasterConfig::default();
        assert!(point(&cfg, 0.0, 0.0).retained);
        let c = point(&cfg, 0.0, 1.5);
        assert!(!c.retained);
        let retain = RasterConfig {
            psi_zero: PsiZeroPolicy::Retain,
            ..cfg
        };
        assert!(point(&retain, 0.0, 1.5).retained);
        // Ψ ≠ 0 next to the hit: escape through large |λ|
        let c = point(&cfg, 0.0, 1.52);
        assert!(!c.retained && c.escape_iter.unwrap() <= 4);
    }

    #[test]
    fn raising_iterations_never_retains_more() {
        let base = RasterConfig {
            grid_alpha: 41,
            grid_lambda: 41,
            ..Default::default()
        };
        let r1 = render(&base).unwrap();
        let r2 = render(&RasterConfig { max_iters: 30, ..base }).unwrap();
        for (a, b) in r1.cells.iter().zip(&r2.cells) {
            assert!(a.retained || !b.retained);
        }
    }

    #[test]
    fn pgm_layout() {
        let cfg = RasterConfig {
            grid_alpha: 2,
            grid_lambda: 2,
            ..Default::default()
        };
        let r = Raster {
            config: cfg,
            cells: vec![
                RasterCell {
                    retained: true,
                    escape_iter: None
                };
                4
            ],
            psi_zero_hits: 0,
        };
        let b = pgm_bytes(&r);
        assert!(b.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(&b[b.len() - 4..], &[0, 0, 0, 0]);
        let mut r = r;
        r.cells[0].retained = false; // (α_0, λ_min) is the first pixel of the last row
        let b = pgm_bytes(&r);
        assert_eq!(&b[b.len() - 4..], &[0, 0, 255, 0]);
        assert!(csv_string(&r).starts_with("alpha,lambda,retained,escape_iter\n0,2,1,\n"));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let cfg = RasterConfig {
            grid_alpha: 31,
            grid_lambda: 31,
            ..Default::default()
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| render(&cfg).unwrap());
        let b = render(&cfg).unwrap();
        assert_eq!(a.cells, b.cells);
    }

    #[test]
    fn single_precision_renders() {
        let cfg = RasterConfig {
            grid_alpha: 21,
            grid_lambda: 21,
            ..Default::default()
        };
        let r = render_with::<f32>(&cfg).unwrap();
        assert!(r.retained_count() > 0);
    }

    #[test]
    fn invalid_configs() {
        assert!(render(&RasterConfig {
            grid_alpha: 1,
            ..Default::default()
        })
        .is_err());
        assert!(render(&RasterConfig {
            threshold: 0.0,
            ..Default::default()
        })
        .is_err());
        assert!(render(&RasterConfig {
            max_iters: 0,
            ..Default::default()
        })
        .is_err());
    }
}
