//! Oriented cycle-rooted spanning forests: brute-force partition functions and
//! an experimental cycle-popping sampler.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, SgError};
use crate::gasket::GasketGraph;
use crate::gauge::{cell_holonomies, Connection};
use crate::operator::dirichlet_log_det;
use crate::scalar::Real;

/// Largest number of successor maps the brute force will scan.
pub const MAX_ENUMERATION: u64 = 10_000_000;
/// Random-walk steps before the sampler gives up.
pub const DEFAULT_MAX_STEPS: u64 = 100_000_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cycle {
    /// Vertices in successor order, starting from the smallest id.
    pub vertices: Vec<usize>,
    /// Holonomy in turns along the successor direction, in `(-1/2, 1/2]`.
    pub flux: f64,
}

/// A spanning subgraph in which every vertex has exactly one outgoing edge.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrientedCrsf {
    pub successor: Vec<usize>,
    pub cycles: Vec<Cycle>,
    /// Successor edges not on a cycle.
    pub bush: Vec<[usize; 2]>,
}

fn signed_turns(x: f64) -> f64 {
    let f = x.frac1();
    if f > 0.5 {
        f - 1.0
    } else {
        f
    }
}

/// Cycles of a functional digraph, each listed once.
fn functional_cycles(succ: &[usize]) -> Vec<Vec<usize>> {
    let n = succ.len();
    // 0 unvisited, 1 on the current path, 2 finished
    let mut state = vec![0u8; n];
    let mut cycles = Vec::new();
    let mut path = Vec::new();
    for s in 0..n {
        if state[s] != 0 {
            continue;
        }
        path.clear();
        let mut v = s;
        while state[v] == 0 {
            state[v] = 1;
            path.push(v);
            v = succ[v];
        }
        if state[v] == 1 {
            let start = path.iter().position(|&p| p == v).unwrap();
            cycles.push(path[start..].to_vec());
        }
        for &p in &path {
            state[p] = 2;
        }
    }
    cycles
}

impl OrientedCrsf {
    pub fn from_successor(g: &GasketGraph, conn: &Connection, successor: Vec<usize>) -> Result<Self> {
        let n = g.num_vertices();
        if successor.len() != n {
            return Err(SgError::Argument(format!(
                "successor map has {} entries, graph has {n}",
                successor.len()
            )));
        }
        for (x, &y) in successor.iter().enumerate() {
            if y >= n || g.edge_id(x, y).is_none() {
                return Err(SgError::InvalidCycle(x, y));
            }
        }
        let mut on_cycle = vec![false; n];
        let mut cycles = Vec::new();
        for mut c in functional_cycles(&successor) {
            let k = c.iter().enumerate().min_by_key(|&(_, &v)| v).map(|(i, _)| i).unwrap();
            c.rotate_left(k);
            let flux: f64 = c.iter().map(|&v| conn.phase(g, v, successor[v])).sum();
            for &v in &c {
                on_cycle[v] = true;
            }
            cycles.push(Cycle {
                vertices: c,
                flux: signed_turns(flux),
            });
        }
        cycles.sort_by_key(|c| c.vertices[0]);
        let bush = (0..n).filter(|&v| !on_cycle[v]).map(|v| [v, successor[v]]).collect();
        Ok(OrientedCrsf {
            successor,
            cycles,
            bush,
        })
    }

    /// Checks out-degree one, adjacency, disjoint cycles and that every
    /// component holds exactly one cycle.
    pub fn validate(&self, g: &GasketGraph) -> Result<()> {
        let n = g.num_vertices();
        if self.successor.len() != n {
            return Err(SgError::Internal("successor length".into()));
        }
        for (x, &y) in self.successor.iter().enumerate() {
            if y >= n || g.edge_id(x, y).is_none() {
                return Err(SgError::InvalidCycle(x, y));
            }
        }
        let mut seen = vec![false; n];
        for c in &self.cycles {
            if c.vertices.len() < 2 {
                return Err(SgError::Internal("cycle shorter than two".into()));
            }
            for (i, &v) in c.vertices.iter().enumerate() {
                if seen[v] {
                    return Err(SgError::Internal(format!("vertex {v} on two cycles")));
                }
                seen[v] = true;
                if self.successor[v] != c.vertices[(i + 1) % c.vertices.len()] {
                    return Err(SgError::Internal("cycle does not follow successors".into()));
                }
            }
        }
        if functional_cycles(&self.successor).len() != self.cycles.len() {
            return Err(SgError::Internal("cycle list incomplete".into()));
        }
        if self.bush.len() + seen.iter().filter(|&&b| b).count() != n {
            return Err(SgError::Internal("bush edge count".into()));
        }
        Ok(())
    }
}

/// How a cycle's conductance `C(γ)` is formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CycleConductance {
    /// Product of `c(x, s(x)) = 1/deg(x)` along the cycle.
    #[default]
    Directed,
    /// Product of semiconductances `(c(x,y) + c(y,x)) / 2`.
    Semiconductance,
}

/// Edge weights `c(x,y) = 1/deg(x)` and cycle factors `C(γ)(1 - ω(γ))`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct WeightModel {
    pub cycle_conductance: CycleConductance,
}

impl WeightModel {
    pub fn weight(&self, g: &GasketGraph, ocrsf: &OrientedCrsf) -> Complex64 {
        let c = |x: usize, _y: usize| 1.0 / g.degree(x) as f64;
        let mut w = Complex64::from(ocrsf.bush.iter().map(|&[x, y]| c(x, y)).product::<f64>());
        for cyc in &ocrsf.cycles {
            let cond: f64 = cyc
                .vertices
                .iter()
                .map(|&x| {
                    let y = ocrsf.successor[x];
                    match self.cycle_conductance {
                        CycleConductance::Directed => c(x, y),
                        CycleConductance::Semiconductance => (c(x, y) + c(y, x)) / 2.0,
                    }
                })
                .product();
            w *= cond * (Complex64::from(1.0) - Complex64::from_polar(1.0, TAU * cyc.flux));
        }
        w
    }
}

fn map_count(g: &GasketGraph) -> Result<u64> {
    let mut total: u64 = 1;
    for v in 0..g.num_vertices() {
        total = total.saturating_mul(g.degree(v) as u64);
        if total > MAX_ENUMERATION {
            return Err(SgError::ResourceLimit(format!(
                "{} vertices give more than {MAX_ENUMERATION} successor maps",
                g.num_vertices()
            )));
        }
    }
    Ok(total)
}

fn decode(g: &GasketGraph, mut idx: u64) -> Vec<usize> {
    (0..g.num_vertices())
        .map(|v| {
            let nb = g.neighbors(v);
            let d = nb.len() as u64;
            let k = (idx % d) as usize;
            idx /= d;
            nb[k].0
        })
        .collect()
}

/// Calls `f` on every oriented CRSF of `g`.
pub fn for_each_ocrsf<F>(g: &GasketGraph, conn: &Connection, f: F) -> Result<()>
where
    F: Fn(&OrientedCrsf) + Sync,
{
    let total = map_count(g)?;
    (0..total).into_par_iter().try_for_each(|i| {
        let o = OrientedCrsf::from_successor(g, conn, decode(g, i))?;
        f(&o);
        Ok(())
    })
}

/// Sum of OCRSF weights under `model`.
pub fn brute_force_partition_with(g: &GasketGraph, conn: &Connection, model: WeightModel) -> Result<Complex64> {
    let total = map_count(g)?;
    (0..total)
        .into_par_iter()
        .map(|i| Ok(model.weight(g, &OrientedCrsf::from_successor(g, conn, decode(g, i))?)))
        .try_reduce(|| Complex64::from(0.0), |a, b| Ok(a + b))
}

/// Sum of OCRSF weights with directed cycle conductances; equals `det ℒ^ω`.
pub fn brute_force_partition(g: &GasketGraph, conn: &Connection) -> Result<Complex64> {
    brute_force_partition_with(g, conn, WeightModel::default())
}

/// Relative weight of an OCRSF under the sampler measure:
/// `Π 1/deg(x) · Π_γ (1 - cos 2πθ_γ)`.
pub fn sampler_weight(g: &GasketGraph, ocrsf: &OrientedCrsf) -> f64 {
    let edges: f64 = (0..g.num_vertices()).map(|x| 1.0 / g.degree(x) as f64).product();
    ocrsf.cycles.iter().map(|c| 1.0 - (TAU * c.flux).cos()).product::<f64>() * edges
}

/// Upper bound on `|θ|` over simple cycles: the sum of `|θ|` over all cells.
pub fn cycle_flux_bound(g: &GasketGraph, conn: &Connection) -> Result<f64> {
    Ok(cell_holonomies(g, conn)?
        .into_iter()
        .map(|h| signed_turns(h).abs())
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SamplerConfig {
    pub seed: u64,
    pub max_steps: u64,
}

impl SamplerConfig {
    pub fn new(seed: u64) -> Self {
        SamplerConfig {
            seed,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

fn check_window(g: &GasketGraph, conn: &Connection) -> Result<()> {
    let bound = cycle_flux_bound(g, conn)?;
    if bound < 1e-15 {
        return Err(SgError::UnsupportedFlux(
            "zero flux: no cycle is ever accepted; sample uniform spanning trees instead".into(),
        ));
    }
    if bound > 0.25 + 1e-12 {
        return Err(SgError::UnsupportedFlux(format!(
            "cycle fluxes may reach {bound:.6} turns; the sampler needs every cycle within [-1/4, 1/4]"
        )));
    }
    Ok(())
}

/// One OCRSF from loop-erased walks; a closed loop of holonomy `θ` is kept with
/// probability `1 - cos 2πθ` and popped otherwise. Experimental.
pub fn sample_crsf(g: &GasketGraph, conn: &Connection, seed: u64) -> Result<OrientedCrsf> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_crsf_with(g, conn, &mut rng, DEFAULT_MAX_STEPS)
}

pub fn sample_crsf_with<R: Rng>(
    g: &GasketGraph,
    conn: &Connection,
    rng: &mut R,
    max_steps: u64,
) -> Result<OrientedCrsf> {
    check_window(g, conn)?;
    let n = g.num_vertices();
    let mut in_forest = vec![false; n];
    let mut succ = vec![usize::MAX; n];
    let mut pos: Vec<Option<usize>> = vec![None; n];
    let mut path: Vec<usize> = Vec::new();
    // cum[i]: phase of the walk from path[0] to path[i]
    let mut cum: Vec<f64> = Vec::new();
    let mut steps = 0u64;
    for start in 0..n {
        if in_forest[start] {
            continue;
        }
        path.clear();
        cum.clear();
        path.push(start);
        cum.push(0.0);
        pos[start] = Some(0);
        loop {
            steps += 1;
            if steps > max_steps {
                return Err(SgError::ResourceLimit(format!("sampler exceeded {max_steps} steps")));
            }
            let x = *path.last().unwrap();
            let nb = g.neighbors(x);
            let y = nb[rng.gen_range(0..nb.len())].0;
            let ph = conn.phase(g, x, y);
            if in_forest[y] {
                succ[x] = y;
                break;
            }
            if let Some(j) = pos[y] {
                let theta = cum[cum.len() - 1] + ph - cum[j];
                let accept = 1.0 - (TAU * theta).cos();
                if rng.gen::<f64>() < accept {
                    succ[x] = y;
                    break;
                }
                for &v in &path[j + 1..] {
                    pos[v] = None;
                }
                path.truncate(j + 1);
                cum.truncate(j + 1);
                continue;
            }
            pos[y] = Some(path.len());
            cum.push(cum[cum.len() - 1] + ph);
            path.push(y);
        }
        for w in path.windows(2) {
            succ[w[0]] = w[1];
        }
        for &v in &path {
            in_forest[v] = true;
            pos[v] = None;
        }
    }
    OrientedCrsf::from_successor(g, conn, succ)
}

/// `ln P[no loops]` for the CRSF measure of `g` with one extra edge of
/// conductance `c` from vertex 0 to a Dirichlet point.
pub fn noloop_log_probability(g: &GasketGraph, conn: &Connection, c: f64) -> Result<f64> {
    let trivial = Connection::trivial(g);
    Ok(dirichlet_log_det(g, &trivial, 0, c)? - dirichlet_log_det(g, conn, 0, c)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gasket::build_gasket;
    use crate::gauge::{build_connection, FluxPair};
    use crate::operator::assemble;

    fn setup(level: usize, a: f64, b: f64) -> (GasketGraph, Connection) {
        let g = build_gasket(level).unwrap();
        let c = build_connection(&g, FluxPair::new(a, b)).unwrap();
        (g, c)
    }

    fn dense_det(g: &GasketGraph, c: &Connection) -> Complex64 {
        assemble(g, c).unwrap().matrix.determinant()
    }

    #[test]
    fn functional_cycles_found_once() {
        let c = functional_cycles(&[1, 0, 1, 4, 3]);
        assert_eq!(c, vec![vec![0, 1], vec![3, 4]]);
    }

    #[test]
    fn trivial_connection_gives_zero() {
        let (g, c) = setup(1, 0.0, 0.0);
        assert!(brute_force_partition(&g, &c).unwrap().norm() < 1e-15);
    }

    #[test]
    fn half_half_partition() {
        let (g, c) = setup(1, 0.5, 0.5);
        let z = brute_force_partition(&g, &c).unwrap();
        assert!((z.re - 25.0 / 64.0).abs() < 1e-12, "{z}");
        assert!(z.im.abs() < 1e-12);
    }

    #[test]
    fn partition_is_the_determinant() {
        for (a, b) in [(0.05, 0.05), (0.3, 0.7), (0.9, 0.15)] {
            let (g, c) = setup(1, a, b);
            let z = brute_force_partition(&g, &c).unwrap();
            let d = dense_det(&g, &c);
            assert!((z - d).norm() < 1e-12, "({a},{b}) {z} {d}");
            let (_, c2) = setup(1, -a, -b);
            assert!((brute_force_partition(&g, &c2).unwrap() - z).norm() < 1e-12);
        }
    }

    #[test]
    fn semiconductance_model_differs_on_unequal_degrees() {
        let (g, c) = setup(1, 0.5, 0.5);
        let z = brute_force_partition_with(
            &g,
            &c,
            WeightModel {
                cycle_conductance: CycleConductance::Semiconductance,
            },
        )
        .unwrap();
        assert!((z.re - 25.0 / 64.0).abs() > 1e-6);
    }

    #[test]
    fn level_two_is_refused() {
        let (g, c) = setup(2, 0.5, 0.5);
        assert!(matches!(brute_force_partition(&g, &c), Err(SgError::ResourceLimit(_))));
    }

    #[test]
    fn sampler_refusals() {
        let (g, c) = setup(1, 0.0, 0.0);
        assert!(matches!(sample_crsf(&g, &c, 1), Err(SgError::UnsupportedFlux(_))));
        let (g, c) = setup(1, 0.2, 0.2);
        assert!(matches!(sample_crsf(&g, &c, 1), Err(SgError::UnsupportedFlux(_))));
        let (g, c) = setup(3, 0.1, 0.1);
        assert!(matches!(sample_crsf(&g, &c, 1), Err(SgError::UnsupportedFlux(_))));
    }

    #[test]
    fn sampler_output_is_valid_and_reproducible() {
        let (g, c) = setup(3, 0.003, 0.003);
        let a = sample_crsf(&g, &c, 11).unwrap();
        a.validate(&g).unwrap();
        assert!(!a.cycles.is_empty());
        assert_eq!(a, sample_crsf(&g, &c, 11).unwrap());
        let (g, c) = setup(1, 0.05, 0.05);
        for s in 0..20 {
            sample_crsf(&g, &c, s).unwrap().validate(&g).unwrap();
        }
    }

    #[test]
    fn noloop_probability() {
        let (g, c) = setup(2, 0.0, 0.0);
        assert!(noloop_log_probability(&g, &c, 1.0).unwrap().abs() < 1e-10);
        let (g, c) = setup(2, 0.5, 0.5);
        let v2 = noloop_log_probability(&g, &c, 1.0).unwrap();
        let (g3, c3) = setup(3, 0.5, 0.5);
        let v3 = noloop_log_probability(&g3, &c3, 1.0).unwrap();
        assert!(v2 < 0.0 && v3 < v2);
        assert!(noloop_log_probability(&g, &c, 0.0).is_err());
    }
}
