//! U(1) connections with prescribed cell fluxes, and the reduced connection
//! on the previous level.
//!
//! Phases are stored in turns: `ω_xy = exp(2πi·phase(x, y))`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Result, SgError};
use crate::gasket::{build_gasket, ccw_in_upright, Cell, GasketGraph, Orientation};
use crate::scalar::{circ_dist, Real};

/// Flux through unit upright (`alpha`) and downright (`beta`) triangles, in turns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FluxPair<T> {
    pub alpha: T,
    pub beta: T,
}

impl<T: Real> FluxPair<T> {
    pub fn new(alpha: T, beta: T) -> Self {
        FluxPair {
            alpha: alpha.frac1(),
            beta: beta.frac1(),
        }
    }
}

/// How much flux a gasket hole of side `s > 1` carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum HoleFlux {
    /// The flux of the filled lattice triangle: `s(s+1)/2·β + s(s-1)/2·α`.
    /// Uniform cell fluxes then survive decimation.
    #[default]
    Lattice,
    /// Every hole carries `β` regardless of size.
    Uniform,
}

#[derive(Clone, Debug, Serialize)]
pub struct Connection {
    pub level: usize,
    /// Phase of `u -> v` for the edge `[u, v]`, `u < v`, indexed by edge id.
    pub phase: Vec<f64>,
}

/// Target holonomy of a cell traversed counterclockwise.
pub fn cell_flux(cell: &Cell, flux: FluxPair<f64>, holes: HoleFlux) -> f64 {
    match cell.orientation {
        Orientation::Upright => flux.alpha,
        Orientation::Downright => match holes {
            HoleFlux::Uniform => flux.beta,
            HoleFlux::Lattice => {
                let s = cell.side as f64;
                (s * (s + 1.0) / 2.0 * flux.beta + s * (s - 1.0) / 2.0 * flux.alpha).frac1()
            }
        },
    }
}

impl Connection {
    pub fn trivial(g: &GasketGraph) -> Self {
        Connection {
            level: g.level,
            phase: vec![0.0; g.edges.len()],
        }
    }

    /// Phase of the directed edge `x -> y`. Panics if `x` and `y` are not adjacent.
    pub fn phase(&self, g: &GasketGraph, x: usize, y: usize) -> f64 {
        let e = g.edge_id(x, y).expect("vertices are not adjacent");
        if x < y {
            self.phase[e]
        } else {
            -self.phase[e]
        }
    }

    pub fn omega(&self, g: &GasketGraph, x: usize, y: usize) -> Complex64 {
        Complex64::from_polar(1.0, std::f64::consts::TAU * self.phase(g, x, y))
    }

    fn check(&self, g: &GasketGraph) -> Result<()> {
        if self.level != g.level || self.phase.len() != g.edges.len() {
            return Err(SgError::Argument(format!(
                "connection for level {} does not match graph of level {}",
                self.level, g.level
            )));
        }
        Ok(())
    }

    /// Edge list `[u, v, phase]` for export.
    pub fn export(&self, g: &GasketGraph) -> Vec<(usize, usize, f64)> {
        g.edges.iter().zip(&self.phase).map(|(&[u, v], &p)| (u, v, p)).collect()
    }
}

pub fn build_connection(g: &GasketGraph, flux: FluxPair<f64>) -> Result<Connection> {
    build_connection_with(g, flux, HoleFlux::Lattice, 0)
}

/// Gauge fixed by a BFS spanning tree rooted at `root`; tree edges get phase 0
/// and the remaining edges solve the cell-flux equations.
pub fn build_connection_with(g: &GasketGraph, flux: FluxPair<f64>, holes: HoleFlux, root: usize) -> Result<Connection> {
    let flux = FluxPair::new(flux.alpha, flux.beta);
    let n = g.num_vertices();
    let mut in_tree = vec![false; g.edges.len()];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(v) = queue.pop_front() {
        for &(w, e) in g.neighbors(v) {
            if !seen[w] {
                seen[w] = true;
                in_tree[e] = true;
                queue.push_back(w);
            }
        }
    }
    let mut unknown = vec![usize::MAX; g.edges.len()];
    let mut m = 0;
    for (e, &t) in in_tree.iter().enumerate() {
        if !t {
            unknown[e] = m;
            m += 1;
        }
    }
    if m != g.cells.len() {
        return Err(SgError::Internal(format!("{m} free edges for {} cells", g.cells.len())));
    }

    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for (row, cell) in g.cells.iter().enumerate() {
        rhs[row] = cell_flux(cell, flux, holes);
        let b = &cell.boundary;
        for k in 0..b.len() {
            let (x, y) = (b[k], b[(k + 1) % b.len()]);
            let e = g.edge_id(x, y).ok_or(SgError::InvalidCycle(x, y))?;
            if unknown[e] != usize::MAX {
                a[(row, unknown[e])] += if x < y { 1.0 } else { -1.0 };
            }
        }
    }
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| SgError::Internal("singular cell-flux system".into()))?;

    let phase = (0..g.edges.len())
        .map(|e| {
            if unknown[e] == usize::MAX {
                0.0
            } else {
                sol[unknown[e]].frac1()
            }
        })
        .collect();
    let conn = Connection { level: g.level, phase };

    for cell in &g.cells {
        let mut cyc = cell.boundary.clone();
        cyc.push(cyc[0]);
        let h = holonomy(g, &conn, &cyc)?;
        let want = cell_flux(cell, flux, holes);
        if circ_dist(h, want) > 1e-12 {
            return Err(SgError::Internal(format!("cell holonomy {h} differs from {want}")));
        }
    }
    Ok(conn)
}

/// Holonomy in turns, in `[0, 1)`, of a closed walk (`cycle` ends where it starts).
pub fn holonomy(g: &GasketGraph, conn: &Connection, cycle: &[usize]) -> Result<f64> {
    conn.check(g)?;
    if cycle.len() < 2 || cycle[0] != cycle[cycle.len() - 1] {
        return Err(SgError::Argument("cycle must be closed".into()));
    }
    let mut sum = 0.0;
    for w in cycle.windows(2) {
        if g.edge_id(w[0], w[1]).is_none() {
            return Err(SgError::InvalidCycle(w[0], w[1]));
        }
        sum += conn.phase(g, w[0], w[1]);
    }
    Ok(sum.frac1())
}

/// Reduced connection on `G_{N-1}`: `Ω_ab = ω_ac ω_cb e^{±2πiθ}` through the
/// midpoint `c`, with `+θ` when `a -> b` runs counterclockwise around its
/// upright cell.
pub fn restrict_connection(
    fine: &GasketGraph,
    conn: &Connection,
    coarse: &GasketGraph,
    theta: f64,
) -> Result<Connection> {
    conn.check(fine)?;
    if fine.level == 0 {
        return Err(SgError::NoPreviousLevel);
    }
    if coarse.level + 1 != fine.level {
        return Err(SgError::Argument("coarse graph must be one level below".into()));
    }
    let mut phase = Vec::with_capacity(coarse.edges.len());
    for &[a, b] in &coarse.edges {
        let (fa, fb) = (fine.prev_level_ids[a], fine.prev_level_ids[b]);
        let c = fine
            .midpoint(fa, fb)
            .ok_or_else(|| SgError::Internal("missing midpoint".into()))?;
        let twist = if ccw_in_upright(coarse.coords[a], coarse.coords[b]) {
            theta
        } else {
            -theta
        };
        phase.push((conn.phase(fine, fa, c) + conn.phase(fine, c, fb) + twist).frac1());
    }
    Ok(Connection {
        level: coarse.level,
        phase,
    })
}

/// [`restrict_connection`] that builds the coarse graph itself.
pub fn restrict_to_previous(fine: &GasketGraph, conn: &Connection, theta: f64) -> Result<(GasketGraph, Connection)> {
    if fine.level == 0 {
        return Err(SgError::NoPreviousLevel);
    }
    let coarse = build_gasket(fine.level - 1)?;
    let omega = restrict_connection(fine, conn, &coarse, theta)?;
    Ok((coarse, omega))
}

/// Holonomy of every cell, in the order of `g.cells`.
pub fn cell_holonomies(g: &GasketGraph, conn: &Connection) -> Result<Vec<f64>> {
    g.cells
        .iter()
        .map(|c| {
            let mut cyc = c.boundary.clone();
            cyc.push(cyc[0]);
            holonomy(g, conn, &cyc)
        })
        .collect()
}
