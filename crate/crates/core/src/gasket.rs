//! Level-N Sierpinski gasket graphs on the integer triangular lattice.
//!
//! A lattice point `[i, j]` sits at `i·e1 + j·e2` with `e1 = (1, 0)` and
//! `e2 = (1/2, √3/2)`, so every graph edge has unit length. The level-N
//! corners are `[0,0]`, `[0,2^N]` (top) and `[2^N,0]`.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::error::{Result, SgError};

/// Largest level built unless the caller raises the guard.
pub const DEFAULT_MAX_LEVEL: usize = 8;

pub type Coord = [i64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Upright,
    Downright,
}

/// A triangular face of the planar embedding.
///
/// Upright cells are unit triangles. Downright cells are the holes of the
/// gasket; a hole of side `s` is bounded by a cycle of `3s` edges.
#[derive(Clone, Debug, Serialize)]
pub struct Cell {
    pub orientation: Orientation,
    pub side: usize,
    /// Corner ids, counterclockwise.
    pub vertices: [usize; 3],
    /// Full boundary cycle, counterclockwise, first vertex not repeated.
    pub boundary: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct GasketGraph {
    pub level: usize,
    pub coords: Vec<Coord>,
    /// Sorted pairs `[u, v]` with `u < v`.
    pub edges: Vec<[usize; 2]>,
    /// Corner ids: bottom-left, top, bottom-right.
    pub boundary: [usize; 3],
    pub cells: Vec<Cell>,
    /// Ids of the vertices of `V_{N-1}`, listed in level-(N-1) id order.
    pub prev_level_ids: Vec<usize>,
    adj: Vec<Vec<(usize, usize)>>,
    index: HashMap<Coord, usize>,
}

pub fn dim(level: usize) -> usize {
    (3usize.pow(level as u32 + 1) + 3) / 2
}

/// `3^n` as `usize`.
pub fn pow3(n: usize) -> usize {
    3usize.pow(n as u32)
}

/// True when `from -> to` runs counterclockwise around its upright cell.
pub fn ccw_in_upright(from: Coord, to: Coord) -> bool {
    let d = [to[0] - from[0], to[1] - from[1]];
    matches!(d, [1, 0] | [-1, 1] | [0, -1])
}

pub fn build_gasket(level: usize) -> Result<GasketGraph> {
    build_gasket_with_max(level, DEFAULT_MAX_LEVEL)
}

pub fn build_gasket_with_max(level: usize, max_level: usize) -> Result<GasketGraph> {
    if level > max_level {
        return Err(SgError::LevelTooLarge { level, max: max_level });
    }
    let mut ups = Vec::new();
    let mut holes = Vec::new();
    collect(level, [0, 0], &mut ups, &mut holes);

    let mut set = BTreeSet::new();
    for &o in &ups {
        for c in upright_corners(o) {
            set.insert(c);
        }
    }
    let coords: Vec<Coord> = set.into_iter().collect();
    let index: HashMap<Coord, usize> = coords.iter().enumerate().map(|(k, &c)| (c, k)).collect();

    let mut edges = Vec::with_capacity(3 * ups.len());
    for &o in &ups {
        let [a, b, c] = upright_corners(o).map(|p| index[&p]);
        for (u, v) in [(a, b), (b, c), (c, a)] {
            edges.push([u.min(v), u.max(v)]);
        }
    }
    edges.sort_unstable();

    let mut adj = vec![Vec::new(); coords.len()];
    for (e, &[u, v]) in edges.iter().enumerate() {
        adj[u].push((v, e));
        adj[v].push((u, e));
    }
    for list in &mut adj {
        list.sort_unstable();
    }

    let mut cells = Vec::with_capacity(ups.len() + holes.len());
    for &o in &ups {
        let ids = upright_corners(o).map(|p| index[&p]);
        cells.push(Cell {
            orientation: Orientation::Upright,
            side: 1,
            vertices: ids,
            boundary: ids.to_vec(),
        });
    }
    for &(o, h) in &holes {
        let p1 = [o[0] + h, o[1]];
        let p2 = [o[0] + h, o[1] + h];
        let p3 = [o[0], o[1] + h];
        let mut boundary = Vec::with_capacity(3 * h as usize);
        for (start, step) in [(p1, [0, 1]), (p2, [-1, 0]), (p3, [1, -1])] {
            for t in 0..h {
                boundary.push(index[&[start[0] + t * step[0], start[1] + t * step[1]]]);
            }
        }
        cells.push(Cell {
            orientation: Orientation::Downright,
            side: h as usize,
            vertices: [p1, p2, p3].map(|p| index[&p]),
            boundary,
        });
    }

    let top = 1i64 << level;
    let boundary = [index[&[0, 0]], index[&[0, top]], index[&[top, 0]]];
    let prev_level_ids = if level == 0 {
        Vec::new()
    } else {
        coords
            .iter()
            .enumerate()
            .filter(|(_, c)| c[0] % 2 == 0 && c[1] % 2 == 0)
            .map(|(k, _)| k)
            .collect()
    };

    Ok(GasketGraph {
        level,
        coords,
        edges,
        boundary,
        cells,
        prev_level_ids,
        adj,
        index,
    })
}

fn upright_corners(o: Coord) -> [Coord; 3] {
    [o, [o[0] + 1, o[1]], [o[0], o[1] + 1]]
}

fn collect(level: usize, o: Coord, ups: &mut Vec<Coord>, holes: &mut Vec<(Coord, i64)>) {
    if level == 0 {
        ups.push(o);
        return;
    }
    let h = 1i64 << (level - 1);
    holes.push((o, h));
    collect(level - 1, o, ups, holes);
    collect(level - 1, [o[0] + h, o[1]], ups, holes);
    collect(level - 1, [o[0], o[1] + h], ups, holes);
}

impl GasketGraph {
    pub fn num_vertices(&self) -> usize {
        self.coords.len()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }

    /// `(neighbor, edge id)` pairs, sorted by neighbor.
    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adj[v]
    }

    pub fn edge_id(&self, u: usize, v: usize) -> Option<usize> {
        self.adj[u].iter().find(|&&(w, _)| w == v).map(|&(_, e)| e)
    }

    pub fn id_of(&self, c: Coord) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn is_corner(&self, v: usize) -> bool {
        self.boundary.contains(&v)
    }

    pub fn count_cells(&self, o: Orientation) -> usize {
        self.cells.iter().filter(|c| c.orientation == o).count()
    }

    /// Level-N id of the midpoint between two level-N vertices of `V_{N-1}`
    /// that are adjacent at level N-1.
    pub fn midpoint(&self, a: usize, b: usize) -> Option<usize> {
        let (p, q) = (self.coords[a], self.coords[b]);
        if (p[0] + q[0]) % 2 != 0 || (p[1] + q[1]) % 2 != 0 {
            return None;
        }
        self.id_of([(p[0] + q[0]) / 2, (p[1] + q[1]) / 2])
    }

    pub fn export(&self) -> GraphExport {
        GraphExport {
            level: self.level,
            vertices: self
                .coords
                .iter()
                .enumerate()
                .map(|(id, &coord)| VertexExport { id, coord })
                .collect(),
            edges: self.edges.clone(),
            cells: self
                .cells
                .iter()
                .map(|c| CellExport {
                    orientation: c.orientation,
                    vertices: c.boundary.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct VertexExport {
    pub id: usize,
    pub coord: Coord,
}

#[derive(Debug, Serialize)]
pub struct CellExport {
    pub orientation: Orientation,
    pub vertices: Vec<usize>,
}

#[derive(Debug, Serialize)]
pub struct GraphExport {
    pub level: usize,
    pub vertices: Vec<VertexExport>,
    pub edges: Vec<[usize; 2]>,
    pub cells: Vec<CellExport>,
}
