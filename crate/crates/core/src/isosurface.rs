//! Dense field sampling, Marching Cubes and connected components.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{Aabb, Point3, TriangleMesh};

/// Lattice values equal to the iso level are moved up by this much so that
/// no vertex lands exactly on a lattice point.
pub const ISO_NUDGE: f64 = 1e-10;

pub const DEFAULT_RESOLUTION: usize = 128;

/// Samples of a field on the regular lattice spanning `bounds`, box corners
/// included, stored x-fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarGrid {
    pub resolution: [usize; 3],
    pub bounds: Aabb,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(resolution: [usize; 3], bounds: Aabb, values: Vec<f64>) -> Result<Self> {
        let g = Self {
            resolution,
            bounds,
            values,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution.iter().any(|&r| r < 2) {
            return Err(Error::Invalid(format!("grid resolution {:?} below 2", self.resolution)));
        }
        if !self.bounds.is_valid() {
            return Err(Error::Invalid("grid bounds must be a non-empty box".into()));
        }
        let n: usize = self.resolution.iter().product();
        if self.values.len() != n {
            return Err(Error::Invalid(format!(
                "{} grid values for {n} lattice points",
                self.values.len()
            )));
        }
        Ok(())
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution[0] * (j + self.resolution[1] * k)
    }

    pub fn spacing(&self) -> Point3 {
        let e = self.bounds.extent();
        Point3::new(
            e.x / (self.resolution[0] - 1) as f64,
            e.y / (self.resolution[1] - 1) as f64,
            e.z / (self.resolution[2] - 1) as f64,
        )
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Point3 {
        lattice_point(&self.bounds, self.resolution, i, j, k)
    }

    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn negated(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| -v).collect(),
            ..self.clone()
        }
    }
}

fn lattice_coord(min: f64, max: f64, n: usize, i: usize) -> f64 {
    if i == n - 1 {
        max
    } else {
        min + (max - min) * (i as f64 / (n - 1) as f64)
    }
}

fn lattice_point(bounds: &Aabb, res: [usize; 3], i: usize, j: usize, k: usize) -> Point3 {
    Point3::new(
        lattice_coord(bounds.min.x, bounds.max.x, res[0], i),
        lattice_coord(bounds.min.y, bounds.max.y, res[1], j),
        lattice_coord(bounds.min.z, bounds.max.z, res[2], k),
    )
}

/// Sample `field` on a `resolution` lattice over `bounds`. Slices along z
/// are evaluated in parallel.
pub fn eval_grid<F: ScalarField + ?Sized>(field: &F, resolution: [usize; 3], bounds: Aabb) -> Result<ScalarGrid> {
    if resolution.iter().any(|&r| r < 2) {
        return Err(Error::Invalid(format!("grid resolution {resolution:?} below 2")));
    }
    if !bounds.is_valid() {
        return Err(Error::Invalid("grid bounds must be a non-empty box".into()));
    }
    let [nx, ny, nz] = resolution;
    let slices: Vec<Vec<f64>> = (0..nz)
        .into_par_iter()
        .map(|k| {
            let pts: Vec<Point3> = (0..ny)
                .flat_map(|j| (0..nx).map(move |i| (i, j)))
                .map(|(i, j)| lattice_point(&bounds, resolution, i, j, k))
                .collect();
            field.values(&pts)
        })
        .collect::<Result<_>>()?;
    ScalarGrid::new(resolution, bounds, slices.concat())
}

/// Corner `c` of a cell sits at offset `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
fn corner_offset(c: usize) -> [usize; 3] {
    [c & 1, (c >> 1) & 1, (c >> 2) & 1]
}

/// Edge `e = 4 * axis + m` runs from corner `a` (bit `axis` clear) to
/// `a | 1 << axis`; `m` enumerates the two other bits in order.
fn edge_corners(e: usize) -> (usize, usize) {
    let axis = e / 4;
    let m = e % 4;
    let others: Vec<usize> = (0..3).filter(|&b| b != axis).collect();
    let a = ((m & 1) << others[0]) | (((m >> 1) & 1) << others[1]);
    (a, a | (1 << axis))
}

fn edge_between(a: usize, b: usize) -> usize {
    (0..12)
        .find(|&e| {
            let (p, q) = edge_corners(e);
            (p, q) == (a, b) || (p, q) == (b, a)
        })
        .expect("corners share an edge")
}

/// Triangles (as cell edge triples) for each of the 256 sign cases. Bit `c`
/// of the case index is set when corner `c` is inside (below iso).
///
/// The table is derived rather than transcribed: on every cube face the
/// crossed edges are paired into segments (ambiguous faces separate the
/// inside corners), the segments close into loops, and each loop is
/// fan-triangulated with its normal pointing toward the outside corners.
fn case_table() -> &'static Vec<Vec<[usize; 3]>> {
    static TABLE: OnceLock<Vec<Vec<[usize; 3]>>> = OnceLock::new();
    TABLE.get_or_init(|| (0..256).map(triangulate_case).collect())
}

fn triangulate_case(case: usize) -> Vec<[usize; 3]> {
    let inside = |c: usize| case >> c & 1 == 1;
    let mut adj: [Vec<usize>; 12] = Default::default();
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in 0..2 {
            let cyc: Vec<usize> = [(0, 0), (1, 0), (1, 1), (0, 1)]
                .iter()
                .map(|&(bu, bv)| (side << axis) | (bu << u) | (bv << v))
                .collect();
            let edges: Vec<usize> = (0..4).map(|i| edge_between(cyc[i], cyc[(i + 1) % 4])).collect();
            let crossed: Vec<usize> = (0..4).filter(|&i| inside(cyc[i]) != inside(cyc[(i + 1) % 4])).collect();
            let mut link = |a: usize, b: usize| {
                adj[a].push(b);
                adj[b].push(a);
            };
            match crossed.len() {
                0 => {}
                2 => link(edges[crossed[0]], edges[crossed[1]]),
                4 => {
                    // edges[i] joins cyc[i] and cyc[i+1]; cut off each inside corner.
                    if inside(cyc[0]) {
                        link(edges[3], edges[0]);
                        link(edges[1], edges[2]);
                    } else {
                        link(edges[0], edges[1]);
                        link(edges[2], edges[3]);
                    }
                }
                _ => unreachable!("a face has an even number of crossed edges"),
            }
        }
    }

    let midpoint = |e: usize| -> Point3 {
        let (a, b) = edge_corners(e);
        let (pa, pb) = (corner_offset(a), corner_offset(b));
        Point3::new(
            (pa[0] + pb[0]) as f64 * 0.5,
            (pa[1] + pb[1]) as f64 * 0.5,
            (pa[2] + pb[2]) as f64 * 0.5,
        )
    };
    let corner = |c: usize| {
        let o = corner_offset(c);
        Point3::new(o[0] as f64, o[1] as f64, o[2] as f64)
    };

    let mut visited = [false; 12];
    let mut tris = Vec::new();
    for start in 0..12 {
        if visited[start] || adj[start].is_empty() {
            continue;
        }
        let mut cycle = vec![start];
        visited[start] = true;
        let mut prev = start;
        let mut cur = adj[start][0];
        while cur != start {
            visited[cur] = true;
            cycle.push(cur);
            let next = if adj[cur][0] != prev { adj[cur][0] } else { adj[cur][1] };
            prev = cur;
            cur = next;
        }

        let mut normal = Point3::ORIGIN;
        let mut outward = Point3::ORIGIN;
        for (i, &e) in cycle.iter().enumerate() {
            let p = midpoint(e);
            let q = midpoint(cycle[(i + 1) % cycle.len()]);
            normal += p.cross(q);
            let (a, b) = edge_corners(e);
            outward += if inside(a) {
                corner(b) - corner(a)
            } else {
                corner(a) - corner(b)
            };
        }
        if normal.dot(outward) < 0.0 {
            cycle.reverse();
        }
        for i in 1..cycle.len() - 1 {
            tris.push([cycle[0], cycle[i], cycle[i + 1]]);
        }
    }
    tris
}

/// Triangulate the `iso` level set of a grid. Vertices are linearly
/// interpolated on lattice edges and shared between neighboring cells;
/// triangle normals `(b - a) x (c - a)` point toward larger field values.
pub fn marching_cubes(grid: &ScalarGrid, iso: f64) -> Result<TriangleMesh> {
    grid.validate()?;
    let [nx, ny, nz] = grid.resolution;
    let value = |idx: usize| {
        let v = grid.values[idx];
        if v == iso {
            iso + ISO_NUDGE
        } else {
            v
        }
    };
    let table = case_table();
    let stride = [1, nx, nx * ny];
    let n = nx * ny * nz;
    // vertex id per lattice edge, indexed by the lower corner and axis
    let mut edge_vertex: [Vec<u32>; 3] = [vec![u32::MAX; n], vec![u32::MAX; n], vec![u32::MAX; n]];
    let mut mesh = TriangleMesh::default();

    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let base = grid.index(i, j, k);
                let corner_idx = |c: usize| {
                    let o = corner_offset(c);
                    base + o[0] * stride[0] + o[1] * stride[1] + o[2] * stride[2]
                };
                let mut case = 0usize;
                for c in 0..8 {
                    if value(corner_idx(c)) < iso {
                        case |= 1 << c;
                    }
                }
                let tris = &table[case];
                if tris.is_empty() {
                    continue;
                }
                let mut local = [u32::MAX; 12];
                for e in 0..12 {
                    let (a, b) = edge_corners(e);
                    if (case >> a & 1) == (case >> b & 1) {
                        continue;
                    }
                    let (ia, ib) = (corner_idx(a), corner_idx(b));
                    let axis = e / 4;
                    let slot = &mut edge_vertex[axis][ia];
                    if *slot == u32::MAX {
                        let (va, vb) = (value(ia), value(ib));
                        let t = (iso - va) / (vb - va);
                        let oa = corner_offset(a);
                        let ob = corner_offset(b);
                        let pa = grid.point(i + oa[0], j + oa[1], k + oa[2]);
                        let pb = grid.point(i + ob[0], j + ob[1], k + ob[2]);
                        *slot = mesh.vertices.len() as u32;
                        mesh.vertices.push(pa.lerp(pb, t));
                    }
                    local[e] = *slot;
                }
                for t in tris {
                    mesh.triangles.push(t.map(|e| local[e]));
                }
            }
        }
    }
    Ok(mesh)
}

/// Split a mesh into vertex-connected components. Components are ordered by
/// their smallest original vertex index and re-indexed in original order;
/// vertices not referenced by any triangle are dropped.
pub fn split_components(mesh: &TriangleMesh) -> Vec<TriangleMesh> {
    let n = mesh.vertices.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut used = vec![false; n];
    for t in &mesh.triangles {
        let [a, b, c] = t.map(|i| i as usize);
        used[a] = true;
        used[b] = true;
        used[c] = true;
        for (x, y) in [(a, b), (b, c)] {
            let (rx, ry) = (find(&mut parent, x), find(&mut parent, y));
            if rx != ry {
                parent[rx.max(ry)] = rx.min(ry);
            }
        }
    }

    let mut component_of_root = vec![usize::MAX; n];
    let mut new_index = vec![u32::MAX; n];
    let mut components: Vec<TriangleMesh> = Vec::new();
    for v in 0..n {
        if !used[v] {
            continue;
        }
        let r = find(&mut parent, v);
        if component_of_root[r] == usize::MAX {
            component_of_root[r] = components.len();
            components.push(TriangleMesh {
                normals: mesh.normals.as_ref().map(|_| Vec::new()),
                ..Default::default()
            });
        }
        let comp = &mut components[component_of_root[r]];
        new_index[v] = comp.vertices.len() as u32;
        comp.vertices.push(mesh.vertices[v]);
        if let (Some(src), Some(dst)) = (&mesh.normals, &mut comp.normals) {
            dst.push(src[v]);
        }
    }
    for t in &mesh.triangles {
        let r = find(&mut parent, t[0] as usize);
        components[component_of_root[r]]
            .triangles
            .push(t.map(|i| new_index[i as usize]));
    }
    components
}
