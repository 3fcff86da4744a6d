//! P1 finite elements for `-div(k grad u) = f` on the unit square with
//! flow-cell boundary conditions: `u = 1` at `x1 = 0`, `u = 0` at `x1 = 1`,
//! zero flux at `x2 = 0` and `x2 = 1`.
//!
//! Each grid cell is split along its lower-left to upper-right diagonal. The
//! element coefficient is the mean of the nodal values of `exp(Z)` over the
//! triangle's vertices.

mod multigrid;
pub mod sparse;

use serde::{Deserialize, Serialize};

use crate::embedding::{FieldSample, GridSpec};
use crate::error::{Error, Result};
use multigrid::Multigrid;
use sparse::CsrMatrix;

/// Right-hand side `f` of the PDE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Forcing {
    Constant(f64),
    Zero,
}

impl Forcing {
    fn value(self) -> f64 {
        match self {
            Forcing::Constant(v) => v,
            Forcing::Zero => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DarcyProblem {
    pub grid: GridSpec,
    /// `Z` at the grid nodes; the coefficient is `exp(Z)`.
    pub log_field: FieldSample,
    pub forcing: Forcing,
}

impl DarcyProblem {
    pub fn new(log_field: FieldSample, forcing: Forcing) -> Result<Self> {
        let grid = log_field.grid.clone();
        if grid.dim() != 2 {
            return Err(Error::Argument(format!("Darcy problem needs a 2D grid, got d = {}", grid.dim())));
        }
        if log_field.values.len() != grid.num_nodes() {
            return Err(Error::Argument("log field does not match its grid".into()));
        }
        if let Some(v) = log_field.values.iter().find(|v| !v.exp().is_finite() || v.is_nan()) {
            return Err(Error::Domain(format!("log field value {v} gives a non-finite coefficient")));
        }
        Ok(Self {
            grid,
            log_field,
            forcing,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    Jacobi,
    /// Symmetric V(1,1) geometric multigrid cycle; falls back to Jacobi on
    /// grids that cannot be coarsened.
    Multigrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative residual `||b - A u|| / ||b||` at which CG stops.
    pub tol: f64,
    /// Iteration cap as a multiple of the number of unknowns.
    pub max_iter_factor: usize,
    pub preconditioner: Preconditioner,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter_factor: 10,
            preconditioner: Preconditioner::Multigrid,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeSolution {
    pub grid: GridSpec,
    /// Nodal values, lexicographic order.
    pub u: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual of the free-node system.
    pub residual: f64,
    /// Deterministic operation count of assembly, setup and solve.
    pub work: f64,
}

/// Free-node stiffness system after Dirichlet elimination.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Global node index of each free unknown.
    pub free_nodes: Vec<usize>,
}

/// Node indices `(i, j)` of the two triangles of cell `(i, j)`.
fn cell_triangles(i: usize, j: usize) -> [[(usize, usize); 3]; 2] {
    [
        [(i, j), (i + 1, j), (i + 1, j + 1)],
        [(i, j), (i + 1, j + 1), (i, j + 1)],
    ]
}

/// Unit-coefficient element stiffness matrix and area of a triangle.
fn element_stiffness(v: [(f64, f64); 3]) -> ([[f64; 3]; 3], f64) {
    let det = (v[1].0 - v[0].0) * (v[2].1 - v[0].1) - (v[2].0 - v[0].0) * (v[1].1 - v[0].1);
    let area = 0.5 * det.abs();
    // Gradient of the barycentric coordinate of vertex a is the rotated
    // opposite edge divided by 2 * signed area.
    let grads: [(f64, f64); 3] = std::array::from_fn(|a| {
        let p = v[(a + 1) % 3];
        let q = v[(a + 2) % 3];
        ((p.1 - q.1) / det, (q.0 - p.0) / det)
    });
    let k = std::array::from_fn(|a| std::array::from_fn(|b| area * (grads[a].0 * grads[b].0 + grads[a].1 * grads[b].1)));
    (k, area)
}

/// Assembles the free-node system.
pub fn assemble(problem: &DarcyProblem) -> LinearSystem {
    let (m1, m2) = (problem.grid.m()[0], problem.grid.m()[1]);
    let (hx, hy) = (1.0 / m1 as f64, 1.0 / m2 as f64);
    let node = |i: usize, j: usize| i + (m1 + 1) * j;
    let free = |i: usize| i > 0 && i < m1;
    let fidx = |i: usize, j: usize| (i - 1) + (m1 - 1) * j;
    let n = (m1 - 1) * (m2 + 1);
    let coef: Vec<f64> = problem.log_field.values.iter().map(|z| z.exp()).collect();
    let f = problem.forcing.value();

    let local: [_; 2] = std::array::from_fn(|t| {
        let tri = cell_triangles(0, 0)[t];
        element_stiffness(std::array::from_fn(|a| (tri[a].0 as f64 * hx, tri[a].1 as f64 * hy)))
    });

    let mut trip = Vec::with_capacity(if n == 0 { 0 } else { 7 * n + 4 * m2 });
    let mut rhs = vec![0.0; n];
    for j in 0..m2 {
        for i in 0..m1 {
            for (t, tri) in cell_triangles(i, j).iter().enumerate() {
                let (k, area) = &local[t];
                let kt = tri.iter().map(|&(a, b)| coef[node(a, b)]).sum::<f64>() / 3.0;
                for (p, &(pi, pj)) in tri.iter().enumerate() {
                    if !free(pi) {
                        continue;
                    }
                    let row = fidx(pi, pj);
                    rhs[row] += f * area / 3.0;
                    for (q, &(qi, qj)) in tri.iter().enumerate() {
                        let v = kt * k[p][q];
                        if free(qi) {
                            trip.push((row, fidx(qi, qj), v));
                        } else if qi == 0 {
                            rhs[row] -= v;
                        }
                    }
                }
            }
        }
    }
    let free_nodes = (0..=m2).flat_map(|j| (1..m1).map(move |i| node(i, j))).collect();
    LinearSystem {
        matrix: CsrMatrix::from_triplets(n, n, trip),
        rhs,
        free_nodes,
    }
}

/// Operation-count estimate of [`assemble`].
fn assembly_work(grid: &GridSpec) -> f64 {
    60.0 * (grid.m()[0] * grid.m()[1]) as f64
}

/// Assembles and solves the problem by preconditioned conjugate gradients.
pub fn assemble_and_solve(problem: &DarcyProblem, opts: &SolverOptions) -> Result<FeSolution> {
    let grid = &problem.grid;
    let (m1, m2) = (grid.m()[0], grid.m()[1]);
    let sys = assemble(problem);
    let n = sys.rhs.len();
    let mut work = assembly_work(grid);

    let mut u = vec![0.0; grid.num_nodes()];
    for j in 0..=m2 {
        u[(m1 + 1) * j] = 1.0;
    }
    if n == 0 {
        return Ok(FeSolution {
            grid: grid.clone(),
            u,
            iterations: 0,
            residual: 0.0,
            work,
        });
    }

    let mg = match opts.preconditioner {
        Preconditioner::Multigrid => Multigrid::build(sys.matrix.clone(), m1, m2),
        Preconditioner::Jacobi => None,
    };
    let inv_diag: Vec<f64> = sys.matrix.diagonal().iter().map(|d| 1.0 / d).collect();
    let (precond_work, apply): (f64, Box<dyn Fn(&[f64], &mut [f64])>) = match &mg {
        Some(mg) => {
            work += mg.setup_work();
            (mg.cycle_work(), Box::new(|r, z| mg.apply(r, z)))
        }
        None => (
            n as f64,
            Box::new(|r: &[f64], z: &mut [f64]| z.iter_mut().zip(r).zip(&inv_diag).for_each(|((z, r), d)| *z = r * d)),
        ),
    };

    let max_iter = opts.max_iter_factor.max(1) * n;
    let out = pcg(&sys.matrix, &sys.rhs, apply.as_ref(), opts.tol, max_iter)?;
    let per_iter = 2.0 * sys.matrix.nnz() as f64 + 10.0 * n as f64 + precond_work;
    work += per_iter * (out.iterations + 1) as f64;
    for (&g, &v) in sys.free_nodes.iter().zip(&out.x) {
        u[g] = v;
    }
    Ok(FeSolution {
        grid: grid.clone(),
        u,
        iterations: out.iterations,
        residual: out.residual,
        work,
    })
}

struct CgOutput {
    x: Vec<f64>,
    iterations: usize,
    residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn pcg(a: &CsrMatrix, b: &[f64], precond: &dyn Fn(&[f64], &mut [f64]), tol: f64, max_iter: usize) -> Result<CgOutput> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(CgOutput {
            x,
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut history = Vec::new();
    for it in 0..max_iter {
        let rel = dot(&r, &r).sqrt() / bnorm;
        history.push(rel);
        if rel <= tol {
            return Ok(CgOutput {
                x,
                iterations: it,
                residual: rel,
            });
        }
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
        r.iter_mut().zip(&ap).for_each(|(r, ap)| *r -= alpha * ap);
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    let rel = dot(&r, &r).sqrt() / bnorm;
    if rel <= tol {
        return Ok(CgOutput {
            x,
            iterations: max_iter,
            residual: rel,
        });
    }
    history.push(rel);
    Err(Error::SolverDiverged {
        iterations: history.len() - 1,
        final_residual: rel,
        residual_history: history,
    })
}

/// Value of the P1 interpolant of `sol` at `x`.
pub fn qoi_point(sol: &FeSolution, x: [f64; 2]) -> Result<f64> {
    if !x.iter().all(|v| (0.0..=1.0).contains(v)) {
        return Err(Error::Argument(format!("point {x:?} lies outside the unit square")));
    }
    let (m1, m2) = (sol.grid.m()[0], sol.grid.m()[1]);
    let (sx, sy) = (x[0] * m1 as f64, x[1] * m2 as f64);
    let i = (sx.floor() as usize).min(m1 - 1);
    let j = (sy.floor() as usize).min(m2 - 1);
    let (xi, eta) = (sx - i as f64, sy - j as f64);
    let at = |a: usize, b: usize| sol.u[a + (m1 + 1) * b];
    let (ua, ub, uc, ud) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
    Ok(if xi >= eta {
        (1.0 - xi) * ua + (xi - eta) * ub + eta * uc
    } else {
        (1.0 - eta) * ua + xi * uc + (eta - xi) * ud
    })
}

/// Exact L2 norm of the P1 function, `sqrt(u^T M u)`.
pub fn qoi_l2norm(sol: &FeSolution) -> f64 {
    let (m1, m2) = (sol.grid.m()[0], sol.grid.m()[1]);
    let area = 0.5 / (m1 * m2) as f64;
    let at = |a: usize, b: usize| sol.u[a + (m1 + 1) * b];
    let mut acc = 0.0;
    for j in 0..m2 {
        for i in 0..m1 {
            for tri in cell_triangles(i, j) {
                let v = tri.map(|(a, b)| at(a, b));
                let sum: f64 = v.iter().sum();
                let sq: f64 = v.iter().map(|x| x * x).sum();
                acc += area / 12.0 * (sq + sum * sum);
            }
        }
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests;
