//! Dense reference constructions used to check the fast paths.
//!
//! Everything here is built from first principles with explicit matrices and
//! O(n^2) or worse loops; none of it calls into the FFT-based code.

#![allow(dead_code)]

use nalgebra::DMatrix;
use oscfield::covariance::CovarianceModel;
use oscfield::embedding::GridSpec;

/// Covariance matrix `R` of the grid nodes in lexicographic order.
pub fn dense_covariance(grid: &GridSpec, model: &CovarianceModel) -> DMatrix<f64> {
    let n = grid.num_nodes();
    DMatrix::from_fn(n, n, |a, b| {
        let xa = grid.node_coords(a);
        let xb = grid.node_coords(b);
        let t: Vec<f64> = xa.iter().zip(&xb).map(|(p, q)| p - q).collect();
        model.eval(&t).unwrap()
    })
}

/// Symmetric circulant matrix with first row `c`.
fn circulant(c: &[f64]) -> DMatrix<f64> {
    let n = c.len();
    DMatrix::from_fn(n, n, |i, j| c[(j + n - i) % n])
}

/// Mirrors `(c_0, ..., c_m)` into `(c_0, ..., c_m, c_{m-1}, ..., c_1)`.
fn mirror<T: Clone>(c: &[T]) -> Vec<T> {
    let mut out = c.to_vec();
    out.extend(c[1..c.len() - 1].iter().rev().cloned());
    out
}

/// Unpadded embedding matrix `S` assembled block by block: mirror each
/// Toeplitz block of `R` into a circulant block, then mirror the block
/// sequence into a block circulant matrix.
pub fn dense_embedding(grid: &GridSpec, model: &CovarianceModel) -> DMatrix<f64> {
    let m = grid.m();
    let c = |i: usize, j: usize| -> f64 {
        let mut t = vec![i as f64 / m[0] as f64];
        if m.len() == 2 {
            t.push(j as f64 / m[1] as f64);
        }
        model.eval(&t).unwrap()
    };
    if m.len() == 1 {
        let row: Vec<f64> = (0..=m[0]).map(|i| c(i, 0)).collect();
        return circulant(&mirror(&row));
    }
    let blocks: Vec<DMatrix<f64>> = (0..=m[1])
        .map(|j| {
            let row: Vec<f64> = (0..=m[0]).map(|i| c(i, j)).collect();
            circulant(&mirror(&row))
        })
        .collect();
    let seq = mirror(&blocks);
    let nb = seq.len();
    let bs = seq[0].nrows();
    let mut s = DMatrix::zeros(nb * bs, nb * bs);
    for bi in 0..nb {
        for bj in 0..nb {
            let blk = &seq[(bj + nb - bi) % nb];
            s.view_mut((bi * bs, bj * bs), (bs, bs)).copy_from(blk);
        }
    }
    s
}

/// `G = Re F + Im F` for the unitary DFT `F_{pq} = exp(+2 pi i p.q / n) / sqrt(s)`.
pub fn dense_hartley(dims: &[usize]) -> DMatrix<f64> {
    let s: usize = dims.iter().product();
    let split = |mut k: usize| -> Vec<usize> {
        dims.iter()
            .map(|&n| {
                let v = k % n;
                k /= n;
                v
            })
            .collect()
    };
    DMatrix::from_fn(s, s, |a, b| {
        let pa = split(a);
        let pb = split(b);
        let phase: f64 = pa
            .iter()
            .zip(&pb)
            .zip(dims)
            .map(|((p, q), &n)| 2.0 * std::f64::consts::PI * (p * q) as f64 / n as f64)
            .sum();
        (phase.cos() + phase.sin()) / (s as f64).sqrt()
    })
}

/// Spectrum of a circulant matrix by the direct cosine sum (real even row).
pub fn direct_spectrum(row: &[f64], dims: &[usize]) -> Vec<f64> {
    let s: usize = dims.iter().product();
    let split = |mut k: usize| -> Vec<usize> {
        dims.iter()
            .map(|&n| {
                let v = k % n;
                k /= n;
                v
            })
            .collect()
    };
    (0..s)
        .map(|p| {
            let pp = split(p);
            (0..s)
                .map(|q| {
                    let qq = split(q);
                    let phase: f64 = pp
                        .iter()
                        .zip(&qq)
                        .zip(dims)
                        .map(|((a, b), &n)| 2.0 * std::f64::consts::PI * (a * b) as f64 / n as f64)
                        .sum();
                    row[q] * phase.cos()
                })
                .sum()
        })
        .collect()
}

/// Indices of the leading `(m_1 + 1) x ... ` block inside the embedding domain.
pub fn leading_block_indices(grid: &GridSpec, dims: &[usize]) -> Vec<usize> {
    let m = grid.m();
    if m.len() == 1 {
        return (0..=m[0]).collect();
    }
    let mut idx = Vec::new();
    for k2 in 0..=m[1] {
        for k1 in 0..=m[0] {
            idx.push(k1 + dims[0] * k2);
        }
    }
    idx
}

/// Vertices `(i, j)` of all triangles of the structured triangulation.
pub fn triangles(m1: usize, m2: usize) -> Vec<[(usize, usize); 3]> {
    let mut out = Vec::new();
    for j in 0..m2 {
        for i in 0..m1 {
            out.push([(i, j), (i + 1, j), (i + 1, j + 1)]);
            out.push([(i, j), (i + 1, j + 1), (i, j + 1)]);
        }
    }
    out
}

/// Full nodal FE system with Dirichlet rows replaced by identity rows,
/// solved by dense LU. Element matrices use `area * B^T B` with `B` the
/// barycentric gradients obtained by inverting the affine map.
pub fn dense_fe_solve(m1: usize, m2: usize, z: &[f64], f: f64) -> Vec<f64> {
    let n = (m1 + 1) * (m2 + 1);
    let idx = |i: usize, j: usize| i + (m1 + 1) * j;
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = nalgebra::DVector::<f64>::zeros(n);
    for tri in triangles(m1, m2) {
        let p: Vec<(f64, f64)> = tri.iter().map(|&(i, j)| (i as f64 / m1 as f64, j as f64 / m2 as f64)).collect();
        let jac = nalgebra::Matrix2::new(p[1].0 - p[0].0, p[2].0 - p[0].0, p[1].1 - p[0].1, p[2].1 - p[0].1);
        let area = jac.determinant().abs() / 2.0;
        let jinv_t = jac.try_inverse().unwrap().transpose();
        let ref_grads = [
            nalgebra::Vector2::new(-1.0, -1.0),
            nalgebra::Vector2::new(1.0, 0.0),
            nalgebra::Vector2::new(0.0, 1.0),
        ];
        let g: Vec<_> = ref_grads.iter().map(|r| jinv_t * r).collect();
        let k = tri.iter().map(|&(i, j)| z[idx(i, j)].exp()).sum::<f64>() / 3.0;
        for (pa, &(ia, ja)) in tri.iter().enumerate() {
            b[idx(ia, ja)] += f * area / 3.0;
            for (pb, &(ib, jb)) in tri.iter().enumerate() {
                a[(idx(ia, ja), idx(ib, jb))] += k * area * g[pa].dot(&g[pb]);
            }
        }
    }
    for j in 0..=m2 {
        for (i, val) in [(0, 1.0), (m1, 0.0)] {
            let d = idx(i, j);
            a.row_mut(d).fill(0.0);
            a[(d, d)] = 1.0;
            b[d] = val;
        }
    }
    a.lu().solve(&b).unwrap().iter().copied().collect()
}

/// P1 interpolant at `x` by searching all triangles and solving for
/// barycentric coordinates.
pub fn barycentric_eval(m1: usize, m2: usize, u: &[f64], x: [f64; 2]) -> f64 {
    let idx = |i: usize, j: usize| i + (m1 + 1) * j;
    for tri in triangles(m1, m2) {
        let p: Vec<(f64, f64)> = tri.iter().map(|&(i, j)| (i as f64 / m1 as f64, j as f64 / m2 as f64)).collect();
        let mat = nalgebra::Matrix3::new(p[0].0, p[1].0, p[2].0, p[0].1, p[1].1, p[2].1, 1.0, 1.0, 1.0);
        let lam = mat.try_inverse().unwrap() * nalgebra::Vector3::new(x[0], x[1], 1.0);
        if lam.iter().all(|&l| l >= -1e-12) {
            return tri.iter().zip(lam.iter()).map(|(&(i, j), l)| l * u[idx(i, j)]).sum();
        }
    }
    panic!("point outside mesh");
}

/// L2 norm of the P1 function by the edge-midpoint rule, exact for the
/// quadratic integrand on each triangle.
pub fn l2_norm_quadrature(m1: usize, m2: usize, u: &[f64]) -> f64 {
    let idx = |i: usize, j: usize| i + (m1 + 1) * j;
    let area = 0.5 / (m1 * m2) as f64;
    let mut acc = 0.0;
    for tri in triangles(m1, m2) {
        let v: Vec<f64> = tri.iter().map(|&(i, j)| u[idx(i, j)]).collect();
        for (a, b) in [(0, 1), (1, 2), (2, 0)] {
            let mid = 0.5 * (v[a] + v[b]);
            acc += area / 3.0 * mid * mid;
        }
    }
    acc.sqrt()
}
