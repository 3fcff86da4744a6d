//! Geometric multigrid V-cycle on the nested structured triangulations, used
//! as a CG preconditioner.
//!
//! Coarse operators are Galerkin products `P^T A P`; `P` is P1 interpolation
//! between nested meshes restricted to free (non-Dirichlet) nodes.

use super::sparse::CsrMatrix;

/// Coarsest systems up to this size are factorised densely.
const DIRECT_LIMIT: usize = 3;

struct Level {
    a: CsrMatrix,
    diag: Vec<f64>,
    /// Interpolation from the next coarser level; absent on the coarsest.
    p: Option<CsrMatrix>,
    r: Option<CsrMatrix>,
}

pub(crate) struct Multigrid {
    levels: Vec<Level>,
    coarse: DenseCholesky,
    setup_work: f64,
    cycle_work: f64,
}

impl Multigrid {
    /// Builds the hierarchy for a free-node operator on an `m1 x m2` grid.
    /// Returns `None` when the grid cannot be coarsened down to a size that
    /// admits a direct coarse solve.
    pub(crate) fn build(a: CsrMatrix, m1: usize, m2: usize) -> Option<Self> {
        let mut dims = vec![(m1, m2)];
        let mut n = a.n_rows();
        while n > DIRECT_LIMIT {
            let (c1, c2) = *dims.last().expect("non-empty");
            if c1 % 2 != 0 || c2 % 2 != 0 || c1 < 4 {
                return None;
            }
            dims.push((c1 / 2, c2 / 2));
            n = (c1 / 2 - 1) * (c2 / 2 + 1);
        }
        let mut setup_work = 0.0;
        let mut levels = Vec::with_capacity(dims.len());
        let mut current = a;
        for w in dims.windows(2) {
            let p = prolongation(w[0], w[1]);
            let r = p.transpose();
            let ap = current.matmul(&p);
            let coarse = r.matmul(&ap);
            setup_work += 2.0 * (current.nnz() as f64 * 2.0 + ap.nnz() as f64 * 3.0);
            let diag = current.diagonal();
            levels.push(Level {
                a: std::mem::replace(&mut current, coarse),
                diag,
                p: Some(p),
                r: Some(r),
            });
        }
        let coarse = DenseCholesky::factor(&current)?;
        setup_work += coarse.factor_work();
        levels.push(Level {
            diag: current.diagonal(),
            a: current,
            p: None,
            r: None,
        });
        let mut cycle_work = coarse.solve_work();
        for l in &levels[..levels.len() - 1] {
            let pnnz = l.p.as_ref().map_or(0, |p| p.nnz()) as f64;
            cycle_work += 6.0 * l.a.nnz() as f64 + 4.0 * pnnz + 2.0 * l.a.n_rows() as f64;
        }
        Some(Self {
            levels,
            coarse,
            setup_work,
            cycle_work,
        })
    }

    pub(crate) fn setup_work(&self) -> f64 {
        self.setup_work
    }

    pub(crate) fn cycle_work(&self) -> f64 {
        self.cycle_work
    }

    /// `z = B r` for one symmetric V(1,1) cycle with zero initial guess.
    pub(crate) fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.cycle(0, r, z);
    }

    fn cycle(&self, l: usize, b: &[f64], x: &mut [f64]) {
        let lev = &self.levels[l];
        let (Some(p), Some(rmat)) = (&lev.p, &lev.r) else {
            x.copy_from_slice(b);
            self.coarse.solve_in_place(x);
            return;
        };
        x.iter_mut().for_each(|v| *v = 0.0);
        lev.a.gauss_seidel(b, x, &lev.diag, true);
        let mut res = lev.a.mul_vec(x);
        res.iter_mut().zip(b).for_each(|(r, b)| *r = b - *r);
        let rc = rmat.mul_vec(&res);
        let mut xc = vec![0.0; rc.len()];
        self.cycle(l + 1, &rc, &mut xc);
        let corr = p.mul_vec(&xc);
        x.iter_mut().zip(&corr).for_each(|(x, c)| *x += c);
        lev.a.gauss_seidel(b, x, &lev.diag, false);
    }
}

/// P1 interpolation from the `coarse` to the `fine` free-node numbering.
fn prolongation(fine: (usize, usize), coarse: (usize, usize)) -> CsrMatrix {
    let (f1, f2) = fine;
    let (c1, _) = coarse;
    let fidx = |i: usize, j: usize| (i - 1) + (f1 - 1) * j;
    let mut trip = Vec::new();
    let mut push = |row: usize, ci: usize, cj: usize, w: f64| {
        // Dirichlet coarse nodes contribute nothing to the correction.
        if ci >= 1 && ci < c1 {
            trip.push((row, (ci - 1) + (c1 - 1) * cj, w));
        }
    };
    for j in 0..=f2 {
        for i in 1..f1 {
            let row = fidx(i, j);
            match (i % 2, j % 2) {
                (0, 0) => push(row, i / 2, j / 2, 1.0),
                (1, 0) => {
                    push(row, i / 2, j / 2, 0.5);
                    push(row, i / 2 + 1, j / 2, 0.5);
                }
                (0, 1) => {
                    push(row, i / 2, j / 2, 0.5);
                    push(row, i / 2, j / 2 + 1, 0.5);
                }
                _ => {
                    // Midpoint of the coarse cell diagonal.
                    push(row, i / 2, j / 2, 0.5);
                    push(row, i / 2 + 1, j / 2 + 1, 0.5);
                }
            }
        }
    }
    let rows = (f1 - 1) * (f2 + 1);
    let cols = (c1 - 1) * (coarse.1 + 1);
    CsrMatrix::from_triplets(rows, cols, trip)
}

/// Dense lower Cholesky factor, row-major.
pub(crate) struct DenseCholesky {
    n: usize,
    l: Vec<f64>,
}

impl DenseCholesky {
    pub(crate) fn factor(a: &CsrMatrix) -> Option<Self> {
        let n = a.n_rows();
        let mut l = vec![0.0; n * n];
        for r in 0..n {
            for (c, v) in a.row(r) {
                if c <= r {
                    l[r * n + c] = v;
                }
            }
        }
        for j in 0..n {
            let mut d = l[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if d <= 0.0 || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut v = l[i * n + j];
                for k in 0..j {
                    v -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = v / d;
            }
        }
        Some(Self { n, l })
    }

    pub(crate) fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut v = x[i];
            for k in 0..i {
                v -= self.l[i * n + k] * x[k];
            }
            x[i] = v / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut v = x[i];
            for k in i + 1..n {
                v -= self.l[k * n + i] * x[k];
            }
            x[i] = v / self.l[i * n + i];
        }
    }

    fn factor_work(&self) -> f64 {
        (self.n as f64).powi(3) / 3.0
    }

    fn solve_work(&self) -> f64 {
        2.0 * (self.n as f64).powi(2)
    }
}
