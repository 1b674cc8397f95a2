//! Finite-difference eigensolver for a simply supported rectangular plate.
//!
//! With w = 0 and the Laplacian zero on every edge, the biharmonic operator
//! is the square of the Dirichlet Laplacian. The Laplacian is the 5-point
//! stencil on the interior nodes; the lowest eigenpairs of its square come
//! from block inverse iteration (inner solves by conjugate gradients) with
//! a Rayleigh-Ritz step through a dense symmetric eigensolver.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct FdPlate {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
}

impl FdPlate {
    /// `cells` grid intervals along each side.
    pub fn new(lx: f64, ly: f64, cells: usize) -> Self {
        FdPlate {
            nx: cells - 1,
            ny: cells - 1,
            hx: lx / cells as f64,
            hy: ly / cells as f64,
        }
    }

    pub fn unknowns(&self) -> usize {
        self.nx * self.ny
    }

    /// Negative Laplacian (positive definite).
    fn laplacian(&self, x: &[f64], out: &mut [f64]) {
        let (cx, cy) = (1.0 / (self.hx * self.hx), 1.0 / (self.hy * self.hy));
        for j in 0..self.ny {
            for i in 0..self.nx {
                let k = j * self.nx + i;
                let at = |ii: isize, jj: isize| -> f64 {
                    if ii < 0 || jj < 0 || ii >= self.nx as isize || jj >= self.ny as isize {
                        0.0
                    } else {
                        x[jj as usize * self.nx + ii as usize]
                    }
                };
                let (i, j) = (i as isize, j as isize);
                out[k] = cx * (2.0 * x[k] - at(i - 1, j) - at(i + 1, j)) + cy * (2.0 * x[k] - at(i, j - 1) - at(i, j + 1));
            }
        }
    }

    fn biharmonic(&self, x: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; x.len()];
        self.laplacian(x, &mut tmp);
        self.laplacian(&tmp, out);
    }

    fn cg_laplacian(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let mut p = r.clone();
        let mut ap = vec![0.0; n];
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut rr = dot(&r, &r);
        let stop = rr * 1e-26;
        for _ in 0..10 * n {
            if rr <= stop {
                break;
            }
            self.laplacian(&p, &mut ap);
            let a = rr / dot(&p, &ap);
            for k in 0..n {
                x[k] += a * p[k];
                r[k] -= a * ap[k];
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for k in 0..n {
                p[k] = r[k] + beta * p[k];
            }
        }
        x
    }

    /// The `count` smallest eigenvalues of the biharmonic operator, ascending.
    pub fn lowest_eigenvalues(&self, count: usize) -> Vec<f64> {
        let n = self.unknowns();
        let block = count + 6;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut x = DMatrix::<f64>::from_fn(n, block, |_, _| rng.gen::<f64>() - 0.5);
        let mut prev = vec![f64::INFINITY; block];
        let mut ritz = Vec::new();
        for _ in 0..60 {
            // y = B^{-1} x, with B = L L
            let mut y = DMatrix::<f64>::zeros(n, block);
            for c in 0..block {
                let col: Vec<f64> = x.column(c).iter().copied().collect();
                let z = self.cg_laplacian(&col);
                let w = self.cg_laplacian(&z);
                y.set_column(c, &nalgebra::DVector::from_vec(w));
            }
            let q = y.qr().q();
            let mut bq = DMatrix::<f64>::zeros(n, block);
            let mut out = vec![0.0; n];
            for c in 0..block {
                let col: Vec<f64> = q.column(c).iter().copied().collect();
                self.biharmonic(&col, &mut out);
                bq.set_column(c, &nalgebra::DVector::from_column_slice(&out));
            }
            let h = q.transpose() * &bq;
            let h = (&h + h.transpose()) * 0.5;
            let eig = SymmetricEigen::new(h);
            let mut order: Vec<usize> = (0..block).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            ritz = order.iter().map(|&i| eig.eigenvalues[i]).collect::<Vec<_>>();
            let vecs = DMatrix::from_fn(block, block, |r, c| eig.eigenvectors[(r, order[c])]);
            x = &q * vecs;
            let converged = ritz[..count]
                .iter()
                .zip(&prev)
                .all(|(a, b)| ((a - b) / a).abs() < 1e-12);
            prev = ritz.clone();
            if converged {
                break;
            }
        }
        ritz.truncate(count);
        ritz
    }
}

/// Lowest `count` natural frequencies (Hz) of the plate.
#[allow(clippy::too_many_arguments)]
pub fn fd_frequencies(
    lx: f64,
    ly: f64,
    thickness: f64,
    young: f64,
    poisson: f64,
    density: f64,
    cells: usize,
    count: usize,
) -> Vec<f64> {
    let d = young * thickness.powi(3) / (12.0 * (1.0 - poisson * poisson));
    let k = d / (density * thickness);
    FdPlate::new(lx, ly, cells)
        .lowest_eigenvalues(count)
        .into_iter()
        .map(|l| (l * k).sqrt() / (2.0 * std::f64::consts::PI))
        .collect()
}
