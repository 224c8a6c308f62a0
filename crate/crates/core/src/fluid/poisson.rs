//! Pressure projection: cell-centered Neumann Poisson problem solved by
//! preconditioned conjugate gradients.
//!
//! On a uniform brick the discrete Neumann Laplacian separates into 1D
//! operators whose eigenvectors are the cosine modes
//! `cos(pi k (i + 1/2) / n)`. The default preconditioner applies that exact
//! inverse through dense per-axis transforms, so CG typically stops after one
//! or two iterations. The unpreconditioned path is kept for cross-checking.

use super::grid::{Array3, MacGrid, ScalarField, VelocityField};
use super::ops::{divergence, gradient};
use crate::error::{Error, Result};

/// Relative residual at which CG stops.
pub const CG_TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS_CAP: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    None,
    /// Exact separable inverse via cosine transforms.
    Spectral,
}

#[derive(Debug, Clone)]
struct AxisModes {
    n: usize,
    /// Orthonormal cosine basis, row-major `basis[i * n + k]`.
    basis: Vec<f64>,
    /// Transpose of `basis`.
    basis_t: Vec<f64>,
    /// Eigenvalues of `-d^2/dx^2` (including the `1/h^2` factor).
    eigen: Vec<f64>,
}

impl AxisModes {
    fn new(n: usize, h: f64) -> Self {
        let mut basis = vec![0.0; n * n];
        let mut eigen = vec![0.0; n];
        for k in 0..n {
            let norm = if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            for i in 0..n {
                let arg = std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n as f64;
                basis[i * n + k] = norm * arg.cos();
            }
            let s = (std::f64::consts::PI * k as f64 / (2.0 * n as f64)).sin();
            eigen[k] = 4.0 * s * s / (h * h);
        }
        let mut basis_t = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                basis_t[k * n + i] = basis[i * n + k];
            }
        }
        Self {
            n,
            basis,
            basis_t,
            eigen,
        }
    }
}

/// Outcome of one projection.
#[derive(Debug, Clone)]
pub struct ProjectionStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

#[derive(Debug, Clone)]
pub struct PressureSolver {
    grid: MacGrid,
    modes: [AxisModes; 3],
    pub preconditioner: Preconditioner,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl PressureSolver {
    pub fn new(grid: &MacGrid) -> Self {
        let cube_root = (grid.num_cells() as f64).cbrt().ceil() as usize;
        Self {
            grid: grid.clone(),
            modes: [
                AxisModes::new(grid.n[0], grid.h[0]),
                AxisModes::new(grid.n[1], grid.h[1]),
                AxisModes::new(grid.n[2], grid.h[2]),
            ],
            preconditioner: Preconditioner::Spectral,
            max_iterations: (50 * cube_root).min(MAX_ITERATIONS_CAP),
            tolerance: CG_TOLERANCE,
        }
    }

    pub fn with_preconditioner(mut self, p: Preconditioner) -> Self {
        self.preconditioner = p;
        self
    }

    pub fn grid(&self) -> &MacGrid {
        &self.grid
    }

    /// `-div grad p` with homogeneous Neumann walls.
    pub fn apply_operator(&self, p: &ScalarField) -> ScalarField {
        let n = self.grid.n;
        let mut out = Array3::zeros(n);
        for k in 0..n[2] {
            for j in 0..n[1] {
                for i in 0..n[0] {
                    let idx = [i, j, k];
                    let centre = p.at(idx);
                    let mut acc = 0.0;
                    for d in 0..3 {
                        let hd2 = self.grid.h[d] * self.grid.h[d];
                        if idx[d] > 0 {
                            let mut lo = idx;
                            lo[d] -= 1;
                            acc += (centre - p.at(lo)) / hd2;
                        }
                        if idx[d] + 1 < n[d] {
                            let mut hi = idx;
                            hi[d] += 1;
                            acc += (centre - p.at(hi)) / hd2;
                        }
                    }
                    out.set(i, j, k, acc);
                }
            }
        }
        out
    }

    /// Applies the per-axis cosine transform (or its inverse) along `axis`.
    fn transform(&self, data: &mut [f64], axis: usize, inverse: bool) {
        let n = self.grid.n;
        let modes = &self.modes[axis];
        let stride: usize = n[..axis].iter().product();
        let len = modes.n;
        // Row-major `mat[r * len + m]`: output `r` from input `m`.
        let mat = if inverse {
            &modes.basis
        } else {
            &modes.basis_t
        };
        let mut buf = vec![0.0; len * stride];
        for chunk in data.chunks_exact_mut(len * stride) {
            if stride == 1 {
                for (r, o) in buf.iter_mut().enumerate() {
                    let row = &mat[r * len..(r + 1) * len];
                    let mut acc = 0.0;
                    for (c, v) in row.iter().zip(chunk.iter()) {
                        acc += c * v;
                    }
                    *o = acc;
                }
            } else {
                buf.fill(0.0);
                for r in 0..len {
                    let out = &mut buf[r * stride..(r + 1) * stride];
                    for m in 0..len {
                        let c = mat[r * len + m];
                        let src = &chunk[m * stride..(m + 1) * stride];
                        for (o, v) in out.iter_mut().zip(src) {
                            *o += c * v;
                        }
                    }
                }
            }
            chunk.copy_from_slice(&buf);
        }
    }

    /// Exact pseudo-inverse of the operator on mean-zero fields.
    pub fn apply_preconditioner(&self, r: &ScalarField) -> ScalarField {
        match self.preconditioner {
            Preconditioner::None => r.clone(),
            Preconditioner::Spectral => {
                let mut z = r.clone();
                for axis in 0..3 {
                    self.transform(&mut z.data, axis, false);
                }
                let n = self.grid.n;
                for k in 0..n[2] {
                    for j in 0..n[1] {
                        for i in 0..n[0] {
                            let lam = self.modes[0].eigen[i]
                                + self.modes[1].eigen[j]
                                + self.modes[2].eigen[k];
                            let idx = z.index(i, j, k);
                            z.data[idx] = if lam > 0.0 { z.data[idx] / lam } else { 0.0 };
                        }
                    }
                }
                for axis in 0..3 {
                    self.transform(&mut z.data, axis, true);
                }
                z
            }
        }
    }

    /// Solves `-div grad p = rhs` for mean-zero `p`. The mean of `rhs` is removed first.
    pub fn solve(&self, rhs: &ScalarField) -> Result<(ScalarField, ProjectionStats)> {
        let mut b = rhs.clone();
        let mean = b.mean();
        for v in &mut b.data {
            *v -= mean;
        }
        let b_norm = b.dot(&b).sqrt();
        let mut x = Array3::zeros(b.dims);
        if b_norm == 0.0 {
            return Ok((
                x,
                ProjectionStats {
                    iterations: 0,
                    relative_residual: 0.0,
                },
            ));
        }
        // Unit right-hand side, so a nearly decayed field cannot underflow.
        for v in &mut b.data {
            *v /= b_norm;
        }
        let mut r = b;
        let mut z = self.apply_preconditioner(&r);
        let mut p = z.clone();
        let mut rz = r.dot(&z);
        let mut history = Vec::new();
        for iter in 1..=self.max_iterations {
            let ap = self.apply_operator(&p);
            let pap = p.dot(&ap);
            if pap.is_nan() || pap <= 0.0 {
                history.push(r.dot(&r).sqrt());
                break;
            }
            let alpha = rz / pap;
            x.axpy(alpha, &p);
            r.axpy(-alpha, &ap);
            let rel = r.dot(&r).sqrt();
            history.push(rel);
            if !rel.is_finite() {
                return Err(Error::NonFinite("pressure solve".into()));
            }
            if rel <= self.tolerance {
                let mean = x.mean();
                for v in &mut x.data {
                    *v = (*v - mean) * b_norm;
                }
                return Ok((
                    x,
                    ProjectionStats {
                        iterations: iter,
                        relative_residual: rel,
                    },
                ));
            }
            z = self.apply_preconditioner(&r);
            let rz_next = r.dot(&z);
            let beta = rz_next / rz;
            rz = rz_next;
            for (pv, zv) in p.data.iter_mut().zip(&z.data) {
                *pv = zv + beta * *pv;
            }
        }
        Err(Error::PoissonNotConverged {
            iterations: history.len(),
            residual_history: history,
        })
    }

    /// Discrete Leray projection. `u_star` must already vanish on the walls.
    /// Returns the projected field and the potential `phi` with `u = u_star - grad phi`.
    pub fn project(&self, u_star: &VelocityField) -> Result<(VelocityField, ScalarField)> {
        self.project_with_stats(u_star).map(|(u, p, _)| (u, p))
    }

    pub fn project_with_stats(
        &self,
        u_star: &VelocityField,
    ) -> Result<(VelocityField, ScalarField, ProjectionStats)> {
        let mut rhs = divergence(&self.grid, u_star);
        rhs.scale(-1.0);
        let (phi, stats) = self.solve(&rhs)?;
        let mut u = u_star.clone();
        u.axpy(-1.0, &gradient(&self.grid, &phi));
        Ok((u, phi, stats))
    }
}

/// Per-cell divergence bound met after projection.
pub fn divergence_tolerance(grid: &MacGrid, u: &VelocityField) -> f64 {
    1e-8 * u.max_abs() / grid.min_spacing()
}
