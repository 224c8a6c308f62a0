//! Integral quantities of the relative velocity, by midpoint quadrature over cells.

use super::grid::{MacGrid, VelocityField};
use crate::Vec3;

/// `||u||_2^2` with face velocities averaged to cell centers.
pub fn kinetic_energy(grid: &MacGrid, u: &VelocityField) -> f64 {
    let n = grid.n;
    let mut sum = 0.0;
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                sum += u.cell_velocity(i, j, k).norm_squared();
            }
        }
    }
    sum * grid.cell_volume()
}

/// `(1/|F|) * integral of u`.
pub fn mean_velocity(grid: &MacGrid, u: &VelocityField) -> Vec3 {
    let n = grid.n;
    let mut sum = Vec3::zeros();
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                sum += u.cell_velocity(i, j, k);
            }
        }
    }
    sum / grid.num_cells() as f64
}

/// `integral of (y - reference) x u`, with `y` the body-frame cell center.
pub fn angular_momentum_about(grid: &MacGrid, u: &VelocityField, reference: &Vec3) -> Vec3 {
    let n = grid.n;
    let mut sum = Vec3::zeros();
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                let y = grid.cell_center(i, j, k) - reference;
                sum += y.cross(&u.cell_velocity(i, j, k));
            }
        }
    }
    sum * grid.cell_volume()
}

/// `integral of y x u` about the body-frame origin.
pub fn angular_momentum(grid: &MacGrid, u: &VelocityField) -> Vec3 {
    angular_momentum_about(grid, u, &Vec3::zeros())
}

/// Face fields `w_k` with `w_k . u` (plain face sum) equal to component `k`
/// of [`angular_momentum`].
pub fn angular_momentum_weights(grid: &MacGrid) -> [VelocityField; 3] {
    let mut w = [
        VelocityField::zeros(grid),
        VelocityField::zeros(grid),
        VelocityField::zeros(grid),
    ];
    let half_vol = 0.5 * grid.cell_volume();
    let n = grid.n;
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                let y = grid.cell_center(i, j, k);
                for a in 0..3 {
                    let lever = y.cross(&Vec3::ith(a, 1.0)) * half_vol;
                    let mut hi = [i, j, k];
                    hi[a] += 1;
                    for (m, field) in w.iter_mut().enumerate() {
                        let comp = &mut field.comps[a];
                        let lo_idx = comp.index(i, j, k);
                        let hi_idx = comp.index(hi[0], hi[1], hi[2]);
                        comp.data[lo_idx] += lever[m];
                        comp.data[hi_idx] += lever[m];
                    }
                }
            }
        }
    }
    w
}

/// Squared first differences split into links between stored values and
/// half-cell links from the outermost tangential values to the wall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientParts {
    pub interior: f64,
    pub wall: f64,
}

impl GradientParts {
    pub fn total(&self) -> f64 {
        self.interior + self.wall
    }
}

pub fn gradient_parts(grid: &MacGrid, u: &VelocityField) -> GradientParts {
    let vol = grid.cell_volume();
    let mut interior = 0.0;
    let mut wall = 0.0;
    for (a, comp) in u.comps.iter().enumerate() {
        let dims = comp.dims;
        for d in 0..3 {
            let h = grid.h[d];
            let stride = comp.stride(d);
            for k in 0..dims[2] {
                for j in 0..dims[1] {
                    for i in 0..dims[0] {
                        let idx = [i, j, k];
                        let here = comp.data[comp.index(i, j, k)];
                        if idx[d] + 1 < dims[d] {
                            let next = comp.data[comp.index(i, j, k) + stride];
                            let g = (next - here) / h;
                            interior += g * g;
                        }
                        if d != a && (idx[d] == 0 || idx[d] + 1 == dims[d]) {
                            // One-sided difference to the wall over half a cell.
                            let g = here / (0.5 * h);
                            wall += 0.5 * g * g;
                        }
                    }
                }
            }
        }
    }
    GradientParts {
        interior: interior * vol,
        wall: wall * vol,
    }
}

/// `2 nu ||grad u||_2^2`; equals `-2 nu (u, lap u)` in the face inner product.
pub fn dissipation_rate(grid: &MacGrid, u: &VelocityField, nu: f64) -> f64 {
    2.0 * nu * gradient_parts(grid, u).total()
}
