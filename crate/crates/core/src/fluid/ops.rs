//! Finite-difference operators on the staggered grid.
//!
//! Wall-normal velocity lives on boundary faces and is held at zero.
//! Tangential no-slip enters through mirrored ghost values (`ghost = -interior`),
//! which puts the zero exactly on the wall half a cell away.

use rayon::prelude::*;

use super::grid::{Array3, MacGrid, ScalarField, VelocityField};
use crate::Vec3;

/// Levi-Civita symbol on axis indices.
#[inline]
pub(crate) fn levi_civita(a: usize, b: usize, c: usize) -> f64 {
    match (a, b, c) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

#[inline]
fn is_boundary_face(a: usize, idx: [usize; 3], grid: &MacGrid) -> bool {
    idx[a] == 0 || idx[a] == grid.n[a]
}

/// Value at `idx + delta * e_d`; tangential out-of-range reads return the mirrored ghost.
#[inline]
fn shifted(arr: &Array3, idx: [usize; 3], d: usize, delta: isize) -> f64 {
    let pos = idx[d] as isize + delta;
    if pos < 0 || pos >= arr.dims[d] as isize {
        -arr.at(idx)
    } else {
        let mut j = idx;
        j[d] = pos as usize;
        arr.at(j)
    }
}

/// Average of component `c` onto the interior face `idx` of component `a`.
#[inline]
pub(crate) fn interp_to_face(u: &VelocityField, c: usize, a: usize, idx: [usize; 3]) -> f64 {
    let comp = &u.comps[c];
    let mut sum = 0.0;
    for da in 0..2 {
        for dc in 0..2 {
            let mut j = idx;
            j[a] = idx[a] + da - 1;
            j[c] = idx[c] + dc;
            sum += comp.at(j);
        }
    }
    0.25 * sum
}

/// Velocity of all three components at the interior face `idx` of component `a`.
#[inline]
pub(crate) fn velocity_at_face(u: &VelocityField, a: usize, idx: [usize; 3]) -> Vec3 {
    let mut v = Vec3::zeros();
    for c in 0..3 {
        v[c] = if c == a {
            u.comps[a].at(idx)
        } else {
            interp_to_face(u, c, a, idx)
        };
    }
    v
}

/// Fills every face of `out` from `f(idx)`, optionally in parallel over z-slabs.
/// Each face is computed independently, so both paths give identical bits.
pub(crate) fn fill_faces<F>(out: &mut Array3, parallel: bool, f: F)
where
    F: Fn([usize; 3]) -> f64 + Sync,
{
    let dims = out.dims;
    let slab = dims[0] * dims[1];
    let body = |(k, chunk): (usize, &mut [f64])| {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                chunk[i + dims[0] * j] = f([i, j, k]);
            }
        }
    };
    if parallel {
        out.data.par_chunks_mut(slab).enumerate().for_each(body);
    } else {
        out.data.chunks_mut(slab).enumerate().for_each(body);
    }
}

/// Seven-point Laplacian of component `a` at an interior face.
#[inline]
pub(crate) fn laplacian_at(grid: &MacGrid, u: &VelocityField, a: usize, idx: [usize; 3]) -> f64 {
    let comp = &u.comps[a];
    let centre = comp.at(idx);
    let mut lap = 0.0;
    for d in 0..3 {
        let hd2 = grid.h[d] * grid.h[d];
        lap += (shifted(comp, idx, d, 1) - 2.0 * centre + shifted(comp, idx, d, -1)) / hd2;
    }
    lap
}

/// Centered convective term `(u . grad) u_a` at an interior face.
#[inline]
pub(crate) fn advection_at(grid: &MacGrid, u: &VelocityField, a: usize, idx: [usize; 3]) -> f64 {
    let comp = &u.comps[a];
    let v = velocity_at_face(u, a, idx);
    let mut adv = 0.0;
    for d in 0..3 {
        let grad = (shifted(comp, idx, d, 1) - shifted(comp, idx, d, -1)) / (2.0 * grid.h[d]);
        adv += v[d] * grad;
    }
    adv
}

/// `nu * lap(u) - (u . grad) u` with zero on boundary faces.
pub fn viscous_advective_rhs(
    grid: &MacGrid,
    u: &VelocityField,
    nu: f64,
    parallel: bool,
) -> VelocityField {
    let mut out = VelocityField::zeros(grid);
    for (a, comp) in out.comps.iter_mut().enumerate() {
        fill_faces(comp, parallel, |idx| {
            if is_boundary_face(a, idx, grid) {
                0.0
            } else {
                nu * laplacian_at(grid, u, a, idx) - advection_at(grid, u, a, idx)
            }
        });
    }
    out
}

pub fn laplacian(grid: &MacGrid, u: &VelocityField) -> VelocityField {
    let mut out = VelocityField::zeros(grid);
    for (a, comp) in out.comps.iter_mut().enumerate() {
        fill_faces(comp, false, |idx| {
            if is_boundary_face(a, idx, grid) {
                0.0
            } else {
                laplacian_at(grid, u, a, idx)
            }
        });
    }
    out
}

pub fn advection(grid: &MacGrid, u: &VelocityField) -> VelocityField {
    let mut out = VelocityField::zeros(grid);
    for (a, comp) in out.comps.iter_mut().enumerate() {
        fill_faces(comp, false, |idx| {
            if is_boundary_face(a, idx, grid) {
                0.0
            } else {
                advection_at(grid, u, a, idx)
            }
        });
    }
    out
}

/// `e_k x u` on the faces, with the tangential components averaged from
/// neighbouring faces. `omega x u = sum_k omega_k * cross_basis(k)`.
///
/// The averaging stencil is symmetric, so `sum_faces u . (omega x u) = 0`
/// exactly in the face inner product.
pub fn cross_basis(grid: &MacGrid, u: &VelocityField, k: usize, parallel: bool) -> VelocityField {
    let mut out = VelocityField::zeros(grid);
    for (a, comp) in out.comps.iter_mut().enumerate() {
        if a == k {
            continue;
        }
        let c = 3 - a - k;
        let sign = levi_civita(a, k, c);
        fill_faces(comp, parallel, |idx| {
            if is_boundary_face(a, idx, grid) {
                0.0
            } else {
                sign * interp_to_face(u, c, a, idx)
            }
        });
    }
    out
}

/// `omega x u` on the faces.
pub fn cross(grid: &MacGrid, omega: &Vec3, u: &VelocityField) -> VelocityField {
    let mut out = VelocityField::zeros(grid);
    for k in 0..3 {
        if omega[k] != 0.0 {
            out.axpy(omega[k], &cross_basis(grid, u, k, false));
        }
    }
    out
}

/// Rigid rotation field `e_k x y` sampled at face positions, walls zeroed.
pub fn rotation_field(grid: &MacGrid, k: usize) -> VelocityField {
    let axis = Vec3::ith(k, 1.0);
    let mut u = VelocityField::from_fn(grid, |y| axis.cross(&y));
    u.zero_boundary();
    u
}

/// Cell-centered discrete divergence.
pub fn divergence(grid: &MacGrid, u: &VelocityField) -> ScalarField {
    let n = grid.n;
    let mut div = Array3::zeros(n);
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                let d = (u.comps[0].get(i + 1, j, k) - u.comps[0].get(i, j, k)) / grid.h[0]
                    + (u.comps[1].get(i, j + 1, k) - u.comps[1].get(i, j, k)) / grid.h[1]
                    + (u.comps[2].get(i, j, k + 1) - u.comps[2].get(i, j, k)) / grid.h[2];
                div.set(i, j, k, d);
            }
        }
    }
    div
}

/// Face gradient of a cell-centered scalar; zero flux on boundary faces.
pub fn gradient(grid: &MacGrid, p: &ScalarField) -> VelocityField {
    let mut g = VelocityField::zeros(grid);
    for (a, comp) in g.comps.iter_mut().enumerate() {
        let d = comp.dims;
        for k in 0..d[2] {
            for j in 0..d[1] {
                for i in 0..d[0] {
                    let idx = [i, j, k];
                    if is_boundary_face(a, idx, grid) {
                        continue;
                    }
                    let mut lo = idx;
                    lo[a] -= 1;
                    comp.set(i, j, k, (p.at(idx) - p.at(lo)) / grid.h[a]);
                }
            }
        }
    }
    g
}
