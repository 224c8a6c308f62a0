//! Mass properties of a brick-shaped rigid body enclosing a brick-shaped cavity.
//!
//! The body frame has its origin at the center of mass of the rigid part alone.
//! The fluid has unit density. All tensors are second-moment inertia tensors
//! `a . I b = integral of (a x y) . (b x y) rho dy`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Mat3, Vec3};

/// Relative eigenvalue gap below which two principal moments count as equal.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Body and cavity description. Extents are half side lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub outer_half_extents: [f64; 3],
    pub cavity_half_extents: [f64; 3],
    /// Cavity center relative to the outer brick center.
    #[serde(default)]
    pub cavity_offset: [f64; 3],
    #[serde(rename = "rho_B")]
    pub rho_b: f64,
    pub nu: f64,
}

impl GeometrySpec {
    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            let (outer, cav, off) = (
                self.outer_half_extents[i],
                self.cavity_half_extents[i],
                self.cavity_offset[i],
            );
            if !(outer > 0.0 && outer.is_finite()) {
                return Err(Error::Geometry(format!(
                    "outer_half_extents[{i}] must be positive, got {outer}"
                )));
            }
            if !(cav > 0.0 && cav.is_finite()) {
                return Err(Error::Geometry(format!(
                    "cavity_half_extents[{i}] must be positive, got {cav}"
                )));
            }
            if !off.is_finite() || off.abs() + cav >= outer {
                return Err(Error::Geometry(format!(
                    "cavity leaks through the body wall along axis {i}: |{off}| + {cav} >= {outer}"
                )));
            }
        }
        if !(self.rho_b > 0.0 && self.rho_b.is_finite()) {
            return Err(Error::Geometry(format!(
                "rho_B must be positive, got {}",
                self.rho_b
            )));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::Geometry(format!(
                "nu must be positive, got {}",
                self.nu
            )));
        }
        Ok(())
    }

    pub fn cavity_volume(&self) -> f64 {
        8.0 * self.cavity_half_extents.iter().product::<f64>()
    }

    pub fn outer_volume(&self) -> f64 {
        8.0 * self.outer_half_extents.iter().product::<f64>()
    }

    /// Center of mass of the rigid part, measured from the outer brick center.
    pub fn body_center_of_mass(&self) -> Vec3 {
        let v_out = self.outer_volume();
        let v_cav = self.cavity_volume();
        -Vec3::from(self.cavity_offset) * (v_cav / (v_out - v_cav))
    }

    /// Cavity center in body-frame coordinates (this is `y_F`).
    pub fn cavity_center(&self) -> Vec3 {
        Vec3::from(self.cavity_offset) - self.body_center_of_mass()
    }

    /// Length of the cavity diagonal.
    pub fn cavity_diameter(&self) -> f64 {
        2.0 * Vec3::from(self.cavity_half_extents).norm()
    }
}

/// Masses, centers of mass and inertia tensors of the structure.
#[derive(Debug, Clone, PartialEq)]
pub struct InertiaData {
    pub m_b: f64,
    pub m_f: f64,
    pub m: f64,
    /// Fluid center of mass in the body frame.
    pub y_f: Vec3,
    /// Center of mass of body plus frozen fluid.
    pub y_c: Vec3,
    /// Rigid part about its own center of mass (the origin).
    pub i_b: Mat3,
    /// Frozen fluid about the origin.
    pub i_f: Mat3,
    /// Whole structure about `y_c`.
    pub i_total: Mat3,
}

/// Inertia of a uniform brick of mass `mass` about its own center.
fn brick_inertia(mass: f64, half: &[f64; 3]) -> Mat3 {
    let sq = |i: usize| (2.0 * half[i]).powi(2);
    Mat3::from_diagonal(&Vec3::new(
        mass * (sq(1) + sq(2)) / 12.0,
        mass * (sq(0) + sq(2)) / 12.0,
        mass * (sq(0) + sq(1)) / 12.0,
    ))
}

/// Parallel-axis shift for a point mass at `d`: `m (|d|^2 Id - d d^T)`.
fn point_mass_inertia(mass: f64, d: &Vec3) -> Mat3 {
    mass * (Mat3::identity() * d.norm_squared() - d * d.transpose())
}

/// Closed-form mass properties.
pub fn compute_mass_properties(spec: &GeometrySpec) -> Result<InertiaData> {
    spec.validate()?;
    let v_out = spec.outer_volume();
    let v_cav = spec.cavity_volume();
    let m_b = spec.rho_b * (v_out - v_cav);
    let m_f = v_cav;
    let m = m_b + m_f;

    let body_com = spec.body_center_of_mass();
    let outer_center = -body_com;
    let y_f = spec.cavity_center();

    let m_out = spec.rho_b * v_out;
    let m_hole = spec.rho_b * v_cav;
    let i_b = brick_inertia(m_out, &spec.outer_half_extents)
        + point_mass_inertia(m_out, &outer_center)
        - brick_inertia(m_hole, &spec.cavity_half_extents)
        - point_mass_inertia(m_hole, &y_f);
    let i_f = brick_inertia(m_f, &spec.cavity_half_extents) + point_mass_inertia(m_f, &y_f);

    let y_c = y_f * (m_f / m);
    let i_total = compose_total_inertia(&i_b, &i_f, m, &y_c);
    Ok(InertiaData {
        m_b,
        m_f,
        m,
        y_f,
        y_c,
        i_b,
        i_f,
        i_total,
    })
}

/// Returns `M` with `M b = (I_B + I_F) b + m y_c x (y_c x b)`.
pub fn compose_total_inertia(i_b: &Mat3, i_f: &Mat3, m: f64, y_c: &Vec3) -> Mat3 {
    // y x (y x b) = y (y.b) - b |y|^2
    i_b + i_f + m * (y_c * y_c.transpose() - Mat3::identity() * y_c.norm_squared())
}

/// Midpoint-rule evaluation of the defining integrals.
///
/// The outer brick and the cavity are each sampled on their own
/// `resolution^3` grid, so both are aligned with their quadrature cells and
/// the error decays like `resolution^-2`.
pub fn quadrature_inertia_oracle(spec: &GeometrySpec, resolution: usize) -> Result<InertiaData> {
    spec.validate()?;
    if resolution < 8 {
        return Err(Error::InvalidInput(format!(
            "quadrature resolution must be at least 8, got {resolution}"
        )));
    }
    let outer = BrickSampler::new(Vec3::zeros(), spec.outer_half_extents, resolution);
    let cavity = BrickSampler::new(
        Vec3::from(spec.cavity_offset),
        spec.cavity_half_extents,
        resolution,
    );

    // First pass: masses and first moments in outer-brick coordinates.
    let (mut vol_out, mut first_out) = (0.0, Vec3::zeros());
    outer.for_each(|p, w| {
        vol_out += w;
        first_out += p * w;
    });
    let (mut vol_cav, mut first_cav) = (0.0, Vec3::zeros());
    cavity.for_each(|p, w| {
        vol_cav += w;
        first_cav += p * w;
    });
    let m_b = spec.rho_b * (vol_out - vol_cav);
    let m_f = vol_cav;
    let m = m_b + m_f;
    let body_com = (first_out - first_cav) * (spec.rho_b / m_b);
    let y_f = first_cav / vol_cav - body_com;
    let y_c = (first_cav * 1.0 + (first_out - first_cav) * spec.rho_b) / m - body_com;

    // Second pass: second moments about the body origin and about y_c.
    let tensor = |d: Vec3| Mat3::identity() * d.norm_squared() - d * d.transpose();
    let (mut out_about_o, mut out_about_c) = (Mat3::zeros(), Mat3::zeros());
    outer.for_each(|p, w| {
        let y = p - body_com;
        out_about_o += tensor(y) * w;
        out_about_c += tensor(y - y_c) * w;
    });
    let (mut cav_about_o, mut cav_about_c) = (Mat3::zeros(), Mat3::zeros());
    cavity.for_each(|p, w| {
        let y = p - body_com;
        cav_about_o += tensor(y) * w;
        cav_about_c += tensor(y - y_c) * w;
    });

    let i_b = (out_about_o - cav_about_o) * spec.rho_b;
    let i_f = cav_about_o;
    let i_total = (out_about_c - cav_about_c) * spec.rho_b + cav_about_c;
    Ok(InertiaData {
        m_b,
        m_f,
        m,
        y_f,
        y_c,
        i_b,
        i_f,
        i_total,
    })
}

struct BrickSampler {
    center: Vec3,
    half: [f64; 3],
    n: usize,
}

impl BrickSampler {
    fn new(center: Vec3, half: [f64; 3], n: usize) -> Self {
        Self { center, half, n }
    }

    fn for_each(&self, mut f: impl FnMut(Vec3, f64)) {
        let h: Vec<f64> = self.half.iter().map(|a| 2.0 * a / self.n as f64).collect();
        let w = h[0] * h[1] * h[2];
        let coord = |axis: usize, i: usize| {
            self.center[axis] - self.half[axis] + (i as f64 + 0.5) * h[axis]
        };
        for k in 0..self.n {
            let z = coord(2, k);
            for j in 0..self.n {
                let y = coord(1, j);
                for i in 0..self.n {
                    f(Vec3::new(coord(0, i), y, z), w);
                }
            }
        }
    }
}

/// Sorted eigen-decomposition of a symmetric positive definite 3x3 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalAxes {
    /// Ascending.
    pub eigenvalues: [f64; 3],
    /// Columns form a right-handed orthonormal frame.
    pub eigenvectors: Mat3,
    /// `degenerate[0]`: lambda1 ~ lambda2, `[1]`: lambda2 ~ lambda3, `[2]`: lambda1 ~ lambda3.
    pub degenerate: [bool; 3],
}

impl PrincipalAxes {
    pub fn axis(&self, j: usize) -> Vec3 {
        self.eigenvectors.column(j).into_owned()
    }

    pub fn is_spherical(&self) -> bool {
        self.degenerate.iter().all(|&d| d)
    }

    /// Groups axis indices into eigenspaces of (numerically) equal eigenvalues.
    pub fn eigenspaces(&self) -> Vec<Vec<usize>> {
        match self.degenerate {
            [true, true, _] | [_, _, true] => vec![vec![0, 1, 2]],
            [true, false, _] => vec![vec![0, 1], vec![2]],
            [false, true, _] => vec![vec![0], vec![1, 2]],
            [false, false, false] => vec![vec![0], vec![1], vec![2]],
        }
    }

    /// Expresses a body-frame vector in principal coordinates.
    pub fn to_principal(&self, v: &Vec3) -> Vec3 {
        self.eigenvectors.transpose() * v
    }

    /// Applies the tensor reconstructed from its decomposition.
    pub fn apply(&self, v: &Vec3) -> Vec3 {
        let c = self.to_principal(v);
        self.eigenvectors
            * Vec3::new(
                c[0] * self.eigenvalues[0],
                c[1] * self.eigenvalues[1],
                c[2] * self.eigenvalues[2],
            )
    }

    /// Applies the inverse tensor.
    pub fn solve(&self, v: &Vec3) -> Vec3 {
        let c = self.to_principal(v);
        self.eigenvectors
            * Vec3::new(
                c[0] / self.eigenvalues[0],
                c[1] / self.eigenvalues[1],
                c[2] / self.eigenvalues[2],
            )
    }
}

/// Cyclic Jacobi eigen-decomposition, sorted ascending.
pub fn principal_axes(tensor: &Mat3) -> Result<PrincipalAxes> {
    let scale = tensor.abs().max();
    let asymmetry = (tensor - tensor.transpose()).abs().max();
    if !scale.is_finite() || asymmetry > 1e-12 * scale {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let (values, vectors) = jacobi_eigen(tensor);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let eigenvalues = [values[order[0]], values[order[1]], values[order[2]]];
    if eigenvalues[0] <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            smallest: eigenvalues[0],
        });
    }

    let mut cols = [Vec3::zeros(); 3];
    for (slot, &idx) in cols.iter_mut().zip(order.iter()).take(2) {
        let mut v = vectors.column(idx).into_owned();
        // Sign convention: largest-magnitude component positive.
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v = -v;
        }
        *slot = v;
    }
    let third = cols[0].cross(&cols[1]);
    cols[2] = third / third.norm();
    let eigenvectors = Mat3::from_columns(&cols);

    let tol = DEGENERACY_TOL * eigenvalues[2];
    let degenerate = [
        (eigenvalues[1] - eigenvalues[0]).abs() <= tol,
        (eigenvalues[2] - eigenvalues[1]).abs() <= tol,
        (eigenvalues[2] - eigenvalues[0]).abs() <= tol,
    ];
    Ok(PrincipalAxes {
        eigenvalues,
        eigenvectors,
        degenerate,
    })
}

fn jacobi_eigen(tensor: &Mat3) -> ([f64; 3], Mat3) {
    let mut a = *tensor;
    // Exact symmetrization; the input is symmetric to within 1e-12 anyway.
    a = (a + a.transpose()) * 0.5;
    let mut v = Mat3::identity();
    for _sweep in 0..64 {
        let off = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        if off == 0.0 {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut rot = Mat3::identity();
            rot[(p, p)] = c;
            rot[(q, q)] = c;
            rot[(p, q)] = s;
            rot[(q, p)] = -s;
            a = rot.transpose() * a * rot;
            a[(p, q)] = 0.0;
            a[(q, p)] = 0.0;
            v *= rot;
        }
    }
    ([a[(0, 0)], a[(1, 1)], a[(2, 2)]], v)
}
