use crate::error::{Error, Result};
use crate::geometry::GeometrySpec;
use crate::Vec3;

/// Uniform staggered grid covering the cavity.
#[derive(Debug, Clone, PartialEq)]
pub struct MacGrid {
    pub n: [usize; 3],
    pub h: [f64; 3],
    /// Low corner of the cavity in body-frame coordinates.
    pub corner: Vec3,
}

impl MacGrid {
    pub fn new(n: [usize; 3], h: [f64; 3], corner: Vec3) -> Result<Self> {
        if n.iter().any(|&ni| ni < 4) {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 4 cells per axis, got {n:?}"
            )));
        }
        if h.iter().any(|&hi| !(hi > 0.0 && hi.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "grid spacing must be positive, got {h:?}"
            )));
        }
        Ok(Self { n, h, corner })
    }

    /// Grid over the cavity of `spec` in the body frame.
    pub fn for_cavity(spec: &GeometrySpec, n: [usize; 3]) -> Result<Self> {
        spec.validate()?;
        let half = spec.cavity_half_extents;
        let h = [
            2.0 * half[0] / n[0] as f64,
            2.0 * half[1] / n[1] as f64,
            2.0 * half[2] / n[2] as f64,
        ];
        let corner = spec.cavity_center() - Vec3::from(half);
        Self::new(n, h, corner)
    }

    pub fn cell_volume(&self) -> f64 {
        self.h[0] * self.h[1] * self.h[2]
    }

    pub fn num_cells(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn domain_volume(&self) -> f64 {
        self.cell_volume() * self.num_cells() as f64
    }

    pub fn domain_diameter(&self) -> f64 {
        Vec3::new(
            self.h[0] * self.n[0] as f64,
            self.h[1] * self.n[1] as f64,
            self.h[2] * self.n[2] as f64,
        )
        .norm()
    }

    pub fn min_spacing(&self) -> f64 {
        self.h.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Storage dimensions of the faces normal to `axis`.
    pub fn face_dims(&self, axis: usize) -> [usize; 3] {
        let mut d = self.n;
        d[axis] += 1;
        d
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.corner
            + Vec3::new(
                (i as f64 + 0.5) * self.h[0],
                (j as f64 + 0.5) * self.h[1],
                (k as f64 + 0.5) * self.h[2],
            )
    }

    /// Body-frame position of face `idx` normal to `axis`.
    pub fn face_position(&self, axis: usize, idx: [usize; 3]) -> Vec3 {
        let mut p = Vec3::zeros();
        for d in 0..3 {
            let offset = if d == axis { 0.0 } else { 0.5 };
            p[d] = self.corner[d] + (idx[d] as f64 + offset) * self.h[d];
        }
        p
    }
}

/// Values on a box of lattice points, x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Array3 {
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

impl Array3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims[0] * dims[1] * dims[2]],
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.index(i, j, k)]
    }

    #[inline]
    pub fn at(&self, idx: [usize; 3]) -> f64 {
        self.get(idx[0], idx[1], idx[2])
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let n = self.index(i, j, k);
        self.data[n] = v;
    }

    /// Stride of a unit step along `axis`.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[0] * self.dims[1],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn axpy(&mut self, alpha: f64, x: &Self) {
        for (y, x) in self.data.iter_mut().zip(&x.data) {
            *y += alpha * x;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.data {
            *v *= alpha;
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Cell-centered scalar, used for the relative pressure.
pub type ScalarField = Array3;

/// Face-centered velocity: component `a` lives on faces normal to axis `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub comps: [Array3; 3],
}

impl VelocityField {
    pub fn zeros(grid: &MacGrid) -> Self {
        Self {
            comps: [
                Array3::zeros(grid.face_dims(0)),
                Array3::zeros(grid.face_dims(1)),
                Array3::zeros(grid.face_dims(2)),
            ],
        }
    }

    /// Samples `f(position)[a]` on every face of component `a`.
    pub fn from_fn(grid: &MacGrid, f: impl Fn(Vec3) -> Vec3) -> Self {
        let mut u = Self::zeros(grid);
        for (a, comp) in u.comps.iter_mut().enumerate() {
            let d = comp.dims;
            for k in 0..d[2] {
                for j in 0..d[1] {
                    for i in 0..d[0] {
                        let v = f(grid.face_position(a, [i, j, k]))[a];
                        comp.set(i, j, k, v);
                    }
                }
            }
        }
        u
    }

    /// Sets the wall-normal values on the cavity boundary to exactly zero.
    pub fn zero_boundary(&mut self) {
        for (a, comp) in self.comps.iter_mut().enumerate() {
            let d = comp.dims;
            for k in 0..d[2] {
                for j in 0..d[1] {
                    for i in 0..d[0] {
                        let f = [i, j, k][a];
                        if f == 0 || f == d[a] - 1 {
                            comp.set(i, j, k, 0.0);
                        }
                    }
                }
            }
        }
    }

    pub fn boundary_is_zero(&self) -> bool {
        self.comps.iter().enumerate().all(|(a, comp)| {
            let d = comp.dims;
            let mut ok = true;
            for k in 0..d[2] {
                for j in 0..d[1] {
                    for i in 0..d[0] {
                        let f = [i, j, k][a];
                        if (f == 0 || f == d[a] - 1) && comp.get(i, j, k).to_bits() != 0 {
                            ok = false;
                        }
                    }
                }
            }
            ok
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().map(Array3::max_abs).fold(0.0, f64::max)
    }

    pub fn max_abs_per_axis(&self) -> [f64; 3] {
        [
            self.comps[0].max_abs(),
            self.comps[1].max_abs(),
            self.comps[2].max_abs(),
        ]
    }

    pub fn axpy(&mut self, alpha: f64, x: &Self) {
        for (y, x) in self.comps.iter_mut().zip(&x.comps) {
            y.axpy(alpha, x);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for c in &mut self.comps {
            c.scale(alpha);
        }
    }

    /// Face-weighted inner product (each face carries one cell volume).
    pub fn dot(&self, other: &Self) -> f64 {
        self.comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.dot(b))
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.comps.iter().all(Array3::all_finite)
    }

    /// Cell-center velocity of cell `(i, j, k)` by averaging opposite faces.
    #[inline]
    pub fn cell_velocity(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(
            0.5 * (self.comps[0].get(i, j, k) + self.comps[0].get(i + 1, j, k)),
            0.5 * (self.comps[1].get(i, j, k) + self.comps[1].get(i, j + 1, k)),
            0.5 * (self.comps[2].get(i, j, k) + self.comps[2].get(i, j, k + 1)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> MacGrid {
        MacGrid::new([4, 5, 6], [0.25, 0.2, 0.1], Vec3::new(-0.5, -0.5, -0.3)).unwrap()
    }

    #[test]
    fn rejects_tiny_grids() {
        assert!(MacGrid::new([3, 4, 4], [0.1; 3], Vec3::zeros()).is_err());
        assert!(MacGrid::new([4, 4, 4], [0.1, 0.0, 0.1], Vec3::zeros()).is_err());
    }

    #[test]
    fn cavity_grid_spans_cavity() {
        let spec = GeometrySpec {
            outer_half_extents: [1.0, 1.0, 1.0],
            cavity_half_extents: [0.5, 0.25, 0.4],
            cavity_offset: [0.1, 0.0, -0.2],
            rho_b: 1.0,
            nu: 0.5,
        };
        let g = MacGrid::for_cavity(&spec, [8, 8, 8]).unwrap();
        for a in 0..3 {
            assert!((g.h[a] * g.n[a] as f64 - 2.0 * spec.cavity_half_extents[a]).abs() < 1e-15);
        }
        let center = g.corner + Vec3::new(0.5, 0.25, 0.4);
        assert!((center - spec.cavity_center()).norm() < 1e-15);
    }

    #[test]
    fn cell_and_face_coordinates() {
        let g = grid();
        let c = g.cell_center(1, 2, 3);
        assert!((c - Vec3::new(-0.5 + 0.375, -0.5 + 0.5, -0.3 + 0.35)).norm() < 1e-15);
        let f = g.face_position(1, [1, 0, 3]);
        assert!((f - Vec3::new(-0.5 + 0.375, -0.5, -0.3 + 0.35)).norm() < 1e-15);
        assert_eq!(g.face_dims(2), [4, 5, 7]);
    }

    #[test]
    fn boundary_zeroing() {
        let g = grid();
        let mut u = VelocityField::from_fn(&g, |_| Vec3::new(1.0, 2.0, 3.0));
        assert!(!u.boundary_is_zero());
        u.zero_boundary();
        assert!(u.boundary_is_zero());
        assert_eq!(u.comps[0].get(1, 0, 0), 1.0);
        assert_eq!(u.comps[0].get(4, 0, 0), 0.0);
    }
}
