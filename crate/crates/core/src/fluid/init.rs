//! Initial relative velocity fields.
//!
//! Both non-trivial fields are discrete curls of an edge-centered vector
//! potential, so they start exactly divergence-free; they are still passed
//! through the projector after the walls are zeroed.
//!
//! The random field is pinned for cross-language replication:
//! `ChaCha8Rng::seed_from_u64(seed)`, uniform samples
//! `2 * (next_u64() >> 11) * 2^-53 - 1`, drawn for potential component
//! `c = 0..3`, then mode `k3 = 1..=2`, `k2 = 1..=2`, `k1 = 1..=2`. In cavity
//! coordinates `s` in `[0,1]^3` the potential is
//! `psi_c(s) = prod_d sin(pi s_d) * sum_k a_{c,k} / |k|^2 * prod_d sin(pi k_d s_d)`.
//! After projection the field is scaled so its largest face value equals the amplitude.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::{MacGrid, VelocityField};
use super::poisson::PressureSolver;
use crate::error::{Error, Result};
use crate::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    Zero,
    RandomSolenoidal {
        seed: u64,
        amplitude: f64,
    },
    /// Swirl about `axis` through the cavity center, vanishing smoothly at the walls.
    Vortex {
        axis: [f64; 3],
        amplitude: f64,
    },
}

impl InitSpec {
    pub fn amplitude(&self) -> Option<f64> {
        match self {
            InitSpec::Zero => None,
            InitSpec::RandomSolenoidal { amplitude, .. } | InitSpec::Vortex { amplitude, .. } => {
                Some(*amplitude)
            }
        }
    }

    pub fn with_amplitude(&self, value: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            InitSpec::Zero => {}
            InitSpec::RandomSolenoidal { amplitude, .. } | InitSpec::Vortex { amplitude, .. } => {
                *amplitude = value
            }
        }
        out
    }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    2.0 * ((rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)) - 1.0
}

/// Discrete curl of a potential sampled on cell edges.
///
/// Component `c` of the potential lives on edges parallel to axis `c`: node
/// positions along the other two axes, cell centers along `c`.
fn curl_of_potential(grid: &MacGrid, psi: impl Fn(usize, Vec3) -> f64) -> VelocityField {
    let size = Vec3::new(
        grid.h[0] * grid.n[0] as f64,
        grid.h[1] * grid.n[1] as f64,
        grid.h[2] * grid.n[2] as f64,
    );
    // Normalized coordinate of a lattice point; `half[d]` adds half a cell.
    let coord = |idx: [usize; 3], half: [bool; 3]| {
        let mut s = Vec3::zeros();
        for d in 0..3 {
            let offset = if half[d] { 0.5 } else { 0.0 };
            s[d] = (idx[d] as f64 + offset) * grid.h[d] / size[d];
        }
        s
    };
    let edge_value = |c: usize, idx: [usize; 3]| {
        let mut half = [false; 3];
        half[c] = true;
        psi(c, coord(idx, half))
    };

    let mut u = VelocityField::zeros(grid);
    for (a, comp) in u.comps.iter_mut().enumerate() {
        let b = (a + 1) % 3;
        let c = (a + 2) % 3;
        let dims = comp.dims;
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let idx = [i, j, k];
                    // u_a = d_b psi_c - d_c psi_b
                    let mut hi_b = idx;
                    hi_b[b] += 1;
                    let mut hi_c = idx;
                    hi_c[c] += 1;
                    let v = (edge_value(c, hi_b) - edge_value(c, idx)) / grid.h[b]
                        - (edge_value(b, hi_c) - edge_value(b, idx)) / grid.h[c];
                    comp.set(i, j, k, v);
                }
            }
        }
    }
    u
}

fn random_potential(seed: u64) -> [[f64; 8]; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = [[0.0; 8]; 3];
    for comp in &mut coeffs {
        for slot in comp.iter_mut() {
            *slot = uniform(&mut rng);
        }
    }
    coeffs
}

/// Builds the initial relative velocity and returns the realized (projected) field.
pub fn initialize_velocity(
    grid: &MacGrid,
    solver: &PressureSolver,
    init: &InitSpec,
) -> Result<VelocityField> {
    use std::f64::consts::PI;
    let raw = match init {
        InitSpec::Zero => return Ok(VelocityField::zeros(grid)),
        InitSpec::RandomSolenoidal { seed, amplitude } => {
            check_amplitude(*amplitude)?;
            let coeffs = random_potential(*seed);
            curl_of_potential(grid, |c, s| {
                let bubble: f64 = (0..3).map(|d| (PI * s[d]).sin()).product();
                let mut sum = 0.0;
                let mut slot = 0;
                for k3 in 1..=2 {
                    for k2 in 1..=2 {
                        for k1 in 1..=2 {
                            let k = [k1 as f64, k2 as f64, k3 as f64];
                            let weight = 1.0 / (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]);
                            let mode: f64 = (0..3).map(|d| (PI * k[d] * s[d]).sin()).product();
                            sum += coeffs[c][slot] * weight * mode;
                            slot += 1;
                        }
                    }
                }
                bubble * sum
            })
        }
        InitSpec::Vortex { axis, amplitude } => {
            check_amplitude(*amplitude)?;
            let axis = Vec3::from(*axis);
            let norm = axis.norm();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::InvalidInput(
                    "vortex axis must be a nonzero vector".into(),
                ));
            }
            let axis = axis / norm;
            curl_of_potential(grid, |c, s| {
                let bubble: f64 = (0..3).map(|d| (PI * s[d]).sin().powi(2)).product();
                axis[c] * bubble
            })
        }
    };
    let mut raw = raw;
    raw.zero_boundary();
    let (mut u, _) = solver.project(&raw)?;
    u.zero_boundary();
    let peak = u.max_abs();
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::InvalidInput(
            "initial velocity vanished on this grid".into(),
        ));
    }
    u.scale(init.amplitude().unwrap_or(1.0) / peak);
    Ok(u)
}

fn check_amplitude(amplitude: f64) -> Result<()> {
    if amplitude > 0.0 && amplitude.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "initial velocity amplitude must be positive, got {amplitude}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid::functionals::{angular_momentum, kinetic_energy, mean_velocity};
    use crate::fluid::ops::divergence;
    use crate::fluid::poisson::divergence_tolerance;

    fn grid() -> MacGrid {
        MacGrid::new([8, 8, 8], [0.125; 3], Vec3::new(-0.5, -0.5, -0.5)).unwrap()
    }

    #[test]
    fn zero_init_is_zero() {
        let g = grid();
        let s = PressureSolver::new(&g);
        let u = initialize_velocity(&g, &s, &InitSpec::Zero).unwrap();
        assert_eq!(u.max_abs(), 0.0);
    }

    #[test]
    fn random_field_is_solenoidal_and_nonzero() {
        let g = grid();
        let s = PressureSolver::new(&g);
        let init = InitSpec::RandomSolenoidal {
            seed: 1,
            amplitude: 0.3,
        };
        let u = initialize_velocity(&g, &s, &init).unwrap();
        assert!(u.boundary_is_zero());
        assert!(divergence(&g, &u).max_abs() <= divergence_tolerance(&g, &u));
        assert!(kinetic_energy(&g, &u) > 0.0);
        assert!((u.max_abs() - 0.3).abs() < 1e-15);
        let tol = 10.0 * divergence_tolerance(&g, &u) * g.domain_diameter();
        assert!(mean_velocity(&g, &u).norm() <= tol);
        // Same seed, same bits.
        assert_eq!(u, initialize_velocity(&g, &s, &init).unwrap());
    }

    #[test]
    fn vortex_spins_about_its_axis() {
        let g = grid();
        let s = PressureSolver::new(&g);
        let init = InitSpec::Vortex {
            axis: [0.0, 0.0, 1.0],
            amplitude: 1.0,
        };
        let u = initialize_velocity(&g, &s, &init).unwrap();
        let m = angular_momentum(&g, &u);
        assert!(m[2].abs() > 0.0);
        assert!(
            m[0].abs() < 1e-10 * m[2].abs() && m[1].abs() < 1e-10 * m[2].abs(),
            "{m:?}"
        );
    }

    #[test]
    fn rejects_non_positive_amplitude() {
        let g = grid();
        let s = PressureSolver::new(&g);
        let init = InitSpec::RandomSolenoidal {
            seed: 1,
            amplitude: 0.0,
        };
        assert!(initialize_velocity(&g, &s, &init).is_err());
        let init = InitSpec::Vortex {
            axis: [0.0, 0.0, 1.0],
            amplitude: -1.0,
        };
        assert!(initialize_velocity(&g, &s, &init).is_err());
    }
}
