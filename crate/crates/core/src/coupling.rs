//! Rigid-side state and the coupled time step.
//!
//! The total angular momentum `A` is the rigid unknown. It is advanced by an
//! exact rotation, so `|A|` is conserved to rounding, and the angular velocity
//! is always reconstructed as `Omega = I^-1 (A - integral of y x u)`. The
//! dependence of the fluid step on `Omega'` is closed by Picard iteration.

use nalgebra::Rotation3;

use crate::error::{Error, Result};
use crate::fluid::{AffineStep, FluidState, FluidStepper};
use crate::geometry::{InertiaData, PrincipalAxes};
use crate::{Mat3, Vec3};

/// Steps between re-orthonormalizations of the orientation.
pub const REORTHONORMALIZE_EVERY: u64 = 100;
pub const DEFAULT_MAX_PICARD: usize = 50;
/// Picard stops when `|Omega_new - Omega_old| <= PICARD_REL_TOL * max(|Omega_n|, 1)`.
pub const PICARD_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct RigidState {
    /// Body-frame total angular momentum.
    pub a: Vec3,
    /// Body-frame total linear momentum.
    pub l: Vec3,
    /// Body-to-inertial orientation.
    pub q: Mat3,
}

/// The three angular velocities: `omega = omega_bar + omega_tilde`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaParts {
    pub omega_bar: Vec3,
    pub omega_tilde: Vec3,
    pub omega: Vec3,
}

/// `omega_bar = I^-1 A`, `omega_tilde = -I^-1 m_f`, `omega = I^-1 (A - m_f)`.
pub fn omega_from_state(a: &Vec3, m_f: &Vec3, axes: &PrincipalAxes) -> OmegaParts {
    let omega_bar = axes.solve(a);
    let omega_tilde = -axes.solve(m_f);
    OmegaParts {
        omega_bar,
        omega_tilde,
        omega: axes.solve(&(a - m_f)),
    }
}

/// Rotation by angle `|theta|` about `theta / |theta|`.
pub fn rotation(theta: &Vec3) -> Mat3 {
    Rotation3::new(*theta).into_inner()
}

/// `c^2 + s^2 - 1` to nearly full precision, via error-free products and sum.
fn unit_circle_defect(c: f64, s: f64) -> f64 {
    let (c2, s2) = (c * c, s * s);
    let (c2_lo, s2_lo) = (c.mul_add(c, -c2), s.mul_add(s, -s2));
    let sum = c2 + s2;
    let b = sum - c2;
    let sum_lo = (c2 - (sum - b)) + (s2 - b);
    (sum - 1.0) + (sum_lo + c2_lo + s2_lo)
}

/// Rotation of `v` by `theta` via Rodrigues' formula.
///
/// The rounded `cos`/`sin` pair scales the perpendicular part by
/// `sqrt(c^2 + s^2) != 1`; when the same angle repeats over many steps that
/// gain compounds, so it is cancelled as far as one rounding allows.
pub fn rotate_vector(theta: &Vec3, v: &Vec3) -> Vec3 {
    let angle = theta.norm();
    if angle == 0.0 {
        return *v;
    }
    let k = theta / angle;
    let (s, c) = angle.sin_cos();
    let along = k * k.dot(v);
    let perp = v - along;
    let w = perp * c + k.cross(&perp) * s;
    w - w * (0.5 * unit_circle_defect(c, s)) + along
}

/// Exact solution of `A' = -omega x A` over `dt` for constant `omega`.
pub fn advance_angular_momentum(a: &Vec3, omega_mid: &Vec3, dt: f64) -> Vec3 {
    rotate_vector(&(-omega_mid * dt), a)
}

/// Same update for the linear momentum `L' = -omega x L`.
pub fn advance_linear_momentum(l: &Vec3, omega_mid: &Vec3, dt: f64) -> Vec3 {
    rotate_vector(&(-omega_mid * dt), l)
}

/// `Q' = Q [omega]_x` for constant `omega` over `dt`.
pub fn advance_orientation(q: &Mat3, omega_mid: &Vec3, dt: f64) -> Mat3 {
    q * rotation(&(omega_mid * dt))
}

/// Gram-Schmidt on the columns, keeping the first column's direction.
pub fn reorthonormalize(q: &Mat3) -> Mat3 {
    let c0 = q.column(0).normalize();
    let c1 = q.column(1) - c0 * c0.dot(&q.column(1));
    let c1 = c1.normalize();
    let c2 = c0.cross(&c1);
    Mat3::from_columns(&[c0, c1, c2])
}

pub fn orthogonality_error(q: &Mat3) -> f64 {
    (q.transpose() * q - Mat3::identity()).abs().max()
}

/// Translational velocity of the body origin recovered from `L`.
pub fn translational_velocity(l: &Vec3, omega: &Vec3, inertia: &InertiaData) -> Vec3 {
    (l - inertia.m_f * omega.cross(&inertia.y_f)) / inertia.m
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    pub time: f64,
    pub step: u64,
    pub fluid: FluidState,
    pub rigid: RigidState,
    pub omega_bar: Vec3,
    pub omega_tilde: Vec3,
    pub omega: Vec3,
    /// `integral of y x u` for the current fluid state.
    pub m_f: Vec3,
    /// Angular velocity one step earlier; seeds the Picard guess.
    pub omega_prev: Option<Vec3>,
}

impl CoupledState {
    /// Max deviation of the cached angular velocities from a fresh reconstruction.
    pub fn cache_inconsistency(&self, axes: &PrincipalAxes) -> f64 {
        let m_f = self.fluid.angular_momentum();
        let fresh = omega_from_state(&self.rigid.a, &m_f, axes);
        [
            (m_f - self.m_f).norm(),
            (fresh.omega_bar - self.omega_bar).norm(),
            (fresh.omega_tilde - self.omega_tilde).norm(),
            (fresh.omega - self.omega).norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub picard_iterations: usize,
    pub picard_residual: f64,
    /// Residual after each Picard iteration.
    pub picard_history: Vec<f64>,
    pub dt_used: f64,
    pub kinetic_energy: f64,
    pub dissipation_rate: f64,
}

/// Whether the fluid participates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluidMode {
    Active,
    /// Fluid stubbed off: `u = 0`, `m_f = 0`, rigid Euler equations only.
    DryRun,
}

/// Body with a fluid-filled cavity: mass properties plus the fluid stepper.
#[derive(Debug, Clone)]
pub struct CoupledSystem {
    pub inertia: InertiaData,
    pub axes: PrincipalAxes,
    pub fluid: FluidStepper,
    pub mode: FluidMode,
    pub max_picard: usize,
    pub picard_rel_tol: f64,
}

impl CoupledSystem {
    pub fn new(inertia: InertiaData, axes: PrincipalAxes, fluid: FluidStepper) -> Self {
        Self {
            inertia,
            axes,
            fluid,
            mode: FluidMode::Active,
            max_picard: DEFAULT_MAX_PICARD,
            picard_rel_tol: PICARD_REL_TOL,
        }
    }

    /// Assembles a consistent state from the fluid field and momenta.
    pub fn initial_state(&self, fluid: FluidState, a0: Vec3, l0: Vec3) -> CoupledState {
        let fluid = match self.mode {
            FluidMode::Active => fluid,
            FluidMode::DryRun => {
                let grid = fluid.grid.clone();
                FluidState::new(grid.clone(), crate::fluid::VelocityField::zeros(&grid))
            }
        };
        let m_f = fluid.angular_momentum();
        let parts = omega_from_state(&a0, &m_f, &self.axes);
        CoupledState {
            time: 0.0,
            step: 0,
            fluid,
            rigid: RigidState {
                a: a0,
                l: l0,
                q: Mat3::identity(),
            },
            omega_bar: parts.omega_bar,
            omega_tilde: parts.omega_tilde,
            omega: parts.omega,
            m_f,
            omega_prev: None,
        }
    }

    pub fn picard_tolerance(&self, omega_n: &Vec3) -> f64 {
        self.picard_rel_tol * omega_n.norm().max(1.0)
    }

    /// One coupled step of size `dt`.
    pub fn step(&self, state: &CoupledState, dt: f64) -> Result<(CoupledState, StepReport)> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "dt must be positive, got {dt}"
            )));
        }
        let omega_n = state.omega;
        let affine: Option<AffineStep<'_>> = match self.mode {
            FluidMode::Active => Some(self.fluid.affine_step(&state.fluid, dt)?),
            FluidMode::DryRun => None,
        };
        let tol = self.picard_tolerance(&omega_n);

        let mut guess = match state.omega_prev {
            Some(prev) => omega_n * 2.0 - prev,
            None => omega_n,
        };
        let mut history = Vec::new();
        let mut converged = false;
        for _ in 0..self.max_picard {
            let mid = (omega_n + guess) * 0.5;
            let omega_dot = (guess - omega_n) / dt;
            let a_next = advance_angular_momentum(&state.rigid.a, &mid, dt);
            let m_next = affine
                .as_ref()
                .map_or(Vec3::zeros(), |s| s.angular_momentum(&mid, &omega_dot));
            let next = self.axes.solve(&(a_next - m_next));
            let residual = (next - guess).norm();
            if !residual.is_finite() {
                return Err(Error::NonFinite("angular velocity".into()));
            }
            history.push(residual);
            guess = next;
            if residual <= tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::PicardNotConverged {
                iterations: history.len(),
                residual: history.last().copied().unwrap_or(f64::NAN),
            });
        }

        let omega_mid = (omega_n + guess) * 0.5;
        let omega_dot = (guess - omega_n) / dt;
        let a = advance_angular_momentum(&state.rigid.a, &omega_mid, dt);
        let l = advance_linear_momentum(&state.rigid.l, &omega_mid, dt);
        let mut q = advance_orientation(&state.rigid.q, &omega_mid, dt);
        let step = state.step + 1;
        if step.is_multiple_of(REORTHONORMALIZE_EVERY) {
            q = reorthonormalize(&q);
        }

        let (fluid, kinetic_energy, dissipation_rate) = match &affine {
            Some(s) => {
                let out = s.assemble(&omega_mid, &omega_dot)?;
                (out.state, out.kinetic_energy, out.dissipation_rate)
            }
            None => (state.fluid.clone(), 0.0, 0.0),
        };
        let m_f = match self.mode {
            FluidMode::Active => fluid.angular_momentum(),
            FluidMode::DryRun => Vec3::zeros(),
        };
        let parts = omega_from_state(&a, &m_f, &self.axes);
        let next = CoupledState {
            time: state.time + dt,
            step,
            fluid,
            rigid: RigidState { a, l, q },
            omega_bar: parts.omega_bar,
            omega_tilde: parts.omega_tilde,
            omega: parts.omega,
            m_f,
            omega_prev: Some(omega_n),
        };
        let report = StepReport {
            picard_iterations: history.len(),
            picard_residual: history.last().copied().unwrap_or(0.0),
            picard_history: history,
            dt_used: dt,
            kinetic_energy,
            dissipation_rate,
        };
        Ok((next, report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid::{FluidParams, MacGrid, VelocityField};
    use crate::geometry::{compute_mass_properties, principal_axes, GeometrySpec};
    use proptest::prelude::*;

    fn diag_axes(d: [f64; 3]) -> PrincipalAxes {
        principal_axes(&Mat3::from_diagonal(&Vec3::from(d))).unwrap()
    }

    #[test]
    fn omega_parts_for_diagonal_inertia() {
        let axes = diag_axes([1.0, 2.0, 3.0]);
        let p = omega_from_state(&Vec3::new(0.0, 0.0, 3.0), &Vec3::new(0.0, 0.0, 1.0), &axes);
        assert!((p.omega_bar - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
        assert!((p.omega_tilde - Vec3::new(0.0, 0.0, -1.0 / 3.0)).norm() < 1e-15);
        assert!((p.omega - Vec3::new(0.0, 0.0, 2.0 / 3.0)).norm() < 1e-15);

        let p = omega_from_state(&Vec3::new(1.0, 2.0, 3.0), &Vec3::zeros(), &axes);
        assert_eq!(p.omega_tilde, Vec3::zeros());
        assert_eq!(p.omega, p.omega_bar);
    }

    #[test]
    fn rotation_update_closed_forms() {
        let w = 1.3;
        let dt = 0.37;
        let a = advance_angular_momentum(&Vec3::x(), &Vec3::new(0.0, 0.0, w), dt);
        let expected = Vec3::new((w * dt).cos(), -(w * dt).sin(), 0.0);
        assert!((a - expected).norm() < 1e-15);

        let a0 = Vec3::new(0.2, -0.4, 1.0);
        let along = advance_angular_momentum(&a0, &(a0 * 2.0), 0.1);
        assert!((along - a0).norm() < 1e-15);
        assert_eq!(
            advance_linear_momentum(&Vec3::zeros(), &a0, 0.1),
            Vec3::zeros()
        );

        let q = advance_orientation(&Mat3::identity(), &Vec3::zeros(), 0.5);
        assert_eq!(q, Mat3::identity());
        let q = advance_orientation(&Mat3::identity(), &Vec3::new(0.0, 0.0, w), dt);
        let rz = Mat3::new(
            (w * dt).cos(),
            -(w * dt).sin(),
            0.0,
            (w * dt).sin(),
            (w * dt).cos(),
            0.0,
            0.0,
            0.0,
            1.0,
        );
        assert!((q - rz).abs().max() < 1e-15);
    }

    #[test]
    fn translational_velocity_inverts_linear_momentum() {
        let spec = GeometrySpec {
            outer_half_extents: [1.0, 0.8, 0.7],
            cavity_half_extents: [0.4, 0.3, 0.3],
            cavity_offset: [0.2, 0.1, 0.0],
            rho_b: 1.5,
            nu: 0.5,
        };
        let inertia = compute_mass_properties(&spec).unwrap();
        let omega = Vec3::new(0.3, 0.2, -1.0);
        let xi = Vec3::new(0.1, -0.5, 0.2);
        let l = xi * inertia.m + inertia.m_f * omega.cross(&inertia.y_f);
        assert!((translational_velocity(&l, &omega, &inertia) - xi).norm() < 1e-15);
        // L = 0: xi is set by the cavity offset alone.
        let xi0 = translational_velocity(&Vec3::zeros(), &omega, &inertia);
        assert!((xi0 + inertia.m_f * omega.cross(&inertia.y_f) / inertia.m).norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn omega_tilde_balances_fluid_momentum(
            a in prop::array::uniform3(-5.0f64..5.0),
            m in prop::array::uniform3(-5.0f64..5.0),
            d in prop::array::uniform3(0.5f64..4.0),
            angles in prop::array::uniform3(-3.0f64..3.0),
        ) {
            let r = Rotation3::from_euler_angles(angles[0], angles[1], angles[2]).into_inner();
            let i = r * Mat3::from_diagonal(&Vec3::from(d)) * r.transpose();
            let i = (i + i.transpose()) * 0.5;
            let axes = principal_axes(&i).unwrap();
            let m_f = Vec3::from(m);
            let p = omega_from_state(&Vec3::from(a), &m_f, &axes);
            let scale = 1.0 + m_f.norm();
            prop_assert!((i * p.omega_tilde + m_f).norm() <= 1e-13 * scale * 4.0);
            prop_assert!((p.omega - p.omega_bar - p.omega_tilde).norm() <= 1e-13 * scale);
        }

        #[test]
        fn vector_rotation_matches_matrix(
            theta in prop::array::uniform3(-2.0f64..2.0),
            v in prop::array::uniform3(-3.0f64..3.0),
        ) {
            let (theta, v) = (Vec3::from(theta), Vec3::from(v));
            let direct = rotate_vector(&theta, &v);
            prop_assert!((direct - rotation(&theta) * v).norm() <= 1e-14 * (1.0 + v.norm()));
        }

        #[test]
        fn rotation_steps_conserve_modulus(seed in 0u64..1000) {
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let mut next = move || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            };
            let mut a = Vec3::new(next(), next(), next());
            let mut l = Vec3::new(next(), next(), next());
            let (a0, l0) = (a.norm(), l.norm());
            for _ in 0..2_000 {
                let w = Vec3::new(next(), next(), next()) * 10.0;
                a = advance_angular_momentum(&a, &w, 1e-2);
                l = advance_linear_momentum(&l, &w, 1e-2);
            }
            prop_assert!((a.norm() / a0 - 1.0).abs() <= 1e-12);
            prop_assert!((l.norm() / l0 - 1.0).abs() <= 1e-12);
        }
    }

    fn small_system(mode: FluidMode) -> CoupledSystem {
        let spec = GeometrySpec {
            outer_half_extents: [1.0, 1.0, 0.6],
            cavity_half_extents: [0.5, 0.5, 0.3],
            cavity_offset: [0.0; 3],
            rho_b: 1.0,
            nu: 0.5,
        };
        let inertia = compute_mass_properties(&spec).unwrap();
        let axes = principal_axes(&inertia.i_total).unwrap();
        let grid = MacGrid::for_cavity(&spec, [8, 8, 8]).unwrap();
        let fluid = FluidStepper::new(&grid, FluidParams::new(spec.nu, 0.5).unwrap()).unwrap();
        let mut sys = CoupledSystem::new(inertia, axes, fluid);
        sys.mode = mode;
        sys
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let sys = small_system(FluidMode::Active);
        let grid = sys.fluid.grid().clone();
        let e3 = sys.axes.axis(2);
        let a0 = e3 * (sys.axes.eigenvalues[2] * 1.5);
        let mut state = sys.initial_state(
            FluidState::new(grid.clone(), VelocityField::zeros(&grid)),
            a0,
            Vec3::zeros(),
        );
        let dt = sys.fluid.stable_step(&state.fluid.velocity).limit;
        for _ in 0..20 {
            let (next, report) = sys.step(&state, dt).unwrap();
            assert!(report.picard_iterations <= 2);
            assert!((next.rigid.a - state.rigid.a).norm() < 1e-12);
            assert!((next.omega - state.omega).norm() < 1e-12);
            assert!(next.fluid.velocity.max_abs() < 1e-12);
            state = next;
        }
    }

    #[test]
    fn cached_omega_stays_consistent() {
        let sys = small_system(FluidMode::Active);
        let grid = sys.fluid.grid().clone();
        let u = crate::fluid::initialize_velocity(
            &grid,
            sys.fluid.solver(),
            &crate::fluid::InitSpec::RandomSolenoidal {
                seed: 2,
                amplitude: 0.5,
            },
        )
        .unwrap();
        let mut state = sys.initial_state(
            FluidState::new(grid.clone(), u),
            Vec3::new(0.3, 0.1, 1.0),
            Vec3::new(0.0, 0.2, 0.0),
        );
        let a0 = state.rigid.a.norm();
        let dt = 0.5 * sys.fluid.stable_step(&state.fluid.velocity).limit;
        for _ in 0..30 {
            let (next, report) = sys.step(&state, dt).unwrap();
            assert!(next.cache_inconsistency(&sys.axes) <= 1e-13);
            assert!(report.picard_history.windows(2).all(|w| w[1] <= w[0]));
            state = next;
        }
        assert!((state.rigid.a.norm() / a0 - 1.0).abs() < 1e-13);
        assert!(orthogonality_error(&state.rigid.q) < 1e-12);
    }

    #[test]
    fn dry_run_conserves_rigid_energy() {
        let sys = small_system(FluidMode::DryRun);
        let grid = sys.fluid.grid().clone();
        let mut state = sys.initial_state(
            FluidState::new(grid.clone(), VelocityField::zeros(&grid)),
            Vec3::new(0.4, 0.3, 0.8),
            Vec3::zeros(),
        );
        let energy = |s: &CoupledState| s.omega.dot(&(sys.inertia.i_total * s.omega));
        let e0 = energy(&state);
        for _ in 0..1000 {
            state = sys.step(&state, 1e-3).unwrap().0;
        }
        assert!((energy(&state) / e0 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn repeated_rotation_keeps_modulus() {
        // The same angle every step is the worst case: any rounding bias adds
        // up coherently, so the bound is a fraction of an ulp per step.
        let w = Vec3::new(0.0, 0.0, 61.4);
        let mut l = Vec3::new(0.3, -0.2, 0.1);
        let l0 = l.norm();
        for _ in 0..100_000 {
            l = advance_linear_momentum(&l, &w, 2.0833e-3);
        }
        assert!((l.norm() / l0 - 1.0).abs() <= 1e-16 * 100_000.0);
    }

    #[test]
    fn dry_run_converges_at_least_first_order() {
        let sys = small_system(FluidMode::DryRun);
        let grid = sys.fluid.grid().clone();
        let initial = sys.initial_state(
            FluidState::new(grid.clone(), VelocityField::zeros(&grid)),
            Vec3::new(0.5, 0.9, 0.6),
            Vec3::zeros(),
        );
        let t_end = 2.0;
        let exact = crate::verify::rigid_body_rk4(
            &sys.inertia.i_total,
            initial.omega,
            1e-4,
            (t_end / 1e-4) as usize,
        );
        let error = |dt: f64| {
            let mut state = initial.clone();
            for _ in 0..(t_end / dt).round() as usize {
                state = sys.step(&state, dt).unwrap().0;
            }
            (state.omega - exact).norm()
        };
        let (coarse, fine) = (error(0.04), error(0.02));
        let order = (coarse / fine).log2();
        assert!(order >= 0.9, "order {order}, errors {coarse:e} {fine:e}");
    }

    #[test]
    fn reorthonormalize_restores_rotation() {
        let mut q = rotation(&Vec3::new(0.3, -0.2, 0.9));
        q[(0, 1)] += 1e-7;
        assert!(orthogonality_error(&q) > 1e-8);
        let fixed = reorthonormalize(&q);
        assert!(orthogonality_error(&fixed) < 1e-15);
        assert!((fixed.determinant() - 1.0).abs() < 1e-15);
    }
}
