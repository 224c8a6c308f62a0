use super::functionals::{
    angular_momentum, angular_momentum_weights, dissipation_rate, kinetic_energy,
};
use super::grid::{MacGrid, ScalarField, VelocityField};
use super::ops::{cross_basis, rotation_field, viscous_advective_rhs};
use super::poisson::PressureSolver;
use crate::error::{Error, Result};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidParams {
    pub nu: f64,
    /// Fraction of the stability limit a step may use, in (0, 1].
    pub dt_safety: f64,
    /// Evaluate the explicit operator over z-slabs in parallel.
    pub parallel: bool,
}

impl FluidParams {
    pub fn new(nu: f64, dt_safety: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "viscosity must be positive, got {nu}"
            )));
        }
        if !(dt_safety > 0.0 && dt_safety <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "dt_safety must lie in (0, 1], got {dt_safety}"
            )));
        }
        Ok(Self {
            nu,
            dt_safety,
            parallel: false,
        })
    }
}

/// Relative velocity and relative pressure on the cavity grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub grid: MacGrid,
    pub velocity: VelocityField,
    pub pressure: ScalarField,
}

impl FluidState {
    pub fn new(grid: MacGrid, velocity: VelocityField) -> Self {
        let pressure = ScalarField::zeros(grid.n);
        Self {
            grid,
            velocity,
            pressure,
        }
    }

    pub fn kinetic_energy(&self) -> f64 {
        kinetic_energy(&self.grid, &self.velocity)
    }

    pub fn angular_momentum(&self) -> Vec3 {
        angular_momentum(&self.grid, &self.velocity)
    }
}

#[derive(Debug, Clone)]
pub struct FluidStepOutput {
    pub state: FluidState,
    pub kinetic_energy: f64,
    pub dissipation_rate: f64,
}

/// The binding stability limit for the explicit update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableStep {
    pub limit: f64,
    pub constraint: &'static str,
}

/// Explicit-Euler projection stepper for the body-frame equations
/// `u' + omega' x y - nu lap u + grad p + 2 omega x u + (u . grad) u = 0`.
#[derive(Debug, Clone)]
pub struct FluidStepper {
    grid: MacGrid,
    params: FluidParams,
    solver: PressureSolver,
    /// Rigid rotation fields `e_k x y` with walls zeroed.
    rotation_fields: [VelocityField; 3],
    /// `P w_k` for the angular momentum weights `w_k`: since the projector is
    /// self-adjoint, `integral of y x P v = (P w_k, v)` for wall-free `v`.
    projected_weights: [VelocityField; 3],
    /// Angular momentum of `P(e_k x y)`, indexed `[k]`.
    rotation_momenta: [Vec3; 3],
}

impl FluidStepper {
    pub fn new(grid: &MacGrid, params: FluidParams) -> Result<Self> {
        let solver = PressureSolver::new(grid);
        let rotation_fields = [0, 1, 2].map(|k| rotation_field(grid, k));
        let mut weights = Vec::with_capacity(3);
        for mut w in angular_momentum_weights(grid) {
            w.zero_boundary();
            let (pw, _) = solver.project(&w)?;
            weights.push(pw);
        }
        let projected_weights: [VelocityField; 3] = weights.try_into().expect("three weights");
        let rotation_momenta =
            [0, 1, 2].map(|k| Vec3::from_fn(|m, _| projected_weights[m].dot(&rotation_fields[k])));
        Ok(Self {
            grid: grid.clone(),
            params,
            solver,
            rotation_fields,
            projected_weights,
            rotation_momenta,
        })
    }

    pub fn grid(&self) -> &MacGrid {
        &self.grid
    }

    pub fn params(&self) -> &FluidParams {
        &self.params
    }

    pub fn solver(&self) -> &PressureSolver {
        &self.solver
    }

    pub fn set_parallel(&mut self, parallel: bool) {
        self.params.parallel = parallel;
    }

    /// Largest admissible `dt` for `u`: `dt_safety * min_i(h_i^2 / (6 nu), h_i / max|u_i|)`.
    pub fn stable_step(&self, u: &VelocityField) -> StableStep {
        let s = self.params.dt_safety;
        let mut best = StableStep {
            limit: f64::INFINITY,
            constraint: "diffusive",
        };
        let umax = u.max_abs_per_axis();
        const AXES: [&str; 3] = [
            "advective (axis 1)",
            "advective (axis 2)",
            "advective (axis 3)",
        ];
        for i in 0..3 {
            let h = self.grid.h[i];
            let diff = s * h * h / (6.0 * self.params.nu);
            if diff < best.limit {
                best = StableStep {
                    limit: diff,
                    constraint: "diffusive",
                };
            }
            if umax[i] > 0.0 {
                let adv = s * h / umax[i];
                if adv < best.limit {
                    best = StableStep {
                        limit: adv,
                        constraint: AXES[i],
                    };
                }
            }
        }
        best
    }

    pub fn check_cfl(&self, u: &VelocityField, dt: f64) -> Result<()> {
        let stable = self.stable_step(u);
        if dt.is_nan() || dt <= 0.0 || dt > stable.limit {
            return Err(Error::Cfl {
                constraint: stable.constraint.to_string(),
                dt,
                limit: stable.limit,
            });
        }
        Ok(())
    }

    fn parts(&self, u: &VelocityField) -> (VelocityField, [VelocityField; 3]) {
        let parallel = self.params.parallel;
        let rhs = viscous_advective_rhs(&self.grid, u, self.params.nu, parallel);
        let cross = [0, 1, 2].map(|k| cross_basis(&self.grid, u, k, parallel));
        (rhs, cross)
    }

    fn combine(
        &self,
        u: &VelocityField,
        rhs: &VelocityField,
        cross: &[VelocityField; 3],
        omega: &Vec3,
        omega_dot: &Vec3,
        dt: f64,
    ) -> VelocityField {
        let mut u_star = u.clone();
        u_star.axpy(dt, rhs);
        for k in 0..3 {
            if omega[k] != 0.0 {
                u_star.axpy(-2.0 * dt * omega[k], &cross[k]);
            }
            if omega_dot[k] != 0.0 {
                u_star.axpy(-dt * omega_dot[k], &self.rotation_fields[k]);
            }
        }
        u_star.zero_boundary();
        u_star
    }

    /// The pre-projection field
    /// `u + dt (nu lap u - (u . grad) u - 2 omega x u - omega_dot x y)` with walls zeroed.
    pub fn explicit_update(
        &self,
        u: &VelocityField,
        omega: &Vec3,
        omega_dot: &Vec3,
        dt: f64,
    ) -> VelocityField {
        let (rhs, cross) = self.parts(u);
        self.combine(u, &rhs, &cross, omega, omega_dot, dt)
    }

    /// One projection step with prescribed `omega` and `omega_dot`.
    pub fn step(
        &self,
        state: &FluidState,
        omega: &Vec3,
        omega_dot: &Vec3,
        dt: f64,
    ) -> Result<FluidStepOutput> {
        self.check_cfl(&state.velocity, dt)?;
        let u_star = self.explicit_update(&state.velocity, omega, omega_dot, dt);
        self.project_and_finish(u_star, dt)
    }

    fn project_and_finish(&self, u_star: VelocityField, dt: f64) -> Result<FluidStepOutput> {
        if !u_star.all_finite() {
            return Err(Error::NonFinite("fluid velocity".into()));
        }
        let (mut velocity, mut phi) = self.solver.project(&u_star)?;
        velocity.zero_boundary();
        phi.scale(1.0 / dt);
        let state = FluidState {
            grid: self.grid.clone(),
            velocity,
            pressure: phi,
        };
        let kinetic_energy = state.kinetic_energy();
        let dissipation_rate = dissipation_rate(&self.grid, &state.velocity, self.params.nu);
        Ok(FluidStepOutput {
            state,
            kinetic_energy,
            dissipation_rate,
        })
    }

    /// Splits one step into pieces that are affine in `(omega, omega_dot)`.
    ///
    /// The projected update is
    /// `P(u + dt F(u) - 2 dt sum_k omega_k e_k x u - dt sum_k omegadot_k e_k x y)`,
    /// so the angular momentum of the new field is an affine function of the
    /// rotation, evaluated without a pressure solve; [`AffineStep::assemble`]
    /// then projects once.
    pub fn affine_step(&self, state: &FluidState, dt: f64) -> Result<AffineStep<'_>> {
        self.check_cfl(&state.velocity, dt)?;
        let u = &state.velocity;
        let (rhs, cross) = self.parts(u);
        if !rhs.all_finite() {
            return Err(Error::NonFinite("fluid velocity".into()));
        }
        let w = &self.projected_weights;
        let momentum = |f: &VelocityField| Vec3::from_fn(|m, _| w[m].dot(f));
        let mut base_momentum = momentum(u);
        base_momentum += momentum(&rhs) * dt;
        let cross_momenta = [0, 1, 2].map(|k| momentum(&cross[k]));
        Ok(AffineStep {
            stepper: self,
            dt,
            velocity: u.clone(),
            rhs,
            cross,
            base_momentum,
            cross_momenta,
        })
    }
}

/// Precomputed pieces of one fluid step, see [`FluidStepper::affine_step`].
#[derive(Debug, Clone)]
pub struct AffineStep<'a> {
    stepper: &'a FluidStepper,
    dt: f64,
    velocity: VelocityField,
    rhs: VelocityField,
    cross: [VelocityField; 3],
    base_momentum: Vec3,
    cross_momenta: [Vec3; 3],
}

impl AffineStep<'_> {
    /// `integral of y x u_new` for the given rotation history.
    pub fn angular_momentum(&self, omega: &Vec3, omega_dot: &Vec3) -> Vec3 {
        let mut m = self.base_momentum;
        for k in 0..3 {
            m -= self.cross_momenta[k] * (2.0 * self.dt * omega[k]);
            m -= self.stepper.rotation_momenta[k] * (self.dt * omega_dot[k]);
        }
        m
    }

    /// The projected step; identical to [`FluidStepper::step`] with the same arguments.
    pub fn assemble(&self, omega: &Vec3, omega_dot: &Vec3) -> Result<FluidStepOutput> {
        let u_star = self.stepper.combine(
            &self.velocity,
            &self.rhs,
            &self.cross,
            omega,
            omega_dot,
            self.dt,
        );
        self.stepper.project_and_finish(u_star, self.dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid::functionals::kinetic_energy;
    use crate::fluid::init::{initialize_velocity, InitSpec};
    use crate::fluid::ops::divergence;
    use crate::fluid::poisson::divergence_tolerance;

    fn grid(n: usize) -> MacGrid {
        let h = 1.0 / n as f64;
        MacGrid::new([n, n, n], [h; 3], Vec3::new(-0.4, -0.5, -0.6)).unwrap()
    }

    fn stepper(g: &MacGrid, nu: f64) -> FluidStepper {
        FluidStepper::new(g, FluidParams::new(nu, 0.5).unwrap()).unwrap()
    }

    fn random_state(g: &MacGrid, s: &FluidStepper, amp: f64) -> FluidState {
        let u = initialize_velocity(
            g,
            s.solver(),
            &InitSpec::RandomSolenoidal {
                seed: 3,
                amplitude: amp,
            },
        )
        .unwrap();
        FluidState::new(g.clone(), u)
    }

    #[test]
    fn rest_stays_at_rest_under_steady_rotation() {
        let g = grid(6);
        let s = stepper(&g, 0.5);
        let state = FluidState::new(g.clone(), VelocityField::zeros(&g));
        let dt = s.stable_step(&state.velocity).limit;
        let out = s
            .step(&state, &Vec3::new(1.0, -2.0, 3.0), &Vec3::zeros(), dt)
            .unwrap();
        assert_eq!(out.state.velocity.max_abs(), 0.0);
        assert_eq!(out.dissipation_rate, 0.0);
    }

    #[test]
    fn single_diffusion_step_matches_hand_stencil() {
        // 4^3 cells (the smallest grid): one interior x-face perturbed, nu = 1.
        let g = MacGrid::new([4, 4, 4], [0.5, 0.25, 0.2], Vec3::zeros()).unwrap();
        let mut u = VelocityField::zeros(&g);
        u.comps[0].set(2, 1, 2, 1.0);
        u.comps[0].set(1, 1, 2, 0.5);
        let s = FluidStepper::new(&g, FluidParams::new(1.0, 1.0).unwrap()).unwrap();
        let dt = 1e-3;
        let u_star = s.explicit_update(&u, &Vec3::zeros(), &Vec3::zeros(), dt);
        // Advection of a single face: its transverse interpolants vanish, and
        // the normal self-advection term is u (u[3] - u[1]) / (2 h) = 1 * (0 - 0.5) / 1.0.
        let hx2 = 0.25;
        let hy2 = 0.0625;
        let hz2 = 0.04;
        let lap = (0.0 - 2.0 + 0.5) / hx2 + (0.0 - 2.0 + 0.0) / hy2 + (0.0 - 2.0 + 0.0) / hz2;
        let adv = 1.0 * (0.0 - 0.5) / (2.0 * 0.5);
        let expected = 1.0 + dt * (lap - adv);
        assert!((u_star.comps[0].get(2, 1, 2) - expected).abs() < 1e-14);
        // A tangential neighbour at the wall picks up the mirrored ghost.
        let neighbour_lap = (1.0 - 0.0) / hy2;
        let adv_nb = 0.0;
        assert!((u_star.comps[0].get(2, 0, 2) - dt * (neighbour_lap - adv_nb)).abs() < 1e-14);
    }

    #[test]
    fn angular_acceleration_forcing_before_and_after_projection() {
        let g = grid(6);
        let s = stepper(&g, 0.5);
        let u = VelocityField::zeros(&g);
        let dt = 1e-3;
        let e3 = Vec3::z();
        let u_star = s.explicit_update(&u, &Vec3::zeros(), &e3, dt);
        let mut expected = rotation_field(&g, 2);
        expected.scale(-dt);
        assert_eq!(u_star, expected);
        let state = FluidState::new(g.clone(), u);
        let out = s.step(&state, &Vec3::zeros(), &e3, dt).unwrap();
        let (projected, _) = s.solver().project(&u_star).unwrap();
        let mut diff = out.state.velocity.clone();
        diff.axpy(-1.0, &projected);
        assert!(diff.max_abs() < 1e-15);
    }

    #[test]
    fn step_keeps_walls_and_divergence() {
        let g = grid(8);
        let s = stepper(&g, 0.5);
        let state = random_state(&g, &s, 1.0);
        let dt = s.stable_step(&state.velocity).limit;
        let out = s
            .step(
                &state,
                &Vec3::new(0.5, 0.2, 1.0),
                &Vec3::new(0.1, 0.0, -0.3),
                dt,
            )
            .unwrap();
        assert!(out.state.velocity.boundary_is_zero());
        let div = divergence(&g, &out.state.velocity).max_abs();
        assert!(
            div <= divergence_tolerance(&g, &out.state.velocity).max(1e-13),
            "{div}"
        );
    }

    #[test]
    fn decaying_flow_loses_energy_every_step() {
        let g = grid(8);
        let s = stepper(&g, 0.5);
        let mut state = random_state(&g, &s, 1.0);
        let mut energy = kinetic_energy(&g, &state.velocity);
        for _ in 0..50 {
            let dt = s.stable_step(&state.velocity).limit;
            let out = s.step(&state, &Vec3::zeros(), &Vec3::zeros(), dt).unwrap();
            assert!(out.kinetic_energy < energy);
            energy = out.kinetic_energy;
            state = out.state;
        }
    }

    #[test]
    fn cfl_violation_is_reported() {
        let g = grid(6);
        let s = stepper(&g, 0.5);
        let state = FluidState::new(g.clone(), VelocityField::zeros(&g));
        let limit = s.stable_step(&state.velocity).limit;
        match s.step(&state, &Vec3::zeros(), &Vec3::zeros(), 2.0 * limit) {
            Err(Error::Cfl { constraint, .. }) => assert_eq!(constraint, "diffusive"),
            other => panic!("expected CFL error, got {other:?}"),
        }
        let fast = random_state(&g, &s, 100.0);
        let stable = s.stable_step(&fast.velocity);
        assert!(stable.constraint.starts_with("advective"));
    }

    #[test]
    fn affine_split_matches_direct_step() {
        let g = grid(8);
        let s = stepper(&g, 0.5);
        let state = random_state(&g, &s, 0.8);
        let dt = s.stable_step(&state.velocity).limit;
        let omega = Vec3::new(0.3, -1.1, 2.0);
        let omega_dot = Vec3::new(-0.7, 0.4, 0.05);
        let direct = s.step(&state, &omega, &omega_dot, dt).unwrap();
        let split = s.affine_step(&state, dt).unwrap();
        let assembled = split.assemble(&omega, &omega_dot).unwrap();
        assert_eq!(assembled.state.velocity, direct.state.velocity);
        let m_direct = direct.state.angular_momentum();
        let m_split = split.angular_momentum(&omega, &omega_dot);
        assert!((m_direct - m_split).norm() < 1e-13 * (1.0 + m_direct.norm()));
    }
}
