//! Limit classification, a-priori axis prediction and the parabolic scaling.

use serde::{Deserialize, Serialize};

use crate::config::{LimitTolerances, RunConfig};
use crate::error::{Error, Result};
use crate::fluid::InitSpec;
use crate::geometry::{PrincipalAxes, DEGENERACY_TOL};
use crate::Vec3;

/// One point of the trajectory used for limit statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitSample {
    pub t: f64,
    pub omega: Vec3,
    /// `||u||_2`.
    pub u_l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisVerdict {
    pub converged: bool,
    /// One-based principal axis, `None` when the limit lies in a degenerate
    /// eigenspace or `Omega` vanishes.
    pub axis_index: Option<usize>,
    /// One-based indices spanning the limit eigenspace.
    pub eigenspace: Vec<usize>,
    /// Signed terminal speed, `Omega_inf ~ mu e_axis`.
    pub mu: f64,
    pub final_angle_deg: f64,
    /// `|Omega x I Omega| / (|Omega| |I Omega|)` at the last sample.
    pub residual: f64,
    /// `| |I Omega(T)| - |A0| | / |A0|`.
    pub inertia_mismatch: f64,
    pub window_max_angle_deg: f64,
    pub window_max_residual: f64,
    /// Largest `||u||_2 / ||u0||_2` in the window.
    pub window_max_u_rel: f64,
}

fn eigen_residual(omega: &Vec3, axes: &PrincipalAxes) -> f64 {
    let i_omega = axes.apply(omega);
    let denom = omega.norm() * i_omega.norm();
    if denom == 0.0 {
        0.0
    } else {
        omega.cross(&i_omega).norm() / denom
    }
}

/// Angle in degrees between `omega` and the span of the given axes.
fn angle_to_space(omega: &Vec3, axes: &PrincipalAxes, space: &[usize]) -> f64 {
    let n = omega.norm();
    if n == 0.0 {
        return f64::NAN;
    }
    let proj: f64 = space
        .iter()
        .map(|&j| omega.dot(&axes.axis(j)).powi(2))
        .sum::<f64>()
        .sqrt();
    (proj / n).min(1.0).acos().to_degrees()
}

/// Checks the final window of a trajectory against the equilibrium set.
///
/// `u0_l2` is `||u(0)||_2`; when it is zero the fluid test compares absolute values.
pub fn classify_limit(
    samples: &[LimitSample],
    axes: &PrincipalAxes,
    abs_a0: f64,
    u0_l2: f64,
    tol: &LimitTolerances,
) -> Result<AxisVerdict> {
    tol.validate()?;
    let last = samples.last().ok_or(Error::EmptyHistory)?;
    let t0 = samples[0].t;
    let start = last.t - tol.window_fraction * (last.t - t0);
    let window: Vec<&LimitSample> = samples.iter().filter(|s| s.t >= start).collect();

    let spaces = axes.eigenspaces();
    // Time-averaged angle to each eigenspace over the window.
    let zero_omega = window.iter().any(|s| s.omega.norm() == 0.0);
    let best = if zero_omega {
        None
    } else {
        spaces
            .iter()
            .map(|space| {
                let mean = window
                    .iter()
                    .map(|s| angle_to_space(&s.omega, axes, space))
                    .sum::<f64>()
                    / window.len() as f64;
                (space.clone(), mean)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
    };

    let u_scale = if u0_l2 > 0.0 { u0_l2 } else { 1.0 };
    let window_max_u_rel = window.iter().map(|s| s.u_l2 / u_scale).fold(0.0, f64::max);
    let window_max_residual = window
        .iter()
        .map(|s| eigen_residual(&s.omega, axes))
        .fold(0.0, f64::max);
    let i_omega_norm = axes.apply(&last.omega).norm();
    let inertia_mismatch = if abs_a0 > 0.0 {
        (i_omega_norm - abs_a0).abs() / abs_a0
    } else {
        i_omega_norm
    };
    let u_ok = window_max_u_rel <= tol.u_rel;

    let Some((space, _)) = best else {
        // Omega vanished: the rest state is an equilibrium.
        return Ok(AxisVerdict {
            converged: u_ok && last.omega.norm() == 0.0,
            axis_index: None,
            eigenspace: Vec::new(),
            mu: 0.0,
            final_angle_deg: f64::NAN,
            residual: 0.0,
            inertia_mismatch,
            window_max_angle_deg: f64::NAN,
            window_max_residual,
            window_max_u_rel,
        });
    };

    let window_max_angle_deg = window
        .iter()
        .map(|s| angle_to_space(&s.omega, axes, &space))
        .fold(0.0, f64::max);
    let lambda = axes.eigenvalues[space[0]];
    let (axis_index, mu) = if space.len() == 1 {
        let j = space[0];
        let sign = if last.omega.dot(&axes.axis(j)) < 0.0 {
            -1.0
        } else {
            1.0
        };
        (Some(j + 1), sign * abs_a0 / lambda)
    } else {
        (None, abs_a0 / lambda)
    };
    Ok(AxisVerdict {
        converged: u_ok
            && window_max_angle_deg <= tol.angle_deg
            && window_max_residual <= tol.residual,
        axis_index,
        eigenspace: space.iter().map(|j| j + 1).collect(),
        mu,
        final_angle_deg: angle_to_space(&last.omega, axes, &space),
        residual: eigen_residual(&last.omega, axes),
        inertia_mismatch,
        window_max_angle_deg,
        window_max_residual,
        window_max_u_rel,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InertiaCase {
    /// `l1 = l2 = l3`.
    Sphere,
    /// `l1 = l2 < l3`.
    Egg,
    /// Every other spectrum.
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    LargestAxisGuaranteed,
    SmallestAxisExcluded,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl Inequality {
    fn new(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            holds: lhs > rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub case: InertiaCase,
    pub verdict: Prediction,
    pub inequalities: Vec<Inequality>,
    /// `|A0| / l3` when the largest axis is guaranteed.
    pub predicted_mu: Option<f64>,
}

/// Prediction from sorted principal moments and `omega_bar0` in principal coordinates.
pub fn predict_axis(
    lambdas: [f64; 3],
    omega_bar0: &Vec3,
    e_tilde0: f64,
    abs_a0: f64,
) -> Result<PredictionReport> {
    let [l1, l2, l3] = lambdas;
    if !(l1 > 0.0 && l1 <= l2 && l2 <= l3 && l3.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "principal moments must be positive and ascending, got {lambdas:?}"
        )));
    }
    let tol = DEGENERACY_TOL * l3;
    let w = omega_bar0;
    let (case, inequalities, largest) = if l3 - l1 <= tol {
        (InertiaCase::Sphere, Vec::new(), true)
    } else if l2 - l1 <= tol {
        let (ls, ll) = (l1, l3);
        let egg = Inequality::new("egg", ll * (ll / ls - 1.0) * w[2] * w[2], e_tilde0);
        let holds = egg.holds;
        (InertiaCase::Egg, vec![egg], holds)
    } else {
        let first = Inequality::new(
            "largest_axis",
            l3 * (l3 / l2 - 1.0) * w[2] * w[2],
            e_tilde0 + l1 * (1.0 - l1 / l2) * w[0] * w[0],
        );
        let instability = Inequality::new(
            "smallest_axis_instability",
            l2 * (l2 / l1 - 1.0) * w[1] * w[1] + l3 * (l3 / l1 - 1.0) * w[2] * w[2],
            e_tilde0,
        );
        let largest = first.holds && instability.holds;
        (InertiaCase::General, vec![first, instability], largest)
    };
    let verdict = if largest {
        Prediction::LargestAxisGuaranteed
    } else if case == InertiaCase::General && inequalities[1].holds {
        Prediction::SmallestAxisExcluded
    } else {
        Prediction::Inconclusive
    };
    Ok(PredictionReport {
        case,
        verdict,
        inequalities,
        predicted_mu: largest.then(|| abs_a0 / l3),
    })
}

/// Same as [`predict_axis`] with `omega_bar0` given in body coordinates.
pub fn predict_axis_body(
    axes: &PrincipalAxes,
    omega_bar0: &Vec3,
    e_tilde0: f64,
    abs_a0: f64,
) -> Result<PredictionReport> {
    predict_axis(
        axes.eigenvalues,
        &axes.to_principal(omega_bar0),
        e_tilde0,
        abs_a0,
    )
}

/// Maps a run onto its parabolic rescaling by `lambda`.
///
/// Lengths shrink by `lambda`, velocities grow by `lambda`, angular velocities
/// by `lambda^2`, and times shrink by `lambda^2`. The rescaled `Omega_bar(s)`
/// is compared against `lambda^2 Omega_bar(lambda^2 s)` of the original.
/// Angular momentum scales as `lambda^-3` and linear momentum as `lambda^-2`.
pub fn scaling_transform(config: &RunConfig, lambda: f64) -> Result<RunConfig> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "scaling factor must be positive, got {lambda}"
        )));
    }
    let mut out = config.clone();
    let len = |v: [f64; 3]| v.map(|x| x / lambda);
    let g = &mut out.geometry;
    g.outer_half_extents = len(g.outer_half_extents);
    g.cavity_half_extents = len(g.cavity_half_extents);
    g.cavity_offset = len(g.cavity_offset);
    out.init = match &config.init {
        InitSpec::Zero => InitSpec::Zero,
        other => other.with_amplitude(other.amplitude().unwrap_or(0.0) * lambda),
    };
    let l2 = lambda * lambda;
    out.omega_bar0 = config.omega_bar0.map(|w| w.map(|x| x * l2));
    out.a0 = config.a0.map(|a| a.map(|x| x / (l2 * lambda)));
    out.l0 = config.l0.map(|x| x / l2);
    out.dt = config.dt.map(|dt| dt / l2);
    out.t_end = config.t_end / l2;
    out.sample_interval = config.sample_interval / l2;
    if lambda != 1.0 {
        out.name = format!("{}-scaled-{lambda}", config.name);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::principal_axes;
    use crate::Mat3;
    use proptest::prelude::*;

    fn diag(d: [f64; 3]) -> PrincipalAxes {
        principal_axes(&Mat3::from_diagonal(&Vec3::from(d))).unwrap()
    }

    fn constant(omega: Vec3) -> Vec<LimitSample> {
        (0..20)
            .map(|i| LimitSample {
                t: i as f64,
                omega,
                u_l2: 0.0,
            })
            .collect()
    }

    #[test]
    fn exact_equilibrium_is_converged() {
        let axes = diag([1.0, 2.0, 3.0]);
        let v = classify_limit(&constant(Vec3::z()), &axes, 3.0, 1.0, &Default::default()).unwrap();
        assert!(v.converged);
        assert_eq!(v.axis_index, Some(3));
        assert_eq!(v.mu, 1.0);
        assert_eq!(v.residual, 0.0);
        assert_eq!(v.inertia_mismatch, 0.0);
    }

    #[test]
    fn off_axis_rotation_is_not_converged() {
        let axes = diag([1.0, 2.0, 3.0]);
        let w = Vec3::new(1.0, 1.0, 0.0) / 2f64.sqrt();
        let v = classify_limit(&constant(w), &axes, 1.0, 1.0, &Default::default()).unwrap();
        // |w x Iw| / (|w| |Iw|) = (1/2) / sqrt(5/2) = 1/sqrt(10).
        assert!((v.residual - 1.0 / 10f64.sqrt()).abs() < 1e-15);
        assert!(!v.converged);
    }

    #[test]
    fn degenerate_spectra_report_eigenspaces() {
        let sphere = diag([2.0; 3]);
        let w = Vec3::new(0.3, -0.2, 0.5);
        let v = classify_limit(
            &constant(w),
            &sphere,
            2.0 * w.norm(),
            1.0,
            &Default::default(),
        )
        .unwrap();
        assert!(v.converged);
        assert_eq!(v.axis_index, None);
        assert_eq!(v.eigenspace, vec![1, 2, 3]);

        let egg = diag([1.0, 1.0, 2.0]);
        let v = classify_limit(
            &constant(Vec3::new(0.6, 0.8, 0.0)),
            &egg,
            1.0,
            1.0,
            &Default::default(),
        )
        .unwrap();
        assert!(v.converged && v.axis_index.is_none());
        assert_eq!(v.eigenspace, vec![1, 2]);
        let v = classify_limit(&constant(-Vec3::z()), &egg, 2.0, 1.0, &Default::default()).unwrap();
        assert_eq!(v.axis_index, Some(3));
        assert_eq!(v.mu, -1.0);
    }

    #[test]
    fn fluid_test_uses_the_window() {
        let axes = diag([1.0, 2.0, 3.0]);
        let mut h = constant(Vec3::z());
        h[0].u_l2 = 1.0;
        h[19].u_l2 = 0.5;
        let v = classify_limit(&h, &axes, 3.0, 1.0, &Default::default()).unwrap();
        assert!(!v.converged);
        h[19].u_l2 = 1e-3;
        assert!(
            classify_limit(&h, &axes, 3.0, 1.0, &Default::default())
                .unwrap()
                .converged
        );
    }

    #[test]
    fn rejects_bad_tolerances_and_empty_history() {
        let axes = diag([1.0, 2.0, 3.0]);
        let tol = LimitTolerances {
            angle_deg: -1.0,
            ..Default::default()
        };
        assert!(classify_limit(&constant(Vec3::z()), &axes, 1.0, 1.0, &tol).is_err());
        assert!(classify_limit(&[], &axes, 1.0, 1.0, &Default::default()).is_err());
    }

    #[test]
    fn egg_predictions() {
        let r = predict_axis([1.0, 1.0, 2.0], &Vec3::z(), 1.0, 2.0).unwrap();
        assert_eq!(r.case, InertiaCase::Egg);
        assert_eq!(r.verdict, Prediction::LargestAxisGuaranteed);
        assert_eq!(r.inequalities[0].lhs, 2.0);
        assert_eq!(r.predicted_mu, Some(1.0));

        let r = predict_axis([1.0, 1.0, 2.0], &Vec3::x(), 0.5, 1.0).unwrap();
        assert_eq!(r.inequalities[0].lhs, 0.0);
        assert_eq!(r.verdict, Prediction::Inconclusive);
        assert_eq!(r.predicted_mu, None);
    }

    #[test]
    fn general_predictions() {
        let r = predict_axis([1.0, 2.0, 3.0], &Vec3::new(0.0, 1.0, 1.0), 1.0, 1.0).unwrap();
        assert_eq!(r.case, InertiaCase::General);
        assert_eq!((r.inequalities[1].lhs, r.inequalities[1].rhs), (8.0, 1.0));
        assert_eq!((r.inequalities[0].lhs, r.inequalities[0].rhs), (1.5, 1.0));
        assert_eq!(r.verdict, Prediction::LargestAxisGuaranteed);

        let r = predict_axis([1.0, 2.0, 3.0], &Vec3::new(0.0, 1.0, 0.2), 1.0, 1.0).unwrap();
        assert_eq!(r.verdict, Prediction::SmallestAxisExcluded);
        let r = predict_axis([1.0, 2.0, 3.0], &Vec3::new(1.0, 0.0, 0.0), 1.0, 1.0).unwrap();
        assert_eq!(r.verdict, Prediction::Inconclusive);

        let r = predict_axis([2.0, 2.0, 2.0], &Vec3::x(), 100.0, 4.0).unwrap();
        assert_eq!(r.case, InertiaCase::Sphere);
        assert_eq!(r.predicted_mu, Some(2.0));

        assert!(predict_axis([2.0, 1.0, 3.0], &Vec3::x(), 1.0, 1.0).is_err());
    }

    #[test]
    fn body_frame_prediction_rotates() {
        let r = nalgebra::Rotation3::from_euler_angles(0.3, -0.5, 1.1).into_inner();
        let i = r * Mat3::from_diagonal(&Vec3::new(1.0, 2.0, 3.0)) * r.transpose();
        let axes = principal_axes(&((i + i.transpose()) * 0.5)).unwrap();
        let w = r * Vec3::new(0.0, 1.0, 1.0);
        let body = predict_axis_body(&axes, &w, 1.0, 1.0).unwrap();
        assert_eq!(body.verdict, Prediction::LargestAxisGuaranteed);
        assert!((body.inequalities[1].lhs - 8.0).abs() < 1e-12);
    }

    fn reference_config() -> RunConfig {
        RunConfig::from_json(
            r#"{
            "geometry": {"outer_half_extents": [1, 1, 1.5], "cavity_half_extents": [0.5, 0.5, 0.5],
                         "cavity_offset": [0, 0, 0.2], "rho_B": 1, "nu": 0.5},
            "grid": [8, 8, 8],
            "init": {"kind": "random_solenoidal", "seed": 3, "amplitude": 0.1},
            "omega_bar0": [0, 0.5, 1],
            "l0": [0.1, 0, 0],
            "dt": 0.001,
            "t_end": 1.0,
            "sample_interval": 0.1
        }"#,
        )
        .unwrap()
    }

    #[test]
    fn unit_scaling_is_identity() {
        let c = reference_config();
        assert_eq!(scaling_transform(&c, 1.0).unwrap(), c);
        assert!(scaling_transform(&c, 0.0).is_err());
    }

    #[test]
    fn doubling_follows_the_exponents() {
        let c = reference_config();
        let s = scaling_transform(&c, 2.0).unwrap();
        assert_eq!(s.geometry.outer_half_extents, [0.5, 0.5, 0.75]);
        assert_eq!(s.geometry.cavity_offset, [0.0, 0.0, 0.1]);
        assert_eq!(s.geometry.nu, c.geometry.nu);
        assert_eq!(s.omega_bar0, Some([0.0, 2.0, 4.0]));
        assert_eq!(s.t_end, 0.25);
        assert_eq!(s.dt, Some(0.00025));
        assert_eq!(s.sample_interval, 0.025);
        assert_eq!(s.init.amplitude(), Some(0.2));
        assert_eq!(s.l0, [0.025, 0.0, 0.0]);
        assert_eq!(s.grid, c.grid);
        s.validate().unwrap();
    }

    proptest! {
        #[test]
        fn prediction_is_homogeneous(
            l in prop::array::uniform3(0.5f64..3.0),
            w in prop::array::uniform3(-2.0f64..2.0),
            e in 0.0f64..5.0,
            c in 0.1f64..10.0,
        ) {
            let mut l = l;
            l.sort_by(f64::total_cmp);
            let w = Vec3::from(w);
            let a = predict_axis(l, &w, e, 1.0).unwrap();
            let b = predict_axis(l, &(w * c), e * c * c, 1.0).unwrap();
            prop_assert_eq!(a.verdict, b.verdict);
        }

        #[test]
        fn classification_ignores_axis_signs(
            w in prop::array::uniform3(-2.0f64..2.0),
            flips in prop::array::uniform3(prop::bool::ANY),
        ) {
            let w = Vec3::from(w);
            prop_assume!(w.norm() > 1e-3);
            let base = diag([1.0, 2.0, 3.0]);
            let mut flipped = base.clone();
            for (j, f) in flips.iter().enumerate() {
                if *f {
                    let col = -flipped.eigenvectors.column(j);
                    flipped.eigenvectors.set_column(j, &col);
                }
            }
            let a = classify_limit(&constant(w), &base, 1.0, 1.0, &Default::default()).unwrap();
            let b = classify_limit(&constant(w), &flipped, 1.0, 1.0, &Default::default()).unwrap();
            prop_assert_eq!(a.axis_index, b.axis_index);
            prop_assert_eq!(a.converged, b.converged);
            prop_assert!((a.final_angle_deg - b.final_angle_deg).abs() < 1e-9);
        }
    }
}
