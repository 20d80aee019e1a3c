//! Closed-form propagator kernels for the quadratic Lagrangian
//! L = m(ẋ² + ẏ² + ż²)/2 + m g z (z measured downward).
//!
//! The transverse factors are free-particle kernels; the vertical factor
//! carries the extra gravity phase. The branch of √i is fixed to e^{iπ/4}
//! (prefactor √(m/2πħΔt) · e^{−iπ/4}) — the choice that makes kernel
//! propagation of a Gaussian reproduce the analytic spreading width with a
//! positive real part.

use crate::model::PhysicalConstants;
use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_4, PI};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("kernel requires tb > ta (got ta = {ta}, tb = {tb})")]
    NonCausal { ta: f64, tb: f64 },
}

/// Value of a 1-D kernel, units m^{-1/2}.
///
/// |amplitude| = √(m/2πħΔt) for every free and gravity kernel, independent of
/// the endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub amplitude: Complex64,
}

/// Free 1-D kernel √(m/2πiħΔt) · exp(i m (xb−xa)² / 2ħΔt).
pub fn free_kernel(
    xb: f64,
    tb: f64,
    xa: f64,
    ta: f64,
    constants: &PhysicalConstants,
) -> Result<KernelValue, KernelError> {
    if !(tb > ta) {
        return Err(KernelError::NonCausal { ta, tb });
    }
    let hbar = constants.hbar_eff();
    let dt = tb - ta;
    let mag = (constants.mass / (2.0 * PI * hbar * dt)).sqrt();
    let dx = xb - xa;
    let phase = constants.mass * dx * dx / (2.0 * hbar * dt) - FRAC_PI_4;
    Ok(KernelValue { amplitude: Complex64::from_polar(mag, phase) })
}

/// Vertical kernel: the free factor times
/// exp(i m/ħ · [g(zb+za)Δt/2 − g²Δt³/24]).
pub fn gravity_kernel(
    zb: f64,
    tb: f64,
    za: f64,
    ta: f64,
    constants: &PhysicalConstants,
) -> Result<KernelValue, KernelError> {
    let free = free_kernel(zb, tb, za, ta, constants)?;
    let hbar = constants.hbar_eff();
    let dt = tb - ta;
    let g = constants.g;
    let extra = constants.mass / hbar * (0.5 * g * (zb + za) * dt - g * g * dt * dt * dt / 24.0);
    Ok(KernelValue { amplitude: free.amplitude * Complex64::from_polar(1.0, extra) })
}

/// Product kernel K_x K_y K_z for a 3-D hop.
pub fn kernel_3d(
    pb: [f64; 3],
    tb: f64,
    pa: [f64; 3],
    ta: f64,
    constants: &PhysicalConstants,
) -> Result<Complex64, KernelError> {
    let kx = free_kernel(pb[0], tb, pa[0], ta, constants)?;
    let ky = free_kernel(pb[1], tb, pa[1], ta, constants)?;
    let kz = gravity_kernel(pb[2], tb, pa[2], ta, constants)?;
    Ok(kx.amplitude * ky.amplitude * kz.amplitude)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_shimizu_config;
    use proptest::prelude::*;

    #[test]
    fn prefactor_magnitude_and_branch() {
        let cfg = default_shimizu_config();
        let k = free_kernel(0.0, 1.0, 0.0, 0.0, &cfg.constants).unwrap();
        assert!((k.amplitude.norm() - 7.109_344_494_9e3).abs() < 1e-6);
        assert!((k.amplitude.arg() + FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn displacement_sign_symmetry() {
        let cfg = default_shimizu_config();
        let a = free_kernel(1e-5, 0.3, 0.0, 0.0, &cfg.constants).unwrap();
        let b = free_kernel(-1e-5, 0.3, 0.0, 0.0, &cfg.constants).unwrap();
        assert_eq!(a.amplitude, b.amplitude);
    }

    #[test]
    fn non_causal_rejected() {
        let cfg = default_shimizu_config();
        assert!(free_kernel(0.0, 1.0, 0.0, 1.0, &cfg.constants).is_err());
        assert!(gravity_kernel(0.0, 0.5, 0.0, 1.0, &cfg.constants).is_err());
    }

    #[test]
    fn gravity_reduces_to_free_when_g_vanishes() {
        let mut cfg = default_shimizu_config();
        cfg.constants.g = 1e-300; // effectively zero without violating g > 0
        let f = free_kernel(1e-4, 0.2, -2e-4, 0.05, &cfg.constants).unwrap();
        let z = gravity_kernel(1e-4, 0.2, -2e-4, 0.05, &cfg.constants).unwrap();
        assert!((f.amplitude - z.amplitude).norm() < 1e-12 * f.amplitude.norm());
    }

    #[test]
    fn gravity_extra_phase_at_origin() {
        let cfg = default_shimizu_config();
        let dt = 0.1;
        let f = free_kernel(0.0, dt, 0.0, 0.0, &cfg.constants).unwrap();
        let z = gravity_kernel(0.0, dt, 0.0, 0.0, &cfg.constants).unwrap();
        let expect = -cfg.constants.mass * cfg.constants.g * cfg.constants.g * dt * dt * dt
            / (24.0 * cfg.constants.hbar_eff());
        let got = (z.amplitude / f.amplitude).arg();
        // compare on the circle
        let diff = (Complex64::from_polar(1.0, got) / Complex64::from_polar(1.0, expect)).arg();
        assert!(diff.abs() < 1e-9, "phase diff {diff}");
    }

    #[test]
    fn product_form_with_zero_displacement() {
        let mut cfg = default_shimizu_config();
        cfg.constants.g = 1e-300;
        let k = kernel_3d([0.0; 3], 0.7, [0.0; 3], 0.0, &cfg.constants).unwrap();
        // three e^{-i pi/4} factors
        assert!((k.arg() + 3.0 * FRAC_PI_4).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn magnitude_independent_of_endpoints(
            dx in -1e-2f64..1e-2,
            dz in -1e-2f64..1e-2,
            dt in 1e-6f64..1.0,
        ) {
            let cfg = default_shimizu_config();
            let f0 = free_kernel(0.0, dt, 0.0, 0.0, &cfg.constants).unwrap();
            let f = free_kernel(dx, dt, 0.0, 0.0, &cfg.constants).unwrap();
            let z = gravity_kernel(dz, dt, -dz, 0.0, &cfg.constants).unwrap();
            prop_assert!((f.amplitude.norm() / f0.amplitude.norm() - 1.0).abs() < 1e-12);
            prop_assert!((z.amplitude.norm() / f0.amplitude.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn product_matches_components(
            x in -1e-3f64..1e-3,
            y in -1e-3f64..1e-3,
            z in -1e-3f64..1e-3,
            dt in 1e-4f64..0.5,
        ) {
            let cfg = default_shimizu_config();
            let kx = free_kernel(x, dt, 0.0, 0.0, &cfg.constants).unwrap().amplitude;
            let ky = free_kernel(y, dt, 0.0, 0.0, &cfg.constants).unwrap().amplitude;
            let kz = gravity_kernel(z, dt, 0.0, 0.0, &cfg.constants).unwrap().amplitude;
            let k3 = kernel_3d([x, y, z], dt, [0.0; 3], 0.0, &cfg.constants).unwrap();
            prop_assert!((k3 - kx * ky * kz).norm() <= 1e-12 * k3.norm());
        }
    }
}
