//! Point-particle closures: drag, condensation, droplet heat balance.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::PhysicsError;
use crate::geom::Vec3;

/// Carrier-fluid and droplet material properties, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidProperties {
    pub rho_f: f64,
    pub nu_f: f64,
    pub kappa_f: f64,
    pub c_p_f: f64,
    pub d_v: f64,
    pub latent_heat: f64,
    pub c_p_p: f64,
    pub rho_p: f64,
}

impl FluidProperties {
    /// Moist air around 288 K carrying liquid water droplets.
    pub fn air() -> Self {
        FluidProperties {
            rho_f: 1.2,
            nu_f: 1.5e-5,
            kappa_f: 0.025,
            c_p_f: 1005.0,
            d_v: 2.5e-5,
            latent_heat: 2.5e6,
            c_p_p: 4186.0,
            rho_p: 1000.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = [
            ("rho_f", self.rho_f),
            ("nu_f", self.nu_f),
            ("kappa_f", self.kappa_f),
            ("c_p_f", self.c_p_f),
            ("d_v", self.d_v),
            ("latent_heat", self.latent_heat),
            ("c_p_p", self.c_p_p),
            ("rho_p", self.rho_p),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be > 0, got {v}"));
            }
        }
        Ok(())
    }
}

/// Fluid values at a parcel position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidSample {
    pub u_f: Vec3,
    pub t_f: f64,
    pub rho_v: f64,
}

/// Nusselt number of a sphere in still fluid.
pub const NUSSELT: f64 = 2.0;

const MAGNUS_E0: f64 = 610.94;
const MAGNUS_A: f64 = 17.625;
const MAGNUS_B: f64 = 243.04;
const R_VAPOR: f64 = 461.5;
pub const SATURATION_T_MIN: f64 = 200.0;
pub const SATURATION_T_MAX: f64 = 350.0;

pub fn particle_mass(d_p: f64, rho_p: f64) -> f64 {
    PI / 6.0 * rho_p * d_p * d_p * d_p
}

pub fn diameter_from_mass(m_p: f64, rho_p: f64) -> f64 {
    (6.0 * m_p / (PI * rho_p)).cbrt()
}

/// Stokes relaxation time rho_p d^2 / (18 rho_f nu_f).
pub fn stokes_time(d_p: f64, props: &FluidProperties) -> f64 {
    props.rho_p * d_p * d_p / (18.0 * props.rho_f * props.nu_f)
}

/// Schiller-Naumann correction `C_D Re / 24`; 1 in the Stokes limit.
pub fn drag_factor(re: f64) -> f64 {
    if re <= 1000.0 {
        1.0 + 0.15 * re.powf(0.687)
    } else {
        0.44 * re / 24.0
    }
}

pub fn drag_coefficient(re: f64) -> f64 {
    24.0 / re * drag_factor(re)
}

pub fn particle_reynolds(slip: f64, d_p: f64, nu_f: f64) -> f64 {
    slip * d_p / nu_f
}

/// Drag acceleration written as `f(Re) (u_f - u_p) / tau_p`, which equals
/// `3/4 C_D/d rho_f/rho_p |u_f - u_p| (u_f - u_p)` and stays finite at Re = 0.
pub fn drag_acceleration(u_p: Vec3, sample: &FluidSample, d_p: f64, props: &FluidProperties) -> Vec3 {
    let rel = sample.u_f - u_p;
    let re = particle_reynolds(rel.norm(), d_p, props.nu_f);
    rel * (drag_factor(re) / stokes_time(d_p, props))
}

/// Magnus-form saturation vapour pressure converted with the ideal gas law:
/// e_s = 610.94 exp(17.625 t / (t + 243.04)) Pa with t in Celsius,
/// rho = e_s / (461.5 T).
pub fn saturation_vapor_density(t: f64) -> Result<f64, PhysicsError> {
    if !(SATURATION_T_MIN..=SATURATION_T_MAX).contains(&t) {
        return Err(PhysicsError::TemperatureOutOfRange(t));
    }
    let tc = t - 273.15;
    let e_s = MAGNUS_E0 * (MAGNUS_A * tc / (tc + MAGNUS_B)).exp();
    Ok(e_s / (R_VAPOR * t))
}

/// Condensation growth rate 2 pi D_v d rho_sat(T_f) (S_f - S_p).
pub fn mass_transfer_rate(
    d_p: f64,
    sample: &FluidSample,
    s_vp: f64,
    props: &FluidProperties,
) -> Result<f64, PhysicsError> {
    let rho_sat = saturation_vapor_density(sample.t_f)?;
    let s_vf = sample.rho_v / rho_sat;
    Ok(2.0 * PI * props.d_v * d_p * rho_sat * (s_vf - s_vp))
}

/// Droplet temperature rate from
/// m c_p,p dT/dt = pi Nu kappa d (T_f - T_p) - L dm/dt,
/// taken with the sign as printed: evaporation (dm/dt < 0) raises T_p.
pub fn heat_transfer_rate(
    d_p: f64,
    t_p: f64,
    sample: &FluidSample,
    dm_dt: f64,
    props: &FluidProperties,
) -> f64 {
    let m_p = particle_mass(d_p, props.rho_p);
    (PI * NUSSELT * props.kappa_f * d_p * (sample.t_f - t_p) - props.latent_heat * dm_dt)
        / (m_p * props.c_p_p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(u: Vec3) -> FluidSample {
        FluidSample {
            u_f: u,
            t_f: 293.15,
            rho_v: saturation_vapor_density(293.15).unwrap(),
        }
    }

    #[test]
    fn mass_examples() {
        assert_eq!(particle_mass(0.0, 1000.0), 0.0);
        let m = particle_mass(1e-5, 1000.0);
        assert!((m - 5.235987756e-13).abs() < 1e-21);
        assert!((particle_mass(2e-5, 1000.0) / m - 8.0).abs() < 1e-12);
        assert!((diameter_from_mass(m, 1000.0) - 1e-5).abs() < 1e-20);
    }

    #[test]
    fn drag_examples() {
        let props = FluidProperties::air();
        let u = Vec3::new(0.3, -0.1, 0.2);
        assert_eq!(drag_acceleration(u, &sample(u), 1e-5, &props), Vec3::ZERO);
        assert!((drag_coefficient(1.0) - 27.6).abs() < 1e-12);
        // tiny slip: Stokes limit
        let d = 1e-6;
        let up = Vec3::new(1e-9, 0.0, 0.0);
        let a = drag_acceleration(up, &sample(Vec3::ZERO), d, &props);
        let stokes = (Vec3::ZERO - up) * (18.0 * props.nu_f * props.rho_f / (props.rho_p * d * d));
        assert!((a.x() - stokes.x()).abs() <= 1e-6 * stokes.x().abs());
        assert!(drag_factor(0.0) == 1.0);
        // explicit coefficient form at moderate Re
        let d = 1e-4;
        let up = Vec3::new(2.0, 0.0, 0.0);
        let re = particle_reynolds(2.0, d, props.nu_f);
        let direct = 0.75 * drag_coefficient(re) / d * props.rho_f / props.rho_p * 2.0 * -2.0;
        let a = drag_acceleration(up, &sample(Vec3::ZERO), d, &props);
        assert!((a.x() - direct).abs() <= 1e-12 * direct.abs());
    }

    #[test]
    fn drag_high_re_branch() {
        assert!((drag_coefficient(2000.0) - 0.44).abs() < 1e-15);
    }

    #[test]
    fn saturation_reference_values() {
        let a = saturation_vapor_density(293.15).unwrap();
        let b = saturation_vapor_density(273.15).unwrap();
        assert!((a / 0.0173 - 1.0).abs() < 0.05, "{a}");
        assert!((b / 0.00485 - 1.0).abs() < 0.05, "{b}");
        assert!(saturation_vapor_density(293.15).unwrap() > saturation_vapor_density(283.15).unwrap());
        assert!(saturation_vapor_density(199.0).is_err());
        assert!(saturation_vapor_density(351.0).is_err());
    }

    #[test]
    fn mass_transfer_examples() {
        let props = FluidProperties::air();
        let s = sample(Vec3::ZERO);
        assert_eq!(mass_transfer_rate(1e-5, &s, 1.0, &props).unwrap(), 0.0);
        let mut wet = s;
        wet.rho_v *= 1.01;
        assert!(mass_transfer_rate(1e-5, &wet, 1.0, &props).unwrap() > 0.0);
        // direct evaluation with rho_sat = 0.01, dS = 0.01
        let direct = 2.0 * PI * 2.5e-5 * 1e-5 * 0.01 * 0.01;
        assert!((direct - 1.5708e-13).abs() < 1e-17);
    }

    #[test]
    fn heat_transfer_signs() {
        let props = FluidProperties::air();
        let s = sample(Vec3::ZERO);
        assert_eq!(heat_transfer_rate(1e-5, 293.15, &s, 0.0, &props), 0.0);
        assert!(heat_transfer_rate(1e-5, 290.0, &s, 0.0, &props) > 0.0);
        // literal sign: evaporation warms the droplet
        let r = heat_transfer_rate(1e-5, 293.15, &s, -1e-15, &props);
        let m = particle_mass(1e-5, props.rho_p);
        assert!(r > 0.0);
        assert!((r - props.latent_heat * 1e-15 / (m * props.c_p_p)).abs() < 1e-12 * r);
    }
}
