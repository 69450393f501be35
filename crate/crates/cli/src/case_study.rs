//! Single-zone building heated by three heat pumps.
//!
//! The state is the indoor temperature in °C over an outdoor temperature of
//! 0 °C, since the model carries no exogenous term. One RC zone gives
//! `x(t+1) = a x(t) + b_r r(t) + b_u u(t) + b_v v(t)` with `a = exp(-dt/RC)`
//! and each input gain `(1 - a) R COP P`:
//!
//! - `r`: grid heat pump, on or off, scheduled by the reference;
//! - `v`: on-off heat pump on local solar power;
//! - `u`: modulating heat pump on local solar power, electrical kW.
//!
//! Per step the solar heat pumps must fit the available solar power:
//! `u + P_v v <= solar(t)`, together with `0 <= u <= P_u`.
//!
//! Default thermal values, chosen rather than measured:
//!
//! | parameter | value |
//! |---|---|
//! | R | 5 K/kW |
//! | C | 2.4e7 J/K |
//! | grid pump | 2.5 kW, COP 3 |
//! | modulating solar pump | 2 kW, COP 3 |
//! | on-off solar pump | 1 kW, COP 3 |
//! | solar | `min(2, 2.5 sin(pi (h - 6) / 12))` kW between 6:00 and 18:00 |
//! | comfort band | 20 to 24 °C, start at 21 °C |
//! | horizon | 48 steps of 30 minutes from midnight |
//! | flexibility window | from step 22 (11:00) |
//!
//! Outside the window the nominal schedule runs the grid pump on even steps;
//! inside it the nominal reference is off.

use binflex::milp::SolverOptions;
use binflex::reform::ReformOptions;
use serde::{Deserialize, Serialize};

use crate::config::{
    ConstraintsBlock, CostBlock, DynamicsBlock, ScenarioConfig, UncertaintyBlock, CONFIG_SCHEMA,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaseStudyParams {
    /// K/kW
    pub resistance: f64,
    /// J/K
    pub capacitance: f64,
    pub grid_kw: f64,
    pub grid_cop: f64,
    pub modulating_kw: f64,
    pub modulating_cop: f64,
    pub onoff_kw: f64,
    pub onoff_cop: f64,
    /// Peak of the sine profile, kW.
    pub solar_peak_kw: f64,
    /// Inverter limit, kW.
    pub solar_cap_kw: f64,
    pub temp_min: f64,
    pub temp_max: f64,
    pub x0: f64,
    pub horizon: usize,
    pub sampling_minutes: f64,
    pub window_start: usize,
    pub num_uncertain: usize,
    /// Nominal reference inside the window.
    pub window_reference: bool,
}

impl Default for CaseStudyParams {
    fn default() -> Self {
        Self {
            resistance: 5.0,
            capacitance: 2.4e7,
            grid_kw: 2.5,
            grid_cop: 3.0,
            modulating_kw: 2.0,
            modulating_cop: 3.0,
            onoff_kw: 1.0,
            onoff_cop: 3.0,
            solar_peak_kw: 2.5,
            solar_cap_kw: 2.0,
            temp_min: 20.0,
            temp_max: 24.0,
            x0: 21.0,
            horizon: 48,
            sampling_minutes: 30.0,
            window_start: 22,
            num_uncertain: 8,
            window_reference: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("case study parameter {field}: {message}")]
pub struct ParamError {
    pub field: &'static str,
    pub message: String,
}

fn bad(field: &'static str, message: impl Into<String>) -> ParamError {
    ParamError {
        field,
        message: message.into(),
    }
}

impl CaseStudyParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.resistance > 0.0 && self.capacitance > 0.0) {
            return Err(bad("resistance/capacitance", "RC must be positive"));
        }
        for (field, v) in [
            ("grid_kw", self.grid_kw),
            ("modulating_kw", self.modulating_kw),
            ("onoff_kw", self.onoff_kw),
            ("solar_peak_kw", self.solar_peak_kw),
            ("solar_cap_kw", self.solar_cap_kw),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(bad(field, format!("must be finite and nonnegative, got {v}")));
            }
        }
        for (field, v) in [
            ("grid_cop", self.grid_cop),
            ("modulating_cop", self.modulating_cop),
            ("onoff_cop", self.onoff_cop),
            ("sampling_minutes", self.sampling_minutes),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(field, format!("must be positive, got {v}")));
            }
        }
        if self.temp_min > self.temp_max {
            return Err(bad("temp_min", "above temp_max"));
        }
        if self.horizon == 0 {
            return Err(bad("horizon", "must be at least 1"));
        }
        if self.window_start + self.num_uncertain > self.horizon {
            return Err(bad("num_uncertain", "window runs past the horizon"));
        }
        Ok(())
    }

    /// `a = exp(-dt / RC)`.
    pub fn decay(&self) -> f64 {
        let dt = self.sampling_minutes * 60.0;
        let rc = self.resistance / 1000.0 * self.capacitance;
        (-dt / rc).exp()
    }

    /// Temperature gain per kW of electrical input at the given COP.
    fn gain(&self, cop: f64) -> f64 {
        (1.0 - self.decay()) * self.resistance * cop
    }

    /// Available solar power at step `t`, kW.
    pub fn solar(&self, t: usize) -> f64 {
        let hour = t as f64 * self.sampling_minutes / 60.0;
        let s = self.solar_peak_kw * (std::f64::consts::PI * (hour - 6.0) / 12.0).sin();
        s.clamp(0.0, self.solar_cap_kw)
    }

    pub fn nominal_reference(&self) -> Vec<bool> {
        let window = self.window_start..self.window_start + self.num_uncertain;
        (0..self.horizon)
            .map(|t| if window.contains(&t) { self.window_reference } else { t % 2 == 0 })
            .collect()
    }
}

pub fn generate_building_case(params: &CaseStudyParams) -> Result<ScenarioConfig, ParamError> {
    params.validate()?;
    let h = params.horizon;
    let r_bar = params
        .nominal_reference()
        .into_iter()
        .map(|b| if b { 1.0 } else { 0.0 })
        .collect();
    Ok(ScenarioConfig {
        schema: CONFIG_SCHEMA.to_string(),
        name: Some(format!("building case, |U| = {}", params.num_uncertain)),
        dynamics: DynamicsBlock {
            a: vec![vec![params.decay()]],
            b: vec![vec![params.gain(params.grid_cop) * params.grid_kw]],
            d: vec![vec![params.gain(params.modulating_cop)]],
            e: vec![vec![params.gain(params.onoff_cop) * params.onoff_kw]],
            x0: vec![params.x0],
            horizon: h,
            sampling_minutes: params.sampling_minutes,
        },
        constraints: ConstraintsBlock {
            g_x: vec![vec![1.0], vec![-1.0]],
            g_x_rhs: vec![params.temp_max, -params.temp_min],
            // u <= P_u, -u <= 0, u + P_v v <= solar(t)
            g_r: vec![vec![0.0]; 3],
            g_u: vec![vec![1.0], vec![-1.0], vec![1.0]],
            g_v: vec![vec![0.0], vec![0.0], vec![params.onoff_kw]],
            g_r_rhs: vec![params.modulating_kw, 0.0, params.solar_cap_kw],
            g_r_rhs_schedule: Some(
                (0..h)
                    .map(|t| vec![params.modulating_kw, 0.0, params.solar(t)])
                    .collect(),
            ),
        },
        cost: CostBlock::default(),
        uncertainty: UncertaintyBlock {
            indices: (params.window_start..params.window_start + params.num_uncertain).collect(),
            r_bar,
        },
        reform: ReformOptions::default(),
        solver: SolverOptions::default(),
        flip_model: None,
        output: None,
    })
}
