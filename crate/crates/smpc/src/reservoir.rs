//! Three lakes in series: lake 1 drains into lake 2 and lake 2 into lake 3
//! through underground rivers fed by the controlled releases.
//!
//! State `x = [h1, h2, h3, r12, r23]` (levels in m, flows in m³/s), input
//! `u` the controlled outflows (m³/s), disturbance `w` rainfall per lake (mm
//! per step).

use cfcc_core::Distribution;
use nalgebra::{DMatrix, DVector};

use crate::problem::{Levels, SmpcProblem};
use crate::system::LinearSystem;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirParams {
    /// Surface areas `S_j` (m²).
    pub areas: [f64; 3],
    /// Fraction `η_j` of the release of lakes 1 and 2 reaching the river.
    pub conveyance: [f64; 2],
    /// Base outflows `ς_j` of lakes 1 and 2 into the rivers (m³/s).
    pub base_outflow: [f64; 2],
    /// Inflow `r_0` into lake 1 (m³/s).
    pub inflow: f64,
    /// Level rise per mm of rainfall (m/mm).
    pub rain_to_level: f64,
    /// Sampling interval (h).
    pub dt_hours: f64,
    pub rainfall: [Distribution; 3],
    pub y_ref: [f64; 3],
    pub y_max: [f64; 3],
    pub y_min: [f64; 3],
    pub u_max: f64,
    pub levels: Levels,
    pub horizon: usize,
    pub affine_feedback: bool,
}

impl Default for ReservoirParams {
    fn default() -> Self {
        let exp = |rate| Distribution::exponential(rate).expect("positive rate");
        Self {
            areas: [2.0e6, 1.5e6, 1.8e6],
            conveyance: [0.9, 0.9],
            base_outflow: [20.0, 15.0],
            inflow: 200.0,
            rain_to_level: 0.01,
            dt_hours: 1.0,
            rainfall: [exp(1.0), exp(0.5), exp(2.0)],
            y_ref: [4.5, 4.8, 4.2],
            y_max: [5.3, 5.5, 5.0],
            y_min: [4.0, 4.2, 3.5],
            u_max: 400.0,
            levels: Levels::uniform(0.95),
            horizon: 10,
            affine_feedback: true,
        }
    }
}

impl ReservoirParams {
    fn dt_seconds(&self) -> f64 {
        self.dt_hours * 3600.0
    }

    pub fn system(&self) -> Result<LinearSystem> {
        let dt = self.dt_seconds();
        let [s1, s2, s3] = self.areas;
        let [eta1, eta2] = self.conveyance;
        let [vs1, vs2] = self.base_outflow;
        #[rustfmt::skip]
        let a = DMatrix::from_row_slice(5, 5, &[
            1.0, 0.0, 0.0, 0.0,     0.0,
            0.0, 1.0, 0.0, dt / s2, 0.0,
            0.0, 0.0, 1.0, 0.0,     dt / s3,
            0.0, 0.0, 0.0, 0.0,     0.0,
            0.0, 0.0, 0.0, 0.0,     0.0,
        ]);
        #[rustfmt::skip]
        let b = DMatrix::from_row_slice(5, 3, &[
            -dt / s1, 0.0,      0.0,
            0.0,      -dt / s2, 0.0,
            0.0,      0.0,      -dt / s3,
            eta1,     0.0,      0.0,
            0.0,      eta2,     0.0,
        ]);
        let mut g = DMatrix::zeros(5, 3);
        for j in 0..3 {
            g[(j, j)] = self.rain_to_level;
        }
        let c = DVector::from_column_slice(&[dt / s1 * (self.inflow - vs1), -dt / s2 * vs2, 0.0, vs1, vs2]);
        let mut output = DMatrix::zeros(3, 5);
        for j in 0..3 {
            output[(j, j)] = 1.0;
        }
        LinearSystem::new(a, b, g, vec![c], output, self.rainfall.to_vec())
    }

    pub fn problem(&self) -> Result<SmpcProblem> {
        SmpcProblem::new(
            self.system()?,
            self.horizon,
            self.affine_feedback,
            self.y_ref.to_vec(),
            self.y_max.to_vec(),
            self.y_min.to_vec(),
            vec![0.0; 3],
            vec![self.u_max; 3],
            self.levels,
        )
    }

    /// Releases that hold all levels without rain.
    pub fn steady_releases(&self) -> [f64; 3] {
        let [eta1, eta2] = self.conveyance;
        let [vs1, vs2] = self.base_outflow;
        let u1 = self.inflow - vs1;
        let u2 = eta1 * u1 + vs1 - vs2;
        let u3 = eta2 * u2 + vs2;
        [u1, u2, u3]
    }

    /// State with the given levels and the river flows of the steady
    /// releases.
    pub fn state(&self, levels: [f64; 3]) -> Vec<f64> {
        let u = self.steady_releases();
        let [eta1, eta2] = self.conveyance;
        let [vs1, vs2] = self.base_outflow;
        vec![levels[0], levels[1], levels[2], eta1 * u[0] + vs1, eta2 * u[1] + vs2]
    }
}
