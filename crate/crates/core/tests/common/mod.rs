#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rsi_core::kalman::NoiseSpec;
use rsi_core::model::{box_to_halfspaces, enclosing_ball, BoxSet, InputLimit, LtiSystem, PolytopeSafety};

pub struct Plant {
    pub sys: LtiSystem<f64>,
    pub safety: PolytopeSafety<f64>,
    pub u_max: InputLimit<f64>,
    pub disturbance: BoxSet<f64>,
    pub gamma: f64,
    pub noise: NoiseSpec<f64>,
}

pub fn diag_noise(level: f64, n: usize) -> NoiseSpec<f64> {
    NoiseSpec::new(
        DMatrix::identity(n, n) * level,
        DMatrix::identity(n, n) * level,
        DMatrix::identity(n, n) * 1e-4,
        DMatrix::identity(n, n),
        0.05,
    )
    .unwrap()
}

/// Truck-trailer plant with the given P0 = Q level.
pub fn truck_trailer(noise_level: f64) -> Plant {
    let sys = LtiSystem::new(
        DMatrix::from_row_slice(2, 2, &[0.7247, 0.1636, -0.7361, -0.0278]),
        DMatrix::from_row_slice(2, 1, &[0.0612, 0.1636]),
    )
    .unwrap();
    let safety = box_to_halfspaces(&BoxSet::symmetric(DVector::from_vec(vec![2.0, 2.0])).unwrap()).unwrap();
    let disturbance = BoxSet::symmetric(DVector::from_vec(vec![0.02, 0.01])).unwrap();
    let gamma = enclosing_ball(&disturbance).radius_sq();
    Plant {
        sys,
        safety,
        u_max: InputLimit::new(4.0).unwrap(),
        disturbance,
        gamma,
        noise: diag_noise(noise_level, 2),
    }
}

/// B = 0, A = 0.5·I, unit box, no noise.
pub fn trivial() -> Plant {
    let sys = LtiSystem::new(DMatrix::identity(2, 2) * 0.5, DMatrix::zeros(2, 1)).unwrap();
    let safety = box_to_halfspaces(&BoxSet::symmetric(DVector::from_vec(vec![1.0, 1.0])).unwrap()).unwrap();
    Plant {
        sys,
        safety,
        u_max: InputLimit::new(1.0).unwrap(),
        disturbance: BoxSet::new(DVector::zeros(2), DVector::zeros(2)).unwrap(),
        gamma: 0.0,
        noise: diag_noise(0.0, 2),
    }
}
