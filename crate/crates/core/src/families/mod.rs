//! Exact solution families and escape scenarios.

mod central;
mod escape;
mod homographic;
mod isosceles;

pub use central::{
    euler_collinear, euler_configuration, euler_quintic, euler_ratio, lagrange_configuration, lagrange_equilateral,
    relative_equilibrium, CentralConfiguration,
};
pub use escape::{
    birkhoff_moeckel_check, birkhoff_moeckel_ensemble, ensemble_state, escape_scan, random_turnaround, BmCheck,
    BmEnsemble, EnergyNormalization, EscapeRow, EscapeScan, ROUNDING_MARGIN,
};
pub use homographic::{
    homographic_k, homographic_orbit, homographic_start, kepler_elements, HomographicOrbit, KeplerElements, RANGE_TOL,
};
pub use isosceles::{
    isosceles_embed, isosceles_energy, isosceles_potential, isosceles_propagate, isosceles_reduce, op5_scan,
    IsoscelesState, Op5Candidate, Op5Options, Op5Scan, Op5Side, UThreshold,
};
