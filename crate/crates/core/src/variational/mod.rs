//! Radial finite element discretization of `Q_λ`, its constrained
//! minimization, the first weighted eigenvalue and solution reconstruction.

mod fem;
mod minimize;

pub use fem::{assemble, dirichlet_energy, DiscreteFunction, Forms, QForm};
pub use minimize::{
    annulus_solve, eigen_lambda1_div, eigen_on, energy, minimize_on, minimize_s_lambda, pde_residual, q_lambda,
    reconstruct_on, reconstruct_solution, s_lambda_curve, AnnulusReport, CurvePoint, EigenReport, MinimizeOptions,
    MinimizeReport, Reconstruction, SingleRun, Verdict, CONCENTRATING_RATIO, STABLE_RATIO,
};

pub(crate) use fem::{element_matrices, free_range, restrict};
