//! The two-dimensional perturbed-prox example: `A` diagonal, `B1 = I`,
//! `D(x) = (I + P) soft_{γλ}(x)` and the coordinate-swap group.
//!
//! Neither the observation `y` nor the starting point `x0` is given with the
//! printed matrices; both are fields here and the built-in sets use
//! `y = (2, 1)`, `x0 = (15, 15)`.

use std::fmt::Write as _;

use crate::denoisers::{soft_threshold, PerturbedProxDenoiser};
use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::grid::{DenseMatrix, Image};
use crate::groups::GroupSpec;
use crate::operators::{DiagonalOperator, Measurement};
use crate::solvers::{
    pnp_fb_observed, relative_change, Equivariance, Init, SolverConfig, SolverRun,
};

pub const ORACLE_TOL: f64 = 1e-12;
pub const ORACLE_MAX_ITERS: usize = 10_000_000;
pub const TOY_MAX_ITERS: usize = 10_000;
pub const TOY_STOP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyProblem {
    pub name: String,
    pub a_diag: [f64; 2],
    pub perturbation: [[f64; 2]; 2],
    /// Printed group average of `perturbation`, kept for comparison.
    pub printed_average: [[f64; 2]; 2],
    pub lambda: f64,
    pub gamma: f64,
    pub y: [f64; 2],
    pub x0: [f64; 2],
}

/// Built-in parameter sets 1 and 2.
pub fn toy_example(index: usize) -> Result<ToyProblem> {
    match index {
        1 => Ok(ToyProblem {
            name: "toy1".into(),
            a_diag: [2.0, 1.0],
            perturbation: [[-0.228, -0.023], [0.066, 0.1]],
            printed_average: [[-0.064, 0.022], [0.022, -0.064]],
            lambda: 10.0,
            gamma: 5e-2,
            y: [2.0, 1.0],
            x0: [15.0, 15.0],
        }),
        2 => Ok(ToyProblem {
            name: "toy2".into(),
            a_diag: [2.0, 5e-4],
            perturbation: [[0.0275, 0.0244], [0.0112, -0.1842]],
            printed_average: [[-0.0783, 0.0178], [0.0178, -0.0783]],
            lambda: 2.0,
            gamma: 0.2,
            y: [2.0, 1.0],
            x0: [15.0, 15.0],
        }),
        _ => Err(Error::InvalidArgument(format!("no toy example {index}"))),
    }
}

fn matrix(m: &[[f64; 2]; 2]) -> DenseMatrix {
    DenseMatrix::from_rows(&[m[0].to_vec(), m[1].to_vec()]).expect("2x2")
}

impl ToyProblem {
    pub fn operator(&self) -> DiagonalOperator {
        DiagonalOperator::from_values(&self.a_diag).expect("1x2 diagonal")
    }

    pub fn measurement(&self) -> Measurement {
        Measurement::Real(Image::from_slice_row(&self.y))
    }

    pub fn perturbation_matrix(&self) -> DenseMatrix {
        matrix(&self.perturbation)
    }

    pub fn printed_average_matrix(&self) -> DenseMatrix {
        matrix(&self.printed_average)
    }

    /// `(I + P) soft_{γλ}(x)`.
    pub fn denoiser(&self) -> Result<PerturbedProxDenoiser> {
        PerturbedProxDenoiser::new(
            DenseMatrix::identity(2),
            self.perturbation_matrix(),
            self.gamma * self.lambda,
        )
    }

    pub fn solver_config(&self, equivariant: bool) -> SolverConfig {
        SolverConfig {
            gamma: self.gamma,
            max_iters: TOY_MAX_ITERS,
            stop_tol: Some(TOY_STOP_TOL),
            init: Init::Given(Image::from_slice_row(&self.x0)),
            equivariance: if equivariant {
                Equivariance::Reynolds(GroupSpec::Flips)
            } else {
                Equivariance::None
            },
            policy: ExecPolicy::Sequential,
            ..SolverConfig::default()
        }
    }

    /// Minimizer of `½‖Ax − y‖² + λ‖x‖₁` by proximal gradient with step `1/L`.
    pub fn oracle_minimizer(&self) -> Result<[f64; 2]> {
        let lip = self.a_diag.iter().map(|a| a * a).fold(0.0, f64::max);
        let step = 1.0 / lip;
        let mut x = Image::zeros(1, 2);
        for _ in 0..ORACLE_MAX_ITERS {
            let next = Image::from_fn(1, 2, |_, j| {
                let a = self.a_diag[j];
                let v = x.get(0, j) - step * a * (a * x.get(0, j) - self.y[j]);
                soft_threshold(v, step * self.lambda)
            });
            let r = relative_change(&next, &x);
            x = next;
            if r < ORACLE_TOL {
                return Ok([x.get(0, 0), x.get(0, 1)]);
            }
        }
        Err(Error::Degenerate(
            "proximal-gradient oracle did not converge".into(),
        ))
    }

    /// Runs PnP and records every iterate, `x0` first.
    pub fn run(&self, equivariant: bool) -> Result<ToyRun> {
        let denoiser = self.denoiser()?;
        let mut trajectory = Vec::new();
        let run = pnp_fb_observed(
            &self.operator(),
            &self.measurement(),
            &denoiser,
            &self.solver_config(equivariant),
            None,
            &mut |_, x| trajectory.push([x.get(0, 0), x.get(0, 1)]),
        )?;
        Ok(ToyRun { trajectory, run })
    }
}

#[derive(Debug, Clone)]
pub struct ToyRun {
    pub trajectory: Vec<[f64; 2]>,
    pub run: SolverRun,
}

impl ToyRun {
    pub fn limit(&self) -> [f64; 2] {
        [self.run.x.get(0, 0), self.run.x.get(0, 1)]
    }

    pub fn distance_to(&self, point: [f64; 2]) -> f64 {
        let l = self.limit();
        ((l[0] - point[0]).powi(2) + (l[1] - point[1]).powi(2)).sqrt()
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.run.trace.last().map(|r| r.residual)
    }

    /// `iter,x1,x2`, one row per stored iterate.
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("iter,x1,x2\n");
        for (k, p) in self.trajectory.iter().enumerate() {
            let _ = writeln!(out, "{k},{},{}", p[0], p[1]);
        }
        out
    }
}
