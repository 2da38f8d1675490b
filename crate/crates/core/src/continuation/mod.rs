//! Newton's method with deflation, deflated continuation and
//! pseudo-arclength continuation with fold detection.

mod arclength;
mod deflated;
mod newton;

use std::fmt::Write as _;
use std::path::Path;

pub use arclength::{arclength_continue, arclength_continue_with, ArclengthOptions};
pub use deflated::{deflated_continuation, deflated_continuation_with, ComplementOptions, DcOptions};
pub use newton::{newton, newton_free, NewtonOptions, NewtonResult};

use crate::assembly::Discretization;
use crate::error::Result;
use crate::field::Field;

/// Scalar plotted on the vertical axis of a diagram.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum Diagnostic {
    #[default]
    H1Norm,
    /// Value of `u` at a point of the domain.
    PointValue([f64; 2]),
}

impl Diagnostic {
    pub fn describe(&self) -> String {
        match self {
            Diagnostic::H1Norm => "h1_norm(u)".into(),
            Diagnostic::PointValue([x, y]) => format!("u({x}, {y})"),
        }
    }

    pub fn evaluate(&self, d: &Discretization, u: &Field) -> f64 {
        match self {
            Diagnostic::H1Norm => d.h1_norm(u).unwrap_or(f64::NAN),
            Diagnostic::PointValue(p) => match d.mesh().locate(*p) {
                Some((t, l)) => {
                    let tri = d.mesh().triangles()[t];
                    (0..3).map(|a| l[a] * u[tri[a]]).sum()
                }
                None => f64::NAN,
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub lambda: f64,
    pub diagnostic: f64,
    pub u: Field,
    pub is_fold: bool,
}

#[derive(Clone, Debug)]
pub struct FoldPoint {
    pub lambda: f64,
    pub u: Field,
}

#[derive(Clone, Debug, Default)]
pub struct Branch {
    pub samples: Vec<Sample>,
    pub fold_points: Vec<FoldPoint>,
    /// Set when the corrector gave up before the requested number of steps.
    pub terminated_early: bool,
}

impl Branch {
    pub fn is_trivial(&self) -> bool {
        self.samples.iter().all(|s| s.u.max_abs() == 0.0)
    }

    pub fn lambda_range(&self) -> Option<(f64, f64)> {
        self.samples.iter().fold(None, |acc, s| match acc {
            None => Some((s.lambda, s.lambda)),
            Some((lo, hi)) => Some((lo.min(s.lambda), hi.max(s.lambda))),
        })
    }
}

/// A bifurcation from the trivial branch, located by a Moore-Spence solve.
#[derive(Clone, Debug, PartialEq)]
pub struct Birth {
    pub lambda: f64,
    pub multiplicity: usize,
    /// False when the Moore-Spence refinement failed and `lambda` is the
    /// eigenvalue estimate.
    pub refined: bool,
}

#[derive(Clone, Debug)]
pub struct Diagram {
    pub branches: Vec<Branch>,
    pub lambda_range: (f64, f64),
    pub diagnostic: Diagnostic,
    /// Bifurcation points on the trivial branch, sorted by `lambda`.
    pub births: Vec<Birth>,
}

impl Diagram {
    /// CSV with columns `branch_id, lambda, diagnostic, is_fold`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("branch_id,lambda,diagnostic,is_fold\n");
        for (id, b) in self.branches.iter().enumerate() {
            for s in &b.samples {
                let _ = writeln!(out, "{id},{},{},{}", s.lambda, s.diagnostic, s.is_fold);
            }
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Smallest bifurcation parameter off the trivial branch.
    pub fn first_birth(&self) -> Option<f64> {
        self.births.first().map(|b| b.lambda)
    }

    pub fn nontrivial_branches(&self) -> impl Iterator<Item = &Branch> {
        self.branches.iter().filter(|b| !b.is_trivial())
    }
}

#[cfg(test)]
mod tests;
