//! Divergence-form elliptic operators `−div(K∇u)` on the periodic strip.
//!
//! The discretization is the Hessian of the discrete energy
//!
//! ```text
//! E(u) = ½ Σ_xedges cx (Δx u)² + ½ Σ_zedges cz (Δz u)² + Σ_cells cm a b,
//! ```
//!
//! with `cx = w_j K11/dx` (half weight on the two boundary rows),
//! `cz = dx K22/dz`, `cm = dx dz K12`, and `a`, `b` the cell averages of
//! the `x₁` and `x₂` difference quotients. It is symmetric, and a Neumann
//! flux on the bottom row appears as the natural boundary condition.

use num_complex::Complex64;

use super::{StripField, StripGrid};
use crate::error::{Error, Result};
use crate::par;
use crate::spectral::{forward_plan, inverse_plan};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BottomCondition {
    Dirichlet,
    /// Natural condition `K∇u·N = g` with `N = −e₂`.
    Neumann,
}

/// Nodal symmetric coefficient field `K = [[k11, k12], [k12, k22]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub k11: Vec<f64>,
    pub k12: Vec<f64>,
    pub k22: Vec<f64>,
}

impl Coefficients {
    pub fn identity(grid: &StripGrid) -> Self {
        let n = grid.len();
        Self {
            k11: vec![1.0; n],
            k12: vec![0.0; n],
            k22: vec![1.0; n],
        }
    }

    /// Checks nodal positive definiteness.
    pub fn check(&self, grid: &StripGrid) -> Result<()> {
        for idx in 0..grid.len() {
            let (a, b, c) = (self.k11[idx], self.k12[idx], self.k22[idx]);
            if !(a > 0.0 && c > 0.0 && a * c - b * b > 0.0) {
                let (i, j) = grid.ij(idx);
                return Err(Error::CoefficientDegeneracy { i, j });
            }
        }
        Ok(())
    }
}

/// Assembled edge and cell weights of the discrete operator.
pub struct Operator {
    grid: StripGrid,
    bottom: BottomCondition,
    cx: Vec<f64>,
    cz: Vec<f64>,
    cm: Vec<f64>,
    identity: bool,
}

impl Operator {
    pub fn new(grid: StripGrid, k: &Coefficients, bottom: BottomCondition) -> Result<Self> {
        k.check(&grid)?;
        let (nx, nz) = (grid.nx, grid.nz);
        let (dx, dz) = (grid.dx(), grid.dz());
        let at = |i: usize, j: usize| j * nx + i % nx;
        let cx = (0..grid.len())
            .map(|idx| {
                let (i, j) = grid.ij(idx);
                let w = if j == 0 || j == nz - 1 { 0.5 * dz } else { dz };
                w * 0.5 * (k.k11[at(i, j)] + k.k11[at(i + 1, j)]) / dx
            })
            .collect();
        let cz = (0..nx * (nz - 1))
            .map(|idx| {
                let (i, j) = (idx % nx, idx / nx);
                dx * 0.5 * (k.k22[at(i, j)] + k.k22[at(i, j + 1)]) / dz
            })
            .collect();
        let cm = (0..nx * (nz - 1))
            .map(|idx| {
                let (i, j) = (idx % nx, idx / nx);
                let avg = 0.25 * (k.k12[at(i, j)] + k.k12[at(i + 1, j)] + k.k12[at(i, j + 1)] + k.k12[at(i + 1, j + 1)]);
                dx * dz * avg
            })
            .collect();
        let identity = k.k11.iter().all(|&v| v == 1.0) && k.k22.iter().all(|&v| v == 1.0) && k.k12.iter().all(|&v| v == 0.0);
        Ok(Self {
            grid,
            bottom,
            cx,
            cz,
            cm,
            identity,
        })
    }

    pub fn identity(grid: StripGrid, bottom: BottomCondition) -> Self {
        Self::new(grid, &Coefficients::identity(&grid), bottom).expect("identity is positive definite")
    }

    pub fn grid(&self) -> &StripGrid {
        &self.grid
    }

    pub fn bottom(&self) -> BottomCondition {
        self.bottom
    }

    fn first_unknown_row(&self) -> usize {
        match self.bottom {
            BottomCondition::Dirichlet => 1,
            BottomCondition::Neumann => 0,
        }
    }

    pub(crate) fn is_unknown(&self, j: usize) -> bool {
        j >= self.first_unknown_row() && j < self.grid.nz - 1
    }

    /// Gradient of `E` at `u + slope·x₁` for every node (boundary rows
    /// included).
    pub fn apply(&self, u: &[f64], slope: f64) -> Vec<f64> {
        let g = &self.grid;
        let (nx, nz) = (g.nx, g.nz);
        let (dx, dz) = (g.dx(), g.dz());
        let s = slope * dx;
        let dxu = |i: usize, j: usize| u[j * nx + (i + 1) % nx] - u[j * nx + i] + s;
        let dzu = |i: usize, j: usize| u[(j + 1) * nx + i] - u[j * nx + i];
        // Cell fluxes (fx, fz) for cell (i, j) spanning rows j, j+1.
        let cells: Vec<(f64, f64)> = par::map_range(nx * (nz - 1), |idx| {
            let (i, j) = (idx % nx, idx / nx);
            let cm = self.cm[idx];
            if cm == 0.0 {
                return (0.0, 0.0);
            }
            let a = 0.5 * (dxu(i, j) + dxu(i, j + 1)) / dx;
            let b = 0.5 * (dzu(i, j) + dzu((i + 1) % nx, j)) / dz;
            (cm * b / (2.0 * dx), cm * a / (2.0 * dz))
        });
        par::map_range(nx * nz, |idx| {
            let (i, j) = (idx % nx, idx / nx);
            let im = (i + nx - 1) % nx;
            let mut out = self.cx[j * nx + im] * dxu(im, j) - self.cx[idx] * dxu(i, j);
            if j > 0 {
                out += self.cz[(j - 1) * nx + i] * dzu(i, j - 1);
                let (fx, fz) = cells[(j - 1) * nx + i];
                out += -fx + fz;
                let (fx, fz) = cells[(j - 1) * nx + im];
                out += fx + fz;
            }
            if j + 1 < nz {
                out -= self.cz[idx] * dzu(i, j);
                let (fx, fz) = cells[idx];
                out += -fx - fz;
                let (fx, fz) = cells[j * nx + im];
                out += fx - fz;
            }
            out
        })
    }

    fn mask(&self, v: &mut [f64]) {
        let nx = self.grid.nx;
        for (idx, x) in v.iter_mut().enumerate() {
            if !self.is_unknown(idx / nx) {
                *x = 0.0;
            }
        }
    }

    /// Solves the system for the unknown rows.
    ///
    /// `boundary` supplies the Dirichlet rows (other entries ignored), `rhs`
    /// the load vector on unknown rows (already integrated against the nodal
    /// weights), and `slope` an additive `slope·x₁` part of the solution.
    /// Returns the full nodal vector without the slope part.
    pub fn solve(&self, boundary: &[f64], slope: f64, rhs: &[f64], guess: Option<&[f64]>, tol: f64, max_iter: usize) -> Result<SolveOutcome> {
        let n = self.grid.len();
        let nx = self.grid.nx;
        let mut bnd = vec![0.0; n];
        for idx in 0..n {
            if !self.is_unknown(idx / nx) {
                bnd[idx] = boundary[idx];
            }
        }
        let lifted = self.apply(&bnd, slope);
        let mut b: Vec<f64> = rhs.iter().zip(&lifted).map(|(r, l)| r - l).collect();
        self.mask(&mut b);

        let fast = FastSolver::new(self.grid, self.bottom);
        if self.identity {
            let x = fast.solve(&b);
            let mut full = x;
            for idx in 0..n {
                if !self.is_unknown(idx / nx) {
                    full[idx] = bnd[idx];
                }
            }
            return Ok(SolveOutcome {
                values: full,
                iterations: 0,
                residual_history: vec![0.0],
            });
        }

        let mut x = match guess {
            Some(g) => {
                let mut g = g.to_vec();
                self.mask(&mut g);
                g
            }
            None => vec![0.0; n],
        };
        let b_norm = dot(&b, &b).sqrt();
        let mut history = Vec::new();
        if b_norm == 0.0 {
            history.push(0.0);
        } else {
            let mut r = {
                let ax = self.apply(&x, 0.0);
                let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
                self.mask(&mut r);
                r
            };
            let mut z = fast.solve(&r);
            let mut p = z.clone();
            let mut rz = dot(&r, &z);
            let mut converged = false;
            for _ in 0..max_iter {
                let rel = dot(&r, &r).sqrt() / b_norm;
                history.push(rel);
                if rel <= tol {
                    converged = true;
                    break;
                }
                let mut ap = self.apply(&p, 0.0);
                self.mask(&mut ap);
                let alpha = rz / dot(&p, &ap);
                for k in 0..n {
                    x[k] += alpha * p[k];
                    r[k] -= alpha * ap[k];
                }
                z = fast.solve(&r);
                let rz_new = dot(&r, &z);
                let beta = rz_new / rz;
                rz = rz_new;
                for k in 0..n {
                    p[k] = z[k] + beta * p[k];
                }
            }
            if !converged {
                let rel = dot(&r, &r).sqrt() / b_norm;
                history.push(rel);
                if rel > tol {
                    return Err(Error::CgNonConvergence {
                        iterations: max_iter,
                        residual_history: history,
                    });
                }
            }
        }
        for idx in 0..n {
            if !self.is_unknown(idx / nx) {
                x[idx] = bnd[idx];
            }
        }
        Ok(SolveOutcome {
            iterations: history.len().saturating_sub(1),
            values: x,
            residual_history: history,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact inverse of the identity-coefficient operator: FFT along `x₁`,
/// tridiagonal solves along `x₂` per mode.
pub struct FastSolver {
    grid: StripGrid,
    bottom: BottomCondition,
    eig: Vec<f64>,
}

impl FastSolver {
    pub fn new(grid: StripGrid, bottom: BottomCondition) -> Self {
        let nx = grid.nx;
        let dx = grid.dx();
        let eig = (0..nx)
            .map(|k| {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / nx as f64;
                (2.0 - 2.0 * theta.cos()) / dx
            })
            .collect();
        Self { grid, bottom, eig }
    }

    /// Solves on the unknown rows; other rows of the result are zero.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (nx, nz) = (self.grid.nx, self.grid.nz);
        let (dx, dz) = (self.grid.dx(), self.grid.dz());
        let first = match self.bottom {
            BottomCondition::Dirichlet => 1,
            BottomCondition::Neumann => 0,
        };
        let rows = nz - 1 - first;
        let fwd = forward_plan(nx);
        let spectra: Vec<Vec<Complex64>> = par::map_range(rows, |r| {
            let j = first + r;
            let mut row: Vec<Complex64> = b[j * nx..(j + 1) * nx].iter().map(|&v| Complex64::new(v, 0.0)).collect();
            fwd.process(&mut row);
            row
        });
        let cz = dx / dz;
        let columns: Vec<Vec<Complex64>> = par::map_range(nx, |k| {
            // Tridiagonal: sub = super = −cz, diag per row.
            let diag = |r: usize| {
                let j = first + r;
                let w = if j == 0 { 0.5 * dz } else { dz };
                let z = if j == 0 { cz } else { 2.0 * cz };
                w * self.eig[k] + z
            };
            let mut cp = vec![0.0; rows];
            let mut dp = vec![Complex64::new(0.0, 0.0); rows];
            for r in 0..rows {
                let (m, rhs) = if r == 0 {
                    (diag(0), spectra[0][k])
                } else {
                    (diag(r) + cz * cp[r - 1], spectra[r][k] + cz * dp[r - 1])
                };
                cp[r] = -cz / m;
                dp[r] = rhs / m;
            }
            let mut x = vec![Complex64::new(0.0, 0.0); rows];
            x[rows - 1] = dp[rows - 1];
            for r in (0..rows - 1).rev() {
                x[r] = dp[r] - cp[r] * x[r + 1];
            }
            x
        });
        let inv = inverse_plan(nx);
        let mut out = vec![0.0; self.grid.len()];
        let scale = 1.0 / nx as f64;
        let rows_out: Vec<Vec<f64>> = par::map_range(rows, |r| {
            let mut row: Vec<Complex64> = (0..nx).map(|k| columns[k][r]).collect();
            inv.process(&mut row);
            row.iter().map(|c| c.re * scale).collect()
        });
        for (r, row) in rows_out.into_iter().enumerate() {
            let j = first + r;
            out[j * nx..(j + 1) * nx].copy_from_slice(&row);
        }
        out
    }
}

/// Load vector `∫ f φ_ij` with the trapezoid weights of the operator.
pub fn load_vector(grid: &StripGrid, f: &StripField) -> Vec<f64> {
    let (dx, dz) = (grid.dx(), grid.dz());
    f.values
        .iter()
        .enumerate()
        .map(|(idx, v)| {
            let j = idx / grid.nx;
            let w = if j == 0 || j == grid.nz - 1 { 0.5 * dz } else { dz };
            v * dx * w
        })
        .collect()
}
