//! Iterative solvers: Jacobi-preconditioned conjugate gradients for the
//! quadratic problems and a spectral projected gradient method for convex
//! energies with simple constraints.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::dot;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgOptions {
    /// Relative residual target `‖r‖/‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            tol: 1e-9,
            max_iter: 5000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final relative residual (CG) or relative energy decrease (projected
    /// gradient).
    pub residual: f64,
}

/// Solves `A x = b` on the `free` nodes; entries of `x` on the other nodes
/// keep their initial values and enter as Dirichlet data.
///
/// `apply` must be symmetric positive definite on the free subspace.
pub fn pcg<F>(
    apply: F,
    b: &[f64],
    free: &[bool],
    diag: &[f64],
    mut x: Vec<f64>,
    opts: &CgOptions,
) -> Result<(Vec<f64>, SolveStats)>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    assert!(free.len() == n && diag.len() == n && x.len() == n);
    let restrict = |v: &mut [f64]| {
        v.par_iter_mut().zip(free.par_iter()).for_each(|(vi, &f)| {
            if !f {
                *vi = 0.0
            }
        })
    };
    // Right-hand side of the reduced system: b_f − A_fc x_c.
    let mut xc = x.clone();
    xc.par_iter_mut().zip(free.par_iter()).for_each(|(v, &f)| {
        if f {
            *v = 0.0
        }
    });
    let axc = apply(&xc);
    let mut rhs: Vec<f64> = b.iter().zip(&axc).map(|(bi, ai)| bi - ai).collect();
    restrict(&mut rhs);
    let rhs_norm = dot(&rhs, &rhs).sqrt();
    if rhs_norm == 0.0 {
        // Zero data: the solution on the free nodes is zero.
        x.par_iter_mut().zip(free.par_iter()).for_each(|(v, &f)| {
            if f {
                *v = 0.0
            }
        });
        return Ok((x, SolveStats::default()));
    }
    let ax = apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    restrict(&mut r);
    let inv_diag: Vec<f64> = diag
        .iter()
        .zip(free)
        .map(|(&d, &f)| if f && d > 0.0 { 1.0 / d } else { 0.0 })
        .collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt() / rhs_norm;
    let mut it = 0;
    while !(res <= opts.tol) {
        if it >= opts.max_iter {
            return Err(Error::NotConverged {
                iterations: it,
                residual: res,
            });
        }
        let mut ap = apply(&p);
        restrict(&mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotConverged {
                iterations: it,
                residual: res,
            });
        }
        let alpha = rz / pap;
        x.par_iter_mut()
            .zip(p.par_iter())
            .for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut()
            .zip(ap.par_iter())
            .for_each(|(ri, api)| *ri -= alpha * api);
        z.par_iter_mut()
            .zip(r.par_iter().zip(inv_diag.par_iter()))
            .for_each(|(zi, (ri, di))| *zi = ri * di);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut()
            .zip(z.par_iter())
            .for_each(|(pi, zi)| *pi = zi + beta * *pi);
        it += 1;
        res = dot(&r, &r).sqrt() / rhs_norm;
    }
    Ok((
        x,
        SolveStats {
            iterations: it,
            residual: res,
        },
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpgOptions {
    /// Stop once the relative energy decrease of a step falls below this.
    pub tol_decrease: f64,
    pub max_iter: usize,
}

impl Default for SpgOptions {
    fn default() -> Self {
        SpgOptions {
            tol_decrease: 1e-10,
            max_iter: 20_000,
        }
    }
}

/// Spectral projected gradient with Armijo backtracking: minimizes a convex
/// `energy` over the set onto which `project` maps.
pub fn spg<E, G, P>(
    energy: E,
    grad: G,
    project: P,
    mut x: Vec<f64>,
    opts: &SpgOptions,
) -> Result<(Vec<f64>, SolveStats)>
where
    E: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&mut [f64]),
{
    project(&mut x);
    let mut e = energy(&x);
    let mut g = grad(&x);
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if gmax == 0.0 {
        return Ok((x, SolveStats::default()));
    }
    let mut step = 1.0 / gmax;
    let mut small_steps = 0;
    let mut rel = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let mut trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
        project(&mut trial);
        let d: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let gd = dot(&g, &d);
        if gd >= 0.0 {
            // Projected gradient vanishes: stationary.
            return Ok((
                x,
                SolveStats {
                    iterations: it,
                    residual: 0.0,
                },
            ));
        }
        let mut t = 1.0;
        let (x_new, e_new) = loop {
            let cand: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            let ec = energy(&cand);
            if ec <= e + 1e-4 * t * gd {
                break (cand, ec);
            }
            t *= 0.5;
            if t < 1e-20 {
                return Err(Error::NotConverged {
                    iterations: it,
                    residual: rel,
                });
            }
        };
        let g_new = grad(&x_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        step = if sy > 0.0 {
            dot(&s, &s) / sy
        } else {
            step * 2.0
        };
        rel = (e - e_new) / e_new.abs().max(e.abs()).max(f64::MIN_POSITIVE);
        x = x_new;
        e = e_new;
        g = g_new;
        if rel < opts.tol_decrease {
            small_steps += 1;
            // A single short step can be a BB artefact; require a few in a row.
            if small_steps >= 3 {
                return Ok((
                    x,
                    SolveStats {
                        iterations: it,
                        residual: rel,
                    },
                ));
            }
        } else {
            small_steps = 0;
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iter,
        residual: rel,
    })
}
