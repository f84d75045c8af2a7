use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Angular profile `a` of a homogeneous kernel. Every profile is even,
/// `a(−ω) = a(ω)`, so the kernels are symmetric.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum Anisotropy {
    /// `a ≡ 1`.
    #[default]
    Isotropic,
    /// `a(ω) = 1 + amp·ω₁²`, i.e. `1 + amp·cos²θ` in the plane.
    CosSquared { amp: f64 },
}

impl Anisotropy {
    pub fn eval(&self, unit: &[f64]) -> f64 {
        match self {
            Anisotropy::Isotropic => 1.0,
            Anisotropy::CosSquared { amp } => 1.0 + amp * unit[0] * unit[0],
        }
    }

    /// Range `[min a, max a]` over the sphere.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            Anisotropy::Isotropic => (1.0, 1.0),
            Anisotropy::CosSquared { amp } => {
                if amp >= 0.0 {
                    (1.0, 1.0 + amp)
                } else {
                    (1.0 + amp, 1.0)
                }
            }
        }
    }
}

/// `K(z) = a(z/|z|)·|z|^{−(n+sp)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FractionalKernel {
    pub n: usize,
    pub s: f64,
    pub p: f64,
    pub alpha: f64,
    pub anisotropy: Anisotropy,
}

impl Default for FractionalKernel {
    fn default() -> Self {
        FractionalKernel {
            n: 2,
            s: 0.55,
            p: 2.0,
            alpha: 1.0,
            anisotropy: Anisotropy::Isotropic,
        }
    }
}

impl FractionalKernel {
    /// Isotropic kernel with `α = 1`.
    pub fn isotropic(n: usize, s: f64, p: f64) -> Result<Self> {
        Self::new(n, s, p, 1.0, Anisotropy::Isotropic)
    }

    pub fn new(n: usize, s: f64, p: f64, alpha: f64, anisotropy: Anisotropy) -> Result<Self> {
        let k = FractionalKernel {
            n,
            s,
            p,
            alpha,
            anisotropy,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(2..=3).contains(&self.n) {
            return bad(format!("kernel dimension n = {} (supported: 2, 3)", self.n));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return bad(format!("s = {} outside (0,1)", self.s));
        }
        if !(self.p > 1.0 && self.p.is_finite()) {
            return bad(format!("p = {} outside (1,∞)", self.p));
        }
        let sp = self.sp();
        if !(sp > 1.0 && sp < self.n as f64) {
            return bad(format!("sp = {sp} outside (1, n)"));
        }
        if !(self.alpha >= 1.0) {
            return bad(format!("alpha = {} < 1", self.alpha));
        }
        let (lo, hi) = self.anisotropy.range();
        if lo < 1.0 / self.alpha - 1e-15 || hi > self.alpha + 1e-15 {
            return bad(format!(
                "anisotropy range [{lo}, {hi}] not within [1/alpha, alpha] for alpha = {}",
                self.alpha
            ));
        }
        Ok(())
    }

    pub fn sp(&self) -> f64 {
        self.s * self.p
    }

    /// Homogeneity exponent `n + sp`.
    pub fn exponent(&self) -> f64 {
        self.n as f64 + self.sp()
    }

    /// Capacity scaling exponent `n − sp`.
    pub fn capacity_exponent(&self) -> f64 {
        self.n as f64 - self.sp()
    }

    /// Obstacle scale exponent `n/(n − sp)`.
    pub fn obstacle_exponent(&self) -> f64 {
        self.n as f64 / self.capacity_exponent()
    }

    pub fn is_isotropic(&self) -> bool {
        matches!(self.anisotropy, Anisotropy::Isotropic)
    }

    /// `K(z)`; errors at `z = 0`.
    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        let r2: f64 = z.iter().map(|v| v * v).sum();
        if r2 == 0.0 {
            return Err(Error::KernelSingularity);
        }
        Ok(self.eval_nonzero(z, r2))
    }

    /// `K(z)` for `|z|² = r2 > 0`.
    #[inline]
    pub(crate) fn eval_nonzero(&self, z: &[f64], r2: f64) -> f64 {
        let radial = r2.powf(-0.5 * self.exponent());
        match self.anisotropy {
            Anisotropy::Isotropic => radial,
            Anisotropy::CosSquared { amp } => radial * (1.0 + amp * z[0] * z[0] / r2),
        }
    }

    /// `K(h·o)` at integer offset `o`, zero at the origin.
    #[inline]
    pub(crate) fn eval_offset(&self, o: &[i64], h: f64) -> f64 {
        let mut z = [0.0; 3];
        let mut r2 = 0.0;
        for (a, &c) in o.iter().enumerate() {
            z[a] = c as f64 * h;
            r2 += z[a] * z[a];
        }
        if r2 == 0.0 {
            0.0
        } else {
            self.eval_nonzero(&z[..o.len()], r2)
        }
    }

    /// `∫_{S^{n−1}} a dσ`.
    pub fn sphere_integral(&self) -> f64 {
        match (self.n, &self.anisotropy) {
            (2, Anisotropy::Isotropic) => 2.0 * std::f64::consts::PI,
            (3, Anisotropy::Isotropic) => 4.0 * std::f64::consts::PI,
            // The mean of ω₁² over S^{n−1} is 1/n.
            (n, Anisotropy::CosSquared { amp }) => {
                let area = if n == 2 {
                    2.0 * std::f64::consts::PI
                } else {
                    4.0 * std::f64::consts::PI
                };
                area * (1.0 + amp / n as f64)
            }
            _ => unreachable!("validated dimension"),
        }
    }

    /// Lattice sum `Σ_{k ∈ Z^n∖0} K(h·k)`.
    ///
    /// Terms with `|k| ≤ R₀` are summed directly; the remainder is replaced
    /// by its integral `(∫_S a)·R₀^{−sp}/sp`, scaled by `h^{−(n+sp)}`.
    pub fn lattice_sum(&self, h: f64) -> f64 {
        let r0: i64 = if self.n == 2 { 400 } else { 60 };
        let r0sq = r0 * r0;
        let unit = |o: &[i64]| self.eval_offset(o, 1.0);
        let direct: f64 = if self.n == 2 {
            crate::sum::par_rows_sum((2 * r0 + 1) as usize, |row| {
                let i = row as i64 - r0;
                let mut acc = 0.0;
                for j in -r0..=r0 {
                    if i * i + j * j <= r0sq {
                        acc += unit(&[i, j]);
                    }
                }
                acc
            })
        } else {
            crate::sum::par_rows_sum((2 * r0 + 1) as usize, |row| {
                let i = row as i64 - r0;
                let mut acc = 0.0;
                for j in -r0..=r0 {
                    for l in -r0..=r0 {
                        if i * i + j * j + l * l <= r0sq {
                            acc += unit(&[i, j, l]);
                        }
                    }
                }
                acc
            })
        };
        let tail = self.sphere_integral() * (r0 as f64).powf(-self.sp()) / self.sp();
        (direct + tail) * h.powf(-self.exponent())
    }
}

/// `K(z)`; free-function form of [`FractionalKernel::eval`].
pub fn kernel_eval(k: &FractionalKernel, z: &[f64]) -> Result<f64> {
    k.eval(z)
}

/// Volume of the unit ball in `R^n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 / 3.0 * std::f64::consts::PI,
        _ => {
            let nf = n as f64;
            std::f64::consts::PI.powf(nf / 2.0) / gamma_half_integer(nf / 2.0 + 1.0)
        }
    }
}

fn gamma_half_integer(x: f64) -> f64 {
    // Γ on positive integers and half-integers.
    if (x - x.round()).abs() < 1e-12 {
        (1..x.round() as u64).map(|k| k as f64).product()
    } else {
        let mut g = std::f64::consts::PI.sqrt();
        let mut t = 0.5;
        while t < x - 0.25 {
            g *= t;
            t += 1.0;
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let k = FractionalKernel::default();
        assert_eq!(k.eval(&[1.0, 0.0]).unwrap(), 1.0);
        let ratio = k.eval(&[0.6, 0.8]).unwrap() / k.eval(&[0.3, 0.4]).unwrap();
        assert!((ratio - 2f64.powf(-3.1)).abs() < 1e-15);
        let a =
            FractionalKernel::new(2, 0.55, 2.0, 1.5, Anisotropy::CosSquared { amp: 0.5 }).unwrap();
        assert!((a.eval(&[1.0, 0.0]).unwrap() - 1.5).abs() < 1e-15);
        assert!(matches!(k.eval(&[0.0, 0.0]), Err(Error::KernelSingularity)));
    }

    #[test]
    fn validation() {
        assert!(FractionalKernel::isotropic(2, 0.4, 2.0).is_err()); // sp < 1
        assert!(FractionalKernel::isotropic(2, 0.55, 1.0).is_err());
        assert!(
            FractionalKernel::new(2, 0.55, 2.0, 1.2, Anisotropy::CosSquared { amp: 0.5 }).is_err()
        );
        assert!(FractionalKernel::isotropic(3, 0.55, 2.0).is_ok());
    }

    #[test]
    fn lattice_sum_converged() {
        // Oracle: brute force to a larger radius plus the same tail rule.
        let k = FractionalKernel::default();
        let s = k.lattice_sum(1.0);
        let r: i64 = 1200;
        let mut direct = 0.0;
        for i in -r..=r {
            for j in -r..=r {
                if (i, j) != (0, 0) && i * i + j * j <= r * r {
                    direct += ((i * i + j * j) as f64).powf(-1.55);
                }
            }
        }
        let oracle = direct + 2.0 * std::f64::consts::PI * (r as f64).powf(-1.1) / 1.1;
        assert!((s - oracle).abs() / oracle < 1e-7, "{s} vs {oracle}");
        assert!((s - 8.477172).abs() < 1e-5);
        // Scaling in h.
        assert!((k.lattice_sum(0.5) / s - 2f64.powf(3.1)).abs() < 1e-12);
    }

    #[test]
    fn sphere_integral_by_quadrature() {
        let k =
            FractionalKernel::new(2, 0.55, 2.0, 1.5, Anisotropy::CosSquared { amp: 0.5 }).unwrap();
        let m = 4096;
        let q: f64 = (0..m)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / m as f64;
                k.anisotropy.eval(&[t.cos(), t.sin()])
            })
            .sum::<f64>()
            * 2.0
            * std::f64::consts::PI
            / m as f64;
        assert!((q - k.sphere_integral()).abs() < 1e-12);
    }

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((unit_ball_volume(4) - std::f64::consts::PI.powi(2) / 2.0).abs() < 1e-14);
        assert!((unit_ball_volume(5) - 8.0 * std::f64::consts::PI.powi(2) / 15.0).abs() < 1e-14);
    }
}
