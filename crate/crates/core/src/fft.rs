//! Linear convolution on uniform grids through zero-padded real FFTs.
//!
//! The grid of extents `m` is embedded in a padded box of extents
//! `P ≥ 2m − 1`, so the circular convolution restricted to the grid equals
//! the linear one. Axes are transformed one at a time; each pass moves the
//! transformed axis to the contiguous position so lines can be processed in
//! parallel without aliasing.

use std::sync::Arc;

use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

type C64 = Complex<f64>;

/// Smallest integer `≥ n` whose only prime factors are 2, 3 and 5.
pub fn next_fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

#[derive(Clone, Debug)]
struct Layout {
    /// Axis ids in memory order; the last one is contiguous.
    order: Vec<usize>,
    /// Extent of each axis id.
    extent: Vec<usize>,
}

impl Layout {
    fn len(&self) -> usize {
        self.order.iter().map(|&a| self.extent[a]).product()
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![0; self.extent.len()];
        let mut acc = 1;
        for &a in self.order.iter().rev() {
            s[a] = acc;
            acc *= self.extent[a];
        }
        s
    }

    /// Rearranges `data` so that axis `t` becomes contiguous, keeping only
    /// the first `keep[a]` indices of every axis.
    fn move_last(&self, data: &[C64], t: usize, keep: &[usize]) -> (Layout, Vec<C64>) {
        let mut order: Vec<usize> = self.order.iter().copied().filter(|&a| a != t).collect();
        order.push(t);
        let extent: Vec<usize> = (0..self.extent.len())
            .map(|a| keep[a].min(self.extent[a]))
            .collect();
        let out_layout = Layout { order, extent };
        let src_strides = self.strides();
        let line = out_layout.extent[t];
        let outer: Vec<usize> = out_layout.order[..out_layout.order.len() - 1].to_vec();
        let mut out = vec![C64::new(0.0, 0.0); out_layout.len()];
        let st = src_strides[t];
        out.par_chunks_mut(line)
            .enumerate()
            .for_each(|(li, chunk)| {
                let mut rem = li;
                let mut base = 0;
                for &a in outer.iter().rev() {
                    let e = out_layout.extent[a];
                    base += (rem % e) * src_strides[a];
                    rem /= e;
                }
                for (k, v) in chunk.iter_mut().enumerate() {
                    *v = data[base + k * st];
                }
            });
        (out_layout, out)
    }
}

/// Precomputed convolution with a fixed stencil on a fixed grid.
pub struct Convolver {
    dims: Vec<usize>,
    padded: Vec<usize>,
    spectrum: Vec<C64>,
    spec_layout: Layout,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for Convolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Convolver")
            .field("dims", &self.dims)
            .field("padded", &self.padded)
            .finish()
    }
}

impl Convolver {
    /// Builds the convolution `(S * u)(x) = Σ_y S(x − y) u(y)` over a grid of
    /// extents `dims`, with `stencil` evaluated at integer offsets.
    pub fn new<F>(dims: &[usize], stencil: F) -> Self
    where
        F: Fn(&[i64]) -> f64 + Sync,
    {
        assert!(!dims.is_empty() && dims.iter().all(|&m| m > 0));
        let d = dims.len();
        let padded: Vec<usize> = dims.iter().map(|&m| next_fast_len(2 * m - 1)).collect();
        let mut rp = RealFftPlanner::<f64>::new();
        let mut cp = FftPlanner::<f64>::new();
        let r2c = rp.plan_fft_forward(padded[d - 1]);
        let c2r = rp.plan_fft_inverse(padded[d - 1]);
        let fwd = padded.iter().map(|&p| cp.plan_fft_forward(p)).collect();
        let inv = padded.iter().map(|&p| cp.plan_fft_inverse(p)).collect();
        let mut conv = Convolver {
            dims: dims.to_vec(),
            padded: padded.clone(),
            spectrum: Vec::new(),
            spec_layout: Layout {
                order: vec![],
                extent: vec![],
            },
            r2c,
            c2r,
            fwd,
            inv,
        };
        // Stencil on the padded torus; offsets outside (−m, m) never reach the grid.
        let total: usize = padded.iter().product();
        let mut kern = vec![0.0; total];
        kern.par_chunks_mut(padded[d - 1])
            .enumerate()
            .for_each(|(li, line)| {
                let mut off = vec![0i64; d];
                let mut rem = li;
                let mut valid = true;
                for a in (0..d - 1).rev() {
                    let j = rem % padded[a];
                    rem /= padded[a];
                    match wrap(j, dims[a], padded[a]) {
                        Some(o) => off[a] = o,
                        None => valid = false,
                    }
                }
                if !valid {
                    return;
                }
                for (j, v) in line.iter_mut().enumerate() {
                    if let Some(o) = wrap(j, dims[d - 1], padded[d - 1]) {
                        off[d - 1] = o;
                        *v = stencil(&off);
                    }
                }
            });
        let (layout, spec) = conv.forward(&kern, &padded);
        conv.spectrum = spec;
        conv.spec_layout = layout;
        conv
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn padded(&self) -> &[usize] {
        &self.padded
    }

    /// Forward transform of a real array whose nonzero entries lie in the
    /// leading `src_dims` block of the padded box.
    fn forward(&self, src: &[f64], src_dims: &[usize]) -> (Layout, Vec<C64>) {
        let d = self.dims.len();
        let pl = self.padded[d - 1];
        let q = pl / 2 + 1;
        let mut extent = self.padded.clone();
        extent[d - 1] = q;
        let layout = Layout {
            order: (0..d).collect(),
            extent,
        };
        let mut spec = vec![C64::new(0.0, 0.0); layout.len()];
        let row_len = src_dims[d - 1];
        spec.par_chunks_mut(q).enumerate().for_each_init(
            || (vec![0.0; pl], self.r2c.make_scratch_vec()),
            |(buf, scratch), (li, out)| {
                // Decode the outer multi-index; skip rows outside the source block.
                let mut rem = li;
                let mut src_off = 0;
                let mut stride = row_len;
                for a in (0..d - 1).rev() {
                    let j = rem % self.padded[a];
                    rem /= self.padded[a];
                    if j >= src_dims[a] {
                        return;
                    }
                    src_off += j * stride;
                    stride *= src_dims[a];
                }
                let row = &src[src_off..src_off + row_len];
                if row.iter().all(|&v| v == 0.0) {
                    return;
                }
                buf[..row_len].copy_from_slice(row);
                buf[row_len..].fill(0.0);
                self.r2c
                    .process_with_scratch(buf, out, scratch)
                    .expect("r2c length");
            },
        );
        let mut layout = layout;
        let full = layout.extent.clone();
        for a in (0..d - 1).rev() {
            let (nl, mut data) = layout.move_last(&spec, a, &full);
            let plan = &self.fwd[a];
            data.par_chunks_mut(self.padded[a]).for_each_init(
                || vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()],
                |scratch, line| {
                    if line.iter().any(|c| c.re != 0.0 || c.im != 0.0) {
                        plan.process_with_scratch(line, scratch);
                    }
                },
            );
            layout = nl;
            spec = data;
        }
        (layout, spec)
    }

    /// Applies the convolution to `u`, given in row-major order over the grid.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let d = self.dims.len();
        let total_grid: usize = self.dims.iter().product();
        assert_eq!(u.len(), total_grid, "field length does not match grid");
        let (mut layout, mut spec) = self.forward(u, &self.dims);
        debug_assert_eq!(layout.order, self.spec_layout.order);
        spec.par_iter_mut()
            .zip(self.spectrum.par_iter())
            .for_each(|(a, b)| *a *= *b);
        // Inverse passes in reverse order; axis 0 is currently contiguous for d ≥ 2.
        let mut keep = layout.extent.clone();
        if d >= 2 {
            for a in 0..d - 1 {
                if a > 0 {
                    let (nl, data) = layout.move_last(&spec, a, &keep);
                    layout = nl;
                    spec = data;
                }
                let plan = &self.inv[a];
                spec.par_chunks_mut(self.padded[a]).for_each_init(
                    || vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()],
                    |scratch, line| plan.process_with_scratch(line, scratch),
                );
                // Only the grid part of this axis is needed from here on.
                keep[a] = self.dims[a];
            }
            let (nl, data) = layout.move_last(&spec, d - 1, &keep);
            layout = nl;
            spec = data;
        }
        debug_assert_eq!(layout.order, (0..d).collect::<Vec<_>>());
        let pl = self.padded[d - 1];
        let q = pl / 2 + 1;
        let ml = self.dims[d - 1];
        let scale = 1.0 / self.padded.iter().map(|&p| p as f64).product::<f64>();
        let mut out = vec![0.0; total_grid];
        out.par_chunks_mut(ml)
            .zip(spec.par_chunks_mut(q))
            .for_each_init(
                || (vec![0.0; pl], self.c2r.make_scratch_vec()),
                |(buf, scratch), (o, s)| {
                    // The imaginary parts of the DC and Nyquist bins are rounding noise.
                    s[0].im = 0.0;
                    if pl % 2 == 0 {
                        s[q - 1].im = 0.0;
                    }
                    self.c2r
                        .process_with_scratch(s, buf, scratch)
                        .expect("c2r length");
                    for (x, &y) in o.iter_mut().zip(buf.iter()) {
                        *x = y * scale;
                    }
                },
            );
        out
    }
}

fn wrap(j: usize, m: usize, p: usize) -> Option<i64> {
    if j < m {
        Some(j as i64)
    } else if j + m > p {
        Some(j as i64 - p as i64)
    } else {
        None
    }
}

/// Direct `O(N²)` evaluation of the same convolution; the oracle for tests.
pub fn convolve_direct<F>(dims: &[usize], u: &[f64], stencil: F) -> Vec<f64>
where
    F: Fn(&[i64]) -> f64 + Sync,
{
    let d = dims.len();
    let total: usize = dims.iter().product();
    let decode = |mut i: usize| {
        let mut idx = vec![0i64; d];
        for a in (0..d).rev() {
            idx[a] = (i % dims[a]) as i64;
            i /= dims[a];
        }
        idx
    };
    (0..total)
        .into_par_iter()
        .map(|x| {
            let xi = decode(x);
            let mut off = vec![0i64; d];
            let mut acc = 0.0;
            for (y, &uy) in u.iter().enumerate() {
                if uy == 0.0 {
                    continue;
                }
                let yi = decode(y);
                for a in 0..d {
                    off[a] = xi[a] - yi[a];
                }
                acc += stencil(&off) * uy;
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stencil(o: &[i64]) -> f64 {
        let r2: i64 = o.iter().map(|v| v * v).sum();
        if r2 == 0 {
            0.0
        } else {
            // Deliberately asymmetric to catch orientation mistakes.
            (r2 as f64).powf(-1.55) * (1.0 + 0.3 * o[0] as f64 / (r2 as f64).sqrt())
        }
    }

    fn check(dims: &[usize]) {
        let total: usize = dims.iter().product();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u: Vec<f64> = (0..total).map(|_| rng.random::<f64>() - 0.5).collect();
        let conv = Convolver::new(dims, stencil);
        let a = conv.apply(&u);
        let b = convolve_direct(dims, &u, stencil);
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12 * scale, "{x} vs {y}");
        }
    }

    #[test]
    fn fast_lengths() {
        assert_eq!(next_fast_len(7), 8);
        assert_eq!(next_fast_len(1905), 1920);
        assert_eq!(next_fast_len(31), 32);
        assert_eq!(next_fast_len(61), 64);
    }

    #[test]
    fn matches_direct_2d() {
        check(&[9, 14]);
        check(&[16, 16]);
        check(&[5, 4]);
    }

    #[test]
    fn matches_direct_3d() {
        check(&[5, 6, 7]);
    }

    #[test]
    fn matches_direct_1d() {
        check(&[13]);
    }
}
