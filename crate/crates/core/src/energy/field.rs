use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::UniformGrid;
use crate::error::{Error, Result};

/// Nodal values on a [`UniformGrid`].
///
/// With `exterior_zero` set, the field is understood to vanish at every
/// lattice node outside the grid box; energies then include the interactions
/// with that exterior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: UniformGrid,
    pub values: Vec<f64>,
    pub exterior_zero: bool,
}

const MAGIC: &[u8; 4] = b"FRLB";
const VERSION: u32 = 1;

impl ScalarField {
    pub fn new(grid: UniformGrid, values: Vec<f64>, exterior_zero: bool) -> Result<Self> {
        let f = ScalarField {
            grid,
            values,
            exterior_zero,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn zeros(grid: UniformGrid, exterior_zero: bool) -> Self {
        let values = vec![0.0; grid.len()];
        ScalarField {
            grid,
            values,
            exterior_zero,
        }
    }

    /// Samples `f` at the nodes.
    pub fn from_fn<F: Fn(&[f64; 3]) -> f64>(grid: UniformGrid, exterior_zero: bool, f: F) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.coord(i))).collect();
        ScalarField {
            grid,
            values,
            exterior_zero,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} nodes",
                self.values.len(),
                self.grid.len()
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite value at node {i}"
            )));
        }
        if self.exterior_zero {
            if let Some(m) = self.grid.mask(UniformGrid::EXTERIOR_COLLAR) {
                if let Some(i) = m.indices().into_iter().find(|&i| self.values[i] != 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "exterior-zero field is nonzero on the exterior collar at node {i}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Discrete `L^p` norm to the power `p`: `h^n Σ |u|^p`.
    pub fn lp_pow(&self, p: f64) -> f64 {
        let hn = self.grid.cell_volume();
        hn * crate::sum::tree_sum_by(self.values.len(), |i| self.values[i].abs().powf(p))
    }

    /// Writes the binary layout: magic `FRLB`, version, dimension, extents,
    /// spacing, box corners, exterior flag, then row-major little-endian
    /// `f64` values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let g = &self.grid;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(g.dim() as u32).to_le_bytes())?;
        for &m in &g.dims {
            w.write_all(&(m as u64).to_le_bytes())?;
        }
        w.write_all(&g.h.to_le_bytes())?;
        for v in g.origin.iter().chain(g.bbox_hi().iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&[self.exterior_zero as u8])?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads the layout written by [`ScalarField::write_binary`]. Masks are
    /// not part of the format.
    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let fmt = |m: &str| Error::Format(m.to_string());
        let mut buf4 = [0u8; 4];
        let mut buf8 = [0u8; 8];
        let read = |r: &mut R, b: &mut [u8]| r.read_exact(b).map_err(|e| fmt(&e.to_string()));
        read(&mut r, &mut buf4)?;
        if &buf4 != MAGIC {
            return Err(fmt("bad magic"));
        }
        read(&mut r, &mut buf4)?;
        if u32::from_le_bytes(buf4) != VERSION {
            return Err(fmt("unsupported version"));
        }
        read(&mut r, &mut buf4)?;
        let d = u32::from_le_bytes(buf4) as usize;
        if !(1..=3).contains(&d) {
            return Err(fmt("bad dimension"));
        }
        let mut dims = Vec::with_capacity(d);
        for _ in 0..d {
            read(&mut r, &mut buf8)?;
            dims.push(u64::from_le_bytes(buf8) as usize);
        }
        read(&mut r, &mut buf8)?;
        let h = f64::from_le_bytes(buf8);
        let mut corners = Vec::with_capacity(2 * d);
        for _ in 0..2 * d {
            read(&mut r, &mut buf8)?;
            corners.push(f64::from_le_bytes(buf8));
        }
        let mut flag = [0u8; 1];
        read(&mut r, &mut flag)?;
        let grid = UniformGrid::new(dims, h, corners[..d].to_vec())?;
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            read(&mut r, &mut buf8)?;
            values.push(f64::from_le_bytes(buf8));
        }
        ScalarField::new(grid, values, flag[0] != 0)
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_binary(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load_binary(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_binary(std::io::BufReader::new(file))
    }

    /// CSV with one row per node: coordinates then value.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let d = self.grid.dim();
        let mut header: Vec<&str> = ["x", "y", "z"][..d].to_vec();
        header.push("value");
        wr.write_record(&header)
            .map_err(|e| Error::Format(e.to_string()))?;
        for (i, v) in self.values.iter().enumerate() {
            let x = self.grid.coord(i);
            let mut rec: Vec<String> = x[..d].iter().map(|c| crate::io::fmt_f64(*c)).collect();
            rec.push(crate::io::fmt_f64(*v));
            wr.write_record(&rec)
                .map_err(|e| Error::Format(e.to_string()))?;
        }
        wr.flush().map_err(|e| Error::Format(e.to_string()))
    }
}
