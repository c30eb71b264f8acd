//! Uniform periodic grids on the flat torus T^n (n ≤ 3) and scalar fields
//! living on them, with 4th-order centered finite-difference stencils and a
//! small binary/CSV field format.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Vec3;

const FIELD_MAGIC: &[u8; 4] = b"CFLD";
const FIELD_VERSION: u32 = 1;

/// Uniform periodic grid: `dims[a]` nodes along axis `a` with period
/// `periods[a]`, spacing `periods[a] / dims[a]`. Unused axes have one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub n: usize,
    pub dims: [usize; 3],
    pub periods: [f64; 3],
    pub spacing: [f64; 3],
}

impl Grid {
    pub fn new(n: usize, points: &[usize], periods: &[f64]) -> Result<Grid> {
        if n == 0 || n > 3 {
            return Err(Error::InvalidArgument(format!(
                "spatial dimension must be 1, 2 or 3, got {n}"
            )));
        }
        if points.len() != n || periods.len() != n {
            return Err(Error::InvalidArgument(
                "points and periods must have one entry per axis".into(),
            ));
        }
        let mut dims = [1usize; 3];
        let mut pers = [1.0f64; 3];
        let mut spacing = [1.0f64; 3];
        for a in 0..n {
            if points[a] < 16 || points[a] % 2 != 0 {
                return Err(Error::InvalidArgument(format!(
                    "points per axis must be even and at least 16, got {} on axis {a}",
                    points[a]
                )));
            }
            if !(periods[a] > 0.0) || !periods[a].is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "period on axis {a} must be positive, got {}",
                    periods[a]
                )));
            }
            dims[a] = points[a];
            pers[a] = periods[a];
            spacing[a] = periods[a] / points[a] as f64;
        }
        Ok(Grid {
            n,
            dims,
            periods: pers,
            spacing,
        })
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate volume element ΠΔξ_a.
    pub fn cell_volume(&self) -> f64 {
        (0..self.n).map(|a| self.spacing[a]).product()
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.n).map(|a| self.spacing[a]).fold(f64::MAX, f64::min)
    }

    /// Row-major index with the last axis fastest.
    #[inline]
    pub fn index(&self, i: [usize; 3]) -> usize {
        (i[0] * self.dims[1] + i[1]) * self.dims[2] + i[2]
    }

    #[inline]
    pub fn multi_index(&self, idx: usize) -> [usize; 3] {
        let i2 = idx % self.dims[2];
        let rest = idx / self.dims[2];
        let i1 = rest % self.dims[1];
        let i0 = rest / self.dims[1];
        [i0, i1, i2]
    }

    /// Coordinates of a node.
    pub fn coords(&self, idx: usize) -> Vec3 {
        let mi = self.multi_index(idx);
        let mut x = [0.0; 3];
        for a in 0..self.n {
            x[a] = mi[a] as f64 * self.spacing[a];
        }
        x
    }

    /// Index of the node shifted by `offset` nodes along `axis`, with wrap.
    #[inline]
    pub fn shift(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let mut mi = self.multi_index(idx);
        let m = self.dims[axis] as isize;
        let pos = (mi[axis] as isize + offset).rem_euclid(m);
        mi[axis] = pos as usize;
        self.index(mi)
    }

    /// Grid with every axis refined by the given factor.
    pub fn refined(&self, factor: usize) -> Result<Grid> {
        let points: Vec<usize> = (0..self.n).map(|a| self.dims[a] * factor).collect();
        let periods: Vec<f64> = (0..self.n).map(|a| self.periods[a]).collect();
        Grid::new(self.n, &points, &periods)
    }
}

/// Scalar values, one per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "value count {} does not match node count {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "scalar field contains non-finite values".into(),
            ));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> ScalarField {
        let len = grid.len();
        ScalarField {
            grid,
            values: vec![value; len],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&Vec3) -> f64) -> ScalarField {
        let values = (0..grid.len()).map(|i| f(&grid.coords(i))).collect();
        ScalarField { grid, values }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Writes the documented little-endian binary layout:
    /// magic `CFLD`, version u32, n u32, dims 3×u64, periods 3×f64, then
    /// row-major f64 node values (last axis fastest).
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::with_capacity(48 + 8 * self.values.len());
        buf.extend_from_slice(FIELD_MAGIC);
        buf.extend_from_slice(&FIELD_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.grid.n as u32).to_le_bytes());
        for a in 0..3 {
            buf.extend_from_slice(&(self.grid.dims[a] as u64).to_le_bytes());
        }
        for a in 0..3 {
            buf.extend_from_slice(&self.grid.periods[a].to_le_bytes());
        }
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<ScalarField> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 60 || &bytes[0..4] != FIELD_MAGIC {
            return Err(Error::Parse(format!(
                "{} is not a field file (bad magic)",
                path.display()
            )));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        if u32_at(4) != FIELD_VERSION {
            return Err(Error::Parse("unsupported field file version".into()));
        }
        let n = u32_at(8) as usize;
        let mut points = Vec::new();
        let mut periods = Vec::new();
        for a in 0..n {
            points.push(u64_at(12 + 8 * a) as usize);
            periods.push(f64_at(36 + 8 * a));
        }
        let grid = Grid::new(n, &points, &periods)?;
        let data_off = 60;
        if bytes.len() != data_off + 8 * grid.len() {
            return Err(Error::Parse("field file length mismatch".into()));
        }
        let values: Vec<f64> = (0..grid.len())
            .map(|i| f64_at(data_off + 8 * i))
            .collect();
        ScalarField::new(grid, values)
    }

    /// CSV alternative: a `# n,N_i,L_i` header line, then one row-major value
    /// per line.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let dims: Vec<String> = (0..self.grid.n)
            .map(|a| self.grid.dims[a].to_string())
            .collect();
        let pers: Vec<String> = (0..self.grid.n)
            .map(|a| format!("{:.17e}", self.grid.periods[a]))
            .collect();
        out.push_str(&format!(
            "# n={} dims={} periods={}\n",
            self.grid.n,
            dims.join("x"),
            pers.join("x")
        ));
        for v in &self.values {
            out.push_str(&format!("{:.17e}\n", v));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// 4th-order centered periodic first derivative along `axis`.
pub fn deriv(field: &ScalarField, axis: usize) -> ScalarField {
    let grid = field.grid;
    assert!(axis < grid.n, "axis {axis} out of range");
    let inv = 1.0 / (12.0 * grid.spacing[axis]);
    let mut values = vec![0.0; grid.len()];
    stencil_apply(&grid, axis, &field.values, &mut values, |fm2, fm1, _f0, fp1, fp2| {
        (8.0 * (fp1 - fm1) + (fm2 - fp2)) * inv
    });
    ScalarField { grid, values }
}

/// 4th-order second derivative: the centered 5-point stencil when
/// `axis_a == axis_b`, otherwise the composition of first derivatives taken
/// in a canonical axis order so that the result is bit-identical under
/// argument exchange.
pub fn deriv2(field: &ScalarField, axis_a: usize, axis_b: usize) -> ScalarField {
    let grid = field.grid;
    assert!(axis_a < grid.n && axis_b < grid.n, "axis out of range");
    if axis_a == axis_b {
        let inv = 1.0 / (12.0 * grid.spacing[axis_a] * grid.spacing[axis_a]);
        let mut values = vec![0.0; grid.len()];
        stencil_apply(&grid, axis_a, &field.values, &mut values, |fm2, fm1, f0, fp1, fp2| {
            (16.0 * ((fp1 - f0) + (fm1 - f0)) - ((fp2 - f0) + (fm2 - f0))) * inv
        });
        return ScalarField { grid, values };
    }
    let (lo, hi) = if axis_a < axis_b {
        (axis_a, axis_b)
    } else {
        (axis_b, axis_a)
    };
    deriv(&deriv(field, hi), lo)
}

fn stencil_apply(
    grid: &Grid,
    axis: usize,
    input: &[f64],
    output: &mut [f64],
    f: impl Fn(f64, f64, f64, f64, f64) -> f64,
) {
    let m = grid.dims[axis];
    // stride of one step along `axis` in the flat layout
    let stride = match axis {
        0 => grid.dims[1] * grid.dims[2],
        1 => grid.dims[2],
        _ => 1,
    };
    let line_count = grid.len() / m;
    for line in 0..line_count {
        // base index of this line: enumerate all nodes with axis-index 0
        let base = line_base(grid, axis, line);
        for k in 0..m {
            let at = |off: isize| {
                let kk = (k as isize + off).rem_euclid(m as isize) as usize;
                input[base + kk * stride]
            };
            output[base + k * stride] = f(at(-2), at(-1), at(0), at(1), at(2));
        }
    }
}

fn line_base(grid: &Grid, axis: usize, line: usize) -> usize {
    // enumerate multi-indices with the `axis` component fixed to zero
    let (d1, d2) = (grid.dims[1], grid.dims[2]);
    match axis {
        0 => {
            let i1 = line / d2;
            let i2 = line % d2;
            i1 * d2 + i2
        }
        1 => {
            let i0 = line / d2;
            let i2 = line % d2;
            i0 * d1 * d2 + i2
        }
        _ => {
            let i0 = line / d1;
            let i1 = line % d1;
            (i0 * d1 + i1) * d2
        }
    }
}

/// 2nd-order centered stencils used by the independent embedding oracle.
pub fn deriv_2nd_order(field: &ScalarField, axis: usize) -> ScalarField {
    let grid = field.grid;
    assert!(axis < grid.n);
    let inv = 1.0 / (2.0 * grid.spacing[axis]);
    let mut values = vec![0.0; grid.len()];
    stencil_apply(&grid, axis, &field.values, &mut values, |_, fm1, _f0, fp1, _| {
        (fp1 - fm1) * inv
    });
    ScalarField { grid, values }
}

pub fn deriv2_2nd_order(field: &ScalarField, axis_a: usize, axis_b: usize) -> ScalarField {
    let grid = field.grid;
    assert!(axis_a < grid.n && axis_b < grid.n);
    if axis_a == axis_b {
        let inv = 1.0 / (grid.spacing[axis_a] * grid.spacing[axis_a]);
        let mut values = vec![0.0; grid.len()];
        stencil_apply(&grid, axis_a, &field.values, &mut values, |_, fm1, f0, fp1, _| {
            ((fp1 - f0) + (fm1 - f0)) * inv
        });
        return ScalarField { grid, values };
    }
    let (lo, hi) = if axis_a < axis_b {
        (axis_a, axis_b)
    } else {
        (axis_b, axis_a)
    };
    deriv_2nd_order(&deriv_2nd_order(field, hi), lo)
}
