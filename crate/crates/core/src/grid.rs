//! Uniform node grids restricted to a domain, grid functions, finite
//! difference gradients and discrete `L^p` / `W^{1,p}` norms.
//!
//! Norms use the masked node-sum rule `Σ |u_i|^p h^d`; sums run in node
//! order so results do not depend on scheduling.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::error::{check_exponent, Error, Result};
use crate::field::ScalarField;
use crate::geometry::LipschitzDomain;

#[derive(Debug, Clone, PartialEq)]
pub struct DomainGrid {
    origin: Vec<f64>,
    spacing: f64,
    cells: Vec<usize>,
    strides: Vec<usize>,
    inside: Vec<bool>,
}

impl DomainGrid {
    /// Cell-centred grid over the domain's bounding box: `resolution` cells
    /// along the longest box edge, one node at the centre of each cell.
    pub fn new(domain: &LipschitzDomain, resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::Config(format!("grid resolution must be >= 2, got {resolution}")));
        }
        let (lo, hi) = domain.bbox();
        let longest = lo.iter().zip(hi).map(|(l, h)| h - l).fold(0.0, f64::max);
        let spacing = longest / resolution as f64;
        let cells: Vec<usize> = lo
            .iter()
            .zip(hi)
            .map(|(l, h)| ((((h - l) / spacing) - 1e-9).ceil().max(2.0) as usize) - 1)
            .collect();
        let origin: Vec<f64> = lo.iter().map(|l| l + 0.5 * spacing).collect();
        let mut grid = Self::from_parts(origin, spacing, cells, Vec::new())?;
        let mut x = vec![0.0; grid.dim()];
        grid.inside = (0..grid.node_count())
            .map(|i| {
                grid.node_coords(i, &mut x);
                domain.indicator(&x)
            })
            .collect();
        if !grid.inside.iter().any(|&b| b) {
            return Err(Error::Config("grid has no inside node".into()));
        }
        Ok(grid)
    }

    /// Assemble a grid from raw parts. An empty mask means "to be filled".
    pub fn from_parts(origin: Vec<f64>, spacing: f64, cells: Vec<usize>, inside: Vec<bool>) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::Config(format!("grid spacing must be positive, got {spacing}")));
        }
        if origin.len() != cells.len() || cells.is_empty() {
            return Err(Error::Config("grid origin and cells must have the same dimension".into()));
        }
        let d = cells.len();
        let mut strides = vec![1; d];
        for j in (0..d - 1).rev() {
            strides[j] = strides[j + 1] * (cells[j + 1] + 1);
        }
        let count = strides[0] * (cells[0] + 1);
        if !inside.is_empty() && inside.len() != count {
            return Err(Error::Config(format!("mask has {} entries, grid has {count} nodes", inside.len())));
        }
        Ok(Self {
            origin,
            spacing,
            cells,
            strides,
            inside,
        })
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn node_count(&self) -> usize {
        self.strides[0] * (self.cells[0] + 1)
    }

    pub fn is_inside(&self, node: usize) -> bool {
        self.inside[node]
    }

    pub fn inside_mask(&self) -> &[bool] {
        &self.inside
    }

    pub fn inside_count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    /// `h^d`, the volume attached to each node.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim() as i32)
    }

    pub fn node_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn node_multi(&self, mut node: usize, out: &mut [usize]) {
        for j in 0..self.dim() {
            out[j] = node / self.strides[j];
            node %= self.strides[j];
        }
    }

    pub fn node_coords(&self, node: usize, out: &mut [f64]) {
        let mut rest = node;
        for j in 0..self.dim() {
            let i = rest / self.strides[j];
            rest %= self.strides[j];
            out[j] = self.origin[j] + i as f64 * self.spacing;
        }
    }

    pub fn neighbor(&self, node: usize, axis: usize, dir: isize) -> Option<usize> {
        let i = (node / self.strides[axis]) % (self.cells[axis] + 1);
        match dir {
            1 if i < self.cells[axis] => Some(node + self.strides[axis]),
            -1 if i > 0 => Some(node - self.strides[axis]),
            _ => None,
        }
    }

    /// Multilinear interpolation of nodal `values` at `x` using only inside
    /// corners, renormalized over them. Falls back to the nearest inside
    /// node of the surrounding `4^d` block when no inside corner carries
    /// weight. `None` when that block has no inside node either.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> Option<f64> {
        let d = self.dim();
        let mut base = [0usize; 8];
        let mut frac = [0.0f64; 8];
        for j in 0..d {
            let t = (x[j] - self.origin[j]) / self.spacing;
            let max_base = self.cells[j].saturating_sub(1) as f64;
            let b = t.floor().clamp(0.0, max_base);
            base[j] = b as usize;
            frac[j] = (t - b).clamp(0.0, 1.0);
        }
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for corner in 0..(1usize << d) {
            let mut node = 0;
            let mut w = 1.0;
            for j in 0..d {
                let bit = (corner >> j) & 1;
                node += (base[j] + bit) * self.strides[j];
                w *= if bit == 1 { frac[j] } else { 1.0 - frac[j] };
            }
            if self.inside[node] && w > 0.0 {
                acc += w * values[node];
                wsum += w;
            }
        }
        if wsum > 1e-12 {
            return Some(acc / wsum);
        }
        self.nearest_inside(x, &base[..d]).map(|n| values[n])
    }

    fn nearest_inside(&self, x: &[f64], base: &[usize]) -> Option<usize> {
        let d = self.dim();
        let mut best: Option<(f64, usize)> = None;
        let mut coords = [0.0f64; 8];
        let mut multi = [0usize; 8];
        for offset in 0..4usize.pow(d as u32) {
            let mut rest = offset;
            let mut valid = true;
            for j in 0..d {
                let o = (rest % 4) as isize - 1;
                rest /= 4;
                let i = base[j] as isize + o;
                if i < 0 || i > self.cells[j] as isize {
                    valid = false;
                    break;
                }
                multi[j] = i as usize;
            }
            if !valid {
                continue;
            }
            let node = self.node_index(&multi[..d]);
            if !self.inside[node] {
                continue;
            }
            self.node_coords(node, &mut coords[..d]);
            let dist: f64 = (0..d).map(|j| (coords[j] - x[j]).powi(2)).sum();
            if best.is_none_or(|(bd, _)| dist < bd) {
                best = Some((dist, node));
            }
        }
        best.map(|(_, n)| n)
    }
}

/// Values on the inside nodes of a grid, tagged with an exponent `p`.
/// Outside nodes hold 0 and are never read.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<DomainGrid>,
    values: Vec<f64>,
    p: f64,
}

impl GridFunction {
    pub fn new(grid: Arc<DomainGrid>, values: Vec<f64>, p: f64) -> Result<Self> {
        check_exponent(p)?;
        if values.len() != grid.node_count() {
            return Err(Error::Config(format!(
                "{} values for {} grid nodes",
                values.len(),
                grid.node_count()
            )));
        }
        let mut values = values;
        for (v, &inside) in values.iter_mut().zip(grid.inside_mask()) {
            if !inside {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(Error::Config("grid function values must be finite".into()));
            }
        }
        Ok(Self { grid, values, p })
    }

    /// Pointwise evaluation of `f` at every inside node.
    pub fn sample(f: &dyn ScalarField, grid: &Arc<DomainGrid>, p: f64) -> Result<Self> {
        let mut x = vec![0.0; grid.dim()];
        let values = (0..grid.node_count())
            .map(|i| {
                if grid.is_inside(i) {
                    grid.node_coords(i, &mut x);
                    f.eval(&x)
                } else {
                    0.0
                }
            })
            .collect();
        Self::new(grid.clone(), values, p)
    }

    pub fn grid(&self) -> &Arc<DomainGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn with_p(mut self, p: f64) -> Result<Self> {
        check_exponent(p)?;
        self.p = p;
        Ok(self)
    }

    /// New function on the same grid with values `f(x, u(x))` at inside nodes.
    pub fn map_with_coords(&self, mut f: impl FnMut(&[f64], f64) -> f64) -> Self {
        let mut x = vec![0.0; self.grid.dim()];
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if self.grid.is_inside(i) {
                    self.grid.node_coords(i, &mut x);
                    f(&x, v)
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            grid: self.grid.clone(),
            values,
            p: self.p,
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.p != other.p {
            return Err(Error::ExponentMismatch {
                expected: self.p,
                found: other.p,
            });
        }
        if !Arc::ptr_eq(&self.grid, &other.grid) && *self.grid != *other.grid {
            return Err(Error::Config("grid functions live on different grids".into()));
        }
        Ok(())
    }

    /// `alpha * self + other`.
    pub fn axpy(&self, alpha: f64, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| alpha * a + b)
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            values,
            p: self.p,
        })
    }

    /// `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Self {
            grid: self.grid.clone(),
            values,
            p: self.p,
        })
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| alpha * v).collect(),
            p: self.p,
        }
    }

    /// Central differences at nodes with both neighbours inside, one-sided
    /// first-order differences where one neighbour is outside.
    pub fn gradient_fd(&self) -> Result<Gradient> {
        let g = &self.grid;
        let h = g.spacing();
        let d = g.dim();
        let mut components = vec![vec![0.0; g.node_count()]; d];
        for node in 0..g.node_count() {
            if !g.is_inside(node) {
                continue;
            }
            for (axis, comp) in components.iter_mut().enumerate() {
                let plus = g.neighbor(node, axis, 1).filter(|&n| g.is_inside(n));
                let minus = g.neighbor(node, axis, -1).filter(|&n| g.is_inside(n));
                comp[node] = match (minus, plus) {
                    (Some(m), Some(p)) => (self.values[p] - self.values[m]) / (2.0 * h),
                    (None, Some(p)) => (self.values[p] - self.values[node]) / h,
                    (Some(m), None) => (self.values[node] - self.values[m]) / h,
                    (None, None) => return Err(Error::IsolatedNode { node, axis }),
                };
            }
        }
        Ok(Gradient {
            grid: self.grid.clone(),
            components,
        })
    }

    fn validate_p(&self, p: f64) -> Result<()> {
        check_exponent(p)?;
        if p != self.p {
            return Err(Error::ExponentMismatch {
                expected: self.p,
                found: p,
            });
        }
        Ok(())
    }

    /// `(Σ |u_i|^p h^d)^{1/p}` over inside nodes.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        self.validate_p(p)?;
        Ok(masked_power_sum(&self.grid, self.values.iter().map(|v| v.abs()), p).powf(1.0 / p))
    }

    /// `(‖u‖_p^p + ‖ |∇u| ‖_p^p)^{1/p}`.
    pub fn w1p_norm(&self, p: f64) -> Result<f64> {
        self.validate_p(p)?;
        let grad = self.gradient_fd()?;
        let vol = masked_power_sum(&self.grid, self.values.iter().map(|v| v.abs()), p);
        let gvol = masked_power_sum(&self.grid, grad.magnitudes(), p);
        Ok((vol + gvol).powf(1.0 / p))
    }

    /// Multilinear interpolation from inside nodes; see
    /// [`DomainGrid::interpolate`].
    pub fn interpolate(&self, x: &[f64]) -> Option<f64> {
        self.grid.interpolate(&self.values, x)
    }
}

/// `Σ_inside |v_i|^p · h^d` in node order.
fn masked_power_sum(grid: &DomainGrid, magnitudes: impl Iterator<Item = f64>, p: f64) -> f64 {
    let mut sum = 0.0;
    for (m, &inside) in magnitudes.zip(grid.inside_mask()) {
        if inside {
            sum += m.powf(p);
        }
    }
    sum * grid.cell_volume()
}

/// Finite-difference gradient, one nodal array per axis.
#[derive(Debug, Clone)]
pub struct Gradient {
    grid: Arc<DomainGrid>,
    pub components: Vec<Vec<f64>>,
}

impl Gradient {
    pub fn grid(&self) -> &Arc<DomainGrid> {
        &self.grid
    }

    pub fn magnitudes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.grid.node_count()).map(move |i| {
            self.components
                .iter()
                .map(|c| c[i] * c[i])
                .sum::<f64>()
                .sqrt()
        })
    }
}

const MAGIC: &[u8; 4] = b"TFGF";
const VERSION: u32 = 1;

impl GridFunction {
    /// Flat little-endian layout: magic, version, `d`, cells per axis (u64),
    /// `h`, origin, `p`, node values in row-major order, then the inside
    /// mask packed LSB-first.
    pub fn to_bytes(&self) -> Vec<u8> {
        let g = &self.grid;
        let mut out = Vec::with_capacity(64 + 8 * g.node_count() + g.node_count() / 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(g.dim() as u32).to_le_bytes());
        for &c in g.cells() {
            out.extend_from_slice(&(c as u64).to_le_bytes());
        }
        out.extend_from_slice(&g.spacing().to_le_bytes());
        for &o in g.origin() {
            out.extend_from_slice(&o.to_le_bytes());
        }
        out.extend_from_slice(&self.p.to_le_bytes());
        for &v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let mut bits = vec![0u8; g.node_count().div_ceil(8)];
        for (i, &inside) in g.inside_mask().iter().enumerate() {
            if inside {
                bits[i / 8] |= 1 << (i % 8);
            }
        }
        out.extend_from_slice(&bits);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Config("not a grid function file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Config(format!("unsupported grid function version {version}")));
        }
        let d = r.u32()? as usize;
        if !(1..=8).contains(&d) {
            return Err(Error::Config(format!("unsupported dimension {d}")));
        }
        let cells = (0..d).map(|_| r.u64().map(|c| c as usize)).collect::<Result<Vec<_>>>()?;
        let h = r.f64()?;
        let origin = (0..d).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let p = r.f64()?;
        let shell = DomainGrid::from_parts(origin.clone(), h, cells.clone(), Vec::new())?;
        let n = shell.node_count();
        let values = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let bits = r.take(n.div_ceil(8))?;
        let inside = (0..n).map(|i| bits[i / 8] & (1 << (i % 8)) != 0).collect();
        if r.pos != bytes.len() {
            return Err(Error::Config("trailing bytes after grid function".into()));
        }
        let grid = DomainGrid::from_parts(origin, h, cells, inside)?;
        Self::new(Arc::new(grid), values, p)
    }

    /// CSV dump of inside nodes: coordinates then value.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        let d = self.grid.dim();
        let header: Vec<String> = (1..=d).map(|j| format!("x{j}")).chain(["value".into()]).collect();
        writeln!(w, "{}", header.join(","))?;
        let mut x = vec![0.0; d];
        for (i, v) in self.values.iter().enumerate() {
            if !self.grid.is_inside(i) {
                continue;
            }
            self.grid.node_coords(i, &mut x);
            let row: Vec<String> = x.iter().chain([v]).map(|c| c.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Config("truncated grid function".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
