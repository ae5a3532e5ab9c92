//! Midpoint quadrature for the area formula on graph patches, the unit
//! Jacobian change of variables under flattening, and fiber-wise slicing.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::GraphChart;

/// A footprint box in chart-local `z'` coordinates over which the graph
/// `(z', γ(z'))` is integrated.
#[derive(Debug, Clone)]
pub struct SurfacePatch<'a> {
    pub chart: &'a GraphChart,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub resolution: usize,
}

impl<'a> SurfacePatch<'a> {
    pub fn new(chart: &'a GraphChart, lo: Vec<f64>, hi: Vec<f64>, resolution: usize) -> Result<Self> {
        let m = chart.dim() - 1;
        if lo.len() != m || hi.len() != m {
            return Err(Error::Config(format!("footprint must have {m} components")));
        }
        if resolution < 2 {
            return Err(Error::Config("patch resolution must be >= 2".into()));
        }
        let mut a = vec![0.0; chart.dim()];
        chart.axis_map.to_local(&chart.center, &mut a);
        for j in 0..m {
            let inside = lo[j] < hi[j]
                && lo[j] >= a[j] - chart.radius - 1e-12
                && hi[j] <= a[j] + chart.radius + 1e-12;
            if !inside {
                return Err(Error::Config(format!(
                    "footprint axis {j} [{}, {}] leaves the projection of the chart ball",
                    lo[j], hi[j]
                )));
            }
        }
        Ok(Self { chart, lo, hi, resolution })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub resolution: usize,
    /// `|value(N) - value(N/2)|`.
    pub estimated_error: f64,
}

/// Visit the midpoints of an `n^m` cell partition of `[lo, hi]` in
/// row-major order, passing the midpoint; returns the cell volume.
pub(crate) fn for_each_midpoint(lo: &[f64], hi: &[f64], n: usize, visit: impl FnMut(&[f64])) -> f64 {
    for_each_cell(lo, hi, &vec![n; lo.len()], visit)
}

/// As [`for_each_midpoint`] with `counts[j]` cells along axis `j`.
pub(crate) fn for_each_cell(lo: &[f64], hi: &[f64], counts: &[usize], mut visit: impl FnMut(&[f64])) -> f64 {
    let m = lo.len();
    let widths: Vec<f64> = (0..m).map(|j| (hi[j] - lo[j]) / counts[j] as f64).collect();
    let mut idx = vec![0usize; m];
    let mut point = vec![0.0; m];
    let total: usize = counts.iter().product();
    for _ in 0..total {
        for j in 0..m {
            point[j] = lo[j] + (idx[j] as f64 + 0.5) * widths[j];
        }
        visit(&point);
        for j in (0..m).rev() {
            idx[j] += 1;
            if idx[j] < counts[j] {
                break;
            }
            idx[j] = 0;
        }
    }
    widths.iter().product()
}

fn surface_value(g: &dyn ScalarField, patch: &SurfacePatch, n: usize) -> f64 {
    let chart = patch.chart;
    let d = chart.dim();
    let step = (0..d - 1)
        .map(|j| (patch.hi[j] - patch.lo[j]) / n as f64)
        .fold(f64::INFINITY, f64::min)
        / 4.0;
    let mut y = vec![0.0; d];
    let mut sum = 0.0;
    let cell = for_each_midpoint(&patch.lo, &patch.hi, n, |zp| {
        y[..d - 1].copy_from_slice(zp);
        y[d - 1] = 0.0;
        let x = chart.unflatten(&y);
        sum += g.eval(&x) * chart.graph.area_factor(zp, step);
    });
    sum * cell
}

/// `∫ g(x', γ(x')) sqrt(1 + |∇γ|²) dx'` over the patch footprint: the
/// surface integral of `g` over the graph piece.
pub fn surface_integral(g: &dyn ScalarField, patch: &SurfacePatch) -> QuadratureResult {
    let n = patch.resolution;
    let value = surface_value(g, patch, n);
    let coarse = surface_value(g, patch, (n / 2).max(1));
    QuadratureResult {
        value,
        resolution: n,
        estimated_error: (value - coarse).abs(),
    }
}

/// Midpoint rule over a box with `n` cells per axis.
pub fn box_integral(g: &dyn ScalarField, lo: &[f64], hi: &[f64], n: usize) -> f64 {
    let mut sum = 0.0;
    let cell = for_each_midpoint(lo, hi, n, |x| sum += g.eval(x));
    sum * cell
}

/// Iterated midpoint rule: inner sums along `axis` fibers, outer sum over
/// the remaining coordinates. Same nodes as [`box_integral`].
pub fn slice_integral(g: &dyn ScalarField, lo: &[f64], hi: &[f64], axis: usize, n: usize) -> f64 {
    let d = lo.len();
    assert!(axis < d);
    let rest_lo: Vec<f64> = (0..d).filter(|&j| j != axis).map(|j| lo[j]).collect();
    let rest_hi: Vec<f64> = (0..d).filter(|&j| j != axis).map(|j| hi[j]).collect();
    let width = (hi[axis] - lo[axis]) / n as f64;
    let mut x = vec![0.0; d];
    let mut total = 0.0;
    let outer_cell = for_each_midpoint(&rest_lo, &rest_hi, n, |rest| {
        let mut k = 0;
        for j in 0..d {
            if j != axis {
                x[j] = rest[k];
                k += 1;
            }
        }
        let mut fiber = 0.0;
        for i in 0..n {
            x[axis] = lo[axis] + (i as f64 + 0.5) * width;
            fiber += g.eval(&x);
        }
        total += fiber * width;
    });
    total * outer_cell
}

fn flat_side(g: &dyn ScalarField, chart: &GraphChart, lo: &[f64], hi: &[f64], n: usize) -> f64 {
    let mut sum = 0.0;
    let cell = for_each_midpoint(lo, hi, n, |x| sum += g.eval(&chart.flatten(x)));
    sum * cell
}

/// `∫_{F(slab)} g dy`, fiber by fiber: for each `y'` midpoint the vertical
/// interval `[zlo_d - γ(y'), zhi_d - γ(y')]` is cut by a fixed grid of
/// spacing `Δ` anchored at 0, partial cells contributing their overlap
/// length at the overlap midpoint.
fn image_side(g: &dyn ScalarField, chart: &GraphChart, lo: &[f64], hi: &[f64], n: usize) -> f64 {
    let d = chart.dim();
    let mut zlo = vec![0.0; d];
    let mut zhi = vec![0.0; d];
    for j in 0..d {
        let (l, h) = chart.axis_map.local_interval(j, lo, hi);
        zlo[j] = l;
        zhi[j] = h;
    }
    let delta = (zhi[d - 1] - zlo[d - 1]) / n as f64;
    let mut y = vec![0.0; d];
    let mut total = 0.0;
    let cell = for_each_midpoint(&zlo[..d - 1], &zhi[..d - 1], n, |yp| {
        let gamma = chart.graph.eval(yp);
        let (a, b) = (zlo[d - 1] - gamma, zhi[d - 1] - gamma);
        y[..d - 1].copy_from_slice(yp);
        let mut fiber = 0.0;
        let mut k = (a / delta).floor();
        loop {
            let c0 = (k * delta).max(a);
            let c1 = ((k + 1.0) * delta).min(b);
            if c0 >= b {
                break;
            }
            if c1 > c0 {
                y[d - 1] = 0.5 * (c0 + c1);
                fiber += g.eval(&y) * (c1 - c0);
            }
            k += 1.0;
        }
        total += fiber;
    });
    total * cell
}

/// Both sides of the unit-Jacobian change of variables for the flattening
/// map on a physical box `slab ⊂ B(a, r)`: `(∫_slab g∘F dx, ∫_{F(slab)} g dy)`.
/// `g` is given in flattened chart-local coordinates.
pub fn flat_change_of_variables_check(
    g: &dyn ScalarField,
    chart: &GraphChart,
    lo: &[f64],
    hi: &[f64],
    resolution: usize,
) -> Result<(QuadratureResult, QuadratureResult)> {
    let d = chart.dim();
    if lo.len() != d || hi.len() != d || lo.iter().zip(hi).any(|(l, h)| l >= h) {
        return Err(Error::Config("slab must be a nondegenerate box of the chart dimension".into()));
    }
    if resolution < 2 {
        return Err(Error::Config("slab resolution must be >= 2".into()));
    }
    let mut corner = vec![0.0; d];
    for mask in 0..(1usize << d) {
        for j in 0..d {
            corner[j] = if (mask >> j) & 1 == 1 { hi[j] } else { lo[j] };
        }
        if chart.distance_to_center(&corner) > chart.radius + 1e-12 {
            return Err(Error::Config(format!("slab corner {corner:?} lies outside the chart ball")));
        }
    }
    let run = |side: fn(&dyn ScalarField, &GraphChart, &[f64], &[f64], usize) -> f64| {
        let value = side(g, chart, lo, hi, resolution);
        let coarse = side(g, chart, lo, hi, resolution / 2);
        QuadratureResult {
            value,
            resolution,
            estimated_error: (value - coarse).abs(),
        }
    };
    Ok((run(flat_side), run(image_side)))
}
