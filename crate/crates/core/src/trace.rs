//! The discrete trace operator, boundary `L^p` norms and empirical trace
//! constants.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{check_exponent, Error, Result};
use crate::field::{NamedField, ScalarField};
use crate::geometry::{boundary_weights, GraphChart, LipschitzDomain};
use crate::grid::{DomainGrid, GridFunction};
use crate::measure::for_each_cell;

/// Offset of the evaluation point above the graph, in grid spacings.
pub const TRACE_OFFSET: f64 = 1.5;

/// Minimum number of grid spacings across every footprint axis.
const MIN_FOOTPRINT_CELLS: f64 = 8.0;

/// Tolerance for "the graph of this chart passes through the point".
const ON_GRAPH_TOL: f64 = 1e-9;

/// Boundary quadrature for one chart.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub chart_index: usize,
    /// Physical boundary points `(z', γ(z'))` mapped back to global axes.
    pub boundary_points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// `area_factor · cell volume` per node.
    pub area_weights: Vec<f64>,
    /// Partition-of-unity weight of this chart at each node.
    pub pou_weights: Vec<f64>,
}

/// Boundary nodes of one chart: points on `∂D` with positive bump weight,
/// together with their area and partition weights and evaluation points.
#[derive(Debug, Clone)]
struct ChartNodes {
    points: Vec<Vec<f64>>,
    probes: Vec<Vec<f64>>,
    area: Vec<f64>,
    pou: Vec<f64>,
}

fn chart_nodes(domain: &LipschitzDomain, index: usize, h: f64) -> Result<ChartNodes> {
    let charts = domain.charts();
    let chart = &charts[index];
    let d = domain.dim();
    let (bl, bh) = domain.bbox();
    let (lo, hi) = chart.footprint(bl, bh);
    let mut counts = Vec::with_capacity(d - 1);
    for j in 0..d - 1 {
        let width = hi[j] - lo[j];
        if width < MIN_FOOTPRINT_CELLS * h {
            return Err(Error::ChartUnresolved {
                chart: index,
                detail: format!("footprint axis {j} spans {width:.4}, under {MIN_FOOTPRINT_CELLS} grid spacings"),
            });
        }
        counts.push((width / h).ceil() as usize);
    }
    let step = (0..d - 1)
        .map(|j| (hi[j] - lo[j]) / counts[j] as f64)
        .fold(f64::INFINITY, f64::min)
        / 4.0;
    let mut nodes = ChartNodes {
        points: Vec::new(),
        probes: Vec::new(),
        area: Vec::new(),
        pou: Vec::new(),
    };
    let mut z = vec![0.0; d];
    let mut weights_err = None;
    let cell = for_each_cell(&lo, &hi, &counts, |zp| {
        if weights_err.is_some() {
            return;
        }
        z[..d - 1].copy_from_slice(zp);
        let gamma = chart.graph.eval(zp);
        z[d - 1] = gamma;
        let mut q = vec![0.0; d];
        chart.axis_map.to_global(&z, &mut q);
        if chart.bump(&q) <= 0.0 || !domain.in_closure(&q, ON_GRAPH_TOL) {
            return;
        }
        let rho = match boundary_weights(charts, &q, ON_GRAPH_TOL) {
            Ok(w) => w[index],
            Err(e) => {
                weights_err = Some(e);
                return;
            }
        };
        if rho <= 0.0 {
            return;
        }
        z[d - 1] = gamma + TRACE_OFFSET * h;
        let mut probe = vec![0.0; d];
        chart.axis_map.to_global(&z, &mut probe);
        nodes.points.push(q);
        nodes.probes.push(probe);
        nodes.area.push(chart.graph.area_factor(zp, step));
        nodes.pou.push(rho);
    });
    if let Some(e) = weights_err {
        return Err(e);
    }
    for a in &mut nodes.area {
        *a *= cell;
    }
    Ok(nodes)
}

/// Trace of `u`: per chart, values interpolated at `1.5 h` above each
/// boundary quadrature node, with area and partition weights.
pub fn trace(u: &GridFunction, domain: &LipschitzDomain) -> Result<Vec<TraceSample>> {
    let h = u.grid().spacing();
    (0..domain.charts().len())
        .into_par_iter()
        .map(|i| {
            let nodes = chart_nodes(domain, i, h)?;
            let values = nodes
                .probes
                .iter()
                .map(|x| {
                    u.interpolate(x).ok_or_else(|| Error::ChartUnresolved {
                        chart: i,
                        detail: format!("no inside grid node near {x:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(TraceSample {
                chart_index: i,
                boundary_points: nodes.points,
                values,
                area_weights: nodes.area,
                pou_weights: nodes.pou,
            })
        })
        .collect()
}

/// `(Σ ρ · area · |v|^p)^{1/p}` over all charts.
pub fn trace_lp_norm(samples: &[TraceSample], p: f64) -> Result<f64> {
    check_exponent(p)?;
    let mut sum = 0.0;
    for s in samples {
        for ((v, a), r) in s.values.iter().zip(&s.area_weights).zip(&s.pou_weights) {
            sum += r * a * v.abs().powf(p);
        }
    }
    Ok(sum.powf(1.0 / p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRatio {
    pub function_id: String,
    pub trace_norm: f64,
    pub w1p_norm: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceConstantReport {
    pub domain: String,
    pub p: f64,
    pub resolution: usize,
    pub rows: Vec<TraceRatio>,
    pub c_hat: f64,
}

impl TraceConstantReport {
    pub const HEADER: &'static str = "domain,p,function_id,trace_norm,w1p_norm,ratio";

    /// CSV body without header; the last row carries `c_hat`.
    pub fn csv_rows(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .rows
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{:.12e},{:.12e},{:.12e}",
                    self.domain, self.p, r.function_id, r.trace_norm, r.w1p_norm, r.ratio
                )
            })
            .collect();
        out.push(format!("{},{},c_hat,,,{:.12e}", self.domain, self.p, self.c_hat));
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "{}", Self::HEADER)?;
        for row in self.csv_rows() {
            writeln!(w, "{row}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Ratios `‖Tu‖_{L^p(∂D)} / ‖u‖_{W^{1,p}(D)}` over a function catalog and
/// their maximum.
pub fn estimate_trace_constant(
    domain: &LipschitzDomain,
    catalog: &[NamedField],
    p: f64,
    grid: &Arc<DomainGrid>,
) -> Result<TraceConstantReport> {
    check_exponent(p)?;
    if catalog.is_empty() {
        return Err(Error::Config("trace-constant catalog is empty".into()));
    }
    let h = grid.spacing();
    let nodes = (0..domain.charts().len())
        .map(|i| chart_nodes(domain, i, h))
        .collect::<Result<Vec<_>>>()?;
    let rows = catalog
        .par_iter()
        .map(|f| {
            let u = GridFunction::sample(f, grid, p)?;
            let w1p = u.w1p_norm(p)?;
            if w1p <= 1e-14 {
                return Err(Error::ZeroNorm {
                    function_id: f.id.clone(),
                    norm: w1p,
                });
            }
            let mut sum = 0.0;
            for (i, cn) in nodes.iter().enumerate() {
                for ((x, a), r) in cn.probes.iter().zip(&cn.area).zip(&cn.pou) {
                    let v = u.interpolate(x).ok_or_else(|| Error::ChartUnresolved {
                        chart: i,
                        detail: format!("no inside grid node near {x:?}"),
                    })?;
                    sum += r * a * v.abs().powf(p);
                }
            }
            let trace_norm = sum.powf(1.0 / p);
            Ok(TraceRatio {
                function_id: f.id.clone(),
                trace_norm,
                w1p_norm: w1p,
                ratio: trace_norm / w1p,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let c_hat = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let (lo, hi) = domain.bbox();
    let longest = lo.iter().zip(hi).map(|(l, h)| h - l).fold(0.0, f64::max);
    Ok(TraceConstantReport {
        domain: domain.name.clone(),
        p,
        resolution: (longest / h).round() as usize,
        rows,
        c_hat,
    })
}

/// Both sides of the vertical integration step in flattened chart
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FtcResidual {
    /// `∫ |u(y', 0)|^p` over footprint points where `ζ(y', 0) = 1`.
    pub lhs: f64,
    /// `-∫∫ ∂_{y_d}(ζ |u|^p)` over the slab `B × (0, top)`.
    pub rhs: f64,
    pub residual: f64,
}

/// `u` and `zeta` are fields of the flattened chart-local coordinates `y`.
/// The footprint `B` is the projection of the chart ball; both integrals use
/// the midpoint rule with `resolution` cells per axis.
pub fn vertical_ftc_check(
    u: &dyn ScalarField,
    zeta: &dyn ScalarField,
    chart: &GraphChart,
    slab_top: f64,
    p: f64,
    resolution: usize,
) -> Result<FtcResidual> {
    check_exponent(p)?;
    if !(slab_top > 0.0) || resolution < 2 {
        return Err(Error::Config("slab needs positive height and resolution >= 2".into()));
    }
    let d = chart.dim();
    let mut a = vec![0.0; d];
    chart.axis_map.to_local(&chart.center, &mut a);
    let lo: Vec<f64> = a[..d - 1].iter().map(|c| c - chart.radius).collect();
    let hi: Vec<f64> = a[..d - 1].iter().map(|c| c + chart.radius).collect();
    let f = |y: &[f64]| zeta.eval(y) * u.eval(y).abs().powf(p);

    let mut y = vec![0.0; d];
    let mut lhs = 0.0;
    let plane = for_each_cell(&lo, &hi, &vec![resolution; d - 1], |yp| {
        y[..d - 1].copy_from_slice(yp);
        y[d - 1] = 0.0;
        if zeta.eval(&y) >= 1.0 {
            lhs += u.eval(&y).abs().powf(p);
        }
    });
    lhs *= plane;

    let mut slo = lo.clone();
    slo.push(0.0);
    let mut shi = hi.clone();
    shi.push(slab_top);
    let mut probe = vec![0.0; d];
    let mut rhs = 0.0;
    let vol = for_each_cell(&slo, &shi, &vec![resolution; d], |ym| {
        probe.copy_from_slice(ym);
        let t = ym[d - 1];
        let step = 1e-6 * (1.0 + t.abs());
        probe[d - 1] = t + step;
        let plus = f(&probe);
        probe[d - 1] = t - step;
        let minus = f(&probe);
        rhs -= (plus - minus) / (2.0 * step);
    });
    rhs *= vol;
    Ok(FtcResidual {
        lhs,
        rhs,
        residual: rhs - lhs,
    })
}
