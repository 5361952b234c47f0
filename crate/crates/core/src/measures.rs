//! Volume, relative perimeter, the metric flow `E_r`, and the inequalities it obeys.
//!
//! Perimeters come from the gradient of a mollified indicator. The mollifier is
//! normalised by the mollified domain mask, so the smoothed indicator is
//! constant across a wall the set rests on and only interface inside the domain
//! contributes.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{Lattice, Point, VoxelGrid, VoxelSet};
use crate::edt::squared_edt;
use crate::tables::{fmt_f64, write_csv};
use crate::{Error, Result};

/// Relative accuracy of [`relative_perimeter`] on smooth surfaces resolved by
/// at least ~25 cells per radius.
pub const PERIMETER_REL_TOL: f64 = 0.02;

/// Relative accuracy of [`volume`] on the same sets.
pub const VOLUME_REL_TOL: f64 = 0.01;

/// Method tag written with every estimate.
pub const METHOD: &str = "mollified-gradient/quartic-r2h/normalized";

/// Quartic radial weights `(1 − s²)²` at `s = |offset|/2`, by squared offset length.
const TAP: [f64; 4] = [1.0, 0.5625, 0.25, 0.0625];
const TAP_SUM: f64 = 7.875;

/// Convolves `field` with the normalised quartic kernel of radius two cells.
/// Values beyond the lattice are taken as zero.
pub(crate) fn mollify(lat: &Lattice, field: &[f64]) -> Vec<f64> {
    let [nx, ny, nz] = lat.dims;
    let mut out = vec![0.0; lat.len()];
    out.par_chunks_mut(ny * nz).enumerate().for_each(|(i, slab)| {
        for j in 0..ny {
            for k in 0..nz {
                slab[j * nz + k] = convolve_at(lat, field, [i, j, k], [nx, ny, nz]);
            }
        }
    });
    out
}

#[inline]
fn convolve_at(lat: &Lattice, field: &[f64], c: [usize; 3], dims: [usize; 3]) -> f64 {
    let mut acc = 0.0;
    for di in -1i64..=1 {
        let i = c[0] as i64 + di;
        if i < 0 || i >= dims[0] as i64 {
            continue;
        }
        for dj in -1i64..=1 {
            let j = c[1] as i64 + dj;
            if j < 0 || j >= dims[1] as i64 {
                continue;
            }
            for dk in -1i64..=1 {
                let k = c[2] as i64 + dk;
                if k < 0 || k >= dims[2] as i64 {
                    continue;
                }
                let w = TAP[(di * di + dj * dj + dk * dk) as usize];
                acc += w * field[lat.index(i as usize, j as usize, k as usize)];
            }
        }
    }
    acc / TAP_SUM
}

/// Mollified indicator state of a set on its grid, with per-cell gradient norms.
///
/// Supports single-cell flips with local updates, which is what the annealer uses.
pub(crate) struct PerimeterField<'g> {
    grid: &'g VoxelGrid,
    den: &'g [f64],
    occ: Vec<f64>,
    num: Vec<f64>,
    grad: Vec<f64>,
    total: f64,
}

impl<'g> PerimeterField<'g> {
    pub(crate) fn new(grid: &'g VoxelGrid, cells: &[bool]) -> Self {
        let lat = grid.lattice();
        let occ: Vec<f64> = cells
            .iter()
            .zip(grid.inside())
            .map(|(&c, &i)| (c && i) as u8 as f64)
            .collect();
        let num = mollify(lat, &occ);
        let den = grid.smoothed_inside();
        let mut f = Self {
            grid,
            den,
            occ,
            num,
            grad: Vec::new(),
            total: 0.0,
        };
        let grad: Vec<f64> = (0..lat.len())
            .into_par_iter()
            .map(|idx| f.gradient_norm(idx))
            .collect();
        f.total = grad.iter().sum();
        f.grad = grad;
        f
    }

    /// Current perimeter estimate.
    pub(crate) fn perimeter(&self) -> f64 {
        self.total * self.grid.lattice().cell_volume()
    }

    #[inline]
    fn u(&self, idx: usize) -> f64 {
        self.num[idx] / self.den[idx]
    }

    /// `|∇u|` at an inside cell; central differences, one-sided where a
    /// neighbour leaves the domain or the lattice.
    fn gradient_norm(&self, idx: usize) -> f64 {
        let inside = self.grid.inside();
        if !inside[idx] {
            return 0.0;
        }
        let lat = self.grid.lattice();
        let c = lat.coords(idx);
        let strides = [lat.dims[1] * lat.dims[2], lat.dims[2], 1];
        let u0 = self.u(idx);
        let mut g2 = 0.0;
        for a in 0..3 {
            let lo = (c[a] > 0 && inside[idx - strides[a]]).then(|| self.u(idx - strides[a]));
            let hi = (c[a] + 1 < lat.dims[a] && inside[idx + strides[a]])
                .then(|| self.u(idx + strides[a]));
            let d = match (lo, hi) {
                (Some(l), Some(h)) => 0.5 * (h - l),
                (Some(l), None) => u0 - l,
                (None, Some(h)) => h - u0,
                (None, None) => 0.0,
            };
            g2 += d * d;
        }
        g2.sqrt() / lat.spacing
    }

    /// Sets cell `idx` to `on` and refreshes the affected gradients.
    pub(crate) fn set(&mut self, idx: usize, on: bool) {
        let v = on as u8 as f64;
        let delta = v - self.occ[idx];
        if delta == 0.0 {
            return;
        }
        self.occ[idx] = v;
        let lat = *self.grid.lattice();
        let c = lat.coords(idx);
        for_box(&lat, c, 1, |n, d2| {
            self.num[n] += delta * TAP[d2] / TAP_SUM;
        });
        let mut changed = 0.0;
        for_box(&lat, c, 2, |n, _| {
            let g = self.gradient_norm(n);
            changed += g - self.grad[n];
            self.grad[n] = g;
        });
        self.total += changed;
    }
}

/// Visits cells in the cube of half-width `w` around `c`, with their squared offset.
#[inline]
fn for_box(lat: &Lattice, c: [usize; 3], w: i64, mut f: impl FnMut(usize, usize)) {
    for di in -w..=w {
        let i = c[0] as i64 + di;
        if i < 0 || i >= lat.dims[0] as i64 {
            continue;
        }
        for dj in -w..=w {
            let j = c[1] as i64 + dj;
            if j < 0 || j >= lat.dims[1] as i64 {
                continue;
            }
            for dk in -w..=w {
                let k = c[2] as i64 + dk;
                if k < 0 || k >= lat.dims[2] as i64 {
                    continue;
                }
                let d2 = (di * di + dj * dj + dk * dk) as usize;
                f(lat.index(i as usize, j as usize, k as usize), d2.min(3));
            }
        }
    }
}

/// Perimeter estimate of `cells` on `grid`, computed over the set's bounding
/// box only. Agrees with [`relative_perimeter`] up to summation order.
pub(crate) fn perimeter_value(grid: &VoxelGrid, cells: &[bool]) -> f64 {
    let lat = grid.lattice();
    let inside = grid.inside();
    let dims = lat.dims;
    let mut lo = dims;
    let mut hi = [0usize; 3];
    let mut any = false;
    for (idx, _) in cells.iter().enumerate().filter(|(_, &c)| c) {
        let c = lat.coords(idx);
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
        any = true;
    }
    if !any {
        return 0.0;
    }
    // u is needed one cell beyond where gradients can be nonzero
    let r3lo: [usize; 3] = std::array::from_fn(|a| lo[a].saturating_sub(3));
    let r3hi: [usize; 3] = std::array::from_fn(|a| (hi[a] + 3).min(dims[a] - 1));
    let ld: [usize; 3] = std::array::from_fn(|a| r3hi[a] - r3lo[a] + 1);
    let local = |c: [usize; 3]| ((c[0] - r3lo[0]) * ld[1] + (c[1] - r3lo[1])) * ld[2] + (c[2] - r3lo[2]);
    let den = grid.smoothed_inside();
    let mut u = vec![0.0; ld[0] * ld[1] * ld[2]];
    for i in r3lo[0]..=r3hi[0] {
        for j in r3lo[1]..=r3hi[1] {
            for k in r3lo[2]..=r3hi[2] {
                let g = lat.index(i, j, k);
                if !inside[g] {
                    continue;
                }
                let mut acc = 0.0;
                for_box(lat, [i, j, k], 1, |n, d2| {
                    if cells[n] && inside[n] {
                        acc += TAP[d2];
                    }
                });
                u[local([i, j, k])] = acc / TAP_SUM / den[g];
            }
        }
    }
    let mut total = 0.0;
    for i in lo[0].saturating_sub(2)..=(hi[0] + 2).min(dims[0] - 1) {
        for j in lo[1].saturating_sub(2)..=(hi[1] + 2).min(dims[1] - 1) {
            for k in lo[2].saturating_sub(2)..=(hi[2] + 2).min(dims[2] - 1) {
                let c = [i, j, k];
                if !inside[lat.index(i, j, k)] {
                    continue;
                }
                let u0 = u[local(c)];
                let mut g2 = 0.0;
                for a in 0..3 {
                    let mut m = c;
                    let lo_v = (c[a] > 0)
                        .then(|| {
                            m[a] = c[a] - 1;
                            inside[lat.index(m[0], m[1], m[2])].then(|| u[local(m)])
                        })
                        .flatten();
                    let mut p = c;
                    let hi_v = (c[a] + 1 < dims[a])
                        .then(|| {
                            p[a] = c[a] + 1;
                            inside[lat.index(p[0], p[1], p[2])].then(|| u[local(p)])
                        })
                        .flatten();
                    let d = match (lo_v, hi_v) {
                        (Some(l), Some(h)) => 0.5 * (h - l),
                        (Some(l), None) => u0 - l,
                        (None, Some(h)) => h - u0,
                        (None, None) => 0.0,
                    };
                    g2 += d * d;
                }
                total += g2.sqrt();
            }
        }
    }
    total / lat.spacing * lat.cell_volume()
}

/// `|E|`: occupied cells times the cell volume.
pub fn volume(set: &VoxelSet) -> f64 {
    set.volume()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerimeterEstimate {
    pub value: f64,
    pub wall_excluded_area: f64,
    pub spacing: f64,
    pub method: String,
}

impl PerimeterEstimate {
    pub fn write_csv<W: Write>(&self, out: W, meta: &[String]) -> Result<()> {
        write_csv(
            out,
            meta,
            &["value", "wall_excluded_area", "spacing", "method"],
            [vec![
                fmt_f64(self.value),
                fmt_f64(self.wall_excluded_area),
                fmt_f64(self.spacing),
                self.method.clone(),
            ]],
        )
    }
}

/// Relative perimeter of `set` inside its grid's domain.
///
/// `wall_band` only affects the attribution of wall-touching area: the
/// interface within `wall_band` of the wall that a wall-blind estimator would
/// count is reported as `wall_excluded_area`.
pub fn relative_perimeter(set: &VoxelSet, wall_band: f64) -> PerimeterEstimate {
    let grid = set.grid();
    let h = grid.spacing();
    if wall_band < h {
        log::warn!("wall band {wall_band} below the spacing {h}; wall area may be misattributed");
    }
    let field = PerimeterField::new(grid, set.cells());
    let value = field.perimeter();
    PerimeterEstimate {
        value,
        wall_excluded_area: wall_excluded(grid, &field, wall_band),
        spacing: h,
        method: METHOD.to_string(),
    }
}

/// [`relative_perimeter`] with the default band of 1.5 cells.
pub fn relative_perimeter_default(set: &VoxelSet) -> PerimeterEstimate {
    relative_perimeter(set, 1.5 * set.grid().spacing())
}

/// Area a wall-blind estimate attributes to cells near the wall, minus what
/// the relative estimate finds there.
fn wall_excluded(grid: &VoxelGrid, field: &PerimeterField, band: f64) -> f64 {
    let lat = grid.lattice();
    let h = lat.spacing;
    let near = (band + 2.0 * h).min(grid.wall_cap() - 0.5 * h);
    let inside = grid.inside();
    let wall = grid.wall_distances();
    let [nx, ny, nz] = lat.dims;
    let strides = [ny * nz, nz, 1];
    let (plain, relative): (f64, f64) = (0..lat.len())
        .into_par_iter()
        .filter(|&idx| !inside[idx] || (wall[idx] as f64) <= near)
        .map(|idx| {
            let c = lat.coords(idx);
            if c[0] == 0 || c[1] == 0 || c[2] == 0 || c[0] + 1 == nx || c[1] + 1 == ny || c[2] + 1 == nz {
                return (0.0, 0.0);
            }
            let g2: f64 = (0..3)
                .map(|a| {
                    let d = 0.5 * (field.num[idx + strides[a]] - field.num[idx - strides[a]]);
                    d * d
                })
                .sum();
            (g2.sqrt() / h, field.grad[idx])
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    ((plain - relative) * lat.cell_volume()).max(0.0)
}

/// Distances (in cells) to the set and to its complement within the domain.
struct Distances {
    to_set: Vec<f64>,
    to_complement: Vec<f64>,
}

impl Distances {
    fn of(set: &VoxelSet) -> Self {
        let grid = set.grid();
        let dims = grid.lattice().dims;
        let complement: Vec<bool> = set
            .cells()
            .iter()
            .zip(grid.inside())
            .map(|(&c, &i)| i && !c)
            .collect();
        Self {
            to_set: squared_edt(dims, set.cells()),
            to_complement: squared_edt(dims, &complement),
        }
    }

    /// `E_r`. Dilation thresholds centre-to-centre distances directly. Erosion
    /// adds half a cell, since complement centres sit about half a cell
    /// beyond the digitised boundary.
    fn flow(&self, set: &VoxelSet, r: f64) -> VoxelSet {
        let grid = set.grid();
        let h = grid.spacing();
        let cells: Vec<bool> = if r >= 0.0 {
            let lim = (r / h).powi(2) + 1e-9;
            self.to_set
                .iter()
                .zip(grid.eligible())
                .map(|(&d, &e)| e && d <= lim)
                .collect()
        } else {
            let lim = (-r / h + 0.5).powi(2) - 1e-9;
            set.cells()
                .iter()
                .zip(&self.to_complement)
                .map(|(&c, &d)| c && d >= lim)
                .collect()
        };
        VoxelSet::from_cells(grid, cells).expect("lattice-sized cell vector")
    }
}

/// The metric enlargement (`r ≥ 0`) or erosion (`r < 0`) of `set` within the
/// domain, via an exact Euclidean distance transform. Growth is confined to
/// the grid's eligible region.
pub fn enlarge(set: &VoxelSet, r: f64) -> VoxelSet {
    if r == 0.0 {
        return set.clone();
    }
    Distances::of(set).flow(set, r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowTrace {
    pub r_grid: Vec<f64>,
    pub volumes: Vec<f64>,
    pub perimeters: Vec<f64>,
    pub wall_excluded: Vec<f64>,
}

impl FlowTrace {
    /// `|Δvol/Δr − Per|/Per` per step, with `Per` averaged over the step ends.
    /// Steps where both perimeters vanish report zero.
    pub fn coarea_residuals(&self) -> Vec<f64> {
        (1..self.r_grid.len())
            .map(|i| {
                let dv = (self.volumes[i] - self.volumes[i - 1]) / (self.r_grid[i] - self.r_grid[i - 1]);
                let p = 0.5 * (self.perimeters[i] + self.perimeters[i - 1]);
                if p == 0.0 {
                    if dv == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    (dv - p).abs() / p
                }
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W, meta: &[String]) -> Result<()> {
        let rows = (0..self.r_grid.len()).map(|i| {
            vec![
                fmt_f64(self.r_grid[i]),
                fmt_f64(self.volumes[i]),
                fmt_f64(self.perimeters[i]),
                fmt_f64(self.wall_excluded[i]),
            ]
        });
        write_csv(out, meta, &["r", "volume", "perimeter", "wall_excluded"], rows)
    }

    fn row_at_zero(&self) -> Result<usize> {
        self.r_grid
            .iter()
            .position(|&r| r == 0.0)
            .ok_or_else(|| Error::InvalidInput("flow trace has no r = 0 row".into()))
    }
}

/// Volumes and perimeters of `E_r` along a sorted radius grid containing 0.
pub fn flow_trace(set: &VoxelSet, r_grid: &[f64]) -> Result<FlowTrace> {
    if r_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput("r grid must be strictly increasing".into()));
    }
    if !r_grid.contains(&0.0) {
        return Err(Error::InvalidInput("r grid must contain 0".into()));
    }
    let dist = Distances::of(set);
    let band = 1.5 * set.grid().spacing();
    let mut trace = FlowTrace {
        r_grid: r_grid.to_vec(),
        volumes: Vec::with_capacity(r_grid.len()),
        perimeters: Vec::with_capacity(r_grid.len()),
        wall_excluded: Vec::with_capacity(r_grid.len()),
    };
    for &r in r_grid {
        let e = if r == 0.0 { set.clone() } else { dist.flow(set, r) };
        let p = relative_perimeter(&e, band);
        trace.volumes.push(e.volume());
        trace.perimeters.push(p.value);
        trace.wall_excluded.push(p.wall_excluded_area);
    }
    Ok(trace)
}

/// Outcome of checking `Per(E_r) ≤ Per(E)(1 + Hr/(N−1))^{N−1}` along a trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Step2Report {
    pub holds: bool,
    /// Largest `Per(E_r)/bound − 1` (negative means slack everywhere).
    pub worst_excess: f64,
    /// Largest `|Per(E_r)/bound − 1|` over rows with `r ≥ 0`.
    pub max_rel_deviation: f64,
    pub tolerance: f64,
    pub excess: Vec<f64>,
}

/// Checks the perimeter bound along the flow, allowing a relative slack `tol`.
/// Where the bound is zero (`r ≤ −(N−1)/H`) the perimeter must be at most
/// `tol·Per(E)`.
pub fn step2_check(trace: &FlowTrace, h_curv: f64, n: usize, tol: f64) -> Result<Step2Report> {
    check_dims(h_curv, n)?;
    let i0 = trace.row_at_zero()?;
    let p0 = trace.perimeters[i0];
    let m = (n - 1) as f64;
    let mut excess = Vec::with_capacity(trace.r_grid.len());
    let mut dev: f64 = 0.0;
    let mut holds = true;
    for (i, &r) in trace.r_grid.iter().enumerate() {
        let base = 1.0 + h_curv * r / m;
        let bound = if base > 0.0 { p0 * base.powf(m) } else { 0.0 };
        let p = trace.perimeters[i];
        let e = if bound > 0.0 {
            if r >= 0.0 {
                dev = dev.max((p / bound - 1.0).abs());
            }
            p / bound - 1.0
        } else if p0 > 0.0 {
            p / p0
        } else {
            0.0
        };
        holds &= e <= tol;
        excess.push(e);
    }
    Ok(Step2Report {
        holds,
        worst_excess: excess.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        max_rel_deviation: dev,
        tolerance: tol,
        excess,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaximalityReport {
    pub holds: bool,
    /// `max_r (f(r) − f(0))/scale`, the worst rise above the value at `r = 0`.
    pub worst_rise: f64,
    /// `max_r |f(r) − f(0)|/scale`.
    pub flatness: f64,
    /// For `r ≥ 0`, whether `Per^{N/(N−1)}/|E_r|` stays below its value at 0.
    pub ratio_holds: bool,
    pub worst_ratio_rise: f64,
    pub tolerance: f64,
}

/// Checks that `f(r) = Per(E_r)^{N/(N−1)} − (N/(N−1))·H·Per(E)^{1/(N−1)}·|E_r|`
/// peaks at `r = 0`. Rises are measured relative to the magnitude of the terms
/// at that row, so `tol` is a relative estimator tolerance.
pub fn maximality_check(trace: &FlowTrace, h_curv: f64, n: usize, tol: f64) -> Result<MaximalityReport> {
    check_dims(h_curv, n)?;
    let i0 = trace.row_at_zero()?;
    let q = n as f64 / (n - 1) as f64;
    let p0 = trace.perimeters[i0];
    let coef = q * h_curv * p0.powf(1.0 / (n - 1) as f64);
    let f = |i: usize| trace.perimeters[i].powf(q) - coef * trace.volumes[i];
    let scale = |i: usize| {
        trace.perimeters[i]
            .powf(q)
            .max(coef * trace.volumes[i])
            .max(p0.powf(q))
    };
    let f0 = f(i0);
    let (mut rise, mut flat) = (f64::NEG_INFINITY, 0.0f64);
    for i in 0..trace.r_grid.len() {
        let d = (f(i) - f0) / scale(i);
        rise = rise.max(d);
        flat = flat.max(d.abs());
    }
    let v0 = trace.volumes[i0];
    let ratio0 = p0.powf(q) / v0;
    let mut ratio_rise = f64::NEG_INFINITY;
    for i in 0..trace.r_grid.len() {
        if trace.r_grid[i] >= 0.0 && trace.volumes[i] > 0.0 {
            ratio_rise = ratio_rise.max(trace.perimeters[i].powf(q) / trace.volumes[i] / ratio0 - 1.0);
        }
    }
    Ok(MaximalityReport {
        holds: rise <= tol,
        worst_rise: rise,
        flatness: flat,
        ratio_holds: ratio_rise <= tol,
        worst_ratio_rise: ratio_rise,
        tolerance: tol,
    })
}

/// Relative tolerance for `Per^{N/(N−1)}`-type expressions built from the estimators.
pub fn power_tolerance(n: usize) -> f64 {
    let q = n as f64 / (n - 1) as f64;
    q * PERIMETER_REL_TOL + VOLUME_REL_TOL
}

fn check_dims(h_curv: f64, n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("ambient dimension must be ≥ 2, got {n}")));
    }
    if !(h_curv >= 0.0) {
        return Err(Error::InvalidInput(format!("H must be ≥ 0, got {h_curv}")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Rescaled {
    pub set: VoxelSet,
    pub r0: f64,
    pub lambda0: f64,
}

/// `E′ = p′ + λ₀(E_{r₀} − p′)` with `|E′| = target_volume` (within 0.5%).
///
/// Without `inner_radial_bound`, `λ₀ = 1` and only `r₀` is searched. With a
/// bound `b`, `λ₀ = b / min_{E_{r₀}} |x|` so that `E′` reaches exactly radial
/// distance `b` from the edge, and `r₀` is chosen for the volume.
pub fn rescale_enlarge(
    set: &VoxelSet,
    tip: Point,
    target_volume: f64,
    inner_radial_bound: Option<f64>,
) -> Result<Rescaled> {
    let v0 = set.volume();
    if set.is_empty() {
        return Err(Error::InvalidInput("cannot rescale an empty set".into()));
    }
    if target_volume < v0 * (1.0 - 1e-12) {
        return Err(Error::InvalidInput(format!(
            "target volume {target_volume} is below |E| = {v0}"
        )));
    }
    if tip[0] != 0.0 || tip[1] != 0.0 {
        return Err(Error::InvalidInput("tip must lie on the edge x = 0".into()));
    }
    let grid = set.grid();
    let lat = *grid.lattice();
    let h = lat.spacing;
    let dist = Distances::of(set);
    let m_set = set
        .occupied()
        .map(|i| {
            let p = lat.center_of(i);
            p[0].hypot(p[1])
        })
        .fold(f64::INFINITY, f64::min);

    // `None` when E_r already crosses the inner bound (r too large).
    let build = |r: f64| -> Result<Option<(VoxelSet, f64)>> {
        let er = if r == 0.0 { set.clone() } else { dist.flow(set, r) };
        let Some(b) = inner_radial_bound else {
            return Ok(Some((er, 1.0)));
        };
        // distance to the axis is 1-Lipschitz, so E_r comes exactly r closer
        let m = m_set - r;
        if m < b {
            return Ok(None);
        }
        let lambda = b / m;
        let cells: Vec<bool> = (0..lat.len())
            .into_par_iter()
            .map(|i| {
                if !grid.eligible()[i] {
                    return false;
                }
                let p = lat.center_of(i);
                let q = [
                    p[0] / lambda,
                    p[1] / lambda,
                    tip[2] + (p[2] - tip[2]) / lambda,
                ];
                lat.locate(&q)
                    .map(|c| er.contains_cell(lat.index(c[0], c[1], c[2])))
                    .unwrap_or(false)
            })
            .collect();
        Ok(Some((VoxelSet::from_cells(grid, cells)?, lambda)))
    };

    let within = |v: f64| (v - target_volume).abs() <= 0.005 * target_volume;
    let Some((e, lambda)) = build(0.0)? else {
        return Err(Error::Unreachable("E already crosses the inner radial bound".into()));
    };
    if within(e.volume()) {
        return Ok(Rescaled {
            set: e,
            r0: 0.0,
            lambda0: lambda,
        });
    }
    // bracket: `hi` overshoots the volume or crosses the bound
    let (mut lo, mut hi) = (0.0, h);
    loop {
        match build(hi)? {
            None => break,
            Some((e, _)) if e.volume() >= target_volume => break,
            Some((e, _)) if e.volume() >= grid.capacity() * (1.0 - 1e-12) => {
                return Err(Error::Unreachable(format!(
                    "target volume {target_volume} exceeds what fits in the window"
                )));
            }
            Some(_) => {
                lo = hi;
                hi *= 2.0;
            }
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        match build(mid)? {
            None => hi = mid,
            Some((e, lambda)) => {
                let v = e.volume();
                if within(v) {
                    return Ok(Rescaled {
                        set: e,
                        r0: mid,
                        lambda0: lambda,
                    });
                }
                if v < target_volume {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
    }
    Err(Error::Unreachable(format!(
        "no radius in [{lo}, {hi}] hits volume {target_volume} within 0.5%"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Domain, VoxelGrid};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn free_grid(half: f64, h: f64) -> Arc<VoxelGrid> {
        Arc::new(VoxelGrid::boxed(Domain::Free, [-half; 3], [half; 3], h).unwrap())
    }

    fn ball(grid: &Arc<VoxelGrid>, r: f64) -> VoxelSet {
        VoxelSet::from_predicate(grid, |p| p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= r * r)
    }

    #[test]
    fn mollifier_preserves_constants_in_the_interior() {
        let g = free_grid(0.5, 0.1);
        let lat = g.lattice();
        let ones = vec![1.0; lat.len()];
        let m = mollify(lat, &ones);
        let mid = lat.index(lat.dims[0] / 2, lat.dims[1] / 2, lat.dims[2] / 2);
        assert!((m[mid] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn block_volume_is_exact() {
        let g = free_grid(1.0, 0.1);
        let block = VoxelSet::from_predicate(&g, |p| p.iter().all(|&x| (0.0..1.0).contains(&x)));
        assert_eq!(block.count(), 1000);
        assert!((volume(&block) - 1.0).abs() < 1e-12);
        assert_eq!(volume(&VoxelSet::empty(&g)), 0.0);
    }

    #[test]
    fn incremental_flips_match_a_fresh_evaluation() {
        let g = free_grid(0.6, 0.05);
        let b = ball(&g, 0.4);
        let mut field = PerimeterField::new(&g, b.cells());
        let lat = g.lattice();
        let mut cells = b.cells().to_vec();
        for (n, idx) in [(0, 0.41), (1, 0.39), (2, 0.0)]
            .iter()
            .map(|&(a, x)| (a, lat.locate(&[x, 0.01, 0.02]).unwrap()))
        {
            let i = lat.index(idx[0], idx[1], idx[2]);
            let on = n != 1;
            field.set(i, on);
            cells[i] = on;
        }
        let fresh = PerimeterField::new(&g, &cells);
        assert!((field.perimeter() - fresh.perimeter()).abs() < 1e-9);
        assert!((perimeter_value(&g, &cells) - fresh.perimeter()).abs() < 1e-9);
    }

    #[test]
    fn sphere_area_coarse() {
        let g = free_grid(1.3, 0.05);
        let p = relative_perimeter_default(&ball(&g, 1.0));
        assert!((p.value / (4.0 * PI) - 1.0).abs() < PERIMETER_REL_TOL);
        assert_eq!(p.wall_excluded_area, 0.0);
    }

    #[test]
    fn opening_is_inside_and_zero_is_identity() {
        let g = free_grid(1.0, 0.05);
        let cube = VoxelSet::from_predicate(&g, |p| p.iter().all(|x| x.abs() <= 0.4));
        assert_eq!(enlarge(&cube, 0.0), cube);
        let opened = enlarge(&enlarge(&cube, -0.15), 0.15);
        assert!(opened.count() > 0);
        assert!(opened.is_subset_of(&cube));
    }

    #[test]
    fn erosion_to_empty_gives_trailing_zeros() {
        let g = free_grid(0.8, 0.05);
        let t = flow_trace(&ball(&g, 0.5), &[-0.8, -0.6, 0.0]).unwrap();
        assert_eq!(t.volumes[0], 0.0);
        assert_eq!(t.perimeters[0], 0.0);
        assert_eq!(t.volumes[1], 0.0);
        let single = flow_trace(&ball(&g, 0.5), &[0.0]).unwrap();
        assert_eq!(single.r_grid.len(), 1);
    }

    #[test]
    fn flow_trace_rejects_bad_grids() {
        let g = free_grid(0.5, 0.1);
        let b = ball(&g, 0.3);
        assert!(flow_trace(&b, &[0.1, 0.2]).is_err());
        assert!(flow_trace(&b, &[0.0, -0.1]).is_err());
    }

    #[test]
    fn trace_csv_has_header() {
        let t = FlowTrace {
            r_grid: vec![0.0],
            volumes: vec![1.0],
            perimeters: vec![2.0],
            wall_excluded: vec![0.0],
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf, &["x".into()]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("# x\nr,volume,perimeter,wall_excluded\n0,1,2,0\n"));
    }
}
