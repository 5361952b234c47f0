//! The body `C = (Σ×ℝ) ∩ {x·e₁ ≥ φ(t)} ⊂ ℝ³`, the reference domains used to
//! bracket its profile, and their voxelization over finite windows.
//!
//! Points are `[x₁, x₂, t]`. Because `C` is convex, intrinsic and Euclidean
//! distances agree inside it, so dilations and wall distances are Euclidean.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::cones::ConeSpec;
use crate::phi::PhiCurve;
use crate::{Error, Result};

pub type Point = [f64; 3];

/// The lower boundary `t ↦ φ(t)` of a graph body.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// `φ ≡ c`; `c = 0` gives the wedge `Σ×ℝ`, `c > 0` the cylinder `Σ_c×ℝ`.
    Constant(f64),
    /// `φ(t) = value + slope·(t − t_ref)`.
    Affine { value: f64, slope: f64, t_ref: f64 },
    /// A solved and extended curve.
    Curve(PhiCurve),
}

impl Profile {
    pub fn value(&self, t: f64) -> Result<f64> {
        match self {
            Profile::Constant(c) => Ok(*c),
            Profile::Affine {
                value,
                slope,
                t_ref,
            } => Ok(value + slope * (t - t_ref)),
            Profile::Curve(c) => c.value(t),
        }
    }

    pub fn slope(&self, t: f64) -> Result<f64> {
        match self {
            Profile::Constant(_) => Ok(0.0),
            Profile::Affine { slope, .. } => Ok(*slope),
            Profile::Curve(c) => c.slope(t),
        }
    }

    pub fn t_range(&self) -> (f64, f64) {
        match self {
            Profile::Curve(c) => (c.t_min(), c.t_max()),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn max_abs_slope(&self) -> f64 {
        match self {
            Profile::Constant(_) => 0.0,
            Profile::Affine { slope, .. } => slope.abs(),
            Profile::Curve(c) => c.dphi_values().iter().fold(0.0, |m, d| m.max(d.abs())),
        }
    }
}

/// A convex body `(Σ×ℝ) ∩ {x₁ ≥ φ(t)}` over a planar sector.
#[derive(Debug, Clone, PartialEq)]
pub struct Body {
    cone: ConeSpec,
    profile: Profile,
}

impl Body {
    fn with_profile(cone: ConeSpec, profile: Profile) -> Result<Self> {
        cone.validate()?;
        if cone.base_dim != 2 {
            return Err(Error::InvalidInput(format!(
                "bodies are built over planar sectors (base_dim = 2), got {}",
                cone.base_dim
            )));
        }
        Ok(Self { cone, profile })
    }

    /// The body generated by a solved profile curve.
    pub fn new(cone: ConeSpec, curve: PhiCurve) -> Result<Self> {
        Self::with_profile(cone, Profile::Curve(curve))
    }

    /// `Σ×ℝ`.
    pub fn wedge(cone: ConeSpec) -> Result<Self> {
        Self::with_profile(cone, Profile::Constant(0.0))
    }

    /// `Σ_α×ℝ`, the cylinder over the truncated sector.
    pub fn cylinder(cone: ConeSpec, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidInput(format!("truncation must be positive, got {alpha}")));
        }
        Self::with_profile(cone, Profile::Constant(alpha))
    }

    /// `φ(t) = value + slope·(t − t_ref)`, a locally affine comparison body.
    pub fn affine(cone: ConeSpec, value: f64, slope: f64, t_ref: f64) -> Result<Self> {
        Self::with_profile(
            cone,
            Profile::Affine {
                value,
                slope,
                t_ref,
            },
        )
    }

    pub fn cone(&self) -> &ConeSpec {
        &self.cone
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn phi(&self, t: f64) -> Result<f64> {
        self.profile.value(t)
    }

    /// `(x, t) ∈ C` iff `x ∈ Σ` and `x₁ ≥ φ(t)`.
    pub fn contains(&self, p: &Point) -> Result<bool> {
        let phi = self.profile.value(p[2])?;
        Ok(self.cone.contains(&p[..2]) && p[0] >= phi)
    }

    fn tip_data(&self) -> Result<(f64, f64)> {
        let p0 = self.profile.value(0.0)?;
        let s0 = self.profile.slope(0.0)?;
        if !(s0 < 0.0) {
            return Err(Error::InvalidInput(format!(
                "affine cone needs phi'(0) < 0, got {s0}"
            )));
        }
        Ok((p0, s0))
    }

    /// Membership in `C′ = (Σ×ℝ) ∩ {x₁ ≥ φ(0) + tφ′(0)}`.
    pub fn affine_cone_contains(&self, p: &Point) -> Result<bool> {
        let (p0, s0) = self.tip_data()?;
        Ok(self.cone.contains(&p[..2]) && p[0] >= p0 + p[2] * s0)
    }

    /// Tip `(0, 0, −φ(0)/φ′(0))` of the affine cone `C′`.
    pub fn affine_cone_tip(&self) -> Result<Point> {
        let (p0, s0) = self.tip_data()?;
        Ok([0.0, 0.0, -p0 / s0])
    }

    /// Membership in the asymptotic cone `(Σ×ℝ) ∩ {x₁ ≥ φ′(0)t}`.
    pub fn asymptotic_cone_contains(&self, p: &Point) -> Result<bool> {
        let s0 = self.profile.slope(0.0)?;
        Ok(self.cone.contains(&p[..2]) && p[0] >= s0 * p[2])
    }

    /// Distance from `p ∈ C` to `∂C`: the smaller of the distances to the cone
    /// wall and to the graph wall `{x₁ = φ(t)}`.
    pub fn wall_distance(&self, p: &Point) -> Result<f64> {
        if !self.contains(p)? {
            return Err(Error::NotInside(*p));
        }
        let cone = self.cone.wall_distance(&p[..2]);
        let graph = self.graph_distance(p[0], p[2], cone)?;
        Ok(cone.min(graph))
    }

    /// Distance in the `(x₁, t)` plane from an epigraph point to the graph of `φ`,
    /// computed as the infimum over supporting tangent lines (the epigraph is convex).
    /// Returns early with `cap` when the graph is provably farther than `cap`.
    fn graph_distance(&self, x1: f64, t: f64, cap: f64) -> Result<f64> {
        let gap = x1 - self.profile.value(t)?;
        match &self.profile {
            Profile::Constant(_) => Ok(gap),
            Profile::Affine { slope, .. } => Ok(gap / (1.0 + slope * slope).sqrt()),
            Profile::Curve(curve) => {
                let smax = self.profile.max_abs_slope();
                if gap / (1.0 + smax * smax).sqrt() >= cap {
                    return Ok(cap);
                }
                let lo = (t - gap).max(curve.t_min());
                let hi = (t + gap).min(curve.t_max());
                let line = |s: f64| -> f64 {
                    let v = curve.value(s).unwrap_or(f64::NAN);
                    let d = curve.slope(s).unwrap_or(f64::NAN);
                    (x1 - v - d * (t - s)) / (1.0 + d * d).sqrt()
                };
                Ok(minimize_1d(&line, lo, hi).min(gap))
            }
        }
    }
}

/// Global-then-local minimisation of a 1-D function on `[lo, hi]`.
fn minimize_1d<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> f64 {
    if !(hi > lo) {
        return f(lo);
    }
    const SAMPLES: usize = 32;
    let step = (hi - lo) / SAMPLES as f64;
    let (mut best_s, mut best) = (lo, f(lo));
    for k in 1..=SAMPLES {
        let s = lo + k as f64 * step;
        let v = f(s);
        if v < best {
            best = v;
            best_s = s;
        }
    }
    // golden section inside the bracket around the best sample
    let (mut a, mut b) = ((best_s - step).max(lo), (best_s + step).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-10 * (1.0 + hi - lo) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    best.min(fc).min(fd)
}

/// A domain in which relative perimeters are measured.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    /// `ℝ³` without walls.
    Free,
    /// `{x₁ ≥ 0}` with a flat wall.
    HalfSpace,
    Body(Body),
}

impl Domain {
    pub fn contains(&self, p: &Point) -> Result<bool> {
        match self {
            Domain::Free => Ok(true),
            Domain::HalfSpace => Ok(p[0] >= 0.0),
            Domain::Body(b) => b.contains(p),
        }
    }

    pub fn wall_distance(&self, p: &Point) -> Result<f64> {
        match self {
            Domain::Free => Ok(f64::INFINITY),
            Domain::HalfSpace => {
                if p[0] < 0.0 {
                    Err(Error::NotInside(*p))
                } else {
                    Ok(p[0])
                }
            }
            Domain::Body(b) => b.wall_distance(p),
        }
    }

    /// Wall distance, or `cap` when it is at least `cap` (cheap for far cells).
    fn capped_wall_distance(&self, p: &Point, cap: f64) -> Result<f64> {
        match self {
            Domain::Free => Ok(f64::INFINITY),
            Domain::HalfSpace => Ok(p[0].min(cap)),
            Domain::Body(b) => {
                let cone = b.cone.wall_distance(&p[..2]).min(cap);
                Ok(cone.min(b.graph_distance(p[0], p[2], cone)?))
            }
        }
    }

    pub fn body(&self) -> Option<&Body> {
        match self {
            Domain::Body(b) => Some(b),
            _ => None,
        }
    }

    fn x1_floor(&self) -> Option<f64> {
        match self {
            Domain::Free => None,
            _ => Some(0.0),
        }
    }
}

/// The slab `B_ρ(0) × [t₀, t₀+R]` in which competitors are confined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct Window {
    pub t0: f64,
    pub extent: f64,
    pub radial_bound: f64,
}

impl Window {
    pub fn new(t0: f64, extent: f64, radial_bound: f64) -> Result<Self> {
        if !(extent > 0.0 && radial_bound > 0.0) || !t0.is_finite() {
            return Err(Error::InvalidInput(format!(
                "window needs extent > 0 and radial bound > 0 (got {extent}, {radial_bound})"
            )));
        }
        Ok(Self {
            t0,
            extent,
            radial_bound,
        })
    }

    pub fn contains(&self, p: &Point) -> bool {
        p[2] >= self.t0
            && p[2] <= self.t0 + self.extent
            && p[0] * p[0] + p[1] * p[1] <= self.radial_bound * self.radial_bound
    }

    /// Checks that the window meets `C`: on the axis, `(s e₁, t)` lies in `C`
    /// for `φ(t) ≤ s ≤ ρ`, and `φ` is smallest at the far end of the slab.
    pub fn check_meets(&self, domain: &Domain) -> Result<()> {
        if let Domain::Body(b) = domain {
            let far = b.phi(self.t0 + self.extent)?;
            let near = b.phi(self.t0)?;
            if far.min(near) >= self.radial_bound {
                return Err(Error::EmptyWindow);
            }
        }
        Ok(())
    }
}

/// A regular lattice of cubic cells; cell `(i, j, k)` has centre
/// `origin + (i + ½, j + ½, k + ½)·spacing`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lattice {
    pub origin: Point,
    pub spacing: f64,
    pub dims: [usize; 3],
}

impl Lattice {
    pub fn covering(lo: Point, hi: Point, spacing: f64, pad: usize) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::InvalidInput(format!("spacing must be positive, got {spacing}")));
        }
        let mut dims = [0; 3];
        let mut origin = [0.0; 3];
        for a in 0..3 {
            if !(hi[a] > lo[a]) {
                return Err(Error::InvalidInput("lattice box is empty".into()));
            }
            let n = ((hi[a] - lo[a]) / spacing - 1e-9).ceil().max(1.0) as usize;
            dims[a] = n + 2 * pad;
            origin[a] = lo[a] - pad as f64 * spacing;
        }
        Ok(Self {
            origin,
            spacing,
            dims,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.dims[2];
        let rest = idx / self.dims[2];
        [rest / self.dims[1], rest % self.dims[1], k]
    }

    #[inline]
    pub fn center(&self, c: [usize; 3]) -> Point {
        let h = self.spacing;
        [
            self.origin[0] + (c[0] as f64 + 0.5) * h,
            self.origin[1] + (c[1] as f64 + 0.5) * h,
            self.origin[2] + (c[2] as f64 + 0.5) * h,
        ]
    }

    #[inline]
    pub fn center_of(&self, idx: usize) -> Point {
        self.center(self.coords(idx))
    }

    /// Cell containing `p`, if any.
    pub fn locate(&self, p: &Point) -> Option<[usize; 3]> {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.spacing).floor();
            if f < 0.0 || f >= self.dims[a] as f64 {
                return None;
            }
            c[a] = f as usize;
        }
        Some(c)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(3)
    }
}

/// Cells kept between the window and the lattice border so that smoothing
/// stencils never reach past the lattice.
pub const LATTICE_PAD: usize = 4;

/// Wall distances are resolved exactly up to this many cells; farther cells store the cap.
const WALL_CAP_CELLS: f64 = 8.0;

/// A voxelized domain over a window: which cells lie in the domain, which may
/// be occupied by competitors, and how far each cell is from the wall.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    lattice: Lattice,
    domain: Domain,
    inside: Vec<bool>,
    eligible: Vec<bool>,
    wall: Vec<f32>,
    window: Option<Window>,
    denominator: std::sync::OnceLock<Vec<f64>>,
}

impl VoxelGrid {
    /// Voxelizes `domain` over a box, marking every inside cell of the box as eligible.
    pub fn boxed(domain: Domain, lo: Point, hi: Point, spacing: f64) -> Result<Self> {
        let lattice = Lattice::covering(lo, hi, spacing, LATTICE_PAD)?;
        let inner = |p: &Point| (0..3).all(|a| p[a] >= lo[a] && p[a] <= hi[a]);
        Self::build(domain, lattice, None, &inner)
    }

    fn build(
        domain: Domain,
        lattice: Lattice,
        window: Option<Window>,
        eligible_region: &(dyn Fn(&Point) -> bool + Sync),
    ) -> Result<Self> {
        let cap = WALL_CAP_CELLS * lattice.spacing;
        let cells: Vec<(bool, bool, f32)> = (0..lattice.len())
            .into_par_iter()
            .map(|idx| {
                let p = lattice.center_of(idx);
                let inside = domain.contains(&p)?;
                if !inside {
                    return Ok((false, false, 0.0));
                }
                let wall = domain.capped_wall_distance(&p, cap)? as f32;
                Ok((true, eligible_region(&p), wall))
            })
            .collect::<Result<_>>()?;
        let mut inside = Vec::with_capacity(cells.len());
        let mut eligible = Vec::with_capacity(cells.len());
        let mut wall = Vec::with_capacity(cells.len());
        for (i, e, w) in cells {
            inside.push(i);
            eligible.push(e);
            wall.push(w);
        }
        if !eligible.iter().any(|&e| e) {
            return Err(Error::EmptyWindow);
        }
        Ok(Self {
            lattice,
            domain,
            inside,
            eligible,
            wall,
            window,
            denominator: Default::default(),
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn window(&self) -> Option<&Window> {
        self.window.as_ref()
    }

    pub fn spacing(&self) -> f64 {
        self.lattice.spacing
    }

    /// Cell centre lies in the domain.
    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    /// Cell may belong to a competitor (inside the domain and the window).
    pub fn eligible(&self) -> &[bool] {
        &self.eligible
    }

    /// Distance of each inside cell centre to the wall, capped at a few cells.
    pub fn wall_distances(&self) -> &[f32] {
        &self.wall
    }

    pub fn wall_cap(&self) -> f64 {
        WALL_CAP_CELLS * self.lattice.spacing
    }

    /// The whole eligible region as a set (`C ∩ window`).
    pub fn occupancy(self: &Arc<Self>) -> VoxelSet {
        VoxelSet {
            grid: Arc::clone(self),
            cells: self.eligible.clone(),
        }
    }

    pub fn capacity(&self) -> f64 {
        self.eligible.iter().filter(|&&e| e).count() as f64 * self.lattice.cell_volume()
    }

    /// Smoothed domain indicator, shared by every perimeter evaluation on this grid.
    pub(crate) fn smoothed_inside(&self) -> &[f64] {
        self.denominator.get_or_init(|| {
            let mask: Vec<f64> = self.inside.iter().map(|&b| b as u8 as f64).collect();
            crate::measures::mollify(&self.lattice, &mask)
        })
    }
}

/// Voxelizes `C ∩ window` at the given spacing.
pub fn voxelize(domain: &Domain, window: &Window, spacing: f64) -> Result<Arc<VoxelGrid>> {
    if !(spacing > 0.0) || spacing > window.extent / 8.0 {
        return Err(Error::InvalidInput(format!(
            "spacing {spacing} must be positive and at most extent/8 = {}",
            window.extent / 8.0
        )));
    }
    window.check_meets(domain)?;
    let rho = window.radial_bound;
    let lo = [domain.x1_floor().unwrap_or(-rho), -rho, window.t0];
    let hi = [rho, rho, window.t0 + window.extent];
    let lattice = Lattice::covering(lo, hi, spacing, LATTICE_PAD)?;
    let w = *window;
    let grid = VoxelGrid::build(domain.clone(), lattice, Some(w), &move |p| w.contains(p))?;
    Ok(Arc::new(grid))
}

/// A set of cells of a [`VoxelGrid`].
#[derive(Debug, Clone)]
pub struct VoxelSet {
    grid: Arc<VoxelGrid>,
    cells: Vec<bool>,
}

impl PartialEq for VoxelSet {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) && self.cells == other.cells
    }
}

impl VoxelSet {
    pub fn empty(grid: &Arc<VoxelGrid>) -> Self {
        Self {
            grid: Arc::clone(grid),
            cells: vec![false; grid.lattice.len()],
        }
    }

    /// Eligible cells whose centre satisfies `pred`.
    pub fn from_predicate(grid: &Arc<VoxelGrid>, pred: impl Fn(&Point) -> bool + Sync) -> Self {
        let lat = grid.lattice;
        let cells = (0..lat.len())
            .into_par_iter()
            .map(|i| grid.eligible[i] && pred(&lat.center_of(i)))
            .collect();
        Self {
            grid: Arc::clone(grid),
            cells,
        }
    }

    /// Builds a set from raw cell flags; flags outside the eligible region are dropped.
    pub fn from_cells(grid: &Arc<VoxelGrid>, mut cells: Vec<bool>) -> Result<Self> {
        if cells.len() != grid.lattice.len() {
            return Err(Error::InvalidInput("cell vector does not match the lattice".into()));
        }
        for (c, &e) in cells.iter_mut().zip(&grid.eligible) {
            *c &= e;
        }
        Ok(Self {
            grid: Arc::clone(grid),
            cells,
        })
    }

    pub fn grid(&self) -> &Arc<VoxelGrid> {
        &self.grid
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&c| c)
    }

    pub fn volume(&self) -> f64 {
        self.count() as f64 * self.grid.lattice.cell_volume()
    }

    pub fn contains_cell(&self, idx: usize) -> bool {
        self.cells[idx]
    }

    pub fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| c.then_some(i))
    }

    pub fn is_subset_of(&self, other: &VoxelSet) -> bool {
        self.cells.iter().zip(&other.cells).all(|(&a, &b)| !a || b)
    }

    /// Number of cells in `self` but not in `other`.
    pub fn difference_count(&self, other: &VoxelSet) -> usize {
        self.cells
            .iter()
            .zip(&other.cells)
            .filter(|(&a, &b)| a && !b)
            .count()
    }

    /// Diameter of the union of the closed occupied cells. Only boundary cells
    /// can realise it, so the pairwise search runs over those.
    pub fn diameter(&self) -> f64 {
        let pts: Vec<Point> = self.boundary_centers();
        if pts.is_empty() {
            return 0.0;
        }
        let h = self.grid.lattice.spacing;
        // farthest corners of two equal axis-aligned cubes
        let far = |p: &Point, q: &Point| -> f64 {
            (0..3).map(|a| ((p[a] - q[a]).abs() + h).powi(2)).sum::<f64>().sqrt()
        };
        pts.par_iter()
            .enumerate()
            .map(|(i, p)| pts[i..].iter().map(|q| far(p, q)).fold(0.0f64, f64::max))
            .reduce(|| 0.0, f64::max)
    }

    /// Centres of occupied cells with at least one empty face neighbour.
    pub fn boundary_centers(&self) -> Vec<Point> {
        let lat = self.grid.lattice;
        let [nx, ny, nz] = lat.dims;
        self.occupied()
            .filter(|&idx| {
                let [i, j, k] = lat.coords(idx);
                if i == 0 || j == 0 || k == 0 || i + 1 == nx || j + 1 == ny || k + 1 == nz {
                    return true;
                }
                let s = [ny * nz, nz, 1];
                s.iter()
                    .any(|&d| !self.cells[idx - d] || !self.cells[idx + d])
            })
            .map(|idx| lat.center_of(idx))
            .collect()
    }
}
