//! Parametric competitors: balls and ball sectors centred on the edges,
//! walls and interior of a windowed domain.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, Point, VoxelGrid, VoxelSet};
use crate::measures::perimeter_value;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    /// Centred on an edge of the domain (the wedge edge or a corner curve of `C`).
    EdgeBallSector,
    /// Centred on a flat or conical wall.
    WallCap,
    /// Centred in the interior.
    FreeBall,
    /// An explicit set, e.g. the output of a local search.
    Voxel,
}

impl CandidateKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CandidateKind::EdgeBallSector => "edge_ball_sector",
            CandidateKind::WallCap => "wall_cap",
            CandidateKind::FreeBall => "free_ball",
            CandidateKind::Voxel => "voxel",
        }
    }
}

impl std::fmt::Display for CandidateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub kind: CandidateKind,
    pub center: Point,
    /// Distance from the centre to the farthest included cell.
    pub radius: f64,
    pub set: VoxelSet,
    pub per: f64,
}

/// Centres of every parametric family on the section at height `t`.
pub(crate) fn family_centers(domain: &Domain, t: f64, rho: f64) -> Result<Vec<(CandidateKind, Point)>> {
    let mut out = Vec::new();
    match domain {
        Domain::Free => out.push((CandidateKind::FreeBall, [0.0, 0.0, t])),
        Domain::HalfSpace => {
            out.push((CandidateKind::WallCap, [0.0, 0.0, t]));
            out.push((CandidateKind::FreeBall, [0.5 * rho, 0.0, t]));
        }
        Domain::Body(b) => {
            let th = b.cone().half_angle;
            let phi = b.phi(t)?;
            if phi <= 0.0 {
                out.push((CandidateKind::EdgeBallSector, [0.0, 0.0, t]));
                let s = 0.5 * rho;
                out.push((CandidateKind::WallCap, [s * th.cos(), s * th.sin(), t]));
                out.push((CandidateKind::FreeBall, [0.5 * rho, 0.0, t]));
            } else {
                // the two corners are mirror images; one suffices on a symmetric lattice
                out.push((CandidateKind::EdgeBallSector, [phi, phi * th.tan(), t]));
                out.push((CandidateKind::WallCap, [phi, 0.0, t]));
                out.push((CandidateKind::FreeBall, [0.5 * (phi + rho), 0.0, t]));
            }
        }
    }
    Ok(out
        .into_iter()
        .filter(|(_, p)| p[0].hypot(p[1]) <= rho)
        .collect())
}

/// Centres along the window's height at `count` evenly spaced levels.
pub(crate) fn sweep_centers(grid: &VoxelGrid, count: usize) -> Result<Vec<(CandidateKind, Point)>> {
    let w = grid
        .window()
        .ok_or_else(|| Error::InvalidInput("candidates need a windowed grid".into()))?;
    let mut out = Vec::new();
    for k in 0..count {
        let t = w.t0 + (k as f64 + 0.5) * w.extent / count as f64;
        out.extend(family_centers(grid.domain(), t, w.radial_bound)?);
    }
    Ok(out)
}

/// Eligible cells sorted by distance to `center`, ties by index; distances squared.
pub(crate) fn cells_by_distance(grid: &VoxelGrid, center: &Point, keep: usize) -> Vec<(f64, usize)> {
    let lat = grid.lattice();
    let mut d: Vec<(f64, usize)> = grid
        .eligible()
        .iter()
        .enumerate()
        .filter(|(_, &e)| e)
        .map(|(i, _)| {
            let p = lat.center_of(i);
            let d2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2) + (p[2] - center[2]).powi(2);
            (d2, i)
        })
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if keep < d.len() {
        d.select_nth_unstable_by(keep, cmp);
        d.truncate(keep);
    }
    d.sort_unstable_by(cmp);
    d
}

/// Cell count realising volume `v`, checked against the window's capacity.
pub(crate) fn target_cells(grid: &VoxelGrid, v: f64) -> Result<usize> {
    let n = (v / grid.lattice().cell_volume()).round() as usize;
    let cap = grid.eligible().iter().filter(|&&e| e).count();
    if n == 0 || n > cap {
        return Err(Error::CapacityExceeded {
            target: v,
            capacity: grid.capacity(),
        });
    }
    Ok(n)
}

/// The `n` eligible cells nearest to `center`: the ball about `center`
/// clipped to the domain, with volume exact to one cell.
pub(crate) fn nearest_cells(grid: &Arc<VoxelGrid>, center: &Point, n: usize) -> (VoxelSet, f64) {
    let near = cells_by_distance(grid, center, n);
    let mut cells = vec![false; grid.lattice().len()];
    for &(_, i) in &near {
        cells[i] = true;
    }
    let radius = near.last().map_or(0.0, |&(d2, _)| d2.sqrt());
    (VoxelSet::from_cells(grid, cells).expect("lattice-sized"), radius)
}

/// Every family swept over `centers` heights in the window, each realised at
/// volume `v` and measured. Sorted by perimeter, ties by generation order.
pub fn seed_candidates(grid: &Arc<VoxelGrid>, v: f64, centers: usize) -> Result<Vec<Candidate>> {
    if centers == 0 {
        return Err(Error::InvalidInput("need at least one centre".into()));
    }
    let n = target_cells(grid, v)?;
    let loci = sweep_centers(grid, centers)?;
    if loci.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let mut out: Vec<(usize, Candidate)> = loci
        .par_iter()
        .enumerate()
        .map(|(order, &(kind, center))| {
            let (set, radius) = nearest_cells(grid, &center, n);
            let per = perimeter_value(grid, set.cells());
            (
                order,
                Candidate {
                    kind,
                    center,
                    radius,
                    set,
                    per,
                },
            )
        })
        .collect();
    out.sort_by(|a, b| a.1.per.total_cmp(&b.1.per).then(a.0.cmp(&b.0)));
    Ok(out.into_iter().map(|(_, c)| c).collect())
}
