//! Upper bounds on isoperimetric profiles: the best relative perimeter found
//! at a prescribed volume inside a window, from parametric seeds refined by
//! annealing.

mod anneal;
mod seeds;

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{voxelize, Domain, Point, VoxelGrid, VoxelSet, Window};
use crate::measures::perimeter_value;
use crate::tables::{fmt_f64, parse_f64, read_csv, write_csv};
use crate::{Error, Result};

pub use anneal::{local_search, Schedule, SearchOutcome};
pub use seeds::{seed_candidates, Candidate, CandidateKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeConfig {
    /// Voxel spacing.
    pub spacing: f64,
    /// Annealing moves per refined seed.
    pub budget: usize,
    pub seed: u64,
    /// Heights per family at which seeds are centred.
    pub centers: usize,
    /// How many of the best seeds are refined by annealing.
    pub refine: usize,
    pub schedule: Schedule,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            spacing: 0.05,
            budget: 20_000,
            seed: 1,
            centers: 32,
            refine: 2,
            schedule: Schedule::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProfilePoint {
    pub v: f64,
    pub per: f64,
    pub window: Window,
    pub candidate_kind: CandidateKind,
    pub seed: u64,
    pub iterations: usize,
    /// Face-connected components of the best set (connectivity is not enforced).
    pub components: usize,
    pub set: VoxelSet,
}

/// One CSV row of a profile curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub v: f64,
    pub per: f64,
    pub window_t0: f64,
    pub window_r: f64,
    pub seed: u64,
    pub iterations: usize,
    pub candidate_kind: CandidateKind,
}

impl From<&ProfilePoint> for ProfileRow {
    fn from(p: &ProfilePoint) -> Self {
        Self {
            v: p.v,
            per: p.per,
            window_t0: p.window.t0,
            window_r: p.window.extent,
            seed: p.seed,
            iterations: p.iterations,
            candidate_kind: p.candidate_kind,
        }
    }
}

/// Sampled profile, sorted by volume.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileCurve {
    pub rows: Vec<ProfileRow>,
}

const PROFILE_HEADER: [&str; 7] = ["v", "per", "window_t0", "window_R", "seed", "iterations", "candidate_kind"];

impl ProfileCurve {
    /// A curve from bare `(v, I(v))` samples, for analysis of synthetic or exact profiles.
    pub fn from_samples(samples: &[(f64, f64)]) -> Result<Self> {
        if samples.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::InvalidInput("profile volumes must be strictly increasing".into()));
        }
        Ok(Self {
            rows: samples
                .iter()
                .map(|&(v, per)| ProfileRow {
                    v,
                    per,
                    window_t0: 0.0,
                    window_r: 0.0,
                    seed: 0,
                    iterations: 0,
                    candidate_kind: CandidateKind::Voxel,
                })
                .collect(),
        })
    }

    pub fn volumes(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.v).collect()
    }

    pub fn perimeters(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.per).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W, meta: &[String]) -> Result<()> {
        let rows = self.rows.iter().map(|r| {
            vec![
                fmt_f64(r.v),
                fmt_f64(r.per),
                fmt_f64(r.window_t0),
                fmt_f64(r.window_r),
                r.seed.to_string(),
                r.iterations.to_string(),
                r.candidate_kind.to_string(),
            ]
        });
        write_csv(out, meta, &PROFILE_HEADER, rows)
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let rows = read_csv(input, &PROFILE_HEADER)?;
        let kind = |s: &str| -> Result<CandidateKind> {
            Ok(match s {
                "edge_ball_sector" => CandidateKind::EdgeBallSector,
                "wall_cap" => CandidateKind::WallCap,
                "free_ball" => CandidateKind::FreeBall,
                "voxel" => CandidateKind::Voxel,
                other => return Err(Error::Parse(format!("unknown candidate kind {other:?}"))),
            })
        };
        let parse_int = |s: &str| s.parse::<u64>().map_err(|e| Error::Parse(format!("bad integer {s:?}: {e}")));
        let rows = rows
            .iter()
            .map(|r| {
                Ok(ProfileRow {
                    v: parse_f64(&r[0])?,
                    per: parse_f64(&r[1])?,
                    window_t0: parse_f64(&r[2])?,
                    window_r: parse_f64(&r[3])?,
                    seed: parse_int(&r[4])?,
                    iterations: parse_int(&r[5])? as usize,
                    candidate_kind: kind(&r[6])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }
}

/// Best set of volume `v` found in `domain ∩ window`.
pub fn optimize_in_window(domain: &Domain, window: &Window, v: f64, cfg: &OptimizeConfig) -> Result<ProfilePoint> {
    let grid = voxelize(domain, window, cfg.spacing)?;
    optimize_on_grid(&grid, v, cfg)
}

/// [`optimize_in_window`] on an already voxelized window.
pub fn optimize_on_grid(grid: &Arc<VoxelGrid>, v: f64, cfg: &OptimizeConfig) -> Result<ProfilePoint> {
    let window = *grid
        .window()
        .ok_or_else(|| Error::InvalidInput("optimization needs a windowed grid".into()))?;
    let seeds = seed_candidates(grid, v, cfg.centers)?;
    let refined: Vec<(CandidateKind, SearchOutcome)> = seeds
        .par_iter()
        .take(cfg.refine.max(1))
        .enumerate()
        .map(|(i, c)| {
            let out = local_search(&c.set, c.set.volume(), cfg.budget, stream_seed(cfg.seed, i), &cfg.schedule)?;
            Ok((c.kind, out))
        })
        .collect::<Result<_>>()?;
    // first minimum wins, so ties resolve to the better-ranked seed
    let (kind, best) = refined
        .into_iter()
        .reduce(|a, b| if b.1.per < a.1.per { b } else { a })
        .expect("at least one seed");
    Ok(ProfilePoint {
        v,
        per: best.per,
        window,
        candidate_kind: kind,
        seed: cfg.seed,
        iterations: best.iterations,
        components: components(&best.set),
        set: best.set,
    })
}

fn stream_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64)
}

/// For each `v`, the best point over all windows; ties go to the smallest `t₀`.
pub fn profile_estimate(domain: &Domain, v_grid: &[f64], windows: &[Window], cfg: &OptimizeConfig) -> Result<(ProfileCurve, Vec<ProfilePoint>)> {
    if v_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput("v grid must be strictly increasing".into()));
    }
    if windows.is_empty() {
        return Err(Error::InvalidInput("need at least one window".into()));
    }
    let mut order: Vec<&Window> = windows.iter().collect();
    order.sort_by(|a, b| a.t0.total_cmp(&b.t0));
    let mut points = Vec::with_capacity(v_grid.len());
    for &v in v_grid {
        let mut best: Option<ProfilePoint> = None;
        for w in &order {
            let p = optimize_in_window(domain, w, v, cfg)?;
            if best.as_ref().is_none_or(|b| p.per < b.per) {
                best = Some(p);
            }
        }
        points.push(best.expect("nonempty windows"));
    }
    let curve = ProfileCurve {
        rows: points.iter().map(ProfileRow::from).collect(),
    };
    Ok((curve, points))
}

/// Face-connected components of a set.
pub fn components(set: &VoxelSet) -> usize {
    let lat = set.grid().lattice();
    let strides = [lat.dims[1] * lat.dims[2], lat.dims[2], 1];
    let mut seen = vec![false; lat.len()];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for start in set.occupied() {
        if seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let c = lat.coords(i);
            for a in 0..3 {
                let lo = (c[a] > 0).then(|| i - strides[a]);
                let hi = (c[a] + 1 < lat.dims[a]).then(|| i + strides[a]);
                for n in lo.into_iter().chain(hi) {
                    if set.contains_cell(n) && !seen[n] {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
    }
    count
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DenseSweep {
    pub per: f64,
    pub kind: CandidateKind,
    pub center: Point,
    pub radius: f64,
    pub evaluations: usize,
}

/// Exhaustive parametric sweep without local search: every family centre at
/// `centers` heights, each with `radii` radii spanning ±10% about the radius
/// that realises `v`. Per centre, the perimeter at volume `v` is interpolated
/// linearly in volume; the minimum over centres is returned. With a single
/// radius the realising radius itself is used.
pub fn dense_sweep_oracle(domain: &Domain, window: &Window, v: f64, centers: usize, radii: usize, spacing: f64) -> Result<DenseSweep> {
    if centers == 0 || radii == 0 {
        return Err(Error::InvalidInput("dense sweep needs at least one centre and radius".into()));
    }
    let grid = voxelize(domain, window, spacing)?;
    let n = seeds::target_cells(&grid, v)?;
    let loci = seeds::sweep_centers(&grid, centers)?;
    let cell = grid.lattice().cell_volume();
    let per_center: Vec<Option<DenseSweep>> = loci
        .par_iter()
        .map(|&(kind, center)| {
            let order = seeds::cells_by_distance(&grid, &center, usize::MAX);
            let r_star = order[n.min(order.len()) - 1].0.sqrt();
            let rs: Vec<f64> = if radii == 1 {
                vec![r_star]
            } else {
                (0..radii)
                    .map(|k| r_star * (0.9 + 0.2 * k as f64 / (radii - 1) as f64))
                    .collect()
            };
            let mut cells = vec![false; grid.lattice().len()];
            let mut filled = 0;
            let mut samples = Vec::with_capacity(rs.len());
            for &r in &rs {
                let r2 = r * r * (1.0 + 1e-12);
                while filled < order.len() && order[filled].0 <= r2 {
                    cells[order[filled].1] = true;
                    filled += 1;
                }
                samples.push((filled as f64 * cell, perimeter_value(&grid, &cells), r));
            }
            interpolate_at(&samples, v).map(|(per, radius)| DenseSweep {
                per,
                kind,
                center,
                radius,
                evaluations: rs.len(),
            })
        })
        .collect();
    let evaluations = per_center.iter().flatten().map(|d| d.evaluations).sum();
    let mut best = per_center
        .into_iter()
        .flatten()
        .reduce(|a, b| if b.per < a.per { b } else { a })
        .ok_or_else(|| Error::Unreachable(format!("no parametric family brackets volume {v}")))?;
    best.evaluations = evaluations;
    Ok(best)
}

/// Linear interpolation of `(volume, per, radius)` samples at volume `v`;
/// a single sample is returned as is.
fn interpolate_at(samples: &[(f64, f64, f64)], v: f64) -> Option<(f64, f64)> {
    if let [only] = samples {
        return Some((only.1, only.2));
    }
    samples.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        if a.0 <= v && v <= b.0 {
            if b.0 == a.0 {
                return Some((a.1.min(b.1), a.2));
            }
            let s = (v - a.0) / (b.0 - a.0);
            Some((a.1 + s * (b.1 - a.1), a.2 + s * (b.2 - a.2)))
        } else {
            None
        }
    })
}
