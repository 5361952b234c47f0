//! The convex profile `φ` bounding the body from below.
//!
//! A nondecreasing positive rate `h` on `(0, 1]` is smoothed to
//! `h̃(z) = ∫₀ᶻ h(s) ds`, the initial value problem `φ(0) = 1, φ′ = −h̃(φ)` is
//! integrated forward, and the solution is continued affinely for `t < 0`.
//! The result is decreasing, convex, stays in `(0, 1]` and satisfies
//! `|φ′(t)| ≤ h(φ(t))` for `t ≥ 0`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::quad::integrate_with_breaks;
use crate::tables::{fmt_f64, parse_f64, read_csv, write_csv};
use crate::{Error, Result};

/// Absolute tolerance used when integrating `h` into `h̃`.
pub const SMOOTHING_TOL: f64 = 1e-10;

const CHECK_GRID: usize = 2000;

/// A rate `h: (0, 1] → (0, ∞)`, nondecreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateSpec {
    /// `h(z) = coefficient · z^exponent`.
    Power { coefficient: f64, exponent: f64 },
    /// Piecewise-linear through `(z, h)` samples, constant beyond the end samples.
    Table { points: Vec<[f64; 2]> },
    /// Right-continuous step function: `h(z)` is the value of the last sample with
    /// abscissa `≤ z`, or the first value when `z` lies below every sample.
    /// This is the shape produced by [`paper_rate`].
    Steps { points: Vec<[f64; 2]> },
}

impl RateSpec {
    pub fn power(coefficient: f64, exponent: f64) -> Self {
        RateSpec::Power {
            coefficient,
            exponent,
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self {
            RateSpec::Power {
                coefficient,
                exponent,
            } => coefficient * z.max(0.0).powf(*exponent),
            RateSpec::Table { points } => {
                let first = points[0];
                let last = points[points.len() - 1];
                if z <= first[0] {
                    return first[1];
                }
                if z >= last[0] {
                    return last[1];
                }
                let i = points.partition_point(|p| p[0] <= z);
                let (a, b) = (points[i - 1], points[i]);
                let w = (z - a[0]) / (b[0] - a[0]);
                a[1] + w * (b[1] - a[1])
            }
            RateSpec::Steps { points } => {
                let i = points.partition_point(|p| p[0] <= z);
                points[i.saturating_sub(1)][1]
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            RateSpec::Power { .. } => Vec::new(),
            RateSpec::Table { points } | RateSpec::Steps { points } => {
                points.iter().map(|p| p[0]).collect()
            }
        }
    }

    /// Checks positivity and monotonicity, both structurally and on a dense grid of `(0, 1]`.
    pub fn validate(&self) -> Result<()> {
        match self {
            RateSpec::Power {
                coefficient,
                exponent,
            } => {
                if !(*coefficient > 0.0 && coefficient.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "power rate coefficient must be positive, got {coefficient}"
                    )));
                }
                if !(*exponent > 0.0 && exponent.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "power rate exponent must be positive, got {exponent}"
                    )));
                }
            }
            RateSpec::Table { points } | RateSpec::Steps { points } => {
                if points.is_empty() {
                    return Err(Error::InvalidInput("rate table is empty".into()));
                }
                for w in points.windows(2) {
                    if !(w[1][0] > w[0][0]) {
                        return Err(Error::NonMonotoneRate(format!(
                            "abscissae must be strictly increasing ({} then {})",
                            w[0][0], w[1][0]
                        )));
                    }
                    if w[1][1] < w[0][1] {
                        return Err(Error::NonMonotoneRate(format!(
                            "rate decreases from {} at z={} to {} at z={}",
                            w[0][1], w[0][0], w[1][1], w[1][0]
                        )));
                    }
                }
                if let Some(p) = points.iter().find(|p| !(p[1] > 0.0) || !p[1].is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "rate must be strictly positive, got {} at z={}",
                        p[1], p[0]
                    )));
                }
            }
        }
        let mut prev = self.eval(1.0 / CHECK_GRID as f64);
        if !(prev > 0.0) {
            return Err(Error::InvalidInput("rate vanishes near z = 0".into()));
        }
        for k in 2..=CHECK_GRID {
            let z = k as f64 / CHECK_GRID as f64;
            let cur = self.eval(z);
            if cur < prev {
                return Err(Error::NonMonotoneRate(format!(
                    "rate decreases near z={z}"
                )));
            }
            prev = cur;
        }
        Ok(())
    }
}

/// `h̃(z) = ∫₀ᶻ h(s) ds` on `[0, 1]`, evaluated by adaptive quadrature.
#[derive(Debug, Clone)]
pub struct SmoothedRate {
    rate: RateSpec,
    breaks: Vec<f64>,
}

impl SmoothedRate {
    pub fn rate(&self) -> &RateSpec {
        &self.rate
    }

    pub fn eval(&self, z: f64) -> f64 {
        let z = z.clamp(0.0, 1.0);
        integrate_with_breaks(&|s| self.rate.eval(s), 0.0, z, &self.breaks, SMOOTHING_TOL)
    }
}

pub fn smooth_rate(rate: &RateSpec) -> Result<SmoothedRate> {
    rate.validate()?;
    Ok(SmoothedRate {
        rate: rate.clone(),
        breaks: rate.breakpoints(),
    })
}

/// Builds the rate `h(z) = min(clamp, ½ sup_{z′ ≤ z} A₃(z′))` from estimated slope constants.
pub fn paper_rate(a3_table: &[(f64, f64)], clamp: f64) -> Result<RateSpec> {
    if a3_table.is_empty() {
        return Err(Error::InvalidInput("slope-constant table is empty".into()));
    }
    if !(clamp > 0.0) {
        return Err(Error::InvalidInput(format!("clamp must be positive, got {clamp}")));
    }
    let mut table = a3_table.to_vec();
    table.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut points: Vec<[f64; 2]> = Vec::with_capacity(table.len());
    let mut running: f64 = 0.0;
    for (z, a3) in table {
        if !(a3 > 0.0) || !a3.is_finite() {
            return Err(Error::InvalidInput(format!(
                "slope constants must be positive, got {a3} at z={z}"
            )));
        }
        if !(z > 0.0 && z <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "table abscissae must lie in (0, 1], got {z}"
            )));
        }
        running = running.max(a3);
        let value = (0.5 * running).min(clamp);
        match points.last_mut() {
            Some(last) if last[0] == z => last[1] = last[1].max(value),
            _ => points.push([z, value]),
        }
    }
    let rate = RateSpec::Steps { points };
    rate.validate()?;
    Ok(rate)
}

/// Sampled `φ` and `φ′` on a strictly increasing grid, interpolated by cubic Hermite.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiCurve {
    t: Vec<f64>,
    phi: Vec<f64>,
    dphi: Vec<f64>,
}

impl PhiCurve {
    /// Builds a curve from node data, checking the structural invariants.
    pub fn from_nodes(t: Vec<f64>, phi: Vec<f64>, dphi: Vec<f64>) -> Result<Self> {
        if t.is_empty() || t.len() != phi.len() || t.len() != dphi.len() {
            return Err(Error::InvalidInput("curve columns must be nonempty and equally long".into()));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("t grid must be strictly increasing".into()));
        }
        if !(t[0] <= 0.0 && *t.last().unwrap() >= 0.0) {
            return Err(Error::InvalidInput("t grid must contain t = 0".into()));
        }
        match t.iter().position(|&x| x == 0.0) {
            Some(i) if phi[i] == 1.0 => {}
            _ => return Err(Error::InvalidInput("curve must have a node t = 0 with phi = 1".into())),
        }
        // values above 1 only occur on the affine tail
        if t
            .iter()
            .zip(&phi)
            .any(|(&tt, &p)| !(p > 0.0 && p.is_finite()) || (tt >= 0.0 && p > 1.0))
        {
            return Err(Error::InvalidInput("phi must lie in (0, 1] for t >= 0".into()));
        }
        if dphi.iter().any(|&d| d > 0.0 || !d.is_finite()) {
            return Err(Error::InvalidInput("dphi must be nonpositive".into()));
        }
        Ok(Self { t, phi, dphi })
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn phi_values(&self) -> &[f64] {
        &self.phi
    }

    pub fn dphi_values(&self) -> &[f64] {
        &self.dphi
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t_min(&self) -> f64 {
        self.t[0]
    }

    pub fn t_max(&self) -> f64 {
        self.t[self.t.len() - 1]
    }

    fn zero_index(&self) -> usize {
        self.t.iter().position(|&x| x == 0.0).expect("validated")
    }

    /// `φ(0)`, which is 1 by construction.
    pub fn value_at_zero(&self) -> f64 {
        self.phi[self.zero_index()]
    }

    /// `φ′(0)`.
    pub fn slope_at_zero(&self) -> f64 {
        self.dphi[self.zero_index()]
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        if t < self.t_min() || t > self.t_max() || t.is_nan() {
            return Err(Error::OutsideCurve {
                t,
                t_min: self.t_min(),
                t_max: self.t_max(),
            });
        }
        Ok(())
    }

    fn segment(&self, t: f64) -> usize {
        let i = self.t.partition_point(|&x| x <= t);
        i.clamp(1, self.t.len() - 1) - 1
    }

    /// Interpolated `φ(t)`.
    pub fn value(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        if self.t.len() == 1 {
            return Ok(self.phi[0]);
        }
        let i = self.segment(t);
        Ok(self.hermite(i, t).0)
    }

    /// Interpolated `φ′(t)`.
    pub fn slope(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        if self.t.len() == 1 {
            return Ok(self.dphi[0]);
        }
        let i = self.segment(t);
        Ok(self.hermite(i, t).1)
    }

    fn hermite(&self, i: usize, t: f64) -> (f64, f64) {
        let (t0, t1) = (self.t[i], self.t[i + 1]);
        let dt = t1 - t0;
        let s = (t - t0) / dt;
        let (p0, p1) = (self.phi[i], self.phi[i + 1]);
        let (m0, m1) = (self.dphi[i] * dt, self.dphi[i + 1] * dt);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let value = h00 * p0 + h10 * m0 + h01 * p1 + h11 * m1;
        let d00 = 6.0 * s2 - 6.0 * s;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = -6.0 * s2 + 6.0 * s;
        let d11 = 3.0 * s2 - 2.0 * s;
        let deriv = (d00 * p0 + d10 * m0 + d01 * p1 + d11 * m1) / dt;
        (value, deriv)
    }

    /// Restriction to nodes with `t ≥ 0`.
    pub fn forward_part(&self) -> PhiCurve {
        let z = self.zero_index();
        PhiCurve {
            t: self.t[z..].to_vec(),
            phi: self.phi[z..].to_vec(),
            dphi: self.dphi[z..].to_vec(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W, meta: &[String]) -> Result<()> {
        let rows = (0..self.len()).map(|i| {
            vec![fmt_f64(self.t[i]), fmt_f64(self.phi[i]), fmt_f64(self.dphi[i])]
        });
        write_csv(out, meta, &["t", "phi", "dphi"], rows)
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let rows = read_csv(input, &["t", "phi", "dphi"])?;
        let mut t = Vec::with_capacity(rows.len());
        let mut phi = Vec::with_capacity(rows.len());
        let mut dphi = Vec::with_capacity(rows.len());
        for row in rows {
            if row.len() != 3 {
                return Err(Error::Parse(format!("expected 3 fields, got {}", row.len())));
            }
            t.push(parse_f64(&row[0])?);
            phi.push(parse_f64(&row[1])?);
            dphi.push(parse_f64(&row[2])?);
        }
        PhiCurve::from_nodes(t, phi, dphi)
    }
}

/// Settings for the forward integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Bound on the local error per unit step.
    pub tol: f64,
    /// Largest step; also the coarsest node spacing of the output.
    pub max_step: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_step: 0.05,
        }
    }
}

/// Integrates `φ′ = −h̃(φ), φ(0) = 1` on `[0, t_max]` with classical RK4.
///
/// Each step is compared against two half steps; the step is halved until the
/// difference per unit step is within `tol`, and doubled again (up to
/// `max_step`) once it is comfortably small. Nodes are the accepted steps.
pub fn solve_phi(smoothed: &SmoothedRate, t_max: f64, opts: SolveOptions) -> Result<PhiCurve> {
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidInput(format!("t_max must be >= 0, got {t_max}")));
    }
    if !(opts.tol > 0.0 && opts.tol <= 1e-3) {
        return Err(Error::InvalidInput(format!(
            "tolerance must lie in (0, 1e-3], got {}",
            opts.tol
        )));
    }
    if !(opts.max_step > 0.0) {
        return Err(Error::InvalidInput("max_step must be positive".into()));
    }
    let rhs = |y: f64| -smoothed.eval(y);
    let rk4 = |y: f64, k: f64| {
        let a = rhs(y);
        let b = rhs(y + 0.5 * k * a);
        let c = rhs(y + 0.5 * k * b);
        let d = rhs(y + k * c);
        y + k / 6.0 * (a + 2.0 * b + 2.0 * c + d)
    };

    let mut t = vec![0.0];
    let mut phi = vec![1.0];
    let mut dphi = vec![rhs(1.0)];
    let min_step = 1e-12 * t_max.max(1.0);
    let mut k = opts.max_step.min(t_max);
    let mut cur_t = 0.0;
    let mut cur = 1.0;
    while cur_t < t_max {
        let remaining = t_max - cur_t;
        // absorb a rounding-sized remainder into the last step
        let step = if remaining < k * (1.0 + 1e-6) { remaining } else { k };
        let full = rk4(cur, step);
        let half = rk4(cur, 0.5 * step);
        let two = rk4(half, 0.5 * step);
        let err = (two - full).abs() / 15.0;
        let ok = err <= opts.tol * step && two > 0.0 && two <= cur;
        if !ok {
            k = 0.5 * step;
            if k < min_step {
                return Err(Error::StepCollapse { t: cur_t, step: k });
            }
            continue;
        }
        cur_t = if step == remaining { t_max } else { cur_t + step };
        cur = two;
        t.push(cur_t);
        phi.push(cur);
        dphi.push(rhs(cur));
        if err < opts.tol * step / 32.0 {
            k = (2.0 * step).min(opts.max_step);
        }
    }
    PhiCurve::from_nodes(t, phi, dphi)
}

/// Continues the curve affinely to `[t_min, 0)` with slope `φ′(0)`.
pub fn extend_phi(curve: &PhiCurve, t_min: f64) -> Result<PhiCurve> {
    if t_min > 0.0 || t_min.is_nan() {
        return Err(Error::InvalidInput(format!("t_min must be <= 0, got {t_min}")));
    }
    let base = curve.forward_part();
    if t_min == 0.0 {
        return Ok(base);
    }
    let p0 = base.value_at_zero();
    let s0 = base.slope_at_zero();
    let spacing = if base.len() > 1 { base.t[1] - base.t[0] } else { 0.05 };
    let n = ((-t_min) / spacing).ceil().clamp(1.0, 100_000.0) as usize;
    let mut t = Vec::with_capacity(n + base.len());
    for k in (1..=n).rev() {
        // exact node at t_min
        let tk = if k == n { t_min } else { -(k as f64) * spacing };
        t.push(tk);
    }
    let tail = t.len();
    let mut phi: Vec<f64> = t.iter().map(|&tk| p0 + tk * s0).collect();
    let mut dphi = vec![s0; tail];
    t.extend_from_slice(&base.t);
    phi.extend_from_slice(&base.phi);
    dphi.extend_from_slice(&base.dphi);
    Ok(PhiCurve { t, phi, dphi })
}

#[derive(Debug, Clone, Serialize)]
pub struct PhiReport {
    pub decreasing: bool,
    pub convex: bool,
    pub slope_bounded: bool,
    pub decays: bool,
    /// Smallest `φ_i − φ_{i+1}` over consecutive nodes.
    pub decrease_margin: f64,
    /// Smallest increment of `φ′` over nodes with `t < 0` (0 for an affine tail).
    pub convexity_margin_tail: f64,
    /// Smallest increment of `φ′` over nodes with `t ≥ 0`.
    pub convexity_margin_forward: f64,
    /// Smallest normalised second difference of the node values.
    pub second_difference_margin: f64,
    /// Smallest `h(φ_i) − |φ′_i|` over nodes with `t ≥ 0`.
    pub slope_margin: f64,
    pub phi_at_t_max: f64,
    /// Set when the curve is too short for the decay trend to be meaningful.
    pub vacuous: bool,
}

impl PhiReport {
    pub fn all_pass(&self) -> bool {
        self.decreasing && self.convex && self.slope_bounded && self.decays
    }
}

/// Checks monotonicity, convexity, the slope bound `|φ′| ≤ h(φ)` and a decay trend.
pub fn verify_phi(curve: &PhiCurve, rate: &RateSpec) -> PhiReport {
    let n = curve.len();
    let t = &curve.t;
    let p = &curve.phi;
    let d = &curve.dphi;
    let scale = t.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let eps_conv = 1e-9 * scale;

    let decrease_margin = p
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::INFINITY, f64::min);

    let mut tail = f64::INFINITY;
    let mut forward = f64::INFINITY;
    for i in 1..n {
        let inc = d[i] - d[i - 1];
        if t[i] <= 0.0 {
            tail = tail.min(inc);
        } else {
            forward = forward.min(inc);
        }
    }
    let mut second = f64::INFINITY;
    for i in 1..n.saturating_sub(1) {
        let (a, b, c) = (t[i - 1], t[i], t[i + 1]);
        let interp = ((c - b) * p[i - 1] + (b - a) * p[i + 1]) / (c - a);
        // convex nodes sit on or below the chord
        second = second.min(interp - p[i]);
    }
    let slope_margin = (0..n)
        .filter(|&i| t[i] >= 0.0)
        .map(|i| rate.eval(p[i]) - d[i].abs())
        .fold(f64::INFINITY, f64::min);

    let t_max = curve.t_max();
    let vacuous = t_max <= 0.0 || n < 3;
    let phi_at_t_max = p[n - 1];
    let decays = if vacuous {
        true
    } else {
        let mid = curve.value(0.5 * t_max).unwrap_or(f64::NAN);
        phi_at_t_max < mid
    };

    let convex_min = tail.min(forward);
    PhiReport {
        decreasing: decrease_margin > 0.0 || n == 1,
        convex: convex_min >= -eps_conv && second >= -eps_conv,
        slope_bounded: slope_margin >= -1e-9,
        decays,
        decrease_margin,
        convexity_margin_tail: tail,
        convexity_margin_forward: forward,
        second_difference_margin: second,
        slope_margin,
        phi_at_t_max,
        vacuous,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn solve(rate: &RateSpec, t_max: f64) -> PhiCurve {
        solve_phi(&smooth_rate(rate).unwrap(), t_max, SolveOptions::default()).unwrap()
    }

    #[test]
    fn smoothing_examples() {
        let s = smooth_rate(&RateSpec::power(1.0, 1.0)).unwrap();
        assert_relative_eq!(s.eval(1.0), 0.5, epsilon = 1e-10);
        assert_relative_eq!(s.eval(0.3), 0.045, epsilon = 1e-10);
        let s = smooth_rate(&RateSpec::power(1.0, 2.0)).unwrap();
        assert_relative_eq!(s.eval(0.7), 0.7f64.powi(3) / 3.0, epsilon = 1e-10);
        let s = smooth_rate(&RateSpec::power(2.0, 1.0)).unwrap();
        assert_relative_eq!(s.eval(0.5), 0.25, epsilon = 1e-10);
        assert_eq!(s.eval(0.0), 0.0);
    }

    #[test]
    fn smoothed_rate_below_rate_and_increasing() {
        let rate = RateSpec::Table {
            points: vec![[0.1, 0.05], [0.4, 0.2], [1.0, 0.3]],
        };
        let s = smooth_rate(&rate).unwrap();
        let mut prev = 0.0;
        for k in 1..=200 {
            let z = k as f64 / 200.0;
            let v = s.eval(z);
            assert!(v > prev);
            assert!(v <= rate.eval(z) + 1e-12);
            prev = v;
        }
    }

    #[test]
    fn rejects_nonmonotone_table() {
        let rate = RateSpec::Table {
            points: vec![[0.2, 0.5], [0.6, 0.1]],
        };
        let err = smooth_rate(&rate).unwrap_err();
        assert!(matches!(err, Error::NonMonotoneRate(_)));
        assert!(err.to_string().contains("monotonicity"));
    }

    #[test]
    fn solve_matches_closed_forms() {
        let c = solve(&RateSpec::power(1.0, 1.0), 10.0);
        assert_relative_eq!(c.value(2.0).unwrap(), 0.5, epsilon = 1e-6);
        let c2 = solve(&RateSpec::power(2.0, 1.0), 10.0);
        assert_relative_eq!(c2.value(1.0).unwrap(), 0.5, epsilon = 1e-6);
        assert_eq!(c.value(0.0).unwrap(), 1.0);
        for (i, &t) in c.t().iter().enumerate() {
            assert!((c.phi_values()[i] - 2.0 / (t + 2.0)).abs() < 1e-7);
        }
    }

    #[test]
    fn zero_horizon_is_single_node() {
        let c = solve(&RateSpec::power(1.0, 1.0), 0.0);
        assert_eq!(c.len(), 1);
        let rep = verify_phi(&c, &RateSpec::power(1.0, 1.0));
        assert!(rep.vacuous && rep.all_pass());
    }

    #[test]
    fn extension_examples() {
        let c = extend_phi(&solve(&RateSpec::power(2.0, 1.0), 3.0), -1.0).unwrap();
        assert_relative_eq!(c.slope_at_zero(), -1.0, epsilon = 1e-10);
        assert_relative_eq!(c.value(-1.0).unwrap(), 2.0, epsilon = 1e-10);
        let c = extend_phi(&solve(&RateSpec::power(1.0, 1.0), 3.0), -2.0).unwrap();
        assert_relative_eq!(c.slope_at_zero(), -0.5, epsilon = 1e-10);
        assert_relative_eq!(c.value(-2.0).unwrap(), 2.0, epsilon = 1e-10);
        let base = solve(&RateSpec::power(1.0, 1.0), 3.0);
        assert_eq!(extend_phi(&base, 0.0).unwrap(), base);
    }

    #[test]
    fn extension_tail_is_exactly_affine() {
        let base = solve(&RateSpec::power(1.0, 1.0), 2.0);
        let c = extend_phi(&base, -3.0).unwrap();
        let s0 = c.slope_at_zero();
        for i in 0..c.len() {
            if c.t()[i] < 0.0 {
                assert_eq!(c.phi_values()[i], 1.0 + c.t()[i] * s0);
            }
        }
        let rep = verify_phi(&c, &RateSpec::power(1.0, 1.0));
        assert_eq!(rep.convexity_margin_tail, 0.0);
        assert!(rep.all_pass());
    }

    #[test]
    fn verification_flags_bump() {
        let rate = RateSpec::power(1.0, 1.0);
        let c = solve(&rate, 10.0);
        assert!(verify_phi(&c, &rate).all_pass());
        let mut phi = c.phi_values().to_vec();
        let k = phi.len() / 2;
        phi[k] = phi[k - 1] + 1e-3;
        let bumped = PhiCurve::from_nodes(c.t().to_vec(), phi, c.dphi_values().to_vec()).unwrap();
        let rep = verify_phi(&bumped, &rate);
        assert!(!rep.decreasing);
    }

    #[test]
    fn paper_rate_examples() {
        let r = paper_rate(&[(0.5, 0.2), (1.0, 0.3)], 1.0).unwrap();
        assert_relative_eq!(r.eval(0.75), 0.1, epsilon = 1e-15);
        assert_relative_eq!(r.eval(1.0), 0.15, epsilon = 1e-15);
        let r = paper_rate(&[(1.0, 0.4)], 1.0).unwrap();
        for k in 1..=10 {
            assert_relative_eq!(r.eval(k as f64 / 10.0), 0.2, epsilon = 1e-15);
        }
        // running supremum never lets the rate drop
        let r = paper_rate(&[(0.3, 0.5), (0.6, 0.1), (0.9, 0.2)], 1.0).unwrap();
        assert_relative_eq!(r.eval(0.95), 0.25, epsilon = 1e-15);
        // clamp
        let r = paper_rate(&[(1.0, 0.4)], 0.05).unwrap();
        assert_relative_eq!(r.eval(0.5), 0.05, epsilon = 1e-15);
        assert!(paper_rate(&[(0.5, 0.0)], 1.0).is_err());
        assert!(paper_rate(&[], 1.0).is_err());
        assert!(smooth_rate(&paper_rate(&[(0.5, 0.2), (1.0, 0.3)], 1.0).unwrap()).is_ok());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let c = extend_phi(&solve(&RateSpec::power(1.0, 1.5), 4.0), -1.0).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf, &["meta".into()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().nth(1).unwrap() == "t,phi,dphi");
        let back = PhiCurve::read_csv(&buf[..]).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn step_halving_has_fourth_order() {
        let s = smooth_rate(&RateSpec::power(1.0, 1.0)).unwrap();
        let err = |max_step: f64| {
            let c = solve_phi(&s, 10.0, SolveOptions { tol: 1e-3, max_step }).unwrap();
            c.t()
                .iter()
                .zip(c.phi_values())
                .map(|(t, p)| (p - 2.0 / (t + 2.0)).abs())
                .fold(0.0, f64::max)
        };
        let coarse = err(0.5);
        let fine = err(0.25);
        assert!(coarse / fine >= 4.0, "ratio {}", coarse / fine);
    }

    #[test]
    fn tighter_tolerance_never_hurts() {
        let s = smooth_rate(&RateSpec::power(1.0, 1.0)).unwrap();
        let err = |tol: f64| {
            let c = solve_phi(&s, 10.0, SolveOptions { tol, max_step: 10.0 }).unwrap();
            c.t()
                .iter()
                .zip(c.phi_values())
                .map(|(t, p)| (p - 2.0 / (t + 2.0)).abs())
                .fold(0.0, f64::max)
        };
        let mut prev = f64::INFINITY;
        for tol in [1e-4, 5e-5, 2.5e-5, 1.25e-5] {
            let e = err(tol);
            assert!(e <= prev * 1.05, "tol {tol}: {e} vs {prev}");
            prev = e;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn solution_stays_in_unit_interval_and_is_convex(p in 0.5..3.0f64, c in 0.2..3.0f64) {
            let rate = RateSpec::power(c, p);
            let curve = solve(&rate, 20.0);
            for &v in curve.phi_values() {
                prop_assert!(v > 0.0 && v <= 1.0);
            }
            let rep = verify_phi(&curve, &rate);
            prop_assert!(rep.all_pass(), "{:?}", rep);
            prop_assert!(rep.second_difference_margin >= -1e-9);
        }

        #[test]
        fn extend_then_restrict_is_identity(t_min in -5.0..0.0f64) {
            let base = solve(&RateSpec::power(1.0, 2.0), 3.0);
            let ext = extend_phi(&base, t_min).unwrap();
            prop_assert_eq!(ext.forward_part(), base);
        }
    }
}
