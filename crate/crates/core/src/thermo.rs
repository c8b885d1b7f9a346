//! Effective thermodynamics of the average memory.
//!
//! Stored patterns are taken at relative distance `x = j/n` from the input
//! with `j` uniform on `d..=n`. The energy of a pattern is
//! `E(x) = -2 ln cos(pi x / 2)` and the recognition weight is `exp(-b E)`, so
//! `z = Z_av / p` is the mean weight, `F = -ln z / b`, `U` is the Boltzmann
//! mean energy, `S = b (U - F) <= 0` and `D = (2/pi) arccos exp(-F/2)`.
//!
//! Every quantity is computed relative to the ground-state energy `E0 = E(d/n)`
//! so nothing underflows at large `b`.

use std::f64::consts::{LN_2, PI};
use std::fmt::Write as _;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QamError, Result};

/// `exp(-x)` underflows to zero beyond this exponent.
const UNDERFLOW_EXPONENT: f64 = 745.0;
const GL_ORDER: usize = 24;
const SUM_CHUNK: u64 = 1 << 16;
/// Dyadic refinement depth toward the `x = 1` log singularity.
const EDGE_LEVELS: i32 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AverageMode {
    /// Exact mean over `j = d..=n`.
    #[default]
    Sum,
    /// Continuum limit `(1/(1-x0)) * integral over [x0, 1]`.
    Integral,
}

#[allow(non_snake_case)]
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermoPoint {
    pub b: f64,
    pub z_ratio: f64,
    pub F: f64,
    pub U: f64,
    pub S: f64,
    pub D: f64,
    pub p_rec_av: f64,
}

#[allow(non_snake_case)]
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub b: u64,
    pub T_measured: u64,
    pub T_amplified: u64,
    pub achieved_D: f64,
}

/// `E` as a function of `y = 1 - x`, accurate near `x = 1`.
fn energy_y(y: f64) -> f64 {
    -2.0 * (0.5 * PI * y).sin().ln()
}

/// Log-space moments of the weight `exp(-b (E - E0))` under the uniform prior.
#[derive(Clone, Copy, Debug)]
struct Moments {
    e0: f64,
    /// `ln` of the mean relative weight, `ln(J / volume)`; `-inf` if all weights vanish.
    ln_ratio: f64,
    /// `<E - E0>` under the Boltzmann weights.
    mean_excess: f64,
}

impl Moments {
    fn point(&self, b: f64) -> ThermoPoint {
        if self.ln_ratio == f64::NEG_INFINITY {
            return ThermoPoint {
                b,
                z_ratio: 0.0,
                F: f64::INFINITY,
                U: f64::INFINITY,
                S: 0.0,
                D: 1.0,
                p_rec_av: 0.0,
            };
        }
        let ln_z = -b * self.e0 + self.ln_ratio;
        let f = self.e0 - self.ln_ratio / b;
        let z = ln_z.exp();
        ThermoPoint {
            b,
            z_ratio: z,
            F: f,
            U: self.e0 + self.mean_excess,
            S: (b * self.mean_excess + self.ln_ratio).min(0.0),
            D: distance_from_free_energy(f),
            p_rec_av: z,
        }
    }
}

/// Accumulates `A = sum expm1(-b dE)`, `J = sum exp(-b dE)`, `K = sum dE exp(-b dE)`.
#[derive(Clone, Copy, Debug, Default)]
struct Acc {
    a: f64,
    j: f64,
    k: f64,
}

impl Acc {
    fn add(&mut self, weight: f64, excess: f64, b: f64) {
        let t = -b * excess;
        let e = t.exp();
        self.a += weight * t.exp_m1();
        self.j += weight * e;
        self.k += weight * excess * e;
    }

    fn merge(self, o: Acc) -> Acc {
        Acc {
            a: self.a + o.a,
            j: self.j + o.j,
            k: self.k + o.k,
        }
    }

    fn finish(self, e0: f64, volume: f64) -> Moments {
        if self.j <= 0.0 {
            return Moments {
                e0,
                ln_ratio: f64::NEG_INFINITY,
                mean_excess: f64::NAN,
            };
        }
        let rel = self.a / volume;
        // expm1 keeps full precision when every weight is close to 1
        let ln_ratio = if rel > -0.5 { rel.ln_1p() } else { (self.j / volume).ln() };
        Moments {
            e0,
            ln_ratio,
            mean_excess: self.k / self.j,
        }
    }
}

fn validate(n: u64, d: u64, b: f64) -> Result<()> {
    if n == 0 {
        return Err(QamError::InvalidParameter("n must be positive".into()));
    }
    if d > n {
        return Err(QamError::InvalidParameter(format!("d = {d} exceeds n = {n}")));
    }
    if !(b >= 0.0) || !b.is_finite() {
        return Err(QamError::InvalidParameter(format!("b must be finite and non-negative, got {b}")));
    }
    Ok(())
}

fn sum_moments(n: u64, d: u64, b: f64) -> Moments {
    let nf = n as f64;
    let e0 = energy_y((n - d) as f64 / nf);
    let count = (n - d + 1) as f64;
    // weights beyond j_cut underflow; each contributes expm1 = -1 to A
    let e_max = e0 + UNDERFLOW_EXPONENT / b;
    let y_min = (2.0 / PI) * (-0.5 * e_max).exp().asin();
    let j_cut = if y_min.is_finite() && y_min > 0.0 {
        ((nf * (1.0 - y_min)).floor() as u64 + 1).clamp(d, n - 1)
    } else {
        n - 1
    };
    if d == n {
        // the single state j = n has zero weight
        return Acc::default().finish(e0, count);
    }
    let chunks: Vec<(u64, u64)> = (d..=j_cut)
        .step_by(SUM_CHUNK as usize)
        .map(|s| (s, (s + SUM_CHUNK - 1).min(j_cut)))
        .collect();
    // fixed chunking keeps the summation order independent of thread count
    let partial: Vec<Acc> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut a = Acc::default();
            for j in lo..=hi {
                a.add(1.0, energy_y((n - j) as f64 / nf) - e0, b);
            }
            a
        })
        .collect();
    let mut acc = partial.into_iter().fold(Acc::default(), Acc::merge);
    // terms past j_cut, including j = n, have zero weight
    acc.a -= (n - j_cut) as f64;
    acc.finish(e0, count)
}

fn gauss_legendre() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| gauss_legendre_nodes(GL_ORDER))
}

/// Nodes and weights on `[-1, 1]` by Newton iteration on `P_m`.
fn gauss_legendre_nodes(m: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(m);
    let mf = m as f64;
    for i in 0..m.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=m {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            dp = mf * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        out.push((-z, w));
        if 2 * i + 1 != m {
            out.push((z, w));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Panel breakpoints on `[0, y0]`: geometric away from `y0` (the ground
/// state) on the weight's decay scale, dyadic toward `y = 0`.
fn panels(y0: f64, b: f64) -> Vec<f64> {
    let x0 = 1.0 - y0;
    let half = 0.5 * PI * x0;
    let e1 = PI * half.tan();
    let e2 = 0.5 * PI * PI / half.cos().powi(2);
    let w = 1.0 / (b * e1 + (b * e2).sqrt() + 1.0);
    let mut pts = vec![0.0, y0];
    let mut t = w;
    while t < y0 {
        pts.push(y0 - t);
        t *= 2.0;
    }
    for k in 1..=EDGE_LEVELS {
        pts.push(y0 * 2f64.powi(-k));
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * y0);
    pts
}

fn integral_moments(x0: f64, b: f64) -> Moments {
    let y0 = 1.0 - x0;
    let e0 = energy_y(y0);
    if y0 <= 0.0 {
        return Acc::default().finish(e0, 0.0);
    }
    let pts = panels(y0, b);
    let nodes = gauss_legendre();
    let mut acc = Acc::default();
    for win in pts.windows(2) {
        let (lo, hi) = (win[0], win[1]);
        let half = 0.5 * (hi - lo);
        // weight is largest at the panel end nearest y0
        if b * (energy_y(hi) - e0) > UNDERFLOW_EXPONENT {
            acc.a -= hi - lo;
            continue;
        }
        let mid = 0.5 * (hi + lo);
        for &(t, w) in nodes {
            let y = mid + half * t;
            acc.add(w * half, (energy_y(y) - e0).max(0.0), b);
        }
    }
    acc.finish(e0, y0)
}

fn moments(n: u64, d: u64, b: f64, mode: AverageMode) -> Moments {
    match mode {
        AverageMode::Sum => sum_moments(n, d, b),
        AverageMode::Integral => integral_moments(d as f64 / n as f64, b),
    }
}

/// `z = Z_av / p`, the mean of `cos^{2b}(pi j / 2n)` over `j = d..=n`
/// (or its continuum limit). Exactly 1 at `b = 0`.
pub fn partition_average(n: u64, d: u64, b: f64, mode: AverageMode) -> Result<f64> {
    validate(n, d, b)?;
    if b == 0.0 {
        return Ok(1.0);
    }
    Ok(moments(n, d, b, mode).point(b).z_ratio)
}

/// `ln z`, finite even when `z` itself underflows.
pub fn ln_partition_average(n: u64, d: u64, b: f64, mode: AverageMode) -> Result<f64> {
    validate(n, d, b)?;
    if b == 0.0 {
        return Ok(0.0);
    }
    let m = moments(n, d, b, mode);
    Ok(-b * m.e0 + m.ln_ratio)
}

fn require_positive(b: f64) -> Result<()> {
    if b > 0.0 {
        Ok(())
    } else {
        Err(QamError::InvalidParameter(format!("b must be positive, got {b}")))
    }
}

/// `F = -ln(z) / b`; `+inf` when `z = 0`.
pub fn free_energy(n: u64, d: u64, b: f64, mode: AverageMode) -> Result<f64> {
    potentials(n, d, b, mode).map(|p| p.F)
}

pub fn potentials(n: u64, d: u64, b: f64, mode: AverageMode) -> Result<ThermoPoint> {
    validate(n, d, b)?;
    require_positive(b)?;
    Ok(moments(n, d, b, mode).point(b))
}

pub fn effective_distance(n: u64, d: u64, b: f64, mode: AverageMode) -> Result<f64> {
    potentials(n, d, b, mode).map(|p| p.D)
}

/// `(2/pi) arccos exp(-F/2)`, written with `asin` for accuracy at small `F`.
pub fn distance_from_free_energy(f: f64) -> f64 {
    if f == f64::INFINITY {
        return 1.0;
    }
    let one_minus_c = -(-0.5 * f).exp_m1();
    (4.0 / PI) * (0.5 * one_minus_c).sqrt().asin()
}

/// `b -> 0` limits `(F_inf, D_inf)`, with `F_inf` the mean energy over `[x, 1]`.
pub fn high_temp_limit(d_over_n: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&d_over_n) {
        return Err(QamError::InvalidParameter(format!("d/n must lie in [0, 1), got {d_over_n}")));
    }
    let y0 = 1.0 - d_over_n;
    let nodes = gauss_legendre();
    let mut total = 0.0;
    for win in panels(y0, 0.0).windows(2) {
        let (lo, hi) = (win[0], win[1]);
        let (mid, half) = (0.5 * (hi + lo), 0.5 * (hi - lo));
        total += nodes.iter().map(|&(t, w)| w * half * energy_y(mid + half * t)).sum::<f64>();
    }
    let f_inf = total / y0;
    Ok((f_inf, distance_from_free_energy(f_inf)))
}

/// `points` values of `b`, log-spaced from `b_min` to `b_max` inclusive.
pub fn log_grid(b_min: f64, b_max: f64, points: usize) -> Result<Vec<f64>> {
    if !(b_min > 0.0 && b_max > b_min && b_max.is_finite()) || points < 2 {
        return Err(QamError::InvalidParameter(format!(
            "need 0 < b_min < b_max and at least 2 points, got [{b_min}, {b_max}] x {points}"
        )));
    }
    let (l0, l1) = (b_min.log10(), b_max.log10());
    let step = (l1 - l0) / (points - 1) as f64;
    Ok((0..points)
        .map(|k| match k {
            0 => b_min,
            k if k == points - 1 => b_max,
            k => 10f64.powf(l0 + step * k as f64),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseScan {
    pub points: Vec<ThermoPoint>,
    /// `(S - S_min) / (0 - S_min)` over the grid.
    pub s_rescaled: Vec<f64>,
    /// Onset of the ordering transition (see [`scan_phase_transition`]).
    pub b_cr: f64,
    /// Where `D` crosses the midpoint of its two plateaus, if it does.
    pub b_mid: Option<f64>,
    pub d_inf: f64,
}

/// Scans the grid and locates the transition.
///
/// `b_cr` is the onset of ordering: the tangent to `D(log10 b)` at its
/// steepest grid point, intersected with the disordered plateau `D_inf`.
/// The grid must span at least six decades, and the steepest point and the
/// onset must both fall strictly inside it.
pub fn scan_phase_transition(n: u64, d: u64, grid: &[f64], mode: AverageMode) -> Result<PhaseScan> {
    validate(n, d, 0.0)?;
    if grid.len() < 3 || grid.windows(2).any(|w| !(w[1] > w[0])) || !(grid[0] > 0.0) {
        return Err(QamError::InvalidParameter("grid must be positive and strictly ascending".into()));
    }
    let decades = (grid[grid.len() - 1] / grid[0]).log10();
    if decades < 6.0 - 1e-9 {
        return Err(QamError::Bracket(format!("grid spans {decades:.2} decades, need at least 6")));
    }
    let points: Vec<ThermoPoint> = grid
        .par_iter()
        .map(|&b| potentials(n, d, b, mode))
        .collect::<Result<_>>()?;

    let s_min = points.iter().map(|p| p.S).fold(0.0, f64::min);
    let s_rescaled = points
        .iter()
        .map(|p| if s_min < 0.0 { (p.S - s_min) / -s_min } else { 1.0 })
        .collect();

    let x0 = d as f64 / n as f64;
    let d_inf = if x0 < 1.0 { high_temp_limit(x0)?.1 } else { 1.0 };
    let logs: Vec<f64> = grid.iter().map(|b| b.log10()).collect();
    let (k, slope) = (1..grid.len() - 1)
        .map(|k| (k, (points[k + 1].D - points[k - 1].D) / (logs[k + 1] - logs[k - 1])))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("grid has interior points");
    if !(slope < 0.0) {
        return Err(QamError::Bracket("D does not decrease across the grid".into()));
    }
    if k == 1 || k == grid.len() - 2 {
        return Err(QamError::Bracket(format!("steepest descent of D sits at the grid edge b = {}", grid[k])));
    }
    let l_cr = logs[k] + (d_inf - points[k].D) / slope;
    if !(l_cr > logs[0] && l_cr < logs[logs.len() - 1]) {
        return Err(QamError::Bracket(format!("onset 10^{l_cr:.3} lies outside the grid")));
    }

    let mid = 0.5 * (d_inf + x0);
    let b_mid = (1..points.len()).find(|&i| points[i].D <= mid && points[i - 1].D > mid).map(|i| {
        let (d1, d2) = (points[i - 1].D, points[i].D);
        10f64.powf(logs[i - 1] + (d1 - mid) / (d1 - d2) * (logs[i] - logs[i - 1]))
    });

    Ok(PhaseScan {
        points,
        s_rescaled,
        b_cr: 10f64.powf(l_cr),
        b_mid,
        d_inf,
    })
}

pub const SCAN_CSV_HEADER: &str = "b,z_ratio,F,U,S,S_rescaled,D,p_rec_av";

fn sig12(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else {
        format!("{x}")
    }
}

/// CSV with [`SCAN_CSV_HEADER`], 12 significant digits, ascending `b`.
pub fn scan_to_csv(scan: &PhaseScan) -> String {
    let mut out = String::from(SCAN_CSV_HEADER);
    out.push('\n');
    for (p, sr) in scan.points.iter().zip(&scan.s_rescaled) {
        let row = [p.b, p.z_ratio, p.F, p.U, p.S, *sr, p.D, p.p_rec_av].map(sig12).join(",");
        let _ = writeln!(out, "{row}");
    }
    out
}

/// Parses scan CSV back into `(point, S_rescaled)` rows.
pub fn parse_scan_csv(text: &str) -> Result<Vec<(ThermoPoint, f64)>> {
    let mut lines = text.lines();
    if lines.next() != Some(SCAN_CSV_HEADER) {
        return Err(QamError::InvalidParameter("missing scan CSV header".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let v = line
                .split(',')
                .map(|t| t.parse::<f64>().map_err(|_| QamError::InvalidParameter(format!("bad number '{t}'"))))
                .collect::<Result<Vec<_>>>()?;
            if v.len() != 8 {
                return Err(QamError::InvalidParameter(format!("expected 8 columns, got {}", v.len())));
            }
            Ok((
                ThermoPoint {
                    b: v[0],
                    z_ratio: v[1],
                    F: v[2],
                    U: v[3],
                    S: v[4],
                    D: v[6],
                    p_rec_av: v[7],
                },
                v[5],
            ))
        })
        .collect()
}

/// Repetition thresholds at integer `b`: `ceil(1/z)` and `ceil(1/sqrt z)`.
pub fn repetitions(n: u64, d: u64, b: u64, mode: AverageMode) -> Result<TuneResult> {
    let bf = b as f64;
    let p = potentials(n, d, bf, mode)?;
    let ln_z = ln_partition_average(n, d, bf, mode)?;
    let to_count = |x: f64| -> Result<u64> {
        let c = x.exp().ceil();
        if c.is_finite() && c < u64::MAX as f64 {
            Ok(c as u64)
        } else {
            Err(QamError::Infeasible(format!("repetition count exp({x:.3e}) overflows")))
        }
    };
    Ok(TuneResult {
        b,
        T_measured: to_count(-ln_z)?,
        T_amplified: to_count(-0.5 * ln_z)?,
        achieved_D: p.D,
    })
}

/// Largest `b` tried before declaring a target unreachable.
pub const TUNE_B_CAP: u64 = 1 << 40;

/// Smallest integer `b` with `D(b, eps n) - eps <= 1 - nu`, by doubling then
/// bisection, with the matching repetition thresholds.
pub fn tune(n: u64, epsilon: f64, nu: f64, mode: AverageMode) -> Result<TuneResult> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(QamError::InvalidParameter(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(0.0..=1.0).contains(&nu) {
        return Err(QamError::InvalidParameter(format!("nu must lie in [0, 1], got {nu}")));
    }
    let d = (epsilon * n as f64).round() as u64;
    validate(n, d, 1.0)?;
    let slack = 1.0 - nu;
    // D decreases toward d/n without reaching it
    if slack <= d as f64 / n as f64 - epsilon {
        return Err(QamError::Infeasible(format!(
            "D stays above d/n = {}, so D - epsilon <= {slack} cannot hold",
            d as f64 / n as f64
        )));
    }
    let ok = |b: u64| -> Result<bool> { Ok(effective_distance(n, d, b as f64, mode)? - epsilon <= slack) };
    let mut hi = 1u64;
    while !ok(hi)? {
        if hi >= TUNE_B_CAP {
            return Err(QamError::Infeasible(format!("no b up to {TUNE_B_CAP} reaches the target")));
        }
        hi *= 2;
    }
    let mut lo = hi / 2;
    if hi > 1 {
        // invariant: ok(hi) and !ok(lo)
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if ok(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    repetitions(n, d, hi, mode)
}

/// `E = pi^2/16 + pi^2/(4n^2) sum_{i,j} s_i s_j + pi^2/(4n) sum_i s_i` over
/// spins `+-1/2`, diagonal terms included.
pub fn ising_energy(spins: &[f64]) -> Result<f64> {
    if spins.is_empty() {
        return Err(QamError::InvalidParameter("need at least one spin".into()));
    }
    if let Some(&bad) = spins.iter().find(|&&s| s != 0.5 && s != -0.5) {
        return Err(QamError::InvalidSpin(bad));
    }
    let n = spins.len() as f64;
    let s_tot: f64 = spins.iter().sum();
    let pi2 = PI * PI;
    Ok(pi2 / 16.0 + pi2 / (4.0 * n * n) * s_tot * s_tot + pi2 / (4.0 * n) * s_tot)
}

/// `2 ln 2`, the disordered-phase free energy at `d = 0`.
pub const F_INF_ZERO: f64 = 2.0 * LN_2;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let nodes = gauss_legendre_nodes(GL_ORDER);
        assert_eq!(nodes.len(), GL_ORDER);
        for k in 0..(2 * GL_ORDER) {
            let q: f64 = nodes.iter().map(|&(x, w)| w * x.powi(k as i32)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "k={k}: {q} vs {exact}");
        }
        let odd = gauss_legendre_nodes(5);
        assert_eq!(odd.len(), 5);
        assert!(odd[2].0.abs() < 1e-16);
    }

    #[test]
    fn zero_b_gives_unit_ratio() {
        for mode in [AverageMode::Sum, AverageMode::Integral] {
            assert_eq!(partition_average(10, 3, 0.0, mode).unwrap(), 1.0);
        }
    }

    #[test]
    fn three_term_sum() {
        let z = partition_average(2, 0, 1.0, AverageMode::Sum).unwrap();
        assert!((z - 0.5).abs() < 1e-15);
        let direct: f64 = (0..=5).map(|j| (PI * j as f64 / 10.0).cos().powi(6)).sum::<f64>() / 6.0;
        let z = partition_average(5, 0, 3.0, AverageMode::Sum).unwrap();
        assert!((z - direct).abs() < 1e-15);
        let direct: f64 = (2..=5).map(|j| (PI * j as f64 / 10.0).cos().powf(2.5)).sum::<f64>() / 4.0;
        let z = partition_average(5, 2, 1.25, AverageMode::Sum).unwrap();
        assert!((z - direct).abs() < 1e-15);
    }

    #[test]
    fn integral_mode_against_closed_forms() {
        // mean of cos^2 over [0,1] is 1/2; of cos^4 is 3/8
        let z = partition_average(1, 0, 1.0, AverageMode::Integral).unwrap();
        assert!((z - 0.5).abs() < 1e-14);
        let z = partition_average(1, 0, 2.0, AverageMode::Integral).unwrap();
        assert!((z - 0.375).abs() < 1e-14);
        // over [1/2, 1]: integral of cos^2(pi x/2) = 1/4 - 1/(2 pi)
        let z = partition_average(2, 1, 1.0, AverageMode::Integral).unwrap();
        assert!((z - 2.0 * (0.25 - 0.5 / PI)).abs() < 1e-14);
    }

    #[test]
    fn large_n_sum_uses_cutoff() {
        let a = potentials(1_000_000, 10_000, 1e5, AverageMode::Sum).unwrap();
        let b = potentials(1_000_000, 10_000, 1e5, AverageMode::Integral).unwrap();
        assert!(((a.F - b.F) / b.F).abs() < 1e-3);
    }

    #[test]
    fn maximal_distance_is_sentinel() {
        let p = potentials(4, 4, 1.0, AverageMode::Sum).unwrap();
        assert_eq!(p.z_ratio, 0.0);
        assert_eq!(p.F, f64::INFINITY);
        assert_eq!(p.D, 1.0);
        assert!(matches!(partition_average(4, 5, 1.0, AverageMode::Sum), Err(QamError::InvalidParameter(_))));
    }

    #[test]
    fn high_temperature_free_energy() {
        let (f, d) = high_temp_limit(0.0).unwrap();
        assert!((f - F_INF_ZERO).abs() < 1e-12);
        assert!((d - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn thermodynamic_identity_and_entropy_sign() {
        for mode in [AverageMode::Sum, AverageMode::Integral] {
            let p = potentials(1000, 100, 1.0, mode).unwrap();
            assert!((p.U - p.F - p.S / p.b).abs() < 1e-12);
            assert!(p.S <= 0.0);
        }
    }

    #[test]
    fn entropy_is_minus_free_energy_derivative() {
        let (n, d, b) = (100_000u64, 1_000u64, 2.0);
        let p = potentials(n, d, b, AverageMode::Integral).unwrap();
        let t = 1.0 / b;
        let h = 1e-4 * t;
        let f = |t: f64| free_energy(n, d, 1.0 / t, AverageMode::Integral).unwrap();
        let ds = -(f(t + h) - f(t - h)) / (2.0 * h);
        assert!(((ds - p.S) / p.S).abs() < 1e-4, "{ds} vs {}", p.S);
    }

    #[test]
    fn ising_examples() {
        assert!(ising_energy(&[-0.5; 6]).unwrap().abs() < 1e-15);
        let half = [0.5, -0.5, 0.5, -0.5];
        assert!((ising_energy(&half).unwrap() - PI * PI / 16.0).abs() < 1e-15);
        assert!((ising_energy(&[0.5; 5]).unwrap() - PI * PI / 4.0).abs() < 1e-14);
        assert!(matches!(ising_energy(&[0.5, 1.0]), Err(QamError::InvalidSpin(s)) if s == 1.0));
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-3, 1e6, 181).unwrap();
        assert_eq!(g.len(), 181);
        assert_eq!(g[0], 1e-3);
        assert_eq!(g[180], 1e6);
        assert!((g[20] - 1e-2).abs() < 1e-15);
        assert!(log_grid(1.0, 1.0, 3).is_err());
    }

    #[test]
    fn tune_trivial_and_infeasible() {
        let r = tune(1_000_000, 0.01, 0.0, AverageMode::Integral).unwrap();
        assert_eq!(r.b, 1);
        assert!(r.T_amplified <= r.T_measured);
        assert!(matches!(
            tune(1_000_000, 0.01, 1.0, AverageMode::Integral),
            Err(QamError::Infeasible(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let grid = log_grid(1e-3, 1e6, 37).unwrap();
        let scan = scan_phase_transition(100_000, 1_000, &grid, AverageMode::Integral).unwrap();
        let csv = scan_to_csv(&scan);
        let rows = parse_scan_csv(&csv).unwrap();
        assert_eq!(rows.len(), 37);
        assert_eq!(scan_to_csv(&PhaseScan {
            points: rows.iter().map(|r| r.0).collect(),
            s_rescaled: rows.iter().map(|r| r.1).collect(),
            ..scan.clone()
        }), csv);
        for ((p, sr), (q, sq)) in rows.iter().zip(scan.points.iter().zip(&scan.s_rescaled)) {
            assert!(((p.D - q.D) / q.D).abs() < 1e-11);
            assert!((sr - sq).abs() < 1e-11);
        }
    }
}
