//! Bloch bands of periodic combs of point interactions.
//!
//! For a cell of length `a` with transfer matrix `T(k)`, Bloch solutions are
//! eigenvectors of `T` with eigenvalue `λ = e^{iqa}`. An eigenvalue on the unit
//! circle is a propagating mode with quasi-momentum `q = arg(λ)/a` at energy
//! `E = k²`.
//!
//! When the cell contains only `M_r`, `M̃_r̃`, `X₁` and `X₄` defects, the basis
//! `φ± = (ψ↑ ± ψ↓)/√2` splits the problem into two spinless Kronig–Penney
//! combs. `M_r` becomes an `X₄` interaction of strength `∓r` and `M̃_r̃` an
//! `X₁` interaction of strength `±r̃`. Near the band bottom this gives
//! `E = q²·a/(a − X₄)`, hence two parabolic branches with curvatures `1/(1 ± r)`
//! at `a = 1`, and a linear branch `E = 2√3·q` at `r = 1`.

use std::f64::consts::PI;

use nalgebra::linalg::Schur;
use nalgebra::{Matrix2, Vector4};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::device::{check_grid, total_transfer, Device, Element};
use crate::error::{Error, Result};
use crate::extension::{BoundaryMatrix, DefectSpec, Mat4};
use crate::scattering::{check_momentum, propagation};

/// Band membership tolerance on `||λ| − 1|`.
pub const DEFAULT_PROPAGATING_TOL: f64 = 1e-8;

/// Bracket scan step in units of `ka` for band-edge searches.
pub const EDGE_SCAN_STEP: f64 = 0.01;

/// Cluster size below which two eigenvalues count as degenerate.
const DEGENERACY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicComb {
    cell: Device,
    period: f64,
}

impl PeriodicComb {
    /// `cell` is one period; a trailing free segment fills it up to `period`.
    pub fn new(cell: Device, period: f64) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::ParameterDomain {
                name: "period",
                value: period,
                reason: "comb period must be positive",
            });
        }
        let internal = cell.total_length();
        if internal > period * (1.0 + 1e-12) {
            return Err(Error::ParameterDomain {
                name: "period",
                value: period,
                reason: "free segments inside the cell exceed the period",
            });
        }
        Ok(PeriodicComb { cell, period })
    }

    /// One defect per cell.
    pub fn single(defect: DefectSpec, period: f64) -> Result<Self> {
        PeriodicComb::new(Device::new(vec![defect.into()])?, period)
    }

    pub fn cell(&self) -> &Device {
        &self.cell
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    fn filler(&self) -> f64 {
        (self.period - self.cell.total_length()).max(0.0)
    }
}

/// Transfer matrix over one full period.
pub fn cell_transfer(comb: &PeriodicComb, k: f64) -> Result<BoundaryMatrix> {
    let inner = total_transfer(&comb.cell, k)?;
    Ok(propagation(k, comb.filler())? * inner)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPoint {
    pub k: f64,
    pub energy: f64,
    /// Quasi-momentum `arg(λ)/a`, in `(−π/a, π/a]`.
    pub q: f64,
    /// `||λ| − 1|`.
    pub lambda_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: usize,
    /// Points with `q ≥ 0`, ordered by `k`.
    pub points: Vec<BandPoint>,
}

impl Branch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandDiagram {
    pub period: f64,
    /// Every propagating eigenvalue on the grid, both signs of `q`.
    pub points: Vec<BandPoint>,
    pub branches: Vec<Branch>,
    /// Momenta where the cell matrix was numerically defective.
    pub flagged_k: Vec<f64>,
}

impl BandDiagram {
    /// Branches that start at the first grid momentum in the lower half of the zone.
    pub fn origin_branches(&self) -> Vec<&Branch> {
        let k_first = self.points.iter().map(|p| p.k).fold(f64::INFINITY, f64::min);
        self.branches
            .iter()
            .filter(|b| {
                b.points
                    .first()
                    .is_some_and(|p| p.k == k_first && p.q < 0.5 * PI / self.period)
            })
            .collect()
    }

    /// Non-negative quasi-momenta found at grid momentum `k`, ascending.
    pub fn q_values_at(&self, k: f64) -> Vec<f64> {
        let mut qs: Vec<f64> = self
            .points
            .iter()
            .filter(|p| p.k == k && p.q >= 0.0)
            .map(|p| p.q)
            .collect();
        qs.sort_by(f64::total_cmp);
        qs
    }
}

struct Mode {
    point: BandPoint,
    vector: Vector4<Complex64>,
}

struct Slice {
    modes: Vec<Mode>,
    defective: bool,
}

/// Eigenvalues of a 4×4 complex matrix from its Schur form.
pub fn eigenvalues(m: &Mat4) -> Result<[Complex64; 4]> {
    let schur = Schur::try_new(*m, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Fit("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok([t[(0, 0)], t[(1, 1)], t[(2, 2)], t[(3, 3)]])
}

/// Unit eigenvector for `lambda` by inverse iteration.
fn eigenvector(m: &Mat4, lambda: Complex64) -> Vector4<Complex64> {
    let shift = lambda + Complex64::new(1e-10, 1e-10) * (1.0 + lambda.norm());
    let shifted = m - Mat4::identity() * shift;
    let lu = shifted.lu();
    let mut v = Vector4::new(
        Complex64::new(1.0, 0.0),
        Complex64::new(0.7, 0.1),
        Complex64::new(-0.4, 0.3),
        Complex64::new(0.2, -0.9),
    );
    for _ in 0..3 {
        match lu.solve(&v) {
            Some(next) if next.norm() > 0.0 && next.norm().is_finite() => v = next / Complex64::from(next.norm()),
            _ => break,
        }
    }
    v
}

fn slice_at(m: &Mat4, k: f64, period: f64, tol: f64) -> Result<Slice> {
    let lambdas = eigenvalues(m)?;

    let mut defective = false;
    for i in 0..4 {
        for j in (i + 1)..4 {
            if (lambdas[i] - lambdas[j]).norm() < DEGENERACY_TOL {
                let centre = (lambdas[i] + lambdas[j]) * 0.5;
                let shifted = m - Mat4::identity() * centre;
                let sv = shifted.svd(false, false).singular_values;
                let mut sorted: Vec<f64> = sv.iter().copied().collect();
                sorted.sort_by(f64::total_cmp);
                // geometric multiplicity 1 for a double eigenvalue
                if sorted[1] > 1e-4 * sorted[3].max(1.0) {
                    defective = true;
                }
            }
        }
    }

    let modes = lambdas
        .iter()
        .filter_map(|&lambda| {
            let residual = (lambda.norm() - 1.0).abs();
            (residual < tol).then(|| Mode {
                point: BandPoint {
                    k,
                    energy: k * k,
                    q: lambda.arg() / period,
                    lambda_residual: residual,
                },
                vector: eigenvector(m, lambda),
            })
        })
        .collect();
    Ok(Slice { modes, defective })
}

/// Band diagram of a comb over a sorted momentum grid.
pub fn dispersion(comb: &PeriodicComb, k_grid: &[f64], propagating_tol: f64) -> Result<BandDiagram> {
    check_grid(k_grid)?;
    let slices = k_grid
        .par_iter()
        .map(|&k| {
            let m = cell_transfer(comb, k)?;
            slice_at(m.matrix(), k, comb.period, propagating_tol)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut points = Vec::new();
    let mut flagged_k = Vec::new();
    let mut tracker = BranchTracker::new(comb.period);
    for (slice, &k) in slices.into_iter().zip(k_grid) {
        points.extend(slice.modes.iter().map(|m| m.point));
        if slice.defective {
            flagged_k.push(k);
            tracker.close_all();
            continue;
        }
        tracker.advance(slice.modes.into_iter().filter(|m| m.point.q >= 0.0).collect());
    }
    Ok(BandDiagram {
        period: comb.period,
        points,
        branches: tracker.finish(),
        flagged_k,
    })
}

struct OpenBranch {
    id: usize,
    points: Vec<BandPoint>,
    vector: Vector4<Complex64>,
}

/// Minimum `|⟨v_old, v_new⟩|` for two modes to belong to the same branch.
const MIN_OVERLAP: f64 = 0.5;

impl OpenBranch {
    /// Largest admissible deviation from the predicted `q`.
    fn max_jump(&self, zone: f64) -> f64 {
        match self.points.as_slice() {
            [.., prev, last] => (4.0 * (last.q - prev.q).abs()).clamp(1e-3 * zone, 0.1 * zone),
            _ => 0.1 * zone,
        }
    }

    fn predicted_q(&self, k: f64) -> f64 {
        match self.points.as_slice() {
            [.., prev, last] if last.k > prev.k => last.q + (last.q - prev.q) / (last.k - prev.k) * (k - last.k),
            [.., last] => last.q,
            [] => unreachable!("open branches are never empty"),
        }
    }
}

/// Continues branches across consecutive grid momenta by nearest predicted `q`.
struct BranchTracker {
    zone: f64,
    next_id: usize,
    open: Vec<OpenBranch>,
    done: Vec<Branch>,
}

impl BranchTracker {
    fn new(period: f64) -> Self {
        BranchTracker {
            zone: PI / period,
            next_id: 0,
            open: Vec::new(),
            done: Vec::new(),
        }
    }

    fn close_all(&mut self) {
        for b in self.open.drain(..) {
            self.done.push(Branch {
                id: b.id,
                points: b.points,
            });
        }
    }

    fn advance(&mut self, modes: Vec<Mode>) {
        let k = match modes.first() {
            Some(m) => m.point.k,
            None => {
                self.close_all();
                return;
            }
        };
        // tie window on the prediction error, relative to the zone size
        let tie = 1e-3 * self.zone;

        let mut candidates: Vec<(f64, f64, usize, usize)> = Vec::new();
        for (bi, branch) in self.open.iter().enumerate() {
            let pred = branch.predicted_q(k);
            let max_jump = branch.max_jump(self.zone);
            for (mi, mode) in modes.iter().enumerate() {
                let cost = (mode.point.q - pred).abs();
                let overlap = branch.vector.dotc(&mode.vector).norm();
                if cost < max_jump && overlap > MIN_OVERLAP {
                    candidates.push((cost, overlap, bi, mi));
                }
            }
        }
        // Quantize costs into tie bins so that overlap decides within a bin.
        candidates.sort_by(|a, b| {
            let bin_a = (a.0 / tie).floor();
            let bin_b = (b.0 / tie).floor();
            bin_a.total_cmp(&bin_b).then(b.1.total_cmp(&a.1))
        });

        let mut branch_taken = vec![false; self.open.len()];
        let mut mode_taken: Vec<Option<usize>> = vec![None; modes.len()];
        for &(_, _, bi, mi) in &candidates {
            if !branch_taken[bi] && mode_taken[mi].is_none() {
                branch_taken[bi] = true;
                mode_taken[mi] = Some(bi);
            }
        }

        let mut still_open = Vec::new();
        let mut old: Vec<Option<OpenBranch>> = self.open.drain(..).map(Some).collect();
        for (mi, mode) in modes.into_iter().enumerate() {
            match mode_taken[mi] {
                Some(bi) => {
                    let mut branch = old[bi].take().expect("assigned once");
                    branch.points.push(mode.point);
                    branch.vector = mode.vector;
                    still_open.push(branch);
                }
                None => {
                    still_open.push(OpenBranch {
                        id: self.next_id,
                        points: vec![mode.point],
                        vector: mode.vector,
                    });
                    self.next_id += 1;
                }
            }
        }
        for b in old.into_iter().flatten() {
            self.done.push(Branch {
                id: b.id,
                points: b.points,
            });
        }
        still_open.sort_by_key(|b| b.id);
        self.open = still_open;
    }

    fn finish(mut self) -> Vec<Branch> {
        self.close_all();
        self.done.sort_by_key(|b| b.id);
        self.done
    }
}

/// Element of a spinless comb.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarElement {
    Delta(f64),
    DeltaPrime(f64),
    Free(f64),
}

impl ScalarElement {
    fn transfer(&self, k: f64) -> Matrix2<f64> {
        match *self {
            ScalarElement::Delta(x1) => Matrix2::new(1.0, 0.0, x1, 1.0),
            ScalarElement::DeltaPrime(x4) => Matrix2::new(1.0, -x4, 0.0, 1.0),
            ScalarElement::Free(length) => {
                let (s, c) = (k * length).sin_cos();
                Matrix2::new(c, s / k, -k * s, c)
            }
        }
    }
}

/// Spinless comb of real `X₁`/`X₄` interactions.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarComb {
    pub period: f64,
    /// One period; a trailing free segment fills it up to `period`.
    pub elements: Vec<ScalarElement>,
}

impl ScalarComb {
    pub fn transfer(&self, k: f64) -> Matrix2<f64> {
        let inner = self
            .elements
            .iter()
            .fold(Matrix2::identity(), |acc, e| e.transfer(k) * acc);
        let used: f64 = self
            .elements
            .iter()
            .map(|e| match e {
                ScalarElement::Free(l) => *l,
                _ => 0.0,
            })
            .sum();
        ScalarElement::Free((self.period - used).max(0.0)).transfer(k) * inner
    }

    /// `cos(qa)` candidate, i.e. half the trace of the cell matrix.
    pub fn half_trace(&self, k: f64) -> f64 {
        0.5 * self.transfer(k).trace()
    }

    /// `q ∈ [0, π/a]` if `k` lies in a band.
    pub fn quasi_momentum(&self, k: f64) -> Option<f64> {
        let h = self.half_trace(k);
        (h.abs() <= 1.0).then(|| h.acos() / self.period)
    }

    /// Momenta in `[k_min, k_max]` where `|cos(qa)| = 1`.
    pub fn band_edges(&self, k_min: f64, k_max: f64) -> Vec<f64> {
        let f = |k: f64| self.half_trace(k).abs() - 1.0;
        find_sign_changes(f, k_min, k_max, EDGE_SCAN_STEP / self.period)
    }
}

fn find_sign_changes(f: impl Fn(f64) -> f64, k_min: f64, k_max: f64, step: f64) -> Vec<f64> {
    let mut roots = Vec::new();
    let mut lo = k_min;
    let mut f_lo = f(lo);
    while lo < k_max {
        let hi = (lo + step).min(k_max);
        let f_hi = f(hi);
        if f_lo == 0.0 {
            roots.push(lo);
        } else if f_lo * f_hi < 0.0 {
            roots.push(bisect(&f, lo, hi, f_lo));
        }
        lo = hi;
        f_lo = f_hi;
    }
    roots
}

fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut f_lo: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `cos(ka) + (x4·k/2)·sin(ka)`: the Bloch condition `cos(qa)` of an `X₄` comb.
pub fn scalar_kp_relation(x4: f64, a: f64, k: f64) -> f64 {
    (k * a).cos() + 0.5 * x4 * k * (k * a).sin()
}

/// Splits a comb into its `φ+` and `φ−` spinless combs.
///
/// Returns `None` if the cell holds a defect that does not reduce to real
/// `X₁`/`X₄` interactions in that basis (mass jumps, fluxes).
pub fn spin_decouple(comb: &PeriodicComb) -> Option<(ScalarComb, ScalarComb)> {
    fn push(spec: &DefectSpec, plus: &mut Vec<ScalarElement>, minus: &mut Vec<ScalarElement>) -> bool {
        match spec {
            // φ±: [[1, ±r], [0, 1]] = M_{X₄} with X₄ = ∓r
            DefectSpec::RFlip { r } => {
                plus.push(ScalarElement::DeltaPrime(-r));
                minus.push(ScalarElement::DeltaPrime(*r));
            }
            // φ±: [[1, 0], [±r̃, 1]] = M_{X₁} with X₁ = ±r̃
            DefectSpec::RTildeFlip { r_tilde } => {
                plus.push(ScalarElement::Delta(*r_tilde));
                minus.push(ScalarElement::Delta(-r_tilde));
            }
            DefectSpec::Delta { x1 } => {
                plus.push(ScalarElement::Delta(*x1));
                minus.push(ScalarElement::Delta(*x1));
            }
            DefectSpec::DeltaPrime { x4 } => {
                plus.push(ScalarElement::DeltaPrime(*x4));
                minus.push(ScalarElement::DeltaPrime(*x4));
            }
            DefectSpec::Product { factors } => {
                // rightmost factor acts first
                return factors.iter().rev().all(|f| push(f, plus, minus));
            }
            DefectSpec::MassJump { .. } | DefectSpec::Flux { .. } => return false,
        }
        true
    }

    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for element in comb.cell.elements() {
        match element {
            Element::Free { length } => {
                plus.push(ScalarElement::Free(*length));
                minus.push(ScalarElement::Free(*length));
            }
            Element::Defect(spec) => {
                if !push(spec, &mut plus, &mut minus) {
                    return None;
                }
            }
        }
    }
    Some((
        ScalarComb {
            period: comb.period,
            elements: plus,
        },
        ScalarComb {
            period: comb.period,
            elements: minus,
        },
    ))
}

/// Bloch cosines `(λ + 1/λ)/2`, one per reciprocal eigenvalue pair of the cell matrix.
///
/// Real and inside `[−1, 1]` for a propagating pair, where it equals `cos(qa)`.
/// Unlike the eigenvalues themselves these stay well conditioned at band edges.
pub fn bloch_cosines(comb: &PeriodicComb, k: f64) -> Result<[Complex64; 2]> {
    let m = cell_transfer(comb, k)?;
    let w = eigenvalues(m.matrix())?.map(|l| 0.5 * (l + l.inv()));
    let partner = (1..4)
        .min_by(|&i, &j| (w[i] - w[0]).norm().total_cmp(&(w[j] - w[0]).norm()))
        .expect("three candidates");
    let rest: Vec<usize> = (1..4).filter(|&i| i != partner).collect();
    let mut pairs = [0.5 * (w[0] + w[partner]), 0.5 * (w[rest[0]] + w[rest[1]])];
    pairs.sort_by(|a, b| a.re.total_cmp(&b.re));
    Ok(pairs)
}

/// Distance outside the propagating window; negative inside a band.
fn edge_indicator(c: Complex64) -> f64 {
    c.re.abs() - 1.0 + c.im.abs()
}

/// Band edges of a comb from its 4×4 cell matrix.
///
/// Each Bloch cosine is followed continuously across a scan with step
/// `ka = 0.01`, and sign changes of `|cos(qa)| − 1` are refined by bisection.
/// Edges of both pairs are reported, so coinciding edges appear twice.
pub fn transfer_band_edges(comb: &PeriodicComb, k_min: f64, k_max: f64) -> Result<Vec<f64>> {
    check_momentum(k_min)?;
    let step = EDGE_SCAN_STEP / comb.period;

    let mut ks = vec![k_min];
    while let Some(&last) = ks.last() {
        if last >= k_max {
            break;
        }
        ks.push((last + step).min(k_max));
    }
    let raw = ks
        .par_iter()
        .map(|&k| bloch_cosines(comb, k))
        .collect::<Result<Vec<_>>>()?;

    // continue each cosine by linear prediction from the two previous samples
    let mut tracks: Vec<[Complex64; 2]> = Vec::with_capacity(raw.len());
    for (i, values) in raw.iter().enumerate() {
        let next = if i == 0 {
            *values
        } else {
            let prev = tracks[i - 1];
            let pred = if i >= 2 {
                [2.0 * prev[0] - tracks[i - 2][0], 2.0 * prev[1] - tracks[i - 2][1]]
            } else {
                prev
            };
            let keep = (values[0] - pred[0]).norm() + (values[1] - pred[1]).norm();
            let swap = (values[1] - pred[0]).norm() + (values[0] - pred[1]).norm();
            if swap < keep {
                [values[1], values[0]]
            } else {
                *values
            }
        };
        tracks.push(next);
    }

    let mut edges = Vec::new();
    for i in 1..ks.len() {
        for (&c_lo, &c_hi) in tracks[i - 1].iter().zip(&tracks[i]) {
            let (f_lo, f_hi) = (edge_indicator(c_lo), edge_indicator(c_hi));
            if f_lo == 0.0 {
                edges.push(ks[i - 1]);
            } else if f_lo * f_hi < 0.0 {
                edges.push(refine_edge(comb, (ks[i - 1], c_lo, f_lo), (ks[i], c_hi))?);
            }
        }
    }
    edges.sort_by(f64::total_cmp);
    Ok(edges)
}

fn refine_edge(comb: &PeriodicComb, lo: (f64, Complex64, f64), hi: (f64, Complex64)) -> Result<f64> {
    let (mut k_lo, mut c_lo, f_lo) = lo;
    let (mut k_hi, mut c_hi) = hi;
    for _ in 0..200 {
        let mid = 0.5 * (k_lo + k_hi);
        if mid <= k_lo || mid >= k_hi {
            break;
        }
        let guess = 0.5 * (c_lo + c_hi);
        let c = bloch_cosines(comb, mid)?
            .into_iter()
            .min_by(|a, b| (a - guess).norm().total_cmp(&(b - guess).norm()))
            .expect("two cosines");
        let f = edge_indicator(c);
        if f == 0.0 {
            return Ok(mid);
        }
        if (f < 0.0) == (f_lo < 0.0) {
            k_lo = mid;
            c_lo = c;
        } else {
            k_hi = mid;
            c_hi = c;
        }
    }
    Ok(0.5 * (k_lo + k_hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    /// Leading coefficient: curvature `c` in `E ≈ c·q²` or slope `v` in `E ≈ v·q`.
    pub coefficient: f64,
    /// Next-order correction (`q⁴` resp. `q²` coefficient).
    pub correction: f64,
    pub rms_residual: f64,
    pub points: usize,
}

impl FitResult {
    /// `m*/m` for a curvature fit: the bare particle has `c = 1`.
    pub fn mass_ratio(&self) -> f64 {
        1.0 / self.coefficient
    }
}

/// Minimum number of branch points inside the fit window.
pub const MIN_FIT_POINTS: usize = 10;

fn fit_two_powers(branch: &Branch, q_window: f64, p1: i32, p2: i32) -> Result<FitResult> {
    let pts: Vec<(f64, f64)> = branch
        .points
        .iter()
        .filter(|p| p.q > 0.0 && p.q <= q_window)
        .map(|p| (p.q, p.energy))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "{} points in q window (0, {q_window}], need {MIN_FIT_POINTS}",
            pts.len()
        )));
    }
    // normal equations for E = c·q^p1 + d·q^p2
    let (mut s11, mut s12, mut s22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(q, e) in &pts {
        let (f1, f2) = (q.powi(p1), q.powi(p2));
        s11 += f1 * f1;
        s12 += f1 * f2;
        s22 += f2 * f2;
        b1 += f1 * e;
        b2 += f2 * e;
    }
    let det = s11 * s22 - s12 * s12;
    if !(det.abs() > 0.0) {
        return Err(Error::Fit("degenerate normal equations".into()));
    }
    let c = (b1 * s22 - b2 * s12) / det;
    let d = (s11 * b2 - s12 * b1) / det;
    let sq: f64 = pts
        .iter()
        .map(|&(q, e)| (e - c * q.powi(p1) - d * q.powi(p2)).powi(2))
        .sum();
    Ok(FitResult {
        coefficient: c,
        correction: d,
        rms_residual: (sq / pts.len() as f64).sqrt(),
        points: pts.len(),
    })
}

/// Band-bottom curvature from `E = c·q² + d·q⁴` over `0 < q ≤ q_window`.
pub fn effective_mass(branch: &Branch, q_window: f64) -> Result<FitResult> {
    fit_two_powers(branch, q_window, 2, 4)
}

/// Band-bottom slope from `E = v·q + w·q²` over `0 < q ≤ q_window`.
pub fn sound_slope(branch: &Branch, q_window: f64) -> Result<FitResult> {
    fit_two_powers(branch, q_window, 1, 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{momentum_grid, Spacing};

    fn rflip_comb(r: f64) -> PeriodicComb {
        PeriodicComb::single(DefectSpec::RFlip { r }, 1.0).unwrap()
    }

    #[test]
    fn empty_cell_is_free_propagation() {
        let comb = PeriodicComb::new(Device::empty(), 1.0).unwrap();
        let k = 2.7;
        assert_eq!(cell_transfer(&comb, k).unwrap(), propagation(k, 1.0).unwrap());
    }

    #[test]
    fn single_defect_cell_order() {
        let comb = rflip_comb(0.3);
        let k = 1.9;
        let expected =
            propagation(k, 1.0).unwrap() * crate::extension::defect_matrix(&DefectSpec::RFlip { r: 0.3 }).unwrap();
        assert!(cell_transfer(&comb, k).unwrap().max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn period_validation() {
        let cell = Device::new(vec![
            Element::free(0.6),
            DefectSpec::RFlip { r: 0.1 }.into(),
            Element::free(0.6),
        ])
        .unwrap();
        assert!(PeriodicComb::new(cell.clone(), 1.0).is_err());
        assert!(PeriodicComb::new(cell, 1.2).is_ok());
        assert!(PeriodicComb::new(Device::empty(), 0.0).is_err());
    }

    #[test]
    fn decoupled_traces() {
        // tr of the φ∓ blocks of P(a)·M_r is 2cos(ka) ∓ r·k·sin(ka)
        let (r, k) = (0.5, 1.3);
        let (plus, minus) = spin_decouple(&rflip_comb(r)).unwrap();
        assert_eq!(plus.elements, vec![ScalarElement::DeltaPrime(-0.5)]);
        assert_eq!(minus.elements, vec![ScalarElement::DeltaPrime(0.5)]);
        assert!((plus.transfer(k).trace() - (2.0 * k.cos() - r * k * k.sin())).abs() < 1e-14);
        assert!((minus.transfer(k).trace() - (2.0 * k.cos() + r * k * k.sin())).abs() < 1e-14);
        assert!((minus.half_trace(k) - scalar_kp_relation(r, 1.0, k)).abs() < 1e-15);
    }

    #[test]
    fn zero_coupling_decouples_to_free_combs() {
        let (plus, minus) = spin_decouple(&rflip_comb(0.0)).unwrap();
        for comb in [plus, minus] {
            assert!((comb.half_trace(0.7) - 0.7f64.cos()).abs() < 1e-15);
        }
    }

    #[test]
    fn mass_jump_cells_do_not_decouple() {
        let comb = PeriodicComb::single(DefectSpec::MassJump { mu: 2.0 }, 1.0).unwrap();
        assert!(spin_decouple(&comb).is_none());
    }

    #[test]
    fn kp_relation_limits() {
        for k in [0.1, 1.0, 2.5] {
            assert_eq!(scalar_kp_relation(0.0, 1.0, k), k.cos());
        }
        // small-k: cos(qa) ≈ 1 − (k²a/2)(a − x4)
        let (x4, a, k) = (0.3, 1.0, 1e-3);
        let expected = 1.0 - 0.5 * k * k * a * (a - x4);
        assert!((scalar_kp_relation(x4, a, k) - expected).abs() < 1e-12);
        // x4 = a = 1: 1 − k⁴/24 + O(k⁶)
        let k = 0.05;
        assert!((scalar_kp_relation(1.0, 1.0, k) - (1.0 - k.powi(4) / 24.0)).abs() < 1e-10);
    }

    #[test]
    fn free_comb_single_branch() {
        let comb = rflip_comb(0.0);
        let grid = momentum_grid(0.05, 2.5, 100, Spacing::Linear).unwrap();
        let diagram = dispersion(&comb, &grid, DEFAULT_PROPAGATING_TOL).unwrap();
        // both spin copies of E = q², q = k on the first zone
        for b in &diagram.branches {
            for p in &b.points {
                assert!((p.q - p.k).abs() < 1e-8, "{p:?}");
            }
        }
        let fit = effective_mass(&diagram.branches[0], 1.0).unwrap();
        assert!((fit.coefficient - 1.0).abs() < 1e-8);
    }

    #[test]
    fn fit_needs_enough_points() {
        let branch = Branch { id: 0, points: vec![] };
        assert!(matches!(effective_mass(&branch, 0.1), Err(Error::Fit(_))));
    }

    #[test]
    fn fits_recover_synthetic_coefficients() {
        let points: Vec<BandPoint> = (1..=40)
            .map(|i| {
                let q = 0.005 * i as f64;
                BandPoint {
                    k: q,
                    energy: 3.0 * q + 0.5 * q * q,
                    q,
                    lambda_residual: 0.0,
                }
            })
            .collect();
        let branch = Branch { id: 0, points };
        let fit = sound_slope(&branch, 0.2).unwrap();
        assert!((fit.coefficient - 3.0).abs() < 1e-12);
        assert!((fit.correction - 0.5).abs() < 1e-10);
        assert!(fit.rms_residual < 1e-12);
    }

    #[test]
    fn scalar_edges_of_free_comb_absent() {
        let comb = ScalarComb {
            period: 1.0,
            elements: vec![],
        };
        // |cos k| touches 1 at k = π without crossing
        assert!(comb.band_edges(0.5, 3.0).is_empty());
    }
}
