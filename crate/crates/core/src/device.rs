//! Finite devices: ordered chains of point defects and free segments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::{defect_matrix, BoundaryMatrix, DefectSpec};
use crate::scattering::{channel_probabilities, propagation, transfer_to_scattering, Channel, ScatteringMatrix};

/// One element of a device, ordered from `x = −∞` to `x = +∞`.
///
/// Serialized with the same `kind` tag as [`DefectSpec`], plus
/// `{ kind = "free", length = ... }` for a free segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Element {
    #[serde(rename = "free")]
    Free { length: f64 },
    #[serde(untagged)]
    Defect(DefectSpec),
}

impl Element {
    pub fn free(length: f64) -> Self {
        Element::Free { length }
    }

    pub fn transfer(&self, k: f64) -> Result<BoundaryMatrix> {
        match self {
            Element::Free { length } => propagation(k, *length),
            Element::Defect(spec) => defect_matrix(spec),
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        match self {
            Element::Free { length } if !(*length > 0.0 && length.is_finite()) => {
                Err(format!("free segment length must be positive, got {length}"))
            }
            Element::Free { .. } => Ok(()),
            Element::Defect(spec) => spec.validate().map_err(|e| e.to_string()),
        }
    }
}

impl From<DefectSpec> for Element {
    fn from(spec: DefectSpec) -> Self {
        Element::Defect(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Device {
    elements: Vec<Element>,
}

impl Device {
    pub fn new(elements: Vec<Element>) -> Result<Self> {
        for (index, element) in elements.iter().enumerate() {
            element
                .validate()
                .map_err(|reason| Error::InvalidElement { index, reason })?;
        }
        Ok(Device { elements })
    }

    /// The free line.
    pub fn empty() -> Self {
        Device::default()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.elements
            .iter()
            .map(|e| match e {
                Element::Free { length } => *length,
                Element::Defect(_) => 0.0,
            })
            .sum()
    }

    /// Mirror image of the device under `x → −x`.
    ///
    /// Only the element order changes; defects that are not parity invariant
    /// (see [`DefectSpec::is_parity_invariant`]) are not mirrored themselves.
    pub fn reversed(&self) -> Device {
        Device {
            elements: self.elements.iter().rev().cloned().collect(),
        }
    }

    /// `self` followed by `other` on the right.
    pub fn then(&self, other: &Device) -> Device {
        Device {
            elements: self.elements.iter().chain(&other.elements).cloned().collect(),
        }
    }

    pub fn scattering(&self, k: f64, sigma_x_tol: f64) -> Result<ScatteringMatrix> {
        transfer_to_scattering(&total_transfer(self, k)?, k, sigma_x_tol)
    }
}

/// Transfer matrix from the left edge to the right edge of the device.
pub fn total_transfer(device: &Device, k: f64) -> Result<BoundaryMatrix> {
    crate::scattering::check_momentum(k)?;
    device
        .elements
        .iter()
        .try_fold(BoundaryMatrix::identity(), |acc, e| Ok(e.transfer(k)? * acc))
}

/// `[defect, Free(separation), defect]`.
pub fn preset_resonator(defect: DefectSpec, separation: f64) -> Result<Device> {
    Device::new(vec![
        Element::Defect(defect.clone()),
        Element::free(separation),
        Element::Defect(defect),
    ])
}

/// Parameters of the filter chain `[r-X4(r), Free(spacing), X1(x1), Free(spacing), r-X4(r)]`.
///
/// The geometry is a plausible default rather than a reference design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterParams {
    #[serde(default = "FilterParams::default_r")]
    pub r: f64,
    #[serde(default = "FilterParams::default_x1")]
    pub x1: f64,
    #[serde(default = "FilterParams::default_spacing")]
    pub spacing: f64,
}

impl FilterParams {
    fn default_r() -> f64 {
        0.5
    }
    fn default_x1() -> f64 {
        1.0
    }
    fn default_spacing() -> f64 {
        1.0
    }
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            r: Self::default_r(),
            x1: Self::default_x1(),
            spacing: Self::default_spacing(),
        }
    }
}

pub fn preset_filter(params: &FilterParams) -> Result<Device> {
    Device::new(vec![
        DefectSpec::RFlip { r: params.r }.into(),
        Element::free(params.spacing),
        DefectSpec::Delta { x1: params.x1 }.into(),
        Element::free(params.spacing),
        DefectSpec::RFlip { r: params.r }.into(),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    #[default]
    Log,
}

/// `points` momenta from `k_min` to `k_max` inclusive.
pub fn momentum_grid(k_min: f64, k_max: f64, points: usize, spacing: Spacing) -> Result<Vec<f64>> {
    if !(k_min > 0.0 && k_min.is_finite()) {
        return Err(Error::Grid(format!("k_min must be positive, got {k_min}")));
    }
    if !(k_max > k_min && k_max.is_finite()) {
        return Err(Error::Grid(format!("k_max must exceed k_min, got {k_max}")));
    }
    if points < 2 {
        return Err(Error::Grid(format!("need at least 2 points, got {points}")));
    }
    let last = (points - 1) as f64;
    let grid = (0..points).map(|i| {
        let t = i as f64 / last;
        match spacing {
            Spacing::Linear => k_min + (k_max - k_min) * t,
            Spacing::Log => (k_min.ln() + (k_max.ln() - k_min.ln()) * t).exp(),
        }
    });
    let mut grid: Vec<f64> = grid.collect();
    // pin the endpoints against rounding in exp/ln
    grid[0] = k_min;
    grid[points - 1] = k_max;
    Ok(grid)
}

/// 1000 log-spaced points in `[0.01, 20]`.
pub fn default_momentum_grid() -> Vec<f64> {
    momentum_grid(0.01, 20.0, 1000, Spacing::Log).expect("static grid")
}

pub(crate) fn check_grid(k_grid: &[f64]) -> Result<()> {
    if k_grid.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
        return Err(Error::Grid("momenta must be positive and finite".into()));
    }
    if k_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Grid("momenta must be sorted ascending".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumRow {
    pub k: f64,
    pub energy: f64,
    /// Outgoing probabilities in channel order; NaN when `singular`.
    pub probabilities: [f64; 4],
    pub unitarity_residual: f64,
    pub singular: bool,
}

impl SpectrumRow {
    pub fn probability(&self, outgoing: Channel) -> f64 {
        self.probabilities[outgoing.index()]
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTable {
    pub incident: Channel,
    pub rows: Vec<SpectrumRow>,
}

impl SpectrumTable {
    /// Probability of leaving with the opposite spin, per row.
    pub fn spin_flip(&self) -> Vec<f64> {
        let incident = self.incident;
        self.rows
            .iter()
            .map(|row| {
                Channel::ALL
                    .iter()
                    .filter(|c| c.spin() != incident.spin())
                    .map(|c| row.probability(*c))
                    .sum()
            })
            .collect()
    }
}

/// Per-momentum outgoing probabilities for one incident channel.
///
/// Rows are evaluated in parallel and returned in grid order. Momenta where the
/// scattering problem is singular are flagged instead of aborting the sweep.
pub fn spectrum(device: &Device, k_grid: &[f64], incident: Channel, sigma_x_tol: f64) -> Result<SpectrumTable> {
    check_grid(k_grid)?;
    let rows = k_grid
        .par_iter()
        .map(|&k| {
            let transfer = total_transfer(device, k)?;
            Ok(match transfer_to_scattering(&transfer, k, sigma_x_tol) {
                Ok(s) => SpectrumRow {
                    k,
                    energy: k * k,
                    probabilities: channel_probabilities(&s, incident),
                    unitarity_residual: s.unitarity_residual(),
                    singular: false,
                },
                Err(Error::SpectralSingularity { .. }) => SpectrumRow {
                    k,
                    energy: k * k,
                    probabilities: [f64::NAN; 4],
                    unitarity_residual: f64::NAN,
                    singular: true,
                },
                Err(e) => return Err(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectrumTable { incident, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scattering::DEFAULT_SIGMA_X_TOL;

    #[test]
    fn empty_device_is_identity() {
        assert_eq!(
            total_transfer(&Device::empty(), 2.0).unwrap(),
            BoundaryMatrix::identity()
        );
    }

    #[test]
    fn single_defect_transfer() {
        let spec = DefectSpec::RFlip { r: 0.4 };
        let device = Device::new(vec![spec.clone().into()]).unwrap();
        assert_eq!(total_transfer(&device, 1.0).unwrap(), defect_matrix(&spec).unwrap());
    }

    #[test]
    fn rightmost_element_multiplies_on_the_left() {
        let (r, length, k) = (0.6, 1.4, 2.3);
        let device = Device::new(vec![
            DefectSpec::RFlip { r }.into(),
            Element::free(length),
            DefectSpec::RFlip { r: -r }.into(),
        ])
        .unwrap();
        let m_plus = defect_matrix(&DefectSpec::RFlip { r }).unwrap().into_matrix();
        let m_minus = defect_matrix(&DefectSpec::RFlip { r: -r }).unwrap().into_matrix();
        let p = propagation(k, length).unwrap().into_matrix();
        // brute-force triple loop product M_{-r} · P · M_r
        let mut expected = crate::extension::Mat4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                for a in 0..4 {
                    for b in 0..4 {
                        expected[(i, j)] += m_minus[(i, a)] * p[(a, b)] * m_plus[(b, j)];
                    }
                }
            }
        }
        let got = total_transfer(&device, k).unwrap();
        assert!(got.max_abs_diff(&BoundaryMatrix::from_matrix(expected)) < 1e-14);
    }

    #[test]
    fn invalid_elements_name_their_index() {
        let err = Device::new(vec![DefectSpec::RFlip { r: 1.0 }.into(), Element::free(-1.0)]).unwrap_err();
        assert!(matches!(err, Error::InvalidElement { index: 1, .. }), "{err}");
        let err = Device::new(vec![DefectSpec::MassJump { mu: 0.0 }.into()]).unwrap_err();
        assert!(matches!(err, Error::InvalidElement { index: 0, .. }));
        assert!(Device::new(vec![Element::free(0.0)]).is_err());
    }

    #[test]
    fn free_line_spectrum() {
        let grid = momentum_grid(0.1, 5.0, 20, Spacing::Linear).unwrap();
        let table = spectrum(&Device::empty(), &grid, Channel::LeftUp, DEFAULT_SIGMA_X_TOL).unwrap();
        for row in &table.rows {
            for (p, expected) in row.probabilities.iter().zip([0.0, 0.0, 1.0, 0.0]) {
                assert!((p - expected).abs() < 1e-15, "{row:?}");
            }
        }
    }

    #[test]
    fn single_rflip_equal_split_at_kr_two() {
        let r = 0.8;
        let device = Device::new(vec![DefectSpec::RFlip { r }.into()]).unwrap();
        let table = spectrum(&device, &[2.0 / r], Channel::LeftUp, DEFAULT_SIGMA_X_TOL).unwrap();
        for p in table.rows[0].probabilities {
            assert!((p - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_coupling_resonator_is_transparent() {
        let device = preset_resonator(DefectSpec::RFlip { r: 0.0 }, 1.0).unwrap();
        assert_eq!(device.len(), 3);
        let grid = momentum_grid(0.05, 10.0, 50, Spacing::Log).unwrap();
        let table = spectrum(&device, &grid, Channel::LeftUp, DEFAULT_SIGMA_X_TOL).unwrap();
        for row in &table.rows {
            assert!((row.probability(Channel::RightUp) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn filter_preset_layout() {
        let device = preset_filter(&FilterParams::default()).unwrap();
        assert_eq!(device.len(), 5);
        assert_eq!(device.total_length(), 2.0);
        assert_eq!(device.elements()[2], Element::Defect(DefectSpec::Delta { x1: 1.0 }));
    }

    #[test]
    fn grid_generation() {
        let g = momentum_grid(0.01, 20.0, 1000, Spacing::Log).unwrap();
        assert_eq!(g.len(), 1000);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[999], 20.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(default_momentum_grid(), g);
        let g = momentum_grid(1.0, 3.0, 3, Spacing::Linear).unwrap();
        assert_eq!(g, vec![1.0, 2.0, 3.0]);
        assert!(momentum_grid(0.0, 1.0, 10, Spacing::Linear).is_err());
        assert!(momentum_grid(2.0, 1.0, 10, Spacing::Linear).is_err());
        assert!(momentum_grid(1.0, 2.0, 1, Spacing::Linear).is_err());
    }

    #[test]
    fn unsorted_grid_rejected() {
        assert!(matches!(
            spectrum(&Device::empty(), &[1.0, 0.5], Channel::LeftUp, DEFAULT_SIGMA_X_TOL),
            Err(Error::Grid(_))
        ));
    }
}
