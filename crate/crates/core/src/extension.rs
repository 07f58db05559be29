//! Boundary-condition matrices for spin-1/2 point interactions.
//!
//! A point interaction at `x = 0` is a linear relation `Φ(+0) = M Φ(-0)` between
//! the boundary 4-vectors `Φ = (ψ↑, ψ′↑, ψ↓, ψ′↓)` on either side of the
//! singular point. Units are `ħ = 1`, `m = 1/2`, so the free Hamiltonian is
//! `-d²/dx²` and `E = k²`.
//!
//! The spinless extensions (`X₁`, `X₄`, mass jump `μ`, flux `Φ`) act identically
//! on both spin blocks. The spin-flip generators `M_r` and `M̃_r̃` couple the
//! blocks and are the point analogues of a Rashba spin-momentum term.
//!
//! Self-adjointness is equivalent to conservation of the three current forms
//! `Jᵢ = Φ† Σᵢ Φ`, i.e. `M† Σᵢ M = Σᵢ` for `i = x, y, z`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat4 = Matrix4<Complex64>;

/// Validation tolerance for `M† Σᵢ M = Σᵢ`.
pub const DEFAULT_CURRENT_TOL: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Symbolic description of a single point interaction.
///
/// Serialized with a `kind` tag, e.g. `{ kind = "r_x4", r = 0.5 }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum DefectSpec {
    /// δ-potential: `ψ′` jumps by `x1·ψ`.
    #[serde(rename = "x1")]
    Delta { x1: f64 },
    /// δ′-type interaction: `ψ` jumps by `−x4·ψ′`.
    #[serde(rename = "x4")]
    DeltaPrime { x4: f64 },
    /// Mass jump, `μ = sqrt(m₊/m₋) > 0`.
    #[serde(rename = "mass_jump")]
    MassJump { mu: f64 },
    /// Localized flux, phase `e^{iπΦ}`; `phi` is taken modulo 2.
    #[serde(rename = "flux")]
    Flux { phi: f64 },
    /// Spin-flip generator `M_r` (spin-flip variant of the `X₄` extension).
    #[serde(rename = "r_x4")]
    RFlip { r: f64 },
    /// Spin-flip generator `M̃_r̃` (δ-potential augmented with spin flip).
    #[serde(rename = "r_x1")]
    RTildeFlip { r_tilde: f64 },
    /// Ordered product; the leftmost factor acts last.
    #[serde(rename = "product")]
    Product { factors: Vec<DefectSpec> },
}

impl DefectSpec {
    /// Flux defect built from the boundary parameter `X₃`.
    pub fn flux_from_x3(x3: f64) -> Result<Self> {
        Ok(DefectSpec::Flux { phi: x3_to_phi(x3)? })
    }

    /// Mass-jump defect built from `X₂`, `|X₂| < 2`.
    pub fn mass_jump_from_x2(x2: f64) -> Result<Self> {
        Ok(DefectSpec::MassJump { mu: x2_to_mu(x2)? })
    }

    /// The general spin-flip contact `M̃_r̃ · M_r · M_{X₂}`.
    pub fn rashba_contact(r_tilde: f64, r: f64, mu: f64) -> Self {
        DefectSpec::Product {
            factors: vec![
                DefectSpec::RTildeFlip { r_tilde },
                DefectSpec::RFlip { r },
                DefectSpec::MassJump { mu },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn finite(name: &'static str, value: f64) -> Result<()> {
            if value.is_finite() {
                Ok(())
            } else {
                Err(Error::ParameterDomain {
                    name,
                    value,
                    reason: "must be finite",
                })
            }
        }
        match self {
            DefectSpec::Delta { x1 } => finite("x1", *x1),
            DefectSpec::DeltaPrime { x4 } => finite("x4", *x4),
            DefectSpec::MassJump { mu } => {
                finite("mu", *mu)?;
                if *mu > 0.0 {
                    Ok(())
                } else {
                    Err(Error::ParameterDomain {
                        name: "mu",
                        value: *mu,
                        reason: "mass-jump parameter must be positive",
                    })
                }
            }
            DefectSpec::Flux { phi } => finite("phi", *phi),
            DefectSpec::RFlip { r } => finite("r", *r),
            DefectSpec::RTildeFlip { r_tilde } => finite("r_tilde", *r_tilde),
            DefectSpec::Product { factors } => {
                if factors.is_empty() {
                    return Err(Error::Usage("product defect needs at least one factor".into()));
                }
                factors.iter().try_for_each(DefectSpec::validate)
            }
        }
    }

    /// True if the interaction looks the same after `x → −x`.
    ///
    /// Holds for `X₁`, `X₄`, `M_r` and `M̃_r̃`; the mass jump and the flux are
    /// mapped to their inverses.
    pub fn is_parity_invariant(&self) -> bool {
        match self {
            DefectSpec::Delta { .. }
            | DefectSpec::DeltaPrime { .. }
            | DefectSpec::RFlip { .. }
            | DefectSpec::RTildeFlip { .. } => true,
            DefectSpec::MassJump { mu } => *mu == 1.0,
            DefectSpec::Flux { phi } => phi.rem_euclid(2.0) == 0.0,
            DefectSpec::Product { factors } => factors.len() == 1 && factors[0].is_parity_invariant(),
        }
    }
}

impl fmt::Display for DefectSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DefectSpec::Delta { x1 } => write!(f, "X1({x1})"),
            DefectSpec::DeltaPrime { x4 } => write!(f, "X4({x4})"),
            DefectSpec::MassJump { mu } => write!(f, "X2(mu={mu})"),
            DefectSpec::Flux { phi } => write!(f, "X3(phi={phi})"),
            DefectSpec::RFlip { r } => write!(f, "r-X4({r})"),
            DefectSpec::RTildeFlip { r_tilde } => write!(f, "r~-X1({r_tilde})"),
            DefectSpec::Product { factors } => {
                for (i, factor) in factors.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" * ")?;
                    }
                    write!(f, "{factor}")?;
                }
                Ok(())
            }
        }
    }
}

/// 4×4 complex matrix acting on `(ψ↑, ψ′↑, ψ↓, ψ′↓)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryMatrix(Mat4);

impl BoundaryMatrix {
    pub fn identity() -> Self {
        BoundaryMatrix(Mat4::identity())
    }

    pub fn from_matrix(m: Mat4) -> Self {
        BoundaryMatrix(m)
    }

    pub fn from_real(rows: [[f64; 4]; 4]) -> Self {
        BoundaryMatrix(Mat4::from_fn(|i, j| Complex64::new(rows[i][j], 0.0)))
    }

    /// Lifts a spinless 2×2 condition on `(ψ, ψ′)` to both spin blocks.
    pub fn lift_spinless(block: Matrix2<Complex64>) -> Self {
        let mut m = Mat4::zeros();
        m.fixed_view_mut::<2, 2>(0, 0).copy_from(&block);
        m.fixed_view_mut::<2, 2>(2, 2).copy_from(&block);
        BoundaryMatrix(m)
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn into_matrix(self) -> Mat4 {
        self.0
    }

    /// Entry at zero-based `(row, col)`.
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.0[(row, col)]
    }

    pub fn determinant(&self) -> Complex64 {
        self.0.determinant()
    }

    pub fn inverse(&self) -> Option<Self> {
        self.0.try_inverse().map(BoundaryMatrix)
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        BoundaryMatrix(self.0 * factor)
    }

    pub fn adjoint(&self) -> Self {
        BoundaryMatrix(self.0.adjoint())
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &BoundaryMatrix) -> f64 {
        max_abs(&(self.0 - other.0))
    }

    pub fn is_real(&self) -> bool {
        self.0.iter().all(|z| z.im == 0.0)
    }
}

impl Mul for BoundaryMatrix {
    type Output = BoundaryMatrix;

    fn mul(self, rhs: BoundaryMatrix) -> BoundaryMatrix {
        BoundaryMatrix(self.0 * rhs.0)
    }
}

impl Mul<&BoundaryMatrix> for &BoundaryMatrix {
    type Output = BoundaryMatrix;

    fn mul(self, rhs: &BoundaryMatrix) -> BoundaryMatrix {
        BoundaryMatrix(self.0 * rhs.0)
    }
}

pub(crate) fn max_abs(m: &Mat4) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CurrentComponent {
    X,
    Y,
    Z,
}

impl CurrentComponent {
    pub const ALL: [CurrentComponent; 3] = [CurrentComponent::X, CurrentComponent::Y, CurrentComponent::Z];
}

impl fmt::Display for CurrentComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CurrentComponent::X => "X",
            CurrentComponent::Y => "Y",
            CurrentComponent::Z => "Z",
        })
    }
}

/// Hermitian form `Σᵢ` with `Jᵢ = Φ† Σᵢ Φ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentForm {
    pub label: CurrentComponent,
    pub matrix: Mat4,
}

impl CurrentForm {
    pub fn of(label: CurrentComponent) -> Self {
        // Sp₂ = [[0,1],[-1,0]], σx = [[0,1],[1,0]]
        let mut m = Mat4::zeros();
        match label {
            CurrentComponent::X => {
                // (1/i)·blockdiag(Sp₂, Sp₂)
                for b in [0, 2] {
                    m[(b, b + 1)] = -I;
                    m[(b + 1, b)] = I;
                }
            }
            CurrentComponent::Y => {
                // blockdiag(−σx, σx)
                m[(0, 1)] = -ONE;
                m[(1, 0)] = -ONE;
                m[(2, 3)] = ONE;
                m[(3, 2)] = ONE;
            }
            CurrentComponent::Z => {
                // (1/i)·[[0, σx], [−σx, 0]]
                m[(0, 3)] = -I;
                m[(1, 2)] = -I;
                m[(2, 1)] = I;
                m[(3, 0)] = I;
            }
        }
        CurrentForm { label, matrix: m }
    }

    /// Current `Φ† Σ Φ` carried by a boundary vector.
    pub fn current(&self, phi: &nalgebra::Vector4<Complex64>) -> f64 {
        (phi.adjoint() * self.matrix * phi)[(0, 0)].re
    }

    pub fn is_hermitian(&self) -> bool {
        self.matrix == self.matrix.adjoint()
    }
}

/// `(Σx, Σy, Σz)`.
pub fn sigma_forms() -> (CurrentForm, CurrentForm, CurrentForm) {
    (
        CurrentForm::of(CurrentComponent::X),
        CurrentForm::of(CurrentComponent::Y),
        CurrentForm::of(CurrentComponent::Z),
    )
}

/// Builds the boundary matrix of a defect.
pub fn defect_matrix(spec: &DefectSpec) -> Result<BoundaryMatrix> {
    spec.validate()?;
    Ok(build(spec))
}

fn build(spec: &DefectSpec) -> BoundaryMatrix {
    let c = |x: f64| Complex64::new(x, 0.0);
    match spec {
        DefectSpec::Delta { x1 } => BoundaryMatrix::lift_spinless(Matrix2::new(ONE, ZERO, c(*x1), ONE)),
        DefectSpec::DeltaPrime { x4 } => BoundaryMatrix::lift_spinless(Matrix2::new(ONE, c(-x4), ZERO, ONE)),
        DefectSpec::MassJump { mu } => BoundaryMatrix::lift_spinless(Matrix2::new(c(*mu), ZERO, ZERO, c(1.0 / mu))),
        DefectSpec::Flux { phi } => BoundaryMatrix::identity().scaled(flux_phase(*phi)),
        DefectSpec::RFlip { r } => BoundaryMatrix::from_real([
            [1.0, 0.0, 0.0, *r],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, *r, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]),
        DefectSpec::RTildeFlip { r_tilde } => BoundaryMatrix::from_real([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, *r_tilde, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [*r_tilde, 0.0, 0.0, 1.0],
        ]),
        DefectSpec::Product { factors } => factors
            .iter()
            .map(build)
            .fold(BoundaryMatrix::identity(), |acc, m| acc * m),
    }
}

/// `e^{iπΦ}` with `Φ` reduced modulo 2.
pub fn flux_phase(phi: f64) -> Complex64 {
    let reduced = phi.rem_euclid(2.0);
    Complex64::from_polar(1.0, PI * reduced)
}

/// Ordered product of boundary matrices; the last one acts first.
pub fn compose(matrices: &[BoundaryMatrix]) -> Result<BoundaryMatrix> {
    let (first, rest) = matrices
        .split_first()
        .ok_or_else(|| Error::Usage("compose needs at least one matrix".into()))?;
    Ok(rest.iter().fold(*first, |acc, m| acc * *m))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservationReport {
    pub x: bool,
    pub y: bool,
    pub z: bool,
    /// Max-abs entry of `M† Σᵢ M − Σᵢ` for `i = x, y, z`.
    pub residuals: [f64; 3],
}

impl ConservationReport {
    pub fn all(&self) -> bool {
        self.x && self.y && self.z
    }

    pub fn residual(&self, component: CurrentComponent) -> f64 {
        match component {
            CurrentComponent::X => self.residuals[0],
            CurrentComponent::Y => self.residuals[1],
            CurrentComponent::Z => self.residuals[2],
        }
    }

    pub fn passes(&self, component: CurrentComponent) -> bool {
        match component {
            CurrentComponent::X => self.x,
            CurrentComponent::Y => self.y,
            CurrentComponent::Z => self.z,
        }
    }
}

/// Residual `max |M† Σ M − Σ|` for a single current form.
pub fn current_residual(m: &BoundaryMatrix, form: &CurrentForm) -> f64 {
    let lhs = m.matrix().adjoint() * form.matrix * m.matrix();
    max_abs(&(lhs - form.matrix))
}

pub fn conserves_currents(m: &BoundaryMatrix, tol: f64) -> ConservationReport {
    let (sx, sy, sz) = sigma_forms();
    let residuals = [
        current_residual(m, &sx),
        current_residual(m, &sy),
        current_residual(m, &sz),
    ];
    ConservationReport {
        x: residuals[0] <= tol,
        y: residuals[1] <= tol,
        z: residuals[2] <= tol,
        residuals,
    }
}

/// `X₂ = 2(μ − 1)/(μ + 1)`.
pub fn mu_to_x2(mu: f64) -> Result<f64> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::ParameterDomain {
            name: "mu",
            value: mu,
            reason: "mass-jump parameter must be positive",
        });
    }
    Ok(2.0 * (mu - 1.0) / (mu + 1.0))
}

/// `μ = (2 + X₂)/(2 − X₂)`, requires `|X₂| < 2`.
pub fn x2_to_mu(x2: f64) -> Result<f64> {
    if !(x2.abs() < 2.0) {
        return Err(Error::ParameterDomain {
            name: "x2",
            value: x2,
            reason: "|X2| must be below 2",
        });
    }
    Ok((2.0 + x2) / (2.0 - x2))
}

/// Flux fraction from `e^{iπΦ} = (2 + iX₃)/(2 − iX₃)`, result in `(−1, 1)`.
pub fn x3_to_phi(x3: f64) -> Result<f64> {
    if !x3.is_finite() {
        return Err(Error::ParameterDomain {
            name: "x3",
            value: x3,
            reason: "must be finite",
        });
    }
    Ok(2.0 * (x3 / 2.0).atan() / PI)
}

/// Inverse of [`x3_to_phi`]; `Φ ≡ 1 (mod 2)` corresponds to `X₃ = ∞`.
pub fn phi_to_x3(phi: f64) -> Result<f64> {
    let reduced = phi.rem_euclid(2.0);
    let centered = if reduced > 1.0 { reduced - 2.0 } else { reduced };
    if !phi.is_finite() || (centered.abs() - 1.0).abs() < 1e-12 {
        return Err(Error::ParameterDomain {
            name: "phi",
            value: phi,
            reason: "phi = 1 (mod 2) has no finite X3",
        });
    }
    Ok(2.0 * (PI * centered / 2.0).tan())
}
