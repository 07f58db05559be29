//! Four-channel scattering matrices from boundary/transfer matrices.
//!
//! Plane-wave convention, per spin component `s`, relative to the left edge
//! `x = 0` and the right edge `x = L` of the scatterer:
//!
//! ```text
//! ψ_s(x < 0) = a_{L,s} e^{ikx}     + b_{L,s} e^{-ikx}
//! ψ_s(x > L) = b_{R,s} e^{ik(x-L)} + a_{R,s} e^{-ik(x-L)}
//! ```
//!
//! `a` are incoming and `b` outgoing amplitudes. Channels are ordered
//! `(left↑, left↓, right↑, right↓)` for both rows (outgoing) and columns
//! (incoming), so `S[(out, in)]` is the amplitude from `in` to `out`.
//!
//! The closed-form matrix of a single `M_r` defect is naturally written in the
//! spin-major order `(left↑, right↑, left↓, right↓)`; [`SPIN_MAJOR_ORDER`]
//! is the permutation between the two, found by exhaustive comparison of all
//! row/column permutations against the numerically solved matrix. With it the
//! two agree entrywise including phases.

use std::fmt;

use nalgebra::{Matrix2, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::{current_residual, max_abs, BoundaryMatrix, CurrentComponent, CurrentForm, Mat4};

/// Tolerance on `T† Σx T = Σx`, relative to `max(1, max|T|²)`.
pub const DEFAULT_SIGMA_X_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    LeftUp,
    LeftDown,
    RightUp,
    RightDown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Spin {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::LeftUp, Channel::LeftDown, Channel::RightUp, Channel::RightDown];

    pub fn index(self) -> usize {
        match self {
            Channel::LeftUp => 0,
            Channel::LeftDown => 1,
            Channel::RightUp => 2,
            Channel::RightDown => 3,
        }
    }

    pub fn from_index(index: usize) -> Option<Channel> {
        Channel::ALL.get(index).copied()
    }

    pub fn spin(self) -> Spin {
        match self {
            Channel::LeftUp | Channel::RightUp => Spin::Up,
            Channel::LeftDown | Channel::RightDown => Spin::Down,
        }
    }

    pub fn side(self) -> Side {
        match self {
            Channel::LeftUp | Channel::LeftDown => Side::Left,
            Channel::RightUp | Channel::RightDown => Side::Right,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::LeftUp => "left_up",
            Channel::LeftDown => "left_down",
            Channel::RightUp => "right_up",
            Channel::RightDown => "right_down",
        }
    }

    /// Same side, opposite spin.
    pub fn spin_flipped(self) -> Channel {
        match self {
            Channel::LeftUp => Channel::LeftDown,
            Channel::LeftDown => Channel::LeftUp,
            Channel::RightUp => Channel::RightDown,
            Channel::RightDown => Channel::RightUp,
        }
    }

    /// Same spin, opposite side.
    pub fn mirrored(self) -> Channel {
        match self {
            Channel::LeftUp => Channel::RightUp,
            Channel::LeftDown => Channel::RightDown,
            Channel::RightUp => Channel::LeftUp,
            Channel::RightDown => Channel::LeftDown,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Spin-major channel order `(left↑, right↑, left↓, right↓)`.
///
/// `canonical[(SPIN_MAJOR_ORDER[i], SPIN_MAJOR_ORDER[j])] = spin_major[(i, j)]`.
pub const SPIN_MAJOR_ORDER: [Channel; 4] = [Channel::LeftUp, Channel::RightUp, Channel::LeftDown, Channel::RightDown];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringMatrix {
    entries: Mat4,
    k: f64,
}

impl ScatteringMatrix {
    pub fn new(entries: Mat4, k: f64) -> Self {
        ScatteringMatrix { entries, k }
    }

    pub fn from_spin_major(m: &Mat4, k: f64) -> Self {
        let mut entries = Mat4::zeros();
        for (i, ci) in SPIN_MAJOR_ORDER.iter().enumerate() {
            for (j, cj) in SPIN_MAJOR_ORDER.iter().enumerate() {
                entries[(ci.index(), cj.index())] = m[(i, j)];
            }
        }
        ScatteringMatrix { entries, k }
    }

    pub fn to_spin_major(&self) -> Mat4 {
        Mat4::from_fn(|i, j| self.entries[(SPIN_MAJOR_ORDER[i].index(), SPIN_MAJOR_ORDER[j].index())])
    }

    pub fn entries(&self) -> &Mat4 {
        &self.entries
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn energy(&self) -> f64 {
        self.k * self.k
    }

    /// Amplitude for `incoming → outgoing`.
    pub fn amplitude(&self, outgoing: Channel, incoming: Channel) -> Complex64 {
        self.entries[(outgoing.index(), incoming.index())]
    }

    /// `max |S†S − I|`.
    pub fn unitarity_residual(&self) -> f64 {
        max_abs(&(self.entries.adjoint() * self.entries - Mat4::identity()))
    }

    pub fn apply(&self, incoming: &ChannelAmplitudes) -> ChannelAmplitudes {
        ChannelAmplitudes {
            incoming: incoming.incoming,
            outgoing: self.entries * incoming.incoming,
        }
    }

    /// The matrix with left and right channel blocks exchanged.
    pub fn mirrored(&self) -> ScatteringMatrix {
        let mut entries = Mat4::zeros();
        for &o in &Channel::ALL {
            for &i in &Channel::ALL {
                entries[(o.mirrored().index(), i.mirrored().index())] = self.entries[(o.index(), i.index())];
            }
        }
        ScatteringMatrix { entries, k: self.k }
    }

    /// Total probability of leaving with the opposite spin.
    pub fn spin_flip_probability(&self, incoming: Channel) -> f64 {
        let probs = channel_probabilities(self, incoming);
        Channel::ALL
            .iter()
            .filter(|c| c.spin() != incoming.spin())
            .map(|c| probs[c.index()])
            .sum()
    }
}

/// Incoming amplitudes and the outgoing amplitudes they produce.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelAmplitudes {
    pub incoming: Vector4<Complex64>,
    pub outgoing: Vector4<Complex64>,
}

impl ChannelAmplitudes {
    pub fn incoming(incoming: Vector4<Complex64>) -> Self {
        ChannelAmplitudes {
            incoming,
            outgoing: Vector4::zeros(),
        }
    }

    /// `‖out‖² − ‖in‖²`; zero for a unitary S.
    pub fn flux_imbalance(&self) -> f64 {
        self.outgoing.norm_squared() - self.incoming.norm_squared()
    }
}

/// Free propagation over `length`: `[[cos kL, sin kL / k], [−k sin kL, cos kL]]` per spin.
pub fn propagation(k: f64, length: f64) -> Result<BoundaryMatrix> {
    check_momentum(k)?;
    if !(length >= 0.0 && length.is_finite()) {
        return Err(Error::Length(length));
    }
    let (s, c) = (k * length).sin_cos();
    let re = |x: f64| Complex64::new(x, 0.0);
    Ok(BoundaryMatrix::lift_spinless(Matrix2::new(
        re(c),
        re(s / k),
        re(-k * s),
        re(c),
    )))
}

pub(crate) fn check_momentum(k: f64) -> Result<()> {
    if k > 0.0 && k.is_finite() {
        Ok(())
    } else {
        Err(Error::Momentum(k))
    }
}

/// Solves for the scattering matrix of a transfer matrix at momentum `k`.
///
/// `sigma_x_tol` bounds the probability-current residual of `t`, scaled by
/// `max(1, max|T|²)`.
pub fn transfer_to_scattering(t: &BoundaryMatrix, k: f64, sigma_x_tol: f64) -> Result<ScatteringMatrix> {
    check_momentum(k)?;
    let scale = max_abs(t.matrix()).powi(2).max(1.0);
    let residual = current_residual(t, &CurrentForm::of(CurrentComponent::X));
    if !(residual <= sigma_x_tol * scale) {
        return Err(Error::InvalidTransfer { residual });
    }

    let ik = Complex64::new(0.0, k);
    let one = Complex64::new(1.0, 0.0);
    let half = Complex64::new(0.5, 0.0);
    // W maps (coefficient of e^{ikx}, coefficient of e^{-ikx}) to (ψ, ψ′).
    let w = BoundaryMatrix::lift_spinless(Matrix2::new(one, one, ik, -ik));
    let w_inv = BoundaryMatrix::lift_spinless(Matrix2::new(half, half / ik, half, -half / ik));
    // Left coefficients (a_L↑, b_L↑, a_L↓, b_L↓) → right (b_R↑, a_R↑, b_R↓, a_R↓).
    let a = (w_inv * *t * w).into_matrix();

    // A·x_L − x_R = 0 split into outgoing (q) and incoming (p) columns.
    let mut q = Mat4::zeros();
    let mut p = Mat4::zeros();
    q.set_column(0, &a.column(1));
    q.set_column(1, &a.column(3));
    q[(0, 2)] = -one;
    q[(2, 3)] = -one;
    p.set_column(0, &a.column(0));
    p.set_column(1, &a.column(2));
    p[(1, 2)] = -one;
    p[(3, 3)] = -one;

    let lu = q.lu();
    let pivot_scale = max_abs(&q).max(1.0);
    let min_pivot = (0..4).map(|i| lu.u()[(i, i)].norm()).fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-13 * pivot_scale) {
        return Err(Error::SpectralSingularity { k });
    }
    let s = -lu.solve(&p).ok_or(Error::SpectralSingularity { k })?;
    if s.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::SpectralSingularity { k });
    }
    Ok(ScatteringMatrix { entries: s, k })
}

/// Closed-form S-matrix of a single `M_r` defect in spin-major order.
///
/// `1/(κ²+4) · [[κ², 4, −2iκ, 2iκ], [4, κ², 2iκ, −2iκ], [−2iκ, 2iκ, κ², 4], [2iκ, −2iκ, 4, κ²]]`
/// with `κ = kr`.
pub fn closed_form_s_r_spin_major(k: f64, r: f64) -> Mat4 {
    let kr = k * r;
    let d = kr * kr + 4.0;
    let a = Complex64::new(kr * kr / d, 0.0);
    let b = Complex64::new(4.0 / d, 0.0);
    let f = Complex64::new(0.0, 2.0 * kr / d);
    #[rustfmt::skip]
    let m = Mat4::new(
        a,  b, -f,  f,
        b,  a,  f, -f,
        -f, f,  a,  b,
        f, -f,  b,  a,
    );
    m
}

/// Closed-form S-matrix of `M_r` in the canonical channel order. Expects `k > 0`.
pub fn closed_form_s_r(k: f64, r: f64) -> ScatteringMatrix {
    ScatteringMatrix::from_spin_major(&closed_form_s_r_spin_major(k, r), k)
}

/// `|S[out, incoming]|²` for every outgoing channel.
pub fn channel_probabilities(s: &ScatteringMatrix, incoming: Channel) -> [f64; 4] {
    let col = s.entries.column(incoming.index());
    [
        col[0].norm_sqr(),
        col[1].norm_sqr(),
        col[2].norm_sqr(),
        col[3].norm_sqr(),
    ]
}
