//! Dimensionless cavity model (ħ = μ = R₀ = 1).
//!
//! The wall sits at `R(t) = 1 + ε sin ωt`. Mapping `y = α(t) r` with
//! `α = 1/(1 + ε sin ωt)` fixes the domain to `y ∈ [0, 1]`; the unperturbed
//! eigenmodes of the `m_d = 0` sector on that domain form the Galerkin basis,
//! orthonormal under the measure `y^{n_d} dy`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bessel;
use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    Cylindrical,
    Spherical,
}

impl Geometry {
    /// Exponent of the wavefunction rescaling, `φ = α^{-ξ} ψ`.
    pub fn xi(self) -> f64 {
        match self {
            Geometry::Cylindrical => 1.0,
            Geometry::Spherical => 1.5,
        }
    }

    /// Coefficient of the first-derivative term of the radial Laplacian.
    pub fn n_d(self) -> u32 {
        match self {
            Geometry::Cylindrical => 1,
            Geometry::Spherical => 2,
        }
    }

    /// Angular term; only the `m_d = 0` sector is modelled.
    pub fn m_d(self) -> u32 {
        0
    }

    /// Mode parameter `κ_k` with `φ_k(1) = 0`; `E_k = κ_k²/2`.
    pub fn root(self, k: usize) -> Result<f64> {
        if k == 0 {
            return Err(Error::Domain("eigenstate index must be >= 1".into()));
        }
        match self {
            Geometry::Cylindrical => bessel::j0_zero(k),
            Geometry::Spherical => Ok(k as f64 * PI),
        }
    }
}

impl std::fmt::Display for Geometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Geometry::Cylindrical => f.write_str("cylindrical"),
            Geometry::Spherical => f.write_str("spherical"),
        }
    }
}

impl std::str::FromStr for Geometry {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cylindrical" => Ok(Geometry::Cylindrical),
            "spherical" => Ok(Geometry::Spherical),
            other => Err(Error::Config(format!("unknown geometry `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityConfig {
    pub geometry: Geometry,
    /// Drive amplitude ε, `0 ≤ ε < 1`.
    pub epsilon: f64,
    /// Drive frequency ω̃.
    pub omega: f64,
    /// Number of basis states M.
    pub basis_size: usize,
}

impl CavityConfig {
    pub const DEFAULT_BASIS_SIZE: usize = 16;

    pub fn new(geometry: Geometry, epsilon: f64, omega: f64) -> Result<Self> {
        let cfg = Self {
            geometry,
            epsilon,
            omega,
            basis_size: Self::DEFAULT_BASIS_SIZE,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_basis_size(mut self, m: usize) -> Result<Self> {
        self.basis_size = m;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!(
                "epsilon must satisfy 0 <= epsilon < 1, got {}",
                self.epsilon
            )));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::Config(format!("omega must be > 0, got {}", self.omega)));
        }
        if self.basis_size < 2 {
            return Err(Error::Config(format!(
                "basis_size must be >= 2, got {}",
                self.basis_size
            )));
        }
        Ok(())
    }

    /// Cavity period τ = 2π/ω.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// α(t) = 1/(1 + ε sin ωt).
    pub fn alpha_at(&self, t: f64) -> f64 {
        1.0 / (1.0 + self.epsilon * (self.omega * t).sin())
    }

    /// Ṙ/R = εω cos ωt / (1 + ε sin ωt).
    pub fn wall_log_derivative(&self, t: f64) -> f64 {
        let (s, c) = (self.omega * t).sin_cos();
        self.epsilon * self.omega * c / (1.0 + self.epsilon * s)
    }
}

/// `E_k` for the k-th (1-based) `m_d = 0` mode.
pub fn eigenenergy(geometry: Geometry, k: usize) -> Result<f64> {
    let r = geometry.root(k)?;
    Ok(0.5 * r * r)
}

/// Normalisation-ready description of one mode.
#[derive(Debug, Clone, Copy)]
struct Mode {
    geometry: Geometry,
    root: f64,
    /// Multiplier making the mode unit-norm and positive near `y = 0`.
    scale: f64,
}

impl Mode {
    fn new(geometry: Geometry, k: usize) -> Result<Self> {
        let root = geometry.root(k)?;
        let scale = match geometry {
            // ∫₀¹ J0(j y)² y dy = J1(j)²/2
            Geometry::Cylindrical => 2f64.sqrt() / bessel::j1(root).abs(),
            // ∫₀¹ sin²(kπy) dy = 1/2
            Geometry::Spherical => 2f64.sqrt(),
        };
        Ok(Self { geometry, root, scale })
    }

    fn value(&self, y: f64) -> f64 {
        match self.geometry {
            Geometry::Cylindrical => self.scale * bessel::j0(self.root * y),
            Geometry::Spherical => {
                let x = self.root * y;
                if x.abs() < 1e-6 {
                    self.scale * self.root * (1.0 - x * x / 6.0)
                } else {
                    self.scale * x.sin() / y
                }
            }
        }
    }

    fn derivative(&self, y: f64) -> f64 {
        match self.geometry {
            Geometry::Cylindrical => -self.scale * self.root * bessel::j1(self.root * y),
            Geometry::Spherical => {
                let x = self.root * y;
                // d/dy [sin(κy)/y] = κ² (x cos x − sin x)/x²
                let shape = if x.abs() < 1e-3 {
                    -x / 3.0 + x.powi(3) / 30.0
                } else {
                    (x * x.cos() - x.sin()) / (x * x)
                };
                self.scale * self.root * self.root * shape
            }
        }
    }
}

/// Normalised static eigenmode `φ_k(y)` on the fixed domain.
pub fn basis_function(geometry: Geometry, k: usize, y: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&y) {
        return Err(Error::Domain(format!("y = {y} outside [0, 1]")));
    }
    if y == 1.0 {
        return Ok(0.0);
    }
    Ok(Mode::new(geometry, k)?.value(y))
}

/// `dφ_k/dy`.
pub fn basis_derivative(geometry: Geometry, k: usize, y: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&y) {
        return Err(Error::Domain(format!("y = {y} outside [0, 1]")));
    }
    Ok(Mode::new(geometry, k)?.derivative(y))
}

/// Dense real M×M matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// max |A_ij + A_ji| over all i, j (diagonal included, as |2A_ii|).
    pub fn antisymmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                worst = worst.max((self.get(i, j) + self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Which integration rule evaluates the overlap integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureRule {
    /// Gauss–Legendre, node count doubled from 256 until convergence.
    GaussLegendre,
    /// Composite Simpson, panel count doubled from 4096 until convergence.
    Simpson,
}

const COUPLING_TOL: f64 = 1e-10;

/// Coupling matrix `η_nk = ⟨φ_n|(y ∂_y + ξ)|φ_k⟩` (0-based indices).
pub fn coupling_matrix(geometry: Geometry, m: usize) -> Result<Matrix> {
    coupling_matrix_with(geometry, m, QuadratureRule::GaussLegendre)
}

pub fn coupling_matrix_with(geometry: Geometry, m: usize, rule: QuadratureRule) -> Result<Matrix> {
    if m < 2 {
        return Err(Error::Domain(format!("basis size must be >= 2, got {m}")));
    }
    let modes: Vec<Mode> = (1..=m).map(|k| Mode::new(geometry, k)).collect::<Result<_>>()?;
    let xi = geometry.xi();
    let nd = geometry.n_d() as i32;

    // Tabulate every mode on the node set once, then form all the products.
    let estimate = |nodes: &[f64], weights: &[f64]| -> Matrix {
        let vals: Vec<Vec<f64>> = modes
            .iter()
            .map(|md| nodes.iter().map(|&y| md.value(y)).collect())
            .collect();
        let ders: Vec<Vec<f64>> = modes
            .iter()
            .map(|md| nodes.iter().map(|&y| md.derivative(y)).collect())
            .collect();
        let measure: Vec<f64> = nodes
            .iter()
            .zip(weights)
            .map(|(&y, &w)| w * y.powi(nd))
            .collect();
        let mut eta = Matrix::zeros(m);
        for a in 0..m {
            for b in 0..m {
                let v: f64 = (0..nodes.len())
                    .map(|i| {
                        let y = nodes[i];
                        measure[i] * vals[a][i] * (y * ders[b][i] + xi * vals[b][i])
                    })
                    .sum();
                eta.set(a, b, v);
            }
        }
        eta
    };

    let rule_nodes = |count: usize| -> (Vec<f64>, Vec<f64>) {
        match rule {
            QuadratureRule::GaussLegendre => {
                let gl = GaussLegendre::new(count);
                let nodes = gl.nodes.iter().map(|x| 0.5 * (x + 1.0)).collect();
                let weights = gl.weights.iter().map(|w| 0.5 * w).collect();
                (nodes, weights)
            }
            QuadratureRule::Simpson => {
                let h = 1.0 / count as f64;
                let nodes = (0..=count).map(|i| i as f64 * h).collect();
                let weights = (0..=count)
                    .map(|i| {
                        let w = if i == 0 || i == count {
                            1.0
                        } else if i % 2 == 1 {
                            4.0
                        } else {
                            2.0
                        };
                        w * h / 3.0
                    })
                    .collect();
                (nodes, weights)
            }
        }
    };

    let (start, max) = match rule {
        QuadratureRule::GaussLegendre => (256, 4096),
        QuadratureRule::Simpson => (4096, 1 << 18),
    };
    let (n0, w0) = rule_nodes(start);
    let mut prev = estimate(&n0, &w0);
    let mut count = start;
    loop {
        count *= 2;
        let (nodes, weights) = rule_nodes(count);
        let next = estimate(&nodes, &weights);
        let diff = prev
            .data
            .iter()
            .zip(&next.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if diff < COUPLING_TOL {
            return Ok(next);
        }
        if count >= max {
            return Err(Error::Quadrature {
                what: format!("{geometry} coupling matrix (M = {m})"),
                nodes: count,
                diff,
            });
        }
        prev = next;
    }
}

/// Static eigenbasis: energies, mode roots and the coupling matrix.
#[derive(Debug, Clone)]
pub struct Basis {
    pub geometry: Geometry,
    pub energies: Vec<f64>,
    pub roots: Vec<f64>,
    pub eta: Matrix,
}

impl Basis {
    pub fn new(geometry: Geometry, m: usize) -> Result<Self> {
        let roots: Vec<f64> = (1..=m).map(|k| geometry.root(k)).collect::<Result<_>>()?;
        let energies = roots.iter().map(|r| 0.5 * r * r).collect();
        let eta = coupling_matrix(geometry, m)?;
        Ok(Self {
            geometry,
            energies,
            roots,
            eta,
        })
    }

    pub fn for_config(cfg: &CavityConfig) -> Result<Self> {
        Self::new(cfg.geometry, cfg.basis_size)
    }

    pub fn size(&self) -> usize {
        self.energies.len()
    }

    /// Energy of level `k` (1-based).
    pub fn energy(&self, k: usize) -> f64 {
        self.energies[k - 1]
    }

    /// `η_nk` with 1-based level labels.
    pub fn eta(&self, n: usize, k: usize) -> f64 {
        self.eta.get(n - 1, k - 1)
    }

    /// Transition frequency `ω_nk = E_n − E_k` (1-based).
    pub fn omega_nk(&self, n: usize, k: usize) -> f64 {
        self.energy(n) - self.energy(k)
    }
}
