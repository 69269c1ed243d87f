//! Configuration manifolds (flat and conformally flat tori) and Tonelli
//! Lagrangians together with every derivative the solvers consume.

use crate::error::{Error, Result};
use crate::fourier::FourierField;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// The d-torus `R^d / Z^d` with metric `g = e^{2u} I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusManifold {
    dim: usize,
    conformal: FourierField,
}

impl TorusManifold {
    pub fn flat(dim: usize) -> Self {
        Self {
            dim,
            conformal: FourierField::zero(),
        }
    }

    pub fn conformal(dim: usize, u: FourierField) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid(format!("torus dimension must be >= 2, got {dim}")));
        }
        if !u.check_dim(dim) {
            return Err(Error::invalid("conformal factor wave vectors do not match dimension"));
        }
        Ok(Self { dim, conformal: u })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_flat(&self) -> bool {
        self.conformal.terms.iter().all(|t| t.cos == 0.0 && t.sin == 0.0)
    }

    pub fn conformal_field(&self) -> &FourierField {
        &self.conformal
    }

    /// `u(x)` in `g = e^{2u} I`.
    pub fn log_factor(&self, x: &[f64]) -> f64 {
        self.conformal.value(x)
    }

    /// The scalar `e^{2u(x)}` multiplying the identity.
    pub fn metric_factor(&self, x: &[f64]) -> f64 {
        (2.0 * self.conformal.value(x)).exp()
    }

    pub fn metric_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim) * self.metric_factor(x)
    }

    pub fn norm(&self, x: &[f64], v: &[f64]) -> f64 {
        self.metric_factor(x).sqrt() * v.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn inner(&self, x: &[f64], a: &[f64], b: &[f64]) -> f64 {
        self.metric_factor(x) * a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>()
    }

    /// Christoffel symbols `Γ^k_{ij}`, stored at `[k*d*d + i*d + j]`.
    pub fn christoffel(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut du = vec![0.0; d];
        self.conformal.value_grad(x, &mut du);
        let mut gamma = vec![0.0; d * d * d];
        for k in 0..d {
            for i in 0..d {
                for j in 0..d {
                    let mut g = 0.0;
                    if k == i {
                        g += du[j];
                    }
                    if k == j {
                        g += du[i];
                    }
                    if i == j {
                        g -= du[k];
                    }
                    gamma[k * d * d + i * d + j] = g;
                }
            }
        }
        gamma
    }

    /// `Γ(a, b)^k = Γ^k_{ij} a^i b^j`.
    pub fn christoffel_apply(&self, x: &[f64], a: &[f64], b: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut du = vec![0.0; d];
        self.conformal.value_grad(x, &mut du);
        let ab: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
        let du_a: f64 = du.iter().zip(a).map(|(p, q)| p * q).sum();
        let du_b: f64 = du.iter().zip(b).map(|(p, q)| p * q).sum();
        (0..d).map(|k| a[k] * du_b + b[k] * du_a - ab * du[k]).collect()
    }

    /// Curvature endomorphism `R(X,Y)Z` with the convention
    /// `<R(X,Y)Y, X> = K(X,Y) (|X|²|Y|² - <X,Y>²)`.
    pub fn curvature(&self, x: &[f64], a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut du = vec![0.0; d];
        let mut hu = vec![0.0; d * d];
        self.conformal.value_grad_hess(x, &mut du, &mut hu);
        let grad_sq: f64 = du.iter().map(|g| g * g).sum();
        // B = Hess u - du⊗du + ½|du|² I, flat-metric bilinear form
        let bform = |p: &[f64], q: &[f64]| -> f64 {
            let mut acc = 0.0;
            for i in 0..d {
                for j in 0..d {
                    acc += (hu[i * d + j] - du[i] * du[j]) * p[i] * q[j];
                }
            }
            let pq: f64 = p.iter().zip(q).map(|(s, t)| s * t).sum();
            acc + 0.5 * grad_sq * pq
        };
        let dot = |p: &[f64], q: &[f64]| -> f64 { p.iter().zip(q).map(|(s, t)| s * t).sum() };
        // R(X,Y,Z,W) = -e^{2u} (B ∧ δ)(X,Y,Z,W); raising W divides by e^{2u}
        let mut out = vec![0.0; d];
        let mut e = vec![0.0; d];
        for (w, o) in out.iter_mut().enumerate() {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[w] = 1.0;
            let kn = bform(a, &e) * dot(b, c) + bform(b, c) * dot(a, &e)
                - bform(a, c) * dot(b, &e)
                - bform(b, &e) * dot(a, c);
            *o = -kn;
        }
        out
    }

    /// Gaussian curvature (d = 2 only): `-e^{-2u} Δu`.
    pub fn gaussian_curvature(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut du = vec![0.0; d];
        let mut hu = vec![0.0; d * d];
        let u = self.conformal.value_grad_hess(x, &mut du, &mut hu);
        let lap: f64 = (0..d).map(|i| hu[i * d + i]).sum();
        -(-2.0 * u).exp() * lap
    }
}

/// Second-order jet of a Lagrangian at `(x, v)`. Matrices are row-major
/// `d×d`; `lxv[i*d + j] = ∂²L/∂x_i∂v_j`.
#[derive(Debug, Clone)]
pub struct Jet {
    pub value: f64,
    pub lx: Vec<f64>,
    pub lv: Vec<f64>,
    pub lvv: Vec<f64>,
    pub lxv: Vec<f64>,
    pub lxx: Vec<f64>,
}

impl Jet {
    pub fn new(d: usize) -> Self {
        Self {
            value: 0.0,
            lx: vec![0.0; d],
            lv: vec![0.0; d],
            lvv: vec![0.0; d * d],
            lxv: vec![0.0; d * d],
            lxx: vec![0.0; d * d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lx.len()
    }

    pub fn lvv_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.lvv)
    }

    pub fn lxv_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.lxv)
    }

    pub fn lxx_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.lxx)
    }
}

/// A smooth autonomous Lagrangian on the tangent bundle of a torus.
///
/// `eval` fills value, `L_x`, `L_v` and `L_vv` always; `L_xv` and `L_xx`
/// only when `second` is set.
pub trait Lagrangian: Send + Sync {
    fn manifold(&self) -> &TorusManifold;

    fn eval(&self, x: &[f64], v: &[f64], second: bool, jet: &mut Jet);

    fn dim(&self) -> usize {
        self.manifold().dim()
    }

    fn value(&self, x: &[f64], v: &[f64]) -> f64 {
        let mut jet = Jet::new(self.dim());
        self.eval(x, v, false, &mut jet);
        jet.value
    }

    /// Speed beyond which the Lagrangian is purely kinetic.
    fn truncation_radius(&self) -> f64 {
        f64::INFINITY
    }

    /// Coordinate axes along which every field is constant, so translations
    /// along them are exact symmetries of the action.
    fn translation_symmetries(&self) -> Vec<usize> {
        Vec::new()
    }
}

/// `L(x,v) = ½|v|_x² + χ(|v|_x)·(θ_x(v) + ψ(x))` with `χ ≡ 1` below the
/// truncation radius `R` and `χ ≡ 0` above `2R` (quintic smoothstep in
/// between, so `L` is C² and purely Riemannian at infinity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TonelliLagrangian {
    manifold: TorusManifold,
    one_form: Vec<FourierField>,
    potential: FourierField,
    radius: f64,
}

pub const DEFAULT_RADIUS: f64 = 64.0;

impl TonelliLagrangian {
    /// Builds `L = ½|v|_x² + <θ(x), v> + ψ(x)`.
    pub fn new(
        manifold: TorusManifold,
        one_form: Vec<FourierField>,
        potential: FourierField,
        radius: f64,
    ) -> Result<Self> {
        let d = manifold.dim();
        if one_form.len() != d {
            return Err(Error::invalid(format!(
                "one-form has {} components, expected {d}",
                one_form.len()
            )));
        }
        if !one_form.iter().all(|f| f.check_dim(d)) || !potential.check_dim(d) {
            return Err(Error::invalid("wave vector length does not match dimension"));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid(format!("truncation radius must be positive, got {radius}")));
        }
        Ok(Self {
            manifold,
            one_form,
            potential,
            radius,
        })
    }

    /// `½|v|² - V(x)` on the flat torus.
    pub fn mechanical(dim: usize, v: FourierField) -> Result<Self> {
        let mut psi = v;
        psi.constant = -psi.constant;
        for t in &mut psi.terms {
            t.cos = -t.cos;
            t.sin = -t.sin;
        }
        Self::new(
            TorusManifold::conformal(dim, FourierField::zero())?,
            vec![FourierField::zero(); dim],
            psi,
            DEFAULT_RADIUS,
        )
    }

    /// Mechanical system with `V = cos(2π x₁)` on the flat 2-torus.
    pub fn mechanical_cos() -> Self {
        Self::mechanical(2, FourierField::zero().with_term(&[1, 0], 1.0, 0.0))
            .expect("built-in system is valid")
    }

    /// `½|v|²` on the flat d-torus.
    pub fn free(dim: usize) -> Result<Self> {
        Self::new(
            TorusManifold::conformal(dim, FourierField::zero())?,
            vec![FourierField::zero(); dim],
            FourierField::zero(),
            DEFAULT_RADIUS,
        )
    }

    /// Exact magnetic system `½|v|² - <A(x), v>` with `A = (0, ε sin 2πx₁)`.
    pub fn magnetic(epsilon: f64) -> Self {
        let a = vec![
            FourierField::zero(),
            FourierField::zero().with_term(&[1, 0], 0.0, -epsilon),
        ];
        let radius = DEFAULT_RADIUS.max(40.0 * epsilon.abs());
        Self::new(TorusManifold::flat(2), a, FourierField::zero(), radius)
            .expect("built-in system is valid")
    }

    /// `½|v - X(x)|²` with the unit field `X = (sin 2πx₁, cos 2πx₁)`.
    ///
    /// The orbits of `X` form a Reeb foliation of the 2-torus: the circles
    /// `x₁ = 0` (upward) and `x₁ = ½` (downward) are the only closed leaves,
    /// and every other leaf is asymptotic to both.
    pub fn reeb() -> Self {
        let a = vec![
            FourierField::zero().with_term(&[1, 0], 0.0, -1.0),
            FourierField::zero().with_term(&[1, 0], -1.0, 0.0),
        ];
        Self::new(TorusManifold::flat(2), a, FourierField::constant(0.5), DEFAULT_RADIUS)
            .expect("built-in system is valid")
    }

    /// The Reeb field `X(x)`.
    pub fn reeb_field(x: &[f64]) -> [f64; 2] {
        let (s, c) = (TAU * x[0]).sin_cos();
        [s, c]
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn with_radius(mut self, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid(format!("truncation radius must be positive, got {radius}")));
        }
        self.radius = radius;
        Ok(self)
    }

    pub fn one_form(&self) -> &[FourierField] {
        &self.one_form
    }

    pub fn potential(&self) -> &FourierField {
        &self.potential
    }

    /// `ψ(x) = L(x, 0)`.
    pub fn psi(&self, x: &[f64]) -> f64 {
        self.potential.value(x)
    }

    fn blend(&self, r: f64) -> (f64, f64, f64) {
        let width = self.radius;
        if r <= self.radius {
            return (1.0, 0.0, 0.0);
        }
        let t = (r - self.radius) / width;
        if t >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let s = t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
        let ds = 30.0 * t * t * (t - 1.0) * (t - 1.0);
        let dds = 60.0 * t * (2.0 * t - 1.0) * (t - 1.0);
        (1.0 - s, -ds / width, -dds / (width * width))
    }
}

impl Lagrangian for TonelliLagrangian {
    fn manifold(&self) -> &TorusManifold {
        &self.manifold
    }

    fn truncation_radius(&self) -> f64 {
        self.radius
    }

    fn translation_symmetries(&self) -> Vec<usize> {
        (0..self.manifold.dim())
            .filter(|&axis| {
                self.manifold.conformal.independent_of(axis)
                    && self.potential.independent_of(axis)
                    && self.one_form.iter().all(|f| f.independent_of(axis))
            })
            .collect()
    }

    fn eval(&self, x: &[f64], v: &[f64], second: bool, jet: &mut Jet) {
        let d = self.manifold.dim;
        debug_assert_eq!(x.len(), d);
        debug_assert_eq!(v.len(), d);

        let mut du = vec![0.0; d];
        let mut hu = vec![0.0; d * d];
        let u = if second {
            self.manifold.conformal.value_grad_hess(x, &mut du, &mut hu)
        } else {
            self.manifold.conformal.value_grad(x, &mut du)
        };
        let w = (2.0 * u).exp();
        let vsq: f64 = v.iter().map(|a| a * a).sum();
        let s = 0.5 * vsq;

        // one-form coefficients and their derivatives
        let mut a = vec![0.0; d];
        let mut da = vec![0.0; d * d]; // da[i*d + j] = ∂_i A_j
        let mut px = vec![0.0; d]; // Σ_j v_j ∇A_j + ∇ψ
        let mut pxx = vec![0.0; d * d];
        let mut g = vec![0.0; d];
        let mut h = vec![0.0; d * d];
        for j in 0..d {
            a[j] = if second {
                self.one_form[j].value_grad_hess(x, &mut g, &mut h)
            } else {
                self.one_form[j].value_grad(x, &mut g)
            };
            for i in 0..d {
                da[i * d + j] = g[i];
                px[i] += v[j] * g[i];
            }
            if second {
                for k in 0..d * d {
                    pxx[k] += v[j] * h[k];
                }
            }
        }
        let psi = if second {
            self.potential.value_grad_hess(x, &mut g, &mut h)
        } else {
            self.potential.value_grad(x, &mut g)
        };
        for i in 0..d {
            px[i] += g[i];
        }
        if second {
            for k in 0..d * d {
                pxx[k] += h[k];
            }
        }
        let p = a.iter().zip(v).map(|(ai, vi)| ai * vi).sum::<f64>() + psi;

        // kinetic part ½ e^{2u}|v|²
        jet.value = w * s;
        for i in 0..d {
            jet.lv[i] = w * v[i];
            jet.lx[i] = s * 2.0 * w * du[i];
            for j in 0..d {
                jet.lvv[i * d + j] = if i == j { w } else { 0.0 };
            }
        }
        if second {
            for i in 0..d {
                for j in 0..d {
                    jet.lxv[i * d + j] = 2.0 * w * du[i] * v[j];
                    jet.lxx[i * d + j] = s * w * (4.0 * du[i] * du[j] + 2.0 * hu[i * d + j]);
                }
            }
        }

        let speed = w.sqrt() * vsq.sqrt();
        let (chi, dchi, ddchi) = self.blend(speed);
        if chi == 0.0 && dchi == 0.0 {
            return;
        }

        jet.value += chi * p;
        for i in 0..d {
            jet.lv[i] += chi * a[i];
            jet.lx[i] += chi * px[i];
        }
        if second {
            for k in 0..d * d {
                jet.lxv[k] += chi * da[k];
                jet.lxx[k] += chi * pxx[k];
            }
        }
        if dchi == 0.0 && ddchi == 0.0 {
            return;
        }

        // blend corrections, only reached for R < |v|_x < 2R
        let eu = w.sqrt();
        let vn = vsq.sqrt();
        let rv: Vec<f64> = v.iter().map(|vi| eu * vi / vn).collect();
        let rx: Vec<f64> = du.iter().map(|di| speed * di).collect();
        for i in 0..d {
            jet.lv[i] += dchi * rv[i] * p;
            jet.lx[i] += dchi * rx[i] * p;
            for j in 0..d {
                let rvv = eu * ((if i == j { 1.0 } else { 0.0 }) / vn - v[i] * v[j] / (vn * vn * vn));
                jet.lvv[i * d + j] +=
                    ddchi * p * rv[i] * rv[j] + dchi * p * rvv + dchi * (rv[i] * a[j] + a[i] * rv[j]);
            }
        }
        if second {
            for i in 0..d {
                for j in 0..d {
                    let rxv = du[i] * rv[j];
                    jet.lxv[i * d + j] += ddchi * p * rx[i] * rv[j]
                        + dchi * p * rxv
                        + dchi * px[i] * rv[j]
                        + dchi * rx[i] * a[j];
                    let rxx = speed * (du[i] * du[j] + hu[i * d + j]);
                    jet.lxx[i * d + j] += ddchi * p * rx[i] * rx[j]
                        + dchi * p * rxx
                        + dchi * (rx[i] * px[j] + px[i] * rx[j]);
                }
            }
        }
    }
}

/// Owned result of [`eval_lagrangian`].
#[derive(Debug, Clone)]
pub struct LagrangianValue {
    pub value: f64,
    pub lx: Vec<f64>,
    pub lv: Vec<f64>,
    pub lvv: DMatrix<f64>,
}

fn check_point(d: usize, x: &[f64], v: &[f64]) -> Result<()> {
    if x.len() != d || v.len() != d {
        return Err(Error::invalid(format!(
            "expected {d}-dimensional point and vector, got {} and {}",
            x.len(),
            v.len()
        )));
    }
    if !x.iter().chain(v).all(|c| c.is_finite()) {
        return Err(Error::invalid("non-finite coordinates"));
    }
    Ok(())
}

pub fn eval_lagrangian<L: Lagrangian + ?Sized>(l: &L, x: &[f64], v: &[f64]) -> Result<LagrangianValue> {
    check_point(l.dim(), x, v)?;
    let mut jet = Jet::new(l.dim());
    l.eval(x, v, false, &mut jet);
    Ok(LagrangianValue {
        value: jet.value,
        lvv: jet.lvv_matrix(),
        lx: jet.lx,
        lv: jet.lv,
    })
}

/// `E(x,v) = v·L_v - L`.
pub fn energy<L: Lagrangian + ?Sized>(l: &L, x: &[f64], v: &[f64]) -> Result<f64> {
    check_point(l.dim(), x, v)?;
    Ok(energy_unchecked(l, x, v))
}

pub(crate) fn energy_unchecked<L: Lagrangian + ?Sized>(l: &L, x: &[f64], v: &[f64]) -> f64 {
    let mut jet = Jet::new(l.dim());
    l.eval(x, v, false, &mut jet);
    energy_from_jet(&jet, v)
}

pub(crate) fn energy_from_jet(jet: &Jet, v: &[f64]) -> f64 {
    jet.lv.iter().zip(v).map(|(p, q)| p * q).sum::<f64>() - jet.value
}

/// Legendre transform `p = L_v(x, v)`.
pub fn legendre<L: Lagrangian + ?Sized>(l: &L, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_point(l.dim(), x, v)?;
    let mut jet = Jet::new(l.dim());
    l.eval(x, v, false, &mut jet);
    Ok(jet.lv)
}

/// Inverse Legendre transform by damped Newton on `L_v(x, ·) = p`.
pub fn inverse_legendre<L: Lagrangian + ?Sized>(l: &L, x: &[f64], p: &[f64]) -> Result<Vec<f64>> {
    let d = l.dim();
    check_point(d, x, p)?;
    let mut jet = Jet::new(d);
    let zero = vec![0.0; d];
    l.eval(x, &zero, false, &mut jet);
    let w = l.manifold().metric_factor(x);
    let mut v: Vec<f64> = p.iter().zip(&jet.lv).map(|(pi, ai)| (pi - ai) / w).collect();
    let scale = 1.0 + p.iter().map(|c| c.abs()).fold(0.0, f64::max);
    let residual = |jet: &Jet| -> Vec<f64> { jet.lv.iter().zip(p).map(|(a, b)| a - b).collect() };
    let norm = |r: &[f64]| r.iter().map(|c| c * c).sum::<f64>().sqrt();
    l.eval(x, &v, false, &mut jet);
    let mut r = residual(&jet);
    for _ in 0..100 {
        let rn = norm(&r);
        if rn <= 1e-15 * scale {
            return Ok(v);
        }
        let step = jet
            .lvv_matrix()
            .lu()
            .solve(&DVector::from_column_slice(&r))
            .ok_or_else(|| Error::numeric("singular L_vv in inverse Legendre transform"))?;
        let mut damping = 1.0;
        loop {
            let trial: Vec<f64> = v.iter().zip(step.iter()).map(|(a, b)| a - damping * b).collect();
            l.eval(x, &trial, false, &mut jet);
            let rt = residual(&jet);
            if norm(&rt) < rn || damping < 1e-8 {
                v = trial;
                r = rt;
                break;
            }
            damping *= 0.5;
        }
        if norm(&r) <= 1e-15 * scale {
            return Ok(v);
        }
    }
    if norm(&r) <= 1e-11 * scale {
        Ok(v)
    } else {
        Err(Error::numeric("inverse Legendre Newton did not converge"))
    }
}

/// Convexity and growth constants of a Lagrangian, estimated by sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexityConstants {
    /// inf of `wᵀ L_vv w / |w|_x²`
    pub a0: f64,
    /// sup of `wᵀ L_vv w / |w|_x²`
    pub big_a0: f64,
    /// sup `|dψ|_x`
    pub b1: f64,
    /// sup `|L_x| / (1 + |v|_x²)`
    pub b2: f64,
    /// sup `|L_xv| / (1 + |v|_x)`
    pub b3: f64,
}

fn sym_eigen_extrema(m: &[f64], d: usize) -> (f64, f64) {
    let mat = DMatrix::from_fn(d, d, |i, j| 0.5 * (m[i * d + j] + m[j * d + i]));
    let eig = mat.symmetric_eigenvalues();
    (eig.min(), eig.max())
}

fn op_norm(m: &[f64], d: usize) -> f64 {
    DMatrix::from_row_slice(d, d, m).singular_values().max()
}

/// Deterministic sample of directions on the unit sphere in `R^d`.
fn directions(d: usize, count: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count + 2 * d);
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        out.push(e.clone());
        e[i] = -1.0;
        out.push(e);
    }
    // golden-ratio spiral on the first two coordinates, Halton in the rest
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    for n in 0..count {
        let mut v = vec![0.0; d];
        let angle = TAU * ((n as f64 + 0.5) / phi).fract();
        v[0] = angle.cos();
        v[1] = angle.sin();
        for (k, c) in v.iter_mut().enumerate().skip(2) {
            let base = [2.0, 3.0, 5.0, 7.0, 11.0][k % 5];
            let mut f = 1.0;
            let mut r = 0.0;
            let mut i = n + 1;
            while i > 0 {
                f /= base;
                r += f * (i % base as usize) as f64;
                i /= base as usize;
            }
            *c = 2.0 * r - 1.0;
        }
        let nrm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        out.push(v.into_iter().map(|a| a / nrm).collect());
    }
    out
}

/// Estimates [`ConvexityConstants`] over a grid of base points and
/// velocities `|v|_x <= R` (the unmodified region). Velocities in the
/// blend shell `(R, 2R)` are also probed and must stay strictly convex.
pub fn convexity_constants<L: Lagrangian + ?Sized>(l: &L, sample_budget: usize) -> Result<ConvexityConstants> {
    if sample_budget < 1000 {
        return Err(Error::invalid(format!("sample budget must be >= 1000, got {sample_budget}")));
    }
    let d = l.dim();
    let manifold = l.manifold();
    let radius = l.truncation_radius();
    let core = if radius.is_finite() { radius } else { 4.0 };

    let shells = [0.0, 0.05, 0.25, 0.5, 1.0, 2.0];
    let n_dir = 8usize;
    let dirs = directions(d, n_dir);
    let per_point = 1 + (shells.len() - 1) * dirs.len() + 4;
    let target_points = (sample_budget / per_point).max(16);
    let mut side = ((target_points as f64).powf(1.0 / d as f64)).ceil() as usize;
    side = side.div_ceil(4) * 4;

    let mut consts = ConvexityConstants {
        a0: f64::INFINITY,
        big_a0: 0.0,
        b1: 0.0,
        b2: 0.0,
        b3: 0.0,
    };
    let mut jet = Jet::new(d);
    let mut idx = vec![0usize; d];
    let total = side.pow(d as u32);
    let zero = vec![0.0; d];
    let mut speeds: Vec<f64> = shells.iter().map(|s| s * core).collect();
    for s in [0.1f64, 0.5, 1.0, 2.0] {
        speeds.push(core * (1.0 + s.min(1.0) * 0.999));
    }
    for flat in 0..total {
        let mut rem = flat;
        for c in idx.iter_mut() {
            *c = rem % side;
            rem /= side;
        }
        let x: Vec<f64> = idx.iter().map(|&i| i as f64 / side as f64).collect();
        let factor = manifold.metric_factor(&x);
        let eu = factor.sqrt();

        l.eval(&x, &zero, true, &mut jet);
        let dpsi = jet.lx.iter().map(|c| c * c).sum::<f64>().sqrt() / eu;
        consts.b1 = consts.b1.max(dpsi);

        for (si, &speed) in speeds.iter().enumerate() {
            let blend_shell = si >= shells.len();
            let dir_list: &[Vec<f64>] = if speed == 0.0 { &dirs[..1] } else { &dirs };
            for dir in dir_list {
                let v: Vec<f64> = dir.iter().map(|c| c * speed / eu).collect();
                l.eval(&x, &v, true, &mut jet);
                let (lo, hi) = sym_eigen_extrema(&jet.lvv, d);
                let (lo, hi) = (lo / factor, hi / factor);
                if lo <= 0.0 || !lo.is_finite() {
                    return Err(Error::ConvexityViolation {
                        eigenvalue: lo,
                        x: x.clone(),
                        v,
                    });
                }
                if blend_shell {
                    continue;
                }
                consts.a0 = consts.a0.min(lo);
                consts.big_a0 = consts.big_a0.max(hi);
                let lxn = jet.lx.iter().map(|c| c * c).sum::<f64>().sqrt() / eu;
                consts.b2 = consts.b2.max(lxn / (1.0 + speed * speed));
                consts.b3 = consts.b3.max(op_norm(&jet.lxv, d) / factor / (1.0 + speed));
            }
        }
    }
    if !(consts.a0 > 0.0) {
        return Err(Error::ConvexityViolation {
            eigenvalue: consts.a0,
            x: vec![],
            v: vec![],
        });
    }
    Ok(consts)
}

/// Field tables as they appear in configuration files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub kind: String,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub radius: Option<f64>,
    /// potential `V` (custom and mechanical kinds), `L ⊃ -V`
    #[serde(default)]
    pub potential: Option<FourierField>,
    /// magnetic potential `A`, `L ⊃ -<A, v>`
    #[serde(default)]
    pub vector_potential: Option<Vec<FourierField>>,
    /// conformal factor `u`, metric `e^{2u} I`
    #[serde(default)]
    pub conformal: Option<FourierField>,
}

fn negate(f: &FourierField) -> FourierField {
    let mut g = f.clone();
    g.constant = -g.constant;
    for t in &mut g.terms {
        t.cos = -t.cos;
        t.sin = -t.sin;
    }
    g
}

impl SystemSpec {
    pub fn build(&self) -> Result<TonelliLagrangian> {
        let cfg = |field: &str, message: String| Error::Config {
            field: format!("system.{field}"),
            message,
        };
        let mut l = match self.kind.as_str() {
            "mechanical" => {
                let dim = self.dim.unwrap_or(2);
                let v = self
                    .potential
                    .clone()
                    .unwrap_or_else(|| FourierField::zero().with_term(&[1, 0], 1.0, 0.0));
                if !v.check_dim(dim) {
                    return Err(cfg("potential", format!("wave vectors must have length {dim}")));
                }
                TonelliLagrangian::mechanical(dim, v).map_err(|e| cfg("dim", e.to_string()))?
            }
            "magnetic" => TonelliLagrangian::magnetic(self.epsilon.unwrap_or(2.0)),
            "reeb" => TonelliLagrangian::reeb(),
            "free" => {
                TonelliLagrangian::free(self.dim.unwrap_or(2)).map_err(|e| cfg("dim", e.to_string()))?
            }
            "custom-fourier" => {
                let dim = self
                    .dim
                    .ok_or_else(|| cfg("dim", "required for custom-fourier systems".into()))?;
                let u = self.conformal.clone().unwrap_or_default();
                let manifold = TorusManifold::conformal(dim, u).map_err(|e| cfg("conformal", e.to_string()))?;
                let a = match &self.vector_potential {
                    Some(a) => a.iter().map(negate).collect(),
                    None => vec![FourierField::zero(); dim],
                };
                let psi = self.potential.as_ref().map(negate).unwrap_or_default();
                TonelliLagrangian::new(manifold, a, psi, DEFAULT_RADIUS)
                    .map_err(|e| cfg("vector_potential", e.to_string()))?
            }
            other => {
                return Err(cfg(
                    "kind",
                    format!("unknown system kind `{other}` (expected mechanical, magnetic, reeb, free or custom-fourier)"),
                ))
            }
        };
        if let Some(r) = self.radius {
            l = l.with_radius(r).map_err(|e| cfg("radius", e.to_string()))?;
        }
        Ok(l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn systems() -> Vec<TonelliLagrangian> {
        let conformal = TonelliLagrangian::new(
            TorusManifold::conformal(2, FourierField::zero().with_term(&[1, 1], 0.1, 0.05)).unwrap(),
            vec![
                FourierField::zero().with_term(&[0, 1], 0.3, 0.0),
                FourierField::zero().with_term(&[1, 0], 0.0, -0.7),
            ],
            FourierField::constant(0.2).with_term(&[1, 0], 0.4, 0.1),
            3.0,
        )
        .unwrap();
        vec![
            TonelliLagrangian::mechanical_cos(),
            TonelliLagrangian::magnetic(2.0),
            TonelliLagrangian::reeb(),
            conformal,
        ]
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn mechanical_value_at_rest() {
        let l = TonelliLagrangian::mechanical_cos();
        let r = eval_lagrangian(&l, &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(r.value, -1.0);
        assert!(r.lv.iter().all(|c| *c == 0.0));
    }

    #[test]
    fn magnetic_hessian_is_identity() {
        let l = TonelliLagrangian::magnetic(2.0);
        let r = eval_lagrangian(&l, &[0.3, 0.9], &[1.5, -2.0]).unwrap();
        assert_eq!(r.lvv, DMatrix::identity(2, 2));
    }

    #[test]
    fn derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-5;
        for l in systems() {
            let d = l.dim();
            for _ in 0..50 {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..2.0)).collect();
                // include the blend shell for the small-radius system
                let scale = if l.radius() < 10.0 { 7.0 } else { 3.0 };
                let v: Vec<f64> = (0..d).map(|_| rng.random_range(-scale..scale)).collect();
                let mut jet = Jet::new(d);
                l.eval(&x, &v, true, &mut jet);
                let mut jp = Jet::new(d);
                let mut jm = Jet::new(d);
                for i in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    l.eval(&xp, &v, true, &mut jp);
                    l.eval(&xm, &v, true, &mut jm);
                    let fd = (jp.value - jm.value) / (2.0 * h);
                    assert!(rel(fd, jet.lx[i]) < 1e-6, "L_x {fd} vs {}", jet.lx[i]);
                    for j in 0..d {
                        let fd = (jp.lv[j] - jm.lv[j]) / (2.0 * h);
                        assert!(rel(fd, jet.lxv[i * d + j]) < 1e-6, "L_xv");
                        let fd = (jp.lx[j] - jm.lx[j]) / (2.0 * h);
                        assert!(rel(fd, jet.lxx[i * d + j]) < 1e-6, "L_xx");
                    }
                    let mut vp = v.clone();
                    let mut vm = v.clone();
                    vp[i] += h;
                    vm[i] -= h;
                    l.eval(&x, &vp, true, &mut jp);
                    l.eval(&x, &vm, true, &mut jm);
                    let fd = (jp.value - jm.value) / (2.0 * h);
                    assert!(rel(fd, jet.lv[i]) < 1e-6, "L_v");
                    for j in 0..d {
                        let fd = (jp.lv[j] - jm.lv[j]) / (2.0 * h);
                        assert!(rel(fd, jet.lvv[i * d + j]) < 1e-6, "L_vv");
                    }
                }
            }
        }
    }

    #[test]
    fn riemannian_above_twice_the_radius() {
        let l = TonelliLagrangian::magnetic(2.0);
        let v = [0.0, 2.5 * l.radius()];
        let x = [0.2, 0.4];
        assert!((l.value(&x, &v) - 0.5 * v[1] * v[1]).abs() < 1e-9);
    }

    #[test]
    fn energy_examples() {
        let m = TonelliLagrangian::magnetic(2.0);
        assert!((energy(&m, &[0.13, 0.4], &[3.0, 4.0]).unwrap() - 12.5).abs() < 1e-12);
        let mech = TonelliLagrangian::mechanical_cos();
        assert_eq!(energy(&mech, &[0.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
        for l in systems() {
            let x = [0.31, 0.72];
            let e = energy(&l, &x, &[0.0, 0.0]).unwrap();
            assert!((e + l.psi(&x)).abs() < 1e-14);
        }
    }

    #[test]
    fn legendre_examples_and_round_trip() {
        let m = TonelliLagrangian::magnetic(2.0);
        let x = [0.1, 0.2];
        let p = legendre(&m, &x, &[1.0, -1.0]).unwrap();
        let a2 = 2.0 * (TAU * 0.1).sin();
        assert!((p[0] - 1.0).abs() < 1e-14 && (p[1] - (-1.0 - a2)).abs() < 1e-14);
        let free = TonelliLagrangian::free(2).unwrap();
        assert_eq!(legendre(&free, &x, &[0.4, 0.5]).unwrap(), vec![0.4, 0.5]);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for l in systems() {
            for _ in 0..100 {
                let x: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..1.0)).collect();
                // the R=3 test system is only convex slightly past its radius
                let v: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
                let p = legendre(&l, &x, &v).unwrap();
                let back = inverse_legendre(&l, &x, &p).unwrap();
                let err = back.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err <= 1e-10, "round trip error {err}");
            }
        }
    }

    #[test]
    fn invalid_inputs_rejected() {
        let l = TonelliLagrangian::mechanical_cos();
        assert!(matches!(
            eval_lagrangian(&l, &[f64::NAN, 0.0], &[0.0, 0.0]),
            Err(Error::InvalidInput(_))
        ));
        assert!(energy(&l, &[0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn convexity_constants_examples() {
        let m = TonelliLagrangian::magnetic(2.0);
        let c = convexity_constants(&m, 2000).unwrap();
        assert!((c.a0 - 1.0).abs() < 1e-12);
        assert!((c.big_a0 - 1.0).abs() < 1e-12);

        let mech = TonelliLagrangian::mechanical_cos();
        let c = convexity_constants(&mech, 2000).unwrap();
        assert!((c.b1 - TAU).abs() < 1e-9, "b1 = {}", c.b1);
        assert!(c.a0 <= c.big_a0);
    }

    struct Quartic(TorusManifold);

    impl Lagrangian for Quartic {
        fn manifold(&self) -> &TorusManifold {
            &self.0
        }
        fn eval(&self, _x: &[f64], v: &[f64], _second: bool, jet: &mut Jet) {
            let d = v.len();
            let s: f64 = v.iter().map(|a| a * a).sum();
            jet.value = s * s;
            for i in 0..d {
                jet.lx[i] = 0.0;
                jet.lv[i] = 4.0 * s * v[i];
                for j in 0..d {
                    jet.lvv[i * d + j] = 8.0 * v[i] * v[j] + if i == j { 4.0 * s } else { 0.0 };
                    jet.lxv[i * d + j] = 0.0;
                    jet.lxx[i * d + j] = 0.0;
                }
            }
        }
    }

    #[test]
    fn degenerate_quartic_rejected() {
        let q = Quartic(TorusManifold::flat(2));
        match convexity_constants(&q, 1000) {
            Err(Error::ConvexityViolation { v, .. }) => assert!(v.iter().all(|c| *c == 0.0)),
            other => panic!("expected convexity violation, got {other:?}"),
        }
    }

    #[test]
    fn christoffel_vanish_on_flat_torus() {
        let t = TorusManifold::flat(3);
        assert!(t.christoffel(&[0.1, 0.2, 0.3]).iter().all(|g| *g == 0.0));
    }

    #[test]
    fn curvature_matches_gaussian_curvature_in_two_dimensions() {
        let t = TorusManifold::conformal(2, FourierField::zero().with_term(&[1, 2], 0.2, 0.1)).unwrap();
        let x = [0.17, 0.61];
        let e1 = [1.0, 0.0];
        let e2 = [0.0, 1.0];
        let r = t.curvature(&x, &e1, &e2, &e2);
        let sectional = t.inner(&x, &r, &e1) / (t.metric_factor(&x) * t.metric_factor(&x));
        assert!((sectional - t.gaussian_curvature(&x)).abs() < 1e-12);
    }

    #[test]
    fn periodic_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for l in systems() {
            for _ in 0..20 {
                let x: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..1.0)).collect();
                let v: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
                let shifted: Vec<f64> = x.iter().zip([3.0, -5.0]).map(|(a, b)| a + b).collect();
                assert!((l.value(&x, &v) - l.value(&shifted, &v)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spec_parsing() {
        let spec: SystemSpec = toml::from_str("kind = \"magnetic\"\nepsilon = 1.5\n").unwrap();
        let l = spec.build().unwrap();
        assert_eq!(l.translation_symmetries(), vec![1]);
        let bad: SystemSpec = toml::from_str("kind = \"banana\"\n").unwrap();
        match bad.build() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "system.kind"),
            other => panic!("{other:?}"),
        }
        let custom: SystemSpec = toml::from_str(
            r#"
kind = "custom-fourier"
dim = 2
[potential]
terms = [{ wave = [1, 0], cos = 1.0 }]
"#,
        )
        .unwrap();
        let c = custom.build().unwrap();
        let m = TonelliLagrangian::mechanical_cos();
        assert!((c.value(&[0.3, 0.1], &[0.2, 0.5]) - m.value(&[0.3, 0.1], &[0.2, 0.5])).abs() < 1e-15);
    }
}
