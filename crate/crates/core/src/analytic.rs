//! Self-similar shear solutions `m(t) φ(a(t) (v - b(t) x)²)` of the `γ = 2`
//! equation (and the `γ > 2` amplitude law), their characteristics, and the
//! Burgers blow-up time of the homogeneous `γ = 1` problem.

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::scalar::{count, lit, Scalar};

/// Parameters of a self-similar solution. `beta = γ - 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfSimilarParams<T> {
    pub rho0: T,
    pub m0: T,
    pub b0: T,
    pub lambda: T,
    pub beta: T,
}

impl<T: Scalar> SelfSimilarParams<T> {
    pub fn new(rho0: T, m0: T, b0: T, lambda: T, beta: T) -> Result<Self> {
        if !(rho0 > T::zero() && m0 > T::zero()) {
            return Err(Error::InvalidParameter("rho0 and m0 must be positive".into()));
        }
        if !(b0 < T::zero()) {
            return Err(Error::InvalidParameter(format!("b0 must be negative, got {b0}")));
        }
        if !(lambda >= T::zero() && beta >= T::zero()) {
            return Err(Error::InvalidParameter("lambda and beta must be >= 0".into()));
        }
        Ok(Self { rho0, m0, b0, lambda, beta })
    }

    /// Blow-up time `T = -1/b0`.
    pub fn blowup_time(&self) -> T {
        -T::one() / self.b0
    }

    /// `λ ρ0 T`, compared against 2 by [`classify_threshold`].
    pub fn threshold_number(&self) -> T {
        self.lambda * self.rho0 * self.blowup_time()
    }

    fn check_time(&self, t: T) -> Result<()> {
        let big_t = self.blowup_time();
        if !(t >= T::zero()) || t >= big_t {
            return Err(Error::PastBlowup {
                t: to_f64(t),
                blowup: to_f64(big_t),
            });
        }
        Ok(())
    }
}

fn to_f64<T: Scalar>(x: T) -> f64 {
    crate::scalar::to_f64(x)
}

/// State of the self-similar solution at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfSimilarState<T> {
    pub rho: T,
    pub m: T,
    pub b: T,
    /// `1/√a = ρ/m`, the velocity width.
    pub inv_sqrt_a: T,
}

/// Closed-form solution of the `γ = 2` system at time `t < T`.
pub fn closed_form<T: Scalar>(p: &SelfSimilarParams<T>, t: T) -> Result<SelfSimilarState<T>> {
    if p.beta != T::zero() {
        return Err(Error::InvalidParameter("closed form needs beta = 0".into()));
    }
    p.check_time(t)?;
    let big_t = p.blowup_time();
    let ratio = big_t / (big_t - t);
    let rho = p.rho0 * ratio;
    let m = p.m0 * ratio.powf(p.lambda * p.rho0 * big_t / lit(2.0));
    Ok(SelfSimilarState {
        rho,
        m,
        b: -T::one() / (big_t - t),
        inv_sqrt_a: rho / m,
    })
}

/// Amplitude of the `γ > 2` system in closed form,
/// `m^β = m0^β + (λ/2)(ρ0 T)^{1+β} ((T-t)^{-β} - T^{-β})`.
pub fn amplitude_gamma_gt2<T: Scalar>(p: &SelfSimilarParams<T>, t: T) -> Result<T> {
    if !(p.beta > T::zero()) {
        return Err(Error::InvalidParameter("needs beta > 0".into()));
    }
    p.check_time(t)?;
    let big_t = p.blowup_time();
    let half = lit::<T>(0.5);
    let mb = p.m0.powf(p.beta)
        + half * p.lambda * (p.rho0 * big_t).powf(T::one() + p.beta)
            * ((big_t - t).powf(-p.beta) - big_t.powf(-p.beta));
    Ok(mb.powf(T::one() / p.beta))
}

fn ode_rhs<T: Scalar>(p: &SelfSimilarParams<T>, y: [T; 3]) -> [T; 3] {
    let [rho, m, b] = y;
    let half = lit::<T>(0.5);
    let dm = if p.beta == T::zero() {
        half * p.lambda * rho * m
    } else {
        half * p.lambda * rho.powf(T::one() + p.beta) * m.powf(T::one() - p.beta)
    };
    [-b * rho, dm, -b * b]
}

fn rk4_step<T: Scalar, const N: usize>(y: [T; N], h: T, rhs: impl Fn([T; N]) -> [T; N]) -> [T; N] {
    let two = lit::<T>(2.0);
    let axpy = |y: [T; N], k: [T; N], s: T| -> [T; N] { std::array::from_fn(|i| y[i] + s * k[i]) };
    let k1 = rhs(y);
    let k2 = rhs(axpy(y, k1, h / two));
    let k3 = rhs(axpy(y, k2, h / two));
    let k4 = rhs(axpy(y, k3, h));
    std::array::from_fn(|i| y[i] + h / lit(6.0) * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
}

fn steps<T: Scalar>(t_end: T, dt: T) -> Result<usize> {
    if !(dt > T::zero()) || !(t_end >= T::zero()) {
        return Err(Error::InvalidParameter("need dt > 0 and t_end >= 0".into()));
    }
    (t_end / dt)
        .ceil()
        .to_usize()
        .ok_or_else(|| Error::InvalidParameter("step count overflow".into()))
}

/// Classical RK4 integration of `ρ' = -bρ`, `m' = (λ/2) ρ^{1+β} m^{1-β}`,
/// `b' = -b²` up to `t_end < T`.
pub fn integrate_ode<T: Scalar>(p: &SelfSimilarParams<T>, t_end: T, dt: T) -> Result<(T, T, T)> {
    p.check_time(t_end)?;
    let n = steps(t_end, dt)?;
    let h = if n == 0 { T::zero() } else { t_end / count(n) };
    let mut y = [p.rho0, p.m0, p.b0];
    for _ in 0..n {
        y = rk4_step(y, h, |y| ode_rhs(p, y));
    }
    Ok((y[0], y[1], y[2]))
}

/// Threshold classification of `λ ρ0 T` against 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criticality {
    Supercritical,
    Critical,
    Subcritical,
}

pub fn classify_threshold<T: Scalar>(lambda: T, rho0: T, big_t: T) -> Criticality {
    let k = lambda * rho0 * big_t;
    let two = lit::<T>(2.0);
    if (k - two).abs() <= lit(1e-12) {
        Criticality::Critical
    } else if k > two {
        Criticality::Supercritical
    } else {
        Criticality::Subcritical
    }
}

/// Conserved characteristic label `α = (m0/ρ0)(v + x/T)` of the point `(x, v)` at `t = 0`.
pub fn characteristic_label<T: Scalar>(p: &SelfSimilarParams<T>, x: T, v: T) -> T {
    p.m0 / p.rho0 * (v + x / p.blowup_time())
}

/// Position at time `t` of the `γ = 2` characteristic starting at `(x, v)`.
pub fn characteristic_gamma2<T: Scalar>(p: &SelfSimilarParams<T>, x: T, v: T, t: T) -> Result<T> {
    if p.beta != T::zero() {
        return Err(Error::InvalidParameter("characteristic needs beta = 0".into()));
    }
    if classify_threshold(p.lambda, p.rho0, p.blowup_time()) == Criticality::Critical {
        return Err(Error::Critical("λρ0T = 2 has no closed-form characteristic".into()));
    }
    p.check_time(t)?;
    let big_t = p.blowup_time();
    let e = T::one() - p.threshold_number() / lit(2.0);
    let alpha = characteristic_label(p, x, v);
    let growth = ((big_t / (big_t - t)).powf(e) - T::one()) / e;
    Ok((big_t - t) * (x / big_t + alpha * p.rho0 / p.m0 * growth))
}

/// Direct RK4 integration of `Ẋ = V`, `V̇ = (λ/2) ρ (bX - V)` together with
/// the `(ρ, m, b)` system. Returns `(X, V, ρ, m, b)` at `t_end`.
pub fn integrate_characteristic<T: Scalar>(
    p: &SelfSimilarParams<T>,
    x: T,
    v: T,
    t_end: T,
    dt: T,
) -> Result<[T; 5]> {
    p.check_time(t_end)?;
    let n = steps(t_end, dt)?;
    let h = if n == 0 { T::zero() } else { t_end / count(n) };
    let half = lit::<T>(0.5);
    let mut y = [x, v, p.rho0, p.m0, p.b0];
    for _ in 0..n {
        y = rk4_step(y, h, |[xx, vv, rho, m, b]| {
            let [drho, dm, db] = ode_rhs(p, [rho, m, b]);
            [vv, half * p.lambda * rho * (b * xx - vv), drho, dm, db]
        });
    }
    Ok(y)
}

/// `γ > 2` characteristic `X(t) = ((T-t)/T)(X0 + α C T ln(T/(T-t)))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicGt2<T> {
    pub position: T,
    /// Earliest `t* < T` with `X(t*) = 0`, when `X0 < 0 < α`.
    pub crossing_time: Option<T>,
}

pub fn characteristic_gamma_gt2<T: Scalar>(x0: T, alpha: T, c: T, big_t: T, t: T) -> Result<CharacteristicGt2<T>> {
    if !(big_t > T::zero() && c > T::zero()) {
        return Err(Error::InvalidParameter("need T > 0 and C > 0".into()));
    }
    if !(t >= T::zero()) || t >= big_t {
        return Err(Error::PastBlowup {
            t: to_f64(t),
            blowup: to_f64(big_t),
        });
    }
    let position = (big_t - t) / big_t * (x0 + alpha * c * big_t * (big_t / (big_t - t)).ln());
    let crossing_time = (x0 < T::zero() && alpha > T::zero())
        .then(|| big_t * (T::one() - (x0 / (alpha * c * big_t)).exp()));
    Ok(CharacteristicGt2 { position, crossing_time })
}

/// `-x/T < v < -(x/T)(λ ρ0 T / 2)`.
pub fn xv_condition<T: Scalar>(p: &SelfSimilarParams<T>, x: T, v: T) -> bool {
    let lower = -x / p.blowup_time();
    let upper = lower * p.threshold_number() / lit(2.0);
    lower < v && v < upper
}

/// Shock time `1/(2 max g)` of the Burgers equation for the primitive of `g`.
pub fn burgers_blowup_time<T: Scalar>(g: impl Fn(T) -> T, v_grid: &Grid1D<T>) -> Result<T> {
    let top = v_grid.nodes().iter().map(|v| g(*v)).fold(T::zero(), |a, b| a.max(b));
    if !(top > T::zero()) {
        return Err(Error::EmptyField);
    }
    Ok(T::one() / (lit::<T>(2.0) * top))
}

/// Smooth bump `φ(s) = c exp(-1/(1 - 4s))` for `0 <= s < 1/4`, scaled so
/// that `∫ φ(u²) du = 1`. With it, `∫ m φ(a (v - bx)²) dv = m/√a = ρ`.
#[derive(Debug, Clone, Copy)]
pub struct Bump<T> {
    scale: T,
}

impl<T: Scalar> Bump<T> {
    pub fn new() -> Self {
        let raw = |u: T| Self::raw(u * u);
        // composite Simpson over the support [-1/2, 1/2]
        let n = 4000;
        let h = T::one() / count(n);
        let mut sum = raw(lit(-0.5)) + raw(lit(0.5));
        for k in 1..n {
            let u = lit::<T>(-0.5) + count::<T>(k) * h;
            sum = sum + lit::<T>(if k % 2 == 1 { 4.0 } else { 2.0 }) * raw(u);
        }
        Self {
            scale: T::one() / (sum * h / lit(3.0)),
        }
    }

    fn raw(s: T) -> T {
        let q = T::one() - lit::<T>(4.0) * s;
        if s >= T::zero() && q > T::zero() {
            (-T::one() / q).exp()
        } else {
            T::zero()
        }
    }

    pub fn eval(&self, s: T) -> T {
        self.scale * Self::raw(s)
    }

    /// `f(t, x, v)` of the self-similar solution.
    pub fn density(&self, p: &SelfSimilarParams<T>, t: T, x: T, v: T) -> Result<T> {
        let st = closed_form(p, t)?;
        let sqrt_a = st.m / st.rho;
        let u = sqrt_a * (v - st.b * x);
        Ok(st.m * self.eval(u * u))
    }
}

impl<T: Scalar> Default for Bump<T> {
    fn default() -> Self {
        Self::new()
    }
}
