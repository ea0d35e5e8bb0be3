//! Numerical kernels: adaptive Gauss–Kronrod quadrature, Gauss rules,
//! bracketed root finding, cubic Hermite interpolation and inversion of
//! characteristic functions of non-negative random variables.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Tolerances for [`integrate_adaptive`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            max_subdivisions: 500,
        }
    }
}

impl QuadratureSpec {
    pub fn new(rel_tol: f64, abs_tol: f64, max_subdivisions: usize) -> Result<Self> {
        if !(rel_tol > 0.0) || !(abs_tol > 0.0) || max_subdivisions < 1 {
            return Err(Error::InvalidParameter(
                "quadrature tolerances must be positive and the budget at least 1".into(),
            ));
        }
        Ok(QuadratureSpec {
            rel_tol,
            abs_tol,
            max_subdivisions,
        })
    }

    pub fn with_rel_tol(self, rel_tol: f64) -> Self {
        QuadratureSpec { rel_tol, ..self }
    }
}

/// Estimate and error bound returned by [`integrate_adaptive`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[allow(clippy::excessive_precision)]
const GK15_XK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

#[allow(clippy::excessive_precision)]
const GK15_WK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

#[allow(clippy::excessive_precision)]
const G7_W: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut eval = |x: f64| -> Result<f64> {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::NonFinite { node: x, value: y })
        }
    };
    let fc = eval(c)?;
    let mut kronrod = fc * GK15_WK[7];
    let mut gauss = fc * G7_W[3];
    for j in 0..7 {
        let dx = h * GK15_XK[j];
        let f1 = eval(c - dx)?;
        let f2 = eval(c + dx)?;
        kronrod += GK15_WK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += G7_W[j / 2] * (f1 + f2);
        }
    }
    let value = kronrod * h;
    let err = ((kronrod - gauss) * h).abs();
    Ok((value, err))
}

/// Adaptive Gauss–Kronrod (7/15) quadrature of `f` over `[a, b]`. An infinite
/// upper limit is mapped onto `[0, 1)` by `x = a + t / (1 - t)`.
pub fn integrate_adaptive<F>(mut f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<Quadrature>
where
    F: FnMut(f64) -> f64,
{
    if a.is_nan() || b.is_nan() || a.is_infinite() {
        return Err(Error::InvalidParameter("integration limits must be a finite lower and a finite or +inf upper".into()));
    }
    if a == b {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    if b < a {
        let q = integrate_adaptive(f, b, a, spec)?;
        return Ok(Quadrature { value: -q.value, ..q });
    }
    if b.is_infinite() {
        let g = move |t: f64| {
            let s = 1.0 - t;
            f(a + t / s) / (s * s)
        };
        return integrate_finite(g, 0.0, 1.0, spec);
    }
    integrate_finite(f, a, b, spec)
}

fn integrate_finite<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<Quadrature> {
    let (v, e) = gk15(&mut f, a, b)?;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, error: e });
    let mut total = v;
    let mut total_err = e;
    let mut evaluations = 15;
    let mut subdivisions = 1;
    loop {
        if total_err <= spec.abs_tol.max(spec.rel_tol * total.abs()) {
            break;
        }
        if subdivisions >= spec.max_subdivisions {
            return Err(Error::NonConvergence {
                estimate: total,
                error: total_err,
            });
        }
        let seg = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (seg.a + seg.b);
        if !(mid > seg.a && mid < seg.b) {
            // interval cannot be split further in floating point
            return Err(Error::NonConvergence {
                estimate: total,
                error: total_err,
            });
        }
        let (v1, e1) = gk15(&mut f, seg.a, mid)?;
        let (v2, e2) = gk15(&mut f, mid, seg.b)?;
        evaluations += 30;
        subdivisions += 1;
        total += v1 + v2 - seg.value;
        total_err += e1 + e2 - seg.error;
        heap.push(Segment {
            a: seg.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: seg.b,
            value: v2,
            error: e2,
        });
    }
    // re-sum to shed accumulated rounding from the running updates
    let mut segs: Vec<Segment> = heap.into_vec();
    segs.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value = segs.iter().map(|s| s.value).sum();
    let error = segs.iter().map(|s| s.error).sum();
    Ok(Quadrature {
        value,
        error,
        evaluations,
    })
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Nodes and weights of the `n`-point Gauss–Hermite rule for the weight
/// `exp(-x^2)`, nodes in increasing order.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[n - 1],
            3 => 1.91 * z - 0.91 * x[n - 2],
            _ => 2.0 * z - x[n - i + 1],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-14 * z.abs().max(1.0) {
                break;
            }
        }
        x[n - 1 - i] = z;
        x[i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Brent's method on a sign-changing bracket.
pub fn find_root_bracketed<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa * fb < 0.0) {
        return Err(Error::NotBracketed {
            lo,
            hi,
            f_lo: fa,
            f_hi: fb,
        });
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb * fc > 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    Err(Error::NonConvergence {
        estimate: b,
        error: (c - b).abs(),
    })
}

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`,
/// stopping once the bracket is narrower than `tol`. Returns `(x, f(x))`.
pub fn golden_section_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Piecewise cubic Hermite interpolant on strictly increasing knots.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicHermite {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

impl CubicHermite {
    /// Interpolant with prescribed knot derivatives.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, ds: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() || xs.len() != ds.len() {
            return Err(Error::InvalidParameter("interpolation needs matching arrays of length >= 2".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("interpolation knots must be strictly increasing".into()));
        }
        Ok(CubicHermite { xs, ys, ds })
    }

    /// Shape-preserving (Fritsch–Carlson) interpolant; monotone data stay monotone.
    pub fn monotone(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 2 || n != ys.len() {
            return Err(Error::InvalidParameter("interpolation needs matching arrays of length >= 2".into()));
        }
        let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])).collect();
        let mut ds = vec![0.0; n];
        ds[0] = delta[0];
        ds[n - 1] = delta[n - 2];
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] <= 0.0 {
                ds[i] = 0.0;
            } else {
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                let w1 = 2.0 * h1 + h0;
                let w2 = h1 + 2.0 * h0;
                ds[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        Self::new(xs, ys, ds)
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    pub fn derivatives(&self) -> &[f64] {
        &self.ds
    }

    fn locate(&self, x: f64) -> usize {
        let n = self.xs.len();
        let i = self.xs.partition_point(|&k| k <= x);
        i.clamp(1, n - 1) - 1
    }

    /// Value at `x`; outside the knot range the end cubic is extended.
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.locate(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.ds[i] + h01 * self.ys[i + 1] + h11 * h * self.ds[i + 1]
    }

    /// Derivative of the interpolant at `x`.
    pub fn eval_derivative(&self, x: f64) -> f64 {
        let i = self.locate(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let d00 = (6.0 * t2 - 6.0 * t) / h;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = (-6.0 * t2 + 6.0 * t) / h;
        let d11 = 3.0 * t2 - 2.0 * t;
        d00 * self.ys[i] + d10 * self.ds[i] + d01 * self.ys[i + 1] + d11 * self.ds[i + 1]
    }
}

/// Controls for [`cf_invert_below`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfInversionSpec {
    /// Frequency past which the integral is closed by tail extrapolation.
    pub omega_max: f64,
    /// `|phi|` level below which the remaining tail is dropped.
    pub omega_tail_tol: f64,
    /// Budget of frequency panels.
    pub panel_count: usize,
    /// Absolute accuracy target on the probability.
    pub abs_tol: f64,
}

impl Default for CfInversionSpec {
    fn default() -> Self {
        CfInversionSpec {
            omega_max: 1e3,
            omega_tail_tol: 1e-6,
            panel_count: 200_000,
            abs_tol: 1e-6,
        }
    }
}

impl CfInversionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_max > 0.0) {
            return Err(Error::InvalidParameter("omega_max must be positive".into()));
        }
        if !(self.omega_tail_tol > 0.0 && self.omega_tail_tol < 1.0) {
            return Err(Error::InvalidParameter("omega_tail_tol must lie in (0, 1)".into()));
        }
        if self.panel_count < 1 || !(self.abs_tol > 0.0) {
            return Err(Error::InvalidParameter("panel budget and tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Slack allowed outside `[0, 1]` before an inversion is declared failed.
pub const CF_RANGE_SLACK: f64 = 1e-3;

// Maps the five values at t = 0, 1/4, .., 1 to quartic monomial coefficients.
fn quartic_basis() -> &'static [[f64; 5]; 5] {
    static BASIS: OnceLock<[[f64; 5]; 5]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut a = [[0.0; 10]; 5];
        for (i, row) in a.iter_mut().enumerate() {
            let t = i as f64 / 4.0;
            for (k, v) in row.iter_mut().take(5).enumerate() {
                *v = t.powi(k as i32);
            }
            row[5 + i] = 1.0;
        }
        for col in 0..5 {
            let piv = (col..5)
                .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
                .expect("non-empty");
            a.swap(col, piv);
            let p = a[col][col];
            for v in a[col].iter_mut() {
                *v /= p;
            }
            let pivot = a[col];
            for (r, row) in a.iter_mut().enumerate() {
                let m = row[col];
                if r != col && m != 0.0 {
                    for (v, p) in row.iter_mut().zip(pivot) {
                        *v -= m * p;
                    }
                }
            }
        }
        let mut inv = [[0.0; 5]; 5];
        for r in 0..5 {
            for k in 0..5 {
                inv[r][k] = a[r][5 + k];
            }
        }
        inv
    })
}

// m_k = int_0^1 t^k exp(-i theta t) dt, k = 0..4
fn oscillatory_moments(theta: f64) -> [Complex64; 5] {
    let mut m = [Complex64::new(0.0, 0.0); 5];
    if theta.abs() < 2.0 {
        let z = Complex64::new(0.0, -theta);
        for (k, mk) in m.iter_mut().enumerate() {
            let mut term = Complex64::new(1.0, 0.0);
            let mut sum = Complex64::new(0.0, 0.0);
            for n in 0..60 {
                let add = term / (n + k + 1) as f64;
                sum += add;
                if add.norm() < 1e-18 {
                    break;
                }
                term = term * z / (n + 1) as f64;
            }
            *mk = sum;
        }
    } else {
        let e = Complex64::new(0.0, -theta).exp();
        let inv = Complex64::new(0.0, 1.0 / theta);
        m[0] = (Complex64::new(1.0, 0.0) - e) / Complex64::new(0.0, theta);
        for k in 1..5 {
            m[k] = (e - m[k - 1] * k as f64) * inv;
        }
    }
    m
}

struct Inverter<'a, F> {
    phi: &'a mut F,
    xs: &'a [f64],
    evals: usize,
}

impl<F: FnMut(f64) -> Complex64> Inverter<'_, F> {
    fn phi(&mut self, w: f64) -> Result<Complex64> {
        self.evals += 1;
        let v = (self.phi)(w);
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { node: w, value: v.norm() })
        }
    }

    // Re int_a^{a+h} weight(w) * phi(w) (1 - exp(-i w x)) / (i w) dw for
    // every threshold, with the product weight * phi / w interpolated by a
    // quartic and the kernel integrated exactly.
    fn filon(&self, a: f64, h: f64, g: &[Complex64; 5], out: &mut [f64]) {
        let basis = quartic_basis();
        let mut c = [Complex64::new(0.0, 0.0); 5];
        for (k, ck) in c.iter_mut().enumerate() {
            for j in 0..5 {
                *ck += g[j] * basis[k][j];
            }
        }
        let plain: Complex64 = (0..5).map(|k| c[k] / (k + 1) as f64).sum();
        for (o, &x) in out.iter_mut().zip(self.xs) {
            let m = oscillatory_moments(h * x);
            let shift = Complex64::new(0.0, -a * x).exp();
            let mut osc = Complex64::new(0.0, 0.0);
            for k in 0..5 {
                osc += c[k] * m[k];
            }
            // (plain - shift * osc) * h / i, real part
            *o = ((plain - shift * osc) * h).im;
        }
    }

    // Adaptive panel on [a, a + h]; `gs` holds weight * phi / w at the 5
    // nodes. Adds the panel integrals to `acc` and returns the peak |phi|.
    #[allow(clippy::too_many_arguments)]
    fn panel<W: Fn(f64) -> f64>(
        &mut self,
        a: f64,
        h: f64,
        gs: [Complex64; 5],
        weight: &W,
        tol: f64,
        depth: usize,
        budget: &mut usize,
        acc: &mut [f64],
    ) -> Result<f64> {
        let n = self.xs.len();
        let mut coarse = vec![0.0; n];
        self.filon(a, h, &gs, &mut coarse);
        let mut left = [Complex64::new(0.0, 0.0); 5];
        let mut right = [Complex64::new(0.0, 0.0); 5];
        let mut peak = 0.0f64;
        left[0] = gs[0];
        left[2] = gs[1];
        left[4] = gs[2];
        right[0] = gs[2];
        right[2] = gs[3];
        right[4] = gs[4];
        for (slot, t) in [(1usize, 0.125), (3, 0.375)] {
            let w = a + h * t;
            let p = self.phi(w)?;
            peak = peak.max(p.norm());
            left[slot] = p * weight(w) / w;
        }
        for (slot, t) in [(1usize, 0.625), (3, 0.875)] {
            let w = a + h * t;
            let p = self.phi(w)?;
            peak = peak.max(p.norm());
            right[slot] = p * weight(w) / w;
        }
        let hh = 0.5 * h;
        let mut fine = vec![0.0; n];
        let mut part = vec![0.0; n];
        self.filon(a, hh, &left, &mut fine);
        self.filon(a + hh, hh, &right, &mut part);
        let mut err = 0.0f64;
        for i in 0..n {
            fine[i] += part[i];
            err = err.max((fine[i] - coarse[i]).abs());
        }
        if err <= tol || depth >= 40 {
            for i in 0..n {
                acc[i] += fine[i];
            }
            return Ok(peak);
        }
        if *budget == 0 {
            return Err(Error::NonConvergence {
                estimate: fine[0] / PI,
                error: err / PI,
            });
        }
        *budget -= 1;
        let pl = self.panel(a, hh, left, weight, 0.5 * tol, depth + 1, budget, acc)?;
        let pr = self.panel(a + hh, hh, right, weight, 0.5 * tol, depth + 1, budget, acc)?;
        Ok(peak.max(pl).max(pr))
    }

    fn samples<W: Fn(f64) -> f64>(&mut self, a: f64, h: f64, weight: &W) -> Result<([Complex64; 5], f64)> {
        let mut gs = [Complex64::new(0.0, 0.0); 5];
        let mut peak = 0.0f64;
        for (j, g) in gs.iter_mut().enumerate() {
            let w = a + h * j as f64 / 4.0;
            let p = self.phi(w)?;
            peak = peak.max(p.norm());
            *g = p * weight(w) / w;
        }
        Ok((gs, peak))
    }

    // Re int_a^b phi(w) (1 - exp(-i w x)) / (i w) dw on the non-oscillatory
    // head, by 10- against 2x10-point Gauss-Legendre with bisection. The
    // integrand tends to x as w -> 0 and nodes never hit w = 0.
    fn head(&mut self, a: f64, b: f64, tol: f64, depth: usize, acc: &mut [f64]) -> Result<()> {
        let n = self.xs.len();
        let mut coarse = vec![0.0; n];
        let mut fine = vec![0.0; n];
        self.head_rule(a, b, &mut coarse)?;
        let m = 0.5 * (a + b);
        self.head_rule(a, m, &mut fine)?;
        self.head_rule(m, b, &mut fine)?;
        let err = coarse.iter().zip(&fine).map(|(c, f)| (c - f).abs()).fold(0.0, f64::max);
        if err <= tol || depth >= 30 {
            for i in 0..n {
                acc[i] += fine[i];
            }
            return Ok(());
        }
        self.head(a, m, 0.5 * tol, depth + 1, acc)?;
        self.head(m, b, 0.5 * tol, depth + 1, acc)
    }

    fn head_rule(&mut self, a: f64, b: f64, out: &mut [f64]) -> Result<()> {
        let (nodes, weights) = gauss_legendre_10();
        let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
        for (t, wt) in nodes.iter().zip(weights) {
            let w = c + r * t;
            let p = self.phi(w)?;
            for (o, &x) in out.iter_mut().zip(self.xs) {
                let k = (Complex64::new(1.0, 0.0) - Complex64::new(0.0, -w * x).exp()) / Complex64::new(0.0, w);
                *o += r * wt * (p * k).re;
            }
        }
        Ok(())
    }
}

fn gauss_legendre_10() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(10))
}

/// `P[X < x]` for a non-negative random variable `X` with characteristic
/// function `phi`, from
/// `(1/pi) int_0^inf Re[phi(w) (1 - exp(-i w x)) / (i w)] dw`.
///
/// The kernel `exp(-i w x)` is integrated exactly on each panel (Filon
/// rule), so panel sizes follow the smoothness of `phi` alone. The integral
/// stops once `|phi|` falls under `omega_tail_tol`; if that has not happened
/// by `omega_max`, the truncated integral is averaged over `[W, 2W]` and
/// `[2W, 4W]` and Richardson-extrapolated to remove the `1/W` remainder.
pub fn cf_invert_below<F>(phi: F, x: f64, spec: &CfInversionSpec) -> Result<f64>
where
    F: FnMut(f64) -> Complex64,
{
    cf_invert_below_many(phi, &[x], spec).map(|v| v[0])
}

/// [`cf_invert_below`] at several thresholds sharing one set of `phi`
/// evaluations; panels are refined until every threshold meets the
/// tolerance.
pub fn cf_invert_below_many<F>(mut phi: F, xs: &[f64], spec: &CfInversionSpec) -> Result<Vec<f64>>
where
    F: FnMut(f64) -> Complex64,
{
    spec.validate()?;
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidParameter("threshold is NaN".into()));
    }
    let mut out: Vec<f64> = xs.iter().map(|&x| if x <= 0.0 { 0.0 } else { 1.0 }).collect();
    let live: Vec<usize> = (0..xs.len()).filter(|&i| xs[i] > 0.0 && xs[i].is_finite()).collect();
    if live.is_empty() {
        return Ok(out);
    }
    let lx: Vec<f64> = live.iter().map(|&i| xs[i]).collect();
    let n = lx.len();
    let x_max = lx.iter().cloned().fold(0.0, f64::max);
    let mut inv = Inverter {
        phi: &mut phi,
        xs: &lx,
        evals: 0,
    };

    let mut total = vec![0.0; n];
    let w0 = (PI / (4.0 * x_max.max(1.0))).min(spec.omega_max);
    inv.head(0.0, w0, 0.05 * spec.abs_tol, 0, &mut total)?;

    let unit = |_: f64| 1.0;
    let panel_tol = 0.02 * spec.abs_tol;
    let mut budget = spec.panel_count;
    let mut a = w0;
    let mut h = w0;
    let mut reached_tail_tol = false;
    while a < spec.omega_max {
        let hh = h.min(spec.omega_max - a);
        let (gs, peak0) = inv.samples(a, hh, &unit)?;
        let before = budget;
        let peak = inv.panel(a, hh, gs, &unit, panel_tol, 0, &mut budget, &mut total)?;
        a += hh;
        if peak.max(peak0) < spec.omega_tail_tol {
            reached_tail_tol = true;
            break;
        }
        if budget == 0 {
            return Err(Error::NonConvergence {
                estimate: total[0] / PI,
                error: f64::NAN,
            });
        }
        // grow while panels are accepted without splitting, never wider than a
        h = if before == budget { (2.0 * hh).min(a) } else { hh };
    }

    if !reached_tail_tol {
        let big_w = a;
        let mut span = |lo: f64, hi: f64, weight: &dyn Fn(f64) -> f64, inv: &mut Inverter<'_, F>| -> Result<Vec<f64>> {
            let mut acc = vec![0.0; n];
            let mut s = lo;
            let mut step = h.min(hi - lo);
            while s < hi {
                let st = step.min(hi - s);
                let (gs, _) = inv.samples(s, st, &weight)?;
                let before = budget;
                inv.panel(s, st, gs, &weight, panel_tol, 0, &mut budget, &mut acc)?;
                s += st;
                if budget == 0 {
                    return Err(Error::NonConvergence {
                        estimate: acc[0] / PI,
                        error: f64::NAN,
                    });
                }
                step = if before == budget { 2.0 * st } else { st };
            }
            Ok(acc)
        };
        let w = big_w;
        let a1 = span(w, 2.0 * w, &move |o: f64| (2.0 * w - o) / w, &mut inv)?;
        let b1 = span(w, 2.0 * w, &|_: f64| 1.0, &mut inv)?;
        let a2 = span(2.0 * w, 4.0 * w, &move |o: f64| (4.0 * w - o) / (2.0 * w), &mut inv)?;
        for i in 0..n {
            total[i] += 2.0 * b1[i] + 2.0 * a2[i] - a1[i];
        }
    }
    for (k, &i) in live.iter().enumerate() {
        let p = total[k] / PI;
        if !(-CF_RANGE_SLACK..=1.0 + CF_RANGE_SLACK).contains(&p) {
            return Err(Error::InversionFailure(p));
        }
        out[i] = p.clamp(0.0, 1.0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn quadrature_examples() {
        let q = integrate_adaptive(|x| x * x, 0.0, 1.0, &spec()).unwrap();
        assert!((q.value - 1.0 / 3.0).abs() < 1e-14);
        let q = integrate_adaptive(|x| (-x).exp(), 0.0, f64::INFINITY, &spec()).unwrap();
        assert!((q.value - 1.0).abs() < 1e-10);
        assert!(q.error <= 1e-8);
        let r = integrate_adaptive(|x| x * x, 1.0, 0.0, &spec()).unwrap();
        assert!((r.value + 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn sinc_integral_over_half_line() {
        // oscillatory improper integral: sum exact per-period pieces
        let per = std::f64::consts::PI;
        let mut total = integrate_adaptive(|x| if x == 0.0 { 1.0 } else { x.sin() / x }, 0.0, per, &spec())
            .unwrap()
            .value;
        // Euler-transform the alternating tail via averaging of partial sums
        let mut terms = Vec::new();
        for k in 1..400 {
            let a = k as f64 * per;
            terms.push(integrate_adaptive(|x| x.sin() / x, a, a + per, &spec()).unwrap().value);
        }
        let mut partial: Vec<f64> = terms
            .iter()
            .scan(0.0, |s, t| {
                *s += t;
                Some(*s)
            })
            .collect();
        for _ in 0..8 {
            partial = partial.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        }
        total += partial.last().unwrap();
        assert!((total - std::f64::consts::FRAC_PI_2).abs() < 1e-6, "{total}");
    }

    #[test]
    fn quadrature_reports_non_finite_nodes() {
        let r = integrate_adaptive(|x| if x > 0.5 { f64::NAN } else { 1.0 }, 0.0, 1.0, &spec());
        assert!(matches!(r, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn quadrature_budget_exhaustion() {
        let s = QuadratureSpec::new(1e-14, 1e-300, 3).unwrap();
        let r = integrate_adaptive(|x: f64| x.abs().sqrt().recip(), -1.0, 1.0, &s);
        assert!(matches!(r, Err(Error::NonConvergence { .. }) | Err(Error::NonFinite { .. })));
    }

    #[test]
    fn gauss_rules_integrate_polynomials() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((s - 2.0 / 19.0).abs() < 1e-13);
        let (x, w) = gauss_hermite(32);
        let norm: f64 = w.iter().sum();
        assert!((norm - PI.sqrt()).abs() < 1e-12);
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        assert!((m2 - PI.sqrt() / 2.0).abs() < 1e-12);
        let m8: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((m8 - 105.0 / 16.0 * PI.sqrt()).abs() < 1e-10);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn root_examples() {
        let r = find_root_bracketed(|x| x - 2.0, 0.0, 5.0, 1e-12).unwrap();
        assert!((r - 2.0).abs() < 1e-10);
        let r = find_root_bracketed(|x| x * x - 2.0, 0.0, 2.0, 1e-12).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-10);
        let r = find_root_bracketed(f64::cos, 0.0, 3.0, 1e-12).unwrap();
        assert!((r - PI / 2.0).abs() < 1e-10);
        assert!(matches!(
            find_root_bracketed(|x| x * x + 1.0, -1.0, 1.0, 1e-12),
            Err(Error::NotBracketed { .. })
        ));
    }

    #[test]
    fn golden_section_finds_peak() {
        let (x, v) = golden_section_max(|x| -(x - 1.3) * (x - 1.3) + 2.0, -5.0, 5.0, 1e-8);
        assert!((x - 1.3).abs() < 1e-6);
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let f = |x: f64| 0.5 * x * x * x - x + 2.0;
        let df = |x: f64| 1.5 * x * x - 1.0;
        let xs: Vec<f64> = (0..6).map(|i| i as f64 * 0.7).collect();
        let ys = xs.iter().map(|&x| f(x)).collect();
        let ds = xs.iter().map(|&x| df(x)).collect();
        let h = CubicHermite::new(xs, ys, ds).unwrap();
        for &x in &[0.1, 1.234, 3.3] {
            assert!((h.eval(x) - f(x)).abs() < 1e-12);
            assert!((h.eval_derivative(x) - df(x)).abs() < 1e-11);
        }
    }

    #[test]
    fn monotone_interpolant_stays_monotone() {
        let xs = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = vec![0.0, 0.0, 0.1, 5.0, 5.0];
        let h = CubicHermite::monotone(xs, ys).unwrap();
        let mut prev = -1.0;
        for i in 0..=400 {
            let v = h.eval(i as f64 * 0.01);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }

    #[test]
    fn moments_match_quadrature() {
        for &theta in &[0.3, 1.999, 2.0, 7.5, -3.0] {
            let m = oscillatory_moments(theta);
            for (k, mk) in m.iter().enumerate() {
                let re = integrate_adaptive(|t| t.powi(k as i32) * (theta * t).cos(), 0.0, 1.0, &spec()).unwrap().value;
                let im = integrate_adaptive(|t| -t.powi(k as i32) * (theta * t).sin(), 0.0, 1.0, &spec()).unwrap().value;
                assert!((mk.re - re).abs() < 1e-12 && (mk.im - im).abs() < 1e-12, "theta={theta} k={k}");
            }
        }
    }

    fn exp_cf(w: f64) -> Complex64 {
        Complex64::new(1.0, 0.0) / Complex64::new(1.0, -w)
    }

    fn uniform_cf(w: f64) -> Complex64 {
        if w == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            (Complex64::new(0.0, w).exp() - 1.0) / Complex64::new(0.0, w)
        }
    }

    #[test]
    fn inversion_oracles() {
        let s = CfInversionSpec::default();
        let p = cf_invert_below(exp_cf, 1.0, &s).unwrap();
        assert!((p - (1.0 - (-1f64).exp())).abs() < 1e-4, "{p}");
        let p = cf_invert_below(uniform_cf, 0.5, &s).unwrap();
        assert!((p - 0.5).abs() < 1e-4, "{p}");
        let c = 1.0;
        let deg = |w: f64| Complex64::new(0.0, w * c).exp();
        assert!(cf_invert_below(deg, 2.0, &s).unwrap() > 1.0 - 1e-4);
        assert!(cf_invert_below(deg, 0.5, &s).unwrap() < 1e-4);
    }

    #[test]
    fn inversion_of_fast_decaying_cf() {
        // Gamma(3, 1): phi = (1 - i w)^-3
        let s = CfInversionSpec::default();
        let phi = |w: f64| Complex64::new(1.0, -w).powi(-3);
        for &x in &[0.5_f64, 2.0, 6.0] {
            let exact = 1.0 - (-x).exp() * (1.0 + x + x * x / 2.0);
            let p = cf_invert_below(phi, x, &s).unwrap();
            assert!((p - exact).abs() < 1e-5, "x={x} p={p} exact={exact}");
        }
    }

    #[test]
    fn inversion_edge_thresholds() {
        let s = CfInversionSpec::default();
        assert_eq!(cf_invert_below(exp_cf, 0.0, &s).unwrap(), 0.0);
        assert_eq!(cf_invert_below(exp_cf, -1.0, &s).unwrap(), 0.0);
        assert_eq!(cf_invert_below(exp_cf, f64::INFINITY, &s).unwrap(), 1.0);
    }

    #[test]
    fn inversion_failure_is_reported() {
        let s = CfInversionSpec::default();
        // not a characteristic function: scaled by 3
        let r = cf_invert_below(|w| exp_cf(w) * 3.0, 5.0, &s);
        assert!(matches!(r, Err(Error::InversionFailure(_))));
    }

    #[test]
    fn batched_inversion_matches_single_calls() {
        let s = CfInversionSpec::default();
        let phi = |w: f64| Complex64::new(1.0, 0.0) / Complex64::new(1.0, -2.0 * w);
        let xs = [0.0, 0.1, 1.0, 2.0, 7.5, 30.0, f64::INFINITY, -1.0];
        let many = cf_invert_below_many(phi, &xs, &s).unwrap();
        for (x, p) in xs.iter().zip(&many) {
            let single = if x.is_finite() { cf_invert_below(phi, *x, &s).unwrap() } else { 1.0 };
            assert!((p - single).abs() < 2e-5, "x {x}: {p} vs {single}");
            let exact = if *x <= 0.0 { 0.0 } else { 1.0 - (-x / 2.0).exp() };
            assert!((p - exact).abs() < 1e-4, "x {x}: {p} vs {exact}");
        }
        assert!(cf_invert_below_many(phi, &[f64::NAN], &s).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn inversion_monotone_and_complementary(mean in 0.2f64..5.0, x1 in 0.05f64..8.0, dx in 0.01f64..3.0) {
                let s = CfInversionSpec::default();
                let phi = |w: f64| Complex64::new(1.0, 0.0) / Complex64::new(1.0, -w * mean);
                let p1 = cf_invert_below(phi, x1, &s).unwrap();
                let p2 = cf_invert_below(phi, x1 + dx, &s).unwrap();
                prop_assert!(p2 >= p1 - 1e-6);
                let upper = (-x1 / mean).exp();
                prop_assert!((p1 + upper - 1.0).abs() < 2e-4);
            }

            #[test]
            fn quadrature_error_bounds_truth(k in 0u32..12, c in 0.1f64..5.0) {
                let q = integrate_adaptive(|x| x.powi(k as i32) * (-c * x).exp(), 0.0, f64::INFINITY, &QuadratureSpec::default()).unwrap();
                let exact = (1..=k).map(f64::from).product::<f64>() / c.powi(k as i32 + 1);
                prop_assert!((q.value - exact).abs() <= q.error.max(1e-8 * exact) * 10.0);
            }
        }
    }
}
