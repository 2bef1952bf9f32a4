//! Consensus threshold and expected initial energy.
//!
//! `θ_c(γ) = ½∫₀¹ |f_(γ,0) − φ_γ|`: the total variation distance from the
//! narrowest, most extreme admissible triangle to the intensity. It is computed
//! by adaptive Gauss–Kronrod quadrature on pieces where the integrand is smooth,
//! that is, between regime boundaries of `φ_γ`, kinks of the triangle and the
//! sign changes of the difference.

use crate::error::{Error, Result};
use crate::opinions::phi_gamma;
use crate::scalar::Scalar;

/// Maximum bisection depth of [`adaptive_quad`].
pub const MAX_DEPTH: usize = 60;
/// Grid points scanned per smooth piece when bracketing sign changes.
pub const ROOT_SCAN_POINTS: usize = 4096;
/// Width to which bracketed sign changes are bisected.
pub const ROOT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct QuadratureResult<T> {
    pub value: T,
    pub error_estimate: T,
    pub evaluations: usize,
}

// 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15 tables).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One Kronrod-15 / Gauss-7 pass over `[a,b]`: (kronrod, |kronrod − gauss|).
fn gk15<T: Scalar, F: Fn(T) -> T>(f: &F, a: T, b: T) -> (T, T) {
    let half = T::lit(0.5);
    let center = half * (a + b);
    let radius = half * (b - a);
    let fc = f(center);
    let mut kronrod = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = radius * T::lit(XGK[j]);
        let pair = f(center - dx) + f(center + dx);
        kronrod = kronrod + T::lit(WGK[j]) * pair;
        if j % 2 == 1 {
            gauss = gauss + T::lit(WG[j / 2]) * pair;
        }
    }
    (kronrod * radius, ((kronrod - gauss) * radius).abs())
}

/// Adaptive quadrature of `f` over `[a,b]`.
///
/// The interval is first cut at `forced_splits`; every piece is then bisected
/// until the 15-point Kronrod and 7-point Gauss estimates agree to the piece's
/// share of `tol` (proportional to its length), or to rounding level. Fully
/// deterministic. A piece still unresolved at depth [`MAX_DEPTH`] makes the whole
/// call fail with [`Error::Convergence`] carrying the partial sum.
pub fn adaptive_quad<T, F>(f: F, a: T, b: T, forced_splits: &[T], tol: T) -> Result<QuadratureResult<T>>
where
    T: Scalar,
    F: Fn(T) -> T,
{
    if !(a < b) {
        return Err(Error::Parameter(format!("empty interval [{a}, {b}]")));
    }
    if !(tol > T::zero()) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    let mut cuts = vec![a];
    for &s in forced_splits {
        if s > a && s < b {
            cuts.push(s);
        }
    }
    cuts.push(b);
    cuts.sort_by(|x, y| x.partial_cmp(y).expect("finite split points"));
    cuts.dedup();

    let total_len = b - a;
    let roundoff = T::epsilon() * T::lit(64.0);
    let mut value = T::zero();
    let mut error = T::zero();
    let mut evaluations = 0;
    let mut converged = true;
    let mut stack: Vec<(T, T, usize)> = cuts.windows(2).rev().map(|w| (w[0], w[1], 0)).collect();
    while let Some((lo, hi, depth)) = stack.pop() {
        let (k, err) = gk15(&f, lo, hi);
        evaluations += 15;
        let local_tol = tol * (hi - lo) / total_len;
        if err <= local_tol || err <= roundoff * k.abs() || depth >= MAX_DEPTH {
            if err > local_tol && err > roundoff * k.abs() {
                converged = false;
            }
            value = value + k;
            error = error + err;
        } else {
            let mid = T::lit(0.5) * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    if !converged {
        return Err(Error::Convergence {
            value: value.as_f64(),
            error_estimate: error.as_f64(),
            evaluations,
        });
    }
    Ok(QuadratureResult {
        value,
        error_estimate: error,
        evaluations,
    })
}

/// Density of the extreme admissible triangle `f_(γ,0)`, supported on `[0,γ]`.
pub fn extreme_triangle<T: Scalar>(gamma: T, x: T) -> T {
    let two = T::lit(2.0);
    let peak = two / gamma;
    (peak * (T::one() - peak * (x - gamma / two).abs())).max(T::zero())
}

/// Split points where `f_(γ,0) − φ_γ` may fail to be smooth.
pub fn theta_c_splits<T: Scalar>(gamma: T) -> Vec<T> {
    let one = T::one();
    let half = T::lit(0.5);
    let mut pts: Vec<T> = [gamma * half, gamma, one - gamma, half, half * (one + gamma), one - gamma * half]
        .into_iter()
        .filter(|&s| s > T::zero() && s < one)
        .collect();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    pts.dedup_by(|b, a| (*b - *a).abs() < T::merge_eps());
    pts
}

/// Bracket every sign change of `d` on `[a,b]` with a uniform scan and bisect it.
fn sign_changes<T: Scalar, F: Fn(T) -> T>(d: &F, a: T, b: T, evaluations: &mut usize) -> Vec<T> {
    let n = T::from_usize(ROOT_SCAN_POINTS).expect("usize to float");
    let root_tol = T::lit(ROOT_TOL);
    let mut roots = Vec::new();
    let mut x_prev = a;
    let mut d_prev = d(a);
    *evaluations += 1;
    for i in 1..=ROOT_SCAN_POINTS {
        let x = a + (b - a) * T::from_usize(i).expect("usize to float") / n;
        let dx = d(x);
        *evaluations += 1;
        if (d_prev < T::zero() && dx > T::zero()) || (d_prev > T::zero() && dx < T::zero()) {
            let (mut lo, mut hi, mut dlo) = (x_prev, x, d_prev);
            while hi - lo > root_tol {
                let mid = T::lit(0.5) * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let dm = d(mid);
                *evaluations += 1;
                if (dm < T::zero()) == (dlo < T::zero()) {
                    lo = mid;
                    dlo = dm;
                } else {
                    hi = mid;
                }
            }
            let r = T::lit(0.5) * (lo + hi);
            if r > a && r < b {
                roots.push(r);
            }
        }
        x_prev = x;
        d_prev = dx;
    }
    roots
}

/// The consensus threshold `θ_c(γ) = ½∫₀¹ |f_(γ,0)(x) − φ_γ(x)| dx` to within `tol`.
pub fn theta_c<T: Scalar>(gamma: T, tol: T) -> Result<QuadratureResult<T>> {
    if !(gamma > T::zero() && gamma < T::one()) {
        return Err(Error::Parameter(format!("gamma = {gamma} must lie in (0, 1)")));
    }
    if !(tol > T::zero()) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    let diff = |x: T| extreme_triangle(gamma, x) - phi_gamma(gamma, x).expect("gamma checked");

    let mut cuts = vec![T::zero()];
    cuts.extend(theta_c_splits(gamma));
    cuts.push(T::one());

    let mut evaluations = 0;
    let mut all_cuts = Vec::with_capacity(cuts.len() * 2);
    for w in cuts.windows(2) {
        all_cuts.push(w[0]);
        all_cuts.extend(sign_changes(&diff, w[0], w[1], &mut evaluations));
    }
    all_cuts.push(T::one());

    // integrand of the ½-scaled problem; the full tolerance goes to the integral of |d|/2
    let half = T::lit(0.5);
    let q = adaptive_quad(|x| half * diff(x).abs(), T::zero(), T::one(), &all_cuts[1..all_cuts.len() - 1], tol)?;
    Ok(QuadratureResult {
        value: q.value,
        error_estimate: q.error_estimate,
        evaluations: q.evaluations + evaluations,
    })
}

/// `E[∫f₀²] = −8/(3(1−γ)) · (1 + ln γ/(1−γ))` for γ-restricted triangular opinions.
pub fn expected_energy<T: Scalar>(gamma: T) -> Result<T> {
    if !(gamma > T::zero() && gamma < T::one()) {
        return Err(Error::Parameter(format!(
            "gamma = {gamma} must lie in (0, 1); the energy diverges as gamma -> 0"
        )));
    }
    let one = T::one();
    let q = one - gamma;
    Ok(-T::lit(8.0) / (T::lit(3.0) * q) * (one + gamma.ln() / q))
}
