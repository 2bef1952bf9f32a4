//! Exact arithmetic on piecewise-linear functions over `[0,1]`.
//!
//! A [`PiecewiseLinearFn`] is a list of breakpoints `0 = x₀ < … < x_k = 1` with
//! nonnegative values, linear in between. Every integral in this module has a
//! per-segment closed form; nothing here uses quadrature.
//!
//! Binary operations work on the merged breakpoint grid of both operands, with
//! breakpoints closer than [`Scalar::MERGE_EPS`] collapsed into one.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CSV_HEADER: &str = "breakpoint,value";

#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseLinearFn<T> {
    xs: Vec<T>,
    ys: Vec<T>,
    mass: T,
}

impl<T: Scalar> PiecewiseLinearFn<T> {
    /// Builds a function from breakpoints and values, checking every invariant.
    pub fn new(xs: Vec<T>, ys: Vec<T>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::Contract(format!(
                "{} breakpoints but {} values",
                xs.len(),
                ys.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::Contract("need at least the breakpoints 0 and 1".into()));
        }
        if xs[0] != T::zero() || xs[xs.len() - 1] != T::one() {
            return Err(Error::Contract(format!(
                "breakpoints must start at 0 and end at 1, got {} .. {}",
                xs[0],
                xs[xs.len() - 1]
            )));
        }
        if let Some(w) = xs.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(Error::Contract(format!(
                "breakpoints not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        if let Some(y) = ys.iter().find(|y| !y.is_finite() || **y < T::zero()) {
            return Err(Error::Contract(format!("value {y} is negative or not finite")));
        }
        Ok(Self::from_parts(xs, ys))
    }

    /// Like [`new`](Self::new) but additionally requires unit mass.
    pub fn density(xs: Vec<T>, ys: Vec<T>) -> Result<Self> {
        let f = Self::new(xs, ys)?;
        f.ensure_density("density")?;
        Ok(f)
    }

    pub(crate) fn from_parts(xs: Vec<T>, ys: Vec<T>) -> Self {
        debug_assert!(xs.len() == ys.len() && xs.len() >= 2);
        let mass = xs
            .windows(2)
            .zip(ys.windows(2))
            .fold(T::zero(), |acc, (x, y)| acc + (x[1] - x[0]) * (y[0] + y[1]));
        let mass = mass * T::lit(0.5);
        Self { xs, ys, mass }
    }

    /// The constant function `c` on `[0,1]`.
    pub fn constant(c: T) -> Result<Self> {
        Self::new(vec![T::zero(), T::one()], vec![c, c])
    }

    pub fn breakpoints(&self) -> &[T] {
        &self.xs
    }

    pub fn values(&self) -> &[T] {
        &self.ys
    }

    /// Number of breakpoints.
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Exact `∫₀¹ f`.
    pub fn integral(&self) -> T {
        self.mass
    }

    pub fn is_density(&self) -> bool {
        (self.mass - T::one()).abs() <= T::density_tol()
    }

    pub(crate) fn ensure_density(&self, what: &str) -> Result<()> {
        if self.is_density() {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "{what} is not a density: integral {} deviates from 1 by more than {:e}",
                self.mass,
                T::DENSITY_TOL
            )))
        }
    }

    pub fn max_value(&self) -> T {
        self.ys.iter().fold(T::zero(), |m, &y| m.max(y))
    }

    /// Linear interpolation at `x ∈ [0,1]`; exact at breakpoints.
    pub fn evaluate(&self, x: T) -> Result<T> {
        check_unit(x)?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: T) -> T {
        let i = self.xs.partition_point(|&b| b <= x);
        if i == 0 {
            return self.ys[0];
        }
        if i == self.xs.len() {
            return self.ys[i - 1];
        }
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        if x == x0 {
            return self.ys[i - 1];
        }
        lerp(self.ys[i - 1], self.ys[i], (x - x0) / (x1 - x0))
    }

    /// Exact `∫₀ˣ f` for `x ∈ [0,1]`.
    pub fn cdf(&self, x: T) -> Result<T> {
        check_unit(x)?;
        Ok(self.cdf_unchecked(x))
    }

    pub(crate) fn cdf_unchecked(&self, x: T) -> T {
        let half = T::lit(0.5);
        let mut acc = T::zero();
        for (xw, yw) in self.xs.windows(2).zip(self.ys.windows(2)) {
            if x >= xw[1] {
                acc = acc + half * (xw[1] - xw[0]) * (yw[0] + yw[1]);
            } else {
                if x > xw[0] {
                    acc = acc + partial_segment_area(xw[0], xw[1], yw[0], yw[1], x);
                }
                break;
            }
        }
        acc
    }

    /// Exact `∫₀¹ f²`.
    pub fn l2_energy(&self) -> T {
        self.xs
            .windows(2)
            .zip(self.ys.windows(2))
            .fold(T::zero(), |acc, (x, y)| acc + segment_square(x[1] - x[0], y[0], y[1]))
    }

    /// Removes breakpoints whose removal moves the function by at most `tol` in
    /// sup-norm. With `tol = 0` only exactly collinear breakpoints go.
    pub fn simplify(&self, tol: T) -> Self {
        let n = self.xs.len();
        if n <= 2 {
            return self.clone();
        }
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        xs.push(self.xs[0]);
        ys.push(self.ys[0]);
        let mut anchor = 0;
        for j in 1..n - 1 {
            // can the chord anchor -> j+1 stand in for everything strictly between?
            let (xa, ya) = (self.xs[anchor], self.ys[anchor]);
            let slope = (self.ys[j + 1] - ya) / (self.xs[j + 1] - xa);
            let droppable = self.xs[anchor + 1..=j]
                .iter()
                .zip(&self.ys[anchor + 1..=j])
                .all(|(&x, &y)| (y - (ya + slope * (x - xa))).abs() <= tol);
            if !droppable {
                xs.push(self.xs[j]);
                ys.push(self.ys[j]);
                anchor = j;
            }
        }
        xs.push(self.xs[n - 1]);
        ys.push(self.ys[n - 1]);
        Self::from_parts(xs, ys)
    }

    /// CSV with header `breakpoint,value`, one `x,y` pair per line, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for (x, y) in self.xs.iter().zip(&self.ys) {
            writeln!(w, "{:.16e},{:.16e}", x.as_f64(), y.as_f64())?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line == CSV_HEADER) {
                continue;
            }
            let (x, y) = line
                .split_once(',')
                .ok_or_else(|| Error::Contract(format!("line {}: expected `x,y`", lineno + 1)))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|e| Error::Contract(format!("line {}: {e}", lineno + 1)))
            };
            xs.push(parse(x)?);
            ys.push(parse(y)?);
        }
        Self::new(xs, ys)
    }
}

/// `(1−μ)f + μg`, the post-update opinion of the agent holding `f`.
pub fn mix<T: Scalar>(f: &PiecewiseLinearFn<T>, g: &PiecewiseLinearFn<T>, mu: T) -> Result<PiecewiseLinearFn<T>> {
    check_mu(mu)?;
    f.ensure_density("first argument")?;
    g.ensure_density("second argument")?;
    Ok(convex_combination(f, g, mu))
}

/// `(1−w)f + wg` for any weight `w ∈ [0,1]`, without density requirements.
pub fn convex_combination<T: Scalar>(f: &PiecewiseLinearFn<T>, g: &PiecewiseLinearFn<T>, w: T) -> PiecewiseLinearFn<T> {
    let m = Merged::new(f, g);
    let ys = m.fv.iter().zip(&m.gv).map(|(&a, &b)| lerp(a, b, w)).collect();
    PiecewiseLinearFn::from_parts(m.xs, ys)
}

/// Outcome of one pairwise compromise between two densities.
#[derive(Clone, Debug)]
pub struct PairUpdate<T> {
    pub first: PiecewiseLinearFn<T>,
    pub second: PiecewiseLinearFn<T>,
    /// `∫(f−g)²` of the inputs.
    pub sq_distance: T,
    /// `first` and `second` are bitwise equal (μ = ½).
    pub symmetric: bool,
}

/// Both sides of a compromise, `((1−μ)f+μg, μf+(1−μ)g)`, built on one shared grid.
pub fn mix_pair<T: Scalar>(f: &PiecewiseLinearFn<T>, g: &PiecewiseLinearFn<T>, mu: T) -> Result<PairUpdate<T>> {
    check_mu(mu)?;
    f.ensure_density("first argument")?;
    g.ensure_density("second argument")?;
    let m = Merged::new(f, g);
    let sq_distance = m.diff_sq_integral();
    let half = T::lit(0.5);
    if mu == half {
        // symmetric midpoint, so both sides come out bitwise equal
        let mid: Vec<T> = m.fv.iter().zip(&m.gv).map(|(&a, &b)| half * (a + b)).collect();
        let first = PiecewiseLinearFn::from_parts(m.xs, mid);
        return Ok(PairUpdate {
            second: first.clone(),
            first,
            sq_distance,
            symmetric: true,
        });
    }
    let first = m.fv.iter().zip(&m.gv).map(|(&a, &b)| lerp(a, b, mu)).collect();
    let second = m.fv.iter().zip(&m.gv).map(|(&a, &b)| lerp(b, a, mu)).collect();
    let xs2 = m.xs.clone();
    Ok(PairUpdate {
        first: PiecewiseLinearFn::from_parts(m.xs, first),
        second: PiecewiseLinearFn::from_parts(xs2, second),
        sq_distance,
        symmetric: false,
    })
}

/// Total variation distance `½∫|f−g|` between two densities.
pub fn tv_distance<T: Scalar>(f: &PiecewiseLinearFn<T>, g: &PiecewiseLinearFn<T>) -> Result<T> {
    f.ensure_density("first argument")?;
    g.ensure_density("second argument")?;
    Ok(half_l1_distance(f, g).min(T::one()))
}

/// `½∫|f−g|` for arbitrary nonnegative piecewise-linear functions.
///
/// Each segment of `h = f−g` is split at its sign change, so the result is
/// exact up to rounding.
pub fn half_l1_distance<T: Scalar>(f: &PiecewiseLinearFn<T>, g: &PiecewiseLinearFn<T>) -> T {
    let half = T::lit(0.5);
    if f.xs == g.xs {
        // shared grid: no merge needed
        let mut acc = T::zero();
        for i in 0..f.xs.len() - 1 {
            let h0 = f.ys[i] - g.ys[i];
            let h1 = f.ys[i + 1] - g.ys[i + 1];
            acc = acc + abs_segment_area(f.xs[i + 1] - f.xs[i], h0, h1);
        }
        return half * acc;
    }
    let m = Merged::new(f, g);
    let mut acc = T::zero();
    for i in 0..m.xs.len() - 1 {
        let dx = m.xs[i + 1] - m.xs[i];
        let h0 = m.fv[i] - m.gv[i];
        let h1 = m.fv[i + 1] - m.gv[i + 1];
        acc = acc + abs_segment_area(dx, h0, h1);
    }
    half * acc
}

/// `∫(f−g)²`.
pub fn l2_distance_sq<T: Scalar>(f: &PiecewiseLinearFn<T>, g: &PiecewiseLinearFn<T>) -> T {
    Merged::new(f, g).diff_sq_integral()
}

/// `max |f−g|`, attained on the merged breakpoint grid.
pub fn sup_norm_distance<T: Scalar>(f: &PiecewiseLinearFn<T>, g: &PiecewiseLinearFn<T>) -> T {
    let m = Merged::new(f, g);
    m.fv.iter().zip(&m.gv).fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
}

/// Lévy distance between two densities, accurate to `tol`.
///
/// Bisects on `ε` over the predicate `F(x−ε)−ε ≤ G(x) ≤ F(x+ε)+ε` for all `x`.
/// For fixed `ε` both sides are piecewise quadratic, so the predicate is checked
/// exactly at the merged breakpoints (including the shifted ones) and at the
/// interior extremum of every piece. The returned value is an upper end of the
/// final bracket; no claim is made that the infimum is attained.
pub fn levy_distance<T: Scalar>(f: &PiecewiseLinearFn<T>, g: &PiecewiseLinearFn<T>, tol: T) -> Result<T> {
    if !(tol > T::zero()) {
        return Err(Error::Parameter(format!("levy tolerance must be positive, got {tol}")));
    }
    f.ensure_density("first argument")?;
    g.ensure_density("second argument")?;
    let cf = Cdf::new(f);
    let cg = Cdf::new(g);
    if levy_feasible(&cf, &cg, T::zero()) {
        return Ok(T::zero());
    }
    let (mut lo, mut hi) = (T::zero(), T::one());
    let half = T::lit(0.5);
    while hi - lo > tol {
        let mid = half * (lo + hi);
        if levy_feasible(&cf, &cg, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Cumulative distribution of a piecewise-linear density, extended by 0 to the
/// left of 0 and by the total mass to the right of 1.
#[derive(Clone, Debug)]
pub struct Cdf<'a, T> {
    f: &'a PiecewiseLinearFn<T>,
    cum: Vec<T>,
}

impl<'a, T: Scalar> Cdf<'a, T> {
    pub fn new(f: &'a PiecewiseLinearFn<T>) -> Self {
        let half = T::lit(0.5);
        let mut cum = Vec::with_capacity(f.len());
        let mut acc = T::zero();
        cum.push(acc);
        for (x, y) in f.xs.windows(2).zip(f.ys.windows(2)) {
            acc = acc + half * (x[1] - x[0]) * (y[0] + y[1]);
            cum.push(acc);
        }
        Self { f, cum }
    }

    pub fn eval(&self, x: T) -> T {
        let xs = &self.f.xs;
        if x <= T::zero() {
            return T::zero();
        }
        if x >= T::one() {
            return self.cum[self.cum.len() - 1];
        }
        let i = xs.partition_point(|&b| b <= x) - 1;
        self.cum[i] + partial_segment_area(xs[i], xs[i + 1], self.f.ys[i], self.f.ys[i + 1], x)
    }
}

fn levy_feasible<T: Scalar>(cf: &Cdf<'_, T>, cg: &Cdf<'_, T>, eps: T) -> bool {
    let slack = T::epsilon() * T::lit(64.0);
    let mut grid: Vec<T> = Vec::with_capacity(cg.f.len() + 2 * cf.f.len());
    grid.extend_from_slice(&cg.f.xs);
    for &x in &cf.f.xs {
        for s in [x - eps, x + eps] {
            if s > T::zero() && s < T::one() {
                grid.push(s);
            }
        }
    }
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    grid.dedup();

    let lower = |x: T| cf.eval(x - eps) - eps - cg.eval(x);
    let upper = |x: T| cg.eval(x) - cf.eval(x + eps) - eps;
    let half = T::lit(0.5);
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        let m = half * (a + b);
        for d in [&lower as &dyn Fn(T) -> T, &upper] {
            let (da, dm, db) = (d(a), d(m), d(b));
            if da > slack || dm > slack || db > slack {
                return false;
            }
            if quadratic_max(da, dm, db) > slack {
                return false;
            }
        }
    }
    true
}

/// Maximum over `s ∈ [0,1]` of the quadratic through `(0,a)`, `(½,m)`, `(1,b)`.
fn quadratic_max<T: Scalar>(a: T, m: T, b: T) -> T {
    let two = T::lit(2.0);
    let curv = two * (a - two * m + b);
    let lin = b - a - curv;
    let mut best = a.max(b);
    if curv < T::zero() {
        let s = -lin / (two * curv);
        if s > T::zero() && s < T::one() {
            best = best.max(a + lin * s + curv * s * s);
        }
    }
    best
}

/// Values of two functions on their merged breakpoint grid.
pub(crate) struct Merged<T> {
    pub xs: Vec<T>,
    pub fv: Vec<T>,
    pub gv: Vec<T>,
}

impl<T: Scalar> Merged<T> {
    pub fn new(f: &PiecewiseLinearFn<T>, g: &PiecewiseLinearFn<T>) -> Self {
        if f.xs == g.xs {
            return Self {
                xs: f.xs.clone(),
                fv: f.ys.clone(),
                gv: g.ys.clone(),
            };
        }
        let eps = T::merge_eps();
        let cap = f.len() + g.len();
        let mut xs = Vec::with_capacity(cap);
        let mut fv = Vec::with_capacity(cap);
        let mut gv = Vec::with_capacity(cap);
        let (mut i, mut j) = (0, 0);
        while i < f.len() || j < g.len() {
            let x = match (f.xs.get(i), g.xs.get(j)) {
                (Some(&a), Some(&b)) => a.min(b),
                (Some(&a), None) => a,
                (None, Some(&b)) => b,
                (None, None) => unreachable!(),
            };
            let fresh = xs.last().is_none_or(|&last| x - last >= eps);
            if fresh {
                // every earlier breakpoint lies below x, the next one at or above it
                xs.push(x);
                fv.push(value_before(&f.xs, &f.ys, i, x));
                gv.push(value_before(&g.xs, &g.ys, j, x));
            }
            while i < f.len() && f.xs[i] <= x + eps {
                i += 1;
            }
            while j < g.len() && g.xs[j] <= x + eps {
                j += 1;
            }
        }
        // the collapsed right end is 1 by construction of both inputs
        let last = xs.len() - 1;
        if xs[last] != T::one() {
            xs[last] = T::one();
            fv[last] = f.ys[f.len() - 1];
            gv[last] = g.ys[g.len() - 1];
        }
        Self { xs, fv, gv }
    }

    fn diff_sq_integral(&self) -> T {
        let mut acc = T::zero();
        for i in 0..self.xs.len() - 1 {
            let h0 = self.fv[i] - self.gv[i];
            let h1 = self.fv[i + 1] - self.gv[i + 1];
            acc = acc + segment_square(self.xs[i + 1] - self.xs[i], h0, h1);
        }
        acc
    }
}

/// Value at `x` given that `xs[i]` is the first breakpoint not below `x`.
#[inline]
fn value_before<T: Scalar>(xs: &[T], ys: &[T], i: usize, x: T) -> T {
    match xs.get(i) {
        None => ys[ys.len() - 1],
        Some(&xi) if x >= xi || i == 0 => ys[i],
        Some(&xi) => lerp(ys[i - 1], ys[i], (x - xs[i - 1]) / (xi - xs[i - 1])),
    }
}

#[inline]
pub(crate) fn lerp<T: Scalar>(a: T, b: T, w: T) -> T {
    a + w * (b - a)
}

/// `∫` over a segment of width `dx` of the square of the line from `a` to `b`.
#[inline]
fn segment_square<T: Scalar>(dx: T, a: T, b: T) -> T {
    dx * (a * a + a * b + b * b) / T::lit(3.0)
}

/// `∫|h|` over a segment of width `dx` where `h` is linear from `h0` to `h1`.
#[inline]
fn abs_segment_area<T: Scalar>(dx: T, h0: T, h1: T) -> T {
    let half = T::lit(0.5);
    if (h0 >= T::zero()) == (h1 >= T::zero()) || h0 == T::zero() || h1 == T::zero() {
        half * dx * (h0.abs() + h1.abs())
    } else {
        // root at fraction t = h0/(h0-h1)
        let t = h0 / (h0 - h1);
        half * dx * (h0.abs() * t + h1.abs() * (T::one() - t))
    }
}

/// `∫_{x0}^{x}` of the line through `(x0,y0)`, `(x1,y1)`.
#[inline]
fn partial_segment_area<T: Scalar>(x0: T, x1: T, y0: T, y1: T, x: T) -> T {
    let s = x - x0;
    let slope = (y1 - y0) / (x1 - x0);
    y0 * s + T::lit(0.5) * slope * s * s
}

fn check_unit<T: Scalar>(x: T) -> Result<()> {
    if x >= T::zero() && x <= T::one() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{x} is outside [0,1]")))
    }
}

pub(crate) fn check_mu<T: Scalar>(mu: T) -> Result<()> {
    if mu > T::zero() && mu <= T::lit(0.5) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("convergence parameter mu = {mu} must lie in (0, 1/2]")))
    }
}
