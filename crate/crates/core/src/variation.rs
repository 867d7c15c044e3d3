//! Second variation of `J`, index forms along parallel frames and integral
//! inequalities evaluated as explicit left and right sides.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::geodesic::{conserved_quantity, GeodesicSolution, VariationField};
use crate::geometry::{connection_at, curvature_pack, hermite, transport_segment, CurvaturePack, Frame};
use crate::models::ManifoldModel;
use crate::phi::PhiSpec;
use crate::tensor::g_dot;

/// Slack below which an inequality counts as violated.
pub const SLACK_TOLERANCE: f64 = 1e-8;

/// Shape of a test function `ζ` on `[0, s̄]`.
#[derive(Clone, Debug, PartialEq)]
pub enum ZetaKind {
    /// `s` on `[0,1]`, `1` on `[1, s̄−1]`, `s̄ − s` on `[s̄−1, s̄]`.
    Trapezoid,
    /// `s/s̄`; does not vanish at `s̄`.
    LinearRamp,
    /// `sin(πs/s̄)`.
    SineBump,
    /// Samples on a uniform grid, interpolated by cubic Hermite segments.
    Custom { values: Vec<f64>, derivs: Vec<f64> },
}

/// Which one-sided derivative to take at a kink.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// A scalar test function along a path.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    pub kind: ZetaKind,
    pub s_bar: f64,
}

impl TestFunction {
    /// The trapezoid profile; needs `s̄ ≥ 2`.
    pub fn trapezoid(s_bar: f64) -> Result<Self> {
        if !(s_bar >= 2.0 && s_bar.is_finite()) {
            return Err(LabError::Usage(format!("the trapezoid profile needs s_bar >= 2, got {s_bar}")));
        }
        Ok(Self { kind: ZetaKind::Trapezoid, s_bar })
    }

    pub fn linear_ramp(s_bar: f64) -> Result<Self> {
        Self::check_len(s_bar)?;
        Ok(Self { kind: ZetaKind::LinearRamp, s_bar })
    }

    pub fn sine_bump(s_bar: f64) -> Result<Self> {
        Self::check_len(s_bar)?;
        Ok(Self { kind: ZetaKind::SineBump, s_bar })
    }

    /// Samples `ζ(s_k)`, `s_k = k·s̄/K`; derivatives by fourth-order
    /// differences.
    pub fn custom(s_bar: f64, values: Vec<f64>) -> Result<Self> {
        Self::check_len(s_bar)?;
        if values.len() < 5 || values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::Usage("a custom profile needs at least 5 finite samples".into()));
        }
        let path = crate::geodesic::DiscretePath::new(values.iter().map(|v| vec![*v]).collect(), s_bar)?;
        let derivs = path.velocities().into_iter().map(|v| v[0]).collect();
        Ok(Self {
            kind: ZetaKind::Custom { values, derivs },
            s_bar,
        })
    }

    fn check_len(s_bar: f64) -> Result<()> {
        if s_bar > 0.0 && s_bar.is_finite() {
            Ok(())
        } else {
            Err(LabError::Usage(format!("s_bar must be positive, got {s_bar}")))
        }
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            ZetaKind::Trapezoid => "trapezoid",
            ZetaKind::LinearRamp => "linear_ramp",
            ZetaKind::SineBump => "sine_bump",
            ZetaKind::Custom { .. } => "custom",
        }
    }

    /// Parameters where `ζ′` may jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.kind {
            ZetaKind::Trapezoid => vec![1.0, self.s_bar - 1.0],
            _ => Vec::new(),
        }
    }

    /// True when `ζ(0) = ζ(s̄) = 0`.
    pub fn vanishes_at_ends(&self) -> bool {
        self.value(0.0).abs() <= 1e-12 && self.value(self.s_bar).abs() <= 1e-12
    }

    fn custom_segment(&self, s: f64) -> (usize, f64, f64) {
        let ZetaKind::Custom { values, .. } = &self.kind else {
            unreachable!()
        };
        let k = values.len() - 1;
        let h = self.s_bar / k as f64;
        let j = ((s / h).floor() as usize).min(k - 1);
        (j, (s - j as f64 * h) / h, h)
    }

    pub fn value(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.s_bar);
        match &self.kind {
            ZetaKind::Trapezoid => s.min(1.0).min(self.s_bar - s),
            ZetaKind::LinearRamp => s / self.s_bar,
            ZetaKind::SineBump => (std::f64::consts::PI * s / self.s_bar).sin(),
            ZetaKind::Custom { values, derivs } => {
                let (j, t, h) = self.custom_segment(s);
                hermite(&[values[j]], &[derivs[j]], &[values[j + 1]], &[derivs[j + 1]], h, t).0[0]
            }
        }
    }

    /// One-sided derivative `ζ′(s±)`.
    pub fn deriv(&self, s: f64, side: Side) -> f64 {
        let s = s.clamp(0.0, self.s_bar);
        match &self.kind {
            ZetaKind::Trapezoid => {
                let (a, b) = (1.0, self.s_bar - 1.0);
                let left = side == Side::Left;
                if s < a || (s == a && left) {
                    1.0
                } else if s > b || (s == b && !left) {
                    -1.0
                } else {
                    0.0
                }
            }
            ZetaKind::LinearRamp => 1.0 / self.s_bar,
            ZetaKind::SineBump => {
                let w = std::f64::consts::PI / self.s_bar;
                w * (w * s).cos()
            }
            ZetaKind::Custom { values, derivs } => {
                let (j, t, h) = self.custom_segment(s);
                hermite(&[values[j]], &[derivs[j]], &[values[j + 1]], &[derivs[j + 1]], h, t).1[0]
            }
        }
    }
}

/// Both sides of an integral inequality `lhs ≤ rhs`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityLedger {
    pub name: String,
    pub model: String,
    pub c: Option<f64>,
    pub n: usize,
    pub s_bar: f64,
    #[serde(rename = "C")]
    pub big_c: f64,
    pub zeta: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
    /// Ledger-specific identity residual (0 when not applicable).
    pub aux_residual: f64,
    /// Number of grid doublings used.
    pub refinements: u32,
    /// Largest change of `lhs` or `rhs` under the last doubling.
    pub quad_change: f64,
}

/// Quadrature refinement settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LedgerOptions {
    /// Doublings attempted beyond the path grid while values still move by
    /// more than `change_tol`.
    pub max_level: u32,
    pub change_tol: f64,
}

impl Default for LedgerOptions {
    fn default() -> Self {
        Self {
            max_level: 1,
            change_tol: 1e-8,
        }
    }
}

/// Quadrature nodes along a solution: the path grid refined `2^level`
/// times by Hermite interpolation, plus the breakpoints of `ζ`.
struct Nodes {
    s: Vec<f64>,
    x: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

fn nodes(sol: &GeodesicSolution, extra: &[f64], level: u32) -> Nodes {
    let k = sol.k();
    let s_bar = sol.s_bar();
    let ds = sol.path.ds();
    let m = 1usize << level;
    let mut list: Vec<(usize, usize)> = (0..k).flat_map(|j| (0..m).map(move |i| (j, i))).collect();
    list.push((k, 0));
    let mut s: Vec<f64> = list
        .iter()
        .map(|&(j, i)| s_bar * (j * m + i) as f64 / (k * m) as f64)
        .collect();
    let mut x: Vec<Vec<f64>> = Vec::with_capacity(s.len());
    let mut v: Vec<Vec<f64>> = Vec::with_capacity(s.len());
    let at = |j: usize, t: f64| {
        hermite(
            &sol.path.samples[j],
            &sol.velocities[j],
            &sol.path.samples[j + 1],
            &sol.velocities[j + 1],
            ds,
            t,
        )
    };
    for &(j, i) in &list {
        if i == 0 {
            x.push(sol.path.samples[j].clone());
            v.push(sol.velocities[j].clone());
        } else {
            let (p, w) = at(j, i as f64 / m as f64);
            x.push(p);
            v.push(w);
        }
    }
    for &b in extra {
        if !(b > 0.0 && b < s_bar) || s.iter().any(|t| (t - b).abs() <= 1e-12 * s_bar) {
            continue;
        }
        let pos = s.partition_point(|t| *t < b);
        let j = ((b / ds).floor() as usize).min(k - 1);
        let (p, w) = at(j, (b - j as f64 * ds) / ds);
        s.insert(pos, b);
        x.insert(pos, p);
        v.insert(pos, w);
    }
    Nodes { s, x, v }
}

/// Trapezoid rule for `∫ F(node, ζ, ζ′) ds` with one-sided `ζ′` at the
/// interval ends, so piecewise-linear `ζ` is integrated exactly.
fn integrate(nodes: &Nodes, zeta: &TestFunction, f: impl Fn(usize, f64, f64) -> f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..nodes.s.len() - 1 {
        let (a, b) = (nodes.s[i], nodes.s[i + 1]);
        let fa = f(i, zeta.value(a), zeta.deriv(a, Side::Right));
        let fb = f(i + 1, zeta.value(b), zeta.deriv(b, Side::Left));
        acc += 0.5 * (b - a) * (fa + fb);
    }
    acc
}

fn packs(model: &ManifoldModel, phi: &PhiSpec, nodes: &Nodes) -> Result<Vec<CurvaturePack>> {
    nodes.x.iter().map(|p| curvature_pack(model, phi, p)).collect()
}

fn require_vanishing(zeta: &TestFunction, sol: &GeodesicSolution) -> Result<()> {
    if !zeta.vanishes_at_ends() {
        return Err(LabError::Usage(format!(
            "test function '{}' does not vanish at both endpoints",
            zeta.label()
        )));
    }
    if (zeta.s_bar - sol.s_bar()).abs() > 1e-12 * sol.s_bar() {
        return Err(LabError::Usage(format!(
            "test function is defined on [0, {}] but the path on [0, {}]",
            zeta.s_bar,
            sol.s_bar()
        )));
    }
    Ok(())
}

struct Sides {
    lhs: f64,
    rhs: f64,
    aux: f64,
}

/// Evaluate on successively doubled grids until both sides settle, and
/// keep doubling while the slack sits in `(−1e−8, 0)`.
fn refined(
    sol: &GeodesicSolution,
    zeta: &TestFunction,
    opts: LedgerOptions,
    eval: impl Fn(&Nodes) -> Result<Sides>,
) -> Result<(Sides, u32, f64)> {
    let bps = zeta.breakpoints();
    let mut level = 0;
    let mut cur = eval(&nodes(sol, &bps, 0))?;
    let mut change = f64::INFINITY;
    loop {
        let slack = cur.rhs - cur.lhs;
        let ambiguous = slack < 0.0 && slack > -SLACK_TOLERANCE;
        let settled = change < opts.change_tol;
        if (settled || level >= opts.max_level) && !(ambiguous && level < opts.max_level + 3) {
            break;
        }
        level += 1;
        let next = eval(&nodes(sol, &bps, level))?;
        change = (next.lhs - cur.lhs).abs().max((next.rhs - cur.rhs).abs());
        cur = next;
    }
    Ok((cur, level, if level == 0 { 0.0 } else { change }))
}

#[allow(clippy::too_many_arguments)]
fn ledger(
    name: &str,
    model: &ManifoldModel,
    c: Option<f64>,
    big_c: f64,
    sol: &GeodesicSolution,
    zeta: &TestFunction,
    sides: Sides,
    refinements: u32,
    quad_change: f64,
) -> InequalityLedger {
    let slack = sides.rhs - sides.lhs;
    InequalityLedger {
        name: name.to_string(),
        model: model.name().to_string(),
        c,
        n: model.dim(),
        s_bar: sol.s_bar(),
        big_c,
        zeta: zeta.label().to_string(),
        lhs: sides.lhs,
        rhs: sides.rhs,
        slack,
        holds: slack >= -SLACK_TOLERANCE,
        aux_residual: sides.aux,
        refinements,
        quad_change,
    }
}

/// Parallel transport of `seeds` (vectors at `γ(0)`) along the nodes.
fn frames_along(model: &ManifoldModel, nodes: &Nodes, seeds: Vec<DVector<f64>>) -> Result<Vec<Vec<DVector<f64>>>> {
    let mut out = vec![seeds];
    for i in 0..nodes.s.len() - 1 {
        let h = nodes.s[i + 1] - nodes.s[i];
        let next = transport_segment(
            model,
            &nodes.x[i],
            &nodes.v[i],
            &nodes.x[i + 1],
            &nodes.v[i + 1],
            h,
            &out[i],
        )?;
        out.push(next);
    }
    Ok(out)
}

/// Parallel orthonormal frame along the sample grid of `sol`, seeded by
/// Gram–Schmidt of the chart basis at `γ(0)`.
pub fn parallel_frame(model: &ManifoldModel, sol: &GeodesicSolution) -> Result<Vec<Frame>> {
    let g0 = model.metric(sol.path.x());
    let seed = Frame::from_chart(&g0).basis;
    let vecs = crate::geometry::parallel_transport_with_velocities(
        model,
        &sol.path.samples,
        &sol.velocities,
        sol.path.ds(),
        &seed,
    )?;
    Ok(vecs.into_iter().map(|basis| Frame { basis }).collect())
}

/// `U = ζ·E` where `E` is the parallel transport of `e0` along `sol`.
pub fn parallel_variation(
    model: &ManifoldModel,
    sol: &GeodesicSolution,
    e0: &DVector<f64>,
    zeta: &TestFunction,
) -> Result<VariationField> {
    let field = crate::geometry::parallel_transport_with_velocities(
        model,
        &sol.path.samples,
        &sol.velocities,
        sol.path.ds(),
        std::slice::from_ref(e0),
    )?;
    Ok(VariationField::new(
        field
            .into_iter()
            .enumerate()
            .map(|(k, v)| &v[0] * zeta.value(sol.path.s(k)))
            .collect(),
    ))
}

/// Unit vector at `γ(0)` orthogonal to `γ′(0)`, from Gram–Schmidt of the
/// velocity and the chart basis.
pub fn initial_unit_normal(model: &ManifoldModel, sol: &GeodesicSolution) -> Result<DVector<f64>> {
    let n = model.dim();
    let g0 = model.metric(sol.path.x());
    let mut vecs = vec![sol.velocity(0)];
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        vecs.push(e);
    }
    let frame = Frame::gram_schmidt(&g0, &vecs);
    frame
        .basis
        .get(1)
        .cloned()
        .ok_or_else(|| LabError::Usage("no normal direction in dimension 1".into()))
}

fn check_field(sol: &GeodesicSolution, u: &VariationField) -> Result<()> {
    if u.len() != sol.k() + 1 {
        return Err(LabError::Usage(format!(
            "variation field has {} vectors, path has {} samples",
            u.len(),
            sol.k() + 1
        )));
    }
    if !u.vanishing {
        return Err(LabError::Usage(
            "the index form needs a variation field vanishing at both endpoints".into(),
        ));
    }
    Ok(())
}

/// `∫(|∇_S U|² − ⟨Rm(S,U)U,S⟩ + ∇∇φ(U,U)) ds` by the trapezoid rule on the
/// path grid. `∇_S U` is the fourth-order difference of the neighbours
/// parallel transported to each sample (one-sided near the ends).
pub fn index_form(model: &ManifoldModel, phi: &PhiSpec, sol: &GeodesicSolution, u: &VariationField) -> Result<f64> {
    check_field(sol, u)?;
    if !sol.converged {
        return Err(LabError::Usage("the index form needs a converged solution".into()));
    }
    let k = sol.k();
    if k < 4 {
        return Err(LabError::Usage("the index form needs K >= 4".into()));
    }
    let ds = sol.path.ds();
    let x = &sol.path.samples;
    let v = &sol.velocities;
    let u = &u.vectors;
    let seg = |from: usize, to: usize, w: &DVector<f64>| -> Result<DVector<f64>> {
        let h = if to > from { ds } else { -ds };
        Ok(transport_segment(model, &x[from], &v[from], &x[to], &v[to], h, std::slice::from_ref(w))?.remove(0))
    };
    // back[m][j] = U_{j+m} transported to sample j, fwd[m][j] = U_{j−m}
    // transported to sample j.
    let mut back = vec![u.clone()];
    let mut fwd = vec![u.clone()];
    for m in 1..=4 {
        let prev_b = &back[m - 1];
        let b: Vec<DVector<f64>> = (0..=k)
            .map(|j| if j + m <= k { seg(j + 1, j, &prev_b[j + 1]) } else { Ok(DVector::zeros(0)) })
            .collect::<Result<_>>()?;
        let prev_f = &fwd[m - 1];
        let f: Vec<DVector<f64>> = (0..=k)
            .map(|j| if j >= m { seg(j - 1, j, &prev_f[j - 1]) } else { Ok(DVector::zeros(0)) })
            .collect::<Result<_>>()?;
        back.push(b);
        fwd.push(f);
    }
    let comb = |terms: &[(&DVector<f64>, f64)]| -> DVector<f64> {
        let mut acc = terms[0].0 * terms[0].1;
        for (w, c) in &terms[1..] {
            acc += *w * *c;
        }
        acc / (12.0 * ds)
    };
    let mut acc = 0.0;
    for j in 0..=k {
        let (b, f) = (|m: usize| &back[m][j], |m: usize| &fwd[m][j]);
        let du = match j {
            0 => comb(&[(b(0), -25.0), (b(1), 48.0), (b(2), -36.0), (b(3), 16.0), (b(4), -3.0)]),
            1 => comb(&[(f(1), -3.0), (b(0), -10.0), (b(1), 18.0), (b(2), -6.0), (b(3), 1.0)]),
            _ if j == k => comb(&[(f(0), 25.0), (f(1), -48.0), (f(2), 36.0), (f(3), -16.0), (f(4), 3.0)]),
            _ if j == k - 1 => comb(&[(b(1), 3.0), (f(0), 10.0), (f(1), -18.0), (f(2), 6.0), (f(3), -1.0)]),
            _ => comb(&[(f(2), 1.0), (f(1), -8.0), (b(1), 8.0), (b(2), -1.0)]),
        };
        let pack = curvature_pack(model, phi, &x[j])?;
        let s = sol.velocity(j);
        let val = g_dot(&pack.g, &du, &du) - pack.sectional_numerator(&s, &u[j]) + g_dot(&pack.hess_phi, &u[j], &u[j]);
        let w = if j == 0 || j == k { 0.5 } else { 1.0 };
        acc += w * val;
    }
    Ok(acc * ds)
}

/// Riemannian exponential `exp_p(w)` by RK4 with `steps` steps.
fn exp_map(model: &ManifoldModel, p: &[f64], w: &DVector<f64>, steps: usize) -> Result<Vec<f64>> {
    let n = p.len();
    if w.amax() == 0.0 {
        return Ok(p.to_vec());
    }
    let rhs = |y: &[f64]| -> Result<Vec<f64>> {
        let (_, gamma) = connection_at(model, &y[..n])?;
        let acc = -gamma.contract_last(&y[n..], &y[n..]);
        Ok(y[n..].iter().copied().chain(acc.iter().copied()).collect())
    };
    let h = 1.0 / steps as f64;
    let mut y: Vec<f64> = p.iter().copied().chain(w.iter().copied()).collect();
    let axpy = |a: &[f64], b: &[f64], c: f64| -> Vec<f64> { a.iter().zip(b).map(|(u, v)| u + c * v).collect() };
    for _ in 0..steps {
        let k1 = rhs(&y)?;
        let k2 = rhs(&axpy(&y, &k1, 0.5 * h))?;
        let k3 = rhs(&axpy(&y, &k2, 0.5 * h))?;
        let k4 = rhs(&axpy(&y, &k3, h))?;
        for i in 0..2 * n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y.truncate(n);
    model.check(&y)?;
    Ok(y)
}

/// Central second difference of `J/2` along `γ_u(s_k) = exp_{γ(s_k)}(u·U_k)`.
/// For even K the discrete `J` is Richardson-extrapolated against its
/// even-sample subsequence, removing the `O(Δs²)` discretization error.
pub fn second_variation_fd(
    model: &ManifoldModel,
    phi: &PhiSpec,
    sol: &GeodesicSolution,
    u: &VariationField,
    h: f64,
) -> Result<f64> {
    check_field(sol, u)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(LabError::Usage(format!("step must be positive, got {h}")));
    }
    let richardson = sol.k() % 2 == 0 && sol.k() >= 4;
    let family = |t: f64| -> Result<f64> {
        let samples: Vec<Vec<f64>> = sol
            .path
            .samples
            .iter()
            .zip(&u.vectors)
            .map(|(p, w)| exp_map(model, p, &(w * t), 8))
            .collect::<Result<_>>()?;
        let fine = crate::geodesic::DiscretePath::new(samples, sol.s_bar())?;
        let j_fine = crate::geodesic::j_functional(model, phi, &fine)?;
        if !richardson {
            return Ok(j_fine);
        }
        let coarse = crate::geodesic::DiscretePath::new(fine.samples.iter().step_by(2).cloned().collect(), sol.s_bar())?;
        let j_coarse = crate::geodesic::j_functional(model, phi, &coarse)?;
        Ok((4.0 * j_fine - j_coarse) / 3.0)
    };
    let jp = family(h)?;
    let j0 = family(0.0)?;
    let jm = family(-h)?;
    Ok(0.5 * (jp - 2.0 * j0 + jm) / (h * h))
}

/// `∫ζ²Rc(S,S) − ∫ζ²Δφ ≤ n∫ζ′²`, with both curvature traces taken over a
/// parallel orthonormal frame.
pub fn trace_index_inequality(
    model: &ManifoldModel,
    phi: &PhiSpec,
    sol: &GeodesicSolution,
    zeta: &TestFunction,
) -> Result<InequalityLedger> {
    trace_index_inequality_with(model, phi, sol, zeta, LedgerOptions::default())
}

pub fn trace_index_inequality_with(
    model: &ManifoldModel,
    phi: &PhiSpec,
    sol: &GeodesicSolution,
    zeta: &TestFunction,
    opts: LedgerOptions,
) -> Result<InequalityLedger> {
    require_vanishing(zeta, sol)?;
    let n = model.dim() as f64;
    let g0 = model.metric(sol.path.x());
    let seed = Frame::from_chart(&g0).basis;
    let (sides, lev, change) = refined(sol, zeta, opts, |nd| {
        let frames = frames_along(model, nd, seed.clone())?;
        let pk = packs(model, phi, nd)?;
        let vals: Vec<f64> = pk
            .iter()
            .zip(&frames)
            .zip(&nd.v)
            .map(|((p, fr), v)| {
                let s = DVector::from_column_slice(v);
                fr.iter()
                    .map(|e| p.sectional_numerator(&s, e) - g_dot(&p.hess_phi, e, e))
                    .sum::<f64>()
            })
            .collect();
        let lhs = integrate(nd, zeta, |i, z, _| z * z * vals[i]);
        let rhs = integrate(nd, zeta, |_, _, dz| n * dz * dz);
        let frame_drift = pk
            .iter()
            .zip(&frames)
            .map(|(p, fr)| crate::geometry::gram_defect(&p.g, fr))
            .fold(0.0, f64::max);
        Ok(Sides { lhs, rhs, aux: frame_drift })
    })?;
    let (big_c, _) = conserved_quantity(model, phi, sol);
    Ok(ledger("trace_index", model, phi.c(), big_c, sol, zeta, sides, lev, change))
}

/// `−∫ζ²Δ_fφ + ∫ζ²Rc_f(S,S) ≤ ∫(nζ′² − 2ζζ′⟨∇f,S⟩)`. For `φ = cR` on a
/// soliton, `aux_residual` is `|lhs − 2c∫ζ²|Rc|²|`.
pub fn weighted_index_inequality(
    model: &ManifoldModel,
    phi: &PhiSpec,
    sol: &GeodesicSolution,
    zeta: &TestFunction,
) -> Result<InequalityLedger> {
    weighted_index_inequality_with(model, phi, sol, zeta, LedgerOptions::default())
}

pub fn weighted_index_inequality_with(
    model: &ManifoldModel,
    phi: &PhiSpec,
    sol: &GeodesicSolution,
    zeta: &TestFunction,
    opts: LedgerOptions,
) -> Result<InequalityLedger> {
    require_vanishing(zeta, sol)?;
    let n = model.dim() as f64;
    let soliton_c = phi.c().filter(|_| model.is_soliton());
    let (sides, lev, change) = refined(sol, zeta, opts, |nd| {
        let pk = packs(model, phi, nd)?;
        let bulk: Vec<f64> = pk
            .iter()
            .zip(&nd.v)
            .map(|(p, v)| {
                let s = DVector::from_column_slice(v);
                -p.f_lap_phi + g_dot(&p.ricci_f, &s, &s)
            })
            .collect();
        let df_s: Vec<f64> = pk
            .iter()
            .zip(&nd.v)
            .map(|(p, v)| g_dot(&p.g, &p.grad_f, &DVector::from_column_slice(v)))
            .collect();
        let lhs = integrate(nd, zeta, |i, z, _| z * z * bulk[i]);
        let rhs = integrate(nd, zeta, |i, z, dz| n * dz * dz - 2.0 * z * dz * df_s[i]);
        let aux = match soliton_c {
            Some(c) => (lhs - 2.0 * c * integrate(nd, zeta, |i, z, _| z * z * pk[i].ricci_norm2)).abs(),
            None => 0.0,
        };
        Ok(Sides { lhs, rhs, aux })
    })?;
    let (big_c, _) = conserved_quantity(model, phi, sol);
    Ok(ledger("weighted_index", model, phi.c(), big_c, sol, zeta, sides, lev, change))
}

fn ricci_rhs(n: f64, c: f64, big_c: f64, zz: f64, zdz: f64) -> f64 {
    n / (2.0 * c) * zz + (big_c + 2.0 * c).sqrt() / c * zdz
}

fn ricci_setup(
    model: &ManifoldModel,
    sol: &GeodesicSolution,
    zeta: &TestFunction,
    c: f64,
) -> Result<(PhiSpec, f64)> {
    require_vanishing(zeta, sol)?;
    let phi = PhiSpec::CTimesR(c);
    phi.validate()?;
    let (big_c, _) = conserved_quantity(model, &phi, sol);
    if big_c + 2.0 * c < 0.0 {
        return Err(LabError::Data(format!(
            "C + 2c = {} is negative; the solution is not a valid cR-geodesic",
            big_c + 2.0 * c
        )));
    }
    Ok((phi, big_c))
}

/// `∫ζ²|Rc|² ≤ (n/2c)∫ζ′² + (√(C+2c)/c)∫|ζζ′|` for `φ = cR`.
pub fn ricci_l2_inequality(
    model: &ManifoldModel,
    sol: &GeodesicSolution,
    zeta: &TestFunction,
    c: f64,
) -> Result<InequalityLedger> {
    ricci_l2_inequality_with(model, sol, zeta, c, LedgerOptions::default())
}

pub fn ricci_l2_inequality_with(
    model: &ManifoldModel,
    sol: &GeodesicSolution,
    zeta: &TestFunction,
    c: f64,
    opts: LedgerOptions,
) -> Result<InequalityLedger> {
    let (phi, big_c) = ricci_setup(model, sol, zeta, c)?;
    let n = model.dim() as f64;
    let (sides, lev, change) = refined(sol, zeta, opts, |nd| {
        let pk = packs(model, &phi, nd)?;
        let lhs = integrate(nd, zeta, |i, z, _| z * z * pk[i].ricci_norm2);
        let zz = integrate(nd, zeta, |_, _, dz| dz * dz);
        let zdz = integrate(nd, zeta, |_, z, dz| (z * dz).abs());
        Ok(Sides {
            lhs,
            rhs: ricci_rhs(n, c, big_c, zz, zdz),
            aux: 0.0,
        })
    })?;
    Ok(ledger("ricci_l2", model, Some(c), big_c, sol, zeta, sides, lev, change))
}

/// `¼∫ζ²|∇R|²` against the right side of [`ricci_l2_inequality`]. On
/// solitons `aux_residual` is the largest of `||∇R| − 2|Rc(∇f)||` and
/// `(|∇R| − 2|Rc|)₊` along the nodes.
pub fn grad_r_inequality(
    model: &ManifoldModel,
    sol: &GeodesicSolution,
    zeta: &TestFunction,
    c: f64,
) -> Result<InequalityLedger> {
    grad_r_inequality_with(model, sol, zeta, c, LedgerOptions::default())
}

pub fn grad_r_inequality_with(
    model: &ManifoldModel,
    sol: &GeodesicSolution,
    zeta: &TestFunction,
    c: f64,
    opts: LedgerOptions,
) -> Result<InequalityLedger> {
    let (phi, big_c) = ricci_setup(model, sol, zeta, c)?;
    let n = model.dim() as f64;
    let soliton = model.is_soliton();
    let (sides, lev, change) = refined(sol, zeta, opts, |nd| {
        let pk = packs(model, &phi, nd)?;
        let grad_r2: Vec<f64> = pk.iter().map(|p| g_dot(&p.g, &p.grad_r, &p.grad_r)).collect();
        let aux = if soliton {
            pk.iter()
                .zip(&grad_r2)
                .map(|(p, gr2)| {
                    let gr = gr2.max(0.0).sqrt();
                    let w = &p.ricci * &p.grad_f;
                    let rc_gf = g_dot(&p.g_inv, &w, &w).max(0.0).sqrt();
                    let excess = (gr - 2.0 * p.ricci_norm2.max(0.0).sqrt()).max(0.0);
                    (gr - 2.0 * rc_gf).abs().max(excess)
                })
                .fold(0.0, f64::max)
        } else {
            0.0
        };
        let lhs = 0.25 * integrate(nd, zeta, |i, z, _| z * z * grad_r2[i]);
        let zz = integrate(nd, zeta, |_, _, dz| dz * dz);
        let zdz = integrate(nd, zeta, |_, z, dz| (z * dz).abs());
        Ok(Sides {
            lhs,
            rhs: ricci_rhs(n, c, big_c, zz, zdz),
            aux,
        })
    })?;
    Ok(ledger("grad_r", model, Some(c), big_c, sol, zeta, sides, lev, change))
}

/// `(n + √(1+2c))/c`, the bound on the right side of the `|Rc|²`
/// inequality for the trapezoid profile and `C < 1`.
pub fn trapezoid_bound(n: usize, c: f64) -> f64 {
    (n as f64 + (1.0 + 2.0 * c).sqrt()) / c
}
