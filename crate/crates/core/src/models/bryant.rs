//! Rotationally symmetric steady soliton `dr² + w(r)² g_sphere` with
//! potential `f(r)`, obtained by shooting the soliton ODE
//!
//! ```text
//! f″ = (n−1) w″/w,
//! w″/w = (n−2)(1 − w′²)/w² + f′ w′/w,
//! ```
//!
//! from smooth-origin data `w(0)=0, w′(0)=1, f′(0)=0, f″(0)=shoot_param`.
//! `R + |∇f|²` is a first integral; the metric is rescaled so it equals 1.
//! After rescaling every admissible shoot parameter yields the same profile,
//! with `f″(0) = −1/n` and `R(0) = 1`.

use std::path::Path;

use crate::error::{LabError, Result};
use crate::ode::{dopri45, AdaptiveOptions};
use crate::series::Series;

use super::RadialFields;

pub const DEFAULT_SHOOT_PARAM: f64 = -0.2;

/// Number of Taylor coefficients (in r) kept for the origin expansion.
const ORIGIN_ORDER: usize = 41;
/// Normalized radius below which the origin expansion is used.
const SWITCH_RADIUS: f64 = 0.5;
/// Integration starts at this multiple of the natural length `1/√|f″(0)|`.
const START_FRACTION: f64 = 0.15;
/// Length of the local Taylor jets propagated from interpolated states.
const JET_LEN: usize = 5;

/// Power-series solution of the soliton ODE about the smooth origin.
#[derive(Clone, Debug)]
pub struct OriginSeries {
    n: usize,
    /// `w(r)`, odd.
    pub w: Series,
    /// `f′(r)`, odd.
    pub fp: Series,
    alpha_q: Series,
    beta_q: Series,
    f_q: Series,
    scalar_q: Series,
}

impl OriginSeries {
    pub fn new(n: usize, f2: f64) -> Self {
        let len = ORIGIN_ORDER;
        let (nf, n1, n2) = (n as f64, (n - 1) as f64, (n - 2) as f64);
        let _ = nf;
        let mut w = Series::zeros(len);
        let mut p = Series::zeros(len);
        w.0[1] = 1.0;
        p.0[1] = f2;
        w.0[3] = f2 / (6.0 * n1);
        let one = Series::constant(len, 1.0);
        // Order j of the f-equation and order j+1 of the w-equation are
        // linear in (w_{j+2}, p_j); solve that 2×2 system order by order.
        let mut j = 3;
        while j + 2 < len {
            let wd = w.derivative();
            let wdd = wd.derivative();
            let pd = p.derivative();
            let r1 = &(&(&w * &wdd) - &(&one - &(&wd * &wd)).scale(n2)) - &(&(&p * &wd) * &w);
            let r2 = &(&w * &pd) - &wdd.scale(n1);
            let jf = j as f64;
            let a11 = (jf + 2.0) * (jf + 1.0) + 2.0 * n2 * (jf + 2.0);
            let a12 = -1.0;
            let a21 = -n1 * (jf + 2.0) * (jf + 1.0);
            let a22 = jf;
            let (b1, b2) = (-r1.coeff(j + 1), -r2.coeff(j));
            let det = a11 * a22 - a12 * a21;
            w.0[j + 2] = (b1 * a22 - a12 * b2) / det;
            p.0[j] = (a11 * b2 - a21 * b1) / det;
            j += 2;
        }
        let wd = w.derivative();
        let wdd = wd.derivative();
        let u = w.shift_down(1);
        let alpha = &u * &u;
        let beta = (&Series::constant(len, 1.0) - &alpha).shift_down(2);
        let f = p.integral(0.0);
        let u_inv = u.recip();
        let curv_a = &wdd.shift_down(1) * &u_inv;
        let curv_b = &(&one - &(&wd * &wd)).shift_down(2) * &(&u_inv * &u_inv);
        let scalar = (&curv_a.scale(-2.0) + &curv_b.scale(n2)).scale(n1);
        // the top few coefficients are polluted by truncation of the shifts
        let trim = |s: Series| {
            let mut e = s.even_part();
            let keep = e.len() - 2;
            e.0.truncate(keep);
            e
        };
        Self {
            n,
            w,
            fp: p,
            alpha_q: trim(alpha),
            beta_q: trim(beta),
            f_q: trim(f),
            scalar_q: trim(scalar),
        }
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    /// `(w, w′, f′, f)` at radius `r`.
    pub fn state(&self, r: f64) -> [f64; 4] {
        let [w, wp, _] = self.w.eval2(r);
        let [fp, _, _] = self.fp.eval2(r);
        let [f, _, _] = self.f_q.eval2(r * r);
        [w, wp, fp, f]
    }

    pub fn radial_fields(&self, q: f64) -> RadialFields {
        RadialFields {
            alpha: self.alpha_q.eval2(q),
            beta: self.beta_q.eval2(q),
            f: self.f_q.eval2(q),
            scalar: self.scalar_q.eval2(q),
        }
    }
}

/// Soliton ODE right-hand side for state `(w, w′, f′)`.
fn soliton_rhs(n: usize, y: &[f64]) -> [f64; 3] {
    let (n1, n2) = ((n - 1) as f64, (n - 2) as f64);
    let (w, wp, p) = (y[0], y[1], y[2]);
    let wpp = n2 * (1.0 - wp * wp) / w + p * wp;
    [wp, wpp, n1 * wpp / w]
}

fn scalar_from_state(n: usize, y: &[f64]) -> f64 {
    let (n1, n2) = ((n - 1) as f64, (n - 2) as f64);
    let (w, wp) = (y[0], y[1]);
    let wpp = soliton_rhs(n, y)[1];
    n1 * (-2.0 * wpp / w + n2 * (1.0 - wp * wp) / (w * w))
}

/// Monotonicity diagnostics of a shot profile.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProfileDiagnostics {
    pub w_increasing: bool,
    pub f_decreasing: bool,
    pub scalar_positive: bool,
    pub scalar_decreasing: bool,
    /// max |(R + f′²) − H| before rescaling.
    pub hamiltonian_drift: f64,
}

/// Sampled, normalized warped-product soliton profile.
#[derive(Clone, Debug)]
pub struct BryantProfile {
    pub n: usize,
    pub r_grid: Vec<f64>,
    pub w: Vec<f64>,
    pub wp: Vec<f64>,
    pub fp: Vec<f64>,
    /// `f` at the nodes, integrated from `f(0) = 0`.
    pub f: Vec<f64>,
    /// Cubic Hermite on (w, w′, f′) with ODE-consistent derivatives.
    pub interpolation_order: usize,
    /// `R + |∇f|²` before rescaling.
    pub hamiltonian_constant: f64,
    /// Metric scale factor λ applied (`g ↦ λ g`).
    pub scale: f64,
    pub shoot_param: f64,
    pub diagnostics: ProfileDiagnostics,
    wpp: Vec<f64>,
    fpp: Vec<f64>,
}

/// Shoot the soliton ODE to `r_max` (unnormalized units) with local error
/// `tol`, then rescale so that `R + |∇f|² = 1`.
pub fn bryant_solve(n: usize, shoot_param: f64, r_max: f64, tol: f64) -> Result<BryantProfile> {
    if !(3..=6).contains(&n) {
        return Err(LabError::Spec(format!("bryant dimension {n} outside 3..=6")));
    }
    if !(tol > 0.0) || !(r_max > 0.0) || !shoot_param.is_finite() {
        return Err(LabError::Spec(format!(
            "invalid shooting inputs: shoot_param = {shoot_param}, r_max = {r_max}, tol = {tol}"
        )));
    }
    let r0_curv = -(n as f64) * shoot_param;
    if r0_curv <= 0.0 {
        return Err(LabError::Shooting {
            r: 0.0,
            reason: format!(
                "R(0) = -n f''(0) = {r0_curv} is not positive; the profile is flat or \
                 negatively curved, not a positively curved steady soliton"
            ),
        });
    }
    let length = 1.0 / shoot_param.abs().sqrt();
    let r_start = START_FRACTION * length;
    if r_max <= 4.0 * r_start {
        return Err(LabError::Spec(format!(
            "r_max = {r_max} too small for shoot_param = {shoot_param}"
        )));
    }
    let origin = OriginSeries::new(n, shoot_param);
    let [w0, wp0, p0, f_start] = origin.state(r_start);
    let mut rhs = |_r: f64, y: &[f64], dy: &mut [f64]| {
        dy.copy_from_slice(&soliton_rhs(n, y));
        Ok(())
    };
    let opts = AdaptiveOptions {
        rtol: 1e-2 * tol,
        atol: 1e-2 * tol,
        h_init: 1e-3 * length,
        h_max: 0.02 * length,
        h_min: 1e-14 * length,
        max_steps: 50_000_000,
    };
    let nodes = dopri45(&mut rhs, r_start, &[w0, wp0, p0], r_max, opts, |r, y| {
        if !y.iter().all(|v| v.is_finite()) {
            return Err(LabError::Integration(format!("non-finite state at r = {r}")));
        }
        if y[0] <= 0.0 {
            return Err(LabError::Shooting {
                r,
                reason: "w reached 0 (closed degeneration)".into(),
            });
        }
        if y[1] <= 0.0 {
            return Err(LabError::Shooting {
                r,
                reason: "w' reached 0 (cylindrical or closing degeneration)".into(),
            });
        }
        Ok(())
    })?;
    let ham: Vec<f64> = nodes
        .iter()
        .map(|(_, y)| scalar_from_state(n, y) + y[2] * y[2])
        .collect();
    let h_const = median(&ham);
    let drift = ham.iter().fold(0.0_f64, |m, v| m.max((v - h_const).abs()));
    if drift > 10.0 * tol {
        return Err(LabError::Integration(format!(
            "first integral R + |grad f|^2 drifted by {drift:e} > 10 tol"
        )));
    }
    if h_const <= 0.0 {
        return Err(LabError::Shooting {
            r: 0.0,
            reason: format!("hamiltonian constant {h_const} is not positive"),
        });
    }
    let sq = h_const.sqrt();
    let r_grid: Vec<f64> = nodes.iter().map(|(r, _)| r * sq).collect();
    let w: Vec<f64> = nodes.iter().map(|(_, y)| y[0] * sq).collect();
    let wp: Vec<f64> = nodes.iter().map(|(_, y)| y[1]).collect();
    let fp: Vec<f64> = nodes.iter().map(|(_, y)| y[2] / sq).collect();
    let mut profile = BryantProfile::from_nodes(n, r_grid, w, wp, fp, f_start)?;
    profile.hamiltonian_constant = h_const;
    profile.scale = h_const;
    profile.shoot_param = shoot_param;
    profile.diagnostics.hamiltonian_drift = drift;
    Ok(profile)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let m = s.len() / 2;
    if s.len() % 2 == 0 {
        0.5 * (s[m - 1] + s[m])
    } else {
        s[m]
    }
}

impl BryantProfile {
    /// Assemble a normalized profile from node data; `f0` is `f` at the
    /// first node.
    pub fn from_nodes(
        n: usize,
        r_grid: Vec<f64>,
        w: Vec<f64>,
        wp: Vec<f64>,
        fp: Vec<f64>,
        f0: f64,
    ) -> Result<Self> {
        let len = r_grid.len();
        if len < 2 || w.len() != len || wp.len() != len || fp.len() != len {
            return Err(LabError::Data("profile columns have inconsistent lengths".into()));
        }
        if r_grid[0] <= 0.0 || r_grid.windows(2).any(|p| p[1] <= p[0]) {
            return Err(LabError::Data("r grid must be positive and increasing".into()));
        }
        if w.iter().any(|v| *v <= 0.0) {
            return Err(LabError::Data("w must be positive on the grid".into()));
        }
        let mut wpp = Vec::with_capacity(len);
        let mut fpp = Vec::with_capacity(len);
        for k in 0..len {
            let d = soliton_rhs(n, &[w[k], wp[k], fp[k]]);
            wpp.push(d[1]);
            fpp.push(d[2]);
        }
        let mut f = Vec::with_capacity(len);
        f.push(f0);
        for k in 0..len - 1 {
            let h = r_grid[k + 1] - r_grid[k];
            let inc = h * 0.5 * (fp[k] + fp[k + 1]) + h * h / 12.0 * (fpp[k] - fpp[k + 1]);
            f.push(f[k] + inc);
        }
        let scalar: Vec<f64> = (0..len)
            .map(|k| scalar_from_state(n, &[w[k], wp[k], fp[k]]))
            .collect();
        let diagnostics = ProfileDiagnostics {
            w_increasing: wp.iter().all(|v| *v > 0.0),
            f_decreasing: fp.iter().all(|v| *v < 0.0),
            scalar_positive: scalar.iter().all(|v| *v > 0.0),
            scalar_decreasing: scalar.windows(2).all(|p| p[1] <= p[0]),
            hamiltonian_drift: 0.0,
        };
        Ok(Self {
            n,
            r_grid,
            w,
            wp,
            fp,
            f,
            interpolation_order: 3,
            hamiltonian_constant: 1.0,
            scale: 1.0,
            shoot_param: -1.0 / n as f64,
            diagnostics,
            wpp,
            fpp,
        })
    }

    pub fn r_max(&self) -> f64 {
        *self.r_grid.last().unwrap()
    }

    /// Normalized `R` at every node.
    pub fn scalar_curvature(&self) -> Vec<f64> {
        (0..self.r_grid.len())
            .map(|k| scalar_from_state(self.n, &[self.w[k], self.wp[k], self.fp[k]]))
            .collect()
    }

    /// Interpolated `(w, w′, f′, f)` at radius `r` inside the grid.
    pub fn state(&self, r: f64) -> [f64; 4] {
        let last = self.r_grid.len() - 1;
        let k = self.r_grid.partition_point(|&v| v <= r).clamp(1, last) - 1;
        let h = self.r_grid[k + 1] - self.r_grid[k];
        let t = (r - self.r_grid[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let herm = |y0: f64, m0: f64, y1: f64, m1: f64| {
            h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1
        };
        let w = herm(self.w[k], self.wp[k], self.w[k + 1], self.wp[k + 1]);
        let wp = herm(self.wp[k], self.wpp[k], self.wp[k + 1], self.wpp[k + 1]);
        let fp = herm(self.fp[k], self.fpp[k], self.fp[k + 1], self.fpp[k + 1]);
        let t4 = t2 * t2;
        let i00 = 0.5 * t4 - t3 + t;
        let i10 = 0.25 * t4 - 2.0 / 3.0 * t3 + 0.5 * t2;
        let i01 = -0.5 * t4 + t3;
        let i11 = 0.25 * t4 - t3 / 3.0;
        let f = self.f[k]
            + h * (i00 * self.fp[k]
                + i10 * h * self.fpp[k]
                + i01 * self.fp[k + 1]
                + i11 * h * self.fpp[k + 1]);
        [w, wp, fp, f]
    }

    /// Write `r,w,wp,fp` with 17 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        wtr.write_record(["r", "w", "wp", "fp"])?;
        for k in 0..self.r_grid.len() {
            wtr.write_record([
                format!("{:.16e}", self.r_grid[k]),
                format!("{:.16e}", self.w[k]),
                format!("{:.16e}", self.wp[k]),
                format!("{:.16e}", self.fp[k]),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Read a normalized profile written by [`BryantProfile::write_csv`].
    pub fn read_csv(path: &Path, n: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["r", "w", "wp", "fp"] {
            return Err(LabError::Data(format!(
                "unexpected profile header {:?}",
                headers
            )));
        }
        let (mut r, mut w, mut wp, mut fp) = (vec![], vec![], vec![], vec![]);
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| LabError::Data(format!("bad number {:?}: {e}", &rec[i])))
            };
            r.push(parse(0)?);
            w.push(parse(1)?);
            wp.push(parse(2)?);
            fp.push(parse(3)?);
        }
        let origin = OriginSeries::new(n, -1.0 / n as f64);
        let f0 = r.first().map_or(0.0, |r0| origin.state(*r0)[3]);
        Self::from_nodes(n, r, w, wp, fp, f0)
    }
}

/// Normalized Bryant geometry: origin expansion near `r = 0`, interpolated
/// profile with locally propagated ODE jets elsewhere.
#[derive(Clone, Debug)]
pub struct BryantModel {
    profile: BryantProfile,
    origin: OriginSeries,
    switch_radius: f64,
    extent: f64,
}

impl BryantModel {
    pub fn build(n: usize, shoot_param: f64, extent: f64) -> Result<Self> {
        let mut param = shoot_param;
        let mut last_err = None;
        for _ in 0..8 {
            let target = if param < 0.0 {
                1.05 * extent / (-(n as f64) * param).sqrt()
            } else {
                extent
            };
            match bryant_solve(n, param, target, 1e-10) {
                Ok(profile) => return Self::from_profile(profile, extent),
                Err(e @ LabError::Shooting { .. }) => {
                    log::warn!("bryant shooting with f''(0) = {param} degenerated: {e}");
                    last_err = Some(e);
                    // bisect toward the default parameter
                    param = 0.5 * (param + DEFAULT_SHOOT_PARAM);
                    if (param - DEFAULT_SHOOT_PARAM).abs() < 1e-3 {
                        param = DEFAULT_SHOOT_PARAM;
                    }
                }
                Err(e) => return Err(LabError::Construction(e.to_string())),
            }
        }
        Err(LabError::Construction(format!(
            "bryant shooting failed after retries: {}",
            last_err.map(|e| e.to_string()).unwrap_or_default()
        )))
    }

    pub fn from_profile(profile: BryantProfile, extent: f64) -> Result<Self> {
        let n = profile.n;
        let switch_radius = SWITCH_RADIUS.max(profile.r_grid[0]);
        if profile.r_max() <= switch_radius {
            return Err(LabError::Construction("profile grid too short".into()));
        }
        let extent = extent.min(profile.r_max());
        Ok(Self {
            origin: OriginSeries::new(n, -1.0 / n as f64),
            profile,
            switch_radius,
            extent,
        })
    }

    pub fn dimension(&self) -> usize {
        self.profile.n
    }

    pub fn profile(&self) -> &BryantProfile {
        &self.profile
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn switch_radius(&self) -> f64 {
        self.switch_radius
    }

    pub fn radial_fields(&self, q: f64) -> RadialFields {
        let r = q.sqrt();
        if r < self.switch_radius {
            return self.origin.radial_fields(q);
        }
        let [w0, wp0, p0, f0] = self.profile.state(r);
        jet_fields(self.profile.n, r, w0, wp0, p0, f0)
    }
}

/// Propagate the ODE jet through `(w, w′, f′)` at `r` and convert to
/// q-derivatives of the Cartesian metric coefficients.
fn jet_fields(n: usize, r: f64, w0: f64, wp0: f64, p0: f64, f0: f64) -> RadialFields {
    let (n1, n2) = ((n - 1) as f64, (n - 2) as f64);
    let one = Series::constant(JET_LEN, 1.0);
    let mut w = Series::zeros(JET_LEN);
    w.0[0] = w0;
    w.0[1] = wp0;
    let mut p = Series::constant(JET_LEN, p0);
    let accel = |w: &Series, p: &Series| {
        let wd = w.derivative();
        let wdd = &(&(&one - &(&wd * &wd)).div(w)).scale(n2) + &(p * &wd);
        (wd, wdd)
    };
    for _ in 0..JET_LEN - 1 {
        let (_, wdd) = accel(&w, &p);
        let pd = wdd.div(&w).scale(n1);
        w = wdd.integral(wp0).integral(w0);
        p = pd.integral(p0);
    }
    let (wd, wdd) = accel(&w, &p);
    let w_inv = w.recip();
    let scalar = (&(&wdd * &w_inv).scale(-2.0)
        + &(&(&one - &(&wd * &wd)) * &(&w_inv * &w_inv)).scale(n2))
        .scale(n1);
    let rs = Series::variable(JET_LEN, r);
    let r_inv = rs.recip();
    let u = &w * &r_inv;
    let alpha = &u * &u;
    let beta = &(&one - &alpha) * &(&r_inv * &r_inv);
    let f = p.integral(f0);
    let to_q = |s: &Series| {
        let (d1, d2) = (s.coeff(1), 2.0 * s.coeff(2));
        [s.coeff(0), d1 / (2.0 * r), (d2 - d1 / r) / (4.0 * r * r)]
    };
    RadialFields {
        alpha: to_q(&alpha),
        beta: to_q(&beta),
        f: to_q(&f),
        scalar: to_q(&scalar),
    }
}
