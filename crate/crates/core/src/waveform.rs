//! Emitted-photon waveform in the pulse frame.
//!
//! Conventions:
//! * `z` is the electron coordinate and `R(z)` the matching longitudinal
//!   waveguide coordinate ([`Routing`]).
//! * The field is observed at the waveguide output, `r_par = R(z_end)`.
//! * `r_tilde = r_par - v_g t` is the pulse-frame coordinate. In the weak
//!   dispersion limit an emission point `z` maps to `r_tilde(z) = R(z) - (v_g/v) z`.
//! * `beta2` is the dispersion coefficient in seconds: the phase accumulated
//!   over a propagation length `r` at detuning `dw` is `beta2 dw^2 r / v_g`.
//!   [`dispersion_from_gvd`] converts a group-velocity dispersion in s^2/m.
//!
//! The envelope is the slowly varying part of `u_z(R0, z)` at the phase-matched
//! frequency, with the carrier `exp(i w z / v)` removed.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Routing;
use crate::numeric::{trapezoid, CubicSpline};

pub const MIN_ENVELOPE_SAMPLES: usize = 512;
pub const DEGENERATE_SLOPE_GAP: f64 = 1e-6;

/// `beta2` (s) from a group-velocity dispersion `d^2k/dw^2` (s^2/m).
pub fn dispersion_from_gvd(gvd: f64, v_g: f64) -> f64 {
    0.5 * gvd * v_g
}

/// Complex envelope sampled along the electron trajectory.
#[derive(Debug, Clone)]
pub struct ModeEnvelope {
    pub z: Vec<f64>,
    pub u: Vec<Complex64>,
    re: CubicSpline,
    im: CubicSpline,
}

impl ModeEnvelope {
    pub fn new(z: Vec<f64>, u: Vec<Complex64>) -> Result<Self> {
        if z.len() < MIN_ENVELOPE_SAMPLES || z.len() != u.len() {
            return Err(Error::InvalidInput(format!(
                "envelope needs >= {MIN_ENVELOPE_SAMPLES} matching samples (got {} and {})",
                z.len(),
                u.len()
            )));
        }
        if z.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("envelope coordinates must be strictly increasing".into()));
        }
        let re = CubicSpline::new(&z, &u.iter().map(|c| c.re).collect::<Vec<_>>())?;
        let im = CubicSpline::new(&z, &u.iter().map(|c| c.im).collect::<Vec<_>>())?;
        Ok(Self { z, u, re, im })
    }

    /// Samples `f` on `n` uniform points over `[0, length]`.
    pub fn from_fn(length: f64, n: usize, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let z = crate::numeric::linspace(0.0, length, n);
        let u = z.iter().map(|&x| f(x)).collect();
        Self::new(z, u)
    }

    pub fn uniform(length: f64, n: usize) -> Result<Self> {
        Self::from_fn(length, n, |_| Complex64::new(1.0, 0.0))
    }

    pub fn start(&self) -> f64 {
        self.z[0]
    }

    pub fn end(&self) -> f64 {
        self.z[self.z.len() - 1]
    }

    pub fn length(&self) -> f64 {
        self.end() - self.start()
    }

    /// Zero outside the sampled interval.
    pub fn eval(&self, z: f64) -> Complex64 {
        if z < self.start() || z > self.end() {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::new(self.re.eval(z), self.im.eval(z))
    }

    /// Length over which the envelope changes: the RMS variation length
    /// `sqrt(int |u|^2 / int |u'|^2)`, capped at the length.
    ///
    /// An envelope that starts abruptly is further capped at
    /// `int |u|^2 / (8 |u(start)|^2)`. Dispersion turns that edge into Fresnel
    /// ringing which the delta path cannot represent; the correlation loss is
    /// about `width |u(start)|^2 / int |u|^2`, so the cap keeps it below 1%
    /// under the default switch threshold. The end of the trajectory needs no
    /// cap because the kernel width vanishes at the observation point.
    pub fn feature_scale(&self) -> f64 {
        let p: Vec<f64> = self.u.iter().map(|c| c.norm_sqr()).collect();
        let d: Vec<f64> = self
            .z
            .iter()
            .map(|&x| Complex64::new(self.re.derivative(x), self.im.derivative(x)).norm_sqr())
            .collect();
        let (a, b) = (trapezoid(&self.z, &p), trapezoid(&self.z, &d));
        let smooth = if b > 0.0 { (a / b).sqrt().min(self.length()) } else { self.length() };
        if p[0] > 0.0 {
            smooth.min(a / (8.0 * p[0]))
        } else {
            smooth
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformParams {
    /// Electron velocity (m/s).
    pub v: f64,
    /// Group velocity at the centre frequency (m/s).
    pub v_g: f64,
    /// Dispersion coefficient (s).
    pub beta2: f64,
    /// Centre frequency (rad/s).
    pub omega_m: f64,
    #[serde(default)]
    pub routing: Routing,
}

impl WaveformParams {
    fn validate(&self) -> Result<()> {
        if !(self.v > 0.0 && self.v_g > 0.0 && self.beta2.is_finite() && self.omega_m > 0.0) {
            return Err(Error::InvalidInput(format!(
                "waveform needs positive velocities and frequency and finite dispersion (v {}, v_g {}, beta2 {}, omega {})",
                self.v, self.v_g, self.beta2, self.omega_m
            )));
        }
        Ok(())
    }

    /// Pulse-frame coordinate of an emission point in the weak-dispersion limit.
    pub fn pulse_coordinate(&self, z: f64) -> f64 {
        self.routing.eval(z) - self.v_g / self.v * z
    }

    /// `dR/dz - v_g/v`; its zeros have infinite phase-matching bandwidth.
    pub fn slope_gap(&self, z: f64) -> f64 {
        self.routing.derivative(z) - self.v_g / self.v
    }

    /// Predicted duration `L |1/v_g - 1/v|` for straight routing.
    pub fn duration_law(&self, length: f64) -> f64 {
        length * (1.0 / self.v_g - 1.0 / self.v).abs()
    }

    /// Integral of the kernel over its argument, shared by both synthesis paths.
    fn delta_weight(&self) -> f64 {
        (4.0 * PI * self.v * self.v / self.v_g).sqrt()
    }
}

/// Closed-form dispersive kernel `K(z; r_par, t)`.
///
/// Equals the detuning integral `int dw exp(i dw X / v + i beta2 dw^2 D / v_g)`
/// divided by `sqrt(pi v_g)`, where `X = z - (v/v_g)(R(z) - r_tilde)` and
/// `D = r_par - R(z)`.
pub fn stationary_phase_kernel(z: f64, r_par: f64, t: f64, beta2: f64, v: f64, v_g: f64, routing: &Routing) -> Result<Complex64> {
    if beta2 == 0.0 {
        return Err(Error::InvalidInput("kernel needs nonzero dispersion; use the delta path".into()));
    }
    let r = routing.eval(z);
    let d = r_par - r;
    if d == 0.0 {
        return Err(Error::SingularPoint);
    }
    let r_tilde = r_par - v_g * t;
    let x = z - v / v_g * (r - r_tilde);
    Ok(kernel_value(x, beta2 * d, v, v_g))
}

fn kernel_value(x: f64, bd: f64, v: f64, v_g: f64) -> Complex64 {
    let a = bd * v * v / v_g;
    let phase = -x * x / (4.0 * a) + 0.25 * PI * bd.signum();
    Complex64::from_polar(1.0 / bd.abs().sqrt(), phase)
}

/// Kernel with the detuning integral apodized by `exp(-dw^2 / (2 sigma^2))`:
/// `v / sqrt(v_g s) exp(-x^2 / (4 s))` with `s = v^2 / (2 sigma^2) - i a`.
/// Its integral over `x` equals the undamped one, so the delta limit is kept.
fn damped_kernel_value(x: f64, s: Complex64, v: f64, v_g: f64) -> Complex64 {
    v / (v_g * s).sqrt() * (-x * x / (4.0 * s)).exp()
}

/// Detuning bandwidth of the kernel quadrature, a third of the nearest
/// second phase-matching root.
///
/// Quadratic dispersion phase matches a second time at
/// `dw_2 = |v_g/v - R'| / |beta2 R'|`, far outside the validity of the
/// expansion. The apodization suppresses that replica's amplitude by `e^-4.5`
/// and vanishes as `beta2 -> 0`, so the delta limit is recovered. A narrower
/// band would blur the sharp pulse edge emitted next to the output.
fn detuning_bandwidth(params: &WaveformParams, scan_z: &[f64]) -> f64 {
    let second = scan_z
        .iter()
        .map(|&z| {
            let rp = params.routing.derivative(z);
            (params.v_g / params.v - rp).abs() / (params.beta2 * rp).abs()
        })
        .fold(f64::INFINITY, f64::min);
    second / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthesisPath {
    Delta,
    Kernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformOptions {
    pub points: usize,
    /// Grid span as fractions of the weak-dispersion pulse extent.
    pub span: (f64, f64),
    /// Kernel width over envelope feature scale below which the delta path is used.
    pub delta_threshold: f64,
    pub path: Option<SynthesisPath>,
    /// Cap on kernel quadrature nodes along `z`.
    pub max_nodes: usize,
}

impl Default for WaveformOptions {
    fn default() -> Self {
        Self {
            points: 2048,
            span: (-0.2, 1.2),
            delta_threshold: 0.05,
            path: None,
            max_nodes: 1 << 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformResult {
    /// Pulse-frame coordinate (m).
    pub r_tilde: Vec<f64>,
    /// Unit-norm envelope: `int |phi|^2 dr_tilde = 1`.
    pub phi: Vec<Complex64>,
    pub omega_m: f64,
    /// Half-maximum duration (s).
    pub duration: f64,
    /// `L |1/v_g - 1/v|` (s).
    pub duration_law: f64,
    pub params: WaveformParams,
    pub path: SynthesisPath,
    /// Kernel width over envelope feature scale.
    pub dispersion_ratio: f64,
    /// Largest edge sample over the peak.
    pub edge_ratio: f64,
    /// `int |phi|^2` before normalization.
    pub raw_energy: f64,
}

impl WaveformResult {
    pub fn magnitude(&self) -> Vec<f64> {
        self.phi.iter().map(|c| c.norm()).collect()
    }

    /// `|phi|^2`-weighted mean coordinate.
    pub fn centroid(&self) -> f64 {
        let p: Vec<f64> = self.phi.iter().map(|c| c.norm_sqr()).collect();
        let w: Vec<f64> = self.r_tilde.iter().zip(&p).map(|(r, q)| r * q).collect();
        trapezoid(&self.r_tilde, &w) / trapezoid(&self.r_tilde, &p)
    }
}

/// Width between the outermost half-maximum crossings of `y(x)`.
pub fn full_width_half_max(x: &[f64], y: &[f64]) -> f64 {
    let peak = y.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return 0.0;
    }
    let half = 0.5 * peak;
    let cross = |i: usize| x[i] + (half - y[i]) / (y[i + 1] - y[i]) * (x[i + 1] - x[i]);
    let first = (0..y.len() - 1).find(|&i| y[i] < half && y[i + 1] >= half);
    let last = (0..y.len() - 1).rev().find(|&i| y[i] >= half && y[i + 1] < half);
    let lo = first.map(cross).unwrap_or(x[0]);
    let hi = last.map(cross).unwrap_or(x[x.len() - 1]);
    hi - lo
}

/// Emission points `z_i` with `r_tilde(z_i) = r` on the scan grid.
fn roots(scan_z: &[f64], scan_r: &[f64], r: f64, params: &WaveformParams) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 0..scan_z.len() - 1 {
        let (fa, fb) = (scan_r[k] - r, scan_r[k + 1] - r);
        if fa == 0.0 {
            out.push(scan_z[k]);
            continue;
        }
        if k == scan_z.len() - 2 && fb == 0.0 {
            out.push(scan_z[k + 1]);
        }
        if fa * fb < 0.0 {
            let (mut a, mut b, mut fa) = (scan_z[k], scan_z[k + 1], fa);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                let fm = params.pulse_coordinate(m) - r;
                if fm * fa <= 0.0 {
                    b = m;
                } else {
                    a = m;
                    fa = fm;
                }
            }
            out.push(0.5 * (a + b));
        }
    }
    out
}

/// Fails on any emission point whose routing slope matches `v_g/v`.
fn check_degeneracy(scan_z: &[f64], params: &WaveformParams) -> Result<()> {
    let gaps: Vec<f64> = scan_z.iter().map(|&z| params.slope_gap(z)).collect();
    for k in 0..scan_z.len() {
        if gaps[k].abs() < DEGENERATE_SLOPE_GAP {
            return Err(Error::DegeneratePhaseMatching {
                z: scan_z[k],
                slope_gap: gaps[k].abs(),
            });
        }
        if k + 1 < scan_z.len() && gaps[k] * gaps[k + 1] < 0.0 {
            let (mut a, mut b, ga) = (scan_z[k], scan_z[k + 1], gaps[k]);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if params.slope_gap(m) * ga > 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            let z = 0.5 * (a + b);
            return Err(Error::DegeneratePhaseMatching {
                z,
                slope_gap: params.slope_gap(z).abs(),
            });
        }
    }
    Ok(())
}

/// Delta-kernel contribution of the roots lying in `[z_lo, z_hi]`.
fn delta_sum(env: &ModeEnvelope, params: &WaveformParams, zs: &[f64], z_lo: f64, z_hi: f64) -> Complex64 {
    let c = params.delta_weight();
    zs.iter()
        .filter(|&&z| z >= z_lo && z <= z_hi)
        .map(|&z| {
            let x_prime = (1.0 - params.v / params.v_g * params.routing.derivative(z)).abs();
            env.eval(z).conj() * (c / x_prime)
        })
        .sum()
}

/// Pulse-frame energy of the delta-path waveform evaluated on the electron side,
/// `4 pi v int |u|^2 / |1 - (v/v_g) R'| dz`. Valid for single-valued `r_tilde(z)`.
pub fn delta_energy(env: &ModeEnvelope, params: &WaveformParams) -> Result<f64> {
    params.validate()?;
    let n = 16 * env.z.len() + 1;
    let z = crate::numeric::linspace(env.start(), env.end(), n);
    let f: Vec<f64> = z
        .iter()
        .map(|&x| env.eval(x).norm_sqr() / (1.0 - params.v / params.v_g * params.routing.derivative(x)).abs())
        .collect();
    Ok(4.0 * PI * params.v * trapezoid(&z, &f))
}

/// Synthesizes the normalized pulse-frame waveform.
pub fn synthesize_waveform(env: &ModeEnvelope, params: &WaveformParams, opts: &WaveformOptions) -> Result<WaveformResult> {
    params.validate()?;
    if opts.points < 16 || !(opts.span.1 > opts.span.0) {
        return Err(Error::InvalidInput("waveform grid needs >= 16 points and an ascending span".into()));
    }
    let (z0, z1) = (env.start(), env.end());
    let length = env.length();
    let scan_z = crate::numeric::linspace(z0, z1, (4 * env.z.len()).max(4096));
    let scan_r: Vec<f64> = scan_z.iter().map(|&z| params.pulse_coordinate(z)).collect();
    let r_min = scan_r.iter().cloned().fold(f64::INFINITY, f64::min);
    let r_max = scan_r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let extent = r_max - r_min;
    if !(extent > 0.0) {
        let z = 0.5 * (z0 + z1);
        return Err(Error::DegeneratePhaseMatching {
            z,
            slope_gap: params.slope_gap(z).abs(),
        });
    }
    let r_tilde = crate::numeric::linspace(r_min + opts.span.0 * extent, r_min + opts.span.1 * extent, opts.points);

    let r_obs = params.routing.eval(z1);
    let d_max = r_obs - params.routing.eval(z0);
    let width = (params.beta2.abs() * d_max * params.v * params.v / params.v_g).sqrt();
    let ratio = width / env.feature_scale();
    let path = opts.path.unwrap_or(if params.beta2 == 0.0 || ratio < opts.delta_threshold {
        SynthesisPath::Delta
    } else {
        SynthesisPath::Kernel
    });

    let raw: Vec<Complex64> = match path {
        SynthesisPath::Delta => {
            check_degeneracy(&scan_z, params)?;
            r_tilde
                .par_iter()
                .map(|&r| delta_sum(env, params, &roots(&scan_z, &scan_r, r, params), z0, z1))
                .collect()
        }
        SynthesisPath::Kernel => {
            if params.beta2 == 0.0 {
                return Err(Error::InvalidInput("kernel path needs nonzero dispersion".into()));
            }
            kernel_quadrature(env, params, opts, &r_tilde, &scan_z, &scan_r, width, r_obs)?
        }
    };

    let mag: Vec<f64> = raw.iter().map(|c| c.norm()).collect();
    let raw_energy = trapezoid(&r_tilde, &mag.iter().map(|m| m * m).collect::<Vec<_>>());
    if !(raw_energy > 0.0 && raw_energy.is_finite()) {
        return Err(Error::InvalidInput("synthesized waveform has no energy".into()));
    }
    let peak = mag.iter().cloned().fold(0.0, f64::max);
    let edge_ratio = mag[0].max(mag[mag.len() - 1]) / peak;
    if edge_ratio > 1e-3 {
        log::warn!("waveform does not vanish at the grid edges (edge/peak {edge_ratio:.2e})");
    }
    let scale = 1.0 / raw_energy.sqrt();
    let phi: Vec<Complex64> = raw.iter().map(|c| c * scale).collect();
    let duration = full_width_half_max(&r_tilde, &mag) / params.v_g;
    Ok(WaveformResult {
        r_tilde,
        phi,
        omega_m: params.omega_m,
        duration,
        duration_law: params.duration_law(length),
        params: params.clone(),
        path,
        dispersion_ratio: ratio,
        edge_ratio,
        raw_energy,
    })
}

/// Midpoint z-quadrature of the band-limited kernel. Where the kernel is
/// narrower than the node spacing it is replaced by its delta limit. Nodes
/// where the chirp is not resolved are tapered out, since those stretches
/// cancel.
#[allow(clippy::too_many_arguments)]
fn kernel_quadrature(
    env: &ModeEnvelope,
    params: &WaveformParams,
    opts: &WaveformOptions,
    r_tilde: &[f64],
    scan_z: &[f64],
    scan_r: &[f64],
    width: f64,
    r_obs: f64,
) -> Result<Vec<Complex64>> {
    const NODES_PER_WIDTH: f64 = 4.0;
    let (z0, z1) = (env.start(), env.end());
    let length = z1 - z0;
    let (v, v_g, beta) = (params.v, params.v_g, params.beta2);
    let sigma = detuning_bandwidth(params, scan_z);
    let eps = v * v / (2.0 * sigma * sigma);
    // resolve a tenth of the widest undamped kernel, or the damping floor if wider
    let target = (NODES_PER_WIDTH * length / (0.1 * width).max(eps.sqrt())).ceil() as usize;
    let n = target.clamp(4096, opts.max_nodes.max(4096));
    let h = length / n as f64;
    let a_of = |z: f64| beta * (r_obs - params.routing.eval(z)) * v * v / v_g;
    // first cell boundary where the kernel is narrower than the resolvable width
    let k_cut = (0..n)
        .find(|&k| Complex64::new(eps, a_of(z0 + k as f64 * h)).norm().sqrt() < NODES_PER_WIDTH * h)
        .unwrap_or(n);
    let z_cut = z0 + k_cut as f64 * h;

    struct Node {
        z: f64,
        r: f64,
        rp: f64,
        s: Complex64,
        ds: Complex64,
        u: Complex64,
    }
    let nodes: Vec<Node> = (0..k_cut)
        .map(|k| {
            let z = z0 + (k as f64 + 0.5) * h;
            let r = params.routing.eval(z);
            let rp = params.routing.derivative(z);
            let a = beta * (r_obs - r) * v * v / v_g;
            let ap = -beta * rp * v * v / v_g;
            Node {
                z,
                r,
                rp,
                s: Complex64::new(eps, -a),
                ds: Complex64::new(0.0, -ap),
                u: env.eval(z).conj(),
            }
        })
        .collect();

    let out = r_tilde
        .par_iter()
        .map(|&rt| {
            let mut acc = Complex64::new(0.0, 0.0);
            for nd in &nodes {
                let x = nd.z - v / v_g * (nd.r - rt);
                let xp = 1.0 - v / v_g * nd.rp;
                let expo = -x * x / (4.0 * nd.s);
                if expo.re < -40.0 {
                    continue;
                }
                // phase advance per node of exp(-x^2 / 4s)
                let dpsi = (-(2.0 * x * xp * nd.s - x * x * nd.ds) / (4.0 * nd.s * nd.s)).im.abs() * h;
                let w = if dpsi < 0.25 * PI {
                    1.0
                } else if dpsi < 0.5 * PI {
                    (2.0 * (dpsi / (0.25 * PI) - 1.0) * 0.25 * PI).cos().powi(2)
                } else {
                    continue;
                };
                acc += damped_kernel_value(x, nd.s, v, v_g) * nd.u * (w * h);
            }
            if k_cut < n {
                acc += delta_sum(env, params, &roots(scan_z, scan_r, rt, params), z_cut, z1);
            }
            acc
        })
        .collect();
    Ok(out)
}

/// Normalized inner product `<a, b> / (|a| |b|)` after aligning the
/// `|phi|^2` centroids. `b` is resampled onto `a`'s spacing over the union span.
pub fn waveform_overlap(a: &WaveformResult, b: &WaveformResult) -> Result<Complex64> {
    for w in [a, b] {
        if w.r_tilde.len() < 2 || w.r_tilde.len() != w.phi.len() || w.r_tilde.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(Error::GridMismatch("waveform grid must be ascending and match its samples".into()));
        }
    }
    let (ca, cb) = (a.centroid(), b.centroid());
    if !(ca.is_finite() && cb.is_finite()) {
        return Err(Error::GridMismatch("waveform has no energy to align".into()));
    }
    let xa: Vec<f64> = a.r_tilde.iter().map(|r| r - ca).collect();
    let xb: Vec<f64> = b.r_tilde.iter().map(|r| r - cb).collect();
    let lo = xa[0].min(xb[0]);
    let hi = xa[xa.len() - 1].max(xb[xb.len() - 1]);
    let step = (xa[1] - xa[0]).min(xb[1] - xb[0]);
    let n = ((hi - lo) / step).ceil() as usize + 1;
    if n > 1 << 22 {
        return Err(Error::GridMismatch(format!("common grid would need {n} points")));
    }
    let grid = crate::numeric::linspace(lo, hi, n);
    let sample = |x: &[f64], y: &[Complex64], t: f64| -> Complex64 {
        if t < x[0] || t > x[x.len() - 1] {
            return Complex64::new(0.0, 0.0);
        }
        let k = x.partition_point(|&v| v <= t).clamp(1, x.len() - 1) - 1;
        let f = (t - x[k]) / (x[k + 1] - x[k]);
        y[k] * (1.0 - f) + y[k + 1] * f
    };
    let fa: Vec<Complex64> = grid.iter().map(|&t| sample(&xa, &a.phi, t)).collect();
    let fb: Vec<Complex64> = grid.iter().map(|&t| sample(&xb, &b.phi, t)).collect();
    let inner: Complex64 = fa.iter().zip(&fb).map(|(p, q)| p.conj() * q).sum();
    let na: f64 = fa.iter().map(|p| p.norm_sqr()).sum();
    let nb: f64 = fb.iter().map(|p| p.norm_sqr()).sum();
    Ok(inner / (na * nb).sqrt())
}
