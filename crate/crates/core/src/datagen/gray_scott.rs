//! Gray-Scott reaction-diffusion on the periodic square `[-1, 1]^2`.
//!
//! Time stepping is first-order IMEX: the reaction terms are advanced with
//! explicit Euler, then diffusion is solved implicitly in Fourier space,
//! `u_hat <- u_hat / (1 + dt * delta * |kappa|^2)`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ForcingSeries, GridField, Trajectory};

/// Side length of the periodic domain.
pub const DOMAIN_LENGTH: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrayScottParams {
    pub f: f64,
    pub k: f64,
    pub delta_a: f64,
    pub delta_b: f64,
    pub dt_internal: f64,
    pub snapshot_interval: f64,
}

impl GrayScottParams {
    /// Feed/kill pair with the default diffusivities (2e-5, 1e-5) and time
    /// stepping (dt = 1, snapshots every 10 time units).
    pub fn with_rates(f: f64, k: f64) -> Self {
        Self {
            f,
            k,
            delta_a: 2e-5,
            delta_b: 1e-5,
            dt_internal: 1.0,
            snapshot_interval: 10.0,
        }
    }

    /// The six feed/kill pairs (gliders, bubbles, maze, spots, worms, spirals).
    pub fn reference_set() -> Vec<Self> {
        [
            (0.014, 0.054),
            (0.098, 0.057),
            (0.029, 0.057),
            (0.030, 0.062),
            (0.058, 0.065),
            (0.018, 0.051),
        ]
        .into_iter()
        .map(|(f, k)| Self::with_rates(f, k))
        .collect()
    }

    /// Internal steps per snapshot.
    pub fn substeps(&self) -> Result<usize> {
        self.validate()?;
        Ok((self.snapshot_interval / self.dt_internal).round() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.f, self.k, self.delta_a, self.delta_b, self.dt_internal, self.snapshot_interval];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("Gray-Scott parameters must be finite".into()));
        }
        if self.f < 0.0 || self.k < 0.0 {
            return Err(Error::Config("feed and kill rates must be non-negative".into()));
        }
        if self.delta_a <= 0.0 || self.delta_b <= 0.0 {
            return Err(Error::Config("diffusivities must be positive".into()));
        }
        if self.dt_internal <= 0.0 || self.snapshot_interval <= 0.0 {
            return Err(Error::Config("time steps must be positive".into()));
        }
        let ratio = self.snapshot_interval / self.dt_internal;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(Error::Config(format!(
                "snapshot interval {} is not an integer multiple of dt {}",
                self.snapshot_interval, self.dt_internal
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrayScottState {
    pub a: GridField,
    pub b: GridField,
    pub t: f64,
}

impl GrayScottState {
    pub fn new(a: GridField, b: GridField) -> Result<Self> {
        if a.shape() != b.shape() {
            return Err(Error::Shape(format!("A is {:?} but B is {:?}", a.shape(), b.shape())));
        }
        Ok(Self { a, b, t: 0.0 })
    }

    /// The homogeneous fixed point A = 1, B = 0.
    pub fn homogeneous(nx: usize, ny: usize) -> Self {
        Self {
            a: GridField::filled(nx, ny, 1.0),
            b: GridField::zeros(nx, ny),
            t: 0.0,
        }
    }
}

/// 2D FFT plans plus the `|kappa|^2` symbol, laid out column-major
/// (`[nx][ny]`) to match the transposed spectral buffer.
struct Spectral {
    nx: usize,
    ny: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    k2: Vec<f64>,
    work: Vec<Complex64>,
    spec: Vec<Complex64>,
}

fn wavenumbers(n: usize) -> Vec<f64> {
    let base = 2.0 * PI / DOMAIN_LENGTH;
    (0..n)
        .map(|m| {
            let m = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
            base * m
        })
        .collect()
}

impl Spectral {
    fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        let kx = wavenumbers(nx);
        let ky = wavenumbers(ny);
        let mut k2 = vec![0.0; nx * ny];
        for ix in 0..nx {
            for iy in 0..ny {
                k2[ix * ny + iy] = kx[ix] * kx[ix] + ky[iy] * ky[iy];
            }
        }
        Self {
            nx,
            ny,
            row_fwd: planner.plan_fft_forward(nx),
            row_inv: planner.plan_fft_inverse(nx),
            col_fwd: planner.plan_fft_forward(ny),
            col_inv: planner.plan_fft_inverse(ny),
            k2,
            work: vec![Complex64::default(); nx * ny],
            spec: vec![Complex64::default(); nx * ny],
        }
    }

    /// Forward transform of real `values` into `self.spec` (`[nx][ny]`).
    fn forward(&mut self, values: &[f64]) {
        for (w, &v) in self.work.iter_mut().zip(values) {
            *w = Complex64::new(v, 0.0);
        }
        self.row_fwd.process(&mut self.work);
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                self.spec[ix * self.ny + iy] = self.work[iy * self.nx + ix];
            }
        }
        self.col_fwd.process(&mut self.spec);
    }

    /// Inverse transform of `self.spec` into real `out` (`[ny][nx]`).
    fn inverse(&mut self, out: &mut [f64]) {
        self.col_inv.process(&mut self.spec);
        for ix in 0..self.nx {
            for iy in 0..self.ny {
                self.work[iy * self.nx + ix] = self.spec[ix * self.ny + iy];
            }
        }
        self.row_inv.process(&mut self.work);
        let scale = 1.0 / (self.nx * self.ny) as f64;
        for (o, w) in out.iter_mut().zip(&self.work) {
            *o = w.re * scale;
        }
    }

    /// Solves `(1 - c * Laplacian) u_new = u` in place.
    fn implicit_diffuse(&mut self, values: &mut [f64], c: f64) {
        self.forward(values);
        for (s, k2) in self.spec.iter_mut().zip(&self.k2) {
            *s /= 1.0 + c * k2;
        }
        self.inverse(values);
    }

    fn laplacian(&mut self, values: &[f64], out: &mut [f64]) {
        self.forward(values);
        for (s, k2) in self.spec.iter_mut().zip(&self.k2) {
            *s *= -k2;
        }
        self.inverse(out);
    }
}

/// Fourier-spectral Laplacian of a periodic field on `[-1, 1]^2`.
pub fn spectral_laplacian(field: &GridField) -> Result<GridField> {
    let mut sp = Spectral::new(field.nx(), field.ny());
    let mut out = vec![0.0; field.len()];
    sp.laplacian(field.values(), &mut out);
    GridField::new(field.nx(), field.ny(), out)
}

/// Reusable stepper holding FFT plans for one grid size.
pub struct GrayScottSolver {
    params: GrayScottParams,
    spectral: Spectral,
    steps_taken: usize,
}

impl GrayScottSolver {
    pub fn new(nx: usize, ny: usize, params: GrayScottParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            spectral: Spectral::new(nx, ny),
            steps_taken: 0,
        })
    }

    pub fn params(&self) -> &GrayScottParams {
        &self.params
    }

    pub fn step(&mut self, state: &GrayScottState) -> Result<GrayScottState> {
        let (nx, ny) = state.a.shape();
        if state.b.shape() != (nx, ny) || (nx, ny) != (self.spectral.nx, self.spectral.ny) {
            return Err(Error::Shape(format!(
                "state {:?}/{:?} does not match solver grid {}x{}",
                state.a.shape(),
                state.b.shape(),
                self.spectral.nx,
                self.spectral.ny
            )));
        }
        let GrayScottParams {
            f, k, delta_a, delta_b, dt_internal: dt, ..
        } = self.params;

        let mut a = state.a.values().to_vec();
        let mut b = state.b.values().to_vec();
        for (ai, bi) in a.iter_mut().zip(b.iter_mut()) {
            let (av, bv) = (*ai, *bi);
            let abb = av * bv * bv;
            *ai = av + dt * (-abb + f * (1.0 - av));
            *bi = bv + dt * (abb - (f + k) * bv);
        }
        self.spectral.implicit_diffuse(&mut a, dt * delta_a);
        self.spectral.implicit_diffuse(&mut b, dt * delta_b);
        // The continuous system keeps A in [0, 1] and B >= 0. The truncated
        // spectral solve rings around grid-scale fronts, so project back.
        for v in &mut a {
            *v = v.clamp(0.0, 1.0);
        }
        for v in &mut b {
            *v = v.max(0.0);
        }
        self.steps_taken += 1;

        let diverged = |e: Error| Error::Divergence {
            step: self.steps_taken,
            context: format!("f = {f}, k = {k}: {e}"),
        };
        Ok(GrayScottState {
            a: GridField::new(nx, ny, a).map_err(diverged)?,
            b: GridField::new(nx, ny, b).map_err(diverged)?,
            t: state.t + dt,
        })
    }
}

/// One IMEX step of size `params.dt_internal`.
pub fn gray_scott_step(state: &GrayScottState, params: &GrayScottParams) -> Result<GrayScottState> {
    GrayScottSolver::new(state.a.nx(), state.a.ny(), *params)?.step(state)
}

/// Simulates from `ic` and records species A every `snapshot_interval`,
/// starting with the initial condition. Frames are rounded to `f32`.
pub fn simulate_gray_scott(
    ic: &GrayScottState,
    params: &GrayScottParams,
    n_snapshots: usize,
    trajectory_id: &str,
) -> Result<Trajectory> {
    if n_snapshots < 2 {
        return Err(Error::Config("a trajectory needs at least 2 snapshots".into()));
    }
    let (nx, ny) = ic.a.shape();
    let mut solver = GrayScottSolver::new(nx, ny, *params)?;
    let substeps = params.substeps()?;
    let mut state = ic.clone();
    let mut frames = Vec::with_capacity(n_snapshots);
    frames.push(state.a.quantized_f32());
    for _ in 1..n_snapshots {
        for _ in 0..substeps {
            state = solver.step(&state)?;
        }
        frames.push(state.a.quantized_f32());
    }
    let forcing = ForcingSeries::constant(n_snapshots, vec![params.f, params.k])?;
    Trajectory::new(trajectory_id, "A", frames, forcing)
}

/// Blob count, width (in cells) and amplitude ranges for clustered initial
/// conditions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub min_blobs: usize,
    pub max_blobs: usize,
    pub min_width: f64,
    pub max_width: f64,
    /// Depth of the A dip at a blob center (A goes from 1 towards `1 - a_dip`).
    pub a_dip: f64,
    /// Peak of B at a blob center.
    pub b_peak: f64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        Self {
            min_blobs: 1,
            max_blobs: 6,
            min_width: 2.0,
            max_width: 8.0,
            a_dip: 0.5,
            b_peak: 1.0,
        }
    }
}

/// Background A = 1, B = 0 perturbed by `n_blobs` periodic Gaussian blobs.
pub fn gaussian_cluster_ic<R: Rng + ?Sized>(
    nx: usize,
    ny: usize,
    n_blobs: usize,
    spec: &ClusterSpec,
    rng: &mut R,
) -> Result<GrayScottState> {
    if nx < 8 || ny < 8 {
        return Err(Error::Config(format!("initial conditions need at least an 8x8 grid, got {nx}x{ny}")));
    }
    let blobs: Vec<(f64, f64, f64)> = (0..n_blobs)
        .map(|_| {
            let cx = rng.gen_range(0.0..nx as f64);
            let cy = rng.gen_range(0.0..ny as f64);
            let w = rng.gen_range(spec.min_width..=spec.max_width);
            (cx, cy, w)
        })
        .collect();
    let wrap = |d: f64, n: usize| {
        let n = n as f64;
        let d = d.rem_euclid(n);
        d.min(n - d)
    };
    let mut bump = vec![0.0; nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            let mut s: f64 = 0.0;
            for &(cx, cy, w) in &blobs {
                let dx = wrap(ix as f64 - cx, nx);
                let dy = wrap(iy as f64 - cy, ny);
                s += (-(dx * dx + dy * dy) / (2.0 * w * w)).exp();
            }
            bump[iy * nx + ix] = s.min(1.0);
        }
    }
    let a = bump.iter().map(|g| (1.0 - spec.a_dip * g).clamp(0.0, 1.0)).collect();
    let b = bump.iter().map(|g| (spec.b_peak * g).clamp(0.0, 1.0)).collect();
    GrayScottState::new(GridField::new(nx, ny, a)?, GridField::new(nx, ny, b)?)
}

/// Clustered initial condition with a blob count drawn uniformly from
/// `[min_blobs, max_blobs]`.
pub fn sample_gaussian_cluster_ic<R: Rng + ?Sized>(nx: usize, ny: usize, rng: &mut R) -> Result<GrayScottState> {
    let spec = ClusterSpec::default();
    let n = rng.gen_range(spec.min_blobs..=spec.max_blobs);
    gaussian_cluster_ic(nx, ny, n, &spec, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid_coord(j: usize, n: usize) -> f64 {
        -1.0 + DOMAIN_LENGTH * j as f64 / n as f64
    }

    #[test]
    fn homogeneous_state_is_a_fixed_point() {
        let p = GrayScottParams::with_rates(0.029, 0.057);
        let s0 = GrayScottState::homogeneous(32, 32);
        let s1 = gray_scott_step(&s0, &p).unwrap();
        assert!(s1.a.max_abs_diff(&s0.a) < 1e-14);
        assert!(s1.b.max_abs_diff(&s0.b) < 1e-14);
        assert_eq!(s1.t, p.dt_internal);
    }

    #[test]
    fn constant_a_without_sources_is_unchanged() {
        let p = GrayScottParams { f: 0.0, k: 0.0, ..GrayScottParams::with_rates(0.0, 0.0) };
        let s0 = GrayScottState::new(GridField::filled(16, 16, 0.3), GridField::zeros(16, 16)).unwrap();
        let s1 = gray_scott_step(&s0, &p).unwrap();
        assert!(s1.a.max_abs_diff(&s0.a) < 1e-15);
        assert!(s1.b.values().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn laplacian_of_eigenfunction() {
        let n = 64;
        let f = GridField::from_fn(n, n, |ix, iy| {
            (PI * grid_coord(ix, n)).sin() * (PI * grid_coord(iy, n)).sin()
        })
        .unwrap();
        let lap = spectral_laplacian(&f).unwrap();
        let scale = 2.0 * PI * PI;
        let err = lap
            .values()
            .iter()
            .zip(f.values())
            .map(|(l, v)| (l + scale * v).abs())
            .fold(0.0, f64::max);
        assert!(err / scale < 1e-6, "relative error {}", err / scale);
    }

    #[test]
    fn rejects_incommensurate_snapshot_interval() {
        let p = GrayScottParams { dt_internal: 0.3, ..GrayScottParams::with_rates(0.03, 0.06) };
        assert!(p.validate().is_err());
    }

    #[test]
    fn zero_blobs_is_background() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = gaussian_cluster_ic(16, 16, 0, &ClusterSpec::default(), &mut rng).unwrap();
        assert!(s.a.values().iter().all(|&v| v == 1.0));
        assert!(s.b.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn clustered_ic_is_bounded_and_perturbed() {
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = sample_gaussian_cluster_ic(32, 24, &mut rng).unwrap();
            assert!(s.a.values().iter().chain(s.b.values()).all(|v| (0.0..=1.0).contains(v)));
            assert!(s.a.values().iter().cloned().fold(f64::INFINITY, f64::min) < 1.0);
            assert!(s.b.values().iter().cloned().fold(0.0, f64::max) > 0.0);
        }
        let a = sample_gaussian_cluster_ic(16, 16, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_gaussian_cluster_ic(16, 16, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(sample_gaussian_cluster_ic(4, 16, &mut ChaCha8Rng::seed_from_u64(9)).is_err());
    }

    #[test]
    fn fixed_point_ic_gives_constant_trajectory() {
        let p = GrayScottParams::with_rates(0.098, 0.057);
        let t = simulate_gray_scott(&GrayScottState::homogeneous(16, 16), &p, 5, "fp").unwrap();
        assert_eq!(t.n_steps(), 5);
        for f in t.frames() {
            assert_eq!(f, &t.frames()[0]);
        }
        assert_eq!(t.forcing().values(), &[0.098, 0.057]);
    }

    #[test]
    fn species_a_stays_bounded_for_all_reference_pairs() {
        for p in GrayScottParams::reference_set() {
            for seed in 0..5 {
                let ic = sample_gaussian_cluster_ic(64, 64, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                let t = simulate_gray_scott(&ic, &p, 33, "b").unwrap();
                for f in t.frames() {
                    assert!(f.values().iter().all(|v| (0.0..=1.0 + 1e-6).contains(v)), "f={} k={}", p.f, p.k);
                }
            }
        }
    }

    #[test]
    fn bubbles_regime_forms_a_pattern() {
        let p = GrayScottParams::with_rates(0.098, 0.057);
        let ic = sample_gaussian_cluster_ic(64, 64, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let t = simulate_gray_scott(&ic, &p, 33, "b").unwrap();
        let last = t.frames().last().unwrap().values();
        let mean = last.iter().sum::<f64>() / last.len() as f64;
        let var = last.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / last.len() as f64;
        assert!(var > 1e-4, "variance {var}");
    }
}
