//! Uniform periodic 2D grids, wavefunction storage and FFT helpers.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{Array2, Axis, Zip};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible points per axis.
pub const MIN_POINTS: usize = 64;

/// Uniform periodic grid with `n` points per axis. Point i sits at
/// x_min + i·dx with dx = (x_max − x_min)/n; x_max itself is the periodic
/// image of x_min.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl GridSpec {
    pub fn new(n: usize, x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let g = GridSpec { n, x_min, x_max, y_min, y_max };
        g.validate()?;
        Ok(g)
    }

    /// Square grid centred at (cx, cy) with half-widths (hx, hy).
    pub fn centered(n: usize, cx: f64, cy: f64, hx: f64, hy: f64) -> Result<Self> {
        Self::new(n, cx - hx, cx + hx, cy - hy, cy + hy)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < MIN_POINTS || !self.n.is_power_of_two() {
            return Err(Error::Grid(format!("n = {} must be a power of two >= {MIN_POINTS}", self.n)));
        }
        let ok = [self.x_min, self.x_max, self.y_min, self.y_max].iter().all(|v| v.is_finite());
        if !ok || self.x_max <= self.x_min || self.y_max <= self.y_min {
            return Err(Error::Grid("domain bounds must be finite and increasing".into()));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / self.n as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y_min + j as f64 * self.dy()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.y(j)).collect()
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    /// Index of the grid point closest to the domain centre.
    pub fn center_index(&self) -> (usize, usize) {
        (self.n / 2, self.n / 2)
    }

    /// Angular wavenumbers along x in FFT order.
    pub fn kx(&self) -> Vec<f64> {
        wavenumbers(self.n, self.x_max - self.x_min)
    }

    pub fn ky(&self) -> Vec<f64> {
        wavenumbers(self.n, self.y_max - self.y_min)
    }

    /// Same spacing, domain shifted by (sx, sy).
    pub fn shifted(&self, sx: f64, sy: f64) -> GridSpec {
        GridSpec {
            x_min: self.x_min + sx,
            x_max: self.x_max + sx,
            y_min: self.y_min + sy,
            y_max: self.y_max + sy,
            ..*self
        }
    }

    /// Same spacing, twice the extent in each direction about the centre.
    pub fn doubled(&self) -> GridSpec {
        let (cx, cy) = self.center();
        let hx = self.x_max - self.x_min;
        let hy = self.y_max - self.y_min;
        GridSpec { n: 2 * self.n, x_min: cx - hx, x_max: cx + hx, y_min: cy - hy, y_max: cy + hy }
    }
}

/// 2π·(0, 1, …, n/2 − 1, −n/2, …, −1)/L.
pub fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    let s = 2.0 * std::f64::consts::PI / length;
    (0..n).map(|j| if j < n / 2 { j as f64 * s } else { (j as f64 - n as f64) * s }).collect()
}

/// Complex amplitudes on a [`GridSpec`], indexed `[iy, ix]` (x fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction2D {
    pub grid: GridSpec,
    pub amplitudes: Array2<C64>,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    n: usize,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    time: f64,
}

impl WaveFunction2D {
    pub fn zeros(grid: GridSpec, time: f64) -> Self {
        WaveFunction2D { grid, amplitudes: Array2::zeros((grid.n, grid.n)), time }
    }

    /// Samples `f(x, y)` on every grid point, in parallel over rows.
    pub fn from_fn<F>(grid: GridSpec, time: f64, f: F) -> Self
    where
        F: Fn(f64, f64) -> C64 + Sync,
    {
        let xs = grid.xs();
        let mut amplitudes = Array2::zeros((grid.n, grid.n));
        amplitudes.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(j, mut row)| {
            let y = grid.y(j);
            for (o, &x) in row.iter_mut().zip(&xs) {
                *o = f(x, y);
            }
        });
        WaveFunction2D { grid, amplitudes, time }
    }

    /// Builds amplitudes from a log-amplitude function, subtracting the
    /// largest real part first so that no sample overflows.
    pub fn from_log_fn<F>(grid: GridSpec, time: f64, f: F) -> Self
    where
        F: Fn(f64, f64) -> C64 + Sync,
    {
        let logs = Self::from_fn(grid, time, f);
        let peak = logs.amplitudes.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        let amplitudes = logs.amplitudes.mapv(|z| (z - peak).exp());
        WaveFunction2D { grid, amplitudes, time }
    }

    pub fn norm_sqr(&self) -> f64 {
        row_sums(&self.amplitudes, |z| z.norm_sqr()) * self.grid.cell_area()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Scales to unit L² norm and returns the previous norm.
    pub fn normalize(&mut self) -> Result<f64> {
        let n = self.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::NotNormalizable(format!("grid norm is {n}")));
        }
        self.amplitudes.mapv_inplace(|z| z / n);
        Ok(n)
    }

    /// ⟨self, other⟩ = ∫ conj(self)·other.
    pub fn inner(&self, other: &WaveFunction2D) -> Result<C64> {
        if self.grid != other.grid {
            return Err(Error::Grid("inner product of wavefunctions on different grids".into()));
        }
        let n = self.grid.n;
        let rows: Vec<C64> = (0..n)
            .into_par_iter()
            .map(|j| {
                let a = self.amplitudes.row(j);
                let b = other.amplitudes.row(j);
                Zip::from(&a).and(&b).fold(C64::new(0.0, 0.0), |s, x, y| s + x.conj() * y)
            })
            .collect();
        Ok(rows.iter().sum::<C64>() * self.grid.cell_area())
    }

    /// |⟨a, b⟩| / (‖a‖‖b‖).
    pub fn fidelity(&self, other: &WaveFunction2D) -> Result<f64> {
        Ok(self.inner(other)?.norm() / (self.norm() * other.norm()))
    }

    /// Largest |ψ| on the outermost ring of points divided by the peak |ψ|.
    pub fn boundary_ratio(&self) -> f64 {
        let n = self.grid.n;
        let a = &self.amplitudes;
        let peak = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut edge: f64 = 0.0;
        for k in 0..n {
            for z in [a[[0, k]], a[[n - 1, k]], a[[k, 0]], a[[k, n - 1]]] {
                edge = edge.max(z.norm());
            }
        }
        if peak > 0.0 {
            edge / peak
        } else {
            0.0
        }
    }

    /// Fails with a domain error unless the boundary ratio is below `tol`.
    pub fn check_boundary(&self, tol: f64) -> Result<()> {
        let r = self.boundary_ratio();
        if r < tol {
            Ok(())
        } else {
            Err(Error::Domain(format!("boundary amplitude ratio {r:.3e} exceeds {tol:.1e}")))
        }
    }

    /// Writes the binary dump (little-endian Re, Im pairs, x fastest) and a
    /// JSON sidecar next to it with extension `.json`.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        for z in self.amplitudes.iter() {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        w.flush()?;
        let g = &self.grid;
        let side = Sidecar { n: g.n, x_min: g.x_min, x_max: g.x_max, y_min: g.y_min, y_max: g.y_max, time: self.time };
        fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let side: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
        let grid = GridSpec::new(side.n, side.x_min, side.x_max, side.y_min, side.y_max)?;
        let mut bytes = Vec::new();
        BufReader::new(fs::File::open(path)?).read_to_end(&mut bytes)?;
        if bytes.len() != grid.n * grid.n * 16 {
            return Err(Error::Grid(format!("dump has {} bytes, expected {}", bytes.len(), grid.n * grid.n * 16)));
        }
        let vals: Vec<C64> = bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                C64::new(re, im)
            })
            .collect();
        let amplitudes = Array2::from_shape_vec((grid.n, grid.n), vals).expect("length checked");
        Ok(WaveFunction2D { grid, amplitudes, time: side.time })
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Sum of `f` over all entries: rows are summed in parallel, the row totals
/// sequentially, so the result does not depend on the thread count.
pub fn row_sums<F>(a: &Array2<C64>, f: F) -> f64
where
    F: Fn(&C64) -> f64 + Sync,
{
    let rows: Vec<f64> = a.axis_iter(Axis(0)).into_par_iter().map(|r| r.iter().map(&f).sum::<f64>()).collect();
    rows.iter().sum()
}

/// Batched 1D transforms along either axis of an n×n array.
pub struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

const ROWS_PER_TASK: usize = 8;

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    fn rows(&self, a: &mut Array2<C64>, plan: &Arc<dyn Fft<f64>>, scale: f64) {
        let n = self.n;
        let data = a.as_slice_mut().expect("standard layout");
        data.par_chunks_mut(n * ROWS_PER_TASK).for_each(|chunk| {
            plan.process(chunk);
            if scale != 1.0 {
                chunk.iter_mut().for_each(|z| *z *= scale);
            }
        });
    }

    fn columns(&self, a: &mut Array2<C64>, plan: &Arc<dyn Fft<f64>>, scale: f64) {
        let mut t = a.t().as_standard_layout().into_owned();
        self.rows(&mut t, plan, scale);
        a.assign(&t.t());
    }

    /// Forward transform along x (within each row).
    pub fn forward_x(&self, a: &mut Array2<C64>) {
        self.rows(a, &self.fwd, 1.0);
    }

    pub fn inverse_x(&self, a: &mut Array2<C64>) {
        self.rows(a, &self.inv, 1.0 / self.n as f64);
    }

    /// Forward transform along y (within each column).
    pub fn forward_y(&self, a: &mut Array2<C64>) {
        self.columns(a, &self.fwd, 1.0);
    }

    pub fn inverse_y(&self, a: &mut Array2<C64>) {
        self.columns(a, &self.inv, 1.0 / self.n as f64);
    }

    pub fn forward_2d(&self, a: &mut Array2<C64>) {
        self.forward_x(a);
        self.forward_y(a);
    }

    pub fn inverse_2d(&self, a: &mut Array2<C64>) {
        self.inverse_y(a);
        self.inverse_x(a);
    }
}

/// Spectral first derivatives ∂ψ/∂x and ∂ψ/∂y. The Nyquist mode is
/// dropped, as usual for odd-order spectral derivatives.
pub fn spectral_gradient(w: &WaveFunction2D, fft: &Fft2) -> (Array2<C64>, Array2<C64>) {
    let n = w.grid.n;
    let mut kx = w.grid.kx();
    let mut ky = w.grid.ky();
    kx[n / 2] = 0.0;
    ky[n / 2] = 0.0;
    let mut gx = w.amplitudes.clone();
    fft.forward_x(&mut gx);
    for mut row in gx.axis_iter_mut(Axis(0)) {
        row.iter_mut().zip(&kx).for_each(|(z, k)| *z *= C64::new(0.0, *k));
    }
    fft.inverse_x(&mut gx);
    let mut gy = w.amplitudes.clone();
    fft.forward_y(&mut gy);
    for (mut row, k) in gy.axis_iter_mut(Axis(0)).zip(&ky) {
        row.iter_mut().for_each(|z| *z *= C64::new(0.0, *k));
    }
    fft.inverse_y(&mut gy);
    (gx, gy)
}

/// A complex Gaussian exp(c + b·r + rᵀQr) recovered from log-amplitude
/// samples; used to size grids and as an analytic moment oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianShape {
    pub c: C64,
    pub b: [C64; 2],
    /// Symmetric: q[0][1] = q[1][0].
    pub q: [[C64; 2]; 2],
}

/// Moments of |ψ|² and of the momentum distribution for a Gaussian shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMoments {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
    /// Mean wavenumber (momentum / ħ).
    pub k_mean: [f64; 2],
    pub k_cov: [[f64; 2]; 2],
}

impl GaussianShape {
    /// Reads the quadratic off six samples around (x0, y0) with spacing h.
    /// Exact (up to rounding) when `log_f` is a quadratic polynomial.
    pub fn fit<F: Fn(f64, f64) -> C64>(log_f: F, x0: f64, y0: f64, h: f64) -> Self {
        let f00 = log_f(x0, y0);
        let fp0 = log_f(x0 + h, y0);
        let fm0 = log_f(x0 - h, y0);
        let f0p = log_f(x0, y0 + h);
        let f0m = log_f(x0, y0 - h);
        let fpp = log_f(x0 + h, y0 + h);
        let qxx = (fp0 + fm0 - 2.0 * f00) / (2.0 * h * h);
        let qyy = (f0p + f0m - 2.0 * f00) / (2.0 * h * h);
        let qxy = (fpp - fp0 - f0p + f00) / (2.0 * h * h);
        let gx = (fp0 - fm0) / (2.0 * h);
        let gy = (f0p - f0m) / (2.0 * h);
        // gradient at (x0, y0) is b + 2Q r0
        let bx = gx - 2.0 * (qxx * x0 + qxy * y0);
        let by = gy - 2.0 * (qxy * x0 + qyy * y0);
        let c = f00 - bx * x0 - by * y0 - (qxx * x0 * x0 + 2.0 * qxy * x0 * y0 + qyy * y0 * y0);
        GaussianShape { c, b: [bx, by], q: [[qxx, qxy], [qxy, qyy]] }
    }

    /// Fits, then refits about the recovered centre for better conditioning.
    pub fn fit_refined<F: Fn(f64, f64) -> C64>(log_f: F, x0: f64, y0: f64, h: f64) -> Result<Self> {
        let first = Self::fit(&log_f, x0, y0, h);
        let m = first.moments()?;
        Ok(Self::fit(&log_f, m.mean[0], m.mean[1], h))
    }

    /// Fails unless Re Q is negative definite.
    pub fn moments(&self) -> Result<GaussianMoments> {
        let rq = [[self.q[0][0].re, self.q[0][1].re], [self.q[1][0].re, self.q[1][1].re]];
        let det = rq[0][0] * rq[1][1] - rq[0][1] * rq[1][0];
        if !(rq[0][0] < 0.0 && det > 0.0) {
            return Err(Error::NotNormalizable(format!(
                "quadratic form Re Q = [[{:.3e}, {:.3e}], [{:.3e}, {:.3e}]] is not negative definite",
                rq[0][0], rq[0][1], rq[1][0], rq[1][1]
            )));
        }
        // |ψ|² ∝ exp(2 Re b·r + 2 rᵀ Re Q r): precision −4 Re Q
        let p = [[-4.0 * rq[0][0], -4.0 * rq[0][1]], [-4.0 * rq[1][0], -4.0 * rq[1][1]]];
        let pd = p[0][0] * p[1][1] - p[0][1] * p[1][0];
        let cov = [[p[1][1] / pd, -p[0][1] / pd], [-p[1][0] / pd, p[0][0] / pd]];
        let rb = [2.0 * self.b[0].re, 2.0 * self.b[1].re];
        let mean = [cov[0][0] * rb[0] + cov[0][1] * rb[1], cov[1][0] * rb[0] + cov[1][1] * rb[1]];
        // ∇ψ/ψ = b + 2Qr; wavenumber = Im of that, averaged
        let k_mean = [
            (self.b[0] + 2.0 * (self.q[0][0] * mean[0] + self.q[0][1] * mean[1])).im,
            (self.b[1] + 2.0 * (self.q[1][0] * mean[0] + self.q[1][1] * mean[1])).im,
        ];
        // k covariance: Re(4 Q̄ Σ Qᵀ) − accounts for both width and chirp
        let mut k_cov = [[0.0; 2]; 2];
        for (i, row) in k_cov.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let mut s = C64::new(0.0, 0.0);
                for (k, cov_k) in cov.iter().enumerate() {
                    for (l, c) in cov_k.iter().enumerate() {
                        s += self.q[i][k].conj() * c * self.q[j][l];
                    }
                }
                *v = 4.0 * s.re;
            }
        }
        Ok(GaussianMoments { mean, cov, k_mean, k_cov })
    }
}

impl GaussianMoments {
    pub fn sigma(&self) -> [f64; 2] {
        [self.cov[0][0].sqrt(), self.cov[1][1].sqrt()]
    }

    pub fn k_sigma(&self) -> [f64; 2] {
        [self.k_cov[0][0].sqrt(), self.k_cov[1][1].sqrt()]
    }

    /// Grid of `n` points covering ±`pad`σ about the mean. Fails when the
    /// spacing cannot resolve the wavenumber band |k̄| + pad·σ_k.
    pub fn grid(&self, n: usize, pad: f64) -> Result<GridSpec> {
        let s = self.sigma();
        let g = GridSpec::centered(n, self.mean[0], self.mean[1], pad * s[0], pad * s[1])?;
        self.check_resolution(&g, pad)?;
        Ok(g)
    }

    pub fn check_resolution(&self, g: &GridSpec, pad: f64) -> Result<()> {
        let ks = self.k_sigma();
        for (axis, (d, (km, sk))) in [g.dx(), g.dy()].iter().zip(self.k_mean.iter().zip(ks)).enumerate() {
            let need = km.abs() + pad * sk;
            let have = std::f64::consts::PI / d;
            if need > have {
                return Err(Error::Grid(format!(
                    "axis {axis}: spacing {d:.4} resolves |k| <= {have:.3}, need {need:.3}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(grid: GridSpec, sigma: f64, k0: f64) -> WaveFunction2D {
        WaveFunction2D::from_fn(grid, 0.0, |x, y| {
            C64::from_polar((-(x * x + y * y) / (4.0 * sigma * sigma)).exp(), k0 * x)
        })
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::new(32, -1.0, 1.0, -1.0, 1.0).is_err());
        assert!(GridSpec::new(96, -1.0, 1.0, -1.0, 1.0).is_err());
        assert!(GridSpec::new(64, 1.0, -1.0, -1.0, 1.0).is_err());
        assert!(GridSpec::new(64, -1.0, 1.0, -1.0, 1.0).is_ok());
    }

    #[test]
    fn normalize_gives_unit_norm() {
        let g = GridSpec::new(64, -10.0, 10.0, -10.0, 10.0).unwrap();
        let mut w = gauss(g, 1.0, 0.5);
        w.normalize().unwrap();
        assert!((w.norm() - 1.0).abs() < 1e-12);
        assert!((w.inner(&w).unwrap().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fft_round_trip() {
        let g = GridSpec::new(64, -10.0, 10.0, -8.0, 8.0).unwrap();
        let w = gauss(g, 1.3, 0.7);
        let fft = Fft2::new(64);
        let mut a = w.amplitudes.clone();
        fft.forward_2d(&mut a);
        fft.inverse_2d(&mut a);
        let err = (&a - &w.amplitudes).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-13);
    }

    #[test]
    fn spectral_derivative_of_plane_wave() {
        let g = GridSpec::new(64, 0.0, 2.0 * std::f64::consts::PI, 0.0, 2.0 * std::f64::consts::PI).unwrap();
        let w = WaveFunction2D::from_fn(g, 0.0, |x, y| C64::from_polar(1.0, 3.0 * x - 2.0 * y));
        let (gx, gy) = spectral_gradient(&w, &Fft2::new(64));
        let ex = (&gx - &w.amplitudes.mapv(|z| z * C64::new(0.0, 3.0))).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let ey = (&gy - &w.amplitudes.mapv(|z| z * C64::new(0.0, -2.0))).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(ex < 1e-11 && ey < 1e-11, "{ex} {ey}");
    }

    #[test]
    fn dump_round_trip() {
        let dir = std::env::temp_dir().join(format!("ncgw-grid-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let g = GridSpec::new(64, -3.0, 5.0, -2.0, 2.0).unwrap();
        let mut w = gauss(g, 0.8, 1.1);
        w.time = 2.5;
        let path = dir.join("psi.bin");
        w.dump(&path).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 64 * 64 * 16);
        let back = WaveFunction2D::load(&path).unwrap();
        assert_eq!(back, w);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn gaussian_fit_recovers_moments() {
        let (mx, my, s, k0) = (1.5, -2.0, 0.7, 0.3);
        let f = |x: f64, y: f64| {
            C64::new(-((x - mx).powi(2) + (y - my).powi(2)) / (4.0 * s * s), k0 * x + 0.1 * (x - mx).powi(2))
        };
        let shape = GaussianShape::fit_refined(f, 0.0, 0.0, 1.0).unwrap();
        let m = shape.moments().unwrap();
        assert!((m.mean[0] - mx).abs() < 1e-10 && (m.mean[1] - my).abs() < 1e-10);
        assert!((m.cov[0][0] - s * s).abs() < 1e-10 && m.cov[0][1].abs() < 1e-10);
        assert!((m.k_mean[0] - k0).abs() < 1e-10);
        // chirp q_im = 0.1 adds (2·0.1·σ)² to the wavenumber variance
        let expect = 1.0 / (4.0 * s * s) + (0.2 * s).powi(2);
        assert!((m.k_cov[0][0] - expect).abs() < 1e-10);
        let bad = GaussianShape::fit(|x, _| C64::new(x * x, 0.0), 0.0, 0.0, 1.0);
        assert!(matches!(bad.moments(), Err(Error::NotNormalizable(_))));
    }

    #[test]
    fn auto_grid_checks_resolution() {
        let m = GaussianMoments { mean: [0.0, 0.0], cov: [[1.0, 0.0], [0.0, 1.0]], k_mean: [0.0, 0.0], k_cov: [[0.25, 0.0], [0.0, 0.25]] };
        let g = m.grid(64, 8.0).unwrap();
        assert!(gauss(g, 1.0, 0.0).boundary_ratio() < 1e-6);
        let fast = GaussianMoments { k_mean: [50.0, 0.0], ..m };
        assert!(matches!(fast.grid(64, 8.0), Err(Error::Grid(_))));
    }
}
