use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Least-squares fit of `ℱ(∇ˢu)(ξ,η) ≈ k (S(ξ) + S(η)) û(ξ+η)`,
/// `S(ξ) = ξ/|ξ|^{3/2−s}`, for the unit Gaussian on a one-dimensional box.
#[derive(Debug, Clone, Serialize)]
pub struct FourierReport {
    pub s: f64,
    pub nodes: usize,
    pub h: f64,
    pub k_re: f64,
    pub k_im: f64,
    /// Continuum value of the constant, for comparison with the fit.
    pub k_continuum_im: f64,
    pub residual: f64,
}

impl FourierReport {
    pub fn k_abs(&self) -> f64 {
        self.k_re.hypot(self.k_im)
    }
}

/// Continuum constant: `k = −2i (C/2)^{1/2} Γ(μ) sin(πμ/2)`, `μ = 1/2 − s`.
/// It is purely imaginary because the kernel is odd.
pub fn continuum_k_imag(s: f64) -> f64 {
    let c = (super::c_ns(1, s) / 2.0).sqrt();
    let mu = 0.5 - s;
    let g = if mu.abs() < 1e-8 {
        std::f64::consts::FRAC_PI_2
    } else {
        gamma(mu) * (std::f64::consts::FRAC_PI_2 * mu).sin()
    };
    -2.0 * c * g
}

pub fn fourier_symbol_check(grid: &Grid) -> Result<FourierReport> {
    if grid.n() != 1 {
        return Err(Error::Unsupported("the Fourier symbol check is one-dimensional".into()));
    }
    let nn = grid.node_count();
    if !nn.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("{nn} nodes is not a power of two")));
    }
    let (h, s) = (grid.h(), grid.s());
    let x0 = grid.coord(0)[0];
    let alpha = grid.alpha();
    let u: Vec<f64> = (0..nn).map(|i| (-grid.coord(i)[0].powi(2) / 2.0).exp()).collect();

    let mut data: Vec<Complex64> = (0..nn * nn)
        .map(|k| {
            let (i, j) = (k / nn, k % nn);
            Complex64::new((u[i] - u[j]) * alpha.at(i, j)[0], 0.0)
        })
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(nn);
    for row in data.chunks_mut(nn) {
        fft.process(row);
    }
    let mut col = vec![Complex64::default(); nn];
    for j in 0..nn {
        for i in 0..nn {
            col[i] = data[i * nn + j];
        }
        fft.process(&mut col);
        for i in 0..nn {
            data[i * nn + j] = col[i];
        }
    }

    let freq = |a: usize| {
        let a = if a >= nn / 2 { a as f64 - nn as f64 } else { a as f64 };
        2.0 * std::f64::consts::PI * a / (nn as f64 * h)
    };
    let sym = |xi: f64| xi.signum() * xi.abs().powf(s - 0.5);
    // ξ+η is deliberately not folded back into the Nyquist band: the model is
    // the continuum transform, and folding made the fit markedly worse.
    let u_hat = |w: f64| (2.0 * std::f64::consts::PI).sqrt() * (-w * w / 2.0).exp();

    let mut pairs = Vec::with_capacity((nn - 1) * (nn - 1));
    let (mut num, mut den) = (Complex64::default(), 0.0);
    for a in 1..nn {
        for b in 1..nn {
            let (xi, eta) = (freq(a), freq(b));
            let phase = Complex64::from_polar(h * h, -x0 * (xi + eta));
            let f = data[a * nn + b] * phase;
            let model = (sym(xi) + sym(eta)) * u_hat(xi + eta);
            num += f * model;
            den += model * model;
            pairs.push((f, model));
        }
    }
    let k = num / den;
    let (mut res, mut norm) = (0.0, 0.0);
    for (f, m) in pairs {
        res += (f - k * m).norm_sqr();
        norm += f.norm_sqr();
    }
    Ok(FourierReport {
        s,
        nodes: nn,
        h,
        k_re: k.re,
        k_im: k.im,
        k_continuum_im: continuum_k_imag(s),
        residual: (res / norm).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridConfig};

    fn grid(s: f64, nodes: usize) -> std::sync::Arc<Grid> {
        build_grid(&GridConfig::interval(s, -8.0, 8.0, nodes, -1.0, 1.0)).unwrap()
    }

    #[test]
    fn continuum_constant_at_half() {
        // k = −iπ (1/(2π))^{1/2} = −i (π/2)^{1/2}
        assert!((continuum_k_imag(0.5) + (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-14);
        // continuity in s across the removable point
        assert!((continuum_k_imag(0.5 + 1e-6) - continuum_k_imag(0.5)).abs() < 1e-5);
    }

    #[test]
    fn fit_is_imaginary_and_refines() {
        let coarse = fourier_symbol_check(&grid(0.5, 64)).unwrap();
        let fine = fourier_symbol_check(&grid(0.5, 128)).unwrap();
        assert!(coarse.k_re.abs() < 1e-3 * coarse.k_abs());
        assert!(fine.residual < coarse.residual);
    }

    #[test]
    fn rejects_two_dimensions_and_odd_sizes() {
        let g2 = build_grid(&GridConfig::square_with_disk(0.5, -1.0, 1.0, 8, 0.4)).unwrap();
        assert!(matches!(fourier_symbol_check(&g2), Err(Error::Unsupported(_))));
        assert!(matches!(fourier_symbol_check(&grid(0.5, 100)), Err(Error::InvalidArgument(_))));
    }
}
