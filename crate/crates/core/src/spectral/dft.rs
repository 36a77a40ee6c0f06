//! Unnormalized 2D discrete Fourier transform and coefficient magnitudes.
//!
//! The forward transform is F(l,k) = Σ_{m,n} e^{−2πi(lm/H + kn/W)} X(m,n)
//! with X indexed (row m, column n) and the output indexed (row l, column k).
//! For square inputs both exponents share the single grid size N; non-square
//! inputs use the per-axis sizes as written above. No 1/N or 1/sqrt(N)
//! normalization is applied anywhere.
//!
//! Power-of-two axis lengths go through an iterative radix-2 FFT; every other
//! length falls back to a table-driven O(N²) evaluation of the same sum.

use std::f64::consts::PI;

use num_complex::Complex;

use crate::error::{Error, Result};

pub type Coeff = Complex<f64>;

/// Forward 2D DFT of a row-major `h`×`w` grid.
pub fn dft2d(data: &[f64], h: usize, w: usize) -> Result<Vec<Coeff>> {
    if h == 0 || w == 0 {
        return Err(Error::contract("dft2d needs a non-empty grid"));
    }
    if data.len() != h * w {
        return Err(Error::shape(format!(
            "dft2d expects {h}×{w} = {} values, got {}",
            h * w,
            data.len()
        )));
    }
    let mut grid: Vec<Coeff> = data.iter().map(|&v| Coeff::new(v, 0.0)).collect();
    // rows: transform over the column index n -> k
    let mut line = Vec::with_capacity(w.max(h));
    for r in 0..h {
        line.clear();
        line.extend_from_slice(&grid[r * w..(r + 1) * w]);
        transform_1d(&mut line);
        grid[r * w..(r + 1) * w].copy_from_slice(&line);
    }
    // columns: transform over the row index m -> l
    for c in 0..w {
        line.clear();
        line.extend((0..h).map(|r| grid[r * w + c]));
        transform_1d(&mut line);
        for r in 0..h {
            grid[r * w + c] = line[r];
        }
    }
    Ok(grid)
}

/// Elementwise modulus sqrt(Re² + Im²).
pub fn magnitude(coeffs: &[Coeff]) -> Vec<f64> {
    coeffs.iter().map(|c| c.norm()).collect()
}

fn transform_1d(line: &mut Vec<Coeff>) {
    let n = line.len();
    if n <= 1 {
        return;
    }
    if n.is_power_of_two() {
        fft_pow2(line);
    } else {
        *line = naive_1d(line);
    }
}

/// Iterative Cooley-Tukey with bit-reversal reordering; forward sign only.
fn fft_pow2(a: &mut [Coeff]) {
    let n = a.len();
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            a.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * PI / len as f64;
        let wlen = Coeff::new(ang.cos(), ang.sin());
        for chunk in a.chunks_mut(len) {
            let mut w = Coeff::new(1.0, 0.0);
            for i in 0..len / 2 {
                let u = chunk[i];
                let v = chunk[i + len / 2] * w;
                chunk[i] = u + v;
                chunk[i + len / 2] = u - v;
                w *= wlen;
            }
        }
        len <<= 1;
    }
}

fn naive_1d(a: &[Coeff]) -> Vec<Coeff> {
    let n = a.len();
    let twiddle: Vec<Coeff> = (0..n)
        .map(|j| {
            let ang = -2.0 * PI * j as f64 / n as f64;
            Coeff::new(ang.cos(), ang.sin())
        })
        .collect();
    (0..n)
        .map(|k| (0..n).map(|j| a[j] * twiddle[(j * k) % n]).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::rng::stream_rng;

    /// Direct double-loop evaluation of the defining sum; the oracle the fast
    /// path is checked against.
    fn brute_force(data: &[f64], h: usize, w: usize) -> Vec<Coeff> {
        let mut out = vec![Coeff::new(0.0, 0.0); h * w];
        for l in 0..h {
            for k in 0..w {
                let mut acc = Coeff::new(0.0, 0.0);
                for m in 0..h {
                    for n in 0..w {
                        let ang = -2.0 * PI
                            * ((l * m) as f64 / h as f64 + (k * n) as f64 / w as f64);
                        acc += Coeff::new(ang.cos(), ang.sin()) * data[m * w + n];
                    }
                }
                out[l * w + k] = acc;
            }
        }
        out
    }

    fn max_abs_diff(a: &[Coeff], b: &[Coeff]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn constant_grid_is_pure_dc() {
        let f = dft2d(&[1.0; 4], 2, 2).unwrap();
        assert!((f[0] - Coeff::new(4.0, 0.0)).norm() < 1e-12);
        for c in &f[1..] {
            assert!(c.norm() < 1e-12);
        }
    }

    #[test]
    fn delta_has_flat_spectrum() {
        let mut x = vec![0.0; 16];
        x[0] = 1.0;
        let f = dft2d(&x, 4, 4).unwrap();
        for c in &f {
            assert!((c - Coeff::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn matches_brute_force_on_mixed_sizes() {
        let mut rng = stream_rng(41, 7);
        for &(h, w) in &[(3usize, 3usize), (4, 4), (5, 7), (8, 8), (2, 4), (16, 16), (6, 6)] {
            let x: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fast = dft2d(&x, h, w).unwrap();
            let slow = brute_force(&x, h, w);
            let err = max_abs_diff(&fast, &slow);
            assert!(err <= 1e-4, "{h}x{w}: max abs err {err}");
        }
    }

    #[test]
    fn parseval_energy_identity() {
        let mut rng = stream_rng(42, 7);
        let x: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
        let f = dft2d(&x, 8, 8).unwrap();
        let spatial: f64 = x.iter().map(|v| v * v).sum();
        let spectral: f64 = f.iter().map(|c| c.norm_sqr()).sum();
        let rel = (spectral - 64.0 * spatial).abs() / (64.0 * spatial);
        assert!(rel < 1e-3, "relative parseval error {rel}");
    }

    #[test]
    fn real_input_magnitudes_have_conjugate_symmetry() {
        let mut rng = stream_rng(43, 7);
        let (h, w) = (6, 8);
        let x: Vec<f64> = (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mag = magnitude(&dft2d(&x, h, w).unwrap());
        for l in 0..h {
            for k in 0..w {
                let (lr, kr) = ((h - l) % h, (w - k) % w);
                assert!((mag[l * w + k] - mag[lr * w + kr]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn magnitude_of_three_four_is_five() {
        assert_eq!(magnitude(&[Coeff::new(3.0, 4.0)]), vec![5.0]);
    }

    #[test]
    fn rejects_empty_and_mismatched_grids() {
        assert!(matches!(dft2d(&[], 0, 4), Err(Error::Contract(_))));
        assert!(matches!(dft2d(&[1.0; 5], 2, 2), Err(Error::Shape { .. })));
    }
}
