//! Iterative radix-2 FFT. Fixed power-of-two sizes; correctness is anchored
//! to the naive-DFT reference in the `verify` module, not to any external
//! library.

use std::f64::consts::PI;

/// In-place radix-2 decimation-in-time FFT over (re, im) pairs.
/// `re.len()` must be a power of two.
pub fn fft_in_place(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    assert_eq!(n, im.len());
    assert!(n.is_power_of_two(), "fft size must be a power of two");
    if n <= 1 {
        return;
    }

    // bit-reversal permutation
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = (i.reverse_bits() >> (usize::BITS - bits)) as usize;
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }

    let mut len = 2;
    while len <= n {
        let ang = -2.0 * PI / len as f64;
        let (w_re, w_im) = (ang.cos(), ang.sin());
        let mut start = 0;
        while start < n {
            let (mut cur_re, mut cur_im) = (1.0, 0.0);
            for k in 0..len / 2 {
                let a = start + k;
                let b = a + len / 2;
                let t_re = re[b] * cur_re - im[b] * cur_im;
                let t_im = re[b] * cur_im + im[b] * cur_re;
                re[b] = re[a] - t_re;
                im[b] = im[a] - t_im;
                re[a] += t_re;
                im[a] += t_im;
                let next_re = cur_re * w_re - cur_im * w_im;
                cur_im = cur_re * w_im + cur_im * w_re;
                cur_re = next_re;
            }
            start += len;
        }
        len <<= 1;
    }
}

/// Magnitude spectrum of a real signal zero-padded to `n_fft`:
/// returns `n_fft / 2 + 1` values.
pub fn magnitude_spectrum(signal: &[f64], n_fft: usize) -> Vec<f64> {
    let mut re = vec![0.0; n_fft];
    let mut im = vec![0.0; n_fft];
    let copy = signal.len().min(n_fft);
    re[..copy].copy_from_slice(&signal[..copy]);
    fft_in_place(&mut re, &mut im);
    (0..n_fft / 2 + 1)
        .map(|k| (re[k] * re[k] + im[k] * im[k]).sqrt())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dc_signal_has_energy_only_at_bin_zero() {
        let spec = magnitude_spectrum(&vec![1.0; 64], 64);
        assert!((spec[0] - 64.0).abs() < 1e-9);
        for &m in &spec[1..] {
            assert!(m < 1e-9);
        }
    }

    #[test]
    fn single_tone_hits_its_bin() {
        let n = 256;
        // bin 8: exactly 8 cycles in the window
        let signal: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 8.0 * i as f64 / n as f64).sin())
            .collect();
        let spec = magnitude_spectrum(&signal, n);
        let peak = spec
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(peak, 8);
        assert!((spec[8] - n as f64 / 2.0).abs() < 1e-6);
    }

    #[test]
    fn linearity() {
        let a: Vec<f64> = (0..32).map(|i| (i as f64 * 0.3).sin()).collect();
        let scaled: Vec<f64> = a.iter().map(|x| 2.0 * x).collect();
        let sa = magnitude_spectrum(&a, 32);
        let sb = magnitude_spectrum(&scaled, 32);
        for (x, y) in sa.iter().zip(&sb) {
            assert!((2.0 * x - y).abs() < 1e-9);
        }
    }
}
