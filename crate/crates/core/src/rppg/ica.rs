use super::{PulseEstimate, RgbTrace, RppgError};
use crate::dsp::{fft_len_for, periodogram, HrConfig};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Minimum trace length accepted by [`ica`].
pub const ICA_MIN_SAMPLES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcaConfig {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for IcaConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-6,
        }
    }
}

fn detrend_znorm(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let tm = (n - 1.0) / 2.0;
    let xm = x.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let d = i as f64 - tm;
        sxy += d * (v - xm);
        sxx += d * d;
    }
    let slope = sxy / sxx;
    let r: Vec<f64> = x.iter().enumerate().map(|(i, v)| v - xm - slope * (i as f64 - tm)).collect();
    let sd = (r.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        r.into_iter().map(|v| v / sd).collect()
    } else {
        r
    }
}

/// Whitened data, one row per retained principal direction.
fn whiten(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.ncols() as f64;
    let cov = x * x.transpose() / n;
    let eig = SymmetricEigen::new(cov);
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > 1e-10 * max.max(f64::MIN_POSITIVE))
        .collect();
    let mut wm = DMatrix::zeros(keep.len(), x.nrows());
    for (r, &i) in keep.iter().enumerate() {
        let s = 1.0 / eig.eigenvalues[i].sqrt();
        for c in 0..x.nrows() {
            wm[(r, c)] = eig.eigenvectors[(c, i)] * s;
        }
    }
    wm * x
}

/// Deflationary FastICA with the tanh contrast. Returns the sources (rows)
/// and whether every unit converged.
fn fastica(z: &DMatrix<f64>, cfg: &IcaConfig, seed: u64) -> (DMatrix<f64>, bool) {
    let (m, n) = (z.nrows(), z.ncols());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ws: Vec<DVector<f64>> = Vec::with_capacity(m);
    let mut all_converged = true;
    for _ in 0..m {
        let mut w = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
        let decorrelate = |w: &mut DVector<f64>, ws: &[DVector<f64>]| {
            for u in ws {
                let d = w.dot(u);
                *w -= u * d;
            }
            let nrm = w.norm();
            if nrm > 0.0 {
                *w /= nrm;
            }
        };
        decorrelate(&mut w, &ws);
        let mut converged = false;
        for _ in 0..cfg.max_iter {
            let y = z.transpose() * &w;
            let g = y.map(f64::tanh);
            let gp_mean = g.iter().map(|v| 1.0 - v * v).sum::<f64>() / n as f64;
            let mut next = z * &g / n as f64 - &w * gp_mean;
            decorrelate(&mut next, &ws);
            let change = 1.0 - next.dot(&w).abs();
            w = next;
            if change < cfg.tol {
                converged = true;
                break;
            }
        }
        all_converged &= converged;
        ws.push(w);
    }
    let wmat = DMatrix::from_fn(m, m, |r, c| ws[r][c]);
    (wmat * z, all_converged)
}

pub fn ica(trace: &RgbTrace, seed: u64) -> Result<PulseEstimate, RppgError> {
    ica_with(trace, seed, &IcaConfig::default())
}

/// Blind source separation of the three colour channels; returns the source
/// with the strongest in-band spectral peak, signed to correlate positively
/// with green.
pub fn ica_with(trace: &RgbTrace, seed: u64, cfg: &IcaConfig) -> Result<PulseEstimate, RppgError> {
    let n = trace.len();
    if n < ICA_MIN_SAMPLES {
        return Err(RppgError::TooShort {
            len: n,
            needed: ICA_MIN_SAMPLES,
        });
    }
    let chans: Vec<Vec<f64>> = (0..3).map(|c| detrend_znorm(&trace.channel(c))).collect();
    let x = DMatrix::from_fn(3, n, |r, c| chans[r][c]);
    let z = whiten(&x);
    if z.nrows() == 0 {
        return Ok(PulseEstimate {
            samples: vec![0.0; n],
            fs: trace.fs,
            converged: true,
        });
    }
    let (sources, converged) = fastica(&z, cfg, seed);
    let band = HrConfig::default();
    let nfft = fft_len_for(trace.fs);
    let peak = |row: &[f64]| {
        let spec = periodogram(row, trace.fs, nfft);
        spec.freqs
            .iter()
            .zip(&spec.power)
            .filter(|(f, _)| **f >= band.lo_hz && **f <= band.hi_hz)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max)
    };
    let rows: Vec<Vec<f64>> = (0..sources.nrows()).map(|r| sources.row(r).iter().copied().collect()).collect();
    let best = (0..rows.len())
        .max_by(|&a, &b| peak(&rows[a]).total_cmp(&peak(&rows[b])))
        .expect("at least one source");
    let mut samples = rows[best].clone();
    let corr: f64 = samples.iter().zip(&chans[1]).map(|(a, b)| a * b).sum();
    if corr < 0.0 {
        samples.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(PulseEstimate {
        samples,
        fs: trace.fs,
        converged,
    })
}
