use super::{hann, mean_std, PulseEstimate, RgbTrace, RppgError, PROJECTION_WINDOW_S};

/// Chrominance projection with 50% overlapping Hann windows.
pub fn chrom(trace: &RgbTrace) -> Result<PulseEstimate, RppgError> {
    let n = trace.len();
    // Even window so that hops of half a window tile the Hann sum exactly.
    let win = ((PROJECTION_WINDOW_S * trace.fs / 2.0).round() as usize * 2).max(2);
    if n < win {
        return Err(RppgError::TooShort { len: n, needed: win });
    }
    let hop = win / 2;
    let taper = hann(win);
    let mut out = vec![0.0; n];
    let mut start = 0;
    loop {
        let seg = &trace.rgb[start..start + win];
        let mu = [0, 1, 2].map(|c| seg.iter().map(|p| p[c]).sum::<f64>() / win as f64);
        let norm = |p: &[f64; 3], c: usize| if mu[c] != 0.0 { p[c] / mu[c] - 1.0 } else { 0.0 };
        let x: Vec<f64> = seg.iter().map(|p| 3.0 * norm(p, 0) - 2.0 * norm(p, 1)).collect();
        let y: Vec<f64> = seg
            .iter()
            .map(|p| 1.5 * norm(p, 0) + norm(p, 1) - 1.5 * norm(p, 2))
            .collect();
        let (_, sx) = mean_std(&x);
        let (_, sy) = mean_std(&y);
        let alpha = if sy > 0.0 { sx / sy } else { 0.0 };
        let s: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - alpha * b).collect();
        let (ms, _) = mean_std(&s);
        for i in 0..win {
            out[start + i] += (s[i] - ms) * taper[i];
        }
        if start + win == n {
            break;
        }
        start = (start + hop).min(n - win);
    }
    Ok(PulseEstimate {
        samples: out,
        fs: trace.fs,
        converged: true,
    })
}
