use super::{mean_std, PulseEstimate, RgbTrace, RppgError, PROJECTION_WINDOW_S};

const PROJECTION: [[f64; 3]; 2] = [[0.0, 1.0, -1.0], [-2.0, 1.0, 1.0]];

/// Plane-orthogonal-to-skin projection over sliding windows, overlap-added
/// with a stride of one sample.
pub fn pos(trace: &RgbTrace) -> Result<PulseEstimate, RppgError> {
    let n = trace.len();
    let win = ((PROJECTION_WINDOW_S * trace.fs).round() as usize).max(2);
    if n < win {
        return Err(RppgError::TooShort { len: n, needed: win });
    }
    let mut out = vec![0.0; n];
    let mut s1 = vec![0.0; win];
    let mut s2 = vec![0.0; win];
    for start in 0..=n - win {
        let seg = &trace.rgb[start..start + win];
        let mu = [0, 1, 2].map(|c| seg.iter().map(|p| p[c]).sum::<f64>() / win as f64);
        for (i, p) in seg.iter().enumerate() {
            let cn = [0, 1, 2].map(|c| if mu[c] != 0.0 { p[c] / mu[c] } else { 0.0 });
            s1[i] = (0..3).map(|c| PROJECTION[0][c] * cn[c]).sum();
            s2[i] = (0..3).map(|c| PROJECTION[1][c] * cn[c]).sum();
        }
        let (_, sd1) = mean_std(&s1);
        let (_, sd2) = mean_std(&s2);
        let alpha = if sd2 > 0.0 { sd1 / sd2 } else { 0.0 };
        let h: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| a + alpha * b).collect();
        let (mh, _) = mean_std(&h);
        for i in 0..win {
            out[start + i] += h[i] - mh;
        }
    }
    Ok(PulseEstimate {
        samples: out,
        fs: trace.fs,
        converged: true,
    })
}
