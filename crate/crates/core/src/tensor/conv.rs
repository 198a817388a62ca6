// Stride-1 3D convolution over [N, C, T, H, W] volumes.
//
// The input is zero-padded once into a flat buffer. In that buffer every
// kernel tap is a constant flat offset, so each (in-channel, tap, out-channel)
// triple is one long contiguous axpy. Outputs are computed on the padded
// row pitch and the interior is cropped afterwards; positions that fall in
// the pitch gap are discarded.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub cin: usize,
    pub cout: usize,
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub k: [usize; 3],
    pub pad: [usize; 3],
}

impl ConvGeom {
    pub fn padded(&self) -> [usize; 3] {
        [
            self.t + 2 * self.pad[0],
            self.h + 2 * self.pad[1],
            self.w + 2 * self.pad[2],
        ]
    }

    pub fn out_dims(&self) -> [usize; 3] {
        let p = self.padded();
        [p[0] + 1 - self.k[0], p[1] + 1 - self.k[1], p[2] + 1 - self.k[2]]
    }

    fn plane(&self) -> usize {
        let p = self.padded();
        p[0] * p[1] * p[2]
    }

    // Length of the flat output run that covers every valid output position.
    fn span(&self) -> usize {
        let p = self.padded();
        let o = self.out_dims();
        (o[0] - 1) * p[1] * p[2] + (o[1] - 1) * p[2] + o[2]
    }

    fn taps(&self) -> Vec<usize> {
        let p = self.padded();
        let mut offs = Vec::with_capacity(self.k[0] * self.k[1] * self.k[2]);
        for a in 0..self.k[0] {
            for b in 0..self.k[1] {
                for c in 0..self.k[2] {
                    offs.push(a * p[1] * p[2] + b * p[2] + c);
                }
            }
        }
        offs
    }
}

fn pad_input(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let p = g.padded();
    let plane = g.plane();
    let mut out = vec![0.0; g.n * g.cin * plane];
    for nc in 0..g.n * g.cin {
        let src = &x[nc * g.t * g.h * g.w..];
        let dst = &mut out[nc * plane..];
        for t in 0..g.t {
            for h in 0..g.h {
                let s = (t * g.h + h) * g.w;
                let d = ((t + g.pad[0]) * p[1] + h + g.pad[1]) * p[2] + g.pad[2];
                dst[d..d + g.w].copy_from_slice(&src[s..s + g.w]);
            }
        }
    }
    out
}

#[inline]
fn axpy(acc: &mut [f64], alpha: f64, src: &[f64]) {
    for (a, s) in acc.iter_mut().zip(src) {
        *a += alpha * s;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four partial sums let the compiler vectorise without reassociation.
    let mut s = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for j in 0..4 {
            s[j] += a[4 * i + j] * b[4 * i + j];
        }
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}

pub(crate) fn forward(x: &[f64], weight: &[f64], g: &ConvGeom) -> Vec<f64> {
    let padded = pad_input(x, g);
    let plane = g.plane();
    let span = g.span();
    let taps = g.taps();
    let ntaps = taps.len();
    let p = g.padded();
    let o = g.out_dims();
    let out_vol = o[0] * o[1] * o[2];
    let mut out = vec![0.0; g.n * g.cout * out_vol];
    let mut acc = vec![0.0; g.cout * span];
    for n in 0..g.n {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for ci in 0..g.cin {
            let src = &padded[(n * g.cin + ci) * plane..(n * g.cin + ci + 1) * plane];
            for (tap, &off) in taps.iter().enumerate() {
                let s = &src[off..off + span];
                for co in 0..g.cout {
                    let wv = weight[(co * g.cin + ci) * ntaps + tap];
                    axpy(&mut acc[co * span..(co + 1) * span], wv, s);
                }
            }
        }
        for co in 0..g.cout {
            let a = &acc[co * span..];
            let dst = &mut out[(n * g.cout + co) * out_vol..];
            for t in 0..o[0] {
                for h in 0..o[1] {
                    let s = (t * p[1] + h) * p[2];
                    let d = (t * o[1] + h) * o[2];
                    dst[d..d + o[2]].copy_from_slice(&a[s..s + o[2]]);
                }
            }
        }
    }
    out
}

/// Returns (grad wrt input, grad wrt weight). Either may be skipped.
pub(crate) fn backward(
    x: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    g: &ConvGeom,
    need_input: bool,
    need_weight: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let plane = g.plane();
    let span = g.span();
    let taps = g.taps();
    let ntaps = taps.len();
    let p = g.padded();
    let o = g.out_dims();
    let out_vol = o[0] * o[1] * o[2];

    // Output gradient laid out on the padded pitch, zeros in the gap.
    let mut gflat = vec![0.0; g.cout * span];
    let padded = if need_weight { pad_input(x, g) } else { Vec::new() };
    let mut gw = if need_weight {
        Some(vec![0.0; weight.len()])
    } else {
        None
    };
    let mut gx = if need_input {
        Some(vec![0.0; x.len()])
    } else {
        None
    };
    let mut gpad = vec![0.0; if need_input { g.cin * plane } else { 0 }];

    for n in 0..g.n {
        for co in 0..g.cout {
            let src = &grad_out[(n * g.cout + co) * out_vol..];
            let dst = &mut gflat[co * span..(co + 1) * span];
            for t in 0..o[0] {
                for h in 0..o[1] {
                    let s = (t * o[1] + h) * o[2];
                    let d = (t * p[1] + h) * p[2];
                    dst[d..d + o[2]].copy_from_slice(&src[s..s + o[2]]);
                }
            }
        }
        if let Some(gw) = gw.as_mut() {
            for ci in 0..g.cin {
                let src = &padded[(n * g.cin + ci) * plane..(n * g.cin + ci + 1) * plane];
                for (tap, &off) in taps.iter().enumerate() {
                    let s = &src[off..off + span];
                    for co in 0..g.cout {
                        gw[(co * g.cin + ci) * ntaps + tap] += dot(&gflat[co * span..(co + 1) * span], s);
                    }
                }
            }
        }
        if let Some(gx) = gx.as_mut() {
            gpad.iter_mut().for_each(|v| *v = 0.0);
            for ci in 0..g.cin {
                let dst = &mut gpad[ci * plane..(ci + 1) * plane];
                for (tap, &off) in taps.iter().enumerate() {
                    for co in 0..g.cout {
                        let wv = weight[(co * g.cin + ci) * ntaps + tap];
                        axpy(&mut dst[off..off + span], wv, &gflat[co * span..(co + 1) * span]);
                    }
                }
            }
            for ci in 0..g.cin {
                let src = &gpad[ci * plane..];
                let dst = &mut gx[(n * g.cin + ci) * g.t * g.h * g.w..];
                for t in 0..g.t {
                    for h in 0..g.h {
                        let s = ((t + g.pad[0]) * p[1] + h + g.pad[1]) * p[2] + g.pad[2];
                        let d = (t * g.h + h) * g.w;
                        dst[d..d + g.w].copy_from_slice(&src[s..s + g.w]);
                    }
                }
            }
        }
    }
    (gx, gw)
}
