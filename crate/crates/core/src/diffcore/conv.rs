//! Size-preserving dilated 3x3 cross-correlation on `(c, h, w)` planes.
//!
//! Taps that fall outside the plane read zero, which is equivalent to zero
//! padding by `dilation` on every side.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
    pub dilation: usize,
}

/// Valid output range `[lo, hi)` along one axis for a tap at offset `off`.
#[inline]
fn valid_range(n: usize, off: isize) -> (usize, usize) {
    let lo = (-off).max(0) as usize;
    let hi = (n as isize - off.max(0)).max(0) as usize;
    (lo.min(n), hi.max(lo.min(n)))
}

#[inline]
fn tap_offset(k: usize, dilation: usize) -> isize {
    (k as isize - 1) * dilation as isize
}

pub fn forward(s: ConvShape, input: &[f64], weight: &[f64], bias: &[f64], out: &mut [f64]) {
    let plane = s.h * s.w;
    for o in 0..s.c_out {
        let dst = &mut out[o * plane..(o + 1) * plane];
        dst.iter_mut().for_each(|v| *v = bias[o]);
        for i in 0..s.c_in {
            let src = &input[i * plane..(i + 1) * plane];
            for ky in 0..3 {
                let dy = tap_offset(ky, s.dilation);
                let (ylo, yhi) = valid_range(s.h, dy);
                for kx in 0..3 {
                    let dx = tap_offset(kx, s.dilation);
                    let (xlo, xhi) = valid_range(s.w, dx);
                    let wv = weight[((o * s.c_in + i) * 3 + ky) * 3 + kx];
                    if wv == 0.0 || xlo >= xhi {
                        continue;
                    }
                    for y in ylo..yhi {
                        let sy = (y as isize + dy) as usize;
                        let orow = &mut dst[y * s.w + xlo..y * s.w + xhi];
                        let sx0 = (xlo as isize + dx) as usize;
                        let irow = &src[sy * s.w + sx0..sy * s.w + sx0 + (xhi - xlo)];
                        for (a, b) in orow.iter_mut().zip(irow) {
                            *a += wv * b;
                        }
                    }
                }
            }
        }
    }
}

/// Accumulate gradients for input (if requested), weight and bias.
pub fn backward(
    s: ConvShape,
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    grad_input: Option<&mut [f64]>,
    grad_weight: Option<&mut [f64]>,
    grad_bias: Option<&mut [f64]>,
) {
    let plane = s.h * s.w;
    if let Some(gb) = grad_bias {
        for o in 0..s.c_out {
            gb[o] += grad_out[o * plane..(o + 1) * plane].iter().sum::<f64>();
        }
    }
    if let Some(gw) = grad_weight {
        for o in 0..s.c_out {
            let go = &grad_out[o * plane..(o + 1) * plane];
            for i in 0..s.c_in {
                let src = &input[i * plane..(i + 1) * plane];
                for ky in 0..3 {
                    let dy = tap_offset(ky, s.dilation);
                    let (ylo, yhi) = valid_range(s.h, dy);
                    for kx in 0..3 {
                        let dx = tap_offset(kx, s.dilation);
                        let (xlo, xhi) = valid_range(s.w, dx);
                        if xlo >= xhi {
                            continue;
                        }
                        let mut acc = 0.0;
                        for y in ylo..yhi {
                            let sy = (y as isize + dy) as usize;
                            let grow = &go[y * s.w + xlo..y * s.w + xhi];
                            let sx0 = (xlo as isize + dx) as usize;
                            let irow = &src[sy * s.w + sx0..sy * s.w + sx0 + (xhi - xlo)];
                            acc += grow.iter().zip(irow).map(|(a, b)| a * b).sum::<f64>();
                        }
                        gw[((o * s.c_in + i) * 3 + ky) * 3 + kx] += acc;
                    }
                }
            }
        }
    }
    if let Some(gi) = grad_input {
        for o in 0..s.c_out {
            let go = &grad_out[o * plane..(o + 1) * plane];
            for i in 0..s.c_in {
                let dst = &mut gi[i * plane..(i + 1) * plane];
                for ky in 0..3 {
                    let dy = tap_offset(ky, s.dilation);
                    let (ylo, yhi) = valid_range(s.h, dy);
                    for kx in 0..3 {
                        let dx = tap_offset(kx, s.dilation);
                        let (xlo, xhi) = valid_range(s.w, dx);
                        let wv = weight[((o * s.c_in + i) * 3 + ky) * 3 + kx];
                        if wv == 0.0 || xlo >= xhi {
                            continue;
                        }
                        for y in ylo..yhi {
                            let sy = (y as isize + dy) as usize;
                            let grow = &go[y * s.w + xlo..y * s.w + xhi];
                            let sx0 = (xlo as isize + dx) as usize;
                            let irow = &mut dst[sy * s.w + sx0..sy * s.w + sx0 + (xhi - xlo)];
                            for (a, b) in irow.iter_mut().zip(grow) {
                                *a += wv * b;
                            }
                        }
                    }
                }
            }
        }
    }
}
