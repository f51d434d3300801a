//! Layer primitives on `(channels, height, width)` feature maps: 3x3 same-
//! padding convolutions and transposed convolutions, 2x2 average pooling,
//! nearest-neighbor upsampling, and pointwise activations.  Every forward
//! pass has an exact reverse-mode counterpart.

use ndarray::{Array3, Array4};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActKind {
    Relu,
    LeakyRelu,
    Softplus,
}

pub(crate) const LEAKY_SLOPE: f64 = 0.1;

impl ActKind {
    pub(crate) fn value(self, t: f64) -> f64 {
        match self {
            ActKind::Relu => t.max(0.0),
            ActKind::LeakyRelu => {
                if t >= 0.0 {
                    t
                } else {
                    LEAKY_SLOPE * t
                }
            }
            ActKind::Softplus => {
                if t > 30.0 {
                    t
                } else if t < -30.0 {
                    t.exp()
                } else {
                    t.exp().ln_1p()
                }
            }
        }
    }

    pub(crate) fn deriv(self, t: f64) -> f64 {
        match self {
            ActKind::Relu => {
                if t > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActKind::LeakyRelu => {
                if t >= 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            ActKind::Softplus => 1.0 / (1.0 + (-t).exp()),
        }
    }
}

pub(crate) fn act_forward(kind: ActKind, x: &Array3<f64>) -> Array3<f64> {
    x.mapv(|t| kind.value(t))
}

/// Chain-rule factor: `g .* f'(pre)`.
pub(crate) fn act_input_grad(kind: ActKind, pre: &Array3<f64>, g: &Array3<f64>) -> Array3<f64> {
    let mut out = g.clone();
    out.zip_mut_with(pre, |gi, &p| *gi *= kind.deriv(p));
    out
}

fn flat(x: &Array3<f64>) -> &[f64] {
    x.as_slice().expect("feature maps are standard layout")
}

/// Valid output row range for kernel row offset `dy` (same padding).
fn row_range(extent: usize, d: usize) -> (usize, usize) {
    (1usize.saturating_sub(d), (extent + 1 - d).min(extent))
}

/// 3x3 convolution with padding 1.  `w` has shape `[out_ch, in_ch, 3, 3]`.
pub(crate) fn conv3x3(w: &Array4<f64>, b: &[f64], x: &Array3<f64>) -> Array3<f64> {
    let (oc, ic, _, _) = w.dim();
    let (icx, h, wd) = x.dim();
    assert_eq!(ic, icx, "channel mismatch");
    assert_eq!(b.len(), oc);
    let xs = flat(x);
    let wf = w.as_slice().expect("kernels are standard layout");
    let mut out = Array3::zeros((oc, h, wd));
    let os = out.as_slice_mut().unwrap();
    let plane = h * wd;
    for o in 0..oc {
        let obase = o * plane;
        os[obase..obase + plane].fill(b[o]);
        for i in 0..ic {
            let ibase = i * plane;
            let kbase = (o * ic + i) * 9;
            for dy in 0..3 {
                let (ylo, yhi) = row_range(h, dy);
                for dx in 0..3 {
                    let k = wf[kbase + dy * 3 + dx];
                    if k == 0.0 {
                        continue;
                    }
                    let (xlo, xhi) = row_range(wd, dx);
                    if xlo >= xhi {
                        continue;
                    }
                    for y in ylo..yhi {
                        let ys = y + dy - 1;
                        let dst = obase + y * wd;
                        let src = ibase + ys * wd + xlo + dx - 1;
                        let len = xhi - xlo;
                        let (dsts, srcs) = (&mut os[dst + xlo..dst + xlo + len], &xs[src..src + len]);
                        for (d, s) in dsts.iter_mut().zip(srcs) {
                            *d += k * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Input gradient of [`conv3x3`]; does not depend on the forward input.
pub(crate) fn conv3x3_input_grad(
    w: &Array4<f64>,
    gout: &Array3<f64>,
    in_shape: (usize, usize, usize),
) -> Array3<f64> {
    let (oc, ic, _, _) = w.dim();
    let (ocg, h, wd) = gout.dim();
    assert_eq!(oc, ocg);
    assert_eq!((h, wd), (in_shape.1, in_shape.2));
    assert_eq!(ic, in_shape.0);
    let gs = flat(gout);
    let wf = w.as_slice().unwrap();
    let mut gx = Array3::zeros(in_shape);
    let gxs = gx.as_slice_mut().unwrap();
    let plane = h * wd;
    for o in 0..oc {
        let obase = o * plane;
        for i in 0..ic {
            let ibase = i * plane;
            let kbase = (o * ic + i) * 9;
            for dy in 0..3 {
                let (ylo, yhi) = row_range(h, dy);
                for dx in 0..3 {
                    let k = wf[kbase + dy * 3 + dx];
                    if k == 0.0 {
                        continue;
                    }
                    let (xlo, xhi) = row_range(wd, dx);
                    if xlo >= xhi {
                        continue;
                    }
                    for y in ylo..yhi {
                        let ys = y + dy - 1;
                        let src = obase + y * wd + xlo;
                        let dst = ibase + ys * wd + xlo + dx - 1;
                        let len = xhi - xlo;
                        let (dsts, srcs) = (&mut gxs[dst..dst + len], &gs[src..src + len]);
                        for (d, s) in dsts.iter_mut().zip(srcs) {
                            *d += k * s;
                        }
                    }
                }
            }
        }
    }
    gx
}

/// Kernel and bias gradients of [`conv3x3`].
pub(crate) fn conv3x3_param_grads(
    x: &Array3<f64>,
    gout: &Array3<f64>,
) -> (Array4<f64>, Vec<f64>) {
    let (ic, h, wd) = x.dim();
    let (oc, gh, gw) = gout.dim();
    assert_eq!((h, wd), (gh, gw));
    let xs = flat(x);
    let gs = flat(gout);
    let mut gk = Array4::zeros((oc, ic, 3, 3));
    let gkf = gk.as_slice_mut().unwrap();
    let mut gb = vec![0.0; oc];
    let plane = h * wd;
    for o in 0..oc {
        let obase = o * plane;
        gb[o] = gs[obase..obase + plane].iter().sum();
        for i in 0..ic {
            let ibase = i * plane;
            let kbase = (o * ic + i) * 9;
            for dy in 0..3 {
                let (ylo, yhi) = row_range(h, dy);
                for dx in 0..3 {
                    let (xlo, xhi) = row_range(wd, dx);
                    if xlo >= xhi {
                        continue;
                    }
                    let mut acc = 0.0;
                    for y in ylo..yhi {
                        let ys = y + dy - 1;
                        let grow = obase + y * wd + xlo;
                        let xrow = ibase + ys * wd + xlo + dx - 1;
                        let len = xhi - xlo;
                        acc += gs[grow..grow + len]
                            .iter()
                            .zip(&xs[xrow..xrow + len])
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    }
                    gkf[kbase + dy * 3 + dx] = acc;
                }
            }
        }
    }
    (gk, gb)
}

/// 3x3 transposed convolution with padding 1 (the scatter adjoint of
/// [`conv3x3`] up to kernel layout).  `w` has shape `[in_ch, out_ch, 3, 3]`.
pub(crate) fn convt3x3(w: &Array4<f64>, b: &[f64], x: &Array3<f64>) -> Array3<f64> {
    let (ic, oc, _, _) = w.dim();
    let (icx, h, wd) = x.dim();
    assert_eq!(ic, icx, "channel mismatch");
    assert_eq!(b.len(), oc);
    let xs = flat(x);
    let wf = w.as_slice().unwrap();
    let mut out = Array3::zeros((oc, h, wd));
    let os = out.as_slice_mut().unwrap();
    let plane = h * wd;
    for o in 0..oc {
        let obase = o * plane;
        os[obase..obase + plane].fill(b[o]);
    }
    for i in 0..ic {
        let ibase = i * plane;
        for o in 0..oc {
            let obase = o * plane;
            let kbase = (i * oc + o) * 9;
            for dy in 0..3 {
                let (ylo, yhi) = row_range(h, dy);
                for dx in 0..3 {
                    let k = wf[kbase + dy * 3 + dx];
                    if k == 0.0 {
                        continue;
                    }
                    let (xlo, xhi) = row_range(wd, dx);
                    if xlo >= xhi {
                        continue;
                    }
                    for y in ylo..yhi {
                        let yo = y + dy - 1;
                        let src = ibase + y * wd + xlo;
                        let dst = obase + yo * wd + xlo + dx - 1;
                        let len = xhi - xlo;
                        let (dsts, srcs) = (&mut os[dst..dst + len], &xs[src..src + len]);
                        for (d, s) in dsts.iter_mut().zip(srcs) {
                            *d += k * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Input gradient of [`convt3x3`] (a gather with the same kernel).
pub(crate) fn convt3x3_input_grad(
    w: &Array4<f64>,
    gout: &Array3<f64>,
    in_shape: (usize, usize, usize),
) -> Array3<f64> {
    let (ic, oc, _, _) = w.dim();
    let (ocg, h, wd) = gout.dim();
    assert_eq!(oc, ocg);
    assert_eq!(ic, in_shape.0);
    let gs = flat(gout);
    let wf = w.as_slice().unwrap();
    let mut gx = Array3::zeros(in_shape);
    let gxs = gx.as_slice_mut().unwrap();
    let plane = h * wd;
    for i in 0..ic {
        let ibase = i * plane;
        for o in 0..oc {
            let obase = o * plane;
            let kbase = (i * oc + o) * 9;
            for dy in 0..3 {
                let (ylo, yhi) = row_range(h, dy);
                for dx in 0..3 {
                    let k = wf[kbase + dy * 3 + dx];
                    if k == 0.0 {
                        continue;
                    }
                    let (xlo, xhi) = row_range(wd, dx);
                    if xlo >= xhi {
                        continue;
                    }
                    for y in ylo..yhi {
                        let yo = y + dy - 1;
                        let dst = ibase + y * wd + xlo;
                        let src = obase + yo * wd + xlo + dx - 1;
                        let len = xhi - xlo;
                        let (dsts, srcs) = (&mut gxs[dst..dst + len], &gs[src..src + len]);
                        for (d, s) in dsts.iter_mut().zip(srcs) {
                            *d += k * s;
                        }
                    }
                }
            }
        }
    }
    gx
}

/// Kernel and bias gradients of [`convt3x3`].
pub(crate) fn convt3x3_param_grads(
    x: &Array3<f64>,
    gout: &Array3<f64>,
) -> (Array4<f64>, Vec<f64>) {
    let (ic, h, wd) = x.dim();
    let (oc, gh, gw) = gout.dim();
    assert_eq!((h, wd), (gh, gw));
    let xs = flat(x);
    let gs = flat(gout);
    let mut gk = Array4::zeros((ic, oc, 3, 3));
    let gkf = gk.as_slice_mut().unwrap();
    let mut gb = vec![0.0; oc];
    let plane = h * wd;
    for o in 0..oc {
        let obase = o * plane;
        gb[o] = gs[obase..obase + plane].iter().sum();
    }
    for i in 0..ic {
        let ibase = i * plane;
        for o in 0..oc {
            let obase = o * plane;
            let kbase = (i * oc + o) * 9;
            for dy in 0..3 {
                let (ylo, yhi) = row_range(h, dy);
                for dx in 0..3 {
                    let (xlo, xhi) = row_range(wd, dx);
                    if xlo >= xhi {
                        continue;
                    }
                    let mut acc = 0.0;
                    for y in ylo..yhi {
                        let yo = y + dy - 1;
                        let xrow = ibase + y * wd + xlo;
                        let grow = obase + yo * wd + xlo + dx - 1;
                        let len = xhi - xlo;
                        acc += xs[xrow..xrow + len]
                            .iter()
                            .zip(&gs[grow..grow + len])
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    }
                    gkf[kbase + dy * 3 + dx] = acc;
                }
            }
        }
    }
    (gk, gb)
}

/// 2x2 average pooling; spatial extents must be even.
pub(crate) fn avgpool2(x: &Array3<f64>) -> Array3<f64> {
    let (c, h, w) = x.dim();
    assert!(h % 2 == 0 && w % 2 == 0, "pooling needs even extents");
    let (ho, wo) = (h / 2, w / 2);
    let xs = flat(x);
    let mut out = Array3::zeros((c, ho, wo));
    let os = out.as_slice_mut().unwrap();
    for ch in 0..c {
        for y in 0..ho {
            let r0 = ch * h * w + 2 * y * w;
            let r1 = r0 + w;
            let obase = ch * ho * wo + y * wo;
            for x0 in 0..wo {
                let s = xs[r0 + 2 * x0] + xs[r0 + 2 * x0 + 1] + xs[r1 + 2 * x0] + xs[r1 + 2 * x0 + 1];
                os[obase + x0] = 0.25 * s;
            }
        }
    }
    out
}

pub(crate) fn avgpool2_backward(g: &Array3<f64>) -> Array3<f64> {
    let (c, ho, wo) = g.dim();
    let (h, w) = (2 * ho, 2 * wo);
    let gs = flat(g);
    let mut out = Array3::zeros((c, h, w));
    let os = out.as_slice_mut().unwrap();
    for ch in 0..c {
        for y in 0..ho {
            let r0 = ch * h * w + 2 * y * w;
            let r1 = r0 + w;
            let gbase = ch * ho * wo + y * wo;
            for x0 in 0..wo {
                let v = 0.25 * gs[gbase + x0];
                os[r0 + 2 * x0] += v;
                os[r0 + 2 * x0 + 1] += v;
                os[r1 + 2 * x0] += v;
                os[r1 + 2 * x0 + 1] += v;
            }
        }
    }
    out
}

/// Nearest-neighbor 2x upsampling.
pub(crate) fn upsample2(x: &Array3<f64>) -> Array3<f64> {
    let (c, h, w) = x.dim();
    let (ho, wo) = (2 * h, 2 * w);
    let xs = flat(x);
    let mut out = Array3::zeros((c, ho, wo));
    let os = out.as_slice_mut().unwrap();
    for ch in 0..c {
        for y in 0..h {
            let ibase = ch * h * w + y * w;
            let r0 = ch * ho * wo + 2 * y * wo;
            let r1 = r0 + wo;
            for x0 in 0..w {
                let v = xs[ibase + x0];
                os[r0 + 2 * x0] = v;
                os[r0 + 2 * x0 + 1] = v;
                os[r1 + 2 * x0] = v;
                os[r1 + 2 * x0 + 1] = v;
            }
        }
    }
    out
}

pub(crate) fn upsample2_backward(g: &Array3<f64>) -> Array3<f64> {
    let (c, ho, wo) = g.dim();
    assert!(ho % 2 == 0 && wo % 2 == 0);
    let (h, w) = (ho / 2, wo / 2);
    let gs = flat(g);
    let mut out = Array3::zeros((c, h, w));
    let os = out.as_slice_mut().unwrap();
    for ch in 0..c {
        for y in 0..h {
            let obase = ch * h * w + y * w;
            let r0 = ch * ho * wo + 2 * y * wo;
            let r1 = r0 + wo;
            for x0 in 0..w {
                os[obase + x0] =
                    gs[r0 + 2 * x0] + gs[r0 + 2 * x0 + 1] + gs[r1 + 2 * x0] + gs[r1 + 2 * x0 + 1];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random3(rng: &mut impl Rng, shape: (usize, usize, usize)) -> Array3<f64> {
        Array::from_shape_simple_fn(shape, || rng.random::<f64>() - 0.5)
    }

    fn random4(rng: &mut impl Rng, shape: (usize, usize, usize, usize)) -> Array4<f64> {
        Array::from_shape_simple_fn(shape, || rng.random::<f64>() - 0.5)
    }

    fn dot3(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut w = Array4::zeros((1, 1, 3, 3));
        w[[0, 0, 1, 1]] = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = random3(&mut rng, (1, 5, 7));
        let y = conv3x3(&w, &[0.0], &x);
        assert_eq!(x, y);
        let yt = convt3x3(&w, &[0.0], &x);
        assert_eq!(x, yt);
    }

    #[test]
    fn shift_kernel_respects_zero_padding() {
        // kernel picking the left neighbor: out[y][x] = in[y][x-1]
        let mut w = Array4::zeros((1, 1, 3, 3));
        w[[0, 0, 1, 0]] = 1.0;
        let x = Array3::from_shape_vec((1, 1, 3), vec![1.0, 2.0, 3.0]).unwrap();
        let y = conv3x3(&w, &[0.0], &x);
        assert_eq!(y.as_slice().unwrap(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn conv_input_grad_is_the_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random4(&mut rng, (3, 2, 3, 3));
        let x = random3(&mut rng, (2, 6, 5));
        let y = random3(&mut rng, (3, 6, 5));
        let kx = conv3x3(&w, &[0.0; 3], &x);
        let kty = conv3x3_input_grad(&w, &y, x.dim());
        assert!((dot3(&kx, &y) - dot3(&x, &kty)).abs() < 1e-12);
    }

    #[test]
    fn convt_input_grad_is_the_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = random4(&mut rng, (2, 3, 3, 3));
        let x = random3(&mut rng, (2, 4, 6));
        let y = random3(&mut rng, (3, 4, 6));
        let kx = convt3x3(&w, &[0.0; 3], &x);
        let kty = convt3x3_input_grad(&w, &y, x.dim());
        assert!((dot3(&kx, &y) - dot3(&x, &kty)).abs() < 1e-12);
    }

    #[test]
    fn conv_param_grads_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut w = random4(&mut rng, (2, 2, 3, 3));
        let b = vec![0.1, -0.2];
        let x = random3(&mut rng, (2, 4, 4));
        let cot = random3(&mut rng, (2, 4, 4));
        // loss = <conv(w, b, x), cot>
        let (gw, gb) = {
            let _ = conv3x3(&w, &b, &x);
            conv3x3_param_grads(&x, &cot)
        };
        let h = 1e-6;
        for idx in [[0usize, 0, 0, 0], [1, 0, 2, 1], [0, 1, 1, 2]] {
            let orig = w[idx];
            w[idx] = orig + h;
            let up = dot3(&conv3x3(&w, &b, &x), &cot);
            w[idx] = orig - h;
            let dn = dot3(&conv3x3(&w, &b, &x), &cot);
            w[idx] = orig;
            let fd = (up - dn) / (2.0 * h);
            assert!((gw[idx] - fd).abs() < 1e-8, "{:?}: {} vs {}", idx, gw[idx], fd);
        }
        let mut b2 = b.clone();
        b2[1] += h;
        let up = dot3(&conv3x3(&w, &b2, &x), &cot);
        b2[1] -= 2.0 * h;
        let dn = dot3(&conv3x3(&w, &b2, &x), &cot);
        assert!((gb[1] - (up - dn) / (2.0 * h)).abs() < 1e-8);
    }

    #[test]
    fn convt_param_grads_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut w = random4(&mut rng, (2, 3, 3, 3));
        let b = vec![0.0; 3];
        let x = random3(&mut rng, (2, 4, 4));
        let cot = random3(&mut rng, (3, 4, 4));
        let (gw, _gb) = convt3x3_param_grads(&x, &cot);
        let h = 1e-6;
        for idx in [[0usize, 0, 0, 0], [1, 2, 2, 2], [0, 1, 1, 0]] {
            let orig = w[idx];
            w[idx] = orig + h;
            let up = dot3(&convt3x3(&w, &b, &x), &cot);
            w[idx] = orig - h;
            let dn = dot3(&convt3x3(&w, &b, &x), &cot);
            w[idx] = orig;
            let fd = (up - dn) / (2.0 * h);
            assert!((gw[idx] - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn pooling_and_upsampling_are_adjoint_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random3(&mut rng, (3, 6, 8));
        let y = random3(&mut rng, (3, 3, 4));
        assert!((dot3(&avgpool2(&x), &y) - dot3(&x, &avgpool2_backward(&y))).abs() < 1e-12);
        let a = random3(&mut rng, (2, 3, 3));
        let c = random3(&mut rng, (2, 6, 6));
        assert!((dot3(&upsample2(&a), &c) - dot3(&a, &upsample2_backward(&c))).abs() < 1e-12);
    }

    #[test]
    fn activation_derivatives_match_finite_differences() {
        let h = 1e-6;
        for kind in [ActKind::Relu, ActKind::LeakyRelu, ActKind::Softplus] {
            for t in [-2.0, -0.4, 0.3, 1.7, 25.0] {
                let fd = (kind.value(t + h) - kind.value(t - h)) / (2.0 * h);
                assert!((kind.deriv(t) - fd).abs() < 1e-6, "{kind:?} at {t}");
            }
        }
    }

    #[test]
    fn softplus_is_stable_at_extremes() {
        assert!(ActKind::Softplus.value(1000.0).is_finite());
        assert!(ActKind::Softplus.value(-1000.0) >= 0.0);
        assert!(ActKind::Softplus.deriv(1000.0).is_finite());
    }
}
