//! 3x3, stride-1, unpadded 2-D convolution over `[B, C_in, H, W]` inputs
//! with `[C_out, C_in, 3, 3]` kernels.

use crate::error::{Error, Result};

use super::tensor::{Scalar, Tensor};

const K: usize = 3;

struct Dims {
    batch: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
}

impl Dims {
    fn out_h(&self) -> usize {
        self.h - (K - 1)
    }

    fn out_w(&self) -> usize {
        self.w - (K - 1)
    }
}

fn dims<T: Scalar>(x: &Tensor<T>, k: &Tensor<T>) -> Result<Dims> {
    let (xs, ks) = (x.shape(), k.shape());
    let ok = xs.len() == 4
        && ks.len() == 4
        && ks[1] == xs[1]
        && ks[2] == K
        && ks[3] == K
        && xs[2] >= K
        && xs[3] >= K;
    if !ok {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            lhs: xs.to_vec(),
            rhs: ks.to_vec(),
        });
    }
    Ok(Dims {
        batch: xs[0],
        c_in: xs[1],
        h: xs[2],
        w: xs[3],
        c_out: ks[0],
    })
}

pub(crate) fn conv2d_forward<T: Scalar>(x: &Tensor<T>, k: &Tensor<T>) -> Result<Tensor<T>> {
    let d = dims(x, k)?;
    let (oh, ow) = (d.out_h(), d.out_w());
    let (xd, kd) = (x.data(), k.data());
    let mut out = vec![T::zero(); d.batch * d.c_out * oh * ow];
    for b in 0..d.batch {
        for co in 0..d.c_out {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = T::zero();
                    for ci in 0..d.c_in {
                        for u in 0..K {
                            for v in 0..K {
                                let xv = xd[((b * d.c_in + ci) * d.h + i + u) * d.w + j + v];
                                let kv = kd[((co * d.c_in + ci) * K + u) * K + v];
                                acc = acc + xv * kv;
                            }
                        }
                    }
                    out[((b * d.c_out + co) * oh + i) * ow + j] = acc;
                }
            }
        }
    }
    Tensor::new(vec![d.batch, d.c_out, oh, ow], out)
}

pub(crate) fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    dy: &[T],
) -> (Vec<T>, Vec<T>) {
    let d = dims(x, k).expect("shapes validated in forward");
    let (oh, ow) = (d.out_h(), d.out_w());
    let (xd, kd) = (x.data(), k.data());
    let mut dx = vec![T::zero(); xd.len()];
    let mut dk = vec![T::zero(); kd.len()];
    for b in 0..d.batch {
        for co in 0..d.c_out {
            for i in 0..oh {
                for j in 0..ow {
                    let g = dy[((b * d.c_out + co) * oh + i) * ow + j];
                    for ci in 0..d.c_in {
                        for u in 0..K {
                            for v in 0..K {
                                let xi = ((b * d.c_in + ci) * d.h + i + u) * d.w + j + v;
                                let ki = ((co * d.c_in + ci) * K + u) * K + v;
                                dx[xi] = dx[xi] + g * kd[ki];
                                dk[ki] = dk[ki] + g * xd[xi];
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dk)
}
