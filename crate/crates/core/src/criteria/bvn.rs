//! Bivariate normal distribution function.
//!
//! Drezner–Wesolowsky correlation integral with Gauss–Legendre rules of 6, 12
//! or 20 nodes depending on `|r|`, after Genz's BVND; absolute accuracy is
//! about `1e-15`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::normal;

// Half of each symmetric Gauss–Legendre rule on [-1, 1]: positive abscissas and weights.
const X6: [f64; 3] = [0.932469514203152, 0.6612093864662645, 0.23861918608319693];
const W6: [f64; 3] = [0.17132449237916975, 0.36076157304813894, 0.46791393457269137];
const X12: [f64; 6] = [
    0.9815606342467192,
    0.9041172563704748,
    0.7699026741943047,
    0.5873179542866175,
    0.3678314989981802,
    0.1252334085114689,
];
const W12: [f64; 6] = [
    0.04717533638651202,
    0.10693932599531888,
    0.1600783285433461,
    0.20316742672306565,
    0.23349253653835464,
    0.2491470458134027,
];
const X20: [f64; 10] = [
    0.9931285991850949,
    0.9639719272779138,
    0.9122344282513258,
    0.8391169718222188,
    0.7463319064601508,
    0.636053680726515,
    0.5108670019508271,
    0.37370608871541955,
    0.2277858511416451,
    0.07652652113349734,
];
const W20: [f64; 10] = [
    0.017614007139153273,
    0.04060142980038622,
    0.06267204833410944,
    0.08327674157670467,
    0.10193011981724026,
    0.11819453196151825,
    0.13168863844917653,
    0.14209610931838187,
    0.14917298647260366,
    0.15275338713072578,
];

/// `P(X <= h, Y <= k)` for standard normals with correlation `r` in `[-1, 1]`.
pub fn bvn_cdf(h: f64, k: f64, r: f64) -> f64 {
    upper(-h, -k, r.clamp(-1.0, 1.0))
}

/// `P(X > dh, Y > dk)`.
fn upper(dh: f64, dk: f64, r: f64) -> f64 {
    if dh == f64::INFINITY || dk == f64::INFINITY {
        return 0.0;
    }
    if dh == f64::NEG_INFINITY {
        return if dk == f64::NEG_INFINITY { 1.0 } else { normal::cdf(-dk) };
    }
    if dk == f64::NEG_INFINITY {
        return normal::cdf(-dh);
    }
    if r == 0.0 {
        return normal::cdf(-dh) * normal::cdf(-dk);
    }
    let (xs, ws): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&X6, &W6)
    } else if r.abs() < 0.75 {
        (&X12, &W12)
    } else {
        (&X20, &W20)
    };
    let tp = 2.0 * PI;
    let h = dh;
    let mut k = dk;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = 0.5 * (h * h + k * k);
        let asr = 0.5 * r.asin();
        for (x, w) in xs.iter().zip(ws) {
            for node in [1.0 - x, 1.0 + x] {
                let sn = (asr * node).sin();
                bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        bvn = bvn * asr / tp + normal::cdf(-h) * normal::cdf(-k);
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let as_ = 1.0 - r * r;
            let mut a = as_.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 80.0;
            let asr = -0.5 * (bs / as_ + hk);
            if asr > -100.0 {
                bvn = a * asr.exp() * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_);
            }
            if hk > -100.0 {
                let b = bs.sqrt();
                let sp = tp.sqrt() * normal::cdf(-b / a);
                bvn -= (-0.5 * hk).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
            }
            a *= 0.5;
            let mut sum = 0.0;
            for (x, w) in xs.iter().zip(ws) {
                for node in [1.0 - x, 1.0 + x] {
                    let xs2 = (a * node) * (a * node);
                    let asr = -0.5 * (bs / xs2 + hk);
                    if asr > -100.0 {
                        let sp = 1.0 + c * xs2 * (1.0 + 5.0 * d * xs2);
                        let rs = (1.0 - xs2).sqrt();
                        let ep = (-0.5 * hk * xs2 / ((1.0 + rs) * (1.0 + rs))).exp() / rs;
                        sum += w * asr.exp() * (sp - ep);
                    }
                }
            }
            bvn = (a * sum - bvn) / tp;
        }
        if r > 0.0 {
            bvn += normal::cdf(-h.max(k));
        } else if h >= k {
            bvn = -bvn;
        } else {
            let l = if h < 0.0 {
                normal::cdf(k) - normal::cdf(h)
            } else {
                normal::cdf(-h) - normal::cdf(-k)
            };
            bvn = l - bvn;
        }
    }
    bvn.clamp(0.0, 1.0)
}

/// `P(V1 <= h, V2 <= k)` for a centered bivariate normal with covariance `cov`.
/// A zero variance makes that coordinate identically zero.
pub fn phi2(h: f64, k: f64, cov: [[f64; 2]; 2]) -> Result<f64> {
    let (v1, v2, c) = (cov[0][0], cov[1][1], cov[0][1]);
    let scale = v1.abs().max(v2.abs()).max(f64::MIN_POSITIVE);
    if !(v1 >= 0.0 && v2 >= 0.0) || (c - cov[1][0]).abs() > 1e-12 * scale || !c.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid 2x2 covariance {cov:?}")));
    }
    let ind = |x: f64| if x >= 0.0 { 1.0 } else { 0.0 };
    match (v1 > 0.0, v2 > 0.0) {
        (false, false) => Ok(ind(h) * ind(k)),
        (false, true) => Ok(ind(h) * normal::cdf(k / v2.sqrt())),
        (true, false) => Ok(ind(k) * normal::cdf(h / v1.sqrt())),
        (true, true) => {
            let r = c / (v1 * v2).sqrt();
            if r.abs() > 1.0 + 1e-10 {
                return Err(Error::InvalidArgument(format!("correlation {r} outside [-1, 1]")));
            }
            Ok(bvn_cdf(h / v1.sqrt(), k / v2.sqrt(), r))
        }
    }
}
