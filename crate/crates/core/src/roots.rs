//! Grid-scan-then-bisect root finding for the one-dimensional crossing
//! functions.

use crate::error::{Error, Result};

/// Result of a scan over a closed interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Scan {
    /// A point with `g(mu) == 0` or the better end of an exhausted bracket.
    Root { mu: f64, value: f64 },
    /// `g > 0` at every grid point.
    AllPositive { at_upper: f64 },
    /// `g < 0` at every grid point.
    AllNegative { at_lower: f64 },
}

fn finite(v: f64, at: f64) -> Result<f64> {
    if v.is_nan() {
        Err(Error::NonFinite { at })
    } else {
        Ok(v)
    }
}

/// Scans `points` equally spaced values of `[lower, upper]` and bisects the
/// sign change closest to the centre until no float lies strictly inside
/// the bracket.
pub(crate) fn scan<G: FnMut(f64) -> f64>(mut g: G, lower: f64, upper: f64, points: usize) -> Result<Scan> {
    debug_assert!(lower <= upper);
    let center = lower + 0.5 * (upper - lower);
    let gc = finite(g(center), center)?;
    if gc == 0.0 {
        return Ok(Scan::Root { mu: center, value: 0.0 });
    }
    let points = points.max(3) | 1;
    let half = points / 2;
    let step = (upper - lower) / (points - 1) as f64;
    let xs: Vec<f64> = (0..points)
        .map(|i| match i {
            0 => lower,
            i if i == half => center,
            i if i + 1 == points => upper,
            i => lower + step * i as f64,
        })
        .collect();
    let mut vs = Vec::with_capacity(points);
    for (i, &x) in xs.iter().enumerate() {
        let v = if i == half { gc } else { finite(g(x), x)? };
        vs.push(v);
    }

    let mut best: Option<(f64, usize, bool)> = None;
    let mut consider = |dist: f64, i: usize, exact: bool| {
        if best.is_none_or(|(d, _, _)| dist < d) {
            best = Some((dist, i, exact));
        }
    };
    for i in 0..points {
        if vs[i] == 0.0 {
            consider((xs[i] - center).abs(), i, true);
        } else if i + 1 < points && vs[i + 1] != 0.0 && (vs[i] < 0.0) != (vs[i + 1] < 0.0) {
            let mid = 0.5 * (xs[i] + xs[i + 1]);
            consider((mid - center).abs(), i, false);
        }
    }
    let Some((_, i, exact)) = best else {
        return Ok(if vs[0] > 0.0 {
            Scan::AllPositive { at_upper: vs[points - 1] }
        } else {
            Scan::AllNegative { at_lower: vs[0] }
        });
    };
    if exact {
        return Ok(Scan::Root { mu: xs[i], value: 0.0 });
    }
    let (mut lo, mut hi) = (xs[i], xs[i + 1]);
    let (mut vlo, mut vhi) = (vs[i], vs[i + 1]);
    loop {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        let vm = finite(g(mid), mid)?;
        if vm == 0.0 {
            return Ok(Scan::Root { mu: mid, value: 0.0 });
        }
        if (vm < 0.0) == (vlo < 0.0) {
            lo = mid;
            vlo = vm;
        } else {
            hi = mid;
            vhi = vm;
        }
    }
    Ok(if vlo.abs() <= vhi.abs() {
        Scan::Root { mu: lo, value: vlo }
    } else {
        Scan::Root { mu: hi, value: vhi }
    })
}
