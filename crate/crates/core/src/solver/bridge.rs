use rand::Rng;
use rand_distr::StandardNormal;

use super::{ensure_step, Vector};
use crate::error::{Error, Result};

/// Brownian-bridge moments inside `[t_start, t_end]` given the increment `dw`
/// over the whole interval.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeMoments {
    /// `E[W_s - W_{t_start} | dw]`
    pub mean_offset: Vector,
    /// `cov(W_s, W_t | dw)` is this factor times the identity.
    pub covariance_factor: f64,
}

pub fn bridge_moments(t_start: f64, t_end: f64, s: f64, t: f64, dw: &Vector) -> Result<BridgeMoments> {
    ensure_step(t_end - t_start)?;
    for (name, v) in [("s", s), ("t", t)] {
        if !(t_start..=t_end).contains(&v) {
            return Err(Error::Domain(format!(
                "{name} = {v} outside [{t_start}, {t_end}]"
            )));
        }
    }
    let dt = t_end - t_start;
    let u = s - t_start;
    let v = t - t_start;
    Ok(BridgeMoments {
        mean_offset: dw * (u / dt),
        covariance_factor: u.min(v) - u * v / dt,
    })
}

/// Splits `dw` over `[t_start, t_end]` into `r` equal-length sub-increments
/// drawn from the bridge. The last part absorbs the remainder, so the
/// left-to-right sum reproduces `dw` bitwise whenever the partial sums allow
/// it and otherwise misses by at most one ulp of the largest partial sum.
pub fn sample_bridge_refinement<R: Rng + ?Sized>(
    interval: (f64, f64),
    dw: &Vector,
    r: usize,
    rng: &mut R,
) -> Result<Vec<Vector>> {
    if r < 2 {
        return Err(Error::InvalidInput(format!("refinement count {r} must be at least 2")));
    }
    let dt = interval.1 - interval.0;
    ensure_step(dt)?;
    if dw.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite increment".to_string()));
    }
    let h = dt / r as f64;
    let mut remaining = dw.clone();
    let mut out = Vec::with_capacity(r);
    for i in 0..r - 1 {
        let left = dt - i as f64 * h;
        let sd = (h * (left - h) / left).sqrt();
        let inc = Vector::from_iterator(
            dw.len(),
            remaining
                .iter()
                .map(|&rem| rem * h / left + sd * rng.sample::<f64, _>(StandardNormal)),
        );
        remaining -= &inc;
        out.push(inc);
    }
    let mut last = Vector::zeros(dw.len());
    for c in 0..dw.len() {
        last[c] = absorb_remainder(&mut out, c, dw[c]);
    }
    out.push(last);
    Ok(out)
}

/// Snaps the leading parts of coordinate `c` onto a grid no coarser than the
/// ulp of the largest magnitude involved, so their partial sums are exact, and
/// returns the tail whose addition lands closest to `target`.
fn absorb_remainder(parts: &mut [Vector], c: usize, target: f64) -> f64 {
    let mut largest = target.abs();
    let mut acc = 0.0f64;
    for p in parts.iter() {
        acc += p[c];
        largest = largest.max(p[c].abs()).max(acc.abs());
    }
    largest = largest.max((target - acc).abs());
    if largest > 0.0 {
        let q = largest.next_up() - largest;
        for p in parts.iter_mut() {
            p[c] = (p[c] / q).round() * q;
        }
    }
    let head = parts.iter().fold(0.0, |acc, p| acc + p[c]);
    let mut tail = target - head;
    let mut best = tail;
    for _ in 0..4 {
        let sum = head + tail;
        if sum == target {
            return tail;
        }
        if (sum - target).abs() < (head + best - target).abs() {
            best = tail;
        }
        tail = if sum < target { tail.next_up() } else { tail.next_down() };
    }
    best
}
