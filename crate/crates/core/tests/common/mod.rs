#![allow(dead_code)]

use evsparse_core::{Event, EventBin, Polarity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_events(rng: &mut ChaCha8Rng, n: usize, width: u16, height: u16, t0: u64, dur: u64) -> Vec<Event> {
    let mut events: Vec<Event> = (0..n)
        .map(|_| {
            let p = if rng.random_bool(0.5) {
                Polarity::On
            } else {
                Polarity::Off
            };
            Event::new(
                t0 + rng.random_range(0..dur),
                rng.random_range(0..width),
                rng.random_range(0..height),
                p,
            )
        })
        .collect();
    events.sort_by_key(|e| e.t);
    events
}

pub fn random_bin(rng: &mut ChaCha8Rng, max_events: usize, width: u16, height: u16, dur: u64) -> EventBin {
    let n = rng.random_range(0..=max_events);
    let t0 = rng.random_range(0..5u64) * dur;
    EventBin::new(0, t0, t0 + dur, random_events(rng, n, width, height, t0, dur))
}

/// Direct sum over events at every cell centre, no truncation, no
/// factorisation.
pub fn brute_field(bin: &EventBin, sx: f64, sy: f64, st: f64, dims: (usize, usize, usize), w: f64, h: f64) -> Vec<f64> {
    let (nx, ny, nt) = dims;
    let dur = (bin.t_end - bin.t_start) as f64;
    let mut out = Vec::with_capacity(nx * ny * nt);
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nt {
                let x = (i as f64 + 0.5) * w / nx as f64 - 0.5;
                let y = (j as f64 + 0.5) * h / ny as f64 - 0.5;
                let t = (k as f64 + 0.5) * dur / nt as f64;
                let mut v = 0.0;
                for e in &bin.events {
                    let dx = x - e.x as f64;
                    let dy = y - e.y as f64;
                    let dt = t - (e.t - bin.t_start) as f64;
                    let p = if e.p == Polarity::On { 1.0 } else { -1.0 };
                    v += p * (-dx * dx / (2.0 * sx * sx) - dy * dy / (2.0 * sy * sy) - dt * dt / (2.0 * st * st)).exp();
                }
                out.push(v);
            }
        }
    }
    out
}

pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
