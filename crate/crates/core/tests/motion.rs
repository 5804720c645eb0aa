mod common;

use common::rng;
use proptest::prelude::*;
use rand::Rng;
use shearsplat::motion::VelocityTrack;

/// Midpoint quadrature of the piecewise-linear interpolant, evaluated independently of the track.
fn quadrature(anchors: &[[f64; 3]], t0: f64, t1: f64, mu: f64, t: f64, steps: usize) -> [f64; 3] {
    let n = anchors.len();
    let stride = (t1 - t0) / (n - 1) as f64;
    let v = |x: f64| -> [f64; 3] {
        let u = ((x - t0) / stride).clamp(0.0, (n - 1) as f64);
        let k = (u.floor() as usize).min(n - 2);
        let f = u - k as f64;
        std::array::from_fn(|i| (1.0 - f) * anchors[k][i] + f * anchors[k + 1][i])
    };
    let h = (t - mu) / steps as f64;
    let mut acc = [0.0; 3];
    for s in 0..steps {
        let x = mu + (s as f64 + 0.5) * h;
        let vx = v(x);
        for i in 0..3 {
            acc[i] += vx[i] * h;
        }
    }
    acc
}

fn random_track(r: &mut impl Rng) -> (Vec<[f64; 3]>, VelocityTrack) {
    let n = r.gen_range(2..10);
    let anchors: Vec<[f64; 3]> = (0..n)
        .map(|_| [r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)])
        .collect();
    let track = VelocityTrack::new(anchors.clone(), 0.0, 1.0).unwrap();
    (anchors, track)
}

#[test]
fn displacement_matches_fine_quadrature() {
    let mut r = rng(5);
    for _ in 0..50 {
        let (anchors, track) = random_track(&mut r);
        let (mu, t) = (r.gen_range(0.0..1.0), r.gen_range(0.0..1.0));
        let d = track.displacement(mu, t);
        let q = quadrature(&anchors, 0.0, 1.0, mu, t, 200_000);
        for i in 0..3 {
            assert!((d[i] - q[i]).abs() < 1e-8, "{d:?} vs {q:?}");
        }
    }
}

#[test]
fn prefix_sums_equal_direct_trapezoids() {
    let mut r = rng(6);
    for _ in 0..200 {
        let (anchors, track) = random_track(&mut r);
        let dt = track.stride();
        let mut direct = [0.0; 3];
        for k in 0..anchors.len() {
            if k > 0 {
                for i in 0..3 {
                    direct[i] += 0.5 * (anchors[k - 1][i] + anchors[k][i]) * dt;
                }
            }
            for i in 0..3 {
                assert!((track.prefix()[k][i] - direct[i]).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn anchor_weights_match_finite_differences() {
    let mut r = rng(7);
    for _ in 0..100 {
        let (anchors, track) = random_track(&mut r);
        let (mu, t) = (r.gen_range(-0.2..1.2), r.gen_range(-0.2..1.2));
        let w = track.displacement_weights(mu, t);
        for k in 0..anchors.len() {
            let bump = |h: f64| {
                let mut a = anchors.clone();
                a[k][1] += h;
                VelocityTrack::new(a, 0.0, 1.0).unwrap().displacement(mu, t)[1]
            };
            let fd = (bump(1e-6) - bump(-1e-6)) / 2e-6;
            assert!((fd - w[k]).abs() < 1e-8, "anchor {k}: {fd} vs {}", w[k]);
        }
    }
}

proptest! {
    #[test]
    fn displacement_is_additive(seed in 0u64..1000, a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
        let mut r = rng(seed);
        let (_, track) = random_track(&mut r);
        let ab = track.displacement(a, b);
        let bc = track.displacement(b, c);
        let ac = track.displacement(a, c);
        for i in 0..3 {
            prop_assert!((ab[i] + bc[i] - ac[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn displacement_is_antisymmetric(seed in 0u64..1000, a in -0.5f64..1.5, b in -0.5f64..1.5) {
        let mut r = rng(seed);
        let (_, track) = random_track(&mut r);
        let fwd = track.displacement(a, b);
        let back = track.displacement(b, a);
        for i in 0..3 {
            prop_assert_eq!(fwd[i], -back[i]);
        }
        prop_assert_eq!(track.displacement(a, a), [0.0; 3]);
    }

    #[test]
    fn velocity_interpolates_between_neighbours(seed in 0u64..1000, t in 0.0f64..1.0) {
        let mut r = rng(seed);
        let (anchors, track) = random_track(&mut r);
        let v = track.velocity_at(t);
        let k = ((t / track.stride()).floor() as usize).min(anchors.len() - 2);
        for i in 0..3 {
            let (lo, hi) = (anchors[k][i].min(anchors[k + 1][i]), anchors[k][i].max(anchors[k + 1][i]));
            prop_assert!(v[i] >= lo - 1e-12 && v[i] <= hi + 1e-12);
        }
    }
}
