//! The Middlebury optical-flow color wheel.

const SEGMENTS: [(usize, [Ramp; 3]); 6] = [
    (15, [Ramp::One, Ramp::Up, Ramp::Zero]),   // red -> yellow
    (6, [Ramp::Down, Ramp::One, Ramp::Zero]),  // yellow -> green
    (4, [Ramp::Zero, Ramp::One, Ramp::Up]),    // green -> cyan
    (11, [Ramp::Zero, Ramp::Down, Ramp::One]), // cyan -> blue
    (13, [Ramp::Up, Ramp::Zero, Ramp::One]),   // blue -> magenta
    (6, [Ramp::One, Ramp::Zero, Ramp::Down]),  // magenta -> red
];

#[derive(Clone, Copy)]
enum Ramp {
    Zero,
    One,
    Up,
    Down,
}

impl Ramp {
    fn eval(self, i: usize, n: usize) -> f64 {
        let f = i as f64 / n as f64;
        match self {
            Ramp::Zero => 0.0,
            Ramp::One => 1.0,
            Ramp::Up => f,
            Ramp::Down => 1.0 - f,
        }
    }
}

/// The 55 wheel colors in `[0, 1]`, starting at pure red.
pub fn color_wheel() -> Vec<[f64; 3]> {
    SEGMENTS
        .iter()
        .flat_map(|&(n, ramps)| (0..n).map(move |i| ramps.map(|r| r.eval(i, n))))
        .collect()
}

/// Fully saturated wheel color for a flow direction.
///
/// The hue angle is `atan2(-v, u)`, so rightward flow is red and upward flow
/// (negative `v` in image coordinates) sits a quarter turn along the wheel.
pub fn direction_color(wheel: &[[f64; 3]], u: f64, v: f64) -> [f64; 3] {
    let n = wheel.len();
    let turn = (-v).atan2(u).rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU;
    let pos = turn * n as f64;
    let k0 = (pos.floor() as usize) % n;
    let k1 = (k0 + 1) % n;
    let f = pos - pos.floor();
    let (c0, c1) = (wheel[k0], wheel[k1]);
    [0, 1, 2].map(|c| c0[c] + f * (c1[c] - c0[c]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wheel_has_fifty_five_colors_in_range() {
        let wheel = color_wheel();
        assert_eq!(wheel.len(), 55);
        assert_eq!(wheel[0], [1.0, 0.0, 0.0]);
        assert!(wheel.iter().flatten().all(|&c| (0.0..=1.0).contains(&c)));
    }

    #[test]
    fn rightward_is_red_and_opposites_differ() {
        let wheel = color_wheel();
        assert_eq!(direction_color(&wheel, 1.0, 0.0), [1.0, 0.0, 0.0]);
        let left = direction_color(&wheel, -1.0, 0.0);
        let up = direction_color(&wheel, 0.0, -1.0);
        let down = direction_color(&wheel, 0.0, 1.0);
        for (a, b) in [(left, up), (up, down), (left, down)] {
            let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
            assert!(d > 0.3, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn color_depends_on_direction_only() {
        let wheel = color_wheel();
        assert_eq!(
            direction_color(&wheel, 0.3, -0.7),
            direction_color(&wheel, 1.2, -2.8)
        );
    }
}
