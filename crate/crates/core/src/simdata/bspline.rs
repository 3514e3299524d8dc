//! B-spline basis by the Cox-de Boor recursion.

/// Clamped cubic knot vector on `[-3, 3]` with no interior knots, giving the
/// four-function (4 df) basis used by the additive model.
pub const CUBIC_KNOTS: [f64; 8] = [-3.0, -3.0, -3.0, -3.0, 3.0, 3.0, 3.0, 3.0];
pub const CUBIC_DEGREE: usize = 3;

/// All `knots.len() − degree − 1` basis functions of the given degree at `x`.
///
/// Half-open spans, except that the last nonempty span is closed so the
/// basis still sums to one at the right boundary. Outside
/// `[knots[degree], knots[len−degree−1]]` every function is zero.
pub fn basis(knots: &[f64], degree: usize, x: f64) -> Vec<f64> {
    assert!(knots.len() >= degree + 2, "need at least degree + 2 knots");
    assert!(knots.windows(2).all(|w| w[0] <= w[1]), "knots must be nondecreasing");
    let spans = knots.len() - 1;
    let last_nonempty = (0..spans).rev().find(|&i| knots[i] < knots[i + 1]);
    let mut b: Vec<f64> = (0..spans)
        .map(|i| {
            let inside = knots[i] <= x && x < knots[i + 1];
            let right_end = Some(i) == last_nonempty && x == knots[i + 1];
            if inside || right_end {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    for k in 1..=degree {
        b = (0..spans - k)
            .map(|i| {
                let left = ratio(x - knots[i], knots[i + k] - knots[i]) * b[i];
                let right = ratio(knots[i + k + 1] - x, knots[i + k + 1] - knots[i + 1]) * b[i + 1];
                left + right
            })
            .collect();
    }
    b
}

/// `num/den` with the recursion's `0/0 = 0` convention.
fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// The four cubic basis functions at `x`, with `x` clamped into `[-3, 3]`.
pub fn cubic_basis(x: f64) -> [f64; 4] {
    let v = basis(&CUBIC_KNOTS, CUBIC_DEGREE, x.clamp(-3.0, 3.0));
    [v[0], v[1], v[2], v[3]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity() {
        for &x in &[-3.0, -2.2, -1e-9, 0.0, 0.5, 1.7, 3.0] {
            let s: f64 = cubic_basis(x).iter().sum();
            assert!((s - 1.0).abs() < 1e-14, "x = {x}: {s}");
        }
        // general knots with interior points, at each span midpoint
        let knots = [0.0, 0.0, 0.0, 0.0, 1.0, 2.5, 4.0, 4.0, 4.0, 4.0];
        for w in [0.0, 1.0, 2.5, 4.0].windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let s: f64 = basis(&knots, 3, mid).iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn clamped_cubic_is_bernstein() {
        // without interior knots the basis is the degree-3 Bernstein basis on [-3, 3]
        for &x in &[-2.5, -1.0, 0.0, 0.7, 2.9] {
            let u: f64 = (x + 3.0) / 6.0;
            let bern = [
                (1.0 - u).powi(3),
                3.0 * u * (1.0 - u).powi(2),
                3.0 * u * u * (1.0 - u),
                u.powi(3),
            ];
            let b = cubic_basis(x);
            for k in 0..4 {
                assert!((b[k] - bern[k]).abs() < 1e-14);
            }
        }
        assert_eq!(cubic_basis(-10.0), [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(cubic_basis(10.0), [0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn degree_zero_is_indicator() {
        let b = basis(&[0.0, 1.0, 2.0], 0, 1.0);
        assert_eq!(b, vec![0.0, 1.0]);
        assert_eq!(basis(&[0.0, 1.0, 2.0], 0, 2.0), vec![0.0, 1.0]);
        assert_eq!(basis(&[0.0, 1.0, 2.0], 0, 2.5), vec![0.0, 0.0]);
    }
}
