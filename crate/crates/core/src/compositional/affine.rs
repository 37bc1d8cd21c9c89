//! Least-squares affine registration of matched 2-D positions.

/// `(source, destination)` positions.
pub type PointPair = ([f64; 2], [f64; 2]);

/// Damping added to the normal equations.
const TIKHONOV: f64 = 1e-8;
/// Relative determinant below which a point set counts as collinear.
const COLLINEAR_RATIO: f64 = 1e-10;
const REFINEMENT_STEPS: usize = 4;

/// `p -> linear * p + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    pub linear: [[f64; 2]; 2],
    pub offset: [f64; 2],
}

impl AffineTransform {
    pub fn identity() -> Self {
        Self::translation([0.0, 0.0])
    }

    pub fn translation(offset: [f64; 2]) -> Self {
        AffineTransform {
            linear: [[1.0, 0.0], [0.0, 1.0]],
            offset,
        }
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let a = &self.linear;
        [
            a[0][0] * p[0] + a[0][1] * p[1] + self.offset[0],
            a[1][0] * p[0] + a[1][1] * p[1] + self.offset[1],
        ]
    }

    /// `self ∘ inner`: apply `inner` first.
    pub fn compose(&self, inner: &AffineTransform) -> AffineTransform {
        let a = &self.linear;
        let b = &inner.linear;
        let mut linear = [[0.0; 2]; 2];
        for (r, row) in linear.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        AffineTransform {
            linear,
            offset: self.apply(inner.offset),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.linear.iter().flatten().chain(&self.offset).all(|v| v.is_finite())
    }
}

/// Which model the degeneracy ladder settles on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitKind {
    Full,
    Translation,
}

struct Moments {
    src_mean: [f64; 2],
    dst_mean: [f64; 2],
    /// Centred source scatter.
    scatter: [[f64; 2]; 2],
    /// Centred destination-source cross moments.
    cross: [[f64; 2]; 2],
}

fn moments(pairs: &[PointPair]) -> Moments {
    let n = pairs.len() as f64;
    let mut src_mean = [0.0; 2];
    let mut dst_mean = [0.0; 2];
    for (p, q) in pairs {
        for d in 0..2 {
            src_mean[d] += p[d] / n;
            dst_mean[d] += q[d] / n;
        }
    }
    let mut scatter = [[0.0; 2]; 2];
    let mut cross = [[0.0; 2]; 2];
    for (p, q) in pairs {
        let dp = [p[0] - src_mean[0], p[1] - src_mean[1]];
        let dq = [q[0] - dst_mean[0], q[1] - dst_mean[1]];
        for r in 0..2 {
            for c in 0..2 {
                scatter[r][c] += dp[r] * dp[c];
                cross[r][c] += dq[r] * dp[c];
            }
        }
    }
    Moments {
        src_mean,
        dst_mean,
        scatter,
        cross,
    }
}

fn is_collinear(s: &[[f64; 2]; 2]) -> bool {
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    let trace = s[0][0] + s[1][1];
    det <= COLLINEAR_RATIO * trace * trace
}

/// Model chosen for these pairs: a full affine needs three or more pairs
/// whose sources are not collinear.
pub fn classify_pairs(pairs: &[PointPair]) -> FitKind {
    if pairs.len() >= 3 && !is_collinear(&moments(pairs).scatter) {
        FitKind::Full
    } else {
        FitKind::Translation
    }
}

fn invert(m: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]
}

fn mul(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            *cell = a[r][0] * b[0][c] + a[r][1] * b[1][c];
        }
    }
    out
}

/// Least-squares affine map taking sources to destinations.
///
/// Three or more non-collinear pairs give a full affine fit, solved on the
/// damped normal equations and polished by iterative refinement. Fewer pairs,
/// or collinear sources, give the mean displacement with an identity linear
/// part. No pairs give the identity.
pub fn estimate_affine(pairs: &[PointPair]) -> AffineTransform {
    if pairs.is_empty() {
        return AffineTransform::identity();
    }
    let m = moments(pairs);
    let translation_only = AffineTransform::translation([m.dst_mean[0] - m.src_mean[0], m.dst_mean[1] - m.src_mean[1]]);
    if pairs.len() < 3 || is_collinear(&m.scatter) {
        return translation_only;
    }
    let s = m.scatter;
    let damped_inv = invert(&[[s[0][0] + TIKHONOV, s[0][1]], [s[1][0], s[1][1] + TIKHONOV]]);
    let mut linear = mul(&m.cross, &damped_inv);
    for _ in 0..REFINEMENT_STEPS {
        let fitted = mul(&linear, &s);
        let residual = [
            [m.cross[0][0] - fitted[0][0], m.cross[0][1] - fitted[0][1]],
            [m.cross[1][0] - fitted[1][0], m.cross[1][1] - fitted[1][1]],
        ];
        let step = mul(&residual, &damped_inv);
        for r in 0..2 {
            for c in 0..2 {
                linear[r][c] += step[r][c];
            }
        }
    }
    let mapped_mean = [
        linear[0][0] * m.src_mean[0] + linear[0][1] * m.src_mean[1],
        linear[1][0] * m.src_mean[0] + linear[1][1] * m.src_mean[1],
    ];
    let fit = AffineTransform {
        linear,
        offset: [m.dst_mean[0] - mapped_mean[0], m.dst_mean[1] - mapped_mean[1]],
    };
    if fit.is_finite() {
        fit
    } else {
        translation_only
    }
}

/// Mean Euclidean (unsquared) distance between mapped sources and destinations.
pub fn mean_residual(transform: &AffineTransform, pairs: &[PointPair]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs
        .iter()
        .map(|(p, q)| {
            let m = transform.apply(*p);
            ((m[0] - q[0]).powi(2) + (m[1] - q[1]).powi(2)).sqrt()
        })
        .sum::<f64>()
        / pairs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairs_through(t: &AffineTransform, pts: &[[f64; 2]]) -> Vec<PointPair> {
        pts.iter().map(|&p| (p, t.apply(p))).collect()
    }

    const SQUARE: [[f64; 2]; 4] = [[0.1, 0.2], [0.8, 0.25], [0.7, 0.9], [0.2, 0.6]];

    #[test]
    fn identity_pairs_give_identity() {
        let pairs = pairs_through(&AffineTransform::identity(), &SQUARE);
        let t = estimate_affine(&pairs);
        assert!((t.linear[0][0] - 1.0).abs() < 1e-12 && t.linear[0][1].abs() < 1e-12);
        assert!(t.offset[0].abs() < 1e-12 && t.offset[1].abs() < 1e-12);
        assert!(mean_residual(&t, &pairs) < 1e-12);
    }

    #[test]
    fn recovers_known_affine() {
        let truth = AffineTransform {
            linear: [[2.0, 0.0], [0.0, 1.0]],
            offset: [0.1, -0.2],
        };
        let pairs = pairs_through(&truth, &SQUARE);
        let t = estimate_affine(&pairs);
        for r in 0..2 {
            for c in 0..2 {
                assert!((t.linear[r][c] - truth.linear[r][c]).abs() < 1e-9);
            }
            assert!((t.offset[r] - truth.offset[r]).abs() < 1e-9);
        }
        assert!(mean_residual(&t, &pairs) < 1e-12);
        assert_eq!(classify_pairs(&pairs), FitKind::Full);
    }

    #[test]
    fn degenerate_ladder() {
        let two = vec![([0.0, 0.0], [0.1, 0.3]), ([1.0, 0.0], [1.3, 0.1])];
        let t = estimate_affine(&two);
        assert_eq!(t.linear, [[1.0, 0.0], [0.0, 1.0]]);
        assert!((t.offset[0] - 0.2).abs() < 1e-15 && (t.offset[1] - 0.2).abs() < 1e-15);
        assert_eq!(classify_pairs(&two), FitKind::Translation);

        let one = vec![([0.5, 0.5], [0.6, 0.4])];
        let t = estimate_affine(&one);
        assert!((t.apply([0.5, 0.5])[0] - 0.6).abs() < 1e-15);

        let collinear: Vec<PointPair> = (0..5)
            .map(|i| {
                let x = i as f64 * 0.2;
                ([x, 2.0 * x], [x + 0.1, 2.0 * x])
            })
            .collect();
        assert_eq!(classify_pairs(&collinear), FitKind::Translation);
        let t = estimate_affine(&collinear);
        assert_eq!(t.linear, [[1.0, 0.0], [0.0, 1.0]]);
        assert!(mean_residual(&t, &collinear) < 1e-15);

        assert_eq!(estimate_affine(&[]), AffineTransform::identity());
    }

    fn affine_strategy() -> impl Strategy<Value = AffineTransform> {
        (
            proptest::array::uniform4(-2.0f64..2.0),
            proptest::array::uniform2(-1.0f64..1.0),
        )
            .prop_filter("non-degenerate", |(l, _)| (l[0] * l[3] - l[1] * l[2]).abs() > 0.1)
            .prop_map(|(l, o)| AffineTransform {
                linear: [[l[0], l[1]], [l[2], l[3]]],
                offset: o,
            })
    }

    proptest! {
        #[test]
        fn exact_sets_have_tiny_residual(
            t in affine_strategy(),
            pts in proptest::collection::vec(proptest::array::uniform2(0.0f64..1.0), 4..10),
        ) {
            let pairs = pairs_through(&t, &pts);
            prop_assume!(classify_pairs(&pairs) == FitKind::Full);
            let fit = estimate_affine(&pairs);
            prop_assert!(mean_residual(&fit, &pairs) < 1e-9);
        }

        #[test]
        fn composition_is_associative(a in affine_strategy(), b in affine_strategy(), c in affine_strategy()) {
            let left = a.compose(&b).compose(&c);
            let right = a.compose(&b.compose(&c));
            for r in 0..2 {
                for k in 0..2 {
                    prop_assert!((left.linear[r][k] - right.linear[r][k]).abs() < 1e-9);
                }
                prop_assert!((left.offset[r] - right.offset[r]).abs() < 1e-9);
            }
            let p = [0.3, 0.7];
            let direct = a.apply(b.apply(c.apply(p)));
            let composed = left.apply(p);
            prop_assert!((direct[0] - composed[0]).abs() < 1e-9);
        }
    }
}
