use super::{EmbedError, Vector};

/// Binary point of the fixed-point accumulator. Products and components of
/// unit vectors have magnitude at most 1, so 2^90 leaves 37 bits of
/// headroom in an i128 for the sum.
const FIXED_SHIFT: i32 = 90;

/// Exact conversion of a finite f64 into 2^-90 fixed point. Bits below
/// 2^-90 are truncated toward zero.
#[inline]
fn to_fixed(x: f64) -> i128 {
    let bits = x.to_bits();
    let negative = bits >> 63 == 1;
    let biased = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    let (mantissa, exp) = if biased == 0 {
        (frac, 1 - 1075)
    } else {
        (frac | (1u64 << 52), biased - 1075)
    };
    let shift = exp + FIXED_SHIFT;
    debug_assert!(shift <= 72, "value {x} too large for the fixed accumulator");
    let magnitude = if shift >= 0 {
        (mantissa as i128) << shift
    } else if shift > -64 {
        (mantissa >> (-shift)) as i128
    } else {
        0
    };
    if negative {
        -magnitude
    } else {
        magnitude
    }
}

#[inline]
fn from_fixed(acc: i128) -> f64 {
    // i128 -> f64 rounds to nearest; the power-of-two scale is exact.
    acc as f64 * (-FIXED_SHIFT as f64).exp2()
}

/// Dot product of two f32 slices, correctly rounded from the exact sum.
///
/// Each f32 x f32 product is exact in f64 and the products are summed in
/// integer fixed point, so the result is independent of evaluation order.
pub(crate) fn dot_exact(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let acc: i128 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| to_fixed(x as f64 * y as f64))
        .sum();
    from_fixed(acc)
}

/// Cosine similarity of two unit vectors: their dot product.
pub fn cosine(u: &Vector, v: &Vector) -> Result<f64, EmbedError> {
    if u.dim() != v.dim() {
        return Err(EmbedError::DimMismatch {
            expected: u.dim(),
            actual: v.dim(),
        });
    }
    Ok(dot_exact(u.as_slice(), v.as_slice()))
}

/// Plain left-to-right f64 dot product.
pub fn dot_naive(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for i in 0..a.len() {
        s += a[i] as f64 * b[i] as f64;
    }
    s
}

const DEGENERATE_NORM: f64 = 1e-9;
const UNIT_TOLERANCE: f64 = 1e-6;

/// Component-wise mean of unit vectors, renormalized to unit length.
///
/// Component sums are exact, so the result does not depend on the order of
/// `vectors`. A mean that is already unit-norm within 1e-6 (for example the
/// mean of identical vectors) is returned without renormalizing.
pub fn mean_vector<'a, I>(vectors: I) -> Result<Vector, EmbedError>
where
    I: IntoIterator<Item = &'a Vector>,
{
    let mut iter = vectors.into_iter();
    let first = iter.next().ok_or(EmbedError::EmptyControl)?;
    let dim = first.dim();
    let mut sums: Vec<i128> = first.as_slice().iter().map(|&c| to_fixed(c as f64)).collect();
    let mut n = 1usize;
    for v in iter {
        if v.dim() != dim {
            return Err(EmbedError::DimMismatch {
                expected: dim,
                actual: v.dim(),
            });
        }
        for (s, &c) in sums.iter_mut().zip(v.as_slice()) {
            *s += to_fixed(c as f64);
        }
        n += 1;
    }
    let mean: Vec<f64> = sums.iter().map(|&s| from_fixed(s) / n as f64).collect();
    let norm = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
    if norm.is_nan() || norm < DEGENERATE_NORM {
        return Err(EmbedError::DegenerateMean { norm });
    }
    if (norm - 1.0).abs() <= UNIT_TOLERANCE {
        return Ok(Vector::from_unit(mean.iter().map(|&m| m as f32).collect()));
    }
    Vector::from_f64(&mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashingEmbedder;
    use proptest::prelude::*;

    fn embed(t: &str) -> Vector {
        HashingEmbedder::default().embed_text(t).unwrap()
    }

    #[test]
    fn fixed_point_roundtrips_representable_values() {
        for x in [0.0, 1.0, -1.0, 0.0625, 3.0e-5, -0.123456789, 1.0 / 3.0] {
            assert_eq!(from_fixed(to_fixed(x)), x);
        }
        assert_eq!(to_fixed(f64::MIN_POSITIVE), 0);
    }

    #[test]
    fn self_and_antipodal_cosine() {
        let u = embed("privacy password sharing");
        assert!((cosine(&u, &u).unwrap() - 1.0).abs() <= 1e-6);
        assert!((cosine(&u, &-&u).unwrap() + 1.0).abs() <= 1e-6);
    }

    #[test]
    fn cosine_matches_naive_loop() {
        let u = embed("alpha beta");
        let v = embed("gamma delta");
        let got = cosine(&u, &v).unwrap();
        assert!((got - dot_naive(u.as_slice(), v.as_slice())).abs() <= 1e-12);
        assert_eq!(got, cosine(&v, &u).unwrap());
    }

    #[test]
    fn cosine_rejects_dim_mismatch() {
        let u = embed("alpha");
        let v = HashingEmbedder::new(64).embed_text("alpha").unwrap();
        assert_eq!(
            cosine(&u, &v),
            Err(EmbedError::DimMismatch { expected: 256, actual: 64 })
        );
    }

    #[test]
    fn mean_of_one_is_identity() {
        let v = embed("mom snooped my phone");
        assert_eq!(mean_vector([&v]).unwrap(), v);
    }

    #[test]
    fn mean_of_opposites_is_degenerate() {
        let v = embed("wifi");
        assert!(matches!(
            mean_vector([&v, &-&v]),
            Err(EmbedError::DegenerateMean { .. })
        ));
        assert_eq!(mean_vector(std::iter::empty::<&Vector>()), Err(EmbedError::EmptyControl));
    }

    #[test]
    fn mean_matches_naive_componentwise() {
        let vs = [embed("one two"), embed("three four five"), embed("six")];
        let got = mean_vector(&vs).unwrap();
        let mut m = vec![0.0f64; 256];
        for v in &vs {
            for (a, &c) in m.iter_mut().zip(v.as_slice()) {
                *a += c as f64 / 3.0;
            }
        }
        let n = m.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (g, e) in got.as_slice().iter().zip(&m) {
            assert!((*g as f64 - e / n).abs() <= 1e-6);
        }
    }

    proptest! {
        #[test]
        fn exact_dot_is_order_independent(seed in any::<u64>()) {
            let a = embed(&format!("t{} u{} v{}", seed % 97, seed % 13, seed % 7));
            let b = embed(&format!("u{} w{}", seed % 13, seed % 5));
            let fwd = dot_exact(a.as_slice(), b.as_slice());
            let ra: Vec<f32> = a.as_slice().iter().rev().copied().collect();
            let rb: Vec<f32> = b.as_slice().iter().rev().copied().collect();
            prop_assert_eq!(fwd, dot_exact(&ra, &rb));
            prop_assert!((fwd - dot_naive(a.as_slice(), b.as_slice())).abs() <= 1e-6);
        }

        #[test]
        fn mean_is_permutation_invariant(words in proptest::collection::vec("[a-z]{1,6}", 2..6)) {
            let vs: Vec<Vector> = words.iter().map(|w| embed(w)).collect();
            let mut rev = vs.clone();
            rev.reverse();
            match (mean_vector(&vs), mean_vector(&rev)) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
                (Err(a), Err(b)) => prop_assert_eq!(a, b),
                _ => prop_assert!(false, "one order failed"),
            }
        }
    }
}
