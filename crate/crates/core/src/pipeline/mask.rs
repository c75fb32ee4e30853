use std::fmt;

use crate::inference::ProbMask;

/// A width x height grid of panel (1) / background (0) labels.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<u8>,
}

impl fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("ones", &self.count_ones())
            .finish()
    }
}

impl BinaryMask {
    pub fn zeros(width: u32, height: u32) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        Self { width, height, bits: vec![0; width as usize * height as usize] }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = Self::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    /// Row-major 0/1 values. Returns `None` for a wrong length or a value
    /// other than 0 or 1.
    pub fn from_bits(width: u32, height: u32, bits: Vec<u8>) -> Option<Self> {
        if width == 0 || height == 0 || bits.len() != width as usize * height as usize {
            return None;
        }
        if bits.iter().any(|&b| b > 1) {
            return None;
        }
        Some(Self { width, height, bits })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[self.index(x, y)] == 1
    }

    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        let i = self.index(x, y);
        self.bits[i] = u8::from(on);
    }

    fn index(&self, x: u32, y: u32) -> usize {
        assert!(x < self.width && y < self.height, "({x}, {y}) outside {}x{}", self.width, self.height);
        y as usize * self.width as usize + x as usize
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn count_ones(&self) -> u64 {
        self.bits.iter().map(|&b| u64::from(b)).sum()
    }

    /// Nearest-neighbour resample; output stays strictly binary.
    pub fn resize(&self, out_w: u32, out_h: u32) -> BinaryMask {
        assert!(out_w > 0 && out_h > 0, "mask dimensions must be positive");
        if (out_w, out_h) == self.dimensions() {
            return self.clone();
        }
        let src_x: Vec<u32> = (0..out_w).map(|x| nearest(x, self.width, out_w)).collect();
        let mut out = BinaryMask::zeros(out_w, out_h);
        for y in 0..out_h {
            let sy = nearest(y, self.height, out_h);
            let row = &self.bits[sy as usize * self.width as usize..][..self.width as usize];
            let dst = &mut out.bits[y as usize * out_w as usize..][..out_w as usize];
            for (d, &sx) in dst.iter_mut().zip(&src_x) {
                *d = row[sx as usize];
            }
        }
        out
    }
}

/// Source index whose pixel centre is nearest the centre of output index `i`.
fn nearest(i: u32, src: u32, dst: u32) -> u32 {
    let s = (2 * u64::from(i) + 1) * u64::from(src) / (2 * u64::from(dst));
    s.min(u64::from(src) - 1) as u32
}

/// 1 where the probability reaches `threshold` (inclusive).
pub fn binarize(p: &ProbMask, threshold: f32) -> BinaryMask {
    let n = p.size();
    let bits = p.values().iter().map(|&v| u8::from(v >= threshold)).collect();
    BinaryMask::from_bits(n, n, bits).expect("probability grid is n x n")
}

pub fn resize_mask(m: &BinaryMask, out_w: u32, out_h: u32) -> BinaryMask {
    m.resize(out_w, out_h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binarize_is_inclusive() {
        let m = binarize(&ProbMask::filled(0.7).unwrap(), 0.5);
        assert_eq!(m.count_ones(), 512 * 512);
        let m = binarize(&ProbMask::filled(0.5).unwrap(), 0.5);
        assert_eq!(m.count_ones(), 512 * 512);
        let m = binarize(&ProbMask::filled(0.49).unwrap(), 0.5);
        assert_eq!(m.count_ones(), 0);
    }

    #[test]
    fn upscale_by_two_duplicates() {
        let m = BinaryMask::from_bits(2, 2, vec![0, 1, 0, 0]).unwrap();
        let big = m.resize(4, 4);
        assert_eq!(big.count_ones(), 4);
        assert!(big.get(2, 0) && big.get(3, 0) && big.get(2, 1) && big.get(3, 1));
    }

    #[test]
    fn identity_resize() {
        let m = BinaryMask::from_fn(7, 5, |x, y| (x + y) % 3 == 0);
        assert_eq!(m.resize(7, 5), m);
    }

    #[test]
    fn from_bits_rejects_non_binary() {
        assert!(BinaryMask::from_bits(2, 1, vec![0, 2]).is_none());
        assert!(BinaryMask::from_bits(2, 2, vec![0, 1]).is_none());
    }

    /// Brute-force resampler: for every output pixel, pick the source pixel
    /// whose centre is closest to the output centre in continuous coordinates.
    fn oracle_resize(m: &BinaryMask, w: u32, h: u32) -> u64 {
        let mut ones = 0;
        for y in 0..h {
            for x in 0..w {
                let cx = (f64::from(x) + 0.5) * f64::from(m.width()) / f64::from(w);
                let cy = (f64::from(y) + 0.5) * f64::from(m.height()) / f64::from(h);
                let sx = (cx.floor() as u32).min(m.width() - 1);
                let sy = (cy.floor() as u32).min(m.height() - 1);
                ones += u64::from(m.get(sx, sy));
            }
        }
        ones
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn upscale_512_to_600_stays_within_perimeter_band(
            x in 0u32..400, y in 0u32..400, w in 1u32..112, h in 1u32..112,
        ) {
            let m = BinaryMask::from_fn(512, 512, |px, py| px >= x && px < x + w && py >= y && py < y + h);
            let k = m.count_ones() as f64;
            let out = m.resize(600, 600);
            let got = out.count_ones();
            prop_assert_eq!(got, oracle_resize(&m, 600, 600));
            let expect = k * (600.0f64 / 512.0).powi(2);
            prop_assert!((got as f64 - expect).abs() <= 4.0 * 600.0);
            prop_assert!(out.bits().iter().all(|&b| b <= 1));
        }

        #[test]
        fn raising_threshold_never_adds_ones(seed in any::<u64>(), t1 in 0.01f32..0.99, dt in 0.0f32..0.5) {
            let mut s = seed;
            let probs: Vec<f32> = (0..512 * 512)
                .map(|_| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    (s >> 40) as f32 / (1u64 << 24) as f32
                })
                .collect();
            let p = ProbMask::new(probs).unwrap();
            let t2 = (t1 + dt).min(0.999);
            prop_assert!(binarize(&p, t2).count_ones() <= binarize(&p, t1).count_ones());
        }
    }
}
