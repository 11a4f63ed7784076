/// xorshift64* generator.
///
/// Seeding runs the seed through one round of splitmix64 so that nearby
/// seeds give unrelated streams and the state is never zero:
///
/// ```text
/// z = seed + 0x9E3779B97F4A7C15
/// z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
/// z = (z ^ (z >> 27)) * 0x94D049BB133111EB
/// state = z ^ (z >> 31)            (replaced by 1 if it is 0)
/// ```
///
/// Each draw updates and scrambles the state (all arithmetic mod 2^64):
///
/// ```text
/// x ^= x >> 12;  x ^= x << 25;  x ^= x >> 27
/// output = x * 0x2545F4914F6CDD1D
/// ```
///
/// Derived draws: `below(n) = ((output >> 32) * n) >> 32` for `n < 2^32`,
/// and `chance(p) = (output >> 11) / 2^53 < p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        Rng {
            state: if z == 0 { 1 } else { z },
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform-ish integer in `0..n`; `n` must be in `1..2^32`.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n >= 1 && n <= u64::from(u32::MAX));
        ((self.next_u64() >> 32) * n) >> 32
    }

    /// True with probability `p`.
    pub fn chance(&mut self, p: f64) -> bool {
        ((self.next_u64() >> 11) as f64) / ((1u64 << 53) as f64) < p
    }

    pub fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.below(items.len() as u64) as usize]
    }
}
