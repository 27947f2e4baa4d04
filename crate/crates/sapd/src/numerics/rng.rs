use super::Tensor;

/// SplitMix64 generator.
///
/// Small, fast and fully specified, so seeded runs stay byte-identical across
/// platforms and dependency upgrades. Gaussian draws come from a Box-Muller
/// transform fed by this generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
    spare_gaussian: Option<f64>,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed,
            spare_gaussian: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform draw in `[0, 1)` with 53 random mantissa bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_f32(&mut self) -> f32 {
        self.next_f64() as f32
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn range_f32(&mut self, lo: f32, hi: f32) -> f32 {
        lo + (hi - lo) * self.next_f32()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn bernoulli(&mut self, p: f32) -> bool {
        self.next_f32() < p
    }

    /// Standard normal draw (Box-Muller, pair cached).
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare_gaussian.take() {
            return z;
        }
        // u1 in (0, 1] so the log is finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare_gaussian = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Gaussian-initialized tensor with standard deviation `sigma`, deterministic
/// for a given seed.
pub fn gaussian_init(shape: &[usize], sigma: f32, seed: u64) -> Tensor {
    let mut rng = SplitMix64::new(seed);
    gaussian_from(shape, sigma, &mut rng)
}

/// Gaussian-initialized tensor drawing from an existing generator.
pub fn gaussian_from(shape: &[usize], sigma: f32, rng: &mut SplitMix64) -> Tensor {
    assert!(sigma > 0.0, "sigma must be positive, got {sigma}");
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = (rng.next_gaussian() * sigma as f64) as f32;
    }
    t
}

/// Kaiming-style init for conv/linear weights trained from scratch:
/// sigma = sqrt(2 / fan_in).
pub fn he_init(shape: &[usize], fan_in: usize, rng: &mut SplitMix64) -> Tensor {
    gaussian_from(shape, (2.0 / fan_in as f32).sqrt(), rng)
}

/// Constant bias tensor of length `len`.
pub fn bias_init(len: usize, value: f32) -> Tensor {
    Tensor::filled(&[len], value)
}
