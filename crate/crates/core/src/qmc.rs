//! Low-discrepancy point sequences used for sampled diagnostics.

const PRIMES: [u64; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131,
];

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv_base = 1.0 / base as f64;
    let mut factor = inv_base;
    let mut value = 0.0;
    while index > 0 {
        value += (index % base) as f64 * factor;
        index /= base;
        factor *= inv_base;
    }
    value
}

/// Halton sequence on the unit cube `[0,1)^dim`.
///
/// Dimensions beyond the built-in prime table are rejected at construction.
#[derive(Debug, Clone)]
pub struct Halton {
    dim: usize,
    index: u64,
}

impl Halton {
    /// Starts the sequence at `skip + 1` (index 0 is the origin and is always skipped).
    pub fn new(dim: usize, skip: u64) -> Option<Self> {
        if dim == 0 || dim > PRIMES.len() {
            return None;
        }
        Some(Self { dim, index: skip + 1 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes the next point into `out`.
    pub fn next_into(&mut self, out: &mut [f64]) {
        for (d, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = radical_inverse(self.index, PRIMES[d]);
        }
        self.index += 1;
    }

    /// Next point mapped affinely onto `[-1,1]^dim`.
    pub fn next_symmetric(&mut self) -> Vec<f64> {
        let mut p = vec![0.0; self.dim];
        self.next_into(&mut p);
        p.iter_mut().for_each(|v| *v = 2.0 * *v - 1.0);
        p
    }
}

impl Iterator for Halton {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        let mut p = vec![0.0; self.dim];
        self.next_into(&mut p);
        Some(p)
    }
}
