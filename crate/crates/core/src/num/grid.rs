/// Uniform 1-d grid `lo, lo + step, ..., lo + (n-1) step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid1 {
    pub lo: f64,
    pub step: f64,
    pub n: usize,
}

impl UniformGrid1 {
    pub fn new(lo: f64, step: f64, n: usize) -> Self {
        assert!(n >= 1 && step > 0.0);
        Self { lo, step, n }
    }

    /// Grid symmetric about zero: `n` midpoint-style nodes covering
    /// `[-half, half]`, closed under negation.
    pub fn symmetric(half: f64, n: usize) -> Self {
        assert!(n >= 2);
        let step = 2.0 * half / n as f64;
        Self::new(-half + 0.5 * step, step, n)
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.lo + self.step * i as f64
    }

    pub fn hi(&self) -> f64 {
        self.node(self.n - 1)
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.node(i))
    }

    /// Index of the negated node, for grids built with `symmetric`.
    pub fn neg_index(&self, i: usize) -> usize {
        self.n - 1 - i
    }
}

/// Tensor grid in three variables with row-major flat indexing
/// (`axis 0` slowest).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3 {
    pub axes: [UniformGrid1; 3],
}

impl Grid3 {
    pub fn new(axes: [UniformGrid1; 3]) -> Self {
        Self { axes }
    }

    pub fn len(&self) -> usize {
        self.axes[0].n * self.axes[1].n * self.axes[2].n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.axes[1].n + j) * self.axes[2].n + k
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.axes[0].node(i),
            self.axes[1].node(j),
            self.axes[2].node(k),
        ]
    }

    pub fn unflatten(&self, flat: usize) -> (usize, usize, usize) {
        let k = flat % self.axes[2].n;
        let rest = flat / self.axes[2].n;
        (rest / self.axes[1].n, rest % self.axes[1].n, k)
    }

    /// Cell volume `step0 * step1 * step2`.
    pub fn cell(&self) -> f64 {
        self.axes[0].step * self.axes[1].step * self.axes[2].step
    }

    pub fn node_iter(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        (0..self.len()).map(move |f| {
            let (i, j, k) = self.unflatten(f);
            self.node(i, j, k)
        })
    }
}
