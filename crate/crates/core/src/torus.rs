//! Row-major indexing of the discrete torus `{0,..,N-1}^d`.

/// Shape of a `d`-dimensional torus of side `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusShape {
    pub n: usize,
    pub d: usize,
}

impl TorusShape {
    pub fn new(n: usize, d: usize) -> Self {
        Self { n, d }
    }

    pub fn volume(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// Coordinates of linear index `idx`; axis 0 varies slowest.
    pub fn coords(&self, mut idx: usize, out: &mut [usize]) {
        for axis in (0..self.d).rev() {
            out[axis] = idx % self.n;
            idx /= self.n;
        }
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &c| acc * self.n + c % self.n)
    }

    /// Index of `idx + e_axis` (mod n); `sign = -1` steps backwards.
    pub fn shift(&self, idx: usize, axis: usize, sign: i64) -> usize {
        let stride = self.n.pow((self.d - 1 - axis) as u32);
        let c = (idx / stride) % self.n;
        let nc = (c as i64 + sign).rem_euclid(self.n as i64) as usize;
        idx - c * stride + nc * stride
    }

    /// Index of the difference `x - y` taken componentwise mod n.
    pub fn difference(&self, x: usize, y: usize) -> usize {
        let mut out = 0;
        let mut stride = 1;
        let (mut x, mut y) = (x, y);
        for _ in 0..self.d {
            let cx = x % self.n;
            let cy = y % self.n;
            out += ((cx + self.n - cy) % self.n) * stride;
            stride *= self.n;
            x /= self.n;
            y /= self.n;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coords_roundtrip_and_shift() {
        let s = TorusShape::new(4, 3);
        let mut c = [0; 3];
        for idx in 0..s.volume() {
            s.coords(idx, &mut c);
            assert_eq!(s.index(&c), idx);
            for axis in 0..3 {
                let fwd = s.shift(idx, axis, 1);
                assert_eq!(s.shift(fwd, axis, -1), idx);
                let mut cf = [0; 3];
                s.coords(fwd, &mut cf);
                assert_eq!(cf[axis], (c[axis] + 1) % 4);
            }
        }
    }

    #[test]
    fn difference_is_componentwise() {
        let s = TorusShape::new(5, 2);
        let x = s.index(&[1, 4]);
        let y = s.index(&[3, 2]);
        assert_eq!(s.difference(x, y), s.index(&[3, 2]));
    }
}
