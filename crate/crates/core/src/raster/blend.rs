use crate::math::Real;

use super::TRANSMITTANCE_MIN;

/// Front-to-back compositing state for one pixel.
#[derive(Debug, Clone, Copy)]
pub struct Blender<T> {
    pub color: [T; 3],
    pub depth: T,
    pub accum: T,
    pub transmittance: T,
    pub done: bool,
}

impl<T: Real> Default for Blender<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Blender<T> {
    pub fn new() -> Self {
        Self {
            color: [T::zero(); 3],
            depth: T::zero(),
            accum: T::zero(),
            transmittance: T::one(),
            done: false,
        }
    }

    /// Composites one contributor. Returns `false` (and leaves the state
    /// untouched) once the transmittance would fall below the stop threshold.
    #[inline]
    pub fn push(&mut self, color: [T; 3], alpha: T, depth: T) -> bool {
        if self.done {
            return false;
        }
        let next = self.transmittance * (T::one() - alpha);
        if next < T::lit(TRANSMITTANCE_MIN) {
            self.done = true;
            return false;
        }
        let w = alpha * self.transmittance;
        for ch in 0..3 {
            self.color[ch] += color[ch] * w;
        }
        self.depth += depth * w;
        self.accum += w;
        self.transmittance = next;
        true
    }
}

/// Blends an ordered (front-to-back) contributor list of `(color, alpha, depth)`.
/// Returns `(color, raw depth, accumulated alpha)`.
pub fn blend_pixel<T: Real>(contributors: &[([T; 3], T, T)]) -> ([T; 3], T, T) {
    let mut b = Blender::new();
    for &(c, a, d) in contributors {
        if !b.push(c, a, d) {
            break;
        }
    }
    (b.color, b.depth, b.accum)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_contributor() {
        let (c, d, a) = blend_pixel(&[([1.0_f64, 0.0, 0.0], 0.5, 3.0)]);
        assert_eq!(c, [0.5, 0.0, 0.0]);
        assert_eq!(d, 1.5);
        assert_eq!(a, 0.5);
    }

    #[test]
    fn two_contributors() {
        let (c, d, a) = blend_pixel(&[([1.0_f64, 0.0, 0.0], 0.5, 2.0), ([0.0, 1.0, 0.0], 0.5, 4.0)]);
        assert_eq!(c, [0.5, 0.25, 0.0]);
        assert_eq!(d, 2.0);
        assert_eq!(a, 0.75);
    }

    #[test]
    fn empty_list() {
        let (c, d, a) = blend_pixel::<f64>(&[]);
        assert_eq!((c, d, a), ([0.0; 3], 0.0, 0.0));
    }

    #[test]
    fn stops_below_transmittance_threshold() {
        let list = vec![([1.0_f64, 1.0, 1.0], 0.99, 1.0); 4];
        let mut b = Blender::new();
        let mut used = 0;
        for &(c, a, d) in &list {
            if !b.push(c, a, d) {
                break;
            }
            used += 1;
        }
        // 0.01 * 0.01 = 1e-4 is not below the threshold; a third would be.
        assert_eq!(used, 2);
        assert!(b.transmittance >= 1e-4);
    }
}
