//! The invertible-map contract shared by every layer.

/// A bijection of `R^d` with an analytic inverse.
///
/// Implementations write into caller-provided buffers so that whole sample
/// matrices can be pushed through a stack without per-point allocation.
pub trait InvertibleMap {
    fn dim(&self) -> usize;

    fn forward_into(&self, x: &[f64], out: &mut [f64]);

    fn inverse_into(&self, z: &[f64], out: &mut [f64]);

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.forward_into(x, &mut out);
        out
    }

    fn inverse(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; z.len()];
        self.inverse_into(z, &mut out);
        out
    }
}

impl<M: InvertibleMap + ?Sized> InvertibleMap for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).forward_into(x, out)
    }

    fn inverse_into(&self, z: &[f64], out: &mut [f64]) {
        (**self).inverse_into(z, out)
    }
}

/// Identity on `R^d`.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl InvertibleMap for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }

    fn inverse_into(&self, z: &[f64], out: &mut [f64]) {
        out.copy_from_slice(z);
    }
}

/// Largest absolute coordinate difference.
pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
