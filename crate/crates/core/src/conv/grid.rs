use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `height × width × channels` image, row-major with channels innermost.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> Grid<T> {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels, values: vec![T::zero(); height * width * channels] }
    }

    #[inline]
    pub fn pixel(&self, r: usize, c: usize) -> &[T] {
        let k = (r * self.width + c) * self.channels;
        &self.values[k..k + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, r: usize, c: usize) -> &mut [T] {
        let k = (r * self.width + c) * self.channels;
        &mut self.values[k..k + self.channels]
    }
}

/// Standard zero-padded convolution written as `y_i = b + Σ_m W_m x_{n(m,i)}`.
///
/// `filters` holds `M = fh × fw` row-major `E × D` matrices; filter `m`
/// reads the pixel at offset `(m / fw - fh / 2, m % fw - fw / 2)`.
pub fn grid_reference_conv<T: Scalar>(
    filters: &[Vec<T>],
    fh: usize,
    fw: usize,
    bias: &[T],
    image: &Grid<T>,
) -> Result<Grid<T>> {
    if filters.len() != fh * fw {
        return Err(Error::InvalidArgument(format!(
            "{} filters cannot tile a {fh}x{fw} window",
            filters.len()
        )));
    }
    let (d, e) = (image.channels, bias.len());
    if filters.iter().any(|f| f.len() != e * d) {
        return Err(Error::dims("filter matrices must be E x D"));
    }
    let mut out = Grid::zeros(image.height, image.width, e);
    for r in 0..image.height {
        for c in 0..image.width {
            let y = out.pixel_mut(r, c);
            y.copy_from_slice(bias);
            for (m, w) in filters.iter().enumerate() {
                let rr = r as isize + (m / fw) as isize - (fh / 2) as isize;
                let cc = c as isize + (m % fw) as isize - (fw / 2) as isize;
                if rr < 0 || cc < 0 || rr >= image.height as isize || cc >= image.width as isize {
                    continue;
                }
                let x = image.pixel(rr as usize, cc as usize);
                for (o, yo) in y.iter_mut().enumerate() {
                    for k in 0..d {
                        *yo += w[o * d + k] * x[k];
                    }
                }
            }
        }
    }
    Ok(out)
}
