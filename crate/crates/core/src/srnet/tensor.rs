use crate::error::{Error, Result};
use crate::image::{Image3, Kind};

/// Dense `N × C × H × W` tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor4 {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || c == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidInput("tensor dimensions must be positive".into()));
        }
        if data.len() != n * c * h * w {
            return Err(Error::InvalidInput(format!(
                "tensor {n}x{c}x{h}x{w} needs {} values, got {}",
                n * c * h * w,
                data.len()
            )));
        }
        Ok(Tensor4 { n, c, h, w, data })
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn plane_len(&self) -> usize {
        self.h * self.w
    }

    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let p = self.plane_len();
        let start = (n * self.c + c) * p;
        &self.data[start..start + p]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let p = self.plane_len();
        let start = (n * self.c + c) * p;
        &mut self.data[start..start + p]
    }

    /// Stacks images of equal size into a batch.
    pub fn from_images<K: Kind>(images: &[&Image3<K>]) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::InvalidInput("empty batch".into()))?;
        let (h, w, c) = first.dims();
        let mut t = Tensor4::zeros(images.len(), c, h, w);
        for (n, img) in images.iter().enumerate() {
            if img.dims() != (h, w, c) {
                return Err(Error::InvalidInput("batch images differ in shape".into()));
            }
            for ch in 0..c {
                t.plane_mut(n, ch).copy_from_slice(&img.plane(ch));
            }
        }
        Ok(t)
    }

    pub fn to_image<K: Kind>(&self, n: usize) -> Result<Image3<K>> {
        let mut img = Image3::<K>::zeros(self.h, self.w, self.c);
        for ch in 0..self.c {
            img.set_plane(ch, self.plane(n, ch));
        }
        Image3::new(self.h, self.w, self.c, img.into_data())
    }

    /// Channels `0..count` of every sample.
    pub fn leading_channels(&self, count: usize) -> Tensor4 {
        let mut out = Tensor4::zeros(self.n, count, self.h, self.w);
        for n in 0..self.n {
            for c in 0..count {
                out.plane_mut(n, c).copy_from_slice(self.plane(n, c));
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Tensor4) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}
