//! Dense row-major tensors of up to three axes.
//!
//! Matrix products go through `matrixmultiply::dgemm`; everything else is
//! plain elementwise iteration. All values are `f64`.

use crate::error::{Error, Result};

/// Contiguous row-major tensor with up to three axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 3 {
            return Err(Error::Shape(format!(
                "tensor rank must be 1..=3, got {}",
                shape.len()
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} requires {} values, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            data.extend_from_slice(r);
        }
        Tensor::new(vec![rows.len(), cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.numel(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Reinterpret the buffer under a new shape of equal element count.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() || shape.is_empty() || shape.len() > 3 {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "elementwise op on {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_in_place(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    /// Shape left-padded with ones to rank 3, for broadcasting arithmetic.
    fn padded3(&self) -> [usize; 3] {
        let mut s = [1usize; 3];
        let off = 3 - self.shape.len();
        for (i, &d) in self.shape.iter().enumerate() {
            s[off + i] = d;
        }
        s
    }

    /// Whether `self` broadcasts to `target` under right-aligned rules.
    pub fn broadcasts_to(&self, target: &[usize]) -> bool {
        if self.shape.len() > target.len() {
            return false;
        }
        let mut t = [1usize; 3];
        let off = 3 - target.len();
        for (i, &d) in target.iter().enumerate() {
            t[off + i] = d;
        }
        let s = self.padded3();
        (0..3).all(|i| s[i] == t[i] || s[i] == 1)
    }

    /// Materialize `self` broadcast to `target` shape.
    pub fn broadcast_to(&self, target: &[usize]) -> Result<Tensor> {
        if !self.broadcasts_to(target) {
            return Err(Error::Shape(format!(
                "cannot broadcast {:?} to {:?}",
                self.shape, target
            )));
        }
        let mut t = [1usize; 3];
        let off = 3 - target.len();
        for (i, &d) in target.iter().enumerate() {
            t[off + i] = d;
        }
        let s = self.padded3();
        let mut out = Tensor::zeros(target.to_vec());
        let (t0, t1, t2) = (t[0], t[1], t[2]);
        for i in 0..t0 {
            let si = if s[0] == 1 { 0 } else { i };
            for j in 0..t1 {
                let sj = if s[1] == 1 { 0 } else { j };
                let src_base = (si * s[1] + sj) * s[2];
                let dst_base = (i * t1 + j) * t2;
                if s[2] == 1 {
                    let v = self.data[src_base];
                    for k in 0..t2 {
                        out.data[dst_base + k] = v;
                    }
                } else {
                    out.data[dst_base..dst_base + t2]
                        .copy_from_slice(&self.data[src_base..src_base + t2]);
                }
            }
        }
        Ok(out)
    }

    /// Sum `grad` (shaped like the broadcast target) back down to `self.shape`.
    /// Inverse of `broadcast_to` for gradient accumulation.
    pub fn reduce_from(grad: &Tensor, source_shape: &[usize]) -> Tensor {
        let mut out = Tensor::zeros(source_shape.to_vec());
        let s = out.padded3();
        let g = grad.padded3();
        for i in 0..g[0] {
            let si = if s[0] == 1 { 0 } else { i };
            for j in 0..g[1] {
                let sj = if s[1] == 1 { 0 } else { j };
                for k in 0..g[2] {
                    let sk = if s[2] == 1 { 0 } else { k };
                    let dst = (si * s[1] + sj) * s[2] + sk;
                    let src = (i * g[1] + j) * g[2] + k;
                    out.data[dst] += grad.data[src];
                }
            }
        }
        out
    }

    /// 2-D matrix product `self (M,K) x other (K,N)`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul {:?} x {:?}: inner dims differ",
                self.shape, other.shape
            )));
        }
        let mut out = Tensor::zeros(vec![m, n]);
        gemm(
            m, k, n, 1.0, &self.data, false, &other.data, false, 0.0, &mut out.data,
        );
        Ok(out)
    }

    /// Batched matrix product `(B,M,K) x (B,K,N) -> (B,M,N)`.
    pub fn bmm(&self, other: &Tensor) -> Result<Tensor> {
        let (b, m, k) = self.dims3()?;
        let (b2, k2, n) = other.dims3()?;
        if b != b2 || k != k2 {
            return Err(Error::Shape(format!(
                "bmm {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = Tensor::zeros(vec![b, m, n]);
        for i in 0..b {
            gemm(
                m,
                k,
                n,
                1.0,
                &self.data[i * m * k..(i + 1) * m * k],
                false,
                &other.data[i * k * n..(i + 1) * k * n],
                false,
                0.0,
                &mut out.data[i * m * n..(i + 1) * m * n],
            );
        }
        Ok(out)
    }

    /// Swap the last two axes of a 2- or 3-axis tensor.
    pub fn transpose_last2(&self) -> Result<Tensor> {
        match self.shape.len() {
            2 => {
                let (m, n) = (self.shape[0], self.shape[1]);
                let mut out = Tensor::zeros(vec![n, m]);
                for i in 0..m {
                    for j in 0..n {
                        out.data[j * m + i] = self.data[i * n + j];
                    }
                }
                Ok(out)
            }
            3 => {
                let (b, m, n) = (self.shape[0], self.shape[1], self.shape[2]);
                let mut out = Tensor::zeros(vec![b, n, m]);
                for s in 0..b {
                    let src = &self.data[s * m * n..(s + 1) * m * n];
                    let dst = &mut out.data[s * m * n..(s + 1) * m * n];
                    for i in 0..m {
                        for j in 0..n {
                            dst[j * m + i] = src[i * n + j];
                        }
                    }
                }
                Ok(out)
            }
            _ => Err(Error::Shape("transpose_last2 needs rank 2 or 3".into())),
        }
    }

    pub fn dims2(&self) -> Result<(usize, usize)> {
        if self.shape.len() != 2 {
            return Err(Error::Shape(format!("expected rank 2, got {:?}", self.shape)));
        }
        Ok((self.shape[0], self.shape[1]))
    }

    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        if self.shape.len() != 3 {
            return Err(Error::Shape(format!("expected rank 3, got {:?}", self.shape)));
        }
        Ok((self.shape[0], self.shape[1], self.shape[2]))
    }
}

/// `C = alpha * A^ta x B^tb + beta * C` where A is stored (m,k) row-major
/// unless `ta`, in which case the stored buffer is (k,m) and its transpose
/// is used. Same for B against (k,n).
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
