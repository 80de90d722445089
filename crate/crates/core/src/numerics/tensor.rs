use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const MAX_RANK: usize = 3;

/// Row-major shape with rank 0..=3.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    dims: [usize; MAX_RANK],
    rank: usize,
}

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.len() > MAX_RANK {
            return Err(Error::Contract(format!(
                "rank {} exceeds the supported maximum of {MAX_RANK}",
                dims.len()
            )));
        }
        let mut d = [1; MAX_RANK];
        d[..dims.len()].copy_from_slice(dims);
        Ok(Self {
            dims: d,
            rank: dims.len(),
        })
    }

    pub fn scalar() -> Self {
        Self {
            dims: [1; MAX_RANK],
            rank: 0,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims[..self.rank]
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn numel(&self) -> usize {
        self.dims().iter().product()
    }

    /// Size of the last axis (1 for scalars).
    pub fn last(&self) -> usize {
        if self.rank == 0 {
            1
        } else {
            self.dims[self.rank - 1]
        }
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.dims[axis]
    }

    /// (outer, axis, inner) extents around `axis`.
    pub(crate) fn split(&self, axis: usize) -> (usize, usize, usize) {
        let d = self.dims();
        let outer = d[..axis].iter().product();
        let inner = d[axis + 1..].iter().product();
        (outer, d[axis], inner)
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.dims().to_vec()
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.dims())
    }
}

/// Dense 64-bit tensor, rank at most three.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != data.len() {
            return Err(Error::Shape {
                op: "tensor",
                lhs: dims.to_vec(),
                rhs: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub(crate) fn from_parts(shape: Shape, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.numel(), data.len());
        Self { shape, data }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let shape = Shape::new(dims).expect("rank within limit");
        Self {
            data: vec![0.0; shape.numel()],
            shape,
        }
    }

    pub fn filled(dims: &[usize], value: f64) -> Self {
        let mut t = Self::zeros(dims);
        t.data.iter_mut().for_each(|x| *x = value);
        t
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Shape::scalar(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(&[n], data).expect("rank 1")
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(&[rows, cols], data)
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Gaussian entries scaled by `std`.
    pub fn randn<R: Rng + ?Sized>(dims: &[usize], std: f64, rng: &mut R) -> Self {
        let mut t = Self::zeros(dims);
        for x in t.data.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *x = z * std;
        }
        t
    }

    pub fn uniform<R: Rng + ?Sized>(dims: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        let mut t = Self::zeros(dims);
        for x in t.data.iter_mut() {
            *x = rng.random_range(lo..hi);
        }
        t
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
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

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn reshape(mut self, dims: &[usize]) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != self.data.len() {
            return Err(Error::Shape {
                op: "reshape",
                lhs: self.shape.to_vec(),
                rhs: dims.to_vec(),
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn get2(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape.last() + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.shape.last();
        &self.data[r * w..(r + 1) * w]
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

/// c[n×m] += a[n×k] · b[k×m]
pub(crate) fn gemm_acc(a: &[f64], b: &[f64], c: &mut [f64], n: usize, k: usize, m: usize) {
    assert!(a.len() >= n * k && b.len() >= k * m && c.len() >= n * m);
    // SAFETY: the slices hold n×k, k×m and n×m row-major elements.
    unsafe {
        matrixmultiply::dgemm(
            n, k, m, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), m as isize, 1,
            1.0, c.as_mut_ptr(), m as isize, 1,
        );
    }
}

/// c[n×k] += g[n×m] · b[k×m]ᵀ
pub(crate) fn gemm_bt_acc(g: &[f64], b: &[f64], c: &mut [f64], n: usize, k: usize, m: usize) {
    assert!(g.len() >= n * m && b.len() >= k * m && c.len() >= n * k);
    // SAFETY: as above; bᵀ is read through swapped strides.
    unsafe {
        matrixmultiply::dgemm(
            n, m, k, 1.0,
            g.as_ptr(), m as isize, 1,
            b.as_ptr(), 1, m as isize,
            1.0, c.as_mut_ptr(), k as isize, 1,
        );
    }
}

/// c[k×m] += a[n×k]ᵀ · g[n×m]
pub(crate) fn gemm_at_acc(a: &[f64], g: &[f64], c: &mut [f64], n: usize, k: usize, m: usize) {
    assert!(a.len() >= n * k && g.len() >= n * m && c.len() >= k * m);
    // SAFETY: as above; aᵀ is read through swapped strides.
    unsafe {
        matrixmultiply::dgemm(
            k, n, m, 1.0,
            a.as_ptr(), 1, k as isize,
            g.as_ptr(), m as isize, 1,
            1.0, c.as_mut_ptr(), m as isize, 1,
        );
    }
}
