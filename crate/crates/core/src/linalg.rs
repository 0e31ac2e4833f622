//! Dense complex operators and superoperators.
//!
//! Operators are `nalgebra` matrices of `Complex64`. Vectorization is
//! row-major everywhere in the crate: the operator entry `X[i, j]` lives at
//! slot `i * d + j` of `|X>>`. Superoperators act on such vectors from the
//! left, so `|L(X)>> = S |X>>` and composition is plain matrix product.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::config::{LIMITS, TOL};
use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

/// Largest entry modulus, `0` for an empty matrix.
pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "max_abs_diff: shape mismatch");
    a.iter().zip(b.iter()).fold(0.0, |acc, (x, y)| acc.max((x - y).norm()))
}

pub fn trace(m: &ComplexMatrix) -> C64 {
    m.diagonal().iter().sum()
}

pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b + b * a
}

/// `max|M - M^dag|`.
pub fn hermiticity_deviation(m: &ComplexMatrix) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Checks `max|M - M^dag| <= tol_rel * max|M|` for a square matrix.
pub fn ensure_hermitian(m: &ComplexMatrix, tol_rel: f64) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let deviation = hermiticity_deviation(m);
    if deviation > tol_rel * max_abs(m).max(f64::MIN_POSITIVE) {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(())
}

/// Kronecker product `a (x) b`; row index of `a[i,j] b[k,l]` is `i * rows(b) + k`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    kron_limited(a, b, LIMITS.max_matrix_dim)
}

pub fn kron_limited(a: &ComplexMatrix, b: &ComplexMatrix, max_dim: usize) -> Result<ComplexMatrix> {
    let rows = a.nrows().checked_mul(b.nrows());
    let cols = a.ncols().checked_mul(b.ncols());
    match (rows, cols) {
        (Some(r), Some(c)) if r <= max_dim && c <= max_dim => Ok(a.kronecker(b)),
        (r, c) => Err(Error::DimensionOverflow {
            requested: r.unwrap_or(usize::MAX).max(c.unwrap_or(usize::MAX)),
            max: max_dim,
        }),
    }
}

/// Split of a Hilbert space as system (x) environment, system first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorFactorization {
    pub d_s: usize,
    pub d_e: usize,
}

impl TensorFactorization {
    pub fn new(d_s: usize, d_e: usize) -> Result<Self> {
        if d_s == 0 || d_e == 0 {
            return Err(Error::InvalidParameter("subsystem dimensions must be positive".into()));
        }
        Ok(Self { d_s, d_e })
    }

    pub fn total(&self) -> usize {
        self.d_s * self.d_e
    }
}

/// `Tr_E[x]` for `x` on `S (x) E`.
pub fn partial_trace_env(x: &ComplexMatrix, f: TensorFactorization) -> Result<ComplexMatrix> {
    let n = f.total();
    if x.nrows() != n || x.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "partial trace expects {n}x{n}, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    let (ds, de) = (f.d_s, f.d_e);
    Ok(ComplexMatrix::from_fn(ds, ds, |i, j| {
        (0..de).map(|e| x[(i * de + e, j * de + e)]).sum()
    }))
}

/// Eigendecomposition `h = V diag(values) V^dag` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: DVector<f64>,
    pub vectors: ComplexMatrix,
    /// Invariant blocks: basis indices of each block and the contiguous
    /// range of eigenvector columns supported on it.
    pub blocks: Vec<EigenBlock>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EigenBlock {
    pub rows: Vec<usize>,
    pub cols: std::ops::Range<usize>,
}

impl HermitianEigen {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V diag(f(values)) V^dag`.
    pub fn map<F: Fn(f64) -> C64>(&self, f: F) -> ComplexMatrix {
        let n = self.dim();
        let v = &self.vectors;
        let mut scaled = v.clone();
        for k in 0..n {
            let w = f(self.values[k]);
            for r in 0..n {
                scaled[(r, k)] *= w;
            }
        }
        scaled * v.adjoint()
    }
}

/// Hermitian eigendecomposition.
///
/// Exactly-zero couplings split the matrix into independent blocks (particle
/// number sectors for the fermionic models); each block is diagonalized on its
/// own and the eigenvectors are scattered back into the full basis.
pub fn herm_eig(h: &ComplexMatrix) -> Result<HermitianEigen> {
    ensure_hermitian(h, TOL.hermitian)?;
    let n = h.nrows();
    let blocks = connected_blocks(h);
    let mut values = DVector::<f64>::zeros(n);
    let mut vectors = ComplexMatrix::zeros(n, n);
    let mut col = 0;
    let mut layout = Vec::with_capacity(blocks.len());
    for block in blocks {
        let m = block.len();
        layout.push(EigenBlock { rows: block.clone(), cols: col..col + m });
        let sub = ComplexMatrix::from_fn(m, m, |i, j| {
            // symmetrize so round-off asymmetry does not leak into the solver
            0.5 * (h[(block[i], block[j])] + h[(block[j], block[i])].conj())
        });
        let eig = sub.symmetric_eigen();
        for k in 0..m {
            values[col] = eig.eigenvalues[k];
            for (i, &row) in block.iter().enumerate() {
                vectors[(row, col)] = eig.eigenvectors[(i, k)];
            }
            col += 1;
        }
    }
    Ok(HermitianEigen { values, vectors, blocks: layout })
}

fn connected_blocks(h: &ComplexMatrix) -> Vec<Vec<usize>> {
    let n = h.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if h[(i, j)] != ZERO || h[(j, i)] != ZERO {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

/// `exp(scale * h)` for Hermitian `h`, via eigendecomposition.
pub fn herm_expm(h: &ComplexMatrix, scale: C64) -> Result<ComplexMatrix> {
    Ok(herm_eig(h)?.map(|e| (scale * e).exp()))
}

/// Row-major vectorization `|X>>`.
pub fn vectorize(x: &ComplexMatrix) -> ComplexVector {
    let (r, c) = x.shape();
    ComplexVector::from_fn(r * c, |k, _| x[(k / c, k % c)])
}

/// Inverse of [`vectorize`] for square operators.
pub fn devectorize(v: &ComplexVector) -> Result<ComplexMatrix> {
    let d = exact_sqrt(v.len()).ok_or(Error::NotSquareLength(v.len()))?;
    Ok(ComplexMatrix::from_fn(d, d, |i, j| v[i * d + j]))
}

pub(crate) fn exact_sqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

/// `<<A|B>> = Tr[A^dag B]`.
pub fn hs_inner(a: &ComplexMatrix, b: &ComplexMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Linear map on `d x d` operators, stored as a `d^2 x d^2` matrix acting on
/// row-major vectorized operators.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperOperator {
    d: usize,
    matrix: ComplexMatrix,
}

impl SuperOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "superoperator must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let d = exact_sqrt(matrix.nrows()).ok_or(Error::NotSquareLength(matrix.nrows()))?;
        Ok(Self { d, matrix })
    }

    pub fn identity(d: usize) -> Self {
        Self { d, matrix: identity(d * d) }
    }

    pub fn zero(d: usize) -> Self {
        Self { d, matrix: ComplexMatrix::zeros(d * d, d * d) }
    }

    /// Builds the matrix of `f` column by column from its action on `|i><j|`.
    pub fn from_action<F: Fn(&ComplexMatrix) -> ComplexMatrix>(d: usize, f: F) -> Self {
        let n = d * d;
        let mut matrix = ComplexMatrix::zeros(n, n);
        for col in 0..n {
            let mut unit = ComplexMatrix::zeros(d, d);
            unit[(col / d, col % d)] = ONE;
            let image = vectorize(&f(&unit));
            matrix.set_column(col, &image);
        }
        Self { d, matrix }
    }

    /// Hilbert-space dimension `d`; the operator space has dimension `d^2`.
    pub fn hilbert_dim(&self) -> usize {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.d * self.d
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(x.shape(), (self.d, self.d), "SuperOperator::apply: operator shape");
        let v = &self.matrix * vectorize(x);
        ComplexMatrix::from_fn(self.d, self.d, |i, j| v[i * self.d + j])
    }

    /// `self o other`.
    pub fn compose(&self, other: &SuperOperator) -> SuperOperator {
        assert_eq!(self.d, other.d, "SuperOperator::compose: dimension");
        SuperOperator { d: self.d, matrix: &self.matrix * &other.matrix }
    }

    pub fn scaled(&self, s: C64) -> SuperOperator {
        SuperOperator { d: self.d, matrix: &self.matrix * s }
    }

    pub fn add(&self, other: &SuperOperator) -> SuperOperator {
        assert_eq!(self.d, other.d);
        SuperOperator { d: self.d, matrix: &self.matrix + &other.matrix }
    }

    pub fn sub(&self, other: &SuperOperator) -> SuperOperator {
        assert_eq!(self.d, other.d);
        SuperOperator { d: self.d, matrix: &self.matrix - &other.matrix }
    }

    pub fn max_abs_diff(&self, other: &SuperOperator) -> f64 {
        max_abs_diff(&self.matrix, &other.matrix)
    }
}

/// Choi matrix `C = sum_ij |i><j| (x) L(|i><j|)`.
///
/// `C[(i a), (j b)] = L(|i><j|)[a, b]`; `C >= 0` iff the map is completely
/// positive.
pub fn choi_form(s: &SuperOperator) -> ComplexMatrix {
    let d = s.d;
    let m = &s.matrix;
    ComplexMatrix::from_fn(d * d, d * d, |r, c| {
        let (i, a) = (r / d, r % d);
        let (j, b) = (c / d, c % d);
        m[(a * d + b, i * d + j)]
    })
}

/// Inverse reshuffle of [`choi_form`].
pub fn from_choi(choi: &ComplexMatrix) -> Result<SuperOperator> {
    if !choi.is_square() {
        return Err(Error::DimensionMismatch("Choi matrix must be square".into()));
    }
    let d = exact_sqrt(choi.nrows()).ok_or(Error::NotSquareLength(choi.nrows()))?;
    let matrix = ComplexMatrix::from_fn(d * d, d * d, |r, c| {
        let (a, b) = (r / d, r % d);
        let (i, j) = (c / d, c % d);
        choi[(i * d + a, j * d + b)]
    });
    Ok(SuperOperator { d, matrix })
}

/// Frobenius (L2) norm of the superoperator matrix.
pub fn sup_norm_l2(s: &SuperOperator) -> f64 {
    s.matrix.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Vec<f64> {
    let n = m.nrows();
    let sym = ComplexMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)].conj()));
    let mut v: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}
