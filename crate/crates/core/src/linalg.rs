//! Matrix kernels shared by the layers.
//!
//! Every product is split into fixed blocks of output rows. The split depends
//! only on the matrix dimensions, so the parallel and sequential paths produce
//! bit-identical results and runs are reproducible regardless of thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Output rows per block.
const ROW_BLOCK: usize = 128;

/// Below this many multiply-adds the product runs on the calling thread.
#[cfg(feature = "parallel")]
const PAR_THRESHOLD: usize = 1 << 18;

/// Operand layout for [`gemm`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    /// Use the operand as stored (row-major).
    N,
    /// Use the transpose of the stored operand.
    T,
}

/// `c = op(a) · op(b) + beta · c` where `op(a)` is `m × k` and `op(b)` is `k × n`.
///
/// Uses the parallel path when the `parallel` feature is enabled.
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, a: &[f64], op_a: Op, b: &[f64], op_b: Op, beta: f64, c: &mut [f64]) {
    gemm_impl(m, k, n, a, op_a, b, op_b, beta, c, cfg!(feature = "parallel"));
}

/// Same as [`gemm`] but always on the calling thread.
#[allow(clippy::too_many_arguments)]
pub fn gemm_sequential(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    op_a: Op,
    b: &[f64],
    op_b: Op,
    beta: f64,
    c: &mut [f64],
) {
    gemm_impl(m, k, n, a, op_a, b, op_b, beta, c, false);
}

#[allow(clippy::too_many_arguments)]
fn gemm_impl(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    op_a: Op,
    b: &[f64],
    op_b: Op,
    beta: f64,
    c: &mut [f64],
    parallel: bool,
) {
    assert_eq!(a.len(), m * k, "gemm: lhs has wrong length");
    assert_eq!(b.len(), k * n, "gemm: rhs has wrong length");
    assert_eq!(c.len(), m * n, "gemm: output has wrong length");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = match op_a {
        Op::N => (k as isize, 1),
        Op::T => (1, m as isize),
    };
    let (rsb, csb) = match op_b {
        Op::N => (n as isize, 1),
        Op::T => (1, k as isize),
    };
    let block = |(i, c_block): (usize, &mut [f64])| {
        let row0 = i * ROW_BLOCK;
        let rows = c_block.len() / n;
        // SAFETY: row0 + rows <= m, so every element addressed through the
        // strides lies inside `a`, `b` and `c_block`.
        unsafe {
            matrixmultiply::dgemm(
                rows,
                k,
                n,
                1.0,
                a.as_ptr().offset(row0 as isize * rsa),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c_block.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    };
    #[cfg(feature = "parallel")]
    if parallel && m > ROW_BLOCK && m * k * n >= PAR_THRESHOLD {
        c.par_chunks_mut(ROW_BLOCK * n).enumerate().for_each(block);
        return;
    }
    let _ = parallel;
    c.chunks_mut(ROW_BLOCK * n).enumerate().for_each(block);
}

/// Adds `bias` to every row of the row-major `rows × bias.len()` matrix.
pub fn add_row_bias(out: &mut [f64], bias: &[f64]) {
    for row in out.chunks_mut(bias.len()) {
        for (o, b) in row.iter_mut().zip(bias) {
            *o += b;
        }
    }
}

/// Accumulates the column sums of a row-major matrix into `acc`.
pub fn accumulate_column_sums(acc: &mut [f64], m: &[f64]) {
    for row in m.chunks(acc.len()) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
}
