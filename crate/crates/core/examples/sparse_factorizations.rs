//! Sparse LU and Cholesky factorizations on a lattice operator, checked
//! against each other, and a Matrix Market round trip.

use star_mcem::simkit::make_grid_weights;
use star_mcem::sparse::{market, minimum_degree, sparse_cholesky_logdet, LuFactor, SparseMatrix};

fn main() -> star_mcem::Result<()> {
    let w = make_grid_weights(20, false);
    let n = w.n();
    let m = SparseMatrix::identity(n).add_scaled(1.0, w.matrix(), -0.6)?;
    let lu = LuFactor::factorize(&m)?;
    let mtm = m.transpose().matmul(&m)?;
    println!("N = {n}, nnz(I - 0.6 W) = {}, nnz(LU) = {}", m.nnz(), lu.factor_nnz());
    println!("ln|M| by LU:           {:.12}", lu.log_abs_det());
    println!("ln|M'M| / 2 by Cholesky: {:.12}", 0.5 * sparse_cholesky_logdet(&mtm)?);

    let ones = vec![1.0; n];
    let x = lu.solve(&ones)?;
    let resid = m.matvec(&x)?.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    println!("max residual of M x = 1: {resid:.2e}");

    let perm = minimum_degree(&mtm);
    println!("minimum-degree ordering starts with {:?}", &perm[..8]);

    let mut buf = Vec::new();
    market::write(w.matrix(), &mut buf)?;
    let back = market::read(buf.as_slice(), "memory")?;
    println!("Matrix Market round trip equal: {}", &back == w.matrix());
    Ok(())
}
