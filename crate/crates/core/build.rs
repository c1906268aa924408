fn main() {
    // System OpenBLAS provides both the BLAS and LAPACK entry points we
    // bind against in src/lapack.rs.
    println!("cargo:rustc-link-lib=dylib=openblas");
}
