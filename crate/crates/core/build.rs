fn main() {
    // Symmetric/Hermitian eigensolvers come from the system LAPACKE
    // (liblapacke-dev); everything else is pure Rust.
    println!("cargo:rustc-link-lib=lapacke");
    println!("cargo:rustc-link-lib=lapack");
    println!("cargo:rustc-link-lib=blas");
}
