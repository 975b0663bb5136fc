// Dense Hermitian eigensolves go through the system LAPACK.
fn main() {
    println!("cargo:rustc-link-lib=lapack");
}
