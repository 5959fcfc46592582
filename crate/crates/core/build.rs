fn main() {
    // LAPACK routines (dgetrf/dgetrs/dgesdd/zgesv/...) come from the system
    // OpenBLAS, which bundles the full LAPACK symbol set.
    println!("cargo:rustc-link-lib=dylib=openblas");
}
