//! C ABI over the hhlab solvers. Grows alongside the core crate; the final
//! surface exposes config parsing, the abelian solver, experiment runs, and
//! configuration persistence through opaque handles.

/// ABI version of this header; bump on any breaking change.
#[no_mangle]
pub extern "C" fn hh_abi_version() -> u32 {
    1
}
