#ifndef HHLAB_H
#define HHLAB_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * ABI version of this header; bump on any breaking change.
 */
uint32_t hh_abi_version(void);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* HHLAB_H */
