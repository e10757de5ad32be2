# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled Hamiltonian fill kernel.

Same contract as the pure-numpy fallback in ``_kernels_py``: add the two
layer-potential coupling terms to a preinitialized dense matrix, counting
coefficient misses (offsets with no stored coefficient contribute 0).
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def fill_potential_terms(
    cnp.complex128_t[:, ::1] H,
    cnp.int64_t[:, ::1] m,
    cnp.int64_t[:, ::1] n,
    cnp.complex128_t[::1] v1_flat,
    cnp.uint8_t[::1] v1_mask,
    cnp.int64_t[::1] v1_shape,
    cnp.complex128_t[::1] v2_flat,
    cnp.uint8_t[::1] v2_mask,
    cnp.int64_t[::1] v2_shape,
):
    cdef Py_ssize_t N = m.shape[0]
    cdef Py_ssize_t d = m.shape[1]
    cdef Py_ssize_t i, j, a
    cdef long long miss1 = 0, miss2 = 0
    cdef long long delta, idx1, idx2, stride
    cdef bint same, inrange

    cdef long long[8] D1, D2, s1, s2
    stride = 1
    for a in range(d - 1, -1, -1):
        D1[a] = (v1_shape[a] - 1) // 2
        s1[a] = stride
        stride *= v1_shape[a]
    stride = 1
    for a in range(d - 1, -1, -1):
        D2[a] = (v2_shape[a] - 1) // 2
        s2[a] = stride
        stride *= v2_shape[a]

    with nogil:
        for i in range(N):
            for j in range(N):
                # Layer-1 coupling: n indices equal on every axis.
                same = True
                for a in range(d):
                    if n[i, a] != n[j, a]:
                        same = False
                        break
                if same:
                    inrange = True
                    idx1 = 0
                    for a in range(d):
                        delta = m[i, a] - m[j, a]
                        if delta < -D1[a] or delta > D1[a]:
                            inrange = False
                            break
                        idx1 += (delta + D1[a]) * s1[a]
                    if inrange and v1_mask[idx1]:
                        H[i, j] = H[i, j] + v1_flat[idx1]
                    else:
                        miss1 += 1

                # Layer-2 coupling: m indices equal on every axis.
                same = True
                for a in range(d):
                    if m[i, a] != m[j, a]:
                        same = False
                        break
                if same:
                    inrange = True
                    idx2 = 0
                    for a in range(d):
                        delta = n[i, a] - n[j, a]
                        if delta < -D2[a] or delta > D2[a]:
                            inrange = False
                            break
                        idx2 += (delta + D2[a]) * s2[a]
                    if inrange and v2_mask[idx2]:
                        H[i, j] = H[i, j] + v2_flat[idx2]
                    else:
                        miss2 += 1

    return int(miss1), int(miss2)
