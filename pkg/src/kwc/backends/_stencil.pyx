# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled stencil kernels; signature-compatible twin of numpy_backend."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

NAME = "compiled"


def grad_faces(const double[:, ::1] v, double hx, double hy,
               double[:, ::1] gx, double[:, ::1] gy):
    cdef Py_ssize_t nx = v.shape[0], ny = v.shape[1]
    cdef Py_ssize_t i, j
    cdef double ihx = 1.0 / hx, ihy = 1.0 / hy
    for i in range(nx - 1):
        for j in range(ny):
            gx[i, j] = (v[i + 1, j] - v[i, j]) * ihx
    for i in range(nx):
        for j in range(ny - 1):
            gy[i, j] = (v[i, j + 1] - v[i, j]) * ihy


def div_weighted(const double[:, ::1] gx, const double[:, ::1] gy, double hx, double hy,
                 const double[:, ::1] fx, const double[:, ::1] fy, const double[:, ::1] w,
                 double[:, ::1] out):
    cdef Py_ssize_t nx = w.shape[0], ny = w.shape[1]
    cdef Py_ssize_t i, j
    cdef double ihx = 1.0 / hx, ihy = 1.0 / hy
    cdef double acc
    for i in range(nx):
        for j in range(ny):
            acc = 0.0
            if i < nx - 1:
                acc -= fx[i, j] * gx[i, j] * ihx
            if i > 0:
                acc += fx[i - 1, j] * gx[i - 1, j] * ihx
            if j < ny - 1:
                acc -= fy[i, j] * gy[i, j] * ihy
            if j > 0:
                acc += fy[i, j - 1] * gy[i, j - 1] * ihy
            out[i, j] = acc / w[i, j]


def apply_diffusion(const double[:, ::1] v, const double[:, ::1] cfx, const double[:, ::1] cfy,
                    const double[:, ::1] shift, double hx, double hy,
                    const double[:, ::1] fx, const double[:, ::1] fy, const double[:, ::1] w,
                    bint dirichlet, double[:, ::1] out):
    cdef Py_ssize_t nx = v.shape[0], ny = v.shape[1]
    cdef Py_ssize_t i, j
    cdef double ihx = 1.0 / hx, ihy = 1.0 / hy
    cdef double ihx2 = ihx * ihx, ihy2 = ihy * ihy
    cdef double acc
    for i in range(nx):
        for j in range(ny):
            acc = 0.0
            # flux differences; each face flux = f * c * (v_hi - v_lo)/h, then /h and /w
            if i < nx - 1:
                acc -= fx[i, j] * cfx[i, j] * (v[i + 1, j] - v[i, j]) * ihx2
            if i > 0:
                acc += fx[i - 1, j] * cfx[i - 1, j] * (v[i, j] - v[i - 1, j]) * ihx2
            if j < ny - 1:
                acc -= fy[i, j] * cfy[i, j] * (v[i, j + 1] - v[i, j]) * ihy2
            if j > 0:
                acc += fy[i, j - 1] * cfy[i, j - 1] * (v[i, j] - v[i, j - 1]) * ihy2
            out[i, j] = acc / w[i, j] + shift[i, j] * v[i, j]
    if dirichlet:
        for i in range(nx):
            out[i, 0] = v[i, 0]
            out[i, ny - 1] = v[i, ny - 1]
        for j in range(ny):
            out[0, j] = v[0, j]
            out[nx - 1, j] = v[nx - 1, j]


def diffusion_diagonal(const double[:, ::1] cfx, const double[:, ::1] cfy,
                       const double[:, ::1] shift, double hx, double hy,
                       const double[:, ::1] fx, const double[:, ::1] fy, const double[:, ::1] w,
                       bint dirichlet, double[:, ::1] out):
    cdef Py_ssize_t nx = w.shape[0], ny = w.shape[1]
    cdef Py_ssize_t i, j
    cdef double ihx2 = 1.0 / (hx * hx), ihy2 = 1.0 / (hy * hy)
    cdef double acc
    for i in range(nx):
        for j in range(ny):
            acc = 0.0
            if i < nx - 1:
                acc += fx[i, j] * cfx[i, j] * ihx2
            if i > 0:
                acc += fx[i - 1, j] * cfx[i - 1, j] * ihx2
            if j < ny - 1:
                acc += fy[i, j] * cfy[i, j] * ihy2
            if j > 0:
                acc += fy[i, j - 1] * cfy[i, j - 1] * ihy2
            out[i, j] = shift[i, j] + acc / w[i, j]
    if dirichlet:
        for i in range(nx):
            out[i, 0] = 1.0
            out[i, ny - 1] = 1.0
        for j in range(ny):
            out[0, j] = 1.0
            out[nx - 1, j] = 1.0
