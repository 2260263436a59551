# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled closed-loop derivative functions for the built-in setups.

Covers the hot path of a simulation run: integrator plants under order-1
gains and single/paired wheeled robots under order-2 gains, against the
three built-in objectives.  Everything else falls back to the pure NumPy
implementation (make_rhs returns None).
"""
import numpy as np

from libc.math cimport cos, sin, tan, tanh, fabs, M_PI

from .errors import DomainError, SingularityError, SolveError

cdef enum:
    PLANT_INTEGRATOR = 0
    PLANT_WMR = 1
    PLANT_WMR_PAIR = 2

cdef enum:
    OBJ_QUADRATIC = 0
    OBJ_BLEND = 1
    OBJ_BARRIER = 2


cdef void _path_eval(double[:, ::1] coeffs, double t, int order, double* out) noexcept:
    """order-th derivative of a polynomial path, Horner on shifted coeffs."""
    cdef int dim = coeffs.shape[0]
    cdef int n = coeffs.shape[1]
    cdef int i, j, r
    cdef double acc, ff
    for i in range(dim):
        acc = 0.0
        for j in range(n - 1, order - 1, -1):
            ff = 1.0
            for r in range(order):
                ff *= j - r
            acc = acc * t + coeffs[i, j] * ff
        out[i] = acc


cdef int _cholesky_solve(double* A, double* b, double* out, int n) noexcept:
    """Solve SPD A x = b (A row-major, destroyed). Returns 0 on success."""
    cdef int i, j, p
    cdef double s
    for j in range(n):
        s = A[j * n + j]
        for p in range(j):
            s -= A[j * n + p] * A[j * n + p]
        if s <= 0.0:
            return 1
        A[j * n + j] = s ** 0.5
        for i in range(j + 1, n):
            s = A[i * n + j]
            for p in range(j):
                s -= A[i * n + p] * A[j * n + p]
            A[i * n + j] = s / A[j * n + j]
    for i in range(n):        # forward: L z = b
        s = b[i]
        for p in range(i):
            s -= A[i * n + p] * out[p]
        out[i] = s / A[i * n + i]
    for i in range(n - 1, -1, -1):   # backward: L^T x = z
        s = out[i]
        for p in range(i + 1, n):
            s -= A[p * n + i] * out[p]
        out[i] = s / A[i * n + i]
    return 0


cdef class CompiledRHS:
    """Closed-loop derivative function f(t, z) for one built-in setup."""

    cdef int plant_kind, obj_kind, k, m, total
    cdef double a0, a1
    cdef double eps1, eps2
    cdef double center, width
    cdef double dpole, gain
    cdef double[:, ::1] coeffs1
    cdef double[:, ::1] coeffs2

    def __init__(self, plant_kind, obj_kind, k, m, total, a, eps1, eps2,
                 center, width, dpole, gain, coeffs1, coeffs2):
        self.plant_kind = plant_kind
        self.obj_kind = obj_kind
        self.k = k
        self.m = m
        self.total = total
        self.a0 = a[0]
        self.a1 = a[1] if k >= 2 else 0.0
        self.eps1, self.eps2 = eps1, eps2
        self.center, self.width = center, width
        self.dpole, self.gain = dpole, gain
        self.coeffs1 = coeffs1
        self.coeffs2 = coeffs2

    def __call__(self, double t, z):
        cdef double[::1] zv = np.ascontiguousarray(z, dtype=np.float64)
        out = np.empty(self.total, dtype=np.float64)
        cdef double[::1] ov = out
        self._eval(t, &zv[0], &ov[0])
        return out

    cdef void _eval(self, double t, double* z, double* out) except *:
        cdef double y[4]
        cdef double ydot[4]
        cdef double g0[4]
        cdef double t11[4]
        cdef double t12[4]
        cdef double t3yy[4]
        cdef double rhs[4]
        cdef double y_imp[4]
        cdef double hess[16]
        cdef double ca, sa, cb, sb, z1, z2
        cdef int i, j, m = self.m

        # output stack from the plant state
        if self.plant_kind == PLANT_INTEGRATOR:
            for i in range(m):
                y[i] = z[i]
                ydot[i] = 0.0
        elif self.plant_kind == PLANT_WMR:
            z1 = z[3]
            if fabs(z1) < self.eps1:
                raise SingularityError(
                    f"forward speed |u1| = {fabs(z1):.3e} below "
                    f"{self.eps1:.1e}; decoupling matrix singular")
            ca, sa = cos(z[2]), sin(z[2])
            y[0], y[1] = z[0], z[1]
            ydot[0], ydot[1] = ca * z1, sa * z1
        else:
            z1, z2 = z[6], z[7]
            if fabs(z1) < self.eps1 or fabs(z2) < self.eps2:
                raise SingularityError(
                    f"forward speed |u1| = {min(fabs(z1), fabs(z2)):.3e} below "
                    f"{self.eps1:.1e}; decoupling matrix singular")
            ca, sa = cos(z[2]), sin(z[2])
            cb, sb = cos(z[5]), sin(z[5])
            y[0], y[1], y[2], y[3] = z[0], z[1], z[3], z[4]
            ydot[0], ydot[1] = ca * z1, sa * z1
            ydot[2], ydot[3] = cb * z2, sb * z2

        self._tensors(t, y, ydot, g0, hess, t11, t12, t3yy)

        # rhs = a0 g0 (+ a1 g1 - T3:ydot ydot - T12 for order 2)
        cdef double g1
        for i in range(m):
            rhs[i] = self.a0 * g0[i]
        if self.k == 2:
            for i in range(m):
                g1 = t11[i]
                for j in range(m):
                    g1 += hess[i * m + j] * ydot[j]
                rhs[i] += self.a1 * g1 - t3yy[i] - t12[i]
        else:
            for i in range(m):
                rhs[i] -= t11[i]

        if _cholesky_solve(hess, rhs, y_imp, m):
            raise SolveError(f"Hessian not positive definite at t={t}")

        # invert the decoupling and assemble the state rates
        if self.plant_kind == PLANT_INTEGRATOR:
            for i in range(m):
                out[i] = y_imp[i]
        elif self.plant_kind == PLANT_WMR:
            out[0] = ydot[0]
            out[1] = ydot[1]
            out[2] = (-sa * y_imp[0] + ca * y_imp[1]) / z1   # u2 = w2
            out[3] = ca * y_imp[0] + sa * y_imp[1]           # zeta' = w1
        else:
            out[0] = ydot[0]
            out[1] = ydot[1]
            out[2] = (-sa * y_imp[0] + ca * y_imp[1]) / z1
            out[3] = ydot[2]
            out[4] = ydot[3]
            out[5] = (-sb * y_imp[2] + cb * y_imp[3]) / z2
            out[6] = ca * y_imp[0] + sa * y_imp[1]
            out[7] = cb * y_imp[2] + sb * y_imp[3]

    cdef void _tensors(self, double t, double* y, double* ydot, double* g0,
                       double* hess, double* t11, double* t12,
                       double* t3yy) except *:
        cdef double p1[4]
        cdef double d1[4]
        cdef double dd1[4]
        cdef double p2[4]
        cdef double d2[4]
        cdef double dd2[4]
        cdef double e1[4]
        cdef double e2[4]
        cdef double dq[4]
        cdef double tau, s0, s1d, s2d, q, c, sig, h1, h2, h3
        cdef double sq1, sq2, w1, w2
        cdef int i, j, m = self.m

        for i in range(m * m):
            hess[i] = 0.0
        for i in range(m):
            t3yy[i] = 0.0

        if self.obj_kind == OBJ_QUADRATIC:
            _path_eval(self.coeffs1, t, 0, p1)
            _path_eval(self.coeffs1, t, 1, d1)
            _path_eval(self.coeffs1, t, 2, dd1)
            for i in range(m):
                g0[i] = y[i] - p1[i]
                t11[i] = -d1[i]
                t12[i] = -dd1[i]
                hess[i * m + i] = 1.0
        elif self.obj_kind == OBJ_BLEND:
            tau = tanh((t - self.center) / self.width)
            s0 = 0.5 - 0.5 * tau
            s1d = -0.5 * (1.0 - tau * tau) / self.width
            s2d = tau * (1.0 - tau * tau) / (self.width * self.width)
            _path_eval(self.coeffs1, t, 0, p1)
            _path_eval(self.coeffs1, t, 1, d1)
            _path_eval(self.coeffs1, t, 2, dd1)
            _path_eval(self.coeffs2, t, 0, p2)
            _path_eval(self.coeffs2, t, 1, d2)
            _path_eval(self.coeffs2, t, 2, dd2)
            for i in range(m):
                e1[i] = y[i] - p1[i]
                e2[i] = y[i] - p2[i]
                g0[i] = 2.0 * (s0 * e1[i] + (1.0 - s0) * e2[i])
                t11[i] = 2.0 * (s1d * (e1[i] - e2[i]) - s0 * d1[i]
                                - (1.0 - s0) * d2[i])
                t12[i] = 2.0 * (s2d * (e1[i] - e2[i]) - 2.0 * s1d * d1[i]
                                + 2.0 * s1d * d2[i] - s0 * dd1[i]
                                - (1.0 - s0) * dd2[i])
                hess[i * m + i] = 2.0
        else:  # OBJ_BARRIER, m == 4
            _path_eval(self.coeffs1, t, 0, p1)
            _path_eval(self.coeffs1, t, 1, d1)
            _path_eval(self.coeffs1, t, 2, dd1)
            _path_eval(self.coeffs2, t, 0, p2)
            _path_eval(self.coeffs2, t, 1, d2)
            _path_eval(self.coeffs2, t, 2, dd2)
            e1[0] = y[0] - y[2]
            e1[1] = y[1] - y[3]
            q = e1[0] * e1[0] + e1[1] * e1[1]
            if q >= self.dpole:
                raise DomainError(
                    f"squared inter-agent distance {q:.6g} at or beyond the "
                    f"barrier pole {self.dpole:.6g}")
            c = M_PI / (2.0 * self.dpole)
            tau = tan(c * q)
            sig = 1.0 + tau * tau
            h1 = 2.0 * self.gain * c * tau * sig
            h2 = 2.0 * self.gain * c * c * sig * (sig + 2.0 * tau * tau)
            h3 = 8.0 * self.gain * c * c * c * tau * sig * (2.0 * sig + tau * tau)
            dq[0], dq[1] = 2.0 * e1[0], 2.0 * e1[1]
            dq[2], dq[3] = -2.0 * e1[0], -2.0 * e1[1]
            # tracking terms
            g0[0] = 2.0 * (y[0] - p1[0])
            g0[1] = 2.0 * (y[1] - p1[1])
            g0[2] = 2.0 * (y[2] - p2[0])
            g0[3] = 2.0 * (y[3] - p2[1])
            t11[0], t11[1] = -2.0 * d1[0], -2.0 * d1[1]
            t11[2], t11[3] = -2.0 * d2[0], -2.0 * d2[1]
            t12[0], t12[1] = -2.0 * dd1[0], -2.0 * dd1[1]
            t12[2], t12[3] = -2.0 * dd2[0], -2.0 * dd2[1]
            # barrier gradient / Hessian
            for i in range(4):
                g0[i] += h1 * dq[i]
                for j in range(4):
                    hess[i * 4 + j] = h2 * dq[i] * dq[j]
                hess[i * 4 + i] += 2.0
            # h1 * d2q with d2q = 2 [[I,-I],[-I,I]]
            for i in range(2):
                hess[i * 4 + i] += 2.0 * h1
                hess[(i + 2) * 4 + (i + 2)] += 2.0 * h1
                hess[i * 4 + i + 2] -= 2.0 * h1
                hess[(i + 2) * 4 + i] -= 2.0 * h1
            # third-partial double contraction with ydot:
            # s1 = dq . ydot, s2 = ydot^T d2q ydot, (d2q ydot) = 2(dy, -dy)
            w1 = ydot[0] - ydot[2]
            w2 = ydot[1] - ydot[3]
            sq1 = dq[0] * w1 + dq[1] * w2              # dq . ydot
            sq2 = 2.0 * (w1 * w1 + w2 * w2)            # ydot^T d2q ydot
            for i in range(4):
                t3yy[i] = h3 * dq[i] * sq1 * sq1 + h2 * dq[i] * sq2
            t3yy[0] += h2 * 2.0 * ( 2.0 * w1) * sq1
            t3yy[1] += h2 * 2.0 * ( 2.0 * w2) * sq1
            t3yy[2] += h2 * 2.0 * (-2.0 * w1) * sq1
            t3yy[3] += h2 * 2.0 * (-2.0 * w2) * sq1


def make_rhs(plant, objective, gains):
    """Compiled RHS for supported plant/objective/gain combos, else None."""
    from .objectives import BarrierSum, QuadraticTracking, SwitchingBlend
    from .plants import IntegratorPlant, ParallelPlants, WMRPlant

    k = gains.order
    m = plant.output_dim
    eps1 = eps2 = 0.0
    if isinstance(plant, IntegratorPlant):
        if k != 1 or m > 4:
            return None
        plant_kind, total = PLANT_INTEGRATOR, m
    elif isinstance(plant, WMRPlant):
        if k != 2:
            return None
        plant_kind, total = PLANT_WMR, 4
        eps1 = eps2 = plant.singularity_epsilon
    elif (isinstance(plant, ParallelPlants) and len(plant.plants) == 2
          and all(isinstance(p, WMRPlant) for p in plant.plants)):
        if k != 2:
            return None
        plant_kind, total = PLANT_WMR_PAIR, 8
        eps1 = plant.plants[0].singularity_epsilon
        eps2 = plant.plants[1].singularity_epsilon
    else:
        return None

    center = width = dpole = gain = 0.0
    if isinstance(objective, QuadraticTracking):
        if objective.path.dim != m:
            return None
        obj_kind = OBJ_QUADRATIC
        coeffs1 = objective.path.coefficients
        coeffs2 = np.zeros((1, 1))
    elif isinstance(objective, SwitchingBlend):
        if objective.output_dim != m:
            return None
        obj_kind = OBJ_BLEND
        coeffs1, coeffs2 = objective.path1.coefficients, objective.path2.coefficients
        center, width = objective.center, objective.width
    elif isinstance(objective, BarrierSum):
        if m != 4:
            return None
        obj_kind = OBJ_BARRIER
        coeffs1, coeffs2 = objective.path1.coefficients, objective.path2.coefficients
        dpole, gain = objective.max_sq_distance, objective.gain
    else:
        return None

    return CompiledRHS(plant_kind, obj_kind, k, m, total,
                       np.ascontiguousarray(gains.coefficients, dtype=np.float64),
                       eps1, eps2, center, width, dpole, gain,
                       np.ascontiguousarray(coeffs1, dtype=np.float64),
                       np.ascontiguousarray(coeffs2, dtype=np.float64))
