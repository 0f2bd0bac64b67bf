"""Pure numpy versions of the compiled kernels.

These are the reference semantics; ``_kernels.pyx`` must agree with them to
rounding error.
"""
import numpy as np
from scipy.special import erf, erfc

_TWO_OVER_SQRT_PI = 2.0 / np.sqrt(np.pi)


def sph_bessel(l, x):
    """Spherical Bessel function of the first kind, elementwise for x >= 0.

    Ascending series below ``x = l + 1``, upward recurrence from the closed
    forms of j_0 and j_1 above.
    """
    x = np.asarray(x, dtype=np.float64)
    flat = x.ravel()
    out = np.empty_like(flat)

    small = flat < l + 1.0
    xs = flat[small]
    term = np.ones_like(xs)
    for k in range(1, l + 1):
        term *= xs / (2.0 * k + 1.0)
    total = term.copy()
    half_x2 = -0.5 * xs * xs
    for k in range(1, 200):
        term *= half_x2 / (k * (2.0 * l + 2.0 * k + 1.0))
        total += term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
    out[small] = total

    xl = flat[~small]
    if xl.size:
        j0 = np.sin(xl) / xl
        if l == 0:
            out[~small] = j0
        else:
            j1 = np.sin(xl) / xl**2 - np.cos(xl) / xl
            for k in range(1, l):
                j0, j1 = j1, (2.0 * k + 1.0) / xl * j1 - j0
            out[~small] = j1
    return out.reshape(x.shape)


def _erf_over_r(eta, r):
    y = eta * r
    out = np.empty_like(r)
    tiny = y < 1e-3
    y2 = y[tiny] ** 2
    out[tiny] = _TWO_OVER_SQRT_PI * eta * (1.0 - y2 / 3.0 + y2**2 / 10.0 - y2**3 / 42.0)
    out[~tiny] = erf(y[~tiny]) / r[~tiny]
    return out


def screened_coulomb_sum(points, centers, charges, L, eta, nimg, exclude):
    """Real-space Ewald sum  -sum_J Z_J sum_n erfc(eta d)/d  at each point.

    Images are taken in a ``(2 nimg + 1)^3`` block around the minimum image of
    every center. When ``exclude >= 0`` the minimum-image term of that center is
    replaced by ``+Z erf(eta s)/s`` (the bare Coulomb well removed
    analytically). A point sitting on a non-excluded nucleus yields NaN.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    c = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    z = np.asarray(charges, dtype=np.float64).ravel()
    out = np.zeros(len(p))
    shifts = np.arange(-nimg, nimg + 1)
    for j in range(len(c)):
        d = p - c[j]
        d -= L * np.floor(d / L + 0.5)
        for a in shifts:
            for b in shifts:
                for e in shifts:
                    r = np.linalg.norm(d + L * np.array([a, b, e]), axis=1)
                    if j == exclude and a == 0 and b == 0 and e == 0:
                        out += z[j] * _erf_over_r(eta, r)
                    else:
                        with np.errstate(divide="ignore", invalid="ignore"):
                            term = erfc(eta * r) / r
                        term[r == 0.0] = np.nan
                        out -= z[j] * term
    return out
