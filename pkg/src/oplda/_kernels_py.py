"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable, and as the
reference the compiled version is benchmarked and tested against.
"""

import numpy as np

GRID_LO = -8.0
GRID_HI = 8.0
GRID_SIZE = 4001
SMALL_G = 1e-8
_MAX_ITER = 100


def gh_transform(z, g, h):
    """Forward g-and-h transform A(z) = (exp(g z) - 1) / g * exp(h z^2 / 2)."""
    z = np.asarray(z, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        if abs(g) < SMALL_G:
            core = z + 0.5 * g * z * z
        else:
            core = np.expm1(g * z) / g
        return core * np.exp(0.5 * h * z * z)


def gh_derivative(z, g, h):
    z = np.asarray(z, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        if abs(g) < SMALL_G:
            core = z + 0.5 * g * z * z
            dcore = 1.0 + g * z
        else:
            core = np.expm1(g * z) / g
            dcore = np.exp(g * z)
        return (dcore + h * z * core) * np.exp(0.5 * h * z * z)


def gh_inverse(x, a, b, g, h):
    """Solve a + b * A(z) = x for z, elementwise.

    A monotone cubic Hermite interpolant on a fixed z-grid gives the starting
    point; safeguarded Newton steps inside the grid bracket polish it until
    ``|a + b A(z) - x| <= 1e-8 * max(1, |x|)``. Targets beyond the grid get a
    bracket by doubling before the same polish.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    zg = np.linspace(GRID_LO, GRID_HI, GRID_SIZE)
    yg = a + b * gh_transform(zg, g, h)
    dg = b * gh_derivative(zg, g, h)

    nan = np.isnan(x)
    out[nan] = np.nan
    out[x == np.inf] = np.inf
    out[x == -np.inf] = -np.inf
    todo = np.isfinite(x)
    xt = x[todo]
    tol = 1e-8 * np.maximum(1.0, np.abs(xt))

    k = np.searchsorted(yg, xt)
    lo = np.empty_like(xt)
    hi = np.empty_like(xt)
    z = np.empty_like(xt)

    inner = (k > 0) & (k < GRID_SIZE)
    ki = k[inner]
    z0, z1 = zg[ki - 1], zg[ki]
    y0, y1 = yg[ki - 1], yg[ki]
    lo[inner], hi[inner] = z0, z1
    # Hermite interpolation of z(y) with slopes dz/dy = 1 / b A'(z)
    with np.errstate(all="ignore"):
        dy = y1 - y0
        s = (xt[inner] - y0) / dy
        s = np.where(np.isfinite(s), s, 0.5)
        m0 = dy / dg[ki - 1]
        m1 = dy / dg[ki]
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        zi = h00 * z0 + h10 * m0 + h01 * z1 + h11 * m1
    bad = ~np.isfinite(zi) | (zi < z0) | (zi > z1)
    zi[bad] = (z0 + s * (z1 - z0))[bad]
    z[inner] = zi

    for side, up in ((k == 0, False), (k >= GRID_SIZE, True)):
        if not side.any():
            continue
        target = xt[side]
        edge = GRID_HI if up else GRID_LO
        far = np.full(target.shape, 2.0 * edge)
        near = np.full(target.shape, edge)
        for _ in range(60):
            fa = a + b * gh_transform(far, g, h)
            need = (fa < target) if up else (fa > target)
            if not need.any():
                break
            near[need] = far[need]
            far[need] *= 2.0
        if up:
            lo[side], hi[side] = near, far
        else:
            lo[side], hi[side] = far, near
        z[side] = 0.5 * (near + far)

    _polish(z, lo, hi, xt, tol, a, b, g, h)
    out[todo] = z
    return out


def _polish(z, lo, hi, target, tol, a, b, g, h):
    active = np.ones(z.shape, dtype=bool)
    for _ in range(_MAX_ITER):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        zi = z[idx]
        with np.errstate(all="ignore"):
            r = a + b * gh_transform(zi, g, h) - target[idx]
            d = b * gh_derivative(zi, g, h)
        done = np.abs(r) <= tol[idx]
        done |= (hi[idx] - lo[idx]) <= 4e-16 * np.maximum(1.0, np.abs(zi))
        pos = r > 0
        hi[idx[pos & ~done]] = zi[pos & ~done]
        lo[idx[~pos & ~done]] = zi[~pos & ~done]
        with np.errstate(all="ignore"):
            step = zi - r / d
        li, hi_ = lo[idx], hi[idx]
        outside = ~np.isfinite(step) | (step <= li) | (step >= hi_)
        step[outside] = 0.5 * (li + hi_)[outside]
        upd = ~done
        z[idx[upd]] = step[upd]
        active[idx[done]] = False


def segment_sums(values, counts):
    """Sum consecutive runs of ``values`` of lengths ``counts``."""
    values = np.asarray(values, dtype=float)
    counts = np.asarray(counts, dtype=np.int64)
    out = np.zeros(counts.shape[0], dtype=float)
    nz = counts > 0
    if not nz.any():
        return out
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    out[nz] = np.add.reduceat(values, starts[nz])
    return out
