"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and ``ENFLOC_NUMBA`` is
not set to ``0``. Both paths evaluate the same arithmetic expressions, so
masks agree exactly and floating results agree to a few ulps.

Kernels:

* ``detail_residual``   moving-average residual, interior samples only
* ``lagged_ncc``        mean-removed normalized cross-correlation per lag
* ``music_noise_power`` noise-subspace projection of real-frequency steering
  vectors (the MUSIC pseudospectrum denominator)
* ``bisector_far_mask`` cells strictly closer to one point than another
* ``ring_mask``         cells whose center distance lies in [r_in, r_out)
"""

import os

import numpy as np

__all__ = [
    "BACKEND",
    "NUMBA_AVAILABLE",
    "numpy_kernels",
    "numba_kernels",
    "detail_residual",
    "lagged_ncc",
    "music_noise_power",
    "bisector_far_mask",
    "ring_mask",
]

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False


def _numba_requested():
    flag = os.environ.get("ENFLOC_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------


def _detail_residual_np(values, order):
    half = (order - 1) // 2
    n_out = values.shape[0] - 2 * half
    center = values[half : half + n_out]
    acc = np.zeros(n_out)
    # sum of (f[n] - f[n-m]) keeps precision for series sitting near 50/60 Hz
    for m in range(-half, half + 1):
        acc += center - values[half - m : half - m + n_out]
    return acc / order


def _lagged_ncc_np(a, b, lags):
    out = np.empty(lags.shape[0])
    n_a = a.shape[0]
    n_b = b.shape[0]
    for k in range(lags.shape[0]):
        lag = lags[k]
        lo = max(0, -lag)
        hi = min(n_b, n_a - lag)
        x = a[lo + lag : hi + lag]
        y = b[lo:hi]
        x = x - x.mean()
        y = y - y.mean()
        den = np.sqrt(np.dot(x, x) * np.dot(y, y))
        out[k] = np.dot(x, y) / den if den > 0.0 else 0.0
    return out


_steering_cache = {}


def _steering(nu, dim):
    key = (nu.shape[0], float(nu[0]), float(nu[-1]), dim)
    hit = _steering_cache.get(key)
    if hit is None or hit[0].shape[0] != nu.shape[0] or not np.array_equal(hit[2], nu):
        phase = 2.0 * np.pi * np.outer(nu, np.arange(dim))
        hit = (np.cos(phase), np.sin(phase), nu.copy())
        if len(_steering_cache) > 16:
            _steering_cache.clear()
        _steering_cache[key] = hit
    return hit[0], hit[1]


def _music_noise_power_np(signal_vecs, nu):
    dim = signal_vecs.shape[0]
    cos_m, sin_m = _steering(nu, dim)
    re = cos_m @ signal_vecs
    im = sin_m @ signal_vecs
    return dim - (re * re + im * im).sum(axis=1)


def _bisector_far_mask_np(xc, yc, pi, pj):
    dxi = xc[None, :] - pi[0]
    dyi = yc[:, None] - pi[1]
    dxj = xc[None, :] - pj[0]
    dyj = yc[:, None] - pj[1]
    return dxi * dxi + dyi * dyi > dxj * dxj + dyj * dyj


def _ring_mask_np(xc, yc, p, r_in, r_out):
    dx = xc[None, :] - p[0]
    dy = yc[:, None] - p[1]
    d2 = dx * dx + dy * dy
    mask = d2 >= r_in * r_in
    if np.isfinite(r_out):
        mask &= d2 < r_out * r_out
    return mask


# ---------------------------------------------------------------------------
# loop implementations (compiled by numba)
# ---------------------------------------------------------------------------


def _detail_residual_loop(values, order):
    half = (order - 1) // 2
    n_out = values.shape[0] - 2 * half
    out = np.empty(n_out)
    for i in range(n_out):
        n = i + half
        acc = 0.0
        for m in range(-half, half + 1):
            acc += values[n] - values[n - m]
        out[i] = acc / order
    return out


def _lagged_ncc_loop(a, b, lags):
    out = np.empty(lags.shape[0])
    n_a = a.shape[0]
    n_b = b.shape[0]
    for k in range(lags.shape[0]):
        lag = lags[k]
        lo = max(0, -lag)
        hi = min(n_b, n_a - lag)
        count = hi - lo
        mx = 0.0
        my = 0.0
        for n in range(lo, hi):
            mx += a[n + lag]
            my += b[n]
        mx /= count
        my /= count
        sxy = 0.0
        sxx = 0.0
        syy = 0.0
        for n in range(lo, hi):
            x = a[n + lag] - mx
            y = b[n] - my
            sxy += x * y
            sxx += x * x
            syy += y * y
        den = np.sqrt(sxx * syy)
        out[k] = sxy / den if den > 0.0 else 0.0
    return out


def _music_noise_power_loop(signal_vecs, nu):
    dim, order = signal_vecs.shape
    out = np.empty(nu.shape[0])
    re = np.empty(order)
    im = np.empty(order)
    for f in range(nu.shape[0]):
        w = 2.0 * np.pi * nu[f]
        cw = np.cos(w)
        sw = np.sin(w)
        c = 1.0
        s = 0.0
        for k in range(order):
            re[k] = 0.0
            im[k] = 0.0
        for i in range(dim):
            for k in range(order):
                re[k] += c * signal_vecs[i, k]
                im[k] += s * signal_vecs[i, k]
            # rotate the phasor one sample forward
            c, s = c * cw - s * sw, s * cw + c * sw
        proj = 0.0
        for k in range(order):
            proj += re[k] * re[k] + im[k] * im[k]
        out[f] = dim - proj
    return out


def _bisector_far_mask_loop(xc, yc, pi, pj):
    out = np.empty((yc.shape[0], xc.shape[0]), dtype=np.bool_)
    for r in range(yc.shape[0]):
        dyi = yc[r] - pi[1]
        dyj = yc[r] - pj[1]
        for c in range(xc.shape[0]):
            dxi = xc[c] - pi[0]
            dxj = xc[c] - pj[0]
            out[r, c] = dxi * dxi + dyi * dyi > dxj * dxj + dyj * dyj
    return out


def _ring_mask_loop(xc, yc, p, r_in, r_out):
    out = np.empty((yc.shape[0], xc.shape[0]), dtype=np.bool_)
    lo = r_in * r_in
    bounded = np.isfinite(r_out)
    hi = r_out * r_out
    for r in range(yc.shape[0]):
        dy = yc[r] - p[1]
        for c in range(xc.shape[0]):
            dx = xc[c] - p[0]
            d2 = dx * dx + dy * dy
            out[r, c] = d2 >= lo and (not bounded or d2 < hi)
    return out


class _Kernels:
    def __init__(self, name, detail, ncc, music, bisector, ring):
        self.name = name
        self.detail_residual = detail
        self.lagged_ncc = ncc
        self.music_noise_power = music
        self.bisector_far_mask = bisector
        self.ring_mask = ring


numpy_kernels = _Kernels(
    "numpy",
    _detail_residual_np,
    _lagged_ncc_np,
    _music_noise_power_np,
    _bisector_far_mask_np,
    _ring_mask_np,
)

if NUMBA_AVAILABLE:
    _jit = numba.njit(cache=True, nogil=True)
    numba_kernels = _Kernels(
        "numba",
        _jit(_detail_residual_loop),
        _jit(_lagged_ncc_loop),
        _jit(_music_noise_power_loop),
        _jit(_bisector_far_mask_loop),
        _jit(_ring_mask_loop),
    )
else:  # pragma: no cover
    numba_kernels = None

_active = numba_kernels if (NUMBA_AVAILABLE and _numba_requested()) else numpy_kernels
BACKEND = _active.name


def detail_residual(values, order):
    return _active.detail_residual(np.ascontiguousarray(values, dtype=np.float64), int(order))


def lagged_ncc(a, b, lags):
    return _active.lagged_ncc(
        np.ascontiguousarray(a, dtype=np.float64),
        np.ascontiguousarray(b, dtype=np.float64),
        np.ascontiguousarray(lags, dtype=np.int64),
    )


def music_noise_power(signal_vecs, nu):
    return _active.music_noise_power(
        np.ascontiguousarray(signal_vecs, dtype=np.float64),
        np.ascontiguousarray(nu, dtype=np.float64),
    )


def bisector_far_mask(xc, yc, pi, pj):
    return _active.bisector_far_mask(
        np.ascontiguousarray(xc, dtype=np.float64),
        np.ascontiguousarray(yc, dtype=np.float64),
        np.asarray(pi, dtype=np.float64),
        np.asarray(pj, dtype=np.float64),
    )


def ring_mask(xc, yc, p, r_in, r_out):
    return _active.ring_mask(
        np.ascontiguousarray(xc, dtype=np.float64),
        np.ascontiguousarray(yc, dtype=np.float64),
        np.asarray(p, dtype=np.float64),
        float(r_in),
        float(r_out),
    )
