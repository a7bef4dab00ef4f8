"""Hot numeric kernels with numba-accelerated and pure-numpy implementations.

Every kernel exists twice: a loop formulation compiled with ``numba.njit``
and a vectorized (or plain Python, for the sequential coders) fallback.
Setting the environment variable ``NTC_PURE_NUMPY=1`` before import selects
the fallback path; so does an unavailable numba. Both paths compute the
same quantities (bit-identical for the integer coders, ulp-level float
differences elsewhere). ``benchmarks/bench_kernels.py`` times them side by
side.
"""

import os

import numpy as np

USE_NUMBA = os.environ.get("NTC_PURE_NUMPY", "") not in ("1", "true", "yes")
if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False

# range coder arithmetic: 32-bit low/range, byte renormalization,
# frequency totals fixed at 2^16
RC_TOTAL_BITS = 16
RC_TOTAL = 1 << RC_TOTAL_BITS
_RC_MAX = 1 << 32
_RC_MIN = 1 << 24
_RC_MASK = _RC_MAX - 1
_RC_SHIFT = 24


def _reflect(i, n):
    # half-sample symmetric extension: [.. x1 x0 | x0 x1 .. x_{n-1} | x_{n-1} ..]
    while i < 0 or i >= n:
        if i < 0:
            i = -1 - i
        if i >= n:
            i = 2 * n - 1 - i
    return i


def sym_indices(n, radius):
    """Source indices of a symmetric extension of length n + 2*radius."""
    return np.array([_reflect(t, n) for t in range(-radius, n + radius)], dtype=np.int64)


# ---------------------------------------------------------------------------
# separable odd-tap convolution with symmetric boundaries (pyramid blur)

def _sep_conv_sym_np(x, taps):
    r = taps.size // 2
    y = x
    for axis in (0, 1):
        n = y.shape[axis]
        idx = sym_indices(n, r)
        yp = np.take(y, idx, axis=axis)
        out = np.zeros_like(y)
        sl = [slice(None), slice(None)]
        for t in range(taps.size):
            sl[axis] = slice(t, t + n)
            out += taps[t] * yp[tuple(sl)]
        y = out
    return y


def _sep_conv_sym_adj_np(ybar, taps):
    r = taps.size // 2
    x = ybar
    for axis in (1, 0):
        n = x.shape[axis]
        idx = sym_indices(n, r)
        shp = list(x.shape)
        shp[axis] = n + 2 * r
        pad = np.zeros(shp)
        sl = [slice(None), slice(None)]
        for t in range(taps.size):
            sl[axis] = slice(t, t + n)
            pad[tuple(sl)] += taps[t] * x
        out = np.zeros_like(x)
        if axis == 0:
            np.add.at(out, idx, pad)
        else:
            np.add.at(out, (slice(None), idx), pad)
        x = out
    return x


def _sep_conv_sym_loop(x, taps):
    h, w = x.shape
    r = taps.size // 2
    tmp = np.empty((h, w))
    for j in range(w):
        for i in range(h):
            acc = 0.0
            for t in range(taps.size):
                acc += taps[t] * x[_reflect(i + t - r, h), j]
            tmp[i, j] = acc
    out = np.empty((h, w))
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for t in range(taps.size):
                acc += taps[t] * tmp[i, _reflect(j + t - r, w)]
            out[i, j] = acc
    return out


def _sep_conv_sym_adj_loop(ybar, taps):
    h, w = ybar.shape
    r = taps.size // 2
    tmp = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            g = ybar[i, j]
            for t in range(taps.size):
                tmp[i, _reflect(j + t - r, w)] += taps[t] * g
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            g = tmp[i, j]
            for t in range(taps.size):
                out[_reflect(i + t - r, h), j] += taps[t] * g
    return out


# ---------------------------------------------------------------------------
# dense 2-D convolution with symmetric boundaries (amplitude pooling)

def _conv2_sym_np(x, kern):
    h, w = x.shape
    ra, rb = kern.shape[0] // 2, kern.shape[1] // 2
    xp = np.take(np.take(x, sym_indices(h, ra), axis=0), sym_indices(w, rb), axis=1)
    out = np.zeros_like(x)
    for a in range(kern.shape[0]):
        for b in range(kern.shape[1]):
            out += kern[a, b] * xp[a:a + h, b:b + w]
    return out


def _conv2_sym_adj_np(ybar, kern):
    h, w = ybar.shape
    ra, rb = kern.shape[0] // 2, kern.shape[1] // 2
    pad = np.zeros((h + 2 * ra, w + 2 * rb))
    for a in range(kern.shape[0]):
        for b in range(kern.shape[1]):
            pad[a:a + h, b:b + w] += kern[a, b] * ybar
    rows = np.zeros((h, w + 2 * rb))
    np.add.at(rows, sym_indices(h, ra), pad)
    out = np.zeros((h, w))
    np.add.at(out, (slice(None), sym_indices(w, rb)), rows)
    return out


def _conv2_sym_loop(x, kern):
    h, w = x.shape
    ra, rb = kern.shape[0] // 2, kern.shape[1] // 2
    out = np.empty((h, w))
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for a in range(kern.shape[0]):
                ii = _reflect(i + a - ra, h)
                for b in range(kern.shape[1]):
                    acc += kern[a, b] * x[ii, _reflect(j + b - rb, w)]
            out[i, j] = acc
    return out


def _conv2_sym_adj_loop(ybar, kern):
    h, w = ybar.shape
    ra, rb = kern.shape[0] // 2, kern.shape[1] // 2
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            g = ybar[i, j]
            for a in range(kern.shape[0]):
                ii = _reflect(i + a - ra, h)
                for b in range(kern.shape[1]):
                    out[ii, _reflect(j + b - rb, w)] += kern[a, b] * g
    return out


# ---------------------------------------------------------------------------
# divisive-normalization activity pool: P[n,i] = sum_j gamma[i,j] |u|^alpha[i,j]
# (the all-exponents-2 case is routed to BLAS upstream; these kernels handle
# arbitrary per-pair exponents without materializing the N x C x C tensor)

def _power_pool_fwd_np(u, gamma, alpha, chunk=64):
    n, c = u.shape
    out = np.empty((n, c))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        powered = u[lo:hi, None, :] ** alpha[None, :, :]
        out[lo:hi] = np.einsum("ij,nij->ni", gamma, powered)
    return out


def _power_pool_bwd_np(u, gamma, alpha, pbar, want_alpha, chunk=64):
    n, c = u.shape
    gamma_bar = np.zeros((c, c))
    alpha_bar = np.zeros((c, c))
    u_bar = np.empty((n, c))
    safe_u = np.maximum(u, 1e-12)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        powered = u[lo:hi, None, :] ** alpha[None, :, :]
        gamma_bar += np.einsum("ni,nij->ij", pbar[lo:hi], powered)
        dpow = alpha[None, :, :] * safe_u[lo:hi, None, :] ** (alpha[None, :, :] - 1.0)
        u_bar[lo:hi] = np.einsum("ni,ij,nij->nj", pbar[lo:hi], gamma, dpow)
        if want_alpha:
            alpha_bar += gamma * np.einsum(
                "ni,nij->ij", pbar[lo:hi], powered * np.log(safe_u[lo:hi, None, :]))
    return gamma_bar, u_bar, alpha_bar


def _power_pool_fwd_loop(u, gamma, alpha):
    n, c = u.shape
    out = np.empty((n, c))
    for k in range(n):
        for i in range(c):
            acc = 0.0
            for j in range(c):
                a = alpha[i, j]
                uj = u[k, j]
                if a == 2.0:
                    acc += gamma[i, j] * uj * uj
                else:
                    acc += gamma[i, j] * uj ** a
            out[k, i] = acc
    return out


def _power_pool_bwd_loop(u, gamma, alpha, pbar, want_alpha):
    n, c = u.shape
    gamma_bar = np.zeros((c, c))
    alpha_bar = np.zeros((c, c))
    u_bar = np.zeros((n, c))
    for k in range(n):
        for i in range(c):
            g = pbar[k, i]
            for j in range(c):
                a = alpha[i, j]
                uj = u[k, j]
                su = uj if uj > 1e-12 else 1e-12
                if a == 2.0:
                    pw = uj * uj
                    dp = 2.0 * su
                else:
                    pw = uj ** a
                    dp = a * su ** (a - 1.0)
                gamma_bar[i, j] += g * pw
                u_bar[k, j] += g * gamma[i, j] * dp
                if want_alpha:
                    alpha_bar[i, j] += g * gamma[i, j] * pw * np.log(su)
    return gamma_bar, u_bar, alpha_bar


# ---------------------------------------------------------------------------
# piecewise-linear density: batched evaluation and linear binning

def _plin_eval_np(ts, origins, counts, values, spacing, floor):
    n, c = ts.shape
    p = np.full((n, c), floor)
    slope = np.zeros((n, c))
    for i in range(c):
        kn = counts[i]
        pos = (ts[:, i] - origins[i]) / spacing
        inside = (pos >= 0.0) & (pos <= kn - 1)
        b = np.minimum(pos[inside].astype(np.int64), kn - 2)
        f = pos[inside] - b
        v0 = values[i, b]
        v1 = values[i, b + 1]
        p[inside, i] = v0 + (v1 - v0) * f
        slope[inside, i] = (v1 - v0) / spacing
    return p, slope


def _plin_eval_loop(ts, origins, counts, values, spacing, floor):
    n, c = ts.shape
    p = np.empty((n, c))
    slope = np.empty((n, c))
    for k in range(n):
        for i in range(c):
            kn = counts[i]
            pos = (ts[k, i] - origins[i]) / spacing
            if pos < 0.0 or pos > kn - 1:
                p[k, i] = floor
                slope[k, i] = 0.0
            else:
                b = int(pos)
                if b > kn - 2:
                    b = kn - 2
                f = pos - b
                v0 = values[i, b]
                v1 = values[i, b + 1]
                p[k, i] = v0 + (v1 - v0) * f
                slope[k, i] = (v1 - v0) / spacing
    return p, slope


def _bin_linear_np(samples, origin, spacing, nknots):
    w = np.zeros(nknots)
    pos = (samples - origin) / spacing
    lo = pos <= 0.0
    hi = pos >= nknots - 1
    w[0] += np.count_nonzero(lo)
    w[nknots - 1] += np.count_nonzero(hi)
    mid = pos[~(lo | hi)]
    b = mid.astype(np.int64)
    f = mid - b
    np.add.at(w, b, 1.0 - f)
    np.add.at(w, b + 1, f)
    return w


def _bin_linear_loop(samples, origin, spacing, nknots):
    w = np.zeros(nknots)
    for m in range(samples.size):
        pos = (samples[m] - origin) / spacing
        if pos <= 0.0:
            w[0] += 1.0
        elif pos >= nknots - 1:
            w[nknots - 1] += 1.0
        else:
            b = int(pos)
            f = pos - b
            w[b] += 1.0 - f
            w[b + 1] += f
    return w


# ---------------------------------------------------------------------------
# byte-oriented range coder with carry propagation; symbols cycle through
# per-channel cumulative frequency tables whose totals are exactly RC_TOTAL

def _rc_encode_loop(symbols, nchannels, cdf, out):
    low = 0
    rng = _RC_MAX
    buff = 0
    pending = 0
    pos = 0
    for t in range(symbols.size):
        ch = t % nchannels
        s = symbols[t]
        r = rng >> RC_TOTAL_BITS
        low += r * cdf[ch, s]
        rng = r * (cdf[ch, s + 1] - cdf[ch, s])
        if low >= _RC_MAX:  # carry into the pending byte chain
            buff += 1
            low &= _RC_MASK
            if pending > 0:
                out[pos] = buff
                pos += 1
                for _ in range(pending - 1):
                    out[pos] = 0
                    pos += 1
                buff = 0
                pending = 0
        while rng < _RC_MIN:
            if low < (0xFF << _RC_SHIFT):
                out[pos] = buff
                pos += 1
                for _ in range(pending):
                    out[pos] = 0xFF
                    pos += 1
                pending = 0
                buff = (low >> _RC_SHIFT) & 0xFF
            else:
                pending += 1
            low = (low << 8) & _RC_MASK
            rng <<= 8
    out[pos] = buff
    pos += 1
    for _ in range(pending):
        out[pos] = 0xFF
        pos += 1
    for shift in (24, 16, 8, 0):
        out[pos] = (low >> shift) & 0xFF
        pos += 1
    return pos


def _rc_decode_loop(data, count, nchannels, cdf, sizes, symbols):
    nbytes = data.size
    code = 0
    ptr = 1  # first byte is the encoder's initial empty buffer
    for _ in range(4):
        nxt = int(data[ptr]) if ptr < nbytes else 0
        code = (code << 8) | nxt
        ptr += 1
    rng = _RC_MAX
    for t in range(count):
        ch = t % nchannels
        r = rng >> RC_TOTAL_BITS
        v = code // r
        if v > RC_TOTAL - 1:
            v = RC_TOTAL - 1
        lo = 0
        hi = sizes[ch]
        while hi - lo > 1:
            mid = (lo + hi) >> 1
            if cdf[ch, mid] <= v:
                lo = mid
            else:
                hi = mid
        symbols[t] = lo
        code -= r * cdf[ch, lo]
        rng = r * (cdf[ch, lo + 1] - cdf[ch, lo])
        while rng < _RC_MIN:
            nxt = int(data[ptr]) if ptr < nbytes else 0
            code = ((code << 8) | nxt) & _RC_MASK
            rng <<= 8
            ptr += 1
    return ptr  # bytes consumed; > nbytes signals a truncated stream


if USE_NUMBA:
    _reflect = njit(cache=True, inline="always")(_reflect)
    sep_conv_sym = njit(cache=True)(_sep_conv_sym_loop)
    sep_conv_sym_adj = njit(cache=True)(_sep_conv_sym_adj_loop)
    conv2_sym = njit(cache=True)(_conv2_sym_loop)
    conv2_sym_adj = njit(cache=True)(_conv2_sym_adj_loop)
    power_pool_fwd = njit(cache=True)(_power_pool_fwd_loop)
    power_pool_bwd = njit(cache=True)(_power_pool_bwd_loop)
    plin_eval = njit(cache=True)(_plin_eval_loop)
    bin_linear = njit(cache=True)(_bin_linear_loop)
    rc_encode_core = njit(cache=True)(_rc_encode_loop)
    rc_decode_core = njit(cache=True)(_rc_decode_loop)
else:
    sep_conv_sym = _sep_conv_sym_np
    sep_conv_sym_adj = _sep_conv_sym_adj_np
    conv2_sym = _conv2_sym_np
    conv2_sym_adj = _conv2_sym_adj_np
    power_pool_fwd = _power_pool_fwd_np
    power_pool_bwd = _power_pool_bwd_np
    plin_eval = _plin_eval_np
    bin_linear = _bin_linear_np
    rc_encode_core = _rc_encode_loop
    rc_decode_core = _rc_decode_loop
