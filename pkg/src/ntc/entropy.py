"""Scalar quantizers, additive-noise relaxation, and the per-channel
piecewise-linear code density used as the differentiable rate proxy.

The density of a code perturbed by unit uniform noise coincides with the
integer-bin probability masses at integer points, so one spline per channel
serves both as the training-time rate proxy and, frozen at integers, as
the source of entropy-coding tables.
"""

import dataclasses
import struct

import numpy as np

from . import _kernels
from .errors import DataFormatError

LN2 = np.log(2.0)


def round_half_away(y):
    """Elementwise round with ties going away from zero."""
    return np.copysign(np.floor(np.abs(y) + 0.5), y)


def quantize_uniform(y):
    """Unit-bin scalar quantizer; returns (integer indices, reconstruction)."""
    q = round_half_away(np.asarray(y, dtype=np.float64))
    return q.astype(np.int64), q


def quantize_deadzone(v, step, zone_ratio=2.0, recon_offset=0.25):
    """Dead-zone scalar quantizer with zone width ``zone_ratio * step``.

    ``zone_ratio == 1`` is exactly the uniform quantizer with the given
    step. For wider zones, nonzero bins reconstruct at a quarter-step past
    the index (biased toward zero, the usual choice for decaying
    coefficient distributions).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if zone_ratio < 1:
        raise ValueError("zone_ratio must be >= 1")
    v = np.asarray(v, dtype=np.float64)
    if zone_ratio == 1:
        q, _ = quantize_uniform(v / step)
        return q, q * step
    mag = np.floor(np.abs(v) / step + 0.5 - (zone_ratio - 1.0) / 2.0)
    q = (np.sign(v) * np.maximum(mag, 0.0)).astype(np.int64)
    vhat = np.sign(q) * (np.abs(q) + recon_offset) * step
    return q, vhat


@dataclasses.dataclass
class NoisySample:
    noisy: np.ndarray
    delta: np.ndarray


def perturb(y, rng):
    """Add iid uniform(-1/2, 1/2) noise; the draw is returned for reuse."""
    y = np.asarray(y, dtype=np.float64)
    delta = rng.random(y.shape) - 0.5
    # keep the support open at -1/2 (rng.random may return exactly 0.0)
    delta[delta == -0.5] = np.nextafter(-0.5, 0.0)
    return NoisySample(noisy=y + delta, delta=delta)


class DensityModel:
    """Per-channel linear spline over a uniform knot grid.

    Knots sit at integer multiples of ``spacing``; each channel's grid
    covers its observed samples with a 1.5-wide margin and widens as new
    samples arrive. Values are floored at a small positive constant and
    kept trapezoid-normalized to unit integral.
    """

    def __init__(self, channels, spacing=0.1, floor=1e-9):
        if channels < 1:
            raise ValueError("need at least one channel")
        if spacing <= 0:
            raise ValueError("spacing must be positive")
        self.channels = channels
        self.spacing = float(spacing)
        self.floor = float(floor)
        self.initialized = False
        self._k0 = np.zeros(channels, dtype=np.int64)
        self._values = [np.array([]) for _ in range(channels)]

    # -- internal helpers ---------------------------------------------------

    def _copy(self):
        m = DensityModel(self.channels, self.spacing, self.floor)
        m.initialized = self.initialized
        m._k0 = self._k0.copy()
        m._values = [v.copy() for v in self._values]
        return m

    def _packed(self):
        counts = np.array([max(v.size, 2) for v in self._values], dtype=np.int64)
        values = np.full((self.channels, int(counts.max())), self.floor)
        origins = self._k0 * self.spacing
        for i, v in enumerate(self._values):
            if v.size:
                values[i, :v.size] = v
            else:
                counts[i] = 2  # degenerate flat segment at the floor
        return origins.astype(np.float64), counts, values

    def _normalize_channel(self, vals):
        vals = np.maximum(vals, self.floor)
        vals[0] = vals[-1] = self.floor
        z = np.trapezoid(vals, dx=self.spacing)
        vals /= z
        np.maximum(vals, self.floor, out=vals)
        vals[0] = vals[-1] = self.floor
        return vals

    # -- spec surface -------------------------------------------------------

    def update(self, samples, rate):
        """Blend a linear-binned histogram of ``samples`` into the model.

        Returns a new model (copy-on-update); the first update ignores
        ``rate`` and adopts the histogram outright.
        """
        if not 0 < rate <= 1:
            raise ValueError("rate must lie in (0, 1]")
        samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
        if samples.size == 0:
            return self
        if samples.shape[1] != self.channels:
            raise ValueError(
                f"expected {self.channels} channels, got {samples.shape[1]}")
        out = self._copy()
        n = samples.shape[0]
        d = self.spacing
        for i in range(self.channels):
            s = samples[:, i]
            k_lo = int(np.floor((s.min() - 1.5) / d))
            k_hi = int(np.ceil((s.max() + 1.5) / d))
            if self.initialized:
                old = self._values[i]
                k_lo = min(k_lo, self._k0[i])
                k_hi = max(k_hi, self._k0[i] + old.size - 1)
                vals = np.full(k_hi - k_lo + 1, self.floor)
                off = self._k0[i] - k_lo
                vals[off:off + old.size] = old
            else:
                vals = np.full(k_hi - k_lo + 1, self.floor)
            weights = _kernels.bin_linear(
                np.ascontiguousarray(s), k_lo * d, d, vals.size)
            fresh = weights / (n * d)
            r = rate if self.initialized else 1.0
            vals = (1.0 - r) * vals + r * fresh
            out._values[i] = self._normalize_channel(vals)
            out._k0[i] = k_lo
        out.initialized = True
        return out

    def eval_batch(self, ts):
        """Densities and segment slopes at ``ts`` with shape (N, channels)."""
        ts = np.ascontiguousarray(ts, dtype=np.float64)
        origins, counts, values = self._packed()
        return _kernels.plin_eval(ts, origins, counts, values,
                                  self.spacing, self.floor)

    def eval(self, t, channel):
        """Density and slope at a single point of one channel."""
        ts = np.full((1, self.channels), 0.0)
        ts[0, channel] = t
        p, s = self.eval_batch(ts)
        return float(p[0, channel]), float(s[0, channel])

    def integral(self, channel):
        v = self._values[channel]
        if v.size < 2:
            return 0.0
        return float(np.trapezoid(v, dx=self.spacing))

    def support(self, channel):
        """Knot-grid endpoints of one channel."""
        k0 = self._k0[channel]
        return k0 * self.spacing, (k0 + self._values[channel].size - 1) * self.spacing

    def pmf_at_integers(self, channel):
        """Renormalized density samples at the integers inside the grid.

        Returns ``(n_min, pmf)``; strictly positive over the range.
        """
        if not self.initialized:
            raise ValueError("density model has no samples yet")
        lo, hi = self.support(channel)
        n_min = int(np.ceil(lo))
        n_max = int(np.floor(hi))
        if n_min > n_max:
            raise ValueError("grid contains no integers")
        ns = np.arange(n_min, n_max + 1, dtype=np.float64)
        ts = np.zeros((ns.size, self.channels))
        ts[:, channel] = ns
        p, _ = self.eval_batch(ts)
        pmf = np.maximum(p[:, channel], self.floor)
        return n_min, pmf / pmf.sum()

    def differential_entropy_bits(self, channel):
        """Exact -integral p log2 p of the spline (per-segment closed form)."""
        v = self._values[channel]
        d = self.spacing
        p0, p1 = v[:-1], v[1:]
        slope = (p1 - p0) / d
        flat = np.abs(p1 - p0) < 1e-14
        with np.errstate(divide="ignore", invalid="ignore"):
            anti1 = p1 * p1 * (2.0 * np.log(p1) - 1.0) / 4.0
            anti0 = p0 * p0 * (2.0 * np.log(p0) - 1.0) / 4.0
            seg = np.where(flat, d * p0 * np.log(np.maximum(p0, self.floor)),
                           (anti1 - anti0) / np.where(flat, 1.0, slope))
        return float(-seg.sum() / LN2)

    # -- checkpoint embedding ------------------------------------------------

    def to_bytes(self):
        if not self.initialized:
            raise ValueError("cannot serialize an empty density model")
        parts = [struct.pack("<I", self.channels)]
        for i in range(self.channels):
            v = self._values[i]
            parts.append(struct.pack("<ddI", self._k0[i] * self.spacing,
                                     self.spacing, v.size))
            parts.append(v.astype("<f8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob):
        try:
            (channels,) = struct.unpack_from("<I", blob, 0)
            pos = 4
            origins, values = [], []
            spacing = None
            for _ in range(channels):
                origin, sp, count = struct.unpack_from("<ddI", blob, pos)
                pos += 20
                vals = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).copy()
                pos += 8 * count
                origins.append(origin)
                values.append(vals)
                spacing = sp
        except (struct.error, ValueError) as exc:
            raise DataFormatError("corrupt density block") from exc
        model = cls(channels, spacing)
        model.initialized = True
        model._k0 = np.array([int(round(o / spacing)) for o in origins],
                             dtype=np.int64)
        model._values = values
        return model


def density_update(model, samples, rate):
    return model.update(samples, rate)


def density_eval(model, t, channel):
    return model.eval(t, channel)


def pmf_at_integers(model, channel):
    return model.pmf_at_integers(channel)


def rate_proxy_bits(model, ytilde):
    """Total code length proxy in bits plus its gradient.

    ``ytilde`` is one noisy code vector or a stack of them; the proxy is
    the summed negative log density under the factorized channel model.
    """
    ytilde = np.asarray(ytilde, dtype=np.float64)
    squeeze = ytilde.ndim == 1
    ym = np.atleast_2d(ytilde)
    p, slope = model.eval_batch(ym)
    bits = float(-np.log2(p).sum())
    grad = -slope / (p * LN2)
    return bits, (grad[0] if squeeze else grad)


def discrete_entropy(q):
    """Empirical per-channel entropy of quantization indices, in bits/pixel.

    ``q`` has one row per block and one column per channel; a block of
    B x B pixels emits B^2 indices, so the per-pixel rate is the summed
    channel entropy divided by the channel count.
    """
    q = np.atleast_2d(np.asarray(q))
    if q.size == 0:
        raise ValueError("empty index ensemble")
    n, channels = q.shape
    total = 0.0
    for i in range(channels):
        _, counts = np.unique(q[:, i], return_counts=True)
        p = counts / n
        total += float(-(p * np.log2(p)).sum())
    return total / channels
