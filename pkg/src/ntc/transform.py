"""Block transforms: orthonormal DCT, linear filter banks, and divisive
normalization with its one-step approximate inverse.

The analysis side computes ``v = H x`` followed by
``y_i = v_i / (beta_i + sum_j gamma_ij |v_j|^alpha_ij)^epsilon_i``; the
synthesis side multiplies by the matching activity term and applies a
second filter bank. Both directions come with exact vector-Jacobian
products for inputs and parameters.
"""

import dataclasses

import numpy as np

from . import _kernels
from .errors import NumericError

# |v|^alpha gradients involve log|v|; values below this are treated as zero
LOG_FLOOR = 1e-12


@dataclasses.dataclass
class AnalysisParams:
    filters: np.ndarray   # (C, C) filter bank, rows applied to block pixels
    beta: np.ndarray      # (C,) positive stabilizers
    gamma: np.ndarray     # (C, C) nonnegative coupling weights
    alpha: np.ndarray     # (C, C) activity exponents >= 1
    epsilon: np.ndarray   # (C,) denominator exponents in (0, 1]

    def validate(self):
        if not np.all(np.isfinite(self.filters)):
            raise ValueError("non-finite filter bank")
        if np.any(self.beta <= 0):
            raise ValueError("beta must be positive")
        if np.any(self.gamma < 0):
            raise ValueError("gamma must be nonnegative")
        if np.any(self.alpha < 1):
            raise ValueError("alpha must be >= 1")
        if np.any(self.epsilon <= 0) or np.any(self.epsilon > 1):
            raise ValueError("epsilon must lie in (0, 1]")

    def copy(self):
        return dataclasses.replace(self, **{
            f.name: getattr(self, f.name).copy() for f in dataclasses.fields(self)})


@dataclasses.dataclass
class SynthesisParams(AnalysisParams):
    """Same parameter shapes and constraints; an independently learned set."""


def make_dct_basis(block):
    """Orthonormal 2-D DCT-II basis as a (B^2, B^2) matrix (rows = basis)."""
    if block < 1:
        raise ValueError("block size must be >= 1")
    n = np.arange(block)
    t = np.cos(np.pi * (2 * n[None, :] + 1) * n[:, None] / (2 * block))
    t *= np.sqrt(2.0 / block)
    t[0] = np.sqrt(1.0 / block)
    return np.kron(t, t)


def init_params(kind, block, rng, gamma_init=1e-3):
    """Random orthonormal filter banks plus neutral normalization parameters.

    ``kind`` is ``"linear"`` (coupling frozen at zero, pure filter pair) or
    ``"gdn"``. The synthesis bank starts at the exact inverse of the
    analysis bank.
    """
    if kind not in ("linear", "gdn"):
        raise ValueError(f"unknown transform kind {kind!r}")
    c = block * block
    h = _random_orthonormal(c, rng)
    gval = 0.0 if kind == "linear" else gamma_init
    mk = lambda filters: dict(
        filters=filters,
        beta=np.ones(c),
        gamma=np.full((c, c), gval),
        alpha=np.full((c, c), 2.0),
        epsilon=np.full(c, 0.5),
    )
    return AnalysisParams(**mk(h)), SynthesisParams(**mk(h.T.copy()))


def _random_orthonormal(n, rng):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))  # fix the sign convention for determinism


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        bad = int(np.argmax(~np.isfinite(arr.ravel())))
        raise NumericError(f"non-finite {what} at flat index {bad}")


def _activity(u, gamma, alpha):
    # sum_j gamma[i,j] * u[:,j]**alpha[i,j]; BLAS shortcut for uniform alpha=2
    if alpha.flat[0] == 2.0 and np.all(alpha == 2.0):
        return (u * u) @ gamma.T
    return _kernels.power_pool_fwd(u, gamma, alpha)


def _activity_vjp(u, gamma, alpha, abar, want_exponents):
    if not want_exponents and alpha.flat[0] == 2.0 and np.all(alpha == 2.0):
        gamma_bar = abar.T @ (u * u)
        u_bar = 2.0 * u * (abar @ gamma)
        return gamma_bar, u_bar, None
    gamma_bar, u_bar, alpha_bar = _kernels.power_pool_bwd(
        u, gamma, alpha, abar, want_exponents)
    return gamma_bar, u_bar, (alpha_bar if want_exponents else None)


@dataclasses.dataclass
class _AnalyzeCache:
    params: AnalysisParams
    x: np.ndarray
    v: np.ndarray
    activity: np.ndarray  # beta + coupled |v|^alpha, pre-exponentiation
    scale: np.ndarray     # activity ** epsilon
    y: np.ndarray
    squeeze: bool


def gdn_analyze(x, params):
    """Filter and divisively normalize a block (or a stack of blocks)."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    xm = np.atleast_2d(x)
    v = xm @ params.filters.T
    u = np.abs(v)
    activity = params.beta[None, :] + _activity(u, params.gamma, params.alpha)
    scale = activity ** params.epsilon[None, :]
    y = v / scale
    _check_finite(y, "normalized code")
    cache = _AnalyzeCache(params, xm, v, activity, scale, y, squeeze)
    return (y[0] if squeeze else y), cache


def gdn_analyze_vjp(cache, ybar, want_exponents=False):
    """Backpropagate a code cotangent to the input and parameters.

    Returns ``(xbar, grads)`` where ``grads`` maps parameter field names to
    arrays; exponent gradients are included only when requested.
    """
    p = cache.params
    ybar = np.atleast_2d(np.asarray(ybar, dtype=np.float64))
    # y = v * activity**(-eps):  d activity picks up -eps * y / activity
    abar = -p.epsilon[None, :] * ybar * cache.y / cache.activity
    vbar = ybar / cache.scale
    u = np.abs(cache.v)
    gamma_bar, u_bar, alpha_bar = _activity_vjp(
        u, p.gamma, p.alpha, abar, want_exponents)
    vbar = vbar + u_bar * np.sign(cache.v)
    grads = {
        "filters": vbar.T @ cache.x,
        "beta": abar.sum(axis=0),
        "gamma": gamma_bar,
    }
    if want_exponents:
        grads["alpha"] = alpha_bar
        grads["epsilon"] = -(ybar * cache.y * np.log(cache.activity)).sum(axis=0)
    xbar = vbar @ p.filters
    return (xbar[0] if cache.squeeze else xbar), grads


@dataclasses.dataclass
class _SynthCache:
    params: SynthesisParams
    yhat: np.ndarray
    activity: np.ndarray
    scale: np.ndarray
    w: np.ndarray
    squeeze: bool


def gdn_synthesize(yhat, params):
    """One-step approximate inversion: re-amplify, then filter back."""
    yhat = np.asarray(yhat, dtype=np.float64)
    squeeze = yhat.ndim == 1
    ym = np.atleast_2d(yhat)
    u = np.abs(ym)
    activity = params.beta[None, :] + _activity(u, params.gamma, params.alpha)
    scale = activity ** params.epsilon[None, :]
    w = ym * scale
    xhat = w @ params.filters.T
    _check_finite(xhat, "reconstruction")
    cache = _SynthCache(params, ym, activity, scale, w, squeeze)
    return (xhat[0] if squeeze else xhat), cache


def gdn_synthesize_vjp(cache, xhat_bar, want_exponents=False):
    """Backpropagate a reconstruction cotangent to the code and parameters."""
    p = cache.params
    xhat_bar = np.atleast_2d(np.asarray(xhat_bar, dtype=np.float64))
    wbar = xhat_bar @ p.filters
    # w = yhat * activity**eps:  d activity picks up eps * w / activity
    abar = p.epsilon[None, :] * wbar * cache.w / cache.activity
    ybar = wbar * cache.scale
    u = np.abs(cache.yhat)
    gamma_bar, u_bar, alpha_bar = _activity_vjp(
        u, p.gamma, p.alpha, abar, want_exponents)
    ybar = ybar + u_bar * np.sign(cache.yhat)
    grads = {
        "filters": xhat_bar.T @ cache.w,
        "beta": abar.sum(axis=0),
        "gamma": gamma_bar,
    }
    if want_exponents:
        grads["alpha"] = alpha_bar
        grads["epsilon"] = (wbar * cache.w * np.log(cache.activity)).sum(axis=0)
    return (ybar[0] if cache.squeeze else ybar), grads
