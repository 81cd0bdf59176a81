"""Posterior channel model from one uplink pilot observation.

Conditioned on the block-1 pilots, each user's block-n channel is Gaussian:
a shrunk linear-MMSE mean plus a zero-mean remainder whose beam-domain
entries are independent with a known variance profile.  Estimation error and
aging both land in that remainder, so the per-entry variances satisfy an
exact conservation identity against the prior profile.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import crandn
from .errors import ConfigError
from .operators import OperatorKernel

__all__ = [
    "delta_profile",
    "xi2_profile",
    "mmse_estimate",
    "build_posterior",
    "zero_mean_posterior",
    "PosteriorModel",
]


def _safe_ratio(num, den):
    out = np.zeros_like(num, dtype=float)
    np.divide(num, den, out=out, where=den > 0)
    return out


def delta_profile(omega, sigma2_bs):
    """Per-entry MMSE shrink factors omega / (omega + sigma2_bs).

    Zero-power entries shrink to 0 even at sigma2_bs = 0 (0/0 -> 0 limit).
    """
    omega = np.asarray(omega, dtype=float)
    return _safe_ratio(omega, omega + sigma2_bs)


def xi2_profile(omega, alpha, sigma2_bs, n):
    """Posterior variance profile at block n >= 1.

    omega - alpha^(2(n-1)) * omega^2 / (omega + sigma2_bs), clamped at 0.
    Estimation noise and aging innovation both feed this term; at alpha = 1
    and sigma2_bs = 0 it vanishes identically.
    """
    if n < 1:
        raise ConfigError("block index n starts at 1")
    omega = np.asarray(omega, dtype=float)
    shrunk = float(alpha) ** (2 * (n - 1)) * _safe_ratio(omega * omega, omega + sigma2_bs)
    return np.maximum(omega - shrunk, 0.0)


def mmse_estimate(y, pilot, stats, v, sigma2_bs, n):
    """Linear-MMSE estimate of user k's block-n channel from the pilot rx Y.

    The block-1 estimate is formed beam-wise after despreading with the
    user's pilot, then shrunk by alpha^(n-1) for later blocks.
    """
    shrink = float(stats.alpha) ** (n - 1)
    despread = stats.u.conj().T @ pilot.conj() @ y.T @ v
    delta = delta_profile(stats.omega, sigma2_bs)
    return shrink * (stats.u @ (delta * despread) @ v.conj().T)


@dataclass
class PosteriorModel:
    """Gaussian posterior for all users and data blocks of one slot.

    mean1[k] is user k's block-1 MMSE estimate; the block-n mean is the
    alpha^(n-1)-shrunk copy and the block-n variance profile follows
    xi2_profile.  Data blocks are 2..n_blocks (block 1 carries the pilots),
    but means/variances are answerable for any n >= 1.
    """

    stats: list
    v: np.ndarray
    sigma2_bs: float
    n_blocks: int
    mean1: list
    _kernels: dict = field(default_factory=dict, repr=False)

    @property
    def n_users(self):
        return len(self.stats)

    @property
    def m_t(self):
        return self.v.shape[0]

    @property
    def data_blocks(self):
        return range(2, self.n_blocks + 1)

    def mean(self, k, n):
        """Posterior mean of user k's block-n channel."""
        return float(self.stats[k].alpha) ** (n - 1) * self.mean1[k]

    def var_profile(self, k, n):
        """Beam-domain variance profile of the zero-mean remainder."""
        s = self.stats[k]
        return xi2_profile(s.omega, s.alpha, self.sigma2_bs, n)

    def kernel(self, k, n):
        """Operator kernel of the block-n remainder (cached per (k, n))."""
        key = (k, n)
        kern = self._kernels.get(key)
        if kern is None:
            kern = OperatorKernel(self.stats[k].u, self.v, self.var_profile(k, n))
            self._kernels[key] = kern
        return kern

    def sample(self, k, n, rng, size=None):
        """Posterior draws of user k's block-n channel.

        size=None gives one m_k x m_t matrix, size=s a (s, m_k, m_t) batch.
        """
        s = self.stats[k]
        amp = np.sqrt(self.var_profile(k, n))
        mean = self.mean(k, n)
        if size is None:
            return mean + s.u @ (amp * crandn(rng, *amp.shape)) @ self.v.conj().T
        w = crandn(rng, size, *amp.shape)
        # batched matmul keeps this off the slow multi-operand einsum path
        return mean + s.u @ ((amp * w) @ self.v.conj().T)


def build_posterior(y, pilots, stats_list, v, sigma2_bs, n_blocks):
    """Assemble the posterior for one slot from the uplink observation."""
    if len(pilots) != len(stats_list):
        raise ConfigError("one pilot matrix per user is required")
    mean1 = [
        mmse_estimate(y, x, s, v, sigma2_bs, 1)
        for x, s in zip(pilots, stats_list)
    ]
    return PosteriorModel(list(stats_list), v, float(sigma2_bs), int(n_blocks), mean1)


def zero_mean_posterior(stats_list, v, n_blocks=2):
    """Posterior with no instantaneous CSI: zero means, full prior variance.

    Intended for data blocks n >= 2, where the variance profile equals the
    prior power profile exactly (aging coefficient forced to 0).
    """
    import dataclasses as _dc

    stats0 = [_dc.replace(s, alpha=0.0) for s in stats_list]
    mean1 = [np.zeros((s.m_k, s.m_t), dtype=complex) for s in stats0]
    return PosteriorModel(stats0, v, 0.0, int(n_blocks), mean1)
