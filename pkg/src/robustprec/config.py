"""System-level dimensions, powers and noise levels.

A SystemConfig describes one downlink scenario: array size, user antenna
counts, stream counts, slot structure and the power/noise bookkeeping that
every solver and experiment shares.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ConfigError

__all__ = ["SystemConfig", "noise_from_snr", "at_noise"]


def _as_tuple(x, n, name, cast=float):
    if x is None:
        return None
    try:
        vals = tuple(cast(v) for v in x)
    except TypeError:
        # scalar broadcast over users
        vals = tuple(cast(x) for _ in range(n))
    if len(vals) != n:
        raise ConfigError(f"{name} must have one entry per user ({n}), got {len(vals)}")
    return vals


@dataclass(frozen=True)
class SystemConfig:
    """Scenario description.

    m_t: transmit antennas (= transmit beams).
    m_k: receive antennas per user; the user count is len(m_k).
    d_k: streams per user, defaults to m_k.
    n_b: blocks per slot; block 1 carries the uplink pilots.
    block_len: pilot symbols per block, defaults to sum(m_k).
    p_total: downlink sum power budget.
    weights: per-user rate weights, default all ones.
    sigma2_z: downlink noise variance per receive antenna.
    sigma2_bs: uplink noise variance; None means "track sigma2_z".
    snr_db: sweep points, with SNR = p_total / sigma2_z.
    """

    m_t: int
    m_k: tuple
    d_k: tuple = None
    n_b: int = 7
    block_len: int = None
    p_total: float = 1.0
    weights: tuple = None
    sigma2_z: float = 1.0
    sigma2_bs: float = None
    snr_db: tuple = ()
    seed: int = 0

    def __post_init__(self):
        ok = lambda name, val: object.__setattr__(self, name, val)
        if int(self.m_t) < 1:
            raise ConfigError("m_t must be a positive integer")
        ok("m_t", int(self.m_t))
        m_k = tuple(int(m) for m in self.m_k)
        if not m_k or any(m < 1 for m in m_k):
            raise ConfigError("m_k must be a non-empty list of positive integers")
        ok("m_k", m_k)
        n = len(m_k)
        d_k = self.d_k if self.d_k is not None else m_k
        d_k = tuple(int(d) for d in (d_k if hasattr(d_k, "__len__") else [d_k] * n))
        if len(d_k) != n:
            raise ConfigError(f"d_k must have one entry per user ({n})")
        for d, m in zip(d_k, m_k):
            if not 1 <= d <= min(m, self.m_t):
                raise ConfigError(f"d_k entries must satisfy 1 <= d <= min(m_k, m_t); got {d}")
        ok("d_k", d_k)
        if int(self.n_b) < 1:
            raise ConfigError("n_b must be >= 1")
        ok("n_b", int(self.n_b))
        block_len = sum(m_k) if self.block_len is None else int(self.block_len)
        if block_len < sum(m_k):
            raise ConfigError("pilot capacity exceeded: block_len must be "
                              ">= sum(m_k) for orthogonal pilots")
        ok("block_len", block_len)
        if not float(self.p_total) > 0:
            raise ConfigError("p_total must be > 0")
        ok("p_total", float(self.p_total))
        w = _as_tuple(self.weights if self.weights is not None else 1.0, n, "weights")
        if any(v < 0 for v in w):
            raise ConfigError("weights must be nonnegative")
        ok("weights", w)
        if not float(self.sigma2_z) > 0:
            raise ConfigError("sigma2_z must be > 0")
        ok("sigma2_z", float(self.sigma2_z))
        if self.sigma2_bs is not None:
            if float(self.sigma2_bs) < 0:
                raise ConfigError("sigma2_bs must be >= 0")
            ok("sigma2_bs", float(self.sigma2_bs))
        ok("snr_db", tuple(float(s) for s in self.snr_db))
        if int(self.seed) < 0:
            raise ConfigError("seed must be a nonnegative integer")
        ok("seed", int(self.seed))

    @property
    def n_users(self):
        return len(self.m_k)

    @property
    def uplink_noise(self):
        """Uplink pilot noise variance; follows sigma2_z unless pinned."""
        return self.sigma2_z if self.sigma2_bs is None else self.sigma2_bs


def noise_from_snr(snr_db, p_total=1.0):
    """Noise variance for a given SNR point, SNR = p_total / sigma2_z."""
    return p_total * 10.0 ** (-float(snr_db) / 10.0)


def at_noise(cfg, sigma2_z):
    """Copy of cfg with the downlink noise replaced."""
    return dataclasses.replace(cfg, sigma2_z=float(sigma2_z))
