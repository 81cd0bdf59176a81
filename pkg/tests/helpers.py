"""Shared builders for the test suite."""
import math

import numpy as np

from robustprec.channel import (
    BeamProfile,
    crandn,
    dft_matrix,
    draw_slot,
    generate_synthetic_stats,
    orthogonal_pilots,
    uplink_observation,
)
from robustprec.config import SystemConfig
from robustprec.posterior import build_posterior


def j0_series(x, terms=60):
    """Independent Bessel J0 oracle: power series sum (-x^2/4)^k / (k!)^2."""
    total, term = 0.0, 1.0
    for k in range(terms):
        total += term
        term *= -(x * x) / 4.0 / ((k + 1) * (k + 1))
    return total


def rand_hermitian_psd(rng, m, scale=1.0):
    a = crandn(rng, m, m)
    return scale * (a @ a.conj().T) / m


def rand_hermitian(rng, m):
    a = crandn(rng, m, m)
    return 0.5 * (a + a.conj().T)


def relerr(got, want):
    denom = max(np.linalg.norm(want), 1e-300)
    return np.linalg.norm(np.asarray(got) - np.asarray(want)) / denom


def small_cfg(m_t=8, m_k=(2, 2), d_k=None, n_b=3, sigma2_z=0.1, p_total=1.0, seed=0):
    return SystemConfig(m_t=m_t, m_k=m_k, d_k=d_k, n_b=n_b, sigma2_z=sigma2_z,
                        p_total=p_total, seed=seed)


def make_instance(cfg, rng, alphas=0.9, band_width=None, lognorm_sigma=0.4, decay=0.0):
    """Stats + true slot + pilots + posterior for one random scenario."""
    if band_width is None:
        band_width = max(2, cfg.m_t // 2)
    profile = BeamProfile(band_width=band_width, lognorm_sigma=lognorm_sigma,
                          decay=decay, alphas=alphas)
    stats = generate_synthetic_stats(cfg, profile, rng)
    v = dft_matrix(cfg.m_t)
    slot = draw_slot(stats, v, cfg.n_b, rng)
    pilots = orthogonal_pilots(cfg.m_k, cfg.block_len)
    y = uplink_observation([blocks[0] for blocks in slot], pilots, cfg.uplink_noise, rng)
    post = build_posterior(y, pilots, stats, v, cfg.uplink_noise, cfg.n_b)
    return stats, v, slot, pilots, post


def random_precoder_set(rng, m_t, d_list, p_total):
    ps = [crandn(rng, m_t, d) for d in d_list]
    scale = math.sqrt(p_total / sum(np.sum(np.abs(p) ** 2) for p in ps))
    return [scale * p for p in ps]
