"""Monte Carlo experiment harness.

One experiment draws user statistics once, then per slot: channel blocks,
an uplink pilot observation, the posterior, one precoder design per
requested algorithm, and posterior-sampled rate scores.  Scoring reuses the
same stream seed for every algorithm at a given (slot, block), so designs
are compared under common random numbers.  Seeds derive from the config
seed through SeedSequence spawn keys, never from global state, which makes
every run reproducible bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.random import SeedSequence, default_rng

from .baselines import robust_rzf, rzf, slnr, wmmse
from .beam_domain import beam_power_allocation, canonical_allocation
from .channel import (
    UserStatistics,
    dft_matrix,
    draw_slot,
    generate_synthetic_stats,
    orthogonal_pilots,
    uplink_observation,
)
from .config import at_noise, noise_from_snr
from .errors import ConfigError, NumericalError
from .mm_precoder import mm_full, mm_shared
from .operators import interference_covariance
from .posterior import build_posterior

ALGORITHMS = ("alg1", "alg2", "alg3", "rzf", "slnr", "wmmse", "robust-rzf")

# algorithms that place one stream per receive antenna
_FULL_RANK_ONLY = ("rzf", "slnr", "wmmse", "robust-rzf")


class MCRate(NamedTuple):
    total: float
    per_user: tuple
    stderr: float


@dataclass(frozen=True)
class RateRecord:
    algorithm: str
    slot: int
    block: int
    rate: float
    per_user: tuple
    stderr: float


@dataclass
class ExperimentResult:
    algorithms: tuple
    n_slots: int
    n_mc: int
    records: list = field(default_factory=list)
    failed_slots: list = field(default_factory=list)

    def mean_rate(self, algorithm, block=None):
        vals = [r.rate for r in self.records
                if r.algorithm == algorithm and (block is None or r.block == block)]
        if not vals:
            raise KeyError(f"no records for {algorithm!r} block {block!r}")
        return float(np.mean(vals))

    def table(self):
        """Rows (algorithm, block, mean_rate, n_slots) in a stable order."""
        keys = sorted({(r.algorithm, r.block) for r in self.records},
                      key=lambda ab: (self.algorithms.index(ab[0]), ab[1]))
        out = []
        for alg, block in keys:
            vals = [r.rate for r in self.records
                    if r.algorithm == alg and r.block == block]
            out.append((alg, block, float(np.mean(vals)), len(vals)))
        return out


def monte_carlo_rate(posterior, precoders, weights, sigma2_z, n, rng,
                     n_samples, batch=256):
    """Posterior-averaged weighted sum rate by sampling, in nats.

    Interference is treated as Gaussian noise with its posterior-expected
    covariance (the same matrix the deterministic evaluation uses), so only
    the desired channel is drawn: each user's rate averages
    logdet(R + (HP)(HP)^H) - logdet(R) over posterior samples of H.
    Draws are batched; matrices stay (batch, m_k, m_k).
    """
    per_user, variances = [], []
    n_samples = int(n_samples)
    for k in range(posterior.n_users):
        r = interference_covariance(posterior, precoders, k, n, sigma2_z)
        base = float(np.linalg.slogdet(r)[1])
        p = precoders[k]
        acc, acc_sq, left = 0.0, 0.0, n_samples
        while left > 0:
            b = min(batch, left)
            hp = posterior.sample(k, n, rng, size=b) @ p
            full = r + hp @ hp.conj().transpose(0, 2, 1)
            vals = np.linalg.slogdet(full)[1] - base
            acc += float(np.sum(vals))
            acc_sq += float(np.sum(vals * vals))
            left -= b
        mean = acc / n_samples
        per_user.append(mean)
        if n_samples > 1:
            variances.append(max(acc_sq / n_samples - mean * mean, 0.0)
                             * n_samples / (n_samples - 1))
        else:
            variances.append(0.0)
    total = float(np.dot(weights, per_user))
    # users are sampled independently, so weighted variances add
    stderr = float(np.sqrt(np.dot(np.square(weights), variances) / n_samples))
    return MCRate(total, tuple(per_user), stderr)


def _check_algorithms(algorithms, cfg):
    for a in algorithms:
        if a not in ALGORITHMS:
            raise ConfigError(
                f"unknown algorithm {a!r}; choose from {', '.join(ALGORITHMS)}")
        if a in _FULL_RANK_ONLY and tuple(cfg.d_k) != tuple(cfg.m_k):
            raise ConfigError(f"{a} requires d_k == m_k")


def _slot_designs(algorithms, cfg, blocks, design_post, design_stats,
                  mm_iters, load_scale=1.0):
    """Precoders per algorithm per data block for one slot."""
    first = [b[0] for b in blocks]
    designs = {}
    slot_wide = {}
    if "rzf" in algorithms:
        slot_wide["rzf"] = rzf(first, cfg.p_total, cfg.sigma2_z)
    if "slnr" in algorithms:
        slot_wide["slnr"] = slnr(first, cfg.p_total, cfg.sigma2_z)
    if "wmmse" in algorithms:
        slot_wide["wmmse"] = wmmse(first, cfg.p_total, cfg.sigma2_z,
                                   cfg.weights)[0]
    if "alg3" in algorithms:
        _, rep = beam_power_allocation(design_stats, cfg, iters=mm_iters)
        slot_wide["alg3"] = rep.precoders
    warm = {}
    for n in range(2, cfg.n_b + 1):
        for alg in algorithms:
            if alg in slot_wide:
                designs[(alg, n)] = slot_wide[alg]
            elif alg == "robust-rzf":
                designs[(alg, n)] = robust_rzf(design_post, n, cfg.p_total,
                                               cfg.sigma2_z,
                                               load_scale=load_scale)
            elif alg in ("alg1", "alg2"):
                runner = mm_full if alg == "alg1" else mm_shared
                init = warm.get(alg)
                if init is None:
                    init = canonical_allocation(design_stats, cfg).precoders
                rep = runner(design_post, cfg, n, init, iters=mm_iters)
                designs[(alg, n)] = rep.precoders
                warm[alg] = rep.precoders
    return designs


def experiment_statistics(cfg, profile=None, stats_list=None):
    """The user statistics an experiment runs on: explicit, or drawn once
    from the profile under the config seed."""
    if stats_list is not None:
        return stats_list
    if profile is None:
        raise ConfigError("either a beam profile or explicit statistics "
                          "are required")
    stats_rng = default_rng(SeedSequence([cfg.seed, 0]))
    return generate_synthetic_stats(cfg, profile, stats_rng)


def prepare_slot(cfg, stats_list, slot):
    """Channel blocks, pilot observation and posterior for one slot index,
    on the same seed stream the experiment harness uses."""
    v = dft_matrix(cfg.m_t)
    pilots = orthogonal_pilots(cfg.m_k, cfg.block_len)
    rng_ch = default_rng(SeedSequence([cfg.seed, 1, slot]))
    blocks = draw_slot(stats_list, v, cfg.n_b, rng_ch)
    y = uplink_observation([b[0] for b in blocks], pilots, cfg.uplink_noise,
                           rng_ch)
    posterior = build_posterior(y, pilots, stats_list, v, cfg.uplink_noise,
                                cfg.n_b)
    return blocks, y, posterior


def run_slot_experiment(cfg, profile=None, algorithms=("alg1",), n_slots=10,
                        n_mc=2000, mm_iters=30, stats_list=None,
                        assumed_alphas=None, mc_batch=256, load_scale=1.0):
    """Design and score precoders over independent slots.

    stats_list overrides the synthetic statistics draw; assumed_alphas (a
    scalar or per-user list) rebuilds the *design-side* posterior under a
    different aging coefficient while scoring stays under the true one.
    load_scale scales the error-covariance load of the robust-rzf design.
    Slots where a solver fails numerically are skipped and listed in
    failed_slots.
    """
    algorithms = tuple(algorithms)
    _check_algorithms(algorithms, cfg)
    if cfg.n_b < 2:
        raise ConfigError("experiments need n_b >= 2 (block 1 is pilots)")
    stats_list = experiment_statistics(cfg, profile, stats_list)
    if assumed_alphas is None:
        design_stats = stats_list
    else:
        try:
            alphas = [float(a) for a in assumed_alphas]
        except TypeError:
            alphas = [float(assumed_alphas)] * len(stats_list)
        if len(alphas) != len(stats_list):
            raise ConfigError("assumed_alphas must be scalar or one per user")
        design_stats = [UserStatistics.from_profile(s.u, np.asarray(s.omega), a)
                        for s, a in zip(stats_list, alphas)]
    v = dft_matrix(cfg.m_t)
    pilots = orthogonal_pilots(cfg.m_k, cfg.block_len)
    result = ExperimentResult(algorithms=algorithms, n_slots=n_slots,
                              n_mc=n_mc)
    for slot in range(n_slots):
        try:
            blocks, y, score_post = prepare_slot(cfg, stats_list, slot)
            if assumed_alphas is None:
                design_post = score_post
            else:
                # same received pilots, interpreted under the assumed aging
                design_post = build_posterior(y, pilots, design_stats, v,
                                              cfg.uplink_noise, cfg.n_b)
            designs = _slot_designs(algorithms, cfg, blocks, design_post,
                                    design_stats, mm_iters,
                                    load_scale=load_scale)
            for n in range(2, cfg.n_b + 1):
                for alg in algorithms:
                    rng_mc = default_rng(SeedSequence([cfg.seed, 2, slot, n]))
                    mc = monte_carlo_rate(score_post, designs[(alg, n)],
                                          cfg.weights, cfg.sigma2_z, n,
                                          rng_mc, n_mc, batch=mc_batch)
                    result.records.append(RateRecord(alg, slot, n, mc.total,
                                                     mc.per_user, mc.stderr))
        except NumericalError:
            result.failed_slots.append(slot)
    return result


def sweep_snr(cfg, profile=None, algorithms=("alg1",), snr_db=None, **kw):
    """run_slot_experiment at each SNR point; returns [(snr, result)].

    The noise follows SNR = p_total / sigma2_z; the uplink noise tracks it
    unless the config pins sigma2_bs.  Slot seeds repeat across points, so
    curves share channel realizations.
    """
    points = tuple(cfg.snr_db if snr_db is None else snr_db)
    if not points:
        raise ConfigError("no SNR points given (set snr_db)")
    out = []
    for snr in points:
        sub = at_noise(cfg, noise_from_snr(snr, cfg.p_total))
        out.append((float(snr),
                    run_slot_experiment(sub, profile, algorithms, **kw)))
    return out


def alpha_mismatch_study(cfg, profile=None, algorithms=("alg1",),
                         assumed_alphas=(1.0,), **kw):
    """Design under each assumed aging coefficient, score under the truth.

    Returns [(assumed_alpha, result)].  Statistics and slot channels repeat
    across points, so the only thing that moves is the design-side model.
    """
    values = tuple(float(a) for a in assumed_alphas)
    if not values:
        raise ConfigError("assumed_alphas must not be empty")
    out = []
    for a in values:
        out.append((a, run_slot_experiment(cfg, profile, algorithms,
                                           assumed_alphas=a, **kw)))
    return out
