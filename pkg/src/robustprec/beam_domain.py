"""Beam-domain power allocation for the zero-mean (statistics-only) regime.

When the posterior mean is zero, stationary precoders align with the
transmit basis up to a permutation, so the design collapses to allocating
power over ordered beams.  Every iterate quantity is then a vector indexed
by beam (transmit side) or receive dimension, the fixed point solves with
scalar arithmetic, and the power-constrained update inverts elementwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FixedPointError
from .mm_precoder import MMReport, mu_bisection

__all__ = [
    "beam_order",
    "BeamState",
    "beam_fixed_point",
    "beam_rate",
    "BeamAllocation",
    "canonical_allocation",
    "beam_surrogate_diagonals",
    "beam_power_allocation",
    "verify_beam_structure",
]


def beam_order(omega):
    """Beams sorted by total coupled power (column sums), strongest first.

    Ties break toward the lower beam index (stable sort).
    """
    totals = np.asarray(omega).sum(axis=0)
    return np.argsort(-totals, kind="stable")


@dataclass
class BeamState:
    """Diagonal fixed-point state for one user: all vectors, no matrices."""

    tx_gain: np.ndarray     # per transmit beam
    rx_gain: np.ndarray     # per receive dimension
    stream_mse: np.ndarray  # per transmit beam (1 off the active support)
    rx_mse: np.ndarray      # per receive dimension
    iterations: int
    residual: float


def _rel_change(new, old):
    scale = max(np.linalg.norm(new), 1e-300)
    return np.linalg.norm(new - old) / scale


def beam_fixed_point(omega, q_own, r, tol=1e-9, max_iter=500, init=None):
    """Solve the diagonal fixed point for one user.

    omega: coupling profile (m_k x m_t), q_own: own power per beam (m_t,),
    r: interference-plus-noise level per receive dimension (m_k,).
    """
    m_k, m_t = omega.shape
    if init is not None and init.rx_mse.shape == (m_k,):
        rx_mse = init.rx_mse.copy()
    else:
        rx_mse = np.ones(m_k)
    tx_gain = np.zeros(m_t)
    rx_gain = np.zeros(m_k)
    residual = math.inf
    for sweep in range(1, max_iter + 1):
        new_tx = omega.T @ (rx_mse / r)
        stream_mse = 1.0 / (1.0 + q_own * new_tx)
        new_rx = omega @ (q_own * stream_mse)
        new_rx_mse = 1.0 / (1.0 + new_rx / r)
        new_residual = max(_rel_change(new_tx, tx_gain), _rel_change(new_rx, rx_gain))
        if new_residual > residual:
            new_rx_mse = 0.5 * (new_rx_mse + rx_mse)
        tx_gain, rx_gain, rx_mse, residual = new_tx, new_rx, new_rx_mse, new_residual
        if residual <= tol:
            stream_mse = 1.0 / (1.0 + q_own * tx_gain)
            return BeamState(tx_gain, rx_gain, stream_mse, rx_mse, sweep, residual)
    raise FixedPointError(
        f"beam-domain fixed point stalled at residual {residual:.3e} "
        f"after {max_iter} sweeps")


def beam_rate(state, q_own, r):
    """Rate (nats) from a converged diagonal state."""
    val = (float(np.sum(np.log1p(q_own * state.tx_gain)))
           + float(np.sum(np.log1p(state.rx_gain / r)))
           - float(np.sum(state.rx_gain * state.rx_mse / r)))
    return max(val, 0.0)


@dataclass
class BeamAllocation:
    """Beam selections and per-beam amplitudes for every user."""

    v: np.ndarray
    orders: list
    gains: list

    def active_beams(self, k):
        return self.orders[k][: len(self.gains[k])]

    def beam_powers(self, k):
        """Own power per beam as a full-length vector."""
        q = np.zeros(self.v.shape[0])
        q[self.active_beams(k)] = np.abs(self.gains[k]) ** 2
        return q

    @property
    def precoders(self):
        return [self.v[:, self.active_beams(k)] * np.asarray(g)
                for k, g in enumerate(self.gains)]


def beam_surrogate_diagonals(omegas, weights, alloc, states, sigma2_z):
    """Per-beam surrogate vectors at the current allocation.

    Returns (signal list, leakage list, gap list, shared shaping):
    elementwise specializations of the shared-shaping update's matrices,
    with gap already weight-scaled (w * (leakage - self)) and the shared
    shaping the weight-summed leakage vector.
    """
    k_users = len(omegas)
    q_full = [alloc.beam_powers(k) for k in range(k_users)]
    q_sum = np.sum(q_full, axis=0)
    signal, leakage, gap = [], [], []
    for k in range(k_users):
        r = sigma2_z + omegas[k] @ (q_sum - q_full[k])
        lam_a = omegas[k].T @ (1.0 / r)
        gamma = states[k].tx_gain
        signal.append(lam_a)
        leakage.append(lam_a - gamma)
        own = gamma * gamma * q_full[k] / (1.0 + gamma * q_full[k])
        gap.append(-weights[k] * own)
    shared = sum(w * c for w, c in zip(weights, leakage))
    return signal, leakage, gap, shared


def canonical_allocation(stats_list, cfg):
    """Deterministic beam-aligned starting point: each user's d_k strongest
    beams at a flat gain spending the full budget."""
    from .channel import dft_matrix

    omegas = [np.asarray(s.omega, dtype=float) for s in stats_list]
    orders = [beam_order(om) for om in omegas]
    scale = math.sqrt(cfg.p_total / sum(cfg.d_k))
    return BeamAllocation(dft_matrix(omegas[0].shape[1]), orders,
                          [scale * np.ones(d) for d in cfg.d_k])


def beam_power_allocation(stats_list, cfg, iters=50, de_tol=1e-9, obj_tol=1e-8,
                          init=None, tol_power=1e-6):
    """Statistics-only precoder design: power allocation over ordered beams.

    Uses each user's coupling profile directly (posterior mean treated as
    zero), so one run serves every data block.  Returns the allocation and
    an MMReport whose precoders are the exported beam-aligned matrices.
    """
    from .channel import dft_matrix

    k_users = len(stats_list)
    omegas = [np.asarray(s.omega, dtype=float) for s in stats_list]
    m_t = omegas[0].shape[1]
    v = dft_matrix(m_t)
    weights = cfg.weights
    orders = [beam_order(om) for om in omegas]
    if init is None:
        scale = math.sqrt(cfg.p_total / sum(cfg.d_k))
        gains = [scale * np.ones(d) for d in cfg.d_k]
    else:
        gains = [np.asarray(g, dtype=float).copy() for g in init]
    alloc = BeamAllocation(v, orders, gains)

    objective, mu_trace, power_trace = [], [], []
    states = [None] * k_users
    converged = False
    updates = 0
    while True:
        q_full = [alloc.beam_powers(k) for k in range(k_users)]
        q_sum = np.sum(q_full, axis=0)
        rates = []
        for k in range(k_users):
            r = cfg.sigma2_z + omegas[k] @ (q_sum - q_full[k])
            states[k] = beam_fixed_point(omegas[k], q_full[k], r,
                                         tol=de_tol, init=states[k])
            rates.append(beam_rate(states[k], q_full[k], r))
        objective.append(float(sum(w * rk for w, rk in zip(weights, rates))))
        if len(objective) > 1 and abs(objective[-1] - objective[-2]) <= obj_tol * (1 + abs(objective[-1])):
            converged = True
            break
        if updates >= iters:
            break
        signal, leakage, gap, shared = beam_surrogate_diagonals(
            omegas, weights, alloc, states, cfg.sigma2_z)
        rhs, shapings = [], []
        for k in range(k_users):
            active = alloc.active_beams(k)
            num = (weights[k] * signal[k] + gap[k])[active] * alloc.gains[k]
            rhs.append(num[:, None])
            shapings.append(np.diag(shared[active]))
        mu, cols = mu_bisection(rhs, shapings, cfg.p_total,
                                tol_power=tol_power)
        alloc = BeamAllocation(v, orders, [np.abs(c[:, 0]) for c in cols])
        updates += 1
        mu_trace.append(mu)
        power_trace.append(sum(float(np.sum(g ** 2)) for g in alloc.gains))
    report = MMReport(alloc.precoders, objective, mu_trace, power_trace,
                      updates, converged)
    return alloc, report


def verify_beam_structure(precoders, v, tol=1e-10):
    """Check that every precoder column rides a single transmit beam.

    Returns (ok, worst) where worst is the largest off-beam share of any
    column's squared norm; zero columns pass.
    """
    worst = 0.0
    for p in precoders:
        x = v.conj().T @ p
        power = np.abs(x) ** 2
        norms = power.sum(axis=0)
        for j, nrm in enumerate(norms):
            if nrm <= 0:
                continue
            off = 1.0 - power[:, j].max() / nrm
            worst = max(worst, float(off))
    return worst <= tol, worst
