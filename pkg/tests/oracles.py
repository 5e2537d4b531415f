"""Naive reference implementations used as test oracles.

Everything here is written as plain loops over Python floats, independent of
the vectorised code under test.
"""
import math
from datetime import date

import numpy as np

from aggimpact.tape import SessionTape


def random_tape(rng, n, day=date(2016, 1, 4), tick=0.01, with_ntx=False, p_move=0.4,
                norm_factor=1.0, instrument="X"):
    sign = rng.choice([-1, 1], size=n)
    volume = np.round(rng.pareto(1.5, n) + 1.0, 3) * 100
    steps = rng.choice([-1, 0, 1], size=n, p=[p_move / 2, 1 - p_move, p_move / 2])
    ticks = 10000 + np.concatenate(([0], np.cumsum(steps)))
    mid = ticks * tick + tick / 2
    ts = 1451900000000 + np.cumsum(rng.integers(0, 3, n))
    n_tx = rng.integers(1, 4, n) if with_ntx else None
    return SessionTape(instrument, day, ts, sign, volume, mid, n_tx=n_tx,
                       norm_factor=norm_factor)


def naive_window_stats(tape, N, stride=1):
    n = len(tape)
    mids = [float(m) for m in tape.mid]
    signs = [int(s) for s in tape.sign]
    vols = [float(v) for v in tape.volume]
    ntx = [int(k) for k in tape.n_tx]
    out = []
    for t in range(0, n - N + 1, stride):
        Q = 0.0
        scale = 0.0
        E = T = changes = 0
        for i in range(t, t + N):
            term = signs[i] * vols[i] * tape.norm_factor
            Q += term
            scale += abs(term)
            E += signs[i]
            T += signs[i] * ntx[i]
            if mids[i + 1] != mids[i]:
                changes += 1
        r = math.log(mids[t + N]) - math.log(mids[t])
        out.append(dict(start=t, Q=Q, Q_scale=scale, E=E, T=T, r=r, change_fraction=changes / N))
    return out


def group_by_exact(keys, values):
    """Mean, count and standard error of ``values`` for each distinct key."""
    groups = {}
    for k, v in zip(keys, values):
        groups.setdefault(float(k), []).append(float(v))
    out = {}
    for k in sorted(groups):
        vs = groups[k]
        m = sum(vs) / len(vs)
        if len(vs) > 1:
            var = sum((v - m) ** 2 for v in vs) / (len(vs) - 1)
            se = math.sqrt(var) / math.sqrt(len(vs))
        else:
            se = float("nan")
        out[k] = (m, len(vs), se)
    return out


def naive_norm_factors(tapes):
    day_volumes = []
    for tape in tapes:
        total = 0.0
        for v in tape.volume:
            total += float(v)
        day_volumes.append(total)
    mean = sum(day_volumes) / len(day_volumes)
    return [mean / q for q in day_volumes]


def naive_block_mean_square(x, N):
    m = len(x) // N
    total = 0.0
    for b in range(m):
        s = 0.0
        for i in range(b * N, (b + 1) * N):
            s += x[i]
        total += s * s
    return total / m


def naive_eta(mids):
    moves = []
    for a, b in zip(mids[:-1], mids[1:]):
        if b > a:
            moves.append(1)
        elif b < a:
            moves.append(-1)
    same = sum(1 for a, b in zip(moves[:-1], moves[1:]) if a == b)
    alt = sum(1 for a, b in zip(moves[:-1], moves[1:]) if a != b)
    return same, alt


def rel_close(a, b, scale, tol=1e-12):
    return abs(a - b) <= tol * max(abs(scale), abs(a), abs(b), 1e-300)


def master_curves(rng, alpha=1.2, beta=1.3, xi=0.75, psi=0.5, Q1=2.0, R1=1e-4,
                  Ns=(16, 32, 64, 128, 256, 512, 1024, 2048, 4096), noise=0.01, n_bins=31):
    """Curves ``R_N F(Q/Q_N)`` sampled on a grid, with relative Gaussian noise."""
    from aggimpact.windows import ImpactCurve

    curves = {}
    u = np.linspace(-6.0, 6.0, n_bins)
    for N in Ns:
        QN, RN = Q1 * N**xi, R1 * N**psi
        x = u * QN
        ax = np.abs(u)
        clean = RN * u / (1.0 + ax**alpha) ** (beta / alpha)
        y = clean * (1.0 + noise * rng.standard_normal(n_bins))
        se = np.maximum(noise * np.abs(clean), 1e-3 * RN)
        curves[N] = ImpactCurve(N, "volume", np.r_[x, x[-1]], x, y, np.full(n_bins, 100), se,
                                imbalance_std=QN * 1.7, return_std=RN * 0.6)
    return curves
