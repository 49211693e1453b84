"""Trial engine: drives transmit -> channel -> detect chains and accumulates
BER / outage / rate statistics with confidence intervals, for the SSK-NOMA
scheme and a conventional single-antenna NOMA baseline.

Determinism: every block of trials draws from a counter-based stream keyed by
(seed, metric, SNR point, block index), and the stopping rule is evaluated on
fixed-size rounds of blocks, so results are identical for any worker count.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import analytics
from .channel import FadingProfile, complex_normal, default_profile, rng_stream
from .constellation import (
    PowerAllocation,
    ScAlphabet,
    enumerate_sc_alphabet,
    make_constellation,
)
from .errors import ConfigError
from .analytics import OutageTargets

SSK_NOMA = "ssk-noma"
NOMA_BASELINE = "noma-baseline"

# §IV defaults keyed by the number of power-multiplexed users.
DEFAULT_PA = {
    2: (0.8, 0.2),
    3: (0.7, 0.2, 0.1),
    4: (0.6, 0.25, 0.1, 0.05),
    5: (0.4, 0.25, 0.2, 0.1, 0.05),
}

_METRIC_CODE = {"ber": 1, "outage": 2, "rate": 3}


def default_pa(n_noma_users: int) -> PowerAllocation:
    try:
        return PowerAllocation(DEFAULT_PA[n_noma_users])
    except KeyError:
        raise ConfigError(
            f"no default power allocation for {n_noma_users} NOMA users"
        ) from None


@dataclass(frozen=True)
class SimConfig:
    """Full experiment description.

    ``modulations`` covers the power-multiplexed users: users 2..L for
    SSK-NOMA, users 1..L for the baseline (whose ``pa`` likewise spans all L
    users and whose ``n_t`` must be 1).
    """

    scheme: str
    n_users: int
    n_t: int
    n_r: int
    modulations: tuple
    pa: PowerAllocation
    fading: FadingProfile
    snr_grid_db: tuple
    seed: int
    target_rates: OutageTargets | None = None
    min_bit_errors: int = 400
    max_trials: int = 1_000_000
    genie_antenna: bool = True
    noise: bool = True
    block_size: int = 25_000
    blocks_per_round: int = 4

    def __post_init__(self):
        if self.scheme not in (SSK_NOMA, NOMA_BASELINE):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        n_power_users = self.n_users - 1 if self.scheme == SSK_NOMA else self.n_users
        if len(self.modulations) != n_power_users:
            raise ConfigError(
                f"expected {n_power_users} modulation orders, got {len(self.modulations)}"
            )
        if self.pa.n_users != n_power_users:
            raise ConfigError("power allocation length does not match the scheme")
        if self.fading.n_users != self.n_users:
            raise ConfigError("fading profile must cover all users")
        if not self.snr_grid_db:
            raise ConfigError("SNR grid must not be empty")
        if self.scheme == SSK_NOMA and (self.n_t < 2 or self.n_t & (self.n_t - 1)):
            raise ConfigError("SSK-NOMA needs a power-of-2 antenna count >= 2")
        if self.scheme == NOMA_BASELINE and self.n_t != 1:
            raise ConfigError("the baseline uses a single transmit antenna")
        if self.min_bit_errors < 100:
            raise ConfigError("min_bit_errors must be >= 100")
        if self.max_trials < 10_000:
            raise ConfigError("max_trials must be >= 1e4")

    def constellations(self):
        return [make_constellation(m) for m in self.modulations]

    def sc_alphabet(self) -> ScAlphabet:
        return enumerate_sc_alphabet(self.constellations(), self.pa)

    def canonical_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "n_users": self.n_users,
            "n_t": self.n_t,
            "n_r": self.n_r,
            "modulations": list(self.modulations),
            "pa": list(self.pa.coefficients),
            "fading": list(self.fading.variances),
            "snr_grid_db": list(map(float, self.snr_grid_db)),
            "seed": self.seed,
            "target_rates": list(self.target_rates.rates) if self.target_rates else None,
            "min_bit_errors": self.min_bit_errors,
            "max_trials": self.max_trials,
            "genie_antenna": self.genie_antenna,
            "noise": self.noise,
        }

    def config_hash(self) -> str:
        payload = json.dumps(self.canonical_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


def make_config(scheme: str, n_users: int, n_r: int, snr_grid_db, seed: int,
                n_t: int | None = None, modulations=None, pa=None, fading=None,
                target_rates=None, **kwargs) -> SimConfig:
    """SimConfig with the §IV defaults filled in: QPSK users, geometric fading
    profile, fixed PA set for the NOMA user count, N_t = N_r for SSK-NOMA."""
    n_power = n_users - 1 if scheme == SSK_NOMA else n_users
    if modulations is None:
        modulations = (4,) * n_power
    if pa is None:
        pa = default_pa(n_power)
    elif not isinstance(pa, PowerAllocation):
        pa = PowerAllocation(tuple(pa))
    if fading is None:
        fading = default_profile(n_users)
    elif not isinstance(fading, FadingProfile):
        fading = FadingProfile(tuple(fading))
    if n_t is None:
        n_t = n_r if scheme == SSK_NOMA else 1
    if target_rates is not None and not isinstance(target_rates, OutageTargets):
        target_rates = OutageTargets(tuple(target_rates))
    return SimConfig(scheme, n_users, n_t, n_r, tuple(modulations), pa, fading,
                     tuple(snr_grid_db), seed, target_rates, **kwargs)


@dataclass(frozen=True)
class PointEstimate:
    metric: str
    user: int  # 0 denotes the sum over users (rate metric only)
    snr_db: float
    value: float
    ci_halfwidth: float
    n_trials: int
    n_events: int
    analytic: float | None = None


@dataclass(frozen=True)
class SweepResult:
    config_hash: str
    points: tuple


def wilson_halfwidth(k: int, n: int, z: float = 1.959963984540054) -> float:
    if n == 0:
        return 0.0
    p = k / n
    denom = 1.0 + z * z / n
    return z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom


def _n_workers() -> int:
    return max(1, int(os.environ.get("SSKNOMA_WORKERS", "1")))


def _snr_key(snr_db: float) -> int:
    return int(round(snr_db * 100.0)) & 0xFFFFFFFF


# ---------------------------------------------------------------------------
# Vectorized per-block simulation
# ---------------------------------------------------------------------------


def _bit_tables(consts):
    return [c.bit_distance_table() for c in consts]


def _antenna_bit_table(n_t: int) -> np.ndarray:
    idx = np.arange(n_t)
    return np.array([[bin(a ^ b).count("1") for b in idx] for a in idx])


def _ml_detect_block(resid, h, h_norm, amp, points):
    """Vectorized argmin_n ||resid - amp*h*s_n||^2 per trial (constant term
    dropped); first minimum keeps the lexicographic tie-break."""
    inner = np.sum(resid * np.conj(h), axis=1)
    metrics = (-2.0 * amp * np.real(np.outer(inner, np.conj(points)))
               + amp * amp * np.outer(h_norm, np.abs(points) ** 2))
    return np.argmin(metrics, axis=1)


def _sm_detect_block(r, h_full, sqrt_p, chi_values):
    """Vectorized joint (antenna, composite symbol) search."""
    inner = np.einsum("btr,br->bt", np.conj(h_full), r)
    h_norm = np.sum(np.abs(h_full) ** 2, axis=2)
    metrics = (
        -2.0 * sqrt_p * np.real(inner[:, :, None] * np.conj(chi_values)[None, None, :])
        + sqrt_p * sqrt_p * h_norm[:, :, None] * (np.abs(chi_values) ** 2)[None, None, :]
    )
    m_t = chi_values.size
    flat = metrics.reshape(metrics.shape[0], -1).argmin(axis=1)
    return flat // m_t, flat % m_t


def _ber_block(cfg: SimConfig, snr_db: float, block: int):
    """Simulate one block of trials; returns (bit_errors, bits) per user."""
    rng = rng_stream(cfg.seed, _METRIC_CODE["ber"], _snr_key(snr_db), block)
    b = cfg.block_size
    rho = 10.0 ** (snr_db / 10.0)
    sqrt_p = np.sqrt(rho)
    consts = cfg.constellations()
    points = [c.points for c in consts]
    tables = _bit_tables(consts)
    coeffs = cfg.pa.coefficients
    variances = cfg.fading.variances
    errors = np.zeros(cfg.n_users)
    bits = np.zeros(cfg.n_users)

    if cfg.scheme == SSK_NOMA:
        n_t = cfg.n_t
        chi_values = cfg.sc_alphabet().values
        v = rng.integers(0, n_t, b)
        ks = [rng.integers(0, c.order, b) for c in consts]
        chi = sum(np.sqrt(a) * pts[k] for a, pts, k in zip(coeffs, points, ks))

        # cell-edge user: joint antenna/symbol search over the full matrix
        h1 = complex_normal(rng, (b, n_t, cfg.n_r), variances[0])
        r1 = sqrt_p * h1[np.arange(b), v, :] * chi[:, None]
        if cfg.noise:
            r1 = r1 + complex_normal(rng, (b, cfg.n_r), 1.0)
        v_hat, _ = _sm_detect_block(r1, h1, sqrt_p, chi_values)
        ant_table = _antenna_bit_table(n_t)
        errors[0] += ant_table[v, v_hat].sum()
        bits[0] += b * int(np.log2(n_t))

        for i in range(2, cfg.n_users + 1):
            var = variances[i - 1]
            if cfg.genie_antenna:
                h = complex_normal(rng, (b, cfg.n_r), var)
            else:
                h_full = complex_normal(rng, (b, n_t, cfg.n_r), var)
                h = h_full[np.arange(b), v, :]
            r = sqrt_p * h * chi[:, None]
            if cfg.noise:
                r = r + complex_normal(rng, (b, cfg.n_r), 1.0)
            if not cfg.genie_antenna:
                v_est, _ = _sm_detect_block(r, h_full, sqrt_p, chi_values)
                h = h_full[np.arange(b), v_est, :]
            h_norm = np.sum(np.abs(h) ** 2, axis=1)
            resid = r
            for m in range(2, i + 1):
                amp = np.sqrt(coeffs[m - 2] * rho)
                dec = _ml_detect_block(resid, h, h_norm, amp, points[m - 2])
                if m < i:
                    resid = resid - amp * points[m - 2][dec][:, None] * h
            errors[i - 1] += tables[i - 2][ks[i - 2], dec].sum()
            bits[i - 1] += b * consts[i - 2].bits_per_symbol
    else:
        ks = [rng.integers(0, c.order, b) for c in consts]
        chi = sum(np.sqrt(a) * pts[k] for a, pts, k in zip(coeffs, points, ks))
        for i in range(1, cfg.n_users + 1):
            var = variances[i - 1]
            h = complex_normal(rng, (b, cfg.n_r), var)
            r = sqrt_p * h * chi[:, None]
            if cfg.noise:
                r = r + complex_normal(rng, (b, cfg.n_r), 1.0)
            h_norm = np.sum(np.abs(h) ** 2, axis=1)
            resid = r
            for m in range(1, i + 1):
                amp = np.sqrt(coeffs[m - 1] * rho)
                dec = _ml_detect_block(resid, h, h_norm, amp, points[m - 1])
                if m < i:
                    resid = resid - amp * points[m - 1][dec][:, None] * h
            errors[i - 1] += tables[i - 1][ks[i - 1], dec].sum()
            bits[i - 1] += b * consts[i - 1].bits_per_symbol
    return errors, bits


def _gamma_block(cfg: SimConfig, metric: str, snr_db: float, block: int):
    """Per-user MRC output SNR draws for one block (rate/outage metrics)."""
    rng = rng_stream(cfg.seed, _METRIC_CODE[metric], _snr_key(snr_db), block)
    rho = 10.0 ** (snr_db / 10.0)
    gammas = []
    for var in cfg.fading.variances:
        h = complex_normal(rng, (cfg.block_size, cfg.n_r), var)
        gammas.append(rho * np.sum(np.abs(h) ** 2, axis=1))
    return gammas


def _outage_block(cfg: SimConfig, snr_db: float, block: int):
    gammas = _gamma_block(cfg, "outage", snr_db, block)
    targets = cfg.target_rates
    coeffs = cfg.pa.coefficients
    first = 2 if cfg.scheme == SSK_NOMA else 1
    events = np.zeros(cfg.n_users)
    if cfg.scheme == SSK_NOMA:
        # the cell-edge outage metric is the conditional error probability
        # averaged over the fading tail above the rate-derived limit, so it
        # reduces to the ABEP when the target rate saturates the antenna bits
        psi1 = 1.0 - targets.rate(1) / np.log2(cfg.n_t)
        bep = analytics.conditional_bep_u1_vec(gammas[0], cfg.sc_alphabet(), cfg.n_t)
        events[0] = float(np.sum(bep[gammas[0] >= psi1]))
    for i in range(first, cfg.n_users + 1):
        g = gammas[i - 1]
        phis = [targets.phi(m) for m in range(first, i + 1)]
        psi = analytics.outage_threshold_general(i, coeffs, phis, first)
        by_threshold = g < psi if np.isfinite(psi) else np.ones_like(g, dtype=bool)
        # independent route: check every SINR in the SIC cascade
        by_cascade = np.zeros_like(g, dtype=bool)
        for m in range(first, i + 1):
            k = m - first
            tail = sum(coeffs[k + 1:])
            sinr = coeffs[k] * g / (1.0 + tail * g)
            by_cascade |= sinr < phis[k]
        if not np.array_equal(by_threshold, by_cascade):
            raise RuntimeError(
                f"outage implementations disagree for user {i} at {snr_db} dB"
            )
        events[i - 1] = np.count_nonzero(by_threshold)
    return events, np.full(cfg.n_users, float(cfg.block_size))


def _rate_block(cfg: SimConfig, snr_db: float, block: int):
    """Returns (sum, sum of squares, count) of the per-draw rate per user
    plus the per-draw sum rate in the last slot."""
    gammas = _gamma_block(cfg, "rate", snr_db, block)
    coeffs = cfg.pa.coefficients
    first = 2 if cfg.scheme == SSK_NOMA else 1
    rates = []
    if cfg.scheme == SSK_NOMA:
        bep = analytics.conditional_bep_u1_vec(gammas[0], cfg.sc_alphabet(), cfg.n_t)
        rates.append(np.log2(cfg.n_t) * (1.0 - bep))
    for i in range(first, cfg.n_users + 1):
        g = gammas[i - 1]
        k = i - first
        with_own = sum(coeffs[k:])
        without = sum(coeffs[k + 1:])
        rates.append(np.log2(1.0 + with_own * g) - np.log2(1.0 + without * g))
    rates.append(sum(rates))
    stacked = np.array([(r.sum(), (r * r).sum()) for r in rates])
    return stacked[:, 0], stacked[:, 1], float(cfg.block_size)


_BLOCK_FN = {"ber": _ber_block, "outage": _outage_block, "rate": _rate_block}


def _worker(args):
    cfg, metric, snr_db, block = args
    return _BLOCK_FN[metric](cfg, snr_db, block)


def _run_rounds(cfg: SimConfig, metric: str, snr_db: float, stop_fn):
    """Run fixed-size rounds of blocks until ``stop_fn`` says to stop; block
    results merge in block order so worker count never changes the outcome."""
    workers = _n_workers()
    results = []
    block = 0
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        while True:
            idxs = list(range(block, block + cfg.blocks_per_round))
            args = [(cfg, metric, snr_db, j) for j in idxs]
            if pool is None:
                batch = [_worker(a) for a in args]
            else:
                batch = list(pool.map(_worker, args))
            results.extend(batch)
            block += cfg.blocks_per_round
            if stop_fn(results, block * cfg.block_size):
                return results
    finally:
        if pool is not None:
            pool.shutdown()


def run_ber_point(cfg: SimConfig, snr_db: float):
    """Per-user BER estimates at one SNR point with Wilson 95% intervals."""

    def stop(results, trials):
        errors = sum(r[0] for r in results)
        return trials >= cfg.max_trials or bool(np.all(errors >= cfg.min_bit_errors))

    results = _run_rounds(cfg, "ber", snr_db, stop)
    errors = sum(r[0] for r in results)
    bits = sum(r[1] for r in results)
    n_trials = len(results) * cfg.block_size
    return [
        PointEstimate("ber", u + 1, float(snr_db), float(errors[u] / bits[u]),
                      wilson_halfwidth(int(errors[u]), int(bits[u])),
                      n_trials, int(errors[u]))
        for u in range(cfg.n_users)
    ]


def run_outage_point(cfg: SimConfig, snr_db: float):
    """Per-user outage frequencies; both the SNR-threshold and the SINR
    cascade definitions are evaluated and must agree on every draw."""
    if cfg.target_rates is None:
        raise ConfigError("outage simulation requires target rates")

    def stop(results, trials):
        return trials >= cfg.max_trials

    results = _run_rounds(cfg, "outage", snr_db, stop)
    events = sum(r[0] for r in results)
    draws = sum(r[1] for r in results)
    return [
        PointEstimate("outage", u + 1, float(snr_db), float(events[u] / draws[u]),
                      wilson_halfwidth(int(events[u]), int(draws[u])),
                      int(draws[u]), int(events[u]))
        for u in range(cfg.n_users)
    ]


def run_rate_point(cfg: SimConfig, snr_db: float):
    """Per-user ergodic rate estimates plus the sum rate (user index 0)."""

    def stop(results, trials):
        return trials >= cfg.max_trials

    results = _run_rounds(cfg, "rate", snr_db, stop)
    sums = sum(r[0] for r in results)
    sq_sums = sum(r[1] for r in results)
    n = sum(r[2] for r in results)
    out = []
    for slot in range(len(sums)):
        mean = sums[slot] / n
        var = max(0.0, sq_sums[slot] / n - mean * mean)
        hw = 1.959963984540054 * np.sqrt(var / n)
        user = 0 if slot == len(sums) - 1 else slot + 1
        out.append(PointEstimate("rate", user, float(snr_db), float(mean),
                                 float(hw), int(n), int(n)))
    return out


# ---------------------------------------------------------------------------
# Sweeps with analytic companions
# ---------------------------------------------------------------------------


def _analytic_ber(cfg: SimConfig, user: int, rho: float):
    if cfg.scheme != SSK_NOMA:
        return None
    sigma_sq = cfg.fading.variances[user - 1]
    if user == 1:
        return analytics.abep_u1(cfg.sc_alphabet(), cfg.n_t, cfg.n_r, rho,
                                 sigma_sq)
    a = cfg.pa.coefficients
    exact = cfg.n_users == 3 and cfg.modulations == (4, 4)
    if exact and user == 2:
        return analytics.abep_u2(a[0], a[1], rho * sigma_sq, cfg.n_r)
    if exact and user == 3:
        return analytics.abep_u3(a[0], a[1], rho * sigma_sq, cfg.n_r)
    return analytics.union_bound_ber(user, cfg.constellations(), cfg.pa, rho,
                                     sigma_sq, cfg.n_r).value


def _analytic_rate(cfg: SimConfig, user: int, rho: float):
    variances = cfg.fading.variances
    if cfg.scheme == SSK_NOMA:
        if user == 0:
            return sum(_analytic_rate(cfg, u, rho) for u in range(1, cfg.n_users + 1))
        if user == 1:
            abep = analytics.abep_u1(cfg.sc_alphabet(), cfg.n_t, cfg.n_r, rho,
                                     variances[0])
            return analytics.ergodic_capacity_u1(cfg.n_t, abep)
        return analytics.ergodic_capacity_noma_user(user, cfg.pa, rho,
                                                    variances[user - 1], cfg.n_r)
    if user == 0:
        return sum(_analytic_rate(cfg, u, rho) for u in range(1, cfg.n_users + 1))
    coeffs = cfg.pa.coefficients
    b_with = sum(coeffs[user - 1:])
    b_without = sum(coeffs[user:])
    return analytics.ergodic_capacity_fractions(b_with, b_without,
                                                rho * variances[user - 1], cfg.n_r)


def _analytic_outage(cfg: SimConfig, user: int, rho: float):
    targets = cfg.target_rates
    variances = cfg.fading.variances
    first = 2 if cfg.scheme == SSK_NOMA else 1
    if cfg.scheme == SSK_NOMA and user == 1:
        return analytics.outage_u1(targets, cfg.n_t, cfg.sc_alphabet(), cfg.n_r,
                                   rho, variances[0])
    phis = [targets.phi(m) for m in range(first, user + 1)]
    psi = analytics.outage_threshold_general(user, cfg.pa.coefficients, phis, first)
    if not np.isfinite(psi):
        return 1.0
    return float(analytics.chi2_cdf(psi, cfg.n_r, rho * variances[user - 1]))


_ANALYTIC_FN = {"ber": _analytic_ber, "rate": _analytic_rate, "outage": _analytic_outage}
_POINT_FN = {"ber": run_ber_point, "rate": run_rate_point, "outage": run_outage_point}


def run_sweep(cfg: SimConfig, metrics=("ber",)) -> SweepResult:
    """Evaluate the requested metrics over the whole SNR grid and attach the
    closed-form companion value wherever the configuration is covered."""
    for metric in metrics:
        if metric not in _POINT_FN:
            raise ConfigError(f"unknown metric {metric!r}")
        if metric == "outage" and cfg.target_rates is None:
            raise ConfigError("outage metric requires target rates")
    points = []
    for metric in metrics:
        for snr_db in cfg.snr_grid_db:
            rho = 10.0 ** (snr_db / 10.0)
            for est in _POINT_FN[metric](cfg, snr_db):
                try:
                    analytic = _ANALYTIC_FN[metric](cfg, est.user, rho)
                except ConfigError:
                    analytic = None
                points.append(replace(est, analytic=analytic))
    return SweepResult(cfg.config_hash(), tuple(points))
