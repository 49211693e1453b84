"""Detector tests against brute-force oracles, plus the receiver-complexity
operation counts."""

import numpy as np
import pytest

from ssknoma.channel import ReceivedVector, SnrConfig, complex_normal, rng_stream
from ssknoma.constellation import PowerAllocation, enumerate_sc_alphabet, qpsk
from ssknoma.detectors import (
    complexity_noma,
    complexity_report,
    complexity_ssk_noma,
    detect_noma_baseline,
    detect_sm,
    detect_u2,
    op_counts,
    sic_detect_chain,
)
from ssknoma.errors import InputError

PA3 = PowerAllocation((0.8, 0.2))
ALPHABET3 = enumerate_sc_alphabet([qpsk(), qpsk()], PA3)


def _brute_force_sm(r, h, alphabet, power):
    best = None
    for v in range(h.shape[0]):
        for k, chi in enumerate(alphabet.values):
            d = np.sum(np.abs(r - np.sqrt(power) * h[v] * chi) ** 2)
            if best is None or d < best[0] - 1e-12:
                best = (d, v + 1, k + 1)
    return best


@pytest.mark.parametrize("trial", range(20))
def test_detect_sm_matches_brute_force(trial):
    rng = rng_stream(100, trial)
    snr = SnrConfig(10.0)
    h = complex_normal(rng, (4, 2), 1.0)
    r = complex_normal(rng, 2, 3.0)
    dec = detect_sm(ReceivedVector(r, 1), h, ALPHABET3, snr)
    d, v, k = _brute_force_sm(r, h, ALPHABET3, snr.power)
    assert (dec.antenna_index, dec.sc_index) == (v, k)
    assert dec.metric == pytest.approx(d, rel=1e-10)


def test_detect_sm_noiseless_recovers_truth():
    rng = rng_stream(3, 0)
    snr = SnrConfig(25.0)
    h = complex_normal(rng, (2, 4), 1.0)
    for v in range(2):
        for k, chi in enumerate(ALPHABET3.values):
            r = np.sqrt(snr.power) * h[v] * chi
            dec = detect_sm(ReceivedVector(r, 1), h, ALPHABET3, snr)
            assert (dec.antenna_index, dec.sc_index) == (v + 1, k + 1)


def _brute_force_ml(r, h, amp, points):
    dists = [np.sum(np.abs(r - amp * h * s) ** 2) for s in points]
    return int(np.argmin(dists))


@pytest.mark.parametrize("trial", range(20))
def test_detect_u2_matches_brute_force(trial):
    rng = rng_stream(200, trial)
    snr = SnrConfig(5.0)
    h = complex_normal(rng, 2, 2.0)
    r = complex_normal(rng, 2, 4.0)
    got = detect_u2(ReceivedVector(r, 2), h, 0.8, snr, qpsk())
    want = _brute_force_ml(r, h, np.sqrt(0.8 * snr.power), qpsk().points)
    assert got == want


@pytest.mark.parametrize("trial", range(10))
def test_sic_chain_matches_stagewise_brute_force(trial):
    rng = rng_stream(300, trial)
    pa = PowerAllocation((0.7, 0.2, 0.1))
    snr = SnrConfig(12.0)
    consts = [qpsk()] * 3
    h = complex_normal(rng, 2, 4.0)
    r = complex_normal(rng, 2, 6.0)
    res = sic_detect_chain(ReceivedVector(r, 4), h, pa, snr, consts, target_user=4)
    resid = r.copy()
    for m, a in enumerate(pa.coefficients):
        amp = np.sqrt(a * snr.power)
        want = _brute_force_ml(resid, h, amp, consts[m].points)
        assert res.decisions[m] == want
        if m < 2:
            resid = resid - amp * h * consts[m].points[want]
            assert np.allclose(res.residuals[m], resid)


def test_sic_chain_residual_cancels_known_symbol():
    """With a forced correct first decision the residual is exactly the
    received vector minus the strongest user's contribution."""
    rng = rng_stream(301, 0)
    pa = PowerAllocation((0.8, 0.2))
    snr = SnrConfig(100.0)
    s2, s3 = qpsk().points[1], qpsk().points[2]
    h = complex_normal(rng, 2, 1.0)
    chi = np.sqrt(0.8) * s2 + np.sqrt(0.2) * s3
    r = np.sqrt(snr.power) * h * chi
    res = sic_detect_chain(ReceivedVector(r, 3), h, pa, snr, [qpsk(), qpsk()],
                           target_user=3, overrides={2: 1})
    want = np.sqrt(snr.power) * h * np.sqrt(0.2) * s3
    assert np.allclose(res.residuals[0], want, atol=1e-12)
    assert res.decisions == (1, 2)  # noiseless, so the own decision is exact


def test_sic_chain_override_propagates_errors():
    rng = rng_stream(302, 0)
    pa = PowerAllocation((0.8, 0.2))
    snr = SnrConfig(50.0)
    h = complex_normal(rng, 4, 1.0)
    chi = np.sqrt(0.8) * qpsk().points[0] + np.sqrt(0.2) * qpsk().points[0]
    r = np.sqrt(snr.power) * h * chi
    forced = sic_detect_chain(ReceivedVector(r, 3), h, pa, snr, [qpsk(), qpsk()],
                              target_user=3, overrides={2: 2})
    assert forced.decisions[0] == 2
    # the corrupted residual changes the own-stage geometry
    free = sic_detect_chain(ReceivedVector(r, 3), h, pa, snr, [qpsk(), qpsk()],
                            target_user=3)
    assert free.decisions[0] == 0


@pytest.mark.parametrize("trial", range(10))
def test_noma_baseline_matches_stagewise_brute_force(trial):
    rng = rng_stream(400, trial)
    pa_full = (0.6, 0.25, 0.15)
    snr = SnrConfig(8.0)
    consts = [qpsk()] * 3
    h = complex_normal(rng, 2, 1.0)
    r = complex_normal(rng, 2, 2.0)
    res = detect_noma_baseline(ReceivedVector(r, 3), h, pa_full, snr, consts,
                               target_user=3)
    resid = r.copy()
    for m, a in enumerate(pa_full):
        amp = np.sqrt(a * snr.power)
        want = _brute_force_ml(resid, h, amp, consts[m].points)
        assert res.decisions[m] == want
        if m < 2:
            resid = resid - amp * h * consts[m].points[want]


def test_target_user_bounds():
    rng = rng_stream(0, 0)
    h = complex_normal(rng, 2, 1.0)
    r = ReceivedVector(complex_normal(rng, 2, 1.0), 1)
    with pytest.raises(InputError):
        sic_detect_chain(r, h, PA3, SnrConfig(1.0), [qpsk()] * 2, target_user=5)
    with pytest.raises(InputError):
        detect_noma_baseline(r, h, (0.8, 0.2), SnrConfig(1.0), [qpsk()] * 2,
                             target_user=0)


# --- complexity accounting ---------------------------------------------------

REFERENCE_COUNTS = {
    (3, 2, 2): (72, 108),
    (3, 4, 4): (312, 408),
    (4, 2, 2): (140, 184),
    (4, 4, 4): (760, 688),
    (5, 2, 2): (240, 280),
    (5, 4, 4): (2000, 1040),
}


@pytest.mark.parametrize("key,want", sorted(REFERENCE_COUNTS.items()))
def test_published_operation_counts(key, want):
    n_users, m, n_r = key
    assert complexity_ssk_noma(n_users, m, m, n_r) == want[0]
    assert complexity_noma(n_users, m, n_r) == want[1]


def test_op_counts():
    assert op_counts(3) == (2, 1, 3, 3)
    assert op_counts(2) == (1, 0, 2, 1)
    with pytest.raises(InputError):
        op_counts(1)


def test_two_user_edge_has_no_sic_term():
    # one ML detection plus the joint search, nothing to cancel
    assert complexity_ssk_noma(2, 4, 2, 2) == (2 * 2 * 2 + 2 * 4 + 4) + 4 * 2 * 4


def test_mixed_modulation_orders():
    assert complexity_ssk_noma(3, [2, 4], 2, 2) == complexity_ssk_noma(
        3, [2, 4], 2, 2
    )
    with pytest.raises(InputError):
        complexity_ssk_noma(3, [4], 2, 2)
    with pytest.raises(InputError):
        complexity_noma(3, [4, 4], 2)


def test_complexity_report_fields():
    rep = complexity_report(4, 4, 4, 4)
    assert (rep.delta_ssk_noma, rep.delta_noma) == (760, 688)
    assert (rep.n_ml, rep.n_sic) == (3, 3)
