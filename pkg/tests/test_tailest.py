import math

import numpy as np
import pytest

from queuedecay.dist import (
    ConditionedBelow,
    Deterministic,
    Erlang,
    Exponential,
    FiniteMixture,
    UniformInterval,
    mgf,
    stream,
)
from queuedecay.ratecalc import QueueModel, Split, gamma_w, psi
from queuedecay.tailest import (
    DegenerateTailError,
    TiltUnavailableError,
    compare_rates,
    fit_decay,
    fits_agree,
    is_workload_tail,
    tilt_measure,
)

MM1 = QueueModel(Exponential(0.5), Exponential(1.0))


def _exp_samples(n, rate, seed=0):
    return stream(seed, 0).exponential(1.0 / rate, n)


def test_fit_recovers_exponential_rate():
    fit = fit_decay(_exp_samples(100_000, 2.0))
    assert abs(fit.rate - 2.0) / 2.0 <= 0.05
    assert fit.stderr > 0.0
    assert fit.window[0] < fit.window[1]
    assert fit.points_used >= 500


def test_fit_scale_equivariance():
    x = _exp_samples(100_000, 1.0, seed=3)
    base = fit_decay(x)
    scaled = fit_decay(4.0 * x)
    assert abs(scaled.rate - base.rate / 4.0) <= 1e-9 * base.rate


def test_fit_rejects_degenerate_tails():
    with pytest.raises(DegenerateTailError):
        fit_decay(np.full(10_000, 3.0))
    # too few distinct points in the window even though samples vary
    coarse = np.repeat(np.arange(100.0), 100)
    with pytest.raises(DegenerateTailError):
        fit_decay(coarse)


def test_fit_input_validation():
    with pytest.raises(ValueError):
        fit_decay(_exp_samples(4_999, 1.0))
    bad = _exp_samples(10_000, 1.0)
    bad[0] = -1.0
    with pytest.raises(ValueError):
        fit_decay(bad)
    with pytest.raises(ValueError):
        fit_decay(_exp_samples(10_000, 1.0), lo_quantile=1.0)
    with pytest.raises(ValueError):
        fit_decay(_exp_samples(10_000, 1.0), drop_top=0)


def test_bootstrap_ci_covers_truth():
    fit = fit_decay(_exp_samples(100_000, 2.0, seed=7), bootstrap=60, seed=1)
    lo, hi = fit.bootstrap_ci
    assert lo < 2.0 < hi
    assert lo < fit.rate < hi
    again = fit_decay(_exp_samples(100_000, 2.0, seed=7), bootstrap=60, seed=1)
    assert again.bootstrap_ci == fit.bootstrap_ci


def test_tailfit_json_shape():
    x = _exp_samples(20_000, 1.0)
    fit = fit_decay(x, min_points=100, bootstrap=20)
    doc = fit.to_json()
    assert set(doc) == {"rate", "stderr", "window", "points", "ci"}
    assert len(doc["window"]) == 2 and len(doc["ci"]) == 2
    assert fit_decay(x, min_points=100).to_json()["ci"] is None


def test_compare_rates():
    fit = fit_decay(_exp_samples(100_000, 0.5, seed=2))
    good = compare_rates(0.5, fit, tolerance=0.1)
    assert good.passed and abs(good.rel_error) <= 0.1
    assert good.to_json()["passed"] is True
    strict = compare_rates(fit.rate * 1.5, fit, tolerance=0.1)
    assert not strict.passed
    exact = compare_rates(fit.rate, fit, tolerance=0.0)
    assert exact.passed and exact.z_score == 0.0


def test_fits_agree_overlap_rule():
    from queuedecay.tailest import TailFit
    a = TailFit(1.00, 0.01, (0.0, 1.0), 600)
    b = TailFit(1.05, 0.01, (0.0, 1.0), 600)
    # 4 se widths miss, the 2 percent floor closes the gap
    assert fits_agree(a, b)
    c = TailFit(1.20, 0.001, (0.0, 1.0), 600)
    assert not fits_agree(a, c)
    assert fits_agree(a, c, rel_floor=0.12)


def test_tilt_preserves_root_identity():
    for model in (MM1,
                  QueueModel(Exponential(0.5), UniformInterval(0.5, 2.5)),
                  QueueModel(Erlang(2, 1.0), Exponential(0.8))):
        tm = tilt_measure(model)
        root = gamma_w(model)
        assert tm.nu == pytest.approx(root, rel=1e-12)
        assert tm.psi_nu == pytest.approx(root, rel=1e-12)
        value = mgf(model.arrival, -tm.psi_nu) * mgf(model.service, tm.nu)
        assert value == pytest.approx(1.0, abs=1e-9)


def test_tilt_sampler_means_match_tilted_densities():
    model = QueueModel(Exponential(0.5),
                       FiniteMixture([(0.5, UniformInterval(0.0, 1.0)),
                                      (0.5, Exponential(1.5))]))
    tm = tilt_measure(model)
    rng = stream(5, 0)
    svc = tm.service.draw(rng, 200_000)
    eps = 1e-6
    want = (mgf(model.service, tm.nu + eps)
            - mgf(model.service, tm.nu - eps)) / (2 * eps)
    want /= mgf(model.service, tm.nu)
    assert svc.mean() == pytest.approx(want, rel=0.01)
    arr = tm.arrival.draw(rng, 200_000)
    want_a = -(mgf(model.arrival, -tm.psi_nu - eps)
               - mgf(model.arrival, -tm.psi_nu + eps)) / (2 * eps)
    want_a /= mgf(model.arrival, -tm.psi_nu)
    assert arr.mean() == pytest.approx(want_a, rel=0.01)


def test_tilt_explicit_nu_and_drift_sign():
    tm = tilt_measure(MM1, nu=0.6)
    assert tm.nu == 0.6
    assert tm.psi_nu == pytest.approx(psi(MM1.arrival, MM1.service, 0.6),
                                      rel=1e-12)
    with pytest.raises(ValueError):
        tilt_measure(MM1, nu=0.0)
    with pytest.raises(TiltUnavailableError):
        tilt_measure(MM1, nu=0.25)  # walk still drifts down at this tilt
    with pytest.raises(TiltUnavailableError):
        tilt_measure(MM1, nu=1.0)  # tilted service rate would be <= 0


def test_tilt_unavailable_for_unsupported_laws():
    hard = QueueModel(Exponential(0.05),
                      ConditionedBelow(Erlang(2, 1.0), 2.0))
    assert gamma_w(hard) > 1.0
    with pytest.raises(TiltUnavailableError):
        tilt_measure(hard)


def test_is_workload_tail_at_zero_matches_load():
    mean, rel_se = is_workload_tail(MM1, 0.0, 20_000, 11)
    se = mean * rel_se
    assert abs(mean - 0.5) <= 3 * se


def test_is_workload_tail_mm1_closed_form():
    # P(W > x) = rho * exp(-gamma_w x) for this model
    mean, rel_se = is_workload_tail(MM1, 20.0, 20_000, 11)
    want = 0.5 * math.exp(-0.5 * 20.0)
    assert abs(mean / want - 1.0) <= 0.05
    assert rel_se < 0.02


def test_is_workload_tail_monotone_in_level():
    lo, lo_rel = is_workload_tail(MM1, 5.0, 20_000, 11)
    hi, hi_rel = is_workload_tail(MM1, 25.0, 20_000, 11)
    assert lo * (1 - 3 * lo_rel) > hi * (1 + 3 * hi_rel)


def test_is_workload_tail_against_direct_frequency():
    from queuedecay.dist import sample_array
    from queuedecay.simqueue import lindley_workload
    x = 2.0
    mean, rel_se = is_workload_tail(MM1, x, 40_000, 13)
    n = 400_000
    w = lindley_workload(sample_array(MM1.arrival, stream(123, 0), n),
                         sample_array(MM1.service, stream(123, 2), n))
    w = w[n // 5:]
    freq = float(np.mean(w > x))
    assert freq >= 1e-3
    fse = math.sqrt(freq * (1 - freq) / len(w))
    assert abs(mean - freq) <= 4 * (mean * rel_se + fse)


def test_is_workload_tail_split_model():
    model = QueueModel(Exponential(1.0),
                       split=Split(0.5, UniformInterval(0.0, 0.5),
                                   Deterministic(0.8)))
    mean, rel_se = is_workload_tail(model, 10.0, 10_000, 3)
    assert 0.0 < mean < 1.0
    assert rel_se < 0.1


def test_is_workload_tail_validation():
    with pytest.raises(ValueError):
        is_workload_tail(MM1, -1.0, 100, 1)
    with pytest.raises(ValueError):
        is_workload_tail(MM1, 1.0, 1, 1)
