import numpy as np
import pytest

from wpcn import allocator as al
from wpcn.eh_model import PIECEWISE_LINEAR, EhuProfile
from wpcn.simulator import (CHUNK_EPOCHS, FadingSpec, SweepSpec, _uniform_block, default_profiles,
                            generate_epochs, generate_gains, mean_gain, preset, run_scheme,
                            run_sweep)

TAU0 = 0.3934693402873665763962004650088195465581
RATE = 0.303265329856316711801899767495590226721


def test_mean_gain_at_ten_metres():
    assert mean_gain(10.0) == pytest.approx(1e-6, rel=1e-15)


def test_sample_mean_law_of_large_numbers():
    spec = FadingSpec(mean_gain([10.0, 5.0]), seed=9, epochs=500_000)
    g = generate_gains(spec)
    assert g.mean(axis=0) == pytest.approx([1e-6, 8e-6], rel=0.01)


def test_philox_lanes_are_chunk_invariant():
    whole = _uniform_block(4, 0, 23)
    parts = np.concatenate([_uniform_block(4, 0, 5), _uniform_block(4, 5, 7),
                            _uniform_block(4, 12, 11)])
    assert np.array_equal(whole, parts)
    assert np.all((whole > 0) & (whole < 1))


def test_generation_independent_of_workers_and_chunks():
    spec = FadingSpec(mean_gain([10.0] * 3), seed=2, epochs=2 * CHUNK_EPOCHS + 17)
    a = generate_epochs(spec, 1e-10, workers=1)
    b = generate_epochs(spec, 1e-10, workers=4)
    assert np.array_equal(a, b)
    assert np.array_equal(a, generate_epochs(spec, 1e-10))
    assert not np.array_equal(a, generate_epochs(FadingSpec(spec.mean_gain, 3, spec.epochs), 1e-10))


def test_fading_validation():
    with pytest.raises(ValueError):
        FadingSpec([1e-6], epochs=0)
    with pytest.raises(ValueError):
        FadingSpec([1e-6], distribution="rician")


def test_single_epoch_worked_instance():
    batch = al.prepare_batch([[1.0]], [0.2], [1.0], 10.0)
    cfg = al.NetworkConfig(1, n0=10.0, p_avg=0.5 * TAU0, p_max=100.0)
    res = run_scheme(batch, cfg, al.THEOREM2, PIECEWISE_LINEAR)
    assert res.avg_sum_rate == pytest.approx(RATE, rel=1e-6)
    assert res.lam == pytest.approx(1.0, rel=1e-6)


def _batch(k=3, m=3000, seed=1):
    profs = default_profiles(k)
    x = generate_epochs(FadingSpec.for_profiles(profs, seed, m), 1e-10)
    return al.prepare_batch(x, np.full(k, 0.2), np.full(k, 9.2e-6), 1e-10)


def test_budgets():
    batch = _batch()
    cfg = al.NetworkConfig(3, p_avg=2.0, p_max=30.0)
    assert run_scheme(batch, cfg, al.BASELINE2).consumed_avg_power == 2.0
    for scheme in (al.THEOREM2, al.BASELINE1):
        res = run_scheme(batch, cfg, scheme)
        assert res.lam > 0
        assert res.consumed_avg_power == pytest.approx(2.0, rel=1e-4)


def test_single_value_sweep_equals_run_scheme():
    batch = _batch(m=2000)
    cfg = al.NetworkConfig(3, p_avg=1.0, p_max=15.0)
    spec = SweepSpec("p_avg", [1.0], cfg, (al.THEOREM2,), PIECEWISE_LINEAR)
    rows = run_sweep(spec, default_profiles(3), FadingSpec.for_profiles(default_profiles(3), 1, 2000))
    direct = run_scheme(batch, cfg, al.THEOREM2, PIECEWISE_LINEAR)
    assert len(rows) == 1
    assert rows[0].result.avg_sum_rate == direct.avg_sum_rate


def test_sweep_spec_validation():
    cfg = al.NetworkConfig(3, p_avg=1.0, p_max=15.0)
    with pytest.raises(ValueError):
        SweepSpec("p_avg", [], cfg)
    with pytest.raises(ValueError):
        SweepSpec("k_users", [1.0], cfg)
    with pytest.raises(ValueError):
        SweepSpec("p_max", [5.0, 2.0], cfg)


def test_presets():
    a = preset("fig1a")
    assert a.k_values == (3, 5)
    assert a.config_at(2.0, 3).p_max == 30.0
    b = preset("fig1b")
    assert max(b.values) == 35.0 and b.fixed.k_users == 5 and b.fixed.p_avg == 3.0
    with pytest.raises(ValueError):
        preset("fig2")


def test_more_users_help_and_ordering_small():
    profs = [EhuProfile(0.2, 9.2e-6, 10.0)]
    spec = SweepSpec("p_avg", [0.5, 2.0], al.NetworkConfig(5, p_avg=1.0, p_max=15.0),
                     truth_curve=PIECEWISE_LINEAR, p_max_ratio=15.0, k_values=(3, 5))
    rows = run_sweep(spec, profs, FadingSpec.for_profiles(profs, 1, 3000))
    rate = {(r.k_users, r.value, r.scheme): r.result.avg_sum_rate for r in rows}
    for v in (0.5, 2.0):
        assert rate[(5, v, "theorem2")] >= rate[(3, v, "theorem2")]
        for k in (3, 5):
            assert rate[(k, v, "theorem2")] >= rate[(k, v, "baseline1")] - 1e-9
            assert rate[(k, v, "baseline1")] > rate[(k, v, "baseline2")]
