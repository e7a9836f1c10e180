import numpy as np
import pytest

from wpcn.eh_model import (DEFAULT_KNEE_DBM, DegenerateCurveError, EhCurve, EhuProfile,
                           curves_for, dbm_to_watt, fit_piecewise, harvested_energy,
                           harvested_power, load_table_csv)

PW = EhCurve.piecewise_linear(0.2, 9.2e-6)


@pytest.mark.parametrize("p_in, out", [(0.0, 0.0), (1e-5, 2e-6), (1e-3, 9.2e-6)])
def test_piecewise_values(p_in, out):
    assert harvested_power(PW, p_in) == pytest.approx(out, rel=1e-15)


@pytest.mark.parametrize("n0x, expected", [(1e-6, 1e-6), (1e-5, 4.6e-6)])
def test_harvested_energy_branches(n0x, expected):
    prof = EhuProfile(0.2, 9.2e-6)
    assert harvested_energy(prof, n0x / 1e-10, 1e-10, 10.0, 0.5, 1.0) == pytest.approx(expected)
    assert harvested_energy(prof, n0x / 1e-10, 1e-10, 0.0, 0.5) == 0.0


def test_harvested_energy_matches_curve():
    prof = EhuProfile(0.3, 5e-6)
    rng = np.random.default_rng(3)
    x = rng.uniform(1e3, 1e5, 100)
    n0, p0, tau0, t = 1e-10, 7.0, 0.37, 2.0
    e = harvested_energy(prof, x, n0, p0, tau0, t)
    direct = t * tau0 * harvested_power(prof.design_curve(), n0 * x * p0)
    assert np.array_equal(e, direct)


@pytest.mark.parametrize("curve", [
    PW, EhCurve.logistic(0.2, 9.2e-6),
    EhCurve.table([1e-5, 5e-5, 1e-4], [1e-6, 6e-6, 8e-6]),
])
def test_monotone_and_bounded(curve):
    p = np.linspace(0.0, 1e-3, 1000)
    h = harvested_power(curve, p)
    assert np.all(np.diff(h) >= 0)
    assert np.all(h <= curve.saturation)


def test_self_fit_identity():
    prof = fit_piecewise(PW, knee_input=1e-5)
    assert prof.eta == pytest.approx(0.2, rel=1e-12)
    assert prof.p_sat == 9.2e-6


def test_logistic_preset_fit():
    prof = fit_piecewise(EhCurve.logistic(0.2, 9.2e-6), dbm_to_watt(DEFAULT_KNEE_DBM))
    assert prof.eta == pytest.approx(0.2, abs=0.02)
    assert prof.p_sat == 9.2e-6


def test_step_curve_is_degenerate():
    step = EhCurve.table([0.0, 1e-5, 1.0000001e-5, 1.0], [0.0, 0.0, 9.2e-6, 9.2e-6])
    with pytest.raises(DegenerateCurveError) as err:
        fit_piecewise(step, 1e-5)
    assert err.value.eta == 0.0


def test_table_without_plateau_is_degenerate():
    ramp = EhCurve.table([1e-5, 2e-5], [2e-6, 4e-6])
    with pytest.raises(DegenerateCurveError):
        fit_piecewise(ramp, 1e-5)


def test_table_csv(tmp_path):
    path = tmp_path / "curve.csv"
    path.write_text("# measured\np_in,p_h\n1e-5,1e-6\n1e-4,8e-6\n1e-3,9e-6\n")
    curve = load_table_csv(path)
    assert harvested_power(curve, 0.0) == 0.0
    assert harvested_power(curve, 5.5e-5) == pytest.approx(4.5e-6)
    assert harvested_power(curve, 1.0) == 9e-6


def test_invalid_inputs():
    with pytest.raises(ValueError):
        EhuProfile(1.2, 1e-6)
    with pytest.raises(ValueError):
        EhuProfile(0.2, 0.0)
    with pytest.raises(ValueError):
        EhCurve.table([2e-5, 1e-5], [1e-6, 2e-6])
    with pytest.raises(ValueError):
        EhCurve("sigmoid")


def test_curves_for():
    profs = [EhuProfile(0.2, 1e-6), EhuProfile(0.4, 2e-6)]
    design = curves_for("piecewise_linear", profs)
    assert [c.params["eta"] for c in design] == [0.2, 0.4]
    logi = curves_for("logistic", profs)
    assert logi[1].saturation == 2e-6
    assert curves_for(PW, profs) == [PW, PW]
