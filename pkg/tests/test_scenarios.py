import math

import pytest

from spdcsim import report, scenarios
from spdcsim.multipair import FIRST_ORDER_K
from spdcsim.params import NumericalError, SourceParams, ValidationError


@pytest.mark.parametrize("target,frozen", [(scenarios.FIG2, scenarios.FIG2_MIXING),
                                           (scenarios.FIG3, scenarios.FIG3_MIXING)])
def test_frozen_calibration(target, frozen):
    fitted = scenarios.calibrate_mixing(SourceParams(alpha=target.alpha), target.v_hv, target.v_ad)
    assert (fitted.mixing_p_hv, fitted.mixing_p) == pytest.approx(frozen, abs=1e-5)


@pytest.mark.parametrize("name,target", [("fig2-fringe", scenarios.FIG2), ("fig3-fringe", scenarios.FIG3)])
def test_presets_hit_targets_in_closed_form(name, target):
    p = scenarios.preset_params(name)
    assert scenarios.fringe_visibility(p, "HV") == pytest.approx(target.v_hv, abs=1e-4)
    assert scenarios.fringe_visibility(p, "AD") == pytest.approx(target.v_ad, abs=1e-4)


def test_unreachable_target():
    with pytest.raises(NumericalError, match="unreachable"):
        scenarios.calibrate_mixing(SourceParams(alpha=0.1), 0.99, 0.98)


def test_unknown_preset(tmp_path):
    with pytest.raises(ValidationError, match="unknown preset"):
        scenarios.run_scenario("fig9", tmp_path)


def test_fig6_curve(tmp_path):
    files = scenarios.run_scenario("fig6-curve", tmp_path, pulses=200_000)
    rows = report.read_table(files["curve"])
    assert [float(r["alpha"]) for r in rows] == list(scenarios.FIG6_ALPHAS)
    for r in rows:
        a = float(r["alpha"])
        if a <= 0.1:
            assert abs(float(r["model_visibility"]) - (1 - a)) <= FIRST_ORDER_K * a ** 2


def test_fig2_preset_small(tmp_path):
    files = scenarios.run_scenario("fig2-fringe", tmp_path, pulses=300_000)
    assert set(files) == {"HV", "AD", "fit"}
    hv = report.read_table(files["HV"])
    assert len(hv) == 10 and hv[0].keys() == {"theta_i_deg", "mean_coinc", "std_coinc"}
    fits = {r["basis"]: r for r in report.read_table(files["fit"])}
    assert float(fits["HV"]["target"]) == scenarios.FIG2.v_hv
    text = files["HV"].read_text()
    assert "# seed: 20070000" in text and "# param mixing_p = 0.98219" in text


def test_chsh_preset_small(tmp_path):
    files = scenarios.run_scenario("chsh-low-flux", tmp_path, pulses=5_000_000)
    text = files["chsh"].read_text()
    data = report.data_section(text).split("\n\n")
    assert len(data) == 2 and data[1].startswith("S,S_err,violation_sigma")


def test_tomo_preset_small(tmp_path):
    files = scenarios.run_scenario("tomo-low-flux", tmp_path, pulses=10_000_000)
    blocks = report.data_section(files["tomo"].read_text()).split("\n\n")
    assert blocks[0].startswith("row,col,re,im")
    assert len(blocks[0].strip().splitlines()) == 17
    fid = float(blocks[1].splitlines()[1].split(",")[0])
    assert 0.0 <= fid <= 1.0


def test_fringe_fit_phase_tracks_signal_analyzer():
    tables = scenarios.fringe_tables(scenarios.preset_params("fig3-fringe"), seed=3, pulses=3_000_000, repeats=3)
    # a singlet fringe vanishes where the idler analyzer is parallel to the signal one
    for basis, (_, fit) in tables.items():
        assert math.degrees(fit.phase) == pytest.approx(0.0 if basis == "HV" else 45.0, abs=5)
