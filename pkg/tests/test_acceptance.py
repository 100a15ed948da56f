"""Acceptance criteria, one test each; a PASS/FAIL summary is printed at the end of the run."""
import math

import numpy as np

from conftest import criterion
from spdcsim import budget, chsh, multipair, report, scenarios, simulate, tomography
from spdcsim.cli import main
from spdcsim.params import AnalyzerPair, SourceParams
from spdcsim.states import TwoQubitState, singlet, state_fidelity, werner

QUIET = dict(dark_rate_signal=0.0, dark_rate_idler=0.0, fluor_fraction=0.0)


def test_criterion_1_first_order_visibility_law():
    with criterion(1, "first-order visibility law", 1.0) as notes:
        v1 = multipair.model_visibility(0.01, 0.095)
        v5 = multipair.model_visibility(0.05, 0.095)
        notes.append(f"V(0.01)={v1:.6f} V(0.05)={v5:.6f}")
        assert abs(v1 - 0.99) <= 2e-4
        assert abs(v5 - 0.95) <= 5e-3


def test_criterion_2_brute_force_oracle():
    with criterion(2, "oracle equivalence n<=12", 10.0) as notes:
        worst = 0.0
        for eta in (0.05, 0.095, 0.5, 1.0):
            for n in range(1, 13):
                a = multipair.c_n_extrema(n, eta)
                b = multipair.brute_force_c_n(n, eta)
                worst = max(worst, abs(a[0] - b[0]), abs(a[1] - b[1]))
        notes.append(f"max |diff|={worst:.2e}")
        assert worst <= 1e-12


def test_criterion_3_monte_carlo_vs_model():
    with criterion(3, "Monte Carlo vs analytic model", 120.0) as notes:
        template = SourceParams(**QUIET)
        rows = simulate.visibility_vs_alpha(template, [0.01, 0.1, 0.7], "HV", 10_000_000, seed=3)
        for row in rows:
            model = multipair.coincidence_extrema(template.replace(alpha=row.alpha)).visibility
            z = (row.visibility - model) / row.visibility_err
            notes.append(f"a={row.alpha}: V={row.visibility:.4f}±{row.visibility_err:.4f} model={model:.4f} z={z:+.2f}")
            assert abs(z) <= 3


def test_criterion_4_reference_fringe_visibilities(tmp_path):
    with criterion(4, "fig3 fringe visibilities", 120.0) as notes:
        files = scenarios.run_scenario("fig3-fringe", tmp_path)
        fits = {r["basis"]: r for r in report.read_table(files["fit"])}
        v_hv = float(fits["HV"]["visibility"])
        v_ad = float(fits["AD"]["visibility"])
        notes.append(f"V_HV={v_hv:.4%} V_AD={v_ad:.4%}")
        assert 0.975 <= v_hv <= 0.986
        assert 0.960 <= v_ad <= 0.973


def test_criterion_5_chsh():
    with criterion(5, "CHSH", 60.0) as notes:
        s_singlet = chsh.s_exact(singlet())
        assert abs(s_singlet - 2 * math.sqrt(2)) <= 1e-12
        res = chsh.s_from_counts(chsh.sample_counts(werner(0.968), 1e5, seed=2739))
        notes.append(f"S_exact(singlet)={s_singlet:.12f} S_sampled={res.s:.4f}±{res.s_err:.4f}")
        assert abs(res.s - 2.738) <= 3 * res.s_err


def test_criterion_6_tomography_round_trip():
    with criterion(6, "tomography round trip", 120.0) as notes:
        settings = tomography.standard_settings()
        rng = np.random.default_rng(50)
        worst = 1.0
        for _ in range(50):
            g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
            state = TwoQubitState.from_unnormalized(g @ g.conj().T)
            res = tomography.reconstruct(tomography.forward_counts(state, settings, 10_000))
            worst = min(worst, state_fidelity(res.rho_hat, state))
        res = tomography.reconstruct(tomography.forward_counts(werner(0.9847), settings, 10_000))
        notes.append(f"worst random fidelity={worst:.6f} werner F={res.fidelity:.4f} tangle={res.tangle:.4f}")
        assert worst >= 0.999
        assert abs(res.fidelity - 0.9885) <= 2e-3
        assert abs(res.tangle - 0.954) <= 1e-2


def test_criterion_7_rate_budget():
    with criterion(7, "rate budget", 1.0) as notes:
        ratio, advantage = budget.accidental_ratio(31.1e6, 1.8e-9)
        alphas = np.geomspace(1e-3, 1e-2, 8)
        reports = [budget.accidental_budget(SourceParams(alpha=a)) for a in alphas]

        def slope(field):
            return np.polyfit(np.log(alphas), np.log([getattr(r, field) for r in reports]), 1)[0]

        slopes = {f: slope(f) for f in ("multi_pair", "fluorescence", "dark_cross")}
        notes.append(f"ratio={ratio:.6f} advantage={advantage:.3f} "
                     + " ".join(f"{k}={v:.4f}" for k, v in slopes.items()))
        assert abs(ratio - 0.05598) <= 1e-5
        assert abs(advantage - 17.86) <= 5e-3
        assert abs(slopes["multi_pair"] - 2) <= 0.01
        assert abs(slopes["fluorescence"] - 2) <= 0.01
        assert abs(slopes["dark_cross"] - 1) <= 0.01
        assert len({r.dark_dark for r in reports}) == 1


def test_criterion_8_throughput():
    with criterion(8, "throughput at alpha=0.7", 120.0) as notes:
        p = SourceParams(alpha=0.7)
        eta = budget.solve_eta_for_singles(p, 1e6)
        p = p.replace(eta_signal=eta, eta_idler=eta)
        rec = simulate.simulate_run(p, AnalyzerPair(0.0, math.pi / 2), scenarios.SECOND, seed=110_000)
        notes.append(f"eta={eta:.4f} singles={rec.singles_s}/s coincidences={rec.coincidences}/s")
        assert abs(rec.singles_s - 1e6) <= 0.1e6
        assert abs(rec.coincidences - 110_000) <= 11_000


def _data(capsys, argv):
    assert main(argv) == 0
    return report.data_section(capsys.readouterr().out)


def test_criterion_9_determinism(capsys, tmp_path):
    commands = [
        ["simulate", "--pulses", "5000000", "--alpha", "0.1", "--seed", "1"],
        ["fringe", "--pulses", "500000", "--repeats", "5", "--seed", "2"],
        ["chsh", "--pulses", "2000000", "--alpha", "0.05", "--seed", "3"],
        ["chsh", "--werner-p", "0.968", "--coincidences", "1e5", "--seed", "4"],
        ["tomo", "--simulate", "--pulses", "3000000", "--alpha", "0.05", "--seed", "5"],
        ["tomo", "--simulate", "--werner-p", "0.9847", "--coincidences", "3e4", "--sample", "--seed", "6"],
    ]
    with criterion(9, "determinism across runs and shard counts") as notes:
        for argv in commands:
            runs = [_data(capsys, argv + ["--workers", w]) for w in ("1", "1", "4")]
            assert runs[0] == runs[1] == runs[2], f"{argv[0]} output differs"
        outputs = []
        for k, workers in enumerate(("1", "1", "4")):
            out = tmp_path / f"run{k}"
            assert main(["scenario", "fig2-fringe", "--pulses", "300000", "--out", str(out), "--workers", workers]) == 0
            outputs.append([report.data_section(f.read_text()) for f in sorted(out.iterdir())])
        assert outputs[0] == outputs[1] == outputs[2]
        notes.append(f"{len(commands) + 1} seeded commands identical over 2 runs and workers 1 vs 4")
