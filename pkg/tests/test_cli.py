import json
import math
import shutil
import subprocess
import sys

import numpy as np
import pytest
from conftest import PROBLEMS
from scipy.integrate import quad, solve_ivp

from falva.cli import (
    FAILED,
    INPUT_ERROR,
    NUMERIC_ERROR,
    OK,
    cmd_action,
    cmd_derive,
    cmd_invariance,
    cmd_sweep,
    cmd_verify,
    main,
    parse_alpha_range,
    run,
)

M2 = PROBLEMS / "falva_m2.json"
# a competing closed form with two flipped signs; it is not conserved
LITERAL_CHARGE = "0.5*(aL*q0^2 - bL*q0_1^2 + 3*q0_2^2) - q0_1*q0_3"


def write_doc(tmp_path, name="p.json", **doc):
    base = {"m": 1, "n": 1, "alpha": 0.5, "a": 0.0, "t": 1.0, "lagrangian": "1"}
    base.update(doc)
    path = tmp_path / name
    path.write_text(json.dumps(base))
    return path


def report_value(report, key):
    for line in report.splitlines():
        if line.startswith(key):
            return float(line.split("=", 1)[1].split()[0])
    raise KeyError(key)


# --- derive -------------------------------------------------------------------


def test_derive_example(tmp_path):
    out = cmd_derive(M2, json_out=tmp_path / "d.json")
    assert out.exit_code == OK
    assert "F = (1 - alpha)/(t - theta)*(bL*q0_1 - 2*q0_3) - " in out.report
    dump = json.loads((tmp_path / "d.json").read_text())
    assert "charge" in dump and out.artifacts == [str(tmp_path / "d.json")]


def test_derive_first_order_charge():
    out = cmd_derive(PROBLEMS / "free_particle.json")
    assert out.exit_code == OK
    assert "C = -0.5*q0_1^2 - Lambda" in out.report
    assert "psi_1 = q0_1" in out.report


def test_derive_malformed(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cmd_derive(bad).exit_code == INPUT_ERROR
    assert cmd_derive(tmp_path / "missing.json").exit_code == INPUT_ERROR
    assert cmd_derive(write_doc(tmp_path, lagrangian="q0_1 +")).exit_code == INPUT_ERROR


# --- invariance --------------------------------------------------------------------


def test_invariance_example():
    out = cmd_invariance(M2)
    assert out.exit_code == OK
    assert "not satisfied, informational" in out.report


def test_invariance_nonautonomous_fails():
    out = cmd_invariance(PROBLEMS / "nonautonomous.json")
    assert out.exit_code == FAILED
    assert "NOT invariant" in out.report


def test_invariance_null_generators(tmp_path):
    path = write_doc(tmp_path, lagrangian="q0_1^2 + theta*q0", generators={"tau": "0", "xi": ["0"]})
    assert cmd_invariance(path).exit_code == OK


def test_invariance_needs_generators(tmp_path):
    assert cmd_invariance(write_doc(tmp_path)).exit_code == INPUT_ERROR


def test_invariance_sampling_failure(tmp_path):
    path = write_doc(tmp_path, lagrangian="log(-1 - q0^2)*q0_1^2", generators={"tau": "1", "xi": ["0"]})
    assert cmd_invariance(path).exit_code == NUMERIC_ERROR


# --- verify ------------------------------------------------------------------------


def test_verify_example(tmp_path):
    out = cmd_verify(M2, csv_out=tmp_path / "traj.csv")
    assert out.exit_code == OK
    assert report_value(out.report, "rel_drift") <= 1e-5
    lines = (tmp_path / "traj.csv").read_text().splitlines()
    assert lines[0] == "theta,q0_0,q0_1,q0_2,q0_3,lambda,charge,el_check"


def test_verify_classical_limit():
    out = cmd_verify(M2, alpha=1.0)
    assert out.exit_code == OK
    assert "F = 0" in out.report.splitlines()
    assert report_value(out.report, "rel_drift") <= 1e-8


def test_verify_literal_charge_fails():
    out = cmd_verify(M2, charge_expr=LITERAL_CHARGE)
    assert out.exit_code == FAILED
    assert report_value(out.report, "rel_drift") > 1e-2


def test_verify_input_errors(tmp_path):
    assert cmd_verify(write_doc(tmp_path)).exit_code == INPUT_ERROR
    assert cmd_verify(M2, charge_expr="q0_9").exit_code == INPUT_ERROR
    assert cmd_verify(M2, epsilon=3.0).exit_code == INPUT_ERROR
    assert cmd_verify(M2, alpha=1.5).exit_code == INPUT_ERROR


def test_verify_numeric_failure(tmp_path):
    path = write_doc(tmp_path, lagrangian="q0_1^3/6", generators={"tau": "1", "xi": ["0"]},
                     initial=[[0.0, 0.0]])
    out = cmd_verify(path)
    assert out.exit_code == NUMERIC_ERROR
    assert "leading coefficient" in out.report or "singular" in out.report.lower()


def test_verify_underflow_is_numeric_failure(tmp_path):
    path = write_doc(tmp_path, lagrangian="0.5*q0_1^2",
                     generators={"tau": "1", "xi": ["0"], "gauge": {"type": "force_rate"}},
                     initial=[[0.0, 1.0]],
                     integration={"rel_tol": 1e-12, "abs_tol": 1e-14, "h_min": 1e-4, "epsilon": 1e-9})
    assert cmd_verify(path).exit_code == NUMERIC_ERROR


def test_verify_csv_is_deterministic(tmp_path):
    classical = PROBLEMS / "falva_m2_classical.json"
    cmd_verify(classical, csv_out=tmp_path / "a.csv", epsilon=1.9)
    cmd_verify(classical, csv_out=tmp_path / "b.csv", epsilon=1.9)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    cmd_verify(M2, csv_out=tmp_path / "c.csv")
    cmd_verify(M2, csv_out=tmp_path / "d.csv")
    assert (tmp_path / "c.csv").read_bytes() == (tmp_path / "d.csv").read_bytes()


# --- sweep -------------------------------------------------------------------------


def test_alpha_range_parsing():
    assert parse_alpha_range("0.25:1.0:0.25") == [0.25, 0.5, 0.75, 1.0]
    assert parse_alpha_range("0.5:0.5:0.1") == [0.5]
    for bad in ("0:1:0.5", "0.5:1.5:0.5", "1:0.5:0.1", "0.1:0.2", "0.1:0.5:0"):
        with pytest.raises(ValueError):
            parse_alpha_range(bad)


def test_sweep_rows(tmp_path):
    out = cmd_sweep(M2, "0.25:1.0:0.25", csv_out=tmp_path / "s.csv", jobs=2)
    assert out.exit_code == OK
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "alpha,rel_drift,action_value,C_0"
    rows = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    assert rows.shape == (4, 4)
    np.testing.assert_allclose(rows[:, 0], [0.25, 0.5, 0.75, 1.0])
    assert np.all(rows[:, 1] <= 1e-5)

    # at alpha = 1 the weight is 1: compare with a plain integral of L along the classical solution
    def classical(_, y):
        return [y[1], y[2], y[3], -y[0] + y[2]]

    sol = solve_ivp(classical, (0.0, 1.0), [1.0, 0.0, 0.0, 0.0], rtol=1e-12, atol=1e-14, dense_output=True)
    L = lambda th: 0.5 * (sol.sol(th)[0] ** 2 + sol.sol(th)[1] ** 2 + sol.sol(th)[2] ** 2)
    reference = quad(L, 0.0, 1.0, epsabs=1e-13)[0]
    # the run stops at t - epsilon; the frozen-L tail costs at most |dL| eps^2
    assert rows[-1, 2] == pytest.approx(reference, abs=1e-3)


def test_sweep_serial_matches_parallel(tmp_path):
    cmd_sweep(M2, "0.5:1.0:0.5", csv_out=tmp_path / "p.csv", jobs=2)
    cmd_sweep(M2, "0.5:1.0:0.5", csv_out=tmp_path / "s.csv", jobs=1)
    assert (tmp_path / "p.csv").read_bytes() == (tmp_path / "s.csv").read_bytes()


def test_sweep_range_error():
    assert cmd_sweep(M2, "0.0:1.0:0.5").exit_code == INPUT_ERROR


# --- action -------------------------------------------------------------------------


def test_action_constant_lagrangians(tmp_path):
    out = cmd_action(write_doc(tmp_path))
    assert out.exit_code == OK
    assert report_value(out.report, "I") == pytest.approx(1.128379167, abs=1e-9)
    out = cmd_action(write_doc(tmp_path, "c.json", alpha=1.0, lagrangian="2", t=3.0))
    assert report_value(out.report, "I") == pytest.approx(6.0, rel=1e-13)


def test_action_missing_trajectory(tmp_path):
    out = cmd_action(write_doc(tmp_path, lagrangian="q0_1^2"))
    assert out.exit_code == INPUT_ERROR


def test_action_from_csv_and_from_integration(tmp_path):
    free = PROBLEMS / "free_particle.json"
    cmd_verify(free, csv_out=tmp_path / "f.csv")
    via_csv = cmd_action(free, trajectory=tmp_path / "f.csv")
    direct = cmd_action(free)
    assert via_csv.exit_code == OK and direct.exit_code == OK
    assert report_value(via_csv.report, "I") == pytest.approx(report_value(direct.report, "I"), rel=1e-6)
    # L = (1 - theta)/2 on the exact solution
    exact = 0.5 / (math.gamma(0.5) * 1.5)
    err = report_value(direct.report, "estimated error")
    assert abs(report_value(direct.report, "I") - exact) <= err


def test_action_bad_trajectory(tmp_path):
    bad = tmp_path / "t.csv"
    bad.write_text("theta,q0_0,lambda,charge,el_check\n0,1,0,0,0\n")
    assert cmd_action(PROBLEMS / "free_particle.json", trajectory=bad).exit_code == INPUT_ERROR
    assert cmd_action(PROBLEMS / "free_particle.json", trajectory=tmp_path / "nope.csv").exit_code == INPUT_ERROR


# --- entry points --------------------------------------------------------------------


def test_main_exit_codes(capsys):
    assert main(["derive", str(M2)]) == OK
    assert "psi_2 = q0_2" in capsys.readouterr().out
    assert main(["invariance", str(PROBLEMS / "nonautonomous.json")]) == FAILED
    assert main(["verify", str(M2), "--charge-expr", LITERAL_CHARGE]) == FAILED
    assert main(["derive"]) == INPUT_ERROR
    assert main(["frobnicate", str(M2)]) == INPUT_ERROR


def test_run_returns_outcome():
    out = run(["action", str(PROBLEMS / "unit_lagrangian.json")])
    assert out.exit_code == OK and out.report.startswith("source:")


@pytest.mark.skipif(shutil.which("falva") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["falva", "derive", str(PROBLEMS / "free_particle.json")],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "F = (1 - alpha)/(t - theta)*q0_1" in proc.stdout


def test_module_invocation():
    proc = subprocess.run([sys.executable, "-m", "falva", "invariance", str(M2)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
