"""Command line: exit codes, normal forms, verification targets, suite output."""

import json

from adamsrr.cli import EXIT_FALSIFIED, EXIT_OK, EXIT_USAGE, main
from adamsrr.rewrite import parse_trace_json, revalidate_trace


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_normalize_theta_of_line(capsys):
    code, out, _ = run(capsys, "normalize", "theta(2, L)")
    assert code == EXIT_OK
    assert out.strip() == "1 + L"


def test_normalize_det_rf_triviality(capsys):
    code, out, _ = run(capsys, "normalize", "det_rf(f, (H0-H1)^3 (x) H)", "--n", "1")
    assert code == EXIT_OK
    assert out.startswith("1 (trivial)")


def test_normalize_det_rf_non_trivial(capsys):
    code, out, _ = run(capsys, "normalize", "det_rf(f, (H0-H1)^2 (x) H)", "--n", "1")
    assert code == EXIT_OK
    assert "det_rf[f]" in out


def test_normalize_malformed_input_exits_2(capsys):
    code, _, err = run(capsys, "normalize", "theta(2, L")
    assert code == EXIT_USAGE
    assert "position" in err


def test_normalize_strict_decls_reject_unknown(capsys, tmp_path):
    decls = tmp_path / "d.txt"
    decls.write_text("line L;\n")
    code, _, err = run(capsys, "normalize", "theta(2, M)", "--decls", str(decls))
    assert code == EXIT_USAGE
    assert "undeclared" in err


def test_normalize_with_decls_file(capsys, tmp_path):
    decls = tmp_path / "d.txt"
    decls.write_text("line L;\nbundle E rank 2;\nmorphism f dim 1;\n")
    code, out, _ = run(capsys, "normalize", "theta(2, E)", "--decls", str(decls))
    assert code == EXIT_OK
    assert out.strip() == "1 + E.1 + E.2 + E.1*E.2"


def test_normalize_json_format(capsys):
    code, out, _ = run(capsys, "normalize", "psi(2, L)", "--format", "json")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["normal_form"] == "L^2"


def test_verify_arr_writes_nine_step_trace(capsys, tmp_path):
    trace_path = tmp_path / "trace.json"
    code, out, _ = run(capsys, "verify", "arr", "--n", "1", "--p", "2",
                       "--trace-json", str(trace_path))
    assert code == EXIT_OK
    assert "status: verified" in out
    trace = parse_trace_json(trace_path.read_text())
    assert len(trace.steps) == 9
    assert revalidate_trace(trace)


def test_verify_arr_json_format(capsys):
    code, out, _ = run(capsys, "verify", "arr", "--n", "2", "--p", "2",
                       "--format", "json")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["status"] == "verified"
    assert len(doc["steps"]) == 9


def test_verify_mumford_prints_value(capsys):
    code, out, _ = run(capsys, "verify", "mumford", "--n", "3")
    assert code == EXIT_OK
    assert out.strip() == "37"


def test_verify_deligne(capsys):
    code, out, _ = run(capsys, "verify", "deligne")
    assert code == EXIT_OK
    assert "residual: 0" in out


def test_verify_binomial(capsys):
    code, out, _ = run(capsys, "verify", "binomial", "--n", "2", "--p", "5")
    assert code == EXIT_OK
    assert "ok" in out


def test_verify_tau_grid(capsys):
    code, out, _ = run(capsys, "verify", "tau")
    assert code == EXIT_OK
    assert out.count("equal") == 12


def test_verify_km(capsys):
    code, out, _ = run(capsys, "verify", "km", "--n", "1", "--p", "2")
    assert code == EXIT_OK
    assert "left exponent p^(n(n+2)+1) = 16" in out


def test_verify_base_change(capsys):
    code, out, _ = run(capsys, "verify", "base-change", "--n", "1", "--p", "2")
    assert code == EXIT_OK
    assert "status: verified" in out


def test_verify_rejects_composite_characteristic(capsys):
    code, _, err = run(capsys, "verify", "arr", "--n", "1", "--p", "4")
    assert code == EXIT_USAGE
    assert "not prime" in err


def test_suite_passes(capsys):
    code, out, _ = run(capsys, "suite")
    assert code == EXIT_OK
    assert out.count("PASS") == 9
    assert "FAIL" not in out


def test_suite_json_format(capsys):
    code, out, _ = run(capsys, "suite", "--format", "json")
    assert code == EXIT_OK
    cells = json.loads(out)
    assert len(cells) == 9
    assert all(c["ok"] for c in cells)
    assert [c["cell"] for c in cells] == sorted(c["cell"] for c in cells)


def test_suite_fault_injection_names_the_rule(capsys):
    code, out, err = run(capsys, "suite", "--inject-fault", "R5")
    assert code == EXIT_FALSIFIED
    assert "FAIL" in out
    assert "R5" in out
    assert "2-arr-replay" in err


def test_suite_deterministic_given_seed(capsys):
    _, out1, _ = run(capsys, "suite", "--seed", "3", "--format", "json")
    _, out2, _ = run(capsys, "suite", "--seed", "3", "--format", "json")
    strip = lambda text: [{k: v for k, v in c.items() if k != "seconds"}
                          for c in json.loads(text)]
    assert strip(out1) == strip(out2)
