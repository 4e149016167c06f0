import os
import pytest
import numpy as np
import pandas as pd

from app.cli import EXIT_CONFIG_ERROR, EXIT_FAULT, EXIT_OK, EXIT_VERIFY_FAILED, _bounds_row, cmd_sweep, main
from app.config import settings
from app.exceptions import ParameterError
from app.services import bounds


def test_bounds_table(capsys):
    """Test one row per epsilon with the derived parameters."""
    code = main(["bounds", "--epsilon", "0.05,0.1", "--tau", "0.2", "--r", "10000", "--m", "8"])

    assert code == EXIT_OK
    out = capsys.readouterr().out
    header, *rows = out.strip().splitlines()
    assert "theta" in header
    assert "epsilon_star" in header
    assert "q_min" in header
    assert len(rows) == 2


def test_bounds_with_zero_tau(capsys):
    """Test that tau = 0 still prints the bounds and reports the missing setup parameters."""
    code = main(["bounds", "--epsilon", "0.1", "--tau", "0", "--r", "1000", "--m", "8"])

    assert code == EXIT_OK
    captured = capsys.readouterr()
    assert "setup parameters unavailable" in captured.err
    assert "tau must be > 0" in captured.err
    assert len(captured.out.strip().splitlines()) == 2


def test_bounds_plan(capsys):
    """Test the planning line for the smallest adequate r."""
    code = main(["bounds", "--epsilon", "0.05", "--tau", "0.2", "--r", "1000", "--m", "8", "--plan", "1.0"])

    assert code == EXIT_OK
    assert "plan: epsilon=0.05" in capsys.readouterr().out


def test_bounds_rejects_bad_grid(capsys):
    """Test a grid that is not numeric."""
    code = main(["bounds", "--epsilon", "low", "--tau", "0.2", "--r", "1000", "--m", "8"])

    assert code == EXIT_CONFIG_ERROR
    assert "Grid values must be numbers" in capsys.readouterr().err


def test_bounds_worked_point(capsys):
    """Test that the derived setup parameters of the worked point are printed."""
    code = main(["bounds", "--epsilon", "0.2", "--tau", "0.1", "--r", "800", "--m", "64", "--tau-s", "0.05"])

    assert code == EXIT_OK
    tokens = capsys.readouterr().out.split()
    assert "480" in tokens
    assert "1000" in tokens
    assert "2286" in tokens


def test_bounds_margin_changes_sign_once():
    """Test that over epsilon 0.01..0.20 the net-gain margin column changes sign exactly once."""
    eps_star = bounds.epsilon_star()
    margins = [
        _bounds_row(round(0.01 * step, 2), 0.1, 800, 64, 0.05, eps_star)["net_gain_margin"]
        for step in range(1, 21)
    ]

    signs = np.sign(margins)
    assert signs[0] > 0 and signs[-1] < 0
    assert int(np.count_nonzero(np.diff(signs))) == 1


def test_genmat_and_verify(temp_dir, capsys):
    """Test that genmat is deterministic and its output verifies."""
    first = os.path.join(temp_dir, "first.txt")
    second = os.path.join(temp_dir, "second.txt")

    for path in (first, second):
        assert main(["genmat", "--m", "5", "--r", "16", "--d-k", "4", "--seed", "3", "--out", path]) == EXIT_OK
    with open(first, encoding="utf-8") as f, open(second, encoding="utf-8") as g:
        assert f.read() == g.read()
    capsys.readouterr()

    assert main(["verify", "--matrix", first, "--d-k", "4"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "full_rank=1" in out
    assert out.strip().endswith("PASS")

    assert main(["verify", "--matrix", first, "--d-k", "10"]) == EXIT_VERIFY_FAILED
    assert capsys.readouterr().out.strip().endswith("FAIL")


def test_genmat_exhausted(temp_dir, capsys, monkeypatch):
    """Test that an infeasible target exits with the FAULT code and writes nothing."""
    monkeypatch.setattr(settings, "MATRIX_ATTEMPT_BUDGET", 300)
    path = os.path.join(temp_dir, "K.txt")

    code = main(["genmat", "--m", "8", "--r", "8", "--d-k", "5", "--seed", "0", "--out", path])

    assert code == EXIT_FAULT
    assert "FAULT" in capsys.readouterr().err
    assert not os.path.exists(path)


def test_verify_malformed_matrix(temp_dir):
    """Test that an unreadable matrix file is a configuration error."""
    path = os.path.join(temp_dir, "bad.txt")
    with open(path, "w", encoding="utf-8") as f:
        f.write("2 2\n10\n")

    assert main(["verify", "--matrix", path]) == EXIT_CONFIG_ERROR


def test_run_writes_csv(honest_config_file, temp_dir, capsys):
    """Test one CSV row per session with every honest session validated."""
    out = os.path.join(temp_dir, "sessions.csv")

    code = main(["run", "--config", honest_config_file, "--out", out])

    assert code == EXIT_OK
    frame = pd.read_csv(out)
    assert len(frame) == 3
    assert frame["validated"].tolist() == [1, 1, 1]
    assert frame["keys_equal"].tolist() == [1, 1, 1]
    assert (frame["net_gain"] == frame["m"] - frame["pad_consumed"]).all()
    assert "validation_rate=1.000" in capsys.readouterr().out


def test_run_seed_override(honest_config_file, temp_dir):
    """Test that --seed and --sessions override the config file."""
    first = os.path.join(temp_dir, "a.csv")
    second = os.path.join(temp_dir, "b.csv")

    assert main(["run", "--config", honest_config_file, "--seed", "99", "--sessions", "1", "--out", first]) == EXIT_OK
    assert main(["run", "--config", honest_config_file, "--seed", "99", "--sessions", "1", "--out", second]) == EXIT_OK

    a, b = pd.read_csv(first), pd.read_csv(second)
    assert len(a) == 1
    assert a.equals(b)


@pytest.mark.parametrize(
    "text",
    [
        "m = 8\nepsilon = 0.1\ntau = 0.2\n",
        "m = 8\nepsilon = 0.1\ntau = 0.2\nr = 200\nunknown_key = 1\n",
        "m = 8\nepsilon = 0.3\ntau = 0.2\nr = 200\n",
    ],
)
def test_run_malformed_config(temp_dir, text, capsys):
    """Test that a bad configuration exits with the config code and writes no CSV."""
    config = os.path.join(temp_dir, "bad.conf")
    with open(config, "w", encoding="utf-8") as f:
        f.write(text)
    out = os.path.join(temp_dir, "sessions.csv")

    assert main(["run", "--config", config, "--out", out]) == EXIT_CONFIG_ERROR
    assert "error:" in capsys.readouterr().err
    assert not os.path.exists(out)


def test_sweep_writes_rows(honest_config_file, temp_dir):
    """Test one aggregate row per grid point in grid order."""
    out = os.path.join(temp_dir, "sweep.csv")

    code = main([
        "sweep", "--config", honest_config_file, "--parameter", "delta", "--grid", "0.0,0.02",
        "--sessions", "2", "--out", out,
    ])

    assert code == EXIT_OK
    frame = pd.read_csv(out)
    assert frame["value"].tolist() == [0.0, 0.02]
    assert frame["sessions"].tolist() == [2, 2]
    assert (frame["parameter"] == "delta").all()


def test_sweep_unknown_parameter(honest_config_file):
    """Test that parameters outside the sweepable set are refused."""
    with pytest.raises(SystemExit) as exc_info:
        main(["sweep", "--config", honest_config_file, "--parameter", "m", "--grid", "4"])
    assert exc_info.value.code == 2

    with pytest.raises(ParameterError):
        cmd_sweep(honest_config_file, "m", [4.0])
