import csv
import json
import math
import re
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fraccal import cli
from fraccal.config import ExperimentConfig, from_dict, load_config
from fraccal.errors import ConfigError, ToleranceBreach
from fraccal.output import format_number, svg_line_chart, write_csv

CONFIGS = Path(__file__).resolve().parent.parent / "demos" / "configs"
REASON = re.compile(r"^fraccal: exit=(\d) error=(\w+) reason=\S.*$")


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run(capsys, *argv):
    code = cli.main(list(argv))
    return code, capsys.readouterr()


def test_spectrum_defaults(tmp_path, capsys):
    code, _ = run(capsys, "spectrum", "--out", str(tmp_path))
    assert code == 0
    rows = read_csv(tmp_path / "eigenvalues.csv")
    assert len(rows) == 10 and float(rows[0]["eigenvalue"]) > 0
    rec = json.loads((tmp_path / "record.json").read_text())
    assert rec["status"] == "ok" and rec["subcommand"] == "spectrum"
    assert {"config", "version", "wall_clock_s", "summary", "provenance", "seed"} <= set(rec)


def test_reconstruct_oracle_planted(tmp_path, capsys):
    code, _ = run(capsys, "reconstruct", "--config", str(CONFIGS / "reconstruct_oracle.json"),
                  "--mode", "oracle", "--out", str(tmp_path))
    assert code == 0
    rows = read_csv(tmp_path / "coefficients.csv")
    assert list(rows[0]) == ["j", "a_true", "a_hat", "error"] and len(rows) == 4
    for r in rows:
        assert float(r["error"]) == abs(float(r["a_hat"]) - float(r["a_true"]))


def test_reconstruct_strict_reports_unreachable(tmp_path, capsys):
    code, io = run(capsys, "reconstruct", "--out", str(tmp_path))
    assert code == 2
    line = io.err.strip().splitlines()[-1]
    m = REASON.match(line)
    assert m and m.groups() == ("2", "TargetUnreachable")
    rec = json.loads((tmp_path / "record.json").read_text())
    assert rec["status"] == "error" and rec["error"]["exit"] == 2


@pytest.mark.parametrize("mode", ["fixed-point", "cauchy"])
def test_reconstruct_other_modes(tmp_path, capsys, mode):
    cfg = json.loads((CONFIGS / "reconstruct_oracle.json").read_text())
    cfg["kernel_index"] = 1 if mode == "cauchy" else 0
    cfg["a_true"] = [0.015, -0.01, 0.005, 0.0]
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    code, _ = run(capsys, "reconstruct", "--config", str(path), "--mode", mode,
                  "--out", str(tmp_path / "o"))
    assert code == 0
    assert len(read_csv(tmp_path / "o" / "coefficients.csv")) == 4
    if mode == "fixed-point":
        assert (tmp_path / "o" / "iterations.csv").exists()


def test_instability_byte_identical(tmp_path, capsys):
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        code, _ = run(capsys, "instability", "--config", str(CONFIGS / "instability_sweep.json"),
                      "--N", "8", "--delta", "0.1", "--pairs", "500", "--seed", "7",
                      "--out", str(d))
        assert code == 0
        outs.append(d)
    for name in ("instability.csv", "ratios.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_instability_unaligned_cells_is_config_error(tmp_path, capsys):
    code, io = run(capsys, "instability", "--N", "8", "--out", str(tmp_path))
    assert code == 1 and REASON.match(io.err.strip()).group(2) == "PartitionNotAligned"


def test_plot_renders_csv_columns(tmp_path, capsys):
    code, _ = run(capsys, "spectrum", "--plot", "--out", str(tmp_path))
    assert code == 0
    svg = (tmp_path / "eigenvalues.svg").read_text()
    rows = read_csv(tmp_path / "eigenvalues.csv")
    x = [float(r["index"]) for r in rows]
    y = [float(r["eigenvalue"]) for r in rows]
    assert svg == svg_line_chart(x, y, title="Dirichlet spectrum", xlabel="k", ylabel="lambda_k")
    assert svg.count("<circle") == len(rows)


@pytest.mark.parametrize("sub", ["forward", "dtn", "density"])
def test_small_subcommands(tmp_path, capsys, sub):
    code, _ = run(capsys, sub, "--h", "0.05", "--out", str(tmp_path))
    assert code == 0 and (tmp_path / "record.json").exists()


def test_runge_curve_tables(tmp_path, capsys):
    code, _ = run(capsys, "runge-curve", "--h", "0.05", "--out", str(tmp_path))
    assert code == 0
    fits = read_csv(tmp_path / "cost_fits.csv")
    assert [float(r["mu"]) for r in fits] == [0.5, 1.0, 2.0, 4.0]
    curve = read_csv(tmp_path / "cost_curve.csv")
    assert all(float(r["eps"]) <= 1 for r in curve)


def test_kernel_density_config(tmp_path, capsys):
    code, _ = run(capsys, "density", "--config", str(CONFIGS / "kernel_density.json"),
                  "--out", str(tmp_path))
    assert code == 0
    rec = json.loads((tmp_path / "record.json").read_text())
    assert rec["summary"]["kernel_dim"] == 1 and rec["summary"]["full_rank"] is True


def test_lipschitz_sweep(tmp_path, capsys):
    code, _ = run(capsys, "lipschitz", "--h", "0.05", "--sweep", "1,2", "--trials", "3",
                  "--out", str(tmp_path))
    assert code == 0
    assert [r["N"] for r in read_csv(tmp_path / "lipschitz.csv")] == ["1", "2"]


def test_tolerance_breach_exit_3(tmp_path, capsys, monkeypatch):
    def boom(cfg, out):
        raise ToleranceBreach("forced")
    monkeypatch.setitem(cli.SUBCOMMANDS, "spectrum", boom)
    code, io = run(capsys, "spectrum", "--out", str(tmp_path))
    assert code == 3 and REASON.match(io.err.strip()).groups() == ("3", "ToleranceBreach")


def test_threads_variable(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("FRACCAL_THREADS", "many")
    code, io = run(capsys, "lipschitz", "--h", "0.05", "--sweep", "1,2", "--out", str(tmp_path))
    assert code == 1 and "FRACCAL_THREADS" in io.err
    monkeypatch.setenv("FRACCAL_THREADS", "1")
    code, _ = run(capsys, "lipschitz", "--h", "0.05", "--sweep", "1,2", "--trials", "2",
                  "--out", str(tmp_path / "one"))
    assert code == 0


def test_thread_count_does_not_change_output(tmp_path, capsys, monkeypatch):
    for n in ("1", "3"):
        monkeypatch.setenv("FRACCAL_THREADS", n)
        code, _ = run(capsys, "lipschitz", "--h", "0.05", "--sweep", "1,2,4", "--trials", "2",
                      "--out", str(tmp_path / n))
        assert code == 0
    assert (tmp_path / "1" / "lipschitz.csv").read_bytes() == \
        (tmp_path / "3" / "lipschitz.csv").read_bytes()


# validate

def write_cfg(tmp_path, **kw):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(kw))
    return str(p)


def test_validate_ok(capsys):
    code, io = run(capsys, "validate")
    assert code == 0 and io.out.strip() == "OK"


def test_validate_regions_touch(tmp_path, capsys):
    code, io = run(capsys, "validate", "--config",
                   write_cfg(tmp_path, windows=[[-3.0, -2.0], [1.0, 3.0]]))
    assert code == 1 and "error=RegionsTouch" in io.err


def test_validate_delta_lambda1(tmp_path, capsys):
    code, io = run(capsys, "validate", "--delta", "1.1660039343126805")
    assert code == 1 and "error=DeltaTooLarge" in io.err


def test_validate_itemizes(tmp_path, capsys):
    code, io = run(capsys, "validate", "--config",
                   write_cfg(tmp_path, delta=0.9, epsilon=0.5, N=3))
    names = [REASON.match(line).group(2) for line in io.err.strip().splitlines()]
    assert code == 1 and {"DeltaTooLarge", "PartitionNotAligned"} <= set(names)


def test_unknown_key(tmp_path, capsys):
    code, io = run(capsys, "spectrum", "--config", write_cfg(tmp_path, sigma=1),
                   "--out", str(tmp_path))
    assert code == 1 and "unknown configuration keys: sigma" in io.err


# config and output

def test_config_round_trip_and_coercion():
    cfg = ExperimentConfig()
    assert from_dict(cfg.to_dict()) == cfg
    assert from_dict({"N": 4.0}).N == 4
    for bad in ({"N": 4.5}, {"strict_partition": 1}, {"basis": 3}, {"sweep": [1.5]}):
        with pytest.raises(ConfigError):
            from_dict(bad)
    with pytest.raises(ConfigError):
        from_dict([1, 2])
    assert load_config(None) == cfg


def test_config_bad_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(str(p))
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "missing.json"))


@given(st.floats(allow_nan=False))
def test_format_number_round_trip(x):
    assert float(format_number(x)) == x


def test_write_csv_atomic(tmp_path):
    write_csv(tmp_path / "t.csv", {"a": np.array([1.0, math.pi]), "b": [1, 2]})
    assert (tmp_path / "t.csv").read_text() == "a,b\n1,1\n3.1415926535897931,2\n"
    assert [p.name for p in tmp_path.iterdir()] == ["t.csv"]
    with pytest.raises(ValueError):
        write_csv(tmp_path / "u.csv", {"a": [1], "b": [1, 2]})
