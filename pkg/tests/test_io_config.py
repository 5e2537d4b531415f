import json

import numpy as np
import pytest

from aggimpact import io
from aggimpact.config import RunConfig, parse_key_values
from aggimpact.exceptions import DataError, ParseError, UsageError
from aggimpact.svg import line_chart
from aggimpact.windows import ccdf, change_prob_curve, impact_curve, window_stats

from .oracles import random_tape


@pytest.fixture
def stats(rng):
    return window_stats(random_tape(rng, 3000), 8)


def assert_same(a, b):
    assert type(a) is type(b)
    for k, v in vars(a).items():
        if k == "meta":
            continue
        w = getattr(b, k)
        if isinstance(v, np.ndarray):
            assert np.array_equal(v, w, equal_nan=True), k
        elif isinstance(v, float) and np.isnan(v):
            assert np.isnan(w)
        else:
            assert v == w, k


def test_curve_round_trips(tmp_path, stats):
    curves = [impact_curve(stats, bins=9, min_occupancy=10),
              impact_curve(stats, "sign", bins=9, min_occupancy=10),
              change_prob_curve(stats, bins=9, min_occupancy=10),
              *ccdf(stats, 1.0)]
    for i, c in enumerate(curves):
        path = tmp_path / f"c{i}.csv"
        io.write_curve_csv(c, path)
        assert_same(c, io.read_curve_csv(path))
        first = path.read_bytes()
        io.write_curve_csv(io.read_curve_csv(path), path)
        assert path.read_bytes() == first


def test_bad_curve_file(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ParseError):
        io.read_curve_csv(p)
    with pytest.raises(DataError):
        io.read_curve_csv(tmp_path / "missing.csv")


def test_json_nan_becomes_null(tmp_path):
    p = tmp_path / "a.json"
    io.write_json({"b": float("nan"), "a": np.arange(2), "c": np.float64(1.5)}, p)
    assert json.loads(p.read_text()) == {"a": [0, 1], "b": None, "c": 1.5}
    assert p.read_text().index('"a"') < p.read_text().index('"b"')
    with pytest.raises(DataError, match="missing input artifact"):
        io.read_json(tmp_path / "nope.json")


def test_manifest(tmp_path):
    (tmp_path / "sub").mkdir()
    f1, f2 = tmp_path / "sub" / "b.txt", tmp_path / "a.txt"
    f1.write_text("hello")
    f2.write_text("")
    m = io.read_manifest(io.write_manifest(tmp_path, "x", [f1, f2, f1]))
    assert [e["path"] for e in m["files"]] == ["a.txt", "sub/b.txt"]
    assert m["files"][1]["sha256"] == \
        "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
    assert m["files"][1]["bytes"] == 5


def test_format_number():
    assert io.format_number(0.1) == "0.1"
    assert io.format_number(float("nan")) == "nan"
    assert float(io.format_number(1 / 3)) == 1 / 3


def test_svg(tmp_path):
    p = tmp_path / "a.svg"
    line_chart([("a", [1, 2, 3], [1, 4, 9]), ("b", [1, 2], [0, np.nan])], p, "t", "x", "y",
               logx=True)
    text = p.read_text()
    assert text.startswith("<svg") and "<polyline" in text
    q = tmp_path / "b.svg"
    line_chart([("a", [1, 2, 3], [1, 4, 9]), ("b", [1, 2], [0, np.nan])], q, "t", "x", "y",
               logx=True)
    assert p.read_bytes() == q.read_bytes()


# ---------------------------------------------------------------- config


def test_parse_key_values():
    got = parse_key_values("# c\nbins = 5  # trailing\n\nseed=3\n")
    assert got == {"bins": "5", "seed": "3"}
    with pytest.raises(UsageError, match=":2"):
        parse_key_values("a=1\nnonsense\n")
    with pytest.raises(UsageError, match="duplicate"):
        parse_key_values("a=1\na=2\n")


def test_run_config_from_file(tmp_path):
    (tmp_path / "raw").mkdir()
    p = tmp_path / "run.cfg"
    p.write_text("inputs = raw\nN_grid = 4, 16\nemit = csv, JSON\n"
                 "session_open = 08:00\nsynth.n_days = 2\nnormalization_period = year\n"
                 "date_from = 2016-01-01\nuse_vendor_side = yes\n")
    cfg = RunConfig.from_file(p)
    assert cfg.inputs == [tmp_path / "raw"]
    assert cfg.N_grid == [4, 16] and cfg.emit == ("csv", "json")
    assert cfg.synth == {"n_days": "2"} and cfg.normalization_period == "year"
    assert cfg.session_open.hour == 8 and cfg.use_vendor_side
    cfg.check_inputs()


@pytest.mark.parametrize("text", [
    "bogus = 1", "N_grid = 4, 2", "bins = zero", "merge_policy = x", "emit = pdf",
    "date_from = 2016-02-01\ndate_to = 2016-01-01", "normalization_period = month",
])
def test_run_config_rejects(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text + "\n")
    with pytest.raises(UsageError):
        RunConfig.from_file(p)


def test_missing_config_and_inputs(tmp_path):
    with pytest.raises(DataError):
        RunConfig.from_file(tmp_path / "none.cfg")
    with pytest.raises(DataError):
        RunConfig(inputs=[tmp_path / "none"]).check_inputs()
