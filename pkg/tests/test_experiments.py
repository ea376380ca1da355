import math

import numpy as np
import pytest

from absalloc.experiments import (
    CSV_COLUMNS,
    ResultRow,
    SweepSpec,
    export_csv,
    generate_scenario,
    parse_csv,
    rows_to_csv,
    run_sweep,
    scenario_from_dict,
    scenario_to_dict,
)
from absalloc.model import ModelError, total_power


def test_generate_deterministic_and_bounded():
    a = generate_scenario(50, 3)
    b = generate_scenario(50, 3)
    assert np.array_equal(a.users, b.users)
    assert np.all(a.users > 0) and np.all(a.users <= 1001)
    assert a.channel.alpha == 9.61 and a.channel.beta == 0.16 and a.channel.f_c == 2.1e9
    assert not np.array_equal(a.users, generate_scenario(50, 4).users)


def test_generate_mean_near_center():
    u = generate_scenario(10_000, 0).users
    sigma = 1000 / math.sqrt(12) / math.sqrt(len(u))
    assert np.all(np.abs(u.mean(axis=0) - 501) < 3 * sigma)


def test_scenario_json_round_trip():
    sc = generate_scenario(5, 1, J=2, M=2)
    back = scenario_from_dict(scenario_to_dict(sc))
    assert np.array_equal(back.users, sc.users) and back.channel == sc.channel and back.J == 2


def test_spec_validation():
    with pytest.raises(ModelError):
        SweepSpec(seeds=0)
    with pytest.raises(ModelError):
        SweepSpec(J_values=())


def _small(**kw):
    base = dict(J_values=(2,), I=8, mods=(2,), schemes=("los",), seeds=1, G=20, multistart=2)
    base.update(kw)
    return SweepSpec(**base)


def test_single_cell_sweep(tmp_path):
    out = tmp_path / "r.csv"
    rows = run_sweep(_small(output=str(out)))
    assert len(rows) == 1
    r = rows[0]
    assert r.ok and r.total_power_w >= 0 and 100 <= r.avg_altitude_m <= 2000
    sc = generate_scenario(8, 0, J=2, M=2)
    assert r.total_power_w == total_power(sc, r.placement, r.assignment, "los")
    text = out.read_text()
    assert len(text.splitlines()) == 2 and text.endswith("\n") and "\r" not in text
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)


def test_two_seeds_differ_only_in_seed_fields():
    rows = run_sweep(_small(seeds=2, schemes=("generalized",)))
    a, b = rows
    assert (a.scheme, a.J, a.I, a.mods) == (b.scheme, b.J, b.I, b.mods)
    assert a.seed != b.seed and a.total_power_w != b.total_power_w


def test_csv_round_trip_and_bytes(tmp_path):
    rows = [ResultRow(1, "los", 2, 8, "1+2", 0.1 + 0.2, 333.3333333333333, 3, 0.0, 1e-3, True, "converged"),
            ResultRow(2, "generalized", 3, 8, "1", math.nan, math.nan, 0, 0.0, math.nan, False,
                      "error: ModelError: x, y")]
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    export_csv(rows, str(p1))
    export_csv(rows, str(p2))
    assert p1.read_bytes() == p2.read_bytes()
    back = parse_csv(str(p1))
    assert back[0] == rows[0]
    assert back[1].status == rows[1].status and math.isnan(back[1].total_power_w)
    assert rows_to_csv(back) == p1.read_text()


def test_export_errors(tmp_path):
    with pytest.raises(ModelError):
        rows_to_csv([])
    row = ResultRow(1, "los", 2, 8, "1", 1.0, 200.0, 1, 0.0, 2.0, True, "converged")
    with pytest.raises(ModelError):
        export_csv([row], str(tmp_path / "missing" / "x.csv"))


def test_failed_cell_is_annotated():
    rows = run_sweep(_small(L=3))  # too few subcarriers for 8 users
    assert len(rows) == 1 and rows[0].status.startswith("error:") and not rows[0].ok
