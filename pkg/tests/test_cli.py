import csv
import json
from pathlib import Path

import numpy as np
import pytest

from certisens.cli import main

TOY_RANGES = [[0.5, 5.0], [0.5, 5.0]]


def write_config(tmp_path: Path, name: str, payload: dict) -> Path:
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


def read_csv(path: Path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def toy_config(**overrides):
    cfg = {
        "model": {"name": "toy-diffusion", "dim_f": 32, "cells": 8, "ranges": TOY_RANGES},
        "snapshots": 25,
        "basis_size": 4,
        "sample_size": 120,
        "replicates": 200,
        "alpha": 0.05,
        "seed": 11,
    }
    cfg.update(overrides)
    return cfg


def linear_config(**overrides):
    cfg = {
        "model": {"name": "linear", "coeffs": [1.0, 2.0],
                  "ranges": [[0.0, 1.0], [0.0, 1.0]],
                  "surrogate_bound": 0.0},
        "sample_size": 200,
        "replicates": 200,
        "seed": 5,
    }
    cfg.update(overrides)
    return cfg


def test_offline_writes_reloadable_file(tmp_path):
    cfg = write_config(tmp_path, "c.json", toy_config())
    out = tmp_path / "run"
    assert main(["offline", "--config", str(cfg), "--out", str(out)]) == 0
    path = out / "reduced_model.json"
    payload = json.loads(path.read_text())
    assert payload["format"] == "certisens-run"
    assert payload["model"]["n"] == 4
    assert payload["seed"] == 11
    # reload, re-serialize: byte-identical file
    from certisens.rb import reduced_from_jsonable, reduced_to_jsonable

    round_tripped = reduced_to_jsonable(reduced_from_jsonable(payload["model"]))
    assert json.dumps(round_tripped, sort_keys=True) == json.dumps(payload["model"], sort_keys=True)


def test_offline_rerun_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, "c.json", toy_config())
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["offline", "--config", str(cfg), "--out", str(out1)]) == 0
    assert main(["offline", "--config", str(cfg), "--out", str(out2)]) == 0
    assert (out1 / "reduced_model.json").read_bytes() == (out2 / "reduced_model.json").read_bytes()


def test_offline_rank_deficient_exits_2(tmp_path):
    cfg = write_config(tmp_path, "c.json", toy_config(basis_size=30))
    assert main(["offline", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2


def test_estimate_exact_surrogate_collapses_bracket(tmp_path):
    cfg = write_config(tmp_path, "c.json", linear_config())
    out = tmp_path / "run"
    assert main(["estimate", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_csv(out / "estimates.csv")
    assert rows[0] == ["i", "Shat_surrogate", "Sm", "SM", "ci_lo", "ci_hi",
                       "dropped_replicates"]
    assert len(rows) == 3
    for row in rows[1:]:
        shat, sm, sM = float(row[1]), float(row[2]), float(row[3])
        assert sm == pytest.approx(shat, abs=1e-10)
        assert sM == pytest.approx(shat, abs=1e-10)
        assert float(row[4]) <= shat <= float(row[5])
    sidecar = json.loads((out / "estimates.json").read_text())
    assert sidecar["seed"] == 5
    assert sidecar["statuses"] == {"1": "ok", "2": "ok"}


def test_estimate_rerun_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, "c.json", toy_config())
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["estimate", "--config", str(cfg), "--out", str(out1)]) == 0
    assert main(["estimate", "--config", str(cfg), "--out", str(out2)]) == 0
    assert (out1 / "estimates.csv").read_bytes() == (out2 / "estimates.csv").read_bytes()


def test_estimate_widths_shrink_with_basis_size(tmp_path):
    widths = {}
    for n in (2, 4):
        cfg = write_config(tmp_path, f"c{n}.json", toy_config(basis_size=n))
        out = tmp_path / f"run{n}"
        assert main(["estimate", "--config", str(cfg), "--out", str(out)]) == 0
        rows = read_csv(out / "estimates.csv")[1:]
        widths[n] = np.mean([float(r[3]) - float(r[2]) for r in rows])
    assert widths[4] < widths[2]


def test_estimate_uses_prebuilt_reduced_model(tmp_path):
    cfg = write_config(tmp_path, "c.json", toy_config())
    out = tmp_path / "off"
    assert main(["offline", "--config", str(cfg), "--out", str(out)]) == 0
    cfg2 = write_config(tmp_path, "c2.json",
                        toy_config(reduced_model=str(out / "reduced_model.json")))
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["estimate", "--config", str(cfg2), "--out", str(out_a)]) == 0
    assert main(["estimate", "--config", str(cfg), "--out", str(out_b)]) == 0
    assert (out_a / "estimates.csv").read_text() == (out_b / "estimates.csv").read_text()


def test_estimate_bound_unavailable_flags_row_and_exits_3(tmp_path):
    cfg = write_config(tmp_path, "c.json", linear_config(
        model={"name": "linear", "coeffs": [1.0, 2.0],
               "ranges": [[0.0, 1.0], [0.0, 1.0]], "surrogate_bound": 100.0}))
    out = tmp_path / "run"
    assert main(["estimate", "--config", str(cfg), "--out", str(out)]) == 3
    rows = read_csv(out / "estimates.csv")
    assert rows[1][2] == ""  # bracket fields flagged empty
    sidecar = json.loads((out / "estimates.json").read_text())
    assert "bound-unavailable" in sidecar["statuses"]["1"]


def test_seed_priority_flag_config_env(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, "c.json", linear_config())
    out = tmp_path / "r1"
    monkeypatch.setenv("CERTISENS_SEED", "1234")
    assert main(["estimate", "--config", str(cfg), "--out", str(out)]) == 0
    assert json.loads((out / "estimates.json").read_text())["seed"] == 5  # config wins over env
    assert main(["estimate", "--config", str(cfg), "--seed", "42",
                 "--out", str(tmp_path / "r2")]) == 0
    assert json.loads((tmp_path / "r2" / "estimates.json").read_text())["seed"] == 42
    cfg_no_seed = linear_config()
    del cfg_no_seed["seed"]
    cfg2 = write_config(tmp_path, "c2.json", cfg_no_seed)
    assert main(["estimate", "--config", str(cfg2), "--out", str(tmp_path / "r3")]) == 0
    assert json.loads((tmp_path / "r3" / "estimates.json").read_text())["seed"] == 1234


def test_unknown_config_keys_rejected(tmp_path):
    bad = toy_config()
    bad["sampel_size"] = 10
    cfg = write_config(tmp_path, "c.json", bad)
    assert main(["estimate", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 1


def test_tune_with_injected_constants_matches_solver(tmp_path):
    from certisens import TuningModel, solve_optimal

    cfg = write_config(tmp_path, "c.json", toy_config(tune={
        "constants": {"Z": 2.6407, "C": 197.69, "a": 2.789},
        "precisions": [0.005, 0.02, 0.05, 0.08, 0.09],
    }))
    out = tmp_path / "run"
    assert main(["tune", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_csv(out / "tuning.csv")
    assert rows[0] == ["P", "n_star", "N_star", "n_rounded", "N_rounded"]
    assert len(rows) == 6
    model = TuningModel(Z=2.6407, C=197.69, a=2.789)
    for row in rows[1:]:
        sol = solve_optimal(model, float(row[0]))
        assert float(row[1]) == pytest.approx(sol.n_star, rel=1e-12)
        assert float(row[2]) == pytest.approx(sol.N_star, rel=1e-12)


def test_tune_empty_precisions_gives_header_only(tmp_path):
    cfg = write_config(tmp_path, "c.json", toy_config(tune={
        "constants": {"Z": 1.0, "C": 10.0, "a": 2.0},
        "precisions": [],
    }))
    out = tmp_path / "run"
    assert main(["tune", "--config", str(cfg), "--out", str(out)]) == 0
    assert read_csv(out / "tuning.csv") == [["P", "n_star", "N_star", "n_rounded", "N_rounded"]]


def test_tune_from_measured_decay_pairs(tmp_path):
    C0, a0 = 50.0, 3.0
    pairs = [[n, C0 / a0 ** n] for n in range(4, 10)]
    cfg = write_config(tmp_path, "c.json", toy_config(tune={
        "pairs": pairs, "Z": 2.0, "precisions": [0.01, 0.03],
    }))
    out = tmp_path / "run"
    assert main(["tune", "--config", str(cfg), "--out", str(out)]) == 0
    constants = json.loads((out / "tuning.json").read_text())["constants"]
    assert constants["C"] == pytest.approx(C0, rel=1e-9)
    assert constants["a"] == pytest.approx(a0, rel=1e-9)


def test_tune_no_decay_exits_4(tmp_path):
    cfg = write_config(tmp_path, "c.json", toy_config(tune={
        "pairs": [[1, 0.1], [2, 0.2], [3, 0.4]], "Z": 2.0, "precisions": [0.01],
    }))
    assert main(["tune", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 4


def test_tune_live_preruns_on_toy_model(tmp_path):
    cfg = write_config(tmp_path, "c.json", toy_config(
        sample_size=80, replicates=150,
        tune={"basis_sizes": [2, 3, 4], "precisions": [0.05]},
    ))
    out = tmp_path / "run"
    assert main(["tune", "--config", str(cfg), "--out", str(out)]) == 0
    constants = json.loads((out / "tuning.json").read_text())["constants"]
    assert constants["a"] > 1.0
    assert constants["C"] > 0.0
    rows = read_csv(out / "tuning.csv")
    assert len(rows) == 2


def test_validate_default_suite_passes(tmp_path):
    cfg = write_config(tmp_path, "c.json", linear_config(validate={
        "instances": 6, "draws": 500, "surrogate_checks": 50, "audit_instances": 2,
    }, model={"name": "linear", "coeffs": [1.0, 2.0],
              "ranges": [[0.0, 1.0], [0.0, 1.0]],
              "surrogate_bound": 0.02, "surrogate_bias_fraction": 0.8}))
    out = tmp_path / "run"
    assert main(["validate", "--config", str(cfg), "--out", str(out)]) == 0
    report = json.loads((out / "validation.json").read_text())
    assert report["all_pass"] is True
    assert report["seed"] == 5


def test_validate_detects_lying_surrogate(tmp_path):
    # reported bound is 1000x smaller than the actual bias
    cfg = write_config(tmp_path, "c.json", linear_config(validate={
        "instances": 4, "draws": 200, "surrogate_checks": 50, "audit_instances": 1,
    }, model={"name": "linear", "coeffs": [1.0, 2.0],
              "ranges": [[0.0, 1.0], [0.0, 1.0]],
              "surrogate_bound": 0.001, "surrogate_bias_fraction": 1000.0}))
    out = tmp_path / "run"
    assert main(["validate", "--config", str(cfg), "--out", str(out)]) == 1
    report = json.loads((out / "validation.json").read_text())
    assert report["results"]["surrogate_certification"]["pass"] is False
    assert report["results"]["surrogate_certification"]["violations"] > 0
