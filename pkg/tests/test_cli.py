import csv
import io
import json

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from noisereg.cli import ConfigError, dump_config, emit_report, load_dataset_csv, main, parse_config, run, save_dataset_csv
from noisereg.cli.dataio import DatasetError
from noisereg.cli.report import CSV_COLUMNS, empty_report, render
from noisereg.experiment import Dataset

MINIMAL = {
    "schema_version": 1,
    "task": {"name": "linreg2d-v1"},
    "network": {"widths": [2, 1], "activations": ["identity"]},
    "train": {"epochs": 3},
}


def cfg(**overrides):
    data = json.loads(json.dumps(MINIMAL))
    for key, value in overrides.items():
        data[key] = value
    return parse_config(json.dumps(data))


def errors_of(data) -> list:
    with pytest.raises(ConfigError) as err:
        parse_config(json.dumps(data))
    return err.value.errors


def test_minimal_config_gets_defaults():
    c = parse_config(json.dumps(MINIMAL))
    assert c.seed == 0
    assert c.train.eta == 0.05 and c.train.minibatch_size == 16
    assert c.train.scale_mode.value == "retention_p"
    assert c.train.mask_granularity == "per_minibatch"
    assert c.output.format == "json" and c.verify == []


def test_out_of_range_value_names_path():
    data = json.loads(json.dumps(MINIMAL))
    data["train"]["drop"] = {"p": 1.5}
    errs = errors_of(data)
    assert any(e.startswith("train.drop.p:") for e in errs)


def test_unknown_key_is_named():
    errs = errors_of({**MINIMAL, "learning_rat": 0.1})
    assert any(e.startswith("learning_rat:") for e in errs)


def test_all_errors_reported():
    data = json.loads(json.dumps(MINIMAL))
    data["train"] = {"eta": -1}
    data["bogus"] = 1
    errs = errors_of(data)
    assert {e.split(":")[0] for e in errs} >= {"train.epochs", "train.eta", "bogus"}


def test_schema_version_required():
    data = dict(MINIMAL)
    del data["schema_version"]
    assert any(e.startswith("schema_version:") for e in errors_of(data))


def test_nested_union_paths_are_clean():
    data = json.loads(json.dumps(MINIMAL))
    data["augmentation"] = {"target": "input", "dist": {"kind": "gaussian", "mean": 0, "stddev": -1}}
    assert any(e.startswith("augmentation.dist.stddev:") for e in errors_of(data))


def test_invalid_json():
    with pytest.raises(ConfigError):
        parse_config("{not json")


dists = st.one_of(
    st.builds(lambda m, s: {"kind": "gaussian", "mean": m, "stddev": s}, st.floats(-3, 3), st.floats(0, 2)),
    st.builds(lambda p: {"kind": "bernoulli", "p": p}, st.floats(0, 1)),
    st.builds(lambda a, w: {"kind": "uniform", "lo": a, "hi": a + w}, st.floats(-3, 3), st.floats(0, 2)),
)


@st.composite
def configs(draw):
    n_hidden = draw(st.integers(0, 2))
    widths = [2] + draw(st.lists(st.integers(1, 8), min_size=n_hidden, max_size=n_hidden)) + [1]
    acts = draw(st.lists(st.sampled_from(["identity", "sigmoid", "tanh", "relu"]), min_size=len(widths) - 1,
                         max_size=len(widths) - 1))
    train = {"epochs": draw(st.integers(0, 50)), "eta": draw(st.floats(1e-4, 1.0)),
             "minibatch_size": draw(st.integers(1, 32))}
    if draw(st.booleans()):
        train["penalty"] = {"kind": draw(st.sampled_from(["l1", "l2"])), "alpha": draw(st.floats(0, 1))}
    if draw(st.booleans()):
        train["drop"] = {"p": draw(st.floats(0, 1)), "layer_index": draw(st.integers(0, len(acts) - 1))}
    data = {
        "schema_version": 1,
        "seed": draw(st.integers(0, 2**64 - 1)),
        "task": {"name": "linreg2d-v1"},
        "network": {"widths": widths, "activations": acts},
        "train": train,
        "verify": draw(st.lists(st.sampled_from(["dropout_reduction", "gradients", "mask_count"]), max_size=3)),
    }
    if draw(st.booleans()):
        data["augmentation"] = {"target": "input", "mode": "additive", "dist": draw(dists)}
    return data


@settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(configs())
def test_config_round_trip(data):
    c = parse_config(json.dumps(data))
    assert parse_config(dump_config(c)) == c


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_csv_examples(tmp_path):
    d = load_dataset_csv(write(tmp_path, "x0,x1,y0\n1,2,3\n4,5,6\n7,8,9\n"))
    assert d.count("train") == 3 and d.x.shape == (3, 2) and d.z is None
    d = load_dataset_csv(write(tmp_path, "x0,z0,z1,y0,split\n1,0.5,0.25,1,train\n2,1,2,0,val\n"))
    assert d.z.tolist() == [[0.5, 0.25], [1, 2]] and list(d.split) == ["train", "val"]
    with pytest.raises(DatasetError, match=r"\(2, x1\)"):
        load_dataset_csv(write(tmp_path, "x0,x1,y0\n1,2,3\n4,oops,6\n"))


def test_load_csv_rejections(tmp_path):
    with pytest.raises(DatasetError, match="row 2"):
        load_dataset_csv(write(tmp_path, "x0,y0\n1,2\n3\n"))
    with pytest.raises(DatasetError, match="empty"):
        load_dataset_csv(write(tmp_path, ""))
    with pytest.raises(DatasetError, match="split"):
        load_dataset_csv(write(tmp_path, "x0,y0,split\n1,2,test\n"))
    with pytest.raises(DatasetError, match="unknown column"):
        load_dataset_csv(write(tmp_path, "x0,y0,w\n1,2,3\n"))


finite = st.floats(allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.integers(1, 6), st.integers(1, 3), st.integers(0, 2), st.data())
def test_csv_round_trip(tmp_path, n, a, b, data):
    x = np.array(data.draw(st.lists(finite, min_size=n * a, max_size=n * a))).reshape(n, a)
    z = np.array(data.draw(st.lists(finite, min_size=n * b, max_size=n * b))).reshape(n, b) if b else None
    y = np.array(data.draw(st.lists(finite, min_size=n, max_size=n))).reshape(n, 1)
    split = data.draw(st.lists(st.sampled_from(["train", "val"]), min_size=n, max_size=n))
    path = tmp_path / "rt.csv"
    save_dataset_csv(Dataset(x, y, split, z=z), path)
    back = load_dataset_csv(path)
    assert np.array_equal(back.x, x) and np.array_equal(back.y, y) and list(back.split) == split
    assert (back.z is None) if z is None else np.array_equal(back.z, z)


def test_emit_report_empty(tmp_path):
    assert json.loads(render(empty_report(), "json")) == {"runs": []}
    assert render(empty_report(), "csv") == ",".join(CSV_COLUMNS) + "\n"


def test_emit_report_gap_rows_and_json_round_trip(tmp_path):
    report = {"runs": [{"run_id": "g", "seed": 4, "losses": [], "verifications": [],
                        "gaps": [{"train_loss": 0.2, "eval_loss": 0.7, "gap": 0.49999999999999994}]}]}
    rows = list(csv.reader(io.StringIO(render(report, "csv"))))
    assert [r[2] for r in rows[1:]] == ["train_loss", "eval_loss", "gap"]
    assert all(r[1] == "4" for r in rows[1:])
    assert float(rows[3][4]) == 0.49999999999999994
    path = tmp_path / "r.json"
    emit_report(report, "json", path)
    assert json.loads(path.read_text()) == report


def test_run_verify_reduction_exit_zero(tmp_path, capsys):
    out = tmp_path / "v.json"
    assert run("verify", cfg(verify=["dropout_reduction"]), out=str(out)) == 0
    rep = json.loads(out.read_text())
    (v,) = rep["runs"][0]["verifications"]
    assert v["claim"] == "dropout_equals_diagonal_dropconnect" and v["passed"] and v["seed"] == 0


def test_run_train_zero_epochs(tmp_path):
    out = tmp_path / "t.json"
    c = parse_config(json.dumps({**MINIMAL, "train": {"epochs": 0}}))
    assert run("train", c, seed=5, out=str(out)) == 0
    rep = json.loads(out.read_text())
    assert rep["runs"][0]["losses"] == [] and rep["seed"] == 5 and rep["runs"][0]["seed"] == 5
    assert "wall_clock_s" not in rep


def test_run_gap_without_val_split(tmp_path, capsys):
    path = write(tmp_path, "x0,x1,y0\n1,2,3\n4,5,6\n")
    c = cfg(task={"path": str(path)})
    assert run("gap", c, out=str(tmp_path / "g.json")) != 0
    assert "'val'" in capsys.readouterr().err


def test_run_gap_memorizer_on_toy_domain(tmp_path):
    c = parse_config(json.dumps({**MINIMAL, "task": {"name": "memo4-v1"}, "network": {"widths": [1, 1],
                     "activations": ["identity"]}, "gap": {"model": "memorizer"}}))
    # memo4 has no val rows
    assert run("gap", c, out=str(tmp_path / "g.json")) == 2


def test_run_gap_reports_both_estimators(tmp_path):
    out = tmp_path / "g.json"
    assert run("gap", cfg(), out=str(out), fmt="csv") == 0
    metrics = [r[2] for r in csv.reader(io.StringIO(out.read_text()))][1:]
    assert metrics.count("gap") == 2 and metrics.count("epoch_loss") == 3


def test_failing_verification_sets_exit_one(tmp_path, capsys):
    c = cfg(verify=["dropout_reduction", {"name": "l2_vs_noise", "sigma": 0.1, "alpha": 0.1}])
    assert run("verify", c, out=str(tmp_path / "v.json")) == 1
    assert "noise_training_equals_l2" in capsys.readouterr().err


def test_unwritable_report_path(tmp_path):
    assert run("train", cfg(), out=str(tmp_path / "missing" / "r.json")) == 3


def test_augment_writes_provenance_csv(tmp_path):
    out = tmp_path / "a.csv"
    c = cfg(augmentation={"target": "input", "dist": {"kind": "gaussian", "mean": 0, "stddev": 0.1}, "count": 10})
    assert run("augment", c, out=str(out)) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 10 and [int(r["origin_index"]) for r in rows] == list(range(10))
    assert rows[0]["provenance"] == "input:additive:gaussian(0.0, 0.1)"
    back = load_dataset_csv(out)
    assert back.x.shape == (10, 2)


def test_sweep_groups_and_concurrency(tmp_path):
    c = cfg(sweep={"seeds": [1, 2, 3], "overrides": {"train.eta": [0.01, 0.02]}})
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run("sweep", c, out=str(a), jobs=1) == 0
    assert run("sweep", c, out=str(b), jobs=2) == 0
    ra = json.loads(a.read_text())["runs"]
    assert len(ra) == 6 and sorted({r["seed"] for r in ra}) == [1, 2, 3]
    assert a.read_bytes() == b.read_bytes()


def test_sweep_bad_override_is_config_error(tmp_path):
    c = cfg(sweep={"seeds": [1], "overrides": {"train.nope": [1]}})
    assert run("sweep", c, out=str(tmp_path / "s.json")) == 2


def test_main_exit_codes(tmp_path, capsys):
    good = tmp_path / "c.json"
    good.write_text(json.dumps({**MINIMAL, "verify": ["mask_count"]}))
    assert main(["verify", "--config", str(good), "--out", str(tmp_path / "o.json")]) == 0
    assert main(["verify", "--config", str(tmp_path / "none.json")]) == 3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**MINIMAL, "typo": 1}))
    assert main(["train", "--config", str(bad)]) == 2
    malformed = write(tmp_path, "x0,x1,y0\n1,2\n")
    conf = tmp_path / "m.json"
    conf.write_text(json.dumps({**MINIMAL, "task": {"path": str(malformed)}}))
    assert main(["train", "--config", str(conf)]) == 3
    assert "row 1" in capsys.readouterr().err


def test_report_is_byte_identical_across_runs(tmp_path):
    c = cfg(verify=["dropout_reduction", "dropout_noise"], train={"epochs": 5, "drop": {"p": 0.8}})
    for sub in ("train", "verify"):
        a, b = tmp_path / f"{sub}1.json", tmp_path / f"{sub}2.json"
        assert run(sub, c, seed=9, out=str(a)) == 0
        assert run(sub, c, seed=9, out=str(b)) == 0
        assert a.read_bytes() == b.read_bytes()


def test_timing_only_when_requested(tmp_path):
    out = tmp_path / "t.json"
    assert run("train", cfg(report={"include_timing": True}), out=str(out)) == 0
    assert json.loads(out.read_text())["wall_clock_s"] >= 0


def test_sweep_seeds_only_gives_one_group_per_seed(tmp_path):
    out = tmp_path / "s.json"
    assert run("sweep", cfg(sweep={"seeds": [4, 5, 6, 7]}), out=str(out), jobs=3) == 0
    runs = json.loads(out.read_text())["runs"]
    assert [r["seed"] for r in runs] == [4, 5, 6, 7]
    assert len({r["run_id"] for r in runs}) == 4
