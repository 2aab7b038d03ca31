import csv
import json

import pytest

from marlot.cli import main
from marlot.config import Config, apply_overrides, config_from_dict, config_to_dict, dump_config, load_config
from marlot.maddpg import save_checkpoint

from conftest import random_checkpoint


def test_yaml_round_trip(tmp_path):
    cfg = apply_overrides(Config(), ["scenario.road=Merge", "sut.idm.T=1.2", "scenario.sv_spawn_window=[5, 20]"])
    dump_config(cfg, tmp_path / "c.yaml")
    back = load_config(tmp_path / "c.yaml")
    assert back == cfg
    assert back.scenario.sv_spawn_window == (5, 20)


def test_unknown_keys_rejected():
    with pytest.raises(KeyError):
        config_from_dict({"scenario": {"raod": "Merge"}})
    with pytest.raises(KeyError):
        apply_overrides(Config(), ["harness.budgett=3"])
    with pytest.raises(ValueError):
        apply_overrides(Config(), ["harness.budget"])


def test_invalid_values_rejected():
    with pytest.raises(ValueError):
        config_from_dict({"sut": {"idm": {"delta": 0.5}}})
    with pytest.raises(ValueError):
        config_from_dict({"reward": {"mu1": -1.0}})


def test_defaults():
    d = config_to_dict(Config())
    assert d["fuzzer"]["d_safe"] == 3.5 and d["fuzzer"]["d_constraint"] == 2.0
    assert d["reward"]["mu1"] == 0.7 and d["reward"]["mu2"] == 0.01 and d["reward"]["mu3"] == 0.5
    assert d["harness"]["budget"] == 200 and d["harness"]["repetitions"] == 5
    assert d["scenario"]["n_surrounding"] == 3 and d["sim"]["lane_width"] == 3.5


def test_cli_run_replay_report(tmp_path, capsys):
    out = tmp_path / "rand.json"
    traces = tmp_path / "traces"
    rc = main(["run", "--seed", "3", "--method", "random", "--budget", "2", "--repetitions", "1",
               "--trace-dir", str(traces), "--out", str(out)])
    assert rc == 0
    assert json.loads(out.read_text())["budget"] == 2
    assert out.with_suffix(".yaml").exists()
    trace = sorted(traces.glob("*.jsonl"))[0]
    assert main(["replay", str(trace), "--out", str(tmp_path / "frames"), "--no-summary"]) == 0
    assert list((tmp_path / "frames").glob("frame_*.svg"))
    table = tmp_path / "table.csv"
    assert main(["report", str(out), "--out", str(table)]) == 0
    rows = list(csv.reader(table.open()))
    assert rows[0][0] == "road" and rows[1][0] == "Straight"


def test_cli_checkpoint_errors(tmp_path, capsys):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"junk")
    rc = main(["run", "--seed", "0", "--method", "marl_ot", "--checkpoint", str(bad), "--budget", "1",
               "--repetitions", "1"])
    assert rc == 2
    assert "not a checkpoint" in capsys.readouterr().err
    ck = tmp_path / "ck.bin"
    save_checkpoint(random_checkpoint(n=2), ck)
    rc = main(["run", "--seed", "0", "--method", "marl_ot", "--checkpoint", str(ck), "--budget", "1",
               "--repetitions", "1"])
    assert rc == 2
    assert "2 agents" in capsys.readouterr().err


def test_cli_needs_seed():
    with pytest.raises(SystemExit):
        main(["run", "--method", "random"])
