import numpy as np
import pytest

from kgalign.cli import main
from kgalign.config import RunConfig, parse_config_file, resolve_config
from kgalign.errors import ConfigError


def run(argv):
    return main(argv)


def synth_args(out, **kw):
    args = [
        "synth", "--out", str(out),
        "--entities", str(kw.get("entities", 40)),
        "--relations", str(kw.get("relations", 4)),
        "--triples", str(kw.get("triples", 120)),
        "--feature-dim", str(kw.get("feature_dim", 8)),
        "--seed", str(kw.get("seed", 3)),
    ]
    if kw.get("structural_noise"):
        args += ["--structural-noise", str(kw["structural_noise"])]
    if kw.get("feature_noise"):
        args += ["--feature-noise", str(kw["feature_noise"])]
    return args


def train_args(data, out, **sets):
    args = ["train", "--data", str(data), "--out", str(out)]
    defaults = {
        "k_neg": 3, "resample_interval": 5, "max_epochs": 12,
        "pretrain_cap": 6, "val_fraction": 0.1,
    }
    defaults.update(sets)
    for key, value in defaults.items():
        args += ["--set", f"{key}={value}"]
    return args


def test_synth_then_train_then_eval(tmp_path, capsys):
    data = tmp_path / "data"
    assert run(synth_args(data)) == 0
    out = tmp_path / "run"
    assert run(train_args(data, out)) == 0
    captured = capsys.readouterr().out
    assert "entity_joint_hits@1" in captured
    assert (out / "resolved_config.txt").exists()
    assert (out / "training_log.csv").exists()
    assert (out / "checkpoint_final.npz").exists()
    assert (out / "embeddings.npz").exists()

    eval_out = tmp_path / "eval"
    code = run([
        "eval", "--data", str(data),
        "--checkpoint", str(out / "checkpoint_final.npz"),
        "--out", str(eval_out),
    ])
    assert code == 0
    summary = (eval_out / "summary.txt").read_text()
    assert "entity_pre_hits@1" in summary
    assert "entity_joint_hits@10" in summary
    assert "relation_joint_hits@1" in summary
    assert (eval_out / "entity_alignment.tsv").exists()
    assert (eval_out / "relation_alignment.tsv").exists()


def test_align_command_writes_reports(tmp_path):
    data = tmp_path / "data"
    run(synth_args(data))
    out = tmp_path / "run"
    run(train_args(data, out))
    align_out = tmp_path / "align"
    code = run([
        "align", "--data", str(data),
        "--checkpoint", str(out / "checkpoint_final.npz"),
        "--out", str(align_out),
    ])
    assert code == 0
    tsv = (align_out / "entity_alignment.tsv").read_text().splitlines()
    assert len(tsv) > 0
    first = tsv[0].split("\t")
    assert len(first) == 1 + 2 * 2  # query id, 2 ranked ids, 2 scores (k_list 1,10 capped at pool)


def test_train_missing_dataset_gives_io_exit_and_no_outputs(tmp_path):
    out = tmp_path / "run"
    code = run(["train", "--data", str(tmp_path / "nope"), "--out", str(out)])
    assert code == 3
    assert not out.exists()


def test_unknown_config_key_rejected(tmp_path):
    data = tmp_path / "data"
    run(synth_args(data))
    code = run(["train", "--data", str(data), "--out", str(tmp_path / "o"),
                "--set", "not_a_key=1"])
    assert code == 2


def test_bad_synth_arguments_exit_code(tmp_path):
    code = run(["synth", "--out", str(tmp_path / "d"), "--entities", "2",
                "--relations", "1", "--triples", "50"])
    assert code == 2


def test_error_line_is_machine_parseable(tmp_path, capsys):
    run(["train", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "o")])
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    assert err[0].startswith("error: io: ")


def test_reports_are_reproducible_byte_identical(tmp_path):
    data = tmp_path / "data"
    run(synth_args(data, structural_noise=0.1, feature_noise=0.1))
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    run(train_args(data, out_a))
    run(train_args(data, out_b))
    for name in ("summary.txt", "resolved_config.txt"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
    ea = np.load(out_a / "embeddings.npz")
    eb = np.load(out_b / "embeddings.npz")
    np.testing.assert_array_equal(ea["joint"], eb["joint"])


def test_prepare_roundtrip(tmp_path):
    data = tmp_path / "data"
    run(synth_args(data))
    prepared = tmp_path / "prepared"
    code = run(["prepare", "--data", str(data), "--out", str(prepared), "--dump-adjacency"])
    assert code == 0
    assert (prepared / "summary.txt").exists()
    assert (prepared / "adjacency.coo").exists()
    summary = (prepared / "summary.txt").read_text()
    assert "g1_entities = 40" in summary
    assert "reference_entity_pairs = 40" in summary
    # prepared output loads identically
    again = tmp_path / "again"
    assert run(["prepare", "--data", str(prepared), "--out", str(again)]) == 0
    for name in ("triples_1", "triples_2", "ref_ent_ids"):
        assert (prepared / name).read_bytes() == (again / name).read_bytes()


def test_prepare_does_not_mutate_input(tmp_path):
    data = tmp_path / "data"
    run(synth_args(data))
    before = {p.name: p.read_bytes() for p in data.iterdir()}
    run(["prepare", "--data", str(data), "--out", str(tmp_path / "p")])
    after = {p.name: p.read_bytes() for p in data.iterdir()}
    assert before == after


def test_eval_with_sweep(tmp_path):
    data = tmp_path / "data"
    run(synth_args(data, entities=30, triples=90))
    out = tmp_path / "run"
    run(train_args(data, out, max_epochs=8, pretrain_cap=4))
    eval_out = tmp_path / "eval"
    code = run([
        "eval", "--data", str(data),
        "--checkpoint", str(out / "checkpoint_final.npz"),
        "--out", str(eval_out),
        "--sweep", "0.3",
    ])
    assert code == 0
    lines = (eval_out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "ratio,entity_hits1,relation_hits1"
    assert len(lines) == 2


# -- config machinery ---------------------------------------------------------

def test_config_file_parsing(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("max_epochs = 42\nhighway = false\n# comment\ngamma = 2.5\n")
    values = parse_config_file(cfg_file)
    assert values == {"max_epochs": 42, "highway": False, "gamma": 2.5}


def test_config_unknown_key(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("bogus = 1\n")
    with pytest.raises(ConfigError):
        parse_config_file(cfg_file)


def test_config_override_order(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("max_epochs = 10\n")
    cfg = resolve_config(cfg_file, ["max_epochs=20"], base={"max_epochs": "5", "gamma": "3.0"})
    assert cfg.max_epochs == 20
    assert cfg.gamma == 3.0


def test_config_roundtrip_through_file(tmp_path):
    cfg = RunConfig(max_epochs=7, highway=False, beta=12.5)
    path = tmp_path / "resolved.txt"
    cfg.write(path)
    again = resolve_config(path)
    assert again == cfg


def test_config_bad_bool(tmp_path):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("highway = maybe\n")
    with pytest.raises(ConfigError):
        parse_config_file(cfg_file)
