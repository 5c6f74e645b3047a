"""Command-line behavior: exit codes, config/flag precedence, round flow."""

import filecmp
import json
import os

import pytest

from advarena import arena, cli, data


@pytest.fixture(scope="module")
def round_dataset(tmp_path_factory):
    """Ten 32x32 images (one per class) with targets, written to disk."""
    split = data.generate(n_classes=10, n_per_class=1, size=32, seed=33,
                          name="roundset")
    split = data.assign_targets(split, seed=33)
    root = tmp_path_factory.mktemp("round_data")
    directory = str(root / "roundset")
    data.write_split(split, directory)
    return directory


def _write_config(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


ROSTER = {
    "attacks": {"a_fgsm": "fgsm:cnn_a", "a_noop": "noop"},
    "defenses": {"d_bit": "bit_depth:cnn_a@4", "d_direct": "direct:cnn_a"},
}


# ---------------------------------------------------------------------------
# gen-dataset

def test_gen_dataset_writes_split(tmp_path, capsys):
    rc = cli.main(["gen-dataset", "--output-dir", str(tmp_path),
                   "--n-classes", "4", "--n-per-class", "2", "--size", "16",
                   "--seed", "5", "--name", "toy"])
    assert rc == 0
    split = data.load_split(str(tmp_path / "toy"))
    assert len(split.records) == 8
    assert all(r.pixels.shape == (3, 16, 16) for r in split.records)
    assert "wrote 8 images" in capsys.readouterr().out


def test_gen_dataset_reruns_byte_identical(tmp_path):
    argv = ["gen-dataset", "--n-classes", "4", "--n-per-class", "2",
            "--size", "16", "--seed", "5", "--name", "toy"]
    assert cli.main(argv + ["--output-dir", str(tmp_path / "a")]) == 0
    assert cli.main(argv + ["--output-dir", str(tmp_path / "b")]) == 0
    dir_a, dir_b = str(tmp_path / "a" / "toy"), str(tmp_path / "b" / "toy")
    names = sorted(os.listdir(dir_a))
    assert names == sorted(os.listdir(dir_b))
    match, mismatch, errors = filecmp.cmpfiles(dir_a, dir_b, names,
                                               shallow=False)
    assert mismatch == [] and errors == []


def test_gen_dataset_with_targets_flag(tmp_path):
    rc = cli.main(["gen-dataset", "--output-dir", str(tmp_path),
                   "--n-classes", "4", "--n-per-class", "2", "--size", "16",
                   "--seed", "5", "--name", "toy", "--with-targets"])
    assert rc == 0
    split = data.load_split(str(tmp_path / "toy"))
    assert all(r.target_label is not None for r in split.records)
    assert all(r.target_label != r.true_label for r in split.records)


def test_config_supplies_settings_and_flags_override(tmp_path):
    config = _write_config(tmp_path / "cfg.json", {
        "output-dir": str(tmp_path / "out"),
        "n-classes": 4, "n-per-class": 2, "size": 16, "seed": 5,
        "name": "toy"})
    assert cli.main(["gen-dataset", "--config", config]) == 0
    split = data.load_split(str(tmp_path / "out" / "toy"))
    assert split.records[0].pixels.shape == (3, 16, 16)

    # the flag must beat the config key
    assert cli.main(["gen-dataset", "--config", config, "--size", "8",
                     "--output-dir", str(tmp_path / "out8")]) == 0
    split8 = data.load_split(str(tmp_path / "out8" / "toy"))
    assert split8.records[0].pixels.shape == (3, 8, 8)


# ---------------------------------------------------------------------------
# usage errors -> exit 1 with a message naming the offender

def test_missing_output_dir_is_usage_error(capsys):
    assert cli.main(["gen-dataset"]) == 1
    assert "--output-dir" in capsys.readouterr().err


def test_unknown_flag_is_usage_error(capsys):
    assert cli.main(["gen-dataset", "--whatever", "1"]) == 1
    assert "--whatever" in capsys.readouterr().err


def test_unknown_command_is_usage_error(capsys):
    assert cli.main(["frobnicate"]) == 1
    assert "frobnicate" in capsys.readouterr().err


def test_no_command_is_usage_error():
    assert cli.main([]) == 1


def test_config_must_exist(tmp_path, capsys):
    assert cli.main(["gen-dataset", "--config", str(tmp_path / "nope.json"),
                     "--output-dir", str(tmp_path)]) == 1
    assert "--config" in capsys.readouterr().err


def test_config_must_be_json_object(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    assert cli.main(["gen-dataset", "--config", str(bad),
                     "--output-dir", str(tmp_path)]) == 1
    assert "JSON object" in capsys.readouterr().err

    bad.write_text("{not json")
    assert cli.main(["gen-dataset", "--config", str(bad),
                     "--output-dir", str(tmp_path)]) == 1
    assert "not valid JSON" in capsys.readouterr().err


def test_dataset_flag_must_name_directory(tmp_path, capsys):
    stray = tmp_path / "file.txt"
    stray.write_text("x")
    assert cli.main(["train-models", "--output-dir", str(tmp_path),
                     "--dataset", str(stray)]) == 1
    err = capsys.readouterr().err
    assert "--dataset" in err and "not a directory" in err

    assert cli.main(["train-models", "--output-dir", str(tmp_path)]) == 1
    assert "--dataset is required" in capsys.readouterr().err


def test_bad_epsilon_list_is_usage_error(tmp_path, artifact_dir, capsys):
    assert cli.main(["train-attack-net", "--output-dir", str(tmp_path),
                     "--dataset", os.path.join(artifact_dir, "dev"),
                     "--artifacts", artifact_dir,
                     "--epsilons", "4,x"]) == 1
    assert "--epsilons" in capsys.readouterr().err


def test_roster_spec_error_names_the_submission(tmp_path, artifact_dir,
                                                round_dataset, capsys):
    config = _write_config(tmp_path / "cfg.json", {
        "submissions": {"attacks": {"bad": "fgsm:no_such_model"},
                        "defenses": {"d": "direct:cnn_a"}}})
    assert cli.main(["run-round", "--config", config,
                     "--output-dir", str(tmp_path / "out"),
                     "--dataset", round_dataset,
                     "--artifacts", artifact_dir]) == 1
    assert "submissions.attacks.bad" in capsys.readouterr().err


def test_roster_must_have_both_sides(tmp_path, artifact_dir, round_dataset,
                                     capsys):
    config = _write_config(tmp_path / "cfg.json", {
        "submissions": {"attacks": {"a": "noop"}, "defenses": {}}})
    assert cli.main(["run-round", "--config", config,
                     "--output-dir", str(tmp_path / "out"),
                     "--dataset", round_dataset,
                     "--artifacts", artifact_dir]) == 1
    assert "at least one attack" in capsys.readouterr().err

    assert cli.main(["run-round", "--output-dir", str(tmp_path / "out"),
                     "--dataset", round_dataset,
                     "--artifacts", artifact_dir]) == 1
    assert "submissions" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# round -> score -> report flow

@pytest.fixture(scope="module")
def finished_round(tmp_path_factory, artifact_dir, round_dataset):
    out = tmp_path_factory.mktemp("round_out")
    config = _write_config(out / "round.json",
                           {"submissions": ROSTER, "budget": 60.0})
    rc = cli.main(["run-round", "--config", str(config),
                   "--output-dir", str(out / "r"),
                   "--dataset", round_dataset,
                   "--artifacts", artifact_dir, "--seed", "3"])
    assert rc == 0
    return str(out / "r")


def test_run_round_writes_outcomes_and_scoreboard(finished_round):
    assert os.path.exists(os.path.join(finished_round, "outcomes.csv"))
    assert os.path.exists(os.path.join(finished_round, "scoreboard.csv"))
    assert os.path.exists(os.path.join(finished_round, "timings.csv"))
    board = open(os.path.join(finished_round, "scoreboard.csv")).read()
    for sub_id in ("a_fgsm", "a_noop", "d_bit", "d_direct"):
        assert sub_id in board


def test_run_round_reruns_byte_identical(tmp_path, artifact_dir,
                                         round_dataset, finished_round):
    config = _write_config(tmp_path / "round.json",
                           {"submissions": ROSTER, "budget": 60.0})
    rc = cli.main(["run-round", "--config", str(config),
                   "--output-dir", str(tmp_path / "again"),
                   "--dataset", round_dataset,
                   "--artifacts", artifact_dir, "--seed", "3"])
    assert rc == 0
    for name in ("outcomes.csv", "scoreboard.csv"):
        assert open(os.path.join(finished_round, name), "rb").read() == \
            open(str(tmp_path / "again" / name), "rb").read()


def test_score_reproduces_round_scoreboard(tmp_path, finished_round, capsys):
    rc = cli.main(["score",
                   "--outcomes", os.path.join(finished_round, "outcomes.csv"),
                   "--output-dir", str(tmp_path)])
    assert rc == 0
    assert open(os.path.join(finished_round, "scoreboard.csv"), "rb").read() \
        == open(str(tmp_path / "scoreboard.csv"), "rb").read()


def test_report_ranks_by_normalized(tmp_path, finished_round):
    rc = cli.main(["report",
                   "--outcomes", os.path.join(finished_round, "outcomes.csv"),
                   "--output-dir", str(tmp_path)])
    assert rc == 0
    path = tmp_path / "report_defense.csv"
    lines = path.read_text().splitlines()
    assert lines[0] == "rank,id,normalized"
    ranks, norms = [], []
    for line in lines[1:]:
        rank, sub_id, norm = line.split(",")
        ranks.append(int(rank))
        norms.append(float(norm))
        assert sub_id in ("d_bit", "d_direct")
    assert ranks == list(range(1, len(ranks) + 1))
    assert norms == sorted(norms, reverse=True)
    attack_report = tmp_path / "report_nontargeted_attack.csv"
    assert attack_report.exists()


def test_score_missing_outcomes_is_usage_error(tmp_path, capsys):
    assert cli.main(["score", "--output-dir", str(tmp_path)]) == 1
    assert "--outcomes" in capsys.readouterr().err
    assert cli.main(["score", "--outcomes", str(tmp_path / "absent.csv"),
                     "--output-dir", str(tmp_path)]) == 1
    assert "does not exist" in capsys.readouterr().err


def test_malformed_outcomes_is_runtime_failure(tmp_path, capsys):
    bad = tmp_path / "outcomes.csv"
    bad.write_text("this,is,not,an,outcome\n")
    assert cli.main(["score", "--outcomes", str(bad),
                     "--output-dir", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_unscoreable_round_prints_diagnostics(tmp_path, capsys):
    m = arena.OutcomeMatrix(4)
    m.add_submission("atk", "nontargeted_attack")
    m.add_submission("dfn", "defense")
    m.add_batch(0, 8)
    m.add_image("i1", 0, 1)
    m.produced[("atk", "i1")] = True
    m.labels[("atk", "dfn", "i1")] = None   # defense never answered
    path = tmp_path / "outcomes.csv"
    m.write(str(path))
    assert cli.main(["score", "--outcomes", str(path),
                     "--output-dir", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "unscoreable" in err
    assert "diagnostics:" in err
    diag = json.loads(err.split("diagnostics:", 1)[1])
    assert diag["eligible_defenses"] == []
