import csv

import pytest

from harness.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, main
from harness.gradcheck import GradcheckResult
from synthscene.dataset import load_dataset
from utils.errors import NumericError


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv("G3DK_SEED", raising=False)


@pytest.fixture
def dataset(tmp_path, config_file):
    path = tmp_path / "train.jsonl"
    assert main(["gen", "--seed", "3", "--count", "3", "--out", str(path), "--config", str(config_file)]) == EXIT_OK
    return path


@pytest.fixture
def checkpoint(tmp_path, dataset, config_file):
    path = tmp_path / "model.ckpt"
    assert main(["train", "--config", str(config_file), "--data", str(dataset), "--out", str(path)]) == EXIT_OK
    return path


def _summary(text):
    return dict(part.split("=") for part in text.split())


def test_gen_is_reproducible(tmp_path, config_file, capsys):
    first, second = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    main(["gen", "--seed", "5", "--count", "4", "--out", str(first), "--config", str(config_file)])
    main(["gen", "--seed", "5", "--count", "4", "--out", str(second), "--config", str(config_file)])
    assert first.read_bytes() == second.read_bytes().replace(b"b.frames", b"a.frames")
    summary = _summary(capsys.readouterr().out.splitlines()[-1])
    assert int(summary["unique"]) + int(summary["multiple"]) == int(summary["episodes"]) == 4


def test_gen_zero_episodes(tmp_path, config_file):
    path = tmp_path / "empty.jsonl"
    assert main(["gen", "--count", "0", "--out", str(path), "--config", str(config_file)]) == EXIT_OK
    assert path.read_bytes() == b""


def test_gen_unwritable_path(tmp_path, config_file):
    blocker = tmp_path / "file"
    blocker.write_text("x", encoding="utf-8")
    out = blocker / "data.jsonl"
    assert main(["gen", "--count", "1", "--out", str(out), "--config", str(config_file)]) == EXIT_IO


def test_train_ablation_log(tmp_path, dataset, config_file, capsys):
    log = tmp_path / "no_sg.csv"
    code = main([
        "train", "--config", str(config_file), "--data", str(dataset),
        "--out", str(tmp_path / "m.ckpt"), "--log", str(log), "--ablate", "sg",
    ])
    assert code == EXIT_OK
    with log.open(encoding="utf-8") as handle:
        header = next(csv.reader(handle))
    assert header == ["step", "L_ground", "L_lang", "total"]
    assert "L_recon" not in capsys.readouterr().out


def test_eval_with_stub(tmp_path, dataset, config_file, capsys):
    out = tmp_path / "report.csv"
    code = main(["eval", "--stub", "oracle", "--data", str(dataset), "--config", str(config_file), "--out", str(out)])
    assert code == EXIT_OK
    printed = capsys.readouterr().out
    assert "acc@0.25" in printed and "correct=3" in printed
    assert out.exists()


def test_eval_checkpoint(dataset, checkpoint, config_file, capsys):
    code = main(["eval", "--checkpoint", str(checkpoint), "--data", str(dataset), "--config", str(config_file)])
    assert code == EXIT_OK
    assert "Overall" in capsys.readouterr().out


def test_eval_config_mismatch(tmp_path, dataset, checkpoint):
    # размеры по умолчанию не совпадают с микроконфигурацией чекпойнта
    assert main(["eval", "--checkpoint", str(checkpoint), "--data", str(dataset)]) == EXIT_CONFIG


def test_eval_requires_a_predictor(dataset):
    assert main(["eval", "--data", str(dataset)]) == EXIT_CONFIG


def test_missing_data(tmp_path, config_file):
    missing = tmp_path / "absent.jsonl"
    assert main(["eval", "--stub", "random", "--data", str(missing), "--config", str(config_file)]) == EXIT_IO


def test_bad_config_key(tmp_path, dataset):
    config = tmp_path / "bad.cfg"
    config.write_text("train.speed = 3\n", encoding="utf-8")
    code = main(["train", "--config", str(config), "--data", str(dataset), "--out", str(tmp_path / "m.ckpt")])
    assert code == EXIT_CONFIG


def test_numeric_failure_exit_code(monkeypatch, tmp_path, dataset, config_file):
    def exploding(*args, **kwargs):
        raise NumericError("Нечисловое значение потери L_ground", step=1, component="L_ground")

    monkeypatch.setattr("harness.cli.train", exploding)
    code = main(["train", "--config", str(config_file), "--data", str(dataset), "--out", str(tmp_path / "m.ckpt")])
    assert code == EXIT_NUMERIC


def test_gradcheck_exit_codes(monkeypatch, capsys):
    assert main(["gradcheck", "--scope", "op"]) == EXIT_OK
    assert "FAIL" not in capsys.readouterr().out
    monkeypatch.setattr(
        "harness.cli.run_gradcheck", lambda scope, seed: [GradcheckResult("op", "exp", 1.0, 1e-4)]
    )
    assert main(["gradcheck", "--scope", "op"]) == EXIT_NUMERIC


def test_bench_counts_only(tmp_path, capsys):
    out = tmp_path / "bench.csv"
    code = main(["bench", "--views", "1,4", "--patches", "16", "--dim", "16", "--no-time", "--out", str(out)])
    assert code == EXIT_OK
    with out.open(encoding="utf-8") as handle:
        rows = list(csv.DictReader(handle))
    assert float(rows[0]["ratio"]) == 1.0
    assert float(rows[1]["ratio"]) < 1.0
    assert rows[1]["divided_time"] == "nan"


def test_bench_latency_needs_data():
    assert main(["bench", "--latency"]) == EXIT_CONFIG


def test_dataset_written_by_gen_loads(dataset):
    assert len(load_dataset(dataset)) == 3
