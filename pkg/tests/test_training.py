import csv
import itertools

import numpy as np
import pytest

from diffkit import load_checkpoint
from grounder.model import Ablation, ModelConfig, ToyGrounder, ablation_by_name
from grounder.training import batch_indices, episode_losses, log_columns, lr_scales_for, train, write_log
from utils.errors import NumericError
from utils.schedule import warmup_cosine_lr


def test_log_columns():
    assert log_columns(Ablation()) == ["step", "L_ground", "L_recon", "L_lang", "total"]
    assert log_columns(ablation_by_name("sg")) == ["step", "L_ground", "L_lang", "total"]
    assert log_columns(ablation_by_name("base")) == ["step", "L_ground", "total"]


def test_training_is_deterministic(episodes, micro_run):
    a = train(episodes[:4], micro_run)
    b = train(episodes[:4], micro_run)
    assert a.log == b.log
    sa, sb = a.model.state_dict(), b.model.state_dict()
    assert all(np.array_equal(sa[k], sb[k]) for k in sa)


def test_thread_count_does_not_change_result(episodes, micro_run):
    single = train(episodes[:4], micro_run)
    threaded = train(episodes[:4], micro_run.override({"train.workers": 2}))
    assert single.log == threaded.log
    s1, s2 = single.model.state_dict(), threaded.model.state_dict()
    assert all(np.array_equal(s1[k], s2[k]) for k in s1)


def test_threaded_training_counts_every_recon_call(episodes, micro_run):
    run = micro_run.override({"train.workers": 4, "train.steps": 5, "train.batch_size": 4})
    result = train(episodes[:4], run)
    assert result.model.recon_calls == 5 * 4


def test_log_and_checkpoint_files(tmp_path, episodes, micro_run):
    log_path, ckpt_path = tmp_path / "train.csv", tmp_path / "model.ckpt"
    result = train(episodes[:2], micro_run, log_path=log_path, checkpoint_path=ckpt_path)
    with log_path.open(encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["step", "L_ground", "L_recon", "L_lang", "total"]
    assert [int(r[0]) for r in rows[1:]] == [1, 2, 3]
    assert float(rows[1][-1]) == result.log[0]["total"]

    state = load_checkpoint(ckpt_path)
    assert any(name.startswith("recon.") for name in state)
    infer = ToyGrounder.for_inference(ModelConfig.from_run(micro_run))
    infer.load_state_dict(state)


def test_ablation_without_structure_guidance(tmp_path, episodes, micro_run):
    log_path = tmp_path / "no_sg.csv"
    result = train(episodes[:2], micro_run, ablation=ablation_by_name("no-sg"), log_path=log_path)
    assert result.model.recon is None
    assert "L_recon" not in log_path.read_text(encoding="utf-8").splitlines()[0]
    assert all("L_recon" not in row for row in result.log)


def test_total_is_weighted_sum(episodes, micro_run):
    result = train(episodes[:2], micro_run)
    weights = micro_run.loss.weights
    for row in result.log:
        expected = weights.lambda_g * row["L_ground"] + weights.lambda_r * row["L_recon"] + weights.lambda_l * row["L_lang"]
        assert row["total"] == pytest.approx(expected, rel=1e-12)


def test_empty_training_set(micro_run):
    with pytest.raises(ValueError):
        train([], micro_run)


def test_nonfinite_loss_names_component(micro, micro_run):
    model = ToyGrounder(ModelConfig.from_run(micro_run))
    prepared = model.prepare(micro)
    model.category_head.weight.data[...] = np.nan
    with pytest.raises(NumericError) as info:
        episode_losses(model, prepared, micro_run, step=4)
    assert info.value.component == "L_lang"
    assert info.value.step == 4


def test_write_log_reports_io_errors(tmp_path, episodes, micro_run):
    result = train(episodes[:2], micro_run.override({"train.steps": 1}))
    with pytest.raises(OSError):
        write_log(tmp_path / "missing" / "train.csv", result)


def test_warmup_cosine_schedule():
    lrs = [warmup_cosine_lr(step, 100, 1e-3, 0.05) for step in range(1, 101)]
    assert lrs[0] == pytest.approx(2e-4)
    assert lrs[4] == pytest.approx(1e-3)
    assert lrs[-1] == pytest.approx(0.0, abs=1e-12)
    assert all(a >= b for a, b in zip(lrs[4:], lrs[5:]))
    assert warmup_cosine_lr(1, 10, 1e-3, 0.0) == pytest.approx(1e-3 * 0.5 * (1 + np.cos(np.pi * 0.1)))


def test_batches_cover_every_episode_per_pass():
    batches = batch_indices(5, 2, np.random.default_rng(0))
    drawn = list(itertools.chain.from_iterable(itertools.islice(batches, 5)))
    assert sorted(drawn[:5]) == [0, 1, 2, 3, 4]
    assert sorted(drawn[5:10]) == [0, 1, 2, 3, 4]


def test_encoder_learning_rate_scale(micro_run):
    model = ToyGrounder(ModelConfig.from_run(micro_run))
    scales = lr_scales_for(model, 0.1)
    names = [name for name, _ in model.named_parameters()]
    assert all((s == 0.1) == name.startswith("patch_embed.") for name, s in zip(names, scales))
