"""
End-to-end tests of the command-line pipeline.

synth -> pretrain -> eval -> export on a tiny configuration, plus resuming
and a slow sweep over the number of vectors.
"""

import json
from pathlib import Path

import pytest
from typer.testing import CliRunner

from guim.capabilities.evaluation.export import read_embeddings, read_results
from guim.capabilities.training.trainer import read_metrics_log
from guim.services.cli import app

runner = CliRunner()

TINY_CONFIG = """\
seed: 0
model:
  d: 8
  num_vectors: 2
  num_layers: 1
  num_heads: 2
  d_c: 8
  d_i: 8
  d_w: 4
  top_x: 20
  max_len: 16
train:
  batch_size: 8
  negatives: 3
  epochs: 2
  learning_rate: 0.01
  log_every: 1
  validation_ratio: 0.5
eval:
  m: 5
  cpp_hidden: [16, 8]
  cpp_epochs: 50
synth:
  num_users: 40
  num_items: 30
  num_categories: 8
  num_clusters: 4
  interests_per_user: [1, 2]
  seq_length_range: [4, 10]
  post_length_range: [1, 3]
  title_length_range: [1, 4]
  word_vocab_size: 64
  stop_words: 4
  window_days: [30, 7]
logging:
  level: WARNING
"""


@pytest.fixture
def tiny_run(run_dir: Path) -> list[str]:
    """Config and output flags shared by every command of one run."""
    config = run_dir / "guim.yaml"
    config.write_text(TINY_CONFIG)
    return ["--config", str(config), "--out", str(run_dir)]


def invoke(*args: str):
    result = runner.invoke(app, list(args))
    assert result.exit_code == 0, result.output
    return result


@pytest.mark.integration
class TestPipeline:
    """Test the full pre-training and evaluation workflow."""

    def test_synth_pretrain_eval_export(self, run_dir: Path, tiny_run: list[str]) -> None:
        """Test every artifact of a run."""
        invoke("synth", *tiny_run)
        stats = json.loads((run_dir / "corpus_stats.json").read_text())
        assert set(stats) == {"N", "b"}

        invoke("pretrain", *tiny_run)
        assert (run_dir / "checkpoint.guim").exists()
        steps = read_metrics_log(run_dir / "metrics.jsonl")
        # 20 training users, batches of 8: 8, 8, 4
        assert [m.step for m in steps] == list(range(6))

        invoke("eval", *tiny_run, "--protocol", "L")
        invoke("eval", *tiny_run, "--protocol", "N", "--m", "10")
        invoke("eval", *tiny_run, "--protocol", "CPP")
        records = read_results(run_dir / "results.json")
        assert [r.protocol for r in records] == ["CMP-L", "CMP-N", "CPP-dominant_cluster"]
        assert [r.m for r in records] == [5, 10, None]
        assert all(0.0 <= r.mean <= 1.0 for r in records)

        invoke("export", *tiny_run)
        user_ids, users = read_embeddings(run_dir / "user_embeddings.tsv")
        item_ids, items = read_embeddings(run_dir / "item_embeddings.tsv")
        assert len(user_ids) == 40
        assert users.shape == (40, 16)
        assert len(item_ids) == 30
        assert items.shape == (30, 8)

    def test_rerun_replaces_result(self, run_dir: Path, tiny_run: list[str]) -> None:
        """Test that evaluating the same run twice keeps one record."""
        invoke("synth", *tiny_run)
        invoke("pretrain", *tiny_run)
        invoke("eval", *tiny_run)
        invoke("eval", *tiny_run)
        assert len(read_results(run_dir / "results.json")) == 1

    def test_export_is_reproducible(self, run_dir: Path, tiny_run: list[str]) -> None:
        """Test that two exports of one checkpoint are byte-identical."""
        invoke("synth", *tiny_run)
        invoke("pretrain", *tiny_run)
        invoke("export", *tiny_run)
        first = (run_dir / "user_embeddings.tsv").read_bytes()
        invoke("export", *tiny_run)
        assert (run_dir / "user_embeddings.tsv").read_bytes() == first

    def test_resume_extends_training(self, run_dir: Path, tiny_run: list[str]) -> None:
        """Test that --resume continues with a larger epoch budget."""
        invoke("synth", *tiny_run)
        invoke("pretrain", *tiny_run, "--set", "train.epochs=1")
        invoke("pretrain", *tiny_run, "--resume", "--set", "train.epochs=2")
        steps = read_metrics_log(run_dir / "metrics.jsonl")
        assert [m.step for m in steps] == list(range(6))

    def test_eval_without_checkpoint(self, run_dir: Path, tiny_run: list[str]) -> None:
        """Test that a missing checkpoint is a usage error."""
        invoke("synth", *tiny_run)
        result = runner.invoke(app, ["eval", *tiny_run])
        assert result.exit_code == 2

    def test_params_reads_corpus(self, tiny_run: list[str]) -> None:
        """Test that unresolved sizes come from the generated corpus."""
        invoke("synth", *tiny_run)
        result = invoke("params", *tiny_run)
        assert "Total:" in result.output


@pytest.mark.integration
@pytest.mark.slow
class TestGradcheckCommand:
    """Test the gradient check command."""

    def test_passes(self) -> None:
        """Test that the default tiny model passes."""
        result = runner.invoke(app, ["gradcheck", "--set", "logging.level=WARNING"])
        assert result.exit_code == 0, result.output
        assert "PASSED" in result.output


@pytest.mark.integration
@pytest.mark.slow
class TestSweep:
    """Test the sweep over the number of vectors."""

    def test_records_per_point(self, run_dir: Path, tiny_run: list[str]) -> None:
        """Test one record per (variant, vectors) pair and the improvement table."""
        invoke("synth", *tiny_run)
        result = invoke("sweep", *tiny_run, "--vectors", "1,2", "--variants", "guim,gui_edi")
        records = read_results(run_dir / "results.json")
        points = sorted((r.variant, r.num_vectors) for r in records)
        assert points == [("gui_edi", 1), ("gui_edi", 2), ("guim", 1), ("guim", 2)]
        assert "Improvement" in result.output
        assert (run_dir / "sweep" / "guim_v2.guim").exists()

    def test_classification_protocol(self, run_dir: Path, tiny_run: list[str]) -> None:
        """Test that a CPP sweep writes classifier records instead of failing."""
        invoke("synth", *tiny_run)
        invoke("sweep", *tiny_run, "--vectors", "1", "--set", "eval.protocol=CPP")
        records = read_results(run_dir / "results.json")
        assert [(r.protocol, r.m, r.num_vectors) for r in records] == [
            ("CPP-dominant_cluster", None, 1)
        ]


TREND_CONFIG = """\
model:
  d: 16
  num_layers: 1
  num_heads: 2
  d_c: 8
  d_i: 8
  d_w: 8
  top_x: 200
  max_len: 40
train:
  batch_size: 32
  negatives: 15
  epochs: 8
  learning_rate: 0.005
  validation_ratio: 0.2
eval:
  m: 20
  protocol: L
synth:
  num_users: 600
  num_items: 200
  num_categories: 16
  num_clusters: 8
  interests_per_user: [2, 4]
  seq_length_range: [10, 30]
  post_length_range: [2, 6]
  word_vocab_size: 256
  stop_words: 8
  window_days: [60, 14]
logging:
  level: WARNING
"""


@pytest.mark.integration
@pytest.mark.slow
class TestVectorTrend:
    """Test the direction of recall as the number of vectors grows."""

    def test_more_vectors_do_not_hurt_recall(self, tmp_path: Path) -> None:
        """Test recall@20 with four vectors at least matching one vector on 2 of 3 seeds."""
        wins = 0
        for seed in (0, 1, 2):
            out = tmp_path / f"seed{seed}"
            out.mkdir()
            config = out / "guim.yaml"
            config.write_text(TREND_CONFIG)
            flags = ["--config", str(config), "--out", str(out), "--seed", str(seed)]
            invoke("synth", *flags)
            invoke("sweep", *flags, "--vectors", "1,4", "--variants", "guim")
            recall = {r.num_vectors: r.mean for r in read_results(out / "results.json")}
            wins += recall[4] >= recall[1]
        assert wins >= 2
