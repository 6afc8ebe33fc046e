"""Tests for guim.services.cli module."""

from pathlib import Path

from typer.testing import CliRunner

from guim.services.cli import app, load_run_config

runner = CliRunner()


class TestCLIApp:
    """Test cases for the application object."""

    def test_help_lists_commands(self) -> None:
        """Test that --help shows every command."""
        result = runner.invoke(app, ["--help"])
        assert result.exit_code == 0
        for command in ("synth", "pretrain", "gradcheck", "params", "eval", "export", "sweep"):
            assert command in result.output

    def test_version(self) -> None:
        """Test the version command."""
        result = runner.invoke(app, ["version"])
        assert result.exit_code == 0
        assert "guim 0.1.0" in result.output


class TestParamsCommand:
    """Test cases for guim params."""

    def test_production_total(self) -> None:
        """Test the single-vector breakdown of the production preset."""
        result = runner.invoke(app, ["params", "--preset", "production"])
        assert result.exit_code == 0
        assert "Total: 706,432" in result.output

    def test_widened_baseline(self) -> None:
        """Test --set overrides of variant and number of vectors."""
        result = runner.invoke(
            app,
            [
                "params",
                "--preset",
                "production",
                "--set",
                "model.variant=gui_edi",
                "--set",
                "model.num_vectors=4",
            ],
        )
        assert result.exit_code == 0
        assert "Total: 10,296,832" in result.output

    def test_unknown_key_is_usage_error(self) -> None:
        """Test that a bad --set key exits with status 2."""
        result = runner.invoke(app, ["params", "--preset", "production", "--set", "model.colour=red"])
        assert result.exit_code == 2

    def test_missing_corpus(self, run_dir: Path) -> None:
        """Test that unresolved sizes without a corpus are a usage error."""
        result = runner.invoke(app, ["params", "--out", str(run_dir)])
        assert result.exit_code == 2


class TestLoadRunConfig:
    """Test cases for flag handling."""

    def test_out_relocates_paths(self, run_dir: Path) -> None:
        """Test that --out places corpus and checkpoint below it."""
        config = load_run_config(None, None, 9, None, run_dir, ["train.epochs=1"])
        assert config.paths.corpus == str(run_dir / "corpus")
        assert config.paths.checkpoint == str(run_dir / "checkpoint.guim")
        assert config.seed == 9
        assert config.train.seed == 9
        assert config.train.epochs == 1


class TestSynthCommand:
    """Test cases for guim synth."""

    def test_writes_corpus_and_statistics(self, run_dir: Path) -> None:
        """Test corpus files and the statistics table."""
        result = runner.invoke(
            app,
            [
                "synth",
                "--out",
                str(run_dir),
                "--set",
                "synth.num_users=20",
                "--set",
                "synth.num_items=30",
            ],
        )
        assert result.exit_code == 0
        assert "20 users" in result.output
        assert (run_dir / "corpus" / "catalog.jsonl").exists()
        assert (run_dir / "corpus" / "sequences.jsonl").exists()
        assert (run_dir / "corpus_stats.json").exists()

    def test_infeasible_config(self, run_dir: Path) -> None:
        """Test that an infeasible synthetic config is a usage error."""
        result = runner.invoke(
            app,
            ["synth", "--out", str(run_dir), "--set", "synth.num_clusters=64"],
        )
        assert result.exit_code == 2
