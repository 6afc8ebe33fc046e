"""Tests for guim.core.logging.processors and context helpers."""

from guim.core.logging import (
    bind_context,
    clear_context,
    get_context,
    logging_context,
    unbind_context,
)
from guim.core.logging.processors import ComponentProcessor, FloatRounder


class TestComponentProcessor:
    """Test cases for component tagging."""

    def test_maps_layers(self) -> None:
        """Test that logger names map to their package layer."""
        processor = ComponentProcessor()
        cases = {
            "guim.domain.synthetic": "domain",
            "guim.capabilities.networks.model": "networks",
            "guim.capabilities.evaluation.cmp": "evaluation",
            "guim.services.cli": "services",
        }
        for name, component in cases.items():
            event = processor(None, "info", {"logger": name, "event": "x"})
            assert event["component"] == component

    def test_keeps_explicit_component(self) -> None:
        """Test that an explicit component is not overwritten."""
        event = ComponentProcessor()(None, "info", {"logger": "guim.domain.corpus", "component": "io"})
        assert event["component"] == "io"

    def test_unknown_logger(self) -> None:
        """Test that unrelated loggers get no component."""
        assert "component" not in ComponentProcessor()(None, "info", {"logger": "numpy"})


class TestFloatRounder:
    """Test cases for float rounding."""

    def test_rounds_significant_digits(self) -> None:
        """Test rounding to six significant digits."""
        event = FloatRounder(digits=6)(None, "info", {"loss": 0.123456789, "step": 3})
        assert event["loss"] == 0.123457
        assert event["step"] == 3


class TestContext:
    """Test cases for the logging context helpers."""

    def teardown_method(self) -> None:
        clear_context()

    def test_bind_and_unbind(self) -> None:
        """Test binding and removing single keys."""
        bind_context(seed=3, variant="guim")
        assert get_context() == {"seed": 3, "variant": "guim"}
        unbind_context("seed")
        assert get_context() == {"variant": "guim"}

    def test_context_manager_removes_only_its_keys(self) -> None:
        """Test that logging_context leaves outer keys in place."""
        bind_context(seed=1)
        with logging_context(protocol="L"):
            assert get_context() == {"seed": 1, "protocol": "L"}
        assert get_context() == {"seed": 1}
