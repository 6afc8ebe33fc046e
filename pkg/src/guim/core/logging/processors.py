"""Custom structlog processors for GUIM.

- ComponentProcessor: tags events with the package layer they come from
- FloatRounder: renders floats with a fixed number of significant digits
"""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from structlog.typing import EventDict, WrappedLogger

__all__ = ["ComponentProcessor", "FloatRounder"]


class ComponentProcessor:
    """Add the originating component (domain, networks, training, ...).

    The component is derived from the logger name; events that already
    carry a ``component`` key are left untouched.
    """

    DEFAULT_MAPPING: dict[str, str] = {
        ".domain.": "domain",
        ".networks.": "networks",
        ".objectives.": "objectives",
        ".training.": "training",
        ".evaluation.": "evaluation",
        ".services.": "services",
        ".core.": "core",
    }

    def __init__(self, mapping: dict[str, str] | None = None) -> None:
        self.mapping = mapping or self.DEFAULT_MAPPING

    def __call__(
        self,
        logger: WrappedLogger,
        method_name: str,
        event_dict: EventDict,
    ) -> EventDict:
        if "component" in event_dict:
            return event_dict
        name = str(event_dict.get("logger", ""))
        for pattern, component in self.mapping.items():
            if pattern in f".{name}.":
                event_dict["component"] = component
                break
        return event_dict


class FloatRounder:
    """Round float values to ``digits`` significant digits for display."""

    def __init__(self, digits: int = 6) -> None:
        self.digits = digits

    def __call__(
        self,
        logger: WrappedLogger,
        method_name: str,
        event_dict: EventDict,
    ) -> EventDict:
        for key, value in event_dict.items():
            if isinstance(value, float):
                event_dict[key] = float(f"{value:.{self.digits}g}")
        return event_dict
