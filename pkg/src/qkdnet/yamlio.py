"""YAML loading that remembers where each value came from.

Validation errors can then point at a line in the user's file.
"""
from __future__ import annotations

import yaml

from .errors import ConfigError


class LineMap(dict):
    """Maps a key path such as ``("channel", "mu")`` to a 1-based line."""

    def line(self, *path):
        while path:
            if path in self:
                return self[path]
            path = path[:-1]
        return self.get((), None)


def _walk(node, path, lines, line=None):
    lines[path] = line if line is not None else node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        # a mapping entry points at its key, not at the first line of its value
        for key, value in node.value:
            _walk(value, path + (key.value,), lines, key.start_mark.line + 1)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _walk(item, path + (i,), lines)


def load(text: str, source: str | None = None):
    """Parse ``text``; return ``(data, LineMap)``."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"YAML syntax error: {problem}", line, source) from None
    lines = LineMap()
    if node is not None:
        _walk(node, (), lines)
    return data, lines


def dump(data) -> str:
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None)
