"""Deterministic file outputs.

Every file is written to ``<name>.partial`` first and renamed into
place only when the whole experiment has succeeded, so a crash never
leaves a directory that looks complete.  Failed partials are kept under
``<name>.quarantine`` for inspection.  Floats are formatted with
``repr`` so equal results are byte-identical across runs; no file
contains a timestamp.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

__all__ = ["OutputSet", "format_cell"]


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class OutputSet:
    directory: str
    _pending: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        os.makedirs(self.directory, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.directory, name)

    def write_text(self, name: str, text: str) -> None:
        with open(self.path(name) + ".partial", "w", encoding="utf-8",
                  newline="") as fh:
            fh.write(text)
        if name not in self._pending:
            self._pending.append(name)

    def write_bytes(self, name: str, payload: bytes) -> None:
        with open(self.path(name) + ".partial", "wb") as fh:
            fh.write(payload)
        if name not in self._pending:
            self._pending.append(name)

    def write_csv(self, name: str, header, rows) -> None:
        lines = [",".join(header)]
        lines += [",".join(format_cell(cell) for cell in row) for row in rows]
        self.write_text(name, "\n".join(lines) + "\n")

    def write_manifest(self, config, extra: dict | None = None) -> None:
        """Plain-text manifest naming every committed file.

        Listed last in ``_pending`` so it is renamed only after the files
        it describes.
        """
        from .. import __version__
        lines = ["schema: 1",
                 f"tool: fedgame {__version__}",
                 f"kind: {config.kind}",
                 f"seed: {config.seed}",
                 f"config_sha256: {config.sha256()}"]
        for key, value in (extra or {}).items():
            lines.append(f"{key}: {format_cell(value)}")
        lines.append("files:")
        lines += [f"  - {name}" for name in self._pending]
        lines.append("  - manifest.txt")
        self.write_text("manifest.txt", "\n".join(lines) + "\n")

    def commit(self) -> list[str]:
        for name in self._pending:
            os.replace(self.path(name) + ".partial", self.path(name))
        committed, self._pending = self._pending, []
        return committed

    def quarantine(self) -> None:
        for name in self._pending:
            partial = self.path(name) + ".partial"
            if os.path.exists(partial):
                os.replace(partial, self.path(name) + ".quarantine")
        self._pending = []
