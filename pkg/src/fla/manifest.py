"""Run manifests: the full configuration needed to replay a command.

Every CLI command writes its effective manifest next to its outputs;
replaying a command from its manifest reproduces the outputs byte for
byte (all randomness is seeded and recorded).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import __version__
from .errors import ParseError
from .modelio import dumps_canonical, write_atomic

MANIFEST_FORMAT_VERSION = 1


@dataclass(frozen=True)
class RunManifest:
    command: str
    inputs: dict
    outputs: dict
    config: dict
    tool_version: str = __version__

    def to_dict(self) -> dict:
        return {
            "format": "fla-manifest",
            "format_version": MANIFEST_FORMAT_VERSION,
            "tool_version": self.tool_version,
            "command": self.command,
            "inputs": dict(self.inputs),
            "outputs": dict(self.outputs),
            "config": dict(self.config),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunManifest":
        try:
            if doc.get("format") != "fla-manifest":
                raise ParseError("not a manifest file (missing format marker)")
            if int(doc["format_version"]) != MANIFEST_FORMAT_VERSION:
                raise ParseError(
                    f"unsupported manifest format version {doc['format_version']!r}"
                )
            return cls(
                command=str(doc["command"]),
                inputs=dict(doc["inputs"]),
                outputs=dict(doc["outputs"]),
                config=dict(doc["config"]),
                tool_version=str(doc.get("tool_version", "")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad manifest: {exc}") from exc

    def save(self, path: str) -> None:
        write_atomic(path, dumps_canonical(self.to_dict()))

    @classmethod
    def load(cls, path: str) -> "RunManifest":
        with open(path, encoding="utf-8") as handle:
            try:
                doc = json.load(handle)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad manifest JSON: {exc}") from exc
        return cls.from_dict(doc)
