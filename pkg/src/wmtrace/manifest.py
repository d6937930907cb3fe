"""Run manifests: a sidecar JSON record for every CLI command invocation.

The manifest is written before any result file (status "running"), then
rewritten on success with the final output list (status "complete"). All
timing data lives under the single "wall_clock" key; stripping that one
key makes two runs of the same config byte-comparable.
"""

from __future__ import annotations

import time

from . import __version__
from .corpus import dump_json


def manifest_path_for(out_path: str) -> str:
    return f"{out_path}.manifest.json"


class RunManifest:
    def __init__(self, command: str, out_path: str, config_snapshot: dict, overrides) -> None:
        self.command = command
        self.path = manifest_path_for(out_path)
        self.config_snapshot = config_snapshot
        self.overrides = list(overrides)
        self.derived_seeds: dict[str, object] = {}
        self.outputs: list[str] = []
        self._started = time.time()

    def record_seed(self, name: str, value) -> None:
        if isinstance(value, list):
            self.derived_seeds[name] = [str(int(v)) for v in value]
        else:
            self.derived_seeds[name] = str(int(value))

    def add_output(self, path: str) -> None:
        if path not in self.outputs:
            self.outputs.append(path)

    def _obj(self, status: str, wall_clock: dict) -> dict:
        return {
            "version": 1,
            "tool": "wmtrace",
            "tool_version": __version__,
            "command": self.command,
            "status": status,
            "config": self.config_snapshot,
            "overrides": self.overrides,
            "derived_seeds": self.derived_seeds,
            "outputs": self.outputs,
            "wall_clock": wall_clock,
        }

    def begin(self) -> None:
        """Write the manifest before results exist, so a crash leaves a trace."""
        dump_json(self._obj("running", {"started_unix": self._started}), self.path)

    def finish(self) -> None:
        finished = time.time()
        wall_clock = {
            "started_unix": self._started,
            "finished_unix": finished,
            "elapsed_seconds": finished - self._started,
        }
        dump_json(self._obj("complete", wall_clock), self.path)
