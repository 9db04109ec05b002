"""Fault injection for crash-safety tests.

Two environment variables arm a single fault: PARTITUR_FAULT_STAGE names
the stage, PARTITUR_FAULT_MODE picks "crash" (hard process exit mid-stage,
as if killed) or "corrupt" (the stage's output is garbled after writing,
which the following gate must catch). Production runs leave both unset.
"""

from __future__ import annotations

import os
from pathlib import Path

STAGE_VAR = "PARTITUR_FAULT_STAGE"
MODE_VAR = "PARTITUR_FAULT_MODE"

CRASH_EXIT_CODE = 23

_GARBAGE = b'{"kind": "corrupted", "payload": tru'


def armed_mode(stage: str) -> str | None:
    if os.environ.get(STAGE_VAR) != stage:
        return None
    mode = os.environ.get(MODE_VAR)
    return mode if mode in ("crash", "corrupt") else None


def hard_crash() -> None:
    # os._exit skips cleanup handlers, mimicking a kill mid-write.
    os._exit(CRASH_EXIT_CODE)


def corrupt_file(path: Path) -> None:
    Path(path).write_bytes(_GARBAGE)
